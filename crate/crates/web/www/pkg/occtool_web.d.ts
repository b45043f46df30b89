/* tslint:disable */
/* eslint-disable */

/**
 * PMV and PPD over zone temperatures from 15 to 32 °C.
 */
export function ppd_curve(month: number, met: number, rh: number): string;

/**
 * Reviews one frame given its neighbours and fuses a hypothetical LLM
 * answer with the detector estimate.
 */
export function review_frame(count: number, confidence: number, prev: number, next: number, llm_count: number, llm_confidence: number, margin: number): string;

/**
 * One 5-minute-step day in the given month: `people` present from
 * `arrive` to `leave` (hours), outdoor temperature `mean ± swing` with
 * the low at 05:00. Runs the fixed schedule and the MPC side by side.
 */
export function simulate_day(month: number, t_out_mean: number, swing: number, arrive: number, leave: number, people: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly ppd_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly review_frame: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly simulate_day: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
