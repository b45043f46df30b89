import init, { review_frame, simulate_day, ppd_curve } from "./pkg/occtool_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function call(out, f) {
  try {
    return JSON.parse(f());
  } catch (e) {
    out.textContent = String(e);
    out.className = "out err";
    return null;
  }
}

function plot(canvas, series, yLabel) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.ys);
  let lo = Math.min(...all), hi = Math.max(...all);
  if (hi - lo < 1e-9) { lo -= 1; hi += 1; }
  const n = Math.max(...series.map((s) => s.ys.length));
  const x = (i) => pad + (i / (n - 1)) * (w - 2 * pad);
  const y = (v) => h - pad - ((v - lo) / (hi - lo)) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(hi.toFixed(1), 2, pad + 4);
  ctx.fillText(lo.toFixed(1), 2, h - pad + 4);
  ctx.fillText(yLabel, pad, pad - 8);
  series.forEach((s, k) => {
    ctx.strokeStyle = s.color;
    ctx.setLineDash(s.dash || []);
    ctx.beginPath();
    s.ys.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = s.color;
    ctx.fillText(s.name, w - pad - 150, pad + 14 + 13 * k);
  });
  return { x, y, lo, hi };
}

function updateFusion() {
  $("f-conf-v").textContent = num("f-conf").toFixed(2);
  $("f-llm-conf-v").textContent = num("f-llm-conf").toFixed(2);
  const out = $("f-out");
  const r = call(out, () =>
    review_frame(num("f-count"), num("f-conf"), num("f-prev"), num("f-next"), num("f-llm-count"), num("f-llm-conf"), num("f-margin")));
  if (!r) return;
  out.className = "out";
  out.textContent = r.reason === null
    ? `not reviewed; kept count ${r.count} at ${r.confidence.toFixed(2)}`
    : `reviewed (${r.reason}); LLM needs confidence >= ${r.threshold.toFixed(2)}\n` +
      `${r.accepted ? "accepted" : "kept detector"}: count ${r.count} at ${r.confidence.toFixed(2)}`;
}

function runDay() {
  const out = $("d-out");
  const r = call(out, () =>
    simulate_day(num("d-month"), num("d-mean"), num("d-swing"), num("d-arrive"), num("d-leave"), num("d-people")));
  if (!r) return;
  const { y } = plot($("d-canvas"), [
    { name: "outdoor", ys: r.t_out, color: "#888", dash: [4, 3] },
    { name: "zone, fixed schedule", ys: r.baseline.t_z, color: "#1f77b4" },
    { name: "zone, MPC", ys: r.mpc.t_z, color: "#d62728" },
    { name: "MPC heating setpoint", ys: r.mpc.t_htg, color: "#ff9896", dash: [2, 2] },
  ], "°C");
  const ctx = $("d-canvas").getContext("2d");
  ctx.fillStyle = "rgba(44,160,44,0.12)";
  const w = $("d-canvas").width;
  r.n.forEach((n, i) => {
    if (n > 0) ctx.fillRect(40 + (i / (r.n.length - 1)) * (w - 80), 40, (w - 80) / r.n.length + 0.5, y(Math.min(...r.t_out)) - 40);
  });
  const t = (s) => `${s.total_kwh.toFixed(2)} kWh (heat ${s.heating_kwh.toFixed(2)}, cool ${s.cooling_kwh.toFixed(2)}), mean PPD ${s.mean_ppd.toFixed(1)}%`;
  out.className = "out";
  out.textContent = `fixed schedule: ${t(r.baseline.totals)}\nMPC:            ${t(r.mpc.totals)}`;
}

function updateComfort() {
  const out = $("c-out");
  const rows = call(out, () => ppd_curve(num("c-month"), num("c-met"), num("c-rh")));
  if (!rows) return;
  plot($("c-canvas"), [{ name: "PPD %", ys: rows.map((r) => r.ppd), color: "#9467bd" }], "PPD % over 15 to 32 °C");
  const best = rows.reduce((a, b) => (b.ppd < a.ppd ? b : a));
  out.className = "out";
  out.textContent = `lowest PPD ${best.ppd.toFixed(1)}% at ${best.t.toFixed(2)} °C (PMV ${best.pmv.toFixed(2)})`;
}

await init();
for (const id of ["f-count", "f-conf", "f-prev", "f-next", "f-llm-count", "f-llm-conf", "f-margin"]) $(id).addEventListener("input", updateFusion);
for (const id of ["c-month", "c-met", "c-rh"]) $(id).addEventListener("input", updateComfort);
$("d-run").addEventListener("click", runDay);
updateFusion();
runDay();
updateComfort();
