use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{Datelike, NaiveDate};
use occtool_core::control_sim::{monthly_rollup, read_steps, simulate, write_steps, Controller, SimConfig, SimInputs, SimSummary};
use occtool_core::ingest::{parse_detection_log, parse_ground_truth, parse_identity_ground_truth, parse_weather};
use occtool_core::metrics::{evaluate, identity_metrics, write_per_video_csv, IdentityMetrics, DEFAULT_IDENTITY_IOU};
use occtool_core::occupancy_signal::{day_profiles, read_intervals, tile_annual_profile, write_intervals, Reducer};
use occtool_core::pipeline::{
    compare_runs, intervals_per_video, load_toml, run_pipeline, write_charts, write_comparison_csv, EvaluationInputs, MeasurementInputs, MetricsFile,
    PipelineName, PipelineSpec, RunInputs, RunManifest,
};
use occtool_core::refinement::{
    refine_series, with_detector_confidence, write_audit_log, HttpLlmClient, LlmClient, MockBehavior, MockLlm, MockServer, RefinementConfig,
};
use occtool_core::series::{datetime, read_series, write_series};
use occtool_core::tracking::{run_tracker, write_mot_tracks, TrackerConfig, TrackerKind};
use occtool_core::{Error, Result};

use crate::{AggregateArgs, Command, CompareArgs, EvalArgs, LlmArgs, RefineArgs, ReportArgs, RunArgs, ServeMockArgs, SimulateArgs, TrackArgs};

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Track(a) => track(a),
        Command::Refine(a) => refine(a),
        Command::Eval(a) => eval(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Report(a) => report(a),
        Command::ServeMock(a) => serve_mock(a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Runs `f` on the file at `path`, or on standard output.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)?;
            w.flush().map_err(|e| Error::io(p, e))
        }
        None => {
            let mut w = io::stdout().lock();
            f(&mut w)?;
            w.flush().map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// `VIDEO=PATH`, or a bare path whose file stem names the video.
fn video_path(arg: &str) -> Result<(String, PathBuf)> {
    if let Some((video, path)) = arg.split_once('=') {
        if video.is_empty() || path.is_empty() {
            return Err(Error::Config(format!("expected VIDEO=PATH, got {arg:?}")));
        }
        return Ok((video.to_string(), PathBuf::from(path)));
    }
    let path = PathBuf::from(arg);
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("cannot derive a video id from {arg:?}")))?;
    Ok((stem.to_string(), path))
}

fn track(a: TrackArgs) -> Result<()> {
    let kind: TrackerKind = a.tracker.parse()?;
    let cfg: TrackerConfig = match &a.tracker_config {
        Some(p) => load_toml(p)?,
        None => TrackerConfig::default(),
    };
    let obs = parse_detection_log(open(&a.detections)?, a.conf)?;
    let run = run_tracker(&obs, kind, &cfg)?;
    with_output(a.out.as_deref(), |w| write_series(w, &run.samples))?;
    if let Some(dir) = &a.tracks_out {
        mkdir(dir)?;
        for (video, frames) in &run.frames {
            let path = dir.join(format!("{video}.txt"));
            let mut w = create(&path)?;
            write_mot_tracks(&mut w, frames)?;
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

fn llm_client(llm: &LlmArgs) -> Result<Box<dyn LlmClient>> {
    match (&llm.mock, &llm.llm_url) {
        (Some(m), _) => Ok(Box::new(MockLlm::new(MockBehavior::from_arg(m)?))),
        (None, Some(url)) => Ok(Box::new(HttpLlmClient::new(url.clone(), Duration::from_secs_f64(llm.timeout)))),
        (None, None) => Err(Error::Config("no LLM endpoint: pass --llm-url, set OCCTOOL_LLM_URL, or use --mock".into())),
    }
}

fn refine(a: RefineArgs) -> Result<()> {
    let series = read_series(open(&a.series)?)?;
    let obs = parse_detection_log(open(&a.detections)?, a.conf)?;
    let input = with_detector_confidence(&series, &obs)?;
    if !(a.llm.timeout > 0.0) {
        return Err(Error::Config("--timeout must be positive".into()));
    }
    let cfg = RefinementConfig {
        margin: a.llm.margin,
        batch_size: a.llm.batch_size,
        mode: a.llm.mode.parse()?,
        endpoint: a.llm.llm_url.clone(),
        model: a.llm.model.clone(),
        timeout_secs: a.llm.timeout,
        retries: a.llm.retries,
        image_dir: a.llm.image_dir.clone(),
        ..RefinementConfig::default()
    };
    let client = llm_client(&a.llm)?;
    let out = refine_series(&input, client.as_ref(), &cfg)?;
    let accepted = out.audit.iter().filter(|r| r.accepted).count();
    eprintln!(
        "reviewed {} frames, accepted {accepted} corrections, {} without a usable answer",
        out.audit.len(),
        out.failed_calls()
    );
    with_output(a.out.as_deref(), |w| write_series(w, &out.samples))?;
    if let Some(p) = &a.audit {
        with_output(Some(p), |w| write_audit_log(w, &out.audit))?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let gt = parse_ground_truth(open(&a.gt)?)?;
    let pred = read_series(open(&a.pred)?)?;
    let mut e = evaluate(&gt, &pred)?;
    if !a.gt_ids.is_empty() {
        let tracks: BTreeMap<String, PathBuf> = a.pred_tracks.iter().map(|s| video_path(s)).collect::<Result<_>>()?;
        let mut total = IdentityMetrics::default();
        for arg in &a.gt_ids {
            let (video, path) = video_path(arg)?;
            let ids = parse_identity_ground_truth(open(&path)?)?;
            ids.check_counts(&video, &gt)?;
            let track_path = tracks
                .get(&video)
                .ok_or_else(|| Error::Config(format!("identity ground truth for {video} needs --pred-tracks for the same video")))?;
            let predicted = parse_identity_ground_truth(open(track_path)?)?.by_frame();
            let im = identity_metrics(&ids, &predicted, DEFAULT_IDENTITY_IOU);
            total.id_switches += im.id_switches;
            total.fragmentation += im.fragmentation;
            if let Some(r) = e.per_video.get_mut(&video) {
                *r = r.clone().with_identity(Some(im));
            }
        }
        e.global = e.global.with_identity(Some(total));
    }
    let mut text = serde_json::to_string_pretty(&MetricsFile::from(&e))?;
    text.push('\n');
    with_output(a.out.as_deref(), |w| w.write_all(text.as_bytes()).map_err(|e| Error::io("<metrics>", e)))?;
    if let Some(p) = &a.per_video {
        with_output(Some(p), |w| write_per_video_csv(w, &e.per_video))?;
    }
    Ok(())
}

fn aggregate(a: AggregateArgs) -> Result<()> {
    let reducer: Reducer = a.reducer.parse()?;
    let series = read_series(open(&a.pred)?)?;
    let mut intervals = intervals_per_video(&series, a.interval, reducer)?;
    if let Some(days) = a.tile_days {
        let profiles: Vec<Vec<u32>> = day_profiles(&intervals, a.interval)?.into_iter().map(|p| p.counts).collect();
        let start = match &a.start {
            Some(s) => NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::Config(format!("--start {s:?}: {e}")))?,
            None => {
                let first = intervals.first().ok_or_else(|| Error::Invalid("series is empty".into()))?;
                NaiveDate::from_ymd_opt(datetime(first.start as f64).year(), 1, 1).expect("valid date")
            }
        };
        intervals = tile_annual_profile(&profiles, start, days, a.interval)?;
    }
    with_output(a.out.as_deref(), |w| write_intervals(w, &intervals))
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let controller: Controller = a.controller.parse()?;
    let cfg = match &a.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    let occupancy = read_intervals(open(&a.occupancy)?)?;
    let ctrl = a.controller_occupancy.as_deref().map(|p| read_intervals(open(p)?)).transpose()?;
    let weather = parse_weather(open(&a.weather)?)?;
    let baseline = match &a.baseline_summary {
        Some(p) => {
            let s: SimSummary = serde_json::from_reader(open(p)?)?;
            Some(s.totals)
        }
        None => None,
    };
    let inputs = SimInputs { occupancy: &occupancy, controller_occupancy: ctrl.as_deref(), weather: &weather };
    let result = simulate(&inputs, &cfg, controller, false)?;
    mkdir(&a.out_dir)?;
    with_output(Some(&a.out_dir.join("steps.csv")), |w| write_steps(w, &result.steps))?;
    let summary = SimSummary::new(controller, &result.steps, baseline);
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    with_output(Some(&a.out_dir.join("summary.json")), |w| {
        w.write_all(text.as_bytes()).map_err(|e| Error::io("summary.json", e))
    })?;
    eprintln!(
        "{controller}: heating {:.1} kWh, cooling {:.1} kWh, mean PPD {:.2}% (satisfied {:.2}%)",
        summary.totals.heating_kwh,
        summary.totals.cooling_kwh,
        summary.totals.mean_ppd,
        100.0 - summary.totals.mean_ppd
    );
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let name: PipelineName = a.pipeline.parse()?;
    let spec: PipelineSpec = match &a.spec {
        Some(p) => load_toml(p)?,
        None => PipelineSpec::default(),
    };
    let mut spec = spec.retarget(name);
    if let Some(m) = a.mock {
        spec.mock = Some(m);
    }
    if let (Some(url), Some(r)) = (a.llm_url, spec.refinement.as_mut()) {
        r.endpoint = Some(url);
    }
    let evaluation = match a.gt {
        Some(gt) => Some(EvaluationInputs {
            ground_truth: gt,
            identity: a.gt_ids.iter().map(|s| video_path(s)).collect::<Result<_>>()?,
        }),
        None => None,
    };
    let inputs = RunInputs {
        measurement: MeasurementInputs { detections: a.detections },
        evaluation,
        weather: a.weather,
    };
    let outcome = run_pipeline(&spec, &inputs, &a.runs_dir, &a.id, None)?;
    if let Some(e) = &outcome.evaluation {
        let g = e.global.rounded();
        eprintln!("{}: MAE {} RMSE {} acc {} F1 {}", spec.name, g.mae, g.rmse, g.accuracy, g.f1);
    }
    println!("{}", outcome.dir.display());
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let dirs: Vec<PathBuf> = a.runs.iter().map(|id| a.runs_dir.join(id)).collect();
    let rows = compare_runs(&dirs)?;
    with_output(a.out.as_deref(), |w| write_comparison_csv(w, &rows))
}

fn report(a: ReportArgs) -> Result<()> {
    let dir = a.runs_dir.join(&a.run);
    let manifest = RunManifest::load(&dir.join("manifest.json"))?;
    let steps_path = dir.join("steps.csv");
    if !steps_path.is_file() {
        return Err(Error::Invalid(format!("run {} has no simulation steps", a.run)));
    }
    let steps = read_steps(open(&steps_path)?)?;
    let baseline_path = dir.join("baseline_steps.csv");
    let baseline = if baseline_path.is_file() { Some(read_steps(open(&baseline_path)?)?) } else { None };
    let name = manifest.pipeline.as_str();
    let mut named: Vec<(&str, &[_])> = Vec::new();
    if let Some(b) = &baseline {
        named.push(("baseline", b));
    }
    named.push((name, &steps));
    write_charts(&a.charts, &named)?;
    with_output(Some(&a.charts.join("monthly.csv")), |w| {
        let io_err = |e| Error::io("monthly.csv", e);
        writeln!(w, "series,year,month,e_heat_kwh,e_cool_kwh,mean_ppd,steps").map_err(io_err)?;
        for (series, s) in &named {
            for r in monthly_rollup(s) {
                writeln!(w, "{series},{},{},{},{},{},{}", r.year, r.month, r.e_heat, r.e_cool, r.mean_ppd, r.steps).map_err(io_err)?;
            }
        }
        Ok(())
    })
}

fn serve_mock(a: ServeMockArgs) -> Result<()> {
    let server = MockServer::start(&a.addr, MockBehavior::from_arg(&a.mock)?)?;
    eprintln!("mock LLM endpoint listening on {}", server.url());
    println!("{}", server.url());
    io::stdout().flush().map_err(|e| Error::io("<stdout>", e))?;
    server.wait();
    Ok(())
}
