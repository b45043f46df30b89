//! Named, reproducible experiment runs.
//!
//! A run reads a detection log, produces an occupancy series with one of
//! the measurement pipelines, and optionally scores it against ground truth
//! and drives a year-long control simulation. Everything lands in
//! `<runs>/<id>/` next to a manifest holding input digests and the full
//! configuration.
//!
//! Measurement stages only ever see [`MeasurementInputs`], which has no
//! ground-truth field; ground truth is opened by the evaluation stage only.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control_sim::{monthly_rollup, simulate, write_steps, Controller, EnergyTotals, SimConfig, SimInputs, SimSummary};
use crate::error::{Error, Result};
use crate::ingest::{parse_detection_log, parse_ground_truth, parse_identity_ground_truth, parse_weather, FrameObservation};
use crate::metrics::{evaluate, identity_metrics, write_per_video_csv, Evaluation, IdentityMetrics, MetricsReport, DEFAULT_IDENTITY_IOU};
use crate::occupancy_signal::{aggregate, day_profiles, tile_annual_profile, write_intervals, IntervalSample, Reducer};
use crate::refinement::{refine_series, write_audit_log, AuditRecord, LlmClient, MockBehavior, MockLlm, RefinementConfig, RefinementMode};
use crate::report::{render_monthly_charts, ChartSeries};
use crate::series::{datetime, format_timestamp, write_series, OccupancySample};
use crate::tracking::{predicted_tracks, run_tracker, write_mot_tracks, FrameOutput, TrackerConfig, TrackerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineName {
    DetectorOnly,
    Sort,
    Deepsort,
    Bytetrack,
    LlmText,
    LlmVision,
}

impl PipelineName {
    pub const ALL: [PipelineName; 6] = [
        PipelineName::DetectorOnly,
        PipelineName::Sort,
        PipelineName::Deepsort,
        PipelineName::Bytetrack,
        PipelineName::LlmText,
        PipelineName::LlmVision,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PipelineName::DetectorOnly => "detector_only",
            PipelineName::Sort => "sort",
            PipelineName::Deepsort => "deepsort",
            PipelineName::Bytetrack => "bytetrack",
            PipelineName::LlmText => "llm_text",
            PipelineName::LlmVision => "llm_vision",
        }
    }

    pub fn tracker(&self) -> TrackerKind {
        match self {
            PipelineName::Sort => TrackerKind::Sort,
            PipelineName::Deepsort => TrackerKind::DeepSort,
            PipelineName::Bytetrack => TrackerKind::ByteTrack,
            _ => TrackerKind::DetectionOnly,
        }
    }

    pub fn refinement_mode(&self) -> Option<RefinementMode> {
        match self {
            PipelineName::LlmText => Some(RefinementMode::TextOnly),
            PipelineName::LlmVision => Some(RefinementMode::Vision),
            _ => None,
        }
    }
}

impl fmt::Display for PipelineName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PipelineName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown pipeline {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSpec {
    pub name: PipelineName,
    pub conf_threshold: f64,
    pub tracker: TrackerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<RefinementConfig>,
    /// Mock endpoint behaviour (`echo`, `fail`, `fixed:c:s` or a script
    /// path) used instead of `refinement.endpoint`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<String>,
    pub identity_metrics: bool,
    pub interval_secs: u32,
    pub reducer: Reducer,
    pub sim: SimConfig,
    /// First simulated day; January 1 of the first observed year if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_start: Option<NaiveDate>,
    pub sim_days: u32,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        PipelineSpec::new(PipelineName::DetectorOnly)
    }
}

impl PipelineSpec {
    /// Switches to another pipeline, keeping the other settings. A
    /// refinement config is added or adjusted to match the pipeline's mode.
    pub fn retarget(mut self, name: PipelineName) -> Self {
        self.name = name;
        if let Some(mode) = name.refinement_mode() {
            let mut r = self.refinement.take().unwrap_or_default();
            r.mode = mode;
            self.refinement = Some(r);
        }
        self
    }

    pub fn new(name: PipelineName) -> Self {
        PipelineSpec {
            name,
            conf_threshold: crate::ingest::DEFAULT_CONF_THRESHOLD,
            tracker: TrackerConfig::default(),
            refinement: name.refinement_mode().map(|mode| RefinementConfig { mode, ..RefinementConfig::default() }),
            mock: None,
            identity_metrics: true,
            interval_secs: crate::occupancy_signal::DEFAULT_INTERVAL_SECS,
            reducer: Reducer::Max,
            sim: SimConfig::default(),
            sim_start: None,
            sim_days: 365,
        }
    }

    pub fn with_mock(mut self, mock: impl Into<String>) -> Self {
        self.mock = Some(mock.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(Error::Config(format!("confidence threshold {} outside [0,1]", self.conf_threshold)));
        }
        self.tracker.validate()?;
        self.sim.validate()?;
        if let Some(mode) = self.name.refinement_mode() {
            let r = self
                .refinement
                .as_ref()
                .ok_or_else(|| Error::Config(format!("pipeline {} needs a refinement config", self.name)))?;
            r.validate()?;
            if r.mode != mode {
                return Err(Error::Config(format!("pipeline {} needs refinement mode {mode}", self.name)));
            }
            if r.endpoint.is_none() && self.mock.is_none() {
                return Err(Error::Config(format!("pipeline {} needs an LLM endpoint or a mock", self.name)));
            }
        }
        if self.sim_days == 0 {
            return Err(Error::Config("sim_days must be at least 1".into()));
        }
        Ok(())
    }
}

/// Inputs visible to the measurement stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementInputs {
    pub detections: PathBuf,
}

/// Ground truth, read by the evaluation stage only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationInputs {
    pub ground_truth: PathBuf,
    /// Per-video identity ground truth (MOT format).
    pub identity: Vec<(String, PathBuf)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunInputs {
    pub measurement: MeasurementInputs,
    pub evaluation: Option<EvaluationInputs>,
    /// Outdoor temperature CSV; the control simulation is skipped without it.
    pub weather: Option<PathBuf>,
}

/// Output of the measurement stages.
#[derive(Debug, Clone, Default)]
pub struct Measurement {
    pub observations: Vec<FrameObservation>,
    pub series: Vec<OccupancySample>,
    pub audit: Vec<AuditRecord>,
    /// Per-video tracker outputs; empty for detector-based pipelines.
    pub tracks: Vec<(String, Vec<FrameOutput>)>,
}

/// Builds the LLM client a spec asks for.
pub fn llm_client(spec: &PipelineSpec) -> Result<Box<dyn LlmClient>> {
    if let Some(mock) = &spec.mock {
        return Ok(Box::new(MockLlm::new(MockBehavior::from_arg(mock)?)));
    }
    let endpoint = spec.refinement.as_ref().and_then(|r| r.endpoint.clone());
    match endpoint {
        #[cfg(feature = "http")]
        Some(url) => {
            let timeout = spec.refinement.as_ref().map_or(30.0, |r| r.timeout_secs);
            Ok(Box::new(crate::refinement::HttpLlmClient::new(url, std::time::Duration::from_secs_f64(timeout))))
        }
        #[cfg(not(feature = "http"))]
        Some(_) => Err(Error::Config("built without HTTP support; use a mock".into())),
        None => Err(Error::Config("no LLM endpoint or mock configured".into())),
    }
}

/// Runs detection parsing, tracking and refinement.
pub fn measure(spec: &PipelineSpec, inputs: &MeasurementInputs, client: Option<&dyn LlmClient>) -> Result<Measurement> {
    let file = File::open(&inputs.detections).map_err(|e| Error::io(&inputs.detections, e))?;
    let observations = parse_detection_log(BufReader::new(file), spec.conf_threshold)?;
    let run = run_tracker(&observations, spec.name.tracker(), &spec.tracker)?;
    let mut m = Measurement {
        tracks: if spec.name.tracker() == TrackerKind::DetectionOnly { Vec::new() } else { run.frames },
        series: run.samples,
        observations,
        audit: Vec::new(),
    };
    if let Some(cfg) = spec.refinement.as_ref().filter(|_| spec.name.refinement_mode().is_some()) {
        let owned;
        let client = match client {
            Some(c) => c,
            None => {
                owned = llm_client(spec)?;
                owned.as_ref()
            }
        };
        let out = refine_series(&m.series, client, cfg)?;
        m.series = out.samples;
        m.audit = out.audit;
    }
    Ok(m)
}

/// Scores a series. Identity metrics are summed over videos that have both
/// identity ground truth and tracker output.
pub fn evaluate_run(spec: &PipelineSpec, inputs: &EvaluationInputs, m: &Measurement) -> Result<Evaluation> {
    let file = File::open(&inputs.ground_truth).map_err(|e| Error::io(&inputs.ground_truth, e))?;
    let gt = parse_ground_truth(BufReader::new(file))?;
    let mut eval = evaluate(&gt, &m.series)?;
    if !spec.identity_metrics || m.tracks.is_empty() || inputs.identity.is_empty() {
        return Ok(eval);
    }
    let mut total = IdentityMetrics::default();
    for (video, path) in &inputs.identity {
        let ids = parse_identity_ground_truth(File::open(path).map_err(|e| Error::io(path, e))?)?;
        ids.check_counts(video, &gt)?;
        let frames = m
            .tracks
            .iter()
            .find(|(v, _)| v == video)
            .map(|(_, f)| predicted_tracks(f))
            .ok_or_else(|| Error::Invalid(format!("identity ground truth for unknown video {video}")))?;
        let im = identity_metrics(&ids, &frames, DEFAULT_IDENTITY_IOU);
        total.id_switches += im.id_switches;
        total.fragmentation += im.fragmentation;
        if let Some(r) = eval.per_video.get_mut(video) {
            *r = r.clone().with_identity(Some(im));
        }
    }
    eval.global = eval.global.with_identity(Some(total));
    Ok(eval)
}

/// Aggregates a series into control intervals per video, so time between
/// recordings is not filled with empty intervals.
pub fn intervals_per_video(series: &[OccupancySample], interval_secs: u32, reducer: Reducer) -> Result<Vec<IntervalSample>> {
    let mut out = Vec::new();
    for video in series.chunk_by(|a, b| a.video_id == b.video_id) {
        out.extend(aggregate(video, interval_secs, reducer)?);
    }
    out.sort_by_key(|iv| iv.start);
    for (k, iv) in out.iter_mut().enumerate() {
        iv.k = k as u64;
    }
    Ok(out)
}

/// Year-long simulation outputs of one run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub occupancy: Vec<IntervalSample>,
    pub baseline: Vec<crate::control_sim::ControlStep>,
    pub mpc: Vec<crate::control_sim::ControlStep>,
    pub summary: SimSummary,
}

pub fn simulate_run(spec: &PipelineSpec, series: &[OccupancySample], weather_path: &Path) -> Result<Simulation> {
    let weather = parse_weather(File::open(weather_path).map_err(|e| Error::io(weather_path, e))?)?;
    let intervals = intervals_per_video(series, spec.interval_secs, spec.reducer)?;
    let profiles: Vec<Vec<u32>> = day_profiles(&intervals, spec.interval_secs)?.into_iter().map(|p| p.counts).collect();
    let start = match spec.sim_start {
        Some(d) => d,
        None => {
            let first = intervals.first().ok_or_else(|| Error::Invalid("series is empty".into()))?;
            let year = datetime(first.start as f64).year();
            NaiveDate::from_ymd_opt(year, 1, 1).expect("valid date")
        }
    };
    let occupancy = tile_annual_profile(&profiles, start, spec.sim_days, spec.interval_secs)?;
    let mut sim = spec.sim.clone();
    sim.control.dt_secs = spec.interval_secs;
    let inputs = SimInputs { occupancy: &occupancy, controller_occupancy: None, weather: &weather };
    let baseline = simulate(&inputs, &sim, Controller::Baseline, false)?.steps;
    let mpc = simulate(&inputs, &sim, Controller::Mpc, false)?.steps;
    let summary = SimSummary::new(Controller::Mpc, &mpc, Some(EnergyTotals::from_steps(&baseline)));
    Ok(Simulation { occupancy, baseline, mpc, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub pipeline: PipelineName,
    pub tool_version: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub inputs: Vec<InputDigest>,
    pub config: PipelineSpec,
    pub artifacts: Vec<String>,
    pub started_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn digest(&self, role: &str) -> Option<&str> {
        self.inputs.iter().find(|d| d.role == role).map(|d| d.sha256.as_str())
    }

    /// Inputs recorded in this manifest. Fails if any file changed since.
    pub fn run_inputs(&self) -> Result<RunInputs> {
        for d in &self.inputs {
            let now = sha256_file(&d.path)?;
            if now != d.sha256 {
                return Err(Error::Invalid(format!("{} changed since the run ({} vs {})", d.path.display(), now, d.sha256)));
            }
        }
        let path = |role: &str| self.inputs.iter().find(|d| d.role == role).map(|d| d.path.clone());
        let detections = path("detections").ok_or_else(|| Error::Invalid("manifest has no detections input".into()))?;
        let evaluation = path("ground_truth").map(|gt| EvaluationInputs {
            ground_truth: gt,
            identity: self
                .inputs
                .iter()
                .filter_map(|d| d.role.strip_prefix("identity:").map(|v| (v.to_string(), d.path.clone())))
                .collect(),
        });
        Ok(RunInputs { measurement: MeasurementInputs { detections }, evaluation, weather: path("weather") })
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_file(&dir.join("manifest.json"), text.as_bytes())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn now_iso() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64().floor());
    format_timestamp(secs)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn input_digests(spec: &PipelineSpec, inputs: &RunInputs) -> Result<Vec<InputDigest>> {
    let mut roles: Vec<(String, PathBuf)> = vec![("detections".into(), inputs.measurement.detections.clone())];
    if let Some(ev) = &inputs.evaluation {
        roles.push(("ground_truth".into(), ev.ground_truth.clone()));
        roles.extend(ev.identity.iter().map(|(v, p)| (format!("identity:{v}"), p.clone())));
    }
    if let Some(w) = &inputs.weather {
        roles.push(("weather".into(), w.clone()));
    }
    if let Some(m) = spec.mock.as_deref().filter(|m| Path::new(m).is_file()) {
        roles.push(("mock_script".into(), PathBuf::from(m)));
    }
    roles
        .into_iter()
        .map(|(role, path)| Ok(InputDigest { sha256: sha256_file(&path)?, role, path }))
        .collect()
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub measurement: Measurement,
    pub evaluation: Option<Evaluation>,
    pub simulation: Option<Simulation>,
}

/// Runs one pipeline into `<runs_root>/<run_id>`. A failing stage leaves a
/// manifest with status `failed` and the error message.
pub fn run_pipeline(spec: &PipelineSpec, inputs: &RunInputs, runs_root: &Path, run_id: &str, client: Option<&dyn LlmClient>) -> Result<RunOutcome> {
    if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == "." || run_id == ".." {
        return Err(Error::Config(format!("invalid run id {run_id:?}")));
    }
    spec.validate()?;
    let dir = runs_root.join(run_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let clock = Instant::now();
    let mut manifest = RunManifest {
        run_id: run_id.to_string(),
        pipeline: spec.name,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        status: RunStatus::Running,
        error: None,
        inputs: input_digests(spec, inputs)?,
        config: spec.clone(),
        artifacts: Vec::new(),
        started_at: now_iso(),
        finished_at: None,
        wall_ms: None,
    };
    manifest.write(&dir)?;

    let result = run_stages(spec, inputs, &dir, client);
    manifest.finished_at = Some(now_iso());
    manifest.wall_ms = Some(clock.elapsed().as_millis() as u64);
    match result {
        Ok((artifacts, measurement, evaluation, simulation)) => {
            manifest.status = RunStatus::Ok;
            manifest.artifacts = artifacts;
            manifest.write(&dir)?;
            Ok(RunOutcome { dir, manifest, measurement, evaluation, simulation })
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            manifest.write(&dir)?;
            Err(e)
        }
    }
}

type StageOutput = (Vec<String>, Measurement, Option<Evaluation>, Option<Simulation>);

fn run_stages(spec: &PipelineSpec, inputs: &RunInputs, dir: &Path, client: Option<&dyn LlmClient>) -> Result<StageOutput> {
    let mut artifacts = Vec::new();
    let measurement = measure(spec, &inputs.measurement, client)?;

    let mut w = create(&dir.join("series.csv"))?;
    write_series(&mut w, &measurement.series)?;
    finish(w, dir, "series.csv", &mut artifacts)?;

    let mut w = create(&dir.join("refine_audit.jsonl"))?;
    write_audit_log(&mut w, &measurement.audit)?;
    finish(w, dir, "refine_audit.jsonl", &mut artifacts)?;

    if !measurement.tracks.is_empty() {
        fs::create_dir_all(dir.join("tracks")).map_err(|e| Error::io(dir.join("tracks"), e))?;
        for (video, frames) in &measurement.tracks {
            let name = format!("tracks/{}.txt", sanitize(video));
            let mut w = create(&dir.join(&name))?;
            write_mot_tracks(&mut w, frames)?;
            finish(w, dir, &name, &mut artifacts)?;
        }
    }

    let evaluation = match &inputs.evaluation {
        Some(ev) => {
            let e = evaluate_run(spec, ev, &measurement)?;
            let mut text = serde_json::to_string_pretty(&MetricsFile::from(&e))?;
            text.push('\n');
            write_file(&dir.join("metrics.json"), text.as_bytes())?;
            artifacts.push("metrics.json".into());
            let mut w = create(&dir.join("metrics_per_video.csv"))?;
            write_per_video_csv(&mut w, &e.per_video)?;
            finish(w, dir, "metrics_per_video.csv", &mut artifacts)?;
            Some(e)
        }
        None => None,
    };

    let simulation = match &inputs.weather {
        Some(weather) => {
            let sim = simulate_run(spec, &measurement.series, weather)?;
            let mut w = create(&dir.join("intervals.csv"))?;
            write_intervals(&mut w, &sim.occupancy)?;
            finish(w, dir, "intervals.csv", &mut artifacts)?;
            let mut w = create(&dir.join("steps.csv"))?;
            write_steps(&mut w, &sim.mpc)?;
            finish(w, dir, "steps.csv", &mut artifacts)?;
            let mut w = create(&dir.join("baseline_steps.csv"))?;
            write_steps(&mut w, &sim.baseline)?;
            finish(w, dir, "baseline_steps.csv", &mut artifacts)?;
            let mut text = serde_json::to_string_pretty(&sim.summary)?;
            text.push('\n');
            write_file(&dir.join("summary.json"), text.as_bytes())?;
            artifacts.push("summary.json".into());
            artifacts.extend(write_charts(&dir.join("charts"), &[("baseline", &sim.baseline), (spec.name.as_str(), &sim.mpc)])?
                .into_iter()
                .map(|p| format!("charts/{p}")));
            Some(sim)
        }
        None => None,
    };
    artifacts.sort();
    Ok((artifacts, measurement, evaluation, simulation))
}

fn finish(mut w: BufWriter<File>, dir: &Path, name: &str, artifacts: &mut Vec<String>) -> Result<()> {
    w.flush().map_err(|e| Error::io(dir.join(name), e))?;
    artifacts.push(name.to_string());
    Ok(())
}

fn sanitize(video: &str) -> String {
    video.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

/// Writes `energy.svg` and `ppd.svg` for named step logs into `dir`.
pub fn write_charts(dir: &Path, runs: &[(&str, &[crate::control_sim::ControlStep])]) -> Result<Vec<String>> {
    let series: Vec<ChartSeries> = runs
        .iter()
        .map(|(name, steps)| ChartSeries { name: name.to_string(), rows: monthly_rollup(steps) })
        .collect();
    let charts = render_monthly_charts(&series)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("energy.svg"), charts.energy_svg.as_bytes())?;
    write_file(&dir.join("ppd.svg"), charts.ppd_svg.as_bytes())?;
    Ok(vec!["energy.svg".into(), "ppd.svg".into()])
}

/// `metrics.json` layout: rounded global and per-video reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub global: MetricsReport,
    pub per_video: BTreeMap<String, MetricsReport>,
}

impl From<&Evaluation> for MetricsFile {
    fn from(e: &Evaluation) -> Self {
        MetricsFile {
            global: e.global.rounded(),
            per_video: e.per_video.iter().map(|(k, v)| (k.clone(), v.rounded())).collect(),
        }
    }
}

/// One row of a run comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub run: String,
    pub pipeline: PipelineName,
    pub metrics: MetricsReport,
    pub energy: Option<EnergyTotals>,
    pub savings_total_pct: Option<f64>,
    /// Columns in which this row holds the best value.
    pub best: Vec<&'static str>,
}

const COMPARISON_HEADER: [&str; 17] = [
    "run",
    "pipeline",
    "mae",
    "rmse",
    "exact_acc",
    "acc",
    "prec",
    "rec",
    "f1",
    "id_switches",
    "fragmentation",
    "cooling_kwh",
    "heating_kwh",
    "total_kwh",
    "savings_pct",
    "mean_ppd",
    "best",
];

impl ComparisonRow {
    /// Value of a numeric column and whether higher is better.
    fn column(&self, name: &str) -> Option<(f64, bool)> {
        let m = &self.metrics;
        let e = self.energy.as_ref();
        match name {
            "mae" => Some((m.mae, false)),
            "rmse" => Some((m.rmse, false)),
            "exact_acc" => Some((m.exact_accuracy, true)),
            "acc" => Some((m.accuracy, true)),
            "prec" => Some((m.precision, true)),
            "rec" => Some((m.recall, true)),
            "f1" => Some((m.f1, true)),
            "id_switches" => m.id_switches.map(|v| (v as f64, false)),
            "fragmentation" => m.fragmentation.map(|v| (v as f64, false)),
            "cooling_kwh" => e.map(|e| (e.cooling_kwh, false)),
            "heating_kwh" => e.map(|e| (e.heating_kwh, false)),
            "total_kwh" => e.map(|e| (e.total_kwh, false)),
            "savings_pct" => self.savings_total_pct.map(|v| (v, true)),
            "mean_ppd" => e.map(|e| (e.mean_ppd, false)),
            _ => None,
        }
    }
}

/// Loads finished runs and lines up their metrics. All runs must have been
/// scored against the same ground truth file contents.
pub fn compare_runs(run_dirs: &[PathBuf]) -> Result<Vec<ComparisonRow>> {
    if run_dirs.is_empty() {
        return Err(Error::Config("no runs to compare".into()));
    }
    let mut rows = Vec::new();
    let mut gt_digest: Option<(String, String)> = None;
    for dir in run_dirs {
        let manifest = RunManifest::load(&dir.join("manifest.json"))?;
        if manifest.status != RunStatus::Ok {
            return Err(Error::Invalid(format!("run {} did not finish successfully", manifest.run_id)));
        }
        let digest = manifest
            .digest("ground_truth")
            .ok_or_else(|| Error::Invalid(format!("run {} has no ground truth", manifest.run_id)))?
            .to_string();
        match &gt_digest {
            None => gt_digest = Some((manifest.run_id.clone(), digest)),
            Some((first, d)) if *d != digest => {
                return Err(Error::Invalid(format!(
                    "runs {first} and {} were scored against different ground truth",
                    manifest.run_id
                )))
            }
            Some(_) => {}
        }
        let metrics: MetricsFile = serde_json::from_str(&read(&dir.join("metrics.json"))?)?;
        let summary_path = dir.join("summary.json");
        let summary: Option<SimSummary> = if summary_path.is_file() { Some(serde_json::from_str(&read(&summary_path)?)?) } else { None };
        rows.push(ComparisonRow {
            run: manifest.run_id,
            pipeline: manifest.pipeline,
            metrics: metrics.global,
            energy: summary.as_ref().map(|s| s.totals),
            savings_total_pct: summary.as_ref().and_then(|s| s.savings.and_then(|v| v.total_pct)),
            best: Vec::new(),
        });
    }
    for col in &COMPARISON_HEADER[2..16] {
        let values: Vec<Option<(f64, bool)>> = rows.iter().map(|r| r.column(col)).collect();
        let best = values.iter().flatten().map(|&(v, higher)| if higher { v } else { -v }).fold(f64::NEG_INFINITY, f64::max);
        if !best.is_finite() {
            continue;
        }
        for (row, v) in rows.iter_mut().zip(&values) {
            if let Some((v, higher)) = v {
                if (if *higher { *v } else { -v }) == best {
                    row.best.push(col);
                }
            }
        }
    }
    Ok(rows)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_comparison_csv<W: Write>(writer: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COMPARISON_HEADER)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in rows {
        let m = &r.metrics;
        let e = r.energy.as_ref();
        w.write_record([
            r.run.clone(),
            r.pipeline.to_string(),
            m.mae.to_string(),
            m.rmse.to_string(),
            m.exact_accuracy.to_string(),
            m.accuracy.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
            m.id_switches.map_or_else(String::new, |v| v.to_string()),
            m.fragmentation.map_or_else(String::new, |v| v.to_string()),
            opt(e.map(|e| round1(e.cooling_kwh))),
            opt(e.map(|e| round1(e.heating_kwh))),
            opt(e.map(|e| round1(e.total_kwh))),
            opt(r.savings_total_pct),
            opt(e.map(|e| crate::metrics::round_half_up(e.mean_ppd, 2))),
            r.best.join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<comparison>", e))?;
    Ok(())
}

fn round1(x: f64) -> f64 {
    crate::metrics::round_half_up(x, 1)
}

/// Reads a TOML file into any config type of this crate.
pub fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
