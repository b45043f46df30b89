//! Synthetic scenes and scenarios shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{NaiveDate, TimeZone, Utc};
use occtool_core::ingest::{BBox, Detection, FrameObservation, IdentityGroundTruth, WeatherSeries};
use occtool_core::occupancy_signal::{aggregate, day_profiles, tile_annual_profile, IntervalSample, Reducer};
use occtool_core::series::{OccupancySample, Source};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FPS: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct Target {
    pub id: u64,
    pub first: u64,
    /// Ground-truth box per frame, starting at `first`.
    pub boxes: Vec<BBox>,
}

impl Target {
    pub fn at(&self, frame: u64) -> Option<BBox> {
        frame.checked_sub(self.first).and_then(|i| self.boxes.get(i as usize)).copied()
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub frames: u64,
    pub targets: Vec<Target>,
}

impl Scene {
    pub fn count(&self, frame: u64) -> u32 {
        self.targets.iter().filter(|t| t.at(frame).is_some()).count() as u32
    }

    pub fn identity(&self) -> IdentityGroundTruth {
        let mut trajectories = BTreeMap::new();
        for t in &self.targets {
            trajectories.insert(t.id, (0..t.boxes.len()).map(|i| (t.first + i as u64, t.boxes[i])).collect());
        }
        IdentityGroundTruth { trajectories }
    }
}

fn walk(rng: &mut ChaCha8Rng, len: usize, start: (f64, f64), v: (f64, f64), size: (f64, f64)) -> Vec<BBox> {
    let (mut x, mut y) = start;
    let (mut vx, mut vy) = v;
    (0..len)
        .map(|_| {
            let b = BBox::new(x, y, size.0, size.1);
            vx += rng.gen_range(-0.05..0.05);
            vy += rng.gen_range(-0.05..0.05);
            x += vx;
            y += vy;
            b
        })
        .collect()
}

/// Targets wander freely, so paths may cross and occlude.
pub fn crossing_scene(rng: &mut ChaCha8Rng) -> Scene {
    let frames = rng.gen_range(60..=200u64);
    let n = rng.gen_range(1..=5);
    let targets = (0..n)
        .map(|i| {
            let first = rng.gen_range(0..frames / 3);
            let last = rng.gen_range((first + 20).min(frames - 1)..frames);
            let start = (rng.gen_range(50.0..550.0), rng.gen_range(50.0..350.0));
            let v = (rng.gen_range(-3.0..3.0), rng.gen_range(-1.5..1.5));
            let size = (rng.gen_range(35.0..60.0), rng.gen_range(90.0..140.0));
            Target { id: i + 1, first, boxes: walk(rng, (last - first + 1) as usize, start, v, size) }
        })
        .collect();
    Scene { frames, targets }
}

/// Every target keeps to its own horizontal lane for the whole scene.
pub fn lane_scene(rng: &mut ChaCha8Rng) -> Scene {
    let frames = rng.gen_range(60..=200u64);
    let n = rng.gen_range(1..=5);
    let targets = (0..n)
        .map(|i| {
            let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let x0 = if dir > 0.0 { rng.gen_range(0.0..100.0) } else { rng.gen_range(500.0..600.0) };
            let speed = dir * rng.gen_range(0.5..2.0);
            let boxes = (0..frames)
                .map(|k| BBox::new(x0 + speed * k as f64, 10.0 + 95.0 * i as f64, 40.0, 80.0))
                .collect();
            Target { id: i + 1, first: 0, boxes }
        })
        .collect();
    Scene { frames, targets }
}

/// Noisy detections of a scene. `score(target, frame)` gives the detector
/// score; `None` drops the detection.
pub fn observe(scene: &Scene, rng: &mut ChaCha8Rng, video: &str, t0: f64, mut score: impl FnMut(&mut ChaCha8Rng, u64, u64) -> Option<f64>) -> Vec<FrameObservation> {
    (0..scene.frames)
        .map(|f| {
            let mut dets = Vec::new();
            for t in &scene.targets {
                let Some(b) = t.at(f) else { continue };
                let Some(s) = score(rng, t.id, f) else { continue };
                let j = |rng: &mut ChaCha8Rng| rng.gen_range(-1.0..1.0);
                let bbox = BBox::new(b.x + j(rng), b.y + j(rng), b.w + j(rng), b.h + j(rng));
                dets.push(Detection { bbox, score: s, embedding: None });
            }
            FrameObservation::new(video, f, t0 + f as f64 / FPS, dets, 0.5)
        })
        .collect()
}

/// Independent IoU, used by the oracles.
pub fn overlap(a: &BBox, b: &BBox) -> f64 {
    let w = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let h = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = w * h;
    let union = a.w * a.h + b.w * b.h - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

pub fn ts(y: i32, m: u32, d: u32, h: u32) -> i64 {
    Utc.with_ymd_and_hms(y, m, d, h, 0, 0).unwrap().timestamp()
}

/// Office-like frame series for `days` recorded days: empty from 01:00 to
/// 06:00, 1 to 4 people during working hours, sparse evening visits.
pub fn office_frames(rng: &mut ChaCha8Rng, first_day: NaiveDate, days: u32, step_secs: i64) -> Vec<OccupancySample> {
    let mut out = Vec::new();
    for d in 0..days {
        let date = first_day + chrono::Days::new(u64::from(d));
        let video = format!("day{d}");
        let t0 = date.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
        let arrive = rng.gen_range(7 * 3600..9 * 3600);
        let leave = rng.gen_range(17 * 3600..19 * 3600);
        let (mut level, mut visitor) = (2u32, false);
        for (i, s) in (0..86_400).step_by(step_secs as usize).enumerate() {
            if s % 600 == 0 {
                level = rng.gen_range(1..=4);
                visitor = rng.gen_bool(0.05);
            }
            let count = if (3600..6 * 3600).contains(&s) {
                0
            } else if (arrive..leave).contains(&s) {
                level
            } else if s >= 6 * 3600 && visitor {
                1
            } else {
                0
            };
            let conf = if count == 0 { 0.0 } else { 0.8 };
            out.push(OccupancySample::new(video.clone(), i as u64, (t0 + s) as f64, count, conf, Source::Detector));
        }
    }
    out
}

/// Tiled 5-minute occupancy for `days` days from `start`, built from five
/// recorded office days.
pub fn office_week(seed: u64, start: NaiveDate, days: u32) -> Vec<IntervalSample> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = office_frames(&mut rng, NaiveDate::from_ymd_opt(2023, 3, 6).unwrap(), 5, 10);
    let mut intervals = Vec::new();
    for video in frames.chunk_by(|a, b| a.video_id == b.video_id) {
        intervals.extend(aggregate(video, 300, Reducer::Max).unwrap());
    }
    let profiles: Vec<Vec<u32>> = day_profiles(&intervals, 300).unwrap().into_iter().map(|p| p.counts).collect();
    tile_annual_profile(&profiles, start, days, 300).unwrap()
}

/// Hourly outdoor temperature, `mean ± swing` with the minimum at 05:00.
pub fn weather(start: NaiveDate, days: u32, mean: f64, swing: f64) -> WeatherSeries {
    let t0 = start.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp() as f64;
    let points = (0..=days * 24)
        .map(|h| {
            let phase = 2.0 * std::f64::consts::PI * (f64::from(h % 24) - 5.0) / 24.0;
            (t0 + f64::from(h) * 3600.0, mean - swing * phase.cos())
        })
        .collect();
    WeatherSeries::new(points).unwrap()
}

pub fn weather_csv(ws: &WeatherSeries) -> String {
    let mut s = String::from("timestamp,tout_c\n");
    for (t, v) in ws.points() {
        s.push_str(&format!("{},{v}\n", occtool_core::series::format_timestamp(t)));
    }
    s
}
