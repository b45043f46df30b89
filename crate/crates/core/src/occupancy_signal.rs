//! Aggregation of frame-level occupancy into fixed control intervals, day
//! profiles and annual tiling.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{datetime, format_timestamp, parse_timestamp, OccupancySample};

pub const DEFAULT_INTERVAL_SECS: u32 = 300;
const SECS_PER_DAY: u32 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSample {
    pub k: u64,
    /// Interval start, Unix seconds.
    pub start: i64,
    pub n: u32,
    pub occupied: bool,
}

impl IntervalSample {
    pub fn new(k: u64, start: i64, n: u32) -> Self {
        IntervalSample { k, start, n, occupied: n >= 1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reducer {
    #[default]
    Max,
    /// Mean count, rounded half-up.
    Mean,
}

impl Reducer {
    fn apply(self, counts: &[u32]) -> u32 {
        match self {
            Reducer::Max => counts.iter().copied().max().unwrap_or(0),
            Reducer::Mean if counts.is_empty() => 0,
            Reducer::Mean => {
                let sum: u64 = counts.iter().map(|&c| u64::from(c)).sum();
                let len = counts.len() as u64;
                ((2 * sum + len) / (2 * len)) as u32
            }
        }
    }
}

impl FromStr for Reducer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Reducer::Max),
            "mean" => Ok(Reducer::Mean),
            other => Err(Error::Config(format!("unknown reducer {other:?} (expected max or mean)"))),
        }
    }
}

impl fmt::Display for Reducer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reducer::Max => "max",
            Reducer::Mean => "mean",
        })
    }
}

fn bucket_of(ts: f64, interval: u32) -> i64 {
    (ts / f64::from(interval)).floor() as i64
}

/// Buckets samples by `floor(ts / interval)` and reduces each bucket. The
/// output spans every interval from the first to the last occupied bucket;
/// buckets without frames get `n = 0`.
pub fn aggregate(samples: &[OccupancySample], interval_secs: u32, reducer: Reducer) -> Result<Vec<IntervalSample>> {
    if interval_secs == 0 {
        return Err(Error::Config("interval must be positive".into()));
    }
    let Some((lo, hi)) = samples.iter().fold(None, |acc: Option<(i64, i64)>, s| {
        let b = bucket_of(s.timestamp, interval_secs);
        Some(acc.map_or((b, b), |(lo, hi)| (lo.min(b), hi.max(b))))
    }) else {
        return Ok(Vec::new());
    };
    let start = lo * i64::from(interval_secs);
    let end = (hi + 1) * i64::from(interval_secs);
    aggregate_range(samples, interval_secs, reducer, start, end)
}

/// Like [`aggregate`] over the fixed horizon `[start, end)`; samples outside
/// are ignored. `start` is aligned down to the interval grid.
pub fn aggregate_range(samples: &[OccupancySample], interval_secs: u32, reducer: Reducer, start: i64, end: i64) -> Result<Vec<IntervalSample>> {
    if interval_secs == 0 {
        return Err(Error::Config("interval must be positive".into()));
    }
    let step = i64::from(interval_secs);
    let first = start.div_euclid(step);
    let last = if end > start { (end - 1).div_euclid(step) } else { first - 1 };
    let mut buckets: BTreeMap<i64, Vec<u32>> = BTreeMap::new();
    for s in samples {
        let b = bucket_of(s.timestamp, interval_secs);
        if (first..=last).contains(&b) {
            buckets.entry(b).or_default().push(s.count);
        }
    }
    Ok((first..=last)
        .enumerate()
        .map(|(k, b)| IntervalSample::new(k as u64, b * step, buckets.get(&b).map_or(0, |c| reducer.apply(c))))
        .collect())
}

const INTERVAL_HEADER: [&str; 4] = ["k", "start_iso", "n", "occupied"];

pub fn write_intervals<W: Write>(writer: W, intervals: &[IntervalSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(INTERVAL_HEADER)?;
    for iv in intervals {
        w.write_record([
            iv.k.to_string(),
            format_timestamp(iv.start as f64),
            iv.n.to_string(),
            u8::from(iv.occupied).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<intervals>", e))?;
    Ok(())
}

pub fn read_intervals<R: Read>(reader: R) -> Result<Vec<IntervalSample>> {
    let src = "intervals";
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(INTERVAL_HEADER) {
        return Err(Error::parse(src, 1, format!("expected header {}", INTERVAL_HEADER.join(","))));
    }
    let mut out: Vec<IntervalSample> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let bad = |what: &str| Error::parse(src, line, format!("invalid {what}"));
        let k: u64 = rec[0].parse().map_err(|_| bad("k"))?;
        let start = parse_timestamp(&rec[1]).map_err(|e| Error::parse(src, line, e))? as i64;
        let n: u32 = rec[2].parse().map_err(|_| bad("n"))?;
        let occupied = match &rec[3] {
            "0" | "false" => false,
            "1" | "true" => true,
            _ => return Err(bad("occupied")),
        };
        if occupied != (n >= 1) {
            return Err(Error::parse(src, line, "occupied disagrees with n"));
        }
        if let Some(prev) = out.last() {
            if k != prev.k + 1 || start <= prev.start {
                return Err(Error::parse(src, line, "intervals must be consecutive and time-ordered"));
            }
        }
        out.push(IntervalSample { k, start, n, occupied });
    }
    Ok(out)
}

/// One calendar day of interval counts (UTC), `86400 / interval` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayProfile {
    pub date: NaiveDate,
    pub counts: Vec<u32>,
}

impl DayProfile {
    pub fn occupied_intervals(&self) -> usize {
        self.counts.iter().filter(|&&n| n >= 1).count()
    }
}

/// Splits an interval series into day profiles. Slots of a day not covered
/// by the series are unoccupied.
pub fn day_profiles(intervals: &[IntervalSample], interval_secs: u32) -> Result<Vec<DayProfile>> {
    if interval_secs == 0 || SECS_PER_DAY % interval_secs != 0 {
        return Err(Error::Config(format!("interval {interval_secs}s does not divide a day")));
    }
    let slots = (SECS_PER_DAY / interval_secs) as usize;
    let mut days: BTreeMap<NaiveDate, Vec<u32>> = BTreeMap::new();
    for iv in intervals {
        let t = datetime(iv.start as f64);
        let slot = t.time().num_seconds_from_midnight() / interval_secs;
        let day = days.entry(t.date_naive()).or_insert_with(|| vec![0; slots]);
        let cell = &mut day[slot as usize];
        *cell = (*cell).max(iv.n);
    }
    Ok(days.into_iter().map(|(date, counts)| DayProfile { date, counts }).collect())
}

/// Tiles day profiles over `days` calendar days from `start`. A day whose
/// zero-based day of year is `d` uses profile `d mod P`; the 366th day of a
/// leap year uses the last profile.
pub fn tile_annual_profile(profiles: &[Vec<u32>], start: NaiveDate, days: u32, interval_secs: u32) -> Result<Vec<IntervalSample>> {
    if profiles.is_empty() {
        return Err(Error::Invalid("no day profiles to tile".into()));
    }
    if interval_secs == 0 || SECS_PER_DAY % interval_secs != 0 {
        return Err(Error::Config(format!("interval {interval_secs}s does not divide a day")));
    }
    let slots = (SECS_PER_DAY / interval_secs) as usize;
    if let Some(p) = profiles.iter().find(|p| p.len() != slots) {
        return Err(Error::Invalid(format!("day profile has {} slots, expected {slots}", p.len())));
    }
    let mut out = Vec::with_capacity(days as usize * slots);
    let mut k = 0u64;
    for date in start.iter_days().take(days as usize) {
        let d = date.ordinal0() as usize;
        let profile = if d == 365 { profiles.last().expect("nonempty") } else { &profiles[d % profiles.len()] };
        let midnight = date.and_time(NaiveTime::MIN).and_utc().timestamp();
        for (slot, &n) in profile.iter().enumerate() {
            out.push(IntervalSample::new(k, midnight + slot as i64 * i64::from(interval_secs), n));
            k += 1;
        }
    }
    Ok(out)
}
