//! Time-series ingestion, sampling, the PV production model, and synthetic
//! weather generation.
//!
//! Series files are plain text: one header line `channel,unit`, then
//! `ISO-8601 timestamp,value` rows at a fixed resolution. Lines starting
//! with `#` and blank lines are ignored. Timestamps must be strictly
//! increasing with a constant spacing; irradiance channels must be
//! non-negative. Sampling linearly interpolates and refuses timestamps
//! outside the covered span.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::scalar::Real;

pub const CHANNEL_IRRADIANCE: &str = "irradiance";
pub const CHANNEL_LOAD_P: &str = "load_p";
pub const CHANNEL_LOAD_Q: &str = "load_q";

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<F> {
    pub channel: String,
    pub unit: String,
    pub start: DateTime<Utc>,
    pub resolution_s: u64,
    pub values: Vec<F>,
}

#[derive(Debug, thiserror::Error)]
pub enum TimeseriesError {
    #[error("empty series document")]
    Empty,
    #[error("line 1: header must be `channel,unit`, got {0:?}")]
    Header(String),
    #[error("line {line}: expected `timestamp,value`, got {text:?}")]
    Row { line: usize, text: String },
    #[error("line {line}: bad timestamp {text:?}: {source}")]
    Timestamp { line: usize, text: String, source: chrono::ParseError },
    #[error("line {line}: bad value {text:?}")]
    Value { line: usize, text: String },
    #[error("line {line}: timestamps must advance by a fixed resolution (expected step {expected}s, got {got}s)")]
    Spacing { line: usize, expected: i64, got: i64 },
    #[error("series needs at least two rows")]
    TooShort,
    #[error("line {line}: negative irradiance {value}")]
    NegativeIrradiance { line: usize, value: f64 },
    #[error("sample time {t} outside series span [{start}, {end}]")]
    OutOfRange { t: DateTime<Utc>, start: DateTime<Utc>, end: DateTime<Utc> },
}

/// Parses a series document.
pub fn ingest<F: Real>(text: &str) -> Result<TimeSeries<F>, TimeseriesError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (_, header) = lines.next().ok_or(TimeseriesError::Empty)?;
    let (channel, unit) = header
        .split_once(',')
        .ok_or_else(|| TimeseriesError::Header(header.to_string()))?;
    let channel = channel.trim().to_string();
    let unit = unit.trim().to_string();
    if channel.is_empty() || unit.is_empty() {
        return Err(TimeseriesError::Header(header.to_string()));
    }

    let mut stamps: Vec<DateTime<Utc>> = Vec::new();
    let mut values: Vec<F> = Vec::new();
    for (line, text) in lines {
        let (ts, val) = text
            .split_once(',')
            .ok_or_else(|| TimeseriesError::Row { line, text: text.to_string() })?;
        let ts = ts.trim();
        let val = val.trim();
        let stamp = DateTime::parse_from_rfc3339(ts)
            .map_err(|source| TimeseriesError::Timestamp { line, text: ts.to_string(), source })?
            .with_timezone(&Utc);
        let value: f64 = val
            .parse()
            .map_err(|_| TimeseriesError::Value { line, text: val.to_string() })?;
        if channel == CHANNEL_IRRADIANCE && value < 0.0 {
            return Err(TimeseriesError::NegativeIrradiance { line, value });
        }
        if stamps.len() >= 2 {
            let expected = (stamps[1] - stamps[0]).num_seconds();
            let got = (stamp - *stamps.last().unwrap()).num_seconds();
            if got != expected {
                return Err(TimeseriesError::Spacing { line, expected, got });
            }
        } else if let Some(prev) = stamps.last() {
            let got = (stamp - *prev).num_seconds();
            if got <= 0 {
                return Err(TimeseriesError::Spacing { line, expected: 1, got });
            }
        }
        stamps.push(stamp);
        values.push(F::c(value));
    }
    if values.len() < 2 {
        return Err(TimeseriesError::TooShort);
    }
    let resolution_s = (stamps[1] - stamps[0]).num_seconds() as u64;
    Ok(TimeSeries { channel, unit, start: stamps[0], resolution_s, values })
}

impl<F: Real> TimeSeries<F> {
    /// Covered span in seconds: `(len - 1) * resolution`.
    pub fn span_s(&self) -> u64 {
        (self.values.len() as u64 - 1) * self.resolution_s
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::seconds(self.span_s() as i64)
    }

    /// Linear interpolation at `t`; out-of-span times are an error.
    pub fn sample(&self, t: DateTime<Utc>) -> Result<F, TimeseriesError> {
        let offset = (t - self.start).num_seconds();
        let span = self.span_s() as i64;
        if offset < 0 || offset > span {
            return Err(TimeseriesError::OutOfRange { t, start: self.start, end: self.end() });
        }
        let res = self.resolution_s as i64;
        let idx = (offset / res) as usize;
        if idx + 1 >= self.values.len() {
            return Ok(*self.values.last().unwrap());
        }
        let frac = F::c((offset % res) as f64) / F::c(res as f64);
        let v0 = self.values[idx];
        let v1 = self.values[idx + 1];
        Ok(v0 + (v1 - v0) * frac)
    }

    /// Sampling with the timestamp wrapped into the covered span (the series
    /// is treated as cyclic). Used by the harness for runs longer than the
    /// shipped profiles.
    pub fn sample_cyclic(&self, t: DateTime<Utc>) -> F {
        let span = self.span_s() as i64;
        let offset = (t - self.start).num_seconds().rem_euclid(span);
        let t = self.start + Duration::seconds(offset);
        self.sample(t).expect("wrapped timestamp is inside the span")
    }
}

/// Active power of a PV plant under the linear irradiance model, MW:
/// `s_rated * min(1, irradiance / 1000)`, clamped below at zero.
pub fn pv_power<F: Real>(irradiance_w_m2: F, s_rated_mva: F) -> F {
    let g = irradiance_w_m2.max(F::zero());
    s_rated_mva * (g / F::c(1000.0)).min(F::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayType {
    /// Half-sine daylight arc peaking at 1000 W/m2 at solar noon.
    Clear,
    /// The clear arc scaled down to a quarter.
    Overcast,
    /// 365 days of clear arcs with the daily peak modulated over the
    /// seasons (solstice-aligned cosine) plus a seeded per-day factor.
    SeasonalYear,
}

const SUNRISE_H: f64 = 6.0;
const SUNSET_H: f64 = 18.0;

fn daylight_arc(hour: f64) -> f64 {
    if hour <= SUNRISE_H || hour >= SUNSET_H {
        0.0
    } else {
        (std::f64::consts::PI * (hour - SUNRISE_H) / (SUNSET_H - SUNRISE_H)).sin()
    }
}

/// Generates a synthetic irradiance series at hourly resolution starting
/// 2021-01-01T00:00:00Z. Deterministic for a given seed.
pub fn synth_weather<F: Real>(day: DayType, seed: u64) -> TimeSeries<F> {
    let start = Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap();
    let (days, scale) = match day {
        DayType::Clear => (1usize, 1.0),
        DayType::Overcast => (1, 0.25),
        DayType::SeasonalYear => (365, 1.0),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(days * 24 + 1);
    for d in 0..days {
        let seasonal = if matches!(day, DayType::SeasonalYear) {
            // Day 171 (June 21) peaks at 1000, the winter solstice at 100.
            let phase = 2.0 * std::f64::consts::PI * (d as f64 - 171.0) / 365.0;
            let daily: f64 = rng.random_range(0.85..1.0);
            (0.55 + 0.45 * phase.cos()) * daily
        } else {
            1.0
        };
        for h in 0..24 {
            values.push(F::c(1000.0 * scale * seasonal * daylight_arc(h as f64)));
        }
    }
    values.push(F::zero()); // close the last midnight so the span covers full days
    TimeSeries {
        channel: CHANNEL_IRRADIANCE.to_string(),
        unit: "W/m2".to_string(),
        start,
        resolution_s: 3600,
        values,
    }
}
