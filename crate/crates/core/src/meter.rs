//! Wall-time metering and emission estimates.
//!
//! Energy is `seconds / 3600 * watts / 1000 * pue` kWh and emissions are
//! `kWh * grid_intensity` grams of CO2e. The clock is injectable so tests can
//! drive it by hand.

use std::cell::{Cell, RefCell};
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PuSelect,
    Augment,
    Genaug,
    Train,
    Eval,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PuSelect => "pu_select",
            Phase::Augment => "augment",
            Phase::Genaug => "genaug",
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerModel {
    /// Average device draw in watts.
    pub device_watts: f64,
    pub pue: f64,
    /// Grams of CO2e per kWh.
    pub grid_intensity: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            device_watts: 50.0,
            pue: 1.0,
            grid_intensity: 300.0,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.device_watts) || !ok(self.grid_intensity) {
            return Err(Error::Config(
                "device_watts and grid_intensity must be positive".into(),
            ));
        }
        if !(self.pue.is_finite() && self.pue >= 1.0) {
            return Err(Error::Config("pue must be at least 1".into()));
        }
        Ok(())
    }

    pub fn energy_kwh(&self, wall_seconds: f64) -> f64 {
        wall_seconds / 3600.0 * self.device_watts / 1000.0 * self.pue
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub phase: Phase,
    pub wall_seconds: f64,
    pub energy_kwh: f64,
    pub emissions_g: f64,
}

impl EmissionRecord {
    pub fn from_seconds(phase: Phase, wall_seconds: f64, pm: &PowerModel) -> Self {
        let energy_kwh = pm.energy_kwh(wall_seconds);
        EmissionRecord {
            phase,
            wall_seconds,
            energy_kwh,
            emissions_g: energy_kwh * pm.grid_intensity,
        }
    }
}

/// Monotonic time source in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct FakeClock {
    t: Cell<f64>,
}

impl FakeClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, seconds: f64) {
        self.t.set(self.t.get() + seconds);
    }
}

impl Clock for FakeClock {
    fn now(&self) -> f64 {
        self.t.get()
    }
}

/// Collects one record per metered scope. Scopes may not nest.
pub struct Meter<C: Clock> {
    clock: C,
    pm: PowerModel,
    active: Cell<bool>,
    records: RefCell<Vec<EmissionRecord>>,
}

impl<C: Clock> Meter<C> {
    pub fn new(clock: C, pm: PowerModel) -> Result<Self> {
        pm.validate()?;
        Ok(Meter {
            clock,
            pm,
            active: Cell::new(false),
            records: RefCell::new(Vec::new()),
        })
    }

    pub fn clock(&self) -> &C {
        &self.clock
    }

    pub fn power_model(&self) -> &PowerModel {
        &self.pm
    }

    /// Run `work` inside a metering scope. The record is kept even when the
    /// work itself fails.
    pub fn measure<T>(
        &self,
        phase: Phase,
        work: impl FnOnce() -> T,
    ) -> Result<(T, EmissionRecord)> {
        if self.active.replace(true) {
            return Err(Error::NestedScope);
        }
        let start = self.clock.now();
        let out = work();
        let elapsed = (self.clock.now() - start).max(0.0);
        self.active.set(false);
        let rec = EmissionRecord::from_seconds(phase, elapsed, &self.pm);
        self.records.borrow_mut().push(rec);
        Ok((out, rec))
    }

    pub fn records(&self) -> Vec<EmissionRecord> {
        self.records.borrow().clone()
    }

    pub fn take_records(&self) -> Vec<EmissionRecord> {
        std::mem::take(&mut *self.records.borrow_mut())
    }
}

/// Training emissions plus `n_cases` inferences.
pub fn project_longterm(train: &EmissionRecord, per_inference_g: f64, n_cases: u64) -> f64 {
    train.emissions_g + per_inference_g * n_cases as f64
}

/// `0` followed by `points_per_decade` log-spaced values per decade up to
/// `max`, rounded and deduplicated.
pub fn log_grid(max: u64, points_per_decade: u32) -> Vec<u64> {
    let mut out = vec![0];
    if max == 0 {
        return out;
    }
    let steps = ((max as f64).log10() * f64::from(points_per_decade)).ceil() as u32;
    for i in 0..=steps {
        let n = (10f64
            .powf(f64::from(i) / f64::from(points_per_decade))
            .round() as u64)
            .min(max);
        if *out.last().unwrap() != n {
            out.push(n);
        }
    }
    out
}

pub fn projection_curve(
    train: &EmissionRecord,
    per_inference_g: f64,
    grid: &[u64],
) -> Vec<(u64, f64)> {
    grid.iter()
        .map(|&n| (n, project_longterm(train, per_inference_g, n)))
        .collect()
}

pub const EMISSIONS_HEADER: &str = "phase,wall_seconds,energy_kwh,emissions_g";
pub const PROJECTION_HEADER: &str = "n_cases,total_g";

pub fn emission_row(r: &EmissionRecord) -> String {
    format!(
        "{},{},{},{}",
        r.phase.as_str(),
        r.wall_seconds,
        r.energy_kwh,
        r.emissions_g
    )
}

pub fn emissions_csv(records: &[EmissionRecord]) -> String {
    let mut s = format!("{EMISSIONS_HEADER}\n");
    for r in records {
        let _ = writeln!(s, "{}", emission_row(r));
    }
    s
}

pub fn projection_csv(curve: &[(u64, f64)]) -> String {
    let mut s = format!("{PROJECTION_HEADER}\n");
    for (n, g) in curve {
        let _ = writeln!(s, "{n},{g}");
    }
    s
}
