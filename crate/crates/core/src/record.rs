//! In-memory record of one run: settings, per-step scalar and per-block
//! histories, retained snapshots, and health.

use crate::besov::{BlockSeries, NormSeries};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::profiles::{Profile, Smallness};
use crate::state::{Flavor, MhdState};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Fully resolved parameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub grid: GridSpec,
    pub dt: f64,
    pub t_end: f64,
    pub a: f64,
    pub lambda: f64,
    /// Exponential growth rate R of the e^{Rt} factor in the monitored bounds.
    pub growth_rate: f64,
    /// `None` for the limit system.
    pub epsilon: Option<f64>,
    pub nonlinear: bool,
    pub magnetic: bool,
    pub profile: Profile,
    pub delta: f64,
    pub seed: u64,
    /// Keep every n-th step (0: only the first and last).
    pub snapshot_every: usize,
    /// Product-estimate constant C used for the smallness thresholds.
    pub constant: f64,
}

impl RunSettings {
    pub fn flavor(&self) -> Flavor {
        if self.epsilon.is_some() { Flavor::Scaled } else { Flavor::Limit }
    }

    /// ε, or 0 for the limit system.
    pub fn epsilon_or_zero(&self) -> f64 {
        self.epsilon.unwrap_or(0.0)
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::Config(format!("dt and t_end must be positive (dt = {}, t_end = {})", self.dt, self.t_end)));
        }
        let n = self.t_end / self.dt;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::Config(format!("t_end = {} is not a multiple of dt = {}", self.t_end, self.dt)));
        }
        if !(self.a > 0.0) || !(self.lambda >= 0.0) || !(self.growth_rate >= 0.0) {
            return Err(Error::Config("need a > 0, lambda >= 0, R >= 0".into()));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Config(format!("epsilon must lie in (0, 1], got {e}")));
            }
        }
        if !(self.delta >= 0.0) || !(self.constant > 0.0) {
            return Err(Error::Config("need delta >= 0 and a positive constant C".into()));
        }
        Ok(())
    }
}

/// A retained state together with its place in the run.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub theta: f64,
    pub state: MhdState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub healthy: bool,
    pub radius_exhausted: bool,
    pub diverged: bool,
    /// Last step whose state passed all checks.
    pub last_healthy_step: usize,
    /// θ ≤ a/λ at every step.
    pub persistence_ok: bool,
    /// ‖u_φ‖_{B^{1/2}} + ‖b_φ‖_{B^{1/2}} ≤ 1/(2C²) at every step.
    pub in_smallness_set: bool,
    pub message: Option<String>,
}

impl Default for Health {
    fn default() -> Self {
        Self {
            healthy: true,
            radius_exhausted: false,
            diverged: false,
            last_healthy_step: 0,
            persistence_ok: true,
            in_smallness_set: true,
            message: None,
        }
    }
}

/// Block-series tags recorded at every step.
pub mod tags {
    pub const FIELDS: [&str; 4] = ["u", "v", "b", "c"];
    /// B^{1/2} blocks of f, ∂_y f, ∂_x f for each field f.
    pub fn plain(f: &str) -> String {
        f.to_string()
    }
    pub fn dy(f: &str) -> String {
        format!("dy_{f}")
    }
    pub fn dx(f: &str) -> String {
        format!("dx_{f}")
    }
    /// B^{5/2} blocks of u, b, ∂_y u, ∂_y b.
    pub fn high(f: &str) -> String {
        format!("{f}@5/2")
    }
    /// B^{3/2} blocks of (∂_t f)_φ, u and b only, one sample per step.
    pub fn time_derivative(f: &str) -> String {
        format!("dt_{f}@3/2")
    }
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: String,
    pub settings: RunSettings,
    pub series: NormSeries,
    pub blocks: BTreeMap<String, BlockSeries>,
    pub snapshots: Vec<Snapshot>,
    /// θ at every step (index = step).
    pub thetas: Vec<f64>,
    /// Radius-loss rate evaluated on the state of each step.
    pub rates: Vec<f64>,
    pub health: Health,
    pub smallness: Smallness,
    /// Weighted initial size in B^{1/2} (pairs (u, εv), (b, εc) for scaled runs).
    pub initial_size: f64,
}

/// Serializable part of a record (everything except snapshots and blocks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub run_id: String,
    pub settings: RunSettings,
    pub thetas: Vec<f64>,
    pub rates: Vec<f64>,
    pub health: Health,
    pub smallness: Smallness,
    pub initial_size: f64,
}

impl RunRecord {
    pub fn meta(&self) -> RecordMeta {
        RecordMeta {
            run_id: self.run_id.clone(),
            settings: self.settings.clone(),
            thetas: self.thetas.clone(),
            rates: self.rates.clone(),
            health: self.health.clone(),
            smallness: self.smallness,
            initial_size: self.initial_size,
        }
    }

    pub fn from_parts(
        meta: RecordMeta,
        series: NormSeries,
        blocks: BTreeMap<String, BlockSeries>,
        snapshots: Vec<Snapshot>,
    ) -> Self {
        Self {
            run_id: meta.run_id,
            settings: meta.settings,
            series,
            blocks,
            snapshots,
            thetas: meta.thetas,
            rates: meta.rates,
            health: meta.health,
            smallness: meta.smallness,
            initial_size: meta.initial_size,
        }
    }

    /// Number of completed steps.
    pub fn steps_taken(&self) -> usize {
        self.thetas.len().saturating_sub(1)
    }

    /// Time reached by the run.
    pub fn final_time(&self) -> f64 {
        self.steps_taken() as f64 * self.settings.dt
    }

    pub fn block(&self, tag: &str) -> Result<&BlockSeries> {
        self.blocks
            .get(tag)
            .ok_or_else(|| Error::Range(format!("run {} has no block series {tag:?}", self.run_id)))
    }

    /// Δθ that moved step n−1 into step n (0 for n = 0).
    pub fn increment(&self, n: usize) -> f64 {
        if n == 0 { 0.0 } else { self.thetas[n] - self.thetas[n - 1] }
    }

    /// Snapshot cadence if snapshots are uniformly spaced.
    pub fn cadence(&self) -> Option<usize> {
        let steps: Vec<usize> = self.snapshots.iter().map(|s| s.step).collect();
        let gaps: Vec<usize> = steps.windows(2).map(|w| w[1] - w[0]).collect();
        match gaps.first() {
            Some(&g) if gaps.iter().all(|&x| x == g) => Some(g),
            _ => None,
        }
    }

    pub fn snapshot_at_step(&self, step: usize) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.step == step)
    }
}
