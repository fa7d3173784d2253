//! Run driver: steps a limit or scaled system and records histories.

use crate::analyticity::{tau_rate, theta_rate, AnalyticityState};
use crate::besov::{BlockSeries, NormSeries};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::imex::SolverParams;
use crate::limit::LimitSolver;
use crate::lp::{default_partition, Partition};
use crate::nonlinear::Forcing;
use crate::profiles::{initial_size, make_initial_data, smallness};
use crate::record::{tags, Health, RunRecord, RunSettings, Snapshot};
use crate::scaled::ScaledSolver;
use crate::state::MhdState;
use crate::vertical::divergence_residual;
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::sync::Arc;

pub enum Stepper {
    Limit(LimitSolver),
    Scaled(ScaledSolver),
}

impl Stepper {
    pub fn new(settings: &RunSettings, partition: Arc<Partition>) -> Result<Self> {
        let params = SolverParams { dt: settings.dt, nonlinear: settings.nonlinear, magnetic: settings.magnetic };
        Ok(match settings.epsilon {
            None => Self::Limit(LimitSolver::new(settings.grid, partition, params)?),
            Some(e) => Self::Scaled(ScaledSolver::new(settings.grid, partition, params, e)?),
        })
    }

    pub fn with_forcing(self, forcing: Arc<dyn Forcing>) -> Self {
        match self {
            Self::Limit(s) => Self::Limit(s.with_forcing(forcing)),
            Self::Scaled(s) => Self::Scaled(s.with_forcing(forcing)),
        }
    }

    pub fn step(&mut self, state: &MhdState, an: &AnalyticityState) -> Result<(MhdState, AnalyticityState)> {
        match self {
            Self::Limit(s) => s.step(state, an),
            Self::Scaled(s) => s.step(state, an),
        }
    }
}

/// Radius-loss rate of a weighted state: θ̇ for the limit system, τ̇ for the scaled one.
pub fn loss_rate(partition: &Partition, state: &MhdState, epsilon: Option<f64>) -> Result<f64> {
    match epsilon {
        None => theta_rate(partition, &state.u, &state.b),
        Some(e) => tau_rate(partition, &state.u, &state.v, e),
    }
}

/// max_k |∫_0^1 f̂(k, y) dy| by the trapezoid rule.
pub fn vertical_mean_defect(f: &SpectralField) -> f64 {
    let h = f.grid().dy();
    (0..f.grid().nx)
        .map(|k| (f.mode(k).iter().sum::<Complex64>() * h).norm())
        .fold(0.0, f64::max)
}

struct Recorder<'a> {
    partition: &'a Partition,
    settings: &'a RunSettings,
    series: NormSeries,
    blocks: BTreeMap<String, BlockSeries>,
    snapshots: Vec<Snapshot>,
    thetas: Vec<f64>,
    rates: Vec<f64>,
    health: Health,
}

impl<'a> Recorder<'a> {
    fn new(partition: &'a Partition, settings: &'a RunSettings) -> Result<Self> {
        let mut blocks = BTreeMap::new();
        for f in tags::FIELDS {
            for tag in [tags::plain(f), tags::dy(f), tags::dx(f)] {
                blocks.insert(tag, BlockSeries::new(partition, 0.5)?);
            }
        }
        for f in ["u", "b", "dy_u", "dy_b"] {
            blocks.insert(tags::high(f), BlockSeries::new(partition, 2.5)?);
        }
        for f in ["u", "b"] {
            blocks.insert(tags::time_derivative(f), BlockSeries::new(partition, 1.5)?);
        }
        Ok(Self {
            partition,
            settings,
            series: NormSeries::new(),
            blocks,
            snapshots: Vec::new(),
            thetas: Vec::new(),
            rates: Vec::new(),
            health: Health::default(),
        })
    }

    fn push_block(&mut self, tag: &str, t: f64, f: &SpectralField, s: f64) -> Result<f64> {
        let series = self.blocks.get_mut(tag).expect("registered tag");
        series.push(self.partition, t, f, s)?;
        Ok(*series.besov_values().last().expect("just pushed"))
    }

    /// Records the state of step n with its θ; `rate` is the loss rate of this state.
    fn observe(&mut self, n: usize, state: &MhdState, an: &AnalyticityState, rate: f64) -> Result<()> {
        let t = state.time;
        let s = self.settings;
        let mut b12 = BTreeMap::new();
        for (name, field) in [("u", &state.u), ("v", &state.v), ("b", &state.b), ("c", &state.c)] {
            let value = self.push_block(&tags::plain(name), t, field, 0.5)?;
            let dy = field.dy()?;
            self.push_block(&tags::dy(name), t, &dy, 0.5)?;
            self.push_block(&tags::dx(name), t, &field.dx(), 0.5)?;
            b12.insert(name, value);
            if name == "u" || name == "b" {
                self.push_block(&tags::high(name), t, field, 2.5)?;
                self.push_block(&tags::high(&tags::dy(name)), t, &dy, 2.5)?;
            }
        }
        let size = b12["u"] + b12["b"];
        let series = &mut self.series;
        series.record(t, "theta", an.theta)?;
        series.record(t, "theta_rate", rate)?;
        series.record(t, "radius_remaining", an.radius().max(0.0))?;
        for (name, value) in &b12 {
            series.record(t, &format!("B(1/2) of {name}_phi"), *value)?;
        }
        series.record(t, "smallness_size", size)?;
        series.record(t, "div_u", divergence_residual(&state.u, &state.v)?)?;
        series.record(t, "div_b", divergence_residual(&state.b, &state.c)?)?;
        series.record(t, "mean_u", vertical_mean_defect(&state.u))?;
        series.record(t, "mean_b", vertical_mean_defect(&state.b))?;
        let e2 = s.epsilon_or_zero().powi(2);
        let energy = 0.5 * (state.u.l2_norm().powi(2) + state.b.l2_norm().powi(2))
            + 0.5 * e2 * (state.v.l2_norm().powi(2) + state.c.l2_norm().powi(2));
        series.record(t, "energy", energy)?;
        self.thetas.push(an.theta);
        self.rates.push(rate);
        if size > 1.0 / (2.0 * s.constant * s.constant) {
            self.health.in_smallness_set = false;
        }
        if !an.persistence_ok {
            self.health.persistence_ok = false;
        }
        self.health.last_healthy_step = n;
        let keep = n == 0 || (s.snapshot_every > 0 && n % s.snapshot_every == 0);
        if keep {
            self.snapshots.push(Snapshot { step: n, theta: an.theta, state: state.clone() });
        }
        Ok(())
    }

    /// (∂_t f)_φ ≈ (f^{n+1} − f^n)/dt + λθ̇|D_x| f^n, sampled at t_n.
    fn observe_time_derivative(&mut self, old: &MhdState, new: &MhdState, lambda: f64, rate: f64) -> Result<()> {
        let dt = self.settings.dt;
        for (name, a, b) in [("u", &old.u, &new.u), ("b", &old.b, &new.b)] {
            let g = *a.grid();
            let mut d = (b - a).scaled(1.0 / dt);
            d.axpy(1.0, &a.map_modes(|k| Complex64::new(lambda * rate * g.abs_wavenumber(k), 0.0)));
            self.push_block(&tags::time_derivative(name), old.time, &d, 1.5)?;
        }
        Ok(())
    }
}

/// Steps from `initial` to `t_end`. Failures during stepping end the run and
/// are reported in the record's health; only setup errors are returned.
pub fn execute(
    run_id: &str,
    settings: &RunSettings,
    partition: Arc<Partition>,
    initial: MhdState,
    forcing: Option<Arc<dyn Forcing>>,
) -> Result<RunRecord> {
    settings.validate()?;
    if initial.flavor != settings.flavor() {
        return Err(Error::Usage(format!(
            "initial state is {} but the settings describe a {} run",
            initial.flavor.name(),
            settings.flavor().name()
        )));
    }
    let mut stepper = Stepper::new(settings, partition.clone())?;
    if let Some(f) = forcing {
        stepper = stepper.with_forcing(f);
    }
    let size = initial_size(&partition, &initial, settings.epsilon_or_zero())?;
    let verdict = smallness(size, settings.constant, settings.a, settings.lambda);
    let mut rec = Recorder::new(&partition, settings)?;
    let mut an = AnalyticityState::new(settings.a, settings.lambda)?;
    let mut state = initial;
    let mut rate = loss_rate(&partition, &state, settings.epsilon)?;
    rec.observe(0, &state, &an, rate)?;
    let steps = settings.steps();
    for n in 0..steps {
        match stepper.step(&state, &an) {
            Ok((next, next_an)) => {
                rec.observe_time_derivative(&state, &next, an.lambda, rate)?;
                rate = loss_rate(&partition, &next, settings.epsilon)?;
                rec.observe(n + 1, &next, &next_an, rate)?;
                state = next;
                an = next_an;
            }
            Err(e) => {
                rec.health.healthy = false;
                match &e {
                    Error::RadiusExhausted { .. } => rec.health.radius_exhausted = true,
                    Error::Diverged { .. } => rec.health.diverged = true,
                    _ => {}
                }
                rec.health.message = Some(e.to_string());
                break;
            }
        }
    }
    if !an.healthy {
        rec.health.healthy = false;
        rec.health.radius_exhausted = true;
    }
    let last = rec.thetas.len() - 1;
    if rec.snapshots.last().map(|s| s.step) != Some(last) {
        rec.snapshots.push(Snapshot { step: last, theta: an.theta, state });
    }
    Ok(RunRecord {
        run_id: run_id.to_string(),
        settings: settings.clone(),
        series: rec.series,
        blocks: rec.blocks,
        snapshots: rec.snapshots,
        thetas: rec.thetas,
        rates: rec.rates,
        health: rec.health,
        smallness: verdict,
        initial_size: size,
    })
}

/// Builds the profile's initial data and runs it.
pub fn run(run_id: &str, settings: &RunSettings) -> Result<RunRecord> {
    settings.validate()?;
    let partition = Arc::new(default_partition(&settings.grid)?);
    let flavor = settings.flavor();
    let initial = make_initial_data(settings.grid, settings.profile, settings.delta, settings.a, flavor, settings.seed)?;
    execute(run_id, settings, partition, initial, None)
}

/// Unweighted copy of a recorded snapshot (weights stripped with its own radius).
pub fn unweighted(settings: &RunSettings, snapshot: &Snapshot) -> Result<MhdState> {
    snapshot.state.reweighted(settings.a - settings.lambda * snapshot.theta, -1.0)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::profiles::Profile;

    pub(crate) fn settings(epsilon: Option<f64>) -> RunSettings {
        RunSettings {
            grid: GridSpec::periodic(16, 15).unwrap(),
            dt: 0.01,
            t_end: 0.1,
            a: 0.5,
            lambda: 1.0,
            growth_rate: 1.0,
            epsilon,
            nonlinear: true,
            magnetic: true,
            profile: Profile::Mode1,
            delta: 1e-3,
            seed: 0,
            snapshot_every: 1,
            constant: 4.0,
        }
    }

    #[test]
    fn zero_data_run_is_healthy_and_zero() {
        let mut s = settings(None);
        s.delta = 0.0;
        let r = run("zero", &s).unwrap();
        assert!(r.health.healthy);
        assert_eq!(r.steps_taken(), 10);
        assert!(r.series.values("B(1/2) of u_phi").iter().all(|(_, v)| *v == 0.0));
        assert!(r.thetas.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn small_run_records_every_step() {
        for eps in [None, Some(0.1)] {
            let r = run("small", &settings(eps)).unwrap();
            assert!(r.health.healthy, "{:?}", r.health);
            assert_eq!(r.snapshots.len(), 11);
            assert_eq!(r.block("dy_u").unwrap().times.len(), 11);
            assert_eq!(r.block("dt_u@3/2").unwrap().times.len(), 10);
            assert!(r.thetas.windows(2).all(|w| w[1] >= w[0]));
            let div = r.series.values("div_u");
            assert!(div.iter().all(|(_, d)| *d < 1e-10), "{div:?}");
        }
    }

    #[test]
    fn exhausted_radius_is_reported() {
        let mut s = settings(None);
        s.delta = 0.5;
        s.lambda = 1e4;
        let r = run("burn", &s).unwrap();
        assert!(!r.health.healthy);
        assert!(r.health.radius_exhausted);
        assert!(!r.health.persistence_ok);
        assert!(r.steps_taken() < 10);
    }
}
