//! The weighted hydrostatic limit system
//!
//! ∂_t u_φ + λθ̇|D_x|u_φ + (u∂_x u + v∂_y u)_φ − ∂_y² u_φ + ∂_x p_φ = (b∂_x b + c∂_y b)_φ
//! ∂_t b_φ + λθ̇|D_x|b_φ + (u∂_x b + v∂_y b)_φ − ∂_y² b_φ = (b∂_x u + c∂_y u)_φ
//!
//! with v, c recovered from the divergence constraints.
//!
//! Per mode, one step is Crank-Nicolson in ∂_y² and AB2 in the explicit terms,
//! taken in the weight frame of time t_n, followed by the exact damping factor
//! e^{−λΔθ|k|} that moves the result into the frame of t_{n+1}. The pressure
//! is the Lagrange multiplier that keeps ∫_0^1 u dy = 0; the b-equation
//! carries the analogous y-constant multiplier (its Dirichlet data and zero
//! vertical mean cannot otherwise both hold on the discrete level).

use crate::analyticity::{advance_radius, apply_weight, theta_rate, AnalyticityState};
use crate::error::{Error, Result};
use crate::field::{Levels, SpectralField};
use crate::grid::GridSpec;
use crate::imex::{advective_bound, damping_factors, explicit_terms, second_difference, AbHistory, SolverParams, Tridiagonal};
use crate::lp::Partition;
use crate::nonlinear::Forcing;
use crate::state::{Flavor, MhdState};
use crate::vertical::{recover_c, recover_v};
use num_complex::Complex64;
use std::sync::Arc;

/// Quantities observed during the latest step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepDiagnostics {
    pub rate: f64,
    pub dt_bound: f64,
    /// Largest |magnetic multiplier| over modes.
    pub magnetic_multiplier: f64,
}

pub struct LimitSolver {
    grid: GridSpec,
    partition: Arc<Partition>,
    params: SolverParams,
    tri: Tridiagonal,
    influence: Vec<Complex64>,
    influence_sum: Complex64,
    history: AbHistory,
    forcing: Option<Arc<dyn Forcing>>,
    steps: usize,
    pub last: StepDiagnostics,
}

/// Solves A x = rhs subject to Σ x = 0 with A x = rhs + α·1; returns (x, α).
pub(crate) fn constrained_solve(
    solve: impl Fn(&[Complex64]) -> Vec<Complex64>,
    rhs: &[Complex64],
    influence: &[Complex64],
    influence_sum: Complex64,
) -> (Vec<Complex64>, Complex64) {
    let y = solve(rhs);
    let alpha = -y.iter().sum::<Complex64>() / influence_sum;
    let x = y.iter().zip(influence).map(|(a, g)| a + g * alpha).collect();
    (x, alpha)
}

impl LimitSolver {
    pub fn new(grid: GridSpec, partition: Arc<Partition>, params: SolverParams) -> Result<Self> {
        params.validate()?;
        if partition.grid() != &grid {
            return Err(Error::Usage("partition built for a different grid".into()));
        }
        let h = grid.dy();
        let tri = Tridiagonal::new(grid.ny, 1.0 / params.dt + 1.0 / (h * h), -0.5 / (h * h))?;
        let influence = tri.solve(&vec![Complex64::new(1.0, 0.0); grid.ny]);
        let influence_sum = influence.iter().sum();
        Ok(Self {
            grid,
            partition,
            params,
            tri,
            influence,
            influence_sum,
            history: AbHistory::default(),
            forcing: None,
            steps: 0,
            last: StepDiagnostics::default(),
        })
    }

    pub fn with_forcing(mut self, forcing: Arc<dyn Forcing>) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Weighted CN average of the forcing over [t, t + dt] at radius r.
    fn forcing_average(&self, t: f64, radius: f64) -> Result<Option<[SpectralField; 2]>> {
        let Some(f) = &self.forcing else { return Ok(None) };
        let [u0, _, b0, _] = f.evaluate(&self.grid, t)?;
        let [u1, _, b1, _] = f.evaluate(&self.grid, t + self.params.dt)?;
        let avg = |a: &SpectralField, b: &SpectralField| -> Result<SpectralField> {
            let mut s = (a + b).scaled(0.5);
            s.project_zero_mean();
            apply_weight(&s, radius, 1.0)
        };
        Ok(Some([avg(&u0, &u1)?, avg(&b0, &b1)?]))
    }

    /// Advances (u_φ, b_φ) and θ by one step.
    pub fn step(&mut self, state: &MhdState, analyticity: &AnalyticityState) -> Result<(MhdState, AnalyticityState)> {
        if state.flavor != Flavor::Limit {
            return Err(Error::Usage("limit solver needs a limit-flavor state".into()));
        }
        state.validate()?;
        let radius = analyticity.radius();
        if !analyticity.healthy || radius <= 0.0 {
            return Err(Error::RadiusExhausted { time: state.time, remaining: radius });
        }
        let dt = self.params.dt;
        let rate = theta_rate(&self.partition, &state.u, &state.b)?;
        let dt_bound = advective_bound(&state.u, radius)?;
        if self.params.nonlinear && dt > dt_bound {
            return Err(Error::Validation(format!("dt = {dt} exceeds the advective bound {dt_bound}")));
        }
        let now = explicit_terms(&self.grid, radius, &self.params, [&state.u, &state.v, &state.b, &state.c], false)?;
        let star = self.history.extrapolate(&now, &self.grid, analyticity.lambda, analyticity.last_increment);
        let forcing = self.forcing_average(state.time, radius)?;

        let h = self.grid.dy();
        let next_an = advance_radius(analyticity, rate, dt)?;
        let damping = damping_factors(&self.grid, analyticity.lambda, next_an.last_increment);
        let mut u = SpectralField::zeros(self.grid, Levels::Nodes);
        let mut b = SpectralField::zeros(self.grid, Levels::Nodes);
        let mut p = SpectralField::zeros(self.grid, Levels::Single);
        let mut magnetic_multiplier: f64 = 0.0;
        let solve = |r: &[Complex64]| self.tri.solve(r);
        for k in 0..self.grid.nx {
            let kw = self.grid.wavenumber(k);
            if kw == 0.0 || !self.grid.is_retained(k) {
                continue;
            }
            let rhs = |old: &[Complex64], n: &[Complex64], f: Option<&[Complex64]>| -> Vec<Complex64> {
                let d2 = second_difference(old, h);
                (0..old.len())
                    .map(|j| old[j] / dt + d2[j] * 0.5 + n[j] + f.map_or(Complex64::new(0.0, 0.0), |f| f[j]))
                    .collect()
            };
            let ru = rhs(state.u.mode(k), star.u.mode(k), forcing.as_ref().map(|f| f[0].mode(k)));
            let (x, alpha) = constrained_solve(solve, &ru, &self.influence, self.influence_sum);
            let e = damping[k];
            for (o, v) in u.mode_mut(k).iter_mut().zip(&x) {
                *o = v * e;
            }
            // A x = rhs − ik p  ⇒  p = α / (−ik)
            p.set(k, 0, alpha / Complex64::new(0.0, -kw) * e);
            if self.params.magnetic {
                let rb = rhs(state.b.mode(k), star.b.mode(k), forcing.as_ref().map(|f| f[1].mode(k)));
                let (xb, beta) = constrained_solve(solve, &rb, &self.influence, self.influence_sum);
                magnetic_multiplier = magnetic_multiplier.max(beta.norm());
                for (o, v) in b.mode_mut(k).iter_mut().zip(&xb) {
                    *o = v * e;
                }
            }
        }
        let v = recover_v(&u)?;
        let c = recover_c(&b)?;
        let next = MhdState { time: state.time + dt, flavor: Flavor::Limit, u, v, b, c, p };
        if !next.is_finite() {
            return Err(Error::Diverged { time: next.time, last_healthy: self.steps });
        }
        self.history.previous = Some(now);
        self.steps += 1;
        self.last = StepDiagnostics { rate, dt_bound, magnetic_multiplier };
        Ok((next, next_an))
    }
}

/// One step of the limit system (see [`LimitSolver::step`]).
pub fn step_limit(
    solver: &mut LimitSolver,
    state: &MhdState,
    analyticity: &AnalyticityState,
) -> Result<(MhdState, AnalyticityState)> {
    solver.step(state, analyticity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::default_partition;
    use std::f64::consts::PI;

    fn solver(grid: GridSpec, dt: f64, nonlinear: bool) -> LimitSolver {
        let p = Arc::new(default_partition(&grid).unwrap());
        LimitSolver::new(grid, p, SolverParams { dt, nonlinear, magnetic: true }).unwrap()
    }

    #[test]
    fn zero_state_is_an_equilibrium() {
        let g = GridSpec::periodic(16, 8).unwrap();
        let mut s = solver(g, 0.01, true);
        let st = MhdState::zeros(g, Flavor::Limit);
        let an = AnalyticityState::new(0.5, 1.0).unwrap();
        let (next, an2) = s.step(&st, &an).unwrap();
        assert_eq!(next.u.max_abs(), 0.0);
        assert_eq!(an2.theta, 0.0);
    }

    #[test]
    fn heat_mode_decays_at_the_exact_rate() {
        // sin(2πy) keeps ∫u dy = 0, so the multiplier stays inactive
        let g = GridSpec::periodic(16, 127).unwrap();
        let dt = 1e-3;
        let mut s = solver(g, dt, false);
        let ys = g.y_nodes();
        let mut st = MhdState::zeros(g, Flavor::Limit);
        st.u = SpectralField::from_fn(g, Levels::Nodes, |k, j| {
            if k == 1 { Complex64::new(1e-3 * (2.0 * PI * ys[j]).sin(), 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        st.v = recover_v(&st.u).unwrap();
        let an = AnalyticityState::new(0.5, 0.0).unwrap();
        let (next, _) = s.step(&st, &an).unwrap();
        let ratio = next.u.get(1, 40).re / st.u.get(1, 40).re;
        // discrete eigenvalue of the second difference for sin(2πy)
        let h = g.dy();
        let mu = 4.0 * (PI * h).sin().powi(2) / (h * h);
        let cn = (1.0 - 0.5 * dt * mu) / (1.0 + 0.5 * dt * mu);
        assert!((ratio - cn).abs() < 1e-12);
        assert!((ratio - (-4.0 * PI * PI * dt).exp()).abs() < 1e-5);
    }

    #[test]
    fn exhausted_radius_refuses_to_step() {
        let g = GridSpec::periodic(16, 8).unwrap();
        let mut s = solver(g, 0.01, true);
        let mut an = AnalyticityState::new(0.5, 1.0).unwrap();
        an.healthy = false;
        let st = MhdState::zeros(g, Flavor::Limit);
        assert!(matches!(s.step(&st, &an), Err(Error::RadiusExhausted { .. })));
    }
}
