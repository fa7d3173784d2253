//! The weighted ε-scaled anisotropic system
//!
//! ∂_t u_φ + λτ̇|D_x|u_φ + (u∂_x u + v∂_y u)_φ − ε²∂_x²u_φ − ∂_y²u_φ + ∂_x p_φ = (b∂_x b + c∂_y b)_φ
//! ε²(∂_t v_φ + λτ̇|D_x|v_φ + (u∂_x v + v∂_y v)_φ − ε²∂_x²v_φ − ∂_y²v_φ) + ∂_y p_φ = ε²(b∂_x c + c∂_y c)_φ
//!
//! and the analogous (b, c) pair, with ∂_x u + ∂_y v = ∂_x b + ∂_y c = 0.
//!
//! Per mode the velocity is parametrized by u alone: v = −ik C u with C the
//! cumulative trapezoid, which satisfies the discrete divergence exactly
//! whenever Σ_j u_j = 0. Galerkin projection in the energy product
//! ⟨u, u'⟩ + ε²⟨v, v'⟩ gives
//!
//! (I + ε²k²CᵀC) ∂_t u = (L + ε²k²CᵀLC) u + N_u + ε²·ik·CᵀN_v + α·1,  L = ∂_y² − ε²k²,
//!
//! with α the multiplier of Σ u = 0. At ε = 0 this is the limit scheme. The
//! (b, c) pair is treated the same way, so its divergence holds by
//! construction. The 2D pressure is reconstructed afterwards by
//! [`pressure_solve`]; for this discretization it is exact.

use crate::analyticity::{advance_radius, apply_weight, tau_rate, AnalyticityState};
use crate::error::{Error, Result};
use crate::field::{Levels, SpectralField};
use crate::grid::GridSpec;
use crate::imex::{advective_bound, damping_factors, explicit_terms, second_difference, AbHistory, SolverParams};
use crate::limit::{constrained_solve, StepDiagnostics};
use crate::lp::Partition;
use crate::nonlinear::{Forcing, Nonlinear};
use crate::state::{Flavor, MhdState};
use crate::vertical::{cumulative_trapezoid, divergence};
use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;
use std::sync::Arc;

/// Dense per-|k| operators of the constrained scheme.
pub struct ModeOperators {
    pub k: f64,
    /// M/dt + K/2
    explicit: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    influence: Vec<Complex64>,
    influence_sum: Complex64,
}

/// Matrix of the cumulative trapezoid on ny nodes.
pub fn trapezoid_matrix(ny: usize, h: f64) -> DMatrix<f64> {
    DMatrix::from_fn(ny, ny, |j, i| {
        if i < j {
            h
        } else if i == j {
            0.5 * h
        } else {
            0.0
        }
    })
}

pub fn second_difference_matrix(ny: usize, h: f64) -> DMatrix<f64> {
    let inv = 1.0 / (h * h);
    DMatrix::from_fn(ny, ny, |i, j| {
        if i == j {
            -2.0 * inv
        } else if i.abs_diff(j) == 1 {
            inv
        } else {
            0.0
        }
    })
}

/// (mass, stiffness) of the constrained scheme for wavenumber k.
pub fn mode_matrices(ny: usize, h: f64, epsilon: f64, k: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let c = trapezoid_matrix(ny, h);
    let e2k2 = epsilon * epsilon * k * k;
    let l = second_difference_matrix(ny, h) - DMatrix::identity(ny, ny) * e2k2;
    let mass = DMatrix::identity(ny, ny) + c.transpose() * &c * e2k2;
    let stiff = &l + c.transpose() * &l * &c * e2k2;
    (mass, stiff)
}

fn to_real_pair(x: &[Complex64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { x[i].re } else { x[i].im })
}

fn from_real_pair(m: &DMatrix<f64>) -> Vec<Complex64> {
    (0..m.nrows()).map(|i| Complex64::new(m[(i, 0)], m[(i, 1)])).collect()
}

impl ModeOperators {
    pub fn new(ny: usize, h: f64, epsilon: f64, k: f64, dt: f64) -> Result<Self> {
        let (mass, stiff) = mode_matrices(ny, h, epsilon, k);
        let implicit = &mass / dt - &stiff * 0.5;
        let explicit = &mass / dt + &stiff * 0.5;
        let factor = Cholesky::new(implicit)
            .ok_or_else(|| Error::Validation(format!("implicit operator not positive definite at k = {k}")))?;
        let ones = vec![Complex64::new(1.0, 0.0); ny];
        let influence = from_real_pair(&factor.solve(&to_real_pair(&ones)));
        let influence_sum = influence.iter().sum();
        Ok(Self { k, explicit, factor, influence, influence_sum })
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        from_real_pair(&self.factor.solve(&to_real_pair(rhs)))
    }

    pub fn apply_explicit(&self, x: &[Complex64]) -> Vec<Complex64> {
        from_real_pair(&(&self.explicit * to_real_pair(x)))
    }
}

/// ik·Cᵀ n, the lift of a v-equation term into the u-parametrized scheme.
fn lift(n: &[Complex64], k: f64, h: f64) -> Vec<Complex64> {
    // (Cᵀ n)_i = h (n_i / 2 + Σ_{j>i} n_j)
    let len = n.len();
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let mut tail = Complex64::new(0.0, 0.0);
    for i in (0..len).rev() {
        out[i] = (n[i] * 0.5 + tail) * h * Complex64::new(0.0, k);
        tail += n[i];
    }
    out
}

/// −ik C x.
fn vertical_of(x: &[Complex64], k: f64, h: f64) -> Vec<Complex64> {
    cumulative_trapezoid(x, h).into_iter().map(|c| c * Complex64::new(0.0, -k)).collect()
}

/// General tridiagonal solve (sub, diag, sup) by the Thomas algorithm.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[Complex64]) -> Vec<Complex64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / m } else { 0.0 };
        d[i] = (rhs[i] - d[i - 1] * sub[i]) / m;
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - x[i + 1] * c[i];
    }
    x
}

/// Pressure on the ny+1 midpoints from the momentum right sides:
/// Div(G_x p, ε⁻² G_y p) = Div(rhs_u, rhs_v), where rhs_v is the right side
/// of the v-equation after division by ε². Here G_x p at node j is
/// ik(p_j + p_{j+1})/2 and G_y p is (p_{j+1} − p_j)/h, the adjoint of the
/// midpoint divergence, so u = rhs_u − G_x p, v = rhs_v − ε⁻² G_y p is
/// discretely divergence-free. The k = 0 mode is gauged to zero y-mean.
pub fn pressure_solve(epsilon: f64, rhs_u: &SpectralField, rhs_v: &SpectralField) -> Result<SpectralField> {
    if !(epsilon > 0.0) {
        return Err(Error::Validation(format!("pressure solve needs epsilon > 0, got {epsilon}")));
    }
    let grid = *rhs_u.grid();
    let source = divergence(rhs_u, rhs_v)?;
    let n = grid.ny + 1;
    let h = grid.dy();
    let a = 1.0 / (epsilon * epsilon * h * h);
    let mut out = SpectralField::zeros(grid, Levels::Midpoints);
    for k in 0..grid.nx {
        let kw = grid.wavenumber(k);
        let q = kw * kw / 4.0;
        let mut diag = vec![-2.0 * a - 2.0 * q; n];
        diag[0] = -a - q;
        diag[n - 1] = -a - q;
        let mut sub = vec![a - q; n];
        let mut sup = vec![a - q; n];
        let mut rhs = source.mode(k).to_vec();
        if kw == 0.0 {
            diag[0] = 1.0;
            sup[0] = 0.0;
            rhs[0] = Complex64::new(0.0, 0.0);
        }
        sub[0] = 0.0;
        sup[n - 1] = 0.0;
        let mut p = thomas(&sub, &diag, &sup, &rhs);
        if kw == 0.0 {
            let mean = p.iter().sum::<Complex64>() / n as f64;
            p.iter_mut().for_each(|x| *x -= mean);
        }
        out.mode_mut(k).copy_from_slice(&p);
    }
    Ok(out)
}

/// u − G_x p and v − ε⁻² G_y p (the projection paired with [`pressure_solve`]).
pub fn project(epsilon: f64, u: &SpectralField, v: &SpectralField, p: &SpectralField) -> Result<(SpectralField, SpectralField)> {
    let grid = *u.grid();
    let h = grid.dy();
    let inv_e2 = 1.0 / (epsilon * epsilon);
    let mut pu = u.clone();
    let mut pv = v.clone();
    for k in 0..grid.nx {
        let ik = Complex64::new(0.0, grid.wavenumber(k));
        let pc = p.mode(k).to_vec();
        for j in 0..grid.ny {
            pu.mode_mut(k)[j] -= ik * (pc[j] + pc[j + 1]) * 0.5;
            pv.mode_mut(k)[j] -= (pc[j + 1] - pc[j]) / h * inv_e2;
        }
    }
    Ok((pu, pv))
}

pub struct ScaledSolver {
    grid: GridSpec,
    partition: Arc<Partition>,
    params: SolverParams,
    epsilon: f64,
    /// Indexed by |m| = 1..nx/2−1; entry 0 unused.
    modes: Vec<Option<ModeOperators>>,
    history: AbHistory,
    forcing: Option<Arc<dyn Forcing>>,
    steps: usize,
    pub last: StepDiagnostics,
}

impl ScaledSolver {
    /// `epsilon = 0` gives the formal limit of the scheme (pressure not reconstructed).
    pub fn new(grid: GridSpec, partition: Arc<Partition>, params: SolverParams, epsilon: f64) -> Result<Self> {
        params.validate()?;
        if !(epsilon >= 0.0 && epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        if partition.grid() != &grid {
            return Err(Error::Usage("partition built for a different grid".into()));
        }
        let h = grid.dy();
        let half = grid.nx / 2;
        let modes = (0..half)
            .map(|m| {
                if m == 0 {
                    Ok(None)
                } else {
                    ModeOperators::new(grid.ny, h, epsilon, m as f64 * grid.base_wavenumber(), params.dt).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            partition,
            params,
            epsilon,
            modes,
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

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    fn forcing_average(&self, t: f64, radius: f64) -> Result<Option<Nonlinear>> {
        let Some(f) = &self.forcing else { return Ok(None) };
        let a = f.evaluate(&self.grid, t)?;
        let b = f.evaluate(&self.grid, t + self.params.dt)?;
        let avg = |i: usize| -> Result<SpectralField> {
            let mut s = (&a[i] + &b[i]).scaled(0.5);
            s.project_zero_mean();
            apply_weight(&s, radius, 1.0)
        };
        Ok(Some(Nonlinear { u: avg(0)?, v: Some(avg(1)?), b: avg(2)?, c: Some(avg(3)?) }))
    }

    /// Advances the four weighted fields and τ by one step.
    pub fn step(&mut self, state: &MhdState, analyticity: &AnalyticityState) -> Result<(MhdState, AnalyticityState)> {
        if state.flavor != Flavor::Scaled {
            return Err(Error::Usage("scaled solver needs a scaled-flavor state".into()));
        }
        state.validate()?;
        let radius = analyticity.radius();
        if !analyticity.healthy || radius <= 0.0 {
            return Err(Error::RadiusExhausted { time: state.time, remaining: radius });
        }
        let dt = self.params.dt;
        let eps = self.epsilon;
        let e2 = eps * eps;
        let rate = tau_rate(&self.partition, &state.u, &state.v, eps)?;
        let dt_bound = advective_bound(&state.u, radius)?;
        if self.params.nonlinear && dt > dt_bound {
            return Err(Error::Validation(format!("dt = {dt} exceeds the advective bound {dt_bound}")));
        }
        let now = explicit_terms(&self.grid, radius, &self.params, [&state.u, &state.v, &state.b, &state.c], true)?;
        let mut star = self.history.extrapolate(&now, &self.grid, analyticity.lambda, analyticity.last_increment);
        if let Some(f) = self.forcing_average(state.time, radius)? {
            star = star.combine(1.0, &f, 1.0);
        }
        let star_v = star.v.clone().expect("scaled terms carry v");
        let star_c = star.c.clone().expect("scaled terms carry c");

        let h = self.grid.dy();
        let next_an = advance_radius(analyticity, rate, dt)?;
        let damping = damping_factors(&self.grid, analyticity.lambda, next_an.last_increment);
        let zeros = || SpectralField::zeros(self.grid, Levels::Nodes);
        let (mut u, mut v, mut b, mut c) = (zeros(), zeros(), zeros(), zeros());
        let (mut rhs_u, mut rhs_v) = (zeros(), zeros());
        let mut magnetic_multiplier: f64 = 0.0;
        for k in 0..self.grid.nx {
            let m = self.grid.signed_index(k).unsigned_abs() as usize;
            let Some(ops) = self.modes.get(m).and_then(|o| o.as_ref()) else { continue };
            let kw = self.grid.wavenumber(k);
            let e = damping[k];
            let build = |old: &[Complex64], nu: &[Complex64], nv: &[Complex64]| -> Vec<Complex64> {
                let base = ops.apply_explicit(old);
                let lifted = lift(nv, kw, h);
                (0..old.len()).map(|j| base[j] + nu[j] + lifted[j] * e2).collect()
            };
            let rhs = build(state.u.mode(k), star.u.mode(k), star_v.mode(k));
            let (x, _) = constrained_solve(|r| ops.solve(r), &rhs, &ops.influence, ops.influence_sum);
            let y = vertical_of(&x, kw, h);
            if eps > 0.0 {
                // momentum right sides at the half step, for the pressure
                let lap = |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
                    let s: Vec<Complex64> = a.iter().zip(b).map(|(p, q)| (p + q) * 0.5).collect();
                    second_difference(&s, h).iter().zip(&s).map(|(d, v)| d - v * (e2 * kw * kw)).collect()
                };
                let lu = lap(&x, state.u.mode(k));
                let lv = lap(&y, state.v.mode(k));
                for j in 0..self.grid.ny {
                    rhs_u.mode_mut(k)[j] = lu[j] + star.u.mode(k)[j];
                    rhs_v.mode_mut(k)[j] = lv[j] + star_v.mode(k)[j];
                }
            }
            for j in 0..self.grid.ny {
                u.mode_mut(k)[j] = x[j] * e;
                v.mode_mut(k)[j] = y[j] * e;
            }
            if self.params.magnetic {
                let rb = build(state.b.mode(k), star.b.mode(k), star_c.mode(k));
                let (xb, beta) = constrained_solve(|r| ops.solve(r), &rb, &ops.influence, ops.influence_sum);
                magnetic_multiplier = magnetic_multiplier.max(beta.norm());
                let yb = vertical_of(&xb, kw, h);
                for j in 0..self.grid.ny {
                    b.mode_mut(k)[j] = xb[j] * e;
                    c.mode_mut(k)[j] = yb[j] * e;
                }
            }
        }
        let p = if eps > 0.0 {
            let p = pressure_solve(eps, &rhs_u, &rhs_v)?;
            p.map_modes(|k| Complex64::new(damping[k], 0.0))
        } else {
            SpectralField::zeros(self.grid, Levels::Midpoints)
        };
        let next = MhdState { time: state.time + dt, flavor: Flavor::Scaled, u, v, b, c, p };
        if !next.is_finite() {
            return Err(Error::Diverged { time: next.time, last_healthy: self.steps });
        }
        self.history.previous = Some(now);
        self.steps += 1;
        self.last = StepDiagnostics { rate, dt_bound, magnetic_multiplier };
        Ok((next, next_an))
    }
}

/// One step of the scaled system (see [`ScaledSolver::step`]).
pub fn step_scaled(
    solver: &mut ScaledSolver,
    state: &MhdState,
    analyticity: &AnalyticityState,
) -> Result<(MhdState, AnalyticityState)> {
    solver.step(state, analyticity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::from_physical_real;
    use crate::lp::default_partition;
    use crate::vertical::{divergence_residual, recover_v};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sample(g: GridSpec, levels: Levels, ys: &[f64], f: impl Fn(f64, f64) -> f64) -> SpectralField {
        let xs = g.x_nodes();
        let rows: Vec<Vec<f64>> = ys.iter().map(|&y| xs.iter().map(|&x| f(x, y)).collect()).collect();
        from_physical_real(g, levels, &rows)
    }

    #[test]
    fn zero_rhs_gives_zero_pressure() {
        let g = GridSpec::periodic(16, 8).unwrap();
        let z = SpectralField::zeros(g, Levels::Nodes);
        assert_eq!(pressure_solve(0.1, &z, &z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn manufactured_pressure_is_second_order() {
        let eps = 0.3;
        let mut errors = Vec::new();
        for ny in [15, 31, 63] {
            let g = GridSpec::periodic(16, ny).unwrap();
            let ys = g.y_nodes();
            let ru = sample(g, Levels::Nodes, &ys, |x, y| -x.sin() * (PI * y).cos());
            let rv = sample(g, Levels::Nodes, &ys, |x, y| -PI * x.cos() * (PI * y).sin() / (eps * eps));
            let p = pressure_solve(eps, &ru, &rv).unwrap();
            let exact = sample(g, Levels::Midpoints, &g.y_midpoints(), |x, y| x.cos() * (PI * y).cos());
            errors.push((&p - &exact).max_abs());
        }
        let order = (errors[1] / errors[2]).log2();
        assert!(order > 1.8, "errors {errors:?}");
        assert!(errors[2] < 1e-3);
    }

    #[test]
    fn projection_removes_divergence() {
        let g = GridSpec::periodic(16, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rand_field = || {
            let mut f = SpectralField::from_fn(g, Levels::Nodes, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            f.project_zero_mean();
            f
        };
        let (u, v) = (rand_field(), rand_field());
        let p = pressure_solve(0.2, &u, &v).unwrap();
        let (pu, pv) = project(0.2, &u, &v, &p).unwrap();
        assert!(divergence_residual(&pu, &pv).unwrap() < 1e-10);
    }

    #[test]
    fn anisotropic_heat_decay() {
        let g = GridSpec::periodic(16, 127).unwrap();
        let eps = 0.1;
        let dt = 1e-3;
        let part = Arc::new(default_partition(&g).unwrap());
        let mut s = ScaledSolver::new(g, part, SolverParams { dt, nonlinear: false, magnetic: true }, eps).unwrap();
        let ys = g.y_nodes();
        let mut st = MhdState::zeros(g, Flavor::Scaled);
        st.u = sample(g, Levels::Nodes, &ys, |x, y| 1e-3 * x.cos() * (2.0 * PI * y).sin());
        st.v = recover_v(&st.u).unwrap();
        let mut an = AnalyticityState::new(0.5, 0.0).unwrap();
        let mut cur = st.clone();
        for _ in 0..20 {
            let (n, a) = s.step(&cur, &an).unwrap();
            cur = n;
            an = a;
        }
        let rate = -(cur.u.l2_norm() / st.u.l2_norm()).ln() / (20.0 * dt);
        // leading order ε² + 4π²; the constrained v adds O(ε²) corrections
        let expected = eps * eps + 4.0 * PI * PI;
        assert!((rate - expected).abs() < 2e-3 * expected, "rate {rate}");
        assert!(divergence_residual(&cur.u, &cur.v).unwrap() < 1e-10);
    }
}
