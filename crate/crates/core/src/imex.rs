//! Pieces shared by both steppers: the constant tridiagonal Thomas solver,
//! the discrete ∂_y², the integrating factor of the |D_x| damping, the
//! advective step bound and the AB2 history.

use crate::analyticity::apply_weight;
use crate::error::{Error, Result};
use crate::fft::synthesize;
use crate::field::SpectralField;
use crate::grid::GridSpec;
use crate::nonlinear::{ConvolutionKernel, Nonlinear};
use num_complex::Complex64;

/// Time-stepping switches shared by both systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub dt: f64,
    pub nonlinear: bool,
    pub magnetic: bool,
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Symmetric tridiagonal matrix with constant diagonal `d` and off-diagonal
/// `e`, factored once for repeated complex solves.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    e: f64,
    /// modified diagonal after elimination
    pivots: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(n: usize, d: f64, e: f64) -> Result<Self> {
        let mut pivots = Vec::with_capacity(n);
        let mut prev = d;
        pivots.push(prev);
        for _ in 1..n {
            prev = d - e * e / prev;
            if prev.abs() < 1e-300 {
                return Err(Error::Validation("singular tridiagonal system".into()));
            }
            pivots.push(prev);
        }
        Ok(Self { e, pivots })
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let n = rhs.len();
        let mut y = Vec::with_capacity(n);
        y.push(rhs[0]);
        for i in 1..n {
            let m = self.e / self.pivots[i - 1];
            y.push(rhs[i] - y[i - 1] * m);
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        x[n - 1] = y[n - 1] / self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (y[i] - x[i + 1] * self.e) / self.pivots[i];
        }
        x
    }
}

/// Second difference with homogeneous Dirichlet walls.
pub fn second_difference(col: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = col.len();
    let inv = 1.0 / (h * h);
    let zero = Complex64::new(0.0, 0.0);
    (0..n)
        .map(|j| {
            let down = if j > 0 { col[j - 1] } else { zero };
            let up = if j + 1 < n { col[j + 1] } else { zero };
            (up - col[j] * 2.0 + down) * inv
        })
        .collect()
}

/// e^{−λ Δθ |k|} for every FFT index.
pub fn damping_factors(grid: &GridSpec, lambda: f64, increment: f64) -> Vec<f64> {
    (0..grid.nx).map(|k| (-lambda * increment * grid.abs_wavenumber(k)).exp()).collect()
}

/// Advective bound dt ≤ 1 / (k_max ‖u‖_∞ + 1) from the unweighted velocity.
pub fn advective_bound(u_phi: &SpectralField, radius: f64) -> Result<f64> {
    let u = apply_weight(u_phi, radius, -1.0)?;
    let umax = synthesize(&u).iter().flatten().fold(0.0f64, |m, c| m.max(c.re.abs()));
    Ok(1.0 / (u.grid().k_max() * umax + 1.0))
}

/// Previous-step explicit terms, kept in the frame of their own step.
#[derive(Debug, Clone, Default)]
pub struct AbHistory {
    pub previous: Option<Nonlinear>,
}

impl AbHistory {
    /// 3/2 N^n − 1/2 e_{n−1} N^{n−1} (plain N^n on the first step), where
    /// e_{n−1} moves the old terms into the current weight frame.
    pub fn extrapolate(&self, current: &Nonlinear, grid: &GridSpec, lambda: f64, last_increment: f64) -> Nonlinear {
        match &self.previous {
            None => current.clone(),
            Some(prev) => {
                let e = damping_factors(grid, lambda, last_increment);
                let moved = prev.map_modes(|k| Complex64::new(e[k], 0.0));
                current.combine(1.5, &moved, -0.5)
            }
        }
    }
}

/// Weighted nonlinear terms of a state, honoring the switches.
pub fn explicit_terms(
    grid: &GridSpec,
    radius: f64,
    params: &SolverParams,
    fields: [&SpectralField; 4],
    with_vertical: bool,
) -> Result<Nonlinear> {
    if !params.nonlinear {
        return Ok(Nonlinear::zeros(*grid, with_vertical));
    }
    let kernel = ConvolutionKernel::new(*grid, radius)?;
    let [u, v, b, c] = fields;
    if params.magnetic {
        Nonlinear::evaluate(&kernel, u, v, b, c, with_vertical)
    } else {
        let z = SpectralField::zeros(*grid, u.levels());
        Nonlinear::evaluate(&kernel, u, v, &z, &z, with_vertical)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_solves_heat_matrix() {
        let n = 9;
        let h = 0.1;
        let d = 10.0 + 1.0 / (h * h);
        let e = -0.5 / (h * h);
        let t = Tridiagonal::new(n, d, e).unwrap();
        let rhs: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect();
        let x = t.solve(&rhs);
        for i in 0..n {
            let mut r = x[i] * d;
            if i > 0 {
                r += x[i - 1] * e;
            }
            if i + 1 < n {
                r += x[i + 1] * e;
            }
            assert!((r - rhs[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn second_difference_of_parabola() {
        let h = 0.125;
        let col: Vec<Complex64> = (1..8).map(|j| {
            let y = j as f64 * h;
            Complex64::new(y * (1.0 - y), 0.0)
        }).collect();
        for v in second_difference(&col, h) {
            assert!((v.re + 2.0).abs() < 1e-12);
        }
    }
}
