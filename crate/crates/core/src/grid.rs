//! Discretization of the strip: a horizontal torus of period `period`
//! sampled at `nx` points and `ny` uniform interior wall-normal nodes.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub period: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(period: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Config(format!("period must be positive, got {period}")));
        }
        if nx < 16 || !nx.is_power_of_two() {
            return Err(Error::Config(format!(
                "nx must be a power of two and at least 16, got {nx}"
            )));
        }
        if ny < 4 {
            return Err(Error::Config(format!("ny must be at least 4, got {ny}")));
        }
        Ok(Self { period, nx, ny })
    }

    /// Default 2π-periodic grid.
    pub fn periodic(nx: usize, ny: usize) -> Result<Self> {
        Self::new(2.0 * PI, nx, ny)
    }

    pub fn dy(&self) -> f64 {
        1.0 / (self.ny as f64 + 1.0)
    }

    /// Interior nodes y_j = (j+1) h, j = 0..ny.
    pub fn y_nodes(&self) -> Vec<f64> {
        let h = self.dy();
        (1..=self.ny).map(|j| j as f64 * h).collect()
    }

    /// Cell midpoints (m + 1/2) h, m = 0..=ny.
    pub fn y_midpoints(&self) -> Vec<f64> {
        let h = self.dy();
        (0..=self.ny).map(|m| (m as f64 + 0.5) * h).collect()
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        let dx = self.period / self.nx as f64;
        (0..self.nx).map(|i| i as f64 * dx).collect()
    }

    /// Signed integer wavenumber of FFT-ordered index `idx`.
    pub fn signed_index(&self, idx: usize) -> i64 {
        if idx <= self.nx / 2 {
            idx as i64
        } else {
            idx as i64 - self.nx as i64
        }
    }

    pub fn index_of(&self, m: i64) -> usize {
        m.rem_euclid(self.nx as i64) as usize
    }

    pub fn base_wavenumber(&self) -> f64 {
        2.0 * PI / self.period
    }

    /// Physical wavenumber of FFT-ordered index `idx`.
    pub fn wavenumber(&self, idx: usize) -> f64 {
        self.signed_index(idx) as f64 * self.base_wavenumber()
    }

    pub fn abs_wavenumber(&self, idx: usize) -> f64 {
        self.wavenumber(idx).abs()
    }

    pub fn k_max(&self) -> f64 {
        (self.nx / 2) as f64 * self.base_wavenumber()
    }

    /// Nyquist index; its coefficient is kept at zero everywhere.
    pub fn nyquist(&self) -> usize {
        self.nx / 2
    }

    /// Modes evolved by the solvers: every index except Nyquist.
    pub fn is_retained(&self, idx: usize) -> bool {
        idx != self.nyquist()
    }

    pub fn largest_retained_wavenumber(&self) -> f64 {
        (self.nx / 2 - 1) as f64 * self.base_wavenumber()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(GridSpec::periodic(24, 8).is_err());
        assert!(GridSpec::periodic(8, 8).is_err());
        assert!(GridSpec::periodic(16, 3).is_err());
        assert!(GridSpec::new(-1.0, 16, 8).is_err());
    }

    #[test]
    fn nodes_are_interior_and_increasing() {
        let g = GridSpec::periodic(16, 7).unwrap();
        let y = g.y_nodes();
        assert_eq!(y.len(), 7);
        assert!(y.windows(2).all(|w| w[1] > w[0]));
        assert!(y[0] > 0.0 && y[6] < 1.0);
        assert!((y[0] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn wavenumbers_follow_fft_order() {
        let g = GridSpec::new(4.0 * PI, 16, 4).unwrap();
        assert_eq!(g.signed_index(3), 3);
        assert_eq!(g.signed_index(15), -1);
        assert_eq!(g.index_of(-1), 15);
        assert!((g.wavenumber(2) - 1.0).abs() < 1e-15);
        assert!((g.k_max() - 4.0).abs() < 1e-15);
    }
}
