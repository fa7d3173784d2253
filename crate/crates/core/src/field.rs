//! Horizontal Fourier coefficients per wall-normal level.
//!
//! Coefficients use the normalization f̂_k = (1/nx) Σ_x f(x) e^{-ikx}, so a
//! real field `cos x` has coefficient 1/2 at k = ±1 and the L² norm uses
//! the normalized horizontal measure (1/L)∫ dx.

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

/// Wall-normal layout of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Levels {
    /// The ny interior nodes; wall values are implicit zeros.
    Nodes,
    /// The ny + 1 cell midpoints (used for ∂_y fields and the 2D pressure).
    Midpoints,
    /// A single y-independent row.
    Single,
}

impl Levels {
    pub fn count(self, grid: &GridSpec) -> usize {
        match self {
            Levels::Nodes => grid.ny,
            Levels::Midpoints => grid.ny + 1,
            Levels::Single => 1,
        }
    }

    /// Quadrature weight of one level in the wall-normal L² norm.
    pub fn weight(self, grid: &GridSpec) -> f64 {
        match self {
            Levels::Nodes | Levels::Midpoints => grid.dy(),
            Levels::Single => 1.0,
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            Levels::Nodes => 0,
            Levels::Midpoints => 1,
            Levels::Single => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(Levels::Nodes),
            1 => Ok(Levels::Midpoints),
            2 => Ok(Levels::Single),
            other => Err(Error::Format(format!("unknown level layout {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    levels: Levels,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec, levels: Levels) -> Self {
        let n = grid.nx * levels.count(&grid);
        Self { grid, levels, coeffs: vec![Complex64::new(0.0, 0.0); n] }
    }

    /// Builds a field from `f(k_index, level)`.
    pub fn from_fn(grid: GridSpec, levels: Levels, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let nl = levels.count(&grid);
        let mut coeffs = Vec::with_capacity(grid.nx * nl);
        for k in 0..grid.nx {
            for j in 0..nl {
                coeffs.push(f(k, j));
            }
        }
        Self { grid, levels, coeffs }
    }

    pub fn from_coeffs(grid: GridSpec, levels: Levels, coeffs: Vec<Complex64>) -> Result<Self> {
        let expected = grid.nx * levels.count(&grid);
        if coeffs.len() != expected {
            return Err(Error::Usage(format!(
                "coefficient length {} does not match grid ({expected})",
                coeffs.len()
            )));
        }
        Ok(Self { grid, levels, coeffs })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn levels(&self) -> Levels {
        self.levels
    }

    pub fn n_levels(&self) -> usize {
        self.levels.count(&self.grid)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn get(&self, k: usize, j: usize) -> Complex64 {
        self.coeffs[k * self.n_levels() + j]
    }

    pub fn set(&mut self, k: usize, j: usize, value: Complex64) {
        let nl = self.n_levels();
        self.coeffs[k * nl + j] = value;
    }

    /// Wall-normal profile of mode `k`.
    pub fn mode(&self, k: usize) -> &[Complex64] {
        let nl = self.n_levels();
        &self.coeffs[k * nl..(k + 1) * nl]
    }

    pub fn mode_mut(&mut self, k: usize) -> &mut [Complex64] {
        let nl = self.n_levels();
        &mut self.coeffs[k * nl..(k + 1) * nl]
    }

    pub fn check_compatible(&self, other: &SpectralField) -> Result<()> {
        if self.grid != other.grid || self.levels != other.levels {
            return Err(Error::Usage(format!(
                "field mismatch: {:?}/{:?} vs {:?}/{:?}",
                self.grid, self.levels, other.grid, other.levels
            )));
        }
        Ok(())
    }

    /// Σ_j w |f̂_kj|² for each mode.
    pub fn mode_energies(&self) -> Vec<f64> {
        let w = self.levels.weight(&self.grid);
        (0..self.grid.nx)
            .map(|k| w * self.mode(k).iter().map(|c| c.norm_sqr()).sum::<f64>())
            .collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.mode_energies().iter().sum::<f64>().sqrt()
    }

    /// Weighted inner product Re⟨f, g⟩ in the same measure as `l2_norm`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        let w = self.levels.weight(&self.grid);
        w * self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a.conj() * b).re).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest |coeff(−k) − conj(coeff(k))|.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.grid.nx {
            let mk = (self.grid.nx - k) % self.grid.nx;
            for j in 0..self.n_levels() {
                worst = worst.max((self.get(mk, j) - self.get(k, j).conj()).norm());
            }
        }
        worst
    }

    /// Largest coefficient magnitude in the k = 0 column.
    pub fn mean_magnitude(&self) -> f64 {
        self.mode(0).iter().fold(0.0f64, |m, c| m.max(c.norm()))
    }

    pub fn scaled(&self, alpha: f64) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= alpha);
        out
    }

    pub fn axpy(&mut self, alpha: f64, other: &SpectralField) {
        debug_assert!(self.grid == other.grid && self.levels == other.levels);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * alpha;
        }
    }

    /// Multiplies mode k by `m(k_index)`.
    pub fn map_modes(&self, mut m: impl FnMut(usize) -> Complex64) -> SpectralField {
        let mut out = self.clone();
        for k in 0..self.grid.nx {
            let factor = m(k);
            out.mode_mut(k).iter_mut().for_each(|c| *c *= factor);
        }
        out
    }

    /// ∂_x, exact in the Fourier variable.
    pub fn dx(&self) -> SpectralField {
        let g = self.grid;
        self.map_modes(|k| Complex64::new(0.0, g.wavenumber(k)))
    }

    /// ∂_y as forward differences at the ny+1 midpoints, walls taken as zero.
    pub fn dy(&self) -> Result<SpectralField> {
        if self.levels != Levels::Nodes {
            return Err(Error::Usage("dy needs a node-level field".into()));
        }
        let ny = self.grid.ny;
        let inv_h = 1.0 / self.grid.dy();
        let zero = Complex64::new(0.0, 0.0);
        Ok(SpectralField::from_fn(self.grid, Levels::Midpoints, |k, m| {
            let col = self.mode(k);
            let upper = if m < ny { col[m] } else { zero };
            let lower = if m > 0 { col[m - 1] } else { zero };
            (upper - lower) * inv_h
        }))
    }

    /// ∂_y as centered differences at the nodes, walls taken as zero.
    pub fn dy_centered(&self) -> Result<SpectralField> {
        if self.levels != Levels::Nodes {
            return Err(Error::Usage("dy_centered needs a node-level field".into()));
        }
        let ny = self.grid.ny;
        let inv_2h = 0.5 / self.grid.dy();
        let zero = Complex64::new(0.0, 0.0);
        Ok(SpectralField::from_fn(self.grid, Levels::Nodes, |k, j| {
            let col = self.mode(k);
            let up = if j + 1 < ny { col[j + 1] } else { zero };
            let down = if j > 0 { col[j - 1] } else { zero };
            (up - down) * inv_2h
        }))
    }

    /// Zeroes the k = 0 column and the Nyquist column.
    pub fn project_zero_mean(&mut self) {
        let nyq = self.grid.nyquist();
        let zero = Complex64::new(0.0, 0.0);
        self.mode_mut(0).iter_mut().for_each(|c| *c = zero);
        self.mode_mut(nyq).iter_mut().for_each(|c| *c = zero);
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(rhs)
    }
}
