//! Horizontal transforms between coefficients and physical samples, and
//! the 3/2-rule de-aliased product.

use crate::error::Result;
use crate::field::{Levels, SpectralField};
use crate::grid::GridSpec;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::{Arc, Mutex, OnceLock};

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

pub fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().expect("fft planner poisoned");
    if forward {
        p.plan_fft_forward(len)
    } else {
        p.plan_fft_inverse(len)
    }
}

/// Physical samples per level: `out[j][i] = Σ_k f̂_kj e^{i k x_i}`.
pub fn synthesize(f: &SpectralField) -> Vec<Vec<Complex64>> {
    let nx = f.grid().nx;
    let inv = plan(nx, false);
    (0..f.n_levels())
        .map(|j| {
            let mut row: Vec<Complex64> = (0..nx).map(|k| f.get(k, j)).collect();
            inv.process(&mut row);
            row
        })
        .collect()
}

pub fn to_physical_real(f: &SpectralField) -> Vec<Vec<f64>> {
    synthesize(f).into_iter().map(|row| row.into_iter().map(|c| c.re).collect()).collect()
}

/// Inverse of [`synthesize`].
pub fn analyze(grid: GridSpec, levels: Levels, rows: &[Vec<Complex64>]) -> SpectralField {
    let nx = grid.nx;
    let fwd = plan(nx, true);
    let scale = 1.0 / nx as f64;
    let mut out = SpectralField::zeros(grid, levels);
    for (j, row) in rows.iter().enumerate() {
        let mut buf = row.clone();
        fwd.process(&mut buf);
        for (k, c) in buf.into_iter().enumerate() {
            out.set(k, j, c * scale);
        }
    }
    out
}

pub fn from_physical_real(grid: GridSpec, levels: Levels, rows: &[Vec<f64>]) -> SpectralField {
    let rows: Vec<Vec<Complex64>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
        .collect();
    analyze(grid, levels, &rows)
}

/// Pointwise product level by level with 3/2 zero padding. Inputs are
/// truncated to |m| ≤ nx/2 − 1; the output Nyquist column is zero, and
/// every retained output mode is alias-free.
pub fn dealiased_product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    f.check_compatible(g)?;
    let grid = *f.grid();
    let nx = grid.nx;
    let big = 3 * nx / 2;
    let inv = plan(big, false);
    let fwd = plan(big, true);
    let half = (nx / 2) as i64;
    let scale = 1.0 / big as f64;
    let pad = |field: &SpectralField, j: usize| {
        let mut buf = vec![Complex64::new(0.0, 0.0); big];
        for k in 0..nx {
            let m = grid.signed_index(k);
            if m.abs() < half {
                buf[m.rem_euclid(big as i64) as usize] = field.get(k, j);
            }
        }
        buf
    };
    let rows: Vec<Vec<Complex64>> = (0..f.n_levels())
        .into_par_iter()
        .map(|j| {
            let mut a = pad(f, j);
            let mut b = pad(g, j);
            inv.process(&mut a);
            inv.process(&mut b);
            for (x, y) in a.iter_mut().zip(&b) {
                *x *= y;
            }
            fwd.process(&mut a);
            (0..nx)
                .map(|k| {
                    let m = grid.signed_index(k);
                    if m.abs() < half {
                        a[m.rem_euclid(big as i64) as usize] * scale
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect()
        })
        .collect();
    let mut out = SpectralField::zeros(grid, f.levels());
    for (j, row) in rows.into_iter().enumerate() {
        for (k, c) in row.into_iter().enumerate() {
            out.set(k, j, c);
        }
    }
    Ok(out)
}
