//! Wall-normal operations: vertical integration, divergence residuals,
//! vertical means, wall traces and the hydrostatic pressure formula.

use crate::error::{Error, Result};
use crate::fft::dealiased_product;
use crate::field::{Levels, SpectralField};
use num_complex::Complex64;

/// Tolerance of the compatibility and divergence checks, relative to the
/// size of ∂_x of the input.
pub const TOL_DIV: f64 = 1e-10;

/// (C f)_j = ∫_0^{y_j} f dy by the trapezoid rule with the zero wall value.
pub fn cumulative_trapezoid(col: &[Complex64], h: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(col.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for &x in col {
        out.push((acc + x * 0.5) * h);
        acc += x;
    }
    out
}

/// ∫_0^1 f dy per mode (trapezoid with zero walls), as a single row.
pub fn vertical_mean(f: &SpectralField) -> Result<SpectralField> {
    if f.levels() != Levels::Nodes {
        return Err(Error::Usage("vertical_mean needs a node-level field".into()));
    }
    let h = f.grid().dy();
    Ok(SpectralField::from_fn(*f.grid(), Levels::Single, |k, _| {
        f.mode(k).iter().sum::<Complex64>() * h
    }))
}

/// Vertical velocity from the divergence constraint, −∫_0^y ∂_x f.
pub fn recover_vertical(f: &SpectralField) -> Result<SpectralField> {
    if f.levels() != Levels::Nodes {
        return Err(Error::Usage("vertical recovery needs a node-level field".into()));
    }
    let g = *f.grid();
    let h = g.dy();
    let mut out = SpectralField::zeros(g, Levels::Nodes);
    let mut top: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..g.nx {
        let ik = Complex64::new(0.0, g.wavenumber(k));
        let cum = cumulative_trapezoid(f.mode(k), h);
        let total: Complex64 = f.mode(k).iter().sum::<Complex64>() * h;
        top = top.max((ik * total).norm());
        scale = scale.max(g.abs_wavenumber(k) * f.mode(k).iter().fold(0.0f64, |m, c| m.max(c.norm())));
        for (o, c) in out.mode_mut(k).iter_mut().zip(cum) {
            *o = -ik * c;
        }
    }
    if top > TOL_DIV * scale.max(1.0) {
        return Err(Error::Validation(format!(
            "compatibility violated: |v(., 1)| = {top:e} (vertical mean of the input is not zero)"
        )));
    }
    Ok(out)
}

/// Velocity recovery (vv).
pub fn recover_v(u: &SpectralField) -> Result<SpectralField> {
    recover_vertical(u)
}

/// Magnetic recovery, same integral as [`recover_v`].
pub fn recover_c(b: &SpectralField) -> Result<SpectralField> {
    recover_vertical(b)
}

/// ∂_x f + ∂_y g at the midpoints, with walls taken as zero.
pub fn divergence(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    f.check_compatible(g)?;
    if f.levels() != Levels::Nodes {
        return Err(Error::Usage("divergence needs node-level fields".into()));
    }
    let grid = *f.grid();
    let ny = grid.ny;
    let h = grid.dy();
    let zero = Complex64::new(0.0, 0.0);
    Ok(SpectralField::from_fn(grid, Levels::Midpoints, |k, m| {
        let ik = Complex64::new(0.0, grid.wavenumber(k));
        let (fc, gc) = (f.mode(k), g.mode(k));
        let up = |c: &[Complex64]| if m < ny { c[m] } else { zero };
        let down = |c: &[Complex64]| if m > 0 { c[m - 1] } else { zero };
        (up(gc) - down(gc)) / h + ik * (up(fc) + down(fc)) * 0.5
    }))
}

/// L² norm of ∂_x f + ∂_y g.
pub fn divergence_residual(f: &SpectralField, g: &SpectralField) -> Result<f64> {
    Ok(divergence(f, g)?.l2_norm())
}

/// Second-order one-sided ∂_y at y = 0 and y = 1.
pub fn wall_traces(f: &SpectralField) -> Result<(SpectralField, SpectralField)> {
    if f.levels() != Levels::Nodes || f.grid().ny < 4 {
        return Err(Error::Usage("wall traces need a node-level field with ny >= 4".into()));
    }
    let g = *f.grid();
    let n = g.ny;
    let inv = 0.5 / g.dy();
    let bottom = SpectralField::from_fn(g, Levels::Single, |k, _| {
        let c = f.mode(k);
        (c[0] * 4.0 - c[1]) * inv
    });
    let top = SpectralField::from_fn(g, Levels::Single, |k, _| {
        let c = f.mode(k);
        (c[n - 2] - c[n - 1] * 4.0) * inv
    });
    Ok((bottom, top))
}

/// ∂_x p of the hydrostatic system from unweighted u, b:
/// ∂_y u(1) − ∂_y u(0) − ∂_x ∫u² + ∂_x ∫b², with the k = 0 mode set to 0.
pub fn pressure_gradient(u: &SpectralField, b: &SpectralField) -> Result<SpectralField> {
    u.check_compatible(b)?;
    let (bottom, top) = wall_traces(u)?;
    let uu = vertical_mean(&dealiased_product(u, u)?)?;
    let bb = vertical_mean(&dealiased_product(b, b)?)?;
    let mut out = &top - &bottom;
    out.axpy(-1.0, &uu.dx());
    out.axpy(1.0, &bb.dx());
    out.set(0, 0, Complex64::new(0.0, 0.0));
    Ok(out)
}

/// p from ∂_x p by division by ik; k = 0 gauge 0.
pub fn pressure_from_gradient(dpdx: &SpectralField) -> SpectralField {
    let g = *dpdx.grid();
    dpdx.map_modes(|k| {
        let w = g.wavenumber(k);
        if w == 0.0 { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, -1.0 / w) }
    })
}
