//! Weighted quadratic terms (f g)_φ evaluated as a truncated spectral
//! convolution whose kernel carries the analytic weights:
//!
//! (f g)_φ(k) = Σ_{k1} e^{r(|k| − |k1| − |k − k1|)} f_φ(k1) g_φ(k − k1).
//!
//! The kernel never exceeds 1, so no e^{r k_max} factor multiplies roundoff.
//! In exact arithmetic this equals unweight, de-aliased product, reweight.

use crate::error::{Error, Result};
use crate::field::{Levels, SpectralField};
use crate::grid::GridSpec;
use crate::vertical::{vertical_mean, wall_traces};
use num_complex::Complex64;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct ConvolutionKernel {
    grid: GridSpec,
    radius: f64,
    /// decay[n] = e^{-r·base·n}
    decay: Vec<f64>,
}

impl ConvolutionKernel {
    pub fn new(grid: GridSpec, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::Validation(format!("kernel radius must be nonnegative, got {radius}")));
        }
        let base = grid.base_wavenumber();
        let decay = (0..=grid.nx).map(|n| (-radius * base * n as f64).exp()).collect();
        Ok(Self { grid, radius, decay })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Weighted product of two weighted fields on the same levels. Inputs and
    /// output are truncated to |m| ≤ nx/2 − 1.
    pub fn product(&self, f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
        f.check_compatible(g)?;
        if *f.grid() != self.grid {
            return Err(Error::Usage("kernel built for a different grid".into()));
        }
        let grid = self.grid;
        let nl = f.n_levels();
        let half = (grid.nx / 2) as i64;
        let active = |field: &SpectralField| -> Vec<i64> {
            (1 - half..half)
                .filter(|&m| field.mode(grid.index_of(m)).iter().any(|c| c.re != 0.0 || c.im != 0.0))
                .collect()
        };
        let fa = active(f);
        let ga: Vec<bool> = (0..grid.nx)
            .map(|k| g.mode(k).iter().any(|c| c.re != 0.0 || c.im != 0.0))
            .collect();
        let rows: Vec<(usize, Vec<Complex64>)> = (1 - half..half)
            .into_par_iter()
            .map(|m| {
                let mut acc = vec![Complex64::new(0.0, 0.0); nl];
                for &m1 in &fa {
                    let m2 = m - m1;
                    if m2.abs() >= half {
                        continue;
                    }
                    let k2 = grid.index_of(m2);
                    if !ga[k2] {
                        continue;
                    }
                    let w = self.decay[(m1.abs() + m2.abs() - m.abs()) as usize];
                    let a = f.mode(grid.index_of(m1));
                    let b = g.mode(k2);
                    for ((o, x), y) in acc.iter_mut().zip(a).zip(b) {
                        *o += x * y * w;
                    }
                }
                (grid.index_of(m), acc)
            })
            .collect();
        let mut out = SpectralField::zeros(grid, f.levels());
        for (k, acc) in rows {
            out.mode_mut(k).copy_from_slice(&acc);
        }
        Ok(out)
    }
}

/// The individual quadratic terms of both systems, as weighted fields.
/// Names read "<advecting><derivative><advected>", e.g. `v_dy_u` = v ∂_y u.
#[derive(Debug, Clone)]
pub struct Products {
    pub u_dx_u: SpectralField,
    pub v_dy_u: SpectralField,
    pub b_dx_b: SpectralField,
    pub c_dy_b: SpectralField,
    pub u_dx_b: SpectralField,
    pub v_dy_b: SpectralField,
    pub b_dx_u: SpectralField,
    pub c_dy_u: SpectralField,
    /// Terms of the v- and c-equations; present for the scaled system.
    pub vertical: Option<VerticalProducts>,
}

#[derive(Debug, Clone)]
pub struct VerticalProducts {
    pub u_dx_v: SpectralField,
    pub v_dy_v: SpectralField,
    pub b_dx_c: SpectralField,
    pub c_dy_c: SpectralField,
    pub u_dx_c: SpectralField,
    pub v_dy_c: SpectralField,
    pub b_dx_v: SpectralField,
    pub c_dy_v: SpectralField,
}

/// Right-hand sides assembled from [`Products`]; the k = 0 column is removed.
#[derive(Debug, Clone)]
pub struct Nonlinear {
    pub u: SpectralField,
    pub b: SpectralField,
    pub v: Option<SpectralField>,
    pub c: Option<SpectralField>,
}

fn strip_mean(mut f: SpectralField) -> SpectralField {
    f.project_zero_mean();
    f
}

impl Products {
    /// Evaluates every term from weighted (u, v, b, c); products with a zero
    /// factor are skipped cheaply.
    pub fn compute(
        kernel: &ConvolutionKernel,
        u: &SpectralField,
        v: &SpectralField,
        b: &SpectralField,
        c: &SpectralField,
        with_vertical: bool,
    ) -> Result<Self> {
        let (ux, uy) = (u.dx(), u.dy_centered()?);
        let (bx, by) = (b.dx(), b.dy_centered()?);
        let k = |x: &SpectralField, y: &SpectralField| kernel.product(x, y).map(strip_mean);
        let vertical = if with_vertical {
            let (vx, vy) = (v.dx(), v.dy_centered()?);
            let (cx, cy) = (c.dx(), c.dy_centered()?);
            Some(VerticalProducts {
                u_dx_v: k(u, &vx)?,
                v_dy_v: k(v, &vy)?,
                b_dx_c: k(b, &cx)?,
                c_dy_c: k(c, &cy)?,
                u_dx_c: k(u, &cx)?,
                v_dy_c: k(v, &cy)?,
                b_dx_v: k(b, &vx)?,
                c_dy_v: k(c, &vy)?,
            })
        } else {
            None
        };
        Ok(Self {
            u_dx_u: k(u, &ux)?,
            v_dy_u: k(v, &uy)?,
            b_dx_b: k(b, &bx)?,
            c_dy_b: k(c, &by)?,
            u_dx_b: k(u, &bx)?,
            v_dy_b: k(v, &by)?,
            b_dx_u: k(b, &ux)?,
            c_dy_u: k(c, &uy)?,
            vertical,
        })
    }

    pub fn assemble(&self) -> Nonlinear {
        let combine = |neg: [&SpectralField; 2], pos: [&SpectralField; 2]| {
            let mut out = pos[0] + pos[1];
            out.axpy(-1.0, neg[0]);
            out.axpy(-1.0, neg[1]);
            out
        };
        let (v, c) = match &self.vertical {
            Some(w) => (
                Some(combine([&w.u_dx_v, &w.v_dy_v], [&w.b_dx_c, &w.c_dy_c])),
                Some(combine([&w.u_dx_c, &w.v_dy_c], [&w.b_dx_v, &w.c_dy_v])),
            ),
            None => (None, None),
        };
        Nonlinear {
            u: combine([&self.u_dx_u, &self.v_dy_u], [&self.b_dx_b, &self.c_dy_b]),
            b: combine([&self.u_dx_b, &self.v_dy_b], [&self.b_dx_u, &self.c_dy_u]),
            v,
            c,
        }
    }
}

impl Nonlinear {
    pub fn zeros(grid: GridSpec, with_vertical: bool) -> Self {
        let z = SpectralField::zeros(grid, Levels::Nodes);
        Self {
            u: z.clone(),
            b: z.clone(),
            v: with_vertical.then(|| z.clone()),
            c: with_vertical.then(|| z),
        }
    }

    /// Nonlinear terms of a weighted state at kernel radius; `magnetic`
    /// false skips every product involving (b, c).
    pub fn evaluate(
        kernel: &ConvolutionKernel,
        u: &SpectralField,
        v: &SpectralField,
        b: &SpectralField,
        c: &SpectralField,
        with_vertical: bool,
    ) -> Result<Self> {
        Ok(Products::compute(kernel, u, v, b, c, with_vertical)?.assemble())
    }

    /// Multiplies every component by the same per-mode factor.
    pub fn map_modes(&self, m: impl Fn(usize) -> Complex64 + Copy) -> Self {
        Self {
            u: self.u.map_modes(m),
            b: self.b.map_modes(m),
            v: self.v.as_ref().map(|f| f.map_modes(m)),
            c: self.c.as_ref().map(|f| f.map_modes(m)),
        }
    }

    /// α·self + β·other.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        let mix = |a: &SpectralField, b: &SpectralField| {
            let mut out = a.scaled(alpha);
            out.axpy(beta, b);
            out
        };
        let mix_opt = |a: &Option<SpectralField>, b: &Option<SpectralField>| match (a, b) {
            (Some(x), Some(y)) => Some(mix(x, y)),
            (Some(x), None) => Some(x.scaled(alpha)),
            (None, Some(y)) => Some(y.scaled(beta)),
            (None, None) => None,
        };
        Self {
            u: mix(&self.u, &other.u),
            b: mix(&self.b, &other.b),
            v: mix_opt(&self.v, &other.v),
            c: mix_opt(&self.c, &other.c),
        }
    }
}

/// (∂_x p)_φ of the hydrostatic pressure formula evaluated on weighted fields.
pub fn pressure_gradient_weighted(
    kernel: &ConvolutionKernel,
    u_phi: &SpectralField,
    b_phi: &SpectralField,
) -> Result<SpectralField> {
    let (bottom, top) = wall_traces(u_phi)?;
    let uu = vertical_mean(&kernel.product(u_phi, u_phi)?)?;
    let bb = vertical_mean(&kernel.product(b_phi, b_phi)?)?;
    let mut out = &top - &bottom;
    out.axpy(-1.0, &uu.dx());
    out.axpy(1.0, &bb.dx());
    out.project_zero_mean();
    Ok(out)
}

/// Unweighted forcing of a manufactured solution, sampled at time t.
pub trait Forcing: Send + Sync {
    /// Returns (f_u, f_v, f_b, f_c); f_v and f_c are ignored by the limit system.
    fn evaluate(&self, grid: &GridSpec, t: f64) -> Result<[SpectralField; 4]>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyticity::apply_weight;
    use crate::fft::dealiased_product;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: GridSpec, rng: &mut ChaCha8Rng) -> SpectralField {
        let mut f = SpectralField::from_fn(g, Levels::Nodes, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        f.project_zero_mean();
        f
    }

    #[test]
    fn zero_radius_kernel_equals_dealiased_product() {
        let g = GridSpec::periodic(32, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (f, h) = (random_field(g, &mut rng), random_field(g, &mut rng));
        let k = ConvolutionKernel::new(g, 0.0).unwrap();
        let direct = k.product(&f, &h).unwrap();
        let fft = dealiased_product(&f, &h).unwrap();
        assert!((&direct - &fft).max_abs() < 1e-12);
    }

    #[test]
    fn weighted_kernel_matches_unweight_product_reweight() {
        let g = GridSpec::periodic(32, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (f, h) = (random_field(g, &mut rng), random_field(g, &mut rng));
        let r = 0.2;
        let k = ConvolutionKernel::new(g, r).unwrap();
        let direct = k.product(&f, &h).unwrap();
        let raw = dealiased_product(&apply_weight(&f, r, -1.0).unwrap(), &apply_weight(&h, r, -1.0).unwrap()).unwrap();
        let route = apply_weight(&raw, r, 1.0).unwrap();
        assert!((&direct - &route).max_abs() < 1e-10 * route.max_abs());
    }
}
