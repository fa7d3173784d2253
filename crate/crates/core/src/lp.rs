//! Horizontal Littlewood-Paley decomposition: the smooth partition of
//! unity, dyadic blocks, Bony's paraproduct split and Bernstein ratios.
//!
//! ψ is a smooth step equal to 1 on [0, 3/4] and 0 on [4/3, ∞), and
//! φ(z) = ψ(z/2) − ψ(z) is supported in [3/4, 8/3]. The partition identity
//! then telescopes exactly.

use crate::error::{Error, Result};
use crate::fft::dealiased_product;
use crate::field::SpectralField;
use crate::grid::GridSpec;
use num_complex::Complex64;

const STEP_LO: f64 = 0.75;
const STEP_HI: f64 = 4.0 / 3.0;

/// The smooth step ψ(|z|).
pub fn smooth_step(z: f64) -> f64 {
    let z = z.abs();
    if z <= STEP_LO {
        return 1.0;
    }
    if z >= STEP_HI {
        return 0.0;
    }
    let t = (z - STEP_LO) / (STEP_HI - STEP_LO);
    let rise = (-1.0 / t).exp();
    let fall = (-1.0 / (1.0 - t)).exp();
    fall / (rise + fall)
}

/// The dyadic bump φ(z) = ψ(z/2) − ψ(z).
pub fn bump(z: f64) -> f64 {
    smooth_step(0.5 * z) - smooth_step(z)
}

/// Default block range for a grid: q_min = −2, q_max = ⌈log2 k_max⌉ + 2.
pub fn default_q_range(grid: &GridSpec) -> (i32, i32) {
    (-2, grid.k_max().log2().ceil() as i32 + 2)
}

/// Tabulated cutoffs for every grid wavenumber.
#[derive(Debug, Clone)]
pub struct Partition {
    grid: GridSpec,
    q_min: i32,
    q_max: i32,
    low: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

pub fn build_partition(grid: &GridSpec, q_range: (i32, i32)) -> Result<Partition> {
    let (q_min, q_max) = q_range;
    if q_min > q_max {
        return Err(Error::Config(format!("empty q range [{q_min}, {q_max}]")));
    }
    for idx in 0..grid.nx {
        let k = grid.abs_wavenumber(idx);
        if k == 0.0 {
            continue;
        }
        // Σ_{q_min..=q_max} φ(2^{-q} k) = ψ(2^{-q_max-1} k) − ψ(2^{-q_min} k)
        if k * 2f64.powi(-q_max - 1) > STEP_LO || k * 2f64.powi(-q_min) < STEP_HI {
            return Err(Error::Config(format!(
                "q range [{q_min}, {q_max}] does not cover wavenumber {k}"
            )));
        }
    }
    let low = (0..grid.nx)
        .map(|idx| smooth_step(grid.abs_wavenumber(idx) * 2f64.powi(-q_min)))
        .collect();
    let weights = (q_min..=q_max)
        .map(|q| {
            (0..grid.nx)
                .map(|idx| {
                    let k = grid.abs_wavenumber(idx);
                    if k == 0.0 { 0.0 } else { bump(k * 2f64.powi(-q)) }
                })
                .collect()
        })
        .collect();
    Ok(Partition { grid: *grid, q_min, q_max, low, weights })
}

/// Partition over the default range.
pub fn default_partition(grid: &GridSpec) -> Result<Partition> {
    build_partition(grid, default_q_range(grid))
}

impl Partition {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn q_range(&self) -> (i32, i32) {
        (self.q_min, self.q_max)
    }

    pub fn qs(&self) -> impl Iterator<Item = i32> {
        self.q_min..=self.q_max
    }

    /// φ(2^{-q}|k|) for FFT index `idx`; zero outside the range.
    pub fn weight(&self, q: i32, idx: usize) -> f64 {
        if q < self.q_min || q > self.q_max {
            return 0.0;
        }
        self.weights[(q - self.q_min) as usize][idx]
    }

    pub fn weights(&self, q: i32) -> &[f64] {
        &self.weights[(q - self.q_min) as usize]
    }

    /// ψ(2^{-q_min}|k|), the multiplier of S_{q_min}.
    pub fn low_weight(&self, idx: usize) -> f64 {
        self.low[idx]
    }

    /// FFT indices on which block q is nonzero.
    pub fn support(&self, q: i32) -> Vec<usize> {
        (0..self.grid.nx).filter(|&i| self.weight(q, i) != 0.0).collect()
    }

    pub fn block(&self, f: &SpectralField, q: i32) -> SpectralField {
        f.map_modes(|idx| Complex64::new(self.weight(q, idx), 0.0))
    }

    pub fn low_part(&self, f: &SpectralField) -> SpectralField {
        f.map_modes(|idx| Complex64::new(self.low[idx], 0.0))
    }

    /// ‖Δ_q f‖_{L²} for every q in range, from per-mode energies.
    pub fn block_norms(&self, f: &SpectralField) -> Vec<f64> {
        self.block_norms_from_energies(&f.mode_energies())
    }

    pub fn block_norms_from_energies(&self, energies: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(energies).map(|(p, e)| p * p * e).sum::<f64>().sqrt())
            .collect()
    }

    /// Re⟨Δ_q f, Δ_q g⟩ for every q in range.
    pub fn block_inner(&self, f: &SpectralField, g: &SpectralField) -> Vec<f64> {
        let w = f.levels().weight(&self.grid);
        let per_mode: Vec<f64> = (0..self.grid.nx)
            .map(|k| {
                w * f.mode(k).iter().zip(g.mode(k)).map(|(a, b)| (a.conj() * b).re).sum::<f64>()
            })
            .collect();
        self.weights
            .iter()
            .map(|wq| wq.iter().zip(&per_mode).map(|(p, e)| p * p * e).sum())
            .collect()
    }
}

/// Blocks Δ_q f for q in the partition range plus the low part S_{q_min} f.
#[derive(Debug, Clone)]
pub struct DyadicLadder {
    pub q_min: i32,
    pub q_max: i32,
    pub blocks: Vec<SpectralField>,
    pub low_part: SpectralField,
}

impl DyadicLadder {
    pub fn block(&self, q: i32) -> Option<&SpectralField> {
        if q < self.q_min || q > self.q_max {
            None
        } else {
            Some(&self.blocks[(q - self.q_min) as usize])
        }
    }

    pub fn reconstruct(&self) -> SpectralField {
        let mut out = self.low_part.clone();
        for b in &self.blocks {
            out.axpy(1.0, b);
        }
        out
    }
}

pub fn dyadic_decompose(partition: &Partition, f: &SpectralField) -> DyadicLadder {
    let (q_min, q_max) = partition.q_range();
    DyadicLadder {
        q_min,
        q_max,
        blocks: partition.qs().map(|q| partition.block(f, q)).collect(),
        low_part: partition.low_part(f),
    }
}

#[derive(Debug, Clone)]
pub struct BonyParts {
    /// T_f g = Σ_q S_{q−1} f Δ_q g
    pub para_fg: SpectralField,
    /// T_g f = Σ_q S_{q−1} g Δ_q f
    pub para_gf: SpectralField,
    /// R(f, g) = Σ_q Δ̃_q f Δ_q g
    pub remainder: SpectralField,
}

impl BonyParts {
    pub fn sum(&self) -> SpectralField {
        let mut s = &self.para_fg + &self.para_gf;
        s.axpy(1.0, &self.remainder);
        s
    }
}

/// Extended ladder: the low part sits at position 0 (block q_min − 1).
fn extended(partition: &Partition, f: &SpectralField) -> Vec<SpectralField> {
    let ladder = dyadic_decompose(partition, f);
    let mut out = Vec::with_capacity(ladder.blocks.len() + 1);
    out.push(ladder.low_part);
    out.extend(ladder.blocks);
    out
}

fn paraproduct(low: &[SpectralField], high: &[SpectralField]) -> Result<SpectralField> {
    let mut acc = SpectralField::zeros(*low[0].grid(), low[0].levels());
    let mut partial = SpectralField::zeros(*low[0].grid(), low[0].levels());
    for i in 2..high.len() {
        // partial = S_{i-1} = Σ_{i' ≤ i-2}
        partial.axpy(1.0, &low[i - 2]);
        if high[i].max_abs() == 0.0 || partial.max_abs() == 0.0 {
            continue;
        }
        acc.axpy(1.0, &dealiased_product(&partial, &high[i])?);
    }
    Ok(acc)
}

pub fn bony_decompose(partition: &Partition, f: &SpectralField, g: &SpectralField) -> Result<BonyParts> {
    f.check_compatible(g)?;
    if f.grid() != partition.grid() {
        return Err(Error::Usage("partition built for a different grid".into()));
    }
    let ef = extended(partition, f);
    let eg = extended(partition, g);
    let para_fg = paraproduct(&ef, &eg)?;
    let para_gf = paraproduct(&eg, &ef)?;
    let mut remainder = SpectralField::zeros(*f.grid(), f.levels());
    let n = ef.len();
    for i in 0..n {
        if eg[i].max_abs() == 0.0 {
            continue;
        }
        let mut near = ef[i].clone();
        if i > 0 {
            near.axpy(1.0, &ef[i - 1]);
        }
        if i + 1 < n {
            near.axpy(1.0, &ef[i + 1]);
        }
        if near.max_abs() == 0.0 {
            continue;
        }
        remainder.axpy(1.0, &dealiased_product(&near, &eg[i])?);
    }
    Ok(BonyParts { para_fg, para_gf, remainder })
}

pub const BERNSTEIN_CONSTANT: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinReport {
    pub q: i32,
    /// ‖∂_x Δ_q f‖ / (2^q ‖Δ_q f‖)
    pub derivative_ratio: f64,
    /// ‖Δ_q f‖_{L^∞_h(L²_v)} / (2^{q/2} ‖Δ_q f‖)
    pub sup_ratio: f64,
    pub constant: f64,
}

impl BernsteinReport {
    pub fn within(&self) -> bool {
        let lo = 1.0 / self.constant;
        let hi = self.constant;
        (lo..=hi).contains(&self.derivative_ratio) && (lo..=hi).contains(&self.sup_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BernsteinOutcome {
    Vacuous,
    Ratios(BernsteinReport),
}

/// Applies Δ_q to `f` and reports both Bernstein ratios.
pub fn bernstein_check(partition: &Partition, f: &SpectralField, q: i32) -> BernsteinOutcome {
    let block = partition.block(f, q);
    let norm = block.l2_norm();
    if norm == 0.0 {
        return BernsteinOutcome::Vacuous;
    }
    let scale = 2f64.powi(q);
    let derivative_ratio = block.dx().l2_norm() / (scale * norm);
    let rows = crate::fft::synthesize(&block);
    let w = block.levels().weight(block.grid());
    let nx = block.grid().nx;
    let sup = (0..nx)
        .map(|i| rows.iter().map(|r| w * r[i].norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    BernsteinOutcome::Ratios(BernsteinReport {
        q,
        derivative_ratio,
        sup_ratio: sup / (scale.sqrt() * norm),
        constant: BERNSTEIN_CONSTANT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Levels;

    // Independent evaluation of the step through the logistic form
    // ψ = 1 / (1 + exp(1/(1−t) − 1/t)).
    fn psi_oracle(z: f64) -> f64 {
        if z <= 0.75 {
            1.0
        } else if z >= 4.0 / 3.0 {
            0.0
        } else {
            let t = (z - 0.75) / (4.0 / 3.0 - 0.75);
            1.0 / (1.0 + (1.0 / (1.0 - t) - 1.0 / t).exp())
        }
    }

    fn grid() -> GridSpec {
        GridSpec::periodic(64, 6).unwrap()
    }

    #[test]
    fn bump_matches_logistic_oracle() {
        for q in -2..=3 {
            let z = 2.0 * 2f64.powi(-q);
            let oracle = psi_oracle(z / 2.0) - psi_oracle(z);
            assert!((bump(z) - oracle).abs() < 1e-14, "q={q}");
        }
        // |k| = 2: only q = 0 (z = 2) and q = 1 (z = 1) touch the support
        assert!((bump(2.0) + bump(1.0) - 1.0).abs() < 1e-14);
        assert!(bump(1.0) > 0.0 && bump(2.0) > 0.0);
    }

    #[test]
    fn step_is_monotone_and_bounded() {
        let mut prev = 1.0;
        for i in 0..=400 {
            let z = i as f64 * 0.005;
            let s = smooth_step(z);
            assert!((0.0..=1.0).contains(&s));
            assert!(s <= prev + 1e-15);
            prev = s;
        }
    }

    #[test]
    fn narrow_range_names_missing_wavenumber() {
        let err = build_partition(&grid(), (0, 2)).unwrap_err().to_string();
        assert!(err.contains("does not cover wavenumber 1"), "{err}");
    }

    #[test]
    fn unit_wavenumber_lives_in_two_blocks() {
        let p = default_partition(&grid()).unwrap();
        for q in p.qs() {
            if p.weight(q, 1) != 0.0 {
                assert!(q == -1 || q == 0);
            }
        }
    }

    #[test]
    fn single_mode_three_sits_in_block_one() {
        let g = grid();
        let p = default_partition(&g).unwrap();
        let f = SpectralField::from_fn(g, Levels::Nodes, |k, _| {
            if k == 3 { Complex64::new(2.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        let ladder = dyadic_decompose(&p, &f);
        let mut total = 0.0;
        for q in p.qs() {
            let amp = ladder.block(q).unwrap().get(3, 0).re;
            let expected = 2.0 * (psi_oracle(3.0 * 2f64.powi(-q - 1)) - psi_oracle(3.0 * 2f64.powi(-q)));
            assert!((amp - expected).abs() < 1e-14);
            if amp != 0.0 {
                assert!(q == 1 || q == 2);
            }
            total += amp;
        }
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_field_gives_zero_ladder_and_vacuous_bernstein() {
        let g = grid();
        let p = default_partition(&g).unwrap();
        let f = SpectralField::zeros(g, Levels::Nodes);
        let ladder = dyadic_decompose(&p, &f);
        assert!(ladder.blocks.iter().all(|b| b.max_abs() == 0.0));
        assert_eq!(ladder.low_part.max_abs(), 0.0);
        assert_eq!(bernstein_check(&p, &f, 2), BernsteinOutcome::Vacuous);
        let parts = bony_decompose(&p, &f, &f).unwrap();
        assert_eq!(parts.sum().max_abs(), 0.0);
    }

    #[test]
    fn bony_on_mode_four_matches_convolution() {
        let g = grid();
        let p = default_partition(&g).unwrap();
        let f = SpectralField::from_fn(g, Levels::Single, |k, _| match g.signed_index(k) {
            4 | -4 => Complex64::new(0.5, 0.0),
            _ => Complex64::new(0.0, 0.0),
        });
        let parts = bony_decompose(&p, &f, &f).unwrap();
        let s = parts.sum();
        // cos²(4x) = 1/2 + cos(8x)/2: coefficient 1/4 at ±8 and 1/2 at 0
        assert!((s.get(8, 0).re - 0.25).abs() < 1e-14);
        assert!((s.get(g.index_of(-8), 0).re - 0.25).abs() < 1e-14);
        assert!((s.get(0, 0).re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn single_mode_derivative_ratio() {
        let g = grid();
        let p = default_partition(&g).unwrap();
        let f = SpectralField::from_fn(g, Levels::Nodes, |k, _| {
            if k == 8 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        match bernstein_check(&p, &f, 3) {
            BernsteinOutcome::Ratios(r) => {
                assert!((r.derivative_ratio - 1.0).abs() < 1e-14);
                assert!(r.within());
            }
            BernsteinOutcome::Vacuous => panic!("block 3 holds |k| = 8"),
        }
    }
}
