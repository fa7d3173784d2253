//! Energy budgets per dyadic block, monitored a priori bounds, calibration of
//! the product constant, and empirical trilinear constants.

use crate::besov::{BlockSeries, TimeExponent};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::imex::second_difference;
use crate::lp::{default_partition, Partition};
use crate::nonlinear::{ConvolutionKernel, Products};
use crate::record::{RunRecord, Snapshot};
use crate::state::MhdState;
use crate::vertical::cumulative_trapezoid;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Default budget tolerance relative to the largest term.
pub const BUDGET_TOL: f64 = 1e-6;
/// Smallest corpus accepted by [`calibrate_constant`].
pub const MIN_CORPUS: usize = 3;
/// Safety factor applied to the largest observed ratio.
pub const CALIBRATION_FACTOR: f64 = 1.5;

fn dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
}

fn norm2(a: &[Complex64]) -> f64 {
    dot(a, a)
}

/// −ik C x, the vertical companion of a mode column.
fn companion(x: &[Complex64], k: f64, h: f64) -> Vec<Complex64> {
    cumulative_trapezoid(x, h).into_iter().map(|c| c * Complex64::new(0.0, -k)).collect()
}

/// Flux names of the limit (I, D) and scaled (F) budgets.
pub fn flux_names(scaled: bool) -> Vec<&'static str> {
    if scaled {
        vec!["F1", "F2", "F3", "F4", "F5", "F6"]
    } else {
        vec!["I1", "I2", "I3", "I4", "D1", "D2", "D3", "D4"]
    }
}

/// One term of the explicit right side: the field, its sign, the equation
/// it enters (0: u, 1: v, 2: b, 3: c) and the flux it is attributed to.
struct Term<'a> {
    field: &'a SpectralField,
    sign: f64,
    equation: usize,
    flux: usize,
}

fn terms(p: &Products, scaled: bool) -> Vec<Term<'_>> {
    let t = |field, sign, equation, flux| Term { field, sign, equation, flux };
    if !scaled {
        return vec![
            t(&p.u_dx_u, -1.0, 0, 0),
            t(&p.v_dy_u, -1.0, 0, 1),
            t(&p.b_dx_b, 1.0, 0, 2),
            t(&p.c_dy_b, 1.0, 0, 3),
            t(&p.u_dx_b, -1.0, 2, 4),
            t(&p.v_dy_b, -1.0, 2, 5),
            t(&p.b_dx_u, 1.0, 2, 6),
            t(&p.c_dy_u, 1.0, 2, 7),
        ];
    }
    let w = p.vertical.as_ref().expect("scaled products carry vertical terms");
    vec![
        t(&p.u_dx_u, -1.0, 0, 0),
        t(&p.v_dy_u, -1.0, 0, 0),
        t(&w.u_dx_v, -1.0, 1, 1),
        t(&w.v_dy_v, -1.0, 1, 1),
        t(&p.b_dx_b, 1.0, 0, 2),
        t(&p.c_dy_b, 1.0, 0, 2),
        t(&w.b_dx_c, 1.0, 1, 3),
        t(&w.c_dy_c, 1.0, 1, 3),
        t(&p.u_dx_b, -1.0, 2, 4),
        t(&p.v_dy_b, -1.0, 2, 4),
        t(&p.b_dx_u, 1.0, 2, 4),
        t(&p.c_dy_u, 1.0, 2, 4),
        t(&w.u_dx_c, -1.0, 3, 5),
        t(&w.v_dy_c, -1.0, 3, 5),
        t(&w.b_dx_v, 1.0, 3, 5),
        t(&w.c_dy_v, 1.0, 3, 5),
    ]
}

/// Per-step, per-mode contributions to the discrete energy identity
///
/// E(u^{n+1}) − E(u^n) + ½(1 − e²)⟨X, MX⟩ − dt⟨w, Kw⟩ = dt Re⟨w, N*⟩,
///
/// where X is the implicit solution before the damping factor e, w the CN
/// average and E = ½⟨·, M·⟩ the energy ½(‖u‖² + ε²‖v‖²) of each pair.
pub struct BudgetTable {
    pub scaled: bool,
    pub dt: f64,
    pub flux_names: Vec<&'static str>,
    /// [step][mode] rows, each with (ddt, damping, dissipation, pressure, fluxes…).
    rows: Vec<Vec<Vec<f64>>>,
    partition: Partition,
}

const N_FIXED: usize = 4;

impl BudgetTable {
    /// Needs every step retained; errors with the required cadence otherwise.
    pub fn build(record: &RunRecord) -> Result<Self> {
        let s = &record.settings;
        let steps = record.steps_taken();
        if record.cadence() != Some(1) || record.snapshots.len() != steps + 1 {
            return Err(Error::Cadence { cadence: 1 });
        }
        let grid = s.grid;
        let scaled = s.epsilon.is_some();
        let e2 = s.epsilon_or_zero().powi(2);
        let partition = default_partition(&grid)?;
        let names = flux_names(scaled);
        let nflux = names.len();
        let h = grid.dy();
        let mut rows = Vec::with_capacity(steps);
        let mut prev: Option<Products> = None;
        for n in 0..steps {
            let (now, next) = (&record.snapshots[n], &record.snapshots[n + 1]);
            let radius = s.a - s.lambda * now.theta;
            let products = if s.nonlinear { Some(snapshot_products(s, now, radius)?) } else { None };
            let inc = record.increment(n + 1);
            let prev_inc = record.increment(n);
            let mut per_mode = vec![vec![0.0; N_FIXED + nflux]; grid.nx];
            for k in 0..grid.nx {
                let kw = grid.wavenumber(k);
                if kw == 0.0 || !grid.is_retained(k) {
                    continue;
                }
                let e = (-s.lambda * inc * kw.abs()).exp();
                let e_prev = (-s.lambda * prev_inc * kw.abs()).exp();
                let row = &mut per_mode[k];
                for (pair, (old, new)) in [(&now.state.u, &next.state.u), (&now.state.b, &next.state.b)].into_iter().enumerate() {
                    let x: Vec<Complex64> = new.mode(k).iter().map(|c| c / e).collect();
                    let u0 = old.mode(k);
                    let w: Vec<Complex64> = x.iter().zip(u0).map(|(a, b)| (a + b) * 0.5).collect();
                    let energy = |f: &[Complex64]| {
                        let mut en = norm2(f);
                        if scaled {
                            en += e2 * norm2(&companion(f, kw, h));
                        }
                        0.5 * h * en
                    };
                    let stiff = |f: &[Complex64]| {
                        let l = |g: &[Complex64]| dot(g, &second_difference(g, h)) - e2 * kw * kw * norm2(g);
                        let mut q = l(f);
                        if scaled {
                            q += e2 * l(&companion(f, kw, h));
                        }
                        h * q
                    };
                    let ex = energy(&x);
                    row[0] += e * e * ex - energy(u0);
                    row[1] += (1.0 - e * e) * ex;
                    row[2] += -s.dt * stiff(&w);
                    if let Some(p) = &products {
                        let wv = companion(&w, kw, h);
                        for term in terms(p, scaled) {
                            if term.equation % 2 != 0 && !scaled {
                                continue;
                            }
                            if term.equation / 2 != pair {
                                continue;
                            }
                            let mut star: Vec<Complex64> = term.field.mode(k).iter().map(|c| c * term.sign).collect();
                            if let Some(pp) = &prev {
                                let old_terms = terms(pp, scaled);
                                let old = old_terms
                                    .iter()
                                    .find(|t| std::ptr::eq(t.field, field_of(pp, term.field, p)))
                                    .map(|t| t.field);
                                if let Some(of) = old {
                                    for (st, o) in star.iter_mut().zip(of.mode(k)) {
                                        *st = *st * 1.5 - o * (0.5 * e_prev * term.sign);
                                    }
                                }
                            }
                            let (target, factor) = if term.equation % 2 == 0 { (&w, 1.0) } else { (&wv, e2) };
                            row[N_FIXED + term.flux] += s.dt * h * factor * dot(target, &star);
                        }
                    }
                }
                // pressure work of the next state, paired in its own frame
                row[3] += s.dt * pressure_work(&next.state, k, h, scaled);
            }
            rows.push(per_mode);
            prev = products;
        }
        Ok(Self { scaled, dt: s.dt, flux_names: names, rows, partition })
    }

    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    /// Budget of block q (None: all modes) summed over steps [start, end).
    pub fn block(&self, q: Option<i32>, window: (usize, usize)) -> Result<EnergyBudget> {
        let (start, end) = window;
        if start >= end || end > self.rows.len() {
            return Err(Error::Range(format!("window {start}..{end} outside 0..{}", self.rows.len())));
        }
        if let Some(q) = q {
            let (lo, hi) = self.partition.q_range();
            if q < lo || q > hi {
                return Err(Error::Range(format!("block {q} outside {lo}..={hi}")));
            }
        }
        let width = N_FIXED + self.flux_names.len();
        let mut acc = vec![0.0; width];
        for row in &self.rows[start..end] {
            for (k, vals) in row.iter().enumerate() {
                let w = q.map_or(1.0, |q| self.partition.weight(q, k).powi(2));
                if w == 0.0 {
                    continue;
                }
                for (a, v) in acc.iter_mut().zip(vals) {
                    *a += w * v;
                }
            }
        }
        let mut terms = BTreeMap::new();
        terms.insert("ddt_energy".to_string(), acc[0]);
        terms.insert("damping".to_string(), acc[1]);
        terms.insert("dissipation".to_string(), acc[2]);
        let mut flux_sum = 0.0;
        for (i, name) in self.flux_names.iter().enumerate() {
            terms.insert(name.to_string(), acc[N_FIXED + i]);
            flux_sum += acc[N_FIXED + i];
        }
        let residual = acc[0] + acc[1] + acc[2] - flux_sum;
        let scale = terms.values().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(EnergyBudget { q, window, terms, residual, scale, pressure: acc[3] })
    }
}

/// Locates in `prev` the product that plays the role of `field` in `now`.
fn field_of<'a>(prev: &'a Products, field: &SpectralField, now: &Products) -> &'a SpectralField {
    let pairs_now = product_list(now);
    let pairs_prev = product_list(prev);
    let i = pairs_now.iter().position(|f| std::ptr::eq(*f, field)).expect("term of this product set");
    pairs_prev[i]
}

fn product_list(p: &Products) -> Vec<&SpectralField> {
    let mut v = vec![&p.u_dx_u, &p.v_dy_u, &p.b_dx_b, &p.c_dy_b, &p.u_dx_b, &p.v_dy_b, &p.b_dx_u, &p.c_dy_u];
    if let Some(w) = &p.vertical {
        v.extend([&w.u_dx_v, &w.v_dy_v, &w.b_dx_c, &w.c_dy_c, &w.u_dx_c, &w.v_dy_c, &w.b_dx_v, &w.c_dy_v]);
    }
    v
}

fn snapshot_products(s: &crate::record::RunSettings, snap: &Snapshot, radius: f64) -> Result<Products> {
    let kernel = ConvolutionKernel::new(s.grid, radius)?;
    let st = &snap.state;
    let scaled = s.epsilon.is_some();
    if s.magnetic {
        Products::compute(&kernel, &st.u, &st.v, &st.b, &st.c, scaled)
    } else {
        let z = SpectralField::zeros(s.grid, st.u.levels());
        Products::compute(&kernel, &st.u, &st.v, &z, &z, scaled)
    }
}

/// Re⟨∇p, (u, v)⟩ of one mode; for the limit system only ∂_x p enters.
fn pressure_work(state: &MhdState, k: usize, h: f64, scaled: bool) -> f64 {
    let g = state.grid();
    let ik = Complex64::new(0.0, g.wavenumber(k));
    let p = state.p.mode(k);
    let u = state.u.mode(k);
    if !scaled {
        let gx = ik * p[0];
        return h * u.iter().map(|x| (gx.conj() * x).re).sum::<f64>();
    }
    let v = state.v.mode(k);
    let mut total = 0.0;
    for j in 0..u.len() {
        let gx = ik * (p[j] + p[j + 1]) * 0.5;
        let gy = (p[j + 1] - p[j]) / h;
        total += (gx.conj() * u[j]).re + (gy.conj() * v[j]).re;
    }
    h * total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    /// Block index; `None` for the sum over all modes.
    pub q: Option<i32>,
    /// Steps [start, end).
    pub window: (usize, usize),
    pub terms: BTreeMap<String, f64>,
    pub residual: f64,
    /// Largest |term|.
    pub scale: f64,
    /// ∫ Re⟨Δ_q ∇p_φ, Δ_q (u_φ, v_φ)⟩ dt, reported separately.
    pub pressure: f64,
}

impl EnergyBudget {
    pub fn within(&self, tol: f64) -> bool {
        self.residual.abs() <= tol * self.scale
    }
}

/// Budget of block q over a window of steps.
pub fn block_budget(record: &RunRecord, q: Option<i32>, window: (usize, usize)) -> Result<EnergyBudget> {
    BudgetTable::build(record)?.block(q, window)
}

/// Outcome of a monitored inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub run_id: String,
    pub check: String,
    pub params: BTreeMap<String, f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl BoundReport {
    pub fn new(run_id: &str, check: &str, params: BTreeMap<String, f64>, lhs: f64, rhs: f64, constant: f64) -> Self {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self { run_id: run_id.into(), check: check.into(), params, lhs, rhs, ratio, pass: ratio <= constant }
    }
}

fn require_complete(record: &RunRecord) -> Result<()> {
    if !record.health.healthy || (record.final_time() - record.settings.t_end).abs() > 1e-9 * record.settings.t_end {
        return Err(Error::Range(format!(
            "run {} is incomplete (reached t = {} of {})",
            record.run_id,
            record.final_time(),
            record.settings.t_end
        )));
    }
    Ok(())
}

/// Chemin-Lerner norm of e^{Rt}·(recorded blocks of `tag`) at the final time.
fn growth_cl(record: &RunRecord, tag: &str, p: TimeExponent) -> Result<f64> {
    let r = record.settings.growth_rate;
    let series = record.block(tag)?.scaled_in_time(|t| (r * t).exp());
    series.aggregate(p, record.final_time(), None)
}

/// The left sides of the global bounds, assembled from the recorded blocks:
/// Theorem 1: ‖e^{Rt}(u_φ, b_φ)‖_{L̃^∞(B^{1/2})} + ‖e^{Rt}∂_y(u_φ, b_φ)‖_{L̃²(B^{1/2})}
/// Theorem 2: the six terms with pairs (u, εv), (b, εc) and the ε∂_x terms.
/// Pairs are measured as sums of their components.
pub fn theorem_bound_check(record: &RunRecord, theorem: u8, constant: f64) -> Result<BoundReport> {
    require_complete(record)?;
    use TimeExponent::{Infinity, Two};
    let mut params = BTreeMap::new();
    params.insert("R".to_string(), record.settings.growth_rate);
    params.insert("T".to_string(), record.final_time());
    params.insert("C".to_string(), constant);
    let lhs = match theorem {
        1 => {
            if record.settings.epsilon.is_some() {
                return Err(Error::Usage("theorem 1 concerns limit runs".into()));
            }
            growth_cl(record, "u", Infinity)?
                + growth_cl(record, "b", Infinity)?
                + growth_cl(record, "dy_u", Two)?
                + growth_cl(record, "dy_b", Two)?
        }
        2 => {
            let Some(eps) = record.settings.epsilon else {
                return Err(Error::Usage("theorem 2 concerns scaled runs".into()));
            };
            params.insert("epsilon".to_string(), eps);
            let pair = |a: &str, b: &str, p| -> Result<f64> { Ok(growth_cl(record, a, p)? + eps * growth_cl(record, b, p)?) };
            pair("u", "v", Infinity)?
                + pair("b", "c", Infinity)?
                + pair("dy_u", "dy_v", Two)?
                + pair("dy_b", "dy_c", Two)?
                + eps * pair("dx_u", "dx_v", Two)?
                + eps * pair("dx_b", "dx_c", Two)?
        }
        3 => {
            return Err(Error::Usage(
                "theorem 3 compares a scaled run with a limit run; use the convergence harness".into(),
            ))
        }
        other => return Err(Error::Usage(format!("unknown theorem {other} (available: 1, 2, 3)"))),
    };
    Ok(BoundReport::new(&record.run_id, &format!("theorem {theorem}"), params, lhs, record.initial_size, constant))
}

/// Frozen product constant with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    #[serde(rename = "C_calibrated")]
    pub constant: f64,
    pub corpus_ids: Vec<String>,
    pub ratios: Vec<f64>,
    pub date: String,
}

impl Calibration {
    /// 1/(2C²), the smallness radius of the persistence set.
    pub fn smallness_threshold(&self) -> f64 {
        1.0 / (2.0 * self.constant * self.constant)
    }

    /// a/(2λ).
    pub fn radius_threshold(&self, a: f64, lambda: f64) -> f64 {
        a / (2.0 * lambda)
    }

    /// λ = 4C², i.e. √λ = 2C.
    pub fn default_lambda(&self) -> f64 {
        4.0 * self.constant * self.constant
    }
}

/// C = 1.5 × the largest ratio over a corpus of bound reports.
pub fn calibrate_constant(corpus: &[BoundReport]) -> Result<Calibration> {
    if corpus.len() < MIN_CORPUS {
        return Err(Error::Validation(format!(
            "calibration needs at least {MIN_CORPUS} runs, got {}",
            corpus.len()
        )));
    }
    if let Some(bad) = corpus.iter().find(|r| !(r.rhs > 0.0) || !r.ratio.is_finite()) {
        return Err(Error::Validation(format!("run {} has an undefined ratio (rhs = {})", bad.run_id, bad.rhs)));
    }
    let max = corpus.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(Calibration {
        constant: CALIBRATION_FACTOR * max,
        corpus_ids: corpus.iter().map(|r| r.run_id.clone()).collect(),
        ratios: corpus.iter().map(|r| r.ratio).collect(),
        date: chrono::Utc::now().to_rfc3339(),
    })
}

/// Pairings whose constants are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lemma {
    /// ⟨(A∂_x B)_φ, C_φ⟩ with A = B = C = u.
    Horizontal,
    /// ⟨(B∂_y A)_φ, C_φ⟩ with A = C = u, B = v.
    Vertical,
    /// ⟨(b∂_x u)_φ, b_φ⟩ and ⟨(c∂_y u)_φ, b_φ⟩.
    Magnetic,
    /// ε²⟨(B∂_y B)_φ, B_φ⟩ with A = u, B = v of a scaled run.
    ScaledVertical,
}

impl Lemma {
    pub const ALL: [Lemma; 4] = [Lemma::Horizontal, Lemma::Vertical, Lemma::Magnetic, Lemma::ScaledVertical];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "3.2" => Ok(Self::Horizontal),
            "3.3" => Ok(Self::Vertical),
            "3.4" => Ok(Self::Magnetic),
            "4.1" => Ok(Self::ScaledVertical),
            other => Err(Error::Usage(format!("unknown lemma {other} (available: 3.2, 3.3, 3.4, 4.1)"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Horizontal => "3.2",
            Self::Vertical => "3.3",
            Self::Magnetic => "3.4",
            Self::ScaledVertical => "4.1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrilinearReport {
    pub lemma: String,
    pub pairing: String,
    pub s: f64,
    pub lhs_sum: f64,
    pub rhs_product: f64,
    pub empirical_constant: f64,
    pub pass: bool,
    /// rhs vanished while lhs did not.
    pub violation: bool,
}

/// Σ_q 2^{2qs} |⟨Δ_q (f g)_φ, Δ_q h_φ⟩| at one time, for weighted f, g, h
/// and the weight radius of the snapshot.
pub fn pairing_at(partition: &Partition, radius: f64, f: &SpectralField, g: &SpectralField, h: &SpectralField, s: f64) -> Result<f64> {
    let kernel = ConvolutionKernel::new(*f.grid(), radius)?;
    let prod = kernel.product(f, g)?;
    let inner = partition.block_inner(&prod, h);
    let (lo, _) = partition.q_range();
    Ok(inner
        .iter()
        .enumerate()
        .map(|(i, v)| 2f64.powf(2.0 * (lo + i as i32) as f64 * s) * v.abs())
        .sum())
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// Empirical constants of the trilinear estimates on a recorded run, using
/// its retained snapshots for the time quadrature.
pub fn trilinear_check(record: &RunRecord, lemma: Lemma, s: f64, constant: f64) -> Result<Vec<TrilinearReport>> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::Validation(format!("s must lie in (0, 1], got {s}")));
    }
    if !record.health.healthy {
        return Err(Error::Range(format!("run {} is unhealthy; its weights are not usable", record.run_id)));
    }
    if record.snapshots.len() < 2 {
        return Err(Error::Range("trilinear check needs at least two snapshots".into()));
    }
    let set = &record.settings;
    let eps = set.epsilon_or_zero();
    if lemma == Lemma::ScaledVertical && set.epsilon.is_none() {
        return Err(Error::Usage("lemma 4.1 needs a scaled run".into()));
    }
    let partition = default_partition(&set.grid)?;
    let r = set.growth_rate;
    let times: Vec<f64> = record.snapshots.iter().map(|s| s.state.time).collect();
    let radius = |snap: &Snapshot| set.a - set.lambda * snap.theta;
    let growth = |t: f64| (r * t).exp();

    // loss-rate weight of the estimate, sampled at the snapshots
    let weight: Vec<f64> = record
        .snapshots
        .iter()
        .map(|snap| -> Result<f64> {
            let st = &snap.state;
            let dyu = crate::besov::besov_norm(&partition, &st.u.dy()?, 0.5)?;
            Ok(match lemma {
                Lemma::Horizontal | Lemma::Vertical => dyu,
                Lemma::Magnetic => dyu + crate::besov::besov_norm(&partition, &st.b.dy()?, 0.5)?,
                Lemma::ScaledVertical => dyu + eps * crate::besov::besov_norm(&partition, &st.v.dy()?, 0.5)?,
            })
        })
        .collect::<Result<_>>()?;
    let t_end = *times.last().expect("two snapshots");
    let weighted_norm = |pick: &dyn Fn(&MhdState) -> SpectralField| -> Result<f64> {
        let mut bs = BlockSeries::new(&partition, s + 0.5)?;
        for snap in &record.snapshots {
            bs.push(&partition, snap.state.time, &pick(&snap.state), s + 0.5)?;
        }
        bs.scaled_in_time(growth).aggregate(TimeExponent::Two, t_end, Some(&weight))
    };
    type Pair = (&'static str, Box<dyn Fn(&MhdState) -> Result<[SpectralField; 3]>>, f64);
    let pairings: Vec<Pair> = match lemma {
        Lemma::Horizontal => vec![("(u d_x u, u)", Box::new(|st: &MhdState| Ok([st.u.clone(), st.u.dx(), st.u.clone()])), 1.0)],
        Lemma::Vertical => vec![("(v d_y u, u)", Box::new(|st: &MhdState| Ok([st.v.clone(), st.u.dy_centered()?, st.u.clone()])), 1.0)],
        Lemma::Magnetic => vec![
            ("(b d_x u, b)", Box::new(|st: &MhdState| Ok([st.b.clone(), st.u.dx(), st.b.clone()])), 1.0),
            ("(c d_y u, b)", Box::new(|st: &MhdState| Ok([st.c.clone(), st.u.dy_centered()?, st.b.clone()])), 1.0),
        ],
        Lemma::ScaledVertical => vec![(
            "eps^2 (v d_y v, v)",
            Box::new(|st: &MhdState| Ok([st.v.clone(), st.v.dy_centered()?, st.v.clone()])),
            eps * eps,
        )],
    };
    let nu = weighted_norm(&|st| st.u.clone())?;
    let rhs_for = |pairing: &str| -> Result<f64> {
        Ok(match pairing {
            "(u d_x u, u)" | "(v d_y u, u)" => nu * nu,
            "(b d_x u, b)" => nu * weighted_norm(&|st| st.b.clone())?,
            "(c d_y u, b)" => weighted_norm(&|st| st.b.clone())?.powi(2),
            _ => {
                let nv = weighted_norm(&|st| st.v.clone())?;
                (nu + eps * nv).powi(2)
            }
        })
    };
    let mut out = Vec::new();
    for (name, fields, factor) in pairings {
        let values: Vec<f64> = record
            .snapshots
            .iter()
            .map(|snap| -> Result<f64> {
                let [f, g, h] = fields(&snap.state)?;
                Ok(factor * growth(snap.state.time).powi(2) * pairing_at(&partition, radius(snap), &f, &g, &h, s)?)
            })
            .collect::<Result<_>>()?;
        let lhs = trapezoid(&times, &values);
        let rhs = rhs_for(name)?;
        let (empirical, violation) = if rhs > 0.0 {
            (lhs / rhs, false)
        } else if lhs > 1e-300 {
            (f64::INFINITY, true)
        } else {
            (0.0, false)
        };
        out.push(TrilinearReport {
            lemma: lemma.label().to_string(),
            pairing: name.to_string(),
            s,
            lhs_sum: lhs,
            rhs_product: rhs,
            empirical_constant: empirical,
            pass: !violation && empirical <= constant,
            violation,
        });
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::dealiased_product;
    use crate::grid::GridSpec;
    use crate::profiles::Profile;
    use crate::record::RunSettings;
    use crate::runner::run;
    use std::f64::consts::PI;

    const Z: Complex64 = Complex64::new(0.0, 0.0);

    fn settings(epsilon: Option<f64>, nonlinear: bool) -> RunSettings {
        RunSettings {
            grid: GridSpec::periodic(16, 15).unwrap(),
            dt: 0.01,
            t_end: 0.1,
            a: 0.5,
            lambda: 4.0,
            growth_rate: 1.0,
            epsilon,
            nonlinear,
            magnetic: true,
            profile: Profile::Mode2,
            delta: 0.05,
            seed: 0,
            snapshot_every: 1,
            constant: 4.0,
        }
    }

    #[test]
    fn zero_run_has_zero_budget() {
        let mut s = settings(None, true);
        s.delta = 0.0;
        let rec = run("z", &s).unwrap();
        let b = block_budget(&rec, Some(0), (0, 10)).unwrap();
        assert!(b.terms.values().all(|v| *v == 0.0));
        assert_eq!(b.residual, 0.0);
    }

    #[test]
    fn budgets_close_for_both_systems() {
        for eps in [None, Some(0.2)] {
            for nonlinear in [false, true] {
                let rec = run("b", &settings(eps, nonlinear)).unwrap();
                let table = BudgetTable::build(&rec).unwrap();
                for q in [None, Some(-1), Some(0), Some(1), Some(2)] {
                    let b = table.block(q, (0, 10)).unwrap();
                    assert!(b.within(1e-10), "{eps:?} {nonlinear} {q:?}: {b:?}");
                    assert!(b.pressure.abs() <= 1e-10 * b.scale.max(1e-300), "{b:?}");
                }
                let all = table.block(None, (0, 10)).unwrap();
                assert!(all.terms["dissipation"] > 0.0);
                assert!(all.terms["ddt_energy"] < 0.0);
            }
        }
    }

    #[test]
    fn coarse_cadence_is_refused() {
        let mut s = settings(None, true);
        s.snapshot_every = 2;
        let rec = run("c", &s).unwrap();
        assert!(matches!(BudgetTable::build(&rec), Err(Error::Cadence { cadence: 1 })));
    }

    #[test]
    fn theorem_checks_on_zero_and_small_runs() {
        let mut s = settings(None, true);
        s.delta = 0.0;
        let z = theorem_bound_check(&run("z", &s).unwrap(), 1, 2.0).unwrap();
        assert_eq!((z.lhs, z.rhs, z.ratio), (0.0, 0.0, 0.0));
        assert!(z.pass);
        let small = theorem_bound_check(&run("m", &settings(None, true)).unwrap(), 1, 10.0).unwrap();
        // the L̃^∞ term alone reaches the initial size
        assert!(small.ratio >= 1.0 && small.ratio.is_finite());
        let scaled = theorem_bound_check(&run("s", &settings(Some(0.1), true)).unwrap(), 2, 10.0).unwrap();
        assert!(scaled.ratio >= 1.0);
        assert!(theorem_bound_check(&run("m", &settings(None, true)).unwrap(), 2, 1.0).is_err());
    }

    #[test]
    fn calibration_is_one_and_a_half_times_the_max() {
        let r = |id: &str, ratio: f64| BoundReport::new(id, "theorem 1", BTreeMap::new(), ratio, 1.0, 10.0);
        let c = calibrate_constant(&[r("a", 1.2), r("b", 2.0), r("c", 1.7)]).unwrap();
        assert!((c.constant - 3.0).abs() < 1e-15);
        let same = calibrate_constant(&[r("a", 1.3), r("b", 1.3), r("c", 1.3)]).unwrap();
        assert!((same.constant - 1.95).abs() < 1e-15);
        assert!(calibrate_constant(&[]).is_err());
        let zero = BoundReport::new("z", "theorem 1", BTreeMap::new(), 0.0, 0.0, 1.0);
        assert!(calibrate_constant(&[zero.clone(), zero.clone(), zero]).is_err());
    }

    #[test]
    fn pairing_matches_physical_quadrature() {
        let g = GridSpec::periodic(32, 15).unwrap();
        let part = default_partition(&g).unwrap();
        let ys = g.y_nodes();
        let a = SpectralField::from_fn(g, crate::field::Levels::Nodes, |k, j| {
            let n = g.signed_index(k);
            if n.abs() == 1 || n.abs() == 3 { Complex64::new(0.3 * n as f64, 0.2) * (PI * ys[j]).sin() } else { Z }
        });
        let mut a = a.clone();
        // enforce Hermitian symmetry
        for k in 0..g.nx {
            let n = g.signed_index(k);
            if n < 0 {
                let m = g.index_of(-n);
                for j in 0..g.ny {
                    let c = a.get(m, j).conj();
                    a.set(k, j, c);
                }
            }
        }
        let b = SpectralField::from_fn(g, crate::field::Levels::Nodes, |k, j| {
            match g.signed_index(k) {
                2 => Complex64::new(0.0, -0.5) * (PI * ys[j]).sin(),
                -2 => Complex64::new(0.0, 0.5) * (PI * ys[j]).sin(),
                _ => Z,
            }
        });
        let got = pairing_at(&part, 0.0, &a, &b.dx(), &a, 0.5).unwrap();
        let prod = dealiased_product(&a, &b.dx()).unwrap();
        let (lo, hi) = part.q_range();
        let oracle: f64 = (lo..=hi)
            .map(|q| 2f64.powf(q as f64) * part.block(&prod, q).inner(&part.block(&a, q)).abs())
            .sum();
        assert!((got - oracle).abs() <= 1e-8 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn trilinear_constants_are_finite() {
        let rec = run("t", &settings(Some(0.2), true)).unwrap();
        for lemma in Lemma::ALL {
            for rep in trilinear_check(&rec, lemma, 0.5, 1e6).unwrap() {
                assert!(rep.empirical_constant.is_finite() && rep.empirical_constant > 0.0, "{rep:?}");
                assert!(!rep.violation);
            }
        }
        let limit = run("l", &settings(None, true)).unwrap();
        assert!(trilinear_check(&limit, Lemma::ScaledVertical, 0.5, 1.0).is_err());
    }
}
