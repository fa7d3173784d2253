//! Matched (scaled, limit) runs, difference fields under the Θ-weight, ε
//! sweeps and the log-log rate fit.

use crate::analyticity::apply_weight;
use crate::besov::{besov_norm, BlockSeries, TimeExponent};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lp::{default_partition, Partition};
use crate::record::{tags, RunRecord, RunSettings};
use crate::runner::{run, unweighted};
use crate::state::{Flavor, MhdState};
use crate::vertical::divergence_residual;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::io::Write;

/// Divergence residual tolerated on each input of a difference.
pub const DIV_TOL: f64 = 1e-10;

/// Names of the error-functional terms, in display order.
pub const TERM_NAMES: [&str; 6] = [
    "psi_Linf_B1/2",
    "phi_LinfT_B1/2",
    "dy_psi_L2_B1/2",
    "eps_psi_L2_B3/2",
    "dy_phi_L2_B1/2",
    "eps_phi_L2_B3/2",
];

/// (u^ε − u, v^ε − v, b^ε − b, c^ε − c, p^ε − p) of two unweighted states.
pub fn difference_fields(scaled: &MhdState, limit: &MhdState) -> Result<MhdState> {
    if scaled.grid() != limit.grid() {
        return Err(Error::Usage("difference of states on different grids".into()));
    }
    if (scaled.time - limit.time).abs() > 1e-12 * scaled.time.abs().max(1.0) {
        return Err(Error::Usage(format!("difference of states at t = {} and t = {}", scaled.time, limit.time)));
    }
    let sub = |a: &SpectralField, b: &SpectralField| {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        d
    };
    let g = *scaled.grid();
    let mut out = MhdState::zeros(g, Flavor::Difference);
    out.time = scaled.time;
    out.u = sub(&scaled.u, &limit.u);
    out.v = sub(&scaled.v, &limit.v);
    out.b = sub(&scaled.b, &limit.b);
    out.c = sub(&scaled.c, &limit.c);
    // the limit pressure is constant in y; broadcast it to the midpoints
    let target = out.p.levels().count(&g);
    for k in 0..g.nx {
        let ps = scaled.p.mode(k);
        let pl = limit.p.mode(k);
        let dst = out.p.mode_mut(k);
        for m in 0..target {
            let s = if ps.len() == target { ps[m] } else { ps[0] };
            let l = if pl.len() == target { pl[m] } else { pl[0] };
            dst[m] = s - l;
        }
    }
    let inputs = [
        divergence_residual(&scaled.u, &scaled.v)?,
        divergence_residual(&limit.u, &limit.v)?,
        divergence_residual(&scaled.b, &scaled.c)?,
        divergence_residual(&limit.b, &limit.c)?,
    ];
    let diff = divergence_residual(&out.u, &out.v)?.max(divergence_residual(&out.b, &out.c)?);
    let bound = 2.0 * inputs.iter().fold(DIV_TOL, |m, x| m.max(*x));
    if diff > bound {
        return Err(Error::Validation(format!("difference divergence {diff} exceeds {bound}")));
    }
    Ok(out)
}

/// η(t) and the Θ-radius a − μη(t) on the block-series times of a matched pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaWeight {
    pub a: f64,
    pub mu: f64,
    pub times: Vec<f64>,
    pub eta: Vec<f64>,
    /// a − μη(t)
    pub radius: Vec<f64>,
    pub positive: bool,
    /// Θ-radius never above either run's own radius.
    pub dominated: bool,
}

impl ThetaWeight {
    /// Radius at time t, linear between samples.
    pub fn radius_at(&self, t: f64) -> Result<f64> {
        let n = self.times.len();
        let slack = 1e-12 * t.abs().max(1.0);
        if n == 0 || t < self.times[0] - slack || t > self.times[n - 1] + slack {
            return Err(Error::Range(format!("t = {t} outside the weight series")));
        }
        let i = self.times.partition_point(|&s| s <= t + slack).clamp(1, n.max(2) - 1);
        if n == 1 {
            return Ok(self.radius[0]);
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let f = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        Ok(self.radius[i - 1] + f * (self.radius[i] - self.radius[i - 1]))
    }
}

fn series_values(record: &RunRecord, tag: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let bs = record.block(tag)?;
    Ok((bs.times.clone(), bs.besov_values()))
}

/// η̇ = ‖∂_y u^ε_φ‖ + ε‖∂_x u^ε_φ‖ + ‖∂_y u_φ‖ from the recorded blocks,
/// integrated by the trapezoid rule.
pub fn theta_weight_series(scaled: &RunRecord, limit: &RunRecord, mu: f64) -> Result<ThetaWeight> {
    let eps = scaled
        .settings
        .epsilon
        .ok_or_else(|| Error::Usage("first record must be a scaled run".into()))?;
    if limit.settings.epsilon.is_some() {
        return Err(Error::Usage("second record must be a limit run".into()));
    }
    if !(mu >= 0.0) {
        return Err(Error::Validation(format!("mu must be nonnegative, got {mu}")));
    }
    let (times, dyu_s) = series_values(scaled, &tags::dy("u"))?;
    let (_, dxu_s) = series_values(scaled, &tags::dx("u"))?;
    let (times_l, dyu_l) = series_values(limit, &tags::dy("u"))?;
    let n = times.len().min(times_l.len());
    if n == 0 || times[..n].iter().zip(&times_l[..n]).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0)) {
        return Err(Error::Usage("scaled and limit runs are not on the same time grid".into()));
    }
    let rate: Vec<f64> = (0..n).map(|i| dyu_s[i] + eps * dxu_s[i] + dyu_l[i]).collect();
    let mut eta = vec![0.0; n];
    for i in 1..n {
        eta[i] = eta[i - 1] + 0.5 * (times[i] - times[i - 1]) * (rate[i] + rate[i - 1]);
    }
    let a = scaled.settings.a;
    if (a - limit.settings.a).abs() > 0.0 {
        return Err(Error::Usage("matched runs need the same initial radius a".into()));
    }
    let radius: Vec<f64> = eta.iter().map(|e| a - mu * e).collect();
    let positive = radius.iter().all(|r| *r > 0.0);
    let own = |rec: &RunRecord, t: f64| -> f64 {
        let theta = rec.series.values("theta");
        let i = theta.partition_point(|(s, _)| *s <= t + 1e-12).saturating_sub(1);
        theta.get(i).map_or(a, |(_, th)| a - rec.settings.lambda * th)
    };
    let dominated = times[..n]
        .iter()
        .zip(&radius)
        .all(|(&t, r)| *r <= own(scaled, t).min(own(limit, t)) + 1e-12);
    Ok(ThetaWeight { a, mu, times: times[..n].to_vec(), eta, radius, positive, dominated })
}

/// Terms of the error display, all under the Θ-weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFunctional {
    pub terms: [f64; 6],
    /// Sum of all terms.
    pub total: f64,
    /// The display as printed: the second and third terms multiplied.
    pub product_form: f64,
}

impl ErrorFunctional {
    fn from_terms(terms: [f64; 6]) -> Self {
        Self {
            terms,
            total: terms.iter().sum(),
            product_form: terms[0] + terms[1] * terms[2] + terms[3] + terms[4] + terms[5],
        }
    }
}

/// Evaluates the error functional on unweighted differences sampled at
/// increasing times, weighting each sample with the Θ-radius at its time.
pub fn error_functional(
    partition: &Partition,
    diffs: &[MhdState],
    weight: &ThetaWeight,
    epsilon: f64,
) -> Result<ErrorFunctional> {
    let t_end = diffs.last().ok_or_else(|| Error::Range("no difference samples".into()))?.time;
    let mut psi = [BlockSeries::new(partition, 0.5)?, BlockSeries::new(partition, 0.5)?];
    let mut phi = psi.clone();
    let mut dy_psi = psi.clone();
    let mut dy_phi = psi.clone();
    let mut psi_hi = [BlockSeries::new(partition, 1.5)?, BlockSeries::new(partition, 1.5)?];
    let mut phi_hi = psi_hi.clone();
    for d in diffs {
        let r = weight.radius_at(d.time)?;
        let w = |f: &SpectralField| apply_weight(f, r, 1.0);
        let fields = [w(&d.u)?, w(&d.v)?, w(&d.b)?, w(&d.c)?];
        let t = d.time;
        for (i, f) in [&fields[0], &fields[1]].into_iter().enumerate() {
            psi[i].push(partition, t, f, 0.5)?;
            dy_psi[i].push(partition, t, &f.dy()?, 0.5)?;
            psi_hi[i].push(partition, t, f, 1.5)?;
        }
        for (i, f) in [&fields[2], &fields[3]].into_iter().enumerate() {
            phi[i].push(partition, t, f, 0.5)?;
            dy_phi[i].push(partition, t, &f.dy()?, 0.5)?;
            phi_hi[i].push(partition, t, f, 1.5)?;
        }
    }
    use TimeExponent::{Infinity, Two};
    let pair = |s: &[BlockSeries; 2], p| -> Result<f64> { Ok(s[0].aggregate(p, t_end, None)? + epsilon * s[1].aggregate(p, t_end, None)?) };
    let sup_in_time = |s: &[BlockSeries; 2]| -> f64 {
        s[0].besov_values()
            .iter()
            .zip(s[1].besov_values())
            .map(|(a, b)| a + epsilon * b)
            .fold(0.0, f64::max)
    };
    let terms = [
        pair(&psi, Infinity)?,
        sup_in_time(&phi),
        pair(&dy_psi, Two)?,
        epsilon * pair(&psi_hi, Two)?,
        pair(&dy_phi, Two)?,
        epsilon * pair(&phi_hi, Two)?,
    ];
    Ok(ErrorFunctional::from_terms(terms))
}

/// M from the recorded norms of the two runs (at least 1).
pub fn bound_constant(scaled: &RunRecord, limit: &RunRecord) -> Result<f64> {
    use TimeExponent::{Infinity, Two};
    let cl = |rec: &RunRecord, tag: &str, p| -> Result<f64> {
        let bs = rec.block(tag)?;
        bs.aggregate(p, bs.last_time().unwrap_or(0.0), None)
    };
    let mut m = cl(scaled, "u", Infinity)? + cl(scaled, "b", Infinity)?;
    for f in ["u", "b"] {
        m += cl(limit, f, Infinity)? + cl(limit, &tags::high(f), Infinity)?;
        m += cl(limit, &tags::dy(f), Two)? + cl(limit, &tags::high(&tags::dy(f)), Two)?;
        m += cl(limit, &tags::time_derivative(f), Two)?;
    }
    Ok(m.max(1.0))
}

/// ‖e^{a|D|}(Ψ¹_0, εΨ²_0)‖ + ‖e^{a|D|}(Φ¹_0, εΦ²_0)‖ in B^{1/2}.
pub fn initial_difference(partition: &Partition, diff0: &MhdState, a: f64, epsilon: f64) -> Result<f64> {
    let n = |f: &SpectralField| -> Result<f64> { besov_norm(partition, &apply_weight(f, a, 1.0)?, 0.5) };
    Ok(n(&diff0.u)? + epsilon * n(&diff0.v)? + n(&diff0.b)? + epsilon * n(&diff0.c)?)
}

/// Compares a scaled record with a limit record of the same data.
pub fn compare_runs(scaled: &RunRecord, limit: &RunRecord, mu: f64) -> Result<(ErrorFunctional, ThetaWeight, f64)> {
    let partition = default_partition(&scaled.settings.grid)?;
    let eps = scaled.settings.epsilon_or_zero();
    let weight = theta_weight_series(scaled, limit, mu)?;
    let mut diffs = Vec::new();
    for snap in &scaled.snapshots {
        let Some(other) = limit.snapshot_at_step(snap.step) else { continue };
        let s = unweighted(&scaled.settings, snap)?;
        let l = unweighted(&limit.settings, other)?;
        diffs.push(difference_fields(&s, &l)?);
    }
    if diffs.is_empty() || diffs[0].time != 0.0 {
        return Err(Error::Usage("matched runs share no initial snapshot".into()));
    }
    let init = initial_difference(&partition, &diffs[0], scaled.settings.a, eps)?;
    Ok((error_functional(&partition, &diffs, &weight, eps)?, weight, init))
}

/// A sweep over decreasing ε with otherwise shared settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub epsilons: Vec<f64>,
    /// Shared settings; `epsilon` is ignored.
    pub base: RunSettings,
    /// μ of the Θ-weight; `None` uses max(λ, C·M).
    pub mu: Option<f64>,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::Config("sweep needs at least one epsilon".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(Error::Config(format!("epsilon {e} outside (0, 1]")));
        }
        if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("sweep epsilons must be strictly decreasing".into()));
        }
        let mut limit = self.base.clone();
        limit.epsilon = None;
        limit.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub error: Option<ErrorFunctional>,
    pub healthy: bool,
    pub mu: f64,
    pub bound_constant: f64,
    pub initial_difference: f64,
    pub min_theta_radius: f64,
    pub note: String,
}

impl SweepEntry {
    /// Synthetic entry carrying only a total.
    pub fn synthetic(epsilon: f64, total: f64) -> Self {
        Self {
            epsilon,
            error: Some(ErrorFunctional { terms: [total, 0.0, 0.0, 0.0, 0.0, 0.0], total, product_form: total }),
            healthy: true,
            mu: 0.0,
            bound_constant: 1.0,
            initial_difference: 0.0,
            min_theta_radius: 0.0,
            note: String::new(),
        }
    }

    pub fn total(&self) -> Option<f64> {
        self.error.as_ref().map(|e| e.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// 95% confidence half-width of the slope (0 when it is undetermined).
    pub ci: f64,
    pub entries_used: usize,
    pub notes: Vec<String>,
}

/// Least squares on (log ε, log E) over healthy entries with E > 0.
pub fn fit_rate(entries: &[SweepEntry]) -> Result<RateFit> {
    let mut notes = Vec::new();
    let mut pts = Vec::new();
    for e in entries {
        match e.total() {
            Some(v) if e.healthy && v > 0.0 && v.is_finite() => pts.push((e.epsilon.ln(), v.ln())),
            Some(v) if e.healthy && v == 0.0 => notes.push(format!("epsilon {} excluded: E = 0", e.epsilon)),
            _ => notes.push(format!("epsilon {} excluded: unhealthy or missing ({})", e.epsilon, e.note)),
        }
    }
    let n = pts.len();
    if n < 3 {
        return Err(Error::Validation(format!("rate fit needs at least 3 usable entries, got {n}")));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Validation("rate fit needs distinct epsilons".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let ci = if n > 2 {
        let se = (sse / (nf - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 2.0)
            .map_err(|e| Error::Validation(format!("t distribution: {e}")))?
            .inverse_cdf(0.975);
        t * se
    } else {
        0.0
    };
    Ok(RateFit { slope, intercept, r2, ci, entries_used: n, notes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub limit_healthy: bool,
}

impl SweepResult {
    pub fn fit(&self) -> Result<RateFit> {
        fit_rate(&self.entries)
    }
}

fn sweep_entry(plan: &SweepPlan, limit: &RunRecord, eps: f64) -> SweepEntry {
    let mut settings = plan.base.clone();
    settings.epsilon = Some(eps);
    let mut entry = SweepEntry {
        epsilon: eps,
        error: None,
        healthy: false,
        mu: 0.0,
        bound_constant: 0.0,
        initial_difference: f64::NAN,
        min_theta_radius: f64::NAN,
        note: String::new(),
    };
    let scaled = match run(&format!("scaled_eps_{eps}"), &settings) {
        Ok(r) => r,
        Err(e) => {
            entry.note = e.to_string();
            return entry;
        }
    };
    if !scaled.health.healthy {
        entry.note = format!("scaled run unhealthy: {}", scaled.health.message.as_deref().unwrap_or("unknown"));
        return entry;
    }
    let outcome = bound_constant(&scaled, limit).and_then(|m| {
        let mu = plan.mu.unwrap_or_else(|| plan.base.lambda.max(plan.base.constant * m));
        compare_runs(&scaled, limit, mu).map(|r| (m, mu, r))
    });
    match outcome {
        Ok((m, mu, (err, weight, init))) => {
            entry.bound_constant = m;
            entry.mu = mu;
            entry.initial_difference = init;
            entry.min_theta_radius = weight.radius.iter().copied().fold(f64::INFINITY, f64::min);
            entry.healthy = weight.positive;
            if !weight.positive {
                entry.note = "theta radius exhausted".into();
            } else if !weight.dominated {
                entry.note = "theta radius exceeds a run radius".into();
            }
            entry.error = Some(err);
        }
        Err(e) => entry.note = e.to_string(),
    }
    entry
}

/// One limit run, then the scaled runs in parallel on the current pool.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepResult> {
    plan.validate()?;
    let mut base = plan.base.clone();
    base.epsilon = None;
    let limit = run("limit", &base)?;
    if !limit.health.healthy {
        let entries = plan
            .epsilons
            .iter()
            .map(|&e| {
                let mut s = SweepEntry::synthetic(e, f64::NAN);
                s.error = None;
                s.healthy = false;
                s.note = format!("limit run unhealthy: {}", limit.health.message.as_deref().unwrap_or("unknown"));
                s
            })
            .collect();
        return Ok(SweepResult { entries, limit_healthy: false });
    }
    let entries = plan.epsilons.par_iter().map(|&eps| sweep_entry(plan, &limit, eps)).collect();
    Ok(SweepResult { entries, limit_healthy: true })
}

/// Columns: epsilon, E_total, E_term_1..E_term_6, E_product, healthy.
pub fn write_sweep_csv<W: Write>(entries: &[SweepEntry], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["epsilon".to_string(), "E_total".to_string()];
    header.extend((1..=6).map(|i| format!("E_term_{i}")));
    header.extend(["E_product".to_string(), "healthy".to_string()]);
    w.write_record(&header)?;
    for e in entries {
        let mut row = vec![format!("{:e}", e.epsilon)];
        match &e.error {
            Some(err) => {
                row.push(format!("{:e}", err.total));
                row.extend(err.terms.iter().map(|t| format!("{t:e}")));
                row.push(format!("{:e}", err.product_form));
            }
            None => row.extend(std::iter::repeat("NaN".to_string()).take(8)),
        }
        row.push(e.healthy.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::profiles::Profile;
    use num_complex::Complex64;

    fn base() -> RunSettings {
        RunSettings {
            grid: GridSpec::periodic(16, 15).unwrap(),
            dt: 0.01,
            t_end: 0.05,
            a: 0.5,
            lambda: 1.0,
            growth_rate: 1.0,
            epsilon: None,
            nonlinear: true,
            magnetic: true,
            profile: Profile::Mode1,
            delta: 1e-2,
            seed: 0,
            snapshot_every: 1,
            constant: 4.0,
        }
    }

    #[test]
    fn differences_by_definition() {
        let g = GridSpec::periodic(16, 7).unwrap();
        let mut s = MhdState::zeros(g, Flavor::Scaled);
        let l = MhdState::zeros(g, Flavor::Limit);
        assert_eq!(difference_fields(&s, &l).unwrap().u.max_abs(), 0.0);
        s.u.set(1, 2, Complex64::new(0.5, -0.25));
        s.v.set(1, 3, Complex64::new(0.1, 0.0));
        let d = difference_fields(&s, &l).unwrap();
        assert_eq!(d.u.get(1, 2), Complex64::new(0.5, -0.25));
        assert_eq!(d.v.get(1, 3), Complex64::new(0.1, 0.0));
        let d = difference_fields(&s, &s.clone()).unwrap();
        assert_eq!(d.u.max_abs() + d.v.max_abs(), 0.0);
        let mut later = l.clone();
        later.time = 1.0;
        assert!(matches!(difference_fields(&s, &later), Err(Error::Usage(_))));
    }

    #[test]
    fn weight_is_flat_for_zero_mu_and_zero_data() {
        let mut b = base();
        let limit = run("l", &b).unwrap();
        b.epsilon = Some(0.1);
        let scaled = run("s", &b).unwrap();
        let w = theta_weight_series(&scaled, &limit, 0.0).unwrap();
        assert!(w.radius.iter().all(|r| *r == b.a));
        let w = theta_weight_series(&scaled, &limit, 2.0).unwrap();
        assert!(w.eta.windows(2).all(|p| p[1] > p[0]));
        b.delta = 0.0;
        let zs = run("zs", &b).unwrap();
        b.epsilon = None;
        let zl = run("zl", &b).unwrap();
        let w = theta_weight_series(&zs, &zl, 5.0).unwrap();
        assert!(w.eta.iter().all(|e| *e == 0.0));
        let (err, _, init) = compare_runs(&zs, &zl, 5.0).unwrap();
        assert_eq!((err.total, init), (0.0, 0.0));
    }

    #[test]
    fn functional_is_homogeneous_and_starts_at_zero() {
        let mut b = base();
        let limit = run("l", &b).unwrap();
        b.epsilon = Some(0.2);
        let scaled = run("s", &b).unwrap();
        let (err, weight, init) = compare_runs(&scaled, &limit, 1.0).unwrap();
        assert_eq!(init, 0.0);
        assert!(err.total > 0.0);
        let part = default_partition(&b.grid).unwrap();
        let diffs: Vec<MhdState> = scaled
            .snapshots
            .iter()
            .zip(&limit.snapshots)
            .map(|(s, l)| difference_fields(&unweighted(&scaled.settings, s).unwrap(), &unweighted(&limit.settings, l).unwrap()).unwrap())
            .collect();
        let doubled: Vec<MhdState> = diffs
            .iter()
            .map(|d| {
                let mut e = d.clone();
                for f in [&mut e.u, &mut e.v, &mut e.b, &mut e.c] {
                    *f = f.scaled(2.0);
                }
                e
            })
            .collect();
        let e1 = error_functional(&part, &diffs, &weight, 0.2).unwrap();
        let e2 = error_functional(&part, &doubled, &weight, 0.2).unwrap();
        assert!((e2.total - 2.0 * e1.total).abs() <= 1e-12 * e1.total);
        assert!((e1.total - err.total).abs() <= 1e-12 * e1.total);

        // direct quadrature of the first term over the first step
        let first = &diffs[..2];
        let e = error_functional(&part, first, &weight, 0.2).unwrap();
        let direct: f64 = part
            .qs()
            .map(|q| {
                let pick = |d: &MhdState, f: &SpectralField| {
                    let wf = apply_weight(f, weight.radius_at(d.time).unwrap(), 1.0).unwrap();
                    part.block(&wf, q).l2_norm()
                };
                let sup = |sel: fn(&MhdState) -> &SpectralField| first.iter().map(|d| pick(d, sel(d))).fold(0.0, f64::max);
                2f64.powf(0.5 * q as f64) * (sup(|d| &d.u) + 0.2 * sup(|d| &d.v))
            })
            .sum();
        assert!((e.terms[0] - direct).abs() <= 1e-12 * direct, "{} vs {direct}", e.terms[0]);
    }

    #[test]
    fn fit_recovers_exact_slopes() {
        let eps = [0.2, 0.1, 0.05, 0.025];
        let lin: Vec<_> = eps.iter().map(|&e| SweepEntry::synthetic(e, 2.0 * e)).collect();
        let f = fit_rate(&lin).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-10 && f.ci < 1e-8 && (f.r2 - 1.0).abs() < 1e-12);
        assert!((f.intercept - 2f64.ln()).abs() < 1e-10);
        let quad: Vec<_> = eps.iter().map(|&e| SweepEntry::synthetic(e, 3.0 * e * e)).collect();
        assert!((fit_rate(&quad).unwrap().slope - 2.0).abs() < 1e-10);
        let mut with_zero = lin.clone();
        with_zero.push(SweepEntry::synthetic(0.0125, 0.0));
        let f = fit_rate(&with_zero).unwrap();
        assert_eq!(f.entries_used, 4);
        assert_eq!(f.notes.len(), 1);
        assert!(fit_rate(&lin[..2]).is_err());
    }

    #[test]
    fn plan_validation() {
        let mut plan = SweepPlan { epsilons: vec![0.2, 0.1, 0.05], base: base(), mu: None };
        plan.validate().unwrap();
        plan.epsilons = vec![0.1, 0.2];
        assert!(plan.validate().is_err());
        plan.epsilons = vec![1.5];
        assert!(plan.validate().is_err());
    }

    #[test]
    fn small_sweep_and_csv() {
        let mut b = base();
        b.snapshot_every = 2;
        b.t_end = 0.04;
        let plan = SweepPlan { epsilons: vec![0.4, 0.2, 0.1], base: b, mu: None };
        let res = run_sweep(&plan).unwrap();
        assert!(res.entries.iter().all(|e| e.healthy && e.initial_difference == 0.0), "{res:?}");
        assert!(res.entries.iter().all(|e| e.mu >= plan.base.lambda));
        let mut buf = Vec::new();
        write_sweep_csv(&res.entries, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("epsilon,E_total,E_term_1"));
        assert!(res.fit().unwrap().slope > 0.0);
    }
}
