//! Besov norms B^s, Chemin-Lerner norms L̃^p_T(B^s) and their
//! time-weighted variants, plus the `NormSeries` record.
//!
//! On a finite grid the q-sum runs over the partition's range; the range
//! is reported by [`truncation_range`] and stored in run metadata.

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lp::Partition;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

pub const S_MIN: f64 = -2.0;
pub const S_MAX: f64 = 3.0;

pub fn truncation_range(partition: &Partition) -> (i32, i32) {
    partition.q_range()
}

/// Number of x-derivatives used for regularity `s`: k with s ∈ (k − 1/2, k + 1/2].
pub fn derivative_order(s: f64) -> u32 {
    if s <= 0.5 {
        0
    } else {
        (s - 0.5).ceil() as u32
    }
}

fn validate_s(s: f64) -> Result<()> {
    if !(S_MIN..=S_MAX).contains(&s) {
        return Err(Error::Validation(format!("regularity s = {s} outside [{S_MIN}, {S_MAX}]")));
    }
    Ok(())
}

/// Per-block L² norms of `f` prepared for regularity `s`, together with the
/// exponent that multiplies them: for s > 1/2 the blocks are those of ∂_x^k f
/// and the exponent is s − k.
pub fn block_profile(partition: &Partition, f: &SpectralField, s: f64) -> Result<(Vec<f64>, f64)> {
    validate_s(s)?;
    let k = derivative_order(s);
    if k == 0 {
        let mean = f.mean_magnitude();
        if mean > 1e-12 * f.max_abs().max(f64::MIN_POSITIVE) && mean > 0.0 {
            return Err(Error::Validation(format!(
                "field has nonzero horizontal mean (|k=0| up to {mean:e}) but B^{s} needs zero mean"
            )));
        }
        return Ok((partition.block_norms(f), s));
    }
    let g = f.grid();
    let energies: Vec<f64> = f
        .mode_energies()
        .iter()
        .enumerate()
        .map(|(idx, e)| e * g.abs_wavenumber(idx).powi(2 * k as i32))
        .collect();
    Ok((partition.block_norms_from_energies(&energies), s - k as f64))
}

fn weighted_sum(partition: &Partition, norms: &[f64], s_eff: f64) -> f64 {
    partition
        .qs()
        .zip(norms)
        .map(|(q, n)| 2f64.powf(q as f64 * s_eff) * n)
        .sum()
}

/// ‖f‖_{B^s} = Σ_q 2^{qs} ‖Δ_q f‖_{L²}.
pub fn besov_norm(partition: &Partition, f: &SpectralField, s: f64) -> Result<f64> {
    let (norms, s_eff) = block_profile(partition, f, s)?;
    Ok(weighted_sum(partition, &norms, s_eff))
}

/// Time exponent of a Chemin-Lerner norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeExponent {
    One,
    Two,
    Infinity,
}

impl TimeExponent {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Self::One),
            "2" => Ok(Self::Two),
            "inf" | "infinity" => Ok(Self::Infinity),
            other => Err(Error::Validation(format!("unsupported time exponent {other}"))),
        }
    }
}

/// Per-block norm histories of a field series at a fixed regularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSeries {
    pub times: Vec<f64>,
    /// norms[i][q - q_min] = ‖Δ_q f(t_i)‖
    pub norms: Vec<Vec<f64>>,
    pub s_eff: f64,
    pub q_min: i32,
}

impl BlockSeries {
    pub fn new(partition: &Partition, s: f64) -> Result<Self> {
        validate_s(s)?;
        Ok(Self {
            times: Vec::new(),
            norms: Vec::new(),
            s_eff: s - derivative_order(s) as f64,
            q_min: partition.q_range().0,
        })
    }

    /// Appends the snapshot `f` at time `t`; `s` must match construction.
    pub fn push(&mut self, partition: &Partition, t: f64, f: &SpectralField, s: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::Validation(format!("times must increase: {t} after {last}")));
            }
        }
        let (n, _) = block_profile(partition, f, s)?;
        self.times.push(t);
        self.norms.push(n);
        Ok(())
    }

    pub fn from_fields<'a>(
        partition: &Partition,
        s: f64,
        series: impl IntoIterator<Item = (f64, &'a SpectralField)>,
    ) -> Result<Self> {
        let mut out = Self::new(partition, s)?;
        for (t, f) in series {
            out.push(partition, t, f, s)?;
        }
        Ok(out)
    }

    /// Adds another series block by block (norms of a pair, summed).
    pub fn add(&mut self, other: &BlockSeries) -> Result<()> {
        if self.times != other.times || self.s_eff != other.s_eff {
            return Err(Error::Usage("block series on different time grids".into()));
        }
        for (a, b) in self.norms.iter_mut().zip(&other.norms) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    /// Multiplies the norms at each time t by `factor(t)` (e.g. e^{Rt}).
    pub fn scaled_in_time(&self, factor: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for (t, row) in out.times.iter().zip(out.norms.iter_mut()) {
            let f = factor(*t);
            row.iter_mut().for_each(|x| *x *= f);
        }
        out
    }

    /// Σ_q 2^{q s} ‖Δ_q f(t_i)‖ at every recorded time.
    pub fn besov_values(&self) -> Vec<f64> {
        self.norms
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(i, n)| 2f64.powf((self.q_min + i as i32) as f64 * self.s_eff) * n)
                    .sum()
            })
            .collect()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    fn horizon_check(&self, t_end: f64) -> Result<usize> {
        let (first, last) = match (self.times.first(), self.times.last()) {
            (Some(&f), Some(&l)) => (f, l),
            _ => return Err(Error::Range("empty series".into())),
        };
        let slack = 1e-12 * last.abs().max(1.0);
        if t_end > last + slack {
            return Err(Error::Range(format!("T = {t_end} beyond recorded horizon {last}")));
        }
        if t_end < first - slack {
            return Err(Error::Range(format!("T = {t_end} precedes first record {first}")));
        }
        // index of last sample with t_i <= T
        Ok(self.times.iter().rposition(|&t| t <= t_end + slack).unwrap_or(0))
    }

    /// Σ_q 2^{q s} (∫_0^T w(t) ‖Δ_q f‖^p dt)^{1/p}; p = ∞ takes the sup over
    /// samples with positive weight.
    pub fn aggregate(&self, p: TimeExponent, t_end: f64, weights: Option<&[f64]>) -> Result<f64> {
        if let Some(w) = weights {
            if w.len() != self.times.len() {
                return Err(Error::Usage(format!(
                    "weight series has {} samples for {} times",
                    w.len(),
                    self.times.len()
                )));
            }
            if let Some(bad) = w.iter().find(|x| !(**x >= 0.0)) {
                return Err(Error::Validation(format!("negative weight {bad}")));
            }
        }
        let last = self.horizon_check(t_end)?;
        let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
        let nq = self.norms.first().map_or(0, |n| n.len());
        let mut total = 0.0;
        for qi in 0..nq {
            let q = self.q_min + qi as i32;
            let value = match p {
                TimeExponent::Infinity => (0..=last)
                    .filter(|&i| weight(i) > 0.0)
                    .map(|i| self.norms[i][qi])
                    .fold(0.0, f64::max),
                TimeExponent::One | TimeExponent::Two => {
                    let pow = if p == TimeExponent::One { 1 } else { 2 };
                    let g = |i: usize| weight(i) * self.norms[i][qi].powi(pow);
                    let mut integral = 0.0;
                    for i in 0..last {
                        integral += 0.5 * (self.times[i + 1] - self.times[i]) * (g(i) + g(i + 1));
                    }
                    let t_last = self.times[last];
                    if t_end > t_last && last + 1 < self.times.len() {
                        let span = self.times[last + 1] - t_last;
                        let frac = (t_end - t_last) / span;
                        let g_end = g(last) + frac * (g(last + 1) - g(last));
                        integral += 0.5 * (t_end - t_last) * (g(last) + g_end);
                    }
                    if pow == 1 { integral } else { integral.sqrt() }
                }
            };
            total += 2f64.powf(q as f64 * self.s_eff) * value;
        }
        Ok(total)
    }
}

/// ‖f‖_{L̃^p_T(B^s)} over a recorded series.
pub fn chemin_lerner_norm(
    partition: &Partition,
    series: &[(f64, SpectralField)],
    p: TimeExponent,
    s: f64,
    t_end: f64,
) -> Result<f64> {
    let bs = BlockSeries::from_fields(partition, s, series.iter().map(|(t, f)| (*t, f)))?;
    bs.aggregate(p, t_end, None)
}

/// ‖f‖_{L̃^p_{t,w(t)}(B^s)} with a nonnegative weight sampled on the series times.
pub fn weighted_cl_norm(
    partition: &Partition,
    series: &[(f64, SpectralField)],
    p: TimeExponent,
    s: f64,
    weights: &[f64],
    t_end: f64,
) -> Result<f64> {
    let bs = BlockSeries::from_fields(partition, s, series.iter().map(|(t, f)| (*t, f)))?;
    bs.aggregate(p, t_end, Some(weights))
}

/// Multiplies every coefficient by a real scalar (e.g. e^{Rt}).
pub fn scale_field(f: &SpectralField, factor: f64) -> SpectralField {
    f.map_modes(|_| Complex64::new(factor, 0.0))
}

/// Time-stamped tagged scalars.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    pub times: Vec<f64>,
    pub entries: Vec<BTreeMap<String, f64>>,
}

impl NormSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends values at time `t`, merging into the last record if `t`
    /// equals its time.
    pub fn record(&mut self, t: f64, tag: &str, value: f64) -> Result<()> {
        if !(value >= 0.0) {
            return Err(Error::Validation(format!("norm entry {tag} = {value} is not nonnegative")));
        }
        match self.times.last() {
            Some(&last) if last == t => {
                self.entries.last_mut().expect("entries track times").insert(tag.to_string(), value);
            }
            Some(&last) if t < last => {
                return Err(Error::Validation(format!("time {t} precedes last record {last}")));
            }
            _ => {
                self.times.push(t);
                self.entries.push(BTreeMap::from([(tag.to_string(), value)]));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// (time, value) pairs for one tag.
    pub fn values(&self, tag: &str) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.entries)
            .filter_map(|(t, e)| e.get(tag).map(|v| (*t, *v)))
            .collect()
    }

    pub fn tags(&self) -> Vec<String> {
        let mut all: Vec<String> = self.entries.iter().flat_map(|e| e.keys().cloned()).collect();
        all.sort();
        all.dedup();
        all
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "tag", "value"])?;
        for (t, e) in self.times.iter().zip(&self.entries) {
            for (tag, v) in e {
                w.write_record([format!("{t:e}"), tag.clone(), format!("{v:e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut out = NormSeries::new();
        for row in r.records() {
            let row = row?;
            let parse = |i: usize| -> Result<f64> {
                row.get(i)
                    .ok_or_else(|| Error::Format("short csv row".into()))?
                    .parse::<f64>()
                    .map_err(|e| Error::Format(e.to_string()))
            };
            let tag = row.get(1).ok_or_else(|| Error::Format("missing tag".into()))?;
            out.record(parse(0)?, tag, parse(2)?)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Levels;
    use crate::grid::GridSpec;
    use crate::lp::{bump, default_partition};

    fn grid() -> GridSpec {
        GridSpec::periodic(32, 15).unwrap()
    }

    fn mode3(g: GridSpec, amp: f64) -> SpectralField {
        // g(y) = √2 sin(πy) has unit discrete norm
        let ys = g.y_nodes();
        SpectralField::from_fn(g, Levels::Nodes, |k, j| {
            if k == 3 {
                Complex64::new(amp * 2f64.sqrt() * (std::f64::consts::PI * ys[j]).sin(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    #[test]
    fn mode_three_half_norm_matches_scalar_oracle() {
        let g = grid();
        let p = default_partition(&g).unwrap();
        let oracle: f64 = [1, 2].iter().map(|&q| 2f64.powf(q as f64 / 2.0) * bump(3.0 * 2f64.powi(-q))).sum();
        let got = besov_norm(&p, &mode3(g, 1.0), 0.5).unwrap();
        assert!((got - oracle).abs() < 1e-13);
    }

    #[test]
    fn higher_regularity_uses_derivative() {
        let g = grid();
        let p = default_partition(&g).unwrap();
        let f = mode3(g, 1.0);
        let direct = besov_norm(&p, &f.dx(), 0.5).unwrap();
        assert!((besov_norm(&p, &f, 1.5).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn nonzero_mean_is_rejected_at_low_regularity() {
        let g = grid();
        let p = default_partition(&g).unwrap();
        let f = SpectralField::from_fn(g, Levels::Nodes, |_, _| Complex64::new(1.0, 0.0));
        assert!(matches!(besov_norm(&p, &f, 0.5), Err(Error::Validation(_))));
        assert!(besov_norm(&p, &f, 1.0).is_ok());
        assert!(besov_norm(&p, &f, 3.5).is_err());
    }

    #[test]
    fn constant_series_integrates_linearly() {
        let g = grid();
        let p = default_partition(&g).unwrap();
        let f = mode3(g, 0.7);
        let series: Vec<(f64, SpectralField)> = (0..=10).map(|i| (i as f64 * 0.1, f.clone())).collect();
        let b = besov_norm(&p, &f, 0.5).unwrap();
        let l1 = chemin_lerner_norm(&p, &series, TimeExponent::One, 0.5, 1.0).unwrap();
        assert!((l1 - b).abs() < 1e-12);
        let half = chemin_lerner_norm(&p, &series, TimeExponent::One, 0.5, 0.55).unwrap();
        assert!((half - 0.55 * b).abs() < 1e-12);
        assert!(chemin_lerner_norm(&p, &series, TimeExponent::One, 0.5, 1.5).is_err());
    }

    #[test]
    fn negative_weight_is_rejected_and_zero_weight_vanishes() {
        let g = grid();
        let p = default_partition(&g).unwrap();
        let series: Vec<(f64, SpectralField)> = (0..3).map(|i| (i as f64, mode3(g, 1.0))).collect();
        assert!(matches!(
            weighted_cl_norm(&p, &series, TimeExponent::Two, 0.5, &[1.0, -1.0, 1.0], 2.0),
            Err(Error::Validation(_))
        ));
        let zero = weighted_cl_norm(&p, &series, TimeExponent::Two, 0.5, &[0.0; 3], 2.0).unwrap();
        assert_eq!(zero, 0.0);
        let ones = weighted_cl_norm(&p, &series, TimeExponent::Two, 0.5, &[1.0; 3], 2.0).unwrap();
        let plain = chemin_lerner_norm(&p, &series, TimeExponent::Two, 0.5, 2.0).unwrap();
        assert_eq!(ones, plain);
    }

    #[test]
    fn norm_series_csv_round_trip() {
        let mut s = NormSeries::new();
        s.record(0.0, "theta", 0.0).unwrap();
        s.record(0.0, "theta_rate", 1.5).unwrap();
        s.record(0.1, "theta", 0.15).unwrap();
        assert!(s.record(0.05, "theta", 1.0).is_err());
        assert!(s.record(0.2, "theta", -1.0).is_err());
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = NormSeries::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }
}
