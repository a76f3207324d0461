//! Monte Carlo harness.
//!
//! Replicas are pure functions of `(base seed, replica index)`, evaluated as
//! an order-preserving parallel map, so the sample vector does not depend on
//! the number of worker threads.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quad::weighted_linear_fit;

/// Mergeable running moments (Chan et al. pairwise update).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub n: u64,
    pub mean: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
    pub min: f64,
    pub max: f64,
    /// Seed lineage: `(base seed, first replica, replica count)` per merged run.
    pub lineage: Vec<(u64, u64, u64)>,
}

impl Default for McEstimate {
    fn default() -> Self {
        Self::new()
    }
}

impl McEstimate {
    pub fn new() -> Self {
        Self {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            lineage: Vec::new(),
        }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let mut e = Self::new();
        for &x in xs {
            e.push(x);
        }
        e
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&mut self, other: &McEstimate) {
        if other.n == 0 {
            self.lineage.extend_from_slice(&other.lineage);
            return;
        }
        if self.n == 0 {
            let lineage = std::mem::take(&mut self.lineage);
            *self = other.clone();
            self.lineage = lineage;
            self.lineage.extend_from_slice(&other.lineage);
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.mean = mean;
        self.n = n;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.lineage.extend_from_slice(&other.lineage);
    }

    /// Unbiased variance; `None` when `n < 2`.
    pub fn variance(&self) -> Option<f64> {
        (self.n >= 2).then(|| self.m2 / (self.n - 1) as f64)
    }

    pub fn stderr(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.n as f64).sqrt())
    }
}

/// Result of [`run_replicas`].
#[derive(Debug, Clone)]
pub struct ReplicaRun {
    pub samples: Vec<f64>,
    pub estimate: McEstimate,
    pub base_seed: u64,
    pub first_replica: u64,
}

/// Evaluates `sampler(replica_index)` for `first .. first + n` in parallel,
/// preserving order. The sampler must derive all randomness from the base seed
/// and the index it is given.
pub fn run_replicas<F>(n: u64, base_seed: u64, first: u64, sampler: F) -> Result<ReplicaRun>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let samples: Vec<f64> = (first..first + n)
        .into_par_iter()
        .map(|i| {
            sampler(i).map_err(|e| LabError::Replica {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut estimate = McEstimate::from_samples(&samples);
    estimate.lineage.push((base_seed, first, n));
    Ok(ReplicaRun {
        samples,
        estimate,
        base_seed,
        first_replica: first,
    })
}

/// Parallel order-preserving map over replica indices returning arbitrary data.
pub fn map_replicas<T, F>(n: u64, sampler: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            sampler(i).map_err(|e| LabError::Replica {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Writes `replica,value,seed_lane` CSV.
pub fn write_samples_csv(path: &Path, run: &ReplicaRun) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "replica,value,seed_lane")?;
    for (k, v) in run.samples.iter().enumerate() {
        let idx = run.first_replica + k as u64;
        writeln!(f, "{idx},{v:.12e},{}:{idx}", run.base_seed)?;
    }
    Ok(())
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub threshold: f64,
    pub count: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Empirical exceedance curve `P̂{V ≥ a_i}` with 95% Wilson intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub n: u64,
    pub points: Vec<TailPoint>,
}

impl TailCurve {
    pub fn from_samples(samples: &[f64], thresholds: &[f64]) -> Result<Self> {
        if thresholds.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::Parameter("thresholds must increase".into()));
        }
        let mut sorted: Vec<f64> = samples.iter().copied().filter(|x| !x.is_nan()).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as u64;
        let points = thresholds
            .iter()
            .map(|&a| {
                let below = sorted.partition_point(|&x| x < a);
                let count = n - below as u64;
                let (lo, hi) = wilson_interval(count, n, 1.96);
                TailPoint {
                    threshold: a,
                    count,
                    p_hat: count as f64 / n as f64,
                    ci_low: lo,
                    ci_high: hi,
                }
            })
            .collect();
        Ok(Self { n, points })
    }

    /// Data-quality gate: exceedance estimates are nonincreasing up to CI overlap.
    pub fn is_monotone(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].p_hat <= w[0].p_hat || w[1].ci_low <= w[0].ci_high)
    }

    pub fn write_plot_data(&self, path: &Path, exponent: f64) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "# a^{exponent:.6} log_p_hat")?;
        for p in self.points.iter().filter(|p| p.count > 0) {
            writeln!(f, "{:.12e} {:.12e}", p.threshold.powf(exponent), p.p_hat.ln())?;
        }
        Ok(())
    }
}

/// Thresholds whose abscissae `a^{β/σ}` are equally spaced between the
/// empirical quantiles `q_lo < q_hi` of the sample (e.g. 0.95 and 0.999).
pub fn tail_thresholds(
    samples: &[f64],
    q_lo: f64,
    q_hi: f64,
    count: usize,
    exponent: f64,
) -> Result<Vec<f64>> {
    if count < 2 || !(q_lo < q_hi) {
        return Err(LabError::Parameter("need count >= 2 and q_lo < q_hi".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&s, q_lo);
    let hi = quantile_sorted(&s, q_hi);
    if !(lo > 0.0) || !(hi > lo) {
        return Err(LabError::Domain(
            "tail thresholds need a positive, nondegenerate quantile range".into(),
        ));
    }
    let (xl, xh) = (lo.powf(exponent), hi.powf(exponent));
    Ok((0..count)
        .map(|i| (xl + (xh - xl) * i as f64 / (count - 1) as f64).powf(1.0 / exponent))
        .collect())
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    /// Fitted slope of `log P̂` against `a^{β/σ}` (the empirical rate constant).
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r2: f64,
    pub points_used: usize,
    pub points_dropped: usize,
}

impl ExponentFit {
    /// 95% normal interval for the slope.
    pub fn slope_ci(&self) -> (f64, f64) {
        (
            self.slope - 1.96 * self.slope_stderr,
            self.slope + 1.96 * self.slope_stderr,
        )
    }
}

/// Least-squares fit of `log P̂{V ≥ a}` against `a^{β/σ}`.
///
/// Points are weighted by the inverse delta-method variance of `log P̂`,
/// `count / (1 − p̂)`. Thresholds with zero exceedances are dropped with a
/// warning.
pub fn ldp_exponent_fit(curve: &TailCurve, beta: f64, sigma: f64) -> Result<ExponentFit> {
    let exponent = beta / sigma;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    let mut dropped = 0;
    for p in &curve.points {
        if p.count == 0 {
            dropped += 1;
            continue;
        }
        x.push(p.threshold.powf(exponent));
        y.push(p.p_hat.ln());
        let q = (1.0 - p.p_hat).max(1e-12);
        w.push(p.count as f64 / q);
    }
    if dropped > 0 {
        log::warn!("tail fit: dropped {dropped} thresholds with zero exceedances");
    }
    if x.len() < 4 {
        return Err(LabError::Domain(format!(
            "tail fit needs at least 4 thresholds with exceedances (have {})",
            x.len()
        )));
    }
    let (slope, intercept, slope_stderr, r2) = weighted_linear_fit(&x, &y, &w);
    Ok(ExponentFit {
        slope,
        intercept,
        slope_stderr,
        r2,
        points_used: x.len(),
        points_dropped: dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction of the Kolmogorov distribution).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < 50 || b.len() < 50 {
        return Err(LabError::Parameter(format!(
            "KS test needs at least 50 samples per group (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let statistic = ks_statistic(a, b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * statistic;
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_survival(lambda),
    })
}

pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// `Q_KS(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Small-λ form converges faster here (Jacobi theta transform).
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 0..20 {
            let kk = (2 * k + 1) as f64;
            s += (-kk * kk * c).exp();
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * s;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
