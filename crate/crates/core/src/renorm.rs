//! Triangular (dyadic) approximation and the renormalized series γ.
//!
//! `[0,t]²_<` is the union of the rectangles
//! `A_l^k = [2l L, (2l+1) L) × [(2l+1) L, (2l+2) L)`, `L = t/2^{k+1}`, and
//! `γ([0,t]²_<) = Σ_k Σ_l (η(A_l^k) − E η(A_l^k))`.
//!
//! Each cell touches the diagonal at its corner `b = (2l+1)L`. Its quadrature
//! uses the same corner-graded rule scaled by `L`: times `b − Lμ_i` for `r`
//! and `b + Lμ_j` for `s`. Every cell at every level is therefore an exact
//! rescaling of one reference rule, which makes the per-cell relative error
//! level-uniform and keeps the discretized cell laws exactly self-similar.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::mc_lab::{ks_two_sample, map_replicas, KsResult};
use crate::quad::linear_fit;
use crate::riesz_core::{cross_sum, mean_rectangle, zeta, QuadratureSpec, RieszParams, TimeRule};
use crate::rng::{purpose, Lane};
use crate::stable_sim::{sample_path_at, StablePath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicCell {
    pub level: u32,
    pub index: u64,
    pub horizon: f64,
}

impl DyadicCell {
    /// Side length `t/2^{k+1}`.
    pub fn side(&self) -> f64 {
        self.horizon / 2f64.powi(self.level as i32 + 1)
    }

    /// The corner `(2l+1) t/2^{k+1}` shared with the diagonal.
    pub fn corner(&self) -> f64 {
        (2 * self.index + 1) as f64 * self.side()
    }

    /// `([r_lo, r_hi], [s_lo, s_hi])`.
    pub fn rectangle(&self) -> ([f64; 2], [f64; 2]) {
        let l = self.side();
        let a = 2.0 * self.index as f64 * l;
        ([a, a + l], [a + l, a + 2.0 * l])
    }

    pub fn mean(&self, rp: &RieszParams) -> Result<f64> {
        let ([a, b], [c, d]) = self.rectangle();
        mean_rectangle(rp, a, b, c, d)
    }
}

/// All cells of levels `0..=max_level`, level by level.
pub fn dyadic_cells(t: f64, max_level: u32) -> Vec<DyadicCell> {
    let mut out = Vec::with_capacity((1usize << (max_level + 1)) - 1);
    for k in 0..=max_level {
        for l in 0..(1u64 << k) {
            out.push(DyadicCell {
                level: k,
                index: l,
                horizon: t,
            });
        }
    }
    out
}

/// Corner-graded reference rule on `[0,1]`: breakpoints `u_i = (i/m)^g`,
/// nodes `((i−½)/m)^g`, weights `u_i − u_{i−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub breaks: Vec<f64>,
}

impl CellRule {
    pub fn new(m: usize, grading: f64) -> Result<Self> {
        if m == 0 || !(grading >= 1.0) {
            return Err(LabError::Parameter(
                "cell rule needs m >= 1 and grading >= 1".into(),
            ));
        }
        let mf = m as f64;
        let breaks: Vec<f64> = (0..=m).map(|i| (i as f64 / mf).powf(grading)).collect();
        let nodes = (1..=m).map(|i| ((i as f64 - 0.5) / mf).powf(grading)).collect();
        let weights = breaks.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            nodes,
            weights,
            breaks,
        })
    }

    pub fn from_spec(q: &QuadratureSpec, rp: &RieszParams) -> Result<Self> {
        Self::new(q.nodes_per_cell, q.grading(rp))
    }

    /// Sample times `0, Tμ_1, Tu_1, …, Tμ_m, Tu_m` on which the midpoint rule
    /// reproduces this rule over `[0, T]`.
    pub fn interleaved_times(&self, horizon: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.nodes.len() + 1);
        out.push(0.0);
        for (mu, u) in self.nodes.iter().zip(&self.breaks[1..]) {
            out.push(horizon * mu);
            out.push(horizon * u);
        }
        out
    }
}

/// Sample times and per-cell node indices for levels `0..=K`.
#[derive(Debug, Clone)]
pub struct RenormGrid {
    horizon: f64,
    max_level: u32,
    rule: CellRule,
    times: Vec<f64>,
    cells: Vec<DyadicCell>,
    r_idx: Vec<Vec<usize>>,
    s_idx: Vec<Vec<usize>>,
}

impl RenormGrid {
    pub fn new(t: f64, max_level: u32, rule: CellRule) -> Result<Self> {
        if !(t > 0.0) {
            return Err(LabError::Parameter("horizon must be positive".into()));
        }
        if max_level > 20 {
            return Err(LabError::Parameter("max level above 20 is not supported".into()));
        }
        let cells = dyadic_cells(t, max_level);
        let mut times = vec![0.0, t];
        for c in &cells {
            let (b, l) = (c.corner(), c.side());
            for mu in &rule.nodes {
                times.push(b - l * mu);
                times.push(b + l * mu);
            }
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let find = |x: f64| times.binary_search_by(|y| y.total_cmp(&x)).unwrap();
        let mut r_idx = Vec::with_capacity(cells.len());
        let mut s_idx = Vec::with_capacity(cells.len());
        for c in &cells {
            let (b, l) = (c.corner(), c.side());
            r_idx.push(rule.nodes.iter().map(|mu| find(b - l * mu)).collect());
            s_idx.push(rule.nodes.iter().map(|mu| find(b + l * mu)).collect());
        }
        Ok(Self {
            horizon: t,
            max_level,
            rule,
            times,
            cells,
            r_idx,
            s_idx,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn cells(&self) -> &[DyadicCell] {
        &self.cells
    }

    pub fn rule(&self) -> &CellRule {
        &self.rule
    }

    pub fn sample_path(&self, rp: &RieszParams, lane: Lane) -> Result<StablePath> {
        sample_path_at(rp.stable(), self.horizon, self.times.clone(), lane)
    }

    fn check_path(&self, path: &StablePath) -> Result<()> {
        let ok = path.times().len() == self.times.len()
            && path
                .times()
                .iter()
                .zip(&self.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * self.horizon);
        if !ok {
            return Err(LabError::Parameter(
                "path was not sampled on the renormalization grid".into(),
            ));
        }
        Ok(())
    }

    /// Quadrature estimate of `η(A)` for cell number `i` of [`Self::cells`].
    pub fn cell_eta(&self, path: &StablePath, i: usize, rp: &RieszParams) -> f64 {
        let l = self.cells[i].side();
        let w: Vec<f64> = self.rule.weights.iter().map(|w| w * l).collect();
        let pick = |idx: &[usize]| -> Vec<Vec<f64>> {
            path.coords()
                .iter()
                .map(|c| idx.iter().map(|&j| c[j]).collect())
                .collect()
        };
        let xr = pick(&self.r_idx[i]);
        let xs = pick(&self.s_idx[i]);
        cross_sum(&xr, &w, &xs, &w, 0.5 * rp.sigma())
    }

    /// Truncated series `Σ_{k ≤ K} Σ_l (η(A_l^k) − E η(A_l^k))` on a path
    /// sampled at [`Self::times`].
    pub fn gamma(&self, path: &StablePath, rp: &RieszParams) -> Result<RenormResult> {
        rp.require_renormalizable("gamma")?;
        rp.require_sigma_below_d("gamma")?;
        self.check_path(path)?;
        let levels = self.max_level as usize + 1;
        let mut level_sums = vec![0.0; levels];
        let mut level_means = vec![0.0; levels];
        let mut cell_values = Vec::with_capacity(self.cells.len());
        // Means depend only on the level; compute once per level.
        let mut mean_of_level = Vec::with_capacity(levels);
        for k in 0..levels {
            let c = DyadicCell {
                level: k as u32,
                index: 0,
                horizon: self.horizon,
            };
            mean_of_level.push(c.mean(rp)?);
        }
        for (i, c) in self.cells.iter().enumerate() {
            let v = self.cell_eta(path, i, rp);
            if !v.is_finite() {
                return Err(LabError::Singular(format!(
                    "cell (k={}, l={}) has coincident positions",
                    c.level, c.index
                )));
            }
            let mu = mean_of_level[c.level as usize];
            let centered = v - mu;
            level_sums[c.level as usize] += centered;
            level_means[c.level as usize] += mu;
            cell_values.push(centered);
        }
        let decay = 3.0 - 2.0 * rp.ratio();
        // Within-level cells are i.i.d. with known mean 0 after centering, so
        // 2^k · mean(x²) estimates the level variance.
        let mut num = 0.0;
        let mut den = 0.0;
        let mut start = 0;
        for k in 0..levels {
            let nk = 1usize << k;
            let ms: f64 = cell_values[start..start + nk].iter().map(|x| x * x).sum::<f64>() / nk as f64;
            let var_k = nk as f64 * ms;
            num += nk as f64 * var_k * 2f64.powf(decay * k as f64);
            den += nk as f64;
            start += nk;
        }
        let c = (num / den).sqrt();
        let r = 2f64.powf(-0.5 * decay);
        let tail_bound = c * r.powi(self.max_level as i32 + 1) / (1.0 - r);
        Ok(RenormResult {
            value: level_sums.iter().sum(),
            max_level: self.max_level,
            level_sums,
            level_means,
            tail_bound,
            scale_fit: c,
            cell_values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormResult {
    /// `Σ_{k ≤ K}` of the centered level sums.
    pub value: f64,
    pub max_level: u32,
    pub level_sums: Vec<f64>,
    /// `Σ_l E η(A_l^k)` per level (the subtracted centering).
    pub level_means: Vec<f64>,
    /// Bound on the L² norm of the discarded levels `k > K`, from the model
    /// `√Var_k = c · 2^{−(3−2σ/β)k/2}` with `c` fitted on this path.
    pub tail_bound: f64,
    pub scale_fit: f64,
    /// Centered cell values in the order of [`dyadic_cells`].
    pub cell_values: Vec<f64>,
}

/// Builds the grid from the path horizon and evaluates the truncated series.
pub fn gamma_renormalized(
    path: &StablePath,
    rp: &RieszParams,
    max_level: u32,
    q: &QuadratureSpec,
) -> Result<RenormResult> {
    rp.require_renormalizable("gamma")?;
    let grid = RenormGrid::new(path.horizon(), max_level, CellRule::from_spec(q, rp)?)?;
    grid.gamma(path, rp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelProfile {
    /// Monte Carlo variance of the centered level sum, `k = 0..=K`.
    pub variances: Vec<f64>,
    pub variance_stderr: Vec<f64>,
    /// Sum over cells of the per-cell variances at each level.
    pub cell_variance_sums: Vec<f64>,
    pub means: Vec<f64>,
    pub mean_stderr: Vec<f64>,
    /// Least-squares slope of `log₂ Var_k` against `k`.
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub replicas: u64,
    pub seed: u64,
}

fn sample_var_with_se(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - m2 * m2).max(0.0) / n).sqrt();
    (mean, var, se)
}

/// Per-level variances of the centered level sums over `replicas` paths.
pub fn level_variance_profile(
    rp: &RieszParams,
    max_level: u32,
    replicas: u64,
    seed: u64,
    q: &QuadratureSpec,
) -> Result<LevelProfile> {
    rp.require_renormalizable("level variance profile")?;
    if replicas < 2 {
        return Err(LabError::Parameter("need at least 2 replicas".into()));
    }
    let grid = RenormGrid::new(1.0, max_level, CellRule::from_spec(q, rp)?)?;
    let lane = Lane::derive(seed, purpose::PATH);
    let runs = map_replicas(replicas, |i| {
        let path = grid.sample_path(rp, lane.replica(i))?;
        grid.gamma(&path, rp)
    })?;
    let levels = max_level as usize + 1;
    let mut variances = Vec::with_capacity(levels);
    let mut variance_stderr = Vec::with_capacity(levels);
    let mut means = Vec::with_capacity(levels);
    let mut mean_stderr = Vec::with_capacity(levels);
    let mut cell_variance_sums = Vec::with_capacity(levels);
    let mut start = 0;
    for k in 0..levels {
        let xs: Vec<f64> = runs.iter().map(|r| r.level_sums[k]).collect();
        let (mean, var, se) = sample_var_with_se(&xs);
        means.push(mean);
        mean_stderr.push((var / xs.len() as f64).sqrt());
        variances.push(var);
        variance_stderr.push(se);
        let nk = 1usize << k;
        let mut sum = 0.0;
        for c in start..start + nk {
            let cs: Vec<f64> = runs.iter().map(|r| r.cell_values[c]).collect();
            sum += sample_var_with_se(&cs).1;
        }
        cell_variance_sums.push(sum);
        start += nk;
    }
    let ks: Vec<f64> = (0..levels).map(|k| k as f64).collect();
    let logs: Vec<f64> = variances.iter().map(|v| v.log2()).collect();
    let (slope, intercept, slope_stderr, _) = linear_fit(&ks, &logs);
    Ok(LevelProfile {
        variances,
        variance_stderr,
        cell_variance_sums,
        means,
        mean_stderr,
        slope,
        slope_stderr,
        intercept,
        replicas,
        seed,
    })
}

/// `2^{−(k+1)(2−σ/β)}`, the factor relating `η(A_l^k)` to `ζ([0,t]²)`.
pub fn cell_scale_factor(rp: &RieszParams, level: u32) -> f64 {
    2f64.powf(-((level + 1) as f64) * (2.0 - rp.ratio()))
}

/// Samples of `η(A)` for one cell, each from a path sampled only at the
/// cell's own nodes.
pub fn cell_eta_samples(
    rp: &RieszParams,
    cell: DyadicCell,
    replicas: u64,
    lane: Lane,
    q: &QuadratureSpec,
) -> Result<Vec<f64>> {
    let rule = CellRule::from_spec(q, rp)?;
    let (b, l) = (cell.corner(), cell.side());
    let mut times = vec![0.0];
    times.extend(rule.nodes.iter().rev().map(|mu| b - l * mu));
    times.extend(rule.nodes.iter().map(|mu| b + l * mu));
    let m = rule.nodes.len();
    let w: Vec<f64> = rule.weights.iter().map(|w| w * l).collect();
    map_replicas(replicas, |i| {
        let path = sample_path_at(rp.stable(), cell.horizon, times.clone(), lane.replica(i))?;
        // r-nodes were pushed in reverse order.
        let xr: Vec<Vec<f64>> = path
            .coords()
            .iter()
            .map(|c| (0..m).map(|j| c[m - j]).collect())
            .collect();
        let xs: Vec<Vec<f64>> = path
            .coords()
            .iter()
            .map(|c| (0..m).map(|j| c[m + 1 + j]).collect())
            .collect();
        Ok(cross_sum(&xr, &w, &xs, &w, 0.5 * rp.sigma()))
    })
}

/// Samples of `ζ([0,t]²)` with both paths on the interleaved reference grid.
pub fn zeta_square_samples(
    rp: &RieszParams,
    t: f64,
    replicas: u64,
    lane_a: Lane,
    lane_b: Lane,
    q: &QuadratureSpec,
) -> Result<Vec<f64>> {
    let rule = CellRule::from_spec(q, rp)?;
    let times = rule.interleaved_times(t);
    let mid = QuadratureSpec {
        rule: TimeRule::Midpoint,
        ..q.clone()
    };
    map_replicas(replicas, |i| {
        let a = sample_path_at(rp.stable(), t, times.clone(), lane_a.replica(i))?;
        let b = sample_path_at(rp.stable(), t, times.clone(), lane_b.replica(i))?;
        zeta(&a, &b, rp, &mid, t, t)
    })
}

/// Two-sample KS between `η(A_l^k)` and `2^{−(k+1)(2−σ/β)} ζ([0,t]²)`.
pub fn cell_distribution_check(
    rp: &RieszParams,
    cell: DyadicCell,
    replicas: u64,
    seed: u64,
    q: &QuadratureSpec,
) -> Result<KsResult> {
    rp.require_renormalizable("cell distribution check")?;
    let etas = cell_eta_samples(rp, cell, replicas, Lane::derive(seed, purpose::PATH), q)?;
    let scale = cell_scale_factor(rp, cell.level);
    let zetas: Vec<f64> = zeta_square_samples(
        rp,
        cell.horizon,
        replicas,
        Lane::derive(seed, purpose::PATH_B),
        Lane::derive(seed, purpose::NOISE),
        q,
    )?
    .into_iter()
    .map(|z| scale * z)
    .collect();
    ks_two_sample(&etas, &zetas)
}
