//! The lattice variational problem and the rate constants built from ρ.
//!
//! For period `M` and `E = Z^d ∩ [−M/(πε), M/(πε)]^d`,
//!
//! ```text
//! ρ_{α,ε,M} = sup_{|g|_2 = 1} Σ_{x∈E} ℘_{α,ε}(2πx/M) [Σ_y u(x+y) u(y)]²,
//! u(y) = √Q(2πy/M) g(y),
//! ```
//!
//! and `(2π/M)^d ρ_{α,ε,M}` approximates ρ_{α,ε}. The supremum is taken over
//! nonnegative g (replacing g by |g| never lowers the objective) supported on
//! a finite window, so every computed value is a lower bound.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::riesz_core::{riesz_composition_constant, RieszParams};
use crate::rng::{purpose, Lane};
use crate::spectral::SpectralWeight;
use crate::stable_sim::q_weight;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub restarts: usize,
    /// Relative improvement below which an accepted step counts as converged.
    pub tol: f64,
    /// Window radius as a multiple of the radius of E.
    pub window_factor: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            restarts: 5,
            tol: 1e-11,
            window_factor: 4.0,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeProblem {
    rp: RieszParams,
    sw: SpectralWeight,
    m: f64,
    e_radius: i64,
    window_radius: i64,
    /// Points of E (flattened coordinates) and their weights ℘(2πx/M).
    e_points: Vec<Vec<i64>>,
    e_weights: Vec<f64>,
    /// √Q(2πy/M) over the window, row-major, first axis slowest.
    sqrt_q: Vec<f64>,
    /// For each x ∈ E, the pairs (y, x+y) with both inside the window.
    pairs: Vec<Vec<(u32, u32)>>,
    pub opts: SolverOptions,
}

fn box_points(d: usize, r: i64) -> Vec<Vec<i64>> {
    let side = (2 * r + 1) as usize;
    let count = side.pow(d as u32);
    (0..count)
        .map(|flat| {
            let mut rem = flat;
            let mut p = vec![0i64; d];
            for k in (0..d).rev() {
                p[k] = (rem % side) as i64 - r;
                rem /= side;
            }
            p
        })
        .collect()
}

impl LatticeProblem {
    pub fn new(sw: SpectralWeight, m: f64, opts: SolverOptions) -> Result<Self> {
        let e_radius = (m / (PI * sw.epsilon())).floor() as i64;
        let window_radius = (opts.window_factor * e_radius.max(1) as f64).ceil() as i64;
        Self::with_window(sw, m, window_radius, opts)
    }

    pub fn with_window(sw: SpectralWeight, m: f64, window_radius: i64, opts: SolverOptions) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(LabError::Parameter(format!("period M must be > 0 (got {m})")));
        }
        if sw.alpha() <= 0.0 {
            return Err(LabError::Parameter(
                "the lattice solver needs alpha > 0 (the weight is unbounded at 0 otherwise)".into(),
            ));
        }
        if opts.restarts == 0 {
            return Err(LabError::Parameter("at least one restart is required".into()));
        }
        let rp = *sw.rp();
        let d = rp.d();
        let e_radius = (m / (PI * sw.epsilon())).floor() as i64;
        if window_radius < e_radius.max(1) {
            return Err(LabError::Window(format!(
                "window radius {window_radius} is smaller than the radius {e_radius} of E"
            )));
        }
        let side = (2 * window_radius + 1) as u64;
        let cells = side.pow(d as u32);
        let e_side = (2 * e_radius + 1) as u64;
        if (cells as f64) * (e_side.pow(d as u32) as f64) > 5e8 {
            return Err(LabError::Resolution(format!(
                "lattice problem with {cells} window points and {} frequencies is too large",
                e_side.pow(d as u32)
            )));
        }
        let scale = 2.0 * PI / m;
        let e_points = box_points(d, e_radius);
        let e_weights: Vec<f64> = e_points
            .iter()
            .map(|x| {
                let lam: Vec<f64> = x.iter().map(|&v| scale * v as f64).collect();
                sw.weight(&lam)
            })
            .collect::<Result<_>>()?;
        let window = box_points(d, window_radius);
        let sqrt_q: Vec<f64> = window
            .iter()
            .map(|y| {
                let lam: Vec<f64> = y.iter().map(|&v| scale * v as f64).collect();
                q_weight(&lam, rp.stable()).sqrt()
            })
            .collect();
        let side = side as i64;
        let flat = |p: &[i64]| -> Option<u32> {
            let mut idx = 0i64;
            for &v in p {
                if v.abs() > window_radius {
                    return None;
                }
                idx = idx * side + v + window_radius;
            }
            Some(idx as u32)
        };
        let mut shifted = vec![0i64; d];
        let pairs = e_points
            .iter()
            .map(|x| {
                window
                    .iter()
                    .enumerate()
                    .filter_map(|(iy, y)| {
                        for k in 0..d {
                            shifted[k] = x[k] + y[k];
                        }
                        flat(&shifted).map(|ixy| (iy as u32, ixy))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            rp,
            sw,
            m,
            e_radius,
            window_radius,
            e_points,
            e_weights,
            sqrt_q,
            pairs,
            opts,
        })
    }

    pub fn rp(&self) -> &RieszParams {
        &self.rp
    }

    pub fn sw(&self) -> &SpectralWeight {
        &self.sw
    }

    pub fn period(&self) -> f64 {
        self.m
    }

    pub fn e_radius(&self) -> i64 {
        self.e_radius
    }

    pub fn e_points(&self) -> &[Vec<i64>] {
        &self.e_points
    }

    pub fn window_radius(&self) -> i64 {
        self.window_radius
    }

    pub fn window_len(&self) -> usize {
        self.sqrt_q.len()
    }

    /// Flat window index of the lattice point `y`.
    pub fn window_index(&self, y: &[i64]) -> Option<usize> {
        let side = 2 * self.window_radius + 1;
        let mut idx = 0i64;
        for &v in y {
            if v.abs() > self.window_radius {
                return None;
            }
            idx = idx * side + v + self.window_radius;
        }
        Some(idx as usize)
    }

    /// `(2π/M)^d`.
    pub fn continuum_factor(&self) -> f64 {
        (2.0 * PI / self.m).powi(self.rp.d() as i32)
    }

    /// A copy with every weight replaced by `f(x, ℘(2πx/M))`.
    pub fn map_weights<F: Fn(&[i64], f64) -> f64>(&self, f: F) -> Self {
        let mut out = self.clone();
        for (x, w) in out.e_points.iter().zip(out.e_weights.iter_mut()) {
            *w = f(x, *w);
        }
        out
    }

    fn correlations(&self, u: &[f64]) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|pairs| pairs.iter().map(|&(a, b)| u[a as usize] * u[b as usize]).sum())
            .collect()
    }

    fn value_from(&self, s: &[f64]) -> f64 {
        self.e_weights.iter().zip(s).map(|(w, v)| w * v * v).sum()
    }

    fn check_len(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.window_len() {
            return Err(LabError::Window(format!(
                "g has {} entries but the window holds {}",
                g.len(),
                self.window_len()
            )));
        }
        Ok(())
    }

    /// Objective and its gradient with respect to g.
    pub fn value_and_gradient(&self, g: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_len(g)?;
        let u: Vec<f64> = g.iter().zip(&self.sqrt_q).map(|(a, b)| a * b).collect();
        let s = self.correlations(&u);
        let mut grad = vec![0.0; u.len()];
        for ((pairs, &w), &sx) in self.pairs.iter().zip(&self.e_weights).zip(&s) {
            let c = 2.0 * w * sx;
            if c == 0.0 {
                continue;
            }
            for &(a, b) in pairs {
                grad[a as usize] += c * u[b as usize];
                grad[b as usize] += c * u[a as usize];
            }
        }
        for (gr, q) in grad.iter_mut().zip(&self.sqrt_q) {
            *gr *= q;
        }
        Ok((self.value_from(&s), grad))
    }
}

/// `J(g)`; `g` must have unit norm and live on the problem window.
pub fn objective(lp: &LatticeProblem, g: &[f64]) -> Result<f64> {
    lp.check_len(g)?;
    let norm: f64 = g.iter().map(|v| v * v).sum();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(LabError::Parameter(format!("g must have unit norm (|g|^2 = {norm})")));
    }
    let u: Vec<f64> = g.iter().zip(&lp.sqrt_q).map(|(a, b)| a * b).collect();
    Ok(lp.value_from(&lp.correlations(&u)))
}

fn normalize(g: &mut [f64]) -> bool {
    let n: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return false;
    }
    for v in g.iter_mut() {
        *v /= n;
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalSolution {
    pub g: Vec<f64>,
    pub value: f64,
    pub continuum_value: f64,
    pub trace: Vec<f64>,
    pub restart_values: Vec<f64>,
    /// `(max − min)/max` over restart values.
    pub restarts_agreement: f64,
    pub iterations: usize,
    pub period: f64,
    pub window_radius: i64,
}

impl VariationalSolution {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

struct Ascent {
    g: Vec<f64>,
    value: f64,
    trace: Vec<f64>,
    iterations: usize,
}

/// Projected ascent from `g0` on the nonnegative part of the unit sphere.
///
/// Candidate `normalize((g + s ∇J/(4J))_+)`: `s → ∞` is the power step
/// `g ∝ ∇J`. Accepted steps double `s`, rejected ones halve it.
fn ascend(lp: &LatticeProblem, mut g: Vec<f64>) -> Result<Ascent> {
    let opts = lp.opts;
    if !normalize(&mut g) {
        return Err(LabError::Parameter("initial g is zero".into()));
    }
    let (mut value, mut grad) = lp.value_and_gradient(&g)?;
    let mut trace = vec![value];
    let mut step = 1.0f64;
    let mut cand = vec![0.0; g.len()];
    for it in 0..opts.max_iters {
        let scale = step / (4.0 * value.max(f64::MIN_POSITIVE));
        for ((c, gi), di) in cand.iter_mut().zip(&g).zip(&grad) {
            *c = (gi + scale * di).max(0.0);
        }
        if !normalize(&mut cand) {
            step *= 0.5;
            continue;
        }
        let (v, gr) = lp.value_and_gradient(&cand)?;
        if v >= value {
            let gain = (v - value) / v.max(f64::MIN_POSITIVE);
            std::mem::swap(&mut g, &mut cand);
            grad = gr;
            value = v;
            trace.push(value);
            step = (step * 2.0).min(1e12);
            if gain < opts.tol {
                return Ok(Ascent {
                    g,
                    value,
                    trace,
                    iterations: it + 1,
                });
            }
        } else {
            step *= 0.5;
            if step < 1e-14 {
                return Ok(Ascent {
                    g,
                    value,
                    trace,
                    iterations: it + 1,
                });
            }
        }
    }
    Err(LabError::Convergence {
        iterations: opts.max_iters,
        best: value,
        trace,
    })
}

fn initial_guess(lp: &LatticeProblem, restart: usize) -> Vec<f64> {
    let d = lp.rp.d();
    let scale = 2.0 * PI / lp.m;
    let window = box_points(d, lp.window_radius);
    let bump: Vec<f64> = window
        .iter()
        .map(|y| {
            let r2: f64 = y.iter().map(|&v| (scale * v as f64).powi(2)).sum();
            (-0.5 * r2).exp()
        })
        .collect();
    if restart == 0 {
        return bump;
    }
    let mut rng = Lane::derive(lp.opts.seed, purpose::RESTART).replica(restart as u64).rng();
    bump.iter()
        .map(|b| b * rng.random_range(0.05..1.0) + 1e-3 * rng.random::<f64>())
        .collect()
}

/// Multi-restart ascent; the best restart is returned.
pub fn solve_lattice(lp: &LatticeProblem) -> Result<VariationalSolution> {
    let runs: Vec<Ascent> = (0..lp.opts.restarts)
        .into_par_iter()
        .map(|r| ascend(lp, initial_guess(lp, r)))
        .collect::<Result<_>>()?;
    let restart_values: Vec<f64> = runs.iter().map(|r| r.value).collect();
    let max = restart_values.iter().cloned().fold(f64::MIN, f64::max);
    let min = restart_values.iter().cloned().fold(f64::MAX, f64::min);
    let best = runs
        .into_iter()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one restart");
    Ok(VariationalSolution {
        continuum_value: lp.continuum_factor() * best.value,
        value: best.value,
        g: best.g,
        trace: best.trace,
        restarts_agreement: if max > 0.0 { (max - min) / max } else { 0.0 },
        restart_values,
        iterations: best.iterations,
        period: lp.m,
        window_radius: lp.window_radius,
    })
}

/// Cache key for a solution.
pub fn solution_key(lp: &LatticeProblem) -> String {
    let desc = format!(
        "{}:{}:{}:{}:{}:{}:{}:{}",
        lp.rp.d(),
        lp.rp.beta(),
        lp.rp.sigma(),
        lp.sw.alpha(),
        lp.sw.epsilon(),
        lp.m,
        lp.window_radius,
        lp.opts.seed
    );
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in desc.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Solves, reusing a cached solution under `dir` when one exists.
pub fn solve_lattice_cached(lp: &LatticeProblem, dir: Option<&Path>) -> Result<VariationalSolution> {
    let Some(dir) = dir else {
        return solve_lattice(lp);
    };
    let path: PathBuf = dir.join(format!("rho-{}.json", solution_key(lp)));
    if let Ok(sol) = VariationalSolution::load(&path) {
        return Ok(sol);
    }
    let sol = solve_lattice(lp)?;
    std::fs::create_dir_all(dir)?;
    sol.save(&path)?;
    Ok(sol)
}

/// Relative change of the value when the window radius is doubled.
pub fn window_saturation(lp: &LatticeProblem) -> Result<f64> {
    let base = solve_lattice(lp)?;
    let wide = LatticeProblem::with_window(lp.sw, lp.m, 2 * lp.window_radius, lp.opts)?;
    let big = solve_lattice(&wide)?;
    Ok((big.value - base.value).abs() / big.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoContinuum {
    pub periods: Vec<f64>,
    pub lattice_values: Vec<f64>,
    /// `(2π/M)^d ρ_{α,ε,M}`.
    pub continuum_values: Vec<f64>,
    /// `|v_{i+1} − v_i| / v_{i+1}`.
    pub relative_changes: Vec<f64>,
    pub last: f64,
    /// Richardson value from the last three terms (the last value when the
    /// differences do not contract).
    pub extrapolated: f64,
    pub observed_order: Option<f64>,
    pub non_monotone: bool,
    pub restart_spreads: Vec<f64>,
    /// Ascent trace of the best restart at each period.
    pub traces: Vec<Vec<f64>>,
}

pub fn rho_continuum(sw: &SpectralWeight, periods: &[f64], opts: SolverOptions) -> Result<RhoContinuum> {
    if periods.len() < 3 || periods.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::Parameter(
            "rho_continuum needs at least three increasing periods".into(),
        ));
    }
    let cache = std::env::var_os("RIESZ_LAB_CACHE").map(PathBuf::from);
    let mut lattice_values = Vec::new();
    let mut continuum_values = Vec::new();
    let mut restart_spreads = Vec::new();
    let mut traces = Vec::new();
    for &m in periods {
        let lp = LatticeProblem::new(*sw, m, opts)?;
        let sol = solve_lattice_cached(&lp, cache.as_deref())?;
        lattice_values.push(sol.value);
        continuum_values.push(sol.continuum_value);
        restart_spreads.push(sol.restarts_agreement);
        traces.push(sol.trace);
    }
    let relative_changes: Vec<f64> = continuum_values
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / w[1])
        .collect();
    let n = continuum_values.len();
    let (v1, v2, v3) = (continuum_values[n - 3], continuum_values[n - 2], continuum_values[n - 1]);
    let (d1, d2) = (v2 - v1, v3 - v2);
    let ratio_m = periods[n - 1] / periods[n - 2];
    let (extrapolated, observed_order) = if d1 != 0.0 && d2 != 0.0 && d2 / d1 > 0.0 && d2.abs() < d1.abs() {
        let k = (d1 / d2).ln() / ratio_m.ln();
        (v3 + d2 / (ratio_m.powf(k) - 1.0), Some(k))
    } else {
        (v3, None)
    };
    let incr = continuum_values.windows(2).all(|w| w[1] >= w[0]);
    let decr = continuum_values.windows(2).all(|w| w[1] <= w[0]);
    let non_monotone = !(incr || decr);
    if non_monotone {
        log::warn!("continuum sequence {continuum_values:?} is not monotone");
    }
    Ok(RhoContinuum {
        periods: periods.to_vec(),
        lattice_values,
        last: v3,
        continuum_values,
        relative_changes,
        extrapolated,
        observed_order,
        non_monotone,
        restart_spreads,
        traces,
    })
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(LabError::Parameter(format!("rho must be > 0 (got {rho})")));
    }
    Ok(())
}

fn check_pair(beta: f64, sigma: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 2.0) || !(sigma > 0.0) || sigma >= 2.0 * beta {
        return Err(LabError::Parameter(format!(
            "need 0 < beta <= 2 and 0 < sigma < 2*beta (got beta = {beta}, sigma = {sigma})"
        )));
    }
    Ok(())
}

/// `2^{−β/σ} (σ/β) ((2β−σ)/β)^{(2β−σ)/σ} ρ^{−β/σ}`.
pub fn ldp_rate_constant(beta: f64, sigma: f64, rho: f64) -> Result<f64> {
    check_pair(beta, sigma)?;
    check_rho(rho)?;
    let k = beta / sigma;
    let e = (2.0 * beta - sigma) / sigma;
    Ok(2f64.powf(-k) * (sigma / beta) * ((2.0 * beta - sigma) / beta).powf(e) * rho.powf(-k))
}

/// `((β−σ)/β) (β/(2β−σ))^{(2β−σ)/(β−σ)} ρ^{β/(β−σ)}`.
pub fn polymer_growth_constant(beta: f64, sigma: f64, rho: f64) -> Result<f64> {
    check_pair(beta, sigma)?;
    check_rho(rho)?;
    if sigma >= beta {
        return Err(LabError::Regime(format!(
            "the growth constant needs sigma < beta (got sigma = {sigma}, beta = {beta})"
        )));
    }
    let b = beta - sigma;
    let c = 2.0 * beta - sigma;
    Ok((b / beta) * (beta / c).powf(c / b) * rho.powf(beta / b))
}

/// `2ρ (β/σ)^{σ/β} (β/(2β−σ))^{(2β−σ)/β}`.
pub fn lil_constant(beta: f64, sigma: f64, rho: f64) -> Result<f64> {
    check_pair(beta, sigma)?;
    check_rho(rho)?;
    let c = 2.0 * beta - sigma;
    Ok(2.0 * rho * (beta / sigma).powf(sigma / beta) * (beta / c).powf(c / beta))
}

/// `ρ^{−1}`.
pub fn collapse_time(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(1.0 / rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialConstants {
    pub c_p: f64,
    pub sigma: f64,
    /// Limit of `a^{−2β/(2p−d+β)} log P{±F(1) ≥ a}` (negative).
    pub rate: f64,
    pub lil: f64,
}

/// Constants of the action F for `d/2 < p < min(d, (d+β)/2)`, with
/// `σ = 2p − d` and `ρ_p` the value of ρ at that σ.
///
/// They follow from `F(1) = U √(2 C_p η([0,1]²_<))`, the variance given by
/// the composition identity, mixed with the Gaussian tail of U:
/// rate `−((β+σ)/β) (8 C_p ρ_p)^{−β/(β+σ)} ((2β−σ)/β)^{(2β−σ)/(β+σ)}` and
/// LIL constant `√(8 C_p ρ_p) (β/(β+σ))^{(β+σ)/(2β)} (β/(2β−σ))^{(2β−σ)/(2β)}`.
pub fn potential_constants(d: usize, beta: f64, p: f64, rho_p: f64) -> Result<PotentialConstants> {
    let df = d as f64;
    if !(p > 0.5 * df && p < df.min(0.5 * (df + beta))) {
        return Err(LabError::Parameter(format!(
            "p must satisfy d/2 < p < min(d, (d+beta)/2) (got p = {p}, d = {d}, beta = {beta})"
        )));
    }
    check_rho(rho_p)?;
    let sigma = 2.0 * p - df;
    let c_p = riesz_composition_constant(d, sigma)?;
    let bs = beta + sigma;
    let c = 2.0 * beta - sigma;
    let rate = -(bs / beta) * (8.0 * c_p * rho_p).powf(-beta / bs) * (c / beta).powf(c / bs);
    let lil = (8.0 * c_p * rho_p).sqrt() * (beta / bs).powf(bs / (2.0 * beta)) * (beta / c).powf(c / (2.0 * beta));
    Ok(PotentialConstants { c_p, sigma, rate, lil })
}
