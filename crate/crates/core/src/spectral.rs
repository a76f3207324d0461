//! Smoothing kernel, spectral weight and the smoothed functional η_{α,ε}.
//!
//! * `h(x) = (4π)^{−d} Π_j (2 sin x_j / x_j)²`, a probability density whose
//!   Fourier transform is the tent product `ĥ(λ) = Π_j (1 − |λ_j|/2)_+`;
//! * `℘_{α,ε}(λ) = C_{d,σ} ĥ²(ελ) / (α + |λ|^{d−σ})`, supported on
//!   `|λ_j| < 2/ε`;
//! * `θ_{α,ε}(x) = ∫ e^{ix·λ} ℘_{α,ε}(λ) dλ`;
//! * `η_{α,ε}([0,τ]²) = ∫∫ θ(X_s − X_r) dr ds = ∫ ℘(λ) |∫_0^τ e^{iλ·X_s} ds|² dλ`.
//!
//! The time form interpolates a tabulated θ; the frequency form sums over a
//! fixed reference grid on the support box. Both return full-square values;
//! the ordered value `[0,τ]²_<` is half of it.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quad::graded_rule;
use crate::riesz_core::{c_d_sigma, gather, rule_nodes, QuadratureSpec, RieszParams};
use crate::stable_sim::{min_max, StablePath};

/// `h(x) = (4π)^{−d} Π_j (2 sin x_j / x_j)²`.
pub fn h_density(x: &[f64]) -> f64 {
    let norm = (4.0 * PI).powi(x.len() as i32);
    x.iter()
        .map(|&v| {
            let s = if v == 0.0 { 2.0 } else { 2.0 * v.sin() / v };
            s * s
        })
        .product::<f64>()
        / norm
}

/// `ĥ(λ) = Π_j (1 − |λ_j|/2)_+`, normalized so `ĥ(0) = 1`.
pub fn h_hat(lambda: &[f64]) -> f64 {
    lambda
        .iter()
        .map(|&v| (1.0 - 0.5 * v.abs()).max(0.0))
        .product()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralWeight {
    alpha: f64,
    epsilon: f64,
    rp: RieszParams,
    c: f64,
}

impl SpectralWeight {
    pub fn new(rp: RieszParams, alpha: f64, epsilon: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(LabError::Parameter(format!("alpha must be >= 0 (got {alpha})")));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(LabError::Parameter(format!("epsilon must be > 0 (got {epsilon})")));
        }
        let c = c_d_sigma(rp.d(), rp.sigma())?;
        Ok(Self {
            alpha,
            epsilon,
            rp,
            c,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn rp(&self) -> &RieszParams {
        &self.rp
    }

    /// Per-coordinate radius `2/ε` of the support box.
    pub fn support_radius(&self) -> f64 {
        2.0 / self.epsilon
    }

    /// `℘_{α,ε}(λ)`; the point `λ = 0` with `α = 0` is a singular point.
    pub fn weight(&self, lambda: &[f64]) -> Result<f64> {
        let r2: f64 = lambda.iter().map(|v| v * v).sum();
        if self.alpha == 0.0 && r2 == 0.0 {
            return Err(LabError::Singular(
                "the weight with alpha = 0 is unbounded at lambda = 0 (integrable)".into(),
            ));
        }
        Ok(self.weight_at(lambda, r2))
    }

    fn weight_at(&self, lambda: &[f64], r2: f64) -> f64 {
        let e = self.epsilon;
        let hh: f64 = lambda
            .iter()
            .map(|&v| (1.0 - 0.5 * e * v.abs()).max(0.0))
            .product();
        if hh == 0.0 {
            return 0.0;
        }
        let d = self.rp.d() as f64;
        self.c * hh * hh / (self.alpha + r2.powf(0.5 * (d - self.rp.sigma())))
    }

    /// `φ_{d−σ}(λ) = C_{d,σ}|λ|^{σ−d}`, the pointwise upper bound of the weight.
    pub fn riesz_density(&self, lambda: &[f64]) -> f64 {
        let r2: f64 = lambda.iter().map(|v| v * v).sum();
        let d = self.rp.d() as f64;
        self.c * r2.powf(-0.5 * (d - self.rp.sigma()))
    }
}

/// `ε = Δt^{1/β}/4`, so that the support radius `2/ε` is eight times the
/// characteristic frequency `Δt^{−1/β}` of a path increment.
pub fn default_epsilon(dt: f64, beta: f64) -> f64 {
    0.25 * dt.powf(1.0 / beta)
}

/// θ_{α,ε} tabulated on `[0, x_max]^d` (θ is even in each coordinate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaKernel {
    pub sw: SpectralWeight,
    pub spacing: f64,
    pub points_per_axis: usize,
    /// Row-major values, first axis slowest.
    pub values: Vec<f64>,
    /// Bound on the multilinear interpolation error, `max |Δ²θ| / 8` per axis summed.
    pub interpolation_error: f64,
    pub lambda_nodes_per_axis: usize,
    pub grading: f64,
}

/// Nodes and weights of the λ-rule used for θ on `[0, 2/ε]`.
fn theta_axis_rule(sw: &SpectralWeight, x_max: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let big = sw.support_radius();
    let grading = (1.0 / sw.rp.sigma()).ceil().max(2.0);
    let panels = (grading * x_max * big / PI).ceil() as usize + 8;
    let (x, w) = graded_rule(big, grading, panels, 16);
    (x, w, grading)
}

impl ThetaKernel {
    pub fn x_max(&self) -> f64 {
        self.spacing * (self.points_per_axis - 1) as f64
    }

    /// Multilinear interpolation of the table at `x` (by `|x_j|`).
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let d = x.len();
        let n = self.points_per_axis;
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        if d > 8 {
            return Err(LabError::Parameter("dimension above 8 is not supported".into()));
        }
        for k in 0..d {
            let u = x[k].abs() / self.spacing;
            if u > (n - 1) as f64 {
                return Err(LabError::Range(format!(
                    "|x_{}| = {} exceeds the theta table range {}",
                    k + 1,
                    x[k].abs(),
                    self.x_max()
                )));
            }
            let i = (u.floor() as usize).min(n - 2);
            base[k] = i;
            frac[k] = u - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                idx = idx * n + base[k] + bit;
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        Ok(acc)
    }

    pub fn at_origin(&self) -> f64 {
        self.values[0]
    }

    /// Cache key: parameters plus a hash of the mesh description.
    pub fn cache_key(&self) -> String {
        kernel_key(&self.sw, self.spacing, self.points_per_axis, self.lambda_nodes_per_axis)
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("theta-{}.json", self.cache_key()));
        std::fs::write(&path, serde_json::to_vec(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

fn kernel_key(sw: &SpectralWeight, spacing: f64, points: usize, nodes: usize) -> String {
    let desc = format!(
        "{}:{}:{}:{}:{}:{}:{}:{}",
        sw.rp.d(),
        sw.rp.beta(),
        sw.rp.sigma(),
        sw.alpha,
        sw.epsilon,
        spacing,
        points,
        nodes
    );
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in desc.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Work budget for tabulation (multiply-adds).
const THETA_WORK_BUDGET: f64 = 4e9;

/// Tabulates θ on `[0, x_max]^d` with spacing `ε/40`.
///
/// The λ-integral runs over the positive orthant of the support box with a
/// per-axis rule graded towards 0, and the d-dimensional cosine transform is
/// applied one axis at a time.
pub fn theta_kernel(sw: &SpectralWeight, x_max: f64) -> Result<ThetaKernel> {
    theta_kernel_with_spacing(sw, x_max, sw.epsilon / 40.0)
}

pub fn theta_kernel_with_spacing(sw: &SpectralWeight, x_max: f64, spacing: f64) -> Result<ThetaKernel> {
    if !(x_max > 0.0) || !(spacing > 0.0) {
        return Err(LabError::Parameter("table range and spacing must be positive".into()));
    }
    let d = sw.rp.d();
    let (nodes, weights, grading) = theta_axis_rule(sw, x_max);
    let na = nodes.len();
    let nx = (x_max / spacing).ceil() as usize + 2;
    let mut work = 0.0;
    for step in 0..d {
        work += (nx as f64).powi(step as i32 + 1) * (na as f64).powi((d - step) as i32);
    }
    if work > THETA_WORK_BUDGET || (nx as f64).powi(d as i32) > 5e7 {
        return Err(LabError::Resolution(format!(
            "theta table of {nx}^{d} points over {na}^{d} frequencies exceeds the work budget"
        )));
    }
    // Weight tensor on the orthant, times 2^d for the even extension.
    let total = na.pow(d as u32);
    let mut tensor = vec![0.0; total];
    let mut lam = vec![0.0; d];
    for (flat, slot) in tensor.iter_mut().enumerate() {
        let mut rem = flat;
        let mut w = 2f64.powi(d as i32);
        for k in (0..d).rev() {
            let a = rem % na;
            rem /= na;
            lam[k] = nodes[a];
            w *= weights[a];
        }
        let r2: f64 = lam.iter().map(|v| v * v).sum();
        *slot = w * sw.weight_at(&lam, r2);
    }
    let xs: Vec<f64> = (0..nx).map(|b| b as f64 * spacing).collect();
    let cosm: Vec<f64> = xs
        .iter()
        .flat_map(|&x| nodes.iter().map(move |&l| (x * l).cos()))
        .collect();
    // Contract the leading axis and append the new x-axis at the end.
    let lead = na;
    for _ in 0..d {
        let rest = tensor.len() / lead;
        let mut out = vec![0.0; rest * nx];
        for r in 0..rest {
            for b in 0..nx {
                let crow = &cosm[b * na..(b + 1) * na];
                let mut s = 0.0;
                for a in 0..lead {
                    s += tensor[a * rest + r] * crow[a];
                }
                out[r * nx + b] = s;
            }
        }
        tensor = out;
    }
    let values = tensor;
    let interpolation_error = second_difference_bound(&values, nx, d);
    Ok(ThetaKernel {
        sw: *sw,
        spacing,
        points_per_axis: nx,
        values,
        interpolation_error,
        lambda_nodes_per_axis: na,
        grading,
    })
}

fn second_difference_bound(values: &[f64], n: usize, d: usize) -> f64 {
    let mut bound = 0.0;
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        let mut m: f64 = 0.0;
        for (flat, &v) in values.iter().enumerate() {
            let i = (flat / stride) % n;
            if i == 0 || i + 1 >= n {
                continue;
            }
            let dd = values[flat + stride] - 2.0 * v + values[flat - stride];
            m = m.max(dd.abs());
        }
        bound += m / 8.0;
    }
    bound
}

/// Largest coordinate-wise separation `max_j (max X^j − min X^j)` of a path.
pub fn coordinate_span(path: &StablePath) -> f64 {
    path.coords()
        .iter()
        .map(|c| {
            let (lo, hi) = min_max(c);
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Time form: `Σ_{i,j} w_i w_j θ(X_i − X_j)` over the full square.
pub fn eta_smoothed_time(path: &StablePath, kernel: &ThetaKernel, q: &QuadratureSpec) -> Result<f64> {
    if path.params() != kernel.sw.rp.stable() {
        return Err(LabError::Parameter("path and kernel parameters differ".into()));
    }
    if coordinate_span(path) > kernel.x_max() {
        return Err(LabError::Range(format!(
            "path span {} exceeds the theta table range {}",
            coordinate_span(path),
            kernel.x_max()
        )));
    }
    let nodes = rule_nodes(path, q.rule)?;
    let xs = gather(path, &nodes.idx);
    let m = nodes.w.len();
    let d = xs.len();
    let mut diff = vec![0.0; d];
    let mut off = 0.0;
    for i in 0..m {
        let mut row = 0.0;
        for j in i + 1..m {
            for k in 0..d {
                diff[k] = xs[k][j] - xs[k][i];
            }
            row += nodes.w[j] * kernel.eval(&diff)?;
        }
        off += nodes.w[i] * row;
    }
    let diag: f64 = nodes.w.iter().map(|w| w * w).sum::<f64>() * kernel.at_origin();
    Ok(2.0 * off + diag)
}

/// Reference frequency rule on the half box `{u_1 > 0} ⊂ [−1,1]^d`.
///
/// Tensor Gauss–Legendre cells of width `2/N` with `points` nodes per axis;
/// the block of cells around the origin is refined dyadically `refine` times.
/// Weights include the factor 2 from `λ ↦ −λ` symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyRule {
    pub d: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl FrequencyRule {
    /// Rule with [`default_points`] nodes per cell axis.
    pub fn new(d: usize, cells: usize, refine: usize) -> Result<Self> {
        Self::with_points(d, cells, refine, default_points(d))
    }

    pub fn with_points(d: usize, cells: usize, refine: usize, points: usize) -> Result<Self> {
        if cells < 2 || cells % 2 != 0 || points == 0 {
            return Err(LabError::Parameter(
                "frequency cells per axis must be even and >= 2, points >= 1".into(),
            ));
        }
        let total = (cells as f64 * points as f64).powi(d as i32);
        if total > 2e7 {
            return Err(LabError::Resolution(format!(
                "frequency grid of {cells}^{d} cells with {points}^{d} nodes is too large"
            )));
        }
        let gl = crate::quad::gauss_legendre(points);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let h = 2.0 / cells as f64;
        // Level 0: all cells except the central 2^d block.
        push_block(d, cells, h, &gl, &mut nodes, &mut weights, refine > 0);
        let mut size = h;
        for level in 0..refine {
            // The central block [−size, size]^d as a 4^d grid of half cells.
            let sub = 0.5 * size;
            push_block(d, 4, sub, &gl, &mut nodes, &mut weights, level + 1 < refine);
            size = sub;
        }
        Ok(Self { d, nodes, weights })
    }

    /// Evaluates `Σ_u W_u Λ^d f(Λu) |Σ_i w_i e^{iΛu·X_i}|²` with `Λ = 2/ε`.
    pub fn evaluate_with<F>(&self, path: &StablePath, big: f64, q: &QuadratureSpec, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64,
    {
        let nodes = rule_nodes(path, q.rule)?;
        let xs = gather(path, &nodes.idx);
        let d = self.d;
        let scale = big.powi(d as i32);
        let mut lam = vec![0.0; d];
        let mut total = 0.0;
        let m = nodes.w.len();
        let mut phase = vec![0.0; m];
        for (u, &wu) in self.nodes.iter().zip(&self.weights) {
            for k in 0..d {
                lam[k] = big * u[k];
            }
            let weight = f(&lam);
            if weight == 0.0 {
                continue;
            }
            phase.fill(0.0);
            for k in 0..d {
                let lk = lam[k];
                for (p, &x) in phase.iter_mut().zip(&xs[k]) {
                    *p += lk * x;
                }
            }
            let mut re = 0.0;
            let mut im = 0.0;
            for (p, &w) in phase.iter().zip(&nodes.w) {
                let (s, c) = p.sin_cos();
                re += w * c;
                im += w * s;
            }
            total += wu * scale * weight * (re * re + im * im);
        }
        Ok(total)
    }
}

fn push_block(
    d: usize,
    cells: usize,
    h: f64,
    gl: &(Vec<f64>, Vec<f64>),
    nodes: &mut Vec<Vec<f64>>,
    weights: &mut Vec<f64>,
    skip_center: bool,
) {
    let half = cells / 2;
    let count = cells.pow(d as u32);
    let np = gl.0.len();
    let inner = np.pow(d as u32);
    let mut idx = vec![0usize; d];
    for flat in 0..count {
        let mut rem = flat;
        for k in (0..d).rev() {
            idx[k] = rem % cells;
            rem /= cells;
        }
        // Keep the half space u_1 > 0.
        if idx[0] < half {
            continue;
        }
        let central = idx.iter().all(|&i| i == half - 1 || i == half);
        if skip_center && central {
            continue;
        }
        for sub in 0..inner {
            let mut r = sub;
            let mut w = 2.0;
            let mut u = vec![0.0; d];
            for k in (0..d).rev() {
                let j = r % np;
                r /= np;
                let lo = (idx[k] as f64 - half as f64) * h;
                u[k] = lo + 0.5 * h * (gl.0[j] + 1.0);
                w *= 0.5 * h * gl.1[j];
            }
            nodes.push(u);
            weights.push(w);
        }
    }
}

/// Frequency form over the full square, on the reference grid with
/// `q.lambda_cells` cells per axis scaled to the support box.
pub fn eta_smoothed_freq(path: &StablePath, sw: &SpectralWeight, q: &QuadratureSpec) -> Result<f64> {
    if path.params() != sw.rp.stable() {
        return Err(LabError::Parameter("path and weight parameters differ".into()));
    }
    let rule = FrequencyRule::new(sw.rp.d(), q.lambda_cells, default_refinement(sw))?;
    eta_smoothed_freq_with(path, sw, q, &rule)
}

pub fn eta_smoothed_freq_with(
    path: &StablePath,
    sw: &SpectralWeight,
    q: &QuadratureSpec,
    rule: &FrequencyRule,
) -> Result<f64> {
    rule.evaluate_with(path, sw.support_radius(), q, |lam| {
        let r2: f64 = lam.iter().map(|v| v * v).sum();
        sw.weight_at(lam, r2)
    })
}

/// Origin refinement depth. The weight has a cusp at 0 for every `α`, and a
/// pole when `α = 0`.
pub fn default_refinement(sw: &SpectralWeight) -> usize {
    if sw.alpha == 0.0 {
        16
    } else {
        8
    }
}

/// Gauss–Legendre nodes per cell axis: 4 in d = 1, 2 in d = 2, 1 above.
pub fn default_points(d: usize) -> usize {
    match d {
        1 => 4,
        2 => 2,
        _ => 1,
    }
}

/// `∫ ℘_{α,ε}(λ) dλ = θ(0)` by a radial-free orthant quadrature in d = 1
/// and the tensor rule otherwise.
pub fn weight_integral(sw: &SpectralWeight) -> f64 {
    let (nodes, weights, _) = theta_axis_rule(sw, 1.0);
    let d = sw.rp.d();
    let na = nodes.len();
    let mut lam = vec![0.0; d];
    let mut total = 0.0;
    for flat in 0..na.pow(d as u32) {
        let mut rem = flat;
        let mut w = 2f64.powi(d as i32);
        for k in (0..d).rev() {
            let a = rem % na;
            rem /= na;
            lam[k] = nodes[a];
            w *= weights[a];
        }
        let r2: f64 = lam.iter().map(|v| v * v).sum();
        total += w * sw.weight_at(&lam, r2);
    }
    total
}
