//! Riesz potentials of self-intersection measures on sampled paths.
//!
//! * `η(A) = ∫∫_A |X_s − X_r|^{−σ} dr ds`, evaluated on `[0,t]²_<`;
//! * `η^z(A)` with the integrand shifted by `z`;
//! * the mutual functional `ζ([0,s]×[0,t]) = ∫∫ |X_u − X̃_v|^{−σ} du dv` of
//!   two independent paths;
//! * the occupation field `ξ(t,x) = ∫_0^t |X_s − x|^{−(σ+d)/2} ds`;
//!
//! together with the closed forms `C_{d,σ}`, `E|X_1|^{−σ}`, `E η([0,t]²_<)`,
//! the rectangle means used for centering and the composition constant `C`.
//!
//! All time quadratures are node rules on the path's own sample times, so a
//! path on a grid scaled by `c` gives exactly `c^{2−σ/β}` times the value in
//! law. Pair sums run over per-axis coordinate rows and stay vectorizable.

use std::f64::consts::PI;

use libm::tgamma;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quad::gauss_legendre;
use crate::stable_sim::{StableParams, StablePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `0 < σ < min(β, d)`: η has a finite mean.
    SubCritical,
    /// `β ≤ σ < min(3β/2, d)`: only the centered series γ exists.
    Renormalizable,
    Invalid,
}

pub fn classify(d: usize, beta: f64, sigma: f64) -> Regime {
    let df = d as f64;
    if sigma > 0.0 && sigma < beta.min(df) {
        Regime::SubCritical
    } else if beta <= sigma && sigma < (1.5 * beta).min(df) {
        Regime::Renormalizable
    } else {
        Regime::Invalid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RieszParams {
    stable: StableParams,
    sigma: f64,
    regime: Regime,
}

impl RieszParams {
    pub fn new(stable: StableParams, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(LabError::Parameter(format!(
                "Riesz exponent must be positive and finite (got {sigma})"
            )));
        }
        Ok(Self {
            stable,
            sigma,
            regime: classify(stable.d(), stable.beta(), sigma),
        })
    }

    pub fn from_dims(d: usize, beta: f64, sigma: f64) -> Result<Self> {
        Self::new(StableParams::new(d, beta)?, sigma)
    }

    pub fn stable(&self) -> &StableParams {
        &self.stable
    }

    pub fn d(&self) -> usize {
        self.stable.d()
    }

    pub fn beta(&self) -> f64 {
        self.stable.beta()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// `p = σ/β`.
    pub fn ratio(&self) -> f64 {
        self.sigma / self.stable.beta()
    }

    pub(crate) fn require_sigma_below_d(&self, what: &str) -> Result<()> {
        if self.sigma >= self.d() as f64 {
            return Err(LabError::Parameter(format!(
                "{what} requires sigma < d (got sigma = {}, d = {})",
                self.sigma,
                self.d()
            )));
        }
        Ok(())
    }

    /// Gate for functionals with a finite mean: `σ < min(β, d)`.
    pub fn require_subcritical(&self, what: &str) -> Result<()> {
        self.require_sigma_below_d(what)?;
        if self.sigma >= self.beta() {
            return Err(LabError::Regime(format!(
                "{what} requires sigma < min(beta, d); sigma >= beta makes the mean \
                 E|X_1|^(-sigma) * int int (s-r)^(-sigma/beta) dr ds diverge \
                 (sigma = {}, beta = {}, d = {})",
                self.sigma,
                self.beta(),
                self.d()
            )));
        }
        Ok(())
    }

    /// Gate for the renormalized series: `σ < min(3β/2, d)`.
    pub fn require_renormalizable(&self, what: &str) -> Result<()> {
        if self.sigma >= (1.5 * self.beta()).min(self.d() as f64) {
            return Err(LabError::Regime(format!(
                "{what} requires sigma < min(3*beta/2, d) (got sigma = {}, beta = {}, d = {})",
                self.sigma,
                self.beta(),
                self.d()
            )));
        }
        Ok(())
    }

    /// Gate for mutual functionals of independent paths: `σ < min(2β, d)`.
    pub fn require_mutual(&self, what: &str) -> Result<()> {
        self.require_sigma_below_d(what)?;
        if self.sigma >= 2.0 * self.beta() {
            return Err(LabError::Regime(format!(
                "{what} requires sigma < min(2*beta, d) (got sigma = {}, beta = {})",
                self.sigma,
                self.beta()
            )));
        }
        Ok(())
    }

    fn check_path(&self, path: &StablePath) -> Result<()> {
        if path.params() != &self.stable {
            return Err(LabError::Parameter(format!(
                "path was generated with {:?}, functional expects {:?}",
                path.params(),
                self.stable
            )));
        }
        Ok(())
    }
}

/// Node rule on the sample times of a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeRule {
    /// Cell `[t_{i−1}, t_i]` is represented by `X_{t_i}`.
    RightEndpoint,
    /// Cell `[t_{2k}, t_{2k+2}]` is represented by `X_{t_{2k+1}}`; needs an
    /// even number of steps.
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Width Δ of the excluded diagonal band; defaults to one cell.
    pub band_width: Option<f64>,
    /// Add the exact mean of the excluded region to η.
    pub mean_correction: bool,
    pub rule: TimeRule,
    /// Grading exponent of corner-graded cell meshes; default `2/(2 − σ/β)`.
    pub grading_exponent: Option<f64>,
    /// Nodes per side of a dyadic cell.
    pub nodes_per_cell: usize,
    /// Cells per axis of frequency grids over the support box.
    pub lambda_cells: usize,
    /// Truncation radius for frequency integrals without compact support.
    pub lambda_radius: Option<f64>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            band_width: None,
            mean_correction: false,
            rule: TimeRule::RightEndpoint,
            grading_exponent: None,
            nodes_per_cell: 16,
            lambda_cells: 512,
            lambda_radius: None,
        }
    }
}

impl QuadratureSpec {
    pub fn with_mean_correction(mut self) -> Self {
        self.mean_correction = true;
        self
    }

    pub fn grading(&self, rp: &RieszParams) -> f64 {
        self.grading_exponent
            .unwrap_or_else(|| 2.0 / (2.0 - rp.ratio()).max(1e-3))
            .max(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.band_width {
            if !(b >= 0.0) {
                return Err(LabError::Parameter("band width must be >= 0".into()));
            }
        }
        if let Some(g) = self.grading_exponent {
            if !(g >= 1.0) {
                return Err(LabError::Parameter("grading exponent must be >= 1".into()));
            }
        }
        if self.nodes_per_cell == 0 || self.lambda_cells == 0 {
            return Err(LabError::Parameter("node counts must be positive".into()));
        }
        if let Some(r) = self.lambda_radius {
            if !(r > 0.0) {
                return Err(LabError::Parameter("truncation radius must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Quadrature nodes of a path: sample indices, weights and cell right ends.
#[derive(Debug, Clone)]
pub(crate) struct Nodes {
    pub idx: Vec<usize>,
    pub w: Vec<f64>,
    pub ends: Vec<f64>,
}

pub(crate) fn rule_nodes(path: &StablePath, rule: TimeRule) -> Result<Nodes> {
    let t = path.times();
    let n = path.steps();
    match rule {
        TimeRule::RightEndpoint => Ok(Nodes {
            idx: (1..=n).collect(),
            w: (1..=n).map(|i| t[i] - t[i - 1]).collect(),
            ends: t[1..].to_vec(),
        }),
        TimeRule::Midpoint => {
            if n % 2 != 0 {
                return Err(LabError::Parameter(format!(
                    "the midpoint rule needs an even number of steps (got {n})"
                )));
            }
            let m = n / 2;
            Ok(Nodes {
                idx: (0..m).map(|k| 2 * k + 1).collect(),
                w: (0..m).map(|k| t[2 * k + 2] - t[2 * k]).collect(),
                ends: (0..m).map(|k| t[2 * k + 2]).collect(),
            })
        }
    }
}

pub(crate) fn gather(path: &StablePath, idx: &[usize]) -> Vec<Vec<f64>> {
    path.coords()
        .iter()
        .map(|c| idx.iter().map(|&i| c[i]).collect())
        .collect()
}

#[inline(always)]
fn chunked_sum<F: Fn(f64, f64) -> f64>(r2: &[f64], w: &[f64], f: F) -> f64 {
    let mut acc = [0.0f64; 4];
    let n4 = r2.len() / 4 * 4;
    let (r_main, r_rem) = r2.split_at(n4);
    let (w_main, w_rem) = w[..r2.len()].split_at(n4);
    for (rc, wc) in r_main.chunks_exact(4).zip(w_main.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += f(rc[k], wc[k]);
        }
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (&r, &wv) in r_rem.iter().zip(w_rem) {
        total += f(r, wv);
    }
    total
}

/// `Σ_j w_j (r2_j)^{−s}` with fast paths for the common exponents.
pub(crate) fn weighted_pow_sum(r2: &[f64], w: &[f64], s: f64) -> f64 {
    if s == 0.25 {
        chunked_sum(r2, w, |r, wv| wv / r.sqrt().sqrt())
    } else if s == 0.5 {
        chunked_sum(r2, w, |r, wv| wv / r.sqrt())
    } else if s == 0.75 {
        chunked_sum(r2, w, |r, wv| {
            let q = r.sqrt().sqrt();
            wv / (q * q * q)
        })
    } else if s == 1.0 {
        chunked_sum(r2, w, |r, wv| wv / r)
    } else {
        chunked_sum(r2, w, |r, wv| wv * r.powf(-s))
    }
}

/// `Σ_{i, j ≥ i+gap} w_i w_j |x_j − x_i − z|^{−2s}`.
pub(crate) fn pair_sum(xs: &[Vec<f64>], w: &[f64], gap: usize, shift: &[f64], s: f64) -> f64 {
    let m = w.len();
    let mut buf = vec![0.0; m];
    let mut total = 0.0;
    for i in 0..m {
        let lo = i + gap;
        if lo >= m {
            break;
        }
        let row = &mut buf[..m - lo];
        row.fill(0.0);
        for (c, &zk) in xs.iter().zip(shift) {
            let xi = c[i] + zk;
            for (r, &x) in row.iter_mut().zip(&c[lo..]) {
                let dx = x - xi;
                *r += dx * dx;
            }
        }
        total += w[i] * weighted_pow_sum(row, &w[lo..], s);
    }
    total
}

/// `Σ_{i,j} wa_i wb_j |xb_j − xa_i|^{−2s}`.
pub(crate) fn cross_sum(xa: &[Vec<f64>], wa: &[f64], xb: &[Vec<f64>], wb: &[f64], s: f64) -> f64 {
    let mut row = vec![0.0; wb.len()];
    let mut total = 0.0;
    for i in 0..wa.len() {
        row.fill(0.0);
        for (ca, cb) in xa.iter().zip(xb) {
            let xi = ca[i];
            for (r, &x) in row.iter_mut().zip(cb) {
                let dx = x - xi;
                *r += dx * dx;
            }
        }
        total += wa[i] * weighted_pow_sum(&row, wb, s);
    }
    total
}

fn band_cells(band: Option<f64>, cell: f64) -> Result<usize> {
    let Some(delta) = band else {
        return Ok(1);
    };
    if !(delta >= 0.0) {
        return Err(LabError::Parameter("band width must be >= 0".into()));
    }
    let r = delta / cell;
    let k = r.round();
    if (r - k).abs() > 1e-9 * r.max(1.0) {
        return Err(LabError::Parameter(format!(
            "band width {delta} is not an integer multiple of the cell width {cell}"
        )));
    }
    Ok(k as usize)
}

/// Exact mean of η over the cells left out by a band of `band` cells on a
/// uniform grid of `cells` cells of width `w`: the diagonal triangles plus
/// the first `band` off-diagonal cell rows.
pub fn band_mean(rp: &RieszParams, w: f64, cells: usize, band: usize) -> Result<f64> {
    rp.require_subcritical("band mean")?;
    let p = rp.ratio();
    let m = moment_neg_sigma(rp)?;
    let g = |u: f64| u.powf(2.0 - p) / ((1.0 - p) * (2.0 - p));
    let mut total = cells as f64 * g(w);
    for k in 1..=band.min(cells.saturating_sub(1)) {
        let kf = k as f64;
        let cell_mean = g((kf + 1.0) * w) - 2.0 * g(kf * w) + g((kf - 1.0) * w);
        total += (cells - k) as f64 * cell_mean;
    }
    Ok(m * total)
}

/// Riemann estimate of `η([0,t]²_<)` on a uniform path.
///
/// Cell pairs closer than the band are skipped; with `mean_correction` the
/// exact mean of the skipped region is added back. The full-square value is
/// twice the returned one.
pub fn eta(path: &StablePath, rp: &RieszParams, q: &QuadratureSpec) -> Result<f64> {
    rp.require_subcritical("eta")?;
    rp.check_path(path)?;
    q.validate()?;
    if !path.is_uniform() {
        return Err(LabError::Parameter("eta needs a uniform time grid".into()));
    }
    let nodes = rule_nodes(path, q.rule)?;
    let w = nodes.w[0];
    let m = nodes.idx.len();
    let band = band_cells(q.band_width, w)?;
    let xs = gather(path, &nodes.idx);
    let ones = vec![1.0; m];
    let zero = vec![0.0; path.dim()];
    let raw = pair_sum(&xs, &ones, band + 1, &zero, 0.5 * rp.sigma()) * w * w;
    if !raw.is_finite() {
        return Err(LabError::Singular(
            "coincident positions outside the diagonal band".into(),
        ));
    }
    let corr = if q.mean_correction {
        band_mean(rp, w, m, band)?
    } else {
        0.0
    };
    Ok(raw + corr)
}

/// Estimate of `η^z([0,t]²_<) = ∫∫_{r<s} |X_s − X_r − z|^{−σ} dr ds`.
///
/// For `z ≠ 0` every cell pair is summed, and the diagonal cells contribute
/// their area times `|z|^{−σ}`. No moment claims are attached for `σ ≥ β`.
pub fn eta_shifted(path: &StablePath, z: &[f64], rp: &RieszParams, q: &QuadratureSpec) -> Result<f64> {
    if z.len() != rp.d() {
        return Err(LabError::Parameter(format!(
            "shift has dimension {}, expected {}",
            z.len(),
            rp.d()
        )));
    }
    if z.iter().all(|&v| v == 0.0) {
        return eta(path, rp, q);
    }
    rp.require_sigma_below_d("eta_shifted")?;
    rp.check_path(path)?;
    let nodes = rule_nodes(path, q.rule)?;
    let xs = gather(path, &nodes.idx);
    let s = 0.5 * rp.sigma();
    let off = pair_sum(&xs, &nodes.w, 1, z, s);
    let z2: f64 = z.iter().map(|v| v * v).sum();
    let diag: f64 = nodes.w.iter().map(|w| 0.5 * w * w).sum::<f64>() * z2.powf(-s);
    let v = off + diag;
    if !v.is_finite() {
        return Err(LabError::Singular("X_s - X_r hit the shift exactly".into()));
    }
    Ok(v)
}

fn nodes_up_to(nodes: &Nodes, s: f64, which: &str) -> Result<usize> {
    let last = *nodes.ends.last().unwrap();
    if s > last * (1.0 + 1e-12) {
        return Err(LabError::Domain(format!(
            "rectangle side {s} exceeds the horizon {last} of path {which}"
        )));
    }
    let k = nodes.ends.partition_point(|&e| e < s * (1.0 - 1e-12));
    if k >= nodes.ends.len() || (nodes.ends[k] - s).abs() > 1e-9 * s.max(1e-300) {
        return Err(LabError::Domain(format!(
            "rectangle side {s} is not on the quadrature grid of path {which}"
        )));
    }
    Ok(k + 1)
}

/// Estimate of `ζ([0,s]×[0,t]) = ∫_0^s ∫_0^t |X_u − X̃_v|^{−σ} dv du` for
/// independent paths `a` (time `u`) and `b` (time `v`).
///
/// The sides must fall on cell ends of the chosen rule. Paths sharing a seed
/// lane are accepted with a warning, since the identity assumes independence.
pub fn zeta(
    a: &StablePath,
    b: &StablePath,
    rp: &RieszParams,
    q: &QuadratureSpec,
    s: f64,
    t: f64,
) -> Result<f64> {
    rp.require_mutual("zeta")?;
    rp.check_path(a)?;
    rp.check_path(b)?;
    if !(s >= 0.0 && t >= 0.0) {
        return Err(LabError::Domain("rectangle sides must be >= 0".into()));
    }
    if let (Some(la), Some(lb)) = (a.lane(), b.lane()) {
        if la == lb {
            log::warn!("zeta: both paths use seed lane {la:?}; they are not independent");
        }
    }
    if s == 0.0 || t == 0.0 {
        return Ok(0.0);
    }
    let na = rule_nodes(a, q.rule)?;
    let nb = rule_nodes(b, q.rule)?;
    let ka = nodes_up_to(&na, s, "a")?;
    let kb = nodes_up_to(&nb, t, "b")?;
    let xa = gather(a, &na.idx[..ka]);
    let xb = gather(b, &nb.idx[..kb]);
    let v = cross_sum(&xa, &na.w[..ka], &xb, &nb.w[..kb], 0.5 * rp.sigma());
    if !v.is_finite() {
        return Err(LabError::Singular("the two paths meet at a node".into()));
    }
    Ok(v)
}

/// `ξ(t, x) = ∫_0^t |X_s − x|^{−(σ+d)/2} ds` over the whole path, with the
/// path interpolated linearly between samples.
pub fn xi_field(path: &StablePath, x: &[f64], rp: &RieszParams) -> Result<f64> {
    rp.require_sigma_below_d("xi_field")?;
    rp.check_path(path)?;
    if x.len() != rp.d() {
        return Err(LabError::Parameter(format!(
            "point has dimension {}, expected {}",
            x.len(),
            rp.d()
        )));
    }
    Ok(occupation_integral(path, x, 0.5 * (rp.sigma() + rp.d() as f64)))
}

/// `∫_0^t |X_s − x|^{−a} ds` for the linearly interpolated path.
pub fn occupation_integral(path: &StablePath, x: &[f64], a: f64) -> f64 {
    let t = path.times();
    let c = path.coords();
    let d = c.len();
    if d == 1 && a < 1.0 {
        let h = |u: f64| u.signum() * u.abs().powf(1.0 - a) / (1.0 - a);
        let xs = &c[0];
        let mut total = 0.0;
        for i in 1..t.len() {
            let dt = t[i] - t[i - 1];
            let u0 = xs[i - 1] - x[0];
            let u1 = xs[i] - x[0];
            let du = u1 - u0;
            if du.abs() <= 1e-12 * (u0.abs() + u1.abs()) {
                total += dt * (0.5 * (u0 + u1)).abs().powf(-a);
            } else {
                total += dt * (h(u1) - h(u0)) / du;
            }
        }
        return total;
    }
    let (gx, gw) = gauss_legendre(6);
    let mut p0 = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut total = 0.0;
    for i in 1..t.len() {
        let dt = t[i] - t[i - 1];
        for k in 0..d {
            p0[k] = c[k][i - 1] - x[k];
            dir[k] = c[k][i] - c[k][i - 1];
        }
        let len2: f64 = dir.iter().map(|v| v * v).sum();
        let f = |tau: f64| -> f64 {
            let mut r2 = 0.0;
            for k in 0..d {
                let v = p0[k] + tau * dir[k];
                r2 += v * v;
            }
            r2.powf(-0.5 * a)
        };
        if len2 == 0.0 {
            total += dt * f(0.0);
            continue;
        }
        let proj: f64 = -p0.iter().zip(&dir).map(|(p, q)| p * q).sum::<f64>() / len2;
        let tau_star = proj.clamp(0.0, 1.0);
        let delta = f(tau_star).powf(-1.0 / a);
        let len = len2.sqrt();
        let gauss = |lo: f64, hi: f64| -> f64 {
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            gx.iter()
                .zip(&gw)
                .map(|(u, w)| w * f(mid + half * u))
                .sum::<f64>()
                * half
        };
        let seg = if delta > 2.0 * len {
            gauss(0.0, 1.0)
        } else {
            // Geometric panels towards the closest point.
            let mut acc = 0.0;
            for (side, span) in [(-1.0, tau_star), (1.0, 1.0 - tau_star)] {
                if span <= 0.0 {
                    continue;
                }
                let mut outer = span;
                let mut j = 0;
                while j < 80 && outer * len > 0.05 * delta {
                    let inner = 0.5 * outer;
                    let (lo, hi) = (tau_star + side * inner, tau_star + side * outer);
                    acc += gauss(lo.min(hi), lo.max(hi));
                    outer = inner;
                    j += 1;
                }
                let (lo, hi) = (tau_star, tau_star + side * outer);
                acc += gauss(lo.min(hi), lo.max(hi));
            }
            acc
        };
        total += dt * seg;
    }
    total
}

/// `C_{d,σ} = π^{−d/2} 2^{−σ} Γ((d−σ)/2) / Γ(σ/2)`, the constant for which
/// `φ_{d−σ}(λ) = C_{d,σ}|λ|^{σ−d}` has Fourier transform `|x|^{−σ}`.
pub fn c_d_sigma(d: usize, sigma: f64) -> Result<f64> {
    let df = d as f64;
    if !(sigma > 0.0 && sigma < df) {
        return Err(LabError::Parameter(format!(
            "C(d, sigma) needs 0 < sigma < d (got sigma = {sigma}, d = {d})"
        )));
    }
    Ok(PI.powf(-0.5 * df) * 2f64.powf(-sigma) * tgamma(0.5 * (df - sigma)) / tgamma(0.5 * sigma))
}

/// `E|X_1|^{−σ} = C_{d,σ} (2π^{d/2}/Γ(d/2)) Γ(σ/β)/β`.
pub fn moment_neg_sigma(rp: &RieszParams) -> Result<f64> {
    let d = rp.d() as f64;
    if rp.sigma() >= d {
        return Err(LabError::Regime(format!(
            "E|X_1|^(-sigma) diverges for sigma >= d (sigma = {}, d = {})",
            rp.sigma(),
            rp.d()
        )));
    }
    let c = c_d_sigma(rp.d(), rp.sigma())?;
    let sphere = 2.0 * PI.powf(0.5 * d) / tgamma(0.5 * d);
    Ok(c * sphere * tgamma(rp.ratio()) / rp.beta())
}

/// `E η([0,t]²_<) = E|X_1|^{−σ} t^{2−p} / ((1−p)(2−p))`, `p = σ/β`.
pub fn mean_eta(rp: &RieszParams, t: f64) -> Result<f64> {
    rp.require_subcritical("the mean of eta")?;
    if !(t >= 0.0) {
        return Err(LabError::Parameter(format!("time must be >= 0 (got {t})")));
    }
    let p = rp.ratio();
    Ok(moment_neg_sigma(rp)? * t.powf(2.0 - p) / ((1.0 - p) * (2.0 - p)))
}

/// Second antiderivative of `u^{−p}` up to an affine term, stable across `p = 1`.
pub fn rectangle_primitive(p: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return u * u.ln();
    }
    // (u^{2−p} − u) / ((1−p)(2−p)); the linear part cancels in rectangles.
    u * ((1.0 - p) * u.ln()).exp_m1() / ((1.0 - p) * (2.0 - p))
}

/// Exact mean of `η([a,b]×[c,d])` for `a ≤ b ≤ c ≤ d`:
/// `E|X_1|^{−σ} [G(d−a) − G(d−b) − G(c−a) + G(c−b)]` with `G'' = u^{−σ/β}`.
pub fn mean_rectangle(rp: &RieszParams, a: f64, b: f64, c: f64, d: f64) -> Result<f64> {
    rp.require_mutual("mean_rectangle")?;
    if b > c {
        return Err(LabError::Domain(format!(
            "rectangle [{a},{b}]x[{c},{d}] crosses the diagonal (needs b <= c)"
        )));
    }
    if a > b || c > d {
        return Err(LabError::Domain(format!(
            "rectangle [{a},{b}]x[{c},{d}] has reversed sides"
        )));
    }
    if a == b || c == d {
        return Ok(0.0);
    }
    let p = rp.ratio();
    let g = |u: f64| rectangle_primitive(p, u);
    let m = moment_neg_sigma(rp)?;
    Ok(m * (g(d - a) - g(d - b) - g(c - a) + g(c - b)))
}

/// The constant `C` in `∫ |x−z|^{−(σ+d)/2} |y−z|^{−(σ+d)/2} dz = C |x−y|^{−σ}`:
/// `π^{d/2} Γ²((d−σ)/4) Γ(σ/2) / (Γ²((d+σ)/4) Γ((d−σ)/2))`.
pub fn riesz_composition_constant(d: usize, sigma: f64) -> Result<f64> {
    let df = d as f64;
    if !(sigma > 0.0 && sigma < df) {
        return Err(LabError::Parameter(format!(
            "the composition constant needs 0 < sigma < d (got sigma = {sigma}, d = {d})"
        )));
    }
    let num = tgamma(0.25 * (df - sigma)).powi(2) * tgamma(0.5 * sigma);
    let den = tgamma(0.25 * (df + sigma)).powi(2) * tgamma(0.5 * (df - sigma));
    Ok(PI.powf(0.5 * df) * num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::composite_gl;
    use crate::rng::Lane;
    use crate::stable_sim::{sample_path, uniform_times};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn rp(d: usize, beta: f64, sigma: f64) -> RieszParams {
        RieszParams::from_dims(d, beta, sigma).unwrap()
    }

    #[test]
    fn regimes_are_classified() {
        assert_eq!(rp(2, 2.0, 0.5).regime(), Regime::SubCritical);
        assert_eq!(rp(3, 2.0, 2.0).regime(), Regime::Renormalizable);
        assert_eq!(rp(3, 2.0, 2.9).regime(), Regime::Renormalizable);
        assert_eq!(rp(3, 2.0, 3.0).regime(), Regime::Invalid);
        assert_eq!(rp(2, 2.0, 2.0).regime(), Regime::Invalid);
        assert!(RieszParams::from_dims(2, 2.0, 0.0).is_err());
    }

    #[test]
    fn c_d_sigma_hand_value() {
        let c = c_d_sigma(3, 1.0).unwrap();
        assert!((c - 1.0 / (2.0 * PI * PI)).abs() < 1e-15);
        assert!(c_d_sigma(2, 2.0).is_err());
    }

    #[test]
    fn c_d_sigma_inverts_the_fourier_transform() {
        // ∫ e^{iλ} C|λ|^{-1/2} dλ = 4C ∫_0^∞ cos(u²) du, summed over the
        // half-periods of cos(u²) and accelerated by repeated averaging.
        let c = c_d_sigma(1, 0.5).unwrap();
        let zeros: Vec<f64> = (0..400).map(|k| ((k as f64 + 0.5) * PI).sqrt()).collect();
        let mut partial = Vec::new();
        let mut acc = 0.0;
        let mut lo = 0.0;
        for &hi in &zeros {
            let (x, w) = composite_gl(lo, hi, 2, 16);
            acc += x.iter().zip(&w).map(|(u, w)| w * (u * u).cos()).sum::<f64>();
            partial.push(acc);
            lo = hi;
        }
        let mut s = partial[300..].to_vec();
        for _ in 0..20 {
            s = s.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        }
        let value = 4.0 * c * s[0];
        assert!((value - 1.0).abs() < 1e-2, "{value}");
    }

    #[test]
    fn moment_matches_chi_square_form_for_brownian_motion() {
        for (d, sigma) in [(1, 0.3), (2, 0.5), (3, 1.0), (3, 2.0), (5, 1.7)] {
            let m = moment_neg_sigma(&rp(d, 2.0, sigma)).unwrap();
            let df = d as f64;
            // |X_1|² = 2 χ²_d.
            let oracle = 2f64.powf(-sigma) * tgamma(0.5 * (df - sigma)) / tgamma(0.5 * df);
            assert!((m / oracle - 1.0).abs() < 1e-12, "d={d} sigma={sigma}");
        }
    }

    fn mc_moment(d: usize, sigma: f64, n: usize, seed: u64, draw: impl Fn(&mut rand_chacha::ChaCha8Rng, &mut [f64])) -> (f64, f64) {
        let mut rng = Lane::new(seed, 0).rng();
        let mut x = vec![0.0; d];
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            draw(&mut rng, &mut x);
            let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let v = r.powf(-sigma);
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn moment_matches_monte_carlo() {
        let gauss = |rng: &mut rand_chacha::ChaCha8Rng, x: &mut [f64]| {
            for v in x.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v = 2f64.sqrt() * g;
            }
        };
        for (d, sigma) in [(2, 0.5), (3, 1.0)] {
            let (m, se) = mc_moment(d, sigma, 1_000_000, 11 + d as u64, gauss);
            let exact = moment_neg_sigma(&rp(d, 2.0, sigma)).unwrap();
            assert!((m - exact).abs() < 3.0 * se, "d={d}: {m} ± {se} vs {exact}");
        }
        // Isotropic Cauchy (β = 1) as Z/|W|, independent of the subordinator.
        let cauchy = |rng: &mut rand_chacha::ChaCha8Rng, x: &mut [f64]| {
            let w: f64 = rng.sample::<f64, _>(StandardNormal).abs();
            for v in x.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v = g / w;
            }
        };
        let (m, se) = mc_moment(2, 0.5, 1_000_000, 17, cauchy);
        let exact = moment_neg_sigma(&rp(2, 1.0, 0.5)).unwrap();
        assert!((m - exact).abs() < 3.0 * se, "{m} ± {se} vs {exact}");
    }

    #[test]
    fn moment_tends_to_one_as_sigma_vanishes() {
        for (d, beta) in [(1, 2.0), (2, 1.3), (3, 0.7)] {
            let m = moment_neg_sigma(&rp(d, beta, 1e-4)).unwrap();
            assert!((m - 1.0).abs() < 0.01, "{m}");
        }
        assert!(matches!(
            moment_neg_sigma(&rp(2, 2.0, 2.0)),
            Err(LabError::Regime(_))
        ));
    }

    #[test]
    fn mean_eta_examples() {
        let r = rp(2, 2.0, 1.0);
        let m = moment_neg_sigma(&r).unwrap();
        assert!((mean_eta(&r, 1.0).unwrap() - m * 4.0 / 3.0).abs() < 1e-14);
        assert_eq!(mean_eta(&r, 0.0).unwrap(), 0.0);
        let ratio = mean_eta(&r, 2.0).unwrap() / mean_eta(&r, 1.0).unwrap();
        assert!((ratio - 2f64.powf(1.5)).abs() < 1e-12);
        assert!(matches!(mean_eta(&rp(3, 2.0, 2.0), 1.0), Err(LabError::Regime(_))));
    }

    /// `∫_0^1∫_0^1 (u+v)^{-p} du dv` by dyadic corner shells.
    fn corner_oracle(p: f64) -> f64 {
        let (gx, gw) = gauss_legendre(12);
        let sq = |x0: f64, y0: f64, h: f64| -> f64 {
            let mut s = 0.0;
            for (a, wa) in gx.iter().zip(&gw) {
                for (b, wb) in gx.iter().zip(&gw) {
                    let u = x0 + 0.5 * h * (a + 1.0);
                    let v = y0 + 0.5 * h * (b + 1.0);
                    s += wa * wb * (u + v).powf(-p);
                }
            }
            s * 0.25 * h * h
        };
        let mut total = 0.0;
        let mut h = 1.0;
        for _ in 0..80 {
            let hh = 0.5 * h;
            total += sq(hh, 0.0, hh) + sq(0.0, hh, hh) + sq(hh, hh, hh);
            h = hh;
        }
        total
    }

    #[test]
    fn mean_rectangle_against_quadrature() {
        for sigma in [1.0, 2.0, 2.5] {
            let r = rp(3, 2.0, sigma);
            let m = moment_neg_sigma(&r).unwrap();
            let v = mean_rectangle(&r, 0.0, 1.0, 1.0, 2.0).unwrap();
            let oracle = m * corner_oracle(r.ratio());
            assert!((v / oracle - 1.0).abs() < 1e-8, "sigma={sigma}: {v} vs {oracle}");
        }
        let r = rp(3, 2.0, 1.0);
        let m = moment_neg_sigma(&r).unwrap();
        let closed = m * (4.0 / 3.0) * (2f64.powf(1.5) - 2.0);
        assert!((mean_rectangle(&r, 0.0, 1.0, 1.0, 2.0).unwrap() - closed).abs() < 1e-12);
        let r1 = rp(3, 2.0, 2.0);
        let m1 = moment_neg_sigma(&r1).unwrap();
        let v1 = mean_rectangle(&r1, 0.0, 1.0, 1.0, 2.0).unwrap();
        assert!((v1 - m1 * 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mean_rectangle_is_continuous_through_the_log_branch() {
        let at = |sigma: f64| {
            let r = rp(3, 2.0, sigma);
            mean_rectangle(&r, 0.1, 0.7, 0.9, 1.6).unwrap() / moment_neg_sigma(&r).unwrap()
        };
        let mid = at(2.0);
        for s in [2.0 - 2e-6, 2.0 + 2e-6] {
            assert!((at(s) / mid - 1.0).abs() < 1e-5, "{} vs {mid}", at(s));
        }
    }

    #[test]
    fn mean_rectangle_edge_cases() {
        let r = rp(3, 2.0, 1.0);
        assert_eq!(mean_rectangle(&r, 0.5, 0.5, 1.0, 2.0).unwrap(), 0.0);
        assert!(matches!(mean_rectangle(&r, 0.0, 1.0, 0.5, 2.0), Err(LabError::Domain(_))));
        assert!(mean_rectangle(&rp(3, 1.0, 2.5), 0.0, 1.0, 1.0, 2.0).is_err());
    }

    /// `∫_R |z|^{-a} |1−z|^{-a} dz`, `a = 3/4`, with endpoint substitutions.
    fn composition_oracle_1d(y: f64) -> f64 {
        let a = 0.75;
        let f = |z: f64| z.abs().powf(-a) * (y - z).abs().powf(-a);
        let (u, w) = composite_gl(0.0, 1.0, 8, 16);
        let mut total = 0.0;
        let half = 0.5 * y;
        // z = half·u⁴ and z = y − half·u⁴ (both endpoint singularities).
        for (ui, wi) in u.iter().zip(&w) {
            let jac = 4.0 * half * ui.powi(3);
            total += wi * jac * (f(half * ui.powi(4)) + f(y - half * ui.powi(4)));
        }
        // Tails z = y + s and z = −s: s = y·v⁴ on (0, y) and s = y/v² on (y, ∞).
        for (vi, wi) in u.iter().zip(&w) {
            let s1 = y * vi.powi(4);
            let j1 = 4.0 * y * vi.powi(3);
            total += wi * j1 * (f(y + s1) + f(-s1));
            if *vi > 0.0 {
                let s2 = y / (vi * vi);
                let j2 = 2.0 * y / vi.powi(3);
                total += wi * j2 * (f(y + s2) + f(-s2));
            }
        }
        total
    }

    #[test]
    fn composition_constant_matches_quadrature() {
        let c = riesz_composition_constant(1, 0.5).unwrap();
        let lhs = composition_oracle_1d(1.0);
        assert!((lhs / c - 1.0).abs() < 1e-3, "{lhs} vs {c}");
        let lhs2 = composition_oracle_1d(2.0);
        assert!((lhs2 / lhs - 2f64.powf(-0.5)).abs() < 1e-6);
        // d = 3, σ = 1 via the bipolar reduction for radial integrands:
        // ∫ |z|^{-2}|e−z|^{-2} dz = 2π ∫_0^∞ r^{-1} ln((r+1)/|r−1|) dr.
        let g = |r: f64| ((r + 1.0) / (r - 1.0).abs()).ln() / r;
        let (u, w) = composite_gl(0.0, 1.0, 16, 16);
        let mut s = 0.0;
        for (ui, wi) in u.iter().zip(&w) {
            // r in (0,1) as 1 − u² ... graded to both ends; r in (1, ∞) as 1/(1 − u²).
            let r1 = 1.0 - ui * ui;
            s += wi * 2.0 * ui * g(r1);
            let q = 1.0 - ui * ui;
            let r2 = 1.0 / q;
            s += wi * 2.0 * ui / (q * q) * g(r2);
        }
        let lhs3 = 2.0 * PI * s;
        let c3 = riesz_composition_constant(3, 1.0).unwrap();
        assert!((lhs3 / c3 - 1.0).abs() < 1e-3, "{lhs3} vs {c3}");
        assert!((c3 - PI.powi(3)).abs() < 1e-10);
        assert!(riesz_composition_constant(3, 3.0).is_err());
    }

    #[test]
    fn constant_path_is_singular_for_eta() {
        let r = rp(2, 2.0, 0.5);
        let path = StablePath::constant(*r.stable(), 1.0, 16);
        assert!(matches!(
            eta(&path, &r, &QuadratureSpec::default()),
            Err(LabError::Singular(_))
        ));
    }

    #[test]
    fn eta_gates() {
        let r = rp(3, 2.0, 2.0);
        let path = sample_path(r.stable(), 1.0, 8, Lane::new(1, 0)).unwrap();
        assert!(matches!(eta(&path, &r, &QuadratureSpec::default()), Err(LabError::Regime(_))));
        let r2 = rp(2, 2.0, 2.0);
        let p2 = sample_path(r2.stable(), 1.0, 8, Lane::new(1, 0)).unwrap();
        assert!(matches!(eta(&p2, &r2, &QuadratureSpec::default()), Err(LabError::Parameter(_))));
        let r3 = rp(2, 2.0, 0.5);
        let q = QuadratureSpec { band_width: Some(0.3 / 8.0), ..Default::default() };
        assert!(eta(&p2, &r3, &q).is_err());
    }

    #[test]
    fn shifted_eta_reduces_and_decays() {
        let r = rp(2, 2.0, 0.5);
        let q = QuadratureSpec::default();
        let path = sample_path(r.stable(), 1.0, 64, Lane::new(2, 0)).unwrap();
        assert_eq!(
            eta_shifted(&path, &[0.0, 0.0], &r, &q).unwrap(),
            eta(&path, &r, &q).unwrap()
        );
        let diam = path.diameter();
        let dir = [0.6, 0.8];
        let mut last = f64::INFINITY;
        for k in 1..8 {
            let c = diam * (1.0 + k as f64);
            let v = eta_shifted(&path, &[c * dir[0], c * dir[1]], &r, &q).unwrap();
            assert!(v < last);
            assert!(v <= 0.5 * (c - diam).powf(-0.5) + 1e-12);
            last = v;
        }
        let z = [0.3, -0.2];
        let v0 = eta_shifted(&path, &z, &r, &q).unwrap();
        let v1 = eta_shifted(&path, &[0.3 + 1e-7, -0.2], &r, &q).unwrap();
        assert!((v1 - v0).abs() < 1e-4 * v0);
    }

    #[test]
    fn zeta_symmetry_and_grid_checks() {
        let r = rp(2, 2.0, 0.5);
        let q = QuadratureSpec::default();
        let a = sample_path(r.stable(), 1.0, 32, Lane::new(3, 0)).unwrap();
        let b = sample_path(r.stable(), 1.0, 32, Lane::new(3, 1)).unwrap();
        let ab = zeta(&a, &b, &r, &q, 0.5, 0.75).unwrap();
        let ba = zeta(&b, &a, &r, &q, 0.75, 0.5).unwrap();
        assert!((ab - ba).abs() < 1e-12 * ab);
        assert_eq!(zeta(&a, &b, &r, &q, 0.0, 1.0).unwrap(), 0.0);
        assert!(matches!(zeta(&a, &b, &r, &q, 0.51, 1.0), Err(LabError::Domain(_))));
        assert!(matches!(zeta(&a, &b, &r, &q, 1.5, 1.0), Err(LabError::Domain(_))));
    }

    #[test]
    fn xi_on_constant_and_growing_paths() {
        let r = rp(1, 2.0, 0.5);
        let path = StablePath::constant(*r.stable(), 2.0, 10);
        assert!((xi_field(&path, &[1.0], &r).unwrap() - 2.0).abs() < 1e-12);
        assert!((xi_field(&path, &[-1.0], &r).unwrap() - 2.0).abs() < 1e-12);
        let r3 = rp(3, 2.0, 1.0);
        let p3 = StablePath::constant(*r3.stable(), 1.5, 4);
        assert!((xi_field(&p3, &[0.0, 1.0, 0.0], &r3).unwrap() - 1.5).abs() < 1e-12);
        for (r, n) in [(r, 64), (r3, 64)] {
            let p = sample_path(r.stable(), 2.0, n, Lane::new(4, 0)).unwrap();
            let half = p.prefix(n / 2).unwrap();
            let x: Vec<f64> = (0..r.d()).map(|k| 0.3 + 0.1 * k as f64).collect();
            assert!(xi_field(&p, &x, &r).unwrap() >= xi_field(&half, &x, &r).unwrap());
        }
    }

    #[test]
    fn xi_segment_quadrature_matches_exact_line_integral() {
        // Straight segment through the plane, exponent 1.25: closed form via
        // ∫ (δ² + v²)^{-a/2} dv on a line at distance δ.
        let params = StableParams::new(2, 2.0).unwrap();
        let path = StablePath::from_parts(
            params,
            1.0,
            vec![0.0, 1.0],
            vec![vec![0.0, 2.0], vec![0.0, 0.0]],
        )
        .unwrap();
        let a = 1.25;
        let x = [0.7, 0.01];
        let got = occupation_integral(&path, &x, a);
        let (u, w) = composite_gl(-0.7, 1.3, 400, 16);
        let oracle: f64 = u
            .iter()
            .zip(&w)
            .map(|(v, wi)| wi * (x[1] * x[1] + v * v).powf(-0.5 * a))
            .sum::<f64>()
            / 2.0;
        assert!((got / oracle - 1.0).abs() < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn eta_is_monotone_in_the_horizon() {
        let r = rp(2, 2.0, 0.5);
        let q = QuadratureSpec::default();
        let path = sample_path(r.stable(), 1.0, 128, Lane::new(5, 0)).unwrap();
        let mut last = 0.0;
        for m in [8, 16, 32, 64, 128] {
            let v = eta(&path.prefix(m).unwrap(), &r, &q).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn band_error_has_the_predicted_order_on_a_smooth_path() {
        // X_s = s with β = 1: |X_s − X_r|^{−σ} = (s−r)^{−σ}, so the band
        // deficit is O(Δ^{1−σ}).
        let params = StableParams::new(1, 1.0).unwrap();
        let r = RieszParams::new(params, 0.5).unwrap();
        let est = |n: usize| {
            let t = uniform_times(1.0, n);
            let path = StablePath::from_parts(params, 1.0, t.clone(), vec![t]).unwrap();
            eta(&path, &r, &QuadratureSpec::default()).unwrap()
        };
        let v: Vec<f64> = [256, 512, 1024].iter().map(|&n| est(n)).collect();
        let order = ((v[1] - v[0]) / (v[2] - v[1])).log2();
        assert!((order - 0.5).abs() < 0.2, "{order}");
        // Mean correction against the exact value 4/3 of ∫∫(s−r)^{-1/2}.
        let t = uniform_times(1.0, 1024);
        let path = StablePath::from_parts(params, 1.0, t.clone(), vec![t]).unwrap();
        let corr = eta(&path, &r, &QuadratureSpec::default().with_mean_correction()).unwrap();
        // The correction uses E|X_1|^{-σ} of the Cauchy process, not of the
        // straight line, so only the uncorrected sum converges to 4/3.
        assert!(corr > v[2]);
        assert!((v[2] - 4.0 / 3.0).abs() < 0.1);
    }

    proptest! {
        #[test]
        fn zeta_scales_with_the_grid(c in 0.25f64..4.0, seed in 0u64..1000) {
            // Same increments on a grid stretched by c in time and c^{1/β}
            // in space multiply ζ by exactly c^{2−σ/β}.
            let r = rp(2, 2.0, 0.5);
            let q = QuadratureSpec::default();
            let a = sample_path(r.stable(), 1.0, 16, Lane::new(seed, 0)).unwrap();
            let b = sample_path(r.stable(), 1.0, 16, Lane::new(seed, 1)).unwrap();
            let stretch = |p: &StablePath| {
                let t: Vec<f64> = p.times().iter().map(|x| x * c).collect();
                let x: Vec<Vec<f64>> = p.coords().iter().map(|col| col.iter().map(|v| v * c.sqrt()).collect()).collect();
                StablePath::from_parts(*r.stable(), c, t, x).unwrap()
            };
            let z1 = zeta(&a, &b, &r, &q, 1.0, 1.0).unwrap();
            let zc = zeta(&stretch(&a), &stretch(&b), &r, &q, c, c).unwrap();
            prop_assert!((zc / z1 - c.powf(1.75)).abs() < 1e-9 * c.powf(1.75));
        }

        #[test]
        fn primitive_second_difference_is_positive(p in 0.01f64..1.99, u in 0.01f64..10.0) {
            let h = 1e-3 * u;
            let g = |x| rectangle_primitive(p, x);
            let dd = (g(u + h) - 2.0 * g(u) + g(u - h)) / (h * h);
            prop_assert!((dd / u.powf(-p) - 1.0).abs() < 1e-3);
        }
    }
}
