//! The action `F(t) = ∫ [∫_0^t |y − X_s|^{−p} ds] W(dy)` of a stable path in a
//! white-noise potential.
//!
//! Given the path, F(t) is centered Gaussian. The composition identity with
//! exponent `p = (σ+d)/2` turns its variance into `∫ ξ² = 2C η([0,t]²_<)`
//! with `σ = 2p − d`, so `F(t) = U √(2C η([0,t]²_<))` in law. The grid sampler
//! builds the white-noise integral directly and serves as a check.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::riesz_core::{eta, occupation_integral, riesz_composition_constant, QuadratureSpec, RieszParams};
use crate::stable_sim::{min_max, StablePath};
use crate::variational::potential_constants;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    p: f64,
    rp: RieszParams,
    c: f64,
}

impl PotentialParams {
    /// Requires `d/2 < p < min(d, (d+β)/2)`.
    pub fn new(d: usize, beta: f64, p: f64) -> Result<Self> {
        let df = d as f64;
        if !(p > 0.5 * df && p < df.min(0.5 * (df + beta))) {
            return Err(LabError::Parameter(format!(
                "p must satisfy d/2 < p < min(d, (d+beta)/2) (got p = {p}, d = {d}, beta = {beta})"
            )));
        }
        let sigma = 2.0 * p - df;
        let rp = RieszParams::from_dims(d, beta, sigma)?;
        let c = riesz_composition_constant(d, sigma)?;
        Ok(Self { p, rp, c })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sigma(&self) -> f64 {
        self.rp.sigma()
    }

    pub fn rp(&self) -> &RieszParams {
        &self.rp
    }

    /// The composition constant C at `σ = 2p − d`.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// `2C`: conditional variance of F(t) per unit of `η([0,t]²_<)`.
    pub fn variance_factor(&self) -> f64 {
        2.0 * self.c
    }

    /// Exponent of the scaling `F(t) = t^{h} F(1)` in law, `h = (2β − 2p + d)/(2β)`.
    pub fn scaling_exponent(&self) -> f64 {
        let beta = self.rp.beta();
        (2.0 * beta - self.sigma()) / (2.0 * beta)
    }
}

/// Conditional variance `2C η([0,t]²_<)` of F given the path.
pub fn conditional_variance(path: &StablePath, pp: &PotentialParams, q: &QuadratureSpec) -> Result<f64> {
    pp.rp.require_subcritical("the action F")?;
    Ok(pp.variance_factor() * eta(path, &pp.rp, q)?)
}

/// `U √(2C η)` with U standard normal.
pub fn sample_f_representation<R: Rng + ?Sized>(
    path: &StablePath,
    pp: &PotentialParams,
    q: &QuadratureSpec,
    rng: &mut R,
) -> Result<f64> {
    let var = conditional_variance(path, pp, q)?;
    let u: f64 = rng.sample(StandardNormal);
    Ok(u * var.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Cells across the near region `[c − R_0, c + R_0]`, `R_0` = path span.
    pub near_cells: usize,
    /// Cells per doubling shell on each side.
    pub shell_cells: usize,
    /// Stop adding shells once a shell adds less than this fraction.
    pub stop_fraction: f64,
    /// Largest admissible share of the analytic far tail in the variance.
    pub max_tail_fraction: f64,
    pub max_shells: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            near_cells: 512,
            shell_cells: 8,
            stop_fraction: 0.01,
            max_tail_fraction: 0.1,
            max_shells: 64,
        }
    }
}

/// Occupation field `ξ_p` on a one-dimensional cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub centers: Vec<f64>,
    pub volumes: Vec<f64>,
    pub xi: Vec<f64>,
    /// `Σ ξ² vol` over the cells.
    pub grid_variance: f64,
    /// `2 t² R^{1−2p}/(2p−1)` beyond the outer radius R.
    pub tail_variance: f64,
    pub near_spacing: f64,
    pub outer_radius: f64,
}

impl GridField {
    pub fn build(path: &StablePath, pp: &PotentialParams, spec: &GridSpec) -> Result<Self> {
        if pp.rp.d() != 1 {
            return Err(LabError::Parameter(
                "the white-noise grid sampler is implemented for d = 1".into(),
            ));
        }
        if path.params() != pp.rp.stable() {
            return Err(LabError::Parameter("path and potential parameters differ".into()));
        }
        if spec.near_cells == 0 || spec.shell_cells == 0 {
            return Err(LabError::Parameter("grid cell counts must be positive".into()));
        }
        let p = pp.p;
        let t = path.horizon();
        let (lo, hi) = min_max(&path.coords()[0]);
        let mid = 0.5 * (lo + hi);
        let span = (hi - lo).max(t.powf(1.0 / pp.rp.beta()) * 1e-3);
        let r0 = span;
        let h = 2.0 * r0 / spec.near_cells as f64;
        let mut centers = Vec::new();
        let mut volumes = Vec::new();
        let mut xi = Vec::new();
        let mut total = 0.0;
        let push = |y: f64, vol: f64, centers: &mut Vec<f64>, volumes: &mut Vec<f64>, xi: &mut Vec<f64>| {
            let v = occupation_integral(path, &[y], p);
            centers.push(y);
            volumes.push(vol);
            xi.push(v);
            v * v * vol
        };
        for i in 0..spec.near_cells {
            let y = mid - r0 + (i as f64 + 0.5) * h;
            total += push(y, h, &mut centers, &mut volumes, &mut xi);
        }
        let mut r = r0;
        let mut shells = 0;
        loop {
            if shells >= spec.max_shells {
                return Err(LabError::Coverage(format!(
                    "grid did not saturate after {shells} shells"
                )));
            }
            let hs = r / spec.shell_cells as f64;
            let mut added = 0.0;
            for side in [-1.0, 1.0] {
                for i in 0..spec.shell_cells {
                    let y = mid + side * (r + (i as f64 + 0.5) * hs);
                    added += push(y, hs, &mut centers, &mut volumes, &mut xi);
                }
            }
            total += added;
            r *= 2.0;
            shells += 1;
            if added < spec.stop_fraction * total {
                break;
            }
        }
        let tail_variance = 2.0 * t * t * r.powf(1.0 - 2.0 * p) / (2.0 * p - 1.0);
        if tail_variance > spec.max_tail_fraction * (total + tail_variance) {
            return Err(LabError::Coverage(format!(
                "far tail carries {:.3} of the variance (limit {})",
                tail_variance / (total + tail_variance),
                spec.max_tail_fraction
            )));
        }
        Ok(Self {
            centers,
            volumes,
            xi,
            grid_variance: total,
            tail_variance,
            near_spacing: h,
            outer_radius: r,
        })
    }

    /// Exact conditional variance of [`GridField::sample`].
    pub fn variance(&self) -> f64 {
        self.grid_variance + self.tail_variance
    }

    /// `Σ ξ(c) √vol Z_c`, plus one Gaussian for the far tail.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut acc = 0.0;
        for (x, v) in self.xi.iter().zip(&self.volumes) {
            let z: f64 = rng.sample(StandardNormal);
            acc += x * v.sqrt() * z;
        }
        let z: f64 = rng.sample(StandardNormal);
        acc + self.tail_variance.sqrt() * z
    }
}

/// One white-noise quadrature draw of F(t).
pub fn sample_f_grid<R: Rng + ?Sized>(
    path: &StablePath,
    pp: &PotentialParams,
    spec: &GridSpec,
    rng: &mut R,
) -> Result<f64> {
    Ok(GridField::build(path, pp, spec)?.sample(rng))
}

/// `(rate, lil)`: the limit of `a^{−2β/(β+σ)} log P{±F(1) ≥ a}` and the LIL
/// constant, for a given `ρ_p`.
pub fn f_tail_constants(pp: &PotentialParams, rho_p: f64) -> Result<(f64, f64)> {
    let c = potential_constants(pp.rp.d(), pp.rp.beta(), pp.p, rho_p)?;
    Ok((c.rate, c.lil))
}
