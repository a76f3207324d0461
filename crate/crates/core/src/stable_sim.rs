//! Isotropic symmetric β-stable processes in `R^d`.
//!
//! The characteristic exponent is fixed to the rotationally invariant
//! `ψ(λ) = |λ|^β`, so `E exp(iλ·X_t) = exp(-t|λ|^β)`. For `β = 2` this is a
//! Brownian motion with covariance `2t·I`.
//!
//! For `β < 2` an increment over a step `Δt` is drawn by subordination:
//! `ΔX = √A · G` with `G ~ N(0, 2I)` and `A = Δt^{2/β} S`, where `S` is a
//! positive (β/2)-stable variable with `E exp(-sS) = exp(-s^{β/2})`, drawn
//! with the Chambers–Mallows–Stuck (Kanter) transform. Then
//! `E exp(iλ·ΔX) = E exp(-A|λ|²) = exp(-Δt|λ|^β)` exactly.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::Lane;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    d: usize,
    beta: f64,
}

impl StableParams {
    pub fn new(d: usize, beta: f64) -> Result<Self> {
        if d == 0 {
            return Err(LabError::Parameter("dimension d must be at least 1".into()));
        }
        if !(beta > 0.0 && beta <= 2.0) {
            return Err(LabError::Parameter(format!(
                "stability index must satisfy 0 < beta <= 2 (got {beta})"
            )));
        }
        Ok(Self { d, beta })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// `ψ(λ) = |λ|^β`.
pub fn psi(lambda: &[f64], params: &StableParams) -> f64 {
    let r2: f64 = lambda.iter().map(|x| x * x).sum();
    if r2 == 0.0 {
        return 0.0;
    }
    r2.powf(0.5 * params.beta)
}

/// `Q(λ) = 1 / (1 + ψ(λ))`.
pub fn q_weight(lambda: &[f64], params: &StableParams) -> f64 {
    1.0 / (1.0 + psi(lambda, params))
}

/// A path sampled at increasing times `0 = t_0 < t_1 < … < t_n`.
///
/// Coordinates are stored per axis (`coords[k][i]` is the k-th coordinate of
/// `X_{t_i}`), which keeps the pair sums in [`crate::riesz_core`] vectorizable.
#[derive(Debug, Clone, PartialEq)]
pub struct StablePath {
    params: StableParams,
    horizon: f64,
    times: Vec<f64>,
    coords: Vec<Vec<f64>>,
    lane: Option<Lane>,
}

impl StablePath {
    /// Builds a path from explicit values, e.g. a deterministic test double.
    ///
    /// `coords` holds one vector per axis, each of length `times.len()`.
    pub fn from_parts(
        params: StableParams,
        horizon: f64,
        times: Vec<f64>,
        coords: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if coords.len() != params.d {
            return Err(LabError::Parameter(format!(
                "expected {} coordinate arrays, got {}",
                params.d,
                coords.len()
            )));
        }
        if times.len() < 2 {
            return Err(LabError::Parameter("a path needs at least one step".into()));
        }
        if times[0] != 0.0 {
            return Err(LabError::Parameter("times[0] must be 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::Parameter("times must be strictly increasing".into()));
        }
        if *times.last().unwrap() > horizon * (1.0 + 1e-12) {
            return Err(LabError::Parameter("times exceed the horizon".into()));
        }
        if coords.iter().any(|c| c.len() != times.len()) {
            return Err(LabError::Parameter("coordinate length mismatch".into()));
        }
        if coords.iter().any(|c| c[0] != 0.0) {
            return Err(LabError::Parameter("paths start at the origin".into()));
        }
        Ok(Self {
            params,
            horizon,
            times,
            coords,
            lane: None,
        })
    }

    /// The constant path `X ≡ 0` on a uniform grid.
    pub fn constant(params: StableParams, t: f64, n: usize) -> Self {
        let times = uniform_times(t, n);
        let coords = vec![vec![0.0; n + 1]; params.d];
        Self {
            params,
            horizon: t,
            times,
            coords,
            lane: None,
        }
    }

    pub fn params(&self) -> &StableParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.d
    }

    /// Number of steps `n` (there are `n + 1` positions).
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    pub fn lane(&self) -> Option<Lane> {
        self.lane
    }

    pub fn position(&self, i: usize) -> Vec<f64> {
        self.coords.iter().map(|c| c[i]).collect()
    }

    /// The path restricted to its first `steps` steps.
    pub fn prefix(&self, steps: usize) -> Result<StablePath> {
        if steps == 0 || steps > self.steps() {
            return Err(LabError::Parameter(format!(
                "prefix length {steps} outside 1..={}",
                self.steps()
            )));
        }
        Ok(Self {
            params: self.params,
            horizon: self.times[steps],
            times: self.times[..=steps].to_vec(),
            coords: self.coords.iter().map(|c| c[..=steps].to_vec()).collect(),
            lane: self.lane,
        })
    }

    /// True when all steps have the same length (relative tolerance 1e-9).
    pub fn is_uniform(&self) -> bool {
        let h = self.times[1] - self.times[0];
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
    }

    /// Largest distance between two positions (bounded by twice the largest
    /// distance from the bounding-box center).
    pub fn diameter(&self) -> f64 {
        let mut r2 = 0.0;
        for c in &self.coords {
            let (lo, hi) = min_max(c);
            r2 += (hi - lo) * (hi - lo);
        }
        r2.sqrt()
    }

    /// Writes the path as whitespace-separated columns `time x_1 … x_d`
    /// with a `#` header line.
    pub fn write_columns(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "# time")?;
        for k in 0..self.params.d {
            write!(f, " x{}", k + 1)?;
        }
        writeln!(f)?;
        for i in 0..self.times.len() {
            write!(f, "{:.12e}", self.times[i])?;
            for c in &self.coords {
                write!(f, " {:.12e}", c[i])?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub(crate) fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

pub fn uniform_times(t: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t * i as f64 / n as f64).collect()
}

/// Samples a path on the uniform grid `t_i = i t / n`.
pub fn sample_path(params: &StableParams, t: f64, n: usize, lane: Lane) -> Result<StablePath> {
    if !(t > 0.0) {
        return Err(LabError::Parameter(format!("horizon must be positive (got {t})")));
    }
    if n == 0 {
        return Err(LabError::Parameter("need at least one step".into()));
    }
    sample_path_at(params, t, uniform_times(t, n), lane)
}

/// Samples a path at arbitrary increasing times starting at 0.
pub fn sample_path_at(
    params: &StableParams,
    horizon: f64,
    times: Vec<f64>,
    lane: Lane,
) -> Result<StablePath> {
    let d = params.d;
    let n = times.len().saturating_sub(1);
    let mut coords = vec![vec![0.0; n + 1]; d];
    let mut path = StablePath::from_parts(*params, horizon, times, coords.clone())?;
    let mut rng = lane.rng();
    let sampler = IncrementSampler::new(params);
    let mut inc = vec![0.0; d];
    for i in 1..=n {
        let dt = path.times[i] - path.times[i - 1];
        sampler.draw(dt, &mut rng, &mut inc);
        for k in 0..d {
            coords[k][i] = coords[k][i - 1] + inc[k];
        }
    }
    path.coords = coords;
    path.lane = Some(lane);
    Ok(path)
}

/// Draws increments `X_{s+Δt} − X_s`.
#[derive(Debug, Clone, Copy)]
pub struct IncrementSampler {
    beta: f64,
}

impl IncrementSampler {
    pub fn new(params: &StableParams) -> Self {
        Self { beta: params.beta }
    }

    pub fn draw<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        let scale = if self.beta == 2.0 {
            (2.0 * dt).sqrt()
        } else {
            let a = 0.5 * self.beta;
            let s = positive_stable(a, rng);
            (2.0 * dt.powf(1.0 / a) * s).sqrt()
        };
        for o in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *o = scale * g;
        }
    }
}

/// Positive `a`-stable variable with Laplace transform `exp(-s^a)`, `0 < a < 1`
/// (Kanter's form of the Chambers–Mallows–Stuck transform).
pub fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u = open01(rng) * PI;
    let w = -open01(rng).ln();
    let s1 = (a * u).sin() / u.sin().powf(1.0 / a);
    let s2 = (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a);
    s1 * s2
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
