//! Euler–Maruyama Monte Carlo for `dx = f(x) dt + sqrt(2ε) dW`.
//!
//! Replica `r` draws its Gaussians from `ChaCha8Rng::seed_from_u64(seed)`
//! switched to stream `r`, so every replica is reproducible on its own and
//! results do not depend on the thread count. Statistics are computed from
//! the sorted sample array.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_f64_array, CsvTable};
use crate::potential::Potential;
use crate::quadrature::{gauss_legendre_8, integrate, QuadOptions};

/// Name of the generator family, recorded in run metadata.
pub const RNG_FAMILY: &str = "ChaCha8 (rand_chacha 0.9), stream = replica index";

/// Vector field driving the diffusion.
pub trait Drift: Send + Sync {
    fn dim(&self) -> usize;
    fn drift_into(&self, x: &[f64], out: &mut [f64]);

    /// `out = (Df(x))ᵀ r`. Default: central differences, one column per axis.
    fn jacobian_t_apply(&self, x: &[f64], r: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; d];
        let mut fm = vec![0.0; d];
        for j in 0..d {
            let h = crate::potential::fd_step(x[j]);
            xp[j] = x[j] + h;
            self.drift_into(&xp, &mut fp);
            xp[j] = x[j] - h;
            self.drift_into(&xp, &mut fm);
            xp[j] = x[j];
            out[j] = (0..d).map(|i| (fp[i] - fm[i]) / (2.0 * h) * r[i]).sum();
        }
    }
}

/// `f = −∇V`.
#[derive(Debug, Clone, Copy)]
pub struct GradientDrift<'a>(pub &'a dyn Potential);

impl Drift for GradientDrift<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        self.0.gradient_into(x, out);
        out.iter_mut().for_each(|g| *g = -*g);
    }
    fn jacobian_t_apply(&self, x: &[f64], r: &[f64], out: &mut [f64]) {
        let h = self.0.hessian(x);
        for (i, o) in out.iter_mut().enumerate() {
            *o = -(0..r.len()).map(|j| h[(i, j)] * r[j]).sum::<f64>();
        }
    }
}

/// `f(x) = A x` with a row-major `d × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDrift {
    pub dim: usize,
    pub matrix: Vec<f64>,
}

impl Drift for LinearDrift {
    fn dim(&self) -> usize {
        self.dim
    }
    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            out[i] = (0..self.dim).map(|j| self.matrix[i * self.dim + j] * x[j]).sum();
        }
    }
    fn jacobian_t_apply(&self, _x: &[f64], r: &[f64], out: &mut [f64]) {
        for j in 0..self.dim {
            out[j] = (0..self.dim).map(|i| self.matrix[i * self.dim + j] * r[i]).sum();
        }
    }
}

/// Ball `B_δ(center)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Target {
    pub fn contains(&self, x: &[f64]) -> bool {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        r2 <= self.radius * self.radius
    }
}

fn default_guard() -> f64 {
    1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub eps: f64,
    pub dt: f64,
    pub max_time: f64,
    pub target: Target,
    pub seed: u64,
    pub replicas: usize,
    /// Replicas leaving this radius are aborted as numerical blow-up.
    #[serde(default = "default_guard")]
    pub guard_radius: f64,
}

impl SimConfig {
    pub fn new(eps: f64, dt: f64, max_time: f64, target: Target, seed: u64, replicas: usize) -> Self {
        SimConfig {
            eps,
            dt,
            max_time,
            target,
            seed,
            replicas,
            guard_radius: default_guard(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be >= 0, got {}", self.eps)));
        }
        if !(self.dt > 0.0) || !(self.max_time > 0.0) {
            return Err(Error::invalid("dt and max_time must be positive"));
        }
        if !(self.target.radius > 0.0) {
            return Err(Error::invalid("target radius must be positive"));
        }
        if self.eps > 0.0 && self.dt > self.target.radius.powi(2) / (10.0 * self.eps) {
            return Err(Error::invalid(format!(
                "dt = {} too large to resolve target hits: need dt <= delta^2/(10 eps) = {}",
                self.dt,
                self.target.radius.powi(2) / (10.0 * self.eps)
            )));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("replica count must be positive"));
        }
        Ok(())
    }

    fn steps(&self) -> u64 {
        (self.max_time / self.dt).ceil() as u64
    }
}

/// Generator for replica `r`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// One EM step in place; returns false when the state is not finite.
#[inline]
fn em_step(f: &dyn Drift, x: &mut [f64], buf: &mut [f64], dt: f64, noise: f64, rng: &mut ChaCha8Rng) -> bool {
    f.drift_into(x, buf);
    let mut ok = true;
    for (xi, fi) in x.iter_mut().zip(buf.iter()) {
        let xi_n: f64 = StandardNormal.sample(rng);
        *xi += fi * dt + noise * xi_n;
        ok &= xi.is_finite();
    }
    ok
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub dim: usize,
    /// Row-major `(steps + 1) × dim` states, starting with `x0`.
    pub states: Vec<f64>,
    pub hit_time: Option<f64>,
    pub aborted: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    /// Persist as a binary `f64` array with a JSON sidecar.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({ "dt": self.dt, "hit_time": self.hit_time, "aborted": self.aborted });
        write_f64_array(path, &self.states, &[self.len(), self.dim], meta)
    }
}

/// Integrate from `x0` with replica stream 0 until the target is entered,
/// `max_time` is reached or the state leaves the guard radius.
pub fn simulate_em(p: &dyn Potential, x0: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    simulate_drift(&GradientDrift(p), x0, cfg)
}

pub fn simulate_drift(f: &dyn Drift, x0: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let d = f.dim();
    if x0.len() != d || cfg.target.center.len() != d {
        return Err(Error::invalid("start point and target must match the dimension"));
    }
    let mut rng = replica_rng(cfg.seed, 0);
    let noise = (2.0 * cfg.eps * cfg.dt).sqrt();
    let mut x = x0.to_vec();
    let mut buf = vec![0.0; d];
    let mut states = x.clone();
    let mut hit_time = None;
    let mut aborted = false;
    for n in 0..cfg.steps() {
        if !em_step(f, &mut x, &mut buf, cfg.dt, noise, &mut rng) || norm(&x) > cfg.guard_radius {
            aborted = true;
            break;
        }
        states.extend_from_slice(&x);
        if cfg.target.contains(&x) {
            hit_time = Some((n + 1) as f64 * cfg.dt);
            break;
        }
    }
    Ok(Trajectory {
        dt: cfg.dt,
        dim: d,
        states,
        hit_time,
        aborted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Hit(f64),
    Censored,
    Aborted,
}

fn run_replica(f: &dyn Drift, x0: &[f64], cfg: &SimConfig, r: u64) -> Outcome {
    let mut rng = replica_rng(cfg.seed, r);
    let noise = (2.0 * cfg.eps * cfg.dt).sqrt();
    let mut x = x0.to_vec();
    let mut buf = vec![0.0; x.len()];
    let guard2 = cfg.guard_radius * cfg.guard_radius;
    for n in 0..cfg.steps() {
        if !em_step(f, &mut x, &mut buf, cfg.dt, noise, &mut rng) || x.iter().map(|v| v * v).sum::<f64>() > guard2 {
            return Outcome::Aborted;
        }
        if cfg.target.contains(&x) {
            return Outcome::Hit((n + 1) as f64 * cfg.dt);
        }
    }
    Outcome::Censored
}

/// First-hitting-time sample with summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingStats {
    /// Uncensored hitting times, ascending.
    pub samples: Vec<f64>,
    pub replicas: usize,
    pub censored: usize,
    pub aborted: usize,
    pub max_time: f64,
    pub mean: f64,
    pub std_error: f64,
    /// Kolmogorov–Smirnov distance of `samples / mean` to the unit exponential.
    pub ks: f64,
    pub censored_fraction: f64,
    /// Censored fraction below 1 %.
    pub valid: bool,
}

impl HittingStats {
    pub fn from_samples(mut samples: Vec<f64>, censored: usize, aborted: usize, max_time: f64) -> Result<Self> {
        let replicas = samples.len() + censored + aborted;
        if samples.is_empty() {
            return Err(Error::AllCensored(replicas));
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let ks = ks_exponential(&samples, mean);
        let censored_fraction = censored as f64 / replicas as f64;
        Ok(HittingStats {
            samples,
            replicas,
            censored,
            aborted,
            max_time,
            mean,
            std_error: (var / n).sqrt(),
            ks,
            censored_fraction,
            valid: censored_fraction < 0.01,
        })
    }

    /// One row per replica outcome: `tau,censored`.
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["tau", "censored"]);
        for s in &self.samples {
            t.push_raw(vec![fmt_f64(*s), "0".into()]);
        }
        for _ in 0..self.censored {
            t.push_raw(vec![fmt_f64(self.max_time), "1".into()]);
        }
        t
    }
}

/// `sup |F_n(t) − (1 − e^{−t/mean})|` over the sorted sample.
pub fn ks_exponential(sorted: &[f64], mean: f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let cdf = 1.0 - (-t / mean).exp();
            (cdf - i as f64 / n).max((i + 1) as f64 / n - cdf)
        })
        .fold(0.0, f64::max)
}

/// Run `cfg.replicas` independent replicas from `x0` and record their
/// first entrance into the target ball.
pub fn sample_hitting_times(p: &dyn Potential, x0: &[f64], cfg: &SimConfig) -> Result<HittingStats> {
    sample_hitting_times_drift(&GradientDrift(p), x0, cfg)
}

pub fn sample_hitting_times_drift(f: &dyn Drift, x0: &[f64], cfg: &SimConfig) -> Result<HittingStats> {
    cfg.validate()?;
    if x0.len() != f.dim() || cfg.target.center.len() != f.dim() {
        return Err(Error::invalid("start point and target must match the dimension"));
    }
    if cfg.target.contains(x0) {
        return Err(Error::invalid("start point lies inside the target ball"));
    }
    let outcomes: Vec<Outcome> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| run_replica(f, x0, cfg, r))
        .collect();
    let mut samples = Vec::with_capacity(outcomes.len());
    let (mut censored, mut aborted) = (0, 0);
    for o in outcomes {
        match o {
            Outcome::Hit(t) => samples.push(t),
            Outcome::Censored => censored += 1,
            Outcome::Aborted => aborted += 1,
        }
    }
    HittingStats::from_samples(samples, censored, aborted, cfg.max_time)
}

/// Quadrature value matching a ball target in 1D: entering `[c − δ, c + δ]`
/// from `x0` is hitting the half-line bounded by the near edge. A target on
/// the right is handled by reflecting `V`.
pub fn ball_target_oracle_1d(p: &dyn Potential, x0: f64, center: f64, radius: f64, eps: f64) -> Result<f64> {
    if (x0 - center).abs() <= radius {
        return Err(Error::invalid("start point lies inside the target ball"));
    }
    if center < x0 {
        crate::exact1d::mean_hitting_1d(p, center + radius, x0, eps)
    } else {
        let r = crate::potential::Reflected { inner: p };
        crate::exact1d::mean_hitting_1d(&r, -(center - radius), -x0, eps)
    }
}

/// Axis-aligned histogram support; periodic boxes wrap the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub periodic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantHistogram {
    pub bins: usize,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Empirical mass per bin, row-major for 2D.
    pub empirical: Vec<f64>,
    /// `∫_bin e^{−V/ε} / Z`.
    pub reference: Vec<f64>,
    pub l1: f64,
    pub samples: u64,
    /// Fewer than 10 samples per bin on average.
    pub resolution_warning: bool,
}

impl InvariantHistogram {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = if self.dim == 1 {
            CsvTable::new(["x", "empirical", "reference"])
        } else {
            CsvTable::new(["x", "y", "empirical", "reference"])
        };
        let w: Vec<f64> = (0..self.dim)
            .map(|k| (self.upper[k] - self.lower[k]) / self.bins as f64)
            .collect();
        for (i, (e, r)) in self.empirical.iter().zip(&self.reference).enumerate() {
            let cx = self.lower[0] + w[0] * ((i % self.bins) as f64 + 0.5);
            if self.dim == 1 {
                t.push_numbers(&[cx, *e, *r]);
            } else {
                let cy = self.lower[1] + w[1] * ((i / self.bins) as f64 + 0.5);
                t.push_numbers(&[cx, cy, *e, *r]);
            }
        }
        t
    }
}

/// Long single trajectory (`total_time` after `burn_in`) binned on `bins`
/// cells per axis and compared with `e^{−V/ε}/Z` in L1.
pub fn invariant_histogram(
    p: &dyn Potential,
    x0: &[f64],
    eps: f64,
    dt: f64,
    burn_in: f64,
    total_time: f64,
    seed: u64,
    support: &HistogramBox,
    bins: usize,
) -> Result<InvariantHistogram> {
    let d = p.dim();
    if !(d == 1 || d == 2) || support.lower.len() != d || support.upper.len() != d || x0.len() != d {
        return Err(Error::invalid("invariant histogram supports 1D and 2D potentials"));
    }
    if !(eps > 0.0 && dt > 0.0 && total_time > 0.0 && burn_in >= 0.0) || bins == 0 {
        return Err(Error::invalid("invariant histogram needs eps, dt, total_time > 0 and bins > 0"));
    }
    if support.lower.iter().zip(&support.upper).any(|(l, u)| !(l < u)) {
        return Err(Error::invalid("degenerate histogram box"));
    }
    let width: Vec<f64> = (0..d).map(|k| (support.upper[k] - support.lower[k]) / bins as f64).collect();
    let ncell = bins.pow(d as u32);
    let mut counts = vec![0u64; ncell];
    let f = GradientDrift(p);
    let mut rng = replica_rng(seed, 0);
    let noise = (2.0 * eps * dt).sqrt();
    let mut x = x0.to_vec();
    let mut buf = vec![0.0; d];
    let burn = (burn_in / dt).ceil() as u64;
    let steps = (total_time / dt).ceil() as u64;
    let wrap = |x: &mut [f64]| {
        if support.periodic {
            for k in 0..d {
                let len = support.upper[k] - support.lower[k];
                x[k] = support.lower[k] + (x[k] - support.lower[k]).rem_euclid(len);
            }
        }
    };
    for _ in 0..burn {
        if !em_step(&f, &mut x, &mut buf, dt, noise, &mut rng) {
            return Err(Error::Numerical("trajectory blew up during burn-in".into()));
        }
        wrap(&mut x);
    }
    for _ in 0..steps {
        if !em_step(&f, &mut x, &mut buf, dt, noise, &mut rng) {
            return Err(Error::Numerical("trajectory blew up".into()));
        }
        wrap(&mut x);
        let mut idx = 0usize;
        let mut inside = true;
        for k in (0..d).rev() {
            let c = ((x[k] - support.lower[k]) / width[k]).floor();
            if !(c >= 0.0 && c < bins as f64) {
                inside = false;
                break;
            }
            idx = idx * bins + c as usize;
        }
        if inside {
            counts[idx] += 1;
        }
    }
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / steps as f64).collect();
    let reference = boltzmann_bin_masses(p, eps, support, bins)?;
    let l1 = empirical.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum();
    Ok(InvariantHistogram {
        bins,
        dim: d,
        lower: support.lower.clone(),
        upper: support.upper.clone(),
        empirical,
        reference,
        l1,
        samples: steps,
        resolution_warning: (steps as f64) / (ncell as f64) < 10.0,
    })
}

/// Bin masses of the Gibbs density restricted to the box.
fn boltzmann_bin_masses(p: &dyn Potential, eps: f64, support: &HistogramBox, bins: usize) -> Result<Vec<f64>> {
    let d = p.dim();
    let width: Vec<f64> = (0..d).map(|k| (support.upper[k] - support.lower[k]) / bins as f64).collect();
    // shift by the smallest value seen on a fine scan
    let fine = 16 * bins;
    let vmin = if d == 1 {
        (0..=fine)
            .map(|i| p.value(&[support.lower[0] + (support.upper[0] - support.lower[0]) * i as f64 / fine as f64]))
            .fold(f64::INFINITY, f64::min)
    } else {
        let mut m = f64::INFINITY;
        for i in 0..=fine {
            for j in 0..=fine {
                let x = support.lower[0] + (support.upper[0] - support.lower[0]) * i as f64 / fine as f64;
                let y = support.lower[1] + (support.upper[1] - support.lower[1]) * j as f64 / fine as f64;
                m = m.min(p.value(&[x, y]));
            }
        }
        m
    };
    let g = |x: &[f64]| (-(p.value(x) - vmin) / eps).exp();
    let mut mass = Vec::with_capacity(bins.pow(d as u32));
    if d == 1 {
        for i in 0..bins {
            let a = support.lower[0] + width[0] * i as f64;
            mass.push(integrate(|x| g(&[x]), a, a + width[0], QuadOptions::rel(1e-10))?.value);
        }
    } else {
        // tensor Gauss–Legendre on each cell; cells are small relative to √ε
        let (nodes, weights) = gauss_legendre_8();
        for j in 0..bins {
            for i in 0..bins {
                let (ax, ay) = (support.lower[0] + width[0] * i as f64, support.lower[1] + width[1] * j as f64);
                let mut s = 0.0;
                for (u, wu) in nodes.iter().zip(&weights) {
                    for (v, wv) in nodes.iter().zip(&weights) {
                        let x = ax + 0.5 * width[0] * (1.0 + u);
                        let y = ay + 0.5 * width[1] * (1.0 + v);
                        s += wu * wv * g(&[x, y]);
                    }
                }
                mass.push(s * 0.25 * width[0] * width[1]);
            }
        }
    }
    let z: f64 = mass.iter().sum();
    if !(z > 0.0) {
        return Err(Error::Quadrature("partition function vanished".into()));
    }
    Ok(mass.into_iter().map(|m| m / z).collect())
}

/// Region whose boundary records first exits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExitDomain {
    Disk { center: [f64; 2], radius: f64 },
    Box { lower: [f64; 2], upper: [f64; 2] },
}

impl ExitDomain {
    fn contains(&self, x: &[f64]) -> bool {
        match self {
            ExitDomain::Disk { center, radius } => {
                (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) < radius * radius
            }
            ExitDomain::Box { lower, upper } => {
                x[0] > lower[0] && x[0] < upper[0] && x[1] > lower[1] && x[1] < upper[1]
            }
        }
    }

    pub fn center(&self) -> [f64; 2] {
        match self {
            ExitDomain::Disk { center, .. } => *center,
            ExitDomain::Box { lower, upper } => [0.5 * (lower[0] + upper[0]), 0.5 * (lower[1] + upper[1])],
        }
    }

    /// Fraction `s ∈ [0, 1]` along the segment `a → b` where it leaves.
    fn crossing(&self, a: &[f64], b: &[f64]) -> f64 {
        let dx = [b[0] - a[0], b[1] - a[1]];
        match self {
            ExitDomain::Disk { center, radius } => {
                let p = [a[0] - center[0], a[1] - center[1]];
                let qa = dx[0] * dx[0] + dx[1] * dx[1];
                let qb = 2.0 * (p[0] * dx[0] + p[1] * dx[1]);
                let qc = p[0] * p[0] + p[1] * p[1] - radius * radius;
                if qa == 0.0 {
                    return 1.0;
                }
                let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
                ((-qb + disc.sqrt()) / (2.0 * qa)).clamp(0.0, 1.0)
            }
            ExitDomain::Box { lower, upper } => {
                let mut s: f64 = 1.0;
                for k in 0..2 {
                    if b[k] >= upper[k] && dx[k] != 0.0 {
                        s = s.min((upper[k] - a[k]) / dx[k]);
                    }
                    if b[k] <= lower[k] && dx[k] != 0.0 {
                        s = s.min((lower[k] - a[k]) / dx[k]);
                    }
                }
                s.clamp(0.0, 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitHistogram {
    /// Bin edges in angle around the domain center, from −π to π.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub exit_points: Vec<[f64; 2]>,
    pub exit_times: Vec<f64>,
    pub censored: usize,
    pub aborted: usize,
}

impl ExitHistogram {
    pub fn modal_bin(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["theta_lo", "theta_hi", "count"]);
        for i in 0..self.counts.len() {
            t.push_raw(vec![fmt_f64(self.edges[i]), fmt_f64(self.edges[i + 1]), self.counts[i].to_string()]);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ExitOutcome {
    Exit([f64; 2], f64),
    Censored,
    Aborted,
}

/// First-exit locations from a planar domain under a general drift; the
/// crossing point is interpolated linearly between the last two states.
pub fn exit_location_histogram(
    f: &dyn Drift,
    domain: &ExitDomain,
    x0: [f64; 2],
    eps: f64,
    dt: f64,
    max_time: f64,
    seed: u64,
    replicas: usize,
    bins: usize,
) -> Result<ExitHistogram> {
    if f.dim() != 2 {
        return Err(Error::invalid("exit-location histograms need a planar drift"));
    }
    if !(eps > 0.0 && dt > 0.0 && max_time > 0.0) || bins == 0 || replicas == 0 {
        return Err(Error::invalid("need eps, dt, max_time > 0 and positive bin and replica counts"));
    }
    if !domain.contains(&x0) {
        return Err(Error::invalid("start point must lie inside the domain"));
    }
    let steps = (max_time / dt).ceil() as u64;
    let noise = (2.0 * eps * dt).sqrt();
    let outcomes: Vec<ExitOutcome> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r);
            let mut x = x0.to_vec();
            let mut prev = x.clone();
            let mut buf = vec![0.0; 2];
            for n in 0..steps {
                prev.copy_from_slice(&x);
                if !em_step(f, &mut x, &mut buf, dt, noise, &mut rng) {
                    return ExitOutcome::Aborted;
                }
                if !domain.contains(&x) {
                    let s = domain.crossing(&prev, &x);
                    let pt = [prev[0] + s * (x[0] - prev[0]), prev[1] + s * (x[1] - prev[1])];
                    return ExitOutcome::Exit(pt, (n as f64 + s) * dt);
                }
            }
            ExitOutcome::Censored
        })
        .collect();
    let c = domain.center();
    let edges: Vec<f64> = (0..=bins).map(|i| -PI + 2.0 * PI * i as f64 / bins as f64).collect();
    let mut hist = ExitHistogram {
        edges,
        counts: vec![0; bins],
        exit_points: Vec::new(),
        exit_times: Vec::new(),
        censored: 0,
        aborted: 0,
    };
    for o in outcomes {
        match o {
            ExitOutcome::Exit(pt, t) => {
                let ang = (pt[1] - c[1]).atan2(pt[0] - c[0]);
                let k = (((ang + PI) / (2.0 * PI)) * bins as f64).floor() as usize;
                hist.counts[k.min(bins - 1)] += 1;
                hist.exit_points.push(pt);
                hist.exit_times.push(t);
            }
            ExitOutcome::Censored => hist.censored += 1,
            ExitOutcome::Aborted => hist.aborted += 1,
        }
    }
    if hist.exit_points.is_empty() {
        return Err(Error::AllCensored(replicas));
    }
    Ok(hist)
}
