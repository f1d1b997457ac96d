//! Allen–Cahn equation `∂ₜu = ∂ₓ²u + u − u³ + noise` on `[0, L]`, reduced to
//! a lattice of `N` sites with spacing `a = L/N`.
//!
//! The lattice energy is `V[u] = Σ a·[½((u_{i+1}−u_i)/a)² + U(u_i)]`,
//! `U(u) = u⁴/4 − u²/2`. The Langevin chain that approximates space-time
//! white noise is `du = −∇V/a dt + sqrt(2ε/a) dW`, i.e. the potential `V/a`
//! at noise `ε/a`; its linearization `∇²V/a` approximates
//! `Q[u] = −∂ₓ² + U″(u)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::potential::{Derivatives, Potential, PotentialParams, Scaled};
use crate::rate::psi_plus;
use crate::sde::{sample_hitting_times, SimConfig, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Neumann,
    Periodic,
}

impl std::str::FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neumann" => Ok(Boundary::Neumann),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(Error::invalid(format!("unknown boundary condition '{other}'"))),
        }
    }
}

/// Lattice Allen–Cahn energy as an `N`-dimensional potential.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPotential {
    pub length: f64,
    pub sites: usize,
    pub boundary: Boundary,
    pub spacing: f64,
}

/// Smallest lattice accepted.
pub const MIN_SITES: usize = 8;

pub fn discretize_allen_cahn(length: f64, sites: usize, boundary: Boundary) -> Result<ChainPotential> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::invalid("interval length must be positive"));
    }
    if sites < MIN_SITES {
        return Err(Error::invalid(format!("need at least {MIN_SITES} sites, got {sites}")));
    }
    Ok(ChainPotential { length, sites, boundary, spacing: length / sites as f64 })
}

fn local(u: f64) -> f64 {
    0.25 * u * u * u * u - 0.5 * u * u
}

impl ChainPotential {
    /// Bonds as `(i, j)` pairs.
    fn bonds(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.sites;
        let count = match self.boundary {
            Boundary::Neumann => n - 1,
            Boundary::Periodic => n,
        };
        (0..count).map(move |i| (i, (i + 1) % n))
    }

    /// Site positions (cell centers).
    pub fn positions(&self) -> Vec<f64> {
        (0..self.sites).map(|i| (i as f64 + 0.5) * self.spacing).collect()
    }

    pub fn constant(&self, v: f64) -> Vec<f64> {
        vec![v; self.sites]
    }

    /// Langevin-chain form: potential `V/a`, to be run at `ε/a`.
    pub fn dynamics(&self) -> Scaled<ChainPotential> {
        Scaled { inner: self.clone(), factor: 1.0 / self.spacing }
    }

    /// `L²` norm `sqrt(a·Σu_i²)`.
    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        (self.spacing * u.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

impl Potential for ChainPotential {
    fn dim(&self) -> usize {
        self.sites
    }

    fn value(&self, u: &[f64]) -> f64 {
        let a = self.spacing;
        let pot: f64 = u.iter().map(|&v| local(v)).sum();
        let grad: f64 = self.bonds().map(|(i, j)| (u[j] - u[i]).powi(2)).sum();
        a * pot + 0.5 * grad / a
    }

    fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        let a = self.spacing;
        for (o, &v) in out.iter_mut().zip(u) {
            *o = a * (v * v * v - v);
        }
        for (i, j) in self.bonds() {
            let d = (u[i] - u[j]) / a;
            out[i] += d;
            out[j] -= d;
        }
    }

    fn hessian(&self, u: &[f64]) -> DMatrix<f64> {
        let a = self.spacing;
        let mut h = DMatrix::zeros(self.sites, self.sites);
        for (i, &v) in u.iter().enumerate() {
            h[(i, i)] = a * (3.0 * v * v - 1.0);
        }
        for (i, j) in self.bonds() {
            h[(i, i)] += 1.0 / a;
            h[(j, j)] += 1.0 / a;
            h[(i, j)] -= 1.0 / a;
            h[(j, i)] -= 1.0 / a;
        }
        h
    }

    fn derivatives(&self) -> Derivatives {
        Derivatives::Analytic
    }

    fn name(&self) -> &str {
        "allen_cahn_chain"
    }

    fn params(&self) -> Option<PotentialParams> {
        Some(
            PotentialParams::new("allen_cahn_chain")
                .with("L", self.length)
                .with("N", self.sites as f64)
                .with("periodic", if self.boundary == Boundary::Periodic { 1.0 } else { 0.0 }),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Minimum,
    Saddle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryState {
    pub label: String,
    pub u: Vec<f64>,
    pub energy: f64,
    /// Number of negative Hessian eigenvalues.
    pub index: usize,
    pub kind: StateKind,
}

impl StationaryState {
    /// CSV `(site, u)`.
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["site", "u"]);
        for (i, v) in self.u.iter().enumerate() {
            t.push_numbers(&[i as f64, *v]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryStates {
    pub plus: StationaryState,
    pub minus: StationaryState,
    /// `u₀ ≡ 0`, then (for Neumann and `L > π`) the instanton pair.
    pub saddles: Vec<StationaryState>,
}

impl StationaryStates {
    /// The index-1 saddle of lowest energy.
    pub fn transition_saddle(&self) -> Option<&StationaryState> {
        self.saddles
            .iter()
            .filter(|s| s.index == 1)
            .min_by(|a, b| a.energy.total_cmp(&b.energy))
    }

    pub fn barrier(&self) -> Option<f64> {
        self.transition_saddle().map(|s| s.energy - self.minus.energy)
    }
}

fn sorted_eigenvalues(h: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn classify_state(cp: &ChainPotential, label: &str, u: Vec<f64>) -> StationaryState {
    let ev = sorted_eigenvalues(cp.hessian(&u));
    let scale = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let index = ev.iter().filter(|&&v| v < -1e-10 * scale).count();
    StationaryState {
        label: label.to_string(),
        energy: cp.value(&u),
        kind: if index == 0 { StateKind::Minimum } else { StateKind::Saddle },
        u,
        index,
    }
}

/// Newton iteration on `∇V = 0`.
fn newton(cp: &ChainPotential, mut u: Vec<f64>) -> Result<Vec<f64>> {
    let scale = cp.spacing;
    for _ in 0..100 {
        let g = cp.gradient(&u);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn <= 1e-12 * scale {
            return Ok(u);
        }
        let step = cp
            .hessian(&u)
            .lu()
            .solve(&DVector::from_vec(g))
            .ok_or_else(|| Error::NonConvergence("singular Hessian in Newton step".into()))?;
        for (ui, si) in u.iter_mut().zip(step.iter()) {
            *ui -= si;
        }
    }
    Err(Error::NonConvergence("Newton did not reach a stationary state in 100 steps".into()))
}

/// Constant states `u± ≡ ±1`, the constant saddle `u₀ ≡ 0` and, past the
/// pitchfork at `L = π` (Neumann), the instanton pair grown from
/// `±A·cos(πx/L)` with `A² = 4(1 − (π/L)²)/3`.
pub fn stationary_states(cp: &ChainPotential) -> Result<StationaryStates> {
    if cp.boundary == Boundary::Periodic && cp.length >= 2.0 * PI {
        return Err(Error::invalid("periodic chains are supported only for L < 2π"));
    }
    let plus = classify_state(cp, "u_plus", cp.constant(1.0));
    let minus = classify_state(cp, "u_minus", cp.constant(-1.0));
    let mut saddles = vec![classify_state(cp, "u_zero", cp.constant(0.0))];
    // the discrete pitchfork sits where the lattice k=1 eigenvalue crosses 0
    let k1 = (2.0 - 2.0 * (PI / cp.sites as f64).cos()) / (cp.spacing * cp.spacing);
    if cp.boundary == Boundary::Neumann && k1 < 1.0 {
        let amp = (4.0 * (1.0 - k1) / 3.0).sqrt();
        for (sign, label) in [(1.0, "instanton_plus"), (-1.0, "instanton_minus")] {
            let seed: Vec<f64> = cp.positions().iter().map(|x| sign * amp * (PI * x / cp.length).cos()).collect();
            let u = newton(cp, seed)?;
            if u.iter().all(|v| v.abs() < 1e-8) {
                return Err(Error::NonConvergence("instanton seed collapsed onto u ≡ 0".into()));
            }
            saddles.push(classify_state(cp, label, u));
        }
    }
    Ok(StationaryStates { plus, minus, saddles })
}

/// Lowest `m` eigenvalues of `∇²V[u]/a`, the lattice version of `Q[u]`.
pub fn linearization_spectrum(cp: &ChainPotential, u: &[f64], m: usize) -> Result<Vec<f64>> {
    if u.len() != cp.sites {
        return Err(Error::invalid("state length does not match the lattice"));
    }
    let g = cp.gradient(u);
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if gn > 1e-8 * cp.spacing.sqrt() {
        return Err(Error::invalid(format!("state is not stationary (|∇V| = {gn:e})")));
    }
    let ev = sorted_eigenvalues(cp.hessian(u) / cp.spacing);
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigensolver returned non-finite values".into()));
    }
    Ok(ev.into_iter().take(m).collect())
}

/// `C = 2^{3/4}π·sqrt(sin L / sinh(√2 L))`, Neumann, `0 < L < π`.
pub fn spde_prefactor(length: f64, boundary: Boundary) -> Result<f64> {
    if boundary != Boundary::Neumann {
        return Err(Error::invalid("closed-form prefactor is available for Neumann boundaries only"));
    }
    if !(length > 0.0) {
        return Err(Error::invalid("interval length must be positive"));
    }
    if length >= PI {
        return Err(Error::invalid("L >= π: use the bifurcation prefactor"));
    }
    Ok(2f64.powf(0.75) * PI * (length.sin() / (2f64.sqrt() * length).sinh()).sqrt())
}

/// Same prefactor from the spectra, `2π/|λ₀|·sqrt(Π_k |λ_k|/ν_k)` with
/// `λ_k = −1+(πk/L)²`, `ν_k = 2+(πk/L)²`, truncated after `k = terms`.
pub fn spde_prefactor_product(length: f64, terms: usize) -> f64 {
    let mut log_ratio = (1.0f64 / 2.0).ln();
    for k in 1..=terms {
        let q = (PI * k as f64 / length).powi(2);
        log_ratio += ((q - 1.0) / (q + 2.0)).abs().ln();
    }
    2.0 * PI * (0.5 * log_ratio).exp()
}

/// `sin L / λ₁` with `λ₁ = (π/L)² − 1`, written as
/// `sinc(π−L)·L²/(π+L)` so that it stays finite at `L = π`.
fn sin_over_lambda1(length: f64) -> f64 {
    let d = PI - length;
    let sinc = if d.abs() < 1e-4 { 1.0 - d * d / 6.0 } else { d.sin() / d };
    sinc * length * length / (PI + length)
}

/// Prefactor through the pitchfork at `L = π`:
/// `2^{3/4}π/Ψ₊(λ₁/s)·sqrt((λ₁+s)/λ₁)·sqrt(sin L/sinh(√2L))`,
/// `s = sqrt(3ε/(4L))`.
pub fn spde_prefactor_bifurcation(length: f64, eps: f64) -> Result<f64> {
    if !(length > 0.0 && length <= PI) {
        return Err(Error::invalid("bifurcation prefactor needs 0 < L <= π"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("ε must be positive"));
    }
    let lambda1 = (PI / length).powi(2) - 1.0;
    let s = (3.0 * eps / (4.0 * length)).sqrt();
    let psi = psi_plus(lambda1 / s)?;
    // (λ₁+s)/λ₁·sin L  =  (λ₁+s)·(sin L/λ₁)
    let inner = (lambda1 + s) * sin_over_lambda1(length) / (2f64.sqrt() * length).sinh();
    Ok(2f64.powf(0.75) * PI / psi * inner.sqrt())
}

/// Monte Carlo settings for the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdeMcSettings {
    pub dt: f64,
    pub max_time: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Target: `L²` ball of this radius around `u₊`.
    pub target_l2_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdeMcReport {
    pub length: f64,
    pub sites: usize,
    pub eps: f64,
    pub barrier: f64,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    pub censored: usize,
    /// Eyring–Kramers time of the simulated chain.
    pub chain_prediction: f64,
    /// Continuum prefactor times `e^{barrier/ε}`.
    pub continuum_prediction: f64,
    /// `mc_mean / chain_prediction`.
    pub ratio: f64,
}

/// Eyring–Kramers time of the lattice chain from `u₋` over `u₀ ≡ 0`:
/// `2π/|μ₀|·sqrt(|det Q(u₀)|/det Q(u₋))·e^{ΔV/ε}`, from the lattice spectra.
pub fn chain_prediction(cp: &ChainPotential, eps: f64) -> Result<(f64, f64)> {
    let states = stationary_states(cp)?;
    let saddle = states
        .transition_saddle()
        .ok_or_else(|| Error::Degenerate("no index-1 saddle on this lattice".into()))?;
    let q0 = linearization_spectrum(cp, &saddle.u, cp.sites)?;
    let qm = linearization_spectrum(cp, &states.minus.u, cp.sites)?;
    let log_ratio: f64 = q0.iter().map(|v| v.abs().ln()).sum::<f64>() - qm.iter().map(|v| v.ln()).sum::<f64>();
    let barrier = saddle.energy - states.minus.energy;
    let pref = 2.0 * PI / q0[0].abs() * (0.5 * log_ratio).exp();
    Ok((pref * (barrier / eps).exp(), barrier))
}

/// Simulate the Langevin chain from `u₋` until it enters the `L²` ball
/// around `u₊`, and compare with the Kramers predictions.
pub fn spde_mc_validation(length: f64, sites: usize, eps: f64, mc: &SpdeMcSettings) -> Result<SpdeMcReport> {
    let cp = discretize_allen_cahn(length, sites, Boundary::Neumann)?;
    let (chain, barrier) = chain_prediction(&cp, eps)?;
    let continuum = if length < PI { spde_prefactor(length, Boundary::Neumann)? } else {
        spde_prefactor_bifurcation(length.min(PI), eps)?
    } * (barrier / eps).exp();
    let a = cp.spacing;
    let target = Target { center: cp.constant(1.0), radius: mc.target_l2_radius / a.sqrt() };
    let cfg = SimConfig::new(eps / a, mc.dt, mc.max_time, target, mc.seed, mc.replicas);
    let stats = sample_hitting_times(&cp.dynamics(), &cp.constant(-1.0), &cfg)?;
    Ok(SpdeMcReport {
        length,
        sites,
        eps,
        barrier,
        mc_mean: stats.mean,
        mc_std_error: stats.std_error,
        censored: stats.censored,
        chain_prediction: chain,
        continuum_prediction: continuum,
        ratio: stats.mean / chain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neumann(l: f64, n: usize) -> ChainPotential {
        discretize_allen_cahn(l, n, Boundary::Neumann).unwrap()
    }

    #[test]
    fn constant_state_energies() {
        for (l, n) in [(2.0, 16), (3.7, 33), (1.0, 8)] {
            for bc in [Boundary::Neumann, Boundary::Periodic] {
                let cp = discretize_allen_cahn(l, n, bc).unwrap();
                assert!((cp.value(&cp.constant(1.0)) + l / 4.0).abs() < 1e-14);
                assert_eq!(cp.value(&cp.constant(0.0)), 0.0);
                assert!(cp.gradient(&cp.constant(1.0)).iter().all(|g| *g == 0.0));
            }
        }
        assert!(discretize_allen_cahn(2.0, 7, Boundary::Neumann).is_err());
        assert!("dirichlet".parse::<Boundary>().is_err());
    }

    #[test]
    fn periodic_energy_is_shift_invariant() {
        let cp = discretize_allen_cahn(3.0, 12, Boundary::Periodic).unwrap();
        let u: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin() + 0.1 * i as f64).collect();
        let mut v = u.clone();
        v.rotate_left(5);
        assert!((cp.value(&u) - cp.value(&v)).abs() < 1e-12);
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let cp = neumann(2.5, 10);
        let u: Vec<f64> = (0..10).map(|i| 0.3 * (i as f64).cos()).collect();
        let g = cp.gradient(&u);
        let h = cp.hessian(&u);
        for i in 0..10 {
            let mut up = u.clone();
            let mut um = u.clone();
            up[i] += 1e-6;
            um[i] -= 1e-6;
            assert!((g[i] - (cp.value(&up) - cp.value(&um)) / 2e-6).abs() < 1e-7);
            let (gp, gm) = (cp.gradient(&up), cp.gradient(&um));
            for j in 0..10 {
                assert!((h[(j, i)] - (gp[j] - gm[j]) / 2e-6).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn saddle_structure_across_pitchfork() {
        let s = stationary_states(&neumann(2.0, 64)).unwrap();
        assert_eq!(s.saddles.len(), 1);
        assert_eq!(s.saddles[0].index, 1);
        assert_eq!((s.plus.index, s.minus.index), (0, 0));
        assert!((s.barrier().unwrap() - 0.5).abs() < 1e-14);

        let s = stationary_states(&neumann(4.0, 64)).unwrap();
        assert_eq!(s.saddles[0].index, 2);
        assert_eq!(s.saddles.len(), 3);
        for inst in &s.saddles[1..] {
            assert_eq!(inst.index, 1);
            assert!(inst.energy < 0.0);
        }
        // the instanton undercuts u₀ ≡ 0 and its barrier climbs from π/4
        // toward the single-kink energy 2√2/3
        let kink = 2.0 * 2f64.sqrt() / 3.0;
        let mut prev = PI / 4.0;
        for l in [3.5, 4.0, 5.0] {
            let b = stationary_states(&neumann(l, 64)).unwrap().barrier().unwrap();
            assert!(b < l / 4.0 && b < kink, "{l} {b}");
            assert!(b >= prev, "{l} {b}");
            prev = b;
        }
    }

    #[test]
    fn linearization_converges_second_order() {
        let l = 2.0;
        let exact0: Vec<f64> = (0..4).map(|k| -1.0 + (PI * k as f64 / l).powi(2)).collect();
        let exactm: Vec<f64> = (0..4).map(|k| 2.0 + (PI * k as f64 / l).powi(2)).collect();
        let err = |n: usize| {
            let cp = neumann(l, n);
            let e0 = linearization_spectrum(&cp, &cp.constant(0.0), 4).unwrap();
            let em = linearization_spectrum(&cp, &cp.constant(-1.0), 4).unwrap();
            e0.iter().zip(&exact0).chain(em.iter().zip(&exactm)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (e128, e256) = (err(128), err(256));
        assert!(e256 < 3e-3, "{e256}");
        assert!((e128 / e256 - 4.0).abs() < 0.1, "{e128} {e256}");
        let cp = neumann(l, 16);
        assert!(linearization_spectrum(&cp, &cp.constant(0.5), 3).is_err());
    }

    #[test]
    fn periodic_multiplicities() {
        let cp = discretize_allen_cahn(3.0, 32, Boundary::Periodic).unwrap();
        let ev = linearization_spectrum(&cp, &cp.constant(-1.0), 5).unwrap();
        assert!((ev[0] - 2.0).abs() < 1e-12);
        assert!((ev[1] - ev[2]).abs() < 1e-10 && (ev[3] - ev[4]).abs() < 1e-10);
        assert!(ev[2] < ev[3] - 1e-3);
    }

    #[test]
    fn closed_form_prefactor() {
        let c = spde_prefactor(1.0, Boundary::Neumann).unwrap();
        assert!((c - 3.484).abs() < 1e-3, "{c}");
        let prod = spde_prefactor_product(1.0, 10_000);
        assert!((prod - c).abs() < 1e-3, "{prod} {c}");
        for k in [100, 1000] {
            let d = (spde_prefactor_product(1.0, k) - spde_prefactor_product(1.0, 2 * k)).abs();
            assert!(d <= c / k as f64);
        }
        assert!(spde_prefactor(PI - 1e-6, Boundary::Neumann).unwrap() < 1e-2);
        assert!(spde_prefactor(PI, Boundary::Neumann).is_err());
        assert!(spde_prefactor(1.0, Boundary::Periodic).is_err());
    }

    #[test]
    fn bifurcation_prefactor_limits() {
        let reg = spde_prefactor(1.0, Boundary::Neumann).unwrap();
        let bif = spde_prefactor_bifurcation(1.0, 1e-6).unwrap();
        assert!((bif / reg - 1.0).abs() < 1e-3);
        let r = spde_prefactor_bifurcation(PI, 1e-4).unwrap() / spde_prefactor_bifurcation(PI, 16e-4).unwrap();
        assert!((r - 0.5).abs() < 0.01, "{r}");
        let eps = 1e-3;
        let mut prev = spde_prefactor_bifurcation(2.5, eps).unwrap();
        for i in 1..=2000 {
            let l = 2.5 + (PI - 2.5) * i as f64 / 2000.0;
            let c = spde_prefactor_bifurcation(l, eps).unwrap();
            assert!(c.is_finite() && c > 0.0);
            assert!((c / prev - 1.0).abs() < 0.01, "{l}");
            prev = c;
        }
    }

    #[test]
    fn lattice_prediction_is_stable_in_n() {
        let (p16, b16) = chain_prediction(&neumann(2.0, 16), 0.35).unwrap();
        let (p32, _) = chain_prediction(&neumann(2.0, 32), 0.35).unwrap();
        assert!((b16 - 0.5).abs() < 1e-14);
        assert!((p16 / p32 - 1.0).abs() < 0.1, "{p16} {p32}");
        let cont = spde_prefactor(2.0, Boundary::Neumann).unwrap() * (0.5f64 / 0.35).exp();
        assert!((p32 / cont - 1.0).abs() < 0.1, "{p32} {cont}");
    }
}
