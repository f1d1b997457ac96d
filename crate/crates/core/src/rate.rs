//! Arrhenius exponents and Eyring–Kramers prefactors.
//!
//! Quadratic saddles use the classical Hessian-determinant prefactor. For a
//! saddle undergoing a pitchfork bifurcation, with local normal form
//! `½λ₁y₁² + ½λ₂y₂² + C₄y₂⁴ + ½Σλⱼyⱼ²`, the prefactor is corrected by the
//! crossover functions Ψ₊ (λ₂ ≥ 0) and Ψ₋ (λ₂ < 0), both bounded above and
//! below, with Ψ₊(∞) = 1, Ψ₋(∞) = 2 and Ψ±(0) = Γ(1/4)/(2^{5/4}√π).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{TransitionSpec, DEGENERACY_RATIO};
use crate::quadrature::{decay_edge, integrate_breaks, QuadOptions};
use crate::special::{gamma_quarter, i_quarter_sum_scaled, k_quarter_scaled};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Quadratic1d,
    QuadraticNd,
    PitchforkPre,
    PitchforkPost,
    DegenerateGeneral,
}

/// Predicted mean transition time `prefactor · exp(exponent / epsilon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KramersPrediction {
    pub exponent: f64,
    pub prefactor: f64,
    pub regime: Regime,
    pub epsilon: f64,
    pub error_order: String,
}

impl KramersPrediction {
    pub fn mean_time(&self) -> f64 {
        self.prefactor * (self.exponent / self.epsilon).exp()
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("epsilon must be positive, got {eps}")));
    }
    Ok(())
}

/// Eyring–Kramers law for a quadratic minimum and a quadratic index-1 saddle:
/// `C = 2π/|λ₁(z)| · sqrt(|det ∇²V(z)| / det ∇²V(x))`.
pub fn eyring_kramers(spec: &TransitionSpec, eps: f64) -> Result<KramersPrediction> {
    check_eps(eps)?;
    let start = &spec.start;
    let saddle = &spec.saddle;
    let degenerate = |eig: &[f64]| {
        let scale = eig.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        eig.iter().any(|l| l.abs() < DEGENERACY_RATIO * scale)
    };
    if start.index != 0 || degenerate(&start.eigenvalues) || start.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::Degenerate(
            "start minimum has a singular Hessian; the quadratic prefactor would vanish or diverge, use the degenerate branch"
                .into(),
        ));
    }
    if saddle.index != 1 || degenerate(&saddle.eigenvalues) {
        return Err(Error::Degenerate(
            "relevant saddle is not a nondegenerate index-1 point; use pitchfork_prefactor or degenerate_capacity".into(),
        ));
    }
    let d = start.eigenvalues.len();
    let l1 = saddle.eigenvalues[0].abs();
    let det_ratio = saddle.abs_det() / start.abs_det();
    let prefactor = 2.0 * PI / l1 * det_ratio.sqrt();
    let (regime, error_order) = if d == 1 {
        (Regime::Quadratic1d, "O(eps^(1/2))")
    } else {
        (Regime::QuadraticNd, "O(eps^(1/2)|log eps|^(3/2))")
    };
    Ok(KramersPrediction {
        exponent: spec.barrier,
        prefactor,
        regime,
        epsilon: eps,
        error_order: error_order.into(),
    })
}

/// `Ψ₊(0) = Ψ₋(0) = Γ(1/4)/(2^{5/4}√π)`.
pub fn psi_zero() -> f64 {
    gamma_quarter() / (2f64.powf(1.25) * PI.sqrt())
}

/// `Ψ₊(α) = sqrt(α(1+α)/8π) · e^{α²/16} · K_{1/4}(α²/16)`.
pub fn psi_plus(alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("psi_plus needs finite alpha >= 0, got {alpha}")));
    }
    let z = alpha * alpha / 16.0;
    if z < 1e-300 {
        return Ok(psi_zero());
    }
    Ok((alpha * (1.0 + alpha) / (8.0 * PI)).sqrt() * k_quarter_scaled(z)?)
}

/// `Ψ₋(α) = sqrt(πα(1+α)/32) · e^{−α²/64} · [I_{−1/4}(α²/64) + I_{1/4}(α²/64)]`.
pub fn psi_minus(alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("psi_minus needs finite alpha >= 0, got {alpha}")));
    }
    let z = alpha * alpha / 64.0;
    if z < 1e-300 {
        return Ok(psi_zero());
    }
    Ok((PI * alpha * (1.0 + alpha) / 32.0).sqrt() * i_quarter_sum_scaled(z)?)
}

/// Local data of a pitchfork saddle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchforkSaddle {
    /// Unstable eigenvalue at the symmetric saddle, `< 0`.
    pub lambda1: f64,
    /// Bifurcating eigenvalue.
    pub lambda2: f64,
    /// `λ₃ … λ_d`, all positive.
    pub transverse: Vec<f64>,
    pub c4: f64,
    /// `det ∇²V(x⋆)` at the start minimum.
    pub det_min: f64,
    /// Eigenvalues `μ₁ … μ_d` at the two off-center saddles when `λ₂ < 0`.
    /// Defaults to the normal-form values `(λ₁, 2|λ₂|, λ₃, …)`.
    #[serde(default)]
    pub post_saddle: Option<Vec<f64>>,
}

/// Pitchfork-corrected Kramers prefactor.
///
/// For `λ₂ ≥ 0`: `C = 2π sqrt((λ₂ + √(2εC₄)) λ₃⋯λ_d / (|λ₁| det∇²V(x⋆))) / Ψ₊(λ₂/√(2εC₄))`.
/// For `λ₂ < 0` the same with `μᵢ` in place of `λᵢ` and Ψ₋ in place of Ψ₊.
/// The exponent is left at zero; combine with the barrier of the landscape.
pub fn pitchfork_prefactor(s: &PitchforkSaddle, eps: f64) -> Result<KramersPrediction> {
    check_eps(eps)?;
    if !(s.c4 > 0.0) {
        return Err(Error::invalid("C4 must be positive"));
    }
    if !(s.lambda1 < 0.0) {
        return Err(Error::invalid("inconsistent eigenvalue signs: lambda1 must be negative"));
    }
    if s.transverse.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::invalid("inconsistent eigenvalue signs: transverse eigenvalues must be positive"));
    }
    if !(s.det_min > 0.0) {
        return Err(Error::invalid("det of the Hessian at the minimum must be positive"));
    }
    let scale = (2.0 * eps * s.c4).sqrt();
    let error_order = "O(eps^beta |log eps|^(1+beta))".to_string();
    if s.lambda2 >= 0.0 {
        let prod: f64 = s.transverse.iter().product();
        let c = 2.0 * PI * ((s.lambda2 + scale) * prod / (s.lambda1.abs() * s.det_min)).sqrt()
            / psi_plus(s.lambda2 / scale)?;
        Ok(KramersPrediction {
            exponent: 0.0,
            prefactor: c,
            regime: Regime::PitchforkPre,
            epsilon: eps,
            error_order,
        })
    } else {
        let mu = match &s.post_saddle {
            Some(mu) => mu.clone(),
            None => {
                let mut mu = vec![s.lambda1, 2.0 * s.lambda2.abs()];
                mu.extend(&s.transverse);
                mu
            }
        };
        if mu.len() != s.transverse.len() + 2 {
            return Err(Error::invalid("post-bifurcation saddle needs d eigenvalues"));
        }
        if !(mu[0] < 0.0) || mu[1..].iter().any(|&m| !(m > 0.0)) {
            return Err(Error::invalid(
                "inconsistent eigenvalue signs: post-bifurcation saddles need mu1 < 0 < mu2, …, mu_d",
            ));
        }
        let prod: f64 = mu[2..].iter().product();
        let c = 2.0 * PI * ((mu[1] + scale) * prod / (mu[0].abs() * s.det_min)).sqrt() / psi_minus(mu[1] / scale)?;
        Ok(KramersPrediction {
            exponent: 0.0,
            prefactor: c,
            regime: Regime::PitchforkPost,
            epsilon: eps,
            error_order,
        })
    }
}

/// Capacity across a non-quadratic saddle in the separated normal form
/// `V = −u₁(y₁) + u₂(y₂…y_k) + ½Σ_{j>k} λⱼyⱼ²`:
/// `cap = ε · ∫e^{−u₂/ε} / ∫e^{−u₁/ε} · ∏_{j>k} sqrt(2πε/λⱼ)`,
/// where `u₁` is the growing profile along the unstable direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub capacity: f64,
    /// `∫ e^{−u₂/ε}` over `ℝ^{k−1}`.
    pub stable_integral: f64,
    /// `∫ e^{−u₁/ε}` over `ℝ`.
    pub unstable_integral: f64,
    /// `∏ sqrt(2πε/λⱼ)`, 1 when `k = d`.
    pub gaussian_factor: f64,
}

/// Search window used to locate the bulk of each integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for SearchWindow {
    fn default() -> Self {
        SearchWindow { lo: -10.0, hi: 10.0 }
    }
}

const TRUNCATION: f64 = 1e-16;

fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-12,
        max_intervals: 4000,
    }
}

/// `∫ exp(−(f(y) − f_min)/ε) dy` over ℝ, with the domain truncated where
/// the integrand drops below 1e-16 of its maximum. Returns (integral, f_min).
fn shifted_exp_integral_1d(f: &dyn Fn(f64) -> f64, eps: f64, window: SearchWindow) -> Result<(f64, f64)> {
    let n = 4000;
    let (mut ymin, mut fmin) = (0.0, f64::INFINITY);
    for i in 0..=n {
        let y = window.lo + (window.hi - window.lo) * i as f64 / n as f64;
        let v = f(y);
        if v < fmin {
            fmin = v;
            ymin = y;
        }
    }
    if !fmin.is_finite() {
        return Err(Error::Quadrature("profile not finite on the search window".into()));
    }
    let mut g = |y: f64| (-(f(y) - fmin) / eps).exp();
    let (right, _) = decay_edge(&mut g, ymin, 1.0, TRUNCATION)
        .map_err(|_| Error::Quadrature("non-integrable profile: integrand does not decay to the right".into()))?;
    let (left, _) = decay_edge(&mut g, ymin, -1.0, TRUNCATION)
        .map_err(|_| Error::Quadrature("non-integrable profile: integrand does not decay to the left".into()))?;
    let r = integrate_breaks(g, &[left, ymin, right], quad_opts())?;
    Ok((r.value, fmin))
}

/// Evaluate the capacity formula by adaptive quadrature. `u2` takes the
/// `k − 1` stable coordinates; `stable_dim = k − 1 ∈ {1, 2, 3}`.
pub fn degenerate_capacity(
    u1: &dyn Fn(f64) -> f64,
    u2: &dyn Fn(&[f64]) -> f64,
    stable_dim: usize,
    transverse: &[f64],
    eps: f64,
    window: SearchWindow,
) -> Result<CapacityEstimate> {
    check_eps(eps)?;
    if !(1..=3).contains(&stable_dim) {
        return Err(Error::invalid("stable block dimension must be 1, 2 or 3"));
    }
    if transverse.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::invalid("transverse eigenvalues must be positive"));
    }
    let (i1, m1) = shifted_exp_integral_1d(u1, eps, window)?;
    let (i2, m2) = nested_exp_integral(u2, stable_dim, eps, window)?;
    let gaussian: f64 = transverse.iter().map(|l| (2.0 * PI * eps / l).sqrt()).product();
    let stable = i2 * (-m2 / eps).exp();
    let unstable = i1 * (-m1 / eps).exp();
    let capacity = eps * (i2 / i1) * (-(m2 - m1) / eps).exp() * gaussian;
    if !capacity.is_finite() || !(capacity > 0.0) {
        return Err(Error::Quadrature("capacity overflowed; profiles too deep for this epsilon".into()));
    }
    Ok(CapacityEstimate {
        capacity,
        stable_integral: stable,
        unstable_integral: unstable,
        gaussian_factor: gaussian,
    })
}

fn nested_exp_integral(u: &dyn Fn(&[f64]) -> f64, dim: usize, eps: f64, window: SearchWindow) -> Result<(f64, f64)> {
    if dim == 1 {
        return shifted_exp_integral_1d(&|y| u(&[y]), eps, window);
    }
    // global minimum on a coarse grid, then per-axis truncation through it
    let n: usize = match dim {
        2 => 400,
        _ => 60,
    };
    let mut best = (vec![0.0; dim], f64::INFINITY);
    let total = n.pow(dim as u32);
    let mut y = vec![0.0; dim];
    for mut idx in 0..total {
        for yk in y.iter_mut() {
            *yk = window.lo + (window.hi - window.lo) * (idx % n) as f64 / (n - 1) as f64;
            idx /= n;
        }
        let v = u(&y);
        if v < best.1 {
            best = (y.clone(), v);
        }
    }
    let (center, umin) = best;
    let mut bounds = Vec::with_capacity(dim);
    for k in 0..dim {
        let mut g = |t: f64| {
            let mut z = center.clone();
            z[k] = t;
            (-(u(&z) - umin) / eps).exp()
        };
        let (hi, _) = decay_edge(&mut g, center[k], 1.0, TRUNCATION)
            .map_err(|_| Error::Quadrature("non-integrable stable profile".into()))?;
        let (lo, _) = decay_edge(&mut g, center[k], -1.0, TRUNCATION)
            .map_err(|_| Error::Quadrature("non-integrable stable profile".into()))?;
        // pad: off-axis level sets may reach further than the axis cut
        let pad = 0.5 * (hi - lo);
        bounds.push((lo - pad, center[k], hi + pad));
    }
    let opts = quad_opts();
    let value = integrate_recursive(&|z: &[f64]| (-(u(z) - umin) / eps).exp(), &bounds, &mut Vec::new(), opts)?;
    Ok((value, umin))
}

fn integrate_recursive(
    g: &dyn Fn(&[f64]) -> f64,
    bounds: &[(f64, f64, f64)],
    prefix: &mut Vec<f64>,
    opts: QuadOptions,
) -> Result<f64> {
    let k = prefix.len();
    let (lo, mid, hi) = bounds[k];
    let mut err = None;
    let r = integrate_breaks(
        |t| {
            prefix.push(t);
            let v = if k + 1 == bounds.len() {
                g(prefix)
            } else {
                match integrate_recursive(g, bounds, &mut prefix.clone(), opts) {
                    Ok(v) => v,
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                }
            };
            prefix.pop();
            v
        },
        &[lo, mid, hi],
        opts,
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(r.value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{classify, FloodingConfig};
    use crate::potential::{make_builtin, PotentialParams};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn quartic_and_doublewell_prefactors() {
        for (name, a, b) in [
            ("quartic1d", vec![-1.0], vec![1.0]),
            ("doublewell2d", vec![-1.0, 0.0], vec![1.0, 0.0]),
        ] {
            let p = make_builtin(&PotentialParams::new(name)).unwrap();
            let spec = crate::landscape::transition_spec(p.as_ref(), &a, &b, 0.1, &FloodingConfig::default()).unwrap();
            let k = eyring_kramers(&spec, 0.1).unwrap();
            assert!((k.exponent - 0.25).abs() < 1e-12);
            assert!(rel(k.prefactor, PI * 2f64.sqrt()) < 1e-12, "{name}: {}", k.prefactor);
        }
    }

    #[test]
    fn zero_barrier_gives_prefactor() {
        let p = make_builtin(&PotentialParams::new("quartic1d")).unwrap();
        let start = classify(p.as_ref(), &[-1.0]);
        let target = classify(p.as_ref(), &[1.0]);
        let mut saddle = classify(p.as_ref(), &[0.0]);
        saddle.value = start.value;
        let spec = TransitionSpec::new(start, target, 0.1, saddle).unwrap();
        let k = eyring_kramers(&spec, 0.3).unwrap();
        assert_eq!(k.mean_time(), k.prefactor);
    }

    #[test]
    fn degenerate_saddle_rejected() {
        let params = PotentialParams::new("pitchfork_normal_form")
            .with("lambda1", -1.0)
            .with("lambda2", 0.0)
            .with("c4", 1.0);
        let p = make_builtin(&params).unwrap();
        let saddle = classify(p.as_ref(), &[0.0, 0.0]);
        let q = make_builtin(&PotentialParams::new("doublewell2d")).unwrap();
        let start = classify(q.as_ref(), &[-1.0, 0.0]);
        let target = classify(q.as_ref(), &[1.0, 0.0]);
        let mut saddle = saddle;
        saddle.value = 0.0;
        let spec = TransitionSpec::new(start, target, 0.1, saddle).unwrap();
        assert!(matches!(eyring_kramers(&spec, 0.1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn psi_limits() {
        assert!((psi_plus(0.0).unwrap() - 0.860_039_987_324_519_6).abs() < 1e-12);
        assert!((psi_plus(100.0).unwrap() - 1.0).abs() < 1e-2);
        assert!((psi_minus(100.0).unwrap() - 2.0).abs() < 2e-2);
        assert!(psi_plus(-1.0).is_err());
        assert!(psi_minus(f64::NAN).is_err());
        // continuity of the small-alpha branch
        assert!(rel(psi_plus(1e-6).unwrap(), psi_zero()) < 1e-5);
        assert!(rel(psi_minus(1e-6).unwrap(), psi_zero()) < 1e-5);
    }

    #[test]
    fn psi_bounded() {
        for i in 0..=400 {
            let a = 10f64.powf(-4.0 + 8.0 * i as f64 / 400.0);
            let p = psi_plus(a).unwrap();
            let m = psi_minus(a).unwrap();
            assert!(p > 0.5 && p < 1.5, "psi_plus({a}) = {p}");
            assert!(m > 0.5 && m < 2.5, "psi_minus({a}) = {m}");
        }
    }

    fn saddle(l2: f64) -> PitchforkSaddle {
        PitchforkSaddle {
            lambda1: -1.0,
            lambda2: l2,
            transverse: vec![],
            c4: 1.0,
            det_min: 2.0,
            post_saddle: None,
        }
    }

    #[test]
    fn pitchfork_limits() {
        let eps: f64 = 0.01;
        let s = (2.0 * eps).sqrt();
        let k = pitchfork_prefactor(&saddle(100.0 * s), eps).unwrap();
        let quad = 2.0 * PI * (100.0 * s / 2.0).sqrt();
        assert!(rel(k.prefactor, quad) < 0.01);
        let a = pitchfork_prefactor(&saddle(0.0), eps).unwrap().prefactor;
        let b = pitchfork_prefactor(&saddle(0.0), 16.0 * eps).unwrap().prefactor;
        assert!((a / b - 0.5).abs() < 0.01);
        let l2 = -1000.0 * s;
        let post = pitchfork_prefactor(&saddle(l2), eps).unwrap();
        assert_eq!(post.regime, Regime::PitchforkPost);
        let single = 2.0 * PI * (2.0 * l2.abs() / 2.0).sqrt();
        assert!(rel(post.prefactor, single / 2.0) < 0.01);
    }

    #[test]
    fn pitchfork_errors() {
        let mut s = saddle(0.1);
        s.c4 = 0.0;
        assert!(pitchfork_prefactor(&s, 0.1).is_err());
        let mut s = saddle(-0.1);
        s.post_saddle = Some(vec![1.0, 0.2]);
        assert!(pitchfork_prefactor(&s, 0.1).is_err());
    }

    #[test]
    fn capacity_quadratic_matches_gaussian() {
        let (l1, l2, l3) = (1.5, 0.7, 2.0);
        let eps = 0.05;
        let est = degenerate_capacity(
            &|y| 0.5 * l1 * y * y,
            &|y| 0.5 * l2 * y[0] * y[0],
            1,
            &[l3],
            eps,
            SearchWindow::default(),
        )
        .unwrap();
        // leading capacity for d = 3 with e^{-V(z)/ε} divided out
        let expect = (1.0 / (2.0 * PI)) * ((2.0 * PI * eps).powi(3) * l1 / (l2 * l3)).sqrt();
        assert!(rel(est.capacity, expect) < 1e-9, "{}", rel(est.capacity, expect));
        let no_transverse =
            degenerate_capacity(&|y| 0.5 * y * y, &|y| 0.5 * y[0] * y[0], 1, &[], eps, SearchWindow::default()).unwrap();
        assert_eq!(no_transverse.gaussian_factor, 1.0);
    }

    #[test]
    fn capacity_two_dimensional_stable_block() {
        let eps = 0.1;
        let est = degenerate_capacity(
            &|y| 0.5 * y * y,
            &|y| 0.5 * (y[0] * y[0] + 3.0 * y[1] * y[1]),
            2,
            &[],
            eps,
            SearchWindow::default(),
        )
        .unwrap();
        let expect = eps * (2.0 * PI * eps / 3.0).sqrt();
        assert!(rel(est.capacity, expect) < 1e-8, "{}", rel(est.capacity, expect));
    }

    #[test]
    fn capacity_detects_divergence() {
        let r = degenerate_capacity(&|y| 0.5 * y * y, &|_| 0.0, 1, &[], 0.1, SearchWindow::default());
        assert!(matches!(r, Err(Error::Quadrature(_))));
    }
}
