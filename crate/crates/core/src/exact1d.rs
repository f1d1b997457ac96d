//! One-dimensional oracles: committor, mean hitting time of a half-line,
//! capacity and the Laplace form of Kramers' law.
//!
//! Every exponential is evaluated with a local maximum or minimum of `V`
//! factored out, so `e^{±V/ε}` never overflows in the regimes of interest.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::quadrature::{integrate_breaks, QuadOptions};

/// Absorbing boundaries `a < b`, start `x` and noise intensity `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval1D {
    pub a: f64,
    pub b: f64,
    pub x: f64,
    pub eps: f64,
}

impl Interval1D {
    pub fn new(a: f64, b: f64, x: f64, eps: f64) -> Result<Self> {
        if !(a < b) || !(a <= x && x <= b) {
            return Err(Error::invalid(format!("need a <= x <= b with a < b, got a={a}, x={x}, b={b}")));
        }
        check_eps(eps)?;
        Ok(Interval1D { a, b, x, eps })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive, got {eps}")));
    }
    Ok(())
}

fn check_1d(p: &dyn Potential) -> Result<()> {
    if p.dim() != 1 {
        return Err(Error::invalid(format!("expected a one-dimensional potential, got d={}", p.dim())));
    }
    Ok(())
}

const SCAN: usize = 4000;

/// (argmax, max) of V on a uniform scan of `[a, b]`.
fn scan_max(p: &dyn Potential, a: f64, b: f64) -> (f64, f64) {
    let mut best = (a, p.value(&[a]));
    for i in 1..=SCAN {
        let y = a + (b - a) * i as f64 / SCAN as f64;
        let v = p.value(&[y]);
        if v > best.1 {
            best = (y, v);
        }
    }
    best
}

fn breaks(a: f64, peak: f64, b: f64) -> Vec<f64> {
    if peak > a && peak < b {
        vec![a, peak, b]
    } else {
        vec![a, b]
    }
}

/// `∫ₐᵇ e^{(V−M)/ε}` with `M = max V` on `[a, b]`; returns (integral, M).
fn shifted_boltzmann_inverse(p: &dyn Potential, a: f64, b: f64, eps: f64) -> Result<(f64, f64)> {
    let (ypk, m) = scan_max(p, a, b);
    let r = integrate_breaks(|y| ((p.value(&[y]) - m) / eps).exp(), &breaks(a, ypk, b), QuadOptions::rel(1e-12))?;
    Ok((r.value, m))
}

/// Probability of reaching `a` before `b` from `x`:
/// `h = ∫ₓᵇ e^{V/ε} / ∫ₐᵇ e^{V/ε}`.
pub fn committor_1d(p: &dyn Potential, iv: &Interval1D) -> Result<f64> {
    check_1d(p)?;
    let Interval1D { a, b, x, eps } = *iv;
    if x <= a {
        return Ok(1.0);
    }
    if x >= b {
        return Ok(0.0);
    }
    let (ypk, m) = scan_max(p, a, b);
    let f = |y: f64| ((p.value(&[y]) - m) / eps).exp();
    let opts = QuadOptions::rel(1e-13);
    // split at x so numerator and denominator share their pieces
    let left = integrate_breaks(f, &breaks(a, ypk, x), opts)?.value;
    let right = integrate_breaks(f, &breaks(x, ypk, b), opts)?.value;
    let total = left + right;
    if !(total > 0.0) {
        return Err(Error::Quadrature("committor denominator underflowed".into()));
    }
    Ok((right / total).clamp(0.0, 1.0))
}

/// Capacity between `a` and `b`: `ε / ∫ₐᵇ e^{V/ε}`.
pub fn capacity_1d(p: &dyn Potential, a: f64, b: f64, eps: f64) -> Result<f64> {
    check_1d(p)?;
    check_eps(eps)?;
    if !(a < b) {
        return Err(Error::invalid("capacity needs a < b"));
    }
    let (i, m) = shifted_boltzmann_inverse(p, a, b, eps)?;
    let cap = eps / i * (-m / eps).exp();
    if !cap.is_finite() {
        return Err(Error::Numerical("capacity overflowed".into()));
    }
    Ok(cap)
}

/// Truncation depth for the inner integral of the mean hitting time.
const TAIL_DEPTH: f64 = 50.0;

/// Right end beyond which `V − min V > 50ε` and `V` keeps increasing.
fn right_truncation(p: &dyn Potential, from: f64, eps: f64) -> Result<f64> {
    let mut h = 1e-3 * (1.0 + from.abs());
    let mut y = from;
    let mut vmin = p.value(&[from]);
    let mut prev = vmin;
    let mut steps = 0usize;
    loop {
        y += h;
        let v = p.value(&[y]);
        if !v.is_finite() {
            return Err(Error::Quadrature(format!("potential not finite at {y}")));
        }
        vmin = vmin.min(v);
        if v - vmin > TAIL_DEPTH * eps && v > prev && p.gradient(&[y])[0] > 0.0 {
            return Ok(y);
        }
        prev = v;
        steps += 1;
        if steps % 2000 == 0 {
            h *= 2.0;
        }
        if y - from > 1e6 {
            return Err(Error::Quadrature(
                "divergent inner integral: potential does not confine to the right".into(),
            ));
        }
    }
}

/// Mean time to reach the half-line `(−∞, a]` from `x ≥ a`:
/// `w = (1/ε) ∫ₐˣ ∫_z^∞ e^{[V(z)−V(y)]/ε} dy dz`.
pub fn mean_hitting_1d(p: &dyn Potential, a: f64, x: f64, eps: f64) -> Result<f64> {
    check_1d(p)?;
    check_eps(eps)?;
    if x < a {
        return Err(Error::invalid(format!("start {x} lies inside the target half-line (-inf, {a}]")));
    }
    if x == a {
        return Ok(0.0);
    }
    let top = right_truncation(p, x, eps)?;
    // suffix minima of V on a grid over [a, top]; used only as exponent shifts
    let n = 20_000;
    let grid: Vec<f64> = (0..=n).map(|i| a + (top - a) * i as f64 / n as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&y| p.value(&[y])).collect();
    let mut suffix = vec![(0.0, 0.0); n + 1];
    suffix[n] = (vals[n], grid[n]);
    for i in (0..n).rev() {
        suffix[i] = if vals[i] < suffix[i + 1].0 { (vals[i], grid[i]) } else { suffix[i + 1] };
    }
    let locate = |z: f64| -> (f64, f64) {
        let k = (((z - a) / (top - a)) * n as f64).floor().clamp(0.0, n as f64) as usize;
        suffix[k]
    };
    let inner_opts = QuadOptions::rel(1e-12);
    let mut failure = None;
    let outer = |z: f64| -> f64 {
        let vz = p.value(&[z]);
        let (m, ym) = locate(z);
        let m = m.min(vz);
        let r = integrate_breaks(
            |y| (-(p.value(&[y]) - m) / eps).exp(),
            &breaks(z, ym, top),
            inner_opts,
        );
        match r {
            Ok(r) => ((vz - m) / eps).exp() * r.value,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let (zpk, _) = scan_max(p, a, x);
    let r = integrate_breaks(outer, &breaks(a, zpk, x), QuadOptions::rel(1e-10))?;
    if let Some(e) = failure {
        return Err(e);
    }
    let w = r.value / eps;
    if !w.is_finite() {
        return Err(Error::Numerical("mean hitting time overflowed".into()));
    }
    Ok(w)
}

/// Laplace asymptotics of the mean hitting time:
/// `2π / sqrt(|V″(z⋆)| V″(y⋆)) · e^{[V(z⋆) − V(y⋆)]/ε}`.
pub fn kramers_asymptotic_1d(p: &dyn Potential, y_min: f64, z_saddle: f64, eps: f64) -> Result<f64> {
    check_1d(p)?;
    check_eps(eps)?;
    let vyy = p.hessian(&[y_min])[(0, 0)];
    let vzz = p.hessian(&[z_saddle])[(0, 0)];
    if !(vyy > 0.0) || !(vzz < 0.0) {
        return Err(Error::invalid(format!(
            "wrong curvature signs: V''(y*)={vyy} must be > 0 and V''(z*)={vzz} < 0"
        )));
    }
    let barrier = p.value(&[z_saddle]) - p.value(&[y_min]);
    Ok(2.0 * PI / (vzz.abs() * vyy).sqrt() * (barrier / eps).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_builtin, Polynomial, PotentialParams, Reflected};

    fn quartic() -> crate::SharedPotential {
        make_builtin(&PotentialParams::new("quartic1d")).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // plain trapezoid on a fine grid, independent of the adaptive code
    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        s * h
    }

    #[test]
    fn brownian_committor_is_linear() {
        let flat = Polynomial::zero(1);
        let iv = Interval1D::new(0.0, 10.0, 3.0, 0.3).unwrap();
        assert!((committor_1d(&flat, &iv).unwrap() - 0.7).abs() < 1e-13);
        let at_a = Interval1D::new(0.0, 10.0, 0.0, 0.3).unwrap();
        let at_b = Interval1D::new(0.0, 10.0, 10.0, 0.3).unwrap();
        assert_eq!(committor_1d(&flat, &at_a).unwrap(), 1.0);
        assert_eq!(committor_1d(&flat, &at_b).unwrap(), 0.0);
    }

    #[test]
    fn quartic_committor_matches_trapezoid() {
        let p = quartic();
        let eps = 0.05;
        let iv = Interval1D::new(-1.2, 1.2, 1.0, eps).unwrap();
        let h = committor_1d(p.as_ref(), &iv).unwrap();
        let f = |y: f64| (p.value(&[y]) / eps).exp();
        let oracle = trapezoid(f, 1.0, 1.2, 200_000) / trapezoid(f, -1.2, 1.2, 2_400_000);
        assert!(rel(h, oracle) < 1e-8, "{h} vs {oracle}");
        // Laplace estimate: exponentially small in the gap 0 − V(1.2)
        assert!(h < 10f64.powf(-1.5));
    }

    #[test]
    fn committor_monotone() {
        let p = make_builtin(&PotentialParams::new("threewell1d")).unwrap();
        let mut last = 1.0;
        for i in 0..=60 {
            let x = -2.5 + 5.0 * i as f64 / 60.0;
            let h = committor_1d(p.as_ref(), &Interval1D::new(-2.5, 2.5, x, 0.2).unwrap()).unwrap();
            assert!(h <= last + 1e-14);
            last = h;
        }
    }

    #[test]
    fn flat_capacity() {
        let flat = Polynomial::zero(1);
        assert!(rel(capacity_1d(&flat, -1.0, 3.0, 0.2).unwrap(), 0.05) < 1e-13);
    }

    #[test]
    fn quartic_capacity_laplace() {
        let p = quartic();
        let eps = 0.1;
        let cap = capacity_1d(p.as_ref(), -1.0, 1.0, eps).unwrap();
        let laplace = (eps / (2.0 * PI)).sqrt();
        assert!(rel(cap, laplace) < eps.sqrt(), "{cap} vs {laplace}");
        // numerator over capacity gives the Kramers time to leading order
        let numerator = (2.0 * PI * eps / 2.0).sqrt() * (0.25 / eps).exp();
        let kramers = kramers_asymptotic_1d(p.as_ref(), -1.0, 0.0, eps).unwrap();
        assert!(rel(numerator / cap, kramers) < eps.sqrt());
    }

    #[test]
    fn capacity_reflection_symmetry() {
        let p = make_builtin(&PotentialParams::new("threewell1d")).unwrap();
        let r = Reflected { inner: p.clone() };
        let c1 = capacity_1d(p.as_ref(), -1.7, 2.1, 0.15).unwrap();
        let c2 = capacity_1d(&r, -2.1, 1.7, 0.15).unwrap();
        assert!(rel(c1, c2) < 1e-10);
    }

    #[test]
    fn kramers_examples() {
        let p = quartic();
        let k1 = kramers_asymptotic_1d(p.as_ref(), 1.0, 0.0, 0.1).unwrap();
        let k2 = kramers_asymptotic_1d(p.as_ref(), 1.0, 0.0, 0.05).unwrap();
        assert!(rel(k1, PI * 2f64.sqrt() * 2.5f64.exp()) < 1e-12);
        assert!(rel(k2, 659.3) < 2e-4);
        assert!(rel(k2 / k1, 2.5f64.exp()) < 1e-12);
        assert!(kramers_asymptotic_1d(p.as_ref(), 0.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn mean_hitting_boundary_and_errors() {
        let p = quartic();
        assert_eq!(mean_hitting_1d(p.as_ref(), -0.5, -0.5, 0.1).unwrap(), 0.0);
        assert!(mean_hitting_1d(p.as_ref(), 0.0, -0.5, 0.1).is_err());
        let unconfined = Polynomial::univariate(&[0.0, -1.0]);
        assert!(matches!(
            mean_hitting_1d(&unconfined, 0.0, 1.0, 0.1),
            Err(Error::Quadrature(_))
        ));
    }

    #[test]
    fn mean_hitting_quartic_golden() {
        // independent scipy double integral, quartic1d, a=-0.5, x=1, eps=0.05
        let p = quartic();
        let w = mean_hitting_1d(p.as_ref(), -0.5, 1.0, 0.05).unwrap();
        assert!(rel(w, GOLDEN_A_HALF) < 1e-7, "{w}");
        let k = kramers_asymptotic_1d(p.as_ref(), 1.0, 0.0, 0.05).unwrap();
        assert!(rel(w, k) < 0.15);
    }

    #[test]
    fn linear_drift_mean_hitting() {
        // V = c·y: constant speed c towards a, so w = (x − a)/c exactly
        let c = 2.0;
        let p = Polynomial::univariate(&[0.0, c]);
        let w = mean_hitting_1d(&p, -1.0, 2.0, 0.1).unwrap();
        assert!(rel(w, 1.5) < 1e-9, "{w}");
    }

    #[test]
    fn mean_hitting_relative_error_shrinks() {
        let p = quartic();
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&e| {
                let w = mean_hitting_1d(p.as_ref(), -1.0, 1.0, e).unwrap();
                rel(w, kramers_asymptotic_1d(p.as_ref(), 1.0, 0.0, e).unwrap())
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        let e025 = {
            let w = mean_hitting_1d(p.as_ref(), -0.5, 1.0, 0.025).unwrap();
            rel(w, kramers_asymptotic_1d(p.as_ref(), 1.0, 0.0, 0.025).unwrap())
        };
        let e1 = {
            let w = mean_hitting_1d(p.as_ref(), -0.5, 1.0, 0.1).unwrap();
            rel(w, kramers_asymptotic_1d(p.as_ref(), 1.0, 0.0, 0.1).unwrap())
        };
        assert!(e025 < e1);
    }

    const GOLDEN_A_HALF: f64 = 709.481_514_167_495_1;
}
