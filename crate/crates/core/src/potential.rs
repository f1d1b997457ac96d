//! Potential landscapes `V: ℝᵈ → ℝ` with value, gradient and Hessian access.
//!
//! Builtin landscapes are polynomials with analytic derivatives. User types
//! may implement only [`Potential::value`]; gradient and Hessian then fall
//! back to central finite differences.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SharedPotential = Arc<dyn Potential>;

/// How a potential provides its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivatives {
    Analytic,
    FiniteDifference,
}

/// Central-difference step for coordinate `x`: cube root of machine epsilon,
/// scaled by `1 + |x|`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.abs())
}

pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let mut y = x.to_vec();
        for i in 0..x.len() {
            let h = fd_step(x[i]);
            y[i] = x[i] + h;
            let fp = self.value(&y);
            y[i] = x[i] - h;
            let fm = self.value(&y);
            y[i] = x[i];
            out[i] = (fp - fm) / (2.0 * h);
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let mut hess = DMatrix::zeros(d, d);
        let mut y = x.to_vec();
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        for j in 0..d {
            let h = fd_step(x[j]);
            y[j] = x[j] + h;
            self.gradient_into(&y, &mut gp);
            y[j] = x[j] - h;
            self.gradient_into(&y, &mut gm);
            y[j] = x[j];
            for i in 0..d {
                hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        // symmetrize the difference quotient
        let t = hess.transpose();
        (hess + t) * 0.5
    }

    fn derivatives(&self) -> Derivatives {
        Derivatives::FiniteDifference
    }

    fn name(&self) -> &str {
        "anonymous"
    }

    /// Construction record, when the potential came from one.
    fn params(&self) -> Option<PotentialParams> {
        None
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        g
    }
}

impl<P: Potential + ?Sized> Potential for Arc<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).gradient_into(x, out)
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        (**self).hessian(x)
    }
    fn derivatives(&self) -> Derivatives {
        (**self).derivatives()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
    fn params(&self) -> Option<PotentialParams> {
        (**self).params()
    }
}

impl<P: Potential + ?Sized> Potential for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).gradient_into(x, out)
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        (**self).hessian(x)
    }
    fn derivatives(&self) -> Derivatives {
        (**self).derivatives()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
    fn params(&self) -> Option<PotentialParams> {
        (**self).params()
    }
}

/// `{name, parameters}` record from which builtin potentials are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialParams {
    pub name: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

impl PotentialParams {
    pub fn new(name: impl Into<String>) -> Self {
        PotentialParams {
            name: name.into(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: f64) -> Self {
        self.parameters.insert(key.into(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.parameters.get(key).copied()
    }

    fn require(&self, key: &str) -> Result<f64> {
        self.get(key).ok_or_else(|| {
            Error::invalid(format!("potential '{}' requires parameter '{key}'", self.name))
        })
    }
}

/// One monomial `coeff · ∏ xᵢ^{powers[i]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Polynomial potential with analytic derivatives.
#[derive(Debug, Clone)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<Monomial>,
    name: String,
    params: Option<PotentialParams>,
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("polynomial dimension must be positive"));
        }
        if let Some(t) = terms.iter().find(|t| t.powers.len() != dim) {
            return Err(Error::invalid(format!(
                "monomial has {} exponents, expected {dim}",
                t.powers.len()
            )));
        }
        Ok(Polynomial {
            dim,
            terms,
            name: "custom_polynomial".into(),
            params: None,
        })
    }

    /// `V ≡ 0` in `dim` dimensions.
    pub fn zero(dim: usize) -> Self {
        Polynomial {
            dim,
            terms: Vec::new(),
            name: "zero".into(),
            params: None,
        }
    }

    /// One-dimensional polynomial from coefficients `c[k]` of `x^k`.
    pub fn univariate(coeffs: &[f64]) -> Self {
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, &c)| Monomial {
                coeff: c,
                powers: vec![k as u32],
            })
            .collect();
        Polynomial {
            dim: 1,
            terms,
            name: "custom_polynomial".into(),
            params: None,
        }
    }

    fn named(mut self, name: &str, params: PotentialParams) -> Self {
        self.name = name.into();
        self.params = Some(params);
        self
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }
}

fn ipow(x: f64, p: u32) -> f64 {
    match p {
        0 => 1.0,
        1 => x,
        _ => x.powi(p as i32),
    }
}

impl Potential for Polynomial {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.powers
                    .iter()
                    .zip(x)
                    .fold(t.coeff, |acc, (&p, &xi)| acc * ipow(xi, p))
            })
            .sum()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for t in &self.terms {
            for i in 0..self.dim {
                let pi = t.powers[i];
                if pi == 0 {
                    continue;
                }
                let mut v = t.coeff * pi as f64 * ipow(x[i], pi - 1);
                for (k, (&p, &xk)) in t.powers.iter().zip(x).enumerate() {
                    if k != i {
                        v *= ipow(xk, p);
                    }
                }
                out[i] += v;
            }
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let mut h = DMatrix::zeros(d, d);
        for t in &self.terms {
            for i in 0..d {
                for j in i..d {
                    let (pi, pj) = (t.powers[i], t.powers[j]);
                    let factor = if i == j {
                        if pi < 2 {
                            continue;
                        }
                        (pi * (pi - 1)) as f64
                    } else {
                        if pi == 0 || pj == 0 {
                            continue;
                        }
                        (pi * pj) as f64
                    };
                    let mut v = t.coeff * factor;
                    for (k, (&p, &xk)) in t.powers.iter().zip(x).enumerate() {
                        let e = if k == i && k == j {
                            p - 2
                        } else if k == i || k == j {
                            p - 1
                        } else {
                            p
                        };
                        v *= ipow(xk, e);
                    }
                    h[(i, j)] += v;
                    if i != j {
                        h[(j, i)] += v;
                    }
                }
            }
        }
        h
    }

    fn derivatives(&self) -> Derivatives {
        Derivatives::Analytic
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn params(&self) -> Option<PotentialParams> {
        self.params.clone()
    }
}

/// Coefficients of the `threewell1d` builtin, `c[k]` multiplying `x^k`:
/// `V(x) = x⁶/6 − 5x⁴/4 + 2x² − 0.3x`.
///
/// The untilted polynomial has critical points at `0, ±1, ±2`; the linear
/// tilt makes the right well deepest and the middle well shallowest, so the
/// wells from left to right (x⋆₁ ≈ −2, x⋆₂ ≈ 0, x⋆₃ ≈ 2) satisfy
/// x⋆₃ ≺ x⋆₁ ≺ x⋆₂.
pub const THREEWELL_COEFFS: [f64; 7] = [0.0, -0.3, 2.0, 0.0, -1.25, 0.0, 1.0 / 6.0];

/// Local saddle normal form with a possibly degenerate second direction:
/// `V(y) = ½λ₁y₁² + ½λ₂y₂² + C₄y₂⁴ + ½Σ_{j≥3} λⱼyⱼ²`, with `λ₁ < 0`.
#[derive(Debug, Clone)]
pub struct PitchforkNormalForm {
    pub lambda1: f64,
    pub lambda2: f64,
    pub c4: f64,
    /// `λ₃ … λ_d`, all positive.
    pub transverse: Vec<f64>,
    params: PotentialParams,
}

impl PitchforkNormalForm {
    pub fn new(lambda1: f64, lambda2: f64, c4: f64, transverse: Vec<f64>) -> Result<Self> {
        if !(lambda1 < 0.0) {
            return Err(Error::invalid("pitchfork normal form needs lambda1 < 0"));
        }
        if !(c4 > 0.0) {
            return Err(Error::invalid("pitchfork normal form needs C4 > 0"));
        }
        if transverse.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::invalid("transverse eigenvalues must be positive"));
        }
        let mut params = PotentialParams::new("pitchfork_normal_form")
            .with("lambda1", lambda1)
            .with("lambda2", lambda2)
            .with("c4", c4)
            .with("d", (transverse.len() + 2) as f64);
        for (j, &l) in transverse.iter().enumerate() {
            params = params.with(format!("lambda{}", j + 3), l);
        }
        Ok(PitchforkNormalForm {
            lambda1,
            lambda2,
            c4,
            transverse,
            params,
        })
    }
}

impl Potential for PitchforkNormalForm {
    fn dim(&self) -> usize {
        2 + self.transverse.len()
    }

    fn value(&self, y: &[f64]) -> f64 {
        let y2 = y[1] * y[1];
        let mut v = 0.5 * self.lambda1 * y[0] * y[0] + 0.5 * self.lambda2 * y2 + self.c4 * y2 * y2;
        for (l, yj) in self.transverse.iter().zip(&y[2..]) {
            v += 0.5 * l * yj * yj;
        }
        v
    }

    fn gradient_into(&self, y: &[f64], out: &mut [f64]) {
        out[0] = self.lambda1 * y[0];
        out[1] = self.lambda2 * y[1] + 4.0 * self.c4 * y[1].powi(3);
        for (j, l) in self.transverse.iter().enumerate() {
            out[j + 2] = l * y[j + 2];
        }
    }

    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        h[(0, 0)] = self.lambda1;
        h[(1, 1)] = self.lambda2 + 12.0 * self.c4 * y[1] * y[1];
        for (j, l) in self.transverse.iter().enumerate() {
            h[(j + 2, j + 2)] = *l;
        }
        h
    }

    fn derivatives(&self) -> Derivatives {
        Derivatives::Analytic
    }

    fn name(&self) -> &str {
        "pitchfork_normal_form"
    }

    fn params(&self) -> Option<PotentialParams> {
        Some(self.params.clone())
    }
}

/// `c · V(x)`; used to rescale chain energies into Langevin form.
#[derive(Debug, Clone)]
pub struct Scaled<P> {
    pub inner: P,
    pub factor: f64,
}

impl<P: Potential> Potential for Scaled<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.factor * self.inner.value(x)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient_into(x, out);
        out.iter_mut().for_each(|g| *g *= self.factor);
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        self.inner.hessian(x) * self.factor
    }
    fn derivatives(&self) -> Derivatives {
        self.inner.derivatives()
    }
    fn name(&self) -> &str {
        "scaled"
    }
}

/// `V(−x)`: maps targets on the right onto half-lines on the left.
#[derive(Debug, Clone)]
pub struct Reflected<P> {
    pub inner: P,
}

impl<P: Potential> Potential for Reflected<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        self.inner.value(&y)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        self.inner.gradient_into(&y, out);
        out.iter_mut().for_each(|g| *g = -*g);
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        self.inner.hessian(&y)
    }
    fn derivatives(&self) -> Derivatives {
        self.inner.derivatives()
    }
    fn name(&self) -> &str {
        "reflected"
    }
}

/// Names accepted by [`make_builtin`].
pub const BUILTIN_NAMES: [&str; 5] = [
    "quartic1d",
    "threewell1d",
    "doublewell2d",
    "pitchfork_normal_form",
    "custom_polynomial",
];

/// Build a builtin potential from its `{name, parameters}` record.
///
/// `custom_polynomial` takes `dim` plus one key per monomial of the form
/// `c_<e1>_<e2>…` (e.g. `c_4` for `x⁴` in 1D, `c_2_1` for `x²y` in 2D).
pub fn make_builtin(params: &PotentialParams) -> Result<SharedPotential> {
    let reject_extra = |allowed: &[&str]| -> Result<()> {
        match params.parameters.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::invalid(format!(
                "unexpected parameter '{k}' for potential '{}'",
                params.name
            ))),
            None => Ok(()),
        }
    };
    match params.name.as_str() {
        "quartic1d" => {
            reject_extra(&[])?;
            Ok(Arc::new(
                Polynomial::univariate(&[0.0, 0.0, -0.5, 0.0, 0.25]).named("quartic1d", params.clone()),
            ))
        }
        "threewell1d" => {
            reject_extra(&[])?;
            Ok(Arc::new(
                Polynomial::univariate(&THREEWELL_COEFFS).named("threewell1d", params.clone()),
            ))
        }
        "doublewell2d" => {
            reject_extra(&[])?;
            let terms = vec![
                Monomial { coeff: 0.25, powers: vec![4, 0] },
                Monomial { coeff: -0.5, powers: vec![2, 0] },
                Monomial { coeff: 0.5, powers: vec![0, 2] },
            ];
            Ok(Arc::new(Polynomial::new(2, terms)?.named("doublewell2d", params.clone())))
        }
        "pitchfork_normal_form" => {
            let l1 = params.require("lambda1")?;
            let l2 = params.require("lambda2")?;
            let c4 = params.require("c4")?;
            let d = params.get("d").unwrap_or(2.0);
            if d.fract() != 0.0 || d < 2.0 {
                return Err(Error::invalid("pitchfork_normal_form needs integer d >= 2"));
            }
            let d = d as usize;
            let mut allowed: Vec<String> = ["lambda1", "lambda2", "c4", "d"].map(String::from).to_vec();
            let mut transverse = Vec::with_capacity(d - 2);
            for j in 3..=d {
                let key = format!("lambda{j}");
                transverse.push(params.require(&key)?);
                allowed.push(key);
            }
            reject_extra(&allowed.iter().map(String::as_str).collect::<Vec<_>>())?;
            Ok(Arc::new(PitchforkNormalForm::new(l1, l2, c4, transverse)?))
        }
        "custom_polynomial" => {
            let dim = params.require("dim")?;
            if dim.fract() != 0.0 || dim < 1.0 {
                return Err(Error::invalid("custom_polynomial needs integer dim >= 1"));
            }
            let dim = dim as usize;
            let mut terms = Vec::new();
            for (key, &coeff) in &params.parameters {
                if key == "dim" {
                    continue;
                }
                let powers = parse_monomial_key(key, dim)?;
                if !coeff.is_finite() {
                    return Err(Error::invalid(format!("coefficient '{key}' is not finite")));
                }
                terms.push(Monomial { coeff, powers });
            }
            Ok(Arc::new(Polynomial::new(dim, terms)?.named("custom_polynomial", params.clone())))
        }
        other => Err(Error::UnknownPotential(other.to_string())),
    }
}

fn parse_monomial_key(key: &str, dim: usize) -> Result<Vec<u32>> {
    let bad = || Error::invalid(format!("bad monomial key '{key}' (expected c_<e1>_…_<e{dim}>)"));
    let rest = key.strip_prefix("c_").ok_or_else(bad)?;
    let powers: Vec<u32> = rest
        .split('_')
        .map(|s| s.parse::<u32>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    if powers.len() != dim {
        return Err(bad());
    }
    Ok(powers)
}

/// Deviation of a potential's derivatives from central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    /// max |∂ᵢV − (V(x+heᵢ) − V(x−heᵢ))/2h|
    pub gradient_residual: f64,
    /// max |∂ᵢ∂ⱼV − (∂ᵢV(x+heⱼ) − ∂ᵢV(x−heⱼ))/2h|
    pub hessian_residual: f64,
    /// max |Hᵢⱼ − Hⱼᵢ|
    pub hessian_asymmetry: f64,
    pub gradient_norm: f64,
}

/// Compare the gradient against central differences of `V` and the Hessian
/// against central differences of the (already checked) gradient.
pub fn check_derivatives(p: &dyn Potential, x: &[f64], h: f64) -> Result<DerivativeReport> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    if x.len() != p.dim() {
        return Err(Error::invalid("point dimension does not match potential"));
    }
    let d = x.len();
    let grad = p.gradient(x);
    let hess = p.hessian(x);
    let mut y = x.to_vec();
    let mut gres: f64 = 0.0;
    let mut hres: f64 = 0.0;
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    for j in 0..d {
        y[j] = x[j] + h;
        let vp = p.value(&y);
        p.gradient_into(&y, &mut gp);
        y[j] = x[j] - h;
        let vm = p.value(&y);
        p.gradient_into(&y, &mut gm);
        y[j] = x[j];
        if !(vp.is_finite() && vm.is_finite()) {
            return Err(Error::Numerical(format!("potential not finite near x±h·e{j}")));
        }
        gres = gres.max((grad[j] - (vp - vm) / (2.0 * h)).abs());
        for i in 0..d {
            hres = hres.max((hess[(i, j)] - (gp[i] - gm[i]) / (2.0 * h)).abs());
        }
    }
    let asym = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| (hess[(i, j)] - hess[(j, i)]).abs())
        .fold(0.0, f64::max);
    Ok(DerivativeReport {
        gradient_residual: gres,
        hessian_residual: hres,
        hessian_asymmetry: asym,
        gradient_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtin(name: &str) -> SharedPotential {
        make_builtin(&PotentialParams::new(name)).unwrap()
    }

    #[test]
    fn quartic_values() {
        let p = builtin("quartic1d");
        assert_eq!(p.value(&[1.0]), -0.25);
        assert_eq!(p.gradient(&[1.0]), vec![0.0]);
        assert_eq!(p.hessian(&[1.0])[(0, 0)], 2.0);
        assert_eq!(p.value(&[0.0]), 0.0);
        assert_eq!(p.gradient(&[0.0]), vec![0.0]);
        assert_eq!(p.hessian(&[0.0])[(0, 0)], -1.0);
    }

    #[test]
    fn pitchfork_at_origin() {
        let params = PotentialParams::new("pitchfork_normal_form")
            .with("lambda1", -1.0)
            .with("lambda2", 0.5)
            .with("c4", 1.0)
            .with("d", 2.0);
        let p = make_builtin(&params).unwrap();
        assert_eq!(p.value(&[0.0, 0.0]), 0.0);
        assert_eq!(p.gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        let eig = p.hessian(&[0.0, 0.0]).symmetric_eigenvalues();
        let mut e: Vec<f64> = eig.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        assert_eq!(e, vec![-1.0, 0.5]);
    }

    #[test]
    fn pitchfork_rejects_bad_params() {
        let p = PotentialParams::new("pitchfork_normal_form")
            .with("lambda1", -1.0)
            .with("lambda2", 0.5)
            .with("c4", 0.0);
        assert!(matches!(make_builtin(&p), Err(Error::InvalidInput(_))));
        let p = PotentialParams::new("pitchfork_normal_form")
            .with("lambda1", -1.0)
            .with("lambda2", 0.5)
            .with("c4", 1.0)
            .with("d", 3.0);
        assert!(make_builtin(&p).is_err(), "missing lambda3");
    }

    #[test]
    fn unknown_name() {
        assert_eq!(
            make_builtin(&PotentialParams::new("mexican_hat")).unwrap_err(),
            Error::UnknownPotential("mexican_hat".into())
        );
    }

    #[test]
    fn custom_polynomial_matches_doublewell() {
        let params = PotentialParams::new("custom_polynomial")
            .with("dim", 2.0)
            .with("c_4_0", 0.25)
            .with("c_2_0", -0.5)
            .with("c_0_2", 0.5);
        let p = make_builtin(&params).unwrap();
        let q = builtin("doublewell2d");
        for x in [[0.3, -0.7], [1.2, 0.1], [-2.0, 2.0]] {
            assert_eq!(p.value(&x), q.value(&x));
            assert_eq!(p.gradient(&x), q.gradient(&x));
        }
        let bad = PotentialParams::new("custom_polynomial").with("dim", 2.0).with("c_4", 1.0);
        assert!(make_builtin(&bad).is_err());
    }

    #[test]
    fn derivative_check_examples() {
        let q = builtin("quartic1d");
        let r = check_derivatives(q.as_ref(), &[0.3], 1e-5).unwrap();
        assert!(r.gradient_residual <= 1e-6 && r.hessian_residual <= 1e-6, "{r:?}");
        let r = check_derivatives(q.as_ref(), &[0.0], 1e-5).unwrap();
        assert!(r.gradient_residual < 1e-15, "{r:?}");
        let dw = builtin("doublewell2d");
        let r = check_derivatives(dw.as_ref(), &[0.2, -0.4], 1e-5).unwrap();
        assert!(r.gradient_residual <= 1e-6 && r.hessian_residual <= 1e-6, "{r:?}");
        assert!(check_derivatives(dw.as_ref(), &[0.2, -0.4], 0.0).is_err());
    }

    #[derive(Debug)]
    struct ValueOnly;
    impl Potential for ValueOnly {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            x[0].sin() * x[1].exp()
        }
    }

    #[test]
    fn finite_difference_fallback() {
        let p = ValueOnly;
        assert_eq!(p.derivatives(), Derivatives::FiniteDifference);
        let x = [0.4, -0.3];
        let g = p.gradient(&x);
        assert!((g[0] - 0.4f64.cos() * (-0.3f64).exp()).abs() < 1e-9);
        assert!((g[1] - 0.4f64.sin() * (-0.3f64).exp()).abs() < 1e-9);
        let h = p.hessian(&x);
        assert!((h[(0, 1)] - 0.4f64.cos() * (-0.3f64).exp()).abs() < 1e-5);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    #[test]
    fn reflection_and_scaling() {
        let p = builtin("threewell1d");
        let r = Reflected { inner: p.clone() };
        assert_eq!(r.value(&[0.7]), p.value(&[-0.7]));
        assert_eq!(r.gradient(&[0.7])[0], -p.gradient(&[-0.7])[0]);
        let s = Scaled { inner: p.clone(), factor: 2.0 };
        assert_eq!(s.value(&[0.7]), 2.0 * p.value(&[0.7]));
    }
}
