//! Gamma function and the modified Bessel functions of order ±1/4.
//!
//! Branches for `K_{1/4}`:
//! * `z < 2`: reflection `K_ν = π/(2 sin νπ)·(I_{−ν} − I_ν)` from power series;
//! * `2 ≤ z < 40`: Steed's continued fraction (Temme's CF2);
//! * `z ≥ 40`: Hankel asymptotic series.
//!
//! `I_{±1/4}` uses the power series for `z < 30` and the asymptotic series
//! beyond. Scaled variants (`e^{z}K`, `e^{−z}I`) never overflow.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(x) by the Lanczos approximation (g = 7), with reflection for x < ½.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS_COEFFS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// Γ(1/4) ≈ 3.6256, evaluated once.
pub fn gamma_quarter() -> f64 {
    static G: OnceLock<f64> = OnceLock::new();
    *G.get_or_init(|| gamma(0.25))
}

/// Which quarter-order Bessel function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuarterKind {
    /// `K_{1/4}`
    K,
    /// `I_{1/4}`
    IPlus,
    /// `I_{−1/4}`
    IMinus,
}

const SERIES_I_MAX: f64 = 30.0;
const SERIES_K_MAX: f64 = 2.0;
const CF_K_MAX: f64 = 40.0;

/// `K_{1/4}(z)`, `I_{1/4}(z)` or `I_{−1/4}(z)` for `z > 0`.
pub fn bessel_quarter(kind: QuarterKind, z: f64) -> Result<f64> {
    check_arg(z)?;
    Ok(match kind {
        QuarterKind::K => bessel_k_scaled(0.25, z) * (-z).exp(),
        QuarterKind::IPlus => bessel_i_scaled(0.25, z) * z.exp(),
        QuarterKind::IMinus => bessel_i_scaled(-0.25, z) * z.exp(),
    })
}

/// `e^{z}·K_{1/4}(z)` for `z > 0`.
pub fn k_quarter_scaled(z: f64) -> Result<f64> {
    check_arg(z)?;
    Ok(bessel_k_scaled(0.25, z))
}

/// `e^{−z}·(I_{−1/4}(z) + I_{1/4}(z))` for `z > 0`.
pub fn i_quarter_sum_scaled(z: f64) -> Result<f64> {
    check_arg(z)?;
    Ok(bessel_i_scaled(-0.25, z) + bessel_i_scaled(0.25, z))
}

fn check_arg(z: f64) -> Result<()> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::invalid(format!("Bessel argument must be positive and finite, got {z}")));
    }
    Ok(())
}

/// `e^{−z} I_ν(z)` by power series (all terms positive when ν > −1).
pub(crate) fn bessel_i_series_scaled(nu: f64, z: f64) -> f64 {
    let half = 0.5 * z;
    let q = half * half;
    let mut term = half.powf(nu) / gamma(nu + 1.0);
    let mut sum = term;
    for k in 1..10_000 {
        let k = k as f64;
        term *= q / (k * (k + nu));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum * (-z).exp()
}

/// Hankel asymptotic series for `e^{−z} I_ν(z)`, truncated at its
/// smallest term.
pub(crate) fn bessel_i_asymptotic_scaled(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        let next = -term * (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * z);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * z).sqrt()
}

/// Hankel asymptotic series for `e^{z} K_ν(z)`.
pub(crate) fn bessel_k_asymptotic_scaled(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        let next = term * (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * z);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum * (PI / (2.0 * z)).sqrt()
}

/// Steed's continued fraction for `e^{z} K_ν(z)`, `|ν| ≤ ½`, `z ≳ 2`.
pub(crate) fn bessel_k_cf_scaled(nu: f64, z: f64) -> f64 {
    let mu2 = nu * nu;
    let mut b = 2.0 * (1.0 + z);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..100_000 {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    (PI / (2.0 * z)).sqrt() / s
}

/// `e^{z} K_ν(z)` via reflection from the I series; `ν` must not be an
/// integer.
pub(crate) fn bessel_k_series_scaled(nu: f64, z: f64) -> f64 {
    let diff = bessel_i_series_scaled(-nu, z) - bessel_i_series_scaled(nu, z);
    PI / (2.0 * (nu * PI).sin()) * diff * (2.0 * z).exp()
}

fn bessel_i_scaled(nu: f64, z: f64) -> f64 {
    if z < SERIES_I_MAX {
        bessel_i_series_scaled(nu, z)
    } else {
        bessel_i_asymptotic_scaled(nu, z)
    }
}

fn bessel_k_scaled(nu: f64, z: f64) -> f64 {
    if z < SERIES_K_MAX {
        bessel_k_series_scaled(nu, z)
    } else if z < CF_K_MAX {
        bessel_k_cf_scaled(nu, z)
    } else {
        bessel_k_asymptotic_scaled(nu, z)
    }
}
