//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.
//!
//! Subintervals are kept in a max-heap keyed by their error estimate and the
//! worst one is bisected until the summed error meets the tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn rel(rel_tol: f64) -> Self {
        QuadOptions {
            rel_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kronrod * h;
    let err = ((kronrod - gauss) * h).abs();
    (value, err)
}

/// Integrate `f` over `[a, b]` (a > b flips the sign).
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate_breaks(f, &[a, b], opts)
}

/// Integrate over `[p₀, p_last]` with the interior points as initial breaks.
/// Breaks must be monotone; useful to put sharp Laplace peaks on a node.
pub fn integrate_breaks<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], opts: QuadOptions) -> Result<QuadResult> {
    if points.len() < 2 {
        return Err(Error::invalid("quadrature needs at least two break points"));
    }
    let (lo, hi) = (points[0], points[points.len() - 1]);
    if lo == hi {
        return Ok(QuadResult {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    if hi < lo {
        let rev: Vec<f64> = points.iter().rev().copied().collect();
        let r = integrate_breaks(f, &rev, opts)?;
        return Ok(QuadResult { value: -r.value, ..r });
    }
    if points.windows(2).any(|w| w[1] < w[0]) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid("quadrature breaks must be finite and increasing"));
    }

    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in points.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let (v, e) = gk15(&mut f, w[0], w[1]);
        evaluations += 15;
        total += v;
        total_err += e;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    loop {
        if !total.is_finite() {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature(format!(
                "no convergence after {} subintervals: estimate {total:e} ± {total_err:e}",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine resolution; keep its estimate
            heap.push(Segment { error: 0.0, ..worst });
            total_err -= worst.error;
            continue;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // re-sum to shed accumulated cancellation in the running totals
    let (value, abs_error) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Ok(QuadResult {
        value,
        abs_error,
        evaluations,
    })
}

/// Integrate over `[a, ∞)` for an integrand that decays: the domain is
/// extended by doubling until the integrand drops below `cutoff` times its
/// largest sampled value, then integrated on the truncated range.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, cutoff: f64, opts: QuadOptions) -> Result<QuadResult> {
    let (b, _) = decay_edge(&mut f, a, 1.0, cutoff)?;
    integrate(f, a, b, opts)
}

/// Walk from `a` in direction `sign` with doubling steps until `f` falls
/// below `cutoff · max|f|` and stays decreasing. Returns the edge and the
/// largest sampled |f|.
pub fn decay_edge<F: FnMut(f64) -> f64>(f: &mut F, a: f64, sign: f64, cutoff: f64) -> Result<(f64, f64)> {
    let mut step: f64 = 0.125;
    let mut x = a;
    let mut fmax = f(a).abs();
    let mut prev = fmax;
    for _ in 0..200 {
        x += sign * step;
        let fx = f(x).abs();
        if !fx.is_finite() {
            return Err(Error::Quadrature(format!("integrand not finite at {x}")));
        }
        fmax = fmax.max(fx);
        if fx <= cutoff * fmax && fx <= prev {
            return Ok((x, fmax));
        }
        prev = fx;
        if (x - a).abs() > 1e6 {
            break;
        }
        step *= 1.5;
    }
    Err(Error::Quadrature("integrand does not decay (tail test failed)".into()))
}

/// Eight-point Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
    let x = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_2,
    ];
    let w = [
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    (
        [-x[3], -x[2], -x[1], -x[0], x[0], x[1], x[2], x[3]],
        [w[3], w[2], w[1], w[0], w[0], w[1], w[2], w[3]],
    )
}
