//! Cycling law for the first-exit location through an unstable periodic
//! orbit: an exponentially decaying envelope times a periodic sum of shifted
//! Gumbel kernels whose phase moves with `log(1/ε)`.

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::quadrature::gauss_legendre_8;
use crate::sde::ExitHistogram;

/// `A(x) = ½·exp(−2x − ½e^{−2x})`.
pub fn gumbel_kernel(x: f64) -> f64 {
    let e = (-2.0 * x).exp();
    if !e.is_finite() {
        return 0.0;
    }
    0.5 * (-2.0 * x - 0.5 * e).exp()
}

/// `P(θ) = Σ_k A(θ − kλT)`.
///
/// θ is first reduced into `[0, λT)` so the result depends only on the
/// residue (bit-identical whenever `θ + λT` is computed exactly); terms are added outward from the reduced point until they drop
/// below 1e-16 of the running sum.
pub fn periodic_p(theta: f64, lambda_t: f64) -> f64 {
    assert!(lambda_t > 0.0, "periodic_p needs λT > 0");
    let r = theta.rem_euclid(lambda_t);
    let mut sum = gumbel_kernel(r);
    // right of the peak: x = r − kλT decreases, double-exponential decay
    // (after the kernel's maximum near x = −ln2/2 has been passed)
    let mut k = 1.0;
    loop {
        let x = r - k * lambda_t;
        let t = gumbel_kernel(x);
        sum += t;
        if x < -1.0 && t <= 1e-16 * sum {
            break;
        }
        k += 1.0;
    }
    // x = r + kλT increases, geometric tail ~ ½e^{−2x}
    let mut k = 1.0;
    loop {
        let t = gumbel_kernel(r + k * lambda_t);
        sum += t;
        if t <= 1e-16 * sum {
            break;
        }
        k += 1.0;
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclingParams {
    /// Period `T` of the unstable orbit.
    pub period: f64,
    /// Lyapunov exponent `λ` of the orbit.
    pub lyapunov: f64,
    /// Kramers time `T_K`.
    pub kramers_time: f64,
    pub theta0: f64,
    pub eps: f64,
}

impl CyclingParams {
    pub fn new(period: f64, lyapunov: f64, kramers_time: f64, theta0: f64, eps: f64) -> Result<Self> {
        let cp = Self { period, lyapunov, kramers_time, theta0, eps };
        cp.validate()?;
        Ok(cp)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.period) && pos(self.lyapunov) && pos(self.kramers_time) && pos(self.eps)) {
            return Err(Error::invalid("cycling parameters T, λ, T_K and ε must be positive"));
        }
        if !self.theta0.is_finite() {
            return Err(Error::invalid("θ₀ must be finite"));
        }
        Ok(())
    }

    pub fn lambda_t(&self) -> f64 {
        self.lyapunov * self.period
    }

    pub fn lambda_tk(&self) -> f64 {
        self.lyapunov * self.kramers_time
    }

    /// Phase shift `log(1/ε)`.
    pub fn shift(&self) -> f64 {
        -self.eps.ln()
    }
}

/// Default transient `1 − e^{−(θ−θ₀)}`, clipped at zero.
pub fn default_transient(s: f64) -> f64 {
    (-(-s).exp_m1()).max(0.0)
}

/// Periodic factor `P_{λT}(θ − log(1/ε))` of the exit density.
pub fn p_factor(theta: f64, cp: &CyclingParams) -> f64 {
    periodic_p(theta - cp.shift(), cp.lambda_t())
}

/// Exit density with the default transient.
pub fn exit_density(theta: f64, cp: &CyclingParams) -> Result<f64> {
    exit_density_with(theta, cp, &default_transient)
}

/// `p(θ) = f(θ−θ₀)·e^{−(θ−θ₀)/λT_K}/λT_K·P_{λT}(θ − log(1/ε))` with a
/// caller-supplied transient `f`.
pub fn exit_density_with(theta: f64, cp: &CyclingParams, transient: &dyn Fn(f64) -> f64) -> Result<f64> {
    cp.validate()?;
    if !(theta > cp.theta0) {
        return Err(Error::invalid(format!("θ = {theta} is not beyond θ₀ = {}", cp.theta0)));
    }
    Ok(density_unchecked(theta, cp, transient))
}

fn density_unchecked(theta: f64, cp: &CyclingParams, transient: &dyn Fn(f64) -> f64) -> f64 {
    if theta <= cp.theta0 {
        return 0.0;
    }
    let s = theta - cp.theta0;
    let tk = cp.lambda_tk();
    transient(s) * (-s / tk).exp() / tk * p_factor(theta, cp)
}

/// Location of the density maximum inside `[start, start + λT)`: dense scan
/// refined by golden section.
pub fn mode_in_period(cp: &CyclingParams, start: f64) -> Result<f64> {
    cp.validate()?;
    let lt = cp.lambda_t();
    let f = |t: f64| density_unchecked(t, cp, &default_transient);
    let n = 512;
    let h = lt / n as f64;
    let (mut best, mut best_v) = (start, f(start));
    for i in 1..n {
        let t = start + h * i as f64;
        let v = f(t);
        if v > best_v {
            best = t;
            best_v = v;
        }
    }
    let (mut a, mut b) = ((best - h).max(start), (best + h).min(start + lt));
    const INV_PHI: f64 = 0.618_033_988_749_895;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 * (1.0 + best.abs()) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    Ok(0.5 * (a + b))
}

/// Exact samples from the density by rejection against the exponential
/// envelope; `transient` must take values in [0, 1].
pub fn sample_exit_angles<R: Rng + ?Sized>(cp: &CyclingParams, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    cp.validate()?;
    let lt = cp.lambda_t();
    let pmax = (0..2048).map(|i| periodic_p(lt * i as f64 / 2048.0, lt)).fold(0.0, f64::max) * 1.01;
    let exp = Exp::new(1.0 / cp.lambda_tk()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s: f64 = exp.sample(rng);
        let theta = cp.theta0 + s;
        let accept = default_transient(s) * p_factor(theta, cp) / pmax;
        if rng.random::<f64>() < accept {
            out.push(theta);
        }
    }
    Ok(out)
}

/// Histogram over the unfolded angle θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl AngleHistogram {
    pub fn new(edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if edges.len() != counts.len() + 1 || counts.is_empty() {
            return Err(Error::invalid("histogram needs one more edge than bins"));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("histogram edges must increase"));
        }
        Ok(Self { edges, counts })
    }

    /// Equal-width bins on `[lo, hi)`; samples outside are dropped.
    pub fn from_samples(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo) || bins == 0 {
            return Err(Error::invalid("histogram range must be nonempty"));
        }
        let w = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + w * i as f64).collect();
        let mut counts = vec![0u64; bins];
        for &s in samples {
            if s >= lo && s < hi {
                counts[(((s - lo) / w) as usize).min(bins - 1)] += 1;
            }
        }
        Self::new(edges, counts)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

impl From<&ExitHistogram> for AngleHistogram {
    fn from(h: &ExitHistogram) -> Self {
        Self { edges: h.edges.clone(), counts: h.counts.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclingFit {
    pub params: CyclingParams,
    /// Poisson deviance at the optimum.
    pub deviance: f64,
    /// Pearson χ² per degree of freedom.
    pub reduced_chi2: f64,
    /// `(max P − min P)/mean P` of the fitted periodic factor.
    pub modulation: f64,
    /// Model mass inside the histogram range, `∫p` over the bins.
    pub model_mass_in_range: f64,
    pub poor_fit: bool,
    pub iterations: u64,
}

/// Below this many occupied bins the fit is refused.
pub const MIN_OCCUPIED_BINS: usize = 20;
const POOR_CHI2: f64 = 2.0;
const MIN_MODULATION: f64 = 0.05;

struct FitProblem<'a> {
    hist: &'a AngleHistogram,
    seed: CyclingParams,
}

impl FitProblem<'_> {
    fn params(&self, v: &[f64]) -> CyclingParams {
        let lambda = self.seed.lyapunov;
        CyclingParams {
            period: v[1].exp() / lambda,
            kramers_time: v[2].exp() / lambda,
            theta0: v[0],
            ..self.seed
        }
    }

    /// Model mass in each bin, 8-point Gauss–Legendre per bin.
    fn bin_masses(&self, cp: &CyclingParams) -> Vec<f64> {
        let (nodes, weights) = gauss_legendre_8();
        self.hist
            .edges
            .windows(2)
            .map(|w| {
                if w[1] <= cp.theta0 {
                    return 0.0;
                }
                // the transient kink at θ₀ is a bin edge of its own
                let a = w[0].max(cp.theta0);
                let half = 0.5 * (w[1] - a);
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(x, wt)| wt * half * density_unchecked(a + half * (1.0 + x), cp, &default_transient))
                    .sum()
            })
            .collect()
    }

    /// Shortest period the bins can resolve.
    fn min_lambda_t(&self) -> f64 {
        2.0 * self.hist.edges.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    fn expected(&self, cp: &CyclingParams) -> (Vec<f64>, f64) {
        let masses = self.bin_masses(cp);
        let z: f64 = masses.iter().sum();
        let n = self.hist.total() as f64;
        (masses.iter().map(|m| n * m / z).collect(), z)
    }
}

impl CostFunction for FitProblem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, v: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        if v.iter().any(|x| !x.is_finite()) || v[1].exp() < self.min_lambda_t() || v[1] > 30.0 || v[2].abs() > 30.0 {
            return Ok(f64::INFINITY);
        }
        let cp = self.params(v);
        let (e, z) = self.expected(&cp);
        if !(z > 0.0) {
            return Ok(f64::INFINITY);
        }
        let mut dev = 0.0;
        for (&c, &ei) in self.hist.counts.iter().zip(&e) {
            let c = c as f64;
            let ei = ei.max(1e-300);
            dev += ei - c;
            if c > 0.0 {
                dev += c * (c / ei).ln();
            }
        }
        Ok(2.0 * dev)
    }
}

/// Binned maximum-likelihood fit of `(θ₀, λT, λT_K)` by Nelder–Mead, started
/// at `seed`. λ and ε are held at their seed values; the fitted products
/// are converted back to `T` and `T_K` through λ.
pub fn fit_cycling(hist: &AngleHistogram, seed: &CyclingParams) -> Result<CyclingFit> {
    seed.validate()?;
    let occupied = hist.counts.iter().filter(|&&c| c > 0).count();
    if occupied < MIN_OCCUPIED_BINS {
        return Err(Error::invalid(format!(
            "degenerate histogram: {occupied} occupied bins, need {MIN_OCCUPIED_BINS}"
        )));
    }
    let problem = FitProblem { hist, seed: *seed };
    let x0 = vec![seed.theta0, seed.lambda_t().ln(), seed.lambda_tk().ln()];
    let width = hist.edges[hist.edges.len() - 1] - hist.edges[0];
    let steps = [0.05 * width.max(1.0), 0.1, 0.1];
    let mut simplex = vec![x0.clone()];
    for (i, s) in steps.iter().enumerate() {
        let mut v = x0.clone();
        v[i] += s;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-10)
        .map_err(|e| Error::NonConvergence(e.to_string()))?;
    let res = Executor::new(FitProblem { hist, seed: *seed }, solver)
        .configure(|s| s.max_iters(4000))
        .run()
        .map_err(|e| Error::NonConvergence(e.to_string()))?;
    let best = res.state.best_param.clone().ok_or_else(|| Error::NonConvergence("no fitted parameters".into()))?;
    let cp = problem.params(&best);
    let (e, z) = problem.expected(&cp);
    let chi2: f64 = hist
        .counts
        .iter()
        .zip(&e)
        .map(|(&c, &ei)| (c as f64 - ei).powi(2) / ei.max(1.0))
        .sum();
    let dof = (hist.counts.len() as f64 - 3.0).max(1.0);
    let lt = cp.lambda_t();
    let samples: Vec<f64> = (0..256).map(|i| periodic_p(lt * i as f64 / 256.0, lt)).collect();
    let (lo, hi) = samples.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let modulation = (hi - lo) / mean;
    let reduced_chi2 = chi2 / dof;
    Ok(CyclingFit {
        params: cp,
        deviance: res.state.best_cost,
        reduced_chi2,
        modulation,
        model_mass_in_range: z,
        poor_fit: reduced_chi2 > POOR_CHI2 || modulation < MIN_MODULATION,
        iterations: res.state.iter,
    })
}

/// `(θ, p)` table on `n` points of `(θ₀, θ_max]`.
pub fn density_csv(cp: &CyclingParams, theta_max: f64, n: usize) -> Result<CsvTable> {
    cp.validate()?;
    if !(theta_max > cp.theta0) || n == 0 {
        return Err(Error::invalid("density range must lie beyond θ₀"));
    }
    let mut t = CsvTable::new(["theta", "p"]);
    for i in 1..=n {
        let th = cp.theta0 + (theta_max - cp.theta0) * i as f64 / n as f64;
        t.push_numbers(&[th, density_unchecked(th, cp, &default_transient)]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> CyclingParams {
        CyclingParams::new(1.5, 1.0, 6.0, 1.0, 0.01).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert!((gumbel_kernel(0.0) - 0.5 * (-0.5f64).exp()).abs() < 1e-16);
        assert!((gumbel_kernel(0.0) - 0.30327).abs() < 1e-5);
        assert!(gumbel_kernel(20.0) <= 1e-15 && gumbel_kernel(-20.0) <= 1e-15);
        assert!(gumbel_kernel(-400.0) == 0.0 && gumbel_kernel(400.0) >= 0.0);
        let mass = integrate(gumbel_kernel, -30.0, 30.0, QuadOptions::rel(1e-13)).unwrap().value;
        assert!((mass - 0.5).abs() < 1e-8, "{mass}");
    }

    #[test]
    fn periodic_sum_properties() {
        // periods where θ + λT is exact, so the reduced residues coincide
        for lt in [0.375, 1.5, 4.0] {
            for k in -16..16 {
                let th = k as f64 / 8.0;
                assert_eq!(periodic_p(th + lt, lt).to_bits(), periodic_p(th, lt).to_bits(), "{lt} {th}");
            }
            let m = integrate(|t| periodic_p(t, lt), 0.0, lt, QuadOptions::rel(1e-13)).unwrap().value;
            assert!((m - 0.5).abs() < 1e-8, "{lt} {m}");
        }
        assert!((periodic_p(0.0, 40.0) - gumbel_kernel(0.0)).abs() <= 1e-15);
    }

    #[test]
    fn mode_moves_by_one_per_factor_e() {
        let cp = params();
        let cp_e = CyclingParams { eps: cp.eps / std::f64::consts::E, ..cp };
        // well past the transient, windows aligned with the shift
        let m1 = mode_in_period(&cp, 20.0).unwrap();
        let m2 = mode_in_period(&cp_e, 21.0).unwrap();
        assert!((m2 - m1 - 1.0).abs() < 1e-6, "{m1} {m2}");
    }

    #[test]
    fn envelope_decay_per_period() {
        let cp = CyclingParams::new(1.5, 1.0, 60.0, 0.0, 0.01).unwrap();
        let m1 = mode_in_period(&cp, 30.0).unwrap();
        let m2 = mode_in_period(&cp, 30.0 + cp.lambda_t()).unwrap();
        let ratio = exit_density(m2, &cp).unwrap() / exit_density(m1, &cp).unwrap();
        assert!((ratio / (-cp.lambda_t() / cp.lambda_tk()).exp() - 1.0).abs() < 1e-8, "{ratio}");
    }

    #[test]
    fn eps_enters_only_through_shift() {
        let cp = params();
        let cp_e = CyclingParams { eps: cp.eps * std::f64::consts::E, ..cp };
        for th in [2.0, 3.7, 9.1] {
            let a = p_factor(th, &cp);
            let b = p_factor(th - 1.0, &cp_e);
            assert!((a - b).abs() <= 1e-13 * a, "{a} {b}");
        }
    }

    #[test]
    fn density_domain_and_sign() {
        let cp = params();
        assert!(exit_density(cp.theta0, &cp).is_err());
        for i in 1..2000 {
            assert!(exit_density(cp.theta0 + i as f64 * 0.01, &cp).unwrap() >= 0.0);
        }
        assert!(CyclingParams::new(0.0, 1.0, 1.0, 0.0, 0.1).is_err());
        let custom = exit_density_with(2.0, &cp, &|_| 1.0).unwrap();
        assert!(custom > exit_density(2.0, &cp).unwrap());
    }

    #[test]
    fn fit_recovers_synthetic_parameters() {
        let truth = params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = sample_exit_angles(&truth, 100_000, &mut rng).unwrap();
        let hist = AngleHistogram::from_samples(&samples, truth.theta0, truth.theta0 + 40.0, 200).unwrap();
        let seed = CyclingParams::new(1.3, 1.0, 7.5, 0.8, 0.01).unwrap();
        let fit = fit_cycling(&hist, &seed).unwrap();
        let p = fit.params;
        assert!((p.lambda_t() / truth.lambda_t() - 1.0).abs() < 0.05, "{p:?}");
        assert!((p.lambda_tk() / truth.lambda_tk() - 1.0).abs() < 0.05, "{p:?}");
        assert!((p.theta0 / truth.theta0 - 1.0).abs() < 0.05, "{p:?}");
        assert!(!fit.poor_fit, "{fit:?}");

        // shifting the data by one period shifts θ₀ by λT
        let shifted: Vec<f64> = samples.iter().map(|s| s + truth.lambda_t()).collect();
        let hist2 = AngleHistogram::from_samples(
            &shifted,
            truth.theta0 + truth.lambda_t(),
            truth.theta0 + truth.lambda_t() + 40.0,
            200,
        )
        .unwrap();
        let seed2 = CyclingParams { theta0: seed.theta0 + truth.lambda_t(), ..seed };
        let fit2 = fit_cycling(&hist2, &seed2).unwrap();
        assert!((fit2.params.theta0 - p.theta0 - truth.lambda_t()).abs() < 1e-3, "{fit2:?}");
        assert!((fit2.params.lambda_t() / p.lambda_t() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn uniform_histogram_is_a_poor_fit() {
        let hist = AngleHistogram::new((0..=100).map(|i| i as f64 * 0.2).collect(), vec![500; 100]).unwrap();
        let seed = CyclingParams::new(1.5, 1.0, 6.0, -0.5, 0.01).unwrap();
        let fit = fit_cycling(&hist, &seed).unwrap();
        assert!(fit.poor_fit, "{fit:?}");
    }

    #[test]
    fn sparse_histogram_is_rejected() {
        let mut counts = vec![0u64; 50];
        counts[3] = 10;
        let hist = AngleHistogram::new((0..=50).map(|i| i as f64).collect(), counts).unwrap();
        assert!(fit_cycling(&hist, &params()).is_err());
    }
}
