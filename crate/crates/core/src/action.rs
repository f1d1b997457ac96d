//! Freidlin–Wentzell rate functional `I(φ) = ½∫‖φ̇ − f(φ)‖² dt` on uniformly
//! sampled paths, its gradient-case decomposition and action minimization.
//!
//! The functional is discretized by the midpoint rule and the descent uses
//! the exact gradient of that discrete sum, so there is no mismatch between
//! what is optimized and what is reported.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::linalg::solve_tridiagonal;
use crate::potential::Potential;
use crate::sde::{Drift, GradientDrift};

/// Points `φ_0 … φ_n` at spacing `dt`; `T = n·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub dt: f64,
    pub points: Vec<Vec<f64>>,
    pub endpoints_fixed: bool,
}

impl DiscretePath {
    pub fn new(dt: f64, points: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("path time step must be positive"));
        }
        if points.len() < 3 {
            return Err(Error::invalid("a path needs n >= 2 segments"));
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(Error::invalid("path points must share one nonzero dimension"));
        }
        Ok(Self { dt, points, endpoints_fixed: true })
    }

    /// Straight line from `start` to `end` over time `t` with `n` segments.
    pub fn linear(start: &[f64], end: &[f64], t: f64, n: usize) -> Result<Self> {
        if start.len() != end.len() {
            return Err(Error::invalid("endpoints differ in dimension"));
        }
        let pts = (0..=n)
            .map(|k| {
                let s = k as f64 / n as f64;
                start.iter().zip(end).map(|(a, b)| a + s * (b - a)).collect()
            })
            .collect();
        Self::new(t / n as f64, pts)
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.segments() as f64
    }

    /// CSV with columns `t, x0, x1, …`.
    pub fn to_csv(&self) -> CsvTable {
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim()).map(|i| format!("x{i}")));
        let mut table = CsvTable::new(header);
        for (k, p) in self.points.iter().enumerate() {
            let mut row = vec![k as f64 * self.dt];
            row.extend_from_slice(p);
            table.push_numbers(&row);
        }
        table
    }
}

fn check_dim(path: &DiscretePath, d: usize) -> Result<()> {
    if path.dim() != d {
        return Err(Error::invalid(format!("path has dimension {}, field has {d}", path.dim())));
    }
    Ok(())
}

/// Midpoint-rule action `½ Σ Δt ‖(φ_{k+1}−φ_k)/Δt − f(m_k)‖²`.
pub fn rate_functional(path: &DiscretePath, f: &dyn Drift) -> Result<f64> {
    check_dim(path, f.dim())?;
    let d = path.dim();
    let mut m = vec![0.0; d];
    let mut fm = vec![0.0; d];
    let mut total = 0.0;
    for w in path.points.windows(2) {
        for i in 0..d {
            m[i] = 0.5 * (w[0][i] + w[1][i]);
        }
        f.drift_into(&m, &mut fm);
        total += (0..d).map(|i| ((w[1][i] - w[0][i]) / path.dt - fm[i]).powi(2)).sum::<f64>();
    }
    Ok(0.5 * path.dt * total)
}

/// Both sides of `½∫‖φ̇+∇V‖² = ½∫‖φ̇−∇V‖² + 2[V(φ_T) − V(φ_0)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// The rate functional for `f = −∇V`.
    pub forward: f64,
    /// Same functional for the time-reversed field `+∇V`.
    pub reversed: f64,
    pub boundary: f64,
}

impl Decomposition {
    /// `forward − reversed − boundary`, zero up to O(Δt²).
    pub fn defect(&self) -> f64 {
        self.forward - self.reversed - self.boundary
    }
}

pub fn gradient_decomposition(path: &DiscretePath, p: &dyn Potential) -> Result<Decomposition> {
    check_dim(path, p.dim())?;
    let d = path.dim();
    let mut m = vec![0.0; d];
    let mut g = vec![0.0; d];
    let (mut fwd, mut rev) = (0.0, 0.0);
    for w in path.points.windows(2) {
        for i in 0..d {
            m[i] = 0.5 * (w[0][i] + w[1][i]);
        }
        p.gradient_into(&m, &mut g);
        for i in 0..d {
            let v = (w[1][i] - w[0][i]) / path.dt;
            fwd += (v + g[i]).powi(2);
            rev += (v - g[i]).powi(2);
        }
    }
    let first = &path.points[0];
    let last = &path.points[path.segments()];
    Ok(Decomposition {
        forward: 0.5 * path.dt * fwd,
        reversed: 0.5 * path.dt * rev,
        boundary: 2.0 * (p.value(last) - p.value(first)),
    })
}

/// Action and its gradient with respect to the interior nodes, flattened
/// node-major.
fn action_and_gradient(f: &dyn Drift, dt: f64, pts: &[f64], d: usize, grad: &mut [f64]) -> f64 {
    let nodes = pts.len() / d;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut m = vec![0.0; d];
    let mut fm = vec![0.0; d];
    let mut r = vec![0.0; d];
    let mut jr = vec![0.0; d];
    let mut total = 0.0;
    for k in 0..nodes - 1 {
        let (a, b) = (&pts[k * d..(k + 1) * d], &pts[(k + 1) * d..(k + 2) * d]);
        for i in 0..d {
            m[i] = 0.5 * (a[i] + b[i]);
        }
        f.drift_into(&m, &mut fm);
        for i in 0..d {
            r[i] = (b[i] - a[i]) / dt - fm[i];
        }
        total += r.iter().map(|v| v * v).sum::<f64>();
        f.jacobian_t_apply(&m, &r, &mut jr);
        // ∂/∂φ_k = −r − ½Δt·Jᵀr, ∂/∂φ_{k+1} = r − ½Δt·Jᵀr
        for i in 0..d {
            grad[k * d + i] += -r[i] - 0.5 * dt * jr[i];
            grad[(k + 1) * d + i] += r[i] - 0.5 * dt * jr[i];
        }
    }
    // endpoints are pinned
    grad[..d].iter_mut().for_each(|g| *g = 0.0);
    grad[(nodes - 1) * d..].iter_mut().for_each(|g| *g = 0.0);
    0.5 * dt * total
}

/// Gauss–Newton matrix of the residuals `r_k = (φ_{k+1}−φ_k)/Δt − f(m_k)`
/// restricted to interior nodes: block tridiagonal, `d × d` blocks.
struct GaussNewton {
    diag: Vec<DMatrix<f64>>,
    /// `upper[j]` couples interior node `j` to `j+1`.
    upper: Vec<DMatrix<f64>>,
}

impl GaussNewton {
    fn assemble(f: &dyn Drift, dt: f64, pts: &[f64], d: usize) -> Self {
        let nodes = pts.len() / d;
        let m_int = nodes - 2;
        let mut diag = vec![DMatrix::zeros(d, d); m_int];
        let mut upper = vec![DMatrix::zeros(d, d); m_int.saturating_sub(1)];
        let mut m = vec![0.0; d];
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for k in 0..nodes - 1 {
            for i in 0..d {
                m[i] = 0.5 * (pts[k * d + i] + pts[(k + 1) * d + i]);
            }
            // Jᵀ column by column, then the two residual Jacobians
            let mut jt = DMatrix::zeros(d, d);
            for j in 0..d {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[j] = 1.0;
                f.jacobian_t_apply(&m, &e, &mut col);
                for i in 0..d {
                    jt[(i, j)] = col[i];
                }
            }
            let jac = jt.transpose();
            let eye = DMatrix::<f64>::identity(d, d) / dt;
            let a = -&eye - 0.5 * &jac;
            let b = &eye - 0.5 * &jac;
            // interior index of node k is k-1
            if k >= 1 {
                diag[k - 1] += dt * a.transpose() * &a;
            }
            if k + 1 <= m_int {
                diag[k] += dt * b.transpose() * &b;
            }
            if k >= 1 && k + 1 <= m_int {
                upper[k - 1] += dt * a.transpose() * &b;
            }
        }
        // tiny shift keeps the factorization safe along near-null modes
        for blk in &mut diag {
            for i in 0..d {
                blk[(i, i)] += 1e-12 / dt;
            }
        }
        Self { diag, upper }
    }

    /// Solve for interior nodes; pinned endpoints get zero. Falls back to
    /// the kinetic (free-particle) part if a block is not invertible.
    fn solve(&self, g: &[f64], d: usize, out: &mut [f64]) -> bool {
        let m = self.diag.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut dp: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        let mut rp: Vec<DVector<f64>> = Vec::with_capacity(m);
        for j in 0..m {
            let mut dj = self.diag[j].clone();
            let mut rj = DVector::from_column_slice(&g[(j + 1) * d..(j + 2) * d]);
            if j > 0 {
                let u = &self.upper[j - 1];
                let Some(inv) = dp[j - 1].clone().try_inverse() else { return false };
                let ut_inv = u.transpose() * inv;
                dj -= &ut_inv * u;
                rj -= &ut_inv * &rp[j - 1];
            }
            dp.push(dj);
            rp.push(rj);
        }
        let mut next: Option<DVector<f64>> = None;
        for j in (0..m).rev() {
            let mut rhs = rp[j].clone();
            if let Some(x) = &next {
                rhs -= &self.upper[j] * x;
            }
            let Some(x) = dp[j].clone().lu().solve(&rhs) else { return false };
            out[(j + 1) * d..(j + 2) * d].copy_from_slice(x.as_slice());
            next = Some(x);
        }
        out.iter().all(|v| v.is_finite())
    }
}

/// Inverse of the kinetic Hessian `(1/Δt)·tridiag(−1, 2, −1)`, per component.
fn kinetic_solve(g: &[f64], d: usize, dt: f64, out: &mut [f64]) {
    let nodes = g.len() / d;
    let m = nodes - 2;
    out.iter_mut().for_each(|v| *v = 0.0);
    let off = vec![-1.0 / dt; m.saturating_sub(1)];
    let diag = vec![2.0 / dt; m];
    for c in 0..d {
        let rhs: Vec<f64> = (1..nodes - 1).map(|k| g[k * d + c]).collect();
        // the Laplacian is nonsingular, Thomas cannot hit a zero pivot
        let sol = solve_tridiagonal(&off, &diag, &off, &rhs).expect("kinetic preconditioner");
        for (j, v) in sol.into_iter().enumerate() {
            out[(j + 1) * d + c] = v;
        }
    }
}

/// Stopping rule and memory of the path descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub memory: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-8, max_iter: 20_000, memory: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMinimum {
    pub path: DiscretePath,
    pub action: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize the action over interior nodes at fixed `T`, starting from
/// `init`. Limited-memory quasi-Newton descent whose initial inverse Hessian
/// is the Gauss–Newton matrix of the path residuals; Armijo backtracking.
///
/// Hitting the iteration cap is not an error: the best path is returned with
/// `converged = false`.
pub fn minimize_path(f: &dyn Drift, init: &DiscretePath, opts: &DescentOptions) -> Result<PathMinimum> {
    check_dim(init, f.dim())?;
    let d = init.dim();
    let dt = init.dt;
    let mut x: Vec<f64> = init.points.iter().flatten().copied().collect();
    let len = x.len();
    let mut g = vec![0.0; len];
    let mut val = action_and_gradient(f, dt, &x, d, &mut g);
    let mut hist_s: Vec<Vec<f64>> = Vec::new();
    let mut hist_y: Vec<Vec<f64>> = Vec::new();
    let mut dir = vec![0.0; len];
    let mut trial = vec![0.0; len];
    let mut g_new = vec![0.0; len];
    let mut gnorm = norm(&g);
    let mut iterations = 0;
    while gnorm > opts.grad_tol && iterations < opts.max_iter {
        iterations += 1;
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist_s.len());
        for (s, y) in hist_s.iter().zip(&hist_y).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((a, rho));
        }
        let gn = GaussNewton::assemble(f, dt, &x, d);
        if !gn.solve(&q, d, &mut dir) {
            kinetic_solve(&q, d, dt, &mut dir);
        }
        for ((s, y), (a, rho)) in hist_s.iter().zip(&hist_y).zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        let mut slope = -dot(&g, &dir);
        if slope >= 0.0 {
            // lost descent: restart from the preconditioned gradient
            hist_s.clear();
            hist_y.clear();
            if !gn.solve(&g, d, &mut dir) {
                kinetic_solve(&g, d, dt, &mut dir);
            }
            slope = -dot(&g, &dir);
        }
        dir.iter_mut().for_each(|v| *v = -*v);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..len {
                trial[i] = x[i] + step * dir[i];
            }
            let v = action_and_gradient(f, dt, &trial, d, &mut g_new);
            if v.is_finite() && v <= val - 1e-4 * step * slope {
                let s: Vec<f64> = (0..len).map(|i| trial[i] - x[i]).collect();
                let y: Vec<f64> = (0..len).map(|i| g_new[i] - g[i]).collect();
                if dot(&s, &y) > 1e-300 {
                    hist_s.push(s);
                    hist_y.push(y);
                    if hist_s.len() > opts.memory {
                        hist_s.remove(0);
                        hist_y.remove(0);
                    }
                }
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut g, &mut g_new);
                val = v;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        gnorm = norm(&g);
        if !accepted {
            // no decrease representable at this precision
            break;
        }
    }
    let points = x.chunks(d).map(|c| c.to_vec()).collect();
    Ok(PathMinimum {
        path: DiscretePath { dt, points, endpoints_fixed: true },
        action: val,
        grad_norm: gnorm,
        iterations,
        converged: gnorm <= opts.grad_tol,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outer search over the horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionOptions {
    pub segments: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// Golden-section stopping width in `log T`.
    pub log_t_tol: f64,
    pub descent: DescentOptions,
}

impl Default for ActionOptions {
    fn default() -> Self {
        Self { segments: 400, t_min: 5.0, t_max: 200.0, log_t_tol: 1e-3, descent: DescentOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: f64,
    pub action: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResult {
    pub path: DiscretePath,
    pub action: f64,
    pub t_opt: f64,
    /// Every inner solve converged.
    pub converged: bool,
    /// Optimum sits at the upper end of the bracket: the infimum over `T`
    /// is not attained inside it and the value carries a bracket bias.
    pub at_upper_bracket: bool,
    pub trace: Vec<TraceEntry>,
}

/// Minimize `I` over paths from `start` to `end` and over `T` in
/// `[t_min, t_max]` (golden section in `log T`). `init` is rescaled to each
/// trial `T` by keeping its nodes; default is the straight line.
pub fn minimize_action(
    f: &dyn Drift,
    start: &[f64],
    end: &[f64],
    init: Option<&DiscretePath>,
    opts: &ActionOptions,
) -> Result<ActionResult> {
    if start.len() != f.dim() || end.len() != f.dim() {
        return Err(Error::invalid("endpoint dimension does not match the drift"));
    }
    if start == end {
        return Err(Error::invalid("endpoints must be distinct"));
    }
    if !(opts.t_min > 0.0 && opts.t_max > opts.t_min) {
        return Err(Error::invalid("T bracket must satisfy 0 < t_min < t_max"));
    }
    if opts.segments < 2 {
        return Err(Error::invalid("a path needs n >= 2 segments"));
    }
    let mut shape = match init {
        Some(p) => {
            let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            if p.dim() != start.len()
                || p.segments() != opts.segments
                || !close(&p.points[0], start)
                || !close(&p.points[p.segments()], end)
            {
                return Err(Error::invalid("initial path must match the endpoints and segment count"));
            }
            let mut pts = p.points.clone();
            pts[0] = start.to_vec();
            pts[opts.segments] = end.to_vec();
            pts
        }
        None => DiscretePath::linear(start, end, 1.0, opts.segments)?.points,
    };
    let mut trace = Vec::new();
    let mut best: Option<PathMinimum> = None;
    let mut best_t = opts.t_min;
    let mut all_converged = true;
    let mut eval = |log_t: f64, shape: &mut Vec<Vec<f64>>| -> Result<f64> {
        let t = log_t.exp();
        let p = DiscretePath::new(t / opts.segments as f64, shape.clone())?;
        let m = minimize_path(f, &p, &opts.descent)?;
        trace.push(TraceEntry {
            t,
            action: m.action,
            iterations: m.iterations,
            grad_norm: m.grad_norm,
            converged: m.converged,
        });
        all_converged &= m.converged;
        let v = m.action;
        if best.as_ref().is_none_or(|b| v < b.action) {
            *shape = m.path.points.clone();
            best_t = t;
            best = Some(m);
        }
        Ok(v)
    };
    const INV_PHI: f64 = 0.618_033_988_749_895;
    let (mut a, mut b) = (opts.t_min.ln(), opts.t_max.ln());
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c, &mut shape)?;
    let mut fd = eval(d, &mut shape)?;
    while b - a > opts.log_t_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c, &mut shape)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d, &mut shape)?;
        }
    }
    // the infimum is typically approached at the cap, so look there too
    eval(opts.t_max.ln(), &mut shape)?;
    let best = best.expect("at least one evaluation");
    Ok(ActionResult {
        path: best.path,
        action: best.action,
        t_opt: best_t,
        converged: all_converged,
        at_upper_bracket: best_t >= opts.t_max * (1.0 - 1e-9) || (opts.t_max / best_t).ln() <= opts.log_t_tol,
        trace,
    })
}

/// Gradient case convenience wrapper for `minimize_action`.
pub fn minimize_action_potential(
    p: &dyn Potential,
    start: &[f64],
    end: &[f64],
    opts: &ActionOptions,
) -> Result<ActionResult> {
    minimize_action(&GradientDrift(p), start, end, None, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitQuasipotential {
    /// `2·(min_{∂D} V − V(x⋆))`.
    pub value: f64,
    pub boundary_argmin: Vec<f64>,
}

/// Quasipotential of the exit problem from `x_star` through the sampled
/// boundary points.
pub fn quasipotential_exit(p: &dyn Potential, x_star: &[f64], boundary: &[Vec<f64>]) -> Result<ExitQuasipotential> {
    if x_star.len() != p.dim() || boundary.iter().any(|b| b.len() != p.dim()) {
        return Err(Error::invalid("boundary samples must match the potential's dimension"));
    }
    let (arg, vmin) = boundary
        .iter()
        .map(|b| (b, p.value(b)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::invalid("no boundary samples"))?;
    Ok(ExitQuasipotential { value: 2.0 * (vmin - p.value(x_star)), boundary_argmin: arg.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_builtin, PotentialParams};
    use crate::sde::LinearDrift;

    fn builtin(name: &str) -> crate::SharedPotential {
        make_builtin(&PotentialParams::new(name)).unwrap()
    }

    fn rk4_path(f: &dyn Drift, x0: &[f64], dt: f64, n: usize) -> DiscretePath {
        let d = x0.len();
        let mut pts = vec![x0.to_vec()];
        let mut k = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
        for _ in 0..n {
            let x = pts.last().unwrap().clone();
            f.drift_into(&x, &mut k[0]);
            let y: Vec<f64> = (0..d).map(|i| x[i] + 0.5 * dt * k[0][i]).collect();
            f.drift_into(&y, &mut k[1]);
            let y: Vec<f64> = (0..d).map(|i| x[i] + 0.5 * dt * k[1][i]).collect();
            f.drift_into(&y, &mut k[2]);
            let y: Vec<f64> = (0..d).map(|i| x[i] + dt * k[2][i]).collect();
            f.drift_into(&y, &mut k[3]);
            pts.push((0..d).map(|i| x[i] + dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i])).collect());
        }
        DiscretePath::new(dt, pts).unwrap()
    }

    #[test]
    fn deterministic_orbit_has_small_action() {
        let p = builtin("quartic1d");
        let f = GradientDrift(p.as_ref());
        let coarse = rate_functional(&rk4_path(&f, &[0.1], 0.02, 250), &f).unwrap();
        let fine = rate_functional(&rk4_path(&f, &[0.1], 0.01, 500), &f).unwrap();
        // residual of an exact orbit is O(Δt²) per step, so I is at least that small
        assert!(coarse < 1e-5, "{coarse}");
        assert!(coarse / fine > 3.9, "{coarse} {fine}");
    }

    #[test]
    fn constant_and_free_paths() {
        let p = builtin("quartic1d");
        let f = GradientDrift(p.as_ref());
        let x = 0.5;
        let path = DiscretePath::new(0.1, vec![vec![x]; 31]).unwrap();
        let g = x * x * x - x;
        assert!((rate_functional(&path, &f).unwrap() - 0.5 * 3.0 * g * g).abs() < 1e-14);

        let zero = LinearDrift { dim: 2, matrix: vec![0.0; 4] };
        let line = DiscretePath::linear(&[0.0, 0.0], &[3.0, 4.0], 2.0, 17).unwrap();
        assert!((rate_functional(&line, &zero).unwrap() - 25.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn decomposition_identity_second_order() {
        let p = builtin("quartic1d");
        let path = |n: usize| {
            let pts = (0..=n)
                .map(|k| {
                    let s = k as f64 / n as f64;
                    vec![-1.0 + 1.3 * s + 0.4 * (3.0 * s).sin()]
                })
                .collect();
            DiscretePath::new(2.0 / n as f64, pts).unwrap()
        };
        let d1 = gradient_decomposition(&path(50), p.as_ref()).unwrap().defect().abs();
        let d2 = gradient_decomposition(&path(100), p.as_ref()).unwrap().defect().abs();
        assert!(d1 < 1e-3 && (d1 / d2 - 4.0).abs() < 0.2, "{d1} {d2}");
        let dec = gradient_decomposition(&path(100), p.as_ref()).unwrap();
        let direct = rate_functional(&path(100), &GradientDrift(p.as_ref())).unwrap();
        assert!((dec.forward - direct).abs() < 1e-12);
    }

    #[test]
    fn closed_loop_has_no_boundary_term() {
        let p = builtin("doublewell2d");
        let n = 64;
        let pts = (0..=n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                vec![0.5 * a.cos(), 0.3 * a.sin()]
            })
            .collect();
        let dec = gradient_decomposition(&DiscretePath::new(0.05, pts).unwrap(), p.as_ref()).unwrap();
        assert!(dec.boundary.abs() < 1e-15);
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let p = builtin("doublewell2d");
        let f = GradientDrift(p.as_ref());
        let lin = LinearDrift { dim: 2, matrix: vec![-1.0, 0.5, -0.3, -2.0] };
        let n = 12;
        let pts: Vec<f64> = (0..=n).flat_map(|k| {
            let s = k as f64 / n as f64;
            [-1.0 + s + 0.2 * (5.0 * s).sin(), 0.3 * (2.0 * s).cos()]
        }).collect();
        for drift in [&f as &dyn Drift, &lin] {
            let mut g = vec![0.0; pts.len()];
            action_and_gradient(drift, 0.2, &pts, 2, &mut g);
            let mut scratch = vec![0.0; pts.len()];
            for j in 2..pts.len() - 2 {
                let h = 1e-6;
                let mut xp = pts.clone();
                xp[j] += h;
                let fp = action_and_gradient(drift, 0.2, &xp, 2, &mut scratch);
                xp[j] -= 2.0 * h;
                let fm = action_and_gradient(drift, 0.2, &xp, 2, &mut scratch);
                assert!((g[j] - (fp - fm) / (2.0 * h)).abs() < 1e-7, "{j}");
            }
        }
    }

    #[test]
    fn fixed_horizon_descent_converges() {
        let p = builtin("quartic1d");
        let f = GradientDrift(p.as_ref());
        let init = DiscretePath::linear(&[-1.0], &[0.0], 20.0, 200).unwrap();
        let m = minimize_path(&f, &init, &DescentOptions::default()).unwrap();
        assert!(m.converged, "{}", m.grad_norm);
        assert!(m.action > 0.5 - 1e-3 && m.action < 0.6, "{}", m.action);
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let p = builtin("quartic1d");
        let f = GradientDrift(p.as_ref());
        let init = DiscretePath::linear(&[-1.0], &[0.0], 50.0, 200).unwrap();
        let m = minimize_path(&f, &init, &DescentOptions { max_iter: 2, ..Default::default() }).unwrap();
        assert!(!m.converged && m.iterations == 2);
    }

    #[test]
    fn well_to_saddle_action_and_refinement() {
        let p = builtin("quartic1d");
        let run = |n| {
            let opts = ActionOptions { segments: n, ..Default::default() };
            minimize_action_potential(p.as_ref(), &[-1.0], &[0.0], &opts).unwrap()
        };
        let r400 = run(400);
        let r100 = run(100);
        assert!(r400.converged);
        let e400 = (r400.action / 0.5 - 1.0).abs();
        let e100 = (r100.action / 0.5 - 1.0).abs();
        assert!(e400 < 0.02, "{}", r400.action);
        assert!(e400 < e100, "{e100} {e400}");
    }

    #[test]
    fn well_to_saddle_in_two_dimensions() {
        let p = builtin("doublewell2d");
        // start off the axis so the descent has to find the straight route
        let init = DiscretePath::new(
            0.05,
            (0..=200)
                .map(|k| {
                    let s = k as f64 / 200.0;
                    vec![-1.0 + s, 0.4 * (std::f64::consts::PI * s).sin()]
                })
                .collect(),
        )
        .unwrap();
        let opts = ActionOptions { segments: 200, ..Default::default() };
        let r = minimize_action(&GradientDrift(p.as_ref()), &[-1.0, 0.0], &[0.0, 0.0], Some(&init), &opts).unwrap();
        assert!(r.converged);
        assert!((r.action / 0.5 - 1.0).abs() < 0.05, "{}", r.action);
        let pts = &r.path.points;
        let mut angles = Vec::new();
        for k in 1..pts.len() - 1 {
            if pts[k][0] > -0.9 && pts[k][0] < -0.1 {
                let v = [pts[k + 1][0] - pts[k - 1][0], pts[k + 1][1] - pts[k - 1][1]];
                let g = p.gradient(&pts[k]);
                let c = (v[0] * g[0] + v[1] * g[1]) / ((v[0].hypot(v[1])) * g[0].hypot(g[1]));
                angles.push(c.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        let mean = angles.iter().sum::<f64>() / angles.len() as f64;
        assert!(mean < 10.0, "{mean}");
    }

    #[test]
    fn minimizer_follows_reversed_flow() {
        let p = builtin("quartic1d");
        let r = minimize_action_potential(p.as_ref(), &[-1.0], &[0.0], &ActionOptions::default()).unwrap();
        let pts = &r.path.points;
        // interior uphill stretch: velocity parallel to +∇V
        let mut cos_sum = 0.0;
        let mut count = 0;
        for k in 1..pts.len() - 1 {
            let x = pts[k][0];
            if x > -0.9 && x < -0.1 {
                let v = (pts[k + 1][0] - pts[k - 1][0]) / (2.0 * r.path.dt);
                let g = p.gradient(&[x])[0];
                cos_sum += (v * g).signum();
                count += 1;
            }
        }
        assert!(count > 10);
        assert_eq!(cos_sum, count as f64);
    }

    #[test]
    fn downhill_connection_is_cheap() {
        let p = builtin("quartic1d");
        let r = minimize_action_potential(p.as_ref(), &[-0.5], &[-1.0 + 1e-3], &ActionOptions {
            segments: 200,
            ..Default::default()
        })
        .unwrap();
        assert!(r.action < 1e-2, "{}", r.action);
    }

    #[test]
    fn exit_quasipotential_values() {
        let p = builtin("quartic1d");
        let q = quasipotential_exit(p.as_ref(), &[-1.0], &[vec![0.0]]).unwrap();
        assert!((q.value - 0.5).abs() < 1e-15);
        let p2 = builtin("doublewell2d");
        let n = 400;
        let mut boundary = Vec::new();
        for k in 0..=n {
            let s = -1.5 + 3.0 * k as f64 / n as f64;
            boundary.push(vec![0.0, s]);
            boundary.push(vec![-2.0, s]);
            boundary.push(vec![-2.0 + 2.0 * (s + 1.5) / 3.0, 1.5]);
            boundary.push(vec![-2.0 + 2.0 * (s + 1.5) / 3.0, -1.5]);
        }
        let q = quasipotential_exit(p2.as_ref(), &[-1.0, 0.0], &boundary).unwrap();
        assert!((q.value - 0.5).abs() < 1e-12);
        assert_eq!(q.boundary_argmin, vec![0.0, 0.0]);
        assert!(quasipotential_exit(p.as_ref(), &[-1.0], &[]).is_err());
    }

    #[test]
    fn path_csv_layout() {
        let path = DiscretePath::linear(&[0.0, 1.0], &[1.0, 1.0], 1.0, 4).unwrap();
        let csv = path.to_csv().render();
        assert!(csv.starts_with("t,x0,x1\n"));
        assert_eq!(csv.lines().count(), 6);
    }
}
