//! Grid solvers for the committor (equilibrium potential), capacities,
//! potential-theoretic mean times and generator spectra.
//!
//! The generator `L = εΔ − ∇V·∇` is assembled in divergence form
//! `ε e^{V/ε} ∇·(e^{−V/ε} ∇)` with edge weights `e^{−V(midpoint)/ε}`. The
//! resulting matrix is symmetric after eliminating Dirichlet nodes and obeys
//! the discrete maximum principle at any Péclet number. The raw advection
//! form is kept in [`committor_advective_1d`] for consistency checks.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_f64_array;
use crate::landscape::{BoxDomain, CriticalPoint};
use crate::linalg::{pcg, solve_tridiagonal, Csr};
use crate::potential::Potential;

/// Probability that the simple random walk on `{a, …, b}` started at `x`
/// reaches `a` before `b`, from the discrete Laplace equation.
pub fn walk_committor(a: i64, b: i64, x: i64) -> Result<f64> {
    if !(a < b) || x < a || x > b {
        return Err(Error::invalid(format!("need a <= x <= b and a < b, got ({a}, {b}, {x})")));
    }
    let n = (b - a + 1) as usize;
    let (lower, upper, diag, rhs) = walk_system(n, |i| if i == 0 { Some(1.0) } else if i == n - 1 { Some(0.0) } else { None }, 0.0);
    let h = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    Ok(h[(x - a) as usize])
}

/// Expected exit time of the simple random walk from `{1, …, N−1}`:
/// `½Δw = −1`, `w(0) = w(N) = 0`.
pub fn walk_mean_time(n_max: i64, x: i64) -> Result<f64> {
    if n_max < 1 || x < 0 || x > n_max {
        return Err(Error::invalid(format!("need 0 <= x <= N, got N={n_max}, x={x}")));
    }
    let n = (n_max + 1) as usize;
    let (lower, upper, diag, rhs) = walk_system(n, |i| (i == 0 || i == n - 1).then_some(0.0), -1.0);
    let w = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    Ok(w[x as usize])
}

type Tridiagonal = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

fn walk_system(n: usize, boundary: impl Fn(usize) -> Option<f64>, source: f64) -> Tridiagonal {
    let mut lower = vec![0.0; n.saturating_sub(1)];
    let mut upper = vec![0.0; n.saturating_sub(1)];
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        match boundary(i) {
            Some(v) => {
                diag[i] = 1.0;
                rhs[i] = v;
            }
            None => {
                diag[i] = -1.0;
                lower[i - 1] = 0.5;
                upper[i] = 0.5;
                rhs[i] = source;
            }
        }
    }
    (lower, upper, diag, rhs)
}

/// Sets used as Dirichlet data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// `|x − center| ≤ radius`
    Ball { center: Vec<f64>, radius: f64 },
    /// `|x − center| ≥ radius`
    Outside { center: Vec<f64>, radius: f64 },
    /// `x[axis] ≤ value`
    Below { axis: usize, value: f64 },
    /// `x[axis] ≥ value`
    Above { axis: usize, value: f64 },
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        let dist = |c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        match self {
            Region::Ball { center, radius } => dist(center) <= *radius,
            Region::Outside { center, radius } => dist(center) >= *radius,
            Region::Below { axis, value } => x[*axis] <= *value,
            Region::Above { axis, value } => x[*axis] >= *value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Interior,
    InA,
    InB,
}

/// Values on a rectangular lattice of nodes, row-major with axis 0 fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nodes: Vec<usize>,
    pub spacing: Vec<f64>,
    pub values: Vec<f64>,
    pub labels: Vec<Label>,
    pub eps: f64,
    /// Potential at the nodes.
    pub potential: Vec<f64>,
    /// Shift used in every Boltzmann weight: `w = e^{−(V − shift)/ε}`.
    pub shift: f64,
    /// Relative residual of the linear solve.
    pub residual: f64,
}

impl GridField {
    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn coords(&self, mut idx: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            x.push(self.lower[k] + self.spacing[k] * (idx % self.nodes[k]) as f64);
            idx /= self.nodes[k];
        }
        x
    }

    /// Multilinear interpolation; `None` outside the box.
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        let d = self.dim();
        let mut base = 0usize;
        let mut stride = 1usize;
        let mut frac = Vec::with_capacity(d);
        let mut strides = Vec::with_capacity(d);
        for k in 0..d {
            let t = (x[k] - self.lower[k]) / self.spacing[k];
            if !(t >= 0.0 && t <= (self.nodes[k] - 1) as f64) {
                return None;
            }
            let i = (t.floor() as usize).min(self.nodes[k] - 2);
            frac.push(t - i as f64);
            base += i * stride;
            strides.push(stride);
            stride *= self.nodes[k];
        }
        let mut v = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = base;
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    idx += strides[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            v += w * self.values[idx];
        }
        Some(v)
    }

    fn neighbors(&self, idx: usize, mut visit: impl FnMut(usize, usize)) {
        // calls visit(axis, neighbor) for the +1 neighbor along each axis
        let mut stride = 1usize;
        let mut rem = idx;
        for k in 0..self.dim() {
            let i = rem % self.nodes[k];
            rem /= self.nodes[k];
            if i + 1 < self.nodes[k] {
                visit(k, idx + stride);
            }
            stride *= self.nodes[k];
        }
    }

    /// Persist values as a binary array; the sidecar carries extents,
    /// spacing and run-length encoded labels `[[label, count], …]`.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut runs: Vec<(Label, usize)> = Vec::new();
        for &l in &self.labels {
            match runs.last_mut() {
                Some((last, n)) if *last == l => *n += 1,
                _ => runs.push((l, 1)),
            }
        }
        let shape: Vec<usize> = self.nodes.iter().rev().copied().collect();
        let meta = serde_json::json!({
            "lower": self.lower,
            "upper": self.upper,
            "spacing": self.spacing,
            "eps": self.eps,
            "labels_rle": runs,
        });
        write_f64_array(path, &self.values, &shape, meta)
    }
}

struct Lattice {
    lower: Vec<f64>,
    upper: Vec<f64>,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
}

impl Lattice {
    fn new(domain: &BoxDomain, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::invalid("grid spacing must be positive"));
        }
        let mut nodes = Vec::new();
        let mut spacing = Vec::new();
        for k in 0..domain.dim() {
            let len = domain.upper[k] - domain.lower[k];
            let n = ((len / h).round() as usize).max(2) + 1;
            nodes.push(n);
            spacing.push(len / (n - 1) as f64);
        }
        Ok(Lattice {
            lower: domain.lower.clone(),
            upper: domain.upper.clone(),
            nodes,
            spacing,
        })
    }

    fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    fn coords(&self, mut idx: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.nodes.len());
        for k in 0..self.nodes.len() {
            x.push(self.lower[k] + self.spacing[k] * (idx % self.nodes[k]) as f64);
            idx /= self.nodes[k];
        }
        x
    }
}

/// Edge list `(i, j, axis, V(midpoint))` over +1 neighbors.
fn edges(p: &dyn Potential, lat: &Lattice) -> Vec<(usize, usize, usize, f64)> {
    let mut out = Vec::with_capacity(lat.len() * lat.nodes.len());
    let d = lat.nodes.len();
    for idx in 0..lat.len() {
        let x = lat.coords(idx);
        let mut stride = 1usize;
        let mut rem = idx;
        for k in 0..d {
            let i = rem % lat.nodes[k];
            rem /= lat.nodes[k];
            if i + 1 < lat.nodes[k] {
                let mut mid = x.clone();
                mid[k] += 0.5 * lat.spacing[k];
                out.push((idx, idx + stride, k, p.value(&mid)));
            }
            stride *= lat.nodes[k];
        }
    }
    out
}

/// Boltzmann weight with the exponent clamped so that it never underflows
/// to an exact zero (which would disconnect the graph).
fn weight(v: f64, shift: f64, eps: f64) -> f64 {
    (-((v - shift) / eps).min(700.0)).exp()
}

/// Solve `ε∇·(e^{−V/ε}∇h) = 0` with `h = 1` on `A`, `h = 0` on `B` and
/// reflecting conditions on the rest of the box boundary; `d ∈ {1, 2}`.
pub fn committor_grid(
    p: &dyn Potential,
    domain: &BoxDomain,
    a_set: &Region,
    b_set: &Region,
    eps: f64,
    h: f64,
) -> Result<GridField> {
    let d = p.dim();
    if !(d == 1 || d == 2) || domain.dim() != d {
        return Err(Error::invalid("grid committor supports d = 1 and d = 2"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let lat = Lattice::new(domain, h)?;
    let n = lat.len();
    let mut labels = Vec::with_capacity(n);
    let mut potential = Vec::with_capacity(n);
    for idx in 0..n {
        let x = lat.coords(idx);
        let (in_a, in_b) = (a_set.contains(&x), b_set.contains(&x));
        if in_a && in_b {
            return Err(Error::invalid(format!("sets A and B overlap at {x:?}")));
        }
        labels.push(if in_a {
            Label::InA
        } else if in_b {
            Label::InB
        } else {
            Label::Interior
        });
        potential.push(p.value(&x));
    }
    if !labels.contains(&Label::InA) || !labels.contains(&Label::InB) {
        return Err(Error::invalid("set A or B contains no grid node"));
    }
    let edge_list = edges(p, &lat);
    let shift = edge_list.iter().map(|e| e.3).fold(f64::INFINITY, f64::min);
    let dirichlet = |l: Label| match l {
        Label::InA => Some(1.0),
        Label::InB => Some(0.0),
        Label::Interior => None,
    };
    let mut values: Vec<f64> = labels.iter().map(|&l| dirichlet(l).unwrap_or(0.0)).collect();
    let residual;
    if d == 1 {
        let mut lower = vec![0.0; n - 1];
        let mut upper = vec![0.0; n - 1];
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for (i, &l) in labels.iter().enumerate() {
            if let Some(v) = dirichlet(l) {
                diag[i] = 1.0;
                rhs[i] = v;
            }
        }
        let h2 = lat.spacing[0] * lat.spacing[0];
        for &(i, j, _, vm) in &edge_list {
            let c = weight(vm, shift, eps) / h2;
            if labels[i] == Label::Interior {
                diag[i] += c;
                upper[i] = -c;
            }
            if labels[j] == Label::Interior {
                diag[j] += c;
                lower[i] = -c;
            }
        }
        values = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        // residual of the interior equations relative to the coupling scale
        let mut num = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..n {
            if labels[i] != Label::Interior {
                continue;
            }
            let mut r = diag[i] * values[i];
            if i > 0 {
                r += lower[i - 1] * values[i - 1];
            }
            if i + 1 < n {
                r += upper[i] * values[i + 1];
            }
            num = num.max((r - rhs[i]).abs());
            scale = scale.max(diag[i].abs());
        }
        residual = if scale > 0.0 { num / scale } else { 0.0 };
    } else {
        let mut unknown = vec![usize::MAX; n];
        let mut count = 0;
        for i in 0..n {
            if labels[i] == Label::Interior {
                unknown[i] = count;
                count += 1;
            }
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(5); count];
        let mut rhs = vec![0.0; count];
        for &(i, j, k, vm) in &edge_list {
            let c = weight(vm, shift, eps) / (lat.spacing[k] * lat.spacing[k]);
            for (a, b) in [(i, j), (j, i)] {
                if labels[a] != Label::Interior {
                    continue;
                }
                let ua = unknown[a];
                rows[ua].push((ua, c));
                match dirichlet(labels[b]) {
                    Some(g) => rhs[ua] += c * g,
                    None => rows[ua].push((unknown[b], -c)),
                }
            }
        }
        let mat = Csr::from_rows(rows);
        // start from the linear interpolant in the first coordinate-free guess: 1/2
        let mut x = vec![0.5; count];
        let rep = pcg(&mat, &rhs, &mut x, 1e-12, 50 * count.max(100))?;
        residual = rep.relative_residual;
        for i in 0..n {
            if unknown[i] != usize::MAX {
                values[i] = x[unknown[i]];
            }
        }
    }
    Ok(GridField {
        lower: lat.lower,
        upper: lat.upper,
        nodes: lat.nodes,
        spacing: lat.spacing,
        values,
        labels,
        eps,
        potential,
        shift,
        residual,
    })
}

/// Raw advection form `εh″ − V′h′ = 0` on a 1D grid: central differences,
/// switching to upwinding where the cell Péclet number `|V′|h/ε` exceeds 2.
pub fn committor_advective_1d(
    p: &dyn Potential,
    lower: f64,
    upper: f64,
    h: f64,
    a_set: &Region,
    b_set: &Region,
    eps: f64,
) -> Result<GridField> {
    if p.dim() != 1 {
        return Err(Error::invalid("advective committor is one-dimensional"));
    }
    let lat = Lattice::new(&BoxDomain::new(vec![lower], vec![upper])?, h)?;
    let n = lat.len();
    let dx = lat.spacing[0];
    let mut lo = vec![0.0; n - 1];
    let mut up = vec![0.0; n - 1];
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut labels = Vec::with_capacity(n);
    let mut potential = Vec::with_capacity(n);
    for i in 0..n {
        let x = lat.coords(i);
        potential.push(p.value(&x));
        let label = if a_set.contains(&x) {
            Label::InA
        } else if b_set.contains(&x) {
            Label::InB
        } else {
            Label::Interior
        };
        labels.push(label);
        match label {
            Label::InA | Label::InB => {
                diag[i] = 1.0;
                rhs[i] = if label == Label::InA { 1.0 } else { 0.0 };
            }
            Label::Interior => {
                let b = -p.gradient(&x)[0];
                // reflecting ends mirror the missing neighbor
                let (il, ir) = (if i == 0 { 1 } else { i - 1 }, if i + 1 == n { n - 2 } else { i + 1 });
                let mut cl = eps / (dx * dx);
                let mut cr = eps / (dx * dx);
                if b.abs() * dx / eps > 2.0 {
                    if b > 0.0 {
                        cr += b / dx;
                    } else {
                        cl -= b / dx;
                    }
                } else {
                    cr += b / (2.0 * dx);
                    cl -= b / (2.0 * dx);
                }
                diag[i] = -(cl + cr);
                let mut add = |j: usize, c: f64| {
                    if j + 1 == i {
                        lo[j] += c;
                    } else if j == i + 1 {
                        up[i] += c;
                    }
                };
                add(il, cl);
                add(ir, cr);
            }
        }
    }
    if !labels.contains(&Label::InA) || !labels.contains(&Label::InB) {
        return Err(Error::invalid("set A or B contains no grid node"));
    }
    let values = solve_tridiagonal(&lo, &diag, &up, &rhs)?;
    Ok(GridField {
        lower: lat.lower,
        upper: lat.upper,
        nodes: lat.nodes,
        spacing: lat.spacing,
        values,
        labels,
        eps,
        potential,
        shift: 0.0,
        residual: 0.0,
    })
}

/// `ε Σ_edges e^{−V(mid)/ε} ((h_j − h_i)/Δ)² · cell volume`, the discrete
/// Dirichlet form of the field. Returned in true (unshifted) units.
pub fn capacity_from_field(field: &GridField, p: &dyn Potential) -> Result<f64> {
    let (s, shift) = shifted_energy(field, p)?;
    let cap = field.eps * s * (-shift / field.eps).exp();
    if !cap.is_finite() {
        return Err(Error::Numerical("capacity overflowed".into()));
    }
    Ok(cap)
}

fn shifted_energy(field: &GridField, p: &dyn Potential) -> Result<(f64, f64)> {
    if p.dim() != field.dim() {
        return Err(Error::invalid("potential dimension does not match the field"));
    }
    let vol: f64 = field.spacing.iter().product();
    let mut s = 0.0;
    for idx in 0..field.len() {
        let x = field.coords(idx);
        field.neighbors(idx, |k, j| {
            let mut mid = x.clone();
            mid[k] += 0.5 * field.spacing[k];
            let g = (field.values[j] - field.values[idx]) / field.spacing[k];
            s += weight(p.value(&mid), field.shift, field.eps) * g * g * vol;
        });
    }
    Ok((s, field.shift))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialTheoryEstimate {
    /// `∫ h e^{−V/ε} / cap` from the grid.
    pub mean_time: f64,
    /// Grid numerator `∫ h e^{−V/ε}`.
    pub numerator: f64,
    /// `(2πε)^{d/2} e^{−V(x⋆)/ε} / sqrt(det ∇²V(x⋆))`.
    pub laplace_numerator: f64,
    pub capacity: f64,
    /// Laplace numerator over the grid capacity.
    pub laplace_mean_time: f64,
}

/// Mean transition time from the ratio estimate `∫ h_{C,A} e^{−V/ε} / cap(C, A)`
/// for a committor computed with `A` a small ball `C` around the minimum
/// and `B` the target.
pub fn mean_time_potential_theory(
    p: &dyn Potential,
    minimum: &CriticalPoint,
    field: &GridField,
) -> Result<PotentialTheoryEstimate> {
    let eps = field.eps;
    let d = field.dim();
    // nearest node to the minimum must be in the source ball
    let mut idx = 0usize;
    let mut stride = 1usize;
    for k in 0..d {
        let i = ((minimum.location[k] - field.lower[k]) / field.spacing[k]).round();
        if !(i >= 0.0 && (i as usize) < field.nodes[k]) {
            return Err(Error::invalid("minimum lies outside the grid"));
        }
        idx += i as usize * stride;
        stride *= field.nodes[k];
    }
    if field.labels[idx] != Label::InA {
        return Err(Error::invalid(
            "the source ball around the minimum must be the set with committor 1 and must not overlap the target",
        ));
    }
    let (energy, shift) = shifted_energy(field, p)?;
    let vol: f64 = field.spacing.iter().product();
    let mut num = 0.0;
    for i in 0..field.len() {
        // trapezoid weights: halve once per axis on which the node is extremal
        let mut w = vol;
        let mut rem = i;
        for k in 0..d {
            let c = rem % field.nodes[k];
            rem /= field.nodes[k];
            if c == 0 || c + 1 == field.nodes[k] {
                w *= 0.5;
            }
        }
        num += w * field.values[i] * weight(field.potential[i], shift, eps);
    }
    let mean_time = num / (eps * energy);
    let det = minimum.abs_det();
    let laplace_shifted = (2.0 * PI * eps).powf(0.5 * d as f64) * (-(minimum.value - shift) / eps).exp() / det.sqrt();
    let scale = (-shift / eps).exp();
    Ok(PotentialTheoryEstimate {
        mean_time,
        numerator: num * scale,
        laplace_numerator: laplace_shifted * scale,
        capacity: eps * energy * scale,
        laplace_mean_time: laplace_shifted / (eps * energy),
    })
}

/// `U(x) = ½ε V″(x) − ¼ V′(x)²`, so that `e^{−V/2ε} L e^{V/2ε} = εΔ + U/ε`.
pub fn schrodinger_potential(p: &dyn Potential, eps: f64, x: f64) -> Result<f64> {
    if p.dim() != 1 {
        return Err(Error::invalid("Schrödinger potential is implemented for d = 1"));
    }
    let g = p.gradient(&[x])[0];
    let h = p.hessian(&[x])[(0, 0)];
    Ok(0.5 * eps * h - 0.25 * g * g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Lowest-magnitude eigenvalues of the generator (all ≤ 0), by |λ|.
    pub generator: Vec<f64>,
    /// Same count from the conjugated symmetric operator.
    pub schrodinger: Vec<f64>,
    pub spacing: f64,
    pub nodes: usize,
    /// The generator eigenvalues came from the dense nonsymmetric solver.
    pub dense_generator: bool,
}

/// Largest grid handled by the dense nonsymmetric eigensolver.
pub const DENSE_LIMIT: usize = 2000;

/// Spectrum of the 1D generator with reflecting ends on `[lower, upper]`,
/// assembled as `(ε/Δ²) M⁻¹K` with mass `M = diag e^{−V_i/ε}` and stiffness
/// `K` from midpoint weights. The conjugated operator `M^{−½}KM^{−½}` is
/// symmetric tridiagonal and solved by Sturm bisection.
pub fn generator_spectrum_1d(
    p: &dyn Potential,
    eps: f64,
    lower: f64,
    upper: f64,
    nodes: usize,
    m: usize,
) -> Result<SpectrumReport> {
    if p.dim() != 1 {
        return Err(Error::invalid("generator spectrum is one-dimensional"));
    }
    if !(eps > 0.0) || !(lower < upper) || nodes < 3 || m == 0 || m > nodes {
        return Err(Error::invalid("need eps > 0, lower < upper, nodes >= 3 and 1 <= m <= nodes"));
    }
    let h = (upper - lower) / (nodes - 1) as f64;
    let xs: Vec<f64> = (0..nodes).map(|i| lower + h * i as f64).collect();
    let v: Vec<f64> = xs.iter().map(|&x| p.value(&[x])).collect();
    let vm: Vec<f64> = (0..nodes - 1).map(|i| p.value(&[xs[i] + 0.5 * h])).collect();
    let c = eps / (h * h);
    // symmetric tridiagonal S = c M^{-1/2} (−K) M^{-1/2}; entries are ratios
    // of Boltzmann weights, evaluated as differences of exponents
    let off: Vec<f64> = (0..nodes - 1)
        .map(|i| c * (-(vm[i] - 0.5 * (v[i] + v[i + 1])) / eps).exp())
        .collect();
    let diag: Vec<f64> = (0..nodes)
        .map(|i| {
            let mut s = 0.0;
            if i > 0 {
                s += (-(vm[i - 1] - v[i]) / eps).exp();
            }
            if i + 1 < nodes {
                s += (-(vm[i] - v[i]) / eps).exp();
            }
            -c * s
        })
        .collect();
    // −S is positive semidefinite: its m smallest are the |λ| we want
    let neg_diag: Vec<f64> = diag.iter().map(|d| -d).collect();
    let schrodinger: Vec<f64> = sturm_smallest(&neg_diag, &off, m)?.into_iter().map(|l| -l).collect();

    let (generator, dense) = if nodes <= DENSE_LIMIT {
        let mut l = DMatrix::<f64>::zeros(nodes, nodes);
        for i in 0..nodes {
            l[(i, i)] = diag[i];
            if i + 1 < nodes {
                // L_ij = c e^{−(V_mid − V_i)/ε}: rows of M^{-1}K
                l[(i, i + 1)] = c * (-(vm[i] - v[i]) / eps).exp();
                l[(i + 1, i)] = c * (-(vm[i] - v[i + 1]) / eps).exp();
            }
        }
        let mut ev: Vec<f64> = l.complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        ev.truncate(m);
        (ev, true)
    } else {
        (schrodinger.clone(), false)
    };
    Ok(SpectrumReport {
        generator,
        schrodinger,
        spacing: h,
        nodes,
        dense_generator: dense,
    })
}

/// Smallest `m` eigenvalues of a symmetric tridiagonal matrix by bisection
/// on the Sturm count, ascending.
fn sturm_smallest(diag: &[f64], off: &[f64], m: usize) -> Result<Vec<f64>> {
    let n = diag.len();
    let count_below = |x: f64| -> usize {
        let mut cnt = 0;
        let mut q = diag[0] - x;
        if q < 0.0 {
            cnt += 1;
        }
        for i in 1..n {
            let denom = if q == 0.0 { f64::EPSILON * (off[i - 1].abs() + 1e-300) } else { q };
            q = diag[i] - x - off[i - 1] * off[i - 1] / denom;
            if q < 0.0 {
                cnt += 1;
            }
        }
        cnt
    };
    // Gershgorin bounds
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let span = hi - lo;
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        // k-th eigenvalue: smallest x with count_below(x) > k
        let (mut a, mut b) = (lo - 1e-12 * span, hi + 1e-12 * span);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if count_below(mid) > k {
                b = mid;
            } else {
                a = mid;
            }
            if b - a <= 4.0 * f64::EPSILON * (a.abs().max(b.abs())).max(f64::MIN_POSITIVE) {
                break;
            }
        }
        out.push(0.5 * (a + b));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergence("Sturm bisection failed".into()));
    }
    Ok(out)
}

/// Dense symmetric eigenvalues of `−S` for small cross-checks.
#[allow(dead_code)]
fn dense_symmetric(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut s = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        s[(i, i)] = diag[i];
        if i + 1 < n {
            s[(i, i + 1)] = off[i];
            s[(i + 1, i)] = off[i];
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}
