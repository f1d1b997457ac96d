//! Critical points, communication heights and the metastable hierarchy.
//!
//! Communication heights `H(a, b) = inf_γ sup_{z∈γ} V(z)` are computed by a
//! dense scan in one dimension and by sublevel-set flooding (union–find
//! over grid nodes sorted by `V`) in higher dimensions; the merge node is
//! then refined by Newton's method to the saddle.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Potential;

/// Gradient-norm target of Newton refinement.
pub const NEWTON_TOL: f64 = 1e-10;
/// Points closer than this are merged when deduplicating critical points.
pub const DEDUPE_TOL: f64 = 1e-6;
/// A Hessian eigenvalue with `|λ| < DEGENERACY_RATIO · max|λᵢ|` is degenerate.
pub const DEGENERACY_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub value: f64,
    /// Hessian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Number of negative eigenvalues.
    pub index: usize,
    pub degenerate: bool,
}

impl CriticalPoint {
    pub fn is_minimum(&self) -> bool {
        self.index == 0 && !self.degenerate
    }

    pub fn is_saddle(&self) -> bool {
        self.index == 1 && !self.degenerate
    }

    /// `|det ∇²V|` from the stored spectrum.
    pub fn abs_det(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.abs()).product()
    }
}

/// Hessian spectrum, Morse index and degeneracy at `x` (gradient not checked).
pub fn classify(p: &dyn Potential, x: &[f64]) -> CriticalPoint {
    let h = p.hessian(x);
    let mut eig: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let scale = eig.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let degenerate = eig.iter().any(|l| l.abs() < DEGENERACY_RATIO * scale) || scale == 0.0;
    let index = eig
        .iter()
        .filter(|&&l| l < 0.0 && l.abs() >= DEGENERACY_RATIO * scale)
        .count();
    CriticalPoint {
        location: x.to_vec(),
        value: p.value(x),
        eigenvalues: eig,
        index,
        degenerate,
    }
}

/// Axis-aligned box in ℝᵈ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("box bounds must have equal, positive length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::invalid("box is degenerate (need lower < upper on every axis)"));
        }
        Ok(BoxDomain { lower, upper })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        BoxDomain::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(xi, (l, u))| *xi >= l - slack && *xi <= u + slack)
    }
}

/// Newton iteration on `∇V = 0` with backtracking on `‖∇V‖`; steps along
/// `−∇V` when the Hessian is singular. Returns the refined point if the
/// gradient norm reaches `tol`.
pub fn newton_refine(p: &dyn Potential, x0: &[f64], tol: f64, max_iter: usize) -> Option<Vec<f64>> {
    let d = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut g = DVector::from_vec(p.gradient(x.as_slice()));
    let mut gnorm = g.norm();
    for _ in 0..max_iter {
        if gnorm <= tol {
            return Some(polish(p, x, gnorm));
        }
        let h: DMatrix<f64> = p.hessian(x.as_slice());
        let step = h
            .clone()
            .lu()
            .solve(&g)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .unwrap_or_else(|| g.clone());
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &x - &step * t;
            let gt = DVector::from_vec(p.gradient(trial.as_slice()));
            let nt = gt.norm();
            if nt.is_finite() && nt < gnorm {
                x = trial;
                g = gt;
                gnorm = nt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // accept a full Newton step anyway when very close, else give up
            if gnorm < 1e3 * tol {
                return Some(x.as_slice().to_vec());
            }
            return None;
        }
        if x.iter().any(|v| !v.is_finite()) || x.norm() > 1e8 * (1.0 + d as f64) {
            return None;
        }
    }
    (gnorm <= tol).then(|| x.as_slice().to_vec())
}

// one extra Newton step past the tolerance, kept only if it helps
fn polish(p: &dyn Potential, x: DVector<f64>, gnorm: f64) -> Vec<f64> {
    let g = DVector::from_vec(p.gradient(x.as_slice()));
    if let Some(step) = p.hessian(x.as_slice()).lu().solve(&g) {
        let trial = &x - step;
        if DVector::from_vec(p.gradient(trial.as_slice())).norm() <= gnorm {
            return trial.as_slice().to_vec();
        }
    }
    x.as_slice().to_vec()
}

/// Refine a grid of `n_seeds` points per axis by Newton and return the
/// distinct critical points inside `domain`, sorted by location.
pub fn find_critical_points(p: &dyn Potential, domain: &BoxDomain, n_seeds: usize) -> Result<Vec<CriticalPoint>> {
    let d = p.dim();
    if domain.dim() != d {
        return Err(Error::invalid("box dimension does not match potential"));
    }
    if n_seeds < 2 {
        return Err(Error::invalid("need at least two seeds per axis"));
    }
    let total = (n_seeds as f64).powi(d as i32);
    if total > 2e6 {
        return Err(Error::invalid(format!("{total} seeds is too many; reduce n_seeds")));
    }
    let total = total as usize;
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            (0..n_seeds)
                .map(|i| domain.lower[k] + (domain.upper[k] - domain.lower[k]) * i as f64 / (n_seeds - 1) as f64)
                .collect()
        })
        .collect();
    let mut found: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .filter_map(|mut idx| {
            let seed: Vec<f64> = (0..d)
                .map(|k| {
                    let i = idx % n_seeds;
                    idx /= n_seeds;
                    axes[k][i]
                })
                .collect();
            newton_refine(p, &seed, NEWTON_TOL, 200)
        })
        .filter(|x| domain.contains(x, 1e-9))
        .collect();
    found.sort_by(|a, b| lex_cmp(a, b));
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    for x in found {
        if !distinct.iter().any(|y| dist(&x, y) < DEDUPE_TOL) {
            distinct.push(x);
        }
    }
    Ok(distinct.iter().map(|x| classify(p, x)).collect())
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Flooding configuration for communication heights in `d ≥ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloodingConfig {
    /// Grid nodes per axis.
    pub cells_per_axis: usize,
    /// Flooding box; defaults to the bounding box of the endpoints padded
    /// by `max(1, |b − a|/2)` on each side.
    pub domain: Option<BoxDomain>,
}

impl Default for FloodingConfig {
    fn default() -> Self {
        FloodingConfig {
            cells_per_axis: 256,
            domain: None,
        }
    }
}

/// Result of a communication-height computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub height: f64,
    pub saddle: Vec<f64>,
    /// Whether the saddle was refined to a critical point (`‖∇V‖ ≤ newton_tol`).
    pub refined: bool,
}

/// `H(a, b)` and the location of the relevant saddle.
pub fn communication_height(p: &dyn Potential, a: &[f64], b: &[f64], cfg: &FloodingConfig) -> Result<Passage> {
    if a.len() != p.dim() || b.len() != p.dim() {
        return Err(Error::invalid("endpoint dimension does not match potential"));
    }
    if dist(a, b) == 0.0 {
        return Err(Error::invalid("endpoints coincide: same basin at every level"));
    }
    if p.dim() == 1 {
        scan_height_1d(p, a[0], b[0])
    } else {
        flood_height(p, a, b, cfg)
    }
}

/// Dense scan of `max V` on the segment `[a, b]` followed by Newton
/// refinement of the maximizer.
pub fn scan_height_1d(p: &dyn Potential, a: f64, b: f64) -> Result<Passage> {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let n = (((hi - lo) / 1e-4).ceil() as usize).clamp(1000, 2_000_000);
    let step = (hi - lo) / n as f64;
    let (mut imax, mut vmax) = (0usize, f64::NEG_INFINITY);
    for i in 0..=n {
        let v = p.value(&[lo + step * i as f64]);
        if v > vmax {
            vmax = v;
            imax = i;
        }
    }
    let x = lo + step * imax as f64;
    if imax == 0 || imax == n {
        // monotone between the endpoints: the higher endpoint is the passage
        return Ok(Passage {
            height: vmax,
            saddle: vec![x],
            refined: false,
        });
    }
    let refined = newton_refine(p, &[x], NEWTON_TOL, 100)
        .filter(|y| (y[0] - x).abs() <= step && p.value(y) >= vmax - 1e-14 * vmax.abs().max(1.0));
    Ok(match refined {
        Some(y) => Passage {
            height: p.value(&y),
            saddle: y,
            refined: true,
        },
        None => Passage {
            height: vmax,
            saddle: vec![x],
            refined: false,
        },
    })
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Sublevel-set flooding on a regular grid (any dimension, nodes ≤ 2·10⁷).
pub fn flood_height(p: &dyn Potential, a: &[f64], b: &[f64], cfg: &FloodingConfig) -> Result<Passage> {
    let d = p.dim();
    let n = cfg.cells_per_axis;
    if n < 4 {
        return Err(Error::invalid("flooding grid needs at least 4 nodes per axis"));
    }
    let domain = match &cfg.domain {
        Some(dom) => dom.clone(),
        None => {
            let pad = (0.5 * dist(a, b)).max(1.0);
            let lower = a.iter().zip(b).map(|(x, y)| x.min(*y) - pad).collect();
            let upper = a.iter().zip(b).map(|(x, y)| x.max(*y) + pad).collect();
            BoxDomain::new(lower, upper)?
        }
    };
    if domain.dim() != d || !domain.contains(a, 0.0) || !domain.contains(b, 0.0) {
        return Err(Error::invalid("flooding box must contain both endpoints"));
    }
    let total = (n as f64).powi(d as i32);
    if total > 2e7 {
        return Err(Error::invalid("flooding grid too large"));
    }
    let total = total as usize;
    let spacing: Vec<f64> = (0..d).map(|k| (domain.upper[k] - domain.lower[k]) / (n - 1) as f64).collect();
    let coords = |mut idx: usize| -> Vec<f64> {
        (0..d)
            .map(|k| {
                let i = idx % n;
                idx /= n;
                domain.lower[k] + spacing[k] * i as f64
            })
            .collect()
    };
    let nearest = |x: &[f64]| -> usize {
        let mut idx = 0;
        for k in (0..d).rev() {
            let i = ((x[k] - domain.lower[k]) / spacing[k]).round().clamp(0.0, (n - 1) as f64) as usize;
            idx = idx * n + i;
        }
        idx
    };
    let values: Vec<f64> = (0..total).into_par_iter().map(|i| p.value(&coords(i))).collect();
    let ia = nearest(a);
    let ib = nearest(b);
    if ia == ib {
        return Err(Error::Resolution("endpoints fall on the same grid node".into()));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let mut uf = UnionFind::new(total);
    let mut active = vec![false; total];
    let mut strides = vec![1usize; d];
    for k in 1..d {
        strides[k] = strides[k - 1] * n;
    }
    let mut merge_node = None;
    for &i in &order {
        active[i] = true;
        for k in 0..d {
            let ik = (i / strides[k]) % n;
            if ik > 0 && active[i - strides[k]] {
                uf.union(i, i - strides[k]);
            }
            if ik + 1 < n && active[i + strides[k]] {
                uf.union(i, i + strides[k]);
            }
        }
        if active[ia] && active[ib] && uf.find(ia) == uf.find(ib) {
            merge_node = Some(i);
            break;
        }
    }
    let node = merge_node.ok_or_else(|| Error::Numerical("flooding never merged the endpoints".into()))?;
    if node == ia || node == ib {
        return Err(Error::Resolution(
            "endpoint joined the other basin on activation; refine the flooding grid".into(),
        ));
    }
    let x = coords(node);
    let cell_diameter = spacing.iter().map(|s| s * s).sum::<f64>().sqrt();
    // Near a fold the merge node may sit in a minimum's Newton basin, so
    // reject index-0 limits and retry from the grid neighbours.
    let mut starts = vec![node];
    for k in 0..d {
        let ik = (node / strides[k]) % n;
        if ik > 0 {
            starts.push(node - strides[k]);
        }
        if ik + 1 < n {
            starts.push(node + strides[k]);
        }
    }
    let refined = starts.iter().find_map(|&s| {
        newton_refine(p, &coords(s), NEWTON_TOL, 100)
            .filter(|y| dist(y, &x) <= 2.0 * cell_diameter && !classify(p, y).is_minimum())
    });
    Ok(match refined {
        Some(y) => Passage {
            height: p.value(&y),
            saddle: y,
            refined: true,
        },
        None => Passage {
            height: values[node],
            saddle: x,
            refined: false,
        },
    })
}

/// Start minimum, target minimum with ball radius, relevant saddle and
/// communication height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub start: CriticalPoint,
    pub target: CriticalPoint,
    pub target_radius: f64,
    pub saddle: CriticalPoint,
    pub height: f64,
    /// `H − V(start)`
    pub barrier: f64,
}

impl TransitionSpec {
    /// Assemble from already classified points; checks the sign invariants.
    pub fn new(start: CriticalPoint, target: CriticalPoint, target_radius: f64, saddle: CriticalPoint) -> Result<Self> {
        if start.index != 0 || target.index != 0 {
            return Err(Error::invalid("start and target must be local minima"));
        }
        if saddle.index != 1 && !saddle.degenerate {
            return Err(Error::invalid(format!(
                "relevant saddle has Morse index {}, expected 1",
                saddle.index
            )));
        }
        if !(target_radius > 0.0) {
            return Err(Error::invalid("target radius must be positive"));
        }
        let height = saddle.value;
        let barrier = height - start.value;
        if barrier < 0.0 {
            return Err(Error::invalid("saddle lies below the start minimum"));
        }
        Ok(TransitionSpec {
            start,
            target,
            target_radius,
            saddle,
            height,
            barrier,
        })
    }
}

/// Locate the relevant saddle between two minima and build a
/// [`TransitionSpec`].
pub fn transition_spec(
    p: &dyn Potential,
    start: &[f64],
    target: &[f64],
    target_radius: f64,
    cfg: &FloodingConfig,
) -> Result<TransitionSpec> {
    let refine_min = |x: &[f64]| newton_refine(p, x, NEWTON_TOL, 100).unwrap_or_else(|| x.to_vec());
    let s = classify(p, &refine_min(start));
    let t = classify(p, &refine_min(target));
    let passage = communication_height(p, &s.location, &t.location, cfg)?;
    if !passage.refined {
        return Err(Error::Resolution("relevant saddle could not be refined to a critical point".into()));
    }
    TransitionSpec::new(s, t, target_radius, classify(p, &passage.saddle))
}

/// Minima ordered deepest first with the separation θ that was verified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub minima: Vec<CriticalPoint>,
    /// `heights[k] = H(x_k, M_{k−1})` for k ≥ 1 (`heights[0]` is NaN).
    pub heights: Vec<f64>,
    /// `depths[k] = heights[k] − V(x_k)`, the barrier that sets the Kramers
    /// time out of `x_k`.
    pub depths: Vec<f64>,
    pub theta: f64,
}

/// Order minima so that at each level `k`
/// `D(x_k, M_{k−1}) ≤ min_{i<k} D(x_i, M_k ∖ x_i) − θ`,
/// where `D(x, S) = min_{s∈S} H(x, s) − V(x)` is the barrier from `x` to
/// the set `S`. Fails when a level is not separated by θ.
pub fn metastable_order(minima: &[CriticalPoint], p: &dyn Potential, theta: f64, cfg: &FloodingConfig) -> Result<Hierarchy> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta must be positive"));
    }
    if minima.is_empty() {
        return Err(Error::invalid("no minima to order"));
    }
    let n = minima.len();
    let mut h = vec![vec![f64::NAN; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let pass = communication_height(p, &minima[i].location, &minima[j].location, cfg)?;
            h[i][j] = pass.height;
            h[j][i] = pass.height;
        }
    }
    let depth = |i: usize, set: &[usize]| -> f64 {
        set.iter()
            .filter(|&&j| j != i)
            .map(|&j| h[i][j])
            .fold(f64::INFINITY, f64::min)
            - minima[i].value
    };
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut removed = Vec::new();
    while remaining.len() > 1 {
        let depths: Vec<f64> = remaining.iter().map(|&i| depth(i, &remaining)).collect();
        let (pos, &dmin) = depths
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        let others = depths
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != pos)
            .map(|(_, d)| *d)
            .fold(f64::INFINITY, f64::min);
        if dmin > others - theta {
            return Err(Error::HierarchyNotResolvable {
                theta,
                detail: format!(
                    "level {}: shallowest barrier {dmin:.6} is within theta of {others:.6}",
                    remaining.len()
                ),
            });
        }
        let k = remaining.remove(pos);
        removed.push((k, dmin + minima[k].value, dmin));
    }
    let mut order = vec![remaining[0]];
    let mut heights = vec![f64::NAN];
    let mut depths = vec![f64::NAN];
    for &(k, hk, dk) in removed.iter().rev() {
        order.push(k);
        heights.push(hk);
        depths.push(dk);
    }
    Ok(Hierarchy {
        minima: order.iter().map(|&i| minima[i].clone()).collect(),
        heights,
        depths,
        theta,
    })
}

/// CSV rows `x1,…,xd,value,l1,…,ld,index` for critical-point reports.
pub fn critical_points_csv(points: &[CriticalPoint]) -> String {
    let d = points.first().map_or(0, |c| c.location.len());
    let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    header.push("value".into());
    header.extend((1..=d).map(|k| format!("lambda{k}")));
    header.push("index".into());
    let mut out = header.join(",") + "\n";
    for c in points {
        let mut row: Vec<String> = c.location.iter().map(|v| crate::io::fmt_f64(*v)).collect();
        row.push(crate::io::fmt_f64(c.value));
        row.extend(c.eigenvalues.iter().map(|v| crate::io::fmt_f64(*v)));
        row.push(c.index.to_string());
        out += &row.join(",");
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_builtin, Polynomial, PotentialParams};

    fn builtin(name: &str) -> crate::SharedPotential {
        make_builtin(&PotentialParams::new(name)).unwrap()
    }

    #[test]
    fn quartic_critical_points() {
        let p = builtin("quartic1d");
        let cps = find_critical_points(p.as_ref(), &BoxDomain::cube(1, -2.0, 2.0).unwrap(), 21).unwrap();
        assert_eq!(cps.len(), 3);
        assert!((cps[0].location[0] + 1.0).abs() < 1e-12 && cps[0].index == 0);
        assert!(cps[1].location[0].abs() < 1e-12 && cps[1].index == 1);
        assert!((cps[2].location[0] - 1.0).abs() < 1e-12 && cps[2].index == 0);
    }

    #[test]
    fn doublewell_critical_points() {
        let p = builtin("doublewell2d");
        let cps = find_critical_points(p.as_ref(), &BoxDomain::cube(2, -2.0, 2.0).unwrap(), 9).unwrap();
        assert_eq!(cps.len(), 3);
        let saddle = cps.iter().find(|c| c.index == 1).unwrap();
        assert!(saddle.location.iter().all(|v| v.abs() < 1e-10));
        assert!((saddle.eigenvalues[0] + 1.0).abs() < 1e-12 && (saddle.eigenvalues[1] - 1.0).abs() < 1e-12);
        let mins: Vec<_> = cps.iter().filter(|c| c.index == 0).collect();
        assert_eq!(mins.len(), 2);
        assert!((mins[0].location[0] + 1.0).abs() < 1e-10);
        assert!((mins[1].location[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_flag_on_pitchfork() {
        let params = PotentialParams::new("pitchfork_normal_form")
            .with("lambda1", -1.0)
            .with("lambda2", 0.0)
            .with("c4", 1.0);
        let p = make_builtin(&params).unwrap();
        let c = classify(p.as_ref(), &[0.0, 0.0]);
        assert!(c.degenerate);
        assert_eq!(c.index, 1);
    }

    #[test]
    fn heights_on_quartic() {
        let p = builtin("quartic1d");
        let pass = communication_height(p.as_ref(), &[-1.0], &[1.0], &FloodingConfig::default()).unwrap();
        assert!(pass.height.abs() < 1e-15 && pass.saddle[0].abs() < 1e-10 && pass.refined);
        let flood = flood_height(p.as_ref(), &[-1.0], &[1.0], &FloodingConfig::default()).unwrap();
        assert!((flood.height - pass.height).abs() < 1e-6);
        assert!(communication_height(p.as_ref(), &[1.0], &[1.0], &FloodingConfig::default()).is_err());
    }

    #[test]
    fn symmetric_quartic_not_resolvable() {
        let p = builtin("quartic1d");
        let mins = vec![classify(p.as_ref(), &[-1.0]), classify(p.as_ref(), &[1.0])];
        let err = metastable_order(&mins, p.as_ref(), 0.01, &FloodingConfig::default()).unwrap_err();
        assert!(matches!(err, Error::HierarchyNotResolvable { .. }));
    }

    #[test]
    fn asymmetric_two_well_deeper_first() {
        // V = x⁴/4 − x²/2 + 0.1x: left well deeper
        let p = Polynomial::univariate(&[0.0, 0.1, -0.5, 0.0, 0.25]);
        let cps = find_critical_points(&p, &BoxDomain::cube(1, -2.0, 2.0).unwrap(), 41).unwrap();
        let mins: Vec<_> = cps.into_iter().filter(|c| c.index == 0).collect();
        assert_eq!(mins.len(), 2);
        let hier = metastable_order(&mins, &p, 0.05, &FloodingConfig::default()).unwrap();
        assert!(hier.minima[0].location[0] < 0.0);
        // dense-scan oracle for the second level
        let xs: Vec<f64> = (0..=40_000).map(|i| -2.0 + 4.0 * i as f64 / 40_000.0).collect();
        let vals: Vec<f64> = xs.iter().map(|x| p.value(&[*x])).collect();
        let right_min = xs
            .iter()
            .zip(&vals)
            .filter(|(x, _)| **x > 0.3)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let barrier_max = xs
            .iter()
            .zip(&vals)
            .filter(|(x, _)| x.abs() < 0.5)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((hier.depths[1] - (barrier_max - right_min.1)).abs() < 1e-6);
    }

    #[test]
    fn transition_spec_invariants() {
        let p = builtin("doublewell2d");
        let spec = transition_spec(p.as_ref(), &[-1.0, 0.0], &[1.0, 0.0], 0.1, &FloodingConfig::default()).unwrap();
        assert!((spec.barrier - 0.25).abs() < 1e-12);
        assert_eq!(spec.height, spec.saddle.value);
        assert_eq!(spec.saddle.index, 1);
    }

    #[test]
    fn csv_report_shape() {
        let p = builtin("quartic1d");
        let cps = find_critical_points(p.as_ref(), &BoxDomain::cube(1, -2.0, 2.0).unwrap(), 11).unwrap();
        let csv = critical_points_csv(&cps);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "x1,value,lambda1,index");
        assert_eq!(lines.len(), 4);
    }
}
