//! Certified branch-and-bound over products of KL balls.
//!
//! Maximises `h(z) = F(z) - G(z)` with `F`, `G` convex over
//! `{z = (u_1, .., u_B) : u_b in simplex, KL(p_b || u_b) <= r_b}`. The simplex
//! of each block is split into simplicial cells by longest-edge bisection.
//! On a cell with centroid `c` and any `lam >= 0`, every feasible point obeys
//!
//! ```text
//! h(z) <= F(z) - linG_c(z) - lam * sum_b (lin g_b,c(u_b) - r_b)
//! ```
//!
//! where `lin` denotes the tangent plane at `c` (a global under-estimator of
//! a convex function). The right-hand side is convex, so its maximum over the
//! cell sits at a vertex; minimising over `lam` gives the cell bound. A cell
//! whose tangent-plane lower bound on `g_b` exceeds `r_b` is disjoint from
//! the ball and discarded. Feasible incumbents come from cell vertices and
//! from radial projections of infeasible vertices onto the ball boundary.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::domain::{kl_divergence, smooth, total_variation};

/// One block's KL-ball constraint `KL(center || u) <= radius`.
#[derive(Debug, Clone)]
pub(crate) struct BallBlock {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BallBlock {
    fn g(&self, u: &[f64]) -> f64 {
        kl_divergence(&self.center, u).unwrap_or(f64::INFINITY)
    }

    fn grad(&self, u: &[f64], out: &mut [f64]) {
        for ((o, &p), &x) in out.iter_mut().zip(&self.center).zip(u) {
            *o = if p > 0.0 { -p / x } else { 0.0 };
        }
    }

    /// Boundary point on the segment from the center towards `v`, on the
    /// feasible side.
    fn project(&self, v: &[f64]) -> Vec<f64> {
        let at = |t: f64| -> Vec<f64> {
            self.center.iter().zip(v).map(|(&p, &x)| p + t * (x - p)).collect()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.g(&at(mid)) <= self.radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(lo)
    }
}

/// Convex loss on the simplex, with gradients in each argument.
#[derive(Debug, Clone, Copy)]
pub(crate) enum SimplexLoss {
    Kl { smoothing: f64 },
    Tv,
}

impl SimplexLoss {
    pub fn value(&self, u: &[f64], v: &[f64]) -> f64 {
        match *self {
            SimplexLoss::Kl { smoothing } if smoothing > 0.0 => {
                kl_divergence(&smooth(u, smoothing), &smooth(v, smoothing)).unwrap_or(f64::INFINITY)
            }
            SimplexLoss::Kl { .. } => kl_divergence(u, v).unwrap_or(f64::INFINITY),
            SimplexLoss::Tv => total_variation(u, v),
        }
    }

    /// Gradient with respect to `u` (first) and `v` (second argument).
    pub fn grad(&self, u: &[f64], v: &[f64], du: &mut [f64], dv: &mut [f64]) {
        match *self {
            SimplexLoss::Kl { smoothing } => {
                let d = u.len() as f64;
                let scale = 1.0 / (1.0 + d * smoothing);
                for i in 0..u.len() {
                    let a = (u[i] + smoothing) * scale;
                    let b = (v[i] + smoothing) * scale;
                    if a > 0.0 {
                        du[i] = ((a / b).ln() + 1.0) * scale;
                        dv[i] = -(a / b) * scale;
                    } else {
                        du[i] = f64::NEG_INFINITY;
                        dv[i] = 0.0;
                    }
                }
            }
            SimplexLoss::Tv => {
                for i in 0..u.len() {
                    let s = 0.5 * (u[i] - v[i]).signum() * f64::from(u[i] != v[i]);
                    du[i] = s;
                    dv[i] = -s;
                }
            }
        }
    }
}

/// How a block tuple enters the objective.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Objective<'a> {
    /// `L(u, q)` over one block.
    Loss { loss: SimplexLoss, q: &'a [f64] },
    /// `-L(u, q)` over one block.
    NegLoss { loss: SimplexLoss, q: &'a [f64] },
    /// `L(u, v)` over two blocks.
    JointLoss { loss: SimplexLoss },
    /// `-L(u, v)` over two blocks.
    NegJointLoss { loss: SimplexLoss },
    /// `L(u, q1) - L(u, q2)` over one block.
    Difference { loss: SimplexLoss, q1: &'a [f64], q2: &'a [f64] },
}

impl Objective<'_> {
    fn blocks(&self) -> usize {
        match self {
            Objective::JointLoss { .. } | Objective::NegJointLoss { .. } => 2,
            _ => 1,
        }
    }

    fn value(&self, z: &[&[f64]]) -> f64 {
        match *self {
            Objective::Loss { loss, q } => loss.value(z[0], q),
            Objective::NegLoss { loss, q } => -loss.value(z[0], q),
            Objective::JointLoss { loss } => loss.value(z[0], z[1]),
            Objective::NegJointLoss { loss } => -loss.value(z[0], z[1]),
            Objective::Difference { loss, q1, q2 } => loss.value(z[0], q1) - loss.value(z[0], q2),
        }
    }

    /// Convex part `F` at a vertex tuple.
    fn convex(&self, z: &[&[f64]]) -> f64 {
        match *self {
            Objective::Loss { loss, q } => loss.value(z[0], q),
            Objective::JointLoss { loss } => loss.value(z[0], z[1]),
            Objective::Difference { loss, q1, .. } => loss.value(z[0], q1),
            Objective::NegLoss { .. } | Objective::NegJointLoss { .. } => 0.0,
        }
    }

    /// Subtracted convex part `G` at `z`, filling its gradient blocks.
    /// Returns `None` when `G` is identically zero.
    fn subtracted(&self, z: &[&[f64]], grad: &mut [Vec<f64>]) -> Option<f64> {
        let mut scratch = vec![0.0; z[0].len()];
        match *self {
            Objective::NegLoss { loss, q } | Objective::Difference { loss, q2: q, .. } => {
                loss.grad(z[0], q, &mut grad[0], &mut scratch);
                Some(loss.value(z[0], q))
            }
            Objective::NegJointLoss { loss } => {
                let (a, b) = grad.split_at_mut(1);
                loss.grad(z[0], z[1], &mut a[0], &mut b[0]);
                Some(loss.value(z[0], z[1]))
            }
            Objective::Loss { .. } | Objective::JointLoss { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BnbOutcome {
    /// Objective at the best feasible point found.
    pub value: f64,
    /// Certified upper bound on the supremum.
    pub upper: f64,
    pub cells: usize,
    pub converged: bool,
}

impl BnbOutcome {
    pub fn slack(&self) -> f64 {
        (self.upper - self.value).max(0.0)
    }
}

/// Vertices per block: `cell[b][k]` is vertex `k` of block `b`.
type Cell = Vec<Vec<Vec<f64>>>;

struct Scored {
    upper: f64,
    cell: Cell,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.upper.total_cmp(&other.upper) == Ordering::Equal
    }
}
impl Eq for Scored {}
impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.upper.total_cmp(&other.upper)
    }
}

fn tuples(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &s in sizes {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..s).map(move |k| {
                    let mut t = t.clone();
                    t.push(k);
                    t
                })
            })
            .collect();
    }
    out
}

/// `min_{lam >= 0} max_k (a_k - lam b_k)`.
fn lagrange_bound(a: &[f64], b: &[f64]) -> f64 {
    let phi = |lam: f64| -> f64 {
        a.iter()
            .zip(b)
            .map(|(&ak, &bk)| ak - lam * bk)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut best = phi(0.0);
    for j in 0..a.len() {
        for k in (j + 1)..a.len() {
            let db = b[j] - b[k];
            if db.abs() < 1e-300 {
                continue;
            }
            let lam = (a[j] - a[k]) / db;
            if lam > 0.0 && lam.is_finite() {
                best = best.min(phi(lam));
            }
        }
    }
    best
}

pub(crate) struct BranchAndBound<'a> {
    pub blocks: &'a [BallBlock],
    pub objective: Objective<'a>,
    /// Stop once the certified gap is at most this.
    pub tolerance: f64,
    pub max_cells: usize,
}

impl BranchAndBound<'_> {
    fn cell_bound(&self, cell: &Cell) -> Option<f64> {
        let nb = self.blocks.len();
        let centroids: Vec<Vec<f64>> = cell
            .iter()
            .map(|verts| {
                let d = verts[0].len();
                let mut c = vec![0.0; d];
                for v in verts {
                    for (ci, vi) in c.iter_mut().zip(v) {
                        *ci += vi;
                    }
                }
                let nv = verts.len() as f64;
                c.iter_mut().for_each(|x| *x /= nv);
                c
            })
            .collect();

        // Tangent-plane slack of each block constraint at each vertex.
        let mut penalty: Vec<Vec<f64>> = Vec::with_capacity(nb);
        for (b, block) in self.blocks.iter().enumerate() {
            let c = &centroids[b];
            let gc = block.g(c);
            let mut grad = vec![0.0; c.len()];
            block.grad(c, &mut grad);
            let slacks: Vec<f64> = cell[b]
                .iter()
                .map(|v| gc + dot_diff(&grad, v, c) - block.radius)
                .collect();
            if slacks.iter().all(|&s| s > 1e-15) {
                return None;
            }
            penalty.push(slacks);
        }

        let zc: Vec<&[f64]> = centroids.iter().map(|c| c.as_slice()).collect();
        let mut g_grad: Vec<Vec<f64>> = centroids.iter().map(|c| vec![0.0; c.len()]).collect();
        let g_center = self.objective.subtracted(&zc, &mut g_grad);

        let sizes: Vec<usize> = cell.iter().map(|v| v.len()).collect();
        let combos = tuples(&sizes);
        let mut a = Vec::with_capacity(combos.len());
        let mut bvec = Vec::with_capacity(combos.len());
        for t in &combos {
            let z: Vec<&[f64]> = t.iter().enumerate().map(|(b, &k)| cell[b][k].as_slice()).collect();
            let mut ak = self.objective.convex(&z);
            if let Some(gc) = g_center {
                let lin = gc
                    + t.iter()
                        .enumerate()
                        .map(|(b, &k)| dot_diff(&g_grad[b], &cell[b][k], &centroids[b]))
                        .sum::<f64>();
                ak -= lin;
            }
            a.push(ak);
            bvec.push(t.iter().enumerate().map(|(b, &k)| penalty[b][k]).sum());
        }
        let bound = lagrange_bound(&a, &bvec);
        Some(if bound.is_nan() { f64::INFINITY } else { bound })
    }

    /// Best feasible objective among the cell's vertices, their projections
    /// onto the ball boundary, and the projected centroid.
    fn incumbent(&self, cell: &Cell) -> f64 {
        let candidates: Vec<Vec<Vec<f64>>> = cell
            .iter()
            .zip(self.blocks)
            .map(|(verts, block)| {
                let d = verts[0].len();
                let mut c = vec![0.0; d];
                for v in verts {
                    for (ci, vi) in c.iter_mut().zip(v) {
                        *ci += vi / verts.len() as f64;
                    }
                }
                verts
                    .iter()
                    .chain(std::iter::once(&c))
                    .map(|v| {
                        if block.g(v) <= block.radius {
                            v.clone()
                        } else {
                            block.project(v)
                        }
                    })
                    .collect()
            })
            .collect();
        let sizes: Vec<usize> = candidates.iter().map(|c| c.len()).collect();
        tuples(&sizes)
            .iter()
            .map(|t| {
                let z: Vec<&[f64]> = t.iter().enumerate().map(|(b, &k)| candidates[b][k].as_slice()).collect();
                self.objective.value(&z)
            })
            .filter(|v| !v.is_nan())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn run(&self) -> BnbOutcome {
        assert_eq!(self.blocks.len(), self.objective.blocks());
        let centers: Vec<&[f64]> = self.blocks.iter().map(|b| b.center.as_slice()).collect();
        let mut best = self.objective.value(&centers);

        let root: Cell = self
            .blocks
            .iter()
            .map(|b| {
                let d = b.center.len();
                (0..d)
                    .map(|k| {
                        let mut e = vec![0.0; d];
                        e[k] = 1.0;
                        e
                    })
                    .collect()
            })
            .collect();

        let mut heap = BinaryHeap::new();
        let mut cells = 1;
        if let Some(upper) = self.cell_bound(&root) {
            best = best.max(self.incumbent(&root));
            heap.push(Scored { upper, cell: root });
        }

        while let Some(top) = heap.peek() {
            if top.upper - best <= self.tolerance {
                return BnbOutcome {
                    value: best,
                    upper: top.upper.max(best),
                    cells,
                    converged: true,
                };
            }
            if cells >= self.max_cells {
                return BnbOutcome {
                    value: best,
                    upper: top.upper.max(best),
                    cells,
                    converged: false,
                };
            }
            let Scored { cell, .. } = heap.pop().expect("peeked");
            for child in bisect(&cell) {
                cells += 1;
                if let Some(upper) = self.cell_bound(&child) {
                    best = best.max(self.incumbent(&child));
                    if upper > best {
                        heap.push(Scored { upper, cell: child });
                    }
                }
            }
        }
        // Every cell was pruned or dominated by the incumbent.
        BnbOutcome {
            value: best,
            upper: best,
            cells,
            converged: true,
        }
    }
}

fn dot_diff(grad: &[f64], v: &[f64], c: &[f64]) -> f64 {
    grad.iter()
        .zip(v.iter().zip(c))
        .map(|(g, (x, y))| {
            let d = x - y;
            // tangent directions with zero displacement contribute nothing
            if d == 0.0 {
                0.0
            } else {
                g * d
            }
        })
        .sum()
}

/// Splits the longest edge over all blocks.
fn bisect(cell: &Cell) -> [Cell; 2] {
    let mut best = (0usize, 0usize, 0usize, -1.0f64);
    for (b, verts) in cell.iter().enumerate() {
        for i in 0..verts.len() {
            for j in (i + 1)..verts.len() {
                let len: f64 = verts[i].iter().zip(&verts[j]).map(|(x, y)| (x - y) * (x - y)).sum();
                if len > best.3 {
                    best = (b, i, j, len);
                }
            }
        }
    }
    let (b, i, j, _) = best;
    let mid: Vec<f64> = cell[b][i].iter().zip(&cell[b][j]).map(|(x, y)| 0.5 * (x + y)).collect();
    let mut left = cell.clone();
    let mut right = cell.clone();
    left[b][i] = mid.clone();
    right[b][j] = mid;
    [left, right]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrange_bound_examples() {
        // feasible vertex 1.0, infeasible vertex 3.0 with positive slack
        assert!((lagrange_bound(&[1.0, 3.0], &[-1.0, 1.0]) - 2.0).abs() < 1e-15);
        assert_eq!(lagrange_bound(&[1.0, 3.0], &[-1.0, -1.0]), 3.0);
    }

    #[test]
    fn tuples_enumerate_products() {
        assert_eq!(tuples(&[2, 3]).len(), 6);
        assert_eq!(tuples(&[3]), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn bisect_halves_longest_edge() {
        let cell: Cell = vec![vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]];
        let [l, r] = bisect(&cell);
        assert_eq!(l[0][0], vec![0.5, 0.5, 0.0]);
        assert_eq!(r[0][1], vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn tv_sup_brackets_exact_value() {
        // r = log 2 ball around (1/2, 1/2); TV to (1/2, 1/2) is |u - 1/2|.
        let block = BallBlock {
            center: vec![0.5, 0.5],
            radius: 2f64.ln(),
        };
        let q = [0.5, 0.5];
        let out = BranchAndBound {
            blocks: std::slice::from_ref(&block),
            objective: Objective::Loss {
                loss: SimplexLoss::Tv,
                q: &q,
            },
            tolerance: 1e-7,
            max_cells: 100_000,
        }
        .run();
        let exact = 0.75f64.sqrt() / 2.0;
        assert!(out.converged);
        assert!(out.value <= exact + 1e-12 && exact <= out.upper + 1e-12);
        assert!(out.upper - out.value <= 1e-7);
    }
}
