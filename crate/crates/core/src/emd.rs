//! Earth Mover's Distance between color signatures.
//!
//! The transport problem is solved exactly: unbalanced inputs get a zero-cost
//! slack row or column, Russell's method supplies a starting basis, and the
//! transportation simplex (u-v potentials) pivots to optimality. Degenerate
//! pivots switch entering/leaving selection to Bland's smallest-index rule,
//! which cannot cycle.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{sq_dist, Point};
use crate::signature::Signature;

/// Weights at or below this are treated as zero.
pub const WEIGHT_FLOOR: f64 = 1e-12;

const BALANCE_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

/// Dense row-major matrix of nonnegative reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.data.chunks(self.cols.max(1)).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.get(r, c);
            }
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Sum of elementwise products.
    pub fn dot(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

pub type GroundMatrix = Matrix;
pub type FlowMatrix = Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmdResult {
    pub distance: f64,
    pub work: f64,
    pub total_flow: f64,
    pub flow: FlowMatrix,
    /// Simplex pivots after the Russell start.
    pub iterations: usize,
}

/// Euclidean distance in RGB.
pub fn ground_distance(a: &Point, b: &Point) -> f64 {
    sq_dist(a, b).sqrt()
}

pub fn ground_matrix(from: &[Point], to: &[Point]) -> GroundMatrix {
    let mut g = Matrix::zeros(from.len(), to.len());
    for (u, a) in from.iter().enumerate() {
        for (v, b) in to.iter().enumerate() {
            g.set(u, v, ground_distance(a, b));
        }
    }
    g
}

fn check_weights(w: &[f64]) -> Result<()> {
    for (index, &value) in w.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    Ok(())
}

fn check_costs(g: &GroundMatrix) -> Result<()> {
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            if !g.get(r, c).is_finite() {
                return Err(Error::NonFiniteCost { row: r, col: c });
            }
        }
    }
    Ok(())
}

fn check_balanced(supplies: &[f64], demands: &[f64]) -> Result<()> {
    let supply: f64 = supplies.iter().sum();
    let demand: f64 = demands.iter().sum();
    if (supply - demand).abs() > BALANCE_TOL * supply.max(demand).max(1.0) {
        return Err(Error::Unbalanced { supply, demand });
    }
    Ok(())
}

/// Basic cells of a transportation basis, in allocation order.
type Basis = Vec<(usize, usize)>;

/// Russell's approximation, returning the flow and its `m + n - 1` basic
/// cells (some possibly at zero flow).
fn russell(supplies: &[f64], demands: &[f64], g: &GroundMatrix) -> (FlowMatrix, Basis) {
    let (m, n) = (supplies.len(), demands.len());
    let mut supply = supplies.to_vec();
    let mut demand = demands.to_vec();
    let mut row_on = vec![true; m];
    let mut col_on = vec![true; n];
    let (mut rows_left, mut cols_left) = (m, n);
    let mut flow = Matrix::zeros(m, n);
    let mut basis = Vec::with_capacity(m + n - 1);
    let scale = supplies.iter().sum::<f64>().max(demands.iter().sum::<f64>()).max(1e-300);
    let exhausted = |x: f64| x <= BALANCE_TOL * scale;

    while rows_left > 0 && cols_left > 0 {
        let row_max: Vec<f64> = (0..m)
            .map(|r| {
                (0..n)
                    .filter(|&c| col_on[c])
                    .map(|c| g.get(r, c))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let col_max: Vec<f64> = (0..n)
            .map(|c| {
                (0..m)
                    .filter(|&r| row_on[r])
                    .map(|r| g.get(r, c))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();

        let mut pick = (usize::MAX, usize::MAX);
        let mut best = f64::INFINITY;
        for r in (0..m).filter(|&r| row_on[r]) {
            for c in (0..n).filter(|&c| col_on[c]) {
                let delta = g.get(r, c) - row_max[r] - col_max[c];
                if delta < best {
                    best = delta;
                    pick = (r, c);
                }
            }
        }
        let (r, c) = pick;

        let last = rows_left == 1 && cols_left == 1;
        let x = if last {
            supply[r].max(demand[c]).max(0.0)
        } else {
            supply[r].min(demand[c]).max(0.0)
        };
        flow.set(r, c, x);
        basis.push((r, c));
        supply[r] -= x;
        demand[c] -= x;

        if last {
            break;
        }
        // Exactly one line leaves per allocation so the basis ends up with
        // m + n - 1 cells; when both are exhausted the other stays active
        // with zero remaining and later takes a degenerate allocation.
        let row_done = exhausted(supply[r]);
        let col_done = exhausted(demand[c]);
        if row_done && (!col_done || rows_left > 1) {
            row_on[r] = false;
            rows_left -= 1;
            demand[c] = demand[c].max(0.0);
        } else {
            col_on[c] = false;
            cols_left -= 1;
            supply[r] = supply[r].max(0.0);
        }
    }
    (flow, basis)
}

/// Russell's initial basic feasible flow for a balanced problem.
pub fn russell_initial_flow(supplies: &[f64], demands: &[f64], g: &GroundMatrix) -> Result<FlowMatrix> {
    if g.rows() != supplies.len() || g.cols() != demands.len() {
        return Err(Error::InvalidArgument("ground matrix shape does not match weights".into()));
    }
    if supplies.is_empty() || demands.is_empty() {
        return Err(Error::Empty("supplies or demands"));
    }
    check_weights(supplies)?;
    check_weights(demands)?;
    check_costs(g)?;
    check_balanced(supplies, demands)?;
    Ok(russell(supplies, demands, g).0)
}

/// Spanning-tree view of a basis over row nodes `0..m` and column nodes
/// `m..m+n`.
struct Tree {
    m: usize,
    adj: Vec<Vec<usize>>,
}

impl Tree {
    fn new(m: usize, n: usize, basis: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); m + n];
        for &(r, c) in basis {
            adj[r].push(m + c);
            adj[m + c].push(r);
        }
        Tree { m, adj }
    }

    fn remove(&mut self, r: usize, c: usize) {
        let cn = self.m + c;
        self.adj[r].retain(|&x| x != cn);
        self.adj[cn].retain(|&x| x != r);
    }

    fn insert(&mut self, r: usize, c: usize) {
        self.adj[r].push(self.m + c);
        self.adj[self.m + c].push(r);
    }

    /// Node path from `from` to `to`, both inclusive.
    fn path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut parent = vec![usize::MAX; self.adj.len()];
        parent[from] = from;
        let mut queue = VecDeque::from([from]);
        while let Some(x) = queue.pop_front() {
            if x == to {
                break;
            }
            for &y in &self.adj[x] {
                if parent[y] == usize::MAX {
                    parent[y] = x;
                    queue.push_back(y);
                }
            }
        }
        if parent[to] == usize::MAX {
            return None;
        }
        let mut path = vec![to];
        let mut x = to;
        while x != from {
            x = parent[x];
            path.push(x);
        }
        path.reverse();
        Some(path)
    }

    /// Dual potentials with `u[0] = 0` and `u[r] + v[c] = g[r][c]` on basic
    /// cells.
    fn potentials(&self, g: &GroundMatrix) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        let mut pot = vec![f64::NAN; self.adj.len()];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(x) = queue.pop_front() {
            for &y in &self.adj[x] {
                if pot[y].is_nan() {
                    let cost = if x < m { g.get(x, y - m) } else { g.get(y, x - m) };
                    pot[y] = cost - pot[x];
                    queue.push_back(y);
                }
            }
        }
        let v = pot.split_off(m);
        (pot, v)
    }
}

/// Transportation simplex on a balanced problem starting from Russell's basis.
fn simplex(supplies: &[f64], demands: &[f64], g: &GroundMatrix) -> Result<(FlowMatrix, usize)> {
    let (m, n) = (supplies.len(), demands.len());
    let (mut flow, basis) = russell(supplies, demands, g);
    let mut in_basis = vec![false; m * n];
    for &(r, c) in &basis {
        in_basis[r * n + c] = true;
    }
    let mut tree = Tree::new(m, n, &basis);
    let tol = 1e-12 * g.max().max(1.0);
    let mut bland = false;
    let mut pivots = 0;

    loop {
        let (u, v) = tree.potentials(g);
        let mut entering = None;
        let mut most_negative = -tol;
        'scan: for r in 0..m {
            for c in 0..n {
                if in_basis[r * n + c] {
                    continue;
                }
                let reduced = g.get(r, c) - u[r] - v[c];
                if bland {
                    if reduced < -tol {
                        entering = Some((r, c));
                        break 'scan;
                    }
                } else if reduced < most_negative {
                    most_negative = reduced;
                    entering = Some((r, c));
                }
            }
        }
        let Some((er, ec)) = entering else {
            return Ok((flow, pivots));
        };
        if pivots >= MAX_PIVOTS {
            return Err(Error::InvalidArgument("transport simplex did not converge".into()));
        }

        // The cycle closes through the tree path from the entering column
        // back to the entering row; cells alternate -, +, -, ... along it.
        let path = tree
            .path(m + ec, er)
            .expect("basis is a spanning tree");
        let cells: Vec<(usize, usize)> = path
            .windows(2)
            .map(|w| if w[0] < m { (w[0], w[1] - m) } else { (w[1], w[0] - m) })
            .collect();
        let mut theta = f64::INFINITY;
        let mut leaving = (usize::MAX, usize::MAX);
        for &(r, c) in cells.iter().step_by(2) {
            let f = flow.get(r, c);
            if f < theta || (f == theta && (r, c) < leaving) {
                theta = f;
                leaving = (r, c);
            }
        }
        let theta = theta.max(0.0);
        for (i, &(r, c)) in cells.iter().enumerate() {
            let f = flow.get(r, c);
            let updated = if i % 2 == 0 { (f - theta).max(0.0) } else { f + theta };
            flow.set(r, c, updated);
        }
        flow.set(er, ec, theta);
        flow.set(leaving.0, leaving.1, 0.0);

        in_basis[leaving.0 * n + leaving.1] = false;
        in_basis[er * n + ec] = true;
        tree.remove(leaving.0, leaving.1);
        tree.insert(er, ec);
        if theta <= 0.0 {
            bland = true;
        }
        pivots += 1;
    }
}

/// Minimum-cost flow satisfying the partial-matching constraints: row sums at
/// most `supplies`, column sums at most `demands`, total equal to the smaller
/// of the two totals.
pub fn solve_transport(g: &GroundMatrix, supplies: &[f64], demands: &[f64]) -> Result<FlowMatrix> {
    solve_transport_counted(g, supplies, demands).map(|(f, _)| f)
}

fn solve_transport_counted(g: &GroundMatrix, supplies: &[f64], demands: &[f64]) -> Result<(FlowMatrix, usize)> {
    if g.rows() != supplies.len() || g.cols() != demands.len() {
        return Err(Error::InvalidArgument("ground matrix shape does not match weights".into()));
    }
    check_weights(supplies)?;
    check_weights(demands)?;
    check_costs(g)?;

    let rows: Vec<usize> = (0..supplies.len()).filter(|&i| supplies[i] > WEIGHT_FLOOR).collect();
    let cols: Vec<usize> = (0..demands.len()).filter(|&j| demands[j] > WEIGHT_FLOOR).collect();
    if rows.is_empty() {
        return Err(Error::Empty("all supplies are zero"));
    }
    if cols.is_empty() {
        return Err(Error::Empty("all demands are zero"));
    }
    let mut s: Vec<f64> = rows.iter().map(|&i| supplies[i]).collect();
    let mut d: Vec<f64> = cols.iter().map(|&j| demands[j]).collect();
    let total_s: f64 = s.iter().sum();
    let total_d: f64 = d.iter().sum();
    let gap = total_s - total_d;
    let slack = gap.abs() > BALANCE_TOL * total_s.max(total_d);
    let (slack_row, slack_col) = (slack && gap < 0.0, slack && gap > 0.0);
    if slack_row {
        s.push(-gap);
    }
    if slack_col {
        d.push(gap);
    }
    if !slack {
        // absorb rounding so Russell sees identical totals
        let last = d.len() - 1;
        d[last] += gap;
    }

    let mut reduced = Matrix::zeros(s.len(), d.len());
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            reduced.set(a, b, g.get(i, j));
        }
    }
    let (inner, pivots) = simplex(&s, &d, &reduced)?;

    let mut flow = Matrix::zeros(g.rows(), g.cols());
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            flow.set(i, j, inner.get(a, b));
        }
    }
    Ok((flow, pivots))
}

/// Earth Mover's Distance: optimal work normalized by the total flow.
pub fn emd(a: &Signature, b: &Signature) -> Result<EmdResult> {
    let g = ground_matrix(&a.centroids, &b.centroids);
    let (flow, iterations) = solve_transport_counted(&g, &a.weights, &b.weights)?;
    let work = g.dot(&flow);
    let total_flow = flow.total();
    Ok(EmdResult {
        distance: work / total_flow,
        work,
        total_flow,
        flow,
        iterations,
    })
}
