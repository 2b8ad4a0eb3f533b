//! Exact earth mover's distance via the transportation simplex (northwest-corner start,
//! MODI potentials, cycle pivots on the spanning-tree basis).

use std::collections::VecDeque;

use crate::error::{invalid, Result};
use crate::field::ScalarField;

/// Reduced costs above this are treated as optimal.
const OPT_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 1_000_000;

/// Minimum total cost of moving `supply` onto `demand` (both non-negative with equal, positive
/// totals up to rounding) under `cost(i, j)`.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: impl Fn(usize, usize) -> f64) -> Result<f64> {
    let check = |v: &[f64], what: &str| -> Result<f64> {
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(invalid!("{what} masses must be finite and non-negative"));
        }
        let s: f64 = v.iter().sum();
        if !(s > 0.0) {
            return Err(invalid!("{what} has zero total mass"));
        }
        Ok(s)
    };
    let (ts, td) = (check(supply, "supply")?, check(demand, "demand")?);
    if ((ts - td) / ts.max(td)).abs() > 1e-9 {
        return Err(invalid!("unbalanced transport: supply {ts} vs demand {td}"));
    }
    // Empty rows and columns carry no flow.
    let rows: Vec<usize> = (0..supply.len()).filter(|&i| supply[i] > 0.0).collect();
    let cols: Vec<usize> = (0..demand.len()).filter(|&j| demand[j] > 0.0).collect();
    let a: Vec<f64> = rows.iter().map(|&i| supply[i]).collect();
    let mut b: Vec<f64> = cols.iter().map(|&j| demand[j]).collect();
    // absorb the rounding imbalance in the last column
    let last = b.len() - 1;
    b[last] += ts - td;
    let c: Vec<Vec<f64>> = rows.iter().map(|&i| cols.iter().map(|&j| cost(i, j)).collect()).collect();
    let mut t = Tableau::northwest(&a, &b);
    t.optimize(&c)?;
    Ok(t.basis.iter().map(|&(i, j, x)| x * c[i][j]).sum())
}

struct Tableau {
    m: usize,
    n: usize,
    /// Basic cells `(row, col, flow)`; always `m + n - 1` of them.
    basis: Vec<(usize, usize, f64)>,
}

impl Tableau {
    fn northwest(a: &[f64], b: &[f64]) -> Self {
        let (m, n) = (a.len(), b.len());
        let (mut s, mut d) = (a.to_vec(), b.to_vec());
        let (mut i, mut j) = (0, 0);
        let mut basis = Vec::with_capacity(m + n - 1);
        for _ in 0..m + n - 1 {
            let x = s[i].min(d[j]).max(0.0);
            basis.push((i, j, x));
            s[i] -= x;
            d[j] -= x;
            // advance exactly one index per step so degenerate ties still yield a spanning tree
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || s[i] <= d[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        Tableau { m, n, basis }
    }

    /// Node ids: rows are `0..m`, columns `m..m+n`.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (k, &(i, j, _)) in self.basis.iter().enumerate() {
            adj[i].push((self.m + j, k));
            adj[self.m + j].push((i, k));
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<(usize, usize)>], c: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let mut pot = vec![f64::NAN; self.m + self.n];
        let mut queue = VecDeque::new();
        pot[0] = 0.0;
        queue.push_back(0);
        while let Some(node) = queue.pop_front() {
            for &(next, k) in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j, _) = self.basis[k];
                    // c_ij = u_i + v_j
                    pot[next] = c[i][j] - pot[node];
                    queue.push_back(next);
                }
            }
        }
        let v = pot.split_off(self.m);
        (pot, v)
    }

    /// Basis indices on the tree path from column node `j` to row node `i`.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let start = self.m + j;
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(node) = queue.pop_front() {
            if node == i {
                break;
            }
            for &(next, k) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    prev[next] = Some((node, k));
                    queue.push_back(next);
                }
            }
        }
        let mut edges = Vec::new();
        let mut node = i;
        while let Some((p, k)) = prev[node] {
            edges.push(k);
            node = p;
        }
        edges.reverse();
        edges
    }

    fn optimize(&mut self, c: &[Vec<f64>]) -> Result<()> {
        for _ in 0..MAX_PIVOTS {
            let adj = self.adjacency();
            let (u, v) = self.potentials(&adj, c);
            let mut best = (-OPT_TOL, usize::MAX, usize::MAX);
            for i in 0..self.m {
                for j in 0..self.n {
                    let r = c[i][j] - u[i] - v[j];
                    if r < best.0 {
                        best = (r, i, j);
                    }
                }
            }
            let (_, ei, ej) = best;
            if ei == usize::MAX {
                return Ok(());
            }
            // The cycle is the entering cell plus the tree path from its column back to its
            // row; path cells alternate between losing and gaining flow, starting with a loss.
            let path = self.path(&adj, ei, ej);
            let mut theta = f64::INFINITY;
            let mut leave = usize::MAX;
            for &k in path.iter().step_by(2) {
                if self.basis[k].2 < theta {
                    theta = self.basis[k].2;
                    leave = k;
                }
            }
            for (step, &k) in path.iter().enumerate() {
                let x = &mut self.basis[k].2;
                if step % 2 == 0 {
                    *x = (*x - theta).max(0.0);
                } else {
                    *x += theta;
                }
            }
            self.basis[leave] = (ei, ej, theta);
        }
        Err(invalid!("transport solver did not converge in {MAX_PIVOTS} pivots"))
    }
}

/// Box-downsampled cell masses on a `grid`×`grid` lattice, normalized to sum 1.
pub fn downsample_mass(f: &ScalarField, grid: usize) -> Result<Vec<f64>> {
    if grid == 0 {
        return Err(invalid!("EMD grid must be positive"));
    }
    if f.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid!("EMD maps must be finite and non-negative"));
    }
    let (h, w) = f.dims();
    let mut cells = vec![0.0; grid * grid];
    for r in 0..h {
        let gr = r * grid / h;
        for c in 0..w {
            cells[gr * grid + c * grid / w] += f.get(r, c);
        }
    }
    let total: f64 = cells.iter().sum();
    if !(total > 0.0) {
        return Err(invalid!("EMD map has zero mass"));
    }
    cells.iter_mut().for_each(|v| *v /= total);
    Ok(cells)
}

/// Earth mover's distance between two maps after box-downsampling to `grid`×`grid`, with
/// Euclidean ground distance in cell units.
pub fn emd(pred: &ScalarField, gt: &ScalarField, grid: usize) -> Result<f64> {
    pred.ensure_same_dims(gt, "ground truth")?;
    let a = downsample_mass(pred, grid)?;
    let b = downsample_mass(gt, grid)?;
    transport_cost(&a, &b, |i, j| {
        let (dr, dc) = ((i / grid) as f64 - (j / grid) as f64, (i % grid) as f64 - (j % grid) as f64);
        (dr * dr + dc * dc).sqrt()
    })
}
