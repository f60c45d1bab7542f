//! Sparse symmetric linear algebra: CSC storage, reverse Cuthill-McKee
//! ordering, and an up-looking LDL^T factorization with a triangular
//! solve. This is all the numerical machinery the DC power-flow solver
//! needs, specialized to symmetric positive-definite systems such as
//! grounded graph Laplacians.

use crate::error::{Error, Result};

/// Sparse symmetric matrix in compressed sparse column form. Both
/// triangles are stored explicitly (each off-diagonal entry appears
/// twice) so that a fill-reducing permutation can read any column and
/// still see the complete row pattern.
#[derive(Debug, Clone)]
pub struct SparseSym {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSym {
    /// Assemble from triplets `(row, col, value)`. Duplicate coordinates
    /// accumulate. The caller is responsible for supplying a symmetric
    /// set of triplets; graph-Laplacian assembly produces one naturally.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n} matrix");
            assert!(v.is_finite(), "non-finite matrix entry at ({i}, {j})");
            columns[j].push((i, v));
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for column in &mut columns {
            column.sort_unstable_by_key(|&(i, _)| i);
            let mut last: Option<usize> = None;
            for &(i, v) in column.iter() {
                if last == Some(i) {
                    *values.last_mut().expect("entry exists") += v;
                } else {
                    row_idx.push(i);
                    values.push(v);
                    last = Some(i);
                }
            }
            col_ptr.push(row_idx.len());
        }
        SparseSym {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Off-diagonal adjacency of the matrix graph, deduplicated and
    /// ascending, for ordering algorithms.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                if i != j {
                    adj[j].push(i);
                }
            }
        }
        adj
    }

    /// y = A x (for tests and residual checks).
    pub fn multiply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let xj = x[j];
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[p]] += self.values[p] * xj;
            }
        }
        y
    }
}

/// Reverse Cuthill-McKee ordering of a graph given by adjacency lists.
/// Returns `perm` with `perm[k]` = the original vertex eliminated at
/// step `k`. Handles disconnected graphs component by component, with
/// deterministic index tie-breaking throughout.
pub fn rcm_order(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    loop {
        let Some(seed) = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)) else {
            break;
        };
        // Two BFS sweeps approximate a peripheral starting vertex.
        let mut start = seed;
        for _ in 0..2 {
            start = bfs_eccentric(start, adjacency, &degree, &visited);
        }
        let mut queue = std::collections::VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = adjacency[u].iter().copied().filter(|&v| !visited[v]).collect();
            next.sort_unstable_by_key(|&v| (degree[v], v));
            next.dedup();
            for v in next {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Farthest vertex from `start` within its unvisited component,
/// breaking ties toward low degree then low index.
fn bfs_eccentric(start: usize, adjacency: &[Vec<usize>], degree: &[usize], visited: &[bool]) -> usize {
    let n = adjacency.len();
    let mut level = vec![usize::MAX; n];
    level[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    let mut frontier = vec![start];
    let mut depth = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if !visited[v] && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                if level[v] > depth {
                    depth = level[v];
                    frontier.clear();
                }
                if level[v] == depth {
                    frontier.push(v);
                }
                queue.push_back(v);
            }
        }
    }
    frontier
        .into_iter()
        .min_by_key(|&v| (degree[v], v))
        .expect("frontier never empty")
}

/// LDL^T factorization of a sparse symmetric positive-definite matrix,
/// P A P^T = L D L^T with unit lower-triangular L and positive diagonal
/// D. Up-looking construction over the elimination tree: one symbolic
/// pass sizes each column of L, one numeric pass fills it.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl LdlFactor {
    /// Factor `a` under the given elimination order (`perm[k]` = original
    /// index eliminated at step `k`). Fails with [`Error::Singular`] on
    /// the first nonpositive pivot, which for a grounded Laplacian means
    /// the underlying graph lost the connection to ground.
    pub fn factor(a: &SparseSym, perm: &[usize]) -> Result<Self> {
        let n = a.n;
        if perm.len() != n {
            return Err(Error::Invalid(format!(
                "permutation has length {}, matrix is {n}x{n}",
                perm.len()
            )));
        }
        let mut iperm = vec![usize::MAX; n];
        for (k, &orig) in perm.iter().enumerate() {
            if orig >= n || iperm[orig] != usize::MAX {
                return Err(Error::Invalid("perm is not a permutation".into()));
            }
            iperm[orig] = k;
        }

        // Symbolic pass: elimination tree and column counts.
        const NONE: usize = usize::MAX;
        let mut parent = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![NONE; n];
        for k in 0..n {
            flag[k] = k;
            let kk = perm[k];
            for p in a.col_ptr[kk]..a.col_ptr[kk + 1] {
                let mut i = iperm[a.row_idx[p]];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];

        // Numeric pass: solve a small triangular system per row of L,
        // scattering through a dense workspace y. `pattern` doubles as
        // path scratch (from the front) and reach stack (from the back).
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        let mut fill = vec![0usize; n];
        let mut flag = vec![NONE; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            let kk = perm[k];
            for p in a.col_ptr[kk]..a.col_ptr[kk + 1] {
                let entry = iperm[a.row_idx[p]];
                if entry > k {
                    continue;
                }
                y[entry] += a.values[p];
                let mut len = 0;
                let mut i = entry;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            while top < n {
                let i = pattern[top];
                top += 1;
                let yi = y[i];
                y[i] = 0.0;
                let p2 = lp[i] + fill[i];
                for p in lp[i]..p2 {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[p2] = k;
                lx[p2] = l_ki;
                fill[i] += 1;
            }
            if !(d[k] > 0.0) || !d[k].is_finite() {
                return Err(Error::Singular { pivot: k });
            }
        }
        Ok(LdlFactor {
            n,
            perm: perm.to_vec(),
            lp,
            li,
            lx,
            d,
        })
    }

    /// Convenience: factor with a fresh RCM ordering of `a`'s graph.
    pub fn factor_rcm(a: &SparseSym) -> Result<Self> {
        let perm = rcm_order(&a.adjacency());
        Self::factor(a, &perm)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The pivots of D, in elimination order. All strictly positive by
    /// construction.
    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    /// Nonzeros in the strictly lower triangle of L.
    pub fn l_nnz(&self) -> usize {
        self.lx.len()
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "right-hand side has wrong length");
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&orig| b[orig]).collect();
        // L z = P b (columns of L are ready in elimination order).
        for k in 0..n {
            let yk = y[k];
            for p in self.lp[k]..self.lp[k + 1] {
                y[self.li[p]] -= self.lx[p] * yk;
            }
        }
        for k in 0..n {
            y[k] /= self.d[k];
        }
        // L^T w = z.
        for k in (0..n).rev() {
            let mut yk = y[k];
            for p in self.lp[k]..self.lp[k + 1] {
                yk -= self.lx[p] * y[self.li[p]];
            }
            y[k] = yk;
        }
        let mut x = vec![0.0; n];
        for (k, &orig) in self.perm.iter().enumerate() {
            x[orig] = y[k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random symmetric diagonally-dominant (hence SPD) matrix with a
    /// random sparse pattern, plus its dense mirror.
    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> (SparseSym, nalgebra::DMatrix<f64>) {
        let mut triplets = Vec::new();
        let mut dense = nalgebra::DMatrix::zeros(n, n);
        let mut rowsum = vec![0.0; n];
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.3) {
                    let v: f64 = rng.gen_range(-2.0..2.0);
                    triplets.push((i, j, v));
                    triplets.push((j, i, v));
                    dense[(i, j)] = v;
                    dense[(j, i)] = v;
                    rowsum[i] += v.abs();
                    rowsum[j] += v.abs();
                }
            }
        }
        for i in 0..n {
            let v = rowsum[i] + rng.gen_range(0.5..1.5);
            triplets.push((i, i, v));
            dense[(i, i)] = v;
        }
        (SparseSym::from_triplets(n, &triplets), dense)
    }

    #[test]
    fn from_triplets_accumulates_duplicates() {
        let a = SparseSym::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 1.0), (0, 1, -0.5), (1, 0, -0.5)]);
        let y = a.multiply(&[1.0, 1.0]);
        assert_eq!(y, vec![2.5, 0.5]);
    }

    #[test]
    fn rcm_is_a_permutation_on_disconnected_graphs() {
        // Two components: a path 0-1-2 and an edge 3-4.
        let adj = vec![vec![1], vec![0, 2], vec![1], vec![4], vec![3]];
        let mut perm = rcm_order(&adj);
        assert_eq!(perm.len(), 5);
        perm.sort_unstable();
        assert_eq!(perm, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn rcm_reduces_bandwidth_on_a_grid() {
        // 2D grid graph, natural order has bandwidth ~ side. RCM should
        // not do worse than the natural ordering.
        let side = 8;
        let idx = |r: usize, c: usize| r * side + c;
        let mut adj = vec![Vec::new(); side * side];
        for r in 0..side {
            for c in 0..side {
                if r + 1 < side {
                    adj[idx(r, c)].push(idx(r + 1, c));
                    adj[idx(r + 1, c)].push(idx(r, c));
                }
                if c + 1 < side {
                    adj[idx(r, c)].push(idx(r, c + 1));
                    adj[idx(r, c + 1)].push(idx(r, c));
                }
            }
        }
        let perm = rcm_order(&adj);
        let mut pos = vec![0; adj.len()];
        for (k, &orig) in perm.iter().enumerate() {
            pos[orig] = k;
        }
        let bandwidth = |pos: &[usize]| {
            let mut b = 0usize;
            for (u, nbrs) in adj.iter().enumerate() {
                for &v in nbrs {
                    b = b.max(pos[u].abs_diff(pos[v]));
                }
            }
            b
        };
        let natural: Vec<usize> = (0..adj.len()).collect();
        assert!(bandwidth(&pos) <= bandwidth(&natural));
    }

    #[test]
    fn ldl_matches_dense_cholesky_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n = rng.gen_range(2..40);
            let (sparse, dense) = random_spd(n, &mut rng);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let factor = LdlFactor::factor_rcm(&sparse).unwrap();
            let x = factor.solve(&b);
            let chol = dense.clone().cholesky().expect("SPD by construction");
            let x_ref = chol.solve(&nalgebra::DVector::from_column_slice(&b));
            for i in 0..n {
                assert!(
                    (x[i] - x_ref[i]).abs() <= 1e-9 * (1.0 + x_ref[i].abs()),
                    "trial {trial}: component {i} differs: {} vs {}",
                    x[i],
                    x_ref[i]
                );
            }
        }
    }

    #[test]
    fn identity_and_rcm_orders_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (sparse, _) = random_spd(25, &mut rng);
        let b: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let natural: Vec<usize> = (0..25).collect();
        let x1 = LdlFactor::factor(&sparse, &natural).unwrap().solve(&b);
        let x2 = LdlFactor::factor_rcm(&sparse).unwrap().solve(&b);
        for i in 0..25 {
            assert!((x1[i] - x2[i]).abs() <= 1e-9 * (1.0 + x1[i].abs()));
        }
    }

    #[test]
    fn residual_stays_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (sparse, _) = random_spd(60, &mut rng);
        let b: Vec<f64> = (0..60).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let x = LdlFactor::factor_rcm(&sparse).unwrap().solve(&b);
        let r = sparse.multiply(&x);
        let bmax = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..60 {
            assert!((r[i] - b[i]).abs() <= 1e-9 * (1.0 + bmax));
        }
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        // A 2x2 all-zero matrix fails at the first pivot; a rank-1
        // Laplacian block (ungrounded) fails at the second.
        let zero = SparseSym::from_triplets(2, &[]);
        assert!(matches!(
            LdlFactor::factor(&zero, &[0, 1]),
            Err(Error::Singular { pivot: 0 })
        ));
        let ungrounded = SparseSym::from_triplets(
            2,
            &[(0, 0, 1.0), (1, 1, 1.0), (0, 1, -1.0), (1, 0, -1.0)],
        );
        assert!(matches!(
            LdlFactor::factor(&ungrounded, &[0, 1]),
            Err(Error::Singular { pivot: 1 })
        ));
    }

    #[test]
    fn pivots_are_positive_for_spd_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let (sparse, _) = random_spd(30, &mut rng);
        let factor = LdlFactor::factor_rcm(&sparse).unwrap();
        assert!(factor.pivots().iter().all(|&p| p > 0.0));
        assert_eq!(factor.pivots().len(), 30);
    }

    #[test]
    fn rejects_bad_permutation() {
        let a = SparseSym::from_triplets(2, &[(0, 0, 1.0), (1, 1, 1.0)]);
        assert!(LdlFactor::factor(&a, &[0]).is_err());
        assert!(LdlFactor::factor(&a, &[0, 0]).is_err());
        assert!(LdlFactor::factor(&a, &[0, 5]).is_err());
    }
}
