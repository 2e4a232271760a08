//! Sparse factorization of the ranking system `(D - alpha*W) f = y` and
//! seed propagation on top of it.
//!
//! The system matrix is symmetric, strictly diagonally dominant with a
//! positive diagonal for `0 < alpha < 1`, hence positive definite; it is
//! factored once per graph as `L D L^T` (up-looking simplicial scheme over
//! the elimination tree) and reused across seed vectors.

use crate::error::{Error, Result};
use crate::graph::{min_max_normalize, AffinityGraph, SeedVector};

/// Compressed sparse column storage of the upper triangle (diagonal
/// included), row indices ascending within each column.
struct CscUpper {
    n: usize,
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    values: Vec<f64>,
}

fn build_system(g: &AffinityGraph, alpha: f64) -> CscUpper {
    let n = g.size();
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowind = Vec::new();
    let mut values = Vec::new();
    colptr.push(0);
    for j in 0..n {
        for &(i, w) in g.neighbors(j) {
            if i < j {
                rowind.push(i);
                values.push(-alpha * w);
            }
        }
        rowind.push(j);
        values.push(g.degree(j));
        colptr.push(rowind.len());
    }
    CscUpper { n, colptr, rowind, values }
}

struct LdlFactor {
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
}

fn ldl_factor(a: &CscUpper) -> Result<LdlFactor> {
    let n = a.n;
    // elimination tree and per-column counts of L
    let mut parent = vec![usize::MAX; n];
    let mut lnz = vec![0usize; n];
    let mut flag = vec![usize::MAX; n];
    for k in 0..n {
        flag[k] = k;
        for p in a.colptr[k]..a.colptr[k + 1] {
            let mut i = a.rowind[p];
            while i < k && flag[i] != k {
                if parent[i] == usize::MAX {
                    parent[i] = k;
                }
                lnz[i] += 1;
                flag[i] = k;
                i = parent[i];
            }
        }
    }
    let mut colptr = vec![0usize; n + 1];
    for k in 0..n {
        colptr[k + 1] = colptr[k] + lnz[k];
    }
    let nnz = colptr[n];
    let mut rowind = vec![0usize; nnz];
    let mut values = vec![0.0f64; nnz];
    let mut diag = vec![0.0f64; n];
    let mut y = vec![0.0f64; n];
    let mut pattern = vec![0usize; n];
    let mut used = vec![0usize; n];
    let mut flag = vec![usize::MAX; n];
    for k in 0..n {
        let mut top = n;
        flag[k] = k;
        for p in a.colptr[k]..a.colptr[k + 1] {
            let entry = a.rowind[p];
            if entry > k {
                continue;
            }
            y[entry] += a.values[p];
            let mut len = 0usize;
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
        diag[k] = y[k];
        y[k] = 0.0;
        for s in top..n {
            let i = pattern[s];
            let yi = y[i];
            y[i] = 0.0;
            let p2 = colptr[i] + used[i];
            for p in colptr[i]..p2 {
                y[rowind[p]] -= values[p] * yi;
            }
            let lki = yi / diag[i];
            diag[k] -= lki * yi;
            rowind[p2] = k;
            values[p2] = lki;
            used[i] += 1;
        }
        if !(diag[k].is_finite() && diag[k] > 0.0) {
            return Err(Error::SolveFailure(format!(
                "non-positive pivot {} at column {k}",
                diag[k]
            )));
        }
    }
    Ok(LdlFactor { colptr, rowind, values, diag })
}

impl LdlFactor {
    fn n(&self) -> usize {
        self.diag.len()
    }

    /// In-place solve of `L D L^T x = b`.
    fn solve(&self, b: &mut [f64]) {
        let n = self.n();
        for j in 0..n {
            let xj = b[j];
            if xj != 0.0 {
                for p in self.colptr[j]..self.colptr[j + 1] {
                    b[self.rowind[p]] -= self.values[p] * xj;
                }
            }
        }
        for j in 0..n {
            b[j] /= self.diag[j];
        }
        for j in (0..n).rev() {
            let mut xj = b[j];
            for p in self.colptr[j]..self.colptr[j + 1] {
                xj -= self.values[p] * b[self.rowind[p]];
            }
            b[j] = xj;
        }
    }

    /// Diagonal entry `(A^-1)_{ii}` via a forward solve: with `A = L D L^T`,
    /// it equals the D^-1-weighted square norm of `L^-1 e_i`.
    fn inverse_diagonal_entry(&self, i: usize) -> f64 {
        let n = self.n();
        let mut z = vec![0.0f64; n];
        z[i] = 1.0;
        for j in i..n {
            let zj = z[j];
            if zj != 0.0 {
                for p in self.colptr[j]..self.colptr[j + 1] {
                    z[self.rowind[p]] -= self.values[p] * zj;
                }
            }
        }
        z.iter().zip(&self.diag).map(|(&v, &d)| v * v / d).sum()
    }
}

/// Factored manifold-ranking operator for one graph and one `alpha`.
///
/// `rank` returns `(D - alpha*W)^-1 y` with the diagonal of the implied
/// learned matrix zeroed per query, so every node is ranked by the other
/// nodes and never by itself.
pub struct RankingSolver {
    system: CscUpper,
    factor: LdlFactor,
}

impl RankingSolver {
    pub fn new(g: &AffinityGraph, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArg(format!("alpha {alpha} outside (0,1)")));
        }
        let system = build_system(g, alpha);
        let factor = ldl_factor(&system)?;
        Ok(Self { system, factor })
    }

    pub fn size(&self) -> usize {
        self.system.n
    }

    fn residual_check(&self, f: &[f64], y: &[f64]) -> Result<()> {
        let n = self.system.n;
        let mut r: Vec<f64> = y.to_vec();
        for j in 0..n {
            for p in self.system.colptr[j]..self.system.colptr[j + 1] {
                let i = self.system.rowind[p];
                let v = self.system.values[p];
                r[i] -= v * f[j];
                if i != j {
                    r[j] -= v * f[i];
                }
            }
        }
        let res = r.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let scale = y.iter().fold(1.0f64, |m, &v| m.max(v.abs()));
        if res > 1e-8 * scale {
            return Err(Error::SolveFailure(format!("residual {res:.3e} exceeds tolerance")));
        }
        Ok(())
    }

    /// Plain linear solve `f = (D - alpha*W)^-1 y`.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.system.n {
            return Err(Error::DimMismatch(format!(
                "seed vector has {} entries, graph has {} nodes",
                y.len(),
                self.system.n
            )));
        }
        let mut f = y.to_vec();
        self.factor.solve(&mut f);
        self.residual_check(&f, y)?;
        Ok(f)
    }

    /// Ranked values: the solve, minus each query's self-affinity
    /// (`f_i -= (W_L)_{ii} * y_i`).
    pub fn rank(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut f = self.solve(y)?;
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                f[i] -= self.factor.inverse_diagonal_entry(i) * yi;
            }
        }
        Ok(f)
    }
}

/// Element-wise seeded ratio `(ff - eta*fb) / (ff + eta*fb)` with `0/0 -> 0`.
pub fn seed_ratio(ff: &[f64], fb: &[f64], eta: f64) -> Vec<f64> {
    ff.iter()
        .zip(fb)
        .map(|(&a, &b)| {
            let a = a.max(0.0);
            let b = b.max(0.0);
            let den = a + eta * b;
            if den == 0.0 {
                0.0
            } else {
                (a - eta * b) / den
            }
        })
        .collect()
}

/// Propagates foreground and background seeds through the solver and
/// combines them into a single field, min-max normalized to `[0,1]`.
pub fn propagate(
    solver: &RankingSolver,
    foreground: &SeedVector,
    background: &SeedVector,
    eta: f64,
) -> Result<Vec<f64>> {
    if eta <= 0.0 {
        return Err(Error::InvalidArg("eta must be positive".into()));
    }
    if foreground.is_empty() && background.is_empty() {
        return Err(Error::DegenerateSeeds("both seed vectors are all-zero".into()));
    }
    let ff = solver.rank(&foreground.to_dense())?;
    let fb = solver.rank(&background.to_dense())?;
    let mut out = seed_ratio(&ff, &fb, eta);
    min_max_normalize(&mut out);
    Ok(out)
}
