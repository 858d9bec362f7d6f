use std::collections::VecDeque;

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use super::{DeformError, Result};

#[derive(Debug, Clone, Copy)]
enum Slot {
    Free(usize),
    Fixed(usize),
}

/// A symmetric positive definite system with some unknowns pinned to given
/// values. The free block is reordered (reverse Cuthill-McKee) and factored
/// once; each [`solve`](Self::solve) is two triangular sweeps.
pub struct SparseSystem {
    slots: Vec<Slot>,
    free: Vec<usize>,
    fixed: Vec<usize>,
    /// `(free row, fixed col, value)` entries of the off-diagonal block.
    coupling: Vec<(usize, usize, f64)>,
    factor: CscCholesky<f64>,
}

impl std::fmt::Debug for SparseSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseSystem")
            .field("free", &self.free.len())
            .field("fixed", &self.fixed.len())
            .finish()
    }
}

impl SparseSystem {
    pub fn new(matrix: &CscMatrix<f64>, fixed: &[usize]) -> Result<Self> {
        let n = matrix.nrows();
        let mut is_fixed = vec![false; n];
        for &i in fixed {
            is_fixed[i] = true;
        }
        let free_natural: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
        let mut local = vec![usize::MAX; n];
        for (k, &i) in free_natural.iter().enumerate() {
            local[i] = k;
        }
        let mut adjacency = vec![Vec::new(); free_natural.len()];
        for (r, c, _) in matrix.triplet_iter() {
            if r != c && !is_fixed[r] && !is_fixed[c] {
                adjacency[local[r]].push(local[c]);
            }
        }
        let order = reverse_cuthill_mckee(&mut adjacency);
        let free: Vec<usize> = order.iter().map(|&k| free_natural[k]).collect();

        let mut slots = vec![Slot::Free(0); n];
        for (k, &i) in free.iter().enumerate() {
            slots[i] = Slot::Free(k);
        }
        let mut fixed_list = Vec::with_capacity(fixed.len());
        for &i in fixed {
            if let Slot::Free(_) = slots[i] {
                slots[i] = Slot::Fixed(fixed_list.len());
                fixed_list.push(i);
            }
        }

        let nf = free.len();
        let mut block = CooMatrix::new(nf, nf);
        let mut coupling = Vec::new();
        for (r, c, &v) in matrix.triplet_iter() {
            match (slots[r], slots[c]) {
                (Slot::Free(a), Slot::Free(b)) => block.push(a, b, v),
                (Slot::Free(a), Slot::Fixed(b)) => coupling.push((a, b, v)),
                _ => {}
            }
        }
        let factor = CscCholesky::factor(&CscMatrix::from(&block))
            .map_err(|e| DeformError::Factorization(format!("{e:?}")))?;
        Ok(Self {
            slots,
            free,
            fixed: fixed_list,
            coupling,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    /// Solve `A_ff x_f = rhs_f - A_fc x_c`. `rhs` has one row per unknown
    /// (rows of fixed unknowns are ignored) and `fixed_values` one row per
    /// fixed unknown, in the order given to [`new`](Self::new) with duplicates
    /// removed. Returns the full solution including the fixed rows.
    pub fn solve(&self, rhs: &DMatrix<f64>, fixed_values: &DMatrix<f64>) -> DMatrix<f64> {
        let cols = rhs.ncols();
        let mut b = DMatrix::from_fn(self.free.len(), cols, |r, c| rhs[(self.free[r], c)]);
        for &(r, c, v) in &self.coupling {
            for k in 0..cols {
                b[(r, k)] -= v * fixed_values[(c, k)];
            }
        }
        let x = if self.free.is_empty() { b } else { self.factor.solve(&b) };
        let mut out = DMatrix::zeros(self.dim(), cols);
        for (r, &i) in self.free.iter().enumerate() {
            out.row_mut(i).copy_from(&x.row(r));
        }
        for (r, &i) in self.fixed.iter().enumerate() {
            out.row_mut(i).copy_from(&fixed_values.row(r));
        }
        out
    }
}

/// Bandwidth-reducing permutation; `order[k]` is the old index placed at `k`.
fn reverse_cuthill_mckee(adjacency: &mut [Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency
        .iter_mut()
        .map(|a| {
            a.sort_unstable();
            a.dedup();
            a.len()
        })
        .collect();
    for a in adjacency.iter_mut() {
        a.sort_by_key(|&j| degree[j]);
    }
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| degree[i]);
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for &start in &by_degree {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}
