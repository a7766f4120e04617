//! Sparse direct LU factorization, factor once and solve many times.
//!
//! Numerics are delegated to faer's supernodal LU (partial pivoting, COLAMD
//! fill-reducing column ordering). Everything runs sequentially so solves
//! are bitwise reproducible. The symbolic analysis is cached per sparsity
//! pattern, so repeated factorizations on a fixed layout only redo the
//! numeric phase.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuRef, NumericLu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par};
use rayon::prelude::*;

use super::sparse::{norm2, Pattern, SparseMatrix};
use crate::error::{Error, Result};

/// Relative residual above which a freshly computed factorization is
/// declared numerically singular.
const SINGULAR_RESIDUAL: f64 = 1e-6;

/// A completed LU factorization. Immutable; solves may run concurrently.
#[derive(Debug)]
pub struct Factorization {
    symbolic: Arc<SymbolicLu<usize>>,
    numeric: NumericLu<usize, f64>,
    n: usize,
    solve_count: AtomicUsize,
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of right-hand sides solved so far.
    pub fn solve_count(&self) -> usize {
        self.solve_count.load(Ordering::Relaxed)
    }

    fn solve_uncounted(&self, rhs: &mut [f64]) {
        // The factored matrix is A^T (CSR of A read as CSC), so A x = b is
        // a transpose solve.
        let lu = LuRef::new_unchecked(&self.symbolic, &self.numeric);
        let req = self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq);
        let mut buf = MemBuffer::new(req);
        let x = MatMut::from_column_major_slice_mut(rhs, self.n, 1);
        lu.solve_transpose_in_place_with_conj(Conj::No, x, Par::Seq, MemStack::new(&mut buf));
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::RhsDimension {
                member: 0,
                found: b.len(),
                expected: self.n,
            });
        }
        let mut x = b.to_vec();
        self.solve_uncounted(&mut x);
        self.solve_count.fetch_add(1, Ordering::Relaxed);
        Ok(x)
    }

    /// Solves for every right-hand side in the block against this single
    /// factorization. Solves run in parallel; each is independent and
    /// deterministic.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if let Some((member, b)) = rhs.iter().enumerate().find(|(_, b)| b.len() != self.n) {
            return Err(Error::RhsDimension {
                member,
                found: b.len(),
                expected: self.n,
            });
        }
        let out = rhs
            .par_iter()
            .map(|b| {
                let mut x = b.clone();
                self.solve_uncounted(&mut x);
                x
            })
            .collect();
        self.solve_count.fetch_add(rhs.len(), Ordering::Relaxed);
        Ok(out)
    }
}

/// Produces factorizations and counts them. Reuses the symbolic analysis
/// while the sparsity pattern stays the same.
#[derive(Default)]
pub struct Factorizer {
    cached: Option<(Arc<Pattern>, Arc<SymbolicLu<usize>>)>,
    count: usize,
    // Storage handed back through `recycle`, reused to avoid reallocating
    // (and page-faulting) large buffers every step.
    spare: Option<NumericLu<usize, f64>>,
    scratch: Option<MemBuffer>,
}

impl std::fmt::Debug for Factorizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorizer")
            .field("count", &self.count)
            .field("symbolic_cached", &self.cached.is_some())
            .finish()
    }
}

impl Factorizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Numeric factorizations performed so far.
    pub fn factorization_count(&self) -> usize {
        self.count
    }

    pub fn factorize(&mut self, a: &SparseMatrix) -> Result<Factorization> {
        if a.n_rows() != a.n_cols() {
            return Err(Error::Dimension(format!(
                "cannot factorize a {}x{} matrix",
                a.n_rows(),
                a.n_cols()
            )));
        }
        let n = a.n_rows();
        let structure = SymbolicSparseColMatRef::new_checked(n, n, a.row_offsets(), None, a.col_indices());
        let symbolic = match &self.cached {
            Some((p, s)) if Arc::ptr_eq(p, a.pattern()) || **p == **a.pattern() => s.clone(),
            _ => {
                let s = Arc::new(
                    factorize_symbolic_lu(structure, Default::default())
                        .map_err(|e| Error::Dimension(format!("symbolic analysis failed: {e:?}")))?,
                );
                self.cached = Some((a.pattern().clone(), s.clone()));
                s
            }
        };
        let mut numeric = self.spare.take().unwrap_or_default();
        {
            let req = symbolic.factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default());
            let buf = match &mut self.scratch {
                Some(b) if b.len() >= req.unaligned_bytes_required() => b,
                slot => slot.insert(MemBuffer::new(req)),
            };
            let mat = SparseColMatRef::new(structure, a.values());
            symbolic
                .factorize_numeric_lu(&mut numeric, mat, Par::Seq, MemStack::new(buf), Default::default())
                .map_err(|e| match e {
                    LuError::SymbolicSingular { index } => Error::SingularMatrix { pivot: index },
                    LuError::Generic(g) => Error::Dimension(format!("factorization failed: {g:?}")),
                })?;
        }
        self.count += 1;
        let f = Factorization {
            symbolic,
            numeric,
            n,
            solve_count: AtomicUsize::new(0),
        };
        check_nonsingular(a, &f)?;
        Ok(f)
    }
}

impl Factorizer {
    /// Returns a factorization's storage for reuse by the next call.
    pub fn recycle(&mut self, f: Factorization) {
        self.spare = Some(f.numeric);
    }
}

/// Convenience: one-off factorization without symbolic reuse.
pub fn factorize(a: &SparseMatrix) -> Result<Factorization> {
    Factorizer::new().factorize(a)
}

// faer does not report tiny pivots, so singularity is detected from a probe
// solve: x = 1 is recovered from b = A 1 unless the factors are degenerate.
fn check_nonsingular(a: &SparseMatrix, f: &Factorization) -> Result<()> {
    let n = f.n;
    if n == 0 {
        return Ok(());
    }
    let ones = vec![1.0; n];
    let b = a.mul_vec(&ones);
    let mut x = b.clone();
    f.solve_uncounted(&mut x);
    let ax = a.mul_vec(&x);
    let res: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
    let scale = norm2(&b).max(f64::MIN_POSITIVE);
    let worst = || {
        x.iter()
            .enumerate()
            .map(|(i, v)| (i, if v.is_finite() { (v - 1.0).abs() } else { f64::INFINITY }))
            .fold((0, -1.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc })
            .0
    };
    let rel = norm2(&res) / scale;
    let solution_err = x.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    if !rel.is_finite() || rel > SINGULAR_RESIDUAL || !solution_err.is_finite() {
        return Err(Error::SingularMatrix { pivot: worst() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        let mut diag = vec![1.0; n];
        for i in 0..n {
            for _ in 0..3 {
                let j = rng.random_range(0..n);
                if j != i {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    t.push((i, j, v));
                    t.push((j, i, v));
                    diag[i] += v.abs();
                    diag[j] += v.abs();
                }
            }
        }
        t.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn identity_solve() {
        let f = factorize(&SparseMatrix::identity(5)).unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(f.solve(&b).unwrap(), b);
    }

    #[test]
    fn two_by_two() {
        let a = SparseMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let x = factorize(&a).unwrap().solve(&[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn nonsymmetric_needs_transpose_handling() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 0.0], vec![4.0, 0.0, 1.0]]);
        let x_true = [1.0, -1.0, 2.0];
        let b = a.mul_vec(&x_true);
        let x = factorize(&a).unwrap().solve(&b).unwrap();
        for (u, v) in x.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn random_spd_residual() {
        let a = random_spd(50, 7);
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let x = factorize(&a).unwrap().solve(&b).unwrap();
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) / norm2(&b) <= 1e-10);
    }

    #[test]
    fn singular_detected() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(factorize(&a), Err(Error::SingularMatrix { .. })));
        let z = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        assert!(matches!(factorize(&z), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn solve_many_matches_solve() {
        let a = random_spd(40, 3);
        let mut fz = Factorizer::new();
        let f = fz.factorize(&a).unwrap();
        let rhs: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..40).map(|i| ((i * (k + 1)) as f64).cos()).collect())
            .collect();
        let many = f.solve_many(&rhs).unwrap();
        assert_eq!(f.solve_count(), 4);
        for (b, x) in rhs.iter().zip(&many) {
            assert_eq!(&f.solve(b).unwrap(), x);
        }
        assert_eq!(f.solve_count(), 8);
        assert_eq!(fz.factorization_count(), 1);
    }

    #[test]
    fn solve_many_identical_rhs_bitwise() {
        let f = factorize(&random_spd(30, 11)).unwrap();
        let b: Vec<f64> = (0..30).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let xs = f.solve_many(&vec![b; 5]).unwrap();
        assert!(xs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn solve_many_empty_and_mismatch() {
        let f = factorize(&SparseMatrix::identity(3)).unwrap();
        assert!(f.solve_many(&[]).unwrap().is_empty());
        assert_eq!(f.solve_count(), 0);
        let err = f.solve_many(&[vec![0.0; 3], vec![0.0; 2]]).unwrap_err();
        assert!(matches!(err, Error::RhsDimension { member: 1, found: 2, expected: 3 }));
        assert_eq!(f.solve_count(), 0);
    }

    #[test]
    fn symbolic_reused_for_same_pattern() {
        let a = random_spd(20, 5);
        let mut scaled = a.clone();
        scaled.values_mut().iter_mut().for_each(|v| *v *= 2.0);
        let mut fz = Factorizer::new();
        let b = vec![1.0; 20];
        let x1 = fz.factorize(&a).unwrap().solve(&b).unwrap();
        let x2 = fz.factorize(&scaled).unwrap().solve(&b).unwrap();
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - 2.0 * q).abs() < 1e-12);
        }
        assert_eq!(fz.factorization_count(), 2);
    }
}
