//! Dense complex linear algebra for grid-sized matrices.
//!
//! Grids are small (MN <= 256), so everything is dense and hand-rolled: a
//! cache-friendly complex matmul, LU with partial pivoting, and a cheap
//! condition proxy used to reject unusable solves.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::{Error, Result};

/// `a * b` for dense complex matrices. Row-major accumulation over `b`'s rows
/// keeps the inner loop contiguous.
pub fn cmatmul(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    assert_eq!(ac, br, "cmatmul: inner dimensions {ac} vs {br}");
    let mut out = Array2::<Complex64>::zeros((ar, bc));
    let bs = b.as_slice().expect("b contiguous");
    let os = out.as_slice_mut().expect("out contiguous");
    for i in 0..ar {
        let orow = &mut os[i * bc..(i + 1) * bc];
        for k in 0..ac {
            let aik = a[(i, k)];
            if aik == Complex64::new(0.0, 0.0) {
                continue;
            }
            let brow = &bs[k * bc..(k + 1) * bc];
            for j in 0..bc {
                orow[j] += aik * brow[j];
            }
        }
    }
    out
}

/// `a * v` for a dense matrix and vector.
pub fn cmatvec(a: &Array2<Complex64>, v: &Array1<Complex64>) -> Array1<Complex64> {
    let (ar, ac) = a.dim();
    assert_eq!(ac, v.len(), "cmatvec: {ac} vs {}", v.len());
    let vs = v.as_slice().expect("v contiguous");
    let mut out = Array1::<Complex64>::zeros(ar);
    for i in 0..ar {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..ac {
            acc += a[(i, k)] * vs[k];
        }
        out[i] = acc;
    }
    out
}

/// Conjugate transpose.
pub fn hermitian(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (r, c) = a.dim();
    let mut out = Array2::<Complex64>::zeros((c, r));
    for i in 0..r {
        for j in 0..c {
            out[(j, i)] = a[(i, j)].conj();
        }
    }
    out
}

pub fn identity(n: usize) -> Array2<Complex64> {
    Array2::from_diag_elem(n, Complex64::new(1.0, 0.0))
}

pub fn fro_norm(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `||a - b||_F / ||b||_F`, with an absolute norm when `b` is zero.
pub fn rel_fro_err(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    let denom = fro_norm(b);
    let diff = a - b;
    let num = fro_norm(&diff);
    if denom == 0.0 {
        num
    } else {
        num / denom
    }
}

/// LU factors of a square complex matrix with partial pivoting.
#[derive(Debug)]
pub struct CluFactors {
    lu: Array2<Complex64>,
    piv: Vec<usize>,
    /// Ratio max|U_ii| / min|U_ii|; a cheap lower bound on the condition number.
    pub condition_proxy: f64,
}

/// Factor `a` (consumed) into PLU form. Fails when the pivot ratio exceeds
/// `1e12`, which marks the system as numerically singular.
pub fn clu_factor(mut a: Array2<Complex64>) -> Result<CluFactors> {
    let (n, nc) = a.dim();
    if n != nc {
        return Err(Error::Dimension {
            op: "clu_factor",
            expected: "square matrix".into(),
            got: format!("{n}x{nc}"),
        });
    }
    let mut piv = Vec::with_capacity(n);
    for col in 0..n {
        // Partial pivot: largest magnitude on/below the diagonal.
        let mut best = col;
        let mut best_mag = a[(col, col)].norm_sqr();
        for r in col + 1..n {
            let mag = a[(r, col)].norm_sqr();
            if mag > best_mag {
                best = r;
                best_mag = mag;
            }
        }
        if best != col {
            for c in 0..n {
                let tmp = a[(col, c)];
                a[(col, c)] = a[(best, c)];
                a[(best, c)] = tmp;
            }
        }
        piv.push(best);
        let pivot = a[(col, col)];
        if pivot.norm() == 0.0 {
            return Err(Error::numerical(format!(
                "singular matrix in LU factorization at column {col}"
            )));
        }
        for r in col + 1..n {
            let factor = a[(r, col)] / pivot;
            a[(r, col)] = factor;
            for c in col + 1..n {
                let sub = factor * a[(col, c)];
                a[(r, c)] -= sub;
            }
        }
    }
    let mut dmax = 0.0f64;
    let mut dmin = f64::INFINITY;
    for i in 0..n {
        let d = a[(i, i)].norm();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    let condition_proxy = if dmin == 0.0 { f64::INFINITY } else { dmax / dmin };
    if !(condition_proxy < 1e12) {
        return Err(Error::numerical(format!(
            "matrix numerically singular: condition estimate {condition_proxy:.3e} exceeds 1e12"
        )));
    }
    Ok(CluFactors { lu: a, piv, condition_proxy })
}

impl CluFactors {
    pub fn n(&self) -> usize {
        self.lu.dim().0
    }

    /// Solve `A x = b` for one right-hand side.
    pub fn solve_vec(&self, b: &Array1<Complex64>) -> Result<Array1<Complex64>> {
        let n = self.n();
        if b.len() != n {
            return Err(Error::Dimension {
                op: "CluFactors::solve_vec",
                expected: format!("{n}"),
                got: format!("{}", b.len()),
            });
        }
        let mut x = b.clone();
        // Apply row swaps, then forward/back substitution.
        for i in 0..n {
            let p = self.piv[i];
            if p != i {
                x.swap(i, p);
            }
        }
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc / self.lu[(i, i)];
        }
        Ok(x)
    }

    /// Solve `A X = B` column by column.
    pub fn solve_mat(&self, b: &Array2<Complex64>) -> Result<Array2<Complex64>> {
        let n = self.n();
        if b.dim().0 != n {
            return Err(Error::Dimension {
                op: "CluFactors::solve_mat",
                expected: format!("{n} rows"),
                got: format!("{} rows", b.dim().0),
            });
        }
        let cols = b.dim().1;
        let mut out = Array2::<Complex64>::zeros((n, cols));
        for c in 0..cols {
            let col = Array1::from_iter((0..n).map(|r| b[(r, c)]));
            let x = self.solve_vec(&col)?;
            for r in 0..n {
                out[(r, c)] = x[r];
            }
        }
        Ok(out)
    }
}

/// One-shot solve of `A x = b`.
pub fn solve_vec(a: Array2<Complex64>, b: &Array1<Complex64>) -> Result<Array1<Complex64>> {
    clu_factor(a)?.solve_vec(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_complex_gaussian, RngFactory};

    fn random_matrix(n: usize, stream: u64) -> Array2<Complex64> {
        let f = RngFactory::new(99);
        let v = standard_complex_gaussian(&mut f.stream(stream), n * n);
        Array2::from_shape_vec((n, n), v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_matches_manual_expansion() {
        // 2x2 worked example: [[1+i, 2], [0, i]] * [[1, i], [1-i, 3]]
        let a = ndarray::arr2(&[
            [Complex64::new(1.0, 1.0), Complex64::new(2.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0)],
        ]);
        let b = ndarray::arr2(&[
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)],
            [Complex64::new(1.0, -1.0), Complex64::new(3.0, 0.0)],
        ]);
        let c = cmatmul(&a, &b);
        // (1+i)*1 + 2*(1-i) = 3 - i ; (1+i)*i + 2*3 = 5 + i
        assert!((c[(0, 0)] - Complex64::new(3.0, -1.0)).norm() < 1e-14);
        assert!((c[(0, 1)] - Complex64::new(5.0, 1.0)).norm() < 1e-14);
        // i*(1-i) = 1 + i ; i*3 = 3i
        assert!((c[(1, 0)] - Complex64::new(1.0, 1.0)).norm() < 1e-14);
        assert!((c[(1, 1)] - Complex64::new(0.0, 3.0)).norm() < 1e-14);
    }

    #[test]
    fn lu_solve_recovers_known_solution() {
        let n = 24;
        let a = {
            let mut a = random_matrix(n, 1);
            // Diagonal boost keeps the system comfortably conditioned.
            for i in 0..n {
                a[(i, i)] += Complex64::new(4.0, 0.0);
            }
            a
        };
        let x_true = standard_complex_gaussian(&mut RngFactory::new(99).stream(2), n);
        let b = cmatvec(&a, &x_true);
        let x = solve_vec(a, &b).unwrap();
        let err: f64 = x.iter().zip(x_true.iter()).map(|(p, q)| (p - q).norm_sqr()).sum();
        assert!(err.sqrt() < 1e-9, "residual {err}");
    }

    #[test]
    fn singular_matrix_rejected_with_condition_estimate() {
        let mut a = Array2::<Complex64>::zeros((3, 3));
        a[(0, 0)] = Complex64::new(1.0, 0.0);
        a[(1, 1)] = Complex64::new(1.0, 0.0);
        // Third row identical to first -> rank deficient.
        a[(2, 0)] = Complex64::new(1.0, 0.0);
        let err = clu_factor(a).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
    }

    #[test]
    fn hermitian_is_involutive() {
        let a = random_matrix(5, 3);
        assert!(rel_fro_err(&hermitian(&hermitian(&a)), &a) < 1e-15);
    }
}
