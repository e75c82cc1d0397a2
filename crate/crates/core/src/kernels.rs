//! Dense complex linear algebra: least squares, rank decisions, nullspaces,
//! and eigenvalues. Everything is built on nalgebra's SVD and Schur
//! decompositions.

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<C64>;

/// Default relative rank threshold.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Outcome of a rank-revealing SVD.
#[derive(Clone, Debug, PartialEq)]
pub struct RankDecision {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub gap_ratio: f64,
    pub tolerance_used: f64,
}

impl RankDecision {
    /// Number of columns minus rank.
    pub fn nullity(&self, cols: usize) -> usize {
        cols - self.rank
    }
}

struct FullSvd {
    sigma: Vec<f64>,
    // columns are right singular vectors, all `cols` of them
    v: DenseMatrix,
    u: DenseMatrix,
}

fn full_svd(a: &DenseMatrix, want_u: bool) -> FullSvd {
    let (m, n) = a.shape();
    // nalgebra only returns min(m, n) right singular vectors, so pad wide
    // matrices with zero rows to recover the complete nullspace
    let padded;
    let work = if m < n {
        padded = a.clone().resize(n, n, C64::new(0.0, 0.0));
        &padded
    } else {
        a
    };
    let svd = SVD::new(work.clone(), want_u, true);
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let v = svd.v_t.expect("requested V").adjoint();
    let u = match svd.u {
        Some(u) => u.rows(0, m).into_owned(),
        None => DMatrix::zeros(0, 0),
    };
    FullSvd { sigma, v, u }
}

fn cutoff(sigma: &[f64], tol: f64) -> f64 {
    tol * sigma.first().copied().unwrap_or(0.0)
}

/// Minimum-norm least-squares solution of `A x = b`.
pub fn lstsq_min_norm(a: &DenseMatrix, b: &DVector<C64>) -> Result<DVector<C64>> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows, right-hand side has {}",
            a.nrows(),
            b.len()
        )));
    }
    let (m, n) = a.shape();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let svd = SVD::new(a.clone(), true, true);
    let s1 = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = m.max(n) as f64 * f64::EPSILON * s1;
    let u = svd.u.as_ref().unwrap();
    let v_t = svd.v_t.as_ref().unwrap();
    let mut x = DVector::zeros(n);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > eps && s > 0.0 {
            let coef = u.column(k).dotc(b) / s;
            x += v_t.row(k).adjoint() * coef;
        }
    }
    Ok(x)
}

/// Rank decision with a threshold relative to the largest singular value.
pub fn svd_rank(a: &DenseMatrix, tol: f64) -> RankDecision {
    let (m, n) = a.shape();
    let sigma: Vec<f64> = if m == 0 || n == 0 {
        Vec::new()
    } else {
        let mut s: Vec<f64> = SVD::new(a.clone(), false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        s.sort_by(|x, y| y.partial_cmp(x).unwrap());
        s
    };
    rank_from_sigma(sigma, tol)
}

fn rank_from_sigma(sigma: Vec<f64>, tol: f64) -> RankDecision {
    let cut = cutoff(&sigma, tol);
    let rank = if sigma.first().copied().unwrap_or(0.0) == 0.0 {
        0
    } else {
        sigma.iter().filter(|&&s| s > cut).count()
    };
    let gap_ratio = if rank == 0 || rank >= sigma.len() {
        f64::INFINITY
    } else if sigma[rank] == 0.0 {
        f64::INFINITY
    } else {
        sigma[rank - 1] / sigma[rank]
    };
    RankDecision {
        rank,
        singular_values: sigma,
        gap_ratio,
        tolerance_used: tol,
    }
}

/// Orthonormal basis of right singular vectors whose singular values are at
/// most `tol * sigma_1`.
pub fn nullspace(a: &DenseMatrix, tol: f64) -> Vec<DVector<C64>> {
    nullspace_with_rank(a, tol).0
}

/// Nullspace together with the rank record that produced it.
pub fn nullspace_with_rank(a: &DenseMatrix, tol: f64) -> (Vec<DVector<C64>>, RankDecision) {
    let n = a.ncols();
    let svd = full_svd(a, false);
    let (sigma, v) = sorted_sigma_v(svd.sigma, svd.v, n);
    let rd = rank_from_sigma(sigma.iter().take(a.nrows().min(n)).copied().collect(), tol);
    let basis = (rd.rank..n).map(|k| v.column(k).into_owned()).collect();
    (basis, rd)
}

/// The last `k` right singular vectors (smallest singular values first is
/// *not* guaranteed; columns are ordered by descending singular value).
pub fn smallest_right_singular(a: &DenseMatrix, k: usize) -> (Vec<DVector<C64>>, Vec<f64>) {
    let n = a.ncols();
    let svd = full_svd(a, false);
    let (sigma, v) = sorted_sigma_v(svd.sigma, svd.v, n);
    let vecs = (n.saturating_sub(k)..n).map(|j| v.column(j).into_owned()).collect();
    (vecs, sigma)
}

// Sorts singular triplets descending; padded rows contribute exact zeros.
fn sorted_sigma_v(sigma: Vec<f64>, v: DenseMatrix, n: usize) -> (Vec<f64>, DenseMatrix) {
    let mut idx: Vec<usize> = (0..sigma.len()).collect();
    idx.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let mut out = DMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (col, &i) in idx.iter().enumerate() {
        out.set_column(col, &v.column(i));
        s.push(sigma[i]);
    }
    (s, out)
}

/// Singular values (descending) and left/right singular vectors.
pub fn svd_full(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix, DenseMatrix) {
    let svd = full_svd(a, true);
    (svd.sigma, svd.u, svd.v)
}

/// Smallest singular value of `A` (over `min(rows, cols)` values).
pub fn min_singular(a: &DenseMatrix) -> f64 {
    svd_rank(a, DEFAULT_RANK_TOL)
        .singular_values
        .last()
        .copied()
        .unwrap_or(0.0)
}

/// Largest singular value.
pub fn max_singular(a: &DenseMatrix) -> f64 {
    svd_rank(a, DEFAULT_RANK_TOL)
        .singular_values
        .first()
        .copied()
        .unwrap_or(0.0)
}

// Diagonal similarity with powers of two that evens out row and column norms.
fn balance(a: &mut DenseMatrix) {
    let n = a.nrows();
    let radix = 2.0f64;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].l1_norm();
                    r += a[(i, j)].l1_norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            while cc < r / radix {
                f *= radix;
                cc *= radix * radix;
            }
            while cc > r * radix {
                f /= radix;
                cc /= radix * radix;
            }
            if (cc + r) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

/// Eigenvalues of a square complex matrix.
pub fn eig_dense(a: &DenseMatrix) -> Result<Vec<C64>> {
    let (m, n) = a.shape();
    if m != n {
        return Err(Error::NonSquare { rows: m, cols: n });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let mut b = a.clone();
    balance(&mut b);
    let t = match Schur::try_new(b.clone(), f64::EPSILON, 10_000) {
        Some(s) => s.unpack().1,
        None => return Err(Error::Precondition("eigenvalue iteration did not converge".into())),
    };
    Ok(quasi_triangular_eigenvalues(&t))
}

// Reads eigenvalues off a (quasi-)triangular Schur factor, resolving any
// remaining 2x2 diagonal blocks with the quadratic formula.
fn quasi_triangular_eigenvalues(t: &DenseMatrix) -> Vec<C64> {
    let n = t.nrows();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].norm() > 1e-14 * scale {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let tr = a + d;
            let det = a * d - b * c;
            let disc = (tr * tr - det * 4.0).sqrt();
            let l1 = if (tr + disc).norm() >= (tr - disc).norm() {
                (tr + disc) / 2.0
            } else {
                (tr - disc) / 2.0
            };
            let l2 = if l1.norm() > 0.0 { det / l1 } else { tr - l1 };
            out.push(l1);
            out.push(l2);
            i += 2;
        } else {
            out.push(t[(i, i)]);
            i += 1;
        }
    }
    out
}

/// Eigenpairs; eigenvectors come from two steps of inverse iteration.
pub fn eig_pairs(a: &DenseMatrix) -> Result<Vec<(C64, DVector<C64>)>> {
    let lambdas = eig_dense(a)?;
    let n = a.nrows();
    let norm_a = a.norm().max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(n);
    for lam in lambdas {
        let mut shifted = a.clone();
        let nudge = C64::new(norm_a * 1e-13, norm_a * 1e-13);
        for i in 0..n {
            shifted[(i, i)] -= lam + nudge;
        }
        let lu = shifted.lu();
        let mut v = DVector::from_fn(n, |i, _| C64::new(1.0 / (1.0 + i as f64), 0.3));
        for _ in 0..3 {
            if let Some(w) = lu.solve(&v) {
                let nw = w.norm();
                if nw > 0.0 && nw.is_finite() {
                    v = w / C64::new(nw, 0.0);
                }
            }
        }
        out.push((lam, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn diag(d: &[f64]) -> DenseMatrix {
        DMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|&x| c(x))))
    }

    #[test]
    fn lstsq_identity_and_overdetermined() {
        let b = DVector::from_vec(vec![c(1.0), C64::new(2.0, -1.0), c(3.0)]);
        let x = lstsq_min_norm(&DMatrix::identity(3, 3), &b).unwrap();
        assert!((x - &b).norm() < 1e-15);

        let a = DMatrix::from_element(2, 1, c(1.0));
        let x = lstsq_min_norm(&a, &DVector::from_vec(vec![c(0.0), c(2.0)])).unwrap();
        assert!((x[0] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn lstsq_rejects_bad_shapes() {
        let a = DMatrix::from_element(3, 2, c(1.0));
        let b = DVector::from_element(2, c(1.0));
        assert!(matches!(lstsq_min_norm(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn lstsq_min_norm_on_rank_deficient() {
        // x1 + x2 = 2 twice: minimum norm answer is (1, 1)
        let a = DMatrix::from_element(2, 2, c(1.0));
        let b = DVector::from_vec(vec![c(2.0), c(2.0)]);
        let x = lstsq_min_norm(&a, &b).unwrap();
        assert!((x[0] - c(1.0)).norm() < 1e-12 && (x[1] - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(svd_rank(&DMatrix::zeros(3, 3), 1e-8).rank, 0);
        let rd = svd_rank(&diag(&[1.0, 1e-3, 1e-12]), 1e-8);
        assert_eq!(rd.rank, 2);
        assert!((rd.gap_ratio / 1e9 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nullspace_examples() {
        assert!(nullspace(&DMatrix::identity(3, 3), 1e-8).is_empty());
        let a = DMatrix::from_row_slice(1, 2, &[c(1.0), c(1.0)]);
        let ns = nullspace(&a, 1e-8);
        assert_eq!(ns.len(), 1);
        let v = &ns[0];
        assert!((v[0] + v[1]).norm() < 1e-14);
        assert!((v.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_examples() {
        let mut ev = eig_dense(&diag(&[2.0, 3.0])).unwrap();
        ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((ev[0] - c(2.0)).norm() < 1e-14 && (ev[1] - c(3.0)).norm() < 1e-14);

        // companion of x^2 - 3x + 2
        let comp = DMatrix::from_row_slice(2, 2, &[c(3.0), c(-2.0), c(1.0), c(0.0)]);
        let mut ev = eig_dense(&comp).unwrap();
        ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((ev[0] - c(1.0)).norm() < 1e-12 && (ev[1] - c(2.0)).norm() < 1e-12);

        assert!(matches!(
            eig_dense(&DMatrix::zeros(2, 3)),
            Err(Error::NonSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn real_rotation_has_complex_pair() {
        let r = DMatrix::from_row_slice(2, 2, &[c(0.0), c(-1.0), c(1.0), c(0.0)]);
        let mut ev = eig_dense(&r).unwrap();
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((ev[0] - C64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((ev[1] - C64::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn eigen_pairs_satisfy_residual() {
        let a = DMatrix::from_fn(5, 5, |i, j| {
            C64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 * 0.5)
        });
        for (lam, v) in eig_pairs(&a).unwrap() {
            let r = &a * &v - &v * lam;
            assert!(r.norm() <= 1e-8 * a.norm(), "residual {}", r.norm());
        }
    }

    #[test]
    fn min_singular_examples() {
        assert!((min_singular(&DMatrix::identity(3, 3)) - 1.0).abs() < 1e-15);
        assert!((min_singular(&diag(&[5.0, 0.25])) - 0.25).abs() < 1e-15);
    }
}
