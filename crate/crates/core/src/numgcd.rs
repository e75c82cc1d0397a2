//! Numerical greatest common divisors.
//!
//! The gcd degree comes from the smallest singular values of
//! Sylvester-type matrices `[C(p) | C(q)]`; cofactors are read off the
//! nullspace, the gcd is solved for by least squares, and the triple
//! `(g, a, b)` is refined by Gauss-Newton on `g*a = p, g*b = q`.
//! Multivariate degrees are estimated per variable on random univariate
//! restrictions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kernels::{self, DenseMatrix, RankDecision};
use crate::polycore::{conv_matrix_into, lex_pack, lex_unpack_slice, MultiPoly, TupleDegree};
use crate::refine::{gauss_newton_with, GnOptions};

/// A gcd `g` with `p ~ g * cofactor_p` and `q ~ g * cofactor_q`.
#[derive(Clone, Debug)]
pub struct GcdResult {
    pub gcd: MultiPoly,
    pub cofactor_p: MultiPoly,
    pub cofactor_q: MultiPoly,
    /// `max(||g a - p|| / ||p||, ||g b - q|| / ||q||)`.
    pub residual: f64,
    pub rank_record: RankDecision,
}

impl GcdResult {
    pub fn is_trivial(&self) -> bool {
        self.gcd.is_constant()
    }
}

fn coprime(p: &MultiPoly, q: &MultiPoly, rank_record: RankDecision) -> GcdResult {
    GcdResult {
        gcd: MultiPoly::one(p.vars()),
        cofactor_p: p.clone(),
        cofactor_q: q.clone(),
        residual: 0.0,
        rank_record,
    }
}

fn empty_record() -> RankDecision {
    RankDecision {
        rank: 0,
        singular_values: Vec::new(),
        gap_ratio: f64::INFINITY,
        tolerance_used: 0.0,
    }
}

/// Numerical gcd with relative residual tolerance `tol` (seed 0).
pub fn numerical_gcd(p: &MultiPoly, q: &MultiPoly, tol: f64) -> GcdResult {
    numerical_gcd_seeded(p, q, tol, 0)
}

/// Numerical gcd; `seed` drives the random restrictions used for
/// multivariate degree estimates.
pub fn numerical_gcd_seeded(p: &MultiPoly, q: &MultiPoly, tol: f64, seed: u64) -> GcdResult {
    assert!(!p.is_zero() && !q.is_zero(), "gcd of a zero polynomial");
    assert!(tol > 0.0);
    if p.is_constant() || q.is_constant() {
        return coprime(p, q, empty_record());
    }
    let (np, nq) = (p.norm(), q.norm());
    let pn = p.scale(C64::new(1.0 / np, 0.0));
    let qn = q.scale(C64::new(1.0 / nq, 0.0));
    let found = if p.nvars() == 1 {
        univariate_sweep(&pn, &qn, tol)
    } else {
        multivariate(&pn, &qn, tol, seed)
    };
    match found {
        Some(mut r) => {
            // undo the input normalization on the cofactors
            r.cofactor_p = r.cofactor_p.scale(C64::new(np, 0.0));
            r.cofactor_q = r.cofactor_q.scale(C64::new(nq, 0.0));
            r
        }
        None => coprime(p, q, empty_record()),
    }
}

fn univariate_sweep(p: &MultiPoly, q: &MultiPoly, tol: f64) -> Option<GcdResult> {
    let (m, n) = (p.degree().0[0], q.degree().0[0]);
    for k in (1..=m.min(n)).rev() {
        let d = TupleDegree::new(vec![k]);
        if let Some(r) = try_degree(p, q, &d, tol) {
            return Some(r);
        }
    }
    None
}

fn multivariate(p: &MultiPoly, q: &MultiPoly, tol: f64, seed: u64) -> Option<GcdResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (dp, dq) = (p.degree(), q.degree());
    let l = p.nvars();
    let mut tried: Vec<TupleDegree> = Vec::new();
    for _attempt in 0..2 {
        let point: Vec<C64> = (0..l)
            .map(|_| {
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                C64::from_polar(1.0, t)
            })
            .collect();
        let mut d = vec![0u32; l];
        for j in 0..l {
            let cap = dp.0[j].min(dq.0[j]);
            if cap == 0 {
                continue;
            }
            let pj = p.restrict_to(j, &point);
            let qj = q.restrict_to(j, &point);
            if pj.is_constant() || qj.is_constant() {
                continue;
            }
            let g = numerical_gcd_seeded(&pj, &qj, tol, seed);
            d[j] = g.gcd.degree().0[0].min(cap);
        }
        let d = TupleDegree::new(d);
        if d.is_zero() {
            return None;
        }
        if tried.contains(&d) {
            continue;
        }
        if let Some(r) = try_degree(p, q, &d, tol) {
            return Some(r);
        }
        tried.push(d);
    }
    None
}

// Attempts a gcd of exact tuple degree `d` for unit-norm p, q.
fn try_degree(p: &MultiPoly, q: &MultiPoly, d: &TupleDegree, tol: f64) -> Option<GcdResult> {
    let (dp, dq) = (p.degree(), q.degree());
    let da = dp.checked_sub(d)?;
    let db = dq.checked_sub(d)?;
    let target = dp.add(&db);
    let s = {
        let left = conv_matrix_into(p, &db, &target);
        let right = conv_matrix_into(q, &da, &target);
        let mut s = DMatrix::zeros(target.dim(), left.ncols() + right.ncols());
        s.view_mut((0, 0), left.shape()).copy_from(&left);
        s.view_mut((0, left.ncols()), right.shape()).copy_from(&right);
        s
    };
    let (vecs, sigma) = kernels::smallest_right_singular(&s, 1);
    let smax = sigma.first().copied().unwrap_or(0.0);
    let smin = if s.nrows() >= s.ncols() {
        sigma.last().copied().unwrap_or(0.0)
    } else {
        0.0
    };
    // loose screen; the residual test below is what decides
    let gate = (1e3 * tol).max(tol.sqrt()).min(0.1);
    if smin > gate * smax {
        return None;
    }
    let v = &vecs[0];
    let nb = db.dim();
    let vars = p.vars().to_vec();
    let b = lex_unpack_slice(v.rows(0, nb).as_slice(), &db, &vars);
    let a = lex_unpack_slice(v.rows(nb, da.dim()).as_slice(), &da, &vars).scale(C64::new(-1.0, 0.0));
    if a.is_zero() || b.is_zero() {
        return None;
    }
    let g = solve_gcd(p, q, &a, &b, d)?;
    let (g, a, b) = refine_triple(p, q, g, a, b, d, &da, &db);
    let res_p = (&(&g * &a) - p).norm();
    let res_q = (&(&g * &b) - q).norm();
    let residual = res_p.max(res_q);
    if !(residual <= tol) {
        return None;
    }
    let gn = g.norm();
    let rank_record = kernels::svd_rank(&s, tol.max(1e-14));
    Some(GcdResult {
        gcd: g.scale(C64::new(1.0 / gn, 0.0)),
        cofactor_p: a.scale(C64::new(gn, 0.0)),
        cofactor_q: b.scale(C64::new(gn, 0.0)),
        residual,
        rank_record,
    })
}

fn solve_gcd(p: &MultiPoly, q: &MultiPoly, a: &MultiPoly, b: &MultiPoly, d: &TupleDegree) -> Option<MultiPoly> {
    let (dp, dq) = (p.degree(), q.degree());
    let ca = conv_matrix_into(a, d, &dp);
    let cb = conv_matrix_into(b, d, &dq);
    let mut m = DMatrix::zeros(ca.nrows() + cb.nrows(), d.dim());
    m.view_mut((0, 0), ca.shape()).copy_from(&ca);
    m.view_mut((ca.nrows(), 0), cb.shape()).copy_from(&cb);
    let mut rhs = DVector::zeros(m.nrows());
    rhs.rows_mut(0, dp.dim()).copy_from(&lex_pack(p, &dp).ok()?.to_dvector());
    rhs.rows_mut(dp.dim(), dq.dim()).copy_from(&lex_pack(q, &dq).ok()?.to_dvector());
    let g = kernels::lstsq_min_norm(&m, &rhs).ok()?;
    let g = lex_unpack_slice(g.as_slice(), d, p.vars());
    if g.is_zero() {
        None
    } else {
        Some(g)
    }
}

#[allow(clippy::too_many_arguments)]
fn refine_triple(
    p: &MultiPoly,
    q: &MultiPoly,
    g: MultiPoly,
    a: MultiPoly,
    b: MultiPoly,
    d: &TupleDegree,
    da: &TupleDegree,
    db: &TupleDegree,
) -> (MultiPoly, MultiPoly, MultiPoly) {
    let (dp, dq) = (p.degree(), q.degree());
    let vars = p.vars().to_vec();
    let (ng, na, nb) = (d.dim(), da.dim(), db.dim());
    let pv = lex_pack(p, &dp).unwrap().to_dvector();
    let qv = lex_pack(q, &dq).unwrap().to_dvector();
    let g0 = lex_pack(&g, d).unwrap().to_dvector();
    let scale_vec = &g0 / C64::new(g0.norm(), 0.0);
    // rescale so the start satisfies the normalization row exactly
    let s = scale_vec.dotc(&g0);
    let mut x0 = DVector::zeros(ng + na + nb);
    x0.rows_mut(0, ng).copy_from(&(&g0 / s));
    x0.rows_mut(ng, na).copy_from(&(lex_pack(&a, da).unwrap().to_dvector() * s));
    x0.rows_mut(ng + na, nb).copy_from(&(lex_pack(&b, db).unwrap().to_dvector() * s));
    let unpack = |x: &DVector<C64>| {
        (
            lex_unpack_slice(x.rows(0, ng).as_slice(), d, &vars),
            lex_unpack_slice(x.rows(ng, na).as_slice(), da, &vars),
            lex_unpack_slice(x.rows(ng + na, nb).as_slice(), db, &vars),
        )
    };
    let (mp, mq) = (dp.dim(), dq.dim());
    let eval = |x: &DVector<C64>| {
        let (g, a, b) = unpack(x);
        let ga = lex_pack(&(&g * &a), &dp)?.to_dvector() - &pv;
        let gb = lex_pack(&(&g * &b), &dq)?.to_dvector() - &qv;
        let mut r = DVector::zeros(mp + mq + 1);
        r.rows_mut(0, mp).copy_from(&ga);
        r.rows_mut(mp, mq).copy_from(&gb);
        r[mp + mq] = scale_vec.dotc(&x.rows(0, ng)) - C64::new(1.0, 0.0);
        let mut j: DenseMatrix = DMatrix::zeros(mp + mq + 1, ng + na + nb);
        j.view_mut((0, 0), (mp, ng)).copy_from(&conv_matrix_into(&a, d, &dp));
        j.view_mut((mp, 0), (mq, ng)).copy_from(&conv_matrix_into(&b, d, &dq));
        j.view_mut((0, ng), (mp, na)).copy_from(&conv_matrix_into(&g, da, &dp));
        j.view_mut((mp, ng + na), (mq, nb)).copy_from(&conv_matrix_into(&g, db, &dq));
        for (c, bc) in scale_vec.iter().enumerate() {
            j[(mp + mq, c)] = bc.conj();
        }
        Ok((r, j))
    };
    let opts = GnOptions {
        noise: 1e2 * f64::EPSILON,
        ..GnOptions::default()
    };
    match gauss_newton_with(x0.clone(), eval, &opts) {
        Ok(out) => unpack(&out.x),
        Err(_) => unpack(&x0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polycore::sin_distance;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn lin(a: f64) -> MultiPoly {
        MultiPoly::from_real_terms(&["x"], &[(&[1], 1.0), (&[0], a)])
    }

    #[test]
    fn self_gcd() {
        let f = &(&lin(-1.0) * &lin(2.0)) * &lin(0.5);
        let g = numerical_gcd(&f, &f, 1e-10);
        assert!(sin_distance(&g.gcd, &f) < 1e-12);
        assert!(g.residual <= 1e-12);
        assert!((g.gcd.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn common_linear_factor() {
        let p = &lin(-1.0) * &lin(-2.0);
        let q = &lin(-1.0) * &lin(-3.0);
        let g = numerical_gcd(&p, &q, 1e-10);
        assert!(sin_distance(&g.gcd, &lin(-1.0)) < 1e-12);
        assert!((&(&g.gcd * &g.cofactor_p) - &p).norm() <= 1e-12 * p.norm());
        assert!((&(&g.gcd * &g.cofactor_q) - &q).norm() <= 1e-12 * q.norm());
    }

    #[test]
    fn perturbed_common_factor() {
        let x = MultiPoly::from_real_terms(&["x"], &[(&[1], 1e-8)]);
        let p = &(&lin(-1.0) * &lin(-2.0)) + &x;
        let q = &lin(-1.0) * &lin(-3.0);
        let g = numerical_gcd(&p, &q, 1e-6);
        assert_eq!(g.gcd.degree().0, vec![1]);
        assert!(g.residual <= 1e-6);
        assert!(sin_distance(&g.gcd, &lin(-1.0)) < 1e-6);
    }

    #[test]
    fn coprime_inputs() {
        let p = lin(-1.0);
        let q = lin(-2.0);
        let g = numerical_gcd(&p, &q, 1e-10);
        assert!(g.is_trivial());
        assert_eq!(g.cofactor_p, p);
        assert_eq!(g.residual, 0.0);
    }

    #[test]
    fn scaling_does_not_change_gcd() {
        let p = &lin(-1.0) * &lin(-2.0);
        let q = &lin(-1.0) * &lin(4.0);
        let g1 = numerical_gcd(&p, &q, 1e-10);
        let g2 = numerical_gcd(&p.scale(C64::new(3.0, -1.0)), &q.scale(c(1e-3)), 1e-10);
        assert!(sin_distance(&g1.gcd, &g2.gcd) < 1e-10);
    }

    #[test]
    fn bivariate_common_factor() {
        let v = ["x", "y"];
        let g0 = MultiPoly::from_real_terms(&v, &[(&[1, 1], 1.0), (&[0, 0], 1.0)]);
        let a = MultiPoly::from_real_terms(&v, &[(&[1, 0], 1.0), (&[0, 1], 1.0)]);
        let b = MultiPoly::from_real_terms(&v, &[(&[1, 0], 1.0), (&[0, 1], -1.0), (&[0, 0], 1.0)]);
        let g = numerical_gcd(&(&g0 * &a), &(&g0 * &b), 1e-10);
        assert!(sin_distance(&g.gcd, &g0) < 1e-10, "{}", g.gcd);
        assert_eq!(g.gcd.degree(), g0.degree());
    }

    #[test]
    fn bivariate_coprime() {
        let v = ["x", "y"];
        let a = MultiPoly::from_real_terms(&v, &[(&[1, 0], 1.0), (&[0, 1], 1.0)]);
        let b = MultiPoly::from_real_terms(&v, &[(&[1, 1], 1.0), (&[0, 0], 2.0)]);
        assert!(numerical_gcd(&a, &b, 1e-10).is_trivial());
    }
}
