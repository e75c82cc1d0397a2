//! Stage one: splitting squarefree parts into irreducible factors and
//! assembling the factorization structure with initial approximations.
//!
//! Univariate parts are split by companion-matrix eigenvalues. Parts in two or
//! more variables use the Ruppert matrix, whose nullspace consists of the
//! closed logarithmic differential forms `sum_k c_k (f/f_k) grad f_k`. Taking
//! a random direction `z`, a random nullspace element `G` and `D = d_z f`,
//! each factor is `f_k = gcd(f, G - c_k D)`. The constants `c_k` are the
//! eigenvalues of the matrix of multiplication by `G` modulo `f` on the
//! nullspace basis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{self, DenseMatrix, RankDecision};
use crate::numgcd::numerical_gcd_seeded;
use crate::polycore::{
    conv_matrix_into, dir_derivative, expand, inner, lex_exponents, lex_pack, lex_unpack_slice,
    Factorization, MultiPoly, TupleDegree,
};
use crate::squarefree::{random_direction, squarefree_factor, SWEEP_TOL_CAP};
use crate::structure::FactorStructure;

/// Largest Ruppert matrix (in columns) that will be built.
pub const RUPPERT_MAX_COLS: usize = 2000;

/// Ratio between consecutive singular values that marks a nullity candidate.
pub const MIN_GAP: f64 = 10.0;

/// Irreducible approximations of one squarefree polynomial.
#[derive(Clone, Debug)]
pub struct SplitResult {
    pub factors: Vec<MultiPoly>,
    pub nullity: usize,
    pub diagnostics: RankDecision,
}

fn trivial_record() -> RankDecision {
    RankDecision {
        rank: 0,
        singular_values: Vec::new(),
        gap_ratio: f64::INFINITY,
        tolerance_used: 0.0,
    }
}

/// Splits a polynomial that involves a single variable into linear factors.
/// Roots closer than `tol` (relative to their size) are reported as a collision.
pub fn univariate_split(h: &MultiPoly, tol: f64) -> Result<SplitResult> {
    let deg = h.degree();
    let support: Vec<usize> = (0..h.nvars()).filter(|&i| deg.0[i] > 0).collect();
    if support.len() != 1 {
        return Err(Error::Precondition(
            "univariate split needs a polynomial in exactly one variable".into(),
        ));
    }
    let var = support[0];
    let roots = roots_of(h, var)?;
    let mut sep = f64::INFINITY;
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            let scale = roots[i].norm().max(roots[j].norm()).max(1.0);
            sep = sep.min((roots[i] - roots[j]).norm() / scale);
        }
    }
    if sep <= tol {
        return Err(Error::ClusterCollision {
            separation: sep,
            threshold: tol,
        });
    }
    let factors = roots
        .iter()
        .map(|r| linear_factor(h.vars(), var, *r).normalized())
        .collect();
    Ok(SplitResult {
        factors,
        nullity: roots.len(),
        diagnostics: trivial_record(),
    })
}

fn linear_factor(vars: &[String], var: usize, root: C64) -> MultiPoly {
    let mut e = vec![0u32; vars.len()];
    e[var] = 1;
    MultiPoly::from_terms(
        vars,
        vec![(e, C64::new(1.0, 0.0)), (vec![0; vars.len()], -root)],
    )
}

/// Roots of `h` viewed as a polynomial in variable `var` alone.
fn roots_of(h: &MultiPoly, var: usize) -> Result<Vec<C64>> {
    let n = h.degree().0[var] as usize;
    let mut coeffs = vec![C64::new(0.0, 0.0); n + 1];
    for (e, c) in h.terms() {
        coeffs[n - e[var] as usize] += *c;
    }
    let lead = coeffs[0];
    if n == 1 {
        return Ok(vec![-coeffs[1] / lead]);
    }
    let mut comp = DMatrix::zeros(n, n);
    for j in 0..n {
        comp[(0, j)] = -coeffs[j + 1] / lead;
    }
    for i in 1..n {
        comp[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    kernels::eig_dense(&comp)
}

struct RuppertLayout {
    fdeg: TupleDegree,
    /// (variable, unknown bound, column offset)
    blocks: Vec<(usize, TupleDegree, usize)>,
    /// (i, j, target bound, row offset) for i < j
    pairs: Vec<(usize, usize, TupleDegree, usize)>,
    rows: usize,
    cols: usize,
}

fn layout(f: &MultiPoly) -> Result<RuppertLayout> {
    let fdeg = f.degree();
    let vars: Vec<usize> = (0..f.nvars()).filter(|&i| fdeg.0[i] > 0).collect();
    if vars.len() < 2 {
        return Err(Error::Precondition(
            "Ruppert matrix needs a polynomial in at least two variables".into(),
        ));
    }
    let unit = |i: usize| {
        let mut e = vec![0u32; f.nvars()];
        e[i] = 1;
        TupleDegree::new(e)
    };
    let mut blocks = Vec::new();
    let mut cols = 0;
    for &i in &vars {
        let b = fdeg.checked_sub(&unit(i)).unwrap();
        let d = b.dim();
        blocks.push((i, b, cols));
        cols += d;
    }
    let mut pairs = Vec::new();
    let mut rows = 0;
    for (a, &i) in vars.iter().enumerate() {
        for &j in &vars[a + 1..] {
            let t = fdeg
                .scale(2)
                .checked_sub(&unit(i).add(&unit(j)))
                .unwrap();
            let d = t.dim();
            pairs.push((i, j, t, rows));
            rows += d;
        }
    }
    Ok(RuppertLayout {
        fdeg,
        blocks,
        pairs,
        rows,
        cols,
    })
}

/// Matrix of `(G_i) -> (L_j G_i - L_i G_j)_{i<j}` with `L_j G = f d_j G - G d_j f`,
/// unknowns `G_i` bounded by `deg f - e_i`, one block per variable present in
/// `f`. For two variables the columns are the `g` block then the `h` block
/// and the single equation is `f (g_y - h_x) - (g f_y - h f_x)`.
pub fn ruppert_matrix(f: &MultiPoly) -> Result<DenseMatrix> {
    let lay = layout(f)?;
    if lay.cols > RUPPERT_MAX_COLS {
        return Err(Error::Precondition(format!(
            "Ruppert matrix would have {} columns (limit {RUPPERT_MAX_COLS})",
            lay.cols
        )));
    }
    let derivs: Vec<MultiPoly> = (0..f.nvars()).map(|j| f.derivative(j)).collect();
    let mut m = DMatrix::zeros(lay.rows, lay.cols);
    for (i, bound, col0) in &lay.blocks {
        for (c, e) in lex_exponents(bound).into_iter().enumerate() {
            let mono = MultiPoly::monomial(f.vars(), e, C64::new(1.0, 0.0));
            for (pi, pj, target, row0) in &lay.pairs {
                let (partner, sign) = if pi == i {
                    (*pj, 1.0)
                } else if pj == i {
                    (*pi, -1.0)
                } else {
                    continue;
                };
                let l = &(f * &mono.derivative(partner)) - &(&mono * &derivs[partner]);
                for (e2, v) in l.terms() {
                    let row = row0 + crate::polycore::lex_index(e2, target);
                    m[(row, col0 + c)] += *v * sign;
                }
            }
        }
    }
    Ok(m)
}

// Splits the nullspace vector into its per-variable blocks and contracts with z.
fn directional_form(v: &DVector<C64>, lay: &RuppertLayout, z: &[C64], vars: &[String]) -> MultiPoly {
    let mut out = MultiPoly::zero(vars);
    for (i, bound, col0) in &lay.blocks {
        let g = lex_unpack_slice(v.rows(*col0, bound.dim()).as_slice(), bound, vars);
        out = &out + &g.scale(z[*i]);
    }
    out
}

/// Splits a squarefree polynomial in two or more variables.
pub fn ruppert_split(f: &MultiPoly, tol: f64, seed: u64) -> Result<SplitResult> {
    let lay = layout(f)?;
    let r = ruppert_matrix(f)?;
    let (_, sigma) = kernels::smallest_right_singular(&r, 0);
    let s1 = sigma.first().copied().unwrap_or(0.0);
    // the nullity is only a proposal; recovery and later certification decide
    let loose = (10.0 * tol).min(1e-2);
    let mut rmax = sigma.iter().filter(|&&s| s <= loose * s1).count();
    rmax = rmax.max(1).min(lay.fdeg.total() as usize);
    let diagnostics = kernels::svd_rank(&r, loose);
    let len = sigma.len();
    let gap = |k: usize| {
        if k >= len {
            return 0.0;
        }
        sigma[len - k - 1] / sigma[len - k].max(f64::MIN_POSITIVE)
    };
    let mut candidates: Vec<usize> = (2..=rmax).rev().filter(|&k| gap(k) >= MIN_GAP).collect();
    if candidates.is_empty() && rmax >= 2 {
        let widest = (2..=rmax)
            .max_by(|a, b| gap(*a).total_cmp(&gap(*b)))
            .unwrap();
        candidates.push(widest);
    }
    for nullity in candidates {
        let (basis, _) = kernels::smallest_right_singular(&r, nullity);
        for attempt in 0..3u64 {
            if let Some(factors) = recover(f, &lay, &basis, tol, seed.wrapping_mul(7).wrapping_add(attempt)) {
                return Ok(SplitResult {
                    factors,
                    nullity,
                    diagnostics,
                });
            }
        }
    }
    Ok(SplitResult {
        factors: vec![f.normalized()],
        nullity: 1,
        diagnostics,
    })
}

fn recover(
    f: &MultiPoly,
    lay: &RuppertLayout,
    basis: &[DVector<C64>],
    tol: f64,
    seed: u64,
) -> Option<Vec<MultiPoly>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars = f.vars().to_vec();
    let z = random_direction(f.nvars(), &mut rng);
    let d = dir_derivative(f, &z);
    let forms: Vec<MultiPoly> = basis
        .iter()
        .map(|v| directional_form(v, lay, &z, &vars))
        .collect();
    let weights: Vec<C64> = (0..basis.len())
        .map(|_| C64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    let mut g = MultiPoly::zero(&vars);
    for (b, w) in forms.iter().zip(&weights) {
        g = &g + &b.scale(*w);
    }
    let n = basis.len();
    let fdeg = &lay.fdeg;
    let big = fdeg.scale(2);
    let mut a = DMatrix::zeros(big.dim(), n + fdeg.dim());
    for (k, b) in forms.iter().enumerate() {
        let bd = lex_pack(&(b * &d), &big).ok()?;
        for (row, c) in bd.data.iter().enumerate() {
            a[(row, k)] = *c;
        }
    }
    let cf = conv_matrix_into(f, fdeg, &big);
    a.view_mut((0, n), cf.shape()).copy_from(&cf);
    let mut m = DMatrix::zeros(n, n);
    for (j, b) in forms.iter().enumerate() {
        let rhs = lex_pack(&(&g * b), &big).ok()?.to_dvector();
        let sol = kernels::lstsq_min_norm(&a, &rhs).ok()?;
        for k in 0..n {
            m[(k, j)] = sol[k];
        }
    }
    let lambdas = kernels::eig_dense(&m).ok()?;
    let spread = lambdas.iter().map(|l| l.norm()).fold(0.0, f64::max);
    for i in 0..n {
        for j in i + 1..n {
            if (lambdas[i] - lambdas[j]).norm() <= 1e-8 * spread {
                return None;
            }
        }
    }
    let cap = (100.0 * tol).clamp(SWEEP_TOL_CAP, 0.1);
    let mut factors: Vec<MultiPoly> = Vec::with_capacity(n);
    let mut total = TupleDegree::zeros(f.nvars());
    for (k, lam) in lambdas.iter().enumerate() {
        let h = &g - &d.scale(*lam);
        if h.is_zero() {
            continue;
        }
        let mut gtol = tol;
        while gtol <= cap {
            let r = numerical_gcd_seeded(f, &h, gtol, seed.wrapping_add(k as u64 + 1));
            let next = total.add(&r.gcd.degree());
            if !r.gcd.is_constant() && next.le(fdeg) && next != *fdeg {
                total = next;
                factors.push(r.gcd);
                break;
            }
            if !r.gcd.is_constant() && next == *fdeg && factors.len() + 1 == n {
                total = next;
                factors.push(r.gcd);
                break;
            }
            gtol *= 10.0;
        }
    }
    if factors.is_empty() {
        return None;
    }
    // whatever the eigenvalues missed is divided out and split on its own
    if total != *fdeg {
        let rest = divide(f, &factors)?;
        let missing = n.saturating_sub(factors.len());
        if missing == 0 {
            return None;
        }
        if missing == 1 {
            factors.push(rest);
        } else {
            factors.extend(split_part(&rest, tol, seed.wrapping_add(97)).ok()?.factors);
        }
    }
    let mut sum = TupleDegree::zeros(f.nvars());
    for p in &factors {
        sum = sum.add(&p.degree());
    }
    if factors.len() != n || sum != *fdeg {
        return None;
    }
    let factors: Vec<MultiPoly> = factors.into_iter().map(|p| p.normalized()).collect();
    let fac = Factorization::new(C64::new(1.0, 0.0), factors.iter().map(|p| (p.clone(), 1)).collect());
    let prod = expand(&fac);
    let gamma = inner(&prod, f) / inner(&prod, &prod).re;
    let resid = (f - &prod.scale(gamma)).norm() / f.norm();
    (resid <= (1e3 * tol).clamp(1e-4, 0.3)).then_some(factors)
}

/// Least-squares quotient of `f` by the product of `factors`.
fn divide(f: &MultiPoly, factors: &[MultiPoly]) -> Option<MultiPoly> {
    let mut g = MultiPoly::one(f.vars());
    for p in factors {
        g = &g * p;
    }
    let qdeg = f.degree().checked_sub(&g.degree())?;
    if qdeg.is_zero() {
        return None;
    }
    let c = crate::polycore::conv_matrix(&g, &qdeg);
    let rhs = lex_pack(f, &qdeg.add(&g.degree())).ok()?.to_dvector();
    let q = kernels::lstsq_min_norm(&c, &rhs).ok()?;
    Some(lex_unpack_slice(q.as_slice(), &qdeg, f.vars()))
}

/// Splits one squarefree part, choosing the method by the variables it uses.
pub fn split_part(h: &MultiPoly, tol: f64, seed: u64) -> Result<SplitResult> {
    let deg = h.degree();
    match deg.support_len() {
        0 => Err(Error::Precondition("cannot split a constant".into())),
        1 if deg.total() == 1 => Ok(SplitResult {
            factors: vec![h.normalized()],
            nullity: 1,
            diagnostics: trivial_record(),
        }),
        1 => univariate_split(h, tol),
        _ => ruppert_split(h, tol, seed),
    }
}

/// Proposes a structure for `f` with initial factors. `tol` is relative to
/// `||f||`. With a hint, detection is skipped and factors of the hinted
/// degrees are fitted directly.
pub fn identify_structure(
    f: &MultiPoly,
    tol: f64,
    seed: u64,
    hint: Option<&FactorStructure>,
) -> Result<(FactorStructure, Factorization)> {
    if f.is_constant() {
        return Err(Error::Precondition("constant polynomial has no factors".into()));
    }
    if let Some(h) = hint {
        let fac = hint_initial(f, h, seed)?;
        return Ok((h.clone(), fac));
    }
    let sq = squarefree_factor(f, tol, seed)?;
    let mut factors: Vec<(MultiPoly, u32)> = Vec::new();
    for (i, (h, k)) in sq.parts.iter().enumerate() {
        let s = split_part(h, tol, seed.wrapping_add(i as u64))?;
        for p in s.factors {
            factors.push((p, *k));
        }
    }
    let mut fac = Factorization::new(C64::new(1.0, 0.0), factors);
    let g = expand(&fac);
    fac.alpha = inner(&g, f) / inner(&g, &g).re;
    let structure = structure_of(&fac)?;
    Ok((structure, fac))
}

pub fn structure_of(fac: &Factorization) -> Result<FactorStructure> {
    FactorStructure::new(fac.factors.iter().map(|(p, k)| (p.degree(), *k)).collect())
}

/// Initial factors for a user-supplied structure: alternating least squares
/// from seeded random unit polynomials, best of a few starts.
pub fn hint_initial(f: &MultiPoly, hint: &FactorStructure, seed: u64) -> Result<Factorization> {
    let total = hint.total_degree();
    if total.nvars() != f.nvars() {
        return Err(Error::DimensionMismatch(format!(
            "hint has {} variables, polynomial has {}",
            total.nvars(),
            f.nvars()
        )));
    }
    if total != f.degree() {
        return Err(Error::DegreeMismatch(total, f.degree()));
    }
    let fv = lex_pack(f, &total)?.to_dvector();
    let mut best: Option<(f64, Factorization)> = None;
    for start in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(start));
        let mut factors: Vec<(MultiPoly, u32)> = hint
            .components()
            .iter()
            .map(|c| {
                let data: Vec<C64> = (0..c.degree.dim())
                    .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                (
                    lex_unpack_slice(&data, &c.degree, f.vars()).normalized(),
                    c.multiplicity,
                )
            })
            .collect();
        for _sweep in 0..60 {
            for i in 0..factors.len() {
                // everything except one copy of factor i is held fixed
                let mut rest = MultiPoly::one(f.vars());
                for (j, (p, k)) in factors.iter().enumerate() {
                    let e = if j == i { k - 1 } else { *k };
                    if e > 0 {
                        rest = &rest * &p.pow(e);
                    }
                }
                let deg = &hint.components()[i].degree;
                let c = conv_matrix_into(&rest, deg, &total);
                let Ok(sol) = kernels::lstsq_min_norm(&c, &fv) else {
                    continue;
                };
                let p = lex_unpack_slice(sol.as_slice(), deg, f.vars());
                if !p.is_zero() {
                    factors[i].0 = p.normalized();
                }
            }
        }
        let fac = Factorization::new(C64::new(1.0, 0.0), factors);
        let g = expand(&fac);
        let gn = inner(&g, &g).re;
        if gn == 0.0 {
            continue;
        }
        let alpha = inner(&g, f) / gn;
        let res = (f - &g.scale(alpha)).norm();
        let fac = Factorization::new(alpha, fac.factors);
        if best.as_ref().map_or(true, |(b, _)| res < *b) {
            best = Some((res, fac));
        }
    }
    best.map(|(_, f)| f)
        .ok_or_else(|| Error::DetectionFailed("no usable start for the hinted structure".into()))
}
