//! Sparse multivariate polynomials over the complex numbers.
//!
//! Coefficient vectors are always laid out in *descending* lexicographic
//! order of the exponent tuples with variable priority `x1 > x2 > ...`, so
//! `3*x1^2*x2 - 4*x1*x2 + 5*x1 + 6` packed in degree bound `(2,1)` reads
//! `(3, 0, -4, 5, 0, 6)`. Every matrix built in this crate uses that order.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-variable degree of a polynomial (the ℓ-tuple degree).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TupleDegree(pub Vec<u32>);

impl TupleDegree {
    pub fn new(exps: Vec<u32>) -> Self {
        assert!(!exps.is_empty(), "tuple degree needs at least one variable");
        TupleDegree(exps)
    }

    pub fn zeros(nvars: usize) -> Self {
        TupleDegree(vec![0; nvars])
    }

    pub fn exps(&self) -> &[u32] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    /// Dimension `<n> = prod(n_i + 1)` of the space of polynomials bounded by `self`.
    pub fn dim(&self) -> usize {
        self.0.iter().map(|&e| e as usize + 1).product()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &TupleDegree) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn add(&self, other: &TupleDegree) -> TupleDegree {
        assert_eq!(self.nvars(), other.nvars());
        TupleDegree(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn checked_sub(&self, other: &TupleDegree) -> Option<TupleDegree> {
        if !other.le(self) {
            return None;
        }
        Some(TupleDegree(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scale(&self, k: u32) -> TupleDegree {
        TupleDegree(self.0.iter().map(|&e| e * k).collect())
    }

    pub fn max(&self, other: &TupleDegree) -> TupleDegree {
        assert_eq!(self.nvars(), other.nvars());
        TupleDegree(self.0.iter().zip(&other.0).map(|(a, b)| *a.max(b)).collect())
    }

    /// Number of variables the degree actually involves.
    pub fn support_len(&self) -> usize {
        self.0.iter().filter(|&&e| e > 0).count()
    }
}

impl fmt::Display for TupleDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// Position of exponent tuple `e` in the descending-lex basis of `P^bound`.
pub fn lex_index(e: &[u32], bound: &TupleDegree) -> usize {
    let mut idx = 0usize;
    for (ei, ni) in e.iter().zip(bound.exps()) {
        debug_assert!(ei <= ni);
        idx = idx * (*ni as usize + 1) + (ni - ei) as usize;
    }
    idx
}

/// Exponent tuples of `P^bound` in descending lex order.
pub fn lex_exponents(bound: &TupleDegree) -> Vec<Vec<u32>> {
    let n = bound.nvars();
    let mut out = Vec::with_capacity(bound.dim());
    let mut cur: Vec<u32> = bound.exps().to_vec();
    loop {
        out.push(cur.clone());
        // decrement like an odometer, least significant variable last
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] > 0 {
                cur[i] -= 1;
                for j in i + 1..n {
                    cur[j] = bound.exps()[j];
                }
                break;
            }
        }
    }
}

/// Dense coefficient vector of a polynomial inside `P^bound`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffVector {
    pub bound: TupleDegree,
    pub data: Vec<C64>,
}

impl CoeffVector {
    pub fn to_dvector(&self) -> DVector<C64> {
        DVector::from_column_slice(&self.data)
    }

    pub fn norm(&self) -> f64 {
        vec_norm(&self.data)
    }
}

pub fn vec_norm(v: &[C64]) -> f64 {
    // scaled accumulation keeps 1e30-sized coefficients from overflowing the squares
    let scale = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = v.iter().map(|c| (c / scale).norm_sqr()).sum();
    scale * s.sqrt()
}

/// Sparse polynomial with named variables; zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiPoly {
    vars: Vec<String>,
    terms: BTreeMap<Vec<u32>, C64>,
}

impl MultiPoly {
    pub fn zero(vars: &[String]) -> Self {
        assert!(!vars.is_empty(), "a polynomial needs at least one variable");
        MultiPoly {
            vars: vars.to_vec(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: &[String], c: C64) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(vec![0; vars.len()], c);
        p
    }

    pub fn one(vars: &[String]) -> Self {
        Self::constant(vars, C64::new(1.0, 0.0))
    }

    pub fn monomial(vars: &[String], exps: Vec<u32>, c: C64) -> Self {
        assert_eq!(exps.len(), vars.len());
        let mut p = Self::zero(vars);
        p.add_term(exps, c);
        p
    }

    /// The polynomial `x_i` (0-based variable index).
    pub fn var(vars: &[String], i: usize) -> Self {
        let mut e = vec![0; vars.len()];
        e[i] = 1;
        Self::monomial(vars, e, C64::new(1.0, 0.0))
    }

    pub fn from_terms<I>(vars: &[String], terms: I) -> Self
    where
        I: IntoIterator<Item = (Vec<u32>, C64)>,
    {
        let mut p = Self::zero(vars);
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    }

    /// Real coefficients convenience constructor.
    pub fn from_real_terms(vars: &[&str], terms: &[(&[u32], f64)]) -> Self {
        let vars: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        Self::from_terms(
            &vars,
            terms.iter().map(|(e, c)| (e.to_vec(), C64::new(*c, 0.0))),
        )
    }

    /// Univariate polynomial from coefficients in descending degree order.
    pub fn from_descending(var: &str, coeffs: &[C64]) -> Self {
        let vars = vec![var.to_string()];
        let n = coeffs.len();
        Self::from_terms(
            &vars,
            coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| (vec![(n - 1 - i) as u32], *c)),
        )
    }

    pub fn add_term(&mut self, exps: Vec<u32>, c: C64) {
        assert_eq!(exps.len(), self.vars.len(), "exponent arity mismatch");
        use std::collections::btree_map::Entry;
        match self.terms.entry(exps) {
            Entry::Vacant(v) => {
                if c != C64::new(0.0, 0.0) {
                    v.insert(c);
                }
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == C64::new(0.0, 0.0) {
                    o.remove();
                }
            }
        }
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn with_vars(mut self, vars: &[String]) -> Self {
        assert_eq!(vars.len(), self.vars.len());
        self.vars = vars.to_vec();
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&x| x == 0))
    }

    pub fn nterms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in descending lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &C64)> {
        self.terms.iter().rev()
    }

    pub fn coeff(&self, exps: &[u32]) -> C64 {
        self.terms.get(exps).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn degree(&self) -> TupleDegree {
        let mut d = vec![0u32; self.vars.len()];
        for e in self.terms.keys() {
            for (di, ei) in d.iter_mut().zip(e) {
                *di = (*di).max(*ei);
            }
        }
        TupleDegree(d)
    }

    /// Coefficient of the lex-largest monomial; zero for the zero polynomial.
    pub fn leading_coeff(&self) -> C64 {
        self.terms
            .iter()
            .next_back()
            .map(|(_, c)| *c)
            .unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn norm(&self) -> f64 {
        let v: Vec<C64> = self.terms.values().copied().collect();
        vec_norm(&v)
    }

    pub fn scale(&self, alpha: C64) -> MultiPoly {
        let mut p = MultiPoly::zero(&self.vars);
        if alpha == C64::new(0.0, 0.0) {
            return p;
        }
        for (e, c) in &self.terms {
            let v = c * alpha;
            if v != C64::new(0.0, 0.0) {
                p.terms.insert(e.clone(), v);
            }
        }
        p
    }

    /// `self / ||self||`; the zero polynomial is returned unchanged.
    pub fn normalized(&self) -> MultiPoly {
        let n = self.norm();
        if n == 0.0 {
            self.clone()
        } else {
            self.scale(C64::new(1.0 / n, 0.0))
        }
    }

    /// Scaled so the lex-leading coefficient is one.
    pub fn monic(&self) -> MultiPoly {
        let lc = self.leading_coeff();
        if lc == C64::new(0.0, 0.0) {
            self.clone()
        } else {
            self.scale(lc.inv())
        }
    }

    pub fn map_coeffs<F: Fn(C64) -> C64>(&self, f: F) -> MultiPoly {
        MultiPoly::from_terms(&self.vars, self.terms.iter().map(|(e, c)| (e.clone(), f(*c))))
    }

    /// Drops terms whose magnitude is at most `tol * ||self||`.
    pub fn chop(&self, tol: f64) -> MultiPoly {
        let cut = tol * self.norm();
        MultiPoly::from_terms(
            &self.vars,
            self.terms
                .iter()
                .filter(|(_, c)| c.norm() > cut)
                .map(|(e, c)| (e.clone(), *c)),
        )
    }

    pub fn pow(&self, k: u32) -> MultiPoly {
        let mut result = MultiPoly::one(&self.vars);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = &result * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> MultiPoly {
        let mut p = MultiPoly::zero(&self.vars);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut e2 = e.clone();
                e2[i] -= 1;
                p.add_term(e2, c * e[i] as f64);
            }
        }
        p
    }

    /// Evaluates at a full point.
    pub fn eval(&self, point: &[C64]) -> C64 {
        assert_eq!(point.len(), self.nvars());
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(point)
                    .fold(*c, |acc, (&k, x)| acc * x.powu(k))
            })
            .sum()
    }

    /// Substitutes fixed values for every variable except `keep`, giving a
    /// univariate polynomial in the kept variable.
    pub fn restrict_to(&self, keep: usize, point: &[C64]) -> MultiPoly {
        let vars = vec![self.vars[keep].clone()];
        let mut p = MultiPoly::zero(&vars);
        for (e, c) in &self.terms {
            let mut v = *c;
            for (j, (&k, x)) in e.iter().zip(point).enumerate() {
                if j != keep {
                    v *= x.powu(k);
                }
            }
            p.add_term(vec![e[keep]], v);
        }
        p
    }

    pub fn pack(&self, bound: &TupleDegree) -> Result<CoeffVector> {
        lex_pack(self, bound)
    }

    /// Dense descending coefficients of a univariate polynomial (length deg+1).
    pub fn univariate_coeffs(&self) -> Vec<C64> {
        assert_eq!(self.nvars(), 1);
        lex_pack(self, &self.degree()).unwrap().data
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::cli::format_poly(self, 15))
    }
}

impl<'a> Add<&'a MultiPoly> for &'a MultiPoly {
    type Output = MultiPoly;
    fn add(self, rhs: &MultiPoly) -> MultiPoly {
        add(self, rhs)
    }
}

impl<'a> Sub<&'a MultiPoly> for &'a MultiPoly {
    type Output = MultiPoly;
    fn sub(self, rhs: &MultiPoly) -> MultiPoly {
        add(self, &rhs.scale(C64::new(-1.0, 0.0)))
    }
}

impl<'a> Mul<&'a MultiPoly> for &'a MultiPoly {
    type Output = MultiPoly;
    fn mul(self, rhs: &MultiPoly) -> MultiPoly {
        mul(self, rhs)
    }
}

impl Neg for &MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        self.scale(C64::new(-1.0, 0.0))
    }
}

pub fn add(f: &MultiPoly, g: &MultiPoly) -> MultiPoly {
    assert_eq!(f.nvars(), g.nvars(), "variable count mismatch");
    let mut p = f.clone();
    for (e, c) in &g.terms {
        p.add_term(e.clone(), *c);
    }
    p
}

pub fn mul(f: &MultiPoly, g: &MultiPoly) -> MultiPoly {
    assert_eq!(f.nvars(), g.nvars(), "variable count mismatch");
    let mut acc: BTreeMap<Vec<u32>, C64> = BTreeMap::new();
    for (e1, c1) in &f.terms {
        for (e2, c2) in &g.terms {
            let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
            *acc.entry(e).or_insert(C64::new(0.0, 0.0)) += c1 * c2;
        }
    }
    acc.retain(|_, c| *c != C64::new(0.0, 0.0));
    MultiPoly {
        vars: f.vars.clone(),
        terms: acc,
    }
}

pub fn scale(alpha: C64, f: &MultiPoly) -> MultiPoly {
    f.scale(alpha)
}

/// Packs `f` into the dense descending-lex coefficient vector of `P^n`.
pub fn lex_pack(f: &MultiPoly, n: &TupleDegree) -> Result<CoeffVector> {
    let d = f.degree();
    if d.nvars() != n.nvars() || !d.le(n) {
        return Err(Error::DegreeOverflow {
            actual: d,
            bound: n.clone(),
        });
    }
    let mut data = vec![C64::new(0.0, 0.0); n.dim()];
    for (e, c) in &f.terms {
        data[lex_index(e, n)] = *c;
    }
    Ok(CoeffVector {
        bound: n.clone(),
        data,
    })
}

pub fn lex_unpack(v: &CoeffVector, vars: &[String]) -> MultiPoly {
    lex_unpack_slice(&v.data, &v.bound, vars)
}

pub fn lex_unpack_slice(data: &[C64], bound: &TupleDegree, vars: &[String]) -> MultiPoly {
    assert_eq!(data.len(), bound.dim());
    MultiPoly::from_terms(
        vars,
        lex_exponents(bound)
            .into_iter()
            .zip(data.iter().copied())
            .filter(|(_, c)| *c != C64::new(0.0, 0.0)),
    )
}

pub fn poly_norm(f: &MultiPoly) -> f64 {
    f.norm()
}

/// Hermitian product `<q, p> = sum conj(q_e) p_e` over a common support.
pub fn inner(q: &MultiPoly, p: &MultiPoly) -> C64 {
    q.terms
        .iter()
        .map(|(e, c)| c.conj() * p.coeff(e))
        .sum()
}

/// Sine of the angle between the coefficient lines of `p` and `q`.
pub fn sin_distance(p: &MultiPoly, q: &MultiPoly) -> f64 {
    match (p.is_zero(), q.is_zero()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ if p == q => return 0.0,
        _ => {}
    }
    let np = p.norm();
    let nq = q.norm();
    let ph = p.scale(C64::new(1.0 / np, 0.0));
    let qh = q.scale(C64::new(1.0 / nq, 0.0));
    let c = inner(&qh, &ph);
    let diff = &ph - &qh.scale(c);
    diff.norm().min(1.0)
}

/// `alpha * prod f_i^{k_i}` as one representative of an equivalence class.
#[derive(Clone, Debug, PartialEq)]
pub struct Factorization {
    pub alpha: C64,
    pub factors: Vec<(MultiPoly, u32)>,
}

impl Factorization {
    pub fn new(alpha: C64, factors: Vec<(MultiPoly, u32)>) -> Self {
        Factorization { alpha, factors }
    }

    /// The factors listed with multiplicities expanded.
    pub fn expanded_factors(&self) -> Vec<&MultiPoly> {
        self.factors
            .iter()
            .flat_map(|(p, k)| std::iter::repeat(p).take(*k as usize))
            .collect()
    }

    pub fn factor_count(&self) -> usize {
        self.factors.iter().map(|(_, k)| *k as usize).sum()
    }

    pub fn expand(&self) -> MultiPoly {
        expand(self)
    }

    /// Same factorization with every factor of unit norm (alpha absorbs the scale).
    pub fn normalized(&self) -> Factorization {
        let mut alpha = self.alpha;
        let factors = self
            .factors
            .iter()
            .map(|(p, k)| {
                let n = p.norm();
                alpha *= n.powi(*k as i32);
                (p.scale(C64::new(1.0 / n, 0.0)), *k)
            })
            .collect();
        Factorization { alpha, factors }
    }
}

/// Multiplies out `alpha * prod f_i^{k_i}`. Factors are normalized before the
/// products are formed and the accumulated scale is applied at the end.
pub fn expand(f: &Factorization) -> MultiPoly {
    let vars = match f.factors.first() {
        Some((p, _)) => p.vars().to_vec(),
        None => panic!("expand needs at least one factor to know the variables"),
    };
    let mut acc = MultiPoly::one(&vars);
    let mut scale = f.alpha;
    for (p, k) in &f.factors {
        let n = p.norm();
        if n == 0.0 {
            return MultiPoly::zero(&vars);
        }
        acc = &acc * &p.scale(C64::new(1.0 / n, 0.0)).pow(*k);
        scale *= n.powi(*k as i32);
    }
    acc.scale(scale)
}

/// Distance between two factorizations: the best permutation match of the
/// expanded factor lists under the sine metric, or 1 if the counts differ.
pub fn fact_distance(f: &Factorization, g: &Factorization) -> f64 {
    let a = f.expanded_factors();
    let b = g.expanded_factors();
    if a.len() != b.len() {
        return 1.0;
    }
    if a.is_empty() {
        return 0.0;
    }
    // distinct factor pairs only, then expand back to the full cost matrix
    let fa: Vec<usize> = f
        .factors
        .iter()
        .enumerate()
        .flat_map(|(i, (_, k))| std::iter::repeat(i).take(*k as usize))
        .collect();
    let gb: Vec<usize> = g
        .factors
        .iter()
        .enumerate()
        .flat_map(|(i, (_, k))| std::iter::repeat(i).take(*k as usize))
        .collect();
    let base: Vec<Vec<f64>> = f
        .factors
        .iter()
        .map(|(p, _)| g.factors.iter().map(|(q, _)| sin_distance(p, q)).collect())
        .collect();
    let n = a.len();
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| base[fa[i]][gb[j]]).collect())
        .collect();
    bottleneck_assignment(&cost)
}

/// min over permutations sigma of max_i cost[i][sigma(i)].
fn bottleneck_assignment(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut values: Vec<f64> = cost.iter().flatten().copied().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    let (mut lo, mut hi) = (0usize, values.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if has_perfect_matching(cost, values[mid], n) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    values[lo]
}

fn has_perfect_matching(cost: &[Vec<f64>], threshold: f64, n: usize) -> bool {
    let mut match_right: Vec<Option<usize>> = vec![None; n];
    for left in 0..n {
        let mut seen = vec![false; n];
        if !augment(cost, threshold, left, &mut seen, &mut match_right) {
            return false;
        }
    }
    true
}

fn augment(
    cost: &[Vec<f64>],
    threshold: f64,
    left: usize,
    seen: &mut [bool],
    match_right: &mut [Option<usize>],
) -> bool {
    for right in 0..cost.len() {
        if cost[left][right] <= threshold && !seen[right] {
            seen[right] = true;
            let free = match match_right[right] {
                None => true,
                Some(other) => augment(cost, threshold, other, seen, match_right),
            };
            if free {
                match_right[right] = Some(left);
                return true;
            }
        }
    }
    false
}

/// Matrix of `h -> q*h` from `P^m_h` into `P^{deg(q)+m_h}`.
pub fn conv_matrix(q: &MultiPoly, m_h: &TupleDegree) -> DMatrix<C64> {
    let target = q.degree().add(m_h);
    conv_matrix_into(q, m_h, &target)
}

/// Convolution matrix with an explicit (possibly larger) target bound.
pub fn conv_matrix_into(q: &MultiPoly, m_h: &TupleDegree, target: &TupleDegree) -> DMatrix<C64> {
    assert!(
        q.degree().add(m_h).le(target),
        "convolution target {target} too small for {} + {m_h}",
        q.degree()
    );
    let cols = lex_exponents(m_h);
    let mut c = DMatrix::from_element(target.dim(), cols.len(), C64::new(0.0, 0.0));
    for (j, eh) in cols.iter().enumerate() {
        for (eq, coef) in &q.terms {
            let e: Vec<u32> = eq.iter().zip(eh).map(|(a, b)| a + b).collect();
            c[(lex_index(&e, target), j)] += *coef;
        }
    }
    c
}

/// Directional derivative `sum_i z_i * df/dx_i`.
pub fn dir_derivative(f: &MultiPoly, z: &[C64]) -> MultiPoly {
    assert_eq!(z.len(), f.nvars());
    let mut out = MultiPoly::zero(f.vars());
    for (i, zi) in z.iter().enumerate() {
        if *zi != C64::new(0.0, 0.0) {
            out = &out + &f.derivative(i).scale(*zi);
        }
    }
    out
}
