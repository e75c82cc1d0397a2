//! Gauss-Newton refinement on a factorization manifold.
//!
//! The unknowns are `z = (gamma, [p_1], ..., [p_r])` and the overdetermined
//! system is
//!
//! ```text
//! [gamma * p_1^k_1 ... p_r^k_r] = [f]
//!              b_i^H [p_i]      = 1      (i = 1..r)
//! ```
//!
//! where the unit vectors `b_i` pin down one representative of each factor.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::kernels::{self, DenseMatrix};
use crate::polycore::{
    self, conv_matrix_into, lex_pack, lex_unpack_slice, CoeffVector, Factorization, MultiPoly,
    TupleDegree,
};
use crate::structure::FactorStructure;

/// The scaled factorization map for one structure and one target polynomial.
#[derive(Clone, Debug)]
pub struct PhiSystem {
    vars: Vec<String>,
    degrees: Vec<TupleDegree>,
    mults: Vec<u32>,
    total: TupleDegree,
    target: CoeffVector,
    scaling: Vec<DVector<C64>>,
    offsets: Vec<usize>,
}

/// One Gauss-Newton iterate.
#[derive(Clone, Debug)]
pub struct GNState {
    pub z: DVector<C64>,
    pub residual_norm: f64,
    pub iteration: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct GnOptions {
    pub max_iter: usize,
    /// A step counts as progress when the residual or the step length shrinks
    /// below this fraction of its previous value.
    pub stagnation: f64,
    /// Absolute residual at which iteration stops.
    pub floor: f64,
    /// Residual changes below this size are rounding noise, not divergence.
    pub noise: f64,
    /// Levenberg-Marquardt damping for starts far from the manifold.
    pub damped: bool,
}

impl Default for GnOptions {
    fn default() -> Self {
        GnOptions {
            max_iter: 50,
            stagnation: 0.5,
            floor: 0.0,
            noise: 0.0,
            damped: false,
        }
    }
}

/// A refined factorization with its diagnostics.
#[derive(Clone, Debug)]
pub struct NumFactResult {
    pub factorization: Factorization,
    pub backward_error: f64,
    pub sin_backward: f64,
    pub structure: FactorStructure,
    pub condition_number: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PhiSystem {
    /// Builds the system for `f` with factor degrees and multiplicities.
    /// Scaling vectors are the normalized coefficient vectors of `initial`.
    pub fn new(f: &MultiPoly, initial: &[(MultiPoly, u32)], degrees: &[TupleDegree]) -> Result<Self> {
        if initial.len() != degrees.len() || initial.is_empty() {
            return Err(Error::DimensionMismatch(
                "one degree per initial factor is required".into(),
            ));
        }
        let nvars = f.nvars();
        let mut total = TupleDegree::zeros(nvars);
        for ((_, k), d) in initial.iter().zip(degrees) {
            total = total.add(&d.scale(*k));
        }
        let fdeg = f.degree();
        if !fdeg.le(&total) {
            return Err(Error::DegreeMismatch(fdeg, total));
        }
        let target = lex_pack(f, &total)?;
        let mut scaling = Vec::with_capacity(initial.len());
        let mut offsets = vec![1];
        for ((p, _), d) in initial.iter().zip(degrees) {
            let v = lex_pack(p, d)?.to_dvector();
            let n = v.norm();
            if n == 0.0 {
                return Err(Error::Precondition("initial factor is zero".into()));
            }
            scaling.push(v / C64::new(n, 0.0));
            offsets.push(offsets.last().unwrap() + d.dim());
        }
        Ok(PhiSystem {
            vars: f.vars().to_vec(),
            degrees: degrees.to_vec(),
            mults: initial.iter().map(|(_, k)| *k).collect(),
            total,
            target,
            scaling,
            offsets,
        })
    }

    /// Replaces the scaling vectors (each is normalized here).
    pub fn with_scaling(mut self, scaling: Vec<DVector<C64>>) -> Result<Self> {
        if scaling.len() != self.degrees.len()
            || scaling.iter().zip(&self.degrees).any(|(b, d)| b.len() != d.dim())
        {
            return Err(Error::DimensionMismatch("scaling vector sizes".into()));
        }
        self.scaling = scaling
            .into_iter()
            .map(|b| {
                let n = b.norm();
                b / C64::new(n, 0.0)
            })
            .collect();
        Ok(self)
    }

    pub fn nvars(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn nresiduals(&self) -> usize {
        self.total.dim() + self.degrees.len()
    }

    pub fn structure(&self) -> FactorStructure {
        FactorStructure::new(self.degrees.iter().cloned().zip(self.mults.iter().copied()).collect())
            .expect("factor degrees are nonzero")
    }

    pub fn target_norm(&self) -> f64 {
        self.target.norm()
    }

    /// Starting vector from factor approximations: each factor is scaled so
    /// that `b_i^H p_i = 1` and gamma is fitted by least squares.
    pub fn initial_point(&self, factors: &[MultiPoly]) -> Result<DVector<C64>> {
        let mut z = DVector::zeros(self.nvars());
        for (i, p) in factors.iter().enumerate() {
            let v = lex_pack(p, &self.degrees[i])?.to_dvector();
            let s = self.scaling[i].dotc(&v);
            if s.norm() == 0.0 {
                return Err(Error::Precondition("initial factor orthogonal to its scaling vector".into()));
            }
            z.rows_mut(self.offsets[i], v.len()).copy_from(&(v / s));
        }
        let g = self.product(&z, None);
        let gv = lex_pack(&g, &self.total)?.to_dvector();
        let gn = gv.norm_squared();
        z[0] = if gn > 0.0 {
            gv.dotc(&self.target.to_dvector()) / gn
        } else {
            C64::new(1.0, 0.0)
        };
        Ok(z)
    }

    pub fn factor(&self, z: &DVector<C64>, i: usize) -> MultiPoly {
        let d = &self.degrees[i];
        lex_unpack_slice(
            z.rows(self.offsets[i], d.dim()).as_slice(),
            d,
            &self.vars,
        )
    }

    // prod_j p_j^{k_j}, with one copy of p_skip removed when given
    fn product(&self, z: &DVector<C64>, skip: Option<usize>) -> MultiPoly {
        let mut acc = MultiPoly::one(&self.vars);
        for i in 0..self.degrees.len() {
            let k = self.mults[i] - u32::from(skip == Some(i));
            if k > 0 {
                acc = &acc * &self.factor(z, i).pow(k);
            }
        }
        acc
    }

    /// `phi(z) - (f, 1, ..., 1)`.
    pub fn phi_eval(&self, z: &DVector<C64>) -> Result<DVector<C64>> {
        if z.len() != self.nvars() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} unknowns, got {}",
                self.nvars(),
                z.len()
            )));
        }
        let prod = self.product(z, None).scale(z[0]);
        let pv = lex_pack(&prod, &self.total)?.data;
        let m = self.total.dim();
        let mut r = DVector::zeros(self.nresiduals());
        for j in 0..m {
            r[j] = pv[j] - self.target.data[j];
        }
        for (i, b) in self.scaling.iter().enumerate() {
            let p = z.rows(self.offsets[i], self.degrees[i].dim());
            r[m + i] = b.dotc(&p) - C64::new(1.0, 0.0);
        }
        Ok(r)
    }

    pub fn jacobian(&self, z: &DVector<C64>) -> Result<DenseMatrix> {
        if z.len() != self.nvars() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} unknowns, got {}",
                self.nvars(),
                z.len()
            )));
        }
        let m = self.total.dim();
        let mut j = DMatrix::zeros(self.nresiduals(), self.nvars());
        let full = lex_pack(&self.product(z, None), &self.total)?;
        for (row, c) in full.data.iter().enumerate() {
            j[(row, 0)] = *c;
        }
        for i in 0..self.degrees.len() {
            let q = self
                .product(z, Some(i))
                .scale(z[0] * self.mults[i] as f64);
            let block = conv_matrix_into(&q, &self.degrees[i], &self.total);
            j.view_mut((0, self.offsets[i]), (m, self.degrees[i].dim()))
                .copy_from(&block);
            for (col, bc) in self.scaling[i].iter().enumerate() {
                j[(m + i, self.offsets[i] + col)] = bc.conj();
            }
        }
        Ok(j)
    }

    pub fn factorization(&self, z: &DVector<C64>) -> Factorization {
        Factorization::new(
            z[0],
            (0..self.degrees.len())
                .map(|i| (self.factor(z, i), self.mults[i]))
                .collect(),
        )
    }

    /// `||J(z)^+||_2 = 1 / sigma_min`; infinite for a rank-deficient Jacobian.
    pub fn condition_number(&self, z: &DVector<C64>) -> Result<f64> {
        Ok(pseudo_inverse_norm(&self.jacobian(z)?))
    }
}

/// `||J^+||_2` for a tall matrix, computed as `||R^-1||_2` from a Householder
/// QR factorization. The scalar column of a factorization Jacobian can be
/// many orders of magnitude larger than the rest; QR keeps the small singular
/// values of such column-graded matrices that a plain SVD would flush.
pub fn pseudo_inverse_norm(j: &DenseMatrix) -> f64 {
    let (m, n) = j.shape();
    if m < n || n == 0 {
        return f64::INFINITY;
    }
    let r = j.clone().qr().r();
    for k in 0..n {
        let col = j.column(k).norm();
        if r[(k, k)].norm() <= (m as f64) * f64::EPSILON * col || col == 0.0 {
            return f64::INFINITY;
        }
    }
    match r.solve_upper_triangular(&DMatrix::identity(n, n)) {
        Some(rinv) if rinv.iter().all(|c| c.re.is_finite() && c.im.is_finite()) => {
            kernels::max_singular(&rinv)
        }
        _ => f64::INFINITY,
    }
}

/// Outcome of [`gauss_newton_with`].
#[derive(Clone, Debug)]
pub struct GnOutcome {
    pub x: DVector<C64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gauss-Newton on a general holomorphic residual `x -> (r(x), J(x))`.
/// Returns the best iterate seen. Iteration stops when neither the residual
/// nor the step length contracts, at the residual floor, or after
/// `max_iter` steps.
pub fn gauss_newton_with<F>(x0: DVector<C64>, mut eval: F, opts: &GnOptions) -> Result<GnOutcome>
where
    F: FnMut(&DVector<C64>) -> Result<(DVector<C64>, DenseMatrix)>,
{
    let (mut r, mut jac) = eval(&x0)?;
    let r0 = r.norm();
    let mut x = x0;
    let mut res = r0;
    let mut best = (x.clone(), res, 0usize);
    let mut prev_step = f64::INFINITY;
    let mut monotone = true;
    let mut mu = if opts.damped { 1e-3 * jac.norm().powi(2).max(1e-300) } else { 0.0 };
    let mut iterations = 0;
    let mut stalled = 0;
    while iterations < opts.max_iter && res > opts.floor {
        let step = if opts.damped {
            damped_step(&jac, &r, mu)?
        } else {
            equilibrated_step(&jac, &r)?
        };
        let step_norm = step.norm();
        let xn = &x - &step;
        if xn.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            break;
        }
        let (rn, jn) = eval(&xn)?;
        let resn = rn.norm();
        if !resn.is_finite() {
            break;
        }
        iterations += 1;
        if opts.damped {
            if resn >= res {
                mu *= 4.0;
                stalled += 1;
                if stalled > 30 {
                    break;
                }
                continue;
            }
            mu = (mu / 3.0).max(1e-300);
            stalled = 0;
        }
        if resn >= 10.0 * r0.max(f64::MIN_POSITIVE) {
            res = resn;
            monotone = false;
            break;
        }
        let residual_progress = resn <= opts.stagnation * res;
        let step_progress = step_norm <= opts.stagnation * prev_step;
        if resn > res + opts.noise {
            monotone = false;
        }
        x = xn;
        r = rn;
        jac = jn;
        // prefer the newest iterate among residuals equal to rounding
        if res_leq(resn, best.1) {
            best = (x.clone(), resn, iterations);
        }
        res = resn;
        let tiny = step_norm <= 4.0 * f64::EPSILON * x.norm().max(1e-300);
        if tiny || (!residual_progress && !step_progress) {
            break;
        }
        prev_step = step_norm;
    }
    if best.2 == 0 && res > 10.0 * r0 {
        return Err(Error::Diverged { from: r0, to: res });
    }
    Ok(GnOutcome {
        x: best.0,
        residual_norm: best.1,
        iterations,
        converged: monotone && best.1 <= r0,
    })
}

fn res_leq(a: f64, b: f64) -> bool {
    a <= b * (1.0 + 1e-9) + 1e-300
}

// Columns are scaled to unit norm before the least-squares solve so that a
// large scalar column does not swamp the rank cutoff.
fn equilibrated_step(j: &DenseMatrix, r: &DVector<C64>) -> Result<DVector<C64>> {
    let scales: Vec<f64> = j
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 {
                1.0 / n
            } else {
                1.0
            }
        })
        .collect();
    let mut js = j.clone();
    for (k, s) in scales.iter().enumerate() {
        js.column_mut(k).scale_mut(*s);
    }
    let mut step = kernels::lstsq_min_norm(&js, r)?;
    for (k, s) in scales.iter().enumerate() {
        step[k] *= *s;
    }
    Ok(step)
}

fn damped_step(j: &DenseMatrix, r: &DVector<C64>, mu: f64) -> Result<DVector<C64>> {
    let (m, n) = j.shape();
    let mut a = DMatrix::zeros(m + n, n);
    a.view_mut((0, 0), (m, n)).copy_from(j);
    let s = C64::new(mu.sqrt(), 0.0);
    for i in 0..n {
        a[(m + i, i)] = s;
    }
    let mut b = DVector::zeros(m + n);
    b.rows_mut(0, m).copy_from(r);
    kernels::lstsq_min_norm(&a, &b)
}

/// Gauss-Newton for a factorization system from a starting point.
pub fn gauss_newton(sys: &PhiSystem, z0: DVector<C64>, opts: &GnOptions) -> Result<GNState> {
    let out = gauss_newton_with(
        z0,
        |z| Ok((sys.phi_eval(z)?, sys.jacobian(z)?)),
        opts,
    )?;
    Ok(GNState {
        z: out.x,
        residual_norm: out.residual_norm,
        iteration: out.iterations,
        converged: out.converged,
    })
}

/// `||f - gamma* g||` for the best scalar `gamma*`, with `g` the product of
/// the factors (alpha ignored).
pub fn certify_distance(f: &MultiPoly, fac: &Factorization) -> f64 {
    best_scale(f, fac).1
}

/// The least-squares scalar for `fac`'s product against `f` and the distance it attains.
pub fn best_scale(f: &MultiPoly, fac: &Factorization) -> (C64, f64) {
    let unit = Factorization::new(C64::new(1.0, 0.0), fac.factors.clone());
    let g = polycore::expand(&unit);
    let gn = polycore::inner(&g, &g).re;
    if gn == 0.0 {
        return (C64::new(0.0, 0.0), f.norm());
    }
    let gamma = polycore::inner(&g, f) / gn;
    (gamma, (f - &g.scale(gamma)).norm())
}

/// Refines `initial` toward the nearest polynomial to `f` with the same
/// structure. Factor degrees are taken from the initial factors.
pub fn refine(f: &MultiPoly, initial: &Factorization, opts: &GnOptions) -> Result<NumFactResult> {
    let degrees: Vec<TupleDegree> = initial.factors.iter().map(|(p, _)| p.degree()).collect();
    refine_with_degrees(f, initial, &degrees, opts)
}

pub fn refine_with_degrees(
    f: &MultiPoly,
    initial: &Factorization,
    degrees: &[TupleDegree],
    opts: &GnOptions,
) -> Result<NumFactResult> {
    let sys = PhiSystem::new(f, &initial.factors, degrees)?;
    let factors: Vec<MultiPoly> = initial.factors.iter().map(|(p, _)| p.clone()).collect();
    let z0 = sys.initial_point(&factors)?;
    let mut opts = opts.clone();
    if opts.noise == 0.0 {
        opts.noise = 1e2 * f64::EPSILON * f.norm();
    }
    let state = gauss_newton(&sys, z0, &opts)?;
    finish(f, &sys, &state)
}

/// Packages a Gauss-Newton state as a result, fitting alpha in closed form.
pub fn finish(f: &MultiPoly, sys: &PhiSystem, state: &GNState) -> Result<NumFactResult> {
    let mut fac = sys.factorization(&state.z);
    let (gamma, dist) = best_scale(f, &fac);
    fac.alpha = gamma;
    let expanded = fac.expand();
    Ok(NumFactResult {
        sin_backward: polycore::sin_distance(f, &expanded),
        backward_error: dist,
        structure: sys.structure(),
        condition_number: sys.condition_number(&state.z)?,
        iterations: state.iteration,
        converged: state.converged,
        factorization: fac,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn lin(a: f64) -> MultiPoly {
        MultiPoly::from_real_terms(&["x"], &[(&[1], 1.0), (&[0], a)])
    }

    fn sys_for(factors: &[(MultiPoly, u32)]) -> (MultiPoly, PhiSystem) {
        let f = Factorization::new(c(1.0), factors.to_vec()).expand();
        let degs: Vec<TupleDegree> = factors.iter().map(|(p, _)| p.degree()).collect();
        let s = PhiSystem::new(&f, factors, &degs).unwrap();
        (f, s)
    }

    #[test]
    fn exact_point_has_zero_residual() {
        let (_, sys) = sys_for(&[(lin(-1.0), 2), (lin(-2.0), 1)]);
        let z = sys.initial_point(&[lin(-1.0), lin(-2.0)]).unwrap();
        assert!(sys.phi_eval(&z).unwrap().norm() < 1e-14);
    }

    #[test]
    fn doubled_gamma_leaves_f() {
        let (f, sys) = sys_for(&[(lin(-1.0), 1), (lin(-2.0), 1)]);
        let mut z = sys.initial_point(&[lin(-1.0), lin(-2.0)]).unwrap();
        z[0] *= 2.0;
        assert!((sys.phi_eval(&z).unwrap().norm() - f.norm()).abs() < 1e-13);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (_, sys) = sys_for(&[(lin(0.5), 2), (lin(-2.0), 1)]);
        let z = DVector::from_fn(sys.nvars(), |i, _| C64::new(0.3 + i as f64 * 0.1, -0.2 * i as f64));
        let dir = DVector::from_fn(sys.nvars(), |i, _| C64::new(1.0 / (1.0 + i as f64), 0.5));
        let h = 1e-6;
        let fd = (sys.phi_eval(&(&z + &dir * c(h))).unwrap() - sys.phi_eval(&(&z - &dir * c(h))).unwrap())
            / c(2.0 * h);
        let jd = sys.jacobian(&z).unwrap() * &dir;
        assert!((&fd - &jd).norm() <= 1e-6 * jd.norm());
    }

    #[test]
    fn duplicated_factor_is_rank_deficient() {
        let (_, good) = sys_for(&[(lin(1.0), 1), (lin(2.0), 1)]);
        let zg = good.initial_point(&[lin(1.0), lin(2.0)]).unwrap();
        let jg = good.jacobian(&zg).unwrap();
        assert!(kernels::min_singular(&jg) > 1e-8 * kernels::max_singular(&jg));
        assert!(good.condition_number(&zg).unwrap().is_finite());

        let (_, bad) = sys_for(&[(lin(1.0), 1), (lin(1.0), 1)]);
        let zb = bad.initial_point(&[lin(1.0), lin(1.0)]).unwrap();
        let jb = bad.jacobian(&zb).unwrap();
        assert!(kernels::min_singular(&jb) < 1e-10 * kernels::max_singular(&jb));
        assert!(bad.condition_number(&zb).unwrap().is_infinite());
    }

    #[test]
    fn close_factors_are_worse_conditioned() {
        let kappa = |a: f64, b: f64| {
            let (_, s) = sys_for(&[(lin(a), 1), (lin(b), 1)]);
            let z = s.initial_point(&[lin(a), lin(b)]).unwrap();
            s.condition_number(&z).unwrap()
        };
        assert!(kappa(-1.0, -1.001) > kappa(-1.0, -2.0));
    }

    #[test]
    fn exact_start_stops_immediately() {
        let (f, _) = sys_for(&[(lin(-1.0), 1), (lin(-2.0), 1)]);
        let init = Factorization::new(c(1.0), vec![(lin(-1.0), 1), (lin(-2.0), 1)]);
        let r = refine(&f, &init, &GnOptions::default()).unwrap();
        assert!(r.backward_error <= 1e-12 * f.norm());
        assert!((certify_distance(&f, &r.factorization) - r.backward_error).abs() <= 1e-12 * f.norm());
    }

    #[test]
    fn recovers_nearest_factorization_after_perturbation() {
        let (f0, _) = sys_for(&[(lin(-1.0), 2), (lin(3.0), 1)]);
        let e = MultiPoly::from_real_terms(&["x"], &[(&[3], 0.3), (&[2], -0.5), (&[1], 0.7), (&[0], 0.2)]);
        let e = e.scale(c(1e-6 / e.norm()));
        let f = &f0 + &e;
        let init = Factorization::new(c(1.0), vec![(lin(-1.01), 2), (lin(2.99), 1)]);
        let r = refine(&f, &init, &GnOptions::default()).unwrap();
        assert!(r.backward_error <= 1e-6, "{}", r.backward_error);
        assert!(r.converged);
    }

    #[test]
    fn orthogonal_target_gives_full_norm() {
        let f = MultiPoly::from_real_terms(&["x"], &[(&[0], 2.0)]);
        let fac = Factorization::new(c(1.0), vec![(MultiPoly::from_real_terms(&["x"], &[(&[1], 1.0)]), 1)]);
        assert!((certify_distance(&f, &fac) - 2.0).abs() < 1e-15);
    }
}
