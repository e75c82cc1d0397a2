//! Numerical squarefree factorization by a directional-derivative gcd sweep.
//!
//! With `u = gcd(f, d_z f)`, `f = u v` and `d_z f = u w`, the squarefree part
//! of multiplicity `l` is `h_l = gcd(v, l d_z v - w)`.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numgcd::numerical_gcd_seeded;
use crate::polycore::{dir_derivative, expand, inner, Factorization, MultiPoly, TupleDegree};

/// Loosest tolerance tried for the inner gcds of the sweep.
pub const SWEEP_TOL_CAP: f64 = 1e-3;

/// `alpha * h_1^k_1 * ... * h_r^k_r` with distinct, increasing `k_j`.
#[derive(Clone, Debug)]
pub struct SquarefreeResult {
    pub alpha: C64,
    pub parts: Vec<(MultiPoly, u32)>,
    pub direction: Vec<C64>,
    /// `||f - alpha prod h_j^k_j|| / ||f||`.
    pub residual: f64,
}

impl SquarefreeResult {
    pub fn factorization(&self) -> Factorization {
        Factorization::new(self.alpha, self.parts.clone())
    }
}

/// Intermediate quantities of one sweep, kept for inspection.
#[derive(Clone, Debug)]
pub struct SweepTrace {
    pub u: MultiPoly,
    pub v: MultiPoly,
    pub w: MultiPoly,
    /// `(l, h_l)` for every nonconstant `h_l` found.
    pub parts: Vec<(u32, MultiPoly)>,
}

/// Unit vector in C^l, uniform on the sphere.
pub fn random_direction(nvars: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let mut z: Vec<C64> = (0..nvars)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im)
        })
        .collect();
    let n = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for c in &mut z {
        *c /= n;
    }
    z
}

/// Runs the sweep along one direction `z`.
pub fn sweep(f: &MultiPoly, z: &[C64], tol: f64, seed: u64) -> SweepTrace {
    let base = sweep_base(f, z, tol, seed);
    sweep_parts(f, base, z, tol, seed)
}

// u, v, w for one direction
fn sweep_base(f: &MultiPoly, z: &[C64], tol: f64, seed: u64) -> (MultiPoly, MultiPoly, MultiPoly) {
    let df = dir_derivative(f, z);
    let g = numerical_gcd_seeded(f, &df, tol, seed);
    (g.gcd, g.cofactor_p, g.cofactor_q)
}

fn sweep_parts(
    f: &MultiPoly,
    (u, v, w): (MultiPoly, MultiPoly, MultiPoly),
    z: &[C64],
    tol: f64,
    seed: u64,
) -> SweepTrace {
    let fdeg = f.degree();
    let total = fdeg.total();
    let dv = dir_derivative(&v, z);
    let mut parts = Vec::new();
    let mut acc = TupleDegree::zeros(f.nvars());
    if u.is_constant() {
        parts.push((1, v.clone()));
        return SweepTrace { u, v, w, parts };
    }
    for l in 1..=total {
        let ldv = dv.scale(C64::new(l as f64, 0.0));
        let rl = &ldv - &w;
        // every factor has multiplicity l: l d_z v = w and h_l = v
        let h = if rl.norm() <= tol * (ldv.norm() + w.norm()) {
            v.normalized()
        } else {
            let g = numerical_gcd_seeded(&v, &rl, tol, seed.wrapping_add(l as u64)).gcd;
            if g.is_constant() {
                continue;
            }
            g
        };
        acc = acc.add(&h.degree().scale(l));
        parts.push((l, h));
        if !acc.le(&fdeg) || acc == fdeg {
            break;
        }
    }
    SweepTrace { u, v, w, parts }
}

/// Squarefree factorization within relative tolerance `tol`.
pub fn squarefree_factor(f: &MultiPoly, tol: f64, seed: u64) -> Result<SquarefreeResult> {
    if f.is_constant() {
        return Err(Error::Precondition("squarefree factorization of a constant".into()));
    }
    let fdeg = f.degree();
    let attempts = if f.nvars() == 1 { 1 } else { 3 };
    for attempt in 0..attempts {
        let z = if f.nvars() == 1 {
            vec![C64::new(1.0, 0.0)]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(attempt as u64));
            random_direction(f.nvars(), &mut rng)
        };
        let aseed = seed.wrapping_add(attempt as u64);
        let base = sweep_base(f, &z, tol, aseed);
        // v and w inherit the conditioning of the repeated roots, so the
        // inner gcds may need a looser tolerance than the outer one
        let mut consistent = None;
        let mut sweep_tol = tol;
        while sweep_tol <= SWEEP_TOL_CAP.max(tol) {
            let trace = sweep_parts(f, base.clone(), &z, sweep_tol, aseed);
            let mut acc = TupleDegree::zeros(f.nvars());
            for (l, h) in &trace.parts {
                acc = acc.add(&h.degree().scale(*l));
            }
            if acc == fdeg {
                consistent = Some(trace);
                break;
            }
            sweep_tol *= 10.0;
        }
        let Some(trace) = consistent else {
            continue;
        };
        let parts: Vec<(MultiPoly, u32)> = trace
            .parts
            .into_iter()
            .map(|(l, h)| (h.normalized(), l))
            .collect();
        let g = expand(&Factorization::new(C64::new(1.0, 0.0), parts.clone()));
        let alpha = inner(&g, f) / inner(&g, &g).re;
        let residual = (f - &g.scale(alpha)).norm() / f.norm();
        return Ok(SquarefreeResult {
            alpha,
            parts,
            direction: z,
            residual,
        });
    }
    Err(Error::SweepInconsistent { attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polycore::sin_distance;

    fn lin(a: f64) -> MultiPoly {
        MultiPoly::from_real_terms(&["x"], &[(&[1], 1.0), (&[0], a)])
    }

    #[test]
    fn squarefree_input_is_one_part() {
        let f = &(&lin(-1.0) * &lin(2.0)) * &lin(0.25);
        let r = squarefree_factor(&f, 1e-10, 0).unwrap();
        assert_eq!(r.parts.len(), 1);
        assert_eq!(r.parts[0].1, 1);
        assert!(sin_distance(&r.parts[0].0, &f) < 1e-12);
        assert!(r.residual < 1e-12);
    }

    #[test]
    fn hand_trace_of_double_root() {
        let f = &lin(-1.0).pow(2) * &lin(-2.0);
        let t = sweep(&f, &[C64::new(1.0, 0.0)], 1e-10, 0);
        assert!(sin_distance(&t.u, &lin(-1.0)) < 1e-12);
        assert!(sin_distance(&t.v, &(&lin(-1.0) * &lin(-2.0))) < 1e-12);
        let three_x_minus_5 = MultiPoly::from_real_terms(&["x"], &[(&[1], 3.0), (&[0], -5.0)]);
        assert!(sin_distance(&t.w, &three_x_minus_5) < 1e-12);
        assert_eq!(t.parts.len(), 2);
        assert_eq!(t.parts[0].0, 1);
        assert!(sin_distance(&t.parts[0].1, &lin(-2.0)) < 1e-12);
        assert_eq!(t.parts[1].0, 2);
        assert!(sin_distance(&t.parts[1].1, &lin(-1.0)) < 1e-12);
    }

    #[test]
    fn bivariate_square() {
        let v = ["x", "y"];
        let a = MultiPoly::from_real_terms(&v, &[(&[1, 0], 1.0), (&[0, 1], 1.0)]);
        let b = MultiPoly::from_real_terms(&v, &[(&[1, 0], 1.0), (&[0, 1], -1.0), (&[0, 0], 1.0)]);
        let f = &a.pow(2) * &b;
        let r = squarefree_factor(&f, 1e-10, 7).unwrap();
        assert_eq!(r.parts.len(), 2);
        assert_eq!(r.parts[0].1, 1);
        assert!(sin_distance(&r.parts[0].0, &b) < 1e-8);
        assert_eq!(r.parts[1].1, 2);
        assert!(sin_distance(&r.parts[1].0, &a) < 1e-8);
        assert!(r.residual < 1e-10);
    }

    #[test]
    fn single_multiplicity_power() {
        let p = &lin(-0.5) * &lin(1.5);
        let r = squarefree_factor(&p.pow(3), 1e-10, 0).unwrap();
        assert_eq!(r.parts.len(), 1);
        assert_eq!(r.parts[0].1, 3);
        assert!(sin_distance(&r.parts[0].0, &p) < 1e-10);
    }

    #[test]
    fn constants_are_rejected() {
        let k = MultiPoly::from_real_terms(&["x"], &[(&[0], 3.0)]);
        assert!(squarefree_factor(&k, 1e-10, 0).is_err());
    }
}
