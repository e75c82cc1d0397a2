//! End-to-end numerical factorization within a backward tolerance.
//!
//! The fast path proposes one structure from squarefree factorization and
//! splitting, refines it and certifies the distance. When certification
//! fails, structures of lower codimension are tried in codimension order,
//! each initialized from its parent by the corresponding embedding move.
//! The exhaustive path refines every realizable structure of `deg f` and
//! selects the certified one of highest codimension.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::polycore::{fact_distance, Factorization, MultiPoly};
use crate::refine::{self, GnOptions, NumFactResult};
pub use crate::refine::certify_distance;
use crate::split::{hint_initial, identify_structure, structure_of};
use crate::structure::{realizable_structures, select_max_codim_detail, FactorStructure};

/// Largest `<deg f>` accepted by the exhaustive mode.
pub const EXHAUSTIVE_LIMIT: usize = 24;

/// Most structures refined during the lattice descent.
pub const DESCENT_LIMIT: usize = 64;

#[derive(Clone, Debug)]
pub struct Config {
    /// Backward tolerance on `||f - alpha prod f_i^k_i||`.
    pub epsilon: f64,
    pub seed: u64,
    pub unit_roundoff: f64,
    pub structure_hint: Option<FactorStructure>,
    pub max_retries: usize,
}

impl Config {
    pub fn new(epsilon: f64) -> Self {
        Config {
            epsilon,
            seed: 0,
            unit_roundoff: f64::EPSILON,
            structure_hint: None,
            max_retries: 3,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_hint(mut self, hint: FactorStructure) -> Self {
        self.structure_hint = Some(hint);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > self.unit_roundoff) {
            return Err(Error::Precondition(format!(
                "tolerance {:e} must exceed the unit roundoff {:e}",
                self.epsilon, self.unit_roundoff
            )));
        }
        Ok(())
    }

    /// Relative tolerance handed to the gcd and rank decisions.
    pub fn detection_tolerance(&self, f: &MultiPoly) -> f64 {
        (0.1 * self.epsilon / f.norm()).max(2.0 * self.unit_roundoff)
    }
}

fn check_input(f: &MultiPoly, cfg: &Config) -> Result<()> {
    cfg.validate()?;
    if f.is_zero() {
        return Err(Error::Precondition("cannot factor the zero polynomial".into()));
    }
    Ok(())
}

fn constant_result(f: &MultiPoly) -> NumFactResult {
    let c = f.coeff(&vec![0; f.nvars()]);
    NumFactResult {
        factorization: Factorization::new(c, Vec::new()),
        backward_error: 0.0,
        sin_backward: 0.0,
        structure: FactorStructure::constant(),
        condition_number: 1.0,
        iterations: 0,
        converged: true,
    }
}

/// Numerical irreducible factorization of `f` within `cfg.epsilon`.
pub fn numerical_factor(f: &MultiPoly, cfg: &Config) -> Result<NumFactResult> {
    check_input(f, cfg)?;
    if f.is_constant() {
        return Ok(constant_result(f));
    }
    let tol = cfg.detection_tolerance(f);
    let mut proposal = None;
    let mut last_err = None;
    for attempt in 0..cfg.max_retries.max(1) {
        let seed = cfg.seed.wrapping_add(attempt as u64);
        match identify_structure(f, tol, seed, cfg.structure_hint.as_ref()) {
            Ok(p) => {
                proposal = Some(p);
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let initial = match proposal {
        Some((_, fac)) => fac,
        None if cfg.structure_hint.is_some() => return Err(last_err.unwrap()),
        None => trivial_factorization(f),
    };
    let result = descend(f, initial, cfg)?;
    present(f, result)
}

fn trivial_factorization(f: &MultiPoly) -> Factorization {
    let p = f.normalized();
    Factorization::new(C64::new(f.norm(), 0.0), vec![(p, 1)])
}

fn refine_start(f: &MultiPoly, init: &Factorization) -> Result<NumFactResult> {
    refine::refine(f, init, &GnOptions::default())
}

/// Tries `initial`, then lower-codimension structures reached by embedding
/// moves, highest codimension first, until one certifies.
fn descend(f: &MultiPoly, initial: Factorization, cfg: &Config) -> Result<NumFactResult> {
    let eps = cfg.epsilon;
    let start = structure_of(&initial)?;
    // codim descending, then canonical order
    let mut queue: BTreeMap<(i64, FactorStructure), Factorization> = BTreeMap::new();
    let mut seen: BTreeSet<FactorStructure> = BTreeSet::new();
    seen.insert(start.clone());
    queue.insert((-start.codim(), start), initial);
    let mut refined = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut last_err = None;
    while let Some(((_, s), init)) = queue.pop_first() {
        let mut parent = init.clone();
        if s.is_realizable() && refined < DESCENT_LIMIT {
            refined += 1;
            match refine_start(f, &init) {
                Ok(r) if r.backward_error < eps => return Ok(r),
                Ok(r) => parent = r.factorization,
                Err(e) => last_err = Some(e),
            }
        }
        if refined >= DESCENT_LIMIT {
            break;
        }
        for child in embedding_children(&parent, &mut rng) {
            let cs = structure_of(&child)?;
            if seen.insert(cs.clone()) {
                queue.insert((-cs.codim(), cs), child);
            }
        }
    }
    // the irreducible structure always certifies unless refinement breaks down
    let r = refine_start(f, &trivial_factorization(f));
    match r {
        Ok(r) if r.backward_error < eps => Ok(r),
        Ok(r) => Err(Error::NothingCertifies(r.backward_error)),
        Err(e) => Err(last_err.unwrap_or(e)),
    }
}

/// Factorizations one embedding move away: two factors of equal multiplicity
/// multiplied together, or one repeated factor split into two nearby copies.
fn embedding_children(fac: &Factorization, rng: &mut ChaCha8Rng) -> Vec<Factorization> {
    let mut out = Vec::new();
    let n = fac.factors.len();
    for i in 0..n {
        for j in i + 1..n {
            let (pi, ki) = &fac.factors[i];
            let (pj, kj) = &fac.factors[j];
            if ki != kj {
                continue;
            }
            let mut factors: Vec<(MultiPoly, u32)> = fac
                .factors
                .iter()
                .enumerate()
                .filter(|(t, _)| *t != i && *t != j)
                .map(|(_, p)| p.clone())
                .collect();
            factors.push(((pi * pj).normalized(), *ki));
            out.push(Factorization::new(fac.alpha, factors));
        }
        let (p, k) = &fac.factors[i];
        for k_hat in 1..*k {
            if k_hat > k - k_hat {
                continue;
            }
            // identical copies would make the Jacobian singular
            let jitter: Vec<f64> = (0..p.nterms()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nudge = MultiPoly::from_terms(
                p.vars(),
                p.terms()
                    .zip(&jitter)
                    .map(|((e, c), t)| (e.clone(), c * (1.0 + 1e-6 * t))),
            );
            let mut factors: Vec<(MultiPoly, u32)> = fac
                .factors
                .iter()
                .enumerate()
                .filter(|(t, _)| *t != i)
                .map(|(_, p)| p.clone())
                .collect();
            factors.push((p.clone(), k_hat));
            factors.push((nudge.normalized(), k - k_hat));
            out.push(Factorization::new(fac.alpha, factors));
        }
    }
    out
}

/// Brute-force realization of max-codimension selection: every realizable
/// structure of `deg f` is refined from several random starts, and the
/// certified one of highest codimension wins.
pub fn exhaustive_factor(f: &MultiPoly, cfg: &Config) -> Result<NumFactResult> {
    check_input(f, cfg)?;
    if f.is_constant() {
        return Ok(constant_result(f));
    }
    let deg = f.degree();
    if deg.dim() > EXHAUSTIVE_LIMIT {
        return Err(Error::EnumerationGuard {
            dim: deg.dim(),
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let structures = realizable_structures(&deg)?;
    let results: Vec<Option<NumFactResult>> = structures
        .par_iter()
        .map(|s| best_of_starts(f, s, cfg.seed))
        .collect();
    let candidates: Vec<(FactorStructure, f64)> = structures
        .iter()
        .zip(&results)
        .map(|(s, r)| (s.clone(), r.as_ref().map_or(f64::INFINITY, |r| r.backward_error)))
        .collect();
    let pick = select_max_codim_detail(&candidates, cfg.epsilon)
        .map_err(|_| Error::NothingCertifies(cfg.epsilon))?;
    let result = results[pick.index].clone().expect("selected candidate was refined");
    present(f, result)
}

fn best_of_starts(f: &MultiPoly, s: &FactorStructure, seed: u64) -> Option<NumFactResult> {
    let mut best: Option<NumFactResult> = None;
    for start in 0..3u64 {
        let Ok(init) = hint_initial(f, s, seed.wrapping_add(start)) else {
            continue;
        };
        let damped = GnOptions {
            damped: true,
            max_iter: 100,
            ..GnOptions::default()
        };
        let Ok(r) = refine::refine(f, &init, &damped) else {
            continue;
        };
        let r = refine::refine(f, &r.factorization, &GnOptions::default()).unwrap_or(r);
        if best.as_ref().map_or(true, |b| r.backward_error < b.backward_error) {
            best = Some(r);
        }
    }
    best
}

/// Factors scaled to a unit leading coefficient and sorted ascending by
/// (degree, leading monomial), with the scale and certificate recomputed for
/// that representative. The leading term is the lex-first one that is not
/// negligible, so a tiny top coefficient does not blow the others up.
fn present(f: &MultiPoly, mut r: NumFactResult) -> Result<NumFactResult> {
    let mut keyed: Vec<((u32, Vec<u32>, Vec<u32>), MultiPoly, u32)> = Vec::new();
    for (p, k) in &r.factorization.factors {
        let (lead, c) = display_lead(p);
        let q = p.scale(c.inv());
        keyed.push(((q.degree().total(), q.degree().0.clone(), lead), q, *k));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.cmp(&b.2)));
    let fac = Factorization::new(
        C64::new(1.0, 0.0),
        keyed.into_iter().map(|(_, q, k)| (q, k)).collect(),
    );
    let (gamma, dist) = refine::best_scale(f, &fac);
    r.factorization = Factorization::new(gamma, fac.factors);
    r.backward_error = dist;
    r.structure = structure_of(&r.factorization)?;
    Ok(r)
}

fn display_lead(p: &MultiPoly) -> (Vec<u32>, C64) {
    let big = p.terms().map(|(_, c)| c.norm()).fold(0.0, f64::max);
    p.terms()
        .find(|(_, c)| c.norm() >= 1e-3 * big)
        .map(|(e, c)| (e.clone(), *c))
        .unwrap_or((Vec::new(), C64::new(1.0, 0.0)))
}

/// Forward error of `computed` against a known factorization; 1 when the
/// structures differ.
pub fn forward_report(computed: &Factorization, reference: &Factorization) -> f64 {
    match (structure_of(computed), structure_of(reference)) {
        (Ok(a), Ok(b)) if a == b => fact_distance(computed, reference),
        _ => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polycore::sin_distance;

    fn lin(a: f64) -> MultiPoly {
        MultiPoly::from_real_terms(&["x"], &[(&[1], 1.0), (&[0], a)])
    }

    #[test]
    fn exact_product_is_recovered() {
        let f = &lin(1.0) * &lin(2.0);
        let r = numerical_factor(&f, &Config::new(1e-8)).unwrap();
        assert_eq!(r.factorization.factors.len(), 2);
        assert!(r.backward_error <= 1e2 * f64::EPSILON);
        assert!((r.backward_error - certify_distance(&f, &r.factorization)).abs() <= 1e-12 * f.norm());
    }

    #[test]
    fn presentation_is_normalized_and_ordered() {
        let v = ["x", "y"];
        let a = MultiPoly::from_real_terms(&v, &[(&[1, 1], 2.0), (&[0, 0], 1.0)]);
        let b = MultiPoly::from_real_terms(&v, &[(&[0, 1], -3.0), (&[0, 0], 1.0)]);
        let f = &a * &b;
        let r = numerical_factor(&f, &Config::new(1e-8)).unwrap();
        let fs = &r.factorization.factors;
        assert_eq!(fs.len(), 2);
        assert_eq!(fs[0].0.degree().0, vec![0, 1]);
        for (p, _) in fs {
            assert!((p.leading_coeff() - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
        assert!((r.factorization.alpha - C64::new(-6.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn tolerance_must_exceed_roundoff() {
        assert!(numerical_factor(&lin(1.0), &Config::new(1e-17)).is_err());
        let zero = MultiPoly::zero(&["x".to_string()]);
        assert!(numerical_factor(&zero, &Config::new(1e-8)).is_err());
    }

    #[test]
    fn constant_has_no_factors() {
        let five = MultiPoly::from_real_terms(&["x"], &[(&[0], 5.0)]);
        let r = numerical_factor(&five, &Config::new(1e-8)).unwrap();
        assert!(r.factorization.factors.is_empty());
        assert_eq!(r.factorization.alpha, C64::new(5.0, 0.0));
    }

    #[test]
    fn descent_merges_spurious_split() {
        // a near-double root that the tolerance cannot resolve
        let f = &(&lin(-1.0) * &lin(-1.0 - 1e-4)) * &lin(3.0);
        let cfg = Config::new(1e-2);
        let r = numerical_factor(&f, &cfg).unwrap();
        assert!(r.backward_error < cfg.epsilon);
        assert_eq!(r.structure, "(1)^2(1)".parse().unwrap());
    }

    #[test]
    fn forward_report_cases() {
        let a = Factorization::new(C64::new(1.0, 0.0), vec![(lin(1.0), 1), (lin(2.0), 1)]);
        assert_eq!(forward_report(&a, &a), 0.0);
        let b = Factorization::new(C64::new(1.0, 0.0), vec![(&lin(1.0) * &lin(2.0), 1)]);
        assert_eq!(forward_report(&a, &b), 1.0);
    }

    #[test]
    fn exhaustive_agrees_on_small_product() {
        let v = ["x", "y"];
        let a = MultiPoly::from_real_terms(&v, &[(&[1, 0], 1.0), (&[0, 1], 1.0)]);
        let b = MultiPoly::from_real_terms(&v, &[(&[1, 0], 1.0), (&[0, 1], -1.0), (&[0, 0], 1.0)]);
        let f = &a * &b;
        let cfg = Config::new(1e-8);
        let fast = numerical_factor(&f, &cfg).unwrap();
        let slow = exhaustive_factor(&f, &cfg).unwrap();
        assert_eq!(fast.structure, slow.structure);
        for (p, _) in &slow.factorization.factors {
            assert!([&a, &b].iter().any(|q| sin_distance(p, q) < 1e-8));
        }
    }

    #[test]
    fn exhaustive_guard() {
        let f = lin(1.0).pow(30);
        assert!(matches!(
            exhaustive_factor(&f, &Config::new(1e-8)),
            Err(Error::EnumerationGuard { .. })
        ));
    }
}
