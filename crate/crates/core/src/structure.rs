//! Factorization structures: the multisets `{(deg f_i, k_i)}` that label
//! factorization manifolds, together with codimension, the embedding
//! operations, the partial order they generate, and enumeration.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polycore::TupleDegree;

/// Largest `<m>` accepted by [`enumerate_structures`].
pub const ENUMERATION_LIMIT: usize = 400;

/// One factor shape: a tuple degree and its multiplicity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Component {
    pub degree: TupleDegree,
    pub multiplicity: u32,
}

/// Canonically sorted multiset of components.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactorStructure {
    components: Vec<Component>,
}

// degree lex-descending, then multiplicity descending
fn canonical_cmp(a: &Component, b: &Component) -> std::cmp::Ordering {
    b.degree
        .cmp(&a.degree)
        .then(b.multiplicity.cmp(&a.multiplicity))
}

impl PartialOrd for FactorStructure {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FactorStructure {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        for (a, b) in self.components.iter().zip(&other.components) {
            let o = canonical_cmp(a, b);
            if o.is_ne() {
                return o;
            }
        }
        self.components.len().cmp(&other.components.len())
    }
}

impl FactorStructure {
    pub fn new(components: Vec<(TupleDegree, u32)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Precondition("structure needs a component".into()));
        }
        let nvars = components[0].0.nvars();
        let mut comps = Vec::with_capacity(components.len());
        for (degree, multiplicity) in components {
            if degree.is_zero() {
                return Err(Error::Precondition("component degree is zero".into()));
            }
            if multiplicity == 0 {
                return Err(Error::Precondition("component multiplicity is zero".into()));
            }
            if degree.nvars() != nvars {
                return Err(Error::Precondition("components have different arity".into()));
            }
            comps.push(Component {
                degree,
                multiplicity,
            });
        }
        comps.sort_by(canonical_cmp);
        Ok(FactorStructure { components: comps })
    }

    /// The structure of a nonzero constant, which has no factors.
    pub fn constant() -> Self {
        FactorStructure {
            components: Vec::new(),
        }
    }

    fn from_sorted(mut components: Vec<Component>) -> Self {
        components.sort_by(canonical_cmp);
        FactorStructure { components }
    }

    /// The single-component structure of an irreducible polynomial of degree `m`.
    pub fn irreducible(m: &TupleDegree) -> Self {
        FactorStructure::from_sorted(vec![Component {
            degree: m.clone(),
            multiplicity: 1,
        }])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn nvars(&self) -> usize {
        self.components.first().map_or(0, |c| c.degree.nvars())
    }

    /// `sum k_i m_i`.
    pub fn total_degree(&self) -> TupleDegree {
        let mut acc = TupleDegree::zeros(self.nvars());
        for c in &self.components {
            acc = acc.add(&c.degree.scale(c.multiplicity));
        }
        acc
    }

    /// Number of factors counted with multiplicity.
    pub fn factor_count(&self) -> usize {
        self.components.iter().map(|c| c.multiplicity as usize).sum()
    }

    /// `<m> - (sum <m_i> + 1 - r)`.
    pub fn codim(&self) -> i64 {
        let m = self.total_degree().dim() as i64;
        let r = self.components.len() as i64;
        let s: i64 = self.components.iter().map(|c| c.degree.dim() as i64).sum();
        m - (s + 1 - r)
    }

    pub fn is_trivial(&self) -> bool {
        if self.components.len() == 1 && self.components[0].multiplicity == 1 {
            return true;
        }
        self.total_degree().support_len() <= 1
            && self
                .components
                .iter()
                .all(|c| c.multiplicity == 1 && c.degree.total() == 1)
    }

    /// Whether some polynomial over the complex numbers actually has this
    /// structure: an irreducible factor either has total degree one or
    /// involves at least two variables.
    pub fn is_realizable(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.degree.total() == 1 || c.degree.support_len() >= 2)
    }

    /// Replaces components `i` and `j` (equal multiplicity) by their degree sum.
    pub fn combine_degrees(&self, i: usize, j: usize) -> Result<FactorStructure> {
        let n = self.components.len();
        if i == j || i >= n || j >= n {
            return Err(Error::InvalidStructureOp(format!(
                "cannot combine components {i} and {j} of {n}"
            )));
        }
        let (a, b) = (&self.components[i], &self.components[j]);
        if a.multiplicity != b.multiplicity {
            return Err(Error::InvalidStructureOp(format!(
                "multiplicities {} and {} differ",
                a.multiplicity, b.multiplicity
            )));
        }
        let merged = Component {
            degree: a.degree.add(&b.degree),
            multiplicity: a.multiplicity,
        };
        let mut rest: Vec<Component> = self
            .components
            .iter()
            .enumerate()
            .filter(|(t, _)| *t != i && *t != j)
            .map(|(_, c)| c.clone())
            .collect();
        rest.push(merged);
        Ok(FactorStructure::from_sorted(rest))
    }

    /// Splits component `i` of multiplicity `k` into multiplicities `k_hat` and `k - k_hat`.
    pub fn split_multiplicity(&self, i: usize, k_hat: u32) -> Result<FactorStructure> {
        let c = self.components.get(i).ok_or_else(|| {
            Error::InvalidStructureOp(format!("no component {i}"))
        })?;
        if k_hat == 0 || k_hat >= c.multiplicity {
            return Err(Error::InvalidStructureOp(format!(
                "cannot split multiplicity {} at {k_hat}",
                c.multiplicity
            )));
        }
        let mut comps = self.components.clone();
        comps[i].multiplicity = k_hat;
        comps.push(Component {
            degree: c.degree.clone(),
            multiplicity: c.multiplicity - k_hat,
        });
        Ok(FactorStructure::from_sorted(comps))
    }

    /// Every structure reachable by one combine or split, deduplicated.
    pub fn embedding_moves(&self) -> Vec<FactorStructure> {
        let mut out = BTreeSet::new();
        let n = self.components.len();
        for i in 0..n {
            for j in i + 1..n {
                if let Ok(s) = self.combine_degrees(i, j) {
                    out.insert(s);
                }
            }
            for k in 1..self.components[i].multiplicity {
                // k and m - k give the same multiset
                if k <= self.components[i].multiplicity - k {
                    out.insert(self.split_multiplicity(i, k).unwrap());
                }
            }
        }
        out.into_iter().collect()
    }
}

impl fmt::Display for FactorStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.components {
            write!(f, "{}", c.degree)?;
            if c.multiplicity != 1 {
                write!(f, "^{}", c.multiplicity)?;
            }
        }
        Ok(())
    }
}

/// Parses the notation printed by `Display`, e.g. `(1,0)(0,1)^2(1,1)`.
/// Separating `*`, commas and whitespace between components are ignored.
impl FromStr for FactorStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Precondition(format!("bad structure '{s}': {msg}"));
        let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pos = 0;
        let mut comps = Vec::new();
        let read_int = |pos: &mut usize| -> Option<u32> {
            let start = *pos;
            while *pos < chars.len() && chars[*pos].is_ascii_digit() {
                *pos += 1;
            }
            chars[start..*pos].iter().collect::<String>().parse().ok()
        };
        while pos < chars.len() {
            match chars[pos] {
                '*' | ',' => {
                    pos += 1;
                    continue;
                }
                '(' => pos += 1,
                _ => return Err(bad("expected '('")),
            }
            let mut exps = Vec::new();
            loop {
                exps.push(read_int(&mut pos).ok_or_else(|| bad("expected integer"))?);
                match chars.get(pos) {
                    Some(',') => pos += 1,
                    Some(')') => {
                        pos += 1;
                        break;
                    }
                    _ => return Err(bad("expected ',' or ')'")),
                }
            }
            let mut k = 1;
            if chars.get(pos) == Some(&'^') {
                pos += 1;
                k = read_int(&mut pos).ok_or_else(|| bad("expected multiplicity"))?;
            }
            comps.push((TupleDegree::new(exps), k));
        }
        FactorStructure::new(comps)
    }
}

/// Whether `m` is reachable from `n` by a finite sequence of embedding
/// operations (reflexive).
pub fn precedes(n: &FactorStructure, m: &FactorStructure) -> Result<bool> {
    let (dn, dm) = (n.total_degree(), m.total_degree());
    if dn != dm {
        return Err(Error::DegreeMismatch(dn, dm));
    }
    if n == m {
        return Ok(true);
    }
    // every move strictly lowers the component-count-with-multiplicity or the
    // number of components, so the search always terminates
    let mut seen: HashSet<FactorStructure> = HashSet::new();
    let mut queue = VecDeque::from([n.clone()]);
    seen.insert(n.clone());
    while let Some(s) = queue.pop_front() {
        for t in s.embedding_moves() {
            if &t == m {
                return Ok(true);
            }
            if seen.insert(t.clone()) {
                queue.push_back(t);
            }
        }
    }
    Ok(false)
}

/// All structures of total degree `m` with at most `max_components`
/// components, in canonical order.
pub fn enumerate_structures(m: &TupleDegree, max_components: usize) -> Result<Vec<FactorStructure>> {
    if m.dim() > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            dim: m.dim(),
            limit: ENUMERATION_LIMIT,
        });
    }
    if m.is_zero() {
        return Ok(Vec::new());
    }
    let mut parts: Vec<Component> = Vec::new();
    for d in crate::polycore::lex_exponents(m) {
        let d = TupleDegree(d);
        if d.is_zero() {
            continue;
        }
        let kmax = d
            .exps()
            .iter()
            .zip(m.exps())
            .filter(|(di, _)| **di > 0)
            .map(|(di, mi)| mi / di)
            .min()
            .unwrap();
        for k in 1..=kmax {
            parts.push(Component {
                degree: d.clone(),
                multiplicity: k,
            });
        }
    }
    parts.sort_by(canonical_cmp);
    let mut out = Vec::new();
    let mut current = Vec::new();
    fill(&parts, 0, m.clone(), max_components, &mut current, &mut out);
    out.sort();
    Ok(out)
}

fn fill(
    parts: &[Component],
    start: usize,
    rest: TupleDegree,
    budget: usize,
    current: &mut Vec<Component>,
    out: &mut Vec<FactorStructure>,
) {
    if rest.is_zero() {
        out.push(FactorStructure::from_sorted(current.clone()));
        return;
    }
    if budget == 0 {
        return;
    }
    for (idx, p) in parts.iter().enumerate().skip(start) {
        if let Some(left) = rest.checked_sub(&p.degree.scale(p.multiplicity)) {
            current.push(p.clone());
            fill(parts, idx, left, budget - 1, current, out);
            current.pop();
        }
    }
}

/// Structures of degree `m` that some polynomial actually attains.
pub fn realizable_structures(m: &TupleDegree) -> Result<Vec<FactorStructure>> {
    Ok(enumerate_structures(m, usize::MAX)?
        .into_iter()
        .filter(|s| s.is_realizable())
        .collect())
}

/// Outcome of max-codimension selection.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub structure: FactorStructure,
    /// Another candidate within tolerance had the same codimension.
    pub tie: bool,
}

/// Among candidates with distance below `eps`, the one of highest codimension;
/// ties go to the smaller distance, then to canonical order.
pub fn select_max_codim(candidates: &[(FactorStructure, f64)], eps: f64) -> Result<FactorStructure> {
    select_max_codim_detail(candidates, eps).map(|s| s.structure)
}

pub fn select_max_codim_detail(candidates: &[(FactorStructure, f64)], eps: f64) -> Result<Selection> {
    let mut best: Option<usize> = None;
    let mut tie = false;
    for (i, (s, d)) in candidates.iter().enumerate() {
        if !(*d < eps) {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) => {
                let (bs, bd) = &candidates[b];
                let better = s
                    .codim()
                    .cmp(&bs.codim())
                    .then(bd.partial_cmp(d).unwrap_or(std::cmp::Ordering::Equal))
                    .then(bs.cmp(s));
                if s.codim() == bs.codim() && s != bs {
                    tie = true;
                }
                if better.is_gt() {
                    best = Some(i);
                }
            }
        }
    }
    let index = best.ok_or(Error::NoCandidate(eps))?;
    // a tie only matters if it is at the winning codimension
    let top = candidates[index].0.codim();
    let tie = tie
        && candidates
            .iter()
            .filter(|(s, d)| *d < eps && s.codim() == top && s != &candidates[index].0)
            .count()
            > 0;
    Ok(Selection {
        index,
        structure: candidates[index].0.clone(),
        tie,
    })
}

/// Stratification DAG over the realizable structures of one degree: edges
/// are single embedding operations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StratificationDag {
    pub degree: TupleDegree,
    pub nodes: Vec<DagNode>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DagNode {
    pub label: String,
    pub codim: i64,
}

pub fn stratification_dag(m: &TupleDegree) -> Result<StratificationDag> {
    let mut structs = realizable_structures(m)?;
    // highest codimension first, canonical order within a level
    structs.sort_by(|a, b| b.codim().cmp(&a.codim()).then(a.cmp(b)));
    let index: BTreeMap<FactorStructure, usize> = structs
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    let mut edges = Vec::new();
    for (i, s) in structs.iter().enumerate() {
        for t in s.embedding_moves() {
            if let Some(&j) = index.get(&t) {
                edges.push((i, j));
            }
        }
    }
    edges.sort();
    Ok(StratificationDag {
        degree: m.clone(),
        nodes: structs
            .iter()
            .map(|s| DagNode {
                label: s.to_string(),
                codim: s.codim(),
            })
            .collect(),
        edges,
    })
}

impl StratificationDag {
    pub fn to_dot(&self) -> String {
        let mut s = format!("digraph strata_{} {{\n", self.degree.exps().iter().map(|e| e.to_string()).collect::<Vec<_>>().join("_"));
        s.push_str("  rankdir=BT;\n");
        for (i, n) in self.nodes.iter().enumerate() {
            s.push_str(&format!(
                "  n{i} [label=\"{} codim {}\"];\n",
                n.label, n.codim
            ));
        }
        for (a, b) in &self.edges {
            s.push_str(&format!("  n{a} -> n{b};\n"));
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dag serializes")
    }
}
