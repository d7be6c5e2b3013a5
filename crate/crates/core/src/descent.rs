//! Prestacks of finite groupoids on finite spaces: exhaustive checking of
//! the three stack axioms (morphism separation, morphism gluing, object
//! gluing) and deterministic solvers for the two gluing problems.
//!
//! Restriction is strict here: the composition witnesses between iterated
//! restrictions are identities, so they never appear in any equation.

use std::collections::BTreeSet;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum DescentError {
    #[error("the given family is not an open cover: {0}")]
    NotACover(String),
    #[error("not an open of the site: {0:?}")]
    NotAnOpen(BTreeSet<usize>),
    #[error("local morphisms disagree on an overlap: {0}")]
    IncompatibleLocals(String),
    #[error("cocycle condition fails: {0}")]
    CocycleViolation(String),
    #[error("no gluing exists: {0}")]
    NoGluing(String),
    #[error("malformed prestack: {0}")]
    Malformed(String),
}

// ---------------------------------------------------------------------------
// Sites
// ---------------------------------------------------------------------------

/// A finite topological space: a point set `{0..n_points}` and a family of
/// open subsets containing `∅` and the whole set, closed under union and
/// intersection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinSite {
    n_points: usize,
    opens: Vec<BTreeSet<usize>>,
}

impl FinSite {
    /// Build a site, completing the family to contain `∅`, the whole space,
    /// and all pairwise unions and intersections.
    pub fn new(n_points: usize, mut opens: Vec<BTreeSet<usize>>) -> Result<Self, DescentError> {
        let whole: BTreeSet<usize> = (0..n_points).collect();
        opens.push(BTreeSet::new());
        opens.push(whole);
        for s in &opens {
            if let Some(&p) = s.iter().max() {
                if p >= n_points {
                    return Err(DescentError::Malformed(format!(
                        "open contains point {p} outside the space"
                    )));
                }
            }
        }
        opens.sort();
        opens.dedup();
        // close under union and intersection
        loop {
            let mut new: Vec<BTreeSet<usize>> = Vec::new();
            for i in 0..opens.len() {
                for j in (i + 1)..opens.len() {
                    let u: BTreeSet<usize> = opens[i].union(&opens[j]).copied().collect();
                    let v: BTreeSet<usize> =
                        opens[i].intersection(&opens[j]).copied().collect();
                    for s in [u, v] {
                        if !opens.contains(&s) && !new.contains(&s) {
                            new.push(s);
                        }
                    }
                }
            }
            if new.is_empty() {
                break;
            }
            opens.extend(new);
            opens.sort();
            opens.dedup();
        }
        // canonical order: by size then lexicographic
        opens.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));
        Ok(FinSite { n_points, opens })
    }

    /// The discrete topology: every subset is open.
    pub fn discrete(n_points: usize) -> Self {
        let mut opens = Vec::new();
        for mask in 0u32..(1 << n_points) {
            let s: BTreeSet<usize> = (0..n_points).filter(|&p| mask & (1 << p) != 0).collect();
            opens.push(s);
        }
        opens.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));
        FinSite { n_points, opens }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_opens(&self) -> usize {
        self.opens.len()
    }

    pub fn open(&self, idx: usize) -> &BTreeSet<usize> {
        &self.opens[idx]
    }

    pub fn open_index(&self, s: &BTreeSet<usize>) -> Result<usize, DescentError> {
        self.opens
            .iter()
            .position(|o| o == s)
            .ok_or_else(|| DescentError::NotAnOpen(s.clone()))
    }

    pub fn whole_index(&self) -> usize {
        let whole: BTreeSet<usize> = (0..self.n_points).collect();
        self.open_index(&whole).expect("whole set is always open")
    }

    pub fn is_subset(&self, t: usize, s: usize) -> bool {
        self.opens[t].is_subset(&self.opens[s])
    }

    pub fn intersection_index(&self, a: usize, b: usize) -> usize {
        let s: BTreeSet<usize> = self.opens[a].intersection(&self.opens[b]).copied().collect();
        self.open_index(&s).expect("site closed under intersection")
    }

    /// Check that `cover` consists of opens contained in `s` whose union is
    /// exactly the open `s`.
    pub fn check_cover(&self, s: usize, cover: &[usize]) -> Result<(), DescentError> {
        let mut union = BTreeSet::new();
        for &t in cover {
            if t >= self.opens.len() {
                return Err(DescentError::NotACover(format!("open index {t} out of range")));
            }
            if !self.is_subset(t, s) {
                return Err(DescentError::NotACover(format!(
                    "piece {:?} is not contained in {:?}",
                    self.opens[t], self.opens[s]
                )));
            }
            union.extend(self.opens[t].iter().copied());
        }
        if union != self.opens[s] {
            return Err(DescentError::NotACover(format!(
                "union {:?} differs from {:?}",
                union, self.opens[s]
            )));
        }
        Ok(())
    }

    /// All covers of the open `s` (as sorted index lists, no redundant
    /// duplicates). Intended for small test sites.
    pub fn covers_of(&self, s: usize) -> Vec<Vec<usize>> {
        let pieces: Vec<usize> = (0..self.opens.len())
            .filter(|&t| self.is_subset(t, s) && !self.opens[t].is_empty())
            .collect();
        let mut out = Vec::new();
        for mask in 1u64..(1 << pieces.len()) {
            let chosen: Vec<usize> = pieces
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &t)| t)
                .collect();
            if self.check_cover(s, &chosen).is_ok() {
                out.push(chosen);
            }
        }
        if self.opens[s].is_empty() {
            out.push(Vec::new());
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Groupoids
// ---------------------------------------------------------------------------

pub type GObjId = usize;
pub type GMorId = usize;

/// A finite groupoid: objects `0..n_objects`, explicitly listed morphisms
/// with total composition on composable pairs, identities, and inverses.
#[derive(Clone, Debug, Default)]
pub struct FinGroupoid {
    pub n_objects: usize,
    pub mor_src: Vec<GObjId>,
    pub mor_tgt: Vec<GObjId>,
    /// `(b, a) -> b∘a` (apply `a` first); total on composable pairs.
    pub compose: HashMap<(GMorId, GMorId), GMorId>,
    pub id_mor: Vec<GMorId>,
    pub inv: Vec<GMorId>,
}

impl FinGroupoid {
    /// The discrete groupoid on `n` objects (identity morphisms only).
    pub fn discrete(n: usize) -> Self {
        FinGroupoid {
            n_objects: n,
            mor_src: (0..n).collect(),
            mor_tgt: (0..n).collect(),
            compose: (0..n).map(|i| ((i, i), i)).collect(),
            id_mor: (0..n).collect(),
            inv: (0..n).collect(),
        }
    }

    pub fn n_morphisms(&self) -> usize {
        self.mor_src.len()
    }

    pub fn hom(&self, a: GObjId, b: GObjId) -> Vec<GMorId> {
        (0..self.n_morphisms())
            .filter(|&m| self.mor_src[m] == a && self.mor_tgt[m] == b)
            .collect()
    }

    pub fn validate(&self) -> Result<(), DescentError> {
        if self.id_mor.len() != self.n_objects || self.inv.len() != self.n_morphisms() {
            return Err(DescentError::Malformed("table sizes inconsistent".into()));
        }
        for a in 0..self.n_objects {
            let i = self.id_mor[a];
            if self.mor_src[i] != a || self.mor_tgt[i] != a {
                return Err(DescentError::Malformed(format!("id of object {a} mistyped")));
            }
        }
        for m in 0..self.n_morphisms() {
            let i = self.inv[m];
            if self.mor_src[i] != self.mor_tgt[m] || self.mor_tgt[i] != self.mor_src[m] {
                return Err(DescentError::Malformed(format!("inverse of {m} mistyped")));
            }
            if self.compose.get(&(i, m)) != Some(&self.id_mor[self.mor_src[m]])
                || self.compose.get(&(m, i)) != Some(&self.id_mor[self.mor_tgt[m]])
            {
                return Err(DescentError::Malformed(format!("{m} lacks a two-sided inverse")));
            }
        }
        for b in 0..self.n_morphisms() {
            for a in 0..self.n_morphisms() {
                let composable = self.mor_tgt[a] == self.mor_src[b];
                match self.compose.get(&(b, a)) {
                    None if composable => {
                        return Err(DescentError::Malformed(format!(
                            "composite ({b},{a}) missing"
                        )))
                    }
                    Some(&c) if composable => {
                        if self.mor_src[c] != self.mor_src[a] || self.mor_tgt[c] != self.mor_tgt[b]
                        {
                            return Err(DescentError::Malformed(format!(
                                "composite ({b},{a}) mistyped"
                            )));
                        }
                    }
                    Some(_) => {
                        return Err(DescentError::Malformed(format!(
                            "composite ({b},{a}) of non-composable pair"
                        )))
                    }
                    None => {}
                }
            }
        }
        // associativity and unit laws, exhaustively
        for c in 0..self.n_morphisms() {
            for b in 0..self.n_morphisms() {
                for a in 0..self.n_morphisms() {
                    if self.mor_tgt[a] == self.mor_src[b] && self.mor_tgt[b] == self.mor_src[c] {
                        let l = self.compose[&(c, self.compose[&(b, a)])];
                        let r = self.compose[&(self.compose[&(c, b)], a)];
                        if l != r {
                            return Err(DescentError::Malformed("composition not associative".into()));
                        }
                    }
                }
            }
        }
        for m in 0..self.n_morphisms() {
            if self.compose[&(m, self.id_mor[self.mor_src[m]])] != m
                || self.compose[&(self.id_mor[self.mor_tgt[m]], m)] != m
            {
                return Err(DescentError::Malformed(format!("unit law fails at {m}")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Prestacks
// ---------------------------------------------------------------------------

/// A prestack of finite groupoids on a finite site, with strict restriction:
/// one groupoid per open, one functor per inclusion of opens, and
/// `ρ_SS = id`, `ρ_TU ∘ ρ_ST = ρ_SU` on the nose.
#[derive(Clone, Debug)]
pub struct PrestackData {
    pub site: FinSite,
    /// Indexed by the site's open index.
    pub groupoids: Vec<FinGroupoid>,
    /// `(S, T)` with `T ⊆ S`: object part of `ρ_ST`.
    pub restr_obj: HashMap<(usize, usize), Vec<GObjId>>,
    /// `(S, T)` with `T ⊆ S`: morphism part of `ρ_ST`.
    pub restr_mor: HashMap<(usize, usize), Vec<GMorId>>,
}

impl PrestackData {
    pub fn restrict_obj(&self, s: usize, t: usize, a: GObjId) -> GObjId {
        self.restr_obj[&(s, t)][a]
    }

    pub fn restrict_mor(&self, s: usize, t: usize, m: GMorId) -> GMorId {
        self.restr_mor[&(s, t)][m]
    }

    /// Check strictness and functoriality of every restriction, plus the
    /// groupoid axioms of every fibre.
    pub fn validate(&self) -> Result<(), DescentError> {
        let n = self.site.n_opens();
        if self.groupoids.len() != n {
            return Err(DescentError::Malformed("one groupoid per open required".into()));
        }
        for g in &self.groupoids {
            g.validate()?;
        }
        for s in 0..n {
            for t in 0..n {
                if !self.site.is_subset(t, s) {
                    continue;
                }
                let (Some(ro), Some(rm)) =
                    (self.restr_obj.get(&(s, t)), self.restr_mor.get(&(s, t)))
                else {
                    return Err(DescentError::Malformed(format!(
                        "restriction ({s},{t}) missing"
                    )));
                };
                let gs = &self.groupoids[s];
                let gt = &self.groupoids[t];
                if ro.len() != gs.n_objects || rm.len() != gs.n_morphisms() {
                    return Err(DescentError::Malformed(format!(
                        "restriction ({s},{t}) has wrong table sizes"
                    )));
                }
                for m in 0..gs.n_morphisms() {
                    if gt.mor_src[rm[m]] != ro[gs.mor_src[m]]
                        || gt.mor_tgt[rm[m]] != ro[gs.mor_tgt[m]]
                    {
                        return Err(DescentError::Malformed(format!(
                            "restriction ({s},{t}) not a functor at morphism {m}"
                        )));
                    }
                }
                for a in 0..gs.n_objects {
                    if rm[gs.id_mor[a]] != gt.id_mor[ro[a]] {
                        return Err(DescentError::Malformed(format!(
                            "restriction ({s},{t}) does not preserve identities"
                        )));
                    }
                }
                for (&(b, a), &c) in &gs.compose {
                    if gt.compose[&(rm[b], rm[a])] != rm[c] {
                        return Err(DescentError::Malformed(format!(
                            "restriction ({s},{t}) does not preserve composition"
                        )));
                    }
                }
                if s == t {
                    for a in 0..gs.n_objects {
                        if ro[a] != a {
                            return Err(DescentError::Malformed(format!(
                                "ρ at ({s},{s}) is not the identity"
                            )));
                        }
                    }
                    for m in 0..gs.n_morphisms() {
                        if rm[m] != m {
                            return Err(DescentError::Malformed(format!(
                                "ρ at ({s},{s}) is not the identity"
                            )));
                        }
                    }
                }
            }
        }
        // strict composition of restrictions
        for s in 0..n {
            for t in 0..n {
                for u in 0..n {
                    if !(self.site.is_subset(t, s) && self.site.is_subset(u, t)) {
                        continue;
                    }
                    let gs = &self.groupoids[s];
                    for a in 0..gs.n_objects {
                        let two = self.restrict_obj(t, u, self.restrict_obj(s, t, a));
                        if two != self.restrict_obj(s, u, a) {
                            return Err(DescentError::Malformed(format!(
                                "restriction not strictly compatible on objects at ({s},{t},{u})"
                            )));
                        }
                    }
                    for m in 0..gs.n_morphisms() {
                        let two = self.restrict_mor(t, u, self.restrict_mor(s, t, m));
                        if two != self.restrict_mor(s, u, m) {
                            return Err(DescentError::Malformed(format!(
                                "restriction not strictly compatible on morphisms at ({s},{t},{u})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Stack axioms
// ---------------------------------------------------------------------------

/// Result of [`check_stack_axioms`]: per-axiom counts and all violations.
#[derive(Clone, Debug, Default)]
pub struct StackReport {
    pub separation_checked: usize,
    pub morphism_gluing_checked: usize,
    pub object_gluing_checked: usize,
    pub violations: Vec<String>,
}

impl StackReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Exhaustively verify the three stack axioms for the open `s` against the
/// given cover: morphism separation, gluing of compatible morphism families,
/// and gluing of object families with a coherent cocycle.
pub fn check_stack_axioms(
    e: &PrestackData,
    s: usize,
    cover: &[usize],
) -> Result<StackReport, DescentError> {
    e.site.check_cover(s, cover)?;
    let mut report = StackReport::default();
    let gs = &e.groupoids[s];

    // (separation) two parallel morphisms agreeing on every piece coincide.
    for a in 0..gs.n_objects {
        for b in 0..gs.n_objects {
            let homs = gs.hom(a, b);
            for (i, &m1) in homs.iter().enumerate() {
                for &m2 in homs.iter().skip(i + 1) {
                    let same_everywhere = cover
                        .iter()
                        .all(|&t| e.restrict_mor(s, t, m1) == e.restrict_mor(s, t, m2));
                    if same_everywhere {
                        report.violations.push(format!(
                            "separation fails on open {s}: morphisms {m1} and {m2} agree on every piece"
                        ));
                    }
                    report.separation_checked += 1;
                }
            }
        }
    }

    // (morphism gluing) every overlap-compatible family of local morphisms
    // between restrictions of two global objects arises from a global one.
    for a in 0..gs.n_objects {
        for b in 0..gs.n_objects {
            let local_homs: Vec<Vec<GMorId>> = cover
                .iter()
                .map(|&t| {
                    e.groupoids[t].hom(e.restrict_obj(s, t, a), e.restrict_obj(s, t, b))
                })
                .collect();
            for family in cartesian(&local_homs) {
                if !family_compatible(e, cover, &family) {
                    continue;
                }
                report.morphism_gluing_checked += 1;
                let found = gs.hom(a, b).into_iter().any(|m| {
                    cover
                        .iter()
                        .enumerate()
                        .all(|(i, &t)| e.restrict_mor(s, t, m) == family[i])
                });
                if !found {
                    report.violations.push(format!(
                        "morphism gluing fails on open {s}: compatible family {family:?} between objects {a},{b} has no global morphism"
                    ));
                }
            }
        }
    }

    // (object gluing) every object family with a coherent cocycle glues.
    let object_choices: Vec<Vec<GObjId>> = cover
        .iter()
        .map(|&t| (0..e.groupoids[t].n_objects).collect())
        .collect();
    for objects in cartesian(&object_choices) {
        for cocycle in enumerate_cocycles(e, cover, &objects) {
            report.object_gluing_checked += 1;
            if solve_object_gluing(e, s, cover, &objects, &cocycle).is_none() {
                report.violations.push(format!(
                    "object gluing fails on open {s}: family {objects:?} with coherent cocycle has no glued object"
                ));
            }
        }
    }

    Ok(report)
}

fn cartesian<T: Clone>(choices: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    for c in choices {
        let mut next = Vec::new();
        for partial in &out {
            for item in c {
                let mut p = partial.clone();
                p.push(item.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn family_compatible(e: &PrestackData, cover: &[usize], family: &[GMorId]) -> bool {
    for i in 0..cover.len() {
        for j in (i + 1)..cover.len() {
            let tij = e.site.intersection_index(cover[i], cover[j]);
            if e.restrict_mor(cover[i], tij, family[i])
                != e.restrict_mor(cover[j], tij, family[j])
            {
                return false;
            }
        }
    }
    true
}

/// A descent cocycle over a cover: for each pair `i < j` an isomorphism
/// `α_ij: A_i|_{T_ij} → A_j|_{T_ij}`.
type Cocycle = HashMap<(usize, usize), GMorId>;

fn cocycle_entry(
    e: &PrestackData,
    cover: &[usize],
    cocycle: &Cocycle,
    tij: usize,
    i: usize,
    j: usize,
) -> GMorId {
    // α_ij restricted from T_{min,max} to the open tij, oriented i → j.
    let (lo, hi) = (i.min(j), i.max(j));
    let base = e.site.intersection_index(cover[lo], cover[hi]);
    let m = e.restrict_mor(base, tij, cocycle[&(lo, hi)]);
    if i < j {
        m
    } else {
        e.groupoids[tij].inv[m]
    }
}

fn cocycle_coherent(e: &PrestackData, cover: &[usize], cocycle: &Cocycle) -> bool {
    for i in 0..cover.len() {
        for j in 0..cover.len() {
            for k in 0..cover.len() {
                if i == j || j == k || i == k {
                    continue;
                }
                let tij = e.site.intersection_index(cover[i], cover[j]);
                let tijk = e.site.intersection_index(tij, cover[k]);
                if e.site.open(tijk).is_empty() {
                    continue;
                }
                let a_ij = cocycle_entry(e, cover, cocycle, tijk, i, j);
                let a_jk = cocycle_entry(e, cover, cocycle, tijk, j, k);
                let a_ik = cocycle_entry(e, cover, cocycle, tijk, i, k);
                if e.groupoids[tijk].compose[&(a_jk, a_ij)] != a_ik {
                    return false;
                }
            }
        }
    }
    true
}

fn enumerate_cocycles(e: &PrestackData, cover: &[usize], objects: &[GObjId]) -> Vec<Cocycle> {
    let mut pair_choices: Vec<((usize, usize), Vec<GMorId>)> = Vec::new();
    for i in 0..cover.len() {
        for j in (i + 1)..cover.len() {
            let tij = e.site.intersection_index(cover[i], cover[j]);
            let ai = e.restrict_obj(cover[i], tij, objects[i]);
            let aj = e.restrict_obj(cover[j], tij, objects[j]);
            pair_choices.push(((i, j), e.groupoids[tij].hom(ai, aj)));
        }
    }
    let keys: Vec<(usize, usize)> = pair_choices.iter().map(|(k, _)| *k).collect();
    let choice_lists: Vec<Vec<GMorId>> = pair_choices.into_iter().map(|(_, v)| v).collect();
    let mut out = Vec::new();
    for assignment in cartesian(&choice_lists) {
        let cocycle: Cocycle = keys.iter().copied().zip(assignment).collect();
        if cocycle_coherent(e, cover, &cocycle) {
            out.push(cocycle);
        }
    }
    out
}

fn solve_object_gluing(
    e: &PrestackData,
    s: usize,
    cover: &[usize],
    objects: &[GObjId],
    cocycle: &Cocycle,
) -> Option<(GObjId, Vec<GMorId>)> {
    let gs = &e.groupoids[s];
    // Deterministic tie-break: least global object index, then
    // lexicographically least β family (β_i chosen in increasing cover index).
    for a in 0..gs.n_objects {
        let beta_choices: Vec<Vec<GMorId>> = cover
            .iter()
            .enumerate()
            .map(|(i, &t)| e.groupoids[t].hom(e.restrict_obj(s, t, a), objects[i]))
            .collect();
        if beta_choices.iter().any(|c| c.is_empty()) {
            continue;
        }
        if let Some(betas) = backtrack_betas(e, s, cover, cocycle, a, &beta_choices) {
            return Some((a, betas));
        }
    }
    None
}

fn backtrack_betas(
    e: &PrestackData,
    s: usize,
    cover: &[usize],
    cocycle: &Cocycle,
    a: GObjId,
    choices: &[Vec<GMorId>],
) -> Option<Vec<GMorId>> {
    fn rec(
        e: &PrestackData,
        s: usize,
        cover: &[usize],
        cocycle: &Cocycle,
        a: GObjId,
        choices: &[Vec<GMorId>],
        picked: &mut Vec<GMorId>,
    ) -> bool {
        let i = picked.len();
        if i == cover.len() {
            return true;
        }
        'next: for &b in &choices[i] {
            // compatibility with earlier picks: α_ji ∘ β_j|_{T_ij} = β_i|_{T_ij}
            for (j, &bj) in picked.iter().enumerate() {
                let tij = e.site.intersection_index(cover[j], cover[i]);
                if e.site.open(tij).is_empty() {
                    continue;
                }
                let a_ji = cocycle_entry(e, cover, cocycle, tij, j, i);
                let lhs = e.groupoids[tij].compose[&(a_ji, e.restrict_mor(cover[j], tij, bj))];
                // both sides are morphisms A|_{T_ij} → A_i|_{T_ij}
                let _ = s;
                if lhs != e.restrict_mor(cover[i], tij, b) {
                    continue 'next;
                }
            }
            picked.push(b);
            if rec(e, s, cover, cocycle, a, choices, picked) {
                return true;
            }
            picked.pop();
        }
        false
    }
    let mut picked = Vec::new();
    if rec(e, s, cover, cocycle, a, choices, &mut picked) {
        let _ = a;
        Some(picked)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Gluing solvers
// ---------------------------------------------------------------------------

/// Glue local morphisms `locals[i]: A|_{T_i} → B|_{T_i}` into the unique
/// global morphism `A → B` restricting to them. Compatibility on overlaps is
/// checked first; uniqueness is asserted by exhaustive scan.
pub fn glue_morphism(
    e: &PrestackData,
    s: usize,
    cover: &[usize],
    a: GObjId,
    b: GObjId,
    locals: &[GMorId],
) -> Result<GMorId, DescentError> {
    e.site.check_cover(s, cover)?;
    if locals.len() != cover.len() {
        return Err(DescentError::IncompatibleLocals(
            "one local morphism per cover piece required".into(),
        ));
    }
    for (i, (&t, &m)) in cover.iter().zip(locals).enumerate() {
        let gt = &e.groupoids[t];
        if gt.mor_src[m] != e.restrict_obj(s, t, a) || gt.mor_tgt[m] != e.restrict_obj(s, t, b) {
            return Err(DescentError::IncompatibleLocals(format!(
                "local {i} is not a morphism between the restricted objects"
            )));
        }
    }
    if !family_compatible(e, cover, locals) {
        return Err(DescentError::IncompatibleLocals(
            "locals disagree on an overlap".into(),
        ));
    }
    let gs = &e.groupoids[s];
    let mut found: Option<GMorId> = None;
    for m in gs.hom(a, b) {
        let matches = cover
            .iter()
            .enumerate()
            .all(|(i, &t)| e.restrict_mor(s, t, m) == locals[i]);
        if matches {
            if found.is_some() {
                return Err(DescentError::NoGluing(
                    "glue is not unique (separation fails)".into(),
                ));
            }
            found = Some(m);
        }
    }
    found.ok_or_else(|| DescentError::NoGluing("no global morphism restricts to the locals".into()))
}

/// Glue local objects along a coherent cocycle: returns a global object `A`
/// and comparison isomorphisms `β_i: A|_{T_i} → A_i` with
/// `α_ij ∘ β_i|_{T_ij} = β_j|_{T_ij}`. Deterministic: least object index,
/// then lexicographically least `β` family.
pub fn glue_object(
    e: &PrestackData,
    s: usize,
    cover: &[usize],
    objects: &[GObjId],
    cocycle: &Cocycle,
) -> Result<(GObjId, Vec<GMorId>), DescentError> {
    e.site.check_cover(s, cover)?;
    if objects.len() != cover.len() {
        return Err(DescentError::IncompatibleLocals(
            "one local object per cover piece required".into(),
        ));
    }
    for i in 0..cover.len() {
        for j in (i + 1)..cover.len() {
            let tij = e.site.intersection_index(cover[i], cover[j]);
            let Some(&m) = cocycle.get(&(i, j)) else {
                if e.site.open(tij).is_empty() {
                    continue;
                }
                return Err(DescentError::CocycleViolation(format!(
                    "cocycle entry ({i},{j}) missing"
                )));
            };
            let gt = &e.groupoids[tij];
            if gt.mor_src[m] != e.restrict_obj(cover[i], tij, objects[i])
                || gt.mor_tgt[m] != e.restrict_obj(cover[j], tij, objects[j])
            {
                return Err(DescentError::CocycleViolation(format!(
                    "cocycle entry ({i},{j}) mistyped"
                )));
            }
        }
    }
    // fill empty-overlap entries with the (unique) empty identity when absent
    let mut full = cocycle.clone();
    for i in 0..cover.len() {
        for j in (i + 1)..cover.len() {
            let tij = e.site.intersection_index(cover[i], cover[j]);
            full.entry((i, j)).or_insert_with(|| {
                let ai = e.restrict_obj(cover[i], tij, objects[i]);
                e.groupoids[tij].hom(ai, e.restrict_obj(cover[j], tij, objects[j]))
                    .first()
                    .copied()
                    .unwrap_or(e.groupoids[tij].id_mor.get(ai).copied().unwrap_or(0))
            });
        }
    }
    if !cocycle_coherent(e, cover, &full) {
        return Err(DescentError::CocycleViolation(
            "cocycle fails on a triple overlap".into(),
        ));
    }
    solve_object_gluing(e, s, cover, objects, &full)
        .ok_or_else(|| DescentError::NoGluing("no object restricts to the family".into()))
}

/// The canonical comparison between two glues of the same descent datum: the
/// unique isomorphism `γ: A → Ã` with `β̃_i ∘ γ|_{T_i} = β_i`. Returns `None`
/// when no (or no unique) such isomorphism exists.
pub fn glue_comparison(
    e: &PrestackData,
    s: usize,
    cover: &[usize],
    glue_a: &(GObjId, Vec<GMorId>),
    glue_b: &(GObjId, Vec<GMorId>),
) -> Option<GMorId> {
    let gs = &e.groupoids[s];
    let mut found = None;
    for g in gs.hom(glue_a.0, glue_b.0) {
        let ok = cover.iter().enumerate().all(|(i, &t)| {
            let gi = e.restrict_mor(s, t, g);
            e.groupoids[t].compose[&(glue_b.1[i], gi)] == glue_a.1[i]
        });
        if ok {
            if found.is_some() {
                return None;
            }
            found = Some(g);
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Site on three points with opens generated by {0,1} and {1,2}.
    fn wedge_site() -> FinSite {
        FinSite::new(
            3,
            vec![
                [0, 1].into_iter().collect(),
                [1, 2].into_iter().collect(),
            ],
        )
        .unwrap()
    }

    /// The stack of functions `S → {0,1}` whose automorphisms are functions
    /// `S → {±1}` under pointwise multiplication (morphisms exist only
    /// between equal objects). Objects and morphisms per open are indexed by
    /// the graded enumeration of maps from the open's points.
    fn sign_prestack(site: &FinSite) -> PrestackData {
        fn maps(points: &[usize]) -> Vec<HashMap<usize, usize>> {
            let mut out = vec![HashMap::new()];
            for &p in points {
                let mut next = Vec::new();
                for m in &out {
                    for v in 0..2usize {
                        let mut m2 = m.clone();
                        m2.insert(p, v);
                        next.push(m2);
                    }
                }
                out = next;
            }
            out
        }
        let mut groupoids = Vec::new();
        let mut obj_tables: Vec<Vec<HashMap<usize, usize>>> = Vec::new();
        let mut mor_tables: Vec<Vec<(usize, HashMap<usize, usize>)>> = Vec::new();
        for s in 0..site.n_opens() {
            let pts: Vec<usize> = site.open(s).iter().copied().collect();
            let objs = maps(&pts);
            let signs = maps(&pts);
            let mut g = FinGroupoid {
                n_objects: objs.len(),
                ..Default::default()
            };
            let mut mors = Vec::new();
            for (a, _) in objs.iter().enumerate() {
                for sgn in &signs {
                    g.mor_src.push(a);
                    g.mor_tgt.push(a);
                    mors.push((a, sgn.clone()));
                }
            }
            let id_sign: HashMap<usize, usize> = pts.iter().map(|&p| (p, 0)).collect();
            g.id_mor = (0..objs.len())
                .map(|a| mors.iter().position(|(b, s2)| *b == a && *s2 == id_sign).unwrap())
                .collect();
            for (m, (a, sa)) in mors.iter().enumerate() {
                // sign maps are self-inverse pointwise
                let _ = (a, sa);
                g.inv.push(m);
            }
            for (m2, (a2, s2)) in mors.iter().enumerate() {
                for (m1, (a1, s1)) in mors.iter().enumerate() {
                    if a1 != a2 {
                        continue;
                    }
                    let prod: HashMap<usize, usize> =
                        pts.iter().map(|&p| (p, (s1[&p] + s2[&p]) % 2)).collect();
                    let r = mors
                        .iter()
                        .position(|(b, sp)| b == a1 && *sp == prod)
                        .unwrap();
                    g.compose.insert((m2, m1), r);
                }
            }
            groupoids.push(g);
            obj_tables.push(objs);
            mor_tables.push(mors);
        }
        let mut restr_obj = HashMap::new();
        let mut restr_mor = HashMap::new();
        for s in 0..site.n_opens() {
            for t in 0..site.n_opens() {
                if !site.is_subset(t, s) {
                    continue;
                }
                let tpts: Vec<usize> = site.open(t).iter().copied().collect();
                let ro: Vec<usize> = obj_tables[s]
                    .iter()
                    .map(|f| {
                        let cut: HashMap<usize, usize> =
                            tpts.iter().map(|&p| (p, f[&p])).collect();
                        obj_tables[t].iter().position(|g| *g == cut).unwrap()
                    })
                    .collect();
                let rm: Vec<usize> = mor_tables[s]
                    .iter()
                    .map(|(a, sgn)| {
                        let cut: HashMap<usize, usize> =
                            tpts.iter().map(|&p| (p, sgn[&p])).collect();
                        mor_tables[t]
                            .iter()
                            .position(|(b, s2)| *b == ro[*a] && *s2 == cut)
                            .unwrap()
                    })
                    .collect();
                restr_obj.insert((s, t), ro);
                restr_mor.insert((s, t), rm);
            }
        }
        PrestackData {
            site: site.clone(),
            groupoids,
            restr_obj,
            restr_mor,
        }
    }

    #[test]
    fn site_closure_and_discrete() {
        let site = wedge_site();
        // ∅, {1}, {0,1}, {1,2}, {0,1,2}
        assert_eq!(site.n_opens(), 5);
        let d = FinSite::discrete(3);
        assert_eq!(d.n_opens(), 8);
        assert!(d.check_cover(d.whole_index(), &[d.open_index(&[0].into()).unwrap(),
            d.open_index(&[1, 2].into()).unwrap()]).is_ok());
    }

    #[test]
    fn cover_validation_rejects_bad_families() {
        let site = wedge_site();
        let s01 = site.open_index(&[0, 1].into()).unwrap();
        let s12 = site.open_index(&[1, 2].into()).unwrap();
        assert!(matches!(
            site.check_cover(s01, &[s12]),
            Err(DescentError::NotACover(_))
        ));
        let s1 = site.open_index(&[1].into()).unwrap();
        assert!(matches!(
            site.check_cover(s01, &[s1]),
            Err(DescentError::NotACover(_))
        ));
    }

    #[test]
    fn sign_prestack_is_valid_and_singleton_cover_passes() {
        let site = wedge_site();
        let e = sign_prestack(&site);
        e.validate().unwrap();
        let top = site.whole_index();
        let report = check_stack_axioms(&e, top, &[top]).unwrap();
        assert!(report.is_ok(), "{:?}", report.violations);
    }

    #[test]
    fn sign_prestack_passes_all_covers() {
        let site = wedge_site();
        let e = sign_prestack(&site);
        for s in 0..site.n_opens() {
            for cover in site.covers_of(s) {
                let report = check_stack_axioms(&e, s, &cover).unwrap();
                assert!(report.is_ok(), "open {s} cover {cover:?}: {:?}", report.violations);
            }
        }
    }

    #[test]
    fn morphism_glue_round_trip_and_incompatible_locals() {
        let site = wedge_site();
        let e = sign_prestack(&site);
        let top = site.whole_index();
        let t1 = site.open_index(&[0, 1].into()).unwrap();
        let t2 = site.open_index(&[1, 2].into()).unwrap();
        let gs = &e.groupoids[top];
        // pick a non-identity automorphism of object 0 and re-glue its restrictions
        let a = 0;
        let m = gs.hom(a, a).into_iter().find(|&m| m != gs.id_mor[a]).unwrap();
        let locals = vec![e.restrict_mor(top, t1, m), e.restrict_mor(top, t2, m)];
        let glued = glue_morphism(&e, top, &[t1, t2], a, a, &locals).unwrap();
        assert_eq!(glued, m);
        // flip the sign at the overlap point on one side only → incompatible
        let bad_local = e.groupoids[t1]
            .hom(e.restrict_obj(top, t1, a), e.restrict_obj(top, t1, a))
            .into_iter()
            .find(|&x| {
                let ov = site.open_index(&[1].into()).unwrap();
                e.restrict_mor(t1, ov, x) != e.restrict_mor(t2, ov, locals[1])
            })
            .unwrap();
        let err = glue_morphism(&e, top, &[t1, t2], a, a, &[bad_local, locals[1]]);
        assert!(matches!(err, Err(DescentError::IncompatibleLocals(_))));
    }

    #[test]
    fn object_glue_round_trip_up_to_canonical_gamma() {
        let site = wedge_site();
        let e = sign_prestack(&site);
        let top = site.whole_index();
        let t1 = site.open_index(&[0, 1].into()).unwrap();
        let t2 = site.open_index(&[1, 2].into()).unwrap();
        for a in 0..e.groupoids[top].n_objects {
            let objects = vec![e.restrict_obj(top, t1, a), e.restrict_obj(top, t2, a)];
            let tij = site.intersection_index(t1, t2);
            let mut cocycle = HashMap::new();
            cocycle.insert(
                (0usize, 1usize),
                e.groupoids[tij].id_mor[e.restrict_obj(t1, tij, objects[0])],
            );
            let (g, betas) = glue_object(&e, top, &[t1, t2], &objects, &cocycle).unwrap();
            // compare with the tautological glue (a, identity betas)
            let taut = (
                a,
                vec![
                    e.groupoids[t1].id_mor[objects[0]],
                    e.groupoids[t2].id_mor[objects[1]],
                ],
            );
            let gamma = glue_comparison(&e, top, &[t1, t2], &taut, &(g, betas.clone()));
            assert!(gamma.is_some(), "no canonical γ for object {a}");
        }
    }

    #[test]
    fn cocycle_violation_is_reported() {
        let site = wedge_site();
        let e = sign_prestack(&site);
        let top = site.whole_index();
        let t1 = site.open_index(&[0, 1].into()).unwrap();
        let t2 = site.open_index(&[1, 2].into()).unwrap();
        let a = 0;
        let objects = vec![
            e.restrict_obj(top, t1, a),
            e.restrict_obj(top, t2, a),
            a,
        ];
        // three pieces: T1, T2, and the whole set; make the triple fail at
        // the common point 1 by flipping exactly one pairwise sign
        let tij = site.intersection_index(t1, t2);
        let flip = e.groupoids[tij]
            .hom(
                e.restrict_obj(t1, tij, objects[0]),
                e.restrict_obj(t2, tij, objects[1]),
            )
            .into_iter()
            .find(|&m| m != e.groupoids[tij].id_mor[e.restrict_obj(t1, tij, objects[0])])
            .unwrap();
        let mut cocycle = HashMap::new();
        cocycle.insert((0usize, 1usize), flip);
        let t1top = site.intersection_index(t1, top);
        cocycle.insert((0usize, 2usize), e.groupoids[t1top].id_mor[objects[0]]);
        let t2top = site.intersection_index(t2, top);
        cocycle.insert((1usize, 2usize), e.groupoids[t2top].id_mor[objects[1]]);
        let err = glue_object(&e, top, &[t1, t2, top], &objects, &cocycle);
        assert!(matches!(err, Err(DescentError::CocycleViolation(_))), "{err:?}");
    }

    #[test]
    fn missing_global_object_breaks_object_gluing() {
        // Delete the all-ones function from the top groupoid: the family of
        // its restrictions still has a coherent cocycle but no glue.
        let site = wedge_site();
        let mut e = sign_prestack(&site);
        let top = site.whole_index();
        let doomed = e.groupoids[top].n_objects - 1; // last in graded order: all-ones
        // remove the object and all its morphisms from the top fibre
        let g = &mut e.groupoids[top];
        let keep_mor: Vec<usize> = (0..g.n_morphisms())
            .filter(|&m| g.mor_src[m] != doomed)
            .collect();
        let mor_rename: HashMap<usize, usize> =
            keep_mor.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let obj_rename = |a: usize| if a > doomed { a - 1 } else { a };
        let mut g2 = FinGroupoid {
            n_objects: g.n_objects - 1,
            ..Default::default()
        };
        for &m in &keep_mor {
            g2.mor_src.push(obj_rename(g.mor_src[m]));
            g2.mor_tgt.push(obj_rename(g.mor_tgt[m]));
            g2.inv.push(mor_rename[&g.inv[m]]);
        }
        g2.id_mor = (0..g.n_objects)
            .filter(|&a| a != doomed)
            .map(|a| mor_rename[&g.id_mor[a]])
            .collect();
        for (&(b, a), &c) in &g.compose {
            if let (Some(&b2), Some(&a2), Some(&c2)) =
                (mor_rename.get(&b), mor_rename.get(&a), mor_rename.get(&c))
            {
                g2.compose.insert((b2, a2), c2);
            }
        }
        e.groupoids[top] = g2;
        for t in 0..site.n_opens() {
            if !site.is_subset(t, top) {
                continue;
            }
            let ro = e.restr_obj.get_mut(&(top, t)).unwrap();
            ro.remove(doomed);
            let rm = e.restr_mor.get_mut(&(top, t)).unwrap();
            let new_rm: Vec<usize> = keep_mor.iter().map(|&m| rm[m]).collect();
            *rm = new_rm;
        }
        e.validate().unwrap();
        let t1 = site.open_index(&[0, 1].into()).unwrap();
        let t2 = site.open_index(&[1, 2].into()).unwrap();
        let report = check_stack_axioms(&e, top, &[t1, t2]).unwrap();
        assert!(!report.is_ok());
        assert!(report.violations.iter().any(|v| v.contains("object gluing")));
        // and the solver agrees
        let ones_t1 = e.groupoids[t1].n_objects - 1;
        let ones_t2 = e.groupoids[t2].n_objects - 1;
        let tij = site.intersection_index(t1, t2);
        let mut cocycle = HashMap::new();
        cocycle.insert(
            (0usize, 1usize),
            e.groupoids[tij].id_mor[e.restrict_obj(t1, tij, ones_t1)],
        );
        let err = glue_object(&e, top, &[t1, t2], &[ones_t1, ones_t2], &cocycle);
        assert!(matches!(err, Err(DescentError::NoGluing(_))));
    }

    #[test]
    fn refinement_independence_up_to_iso() {
        let site = wedge_site();
        let e = sign_prestack(&site);
        let top = site.whole_index();
        let t1 = site.open_index(&[0, 1].into()).unwrap();
        let t2 = site.open_index(&[1, 2].into()).unwrap();
        let t3 = site.open_index(&[1].into()).unwrap();
        let a = 2;
        let id_cocycle = |cover: &[usize], objects: &[usize]| {
            let mut c = HashMap::new();
            for i in 0..cover.len() {
                for j in (i + 1)..cover.len() {
                    let tij = site.intersection_index(cover[i], cover[j]);
                    c.insert((i, j), e.groupoids[tij].id_mor[e.restrict_obj(cover[i], tij, objects[i])]);
                }
            }
            c
        };
        let cov1 = [t1, t2];
        let obj1 = vec![e.restrict_obj(top, t1, a), e.restrict_obj(top, t2, a)];
        let g1 = glue_object(&e, top, &cov1, &obj1, &id_cocycle(&cov1, &obj1)).unwrap();
        let cov2 = [t1, t2, t3];
        let obj2 = vec![
            e.restrict_obj(top, t1, a),
            e.restrict_obj(top, t2, a),
            e.restrict_obj(top, t3, a),
        ];
        let g2 = glue_object(&e, top, &cov2, &obj2, &id_cocycle(&cov2, &obj2)).unwrap();
        // the two glues agree up to an isomorphism compatible with the β's
        // over the common refinement pieces
        assert!(!e.groupoids[top].hom(g1.0, g2.0).is_empty());
    }
}
