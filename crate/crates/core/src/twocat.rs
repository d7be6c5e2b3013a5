//! Finite fragments of weak 2-categories: coherence-law checking, homotopy
//! categories, equivalence detection, weak 2-functors, and fibre-product
//! verification.
//!
//! A fragment stores explicit finite tables for the three compositions, the
//! associator, and the unitors. 2-cell equality is equality of ids; clients
//! are expected to intern canonical forms (see [`FragmentBuilder`]) so that
//! equal canonical forms share one id.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::collections::HashMap;
use std::hash::Hash;
use thiserror::Error;

pub type ObjId = usize;
pub type OneId = usize;
pub type TwoId = usize;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum TwoCatError {
    #[error("required composite missing from table: {0}")]
    TableIncomplete(String),
    #[error("malformed fragment: {0}")]
    Malformed(String),
}

/// A finite fragment of a weak 2-category, as explicit tables.
#[derive(Clone, Debug, Default)]
pub struct TwoCatFragment {
    n_objects: usize,
    one_src: Vec<ObjId>,
    one_tgt: Vec<ObjId>,
    two_src: Vec<OneId>,
    two_tgt: Vec<OneId>,
    /// `(g, f) -> g∘f` for composable `f: X->Y`, `g: Y->Z`.
    compose1: HashMap<(OneId, OneId), OneId>,
    /// `(z, e) -> z⊙e` (apply `e` first).
    vcomp: HashMap<(TwoId, TwoId), TwoId>,
    /// `(z, e) -> z∗e` where `e` lives over the first leg.
    hcomp: HashMap<(TwoId, TwoId), TwoId>,
    id1: Vec<Option<OneId>>,
    id2: Vec<Option<TwoId>>,
    /// `α_{g,f,e}: (g∘f)∘e ⇒ g∘(f∘e)`.
    assoc: HashMap<(OneId, OneId, OneId), TwoId>,
    /// `β_f: f∘id_X ⇒ f`.
    unitor_b: HashMap<OneId, TwoId>,
    /// `γ_f: id_Y∘f ⇒ f`.
    unitor_c: HashMap<OneId, TwoId>,
    /// Explicit inverses of invertible 2-cells (symmetric).
    inv2: HashMap<TwoId, TwoId>,
}

impl TwoCatFragment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_object(&mut self) -> ObjId {
        self.n_objects += 1;
        self.n_objects - 1
    }

    pub fn add_one(&mut self, src: ObjId, tgt: ObjId) -> OneId {
        self.one_src.push(src);
        self.one_tgt.push(tgt);
        self.id2.push(None);
        self.one_src.len() - 1
    }

    pub fn add_two(&mut self, src: OneId, tgt: OneId) -> TwoId {
        assert_eq!(self.one_src[src], self.one_src[tgt], "2-cell between non-parallel 1-cells");
        assert_eq!(self.one_tgt[src], self.one_tgt[tgt], "2-cell between non-parallel 1-cells");
        self.two_src.push(src);
        self.two_tgt.push(tgt);
        self.two_src.len() - 1
    }

    pub fn n_objects(&self) -> usize {
        self.n_objects
    }
    pub fn n_one(&self) -> usize {
        self.one_src.len()
    }
    pub fn n_two(&self) -> usize {
        self.two_src.len()
    }
    pub fn one_src(&self, f: OneId) -> ObjId {
        self.one_src[f]
    }
    pub fn one_tgt(&self, f: OneId) -> ObjId {
        self.one_tgt[f]
    }
    pub fn two_src(&self, t: TwoId) -> OneId {
        self.two_src[t]
    }
    pub fn two_tgt(&self, t: TwoId) -> OneId {
        self.two_tgt[t]
    }

    pub fn set_id1(&mut self, x: ObjId, f: OneId) {
        if self.id1.len() <= x {
            self.id1.resize(x + 1, None);
        }
        self.id1[x] = Some(f);
    }

    pub fn set_id2(&mut self, f: OneId, t: TwoId) {
        self.id2[f] = Some(t);
    }

    pub fn set_compose(&mut self, g: OneId, f: OneId, gf: OneId) {
        self.compose1.insert((g, f), gf);
    }

    pub fn set_vcomp(&mut self, z: TwoId, e: TwoId, r: TwoId) {
        self.vcomp.insert((z, e), r);
    }

    pub fn set_hcomp(&mut self, z: TwoId, e: TwoId, r: TwoId) {
        self.hcomp.insert((z, e), r);
    }

    pub fn set_assoc(&mut self, g: OneId, f: OneId, e: OneId, cell: TwoId) {
        self.assoc.insert((g, f, e), cell);
    }

    pub fn set_unitor_b(&mut self, f: OneId, cell: TwoId) {
        self.unitor_b.insert(f, cell);
    }

    pub fn set_unitor_c(&mut self, f: OneId, cell: TwoId) {
        self.unitor_c.insert(f, cell);
    }

    pub fn set_inverse(&mut self, a: TwoId, b: TwoId) {
        self.inv2.insert(a, b);
        self.inv2.insert(b, a);
    }

    pub fn id1(&self, x: ObjId) -> Option<OneId> {
        self.id1.get(x).copied().flatten()
    }

    pub fn id2(&self, f: OneId) -> Option<TwoId> {
        self.id2[f]
    }

    pub fn compose1(&self, g: OneId, f: OneId) -> Option<OneId> {
        self.compose1.get(&(g, f)).copied()
    }

    pub fn vcomp(&self, z: TwoId, e: TwoId) -> Option<TwoId> {
        self.vcomp.get(&(z, e)).copied()
    }

    pub fn hcomp(&self, z: TwoId, e: TwoId) -> Option<TwoId> {
        self.hcomp.get(&(z, e)).copied()
    }

    pub fn assoc(&self, g: OneId, f: OneId, e: OneId) -> Option<TwoId> {
        self.assoc.get(&(g, f, e)).copied()
    }

    pub fn unitor_b(&self, f: OneId) -> Option<TwoId> {
        self.unitor_b.get(&f).copied()
    }

    pub fn unitor_c(&self, f: OneId) -> Option<TwoId> {
        self.unitor_c.get(&f).copied()
    }

    pub fn inverse2(&self, t: TwoId) -> Option<TwoId> {
        if Some(t) == self.id2.get(self.two_src[t]).copied().flatten() {
            return Some(t);
        }
        self.inv2.get(&t).copied()
    }

    pub fn is_invertible2(&self, t: TwoId) -> bool {
        self.inverse2(t).is_some()
    }

    fn need_vcomp(&self, z: TwoId, e: TwoId) -> Result<TwoId, TwoCatError> {
        self.vcomp(z, e)
            .ok_or_else(|| TwoCatError::TableIncomplete(format!("vcomp({z},{e})")))
    }

    fn need_hcomp(&self, z: TwoId, e: TwoId) -> Result<TwoId, TwoCatError> {
        self.hcomp(z, e)
            .ok_or_else(|| TwoCatError::TableIncomplete(format!("hcomp({z},{e})")))
    }

    fn need_id2(&self, f: OneId) -> Result<TwoId, TwoCatError> {
        self.id2(f)
            .ok_or_else(|| TwoCatError::TableIncomplete(format!("id2({f})")))
    }

    /// Vertical composite of a chain, applied left to right (`chain[0]` first).
    fn vchain(&self, chain: &[TwoId]) -> Result<TwoId, TwoCatError> {
        let mut acc = chain[0];
        for &t in &chain[1..] {
            acc = self.need_vcomp(t, acc)?;
        }
        Ok(acc)
    }
}

// ---------------------------------------------------------------------------
// Law checking
// ---------------------------------------------------------------------------

/// A single violated law instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LawViolation {
    pub law: &'static str,
    pub detail: String,
}

/// Outcome of [`check_laws`]: per-law check counts and every violation found.
#[derive(Clone, Debug, Default)]
pub struct LawReport {
    pub checked: BTreeMap<&'static str, usize>,
    pub violations: Vec<LawViolation>,
    /// True when sampling was used instead of full enumeration.
    pub sampled: bool,
}

impl LawReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn sample_tuples<T: Clone>(tuples: Vec<T>, budget: usize, rng: &mut ChaCha8Rng, sampled: &mut bool) -> Vec<T> {
    if tuples.len() <= budget {
        tuples
    } else {
        *sampled = true;
        let mut t = tuples;
        t.shuffle(rng);
        t.truncate(budget);
        t
    }
}

/// Verify the coherence laws of a weak 2-category on the fragment:
/// vertical unit/associativity, interchange, pentagon, triangle, and
/// naturality of the associator and unitors.
///
/// When the number of composable tuples of some shape exceeds `budget`, a
/// deterministic seeded sample of size `budget` is checked instead and the
/// report records that sampling happened.
pub fn check_laws(c: &TwoCatFragment, budget: usize, seed: u64) -> Result<LawReport, TwoCatError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LawReport::default();

    // --- vertical unit and inverses -------------------------------------
    let mut n = 0;
    for t in 0..c.n_two() {
        let s = c.two_src(t);
        let tt = c.two_tgt(t);
        let ids = c.need_id2(s)?;
        let idt = c.need_id2(tt)?;
        if c.need_vcomp(t, ids)? != t {
            report.violations.push(LawViolation {
                law: "vertical-unit",
                detail: format!("{t} ⊙ id != {t}"),
            });
        }
        if c.need_vcomp(idt, t)? != t {
            report.violations.push(LawViolation {
                law: "vertical-unit",
                detail: format!("id ⊙ {t} != {t}"),
            });
        }
        if let Some(inv) = c.inv2.get(&t) {
            if c.need_vcomp(*inv, t)? != ids || c.need_vcomp(t, *inv)? != idt {
                report.violations.push(LawViolation {
                    law: "two-cell-inverse",
                    detail: format!("{inv} is not inverse to {t}"),
                });
            }
        }
        n += 1;
    }
    report.checked.insert("vertical-unit", n);

    // --- vertical associativity ------------------------------------------
    let mut triples = Vec::new();
    for (&(z, e), _) in &c.vcomp {
        for (&(z2, e2), _) in &c.vcomp {
            if e2 == z {
                // t3 ⊙ (z ⊙ e) vs (t3=z2 case) ...
                triples.push((z2, z, e));
                let _ = e2;
            }
        }
    }
    triples.sort_unstable();
    triples.dedup();
    let triples = sample_tuples(triples, budget, &mut rng, &mut report.sampled);
    let mut n = 0;
    for (t3, t2, t1) in triples {
        let left = c.need_vcomp(t3, c.need_vcomp(t2, t1)?)?;
        let right = c.need_vcomp(c.need_vcomp(t3, t2)?, t1)?;
        if left != right {
            report.violations.push(LawViolation {
                law: "vertical-assoc",
                detail: format!("({t3}⊙{t2})⊙{t1} != {t3}⊙({t2}⊙{t1})"),
            });
        }
        n += 1;
    }
    report.checked.insert("vertical-assoc", n);

    // --- interchange ------------------------------------------------------
    // Squares: eta: f⇒f', etadot: f'⇒f'' over X->Y; zeta: g⇒g', zetadot over Y->Z.
    let mut squares = Vec::new();
    for (&(zd, z), _) in &c.vcomp {
        for (&(ed, e), _) in &c.vcomp {
            if c.one_tgt(c.two_src(e)) == c.one_src(c.two_src(z)) {
                squares.push((zd, z, ed, e));
            }
        }
    }
    squares.sort_unstable();
    squares.dedup();
    let squares = sample_tuples(squares, budget, &mut rng, &mut report.sampled);
    let mut n = 0;
    for (zd, z, ed, e) in squares {
        // only meaningful when the horizontal composites are in the tables
        let (Some(a), Some(b)) = (c.hcomp(zd, ed), c.hcomp(z, e)) else {
            continue;
        };
        let vz = c.need_vcomp(zd, z)?;
        let ve = c.need_vcomp(ed, e)?;
        let lhs = c.need_hcomp(vz, ve)?;
        let rhs = c.need_vcomp(a, b)?;
        if lhs != rhs {
            report.violations.push(LawViolation {
                law: "interchange",
                detail: format!("({zd}⊙{z})∗({ed}⊙{e}) != ({zd}∗{ed})⊙({z}∗{e})"),
            });
        }
        n += 1;
    }
    report.checked.insert("interchange", n);

    // --- identity horizontal composition ---------------------------------
    let mut n = 0;
    for (&(g, f), &gf) in &c.compose1 {
        let (Some(ig), Some(iff)) = (c.id2(g), c.id2(f)) else {
            continue;
        };
        if let Some(h) = c.hcomp(ig, iff) {
            if Some(h) != c.id2(gf) {
                report.violations.push(LawViolation {
                    law: "horizontal-unit",
                    detail: format!("id_{g} ∗ id_{f} != id_{gf}"),
                });
            }
            n += 1;
        }
    }
    report.checked.insert("horizontal-unit", n);

    // --- pentagon ---------------------------------------------------------
    let mut quads = Vec::new();
    for (&(g, f), _) in &c.compose1 {
        for (&(f2, e), _) in &c.compose1 {
            if f2 != f {
                continue;
            }
            for (&(e2, d), _) in &c.compose1 {
                if e2 == e {
                    quads.push((g, f, e, d));
                }
            }
        }
    }
    quads.sort_unstable();
    quads.dedup();
    let quads = sample_tuples(quads, budget, &mut rng, &mut report.sampled);
    let mut n = 0;
    for (g, f, e, d) in quads {
        let gf = c.compose1(g, f);
        let fe = c.compose1(f, e);
        let ed = c.compose1(e, d);
        let (Some(gf), Some(fe), Some(ed)) = (gf, fe, ed) else {
            continue;
        };
        let (Some(a_gfe), Some(a_gf_ed), Some(a_g_fe_d), Some(a_gfed), Some(a_fed)) = (
            c.assoc(g, f, e),
            c.assoc(gf, e, d),
            c.assoc(g, fe, d),
            c.assoc(g, f, ed),
            c.assoc(f, e, d),
        ) else {
            return Err(TwoCatError::TableIncomplete(format!(
                "associator entries for pentagon ({g},{f},{e},{d})"
            )));
        };
        let idd = c.need_id2(d)?;
        let idg = c.need_id2(g)?;
        let top = c.vchain(&[
            c.need_hcomp(a_gfe, idd)?,
            a_g_fe_d,
            c.need_hcomp(idg, a_fed)?,
        ])?;
        let bottom = c.vchain(&[a_gf_ed, a_gfed])?;
        if top != bottom {
            report.violations.push(LawViolation {
                law: "pentagon",
                detail: format!("pentagon fails at ({g},{f},{e},{d})"),
            });
        }
        n += 1;
    }
    report.checked.insert("pentagon", n);

    // --- triangle ---------------------------------------------------------
    let mut pairs = Vec::new();
    for (&(g, f), _) in &c.compose1 {
        let y = c.one_tgt(f);
        if let Some(idy) = c.id1(y) {
            if c.compose1(g, idy).is_some() {
                pairs.push((g, f, idy));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let pairs = sample_tuples(pairs, budget, &mut rng, &mut report.sampled);
    let mut n = 0;
    for (g, f, idy) in pairs {
        let (Some(a), Some(bg), Some(cf)) =
            (c.assoc(g, idy, f), c.unitor_b(g), c.unitor_c(f))
        else {
            return Err(TwoCatError::TableIncomplete(format!(
                "unitor/associator entries for triangle ({g},{f})"
            )));
        };
        let idg = c.need_id2(g)?;
        let idf = c.need_id2(f)?;
        let lhs = c.vchain(&[a, c.need_hcomp(idg, cf)?])?;
        let rhs = c.need_hcomp(bg, idf)?;
        if lhs != rhs {
            report.violations.push(LawViolation {
                law: "triangle",
                detail: format!("triangle fails at ({g},{f})"),
            });
        }
        n += 1;
    }
    report.checked.insert("triangle", n);

    // --- naturality of the associator -------------------------------------
    let mut nat = Vec::new();
    for z in 0..c.n_two() {
        for e in 0..c.n_two() {
            if c.one_tgt(c.two_src(e)) != c.one_src(c.two_src(z)) {
                continue;
            }
            for x in 0..c.n_two() {
                if c.one_tgt(c.two_src(x)) == c.one_src(c.two_src(e)) {
                    nat.push((z, e, x));
                }
            }
        }
    }
    let nat = sample_tuples(nat, budget, &mut rng, &mut report.sampled);
    let mut n = 0;
    for (z, e, x) in nat {
        // z: g⇒g', e: f⇒f', x: d⇒d'
        let (g, gp) = (c.two_src(z), c.two_tgt(z));
        let (f, fp) = (c.two_src(e), c.two_tgt(e));
        let (d, dp) = (c.two_src(x), c.two_tgt(x));
        let (Some(a1), Some(a2)) = (c.assoc(g, f, d), c.assoc(gp, fp, dp)) else {
            continue;
        };
        let (Some(ze), Some(ex)) = (c.hcomp(z, e), c.hcomp(e, x)) else {
            continue;
        };
        let (Some(l), Some(r)) = (c.hcomp(ze, x), c.hcomp(z, ex)) else {
            continue;
        };
        let lhs = c.need_vcomp(a2, l)?;
        let rhs = c.need_vcomp(r, a1)?;
        if lhs != rhs {
            report.violations.push(LawViolation {
                law: "assoc-naturality",
                detail: format!("naturality of associator fails at 2-cells ({z},{e},{x})"),
            });
        }
        n += 1;
    }
    report.checked.insert("assoc-naturality", n);

    // --- naturality of the unitors ----------------------------------------
    let mut n = 0;
    for t in 0..c.n_two() {
        let f = c.two_src(t);
        let fp = c.two_tgt(t);
        // β: f∘id_X ⇒ f
        if let (Some(bf), Some(bfp)) = (c.unitor_b(f), c.unitor_b(fp)) {
            if let Some(idx) = c.id1(c.one_src(f)) {
                if let Some(id_idx) = c.id2(idx) {
                    if let Some(w) = c.hcomp(t, id_idx) {
                        let lhs = c.need_vcomp(t, bf)?;
                        let rhs = c.need_vcomp(bfp, w)?;
                        if lhs != rhs {
                            report.violations.push(LawViolation {
                                law: "unitor-naturality",
                                detail: format!("β not natural at 2-cell {t}"),
                            });
                        }
                        n += 1;
                    }
                }
            }
        }
        if let (Some(cf), Some(cfp)) = (c.unitor_c(f), c.unitor_c(fp)) {
            if let Some(idy) = c.id1(c.one_tgt(f)) {
                if let Some(id_idy) = c.id2(idy) {
                    if let Some(w) = c.hcomp(id_idy, t) {
                        let lhs = c.need_vcomp(t, cf)?;
                        let rhs = c.need_vcomp(cfp, w)?;
                        if lhs != rhs {
                            report.violations.push(LawViolation {
                                law: "unitor-naturality",
                                detail: format!("γ not natural at 2-cell {t}"),
                            });
                        }
                        n += 1;
                    }
                }
            }
        }
    }
    report.checked.insert("unitor-naturality", n);

    Ok(report)
}

// ---------------------------------------------------------------------------
// Homotopy category
// ---------------------------------------------------------------------------

/// The quotient category: objects unchanged, morphisms are 2-isomorphism
/// classes of 1-morphisms. Composition is partial (defined where the
/// fragment's tables allow).
#[derive(Clone, Debug)]
pub struct HoCategory {
    pub n_objects: usize,
    /// Sorted member list per class.
    pub classes: Vec<Vec<OneId>>,
    pub class_of: Vec<usize>,
    pub compose: HashMap<(usize, usize), usize>,
    pub id_class: Vec<Option<usize>>,
}

/// Quotient the fragment by invertible 2-cells.
///
/// Fails with `Malformed` when composition does not descend to classes
/// (which indicates the input is not actually a 2-category fragment).
pub fn homotopy_category(c: &TwoCatFragment) -> Result<HoCategory, TwoCatError> {
    // Union-find over 1-cells joined by invertible 2-cells.
    let mut parent: Vec<usize> = (0..c.n_one()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    for t in 0..c.n_two() {
        if c.is_invertible2(t) {
            let a = find(&mut parent, c.two_src(t));
            let b = find(&mut parent, c.two_tgt(t));
            parent[a] = b;
        }
    }
    let mut reps: Vec<usize> = Vec::new();
    let mut class_of = vec![0usize; c.n_one()];
    for f in 0..c.n_one() {
        let r = find(&mut parent, f);
        let idx = match reps.iter().position(|&x| x == r) {
            Some(i) => i,
            None => {
                reps.push(r);
                reps.len() - 1
            }
        };
        class_of[f] = idx;
    }
    let mut classes: Vec<Vec<OneId>> = vec![Vec::new(); reps.len()];
    for f in 0..c.n_one() {
        classes[class_of[f]].push(f);
    }
    for cl in &mut classes {
        cl.sort_unstable();
    }
    // Composition on classes, with a well-definedness check.
    let mut compose: HashMap<(usize, usize), usize> = HashMap::new();
    for (&(g, f), &gf) in &c.compose1 {
        let key = (class_of[g], class_of[f]);
        let val = class_of[gf];
        if let Some(&prev) = compose.get(&key) {
            if prev != val {
                return Err(TwoCatError::Malformed(format!(
                    "composition not well-defined on 2-isomorphism classes at ({g},{f})"
                )));
            }
        } else {
            compose.insert(key, val);
        }
    }
    let id_class = (0..c.n_objects)
        .map(|x| c.id1(x).map(|f| class_of[f]))
        .collect();
    Ok(HoCategory {
        n_objects: c.n_objects,
        classes,
        class_of,
        compose,
        id_class,
    })
}

impl HoCategory {
    /// Is the class invertible (has a two-sided inverse under class
    /// composition)?
    pub fn is_iso(&self, class: usize, src: ObjId, tgt: ObjId) -> bool {
        let (Some(id_s), Some(id_t)) = (self.id_class[src], self.id_class[tgt]) else {
            return false;
        };
        (0..self.classes.len()).any(|g| {
            self.compose.get(&(g, class)) == Some(&id_s)
                && self.compose.get(&(class, g)) == Some(&id_t)
        })
    }
}

// ---------------------------------------------------------------------------
// Equivalences
// ---------------------------------------------------------------------------

/// Witness that `f` is an equivalence: a quasi-inverse `g` and invertible
/// 2-cells `η: g∘f ⇒ id` and `ζ: f∘g ⇒ id`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivalenceWitness {
    pub quasi_inverse: OneId,
    pub eta: TwoId,
    pub zeta: TwoId,
}

/// Search for a quasi-inverse of `f` among the fragment's 1-cells. Returns
/// the first witness in canonical (index) order, or `None`.
pub fn is_equivalence(c: &TwoCatFragment, f: OneId) -> Option<EquivalenceWitness> {
    let x = c.one_src(f);
    let y = c.one_tgt(f);
    let idx = c.id1(x)?;
    let idy = c.id1(y)?;
    for g in 0..c.n_one() {
        if c.one_src(g) != y || c.one_tgt(g) != x {
            continue;
        }
        let (Some(gf), Some(fg)) = (c.compose1(g, f), c.compose1(f, g)) else {
            continue;
        };
        for eta in 0..c.n_two() {
            if c.two_src(eta) != gf || c.two_tgt(eta) != idx || !c.is_invertible2(eta) {
                continue;
            }
            for zeta in 0..c.n_two() {
                if c.two_src(zeta) != fg || c.two_tgt(zeta) != idy || !c.is_invertible2(zeta) {
                    continue;
                }
                return Some(EquivalenceWitness {
                    quasi_inverse: g,
                    eta,
                    zeta,
                });
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Weak 2-functors
// ---------------------------------------------------------------------------

/// Data of a weak 2-functor between two fragments.
#[derive(Clone, Debug)]
pub struct WeakTwoFunctorData {
    pub obj_map: Vec<ObjId>,
    pub one_map: Vec<OneId>,
    pub two_map: Vec<TwoId>,
    /// Comparison cells `F_{g,f}: F(g)∘F(f) ⇒ F(g∘f)` (in the target).
    pub comp_cell: HashMap<(OneId, OneId), TwoId>,
    /// Unit cells `F_X: F(id_X) ⇒ id_{F(X)}`.
    pub unit_cell: HashMap<ObjId, TwoId>,
}

/// Check preservation of structure plus the three coherence diagrams of a
/// weak 2-functor, on every composite available in the source fragment.
pub fn check_weak_2functor(
    src: &TwoCatFragment,
    tgt: &TwoCatFragment,
    fdata: &WeakTwoFunctorData,
) -> Result<LawReport, TwoCatError> {
    let mut report = LawReport::default();
    let fo = |x: ObjId| fdata.obj_map[x];
    let f1 = |f: OneId| fdata.one_map[f];
    let f2 = |t: TwoId| fdata.two_map[t];

    // Typing.
    let mut n = 0;
    for f in 0..src.n_one() {
        if tgt.one_src(f1(f)) != fo(src.one_src(f)) || tgt.one_tgt(f1(f)) != fo(src.one_tgt(f)) {
            report.violations.push(LawViolation {
                law: "functor-typing",
                detail: format!("image of 1-cell {f} has wrong endpoints"),
            });
        }
        n += 1;
    }
    for t in 0..src.n_two() {
        if tgt.two_src(f2(t)) != f1(src.two_src(t)) || tgt.two_tgt(f2(t)) != f1(src.two_tgt(t)) {
            report.violations.push(LawViolation {
                law: "functor-typing",
                detail: format!("image of 2-cell {t} has wrong endpoints"),
            });
        }
        n += 1;
    }
    report.checked.insert("functor-typing", n);

    // Strict preservation: vertical composition and 2-cell identities.
    let mut n = 0;
    for (&(z, e), &r) in &src.vcomp {
        let lhs = tgt.need_vcomp(f2(z), f2(e))?;
        if lhs != f2(r) {
            report.violations.push(LawViolation {
                law: "functor-vcomp",
                detail: format!("F({z}⊙{e}) != F({z})⊙F({e})"),
            });
        }
        n += 1;
    }
    for f in 0..src.n_one() {
        if let Some(idf) = src.id2(f) {
            if tgt.id2(f1(f)) != Some(f2(idf)) {
                report.violations.push(LawViolation {
                    law: "functor-vcomp",
                    detail: format!("F(id_{f}) != id_F({f})"),
                });
            }
            n += 1;
        }
    }
    report.checked.insert("functor-vcomp", n);

    // Coherence hexagon for composable triples.
    let mut n = 0;
    for (&(g, f), &gf) in &src.compose1 {
        for (&(f2s, e), &fe) in &src.compose1 {
            if f2s != f {
                continue;
            }
            let (Some(&cgf), Some(&cfe), Some(&cgf_e), Some(&cg_fe)) = (
                fdata.comp_cell.get(&(g, f)),
                fdata.comp_cell.get(&(f, e)),
                fdata.comp_cell.get(&(gf, e)),
                fdata.comp_cell.get(&(g, fe)),
            ) else {
                return Err(TwoCatError::TableIncomplete(format!(
                    "comparison cells for triple ({g},{f},{e})"
                )));
            };
            let Some(a_src) = src.assoc(g, f, e) else {
                continue;
            };
            let Some(a_tgt) = tgt.assoc(f1(g), f1(f), f1(e)) else {
                continue;
            };
            let ide = tgt.need_id2(f1(e))?;
            let idg = tgt.need_id2(f1(g))?;
            let top = tgt.vchain(&[tgt.need_hcomp(cgf, ide)?, cgf_e, f2(a_src)])?;
            let bottom = tgt.vchain(&[a_tgt, tgt.need_hcomp(idg, cfe)?, cg_fe])?;
            if top != bottom {
                report.violations.push(LawViolation {
                    law: "functor-hexagon",
                    detail: format!("coherence hexagon fails at ({g},{f},{e})"),
                });
            }
            n += 1;
        }
    }
    report.checked.insert("functor-hexagon", n);

    // Unit squares.
    let mut n = 0;
    for f in 0..src.n_one() {
        let x = src.one_src(f);
        let y = src.one_tgt(f);
        if let (Some(idx), Some(&fx)) = (src.id1(x), fdata.unit_cell.get(&x)) {
            if let (Some(&cf_id), Some(bsrc)) =
                (fdata.comp_cell.get(&(f, idx)), src.unitor_b(f))
            {
                let Some(btgt) = tgt.unitor_b(f1(f)) else {
                    continue;
                };
                let idff = tgt.need_id2(f1(f))?;
                let lhs = tgt.vchain(&[cf_id, f2(bsrc)])?;
                let rhs = tgt.vchain(&[tgt.need_hcomp(idff, fx)?, btgt])?;
                if lhs != rhs {
                    report.violations.push(LawViolation {
                        law: "functor-unit",
                        detail: format!("β unit square fails at 1-cell {f}"),
                    });
                }
                n += 1;
            }
        }
        if let (Some(idy), Some(&fy)) = (src.id1(y), fdata.unit_cell.get(&y)) {
            if let (Some(&cid_f), Some(csrc)) =
                (fdata.comp_cell.get(&(idy, f)), src.unitor_c(f))
            {
                let Some(ctgt) = tgt.unitor_c(f1(f)) else {
                    continue;
                };
                let idff = tgt.need_id2(f1(f))?;
                let lhs = tgt.vchain(&[cid_f, f2(csrc)])?;
                let rhs = tgt.vchain(&[tgt.need_hcomp(fy, idff)?, ctgt])?;
                if lhs != rhs {
                    report.violations.push(LawViolation {
                        law: "functor-unit",
                        detail: format!("γ unit square fails at 1-cell {f}"),
                    });
                }
                n += 1;
            }
        }
    }
    report.checked.insert("functor-unit", n);

    // Naturality of the comparison cells.
    let mut n = 0;
    for (&(z, e), _) in &src.hcomp {
        let g = src.two_src(z);
        let gp = src.two_tgt(z);
        let f = src.two_src(e);
        let fp = src.two_tgt(e);
        let (Some(&c1), Some(&c2)) = (fdata.comp_cell.get(&(g, f)), fdata.comp_cell.get(&(gp, fp)))
        else {
            continue;
        };
        let Some(ze) = src.hcomp(z, e) else { continue };
        let himg = tgt.need_hcomp(f2(z), f2(e))?;
        let lhs = tgt.need_vcomp(c2, himg)?;
        let rhs = tgt.need_vcomp(f2(ze), c1)?;
        if lhs != rhs {
            report.violations.push(LawViolation {
                law: "functor-naturality",
                detail: format!("comparison cell not natural at 2-cells ({z},{e})"),
            });
        }
        n += 1;
    }
    report.checked.insert("functor-naturality", n);

    Ok(report)
}

// ---------------------------------------------------------------------------
// Fibre products
// ---------------------------------------------------------------------------

/// A candidate fibre product `W = X ×_Z Y` inside a fragment: projections
/// and the invertible comparison cell `η: g∘πX ⇒ h∘πY`.
#[derive(Clone, Debug)]
pub struct FibreProductData {
    pub g: OneId,
    pub h: OneId,
    pub w: ObjId,
    pub pi_x: OneId,
    pub pi_y: OneId,
    pub eta: TwoId,
}

/// A probe cone over the same cospan.
#[derive(Clone, Debug)]
pub struct Cone {
    pub w: ObjId,
    pub pi_x: OneId,
    pub pi_y: OneId,
    pub eta: TwoId,
}

/// Report of the universal-property check.
#[derive(Clone, Debug)]
pub struct FibreProductReport {
    pub probes_checked: usize,
    pub ok: bool,
    pub failures: Vec<String>,
}

/// Verify the universal property of a fibre product against the supplied
/// probes: existence of a mediating `(b, ζX, ζY)` making the weak coherence
/// square commute, and uniqueness of each witness up to a unique invertible
/// `θ`. Only the supplied probes are examined; the report records how many.
pub fn check_fibre_product(
    c: &TwoCatFragment,
    data: &FibreProductData,
    probes: &[Cone],
) -> Result<FibreProductReport, TwoCatError> {
    let mut failures = Vec::new();
    for (pi, probe) in probes.iter().enumerate() {
        let mut witnesses: Vec<(OneId, TwoId, TwoId)> = Vec::new();
        for b in 0..c.n_one() {
            if c.one_src(b) != probe.w || c.one_tgt(b) != data.w {
                continue;
            }
            let (Some(pxb), Some(pyb)) = (c.compose1(data.pi_x, b), c.compose1(data.pi_y, b))
            else {
                continue;
            };
            for zx in 0..c.n_two() {
                if c.two_src(zx) != pxb || c.two_tgt(zx) != probe.pi_x || !c.is_invertible2(zx) {
                    continue;
                }
                for zy in 0..c.n_two() {
                    if c.two_src(zy) != pyb || c.two_tgt(zy) != probe.pi_y || !c.is_invertible2(zy)
                    {
                        continue;
                    }
                    if mediating_square_commutes(c, data, probe, b, zx, zy)? {
                        witnesses.push((b, zx, zy));
                    }
                }
            }
        }
        if witnesses.is_empty() {
            failures.push(format!("probe {pi}: no mediating morphism found"));
            continue;
        }
        // Uniqueness up to unique θ, among the found witnesses.
        for (i, &(b, zx, zy)) in witnesses.iter().enumerate() {
            for &(bt, zxt, zyt) in witnesses.iter().skip(i) {
                let mut thetas = 0;
                for theta in 0..c.n_two() {
                    if c.two_src(theta) != bt || c.two_tgt(theta) != b || !c.is_invertible2(theta) {
                        continue;
                    }
                    let (Some(id_px), Some(id_py)) = (c.id2(data.pi_x), c.id2(data.pi_y)) else {
                        continue;
                    };
                    let (Some(wx), Some(wy)) = (c.hcomp(id_px, theta), c.hcomp(id_py, theta))
                    else {
                        continue;
                    };
                    let okx = c.need_vcomp(zx, wx)? == zxt;
                    let oky = c.need_vcomp(zy, wy)? == zyt;
                    if okx && oky {
                        thetas += 1;
                    }
                }
                if thetas != 1 {
                    failures.push(format!(
                        "probe {pi}: witnesses ({b},{zx},{zy}) and ({bt},{zxt},{zyt}) related by {thetas} θ cells (want exactly 1)"
                    ));
                }
            }
        }
    }
    Ok(FibreProductReport {
        probes_checked: probes.len(),
        ok: failures.is_empty(),
        failures,
    })
}

fn mediating_square_commutes(
    c: &TwoCatFragment,
    data: &FibreProductData,
    probe: &Cone,
    b: OneId,
    zx: TwoId,
    zy: TwoId,
) -> Result<bool, TwoCatError> {
    // (η' : g∘πX' ⇒ h∘πY') vs transport of η along b.
    let (Some(a_g), Some(a_h)) = (
        c.assoc(data.g, data.pi_x, b),
        c.assoc(data.h, data.pi_y, b),
    ) else {
        return Ok(false);
    };
    let (Some(id_g), Some(id_h), Some(id_b)) = (c.id2(data.g), c.id2(data.h), c.id2(b)) else {
        return Ok(false);
    };
    let (Some(eta_b), Some(gzx), Some(hzy)) = (
        c.hcomp(data.eta, id_b),
        c.hcomp(id_g, zx),
        c.hcomp(id_h, zy),
    ) else {
        return Ok(false);
    };
    // Left-bottom path: (g∘πX)∘b ⇒ g∘(πX∘b) ⇒ g∘πX' ⇒ h∘πY'.
    let left = c.vchain(&[a_g, gzx, probe.eta])?;
    // Top-right path: (g∘πX)∘b ⇒ (h∘πY)∘b ⇒ h∘(πY∘b) ⇒ h∘πY'.
    let right = c.vchain(&[eta_b, a_h, hzy])?;
    Ok(left == right)
}

// ---------------------------------------------------------------------------
// Builder with interning
// ---------------------------------------------------------------------------

/// Helper for clients that generate fragments from domain data: cells are
/// interned by client-supplied canonical keys, so structurally equal
/// canonical forms share one id (which is what makes id-equality meaningful).
#[derive(Clone, Debug)]
pub struct FragmentBuilder<K1, K2>
where
    K1: Hash + Eq + Clone,
    K2: Hash + Eq + Clone,
{
    pub fragment: TwoCatFragment,
    one_keys: HashMap<K1, OneId>,
    two_keys: HashMap<K2, TwoId>,
}

impl<K1, K2> FragmentBuilder<K1, K2>
where
    K1: Hash + Eq + Clone,
    K2: Hash + Eq + Clone,
{
    pub fn new() -> Self {
        FragmentBuilder {
            fragment: TwoCatFragment::new(),
            one_keys: HashMap::new(),
            two_keys: HashMap::new(),
        }
    }

    pub fn intern_one(&mut self, key: K1, src: ObjId, tgt: ObjId) -> (OneId, bool) {
        if let Some(&id) = self.one_keys.get(&key) {
            return (id, false);
        }
        let id = self.fragment.add_one(src, tgt);
        self.one_keys.insert(key, id);
        (id, true)
    }

    pub fn lookup_one(&self, key: &K1) -> Option<OneId> {
        self.one_keys.get(key).copied()
    }

    pub fn intern_two(&mut self, key: K2, src: OneId, tgt: OneId) -> (TwoId, bool) {
        if let Some(&id) = self.two_keys.get(&key) {
            return (id, false);
        }
        let id = self.fragment.add_two(src, tgt);
        self.two_keys.insert(key, id);
        (id, true)
    }

    pub fn lookup_two(&self, key: &K2) -> Option<TwoId> {
        self.two_keys.get(key).copied()
    }
}

impl<K1, K2> Default for FragmentBuilder<K1, K2>
where
    K1: Hash + Eq + Clone,
    K2: Hash + Eq + Clone,
{
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One object, 1-cells {id, f} with f∘f = f, only identity 2-cells:
    /// a strict fragment.
    fn idempotent_fragment() -> TwoCatFragment {
        let mut c = TwoCatFragment::new();
        let x = c.add_object();
        let id = c.add_one(x, x);
        let f = c.add_one(x, x);
        c.set_id1(x, id);
        let t_id = c.add_two(id, id);
        let t_f = c.add_two(f, f);
        c.set_id2(id, t_id);
        c.set_id2(f, t_f);
        for (g, h, gh) in [(id, id, id), (id, f, f), (f, id, f), (f, f, f)] {
            c.set_compose(g, h, gh);
        }
        for t in [t_id, t_f] {
            c.set_vcomp(t, t, t);
        }
        for (a, b) in [(t_id, t_id), (t_id, t_f), (t_f, t_id), (t_f, t_f)] {
            let r = if a == t_id && b == t_id { t_id } else { t_f };
            c.set_hcomp(a, b, r);
        }
        for g in [id, f] {
            for h in [id, f] {
                for e in [id, f] {
                    let comp = if g == id && h == id && e == id { t_id } else { t_f };
                    c.set_assoc(g, h, e, comp);
                }
            }
        }
        for g in [id, f] {
            let t = if g == id { t_id } else { t_f };
            c.set_unitor_b(g, t);
            c.set_unitor_c(g, t);
        }
        c
    }

    #[test]
    fn strict_fragment_passes_all_laws() {
        let c = idempotent_fragment();
        let report = check_laws(&c, 10_000, 1).unwrap();
        assert!(report.is_ok(), "violations: {:?}", report.violations);
        assert!(!report.sampled);
        assert!(report.checked["pentagon"] > 0);
        assert!(report.checked["triangle"] > 0);
    }

    /// Add a non-identity self-inverse 2-cell u: f ⇒ f and use it as the
    /// associator α_{f,f,f}: the pentagon must fail.
    #[test]
    fn corrupted_associator_is_caught() {
        let mut c = idempotent_fragment();
        let f = 1; // from construction order
        let t_f = 1;
        let u = c.add_two(f, f);
        let t_id = 0;
        c.set_vcomp(u, u, t_f);
        c.set_vcomp(u, t_f, u);
        c.set_vcomp(t_f, u, u);
        c.set_inverse(u, u);
        // interchange-consistent horizontal composites with u
        c.set_hcomp(u, t_f, u);
        c.set_hcomp(t_f, u, u);
        c.set_hcomp(u, u, t_f);
        c.set_hcomp(u, t_id, u);
        c.set_hcomp(t_id, u, u);
        c.set_assoc(f, f, f, u);
        let report = check_laws(&c, 10_000, 1).unwrap();
        assert!(report.violations.iter().any(|v| v.law == "pentagon"));
    }

    #[test]
    fn homotopy_category_quotients_by_2_isos() {
        // Two parallel 1-cells joined by an invertible 2-cell collapse.
        let mut c = TwoCatFragment::new();
        let x = c.add_object();
        let y = c.add_object();
        let f = c.add_one(x, y);
        let g = c.add_one(x, y);
        let tf = c.add_two(f, f);
        let tg = c.add_two(g, g);
        c.set_id2(f, tf);
        c.set_id2(g, tg);
        let u = c.add_two(f, g);
        let v = c.add_two(g, f);
        c.set_inverse(u, v);
        let ho = homotopy_category(&c).unwrap();
        assert_eq!(ho.classes.len(), 1);
        assert_eq!(ho.class_of[f], ho.class_of[g]);
    }

    #[test]
    fn homotopy_category_no_nonidentity_2cells_is_identity_quotient() {
        let c = idempotent_fragment();
        let ho = homotopy_category(&c).unwrap();
        assert_eq!(ho.classes.len(), c.n_one());
    }

    #[test]
    fn identity_is_an_equivalence() {
        let c = idempotent_fragment();
        let id = 0;
        let w = is_equivalence(&c, id).expect("identity is an equivalence");
        assert_eq!(w.quasi_inverse, id);
    }

    #[test]
    fn equivalence_false_with_empty_search_space() {
        let mut c = TwoCatFragment::new();
        let x = c.add_object();
        let y = c.add_object();
        let idx = c.add_one(x, x);
        let idy = c.add_one(y, y);
        c.set_id1(x, idx);
        c.set_id1(y, idy);
        let f = c.add_one(x, y);
        let tf = c.add_two(f, f);
        c.set_id2(f, tf);
        // no 1-cell back from y to x at all
        assert!(is_equivalence(&c, f).is_none());
    }

    #[test]
    fn identity_2functor_passes() {
        let c = idempotent_fragment();
        let mut comp_cell = HashMap::new();
        for (&(g, f), &gf) in &c.compose1 {
            comp_cell.insert((g, f), c.id2(gf).unwrap());
        }
        let mut unit_cell = HashMap::new();
        unit_cell.insert(0usize, c.id2(c.id1(0).unwrap()).unwrap());
        let fdata = WeakTwoFunctorData {
            obj_map: (0..c.n_objects()).collect(),
            one_map: (0..c.n_one()).collect(),
            two_map: (0..c.n_two()).collect(),
            comp_cell,
            unit_cell,
        };
        let report = check_weak_2functor(&c, &c, &fdata).unwrap();
        assert!(report.is_ok(), "violations: {:?}", report.violations);
    }

    #[test]
    fn corrupted_comparison_cell_is_caught() {
        // Functor on the fragment with the extra 2-cell u, corrupting the
        // comparison cell F_{f,id}; the unit square then fails.
        let mut c = idempotent_fragment();
        let f = 1;
        let t_f = 1;
        let t_id = 0;
        let u = c.add_two(f, f);
        c.set_vcomp(u, u, t_f);
        c.set_vcomp(u, t_f, u);
        c.set_vcomp(t_f, u, u);
        c.set_inverse(u, u);
        c.set_hcomp(u, t_f, u);
        c.set_hcomp(t_f, u, u);
        c.set_hcomp(u, u, t_f);
        c.set_hcomp(u, t_id, u);
        c.set_hcomp(t_id, u, u);
        let mut comp_cell = HashMap::new();
        for (&(g, h), &gh) in &c.compose1 {
            comp_cell.insert((g, h), c.id2(gh).unwrap());
        }
        comp_cell.insert((f, 0), u); // corruption: F_{f,id}
        let mut unit_cell = HashMap::new();
        unit_cell.insert(0usize, c.id2(c.id1(0).unwrap()).unwrap());
        let fdata = WeakTwoFunctorData {
            obj_map: (0..c.n_objects()).collect(),
            one_map: (0..c.n_one()).collect(),
            two_map: (0..c.n_two()).collect(),
            comp_cell,
            unit_cell,
        };
        let report = check_weak_2functor(&c, &c, &fdata).unwrap();
        assert!(!report.is_ok());
        assert!(report
            .violations
            .iter()
            .any(|v| v.law == "functor-hexagon" || v.law == "functor-unit"));
    }

    #[test]
    fn fibre_product_probed_by_itself() {
        // Strict fragment: one object z; W = X = Y = Z = the object, all maps
        // the identity. The identity cone is its own fibre product.
        let c = idempotent_fragment();
        let id1 = 0;
        let t_id = 0;
        let data = FibreProductData {
            g: id1,
            h: id1,
            w: 0,
            pi_x: id1,
            pi_y: id1,
            eta: t_id,
        };
        let probe = Cone {
            w: 0,
            pi_x: id1,
            pi_y: id1,
            eta: t_id,
        };
        let report = check_fibre_product(&c, &data, &[probe]).unwrap();
        assert!(report.ok, "{:?}", report.failures);
        assert_eq!(report.probes_checked, 1);
    }
}
