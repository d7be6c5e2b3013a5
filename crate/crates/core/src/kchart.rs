//! Kuranishi charts in the finite first-order model, their 1- and
//! 2-morphisms, the three compositions with coherence cells, restriction,
//! and the linear-algebra criterion for a morphism to be a coordinate
//! change (together with a brute-force search oracle for it).
//!
//! All smooth data is truncated to a value and a differential at each point;
//! every condition is imposed exactly on the zero locus of the section and
//! is decidable over the rationals.

use crate::exactlin::{seq_is_exact_closed, FinGroup, GroupHom, Rat, RationalMatrix};
use num::Zero;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum KchartError {
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("invalid morphism: {0}")]
    InvalidMorphism(String),
    #[error("not composable: {0}")]
    NotComposable(String),
    #[error("not a subset of the domain: {0}")]
    NotASubset(String),
    #[error("search budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("not a valid FOOO-dialect change: {0}")]
    NotAFoooChange(String),
    #[error("not a valid MW-dialect change: {0}")]
    NotAnMwChange(String),
}

// ---------------------------------------------------------------------------
// Charts
// ---------------------------------------------------------------------------

/// A Kuranishi chart in the finite model: a point set `V` with per-point
/// tangent and obstruction dimensions, a finite group acting linearly on
/// both, a first-order section jet, and a footprint identification of the
/// zero orbits with part of an ambient finite set `X`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DiscreteChart {
    pub n_points: usize,
    pub t_dim: Vec<usize>,
    pub e_dim: Vec<usize>,
    pub group: FinGroup,
    /// `action[g][v] = g·v`.
    pub action: Vec<Vec<usize>>,
    /// `dgamma[g][v] : T_v → T_{g·v}` (a `t_{g·v} × t_v` matrix).
    pub dgamma: Vec<Vec<RationalMatrix>>,
    /// `egamma[g][v] : E_v → E_{g·v}`.
    pub egamma: Vec<Vec<RationalMatrix>>,
    /// `s(v) ∈ Q^{e_v}`.
    pub s_val: Vec<Vec<Rat>>,
    /// `ds|_v : T_v → E_v` (an `e_v × t_v` matrix).
    pub ds: Vec<RationalMatrix>,
    /// Ambient footprint set `X = {0..footprint_size}`.
    pub footprint_size: usize,
    /// `ψ̄` on zero points: defined exactly on `s⁻¹(0)`, constant on orbits,
    /// injective on orbits.
    pub psi: BTreeMap<usize, usize>,
}

impl DiscreteChart {
    pub fn is_zero_point(&self, v: usize) -> bool {
        self.s_val[v].iter().all(|x| x.is_zero())
    }

    pub fn zero_points(&self) -> Vec<usize> {
        (0..self.n_points).filter(|&v| self.is_zero_point(v)).collect()
    }

    /// `Im ψ ⊆ X`.
    pub fn footprint_image(&self) -> BTreeSet<usize> {
        self.psi.values().copied().collect()
    }

    /// Points of `V` mapped by `ψ̄` into `s` (necessarily zero points).
    pub fn psi_preimage(&self, s: &BTreeSet<usize>) -> BTreeSet<usize> {
        self.psi
            .iter()
            .filter(|(_, x)| s.contains(x))
            .map(|(&v, _)| v)
            .collect()
    }

    /// Virtual dimension `t_v − e_v` (constant over `V` for valid charts).
    pub fn vdim(&self) -> Option<i64> {
        let d: BTreeSet<i64> = (0..self.n_points)
            .map(|v| self.t_dim[v] as i64 - self.e_dim[v] as i64)
            .collect();
        if d.len() <= 1 {
            d.into_iter().next().or(Some(0))
        } else {
            None
        }
    }

    /// A single point with trivial group and zero-dimensional fibres,
    /// covering the footprint point `x` of an `X` with `footprint_size`
    /// points.
    pub fn point(footprint_size: usize, x: usize) -> Self {
        DiscreteChart {
            n_points: 1,
            t_dim: vec![0],
            e_dim: vec![0],
            group: FinGroup::trivial(),
            action: vec![vec![0]],
            dgamma: vec![vec![RationalMatrix::zero(0, 0)]],
            egamma: vec![vec![RationalMatrix::zero(0, 0)]],
            s_val: vec![vec![]],
            ds: vec![RationalMatrix::zero(0, 0)],
            footprint_size,
            psi: [(0, x)].into_iter().collect(),
        }
    }
}

/// Structured outcome of chart validation.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, msg: String) {
        self.violations.push(msg);
    }
}

/// Check every chart invariant: table shapes, group action laws,
/// functoriality and equivariance of the linearized action, constancy of the
/// virtual dimension, and injectivity of the footprint map on zero orbits.
pub fn validate_chart(c: &DiscreteChart) -> ValidationReport {
    let mut r = ValidationReport::default();
    let n = c.n_points;
    let ord = c.group.order();
    if c.t_dim.len() != n
        || c.e_dim.len() != n
        || c.s_val.len() != n
        || c.ds.len() != n
        || c.action.len() != ord
        || c.dgamma.len() != ord
        || c.egamma.len() != ord
    {
        r.push("table sizes inconsistent with |V| and |Γ|".into());
        return r;
    }
    for v in 0..n {
        if c.s_val[v].len() != c.e_dim[v] {
            r.push(format!("s({v}) has wrong dimension"));
        }
        if c.ds[v].rows() != c.e_dim[v] || c.ds[v].cols() != c.t_dim[v] {
            r.push(format!("ds at {v} has wrong shape"));
        }
    }
    // group action laws
    let e = c.group.identity();
    for v in 0..n {
        if c.action[e][v] != v {
            r.push(format!("identity moves point {v}"));
        }
    }
    for g in 0..ord {
        if c.action[g].len() != n || c.dgamma[g].len() != n || c.egamma[g].len() != n {
            r.push(format!("action tables for element {g} have wrong length"));
            return r;
        }
        for h in 0..ord {
            let gh = c.group.mul(g, h);
            for v in 0..n {
                if c.action[gh][v] != c.action[g][c.action[h][v]] {
                    r.push(format!("action not associative at ({g},{h},{v})"));
                }
            }
        }
    }
    // linearized action: shapes, identity, functoriality
    for g in 0..ord {
        for v in 0..n {
            let gv = c.action[g][v];
            let dg = &c.dgamma[g][v];
            let eg = &c.egamma[g][v];
            if dg.rows() != c.t_dim[gv] || dg.cols() != c.t_dim[v] {
                r.push(format!("dγ at ({g},{v}) has wrong shape"));
            }
            if eg.rows() != c.e_dim[gv] || eg.cols() != c.e_dim[v] {
                r.push(format!("E-action at ({g},{v}) has wrong shape"));
            }
        }
    }
    for v in 0..n {
        if c.dgamma[e][v] != RationalMatrix::identity(c.t_dim[v]) {
            r.push(format!("dγ of the identity at {v} is not the identity"));
        }
        if c.egamma[e][v] != RationalMatrix::identity(c.e_dim[v]) {
            r.push(format!("E-action of the identity at {v} is not the identity"));
        }
    }
    for g in 0..ord {
        for h in 0..ord {
            let gh = c.group.mul(g, h);
            for v in 0..n {
                let hv = c.action[h][v];
                if c.dgamma[gh][v] != c.dgamma[g][hv].mul(&c.dgamma[h][v]) {
                    r.push(format!("dγ not functorial at ({g},{h},{v})"));
                }
                if c.egamma[gh][v] != c.egamma[g][hv].mul(&c.egamma[h][v]) {
                    r.push(format!("E-action not functorial at ({g},{h},{v})"));
                }
            }
        }
    }
    // section equivariance
    for g in 0..ord {
        for v in 0..n {
            let gv = c.action[g][v];
            if c.egamma[g][v].apply(&c.s_val[v]) != c.s_val[gv] {
                r.push(format!("s(γ·{v}) ≠ γ·s({v}) for γ = {g}"));
            }
            if c.egamma[g][v].mul(&c.ds[v]) != c.ds[gv].mul(&c.dgamma[g][v]) {
                r.push(format!("ds not equivariant at ({g},{v})"));
            }
        }
    }
    // constant virtual dimension
    if c.vdim().is_none() {
        r.push("virtual dimension t_v − e_v is not constant".into());
    }
    // footprint map
    for (&v, &x) in &c.psi {
        if !c.is_zero_point(v) {
            r.push(format!("ψ defined at non-zero point {v}"));
        }
        if x >= c.footprint_size {
            r.push(format!("ψ({v}) outside the footprint set"));
        }
    }
    for v in c.zero_points() {
        if !c.psi.contains_key(&v) {
            r.push(format!("ψ undefined at zero point {v}"));
        }
    }
    for g in 0..ord {
        for (&v, &x) in &c.psi {
            if let Some(&x2) = c.psi.get(&c.action[g][v]) {
                if x2 != x {
                    r.push(format!("ψ not constant on the orbit of {v}"));
                }
            }
        }
    }
    // injective on orbits: same image point forces same orbit
    let zeros = c.zero_points();
    for (a, &v) in zeros.iter().enumerate() {
        for &w in zeros.iter().skip(a + 1) {
            if c.psi.get(&v) == c.psi.get(&w) && c.psi.contains_key(&v) {
                let same_orbit = (0..ord).any(|g| c.action[g][v] == w);
                if !same_orbit {
                    r.push(format!("ψ identifies distinct zero orbits of {v} and {w}"));
                }
            }
        }
    }
    r
}

// ---------------------------------------------------------------------------
// 1-morphisms
// ---------------------------------------------------------------------------

/// A 1-morphism of charts over `(S, f)`: a bibundle `P` with commuting
/// source- and target-group actions, the two legs `π`, `φ`, and per-point
/// linear data `dφ`, `φ̂`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChartMorphism {
    pub source: DiscreteChart,
    pub target: DiscreteChart,
    /// The underlying map of footprint sets `f: X_i → X_j`.
    pub f_map: Vec<usize>,
    /// `S ⊆ Im ψ_i ∩ f⁻¹(Im ψ_j)`.
    pub domain: BTreeSet<usize>,
    pub n_p: usize,
    /// Source-group action on `P`.
    pub act_i: Vec<Vec<usize>>,
    /// Target-group action on `P` (free).
    pub act_j: Vec<Vec<usize>>,
    pub pi: Vec<usize>,
    pub phi: Vec<usize>,
    /// `dφ|_p : T_{π(p)}V_i → T_{φ(p)}V_j`.
    pub dphi: Vec<RationalMatrix>,
    /// `φ̂|_p : E_i|_{π(p)} → E_j|_{φ(p)}`.
    pub phihat: Vec<RationalMatrix>,
}

impl ChartMorphism {
    /// Points of `P` lying over `ψ̄_i⁻¹(S)`: the canonical 2-morphism domain.
    pub fn p_dot(&self) -> Vec<usize> {
        let zs = self.source.psi_preimage(&self.domain);
        (0..self.n_p).filter(|&p| zs.contains(&self.pi[p])).collect()
    }

    pub fn is_identity_shape(&self) -> bool {
        self.source == self.target && self.n_p == self.source.n_points * self.source.group.order()
    }
}

/// Check every 1-morphism invariant over its `(S, f)`.
pub fn validate_morphism(m: &ChartMorphism) -> ValidationReport {
    let mut r = ValidationReport::default();
    let ci = &m.source;
    let cj = &m.target;
    let oi = ci.group.order();
    let oj = cj.group.order();
    if m.f_map.len() != ci.footprint_size {
        r.push("f is not a total map on the source footprint set".into());
        return r;
    }
    if m.f_map.iter().any(|&x| x >= cj.footprint_size) {
        r.push("f maps outside the target footprint set".into());
        return r;
    }
    if m.act_i.len() != oi
        || m.act_j.len() != oj
        || m.pi.len() != m.n_p
        || m.phi.len() != m.n_p
        || m.dphi.len() != m.n_p
        || m.phihat.len() != m.n_p
    {
        r.push("table sizes inconsistent".into());
        return r;
    }
    // domain inside Im ψ_i ∩ f⁻¹(Im ψ_j)
    let im_j = cj.footprint_image();
    for &x in &m.domain {
        if !ci.footprint_image().contains(&x) {
            r.push(format!("domain point {x} not in the source footprint image"));
        }
        if !im_j.contains(&m.f_map[x]) {
            r.push(format!("f({x}) not in the target footprint image"));
        }
    }
    // group actions on P
    for (label, acts, grp) in [("source", &m.act_i, &ci.group), ("target", &m.act_j, &cj.group)] {
        let e = grp.identity();
        for p in 0..m.n_p {
            if acts[e][p] != p {
                r.push(format!("{label}-group identity moves {p}"));
            }
        }
        for g in 0..grp.order() {
            if acts[g].len() != m.n_p {
                r.push(format!("{label}-group action table wrong length"));
                return r;
            }
            for h in 0..grp.order() {
                let gh = grp.mul(g, h);
                for p in 0..m.n_p {
                    if acts[gh][p] != acts[g][acts[h][p]] {
                        r.push(format!("{label}-group action not associative at ({g},{h},{p})"));
                    }
                }
            }
        }
    }
    for g in 0..oi {
        for h in 0..oj {
            for p in 0..m.n_p {
                if m.act_i[g][m.act_j[h][p]] != m.act_j[h][m.act_i[g][p]] {
                    r.push(format!("the two actions do not commute at ({g},{h},{p})"));
                }
            }
        }
    }
    // target group acts freely
    for h in 0..oj {
        if h != cj.group.identity() && (0..m.n_p).any(|p| m.act_j[h][p] == p) {
            r.push(format!("target-group element {h} has a fixed point in P"));
        }
    }
    // leg equivariance
    for p in 0..m.n_p {
        for g in 0..oi {
            if m.pi[m.act_i[g][p]] != ci.action[g][m.pi[p]] {
                r.push(format!("π not source-equivariant at ({g},{p})"));
            }
            if m.phi[m.act_i[g][p]] != m.phi[p] {
                r.push(format!("φ not source-invariant at ({g},{p})"));
            }
        }
        for h in 0..oj {
            if m.pi[m.act_j[h][p]] != m.pi[p] {
                r.push(format!("π not target-invariant at ({h},{p})"));
            }
            if m.phi[m.act_j[h][p]] != cj.action[h][m.phi[p]] {
                r.push(format!("φ not target-equivariant at ({h},{p})"));
            }
        }
    }
    // π-fibres over V_ij are free transitive target-group orbits; V_ij
    // contains ψ̄_i⁻¹(S) and is source-invariant
    let v_ij: BTreeSet<usize> = m.pi.iter().copied().collect();
    for &v in &v_ij {
        let fibre: Vec<usize> = (0..m.n_p).filter(|&p| m.pi[p] == v).collect();
        if fibre.len() != oj {
            r.push(format!("π-fibre over {v} has size {} ≠ |Γ_j|", fibre.len()));
            continue;
        }
        let base = fibre[0];
        let orbit: BTreeSet<usize> = (0..oj).map(|h| m.act_j[h][base]).collect();
        if orbit != fibre.iter().copied().collect() {
            r.push(format!("π-fibre over {v} is not a single target-group orbit"));
        }
    }
    for v in ci.psi_preimage(&m.domain) {
        if !v_ij.contains(&v) {
            r.push(format!("π misses the required zero point {v}"));
        }
    }
    for g in 0..oi {
        for &v in &v_ij {
            if !v_ij.contains(&ci.action[g][v]) {
                r.push(format!("π-image not source-invariant at ({g},{v})"));
            }
        }
    }
    // linear data: shapes and equivariance
    for p in 0..m.n_p {
        let (v, w) = (m.pi[p], m.phi[p]);
        if m.dphi[p].rows() != cj.t_dim[w] || m.dphi[p].cols() != ci.t_dim[v] {
            r.push(format!("dφ at {p} has wrong shape"));
        }
        if m.phihat[p].rows() != cj.e_dim[w] || m.phihat[p].cols() != ci.e_dim[v] {
            r.push(format!("φ̂ at {p} has wrong shape"));
        }
    }
    for p in 0..m.n_p {
        let v = m.pi[p];
        for g in 0..oi {
            let q = m.act_i[g][p];
            if m.dphi[q].mul(&ci.dgamma[g][v]) != m.dphi[p] {
                r.push(format!("dφ not source-equivariant at ({g},{p})"));
            }
            if m.phihat[q].mul(&ci.egamma[g][v]) != m.phihat[p] {
                r.push(format!("φ̂ not source-equivariant at ({g},{p})"));
            }
        }
        for h in 0..oj {
            let q = m.act_j[h][p];
            let w = m.phi[p];
            if m.dphi[q] != cj.dgamma[h][w].mul(&m.dphi[p]) {
                r.push(format!("dφ not target-equivariant at ({h},{p})"));
            }
            if m.phihat[q] != cj.egamma[h][w].mul(&m.phihat[p]) {
                r.push(format!("φ̂ not target-equivariant at ({h},{p})"));
            }
        }
    }
    // first-order section compatibility and footprints over zero points
    for p in 0..m.n_p {
        let v = m.pi[p];
        if !ci.is_zero_point(v) {
            continue;
        }
        let w = m.phi[p];
        if !cj.is_zero_point(w) {
            r.push(format!("φ({p}) is not a zero point though π({p}) is"));
            continue;
        }
        if m.phihat[p].mul(&ci.ds[v]) != cj.ds[w].mul(&m.dphi[p]) {
            r.push(format!("first-order section compatibility fails at {p}"));
        }
        match (ci.psi.get(&v), cj.psi.get(&w)) {
            (Some(&x), Some(&y)) => {
                if m.f_map[x] != y {
                    r.push(format!("footprint compatibility fails at {p}"));
                }
            }
            _ => r.push(format!("footprint map undefined at a zero point of {p}")),
        }
    }
    r
}

/// The identity 1-morphism of a chart: `P = V×Γ` with the standard two
/// actions, `π` the projection, `φ` the action map, and the linearized
/// action as `dφ`, `φ̂`. Its domain is the full footprint image.
pub fn identity_morphism(c: &DiscreteChart) -> Result<ChartMorphism, KchartError> {
    let rep = validate_chart(c);
    if !rep.is_ok() {
        return Err(KchartError::InvalidChart(rep.violations.join("; ")));
    }
    let ord = c.group.order();
    let idx = |v: usize, g: usize| v * ord + g;
    let n_p = c.n_points * ord;
    let mut act_i = vec![vec![0; n_p]; ord];
    let mut act_j = vec![vec![0; n_p]; ord];
    let mut pi = vec![0; n_p];
    let mut phi = vec![0; n_p];
    let mut dphi = Vec::with_capacity(n_p);
    let mut phihat = Vec::with_capacity(n_p);
    for v in 0..c.n_points {
        for g in 0..ord {
            let p = idx(v, g);
            pi[p] = v;
            phi[p] = c.action[g][v];
            dphi.push(c.dgamma[g][v].clone());
            phihat.push(c.egamma[g][v].clone());
            for a in 0..ord {
                // source action: (v, g) ↦ (a·v, g a⁻¹)
                act_i[a][p] = idx(c.action[a][v], c.group.mul(g, c.group.inv(a)));
                // target action: (v, g) ↦ (v, a g)
                act_j[a][p] = idx(v, c.group.mul(a, g));
            }
        }
    }
    Ok(ChartMorphism {
        source: c.clone(),
        target: c.clone(),
        f_map: (0..c.footprint_size).collect(),
        domain: c.footprint_image(),
        n_p,
        act_i,
        act_j,
        pi,
        phi,
        dphi,
        phihat,
    })
}

// ---------------------------------------------------------------------------
// Composition of 1-morphisms
// ---------------------------------------------------------------------------

/// Composition bookkeeping: the composed morphism together with the orbit
/// structure of the middle-group quotient, for building coherence cells.
#[derive(Clone, Debug)]
pub struct Composition {
    pub result: ChartMorphism,
    /// Orbit representatives (least lexicographic pair), in index order.
    pub reps: Vec<(usize, usize)>,
    /// Fibre pair `(p ∈ P_f, q ∈ P_g)` to orbit index.
    pub class_of: HashMap<(usize, usize), usize>,
}

/// Compose `g ∘ f` (`f` first). The bibundle is the middle-group quotient of
/// the fibre product over the middle chart; orbit representatives are the
/// least lexicographic pairs, and all data is evaluated at representatives.
pub fn compose_with_maps(g: &ChartMorphism, f: &ChartMorphism) -> Result<Composition, KchartError> {
    if f.target != g.source {
        return Err(KchartError::NotComposable(
            "target chart of the first morphism differs from source of the second".into(),
        ));
    }
    let ci = &f.source;
    let cj = &f.target;
    let ck = &g.target;
    let oj = cj.group.order();
    // maximal-domain convention
    let domain: BTreeSet<usize> = f
        .domain
        .iter()
        .copied()
        .filter(|&x| g.domain.contains(&f.f_map[x]))
        .collect();
    let f_map: Vec<usize> = f.f_map.iter().map(|&x| g.f_map[x]).collect();
    // fibre pairs and the middle-group orbits
    let mut class_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut reps: Vec<(usize, usize)> = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for p in 0..f.n_p {
        for q in 0..g.n_p {
            if f.phi[p] == g.pi[q] {
                pairs.push((p, q));
            }
        }
    }
    pairs.sort_unstable();
    for &(p, q) in &pairs {
        if class_of.contains_key(&(p, q)) {
            continue;
        }
        let idx = reps.len();
        reps.push((p, q));
        for h in 0..oj {
            let hp = f.act_j[h][p];
            let hq = g.act_i[h][q];
            class_of.insert((hp, hq), idx);
        }
    }
    let n_p = reps.len();
    let oi = ci.group.order();
    let ok = ck.group.order();
    let mut act_i = vec![vec![0; n_p]; oi];
    let mut act_j = vec![vec![0; n_p]; ok];
    let mut pi = vec![0; n_p];
    let mut phi = vec![0; n_p];
    let mut dphi = Vec::with_capacity(n_p);
    let mut phihat = Vec::with_capacity(n_p);
    for (idx, &(p, q)) in reps.iter().enumerate() {
        pi[idx] = f.pi[p];
        phi[idx] = g.phi[q];
        dphi.push(g.dphi[q].mul(&f.dphi[p]));
        phihat.push(g.phihat[q].mul(&f.phihat[p]));
        for a in 0..oi {
            act_i[a][idx] = class_of[&(f.act_i[a][p], q)];
        }
        for a in 0..ok {
            act_j[a][idx] = class_of[&(p, g.act_j[a][q])];
        }
    }
    Ok(Composition {
        result: ChartMorphism {
            source: ci.clone(),
            target: ck.clone(),
            f_map,
            domain,
            n_p,
            act_i,
            act_j,
            pi,
            phi,
            dphi,
            phihat,
        },
        reps,
        class_of,
    })
}

pub fn compose_morphisms(
    g: &ChartMorphism,
    f: &ChartMorphism,
) -> Result<ChartMorphism, KchartError> {
    Ok(compose_with_maps(g, f)?.result)
}

// ---------------------------------------------------------------------------
// 2-morphisms
// ---------------------------------------------------------------------------

/// A 2-morphism in canonical form: a map `λ` on the zero-locus part `Ṗ` of
/// the source bibundle and a per-point correction `λ̂|_p: E_i|_{π(p)} →
/// T_{φ(p)}V_j`. Equality of 2-morphisms is equality of `(λ, λ̂)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChartTwoMorphism {
    pub source: ChartMorphism,
    pub target: ChartMorphism,
    pub lambda: BTreeMap<usize, usize>,
    pub lambda_hat: BTreeMap<usize, RationalMatrix>,
}

impl ChartTwoMorphism {
    /// The identity 2-morphism on a 1-morphism.
    pub fn identity(m: &ChartMorphism) -> Self {
        let mut lambda = BTreeMap::new();
        let mut lambda_hat = BTreeMap::new();
        for p in m.p_dot() {
            lambda.insert(p, p);
            lambda_hat.insert(
                p,
                RationalMatrix::zero(m.target.t_dim[m.phi[p]], m.source.e_dim[m.pi[p]]),
            );
        }
        ChartTwoMorphism {
            source: m.clone(),
            target: m.clone(),
            lambda,
            lambda_hat,
        }
    }
}

/// Check every 2-morphism invariant: parallel source and target, domain
/// exactly `Ṗ`, compatibility with `π` and both group actions, and the
/// three first-order identities relating the two 1-morphisms.
pub fn validate_two_morphism(l: &ChartTwoMorphism) -> ValidationReport {
    let mut r = ValidationReport::default();
    let m = &l.source;
    let m2 = &l.target;
    if m.source != m2.source
        || m.target != m2.target
        || m.domain != m2.domain
        || m.f_map != m2.f_map
    {
        r.push("source and target 1-morphisms are not parallel".into());
        return r;
    }
    let ci = &m.source;
    let cj = &m.target;
    let pdot: BTreeSet<usize> = m.p_dot().into_iter().collect();
    let keys: BTreeSet<usize> = l.lambda.keys().copied().collect();
    if keys != pdot {
        r.push("λ is not defined exactly on the canonical domain".into());
        return r;
    }
    if l.lambda_hat.keys().copied().collect::<BTreeSet<_>>() != pdot {
        r.push("λ̂ is not defined exactly on the canonical domain".into());
        return r;
    }
    for (&p, &p2) in &l.lambda {
        if p2 >= m2.n_p {
            r.push(format!("λ({p}) out of range"));
            return r;
        }
        if m2.pi[p2] != m.pi[p] {
            r.push(format!("π′(λ({p})) ≠ π({p})"));
        }
        // condition (1): φ agrees through λ
        if m2.phi[p2] != m.phi[p] {
            r.push(format!("φ′(λ({p})) ≠ φ({p})"));
        }
        let lh = &l.lambda_hat[&p];
        let (v, w) = (m.pi[p], m.phi[p]);
        if lh.rows() != cj.t_dim[w] || lh.cols() != ci.e_dim[v] {
            r.push(format!("λ̂ at {p} has wrong shape"));
            continue;
        }
        // condition (2): dφ′ = dφ + λ̂∘ds_i
        if m2.dphi[p2] != m.dphi[p].add(&lh.mul(&ci.ds[v])) {
            r.push(format!("first-order tangent identity fails at {p}"));
        }
        // condition (3): φ̂′ = φ̂ + ds_j∘λ̂
        if m2.phihat[p2] != m.phihat[p].add(&cj.ds[w].mul(lh)) {
            r.push(format!("first-order obstruction identity fails at {p}"));
        }
    }
    // equivariance of λ and λ̂ under both groups
    for (&p, &p2) in &l.lambda {
        for g in 0..ci.group.order() {
            let gp = m.act_i[g][p];
            if let Some(&gp2) = l.lambda.get(&gp) {
                if gp2 != m2.act_i[g][p2] {
                    r.push(format!("λ not source-equivariant at ({g},{p})"));
                }
            } else {
                r.push(format!("canonical domain not source-invariant at ({g},{p})"));
            }
        }
        for h in 0..cj.group.order() {
            let hp = m.act_j[h][p];
            if let Some(&hp2) = l.lambda.get(&hp) {
                if hp2 != m2.act_j[h][p2] {
                    r.push(format!("λ not target-equivariant at ({h},{p})"));
                }
            } else {
                r.push(format!("canonical domain not target-invariant at ({h},{p})"));
            }
        }
    }
    for (&p, lh) in &l.lambda_hat {
        let v = m.pi[p];
        let w = m.phi[p];
        for g in 0..ci.group.order() {
            let gp = m.act_i[g][p];
            if l.lambda_hat[&gp].mul(&ci.egamma[g][v]) != *lh {
                r.push(format!("λ̂ not source-equivariant at ({g},{p})"));
            }
        }
        for h in 0..cj.group.order() {
            let hp = m.act_j[h][p];
            if l.lambda_hat[&hp] != cj.dgamma[h][w].mul(lh) {
                r.push(format!("λ̂ not target-equivariant at ({h},{p})"));
            }
        }
    }
    r
}

/// Vertical composition `Λ′ ⊙ Λ` (apply `Λ` first): composed `λ` maps with
/// the corrections transported and added.
pub fn vcompose(
    l2: &ChartTwoMorphism,
    l1: &ChartTwoMorphism,
) -> Result<ChartTwoMorphism, KchartError> {
    if l1.target != l2.source {
        return Err(KchartError::NotComposable(
            "2-morphisms are not vertically composable".into(),
        ));
    }
    let mut lambda = BTreeMap::new();
    let mut lambda_hat = BTreeMap::new();
    for (&p, &q) in &l1.lambda {
        let q2 = l2.lambda[&q];
        lambda.insert(p, q2);
        lambda_hat.insert(p, l1.lambda_hat[&p].add(&l2.lambda_hat[&q]));
    }
    Ok(ChartTwoMorphism {
        source: l1.source.clone(),
        target: l2.target.clone(),
        lambda,
        lambda_hat,
    })
}

/// The inverse 2-morphism: `λ` inverted, corrections negated and
/// transported.
pub fn invert_two_morphism(l: &ChartTwoMorphism) -> ChartTwoMorphism {
    let mut lambda = BTreeMap::new();
    let mut lambda_hat = BTreeMap::new();
    for (&p, &q) in &l.lambda {
        lambda.insert(q, p);
        lambda_hat.insert(q, l.lambda_hat[&p].neg());
    }
    ChartTwoMorphism {
        source: l.target.clone(),
        target: l.source.clone(),
        lambda,
        lambda_hat,
    }
}

/// Horizontal composition `Λ_jk ∗ Λ_ij`: the induced map on quotient orbit
/// representatives, with the correction mixing the tangent leg of one factor
/// with the obstruction leg of the other.
pub fn hcompose(
    l_jk: &ChartTwoMorphism,
    l_ij: &ChartTwoMorphism,
) -> Result<ChartTwoMorphism, KchartError> {
    let src = compose_with_maps(&l_jk.source, &l_ij.source)?;
    let tgt = compose_with_maps(&l_jk.target, &l_ij.target)?;
    let mut lambda = BTreeMap::new();
    let mut lambda_hat = BTreeMap::new();
    for idx in src.result.p_dot() {
        let (p, q) = src.reps[idx];
        let lp = l_ij.lambda[&p];
        let lq = l_jk.lambda[&q];
        lambda.insert(idx, tgt.class_of[&(lp, lq)]);
        // the mixed correction is invariant under the middle-group orbit, so
        // evaluating it at any pair of the image orbit is consistent with the
        // representative at which the composite's data is stored
        let term1 = l_jk.source.dphi[q].mul(&l_ij.lambda_hat[&p]);
        let term2 = l_jk.lambda_hat[&q].mul(&l_ij.source.phihat[p]);
        lambda_hat.insert(idx, term1.add(&term2));
    }
    Ok(ChartTwoMorphism {
        source: src.result,
        target: tgt.result,
        lambda,
        lambda_hat,
    })
}

// ---------------------------------------------------------------------------
// Coherence cells
// ---------------------------------------------------------------------------

/// The associator `(h∘g)∘f ⇒ h∘(g∘f)`: re-bracketing of quotient
/// representatives with zero correction.
pub fn associator(
    h: &ChartMorphism,
    g: &ChartMorphism,
    f: &ChartMorphism,
) -> Result<ChartTwoMorphism, KchartError> {
    let hg = compose_with_maps(h, g)?;
    let gf = compose_with_maps(g, f)?;
    let src = compose_with_maps(&hg.result, f)?;
    let tgt = compose_with_maps(h, &gf.result)?;
    let mut lambda = BTreeMap::new();
    let mut lambda_hat = BTreeMap::new();
    for idx in src.result.p_dot() {
        let (p, w) = src.reps[idx]; // p ∈ P_f, w ∈ P_{h∘g}
        let (q, rr) = hg.reps[w]; // q ∈ P_g, rr ∈ P_h
        let x = gf.class_of[&(p, q)];
        let out = tgt.class_of[&(x, rr)];
        lambda.insert(idx, out);
        lambda_hat.insert(
            idx,
            RationalMatrix::zero(
                tgt.result.target.t_dim[tgt.result.phi[out]],
                src.result.source.e_dim[src.result.pi[idx]],
            ),
        );
    }
    Ok(ChartTwoMorphism {
        source: src.result,
        target: tgt.result,
        lambda,
        lambda_hat,
    })
}

/// The unitors of a 1-morphism: `β_f: f∘id ⇒ f` and `γ_f: id∘f ⇒ f`,
/// both with zero correction.
pub fn unitors(f: &ChartMorphism) -> Result<(ChartTwoMorphism, ChartTwoMorphism), KchartError> {
    let id_i = identity_morphism(&f.source)?;
    let id_j = identity_morphism(&f.target)?;
    let oi = f.source.group.order();

    // β: f∘id ⇒ f, [( (v,γ), p )] ↦ γ⁻¹·p
    let left = compose_with_maps(f, &id_i)?;
    let mut lambda = BTreeMap::new();
    let mut lambda_hat = BTreeMap::new();
    for idx in left.result.p_dot() {
        let (a, p) = left.reps[idx]; // a = (v, γ) ∈ V_i×Γ_i, p ∈ P_f
        let gamma = a % oi;
        let out = f.act_i[f.source.group.inv(gamma)][p];
        lambda.insert(idx, out);
        lambda_hat.insert(
            idx,
            RationalMatrix::zero(f.target.t_dim[f.phi[out]], f.source.e_dim[f.pi[out]]),
        );
    }
    let beta = ChartTwoMorphism {
        target: restrict_morphism(f, &left.result.domain)?,
        source: left.result,
        lambda,
        lambda_hat,
    };

    // γ: id∘f ⇒ f, [( p, (v,γ) )] ↦ γ·p
    let oj = f.target.group.order();
    let right = compose_with_maps(&id_j, f)?;
    let mut lambda = BTreeMap::new();
    let mut lambda_hat = BTreeMap::new();
    for idx in right.result.p_dot() {
        let (p, a) = right.reps[idx]; // p ∈ P_f, a = (v, γ) ∈ V_j×Γ_j
        let gamma = a % oj;
        let out = f.act_j[gamma][p];
        lambda.insert(idx, out);
        lambda_hat.insert(
            idx,
            RationalMatrix::zero(f.target.t_dim[f.phi[out]], f.source.e_dim[f.pi[out]]),
        );
    }
    let gamma_cell = ChartTwoMorphism {
        source: right.result.clone(),
        target: restrict_morphism(f, &right.result.domain)?,
        lambda,
        lambda_hat,
    };
    Ok((beta, gamma_cell))
}

// ---------------------------------------------------------------------------
// Restriction
// ---------------------------------------------------------------------------

/// Restrict a 1-morphism to a smaller domain: identical data, smaller `S`.
pub fn restrict_morphism(
    m: &ChartMorphism,
    t: &BTreeSet<usize>,
) -> Result<ChartMorphism, KchartError> {
    if !t.is_subset(&m.domain) {
        return Err(KchartError::NotASubset(format!("{t:?} ⊄ {:?}", m.domain)));
    }
    let mut out = m.clone();
    out.domain = t.clone();
    Ok(out)
}

/// Restrict a 2-morphism: both 1-morphisms restricted, `λ` and `λ̂` cut
/// down to the recomputed canonical domain.
pub fn restrict_two_morphism(
    l: &ChartTwoMorphism,
    t: &BTreeSet<usize>,
) -> Result<ChartTwoMorphism, KchartError> {
    let source = restrict_morphism(&l.source, t)?;
    let target = restrict_morphism(&l.target, t)?;
    let pdot: BTreeSet<usize> = source.p_dot().into_iter().collect();
    Ok(ChartTwoMorphism {
        source,
        target,
        lambda: l
            .lambda
            .iter()
            .filter(|(p, _)| pdot.contains(p))
            .map(|(&p, &q)| (p, q))
            .collect(),
        lambda_hat: l
            .lambda_hat
            .iter()
            .filter(|(p, _)| pdot.contains(p))
            .map(|(&p, m)| (p, m.clone()))
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Coordinate-change criterion
// ---------------------------------------------------------------------------

/// Per-point diagnostics for the coordinate-change decision.
#[derive(Clone, Debug)]
pub struct CoordChangePoint {
    pub p: usize,
    /// Exactness verdicts at the three interior spots of the four-term
    /// complex `0 → T_i → E_i⊕T_j → E_j → 0`.
    pub exact: bool,
    /// Whether the stabilizer projection is an isomorphism at `p`.
    pub stab_iso: bool,
}

#[derive(Clone, Debug)]
pub struct CoordChangeReport {
    pub ok: bool,
    pub points: Vec<CoordChangePoint>,
}

/// Decide whether a valid morphism is a coordinate change over its domain:
/// at every bibundle point over the zero locus of the domain, the four-term
/// linear complex must be exact and the stabilizer projection onto the
/// target-point stabilizer must be an isomorphism.
pub fn is_coordinate_change(m: &ChartMorphism) -> Result<CoordChangeReport, KchartError> {
    let rep = validate_morphism(m);
    if !rep.is_ok() {
        return Err(KchartError::InvalidMorphism(rep.violations.join("; ")));
    }
    let ci = &m.source;
    let cj = &m.target;
    let mut points = Vec::new();
    let mut ok = true;
    for p in m.p_dot() {
        let v = m.pi[p];
        let w = m.phi[p];
        // 0 → T_i →(ds_i ⊕ dφ)→ E_i ⊕ T_j →(−φ̂ ⊕ ds_j)→ E_j → 0
        let a = ci.ds[v].vstack(&m.dphi[p]);
        let b = m.phihat[p].neg().hstack(&cj.ds[w]);
        let exact = seq_is_exact_closed(&[a, b]).map_err(|e| {
            KchartError::InvalidMorphism(format!("exactness check failed: {e}"))
        })?;
        // stabilizer projection (γ_i, γ_j) ↦ γ_j onto Stab_{Γ_j}(φ(p))
        let stab_iso = stabilizer_projection_is_iso(m, p);
        if !(exact && stab_iso) {
            ok = false;
        }
        points.push(CoordChangePoint {
            p,
            exact,
            stab_iso,
        });
    }
    Ok(CoordChangeReport { ok, points })
}

fn stabilizer_projection_is_iso(m: &ChartMorphism, p: usize) -> bool {
    let ci = &m.source;
    let cj = &m.target;
    let w = m.phi[p];
    let mut image: Vec<usize> = Vec::new();
    let mut injective = true;
    for g in 0..ci.group.order() {
        for h in 0..cj.group.order() {
            if m.act_i[g][m.act_j[h][p]] == p {
                // (g, h) stabilizes p
                if image.contains(&h) {
                    injective = false;
                }
                image.push(h);
            }
        }
    }
    let target_stab: Vec<usize> = (0..cj.group.order())
        .filter(|&h| cj.action[h][w] == w)
        .collect();
    image.sort_unstable();
    image.dedup();
    let mut surjective = true;
    for h in &target_stab {
        if !image.contains(h) {
            surjective = false;
        }
    }
    let lands_in = image.iter().all(|h| target_stab.contains(h));
    injective && surjective && lands_in
}

// ---------------------------------------------------------------------------
// Brute-force equivalence oracle
// ---------------------------------------------------------------------------

/// A witness that a morphism is an equivalence: a quasi-inverse and the two
/// invertible 2-morphisms comparing the composites with identities.
#[derive(Clone, Debug)]
pub struct ChartEquivalenceWitness {
    pub quasi_inverse: ChartMorphism,
    /// `quasi_inverse ∘ m ⇒ id|_S` on the source chart.
    pub eta: ChartTwoMorphism,
    /// `m ∘ quasi_inverse ⇒ id|_S` on the target chart.
    pub zeta: ChartTwoMorphism,
}

/// Symbolic linear expressions over a pool of rational unknowns, used to
/// pose all equivalence constraints as a single solvable system.
#[derive(Clone, Debug, Default)]
struct LinExpr {
    terms: Vec<(usize, Rat)>,
    constant: Rat,
}

impl LinExpr {
    fn var(i: usize) -> Self {
        LinExpr {
            terms: vec![(i, Rat::from_integer(1.into()))],
            constant: Rat::zero(),
        }
    }

    fn constant(c: Rat) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    fn scaled(&self, s: &Rat) -> Self {
        LinExpr {
            terms: self.terms.iter().map(|(i, c)| (*i, c * s)).collect(),
            constant: &self.constant * s,
        }
    }

    fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        LinExpr {
            terms,
            constant: &self.constant + &other.constant,
        }
    }

    fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(&Rat::from_integer((-1).into())))
    }
}

/// A matrix of linear expressions.
#[derive(Clone, Debug)]
struct SymMat {
    rows: usize,
    cols: usize,
    entries: Vec<LinExpr>,
}

impl SymMat {
    fn var_block(base: usize, rows: usize, cols: usize) -> Self {
        SymMat {
            rows,
            cols,
            entries: (0..rows * cols).map(|k| LinExpr::var(base + k)).collect(),
        }
    }

    fn constm(m: &RationalMatrix) -> Self {
        SymMat {
            rows: m.rows(),
            cols: m.cols(),
            entries: m.entries().iter().map(|c| LinExpr::constant(c.clone())).collect(),
        }
    }

    fn at(&self, i: usize, j: usize) -> &LinExpr {
        &self.entries[i * self.cols + j]
    }

    /// `k · self` with `k` constant.
    fn lmul(&self, k: &RationalMatrix) -> Self {
        assert_eq!(k.cols(), self.rows);
        let mut entries = Vec::with_capacity(k.rows() * self.cols);
        for i in 0..k.rows() {
            for j in 0..self.cols {
                let mut acc = LinExpr::default();
                for m in 0..self.rows {
                    acc = acc.add(&self.at(m, j).scaled(k.get(i, m)));
                }
                entries.push(acc);
            }
        }
        SymMat {
            rows: k.rows(),
            cols: self.cols,
            entries,
        }
    }

    /// `self · k` with `k` constant.
    fn rmul(&self, k: &RationalMatrix) -> Self {
        assert_eq!(self.cols, k.rows());
        let mut entries = Vec::with_capacity(self.rows * k.cols());
        for i in 0..self.rows {
            for j in 0..k.cols() {
                let mut acc = LinExpr::default();
                for m in 0..self.cols {
                    acc = acc.add(&self.at(i, m).scaled(k.get(m, j)));
                }
                entries.push(acc);
            }
        }
        SymMat {
            rows: self.rows,
            cols: k.cols(),
            entries,
        }
    }

    fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        SymMat {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        SymMat {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }
}

#[derive(Debug, Default)]
struct LinSys {
    n_vars: usize,
    rows: Vec<Vec<(usize, Rat)>>,
    rhs: Vec<Rat>,
}

impl LinSys {
    fn fresh_block(&mut self, rows: usize, cols: usize) -> SymMat {
        let base = self.n_vars;
        self.n_vars += rows * cols;
        SymMat::var_block(base, rows, cols)
    }

    /// Impose `m = 0` entrywise.
    fn assert_zero(&mut self, m: &SymMat) {
        for e in &m.entries {
            self.rows.push(e.terms.clone());
            self.rhs.push(-&e.constant);
        }
    }

    fn assert_eq(&mut self, a: &SymMat, b: &SymMat) {
        self.assert_zero(&a.sub(b));
    }

    fn solve(&self) -> Option<Vec<Rat>> {
        let mut a = RationalMatrix::zero(self.rows.len(), self.n_vars);
        let mut b = RationalMatrix::zero(self.rows.len(), 1);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, c) in row {
                let cur = a.get(i, *j) + c;
                a.set(i, *j, cur);
            }
            b.set(i, 0, self.rhs[i].clone());
        }
        let x = a.solve(&b)?;
        Some((0..self.n_vars).map(|i| x.get(i, 0).clone()).collect())
    }
}

fn eval_block(block: &SymMat, solution: &[Rat]) -> RationalMatrix {
    let mut m = RationalMatrix::zero(block.rows, block.cols);
    for i in 0..block.rows {
        for j in 0..block.cols {
            let e = block.at(i, j);
            let mut v = e.constant.clone();
            for (idx, c) in &e.terms {
                v = v + c * &solution[*idx];
            }
            m.set(i, j, v);
        }
    }
    m
}

/// Enumerate every fully equivariant `λ` candidate from the canonical
/// domain of `src` to the bibundle of `tgt`, compatible with `π` and `φ`.
/// Backtracking with equivariant propagation; each branch costs budget.
fn enumerate_lambdas(
    src: &ChartMorphism,
    tgt: &ChartMorphism,
    budget: &mut i64,
) -> Result<Vec<BTreeMap<usize, usize>>, KchartError> {
    let pdot = src.p_dot();
    let mut results = Vec::new();
    let mut partial: BTreeMap<usize, usize> = BTreeMap::new();
    fn propagate(
        src: &ChartMorphism,
        tgt: &ChartMorphism,
        partial: &mut BTreeMap<usize, usize>,
        x: usize,
        y: usize,
    ) -> bool {
        let mut queue = vec![(x, y)];
        while let Some((x, y)) = queue.pop() {
            if let Some(&prev) = partial.get(&x) {
                if prev != y {
                    return false;
                }
                continue;
            }
            if tgt.pi[y] != src.pi[x] || tgt.phi[y] != src.phi[x] {
                return false;
            }
            partial.insert(x, y);
            for g in 0..src.source.group.order() {
                queue.push((src.act_i[g][x], tgt.act_i[g][y]));
            }
            for h in 0..src.target.group.order() {
                queue.push((src.act_j[h][x], tgt.act_j[h][y]));
            }
        }
        true
    }
    fn rec(
        src: &ChartMorphism,
        tgt: &ChartMorphism,
        pdot: &[usize],
        partial: &mut BTreeMap<usize, usize>,
        results: &mut Vec<BTreeMap<usize, usize>>,
        budget: &mut i64,
    ) -> Result<(), KchartError> {
        let next = pdot.iter().find(|x| !partial.contains_key(x));
        let Some(&x) = next else {
            results.push(partial.clone());
            return Ok(());
        };
        for y in 0..tgt.n_p {
            if tgt.pi[y] != src.pi[x] || tgt.phi[y] != src.phi[x] {
                continue;
            }
            *budget -= 1;
            if *budget < 0 {
                return Err(KchartError::BudgetExceeded(
                    "2-morphism map enumeration".into(),
                ));
            }
            let mut trial = partial.clone();
            if propagate(src, tgt, &mut trial, x, y) {
                let before = trial.clone();
                rec(src, tgt, pdot, &mut trial, results, budget)?;
                let _ = before;
            }
        }
        Ok(())
    }
    rec(src, tgt, &pdot, &mut partial, &mut results, budget)?;
    Ok(results)
}

/// Exhaustively decide whether `m` (over `(S, id)`) is an equivalence in the
/// 2-category of charts, by constructing the opposite bibundle over the zero
/// locus as quasi-inverse candidate, enumerating the finitely many
/// equivariant comparison maps, and solving for all remaining linear data
/// (quasi-inverse differentials and both corrections) as one exact linear
/// system.
pub fn brute_force_equivalence(
    m: &ChartMorphism,
    budget: i64,
) -> Result<Option<ChartEquivalenceWitness>, KchartError> {
    let rep = validate_morphism(m);
    if !rep.is_ok() {
        return Err(KchartError::InvalidMorphism(rep.violations.join("; ")));
    }
    if m.source.footprint_size != m.target.footprint_size
        || m.f_map.iter().enumerate().any(|(i, &x)| i != x)
    {
        return Err(KchartError::InvalidMorphism(
            "equivalence search requires a morphism over the identity footprint map".into(),
        ));
    }
    let ci = &m.source;
    let cj = &m.target;
    let s = &m.domain;
    let mut budget = budget;

    // --- the opposite bibundle over the zero locus -----------------------
    let pdot = m.p_dot();
    let op_index: HashMap<usize, usize> = pdot.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let k = pdot.len();
    // source group of the candidate is Γ_j, target group Γ_i; for validity
    // the target group must act freely on the zero part
    for g in 0..ci.group.order() {
        if g != ci.group.identity() && pdot.iter().any(|&p| m.act_i[g][p] == p) {
            return Ok(None);
        }
    }
    // φ must cover the target zero locus over S with Γ_i-torsor fibres
    let zj = cj.psi_preimage(s);
    for &w in &zj {
        let fibre: Vec<usize> = pdot.iter().copied().filter(|&p| m.phi[p] == w).collect();
        if fibre.len() != ci.group.order() {
            return Ok(None);
        }
        let base = fibre[0];
        let orbit: BTreeSet<usize> = (0..ci.group.order()).map(|g| m.act_i[g][base]).collect();
        if orbit != fibre.iter().copied().collect() {
            return Ok(None);
        }
    }
    // assemble the candidate with placeholder linear data
    let mut op = ChartMorphism {
        source: cj.clone(),
        target: ci.clone(),
        f_map: (0..cj.footprint_size).collect(),
        domain: s.clone(),
        n_p: k,
        act_i: (0..cj.group.order())
            .map(|h| pdot.iter().map(|&p| op_index[&m.act_j[h][p]]).collect())
            .collect(),
        act_j: (0..ci.group.order())
            .map(|g| pdot.iter().map(|&p| op_index[&m.act_i[g][p]]).collect())
            .collect(),
        pi: pdot.iter().map(|&p| m.phi[p]).collect(),
        phi: pdot.iter().map(|&p| m.pi[p]).collect(),
        dphi: pdot
            .iter()
            .map(|&p| RationalMatrix::zero(ci.t_dim[m.pi[p]], cj.t_dim[m.phi[p]]))
            .collect(),
        phihat: pdot
            .iter()
            .map(|&p| RationalMatrix::zero(ci.e_dim[m.pi[p]], cj.e_dim[m.phi[p]]))
            .collect(),
    };

    // set-level composites (independent of the unknown linear data)
    let m_s = restrict_morphism(m, s)?;
    let c1 = compose_with_maps(&op, &m_s)?; // op ∘ m : source chart to itself
    let c2 = compose_with_maps(&m_s, &op)?; // m ∘ op : target chart to itself
    let id_i = restrict_morphism(&identity_morphism(ci)?, s)?;
    let id_j = restrict_morphism(&identity_morphism(cj)?, s)?;

    let etas = enumerate_lambdas(&c1.result, &id_i, &mut budget)?;
    let zetas = enumerate_lambdas(&c2.result, &id_j, &mut budget)?;
    if etas.is_empty() || zetas.is_empty() {
        return Ok(None);
    }

    for eta_l in &etas {
        for zeta_l in &zetas {
            budget -= 1;
            if budget < 0 {
                return Err(KchartError::BudgetExceeded("candidate linear solves".into()));
            }
            let mut sys = LinSys::default();
            // unknown quasi-inverse data per opposite point
            let dphi_op: Vec<SymMat> = (0..k)
                .map(|b| sys.fresh_block(ci.t_dim[op.phi[b]], cj.t_dim[op.pi[b]]))
                .collect();
            let phihat_op: Vec<SymMat> = (0..k)
                .map(|b| sys.fresh_block(ci.e_dim[op.phi[b]], cj.e_dim[op.pi[b]]))
                .collect();
            // equivariance of the unknown data
            for b in 0..k {
                let v = op.pi[b];
                for h in 0..cj.group.order() {
                    let hb = op.act_i[h][b];
                    sys.assert_eq(&dphi_op[hb].rmul(&cj.dgamma[h][v]), &dphi_op[b]);
                    sys.assert_eq(&phihat_op[hb].rmul(&cj.egamma[h][v]), &phihat_op[b]);
                }
                let w = op.phi[b];
                for g in 0..ci.group.order() {
                    let gb = op.act_j[g][b];
                    sys.assert_eq(&dphi_op[gb], &dphi_op[b].lmul(&ci.dgamma[g][w]));
                    sys.assert_eq(&phihat_op[gb], &phihat_op[b].lmul(&ci.egamma[g][w]));
                }
                // section compatibility (all opposite points are zero points)
                sys.assert_eq(
                    &phihat_op[b].rmul(&cj.ds[v]),
                    &dphi_op[b].lmul(&ci.ds[w]),
                );
            }
            // composite data and the 2-morphism identities for η and ζ
            let mut eta_hat_blocks: BTreeMap<usize, SymMat> = BTreeMap::new();
            for (&x, &y) in eta_l {
                let (a, b) = c1.reps[x];
                let (v, w) = (c1.result.pi[x], c1.result.phi[x]);
                let lhat = sys.fresh_block(ci.t_dim[w], ci.e_dim[v]);
                // dφ_id = dφ_op∘dφ + λ̂∘ds_i
                sys.assert_eq(
                    &SymMat::constm(&id_i.dphi[y]),
                    &dphi_op[b].rmul(&m.dphi[a]).add(&lhat.rmul(&ci.ds[v])),
                );
                // φ̂_id = φ̂_op∘φ̂ + ds_i∘λ̂
                sys.assert_eq(
                    &SymMat::constm(&id_i.phihat[y]),
                    &phihat_op[b].rmul(&m.phihat[a]).add(&lhat.lmul(&ci.ds[w])),
                );
                eta_hat_blocks.insert(x, lhat);
            }
            let mut zeta_hat_blocks: BTreeMap<usize, SymMat> = BTreeMap::new();
            for (&x, &y) in zeta_l {
                let (b, a) = c2.reps[x];
                let (v, w) = (c2.result.pi[x], c2.result.phi[x]);
                let lhat = sys.fresh_block(cj.t_dim[w], cj.e_dim[v]);
                sys.assert_eq(
                    &SymMat::constm(&id_j.dphi[y]),
                    &dphi_op[b].lmul(&m.dphi[a]).add(&lhat.rmul(&cj.ds[v])),
                );
                sys.assert_eq(
                    &SymMat::constm(&id_j.phihat[y]),
                    &phihat_op[b].lmul(&m.phihat[a]).add(&lhat.lmul(&cj.ds[w])),
                );
                zeta_hat_blocks.insert(x, lhat);
            }
            // equivariance of the corrections
            for (blocks, comp, chart_src, chart_tgt) in [
                (&eta_hat_blocks, &c1, ci, ci),
                (&zeta_hat_blocks, &c2, cj, cj),
            ] {
                for (&x, lhat) in blocks.iter() {
                    let v = comp.result.pi[x];
                    let w = comp.result.phi[x];
                    for g in 0..chart_src.group.order() {
                        let gx = comp.result.act_i[g][x];
                        sys.assert_eq(
                            &blocks[&gx].rmul(&chart_src.egamma[g][v]),
                            lhat,
                        );
                    }
                    for h in 0..chart_tgt.group.order() {
                        let hx = comp.result.act_j[h][x];
                        sys.assert_eq(&blocks[&hx], &lhat.lmul(&chart_tgt.dgamma[h][w]));
                    }
                }
            }
            let Some(solution) = sys.solve() else {
                continue;
            };
            // materialize the witness
            for b in 0..k {
                op.dphi[b] = eval_block(&dphi_op[b], &solution);
                op.phihat[b] = eval_block(&phihat_op[b], &solution);
            }
            let c1r = compose_with_maps(&op, &m_s)?;
            let c2r = compose_with_maps(&m_s, &op)?;
            let eta = ChartTwoMorphism {
                source: c1r.result,
                target: id_i.clone(),
                lambda: eta_l.clone(),
                lambda_hat: eta_hat_blocks
                    .iter()
                    .map(|(&x, blk)| (x, eval_block(blk, &solution)))
                    .collect(),
            };
            let zeta = ChartTwoMorphism {
                source: c2r.result,
                target: id_j.clone(),
                lambda: zeta_l.clone(),
                lambda_hat: zeta_hat_blocks
                    .iter()
                    .map(|(&x, blk)| (x, eval_block(blk, &solution)))
                    .collect(),
            };
            return Ok(Some(ChartEquivalenceWitness {
                quasi_inverse: op,
                eta,
                zeta,
            }));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Hom-prestack via germ decomposition
// ---------------------------------------------------------------------------

/// The canonical form of a morphism's data over a single footprint point:
/// the bibundle points lying over one zero orbit, with the two actions and
/// the linear data, relabelled to the lexicographically least presentation.
///
/// Point values (`pi`, `phi`) are global chart indices, so germs of
/// different seed morphisms over the same footprint point are directly
/// comparable.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct MorphismGerm {
    pub n: usize,
    pub pi: Vec<usize>,
    pub phi: Vec<usize>,
    pub act_i: Vec<Vec<usize>>,
    pub act_j: Vec<Vec<usize>>,
    pub dphi: Vec<RationalMatrix>,
    pub phihat: Vec<RationalMatrix>,
}

/// A 2-cell between two germs at one footprint point, in canonical germ
/// coordinates.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct CellGerm {
    pub lambda: Vec<usize>,
    pub lambda_hat: Vec<RationalMatrix>,
}

impl CellGerm {
    fn is_identity(&self) -> bool {
        self.lambda.iter().enumerate().all(|(p, &q)| p == q)
            && self
                .lambda_hat
                .iter()
                .all(|m| *m == RationalMatrix::zero(m.rows(), m.cols()))
    }

    fn invert(&self) -> CellGerm {
        let n = self.lambda.len();
        let mut lambda = vec![0; n];
        let mut lambda_hat = vec![RationalMatrix::zero(0, 0); n];
        for (p, &q) in self.lambda.iter().enumerate() {
            lambda[q] = p;
            lambda_hat[q] = self.lambda_hat[p].neg();
        }
        CellGerm { lambda, lambda_hat }
    }

    /// `other ⊙ self` (apply `self` first); `self: a → b`, `other: b → c`.
    fn then(&self, other: &CellGerm) -> CellGerm {
        let n = self.lambda.len();
        let lambda = (0..n).map(|p| other.lambda[self.lambda[p]]).collect();
        let lambda_hat = (0..n)
            .map(|p| self.lambda_hat[p].add(&other.lambda_hat[self.lambda[p]]))
            .collect();
        CellGerm { lambda, lambda_hat }
    }
}

/// Extract the germ of `m` at footprint point `x` (which must lie in the
/// domain), returning the canonical germ and the relabelling used
/// (original bibundle point index → canonical germ index).
fn extract_germ(m: &ChartMorphism, x: usize) -> (MorphismGerm, HashMap<usize, usize>) {
    let ci = &m.source;
    let orbit: BTreeSet<usize> = ci
        .psi
        .iter()
        .filter(|(_, &y)| y == x)
        .map(|(&v, _)| v)
        .collect();
    let points: Vec<usize> = (0..m.n_p).filter(|&p| orbit.contains(&m.pi[p])).collect();
    let oi = ci.group.order();
    let oj = m.target.group.order();
    let mut best: Option<(MorphismGerm, HashMap<usize, usize>)> = None;
    for &base in &points {
        // the combined action is transitive over a single footprint orbit:
        // label points by first appearance along the lexicographic sweep
        let mut label: HashMap<usize, usize> = HashMap::new();
        let mut order: Vec<usize> = Vec::new();
        for g in 0..oi {
            for h in 0..oj {
                let p = m.act_i[g][m.act_j[h][base]];
                if !label.contains_key(&p) {
                    label.insert(p, order.len());
                    order.push(p);
                }
            }
        }
        if order.len() != points.len() {
            // disconnected germ (cannot happen for valid data); fall back to
            // appending the stragglers in index order
            for &p in &points {
                if !label.contains_key(&p) {
                    label.insert(p, order.len());
                    order.push(p);
                }
            }
        }
        let germ = MorphismGerm {
            n: order.len(),
            pi: order.iter().map(|&p| m.pi[p]).collect(),
            phi: order.iter().map(|&p| m.phi[p]).collect(),
            act_i: (0..oi)
                .map(|g| order.iter().map(|&p| label[&m.act_i[g][p]]).collect())
                .collect(),
            act_j: (0..oj)
                .map(|h| order.iter().map(|&p| label[&m.act_j[h][p]]).collect())
                .collect(),
            dphi: order.iter().map(|&p| m.dphi[p].clone()).collect(),
            phihat: order.iter().map(|&p| m.phihat[p].clone()).collect(),
        };
        match &best {
            Some((b, _)) if *b <= germ => {}
            _ => best = Some((germ, label)),
        }
    }
    best.expect("germ over a domain point is nonempty")
}

/// All zero-correction 2-cells from germ `a` to germ `b`: equivariant maps
/// preserving `π`, `φ`, and the linear data exactly. The combined action is
/// transitive, so candidates are indexed by the image of point 0.
fn zero_cells_between(a: &MorphismGerm, b: &MorphismGerm, oi: usize, oj: usize) -> Vec<CellGerm> {
    if a.n != b.n {
        return Vec::new();
    }
    let mut out = Vec::new();
    'candidate: for y0 in 0..b.n {
        let mut lambda = vec![usize::MAX; a.n];
        // propagate along the group sweep from 0 ↦ y0
        let mut stack = vec![(0usize, y0)];
        while let Some((p, q)) = stack.pop() {
            if lambda[p] != usize::MAX {
                if lambda[p] != q {
                    continue 'candidate;
                }
                continue;
            }
            if a.pi[p] != b.pi[q]
                || a.phi[p] != b.phi[q]
                || a.dphi[p] != b.dphi[q]
                || a.phihat[p] != b.phihat[q]
            {
                continue 'candidate;
            }
            lambda[p] = q;
            for g in 0..oi {
                stack.push((a.act_i[g][p], b.act_i[g][q]));
            }
            for h in 0..oj {
                stack.push((a.act_j[h][p], b.act_j[h][q]));
            }
        }
        if lambda.iter().any(|&q| q == usize::MAX) {
            continue;
        }
        let lambda_hat = (0..a.n)
            .map(|p| RationalMatrix::zero(a.dphi[p].rows(), a.phihat[p].cols()))
            .collect();
        out.push(CellGerm { lambda, lambda_hat });
    }
    out.sort();
    out.dedup();
    out
}

/// A seed-generated model of the Hom-prestack of two charts over the part
/// of the source footprint mapping into the target footprint, on the
/// discrete site: objects over an open are per-point germ choices,
/// morphisms are per-point 2-cell germs, and restriction drops components.
///
/// The cell tables contain every zero-correction cell plus the closure of
/// any seeded cells under vertical composition and inversion.
#[derive(Clone, Debug)]
pub struct HomStack {
    pub prestack: crate::descent::PrestackData,
    /// The underlying footprint map the morphisms live over.
    pub f_map: Vec<usize>,
    /// Sorted common footprint; site point `k` is `footprint[k]`.
    pub footprint: Vec<usize>,
    /// Germ library per site point.
    pub germs: Vec<Vec<MorphismGerm>>,
    /// `cells[k][a][b]`: 2-cell germs from germ `a` to germ `b` at point `k`.
    pub cells: Vec<Vec<Vec<Vec<CellGerm>>>>,
    /// Per open: object id → germ index per site point of the open (sorted).
    pub objects: Vec<Vec<Vec<usize>>>,
    /// Per open: morphism id → (source object, target object, cell choice
    /// index per site point).
    pub morphisms: Vec<Vec<(usize, usize, Vec<usize>)>>,
    morph_lookup: Vec<HashMap<(usize, usize, Vec<usize>), usize>>,
    source_chart: DiscreteChart,
    target_chart: DiscreteChart,
}

const HOM_STACK_CELL_CAP: usize = 512;

/// Build the Hom-prestack generated by the seed morphisms and seeded
/// 2-cells over the footprint map `f_map`. Seeds must be valid morphisms
/// between the two charts over `f_map`; each is decomposed into per-point
/// germs and the object sets over an open are all recombinations of the
/// collected germs. Cell seeds are decomposed likewise and closed under
/// vertical composition and inversion together with all zero-correction
/// cells.
pub fn hom_stack(
    ci: &DiscreteChart,
    cj: &DiscreteChart,
    f_map: &[usize],
    seeds: &[ChartMorphism],
    cell_seeds: &[ChartTwoMorphism],
) -> Result<HomStack, KchartError> {
    if f_map.len() != ci.footprint_size || f_map.iter().any(|&x| x >= cj.footprint_size) {
        return Err(KchartError::InvalidMorphism(
            "footprint map is not a total map into the target footprint set".into(),
        ));
    }
    let im_j = cj.footprint_image();
    let footprint: Vec<usize> = ci
        .footprint_image()
        .into_iter()
        .filter(|&x| im_j.contains(&f_map[x]))
        .collect();
    let n = footprint.len();
    // collect germ sources: the seeds plus the endpoints of seeded cells
    let mut germ_sources: Vec<&ChartMorphism> = seeds.iter().collect();
    for cs in cell_seeds {
        let rep = validate_two_morphism(cs);
        if !rep.is_ok() {
            return Err(KchartError::InvalidMorphism(format!(
                "cell seed: {}",
                rep.violations.join("; ")
            )));
        }
        germ_sources.push(&cs.source);
        germ_sources.push(&cs.target);
    }
    let mut germs: Vec<Vec<MorphismGerm>> = vec![Vec::new(); n];
    for seed in &germ_sources {
        if seed.source != *ci || seed.target != *cj || seed.f_map != f_map {
            return Err(KchartError::InvalidMorphism(
                "seed is not a morphism between the given charts over the given map".into(),
            ));
        }
        let rep = validate_morphism(seed);
        if !rep.is_ok() {
            return Err(KchartError::InvalidMorphism(rep.violations.join("; ")));
        }
        for (k, &x) in footprint.iter().enumerate() {
            if !seed.domain.contains(&x) {
                continue;
            }
            let (germ, _) = extract_germ(seed, x);
            if !germs[k].contains(&germ) {
                germs[k].push(germ);
            }
        }
    }
    for g in &mut germs {
        g.sort();
    }
    let oi = ci.group.order();
    let oj = cj.group.order();
    // cell tables: all zero-correction cells first
    let mut cells: Vec<Vec<Vec<Vec<CellGerm>>>> = Vec::with_capacity(n);
    for k in 0..n {
        let lib = &germs[k];
        let mut table = vec![vec![Vec::new(); lib.len()]; lib.len()];
        for (a, ga) in lib.iter().enumerate() {
            for (b, gb) in lib.iter().enumerate() {
                table[a][b] = zero_cells_between(ga, gb, oi, oj);
            }
        }
        cells.push(table);
    }
    // seeded cells
    for cs in cell_seeds {
        for (k, &x) in footprint.iter().enumerate() {
            if !cs.source.domain.contains(&x) {
                continue;
            }
            let (ga, la) = extract_germ(&cs.source, x);
            let (gb, lb) = extract_germ(&cs.target, x);
            let a = germs[k].iter().position(|g| *g == ga).expect("endpoint germ");
            let b = germs[k].iter().position(|g| *g == gb).expect("endpoint germ");
            let mut lambda = vec![usize::MAX; ga.n];
            let mut lambda_hat = vec![RationalMatrix::zero(0, 0); ga.n];
            for (&p, canon) in &la {
                let q = cs.lambda[&p];
                lambda[*canon] = lb[&q];
                lambda_hat[*canon] = cs.lambda_hat[&p].clone();
            }
            let cell = CellGerm { lambda, lambda_hat };
            if !cells[k][a][b].contains(&cell) {
                cells[k][a][b].push(cell);
            }
        }
    }
    // close under inversion and composition
    for k in 0..n {
        let lib_len = germs[k].len();
        let mut total: usize = cells[k].iter().flatten().map(Vec::len).sum();
        loop {
            let snapshot = cells[k].clone();
            let mut added = false;
            'pass: for a in 0..lib_len {
                for b in 0..lib_len {
                    for cell in &snapshot[a][b] {
                        let inv = cell.invert();
                        if !cells[k][b][a].contains(&inv) {
                            cells[k][b][a].push(inv);
                            total += 1;
                            added = true;
                        }
                        for c in 0..lib_len {
                            for next in &snapshot[b][c] {
                                let comp = cell.then(next);
                                if !cells[k][a][c].contains(&comp) {
                                    cells[k][a][c].push(comp);
                                    total += 1;
                                    added = true;
                                }
                            }
                        }
                        if total > HOM_STACK_CELL_CAP {
                            break 'pass;
                        }
                    }
                }
            }
            if total > HOM_STACK_CELL_CAP {
                return Err(KchartError::BudgetExceeded(
                    "seeded cell closure does not stabilize".into(),
                ));
            }
            if !added {
                break;
            }
        }
        for row in &mut cells[k] {
            for entry in row.iter_mut() {
                entry.sort();
            }
        }
    }
    // the discrete site on the footprint
    let site = crate::descent::FinSite::discrete(n);
    let mut groupoids = Vec::with_capacity(site.n_opens());
    let mut objects: Vec<Vec<Vec<usize>>> = Vec::with_capacity(site.n_opens());
    let mut morphisms: Vec<Vec<(usize, usize, Vec<usize>)>> = Vec::with_capacity(site.n_opens());
    let mut morph_lookup: Vec<HashMap<(usize, usize, Vec<usize>), usize>> =
        Vec::with_capacity(site.n_opens());
    for s in 0..site.n_opens() {
        let pts: Vec<usize> = site.open(s).iter().copied().collect();
        // objects: cartesian product of germ choices
        let mut objs: Vec<Vec<usize>> = vec![Vec::new()];
        for &k in &pts {
            let mut next = Vec::new();
            for o in &objs {
                for gi in 0..germs[k].len() {
                    let mut o2 = o.clone();
                    o2.push(gi);
                    next.push(o2);
                }
            }
            objs = next;
        }
        // morphisms: per object pair, cartesian product of cell choices
        let mut mors: Vec<(usize, usize, Vec<usize>)> = Vec::new();
        let mut lookup = HashMap::new();
        for (ai, a) in objs.iter().enumerate() {
            for (bi, b) in objs.iter().enumerate() {
                let mut choices: Vec<Vec<usize>> = vec![Vec::new()];
                for (pos, &k) in pts.iter().enumerate() {
                    let avail = cells[k][a[pos]][b[pos]].len();
                    let mut next = Vec::new();
                    for c in &choices {
                        for ci2 in 0..avail {
                            let mut c2 = c.clone();
                            c2.push(ci2);
                            next.push(c2);
                        }
                    }
                    choices = next;
                    if choices.is_empty() {
                        break;
                    }
                }
                for c in choices {
                    if c.len() == pts.len() {
                        lookup.insert((ai, bi, c.clone()), mors.len());
                        mors.push((ai, bi, c));
                    }
                }
            }
        }
        // groupoid tables
        let mut g = crate::descent::FinGroupoid {
            n_objects: objs.len(),
            ..Default::default()
        };
        for (ai, bi, _) in &mors {
            g.mor_src.push(*ai);
            g.mor_tgt.push(*bi);
        }
        g.id_mor = objs
            .iter()
            .enumerate()
            .map(|(ai, a)| {
                let c: Vec<usize> = pts
                    .iter()
                    .enumerate()
                    .map(|(pos, &k)| {
                        cells[k][a[pos]][a[pos]]
                            .iter()
                            .position(CellGerm::is_identity)
                            .expect("identity cell present")
                    })
                    .collect();
                lookup[&(ai, ai, c)]
            })
            .collect();
        for (mi, (ai, bi, c)) in mors.iter().enumerate() {
            // inverse
            let inv_c: Vec<usize> = pts
                .iter()
                .enumerate()
                .map(|(pos, &k)| {
                    let inv = cells[k][objs[*ai][pos]][objs[*bi][pos]][c[pos]].invert();
                    cells[k][objs[*bi][pos]][objs[*ai][pos]]
                        .iter()
                        .position(|cand| *cand == inv)
                        .expect("cell set closed under inversion")
                })
                .collect();
            g.inv.push(lookup[&(*bi, *ai, inv_c)]);
            // composition with every composable morphism
            for (mj, (aj, bj, c2)) in mors.iter().enumerate() {
                if *bi != *aj {
                    continue;
                }
                let comp_c: Vec<usize> = pts
                    .iter()
                    .enumerate()
                    .map(|(pos, &k)| {
                        let c_ab = &cells[k][objs[*ai][pos]][objs[*bi][pos]][c[pos]];
                        let c_bc = &cells[k][objs[*aj][pos]][objs[*bj][pos]][c2[pos]];
                        let comp = c_ab.then(c_bc);
                        cells[k][objs[*ai][pos]][objs[*bj][pos]]
                            .iter()
                            .position(|cand| *cand == comp)
                            .expect("cell set closed under composition")
                    })
                    .collect();
                g.compose.insert((mj, mi), lookup[&(*ai, *bj, comp_c)]);
            }
        }
        groupoids.push(g);
        objects.push(objs);
        morphisms.push(mors);
        morph_lookup.push(lookup);
    }
    // restriction tables
    let mut restr_obj = HashMap::new();
    let mut restr_mor = HashMap::new();
    for s in 0..site.n_opens() {
        let spts: Vec<usize> = site.open(s).iter().copied().collect();
        for t in 0..site.n_opens() {
            if !site.is_subset(t, s) {
                continue;
            }
            let tpts: Vec<usize> = site.open(t).iter().copied().collect();
            let keep: Vec<usize> = tpts
                .iter()
                .map(|k| spts.iter().position(|k2| k2 == k).unwrap())
                .collect();
            let ro: Vec<usize> = objects[s]
                .iter()
                .map(|o| {
                    let cut: Vec<usize> = keep.iter().map(|&i| o[i]).collect();
                    objects[t].iter().position(|o2| *o2 == cut).unwrap()
                })
                .collect();
            let rm: Vec<usize> = morphisms[s]
                .iter()
                .map(|(ai, bi, c)| {
                    let cut: Vec<usize> = keep.iter().map(|&i| c[i]).collect();
                    morph_lookup[t][&(ro[*ai], {
                        let bcut: Vec<usize> = keep.iter().map(|&i| objects[s][*bi][i]).collect();
                        objects[t].iter().position(|o2| *o2 == bcut).unwrap()
                    }, cut)]
                })
                .collect();
            restr_obj.insert((s, t), ro);
            restr_mor.insert((s, t), rm);
        }
    }
    Ok(HomStack {
        prestack: crate::descent::PrestackData {
            site,
            groupoids,
            restr_obj,
            restr_mor,
        },
        f_map: f_map.to_vec(),
        footprint,
        germs,
        cells,
        objects,
        morphisms,
        morph_lookup,
        source_chart: ci.clone(),
        target_chart: cj.clone(),
    })
}

impl HomStack {
    /// The open index of the subset of site points whose footprint points
    /// lie in `xs`.
    pub fn open_of(&self, xs: &BTreeSet<usize>) -> usize {
        let pts: BTreeSet<usize> = (0..self.footprint.len())
            .filter(|k| xs.contains(&self.footprint[*k]))
            .collect();
        self.prestack
            .site
            .open_index(&pts)
            .expect("discrete site contains every subset")
    }

    /// The footprint subset of an open.
    pub fn open_footprint(&self, open: usize) -> BTreeSet<usize> {
        self.prestack
            .site
            .open(open)
            .iter()
            .map(|&k| self.footprint[k])
            .collect()
    }

    /// Reassemble a groupoid object over an open into an actual chart
    /// morphism over the corresponding footprint subset.
    pub fn object_to_morphism(&self, open: usize, obj: usize) -> ChartMorphism {
        let pts: Vec<usize> = self.prestack.site.open(open).iter().copied().collect();
        let choice = &self.objects[open][obj];
        let mut n_p = 0;
        let mut act_i = vec![Vec::new(); self.source_chart.group.order()];
        let mut act_j = vec![Vec::new(); self.target_chart.group.order()];
        let mut pi = Vec::new();
        let mut phi = Vec::new();
        let mut dphi = Vec::new();
        let mut phihat = Vec::new();
        for (pos, &k) in pts.iter().enumerate() {
            let germ = &self.germs[k][choice[pos]];
            let off = n_p;
            n_p += germ.n;
            pi.extend(germ.pi.iter().copied());
            phi.extend(germ.phi.iter().copied());
            dphi.extend(germ.dphi.iter().cloned());
            phihat.extend(germ.phihat.iter().cloned());
            for (g, row) in act_i.iter_mut().enumerate() {
                row.extend(germ.act_i[g].iter().map(|&q| off + q));
            }
            for (h, row) in act_j.iter_mut().enumerate() {
                row.extend(germ.act_j[h].iter().map(|&q| off + q));
            }
        }
        ChartMorphism {
            source: self.source_chart.clone(),
            target: self.target_chart.clone(),
            f_map: self.f_map.clone(),
            domain: pts.iter().map(|&k| self.footprint[k]).collect(),
            n_p,
            act_i,
            act_j,
            pi,
            phi,
            dphi,
            phihat,
        }
    }

    /// Reassemble a groupoid morphism into a chart 2-morphism between the
    /// reassembled objects.
    pub fn morphism_to_two_cell(&self, open: usize, mor: usize) -> ChartTwoMorphism {
        let pts: Vec<usize> = self.prestack.site.open(open).iter().copied().collect();
        let (ai, bi, c) = &self.morphisms[open][mor];
        let src = self.object_to_morphism(open, *ai);
        let tgt = self.object_to_morphism(open, *bi);
        let mut lambda = BTreeMap::new();
        let mut lambda_hat = BTreeMap::new();
        let mut off_src = 0;
        let mut off_tgt = 0;
        for (pos, &k) in pts.iter().enumerate() {
            let ga = &self.germs[k][self.objects[open][*ai][pos]];
            let gb = &self.germs[k][self.objects[open][*bi][pos]];
            let cell = &self.cells[k][self.objects[open][*ai][pos]][self.objects[open][*bi][pos]]
                [c[pos]];
            for p in 0..ga.n {
                lambda.insert(off_src + p, off_tgt + cell.lambda[p]);
                lambda_hat.insert(off_src + p, cell.lambda_hat[p].clone());
            }
            off_src += ga.n;
            off_tgt += gb.n;
        }
        ChartTwoMorphism {
            source: src,
            target: tgt,
            lambda,
            lambda_hat,
        }
    }

    /// Find the object over `open` whose germs match `m` pointwise.
    /// `m` must be defined at least on the open's footprint.
    pub fn locate_object(&self, open: usize, m: &ChartMorphism) -> Option<usize> {
        let pts: Vec<usize> = self.prestack.site.open(open).iter().copied().collect();
        let mut choice = Vec::with_capacity(pts.len());
        for &k in &pts {
            let x = self.footprint[k];
            if !m.domain.contains(&x) {
                return None;
            }
            let (germ, _) = extract_germ(m, x);
            choice.push(self.germs[k].iter().position(|g| *g == germ)?);
        }
        self.objects[open].iter().position(|o| *o == choice)
    }

    /// The strict relabelling 2-morphism from the reassembly of `m`'s
    /// object over `open` to `m` restricted to the open's footprint.
    pub fn canonical_iso(&self, open: usize, m: &ChartMorphism) -> Option<ChartTwoMorphism> {
        let obj = self.locate_object(open, m)?;
        let source = self.object_to_morphism(open, obj);
        let target = restrict_morphism(m, &self.open_footprint(open)).ok()?;
        let pts: Vec<usize> = self.prestack.site.open(open).iter().copied().collect();
        let mut lambda = BTreeMap::new();
        let mut lambda_hat = BTreeMap::new();
        let mut off = 0;
        for &k in &pts {
            let x = self.footprint[k];
            let (germ, label) = extract_germ(m, x);
            for (&p, &canon) in &label {
                lambda.insert(off + canon, p);
                lambda_hat.insert(
                    off + canon,
                    RationalMatrix::zero(m.target.t_dim[m.phi[p]], m.source.e_dim[m.pi[p]]),
                );
            }
            off += germ.n;
        }
        Some(ChartTwoMorphism {
            source,
            target,
            lambda,
            lambda_hat,
        })
    }

    /// The strict offset 2-morphism from the reassembly over a sub-open of
    /// the restricted object to the restriction of the reassembly over the
    /// larger open.
    pub fn restriction_iso(&self, sup: usize, sub: usize, obj_sup: usize) -> ChartTwoMorphism {
        let obj_sub = self.prestack.restrict_obj(sup, sub, obj_sup);
        let source = self.object_to_morphism(sub, obj_sub);
        let target = restrict_morphism(
            &self.object_to_morphism(sup, obj_sup),
            &self.open_footprint(sub),
        )
        .expect("sub-open footprint is contained in the sup-open footprint");
        let sup_pts: Vec<usize> = self.prestack.site.open(sup).iter().copied().collect();
        let sub_pts: Vec<usize> = self.prestack.site.open(sub).iter().copied().collect();
        // offsets of each sup germ block
        let mut sup_off = Vec::with_capacity(sup_pts.len());
        let mut off = 0;
        for (pos, &k) in sup_pts.iter().enumerate() {
            sup_off.push(off);
            off += self.germs[k][self.objects[sup][obj_sup][pos]].n;
        }
        let mut lambda = BTreeMap::new();
        let mut lambda_hat = BTreeMap::new();
        let mut off_sub = 0;
        for &k in &sub_pts {
            let pos_sup = sup_pts.iter().position(|k2| *k2 == k).unwrap();
            let germ = &self.germs[k][self.objects[sup][obj_sup][pos_sup]];
            for t in 0..germ.n {
                lambda.insert(off_sub + t, sup_off[pos_sup] + t);
                lambda_hat.insert(
                    off_sub + t,
                    RationalMatrix::zero(
                        self.target_chart.t_dim[germ.phi[t]],
                        self.source_chart.e_dim[germ.pi[t]],
                    ),
                );
            }
            off_sub += germ.n;
        }
        ChartTwoMorphism {
            source,
            target,
            lambda,
            lambda_hat,
        }
    }

    /// Find the groupoid morphism over `open` matching a 2-morphism
    /// between two located objects.
    pub fn locate_cell(&self, open: usize, l: &ChartTwoMorphism) -> Option<usize> {
        let a = self.locate_object(open, &l.source)?;
        let b = self.locate_object(open, &l.target)?;
        let pts: Vec<usize> = self.prestack.site.open(open).iter().copied().collect();
        let mut choice = Vec::with_capacity(pts.len());
        for (pos, &k) in pts.iter().enumerate() {
            let x = self.footprint[k];
            let (ga, la) = extract_germ(&l.source, x);
            let (_, lb) = extract_germ(&l.target, x);
            let mut lambda = vec![usize::MAX; ga.n];
            let mut lambda_hat = vec![RationalMatrix::zero(0, 0); ga.n];
            for (&p, &canon) in &la {
                let q = *l.lambda.get(&p)?;
                lambda[canon] = *lb.get(&q)?;
                lambda_hat[canon] = l.lambda_hat[&p].clone();
            }
            let cell = CellGerm { lambda, lambda_hat };
            let ai = self.objects[open][a][pos];
            let bi = self.objects[open][b][pos];
            choice.push(self.cells[k][ai][bi].iter().position(|c| *c == cell)?);
        }
        self.morph_lookup[open].get(&(a, b, choice)).copied()
    }
}

// ---------------------------------------------------------------------------
// Import adapters
// ---------------------------------------------------------------------------

/// A coordinate change presented in the FOOO dialect: a group-invariant
/// subset of the source chart, an injective group homomorphism, and an
/// equivariant map with first-order data, all given as single maps rather
/// than a bibundle.
#[derive(Clone, Debug)]
pub struct FoooChange {
    pub source: DiscreteChart,
    pub target: DiscreteChart,
    /// Sorted, source-group-invariant subset of source points (`V_ij`).
    pub v_ij: Vec<usize>,
    /// Injective homomorphism `h: Γ_i → Γ_j`.
    pub h: GroupHom,
    /// `φ_ij` on `v_ij`, indexed parallel to `v_ij`.
    pub phi0: Vec<usize>,
    /// `dφ_ij` per `v_ij` point.
    pub dphi0: Vec<RationalMatrix>,
    /// `φ̂_ij` per `v_ij` point.
    pub phihat0: Vec<RationalMatrix>,
}

fn fooo_structural_check(ch: &FoooChange) -> Result<(), String> {
    let ci = &ch.source;
    let cj = &ch.target;
    if ci.footprint_size != cj.footprint_size {
        return Err("charts live over different footprint sets".into());
    }
    if ch.h.source != ci.group || ch.h.target != cj.group {
        return Err("h is not a homomorphism between the chart groups".into());
    }
    if !ch.h.is_injective() {
        return Err("h is not injective".into());
    }
    let mut sorted = ch.v_ij.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted != ch.v_ij {
        return Err("domain point list is not sorted and duplicate-free".into());
    }
    if ch.v_ij.iter().any(|&v| v >= ci.n_points) {
        return Err("domain point outside the source chart".into());
    }
    if ch.phi0.len() != ch.v_ij.len()
        || ch.dphi0.len() != ch.v_ij.len()
        || ch.phihat0.len() != ch.v_ij.len()
    {
        return Err("map data not indexed parallel to the domain".into());
    }
    if ch.phi0.iter().any(|&w| w >= cj.n_points) {
        return Err("φ maps outside the target chart".into());
    }
    for g in 0..ci.group.order() {
        for &v in &ch.v_ij {
            if !ch.v_ij.contains(&ci.action[g][v]) {
                return Err("domain is not group-invariant".into());
            }
        }
    }
    Ok(())
}

/// The bibundle `P = V_ij × Γ_j` of a FOOO-dialect change, as a chart
/// morphism over the common footprint identity. The result is validated;
/// no coordinate-change conditions are imposed here.
pub fn fooo_bibundle(ch: &FoooChange) -> Result<ChartMorphism, KchartError> {
    fooo_structural_check(ch).map_err(KchartError::NotAFoooChange)?;
    let ci = &ch.source;
    let cj = &ch.target;
    let oi = ci.group.order();
    let oj = cj.group.order();
    let pos: HashMap<usize, usize> = ch.v_ij.iter().enumerate().map(|(a, &v)| (v, a)).collect();
    let n_p = ch.v_ij.len() * oj;
    let idx = |a: usize, g: usize| a * oj + g;
    let mut act_i = vec![vec![0; n_p]; oi];
    let mut act_j = vec![vec![0; n_p]; oj];
    let mut pi = vec![0; n_p];
    let mut phi = vec![0; n_p];
    let mut dphi = Vec::with_capacity(n_p);
    let mut phihat = Vec::with_capacity(n_p);
    for (a, &v) in ch.v_ij.iter().enumerate() {
        let w0 = ch.phi0[a];
        for g in 0..oj {
            let p = idx(a, g);
            pi[p] = v;
            phi[p] = cj.action[g][w0];
            dphi.push(cj.dgamma[g][w0].mul(&ch.dphi0[a]));
            phihat.push(cj.egamma[g][w0].mul(&ch.phihat0[a]));
            for g1 in 0..oi {
                act_i[g1][p] = idx(
                    pos[&ci.action[g1][v]],
                    cj.group.mul(g, cj.group.inv(ch.h.apply(g1))),
                );
            }
            for g2 in 0..oj {
                act_j[g2][p] = idx(a, cj.group.mul(g2, g));
            }
        }
    }
    let im_j = cj.footprint_image();
    let domain: BTreeSet<usize> = ch
        .v_ij
        .iter()
        .filter_map(|v| ci.psi.get(v))
        .copied()
        .filter(|x| im_j.contains(x))
        .collect();
    let m = ChartMorphism {
        source: ci.clone(),
        target: cj.clone(),
        f_map: (0..ci.footprint_size).collect(),
        domain,
        n_p,
        act_i,
        act_j,
        pi,
        phi,
        dphi,
        phihat,
    };
    let rep = validate_morphism(&m);
    if !rep.is_ok() {
        return Err(KchartError::NotAFoooChange(rep.violations.join("; ")));
    }
    Ok(m)
}

/// Import a FOOO-dialect change: builds the bibundle and additionally
/// requires that `h` restricts to an isomorphism of stabilizers at every
/// zero point of the domain. Effectiveness of the two chart actions is
/// reported as warnings, never as an error.
pub fn import_fooo_change(
    ch: &FoooChange,
) -> Result<(ChartMorphism, Vec<String>), KchartError> {
    let m = fooo_bibundle(ch)?;
    let ci = &ch.source;
    let cj = &ch.target;
    for (a, &v) in ch.v_ij.iter().enumerate() {
        if !ci.psi.contains_key(&v) {
            continue;
        }
        let w = ch.phi0[a];
        let src_stab: Vec<usize> = (0..ci.group.order())
            .filter(|&g| ci.action[g][v] == v)
            .collect();
        let tgt_stab: BTreeSet<usize> = (0..cj.group.order())
            .filter(|&g| cj.action[g][w] == w)
            .collect();
        let image: BTreeSet<usize> = src_stab.iter().map(|&g| ch.h.apply(g)).collect();
        if image != tgt_stab || image.len() != src_stab.len() {
            return Err(KchartError::NotAFoooChange(format!(
                "h does not restrict to a stabilizer isomorphism at point {v}"
            )));
        }
    }
    let mut warnings = Vec::new();
    for (label, c) in [("source", ci), ("target", cj)] {
        for g in 1..c.group.order() {
            let fixes_all = (0..c.n_points).all(|v| {
                c.action[g][v] == v
                    && c.dgamma[g][v] == RationalMatrix::identity(c.t_dim[v])
                    && c.egamma[g][v] == RationalMatrix::identity(c.e_dim[v])
            });
            if fixes_all {
                warnings.push(format!("{label} chart action is not effective (element {g})"));
            }
        }
    }
    Ok((m, warnings))
}

/// The `γ`-translate of a FOOO-dialect change: `φ ↦ γ·φ` with the
/// homomorphism conjugated by `γ`.
pub fn fooo_translate(ch: &FoooChange, gamma: usize) -> Result<FoooChange, KchartError> {
    fooo_structural_check(ch).map_err(KchartError::NotAFoooChange)?;
    let cj = &ch.target;
    let conj: Vec<usize> = (0..ch.source.group.order())
        .map(|g| {
            cj.group
                .mul(gamma, cj.group.mul(ch.h.apply(g), cj.group.inv(gamma)))
        })
        .collect();
    let h = GroupHom::new(ch.source.group.clone(), cj.group.clone(), conj)
        .map_err(|e| KchartError::NotAFoooChange(format!("conjugated homomorphism: {e}")))?;
    Ok(FoooChange {
        source: ch.source.clone(),
        target: ch.target.clone(),
        v_ij: ch.v_ij.clone(),
        h,
        phi0: ch.phi0.iter().map(|&w| cj.action[gamma][w]).collect(),
        dphi0: ch
            .phi0
            .iter()
            .zip(&ch.dphi0)
            .map(|(&w, d)| cj.dgamma[gamma][w].mul(d))
            .collect(),
        phihat0: ch
            .phi0
            .iter()
            .zip(&ch.phihat0)
            .map(|(&w, e)| cj.egamma[gamma][w].mul(e))
            .collect(),
    })
}

/// The 2-morphism from the `γ`-translate of a change to the change itself:
/// `λ: (v, γ′) ↦ (v, γ′·γ)` with zero correction.
pub fn fooo_gamma_cell(ch: &FoooChange, gamma: usize) -> Result<ChartTwoMorphism, KchartError> {
    let translated = fooo_translate(ch, gamma)?;
    let src = fooo_bibundle(&translated)?;
    let tgt = fooo_bibundle(ch)?;
    let cj = &ch.target;
    let oj = cj.group.order();
    let mut lambda = BTreeMap::new();
    let mut lambda_hat = BTreeMap::new();
    for p in src.p_dot() {
        let a = p / oj;
        let g = p % oj;
        let out = a * oj + cj.group.mul(g, gamma);
        lambda.insert(p, out);
        lambda_hat.insert(
            p,
            RationalMatrix::zero(tgt.target.t_dim[tgt.phi[out]], tgt.source.e_dim[tgt.pi[out]]),
        );
    }
    let cell = ChartTwoMorphism {
        source: src,
        target: tgt,
        lambda,
        lambda_hat,
    };
    let rep = validate_two_morphism(&cell);
    if !rep.is_ok() {
        return Err(KchartError::NotAFoooChange(rep.violations.join("; ")));
    }
    Ok(cell)
}

/// The comparison 2-morphism between the composite of two FOOO-dialect
/// changes and a direct change, mediated by a group element `γ^α` with
/// `φ_rq ∘ φ_qp = γ^α · φ_rp` and `h_rq ∘ h_qp = γ^α · h_rp · (γ^α)⁻¹`:
/// `λ([(v, γ₁), (w, γ₂)]) = (v, γ₂ · h_rq(γ₁) · γ^α)`, zero correction.
pub fn fooo_composition_cell(
    qp: &FoooChange,
    rq: &FoooChange,
    rp: &FoooChange,
    gamma_alpha: usize,
) -> Result<ChartTwoMorphism, KchartError> {
    let m_qp = fooo_bibundle(qp)?;
    let m_rq = fooo_bibundle(rq)?;
    let m_rp = fooo_bibundle(rp)?;
    let comp = compose_with_maps(&m_rq, &m_qp)?;
    let tgt = restrict_morphism(&m_rp, &comp.result.domain)?;
    let oq = rq.source.group.order();
    let or = rp.target.group.order();
    let pos_rp: HashMap<usize, usize> =
        rp.v_ij.iter().enumerate().map(|(a, &v)| (v, a)).collect();
    let gr = &rp.target.group;
    let mut lambda = BTreeMap::new();
    let mut lambda_hat = BTreeMap::new();
    for p in comp.result.p_dot() {
        let (pf, pg) = comp.reps[p];
        let a1 = pf / oq;
        let g1 = pf % oq;
        let g2 = pg % or;
        let v = qp.v_ij[a1];
        let a_out = *pos_rp.get(&v).ok_or_else(|| {
            KchartError::NotAFoooChange(format!(
                "composite domain point {v} missing from the direct change"
            ))
        })?;
        let g_out = gr.mul(g2, gr.mul(rq.h.apply(g1), gamma_alpha));
        let out = a_out * or + g_out;
        lambda.insert(p, out);
        lambda_hat.insert(
            p,
            RationalMatrix::zero(tgt.target.t_dim[tgt.phi[out]], tgt.source.e_dim[tgt.pi[out]]),
        );
    }
    let cell = ChartTwoMorphism {
        source: comp.result,
        target: tgt,
        lambda,
        lambda_hat,
    };
    let rep = validate_two_morphism(&cell);
    if !rep.is_ok() {
        return Err(KchartError::NotAFoooChange(rep.violations.join("; ")));
    }
    Ok(cell)
}

/// A coordinate change presented in the MW dialect: a covering of part of
/// the target chart over the source chart, with a surjective homomorphism
/// of groups in the opposite direction.
#[derive(Clone, Debug)]
pub struct MwChange {
    pub source: DiscreteChart,
    pub target: DiscreteChart,
    /// Sorted, target-group-invariant subset of target points (`Ṽ`).
    pub v_tilde: Vec<usize>,
    /// Covering map `ϖ: Ṽ → V_B`, indexed parallel to `v_tilde`.
    pub varpi: Vec<usize>,
    /// `dϖ` per `v_tilde` point; must be invertible.
    pub dvarpi: Vec<RationalMatrix>,
    /// `ê|_v : E_B|_{ϖ(v)} → E_C|_v` per `v_tilde` point.
    pub ehat: Vec<RationalMatrix>,
    /// Surjective homomorphism `ρ: Γ_C → Γ_B`.
    pub rho: GroupHom,
}

fn mw_structural_check(ch: &MwChange) -> Result<(), String> {
    let cb = &ch.source;
    let cc = &ch.target;
    if cb.footprint_size != cc.footprint_size {
        return Err("charts live over different footprint sets".into());
    }
    if ch.rho.source != cc.group || ch.rho.target != cb.group {
        return Err("ρ is not a homomorphism from the target group to the source group".into());
    }
    let image: BTreeSet<usize> = (0..cc.group.order()).map(|g| ch.rho.apply(g)).collect();
    if image.len() != cb.group.order() {
        return Err("ρ is not surjective".into());
    }
    let mut sorted = ch.v_tilde.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted != ch.v_tilde {
        return Err("covering point list is not sorted and duplicate-free".into());
    }
    if ch.v_tilde.iter().any(|&v| v >= cc.n_points) {
        return Err("covering point outside the target chart".into());
    }
    if ch.varpi.len() != ch.v_tilde.len()
        || ch.dvarpi.len() != ch.v_tilde.len()
        || ch.ehat.len() != ch.v_tilde.len()
    {
        return Err("covering data not indexed parallel to the point list".into());
    }
    if ch.varpi.iter().any(|&u| u >= cb.n_points) {
        return Err("ϖ maps outside the source chart".into());
    }
    let pos: HashMap<usize, usize> = ch.v_tilde.iter().enumerate().map(|(a, &v)| (v, a)).collect();
    for g in 0..cc.group.order() {
        for (a, &v) in ch.v_tilde.iter().enumerate() {
            let gv = cc.action[g][v];
            let Some(&ga) = pos.get(&gv) else {
                return Err("covering domain is not group-invariant".into());
            };
            if ch.varpi[ga] != cb.action[ch.rho.apply(g)][ch.varpi[a]] {
                return Err("ϖ is not ρ-equivariant".into());
            }
        }
    }
    // deck condition: the kernel of ρ acts freely and transitively on every
    // ϖ-fibre
    let kernel: Vec<usize> = (0..cc.group.order())
        .filter(|&g| ch.rho.apply(g) == cb.group.identity())
        .collect();
    let mut fibres: HashMap<usize, Vec<usize>> = HashMap::new();
    for (a, &u) in ch.varpi.iter().enumerate() {
        fibres.entry(u).or_default().push(ch.v_tilde[a]);
    }
    for (u, fibre) in &fibres {
        if fibre.len() != kernel.len() {
            return Err(format!("ϖ-fibre over {u} is not a deck-group torsor"));
        }
        let base = fibre[0];
        let orbit: BTreeSet<usize> = kernel.iter().map(|&d| cc.action[d][base]).collect();
        if orbit.len() != kernel.len() || !fibre.iter().all(|v| orbit.contains(v)) {
            return Err(format!("deck group does not act simply transitively over {u}"));
        }
    }
    Ok(())
}

/// The bibundle `P = Ṽ × Γ_B` of an MW-dialect change, as a chart morphism
/// over the common footprint identity.
pub fn mw_bibundle(ch: &MwChange) -> Result<ChartMorphism, KchartError> {
    mw_structural_check(ch).map_err(KchartError::NotAnMwChange)?;
    let cb = &ch.source;
    let cc = &ch.target;
    let ob = cb.group.order();
    let oc = cc.group.order();
    let pos: HashMap<usize, usize> = ch.v_tilde.iter().enumerate().map(|(a, &v)| (v, a)).collect();
    let n_p = ch.v_tilde.len() * ob;
    let idx = |a: usize, g: usize| a * ob + g;
    let mut act_i = vec![vec![0; n_p]; ob];
    let mut act_j = vec![vec![0; n_p]; oc];
    let mut pi = vec![0; n_p];
    let mut phi = vec![0; n_p];
    let mut dphi = Vec::with_capacity(n_p);
    let mut phihat = Vec::with_capacity(n_p);
    for (a, &v) in ch.v_tilde.iter().enumerate() {
        let u0 = ch.varpi[a];
        let inv_dvarpi = ch.dvarpi[a]
            .solve(&RationalMatrix::identity(ch.dvarpi[a].rows()))
            .filter(|m| ch.dvarpi[a].mul(m) == RationalMatrix::identity(ch.dvarpi[a].rows()))
            .ok_or_else(|| {
                KchartError::NotAnMwChange(format!("dϖ at covering point {v} is not invertible"))
            })?;
        for g in 0..ob {
            let p = idx(a, g);
            let u = cb.action[g][u0];
            pi[p] = u;
            phi[p] = v;
            let back = cb.group.inv(g);
            dphi.push(inv_dvarpi.mul(&cb.dgamma[back][u]));
            phihat.push(ch.ehat[a].mul(&cb.egamma[back][u]));
            for gb in 0..ob {
                act_i[gb][p] = idx(a, cb.group.mul(gb, g));
            }
            for gc in 0..oc {
                act_j[gc][p] = idx(
                    pos[&cc.action[gc][v]],
                    cb.group.mul(g, cb.group.inv(ch.rho.apply(gc))),
                );
            }
        }
    }
    let im_b = cb.footprint_image();
    let domain: BTreeSet<usize> = ch
        .v_tilde
        .iter()
        .filter_map(|v| cc.psi.get(v))
        .copied()
        .filter(|x| im_b.contains(x))
        .collect();
    let m = ChartMorphism {
        source: cb.clone(),
        target: cc.clone(),
        f_map: (0..cb.footprint_size).collect(),
        domain,
        n_p,
        act_i,
        act_j,
        pi,
        phi,
        dphi,
        phihat,
    };
    let rep = validate_morphism(&m);
    if !rep.is_ok() {
        return Err(KchartError::NotAnMwChange(rep.violations.join("; ")));
    }
    Ok(m)
}

/// Import an MW-dialect change: builds the bibundle and requires that it
/// is a coordinate change over its domain.
pub fn import_mw_change(ch: &MwChange) -> Result<ChartMorphism, KchartError> {
    let m = mw_bibundle(ch)?;
    let cc = is_coordinate_change(&m)?;
    if !cc.ok {
        return Err(KchartError::NotAnMwChange(
            "bibundle fails the coordinate-change conditions".into(),
        ));
    }
    Ok(m)
}

/// The comparison 2-morphism for a nested triple of MW-dialect changes with
/// `ϖ_BC ∘ ϖ_CD = ϖ_BD`: `λ([(v_C, γ_B), (v_D, γ_C)]) = (v_D, γ_B · ρ_BC(γ_C))`,
/// zero correction.
pub fn mw_triple_cell(
    bc: &MwChange,
    cd: &MwChange,
    bd: &MwChange,
) -> Result<ChartTwoMorphism, KchartError> {
    let m_bc = mw_bibundle(bc)?;
    let m_cd = mw_bibundle(cd)?;
    let m_bd = mw_bibundle(bd)?;
    let comp = compose_with_maps(&m_cd, &m_bc)?;
    let tgt = restrict_morphism(&m_bd, &comp.result.domain)?;
    let ob = bc.source.group.order();
    let oc = cd.source.group.order();
    let gb = &bc.source.group;
    let pos_bd: HashMap<usize, usize> =
        bd.v_tilde.iter().enumerate().map(|(a, &v)| (v, a)).collect();
    let mut lambda = BTreeMap::new();
    let mut lambda_hat = BTreeMap::new();
    for p in comp.result.p_dot() {
        let (pf, pg) = comp.reps[p];
        let g_b = pf % ob;
        let a2 = pg / oc;
        let g_c = pg % oc;
        let v_d = cd.v_tilde[a2];
        let a_out = *pos_bd.get(&v_d).ok_or_else(|| {
            KchartError::NotAnMwChange(format!(
                "composite covering point {v_d} missing from the direct change"
            ))
        })?;
        let out = a_out * ob + gb.mul(g_b, bc.rho.apply(g_c));
        lambda.insert(p, out);
        lambda_hat.insert(
            p,
            RationalMatrix::zero(tgt.target.t_dim[tgt.phi[out]], tgt.source.e_dim[tgt.pi[out]]),
        );
    }
    let cell = ChartTwoMorphism {
        source: comp.result,
        target: tgt,
        lambda,
        lambda_hat,
    };
    let rep = validate_two_morphism(&cell);
    if !rep.is_ok() {
        return Err(KchartError::NotAnMwChange(rep.violations.join("; ")));
    }
    Ok(cell)
}
