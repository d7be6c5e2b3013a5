//! A desk-scale polytope chain complex: generators `[V, n, s, t]` where `V`
//! is a disjoint union of oriented convex polytopes with rational vertices,
//! `n` is a stabilization index, and `s : V -> Q^n`, `t : V -> Q^m` are
//! affine maps.  The degree of a generator is `dim V - n`.
//!
//! Chains are finite formal sums of generators over the integers or the
//! rationals, held in a deterministic normal form:
//!
//! * every generator is split into single-polytope pieces, each put into
//!   canonical affine coordinates determined by its vertex order;
//! * orientation signs are folded into coefficients (a generator with
//!   reversed orientation carries the negated coefficient);
//! * prisms whose `s` has a coordinate equal to the projection onto the
//!   prism direction are destabilized, with the sign `(-1)^{n-i}` attached
//!   to removing the coordinate at position `i`;
//! * identical pieces are merged and zero coefficients dropped.
//!
//! The boundary operator enumerates facets with the outward-normal-first
//! induced orientation and restricts `s` and `t`; pushforward along an
//! affine map of the target post-composes `t`.  Both commute
//! (`f_* . boundary = boundary . f_*`) and `boundary . boundary = 0` on
//! normalized chains.
//!
//! Generators are identified only up to vertex-order-preserving affine
//! bijections; this is a decidable under-approximation of the full
//! equivalence of quadruples, sufficient for the cancellations above
//! because faces inherit their vertex order from the original polytope.

use crate::exactlin::{rat_i, Rat, RationalMatrix};
use num::Zero;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum MchainError {
    /// A polytope complex offered as a fundamental cycle has a nonzero
    /// boundary.
    #[error("complex is not closed: {0}")]
    NotClosed(String),
    /// Malformed input data (dimension mismatches, bad signs, non-integer
    /// coefficients in integer mode, ...).
    #[error("invalid chain data: {0}")]
    Invalid(String),
}

/// An affine map `x -> matrix * x + offset` between rational affine spaces.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AffineMap {
    pub matrix: RationalMatrix,
    pub offset: Vec<Rat>,
}

impl AffineMap {
    pub fn new(matrix: RationalMatrix, offset: Vec<Rat>) -> Result<Self, MchainError> {
        if matrix.rows() != offset.len() {
            return Err(MchainError::Invalid(format!(
                "affine map offset has length {} but the matrix has {} rows",
                offset.len(),
                matrix.rows()
            )));
        }
        Ok(AffineMap { matrix, offset })
    }

    /// The identity map of `Q^d`.
    pub fn identity(d: usize) -> Self {
        AffineMap {
            matrix: RationalMatrix::identity(d),
            offset: vec![rat_i(0); d],
        }
    }

    /// The constant map `Q^in_dim -> Q^{value.len()}`.
    pub fn constant(in_dim: usize, value: Vec<Rat>) -> Self {
        AffineMap {
            matrix: RationalMatrix::zero(value.len(), in_dim),
            offset: value,
        }
    }

    /// The unique map `Q^in_dim -> Q^0`.
    pub fn to_point(in_dim: usize) -> Self {
        AffineMap {
            matrix: RationalMatrix::zero(0, in_dim),
            offset: Vec::new(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn apply(&self, x: &[Rat]) -> Vec<Rat> {
        let mut out = self.matrix.apply(x);
        for (o, c) in out.iter_mut().zip(self.offset.iter()) {
            *o += c.clone();
        }
        out
    }

    /// The composite `self . inner`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        AffineMap {
            matrix: self.matrix.mul(&inner.matrix),
            offset: self.apply(&inner.offset),
        }
    }
}

/// One oriented convex polytope with its affine `s` and `t` maps.  The
/// polytope is the convex hull of the ordered vertex list; `sign` (`+1` or
/// `-1`) orients it relative to the frame obtained by scanning the vertex
/// list in order and keeping each direction that increases the rank.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PolytopeComponent {
    pub vertices: Vec<Vec<Rat>>,
    pub sign: i64,
    pub s: AffineMap,
    pub t: AffineMap,
}

/// A generator `[V, n, s, t]`: a disjoint union of oriented polytopes with
/// per-component affine maps, and a shared stabilization index `n`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PolytopeGenerator {
    pub n: usize,
    pub components: Vec<PolytopeComponent>,
}

impl PolytopeComponent {
    fn ambient_dim(&self) -> usize {
        self.vertices.first().map_or(0, |v| v.len())
    }

    /// Dimension of the affine hull of the vertex list.
    fn intrinsic_dim(&self) -> usize {
        order_frame(&self.vertices).len()
    }
}

impl PolytopeGenerator {
    /// Dimension of `V` (shared by all components), if there are any.
    pub fn dim(&self) -> Option<usize> {
        self.components.first().map(|c| c.intrinsic_dim())
    }

    /// The degree `dim V - n`.
    pub fn degree(&self) -> Option<i64> {
        self.dim().map(|d| d as i64 - self.n as i64)
    }
}

/// A finite formal sum of generators with integer or rational coefficients.
/// `terms` of a normalized chain are canonical single-component generators
/// with `sign = +1`, sorted, with nonzero coefficients.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MChain {
    /// `true`: rational coefficients; `false`: integer coefficients.
    pub rational: bool,
    pub terms: Vec<(Rat, PolytopeGenerator)>,
}

impl MChain {
    pub fn new(rational: bool, terms: Vec<(Rat, PolytopeGenerator)>) -> Result<Self, MchainError> {
        let chain = MChain { rational, terms };
        chain.validate()?;
        Ok(chain)
    }

    pub fn zero(rational: bool) -> Self {
        MChain {
            rational,
            terms: Vec::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Common degree of all terms, if the chain is homogeneous and nonzero.
    pub fn degree(&self) -> Option<i64> {
        let mut deg = None;
        for (_, g) in &self.terms {
            let d = g.degree()?;
            match deg {
                None => deg = Some(d),
                Some(prev) if prev != d => return None,
                Some(_) => {}
            }
        }
        deg
    }

    /// Common target dimension of all components, if consistent.
    fn target_dim(&self) -> Option<usize> {
        self.terms
            .iter()
            .flat_map(|(_, g)| g.components.iter())
            .map(|c| c.t.out_dim())
            .next()
    }

    pub fn scale(&self, a: &Rat) -> MChain {
        let chain = MChain {
            rational: self.rational,
            terms: self
                .terms
                .iter()
                .map(|(c, g)| (c * a, g.clone()))
                .collect(),
        };
        normalize(&chain)
    }

    pub fn add(&self, other: &MChain) -> Result<MChain, MchainError> {
        if self.rational != other.rational {
            return Err(MchainError::Invalid(
                "cannot add chains over different coefficient rings".into(),
            ));
        }
        if let (Some(a), Some(b)) = (self.target_dim(), other.target_dim()) {
            if a != b {
                return Err(MchainError::Invalid(format!(
                    "cannot add chains with target dimensions {a} and {b}"
                )));
            }
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(normalize(&MChain {
            rational: self.rational,
            terms,
        }))
    }

    fn validate(&self) -> Result<(), MchainError> {
        let mut target = None;
        for (idx, (coeff, gen)) in self.terms.iter().enumerate() {
            if !self.rational && !coeff.is_integer() {
                return Err(MchainError::Invalid(format!(
                    "term {idx}: non-integer coefficient {coeff} in an integer chain"
                )));
            }
            let mut dim = None;
            for (cdx, comp) in gen.components.iter().enumerate() {
                let here = format!("term {idx}, component {cdx}");
                if comp.vertices.is_empty() {
                    return Err(MchainError::Invalid(format!("{here}: empty vertex list")));
                }
                let amb = comp.ambient_dim();
                if comp.vertices.iter().any(|v| v.len() != amb) {
                    return Err(MchainError::Invalid(format!(
                        "{here}: vertices of unequal ambient dimension"
                    )));
                }
                if comp.sign != 1 && comp.sign != -1 {
                    return Err(MchainError::Invalid(format!(
                        "{here}: orientation sign {} is not +1 or -1",
                        comp.sign
                    )));
                }
                if comp.s.in_dim() != amb || comp.t.in_dim() != amb {
                    return Err(MchainError::Invalid(format!(
                        "{here}: s or t input dimension does not match the ambient dimension {amb}"
                    )));
                }
                if comp.s.out_dim() != gen.n {
                    return Err(MchainError::Invalid(format!(
                        "{here}: s has {} coordinates but the stabilization index is {}",
                        comp.s.out_dim(),
                        gen.n
                    )));
                }
                let d = comp.intrinsic_dim();
                match dim {
                    None => dim = Some(d),
                    Some(prev) if prev != d => {
                        return Err(MchainError::Invalid(format!(
                            "{here}: component dimension {d} differs from {prev}"
                        )));
                    }
                    Some(_) => {}
                }
                match target {
                    None => target = Some(comp.t.out_dim()),
                    Some(prev) if prev != comp.t.out_dim() => {
                        return Err(MchainError::Invalid(format!(
                            "{here}: target dimension {} differs from {prev}",
                            comp.t.out_dim()
                        )));
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}

/// A single polytope in canonical affine coordinates: the first vertex is
/// the origin and the order-frame directions are the standard basis, so two
/// components related by a vertex-order-preserving affine bijection have
/// identical canonical data.  The orientation sign is folded into the
/// coefficient of the enclosing term.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
struct CanonicalGen {
    n: usize,
    vertices: Vec<Vec<Rat>>,
    s: AffineMap,
    t: AffineMap,
}

fn dot(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn column(v: &[Rat]) -> RationalMatrix {
    let mut m = RationalMatrix::zero(v.len(), 1);
    for (i, x) in v.iter().enumerate() {
        m.set(i, 0, x.clone());
    }
    m
}

fn sub(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
}

/// Indices `j > 0` of the vertices whose directions from vertex 0 are kept
/// by the greedy rank scan; their count is the intrinsic dimension.
fn order_frame(vertices: &[Vec<Rat>]) -> Vec<usize> {
    let amb = vertices.first().map_or(0, |v| v.len());
    let mut frame = RationalMatrix::zero(amb, 0);
    let mut picked = Vec::new();
    for j in 1..vertices.len() {
        let dir = column(&sub(&vertices[j], &vertices[0]));
        let cand = frame.hstack(&dir);
        if cand.rank() > picked.len() {
            frame = cand;
            picked.push(j);
        }
    }
    picked
}

/// Rewrite a component in canonical coordinates.  Returns the coefficient
/// factor carrying the orientation sign together with the canonical data.
fn canonicalize(comp: &PolytopeComponent, n: usize) -> (Rat, CanonicalGen) {
    let picked = order_frame(&comp.vertices);
    let d = picked.len();
    let amb = comp.ambient_dim();
    let v0 = &comp.vertices[0];
    let mut frame = RationalMatrix::zero(amb, d);
    for (k, &j) in picked.iter().enumerate() {
        for (i, x) in sub(&comp.vertices[j], v0).into_iter().enumerate() {
            frame.set(i, k, x);
        }
    }
    let vertices: Vec<Vec<Rat>> = comp
        .vertices
        .iter()
        .map(|v| {
            let rhs = column(&sub(v, v0));
            let y = frame
                .solve(&rhs)
                .expect("vertex lies in the affine hull of the order frame");
            debug_assert!(frame.mul(&y) == rhs);
            (0..d).map(|i| y.get(i, 0).clone()).collect()
        })
        .collect();
    let s = AffineMap {
        matrix: comp.s.matrix.mul(&frame),
        offset: comp.s.apply(v0),
    };
    let t = AffineMap {
        matrix: comp.t.matrix.mul(&frame),
        offset: comp.t.apply(v0),
    };
    (rat_i(comp.sign), CanonicalGen { n, vertices, s, t })
}

/// Undo one application of the stabilization relation, if possible: find an
/// `s`-coordinate that is the projection onto a prism direction of the
/// polytope, and return the base with the sign `(-1)^{(n-1)-i}` times the
/// orientation comparison between the product frame and the prism frame.
fn destabilize_once(g: &CanonicalGen) -> Option<(Rat, CanonicalGen)> {
    let d = g.vertices.first().map_or(0, |v| v.len());
    if g.n == 0 || d == 0 {
        return None;
    }
    for i in 0..g.n {
        let row: Vec<Rat> = (0..d).map(|j| g.s.matrix.get(i, j).clone()).collect();
        let vals: Vec<Rat> = g
            .vertices
            .iter()
            .map(|v| dot(&row, v) + &g.s.offset[i])
            .collect();
        let mut levels: Vec<Rat> = vals.clone();
        levels.sort();
        levels.dedup();
        if levels.len() != 2 {
            continue;
        }
        let (lo, hi) = (&levels[0], &levels[1]);
        let bottom: Vec<usize> = (0..vals.len()).filter(|&j| &vals[j] == lo).collect();
        let top: Vec<usize> = (0..vals.len()).filter(|&j| &vals[j] == hi).collect();
        if bottom.len() != top.len() {
            continue;
        }
        let min_of = |idx: &[usize]| idx.iter().map(|&j| g.vertices[j].clone()).min().unwrap();
        let shift = sub(&min_of(&top), &min_of(&bottom));
        let mut shifted: Vec<Vec<Rat>> = bottom
            .iter()
            .map(|&j| {
                g.vertices[j]
                    .iter()
                    .zip(shift.iter())
                    .map(|(x, y)| x + y)
                    .collect()
            })
            .collect();
        let mut tops: Vec<Vec<Rat>> = top.iter().map(|&j| g.vertices[j].clone()).collect();
        shifted.sort();
        tops.sort();
        if shifted != tops {
            continue;
        }
        let kills =
            |m: &RationalMatrix, skip: Option<usize>| {
                (0..m.rows()).filter(|&r| Some(r) != skip).all(|r| {
                    (0..d)
                        .map(|j| m.get(r, j) * &shift[j])
                        .sum::<Rat>()
                        .is_zero()
                })
            };
        if !kills(&g.s.matrix, Some(i)) || !kills(&g.t.matrix, None) {
            continue;
        }
        let base_vertices: Vec<Vec<Rat>> = bottom.iter().map(|&j| g.vertices[j].clone()).collect();
        let base_frame = order_frame(&base_vertices);
        if base_frame.len() != d - 1 {
            continue;
        }
        // Orientation of the prism in the product frame (base frame, shift)
        // versus its canonical frame (the standard basis).
        let mut product = RationalMatrix::zero(d, d);
        for (k, &j) in base_frame.iter().enumerate() {
            for (r, x) in sub(&base_vertices[j], &base_vertices[0]).into_iter().enumerate() {
                product.set(r, k, x);
            }
        }
        for (r, x) in shift.iter().enumerate() {
            product.set(r, d - 1, x.clone());
        }
        let orient = product.det_sign() as i64;
        if orient == 0 {
            continue;
        }
        let drop_row = |m: &AffineMap| {
            let mut matrix = RationalMatrix::zero(m.out_dim() - 1, d);
            let mut offset = Vec::new();
            let mut r2 = 0;
            for r in 0..m.out_dim() {
                if r == i {
                    continue;
                }
                for j in 0..d {
                    matrix.set(r2, j, m.matrix.get(r, j).clone());
                }
                offset.push(m.offset[r].clone());
                r2 += 1;
            }
            AffineMap { matrix, offset }
        };
        let base = PolytopeComponent {
            vertices: base_vertices,
            sign: 1,
            s: drop_row(&g.s),
            t: g.t.clone(),
        };
        let (extra, canon) = canonicalize(&base, g.n - 1);
        let relation = if (g.n - 1 - i) % 2 == 0 { 1 } else { -1 };
        return Some((rat_i(orient * relation) * extra, canon));
    }
    None
}

fn canonical_terms(c: &MChain) -> BTreeMap<CanonicalGen, Rat> {
    let mut acc: BTreeMap<CanonicalGen, Rat> = BTreeMap::new();
    for (coeff, gen) in &c.terms {
        for comp in &gen.components {
            let (sign, mut canon) = canonicalize(comp, gen.n);
            let mut total = coeff * &sign;
            while let Some((factor, next)) = destabilize_once(&canon) {
                total *= factor;
                canon = next;
            }
            let slot = acc.entry(canon).or_insert_with(|| rat_i(0));
            *slot += total;
        }
    }
    acc.retain(|_, v| !v.is_zero());
    acc
}

fn from_canonical(rational: bool, acc: BTreeMap<CanonicalGen, Rat>) -> MChain {
    let terms = acc
        .into_iter()
        .map(|(canon, coeff)| {
            let gen = PolytopeGenerator {
                n: canon.n,
                components: vec![PolytopeComponent {
                    vertices: canon.vertices,
                    sign: 1,
                    s: canon.s,
                    t: canon.t,
                }],
            };
            (coeff, gen)
        })
        .collect();
    MChain { rational, terms }
}

/// Deterministic normal form: split into single polytopes, canonicalize,
/// destabilize, merge orientation-reversals with negated coefficients, drop
/// zeros, sort.  Idempotent and linear over the coefficient ring.
pub fn normalize(c: &MChain) -> MChain {
    from_canonical(c.rational, canonical_terms(c))
}

/// All facets of the convex hull of `vertices` (full-dimensional in
/// canonical coordinates), each as the on-facet vertex indices in inherited
/// order together with the outward normal vector.
fn enumerate_facets(vertices: &[Vec<Rat>]) -> Vec<(Vec<usize>, Vec<Rat>)> {
    let d = vertices.first().map_or(0, |v| v.len());
    if d == 0 {
        return Vec::new();
    }
    let n = vertices.len();
    let mut found: BTreeMap<Vec<usize>, Vec<Rat>> = BTreeMap::new();
    for subset in combinations(n, d) {
        let base = &vertices[subset[0]];
        let mut dirs = RationalMatrix::zero(d, d - 1);
        for (k, &j) in subset[1..].iter().enumerate() {
            for (r, x) in sub(&vertices[j], base).into_iter().enumerate() {
                dirs.set(r, k, x);
            }
        }
        if dirs.rank() != d - 1 {
            continue;
        }
        let kernel = dirs.transpose().kernel_basis();
        debug_assert_eq!(kernel.cols(), 1);
        let mut normal: Vec<Rat> = (0..d).map(|r| kernel.get(r, 0).clone()).collect();
        let level = dot(&normal, base);
        let mut above = false;
        let mut below = false;
        for v in vertices {
            match dot(&normal, v).cmp(&level) {
                std::cmp::Ordering::Greater => above = true,
                std::cmp::Ordering::Less => below = true,
                std::cmp::Ordering::Equal => {}
            }
        }
        if above && below {
            continue;
        }
        if above {
            // The polytope lies on the `>= level` side; outward is `-normal`.
            normal = normal.iter().map(|x| -x).collect();
        } else if !below {
            // All vertices on the hyperplane: not full-dimensional.
            continue;
        }
        let level = if above { -level } else { level };
        let on_facet: Vec<usize> = (0..n)
            .filter(|&j| dot(&normal, &vertices[j]) == level)
            .collect();
        found.entry(on_facet).or_insert(normal);
    }
    found.into_iter().collect()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// The boundary operator: `[V, n, s, t] -> [facets of V, n, s, t]` with the
/// outward-normal-first induced orientation.  Lowers the degree by one;
/// applying it twice gives zero.
pub fn boundary(c: &MChain) -> MChain {
    let nc = normalize(c);
    let mut terms: Vec<(Rat, PolytopeGenerator)> = Vec::new();
    for (coeff, gen) in &nc.terms {
        let comp = &gen.components[0];
        for (facet, normal) in enumerate_facets(&comp.vertices) {
            let facet_vertices: Vec<Vec<Rat>> =
                facet.iter().map(|&j| comp.vertices[j].clone()).collect();
            let frame = order_frame(&facet_vertices);
            let d = comp.ambient_dim();
            // Outward-normal-first: compare (normal, facet frame) with the
            // positive frame of the parent.
            let mut m = RationalMatrix::zero(d, d);
            for (r, x) in normal.iter().enumerate() {
                m.set(r, 0, x.clone());
            }
            for (k, &j) in frame.iter().enumerate() {
                for (r, x) in sub(&facet_vertices[j], &facet_vertices[0])
                    .into_iter()
                    .enumerate()
                {
                    m.set(r, k + 1, x);
                }
            }
            let sign = m.det_sign() as i64;
            debug_assert!(sign != 0);
            terms.push((
                coeff.clone(),
                PolytopeGenerator {
                    n: gen.n,
                    components: vec![PolytopeComponent {
                        vertices: facet_vertices,
                        sign,
                        s: comp.s.clone(),
                        t: comp.t.clone(),
                    }],
                },
            ));
        }
    }
    normalize(&MChain {
        rational: nc.rational,
        terms,
    })
}

/// Pushforward along an affine map of the target: post-compose `t`.
/// A chain map: it commutes with [`boundary`].
pub fn pushforward(f: &AffineMap, c: &MChain) -> Result<MChain, MchainError> {
    if let Some(m) = c.target_dim() {
        if f.in_dim() != m {
            return Err(MchainError::Invalid(format!(
                "pushforward map expects input dimension {}, chain target has dimension {m}",
                f.in_dim()
            )));
        }
    }
    let terms = c
        .terms
        .iter()
        .map(|(coeff, gen)| {
            let components = gen
                .components
                .iter()
                .map(|comp| PolytopeComponent {
                    vertices: comp.vertices.clone(),
                    sign: comp.sign,
                    s: comp.s.clone(),
                    t: f.compose(&comp.t),
                })
                .collect();
            (
                coeff.clone(),
                PolytopeGenerator {
                    n: gen.n,
                    components,
                },
            )
        })
        .collect();
    Ok(normalize(&MChain {
        rational: c.rational,
        terms,
    }))
}

/// One application of the stabilization relation: cross with the interval
/// `[-1, 1]` in a fresh last coordinate and insert its projection as the
/// `s`-coordinate at position `i` (`0 <= i <= n`).  In the chain groups,
/// `[g] = (-1)^{n-i} [stabilize(g, i)]`.
pub fn stabilize(g: &PolytopeGenerator, i: usize) -> Result<PolytopeGenerator, MchainError> {
    if i > g.n {
        return Err(MchainError::Invalid(format!(
            "stabilization position {i} exceeds the stabilization index {}",
            g.n
        )));
    }
    let components = g
        .components
        .iter()
        .map(|comp| {
            let amb = comp.ambient_dim();
            let extend = |v: &[Rat], last: i64| {
                let mut w = v.to_vec();
                w.push(rat_i(last));
                w
            };
            let mut vertices: Vec<Vec<Rat>> =
                comp.vertices.iter().map(|v| extend(v, -1)).collect();
            vertices.extend(comp.vertices.iter().map(|v| extend(v, 1)));
            let mut s_matrix = RationalMatrix::zero(g.n + 1, amb + 1);
            let mut s_offset = Vec::new();
            for r in 0..=g.n {
                if r == i {
                    s_matrix.set(r, amb, rat_i(1));
                    s_offset.push(rat_i(0));
                    continue;
                }
                let old = if r < i { r } else { r - 1 };
                for j in 0..amb {
                    s_matrix.set(r, j, comp.s.matrix.get(old, j).clone());
                }
                s_offset.push(comp.s.offset[old].clone());
            }
            PolytopeComponent {
                vertices,
                sign: comp.sign,
                s: AffineMap {
                    matrix: s_matrix,
                    offset: s_offset,
                },
                t: AffineMap {
                    matrix: comp.t.matrix.hstack(&RationalMatrix::zero(comp.t.out_dim(), 1)),
                    offset: comp.t.offset.clone(),
                },
            }
        })
        .collect();
    Ok(PolytopeGenerator {
        n: g.n + 1,
        components,
    })
}

/// The fundamental cycle `[Y, 0, 0, id]` of a closed oriented polytope
/// complex, given as pieces `(vertex list, orientation sign)` in a common
/// ambient space.  Errors with [`MchainError::NotClosed`] if the facets of
/// the pieces do not cancel in pairs.
pub fn fundamental_cycle(
    pieces: &[(Vec<Vec<Rat>>, i64)],
    rational: bool,
) -> Result<MChain, MchainError> {
    if pieces.is_empty() {
        return Err(MchainError::Invalid(
            "a fundamental cycle needs at least one piece".into(),
        ));
    }
    let amb = pieces[0]
        .0
        .first()
        .map_or(0, |v| v.len());
    let components = pieces
        .iter()
        .map(|(vertices, sign)| PolytopeComponent {
            vertices: vertices.clone(),
            sign: *sign,
            s: AffineMap::to_point(amb),
            t: AffineMap::identity(amb),
        })
        .collect();
    let gen = PolytopeGenerator { n: 0, components };
    let chain = MChain::new(rational, vec![(rat_i(1), gen)])?;
    let bd = boundary(&chain);
    if !bd.is_zero() {
        return Err(MchainError::NotClosed(format!(
            "boundary has {} uncancelled facet terms",
            bd.terms.len()
        )));
    }
    Ok(normalize(&chain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactlin::rat;

    fn verts(rows: &[&[i64]]) -> Vec<Vec<Rat>> {
        rows.iter()
            .map(|r| r.iter().map(|&x| rat_i(x)).collect())
            .collect()
    }

    /// The unit interval `[0, 1] in Q^1` with `n = 0` and `t` the inclusion.
    fn interval_gen() -> PolytopeGenerator {
        PolytopeGenerator {
            n: 0,
            components: vec![PolytopeComponent {
                vertices: verts(&[&[0], &[1]]),
                sign: 1,
                s: AffineMap::to_point(1),
                t: AffineMap::identity(1),
            }],
        }
    }

    fn square_gen() -> PolytopeGenerator {
        PolytopeGenerator {
            n: 0,
            components: vec![PolytopeComponent {
                vertices: verts(&[&[0, 0], &[1, 0], &[1, 1], &[0, 1]]),
                sign: 1,
                s: AffineMap::to_point(2),
                t: AffineMap::identity(2),
            }],
        }
    }

    fn chain_of(gen: PolytopeGenerator) -> MChain {
        MChain::new(false, vec![(rat_i(1), gen)]).unwrap()
    }

    #[test]
    fn interval_boundary_is_endpoint_difference() {
        let bd = boundary(&chain_of(interval_gen()));
        assert_eq!(bd.degree(), Some(0));
        assert_eq!(bd.terms.len(), 2);
        // Identify the endpoints by the value of t on the single vertex.
        let mut seen = Vec::new();
        for (coeff, gen) in &bd.terms {
            let comp = &gen.components[0];
            assert_eq!(comp.vertices, vec![Vec::<Rat>::new()]);
            seen.push((comp.t.offset[0].clone(), coeff.clone()));
        }
        seen.sort();
        assert_eq!(seen, vec![(rat_i(0), rat_i(-1)), (rat_i(1), rat_i(1))]);
    }

    #[test]
    fn point_boundary_is_zero() {
        let point = PolytopeGenerator {
            n: 0,
            components: vec![PolytopeComponent {
                vertices: vec![vec![rat_i(3)]],
                sign: 1,
                s: AffineMap::to_point(1),
                t: AffineMap::identity(1),
            }],
        };
        assert!(boundary(&chain_of(point)).is_zero());
    }

    #[test]
    fn boundary_squares_to_zero_on_square_and_cube() {
        let sq = chain_of(square_gen());
        let edges = boundary(&sq);
        assert_eq!(edges.terms.len(), 4);
        assert_eq!(edges.degree(), Some(1));
        assert!(boundary(&edges).is_zero());

        let cube = PolytopeGenerator {
            n: 0,
            components: vec![PolytopeComponent {
                vertices: verts(&[
                    &[0, 0, 0],
                    &[1, 0, 0],
                    &[0, 1, 0],
                    &[1, 1, 0],
                    &[0, 0, 1],
                    &[1, 0, 1],
                    &[0, 1, 1],
                    &[1, 1, 1],
                ]),
                sign: 1,
                s: AffineMap::to_point(3),
                t: AffineMap::identity(3),
            }],
        };
        let faces = boundary(&chain_of(cube));
        assert_eq!(faces.terms.len(), 6);
        assert!(boundary(&faces).is_zero());
    }

    #[test]
    fn stabilization_round_trip_carries_the_relation_sign() {
        // Give the interval a nontrivial s so n = 2 and all sign cases occur.
        let mut g = interval_gen();
        g.n = 2;
        g.components[0].s = AffineMap::new(
            RationalMatrix::from_i64(&[&[2], &[0]]),
            vec![rat(1, 2), rat_i(5)],
        )
        .unwrap();
        let base = normalize(&chain_of(g.clone()));
        assert_eq!(base.terms.len(), 1);
        for i in 0..=g.n {
            let stab = chain_of(stabilize(&g, i).unwrap());
            let sign = if (g.n - i) % 2 == 0 { 1 } else { -1 };
            assert_eq!(normalize(&stab), base.scale(&rat_i(sign)), "i = {i}");
            // Stabilizing twice destabilizes back through both layers.
            let twice = chain_of(stabilize(&stabilize(&g, i).unwrap(), 0).unwrap());
            let sign2 = if (g.n + 1) % 2 == 0 { 1 } else { -1 };
            assert_eq!(normalize(&twice), base.scale(&rat_i(sign * sign2)));
        }
    }

    #[test]
    fn orientation_reversal_cancels_and_normalize_is_idempotent() {
        let mut reversed = square_gen();
        reversed.components[0].sign = -1;
        let sum = MChain::new(false, vec![(rat_i(1), square_gen()), (rat_i(1), reversed)]).unwrap();
        assert!(normalize(&sum).is_zero());

        let bd = boundary(&chain_of(square_gen()));
        assert_eq!(normalize(&bd), bd);
    }

    #[test]
    fn normalize_is_linear_and_respects_the_coefficient_flag() {
        let a = chain_of(square_gen());
        let b = boundary(&a);
        let lhs = a.scale(&rat_i(3)).add(&b.scale(&rat_i(-2))).unwrap();
        let rhs = normalize(
            &MChain::new(
                false,
                a.scale(&rat_i(3))
                    .terms
                    .into_iter()
                    .chain(b.scale(&rat_i(-2)).terms)
                    .collect(),
            )
            .unwrap(),
        );
        assert_eq!(lhs, rhs);

        let err = MChain::new(false, vec![(rat(1, 2), square_gen())]);
        assert!(matches!(err, Err(MchainError::Invalid(_))));
        assert!(MChain::new(true, vec![(rat(1, 2), square_gen())]).is_ok());
    }

    #[test]
    fn pushforward_examples_and_chain_map_property() {
        let c = chain_of(square_gen());
        let id = AffineMap::identity(2);
        assert_eq!(pushforward(&id, &c).unwrap(), normalize(&c));

        // Scaling by 2 doubles t and leaves s alone.
        let double = AffineMap::new(
            RationalMatrix::from_i64(&[&[2, 0], &[0, 2]]),
            vec![rat_i(0), rat_i(0)],
        )
        .unwrap();
        let pushed = pushforward(&double, &normalize(&c)).unwrap();
        for ((_, g1), (_, g2)) in normalize(&c).terms.iter().zip(pushed.terms.iter()) {
            assert_eq!(
                g2.components[0].t.matrix,
                double.matrix.mul(&g1.components[0].t.matrix)
            );
            assert_eq!(g2.components[0].s, g1.components[0].s);
        }

        // f_* . boundary = boundary . f_* for a shearing-and-translating f,
        // a constant f, and a non-square f, on a mixed chain.
        let mixed = c.add(&boundary(&c).scale(&rat_i(2))).unwrap();
        let maps = vec![
            AffineMap::new(
                RationalMatrix::from_i64(&[&[1, 1], &[0, 1]]),
                vec![rat(1, 3), rat_i(-2)],
            )
            .unwrap(),
            AffineMap::constant(2, vec![rat_i(7)]),
            AffineMap::new(
                RationalMatrix::from_i64(&[&[1, -1], &[2, 0], &[0, 3]]),
                vec![rat_i(0), rat_i(1), rat_i(0)],
            )
            .unwrap(),
        ];
        for f in &maps {
            assert_eq!(
                pushforward(f, &boundary(&mixed)).unwrap(),
                boundary(&pushforward(f, &mixed).unwrap())
            );
        }
    }

    #[test]
    fn fundamental_cycles_and_not_closed() {
        // The boundary complex of the square: four edges oriented
        // counterclockwise.
        let edges = vec![
            (verts(&[&[0, 0], &[1, 0]]), 1),
            (verts(&[&[1, 0], &[1, 1]]), 1),
            (verts(&[&[1, 1], &[0, 1]]), 1),
            (verts(&[&[0, 1], &[0, 0]]), 1),
        ];
        let cycle = fundamental_cycle(&edges, false).unwrap();
        assert_eq!(cycle.degree(), Some(1));
        assert!(boundary(&cycle).is_zero());

        // A single point is a cycle of degree 0.
        let pt = fundamental_cycle(&[(vec![vec![rat_i(2), rat_i(2)]], 1)], false).unwrap();
        assert_eq!(pt.degree(), Some(0));
        assert!(boundary(&pt).is_zero());

        // An open path of two edges is not closed.
        let path = vec![
            (verts(&[&[0, 0], &[1, 0]]), 1),
            (verts(&[&[1, 0], &[2, 0]]), 1),
        ];
        assert!(matches!(
            fundamental_cycle(&path, false),
            Err(MchainError::NotClosed(_))
        ));
    }

    #[test]
    fn fundamental_cycle_of_square_matches_hand_boundary() {
        // A filled square is a closed 2-complex with empty boundary? No:
        // its boundary is the edge cycle, so it is NOT closed on its own,
        // but together with nothing else its boundary is nonzero.
        let square = vec![(verts(&[&[0, 0], &[1, 0], &[1, 1], &[0, 1]]), 1)];
        assert!(matches!(
            fundamental_cycle(&square, false),
            Err(MchainError::NotClosed(_))
        ));

        // Two triangles forming the square with consistent orientations
        // still have the outer edge cycle as boundary: not closed either.
        let tri = vec![
            (verts(&[&[0, 0], &[1, 0], &[1, 1]]), 1),
            (verts(&[&[0, 0], &[1, 1], &[0, 1]]), 1),
        ];
        assert!(matches!(
            fundamental_cycle(&tri, false),
            Err(MchainError::NotClosed(_))
        ));

        // But the shared diagonal cancels in their boundary: six terms
        // would be eight without cancellation.
        let gen = PolytopeGenerator {
            n: 0,
            components: tri
                .iter()
                .map(|(v, s)| PolytopeComponent {
                    vertices: v.clone(),
                    sign: *s,
                    s: AffineMap::to_point(2),
                    t: AffineMap::identity(2),
                })
                .collect(),
        };
        let bd = boundary(&chain_of(gen));
        assert_eq!(bd.terms.len(), 4);
        assert!(boundary(&bd).is_zero());
    }

    #[test]
    fn degree_bookkeeping_and_simplex_products() {
        // Triangle x interval: a 3-dimensional prism in Q^3 with 6 vertices.
        let prism = PolytopeGenerator {
            n: 0,
            components: vec![PolytopeComponent {
                vertices: verts(&[
                    &[0, 0, 0],
                    &[1, 0, 0],
                    &[0, 1, 0],
                    &[0, 0, 2],
                    &[1, 0, 2],
                    &[0, 1, 2],
                ]),
                sign: 1,
                s: AffineMap::to_point(3),
                t: AffineMap::identity(3),
            }],
        };
        let c = chain_of(prism);
        assert_eq!(normalize(&c).degree(), Some(3));
        let bd = boundary(&c);
        assert_eq!(bd.degree(), Some(2));
        assert_eq!(bd.terms.len(), 5);
        assert!(boundary(&bd).is_zero());
    }
}
