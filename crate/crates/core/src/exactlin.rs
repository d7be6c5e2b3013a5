//! Exact rational linear algebra and finite group machinery.
//!
//! Every other module reduces its exactness, equivariance, and coset
//! questions to the operations in here. All arithmetic is over
//! arbitrary-precision rationals; groups are stored as full multiplication
//! tables so that every law can be checked exhaustively.

use num::{BigInt, BigRational, One, Signed, Zero};
use thiserror::Error;

/// Arbitrary-precision rational scalar used everywhere in this crate.
pub type Rat = BigRational;

/// Convenience constructor: the rational `p/q`.
pub fn rat(p: i64, q: i64) -> Rat {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Convenience constructor: the integer rational `p`.
pub fn rat_i(p: i64) -> Rat {
    BigRational::from(BigInt::from(p))
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ExactlinError {
    #[error("maps at positions {0} and {1} are not composable")]
    NonComposable(usize, usize),
    #[error("composite of maps {0} and {1} is nonzero: not a complex")]
    NotAComplex(usize, usize),
    #[error("subset is not a subgroup: {0}")]
    NotASubgroup(String),
    #[error("malformed group table: {0}")]
    BadGroupTable(String),
    #[error("malformed homomorphism: {0}")]
    BadHom(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
}

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

/// A dense matrix over the rationals, row-major.
///
/// `rows == 0` or `cols == 0` is allowed and models maps to or from the zero
/// space; such matrices are the identity of stacking operations.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Rat>,
}

impl RationalMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        RationalMatrix {
            rows,
            cols,
            entries: vec![Rat::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n, n);
        for i in 0..n {
            m.set(i, i, Rat::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Rat>>) -> Result<Self, ExactlinError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        for row in &rows {
            if row.len() != c {
                return Err(ExactlinError::DimMismatch(
                    "ragged rows in matrix literal".into(),
                ));
            }
        }
        Ok(RationalMatrix {
            rows: r,
            cols: c,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    /// Integer matrix literal, handy in tests and table-driven data.
    pub fn from_i64(rows: &[&[i64]]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| rat_i(x)).collect())
                .collect(),
        )
        .expect("rectangular literal")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Rat {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rat) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zero(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).clone());
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        RationalMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        RationalMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn neg(&self) -> Self {
        RationalMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|a| -a).collect(),
        }
    }

    pub fn scale(&self, s: &Rat) -> Self {
        RationalMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|a| a * s).collect(),
        }
    }

    /// Matrix product `self * other` (apply `other` first when matrices act
    /// on column vectors).
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matrix product dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zero(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[Rat]) -> Vec<Rat> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| self.get(i, j) * &v[j])
                    .fold(Rat::zero(), |a, b| a + b)
            })
            .collect()
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows);
        let mut out = Self::zero(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(i, j, self.get(i, j).clone());
            }
            for j in 0..other.cols {
                out.set(i, self.cols + j, other.get(i, j).clone());
            }
        }
        out
    }

    /// Vertical concatenation `[self; other]`.
    pub fn vstack(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols);
        let mut out = Self::zero(self.rows + other.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(i, j, self.get(i, j).clone());
            }
        }
        for i in 0..other.rows {
            for j in 0..self.cols {
                out.set(self.rows + i, j, other.get(i, j).clone());
            }
        }
        out
    }

    /// Block-diagonal sum `self ⊕ other`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.rows + other.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(i, j, self.get(i, j).clone());
            }
        }
        for i in 0..other.rows {
            for j in 0..other.cols {
                out.set(self.rows + i, self.cols + j, other.get(i, j).clone());
            }
        }
        out
    }

    /// Reduced row echelon form together with the pivot column indices.
    pub fn rref(&self) -> (Self, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            // Choose a pivot row (largest absolute value is pointless over Q;
            // take the first nonzero for determinism).
            let Some(pr) = (r..m.rows).find(|&i| !m.get(i, c).is_zero()) else {
                continue;
            };
            if pr != r {
                for j in 0..m.cols {
                    let a = m.get(r, j).clone();
                    let b = m.get(pr, j).clone();
                    m.set(r, j, b);
                    m.set(pr, j, a);
                }
            }
            let inv = {
                let p = m.get(r, c).clone();
                Rat::one() / p
            };
            for j in 0..m.cols {
                let v = m.get(r, j) * &inv;
                m.set(r, j, v);
            }
            for i in 0..m.rows {
                if i != r && !m.get(i, c).is_zero() {
                    let f = m.get(i, c).clone();
                    for j in 0..m.cols {
                        let v = m.get(i, j) - &f * m.get(r, j);
                        m.set(i, j, v);
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        (m, pivots)
    }

    /// Rank over the rationals, exact.
    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// A matrix whose columns form a basis of `ker self`.
    ///
    /// Free variables are set to 1 one at a time, in increasing column order,
    /// so the output is deterministic.
    pub fn kernel_basis(&self) -> Self {
        let (r, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut out = Self::zero(self.cols, free.len());
        for (k, &fc) in free.iter().enumerate() {
            out.set(fc, k, Rat::one());
            for (pi, &pc) in pivots.iter().enumerate() {
                out.set(pc, k, -r.get(pi, fc).clone());
            }
        }
        out
    }

    /// A surjection `Q^rows -> Q^d` whose kernel is `im self`, together with
    /// the cokernel dimension `d = rows - rank`.
    ///
    /// The projection is built from the kernel of `selfᵀ` acting by pairing,
    /// so `proj * self == 0` and `proj` has full row rank.
    pub fn cokernel_projection(&self) -> (Self, usize) {
        let left_kernel = self.transpose().kernel_basis(); // rows x d
        let proj = left_kernel.transpose(); // d x rows
        let d = proj.rows;
        (proj, d)
    }

    /// Solve `self * X = rhs` exactly. Returns `None` when inconsistent.
    /// Free variables are set to zero (deterministic particular solution).
    pub fn solve(&self, rhs: &Self) -> Option<Self> {
        assert_eq!(self.rows, rhs.rows);
        let aug = self.hstack(rhs);
        let (r, pivots) = aug.rref();
        // Inconsistent iff some pivot lies in the rhs block.
        if pivots.iter().any(|&c| c >= self.cols) {
            return None;
        }
        let mut x = Self::zero(self.cols, rhs.cols);
        for (pi, &pc) in pivots.iter().enumerate() {
            for j in 0..rhs.cols {
                x.set(pc, j, r.get(pi, self.cols + j).clone());
            }
        }
        Some(x)
    }

    /// Determinant of a square matrix (Bareiss-free plain elimination over Q).
    pub fn det(&self) -> Rat {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let mut m = self.clone();
        let n = m.rows;
        let mut det = Rat::one();
        for c in 0..n {
            let Some(pr) = (c..n).find(|&i| !m.get(i, c).is_zero()) else {
                return Rat::zero();
            };
            if pr != c {
                for j in 0..n {
                    let a = m.get(c, j).clone();
                    let b = m.get(pr, j).clone();
                    m.set(c, j, b);
                    m.set(pr, j, a);
                }
                det = -det;
            }
            let p = m.get(c, c).clone();
            det *= &p;
            let inv = Rat::one() / p;
            for i in (c + 1)..n {
                if !m.get(i, c).is_zero() {
                    let f = m.get(i, c) * &inv;
                    for j in c..n {
                        let v = m.get(i, j) - &f * m.get(c, j);
                        m.set(i, j, v);
                    }
                }
            }
        }
        det
    }

    /// Sign of the determinant: -1, 0, or +1.
    pub fn det_sign(&self) -> i8 {
        let d = self.det();
        if d.is_zero() {
            0
        } else if d.is_positive() {
            1
        } else {
            -1
        }
    }

    /// Entries as a flat row-major slice.
    pub fn entries(&self) -> &[Rat] {
        &self.entries
    }

    /// The j-th column as a vector.
    pub fn col(&self, j: usize) -> Vec<Rat> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }
}

/// Exactness verdicts for a sequence of composable maps.
///
/// The maps are `m_1: V_0 -> V_1, ..., m_k: V_{k-1} -> V_k` (columns of
/// `m_i` live in `V_{i-1}`). The result has one boolean per interior space
/// `V_1 ... V_{k-1}`: `true` iff `im m_i = ker m_{i+1}` there, decided by the
/// rank condition `rank(m_i) + rank(m_{i+1}) = dim V_i` (valid because the
/// complex condition is pre-checked).
pub fn seq_is_exact(maps: &[RationalMatrix]) -> Result<Vec<bool>, ExactlinError> {
    for i in 0..maps.len().saturating_sub(1) {
        if maps[i + 1].cols() != maps[i].rows() {
            return Err(ExactlinError::NonComposable(i, i + 1));
        }
        if !maps[i + 1].mul(&maps[i]).is_zero() {
            return Err(ExactlinError::NotAComplex(i, i + 1));
        }
    }
    let mut out = Vec::new();
    for i in 0..maps.len().saturating_sub(1) {
        let middle = maps[i].rows();
        out.push(maps[i].rank() + maps[i + 1].rank() == middle);
    }
    Ok(out)
}

/// Exactness of `0 -> V_0 -> ... -> V_k -> 0` at every spot (ends included).
pub fn seq_is_exact_closed(maps: &[RationalMatrix]) -> Result<bool, ExactlinError> {
    if maps.is_empty() {
        return Ok(true);
    }
    let mut padded = Vec::with_capacity(maps.len() + 2);
    padded.push(RationalMatrix::zero(maps[0].cols(), 0));
    padded.extend_from_slice(maps);
    padded.push(RationalMatrix::zero(0, maps[maps.len() - 1].rows()));
    Ok(seq_is_exact(&padded)?.into_iter().all(|b| b))
}

// ---------------------------------------------------------------------------
// Finite groups
// ---------------------------------------------------------------------------

/// A finite group given by its full multiplication table.
///
/// Elements are indices `0..order`; `mul[a * order + b]` is the product `ab`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct FinGroup {
    order: usize,
    mul: Vec<usize>,
    identity: usize,
    inv: Vec<usize>,
}

impl FinGroup {
    /// Validate a raw table and derive identity and inverses.
    pub fn from_table(order: usize, mul: Vec<usize>) -> Result<Self, ExactlinError> {
        if order == 0 || mul.len() != order * order {
            return Err(ExactlinError::BadGroupTable(
                "table size must be order^2 with order >= 1".into(),
            ));
        }
        if mul.iter().any(|&x| x >= order) {
            return Err(ExactlinError::BadGroupTable(
                "table entry out of range".into(),
            ));
        }
        let at = |a: usize, b: usize| mul[a * order + b];
        for a in 0..order {
            for b in 0..order {
                for c in 0..order {
                    if at(at(a, b), c) != at(a, at(b, c)) {
                        return Err(ExactlinError::BadGroupTable(format!(
                            "associativity fails at ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        let identity = (0..order)
            .find(|&e| (0..order).all(|a| at(e, a) == a && at(a, e) == a))
            .ok_or_else(|| ExactlinError::BadGroupTable("no identity element".into()))?;
        let mut inv = vec![0; order];
        for a in 0..order {
            inv[a] = (0..order)
                .find(|&b| at(a, b) == identity && at(b, a) == identity)
                .ok_or_else(|| {
                    ExactlinError::BadGroupTable(format!("element {a} has no inverse"))
                })?;
        }
        Ok(FinGroup {
            order,
            mul,
            identity,
            inv,
        })
    }

    pub fn trivial() -> Self {
        FinGroup {
            order: 1,
            mul: vec![0],
            identity: 0,
            inv: vec![0],
        }
    }

    /// The cyclic group Z/n, element `k` meaning the residue `k`.
    pub fn cyclic(n: usize) -> Self {
        assert!(n >= 1);
        let mut mul = vec![0; n * n];
        for a in 0..n {
            for b in 0..n {
                mul[a * n + b] = (a + b) % n;
            }
        }
        Self::from_table(n, mul).expect("cyclic table is a group")
    }

    /// The symmetric group on `n` letters (n <= 5 is sensible), elements
    /// indexed by the lexicographic rank of the permutation word.
    pub fn symmetric(n: usize) -> Self {
        let perms = all_permutations(n);
        let order = perms.len();
        let index_of = |p: &Vec<usize>| perms.iter().position(|q| q == p).unwrap();
        let mut mul = vec![0; order * order];
        for (a, pa) in perms.iter().enumerate() {
            for (b, pb) in perms.iter().enumerate() {
                // (a*b)(x) = pa(pb(x))
                let prod: Vec<usize> = (0..n).map(|x| pa[pb[x]]).collect();
                mul[a * order + b] = index_of(&prod);
            }
        }
        Self::from_table(order, mul).expect("symmetric table is a group")
    }

    /// Direct product; element `a * |B| + b` is the pair `(a, b)`.
    pub fn product(a: &FinGroup, b: &FinGroup) -> Self {
        let order = a.order * b.order;
        let mut mul = vec![0; order * order];
        for a1 in 0..a.order {
            for b1 in 0..b.order {
                for a2 in 0..a.order {
                    for b2 in 0..b.order {
                        let x = a1 * b.order + b1;
                        let y = a2 * b.order + b2;
                        mul[x * order + y] = a.mul(a1, a2) * b.order + b.mul(b1, b2);
                    }
                }
            }
        }
        Self::from_table(order, mul).expect("product table is a group")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mul[a * self.order + b]
    }

    pub fn inv(&self, a: usize) -> usize {
        self.inv[a]
    }

    /// Is the subset (given as element indices) closed under multiplication
    /// and inverses, and does it contain the identity?
    pub fn is_subgroup(&self, subset: &[usize]) -> bool {
        if !subset.contains(&self.identity) {
            return false;
        }
        subset.iter().all(|&a| {
            subset.contains(&self.inv(a)) && subset.iter().all(|&b| subset.contains(&self.mul(a, b)))
        })
    }

    /// Subgroup generated by a subset.
    pub fn generated_subgroup(&self, gens: &[usize]) -> Vec<usize> {
        let mut elems = vec![self.identity];
        let mut frontier = vec![self.identity];
        while let Some(x) = frontier.pop() {
            for &g in gens {
                for y in [self.mul(x, g), self.mul(g, x), self.inv(g)] {
                    if !elems.contains(&y) {
                        elems.push(y);
                        frontier.push(y);
                    }
                }
            }
        }
        elems.sort_unstable();
        elems
    }

    /// The subgroup as a standalone group together with the embedding of its
    /// element indices back into `self`.
    pub fn subgroup_group(&self, subset: &[usize]) -> Result<(FinGroup, Vec<usize>), ExactlinError> {
        if !self.is_subgroup(subset) {
            return Err(ExactlinError::NotASubgroup(format!("{subset:?}")));
        }
        let mut elems: Vec<usize> = subset.to_vec();
        elems.sort_unstable();
        elems.dedup();
        let n = elems.len();
        let pos = |x: usize| elems.iter().position(|&y| y == x).unwrap();
        let mut mul = vec![0; n * n];
        for (i, &a) in elems.iter().enumerate() {
            for (j, &b) in elems.iter().enumerate() {
                mul[i * n + j] = pos(self.mul(a, b));
            }
        }
        Ok((FinGroup::from_table(n, mul)?, elems))
    }
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    permute_rec(&mut current, 0, &mut out);
    out.sort();
    out
}

fn permute_rec(v: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == v.len() {
        out.push(v.clone());
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute_rec(v, k + 1, out);
        v.swap(k, i);
    }
}

/// One double coset `A g B` with its canonical representative (least element
/// index in the class) and full element list, sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DoubleCoset {
    pub representative: usize,
    pub elements: Vec<usize>,
}

/// Partition of `G` into double cosets `A \ G / B`.
///
/// `a` and `b` are element subsets that must be subgroups. Classes are
/// returned sorted by representative, so the output is deterministic.
pub fn double_cosets(
    g: &FinGroup,
    a: &[usize],
    b: &[usize],
) -> Result<Vec<DoubleCoset>, ExactlinError> {
    for (name, s) in [("A", a), ("B", b)] {
        if !g.is_subgroup(s) {
            return Err(ExactlinError::NotASubgroup(format!("{name} = {s:?}")));
        }
    }
    let mut seen = vec![false; g.order()];
    let mut classes = Vec::new();
    for x in 0..g.order() {
        if seen[x] {
            continue;
        }
        let mut elements: Vec<usize> = Vec::new();
        for &ai in a {
            for &bi in b {
                let y = g.mul(g.mul(ai, x), bi);
                if !seen[y] {
                    seen[y] = true;
                    elements.push(y);
                }
            }
        }
        elements.sort_unstable();
        classes.push(DoubleCoset {
            representative: elements[0],
            elements,
        });
    }
    classes.sort_by_key(|c| c.representative);
    Ok(classes)
}

// ---------------------------------------------------------------------------
// Group homomorphisms
// ---------------------------------------------------------------------------

/// A homomorphism between finite groups, stored as a total table.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GroupHom {
    pub source: FinGroup,
    pub target: FinGroup,
    map: Vec<usize>,
}

impl GroupHom {
    pub fn new(source: FinGroup, target: FinGroup, map: Vec<usize>) -> Result<Self, ExactlinError> {
        if map.len() != source.order() {
            return Err(ExactlinError::BadHom("table length != source order".into()));
        }
        if map.iter().any(|&x| x >= target.order()) {
            return Err(ExactlinError::BadHom("table entry out of range".into()));
        }
        for a in 0..source.order() {
            for b in 0..source.order() {
                if map[source.mul(a, b)] != target.mul(map[a], map[b]) {
                    return Err(ExactlinError::BadHom(format!(
                        "map(ab) != map(a)map(b) at ({a},{b})"
                    )));
                }
            }
        }
        Ok(GroupHom {
            source,
            target,
            map,
        })
    }

    pub fn identity(g: &FinGroup) -> Self {
        GroupHom {
            source: g.clone(),
            target: g.clone(),
            map: (0..g.order()).collect(),
        }
    }

    pub fn apply(&self, a: usize) -> usize {
        self.map[a]
    }

    pub fn image(&self) -> Vec<usize> {
        let mut im: Vec<usize> = self.map.clone();
        im.sort_unstable();
        im.dedup();
        im
    }

    pub fn is_injective(&self) -> bool {
        self.image().len() == self.source.order()
    }

    pub fn is_surjective(&self) -> bool {
        self.image().len() == self.target.order()
    }

    pub fn is_isomorphism(&self) -> bool {
        self.is_injective() && self.is_surjective()
    }
}

// ---------------------------------------------------------------------------
// Group actions on finite sets
// ---------------------------------------------------------------------------

/// A specific violated axiom instance in an action table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ActionViolation {
    /// `e · x != x`.
    IdentityMoves { point: usize },
    /// `(gh) · x != g · (h · x)`.
    NotAssociative { g: usize, h: usize, point: usize },
}

/// A finite group acting on a finite point set, as a total table.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FinGSet {
    pub group: FinGroup,
    pub n_points: usize,
    /// `action[g * n_points + x]` is `g · x`.
    pub action: Vec<usize>,
}

impl FinGSet {
    pub fn new(group: FinGroup, n_points: usize, action: Vec<usize>) -> Self {
        assert_eq!(action.len(), group.order() * n_points);
        assert!(action.iter().all(|&x| x < n_points) || n_points == 0);
        FinGSet {
            group,
            n_points,
            action,
        }
    }

    pub fn act(&self, g: usize, x: usize) -> usize {
        self.action[g * self.n_points + x]
    }

    /// Exhaustive axiom check; the report lists every violated instance.
    pub fn validate_action(&self) -> Vec<ActionViolation> {
        let mut report = Vec::new();
        let e = self.group.identity();
        for x in 0..self.n_points {
            if self.act(e, x) != x {
                report.push(ActionViolation::IdentityMoves { point: x });
            }
        }
        for g in 0..self.group.order() {
            for h in 0..self.group.order() {
                let gh = self.group.mul(g, h);
                for x in 0..self.n_points {
                    if self.act(gh, x) != self.act(g, self.act(h, x)) {
                        report.push(ActionViolation::NotAssociative { g, h, point: x });
                    }
                }
            }
        }
        report
    }

    pub fn orbit(&self, x: usize) -> Vec<usize> {
        let mut orbit: Vec<usize> = (0..self.group.order()).map(|g| self.act(g, x)).collect();
        orbit.sort_unstable();
        orbit.dedup();
        orbit
    }

    pub fn orbits(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n_points];
        let mut out = Vec::new();
        for x in 0..self.n_points {
            if !seen[x] {
                let orbit = self.orbit(x);
                for &y in &orbit {
                    seen[y] = true;
                }
                out.push(orbit);
            }
        }
        out
    }

    /// Stabilizer of a point, as a sorted element subset of the group.
    pub fn stabilizer(&self, x: usize) -> Vec<usize> {
        (0..self.group.order())
            .filter(|&g| self.act(g, x) == x)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent rank oracle: size of the largest nonvanishing minor.
    fn rank_by_minors(m: &RationalMatrix) -> usize {
        let n = m.rows().min(m.cols());
        for k in (1..=n).rev() {
            for rows in subsets(m.rows(), k) {
                for cols in subsets(m.cols(), k) {
                    let mut sub = RationalMatrix::zero(k, k);
                    for (i, &r) in rows.iter().enumerate() {
                        for (j, &c) in cols.iter().enumerate() {
                            sub.set(i, j, m.get(r, c).clone());
                        }
                    }
                    if !sub.det().is_zero() {
                        return k;
                    }
                }
            }
        }
        0
    }

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        rec(0, n, k, &mut cur, &mut out);
        out
    }

    #[test]
    fn rank_frozen_cases() {
        assert_eq!(RationalMatrix::identity(2).rank(), 2);
        assert_eq!(RationalMatrix::zero(1, 1).rank(), 0);
        assert_eq!(RationalMatrix::from_i64(&[&[1, 2], &[2, 4]]).rank(), 1);
    }

    #[test]
    fn rank_matches_minor_oracle_on_small_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let r = rng.gen_range(1..=4);
            let c = rng.gen_range(1..=4);
            let mut m = RationalMatrix::zero(r, c);
            for i in 0..r {
                for j in 0..c {
                    m.set(i, j, rat(rng.gen_range(-3..=3), rng.gen_range(1..=3)));
                }
            }
            assert_eq!(m.rank(), rank_by_minors(&m));
        }
    }

    #[test]
    fn rank_nullity_holds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let r = rng.gen_range(0..=5);
            let c = rng.gen_range(0..=5);
            let mut m = RationalMatrix::zero(r, c);
            for i in 0..r {
                for j in 0..c {
                    m.set(i, j, rat_i(rng.gen_range(-4..=4)));
                }
            }
            assert_eq!(m.cols(), m.rank() + m.kernel_basis().cols());
            // kernel columns are genuinely in the kernel
            assert!(m.mul(&m.kernel_basis()).is_zero());
            // cokernel projection kills the image and has full row rank
            let (proj, d) = m.cokernel_projection();
            assert!(proj.mul(&m).is_zero());
            assert_eq!(proj.rank(), d);
            assert_eq!(d, r - m.rank());
        }
    }

    #[test]
    fn exactness_frozen_cases() {
        // 0 -> Q -> Q -> 0 with the identity: exact everywhere.
        assert!(seq_is_exact_closed(&[RationalMatrix::identity(1)]).unwrap());
        // 0 -> Q -> Q -> 0 with the zero map: fails at both interior spots.
        let padded = [
            RationalMatrix::zero(1, 0),
            RationalMatrix::zero(1, 1),
            RationalMatrix::zero(0, 1),
        ];
        assert_eq!(seq_is_exact(&padded).unwrap(), vec![false, false]);
        // 0 -> Q^2 -> Q -> 0 with [[1,0]]: exact at Q, not at Q^2.
        let m = RationalMatrix::from_i64(&[&[1, 0]]);
        let padded = [
            RationalMatrix::zero(2, 0),
            m,
            RationalMatrix::zero(0, 1),
        ];
        assert_eq!(seq_is_exact(&padded).unwrap(), vec![false, true]);
    }

    #[test]
    fn exactness_of_short_sequences_is_dimension_count() {
        // 0 -> A -> B -> C -> 0 exact iff dim B = dim A + dim C with the maps
        // injective and surjective. Build a split example.
        let incl = RationalMatrix::from_i64(&[&[1], &[0]]);
        let proj = RationalMatrix::from_i64(&[&[0, 1]]);
        assert!(seq_is_exact_closed(&[incl, proj]).unwrap());
    }

    #[test]
    fn not_a_complex_is_reported() {
        let id = RationalMatrix::identity(1);
        assert!(matches!(
            seq_is_exact(&[id.clone(), id]),
            Err(ExactlinError::NotAComplex(0, 1))
        ));
    }

    #[test]
    fn kernel_cokernel_frozen_cases() {
        let z = RationalMatrix::zero(2, 3);
        assert_eq!(z.kernel_basis().cols(), 3);
        assert_eq!(z.cokernel_projection().1, 2);
        let id = RationalMatrix::identity(2);
        assert_eq!(id.kernel_basis().cols(), 0);
        assert_eq!(id.cokernel_projection().1, 0);
        let m = RationalMatrix::from_i64(&[&[1, 0], &[0, 0]]);
        assert_eq!(m.kernel_basis().cols(), 1);
        assert_eq!(m.cokernel_projection().1, 1);
    }

    #[test]
    fn group_law_validation() {
        let s3 = FinGroup::symmetric(3);
        assert_eq!(s3.order(), 6);
        let z4 = FinGroup::cyclic(4);
        assert_eq!(z4.inv(1), 3);
        // Corrupt a table: constant table is not a group.
        assert!(FinGroup::from_table(2, vec![0, 0, 0, 0]).is_err());
    }

    #[test]
    fn double_coset_frozen_cases() {
        let z2 = FinGroup::cyclic(2);
        // A = B = G: one class.
        let all: Vec<usize> = (0..2).collect();
        assert_eq!(double_cosets(&z2, &all, &all).unwrap().len(), 1);
        // A = B = {e}: two classes.
        assert_eq!(double_cosets(&z2, &[0], &[0]).unwrap().len(), 2);
        // S3 with A = a 2-element subgroup, B = the 3-cycle subgroup: 1 class.
        let s3 = FinGroup::symmetric(3);
        let a = (0..6)
            .find(|&x| x != s3.identity() && s3.mul(x, x) == s3.identity())
            .map(|x| vec![s3.identity(), x])
            .unwrap();
        let b = (0..6)
            .find(|&x| {
                x != s3.identity()
                    && s3.mul(x, x) != s3.identity()
                    && s3.mul(s3.mul(x, x), x) == s3.identity()
            })
            .map(|x| s3.generated_subgroup(&[x]))
            .unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(double_cosets(&s3, &a, &b).unwrap().len(), 1);
    }

    #[test]
    fn double_cosets_partition() {
        let s3 = FinGroup::symmetric(3);
        let a = s3.generated_subgroup(&[1]);
        let b = s3.generated_subgroup(&[2]);
        let classes = double_cosets(&s3, &a, &b).unwrap();
        let mut all: Vec<usize> = classes.iter().flat_map(|c| c.elements.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..6).collect::<Vec<_>>());
        // every element lies in the class of its representative
        for c in &classes {
            for &x in &c.elements {
                let covered = a
                    .iter()
                    .any(|&ai| b.iter().any(|&bi| s3.mul(s3.mul(ai, c.representative), bi) == x));
                assert!(covered);
            }
        }
    }

    #[test]
    fn action_validation_cases() {
        // Trivial action: valid.
        let g = FinGroup::trivial();
        let a = FinGSet::new(g, 3, vec![0, 1, 2]);
        assert!(a.validate_action().is_empty());
        // Z/2 swap on two points: valid.
        let z2 = FinGroup::cyclic(2);
        let swap = FinGSet::new(z2.clone(), 2, vec![0, 1, 1, 0]);
        assert!(swap.validate_action().is_empty());
        assert_eq!(swap.orbit(0), vec![0, 1]);
        assert_eq!(swap.stabilizer(0), vec![0]);
        // Identity moving a point: one violation of each flavor at that point.
        let bad = FinGSet::new(z2, 2, vec![1, 0, 1, 0]);
        let report = bad.validate_action();
        assert!(report
            .iter()
            .any(|v| matches!(v, ActionViolation::IdentityMoves { .. })));
    }

    #[test]
    fn solve_and_det() {
        let a = RationalMatrix::from_i64(&[&[2, 1], &[1, 1]]);
        let b = RationalMatrix::from_i64(&[&[3], &[2]]);
        let x = a.solve(&b).unwrap();
        assert_eq!(a.mul(&x), b);
        assert_eq!(a.det(), rat_i(1));
        let sing = RationalMatrix::from_i64(&[&[1, 2], &[2, 4]]);
        assert_eq!(sing.det_sign(), 0);
        let incons = sing.solve(&RationalMatrix::from_i64(&[&[1], &[0]]));
        assert!(incons.is_none());
    }
}
