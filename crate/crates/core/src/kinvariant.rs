//! Pointwise invariants of atlases: isotropy group, tangent and
//! obstruction spaces with their induced group actions.

use thiserror::Error;

use crate::exactlin::{FinGroup, RationalMatrix};
use crate::kspace::KuranishiAtlas;

#[derive(Error, Debug)]
pub enum KinvariantError {
    #[error("point not in footprint: {0}")]
    PointNotInFootprint(String),
    #[error("no isomorphism: {0}")]
    NoIsomorphism(String),
    #[error("empty fibre: {0}")]
    EmptyFibre(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("not transverse: {0}")]
    NotTransverse(String),
    #[error("not exact: {0}")]
    NotExact(String),
}

/// The invariants of an atlas at a base point, computed in one chart at
/// one representative: the stabilizer subgroup, the kernel of the section
/// differential as the tangent space, the cokernel as the obstruction
/// space, and the stabilizer actions induced on both.
#[derive(Clone, Debug)]
pub struct InvariantTriple {
    /// Chart index and chart point at which the triple was computed.
    pub chart: usize,
    pub point: usize,
    /// The stabilizer as an abstract group, with `elements[g]` the chart
    /// group element realizing abstract element `g`.
    pub group: FinGroup,
    pub elements: Vec<usize>,
    /// Columns form a basis of the tangent space inside the chart tangent
    /// space at the point.
    pub tangent_basis: RationalMatrix,
    /// Projection from the chart obstruction fibre onto the obstruction
    /// space.
    pub obstruction_projection: RationalMatrix,
    pub t_dim: usize,
    pub o_dim: usize,
    /// Stabilizer actions on the tangent and obstruction spaces, indexed
    /// like `elements`.
    pub t_action: Vec<RationalMatrix>,
    pub o_action: Vec<RationalMatrix>,
}

/// Compute the invariant triple of `a` at base point `x`, using the given
/// chart and representative or, by default, the least chart containing `x`
/// and the least representative in it.
pub fn point_invariants(
    a: &KuranishiAtlas,
    x: usize,
    choice: Option<(usize, usize)>,
) -> Result<InvariantTriple, KinvariantError> {
    let (i, v) = match choice {
        Some((i, v)) => {
            if i >= a.charts.len() || a.charts[i].psi.get(&v) != Some(&x) {
                return Err(KinvariantError::PointNotInFootprint(format!(
                    "chart {i}, point {v} does not lie over {x}"
                )));
            }
            (i, v)
        }
        None => {
            let mut found = None;
            'outer: for (i, c) in a.charts.iter().enumerate() {
                for (&v, &y) in &c.psi {
                    if y == x {
                        found = Some((i, v));
                        break 'outer;
                    }
                }
            }
            found.ok_or_else(|| {
                KinvariantError::PointNotInFootprint(format!("no chart contains {x}"))
            })?
        }
    };
    let c = &a.charts[i];
    let stab: Vec<usize> = (0..c.group.order())
        .filter(|&g| c.action[g][v] == v)
        .collect();
    let (group, elements) = c
        .group
        .subgroup_group(&stab)
        .expect("a stabilizer is a subgroup");
    let tangent_basis = c.ds[v].kernel_basis();
    let (obstruction_projection, o_dim) = c.ds[v].cokernel_projection();
    let t_dim = tangent_basis.cols();
    let mut t_action = Vec::with_capacity(elements.len());
    let mut o_action = Vec::with_capacity(elements.len());
    for &g in &elements {
        // the chart tangent action preserves the kernel; express it in the
        // kernel basis
        let moved = c.dgamma[g][v].mul(&tangent_basis);
        let t_act = tangent_basis.solve(&moved).ok_or_else(|| {
            KinvariantError::NoSolution(format!(
                "tangent action of {g} does not preserve the kernel at ({i},{v})"
            ))
        })?;
        if tangent_basis.mul(&t_act) != moved {
            return Err(KinvariantError::NoSolution(format!(
                "tangent action of {g} is inconsistent at ({i},{v})"
            )));
        }
        t_action.push(t_act);
        // the obstruction action is the unique matrix commuting with the
        // projection
        let rhs = obstruction_projection.mul(&c.egamma[g][v]);
        let o_act_t = obstruction_projection
            .transpose()
            .solve(&rhs.transpose())
            .ok_or_else(|| {
                KinvariantError::NoSolution(format!(
                    "obstruction action of {g} does not descend at ({i},{v})"
                ))
            })?;
        let o_act = o_act_t.transpose();
        if o_act.mul(&obstruction_projection) != rhs {
            return Err(KinvariantError::NoSolution(format!(
                "obstruction action of {g} is inconsistent at ({i},{v})"
            )));
        }
        o_action.push(o_act);
    }
    Ok(InvariantTriple {
        chart: i,
        point: v,
        group,
        elements,
        tangent_basis,
        obstruction_projection,
        t_dim,
        o_dim,
        t_action,
        o_action,
    })
}

// ---------------------------------------------------------------------------
// Morphism invariants
// ---------------------------------------------------------------------------

use crate::exactlin::{seq_is_exact_closed, GroupHom, Rat};
use crate::kchart::{compose_with_maps, ChartMorphism};
use crate::kspace::{SpaceMorphism, SpaceTwoMorphism};

/// The induced maps of a 1-morphism at a base point: a group homomorphism
/// between the isotropy groups and linear maps between the tangent and
/// obstruction spaces, computed at a bibundle point `p0` lying over the
/// chosen representatives.  Changing `p0` conjugates the triple by the
/// unique target-group element moving one choice to the other.
#[derive(Clone, Debug)]
pub struct MorphismTriple {
    pub src: InvariantTriple,
    pub tgt: InvariantTriple,
    /// The bibundle point at which the maps were computed.
    pub p0: usize,
    /// Isotropy map on abstract group elements.
    pub g_map: GroupHom,
    /// Tangent map in the bases of the two kernels.
    pub t_map: RationalMatrix,
    /// Obstruction map intertwining the two cokernel projections.
    pub o_map: RationalMatrix,
}

impl MorphismTriple {
    /// Whether all three maps are isomorphisms.
    pub fn is_isomorphism(&self) -> bool {
        self.g_map.is_injective()
            && self.src.group.order() == self.tgt.group.order()
            && self.t_map.rows() == self.t_map.cols()
            && self.t_map.rank() == self.t_map.rows()
            && self.o_map.rows() == self.o_map.cols()
            && self.o_map.rank() == self.o_map.rows()
    }
}

/// Bibundle points of `m` lying over source point `u` and target point `v`.
fn fibre_points(m: &ChartMorphism, u: usize, v: usize) -> Vec<usize> {
    (0..m.n_p)
        .filter(|&p| m.pi[p] == u && m.phi[p] == v)
        .collect()
}

/// The induced maps of the chart morphism `m` between two invariant
/// triples, computed at bibundle point `p0`.
fn triple_map(
    m: &ChartMorphism,
    src: &InvariantTriple,
    tgt: &InvariantTriple,
    p0: usize,
) -> Result<(GroupHom, RationalMatrix, RationalMatrix), KinvariantError> {
    let gj = &m.target.group;
    // isotropy map: γ·p0 = (γ')⁻¹·p0 in the fibre
    let mut images = Vec::with_capacity(src.elements.len());
    for &gamma in &src.elements {
        let moved = m.act_i[gamma][p0];
        let gp = (0..gj.order())
            .find(|&gp| m.act_j[gj.inv(gp)][p0] == moved)
            .ok_or_else(|| {
                KinvariantError::NoSolution(format!(
                    "no target group element matches {gamma} at {p0}"
                ))
            })?;
        let abs = tgt.elements.iter().position(|&e| e == gp).ok_or_else(|| {
            KinvariantError::NoSolution(format!("{gp} is not in the target stabilizer"))
        })?;
        images.push(abs);
    }
    let g_map = GroupHom::new(src.group.clone(), tgt.group.clone(), images)
        .map_err(|e| KinvariantError::NoSolution(e.to_string()))?;
    // tangent map between the kernel bases
    let moved = m.dphi[p0].mul(&src.tangent_basis);
    let t_map = tgt.tangent_basis.solve(&moved).ok_or_else(|| {
        KinvariantError::NoSolution("tangent map does not land in the target kernel".into())
    })?;
    if tgt.tangent_basis.mul(&t_map) != moved {
        return Err(KinvariantError::NoSolution(
            "tangent map is inconsistent".into(),
        ));
    }
    // obstruction map intertwining the cokernel projections
    let rhs = tgt.obstruction_projection.mul(&m.phihat[p0]);
    let o_map_t = src
        .obstruction_projection
        .transpose()
        .solve(&rhs.transpose())
        .ok_or_else(|| {
            KinvariantError::NoSolution("obstruction map does not descend".into())
        })?;
    let o_map = o_map_t.transpose();
    if o_map.mul(&src.obstruction_projection) != rhs {
        return Err(KinvariantError::NoSolution(
            "obstruction map is inconsistent".into(),
        ));
    }
    Ok((g_map, t_map, o_map))
}

/// Default representative of base point `x`: least chart containing it,
/// least chart point over it.
fn default_rep(a: &crate::kspace::KuranishiAtlas, x: usize) -> Option<(usize, usize)> {
    for (i, c) in a.charts.iter().enumerate() {
        for (&v, &y) in &c.psi {
            if y == x {
                return Some((i, v));
            }
        }
    }
    None
}

/// The induced maps of `f` at base point `x`, computed at the default
/// chart representatives on both sides and at bibundle point `p0`
/// (default: least point of the fibre).
pub fn morphism_invariants(
    f: &SpaceMorphism,
    x: usize,
    p0: Option<usize>,
) -> Result<MorphismTriple, KinvariantError> {
    if x >= f.source.footprint_size {
        return Err(KinvariantError::PointNotInFootprint(format!(
            "{x} is not a base point of the source"
        )));
    }
    let y = f.f[x];
    let (i, u) = default_rep(&f.source, x)
        .ok_or_else(|| KinvariantError::PointNotInFootprint(format!("no chart contains {x}")))?;
    let (j, v) = default_rep(&f.target, y)
        .ok_or_else(|| KinvariantError::PointNotInFootprint(format!("no chart contains {y}")))?;
    let src = point_invariants(&f.source, x, Some((i, u)))?;
    let tgt = point_invariants(&f.target, y, Some((j, v)))?;
    let m = &f.components[i][j];
    let fibre = fibre_points(m, u, v);
    if fibre.is_empty() {
        return Err(KinvariantError::EmptyFibre(format!(
            "no bibundle point over ({u}, {v}) in component ({i}, {j})"
        )));
    }
    let p0 = match p0 {
        Some(p) => {
            if !fibre.contains(&p) {
                return Err(KinvariantError::EmptyFibre(format!(
                    "{p} does not lie in the fibre over ({u}, {v})"
                )));
            }
            p
        }
        None => fibre[0],
    };
    let (g_map, t_map, o_map) = triple_map(m, &src, &tgt, p0)?;
    Ok(MorphismTriple {
        src,
        tgt,
        p0,
        g_map,
        t_map,
        o_map,
    })
}

/// All natural isomorphisms between the invariant triples of `a` at `x`
/// computed from two chart representatives, one candidate per bibundle
/// point of the connecting change, deduplicated.  Fails when any
/// candidate is not an isomorphism, which signals an invalid atlas.
pub fn invariants_compare(
    a: &crate::kspace::KuranishiAtlas,
    x: usize,
    c1: (usize, usize),
    c2: (usize, usize),
) -> Result<Vec<MorphismTriple>, KinvariantError> {
    let tr1 = point_invariants(a, x, Some(c1))?;
    let tr2 = point_invariants(a, x, Some(c2))?;
    let m = &a.changes[c1.0][c2.0];
    let fibre = fibre_points(m, c1.1, c2.1);
    if fibre.is_empty() {
        return Err(KinvariantError::NoIsomorphism(format!(
            "no bibundle point connects the representatives of {x}"
        )));
    }
    let mut out: Vec<MorphismTriple> = Vec::new();
    let mut seen: Vec<(Vec<usize>, RationalMatrix, RationalMatrix)> = Vec::new();
    for p in fibre {
        let (g_map, t_map, o_map) = triple_map(m, &tr1, &tr2, p)?;
        let wit = MorphismTriple {
            src: tr1.clone(),
            tgt: tr2.clone(),
            p0: p,
            g_map,
            t_map,
            o_map,
        };
        if !wit.is_isomorphism() {
            return Err(KinvariantError::NoIsomorphism(format!(
                "the connecting change does not induce an isomorphism at point {p}"
            )));
        }
        let key = (
            (0..tr1.group.order()).map(|g| wit.g_map.apply(g)).collect(),
            wit.t_map.clone(),
            wit.o_map.clone(),
        );
        if !seen.contains(&key) {
            seen.push(key);
            out.push(wit);
        }
    }
    Ok(out)
}

/// The unique target-isotropy element carried by a 2-morphism at `x`: it
/// conjugates the triple of the 2-morphism's source 1-morphism into the
/// triple of its target 1-morphism.  Returned as an abstract element of
/// the target invariant triple at the image point.
pub fn two_morphism_element(eta: &SpaceTwoMorphism, x: usize) -> Result<usize, KinvariantError> {
    let f = &eta.source;
    let g = &eta.target;
    let y = f.f[x];
    let (i, u) = default_rep(&f.source, x)
        .ok_or_else(|| KinvariantError::PointNotInFootprint(format!("no chart contains {x}")))?;
    let (j, v) = default_rep(&f.target, y)
        .ok_or_else(|| KinvariantError::PointNotInFootprint(format!("no chart contains {y}")))?;
    let tgt = point_invariants(&f.target, y, Some((j, v)))?;
    let mf = &f.components[i][j];
    let mg = &g.components[i][j];
    let sf = fibre_points(mf, u, v);
    let sg = fibre_points(mg, u, v);
    let (Some(&p0), Some(&q0)) = (sf.first(), sg.first()) else {
        return Err(KinvariantError::EmptyFibre(format!(
            "no bibundle point over ({u}, {v})"
        )));
    };
    let lp = *eta.cells[i][j].lambda.get(&p0).ok_or_else(|| {
        KinvariantError::NoSolution(format!("cell ({i}, {j}) is not defined at {p0}"))
    })?;
    let gj = &mf.target.group;
    let delta = (0..gj.order())
        .find(|&d| mg.act_j[d][lp] == q0)
        .ok_or_else(|| KinvariantError::NoSolution("fibre action is not transitive".into()))?;
    tgt.elements
        .iter()
        .position(|&e| e == delta)
        .ok_or_else(|| KinvariantError::NoSolution(format!("{delta} is not in the stabilizer")))
}

/// The canonical target-isotropy element comparing the composed triple of
/// `g∘f` at `x` with the composite of the two triples, as an abstract
/// element of the invariant triple at the final image point.
pub fn composition_element(
    g: &SpaceMorphism,
    f: &SpaceMorphism,
    x: usize,
) -> Result<usize, KinvariantError> {
    let y = f.f[x];
    let z = g.f[y];
    let (i, u) = default_rep(&f.source, x)
        .ok_or_else(|| KinvariantError::PointNotInFootprint(format!("no chart contains {x}")))?;
    let (j, v) = default_rep(&f.target, y)
        .ok_or_else(|| KinvariantError::PointNotInFootprint(format!("no chart contains {y}")))?;
    let (k, w) = default_rep(&g.target, z)
        .ok_or_else(|| KinvariantError::PointNotInFootprint(format!("no chart contains {z}")))?;
    let tgt = point_invariants(&g.target, z, Some((k, w)))?;
    let mf = &f.components[i][j];
    let mg = &g.components[j][k];
    let comp = compose_with_maps(mg, mf).map_err(|e| KinvariantError::NoSolution(e.to_string()))?;
    let sf = fibre_points(mf, u, v);
    let sg = fibre_points(mg, v, w);
    let sh = fibre_points(&comp.result, u, w);
    let (Some(&p0), Some(&q0), Some(&r0)) = (sf.first(), sg.first(), sh.first()) else {
        return Err(KinvariantError::EmptyFibre(
            "a fibre of the composition is empty".into(),
        ));
    };
    let c = *comp.class_of.get(&(p0, q0)).ok_or_else(|| {
        KinvariantError::NoSolution("the chosen pair is not a composite point".into())
    })?;
    let gk = &mg.target.group;
    let delta = (0..gk.order())
        .find(|&d| comp.result.act_j[d][c] == r0)
        .ok_or_else(|| KinvariantError::NoSolution("fibre action is not transitive".into()))?;
    tgt.elements
        .iter()
        .position(|&e| e == delta)
        .ok_or_else(|| KinvariantError::NoSolution(format!("{delta} is not in the stabilizer")))
}

/// Whether `f` is an equivalence: bijective on base points with all three
/// induced maps isomorphisms at every point.
pub fn equivalence_criterion(f: &SpaceMorphism) -> bool {
    if f.source.footprint_size != f.target.footprint_size {
        return false;
    }
    let mut seen = vec![false; f.target.footprint_size];
    for &y in &f.f {
        if seen[y] {
            return false;
        }
        seen[y] = true;
    }
    (0..f.source.footprint_size).all(|x| {
        morphism_invariants(f, x, None).is_ok_and(|mt| mt.is_isomorphism())
    })
}

// ---------------------------------------------------------------------------
// Transversality, submersions, fibre products
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransMode {
    Weak,
    Strong,
}

/// Outcome of a transversality check, with a failing `(x, y, γ)` witness
/// when the answer is negative.
#[derive(Clone, Debug)]
pub struct TransversalityReport {
    pub ok: bool,
    pub witness: Option<(usize, usize, usize)>,
}

/// Check d-transversality of `g` and `h` into a common target.  Weak mode
/// requires the twisted obstruction sum to be surjective at every
/// coincidence; strong mode additionally requires the twisted tangent sum
/// surjective and the obstruction sum an isomorphism.
pub fn transversality(
    g: &SpaceMorphism,
    h: &SpaceMorphism,
    mode: TransMode,
) -> Result<TransversalityReport, KinvariantError> {
    if g.target != h.target {
        return Err(KinvariantError::NoSolution(
            "the morphisms do not share a target".into(),
        ));
    }
    for x in 0..g.source.footprint_size {
        for y in 0..h.source.footprint_size {
            if g.f[x] != h.f[y] {
                continue;
            }
            let mg = morphism_invariants(g, x, None)?;
            let mh = morphism_invariants(h, y, None)?;
            let tz = &mg.tgt;
            for gamma in 0..tz.group.order() {
                let o_block = mg.o_map.hstack(&tz.o_action[gamma].mul(&mh.o_map));
                if o_block.rank() != tz.o_dim {
                    return Ok(TransversalityReport {
                        ok: false,
                        witness: Some((x, y, gamma)),
                    });
                }
                if mode == TransMode::Strong {
                    let t_block = mg.t_map.hstack(&tz.t_action[gamma].mul(&mh.t_map));
                    let o_iso = o_block.cols() == tz.o_dim;
                    if t_block.rank() != tz.t_dim || !o_iso {
                        return Ok(TransversalityReport {
                            ok: false,
                            witness: Some((x, y, gamma)),
                        });
                    }
                }
            }
        }
    }
    Ok(TransversalityReport {
        ok: true,
        witness: None,
    })
}

/// Check that `f` is a (weak) submersion: obstruction maps surjective at
/// every point; in strong mode also tangent maps surjective and
/// obstruction maps isomorphisms.
pub fn submersion_check(f: &SpaceMorphism, mode: TransMode) -> Result<bool, KinvariantError> {
    for x in 0..f.source.footprint_size {
        let mt = morphism_invariants(f, x, None)?;
        if mt.o_map.rank() != mt.tgt.o_dim {
            return Ok(false);
        }
        if mode == TransMode::Strong
            && (mt.t_map.rank() != mt.tgt.t_dim || mt.o_map.cols() != mt.tgt.o_dim)
        {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A point of the fibre product of `g` and `h`: a coincidence `(x, y)`
/// together with a double coset of the target isotropy group, with its
/// isotropy order under the twisting action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FibrePoint {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    /// Least abstract element of the double coset.
    pub coset_rep: usize,
    /// The double coset as a sorted set of abstract elements.
    pub coset: Vec<usize>,
    /// Order of the stabilizer of the representative under the two-sided
    /// twisting action of the two source isotropy groups.
    pub isotropy_order: usize,
}

/// The point set of the fibre product of d-transverse `g` and `h`: one
/// point per coincidence and double coset of the induced isotropy images.
pub fn fibre_product_points(
    g: &SpaceMorphism,
    h: &SpaceMorphism,
) -> Result<Vec<FibrePoint>, KinvariantError> {
    let tr = transversality(g, h, TransMode::Weak)?;
    if !tr.ok {
        return Err(KinvariantError::NotTransverse(format!(
            "failing witness {:?}",
            tr.witness
        )));
    }
    let mut out = Vec::new();
    for x in 0..g.source.footprint_size {
        for y in 0..h.source.footprint_size {
            if g.f[x] != h.f[y] {
                continue;
            }
            let z = g.f[x];
            let mg = morphism_invariants(g, x, None)?;
            let mh = morphism_invariants(h, y, None)?;
            let gz = &mg.tgt.group;
            let a_im: Vec<usize> = (0..mg.src.group.order())
                .map(|a| mg.g_map.apply(a))
                .collect();
            let b_im: Vec<usize> = (0..mh.src.group.order())
                .map(|b| mh.g_map.apply(b))
                .collect();
            let mut done = vec![false; gz.order()];
            for rep in 0..gz.order() {
                if done[rep] {
                    continue;
                }
                let mut coset: Vec<usize> = Vec::new();
                for &a in &a_im {
                    for &b in &b_im {
                        let e = gz.mul(a, gz.mul(rep, b));
                        if !coset.contains(&e) {
                            coset.push(e);
                        }
                    }
                }
                coset.sort_unstable();
                for &e in &coset {
                    done[e] = true;
                }
                let mut isotropy = 0;
                for a in 0..mg.src.group.order() {
                    for b in 0..mh.src.group.order() {
                        let twisted = gz.mul(
                            mg.g_map.apply(a),
                            gz.mul(rep, gz.inv(mh.g_map.apply(b))),
                        );
                        if twisted == rep {
                            isotropy += 1;
                        }
                    }
                }
                out.push(FibrePoint {
                    x,
                    y,
                    z,
                    coset_rep: rep,
                    coset,
                    isotropy_order: isotropy,
                });
            }
        }
    }
    Ok(out)
}

/// The linearized fibre-product chart point at a coincidence `(x, y)`
/// twisted by the abstract isotropy element `gamma`, with its six-term
/// exactness certificate.
#[derive(Clone, Debug)]
pub struct FibreChart {
    pub t_dim: usize,
    pub o_dim: usize,
    /// The five maps of the six-term sequence relating the fibre-product
    /// invariants to those of the three factors.
    pub sequence: Vec<RationalMatrix>,
    pub exact: bool,
    pub vdim_ok: bool,
}

/// Build the linearized fibre-product chart point of `g`, `h` at
/// `(x, y, gamma)`, together with the exactness certificate of the
/// six-term sequence and the dimension check against the three virtual
/// dimensions.
///
/// The linearization is the three-term complex
/// `T_X⊕T_Y → E_X⊕E_Y⊕T_Z → E_Z` with first differential
/// `(ds_X, ds_Y, dg − γ·dh)` and second differential
/// `(ĝ, −γ·ĥ, −ds_Z)`.  Transversality makes the second differential
/// surjective, and the fibre chart has tangent fibre `T_X⊕T_Y`,
/// obstruction fibre the kernel of the second differential, and the
/// first differential as section differential.
pub fn fibre_product_chart(
    g: &SpaceMorphism,
    h: &SpaceMorphism,
    x: usize,
    y: usize,
    gamma: usize,
) -> Result<FibreChart, KinvariantError> {
    if g.f[x] != h.f[y] {
        return Err(KinvariantError::EmptyFibre(format!(
            "{x} and {y} do not meet in the target"
        )));
    }
    let mg = morphism_invariants(g, x, None)?;
    let mh = morphism_invariants(h, y, None)?;
    let tz = &mg.tgt;
    let cx = &g.source.charts[mg.src.chart];
    let cy = &h.source.charts[mh.src.chart];
    let cz = &g.target.charts[mg.tgt.chart];
    let (u, v, w) = (mg.src.point, mh.src.point, mg.tgt.point);
    let mgc = &g.components[mg.src.chart][mg.tgt.chart];
    let mhc = &h.components[mh.src.chart][mh.tgt.chart];
    let gamma_chart = tz.elements[gamma];
    // first differential: the section differential of the fibre chart
    let top = cx.ds[u].direct_sum(&cy.ds[v]);
    let bottom = mgc.dphi[mg.p0].hstack(&cz.dgamma[gamma_chart][w].mul(&mhc.dphi[mh.p0]).neg());
    let d0 = top.vstack(&bottom);
    // second differential into the target obstruction fibre
    let d1 = mgc.phihat[mg.p0]
        .hstack(&cz.egamma[gamma_chart][w].mul(&mhc.phihat[mh.p0]).neg())
        .hstack(&cz.ds[w].neg());
    if d1.mul(&d0) != RationalMatrix::zero(d1.rows(), d0.cols()) {
        return Err(KinvariantError::NoSolution(
            "the fibre linearization is not a complex".into(),
        ));
    }
    if d1.rank() != cz.e_dim[w] {
        return Err(KinvariantError::NotTransverse(format!(
            "obstruction sum is not surjective at ({x}, {y}, {gamma})"
        )));
    }
    // the obstruction fibre of the chart is ker d1
    let kb1 = d1.kernel_basis();
    let d0k = kb1.solve(&d0).ok_or_else(|| {
        KinvariantError::NoSolution("section differential does not land in the kernel".into())
    })?;
    if kb1.mul(&d0k) != d0 {
        return Err(KinvariantError::NoSolution(
            "section differential is inconsistent".into(),
        ));
    }
    let kernel = d0.kernel_basis();
    let (proj, o_dim) = d0k.cokernel_projection();
    let t_dim = kernel.cols();
    // six-term sequence: T_W → T_x⊕T_y → T_z → O_W → O_x⊕O_y → O_z
    let tb_xy = mg.src.tangent_basis.direct_sum(&mh.src.tangent_basis);
    let m1 = tb_xy.solve(&kernel).ok_or_else(|| {
        KinvariantError::NoSolution("fibre tangent space does not embed".into())
    })?;
    if tb_xy.mul(&m1) != kernel {
        return Err(KinvariantError::NoSolution(
            "fibre tangent embedding is inconsistent".into(),
        ));
    }
    let m2 = mg.t_map.hstack(&tz.t_action[gamma].mul(&mh.t_map).neg());
    let ex = cx.e_dim[u];
    let ey = cy.e_dim[v];
    let inc_z = RationalMatrix::zero(ex + ey, tz.t_dim).vstack(&tz.tangent_basis);
    let inc_k = kb1.solve(&inc_z).ok_or_else(|| {
        KinvariantError::NoSolution("target tangent space does not enter the kernel".into())
    })?;
    if kb1.mul(&inc_k) != inc_z {
        return Err(KinvariantError::NoSolution(
            "target tangent inclusion is inconsistent".into(),
        ));
    }
    let m3 = proj.mul(&inc_k);
    let q = mg
        .src
        .obstruction_projection
        .direct_sum(&mh.src.obstruction_projection)
        .hstack(&RationalMatrix::zero(
            mg.src.o_dim + mh.src.o_dim,
            cz.t_dim[w],
        ))
        .mul(&kb1);
    let m4_t = proj.transpose().solve(&q.transpose()).ok_or_else(|| {
        KinvariantError::NoSolution("obstruction comparison does not descend".into())
    })?;
    let m4 = m4_t.transpose();
    if m4.mul(&proj) != q {
        return Err(KinvariantError::NoSolution(
            "obstruction comparison is inconsistent".into(),
        ));
    }
    let m5 = mg.o_map.hstack(&tz.o_action[gamma].mul(&mh.o_map).neg());
    let sequence = vec![m1, m2, m3, m4, m5];
    let exact = seq_is_exact_closed(&sequence)
        .map_err(|e| KinvariantError::NoSolution(e.to_string()))?;
    let vdim_ok = t_dim as i64 - o_dim as i64
        == g.source.vdim + h.source.vdim - g.target.vdim;
    Ok(FibreChart {
        t_dim,
        o_dim,
        sequence,
        exact,
        vdim_ok,
    })
}

// ---------------------------------------------------------------------------
// Orientation signs
// ---------------------------------------------------------------------------

/// Sign of the determinant of a square matrix: `0` when singular.
fn det_sign(m: &RationalMatrix) -> i64 {
    let n = m.rows();
    if m.cols() != n {
        return 0;
    }
    let mut a: Vec<Vec<Rat>> = (0..n)
        .map(|i| (0..n).map(|j| m.get(i, j).clone()).collect())
        .collect();
    let zero = Rat::from_integer(0.into());
    let mut sign = 1i64;
    for col in 0..n {
        let Some(piv) = (col..n).find(|&r| a[r][col] != zero) else {
            return 0;
        };
        if piv != col {
            a.swap(piv, col);
            sign = -sign;
        }
        if a[col][col] < zero {
            sign = -sign;
        }
        for r in col + 1..n {
            if a[r][col] != zero {
                let factor = &a[r][col] / &a[col][col];
                for c in col..n {
                    let delta = &factor * &a[col][c];
                    a[r][c] = &a[r][c] - &delta;
                }
            }
        }
    }
    sign
}

/// The orientation sign of a coordinate change at bibundle point `p`:
/// the sign of the determinant-line isomorphism induced by the linear
/// exact sequence of the change, under the convention that bases are
/// concatenated source tangent first, then lifted target obstruction.
pub fn orientation_sign(m: &ChartMorphism, p: usize) -> Result<i64, KinvariantError> {
    let v = m.pi[p];
    let w = m.phi[p];
    let m1 = m.source.ds[v].vstack(&m.dphi[p]);
    let m2 = m.phihat[p].neg().hstack(&m.target.ds[w]);
    let exact = seq_is_exact_closed(&[m1.clone(), m2.clone()])
        .map_err(|e| KinvariantError::NotExact(e.to_string()))?;
    if !exact {
        return Err(KinvariantError::NotExact(format!(
            "the linearization at point {p} is not exact"
        )));
    }
    let ej = m.target.e_dim[w];
    let lift = m2
        .solve(&RationalMatrix::identity(ej))
        .ok_or_else(|| KinvariantError::NotExact("no lift of the obstruction basis".into()))?;
    let s = det_sign(&m1.hstack(&lift));
    if s == 0 {
        return Err(KinvariantError::NotExact(
            "the determinant comparison is singular".into(),
        ));
    }
    Ok(s)
}

/// Assign a sign to every chart of the atlas so that all coordinate
/// changes become orientation-preserving, as a parity 2-coloring of the
/// chart graph.  Fails when a change has inconsistent pointwise signs or
/// the parity constraints admit no solution.
pub fn orient_atlas(a: &crate::kspace::KuranishiAtlas) -> Result<Vec<i64>, KinvariantError> {
    let n = a.charts.len();
    // one parity constraint per ordered chart pair with nonempty overlap
    let mut edge: Vec<Vec<Option<i64>>> = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            let m = &a.changes[i][j];
            let mut sign = None;
            for p in m.p_dot() {
                let s = orientation_sign(m, p)?;
                match sign {
                    None => sign = Some(s),
                    Some(prev) if prev != s => {
                        return Err(KinvariantError::NotExact(format!(
                            "change ({i}, {j}) has inconsistent orientation signs"
                        )));
                    }
                    _ => {}
                }
            }
            edge[i][j] = sign;
        }
    }
    let mut colors: Vec<Option<i64>> = vec![None; n];
    for start in 0..n {
        if colors[start].is_some() {
            continue;
        }
        colors[start] = Some(1);
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let ci = colors[i].unwrap();
            for j in 0..n {
                let Some(s) = edge[i][j] else { continue };
                let want = ci * s;
                match colors[j] {
                    None => {
                        colors[j] = Some(want);
                        stack.push(j);
                    }
                    Some(c) if c != want => {
                        return Err(KinvariantError::NotExact(format!(
                            "no consistent orientation: conflict at charts {i} and {j}"
                        )));
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(colors.into_iter().map(|c| c.unwrap()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactlin::rat_i;
    use crate::kchart::{
        compose_morphisms, identity_morphism, restrict_morphism, ChartTwoMorphism, DiscreteChart,
    };
    use crate::kspace::{
        from_manifold, identity_space_morphism, identity_space_two_morphism, make_global,
        one_chart_space_morphism, validate_atlas, validate_space_morphism, KuranishiAtlas,
    };
    use std::collections::BTreeMap;

    /// One-point chart with trivial group, the given fibre dimensions, zero
    /// section value and the given section differential.
    fn point_chart(t: usize, e: usize, ds: RationalMatrix) -> DiscreteChart {
        DiscreteChart {
            n_points: 1,
            t_dim: vec![t],
            e_dim: vec![e],
            group: crate::exactlin::FinGroup::trivial(),
            action: vec![vec![0]],
            dgamma: vec![vec![RationalMatrix::identity(t)]],
            egamma: vec![vec![RationalMatrix::identity(e)]],
            s_val: vec![vec![rat_i(0); e]],
            ds: vec![ds],
            footprint_size: 1,
            psi: [(0, 0)].into_iter().collect(),
        }
    }

    /// Morphism between one-point single-chart atlases with the given
    /// linear parts on the unique bibundle point.
    fn point_morphism(
        a: &KuranishiAtlas,
        b: &KuranishiAtlas,
        dphi: RationalMatrix,
        phihat: RationalMatrix,
    ) -> crate::kspace::SpaceMorphism {
        let m = ChartMorphism {
            source: a.charts[0].clone(),
            target: b.charts[0].clone(),
            f_map: vec![0],
            domain: [0].into_iter().collect(),
            n_p: 1,
            act_i: vec![vec![0]],
            act_j: vec![vec![0]],
            pi: vec![0],
            phi: vec![0],
            dphi: vec![dphi],
            phihat: vec![phihat],
        };
        let f = one_chart_space_morphism(a, b, &m).unwrap();
        assert!(validate_space_morphism(&f).is_ok());
        f
    }

    /// One-point Z/2 chart acting trivially on the point, with the given
    /// linear actions of the generator.
    fn z2_chart(t: usize, e: usize, dg: RationalMatrix, eg: RationalMatrix) -> DiscreteChart {
        DiscreteChart {
            n_points: 1,
            t_dim: vec![t],
            e_dim: vec![e],
            group: crate::exactlin::FinGroup::cyclic(2),
            action: vec![vec![0], vec![0]],
            dgamma: vec![vec![RationalMatrix::identity(t)], vec![dg]],
            egamma: vec![vec![RationalMatrix::identity(e)], vec![eg]],
            s_val: vec![vec![rat_i(0); e]],
            ds: vec![RationalMatrix::zero(e, t)],
            footprint_size: 1,
            psi: [(0, 0)].into_iter().collect(),
        }
    }

    #[test]
    fn point_invariants_examples() {
        // manifold chart: trivial group, no obstruction, tangent = vdim
        let a = from_manifold(&[2]).unwrap();
        let tr = point_invariants(&a, 0, None).unwrap();
        assert_eq!(tr.group.order(), 1);
        assert_eq!(tr.t_dim, 2);
        assert_eq!(tr.o_dim, 0);

        // rank-one section differential eats one tangent and all obstruction
        let c = point_chart(3, 1, RationalMatrix::from_i64(&[&[1, 0, 0]]));
        let a = make_global(&c).unwrap();
        assert_eq!(a.vdim, 2);
        let tr = point_invariants(&a, 0, None).unwrap();
        assert_eq!(tr.t_dim, 2);
        assert_eq!(tr.o_dim, 0);

        // Z/2 acting by the sign on a one-dimensional obstruction
        let c = z2_chart(
            0,
            1,
            RationalMatrix::identity(0),
            RationalMatrix::from_i64(&[&[-1]]),
        );
        let a = make_global(&c).unwrap();
        let tr = point_invariants(&a, 0, None).unwrap();
        assert_eq!(tr.group.order(), 2);
        assert_eq!(tr.o_dim, 1);
        assert_eq!(tr.o_action[1], RationalMatrix::from_i64(&[&[-1]]));
        assert_eq!(tr.t_dim as i64 - tr.o_dim as i64, a.vdim);
    }

    #[test]
    fn invariants_compare_finds_witnesses() {
        // same choice twice: the identity witness through the identity change
        let c = z2_chart(0, 0, RationalMatrix::identity(0), RationalMatrix::identity(0));
        let a = make_global(&c).unwrap();
        let wits = invariants_compare(&a, 0, (0, 0), (0, 0)).unwrap();
        assert_eq!(wits.len(), 1);
        let w = &wits[0];
        assert!((0..2).all(|g| w.g_map.apply(g) == g));
        assert!(w.is_isomorphism());
        assert_eq!(2 % wits.len(), 0);
    }

    #[test]
    fn morphism_invariants_of_identity_is_identity() {
        let a = from_manifold(&[2]).unwrap();
        let id = identity_space_morphism(&a);
        let mt = morphism_invariants(&id, 0, None).unwrap();
        assert_eq!(mt.t_map, RationalMatrix::identity(2));
        assert_eq!(mt.o_map, RationalMatrix::identity(0));
        assert!(mt.is_isomorphism());
        assert!(equivalence_criterion(&id));

        // a collapse of two points is not an equivalence
        let a2 = from_manifold(&[0, 0]).unwrap();
        let b = from_manifold(&[0]).unwrap();
        let m = ChartMorphism {
            source: a2.charts[0].clone(),
            target: b.charts[0].clone(),
            f_map: vec![0, 0],
            domain: [0, 1].into_iter().collect(),
            n_p: 2,
            act_i: vec![vec![0, 1]],
            act_j: vec![vec![0, 1]],
            pi: vec![0, 1],
            phi: vec![0, 0],
            dphi: vec![RationalMatrix::identity(0); 2],
            phihat: vec![RationalMatrix::identity(0); 2],
        };
        let f = one_chart_space_morphism(&a2, &b, &m).unwrap();
        assert!(!equivalence_criterion(&f));
    }

    #[test]
    fn conjugation_by_the_base_point_choice() {
        // on the Z/2 atlas the identity fibre has two points; the triples
        // computed at both are conjugate (equal here, the group is abelian
        // and the fibres are zero-dimensional)
        let c = z2_chart(0, 0, RationalMatrix::identity(0), RationalMatrix::identity(0));
        let a = make_global(&c).unwrap();
        let id = identity_space_morphism(&a);
        let m0 = morphism_invariants(&id, 0, Some(0)).unwrap();
        let m1 = morphism_invariants(&id, 0, Some(1)).unwrap();
        assert!((0..2).all(|g| m0.g_map.apply(g) == m1.g_map.apply(g)));
        assert_eq!(m0.t_map, m1.t_map);
        assert_eq!(m0.o_map, m1.o_map);
    }

    #[test]
    fn two_cell_and_composition_elements_are_identities_in_trivial_cases() {
        let c = z2_chart(0, 0, RationalMatrix::identity(0), RationalMatrix::identity(0));
        let a = make_global(&c).unwrap();
        let id = identity_space_morphism(&a);
        let eta = identity_space_two_morphism(&id);
        let e = two_morphism_element(&eta, 0).unwrap();
        let tr = point_invariants(&a, 0, None).unwrap();
        assert_eq!(tr.elements[e], tr.group.identity());

        // trivial middle isotropy: the comparison element is the identity
        let x = from_manifold(&[0]).unwrap();
        let y = from_manifold(&[1]).unwrap();
        let z = from_manifold(&[2]).unwrap();
        let f = point_morphism(&x, &y, RationalMatrix::zero(1, 0), RationalMatrix::zero(0, 0));
        let g = point_morphism(&y, &z, RationalMatrix::zero(2, 1), RationalMatrix::zero(0, 0));
        assert_eq!(composition_element(&g, &f, 0).unwrap(), 0);
    }

    #[test]
    fn transversality_and_submersions() {
        // a manifold target is weakly transverse for any pair
        let x = from_manifold(&[2]).unwrap();
        let z = from_manifold(&[4]).unwrap();
        let g = point_morphism(&x, &z, RationalMatrix::zero(4, 2), RationalMatrix::zero(0, 0));
        let rep = transversality(&g, &g, TransMode::Weak).unwrap();
        assert!(rep.ok);
        assert!(submersion_check(&g, TransMode::Weak).unwrap());

        // the identity on a manifold is strongly transverse with itself
        let m = from_manifold(&[1]).unwrap();
        let idm = identity_space_morphism(&m);
        assert!(transversality(&idm, &idm, TransMode::Strong).unwrap().ok);
        assert!(submersion_check(&idm, TransMode::Strong).unwrap());

        // an obstructed target with zero obstruction maps fails, with witness
        let zo = make_global(&point_chart(0, 1, RationalMatrix::zero(1, 0))).unwrap();
        let pt = from_manifold(&[0]).unwrap();
        let go = point_morphism(&pt, &zo, RationalMatrix::zero(0, 0), RationalMatrix::zero(1, 0));
        let rep = transversality(&go, &go, TransMode::Weak).unwrap();
        assert!(!rep.ok);
        assert_eq!(rep.witness, Some((0, 0, 0)));
        assert!(!submersion_check(&go, TransMode::Weak).unwrap());
        // but the identity on the obstructed space is a submersion
        let idz = identity_space_morphism(&zo);
        assert!(submersion_check(&idz, TransMode::Strong).unwrap());
    }

    #[test]
    fn fibre_product_points_and_double_cosets() {
        // over a point the fibre product is the product of the point sets
        let x = from_manifold(&[1, 1]).unwrap();
        let y = from_manifold(&[2]).unwrap();
        let z = from_manifold(&[0]).unwrap();
        let cx = &x.charts[0];
        let m = ChartMorphism {
            source: cx.clone(),
            target: z.charts[0].clone(),
            f_map: vec![0, 0],
            domain: [0, 1].into_iter().collect(),
            n_p: 2,
            act_i: vec![vec![0, 1]],
            act_j: vec![vec![0, 1]],
            pi: vec![0, 1],
            phi: vec![0, 0],
            dphi: vec![RationalMatrix::zero(0, 1); 2],
            phihat: vec![RationalMatrix::identity(0); 2],
        };
        let g = one_chart_space_morphism(&x, &z, &m).unwrap();
        let h = point_morphism(&y, &z, RationalMatrix::zero(0, 2), RationalMatrix::zero(0, 0));
        let pts = fibre_product_points(&g, &h).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().all(|p| p.coset.len() == 1 && p.isotropy_order == 1));

        // Z/2 target isotropy with trivial images: two double cosets
        let zz = make_global(&z2_chart(
            0,
            0,
            RationalMatrix::identity(0),
            RationalMatrix::identity(0),
        ))
        .unwrap();
        let pt = from_manifold(&[0]).unwrap();
        let mm = ChartMorphism {
            source: pt.charts[0].clone(),
            target: zz.charts[0].clone(),
            f_map: vec![0],
            domain: [0].into_iter().collect(),
            n_p: 2,
            act_i: vec![vec![0, 1]],
            act_j: vec![vec![0, 1], vec![1, 0]],
            pi: vec![0, 0],
            phi: vec![0, 0],
            dphi: vec![RationalMatrix::identity(0); 2],
            phihat: vec![RationalMatrix::identity(0); 2],
        };
        let gm = one_chart_space_morphism(&pt, &zz, &mm).unwrap();
        assert!(validate_space_morphism(&gm).is_ok());
        let pts = fibre_product_points(&gm, &gm).unwrap();
        assert_eq!(pts.len(), 2);
        for p in &pts {
            assert_eq!(p.coset.len() * p.isotropy_order, 1);
        }
    }

    #[test]
    fn fibre_product_chart_certificates() {
        // over a point: the product, tangent and obstruction add up
        let x = from_manifold(&[2]).unwrap();
        let y = from_manifold(&[3]).unwrap();
        let z = from_manifold(&[0]).unwrap();
        let g = point_morphism(&x, &z, RationalMatrix::zero(0, 2), RationalMatrix::zero(0, 0));
        let h = point_morphism(&y, &z, RationalMatrix::zero(0, 3), RationalMatrix::zero(0, 0));
        let fc = fibre_product_chart(&g, &h, 0, 0, 0).unwrap();
        assert_eq!((fc.t_dim, fc.o_dim), (5, 0));
        assert!(fc.exact && fc.vdim_ok);

        // vdim 2 + 3 − 4 = 1, with an honest obstruction space
        let z4 = from_manifold(&[4]).unwrap();
        let g = point_morphism(&x, &z4, RationalMatrix::zero(4, 2), RationalMatrix::zero(0, 0));
        let h = point_morphism(&y, &z4, RationalMatrix::zero(4, 3), RationalMatrix::zero(0, 0));
        let fc = fibre_product_chart(&g, &h, 0, 0, 0).unwrap();
        assert_eq!(fc.t_dim as i64 - fc.o_dim as i64, 1);
        assert!(fc.exact && fc.vdim_ok);

        // a strongly transverse pair yields no obstruction
        let m = from_manifold(&[1]).unwrap();
        let idm = identity_space_morphism(&m);
        let fc = fibre_product_chart(&idm, &idm, 0, 0, 0).unwrap();
        assert_eq!(fc.o_dim, 0);
        assert!(fc.exact && fc.vdim_ok);
        assert_eq!(fc.t_dim, 1);

        // an obstructed target: the self-fibre-product of its identity has
        // a one-dimensional obstruction space and vdim −1
        let zo = make_global(&point_chart(0, 1, RationalMatrix::zero(1, 0))).unwrap();
        let idz = identity_space_morphism(&zo);
        let fc = fibre_product_chart(&idz, &idz, 0, 0, 0).unwrap();
        assert_eq!((fc.t_dim, fc.o_dim), (0, 1));
        assert!(fc.exact && fc.vdim_ok);
    }

    // ----- orientation -----

    /// Chart with one tangent direction per point, trivial group.
    fn line_chart(psi: &[usize]) -> DiscreteChart {
        let n = psi.len();
        DiscreteChart {
            n_points: n,
            t_dim: vec![1; n],
            e_dim: vec![0; n],
            group: crate::exactlin::FinGroup::trivial(),
            action: vec![(0..n).collect()],
            dgamma: vec![vec![RationalMatrix::identity(1); n]],
            egamma: vec![vec![RationalMatrix::identity(0); n]],
            s_val: vec![Vec::new(); n],
            ds: vec![RationalMatrix::zero(0, 1); n],
            footprint_size: 3,
            psi: psi.iter().enumerate().map(|(v, &x)| (v, x)).collect(),
        }
    }

    /// Coordinate change between line charts over their common footprint,
    /// with the given sign as tangent map at every point.
    fn line_change(src: &DiscreteChart, tgt: &DiscreteChart, sign: i64) -> ChartMorphism {
        let pts: Vec<usize> = (0..src.n_points)
            .filter(|v| tgt.psi.values().any(|&y| y == src.psi[v]))
            .collect();
        let phi: Vec<usize> = pts
            .iter()
            .map(|v| {
                let x = src.psi[v];
                (0..tgt.n_points).find(|w| tgt.psi[w] == x).unwrap()
            })
            .collect();
        let n = pts.len();
        ChartMorphism {
            source: src.clone(),
            target: tgt.clone(),
            f_map: vec![0, 1, 2],
            domain: pts.iter().map(|v| src.psi[v]).collect(),
            n_p: n,
            act_i: vec![(0..n).collect()],
            act_j: vec![(0..n).collect()],
            pi: pts,
            phi,
            dphi: vec![RationalMatrix::from_i64(&[&[sign]]); n],
            phihat: vec![RationalMatrix::identity(0); n],
        }
    }

    /// The unique comparison cell between trivial-group morphisms.
    fn unique_cell(src: &ChartMorphism, tgt_full: &ChartMorphism) -> ChartTwoMorphism {
        let tgt = restrict_morphism(tgt_full, &src.domain).unwrap();
        let mut lambda = BTreeMap::new();
        let mut lambda_hat = BTreeMap::new();
        for p in src.p_dot() {
            let q = (0..tgt.n_p).find(|&q| tgt.pi[q] == src.pi[p]).unwrap();
            lambda.insert(p, q);
            lambda_hat.insert(
                p,
                RationalMatrix::zero(tgt.target.t_dim[tgt.phi[q]], src.source.e_dim[src.pi[p]]),
            );
        }
        ChartTwoMorphism {
            source: src.clone(),
            target: tgt,
            lambda,
            lambda_hat,
        }
    }

    /// Three line charts around a cycle of base points, with edge signs.
    fn cycle_atlas(s01: i64, s12: i64, s20: i64) -> KuranishiAtlas {
        let charts = [line_chart(&[0, 1]), line_chart(&[1, 2]), line_chart(&[2, 0])];
        let sign = [[1, s01, s20], [s01, 1, s12], [s20, s12, 1]];
        let mut changes = Vec::new();
        for i in 0..3 {
            let mut row = Vec::new();
            for j in 0..3 {
                if i == j {
                    row.push(identity_morphism(&charts[i]).unwrap());
                } else {
                    row.push(line_change(&charts[i], &charts[j], sign[i][j]));
                }
            }
            changes.push(row);
        }
        let mut cells = Vec::new();
        for i in 0..3 {
            let mut plane = Vec::new();
            for j in 0..3 {
                let mut row = Vec::new();
                for k in 0..3 {
                    let comp = compose_morphisms(&changes[j][k], &changes[i][j]).unwrap();
                    row.push(unique_cell(&comp, &changes[i][k]));
                }
                plane.push(row);
            }
            cells.push(plane);
        }
        KuranishiAtlas {
            footprint_size: 3,
            charts: charts.to_vec(),
            changes,
            cells,
            vdim: 1,
        }
    }

    #[test]
    fn orientation_signs_and_atlas_coloring() {
        // identity change: every point has sign +1
        let a = from_manifold(&[1, 1]).unwrap();
        let idm = &a.changes[0][0];
        for p in idm.p_dot() {
            assert_eq!(orientation_sign(idm, p).unwrap(), 1);
        }

        // a change reversing one tangent direction has sign −1
        let cyc = cycle_atlas(1, 1, -1);
        let rep = validate_atlas(&cyc);
        assert!(rep.is_ok(), "{:?}", rep.violations);
        let m = &cyc.changes[2][0];
        assert_eq!(orientation_sign(m, m.p_dot()[0]).unwrap(), -1);

        // an odd cycle of signs admits no consistent chart orientation
        assert!(orient_atlas(&cyc).is_err());

        // flipping the odd edge makes the atlas orientable
        let ok = cycle_atlas(1, 1, 1);
        assert!(validate_atlas(&ok).is_ok());
        assert_eq!(orient_atlas(&ok).unwrap(), vec![1, 1, 1]);

        // an even number of reversals is also consistent, with mixed signs
        let ev = cycle_atlas(-1, 1, -1);
        assert!(validate_atlas(&ev).is_ok());
        let colors = orient_atlas(&ev).unwrap();
        assert_eq!(colors[0] * colors[1], -1);
        assert_eq!(colors[1], colors[2]);
    }
}
