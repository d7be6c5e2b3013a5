//! Global structures on a finite base set: atlases of charts glued by
//! coordinate changes with coherence 2-cells, space-level 1- and
//! 2-morphisms, descent-based composition with its comparison cells,
//! products, and pointwise classification.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::descent;
use crate::exactlin::{FinGroup, RationalMatrix};
use crate::kchart::{
    associator, compose_morphisms, hom_stack, identity_morphism, invert_two_morphism,
    is_coordinate_change, restrict_morphism, restrict_two_morphism, unitors, validate_chart,
    validate_morphism, validate_two_morphism, vcompose, hcompose, ChartMorphism, ChartTwoMorphism,
    DiscreteChart, ValidationReport,
};

#[derive(Error, Debug)]
pub enum KspaceError {
    #[error("invalid atlas: {0}")]
    InvalidAtlas(String),
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("invalid morphism: {0}")]
    InvalidMorphism(String),
    #[error("not composable: {0}")]
    NotComposable(String),
    #[error("cocycle violation: {0}")]
    CocycleViolation(String),
    #[error("no gluing: {0}")]
    NoGluing(String),
    #[error("no solution: {0}")]
    NoSolution(String),
}

fn intersect(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> BTreeSet<usize> {
    a.intersection(b).copied().collect()
}

fn preimage(map: &[usize], s: &BTreeSet<usize>) -> BTreeSet<usize> {
    (0..map.len()).filter(|&x| s.contains(&map[x])).collect()
}

// ---------------------------------------------------------------------------
// Atlases
// ---------------------------------------------------------------------------

/// An atlas over a finite base set `X = {0, …, footprint_size−1}`: a chart
/// for each index, a coordinate change `Φ_ij` for every ordered pair over
/// the footprint overlap, and a composition 2-cell `Λ_ijk: Φ_jk∘Φ_ij ⇒
/// Φ_ik` for every triple, all of constant virtual dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct KuranishiAtlas {
    pub footprint_size: usize,
    pub charts: Vec<DiscreteChart>,
    /// `changes[i][j]` is `Φ_ij` over `Im ψ_i ∩ Im ψ_j`.
    pub changes: Vec<Vec<ChartMorphism>>,
    /// `cells[i][j][k]` is `Λ_ijk: Φ_jk∘Φ_ij ⇒ Φ_ik` over the triple
    /// overlap.
    pub cells: Vec<Vec<Vec<ChartTwoMorphism>>>,
    pub vdim: i64,
}

impl KuranishiAtlas {
    pub fn n_charts(&self) -> usize {
        self.charts.len()
    }

    /// The footprint of chart `i` as a subset of the base set.
    pub fn footprint(&self, i: usize) -> BTreeSet<usize> {
        self.charts[i].footprint_image()
    }

    pub fn overlap(&self, i: usize, j: usize) -> BTreeSet<usize> {
        intersect(&self.footprint(i), &self.footprint(j))
    }
}

/// Check every atlas invariant: chart validity and constant virtual
/// dimension, coordinate-change typing and the change criterion, covering,
/// identity changes on the diagonal, unit composition cells, and the
/// associativity coherence of the `Λ` cells over every quadruple overlap.
pub fn validate_atlas(a: &KuranishiAtlas) -> ValidationReport {
    let mut r = ValidationReport::default();
    let n = a.n_charts();
    if a.changes.len() != n
        || a.changes.iter().any(|row| row.len() != n)
        || a.cells.len() != n
        || a.cells
            .iter()
            .any(|row| row.len() != n || row.iter().any(|col| col.len() != n))
    {
        r.violations
            .push("change/cell tables do not match the chart count".into());
        return r;
    }
    for (i, c) in a.charts.iter().enumerate() {
        let rep = validate_chart(c);
        if !rep.is_ok() {
            r.violations
                .push(format!("chart {i}: {}", rep.violations.join("; ")));
        }
        if c.footprint_size != a.footprint_size {
            r.violations
                .push(format!("chart {i} has a different base set size"));
        }
        if rep.is_ok() && c.vdim() != Some(a.vdim) {
            r.violations
                .push(format!("chart {i} has virtual dimension {:?}", c.vdim()));
        }
    }
    if !r.is_ok() {
        return r;
    }
    // covering
    let mut covered: BTreeSet<usize> = BTreeSet::new();
    for i in 0..n {
        covered.extend(a.footprint(i));
    }
    if covered.len() != a.footprint_size {
        r.violations
            .push("chart footprints do not cover the base set".into());
    }
    let id_map: Vec<usize> = (0..a.footprint_size).collect();
    // coordinate changes
    for i in 0..n {
        for j in 0..n {
            let m = &a.changes[i][j];
            let tag = format!("change ({i},{j})");
            if m.source != a.charts[i] || m.target != a.charts[j] {
                r.violations.push(format!("{tag}: wrong end charts"));
                continue;
            }
            if m.f_map != id_map {
                r.violations
                    .push(format!("{tag}: underlying map is not the identity"));
                continue;
            }
            if m.domain != a.overlap(i, j) {
                r.violations
                    .push(format!("{tag}: domain is not the footprint overlap"));
                continue;
            }
            match is_coordinate_change(m) {
                Ok(rep) if rep.ok => {}
                Ok(_) => r
                    .violations
                    .push(format!("{tag}: fails the coordinate-change criterion")),
                Err(e) => r.violations.push(format!("{tag}: {e}")),
            }
        }
    }
    if !r.is_ok() {
        return r;
    }
    // identity on the diagonal
    for i in 0..n {
        match identity_morphism(&a.charts[i]) {
            Ok(id) => {
                if a.changes[i][i] != id {
                    r.violations
                        .push(format!("change ({i},{i}) is not the identity"));
                }
            }
            Err(e) => r.violations.push(format!("chart {i}: {e}")),
        }
    }
    // composition cells: typing
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let l = &a.cells[i][j][k];
                let tag = format!("cell ({i},{j},{k})");
                let comp = match compose_morphisms(&a.changes[j][k], &a.changes[i][j]) {
                    Ok(c) => c,
                    Err(e) => {
                        r.violations.push(format!("{tag}: {e}"));
                        continue;
                    }
                };
                if l.source != comp {
                    r.violations
                        .push(format!("{tag}: source is not the composite change"));
                    continue;
                }
                let tgt = match restrict_morphism(&a.changes[i][k], &comp.domain) {
                    Ok(t) => t,
                    Err(e) => {
                        r.violations.push(format!("{tag}: {e}"));
                        continue;
                    }
                };
                if l.target != tgt {
                    r.violations
                        .push(format!("{tag}: target is not the restricted change"));
                    continue;
                }
                let rep = validate_two_morphism(l);
                if !rep.is_ok() {
                    r.violations
                        .push(format!("{tag}: {}", rep.violations.join("; ")));
                }
            }
        }
    }
    if !r.is_ok() {
        return r;
    }
    // unit cells
    for i in 0..n {
        for j in 0..n {
            let (beta, gamma) = match unitors(&a.changes[i][j]) {
                Ok(u) => u,
                Err(e) => {
                    r.violations.push(format!("unitors of change ({i},{j}): {e}"));
                    continue;
                }
            };
            if a.cells[i][i][j] != beta {
                r.violations
                    .push(format!("cell ({i},{i},{j}) is not the right unit cell"));
            }
            if a.cells[i][j][j] != gamma {
                r.violations
                    .push(format!("cell ({i},{j},{j}) is not the left unit cell"));
            }
        }
    }
    // associativity coherence on quadruple overlaps
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let tag = format!("quadruple ({i},{j},{k},{l})");
                    let res = (|| -> Result<bool, crate::kchart::KchartError> {
                        let top = hcompose(
                            &a.cells[j][k][l],
                            &ChartTwoMorphism::identity(&a.changes[i][j]),
                        )?;
                        let q = top.source.domain.clone();
                        let lhs = vcompose(&restrict_two_morphism(&a.cells[i][j][l], &q)?, &top)?;
                        let alpha =
                            associator(&a.changes[k][l], &a.changes[j][k], &a.changes[i][j])?;
                        let mid = hcompose(
                            &ChartTwoMorphism::identity(&a.changes[k][l]),
                            &a.cells[i][j][k],
                        )?;
                        let rhs = vcompose(
                            &restrict_two_morphism(&a.cells[i][k][l], &q)?,
                            &vcompose(&mid, &alpha)?,
                        )?;
                        Ok(lhs == rhs)
                    })();
                    match res {
                        Ok(true) => {}
                        Ok(false) => r
                            .violations
                            .push(format!("{tag}: composition cells are incoherent")),
                        Err(e) => r.violations.push(format!("{tag}: {e}")),
                    }
                }
            }
        }
    }
    r
}

/// The one-chart atlas of a single chart datum: the base set is the orbit
/// set of the zero locus, the footprint map is the orbit projection, the
/// change is the identity and the composition cell its unit cell.
///
/// The footprint fields of the input are recomputed, so any placeholder
/// values are accepted.
pub fn make_global(c: &DiscreteChart) -> Result<KuranishiAtlas, KspaceError> {
    let mut chart = c.clone();
    // orbit set of the zero locus
    let ord = chart.group.order();
    let mut psi = std::collections::BTreeMap::new();
    let mut n_orbits = 0;
    let zeros: Vec<usize> = (0..chart.n_points)
        .filter(|&v| chart.is_zero_point(v))
        .collect();
    for &v in &zeros {
        if psi.contains_key(&v) {
            continue;
        }
        for g in 0..ord {
            psi.insert(chart.action[g][v], n_orbits);
        }
        n_orbits += 1;
    }
    chart.psi = psi;
    chart.footprint_size = n_orbits;
    let rep = validate_chart(&chart);
    if !rep.is_ok() {
        return Err(KspaceError::InvalidChart(rep.violations.join("; ")));
    }
    let vdim = chart
        .vdim()
        .ok_or_else(|| KspaceError::InvalidChart("non-constant virtual dimension".into()))?;
    let phi = identity_morphism(&chart).map_err(|e| KspaceError::InvalidChart(e.to_string()))?;
    let (beta, _) = unitors(&phi).map_err(|e| KspaceError::InvalidChart(e.to_string()))?;
    Ok(KuranishiAtlas {
        footprint_size: n_orbits,
        charts: vec![chart],
        changes: vec![vec![phi]],
        cells: vec![vec![vec![beta]]],
        vdim,
    })
}

/// The atlas of a plain finite set with a tangent dimension per point:
/// zero obstruction bundle, trivial group, one chart, identity footprint
/// map.
pub fn from_manifold(t_dims: &[usize]) -> Result<KuranishiAtlas, KspaceError> {
    let n = t_dims.len();
    let chart = DiscreteChart {
        n_points: n,
        t_dim: t_dims.to_vec(),
        e_dim: vec![0; n],
        group: FinGroup::trivial(),
        action: vec![(0..n).collect()],
        dgamma: vec![t_dims.iter().map(|&t| RationalMatrix::identity(t)).collect()],
        egamma: vec![vec![RationalMatrix::identity(0); n]],
        s_val: vec![Vec::new(); n],
        ds: t_dims.iter().map(|&t| RationalMatrix::zero(0, t)).collect(),
        footprint_size: n,
        psi: (0..n).map(|v| (v, v)).collect(),
    };
    make_global(&chart)
}

// ---------------------------------------------------------------------------
// Products
// ---------------------------------------------------------------------------

fn product_chart(ca: &DiscreteChart, cb: &DiscreteChart) -> DiscreteChart {
    let na = ca.n_points;
    let nb = cb.n_points;
    let oa = ca.group.order();
    let ob = cb.group.order();
    let group = FinGroup::product(&ca.group, &cb.group);
    let idx = |v: usize, w: usize| v * nb + w;
    let gidx = |g: usize, h: usize| g * ob + h;
    let mut action = vec![vec![0; na * nb]; oa * ob];
    let mut dgamma = vec![vec![RationalMatrix::zero(0, 0); na * nb]; oa * ob];
    let mut egamma = vec![vec![RationalMatrix::zero(0, 0); na * nb]; oa * ob];
    for g in 0..oa {
        for h in 0..ob {
            for v in 0..na {
                for w in 0..nb {
                    action[gidx(g, h)][idx(v, w)] = idx(ca.action[g][v], cb.action[h][w]);
                    dgamma[gidx(g, h)][idx(v, w)] = ca.dgamma[g][v].direct_sum(&cb.dgamma[h][w]);
                    egamma[gidx(g, h)][idx(v, w)] = ca.egamma[g][v].direct_sum(&cb.egamma[h][w]);
                }
            }
        }
    }
    let mut t_dim = vec![0; na * nb];
    let mut e_dim = vec![0; na * nb];
    let mut s_val = vec![Vec::new(); na * nb];
    let mut ds = vec![RationalMatrix::zero(0, 0); na * nb];
    let mut psi = std::collections::BTreeMap::new();
    for v in 0..na {
        for w in 0..nb {
            t_dim[idx(v, w)] = ca.t_dim[v] + cb.t_dim[w];
            e_dim[idx(v, w)] = ca.e_dim[v] + cb.e_dim[w];
            let mut s = ca.s_val[v].clone();
            s.extend(cb.s_val[w].iter().cloned());
            s_val[idx(v, w)] = s;
            ds[idx(v, w)] = ca.ds[v].direct_sum(&cb.ds[w]);
            if let (Some(&x), Some(&y)) = (ca.psi.get(&v), cb.psi.get(&w)) {
                psi.insert(idx(v, w), x * cb.footprint_size + y);
            }
        }
    }
    DiscreteChart {
        n_points: na * nb,
        t_dim,
        e_dim,
        group,
        action,
        dgamma,
        egamma,
        s_val,
        ds,
        footprint_size: ca.footprint_size * cb.footprint_size,
        psi,
    }
}

fn product_morphism(
    ma: &ChartMorphism,
    mb: &ChartMorphism,
    source: &DiscreteChart,
    target: &DiscreteChart,
) -> ChartMorphism {
    let nb = mb.n_p;
    let idx = |p: usize, q: usize| p * nb + q;
    let oia = ma.source.group.order();
    let oib = mb.source.group.order();
    let oja = ma.target.group.order();
    let ojb = mb.target.group.order();
    let mut act_i = vec![vec![0; ma.n_p * nb]; oia * oib];
    let mut act_j = vec![vec![0; ma.n_p * nb]; oja * ojb];
    let mut pi = vec![0; ma.n_p * nb];
    let mut phi = vec![0; ma.n_p * nb];
    let mut dphi = vec![RationalMatrix::zero(0, 0); ma.n_p * nb];
    let mut phihat = vec![RationalMatrix::zero(0, 0); ma.n_p * nb];
    for p in 0..ma.n_p {
        for q in 0..nb {
            let t = idx(p, q);
            pi[t] = ma.pi[p] * mb.source.n_points + mb.pi[q];
            phi[t] = ma.phi[p] * mb.target.n_points + mb.phi[q];
            dphi[t] = ma.dphi[p].direct_sum(&mb.dphi[q]);
            phihat[t] = ma.phihat[p].direct_sum(&mb.phihat[q]);
            for g in 0..oia {
                for h in 0..oib {
                    act_i[g * oib + h][t] = idx(ma.act_i[g][p], mb.act_i[h][q]);
                }
            }
            for g in 0..oja {
                for h in 0..ojb {
                    act_j[g * ojb + h][t] = idx(ma.act_j[g][p], mb.act_j[h][q]);
                }
            }
        }
    }
    let fsb = mb.source.footprint_size;
    let tsb = mb.target.footprint_size;
    let mut f_map = vec![0; ma.f_map.len() * fsb];
    for x in 0..ma.f_map.len() {
        for y in 0..fsb {
            f_map[x * fsb + y] = ma.f_map[x] * tsb + mb.f_map[y];
        }
    }
    let mut domain = BTreeSet::new();
    for &x in &ma.domain {
        for &y in &mb.domain {
            domain.insert(x * fsb + y);
        }
    }
    ChartMorphism {
        source: source.clone(),
        target: target.clone(),
        f_map,
        domain,
        n_p: ma.n_p * nb,
        act_i,
        act_j,
        pi,
        phi,
        dphi,
        phihat,
    }
}

/// Relabel the bibundle points of a morphism by the permutation
/// `new_of_old`, transporting the anchor maps, the actions, and the
/// linear data.
fn relabel_bibundle(m: &ChartMorphism, new_of_old: &[usize]) -> ChartMorphism {
    let mut out = m.clone();
    for p in 0..m.n_p {
        let t = new_of_old[p];
        out.pi[t] = m.pi[p];
        out.phi[t] = m.phi[p];
        out.dphi[t] = m.dphi[p].clone();
        out.phihat[t] = m.phihat[p].clone();
    }
    for g in 0..m.act_i.len() {
        for p in 0..m.n_p {
            out.act_i[g][new_of_old[p]] = new_of_old[m.act_i[g][p]];
        }
    }
    for g in 0..m.act_j.len() {
        for p in 0..m.n_p {
            out.act_j[g][new_of_old[p]] = new_of_old[m.act_j[g][p]];
        }
    }
    out
}

/// The product atlas: charts, changes, and cells are componentwise
/// products; virtual dimensions add; the base set is the product set with
/// `(x, y) ↦ x·|Y| + y`.
pub fn product(a: &KuranishiAtlas, b: &KuranishiAtlas) -> Result<KuranishiAtlas, KspaceError> {
    let na = a.n_charts();
    let nb = b.n_charts();
    let charts: Vec<DiscreteChart> = (0..na * nb)
        .map(|t| product_chart(&a.charts[t / nb], &b.charts[t % nb]))
        .collect();
    let mut changes = Vec::with_capacity(na * nb);
    for s in 0..na * nb {
        let mut row = Vec::with_capacity(na * nb);
        for t in 0..na * nb {
            row.push(product_morphism(
                &a.changes[s / nb][t / nb],
                &b.changes[s % nb][t % nb],
                &charts[s],
                &charts[t],
            ));
        }
        changes.push(row);
    }
    // The product of two identity bibundles carries the pair labelling
    // ((v,g),(w,h)), while the identity of the product chart is labelled
    // ((v,w),(g,h)).  Relabel each diagonal change so that it is literally
    // the identity, and keep a table from pair labels to actual labels so
    // the cells below can still decode composite representatives.
    let mut label_of: Vec<Vec<Vec<usize>>> = (0..na * nb)
        .map(|s| {
            (0..na * nb)
                .map(|t| (0..changes[s][t].n_p).collect())
                .collect()
        })
        .collect();
    for s in 0..na * nb {
        let (ca, cb) = (&a.charts[s / nb], &b.charts[s % nb]);
        let (nap, oa) = (ca.n_points, ca.group.order());
        let (nbp, ob) = (cb.n_points, cb.group.order());
        let mut perm = vec![0; changes[s][s].n_p];
        for va in 0..nap {
            for ga in 0..oa {
                for wb in 0..nbp {
                    for hb in 0..ob {
                        let old = (va * oa + ga) * (nbp * ob) + (wb * ob + hb);
                        let new = (va * nbp + wb) * (oa * ob) + (ga * ob + hb);
                        perm[old] = new;
                    }
                }
            }
        }
        changes[s][s] = relabel_bibundle(&changes[s][s], &perm);
        label_of[s][s] = perm;
    }
    let pair_of: Vec<Vec<Vec<(usize, usize)>>> = (0..na * nb)
        .map(|s| {
            (0..na * nb)
                .map(|t| {
                    let npb = b.changes[s % nb][t % nb].n_p;
                    let mut dec = vec![(0, 0); changes[s][t].n_p];
                    for (pair, &lab) in label_of[s][t].iter().enumerate() {
                        dec[lab] = (pair / npb, pair % npb);
                    }
                    dec
                })
                .collect()
        })
        .collect();
    let mut cells = Vec::with_capacity(na * nb);
    for s in 0..na * nb {
        let mut plane = Vec::with_capacity(na * nb);
        for t in 0..na * nb {
            let mut row = Vec::with_capacity(na * nb);
            for u in 0..na * nb {
                row.push(
                    product_cell(
                        a, b, s / nb, t / nb, u / nb, s % nb, t % nb, u % nb, &changes,
                        &label_of, &pair_of,
                    )
                    .map_err(|e| KspaceError::InvalidAtlas(e.to_string()))?,
                );
            }
            plane.push(row);
        }
        cells.push(plane);
    }
    Ok(KuranishiAtlas {
        footprint_size: a.footprint_size * b.footprint_size,
        charts,
        changes,
        cells,
        vdim: a.vdim + b.vdim,
    })
}

/// The product of two composition cells, expressed on the composite of the
/// product changes.
#[allow(clippy::too_many_arguments)]
fn product_cell(
    a: &KuranishiAtlas,
    b: &KuranishiAtlas,
    i: usize,
    j: usize,
    k: usize,
    p: usize,
    q: usize,
    r: usize,
    changes: &[Vec<ChartMorphism>],
    label_of: &[Vec<Vec<usize>>],
    pair_of: &[Vec<Vec<(usize, usize)>>],
) -> Result<ChartTwoMorphism, crate::kchart::KchartError> {
    let nb = b.n_charts();
    let comp_a = crate::kchart::compose_with_maps(&a.changes[j][k], &a.changes[i][j])?;
    let comp_b = crate::kchart::compose_with_maps(&b.changes[q][r], &b.changes[p][q])?;
    let comp = crate::kchart::compose_with_maps(
        &changes[j * nb + q][k * nb + r],
        &changes[i * nb + p][j * nb + q],
    )?;
    let la = &a.cells[i][j][k];
    let lb = &b.cells[p][q][r];
    let n_ik_b = b.changes[p][r].n_p;
    let mut lambda = std::collections::BTreeMap::new();
    let mut lambda_hat = std::collections::BTreeMap::new();
    for idx in comp.result.p_dot() {
        let (pf, pg) = comp.reps[idx];
        let (pf_a, pf_b) = pair_of[i * nb + p][j * nb + q][pf];
        let (pg_a, pg_b) = pair_of[j * nb + q][k * nb + r][pg];
        let ca = comp_a.class_of[&(pf_a, pg_a)];
        let cb = comp_b.class_of[&(pf_b, pg_b)];
        let out = label_of[i * nb + p][k * nb + r][la.lambda[&ca] * n_ik_b + lb.lambda[&cb]];
        lambda.insert(idx, out);
        lambda_hat.insert(idx, la.lambda_hat[&ca].direct_sum(&lb.lambda_hat[&cb]));
    }
    let target = restrict_morphism(&changes[i * nb + p][k * nb + r], &comp.result.domain)?;
    Ok(ChartTwoMorphism {
        source: comp.result,
        target,
        lambda,
        lambda_hat,
    })
}

// ---------------------------------------------------------------------------
// Space-level morphisms
// ---------------------------------------------------------------------------

/// A 1-morphism of atlases: a map of base sets, a chart morphism `f_ij`
/// per chart pair over `Im χ_i ∩ f⁻¹(Im ψ_j)`, and coherence cells
/// relating the components across changes on either side.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceMorphism {
    pub source: KuranishiAtlas,
    pub target: KuranishiAtlas,
    pub f: Vec<usize>,
    /// `components[i][j]` is `f_ij`.
    pub components: Vec<Vec<ChartMorphism>>,
    /// `coh_src[i][i2][j]`: `f_{i2 j}∘T_{i i2} ⇒ f_ij`.
    pub coh_src: Vec<Vec<Vec<ChartTwoMorphism>>>,
    /// `coh_tgt[i][j][j2]`: `Υ_{j j2}∘f_ij ⇒ f_{i j2}`.
    pub coh_tgt: Vec<Vec<Vec<ChartTwoMorphism>>>,
}

/// The identity 1-morphism of an atlas: the atlas's own changes and cells.
pub fn identity_space_morphism(a: &KuranishiAtlas) -> SpaceMorphism {
    SpaceMorphism {
        source: a.clone(),
        target: a.clone(),
        f: (0..a.footprint_size).collect(),
        components: a.changes.clone(),
        coh_src: a.cells.clone(),
        coh_tgt: a.cells.clone(),
    }
}

/// A 1-morphism between two one-chart atlases from a single chart
/// morphism; the coherence cells are the unit cells.
pub fn one_chart_space_morphism(
    a: &KuranishiAtlas,
    b: &KuranishiAtlas,
    m: &ChartMorphism,
) -> Result<SpaceMorphism, KspaceError> {
    if a.n_charts() != 1 || b.n_charts() != 1 {
        return Err(KspaceError::InvalidMorphism(
            "both atlases must have a single chart".into(),
        ));
    }
    if m.source != a.charts[0] || m.target != b.charts[0] {
        return Err(KspaceError::InvalidMorphism(
            "chart morphism does not match the atlas charts".into(),
        ));
    }
    let (beta, gamma) = unitors(m).map_err(|e| KspaceError::InvalidMorphism(e.to_string()))?;
    Ok(SpaceMorphism {
        source: a.clone(),
        target: b.clone(),
        f: m.f_map.clone(),
        components: vec![vec![m.clone()]],
        coh_src: vec![vec![vec![beta]]],
        coh_tgt: vec![vec![vec![gamma]]],
    })
}

/// Check every 1-morphism invariant: component typing over the pulled-back
/// overlaps, unit coherence cells, and the three coherence diagrams across
/// source changes, mixed changes, and target changes.
pub fn validate_space_morphism(m: &SpaceMorphism) -> ValidationReport {
    let mut r = ValidationReport::default();
    let a = &m.source;
    let b = &m.target;
    let ni = a.n_charts();
    let nj = b.n_charts();
    if m.f.len() != a.footprint_size || m.f.iter().any(|&y| y >= b.footprint_size) {
        r.violations
            .push("base map is not a map between the base sets".into());
        return r;
    }
    if m.components.len() != ni
        || m.components.iter().any(|row| row.len() != nj)
        || m.coh_src.len() != ni
        || m
            .coh_src
            .iter()
            .any(|p| p.len() != ni || p.iter().any(|q| q.len() != nj))
        || m.coh_tgt.len() != ni
        || m
            .coh_tgt
            .iter()
            .any(|p| p.len() != nj || p.iter().any(|q| q.len() != nj))
    {
        r.violations.push("component tables have wrong shape".into());
        return r;
    }
    // components
    for i in 0..ni {
        for j in 0..nj {
            let c = &m.components[i][j];
            let tag = format!("component ({i},{j})");
            if c.source != a.charts[i] || c.target != b.charts[j] {
                r.violations.push(format!("{tag}: wrong end charts"));
                continue;
            }
            if c.f_map != m.f {
                r.violations
                    .push(format!("{tag}: underlying map differs from the base map"));
                continue;
            }
            let dom = intersect(&a.footprint(i), &preimage(&m.f, &b.footprint(j)));
            if c.domain != dom {
                r.violations
                    .push(format!("{tag}: domain is not the pulled-back overlap"));
                continue;
            }
            let rep = validate_morphism(c);
            if !rep.is_ok() {
                r.violations
                    .push(format!("{tag}: {}", rep.violations.join("; ")));
            }
        }
    }
    if !r.is_ok() {
        return r;
    }
    // source-side cells: typing
    for i in 0..ni {
        for i2 in 0..ni {
            for j in 0..nj {
                let l = &m.coh_src[i][i2][j];
                let tag = format!("source cell ({i},{i2},{j})");
                if let Err(e) = check_cell_typing(
                    l,
                    &m.components[i2][j],
                    &a.changes[i][i2],
                    &m.components[i][j],
                ) {
                    r.violations.push(format!("{tag}: {e}"));
                }
            }
        }
    }
    // target-side cells: typing
    for i in 0..ni {
        for j in 0..nj {
            for j2 in 0..nj {
                let l = &m.coh_tgt[i][j][j2];
                let tag = format!("target cell ({i},{j},{j2})");
                if let Err(e) = check_cell_typing(
                    l,
                    &b.changes[j][j2],
                    &m.components[i][j],
                    &m.components[i][j2],
                ) {
                    r.violations.push(format!("{tag}: {e}"));
                }
            }
        }
    }
    if !r.is_ok() {
        return r;
    }
    // unit cells
    for i in 0..ni {
        for j in 0..nj {
            match unitors(&m.components[i][j]) {
                Ok((beta, gamma)) => {
                    if m.coh_src[i][i][j] != beta {
                        r.violations
                            .push(format!("source cell ({i},{i},{j}) is not the unit cell"));
                    }
                    if m.coh_tgt[i][j][j] != gamma {
                        r.violations
                            .push(format!("target cell ({i},{j},{j}) is not the unit cell"));
                    }
                }
                Err(e) => r
                    .violations
                    .push(format!("unitors of component ({i},{j}): {e}")),
            }
        }
    }
    // coherence across two source changes
    for i in 0..ni {
        for i2 in 0..ni {
            for i3 in 0..ni {
                for j in 0..nj {
                    let tag = format!("source coherence ({i},{i2},{i3},{j})");
                    let res = (|| -> Result<bool, crate::kchart::KchartError> {
                        let alpha = associator(
                            &m.components[i3][j],
                            &a.changes[i2][i3],
                            &a.changes[i][i2],
                        )?;
                        let d = alpha.source.domain.clone();
                        let lhs = vcompose(
                            &restrict_two_morphism(&m.coh_src[i][i3][j], &d)?,
                            &vcompose(
                                &hcompose(
                                    &ChartTwoMorphism::identity(&m.components[i3][j]),
                                    &a.cells[i][i2][i3],
                                )?,
                                &alpha,
                            )?,
                        )?;
                        let rhs = vcompose(
                            &restrict_two_morphism(&m.coh_src[i][i2][j], &d)?,
                            &hcompose(
                                &m.coh_src[i2][i3][j],
                                &ChartTwoMorphism::identity(&a.changes[i][i2]),
                            )?,
                        )?;
                        Ok(lhs == rhs)
                    })();
                    match res {
                        Ok(true) => {}
                        Ok(false) => r.violations.push(format!("{tag}: diagram fails")),
                        Err(e) => r.violations.push(format!("{tag}: {e}")),
                    }
                }
            }
        }
    }
    // coherence across a source and a target change
    for i in 0..ni {
        for i2 in 0..ni {
            for j in 0..nj {
                for j2 in 0..nj {
                    let tag = format!("mixed coherence ({i},{i2},{j},{j2})");
                    let res = (|| -> Result<bool, crate::kchart::KchartError> {
                        let alpha = associator(
                            &b.changes[j][j2],
                            &m.components[i2][j],
                            &a.changes[i][i2],
                        )?;
                        let d = alpha.source.domain.clone();
                        let lhs = vcompose(
                            &restrict_two_morphism(&m.coh_tgt[i][j][j2], &d)?,
                            &vcompose(
                                &hcompose(
                                    &ChartTwoMorphism::identity(&b.changes[j][j2]),
                                    &m.coh_src[i][i2][j],
                                )?,
                                &alpha,
                            )?,
                        )?;
                        let rhs = vcompose(
                            &restrict_two_morphism(&m.coh_src[i][i2][j2], &d)?,
                            &hcompose(
                                &m.coh_tgt[i2][j][j2],
                                &ChartTwoMorphism::identity(&a.changes[i][i2]),
                            )?,
                        )?;
                        Ok(lhs == rhs)
                    })();
                    match res {
                        Ok(true) => {}
                        Ok(false) => r.violations.push(format!("{tag}: diagram fails")),
                        Err(e) => r.violations.push(format!("{tag}: {e}")),
                    }
                }
            }
        }
    }
    // coherence across two target changes
    for i in 0..ni {
        for j in 0..nj {
            for j2 in 0..nj {
                for j3 in 0..nj {
                    let tag = format!("target coherence ({i},{j},{j2},{j3})");
                    let res = (|| -> Result<bool, crate::kchart::KchartError> {
                        let alpha = associator(
                            &b.changes[j2][j3],
                            &b.changes[j][j2],
                            &m.components[i][j],
                        )?;
                        let d = alpha.source.domain.clone();
                        let lhs = vcompose(
                            &restrict_two_morphism(&m.coh_tgt[i][j2][j3], &d)?,
                            &vcompose(
                                &hcompose(
                                    &ChartTwoMorphism::identity(&b.changes[j2][j3]),
                                    &m.coh_tgt[i][j][j2],
                                )?,
                                &alpha,
                            )?,
                        )?;
                        let rhs = vcompose(
                            &restrict_two_morphism(&m.coh_tgt[i][j][j3], &d)?,
                            &hcompose(
                                &b.cells[j][j2][j3],
                                &ChartTwoMorphism::identity(&m.components[i][j]),
                            )?,
                        )?;
                        Ok(lhs == rhs)
                    })();
                    match res {
                        Ok(true) => {}
                        Ok(false) => r.violations.push(format!("{tag}: diagram fails")),
                        Err(e) => r.violations.push(format!("{tag}: {e}")),
                    }
                }
            }
        }
    }
    r
}

/// `l` must be a valid 2-morphism `outer∘inner ⇒ to` restricted to the
/// composite domain.
fn check_cell_typing(
    l: &ChartTwoMorphism,
    outer: &ChartMorphism,
    inner: &ChartMorphism,
    to: &ChartMorphism,
) -> Result<(), String> {
    let comp = compose_morphisms(outer, inner).map_err(|e| e.to_string())?;
    if l.source != comp {
        return Err("source is not the composite".into());
    }
    let tgt = restrict_morphism(to, &comp.domain).map_err(|e| e.to_string())?;
    if l.target != tgt {
        return Err("target is not the restricted component".into());
    }
    let rep = validate_two_morphism(l);
    if !rep.is_ok() {
        return Err(rep.violations.join("; "));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Space-level 2-morphisms
// ---------------------------------------------------------------------------

/// A 2-morphism of space morphisms with the same base map: a chart
/// 2-morphism per component, compatible with both coherence-cell families.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTwoMorphism {
    pub source: SpaceMorphism,
    pub target: SpaceMorphism,
    /// `cells[i][j]`: `f_ij ⇒ g_ij`.
    pub cells: Vec<Vec<ChartTwoMorphism>>,
}

pub fn identity_space_two_morphism(f: &SpaceMorphism) -> SpaceTwoMorphism {
    SpaceTwoMorphism {
        source: f.clone(),
        target: f.clone(),
        cells: f
            .components
            .iter()
            .map(|row| row.iter().map(ChartTwoMorphism::identity).collect())
            .collect(),
    }
}

/// Check the 2-morphism invariants: equal base maps and atlases, component
/// typing, and the two compatibility diagrams with the coherence cells.
pub fn validate_space_two_morphism(eta: &SpaceTwoMorphism) -> ValidationReport {
    let mut r = ValidationReport::default();
    let f = &eta.source;
    let g = &eta.target;
    if f.source != g.source || f.target != g.target {
        r.violations.push("endpoints live on different atlases".into());
        return r;
    }
    if f.f != g.f {
        r.violations.push("endpoints have different base maps".into());
        return r;
    }
    let ni = f.source.n_charts();
    let nj = f.target.n_charts();
    if eta.cells.len() != ni || eta.cells.iter().any(|row| row.len() != nj) {
        r.violations.push("cell table has wrong shape".into());
        return r;
    }
    for i in 0..ni {
        for j in 0..nj {
            let l = &eta.cells[i][j];
            let tag = format!("cell ({i},{j})");
            if l.source != f.components[i][j] || l.target != g.components[i][j] {
                r.violations.push(format!("{tag}: wrong endpoints"));
                continue;
            }
            let rep = validate_two_morphism(l);
            if !rep.is_ok() {
                r.violations
                    .push(format!("{tag}: {}", rep.violations.join("; ")));
            }
        }
    }
    if !r.is_ok() {
        return r;
    }
    // compatibility with source-side coherence cells
    for i in 0..ni {
        for i2 in 0..ni {
            for j in 0..nj {
                let tag = format!("source compatibility ({i},{i2},{j})");
                let res = (|| -> Result<bool, crate::kchart::KchartError> {
                    let whisk = hcompose(
                        &eta.cells[i2][j],
                        &ChartTwoMorphism::identity(&f.source.changes[i][i2]),
                    )?;
                    let d = whisk.source.domain.clone();
                    let lhs = vcompose(&g.coh_src[i][i2][j], &whisk)?;
                    let rhs = vcompose(
                        &restrict_two_morphism(&eta.cells[i][j], &d)?,
                        &f.coh_src[i][i2][j],
                    )?;
                    Ok(lhs == rhs)
                })();
                match res {
                    Ok(true) => {}
                    Ok(false) => r.violations.push(format!("{tag}: diagram fails")),
                    Err(e) => r.violations.push(format!("{tag}: {e}")),
                }
            }
        }
    }
    // compatibility with target-side coherence cells
    for i in 0..ni {
        for j in 0..nj {
            for j2 in 0..nj {
                let tag = format!("target compatibility ({i},{j},{j2})");
                let res = (|| -> Result<bool, crate::kchart::KchartError> {
                    let whisk = hcompose(
                        &ChartTwoMorphism::identity(&f.target.changes[j][j2]),
                        &eta.cells[i][j],
                    )?;
                    let d = whisk.source.domain.clone();
                    let lhs = vcompose(&g.coh_tgt[i][j][j2], &whisk)?;
                    let rhs = vcompose(
                        &restrict_two_morphism(&eta.cells[i][j2], &d)?,
                        &f.coh_tgt[i][j][j2],
                    )?;
                    Ok(lhs == rhs)
                })();
                match res {
                    Ok(true) => {}
                    Ok(false) => r.violations.push(format!("{tag}: diagram fails")),
                    Err(e) => r.violations.push(format!("{tag}: {e}")),
                }
            }
        }
    }
    r
}

// ---------------------------------------------------------------------------
// Gluing of 2-cells
// ---------------------------------------------------------------------------

/// Glue local 2-cells into a global one between the given parallel
/// 1-morphisms: the union of the canonical-form maps must be consistent,
/// cover the full canonical domain, and validate.
fn glue_cells(
    source: ChartMorphism,
    target: ChartMorphism,
    locals: &[ChartTwoMorphism],
) -> Result<ChartTwoMorphism, KspaceError> {
    let mut lambda = std::collections::BTreeMap::new();
    let mut lambda_hat = std::collections::BTreeMap::new();
    for l in locals {
        for (&p, &q) in &l.lambda {
            match lambda.get(&p) {
                Some(&q0) if q0 != q => {
                    return Err(KspaceError::NoGluing(
                        "local cells disagree on an overlap".into(),
                    ))
                }
                Some(_) => {}
                None => {
                    lambda.insert(p, q);
                }
            }
            let h = &l.lambda_hat[&p];
            match lambda_hat.get(&p) {
                Some(h0) if h0 != h => {
                    return Err(KspaceError::NoGluing(
                        "local corrections disagree on an overlap".into(),
                    ))
                }
                Some(_) => {}
                None => {
                    lambda_hat.insert(p, h.clone());
                }
            }
        }
    }
    let pdot: BTreeSet<usize> = source.p_dot().into_iter().collect();
    let keys: BTreeSet<usize> = lambda.keys().copied().collect();
    if keys != pdot {
        return Err(KspaceError::NoGluing(
            "local cells do not cover the canonical domain".into(),
        ));
    }
    let cell = ChartTwoMorphism {
        source,
        target,
        lambda,
        lambda_hat,
    };
    let rep = validate_two_morphism(&cell);
    if !rep.is_ok() {
        return Err(KspaceError::NoGluing(format!(
            "glued cell is invalid: {}",
            rep.violations.join("; ")
        )));
    }
    Ok(cell)
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

/// The comparison-cell table of a composition: `theta[i][j][k]` is
/// `Θ_ijk: g_jk∘f_ij ⇒ h_ik` over the piece `Im χ_i ∩ f⁻¹(Im ψ_j) ∩
/// h⁻¹(Im ω_k)`.
pub type ThetaTable = Vec<Vec<Vec<ChartTwoMorphism>>>;

/// An empty chart morphism between two charts over a given base map.
fn empty_morphism(
    source: &DiscreteChart,
    target: &DiscreteChart,
    f_map: Vec<usize>,
) -> ChartMorphism {
    ChartMorphism {
        source: source.clone(),
        target: target.clone(),
        f_map,
        domain: BTreeSet::new(),
        n_p: 0,
        act_i: vec![Vec::new(); source.group.order()],
        act_j: vec![Vec::new(); target.group.order()],
        pi: Vec::new(),
        phi: Vec::new(),
        dphi: Vec::new(),
        phihat: Vec::new(),
    }
}

/// Compose two space morphisms. The composite component over each chart
/// pair is glued by descent from the pieces `g_jk∘f_ij`, with the gluing
/// cocycle assembled from the coherence cells of the factors; the returned
/// table records the comparison cells from each piece to the glued
/// component.
///
/// Compositions with an identity return the other factor with its own
/// coherence cells as comparison cells. The general branch is
/// deterministic, so recomposing the same pair reproduces the same choice.
pub fn compose_space_morphisms(
    g: &SpaceMorphism,
    f: &SpaceMorphism,
) -> Result<(SpaceMorphism, ThetaTable), KspaceError> {
    if f.target != g.source {
        return Err(KspaceError::NotComposable(
            "middle atlases do not match".into(),
        ));
    }
    // unit conventions: composing with an identity returns the other factor
    if *f == identity_space_morphism(&f.source) {
        return Ok((g.clone(), g.coh_src.clone()));
    }
    if *g == identity_space_morphism(&g.source) {
        return Ok((f.clone(), f.coh_tgt.clone()));
    }
    let a = &f.source;
    let b = &f.target;
    let cz = &g.target;
    let ni = a.n_charts();
    let nj = b.n_charts();
    let nk = cz.n_charts();
    let h_map: Vec<usize> = f.f.iter().map(|&x| g.f[x]).collect();
    let kerr = |e: crate::kchart::KchartError| KspaceError::InvalidMorphism(e.to_string());
    let mut components: Vec<Vec<ChartMorphism>> = Vec::with_capacity(ni);
    let mut theta_ikj: Vec<Vec<Vec<ChartTwoMorphism>>> = Vec::with_capacity(ni);
    for i in 0..ni {
        let mut comp_row = Vec::with_capacity(nk);
        let mut theta_row = Vec::with_capacity(nk);
        for k in 0..nk {
            // local composites over the pieces cut out by the middle charts
            let mut locals = Vec::with_capacity(nj);
            for j in 0..nj {
                locals.push(
                    compose_morphisms(&g.components[j][k], &f.components[i][j]).map_err(kerr)?,
                );
            }
            let pieces: Vec<usize> = (0..nj).filter(|&j| !locals[j].domain.is_empty()).collect();
            let f_ik: BTreeSet<usize> =
                intersect(&a.footprint(i), &preimage(&h_map, &cz.footprint(k)));
            let (h_ik, mut piece_thetas) = if pieces.is_empty() {
                (
                    empty_morphism(&a.charts[i], &cz.charts[k], h_map.clone()),
                    Vec::new(),
                )
            } else if pieces.len() == 1 && locals[pieces[0]].domain == f_ik {
                // a single piece already covers the overlap
                (
                    locals[pieces[0]].clone(),
                    vec![ChartTwoMorphism::identity(&locals[pieces[0]])],
                )
            } else {
                glue_component(g, f, i, k, &h_map, &locals, &pieces)?
            };
            // comparison cells, one per middle chart
            let mut thetas = Vec::with_capacity(nj);
            for j in 0..nj {
                if locals[j].domain.is_empty() {
                    thetas.push(ChartTwoMorphism {
                        source: locals[j].clone(),
                        target: restrict_morphism(&h_ik, &BTreeSet::new()).map_err(kerr)?,
                        lambda: Default::default(),
                        lambda_hat: Default::default(),
                    });
                } else {
                    let pos = pieces.iter().position(|&j2| j2 == j).expect("piece index");
                    thetas.push(std::mem::replace(
                        &mut piece_thetas[pos],
                        ChartTwoMorphism::identity(&locals[j]),
                    ));
                }
            }
            comp_row.push(h_ik);
            theta_row.push(thetas);
        }
        components.push(comp_row);
        theta_ikj.push(theta_row);
    }
    // re-index the comparison table as [i][j][k]
    let theta: ThetaTable = (0..ni)
        .map(|i| {
            (0..nj)
                .map(|j| (0..nk).map(|k| theta_ikj[i][k][j].clone()).collect())
                .collect()
        })
        .collect();
    // coherence cells of the composite, glued from the comparison cells
    let mut coh_src = Vec::with_capacity(ni);
    for i in 0..ni {
        let mut plane = Vec::with_capacity(ni);
        for i2 in 0..ni {
            let mut row = Vec::with_capacity(nk);
            for k in 0..nk {
                let mut piece_cells = Vec::with_capacity(nj);
                for j in 0..nj {
                    let inner = invert_two_morphism(
                        &hcompose(
                            &theta[i2][j][k],
                            &ChartTwoMorphism::identity(&a.changes[i][i2]),
                        )
                        .map_err(kerr)?,
                    );
                    let p = inner.source.domain.clone();
                    let alpha =
                        associator(&g.components[j][k], &f.components[i2][j], &a.changes[i][i2])
                            .map_err(kerr)?;
                    let whisk = hcompose(
                        &ChartTwoMorphism::identity(&g.components[j][k]),
                        &f.coh_src[i][i2][j],
                    )
                    .map_err(kerr)?;
                    let cell = vcompose(
                        &restrict_two_morphism(&theta[i][j][k], &p).map_err(kerr)?,
                        &vcompose(&whisk, &vcompose(&alpha, &inner).map_err(kerr)?).map_err(kerr)?,
                    )
                    .map_err(kerr)?;
                    piece_cells.push(cell);
                }
                let src = compose_morphisms(&components[i2][k], &a.changes[i][i2]).map_err(kerr)?;
                let tgt = restrict_morphism(&components[i][k], &src.domain).map_err(kerr)?;
                row.push(glue_cells(src, tgt, &piece_cells)?);
            }
            plane.push(row);
        }
        coh_src.push(plane);
    }
    let mut coh_tgt = Vec::with_capacity(ni);
    for i in 0..ni {
        let mut plane = Vec::with_capacity(nk);
        for k in 0..nk {
            let mut row = Vec::with_capacity(nk);
            for k2 in 0..nk {
                let mut piece_cells = Vec::with_capacity(nj);
                for j in 0..nj {
                    let inner = invert_two_morphism(
                        &hcompose(
                            &ChartTwoMorphism::identity(&cz.changes[k][k2]),
                            &theta[i][j][k],
                        )
                        .map_err(kerr)?,
                    );
                    let p = inner.source.domain.clone();
                    let alpha_inv = invert_two_morphism(
                        &associator(&cz.changes[k][k2], &g.components[j][k], &f.components[i][j])
                            .map_err(kerr)?,
                    );
                    let whisk = hcompose(
                        &g.coh_tgt[j][k][k2],
                        &ChartTwoMorphism::identity(&f.components[i][j]),
                    )
                    .map_err(kerr)?;
                    let cell = vcompose(
                        &restrict_two_morphism(&theta[i][j][k2], &p).map_err(kerr)?,
                        &vcompose(&whisk, &vcompose(&alpha_inv, &inner).map_err(kerr)?)
                            .map_err(kerr)?,
                    )
                    .map_err(kerr)?;
                    piece_cells.push(cell);
                }
                let src = compose_morphisms(&cz.changes[k][k2], &components[i][k]).map_err(kerr)?;
                let tgt = restrict_morphism(&components[i][k2], &src.domain).map_err(kerr)?;
                row.push(glue_cells(src, tgt, &piece_cells)?);
            }
            plane.push(row);
        }
        coh_tgt.push(plane);
    }
    let h = SpaceMorphism {
        source: a.clone(),
        target: cz.clone(),
        f: h_map,
        components,
        coh_src,
        coh_tgt,
    };
    Ok((h, theta))
}

/// Glue the composite component over chart pair `(i,k)` from the local
/// composites using descent in the seeded Hom-prestack, returning the
/// glued morphism and one comparison cell per piece (in piece order).
fn glue_component(
    g: &SpaceMorphism,
    f: &SpaceMorphism,
    i: usize,
    k: usize,
    h_map: &[usize],
    locals: &[ChartMorphism],
    pieces: &[usize],
) -> Result<(ChartMorphism, Vec<ChartTwoMorphism>), KspaceError> {
    let kerr = |e: crate::kchart::KchartError| KspaceError::InvalidMorphism(e.to_string());
    // the seeded Hom-prestack over the joint footprint
    let seeds: Vec<ChartMorphism> = pieces.iter().map(|&j| locals[j].clone()).collect();
    let mut pair_cells: HashMap<(usize, usize), ChartTwoMorphism> = HashMap::new();
    for p1 in 0..pieces.len() {
        for p2 in (p1 + 1)..pieces.len() {
            let o = intersect(&locals[pieces[p1]].domain, &locals[pieces[p2]].domain);
            if o.is_empty() {
                continue;
            }
            pair_cells.insert(
                (p1, p2),
                piece_cocycle_cell(g, f, i, k, pieces[p1], pieces[p2])?,
            );
        }
    }
    let cell_seeds: Vec<ChartTwoMorphism> = pair_cells.values().cloned().collect();
    let hom = hom_stack(
        &f.source.charts[i],
        &g.target.charts[k],
        h_map,
        &seeds,
        &cell_seeds,
    )
    .map_err(|e| KspaceError::NoGluing(e.to_string()))?;
    let s_open = hom.open_of(&hom.footprint.iter().copied().collect());
    let cover: Vec<usize> = pieces
        .iter()
        .map(|&j| hom.open_of(&locals[j].domain))
        .collect();
    let mut objects = Vec::with_capacity(pieces.len());
    for (pos, &j) in pieces.iter().enumerate() {
        objects.push(hom.locate_object(cover[pos], &locals[j]).ok_or_else(|| {
            KspaceError::NoGluing(format!("piece {j} not found in the local groupoid"))
        })?);
    }
    let mut cocycle: HashMap<(usize, usize), usize> = HashMap::new();
    for (&(p1, p2), c) in &pair_cells {
        let tij = hom.prestack.site.intersection_index(cover[p1], cover[p2]);
        let id = hom.locate_cell(tij, c).ok_or_else(|| {
            KspaceError::CocycleViolation(format!(
                "cocycle cell ({},{}) not found in the local groupoid",
                pieces[p1], pieces[p2]
            ))
        })?;
        cocycle.insert((p1, p2), id);
    }
    let glue = descent::glue_object(&hom.prestack, s_open, &cover, &objects, &cocycle).map_err(
        |e| match e {
            descent::DescentError::CocycleViolation(m) => KspaceError::CocycleViolation(m),
            other => KspaceError::NoGluing(other.to_string()),
        },
    )?;
    let h_ik = hom.object_to_morphism(s_open, glue.0);
    let mut thetas = Vec::with_capacity(pieces.len());
    for (pos, &j) in pieces.iter().enumerate() {
        let open_j = cover[pos];
        let bcell = hom.morphism_to_two_cell(open_j, glue.1[pos]);
        let can = hom.canonical_iso(open_j, &locals[j]).ok_or_else(|| {
            KspaceError::NoGluing("piece is not represented in the local groupoid".into())
        })?;
        let ri = hom.restriction_iso(s_open, open_j, glue.0);
        thetas.push(
            vcompose(
                &ri,
                &vcompose(&invert_two_morphism(&bcell), &invert_two_morphism(&can))
                    .map_err(kerr)?,
            )
            .map_err(kerr)?,
        );
    }
    Ok((h_ik, thetas))
}

/// The descent cocycle cell from the piece at middle chart `j1` to the
/// piece at `j2`, over their overlap: rewrite `g_{j1 k}∘f_{i j1}` through
/// the middle change `Υ_{j1 j2}` using the coherence cells of both factors.
fn piece_cocycle_cell(
    g: &SpaceMorphism,
    f: &SpaceMorphism,
    i: usize,
    k: usize,
    j1: usize,
    j2: usize,
) -> Result<ChartTwoMorphism, KspaceError> {
    let kerr = |e: crate::kchart::KchartError| KspaceError::InvalidMorphism(e.to_string());
    let undo = invert_two_morphism(
        &hcompose(
            &g.coh_src[j1][j2][k],
            &ChartTwoMorphism::identity(&f.components[i][j1]),
        )
        .map_err(kerr)?,
    );
    let alpha = associator(
        &g.components[j2][k],
        &f.target.changes[j1][j2],
        &f.components[i][j1],
    )
    .map_err(kerr)?;
    let push = hcompose(
        &ChartTwoMorphism::identity(&g.components[j2][k]),
        &f.coh_tgt[i][j1][j2],
    )
    .map_err(kerr)?;
    vcompose(&push, &vcompose(&alpha, &undo).map_err(kerr)?).map_err(kerr)
}

/// Re-check the comparison-cell equations of a composition: cell typing
/// plus the three families of compatibility diagrams tying the table to
/// the coherence cells of the factors and of the composite.
pub fn verify_composition(
    g: &SpaceMorphism,
    f: &SpaceMorphism,
    h: &SpaceMorphism,
    theta: &ThetaTable,
) -> ValidationReport {
    let mut r = ValidationReport::default();
    let a = &f.source;
    let cz = &g.target;
    let ni = a.n_charts();
    let nj = f.target.n_charts();
    let nk = cz.n_charts();
    // typing
    for i in 0..ni {
        for j in 0..nj {
            for k in 0..nk {
                let tag = format!("comparison cell ({i},{j},{k})");
                if let Err(e) = check_cell_typing(
                    &theta[i][j][k],
                    &g.components[j][k],
                    &f.components[i][j],
                    &h.components[i][k],
                ) {
                    r.violations.push(format!("{tag}: {e}"));
                }
            }
        }
    }
    if !r.is_ok() {
        return r;
    }
    // compatibility with source changes
    for i in 0..ni {
        for i2 in 0..ni {
            for j in 0..nj {
                for k in 0..nk {
                    let tag = format!("source diagram ({i},{i2},{j},{k})");
                    let res = (|| -> Result<bool, crate::kchart::KchartError> {
                        let whisk = hcompose(
                            &theta[i2][j][k],
                            &ChartTwoMorphism::identity(&a.changes[i][i2]),
                        )?;
                        let p = whisk.source.domain.clone();
                        let lhs = vcompose(
                            &restrict_two_morphism(&h.coh_src[i][i2][k], &p)?,
                            &whisk,
                        )?;
                        let alpha = associator(
                            &g.components[j][k],
                            &f.components[i2][j],
                            &a.changes[i][i2],
                        )?;
                        let rhs = vcompose(
                            &restrict_two_morphism(&theta[i][j][k], &p)?,
                            &vcompose(
                                &hcompose(
                                    &ChartTwoMorphism::identity(&g.components[j][k]),
                                    &f.coh_src[i][i2][j],
                                )?,
                                &alpha,
                            )?,
                        )?;
                        Ok(lhs == rhs)
                    })();
                    match res {
                        Ok(true) => {}
                        Ok(false) => r.violations.push(format!("{tag}: diagram fails")),
                        Err(e) => r.violations.push(format!("{tag}: {e}")),
                    }
                }
            }
        }
    }
    // compatibility with middle changes
    for i in 0..ni {
        for j in 0..nj {
            for j2 in 0..nj {
                for k in 0..nk {
                    let tag = format!("middle diagram ({i},{j},{j2},{k})");
                    let res = (|| -> Result<bool, crate::kchart::KchartError> {
                        let whisk = hcompose(
                            &g.coh_src[j][j2][k],
                            &ChartTwoMorphism::identity(&f.components[i][j]),
                        )?;
                        let p = whisk.source.domain.clone();
                        let lhs =
                            vcompose(&restrict_two_morphism(&theta[i][j][k], &p)?, &whisk)?;
                        let alpha = associator(
                            &g.components[j2][k],
                            &f.target.changes[j][j2],
                            &f.components[i][j],
                        )?;
                        let rhs = vcompose(
                            &restrict_two_morphism(&theta[i][j2][k], &p)?,
                            &vcompose(
                                &hcompose(
                                    &ChartTwoMorphism::identity(&g.components[j2][k]),
                                    &f.coh_tgt[i][j][j2],
                                )?,
                                &alpha,
                            )?,
                        )?;
                        Ok(lhs == rhs)
                    })();
                    match res {
                        Ok(true) => {}
                        Ok(false) => r.violations.push(format!("{tag}: diagram fails")),
                        Err(e) => r.violations.push(format!("{tag}: {e}")),
                    }
                }
            }
        }
    }
    // compatibility with target changes
    for i in 0..ni {
        for j in 0..nj {
            for k in 0..nk {
                for k2 in 0..nk {
                    let tag = format!("target diagram ({i},{j},{k},{k2})");
                    let res = (|| -> Result<bool, crate::kchart::KchartError> {
                        let whisk = hcompose(
                            &g.coh_tgt[j][k][k2],
                            &ChartTwoMorphism::identity(&f.components[i][j]),
                        )?;
                        let p = whisk.source.domain.clone();
                        let lhs =
                            vcompose(&restrict_two_morphism(&theta[i][j][k2], &p)?, &whisk)?;
                        let alpha = associator(
                            &cz.changes[k][k2],
                            &g.components[j][k],
                            &f.components[i][j],
                        )?;
                        let rhs = vcompose(
                            &restrict_two_morphism(&h.coh_tgt[i][k][k2], &p)?,
                            &vcompose(
                                &hcompose(
                                    &ChartTwoMorphism::identity(&cz.changes[k][k2]),
                                    &restrict_two_morphism(&theta[i][j][k], &theta[i][j][k].source.domain)?,
                                )?,
                                &alpha,
                            )?,
                        )?;
                        Ok(lhs == rhs)
                    })();
                    match res {
                        Ok(true) => {}
                        Ok(false) => r.violations.push(format!("{tag}: diagram fails")),
                        Err(e) => r.violations.push(format!("{tag}: {e}")),
                    }
                }
            }
        }
    }
    r
}

// ---------------------------------------------------------------------------
// Uniqueness, associator, 2-cell compositions
// ---------------------------------------------------------------------------

/// The unique 2-morphism between two composites of the same pair that
/// intertwines their comparison-cell tables.
pub fn uniqueness_2iso(
    h: &SpaceMorphism,
    h2: &SpaceMorphism,
    theta: &ThetaTable,
    theta2: &ThetaTable,
) -> Result<SpaceTwoMorphism, KspaceError> {
    let kerr = |e: crate::kchart::KchartError| KspaceError::NoSolution(e.to_string());
    let ni = h.source.n_charts();
    let nj = theta.first().map(Vec::len).unwrap_or(0);
    let nk = h.target.n_charts();
    let mut cells = Vec::with_capacity(ni);
    for i in 0..ni {
        let mut row = Vec::with_capacity(nk);
        for k in 0..nk {
            let mut piece_cells = Vec::with_capacity(nj);
            for j in 0..nj {
                piece_cells.push(
                    vcompose(&theta2[i][j][k], &invert_two_morphism(&theta[i][j][k]))
                        .map_err(kerr)?,
                );
            }
            row.push(
                glue_cells(
                    h.components[i][k].clone(),
                    h2.components[i][k].clone(),
                    &piece_cells,
                )
                .map_err(|e| KspaceError::NoSolution(e.to_string()))?,
            );
        }
        cells.push(row);
    }
    Ok(SpaceTwoMorphism {
        source: h.clone(),
        target: h2.clone(),
        cells,
    })
}

/// The associator comparing the two bracketings of a composable triple,
/// glued chartwise from the comparison cells of the four pairwise
/// compositions.
pub fn space_associator(
    g: &SpaceMorphism,
    f: &SpaceMorphism,
    e: &SpaceMorphism,
) -> Result<SpaceTwoMorphism, KspaceError> {
    let kerr = |e: crate::kchart::KchartError| KspaceError::NoSolution(e.to_string());
    let (gf, th_gf) = compose_space_morphisms(g, f)?;
    let (fe, th_fe) = compose_space_morphisms(f, e)?;
    let (l, th_l) = compose_space_morphisms(&gf, e)?;
    let (r, th_r) = compose_space_morphisms(g, &fe)?;
    let nh = e.source.n_charts();
    let ni = f.source.n_charts();
    let nj = g.source.n_charts();
    let nk = g.target.n_charts();
    let mut cells = Vec::with_capacity(nh);
    for hx in 0..nh {
        let mut row = Vec::with_capacity(nk);
        for k in 0..nk {
            let mut piece_cells = Vec::new();
            for i in 0..ni {
                for j in 0..nj {
                    let whisk_left = hcompose(
                        &th_gf[i][j][k],
                        &ChartTwoMorphism::identity(&e.components[hx][i]),
                    )
                    .map_err(kerr)?;
                    let p = whisk_left.source.domain.clone();
                    let alpha = associator(
                        &g.components[j][k],
                        &f.components[i][j],
                        &e.components[hx][i],
                    )
                    .map_err(kerr)?;
                    let whisk_right = hcompose(
                        &ChartTwoMorphism::identity(&g.components[j][k]),
                        &th_fe[hx][i][j],
                    )
                    .map_err(kerr)?;
                    let cell = vcompose(
                        &restrict_two_morphism(&th_r[hx][j][k], &p).map_err(kerr)?,
                        &vcompose(
                            &whisk_right,
                            &vcompose(
                                &alpha,
                                &vcompose(
                                    &invert_two_morphism(&whisk_left),
                                    &invert_two_morphism(
                                        &restrict_two_morphism(&th_l[hx][i][k], &p)
                                            .map_err(kerr)?,
                                    ),
                                )
                                .map_err(kerr)?,
                            )
                            .map_err(kerr)?,
                        )
                        .map_err(kerr)?,
                    )
                    .map_err(kerr)?;
                    piece_cells.push(cell);
                }
            }
            row.push(
                glue_cells(
                    l.components[hx][k].clone(),
                    r.components[hx][k].clone(),
                    &piece_cells,
                )
                .map_err(|err| KspaceError::NoSolution(err.to_string()))?,
            );
        }
        cells.push(row);
    }
    Ok(SpaceTwoMorphism {
        source: l,
        target: r,
        cells,
    })
}

/// Componentwise vertical composition of space 2-morphisms.
pub fn space_vcompose(
    zeta: &SpaceTwoMorphism,
    eta: &SpaceTwoMorphism,
) -> Result<SpaceTwoMorphism, KspaceError> {
    if eta.target != zeta.source {
        return Err(KspaceError::NotComposable(
            "2-morphisms are not vertically composable".into(),
        ));
    }
    let mut cells = Vec::with_capacity(eta.cells.len());
    for (zrow, erow) in zeta.cells.iter().zip(&eta.cells) {
        let mut row = Vec::with_capacity(erow.len());
        for (z, e) in zrow.iter().zip(erow) {
            row.push(vcompose(z, e).map_err(|err| KspaceError::NotComposable(err.to_string()))?);
        }
        cells.push(row);
    }
    Ok(SpaceTwoMorphism {
        source: eta.source.clone(),
        target: zeta.target.clone(),
        cells,
    })
}

/// Horizontal composition of space 2-morphisms: the unique 2-morphism of
/// the composites intertwining the comparison-cell tables with the
/// chartwise horizontal composites.
pub fn space_hcompose(
    zeta: &SpaceTwoMorphism,
    eta: &SpaceTwoMorphism,
) -> Result<SpaceTwoMorphism, KspaceError> {
    let kerr = |e: crate::kchart::KchartError| KspaceError::NoSolution(e.to_string());
    if eta.source.target != zeta.source.source {
        return Err(KspaceError::NotComposable(
            "middle atlases do not match".into(),
        ));
    }
    let (h, th) = compose_space_morphisms(&zeta.source, &eta.source)?;
    let (h2, th2) = compose_space_morphisms(&zeta.target, &eta.target)?;
    let ni = eta.source.source.n_charts();
    let nj = eta.source.target.n_charts();
    let nk = zeta.source.target.n_charts();
    let mut cells = Vec::with_capacity(ni);
    for i in 0..ni {
        let mut row = Vec::with_capacity(nk);
        for k in 0..nk {
            let mut piece_cells = Vec::with_capacity(nj);
            for j in 0..nj {
                let mixed = hcompose(&zeta.cells[j][k], &eta.cells[i][j]).map_err(kerr)?;
                piece_cells.push(
                    vcompose(
                        &th2[i][j][k],
                        &vcompose(&mixed, &invert_two_morphism(&th[i][j][k])).map_err(kerr)?,
                    )
                    .map_err(kerr)?,
                );
            }
            row.push(
                glue_cells(
                    h.components[i][k].clone(),
                    h2.components[i][k].clone(),
                    &piece_cells,
                )
                .map_err(|e| KspaceError::NoSolution(e.to_string()))?,
            );
        }
        cells.push(row);
    }
    Ok(SpaceTwoMorphism {
        source: h,
        target: h2,
        cells,
    })
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub is_manifold: bool,
    pub is_orbifold: bool,
    pub is_mkuranishi: bool,
    pub has_trivial_isotropy: bool,
}

/// Pointwise classification of a valid atlas: manifold iff every isotropy
/// group is trivial and every obstruction space vanishes; orbifold iff
/// every obstruction space vanishes; the structural flag records whether
/// every chart group is trivial; trivial isotropy iff every isotropy group
/// is trivial.
pub fn classify(a: &KuranishiAtlas) -> Result<Classification, KspaceError> {
    let mut all_g_trivial = true;
    let mut all_o_zero = true;
    for x in 0..a.footprint_size {
        let tr = crate::kinvariant::point_invariants(a, x, None)
            .map_err(|e| KspaceError::InvalidAtlas(e.to_string()))?;
        if tr.group.order() != 1 {
            all_g_trivial = false;
        }
        if tr.o_dim != 0 {
            all_o_zero = false;
        }
    }
    Ok(Classification {
        is_manifold: all_g_trivial && all_o_zero,
        is_orbifold: all_o_zero,
        is_mkuranishi: a.charts.iter().all(|c| c.group.order() == 1),
        has_trivial_isotropy: all_g_trivial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactlin::{rat_i, FinGroup, GroupHom, RationalMatrix};
    use crate::kchart::{
        fooo_composition_cell, import_fooo_change, ChartTwoMorphism, FoooChange,
    };
    use std::collections::{BTreeMap, BTreeSet};

    /// Zero-dimensional chart with trivial group; `psi[v]` is the base point
    /// of chart point `v`.
    fn triv_chart(psi: &[usize], fp: usize) -> DiscreteChart {
        let n = psi.len();
        DiscreteChart {
            n_points: n,
            t_dim: vec![0; n],
            e_dim: vec![0; n],
            group: FinGroup::trivial(),
            action: vec![(0..n).collect()],
            dgamma: vec![vec![RationalMatrix::identity(0); n]],
            egamma: vec![vec![RationalMatrix::identity(0); n]],
            s_val: vec![Vec::new(); n],
            ds: vec![RationalMatrix::zero(0, 0); n],
            footprint_size: fp,
            psi: psi.iter().enumerate().map(|(v, &x)| (v, x)).collect(),
        }
    }

    /// Trivial-group chart morphism determined by its footprint data: one
    /// bibundle point per source point over the domain, zero linear parts.
    fn triv_morphism(
        src: &DiscreteChart,
        tgt: &DiscreteChart,
        f_map: Vec<usize>,
        domain: &[usize],
    ) -> ChartMorphism {
        let dom: BTreeSet<usize> = domain.iter().copied().collect();
        let pts: Vec<usize> = (0..src.n_points)
            .filter(|v| src.psi.get(v).is_some_and(|x| dom.contains(x)))
            .collect();
        let phi: Vec<usize> = pts
            .iter()
            .map(|&v| {
                let y = f_map[src.psi[&v]];
                (0..tgt.n_points)
                    .find(|w| tgt.psi.get(w) == Some(&y))
                    .unwrap()
            })
            .collect();
        let n_p = pts.len();
        let dphi: Vec<RationalMatrix> = pts
            .iter()
            .zip(&phi)
            .map(|(&v, &w)| RationalMatrix::zero(tgt.t_dim[w], src.t_dim[v]))
            .collect();
        let phihat: Vec<RationalMatrix> = pts
            .iter()
            .zip(&phi)
            .map(|(&v, &w)| RationalMatrix::zero(tgt.e_dim[w], src.e_dim[v]))
            .collect();
        ChartMorphism {
            source: src.clone(),
            target: tgt.clone(),
            f_map,
            domain: dom,
            n_p,
            act_i: vec![(0..n_p).collect()],
            act_j: vec![(0..n_p).collect()],
            pi: pts,
            phi,
            dphi,
            phihat,
        }
    }

    /// The unique 2-morphism between parallel trivial-group morphisms,
    /// matching bibundle points through the shared source point.
    fn triv_cell(src: &ChartMorphism, tgt_full: &ChartMorphism) -> ChartTwoMorphism {
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

    /// One-point chart with a nontrivially acting linear Z/2 and the given
    /// fibre dimensions and actions.
    fn z2_point_chart(t: usize, e: usize, dg: RationalMatrix, eg: RationalMatrix) -> DiscreteChart {
        DiscreteChart {
            n_points: 1,
            t_dim: vec![t],
            e_dim: vec![e],
            group: FinGroup::cyclic(2),
            action: vec![vec![0], vec![0]],
            dgamma: vec![vec![RationalMatrix::identity(t)], vec![dg]],
            egamma: vec![vec![RationalMatrix::identity(e)], vec![eg]],
            s_val: vec![vec![rat_i(0); e]],
            ds: vec![RationalMatrix::zero(e, t)],
            footprint_size: 1,
            psi: [(0, 0)].into_iter().collect(),
        }
    }

    /// Two trivial-group charts over the base `{0,1,2}` with footprints
    /// `{0,1}` and `{1,2}`; all changes and cells come from the
    /// triangulation-dialect importer.
    fn two_chart_atlas() -> KuranishiAtlas {
        let c = [triv_chart(&[0, 1], 3), triv_chart(&[1, 2], 3)];
        let idh = GroupHom::identity(&FinGroup::trivial());
        let fc = |i: usize, j: usize| -> FoooChange {
            let (src, tgt) = (&c[i], &c[j]);
            let v_ij: Vec<usize> = (0..src.n_points)
                .filter(|v| tgt.psi.values().any(|&y| y == src.psi[v]))
                .collect();
            let phi0: Vec<usize> = v_ij
                .iter()
                .map(|v| {
                    let x = src.psi[v];
                    (0..tgt.n_points).find(|w| tgt.psi[w] == x).unwrap()
                })
                .collect();
            let n = v_ij.len();
            FoooChange {
                source: src.clone(),
                target: tgt.clone(),
                v_ij,
                h: idh.clone(),
                phi0,
                dphi0: vec![RationalMatrix::identity(0); n],
                phihat0: vec![RationalMatrix::identity(0); n],
            }
        };
        let mut changes = Vec::new();
        for i in 0..2 {
            let mut row = Vec::new();
            for j in 0..2 {
                let (m, warnings) = import_fooo_change(&fc(i, j)).unwrap();
                assert!(warnings.is_empty(), "{warnings:?}");
                row.push(m);
            }
            changes.push(row);
        }
        let mut cells = Vec::new();
        for i in 0..2 {
            let mut plane = Vec::new();
            for j in 0..2 {
                let mut row = Vec::new();
                for k in 0..2 {
                    row.push(fooo_composition_cell(&fc(i, j), &fc(j, k), &fc(i, k), 0).unwrap());
                }
                plane.push(row);
            }
            cells.push(plane);
        }
        KuranishiAtlas {
            footprint_size: 3,
            charts: c.to_vec(),
            changes,
            cells,
            vdim: 0,
        }
    }

    #[test]
    fn make_global_computes_orbits_and_vdim() {
        // one free point, one tangent direction, no obstruction: vdim 1
        let mut c = triv_chart(&[0], 1);
        c.t_dim = vec![1];
        c.dgamma = vec![vec![RationalMatrix::identity(1)]];
        c.ds = vec![RationalMatrix::zero(0, 1)];
        let a = make_global(&c).unwrap();
        assert_eq!(a.vdim, 1);
        assert_eq!(a.footprint_size, 1);
        assert!(validate_atlas(&a).is_ok());

        // three tangent directions against one obstruction: vdim 2
        let mut c = triv_chart(&[0], 1);
        c.t_dim = vec![3];
        c.e_dim = vec![1];
        c.dgamma = vec![vec![RationalMatrix::identity(3)]];
        c.egamma = vec![vec![RationalMatrix::identity(1)]];
        c.s_val = vec![vec![rat_i(0)]];
        c.ds = vec![RationalMatrix::zero(1, 3)];
        let a = make_global(&c).unwrap();
        assert_eq!(a.vdim, 2);
        assert!(validate_atlas(&a).is_ok());

        // a free swap identifies the two zero points into one base point
        let mut c = triv_chart(&[0, 1], 2);
        c.group = FinGroup::cyclic(2);
        c.action = vec![vec![0, 1], vec![1, 0]];
        c.dgamma = vec![vec![RationalMatrix::identity(0); 2]; 2];
        c.egamma = vec![vec![RationalMatrix::identity(0); 2]; 2];
        let a = make_global(&c).unwrap();
        assert_eq!(a.footprint_size, 1);
        assert!(validate_atlas(&a).is_ok());
    }

    #[test]
    fn manifold_atlas_classifies_and_has_valid_identity() {
        let a = from_manifold(&[1, 1]).unwrap();
        assert_eq!(a.vdim, 1);
        assert!(validate_atlas(&a).is_ok());
        let cl = classify(&a).unwrap();
        assert!(cl.is_manifold && cl.is_orbifold && cl.is_mkuranishi && cl.has_trivial_isotropy);
        let id = identity_space_morphism(&a);
        assert!(validate_space_morphism(&id).is_ok());
        let eta = identity_space_two_morphism(&id);
        assert!(validate_space_two_morphism(&eta).is_ok());

        assert_eq!(from_manifold(&[0]).unwrap().vdim, 0);
    }

    #[test]
    fn stabilized_point_is_orbifold_but_not_manifold() {
        let c = z2_point_chart(0, 0, RationalMatrix::identity(0), RationalMatrix::identity(0));
        let a = make_global(&c).unwrap();
        assert!(validate_atlas(&a).is_ok());
        let cl = classify(&a).unwrap();
        assert!(!cl.is_manifold);
        assert!(cl.is_orbifold);
        assert!(!cl.is_mkuranishi);
        assert!(!cl.has_trivial_isotropy);
    }

    #[test]
    fn obstructed_point_is_not_an_orbifold() {
        let mut c = triv_chart(&[0], 1);
        c.e_dim = vec![1];
        c.egamma = vec![vec![RationalMatrix::identity(1)]];
        c.s_val = vec![vec![rat_i(0)]];
        c.ds = vec![RationalMatrix::zero(1, 0)];
        let a = make_global(&c).unwrap();
        assert_eq!(a.vdim, -1);
        let cl = classify(&a).unwrap();
        assert!(!cl.is_orbifold && !cl.is_manifold);
        assert!(cl.is_mkuranishi && cl.has_trivial_isotropy);
    }

    #[test]
    fn imported_two_chart_atlas_validates() {
        let a = two_chart_atlas();
        let rep = validate_atlas(&a);
        assert!(rep.is_ok(), "{:?}", rep.violations);
        let id = identity_space_morphism(&a);
        assert!(validate_space_morphism(&id).is_ok());
    }

    #[test]
    fn corrupted_unit_cell_is_caught() {
        let c = z2_point_chart(0, 0, RationalMatrix::identity(0), RationalMatrix::identity(0));
        let mut a = make_global(&c).unwrap();
        let idm = a.changes[0][0].clone();
        // a nontrivial automorphism of the identity change: translate the
        // bibundle by the central group element
        let mut lambda = BTreeMap::new();
        let mut lambda_hat = BTreeMap::new();
        for p in idm.p_dot() {
            lambda.insert(p, idm.act_j[1][p]);
            lambda_hat.insert(p, RationalMatrix::zero(0, 0));
        }
        let aut = ChartTwoMorphism {
            source: idm.clone(),
            target: idm.clone(),
            lambda,
            lambda_hat,
        };
        assert!(crate::kchart::validate_two_morphism(&aut).is_ok());
        let bad = vcompose(&aut, &a.cells[0][0][0]).unwrap();
        assert_ne!(bad, a.cells[0][0][0]);
        a.cells[0][0][0] = bad;
        assert!(!validate_atlas(&a).is_ok());
    }

    #[test]
    fn composition_with_identities_returns_the_other_factor() {
        let a = from_manifold(&[0, 0]).unwrap();
        let b = from_manifold(&[0]).unwrap();
        let m = triv_morphism(&a.charts[0], &b.charts[0], vec![0, 0], &[0, 1]);
        let f = one_chart_space_morphism(&a, &b, &m).unwrap();
        assert!(validate_space_morphism(&f).is_ok());

        let (h, th) = compose_space_morphisms(&f, &identity_space_morphism(&a)).unwrap();
        assert_eq!(h, f);
        assert_eq!(th, f.coh_src);
        let (h, th) = compose_space_morphisms(&identity_space_morphism(&b), &f).unwrap();
        assert_eq!(h, f);
        assert_eq!(th, f.coh_tgt);
    }

    #[test]
    fn one_chart_composition_is_the_chart_composition() {
        let a = from_manifold(&[0, 0]).unwrap();
        let b = from_manifold(&[0]).unwrap();
        let c = from_manifold(&[1]).unwrap();
        let f = one_chart_space_morphism(
            &a,
            &b,
            &triv_morphism(&a.charts[0], &b.charts[0], vec![0, 0], &[0, 1]),
        )
        .unwrap();
        let g = one_chart_space_morphism(
            &b,
            &c,
            &triv_morphism(&b.charts[0], &c.charts[0], vec![0], &[0]),
        )
        .unwrap();
        assert!(validate_space_morphism(&g).is_ok());
        let (h, theta) = compose_space_morphisms(&g, &f).unwrap();
        let direct = compose_morphisms(&g.components[0][0], &f.components[0][0]).unwrap();
        assert_eq!(h.components[0][0], direct);
        assert_eq!(theta[0][0][0], ChartTwoMorphism::identity(&direct));
        assert!(validate_space_morphism(&h).is_ok());
        assert!(verify_composition(&g, &f, &h, &theta).is_ok());
        let eta = uniqueness_2iso(&h, &h, &theta, &theta).unwrap();
        assert_eq!(eta, identity_space_two_morphism(&h));
        assert!(validate_space_two_morphism(&eta).is_ok());
    }

    /// A 1-morphism from the one-chart manifold atlas on `{0,1,2}` into the
    /// imported two-chart atlas, with the identity base map.
    fn into_two_chart(a: &KuranishiAtlas, b: &KuranishiAtlas) -> SpaceMorphism {
        let comps: Vec<ChartMorphism> = (0..2)
            .map(|j| {
                let fp: Vec<usize> = b.footprint(j).into_iter().collect();
                triv_morphism(&a.charts[0], &b.charts[j], vec![0, 1, 2], &fp)
            })
            .collect();
        let mut coh_src = vec![vec![Vec::new()]];
        for comp in &comps {
            coh_src[0][0].push(unitors(comp).unwrap().0);
        }
        let mut coh_tgt = vec![vec![Vec::new(); 2]];
        for j in 0..2 {
            for j2 in 0..2 {
                if j == j2 {
                    coh_tgt[0][j].push(unitors(&comps[j]).unwrap().1);
                } else {
                    let left = compose_morphisms(&b.changes[j][j2], &comps[j]).unwrap();
                    coh_tgt[0][j].push(triv_cell(&left, &comps[j2]));
                }
            }
        }
        SpaceMorphism {
            source: a.clone(),
            target: b.clone(),
            f: vec![0, 1, 2],
            components: vec![comps],
            coh_src,
            coh_tgt,
        }
    }

    /// A 1-morphism from the imported two-chart atlas onto a one-chart
    /// atlas over the same base, with the identity base map.
    fn out_of_two_chart(b: &KuranishiAtlas, c: &KuranishiAtlas) -> SpaceMorphism {
        let comps: Vec<ChartMorphism> = (0..2)
            .map(|j| {
                let fp: Vec<usize> = b.footprint(j).into_iter().collect();
                triv_morphism(&b.charts[j], &c.charts[0], vec![0, 1, 2], &fp)
            })
            .collect();
        let mut coh_src = vec![vec![vec![]; 2], vec![vec![]; 2]];
        for j in 0..2 {
            for j2 in 0..2 {
                if j == j2 {
                    coh_src[j][j2].push(unitors(&comps[j]).unwrap().0);
                } else {
                    let left = compose_morphisms(&comps[j2], &b.changes[j][j2]).unwrap();
                    coh_src[j][j2].push(triv_cell(&left, &comps[j]));
                }
            }
        }
        let coh_tgt = (0..2)
            .map(|j| vec![vec![unitors(&comps[j]).unwrap().1]])
            .collect();
        SpaceMorphism {
            source: b.clone(),
            target: c.clone(),
            f: vec![0, 1, 2],
            components: comps.into_iter().map(|m| vec![m]).collect(),
            coh_src,
            coh_tgt,
        }
    }

    #[test]
    fn two_piece_cover_composition_glues_and_verifies() {
        let a = from_manifold(&[0, 0, 0]).unwrap();
        let b = two_chart_atlas();
        let c = from_manifold(&[0, 0, 0]).unwrap();
        let f = into_two_chart(&a, &b);
        let rep = validate_space_morphism(&f);
        assert!(rep.is_ok(), "{:?}", rep.violations);
        let g = out_of_two_chart(&b, &c);
        let rep = validate_space_morphism(&g);
        assert!(rep.is_ok(), "{:?}", rep.violations);

        let (h, theta) = compose_space_morphisms(&g, &f).unwrap();
        assert_eq!(
            h.components[0][0].domain,
            [0usize, 1, 2].into_iter().collect::<BTreeSet<_>>()
        );
        let rep = validate_space_morphism(&h);
        assert!(rep.is_ok(), "{:?}", rep.violations);
        let rep = verify_composition(&g, &f, &h, &theta);
        assert!(rep.is_ok(), "{:?}", rep.violations);

        // recomposition is deterministic, and the comparison between a
        // composite and itself is the identity
        let (h2, theta2) = compose_space_morphisms(&g, &f).unwrap();
        assert_eq!(h, h2);
        let eta = uniqueness_2iso(&h, &h2, &theta, &theta2).unwrap();
        assert_eq!(eta, identity_space_two_morphism(&h));
    }

    #[test]
    fn associator_and_two_cell_compositions_validate() {
        let a = from_manifold(&[0, 0, 0]).unwrap();
        let b = two_chart_atlas();
        let c = from_manifold(&[0, 0, 0]).unwrap();
        let e = into_two_chart(&a, &b);
        let f = out_of_two_chart(&b, &c);
        let mut d_chart = triv_chart(&[0, 1, 2], 3);
        d_chart.t_dim = vec![1; 3];
        d_chart.dgamma = vec![vec![RationalMatrix::identity(1); 3]];
        d_chart.ds = vec![RationalMatrix::zero(0, 1); 3];
        let d = make_global(&d_chart).unwrap();
        let g = one_chart_space_morphism(
            &c,
            &d,
            &triv_morphism(&c.charts[0], &d.charts[0], vec![0, 1, 2], &[0, 1, 2]),
        )
        .unwrap();
        assert!(validate_space_morphism(&g).is_ok());

        let alpha = space_associator(&g, &f, &e).unwrap();
        let rep = validate_space_two_morphism(&alpha);
        assert!(rep.is_ok(), "{:?}", rep.violations);

        // horizontal composition of identities is the identity of the
        // composite; vertical composition of identities is the identity
        let (h, _) = compose_space_morphisms(&f, &e).unwrap();
        let id_e = identity_space_two_morphism(&e);
        let id_f = identity_space_two_morphism(&f);
        let star = space_hcompose(&id_f, &id_e).unwrap();
        assert_eq!(star, identity_space_two_morphism(&h));
        let vert = space_vcompose(&id_e, &id_e).unwrap();
        assert_eq!(vert, id_e);
    }

    #[test]
    fn products_add_dimensions_and_multiply_isotropy() {
        let p = product(
            &from_manifold(&[1, 1]).unwrap(),
            &from_manifold(&[2]).unwrap(),
        )
        .unwrap();
        assert_eq!(p.vdim, 3);
        assert_eq!(p.footprint_size, 2);
        assert!(validate_atlas(&p).is_ok());

        // product with a point leaves the base set and dimension unchanged
        let b = two_chart_atlas();
        let q = product(&b, &from_manifold(&[0]).unwrap()).unwrap();
        assert_eq!(q.footprint_size, 3);
        assert_eq!(q.vdim, 0);
        let rep = validate_atlas(&q);
        assert!(rep.is_ok(), "{:?}", rep.violations);

        let z2 =
            make_global(&z2_point_chart(0, 0, RationalMatrix::identity(0), RationalMatrix::identity(0)))
                .unwrap();
        let zz = product(&z2, &z2).unwrap();
        assert!(validate_atlas(&zz).is_ok());
        let tr = crate::kinvariant::point_invariants(&zz, 0, None).unwrap();
        assert_eq!(tr.group.order(), 4);
        let cl = classify(&zz).unwrap();
        assert!(cl.is_orbifold && !cl.is_manifold);
    }
}
