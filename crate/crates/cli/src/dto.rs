//! JSON document model for the toolkit: a versioned schema (`kur/1`) of
//! records for charts, morphisms, 2-morphisms, atlases, space morphisms,
//! chains, affine maps, importer inputs, and 2-category fragments.
//!
//! Rationals are strings (`"p/q"` or `"p"`) to preserve exactness; matrices
//! carry explicit row and column counts so empty fibres round-trip.  All
//! cross-references are checked during conversion and failures name the
//! offending record.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use kur_core::exactlin::{FinGroup, GroupHom, Rat, RationalMatrix};
use kur_core::kchart::{
    compose_morphisms, restrict_morphism, ChartMorphism, ChartTwoMorphism, DiscreteChart,
    FoooChange, MwChange,
};
use kur_core::kspace::{KuranishiAtlas, SpaceMorphism};
use kur_core::mchain::{AffineMap, MChain, PolytopeComponent, PolytopeGenerator};
use kur_core::twocat::TwoCatFragment;
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "kur/1";

/// CLI-level failure classes, mapped to exit codes by the driver.
#[derive(Debug, Clone)]
pub enum CliError {
    /// Malformed input file (exit 2).
    Parse(String),
    /// Well-formed file with dangling or dimensionally inconsistent
    /// references (exit 2).
    Resolution(String),
    /// The requested check ran and failed (exit 1).
    Failed(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Resolution(m) => write!(f, "resolution error: {m}"),
            CliError::Failed(m) => write!(f, "check failed: {m}"),
        }
    }
}

pub fn parse_rat(s: &str, here: &str) -> Result<Rat, CliError> {
    Rat::from_str(s.trim())
        .map_err(|e| CliError::Resolution(format!("{here}: bad rational {s:?}: {e}")))
}

pub fn show_rat(r: &Rat) -> String {
    r.to_string()
}

fn rats_to_strings(v: &[Rat]) -> Vec<String> {
    v.iter().map(show_rat).collect()
}

fn strings_to_rats(v: &[String], here: &str) -> Result<Vec<Rat>, CliError> {
    v.iter().map(|s| parse_rat(s, here)).collect()
}

// ---------------------------------------------------------------------------
// Matrices and groups
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct MatrixDto {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Vec<String>>,
}

impl MatrixDto {
    pub fn from_core(m: &RationalMatrix) -> Self {
        MatrixDto {
            rows: m.rows(),
            cols: m.cols(),
            entries: (0..m.rows())
                .map(|i| (0..m.cols()).map(|j| show_rat(m.get(i, j))).collect())
                .collect(),
        }
    }

    pub fn to_core(&self, here: &str) -> Result<RationalMatrix, CliError> {
        if self.entries.len() != self.rows {
            return Err(CliError::Resolution(format!(
                "{here}: matrix declares {} rows but has {} entry rows",
                self.rows,
                self.entries.len()
            )));
        }
        let mut m = RationalMatrix::zero(self.rows, self.cols);
        for (i, row) in self.entries.iter().enumerate() {
            if row.len() != self.cols {
                return Err(CliError::Resolution(format!(
                    "{here}: matrix row {i} has {} entries, expected {}",
                    row.len(),
                    self.cols
                )));
            }
            for (j, s) in row.iter().enumerate() {
                m.set(i, j, parse_rat(s, here)?);
            }
        }
        Ok(m)
    }
}

fn matrices_from_core(ms: &[RationalMatrix]) -> Vec<MatrixDto> {
    ms.iter().map(MatrixDto::from_core).collect()
}

fn matrices_to_core(ms: &[MatrixDto], here: &str) -> Result<Vec<RationalMatrix>, CliError> {
    ms.iter()
        .enumerate()
        .map(|(i, m)| m.to_core(&format!("{here}[{i}]")))
        .collect()
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct GroupDto {
    pub order: usize,
    /// `table[a][b]` is the product `ab`.
    pub table: Vec<Vec<usize>>,
}

impl GroupDto {
    pub fn from_core(g: &FinGroup) -> Self {
        GroupDto {
            order: g.order(),
            table: (0..g.order())
                .map(|a| (0..g.order()).map(|b| g.mul(a, b)).collect())
                .collect(),
        }
    }

    pub fn to_core(&self, here: &str) -> Result<FinGroup, CliError> {
        if self.table.len() != self.order || self.table.iter().any(|r| r.len() != self.order) {
            return Err(CliError::Resolution(format!(
                "{here}: group table is not {0}x{0}",
                self.order
            )));
        }
        let flat: Vec<usize> = self.table.iter().flatten().copied().collect();
        FinGroup::from_table(self.order, flat)
            .map_err(|e| CliError::Resolution(format!("{here}: {e}")))
    }
}

// ---------------------------------------------------------------------------
// Charts
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct ChartDto {
    pub n_points: usize,
    pub footprint_size: usize,
    pub t_dim: Vec<usize>,
    pub e_dim: Vec<usize>,
    pub group: GroupDto,
    pub action: Vec<Vec<usize>>,
    pub dgamma: Vec<Vec<MatrixDto>>,
    pub egamma: Vec<Vec<MatrixDto>>,
    pub s_val: Vec<Vec<String>>,
    pub ds: Vec<MatrixDto>,
    /// Pairs `[v, x]` of the footprint map on zero points.
    pub psi: Vec<[usize; 2]>,
}

impl ChartDto {
    pub fn from_core(c: &DiscreteChart) -> Self {
        ChartDto {
            n_points: c.n_points,
            footprint_size: c.footprint_size,
            t_dim: c.t_dim.clone(),
            e_dim: c.e_dim.clone(),
            group: GroupDto::from_core(&c.group),
            action: c.action.clone(),
            dgamma: c.dgamma.iter().map(|row| matrices_from_core(row)).collect(),
            egamma: c.egamma.iter().map(|row| matrices_from_core(row)).collect(),
            s_val: c.s_val.iter().map(|v| rats_to_strings(v)).collect(),
            ds: matrices_from_core(&c.ds),
            psi: c.psi.iter().map(|(&v, &x)| [v, x]).collect(),
        }
    }

    pub fn to_core(&self, here: &str) -> Result<DiscreteChart, CliError> {
        let group = self.group.to_core(&format!("{here}.group"))?;
        let order = group.order();
        let n = self.n_points;
        if self.t_dim.len() != n || self.e_dim.len() != n {
            return Err(CliError::Resolution(format!(
                "{here}: t_dim/e_dim must list all {n} points"
            )));
        }
        if self.action.len() != order
            || self.action.iter().any(|r| r.len() != n)
            || self
                .action
                .iter()
                .any(|r| r.iter().any(|&v| v >= n.max(1)))
        {
            return Err(CliError::Resolution(format!(
                "{here}: action table must be {order} rows of {n} point indices"
            )));
        }
        for (name, tab) in [("dgamma", &self.dgamma), ("egamma", &self.egamma)] {
            if tab.len() != order || tab.iter().any(|r| r.len() != n) {
                return Err(CliError::Resolution(format!(
                    "{here}: {name} must be {order} rows of {n} matrices"
                )));
            }
        }
        let dims = |is_t: bool, v: usize| if is_t { self.t_dim[v] } else { self.e_dim[v] };
        let mut dgamma = Vec::new();
        let mut egamma = Vec::new();
        for (name, tab, is_t, out) in [
            ("dgamma", &self.dgamma, true, &mut dgamma),
            ("egamma", &self.egamma, false, &mut egamma),
        ] {
            for (g, row) in tab.iter().enumerate() {
                let mut core_row = Vec::new();
                for (v, m) in row.iter().enumerate() {
                    let ctx = format!("{here}.{name}[{g}][{v}]");
                    let core = m.to_core(&ctx)?;
                    let (er, ec) = (dims(is_t, self.action[g][v]), dims(is_t, v));
                    if core.rows() != er || core.cols() != ec {
                        return Err(CliError::Resolution(format!(
                            "{ctx}: expected a {er}x{ec} matrix, found {}x{}",
                            core.rows(),
                            core.cols()
                        )));
                    }
                    core_row.push(core);
                }
                out.push(core_row);
            }
        }
        if self.s_val.len() != n || self.ds.len() != n {
            return Err(CliError::Resolution(format!(
                "{here}: s_val and ds must list all {n} points"
            )));
        }
        let mut s_val = Vec::new();
        let mut ds = Vec::new();
        for v in 0..n {
            if self.s_val[v].len() != self.e_dim[v] {
                return Err(CliError::Resolution(format!(
                    "{here}.s_val[{v}]: expected {} entries, found {}",
                    self.e_dim[v],
                    self.s_val[v].len()
                )));
            }
            s_val.push(strings_to_rats(&self.s_val[v], &format!("{here}.s_val[{v}]"))?);
            let m = self.ds[v].to_core(&format!("{here}.ds[{v}]"))?;
            if m.rows() != self.e_dim[v] || m.cols() != self.t_dim[v] {
                return Err(CliError::Resolution(format!(
                    "{here}.ds[{v}]: expected a {}x{} matrix, found {}x{}",
                    self.e_dim[v],
                    self.t_dim[v],
                    m.rows(),
                    m.cols()
                )));
            }
            ds.push(m);
        }
        let mut psi = BTreeMap::new();
        for &[v, x] in &self.psi {
            if v >= n || x >= self.footprint_size {
                return Err(CliError::Resolution(format!(
                    "{here}.psi: pair [{v}, {x}] is out of range"
                )));
            }
            if psi.insert(v, x).is_some() {
                return Err(CliError::Resolution(format!(
                    "{here}.psi: duplicate point {v}"
                )));
            }
        }
        Ok(DiscreteChart {
            n_points: n,
            t_dim: self.t_dim.clone(),
            e_dim: self.e_dim.clone(),
            group,
            action: self.action.clone(),
            dgamma,
            egamma,
            s_val,
            ds,
            footprint_size: self.footprint_size,
            psi,
        })
    }
}

// ---------------------------------------------------------------------------
// Morphisms and 2-morphisms
// ---------------------------------------------------------------------------

/// The bibundle data of a chart morphism, without its endpoint charts.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct BibundleDto {
    pub f_map: Vec<usize>,
    pub domain: Vec<usize>,
    pub n_p: usize,
    pub act_i: Vec<Vec<usize>>,
    pub act_j: Vec<Vec<usize>>,
    pub pi: Vec<usize>,
    pub phi: Vec<usize>,
    pub dphi: Vec<MatrixDto>,
    pub phihat: Vec<MatrixDto>,
}

impl BibundleDto {
    pub fn from_core(m: &ChartMorphism) -> Self {
        BibundleDto {
            f_map: m.f_map.clone(),
            domain: m.domain.iter().copied().collect(),
            n_p: m.n_p,
            act_i: m.act_i.clone(),
            act_j: m.act_j.clone(),
            pi: m.pi.clone(),
            phi: m.phi.clone(),
            dphi: matrices_from_core(&m.dphi),
            phihat: matrices_from_core(&m.phihat),
        }
    }

    pub fn to_core(
        &self,
        source: &DiscreteChart,
        target: &DiscreteChart,
        here: &str,
    ) -> Result<ChartMorphism, CliError> {
        let np = self.n_p;
        if self.f_map.len() != source.footprint_size
            || self.f_map.iter().any(|&x| x >= target.footprint_size)
        {
            return Err(CliError::Resolution(format!(
                "{here}.f_map: must map all {} base points into the target base",
                source.footprint_size
            )));
        }
        if self.domain.iter().any(|&x| x >= source.footprint_size) {
            return Err(CliError::Resolution(format!("{here}.domain: out of range")));
        }
        for (name, tab, order) in [
            ("act_i", &self.act_i, source.group.order()),
            ("act_j", &self.act_j, target.group.order()),
        ] {
            if tab.len() != order
                || tab.iter().any(|r| r.len() != np)
                || tab.iter().any(|r| r.iter().any(|&p| p >= np.max(1)))
            {
                return Err(CliError::Resolution(format!(
                    "{here}.{name}: must be {order} rows of {np} bibundle point indices"
                )));
            }
        }
        if self.pi.len() != np
            || self.phi.len() != np
            || self.pi.iter().any(|&v| v >= source.n_points)
            || self.phi.iter().any(|&w| w >= target.n_points)
        {
            return Err(CliError::Resolution(format!(
                "{here}: pi/phi must send all {np} bibundle points to chart points"
            )));
        }
        if self.dphi.len() != np || self.phihat.len() != np {
            return Err(CliError::Resolution(format!(
                "{here}: dphi/phihat must list all {np} bibundle points"
            )));
        }
        let mut dphi = Vec::new();
        let mut phihat = Vec::new();
        for p in 0..np {
            let (v, w) = (self.pi[p], self.phi[p]);
            let d = self.dphi[p].to_core(&format!("{here}.dphi[{p}]"))?;
            if d.rows() != target.t_dim[w] || d.cols() != source.t_dim[v] {
                return Err(CliError::Resolution(format!(
                    "{here}.dphi[{p}]: expected a {}x{} matrix, found {}x{}",
                    target.t_dim[w],
                    source.t_dim[v],
                    d.rows(),
                    d.cols()
                )));
            }
            let h = self.phihat[p].to_core(&format!("{here}.phihat[{p}]"))?;
            if h.rows() != target.e_dim[w] || h.cols() != source.e_dim[v] {
                return Err(CliError::Resolution(format!(
                    "{here}.phihat[{p}]: expected a {}x{} matrix, found {}x{}",
                    target.e_dim[w],
                    source.e_dim[v],
                    h.rows(),
                    h.cols()
                )));
            }
            dphi.push(d);
            phihat.push(h);
        }
        Ok(ChartMorphism {
            source: source.clone(),
            target: target.clone(),
            f_map: self.f_map.clone(),
            domain: self.domain.iter().copied().collect::<BTreeSet<usize>>(),
            n_p: np,
            act_i: self.act_i.clone(),
            act_j: self.act_j.clone(),
            pi: self.pi.clone(),
            phi: self.phi.clone(),
            dphi,
            phihat,
        })
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct MorphismDto {
    pub source: ChartDto,
    pub target: ChartDto,
    pub bibundle: BibundleDto,
}

impl MorphismDto {
    pub fn from_core(m: &ChartMorphism) -> Self {
        MorphismDto {
            source: ChartDto::from_core(&m.source),
            target: ChartDto::from_core(&m.target),
            bibundle: BibundleDto::from_core(m),
        }
    }

    pub fn to_core(&self, here: &str) -> Result<ChartMorphism, CliError> {
        let source = self.source.to_core(&format!("{here}.source"))?;
        let target = self.target.to_core(&format!("{here}.target"))?;
        self.bibundle
            .to_core(&source, &target, &format!("{here}.bibundle"))
    }
}

/// A correction matrix attached to one bibundle point.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct HatDto {
    pub p: usize,
    pub matrix: MatrixDto,
}

/// The data of a 2-morphism without its endpoint 1-morphisms.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct CellDto {
    pub lambda: Vec<[usize; 2]>,
    pub lambda_hat: Vec<HatDto>,
}

impl CellDto {
    pub fn from_core(l: &ChartTwoMorphism) -> Self {
        CellDto {
            lambda: l.lambda.iter().map(|(&p, &q)| [p, q]).collect(),
            lambda_hat: l
                .lambda_hat
                .iter()
                .map(|(&p, m)| HatDto {
                    p,
                    matrix: MatrixDto::from_core(m),
                })
                .collect(),
        }
    }

    pub fn to_core(
        &self,
        source: ChartMorphism,
        target: ChartMorphism,
        here: &str,
    ) -> Result<ChartTwoMorphism, CliError> {
        let mut lambda = BTreeMap::new();
        for &[p, q] in &self.lambda {
            if p >= source.n_p || q >= target.n_p {
                return Err(CliError::Resolution(format!(
                    "{here}.lambda: pair [{p}, {q}] is out of range"
                )));
            }
            if lambda.insert(p, q).is_some() {
                return Err(CliError::Resolution(format!(
                    "{here}.lambda: duplicate point {p}"
                )));
            }
        }
        let mut lambda_hat = BTreeMap::new();
        for hat in &self.lambda_hat {
            if hat.p >= source.n_p {
                return Err(CliError::Resolution(format!(
                    "{here}.lambda_hat: point {} is out of range",
                    hat.p
                )));
            }
            let m = hat
                .matrix
                .to_core(&format!("{here}.lambda_hat[{}]", hat.p))?;
            if lambda_hat.insert(hat.p, m).is_some() {
                return Err(CliError::Resolution(format!(
                    "{here}.lambda_hat: duplicate point {}",
                    hat.p
                )));
            }
        }
        Ok(ChartTwoMorphism {
            source,
            target,
            lambda,
            lambda_hat,
        })
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct TwoMorphismDto {
    pub source: MorphismDto,
    pub target: MorphismDto,
    pub cell: CellDto,
}

impl TwoMorphismDto {
    pub fn from_core(l: &ChartTwoMorphism) -> Self {
        TwoMorphismDto {
            source: MorphismDto::from_core(&l.source),
            target: MorphismDto::from_core(&l.target),
            cell: CellDto::from_core(l),
        }
    }

    pub fn to_core(&self, here: &str) -> Result<ChartTwoMorphism, CliError> {
        let source = self.source.to_core(&format!("{here}.source"))?;
        let target = self.target.to_core(&format!("{here}.target"))?;
        self.cell.to_core(source, target, &format!("{here}.cell"))
    }
}

// ---------------------------------------------------------------------------
// Atlases and space morphisms
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct AtlasDto {
    pub footprint_size: usize,
    pub vdim: i64,
    pub charts: Vec<ChartDto>,
    pub changes: Vec<Vec<BibundleDto>>,
    /// `cells[i][j][k]` against the recomputed composite of changes.
    pub cells: Vec<Vec<Vec<CellDto>>>,
}

/// Rebuild the endpoints of the composition cell `(i,j,k)`: source is the
/// canonical composite change, target the restriction of the direct change
/// to the composite's domain.
fn cell_endpoints(
    outer: &ChartMorphism,
    inner: &ChartMorphism,
    direct: &ChartMorphism,
    here: &str,
) -> Result<(ChartMorphism, ChartMorphism), CliError> {
    let comp = compose_morphisms(outer, inner)
        .map_err(|e| CliError::Resolution(format!("{here}: composite: {e}")))?;
    let tgt = restrict_morphism(direct, &comp.domain)
        .map_err(|e| CliError::Resolution(format!("{here}: restriction: {e}")))?;
    Ok((comp, tgt))
}

impl AtlasDto {
    pub fn from_core(a: &KuranishiAtlas) -> Self {
        AtlasDto {
            footprint_size: a.footprint_size,
            vdim: a.vdim,
            charts: a.charts.iter().map(ChartDto::from_core).collect(),
            changes: a
                .changes
                .iter()
                .map(|row| row.iter().map(BibundleDto::from_core).collect())
                .collect(),
            cells: a
                .cells
                .iter()
                .map(|plane| {
                    plane
                        .iter()
                        .map(|row| row.iter().map(CellDto::from_core).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn to_core(&self, here: &str) -> Result<KuranishiAtlas, CliError> {
        let n = self.charts.len();
        let charts: Vec<DiscreteChart> = self
            .charts
            .iter()
            .enumerate()
            .map(|(i, c)| c.to_core(&format!("{here}.charts[{i}]")))
            .collect::<Result<_, _>>()?;
        if self.changes.len() != n || self.changes.iter().any(|r| r.len() != n) {
            return Err(CliError::Resolution(format!(
                "{here}.changes: must be an {n}x{n} table"
            )));
        }
        let mut changes: Vec<Vec<ChartMorphism>> = Vec::new();
        for i in 0..n {
            let mut row = Vec::new();
            for j in 0..n {
                row.push(self.changes[i][j].to_core(
                    &charts[i],
                    &charts[j],
                    &format!("{here}.changes[{i}][{j}]"),
                )?);
            }
            changes.push(row);
        }
        if self.cells.len() != n
            || self
                .cells
                .iter()
                .any(|p| p.len() != n || p.iter().any(|r| r.len() != n))
        {
            return Err(CliError::Resolution(format!(
                "{here}.cells: must be an {n}x{n}x{n} table"
            )));
        }
        let mut cells: Vec<Vec<Vec<ChartTwoMorphism>>> = Vec::new();
        for i in 0..n {
            let mut plane = Vec::new();
            for j in 0..n {
                let mut row = Vec::new();
                for k in 0..n {
                    let ctx = format!("{here}.cells[{i}][{j}][{k}]");
                    let (src, tgt) =
                        cell_endpoints(&changes[j][k], &changes[i][j], &changes[i][k], &ctx)?;
                    row.push(self.cells[i][j][k].to_core(src, tgt, &ctx)?);
                }
                plane.push(row);
            }
            cells.push(plane);
        }
        Ok(KuranishiAtlas {
            footprint_size: self.footprint_size,
            charts,
            changes,
            cells,
            vdim: self.vdim,
        })
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct SpaceMorphismDto {
    pub source: AtlasDto,
    pub target: AtlasDto,
    pub f: Vec<usize>,
    pub components: Vec<Vec<BibundleDto>>,
    pub coh_src: Vec<Vec<Vec<CellDto>>>,
    pub coh_tgt: Vec<Vec<Vec<CellDto>>>,
}

impl SpaceMorphismDto {
    pub fn from_core(m: &SpaceMorphism) -> Self {
        let cells3 = |t: &Vec<Vec<Vec<ChartTwoMorphism>>>| {
            t.iter()
                .map(|plane| {
                    plane
                        .iter()
                        .map(|row| row.iter().map(CellDto::from_core).collect())
                        .collect()
                })
                .collect()
        };
        SpaceMorphismDto {
            source: AtlasDto::from_core(&m.source),
            target: AtlasDto::from_core(&m.target),
            f: m.f.clone(),
            components: m
                .components
                .iter()
                .map(|row| row.iter().map(BibundleDto::from_core).collect())
                .collect(),
            coh_src: cells3(&m.coh_src),
            coh_tgt: cells3(&m.coh_tgt),
        }
    }

    pub fn to_core(&self, here: &str) -> Result<SpaceMorphism, CliError> {
        let source = self.source.to_core(&format!("{here}.source"))?;
        let target = self.target.to_core(&format!("{here}.target"))?;
        let (na, nb) = (source.charts.len(), target.charts.len());
        if self.components.len() != na || self.components.iter().any(|r| r.len() != nb) {
            return Err(CliError::Resolution(format!(
                "{here}.components: must be a {na}x{nb} table"
            )));
        }
        let mut components: Vec<Vec<ChartMorphism>> = Vec::new();
        for i in 0..na {
            let mut row = Vec::new();
            for j in 0..nb {
                row.push(self.components[i][j].to_core(
                    &source.charts[i],
                    &target.charts[j],
                    &format!("{here}.components[{i}][{j}]"),
                )?);
            }
            components.push(row);
        }
        let shape_src = self.coh_src.len() == na
            && self
                .coh_src
                .iter()
                .all(|p| p.len() == na && p.iter().all(|r| r.len() == nb));
        let shape_tgt = self.coh_tgt.len() == na
            && self
                .coh_tgt
                .iter()
                .all(|p| p.len() == nb && p.iter().all(|r| r.len() == nb));
        if !shape_src || !shape_tgt {
            return Err(CliError::Resolution(format!(
                "{here}: coh_src must be {na}x{na}x{nb} and coh_tgt {na}x{nb}x{nb}"
            )));
        }
        let mut coh_src: Vec<Vec<Vec<ChartTwoMorphism>>> = Vec::new();
        for i in 0..na {
            let mut plane = Vec::new();
            for i2 in 0..na {
                let mut row = Vec::new();
                for j in 0..nb {
                    let ctx = format!("{here}.coh_src[{i}][{i2}][{j}]");
                    let (src, tgt) = cell_endpoints(
                        &components[i2][j],
                        &source.changes[i][i2],
                        &components[i][j],
                        &ctx,
                    )?;
                    row.push(self.coh_src[i][i2][j].to_core(src, tgt, &ctx)?);
                }
                plane.push(row);
            }
            coh_src.push(plane);
        }
        let mut coh_tgt: Vec<Vec<Vec<ChartTwoMorphism>>> = Vec::new();
        for i in 0..na {
            let mut plane = Vec::new();
            for j in 0..nb {
                let mut row = Vec::new();
                for j2 in 0..nb {
                    let ctx = format!("{here}.coh_tgt[{i}][{j}][{j2}]");
                    let (src, tgt) = cell_endpoints(
                        &target.changes[j][j2],
                        &components[i][j],
                        &components[i][j2],
                        &ctx,
                    )?;
                    row.push(self.coh_tgt[i][j][j2].to_core(src, tgt, &ctx)?);
                }
                plane.push(row);
            }
            coh_tgt.push(plane);
        }
        Ok(SpaceMorphism {
            source,
            target,
            f: self.f.clone(),
            components,
            coh_src,
            coh_tgt,
        })
    }
}

// ---------------------------------------------------------------------------
// Chains and affine maps
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct AffineDto {
    pub matrix: MatrixDto,
    pub offset: Vec<String>,
}

impl AffineDto {
    pub fn from_core(f: &AffineMap) -> Self {
        AffineDto {
            matrix: MatrixDto::from_core(&f.matrix),
            offset: rats_to_strings(&f.offset),
        }
    }

    pub fn to_core(&self, here: &str) -> Result<AffineMap, CliError> {
        let matrix = self.matrix.to_core(&format!("{here}.matrix"))?;
        let offset = strings_to_rats(&self.offset, &format!("{here}.offset"))?;
        AffineMap::new(matrix, offset).map_err(|e| CliError::Resolution(format!("{here}: {e}")))
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct PolytopeDto {
    pub vertices: Vec<Vec<String>>,
    pub sign: i64,
    pub s: AffineDto,
    pub t: AffineDto,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct TermDto {
    pub coeff: String,
    pub n: usize,
    pub components: Vec<PolytopeDto>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct ChainDto {
    pub rational: bool,
    pub terms: Vec<TermDto>,
}

impl ChainDto {
    pub fn from_core(c: &MChain) -> Self {
        ChainDto {
            rational: c.rational,
            terms: c
                .terms
                .iter()
                .map(|(coeff, gen)| TermDto {
                    coeff: show_rat(coeff),
                    n: gen.n,
                    components: gen
                        .components
                        .iter()
                        .map(|comp| PolytopeDto {
                            vertices: comp.vertices.iter().map(|v| rats_to_strings(v)).collect(),
                            sign: comp.sign,
                            s: AffineDto::from_core(&comp.s),
                            t: AffineDto::from_core(&comp.t),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_core(&self, here: &str) -> Result<MChain, CliError> {
        let mut terms = Vec::new();
        for (idx, term) in self.terms.iter().enumerate() {
            let ctx = format!("{here}.terms[{idx}]");
            let coeff = parse_rat(&term.coeff, &ctx)?;
            let mut components = Vec::new();
            for (cdx, comp) in term.components.iter().enumerate() {
                let cctx = format!("{ctx}.components[{cdx}]");
                let vertices = comp
                    .vertices
                    .iter()
                    .map(|v| strings_to_rats(v, &cctx))
                    .collect::<Result<Vec<_>, _>>()?;
                components.push(PolytopeComponent {
                    vertices,
                    sign: comp.sign,
                    s: comp.s.to_core(&format!("{cctx}.s"))?,
                    t: comp.t.to_core(&format!("{cctx}.t"))?,
                });
            }
            terms.push((
                coeff,
                PolytopeGenerator {
                    n: term.n,
                    components,
                },
            ));
        }
        MChain::new(self.rational, terms)
            .map_err(|e| CliError::Resolution(format!("{here}: {e}")))
    }
}

// ---------------------------------------------------------------------------
// Importer inputs
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct FoooDto {
    pub source: ChartDto,
    pub target: ChartDto,
    pub v_ij: Vec<usize>,
    /// Value table of the injective group homomorphism.
    pub h_map: Vec<usize>,
    pub phi0: Vec<usize>,
    pub dphi0: Vec<MatrixDto>,
    pub phihat0: Vec<MatrixDto>,
}

impl FoooDto {
    pub fn from_core(c: &FoooChange) -> Self {
        FoooDto {
            source: ChartDto::from_core(&c.source),
            target: ChartDto::from_core(&c.target),
            v_ij: c.v_ij.clone(),
            h_map: (0..c.source.group.order()).map(|g| c.h.apply(g)).collect(),
            phi0: c.phi0.clone(),
            dphi0: matrices_from_core(&c.dphi0),
            phihat0: matrices_from_core(&c.phihat0),
        }
    }

    pub fn to_core(&self, here: &str) -> Result<FoooChange, CliError> {
        let source = self.source.to_core(&format!("{here}.source"))?;
        let target = self.target.to_core(&format!("{here}.target"))?;
        let h = GroupHom::new(source.group.clone(), target.group.clone(), self.h_map.clone())
            .map_err(|e| CliError::Resolution(format!("{here}.h_map: {e}")))?;
        Ok(FoooChange {
            source,
            target,
            v_ij: self.v_ij.clone(),
            h,
            phi0: self.phi0.clone(),
            dphi0: matrices_to_core(&self.dphi0, &format!("{here}.dphi0"))?,
            phihat0: matrices_to_core(&self.phihat0, &format!("{here}.phihat0"))?,
        })
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct MwDto {
    pub source: ChartDto,
    pub target: ChartDto,
    pub v_tilde: Vec<usize>,
    pub varpi: Vec<usize>,
    pub dvarpi: Vec<MatrixDto>,
    pub ehat: Vec<MatrixDto>,
    /// Value table of the surjective group homomorphism.
    pub rho_map: Vec<usize>,
}

impl MwDto {
    pub fn from_core(c: &MwChange) -> Self {
        MwDto {
            source: ChartDto::from_core(&c.source),
            target: ChartDto::from_core(&c.target),
            v_tilde: c.v_tilde.clone(),
            varpi: c.varpi.clone(),
            dvarpi: matrices_from_core(&c.dvarpi),
            ehat: matrices_from_core(&c.ehat),
            rho_map: (0..c.target.group.order()).map(|g| c.rho.apply(g)).collect(),
        }
    }

    pub fn to_core(&self, here: &str) -> Result<MwChange, CliError> {
        let source = self.source.to_core(&format!("{here}.source"))?;
        let target = self.target.to_core(&format!("{here}.target"))?;
        let rho = GroupHom::new(
            target.group.clone(),
            source.group.clone(),
            self.rho_map.clone(),
        )
        .map_err(|e| CliError::Resolution(format!("{here}.rho_map: {e}")))?;
        Ok(MwChange {
            source,
            target,
            v_tilde: self.v_tilde.clone(),
            varpi: self.varpi.clone(),
            dvarpi: matrices_to_core(&self.dvarpi, &format!("{here}.dvarpi"))?,
            ehat: matrices_to_core(&self.ehat, &format!("{here}.ehat"))?,
            rho,
        })
    }
}

// ---------------------------------------------------------------------------
// 2-category fragments
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq, Default)]
pub struct FragmentDto {
    pub n_objects: usize,
    /// `[src, tgt]` per 1-cell.
    pub one_cells: Vec<[usize; 2]>,
    /// `[src, tgt]` per 2-cell (indices into one_cells).
    pub two_cells: Vec<[usize; 2]>,
    /// `[object, one_cell]` identity assignments.
    pub id1: Vec<[usize; 2]>,
    /// `[one_cell, two_cell]` identity assignments.
    pub id2: Vec<[usize; 2]>,
    /// `[g, f, gf]` entries of the composition table.
    pub compose: Vec<[usize; 3]>,
    /// `[z, e, ze]` vertical composition entries (e first).
    pub vcomp: Vec<[usize; 3]>,
    /// `[z, e, ze]` horizontal composition entries (e over the first leg).
    pub hcomp: Vec<[usize; 3]>,
    /// `[g, f, e, cell]` associator assignments.
    pub assoc: Vec<[usize; 4]>,
    /// `[one_cell, cell]` right unitors.
    pub unitor_b: Vec<[usize; 2]>,
    /// `[one_cell, cell]` left unitors.
    pub unitor_c: Vec<[usize; 2]>,
    /// `[a, b]` mutually inverse 2-cells.
    pub inverses: Vec<[usize; 2]>,
}

impl FragmentDto {
    pub fn to_core(&self, here: &str) -> Result<TwoCatFragment, CliError> {
        let n1 = self.one_cells.len();
        let n2 = self.two_cells.len();
        let ck = |v: usize, max: usize, what: &str| {
            if v >= max {
                Err(CliError::Resolution(format!(
                    "{here}: {what} index {v} is out of range (max {max})"
                )))
            } else {
                Ok(())
            }
        };
        let mut c = TwoCatFragment::new();
        for _ in 0..self.n_objects {
            c.add_object();
        }
        for &[s, t] in &self.one_cells {
            ck(s, self.n_objects, "object")?;
            ck(t, self.n_objects, "object")?;
            c.add_one(s, t);
        }
        for &[s, t] in &self.two_cells {
            ck(s, n1, "one-cell")?;
            ck(t, n1, "one-cell")?;
            if self.one_cells[s] != self.one_cells[t] {
                return Err(CliError::Resolution(format!(
                    "{here}: 2-cell between non-parallel 1-cells {s} and {t}"
                )));
            }
            c.add_two(s, t);
        }
        for &[x, f] in &self.id1 {
            ck(x, self.n_objects, "object")?;
            ck(f, n1, "one-cell")?;
            c.set_id1(x, f);
        }
        for &[f, t] in &self.id2 {
            ck(f, n1, "one-cell")?;
            ck(t, n2, "two-cell")?;
            c.set_id2(f, t);
        }
        for &[g, f, gf] in &self.compose {
            for v in [g, f, gf] {
                ck(v, n1, "one-cell")?;
            }
            c.set_compose(g, f, gf);
        }
        for &[z, e, r] in &self.vcomp {
            for v in [z, e, r] {
                ck(v, n2, "two-cell")?;
            }
            c.set_vcomp(z, e, r);
        }
        for &[z, e, r] in &self.hcomp {
            for v in [z, e, r] {
                ck(v, n2, "two-cell")?;
            }
            c.set_hcomp(z, e, r);
        }
        for &[g, f, e, t] in &self.assoc {
            for v in [g, f, e] {
                ck(v, n1, "one-cell")?;
            }
            ck(t, n2, "two-cell")?;
            c.set_assoc(g, f, e, t);
        }
        for &[f, t] in &self.unitor_b {
            ck(f, n1, "one-cell")?;
            ck(t, n2, "two-cell")?;
            c.set_unitor_b(f, t);
        }
        for &[f, t] in &self.unitor_c {
            ck(f, n1, "one-cell")?;
            ck(t, n2, "two-cell")?;
            c.set_unitor_c(f, t);
        }
        for &[a, b] in &self.inverses {
            ck(a, n2, "two-cell")?;
            ck(b, n2, "two-cell")?;
            c.set_inverse(a, b);
        }
        Ok(c)
    }
}

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Document {
    pub schema: String,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Body {
    Chart { chart: ChartDto },
    Morphism { morphism: MorphismDto },
    TwoMorphism { two_morphism: TwoMorphismDto },
    Atlas { atlas: AtlasDto },
    SpaceMorphism { space_morphism: SpaceMorphismDto },
    Chain { chain: ChainDto },
    AffineMap { affine_map: AffineDto },
    FoooChange { fooo_change: FoooDto },
    MwChange { mw_change: MwDto },
    Fragment { fragment: FragmentDto },
}

impl Document {
    pub fn new(body: Body) -> Self {
        Document {
            schema: SCHEMA.to_string(),
            body,
        }
    }

    pub fn kind(&self) -> &'static str {
        match &self.body {
            Body::Chart { .. } => "chart",
            Body::Morphism { .. } => "morphism",
            Body::TwoMorphism { .. } => "two_morphism",
            Body::Atlas { .. } => "atlas",
            Body::SpaceMorphism { .. } => "space_morphism",
            Body::Chain { .. } => "chain",
            Body::AffineMap { .. } => "affine_map",
            Body::FoooChange { .. } => "fooo_change",
            Body::MwChange { .. } => "mw_change",
            Body::Fragment { .. } => "fragment",
        }
    }
}

/// Parse a document from JSON text.
pub fn parse(text: &str) -> Result<Document, CliError> {
    let doc: Document =
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    if doc.schema != SCHEMA {
        return Err(CliError::Parse(format!(
            "unsupported schema {:?} (expected {SCHEMA:?})",
            doc.schema
        )));
    }
    Ok(doc)
}

/// Emit a document in canonical form (pretty JSON, trailing newline).
/// `emit(parse(x))` is byte-identical for canonical files.
pub fn emit(doc: &Document) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("document serialization is total");
    s.push('\n');
    s
}
