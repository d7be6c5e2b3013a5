//! Regenerates the golden example documents in `docs/examples/`.
//!
//! Run with `cargo run -p kur-cli --example bless` from anywhere in the
//! workspace. Each golden is emitted in canonical form, so `kur` commands
//! round-trip them byte-identically.

use std::fs;
use std::path::PathBuf;

use kur_cli::dto::{
    self, AffineDto, AtlasDto, Body, ChainDto, ChartDto, Document, FoooDto, FragmentDto,
    MorphismDto, MwDto, SpaceMorphismDto, TwoMorphismDto,
};
use kur_core::exactlin::{GroupHom, Rat, RationalMatrix};
use kur_core::kchart::{identity_morphism, ChartTwoMorphism, FoooChange, MwChange};
use kur_core::kspace::{from_manifold, identity_space_morphism};
use kur_core::mchain::{normalize, AffineMap, MChain, PolytopeComponent, PolytopeGenerator};

fn rat(n: i64) -> Rat {
    Rat::from_integer(n.into())
}

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples");
    fs::create_dir_all(&dir).expect("create docs/examples");

    // A one-chart atlas of a 1-dimensional manifold drives most goldens.
    let atlas = from_manifold(&[1]).expect("manifold atlas");
    let chart = atlas.charts[0].clone();
    let ident = identity_morphism(&chart).expect("identity morphism");
    let cell = ChartTwoMorphism::identity(&ident);
    let space_ident = identity_space_morphism(&atlas);

    // The oriented interval [0,1] as a degree-1 chain.
    let interval = PolytopeGenerator {
        n: 0,
        components: vec![PolytopeComponent {
            vertices: vec![vec![rat(0)], vec![rat(1)]],
            sign: 1,
            s: AffineMap::to_point(1),
            t: AffineMap::identity(1),
        }],
    };
    let chain = normalize(&MChain::new(false, vec![(rat(1), interval)]).expect("interval chain"));

    // The doubling map on the line.
    let double = AffineMap::new(
        RationalMatrix::from_rows(vec![vec![rat(2)]]).expect("1x1 matrix"),
        vec![rat(0)],
    )
    .expect("affine map");

    // Trivial coordinate changes from the identity on the manifold chart,
    // written in each external dialect.
    let trivial_hom = GroupHom::new(chart.group.clone(), chart.group.clone(), vec![0])
        .expect("trivial homomorphism");
    let fooo = FoooChange {
        source: chart.clone(),
        target: chart.clone(),
        v_ij: vec![0],
        h: trivial_hom.clone(),
        phi0: vec![0],
        dphi0: vec![RationalMatrix::identity(1)],
        phihat0: vec![RationalMatrix::zero(0, 0)],
    };
    let mw = MwChange {
        source: chart.clone(),
        target: chart.clone(),
        v_tilde: vec![0],
        varpi: vec![0],
        dvarpi: vec![RationalMatrix::identity(1)],
        ehat: vec![RationalMatrix::zero(0, 0)],
        rho: trivial_hom,
    };

    // A strict fragment: one object, 1-cells {id, f} with f∘f = f, and only
    // identity 2-cells.
    let fragment = FragmentDto {
        n_objects: 1,
        one_cells: vec![[0, 0], [0, 0]],
        two_cells: vec![[0, 0], [1, 1]],
        id1: vec![[0, 0]],
        id2: vec![[0, 0], [1, 1]],
        compose: vec![[0, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 1]],
        vcomp: vec![[0, 0, 0], [1, 1, 1]],
        hcomp: vec![[0, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 1]],
        assoc: vec![
            [0, 0, 0, 0],
            [0, 0, 1, 1],
            [0, 1, 0, 1],
            [0, 1, 1, 1],
            [1, 0, 0, 1],
            [1, 0, 1, 1],
            [1, 1, 0, 1],
            [1, 1, 1, 1],
        ],
        unitor_b: vec![[0, 0], [1, 1]],
        unitor_c: vec![[0, 0], [1, 1]],
        inverses: vec![[0, 0], [1, 1]],
    };

    let goldens: Vec<(&str, Body)> = vec![
        (
            "chart.json",
            Body::Chart {
                chart: ChartDto::from_core(&chart),
            },
        ),
        (
            "morphism.json",
            Body::Morphism {
                morphism: MorphismDto::from_core(&ident),
            },
        ),
        (
            "two_morphism.json",
            Body::TwoMorphism {
                two_morphism: TwoMorphismDto::from_core(&cell),
            },
        ),
        (
            "atlas.json",
            Body::Atlas {
                atlas: AtlasDto::from_core(&atlas),
            },
        ),
        (
            "space_morphism.json",
            Body::SpaceMorphism {
                space_morphism: SpaceMorphismDto::from_core(&space_ident),
            },
        ),
        (
            "chain.json",
            Body::Chain {
                chain: ChainDto::from_core(&chain),
            },
        ),
        (
            "affine_map.json",
            Body::AffineMap {
                affine_map: AffineDto::from_core(&double),
            },
        ),
        (
            "fooo_change.json",
            Body::FoooChange {
                fooo_change: FoooDto::from_core(&fooo),
            },
        ),
        (
            "mw_change.json",
            Body::MwChange {
                mw_change: MwDto::from_core(&mw),
            },
        ),
        ("fragment.json", Body::Fragment { fragment }),
    ];

    for (name, body) in goldens {
        let doc = Document::new(body);
        let text = dto::emit(&doc);
        let reparsed = dto::parse(&text).expect(name);
        assert_eq!(dto::emit(&reparsed), text, "round trip for {name}");
        fs::write(dir.join(name), &text).expect(name);
        println!("wrote docs/examples/{name}");
    }
}
