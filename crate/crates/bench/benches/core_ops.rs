use criterion::{criterion_group, criterion_main, Criterion};
use kur_core::exactlin::Rat;
use kur_core::kchart::{compose_morphisms, identity_morphism, is_coordinate_change};
use kur_core::kspace::{from_manifold, validate_atlas};
use kur_core::mchain::{boundary, AffineMap, MChain, PolytopeComponent, PolytopeGenerator};

fn rat(n: i64) -> Rat {
    Rat::from_integer(n.into())
}

/// The unit cube [0,1]^3 as a single integer chain generator.
fn cube_chain() -> MChain {
    let mut vertices = Vec::new();
    for mask in 0..8u32 {
        vertices.push((0..3).map(|i| rat(((mask >> i) & 1) as i64)).collect());
    }
    let gen = PolytopeGenerator {
        n: 0,
        components: vec![PolytopeComponent {
            vertices,
            sign: 1,
            s: AffineMap::to_point(3),
            t: AffineMap::identity(3),
        }],
    };
    MChain::new(false, vec![(rat(1), gen)]).expect("cube chain")
}

fn bench_core_ops(c: &mut Criterion) {
    let atlas = from_manifold(&[2, 2, 2]).expect("manifold atlas");
    let ident = identity_morphism(&atlas.charts[0]).expect("identity morphism");
    let cube = cube_chain();

    c.bench_function("is_coordinate_change/identity", |b| {
        b.iter(|| is_coordinate_change(std::hint::black_box(&ident)).unwrap())
    });
    c.bench_function("compose_morphisms/identity_pair", |b| {
        b.iter(|| {
            compose_morphisms(std::hint::black_box(&ident), std::hint::black_box(&ident)).unwrap()
        })
    });
    c.bench_function("validate_atlas/manifold_3charts", |b| {
        b.iter(|| validate_atlas(std::hint::black_box(&atlas)))
    });
    c.bench_function("mchain_boundary/unit_cube", |b| {
        b.iter(|| boundary(std::hint::black_box(&cube)))
    });
}

criterion_group!(benches, bench_core_ops);
criterion_main!(benches);
