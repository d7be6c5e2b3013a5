//! End-to-end tests of the `kur` binary and the document model, driven by
//! the golden examples in `docs/examples/`.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use kur_cli::dto;

const KINDS: [&str; 10] = [
    "chart",
    "morphism",
    "two_morphism",
    "atlas",
    "space_morphism",
    "chain",
    "affine_map",
    "fooo_change",
    "mw_change",
    "fragment",
];

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples")
}

fn golden(kind: &str) -> PathBuf {
    golden_dir().join(format!("{kind}.json"))
}

fn kur(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kur"))
        .args(args)
        .output()
        .expect("spawn kur")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

#[test]
fn goldens_round_trip_byte_identically() {
    for kind in KINDS {
        let text = fs::read_to_string(golden(kind)).expect(kind);
        let doc = dto::parse(&text).expect(kind);
        assert_eq!(doc.kind(), kind);
        assert_eq!(dto::emit(&doc), text, "round trip for {kind}");
    }
}

#[test]
fn validate_passes_on_every_golden() {
    for kind in KINDS {
        let path = golden(kind);
        let out = kur(&["validate", path.to_str().unwrap()]);
        assert_eq!(exit_code(&out), 0, "{kind}: {}", stdout(&out));
        assert!(stdout(&out).contains("status: pass"), "{kind}");
    }
}

#[test]
fn machine_format_is_json_with_pass_status() {
    let path = golden("chart");
    let out = kur(&["--format", "machine", "validate", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("machine output");
    assert_eq!(v["command"], "validate");
    assert_eq!(v["status"], "pass");
}

#[test]
fn parse_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();

    // Not JSON at all.
    let garbled = dir.path().join("garbled.json");
    fs::write(&garbled, "not json").unwrap();
    let out = kur(&["validate", garbled.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    assert!(stdout(&out).contains("parse error"), "{}", stdout(&out));

    // Valid JSON, wrong schema tag.
    let text = fs::read_to_string(golden("chart")).unwrap();
    let wrong = dir.path().join("wrong_schema.json");
    fs::write(&wrong, text.replace("\"kur/1\"", "\"kur/9\"")).unwrap();
    let out = kur(&["validate", wrong.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);

    // Missing file.
    let out = kur(&["validate", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn dangling_references_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(golden("chart")).unwrap();

    // Point the footprint map at a footprint index that does not exist.
    let broken = text.replace("\"footprint_size\": 1", "\"footprint_size\": 0");
    let path = dir.path().join("dangling.json");
    fs::write(&path, broken).unwrap();
    let out = kur(&["validate", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2, "{}", stdout(&out));
    assert!(stdout(&out).contains("resolution error"), "{}", stdout(&out));
}

#[test]
fn coordchange_accepts_the_identity_morphism() {
    let out = kur(&["coordchange", golden("morphism").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("coordinate change: true"));
}

#[test]
fn compose_identity_with_itself_is_canonical_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("composite.json");
    let m = golden("morphism");
    let out = kur(&[
        "compose",
        m.to_str().unwrap(),
        m.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));
    let text = fs::read_to_string(&out_path).unwrap();
    let doc = dto::parse(&text).unwrap();
    assert_eq!(doc.kind(), "morphism");
    assert_eq!(dto::emit(&doc), text, "emitted composite is canonical");
    let check = kur(&["validate", out_path.to_str().unwrap()]);
    assert_eq!(exit_code(&check), 0);
}

#[test]
fn space_morphism_composition_and_fibre_product_pass() {
    let s = golden("space_morphism");
    let out = kur(&["compose", s.to_str().unwrap(), s.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));

    let out = kur(&["fibre-product", s.to_str().unwrap(), s.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("d-transverse: true"));
    assert!(text.contains("six-term exact: true"));
}

#[test]
fn invariants_orient_and_stack_pass_on_the_atlas_golden() {
    let a = golden("atlas");
    let out = kur(&["invariants", a.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("manifold: true"));

    let out = kur(&["orient", a.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("chart 0: +1"));

    let out = kur(&["stack", a.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("status: pass"));
}

#[test]
fn laws_output_is_deterministic_for_a_fixed_seed() {
    let f = golden("fragment");
    let args = ["laws", f.to_str().unwrap(), "--samples", "100", "--seed", "7"];
    let first = kur(&args);
    let second = kur(&args);
    assert_eq!(exit_code(&first), 0, "{}", stdout(&first));
    assert_eq!(first.stdout, second.stdout, "identical runs must agree byte for byte");
}

#[test]
fn mchain_boundary_of_the_interval_has_two_signed_points() {
    let out = kur(&["mchain", "boundary", golden("chain").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));
    let doc = dto::parse(&stdout(&out)).expect("boundary document");
    let dto::Body::Chain { chain } = &doc.body else {
        panic!("expected a chain document");
    };
    assert_eq!(chain.terms.len(), 2);
    let coeffs: Vec<&str> = chain.terms.iter().map(|t| t.coeff.as_str()).collect();
    assert_eq!(coeffs, ["-1", "1"]);

    // The boundary of the boundary is empty.
    let dir = tempfile::tempdir().unwrap();
    let b_path = dir.path().join("boundary.json");
    fs::write(&b_path, stdout(&out)).unwrap();
    let out2 = kur(&["mchain", "boundary", b_path.to_str().unwrap()]);
    assert_eq!(exit_code(&out2), 0);
    let doc2 = dto::parse(&stdout(&out2)).unwrap();
    let dto::Body::Chain { chain } = &doc2.body else {
        panic!("expected a chain document");
    };
    assert!(chain.terms.is_empty());
}

#[test]
fn mchain_pushforward_composes_the_target_map() {
    let out = kur(&[
        "mchain",
        "pushforward",
        golden("chain").to_str().unwrap(),
        "--map",
        golden("affine_map").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));
    // Doubling the interval [0,1] moves its far endpoint to 2.
    assert!(stdout(&out).contains("\"2\""), "{}", stdout(&out));
}

#[test]
fn import_produces_valid_coordinate_changes_in_both_dialects() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, dialect) in [("fooo_change", "fooo"), ("mw_change", "mw")] {
        let out_path = dir.path().join(format!("{dialect}.json"));
        let out = kur(&[
            "import",
            golden(kind).to_str().unwrap(),
            "--dialect",
            dialect,
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "{kind}: {}", stdout(&out));
        let check = kur(&["coordchange", out_path.to_str().unwrap()]);
        assert_eq!(exit_code(&check), 0, "{kind}: {}", stdout(&check));
    }

    // Mismatched dialect is a resolution error.
    let out = kur(&[
        "import",
        golden("fooo_change").to_str().unwrap(),
        "--dialect",
        "mw",
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn kind_mismatches_are_resolution_errors() {
    let chart = golden("chart");
    for args in [
        vec!["coordchange", chart.to_str().unwrap()],
        vec!["invariants", chart.to_str().unwrap()],
        vec!["orient", chart.to_str().unwrap()],
        vec!["laws", chart.to_str().unwrap()],
        vec!["stack", chart.to_str().unwrap()],
        vec!["mchain", "boundary", chart.to_str().unwrap()],
    ] {
        let out = kur(&args);
        assert_eq!(exit_code(&out), 2, "{args:?}: {}", stdout(&out));
    }
}

#[test]
fn kur_threads_env_is_accepted() {
    let out = Command::new(env!("CARGO_BIN_EXE_kur"))
        .env("KUR_THREADS", "4")
        .args(["validate", golden("chart").to_str().unwrap()])
        .output()
        .expect("spawn kur");
    assert_eq!(out.status.code(), Some(0));
}
