//! Subcommand implementations: each returns the process exit code together
//! with the full stdout text, so the binary stays a thin shell and tests can
//! drive the same paths.

use std::fs;
use std::path::{Path, PathBuf};

use kur_core::kchart::{
    compose_morphisms, hom_stack, import_fooo_change, import_mw_change, is_coordinate_change,
    validate_chart, validate_morphism, validate_two_morphism,
};
use kur_core::kinvariant::{
    fibre_product_chart, fibre_product_points, orient_atlas, point_invariants, transversality,
    TransMode,
};
use kur_core::kspace::{
    classify, compose_space_morphisms, validate_atlas, validate_space_morphism,
};
use kur_core::mchain::{boundary, normalize, pushforward};
use kur_core::twocat::{check_laws, TwoCatError};
use serde_json::{json, Value};

use crate::dto::{self, Body, ChainDto, CliError, Document, MorphismDto, SpaceMorphismDto};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Format {
    Text,
    Machine,
}

/// Exit code plus the text to print on stdout.
pub struct Outcome {
    pub exit: i32,
    pub stdout: String,
}

fn errored(e: &CliError) -> Outcome {
    let exit = match e {
        CliError::Parse(_) | CliError::Resolution(_) => 2,
        CliError::Failed(_) => 1,
    };
    Outcome {
        exit,
        stdout: format!("{e}\n"),
    }
}

fn report(
    format: Format,
    command: &str,
    pass: bool,
    lines: &[String],
    details: Value,
) -> Outcome {
    let stdout = match format {
        Format::Text => {
            let mut out = String::new();
            for l in lines {
                out.push_str(l);
                out.push('\n');
            }
            out.push_str(if pass { "status: pass\n" } else { "status: fail\n" });
            out
        }
        Format::Machine => {
            let v = json!({
                "command": command,
                "status": if pass { "pass" } else { "fail" },
                "lines": lines,
                "details": details,
            });
            let mut s = serde_json::to_string_pretty(&v).expect("report serialization");
            s.push('\n');
            s
        }
    };
    Outcome {
        exit: if pass { 0 } else { 1 },
        stdout,
    }
}

fn load(path: &Path) -> Result<Document, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    dto::parse(&text)
}

fn emit_document(doc: &Document, out: Option<&PathBuf>) -> Result<Outcome, CliError> {
    let text = dto::emit(doc);
    match out {
        Some(path) => {
            fs::write(path, &text)
                .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
            Ok(Outcome {
                exit: 0,
                stdout: format!("wrote {} document to {}\n", doc.kind(), path.display()),
            })
        }
        None => Ok(Outcome {
            exit: 0,
            stdout: text,
        }),
    }
}

fn run_or_error(f: impl FnOnce() -> Result<Outcome, CliError>) -> Outcome {
    f().unwrap_or_else(|e| errored(&e))
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

pub fn validate(format: Format, file: &Path) -> Outcome {
    run_or_error(|| {
        let doc = load(file)?;
        let kind = doc.kind().to_string();
        let violations: Vec<String> = match &doc.body {
            Body::Chart { chart } => validate_chart(&chart.to_core("chart")?).violations,
            Body::Morphism { morphism } => {
                validate_morphism(&morphism.to_core("morphism")?).violations
            }
            Body::TwoMorphism { two_morphism } => {
                validate_two_morphism(&two_morphism.to_core("two_morphism")?).violations
            }
            Body::Atlas { atlas } => validate_atlas(&atlas.to_core("atlas")?).violations,
            Body::SpaceMorphism { space_morphism } => {
                validate_space_morphism(&space_morphism.to_core("space_morphism")?).violations
            }
            Body::Chain { chain } => {
                let c = chain.to_core("chain")?;
                let normal = normalize(&c) == c;
                if normal {
                    Vec::new()
                } else {
                    vec!["chain is well-formed but not in normal form".into()]
                }
            }
            Body::AffineMap { affine_map } => {
                affine_map.to_core("affine_map")?;
                Vec::new()
            }
            Body::FoooChange { fooo_change } => {
                match import_fooo_change(&fooo_change.to_core("fooo_change")?) {
                    Ok(_) => Vec::new(),
                    Err(e) => vec![e.to_string()],
                }
            }
            Body::MwChange { mw_change } => {
                match import_mw_change(&mw_change.to_core("mw_change")?) {
                    Ok(_) => Vec::new(),
                    Err(e) => vec![e.to_string()],
                }
            }
            Body::Fragment { fragment } => {
                fragment.to_core("fragment")?;
                Vec::new()
            }
        };
        let pass = violations.is_empty();
        let mut lines = vec![format!("kind: {kind}")];
        lines.extend(violations.iter().cloned());
        Ok(report(
            format,
            "validate",
            pass,
            &lines,
            json!({ "kind": kind, "violations": violations }),
        ))
    })
}

// ---------------------------------------------------------------------------
// compose
// ---------------------------------------------------------------------------

/// Compose two documents in application order: the result is
/// `second ∘ first`.
pub fn compose(format: Format, first: &Path, second: &Path, out: Option<&PathBuf>) -> Outcome {
    let _ = format;
    run_or_error(|| {
        let d1 = load(first)?;
        let d2 = load(second)?;
        match (&d1.body, &d2.body) {
            (Body::Morphism { morphism: m1 }, Body::Morphism { morphism: m2 }) => {
                let f = m1.to_core("first morphism")?;
                let g = m2.to_core("second morphism")?;
                let gf = compose_morphisms(&g, &f)
                    .map_err(|e| CliError::Failed(format!("composition: {e}")))?;
                emit_document(
                    &Document::new(Body::Morphism {
                        morphism: MorphismDto::from_core(&gf),
                    }),
                    out,
                )
            }
            (
                Body::SpaceMorphism { space_morphism: m1 },
                Body::SpaceMorphism { space_morphism: m2 },
            ) => {
                let f = m1.to_core("first space morphism")?;
                let g = m2.to_core("second space morphism")?;
                let (gf, _theta) = compose_space_morphisms(&g, &f)
                    .map_err(|e| CliError::Failed(format!("composition: {e}")))?;
                emit_document(
                    &Document::new(Body::SpaceMorphism {
                        space_morphism: SpaceMorphismDto::from_core(&gf),
                    }),
                    out,
                )
            }
            _ => Err(CliError::Resolution(format!(
                "compose expects two morphism or two space_morphism documents, found {} and {}",
                d1.kind(),
                d2.kind()
            ))),
        }
    })
}

// ---------------------------------------------------------------------------
// coordchange
// ---------------------------------------------------------------------------

pub fn coordchange(format: Format, file: &Path) -> Outcome {
    run_or_error(|| {
        let doc = load(file)?;
        let Body::Morphism { morphism } = &doc.body else {
            return Err(CliError::Resolution(format!(
                "coordchange expects a morphism document, found {}",
                doc.kind()
            )));
        };
        let m = morphism.to_core("morphism")?;
        let rep = is_coordinate_change(&m).map_err(|e| CliError::Failed(e.to_string()))?;
        let mut lines = Vec::new();
        let mut points = Vec::new();
        for p in &rep.points {
            lines.push(format!(
                "point {}: complex exact: {}, stabilizer isomorphism: {}",
                p.p, p.exact, p.stab_iso
            ));
            points.push(json!({ "p": p.p, "exact": p.exact, "stab_iso": p.stab_iso }));
        }
        lines.push(format!("coordinate change: {}", rep.ok));
        Ok(report(
            format,
            "coordchange",
            rep.ok,
            &lines,
            json!({ "ok": rep.ok, "points": points }),
        ))
    })
}

// ---------------------------------------------------------------------------
// invariants
// ---------------------------------------------------------------------------

pub fn invariants(format: Format, file: &Path) -> Outcome {
    run_or_error(|| {
        let doc = load(file)?;
        let Body::Atlas { atlas } = &doc.body else {
            return Err(CliError::Resolution(format!(
                "invariants expects an atlas document, found {}",
                doc.kind()
            )));
        };
        let a = atlas.to_core("atlas")?;
        let mut lines = Vec::new();
        let mut rows = Vec::new();
        for x in 0..a.footprint_size {
            let tr = point_invariants(&a, x, None).map_err(|e| CliError::Failed(e.to_string()))?;
            lines.push(format!(
                "point {x}: |G| = {}, dim T = {}, dim O = {}",
                tr.group.order(),
                tr.t_dim,
                tr.o_dim
            ));
            rows.push(json!({
                "x": x,
                "isotropy_order": tr.group.order(),
                "t_dim": tr.t_dim,
                "o_dim": tr.o_dim,
            }));
        }
        let cls = classify(&a).map_err(|e| CliError::Failed(e.to_string()))?;
        lines.push(format!(
            "manifold: {}, orbifold: {}, trivial groups: {}, trivial isotropy: {}",
            cls.is_manifold, cls.is_orbifold, cls.is_mkuranishi, cls.has_trivial_isotropy
        ));
        Ok(report(
            format,
            "invariants",
            true,
            &lines,
            json!({
                "points": rows,
                "classification": {
                    "is_manifold": cls.is_manifold,
                    "is_orbifold": cls.is_orbifold,
                    "is_mkuranishi": cls.is_mkuranishi,
                    "has_trivial_isotropy": cls.has_trivial_isotropy,
                },
            }),
        ))
    })
}

// ---------------------------------------------------------------------------
// fibre-product
// ---------------------------------------------------------------------------

pub fn fibre_product(format: Format, left: &Path, right: &Path) -> Outcome {
    run_or_error(|| {
        let d1 = load(left)?;
        let d2 = load(right)?;
        let (Body::SpaceMorphism { space_morphism: m1 }, Body::SpaceMorphism { space_morphism: m2 }) =
            (&d1.body, &d2.body)
        else {
            return Err(CliError::Resolution(format!(
                "fibre-product expects two space_morphism documents, found {} and {}",
                d1.kind(),
                d2.kind()
            )));
        };
        let g = m1.to_core("left space morphism")?;
        let h = m2.to_core("right space morphism")?;
        let weak = transversality(&g, &h, TransMode::Weak)
            .map_err(|e| CliError::Failed(e.to_string()))?;
        let strong = transversality(&g, &h, TransMode::Strong)
            .map_err(|e| CliError::Failed(e.to_string()))?;
        let mut lines = vec![
            format!("d-transverse: {}", weak.ok),
            format!("strongly d-transverse: {}", strong.ok),
        ];
        let mut pass = weak.ok;
        let mut point_rows = Vec::new();
        if weak.ok {
            let points =
                fibre_product_points(&g, &h).map_err(|e| CliError::Failed(e.to_string()))?;
            for pt in &points {
                let cert = fibre_product_chart(&g, &h, pt.x, pt.y, pt.coset_rep)
                    .map_err(|e| CliError::Failed(e.to_string()))?;
                let ok = cert.exact && cert.vdim_ok;
                pass = pass && ok;
                lines.push(format!(
                    "point (x={}, y={}, coset {}): |G| = {}, dim T = {}, dim O = {}, six-term exact: {}, vdim additive: {}",
                    pt.x, pt.y, pt.coset_rep, pt.isotropy_order, cert.t_dim, cert.o_dim,
                    cert.exact, cert.vdim_ok
                ));
                point_rows.push(json!({
                    "x": pt.x,
                    "y": pt.y,
                    "coset_rep": pt.coset_rep,
                    "isotropy_order": pt.isotropy_order,
                    "t_dim": cert.t_dim,
                    "o_dim": cert.o_dim,
                    "exact": cert.exact,
                    "vdim_ok": cert.vdim_ok,
                }));
            }
            lines.push(format!("fibre product points: {}", points.len()));
        } else if let Some((x, y, gamma)) = weak.witness {
            lines.push(format!(
                "transversality fails at (x={x}, y={y}, group element {gamma})"
            ));
        }
        Ok(report(
            format,
            "fibre-product",
            pass,
            &lines,
            json!({
                "transverse": weak.ok,
                "strongly_transverse": strong.ok,
                "points": point_rows,
            }),
        ))
    })
}

// ---------------------------------------------------------------------------
// laws
// ---------------------------------------------------------------------------

pub fn laws(format: Format, file: &Path, samples: usize, seed: u64) -> Outcome {
    run_or_error(|| {
        let doc = load(file)?;
        let Body::Fragment { fragment } = &doc.body else {
            return Err(CliError::Resolution(format!(
                "laws expects a fragment document, found {}",
                doc.kind()
            )));
        };
        let frag = fragment.to_core("fragment")?;
        let rep = check_laws(&frag, samples, seed).map_err(|e| match e {
            TwoCatError::TableIncomplete(m) => CliError::Resolution(m),
            TwoCatError::Malformed(m) => CliError::Resolution(m),
        })?;
        let mut lines = Vec::new();
        for (law, count) in &rep.checked {
            lines.push(format!("{law}: {count} instances checked"));
        }
        for v in &rep.violations {
            lines.push(format!("violation [{}]: {}", v.law, v.detail));
        }
        lines.push(format!("sampled: {}", rep.sampled));
        let pass = rep.is_ok();
        let checked: Vec<Value> = rep
            .checked
            .iter()
            .map(|(law, count)| json!({ "law": law, "checked": count }))
            .collect();
        let violations: Vec<Value> = rep
            .violations
            .iter()
            .map(|v| json!({ "law": v.law, "detail": v.detail }))
            .collect();
        Ok(report(
            format,
            "laws",
            pass,
            &lines,
            json!({ "checked": checked, "violations": violations, "sampled": rep.sampled }),
        ))
    })
}

// ---------------------------------------------------------------------------
// stack
// ---------------------------------------------------------------------------

pub fn stack(format: Format, file: &Path) -> Outcome {
    run_or_error(|| {
        let doc = load(file)?;
        let Body::Atlas { atlas } = &doc.body else {
            return Err(CliError::Resolution(format!(
                "stack expects an atlas document, found {}",
                doc.kind()
            )));
        };
        let a = atlas.to_core("atlas")?;
        let n = a.charts.len();
        let mut lines = Vec::new();
        let mut violations: Vec<String> = Vec::new();
        let mut checks = 0usize;
        for i in 0..n {
            for j in 0..n {
                let hs = hom_stack(
                    &a.charts[i],
                    &a.charts[j],
                    &a.changes[i][j].f_map,
                    std::slice::from_ref(&a.changes[i][j]),
                    &[],
                )
                .map_err(|e| CliError::Failed(format!("hom stack ({i},{j}): {e}")))?;
                let site = &hs.prestack.site;
                let mut pair_checks = 0usize;
                for s in 0..site.n_opens() {
                    for cover in site.covers_of(s) {
                        let rep = kur_core::descent::check_stack_axioms(&hs.prestack, s, &cover)
                            .map_err(|e| {
                                CliError::Failed(format!("stack axioms ({i},{j}): {e}"))
                            })?;
                        pair_checks += rep.separation_checked
                            + rep.morphism_gluing_checked
                            + rep.object_gluing_checked;
                        for v in rep.violations {
                            violations.push(format!("pair ({i},{j}), open {s}: {v}"));
                        }
                    }
                }
                checks += pair_checks;
                lines.push(format!("pair ({i},{j}): {pair_checks} instances checked"));
            }
        }
        let pass = violations.is_empty();
        lines.extend(violations.iter().cloned());
        lines.push(format!("total instances: {checks}"));
        Ok(report(
            format,
            "stack",
            pass,
            &lines,
            json!({ "checked": checks, "violations": violations }),
        ))
    })
}

// ---------------------------------------------------------------------------
// mchain
// ---------------------------------------------------------------------------

pub enum MchainOp {
    Boundary,
    Normalize,
    Pushforward(PathBuf),
}

pub fn mchain(format: Format, op: &MchainOp, file: &Path, out: Option<&PathBuf>) -> Outcome {
    let _ = format;
    run_or_error(|| {
        let doc = load(file)?;
        let Body::Chain { chain } = &doc.body else {
            return Err(CliError::Resolution(format!(
                "mchain expects a chain document, found {}",
                doc.kind()
            )));
        };
        let c = chain.to_core("chain")?;
        let result = match op {
            MchainOp::Boundary => boundary(&c),
            MchainOp::Normalize => normalize(&c),
            MchainOp::Pushforward(map_path) => {
                let map_doc = load(map_path)?;
                let Body::AffineMap { affine_map } = &map_doc.body else {
                    return Err(CliError::Resolution(format!(
                        "pushforward expects an affine_map document, found {}",
                        map_doc.kind()
                    )));
                };
                let f = affine_map.to_core("affine_map")?;
                pushforward(&f, &c).map_err(|e| CliError::Failed(e.to_string()))?
            }
        };
        emit_document(
            &Document::new(Body::Chain {
                chain: ChainDto::from_core(&result),
            }),
            out,
        )
    })
}

// ---------------------------------------------------------------------------
// import
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Dialect {
    Fooo,
    Mw,
}

pub fn import(format: Format, file: &Path, dialect: Dialect, out: Option<&PathBuf>) -> Outcome {
    let _ = format;
    run_or_error(|| {
        let doc = load(file)?;
        let morphism = match (&doc.body, dialect) {
            (Body::FoooChange { fooo_change }, Dialect::Fooo) => {
                let ch = fooo_change.to_core("fooo_change")?;
                let (m, _notes) =
                    import_fooo_change(&ch).map_err(|e| CliError::Failed(e.to_string()))?;
                m
            }
            (Body::MwChange { mw_change }, Dialect::Mw) => {
                let ch = mw_change.to_core("mw_change")?;
                import_mw_change(&ch).map_err(|e| CliError::Failed(e.to_string()))?
            }
            _ => {
                return Err(CliError::Resolution(format!(
                    "import --dialect {} expects a matching change document, found {}",
                    match dialect {
                        Dialect::Fooo => "fooo",
                        Dialect::Mw => "mw",
                    },
                    doc.kind()
                )));
            }
        };
        emit_document(
            &Document::new(Body::Morphism {
                morphism: MorphismDto::from_core(&morphism),
            }),
            out,
        )
    })
}

// ---------------------------------------------------------------------------
// orient
// ---------------------------------------------------------------------------

pub fn orient(format: Format, file: &Path) -> Outcome {
    run_or_error(|| {
        let doc = load(file)?;
        let Body::Atlas { atlas } = &doc.body else {
            return Err(CliError::Resolution(format!(
                "orient expects an atlas document, found {}",
                doc.kind()
            )));
        };
        let a = atlas.to_core("atlas")?;
        match orient_atlas(&a) {
            Ok(signs) => {
                let lines: Vec<String> = signs
                    .iter()
                    .enumerate()
                    .map(|(i, s)| format!("chart {i}: {}", if *s > 0 { "+1" } else { "-1" }))
                    .collect();
                Ok(report(
                    format,
                    "orient",
                    true,
                    &lines,
                    json!({ "orientable": true, "signs": signs }),
                ))
            }
            Err(e) => Ok(report(
                format,
                "orient",
                false,
                &[format!("not orientable: {e}")],
                json!({ "orientable": false, "reason": e.to_string() }),
            )),
        }
    })
}
