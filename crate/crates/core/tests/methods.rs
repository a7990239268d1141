use benders_lab_core::problems::{self, Built, CppShape, FlCvarShape, SmcfShape};
use benders_lab_core::{solve, Config, InitialPartition, Method, SolveStatus};

fn config() -> Config {
    Config {
        tol_gap: 1e-8,
        tol_cut: 1e-9,
        ..Config::default()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

fn agree(built: &Built, label: &str) {
    let cfg = config();
    let reports: Vec<_> = Method::ALL
        .iter()
        .map(|&m| {
            let r = solve(m, &built.problem, &built.extractor, &cfg)
                .unwrap_or_else(|e| panic!("{label} {m}: {e}"));
            assert_eq!(r.status, SolveStatus::Optimal, "{label} {m}");
            r
        })
        .collect();
    let de = reports[0].objective;
    for r in &reports {
        assert!(
            rel(r.objective, de) < 1e-6,
            "{label} {}: {} vs DE {de}",
            r.method,
            r.objective
        );
        assert!(
            r.lower_bound <= r.upper_bound + 1e-7 * (1.0 + de.abs()),
            "{label} {}",
            r.method
        );
    }
}

#[test]
fn cpp_methods_agree() {
    for seed in 0..3 {
        let inst = problems::generate_cpp(CppShape::default(), 10, seed).unwrap();
        agree(
            &problems::build_cpp(&inst).unwrap(),
            &format!("cpp seed {seed}"),
        );
    }
}

#[test]
fn smcf_methods_agree() {
    for seed in 0..3 {
        let shape = SmcfShape {
            grid: seed as usize % 5,
            ..SmcfShape::default()
        };
        let inst = problems::generate_smcf(shape, 0.4, 10, seed).unwrap();
        agree(
            &problems::build_smcf(&inst).unwrap(),
            &format!("smcf seed {seed}"),
        );
    }
}

#[test]
fn flcvar_methods_agree() {
    for seed in 0..2 {
        let inst = problems::generate_flcvar(FlCvarShape::default(), 10, seed).unwrap();
        agree(
            &problems::build_flcvar(&inst).unwrap(),
            &format!("flcvar seed {seed}"),
        );
    }
}

#[test]
fn adaptive_from_singletons_repeats_multi_cut() {
    let inst = problems::generate_smcf(SmcfShape::default(), 0.2, 12, 4).unwrap();
    let b = problems::build_smcf(&inst).unwrap();
    let mut cfg = config();
    cfg.record_cuts = true;
    let multi = solve(Method::MultiCut, &b.problem, &b.extractor, &cfg).unwrap();
    cfg.initial_partition = InitialPartition::Singletons;
    let adaptive = solve(Method::AdaptiveCut, &b.problem, &b.extractor, &cfg).unwrap();
    assert_eq!(multi.cuts.len(), adaptive.cuts.len());
    for (a, m) in adaptive.cuts.iter().zip(&multi.cuts) {
        assert_eq!(a.kind, m.kind);
        assert_eq!(a.origin_cell, m.origin_cell);
        assert!((a.constant - m.constant).abs() <= 1e-9 * (1.0 + m.constant.abs()));
    }
}

#[test]
fn generation_bounds_never_decrease() {
    let cpp = problems::generate_cpp(CppShape::default(), 50, 8).unwrap();
    // Binary first stage: bounds come from the branch-and-bound tree.
    let fl = problems::generate_flcvar(FlCvarShape::default(), 50, 4).unwrap();
    for b in [
        problems::build_cpp(&cpp).unwrap(),
        problems::build_flcvar(&fl).unwrap(),
    ] {
        for m in [Method::Gapm, Method::AdaptiveCut, Method::AdaptiveSingleCut] {
            let r = solve(m, &b.problem, &b.extractor, &config()).unwrap();
            for w in r.generation_bounds.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-8 * (1.0 + w[0].abs()),
                    "{m}: {:?}",
                    r.generation_bounds
                );
            }
        }
    }
}
