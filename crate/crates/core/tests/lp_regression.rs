use benders_lab_core::lp::{self, BasisHint, LinearProgram, LpStatus};

/// Benders masters captured mid-run, each with the warm-start basis it was
/// given. Infinite bounds are stored as ±1e300.
fn fixture(text: &str) -> (LinearProgram<f64>, BasisHint) {
    let (mut lp, hint): (LinearProgram<f64>, BasisHint) = serde_json::from_str(text).unwrap();
    for u in &mut lp.upper {
        if *u >= 1e299 {
            *u = f64::INFINITY;
        }
    }
    for l in &mut lp.lower {
        if *l <= -1e299 {
            *l = f64::NEG_INFINITY;
        }
    }
    (lp, hint)
}

fn cold_and_warm_agree(text: &str) {
    let (lp, hint) = fixture(text);
    let cold = lp::solve(&lp).unwrap();
    let warm = lp::solve_with_basis(&lp, &hint).unwrap();
    assert_eq!(cold.status(), LpStatus::Optimal);
    assert_eq!(warm.status(), LpStatus::Optimal);
    let (a, b) = (cold.objective().unwrap(), warm.objective().unwrap());
    assert!((a - b).abs() <= 1e-7 * (1.0 + a.abs()), "{a} vs {b}");
}

/// Used to stall on a long run of vanishing steps.
#[test]
fn vanishing_steps_do_not_stall() {
    cold_and_warm_agree(include_str!("data/stalling_master.json"));
}

/// Used to circle at a fixed objective with steps just above the
/// degeneracy threshold, never reaching the Bland fallback.
#[test]
fn drifting_degenerate_pivots_terminate() {
    cold_and_warm_agree(include_str!("data/drifting_master_small.json"));
    cold_and_warm_agree(include_str!("data/drifting_master_large.json"));
}
