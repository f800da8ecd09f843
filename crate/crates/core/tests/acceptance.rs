//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.
//!
//! Runs shared between checks are computed once and cached.

use std::sync::OnceLock;

use mbpcn_core::experiments::{
    bubble_benchmark, coarsening_benchmark, convergence_study, init_trig, BubbleConfig, BubbleReport,
    CoarseningConfig, ConvergenceConfig, ConvergenceStudy, MeshKind, S2Choice, Stepping,
};
use mbpcn_core::mobility::{check_stabilized_bound, s1_lower_bound, tau_max_conditional};
use mbpcn_core::oracle::verify_all;
use mbpcn_core::{Domain2D, Mobility, RunRecord, SchemeParams};

const ORDER_RANGE: (f64, f64) = (1.8, 2.2);
const MBP_SLACK: f64 = 1e-8;

fn report(name: &str, passed: bool, detail: String) {
    println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
}

fn ladder_config(mobility: Mobility, mesh: MeshKind) -> ConvergenceConfig {
    let d = Domain2D::unit(256).unwrap();
    ConvergenceConfig {
        initial: init_trig(d),
        mobility,
        params: SchemeParams::new(0.01, 2.0, 2.0).unwrap(),
        horizon: 1.0,
        ladder: vec![10, 20, 40, 80, 160],
        mesh,
    }
}

fn constant_ladder() -> &'static ConvergenceStudy {
    static CELL: OnceLock<ConvergenceStudy> = OnceLock::new();
    CELL.get_or_init(|| convergence_study(&ladder_config(Mobility::Constant(1.0), MeshKind::Uniform)).unwrap())
}

fn degenerate_ladders() -> &'static [(&'static str, ConvergenceStudy)] {
    static CELL: OnceLock<Vec<(&'static str, ConvergenceStudy)>> = OnceLock::new();
    CELL.get_or_init(|| {
        let perturbed = MeshKind::Perturbed {
            amplitude: 0.4,
            seed: 20230917,
        };
        vec![
            ("uniform", convergence_study(&ladder_config(Mobility::Degenerate, MeshKind::Uniform)).unwrap()),
            ("perturbed", convergence_study(&ladder_config(Mobility::Degenerate, perturbed)).unwrap()),
        ]
    })
}

fn coarsening_runs() -> &'static [(f64, RunRecord)] {
    static CELL: OnceLock<Vec<(f64, RunRecord)>> = OnceLock::new();
    CELL.get_or_init(|| {
        [0.5, 1.0, 2.0]
            .into_iter()
            .map(|tau| {
                let cfg = CoarseningConfig {
                    s2: S2Choice::Value(1.44),
                    stepping: Stepping::Uniform { tau },
                    horizon: 100.0,
                    ..CoarseningConfig::default()
                };
                (tau, coarsening_benchmark(&cfg).unwrap())
            })
            .collect()
    })
}

/// Checks the orders on the two finest rungs; returns (passed, summary).
fn finest_orders(study: &ConvergenceStudy) -> (bool, String) {
    let rows = &study.rows[study.rows.len() - 2..];
    let mut ok = true;
    let mut parts = Vec::new();
    for r in rows {
        let (oh, os) = (r.order_h1.unwrap(), r.order_sup.unwrap());
        for o in [oh, os] {
            ok &= (ORDER_RANGE.0..=ORDER_RANGE.1).contains(&o);
        }
        parts.push(format!(
            "N={} max_ratio={:.3} e_h1={:.3e} e_sup={:.3e} order_h1={oh:.3} order_sup={os:.3}",
            r.n_steps, r.max_ratio, r.err_h1, r.err_sup
        ));
    }
    (ok, parts.join("; "))
}

#[test]
fn temporal_order_constant_mobility() {
    let (ok, detail) = finest_orders(constant_ladder());
    report("temporal order, constant mobility", ok, detail);
    assert!(ok);
}

#[test]
fn temporal_order_degenerate_mobility() {
    let mut all = true;
    let mut details = Vec::new();
    for (mesh, study) in degenerate_ladders() {
        let (ok, detail) = finest_orders(study);
        all &= ok;
        details.push(format!("[{mesh}] {detail}"));
    }
    report("temporal order, degenerate mobility", all, details.join(" "));
    assert!(all);
}

#[test]
fn unconditional_bound_preservation() {
    let mut ok = true;
    let mut details = Vec::new();
    for (tau, rec) in coarsening_runs() {
        let sup = rec.max_sup_norm();
        let completed = matches!(rec.outcome, mbpcn_core::RunOutcome::Completed);
        ok &= completed && sup <= 1.0 + MBP_SLACK;
        details.push(format!("tau={tau} steps={} max_sup={sup:.12}", rec.rows.len() - 1));
    }
    report("unconditional bound preservation", ok, details.join("; "));
    assert!(ok);
}

#[test]
fn conditional_regime_and_blow_up() {
    let h = 1.0 / 256.0;
    let tau_bound = tau_max_conditional(0.8, 1.0, h, h);
    let tau = 0.9 * tau_bound;
    let stable = coarsening_benchmark(&CoarseningConfig {
        s2: S2Choice::Value(0.0),
        stepping: Stepping::Uniform { tau },
        horizon: 100.0,
        ..CoarseningConfig::default()
    })
    .unwrap();
    let ok_a = matches!(stable.outcome, mbpcn_core::RunOutcome::Completed)
        && stable.max_sup_norm() <= 1.0 + MBP_SLACK;
    report(
        "conditional regime below the step bound",
        ok_a,
        format!("tau={tau:.6} max_sup={:.12}", stable.max_sup_norm()),
    );

    let unstable = coarsening_benchmark(&CoarseningConfig {
        horizon: 60.0,
        ..CoarseningConfig::unstable()
    })
    .unwrap();
    let first_exceed = unstable.rows.iter().find(|r| r.sup_norm > 1.0).map(|r| r.t);
    let blow_up_t = match unstable.outcome {
        mbpcn_core::RunOutcome::BlowUp { t, .. } => Some(t),
        _ => None,
    };
    let ok_b = blow_up_t.is_some_and(|t| t < 60.0) || first_exceed.is_some_and(|t| t < 60.0);
    report(
        "blow-up above the step bound (S2 = 0, tau = 2)",
        ok_b,
        format!("outcome={:?} first sup>1 at t={first_exceed:?}", unstable.outcome),
    );
    assert!(ok_a && ok_b);
}

#[test]
fn energy_behaviour() {
    let mut records: Vec<(String, &RunRecord)> = Vec::new();
    for (n, rec) in &constant_ladder().runs {
        records.push((format!("constant N={n}"), rec));
    }
    for (mesh, study) in degenerate_ladders() {
        for (n, rec) in &study.runs {
            records.push((format!("degenerate {mesh} N={n}"), rec));
        }
    }
    for (tau, rec) in coarsening_runs() {
        records.push((format!("coarsening tau={tau}"), rec));
    }

    let mut ok = true;
    let mut worst_bound = f64::NEG_INFINITY;
    let mut worst_increase = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for (name, rec) in &records {
        let e0 = rec.rows[0].energy;
        let excess = rec.rows.iter().map(|r| r.energy - e0).fold(f64::NEG_INFINITY, f64::max);
        let increase = rec.max_energy_increase();
        worst_bound = worst_bound.max(excess);
        worst_increase = worst_increase.max(increase);
        if excess > 1e-6 || increase > 1e-9 {
            ok = false;
            failures.push(name.clone());
        }
    }
    report(
        "energy bounded and nonincreasing",
        ok,
        format!(
            "{} runs, max(E - E0)={worst_bound:.3e}, max step increase={worst_increase:.3e}{}",
            records.len(),
            if failures.is_empty() { String::new() } else { format!(", failing: {failures:?}") }
        ),
    );
    assert!(ok);
}

#[test]
fn shrinking_bubble_radius_law() {
    let cfg = BubbleConfig::default();
    let rep: BubbleReport = bubble_benchmark(&cfg).unwrap();
    let max_dev = rep
        .samples
        .iter()
        .filter(|s| s.t <= 150.0)
        .filter_map(|s| s.predicted.map(|p| (s.measured - p).abs()))
        .fold(0.0, f64::max);
    let vanish_ok = rep.vanish_time.is_some_and(|t| (180.0..=220.0).contains(&t));
    let ok = vanish_ok && max_dev <= 0.02;
    report(
        "shrinking bubble radius law",
        ok,
        format!(
            "vanish_time={:?} max|R - R_pred| over t<=150 = {max_dev:.5} ({} steps)",
            rep.vanish_time,
            rep.record.rows.len() - 1
        ),
    );
    assert!(ok);
}

#[test]
fn oracle_equivalence() {
    let rep = verify_all(97, 70).unwrap();
    let detail = rep
        .checks
        .iter()
        .map(|c| format!("{}={:.2e}{}", c.name, c.observed, if c.passed { "" } else { " (FAILED)" }))
        .collect::<Vec<_>>()
        .join("; ");
    report("dense oracle equivalence", rep.all_passed(), detail);
    assert!(rep.all_passed());
}

#[test]
fn stabilizer_bounds() {
    let c = s1_lower_bound(&Mobility::Constant(1.0)).unwrap();
    let d = s1_lower_bound(&Mobility::Degenerate).unwrap();
    let check_c = check_stabilized_bound(&Mobility::Constant(1.0), c);
    let check_d = check_stabilized_bound(&Mobility::Degenerate, d);
    let ok = (c - 2.0).abs() <= 1e-8 && (d - 0.8).abs() <= 1e-8 && check_c.passed && check_d.passed;
    report(
        "stabilizer lower bounds",
        ok,
        format!(
            "constant S1={c:.12} degenerate S1={d:.12} check margins {:.3e}, {:.3e}",
            check_c.margin(),
            check_d.margin()
        ),
    );
    assert!(ok);
}
