//! Exit codes, configuration handling and output files of the `mbpcn` binary.

use std::path::Path;
use std::process::{Command, Output};

fn mbpcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbpcn"))
        .args(args)
        .env("MBPCN_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bounds_for_coarsening_parameters() {
    let o = mbpcn(&["bounds", "--mobility", "degenerate", "--cells", "256"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("s2_lower_bound=1.44"), "{out}");
    assert!(out.contains("stabilizer_check=pass"), "{out}");
    assert!(out.contains("tau_max_conditional=0.41666"), "{out}");
}

#[test]
fn verify_passes() {
    let o = mbpcn(&["verify", "--trials", "14"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let o = mbpcn(&["run", "--set", "eps=-1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`eps`"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "cells = 8\nepsilon = 0.1\n").unwrap();
    let o = mbpcn(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`epsilon`"), "{}", stderr(&o));

    let o = mbpcn(&["run", "--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

fn small_run(dir: &Path, extra: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# small degenerate run\ncells = 16\nmobility = degenerate\neps = 0.0625\ns1 = 0.8\nhorizon = 4\nsteps = 8\ninitial = random\ninit_seed = 9\ntimeseries = {}\nsnapshot_dir = {}\nsnapshot_every = 4\n",
            dir.join("ts.csv").display(),
            dir.join("snaps").display()
        ),
    )
    .unwrap();
    let mut args = vec!["run", "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    mbpcn(&args)
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_run(dir.path(), &["--binary"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ts = std::fs::read_to_string(dir.path().join("ts.csv")).unwrap();
    let mut lines = ts.lines();
    assert_eq!(lines.next(), Some("step,t,tau,sup_norm,energy,pred_iters,corr_iters,mbp_margin"));
    assert_eq!(lines.count(), 9);
    for name in ["snapshot_00000000", "snapshot_00000004", "snapshot_00000008"] {
        assert!(dir.path().join("snaps").join(format!("{name}.csv")).exists(), "{name}");
        let bin = dir.path().join("snaps").join(format!("{name}.bin"));
        assert_eq!(std::fs::metadata(bin).unwrap().len(), 16 * 16 * 8);
    }
    let snap = std::fs::read_to_string(dir.path().join("snaps/snapshot_00000008.csv")).unwrap();
    assert!(snap.starts_with("# t=4.0\n# M=16\n# h=0.0625\n"), "{snap}");
}

#[test]
fn runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_run(a.path(), &[])), 0);
    assert_eq!(code(&small_run(b.path(), &[])), 0);
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(a.path(), "ts.csv"), read(b.path(), "ts.csv"));
    assert_eq!(read(a.path(), "snaps/snapshot_00000008.csv"), read(b.path(), "snaps/snapshot_00000008.csv"));
}

/// S2 = 0 with a step far above the conditional bound on a tiny grid.
const UNSTABLE_RUN: &[&str] = &[
    "--set", "cells=8", "--set", "steps=4", "--set", "initial=random", "--set", "init_amplitude=1",
    "--set", "s2=0", "--set", "mobility=degenerate", "--set", "eps=0.125", "--set", "horizon=40",
];

#[test]
fn strict_mbp_exits_4() {
    let mut args = vec!["run", "--strict-mbp"];
    args.extend_from_slice(UNSTABLE_RUN);
    let o = mbpcn(&args);
    assert_eq!(code(&o), 4, "{}{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("bound violated"));
}

#[test]
fn unstable_run_exits_5() {
    let mut args = vec!["run"];
    args.extend_from_slice(UNSTABLE_RUN);
    let o = mbpcn(&args);
    assert_eq!(code(&o), 5, "{}{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("blow-up"));
}

#[test]
fn solver_budget_exhaustion_exits_3() {
    let o = mbpcn(&[
        "run", "--set", "cells=32", "--set", "steps=2", "--set", "solver.max_iters=1",
        "--set", "solver.rel_tol=1e-15", "--set", "solver.abs_tol=1e-300",
    ]);
    assert_eq!(code(&o), 3, "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn converge_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conv.csv");
    let o = mbpcn(&[
        "converge", "--cells", "16", "--eps", "0.05", "--ladder", "8,16", "--perturbed", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("n_steps,max_ratio,err_h1,err_sup,order_h1,order_sup\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_mbpcn"))
        .args(["bounds"])
        .env("MBPCN_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
