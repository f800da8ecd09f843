//! Bit-exact round trips through the CSV and binary formats.

use proptest::prelude::*;

use mbpcn_core::io::{read_snapshot, read_snapshot_binary, read_timeseries, write_snapshot, write_snapshot_binary, write_timeseries};
use mbpcn_core::{CellField, Domain2D, StepRow};

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn timeseries_rows_round_trip(
        values in prop::collection::vec((any::<usize>(), finite(), finite(), finite(), finite(), 0usize..10_000, 0usize..10_000, finite()), 0..20)
    ) {
        let rows: Vec<StepRow> = values
            .into_iter()
            .map(|(step, t, tau, sup_norm, energy, pred_iters, corr_iters, mbp_margin)| StepRow {
                step, t, tau, sup_norm, energy, pred_iters, corr_iters, mbp_margin,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ts.csv");
        write_timeseries(&rows, &p).unwrap();
        let back = read_timeseries(&p).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.t.to_bits(), b.t.to_bits());
            prop_assert_eq!(a.energy.to_bits(), b.energy.to_bits());
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn snapshots_round_trip(m in 2usize..12, side in 0.1f64..10.0, t in finite(), values in prop::collection::vec(finite(), 144)) {
        let d = Domain2D::new(side, m).unwrap();
        let u = CellField::from_vec(d, values[..m * m].to_vec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("s.csv");
        write_snapshot(&u, t, &csv).unwrap();
        let (t_back, v) = read_snapshot(&csv).unwrap();
        prop_assert_eq!(t_back.to_bits(), t.to_bits());
        prop_assert_eq!(v.domain().spacing().to_bits(), d.spacing().to_bits());
        prop_assert_eq!(v.as_slice(), u.as_slice());
        let bin = dir.path().join("s.bin");
        write_snapshot_binary(&u, &bin).unwrap();
        prop_assert_eq!(read_snapshot_binary(d, &bin).unwrap(), u);
    }
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let d = Domain2D::unit(16).unwrap();
    let u = mbpcn_core::experiments::init_random(d, 42, 0.1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_snapshot(&u, 1.5, &a).unwrap();
    write_snapshot(&mbpcn_core::experiments::init_random(d, 42, 0.1).unwrap(), 1.5, &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}
