use std::path::Path;

use ccspace::lab::{emit_report, run_experiment, ExperimentConfig, ExperimentKind, Verdict};
use ccspace::polyalg::rint;
use ccspace::spacefile::catalog_system;

fn small(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        eps_grid: vec![0.25, 0.125, 0.0625, 0.03125],
        anchors: 2,
        tuples: 4,
        seed,
        ..ExperimentConfig::default()
    }
}

fn origin() -> Vec<ccspace::polyalg::Rational> {
    vec![rint(0); 3]
}

/// Frozen output of a fixed-seed cone-rescaling run. Set `UPDATE_GOLDEN=1`
/// to regenerate after an intended numerical change.
#[test]
fn cone_report_matches_golden_csv() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/cone-example3-graded.csv");
    let sys = catalog_system("example3-graded").unwrap();
    let csv = run_experiment(ExperimentKind::ConeRescale, &sys, &origin(), &small(17)).unwrap().to_csv();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::write(&golden, &csv).unwrap();
    }
    let want = std::fs::read_to_string(&golden).expect("golden file present");
    assert_eq!(csv, want);
}

#[test]
fn reruns_are_byte_identical() {
    let sys = catalog_system("example3-graded").unwrap();
    let dir = tempfile::tempdir().unwrap();
    for kind in [ExperimentKind::LocalApprox, ExperimentKind::ConeRescale, ExperimentKind::Gromov] {
        let a = run_experiment(kind, &sys, &origin(), &small(5)).unwrap();
        let b = run_experiment(kind, &sys, &origin(), &small(5)).unwrap();
        let (ca, sa) = emit_report(&a, &dir.path().join("a")).unwrap();
        let (cb, sb) = emit_report(&b, &dir.path().join("b")).unwrap();
        assert_eq!(std::fs::read(ca).unwrap(), std::fs::read(cb).unwrap(), "{}", kind.name());
        assert_eq!(std::fs::read(sa).unwrap(), std::fs::read(sb).unwrap(), "{}", kind.name());
    }
}

#[test]
fn different_seeds_sample_differently() {
    let sys = catalog_system("example3-graded").unwrap();
    let a = run_experiment(ExperimentKind::ConeRescale, &sys, &origin(), &small(1)).unwrap();
    let b = run_experiment(ExperimentKind::ConeRescale, &sys, &origin(), &small(2)).unwrap();
    assert_ne!(a.to_csv(), b.to_csv());
}

#[test]
fn weighted_euclidean_reports_are_zero() {
    let sys = catalog_system("weighted-euclidean").unwrap();
    for kind in [ExperimentKind::Divergence, ExperimentKind::LocalApprox] {
        let r = run_experiment(kind, &sys, &origin(), &small(3)).unwrap();
        assert!(r.zero_signal, "{}", kind.name());
        for row in &r.rows {
            assert!(row.value <= r.floor, "{}: {} > {}", kind.name(), row.value, r.floor);
            assert_eq!(row.n_failures, 0);
        }
        assert_eq!(r.verdict, Verdict::Pass);
    }
}

#[test]
fn csv_has_header_and_one_row_per_scale() {
    let sys = catalog_system("heisenberg-1").unwrap();
    let r = run_experiment(ExperimentKind::Gromov, &sys, &origin(), &small(0)).unwrap();
    let csv = r.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epsilon,value,n_samples,n_failures,seed"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    for (row, eps) in rows.iter().zip([0.25, 0.125, 0.0625, 0.03125]) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 5);
        assert_eq!(cols[0].parse::<f64>().unwrap(), eps);
        assert_eq!(cols[4], "0");
    }
}
