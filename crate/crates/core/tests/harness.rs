use std::fs;

use fedsaddle::algorithms::AlgorithmKind;
use fedsaddle::harness::{load_trace, plan, run_experiment, ExperimentConfig, SummaryRow};
use fedsaddle::Error;

fn small(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        algorithms: vec![AlgorithmKind::MinibatchMp, AlgorithmKind::FedavgS, AlgorithmKind::ScaffoldCatalystS],
        s_values: vec![0.0, 4.0],
        d: 3,
        n: 4,
        budget: 10,
        seeds: 2,
        sigma: 0.1,
        out: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn reruns_write_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&small(a.path())).unwrap();
    run_experiment(&small(b.path())).unwrap();
    for cell in plan(&small(a.path())) {
        let name = format!("traces/{}", cell.file_name());
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
    for name in ["grid.csv", "summary.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
}

#[test]
fn one_cell_has_one_row_per_round_plus_start() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        algorithms: vec![AlgorithmKind::ScaffoldS],
        s_values: vec![2.0],
        gamma_l: Some(0.01),
        gamma_g: Some(0.01),
        budget: 10,
        seeds: 1,
        d: 3,
        n: 4,
        out: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&config).unwrap();
    let cell = &report.results[0].cell;
    let rows = load_trace(&dir.path().join("traces").join(cell.file_name())).unwrap();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows.last().unwrap().comm_rounds, 10);
    assert_eq!(rows.last().unwrap().k, 10 * 20);
}

#[test]
fn summary_can_be_rebuilt_from_trace_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path());
    run_experiment(&config).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let written: Vec<SummaryRow> = reader.deserialize().collect::<Result<_, _>>().unwrap();

    let cells = plan(&config);
    let mut rebuilt = Vec::new();
    for &alg in &config.algorithms {
        for &s in &config.s_values {
            let mut best: Option<(usize, f64)> = None;
            for point in config.grid_for(s) {
                let finals: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.algorithm == alg && c.s == s && c.grid.index == point.index)
                    .map(|c| {
                        let rows = load_trace(&dir.path().join("traces").join(c.file_name())).unwrap();
                        rows.last().unwrap().dist_sq.unwrap()
                    })
                    .collect();
                let mean = finals.iter().sum::<f64>() / finals.len() as f64;
                if best.is_none_or(|(_, b)| mean < b) {
                    best = Some((point.index, mean));
                }
            }
            rebuilt.push((alg.name().to_string(), s, best.unwrap()));
        }
    }
    assert_eq!(written.len(), rebuilt.len());
    for (row, (alg, s, (index, mean))) in written.iter().zip(&rebuilt) {
        assert_eq!(&row.algorithm, alg);
        assert_eq!(row.s, *s);
        assert_eq!(row.best_grid_index, *index);
        assert_eq!(row.best_mean_final_dist_sq, *mean);
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let err = run_experiment(&small(&blocker.join("out"))).unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err:?}");
}

#[test]
fn unknown_algorithm_fails_before_any_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "algorithms = [\"fedprox\"]\nout = {:?}\n",
        dir.path().join("out").to_str().unwrap()
    );
    let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err:?}");
    assert!(!dir.path().join("out").exists());
}
