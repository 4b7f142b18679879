//! Sweeps over (algorithm, s, stepsize, replicate) cells.
//!
//! Cells run in parallel on the rayon pool but every output depends only on
//! the cell's derived seeds, and files are written after collection in plan
//! order, so results do not depend on scheduling.
//!
//! Output layout under `config.out`:
//! - `traces/<algorithm>_s<s>_g<index>_r<replicate>.csv`, one per cell;
//! - `grid.csv`, the seed-averaged final metrics per stepsize choice;
//! - `summary.csv`, the best stepsize choice per (algorithm, s).

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{run_algorithm, AlgorithmKind};
use crate::error::{Error, Result};
use crate::metrics::TraceRow;
use crate::rng::derive_seed;
use crate::testbed::generate_instance;

use super::config::{ExperimentConfig, GridPoint};
use super::traces::{save_rows, save_trace};

/// Instance seed shared by every algorithm and stepsize at `(s, replicate)`,
/// so that all methods are compared on the same draws.
pub fn instance_seed(master: u64, s: f64, replicate: u64) -> u64 {
    derive_seed(&[
        b"instance",
        &master.to_le_bytes(),
        &s.to_bits().to_le_bytes(),
        &replicate.to_le_bytes(),
    ])
}

/// Seed of the run itself (sync coins and query noise). Adding algorithms or
/// grid entries never changes the seeds of existing cells.
pub fn run_seed(master: u64, algorithm: AlgorithmKind, s: f64, grid_index: usize, replicate: u64) -> u64 {
    derive_seed(&[
        b"run",
        &master.to_le_bytes(),
        algorithm.name().as_bytes(),
        &s.to_bits().to_le_bytes(),
        &(grid_index as u64).to_le_bytes(),
        &replicate.to_le_bytes(),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub algorithm: AlgorithmKind,
    pub s: f64,
    pub grid: GridPoint,
    pub replicate: u64,
    pub instance_seed: u64,
    pub run_seed: u64,
}

impl Cell {
    pub fn file_name(&self) -> String {
        format!(
            "{}_s{}_g{}_r{}.csv",
            self.algorithm.name(),
            self.s,
            self.grid.index,
            self.replicate
        )
    }
}

/// All cells of a config in output order: algorithm, s, stepsize, replicate.
pub fn plan(config: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &algorithm in &config.algorithms {
        for &s in &config.s_values {
            for grid in config.grid_for(s) {
                for replicate in 0..config.seeds {
                    cells.push(Cell {
                        algorithm,
                        s,
                        grid,
                        replicate,
                        instance_seed: instance_seed(config.master_seed, s, replicate),
                        run_seed: run_seed(config.master_seed, algorithm, s, grid.index, replicate),
                    });
                }
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub trace: Vec<TraceRow>,
    pub diverged: bool,
}

impl CellResult {
    /// Final `dist_sq`; infinite for diverged runs.
    pub fn final_dist_sq(&self) -> f64 {
        final_metric(&self.trace, self.diverged, |r| r.dist_sq)
    }

    pub fn final_gap(&self) -> f64 {
        final_metric(&self.trace, self.diverged, |r| r.gap)
    }
}

fn final_metric(trace: &[TraceRow], diverged: bool, pick: impl Fn(&TraceRow) -> Option<f64>) -> f64 {
    if diverged {
        return f64::INFINITY;
    }
    trace.last().and_then(pick).unwrap_or(f64::NAN)
}

/// Runs one cell. Divergence is a result, not an error: the partial trace is
/// kept and the cell scores as infinitely bad.
pub fn run_cell(config: &ExperimentConfig, cell: &Cell) -> Result<CellResult> {
    let instance = generate_instance(cell.s, config.d, config.n, config.lambda, cell.instance_seed)?;
    let run = config.algorithm_config(cell.algorithm, cell.grid);
    match run_algorithm(&run, &instance, config.budget, cell.run_seed) {
        Ok(out) => Ok(CellResult {
            cell: cell.clone(),
            trace: out.trace,
            diverged: false,
        }),
        Err(Error::Diverged { trace, .. }) => Ok(CellResult {
            cell: cell.clone(),
            trace,
            diverged: true,
        }),
        Err(e) => Err(e),
    }
}

/// Seed-averaged final metrics of one stepsize choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub algorithm: String,
    pub s: f64,
    pub grid_index: usize,
    pub gamma_l: f64,
    pub gamma_g: f64,
    pub seeds: u64,
    pub diverged: u64,
    pub mean_final_dist_sq: f64,
    pub mean_final_gap: f64,
}

/// Best stepsize choice of one (algorithm, s) pair, by mean final `dist_sq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub s: f64,
    pub best_grid_index: usize,
    pub best_gamma: f64,
    pub best_mean_final_dist_sq: f64,
    pub best_mean_final_gap: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0u64), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}

/// Groups results by (algorithm, s, stepsize) in plan order.
pub fn grid_rows(results: &[CellResult]) -> Vec<GridRow> {
    let mut rows: Vec<GridRow> = Vec::new();
    let mut start = 0;
    while start < results.len() {
        let head = &results[start].cell;
        let len = results[start..]
            .iter()
            .take_while(|r| r.cell.algorithm == head.algorithm && r.cell.s == head.s && r.cell.grid == head.grid)
            .count();
        let group = &results[start..start + len];
        rows.push(GridRow {
            algorithm: head.algorithm.name().to_string(),
            s: head.s,
            grid_index: head.grid.index,
            gamma_l: head.grid.gamma_l,
            gamma_g: head.grid.gamma_g,
            seeds: len as u64,
            diverged: group.iter().filter(|r| r.diverged).count() as u64,
            mean_final_dist_sq: mean(group.iter().map(CellResult::final_dist_sq)),
            mean_final_gap: mean(group.iter().map(CellResult::final_gap)),
        });
        start += len;
    }
    rows
}

/// Best-over-grid rows. Ties keep the earliest grid entry.
pub fn summarize(grid: &[GridRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    for row in grid {
        let candidate = SummaryRow {
            algorithm: row.algorithm.clone(),
            s: row.s,
            best_grid_index: row.grid_index,
            best_gamma: row.gamma_g,
            best_mean_final_dist_sq: row.mean_final_dist_sq,
            best_mean_final_gap: row.mean_final_gap,
        };
        match out.last_mut() {
            Some(best) if best.algorithm == row.algorithm && best.s == row.s => {
                if row.mean_final_dist_sq < best.best_mean_final_dist_sq {
                    *best = candidate;
                }
            }
            _ => out.push(candidate),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub results: Vec<CellResult>,
    pub grid: Vec<GridRow>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every cell without touching the file system.
pub fn run_cells(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let cells = plan(config);
    let results = cells
        .par_iter()
        .map(|cell| run_cell(config, cell))
        .collect::<Result<Vec<_>>>()?;
    let grid = grid_rows(&results);
    let summary = summarize(&grid);
    Ok(ExperimentReport { results, grid, summary })
}

pub fn traces_dir(out: &Path) -> PathBuf {
    out.join("traces")
}

/// Runs the experiment and writes traces, `grid.csv` and `summary.csv`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let dir = traces_dir(&config.out);
    // Fail on an unwritable destination before spending any compute.
    fs::create_dir_all(&dir)?;
    let report = run_cells(config)?;
    for result in &report.results {
        save_trace(&dir.join(result.cell.file_name()), &result.trace)?;
    }
    save_rows(&config.out.join("grid.csv"), &report.grid)?;
    save_rows(&config.out.join("summary.csv"), &report.summary)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            algorithms: vec![AlgorithmKind::MinibatchMd, AlgorithmKind::ScaffoldS],
            s_values: vec![0.0, 2.0],
            d: 3,
            n: 4,
            budget: 5,
            seeds: 2,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn plan_order_and_size() {
        let cells = plan(&small());
        assert_eq!(cells.len(), 2 * 2 * 3 * 2);
        assert_eq!(cells[0].algorithm, AlgorithmKind::MinibatchMd);
        assert_eq!(cells[1].replicate, 1);
        assert_eq!(cells[2].grid.index, 1);
        // Instances are shared across algorithms and stepsizes.
        assert_eq!(cells[0].instance_seed, cells[12].instance_seed);
        assert_eq!(cells[0].instance_seed, cells[2].instance_seed);
        assert_ne!(cells[0].instance_seed, cells[1].instance_seed);
        assert_ne!(cells[0].run_seed, cells[12].run_seed);
    }

    #[test]
    fn adding_an_algorithm_keeps_existing_seeds() {
        let base = plan(&small());
        let mut bigger = small();
        bigger.algorithms.insert(0, AlgorithmKind::FedavgS);
        let grown = plan(&bigger);
        for cell in &base {
            assert!(grown.contains(cell));
        }
    }

    #[test]
    fn summary_picks_grid_minimum() {
        let report = run_cells(&small()).unwrap();
        assert_eq!(report.grid.len(), 2 * 2 * 3);
        assert_eq!(report.summary.len(), 4);
        for row in &report.summary {
            let min = report
                .grid
                .iter()
                .filter(|g| g.algorithm == row.algorithm && g.s == row.s)
                .map(|g| g.mean_final_dist_sq)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(row.best_mean_final_dist_sq, min);
        }
    }

    #[test]
    fn diverged_cells_score_infinite() {
        let config = ExperimentConfig {
            algorithms: vec![AlgorithmKind::MinibatchMd],
            s_values: vec![0.0],
            gamma_l: Some(50.0),
            budget: 200,
            seeds: 1,
            d: 2,
            n: 2,
            ..ExperimentConfig::default()
        };
        let report = run_cells(&config).unwrap();
        assert!(report.results[0].diverged);
        assert_eq!(report.summary[0].best_mean_final_dist_sq, f64::INFINITY);
        assert_eq!(report.grid[0].diverged, 1);
    }
}
