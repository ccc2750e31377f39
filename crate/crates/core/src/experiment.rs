//! Seed-level orchestration: data, partition, simulation, persistence.

use rayon::prelude::*;

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{Error, Result};
use crate::fedsim::{ClientData, RoundReport, Simulation};
use crate::metrics::{performance_summary, PerformanceSummary};
use crate::modeldata::{load_csv, make_synthetic_with, partition, Dataset, PartitionSpec};
use crate::output;

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub reports: Vec<RoundReport>,
    /// Evaluation of the final global model.
    pub summary: PerformanceSummary,
    pub client_accuracy: Vec<f64>,
}

fn split_seed(seed: u64, client: usize) -> u64 {
    seed ^ ((client as u64 + 1) << 40)
}

/// Client shards for one seed.
pub fn build_clients(cfg: &ExperimentConfig, seed: u64, csv: Option<&Dataset>) -> Result<Vec<ClientData>> {
    let s = &cfg.settings;
    let owned;
    let data = match (&cfg.data, csv) {
        (DataSource::Csv(_), Some(d)) => d,
        (DataSource::Csv(p), None) => {
            owned = load_csv(p)?;
            &owned
        }
        (DataSource::Synthetic { samples, separation }, _) => {
            owned = make_synthetic_with(*samples, s.model.input_dim, s.model.num_classes, *separation, seed)?;
            &owned
        }
    };
    if data.dim != s.model.input_dim || data.num_classes > s.model.num_classes {
        return Err(Error::Config(format!(
            "data has {} features and {} classes; model expects {} and {}",
            data.dim, data.num_classes, s.model.input_dim, s.model.num_classes
        )));
    }
    let shards = partition(
        data,
        &PartitionSpec {
            scheme: cfg.partition,
            k: s.k,
            seed,
        },
    )?;
    shards
        .into_iter()
        .enumerate()
        .map(|(i, d)| ClientData::split(d, split_seed(seed, i)))
        .collect()
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    run_seed_with(cfg, seed, None)
}

fn run_seed_with(cfg: &ExperimentConfig, seed: u64, csv: Option<&Dataset>) -> Result<SeedOutcome> {
    let clients = build_clients(cfg, seed, csv)?;
    let mut sim = Simulation::new(cfg.settings.clone(), clients, seed)?;
    let reports = sim.run(cfg.rounds)?;
    let client_accuracy = match reports.last() {
        Some(r) => r.client_accuracy.clone(),
        None => sim.client_accuracies(),
    };
    let summary = performance_summary(&client_accuracy)?;
    Ok(SeedOutcome {
        seed,
        reports,
        summary,
        client_accuracy,
    })
}

/// Runs every seed on a pool of `threads` workers (0 = rayon default). The
/// result is independent of the thread count.
pub fn run_all(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<SeedOutcome>> {
    let csv = match &cfg.data {
        DataSource::Csv(p) => Some(load_csv(p)?),
        DataSource::Synthetic { .. } => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| run_seed_with(cfg, seed, csv.as_ref()))
            .collect()
    })
}

/// Runs and writes `rounds_seed<s>.csv` for each seed plus `summary.csv`.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<SeedOutcome>> {
    let outcomes = run_all(cfg, threads)?;
    for o in &outcomes {
        output::write_rounds(&cfg.output_dir, o.seed, &o.reports)?;
    }
    let summaries: Vec<(u64, PerformanceSummary)> = outcomes.iter().map(|o| (o.seed, o.summary)).collect();
    output::write_summary(&cfg.output_dir, &summaries)?;
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str, dir: &std::path::Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::parse(text).unwrap();
        c.output_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn single_round_static() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg("K = 2\nT = 1\nmethod = \"Static\"\nsamples = 200\n", tmp.path());
        let out = run_experiment(&c, 1).unwrap();
        assert_eq!(out.len(), 1);
        let rounds = std::fs::read_to_string(tmp.path().join("rounds_seed0.csv")).unwrap();
        assert_eq!(rounds.lines().count(), 2);
        let summary = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 4);
    }

    #[test]
    fn zero_rounds_summarize_initial_model() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg("K = 3\nT = 0\nmethod = \"Static\"\nsamples = 150\n", tmp.path());
        let out = run_experiment(&c, 1).unwrap();
        assert!(out[0].reports.is_empty());
        assert_eq!(out[0].client_accuracy.len(), 3);
    }

    #[test]
    fn dimension_mismatch_with_csv_is_config_error() {
        let tmp = tempfile::tempdir().unwrap();
        let csv = tmp.path().join("d.csv");
        std::fs::write(&csv, "a,b,c,label\n1,2,3,0\n4,5,6,1\n1,1,1,0\n2,2,2,1\n").unwrap();
        let text = format!("K = 2\nT = 1\nmethod = \"Static\"\ndata_csv = {:?}\n", csv.display().to_string());
        let c = cfg(&text, tmp.path());
        assert!(matches!(run_all(&c, 1), Err(Error::Config(_))));
    }
}
