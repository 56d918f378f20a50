//! Repeated training runs and their aggregate test accuracy.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::RunMetrics;
use crate::trainer::{train, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ReproSummary {
    pub runs: Vec<RunMetrics>,
    /// Seed of each run.
    pub seeds: Vec<u64>,
}

impl ReproSummary {
    pub fn per_run_max(&self) -> Vec<f64> {
        self.runs.iter().map(RunMetrics::max_test_acc).collect()
    }

    /// Mean over runs of each run's best test accuracy.
    pub fn mean_of_max(&self) -> f64 {
        let m = self.per_run_max();
        m.iter().sum::<f64>() / m.len() as f64
    }

    /// Test accuracy averaged over runs at each evaluation.
    pub fn mean_curve(&self) -> Vec<f64> {
        let len = self.runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
        (0..len)
            .map(|i| self.runs.iter().map(|r| r.records[i].test_acc).sum::<f64>() / self.runs.len() as f64)
            .collect()
    }

    /// Best point of [`ReproSummary::mean_curve`].
    pub fn max_of_mean(&self) -> f64 {
        self.mean_curve().into_iter().fold(0.0, f64::max)
    }
}

/// Trains `runs` times; run `r` uses `config.seed + r` for both the model
/// and sampling streams.
pub fn run_repro(data: &Dataset, config: &TrainConfig, runs: usize) -> Result<ReproSummary> {
    if runs == 0 {
        return Err(Error::Config("at least one run is required".into()));
    }
    let mut summary = ReproSummary { runs: Vec::with_capacity(runs), seeds: Vec::with_capacity(runs) };
    for r in 0..runs as u64 {
        let mut c = config.clone();
        c.seed = config.seed.wrapping_add(r);
        c.sampler.seed = config.sampler.seed.wrapping_add(r);
        let (_, metrics) = train(data, &c)?;
        summary.runs.push(metrics);
        summary.seeds.push(c.seed);
    }
    Ok(summary)
}
