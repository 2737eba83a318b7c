//! Learning-rate sweep with and without batch normalisation.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::toy::{gen_toy_dataset, ToyPartitionSpec};
use crate::error::{Error, Result};
use crate::layers::ActivationSpec;
use crate::network::{build_mlp, InitScheme};
use crate::training::{multi_run, MultiRunReport, TrainConfig};

/// Training-error drop a run needs to count as converged in [`IllCondRow::all_converged`].
pub const CONVERGENCE_DROP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct IllCondConfig {
    /// Ascending, positive.
    pub rates: Vec<f64>,
    pub runs: usize,
    /// Epochs trained at each constant rate.
    pub epochs: usize,
    /// Batch size, momentum, weight decay and seed; its schedule is replaced.
    pub base: TrainConfig,
    pub init: InitScheme,
    pub layers: usize,
    pub width: usize,
    pub activation: ActivationSpec,
    pub partition: ToyPartitionSpec,
}

impl Default for IllCondConfig {
    fn default() -> Self {
        IllCondConfig {
            rates: vec![1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0, 3.0, 10.0],
            runs: 5,
            epochs: 10,
            base: TrainConfig::toy(),
            init: InitScheme::uniform(0.5),
            layers: 5,
            width: 4,
            activation: ActivationSpec::Maxout { k: 2 },
            partition: ToyPartitionSpec::default(),
        }
    }
}

impl IllCondConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() || self.rates.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::Config("rates must be a nonempty list of positive numbers".into()));
        }
        if self.rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("rates must be strictly ascending".into()));
        }
        if self.runs == 0 || self.epochs == 0 || self.layers == 0 || self.width == 0 {
            return Err(Error::Config("runs, epochs, layers and width must be positive".into()));
        }
        self.activation.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.init.validate()?;
        self.partition.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IllCondRow {
    pub lr: f64,
    pub bn: bool,
    pub runs: MultiRunReport,
}

impl IllCondRow {
    pub fn all_diverged(&self) -> bool {
        self.runs.all_diverged()
    }

    /// Every run lowered its training error by more than [`CONVERGENCE_DROP`].
    pub fn all_converged(&self) -> bool {
        self.runs.runs.iter().all(|r| !r.non_finite && r.train_error_drop() > CONVERGENCE_DROP)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IllCondReport {
    /// Rates in order, BN on before BN off for each rate.
    pub rows: Vec<IllCondRow>,
}

pub const ILLCOND_CSV_HEADER: &str = "lr,bn,run,train_err,test_err,diverged";

impl IllCondReport {
    pub fn row(&self, lr: f64, bn: bool) -> Option<&IllCondRow> {
        self.rows.iter().find(|r| r.lr == lr && r.bn == bn)
    }

    /// Rates at which every BN-off run diverged while every BN-on run converged.
    pub fn separating_rates(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for r in self.rows.iter().filter(|r| r.bn) {
            if let Some(off) = self.row(r.lr, false) {
                if off.all_diverged() && r.all_converged() {
                    out.push(r.lr);
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{ILLCOND_CSV_HEADER}").unwrap();
        for row in &self.rows {
            let bn = if row.bn { "on" } else { "off" };
            for (i, r) in row.runs.runs.iter().enumerate() {
                writeln!(
                    s,
                    "{},{bn},{i},{},{},{}",
                    row.lr, r.final_train_error, r.final_test_error, r.diverged
                )
                .unwrap();
            }
        }
        s
    }
}

/// Trains `runs` toy networks at every rate with BN on and off.
pub fn illcond_sweep(cfg: &IllCondConfig) -> Result<IllCondReport> {
    cfg.validate()?;
    let grid: Vec<(f64, bool)> = cfg
        .rates
        .iter()
        .flat_map(|&lr| [(lr, true), (lr, false)])
        .collect();
    let partition = cfg.partition;
    let rows = grid
        .par_iter()
        .map(|&(lr, bn)| {
            let train = TrainConfig {
                schedule: vec![(lr, cfg.epochs)],
                ..cfg.base.clone()
            };
            let runs = multi_run(
                || build_mlp(2, cfg.layers, cfg.width, cfg.activation, bn, None),
                |seed| Ok(gen_toy_dataset(&partition, seed)?.data),
                &cfg.init,
                &train,
                cfg.runs,
            )?;
            Ok(IllCondRow { lr, bn, runs })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IllCondReport { rows })
}
