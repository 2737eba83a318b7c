//! Four-way ablation of activation type and batch normalisation on the toy task.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::toy::{gen_toy_dataset, ToyPartitionSpec};
use crate::error::{Error, Result};
use crate::layers::ActivationSpec;
use crate::network::{build_mlp, InitScheme};
use crate::training::{multi_run, MultiRunReport, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationVariant {
    /// ReLU without batch norm.
    Baseline,
    MaxoutNoBn,
    ReluBn,
    /// Maxout with batch norm.
    MaxoutBn,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Baseline,
        AblationVariant::MaxoutNoBn,
        AblationVariant::ReluBn,
        AblationVariant::MaxoutBn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationVariant::Baseline => "relu",
            AblationVariant::MaxoutNoBn => "maxout",
            AblationVariant::ReluBn => "relu+bn",
            AblationVariant::MaxoutBn => "maxout+bn",
        }
    }

    fn parts(&self, k: usize) -> (ActivationSpec, bool) {
        match self {
            AblationVariant::Baseline => (ActivationSpec::Relu, false),
            AblationVariant::MaxoutNoBn => (ActivationSpec::Maxout { k }, false),
            AblationVariant::ReluBn => (ActivationSpec::Relu, true),
            AblationVariant::MaxoutBn => (ActivationSpec::Maxout { k }, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub layers: usize,
    pub width: usize,
    pub k: usize,
    /// Applied to every variant when set.
    pub dropout: Option<f64>,
    pub runs: usize,
    pub train: TrainConfig,
    pub init: InitScheme,
    pub partition: ToyPartitionSpec,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            layers: 4,
            width: 4,
            k: 2,
            dropout: None,
            runs: 5,
            train: TrainConfig::toy(),
            init: InitScheme::toy(),
            partition: ToyPartitionSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub runs: MultiRunReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    /// One row per variant, in [`AblationVariant::ALL`] order.
    pub rows: Vec<AblationRow>,
}

pub const ABLATION_CSV_HEADER: &str =
    "variant,runs,mean_train_err,std_train_err,mean_test_err,std_test_err,diverged_runs";

impl AblationReport {
    pub fn row(&self, v: AblationVariant) -> &AblationRow {
        self.rows.iter().find(|r| r.variant == v).expect("every variant is present")
    }

    pub fn test_error(&self, v: AblationVariant) -> f64 {
        self.row(v).runs.mean_test_error
    }

    /// maxout+BN below ReLU+BN below plain ReLU, on mean test error.
    pub fn ordering_holds(&self) -> bool {
        self.test_error(AblationVariant::MaxoutBn) < self.test_error(AblationVariant::ReluBn)
            && self.test_error(AblationVariant::ReluBn) < self.test_error(AblationVariant::Baseline)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{ABLATION_CSV_HEADER}").unwrap();
        for r in &self.rows {
            let m = &r.runs;
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.variant.name(),
                m.runs.len(),
                m.mean_train_error,
                m.std_train_error,
                m.mean_test_error,
                m.std_test_error,
                m.diverged_runs()
            )
            .unwrap();
        }
        s
    }
}

/// Trains the four variants with identical architecture extents, recipe and seeds.
pub fn ablation(cfg: &AblationConfig) -> Result<AblationReport> {
    if cfg.runs == 0 || cfg.layers == 0 || cfg.width == 0 || cfg.k < 2 {
        return Err(Error::Config(
            "ablation needs positive runs, layers and width, and k >= 2".into(),
        ));
    }
    cfg.partition.validate()?;
    let partition = cfg.partition;
    let rows = AblationVariant::ALL
        .par_iter()
        .map(|&variant| {
            let (act, bn) = variant.parts(cfg.k);
            let runs = multi_run(
                || build_mlp(2, cfg.layers, cfg.width, act, bn, cfg.dropout),
                |seed| Ok(gen_toy_dataset(&partition, seed)?.data),
                &cfg.init,
                &cfg.train,
                cfg.runs,
            )?;
            Ok(AblationRow { variant, runs })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport { rows })
}
