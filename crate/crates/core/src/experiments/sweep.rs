//! Grid sweep over toy-network architectures.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::toy::{gen_toy_dataset, ToyPartitionSpec, TOY_HALF_WIDTH};
use crate::error::{Error, Result};
use crate::layers::ActivationSpec;
use crate::network::{build_mlp, InitScheme, NetworkSpec};
use crate::regions::{census, decision_raster, maxout_region_bound, Bounds2, Raster};
use crate::training::{multi_run_outcomes, MultiRunReport, RunOutcome, TrainConfig};

/// One architecture of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub activation: ActivationSpec,
    pub layers: usize,
    pub width: usize,
    pub bn: bool,
    pub dropout: Option<f64>,
}

impl SweepCell {
    pub fn build(&self) -> Result<NetworkSpec> {
        build_mlp(2, self.layers, self.width, self.activation, self.bn, self.dropout)
    }

    /// Region count of a maxout unit; 1 for the rectifier family.
    pub fn k(&self) -> usize {
        match self.activation {
            ActivationSpec::Maxout { k } => k,
            _ => 1,
        }
    }

    /// The leading CSV columns `activation,k,layers,width,bn,dropout`.
    pub fn csv_prefix(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.activation.name(),
            self.k(),
            self.layers,
            self.width,
            if self.bn { "on" } else { "off" },
            self.dropout.map_or("off".to_string(), |p| p.to_string())
        )
    }

    /// File-name friendly identifier.
    pub fn slug(&self) -> String {
        self.csv_prefix().replace(',', "_")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub widths: Vec<usize>,
    pub layers: Vec<usize>,
    pub activations: Vec<ActivationSpec>,
    pub bn: Vec<bool>,
    pub dropout: Vec<Option<f64>>,
    pub train: TrainConfig,
    pub init: InitScheme,
    pub runs: usize,
    pub partition: ToyPartitionSpec,
    /// Side of the square grid used for grid region counts and rasters.
    pub grid_resolution: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            widths: vec![2, 4],
            layers: vec![2, 3, 4, 5, 6],
            activations: vec![
                ActivationSpec::Relu,
                ActivationSpec::Maxout { k: 2 },
                ActivationSpec::Maxout { k: 4 },
            ],
            bn: vec![true, false],
            dropout: vec![None, Some(0.2)],
            train: TrainConfig::toy(),
            init: InitScheme::toy(),
            runs: 5,
            partition: ToyPartitionSpec::default(),
            grid_resolution: 200,
        }
    }
}

impl SweepConfig {
    /// Cells in activation, width, layers, bn, dropout order.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut out = Vec::new();
        for &activation in &self.activations {
            for &width in &self.widths {
                for &layers in &self.layers {
                    for &bn in &self.bn {
                        for &dropout in &self.dropout {
                            out.push(SweepCell {
                                activation,
                                layers,
                                width,
                                bn,
                                dropout,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells().is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be positive".into()));
        }
        if self.widths.contains(&0) || self.layers.contains(&0) {
            return Err(Error::Config("widths and layer counts must be positive".into()));
        }
        for a in &self.activations {
            a.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.init.validate()?;
        self.partition.validate()
    }
}

/// Region statistics of the best run of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BestRunCensus {
    pub run: usize,
    pub train_regions: usize,
    pub grid_regions: usize,
    pub degenerate_fraction: f64,
    /// `k^(L-1) k^2` for maxout cells.
    pub maxout_bound: Option<num_bigint::BigUint>,
}

#[derive(Debug, Clone)]
pub struct CellReport {
    pub cell: SweepCell,
    pub runs: MultiRunReport,
    /// Region count of every run over its own training points.
    pub regions: Vec<usize>,
    pub best: BestRunCensus,
    pub best_network: NetworkSpec,
}

impl CellReport {
    /// Class and region maps of the best network over the toy square.
    pub fn raster(&self, resolution: usize) -> Result<Raster> {
        decision_raster(&self.best_network, Bounds2::square(TOY_HALF_WIDTH), resolution)
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub cells: Vec<CellReport>,
}

pub const SWEEP_CSV_HEADER: &str =
    "activation,k,layers,width,bn,dropout,run,train_err,test_err,regions,diverged";

impl SweepReport {
    /// Per-run rows of each cell followed by its `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{SWEEP_CSV_HEADER}").unwrap();
        for c in &self.cells {
            let prefix = c.cell.csv_prefix();
            for (i, r) in c.runs.runs.iter().enumerate() {
                writeln!(
                    s,
                    "{prefix},{i},{},{},{},{}",
                    r.final_train_error, r.final_test_error, c.regions[i], r.diverged
                )
                .unwrap();
            }
            writeln!(s, "{prefix},mean,{},{},,", c.runs.mean_train_error, c.runs.mean_test_error).unwrap();
            writeln!(s, "{prefix},std,{},{},,", c.runs.std_train_error, c.runs.std_test_error).unwrap();
        }
        s
    }

    /// Best-run region census of each cell.
    pub fn census_csv(&self) -> String {
        let mut s = String::from(
            "activation,k,layers,width,bn,dropout,best_run,train_regions,grid_regions,degenerate_fraction,maxout_bound\n",
        );
        for c in &self.cells {
            let b = &c.best;
            writeln!(
                s,
                "{},{},{},{},{},{}",
                c.cell.csv_prefix(),
                b.run,
                b.train_regions,
                b.grid_regions,
                b.degenerate_fraction,
                b.maxout_bound.as_ref().map_or(String::new(), |v| v.to_string())
            )
            .unwrap();
        }
        s
    }

    /// Cells matching a predicate.
    pub fn select(&self, f: impl Fn(&SweepCell) -> bool) -> Vec<&CellReport> {
        self.cells.iter().filter(|c| f(&c.cell)).collect()
    }

    /// Lowest mean test error among matching cells.
    pub fn best(&self, f: impl Fn(&SweepCell) -> bool) -> Option<&CellReport> {
        self.select(f)
            .into_iter()
            .min_by(|a, b| a.runs.mean_test_error.total_cmp(&b.runs.mean_test_error))
    }
}

fn best_run(outcomes: &[RunOutcome]) -> usize {
    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.report.final_test_error < outcomes[best].report.final_test_error {
            best = i;
        }
    }
    best
}

/// Trains one cell: `runs` seeded runs and the census of its best run.
pub fn run_cell(cell: &SweepCell, cfg: &SweepConfig) -> Result<CellReport> {
    let partition = cfg.partition;
    let outcomes = multi_run_outcomes(
        || cell.build(),
        |seed| Ok(gen_toy_dataset(&partition, seed)?.data),
        &cfg.init,
        &cfg.train,
        cfg.runs,
    )?;
    let regions = outcomes
        .par_iter()
        .map(|o| Ok(census(&o.network, &o.data.train.x)?.region_count))
        .collect::<Result<Vec<usize>>>()?;
    let b = best_run(&outcomes);
    let net = &outcomes[b].network;
    let train_census = census(net, &outcomes[b].data.train.x)?;
    let grid_regions = decision_raster(net, Bounds2::square(TOY_HALF_WIDTH), cfg.grid_resolution)?
        .regions
        .region_count();
    let maxout_bound = match cell.activation {
        ActivationSpec::Maxout { k } => Some(maxout_region_bound(cell.layers as u32, 2, k as u32)?),
        _ => None,
    };
    let best = BestRunCensus {
        run: b,
        train_regions: train_census.region_count,
        grid_regions,
        degenerate_fraction: train_census.degenerate_fraction(),
        maxout_bound,
    };
    let best_network = outcomes[b].network.clone();
    Ok(CellReport {
        cell: *cell,
        runs: MultiRunReport::from_runs(outcomes.into_iter().map(|o| o.report).collect()),
        regions,
        best,
        best_network,
    })
}

/// Trains every cell of the grid. Cells run concurrently; the report keeps grid order.
pub fn toy_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    toy_sweep_with_progress(cfg, |_| {})
}

/// [`toy_sweep`] calling `progress` as each cell finishes (in completion order).
pub fn toy_sweep_with_progress<P>(cfg: &SweepConfig, progress: P) -> Result<SweepReport>
where
    P: Fn(&CellReport) + Sync,
{
    cfg.validate()?;
    let cells = cfg
        .cells()
        .par_iter()
        .map(|cell| {
            let r = run_cell(cell, cfg)?;
            progress(&r);
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SweepConfig {
        SweepConfig {
            widths: vec![2],
            layers: vec![2],
            activations: vec![ActivationSpec::Relu, ActivationSpec::Maxout { k: 2 }],
            bn: vec![true],
            dropout: vec![None],
            train: TrainConfig {
                schedule: vec![(0.01, 1)],
                ..TrainConfig::toy()
            },
            runs: 2,
            grid_resolution: 20,
            ..Default::default()
        }
    }

    #[test]
    fn default_grid_cardinality() {
        assert_eq!(SweepConfig::default().cells().len(), 2 * 5 * 3 * 2 * 2);
    }

    #[test]
    fn csv_shape() {
        let r = toy_sweep(&tiny()).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SWEEP_CSV_HEADER);
        assert_eq!(lines.len(), 1 + 2 * (2 + 2));
        assert!(lines[1].starts_with("relu,1,2,2,on,off,0,"));
        assert!(lines[3].starts_with("relu,1,2,2,on,off,mean,"));
        assert!(lines[3].ends_with(",,"));
        for l in &lines {
            assert_eq!(l.split(',').count(), 11);
        }
        assert_eq!(csv, toy_sweep(&tiny()).unwrap().to_csv());
    }

    #[test]
    fn empty_grid_is_a_config_error() {
        let cfg = SweepConfig {
            widths: vec![],
            ..tiny()
        };
        assert!(matches!(toy_sweep(&cfg), Err(Error::Config(_))));
    }
}
