//! Desk-scale reproductions: the toy partition study, learning-rate sweeps,
//! ablations and the reduced maxout-in-maxout network on MNIST.

mod ablation;
mod illcond;
mod mnist;
mod sweep;
mod toy;

pub use ablation::{
    ablation, AblationConfig, AblationReport, AblationRow, AblationVariant, ABLATION_CSV_HEADER,
};
pub use illcond::{
    illcond_sweep, IllCondConfig, IllCondReport, IllCondRow, CONVERGENCE_DROP, ILLCOND_CSV_HEADER,
};
pub use mnist::{
    load_mnist_idx, load_mnist_idx_centred, mnist_mini, mnist_mini_observed, parse_idx_images,
    parse_idx_labels, read_maybe_gz, IdxImages, MnistMiniConfig, MnistMiniReport, MnistPaths,
    MnistSet, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use sweep::{
    run_cell, toy_sweep, toy_sweep_with_progress, BestRunCensus, CellReport, SweepCell,
    SweepConfig, SweepReport, SWEEP_CSV_HEADER,
};
pub use toy::{
    gen_toy_dataset, gen_toy_dataset_sized, ToyDataset, ToyPartition, ToyPartitionSpec,
    TOY_BALANCE, TOY_HALF_WIDTH, TOY_MAX_ATTEMPTS, TOY_TEST, TOY_TRAIN,
};
