//! Seeded two-class partitions of the square `[-10, 10]^2` and datasets drawn from them.

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, SeededRng, Tensor};
use crate::training::{Dataset, LabeledSet};

pub const TOY_HALF_WIDTH: f64 = 10.0;
pub const TOY_TRAIN: usize = 12_000;
pub const TOY_TEST: usize = 2_000;
/// Accepted range for the fraction of class-1 training points.
pub const TOY_BALANCE: (f64, f64) = (0.3, 0.7);
pub const TOY_MAX_ATTEMPTS: usize = 100;

/// Parameters of the partition generator.
///
/// The square is cut by `chords` random lines (each through two points of the
/// boundary) and `arcs` random circles; every resulting cell gets a
/// pseudo-random label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyPartitionSpec {
    pub seed: u64,
    pub chords: usize,
    pub arcs: usize,
}

impl Default for ToyPartitionSpec {
    fn default() -> Self {
        ToyPartitionSpec {
            seed: 0,
            chords: 10,
            arcs: 4,
        }
    }
}

impl ToyPartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.chords + self.arcs == 0 || self.chords + self.arcs > 64 {
            return Err(Error::Config(format!(
                "partition needs 1..=64 cuts, got {} chords and {} arcs",
                self.chords, self.arcs
            )));
        }
        Ok(())
    }
}

/// A materialised partition: cut geometry plus the key that labels cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPartition {
    /// `a x + b y + c`, sign gives the side.
    pub lines: Vec<[f64; 3]>,
    /// `(cx, cy, r)`.
    pub circles: Vec<[f64; 3]>,
    pub label_key: u64,
}

fn boundary_point(rng: &mut SeededRng) -> (f64, f64) {
    let h = TOY_HALF_WIDTH;
    let t = rng.uniform(0.0, 8.0 * h);
    match (t / (2.0 * h)) as u32 {
        0 => (-h + t, -h),
        1 => (h, -h + (t - 2.0 * h)),
        2 => (h - (t - 4.0 * h), h),
        _ => (-h, h - (t - 6.0 * h)),
    }
}

impl ToyPartition {
    /// Geometry depends only on `spec`; `attempt` re-draws cell labels.
    pub fn generate(spec: &ToyPartitionSpec, attempt: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = SeededRng::new(derive_seed(spec.seed, 0x70a7));
        let mut lines = Vec::with_capacity(spec.chords);
        while lines.len() < spec.chords {
            let (x1, y1) = boundary_point(&mut rng);
            let (x2, y2) = boundary_point(&mut rng);
            let (a, b) = (y2 - y1, x1 - x2);
            let norm = (a * a + b * b).sqrt();
            // endpoints on the same side would give a degenerate cut
            if norm < 1.0 || (x1 == x2 && x1.abs() == TOY_HALF_WIDTH) || (y1 == y2 && y1.abs() == TOY_HALF_WIDTH) {
                continue;
            }
            lines.push([a / norm, b / norm, -(a * x1 + b * y1) / norm]);
        }
        let circles = (0..spec.arcs)
            .map(|_| {
                let cx = rng.uniform(-TOY_HALF_WIDTH, TOY_HALF_WIDTH);
                let cy = rng.uniform(-TOY_HALF_WIDTH, TOY_HALF_WIDTH);
                [cx, cy, rng.uniform(0.2, 0.8) * TOY_HALF_WIDTH]
            })
            .collect();
        Ok(ToyPartition {
            lines,
            circles,
            label_key: derive_seed(spec.seed, 0x1abe1 + attempt),
        })
    }

    /// Bit `i` tells which side of cut `i` the point lies on.
    pub fn cell(&self, x: f64, y: f64) -> u64 {
        let mut sig = 0u64;
        let mut bit = 0;
        for l in &self.lines {
            if l[0] * x + l[1] * y + l[2] > 0.0 {
                sig |= 1 << bit;
            }
            bit += 1;
        }
        for c in &self.circles {
            if (x - c[0]).powi(2) + (y - c[1]).powi(2) < c[2] * c[2] {
                sig |= 1 << bit;
            }
            bit += 1;
        }
        sig
    }

    pub fn label(&self, x: f64, y: f64) -> usize {
        (derive_seed(self.label_key, self.cell(x, y)) & 1) as usize
    }
}

/// Train and test sets of one toy task together with their partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub partition: ToyPartition,
    pub data: Dataset,
}

fn uniform_points(rng: &mut SeededRng, n: usize) -> Tensor {
    let data = (0..2 * n)
        .map(|_| rng.uniform(-TOY_HALF_WIDTH, TOY_HALF_WIDTH))
        .collect();
    Tensor::from_vec(&[n, 2], data).expect("point shape")
}

fn labelled(p: &ToyPartition, x: &Tensor) -> Result<LabeledSet> {
    let y = x.data().chunks_exact(2).map(|r| p.label(r[0], r[1])).collect();
    LabeledSet::new(x.clone(), y)
}

/// 12000 training and 2000 test points, uniform on the square and labelled by
/// the partition of `spec`. Points depend on `seed`; if the class-1 fraction of
/// the training set leaves [`TOY_BALANCE`], cell labels are redrawn.
pub fn gen_toy_dataset(spec: &ToyPartitionSpec, seed: u64) -> Result<ToyDataset> {
    gen_toy_dataset_sized(spec, seed, TOY_TRAIN, TOY_TEST)
}

/// [`gen_toy_dataset`] with custom set sizes.
pub fn gen_toy_dataset_sized(
    spec: &ToyPartitionSpec,
    seed: u64,
    train: usize,
    test: usize,
) -> Result<ToyDataset> {
    if train == 0 || test == 0 {
        return Err(Error::Config("toy sets must be nonempty".into()));
    }
    let mut rng = SeededRng::new(derive_seed(seed, 0xda7a));
    let xtr = uniform_points(&mut rng, train);
    let xte = uniform_points(&mut rng, test);
    for attempt in 0..TOY_MAX_ATTEMPTS as u64 {
        let partition = ToyPartition::generate(spec, attempt)?;
        let tr = labelled(&partition, &xtr)?;
        let ones = tr.y.iter().filter(|&&l| l == 1).count() as f64 / train as f64;
        if (TOY_BALANCE.0..=TOY_BALANCE.1).contains(&ones) {
            let te = labelled(&partition, &xte)?;
            return Ok(ToyDataset {
                partition,
                data: Dataset {
                    train: tr,
                    test: te,
                    classes: 2,
                },
            });
        }
    }
    Err(Error::Generation(format!(
        "no balanced labelling of partition seed {} within {TOY_MAX_ATTEMPTS} attempts",
        spec.seed
    )))
}
