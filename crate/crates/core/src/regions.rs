//! Linear-region analysis: activation patterns, region maps, unit census,
//! per-region affinity checks, theoretical region bounds and 2-D rasters.

use std::collections::HashMap;

use num_bigint::BigUint;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::numerics::{SeededRng, Tensor};
use crate::training::argmax;

/// Points per forward pass when sweeping large point sets.
const CHUNK: usize = 2048;

/// One region index per piecewise-linear unit, layer-major and unit-minor.
/// Convolutional units contribute one entry per spatial position.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationPattern(pub Vec<u8>);

/// Where each node's units sit inside a pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitLayout {
    pub node: usize,
    pub units: usize,
    /// Spatial positions per unit (1 for dense layers).
    pub positions: usize,
    /// Number of distinct region indices a unit can take.
    pub regions: usize,
}

impl UnitLayout {
    fn len(&self) -> usize {
        self.units * self.positions
    }
}

/// Pattern layout of every node of `net`.
pub fn pattern_layout(net: &NetworkSpec) -> Result<Vec<UnitLayout>> {
    let mut shape = vec![1];
    shape.extend_from_slice(net.input_dims());
    let (_, cache) = net.forward_patterns(&Tensor::zeros(&shape))?;
    Ok(net
        .nodes()
        .iter()
        .zip(&cache.nodes)
        .enumerate()
        .map(|(i, (node, nc))| UnitLayout {
            node: i,
            units: nc.act_shape[1],
            positions: nc.act_shape[2..].iter().product(),
            regions: node.act.regions(),
        })
        .collect())
}

fn single_row(net: &NetworkSpec, x: &[f64]) -> Result<Tensor> {
    let mut shape = vec![1];
    shape.extend_from_slice(net.input_dims());
    Tensor::from_vec(&shape, x.to_vec())
}

/// Activation pattern of a single (flattened) input under inference mode.
pub fn extract_pattern(net: &NetworkSpec, x: &[f64]) -> Result<ActivationPattern> {
    let (_, cache) = net.forward_patterns(&single_row(net, x)?)?;
    Ok(ActivationPattern(cache.pattern_of(0)))
}

/// Patterns and argmax classes of every row of `points`, in row order.
fn sweep(net: &NetworkSpec, points: &Tensor) -> Result<(Vec<Vec<u8>>, Vec<Option<usize>>)> {
    let (n, _) = points.rows();
    let idx: Vec<usize> = (0..n).collect();
    let chunks: Vec<Result<(Vec<Vec<u8>>, Vec<Option<usize>>)>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let x = points.select_rows(chunk);
            let (logits, cache) = net.forward_patterns(&x)?;
            let patterns = (0..chunk.len()).map(|i| cache.pattern_of(i)).collect();
            let classes = logits
                .data()
                .chunks_exact(net.classes())
                .map(argmax)
                .collect();
            Ok((patterns, classes))
        })
        .collect();
    let mut patterns = Vec::with_capacity(n);
    let mut classes = Vec::with_capacity(n);
    for c in chunks {
        let (p, k) = c?;
        patterns.extend(p);
        classes.extend(k);
    }
    Ok((patterns, classes))
}

/// Points grouped by exact pattern equality.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    /// Distinct patterns, in order of first occurrence.
    pub patterns: Vec<ActivationPattern>,
    /// Point indices of each region, ascending.
    pub members: Vec<Vec<usize>>,
    /// Region id of every point.
    pub region_of: Vec<usize>,
}

impl RegionMap {
    fn from_patterns(patterns: Vec<Vec<u8>>) -> Self {
        let mut ids: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut map = RegionMap {
            patterns: Vec::new(),
            members: Vec::new(),
            region_of: Vec::with_capacity(patterns.len()),
        };
        for (i, p) in patterns.into_iter().enumerate() {
            let next = map.patterns.len();
            let id = *ids.entry(p.clone()).or_insert(next);
            if id == next {
                map.patterns.push(ActivationPattern(p));
                map.members.push(Vec::new());
            }
            map.members[id].push(i);
            map.region_of.push(id);
        }
        map
    }

    pub fn region_count(&self) -> usize {
        self.patterns.len()
    }

    pub fn point_count(&self) -> usize {
        self.region_of.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

/// Groups the rows of `points` into regions.
pub fn enumerate_regions(net: &NetworkSpec, points: &Tensor) -> Result<RegionMap> {
    if points.rank() == 0 || points.shape()[0] == 0 {
        return Err(Error::domain("no points to group"));
    }
    let (patterns, _) = sweep(net, points)?;
    Ok(RegionMap::from_patterns(patterns))
}

/// Lane usage of one unit over a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitUsage {
    pub node: usize,
    pub unit: usize,
    /// Observations per region index (points times spatial positions).
    pub counts: Vec<usize>,
}

impl UnitUsage {
    /// All observations fell in one region, so the unit acted as a single linear map.
    pub fn is_degenerate(&self) -> bool {
        let total: usize = self.counts.iter().sum();
        self.counts.iter().any(|&c| c == total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionCensus {
    pub region_count: usize,
    pub region_sizes: Vec<usize>,
    pub units: Vec<UnitUsage>,
    pub degenerate_unit_count: usize,
}

impl RegionCensus {
    pub fn degenerate_fraction(&self) -> f64 {
        self.degenerate_unit_count as f64 / self.units.len().max(1) as f64
    }

    /// Degenerate fraction over the units of the given nodes only.
    pub fn degenerate_fraction_of(&self, nodes: &[usize]) -> f64 {
        let sel: Vec<&UnitUsage> = self.units.iter().filter(|u| nodes.contains(&u.node)).collect();
        sel.iter().filter(|u| u.is_degenerate()).count() as f64 / sel.len().max(1) as f64
    }
}

fn census_from(layout: &[UnitLayout], map: &RegionMap) -> RegionCensus {
    let mut units = Vec::new();
    let mut offset = 0;
    for l in layout {
        for u in 0..l.units {
            let mut counts = vec![0usize; l.regions];
            for (pattern, members) in map.patterns.iter().zip(&map.members) {
                let start = offset + u * l.positions;
                for &lane in &pattern.0[start..start + l.positions] {
                    counts[lane as usize] += members.len();
                }
            }
            units.push(UnitUsage {
                node: l.node,
                unit: u,
                counts,
            });
        }
        offset += l.len();
    }
    let degenerate_unit_count = units.iter().filter(|u| u.is_degenerate()).count();
    RegionCensus {
        region_count: map.region_count(),
        region_sizes: map.sizes(),
        units,
        degenerate_unit_count,
    }
}

/// Region count, sizes and per-unit lane histograms over `points`.
pub fn census(net: &NetworkSpec, points: &Tensor) -> Result<RegionCensus> {
    let layout = pattern_layout(net)?;
    let map = enumerate_regions(net, points)?;
    Ok(census_from(&layout, &map))
}

/// Census of an already enumerated region map.
pub fn census_of_map(net: &NetworkSpec, map: &RegionMap) -> Result<RegionCensus> {
    Ok(census_from(&pattern_layout(net)?, map))
}

/// Outcome of probing one region for affinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Affinity {
    /// Every sampled midpoint matched the average of its endpoints.
    Affine { checked: usize, worst: f64 },
    NotAffine { worst: f64 },
    /// Too few points, mixed patterns, or no midpoint stayed inside the region.
    Inconclusive,
}

impl Affinity {
    pub fn is_affine(&self) -> bool {
        matches!(self, Affinity::Affine { .. })
    }
}

/// Absolute tolerance on logits for [`affinity_check`].
pub const AFFINITY_TOL: f64 = 1e-8;

/// Samples `trials` pairs of region points; for each midpoint that shares the
/// region's pattern, compares its logits with the mean of the endpoint logits.
pub fn affinity_check(
    net: &NetworkSpec,
    region_points: &Tensor,
    trials: usize,
    seed: u64,
) -> Result<Affinity> {
    let (n, f) = region_points.rows();
    if n < 3 {
        return Ok(Affinity::Inconclusive);
    }
    let (patterns, _) = sweep(net, region_points)?;
    if patterns.iter().any(|p| *p != patterns[0]) {
        return Ok(Affinity::Inconclusive);
    }
    let mut rng = SeededRng::new(seed);
    let mut a_rows = Vec::with_capacity(trials * f);
    let mut b_rows = Vec::with_capacity(trials * f);
    let mut mid = Vec::with_capacity(trials * f);
    let data = region_points.data();
    for _ in 0..trials {
        let a = rng.below(n);
        let mut b = rng.below(n - 1);
        if b >= a {
            b += 1;
        }
        let (ra, rb) = (&data[a * f..(a + 1) * f], &data[b * f..(b + 1) * f]);
        a_rows.extend_from_slice(ra);
        b_rows.extend_from_slice(rb);
        mid.extend(ra.iter().zip(rb).map(|(p, q)| 0.5 * (p + q)));
    }
    let mut shape = vec![trials];
    shape.extend_from_slice(net.input_dims());
    let fa = net.logits(&Tensor::from_vec(&shape, a_rows)?)?;
    let fb = net.logits(&Tensor::from_vec(&shape, b_rows)?)?;
    let mid = Tensor::from_vec(&shape, mid)?;
    let (fm, cache) = net.forward_patterns(&mid)?;
    let c = net.classes();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        if cache.pattern_of(t) != patterns[0] {
            continue;
        }
        checked += 1;
        for j in t * c..(t + 1) * c {
            let dev = (fm.data()[j] - 0.5 * (fa.data()[j] + fb.data()[j])).abs();
            worst = if dev.is_nan() { f64::INFINITY } else { worst.max(dev) };
        }
    }
    Ok(if checked == 0 {
        Affinity::Inconclusive
    } else if worst <= AFFINITY_TOL {
        Affinity::Affine { checked, worst }
    } else {
        Affinity::NotAffine { worst }
    })
}

/// `k^(L-1) * k^n0`: regions computable by an `L`-layer rank-`k` maxout
/// network of width `n0` on `n0` inputs.
pub fn maxout_region_bound(layers: u32, n0: u32, k: u32) -> Result<BigUint> {
    if layers < 1 || n0 < 1 || k < 2 {
        return Err(Error::domain(format!(
            "maxout bound needs L >= 1, n0 >= 1, k >= 2; got L={layers}, n0={n0}, k={k}"
        )));
    }
    Ok(BigUint::from(k).pow(layers - 1 + n0))
}

/// `floor(n/n0)^(L-1) * n^n0`, the expression inside the asymptotic lower
/// bound for rectifier networks of width `n` on `n0` inputs. A reference
/// value only, not an exact count.
pub fn rectifier_region_bound(layers: u32, n: u32, n0: u32) -> Result<BigUint> {
    if layers < 1 || n0 < 1 || n < n0 {
        return Err(Error::domain(format!(
            "rectifier bound needs L >= 1 and n >= n0 >= 1; got L={layers}, n={n}, n0={n0}"
        )));
    }
    Ok(BigUint::from(n / n0).pow(layers - 1) * BigUint::from(n).pow(n0))
}

/// An axis-aligned rectangle in the input plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds2 {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds2 {
    pub fn square(half: f64) -> Self {
        Bounds2 {
            x_min: -half,
            x_max: half,
            y_min: -half,
            y_max: half,
        }
    }
}

/// Cell centres of a `resolution x resolution` grid, row-major with the
/// first row at `y_max`.
pub fn grid_points(bounds: Bounds2, resolution: usize) -> Tensor {
    let r = resolution as f64;
    let mut data = Vec::with_capacity(resolution * resolution * 2);
    for row in 0..resolution {
        let y = bounds.y_max - (row as f64 + 0.5) / r * (bounds.y_max - bounds.y_min);
        for col in 0..resolution {
            let x = bounds.x_min + (col as f64 + 0.5) / r * (bounds.x_max - bounds.x_min);
            data.push(x);
            data.push(y);
        }
    }
    Tensor::from_vec(&[resolution * resolution, 2], data).expect("grid shape")
}

/// Class and region maps of a 2-D network over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Argmax class per cell; `usize::MAX` marks non-finite logits.
    pub classes: Vec<usize>,
    pub regions: RegionMap,
}

impl Raster {
    /// Region id per cell, dense by first occurrence.
    pub fn region_ids(&self) -> &[usize] {
        &self.regions.region_of
    }
}

pub fn decision_raster(net: &NetworkSpec, bounds: Bounds2, resolution: usize) -> Result<Raster> {
    if net.input_dims() != [2] {
        return Err(Error::domain(format!(
            "rasters need 2-D inputs, network takes {:?}",
            net.input_dims()
        )));
    }
    if resolution == 0 {
        return Err(Error::domain("raster resolution must be positive"));
    }
    let (patterns, classes) = sweep(net, &grid_points(bounds, resolution))?;
    Ok(Raster {
        width: resolution,
        height: resolution,
        classes: classes.into_iter().map(|c| c.unwrap_or(usize::MAX)).collect(),
        regions: RegionMap::from_patterns(patterns),
    })
}
