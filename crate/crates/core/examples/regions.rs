//! Linear regions of a random maxout network on a 2-D grid: count, affinity
//! inside each region and the `k^(L-1) k^n0` bound.
//!
//! ```text
//! cargo run --release --example regions
//! ```

use plrlab::layers::ActivationSpec;
use plrlab::network::{build_mlp, InitScheme};
use plrlab::numerics::SeededRng;
use plrlab::regions::{affinity_check, census, grid_points, maxout_region_bound, Affinity, Bounds2};

fn main() -> plrlab::Result<()> {
    let (layers, k) = (3, 3);
    let mut net = build_mlp(2, layers, 4, ActivationSpec::Maxout { k }, false, None)?;
    net.init_params(&mut SeededRng::new(7), &InitScheme::uniform(1.0))?;

    let points = grid_points(Bounds2::square(10.0), 100);
    let c = census(&net, &points)?;
    println!("{} regions over {} points", c.region_count, points.rows().0);
    println!("bound k^(L-1) k^n0 = {}", maxout_region_bound(layers as u32, 2, k as u32)?);
    println!("degenerate units: {}/{}", c.degenerate_unit_count, c.units.len());

    let map = plrlab::regions::enumerate_regions(&net, &points)?;
    let mut largest: Vec<usize> = (0..map.region_count()).collect();
    largest.sort_by_key(|&r| std::cmp::Reverse(map.members[r].len()));
    for &r in largest.iter().take(5) {
        let pts = points.select_rows(&map.members[r]);
        let verdict = match affinity_check(&net, &pts, 16, r as u64)? {
            Affinity::Affine { checked, worst } => format!("affine ({checked} midpoints, worst {worst:.1e})"),
            Affinity::NotAffine { worst } => format!("NOT affine (residual {worst:.1e})"),
            Affinity::Inconclusive => "inconclusive".into(),
        };
        println!("region {r:>4}: {:>5} points, {verdict}", map.members[r].len());
    }
    Ok(())
}
