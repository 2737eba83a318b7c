//! Binary PPM output of id grids.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::regions::RegionMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaletteMode {
    /// Colour derived from a hash of the id; suits many region ids.
    Hashed,
    /// Fixed high-contrast colours for class ids, hashed beyond the table.
    Classes,
}

/// Rectangular grid of ids in row-major order, top row first.
#[derive(Debug, Clone, Copy)]
pub struct IdGrid<'a> {
    pub width: usize,
    pub height: usize,
    pub ids: &'a [usize],
}

const CLASS_COLOURS: [[u8; 3]; 10] = [
    [230, 159, 0],
    [86, 180, 233],
    [0, 158, 115],
    [240, 228, 66],
    [0, 114, 178],
    [213, 94, 0],
    [204, 121, 167],
    [120, 120, 120],
    [255, 255, 255],
    [140, 70, 20],
];

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Colour of one id; `usize::MAX` (no class) is black.
pub fn colour(id: usize, mode: PaletteMode) -> [u8; 3] {
    if id == usize::MAX {
        return [0, 0, 0];
    }
    if mode == PaletteMode::Classes && id < CLASS_COLOURS.len() {
        return CLASS_COLOURS[id];
    }
    let h = fnv1a(&(id as u64).to_le_bytes()).to_le_bytes();
    // keep hashed colours away from black
    [h[0] | 0x20, h[1] | 0x20, h[2] | 0x20]
}

/// P6 image bytes.
pub fn encode_ppm(grid: IdGrid<'_>, mode: PaletteMode) -> Result<Vec<u8>> {
    if grid.width == 0 || grid.height == 0 || grid.ids.len() != grid.width * grid.height {
        return Err(Error::Dimension(format!(
            "{}x{} raster with {} ids",
            grid.width,
            grid.height,
            grid.ids.len()
        )));
    }
    let mut out = format!("P6\n{} {}\n255\n", grid.width, grid.height).into_bytes();
    out.reserve(grid.ids.len() * 3);
    for &id in grid.ids {
        out.extend_from_slice(&colour(id, mode));
    }
    Ok(out)
}

pub fn emit_raster(grid: IdGrid<'_>, mode: PaletteMode, path: &Path) -> Result<()> {
    std::fs::write(path, encode_ppm(grid, mode)?).map_err(|e| Error::io(path, e))
}

/// `region_id,points,pattern` with patterns as digit strings (`.` separated past 9).
pub fn region_table(map: &RegionMap) -> String {
    let mut s = String::from("region_id,points,pattern\n");
    for (id, (p, m)) in map.patterns.iter().zip(&map.members).enumerate() {
        let wide = p.0.iter().any(|&d| d > 9);
        let pattern: String = if wide {
            p.0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(".")
        } else {
            p.0.iter().map(|d| char::from(b'0' + d)).collect()
        };
        writeln!(s, "{id},{},{pattern}", m.len()).unwrap();
    }
    s
}
