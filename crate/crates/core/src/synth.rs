//! Deterministic synthetic fixtures: a smooth pseudorandom elevation field
//! turned into strictly descending flow directions, cut into tiles, and
//! written through the store.
//!
//! Each non-NoData cell points at its steepest strictly lower neighbour
//! (slope = drop over step length, ties broken by the lowest direction
//! code), or NoFlow when no neighbour is strictly lower. Strict descent on a
//! fixed field cannot produce a cycle, so the output is valid by
//! construction and depressions never need filling. The field is evaluated
//! one cell beyond the DEM on every side, so boundary cells flow off the
//! grid whenever outside ground is the steepest descent.
//!
//! NoData is carved from a second smooth field by thresholding at the
//! requested quantile, which produces blobs rather than salt-and-pepper
//! noise. Absent tiles are drawn per tile slot. Everything is a pure
//! function of the seed.

use std::f64::consts::{PI, SQRT_2};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flowdir::FlowDir;
use crate::grid::Grid;
use crate::layout::TileLayout;
use crate::store::{self, Manifest};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub tile_width: usize,
    pub tile_height: usize,
    pub seed: u64,
    /// Approximate fraction of cells carved out as NoData blobs.
    pub nodata_fraction: f64,
    /// Probability that each tile is dropped from the dataset entirely.
    pub absent_tile_fraction: f64,
}

#[derive(Debug)]
pub struct GeneratedFixture {
    pub manifest_path: PathBuf,
    pub layout: TileLayout,
    /// The elevation field with a one-cell apron: entry `(x + 1, y + 1)`
    /// holds the elevation at DEM cell `(x, y)`.
    pub elevation_apron: Grid<f64>,
}

struct Wave {
    inv_wavelength: f64,
    dir_x: f64,
    dir_y: f64,
    amplitude: f64,
    phase: f64,
}

fn waves(rng: &mut ChaCha8Rng, longest: f64, count: usize) -> Vec<Wave> {
    (0..count)
        .map(|i| {
            // wavelengths halve per octave, from the grid scale down to a
            // few cells
            let wavelength = (longest / (1 << i) as f64).max(3.0);
            let theta: f64 = rng.gen_range(0.0..2.0 * PI);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            Wave {
                inv_wavelength: 2.0 * PI / wavelength,
                dir_x: theta.cos(),
                dir_y: theta.sin(),
                amplitude: wavelength,
                phase,
            }
        })
        .collect()
}

fn eval_waves(waves: &[Wave], x: f64, y: f64) -> f64 {
    waves
        .iter()
        .map(|w| ((x * w.dir_x + y * w.dir_y) * w.inv_wavelength + w.phase).sin() * w.amplitude)
        .sum()
}

/// Generates a manifest plus flow-direction tiles under `out_dir` and
/// returns the layout along with the elevation field used.
pub fn generate_synthetic(cfg: &SynthConfig, out_dir: &Path) -> Result<GeneratedFixture> {
    if cfg.width == 0 || cfg.height == 0 || cfg.tile_width == 0 || cfg.tile_height == 0 {
        return Err(Error::Format("generator dimensions must be positive".into()));
    }
    for (name, frac) in [
        ("nodata_fraction", cfg.nodata_fraction),
        ("absent_tile_fraction", cfg.absent_tile_fraction),
    ] {
        if !(0.0..1.0).contains(&frac) {
            return Err(Error::Format(format!("{name} must lie in [0, 1), got {frac}")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let longest = cfg.width.max(cfg.height) as f64;
    let octaves = 8.min(1 + longest.log2() as usize);
    let elevation_waves = waves(&mut rng, longest, octaves);
    let nodata_waves = waves(&mut rng, longest / 2.0, octaves);

    // elevation with a one-cell apron so boundary cells can flow off-grid
    let aw = cfg.width + 2;
    let ah = cfg.height + 2;
    let mut elevation_apron = Grid::filled(aw, ah, 0.0f64)?;
    for ay in 0..ah {
        for ax in 0..aw {
            let z = eval_waves(&elevation_waves, ax as f64 - 1.0, ay as f64 - 1.0);
            elevation_apron.set(ax, ay, z);
        }
    }

    let mut nodata = Grid::filled(cfg.width, cfg.height, false)?;
    if cfg.nodata_fraction > 0.0 {
        let mut field = Vec::with_capacity(cfg.width * cfg.height);
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                field.push(eval_waves(&nodata_waves, x as f64, y as f64));
            }
        }
        let mut sorted = field.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let threshold = sorted[(cfg.nodata_fraction * sorted.len() as f64) as usize];
        for (c, &g) in field.iter().enumerate() {
            if g < threshold {
                *nodata.at_mut(c) = true;
            }
        }
    }

    // steepest strictly lower neighbour, ties to the lowest code
    let mut dirs = Grid::filled(cfg.width, cfg.height, FlowDir::NoFlow)?;
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            if *nodata.get(x, y) {
                dirs.set(x, y, FlowDir::NoData);
                continue;
            }
            let z = *elevation_apron.get(x + 1, y + 1);
            let mut best_slope = 0.0f64;
            let mut best_dir = FlowDir::NoFlow;
            for d in FlowDir::DIRECTIONS {
                let (dx, dy) = d.offset().unwrap();
                let nx = x as i64 + dx as i64;
                let ny = y as i64 + dy as i64;
                let in_dem =
                    nx >= 0 && ny >= 0 && nx < cfg.width as i64 && ny < cfg.height as i64;
                if in_dem && *nodata.get(nx as usize, ny as usize) {
                    continue;
                }
                let zn = *elevation_apron.get((nx + 1) as usize, (ny + 1) as usize);
                let drop = z - zn;
                if drop <= 0.0 {
                    continue;
                }
                let dist = if dx != 0 && dy != 0 { SQRT_2 } else { 1.0 };
                let slope = drop / dist;
                if slope > best_slope {
                    best_slope = slope;
                    best_dir = d;
                }
            }
            dirs.set(x, y, best_dir);
        }
    }

    // tile it up, dropping absent tiles
    let grid_cols = cfg.width.div_ceil(cfg.tile_width);
    let grid_rows = cfg.height.div_ceil(cfg.tile_height);
    let tiles_dir = out_dir.join("tiles");
    std::fs::create_dir_all(&tiles_dir)?;
    let mut manifest_tiles = Vec::with_capacity(grid_rows);
    for row in 0..grid_rows {
        let mut manifest_row = Vec::with_capacity(grid_cols);
        for col in 0..grid_cols {
            let absent = rng.gen_range(0.0..1.0) < cfg.absent_tile_fraction;
            if absent {
                manifest_row.push(None);
                continue;
            }
            let mut tile = Grid::filled(cfg.tile_width, cfg.tile_height, FlowDir::NoData)?;
            for ty in 0..cfg.tile_height {
                let gy = row * cfg.tile_height + ty;
                if gy >= cfg.height {
                    break;
                }
                for tx in 0..cfg.tile_width {
                    let gx = col * cfg.tile_width + tx;
                    if gx >= cfg.width {
                        break;
                    }
                    tile.set(tx, ty, *dirs.get(gx, gy));
                }
            }
            let name = format!("tiles/tile_r{row}_c{col}.fdir");
            store::write_flowdir_tile(&out_dir.join(&name), &tile)?;
            manifest_row.push(Some(name));
        }
        manifest_tiles.push(manifest_row);
    }

    let manifest = Manifest {
        version: store::MANIFEST_VERSION,
        dem_width: cfg.width,
        dem_height: cfg.height,
        tile_width: cfg.tile_width,
        tile_height: cfg.tile_height,
        tiles: manifest_tiles,
    };
    let manifest_path = out_dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    let layout = manifest.to_layout(out_dir)?;

    Ok(GeneratedFixture {
        manifest_path,
        layout,
        elevation_apron,
    })
}

/// Convenience for tests: the elevation at DEM cell `(x, y)`, apron included
/// for `x` or `y` equal to -1 or the DEM extent.
pub fn apron_elevation(fixture: &GeneratedFixture, x: i64, y: i64) -> f64 {
    *fixture
        .elevation_apron
        .get((x + 1) as usize, (y + 1) as usize)
}
