//! Persistent formats: the tile manifest, flow-direction tiles,
//! accumulation tiles, compressed cache spills, and an ASCII debug format
//! for fixtures.
//!
//! All binary formats are little-endian and row-major. Flow-direction tiles
//! are one byte per cell with no header; their length must equal exactly
//! `width * height`. Accumulation tiles are f64 per cell, NoData written as
//! quiet NaN. Cache spills are the accumulation bytes DEFLATE-compressed.
//! The manifest is JSON with tile paths relative to the manifest file;
//! `null` entries mark absent tiles.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowdir::FlowDir;
use crate::grid::Grid;
use crate::layout::{TileId, TileLayout};
use crate::solver::WeightGrid;

/// Logical cell and byte counts for every read and write the store performs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoCounters {
    pub flowdir_cells_read: u64,
    pub weight_cells_read: u64,
    pub accum_cells_read: u64,
    pub accum_cells_written: u64,
    pub cache_cells_written: u64,
    pub cache_cells_read: u64,
    pub cache_bytes_written: u64,
    pub cache_bytes_read: u64,
}

impl IoCounters {
    pub fn merge(&mut self, other: &IoCounters) {
        self.flowdir_cells_read += other.flowdir_cells_read;
        self.weight_cells_read += other.weight_cells_read;
        self.accum_cells_read += other.accum_cells_read;
        self.accum_cells_written += other.accum_cells_written;
        self.cache_cells_written += other.cache_cells_written;
        self.cache_cells_read += other.cache_cells_read;
        self.cache_bytes_written += other.cache_bytes_written;
        self.cache_bytes_read += other.cache_bytes_read;
    }
}

/// On-disk form of the tiling manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub dem_width: usize,
    pub dem_height: usize,
    pub tile_width: usize,
    pub tile_height: usize,
    /// Rows of columns; `null` marks an absent tile.
    pub tiles: Vec<Vec<Option<String>>>,
}

pub const MANIFEST_VERSION: u32 = 1;

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    /// Validates the manifest and resolves tile paths against `base_dir`.
    pub fn to_layout(&self, base_dir: &Path) -> Result<TileLayout> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest version {}",
                self.version
            )));
        }
        if self.tile_width == 0 || self.tile_height == 0 {
            return Err(Error::Format("tile dimensions must be positive".into()));
        }
        let grid_cols = self.dem_width.div_ceil(self.tile_width);
        let grid_rows = self.dem_height.div_ceil(self.tile_height);
        if self.tiles.len() != grid_rows {
            return Err(Error::Format(format!(
                "manifest has {} tile rows, expected {grid_rows}",
                self.tiles.len()
            )));
        }
        let mut tiles = Vec::with_capacity(grid_rows * grid_cols);
        for (r, row) in self.tiles.iter().enumerate() {
            if row.len() != grid_cols {
                return Err(Error::Format(format!(
                    "manifest row {r} has {} entries, expected {grid_cols}",
                    row.len()
                )));
            }
            for entry in row {
                tiles.push(entry.as_ref().map(|rel| base_dir.join(rel)));
            }
        }
        TileLayout::new(
            self.dem_width,
            self.dem_height,
            self.tile_width,
            self.tile_height,
            tiles,
        )
    }
}

/// Loads and validates a manifest file into a layout with resolved paths.
pub fn read_manifest(path: &Path) -> Result<TileLayout> {
    let manifest = Manifest::load(path)?;
    manifest.to_layout(path.parent().unwrap_or(Path::new(".")))
}

/// Reads a raw flow-direction tile of exactly `width * height` bytes.
pub fn read_flowdir_tile(
    path: &Path,
    width: usize,
    height: usize,
    counters: &mut IoCounters,
) -> Result<Grid<FlowDir>> {
    let bytes = fs::read(path)?;
    let expected = width * height;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }
    let dirs = bytes
        .into_iter()
        .map(FlowDir::from_byte)
        .collect::<Result<Vec<_>>>()?;
    counters.flowdir_cells_read += expected as u64;
    Grid::from_vec(width, height, dirs)
}

pub fn write_flowdir_tile(path: &Path, grid: &Grid<FlowDir>) -> Result<()> {
    let bytes: Vec<u8> = grid.data().iter().map(|d| d.as_byte()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

fn accum_to_bytes(grid: &Grid<f64>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(grid.cells() * 8);
    for v in grid.data() {
        bytes.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    bytes
}

fn accum_from_bytes(bytes: &[u8], width: usize, height: usize) -> Result<Grid<f64>> {
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Grid::from_vec(width, height, values)
}

/// Writes an accumulation tile as row-major f64 LE, NoData as quiet NaN.
pub fn write_accum_tile(path: &Path, grid: &Grid<f64>, counters: &mut IoCounters) -> Result<()> {
    // streamed so large tiles never need a second full-size buffer
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for v in grid.data() {
        out.write_all(&v.to_bits().to_le_bytes())?;
    }
    out.flush()?;
    counters.accum_cells_written += grid.cells() as u64;
    Ok(())
}

pub fn read_accum_tile(
    path: &Path,
    width: usize,
    height: usize,
    counters: &mut IoCounters,
) -> Result<Grid<f64>> {
    let bytes = fs::read(path)?;
    let expected = width * height * 8;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }
    counters.accum_cells_read += (width * height) as u64;
    accum_from_bytes(&bytes, width, height)
}

/// Reads a per-cell weight tile: row-major f64 LE, same shape as the flow
/// directions. Weights must be finite and non-negative.
pub fn read_weight_tile(
    path: &Path,
    width: usize,
    height: usize,
    counters: &mut IoCounters,
) -> Result<WeightGrid> {
    let bytes = fs::read(path)?;
    let expected = width * height * 8;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }
    let grid = accum_from_bytes(&bytes, width, height)?;
    if let Some(bad) = grid.data().iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Format(format!(
            "weight tile {} contains illegal weight {bad}",
            path.display()
        )));
    }
    counters.weight_cells_read += (width * height) as u64;
    Ok(WeightGrid(grid))
}

pub fn write_weight_tile(path: &Path, weights: &WeightGrid) -> Result<()> {
    fs::write(path, accum_to_bytes(&weights.0))?;
    Ok(())
}

/// Spill file name for a tile's intermediate accumulation.
pub fn cache_spill_path(cache_dir: &Path, tile: TileId) -> PathBuf {
    cache_dir.join(format!("tile_r{}_c{}.afz", tile.row, tile.col))
}

/// Writes a tile's intermediate accumulation to the cache directory,
/// DEFLATE-compressed. Counters track logical cells and compressed bytes.
pub fn spill_cache(
    cache_dir: &Path,
    tile: TileId,
    grid: &Grid<f64>,
    counters: &mut IoCounters,
) -> Result<()> {
    let path = cache_spill_path(cache_dir, tile);
    let mut encoder = DeflateEncoder::new(Vec::new(), Compression::fast());
    encoder.write_all(&accum_to_bytes(grid))?;
    let compressed = encoder.finish()?;
    counters.cache_bytes_written += compressed.len() as u64;
    counters.cache_cells_written += grid.cells() as u64;
    fs::write(path, compressed)?;
    Ok(())
}

/// Loads a spilled intermediate back into memory; exact inverse of
/// [`spill_cache`].
pub fn load_cache(
    cache_dir: &Path,
    tile: TileId,
    width: usize,
    height: usize,
    counters: &mut IoCounters,
) -> Result<Grid<f64>> {
    let path = cache_spill_path(cache_dir, tile);
    let compressed = fs::read(&path).map_err(|e| Error::Cache {
        tile: tile.to_string(),
        detail: format!("{}: {e}", path.display()),
    })?;
    counters.cache_bytes_read += compressed.len() as u64;
    let mut bytes = Vec::with_capacity(width * height * 8);
    DeflateDecoder::new(compressed.as_slice())
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Cache {
            tile: tile.to_string(),
            detail: format!("corrupt spill {}: {e}", path.display()),
        })?;
    if bytes.len() != width * height * 8 {
        return Err(Error::Cache {
            tile: tile.to_string(),
            detail: format!(
                "spill decompressed to {} bytes, expected {}",
                bytes.len(),
                width * height * 8
            ),
        });
    }
    counters.cache_cells_read += (width * height) as u64;
    accum_from_bytes(&bytes, width, height)
}

/// Parses the whitespace-separated ASCII debug form of a flow-direction
/// grid: `.` is NoData, `o` is NoFlow, `1`..`8` are directions.
pub fn parse_ascii_grid(text: &str) -> Result<Grid<FlowDir>> {
    let mut rows: Vec<Vec<FlowDir>> = Vec::new();
    for line in text.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let d = match tok {
                "." => FlowDir::NoData,
                "o" => FlowDir::NoFlow,
                "1" | "2" | "3" | "4" | "5" | "6" | "7" | "8" => {
                    FlowDir::from_byte(tok.parse().unwrap())?
                }
                other => {
                    return Err(Error::Format(format!("unknown grid token {other:?}")));
                }
            };
            row.push(d);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("empty grid text".into()));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Format("ragged grid rows".into()));
    }
    let height = rows.len();
    Grid::from_vec(width, height, rows.concat())
}

pub fn format_ascii_grid(grid: &Grid<FlowDir>) -> String {
    let mut out = String::new();
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            if x > 0 {
                out.push(' ');
            }
            match grid.get(x, y) {
                FlowDir::NoData => out.push('.'),
                FlowDir::NoFlow => out.push('o'),
                d => out.push_str(&d.as_byte().to_string()),
            }
        }
        out.push('\n');
    }
    out
}

/// Reads every present tile and assembles the logical DEM, cropping the
/// NoData padding of edge tiles. Absent tiles become NoData.
pub fn read_merged_flowdirs(layout: &TileLayout, counters: &mut IoCounters) -> Result<Grid<FlowDir>> {
    let mut merged = Grid::filled(layout.dem_width(), layout.dem_height(), FlowDir::NoData)?;
    for tile in layout.present_tiles() {
        let path = layout.tile_path(tile).expect("present tile has a path");
        let grid = read_flowdir_tile(path, layout.tile_width(), layout.tile_height(), counters)?;
        copy_tile_into(&grid, layout, tile, &mut merged, |d| *d);
    }
    Ok(merged)
}

/// Merges accumulation tiles (for example a run's output directory) into one
/// logical grid. Cells in absent tiles are NaN.
pub fn read_merged_accum(layout: &TileLayout, counters: &mut IoCounters) -> Result<Grid<f64>> {
    let mut merged = Grid::filled(layout.dem_width(), layout.dem_height(), f64::NAN)?;
    for tile in layout.present_tiles() {
        let path = layout.tile_path(tile).expect("present tile has a path");
        let grid = read_accum_tile(path, layout.tile_width(), layout.tile_height(), counters)?;
        copy_tile_into(&grid, layout, tile, &mut merged, |v| *v);
    }
    Ok(merged)
}

/// Merges a weights manifest into one logical grid. Cells without a weight
/// tile default to 1.0, matching the solver's default.
pub fn read_merged_weights(layout: &TileLayout, counters: &mut IoCounters) -> Result<WeightGrid> {
    let mut merged = Grid::filled(layout.dem_width(), layout.dem_height(), 1.0f64)?;
    for tile in layout.present_tiles() {
        let path = layout.tile_path(tile).expect("present tile has a path");
        let grid = read_weight_tile(path, layout.tile_width(), layout.tile_height(), counters)?;
        copy_tile_into(&grid.0, layout, tile, &mut merged, |v| *v);
    }
    Ok(WeightGrid(merged))
}

/// Magic prefix of self-describing accumulation grid files.
const GRID_MAGIC: &[u8; 8] = b"FLOWACC1";

/// Writes a whole accumulation grid with a small self-describing header:
/// an 8-byte magic, u64 LE width and height, then row-major f64 LE cells.
/// This is the single-file format the oracle subcommand emits.
pub fn write_accum_grid(path: &Path, grid: &Grid<f64>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    out.write_all(GRID_MAGIC)?;
    out.write_all(&(grid.width() as u64).to_le_bytes())?;
    out.write_all(&(grid.height() as u64).to_le_bytes())?;
    for v in grid.data() {
        out.write_all(&v.to_bits().to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_accum_grid(path: &Path) -> Result<Grid<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 24 || &bytes[..8] != GRID_MAGIC {
        return Err(Error::Format(format!(
            "{} is not an accumulation grid file",
            path.display()
        )));
    }
    let width = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let height = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = 24 + width * height * 8;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }
    accum_from_bytes(&bytes[24..], width, height)
}

fn copy_tile_into<T: Clone, U>(
    tile_grid: &Grid<T>,
    layout: &TileLayout,
    tile: TileId,
    merged: &mut Grid<U>,
    map: impl Fn(&T) -> U,
) {
    for y in 0..layout.tile_height() {
        let gy = tile.row * layout.tile_height() + y;
        if gy >= layout.dem_height() {
            break;
        }
        for x in 0..layout.tile_width() {
            let gx = tile.col * layout.tile_width() + x;
            if gx >= layout.dem_width() {
                break;
            }
            merged.set(gx, gy, map(tile_grid.get(x, y)));
        }
    }
}
