//! The tiling manifest: how a DEM is cut into equally sized tiles, which
//! tiles exist, and how cell coordinates map across tile boundaries.
//!
//! Edge tiles are padded with NoData so that every stored tile has identical
//! dimensions. Tiles may be absent entirely (for example open ocean); an
//! absent tile behaves as if every cell in it were NoData.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::flowdir::FlowDir;
use crate::perimeter::{perimeter_count, MAX_PERIMETER};

/// Position of a tile in the tile grid, `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileId {
    pub row: usize,
    pub col: usize,
}

impl TileId {
    pub fn new(row: usize, col: usize) -> TileId {
        TileId { row, col }
    }
}

impl std::fmt::Display for TileId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Result of following a flow direction across a tile boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// The target cell lies in a present tile.
    InTile { tile: TileId, x: usize, y: usize },
    /// The target is outside the DEM bounds or in an absent tile.
    OutsideDem,
}

/// Dimensions and per-tile presence of a tiled DEM.
#[derive(Debug, Clone, PartialEq)]
pub struct TileLayout {
    dem_width: usize,
    dem_height: usize,
    tile_width: usize,
    tile_height: usize,
    grid_cols: usize,
    grid_rows: usize,
    /// Row-major; `None` marks an absent tile.
    tiles: Vec<Option<PathBuf>>,
}

impl TileLayout {
    pub fn new(
        dem_width: usize,
        dem_height: usize,
        tile_width: usize,
        tile_height: usize,
        tiles: Vec<Option<PathBuf>>,
    ) -> Result<TileLayout> {
        if dem_width == 0 || dem_height == 0 || tile_width == 0 || tile_height == 0 {
            return Err(Error::Format(format!(
                "layout dimensions must be positive: DEM {dem_width}x{dem_height}, \
                 tile {tile_width}x{tile_height}"
            )));
        }
        if perimeter_count(tile_width, tile_height) > MAX_PERIMETER - 1 {
            return Err(Error::Format(format!(
                "tile {tile_width}x{tile_height} has too many perimeter cells \
                 for 16-bit link indices"
            )));
        }
        let grid_cols = dem_width.div_ceil(tile_width);
        let grid_rows = dem_height.div_ceil(tile_height);
        if tiles.len() != grid_cols * grid_rows {
            return Err(Error::Format(format!(
                "layout has {} tile entries, expected {} ({grid_rows} rows x {grid_cols} cols)",
                tiles.len(),
                grid_cols * grid_rows
            )));
        }
        Ok(TileLayout {
            dem_width,
            dem_height,
            tile_width,
            tile_height,
            grid_cols,
            grid_rows,
            tiles,
        })
    }

    pub fn dem_width(&self) -> usize {
        self.dem_width
    }

    pub fn dem_height(&self) -> usize {
        self.dem_height
    }

    pub fn tile_width(&self) -> usize {
        self.tile_width
    }

    pub fn tile_height(&self) -> usize {
        self.tile_height
    }

    pub fn grid_cols(&self) -> usize {
        self.grid_cols
    }

    pub fn grid_rows(&self) -> usize {
        self.grid_rows
    }

    pub fn tile_cells(&self) -> usize {
        self.tile_width * self.tile_height
    }

    /// Perimeter cell count shared by every tile.
    pub fn tile_perimeter(&self) -> usize {
        perimeter_count(self.tile_width, self.tile_height)
    }

    pub fn contains(&self, tile: TileId) -> bool {
        tile.row < self.grid_rows && tile.col < self.grid_cols
    }

    pub fn is_present(&self, tile: TileId) -> bool {
        self.contains(tile) && self.tiles[tile.row * self.grid_cols + tile.col].is_some()
    }

    pub fn tile_path(&self, tile: TileId) -> Option<&PathBuf> {
        self.tiles
            .get(tile.row * self.grid_cols + tile.col)
            .and_then(|p| p.as_ref())
    }

    /// Present tiles in row-major order. This order defines tile indices for
    /// worker assignment.
    pub fn present_tiles(&self) -> Vec<TileId> {
        let mut out = Vec::new();
        for row in 0..self.grid_rows {
            for col in 0..self.grid_cols {
                let id = TileId::new(row, col);
                if self.is_present(id) {
                    out.push(id);
                }
            }
        }
        out
    }

    pub fn tile_paths(&self) -> &[Option<PathBuf>] {
        &self.tiles
    }

    /// Global cell coordinates of a tile-local cell.
    pub fn global_xy(&self, tile: TileId, x: usize, y: usize) -> (usize, usize) {
        (
            tile.col * self.tile_width + x,
            tile.row * self.tile_height + y,
        )
    }

    /// Resolves the cell one flow step from `(tile, x, y)` when the step
    /// crosses the tile boundary.
    ///
    /// Returns [`Location::OutsideDem`] when the target falls outside the DEM
    /// bounds (padding included) or lands in an absent tile. Corner crossings
    /// may change both the tile row and column.
    pub fn global_neighbor(&self, tile: TileId, x: usize, y: usize, d: FlowDir) -> Location {
        let (dx, dy) = match d.offset() {
            Some(o) => o,
            None => return Location::OutsideDem,
        };
        let (gx, gy) = self.global_xy(tile, x, y);
        let nx = gx as i64 + dx as i64;
        let ny = gy as i64 + dy as i64;
        if nx < 0 || ny < 0 || nx >= self.dem_width as i64 || ny >= self.dem_height as i64 {
            return Location::OutsideDem;
        }
        let (nx, ny) = (nx as usize, ny as usize);
        let target = TileId::new(ny / self.tile_height, nx / self.tile_width);
        if !self.is_present(target) {
            return Location::OutsideDem;
        }
        Location::InTile {
            tile: target,
            x: nx % self.tile_width,
            y: ny % self.tile_height,
        }
    }
}
