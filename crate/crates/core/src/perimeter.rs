//! Perimeter-cell enumeration and link encoding.
//!
//! Boundary cells of a W x H tile are numbered clockwise from the top-left
//! corner: top row left to right, right column top to bottom, bottom row
//! right to left, left column bottom to top. Degenerate tiles (W = 1 or
//! H = 1) are numbered in row-major order instead. The ordinals fit in a
//! `u16` with two values reserved at the top of the range as link sentinels,
//! which caps the perimeter at 65,533 cells (tiles up to roughly 16384 on a
//! side).

use crate::error::{Error, Result};

/// Reserved link value: the cell's flow direction points out of the tile.
pub const FLOW_EXTERNAL: u16 = 65534;
/// Reserved link value: the cell's flow path ends inside the tile.
pub const FLOW_TERMINATES: u16 = 65535;
/// Largest legal perimeter cell count, leaving room for the sentinels.
pub const MAX_PERIMETER: usize = FLOW_EXTERNAL as usize;

/// Ordinal of a cell on a tile's perimeter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PerimeterIndex(pub u16);

/// Where a perimeter cell's in-tile flow path ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// The path crosses the tile boundary at this perimeter cell.
    Exit(PerimeterIndex),
    /// The cell's own direction points out of the tile (path of length one).
    External,
    /// The path ends at a NoFlow or NoData cell inside the tile.
    Terminates,
}

impl Link {
    pub fn to_u16(self) -> u16 {
        match self {
            Link::Exit(PerimeterIndex(p)) => p,
            Link::External => FLOW_EXTERNAL,
            Link::Terminates => FLOW_TERMINATES,
        }
    }

    pub fn from_u16(v: u16) -> Link {
        match v {
            FLOW_EXTERNAL => Link::External,
            FLOW_TERMINATES => Link::Terminates,
            p => Link::Exit(PerimeterIndex(p)),
        }
    }
}

/// Number of perimeter cells of a W x H tile.
pub fn perimeter_count(width: usize, height: usize) -> usize {
    assert!(width >= 1 && height >= 1);
    if width == 1 || height == 1 {
        width * height
    } else {
        2 * width + 2 * height - 4
    }
}

/// Maps a perimeter ordinal to the cell coordinates it names.
pub fn perimeter_to_xy(p: PerimeterIndex, width: usize, height: usize) -> Result<(usize, usize)> {
    let p = p.0 as usize;
    let total = perimeter_count(width, height);
    if p >= total {
        return Err(Error::OutOfRange(format!(
            "perimeter index {p} out of range for {width}x{height} (P={total})"
        )));
    }
    if width == 1 || height == 1 {
        return Ok((p % width, p / width));
    }
    if p < width {
        // top row, left to right
        Ok((p, 0))
    } else if p < width + height - 1 {
        // right column, top to bottom (excluding the top-right corner)
        Ok((width - 1, p - width + 1))
    } else if p < 2 * width + height - 2 {
        // bottom row, right to left (excluding the bottom-right corner)
        Ok((width - 2 - (p - (width + height - 1)), height - 1))
    } else {
        // left column, bottom to top (excluding both left corners)
        Ok((0, height - 2 - (p - (2 * width + height - 2))))
    }
}

/// Inverse of [`perimeter_to_xy`]; errors on interior cells.
pub fn xy_to_perimeter(x: usize, y: usize, width: usize, height: usize) -> Result<PerimeterIndex> {
    if x >= width || y >= height {
        return Err(Error::OutOfRange(format!(
            "cell ({x},{y}) outside {width}x{height} tile"
        )));
    }
    if width == 1 || height == 1 {
        return Ok(PerimeterIndex((y * width + x) as u16));
    }
    let p = if y == 0 {
        x
    } else if x == width - 1 {
        width + y - 1
    } else if y == height - 1 {
        width + height - 1 + (width - 2 - x)
    } else if x == 0 {
        2 * width + height - 2 + (height - 2 - y)
    } else {
        return Err(Error::OutOfRange(format!(
            "cell ({x},{y}) is interior to a {width}x{height} tile"
        )));
    };
    Ok(PerimeterIndex(p as u16))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(perimeter_count(7, 7), 24);
        assert_eq!(perimeter_count(1, 1), 1);
        assert_eq!(perimeter_count(1, 5), 5);
        assert_eq!(perimeter_count(5, 1), 5);
        assert_eq!(perimeter_count(2, 2), 4);
        // sentinel headroom at the largest supported tile
        assert_eq!(perimeter_count(16384, 16384), 65532);
        assert!(perimeter_count(16384, 16384) <= MAX_PERIMETER - 1);
    }

    #[test]
    fn clockwise_walk_on_7x7() {
        let w = 7;
        let h = 7;
        assert_eq!(perimeter_to_xy(PerimeterIndex(0), w, h).unwrap(), (0, 0));
        assert_eq!(perimeter_to_xy(PerimeterIndex(6), w, h).unwrap(), (6, 0));
        assert_eq!(perimeter_to_xy(PerimeterIndex(23), w, h).unwrap(), (0, 1));
        assert_eq!(xy_to_perimeter(0, 0, w, h).unwrap(), PerimeterIndex(0));
        assert_eq!(xy_to_perimeter(6, 6, w, h).unwrap(), PerimeterIndex(12));
        assert!(xy_to_perimeter(3, 3, w, h).is_err());
        assert!(perimeter_to_xy(PerimeterIndex(24), w, h).is_err());
    }

    #[test]
    fn round_trip_is_exhaustive_up_to_64() {
        for w in 1..=64usize {
            for h in 1..=64usize {
                let total = perimeter_count(w, h);
                let mut seen = vec![false; w * h];
                for p in 0..total {
                    let (x, y) = perimeter_to_xy(PerimeterIndex(p as u16), w, h).unwrap();
                    assert!(x < w && y < h);
                    assert!(
                        w == 1 || h == 1 || x == 0 || y == 0 || x == w - 1 || y == h - 1,
                        "({x},{y}) not on boundary of {w}x{h}"
                    );
                    assert!(!seen[y * w + x], "duplicate cell in walk of {w}x{h}");
                    seen[y * w + x] = true;
                    assert_eq!(
                        xy_to_perimeter(x, y, w, h).unwrap(),
                        PerimeterIndex(p as u16)
                    );
                }
                // every boundary cell was visited exactly once
                let boundary = (0..w * h)
                    .filter(|i| {
                        let (x, y) = (i % w, i / w);
                        w == 1 || h == 1 || x == 0 || y == 0 || x == w - 1 || y == h - 1
                    })
                    .count();
                assert_eq!(total, boundary);
            }
        }
    }

    #[test]
    fn link_encoding() {
        assert_eq!(Link::Exit(PerimeterIndex(12)).to_u16(), 12);
        assert_eq!(Link::External.to_u16(), 65534);
        assert_eq!(Link::Terminates.to_u16(), 65535);
        for v in [0u16, 12, 65533, 65534, 65535] {
            assert_eq!(Link::from_u16(v).to_u16(), v);
        }
    }
}
