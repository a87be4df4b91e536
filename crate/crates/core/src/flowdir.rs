//! One-byte flow-direction codes.
//!
//! Ten values are legal: `0` marks a cell with no downstream neighbour
//! (NoFlow), `1..=8` are the eight neighbour directions numbered clockwise
//! from north, and `255` marks a cell that is inside the bounding box but not
//! part of the DEM (NoData). Every other byte is rejected on input.

use crate::error::{Error, Result};

/// Flow direction of a single raster cell.
///
/// `y` grows downward, so north is `(0, -1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FlowDir {
    NoFlow = 0,
    North = 1,
    NorthEast = 2,
    East = 3,
    SouthEast = 4,
    South = 5,
    SouthWest = 6,
    West = 7,
    NorthWest = 8,
    NoData = 255,
}

/// (dx, dy) offsets for codes 1..=8, indexed by `code - 1`.
const OFFSETS: [(i32, i32); 8] = [
    (0, -1),  // N
    (1, -1),  // NE
    (1, 0),   // E
    (1, 1),   // SE
    (0, 1),   // S
    (-1, 1),  // SW
    (-1, 0),  // W
    (-1, -1), // NW
];

impl FlowDir {
    /// All eight directed codes, in code order.
    pub const DIRECTIONS: [FlowDir; 8] = [
        FlowDir::North,
        FlowDir::NorthEast,
        FlowDir::East,
        FlowDir::SouthEast,
        FlowDir::South,
        FlowDir::SouthWest,
        FlowDir::West,
        FlowDir::NorthWest,
    ];

    pub fn from_byte(b: u8) -> Result<FlowDir> {
        match b {
            0 => Ok(FlowDir::NoFlow),
            1 => Ok(FlowDir::North),
            2 => Ok(FlowDir::NorthEast),
            3 => Ok(FlowDir::East),
            4 => Ok(FlowDir::SouthEast),
            5 => Ok(FlowDir::South),
            6 => Ok(FlowDir::SouthWest),
            7 => Ok(FlowDir::West),
            8 => Ok(FlowDir::NorthWest),
            255 => Ok(FlowDir::NoData),
            other => Err(Error::InvalidFlowDir(other)),
        }
    }

    #[inline]
    pub fn as_byte(self) -> u8 {
        self as u8
    }

    /// The (dx, dy) step this direction takes, or `None` for NoFlow/NoData.
    #[inline]
    pub fn offset(self) -> Option<(i32, i32)> {
        match self {
            FlowDir::NoFlow | FlowDir::NoData => None,
            d => Some(OFFSETS[d as u8 as usize - 1]),
        }
    }

    /// The direction whose offset is `(dx, dy)`, if one exists.
    pub fn from_offset(dx: i32, dy: i32) -> Option<FlowDir> {
        OFFSETS
            .iter()
            .position(|&o| o == (dx, dy))
            .map(|i| FlowDir::DIRECTIONS[i])
    }

    #[inline]
    pub fn is_nodata(self) -> bool {
        self == FlowDir::NoData
    }

    #[inline]
    pub fn is_directed(self) -> bool {
        !matches!(self, FlowDir::NoFlow | FlowDir::NoData)
    }
}
