//! Serial flow accumulation on a single tile plus perimeter link extraction.
//!
//! The kernel is dependency-driven: each cell's in-degree is counted, cells
//! with no inflow seed a FIFO queue, and popping a cell pushes its
//! accumulation one step downstream. Queue order does not affect the result;
//! addition is the only combine. Flow that leaves the tile boundary or runs
//! into a NoData cell is tallied but not propagated, and NoFlow cells retain
//! everything they receive.

use crate::error::{Error, Result};
use crate::flowdir::FlowDir;
use crate::grid::Grid;
use crate::perimeter::{perimeter_count, perimeter_to_xy, Link, PerimeterIndex};
use crate::wire::PerimeterPayload;
use std::collections::VecDeque;

/// Per-cell flow weights; accumulation starts from `w(c)` instead of 1.
#[derive(Debug, Clone)]
pub struct WeightGrid(pub Grid<f64>);

impl WeightGrid {
    pub fn uniform(width: usize, height: usize) -> Result<WeightGrid> {
        Ok(WeightGrid(Grid::filled(width, height, 1.0)?))
    }
}

/// Mass-balance tallies from one tile solve, in units of flow.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    /// Cells popped from the queue; equals the non-NoData cell count.
    pub cells_processed: u64,
    /// Non-NoData cell count of the tile.
    pub cells_with_data: u64,
    /// Flow that crossed the tile boundary.
    pub exited_tile: f64,
    /// Flow retained at NoFlow cells.
    pub retained_at_noflow: f64,
    /// Flow that pointed at an in-tile NoData cell and was dropped.
    pub dropped_into_nodata: f64,
}

/// Result of solving one tile: the intermediate accumulation grid plus the
/// perimeter view of it (direction, accumulation, and link per boundary
/// cell, in perimeter order).
#[derive(Debug, Clone)]
pub struct TileSolution {
    pub accum: Grid<f64>,
    pub perim_dirs: Vec<FlowDir>,
    pub perim_accum: Vec<f64>,
    pub perim_links: Vec<Link>,
    pub stats: SolveStats,
}

impl TileSolution {
    pub fn perimeter_len(&self) -> usize {
        self.perim_dirs.len()
    }
}

/// In-tile flow target of a directed cell.
#[inline]
fn flow_target(f: &Grid<FlowDir>, index: usize, d: FlowDir) -> Option<usize> {
    let (dx, dy) = d.offset()?;
    f.step(index, dx, dy)
}

/// Computes flow accumulation for one tile.
///
/// Every non-NoData cell ends up with `w(c)` plus the accumulation of all
/// cells draining through it from inside the tile. NoData cells carry NaN.
/// Fails with [`Error::CyclicFlow`] when the directions contain a cycle.
pub fn solve_tile(f: &Grid<FlowDir>, weights: Option<&WeightGrid>) -> Result<TileSolution> {
    if let Some(w) = weights {
        if w.0.width() != f.width() || w.0.height() != f.height() {
            return Err(Error::Format(format!(
                "weight grid {}x{} does not match tile {}x{}",
                w.0.width(),
                w.0.height(),
                f.width(),
                f.height()
            )));
        }
    }
    let cells = f.cells();
    let mut accum = Grid::filled(f.width(), f.height(), 0.0f64)?;
    let mut deps = vec![0u32; cells];
    let mut stats = SolveStats::default();

    for c in 0..cells {
        match *f.at(c) {
            FlowDir::NoData => *accum.at_mut(c) = f64::NAN,
            FlowDir::NoFlow => {}
            d => {
                if let Some(t) = flow_target(f, c, d) {
                    if !f.at(t).is_nodata() {
                        deps[t] += 1;
                    }
                }
            }
        }
    }

    let mut queue: VecDeque<usize> = (0..cells)
        .filter(|&c| deps[c] == 0 && !f.at(c).is_nodata())
        .collect();

    while let Some(c) = queue.pop_front() {
        stats.cells_processed += 1;
        let w = weights.map_or(1.0, |w| *w.0.at(c));
        *accum.at_mut(c) += w;
        let a = *accum.at(c);
        let d = *f.at(c);
        if d == FlowDir::NoFlow {
            stats.retained_at_noflow += a;
            continue;
        }
        match flow_target(f, c, d) {
            None => stats.exited_tile += a,
            Some(t) if f.at(t).is_nodata() => stats.dropped_into_nodata += a,
            Some(t) => {
                *accum.at_mut(t) += a;
                deps[t] -= 1;
                if deps[t] == 0 {
                    queue.push_back(t);
                }
            }
        }
    }

    stats.cells_with_data = (0..cells).filter(|&c| !f.at(c).is_nodata()).count() as u64;
    if stats.cells_processed != stats.cells_with_data {
        return Err(Error::CyclicFlow(format!(
            "{} of {} cells left unprocessed",
            stats.cells_with_data - stats.cells_processed,
            stats.cells_with_data
        )));
    }

    let total = perimeter_count(f.width(), f.height());
    let mut perim_dirs = Vec::with_capacity(total);
    let mut perim_accum = Vec::with_capacity(total);
    let mut perim_links = Vec::with_capacity(total);
    for p in 0..total {
        let idx = PerimeterIndex(p as u16);
        let (x, y) = perimeter_to_xy(idx, f.width(), f.height())?;
        let c = f.index(x, y);
        perim_dirs.push(*f.at(c));
        perim_accum.push(*accum.at(c));
        perim_links.push(follow_path(f, idx)?);
    }

    Ok(TileSolution {
        accum,
        perim_dirs,
        perim_accum,
        perim_links,
        stats,
    })
}

/// Traces the flow path starting at perimeter cell `start` and classifies
/// where it leads.
///
/// Returns [`Link::External`] when the cell's own direction already points
/// out of the tile, [`Link::Terminates`] when the path ends at a NoFlow or
/// NoData cell (the starting cell included), and otherwise the perimeter
/// index of the exit cell whose direction points out of the tile.
pub fn follow_path(f: &Grid<FlowDir>, start: PerimeterIndex) -> Result<Link> {
    let (x, y) = perimeter_to_xy(start, f.width(), f.height())?;
    let mut c = f.index(x, y);
    let start_index = c;
    let mut steps = 0usize;
    loop {
        let d = *f.at(c);
        if !d.is_directed() {
            return Ok(Link::Terminates);
        }
        match flow_target(f, c, d) {
            None => {
                // direction points out of the tile; a cell whose flow leaves
                // the tile is necessarily on the boundary
                return if c == start_index {
                    Ok(Link::External)
                } else {
                    let (ex, ey) = f.coords(c);
                    Ok(Link::Exit(crate::perimeter::xy_to_perimeter(
                        ex,
                        ey,
                        f.width(),
                        f.height(),
                    )?))
                };
            }
            Some(t) => c = t,
        }
        steps += 1;
        if steps > f.cells() {
            return Err(Error::CyclicFlow(format!(
                "flow path from perimeter cell {} revisits cells",
                start.0
            )));
        }
    }
}

/// Packs a tile solution's perimeter view into its wire form.
pub fn extract_payload(sol: &TileSolution) -> PerimeterPayload {
    PerimeterPayload {
        dirs: sol.perim_dirs.iter().map(|d| d.as_byte()).collect(),
        accum: sol.perim_accum.clone(),
        links: sol.perim_links.iter().map(|l| l.to_u16()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowdir::FlowDir::*;

    fn grid(width: usize, height: usize, dirs: &[FlowDir]) -> Grid<FlowDir> {
        Grid::from_vec(width, height, dirs.to_vec()).unwrap()
    }

    #[test]
    fn east_chain() {
        let f = grid(3, 1, &[East, East, East]);
        let sol = solve_tile(&f, None).unwrap();
        assert_eq!(sol.accum.data(), &[1.0, 2.0, 3.0]);
        assert_eq!(sol.stats.exited_tile, 3.0);
    }

    #[test]
    fn single_nodata_cell() {
        let f = grid(1, 1, &[NoData]);
        let sol = solve_tile(&f, None).unwrap();
        assert!(sol.accum.at(0).is_nan());
        assert_eq!(sol.stats.cells_with_data, 0);
        assert_eq!(sol.perim_links, vec![Link::Terminates]);
    }

    #[test]
    fn star_into_noflow_center() {
        // all eight border cells flow into the NoFlow center
        let f = grid(
            3,
            3,
            &[
                SouthEast, South, SouthWest, East, NoFlow, West, NorthEast, North, NorthWest,
            ],
        );
        let sol = solve_tile(&f, None).unwrap();
        assert_eq!(*sol.accum.get(1, 1), 9.0);
        for (x, y) in [(0, 0), (1, 0), (2, 0), (0, 1), (2, 1), (0, 2), (1, 2), (2, 2)] {
            assert_eq!(*sol.accum.get(x, y), 1.0);
        }
        assert_eq!(sol.stats.retained_at_noflow, 9.0);
        assert_eq!(sol.stats.exited_tile, 0.0);
    }

    #[test]
    fn flow_into_nodata_is_dropped_but_counted() {
        let f = grid(3, 1, &[East, East, NoData]);
        let sol = solve_tile(&f, None).unwrap();
        assert_eq!(*sol.accum.get(0, 0), 1.0);
        assert_eq!(*sol.accum.get(1, 0), 2.0);
        assert!(sol.accum.get(2, 0).is_nan());
        assert_eq!(sol.stats.dropped_into_nodata, 2.0);
        assert_eq!(sol.stats.cells_with_data, 2);
    }

    #[test]
    fn cycle_is_detected() {
        let f = grid(2, 1, &[East, West]);
        match solve_tile(&f, None) {
            Err(Error::CyclicFlow(_)) => {}
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn weights_replace_unit_seed() {
        let f = grid(3, 1, &[East, East, NoFlow]);
        let w = WeightGrid(Grid::from_vec(3, 1, vec![2.0, 0.0, 5.0]).unwrap());
        let sol = solve_tile(&f, Some(&w)).unwrap();
        assert_eq!(sol.accum.data(), &[2.0, 2.0, 7.0]);
        let bad = WeightGrid(Grid::filled(2, 2, 1.0).unwrap());
        assert!(solve_tile(&f, Some(&bad)).is_err());
    }

    #[test]
    fn follow_path_examples() {
        // top row flows east and exits at (2,0)
        let f = grid(
            3,
            3,
            &[
                East, East, East, NoFlow, NoFlow, NoFlow, NoFlow, NoFlow, NoFlow,
            ],
        );
        let exit = crate::perimeter::xy_to_perimeter(2, 0, 3, 3).unwrap();
        assert_eq!(
            follow_path(&f, PerimeterIndex(0)).unwrap(),
            Link::Exit(exit)
        );
        // (2,0) itself has a path of length one
        assert_eq!(follow_path(&f, exit).unwrap(), Link::External);
        // a path reaching an interior NoFlow cell terminates
        let f = grid(
            3,
            3,
            &[
                SouthEast, NoFlow, NoFlow, NoFlow, NoFlow, NoFlow, NoFlow, NoFlow, NoFlow,
            ],
        );
        assert_eq!(follow_path(&f, PerimeterIndex(0)).unwrap(), Link::Terminates);
        // a NoData perimeter cell terminates immediately
        let f = grid(2, 2, &[NoData, NoFlow, NoFlow, NoFlow]);
        assert_eq!(follow_path(&f, PerimeterIndex(0)).unwrap(), Link::Terminates);
    }

    #[test]
    fn follow_path_detects_cycles() {
        // interior 2-cycle reachable from the perimeter: (0,0) -> (1,1) <-> (2,1)
        let f = grid(
            3,
            3,
            &[
                SouthEast, NoFlow, NoFlow, NoFlow, East, West, NoFlow, NoFlow, NoFlow,
            ],
        );
        match follow_path(&f, PerimeterIndex(0)) {
            Err(Error::CyclicFlow(_)) => {}
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    /// LIFO variant of the kernel's propagation loop, used only to show that
    /// the processing order does not matter.
    fn solve_with_stack(f: &Grid<FlowDir>) -> Grid<f64> {
        let cells = f.cells();
        let mut accum = Grid::filled(f.width(), f.height(), 0.0f64).unwrap();
        let mut deps = vec![0u32; cells];
        for c in 0..cells {
            match *f.at(c) {
                NoData => *accum.at_mut(c) = f64::NAN,
                NoFlow => {}
                d => {
                    if let Some(t) = flow_target(f, c, d) {
                        if !f.at(t).is_nodata() {
                            deps[t] += 1;
                        }
                    }
                }
            }
        }
        let mut stack: Vec<usize> = (0..cells)
            .rev()
            .filter(|&c| deps[c] == 0 && !f.at(c).is_nodata())
            .collect();
        while let Some(c) = stack.pop() {
            *accum.at_mut(c) += 1.0;
            let a = *accum.at(c);
            let d = *f.at(c);
            if d == NoFlow {
                continue;
            }
            if let Some(t) = flow_target(f, c, d) {
                if !f.at(t).is_nodata() {
                    *accum.at_mut(t) += a;
                    deps[t] -= 1;
                    if deps[t] == 0 {
                        stack.push(t);
                    }
                }
            }
        }
        accum
    }

    #[test]
    fn queue_order_does_not_change_the_result() {
        let f = grid(
            4,
            4,
            &[
                South, West, South, West, South, West, East, NoFlow, East, East, SouthEast,
                South, NoFlow, North, East, NoFlow,
            ],
        );
        let fifo = solve_tile(&f, None).unwrap();
        let lifo = solve_with_stack(&f);
        for c in 0..f.cells() {
            assert_eq!(fifo.accum.at(c).to_bits(), lifo.at(c).to_bits());
        }
        // mass balance with unit weights
        let s = &fifo.stats;
        assert_eq!(
            s.exited_tile + s.retained_at_noflow + s.dropped_into_nodata,
            s.cells_with_data as f64
        );
    }

    #[test]
    fn payload_sizes() {
        let f = grid(3, 1, &[East, East, East]);
        let sol = solve_tile(&f, None).unwrap();
        let payload = extract_payload(&sol);
        assert_eq!(payload.byte_len(), 3 * 11);
        let f = grid(1, 1, &[NoFlow]);
        let payload = extract_payload(&solve_tile(&f, None).unwrap());
        assert_eq!(payload.byte_len(), 11);
        // perimeter arithmetic for the tile sizes used by real datasets
        assert_eq!(perimeter_count(3601, 3601) * 11, 158_400);
    }
}
