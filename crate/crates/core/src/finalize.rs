//! Consumer-side stage 2: apply external inbound offsets to a tile's
//! intermediate accumulation.
//!
//! Each nonzero offset is added to its entry cell and to every downstream
//! cell of the entry cell's flow path while the path stays inside the tile.
//! A terminal NoFlow cell receives the offset too; a step into an in-tile
//! NoData cell drops it; a step out of the tile ends the walk after the last
//! in-tile cell. Offsets on shared path segments sum, and the result does
//! not depend on the order entry cells are processed.

use crate::error::{Error, Result};
use crate::flowdir::FlowDir;
use crate::grid::Grid;
use crate::pipeline::Strategy;
use crate::solver::{solve_tile, WeightGrid};
use crate::wire::OffsetPayload;

/// Instrumentation from one offset application.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ApplyStats {
    /// Cells visited across all offset walks.
    pub path_steps: u64,
    /// Offset flow dropped into in-tile NoData cells.
    pub dropped_into_nodata: f64,
    /// Offset flow that left the tile again at an exit cell.
    pub exited_tile: f64,
    /// Offset flow retained at terminal NoFlow cells.
    pub retained_at_noflow: f64,
}

/// Adds each perimeter offset along its downstream in-tile flow path.
pub fn apply_offsets(
    f: &Grid<FlowDir>,
    accum: &mut Grid<f64>,
    offsets: &OffsetPayload,
) -> Result<ApplyStats> {
    let expected = crate::perimeter::perimeter_count(f.width(), f.height());
    if offsets.offsets.len() != expected {
        return Err(Error::Protocol(format!(
            "{} offsets for a {}x{} tile (P={expected})",
            offsets.offsets.len(),
            f.width(),
            f.height()
        )));
    }
    if accum.width() != f.width() || accum.height() != f.height() {
        return Err(Error::Format(format!(
            "accumulation grid {}x{} does not match tile {}x{}",
            accum.width(),
            accum.height(),
            f.width(),
            f.height()
        )));
    }
    let mut stats = ApplyStats::default();
    for (p, &offset) in offsets.offsets.iter().enumerate() {
        if offset == 0.0 {
            continue;
        }
        let (x, y) = crate::perimeter::perimeter_to_xy(
            crate::perimeter::PerimeterIndex(p as u16),
            f.width(),
            f.height(),
        )?;
        let mut c = f.index(x, y);
        if f.at(c).is_nodata() {
            // never produced by the global solver; dropped for safety
            stats.dropped_into_nodata += offset;
            continue;
        }
        let mut steps = 0usize;
        loop {
            *accum.at_mut(c) += offset;
            stats.path_steps += 1;
            let d = *f.at(c);
            if d == FlowDir::NoFlow {
                stats.retained_at_noflow += offset;
                break;
            }
            let (dx, dy) = d.offset().expect("NoData cells are never walked");
            match f.step(c, dx, dy) {
                None => {
                    stats.exited_tile += offset;
                    break;
                }
                Some(t) if f.at(t).is_nodata() => {
                    stats.dropped_into_nodata += offset;
                    break;
                }
                Some(t) => c = t,
            }
            steps += 1;
            if steps > f.cells() {
                return Err(Error::CyclicFlow(format!(
                    "offset walk from perimeter cell {p} revisits cells"
                )));
            }
        }
    }
    Ok(stats)
}

/// Produces the final accumulation grid for one tile under the given
/// caching strategy.
///
/// Evict recomputes the intermediate from the flow directions; Cache takes
/// the spilled intermediate; Retain takes the in-memory one. All three feed
/// the same offset application and produce identical grids.
pub fn finalize_tile(
    strategy: Strategy,
    tile: &str,
    f: &Grid<FlowDir>,
    weights: Option<&WeightGrid>,
    cached: Option<Grid<f64>>,
    retained: Option<Grid<f64>>,
    offsets: &OffsetPayload,
) -> Result<(Grid<f64>, ApplyStats)> {
    let mut accum = match strategy {
        Strategy::Evict => solve_tile(f, weights)?.accum,
        Strategy::Cache => cached.ok_or_else(|| Error::Cache {
            tile: tile.to_string(),
            detail: "no spilled intermediate".to_string(),
        })?,
        Strategy::Retain => retained.ok_or_else(|| Error::MissingState(tile.to_string()))?,
    };
    let stats = apply_offsets(f, &mut accum, offsets)?;
    Ok((accum, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowdir::FlowDir::*;
    use crate::solver::extract_payload;

    fn offsets_for(f: &Grid<FlowDir>, set: &[(usize, f64)]) -> OffsetPayload {
        let mut offsets =
            vec![0.0; crate::perimeter::perimeter_count(f.width(), f.height())];
        for &(p, v) in set {
            offsets[p] = v;
        }
        OffsetPayload { offsets }
    }

    #[test]
    fn zero_offsets_change_nothing() {
        let f = Grid::from_vec(3, 1, vec![East, East, East]).unwrap();
        let sol = solve_tile(&f, None).unwrap();
        let mut accum = sol.accum.clone();
        let stats = apply_offsets(&f, &mut accum, &offsets_for(&f, &[])).unwrap();
        assert_eq!(accum.data(), sol.accum.data());
        assert_eq!(stats.path_steps, 0);
    }

    #[test]
    fn chain_propagation() {
        let f = Grid::from_vec(3, 1, vec![East, East, East]).unwrap();
        let mut accum = Grid::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        apply_offsets(&f, &mut accum, &offsets_for(&f, &[(0, 5.0)])).unwrap();
        assert_eq!(accum.data(), &[6.0, 7.0, 8.0]);
    }

    #[test]
    fn exit_cell_combines_offset_with_local_flow() {
        // a lone exit cell with tile accumulation 1 receiving 99 from
        // elsewhere finalizes to 100
        let f = Grid::from_vec(2, 1, vec![West, NoFlow]).unwrap();
        let mut accum = Grid::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let stats = apply_offsets(&f, &mut accum, &offsets_for(&f, &[(0, 99.0)])).unwrap();
        assert_eq!(*accum.get(0, 0), 100.0);
        assert_eq!(stats.exited_tile, 99.0);
    }

    #[test]
    fn offsets_on_shared_segments_sum() {
        // both rows feed the east exit of the second row
        let f = Grid::from_vec(2, 2, vec![South, South, East, East]).unwrap();
        let sol = solve_tile(&f, None).unwrap();
        let mut accum = sol.accum.clone();
        let p_top_left = 0;
        let p_top_right = 1;
        apply_offsets(
            &f,
            &mut accum,
            &offsets_for(&f, &[(p_top_left, 10.0), (p_top_right, 3.0)]),
        )
        .unwrap();
        // (0,0)=1+10, (1,0)=1+3, (0,1)=2+10, (1,1)=4+13
        assert_eq!(accum.data(), &[11.0, 4.0, 12.0, 17.0]);
    }

    #[test]
    fn offset_into_terminal_noflow_is_retained() {
        let f = Grid::from_vec(3, 1, vec![East, East, NoFlow]).unwrap();
        let mut accum = Grid::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let stats = apply_offsets(&f, &mut accum, &offsets_for(&f, &[(0, 4.0)])).unwrap();
        assert_eq!(accum.data(), &[5.0, 6.0, 7.0]);
        assert_eq!(stats.retained_at_noflow, 4.0);
    }

    #[test]
    fn offset_into_nodata_is_dropped_mid_path() {
        let f = Grid::from_vec(3, 1, vec![East, East, NoData]).unwrap();
        let mut accum = solve_tile(&f, None).unwrap().accum;
        let stats = apply_offsets(&f, &mut accum, &offsets_for(&f, &[(0, 2.0)])).unwrap();
        assert_eq!(*accum.get(0, 0), 3.0);
        assert_eq!(*accum.get(1, 0), 4.0);
        assert!(accum.get(2, 0).is_nan());
        assert_eq!(stats.dropped_into_nodata, 2.0);
    }

    #[test]
    fn strategies_agree_bit_for_bit() {
        let f = Grid::from_vec(
            3,
            3,
            vec![East, East, South, NorthEast, East, South, East, East, East],
        )
        .unwrap();
        let sol = solve_tile(&f, None).unwrap();
        let offsets = offsets_for(&f, &[(0, 7.0), (3, 2.0)]);
        let (evict, _) =
            finalize_tile(Strategy::Evict, "t", &f, None, None, None, &offsets).unwrap();
        let (cache, _) = finalize_tile(
            Strategy::Cache,
            "t",
            &f,
            None,
            Some(sol.accum.clone()),
            None,
            &offsets,
        )
        .unwrap();
        let (retain, _) = finalize_tile(
            Strategy::Retain,
            "t",
            &f,
            None,
            None,
            Some(sol.accum.clone()),
            &offsets,
        )
        .unwrap();
        for c in 0..f.cells() {
            assert_eq!(evict.at(c).to_bits(), cache.at(c).to_bits());
            assert_eq!(evict.at(c).to_bits(), retain.at(c).to_bits());
        }
    }

    #[test]
    fn missing_sources_are_errors() {
        let f = Grid::from_vec(1, 1, vec![NoFlow]).unwrap();
        let offsets = offsets_for(&f, &[]);
        assert!(matches!(
            finalize_tile(Strategy::Cache, "t", &f, None, None, None, &offsets),
            Err(Error::Cache { .. })
        ));
        assert!(matches!(
            finalize_tile(Strategy::Retain, "t", &f, None, None, None, &offsets),
            Err(Error::MissingState(_))
        ));
    }

    #[test]
    fn cyclic_path_is_detected() {
        let f = Grid::from_vec(3, 1, vec![East, East, West]).unwrap();
        let mut accum = Grid::from_vec(3, 1, vec![0.0; 3]).unwrap();
        match apply_offsets(&f, &mut accum, &offsets_for(&f, &[(0, 1.0)])) {
            Err(Error::CyclicFlow(_)) => {}
            other => panic!("expected cycle error, got {other:?}"),
        }
    }
}
