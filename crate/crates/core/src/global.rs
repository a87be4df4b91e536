//! Producer-side aggregation of tile perimeters into a global flow graph.
//!
//! Each perimeter cell of every present tile becomes one node. A node whose
//! link names an exit cell gets an internal edge to that cell; a node whose
//! own direction leaves its tile gets an external edge to the adjoining
//! tile's perimeter cell (or none when the flow leaves the DEM or enters an
//! absent tile or a NoData cell). Nodes that are not exits start at zero
//! accumulation: their flow was already accumulated downstream inside their
//! tile, and counting it again here would double it.
//!
//! Inflow is tracked in two parts. `a_in` is flow arriving over external
//! edges: flow that actually crosses into the tile and must be replayed
//! along the cell's downstream path during finalization. `a_int` is flow
//! arriving over internal edges: cross-tile flow that entered the tile
//! elsewhere and reaches this exit cell along an interior path.
//! Finalization will propagate exactly that flow into the exit cell when it
//! walks the entry cells' paths, so only `a_in` is returned to the tiles;
//! returning the sum would count the interior part twice.

use crate::error::{Error, Result};
use crate::flowdir::FlowDir;
use crate::layout::{Location, TileId, TileLayout};
use crate::perimeter::{perimeter_to_xy, xy_to_perimeter, Link, PerimeterIndex};
use crate::wire::{OffsetPayload, PerimeterPayload};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OutEdge {
    None,
    Internal(u32),
    External(u32),
}

/// The aggregated flow graph over all tiles' perimeter cells.
#[derive(Debug)]
pub struct GlobalGraph {
    perimeter: usize,
    present: Vec<TileId>,
    accum: Vec<f64>,
    out_edges: Vec<OutEdge>,
    indegree: Vec<u32>,
    external_edges: u64,
    internal_edges: u64,
}

impl GlobalGraph {
    pub fn node_count(&self) -> usize {
        self.accum.len()
    }

    pub fn external_edge_count(&self) -> u64 {
        self.external_edges
    }

    pub fn internal_edge_count(&self) -> u64 {
        self.internal_edges
    }

    pub fn present_tiles(&self) -> &[TileId] {
        &self.present
    }
}

/// Builds the global flow graph from one perimeter payload per present tile,
/// in the same order as [`TileLayout::present_tiles`].
pub fn build_graph(layout: &TileLayout, payloads: &[PerimeterPayload]) -> Result<GlobalGraph> {
    let present = layout.present_tiles();
    if payloads.len() != present.len() {
        return Err(Error::Protocol(format!(
            "{} payloads for {} present tiles",
            payloads.len(),
            present.len()
        )));
    }
    let perimeter = layout.tile_perimeter();
    for (i, payload) in payloads.iter().enumerate() {
        if payload.perimeter_len() != perimeter
            || payload.accum.len() != perimeter
            || payload.links.len() != perimeter
        {
            return Err(Error::Protocol(format!(
                "tile {} payload has {} perimeter cells, layout says {}",
                present[i],
                payload.perimeter_len(),
                perimeter
            )));
        }
    }

    // present-tile index lookup by grid slot
    let mut slot_index = vec![None; layout.grid_rows() * layout.grid_cols()];
    for (i, tile) in present.iter().enumerate() {
        slot_index[tile.row * layout.grid_cols() + tile.col] = Some(i as u32);
    }

    let nodes = present.len() * perimeter;
    let mut accum = vec![0.0f64; nodes];
    let mut out_edges = vec![OutEdge::None; nodes];
    let mut indegree = vec![0u32; nodes];
    let mut external_edges = 0u64;
    let mut internal_edges = 0u64;

    for (ti, (&tile, payload)) in present.iter().zip(payloads).enumerate() {
        let base = ti * perimeter;
        for p in 0..perimeter {
            let u = base + p;
            let dir = FlowDir::from_byte(payload.dirs[p])?;
            let link = Link::from_u16(payload.links[p]);
            match link {
                Link::External => {
                    accum[u] = payload.accum[p];
                    if !dir.is_directed() {
                        return Err(Error::Protocol(format!(
                            "tile {tile} perimeter cell {p} marked external without a direction"
                        )));
                    }
                    let (x, y) = perimeter_to_xy(PerimeterIndex(p as u16), layout.tile_width(), layout.tile_height())?;
                    match layout.global_neighbor(tile, x, y, dir) {
                        Location::OutsideDem => {} // flow exits the DEM
                        Location::InTile { tile: t2, x: x2, y: y2 } => {
                            if t2 == tile {
                                return Err(Error::Protocol(format!(
                                    "tile {tile} perimeter cell {p} marked external but its \
                                     direction stays inside the tile"
                                )));
                            }
                            let ti2 = slot_index[t2.row * layout.grid_cols() + t2.col]
                                .expect("global_neighbor only returns present tiles")
                                as usize;
                            let p2 = xy_to_perimeter(x2, y2, layout.tile_width(), layout.tile_height())?;
                            let v = ti2 * perimeter + p2.0 as usize;
                            // flow into a NoData cell is dropped, as inside a tile
                            if payloads[ti2].dirs[p2.0 as usize] != FlowDir::NoData.as_byte() {
                                out_edges[u] = OutEdge::External(v as u32);
                                indegree[v] += 1;
                                external_edges += 1;
                            }
                        }
                    }
                }
                Link::Exit(e) => {
                    if e.0 as usize >= perimeter {
                        return Err(Error::Protocol(format!(
                            "tile {tile} perimeter cell {p} links to {} (P={perimeter})",
                            e.0
                        )));
                    }
                    let v = base + e.0 as usize;
                    out_edges[u] = OutEdge::Internal(v as u32);
                    indegree[v] += 1;
                    internal_edges += 1;
                }
                Link::Terminates => {}
            }
        }
    }

    Ok(GlobalGraph {
        perimeter,
        present,
        accum,
        out_edges,
        indegree,
        external_edges,
        internal_edges,
    })
}

/// Solves the global graph and returns, per present tile, the external
/// inbound flow for each perimeter cell.
pub fn solve_global(graph: &GlobalGraph) -> Result<Vec<OffsetPayload>> {
    let nodes = graph.node_count();
    let mut a_in = vec![0.0f64; nodes];
    let mut a_int = vec![0.0f64; nodes];
    let mut indegree = graph.indegree.clone();
    let mut queue: VecDeque<usize> = (0..nodes).filter(|&u| indegree[u] == 0).collect();
    let mut retired = 0usize;

    while let Some(u) = queue.pop_front() {
        retired += 1;
        let out = graph.accum[u] + a_in[u] + a_int[u];
        match graph.out_edges[u] {
            OutEdge::None => {}
            OutEdge::Internal(v) => {
                let v = v as usize;
                a_int[v] += out;
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    queue.push_back(v);
                }
            }
            OutEdge::External(v) => {
                let v = v as usize;
                a_in[v] += out;
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    queue.push_back(v);
                }
            }
        }
    }

    if retired != nodes {
        return Err(Error::CyclicFlow(format!(
            "global flow graph left {} of {nodes} nodes unretired",
            nodes - retired
        )));
    }

    Ok((0..graph.present.len())
        .map(|ti| OffsetPayload {
            offsets: a_in[ti * graph.perimeter..(ti + 1) * graph.perimeter].to_vec(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowdir::FlowDir::*;
    use crate::grid::Grid;
    use crate::solver::{extract_payload, solve_tile};
    use std::path::PathBuf;

    fn layout(
        dem_w: usize,
        dem_h: usize,
        tile_w: usize,
        tile_h: usize,
        absent: &[(usize, usize)],
    ) -> TileLayout {
        let cols = dem_w.div_ceil(tile_w);
        let rows = dem_h.div_ceil(tile_h);
        let tiles = (0..rows * cols)
            .map(|i| {
                let rc = (i / cols, i % cols);
                if absent.contains(&rc) {
                    None
                } else {
                    Some(PathBuf::new())
                }
            })
            .collect();
        TileLayout::new(dem_w, dem_h, tile_w, tile_h, tiles).unwrap()
    }

    #[test]
    fn single_tile_has_no_external_edges() {
        let f = Grid::from_vec(3, 1, vec![East, East, East]).unwrap();
        let payload = extract_payload(&solve_tile(&f, None).unwrap());
        let l = layout(3, 1, 3, 1, &[]);
        let g = build_graph(&l, &[payload]).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.external_edge_count(), 0);
        // the chain's two upstream cells link internally to the exit cell
        assert_eq!(g.internal_edge_count(), 2);
        let offsets = solve_global(&g).unwrap();
        assert!(offsets[0].offsets.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn east_chain_across_two_tiles() {
        let left = Grid::from_vec(2, 2, vec![East, East, NoFlow, NoFlow]).unwrap();
        let right = Grid::from_vec(2, 2, vec![East, East, NoFlow, NoFlow]).unwrap();
        let l = layout(4, 2, 2, 2, &[]);
        let payloads = vec![
            extract_payload(&solve_tile(&left, None).unwrap()),
            extract_payload(&solve_tile(&right, None).unwrap()),
        ];
        let g = build_graph(&l, &payloads).unwrap();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.external_edge_count(), 1);
        let offsets = solve_global(&g).unwrap();
        // the right tile's top-left cell receives the left tile's two cells
        let entry = xy_to_perimeter(0, 0, 2, 2).unwrap().0 as usize;
        assert_eq!(offsets[1].offsets[entry], 2.0);
        let total: f64 = offsets
            .iter()
            .flat_map(|o| o.offsets.iter())
            .filter(|&&o| o != 0.0)
            .sum();
        assert_eq!(total, 2.0);
    }

    #[test]
    fn external_inflow_and_local_contribution_combine() {
        // left tile: two rows flowing east into the right tile's two entry
        // cells, whose paths join at the right tile's own exit cell
        let left = Grid::from_vec(2, 2, vec![East, East, East, East]).unwrap();
        let right = Grid::from_vec(2, 2, vec![SouthEast, South, East, East]).unwrap();
        let l = layout(4, 2, 2, 2, &[]);
        let payloads = vec![
            extract_payload(&solve_tile(&left, None).unwrap()),
            extract_payload(&solve_tile(&right, None).unwrap()),
        ];
        let g = build_graph(&l, &payloads).unwrap();
        assert_eq!(g.external_edge_count(), 2);
        let offsets = solve_global(&g).unwrap();
        let top_entry = xy_to_perimeter(0, 0, 2, 2).unwrap().0 as usize;
        let bottom_entry = xy_to_perimeter(0, 1, 2, 2).unwrap().0 as usize;
        assert_eq!(offsets[1].offsets[top_entry], 2.0);
        assert_eq!(offsets[1].offsets[bottom_entry], 2.0);
        // the left tile receives nothing
        assert!(offsets[0].offsets.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn flow_into_absent_tile_is_dropped() {
        let f = Grid::from_vec(2, 2, vec![East, East, East, East]).unwrap();
        let l = layout(4, 2, 2, 2, &[(0, 1)]);
        let payloads = vec![extract_payload(&solve_tile(&f, None).unwrap())];
        let g = build_graph(&l, &payloads).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.external_edge_count(), 0);
        let offsets = solve_global(&g).unwrap();
        assert!(offsets[0].offsets.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn payload_count_mismatch_is_a_protocol_error() {
        let l = layout(4, 2, 2, 2, &[]);
        let f = Grid::from_vec(2, 2, vec![East, East, East, East]).unwrap();
        let payloads = vec![extract_payload(&solve_tile(&f, None).unwrap())];
        match build_graph(&l, &payloads) {
            Err(Error::Protocol(_)) => {}
            other => panic!("expected protocol error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_perimeter_length_is_a_protocol_error() {
        let l = layout(4, 2, 2, 2, &[]);
        let f = Grid::from_vec(2, 2, vec![East, East, East, East]).unwrap();
        let mut p0 = extract_payload(&solve_tile(&f, None).unwrap());
        let p1 = p0.clone();
        p0.dirs.pop();
        p0.accum.pop();
        p0.links.pop();
        assert!(matches!(
            build_graph(&l, &[p0, p1]),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn cyclic_global_graph_is_detected() {
        // two tiles whose edge cells point at each other
        let left = Grid::from_vec(2, 1, vec![NoFlow, East]).unwrap();
        let right = Grid::from_vec(2, 1, vec![West, NoFlow]).unwrap();
        let l = layout(4, 1, 2, 1, &[]);
        let payloads = vec![
            extract_payload(&solve_tile(&left, None).unwrap()),
            extract_payload(&solve_tile(&right, None).unwrap()),
        ];
        let g = build_graph(&l, &payloads).unwrap();
        match solve_global(&g) {
            Err(Error::CyclicFlow(_)) => {}
            other => panic!("expected cycle error, got {other:?}"),
        }
    }
}
