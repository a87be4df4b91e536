//! Helpers shared by the integration suites: an in-memory tiled solve (the
//! minimal composition of solver, global graph, and finalizer, without the
//! disk or the worker runtime) and elevation-driven direction generators.

#![allow(dead_code)]

use std::path::PathBuf;

use tileflow::finalize::apply_offsets;
use tileflow::global::{build_graph, solve_global};
use tileflow::grid::Grid;
use tileflow::solver::{extract_payload, solve_tile, WeightGrid};
use tileflow::wire::OffsetPayload;
use tileflow::{FlowDir, TileLayout};

/// Cuts the merged grid into padded tiles.
pub fn split_tiles(
    merged: &Grid<FlowDir>,
    tile_w: usize,
    tile_h: usize,
) -> (TileLayout, Vec<Grid<FlowDir>>) {
    let cols = merged.width().div_ceil(tile_w);
    let rows = merged.height().div_ceil(tile_h);
    let layout = TileLayout::new(
        merged.width(),
        merged.height(),
        tile_w,
        tile_h,
        vec![Some(PathBuf::new()); rows * cols],
    )
    .unwrap();
    let mut tiles = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let mut tile = Grid::filled(tile_w, tile_h, FlowDir::NoData).unwrap();
            for ty in 0..tile_h {
                let gy = row * tile_h + ty;
                if gy >= merged.height() {
                    break;
                }
                for tx in 0..tile_w {
                    let gx = col * tile_w + tx;
                    if gx >= merged.width() {
                        break;
                    }
                    tile.set(tx, ty, *merged.get(gx, gy));
                }
            }
            tiles.push(tile);
        }
    }
    (layout, tiles)
}

/// Splits a weight grid the same way tiles are split (padding weight 0).
pub fn split_weights(
    weights: &Grid<f64>,
    tile_w: usize,
    tile_h: usize,
) -> Vec<WeightGrid> {
    let cols = weights.width().div_ceil(tile_w);
    let rows = weights.height().div_ceil(tile_h);
    let mut out = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let mut tile = Grid::filled(tile_w, tile_h, 0.0f64).unwrap();
            for ty in 0..tile_h {
                let gy = row * tile_h + ty;
                if gy >= weights.height() {
                    break;
                }
                for tx in 0..tile_w {
                    let gx = col * tile_w + tx;
                    if gx >= weights.width() {
                        break;
                    }
                    tile.set(tx, ty, *weights.get(gx, gy));
                }
            }
            out.push(WeightGrid(tile));
        }
    }
    out
}

/// Solves the merged grid through the tiled two-stage composition entirely
/// in memory: per-tile solve, global graph, offsets, finalize, merge.
pub fn tiled_solve_in_memory(
    merged: &Grid<FlowDir>,
    tile_w: usize,
    tile_h: usize,
    weights: Option<&Grid<f64>>,
) -> Grid<f64> {
    let (layout, tiles) = split_tiles(merged, tile_w, tile_h);
    let tile_weights = weights.map(|w| split_weights(w, tile_w, tile_h));

    let solutions: Vec<_> = tiles
        .iter()
        .enumerate()
        .map(|(i, tile)| {
            let w = tile_weights.as_ref().map(|tw| &tw[i]);
            solve_tile(tile, w).expect("acyclic by construction")
        })
        .collect();
    let payloads: Vec<_> = solutions.iter().map(extract_payload).collect();
    let graph = build_graph(&layout, &payloads).unwrap();
    let offsets: Vec<OffsetPayload> = solve_global(&graph).unwrap();

    let mut out = Grid::filled(merged.width(), merged.height(), f64::NAN).unwrap();
    for (i, tile) in layout.present_tiles().into_iter().enumerate() {
        let mut accum = solutions[i].accum.clone();
        apply_offsets(&tiles[i], &mut accum, &offsets[i]).unwrap();
        for ty in 0..tile_h {
            let gy = tile.row * tile_h + ty;
            if gy >= merged.height() {
                break;
            }
            for tx in 0..tile_w {
                let gx = tile.col * tile_w + tx;
                if gx >= merged.width() {
                    break;
                }
                out.set(gx, gy, *accum.get(tx, ty));
            }
        }
    }
    out
}

/// Steepest-descent directions from an elevation field with a one-cell
/// apron: `apron` is `(w + 2) x (h + 2)` and `nodata` is `w x h`. Boundary
/// cells flow off the grid when the apron ground is the steepest descent.
pub fn dirs_from_apron(apron: &Grid<f64>, nodata: &Grid<bool>) -> Grid<FlowDir> {
    let w = nodata.width();
    let h = nodata.height();
    assert_eq!(apron.width(), w + 2);
    assert_eq!(apron.height(), h + 2);
    let mut dirs = Grid::filled(w, h, FlowDir::NoFlow).unwrap();
    for y in 0..h {
        for x in 0..w {
            if *nodata.get(x, y) {
                dirs.set(x, y, FlowDir::NoData);
                continue;
            }
            let z = *apron.get(x + 1, y + 1);
            let mut best_slope = 0.0f64;
            let mut best = FlowDir::NoFlow;
            for d in FlowDir::DIRECTIONS {
                let (dx, dy) = d.offset().unwrap();
                let nx = x as i64 + dx as i64;
                let ny = y as i64 + dy as i64;
                let inside = nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64;
                if inside && *nodata.get(nx as usize, ny as usize) {
                    continue;
                }
                let zn = *apron.get((nx + 1) as usize, (ny + 1) as usize);
                let drop = z - zn;
                if drop <= 0.0 {
                    continue;
                }
                let dist = if dx != 0 && dy != 0 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                let slope = drop / dist;
                if slope > best_slope {
                    best_slope = slope;
                    best = d;
                }
            }
            dirs.set(x, y, best);
        }
    }
    dirs
}

/// Exact bit equality with NaN treated as equal to NaN.
pub fn grids_identical(a: &Grid<f64>, b: &Grid<f64>) -> bool {
    a.width() == b.width()
        && a.height() == b.height()
        && (0..a.cells()).all(|c| {
            let (x, y) = (*a.at(c), *b.at(c));
            x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan())
        })
}
