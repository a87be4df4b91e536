//! Ground truth: serial whole-grid accumulation, an independent brute-force
//! oracle, an exact comparator, and mass-balance accounting.
//!
//! `oracle_solve` runs the same dependency-queue kernel used for tiles on
//! the merged, untiled grid; it defines the authoritative answer the tiled
//! pipeline must reproduce. `brute_oracle` is a separate implementation --
//! memoized recursion over the upstream neighbours -- used to validate the
//! kernel itself, so the two answers come from genuinely different routes.

use crate::error::{Error, Result};
use crate::flowdir::FlowDir;
use crate::grid::Grid;
use crate::solver::{solve_tile, WeightGrid};

/// Flow accumulation of the whole grid treated as a single unit.
pub fn oracle_solve(f: &Grid<FlowDir>, weights: Option<&WeightGrid>) -> Result<Grid<f64>> {
    Ok(solve_tile(f, weights)?.accum)
}

/// Direct evaluation of the accumulation recurrence: each cell is its own
/// weight plus the accumulation of every neighbour that flows into it.
/// Intended for small grids; fails on cycles via a visiting guard.
pub fn brute_oracle(f: &Grid<FlowDir>, weights: Option<&WeightGrid>) -> Result<Grid<f64>> {
    if let Some(w) = weights {
        if w.0.width() != f.width() || w.0.height() != f.height() {
            return Err(Error::Format(
                "weight grid does not match flow directions".into(),
            ));
        }
    }
    let cells = f.cells();
    let mut accum = Grid::filled(f.width(), f.height(), f64::NAN)?;
    // 0 = unvisited, 1 = in progress, 2 = done
    let mut state = vec![0u8; cells];

    // upstream neighbours: cells whose direction points at `c`
    let upstream = |c: usize| -> Vec<usize> {
        let mut ups = Vec::new();
        for d in FlowDir::DIRECTIONS {
            let (dx, dy) = d.offset().unwrap();
            // the neighbour at (-dx, -dy) flows into c iff its direction is d
            if let Some(n) = f.step(c, -dx, -dy) {
                if *f.at(n) == d {
                    ups.push(n);
                }
            }
        }
        ups
    };

    for start in 0..cells {
        if state[start] == 2 || f.at(start).is_nodata() {
            continue;
        }
        // iterative post-order over the upstream edges
        let mut stack = vec![start];
        while let Some(&c) = stack.last() {
            if state[c] == 2 {
                stack.pop();
                continue;
            }
            if state[c] == 0 {
                state[c] = 1;
                for n in upstream(c) {
                    match state[n] {
                        0 => stack.push(n),
                        1 => {
                            return Err(Error::CyclicFlow(
                                "recursion guard hit a cell already being evaluated".into(),
                            ))
                        }
                        _ => {}
                    }
                }
                continue;
            }
            // all upstream neighbours are done
            let w = weights.map_or(1.0, |w| *w.0.at(c));
            let total: f64 = upstream(c).iter().map(|&n| *accum.at(n)).sum();
            *accum.at_mut(c) = w + total;
            state[c] = 2;
            stack.pop();
        }
    }
    Ok(accum)
}

/// One cell that differs between two grids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    pub x: usize,
    pub y: usize,
    pub got: f64,
    pub expected: f64,
}

/// Result of an exact grid comparison.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub cells: u64,
    pub mismatches: u64,
    /// The first few mismatches, in row-major order.
    pub samples: Vec<Mismatch>,
}

impl CompareReport {
    pub fn matches(&self) -> bool {
        self.mismatches == 0
    }
}

/// Exact equality per cell, treating any NaN as equal to any NaN.
#[inline]
pub fn cells_equal(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

/// Compares a computed grid against the authoritative one cell by cell.
pub fn compare(got: &Grid<f64>, expected: &Grid<f64>, sample_limit: usize) -> Result<CompareReport> {
    if got.width() != expected.width() || got.height() != expected.height() {
        return Err(Error::Format(format!(
            "cannot compare {}x{} against {}x{}",
            got.width(),
            got.height(),
            expected.width(),
            expected.height()
        )));
    }
    let mut report = CompareReport {
        cells: got.cells() as u64,
        mismatches: 0,
        samples: Vec::new(),
    };
    for c in 0..got.cells() {
        if !cells_equal(*got.at(c), *expected.at(c)) {
            report.mismatches += 1;
            if report.samples.len() < sample_limit {
                let (x, y) = got.coords(c);
                report.samples.push(Mismatch {
                    x,
                    y,
                    got: *got.at(c),
                    expected: *expected.at(c),
                });
            }
        }
    }
    Ok(report)
}

/// Where the accumulated flow of a solved grid ends up.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MassBalance {
    /// Flow of cells whose direction leaves the grid.
    pub exited: f64,
    /// Flow retained at NoFlow cells.
    pub retained_at_noflow: f64,
    /// Flow of cells whose direction points at a NoData cell.
    pub dropped_into_nodata: f64,
    pub cells_with_data: u64,
}

impl MassBalance {
    pub fn total(&self) -> f64 {
        self.exited + self.retained_at_noflow + self.dropped_into_nodata
    }
}

/// Accounts for every unit of flow in a final accumulation grid. With unit
/// weights the total equals the non-NoData cell count exactly.
pub fn mass_balance(f: &Grid<FlowDir>, accum: &Grid<f64>) -> Result<MassBalance> {
    if f.width() != accum.width() || f.height() != accum.height() {
        return Err(Error::Format(
            "flow directions and accumulation have different shapes".into(),
        ));
    }
    let mut mb = MassBalance::default();
    for c in 0..f.cells() {
        let d = *f.at(c);
        if d.is_nodata() {
            continue;
        }
        mb.cells_with_data += 1;
        let a = *accum.at(c);
        match d {
            FlowDir::NoFlow => mb.retained_at_noflow += a,
            d => {
                let (dx, dy) = d.offset().unwrap();
                match f.step(c, dx, dy) {
                    None => mb.exited += a,
                    Some(t) if f.at(t).is_nodata() => mb.dropped_into_nodata += a,
                    Some(_) => {}
                }
            }
        }
    }
    Ok(mb)
}
