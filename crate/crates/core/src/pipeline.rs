//! The single-producer, multiple-consumer runtime.
//!
//! The producer delegates tiles to workers round-robin, collects one
//! perimeter payload per tile, solves the global flow graph, and sends each
//! tile's offsets back to the worker that solved it (the same assignment is
//! reused so the Retain strategy finds its state). Workers never share
//! memory; everything crosses the boundary as framed byte messages. The
//! producer itself never allocates a tile-sized structure: its memory is
//! bounded by the total perimeter cell count.
//!
//! Instrumentation is part of the contract: the report carries exact logical
//! cell counts for every read and write and exact payload byte counts, so
//! the per-strategy disk and communication budgets can be asserted rather
//! than estimated.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc::{Receiver, Sender};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finalize::finalize_tile;
use crate::flowdir::FlowDir;
use crate::global::{build_graph, solve_global};
use crate::grid::Grid;
use crate::layout::{TileId, TileLayout};
use crate::solver::{extract_payload, solve_tile, WeightGrid};
use crate::store::{self, IoCounters};
use crate::wire::{Message, OffsetPayload, PerimeterPayload, ENVELOPE_BYTES};

/// What a consumer does with its stage-1 intermediates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Discard intermediates and recompute them in stage 2.
    Evict,
    /// Spill intermediates to disk, DEFLATE-compressed.
    Cache,
    /// Keep intermediates (and flow directions) in RAM.
    Retain,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Evict => "evict",
            Strategy::Cache => "cache",
            Strategy::Retain => "retain",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        match s {
            "evict" => Ok(Strategy::Evict),
            "cache" => Ok(Strategy::Cache),
            "retain" => Ok(Strategy::Retain),
            other => Err(Error::Format(format!(
                "unknown strategy {other:?} (expected evict, cache, or retain)"
            ))),
        }
    }
}

/// Configuration for one pipeline run.
#[derive(Debug, Clone)]
pub struct JobConfig {
    pub manifest: PathBuf,
    pub strategy: Strategy,
    pub workers: usize,
    /// Spill directory; required for [`Strategy::Cache`].
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Optional manifest of per-cell weight tiles mirroring the input
    /// layout; `null` entries mean unit weights.
    pub weights_manifest: Option<PathBuf>,
    /// RAM hint checked against the Retain strategy's needs.
    pub memory_budget_bytes: Option<u64>,
}

/// Message and I/O totals for one run. Payload byte counts exclude the
/// 13-byte envelopes, which are tallied separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub io: IoCounters,
    pub stage1_payload_bytes: u64,
    pub stage2_payload_bytes: u64,
    pub envelope_bytes: u64,
    pub stage1_messages: u64,
    pub stage2_messages: u64,
}

/// Per-tile transmission record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileTx {
    pub row: usize,
    pub col: usize,
    pub perimeter_cells: usize,
    pub stage1_payload_bytes: u64,
    pub stage2_payload_bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Timings {
    pub stage1_seconds: f64,
    pub global_solve_seconds: f64,
    pub stage2_seconds: f64,
    pub total_seconds: f64,
}

/// Ratios derived from the counters. `reads_per_cell` counts flow-direction
/// and cache cell reads; `writes_per_cell` counts accumulation and cache
/// cell writes. Weight tile reads are reported separately in the raw
/// counters and are not part of the budget ratios.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Derived {
    pub reads_per_cell: f64,
    pub writes_per_cell: f64,
    pub mean_tx_per_tile_bytes: f64,
}

/// Machine-readable result of a run; serialized as the stats report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: Strategy,
    pub workers: usize,
    pub dem_width: usize,
    pub dem_height: usize,
    pub tile_width: usize,
    pub tile_height: usize,
    pub tiles_present: usize,
    /// Stored cells across present tiles (padding included).
    pub cells_total: u64,
    pub counters: Counters,
    pub per_tile: Vec<TileTx>,
    pub derived: Derived,
    pub timings: Timings,
    /// Largest single structure the producer allocated, in elements.
    pub producer_peak_alloc_cells: u64,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunReport> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Short human-readable summary, one line per fact.
    pub fn summary(&self) -> String {
        let c = &self.counters;
        format!(
            "strategy {} with {} workers over {} tiles ({} cells)\n\
             reads/cell {:.3}  writes/cell {:.3}\n\
             payload bytes: stage1 {}  stage2 {}  envelopes {}\n\
             mean tx/tile {:.0} B\n\
             times: stage1 {:.3}s  global {:.3}s  stage2 {:.3}s  total {:.3}s",
            self.strategy,
            self.workers,
            self.tiles_present,
            self.cells_total,
            self.derived.reads_per_cell,
            self.derived.writes_per_cell,
            c.stage1_payload_bytes,
            c.stage2_payload_bytes,
            c.envelope_bytes,
            self.derived.mean_tx_per_tile_bytes,
            self.timings.stage1_seconds,
            self.timings.global_solve_seconds,
            self.timings.stage2_seconds,
            self.timings.total_seconds,
        )
    }
}

/// Round-robin assignment of tile indices to workers. The same assignment
/// is used in both stages.
pub fn assign_tiles(tile_count: usize, workers: usize) -> Vec<Vec<usize>> {
    assert!(workers >= 1);
    let mut assignment = vec![Vec::new(); workers];
    for tile in 0..tile_count {
        assignment[tile % workers].push(tile);
    }
    assignment
}

/// Output tile file name for one tile.
pub fn output_tile_name(tile: TileId) -> String {
    format!("tile_r{}_c{}.accum", tile.row, tile.col)
}

enum WorkerResult {
    Stage1 {
        frame: Vec<u8>,
        io: IoCounters,
    },
    Stage2 {
        tile: TileId,
        io: IoCounters,
    },
    Failed {
        tile: TileId,
        error: Error,
    },
}

struct WorkerContext<'a> {
    layout: &'a TileLayout,
    weights: Option<&'a TileLayout>,
    strategy: Strategy,
    cache_dir: Option<&'a Path>,
    output_dir: &'a Path,
}

impl WorkerContext<'_> {
    fn read_tile(&self, tile: TileId, io: &mut IoCounters) -> Result<Grid<FlowDir>> {
        let path = self
            .layout
            .tile_path(tile)
            .ok_or_else(|| Error::Protocol(format!("tile {tile} is not present")))?;
        store::read_flowdir_tile(path, self.layout.tile_width(), self.layout.tile_height(), io)
    }

    fn read_weights(&self, tile: TileId, io: &mut IoCounters) -> Result<Option<WeightGrid>> {
        match self.weights.and_then(|w| w.tile_path(tile)) {
            None => Ok(None),
            Some(path) => Ok(Some(store::read_weight_tile(
                path,
                self.layout.tile_width(),
                self.layout.tile_height(),
                io,
            )?)),
        }
    }

    fn stage1(
        &self,
        tile: TileId,
        retained: &mut HashMap<TileId, (Grid<FlowDir>, Grid<f64>)>,
        io: &mut IoCounters,
    ) -> Result<Vec<u8>> {
        let f = self.read_tile(tile, io)?;
        let weights = self.read_weights(tile, io)?;
        let sol = solve_tile(&f, weights.as_ref())?;
        let frame = Message::Perimeter {
            tile,
            body: extract_payload(&sol).encode(),
        }
        .encode();
        match self.strategy {
            Strategy::Evict => {}
            Strategy::Cache => {
                let dir = self
                    .cache_dir
                    .expect("cache strategy is validated to have a cache dir");
                store::spill_cache(dir, tile, &sol.accum, io)?;
            }
            Strategy::Retain => {
                retained.insert(tile, (f, sol.accum));
            }
        }
        Ok(frame)
    }

    fn stage2(
        &self,
        tile: TileId,
        offsets: &OffsetPayload,
        retained: &mut HashMap<TileId, (Grid<FlowDir>, Grid<f64>)>,
        io: &mut IoCounters,
    ) -> Result<()> {
        let (f, cached, kept) = match self.strategy {
            Strategy::Evict => (Some(self.read_tile(tile, io)?), None, None),
            Strategy::Cache => {
                let f = self.read_tile(tile, io)?;
                let dir = self
                    .cache_dir
                    .expect("cache strategy is validated to have a cache dir");
                let cached = store::load_cache(
                    dir,
                    tile,
                    self.layout.tile_width(),
                    self.layout.tile_height(),
                    io,
                )?;
                (Some(f), Some(cached), None)
            }
            Strategy::Retain => match retained.remove(&tile) {
                Some((f, a)) => (Some(f), None, Some(a)),
                None => return Err(Error::MissingState(tile.to_string())),
            },
        };
        let f = f.expect("flow directions resolved for every strategy");
        let weights = match self.strategy {
            Strategy::Evict => self.read_weights(tile, io)?,
            _ => None, // the saved intermediate already includes the weights
        };
        let (accum, _) = finalize_tile(
            self.strategy,
            &tile.to_string(),
            &f,
            weights.as_ref(),
            cached,
            kept,
            offsets,
        )?;
        let out = self.output_dir.join(output_tile_name(tile));
        store::write_accum_tile(&out, &accum, io)?;
        Ok(())
    }
}

fn worker_loop(ctx: &WorkerContext, jobs: Receiver<Vec<u8>>, results: Sender<WorkerResult>) {
    let mut retained: HashMap<TileId, (Grid<FlowDir>, Grid<f64>)> = HashMap::new();
    for frame in jobs {
        let msg = match Message::decode(&frame) {
            Ok(m) => m,
            Err(error) => {
                let _ = results.send(WorkerResult::Failed {
                    tile: TileId::new(0, 0),
                    error,
                });
                return;
            }
        };
        let tile = msg.tile();
        let mut io = IoCounters::default();
        let outcome: Result<WorkerResult> = match &msg {
            Message::Job { .. } => ctx
                .stage1(tile, &mut retained, &mut io)
                .map(|frame| WorkerResult::Stage1 { frame, io }),
            Message::Offsets { body, .. } => {
                OffsetPayload::decode(body, ctx.layout.tile_perimeter())
                    .and_then(|offsets| ctx.stage2(tile, &offsets, &mut retained, &mut io))
                    .map(|()| WorkerResult::Stage2 { tile, io })
            }
            Message::Perimeter { .. } => Err(Error::Protocol(
                "consumer received a perimeter payload".into(),
            )),
        };
        match outcome {
            Ok(result) => {
                let _ = results.send(result);
            }
            Err(error) => {
                let _ = results.send(WorkerResult::Failed { tile, error });
                return;
            }
        }
    }
}

/// Runs the full two-stage pipeline described by `job`.
///
/// Output tiles and an output manifest are written to the output directory;
/// the returned report carries all counters and timings. Any worker error
/// aborts the whole job with the failing tile's id.
pub fn run(job: &JobConfig) -> Result<RunReport> {
    let t_start = Instant::now();
    if job.workers == 0 {
        return Err(Error::Format("worker count must be at least 1".into()));
    }
    if job.strategy == Strategy::Cache && job.cache_dir.is_none() {
        return Err(Error::Format(
            "the cache strategy requires a cache directory".into(),
        ));
    }
    let layout = store::read_manifest(&job.manifest)?;
    let weights_layout = match &job.weights_manifest {
        None => None,
        Some(path) => {
            let w = store::read_manifest(path)?;
            if w.dem_width() != layout.dem_width()
                || w.dem_height() != layout.dem_height()
                || w.tile_width() != layout.tile_width()
                || w.tile_height() != layout.tile_height()
            {
                return Err(Error::Format(
                    "weights manifest dimensions do not match the input manifest".into(),
                ));
            }
            Some(w)
        }
    };

    fs::create_dir_all(&job.output_dir)?;
    if job.strategy == Strategy::Cache {
        fs::create_dir_all(job.cache_dir.as_ref().unwrap())?;
    }

    let present = layout.present_tiles();
    let perimeter = layout.tile_perimeter();
    let tile_cells = layout.tile_cells();
    let mut warnings = Vec::new();
    if job.strategy == Strategy::Retain {
        if let Some(budget) = job.memory_budget_bytes {
            // 8 bytes of accumulation plus 1 byte of flow direction per cell
            let needed = present.len() as u64 * tile_cells as u64 * 9;
            if needed > budget {
                warnings.push(format!(
                    "retain needs about {needed} bytes of intermediates but the memory \
                     budget is {budget}; consider cache or evict"
                ));
            }
        }
    }

    let assignment = assign_tiles(present.len(), job.workers);
    let ctx = WorkerContext {
        layout: &layout,
        weights: weights_layout.as_ref(),
        strategy: job.strategy,
        cache_dir: job.cache_dir.as_deref(),
        output_dir: &job.output_dir,
    };

    let mut counters = Counters::default();
    let mut per_tile: Vec<TileTx> = present
        .iter()
        .map(|t| TileTx {
            row: t.row,
            col: t.col,
            perimeter_cells: perimeter,
            stage1_payload_bytes: 0,
            stage2_payload_bytes: 0,
        })
        .collect();
    let mut timings = Timings::default();
    let mut producer_peak_alloc_cells = 0u64;

    let tile_index: HashMap<TileId, usize> = present
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, i))
        .collect();

    let report_body = std::thread::scope(|scope| -> Result<()> {
        let (result_tx, result_rx) = std::sync::mpsc::channel::<WorkerResult>();
        let mut job_txs = Vec::with_capacity(job.workers);
        for _ in 0..job.workers {
            let (tx, rx) = std::sync::mpsc::channel::<Vec<u8>>();
            job_txs.push(tx);
            let results = result_tx.clone();
            let ctx = &ctx;
            scope.spawn(move || worker_loop(ctx, rx, results));
        }
        drop(result_tx);

        // stage 1: delegate every tile, then block collecting payloads
        let t_stage1 = Instant::now();
        for (worker, tiles) in assignment.iter().enumerate() {
            for &i in tiles {
                let frame = Message::Job { tile: present[i] }.encode();
                counters.envelope_bytes += ENVELOPE_BYTES;
                job_txs[worker]
                    .send(frame)
                    .map_err(|_| Error::Protocol("worker hung up before stage 1".into()))?;
            }
        }
        let mut payloads: Vec<Option<PerimeterPayload>> = vec![None; present.len()];
        for _ in 0..present.len() {
            match recv_result(&result_rx)? {
                WorkerResult::Stage1 { frame, io } => {
                    counters.io.merge(&io);
                    counters.envelope_bytes += ENVELOPE_BYTES;
                    counters.stage1_messages += 1;
                    let msg = Message::decode(&frame)?;
                    let tile = msg.tile();
                    let i = *tile_index
                        .get(&tile)
                        .ok_or_else(|| Error::Protocol(format!("payload for unknown tile {tile}")))?;
                    let body = msg.body();
                    counters.stage1_payload_bytes += body.len() as u64;
                    per_tile[i].stage1_payload_bytes = body.len() as u64;
                    let payload = PerimeterPayload::decode(body, perimeter)?;
                    if payloads[i].replace(payload).is_some() {
                        return Err(Error::Protocol(format!(
                            "tile {tile} sent more than one perimeter payload"
                        )));
                    }
                }
                WorkerResult::Stage2 { tile, .. } => {
                    return Err(Error::Protocol(format!(
                        "tile {tile} finalized before the global solve"
                    )));
                }
                WorkerResult::Failed { tile, error } => {
                    return Err(Error::Worker {
                        tile: tile.to_string(),
                        source: Box::new(error),
                    });
                }
            }
        }
        timings.stage1_seconds = t_stage1.elapsed().as_secs_f64();

        // global solve over perimeter data only
        let t_global = Instant::now();
        let payloads: Vec<PerimeterPayload> =
            payloads.into_iter().map(|p| p.expect("all collected")).collect();
        let graph = build_graph(&layout, &payloads)?;
        producer_peak_alloc_cells = graph.node_count() as u64;
        let offsets = solve_global(&graph)?;
        drop(graph);
        drop(payloads);
        timings.global_solve_seconds = t_global.elapsed().as_secs_f64();

        // stage 2: send each tile's offsets to its stage-1 worker
        let t_stage2 = Instant::now();
        for (worker, tiles) in assignment.iter().enumerate() {
            for &i in tiles {
                let body = offsets[i].encode();
                counters.stage2_payload_bytes += body.len() as u64;
                counters.envelope_bytes += ENVELOPE_BYTES;
                counters.stage2_messages += 1;
                per_tile[i].stage2_payload_bytes = body.len() as u64;
                let frame = Message::Offsets {
                    tile: present[i],
                    body,
                }
                .encode();
                job_txs[worker]
                    .send(frame)
                    .map_err(|_| Error::Protocol("worker hung up before stage 2".into()))?;
            }
        }
        drop(job_txs);
        for _ in 0..present.len() {
            match recv_result(&result_rx)? {
                WorkerResult::Stage2 { io, .. } => counters.io.merge(&io),
                WorkerResult::Stage1 { .. } => {
                    return Err(Error::Protocol("unexpected stage-1 payload".into()));
                }
                WorkerResult::Failed { tile, error } => {
                    return Err(Error::Worker {
                        tile: tile.to_string(),
                        source: Box::new(error),
                    });
                }
            }
        }
        timings.stage2_seconds = t_stage2.elapsed().as_secs_f64();
        Ok(())
    });
    report_body?;

    write_output_manifest(&layout, &present, &job.output_dir)?;

    timings.total_seconds = t_start.elapsed().as_secs_f64();
    let cells_total = present.len() as u64 * tile_cells as u64;
    let io = &counters.io;
    let derived = Derived {
        reads_per_cell: (io.flowdir_cells_read + io.cache_cells_read) as f64 / cells_total as f64,
        writes_per_cell: (io.accum_cells_written + io.cache_cells_written) as f64
            / cells_total as f64,
        mean_tx_per_tile_bytes: (counters.stage1_payload_bytes + counters.stage2_payload_bytes)
            as f64
            / present.len() as f64,
    };

    Ok(RunReport {
        strategy: job.strategy,
        workers: job.workers,
        dem_width: layout.dem_width(),
        dem_height: layout.dem_height(),
        tile_width: layout.tile_width(),
        tile_height: layout.tile_height(),
        tiles_present: present.len(),
        cells_total,
        counters,
        per_tile,
        derived,
        timings,
        producer_peak_alloc_cells,
        warnings,
    })
}

fn recv_result(rx: &Receiver<WorkerResult>) -> Result<WorkerResult> {
    rx.recv()
        .map_err(|_| Error::Protocol("a worker disconnected before completing".into()))
}

fn write_output_manifest(
    layout: &TileLayout,
    present: &[TileId],
    output_dir: &Path,
) -> Result<()> {
    let mut tiles = vec![vec![None; layout.grid_cols()]; layout.grid_rows()];
    for &tile in present {
        tiles[tile.row][tile.col] = Some(output_tile_name(tile));
    }
    let manifest = store::Manifest {
        version: store::MANIFEST_VERSION,
        dem_width: layout.dem_width(),
        dem_height: layout.dem_height(),
        tile_width: layout.tile_width(),
        tile_height: layout.tile_height(),
        tiles,
    };
    manifest.save(&output_dir.join("manifest.json"))
}
