use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KSpec, PipelineError, StageEvent};

pub const TABLES_HEADER: &str = "system,clean_ter,noisy_ter,clean_werr,noisy_werr";
pub const GRID_HEADER: &str = "temperature,k,clean_ter,noisy_ter,clean_werr,noisy_werr";
pub const SIZE_HEADER: &str = "multiplier,clean_ter,noisy_ter,clean_werr,noisy_werr";
const PLOT_HEADER: &str = "x,y,series";

/// Relative error rate change in percent; negative is an improvement.
pub fn werr(baseline_ter: f64, system_ter: f64) -> Result<f64, PipelineError> {
    if !(baseline_ter > 0.0) {
        return Err(PipelineError::ZeroBaseline(baseline_ter));
    }
    Ok(100.0 * (system_ter - baseline_ter) / baseline_ter)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRow {
    pub system: String,
    pub clean_ter: f64,
    pub noisy_ter: f64,
    /// Empty when the baseline TER is zero.
    pub clean_werr: Option<f64>,
    pub noisy_werr: Option<f64>,
}

impl SystemRow {
    pub fn new(system: impl Into<String>, clean_ter: f64, noisy_ter: f64, baseline: (f64, f64)) -> Self {
        Self {
            system: system.into(),
            clean_ter,
            noisy_ter,
            clean_werr: werr(baseline.0, clean_ter).ok(),
            noisy_werr: werr(baseline.1, noisy_ter).ok(),
        }
    }
}

/// Main results table of one seed. Timings are kept out so reruns compare
/// byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_hash: String,
    pub systems: Vec<SystemRow>,
}

impl RunReport {
    pub fn system(&self, name: &str) -> Option<&SystemRow> {
        self.systems.iter().find(|s| s.system == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub clean_ter: f64,
    pub noisy_ter: f64,
    pub clean_werr: Option<f64>,
    pub noisy_werr: Option<f64>,
}

impl SeedScore {
    pub fn new(seed: u64, clean_ter: f64, noisy_ter: f64, baseline: (f64, f64)) -> Self {
        Self {
            seed,
            clean_ter,
            noisy_ter,
            clean_werr: werr(baseline.0, clean_ter).ok(),
            noisy_werr: werr(baseline.1, noisy_ter).ok(),
        }
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(v.into_iter()))
}

/// Seed-averaged summary shared by grid and size rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanScore {
    pub clean_ter: f64,
    pub noisy_ter: f64,
    pub clean_werr: Option<f64>,
    pub noisy_werr: Option<f64>,
}

impl MeanScore {
    pub fn of(scores: &[SeedScore]) -> Self {
        Self {
            clean_ter: mean(scores.iter().map(|s| s.clean_ter)),
            noisy_ter: mean(scores.iter().map(|s| s.noisy_ter)),
            clean_werr: mean_opt(scores.iter().map(|s| s.clean_werr)),
            noisy_werr: mean_opt(scores.iter().map(|s| s.noisy_werr)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub temperature: f64,
    pub k: KSpec,
    pub scores: Vec<SeedScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub temperature: f64,
    pub k: KSpec,
    pub clean_ter: f64,
    pub noisy_ter: f64,
    pub clean_werr: Option<f64>,
    pub noisy_werr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub n_classes: usize,
    pub seeds: Vec<u64>,
    pub cells: Vec<GridCell>,
}

impl GridReport {
    pub fn rows(&self) -> Vec<GridRow> {
        self.cells
            .iter()
            .map(|c| {
                let m = MeanScore::of(&c.scores);
                GridRow {
                    temperature: c.temperature,
                    k: c.k,
                    clean_ter: m.clean_ter,
                    noisy_ter: m.noisy_ter,
                    clean_werr: m.clean_werr,
                    noisy_werr: m.noisy_werr,
                }
            })
            .collect()
    }
}

/// Flatness of the `T = 1` row: the spread of seed-mean noisy TER across `k`,
/// and the mean across-seed spread of each cell. `None` without `T = 1` cells.
pub fn t1_flatness(grid: &GridReport) -> Option<(f64, f64)> {
    let cells: Vec<&GridCell> = grid.cells.iter().filter(|c| c.temperature == 1.0).collect();
    if cells.is_empty() {
        return None;
    }
    let spread = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        hi - lo
    };
    let means: Vec<f64> = cells
        .iter()
        .map(|c| MeanScore::of(&c.scores).noisy_ter)
        .collect();
    let k_spread = spread(&mut means.iter().copied());
    let seed_spread = mean(
        cells
            .iter()
            .map(|c| spread(&mut c.scores.iter().map(|s| s.noisy_ter))),
    );
    Some((k_spread, seed_spread))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub multiplier: usize,
    pub scores: Vec<SeedScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub multiplier: usize,
    pub clean_ter: f64,
    pub noisy_ter: f64,
    pub clean_werr: Option<f64>,
    pub noisy_werr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub temperature: f64,
    pub k: KSpec,
    pub seeds: Vec<u64>,
    pub points: Vec<SizePoint>,
}

impl SizeReport {
    pub fn rows(&self) -> Vec<SizeRow> {
        self.points
            .iter()
            .map(|p| {
                let m = MeanScore::of(&p.scores);
                SizeRow {
                    multiplier: p.multiplier,
                    clean_ter: m.clean_ter,
                    noisy_ter: m.noisy_ter,
                    clean_werr: m.clean_werr,
                    noisy_werr: m.noisy_werr,
                }
            })
            .collect()
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::io(path.display().to_string(), e)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> PipelineError + '_ {
    move |e| PipelineError::io(path.display().to_string(), std::io::Error::other(e))
}

fn write_csv<T: Serialize>(path: &Path, header: &str, rows: &[T]) -> Result<(), PipelineError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    let body = w.into_inner().map_err(|e| io_err(path)(e.into_error()))?;
    let mut out = Vec::with_capacity(header.len() + 1 + body.len());
    out.extend_from_slice(header.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&body);
    fs::write(path, out).map_err(io_err(path))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &str) -> Result<Vec<T>, PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let found = r.headers().map_err(csv_err(path))?.iter().collect::<Vec<_>>().join(",");
    if found != header {
        return Err(PipelineError::io(
            path.display().to_string(),
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("unexpected header {found:?}")),
        ));
    }
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(io_err(path))
}

#[derive(Serialize)]
struct PlotPoint {
    x: f64,
    y: Option<f64>,
    series: String,
}

/// `report.json` and `tables.csv`.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join("report.json"), report)?;
    write_csv(&dir.join("tables.csv"), TABLES_HEADER, &report.systems)
}

/// `grid.json`, `grid.csv` and `plot_grid.csv` (x = k, y = noisy WERR, one
/// series per temperature).
pub fn emit_grid(grid: &GridReport, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join("grid.json"), grid)?;
    let rows = grid.rows();
    write_csv(&dir.join("grid.csv"), GRID_HEADER, &rows)?;
    let plot: Vec<PlotPoint> = rows
        .iter()
        .map(|r| PlotPoint {
            x: r.k.resolve(grid.n_classes) as f64,
            y: r.noisy_werr,
            series: format!("T={}", r.temperature),
        })
        .collect();
    write_csv(&dir.join("plot_grid.csv"), PLOT_HEADER, &plot)
}

/// `size.json`, `size.csv` and `plot_size.csv` (x = multiplier, y = WERR,
/// series clean and noisy).
pub fn emit_size(size: &SizeReport, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join("size.json"), size)?;
    let rows = size.rows();
    write_csv(&dir.join("size.csv"), SIZE_HEADER, &rows)?;
    let mut plot = Vec::new();
    for (series, pick) in [
        ("clean", (|r: &SizeRow| r.clean_werr) as fn(&SizeRow) -> Option<f64>),
        ("noisy", |r: &SizeRow| r.noisy_werr),
    ] {
        plot.extend(rows.iter().map(|r| PlotPoint {
            x: r.multiplier as f64,
            y: pick(r),
            series: series.to_string(),
        }));
    }
    write_csv(&dir.join("plot_size.csv"), PLOT_HEADER, &plot)
}

pub fn write_timings(events: &[StageEvent], dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join("timings.json"), &events)
}

pub fn read_tables_csv(path: &Path) -> Result<Vec<SystemRow>, PipelineError> {
    read_csv(path, TABLES_HEADER)
}

pub fn read_grid_csv(path: &Path) -> Result<Vec<GridRow>, PipelineError> {
    read_csv(path, GRID_HEADER)
}

pub fn read_size_csv(path: &Path) -> Result<Vec<SizeRow>, PipelineError> {
    read_csv(path, SIZE_HEADER)
}
