use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run_or_record, RunRecord};
use crate::budget::MemoryBudget;
use crate::error::{MimError, Result};

/// Median seed error at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub median_error: f64,
    pub failures: usize,
}

/// Estimated threshold `n*(d)`; censored when the grid maximum never reached the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub d: usize,
    pub n_star: Option<usize>,
    pub censored: bool,
    pub evaluations: Vec<GridPoint>,
}

/// Least-squares fit `log n* = intercept + slope · log d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Absent with only two points.
    pub slope_se: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub link: String,
    pub r: usize,
    pub schedule: String,
    pub target_error: f64,
    pub rows: Vec<ThresholdRow>,
    pub fit: Option<SlopeFit>,
    pub warnings: Vec<String>,
}

impl ThresholdTable {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| MimError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MimError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolated quantile of unsorted values; NaN when empty.
pub(crate) fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Fits the scaling slope over uncensored `(d, n*)` points.
///
/// Points are sorted by `d` before summation, so permuting the input gives
/// bit-identical output.
pub fn fit_slope(points: &[(usize, usize)]) -> Result<SlopeFit> {
    let distinct: BTreeSet<usize> = points.iter().map(|p| p.0).collect();
    if distinct.len() < 2 {
        return Err(MimError::InsufficientGrid(format!(
            "slope fit needs at least 2 distinct d, got {}",
            distinct.len()
        )));
    }
    let mut pts = points.to_vec();
    pts.sort_unstable();
    let xs: Vec<f64> = pts.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| (p.1 as f64).ln()).collect();
    let m = pts.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = (pts.len() > 2).then(|| {
        let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (m - 2.0) / sxx).sqrt()
    });
    Ok(SlopeFit {
        slope,
        intercept,
        slope_se,
        points: pts.len(),
    })
}

/// Appends records to a JSON-lines file.
pub struct RecordWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl RecordWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| MimError::io(&path, e))?;
        Ok(RecordWriter {
            out: BufWriter::new(file),
            path,
        })
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<()> {
        let line = serde_json::to_string(record)?;
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| MimError::io(&self.path, e))
    }
}

/// Reads a JSON-lines record file; blank lines are skipped.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| MimError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| MimError::CorruptHeader(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

struct Evaluator<'a> {
    cfg: &'a ExperimentConfig,
    budget: MemoryBudget,
    sink: &'a mut dyn FnMut(&RunRecord) -> Result<()>,
}

impl Evaluator<'_> {
    /// Runs every seed at `(d, n)` in parallel and hands records to the sink in seed order.
    fn eval(&mut self, d: usize, n: usize) -> Result<GridPoint> {
        let specs: Vec<_> = self.cfg.seeds.iter().map(|&s| self.cfg.instance(d, n, s)).collect();
        let budget = self.budget;
        let records: Vec<RunRecord> = specs.par_iter().map(|s| run_or_record(s, budget)).collect();
        for r in &records {
            (self.sink)(r)?;
        }
        let errors: Vec<f64> = records.iter().map(RunRecord::effective_error).collect();
        Ok(GridPoint {
            n,
            median_error: median(&errors),
            failures: records.iter().filter(|r| r.error.is_none()).count(),
        })
    }

    /// Evaluates every grid size.
    fn full_grid(&mut self, d: usize, grid: &[usize]) -> Result<ThresholdRow> {
        let mut evaluations = Vec::new();
        for &n in grid {
            evaluations.push(self.eval(d, n)?);
        }
        let n_star = evaluations
            .iter()
            .find(|p| p.median_error <= self.cfg.target_error)
            .map(|p| p.n);
        Ok(ThresholdRow {
            d,
            n_star,
            censored: n_star.is_none(),
            evaluations,
        })
    }

    /// Doubles `n` along the √2 grid until the target is met, then checks the
    /// one grid point in between.
    fn search(&mut self, d: usize, grid: &[usize]) -> Result<ThresholdRow> {
        let eps = self.cfg.target_error;
        let mut evaluations = Vec::new();
        let mut j = 0;
        let mut last_fail = None;
        let mut pass = None;
        loop {
            let p = self.eval(d, grid[j])?;
            let ok = p.median_error <= eps;
            evaluations.push(p);
            if ok {
                pass = Some(j);
                break;
            }
            last_fail = Some(j);
            if j + 1 == grid.len() {
                break;
            }
            j = (j + 2).min(grid.len() - 1);
        }
        if let (Some(hi), Some(lo)) = (pass, last_fail) {
            if hi - lo == 2 {
                let p = self.eval(d, grid[lo + 1])?;
                let ok = p.median_error <= eps;
                evaluations.push(p);
                if ok {
                    pass = Some(lo + 1);
                }
            }
        }
        evaluations.sort_by_key(|p| p.n);
        Ok(ThresholdRow {
            d,
            n_star: pass.map(|j| grid[j]),
            censored: pass.is_none(),
            evaluations,
        })
    }
}

fn table(cfg: &ExperimentConfig, rows: Vec<ThresholdRow>) -> ThresholdTable {
    let mut warnings = Vec::new();
    for r in rows.iter().filter(|r| r.censored) {
        warnings.push(format!("d = {}: target error not reached on the grid; excluded from the fit", r.d));
    }
    for r in &rows {
        if r.n_star.is_some() && r.n_star == r.evaluations.first().map(|p| p.n) {
            warnings.push(format!("d = {}: target met at the smallest grid size; threshold may be lower", r.d));
        }
    }
    let points: Vec<(usize, usize)> = rows.iter().filter_map(|r| r.n_star.map(|n| (r.d, n))).collect();
    let fit = match fit_slope(&points) {
        Ok(f) => Some(f),
        Err(e) => {
            warnings.push(format!("no slope fit: {e}"));
            None
        }
    };
    ThresholdTable {
        link: cfg.model.link.clone(),
        r: cfg.model.r,
        schedule: cfg.estimator.tag(),
        target_error: cfg.target_error,
        rows,
        fit,
        warnings,
    }
}

fn distinct_dims(cfg: &ExperimentConfig) -> Vec<usize> {
    cfg.model.d.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Threshold search over every `d`: smallest grid `n` whose median error over
/// seeds is at most the target, then a log-log slope fit.
///
/// Needs a `search` grid, at least 3 distinct `d` and at least 3 seeds.
pub fn threshold_sweep(cfg: &ExperimentConfig, sink: &mut dyn FnMut(&RunRecord) -> Result<()>) -> Result<ThresholdTable> {
    threshold_sweep_with(cfg, MemoryBudget::from_env(), sink)
}

pub fn threshold_sweep_with(
    cfg: &ExperimentConfig,
    budget: MemoryBudget,
    sink: &mut dyn FnMut(&RunRecord) -> Result<()>,
) -> Result<ThresholdTable> {
    cfg.validate_with(&budget)?;
    let dims = distinct_dims(cfg);
    if dims.len() < 3 || cfg.seeds.len() < 3 {
        return Err(MimError::InsufficientGrid(format!(
            "threshold sweep needs ≥ 3 distinct d and ≥ 3 seeds, got {} and {}",
            dims.len(),
            cfg.seeds.len()
        )));
    }
    let search = cfg
        .grid
        .search
        .ok_or_else(|| MimError::InsufficientGrid("threshold sweep needs a search grid".into()))?;
    let grid = search.grid();
    let mut ev = Evaluator { cfg, budget, sink };
    let mut rows = Vec::new();
    for d in dims {
        rows.push(ev.search(d, &grid)?);
    }
    Ok(table(cfg, rows))
}

/// Runs a config: a threshold search when it has one, otherwise every
/// `(d, n, seed)` of the fixed grid.
pub fn sweep(cfg: &ExperimentConfig, budget: MemoryBudget, sink: &mut dyn FnMut(&RunRecord) -> Result<()>) -> Result<ThresholdTable> {
    if cfg.grid.search.is_some() {
        return threshold_sweep_with(cfg, budget, sink);
    }
    cfg.validate_with(&budget)?;
    let mut grid = cfg.grid.n.clone();
    grid.sort_unstable();
    grid.dedup();
    let mut ev = Evaluator { cfg, budget, sink };
    let mut rows = Vec::new();
    for d in distinct_dims(cfg) {
        rows.push(ev.full_grid(d, &grid)?);
    }
    Ok(table(cfg, rows))
}

/// [`sweep`] writing `records.jsonl` and `thresholds.json` (or the configured names) under `out_dir`.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<ThresholdTable> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| MimError::io(out_dir, e))?;
    let mut writer = RecordWriter::create(out_dir.join(&cfg.output.records))?;
    let table = sweep(cfg, MemoryBudget::from_env(), &mut |r| writer.append(r))?;
    table.write(out_dir.join(&cfg.output.thresholds))?;
    Ok(table)
}
