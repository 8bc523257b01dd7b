use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::RunRecord;
use super::sweep::{median, quantile, read_records, ThresholdTable};
use crate::error::{MimError, Result};

/// Column order of `results.csv`.
pub const RESULTS_HEADER: [&str; 12] = [
    "link",
    "r",
    "d",
    "n",
    "k_star_declared",
    "schedule",
    "kernel",
    "seed",
    "error",
    "runtime_ms",
    "path",
    "censored",
];

/// One row of `aggregate.csv`: a configuration summarized over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub link: String,
    pub r: usize,
    pub d: usize,
    pub n: usize,
    pub schedule: String,
    pub kernel: String,
    pub runs: usize,
    pub failures: usize,
    pub median_error: f64,
    pub q25_error: f64,
    pub q75_error: f64,
    pub iqr_error: f64,
    pub median_runtime_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ReportSummary {
    pub records: usize,
    pub aggregates: Vec<AggregateRow>,
    pub files: Vec<PathBuf>,
}

type GroupKey = (String, usize, usize, String, String, usize);

fn group_key(r: &RunRecord) -> GroupKey {
    (r.link.clone(), r.r, r.d, r.schedule.clone(), r.kernel.clone(), r.n)
}

/// Medians and IQRs of successful runs, grouped by everything except the seed.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(group_key(r)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((link, r, d, schedule, kernel, n), runs)| {
            let errors: Vec<f64> = runs.iter().filter_map(|r| r.error).collect();
            let times: Vec<f64> = runs.iter().map(|r| r.runtime_ms as f64).collect();
            let (q25, q75) = (quantile(&errors, 0.25), quantile(&errors, 0.75));
            AggregateRow {
                link,
                r,
                d,
                n,
                schedule,
                kernel,
                runs: runs.len(),
                failures: runs.len() - errors.len(),
                median_error: median(&errors),
                q25_error: q25,
                q75_error: q75,
                iqr_error: q75 - q25,
                median_runtime_ms: median(&times),
            }
        })
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> MimError {
    MimError::io(path, std::io::Error::other(e))
}

fn write_results(path: &Path, records: &[RunRecord], censored_d: &BTreeSet<usize>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(RESULTS_HEADER).map_err(|e| csv_err(path, e))?;
    for r in records {
        let row = [
            r.link.clone(),
            r.r.to_string(),
            r.d.to_string(),
            r.n.to_string(),
            r.k_star_declared.map(|k| k.to_string()).unwrap_or_default(),
            r.schedule.clone(),
            r.kernel.clone(),
            r.seed.to_string(),
            r.error.map(|e| e.to_string()).unwrap_or_default(),
            r.runtime_ms.to_string(),
            r.path.clone(),
            censored_d.contains(&r.d).to_string(),
        ];
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| MimError::io(path, e))
}

fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    if rows.is_empty() {
        w.write_record([
            "link",
            "r",
            "d",
            "n",
            "schedule",
            "kernel",
            "runs",
            "failures",
            "median_error",
            "q25_error",
            "q75_error",
            "iqr_error",
            "median_runtime_ms",
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| MimError::io(path, e))
}

fn write_text(path: PathBuf, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| MimError::io(&path, e))?;
    files.push(path);
    Ok(())
}

/// `d n*` for every uncensored row, in `d` order.
pub fn threshold_series(table: &ThresholdTable) -> String {
    let mut out = format!("# {} r={} eps={} : d n_star\n", table.link, table.r, table.target_error);
    let mut rows: Vec<_> = table.rows.iter().filter_map(|r| r.n_star.map(|n| (r.d, n))).collect();
    rows.sort_unstable();
    for (d, n) in rows {
        let _ = writeln!(out, "{d} {n}");
    }
    out
}

/// Aggregates `<input>/records.jsonl` (and `<input>/thresholds.json` when
/// present) into CSV tables and plain-text xy series under `out`.
pub fn report(input: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<ReportSummary> {
    let (input, out) = (input.as_ref(), out.as_ref());
    let mut records = read_records(input.join("records.jsonl"))?;
    let thresholds_path = input.join("thresholds.json");
    let table = if thresholds_path.exists() {
        Some(ThresholdTable::read(&thresholds_path)?)
    } else {
        None
    };
    std::fs::create_dir_all(out).map_err(|e| MimError::io(out, e))?;
    records.sort_by(|a, b| group_key(a).cmp(&group_key(b)).then(a.seed.cmp(&b.seed)));
    let censored_d: BTreeSet<usize> = table
        .iter()
        .flat_map(|t| t.rows.iter().filter(|r| r.censored).map(|r| r.d))
        .collect();

    let mut files = Vec::new();
    let results = out.join("results.csv");
    write_results(&results, &records, &censored_d)?;
    files.push(results);
    let aggregates = aggregate(&records);
    let agg_path = out.join("aggregate.csv");
    write_aggregate(&agg_path, &aggregates)?;
    files.push(agg_path);

    let mut curves: BTreeMap<(String, usize, usize), String> = BTreeMap::new();
    for a in &aggregates {
        let text = curves
            .entry((a.link.clone(), a.r, a.d))
            .or_insert_with(|| "# n median_error\n".to_string());
        let _ = writeln!(text, "{} {}", a.n, a.median_error);
    }
    for ((link, r, d), text) in curves {
        write_text(out.join(format!("error_vs_n_{link}_r{r}_d{d}.xy")), &text, &mut files)?;
    }

    let mut seen = BTreeSet::new();
    for rec in &records {
        let Some(step) = rec.steps.first() else { continue };
        if !seen.insert(group_key(rec)) {
            continue;
        }
        let mut text = format!("# seed {} step 1 (k={}): index eigenvalue\n", rec.seed, step.k);
        for (i, v) in step.top_eigvals.iter().enumerate() {
            let _ = writeln!(text, "{} {v}", i + 1);
        }
        let name = format!("spectrum_{}_r{}_d{}_n{}.xy", rec.link, rec.r, rec.d, rec.n);
        write_text(out.join(name), &text, &mut files)?;
    }

    if let Some(t) = &table {
        write_text(out.join("threshold.xy"), &threshold_series(t), &mut files)?;
    }
    Ok(ReportSummary {
        records: records.len(),
        aggregates,
        files,
    })
}
