//! Build figure inputs from the CSV artifacts.

use std::path::{Path, PathBuf};

use induction_lens_core::{Error, Result};

use crate::csvio::{self, CsvFile};
use crate::svg::{CurveSeries, HeatGrid};

/// A heat grid from a table CSV (layer,head,mean,count) or from sweep-cell
/// rows (step,layer,head,metric,value).
pub fn heatmap_from_csv(path: &Path) -> Result<HeatGrid> {
    let f = csvio::read_csv(path)?;
    let seed = f
        .meta
        .get("seed")
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let title = title_from_meta(&f, path);
    let (lcol, hcol) = (csvio::col(&f, "layer")?, csvio::col(&f, "head")?);
    let vcol = csvio::col(&f, "mean")
        .or_else(|_| csvio::col(&f, "value"))
        .or_else(|_| csvio::col(&f, "count"))?;
    let mut cells: Vec<(usize, usize, Option<f64>)> = Vec::new();
    for row in &f.rows {
        let (l, h) = match (row[lcol].parse::<usize>(), row[hcol].parse::<usize>()) {
            (Ok(l), Ok(h)) => (l, h),
            _ => continue, // model-level rows have empty layer/head
        };
        cells.push((l, h, row[vcol].parse::<f64>().ok()));
    }
    if cells.is_empty() {
        return Err(Error::Input(format!(
            "{} holds no per-head rows",
            path.display()
        )));
    }
    let n_layers = cells.iter().map(|c| c.0).max().unwrap() + 1;
    let n_heads = cells.iter().map(|c| c.1).max().unwrap() + 1;
    let mut values = vec![None; n_layers * n_heads];
    for (l, h, v) in cells {
        values[l * n_heads + h] = v;
    }
    Ok(HeatGrid {
        title,
        n_layers,
        n_heads,
        values,
        seed,
    })
}

fn title_from_meta(f: &CsvFile, path: &Path) -> String {
    let mut parts: Vec<String> = Vec::new();
    if let Some(r) = f.meta.get("relation") {
        parts.push(r.clone());
    }
    if let Some(d) = f.meta.get("direction") {
        parts.push(d.clone());
    }
    if let Some(a) = f.meta.get("analysis") {
        parts.push(a.clone());
    }
    if parts.is_empty() {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    } else {
        parts.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    All,
    TopByFinal(usize),
}

impl std::str::FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Selection::All);
        }
        if let Some(n) = s.strip_prefix("top") {
            let n: usize = n
                .parse()
                .map_err(|_| Error::Input(format!("bad selection {s:?}")))?;
            return Ok(Selection::TopByFinal(n));
        }
        Err(Error::Input(format!(
            "unknown selection {s:?} (use all or topN)"
        )))
    }
}

/// Gather per-head series of one metric from sweep-cell CSVs. `inputs` are
/// files or directories (directories are scanned for `*.csv`).
pub fn curves_from_sweep(
    inputs: &[PathBuf],
    metric: &str,
    selection: Selection,
) -> Result<Vec<CurveSeries>> {
    let mut files: Vec<PathBuf> = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(input.clone());
        }
    }
    let mut points: std::collections::BTreeMap<(usize, usize), Vec<(u64, f64)>> =
        Default::default();
    let mut metric_seen = false;
    for file in &files {
        let f = csvio::read_csv(file)?;
        let (scol, lcol, hcol, mcol, vcol) = (
            csvio::col(&f, "step")?,
            csvio::col(&f, "layer")?,
            csvio::col(&f, "head")?,
            csvio::col(&f, "metric")?,
            csvio::col(&f, "value")?,
        );
        for row in &f.rows {
            if row[mcol] != metric {
                continue;
            }
            metric_seen = true;
            let step: u64 = match row[scol].parse() {
                Ok(s) => s,
                Err(_) => continue,
            };
            let (l, h) = match (row[lcol].parse(), row[hcol].parse()) {
                (Ok(l), Ok(h)) => (l, h),
                _ => (0, 0), // model-level metric: single series
            };
            if let Ok(v) = row[vcol].parse::<f64>() {
                points.entry((l, h)).or_default().push((step, v));
            }
        }
    }
    if !metric_seen {
        return Err(Error::Input(format!("metric {metric:?} not found")));
    }
    let mut series: Vec<CurveSeries> = points
        .into_iter()
        .map(|((layer, head), mut pts)| {
            pts.sort_by_key(|&(s, _)| s);
            pts.dedup_by_key(|&mut (s, _)| s);
            CurveSeries {
                layer,
                head,
                points: pts,
            }
        })
        .collect();
    if let Selection::TopByFinal(n) = selection {
        series.sort_by(|a, b| {
            let fa = a.points.last().map(|p| p.1).unwrap_or(f64::NEG_INFINITY);
            let fb = b.points.last().map(|p| p.1).unwrap_or(f64::NEG_INFINITY);
            fb.partial_cmp(&fa)
                .unwrap()
                .then((a.layer, a.head).cmp(&(b.layer, b.head)))
        });
        series.truncate(n);
        series.sort_by_key(|s| (s.layer, s.head));
    }
    Ok(series)
}

/// Largest step present across series (default color reference).
pub fn last_step(series: &[CurveSeries]) -> u64 {
    series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_parses() {
        assert_eq!("all".parse::<Selection>().unwrap(), Selection::All);
        assert_eq!(
            "top16".parse::<Selection>().unwrap(),
            Selection::TopByFinal(16)
        );
        assert!("bogus".parse::<Selection>().is_err());
    }

    #[test]
    fn curves_collect_and_select() {
        let dir = tempfile::tempdir().unwrap();
        for (step, vals) in [(100u64, [0.1, 0.9]), (200, [0.3, 0.7])] {
            let rows: Vec<String> = vals
                .iter()
                .enumerate()
                .map(|(h, v)| format!("{step},0,{h},copying,{v}"))
                .collect();
            crate::csvio::write_csv(
                &dir.path().join(format!("{step}_copying.csv")),
                "sweep-cell-v1",
                1,
                &[],
                "step,layer,head,metric,value",
                &rows,
            )
            .unwrap();
        }
        let series =
            curves_from_sweep(&[dir.path().to_path_buf()], "copying", Selection::All).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].points, vec![(100, 0.1), (200, 0.3)]);
        assert_eq!(last_step(&series), 200);
        let top1 = curves_from_sweep(
            &[dir.path().to_path_buf()],
            "copying",
            Selection::TopByFinal(1),
        )
        .unwrap();
        assert_eq!(top1.len(), 1);
        assert_eq!(top1[0].head, 1, "head 1 has the larger final value");
    }
}
