//! Report and CSV serialization. Everything is rendered in memory first so a
//! failed run leaves no partial output.

use std::path::Path;

use anyhow::{Context, Result};
use motorlink::{ExperimentReport, Metric};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Serialize)]
struct SeriesEntry<'a> {
    name: &'a str,
    file: String,
    columns: &'a [String],
    rows: usize,
}

#[derive(Serialize)]
struct ShapeEntry<'a> {
    index: usize,
    tag: &'a str,
    time_s: f64,
    nodes: usize,
}

#[derive(Serialize)]
struct Report<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'a str,
    metrics: &'a std::collections::BTreeMap<String, Metric>,
    series: Vec<SeriesEntry<'a>>,
    shapes: Vec<ShapeEntry<'a>>,
    config: &'a RunConfig,
}

/// Shortest representation that parses back to the same value.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// File name and contents of every output, in write order.
pub fn render(report: &ExperimentReport, cfg: &RunConfig) -> Result<Vec<(String, Vec<u8>)>> {
    let decimation = cfg.output.decimation.max(1);
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for s in &report.series {
        // Only time histories are thinned; frequency grids and tables are
        // kept whole.
        let thin = s.columns.first().is_some_and(|c| c == "time_s");
        let rows: Vec<&Vec<f64>> = s
            .rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !thin || i % decimation == 0)
            .map(|(_, r)| r)
            .collect();
        let file = format!("{}.csv", s.name);
        let n = rows.len();
        files.push((
            file.clone(),
            csv_bytes(&s.columns, rows.into_iter().map(|r| r.iter().map(|x| num(*x)).collect()))?,
        ));
        entries.push(SeriesEntry {
            name: &s.name,
            file,
            columns: &s.columns,
            rows: n,
        });
    }

    let header: Vec<String> = ["time_s", "node_index", "x_m", "y_m"].iter().map(|c| c.to_string()).collect();
    let rows = report.shapes.iter().flat_map(|shape| {
        shape
            .nodes
            .iter()
            .enumerate()
            .map(move |(k, p)| vec![num(shape.time), k.to_string(), num(p[0]), num(p[1])])
    });
    files.push(("shapes.csv".into(), csv_bytes(&header, rows)?));

    let shapes = report
        .shapes
        .iter()
        .enumerate()
        .map(|(index, s)| ShapeEntry {
            index,
            tag: &s.tag,
            time_s: s.time,
            nodes: s.nodes.len(),
        })
        .collect();
    let doc = Report {
        tool: "motorlink",
        version: env!("CARGO_PKG_VERSION"),
        experiment: &report.experiment,
        metrics: &report.metrics,
        series: entries,
        shapes,
        config: cfg,
    };
    let mut json = serde_json::to_vec_pretty(&doc)?;
    json.push(b'\n');
    files.push(("report.json".into(), json));
    Ok(files)
}

pub fn write(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
