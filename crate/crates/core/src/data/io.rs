use std::path::Path;

use ndarray::Array2;

use super::fmt_value;
use crate::error::{Error, Result};
use crate::graph::{read_edge_list, Graph};
use crate::panel::Panel;

/// Cell value treated as missing in traffic-speed panels.
pub const DEFAULT_MISSING_SENTINEL: f64 = 0.0;

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

fn parse_f64(file: &str, row: usize, what: &str, cell: &str) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| Error::format(file, format!("row {row}: non-numeric {what} `{cell}`")))
}

fn parse_i64(file: &str, row: usize, cell: &str) -> Result<i64> {
    cell.trim()
        .parse::<i64>()
        .map_err(|_| Error::format(file, format!("row {row}: timestamp `{cell}` is not an integer")))
}

/// One labeled univariate series: columns `value` and `is_anomaly` (or
/// `anomaly`), plus an optional `timestamp` or `index` column. Without one,
/// rows are numbered from 0. The node id is the file stem. Empty value cells
/// are missing.
pub fn read_yahoo_file(path: &Path) -> Result<Panel> {
    let file = path.display().to_string();
    let mut r = reader(path)?;
    let headers = r.headers().map_err(|e| Error::format(&file, e.to_string()))?.clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim()));
    let ts_col = col(&["timestamp", "index"]);
    let value_col = col(&["value"]).ok_or_else(|| Error::format(&file, "missing column `value`"))?;
    let label_col =
        col(&["is_anomaly", "anomaly"]).ok_or_else(|| Error::format(&file, "missing column `is_anomaly`"))?;
    let (mut ts, mut vals, mut mask, mut labels) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, rec) in r.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::format(&file, e.to_string()))?;
        ts.push(match ts_col {
            Some(c) => parse_i64(&file, row, rec.get(c).unwrap_or(""))?,
            None => k as i64,
        });
        let cell = rec.get(value_col).unwrap_or("").trim();
        let observed = !cell.is_empty();
        vals.push(if observed { parse_f64(&file, row, "value", cell)? } else { f64::NAN });
        mask.push(observed);
        let lab = parse_f64(&file, row, "anomaly flag", rec.get(label_col).unwrap_or(""))? != 0.0;
        labels.push(lab && observed);
    }
    let n = vals.len();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file.clone());
    let shape = (1, n);
    Panel::new(
        vec![id],
        ts,
        Array2::from_shape_vec(shape, vals).expect("row"),
        Array2::from_shape_vec(shape, mask).expect("row"),
        Some(Array2::from_shape_vec(shape, labels).expect("row")),
    )
    .map_err(|e| Error::format(&file, e.to_string()))
}

/// Every `*.csv` file of a directory, in file-name order.
pub fn load_yahoo_csv(dir: &Path) -> Result<Vec<Panel>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::format(dir.display().to_string(), "no .csv files found"));
    }
    files.iter().map(|f| read_yahoo_file(f)).collect()
}

/// Stacks univariate panels into one, truncated to the shortest series and
/// re-indexed with ordinal timestamps.
pub fn assemble_panels(panels: &[Panel]) -> Result<Panel> {
    let len = panels
        .iter()
        .map(|p| p.len())
        .min()
        .ok_or_else(|| Error::Panel("no panels to assemble".into()))?;
    let parts: Vec<Panel> = panels
        .iter()
        .map(|p| {
            let p = p.truncate(len)?;
            Panel::new(
                p.node_ids().to_vec(),
                (0..len as i64).collect(),
                p.values().to_owned(),
                p.mask().to_owned(),
                Some(p.labels_or_empty()),
            )
        })
        .collect::<Result<_>>()?;
    Panel::stack(&parts)
}

fn value_cell(panel: &Panel, i: usize, t: usize) -> String {
    if panel.is_observed(i, t) {
        fmt_value(panel.values()[[i, t]])
    } else {
        String::new()
    }
}

/// Writes a single-node panel as `timestamp,value,is_anomaly`.
pub fn write_yahoo_csv(path: &Path, panel: &Panel) -> Result<()> {
    if panel.n_nodes() != 1 {
        return Err(Error::Shape(format!("expected one node, got {}", panel.n_nodes())));
    }
    let mut out = String::from("timestamp,value,is_anomaly\n");
    for t in 0..panel.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            panel.timestamps()[t],
            value_cell(panel, 0, t),
            u8::from(panel.is_anomaly(0, t))
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Wide panel: header `timestamp,<node ids…>`, one row per time step. Empty
/// cells, `nan` and cells equal to `missing_sentinel` are unobserved.
pub fn read_wide_csv(path: &Path, missing_sentinel: Option<f64>) -> Result<Panel> {
    let file = path.display().to_string();
    let mut r = reader(path)?;
    let headers = r.headers().map_err(|e| Error::format(&file, e.to_string()))?.clone();
    if headers.len() < 2 {
        return Err(Error::format(&file, "expected a timestamp column and at least one node column"));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let n = ids.len();
    let (mut ts, mut vals, mut mask) = (Vec::new(), Vec::new(), Vec::new());
    for (k, rec) in r.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::format(&file, e.to_string()))?;
        if rec.len() != n + 1 {
            return Err(Error::format(&file, format!("row {row}: expected {} cells, found {}", n + 1, rec.len())));
        }
        ts.push(parse_i64(&file, row, &rec[0])?);
        for cell in rec.iter().skip(1) {
            let cell = cell.trim();
            if cell.is_empty() {
                vals.push(f64::NAN);
                mask.push(false);
                continue;
            }
            let v = parse_f64(&file, row, "value", cell)?;
            let missing = v.is_nan() || missing_sentinel == Some(v);
            vals.push(if missing { f64::NAN } else { v });
            mask.push(!missing);
        }
    }
    let t = ts.len();
    // rows were read time-major
    let values = Array2::from_shape_vec((t, n), vals).expect("grid").reversed_axes();
    let mask = Array2::from_shape_vec((t, n), mask).expect("grid").reversed_axes();
    Panel::new(ids, ts, as_standard(values), as_standard(mask), None).map_err(|e| Error::format(&file, e.to_string()))
}

fn as_standard<T: Clone>(a: Array2<T>) -> Array2<T> {
    a.as_standard_layout().into_owned()
}

/// Writes values in the wide layout; unobserved cells are left empty.
pub fn write_wide_csv(path: &Path, panel: &Panel) -> Result<()> {
    let mut out = String::from("timestamp");
    for id in panel.node_ids() {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for t in 0..panel.len() {
        out.push_str(&panel.timestamps()[t].to_string());
        for i in 0..panel.n_nodes() {
            out.push(',');
            out.push_str(&value_cell(panel, i, t));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Labels in the wide layout (cells `0`/`1`), resolved against `panel`'s
/// node ids and timestamps. Returns the panel with those labels attached.
pub fn read_labels_csv(path: &Path, panel: &Panel) -> Result<Panel> {
    let file = path.display().to_string();
    let grid = read_wide_csv(path, None)?;
    if grid.timestamps() != panel.timestamps() {
        return Err(Error::format(&file, "label timestamps differ from the panel's"));
    }
    let mut labels = Array2::from_elem((panel.n_nodes(), panel.len()), false);
    for (k, id) in grid.node_ids().iter().enumerate() {
        let i = panel.node_index(id).ok_or_else(|| Error::UnknownNode(id.clone()))?;
        for t in 0..panel.len() {
            let v = grid.values()[[k, t]];
            labels[[i, t]] = grid.is_observed(k, t) && v != 0.0;
            if labels[[i, t]] && !panel.is_observed(i, t) {
                return Err(Error::format(
                    &file,
                    format!("label on missing observation (node `{id}`, row {})", t + 2),
                ));
            }
        }
    }
    panel.with_labels(Some(labels))
}

/// Writes the panel's labels (all zero when it has none) in the wide layout.
pub fn write_labels_csv(path: &Path, panel: &Panel) -> Result<()> {
    let labels = panel.labels_or_empty();
    let mut out = String::from("timestamp");
    for id in panel.node_ids() {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for t in 0..panel.len() {
        out.push_str(&panel.timestamps()[t].to_string());
        for i in 0..panel.n_nodes() {
            out.push_str(if labels[[i, t]] { ",1" } else { ",0" });
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Wide panel plus an edge list over its node ids.
pub fn load_wide_csv(
    panel_file: &Path,
    edge_file: &Path,
    missing_sentinel: Option<f64>,
    directed: bool,
) -> Result<(Panel, Graph)> {
    let panel = read_wide_csv(panel_file, missing_sentinel)?;
    let graph = read_edge_list(edge_file, panel.node_ids(), directed)?;
    Ok((panel, graph))
}
