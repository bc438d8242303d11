//! File formats for the CLI: dataset CSV parsing and writing, flat
//! key-value config files, density tables, and the machine-readable report
//! emitters.
//!
//! Machine formats print floats with 17 significant digits so values
//! round-trip exactly; human summaries use 6.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::CliError;

/// 17-significant-digit float for machine output; round-trips any f64.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return "0.0000000000000000e0".into();
    }
    format!("{x:.16e}")
}

/// 6-significant-digit float for human summaries.
pub fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..6).contains(&magnitude) {
        let decimals = (5 - magnitude).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

/// A parsed `y,x1,...,xd` dataset split by class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub majority: Vec<Vec<f64>>,
    pub minority: Vec<Vec<f64>>,
    pub dim: usize,
}

/// Reads a dataset CSV with header `y,x1,...,xd` and `y` in {0, 1}.
pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::parse(format!("{}: empty file", path.display())))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.is_empty() || !columns[0].eq_ignore_ascii_case("y") {
        return Err(CliError::parse(format!(
            "{}: line 1: first column must be the label column 'y', got '{}'",
            path.display(),
            columns.first().unwrap_or(&"")
        )));
    }
    if columns.len() < 2 {
        return Err(CliError::parse(format!(
            "{}: line 1: expected feature columns x1,...,xd after 'y'",
            path.display()
        )));
    }
    for (i, name) in columns.iter().enumerate().skip(1) {
        let expected = format!("x{i}");
        if !name.eq_ignore_ascii_case(&expected) {
            return Err(CliError::parse(format!(
                "{}: line 1: expected column '{expected}', got '{name}'",
                path.display()
            )));
        }
    }
    let dim = columns.len() - 1;

    let mut majority = Vec::new();
    let mut minority = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(CliError::parse(format!(
                "{}: line {line_no}: expected {} fields, got {}",
                path.display(),
                dim + 1,
                fields.len()
            )));
        }
        let label: f64 = fields[0].parse().map_err(|_| {
            CliError::parse(format!(
                "{}: line {line_no}: label '{}' is not a number",
                path.display(),
                fields[0]
            ))
        })?;
        let row = parse_float_fields(&fields[1..], path, line_no)?;
        if label == 0.0 {
            majority.push(row);
        } else if label == 1.0 {
            minority.push(row);
        } else {
            return Err(CliError::parse(format!(
                "{}: line {line_no}: label must be 0 or 1, got {label}",
                path.display()
            )));
        }
    }
    Ok(Dataset {
        majority,
        minority,
        dim,
    })
}

/// Writes a dataset CSV in the same format [`read_dataset`] accepts.
pub fn write_dataset(
    path: &Path,
    majority: &[Vec<f64>],
    minority: &[Vec<f64>],
    dim: usize,
) -> Result<(), CliError> {
    let mut out = String::from("y");
    for k in 1..=dim {
        let _ = write!(out, ",x{k}");
    }
    out.push('\n');
    for (label, rows) in [("0", majority), ("1", minority)] {
        for row in rows {
            out.push_str(label);
            for v in row {
                out.push(',');
                out.push_str(&fmt_g17(*v));
            }
            out.push('\n');
        }
    }
    write_file(path, &out)
}

/// Reads a minority-point file: one point per line, `d` comma-separated
/// coordinates, optional non-numeric header line.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
    let mut points: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if idx == 0 && fields[0].parse::<f64>().is_err() {
            continue; // header
        }
        let row = parse_float_fields(&fields, path, line_no)?;
        if let Some(first) = points.first() {
            if row.len() != first.len() {
                return Err(CliError::parse(format!(
                    "{}: line {line_no}: expected {} coordinates, got {}",
                    path.display(),
                    first.len(),
                    row.len()
                )));
            }
        }
        points.push(row);
    }
    if points.is_empty() {
        return Err(CliError::parse(format!(
            "{}: no points found",
            path.display()
        )));
    }
    Ok(points)
}

/// Reads a tabulated density: lines of `x,density`, optional header,
/// returned sorted by `x`.
pub fn read_density_table(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
    let mut table: Vec<(f64, f64)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if idx == 0 && fields[0].parse::<f64>().is_err() {
            continue;
        }
        if fields.len() != 2 {
            return Err(CliError::parse(format!(
                "{}: line {line_no}: expected 'x,density', got {} fields",
                path.display(),
                fields.len()
            )));
        }
        let row = parse_float_fields(&fields, path, line_no)?;
        if row[1] < 0.0 {
            return Err(CliError::parse(format!(
                "{}: line {line_no}: density must be nonnegative",
                path.display()
            )));
        }
        table.push((row[0], row[1]));
    }
    if table.len() < 2 {
        return Err(CliError::parse(format!(
            "{}: a density table needs at least 2 rows",
            path.display()
        )));
    }
    table.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(table)
}

/// Reads a flat `key = value` config file; `#` starts a comment.
pub fn read_config(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::parse(format!(
                "{}: line {}: expected 'key = value'",
                path.display(),
                idx + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_float_fields(fields: &[&str], path: &Path, line_no: usize) -> Result<Vec<f64>, CliError> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|_| {
                CliError::parse(format!(
                    "{}: line {line_no}: '{f}' is not a number",
                    path.display()
                ))
            })
        })
        .collect()
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::io(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, contents)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

/// Minimal JSON tree with deterministic rendering and 17-digit floats.
/// Keys are static identifiers, so no string escaping is needed.
#[derive(Debug, Clone)]
pub enum Json {
    Bool(bool),
    UInt(u64),
    Num(f64),
    Arr(Vec<Json>),
    Obj(Vec<(&'static str, Json)>),
}

impl Json {
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out, 0);
        out.push('\n');
        out
    }

    fn render_into(&self, out: &mut String, indent: usize) {
        match self {
            Json::Bool(b) => {
                let _ = write!(out, "{b}");
            }
            Json::UInt(v) => {
                let _ = write!(out, "{v}");
            }
            // JSON has no NaN/inf literal; emit null for non-finite values.
            Json::Num(v) if !v.is_finite() => out.push_str("null"),
            Json::Num(v) => out.push_str(&fmt_g17(*v)),
            Json::Arr(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                    return;
                }
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    out.push_str(&"  ".repeat(indent + 1));
                    item.render_into(out, indent + 1);
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent));
                out.push(']');
            }
            Json::Obj(fields) => {
                if fields.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push('{');
                for (i, (key, value)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    out.push_str(&"  ".repeat(indent + 1));
                    let _ = write!(out, "\"{key}\": ");
                    value.render_into(out, indent + 1);
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent));
                out.push('}');
            }
        }
    }

    pub fn num_array(values: &[f64]) -> Json {
        Json::Arr(values.iter().map(|&v| Json::Num(v)).collect())
    }

    pub fn matrix(rows: &[Vec<f64>]) -> Json {
        Json::Arr(rows.iter().map(|r| Json::num_array(r)).collect())
    }
}
