//! File formats. Node labels in files are one-based.
//!
//! - data: N × p numeric CSV, optional header row
//! - interventions: N lines, each a node label or `obs`
//! - Σ_u and coefficient matrices: p × p numeric CSV, no header
//! - edge list: `i -> j` per line
//! - fit result: JSON, see [`FitReport`]

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CsbnError, Result};
use crate::estimators::{Diagnostics, FitResult};
use crate::model::{CoefMatrix, DataSet, ErrorSpec};

fn parse_f64(field: &str, line: usize, col: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        CsbnError::Parse(format!("line {line}, column {col}: '{}' is not a number", field.trim()))
    })
}

/// Numeric CSV into a matrix. A first row that does not parse as numbers is
/// treated as a header when `allow_header` is set.
pub fn parse_matrix_csv(text: &str, allow_header: bool) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CsbnError::Parse(e.to_string()))?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if k == 0 && allow_header && rec.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, f)| parse_f64(f, line, c + 1))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CsbnError::Parse(format!(
                    "line {line} has {} fields, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CsbnError::Parse("no numeric rows found".into()));
    }
    let ncol = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncol, |r, c| rows[r][c]))
}

/// Intervention labels: one-based node index or `obs` per line.
pub fn parse_interventions(text: &str, p: usize) -> Result<Vec<Option<usize>>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let tok = raw.trim();
        if tok.is_empty() || tok.starts_with('#') {
            continue;
        }
        if tok.eq_ignore_ascii_case("obs") {
            out.push(None);
            continue;
        }
        if tok.contains([',', ' ', ';', '\t']) {
            return Err(CsbnError::Parse(format!(
                "line {}: '{tok}' names several nodes; rows may intervene at most one node",
                k + 1
            )));
        }
        let node: usize = tok
            .parse()
            .map_err(|_| CsbnError::Parse(format!("line {}: '{tok}' is not a node label or 'obs'", k + 1)))?;
        if node < 1 || node > p {
            return Err(CsbnError::Parse(format!(
                "line {}: node {node} is outside 1..={p}",
                k + 1
            )));
        }
        out.push(Some(node - 1));
    }
    Ok(out)
}

pub fn format_interventions(iv: &[Option<usize>]) -> String {
    let mut s = String::with_capacity(iv.len() * 3);
    for v in iv {
        match v {
            Some(j) => s.push_str(&(j + 1).to_string()),
            None => s.push_str("obs"),
        }
        s.push('\n');
    }
    s
}

/// Matrix as CSV with round-trip float formatting.
pub fn format_matrix_csv(m: &DMatrix<f64>, header: Option<&[String]>) -> String {
    let mut s = String::new();
    if let Some(h) = header {
        s.push_str(&h.join(","));
        s.push('\n');
    }
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:?}", m[(r, c)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CsbnError::Io(format!("{}: {e}", path.display())))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CsbnError::Io(format!("{}: {e}", path.display())))
}

/// Loads a data set; without an intervention file every row is observational.
pub fn read_dataset(data: &Path, interventions: Option<&Path>) -> Result<DataSet> {
    let w = parse_matrix_csv(&read(data)?, true)?;
    let iv = match interventions {
        Some(p) => parse_interventions(&read(p)?, w.ncols())?,
        None => vec![None; w.nrows()],
    };
    DataSet::new(w, iv)
}

pub fn read_error_spec(path: &Path) -> Result<ErrorSpec> {
    ErrorSpec::new(parse_matrix_csv(&read(path)?, false)?)
}

pub fn read_coefs(path: &Path) -> Result<CoefMatrix> {
    CoefMatrix::new(parse_matrix_csv(&read(path)?, false)?)
}

/// Serializable fit output with one-based node labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub lambda: f64,
    pub p: usize,
    /// Row-major: entry k is B[k / p, k % p].
    pub b_hat: Vec<f64>,
    pub order: Vec<usize>,
    pub removed_edges: Vec<[usize; 2]>,
    pub edge_pvalues: Vec<EdgePValueReport>,
    pub diagnostics: DiagnosticsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePValueReport {
    pub from: usize,
    pub to: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_change: f64,
    pub removed_per_iteration: Vec<Vec<[usize; 2]>>,
    pub ridge_rescues: usize,
    pub nr_fallbacks: usize,
    pub infeasible_updates: usize,
    pub degenerate_pvalues: usize,
}

fn one_based(e: &[(usize, usize)]) -> Vec<[usize; 2]> {
    e.iter().map(|&(i, j)| [i + 1, j + 1]).collect()
}

impl From<&Diagnostics> for DiagnosticsReport {
    fn from(d: &Diagnostics) -> Self {
        DiagnosticsReport {
            iterations: d.iterations,
            converged: d.converged,
            final_change: d.final_change,
            removed_per_iteration: d.removed_per_iteration.iter().map(|v| one_based(v)).collect(),
            ridge_rescues: d.ridge_rescues,
            nr_fallbacks: d.nr_fallbacks,
            infeasible_updates: d.infeasible_updates,
            degenerate_pvalues: d.degenerate_pvalues,
        }
    }
}

impl From<&FitResult> for FitReport {
    fn from(f: &FitResult) -> Self {
        let p = f.b_hat.p();
        FitReport {
            method: f.method.to_string(),
            lambda: f.lambda,
            p,
            b_hat: f.b_hat.to_rows().into_iter().flatten().collect(),
            order: f.order.iter().map(|k| k + 1).collect(),
            removed_edges: one_based(&f.removed_edges),
            edge_pvalues: f
                .edge_pvalues
                .iter()
                .map(|e| EdgePValueReport {
                    from: e.from + 1,
                    to: e.to + 1,
                    p_value: e.p_value,
                })
                .collect(),
            diagnostics: (&f.diagnostics).into(),
        }
    }
}

impl FitReport {
    pub fn coefs(&self) -> Result<CoefMatrix> {
        if self.b_hat.len() != self.p * self.p {
            return Err(CsbnError::Parse("b_hat length does not match p".into()));
        }
        CoefMatrix::new(DMatrix::from_row_slice(self.p, self.p, &self.b_hat))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| CsbnError::Io(e.to_string()))
    }
}

/// Parses an edge list (`i -> j`, one-based) into a graph on `p` nodes.
pub fn parse_edge_list(text: &str, p: usize) -> Result<crate::dag::DirectedGraph> {
    let mut g = crate::dag::DirectedGraph::new(p);
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line
            .split_once("->")
            .ok_or_else(|| CsbnError::Parse(format!("line {}: expected 'i -> j'", k + 1)))?;
        let parse = |s: &str| -> Result<usize> {
            let v: usize = s
                .trim()
                .parse()
                .map_err(|_| CsbnError::Parse(format!("line {}: bad node '{}'", k + 1, s.trim())))?;
            if v < 1 || v > p {
                return Err(CsbnError::Parse(format!("line {}: node {v} outside 1..={p}", k + 1)));
            }
            Ok(v - 1)
        };
        let (i, j) = (parse(a)?, parse(b)?);
        if i == j {
            return Err(CsbnError::Parse(format!("line {}: self loop", k + 1)));
        }
        g.add_edge(i, j);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_optional() {
        let a = parse_matrix_csv("x1,x2\n1,2\n3,4\n", true).unwrap();
        let b = parse_matrix_csv("1,2\n3,4\n", true).unwrap();
        assert_eq!(a, b);
        assert!(parse_matrix_csv("x1,x2\n1,2\n", false).is_err());
        assert!(parse_matrix_csv("1,2\n3\n", true).is_err());
    }

    #[test]
    fn interventions_round_trip() {
        let iv = parse_interventions("1\n1\n2\nobs\n", 3).unwrap();
        assert_eq!(iv, vec![Some(0), Some(0), Some(1), None]);
        assert_eq!(parse_interventions(&format_interventions(&iv), 3).unwrap(), iv);
        assert!(parse_interventions("4\n", 3).is_err());
        assert!(parse_interventions("1,2\n", 3).is_err());
        assert!(parse_interventions("0\n", 3).is_err());
    }

    #[test]
    fn matrix_round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, 1.0 / 3.0, -2.5e-17, 7.0]);
        let back = parse_matrix_csv(&format_matrix_csv(&m, None), false).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = crate::dag::DirectedGraph::from_edges(3, [(0, 2), (1, 2)]);
        let back = parse_edge_list(&g.to_edge_list(), 3).unwrap();
        assert_eq!(g, back);
        assert!(parse_edge_list("1 -> 1\n", 3).is_err());
    }
}
