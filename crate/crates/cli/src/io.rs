//! Long-format CSV datasets, ground-truth sidecars and checksums.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rolem::linalg::{Mat, Vector};
use rolem::simgen::GroundTruth;
use rolem::{Dataset64, LongitudinalDataset, Subject};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError, CliResult};

/// 17 significant digits: enough for an exact `f64` round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(io_err(path))
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Column layout parsed from the header `subject_id,time_index,y_1..y_r,x_1..x_p`.
fn parse_header(header: &csv::StringRecord) -> CliResult<(usize, usize)> {
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 4 || cols[0] != "subject_id" || cols[1] != "time_index" {
        return Err(CliError::data(
            "header must start with subject_id,time_index followed by y_1..y_r and x_1..x_p",
        ));
    }
    let r = cols[2..].iter().take_while(|c| c.starts_with("y_")).count();
    let p = cols.len() - 2 - r;
    if r == 0 || p == 0 {
        return Err(CliError::data(format!("need at least one y_ and one x_ column, found r={r}, p={p}")));
    }
    for (k, c) in cols[2..2 + r].iter().enumerate() {
        if *c != format!("y_{}", k + 1) {
            return Err(CliError::data(format!("expected column y_{} but found {c:?}", k + 1)));
        }
    }
    for (k, c) in cols[2 + r..].iter().enumerate() {
        if *c != format!("x_{}", k + 1) {
            return Err(CliError::data(format!("expected column x_{} but found {c:?}", k + 1)));
        }
    }
    Ok((r, p))
}

struct Row {
    time: i64,
    line: u64,
    values: Vec<f64>,
}

/// Reads a long-format dataset. Rows with an empty cell are dropped with a
/// warning; with `strict_missing` the whole subject is dropped instead.
/// Non-numeric cells and repeated (subject, time) pairs are errors.
pub fn ingest(path: &Path, strict_missing: bool) -> CliResult<Dataset64> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    ingest_str(&text, strict_missing).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn ingest_str(text: &str, strict_missing: bool) -> CliResult<Dataset64> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CliError::data(format!("cannot read header: {e}")))?.clone();
    let (r, p) = parse_header(&header)?;
    let width = 2 + r + p;

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<Row>> = HashMap::new();
    let mut incomplete: Vec<String> = Vec::new();
    let mut seen: HashMap<(String, i64), u64> = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::data(format!("malformed CSV: {e}")))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != width {
            return Err(CliError::data(format!("line {line}: expected {width} fields, found {}", rec.len())));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(CliError::data(format!("line {line}: empty subject_id")));
        }
        let time: i64 = rec[1]
            .parse()
            .map_err(|_| CliError::data(format!("line {line}: time_index {:?} is not an integer", &rec[1])))?;
        if let Some(prev) = seen.insert((id.clone(), time), line) {
            return Err(CliError::data(format!(
                "line {line}: duplicated (subject, time) = ({id}, {time}), first seen on line {prev}"
            )));
        }
        if !rows.contains_key(&id) {
            order.push(id.clone());
            rows.insert(id.clone(), Vec::new());
        }
        if rec.iter().skip(2).any(|c| c.is_empty()) {
            log::warn!("line {line}: missing value for subject {id}; row dropped");
            incomplete.push(id);
            continue;
        }
        let mut values = Vec::with_capacity(r + p);
        for (k, cell) in rec.iter().skip(2).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| CliError::data(format!("line {line}: column {} value {cell:?} is not numeric", &header[k + 2])))?;
            if !v.is_finite() {
                return Err(CliError::data(format!("line {line}: column {} is not finite", &header[k + 2])));
            }
            values.push(v);
        }
        rows.get_mut(&id).expect("subject registered").push(Row { time, line, values });
    }

    let mut subjects = Vec::with_capacity(order.len());
    for id in order {
        if strict_missing && incomplete.contains(&id) {
            log::warn!("subject {id} has incomplete observations; dropped (strict mode)");
            continue;
        }
        let mut rs = rows.remove(&id).expect("subject registered");
        if rs.is_empty() {
            log::warn!("subject {id} has no complete rows; dropped");
            continue;
        }
        rs.sort_by_key(|row| row.time);
        let j = rs.len();
        let y = Mat::from_fn(r, j, |k, t| rs[t].values[k]);
        let x = Mat::from_fn(p, j, |k, t| rs[t].values[r + k]);
        log::trace!("subject {id}: {j} rows from line {}", rs[0].line);
        subjects.push(Subject { id, y, x });
    }
    if subjects.is_empty() {
        return Err(CliError::data("no complete subjects in the file"));
    }
    Ok(LongitudinalDataset::new(subjects, r, p)?)
}

pub fn dataset_to_csv(data: &Dataset64) -> String {
    let (r, p) = (data.r(), data.p());
    let mut out = String::from("subject_id,time_index");
    for k in 1..=r {
        let _ = write!(out, ",y_{k}");
    }
    for k in 1..=p {
        let _ = write!(out, ",x_{k}");
    }
    out.push('\n');
    for s in data.subjects() {
        for j in 0..s.times() {
            let _ = write!(out, "{},{}", s.id, j + 1);
            for k in 0..r {
                let _ = write!(out, ",{}", fmt_f64(s.y[(k, j)]));
            }
            for k in 0..p {
                let _ = write!(out, ",{}", fmt_f64(s.x[(k, j)]));
            }
            out.push('\n');
        }
    }
    out
}

pub fn mat_rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|row| row.iter().copied().collect()).collect()
}

pub fn rows_mat(rows: &[Vec<f64>], what: &str) -> CliResult<Mat<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != nc) {
        return Err(CliError::data(format!("{what}: ragged matrix rows")));
    }
    Ok(Mat::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Ground-truth sidecar written next to simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub sigma_eps: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub gamma0: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub omega0: Vec<Vec<f64>>,
    pub rho: f64,
    pub nu: Option<f64>,
}

impl From<&GroundTruth<f64>> for TruthFile {
    fn from(t: &GroundTruth<f64>) -> Self {
        Self {
            alpha: t.alpha.iter().copied().collect(),
            beta: mat_rows(&t.beta),
            sigma_eps: mat_rows(&t.sigma_eps),
            gamma: mat_rows(&t.gamma),
            gamma0: mat_rows(&t.gamma0),
            eta: mat_rows(&t.eta),
            omega: mat_rows(&t.omega),
            omega0: mat_rows(&t.omega0),
            rho: t.rho,
            nu: t.nu,
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Per-column centring and scaling applied by `--standardize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub y_mean: Vec<f64>,
    pub y_sd: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
}

fn column_moments(rows: impl Iterator<Item = Vector<f64>> + Clone, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.clone().count() as f64;
    let mut mean = vec![0.0; dim];
    for v in rows.clone() {
        for k in 0..dim {
            mean[k] += v[k] / n;
        }
    }
    let mut var = vec![0.0; dim];
    for v in rows {
        for k in 0..dim {
            var[k] += (v[k] - mean[k]).powi(2) / (n - 1.0).max(1.0);
        }
    }
    let sd = var
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if v > 0.0 {
                v.sqrt()
            } else {
                log::warn!("column {} is constant; left unscaled", k + 1);
                1.0
            }
        })
        .collect();
    (mean, sd)
}

/// Standardizes every y and x column to mean 0 and unit variance over all
/// observations.
pub fn standardize(data: &Dataset64) -> CliResult<(Dataset64, Standardization)> {
    let (r, p) = (data.r(), data.p());
    let ys = data.subjects().iter().flat_map(|s| s.y.column_iter().map(|c| c.into_owned()));
    let xs = data.subjects().iter().flat_map(|s| s.x.column_iter().map(|c| c.into_owned()));
    let (y_mean, y_sd) = column_moments(ys, r);
    let (x_mean, x_sd) = column_moments(xs, p);
    let subjects = data
        .subjects()
        .iter()
        .map(|s| Subject {
            id: s.id.clone(),
            y: Mat::from_fn(r, s.times(), |k, j| (s.y[(k, j)] - y_mean[k]) / y_sd[k]),
            x: Mat::from_fn(p, s.times(), |k, j| (s.x[(k, j)] - x_mean[k]) / x_sd[k]),
        })
        .collect();
    Ok((LongitudinalDataset::new(subjects, r, p)?, Standardization { y_mean, y_sd, x_mean, x_sd }))
}

impl Standardization {
    /// β on the original scale: `β_kl · sd(y_k) / sd(x_l)`.
    pub fn beta_to_original(&self, beta: &Mat<f64>) -> Mat<f64> {
        Mat::from_fn(beta.nrows(), beta.ncols(), |k, l| beta[(k, l)] * self.y_sd[k] / self.x_sd[l])
    }

    /// Σ_ε on the original scale: `D Σ D` with `D = diag(sd(y))`.
    pub fn sigma_to_original(&self, sigma: &Mat<f64>) -> Mat<f64> {
        Mat::from_fn(sigma.nrows(), sigma.ncols(), |a, b| sigma[(a, b)] * self.y_sd[a] * self.y_sd[b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "subject_id,time_index,y_1,x_1\na,2,1.5,0.2\na,1,1.0,0.1\nb,1,2.0,0.3\nb,2,2.5,0.4\n";

    #[test]
    fn toy_round_trip() {
        let d = ingest_str(TOY, false).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.subjects()[0].times(), 2);
        // Rows are ordered by time index.
        assert_eq!(d.subjects()[0].y[(0, 0)], 1.0);
        let again = ingest_str(&dataset_to_csv(&d), false).unwrap();
        assert_eq!(again.subjects()[1].x, d.subjects()[1].x);
    }

    #[test]
    fn duplicate_pair_names_line() {
        let text = "subject_id,time_index,y_1,x_1\na,1,1,1\na,1,2,2\n";
        match ingest_str(text, false) {
            Err(CliError::Data(m)) => assert!(m.contains("line 3"), "{m}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_names_line() {
        let text = "subject_id,time_index,y_1,x_1\na,1,abc,1\n";
        match ingest_str(text, false) {
            Err(CliError::Data(m)) => assert!(m.contains("line 2") && m.contains("y_1"), "{m}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn missing_cells_drop_row_or_subject() {
        let text = "subject_id,time_index,y_1,x_1\na,1,1,1\na,2,,1\nb,1,2,2\n";
        let lenient = ingest_str(text, false).unwrap();
        assert_eq!(lenient.n(), 2);
        assert_eq!(lenient.subjects()[0].times(), 1);
        let strict = ingest_str(text, true).unwrap();
        assert_eq!(strict.n(), 1);
        assert_eq!(strict.subjects()[0].id, "b");
    }

    #[test]
    fn header_is_validated() {
        assert!(ingest_str("id,time,y_1,x_1\n", false).is_err());
        assert!(ingest_str("subject_id,time_index,y_1,y_3,x_1\n", false).is_err());
        assert!(ingest_str("subject_id,time_index,y_1,y_2\n", false).is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn standardization_back_transform() {
        let d = ingest_str(TOY, false).unwrap();
        let (s, info) = standardize(&d).unwrap();
        let ys: Vec<f64> = s.subjects().iter().flat_map(|s| s.y.iter().copied()).collect();
        assert!(ys.iter().sum::<f64>().abs() < 1e-12);
        let beta = Mat::from_element(1, 1, 2.0);
        let back = info.beta_to_original(&beta);
        assert!((back[(0, 0)] - 2.0 * info.y_sd[0] / info.x_sd[0]).abs() < 1e-15);
    }
}
