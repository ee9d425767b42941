//! The draws file: one row per retained draw with the flattened parameter
//! vector, derived β and Σ_ε, and the log-likelihood.

use std::fmt::Write as _;
use std::path::Path;

use rolem::inference::{autocorrelation, effective_sample_size, hpd_interval, split_rhat, MAX_ACF_LAG};
use rolem::linalg::Mat;
use rolem::model::assemble;
use rolem::sampler::ChainOutput;
use rolem::ErrorModel;

use crate::error::{io_err, CliError, CliResult};
use crate::io::fmt_f64;

#[derive(Debug, Clone, PartialEq)]
pub struct DrawsTable {
    pub columns: Vec<String>,
    /// Chain index of each row.
    pub chain: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

fn push_matrix(names: &mut Vec<String>, vals: &mut Vec<f64>, name: &str, m: &Mat<f64>, upper_only: bool, first: bool) {
    for i in 0..m.nrows() {
        let start = if upper_only { i } else { 0 };
        for j in start..m.ncols() {
            if first {
                names.push(format!("{name}_{}_{}", i + 1, j + 1));
            }
            vals.push(m[(i, j)]);
        }
    }
}

impl DrawsTable {
    pub fn from_chains(chains: &[ChainOutput<f64>]) -> Self {
        let mut columns = Vec::new();
        let mut chain_idx = Vec::new();
        let mut rows = Vec::new();
        let mut first = true;
        for (c, out) in chains.iter().enumerate() {
            for d in &out.draws {
                let st = &d.state;
                let asm = assemble(st);
                let mut v = Vec::new();
                for (k, a) in st.alpha.iter().enumerate() {
                    if first {
                        columns.push(format!("alpha_{}", k + 1));
                    }
                    v.push(*a);
                }
                push_matrix(&mut columns, &mut v, "beta", &asm.beta, false, first);
                push_matrix(&mut columns, &mut v, "sigma_eps", &asm.sigma_eps, true, first);
                push_matrix(&mut columns, &mut v, "eta", &st.eta, false, first);
                push_matrix(&mut columns, &mut v, "omega", &st.omega, true, first);
                push_matrix(&mut columns, &mut v, "omega0", &st.omega0, true, first);
                push_matrix(&mut columns, &mut v, "p", st.basis.projection.matrix(), true, first);
                if out.corr.has_rho() {
                    if first {
                        columns.push("rho".into());
                    }
                    v.push(st.rho);
                }
                if out.error_model == ErrorModel::T {
                    if first {
                        columns.push("nu".into());
                    }
                    v.push(st.nu);
                }
                if first {
                    columns.push("loglik".into());
                }
                v.push(d.loglik);
                first = false;
                chain_idx.push(c + 1);
                rows.push(v);
            }
        }
        Self { columns, chain: chain_idx, rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("chain,draw");
        for c in &self.columns {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        let mut draw = 0;
        let mut prev_chain = 0;
        for (row, &c) in self.rows.iter().zip(&self.chain) {
            if c != prev_chain {
                draw = 0;
                prev_chain = c;
            }
            draw += 1;
            let _ = write!(out, "{c},{draw}");
            for v in row {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| CliError::data(format!("{}: {e}", path.display())))?.clone();
        if header.len() < 3 || &header[0] != "chain" || &header[1] != "draw" {
            return Err(CliError::data(format!("{}: not a draws file", path.display())));
        }
        let columns: Vec<String> = header.iter().skip(2).map(String::from).collect();
        let mut chain = Vec::new();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = || CliError::data(format!("{} line {line}: non-numeric draw", path.display()));
            chain.push(rec[0].parse().map_err(|_| bad())?);
            rows.push(rec.iter().skip(2).map(|c| c.parse::<f64>().map_err(|_| bad())).collect::<CliResult<Vec<_>>>()?);
        }
        if rows.is_empty() {
            return Err(CliError::data(format!("{}: no draws", path.display())));
        }
        Ok(Self { columns, chain, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Column values split by chain.
    pub fn column_by_chain(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        let k = self.columns.iter().position(|c| c == name)?;
        let n_chains = self.chain.iter().copied().max().unwrap_or(0);
        let mut out = vec![Vec::new(); n_chains];
        for (row, &c) in self.rows.iter().zip(&self.chain) {
            out[c - 1].push(row[k]);
        }
        Some(out)
    }

    /// Posterior mean of a matrix stored as `name_i_j` columns. Upper-only
    /// matrices are mirrored.
    pub fn mean_matrix(&self, name: &str, nrows: usize, ncols: usize, symmetric: bool) -> CliResult<Mat<f64>> {
        let mut m = Mat::zeros(nrows, ncols);
        for i in 0..nrows {
            let start = if symmetric { i } else { 0 };
            for j in start..ncols {
                let col = self
                    .column(&format!("{name}_{}_{}", i + 1, j + 1))
                    .ok_or_else(|| CliError::data(format!("draws file has no column {name}_{}_{}", i + 1, j + 1)))?;
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                m[(i, j)] = mean;
                if symmetric {
                    m[(j, i)] = mean;
                }
            }
        }
        Ok(m)
    }

    /// Number of rows and columns of a `name_i_j` matrix in the file.
    pub fn matrix_shape(&self, name: &str) -> Option<(usize, usize)> {
        let prefix = format!("{name}_");
        let mut shape = None;
        for c in &self.columns {
            let Some(rest) = c.strip_prefix(&prefix) else { continue };
            let mut it = rest.split('_');
            let (Some(i), Some(j), None) = (it.next(), it.next(), it.next()) else { continue };
            let (Ok(i), Ok(j)) = (i.parse::<usize>(), j.parse::<usize>()) else { continue };
            let (a, b) = shape.unwrap_or((0, 0));
            shape = Some((a.max(i), b.max(j)));
        }
        shape
    }
}

/// Columns summarized by default: α, β, Σ_ε, ρ and ν.
pub fn is_monitored(column: &str) -> bool {
    ["alpha_", "beta_", "sigma_eps_"].iter().any(|p| column.starts_with(p)) || column == "rho" || column == "nu"
}

/// Splits `beta_2_3` into `("beta", "2:3")` and `rho` into `("rho", "1")`.
pub fn split_name(column: &str) -> (String, String) {
    let parts: Vec<&str> = column.split('_').collect();
    let numeric = parts.iter().rev().take_while(|p| p.parse::<usize>().is_ok()).count();
    if numeric == 0 {
        return (column.to_string(), "1".into());
    }
    let base = parts[..parts.len() - numeric].join("_");
    (base, parts[parts.len() - numeric..].join(":"))
}

pub struct ColumnSummary {
    pub parameter: String,
    pub index: String,
    pub mean: f64,
    pub hpd: (f64, f64),
    pub ess: f64,
    pub rhat: Option<f64>,
    pub acf: Vec<f64>,
}

/// Entrywise summaries of the selected columns, pooling chains. ESS is the
/// sum of per-chain values; split-R̂ is reported when there are 2+ chains.
pub fn summarize_columns(table: &DrawsTable, level: f64, select: impl Fn(&str) -> bool) -> CliResult<Vec<ColumnSummary>> {
    let mut out = Vec::new();
    for name in table.columns.iter().filter(|c| select(c)) {
        let pooled = table.column(name).expect("column exists");
        let chains = table.column_by_chain(name).expect("column exists");
        let hpd = hpd_interval(&pooled, level)?;
        let ess = chains.iter().filter(|c| !c.is_empty()).map(|c| effective_sample_size(c)).sum();
        let rhat = if chains.len() >= 2 { Some(split_rhat(&chains)?) } else { None };
        let (parameter, index) = split_name(name);
        out.push(ColumnSummary {
            parameter,
            index,
            mean: pooled.iter().sum::<f64>() / pooled.len() as f64,
            hpd,
            ess,
            rhat,
            acf: autocorrelation(&chains[0], MAX_ACF_LAG),
        });
    }
    Ok(out)
}

pub fn summary_csv(entries: &[ColumnSummary]) -> String {
    let mut out = String::from("parameter,index,mean,hpd_lower,hpd_upper,ess\n");
    for e in entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.parameter,
            e.index,
            fmt_f64(e.mean),
            fmt_f64(e.hpd.0),
            fmt_f64(e.hpd.1),
            fmt_f64(e.ess)
        );
    }
    out
}
