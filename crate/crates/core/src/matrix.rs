//! Bioactivity matrices: CSV ingestion, binarization, and the observed mask.
//!
//! Layout of every matrix file: the first row holds a corner label followed by
//! compound identifiers; each following row holds a target identifier followed
//! by one cell per compound. A cell equal to the missing token is unobserved.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, BoiseError, Result};

/// Binary target-by-compound activity matrix with an observed mask.
///
/// Values at unobserved cells are stored but never read by any computation.
#[derive(Debug, Clone, PartialEq)]
pub struct BioactivityMatrix {
    id_header: String,
    targets: Vec<String>,
    compounds: Vec<String>,
    values: Vec<bool>,
    observed: Vec<bool>,
}

/// Continuous measurements (percent inhibition, z-scores) on the same axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousMatrix {
    id_header: String,
    targets: Vec<String>,
    compounds: Vec<String>,
    values: Vec<f64>,
    observed: Vec<bool>,
}

/// Output of [`ContinuousMatrix::binarize_2sd`]: the binary matrix plus the
/// per-target activity threshold that produced it.
#[derive(Debug, Clone)]
pub struct Binarized {
    pub matrix: BioactivityMatrix,
    pub thresholds: Vec<f64>,
}

fn check_axes(targets: &[String], compounds: &[String], cells: usize) -> Result<()> {
    if targets.is_empty() || compounds.is_empty() {
        return invalid("matrix needs at least one target and one compound");
    }
    if cells != targets.len() * compounds.len() {
        return invalid(format!(
            "expected {} cells for {}x{} matrix, got {cells}",
            targets.len() * compounds.len(),
            targets.len(),
            compounds.len()
        ));
    }
    for (axis, ids) in [("target", targets), ("compound", compounds)] {
        let mut seen = HashSet::new();
        for id in ids {
            if !seen.insert(id.as_str()) {
                return invalid(format!("duplicate {axis} identifier {id:?}"));
            }
        }
    }
    Ok(())
}

fn default_ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

impl BioactivityMatrix {
    /// Builds a matrix from row-major cells, `None` marking unobserved entries.
    pub fn new(
        targets: Vec<String>,
        compounds: Vec<String>,
        cells: Vec<Option<bool>>,
    ) -> Result<Self> {
        check_axes(&targets, &compounds, cells.len())?;
        let observed = cells.iter().map(Option::is_some).collect();
        let values = cells.iter().map(|c| c.unwrap_or(false)).collect();
        Ok(Self {
            id_header: "target".to_string(),
            targets,
            compounds,
            values,
            observed,
        })
    }

    /// Fully observed matrix from 0/1 rows, with generated identifiers
    /// `t0..` and `c0..`.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let opt: Vec<Vec<Option<u8>>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| Some(v)).collect())
            .collect();
        Self::from_option_rows(&opt)
    }

    pub fn from_option_rows(rows: &[Vec<Option<u8>>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut cells = Vec::with_capacity(m * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return invalid(format!("row {i} has {} cells, expected {n}", row.len()));
            }
            for &v in row {
                cells.push(match v {
                    None => None,
                    Some(0) => Some(false),
                    Some(1) => Some(true),
                    Some(other) => return invalid(format!("non-binary value {other} in row {i}")),
                });
            }
        }
        Self::new(default_ids("t", m), default_ids("c", n), cells)
    }

    pub fn nrows(&self) -> usize {
        self.targets.len()
    }

    pub fn ncols(&self) -> usize {
        self.compounds.len()
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn compounds(&self) -> &[String] {
        &self.compounds
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.ncols() + j]
    }

    /// The cell value, or `None` if unobserved.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<bool> {
        let idx = i * self.ncols() + j;
        self.observed[idx].then(|| self.values[idx])
    }

    pub fn row(&self, i: usize) -> Vec<Option<bool>> {
        (0..self.ncols()).map(|j| self.get(i, j)).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Mean of the observed entries, `None` if nothing is observed.
    pub fn observed_mean(&self) -> Option<f64> {
        let total = self.observed_count();
        if total == 0 {
            return None;
        }
        let ones = self
            .values
            .iter()
            .zip(&self.observed)
            .filter(|(&v, &o)| v && o)
            .count();
        Some(ones as f64 / total as f64)
    }

    /// Per-compound count of observed actives.
    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.ncols()];
        for i in 0..self.nrows() {
            for (j, s) in sums.iter_mut().enumerate() {
                if self.get(i, j) == Some(true) {
                    *s += 1;
                }
            }
        }
        sums
    }

    /// Copy with the listed cells marked unobserved.
    pub fn with_masked(&self, cells: &[(usize, usize)]) -> Self {
        let mut out = self.clone();
        for &(i, j) in cells {
            out.observed[i * self.ncols() + j] = false;
        }
        out
    }

    /// Copy with the value at an unobserved cell overwritten. Used to check
    /// that unobserved values are never read.
    pub fn with_hidden_value(&self, i: usize, j: usize, value: bool) -> Self {
        let mut out = self.clone();
        let idx = i * self.ncols() + j;
        assert!(!out.observed[idx], "cell ({i},{j}) is observed");
        out.values[idx] = value;
        out
    }

    /// Splits off target `i`, returning the remaining matrix and the removed row.
    pub fn remove_row(&self, i: usize) -> Result<(Self, Vec<Option<bool>>)> {
        if self.nrows() < 2 {
            return invalid("cannot remove the only target");
        }
        let row = self.row(i);
        let n = self.ncols();
        let keep = |idx: &usize| idx / n != i;
        let values = (0..self.values.len()).filter(keep).map(|k| self.values[k]).collect();
        let observed = (0..self.observed.len()).filter(keep).map(|k| self.observed[k]).collect();
        let mut targets = self.targets.clone();
        targets.remove(i);
        Ok((
            Self {
                id_header: self.id_header.clone(),
                targets,
                compounds: self.compounds.clone(),
                values,
                observed,
            },
            row,
        ))
    }

    /// Keeps only the listed compound columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let mut cells = Vec::with_capacity(self.nrows() * cols.len());
        for i in 0..self.nrows() {
            for &j in cols {
                if j >= self.ncols() {
                    return invalid(format!("column {j} out of range"));
                }
                cells.push(self.get(i, j));
            }
        }
        let compounds = cols.iter().map(|&j| self.compounds[j].clone()).collect();
        let mut out = Self::new(self.targets.clone(), compounds, cells)?;
        out.id_header = self.id_header.clone();
        Ok(out)
    }

    pub fn compound_index(&self, id: &str) -> Option<usize> {
        self.compounds.iter().position(|c| c == id)
    }

    pub fn read_csv<R: Read>(reader: R, missing_token: &str) -> Result<Self> {
        let raw = RawTable::parse(reader, missing_token)?;
        let mut cells = Vec::with_capacity(raw.cells.len());
        for (idx, cell) in raw.cells.iter().enumerate() {
            cells.push(match cell {
                None => None,
                Some(v) if *v == 0.0 => Some(false),
                Some(v) if *v == 1.0 => Some(true),
                Some(v) => {
                    return Err(BoiseError::Parse {
                        row: raw.row_lines[idx / raw.compounds.len()],
                        msg: format!("non-binary value {v}"),
                    })
                }
            });
        }
        let mut m = Self::new(raw.targets, raw.compounds, cells)?;
        m.id_header = raw.id_header;
        Ok(m)
    }

    pub fn load_csv(path: impl AsRef<Path>, missing_token: &str) -> Result<Self> {
        Self::read_csv(File::open(path)?, missing_token)
    }

    pub fn write_csv<W: Write>(&self, writer: W, missing_token: &str) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let mut header = vec![self.id_header.as_str()];
        header.extend(self.compounds.iter().map(String::as_str));
        w.write_record(&header)?;
        for i in 0..self.nrows() {
            let mut rec = vec![self.targets[i].as_str()];
            rec.extend((0..self.ncols()).map(|j| match self.get(i, j) {
                None => missing_token,
                Some(true) => "1",
                Some(false) => "0",
            }));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, missing_token: &str) -> Result<()> {
        self.write_csv(File::create(path)?, missing_token)
    }
}

impl ContinuousMatrix {
    pub fn new(targets: Vec<String>, compounds: Vec<String>, cells: Vec<Option<f64>>) -> Result<Self> {
        check_axes(&targets, &compounds, cells.len())?;
        if let Some(pos) = cells.iter().position(|c| matches!(c, Some(v) if !v.is_finite())) {
            return invalid(format!("non-finite value at cell {pos}"));
        }
        Ok(Self {
            id_header: "target".to_string(),
            targets,
            compounds,
            observed: cells.iter().map(Option::is_some).collect(),
            values: cells.iter().map(|c| c.unwrap_or(0.0)).collect(),
        })
    }

    pub fn from_option_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return invalid("ragged rows");
        }
        let cells = rows.iter().flatten().copied().collect();
        Self::new(default_ids("t", rows.len()), default_ids("c", n), cells)
    }

    pub fn nrows(&self) -> usize {
        self.targets.len()
    }

    pub fn ncols(&self) -> usize {
        self.compounds.len()
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn compounds(&self) -> &[String] {
        &self.compounds
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let idx = i * self.ncols() + j;
        self.observed[idx].then(|| self.values[idx])
    }

    fn map_binary(&self, f: impl Fn(usize, f64) -> bool) -> BioactivityMatrix {
        let n = self.ncols();
        BioactivityMatrix {
            id_header: self.id_header.clone(),
            targets: self.targets.clone(),
            compounds: self.compounds.clone(),
            values: self.values.iter().enumerate().map(|(idx, &v)| f(idx / n, v)).collect(),
            observed: self.observed.clone(),
        }
    }

    /// Per-target 2SD rule: with `tau_i = mean_i + 2 * sd_i` over the observed
    /// entries of row `i` (sample standard deviation), a cell is active iff
    /// its value is `>= tau_i`. Rows with fewer than two observed entries are
    /// rejected. A zero-variance row makes every observed entry active and is
    /// logged as a warning.
    pub fn binarize_2sd(&self) -> Result<Binarized> {
        let mut thresholds = Vec::with_capacity(self.nrows());
        for i in 0..self.nrows() {
            let vals: Vec<f64> = (0..self.ncols()).filter_map(|j| self.get(i, j)).collect();
            if vals.len() < 2 {
                return Err(BoiseError::DegenerateRow {
                    row: i,
                    target: self.targets[i].clone(),
                    observed: vals.len(),
                });
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            let sd = var.sqrt();
            if sd == 0.0 {
                log::warn!("target {} has zero variance; all observed entries become active", self.targets[i]);
            }
            thresholds.push(mean + 2.0 * sd);
        }
        let matrix = self.map_binary(|i, v| v >= thresholds[i]);
        Ok(Binarized { matrix, thresholds })
    }

    /// `x = 1` iff `z < threshold` (strict).
    pub fn binarize_zscore(&self, threshold: f64) -> Result<BioactivityMatrix> {
        if !threshold.is_finite() {
            return invalid("z-score threshold must be finite");
        }
        Ok(self.map_binary(|_, v| v < threshold))
    }

    pub fn read_csv<R: Read>(reader: R, missing_token: &str) -> Result<Self> {
        let raw = RawTable::parse(reader, missing_token)?;
        let mut m = Self::new(raw.targets, raw.compounds, raw.cells)?;
        m.id_header = raw.id_header;
        Ok(m)
    }

    pub fn load_csv(path: impl AsRef<Path>, missing_token: &str) -> Result<Self> {
        Self::read_csv(File::open(path)?, missing_token)
    }

    pub fn write_csv<W: Write>(&self, writer: W, missing_token: &str) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let mut header = vec![self.id_header.clone()];
        header.extend(self.compounds.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.nrows() {
            let mut rec = vec![self.targets[i].clone()];
            rec.extend((0..self.ncols()).map(|j| match self.get(i, j) {
                None => missing_token.to_string(),
                Some(v) => format!("{v}"),
            }));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct RawTable {
    id_header: String,
    targets: Vec<String>,
    compounds: Vec<String>,
    cells: Vec<Option<f64>>,
    /// 1-based file line of each data row.
    row_lines: Vec<usize>,
}

impl RawTable {
    fn parse<R: Read>(reader: R, missing_token: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(h) => h?,
            None => return Err(BoiseError::Parse { row: 1, msg: "empty file".into() }),
        };
        if header.len() < 2 {
            return Err(BoiseError::Parse { row: 1, msg: "header has no compound columns".into() });
        }
        let id_header = header[0].to_string();
        let compounds: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut targets = Vec::new();
        let mut cells = Vec::new();
        let mut row_lines = Vec::new();
        for rec in records {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() == 1 && rec[0].is_empty() {
                continue;
            }
            if rec.len() != compounds.len() + 1 {
                return Err(BoiseError::Parse {
                    row: line,
                    msg: format!("expected {} fields, found {}", compounds.len() + 1, rec.len()),
                });
            }
            targets.push(rec[0].to_string());
            row_lines.push(line);
            for field in rec.iter().skip(1) {
                if field == missing_token {
                    cells.push(None);
                } else {
                    let v: f64 = field.parse().map_err(|_| BoiseError::Parse {
                        row: line,
                        msg: format!("non-numeric cell {field:?}"),
                    })?;
                    if !v.is_finite() {
                        return Err(BoiseError::Parse { row: line, msg: format!("non-finite cell {field:?}") });
                    }
                    cells.push(Some(v));
                }
            }
        }
        if targets.is_empty() {
            return Err(BoiseError::Parse { row: 2, msg: "no target rows".into() });
        }
        Ok(Self { id_header, targets, compounds, cells, row_lines })
    }
}
