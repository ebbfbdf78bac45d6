//! Multivariate series representation, CSV ingestion, demeaning, and the
//! frequency-grid and frequency-band abstractions shared by the spectral and
//! segmentation layers.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A length-T, p-variate real time series. Rows are time points, columns are
/// components. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSeries {
    values: Array2<f64>,
}

impl MultivariateSeries {
    /// Wrap a T x p matrix. Fails on empty matrices or non-finite entries.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid("series must have at least one row and column"));
        }
        if let Some(((r, c), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry {v} at row {}, column {}",
                r + 1,
                c + 1
            )));
        }
        Ok(Self { values })
    }

    /// Number of time points T.
    pub fn t_len(&self) -> usize {
        self.values.nrows()
    }

    /// Number of components p.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    /// Column means.
    pub fn means(&self) -> Array1<f64> {
        self.values.mean_axis(Axis(0)).expect("nonempty series")
    }

    /// Subtract each column's sample mean.
    pub fn demean(&self) -> MultivariateSeries {
        self.demean_with_means().0
    }

    /// Subtract each column's sample mean and also return the removed means
    /// (forecasts need them added back).
    pub fn demean_with_means(&self) -> (MultivariateSeries, Array1<f64>) {
        let means = self.means();
        let mut values = self.values.clone();
        for (mut col, &m) in values.axis_iter_mut(Axis(1)).zip(means.iter()) {
            col.mapv_inplace(|x| x - m);
        }
        (MultivariateSeries { values }, means)
    }
}

/// An ordered set of evaluation frequencies, all strictly inside (0, pi).
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    frequencies: Vec<f64>,
}

impl FrequencyGrid {
    /// Build from explicit frequencies; they must be strictly increasing and
    /// lie strictly inside (0, pi).
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::invalid("frequency grid must be nonempty"));
        }
        for w in &frequencies {
            if !(*w > 0.0 && *w < std::f64::consts::PI) {
                return Err(Error::invalid(format!(
                    "grid frequency {w} is outside (0, pi)"
                )));
            }
        }
        if frequencies.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid frequencies must be strictly increasing"));
        }
        Ok(Self { frequencies })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn count(&self) -> usize {
        self.frequencies.len()
    }
}

/// The positive Fourier frequencies {2 pi j / T : j = 1, ..., floor((T-1)/2)},
/// all strictly inside (0, pi).
pub fn fourier_grid(t_len: usize) -> Result<FrequencyGrid> {
    if t_len < 4 {
        return Err(Error::invalid(format!(
            "series length {t_len} too small for a frequency grid (need T >= 4)"
        )));
    }
    let step = 2.0 * std::f64::consts::PI / t_len as f64;
    let count = (t_len - 1) / 2;
    let frequencies = (1..=count).map(|j| j as f64 * step).collect();
    Ok(FrequencyGrid { frequencies })
}

/// A frequency band (lo, hi) with 0 <= lo < hi <= pi. Grid filtering is
/// strict-interior: a grid point belongs to the band iff lo < w < hi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBand {
    pub lo: f64,
    pub hi: f64,
}

impl FrequencyBand {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi > std::f64::consts::PI || lo >= hi
        {
            return Err(Error::invalid(format!(
                "invalid frequency band ({lo}, {hi}): need 0 <= lo < hi <= pi"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The full band (0, pi).
    pub fn full() -> Self {
        Self {
            lo: 0.0,
            hi: std::f64::consts::PI,
        }
    }

    pub fn contains(&self, w: f64) -> bool {
        self.lo < w && w < self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Read a series from a comma-separated UTF-8 file: one time point per row,
/// one component per column, optional single header row. Row/column indices
/// in errors are 1-based and count data rows only.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<MultivariateSeries> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path_str.clone(), e))?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if has_header {
        lines.next();
    }
    for (i, line) in lines.enumerate() {
        let row_idx = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::Parse {
                path: path_str,
                row: row_idx,
                col: fields.len().min(expected) + 1,
                message: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        let mut row = Vec::with_capacity(expected);
        for (c, field) in fields.iter().enumerate() {
            let trimmed = field.trim();
            let value: f64 = trimmed.parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                row: row_idx,
                col: c + 1,
                message: format!("not a number: {trimmed:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: path_str.clone(),
                    row: row_idx,
                    col: c + 1,
                    message: format!("non-finite value: {trimmed:?}"),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{path_str}: no data rows")));
    }
    let t_len = rows.len();
    let p = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((t_len, p), flat)
        .expect("row-major reshape of validated rows");
    MultivariateSeries::new(values)
}

/// Write a series as CSV without a header. Values use the shortest exact
/// decimal representation, so a load_csv round trip reproduces the series
/// bit for bit.
pub fn write_csv(series: &MultivariateSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in series.values().rows() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("write to String");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
