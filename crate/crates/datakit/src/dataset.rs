//! CSV ingestion and emission for series matrices and forecasts.
//!
//! Layout: one series per row, one timestamp per column, comma separated.
//! An optional header row carries timestamp labels and an optional first
//! column carries series identifiers; both are detected from the content.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use nmfcast_core::smm::SeriesMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} contains no data rows")]
    Empty { path: String },
    #[error("{path}:{row}: expected {expected} value columns, found {found}")]
    Ragged {
        path: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{row}:{col}: cannot parse {cell:?} as a number")]
    Malformed {
        path: String,
        row: usize,
        col: usize,
        cell: String,
    },
    #[error("{path}:{row}:{col}: negative value {value} (series must be nonnegative)")]
    Negative {
        path: String,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error(transparent)]
    Core(#[from] nmfcast_core::Error),
}

/// A parsed dataset: the nonnegative matrix plus whatever labels the file
/// carried.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: SeriesMatrix<f64>,
    pub series_ids: Option<Vec<String>>,
    pub timestamps: Option<Vec<String>>,
}

impl Dataset {
    pub fn n_series(&self) -> usize {
        self.series.n_series()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: display.clone(),
        source,
    })?;
    parse_dataset(&text, &display)
}

fn parse_dataset(text: &str, path: &str) -> Result<Dataset, DatasetError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    if lines.is_empty() {
        return Err(DatasetError::Empty { path: path.into() });
    }

    let is_number = |s: &str| s.trim().parse::<f64>().is_ok();
    let header_present = lines[0].1.split(',').any(|c| !is_number(c));
    let data = &lines[if header_present { 1 } else { 0 }..];
    if data.is_empty() {
        return Err(DatasetError::Empty { path: path.into() });
    }
    let ids_present = data.iter().any(|(_, l)| {
        let first = l.split(',').next().unwrap_or("");
        !is_number(first)
    });
    let skip = usize::from(ids_present);

    let mut ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(data.len());
    let mut width: Option<usize> = None;
    for (line_no, line) in data {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() <= skip {
            return Err(DatasetError::Ragged {
                path: path.into(),
                row: *line_no,
                expected: width.unwrap_or(1),
                found: 0,
            });
        }
        if ids_present {
            ids.push(cells[0].trim().to_string());
        }
        let values = &cells[skip..];
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(DatasetError::Ragged {
                    path: path.into(),
                    row: *line_no,
                    expected: w,
                    found: values.len(),
                });
            }
            _ => {}
        }
        let mut parsed = Vec::with_capacity(values.len());
        for (j, cell) in values.iter().enumerate() {
            let col = skip + j + 1;
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| DatasetError::Malformed {
                    path: path.into(),
                    row: *line_no,
                    col,
                    cell: cell.trim().to_string(),
                })?;
            if !v.is_finite() {
                return Err(DatasetError::Malformed {
                    path: path.into(),
                    row: *line_no,
                    col,
                    cell: cell.trim().to_string(),
                });
            }
            if v < 0.0 {
                return Err(DatasetError::Negative {
                    path: path.into(),
                    row: *line_no,
                    col,
                    value: v,
                });
            }
            parsed.push(v);
        }
        rows.push(parsed);
    }

    let n = rows.len();
    let t = width.unwrap_or(0);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let matrix = Array2::from_shape_vec((n, t), flat).expect("checked width");

    let timestamps = if header_present {
        let labels: Vec<String> = lines[0]
            .1
            .split(',')
            .skip(skip)
            .map(|c| c.trim().to_string())
            .collect();
        (labels.len() == t).then_some(labels)
    } else {
        None
    };

    Ok(Dataset {
        series: SeriesMatrix::new(matrix)?,
        series_ids: ids_present.then_some(ids),
        timestamps,
    })
}

/// Writes a matrix as CSV, optionally with series ids and column labels.
/// Values are printed with the shortest round-trip representation, so a
/// reload reproduces them exactly.
pub fn save_matrix(
    path: impl AsRef<Path>,
    matrix: &Array2<f64>,
    series_ids: Option<&[String]>,
    column_labels: Option<&[String]>,
) -> std::io::Result<()> {
    let mut out = String::new();
    if let Some(labels) = column_labels {
        if series_ids.is_some() {
            out.push_str("id,");
        }
        out.push_str(&labels.join(","));
        out.push('\n');
    }
    for (i, row) in matrix.rows().into_iter().enumerate() {
        if let Some(ids) = series_ids {
            let _ = write!(out, "{},", ids[i]);
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// Writes a forecast block, inheriting the ids of the input dataset and
/// labeling the forecast columns `f1..fF`.
pub fn save_forecast(
    path: impl AsRef<Path>,
    forecast: &Array2<f64>,
    dataset: &Dataset,
) -> std::io::Result<()> {
    let labels: Vec<String> = (1..=forecast.ncols()).map(|f| format!("f{f}")).collect();
    save_matrix(
        path,
        forecast,
        dataset.series_ids.as_deref(),
        Some(&labels),
    )
}
