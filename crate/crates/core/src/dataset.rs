//! Synthetic one-parameter datasets: each example carries an ordering
//! coordinate `t` and a data vector `y(t)`.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::exact;

pub const MULTISINE_RATES: [f64; 5] = [0.5, 1.0, 2.0, 3.0, 5.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("unknown dataset kind `{0}`")]
    UnknownKind(String),
    #[error("dataset needs at least 2 points, got {0}")]
    TooSmall(usize),
    #[error("malformed dataset file at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Sinc,
    Multisine,
}

impl std::str::FromStr for DatasetKind {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sinc" => Ok(DatasetKind::Sinc),
            "multisine" => Ok(DatasetKind::Multisine),
            other => Err(DatasetError::UnknownKind(other.to_string())),
        }
    }
}

/// `sin(πu)/(πu)` (normalized) or `sin(u)/u` (unnormalized).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SincConvention {
    #[default]
    Normalized,
    Unnormalized,
}

pub fn sinc(u: f64, convention: SincConvention) -> f64 {
    let arg = match convention {
        SincConvention::Normalized => PI * u,
        SincConvention::Unnormalized => u,
    };
    if arg == 0.0 {
        1.0
    } else {
        arg.sin() / arg
    }
}

/// Columns presented to a model: the values alone, or the ordering
/// coordinate followed by the values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputLayout {
    Values,
    CoordinateAndValues,
}

impl InputLayout {
    /// Sinc curves are learned as points `(t, y)`; multisine vectors alone already trace a curve.
    pub fn default_for(kind: DatasetKind) -> Self {
        match kind {
            DatasetKind::Sinc => InputLayout::CoordinateAndValues,
            DatasetKind::Multisine => InputLayout::Values,
        }
    }

    /// Index of the first value column in a model input or output.
    pub fn value_offset(self) -> usize {
        match self {
            InputLayout::Values => 0,
            InputLayout::CoordinateAndValues => 1,
        }
    }

    pub fn input_dim(self, values_dim: usize) -> usize {
        values_dim + self.value_offset()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub coordinates: Vec<f64>,
    /// One row per example.
    pub values: Array2<f64>,
}

impl Dataset {
    pub fn new(coordinates: Vec<f64>, values: Array2<f64>) -> Result<Self, DatasetError> {
        if coordinates.len() != values.nrows() {
            return Err(DatasetError::Parse {
                line: 0,
                reason: format!(
                    "{} coordinates for {} rows",
                    coordinates.len(),
                    values.nrows()
                ),
            });
        }
        if coordinates.len() < 2 {
            return Err(DatasetError::TooSmall(coordinates.len()));
        }
        Ok(Self {
            coordinates,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.coordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coordinates.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Model input matrix (one row per example) for `layout`.
    pub fn model_inputs(&self, layout: InputLayout) -> Array2<f64> {
        match layout {
            InputLayout::Values => self.values.clone(),
            InputLayout::CoordinateAndValues => {
                let mut x = Array2::zeros((self.len(), self.dim() + 1));
                x.column_mut(0).assign(&ndarray::ArrayView1::from(&self.coordinates));
                x.slice_mut(ndarray::s![.., 1..]).assign(&self.values);
                x
            }
        }
    }

    /// Rows at the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            coordinates: indices.iter().map(|&i| self.coordinates[i]).collect(),
            values: self.values.select(ndarray::Axis(0), indices),
        }
    }

    /// `t,y_0,…,y_{d-1}` with seventeen significant digits, so reloading is exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for j in 0..self.dim() {
            out.push_str(&format!(",y_{j}"));
        }
        out.push('\n');
        for (t, row) in self.coordinates.iter().zip(self.values.outer_iter()) {
            out.push_str(&exact(*t));
            for v in row {
                out.push(',');
                out.push_str(&exact(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, DatasetError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(DatasetError::TooSmall(0))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(DatasetError::Parse {
                line: 1,
                reason: "header must start with `t` followed by y columns".into(),
            });
        }
        for (j, c) in cols[1..].iter().enumerate() {
            if *c != format!("y_{j}") {
                return Err(DatasetError::Parse {
                    line: 1,
                    reason: format!("expected column y_{j}, found `{c}`"),
                });
            }
        }
        let d = cols.len() - 1;
        let mut coordinates = Vec::new();
        let mut flat = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d + 1 {
                return Err(DatasetError::Parse {
                    line: i + 1,
                    reason: format!("expected {} fields, found {}", d + 1, fields.len()),
                });
            }
            let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let parsed = parsed.map_err(|e| DatasetError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            coordinates.push(parsed[0]);
            flat.extend_from_slice(&parsed[1..]);
        }
        let n = coordinates.len();
        let values = Array2::from_shape_vec((n, d), flat).expect("row lengths checked");
        Dataset::new(coordinates, values)
    }
}

/// Equispaced `t ∈ [−1, 1]` with `y = sinc(5t)` or `y = [sin(2πrt)]_r`.
///
/// Both kinds are deterministic grids; `_seed` is accepted so every dataset
/// source shares one signature.
pub fn gen_dataset(
    kind: DatasetKind,
    size: usize,
    convention: SincConvention,
    _seed: u64,
) -> Result<Dataset, DatasetError> {
    if size < 2 {
        return Err(DatasetError::TooSmall(size));
    }
    let coordinates: Vec<f64> = (0..size)
        .map(|i| -1.0 + 2.0 * i as f64 / (size - 1) as f64)
        .collect();
    let values = match kind {
        DatasetKind::Sinc => Array2::from_shape_fn((size, 1), |(i, _)| sinc(5.0 * coordinates[i], convention)),
        DatasetKind::Multisine => Array2::from_shape_fn((size, MULTISINE_RATES.len()), |(i, j)| {
            (2.0 * PI * MULTISINE_RATES[j] * coordinates[i]).sin()
        }),
    };
    Dataset::new(coordinates, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinc_peak_and_zeros() {
        let d = gen_dataset(DatasetKind::Sinc, 101, SincConvention::Normalized, 0).unwrap();
        assert_eq!(d.coordinates[50], 0.0);
        assert_eq!(d.values[(50, 0)], 1.0);
        // Normalized sinc(5t) vanishes at t = ±0.2.
        assert!(d.values[(60, 0)].abs() < 1e-15);
        assert!(d.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(sinc(0.0, SincConvention::Unnormalized), 1.0);
        assert!((sinc(PI, SincConvention::Unnormalized)).abs() < 1e-16);
    }

    #[test]
    fn multisine_at_origin_is_zero() {
        let d = gen_dataset(DatasetKind::Multisine, 21, SincConvention::Normalized, 0).unwrap();
        assert_eq!(d.dim(), 5);
        assert!(d.values.row(10).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn csv_is_byte_stable_and_exact() {
        let a = gen_dataset(DatasetKind::Multisine, 64, SincConvention::Normalized, 3).unwrap();
        let b = gen_dataset(DatasetKind::Multisine, 64, SincConvention::Normalized, 3).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with("t,y_0,y_1,y_2,y_3,y_4\n"));
        let back = Dataset::from_csv(&a.to_csv()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn model_inputs_layouts() {
        let d = gen_dataset(DatasetKind::Sinc, 5, SincConvention::Normalized, 0).unwrap();
        assert_eq!(d.model_inputs(InputLayout::Values), d.values);
        let x = d.model_inputs(InputLayout::CoordinateAndValues);
        assert_eq!(x.dim(), (5, 2));
        assert_eq!(x[(0, 0)], -1.0);
        assert_eq!(x[(2, 1)], 1.0);
        assert_eq!(InputLayout::default_for(DatasetKind::Sinc).input_dim(1), 2);
    }

    #[test]
    fn errors() {
        assert_eq!("gauss".parse::<DatasetKind>().unwrap_err(), DatasetError::UnknownKind("gauss".into()));
        assert_eq!(
            gen_dataset(DatasetKind::Sinc, 1, SincConvention::Normalized, 0).unwrap_err(),
            DatasetError::TooSmall(1)
        );
        assert!(Dataset::from_csv("x,y_0\n1,2\n3,4\n").is_err());
        assert!(Dataset::from_csv("t,y_0\n1,2\n3\n").is_err());
    }
}
