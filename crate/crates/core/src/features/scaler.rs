use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column standardization fitted on training rows.
///
/// Uses the population (divide by n) standard deviation. Columns with zero
/// variance are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub n_input: usize,
    /// Indices of retained input columns.
    pub kept: Vec<usize>,
    /// Indices of zero-variance input columns.
    pub dropped: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_scaler(x: &DMatrix<f64>) -> Result<ScalerState> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::InsufficientData(format!("scaler needs 2 rows, got {n}")));
    }
    let mut st = ScalerState {
        n_input: d,
        kept: Vec::new(),
        dropped: Vec::new(),
        mean: Vec::new(),
        std: Vec::new(),
    };
    for j in 0..d {
        let col = x.column(j);
        let m = col.sum() / n as f64;
        let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
        if s > 1e-12 * m.abs().max(1.0) {
            st.kept.push(j);
            st.mean.push(m);
            st.std.push(s);
        } else {
            st.dropped.push(j);
        }
    }
    Ok(st)
}

impl ScalerState {
    pub fn n_output(&self) -> usize {
        self.kept.len()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.n_input {
            return Err(Error::Structural(format!(
                "scaler fitted on {} columns, got {}",
                self.n_input,
                x.ncols()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), self.kept.len(), |r, c| {
            (x[(r, self.kept[c])] - self.mean[c]) / self.std[c]
        }))
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_input {
            return Err(Error::Structural(format!(
                "scaler fitted on {} columns, got {}",
                self.n_input,
                row.len()
            )));
        }
        Ok(self
            .kept
            .iter()
            .enumerate()
            .map(|(c, &j)| (row[j] - self.mean[c]) / self.std[c])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_checked_column() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let z = fit_scaler(&x).unwrap().transform(&x).unwrap();
        let e = (1.5f64).sqrt();
        for (got, want) in z.iter().zip([-e, 0.0, e]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((e - 1.224_744_871_391_589).abs() < 1e-15);
    }

    #[test]
    fn constant_column_dropped() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 4.0, 5.0]);
        let st = fit_scaler(&x).unwrap();
        assert_eq!(st.dropped, vec![1]);
        assert_eq!(st.transform(&x).unwrap().ncols(), 1);
    }

    #[test]
    fn refit_on_transformed_is_standard() {
        let x = DMatrix::from_fn(50, 3, |r, c| ((r * 7 + c * 3) % 11) as f64 * (c + 1) as f64);
        let z = fit_scaler(&x).unwrap().transform(&x).unwrap();
        let st = fit_scaler(&z).unwrap();
        for (m, s) in st.mean.iter().zip(&st.std) {
            assert!(m.abs() < 1e-10 && (s - 1.0).abs() < 1e-10);
        }
    }
}
