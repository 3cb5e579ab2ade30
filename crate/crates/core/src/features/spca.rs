use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of components kept per feature set.
pub const COMPONENTS: usize = 2;

/// Supervised PCA loadings: leading eigenvectors of
/// `XᵀX + μ·(Xᵀy)(Xᵀy)ᵀ`, one column per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedPcaState {
    pub mu: f64,
    /// `loadings[k]` is component `k` over the input columns.
    pub loadings: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

pub fn fit_supervised_pca(x: &DMatrix<f64>, y: &[f64], mu: f64) -> Result<SupervisedPcaState> {
    let (n, d) = x.shape();
    if d < COMPONENTS {
        return Err(Error::InsufficientData(format!(
            "supervised PCA needs at least {COMPONENTS} columns, got {d}"
        )));
    }
    if n <= COMPONENTS {
        return Err(Error::InsufficientData(format!("supervised PCA needs more than {COMPONENTS} rows")));
    }
    if y.len() != n {
        return Err(Error::Structural("label count differs from row count".into()));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::value("mu", "must be a finite value >= 0"));
    }
    let xty = x.transpose() * DVector::from_column_slice(y);
    let m = x.transpose() * x + (&xty * xty.transpose()) * mu;
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut loadings = Vec::with_capacity(COMPONENTS);
    let mut eigenvalues = Vec::with_capacity(COMPONENTS);
    for &k in idx.iter().take(COMPONENTS) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let big = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[big] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        loadings.push(v);
        eigenvalues.push(eig.eigenvalues[k]);
    }
    Ok(SupervisedPcaState {
        mu,
        loadings,
        eigenvalues,
    })
}

impl SupervisedPcaState {
    pub fn n_input(&self) -> usize {
        self.loadings[0].len()
    }

    /// `X · loadings`, an n×2 matrix.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self.n_input();
        if x.ncols() != d {
            return Err(Error::Structural(format!("projection expects {d} columns, got {}", x.ncols())));
        }
        let w = DMatrix::from_fn(d, self.loadings.len(), |r, c| self.loadings[c][r]);
        Ok(x * w)
    }

    pub fn project_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let d = self.n_input();
        if row.len() != d {
            return Err(Error::Structural(format!("projection expects {d} columns, got {}", row.len())));
        }
        Ok(self
            .loadings
            .iter()
            .map(|l| l.iter().zip(row).map(|(a, b)| a * b).sum())
            .collect())
    }
}
