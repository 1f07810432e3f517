//! Closed-form ridge-regression unlearning.
//!
//! For `theta* = A^{-1} X^T y` with `A = X^T X + penalty I`, removing row `i`
//! moves the solution by
//!
//! ```text
//! (x_i^T theta* - y_i) / (1 - x_i^T A^{-1} x_i) * A^{-1} x_i
//! ```
//!
//! while replacing the row by `(x_i', y_i')` solves `(A + M) theta = X^T y + B`
//! with `r = x_i' - x_i`, `s = y_i' - y_i`, `M = x_i r^T + r x_i^T + r r^T`
//! and `B = x_i s + r y_i'`. [`retrain_oracle`](RidgeProblem::retrain_oracle)
//! rebuilds the edited dataset and refits from scratch; it exists to check the
//! closed forms.

use log::warn;
use thiserror::Error;

use crate::tensor::{rank_one_inverse_apply, spd_solve, DenseMatrix, DenseVector, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RidgeError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("ridge penalty must be positive (got {0}); use allow_zero_penalty to override")]
    NonPositivePenalty(f64),
    #[error("row index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("degenerate edit: {0}")]
    DegenerateEdit(&'static str),
    #[error("invalid edit: {0}")]
    InvalidEdit(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Clone, Debug)]
pub struct RidgeProblem {
    x: DenseMatrix,
    y: DenseVector,
    penalty: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowEdit {
    Remove { index: usize },
    Replace { index: usize, x_new: DenseVector, y_new: f64 },
}

impl RowEdit {
    pub fn index(&self) -> usize {
        match self {
            RowEdit::Remove { index } | RowEdit::Replace { index, .. } => *index,
        }
    }
}

/// Parameter shift produced by an unlearning update.
#[derive(Clone, Debug, PartialEq)]
pub struct Shift {
    pub delta: DenseVector,
    pub theta_new: DenseVector,
}

/// One point of a y_new sweep comparing removal against label replacement.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub y_new: f64,
    pub exact_shift: f64,
    pub surrogate_shift: f64,
    pub ratio: f64,
}

impl RidgeProblem {
    pub fn new(x: DenseMatrix, y: DenseVector, penalty: f64) -> Result<Self, RidgeError> {
        if penalty <= 0.0 || !penalty.is_finite() {
            return Err(RidgeError::NonPositivePenalty(penalty));
        }
        Self::allow_zero_penalty(x, y, penalty)
    }

    /// Accepts `penalty = 0`. The normal equations may then be singular and
    /// fail with `NotSpd` when `X` is rank deficient.
    pub fn allow_zero_penalty(x: DenseMatrix, y: DenseVector, penalty: f64) -> Result<Self, RidgeError> {
        if x.rows() != y.len() {
            return Err(RidgeError::DimensionMismatch { expected: x.rows(), found: y.len() });
        }
        if x.rows() == 0 || x.cols() == 0 {
            return Err(RidgeError::InvalidEdit("design matrix must have at least one row and column"));
        }
        if penalty < 0.0 {
            return Err(RidgeError::NonPositivePenalty(penalty));
        }
        if penalty == 0.0 {
            warn!("ridge penalty is zero; A = X^T X may be singular");
        }
        Ok(Self { x, y, penalty })
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn y(&self) -> &DenseVector {
        &self.y
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn row(&self, i: usize) -> Result<DenseVector, RidgeError> {
        self.check_index(i)?;
        Ok(DenseVector::from_vec(self.x.row(i).to_vec()))
    }

    fn check_index(&self, i: usize) -> Result<(), RidgeError> {
        if i >= self.rows() {
            return Err(RidgeError::IndexOutOfRange { index: i, rows: self.rows() });
        }
        Ok(())
    }

    /// `A = X^T X + penalty I`
    pub fn system_matrix(&self) -> DenseMatrix {
        let mut a = self.x.gram();
        a.add_diagonal(self.penalty);
        a
    }

    fn xty(&self) -> DenseVector {
        self.x.transpose_matvec(&self.y).expect("shape checked at construction")
    }

    pub fn ridge_fit(&self) -> Result<DenseVector, RidgeError> {
        Ok(spd_solve(&self.system_matrix(), &self.xty())?)
    }

    /// `x_i^T A^{-1} x_i`
    pub fn leverage(&self, i: usize) -> Result<f64, RidgeError> {
        let xi = self.row(i)?;
        Ok(xi.dot(&spd_solve(&self.system_matrix(), &xi)?))
    }

    /// Closed-form shift from removing row `i`.
    pub fn exact_unlearn(&self, i: usize) -> Result<Shift, RidgeError> {
        let xi = self.row(i)?;
        let theta = self.ridge_fit()?;
        let residual = xi.dot(&theta) - self.y[i];
        // (A - x_i x_i^T)^{-1} x_i = A^{-1} x_i / (1 - leverage)
        let direction = rank_one_inverse_apply(&self.system_matrix(), &xi)?;
        let delta = direction.scaled(residual);
        let theta_new = theta.add(&delta);
        Ok(Shift { delta, theta_new })
    }

    /// Closed-form shift from replacing row `i` with `(x_new, y_new)`.
    pub fn surrogate_unlearn(&self, edit: &RowEdit) -> Result<Shift, RidgeError> {
        let RowEdit::Replace { index, x_new, y_new } = edit else {
            return Err(RidgeError::InvalidEdit("surrogate unlearning needs a Replace edit"));
        };
        let xi = self.row(*index)?;
        if x_new.len() != self.dim() {
            return Err(RidgeError::DimensionMismatch { expected: self.dim(), found: x_new.len() });
        }
        let a = self.system_matrix();
        let xty = self.xty();
        let theta = spd_solve(&a, &xty)?;

        let r = x_new.sub(&xi);
        let s = y_new - self.y[*index];
        let mut a_m = a;
        a_m.add_outer(1.0, &xi, &r);
        a_m.add_outer(1.0, &r, &xi);
        a_m.add_outer(1.0, &r, &r);
        let mut rhs = xty;
        rhs.axpy(s, &xi);
        rhs.axpy(*y_new, &r);

        let theta_new = spd_solve(&a_m, &rhs)?;
        let delta = theta_new.sub(&theta);
        Ok(Shift { delta, theta_new })
    }

    /// Refits from scratch on the edited dataset.
    pub fn retrain_oracle(&self, edit: &RowEdit) -> Result<DenseVector, RidgeError> {
        let i = edit.index();
        self.check_index(i)?;
        let mut rows: Vec<Vec<f64>> = (0..self.rows()).map(|r| self.x.row(r).to_vec()).collect();
        let mut labels = self.y.clone().into_vec();
        match edit {
            RowEdit::Remove { .. } => {
                if self.rows() < 2 {
                    return Err(RidgeError::InvalidEdit("cannot remove the only row"));
                }
                rows.remove(i);
                labels.remove(i);
            }
            RowEdit::Replace { x_new, y_new, .. } => {
                if x_new.len() != self.dim() {
                    return Err(RidgeError::DimensionMismatch { expected: self.dim(), found: x_new.len() });
                }
                rows[i] = x_new.as_slice().to_vec();
                labels[i] = *y_new;
            }
        }
        let edited = RidgeProblem {
            x: DenseMatrix::from_rows(&rows)?,
            y: DenseVector::from_vec(labels),
            penalty: self.penalty,
        };
        edited.ridge_fit()
    }

    /// `||theta~ - theta*|| / ||theta_dagger - theta*||` for a label-only
    /// replacement of row `i`:
    /// `|x_i^T theta* - y_i| / (|y_new - y_i| |1 - x_i^T A^{-1} x_i|)`.
    /// Values above one mean the replacement stays closer to `theta*`.
    pub fn preservation_ratio(&self, i: usize, y_new: f64) -> Result<f64, RidgeError> {
        let xi = self.row(i)?;
        if xi.iter().all(|v| *v == 0.0) {
            return Err(RidgeError::DegenerateEdit("row features are zero"));
        }
        if y_new == self.y[i] {
            return Err(RidgeError::DegenerateEdit("replacement label equals the original"));
        }
        let theta = self.ridge_fit()?;
        let leverage = self.leverage(i)?;
        Ok((xi.dot(&theta) - self.y[i]).abs() / ((y_new - self.y[i]).abs() * (1.0 - leverage).abs()))
    }

    /// Label-only replacement sweep over `y_grid` for row `i`. Grid points equal
    /// to `y_i` are skipped.
    pub fn comparison_sweep(&self, i: usize, y_grid: &[f64]) -> Result<Vec<SweepRow>, RidgeError> {
        let exact_shift = self.exact_unlearn(i)?.delta.norm();
        let xi = self.row(i)?;
        let mut out = Vec::with_capacity(y_grid.len());
        for &y_new in y_grid {
            if y_new == self.y[i] {
                continue;
            }
            let edit = RowEdit::Replace { index: i, x_new: xi.clone(), y_new };
            let surrogate_shift = self.surrogate_unlearn(&edit)?.delta.norm();
            out.push(SweepRow { y_new, exact_shift, surrogate_shift, ratio: self.preservation_ratio(i, y_new)? });
        }
        Ok(out)
    }
}

/// `||a - b|| / (1 + ||b||)`
pub fn relative_error(a: &DenseVector, b: &DenseVector) -> f64 {
    a.sub(b).norm() / (1.0 + b.norm())
}

/// The one-dimensional instance used by the ridge demo: five collinear-ish
/// points with the last one pulled off the trend.
pub fn demo_instance() -> RidgeProblem {
    let x = DenseMatrix::from_rows(&[vec![0.5], vec![1.0], vec![1.5], vec![2.0], vec![2.5]]).unwrap();
    let y = DenseVector::from_vec(vec![0.6, 1.1, 1.4, 2.1, 4.0]);
    RidgeProblem::new(x, y, 0.1).unwrap()
}

/// Evenly spaced label grid centred on the edited row's label.
pub fn label_grid(center: f64, half_width: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2);
    (0..points)
        .map(|k| center - half_width + 2.0 * half_width * k as f64 / (points - 1) as f64)
        .collect()
}
