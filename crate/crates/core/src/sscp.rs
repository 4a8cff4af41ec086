//! Weighted sum-of-squares-and-cross-products matrices: the unit of exchange
//! between data partners and the coordinator.

use crate::error::{DraError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::wire;

/// Label of the working-outcome column appended after the design columns.
pub const WORKING_OUTCOME_LABEL: &str = "_Y_";

/// Labeled symmetric matrix `AᵀWA` plus the observation-count sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct SscpMatrix<S> {
    labels: Vec<String>,
    values: Matrix<S>,
    n_obs: S,
    sum_weights: S,
}

impl<S: Scalar> SscpMatrix<S> {
    pub fn new(labels: Vec<String>, values: Matrix<S>, n_obs: S, sum_weights: S) -> Result<Self> {
        if !values.is_square() || values.rows() != labels.len() {
            return Err(DraError::Protocol(format!(
                "SSCP matrix is {}x{} but has {} labels",
                values.rows(),
                values.cols(),
                labels.len()
            )));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(DraError::Protocol("SSCP labels are not unique".into()));
        }
        if !values.is_symmetric() {
            return Err(DraError::Protocol("SSCP matrix is not symmetric".into()));
        }
        if !(n_obs >= S::zero()) {
            return Err(DraError::Protocol("SSCP observation count is negative".into()));
        }
        Ok(Self {
            labels,
            values,
            n_obs,
            sum_weights,
        })
    }

    pub fn zeros(labels: Vec<String>) -> Self {
        let d = labels.len();
        Self {
            labels,
            values: Matrix::zeros(d, d),
            n_obs: S::zero(),
            sum_weights: S::zero(),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &Matrix<S> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn n_obs(&self) -> S {
        self.n_obs
    }

    pub fn sum_weights(&self) -> S {
        self.sum_weights
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.values[(i, j)]
    }

    /// True when the last column is the working outcome.
    pub fn has_outcome(&self) -> bool {
        self.labels.last().is_some_and(|l| l == WORKING_OUTCOME_LABEL)
    }

    /// Design labels (everything except a trailing working outcome).
    pub fn design_labels(&self) -> &[String] {
        if self.has_outcome() {
            &self.labels[..self.labels.len() - 1]
        } else {
            &self.labels
        }
    }

    /// `ZᵀW̃Z` block.
    pub fn cross_product_block(&self) -> Matrix<S> {
        self.values.leading_block(self.design_labels().len())
    }

    /// Elementwise in-place sum. Labels must match exactly.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        if self.labels != other.labels {
            return Err(DraError::Protocol(format!(
                "SSCP labels differ: expected [{}], found [{}]",
                self.labels.join(" "),
                other.labels.join(" ")
            )));
        }
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                self.values[(i, j)] += other.values[(i, j)];
            }
        }
        self.n_obs += other.n_obs;
        self.sum_weights += other.sum_weights;
        Ok(())
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut rows: Vec<Vec<String>> = Vec::with_capacity(self.dim() + 3);
        let mut header = vec!["_TYPE_".to_string(), "_NAME_".to_string()];
        header.extend(self.labels.iter().cloned());
        rows.push(header);
        let side = |tag: &str, v: S| {
            let mut r = vec![tag.to_string(), String::new()];
            r.extend(std::iter::repeat_n(wire::fmt17(v), self.dim()));
            r
        };
        rows.push(side("N", self.n_obs));
        rows.push(side("SUMWGT", self.sum_weights));
        for (i, label) in self.labels.iter().enumerate() {
            let mut r = vec!["SSCP".to_string(), label.clone()];
            r.extend(self.values.row(i).iter().map(|&v| wire::fmt17(v)));
            rows.push(r);
        }
        wire::write_rows(&rows)
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let rows = wire::read_rows(bytes)?;
        let header = rows.first().ok_or_else(|| DraError::Protocol("empty SSCP file".into()))?;
        if header.len() < 3 || header[0] != "_TYPE_" || header[1] != "_NAME_" {
            return Err(DraError::Protocol("SSCP file has an unexpected header".into()));
        }
        let labels: Vec<String> = header[2..].to_vec();
        let d = labels.len();
        let mut n_obs = None;
        let mut sum_weights = None;
        let mut values = Matrix::zeros(d, d);
        let mut seen = vec![false; d];
        for row in &rows[1..] {
            if row.len() != d + 2 {
                return Err(DraError::Protocol("SSCP row has the wrong width".into()));
            }
            match row[0].as_str() {
                "N" => n_obs = Some(wire::parse_num::<S>(&row[2])?),
                "SUMWGT" => sum_weights = Some(wire::parse_num::<S>(&row[2])?),
                "SSCP" => {
                    let i = labels
                        .iter()
                        .position(|l| *l == row[1])
                        .ok_or_else(|| DraError::Protocol(format!("unknown SSCP row `{}`", row[1])))?;
                    for j in 0..d {
                        values[(i, j)] = wire::parse_num(&row[j + 2])?;
                    }
                    seen[i] = true;
                }
                other => return Err(DraError::Protocol(format!("unknown SSCP row type `{other}`"))),
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(DraError::Protocol("SSCP file is missing rows".into()));
        }
        Self::new(
            labels,
            values,
            n_obs.ok_or_else(|| DraError::Protocol("SSCP file lacks the N row".into()))?,
            sum_weights.ok_or_else(|| DraError::Protocol("SSCP file lacks the SUMWGT row".into()))?,
        )
    }
}
