//! The change of variables between effects and error quantiles, q-values,
//! and reordering of a dataset by q-value.
//!
//! For a location-family error with CDF `F_i`, the error quantile is
//! `u_i = F_i(y_i - theta_i)` and its inverse is `theta_i = y_i - F_i^{-1}(u_i)`.

use crate::dist::{self, DistSpec};
use crate::error::{Error, Result};

/// Probabilities are clamped to `[U_EPS, 1 - U_EPS]` before inversion.
pub const U_EPS: f64 = 1e-14;

/// Per-coordinate error distributions, one location family per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    dists: Vec<DistSpec>,
}

impl ErrorModel {
    pub fn new(dists: Vec<DistSpec>) -> Result<Self> {
        for d in &dists {
            if !d.is_location_family() {
                return Err(Error::Unsupported { op: "error model", dist: format!("{d:?}") });
            }
            d.validate()?;
        }
        Ok(Self { dists })
    }

    /// The same error distribution for all `p` coordinates.
    pub fn iid(dist: DistSpec, p: usize) -> Result<Self> {
        Self::new(vec![dist; p])
    }

    pub fn standard_normal(p: usize) -> Self {
        Self { dists: vec![DistSpec::standard_normal(); p] }
    }

    pub fn len(&self) -> usize {
        self.dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.is_empty()
    }

    pub fn get(&self, i: usize) -> &DistSpec {
        &self.dists[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DistSpec> {
        self.dists.iter()
    }

    fn permuted(&self, order: &[usize]) -> Self {
        Self { dists: order.iter().map(|&i| self.dists[i].clone()).collect() }
    }

    /// Zero-mean normal standard deviations, if every error is of that form.
    pub fn normal_sds(&self) -> Option<Vec<f64>> {
        self.dists
            .iter()
            .map(|d| match *d {
                DistSpec::Normal { mean: 0.0, sd } => Some(sd),
                _ => None,
            })
            .collect()
    }
}

/// Observations with their error model, q-values and ordering bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelDataset {
    y: Vec<f64>,
    errors: ErrorModel,
    q_values: Vec<f64>,
    /// `ordering[original_index] = current position`.
    ordering: Vec<usize>,
    true_theta: Option<Vec<f64>>,
}

impl ParallelDataset {
    pub fn new(y: Vec<f64>, errors: ErrorModel) -> Result<Self> {
        if y.len() != errors.len() {
            return Err(Error::LengthMismatch { expected: y.len(), got: errors.len() });
        }
        if let Some(&bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "y", value: bad, reason: "must be finite" });
        }
        let q = q_values_of(&y, &errors);
        let p = y.len();
        Ok(Self { y, errors, q_values: q, ordering: (0..p).collect(), true_theta: None })
    }

    pub fn with_true_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.y.len() {
            return Err(Error::LengthMismatch { expected: self.y.len(), got: theta.len() });
        }
        self.true_theta = Some(theta);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn errors(&self) -> &ErrorModel {
        &self.errors
    }

    pub fn q_values(&self) -> &[f64] {
        &self.q_values
    }

    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn true_theta(&self) -> Option<&[f64]> {
        self.true_theta.as_deref()
    }

    /// True when q-values are nondecreasing.
    pub fn is_reordered(&self) -> bool {
        self.q_values.windows(2).all(|w| w[0] <= w[1])
    }

    /// Maps a vector in current (sorted) order back to original order.
    pub fn to_original_order(&self, values: &[f64]) -> Vec<f64> {
        self.ordering.iter().map(|&pos| values[pos]).collect()
    }
}

fn q_values_of(y: &[f64], errors: &ErrorModel) -> Vec<f64> {
    y.iter().zip(errors.iter()).map(|(&yi, d)| dist::cdf(d, yi).expect("location family")).collect()
}

/// `u_i = F_i(y_i - theta_i)`.
pub fn u_from_theta(ds: &ParallelDataset, theta: &[f64]) -> Result<Vec<f64>> {
    check_len(ds, theta.len())?;
    Ok(ds
        .y
        .iter()
        .zip(theta)
        .zip(ds.errors.iter())
        .map(|((&y, &t), d)| dist::cdf(d, y - t).expect("location family"))
        .collect())
}

/// `theta_i = y_i - F_i^{-1}(u_i)`; strictly decreasing in `u_i`.
pub fn theta_from_u(ds: &ParallelDataset, u: &[f64]) -> Result<Vec<f64>> {
    check_len(ds, u.len())?;
    ds.y.iter()
        .zip(u)
        .zip(ds.errors.iter())
        .map(|((&y, &ui), d)| {
            if !(ui > 0.0 && ui < 1.0) {
                return Err(Error::ProbabilityOutOfRange(ui));
            }
            Ok(y - dist::quantile(d, ui.clamp(U_EPS, 1.0 - U_EPS))?)
        })
        .collect()
}

/// `q_i = F_i(y_i)`, the one-sided p-value of `theta_i = 0` against `theta_i < 0`.
pub fn q_values(ds: &ParallelDataset) -> Vec<f64> {
    q_values_of(&ds.y, &ds.errors)
}

/// Stable sort by q-value. True effects, if attached, follow the same permutation.
pub fn reorder_by_q(ds: &ParallelDataset) -> ParallelDataset {
    let q = q_values(ds);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by(|&a, &b| q[a].total_cmp(&q[b]));
    let mut position = vec![0; order.len()];
    for (pos, &idx) in order.iter().enumerate() {
        position[idx] = pos;
    }
    ParallelDataset {
        y: order.iter().map(|&i| ds.y[i]).collect(),
        errors: ds.errors.permuted(&order),
        q_values: order.iter().map(|&i| q[i]).collect(),
        ordering: ds.ordering.iter().map(|&cur| position[cur]).collect(),
        true_theta: ds.true_theta.as_ref().map(|t| order.iter().map(|&i| t[i]).collect()),
    }
}

/// `sup_i |u_(i) - i/(p+1)|` over the sorted values of `u`.
pub fn sup_order_deviation(u: &[f64]) -> f64 {
    let mut sorted = u.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted_sup_deviation(&sorted)
}

/// Same as [`sup_order_deviation`] for input that is already sorted.
pub fn sorted_sup_deviation(sorted: &[f64]) -> f64 {
    let denom = sorted.len() as f64 + 1.0;
    sorted.iter().enumerate().map(|(i, &v)| (v - (i as f64 + 1.0) / denom).abs()).fold(0.0, f64::max)
}

fn check_len(ds: &ParallelDataset, got: usize) -> Result<()> {
    if got == ds.len() {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected: ds.len(), got })
    }
}
