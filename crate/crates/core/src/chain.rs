//! Chain output shared by all samplers.

use crate::error::{Error, Result};

/// Acceptance diagnostics for samplers with a Metropolis-Hastings step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcceptanceSummary {
    /// Acceptance rate of each adaptation window during burn-in.
    pub burn_in_windows: Vec<f64>,
    /// Acceptance rate over all post-burn-in proposals.
    pub post_burn_in: Option<f64>,
    /// Largest window size after burn-in.
    pub final_k: Option<usize>,
    /// Window size of each start-position block after burn-in.
    pub block_k: Vec<usize>,
}

/// Proposal counters.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProposalStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl ProposalStats {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// Retained-draw summaries of one chain.
#[derive(Debug, Clone, Default)]
pub struct ChainOutput {
    theta_sums: Vec<f64>,
    u_sums: Option<Vec<f64>>,
    n_retained: usize,
    /// Every retained θ draw, when the caller asked for them.
    pub theta_draws: Option<Vec<Vec<f64>>>,
    pub acceptance: AcceptanceSummary,
}

impl ChainOutput {
    pub(crate) fn from_sums(theta_sums: Vec<f64>, u_sums: Option<Vec<f64>>, n_retained: usize) -> Self {
        Self { theta_sums, u_sums, n_retained, theta_draws: None, acceptance: AcceptanceSummary::default() }
    }

    /// Builds an output from explicit θ draws.
    pub fn from_draws(draws: Vec<Vec<f64>>) -> Self {
        let p = draws.first().map_or(0, Vec::len);
        let mut sums = vec![0.0; p];
        for d in &draws {
            for (s, v) in sums.iter_mut().zip(d) {
                *s += v;
            }
        }
        Self {
            theta_sums: sums,
            u_sums: None,
            n_retained: draws.len(),
            theta_draws: Some(draws),
            acceptance: AcceptanceSummary::default(),
        }
    }

    pub fn n_retained(&self) -> usize {
        self.n_retained
    }

    /// Posterior means of the error quantiles, for samplers that track them.
    pub fn u_means(&self) -> Option<Vec<f64>> {
        let n = self.n_retained as f64;
        (self.n_retained > 0).then_some(()).and(self.u_sums.as_ref()).map(|s| s.iter().map(|v| v / n).collect())
    }
}

/// Coordinate-wise mean over retained draws.
pub fn posterior_means(out: &ChainOutput) -> Result<Vec<f64>> {
    if out.n_retained == 0 {
        return Err(Error::EmptyChain);
    }
    let n = out.n_retained as f64;
    Ok(out.theta_sums.iter().map(|s| s / n).collect())
}

/// Per-scan accumulator used by the Gibbs samplers.
#[derive(Debug, Clone)]
pub(crate) struct DrawAccumulator {
    theta_sums: Vec<f64>,
    u_sums: Option<Vec<f64>>,
    n: usize,
    draws: Option<Vec<Vec<f64>>>,
}

impl DrawAccumulator {
    pub fn new(p: usize, track_u: bool, keep_draws: bool) -> Self {
        Self { theta_sums: vec![0.0; p], u_sums: track_u.then(|| vec![0.0; p]), n: 0, draws: keep_draws.then(Vec::new) }
    }

    pub fn push(&mut self, theta: &[f64], u: Option<&[f64]>) {
        self.push_sums(theta, u);
        self.record_draw(theta);
    }

    /// Adds to the running sums without storing a draw.
    pub fn push_sums(&mut self, theta: &[f64], u: Option<&[f64]>) {
        for (s, t) in self.theta_sums.iter_mut().zip(theta) {
            *s += t;
        }
        if let (Some(sums), Some(u)) = (self.u_sums.as_mut(), u) {
            for (s, v) in sums.iter_mut().zip(u) {
                *s += v;
            }
        }
        self.n += 1;
    }

    /// Stores a draw, if draws are kept, without touching the sums.
    pub fn record_draw(&mut self, theta: &[f64]) {
        if let Some(d) = self.draws.as_mut() {
            d.push(theta.to_vec());
        }
    }

    pub fn finish(self, acceptance: AcceptanceSummary) -> ChainOutput {
        let mut out = ChainOutput::from_sums(self.theta_sums, self.u_sums, self.n);
        out.theta_draws = self.draws;
        out.acceptance = acceptance;
        out
    }
}
