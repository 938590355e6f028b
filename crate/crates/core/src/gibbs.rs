//! Standard and robustified Gibbs samplers for the hierarchical model.
//!
//! The standard sampler alternates exact θ | η and η | θ draws. The
//! robustified sampler replaces the θ update with Metropolis-Hastings sweeps
//! over permutations of the quantile grid, holding the error quantiles
//! across scans.

use crate::chain::{AcceptanceSummary, ChainOutput, DrawAccumulator, ProposalStats};
use crate::error::{Error, Result};
use crate::permutation_mh::{mh_step_at, MhConfig, PermutationState, WindowSizes, RESYNC_EVERY};
use crate::prior::{
    sample_eta_given_theta, sample_theta_given_eta, theta_conditional_means, PriorFamily, WorkingPrior,
};
use crate::quantile_map::ParallelDataset;
use crate::rng::rng_from_seed;

/// Chain lengths for the Gibbs samplers.
///
/// Only `initial_k`, `target_acceptance`, `adapt_every` and `window_blocks`
/// of `mh` are used: the robustified sampler's step counts follow from the
/// scan counts, and `adapt_every` counts Metropolis-Hastings proposals across
/// scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsConfig {
    pub n_scans: usize,
    pub burn_in: usize,
    pub inner_mh_sweeps: usize,
    pub mh: MhConfig,
    pub seed: u64,
    /// Keep every retained θ draw in the output.
    pub keep_draws: bool,
    /// Standard sampler only: estimate posterior means by averaging
    /// `E[θ | η, y]` over retained scans instead of the θ draws.
    pub rao_blackwell: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            n_scans: 4000,
            burn_in: 1000,
            inner_mh_sweeps: 1,
            mh: MhConfig { initial_k: 4, adapt_every: 1000, window_blocks: 20, ..MhConfig::default() },
            seed: 0,
            keep_draws: false,
            rao_blackwell: true,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_scans == 0 {
            return Err(Error::Config("scans must be positive".into()));
        }
        if self.burn_in >= self.n_scans {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than scans ({})",
                self.burn_in, self.n_scans
            )));
        }
        if self.inner_mh_sweeps == 0 {
            return Err(Error::Config("inner_mh_sweeps must be positive".into()));
        }
        MhConfig { n_steps: 1, burn_in: 0, ..self.mh }.validate()
    }
}

fn normal_error_sds(ds: &ParallelDataset) -> Result<Vec<f64>> {
    ds.errors().normal_sds().ok_or_else(|| Error::Unsupported {
        op: "exact effect conditional",
        dist: "non-normal or non-centred error".into(),
    })
}

/// Standard posterior under the working prior `start` (Gibbs sampling).
///
/// With `rao_blackwell` set, the mean for a retained scan is `E[θ | η, y]`
/// at the hyperparameters that scan's θ draw conditions on. Requires zero-mean normal errors and at least two coordinates.
pub fn standard_gibbs_from(ds: &ParallelDataset, start: WorkingPrior, cfg: &GibbsConfig) -> Result<ChainOutput> {
    cfg.validate()?;
    start.validate()?;
    let sds = normal_error_sds(ds)?;
    if ds.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "p",
            value: ds.len() as f64,
            reason: "the standard hierarchical posterior needs at least two effects",
        });
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut prior = start;
    let mut acc = DrawAccumulator::new(ds.len(), false, cfg.keep_draws);
    for scan in 0..cfg.n_scans {
        if scan >= cfg.burn_in && cfg.rao_blackwell {
            let means = theta_conditional_means(ds.y(), &sds, &prior);
            acc.push_sums(&means, None);
        }
        let theta = sample_theta_given_eta(ds.y(), &sds, &prior, &mut rng);
        prior = sample_eta_given_theta(&prior, &theta, &mut rng)?;
        if scan >= cfg.burn_in {
            if cfg.rao_blackwell {
                acc.record_draw(&theta);
            } else {
                acc.push(&theta, None);
            }
        }
    }
    Ok(acc.finish(AcceptanceSummary::default()))
}

/// [`standard_gibbs_from`] with the family's default hyperpriors and starting values.
pub fn standard_gibbs(ds: &ParallelDataset, family: PriorFamily, cfg: &GibbsConfig) -> Result<ChainOutput> {
    standard_gibbs_from(ds, WorkingPrior::initial(family, ds.y()), cfg)
}

/// Robustified posterior under the working prior `start`.
///
/// Each scan runs `inner_mh_sweeps * p` permutation proposals against the
/// current prior, then draws the hyperparameters given θ = y - F⁻¹(u).
/// The window size adapts during burn-in scans only.
pub fn robustified_gibbs_from(ds: &ParallelDataset, start: WorkingPrior, cfg: &GibbsConfig) -> Result<ChainOutput> {
    cfg.validate()?;
    start.validate()?;
    if ds.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    if !ds.is_reordered() {
        return Err(Error::NotReordered);
    }
    let p = ds.len();
    let mut state = PermutationState::identity(ds);
    let n_retained = cfg.n_scans - cfg.burn_in;
    if p == 1 {
        // Γ has one point: u = 1/2 and the hyperparameters never feed back.
        let theta = state.theta();
        let mut acc = DrawAccumulator::new(1, true, cfg.keep_draws);
        for _ in 0..n_retained {
            acc.push(&theta, Some(&[0.5]));
        }
        return Ok(acc.finish(AcceptanceSummary::default()));
    }

    let mut rng = rng_from_seed(cfg.seed);
    let mut prior = start;
    let mut windows = WindowSizes::from_config(p, &cfg.mh);
    let mut acceptance = AcceptanceSummary::default();
    let mut post = ProposalStats::default();
    let mut acc = DrawAccumulator::new(p, true, cfg.keep_draws);
    let steps_per_scan = cfg.inner_mh_sweeps * p;
    for scan in 0..cfg.n_scans {
        let kernel = prior.kernel();
        let density = move |t: f64| kernel.eval(t);
        if state.refresh(&density)? == f64::NEG_INFINITY {
            return Err(Error::ZeroDensity);
        }
        let burning = scan < cfg.burn_in;
        for step in 0..steps_per_scan {
            let (start, k, block) = windows.draw(&mut rng);
            let accepted = mh_step_at(&mut state, &density, start, k, &mut rng)?;
            if (step as u64 + 1).is_multiple_of(RESYNC_EVERY) {
                state.resync();
            }
            if burning {
                if let Some(rate) = windows.record(block, accepted, true) {
                    acceptance.burn_in_windows.push(rate);
                }
            } else {
                post.record(accepted);
            }
        }
        let theta = state.theta();
        prior = sample_eta_given_theta(&prior, &theta, &mut rng)?;
        if !burning {
            acc.push(&theta, Some(&state.u()));
        }
    }
    acceptance.post_burn_in = post.rate();
    acceptance.final_k = windows.ks().iter().max().copied();
    acceptance.block_k = windows.ks().to_vec();
    Ok(acc.finish(acceptance))
}

/// [`robustified_gibbs_from`] with the family's default hyperpriors and starting values.
pub fn robustified_gibbs(ds: &ParallelDataset, family: PriorFamily, cfg: &GibbsConfig) -> Result<ChainOutput> {
    robustified_gibbs_from(ds, WorkingPrior::initial(family, ds.y()), cfg)
}
