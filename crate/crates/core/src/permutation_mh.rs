//! Random-walk Metropolis-Hastings on the permutation space of the fixed
//! quantile grid `{1/(p+1), ..., p/(p+1)}`.
//!
//! A state assigns each coordinate a distinct grid rank; coordinate `i` with
//! rank `r` has error quantile `(r + 1)/(p + 1)` and effect
//! `theta_i = y_i - F_i^{-1}((r + 1)/(p + 1))`. The target is proportional to
//! `prod_i prior(theta_i)`, the standard posterior restricted to the grid.
//! Proposals shuffle a window of `k` consecutive coordinates, so only `k` log
//! terms change per step.

use std::collections::HashMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::chain::{AcceptanceSummary, ChainOutput, ProposalStats};
use crate::dist::{self, DistSpec};
use crate::error::{Error, Result};
use crate::quantile_map::ParallelDataset;
use crate::rng::rng_from_seed;

/// Full recomputation interval for the incrementally maintained log target.
pub const RESYNC_EVERY: u64 = 10_000;

const SHARED_CLASS_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhConfig {
    pub n_steps: usize,
    pub burn_in: usize,
    pub initial_k: usize,
    pub target_acceptance: f64,
    pub adapt_every: usize,
    pub seed: u64,
    /// Number of start-position blocks with their own window size; see [`WindowSizes`].
    pub window_blocks: usize,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self {
            n_steps: 100_000,
            burn_in: 20_000,
            initial_k: 4,
            target_acceptance: 0.25,
            adapt_every: 1_000,
            seed: 0,
            window_blocks: 1,
        }
    }
}

impl MhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        if self.burn_in >= self.n_steps {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than n_steps ({})",
                self.burn_in, self.n_steps
            )));
        }
        if self.initial_k < 2 {
            return Err(Error::Config("initial_k must be at least 2".into()));
        }
        if self.adapt_every == 0 {
            return Err(Error::Config("adapt_every must be positive".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config("target_acceptance must lie in (0, 1)".into()));
        }
        if self.window_blocks == 0 {
            return Err(Error::Config("window_blocks must be positive".into()));
        }
        Ok(())
    }
}

/// Cache of the effect grid `y_i - F_i^{-1}((r + 1)/(p + 1))`.
///
/// Coordinates sharing an error distribution share one quantile table,
/// filled up front; with many distinct error distributions it falls back to
/// a lazily filled sparse map per coordinate.
#[derive(Debug, Clone)]
pub struct ThetaGrid {
    y: Vec<f64>,
    p: usize,
    cache: QuantileCache,
}

#[derive(Debug, Clone)]
enum QuantileCache {
    Shared { class_of: Vec<u32>, tables: Vec<Vec<f64>> },
    Sparse { dists: Vec<DistSpec>, maps: Vec<HashMap<u32, f64>> },
}

impl ThetaGrid {
    pub fn new(ds: &ParallelDataset) -> Self {
        let p = ds.len();
        let mut classes: Vec<DistSpec> = Vec::new();
        let mut class_of = Vec::with_capacity(p);
        let mut shared = true;
        for d in ds.errors().iter() {
            let idx = match classes.iter().position(|c| c == d) {
                Some(i) => i,
                None => {
                    if classes.len() == SHARED_CLASS_LIMIT {
                        shared = false;
                        break;
                    }
                    classes.push(d.clone());
                    classes.len() - 1
                }
            };
            class_of.push(idx as u32);
        }
        let cache = if shared {
            let tables = classes
                .iter()
                .map(|d| {
                    (0..p)
                        .map(|r| {
                            dist::quantile(d, (r as f64 + 1.0) / (p as f64 + 1.0)).expect("grid value lies in (0, 1)")
                        })
                        .collect()
                })
                .collect();
            QuantileCache::Shared { class_of, tables }
        } else {
            QuantileCache::Sparse { dists: ds.errors().iter().cloned().collect(), maps: vec![HashMap::new(); p] }
        };
        Self { y: ds.y().to_vec(), p, cache }
    }

    pub fn len(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        self.p == 0
    }

    /// Grid quantile of rank `r` (0-based).
    pub fn grid_value(&self, rank: usize) -> f64 {
        (rank as f64 + 1.0) / (self.p as f64 + 1.0)
    }

    /// Effect of coordinate `i` at grid rank `rank`.
    #[inline(always)]
    pub fn theta(&mut self, i: usize, rank: usize) -> f64 {
        match &self.cache {
            QuantileCache::Shared { class_of, tables } => {
                if tables.len() == 1 {
                    self.y[i] - tables[0][rank]
                } else {
                    self.y[i] - tables[class_of[i] as usize][rank]
                }
            }
            QuantileCache::Sparse { .. } => self.sparse_theta(i, rank),
        }
    }

    #[cold]
    #[inline(never)]
    fn sparse_theta(&mut self, i: usize, rank: usize) -> f64 {
        let u = self.grid_value(rank);
        let QuantileCache::Sparse { dists, maps } = &mut self.cache else {
            unreachable!("called only for the sparse cache")
        };
        let q = *maps[i]
            .entry(rank as u32)
            .or_insert_with(|| dist::quantile(&dists[i], u).expect("grid value lies in (0, 1)"));
        self.y[i] - q
    }
}

/// A point of the permutation space with cached per-coordinate log terms.
#[derive(Debug, Clone)]
pub struct PermutationState {
    assignment: Vec<usize>,
    log_terms: Vec<f64>,
    log_target: f64,
    grid: ThetaGrid,
    window_start: usize,
    replaced: Vec<usize>,
    candidate: Vec<usize>,
    candidate_terms: Vec<f64>,
}

impl PermutationState {
    /// The identity assignment, coordinate `i` at rank `i`. Log terms are zero
    /// until [`PermutationState::refresh`] is called.
    pub fn identity(ds: &ParallelDataset) -> Self {
        let p = ds.len();
        Self {
            assignment: (0..p).collect(),
            log_terms: vec![0.0; p],
            log_target: 0.0,
            grid: ThetaGrid::new(ds),
            window_start: 0,
            replaced: Vec::new(),
            candidate: Vec::new(),
            candidate_terms: Vec::new(),
        }
    }

    /// Replaces the assignment. Panics if it is not a permutation of `0..p`.
    pub fn set_assignment(&mut self, assignment: Vec<usize>) {
        assert!(is_permutation(&assignment) && assignment.len() == self.len());
        self.assignment = assignment;
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn log_terms(&self) -> &[f64] {
        &self.log_terms
    }

    /// Incrementally maintained log target.
    pub fn log_target(&self) -> f64 {
        self.log_target
    }

    /// Recomputes every log term under `prior`.
    pub fn refresh<P: Fn(f64) -> f64>(&mut self, prior: &P) -> Result<f64> {
        for i in 0..self.assignment.len() {
            let theta = self.grid.theta(i, self.assignment[i]);
            self.log_terms[i] = prior(theta);
        }
        self.resync();
        if !self.log_terms.is_empty() && self.log_terms.iter().all(|t| *t == f64::NEG_INFINITY) {
            return Err(Error::ZeroDensity);
        }
        if self.log_target.is_nan() {
            return Err(Error::NanDelta);
        }
        Ok(self.log_target)
    }

    /// Resets the running total to the exact sum of the cached terms.
    pub fn resync(&mut self) {
        self.log_target = self.log_terms.iter().sum();
    }

    pub fn u(&self) -> Vec<f64> {
        self.assignment.iter().map(|&r| self.grid.grid_value(r)).collect()
    }

    pub fn theta(&mut self) -> Vec<f64> {
        (0..self.assignment.len()).map(|i| self.theta_at(i)).collect()
    }

    pub fn theta_at(&mut self, i: usize) -> f64 {
        self.grid.theta(i, self.assignment[i])
    }

    pub fn grid(&mut self) -> &mut ThetaGrid {
        &mut self.grid
    }

    /// Window touched by the most recent accepted proposal and the ranks it held before.
    pub fn last_replaced(&self) -> (usize, &[usize]) {
        (self.window_start, &self.replaced)
    }
}

fn is_permutation(a: &[usize]) -> bool {
    let mut seen = vec![false; a.len()];
    a.iter().all(|&r| r < a.len() && !std::mem::replace(&mut seen[r], true))
}

/// Full evaluation of `sum_i log prior(y_i - F_i^{-1}(u_i))` at the state's assignment.
///
/// Individual terms may be `-inf`; a state where every term is `-inf` is an error.
pub fn log_target<P: Fn(f64) -> f64>(state: &mut PermutationState, prior: &P) -> Result<f64> {
    let mut total = 0.0;
    let mut all_zero = !state.is_empty();
    for i in 0..state.len() {
        let term = prior(state.theta_at(i));
        all_zero &= term == f64::NEG_INFINITY;
        total += term;
    }
    if all_zero {
        return Err(Error::ZeroDensity);
    }
    Ok(total)
}

/// A window-shuffle proposal: positions `start..start + block.len()` receive `block`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowShuffle {
    pub start: usize,
    pub block: Vec<usize>,
}

impl WindowShuffle {
    pub fn touched(&self) -> Range<usize> {
        self.start..self.start + self.block.len()
    }

    pub fn apply(&self, assignment: &[usize]) -> Vec<usize> {
        let mut out = assignment.to_vec();
        out[self.touched()].copy_from_slice(&self.block);
        out
    }
}

/// Picks `k` consecutive positions uniformly (no wrap-around) and permutes
/// their entries uniformly at random.
pub fn propose_window_shuffle<R: Rng + ?Sized>(assignment: &[usize], k: usize, rng: &mut R) -> WindowShuffle {
    let mut block = Vec::with_capacity(k);
    let start = shuffle_window_into(assignment, k, rng, &mut block);
    WindowShuffle { start, block }
}

fn shuffle_window_into<R: Rng + ?Sized>(assignment: &[usize], k: usize, rng: &mut R, block: &mut Vec<usize>) -> usize {
    let p = assignment.len();
    debug_assert!(k >= 2 && k <= p);
    let start = rng.random_range(0..=p - k);
    block.clear();
    block.extend_from_slice(&assignment[start..start + k]);
    block.shuffle(rng);
    start
}

/// Adaptive window sizes, one per block of window centres.
///
/// With one block this is the plain scheme: start uniform on `0..=p-k`.
/// With `B > 1` blocks a centre `c` is drawn uniformly, the block of `c`
/// sets `k`, and the window of length `k` around `c` is clipped to the
/// coordinates (never below length 2). The window depends on `c` and never
/// on the state, so every proposal is still symmetric. Each block adapts
/// toward the target on its own proposals, which lets the stiff tails of a
/// q-ordered dataset use small windows while the flat middle uses large ones.
#[derive(Debug, Clone)]
pub struct WindowSizes {
    p: usize,
    ks: Vec<usize>,
    window: Vec<ProposalStats>,
    adapt_every: u64,
    target: f64,
}

impl WindowSizes {
    pub fn new(p: usize, initial_k: usize, blocks: usize, adapt_every: usize, target: f64) -> Self {
        let blocks = blocks.clamp(1, p.max(1));
        let adapt_every = if blocks == 1 { adapt_every } else { (adapt_every / blocks).max(50) };
        Self {
            p,
            ks: vec![initial_k.clamp(2, p.max(2)); blocks],
            window: vec![ProposalStats::default(); blocks],
            adapt_every: adapt_every as u64,
            target,
        }
    }

    pub fn from_config(p: usize, cfg: &MhConfig) -> Self {
        Self::new(p, cfg.initial_k, cfg.window_blocks, cfg.adapt_every, cfg.target_acceptance)
    }

    /// Current window size of each block.
    pub fn ks(&self) -> &[usize] {
        &self.ks
    }

    /// Draws a window as `(start, length, block)`.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize, usize) {
        if self.ks.len() == 1 {
            let k = self.ks[0];
            return (rng.random_range(0..=self.p - k), k, 0);
        }
        let centre = rng.random_range(0..self.p);
        let block = centre * self.ks.len() / self.p;
        let k = self.ks[block];
        let lo = centre as isize - (k / 2) as isize;
        let mut start = lo.max(0) as usize;
        let mut end = ((lo + k as isize) as usize).min(self.p);
        if end - start < 2 {
            if start == 0 {
                end = 2;
            } else {
                start = end - 2;
            }
        }
        (start, end - start, block)
    }

    /// Counts a proposal from `block`; when `adapt` is set and the block's
    /// window is complete, updates its `k` and returns the window's rate.
    pub fn record(&mut self, block: usize, accepted: bool, adapt: bool) -> Option<f64> {
        if !adapt {
            return None;
        }
        let w = &mut self.window[block];
        w.record(accepted);
        if w.proposed < self.adapt_every {
            return None;
        }
        let rate = w.rate().unwrap_or(0.0);
        self.ks[block] = adapt_k_toward(rate, self.ks[block], self.p, self.target);
        *w = ProposalStats::default();
        Some(rate)
    }
}

/// One Metropolis-Hastings step with a window shuffle of size `k`.
///
/// The log-target change is evaluated over the `k` touched coordinates only.
/// Returns whether the candidate was accepted.
pub fn mh_step<P, R>(state: &mut PermutationState, prior: &P, k: usize, rng: &mut R) -> Result<bool>
where
    P: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    let start = rng.random_range(0..=state.len() - k);
    mh_step_at(state, prior, start, k, rng)
}

/// [`mh_step`] with the window `start..start + k` given.
pub fn mh_step_at<P, R>(state: &mut PermutationState, prior: &P, start: usize, k: usize, rng: &mut R) -> Result<bool>
where
    P: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    let mut candidate = std::mem::take(&mut state.candidate);
    candidate.clear();
    candidate.extend_from_slice(&state.assignment[start..start + k]);
    candidate.shuffle(rng);
    state.candidate_terms.clear();
    let mut delta = 0.0;
    for (offset, &rank) in candidate.iter().enumerate() {
        let i = start + offset;
        let term = if rank == state.assignment[i] {
            state.log_terms[i]
        } else {
            let t = prior(state.grid.theta(i, rank));
            delta += t - state.log_terms[i];
            t
        };
        state.candidate_terms.push(term);
    }
    if delta.is_nan() {
        state.candidate = candidate;
        return Err(Error::NanDelta);
    }
    let accept = delta >= 0.0 || rng.random::<f64>().ln() < delta;
    if accept {
        state.window_start = start;
        state.replaced.clear();
        state.replaced.extend_from_slice(&state.assignment[start..start + k]);
        state.assignment[start..start + k].copy_from_slice(&candidate);
        state.log_terms[start..start + k].copy_from_slice(&state.candidate_terms);
        state.log_target += delta;
    }
    state.candidate = candidate;
    Ok(accept)
}

/// Window-size controller around a 25% acceptance target.
pub fn adapt_k(acceptance: f64, k: usize, p: usize) -> usize {
    adapt_k_toward(acceptance, k, p, 0.25)
}

/// Grows `k` by 25% when acceptance exceeds `target + 0.1`, shrinks it by
/// 20% when acceptance falls below `target - 0.1`, and keeps `2 <= k <= p`.
pub fn adapt_k_toward(acceptance: f64, k: usize, p: usize, target: f64) -> usize {
    let scaled = if acceptance > target + 0.1 {
        (k as f64 * 1.25).round() as usize
    } else if acceptance < target - 0.1 {
        (k as f64 * 0.8).round() as usize
    } else {
        k
    };
    scaled.max(2).min(p.max(2))
}

/// Runs the sampler on a q-reordered dataset from the identity assignment.
pub fn run_chain<P: Fn(f64) -> f64>(ds: &ParallelDataset, prior: &P, cfg: &MhConfig) -> Result<ChainOutput> {
    run_chain_with(ds, prior, cfg, |_| {})
}

/// Like [`run_chain`], calling `observe` on the state after every retained step.
pub fn run_chain_with<P, F>(ds: &ParallelDataset, prior: &P, cfg: &MhConfig, mut observe: F) -> Result<ChainOutput>
where
    P: Fn(f64) -> f64,
    F: FnMut(&PermutationState),
{
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    if !ds.is_reordered() {
        return Err(Error::NotReordered);
    }
    let p = ds.len();
    let mut rng = rng_from_seed(cfg.seed);
    let mut state = PermutationState::identity(ds);
    if state.refresh(prior)? == f64::NEG_INFINITY {
        return Err(Error::ZeroDensity);
    }
    let n_retained = cfg.n_steps - cfg.burn_in;
    let mut acceptance = AcceptanceSummary::default();

    if p == 1 {
        let theta = state.theta();
        let u = state.u();
        for _ in 0..n_retained {
            observe(&state);
        }
        let scale = n_retained as f64;
        return Ok(ChainOutput::from_sums(vec![theta[0] * scale], Some(vec![u[0] * scale]), n_retained));
    }

    let mut windows = WindowSizes::from_config(p, cfg);
    let mut post = ProposalStats::default();
    let mut means = LazyMeans::new(&mut state);
    for step in 0..cfg.n_steps {
        let (start, k, block) = windows.draw(&mut rng);
        let accepted = mh_step_at(&mut state, prior, start, k, &mut rng)?;
        if (step as u64 + 1).is_multiple_of(RESYNC_EVERY) {
            state.resync();
        }
        if step < cfg.burn_in {
            if let Some(rate) = windows.record(block, accepted, true) {
                acceptance.burn_in_windows.push(rate);
            }
            if step + 1 == cfg.burn_in {
                means = LazyMeans::new(&mut state);
            }
            continue;
        }
        post.record(accepted);
        if accepted {
            means.update(&mut state, step + 1 - cfg.burn_in - 1);
        }
        observe(&state);
    }
    let (theta_sums, u_sums) = means.finish(&mut state, n_retained);
    acceptance.post_burn_in = post.rate();
    acceptance.final_k = windows.ks().iter().max().copied();
    acceptance.block_k = windows.ks().to_vec();
    let mut out = ChainOutput::from_sums(theta_sums, Some(u_sums), n_retained);
    out.acceptance = acceptance;
    Ok(out)
}

// Time-weighted sums that touch only the coordinates an accepted proposal changed.
struct LazyMeans {
    theta_sums: Vec<f64>,
    u_sums: Vec<f64>,
    theta_now: Vec<f64>,
    since: Vec<usize>,
}

impl LazyMeans {
    fn new(state: &mut PermutationState) -> Self {
        let p = state.len();
        Self { theta_sums: vec![0.0; p], u_sums: vec![0.0; p], theta_now: state.theta(), since: vec![0; p] }
    }

    // `draw` is the index of the first retained draw holding the new values.
    fn update(&mut self, state: &mut PermutationState, draw: usize) {
        let (start, replaced) = state.last_replaced();
        let replaced: Vec<(usize, usize)> = replaced.iter().enumerate().map(|(o, &r)| (start + o, r)).collect();
        for (i, old_rank) in replaced {
            let new_rank = state.assignment()[i];
            if new_rank == old_rank {
                continue;
            }
            let held = (draw - self.since[i]) as f64;
            self.theta_sums[i] += self.theta_now[i] * held;
            self.u_sums[i] += state.grid.grid_value(old_rank) * held;
            self.theta_now[i] = state.theta_at(i);
            self.since[i] = draw;
        }
    }

    fn finish(mut self, state: &mut PermutationState, n_retained: usize) -> (Vec<f64>, Vec<f64>) {
        for i in 0..state.len() {
            let held = (n_retained - self.since[i]) as f64;
            self.theta_sums[i] += self.theta_now[i] * held;
            self.u_sums[i] += state.grid.grid_value(state.assignment()[i]) * held;
        }
        (self.theta_sums, self.u_sums)
    }
}
