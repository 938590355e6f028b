//! Dirichlet process mixture baseline.
//!
//! Effects follow `θ_i | μ_c ~ N(μ_c, σ²)` within clusters drawn from a
//! Chinese restaurant process with concentration `α`, cluster means from
//! `N(0, σ_b²)`, `σ² ~ InvGamma(3, 5)` and `σ_b² ~ InvGamma(5, 20)`.
//! Assignments are updated with θ and the cluster means integrated out.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::chain::{AcceptanceSummary, ChainOutput, DrawAccumulator};
use crate::error::{Error, Result};
use crate::quantile_map::ParallelDataset;
use crate::rng::rng_from_seed;
use crate::special::LN_SQRT_2PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpConfig {
    pub n_scans: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Inverse-gamma (shape, scale) prior on the kernel variance σ².
    pub kernel_prior: (f64, f64),
    /// Inverse-gamma (shape, scale) prior on the base variance σ_b².
    pub base_prior: (f64, f64),
    /// Keep every coordinate in one cluster.
    pub single_cluster: bool,
    /// Hold σ_b² at this value instead of sampling it.
    pub base_var_fixed: Option<f64>,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            n_scans: 4000,
            burn_in: 1000,
            seed: 0,
            alpha: 1.0,
            kernel_prior: (3.0, 5.0),
            base_prior: (5.0, 20.0),
            single_cluster: false,
            base_var_fixed: None,
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_scans == 0 || self.burn_in >= self.n_scans {
            return Err(Error::Config(format!(
                "need 0 <= burn_in < scans, got burn_in {} and scans {}",
                self.burn_in, self.n_scans
            )));
        }
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, value: v, reason: "must be finite and positive" })
            }
        };
        positive("alpha", self.alpha)?;
        positive("kernel shape", self.kernel_prior.0)?;
        positive("kernel scale", self.kernel_prior.1)?;
        positive("base shape", self.base_prior.0)?;
        positive("base scale", self.base_prior.1)?;
        if let Some(v) = self.base_var_fixed {
            positive("base variance", v)?;
        }
        Ok(())
    }
}

/// Sampler state. Cluster ids are `0..K` after every full scan.
#[derive(Debug, Clone, PartialEq)]
pub struct DpState {
    pub assignment: Vec<usize>,
    pub counts: Vec<usize>,
    pub means: Vec<f64>,
    pub sigma2: f64,
    pub base_var: f64,
    pub theta: Vec<f64>,
}

impl DpState {
    /// One cluster holding everything, σ² = 2.5, σ_b² = 5, θ = y.
    pub fn initial(y: &[f64]) -> Self {
        let p = y.len();
        Self {
            assignment: vec![0; p],
            counts: vec![p],
            means: vec![y.iter().sum::<f64>() / p.max(1) as f64],
            sigma2: 2.5,
            base_var: 5.0,
            theta: y.to_vec(),
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Drops empty clusters and relabels the rest `0..K` in order of first appearance.
    pub fn compact(&mut self) {
        let mut relabel = vec![usize::MAX; self.counts.len()];
        let mut counts = Vec::new();
        let mut means = Vec::new();
        for c in self.assignment.iter_mut() {
            if relabel[*c] == usize::MAX {
                relabel[*c] = counts.len();
                counts.push(self.counts[*c]);
                means.push(self.means[*c]);
            }
            *c = relabel[*c];
        }
        self.counts = counts;
        self.means = means;
    }
}

fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (x - mean) * (x - mean) / var - 0.5 * var.ln() - LN_SQRT_2PI
}

fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / scale).expect("positive parameters").sample(rng);
    1.0 / g
}

/// Reassigns every coordinate given the others, with cluster means and θ
/// integrated out: `y_i | μ_c ~ N(μ_c, σ² + s_i²)`, `μ_c ~ N(0, σ_b²)`.
pub fn update_assignments<R: Rng + ?Sized>(state: &mut DpState, y: &[f64], err_var: &[f64], alpha: f64, rng: &mut R) {
    let p = y.len();
    let n_clusters = state.counts.len();
    // Per-cluster sufficient statistics: Σ 1/v_i and Σ y_i/v_i with v_i = σ² + s_i².
    let mut prec = vec![0.0; n_clusters];
    let mut wsum = vec![0.0; n_clusters];
    for i in 0..p {
        let v = state.sigma2 + err_var[i];
        prec[state.assignment[i]] += 1.0 / v;
        wsum[state.assignment[i]] += y[i] / v;
    }
    let tau0 = 1.0 / state.base_var;
    let mut weights: Vec<f64> = Vec::with_capacity(n_clusters + 1);
    for i in 0..p {
        let v = state.sigma2 + err_var[i];
        let c_old = state.assignment[i];
        state.counts[c_old] -= 1;
        prec[c_old] -= 1.0 / v;
        wsum[c_old] -= y[i] / v;
        if state.counts[c_old] == 0 {
            prec[c_old] = 0.0;
            wsum[c_old] = 0.0;
        }
        weights.clear();
        for c in 0..state.counts.len() {
            if state.counts[c] == 0 {
                weights.push(f64::NEG_INFINITY);
                continue;
            }
            let post_prec = tau0 + prec[c];
            let m = wsum[c] / post_prec;
            weights.push((state.counts[c] as f64).ln() + ln_normal(y[i], m, 1.0 / post_prec + v));
        }
        weights.push(alpha.ln() + ln_normal(y[i], 0.0, state.base_var + v));
        let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = weights.iter().map(|w| (w - max).exp()).sum();
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = weights.len() - 1;
        for (c, w) in weights.iter().enumerate() {
            let e = (w - max).exp();
            if pick < e {
                chosen = c;
                break;
            }
            pick -= e;
        }
        if chosen == state.counts.len() {
            // Reuse an empty slot when one exists.
            chosen = state.counts.iter().position(|&n| n == 0).unwrap_or_else(|| {
                state.counts.push(0);
                state.means.push(0.0);
                prec.push(0.0);
                wsum.push(0.0);
                state.counts.len() - 1
            });
        }
        state.assignment[i] = chosen;
        state.counts[chosen] += 1;
        prec[chosen] += 1.0 / v;
        wsum[chosen] += y[i] / v;
    }
}

/// Draws each cluster mean given its members, then each θ_i given `y_i`
/// and its cluster mean.
pub fn update_cluster_means_and_theta<R: Rng + ?Sized>(state: &mut DpState, y: &[f64], err_var: &[f64], rng: &mut R) {
    let n_clusters = state.counts.len();
    let mut prec = vec![1.0 / state.base_var; n_clusters];
    let mut wsum = vec![0.0; n_clusters];
    for (i, &c) in state.assignment.iter().enumerate() {
        let v = state.sigma2 + err_var[i];
        prec[c] += 1.0 / v;
        wsum[c] += y[i] / v;
    }
    for c in 0..n_clusters {
        let z: f64 = StandardNormal.sample(rng);
        state.means[c] = if state.counts[c] > 0 { wsum[c] / prec[c] + z / prec[c].sqrt() } else { 0.0 };
    }
    for (i, &c) in state.assignment.iter().enumerate() {
        let (s2, mu) = (err_var[i], state.means[c]);
        let denom = state.sigma2 + s2;
        let mean = (y[i] * state.sigma2 + mu * s2) / denom;
        let sd = (state.sigma2 * s2 / denom).sqrt();
        let z: f64 = StandardNormal.sample(rng);
        state.theta[i] = mean + sd * z;
    }
}

/// Conjugate inverse-gamma draws of σ² and (unless fixed) σ_b².
pub fn update_variances<R: Rng + ?Sized>(state: &mut DpState, cfg: &DpConfig, rng: &mut R) {
    let p = state.theta.len() as f64;
    let ss: f64 = state.theta.iter().zip(&state.assignment).map(|(t, &c)| (t - state.means[c]).powi(2)).sum();
    let (a, b) = cfg.kernel_prior;
    state.sigma2 = sample_inv_gamma(a + p / 2.0, b + ss / 2.0, rng);
    state.base_var = match cfg.base_var_fixed {
        Some(v) => v,
        None => {
            let (k, mm) = state
                .counts
                .iter()
                .zip(&state.means)
                .filter(|(n, _)| **n > 0)
                .fold((0.0, 0.0), |(k, s), (_, m)| (k + 1.0, s + m * m));
            let (a, b) = cfg.base_prior;
            sample_inv_gamma(a + k / 2.0, b + mm / 2.0, rng)
        }
    };
}

/// Fits the DP mixture and returns retained θ draws summarized as means.
///
/// Requires zero-mean normal errors.
pub fn dp_fit(ds: &ParallelDataset, cfg: &DpConfig) -> Result<ChainOutput> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let err_var: Vec<f64> = ds
        .errors()
        .normal_sds()
        .ok_or_else(|| Error::Unsupported { op: "dp_fit", dist: "non-normal or non-centred error".into() })?
        .iter()
        .map(|s| s * s)
        .collect();
    let y = ds.y();
    let mut rng = rng_from_seed(cfg.seed);
    let mut state = DpState::initial(y);
    if let Some(v) = cfg.base_var_fixed {
        state.base_var = v;
    }
    let mut acc = DrawAccumulator::new(y.len(), false, false);
    for scan in 0..cfg.n_scans {
        if !cfg.single_cluster {
            update_assignments(&mut state, y, &err_var, cfg.alpha, &mut rng);
        }
        update_cluster_means_and_theta(&mut state, y, &err_var, &mut rng);
        update_variances(&mut state, cfg, &mut rng);
        state.compact();
        debug_assert_eq!(state.counts.iter().sum::<usize>(), y.len());
        if scan >= cfg.burn_in {
            acc.push(&state.theta, None);
        }
    }
    Ok(acc.finish(AcceptanceSummary::default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::posterior_means;
    use crate::quantile_map::{reorder_by_q, ErrorModel};

    fn fresh(y: &[f64], sigma2: f64, base_var: f64) -> DpState {
        let mut s = DpState::initial(y);
        s.sigma2 = sigma2;
        s.base_var = base_var;
        s
    }

    #[test]
    fn far_apart_points_separate() {
        let y = [0.0, 100.0];
        let mut rng = rng_from_seed(1);
        let mut state = fresh(&y, 1.0, 1.0);
        let mut apart = 0;
        for _ in 0..2000 {
            update_assignments(&mut state, &y, &[1.0, 1.0], 1.0, &mut rng);
            apart += usize::from(state.assignment[0] != state.assignment[1]);
            state.compact();
        }
        assert!(apart as f64 / 2000.0 > 0.99);
    }

    // Exact posterior probability that two points share a cluster: CRP prior
    // odds 1 : α times the joint marginal (shared mean) over the product of
    // independent marginals.
    fn same_cluster_probability(y: [f64; 2], v: f64, base: f64, alpha: f64) -> f64 {
        let (a, c) = (v + base, base);
        let det = a * a - c * c;
        let quad = (a * y[0] * y[0] - 2.0 * c * y[0] * y[1] + a * y[1] * y[1]) / det;
        let ln_joint = -0.5 * quad - 0.5 * det.ln();
        let ln_apart = -0.5 * (y[0] * y[0] + y[1] * y[1]) / a - a.ln();
        let odds = (ln_joint - ln_apart).exp() / alpha;
        odds / (1.0 + odds)
    }

    #[test]
    fn close_points_share_a_cluster() {
        let y = [0.0, 0.01];
        for base in [1.0, 100.0] {
            let mut rng = rng_from_seed(2);
            let mut state = fresh(&y, 1.0, base);
            let n = 40_000;
            let mut together = 0;
            for _ in 0..n {
                update_assignments(&mut state, &y, &[1.0, 1.0], 1.0, &mut rng);
                together += usize::from(state.assignment[0] == state.assignment[1]);
                state.compact();
            }
            let f = together as f64 / n as f64;
            let exact = same_cluster_probability(y, 2.0, base, 1.0);
            assert!((f - exact).abs() < 0.02, "base {base}: {f} vs {exact}");
            if base > 10.0 {
                assert!(f > 0.8);
            }
        }
    }

    #[test]
    fn tiny_alpha_never_opens_clusters() {
        let y: Vec<f64> = (0..200).map(|i| (i as f64 - 100.0) / 20.0).collect();
        let mut rng = rng_from_seed(3);
        let mut state = fresh(&y, 1.0, 5.0);
        for _ in 0..50 {
            update_assignments(&mut state, &y, &vec![1.0; 200], 1e-8, &mut rng);
            state.compact();
        }
        assert_eq!(state.n_clusters(), 1);
    }

    #[test]
    fn theta_conditional_at_unit_kernel_variance() {
        let mut state = fresh(&[3.0], 1.0, 1.0);
        state.means = vec![1.0];
        let mut rng = rng_from_seed(4);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            update_cluster_means_and_theta(&mut state, &[3.0], &[1.0], &mut rng);
            let t = state.theta[0];
            let mu = state.means[0];
            let d = t - (3.0 + mu) / 2.0;
            sum += d;
            sq += d * d;
        }
        assert!((sum / n as f64).abs() < 0.01);
        assert!((sq / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn kernel_variance_with_exact_fit() {
        let mut state = fresh(&[0.0; 8], 1.0, 1.0);
        state.means = vec![0.0];
        state.theta = vec![0.0; 8];
        let cfg = DpConfig { base_var_fixed: Some(1.0), ..DpConfig::default() };
        let mut rng = rng_from_seed(5);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| {
                update_variances(&mut state, &cfg, &mut rng);
                state.sigma2
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 5.0 / (2.0 + 4.0)).abs() < 0.01);
    }

    #[test]
    fn compact_relabels_in_order() {
        let mut state = fresh(&[0.0; 4], 1.0, 1.0);
        state.assignment = vec![3, 1, 3, 1];
        state.counts = vec![0, 2, 0, 2];
        state.means = vec![9.0, 1.0, 9.0, 3.0];
        state.compact();
        assert_eq!(state.assignment, vec![0, 1, 0, 1]);
        assert_eq!(state.counts, vec![2, 2]);
        assert_eq!(state.means, vec![3.0, 1.0]);
    }

    #[test]
    fn fit_shrinks_noise_toward_zero() {
        let mut rng = rng_from_seed(6);
        let y: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ds = reorder_by_q(&ParallelDataset::new(y.clone(), ErrorModel::standard_normal(200)).unwrap());
        let cfg = DpConfig { n_scans: 400, burn_in: 100, ..DpConfig::default() };
        let means = posterior_means(&dp_fit(&ds, &cfg).unwrap()).unwrap();
        let mean_abs = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
        assert!(mean_abs(&means) < mean_abs(ds.y()));
    }
}
