//! Built-in self-checks against independent oracles: exact enumeration of
//! the permutation posterior at small p, the conjugate normal closed form,
//! the shrinking order-statistic deviation of the error quantiles, and
//! quadrature of the hyperparameter conditionals.

use std::collections::HashMap;

use crate::chain::posterior_means;
use crate::dist::{self, DistSpec};
use crate::error::Result;
use crate::gibbs::{standard_gibbs_from, GibbsConfig};
use crate::permutation_mh::{log_target, run_chain_with, MhConfig, PermutationState};
use crate::prior::{
    laplace_log_density, normal_log_density, sample_laplace_scale, sample_normal_sd, HyperPrior, WorkingPrior,
    LAPLACE_SCALE_UPPER, NORMAL_SD_UPPER,
};
use crate::quantile_map::{reorder_by_q, sorted_sup_deviation, ErrorModel, ParallelDataset};
use crate::rng::{hash64, rng_from_seed};
use crate::special::normal_cdf;

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// All permutations of `0..p` in lexicographic order.
pub fn permutations(p: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                extend(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), &mut vec![false; p], &mut out);
    out
}

fn simulated(p: usize, effect_sd: f64, seed: u64) -> ParallelDataset {
    let mut rng = rng_from_seed(seed);
    let effect = DistSpec::normal(0.0, effect_sd);
    let noise = DistSpec::standard_normal();
    let theta: Vec<f64> = (0..p).map(|_| dist::sample(&effect, &mut rng)).collect();
    let y = theta.iter().map(|t| t + dist::sample(&noise, &mut rng)).collect();
    let ds = ParallelDataset::new(y, ErrorModel::standard_normal(p)).and_then(|d| d.with_true_theta(theta));
    reorder_by_q(&ds.expect("matching lengths"))
}

/// Total-variation distance between the sampler's visit frequencies and the
/// exact permutation posterior, for a fixed-scale Laplace or normal prior.
pub fn enumeration_tv(p: usize, laplace: bool, retained_steps: usize, seed: u64) -> Result<f64> {
    let ds = simulated(p, 2.0, hash64(seed, p as u64));
    let prior = move |t: f64| if laplace { laplace_log_density(t, 1.5) } else { normal_log_density(t, 2.0) };
    let perms = permutations(p);
    let mut state = PermutationState::identity(&ds);
    let mut log_w = Vec::with_capacity(perms.len());
    for perm in &perms {
        state.set_assignment(perm.clone());
        log_w.push(log_target(&mut state, &prior)?);
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_w.iter().map(|w| (w - max).exp()).sum();
    let exact: Vec<f64> = log_w.iter().map(|w| (w - max).exp() / total).collect();

    let index: HashMap<Vec<usize>, usize> = perms.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    let mut counts = vec![0usize; perms.len()];
    let burn_in = 20_000;
    let cfg = MhConfig {
        n_steps: burn_in + retained_steps,
        burn_in,
        initial_k: 2,
        adapt_every: 1_000,
        seed,
        ..MhConfig::default()
    };
    run_chain_with(&ds, &prior, &cfg, |s| counts[index[s.assignment()]] += 1)?;
    let n = retained_steps as f64;
    Ok(0.5 * exact.iter().zip(&counts).map(|(e, &c)| (e - c as f64 / n).abs()).sum::<f64>())
}

/// Largest `|θ̂_i - 0.8 y_i|` for the standard sampler with the normal
/// prior's standard deviation fixed at 2.
pub fn conjugate_max_deviation(p: usize, seed: u64) -> Result<f64> {
    let ds = simulated(p, 2.0, seed);
    let prior = WorkingPrior::Normal { eta2: 2.0, hyper: HyperPrior::Fixed };
    let cfg = GibbsConfig { seed: hash64(seed, 1), ..GibbsConfig::default() };
    let means = posterior_means(&standard_gibbs_from(&ds, prior, &cfg)?)?;
    Ok(means.iter().zip(ds.y()).map(|(m, y)| (m - 0.8 * y).abs()).fold(0.0, f64::max))
}

/// `sup_i |ū_(i) - i/(p+1)|` where `ū_(i)` averages the i-th order statistic
/// of `u = Φ(y - θ)` over draws of θ from its posterior under the true
/// N(0, 2²) prior.
pub fn order_statistic_deviation(p: usize, draws: usize, seed: u64) -> Result<f64> {
    let ds = simulated(p, 2.0, seed);
    let prior = WorkingPrior::Normal { eta2: 2.0, hyper: HyperPrior::Fixed };
    let cfg = GibbsConfig {
        n_scans: draws + 1,
        burn_in: 1,
        seed: hash64(seed, 2),
        keep_draws: true,
        ..GibbsConfig::default()
    };
    let out = standard_gibbs_from(&ds, prior, &cfg)?;
    let mut mean_sorted = vec![0.0; p];
    let draws = out.theta_draws.expect("draws kept");
    for theta in &draws {
        let mut u: Vec<f64> = ds.y().iter().zip(theta).map(|(y, t)| normal_cdf(y - t)).collect();
        u.sort_by(f64::total_cmp);
        for (m, v) in mean_sorted.iter_mut().zip(u) {
            *m += v / draws.len() as f64;
        }
    }
    Ok(sorted_sup_deviation(&mean_sorted))
}

/// Median of [`order_statistic_deviation`] over `n_datasets` datasets.
pub fn median_order_statistic_deviation(p: usize, n_datasets: usize, draws: usize, seed: u64) -> Result<f64> {
    let mut values = (0..n_datasets)
        .map(|d| order_statistic_deviation(p, draws, hash64(seed, d as u64)))
        .collect::<Result<Vec<_>>>()?;
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Ok(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    h * (0.5 * (f(lo) + f(hi)) + (1..n).map(|i| f(lo + i as f64 * h)).sum::<f64>())
}

/// Relative errors (mean, variance) of sampled hyperparameter draws against
/// quadrature of the unnormalized conditional, for the Laplace scale and
/// the normal standard deviation at p = 10.
pub fn eta_conditional_errors(draws: usize, seed: u64) -> Result<[(f64, f64); 2]> {
    let p = 10;
    let (abs_sum, sq_sum) = (8.0, 12.0);
    let mut rng = rng_from_seed(seed);
    let laplace: Vec<f64> =
        (0..draws).map(|_| sample_laplace_scale(p, abs_sum, LAPLACE_SCALE_UPPER, &mut rng)).collect::<Result<_>>()?;
    let normal: Vec<f64> =
        (0..draws).map(|_| sample_normal_sd(p, sq_sum, NORMAL_SD_UPPER, &mut rng)).collect::<Result<_>>()?;
    let density_l = |e: f64| if e <= 0.0 { 0.0 } else { (-(p as f64) * e.ln() - abs_sum / e).exp() };
    let density_n = |e: f64| if e <= 0.0 { 0.0 } else { (-(p as f64) * e.ln() - sq_sum / (2.0 * e * e)).exp() };
    let compare = |samples: &[f64], density: &dyn Fn(f64) -> f64, upper: f64| {
        let n = 2_000_000;
        let z = integrate(density, 0.0, upper, n);
        let mean = integrate(|e| e * density(e), 0.0, upper, n) / z;
        let var = integrate(|e| (e - mean).powi(2) * density(e), 0.0, upper, n) / z;
        let m = samples.iter().sum::<f64>() / samples.len() as f64;
        let v = samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / samples.len() as f64;
        ((m / mean - 1.0).abs(), (v / var - 1.0).abs())
    };
    Ok([compare(&laplace, &density_l, LAPLACE_SCALE_UPPER), compare(&normal, &density_n, NORMAL_SD_UPPER)])
}

/// Runs every check at its default size.
pub fn run_all(seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut push = |name: String, result: Result<(bool, String)>| {
        let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        checks.push(Check { name, passed, detail });
    };
    for p in 3..=5 {
        for laplace in [true, false] {
            let family = if laplace { "laplace" } else { "normal" };
            push(
                format!("enumeration p={p} {family}"),
                enumeration_tv(p, laplace, 2_000_000, hash64(seed, p as u64))
                    .map(|tv| (tv < 0.02, format!("TV {tv:.4} (< 0.02)"))),
            );
        }
    }
    push(
        "conjugate normal p=1000".into(),
        conjugate_max_deviation(1000, seed).map(|d| (d < 0.05, format!("max deviation {d:.4} (< 0.05)"))),
    );
    push(
        "order statistics shrink with p".into(),
        median_order_statistic_deviation(200, 20, 200, seed).and_then(|small| {
            let large = median_order_statistic_deviation(2000, 20, 200, hash64(seed, 3))?;
            Ok((large < small, format!("median sup deviation p=200 {small:.4}, p=2000 {large:.4}")))
        }),
    );
    push(
        "hyperparameter conditionals p=10".into(),
        eta_conditional_errors(1_000_000, seed).map(|[l, n]| {
            let ok = [l.0, l.1, n.0, n.1].iter().all(|e| *e < 0.01);
            let detail = format!(
                "laplace scale mean/var rel. error {:.4}/{:.4}, normal sd {:.4}/{:.4} (< 0.01)",
                l.0, l.1, n.0, n.1
            );
            (ok, detail)
        }),
    );
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(4).len(), 24);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn small_enumeration_matches() {
        assert!(enumeration_tv(3, true, 200_000, 1).unwrap() < 0.03);
    }
}
