use rand::Rng;
use robust_effects::chain::posterior_means;
use robust_effects::gibbs::{standard_gibbs, standard_gibbs_from, GibbsConfig};
use robust_effects::prior::{sample_laplace_conditional, HyperPrior, PriorFamily, WorkingPrior};
use robust_effects::quantile_map::{reorder_by_q, ErrorModel, ParallelDataset};
use robust_effects::rng::{hash64, rng_from_seed};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, Normal};

fn normal_data(p: usize, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let n = Normal::new(0.0, 1.0).unwrap();
    (0..p).map(|_| sd * n.inverse_cdf(rng.random()) + n.inverse_cdf(rng.random())).collect()
}

fn dataset(y: Vec<f64>) -> ParallelDataset {
    let p = y.len();
    reorder_by_q(&ParallelDataset::new(y, ErrorModel::standard_normal(p)).unwrap())
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    h / 3.0 * (f(lo) + f(hi) + inner)
}

#[test]
fn laplace_conditional_draws_match_quadrature_mean() {
    let density = |t: f64| (-(3.0 - t).powi(2) / 2.0 - t.abs()).exp();
    let z = simpson(density, -15.0, 20.0, 200_000);
    let mean = simpson(|t| t * density(t), -15.0, 20.0, 200_000) / z;
    let mut rng = rng_from_seed(6);
    let n = 100_000;
    let m = (0..n).map(|_| sample_laplace_conditional(3.0, 1.0, 1.0, &mut rng)).sum::<f64>() / n as f64;
    assert!((m - mean).abs() < 0.01, "{m} vs {mean}");
}

#[test]
fn gamma_forms_match_quadrature_in_total_variation() {
    // p = 10 with sum |θ| = 8 and sum θ² = 12 on the uniform hyperprior ranges.
    let p = 10.0;
    let cases: [(f64, Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>); 2] = [
        (
            35.35,
            Box::new(move |e: f64| (-p * e.ln() - 8.0 / e).exp()),
            Box::new(move |e: f64| {
                let g = Gamma::new(p - 1.0, 8.0).unwrap();
                g.pdf(1.0 / e) / (e * e) / (1.0 - g.cdf(1.0 / 35.35))
            }),
        ),
        (
            50.0,
            Box::new(move |e: f64| (-p * e.ln() - 12.0 / (2.0 * e * e)).exp()),
            Box::new(move |e: f64| {
                let g = Gamma::new((p - 1.0) / 2.0, 6.0).unwrap();
                g.pdf(e.powi(-2)) * 2.0 / e.powi(3) / (1.0 - g.cdf(1.0 / 2500.0))
            }),
        ),
    ];
    for (upper, unnormalized, derived) in &cases {
        let f = |e: f64| if e <= 0.0 { 0.0 } else { unnormalized(e) };
        let g = |e: f64| if e <= 0.0 { 0.0 } else { derived(e) };
        let z = simpson(f, 0.0, *upper, 2_000_000);
        let tv = 0.5 * simpson(|e| (f(e) / z - g(e)).abs(), 0.0, *upper, 2_000_000);
        assert!(tv < 1e-6, "upper {upper}: tv {tv}");
    }
}

#[test]
fn negated_data_negate_the_estimates() {
    // Over 20 datasets the extreme estimates of y and of -y mirror each other.
    let mut diffs = Vec::new();
    for rep in 0..20 {
        let y = normal_data(200, 2.0, hash64(9, rep));
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let cfg = GibbsConfig { n_scans: 1500, burn_in: 300, seed: hash64(10, rep), ..GibbsConfig::default() };
        let a = posterior_means(&standard_gibbs(&dataset(y), PriorFamily::Laplace, &cfg).unwrap()).unwrap();
        let cfg = GibbsConfig { seed: hash64(11, rep), ..cfg };
        let b = posterior_means(&standard_gibbs(&dataset(neg), PriorFamily::Laplace, &cfg).unwrap()).unwrap();
        diffs.push(a[199] + b[0]);
        diffs.push(a[0] + b[199]);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 4.0 * sd / n.sqrt() + 1e-3, "mean {mean} sd {sd}");
}

#[test]
fn conjugate_error_halves_when_draws_quadruple() {
    let ds = dataset(normal_data(400, 2.0, 3));
    let prior = WorkingPrior::Normal { eta2: 2.0, hyper: HyperPrior::Fixed };
    let rms = |retained: usize| {
        let mut total = 0.0;
        for seed in 0..4 {
            let cfg = GibbsConfig {
                n_scans: retained + 10,
                burn_in: 10,
                seed,
                rao_blackwell: false,
                ..GibbsConfig::default()
            };
            let means = posterior_means(&standard_gibbs_from(&ds, prior.clone(), &cfg).unwrap()).unwrap();
            total += means.iter().zip(ds.y()).map(|(m, y)| (m - 0.8 * y).powi(2)).sum::<f64>() / 400.0;
        }
        (total / 4.0).sqrt()
    };
    let ratio = rms(4000) / rms(1000);
    assert!((0.4..0.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn u_order_statistics_tighten_with_p_under_the_correct_family() {
    let n = Normal::new(0.0, 1.0).unwrap();
    let sup = |p: usize| {
        let ds = dataset(normal_data(p, 2.0, 40 + p as u64));
        let cfg = GibbsConfig { n_scans: 400, burn_in: 200, seed: 1, keep_draws: true, ..GibbsConfig::default() };
        let out = standard_gibbs(&ds, PriorFamily::Normal, &cfg).unwrap();
        let draws = out.theta_draws.as_ref().unwrap();
        let mut mean_sorted = vec![0.0; p];
        for theta in draws {
            let mut u: Vec<f64> = ds.y().iter().zip(theta).map(|(y, t)| n.cdf(y - t)).collect();
            u.sort_by(f64::total_cmp);
            for (m, v) in mean_sorted.iter_mut().zip(u) {
                *m += v / draws.len() as f64;
            }
        }
        mean_sorted.iter().enumerate().map(|(i, v)| (v - (i + 1) as f64 / (p + 1) as f64).abs()).fold(0.0, f64::max)
    };
    let (small, large) = (sup(200), sup(1000));
    assert!(small < 0.15 && large < small, "p=200 {small}, p=1000 {large}");
}
