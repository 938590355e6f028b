//! Working priors of the hierarchical model and their full conditionals.
//!
//! The Laplace scale `eta1` and the normal standard deviation `eta2` carry
//! uniform hyperpriors; the mixture chooses one component for the whole
//! effect vector.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use statrs::function::gamma::ln_gamma;

use crate::dist::{sample_gamma_truncated, sample_normal_above};
use crate::error::{Error, Result};
use crate::special::{ln_gamma_q, ln_normal_cdf, log_add_exp, LN_SQRT_2PI};

/// Upper bound of the uniform hyperprior on the Laplace scale.
pub const LAPLACE_SCALE_UPPER: f64 = 35.35;
/// Upper bound of the uniform hyperprior on the normal standard deviation.
pub const NORMAL_SD_UPPER: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PriorFamily {
    Laplace,
    Normal,
    Mixture,
}

impl PriorFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::Laplace => "laplace",
            Self::Normal => "normal",
            Self::Mixture => "mixture",
        }
    }
}

/// Hyperprior on a scale parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HyperPrior {
    /// Uniform on `(0, upper)`.
    Uniform { upper: f64 },
    /// Point mass; the parameter never moves.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Laplace,
    Normal,
}

/// Current hyperparameter values of a working prior.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkingPrior {
    Laplace { eta1: f64, hyper: HyperPrior },
    Normal { eta2: f64, hyper: HyperPrior },
    Mixture { lambda: f64, z: Component, eta1: f64, eta2: f64, hyper1: HyperPrior, hyper2: HyperPrior },
}

impl WorkingPrior {
    /// The family with its default uniform hyperpriors, started at a moment
    /// estimate of the effect spread (`var(y) - 1`, floored) for data with
    /// unit-variance errors.
    pub fn initial(family: PriorFamily, y: &[f64]) -> Self {
        let n = y.len().max(1) as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = (var - 1.0).max(0.25).sqrt();
        let eta2 = sd.min(0.5 * NORMAL_SD_UPPER);
        let eta1 = (sd / std::f64::consts::SQRT_2).min(0.5 * LAPLACE_SCALE_UPPER);
        let h1 = HyperPrior::Uniform { upper: LAPLACE_SCALE_UPPER };
        let h2 = HyperPrior::Uniform { upper: NORMAL_SD_UPPER };
        match family {
            PriorFamily::Laplace => Self::Laplace { eta1, hyper: h1 },
            PriorFamily::Normal => Self::Normal { eta2, hyper: h2 },
            PriorFamily::Mixture => {
                Self::Mixture { lambda: 0.5, z: Component::Normal, eta1, eta2, hyper1: h1, hyper2: h2 }
            }
        }
    }

    pub fn family(&self) -> PriorFamily {
        match self {
            Self::Laplace { .. } => PriorFamily::Laplace,
            Self::Normal { .. } => PriorFamily::Normal,
            Self::Mixture { .. } => PriorFamily::Mixture,
        }
    }

    /// Component currently generating the effects.
    pub fn active(&self) -> Component {
        match self {
            Self::Laplace { .. } => Component::Laplace,
            Self::Normal { .. } => Component::Normal,
            Self::Mixture { z, .. } => *z,
        }
    }

    /// Laplace scale, if the prior has one.
    pub fn eta1(&self) -> Option<f64> {
        match *self {
            Self::Laplace { eta1, .. } | Self::Mixture { eta1, .. } => Some(eta1),
            Self::Normal { .. } => None,
        }
    }

    /// Normal standard deviation, if the prior has one.
    pub fn eta2(&self) -> Option<f64> {
        match *self {
            Self::Normal { eta2, .. } | Self::Mixture { eta2, .. } => Some(eta2),
            Self::Laplace { .. } => None,
        }
    }

    /// Per-coordinate log density of the active component.
    pub fn log_density(&self, theta: f64) -> f64 {
        self.kernel().eval(theta)
    }

    /// The active component's log density with its constants precomputed.
    pub fn kernel(&self) -> LogKernel {
        match self.active() {
            Component::Laplace => {
                let b = self.eta1().expect("laplace component");
                LogKernel { component: Component::Laplace, scale_factor: 1.0 / b, offset: (2.0 * b).ln() }
            }
            Component::Normal => {
                let sd = self.eta2().expect("normal component");
                LogKernel { component: Component::Normal, scale_factor: 0.5 / (sd * sd), offset: sd.ln() + LN_SQRT_2PI }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, v: f64, hyper: HyperPrior| -> Result<()> {
            let ok = v.is_finite()
                && v > 0.0
                && match hyper {
                    HyperPrior::Uniform { upper } => v < upper,
                    HyperPrior::Fixed => true,
                };
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, value: v, reason: "outside the hyperprior support" })
            }
        };
        match *self {
            Self::Laplace { eta1, hyper } => check("eta1", eta1, hyper),
            Self::Normal { eta2, hyper } => check("eta2", eta2, hyper),
            Self::Mixture { lambda, eta1, eta2, hyper1, hyper2, .. } => {
                check("eta1", eta1, hyper1)?;
                check("eta2", eta2, hyper2)?;
                if lambda > 0.0 && lambda < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter { name: "lambda", value: lambda, reason: "must lie in (0, 1)" })
                }
            }
        }
    }
}

/// Log density of one working-prior component, cheap to evaluate repeatedly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogKernel {
    component: Component,
    scale_factor: f64,
    offset: f64,
}

impl LogKernel {
    #[inline]
    pub fn eval(&self, theta: f64) -> f64 {
        match self.component {
            Component::Laplace => -theta.abs() * self.scale_factor - self.offset,
            Component::Normal => -theta * theta * self.scale_factor - self.offset,
        }
    }
}

pub fn laplace_log_density(theta: f64, scale: f64) -> f64 {
    -theta.abs() / scale - (2.0 * scale).ln()
}

pub fn normal_log_density(theta: f64, sd: f64) -> f64 {
    let z = theta / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// Draws θ from the density proportional to `exp(-(y - θ)²/(2 s²) - |θ|/b)`.
///
/// The density splits at zero into two truncated normal lobes with means
/// `y - s²/b` (positive side) and `y + s²/b` (negative side).
pub fn sample_laplace_conditional<R: Rng + ?Sized>(y: f64, s: f64, b: f64, rng: &mut R) -> f64 {
    let shift = s * s / b;
    let m_pos = y - shift;
    let m_neg = y + shift;
    let ln_pos = -y / b + ln_normal_cdf(m_pos / s);
    let ln_neg = y / b + ln_normal_cdf(-m_neg / s);
    let ln_total = log_add_exp(ln_pos, ln_neg);
    if rng.random::<f64>().ln() < ln_pos - ln_total {
        sample_normal_above(m_pos, s, 0.0, rng)
    } else {
        -sample_normal_above(-m_neg, s, 0.0, rng)
    }
}

/// Draws θ from N(y η²/(s² + η²), η² s²/(η² + s²)).
pub fn sample_normal_conditional<R: Rng + ?Sized>(y: f64, s: f64, eta: f64, rng: &mut R) -> f64 {
    let (e2, s2) = (eta * eta, s * s);
    let mean = y * e2 / (s2 + e2);
    let sd = (e2 * s2 / (e2 + s2)).sqrt();
    let z: f64 = rand_distr::StandardNormal.sample(rng);
    mean + sd * z
}

/// Mean of the density proportional to `exp(-(y - θ)²/(2 s²) - |θ|/b)`.
pub fn laplace_conditional_mean(y: f64, s: f64, b: f64) -> f64 {
    let shift = s * s / b;
    let m_pos = y - shift;
    let m_neg = y + shift;
    let ln_pos = -y / b + ln_normal_cdf(m_pos / s);
    let ln_neg = y / b + ln_normal_cdf(-m_neg / s);
    let w_pos = (ln_pos - log_add_exp(ln_pos, ln_neg)).exp();
    // Truncated-normal means via the inverse Mills ratio, in log space.
    let mills = |a: f64| (-0.5 * a * a - LN_SQRT_2PI - ln_normal_cdf(a)).exp();
    let mean_pos = m_pos + s * mills(m_pos / s);
    let mean_neg = m_neg - s * mills(-m_neg / s);
    w_pos * mean_pos + (1.0 - w_pos) * mean_neg
}

/// `E[θ_i | y_i, η]` for every coordinate, for zero-mean normal errors with
/// standard deviations `sds`.
pub fn theta_conditional_means(y: &[f64], sds: &[f64], prior: &WorkingPrior) -> Vec<f64> {
    match prior.active() {
        Component::Laplace => {
            let b = prior.eta1().expect("laplace component");
            y.iter().zip(sds).map(|(&yi, &s)| laplace_conditional_mean(yi, s, b)).collect()
        }
        Component::Normal => {
            let e2 = prior.eta2().expect("normal component").powi(2);
            y.iter().zip(sds).map(|(&yi, &s)| yi * e2 / (s * s + e2)).collect()
        }
    }
}

/// Independent draws of every θ_i given the current hyperparameters, for
/// zero-mean normal errors with standard deviations `sds`.
pub fn sample_theta_given_eta<R: Rng + ?Sized>(y: &[f64], sds: &[f64], prior: &WorkingPrior, rng: &mut R) -> Vec<f64> {
    debug_assert_eq!(y.len(), sds.len());
    match prior.active() {
        Component::Laplace => {
            let b = prior.eta1().expect("laplace component");
            y.iter().zip(sds).map(|(&yi, &s)| sample_laplace_conditional(yi, s, b, rng)).collect()
        }
        Component::Normal => {
            let eta = prior.eta2().expect("normal component");
            y.iter().zip(sds).map(|(&yi, &s)| sample_normal_conditional(yi, s, eta, rng)).collect()
        }
    }
}

/// Draws the Laplace scale given Σ|θ_i| = `abs_sum` over `p` coordinates:
/// `1/η ~ Gamma(p - 1, abs_sum)` truncated to `1/η > 1/upper`.
pub fn sample_laplace_scale<R: Rng + ?Sized>(p: usize, abs_sum: f64, upper: f64, rng: &mut R) -> Result<f64> {
    if !(abs_sum > 0.0) {
        return Err(Error::DegenerateTheta("sum of |theta| is zero"));
    }
    let x = sample_gamma_truncated(p as f64 - 1.0, abs_sum, 1.0 / upper, rng)?;
    Ok((1.0 / x).min(upper.next_down()))
}

/// Draws the normal standard deviation given Σθ_i² = `sq_sum` over `p`
/// coordinates: `η⁻² ~ Gamma((p - 1)/2, sq_sum/2)` truncated to `η⁻² > 1/upper²`.
pub fn sample_normal_sd<R: Rng + ?Sized>(p: usize, sq_sum: f64, upper: f64, rng: &mut R) -> Result<f64> {
    if !(sq_sum > 0.0) {
        return Err(Error::DegenerateTheta("sum of theta squared is zero"));
    }
    let w = sample_gamma_truncated((p as f64 - 1.0) / 2.0, sq_sum / 2.0, 1.0 / (upper * upper), rng)?;
    Ok(w.sqrt().recip().min(upper.next_down()))
}

/// Log marginal density of θ under the Laplace component, integrating the
/// scale over its hyperprior (or evaluating at the fixed scale).
pub fn laplace_log_marginal(theta: &[f64], eta1: f64, hyper: HyperPrior) -> f64 {
    let s: f64 = theta.iter().map(|t| t.abs()).sum();
    match hyper {
        HyperPrior::Fixed => theta.iter().map(|&t| laplace_log_density(t, eta1)).sum(),
        HyperPrior::Uniform { upper } => {
            let a = theta.len() as f64 - 1.0;
            -(theta.len() as f64) * std::f64::consts::LN_2 - upper.ln() + ln_gamma(a) - a * s.ln()
                + ln_gamma_q(a, s / upper)
        }
    }
}

/// Log marginal density of θ under the normal component, integrating the
/// standard deviation over its hyperprior (or evaluating at the fixed value).
pub fn normal_log_marginal(theta: &[f64], eta2: f64, hyper: HyperPrior) -> f64 {
    match hyper {
        HyperPrior::Fixed => theta.iter().map(|&t| normal_log_density(t, eta2)).sum(),
        HyperPrior::Uniform { upper } => {
            let t: f64 = theta.iter().map(|v| v * v).sum();
            let p = theta.len() as f64;
            let a = (p - 1.0) / 2.0;
            -p * LN_SQRT_2PI - (2.0 * upper).ln() + ln_gamma(a) - a * (t / 2.0).ln()
                + ln_gamma_q(a, t / (2.0 * upper * upper))
        }
    }
}

fn redraw_scale<R: Rng + ?Sized>(current: f64, hyper: HyperPrior, rng: &mut R) -> f64 {
    match hyper {
        HyperPrior::Fixed => current,
        HyperPrior::Uniform { upper } => loop {
            let v = rng.random::<f64>() * upper;
            if v > 0.0 {
                break v;
            }
        },
    }
}

/// One draw of the hyperparameters given θ.
///
/// For the mixture, the component indicator is drawn with the component
/// scales integrated out, then λ, then the active scale from its conditional
/// and the inactive scale from its hyperprior.
pub fn sample_eta_given_theta<R: Rng + ?Sized>(
    prior: &WorkingPrior,
    theta: &[f64],
    rng: &mut R,
) -> Result<WorkingPrior> {
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::DegenerateTheta("non-finite theta"));
    }
    let p = theta.len();
    if p < 2 {
        return Err(Error::InvalidParameter {
            name: "p",
            value: p as f64,
            reason: "hyperparameter conditionals need at least two effects",
        });
    }
    let abs_sum = || theta.iter().map(|t| t.abs()).sum::<f64>();
    let sq_sum = || theta.iter().map(|t| t * t).sum::<f64>();
    let laplace = |eta1: f64, hyper: HyperPrior, rng: &mut R| match hyper {
        HyperPrior::Fixed => Ok(eta1),
        HyperPrior::Uniform { upper } => sample_laplace_scale(p, abs_sum(), upper, rng),
    };
    let normal = |eta2: f64, hyper: HyperPrior, rng: &mut R| match hyper {
        HyperPrior::Fixed => Ok(eta2),
        HyperPrior::Uniform { upper } => sample_normal_sd(p, sq_sum(), upper, rng),
    };
    Ok(match *prior {
        WorkingPrior::Laplace { eta1, hyper } => WorkingPrior::Laplace { eta1: laplace(eta1, hyper, rng)?, hyper },
        WorkingPrior::Normal { eta2, hyper } => WorkingPrior::Normal { eta2: normal(eta2, hyper, rng)?, hyper },
        WorkingPrior::Mixture { lambda, eta1, eta2, hyper1, hyper2, .. } => {
            let log_odds = lambda.ln() - (1.0 - lambda).ln() + laplace_log_marginal(theta, eta1, hyper1)
                - normal_log_marginal(theta, eta2, hyper2);
            if log_odds.is_nan() {
                return Err(Error::NanDelta);
            }
            let p_laplace = 1.0 / (1.0 + (-log_odds).exp());
            let z = if rng.random::<f64>() < p_laplace { Component::Laplace } else { Component::Normal };
            let (a, b) = match z {
                Component::Laplace => (2.0, 1.0),
                Component::Normal => (1.0, 2.0),
            };
            let lambda: f64 = Beta::new(a, b).expect("valid beta").sample(rng);
            let lambda = lambda.clamp(f64::MIN_POSITIVE, 1.0f64.next_down());
            let (eta1, eta2) = match z {
                Component::Laplace => (laplace(eta1, hyper1, rng)?, redraw_scale(eta2, hyper2, rng)),
                Component::Normal => (redraw_scale(eta1, hyper1, rng), normal(eta2, hyper2, rng)?),
            };
            WorkingPrior::Mixture { lambda, z, eta1, eta2, hyper1, hyper2 }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    // Trapezoid rule on a fine grid.
    fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
        h * (0.5 * (f(lo) + f(hi)) + inner)
    }

    #[test]
    fn normal_conditional_moments() {
        let mut rng = rng_from_seed(1);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_normal_conditional(2.0, 1.0, 2.0, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.6).abs() < 4.0 * (0.8 / n as f64).sqrt());
        assert!((var - 0.8).abs() < 0.01);
    }

    #[test]
    fn laplace_conditional_is_symmetric_at_zero() {
        let mut rng = rng_from_seed(2);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_laplace_conditional(0.0, 1.0, 1.0, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|d| d * d).sum::<f64>() / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn laplace_conditional_mean_matches_quadrature() {
        let kernel = |t: f64| (-(3.0 - t) * (3.0 - t) / 2.0 - t.abs()).exp();
        let z = integrate(kernel, -15.0, 20.0, 200_000);
        let expected = integrate(|t| t * kernel(t), -15.0, 20.0, 200_000) / z;
        let mut rng = rng_from_seed(3);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_laplace_conditional(3.0, 1.0, 1.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - expected).abs() < 0.01, "{mean} vs {expected}");
    }

    #[test]
    fn laplace_conditional_mean_matches_quadrature_exactly() {
        for (y, s, b) in [(3.0, 1.0, 1.0), (-0.4, 1.0, 0.3), (6.0, 0.5, 2.0), (0.0, 1.0, 5.0)] {
            let kernel = |t: f64| (-(y - t) * (y - t) / (2.0 * s * s) - f64::abs(t) / b).exp();
            let lo = y - 20.0 * s - 1.0;
            let hi = y + 20.0 * s + 1.0;
            let z = integrate(kernel, lo, hi, 400_000);
            let expected = integrate(|t| t * kernel(t), lo, hi, 400_000) / z;
            assert!((laplace_conditional_mean(y, s, b) - expected).abs() < 1e-8, "{y} {s} {b}");
        }
    }

    #[test]
    fn laplace_conditional_far_tail_is_finite() {
        let mut rng = rng_from_seed(4);
        for y in [-60.0, -12.0, 12.0, 60.0] {
            let t = sample_laplace_conditional(y, 1.0, 0.01, &mut rng);
            assert!(t.is_finite());
            assert!(t.signum() == y.signum() || t.abs() < 1.0);
        }
    }

    #[test]
    fn marginals_match_quadrature() {
        let theta = [0.3, -1.2, 2.5, 0.1, -0.7];
        let l = integrate(
            |e| {
                if e <= 0.0 {
                    0.0
                } else {
                    theta.iter().map(|&t| laplace_log_density(t, e)).sum::<f64>().exp() / 35.35
                }
            },
            0.0,
            35.35,
            400_000,
        );
        let got = laplace_log_marginal(&theta, 1.0, HyperPrior::Uniform { upper: 35.35 });
        assert!((got - l.ln()).abs() < 1e-5, "{got} vs {}", l.ln());
        let n = integrate(
            |e| {
                if e <= 0.0 {
                    0.0
                } else {
                    theta.iter().map(|&t| normal_log_density(t, e)).sum::<f64>().exp() / 50.0
                }
            },
            0.0,
            50.0,
            400_000,
        );
        let got = normal_log_marginal(&theta, 1.0, HyperPrior::Uniform { upper: 50.0 });
        assert!((got - n.ln()).abs() < 1e-5, "{got} vs {}", n.ln());
    }

    #[test]
    fn kernel_matches_densities() {
        let l = WorkingPrior::Laplace { eta1: 1.7, hyper: HyperPrior::Fixed };
        let n = WorkingPrior::Normal { eta2: 0.6, hyper: HyperPrior::Fixed };
        for t in [-3.0, -0.2, 0.0, 1.1, 8.0] {
            assert!((l.log_density(t) - laplace_log_density(t, 1.7)).abs() < 1e-14);
            assert!((n.log_density(t) - normal_log_density(t, 0.6)).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_theta_is_rejected() {
        let mut rng = rng_from_seed(5);
        let prior = WorkingPrior::Laplace { eta1: 1.0, hyper: HyperPrior::Uniform { upper: LAPLACE_SCALE_UPPER } };
        assert!(matches!(sample_eta_given_theta(&prior, &[0.0; 4], &mut rng), Err(Error::DegenerateTheta(_))));
    }

    #[test]
    fn fixed_hyper_does_not_move() {
        let mut rng = rng_from_seed(6);
        let prior = WorkingPrior::Normal { eta2: 2.0, hyper: HyperPrior::Fixed };
        assert_eq!(sample_eta_given_theta(&prior, &[1.0, -3.0, 0.5], &mut rng).unwrap(), prior);
    }

    #[test]
    fn mixture_picks_laplace_for_laplace_effects() {
        let mut rng = rng_from_seed(7);
        let laplace = crate::dist::DistSpec::laplace(0.0, 2.0);
        let theta: Vec<f64> = (0..1000).map(|_| crate::dist::sample(&laplace, &mut rng)).collect();
        let mut prior = WorkingPrior::initial(PriorFamily::Mixture, &theta);
        let mut hits = 0;
        for _ in 0..500 {
            prior = sample_eta_given_theta(&prior, &theta, &mut rng).unwrap();
            hits += usize::from(prior.active() == Component::Laplace);
            prior.validate().unwrap();
        }
        assert!(hits > 475, "{hits}");
    }

    #[test]
    fn mixture_follows_dominant_fixed_component() {
        // Effects near zero make a tight normal overwhelmingly likelier than a wide Laplace.
        let mut rng = rng_from_seed(8);
        let theta: Vec<f64> = (0..50).map(|i| 0.01 * (i as f64 - 25.0) / 25.0).collect();
        let prior = WorkingPrior::Mixture {
            lambda: 0.5,
            z: Component::Laplace,
            eta1: 10.0,
            eta2: 0.05,
            hyper1: HyperPrior::Fixed,
            hyper2: HyperPrior::Fixed,
        };
        let gap = normal_log_marginal(&theta, 0.05, HyperPrior::Fixed)
            - laplace_log_marginal(&theta, 10.0, HyperPrior::Fixed);
        assert!(gap > 20.0);
        let mut state = prior;
        let mut normal = 0;
        for _ in 0..2000 {
            state = sample_eta_given_theta(&state, &theta, &mut rng).unwrap();
            normal += usize::from(state.active() == Component::Normal);
        }
        assert!(normal as f64 / 2000.0 >= 0.99);
    }
}
