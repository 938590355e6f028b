//! Experiment configuration, read from TOML.
//!
//! ```toml
//! p = 1000
//! n_reps = 20
//! true_prior = ["normal", "t", "hybrid"]
//! methods = "all"
//! base_seed = 20240601
//! workers = 1
//!
//! [chain]
//! scans = 4000
//! burn_in = 1000
//!
//! [method_chain.dp]
//! scans = 6000
//! ```

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use super::{Method, TruePrior};
use crate::error::{Error, Result};
use crate::gibbs::GibbsConfig;
use crate::permutation_mh::MhConfig;

/// Chain lengths and Metropolis-Hastings tuning for one method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub scans: usize,
    pub burn_in: usize,
    pub inner_mh_sweeps: usize,
    pub initial_k: usize,
    /// Metropolis-Hastings proposals per adaptation window.
    pub adapt_every: usize,
    /// Position blocks with separately adapted window sizes; 1 is a single global size.
    pub window_blocks: usize,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self { scans: 4000, burn_in: 1000, inner_mh_sweeps: 1, initial_k: 4, adapt_every: 1000, window_blocks: 20 }
    }
}

impl ChainSettings {
    pub fn gibbs(&self, seed: u64) -> GibbsConfig {
        GibbsConfig {
            n_scans: self.scans,
            burn_in: self.burn_in,
            inner_mh_sweeps: self.inner_mh_sweeps,
            mh: MhConfig {
                initial_k: self.initial_k,
                adapt_every: self.adapt_every,
                window_blocks: self.window_blocks,
                ..MhConfig::default()
            },
            seed,
            ..GibbsConfig::default()
        }
    }

    fn problem(&self) -> Option<String> {
        if self.scans == 0 {
            Some("scans must be positive".into())
        } else if self.burn_in >= self.scans {
            Some(format!("burn_in ({}) must be smaller than scans ({})", self.burn_in, self.scans))
        } else if self.inner_mh_sweeps == 0 {
            Some("inner_mh_sweeps must be positive".into())
        } else if self.initial_k < 2 {
            Some("initial_k must be at least 2".into())
        } else if self.adapt_every == 0 {
            Some("adapt_every must be positive".into())
        } else if self.window_blocks == 0 {
            Some("window_blocks must be positive".into())
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub p: usize,
    pub n_reps: usize,
    pub true_priors: Vec<TruePrior>,
    pub methods: Vec<Method>,
    pub base_seed: u64,
    pub workers: usize,
    /// Number of extreme coordinates recorded on each side.
    pub i_max: usize,
    pub chain: ChainSettings,
    pub method_chain: BTreeMap<Method, ChainSettings>,
}

impl Default for SimulationConfig {
    /// The desk-scale study: p = 1000, 20 replications, all priors and methods.
    fn default() -> Self {
        Self {
            p: 1000,
            n_reps: 20,
            true_priors: TruePrior::ALL.to_vec(),
            methods: Method::ALL.to_vec(),
            base_seed: 20_240_601,
            workers: 1,
            i_max: 3,
            chain: ChainSettings::default(),
            method_chain: BTreeMap::new(),
        }
    }
}

impl SimulationConfig {
    /// Full-scale study size: p = 2000 with 100 replications.
    pub const FULL_P: usize = 2000;
    pub const FULL_REPS: usize = 100;

    pub fn with_full_scale(mut self) -> Self {
        self.p = Self::FULL_P;
        self.n_reps = Self::FULL_REPS;
        self
    }

    pub fn chain_for(&self, method: Method) -> ChainSettings {
        self.method_chain.get(&method).copied().unwrap_or(self.chain)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.p < 6 {
            return fail(format!("p must be at least 6, got {}", self.p));
        }
        if self.n_reps == 0 {
            return fail("n_reps must be positive".into());
        }
        if self.true_priors.is_empty() {
            return fail("true_prior must name at least one prior".into());
        }
        if self.methods.is_empty() {
            return fail("methods must name at least one method".into());
        }
        if self.workers == 0 {
            return fail("workers must be positive".into());
        }
        if self.i_max == 0 || 2 * self.i_max > self.p {
            return fail(format!("i_max must lie in 1..={}", self.p / 2));
        }
        for m in &self.methods {
            if let Some(problem) = self.chain_for(*m).problem() {
                return fail(format!("chain for {}: {problem}", m.name()));
            }
        }
        Ok(())
    }

    /// Parses a TOML configuration. Missing keys take the desk-scale defaults.
    /// Errors carry the line of the offending entry.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            let msg = e.message().trim().to_string();
            Error::Config(match line {
                Some(l) => format!("line {l}: {msg}"),
                None => msg,
            })
        })?;
        let at = |span: Range<usize>, msg: String| Error::Config(format!("line {}: {msg}", line_of(text, span.start)));
        let count = |v: &Option<Spanned<i64>>, name: &str, min: i64, default: usize| -> Result<usize> {
            match v {
                None => Ok(default),
                Some(s) if *s.get_ref() >= min => Ok(*s.get_ref() as usize),
                Some(s) => Err(at(s.span(), format!("{name} must be at least {min}, got {}", s.get_ref()))),
            }
        };
        let d = Self::default();
        let mut cfg = Self {
            p: count(&raw.p, "p", 6, d.p)?,
            n_reps: count(&raw.n_reps, "n_reps", 1, d.n_reps)?,
            workers: count(&raw.workers, "workers", 1, d.workers)?,
            i_max: count(&raw.i_max, "i_max", 1, d.i_max)?,
            base_seed: match &raw.base_seed {
                None => d.base_seed,
                Some(s) if *s.get_ref() >= 0 => *s.get_ref() as u64,
                Some(s) => return Err(at(s.span(), "base_seed must be nonnegative".into())),
            },
            ..d
        };
        if let Some(list) = &raw.true_prior {
            cfg.true_priors =
                names(list, "true prior", TruePrior::parse, &TruePrior::ALL).map_err(|m| at(list.span(), m))?;
        }
        if let Some(list) = &raw.methods {
            cfg.methods = names(list, "method", Method::parse, &Method::ALL).map_err(|m| at(list.span(), m))?;
        }
        if let Some(chain) = &raw.chain {
            cfg.chain = chain.get_ref().merge(cfg.chain);
            if let Some(problem) = cfg.chain.problem() {
                return Err(at(chain.span(), problem));
            }
        }
        for (name, chain) in &raw.method_chain {
            let method = Method::parse(name.get_ref())
                .ok_or_else(|| at(name.span(), format!("unknown method `{}`", name.get_ref())))?;
            let merged = chain.get_ref().merge(cfg.chain);
            if let Some(problem) = merged.problem() {
                return Err(at(chain.span(), problem));
            }
            cfg.method_chain.insert(method, merged);
        }
        if 2 * cfg.i_max > cfg.p {
            let span = raw.i_max.as_ref().map_or(0..0, |s| s.span());
            return Err(at(span, format!("i_max must lie in 1..={}", cfg.p / 2)));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn names<T: Copy + PartialEq>(
    list: &Spanned<OneOrMany>,
    what: &str,
    parse: fn(&str) -> Option<T>,
    all: &[T],
) -> std::result::Result<Vec<T>, String> {
    let items = match list.get_ref() {
        OneOrMany::One(s) if s == "all" => return Ok(all.to_vec()),
        OneOrMany::One(s) => vec![s.clone()],
        OneOrMany::Many(v) => v.clone(),
    };
    if items.is_empty() {
        return Err(format!("at least one {what} is required"));
    }
    let mut out = Vec::new();
    for s in items {
        let v = parse(&s).ok_or_else(|| format!("unknown {what} `{s}`"))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    p: Option<Spanned<i64>>,
    n_reps: Option<Spanned<i64>>,
    true_prior: Option<Spanned<OneOrMany>>,
    methods: Option<Spanned<OneOrMany>>,
    base_seed: Option<Spanned<i64>>,
    workers: Option<Spanned<i64>>,
    i_max: Option<Spanned<i64>>,
    chain: Option<Spanned<RawChain>>,
    #[serde(default)]
    method_chain: BTreeMap<Spanned<String>, Spanned<RawChain>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    scans: Option<usize>,
    burn_in: Option<usize>,
    inner_mh_sweeps: Option<usize>,
    initial_k: Option<usize>,
    adapt_every: Option<usize>,
    window_blocks: Option<usize>,
}

impl RawChain {
    fn merge(&self, base: ChainSettings) -> ChainSettings {
        ChainSettings {
            scans: self.scans.unwrap_or(base.scans),
            burn_in: self.burn_in.unwrap_or(base.burn_in),
            inner_mh_sweeps: self.inner_mh_sweeps.unwrap_or(base.inner_mh_sweeps),
            initial_k: self.initial_k.unwrap_or(base.initial_k),
            adapt_every: self.adapt_every.unwrap_or(base.adapt_every),
            window_blocks: self.window_blocks.unwrap_or(base.window_blocks),
        }
    }
}
