//! Simulation study: generate data under a true prior, run every method,
//! persist one record per replication, and summarize the errors at the
//! extreme coordinates.

mod config;
mod experiment;
mod report;

pub use config::{ChainSettings, SimulationConfig};
pub use experiment::{
    generate_dataset, records_path, run_experiment, run_method, run_replication, MethodResult, MethodStatus,
    ReplicationRecord, SideErrors,
};
pub use report::{
    boxplot_export, load_records, mse_table, quantile_sorted, render_table, write_csv, BoxplotRow, BoxplotSummary,
    MseRow,
};

use serde::{Deserialize, Serialize};

use crate::dist::DistSpec;

/// Distribution the true effects are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruePrior {
    /// N(0, 2²).
    Normal,
    /// Student t with 5 degrees of freedom scaled to standard deviation 2.
    T,
    /// N(0, 2²) on [-4, 4] with weight 0.9, the scaled t beyond ±4 with weight 0.1.
    Hybrid,
}

impl TruePrior {
    pub const ALL: [TruePrior; 3] = [TruePrior::Normal, TruePrior::T, TruePrior::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::T => "t",
            Self::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn dist(self) -> DistSpec {
        match self {
            Self::Normal => DistSpec::normal(0.0, 2.0),
            Self::T => DistSpec::scaled_t(5.0, 2.0),
            Self::Hybrid => {
                DistSpec::truncated_hybrid(DistSpec::normal(0.0, 2.0), DistSpec::scaled_t(5.0, 2.0), 4.0, 0.9)
            }
        }
    }
}

/// The seven estimation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Laplace,
    RLaplace,
    Normal,
    RNormal,
    Mixture,
    RMixture,
    Dp,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Laplace,
        Method::RLaplace,
        Method::Normal,
        Method::RNormal,
        Method::Mixture,
        Method::RMixture,
        Method::Dp,
    ];

    /// Stable identifier used for seeding, 1 through 7.
    pub fn id(self) -> u64 {
        Self::ALL.iter().position(|m| *m == self).expect("listed") as u64 + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Laplace => "laplace",
            Self::RLaplace => "r-laplace",
            Self::Normal => "normal",
            Self::RNormal => "r-normal",
            Self::Mixture => "mixture",
            Self::RMixture => "r-mixture",
            Self::Dp => "dp",
        }
    }

    /// Column heading used in printed tables.
    pub fn label(self) -> &'static str {
        match self {
            Self::Laplace => "Laplace",
            Self::RLaplace => "R Laplace",
            Self::Normal => "Normal",
            Self::RNormal => "R Normal",
            Self::Mixture => "Mixture",
            Self::RMixture => "R Mixture",
            Self::Dp => "DP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn is_robustified(self) -> bool {
        matches!(self, Self::RLaplace | Self::RNormal | Self::RMixture)
    }
}

/// Name of the no-shrinkage estimate `θ̂ = y` in tables.
pub const RAW_METHOD: &str = "raw";
