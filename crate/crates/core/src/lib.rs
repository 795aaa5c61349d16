//! Cavity-method machinery for adversarial K-SAT.
//!
//! The adversary picks the negation attribute `J` of every variable/clause
//! edge; the solver then looks for a satisfying assignment. This crate
//! provides:
//!
//! * [`formula`]: random regular / Poisson K-SAT factor graphs, negation
//!   patterns, DIMACS and JSON instance files.
//! * [`bp`] and [`sp`]: belief and survey propagation on a fixed instance,
//!   the Bethe entropy and the complexity, and the factorized solutions on
//!   regular graphs.
//! * [`ldev`]: large deviations of the entropy (or complexity) over
//!   negation-configurations, solved by reweighted population dynamics, and
//!   the Legendre transform to `L(s)`.
//! * [`exact`]: exact model counting and empirical large-deviation histograms.
//! * [`adversary`]: simulated annealing over negations.

pub mod adversary;
pub mod bp;
pub mod exact;
pub mod formula;
pub mod ldev;
pub mod rng;
pub mod sp;

pub use adversary::{anneal, ps_experiment, AcceptanceRule, AnnealConfig, AnnealResult, PsReport};
pub use bp::{BpConfig, BpMessage, BpState};
pub use exact::{count_models, CountLimits, LdfHistogram, ModelCount};
pub use formula::{FactorGraph, Instance, NegationMode, Negations};
pub use ldev::{Base, Ensemble, LdfCurve, LdfPoint, PopDynConfig};
pub use sp::{SpClauseMessage, SpConfig, SpState, SpVarMessage};

/// Outcome of an iterative message-passing run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    NotConverged,
    /// Some update produced a zero normalizer.
    Contradiction,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::NotConverged => "not_converged",
            Status::Contradiction => "contradiction",
        })
    }
}
