//! Decentralized equilibrium learning for finite-horizon general-sum Markov
//! games with independent linear function approximation.
//!
//! The crate has three layers:
//!
//! - **Ground truth**: tabular games ([`game::MarkovGame`]), mixture policies
//!   ([`policy::StepMixturePolicy`]) and an exact backward-induction oracle
//!   ([`oracle`]) that evaluates policies, best responses, and the CCE gap
//!   (exploitability) of a learned policy.
//! - **Learners**: a local-access learner ([`ftrl::run_lin_confident_ftrl`])
//!   that explores a core set of state-action pairs per step and runs
//!   follow-the-regularized-leader over ridge-regressed Q estimates, and a
//!   random-access variant ([`random_access::run_random_access`]) that selects
//!   core sets upfront and needs no restarts.
//! - **Harness**: seeded experiment execution, game generators, parameter
//!   sweeps and CSV/JSON outputs ([`harness`]), exposed through the `cce`
//!   binary.
//!
//! Learners never touch transition tensors directly; all environment access
//! goes through a [`sim::Simulator`] that enforces one of three access
//! protocols and logs every query.

// Dense tensor math over (h, s, a) indices reads best with plain index loops.
#![allow(clippy::needless_range_loop)]

pub mod coreset;
pub mod features;
pub mod game;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod policy;
pub mod random_access;
pub mod sim;

pub mod ftrl;

#[cfg(doctest)]
pub mod guide;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A game failed structural validation on construction or load.
    #[error("invalid game: {0}")]
    InvalidGame(String),

    /// Mismatched dimensions between two otherwise valid objects.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A simulator query was refused by the active access protocol.
    #[error("protocol violation under {protocol:?}: state {state} is not accessible at step {step}")]
    Protocol {
        protocol: sim::AccessProtocol,
        step: usize,
        state: usize,
    },

    /// Bad configuration (file contents, parameter pairing, unknown names).
    #[error("configuration error: {0}")]
    Config(String),

    /// The local-access learner restarted more often than the core-set bound
    /// allows. This signals a bug in core-set bookkeeping, not bad luck.
    #[error("restart budget exceeded: {restarts} restarts > budget {budget}")]
    RestartBudgetExceeded { restarts: usize, budget: usize },

    /// A parameter that must be strictly positive was not.
    #[error("parameter `{0}` must be strictly positive")]
    NonPositive(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
