//! Single-item auctions for bidders with a common public budget.
//!
//! The crate covers the toolchain needed to study welfare and revenue of
//! budget-feasible mechanisms at desk scale:
//!
//! - value distributions with piecewise-constant densities and discrete atoms ([`dist`])
//! - interim allocation rules as exactly integrable piecewise functions,
//!   payment identities, ironing, and feasibility checks ([`interim`])
//! - ex post simulators: all-pay, price-clock clinching, and the
//!   middle-ironed clinching auction ([`mechanisms`])
//! - a dense two-phase simplex solver, also usable over exact rationals ([`lp`])
//! - the discrete welfare LP with its hand-built optimal dual certificate ([`dsic`])
//! - the price-jump reallocation step as a small LP ([`price_jump`])
//! - Lagrangian payoff curves and first-price ironing ([`wpb`])
//! - welfare/revenue evaluation, closed form and Monte Carlo ([`eval`])
//!
//! Every approximation-ratio experiment exposed by the `bal` binary is also
//! available as a library call; see the `examples/` directory for one runnable
//! program per capability.

pub mod cli;
pub mod dist;
pub mod dsic;
pub mod eval;
pub mod interim;
pub mod lp;
pub mod mechanisms;
pub mod price_jump;
pub mod wpb;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("budget {budget} cannot be met: minimum attainable top payment is {needed}")]
    InfeasibleBudget { budget: f64, needed: f64 },
    #[error("no valid threshold pair exists for h={h}, budget={budget}")]
    NoThreshold { h: u32, budget: f64 },
    #[error("linear program is infeasible")]
    LpInfeasible,
    #[error("linear program is unbounded")]
    LpUnbounded,
    #[error("certificate check failed: {0}")]
    Certificate(String),
    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),
    #[error("bad configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
