//! Monte-Carlo certification: path simulation, flows of generators, and
//! two-sample tests between transformed and freshly simulated ensembles.

mod flow;
mod ks;
mod sim;
mod verify;

use thiserror::Error;

use crate::ansatz::AnsatzError;
use crate::expr::EvalError;

pub use flow::{flow_apply, FlowMap, FLOW_SUBSTEPS};
pub use ks::{ks_two_sample, KsResult};
pub use sim::{euler_maruyama, euler_maruyama_on_grid, PathEnsemble};
pub use verify::{
    residual_check, verify_map, verify_symmetry, Checkpoint, McSettings, ResidualOptions, ResidualReport, VerifyReport,
    CHECKPOINTS, P_THRESHOLD,
};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum NumericError {
    #[error("invalid simulation settings: {0}")]
    Settings(String),
    #[error("all {0} paths hit a singularity or a non-finite state")]
    AllPathsAborted(usize),
    #[error("time grid is not strictly increasing at index {0}")]
    GridNotIncreasing(usize),
    #[error("flow verification needs a deterministic generator with time coefficient in t only: {0}")]
    UnsupportedField(String),
    #[error("time change loses monotonicity: d(new time)/dt = {value:.3e} at t = {t}")]
    NotMonotone { t: f64, value: f64 },
    #[error("flow integration did not converge: step halving changed the result by {0:.3e}")]
    FlowNotConverged(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ansatz(#[from] AnsatzError),
}
