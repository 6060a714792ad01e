//! Notional policy: gridded finite-horizon value iteration with multilinear
//! interpolation of off-grid successor states.

mod grid;
mod io;
mod model;
mod table;

pub use grid::{locate, symmetric_cuts, uniform_cuts, GridSpec};
pub use io::{load_table, read_table, save_table, write_table, MAGIC};
pub use model::{reward, step_dynamics, IntruderOutcome, ResponseModel, RewardWeights};
pub use table::{
    bellman_residual, best_advisory, export_policy_slice, masked_argmax, node_advisory, q_at,
    slice_csv, solve, QTable, SliceCell, SliceSpec,
};
pub(crate) use table::slice_with;
