//! Subroutines shared by the protocols: topology discovery, witnessed draws,
//! two-path verification, renaming and election.

pub mod draw;
pub mod election;
pub mod prompt;
pub mod wakeup;

pub use draw::{joint_draw, select, DrawError, Order, Scope, SequentialDraws};
pub use election::{elect_orientation, renaming, LotFlood};
pub use prompt::{relay_path, Prompt};
pub use wakeup::{Learned, LocalInfo, SizeBound, WakeUp};
