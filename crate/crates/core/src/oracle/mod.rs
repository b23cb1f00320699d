//! Brute-force checks on instances small enough to enumerate.

pub mod fixtures;
pub mod grid;
pub mod induced;
pub mod mdp;
pub mod mechanism;
pub mod pufferfish;
pub mod tail;
pub mod trend;

pub use grid::{enumerate_states, DEFAULT_STATE_CAP};
pub use induced::{check_simulation_lemma, induced_transition, trajectory_estimate, InducedModel};
pub use mdp::{policy_evaluation, value_iteration, FiniteMdp};
pub use mechanism::{estimate_mechanism_matrix, MechanismMatrix};
pub use pufferfish::{correlation_attack_demo, pufferfish_audit, PufferfishScenario};
pub use tail::tail_bound_check;
pub use trend::theorem2_trend;
