//! Downlink NOMA simulator for multi-waveguide pinching-antenna systems.
//!
//! Users are placed at random in a rectangle under `K` dielectric waveguides,
//! each carrying `M` pre-configured antenna sites. A coalition-formation game
//! assigns users to waveguides and switches antennas on and off, after which
//! each waveguide's NOMA power split is optimised either globally (polyblock
//! outer approximation) or quickly (successive convex approximation).

pub mod barrier;
pub mod baselines;
pub mod channel;
pub mod coalition;
pub mod harness;
pub mod power;
pub mod power_mo;
pub mod power_sca;
pub mod rates;
pub mod scenario;
pub mod validate;

pub use baselines::{run_scheme, SchemeId, SchemeSettings};
pub use channel::{ActivationMask, ChannelMatrix, ChannelModel};
pub use coalition::{Game, GameState, PaPolicy, PaSolver};
pub use harness::{aggregate, run_experiment, write_csv, ExperimentPlan, SweepAxis, TrialRecord};
pub use power::{PaSolution, PowerError, WaveguideProblem};
pub use rates::{AssignmentState, DecodingPlan, PowerAllocation, RateReport};
pub use scenario::{build_derived, sample_drop, DerivedConstants, ScenarioConfig, UserDrop};
