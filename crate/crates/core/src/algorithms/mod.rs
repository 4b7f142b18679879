//! The local-update framework engine and the five algorithms built on it.

pub mod averaging;
pub mod catalyst;
pub mod framework;
pub mod minibatch;
pub mod runner;
pub mod schedule;

pub use averaging::{weighted_output, AverageAccumulator};
pub use catalyst::{scaffold_catalyst_s, CatalystConfig, InnerSolver, InnerStop, MetaEnd, MetaRecord};
pub use framework::{
    fedavg_s_direction, framework_step, scaffold_s_direction, DirectionRule, RunState, StepOutcome,
};
pub use minibatch::{minibatch_md_round, minibatch_mp_round, MirrorProxStep};
pub use runner::{run_algorithm, AlgorithmConfig, AlgorithmKind, InitialPoint, OutputRule, RunOutput};
pub use schedule::{theorem_stepsize, StepsizeMode, StepsizeSchedule, SyncCoins, SyncSchedule, TheoremStepsize};
