//! Volumetric coreset compression and lifelong deep Q-learning for 3D
//! landmark localization.
//!
//! The crate is organized around six subsystems:
//!
//! - [`volume`]: dense 3D scalar fields, bit-exact `.vol` file I/O, synthetic
//!   phantom generation, and boundary-safe patch extraction.
//! - [`coreset`]: the three volume compression operators (neighborhood
//!   averaging, center sampling, maximum-entropy selection).
//! - [`rlenv`]: the landmark-localization environment with six axis-aligned
//!   actions and distance-difference rewards.
//! - [`dqn`]: a small from-scratch 3D conv Q-network, replay memory, and the
//!   one-step TD training rule with Adam.
//! - [`lifelong`]: selective experience replay across sequential training
//!   rounds (ERB construction and batch mixing).
//! - [`eval`]: greedy localization inference, rescaled distance error, the
//!   paired t-test, and the per-epoch timing benchmark.
//!
//! All randomness is driven by explicitly seeded ChaCha streams; every
//! operation is deterministic given its inputs and seed.

pub mod coreset;
pub mod dqn;
pub mod eval;
pub mod lifelong;
pub mod rlenv;
pub mod seed;
pub mod volume;

pub use coreset::{CoresetConfig, CoresetMethod, CoresetResult, EntropyMap};
pub use dqn::{QNetwork, ReplayMemory, TrainHyper};
pub use eval::{TTestResult, TimingReport};
pub use lifelong::{CurriculumConfig, Erb, LifelongReport};
pub use rlenv::{Action, AgentState, EnvSpec, Transition};
pub use volume::{Coord3, Dims3, Modality, PhantomConfig, Volume3D};
