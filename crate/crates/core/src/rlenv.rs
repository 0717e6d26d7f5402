//! The 3D landmark-localization environment: an agent bounding box moves
//! through a volume along six axis-aligned actions and is rewarded by the
//! decrease in Euclidean distance to the target landmark.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::volume::{crop_patch, Coord3, Dims3, Volume3D};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error("volume too small to place an agent away from the target")]
    VolumeTooSmall,
}

/// Immutable description of one localization environment.
#[derive(Debug, Clone)]
pub struct EnvSpec {
    pub volume: Arc<Volume3D>,
    /// Landmark center, voxel units of `volume`.
    pub target: Coord3,
    /// Observation bounding-box extents.
    pub obs_dims: Dims3,
    /// Voxels moved per action.
    pub step_size: i64,
    pub max_steps: u32,
    /// Episode succeeds when the agent is within this distance of the target.
    pub success_radius: f64,
}

impl EnvSpec {
    pub const DEFAULT_STEP_SIZE: i64 = 1;
    pub const DEFAULT_MAX_STEPS: u32 = 200;
    pub const DEFAULT_SUCCESS_RADIUS: f64 = 1.5;

    pub fn new(volume: Volume3D, target: Coord3, obs_dims: Dims3) -> Result<Self, EnvError> {
        let spec = Self {
            volume: Arc::new(volume),
            target,
            obs_dims,
            step_size: Self::DEFAULT_STEP_SIZE,
            max_steps: Self::DEFAULT_MAX_STEPS,
            success_radius: Self::DEFAULT_SUCCESS_RADIUS,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let d = self.volume.dims();
        if !d.contains(self.target.x, self.target.y, self.target.z) {
            return Err(EnvError::InvalidSpec(format!(
                "target {:?} out of bounds {:?}",
                self.target, d
            )));
        }
        if self.obs_dims.count() == 0 {
            return Err(EnvError::InvalidSpec("obs_dims must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(EnvError::InvalidSpec("max_steps must be >= 1".into()));
        }
        if self.step_size < 1 {
            return Err(EnvError::InvalidSpec("step_size must be >= 1".into()));
        }
        if !(self.success_radius >= 0.0) {
            return Err(EnvError::InvalidSpec(
                "success_radius must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Volume center, the deterministic evaluation start.
    pub fn center(&self) -> Coord3 {
        let d = self.volume.dims();
        Coord3::new((d.x / 2) as i64, (d.y / 2) as i64, (d.z / 2) as i64)
    }
}

/// The agent's mutable episode state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentState {
    /// Bounding-box center, always in bounds.
    pub position: Coord3,
    pub steps_taken: u32,
}

/// The six axis-aligned moves, indexed 0..6 in the order below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    XPos,
    XNeg,
    YPos,
    YNeg,
    ZPos,
    ZNeg,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [
        Action::XPos,
        Action::XNeg,
        Action::YPos,
        Action::YNeg,
        Action::ZPos,
        Action::ZNeg,
    ];

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|a| a == self).unwrap()
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }

    /// Unit displacement along the action's axis.
    pub fn delta(&self) -> (i64, i64, i64) {
        match self {
            Action::XPos => (1, 0, 0),
            Action::XNeg => (-1, 0, 0),
            Action::YPos => (0, 1, 0),
            Action::YNeg => (0, -1, 0),
            Action::ZPos => (0, 0, 1),
            Action::ZNeg => (0, 0, -1),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::XPos => "+x",
            Action::XNeg => "-x",
            Action::YPos => "+y",
            Action::YNeg => "-y",
            Action::ZPos => "+z",
            Action::ZNeg => "-z",
        }
    }
}

/// One environment interaction: observation, action, reward, next
/// observation, terminal flag. Observations are shared, not copied, so
/// transitions are cheap to replicate into replay buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Arc<Volume3D>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Arc<Volume3D>,
    pub done: bool,
}

/// Place the agent at a seed-deterministic uniform in-bounds position at
/// least 25% of the largest volume extent away from the target, so episodes
/// start nontrivially far. Falls back to any in-bounds position distinct
/// from the target when the volume is too small for the distance constraint.
pub fn reset(spec: &EnvSpec, seed: u64) -> Result<AgentState, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.volume.dims();
    let min_distance = 0.25 * d.max_axis() as f64;
    let draw = |rng: &mut ChaCha8Rng| {
        Coord3::new(
            rng.random_range(0..d.x as i64),
            rng.random_range(0..d.y as i64),
            rng.random_range(0..d.z as i64),
        )
    };
    for _ in 0..10_000 {
        let position = draw(&mut rng);
        if position.distance(&spec.target) >= min_distance {
            return Ok(AgentState {
                position,
                steps_taken: 0,
            });
        }
    }
    for _ in 0..10_000 {
        let position = draw(&mut rng);
        if position != spec.target {
            return Ok(AgentState {
                position,
                steps_taken: 0,
            });
        }
    }
    Err(EnvError::VolumeTooSmall)
}

/// The agent's view: a patch of `obs_dims` voxels centered on its position,
/// zero-padded outside the volume.
pub fn observe(spec: &EnvSpec, state: &AgentState) -> Volume3D {
    crop_patch(&spec.volume, state.position, spec.obs_dims, 0.0)
        .expect("validated spec implies croppable observation")
}

pub(crate) fn clamp_move(position: Coord3, action: Action, step: i64, dims: Dims3) -> Coord3 {
    let (dx, dy, dz) = action.delta();
    Coord3::new(
        (position.x + dx * step).clamp(0, dims.x as i64 - 1),
        (position.y + dy * step).clamp(0, dims.y as i64 - 1),
        (position.z + dz * step).clamp(0, dims.z as i64 - 1),
    )
}

/// Advance one step: move (clamped at boundaries), reward the distance
/// decrease, and terminate on success or step exhaustion.
pub fn step(spec: &EnvSpec, state: &AgentState, action: Action) -> (AgentState, Transition) {
    let before = state.position;
    let after = clamp_move(before, action, spec.step_size, spec.volume.dims());
    let d_before = before.distance(&spec.target);
    let d_after = after.distance(&spec.target);
    let reward = d_before - d_after;
    let steps_taken = state.steps_taken + 1;
    let done = d_after <= spec.success_radius || steps_taken >= spec.max_steps;
    let next = AgentState {
        position: after,
        steps_taken,
    };
    let transition = Transition {
        state: Arc::new(observe(spec, state)),
        action,
        reward,
        next_state: Arc::new(observe(spec, &next)),
        done,
    };
    (next, transition)
}

/// Run a full episode under `policy`, returning its transition sequence.
/// The sum of rewards telescopes to `d(start, target) - d(final, target)`.
pub fn rollout(
    spec: &EnvSpec,
    mut policy: impl FnMut(&Volume3D) -> Action,
    seed: u64,
) -> Result<Vec<Transition>, EnvError> {
    let mut state = reset(spec, seed)?;
    let mut transitions = Vec::new();
    loop {
        let obs = observe(spec, &state);
        let action = policy(&obs);
        let (next, transition) = step(spec, &state, action);
        let done = transition.done;
        transitions.push(transition);
        state = next;
        if done {
            return Ok(transitions);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_spec(extent: usize, target: Coord3) -> EnvSpec {
        let volume = Volume3D::constant(Dims3::new(extent, extent, extent), 5.0);
        EnvSpec::new(volume, target, Dims3::new(3, 3, 3)).unwrap()
    }

    #[test]
    fn reset_is_seed_deterministic() {
        let spec = constant_spec(16, Coord3::new(8, 8, 8));
        let a = reset(&spec, 42).unwrap();
        let b = reset(&spec, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps_taken, 0);
    }

    #[test]
    fn reset_positions_in_bounds_and_far_from_target() {
        let spec = constant_spec(48, Coord3::new(24, 24, 24));
        let mut min_dist = f64::INFINITY;
        for seed in 0..1000 {
            let s = reset(&spec, seed).unwrap();
            assert!(spec
                .volume
                .dims()
                .contains(s.position.x, s.position.y, s.position.z));
            min_dist = min_dist.min(s.position.distance(&spec.target));
        }
        assert!(min_dist >= 12.0, "min observed distance {min_dist}");
    }

    #[test]
    fn reset_falls_back_on_tiny_volumes() {
        // 2x2x2 cannot satisfy the 25% distance rule from every target, but
        // always has a non-target voxel.
        let spec = constant_spec(2, Coord3::new(0, 0, 0));
        let s = reset(&spec, 3).unwrap();
        assert_ne!(s.position, spec.target);
    }

    #[test]
    fn spec_validation_rejects_bad_inputs() {
        let volume = Volume3D::constant(Dims3::new(4, 4, 4), 0.0);
        assert!(EnvSpec::new(volume.clone(), Coord3::new(4, 0, 0), Dims3::new(3, 3, 3)).is_err());
        let mut spec = EnvSpec::new(volume, Coord3::new(1, 1, 1), Dims3::new(3, 3, 3)).unwrap();
        spec.max_steps = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn observe_returns_constant_patch_inside() {
        let spec = constant_spec(9, Coord3::new(1, 1, 1));
        let s = AgentState {
            position: Coord3::new(4, 4, 4),
            steps_taken: 0,
        };
        assert_eq!(observe(&spec, &s), Volume3D::constant(Dims3::new(3, 3, 3), 5.0));
    }

    #[test]
    fn observe_pads_with_zero_at_corner() {
        let spec = constant_spec(9, Coord3::new(5, 5, 5));
        let s = AgentState {
            position: Coord3::new(0, 0, 0),
            steps_taken: 0,
        };
        let patch = observe(&spec, &s);
        assert_eq!(patch.data().iter().filter(|&&v| v == 0.0).count(), 19);
    }

    #[test]
    fn observe_is_pure() {
        let spec = constant_spec(9, Coord3::new(5, 5, 5));
        let s = AgentState {
            position: Coord3::new(2, 3, 4),
            steps_taken: 7,
        };
        assert_eq!(observe(&spec, &s), observe(&spec, &s));
    }

    #[test]
    fn step_rewards_distance_difference() {
        let spec = constant_spec(32, Coord3::new(20, 10, 10));
        let s = AgentState {
            position: Coord3::new(10, 10, 10),
            steps_taken: 0,
        };
        let (_, t) = step(&spec, &s, Action::XPos);
        assert!((t.reward - 1.0).abs() < 1e-12);
        let (_, t) = step(&spec, &s, Action::XNeg);
        assert!((t.reward + 1.0).abs() < 1e-12);
    }

    #[test]
    fn clamped_step_has_zero_reward() {
        let spec = constant_spec(32, Coord3::new(20, 10, 10));
        let s = AgentState {
            position: Coord3::new(0, 10, 10),
            steps_taken: 0,
        };
        let (next, t) = step(&spec, &s, Action::XNeg);
        assert_eq!(next.position, s.position);
        assert_eq!(t.reward, 0.0);
    }

    #[test]
    fn step_is_pure_and_done_triggers() {
        let mut spec = constant_spec(16, Coord3::new(8, 8, 8));
        spec.success_radius = 1.5;
        let s = AgentState {
            position: Coord3::new(6, 8, 8),
            steps_taken: 0,
        };
        let (a1, t1) = step(&spec, &s, Action::XPos);
        let (a2, t2) = step(&spec, &s, Action::XPos);
        assert_eq!(a1, a2);
        assert_eq!(t1, t2);
        // Distance after the move is 1 <= 1.5: success.
        assert!(t1.done);

        spec.max_steps = 1;
        let far = AgentState {
            position: Coord3::new(0, 0, 0),
            steps_taken: 0,
        };
        let (_, t) = step(&spec, &far, Action::XPos);
        assert!(t.done, "step budget exhaustion terminates");
    }

    #[test]
    fn rollout_rewards_telescope() {
        let spec = constant_spec(24, Coord3::new(12, 12, 12));
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
            let transitions = rollout(
                &spec,
                |_| Action::from_index(rng.random_range(0..Action::COUNT)).unwrap(),
                seed,
            )
            .unwrap();
            let start = reset(&spec, seed).unwrap().position;
            // Replay the actions to find the final position.
            let mut pos = start;
            for t in &transitions {
                pos = clamp_move(pos, t.action, spec.step_size, spec.volume.dims());
            }
            let total: f64 = transitions.iter().map(|t| t.reward).sum();
            let expected = start.distance(&spec.target) - pos.distance(&spec.target);
            assert!((total - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn greedy_oracle_policy_reaches_target() {
        let spec = constant_spec(24, Coord3::new(17, 5, 12));
        let seed = 9;
        let start = reset(&spec, seed).unwrap().position;
        // The oracle mirrors the environment's movement rule and always
        // takes the action with the largest distance decrease.
        let mut pos = start;
        let transitions = rollout(
            &spec,
            |_| {
                let best = Action::ALL
                    .iter()
                    .copied()
                    .max_by(|a, b| {
                        let da = clamp_move(pos, *a, 1, spec.volume.dims()).distance(&spec.target);
                        let db = clamp_move(pos, *b, 1, spec.volume.dims()).distance(&spec.target);
                        db.partial_cmp(&da).unwrap()
                    })
                    .unwrap();
                pos = clamp_move(pos, best, 1, spec.volume.dims());
                best
            },
            seed,
        )
        .unwrap();
        let final_t = transitions.last().unwrap();
        assert!(final_t.done);
        let l1 = (start.x - spec.target.x).abs()
            + (start.y - spec.target.y).abs()
            + (start.z - spec.target.z).abs();
        assert!(transitions.len() as i64 <= l1);
        let total: f64 = transitions.iter().map(|t| t.reward).sum();
        let final_distance = start.distance(&spec.target) - total;
        assert!(final_distance <= spec.success_radius);
    }

    #[test]
    fn constant_policy_near_boundary_exhausts_steps() {
        let mut spec = constant_spec(12, Coord3::new(2, 2, 2));
        spec.max_steps = 30;
        let transitions = rollout(&spec, |_| Action::XPos, 4).unwrap();
        assert_eq!(transitions.len() as u32, spec.max_steps);
        // Once pinned at the +x face the distance stops changing.
        assert_eq!(transitions.last().unwrap().reward, 0.0);
    }

    #[test]
    fn per_step_reward_bounded_by_step_size() {
        let spec = constant_spec(16, Coord3::new(3, 9, 12));
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let transitions = rollout(
                &spec,
                |_| Action::from_index(rng.random_range(0..Action::COUNT)).unwrap(),
                seed,
            )
            .unwrap();
            for t in &transitions {
                assert!(t.reward.abs() <= spec.step_size as f64 + 1e-12);
                assert_eq!(t.state.dims(), spec.obs_dims);
                assert_eq!(t.next_state.dims(), spec.obs_dims);
            }
        }
    }
}
