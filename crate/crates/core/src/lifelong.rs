//! Selective experience replay across sequential training rounds: after each
//! round a sampled Experience Replay Buffer (ERB) is frozen from the round's
//! transitions, and later rounds append ERB samples to every training batch
//! so earlier environments are rehearsed while new ones are learned.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coreset::{compress, CoresetConfig, CoresetError};
use crate::dqn::{
    epsilon_at, init_network, q_forward, td_train_step, Adam, DqnError, QNetwork, ReplayMemory,
    TrainHyper,
};
use crate::eval::{distance_error, localize, EvalError, EvalStart, StoppingRule};
use crate::rlenv::{observe, reset, step, EnvError, EnvSpec, Transition};
use crate::seed;
use crate::volume::{make_phantom, Coord3, Dims3, Modality, PhantomConfig, VolumeError};

#[derive(Debug, Error)]
pub enum LifelongError {
    #[error("cannot build an ERB from an empty transition set")]
    EmptyTransitions,
    #[error("ERB fraction must be in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("invalid curriculum config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Coreset(#[from] CoresetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Dqn(#[from] DqnError),
    #[error(transparent)]
    Eval(#[from] Box<EvalError>),
}

impl From<EvalError> for LifelongError {
    fn from(e: EvalError) -> Self {
        LifelongError::Eval(Box::new(e))
    }
}

/// How ERB transitions are chosen from a round's recordings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Uniform sample without replacement.
    Uniform,
    /// Positive-, zero-, and negative-reward strata sampled proportionally,
    /// at least one transition per nonempty stratum.
    RewardStratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErbSelection {
    pub fraction: f64,
    pub policy: SelectionPolicy,
    pub seed: u64,
}

/// A frozen replay buffer sampled from one source round.
#[derive(Debug, Clone)]
pub struct Erb {
    pub source_round: usize,
    transitions: Vec<Transition>,
    pub selection: ErbSelection,
}

impl Erb {
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

fn sample_indices(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }
    let mut picked = indices[..k.min(n)].to_vec();
    picked.sort_unstable();
    picked
}

/// Sample a round's recorded transitions into an ERB. Uniform selection
/// takes exactly `round(fraction * n)` transitions; reward-stratified
/// selection allocates that budget proportionally across reward signs with
/// at least one transition per nonempty stratum.
pub fn build_erb(
    transitions: &[Transition],
    fraction: f64,
    policy: SelectionPolicy,
    seed: u64,
    source_round: usize,
) -> Result<Erb, LifelongError> {
    if transitions.is_empty() {
        return Err(LifelongError::EmptyTransitions);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(LifelongError::BadFraction(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = match policy {
        SelectionPolicy::Uniform => {
            let k = (fraction * transitions.len() as f64).round() as usize;
            sample_indices(transitions.len(), k, &mut rng)
        }
        SelectionPolicy::RewardStratified => {
            let mut strata: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
            for (i, t) in transitions.iter().enumerate() {
                let s = if t.reward > 0.0 {
                    0
                } else if t.reward < 0.0 {
                    2
                } else {
                    1
                };
                strata[s].push(i);
            }
            let mut picked = Vec::new();
            for stratum in &strata {
                if stratum.is_empty() {
                    continue;
                }
                let k = ((fraction * stratum.len() as f64).round() as usize).max(1);
                for local in sample_indices(stratum.len(), k, &mut rng) {
                    picked.push(stratum[local]);
                }
            }
            picked.sort_unstable();
            picked
        }
    };
    Ok(Erb {
        source_round,
        transitions: picked.iter().map(|&i| transitions[i].clone()).collect(),
        selection: ErbSelection {
            fraction,
            policy,
            seed,
        },
    })
}

/// One curriculum round: which contrast it trains on and for how long.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundSpec {
    pub modality: Modality,
    pub epochs: u32,
    pub episodes_per_epoch: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub rounds: Vec<RoundSpec>,
    /// Fraction of the batch size appended to each training batch from
    /// prior-round ERBs (so a mixed batch holds `batch_size` fresh plus
    /// `ceil(replay_mix * batch_size)` replayed transitions).
    pub replay_mix: f64,
    pub erb_fraction: f64,
    pub erb_policy: SelectionPolicy,
    pub hyper: TrainHyper,
    pub train_volumes_per_round: u32,
    pub test_volumes_per_modality: u32,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            rounds: vec![
                RoundSpec {
                    modality: Modality::A,
                    epochs: 4,
                    episodes_per_epoch: 50,
                },
                RoundSpec {
                    modality: Modality::B,
                    epochs: 4,
                    episodes_per_epoch: 50,
                },
            ],
            replay_mix: 0.5,
            erb_fraction: 0.1,
            erb_policy: SelectionPolicy::Uniform,
            hyper: TrainHyper::default(),
            train_volumes_per_round: 1,
            test_volumes_per_modality: 3,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), LifelongError> {
        let bad = |msg: String| Err(LifelongError::InvalidConfig(msg));
        if self.rounds.is_empty() {
            return bad("rounds must not be empty".into());
        }
        for (i, r) in self.rounds.iter().enumerate() {
            if r.epochs == 0 || r.episodes_per_epoch == 0 {
                return bad(format!("round {i}: epochs and episodes_per_epoch must be >= 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.replay_mix) {
            return bad(format!("replay_mix must be in [0, 1], got {}", self.replay_mix));
        }
        if !(self.erb_fraction > 0.0 && self.erb_fraction <= 1.0) {
            return bad(format!(
                "erb_fraction must be in (0, 1], got {}",
                self.erb_fraction
            ));
        }
        if self.train_volumes_per_round == 0 || self.test_volumes_per_modality == 0 {
            return bad("volume counts must be >= 1".into());
        }
        self.hyper.validate()?;
        Ok(())
    }
}

/// Environment parameters shared by every task volume.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub obs_dims: Dims3,
    pub step_size: i64,
    pub max_steps: u32,
    pub success_radius: f64,
    pub eval_start: EvalStart,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            obs_dims: Dims3::new(15, 15, 9),
            step_size: EnvSpec::DEFAULT_STEP_SIZE,
            max_steps: EnvSpec::DEFAULT_MAX_STEPS,
            success_radius: EnvSpec::DEFAULT_SUCCESS_RADIUS,
            eval_start: EvalStart::Center,
        }
    }
}

/// One landmark-localization task: the phantom family an agent learns.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub dims: Dims3,
    pub landmark_center: Coord3,
    pub landmark_radii: [f64; 3],
    pub noise_sigma: f64,
}

// Stream tags for seed derivation.
const STREAM_BACKGROUND: u64 = 1;
const STREAM_VOLUME: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_ROUND: u64 = 4;
const STREAM_ERB: u64 = 5;
const STREAM_ACTIONS: u64 = 6;
const STREAM_BATCH: u64 = 7;
const STREAM_RESET: u64 = 8;
const STREAM_EVAL: u64 = 9;

const PURPOSE_TRAIN: u64 = 0;
const PURPOSE_TEST: u64 = 1;

fn modality_tag(m: Modality) -> u64 {
    match m {
        Modality::A => 0,
        Modality::B => 1,
    }
}

/// An environment plus the original-scale ground truth needed to score it.
#[derive(Debug, Clone)]
pub struct TaskCase {
    pub spec: EnvSpec,
    pub truth_original: Coord3,
    pub scale: usize,
    pub modality: Modality,
    pub case_id: usize,
}

fn build_case(
    task: &TaskSpec,
    task_idx: usize,
    modality: Modality,
    purpose: u64,
    index: usize,
    master_seed: u64,
    env: &EnvConfig,
    coreset: Option<&CoresetConfig>,
) -> Result<TaskCase, LifelongError> {
    let cfg = PhantomConfig {
        dims: task.dims,
        modality,
        landmark_center: task.landmark_center,
        landmark_radii: task.landmark_radii,
        noise_sigma: task.noise_sigma,
        seed: seed::derive(
            master_seed,
            &[
                task_idx as u64,
                STREAM_VOLUME,
                modality_tag(modality),
                purpose,
                index as u64,
            ],
        ),
        background_seed: Some(seed::derive(
            master_seed,
            &[task_idx as u64, STREAM_BACKGROUND],
        )),
    };
    let (volume, landmark) = make_phantom(&cfg)?;
    let (volume, target, scale) = match coreset {
        Some(cs) => {
            let result = compress(&volume, cs, Some(landmark))?;
            let target = result.landmark_scaled.expect("landmark was supplied");
            (result.volume, target, cs.n_ratio)
        }
        None => (volume, landmark, 1),
    };
    let mut spec = EnvSpec::new(volume, target, env.obs_dims)?;
    spec.step_size = env.step_size;
    spec.max_steps = env.max_steps;
    spec.success_radius = env.success_radius;
    spec.validate()?;
    Ok(TaskCase {
        spec,
        truth_original: landmark,
        scale,
        modality,
        case_id: index,
    })
}

/// The held-out evaluation cases of one task: `test_volumes_per_modality`
/// fresh-noise volumes of each contrast, in the fixed (modality, index)
/// order every curriculum run and external evaluation shares.
pub fn task_test_cases(
    task: &TaskSpec,
    task_idx: usize,
    test_volumes_per_modality: u32,
    env_cfg: &EnvConfig,
    coreset: Option<&CoresetConfig>,
    master_seed: u64,
) -> Result<Vec<TaskCase>, LifelongError> {
    let mut cases = Vec::new();
    for modality in [Modality::A, Modality::B] {
        for i in 0..test_volumes_per_modality {
            cases.push(build_case(
                task,
                task_idx,
                modality,
                PURPOSE_TEST,
                i as usize,
                master_seed,
                env_cfg,
                coreset,
            )?);
        }
    }
    Ok(cases)
}

/// Per-round training statistics (wall-clock in seconds, batch composition
/// counts for the mixing contract).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub env_steps: u64,
    pub grad_steps: u64,
    pub mean_loss: f64,
    /// ERB transitions per mixed batch; equal when any batch was mixed.
    pub erb_per_batch_min: usize,
    pub erb_per_batch_max: usize,
    pub epoch_wall_secs: Vec<f64>,
}

/// A trained round's outputs: the recorded fresh transitions (ERB source)
/// and its report.
#[derive(Debug)]
pub struct RoundOutcome {
    pub recorded: Vec<Transition>,
    pub report: RoundReport,
}

/// Train one round over `envs`, mixing prior-round ERB samples into every
/// gradient batch when any exist.
///
/// Every training batch holds `hyper.batch_size` fresh transitions plus
/// `ceil(replay_mix * batch_size)` ERB transitions (zero in round one), so
/// replayed experience adds gradient work on top of the fresh batch.
pub fn train_round(
    net: &mut QNetwork,
    envs: &[EnvSpec],
    prior_erbs: &[Erb],
    cfg: &CurriculumConfig,
    round_idx: usize,
    round_seed: u64,
) -> Result<RoundOutcome, LifelongError> {
    cfg.validate()?;
    if envs.is_empty() {
        return Err(LifelongError::InvalidConfig(
            "train_round needs at least one environment".into(),
        ));
    }
    for env in envs {
        if env.obs_dims != net.obs_dims() {
            return Err(DqnError::DimsMismatch {
                expected: net.obs_dims(),
                got: env.obs_dims,
            }
            .into());
        }
    }
    let round = &cfg.rounds[round_idx.min(cfg.rounds.len() - 1)];
    let hyper = &cfg.hyper;
    let erb_pool: Vec<Transition> = prior_erbs
        .iter()
        .flat_map(|e| e.transitions().iter().cloned())
        .collect();
    let erb_per_batch = if erb_pool.is_empty() {
        0
    } else {
        (cfg.replay_mix * hyper.batch_size as f64).ceil() as usize
    };

    let mut memory = ReplayMemory::new(hyper.replay_capacity);
    let mut target = net.clone();
    let mut opt = Adam::new(net.param_count());
    let mut action_rng =
        ChaCha8Rng::seed_from_u64(seed::derive(round_seed, &[STREAM_ACTIONS, round_idx as u64]));
    let mut batch_rng =
        ChaCha8Rng::seed_from_u64(seed::derive(round_seed, &[STREAM_BATCH, round_idx as u64]));

    let mut recorded = Vec::new();
    let mut env_steps = 0u64;
    let mut grad_steps = 0u64;
    let mut loss_sum = 0.0;
    let mut erb_min = usize::MAX;
    let mut erb_max = 0usize;
    let mut epoch_wall_secs = Vec::with_capacity(round.epochs as usize);

    for epoch in 0..round.epochs {
        let epoch_start = Instant::now();
        for episode in 0..round.episodes_per_epoch {
            let env = &envs[episode as usize % envs.len()];
            let mut state = reset(
                env,
                seed::derive(
                    round_seed,
                    &[STREAM_RESET, round_idx as u64, epoch as u64, episode as u64],
                ),
            )?;
            loop {
                let epsilon = epsilon_at(hyper, env_steps);
                let explore = epsilon > 0.0 && action_rng.random::<f64>() < epsilon;
                let action = if explore {
                    crate::rlenv::Action::from_index(
                        action_rng.random_range(0..crate::rlenv::Action::COUNT),
                    )
                    .unwrap()
                } else {
                    let obs = observe(env, &state);
                    crate::dqn::greedy_action(&q_forward(net, &obs)?)
                };
                let (next, transition) = step(env, &state, action);
                let done = transition.done;
                memory.push(transition.clone());
                recorded.push(transition);
                env_steps += 1;

                if env_steps % hyper.train_every == 0 && memory.len() >= hyper.batch_size {
                    let mut batch = memory
                        .sample(hyper.batch_size, &mut batch_rng)
                        .expect("memory holds at least batch_size transitions");
                    if erb_per_batch > 0 {
                        sample_from_pool(&erb_pool, erb_per_batch, &mut batch_rng, &mut batch);
                        erb_min = erb_min.min(erb_per_batch);
                        erb_max = erb_max.max(erb_per_batch);
                    } else {
                        erb_min = 0;
                    }
                    let loss = td_train_step(net, &target, &batch, hyper, &mut opt)?;
                    loss_sum += loss;
                    grad_steps += 1;
                    if grad_steps % hyper.target_sync_every == 0 {
                        target = net.clone();
                    }
                }

                state = next;
                if done {
                    break;
                }
            }
        }
        epoch_wall_secs.push(epoch_start.elapsed().as_secs_f64());
    }

    Ok(RoundOutcome {
        recorded,
        report: RoundReport {
            round: round_idx,
            env_steps,
            grad_steps,
            mean_loss: if grad_steps > 0 {
                loss_sum / grad_steps as f64
            } else {
                0.0
            },
            erb_per_batch_min: if erb_min == usize::MAX { 0 } else { erb_min },
            erb_per_batch_max: erb_max,
            epoch_wall_secs,
        },
    })
}

/// Uniform draw of `count` transitions from the pool into `out`, without
/// replacement when the pool is large enough.
fn sample_from_pool(
    pool: &[Transition],
    count: usize,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Transition>,
) {
    if count <= pool.len() {
        for idx in sample_indices(pool.len(), count, rng) {
            out.push(pool[idx].clone());
        }
    } else {
        for _ in 0..count {
            out.push(pool[rng.random_range(0..pool.len())].clone());
        }
    }
}

/// One evaluated test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub round: usize,
    pub environment: String,
    pub task: String,
    pub case_id: usize,
    /// Original-scale Euclidean distance error, voxels.
    pub error: f64,
}

/// Mean/stddev of the per-case errors for one (round, task, environment).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub round: usize,
    pub task: String,
    pub environment: String,
    pub mean_error: f64,
    pub stddev_error: f64,
    pub cases: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LifelongReport {
    pub seed: u64,
    pub config: serde_json::Value,
    pub cases: Vec<CaseResult>,
    pub summaries: Vec<SummaryRow>,
    pub rounds: Vec<RoundReport>,
}

impl LifelongReport {
    /// Flat CSV of the per-case rows; excludes wall-clock fields so repeated
    /// seeded runs are byte-identical.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("round,environment,task,case_id,error\n");
        for c in &self.cases {
            out.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                c.round, c.environment, c.task, c.case_id, c.error
            ));
        }
        out
    }

    /// Per-case errors of one task and environment at a given round, in
    /// case order, for paired comparisons across configurations.
    pub fn case_errors(&self, round: usize, task: &str, environment: &str) -> Vec<f64> {
        self.cases
            .iter()
            .filter(|c| c.round == round && c.task == task && c.environment == environment)
            .map(|c| c.error)
            .collect()
    }
}

fn summarize(cases: &[CaseResult]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    for c in cases {
        if let Some(row) = rows.iter_mut().find(|r| {
            r.round == c.round && r.task == c.task && r.environment == c.environment
        }) {
            row.cases += 1;
            row.mean_error += c.error;
        } else {
            rows.push(SummaryRow {
                round: c.round,
                task: c.task.clone(),
                environment: c.environment.clone(),
                mean_error: c.error,
                stddev_error: 0.0,
                cases: 1,
            });
        }
    }
    for row in &mut rows {
        row.mean_error /= row.cases as f64;
    }
    for row in &mut rows {
        let errs: Vec<f64> = cases
            .iter()
            .filter(|c| {
                c.round == row.round && c.task == row.task && c.environment == row.environment
            })
            .map(|c| c.error)
            .collect();
        if errs.len() > 1 {
            let var = errs
                .iter()
                .map(|e| (e - row.mean_error).powi(2))
                .sum::<f64>()
                / (errs.len() - 1) as f64;
            row.stddev_error = var.sqrt();
        }
    }
    rows
}

/// A trained per-task agent, named for checkpointing.
#[derive(Debug)]
pub struct TaskAgent {
    pub task: String,
    pub net: QNetwork,
}

/// Everything a curriculum run produces: the evaluation report plus the
/// final per-task agents.
#[derive(Debug)]
pub struct CurriculumOutcome {
    pub report: LifelongReport,
    pub agents: Vec<TaskAgent>,
}

/// Execute the full curriculum: per task, train the rounds in order
/// (later rounds replaying earlier rounds' ERBs), evaluating after each
/// round on held-out test volumes of both modalities.
///
/// With a coreset config, every train and test volume is compressed first;
/// localization errors are always reported at the original scale.
pub fn run_curriculum(
    cfg: &CurriculumConfig,
    tasks: &[TaskSpec],
    env_cfg: &EnvConfig,
    coreset: Option<&CoresetConfig>,
    master_seed: u64,
) -> Result<CurriculumOutcome, LifelongError> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(LifelongError::InvalidConfig("no tasks given".into()));
    }
    let mut cases_out = Vec::new();
    let mut round_reports = Vec::new();
    let mut agents = Vec::new();

    for (task_idx, task) in tasks.iter().enumerate() {
        let mut net = init_network(
            env_cfg.obs_dims,
            seed::derive(master_seed, &[task_idx as u64, STREAM_INIT]),
        )?;

        // Held-out test volumes: same anatomy, fresh noise, both contrasts.
        let test_cases = task_test_cases(
            task,
            task_idx,
            cfg.test_volumes_per_modality,
            env_cfg,
            coreset,
            master_seed,
        )?;

        let mut erbs: Vec<Erb> = Vec::new();
        for (round_idx, round) in cfg.rounds.iter().enumerate() {
            let envs: Vec<EnvSpec> = (0..cfg.train_volumes_per_round)
                .map(|i| {
                    build_case(
                        task,
                        task_idx,
                        round.modality,
                        PURPOSE_TRAIN,
                        i as usize,
                        master_seed,
                        env_cfg,
                        coreset,
                    )
                    .map(|c| c.spec)
                })
                .collect::<Result<_, _>>()?;

            let outcome = train_round(
                &mut net,
                &envs,
                &erbs,
                cfg,
                round_idx,
                seed::derive(master_seed, &[task_idx as u64, STREAM_ROUND, round_idx as u64]),
            )?;
            round_reports.push(outcome.report);

            for case in &test_cases {
                let error = evaluate_case(
                    &net,
                    case,
                    env_cfg.eval_start,
                    seed::derive(
                        master_seed,
                        &[task_idx as u64, STREAM_EVAL, round_idx as u64, case.case_id as u64],
                    ),
                )?;
                cases_out.push(CaseResult {
                    round: round_idx,
                    environment: match case.modality {
                        Modality::A => "A".into(),
                        Modality::B => "B".into(),
                    },
                    task: task.name.clone(),
                    case_id: case.case_id,
                    error,
                });
            }

            let erb = build_erb(
                &outcome.recorded,
                cfg.erb_fraction,
                cfg.erb_policy,
                seed::derive(master_seed, &[task_idx as u64, STREAM_ERB, round_idx as u64]),
                round_idx,
            )?;
            erbs.push(erb);
        }
        agents.push(TaskAgent {
            task: task.name.clone(),
            net,
        });
    }

    let summaries = summarize(&cases_out);
    let config = serde_json::json!({
        "curriculum": cfg,
        "env": env_cfg,
        "coreset": coreset,
        "tasks": tasks,
    });
    Ok(CurriculumOutcome {
        report: LifelongReport {
            seed: master_seed,
            config,
            cases: cases_out,
            summaries,
            rounds: round_reports,
        },
        agents,
    })
}

/// Localize on one test case with any value policy and return the
/// original-scale error.
pub fn evaluate_case(
    policy: &impl crate::eval::ValuePolicy,
    case: &TaskCase,
    start: EvalStart,
    eval_seed: u64,
) -> Result<f64, LifelongError> {
    let stopping = StoppingRule::for_spec(&case.spec);
    match start {
        EvalStart::Center => {
            let pred = localize(policy, &case.spec, case.spec.center(), &stopping)?;
            Ok(distance_error(pred, case.truth_original, case.scale))
        }
        EvalStart::Random { starts } => {
            let mut total = 0.0;
            for i in 0..starts.max(1) {
                let state = reset(&case.spec, seed::derive(eval_seed, &[i as u64]))?;
                let pred = localize(policy, &case.spec, state.position, &stopping)?;
                total += distance_error(pred, case.truth_original, case.scale);
            }
            Ok(total / starts.max(1) as f64)
        }
    }
}
