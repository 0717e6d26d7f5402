//! One-step TD training: Huber loss on `Q(s, a)` against
//! `r + gamma * max_a' Q_target(s', a')` (zeroed at terminal `s'`), Adam
//! updates, epsilon-greedy selection, and a central-finite-difference
//! gradient checker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{q_forward, QNetwork};
use super::DqnError;
use crate::rlenv::{Action, Transition};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyper {
    /// Discount factor.
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Linear epsilon schedule over environment steps.
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    /// Gradient steps between target-network syncs.
    pub target_sync_every: u64,
    /// Environment steps per gradient step.
    pub train_every: u64,
    pub replay_capacity: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            lr: 1e-4,
            batch_size: 48,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 10_000,
            target_sync_every: 500,
            train_every: 2,
            replay_capacity: 20_000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<(), DqnError> {
        let bad = |msg: String| Err(DqnError::InvalidHyper(msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        for (name, eps) in [("eps_start", self.eps_start), ("eps_end", self.eps_end)] {
            if !(0.0..=1.0).contains(&eps) {
                return bad(format!("{name} must be in [0, 1], got {eps}"));
            }
        }
        if self.eps_decay_steps == 0 || self.target_sync_every == 0 || self.train_every == 0 {
            return bad("eps_decay_steps, target_sync_every and train_every must be >= 1".into());
        }
        if self.replay_capacity == 0 {
            return bad("replay_capacity must be >= 1".into());
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return bad(format!("{name} must be in [0, 1), got {beta}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        Ok(())
    }
}

/// Epsilon after `env_step` environment steps: linear from `eps_start` to
/// `eps_end` over `eps_decay_steps`, flat afterwards.
pub fn epsilon_at(hyper: &TrainHyper, env_step: u64) -> f64 {
    if env_step >= hyper.eps_decay_steps {
        return hyper.eps_end;
    }
    let frac = env_step as f64 / hyper.eps_decay_steps as f64;
    hyper.eps_start + (hyper.eps_end - hyper.eps_start) * frac
}

/// Argmax over action values with smallest-index tie-break.
pub fn greedy_action(q: &[f64; Action::COUNT]) -> Action {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    Action::from_index(best).unwrap()
}

/// Epsilon-greedy: uniform with probability `epsilon`, otherwise greedy.
pub fn select_action(q: &[f64; Action::COUNT], epsilon: f64, rng: &mut impl Rng) -> Action {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Action::from_index(rng.random_range(0..Action::COUNT)).unwrap()
    } else {
        greedy_action(q)
    }
}

/// Adam optimizer state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], hyper: &TrainHyper) {
        self.t += 1;
        let (b1, b2) = (hyper.adam_beta1, hyper.adam_beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.adam_eps);
        }
    }
}

fn huber(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.5 * u * u
    } else {
        u.abs() - 0.5
    }
}

fn td_target(target_net: &QNetwork, t: &Transition, gamma: f64) -> Result<f64, DqnError> {
    if t.done {
        return Ok(t.reward);
    }
    let q_next = q_forward(target_net, &t.next_state)?;
    let max = q_next.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    Ok(t.reward + gamma * max)
}

/// Mean Huber loss of the batch without touching parameters.
pub fn batch_loss(
    net: &QNetwork,
    target_net: &QNetwork,
    batch: &[Transition],
    gamma: f64,
) -> Result<f64, DqnError> {
    if batch.is_empty() {
        return Err(DqnError::EmptyBatch);
    }
    let mut loss = 0.0;
    for t in batch {
        let q = q_forward(net, &t.state)?;
        let u = q[t.action.index()] - td_target(target_net, t, gamma)?;
        loss += huber(u);
    }
    Ok(loss / batch.len() as f64)
}

fn batch_loss_and_grad(
    net: &QNetwork,
    target_net: &QNetwork,
    batch: &[Transition],
    gamma: f64,
) -> Result<(f64, Vec<f64>), DqnError> {
    if batch.is_empty() {
        return Err(DqnError::EmptyBatch);
    }
    let b = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; net.param_count()];
    for t in batch {
        let acts = net.forward_cached(&t.state)?;
        let qa = acts.last().unwrap()[t.action.index()];
        let u = qa - td_target(target_net, t, gamma)?;
        loss += huber(u);
        let mut d_out = vec![0.0; Action::COUNT];
        d_out[t.action.index()] = u.clamp(-1.0, 1.0) / b;
        let g = net.backward(&acts, &d_out);
        for (acc, gi) in grad.iter_mut().zip(g.iter()) {
            *acc += gi;
        }
    }
    Ok((loss / b, grad))
}

/// One optimizer step on the mean Huber TD loss. Returns the pre-update
/// loss; aborts without updating when the loss is non-finite.
pub fn td_train_step(
    net: &mut QNetwork,
    target_net: &QNetwork,
    batch: &[Transition],
    hyper: &TrainHyper,
    opt: &mut Adam,
) -> Result<f64, DqnError> {
    let (loss, grad) = batch_loss_and_grad(net, target_net, batch, hyper.gamma)?;
    if !loss.is_finite() {
        return Err(DqnError::NonFiniteLoss {
            loss,
            step: opt.steps(),
        });
    }
    opt.step(net.params_mut(), &grad, hyper);
    Ok(loss)
}

/// Outcome of a finite-difference gradient verification.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Max relative error over checked parameters; near-zero pairs (both
    /// gradients within 1e-8) contribute zero.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters with analytic |grad| > 1e-6 whose numeric gradient
    /// disagrees in sign.
    pub sign_mismatches: usize,
}

/// Compare analytic gradients against central finite differences
/// (h = 1e-5) on up to `samples` randomly chosen parameters.
pub fn gradient_check(
    net: &QNetwork,
    batch: &[Transition],
    gamma: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheck, DqnError> {
    const H: f64 = 1e-5;
    let target = net.clone();
    let (_, analytic) = batch_loss_and_grad(net, &target, batch, gamma)?;

    let n = net.param_count();
    let mut indices: Vec<usize> = (0..n).collect();
    let checked = samples.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..checked {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }

    let mut probe = net.clone();
    let mut max_rel_error = 0.0f64;
    let mut sign_mismatches = 0;
    for &idx in &indices[..checked] {
        let saved = probe.params()[idx];
        probe.params_mut()[idx] = saved + H;
        let plus = batch_loss(&probe, &target, batch, gamma)?;
        probe.params_mut()[idx] = saved - H;
        let minus = batch_loss(&probe, &target, batch, gamma)?;
        probe.params_mut()[idx] = saved;

        let numeric = (plus - minus) / (2.0 * H);
        let ga = analytic[idx];
        let diff = (ga - numeric).abs();
        if diff > 1e-8 {
            max_rel_error = max_rel_error.max(diff / ga.abs().max(numeric.abs()));
        }
        if ga.abs() > 1e-6 && ga.signum() != numeric.signum() {
            sign_mismatches += 1;
        }
    }
    Ok(GradCheck {
        max_rel_error,
        checked,
        sign_mismatches,
    })
}
