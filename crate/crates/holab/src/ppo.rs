//! PPO training: rollout collection into the memory buffer, generalized
//! advantage estimation, the clipped surrogate / value / entropy loss with
//! analytic gradients, sequential (unshuffled) mini-batch updates and the
//! three-iteration training schedule.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, HandoverEnv};
use crate::neural::{adam_step, log_probs, AdamState, Grads, Mlp};
use crate::protocol::argmax;
use crate::rng::{child_seed, seeded};
use crate::scalar::Scalar;
use crate::tracegen::RadioTrace;
use crate::{Error, Result};

/// Duration of the shortened traces used by the first two iterations.
pub const SHORT_DATASET_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetMode {
    /// 1-minute trace prefixes.
    OneMinute,
    /// Full traces.
    Full,
}

/// One stage of the training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationSpec {
    pub lr_start: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dataset_mode: DatasetMode,
    pub reset_on_pp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub ent_coef: f64,
    pub value_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Rollout length m (decision samples per update cycle).
    pub rollout_len: usize,
    pub epochs_per_rollout: usize,
    pub normalize_advantages: bool,
    pub schedule: Vec<IterationSpec>,
}

impl Default for PpoConfig {
    /// Three-iteration schedule: 500 epochs at 5e-5 and 300 at 1e-6 on
    /// 1-minute prefixes (reset on HOF only), then 300 at 1e-6 on full
    /// traces with ping-pong resets; batch sizes 150/150/550.
    fn default() -> Self {
        PpoConfig {
            clip_eps: 0.2,
            ent_coef: 0.1,
            value_coef: 0.5,
            gamma: 0.99,
            gae_lambda: 0.95,
            rollout_len: 1500,
            epochs_per_rollout: 10,
            normalize_advantages: true,
            schedule: vec![
                IterationSpec {
                    lr_start: 5e-5,
                    epochs: 500,
                    batch_size: 150,
                    dataset_mode: DatasetMode::OneMinute,
                    reset_on_pp: false,
                },
                IterationSpec {
                    lr_start: 1e-6,
                    epochs: 300,
                    batch_size: 150,
                    dataset_mode: DatasetMode::OneMinute,
                    reset_on_pp: false,
                },
                IterationSpec {
                    lr_start: 1e-6,
                    epochs: 300,
                    batch_size: 550,
                    dataset_mode: DatasetMode::Full,
                    reset_on_pp: true,
                },
            ],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::Config("clip_eps must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config("gamma and gae_lambda must lie in [0, 1]".into()));
        }
        if self.rollout_len == 0 || self.epochs_per_rollout == 0 {
            return Err(Error::Config("rollout_len and epochs_per_rollout must be > 0".into()));
        }
        if self.schedule.is_empty() {
            return Err(Error::Config("training schedule is empty".into()));
        }
        for it in &self.schedule {
            if it.batch_size == 0 || it.batch_size > self.rollout_len {
                return Err(Error::Config(format!(
                    "batch size {} must lie in 1..=rollout_len ({})",
                    it.batch_size, self.rollout_len
                )));
            }
        }
        Ok(())
    }
}

/// One stored transition.
#[derive(Debug, Clone)]
pub struct Sample {
    pub obs: Vec<f64>,
    pub action: usize,
    pub logp_old: f64,
    pub reward: f64,
    pub value_old: f64,
    /// Episode boundary after this sample (failure termination or trace end).
    pub done: bool,
    /// Failure termination: no value bootstrap across this boundary.
    pub terminal: bool,
    /// `V(s')` at a truncation boundary (`done && !terminal`).
    pub boundary_value: f64,
}

/// Ordered transition buffer (memory D), cleared after each update cycle.
#[derive(Debug, Default)]
pub struct RolloutMemory {
    pub samples: Vec<Sample>,
    /// Critic value of the observation following the last sample, used to
    /// bootstrap a non-terminal tail.
    pub tail_value: f64,
}

impl RolloutMemory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
        self.tail_value = 0.0;
    }
}

fn sample_categorical<R: Rng>(log_probs: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if r < acc {
            return i;
        }
    }
    log_probs.len() - 1
}

/// Greedy evaluation policy: argmax over logits, ties broken toward the
/// lowest BS index.
pub fn act_greedy(actor: &Mlp<f64>, obs: &[f64]) -> Result<usize> {
    Ok(argmax(&actor.forward(obs)?))
}

/// Collects `m` decision samples from the environment, starting the first
/// episode at `start_tick` and resetting to time step 0 of the same trace
/// whenever an episode terminates or the trace ends.
pub fn collect_rollout(
    trace: &RadioTrace,
    env_cfg: &EnvConfig,
    actor: &Mlp<f64>,
    critic: &Mlp<f64>,
    m: usize,
    episode_seed: u64,
    shuffle_mapping: bool,
    start_tick: usize,
    rng: &mut impl Rng,
) -> Result<RolloutMemory> {
    let (mut env, mut obs) =
        HandoverEnv::reset_at(trace, env_cfg.clone(), episode_seed, shuffle_mapping, start_tick)?;
    let mut memory = RolloutMemory::default();
    let mut flat = obs.flatten();
    for _ in 0..m {
        let logits = actor.forward(&flat)?;
        let lp = log_probs(&logits);
        let action = sample_categorical(&lp, rng);
        let value_old = critic.forward(&flat)?[0];
        let step = env.step(action)?;
        let terminal = step.terminated;
        let done = terminal || step.info.trace_done;
        let next_flat = step.obs.flatten();
        let boundary_value = if done && !terminal { critic.forward(&next_flat)?[0] } else { 0.0 };
        memory.samples.push(Sample {
            obs: flat,
            action,
            logp_old: lp[action],
            reward: step.reward,
            value_old,
            done,
            terminal,
            boundary_value,
        });
        if done {
            let (e, o) = HandoverEnv::reset(trace, env_cfg.clone(), episode_seed, shuffle_mapping)?;
            env = e;
            obs = o;
            flat = obs.flatten();
        } else {
            flat = next_flat;
        }
    }
    memory.tail_value = if memory.samples.last().map_or(false, |s| s.done) {
        0.0
    } else {
        critic.forward(&flat)?[0]
    };
    Ok(memory)
}

/// Generalized advantage estimates and value targets over the memory.
/// Episode boundaries stop bootstrapping; truncation boundaries and a
/// non-terminal tail bootstrap with the stored critic values.
pub fn compute_advantages(
    memory: &RolloutMemory,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if memory.is_empty() {
        return Err(Error::Invalid("empty rollout memory".into()));
    }
    let n = memory.len();
    let mut advantages = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let s = &memory.samples[t];
        let next_value = if s.terminal {
            0.0
        } else if s.done {
            s.boundary_value
        } else if t + 1 == n {
            memory.tail_value
        } else {
            memory.samples[t + 1].value_old
        };
        let delta = s.reward + gamma * next_value - s.value_old;
        gae = delta + gamma * lambda * if s.done { 0.0 } else { gae };
        advantages[t] = gae;
    }
    let targets = advantages
        .iter()
        .zip(&memory.samples)
        .map(|(a, s)| a + s.value_old)
        .collect();
    Ok((advantages, targets))
}

/// The clipped per-sample surrogate of the PPO objective.
pub fn clipped_surrogate<T: Scalar>(psi: T, advantage: T, clip_eps: T) -> T {
    let clipped = psi.max(T::one() - clip_eps).min(T::one() + clip_eps);
    (psi * advantage).min(clipped * advantage)
}

/// Scalar loss and parameter gradients for one mini-batch:
/// `-mean(surrogate) + value_coef * mse(V, target) - ent_coef * mean(entropy)`,
/// with advantages normalized per batch when configured.
pub fn ppo_loss(
    batch: &[Sample],
    advantages: &[f64],
    targets: &[f64],
    actor: &Mlp<f64>,
    critic: &Mlp<f64>,
    cfg: &PpoConfig,
) -> Result<(f64, Grads<f64>, Grads<f64>)> {
    let n = batch.len();
    if n == 0 || advantages.len() != n || targets.len() != n {
        return Err(Error::Invalid("batch and advantage lengths must match".into()));
    }
    let advs: Vec<f64> = if cfg.normalize_advantages {
        let mean = advantages.iter().sum::<f64>() / n as f64;
        let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(1e-8);
        advantages.iter().map(|a| (a - mean) / std).collect()
    } else {
        advantages.to_vec()
    };

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut actor_grads = actor.zeros_like();
    let mut critic_grads = critic.zeros_like();

    for ((sample, &adv), &target) in batch.iter().zip(&advs).zip(targets) {
        let cache = actor.forward_cached(&sample.obs)?;
        let lp = log_probs(cache.output());
        let probs: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        let psi = (lp[sample.action] - sample.logp_old).exp();

        loss -= clipped_surrogate(psi, adv, cfg.clip_eps) * inv_n;
        let clip_active =
            (adv > 0.0 && psi > 1.0 + cfg.clip_eps) || (adv < 0.0 && psi < 1.0 - cfg.clip_eps);

        let entropy: f64 = -probs.iter().zip(&lp).map(|(p, l)| p * l).sum::<f64>();
        loss -= cfg.ent_coef * entropy * inv_n;

        let mut dlogits = vec![0.0; probs.len()];
        if !clip_active {
            let coef = -psi * adv * inv_n;
            for (j, d) in dlogits.iter_mut().enumerate() {
                let indicator = if j == sample.action { 1.0 } else { 0.0 };
                *d += coef * (indicator - probs[j]);
            }
        }
        for (j, d) in dlogits.iter_mut().enumerate() {
            *d += cfg.ent_coef * probs[j] * (lp[j] + entropy) * inv_n;
        }
        actor.backward(&cache, &dlogits, &mut actor_grads);

        let vcache = critic.forward_cached(&sample.obs)?;
        let err = vcache.output()[0] - target;
        loss += cfg.value_coef * err * err * inv_n;
        critic.backward(&vcache, &[2.0 * cfg.value_coef * err * inv_n], &mut critic_grads);
    }
    Ok((loss, actor_grads, critic_grads))
}

/// Sequential mini-batch boundaries: `[0, n), [n, 2n), ...` with a shorter
/// final batch when `n` does not divide `m` (no shuffling).
pub fn batch_ranges(m: usize, n: usize) -> Vec<std::ops::Range<usize>> {
    (0..m.div_ceil(n)).map(|i| i * n..((i + 1) * n).min(m)).collect()
}

pub struct UpdateStats {
    pub mean_loss: f64,
}

/// One full update cycle: `epochs_per_rollout` sequential passes over the
/// memory in unshuffled mini-batches of `batch_size`, then clears it.
#[allow(clippy::too_many_arguments)]
pub fn update(
    memory: &mut RolloutMemory,
    actor: &mut Mlp<f64>,
    critic: &mut Mlp<f64>,
    opt_actor: &mut AdamState<f64>,
    opt_critic: &mut AdamState<f64>,
    cfg: &PpoConfig,
    batch_size: usize,
    lr: f64,
) -> Result<UpdateStats> {
    if batch_size > memory.len() {
        return Err(Error::Invalid(format!(
            "batch size {batch_size} exceeds memory size {}",
            memory.len()
        )));
    }
    let (advantages, targets) = compute_advantages(memory, cfg.gamma, cfg.gae_lambda)?;
    let ranges = batch_ranges(memory.len(), batch_size);
    let mut loss_sum = 0.0;
    let mut batches = 0;
    for _ in 0..cfg.epochs_per_rollout {
        for r in &ranges {
            let (loss, ga, gc) = ppo_loss(
                &memory.samples[r.clone()],
                &advantages[r.clone()],
                &targets[r.clone()],
                actor,
                critic,
                cfg,
            )?;
            adam_step(actor, &ga, opt_actor, lr);
            adam_step(critic, &gc, opt_critic, lr);
            loss_sum += loss;
            batches += 1;
        }
    }
    memory.clear();
    Ok(UpdateStats {
        mean_loss: loss_sum / batches as f64,
    })
}

/// Per-epoch training metrics row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetric {
    pub iteration: usize,
    pub epoch: usize,
    pub lr: f64,
    pub trace_index: usize,
    pub mean_reward: f64,
    pub episodes_terminated: usize,
    pub mean_loss: f64,
}

/// Serialized training state: networks plus optimizer moments, so a run
/// can resume from the last completed iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub iteration: usize,
    pub actor: Mlp<f64>,
    pub critic: Mlp<f64>,
    pub opt_actor: AdamState<f64>,
    pub opt_critic: AdamState<f64>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug)]
pub struct TrainRun {
    pub seed: u64,
    pub metrics: Vec<EpochMetric>,
    /// One checkpoint per completed iteration.
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainRun {
    pub fn final_actor(&self) -> &Mlp<f64> {
        &self.checkpoints.last().expect("completed run").actor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub env: EnvConfig,
    /// Sample ent_coef from {0.1, 0.01, 0.001} and C from [0.6, 0.95]
    /// instead of using the configured values.
    pub sample_hyperparams: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            ppo: PpoConfig::default(),
            env: EnvConfig::default(),
            sample_hyperparams: false,
        }
    }
}

/// Linear decay to zero over one iteration.
pub fn scheduled_lr(lr_start: f64, epoch: usize, epochs: usize) -> f64 {
    lr_start * (epochs - epoch) as f64 / epochs as f64
}

/// Runs the full training schedule on the training traces. Deterministic
/// per seed: every random choice derives from (seed, iteration, epoch).
pub fn train(dataset: &[RadioTrace], cfg: &TrainConfig, seed: u64) -> Result<TrainRun> {
    train_resumable(dataset, cfg, seed, 0, None, &mut |_| {})
}

/// [`train`] with a starting iteration and state (for `--resume`) and a
/// per-epoch callback for progress reporting.
pub fn train_resumable(
    dataset: &[RadioTrace],
    cfg: &TrainConfig,
    seed: u64,
    start_iteration: usize,
    resume_from: Option<Checkpoint>,
    on_epoch: &mut dyn FnMut(&EpochMetric),
) -> Result<TrainRun> {
    cfg.ppo.validate()?;
    cfg.env.validate()?;
    if dataset.is_empty() {
        return Err(Error::Invalid("training needs at least one trace".into()));
    }
    let n_bs = dataset[0].n_bs();
    let obs_dim = 2 * n_bs + 1;

    let mut env_cfg = cfg.env.clone();
    if cfg.sample_hyperparams {
        let mut rng = seeded(seed, "hyperparams");
        env_cfg.penalty_c = rng.gen_range(0.6..=0.95);
    }
    let mut ppo_cfg = cfg.ppo.clone();
    if cfg.sample_hyperparams {
        let mut rng = seeded(seed, "hyperparams-ent");
        ppo_cfg.ent_coef = *[0.1, 0.01, 0.001].as_slice().get(rng.gen_range(0..3)).unwrap();
    }

    let (mut actor, mut critic, mut opt_actor, mut opt_critic, mut checkpoints) =
        match resume_from {
            Some(ck) => {
                let mut prior = Vec::new();
                let (a, c, oa, oc) = (ck.actor.clone(), ck.critic.clone(), ck.opt_actor.clone(), ck.opt_critic.clone());
                prior.push(ck);
                (a, c, oa, oc, prior)
            }
            None => {
                let actor = Mlp::init(
                    &[obs_dim, 64, 128, 64, n_bs],
                    child_seed(seed, "actor-init"),
                )?;
                let critic = Mlp::init(&[obs_dim, 64, 128, 64, 1], child_seed(seed, "critic-init"))?;
                let oa = AdamState::new(&actor);
                let oc = AdamState::new(&critic);
                (actor, critic, oa, oc, Vec::new())
            }
        };

    let mut metrics = Vec::new();
    for (it_idx, iter) in ppo_cfg.schedule.iter().enumerate().skip(start_iteration) {
        env_cfg.reset_on_pp = iter.reset_on_pp;
        env_cfg.reset_on_hof = true;
        for epoch in 0..iter.epochs {
            let lr = scheduled_lr(iter.lr_start, epoch, iter.epochs);
            let label = format!("it{it_idx}-ep{epoch}");
            let trace_index =
                seeded(seed, &format!("trace-{label}")).gen_range(0..dataset.len());
            let full = &dataset[trace_index];
            let short;
            let trace = match iter.dataset_mode {
                DatasetMode::OneMinute => {
                    short = full.prefix(SHORT_DATASET_S);
                    &short
                }
                DatasetMode::Full => full,
            };
            let mut action_rng = seeded(seed, &format!("actions-{label}"));
            let mapping_seed = child_seed(seed, &format!("mapping-{label}"));
            // Traces are much longer than one rollout; spreading the start
            // tick over the trace lets training see every segment instead
            // of only the opening window.
            let max_start = trace.len().saturating_sub(ppo_cfg.rollout_len);
            let start_tick = if max_start == 0 {
                0
            } else {
                seeded(seed, &format!("start-{label}")).gen_range(0..=max_start)
            };
            let mut memory = collect_rollout(
                trace,
                &env_cfg,
                &actor,
                &critic,
                ppo_cfg.rollout_len,
                mapping_seed,
                true,
                start_tick,
                &mut action_rng,
            )?;
            let mean_reward =
                memory.samples.iter().map(|s| s.reward).sum::<f64>() / memory.len() as f64;
            let episodes_terminated = memory.samples.iter().filter(|s| s.terminal).count();
            let stats = update(
                &mut memory,
                &mut actor,
                &mut critic,
                &mut opt_actor,
                &mut opt_critic,
                &ppo_cfg,
                iter.batch_size,
                lr,
            )?;
            let metric = EpochMetric {
                iteration: it_idx,
                epoch,
                lr,
                trace_index,
                mean_reward,
                episodes_terminated,
                mean_loss: stats.mean_loss,
            };
            on_epoch(&metric);
            metrics.push(metric);
        }
        checkpoints.push(Checkpoint {
            version: CHECKPOINT_VERSION,
            iteration: it_idx,
            actor: actor.clone(),
            critic: critic.clone(),
            opt_actor: opt_actor.clone(),
            opt_critic: opt_critic.clone(),
        });
    }
    Ok(TrainRun { seed, metrics, checkpoints })
}
