//! Group-relative policy optimization over environment trajectories.
//!
//! A step samples a batch of leads, rolls out a group of trajectories per
//! lead under a frozen snapshot of the parameters, scores each terminal
//! molecule once, standardizes rewards within each group, and applies one
//! update of the clipped surrogate with KL and entropy terms.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{ActionSpace, CacheStats, EnvError, EnvState, Environment, Expansion};
use crate::molgraph::Molecule;
use crate::oracles::{Oracle, OracleError, OracleMeter};
use crate::policy::{action_distribution, sample_action, ActionDistribution, Featurizer, PolicyParams};

#[derive(Debug, Error)]
pub enum GrpoError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss at record {record}")]
    NonFiniteLoss { record: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrpoConfig {
    pub learning_rate: f64,
    pub clip_epsilon: f64,
    pub kl_coef: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub group_size: usize,
    pub molecules_per_batch: usize,
    /// Step records per micro-batch.
    pub micro_batch: usize,
    pub steps: usize,
    pub ref_sync_interval: usize,
    pub eps_std: f64,
    /// Gradient evaluations (and updates) per rollout batch.
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            learning_rate: 1e-5,
            clip_epsilon: 0.2,
            kl_coef: 0.02,
            entropy_coef: 0.01,
            gamma: 1.0,
            group_size: 10,
            molecules_per_batch: 30,
            micro_batch: 20,
            steps: 25,
            ref_sync_interval: 50,
            eps_std: 1e-8,
            epochs: 1,
            optimizer: OptimizerConfig::Sgd,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let fail = |m: &str| Err(GrpoError::Config(m.to_string()));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return fail("clip_epsilon must lie in (0, 1)");
        }
        if self.gamma != 1.0 {
            return fail("gamma must be 1.0 for terminal-reward episodes");
        }
        if !(self.learning_rate >= 0.0 && self.kl_coef >= 0.0 && self.entropy_coef >= 0.0 && self.eps_std > 0.0) {
            return fail("learning_rate, kl_coef and entropy_coef must be >= 0 and eps_std > 0");
        }
        if self.group_size == 0 || self.molecules_per_batch == 0 || self.micro_batch == 0 || self.epochs == 0 {
            return fail("group_size, molecules_per_batch, micro_batch and epochs must be positive");
        }
        if self.ref_sync_interval == 0 {
            return fail("ref_sync_interval must be positive");
        }
        match self.optimizer {
            OptimizerConfig::Sgd => {}
            OptimizerConfig::Momentum { beta } if (0.0..1.0).contains(&beta) => {}
            OptimizerConfig::Adam { beta1, beta2, eps }
                if (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0 => {}
            _ => return fail("optimizer coefficients out of range"),
        }
        Ok(())
    }
}

/// `(r - mean) / max(std, eps_std)` with the population standard deviation.
/// A group whose rewards are all equal gets exactly zero advantages.
pub fn compute_advantages(rewards: &[f64], eps_std: f64) -> Vec<f64> {
    if rewards.iter().all(|&r| r == rewards[0]) {
        return vec![0.0; rewards.len()];
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let denom = var.sqrt().max(eps_std);
    rewards.iter().map(|r| (r - mean) / denom).collect()
}

/// One decision of a trajectory.
#[derive(Debug, Clone)]
pub struct StepSample {
    pub smiles: String,
    pub space: Arc<ActionSpace>,
    pub features: Arc<Vec<Vec<f64>>>,
    pub chosen: usize,
    /// Log-probability of `chosen` under the behavior parameters.
    pub behavior_logp: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<StepSample>,
    pub final_state: EnvState,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct GroupRollout {
    pub lead: String,
    pub trajectories: Vec<Trajectory>,
    pub advantages: Vec<f64>,
    /// Set when the budget ran out before all G trajectories were scored.
    pub truncated: bool,
}

/// How a rollout picks among candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Sample,
    Greedy,
    Uniform,
}

/// An unscored episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub steps: Vec<StepSample>,
    pub final_state: EnvState,
}

/// Runs one episode from `lead` without touching the oracle.
pub fn run_episode(
    env: &Environment,
    featurizer: &Featurizer,
    params: &PolicyParams,
    lead: &Molecule,
    selection: Selection,
    rng: &mut impl Rng,
) -> Result<Episode, EnvError> {
    let slots = env.config().k_max + 1;
    let mut state = EnvState::new(lead.clone());
    let mut steps = Vec::new();
    while state.depth() < env.config().t_max {
        let space = match env.propose(&state)?.as_ref() {
            Expansion::Terminal => break,
            Expansion::Actions(space) => space.clone(),
        };
        let features = Arc::new(featurizer.featurize_all(&state.molecule, space.candidates()));
        let dist: ActionDistribution = action_distribution(params, &features, slots);
        let (chosen, logp) = match selection {
            Selection::Sample => sample_action(&dist, rng),
            Selection::Greedy => {
                let k = dist.argmax();
                (k, dist.log_probs()[k])
            }
            Selection::Uniform => {
                let k = rng.random_range(0..dist.filled());
                (k, dist.log_probs()[k])
            }
        };
        let t = env.step_slot(&state, &space, chosen)?;
        steps.push(StepSample {
            smiles: state.molecule.canonical_smiles().to_string(),
            space,
            features,
            chosen,
            behavior_logp: logp,
        });
        state = t.state;
        if t.terminal {
            break;
        }
    }
    Ok(Episode { steps, final_state: state })
}

/// Scores `episodes` in order, stopping when the meter runs out. Returns
/// the scored trajectories and whether any episode went unscored.
fn score_episodes(
    episodes: Vec<Episode>,
    oracle: &Oracle,
    meter: &OracleMeter,
) -> Result<(Vec<Trajectory>, bool), GrpoError> {
    let mut out = Vec::with_capacity(episodes.len());
    for e in episodes {
        match meter.evaluate(oracle, &e.final_state.molecule) {
            Ok(reward) => out.push(Trajectory { steps: e.steps, final_state: e.final_state, reward }),
            Err(OracleError::BudgetExhausted { .. }) => return Ok((out, true)),
            Err(e) => return Err(e.into()),
        }
    }
    Ok((out, false))
}

fn finish_group(lead: &Molecule, trajectories: Vec<Trajectory>, truncated: bool, eps_std: f64) -> GroupRollout {
    let rewards: Vec<f64> = trajectories.iter().map(|t| t.reward).collect();
    let advantages = if rewards.is_empty() { Vec::new() } else { compute_advantages(&rewards, eps_std) };
    GroupRollout { lead: lead.canonical_smiles().to_string(), trajectories, advantages, truncated }
}

/// Samples `g` trajectories from `lead` and scores each terminal molecule
/// once.
#[allow(clippy::too_many_arguments)]
pub fn rollout_group(
    env: &Environment,
    featurizer: &Featurizer,
    params: &PolicyParams,
    lead: &Molecule,
    g: usize,
    eps_std: f64,
    rng: &mut impl Rng,
    oracle: &Oracle,
    meter: &OracleMeter,
) -> Result<GroupRollout, GrpoError> {
    let episodes = (0..g.min(meter.remaining()))
        .map(|_| run_episode(env, featurizer, params, lead, Selection::Sample, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let short = episodes.len() < g;
    let (trajectories, exhausted) = score_episodes(episodes, oracle, meter)?;
    Ok(finish_group(lead, trajectories, short || exhausted, eps_std))
}

/// A step record with its trajectory's advantage, as consumed by the loss.
#[derive(Debug, Clone, Copy)]
pub struct LossRecord<'a> {
    pub features: &'a [Vec<f64>],
    pub chosen: usize,
    pub behavior_logp: f64,
    pub advantage: f64,
}

/// Batch means of the objective's terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub loss: f64,
    pub surrogate: f64,
    pub kl: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Negated objective `mean(min(rho A, clip(rho) A)) - kl_coef mean(KL(pi || ref))
/// + entropy_coef mean(H(pi))` over `records`, with its exact gradient.
///
/// Masked slots appear in no sum.
pub fn grpo_loss(
    params: &PolicyParams,
    reference: &PolicyParams,
    records: &[LossRecord],
    config: &GrpoConfig,
) -> Result<(LossParts, Vec<f64>), GrpoError> {
    let mut grad = vec![0.0; params.theta.len()];
    let mut parts = LossParts::default();
    if records.is_empty() {
        return Ok((parts, grad));
    }
    let n = records.len() as f64;
    let eps = config.clip_epsilon;
    for (idx, r) in records.iter().enumerate() {
        let logp = log_softmax(&crate::policy::logits(params, r.features));
        let logq = log_softmax(&crate::policy::logits(reference, r.features));
        let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();

        let rho = (logp[r.chosen] - r.behavior_logp).exp();
        let unclipped = rho * r.advantage;
        let clipped = rho.clamp(1.0 - eps, 1.0 + eps) * r.advantage;
        let surrogate = unclipped.min(clipped);
        let active = unclipped <= clipped;
        let kl: f64 = p.iter().zip(&logp).zip(&logq).map(|((pk, lp), lq)| pk * (lp - lq)).sum();
        let entropy: f64 = -p.iter().zip(&logp).map(|(pk, lp)| pk * lp).sum::<f64>();
        if !(surrogate.is_finite() && kl.is_finite() && entropy.is_finite()) {
            return Err(GrpoError::NonFiniteLoss { record: idx });
        }
        parts.surrogate += surrogate / n;
        parts.kl += kl / n;
        parts.entropy += entropy / n;
        parts.clip_fraction += if active { 0.0 } else { 1.0 / n };

        // d(-objective)/d logit_k for this record, scaled by 1/n.
        for (k, x) in r.features.iter().enumerate() {
            let onehot = if k == r.chosen { 1.0 } else { 0.0 };
            let d_surr = if active { r.advantage * rho * (onehot - p[k]) } else { 0.0 };
            let d_kl = p[k] * (logp[k] - logq[k] - kl);
            let d_ent = -p[k] * (logp[k] + entropy);
            let coef = -(d_surr - config.kl_coef * d_kl + config.entropy_coef * d_ent) / n;
            params.accumulate_score_grad(x, coef, &mut grad);
        }
    }
    parts.loss = -(parts.surrogate - config.kl_coef * parts.kl + config.entropy_coef * parts.entropy);
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(GrpoError::NonFiniteLoss { record: i.min(records.len() - 1) });
    }
    Ok((parts, grad))
}

/// Loss and gradient over all records, computed in chunks of `micro_batch`
/// and combined with weights proportional to chunk size.
pub fn batch_loss(
    params: &PolicyParams,
    reference: &PolicyParams,
    records: &[LossRecord],
    config: &GrpoConfig,
) -> Result<(LossParts, Vec<f64>), GrpoError> {
    let mut total = LossParts::default();
    let mut grad = vec![0.0; params.theta.len()];
    let n = records.len() as f64;
    for (c, chunk) in records.chunks(config.micro_batch).enumerate() {
        let (parts, g) = grpo_loss(params, reference, chunk, config).map_err(|e| match e {
            GrpoError::NonFiniteLoss { record } => GrpoError::NonFiniteLoss { record: c * config.micro_batch + record },
            other => other,
        })?;
        let w = chunk.len() as f64 / n;
        total.loss += w * parts.loss;
        total.surrogate += w * parts.surrogate;
        total.kl += w * parts.kl;
        total.entropy += w * parts.entropy;
        total.clip_fraction += w * parts.clip_fraction;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += w * b;
        }
    }
    Ok((total, grad))
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, lr: f64, n: usize) -> Self {
        Optimizer { config, lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One descent step on `theta` along `grad`.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        match self.config {
            OptimizerConfig::Sgd => {
                for (w, g) in theta.iter_mut().zip(grad) {
                    *w -= self.lr * g;
                }
            }
            OptimizerConfig::Momentum { beta } => {
                for ((w, g), m) in theta.iter_mut().zip(grad).zip(&mut self.m) {
                    *m = beta * *m + g;
                    *w -= self.lr * *m;
                }
            }
            OptimizerConfig::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((w, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Owns the update side of training: optimizer state, reference snapshot and
/// step counter.
pub struct Updater {
    config: GrpoConfig,
    optimizer: Optimizer,
    reference: PolicyParams,
    steps_done: usize,
}

impl Updater {
    pub fn new(config: GrpoConfig, initial: &PolicyParams) -> Result<Self, GrpoError> {
        config.validate()?;
        let optimizer = Optimizer::new(config.optimizer.clone(), config.learning_rate, initial.theta.len());
        Ok(Updater { config, optimizer, reference: initial.clone(), steps_done: 0 })
    }

    pub fn reference(&self) -> &PolicyParams {
        &self.reference
    }

    /// Applies `epochs` updates from one batch of groups and returns the loss
    /// terms of the first gradient evaluation, where every ratio is 1.
    pub fn update(&mut self, params: &mut PolicyParams, groups: &[GroupRollout]) -> Result<LossParts, GrpoError> {
        let records: Vec<LossRecord> = groups
            .iter()
            .flat_map(|g| {
                g.trajectories.iter().zip(&g.advantages).flat_map(|(t, &a)| {
                    t.steps.iter().map(move |s| LossRecord {
                        features: &s.features,
                        chosen: s.chosen,
                        behavior_logp: s.behavior_logp,
                        advantage: a,
                    })
                })
            })
            .collect();
        let mut first = None;
        for _ in 0..self.config.epochs {
            let (parts, grad) = batch_loss(params, &self.reference, &records, &self.config)?;
            first.get_or_insert(parts);
            self.optimizer.step(&mut params.theta, &grad);
        }
        params.version += 1;
        self.steps_done += 1;
        if self.steps_done.is_multiple_of(self.config.ref_sync_interval) {
            self.reference = params.clone();
        }
        Ok(first.unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub groups: usize,
    pub trajectories: usize,
    pub records: usize,
    pub mean_reward: f64,
    pub max_reward: f64,
    #[serde(flatten)]
    pub loss: LossParts,
    pub cache: CacheStats,
    pub budget_used: usize,
    pub param_version: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub log: Vec<StepLog>,
    pub budget_exhausted: bool,
}

/// Trains from `initial` on `leads`. All randomness comes from `seed`;
/// rollouts run in parallel but are scored in a fixed order, so the result
/// does not depend on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn train(
    env: &Environment,
    featurizer: &Featurizer,
    oracle: &Oracle,
    meter: &OracleMeter,
    leads: &[Molecule],
    initial: PolicyParams,
    config: &GrpoConfig,
    seed: u64,
) -> Result<TrainOutcome, GrpoError> {
    config.validate()?;
    if leads.is_empty() {
        return Err(GrpoError::Config("no training leads".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = initial;
    let mut updater = Updater::new(config.clone(), &params)?;
    let mut log = Vec::new();
    let mut exhausted = false;
    let g = config.group_size;
    for step in 0..config.steps {
        if meter.remaining() == 0 {
            exhausted = true;
            break;
        }
        let mut order: Vec<usize> = (0..leads.len()).collect();
        order.shuffle(&mut rng);
        let mut remaining = meter.remaining();
        let mut plan = Vec::new();
        for i in 0..config.molecules_per_batch {
            if remaining == 0 {
                break;
            }
            let n = g.min(remaining);
            remaining -= n;
            plan.push((order[i % order.len()], n, rng.random::<u64>()));
        }
        let snapshot = &params;
        let episodes: Vec<Vec<Episode>> = plan
            .par_iter()
            .map(|&(lead, n, s)| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                (0..n)
                    .map(|_| run_episode(env, featurizer, snapshot, &leads[lead], Selection::Sample, &mut r))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let mut groups = Vec::with_capacity(plan.len());
        for (&(lead, n, _), eps) in plan.iter().zip(episodes) {
            let (trajs, out) = score_episodes(eps, oracle, meter)?;
            exhausted |= out || n < g;
            if !trajs.is_empty() {
                groups.push(finish_group(&leads[lead], trajs, out || n < g, config.eps_std));
            }
        }
        let rewards: Vec<f64> = groups.iter().flat_map(|g| g.trajectories.iter().map(|t| t.reward)).collect();
        let parts = updater.update(&mut params, &groups)?;
        let entry = StepLog {
            step,
            groups: groups.len(),
            trajectories: rewards.len(),
            records: groups.iter().flat_map(|g| &g.trajectories).map(|t| t.steps.len()).sum(),
            mean_reward: rewards.iter().sum::<f64>() / rewards.len().max(1) as f64,
            max_reward: rewards.iter().cloned().fold(0.0, f64::max),
            loss: parts,
            cache: env.cache().stats(),
            budget_used: meter.used(),
            param_version: params.version,
        };
        log::info!(
            "step {step}: mean reward {:.4}, loss {:.5}, kl {:.5}, entropy {:.4}, budget {}",
            entry.mean_reward,
            entry.loss.loss,
            entry.loss.kl,
            entry.loss.entropy,
            entry.budget_used
        );
        log.push(entry);
        if exhausted {
            break;
        }
    }
    Ok(TrainOutcome { params, log, budget_exhausted: exhausted })
}
