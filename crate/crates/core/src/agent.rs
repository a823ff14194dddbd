//! Desk-scale clipped policy-gradient (PPO) trainer and baseline actors.
//!
//! The policy is a linear map from the scaled observation to a per-asset
//! Gaussian mean, with a learnable log standard deviation per asset, squashed
//! through `tanh` into `[-1, 1]`. The value head is linear as well. All
//! gradients are analytic.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{run_episode, Actor, EnvError, EnvState, EpisodeSummary, TradingEnv};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("probability ratio must be positive, got {0}")]
    NonPositiveRatio(f64),
    #[error("invalid hyperparameter: {0}")]
    Config(String),
    #[error("unknown baseline `{0}`")]
    UnknownBaseline(String),
    #[error("training diverged at iteration {iteration}: {what} is not finite")]
    Divergence { iteration: usize, what: &'static str },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `min(r * A, clip(r, 1 - eps, 1 + eps) * A)`.
pub fn ppo_clip_objective(ratio: f64, advantage: f64, epsilon: f64) -> Result<f64, AgentError> {
    if !(ratio > 0.0) {
        return Err(AgentError::NonPositiveRatio(ratio));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(AgentError::Config(format!("clip epsilon {epsilon} outside (0, 1)")));
    }
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    Ok((ratio * advantage).min(clipped * advantage))
}

/// True where the clipped surrogate is flat in the ratio.
pub fn clip_inactive_gradient(ratio: f64, advantage: f64, epsilon: f64) -> bool {
    (advantage > 0.0 && ratio > 1.0 + epsilon) || (advantage < 0.0 && ratio < 1.0 - epsilon)
}

/// Generalized advantage estimates for one episode; the state after the last
/// step is terminal with value 0.
pub fn advantages(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len(), "rewards and values differ in length");
    let n = rewards.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        out[t] = acc;
    }
    out
}

/// Affine observation scaling fitted to one environment window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationScaler {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ObservationScaler {
    /// Portfolio value and prices become relative changes from the episode start,
    /// holdings are divided by `h_max`, indicators are standardized over the window.
    pub fn fit(env: &TradingEnv) -> Self {
        let n = env.stock_dim();
        let data = env.data();
        let window = env.window();
        let initial = env.config().initial_amount;
        let mut offset = vec![initial];
        let mut scale = vec![initial];
        for a in 0..n {
            let p0 = data.panel.close(a, window.start);
            offset.push(p0);
            scale.push(p0);
        }
        let h = env.h_max().max(1) as f64;
        offset.extend(std::iter::repeat_n(0.0, n));
        scale.extend(std::iter::repeat_n(h, n));
        for &kind in &env.config().indicators {
            for a in 0..n {
                let vals: Vec<f64> = (window.start..=window.end)
                    .map(|t| data.indicators.value(kind, a, t))
                    .collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
                offset.push(m);
                scale.push(if sd > 1e-12 { sd } else { 1.0 });
            }
        }
        Self { offset, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn transform(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.offset)
            .zip(&self.scale)
            .map(|((x, o), s)| (x - o) / s)
            .collect()
    }
}

fn log_one_minus_tanh_sq(u: f64) -> f64 {
    // log(1 - tanh(u)^2) = 2 * (ln 2 - u - softplus(-2u))
    let softplus = |x: f64| if x > 30.0 { x } else { x.exp().ln_1p() };
    2.0 * (std::f64::consts::LN_2 - u.abs() - softplus(-2.0 * u.abs()))
}

/// Linear Gaussian-tanh policy over a `d`-dimensional observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub obs_dim: usize,
    pub stock_dim: usize,
    /// Weights (`stock_dim x obs_dim`, row-major), biases, then log-stds.
    pub params: Vec<f64>,
}

impl Policy {
    pub fn param_count(obs_dim: usize, stock_dim: usize) -> usize {
        (obs_dim + 1) * stock_dim + stock_dim
    }

    pub fn new(obs_dim: usize, stock_dim: usize, init_log_std: f64, rng: &mut impl Rng) -> Self {
        let mut params = vec![0.0; Self::param_count(obs_dim, stock_dim)];
        let w_scale = 0.01 / (obs_dim as f64).sqrt();
        for p in &mut params[..obs_dim * stock_dim] {
            *p = w_scale * rng.sample::<f64, _>(StandardNormal);
        }
        for p in &mut params[(obs_dim + 1) * stock_dim..] {
            *p = init_log_std;
        }
        Self {
            obs_dim,
            stock_dim,
            params,
        }
    }

    fn bias_offset(&self) -> usize {
        self.obs_dim * self.stock_dim
    }

    fn log_std_offset(&self) -> usize {
        (self.obs_dim + 1) * self.stock_dim
    }

    pub fn log_std(&self, i: usize) -> f64 {
        self.params[self.log_std_offset() + i]
    }

    /// Pre-squash Gaussian means.
    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(obs.len(), self.obs_dim);
        (0..self.stock_dim)
            .map(|i| {
                let row = &self.params[i * self.obs_dim..(i + 1) * self.obs_dim];
                row.iter().zip(obs).map(|(w, x)| w * x).sum::<f64>() + self.params[self.bias_offset() + i]
            })
            .collect()
    }

    /// Deterministic action `tanh(mean)`.
    pub fn greedy_action(&self, obs: &[f64]) -> Vec<f64> {
        self.mean(obs).into_iter().map(f64::tanh).collect()
    }

    /// Draws a pre-squash sample `u`; the action is `tanh(u)`.
    pub fn sample(&self, obs: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        self.mean(obs)
            .into_iter()
            .enumerate()
            .map(|(i, m)| m + self.log_std(i).exp() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Log-density of `tanh(u)`, including the change-of-variables term.
    pub fn log_prob(&self, obs: &[f64], u: &[f64]) -> f64 {
        let mean = self.mean(obs);
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        (0..self.stock_dim)
            .map(|i| {
                let ls = self.log_std(i);
                let z = (u[i] - mean[i]) / ls.exp();
                -0.5 * z * z - ls - half_ln_2pi - log_one_minus_tanh_sq(u[i])
            })
            .sum()
    }

    /// Gradient of [`Policy::log_prob`] with respect to `params`, accumulated into `out` scaled by `coef`.
    pub fn accumulate_log_prob_grad(&self, obs: &[f64], u: &[f64], coef: f64, out: &mut [f64]) {
        let mean = self.mean(obs);
        let (b_off, s_off) = (self.bias_offset(), self.log_std_offset());
        for i in 0..self.stock_dim {
            let var = (2.0 * self.log_std(i)).exp();
            let diff = u[i] - mean[i];
            let d_mean = coef * diff / var;
            for (j, x) in obs.iter().enumerate() {
                out[i * self.obs_dim + j] += d_mean * x;
            }
            out[b_off + i] += d_mean;
            out[s_off + i] += coef * (diff * diff / var - 1.0);
        }
    }
}

/// Linear state-value estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueHead {
    pub params: Vec<f64>,
}

impl ValueHead {
    pub fn new(obs_dim: usize) -> Self {
        Self {
            params: vec![0.0; obs_dim + 1],
        }
    }

    pub fn predict(&self, obs: &[f64]) -> f64 {
        let (w, b) = self.params.split_at(obs.len());
        w.iter().zip(obs).map(|(a, x)| a * x).sum::<f64>() + b[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    /// Step size at iteration k is `learning_rate / (1 + lr_decay * k)`.
    pub lr_decay: f64,
    pub value_learning_rate: f64,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub init_log_std: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            episodes_per_iteration: 4,
            epochs: 4,
            minibatch_size: 64,
            learning_rate: 0.01,
            lr_decay: 0.01,
            value_learning_rate: 0.01,
            clip_epsilon: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            init_log_std: -0.5,
            entropy_coef: 0.0,
            max_grad_norm: 1.0,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if self.iterations == 0 || self.episodes_per_iteration == 0 || self.epochs == 0 {
            return bad("iterations, episodes_per_iteration and epochs must be >= 1");
        }
        if self.minibatch_size == 0 {
            return bad("minibatch_size must be >= 1");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return bad("gamma and lambda must lie in [0, 1]");
        }
        if !(self.learning_rate >= 0.0 && self.value_learning_rate >= 0.0 && self.lr_decay >= 0.0) {
            return bad("step sizes must be nonnegative");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }

    pub fn step_size(&self, iteration: usize) -> f64 {
        self.learning_rate / (1.0 + self.lr_decay * iteration as f64)
    }
}

/// Collected experience for one batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    /// Pre-squash samples; the executed action is `tanh` of these.
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn extend(&mut self, other: Trajectory) {
        self.states.extend(other.states);
        self.actions.extend(other.actions);
        self.rewards.extend(other.rewards);
        self.log_probs.extend(other.log_probs);
        self.values.extend(other.values);
        self.advantages.extend(other.advantages);
        self.returns.extend(other.returns);
    }
}

/// Policy plus its observation scaling, acting stochastically or greedily.
pub struct PolicyActor<'a, R: Rng> {
    pub policy: &'a Policy,
    pub scaler: &'a ObservationScaler,
    pub rng: Option<R>,
}

impl<R: Rng> Actor for PolicyActor<'_, R> {
    fn act(&mut self, state: &EnvState) -> Vec<f64> {
        let obs = self.scaler.transform(&state.flatten());
        match &mut self.rng {
            Some(rng) => self.policy.sample(&obs, rng).into_iter().map(f64::tanh).collect(),
            None => self.policy.greedy_action(&obs),
        }
    }
}

/// Runs the greedy policy for one episode.
pub fn evaluate_policy(
    env: &mut TradingEnv,
    policy: &Policy,
    scaler: &ObservationScaler,
) -> Result<EpisodeSummary, AgentError> {
    let mut actor = PolicyActor::<ChaCha8Rng> {
        policy,
        scaler,
        rng: None,
    };
    Ok(run_episode(env, &mut actor)?)
}

fn rollout(
    env: &mut TradingEnv,
    policy: &Policy,
    value: &ValueHead,
    scaler: &ObservationScaler,
    seed: u64,
    cfg: &PpoConfig,
) -> Result<(Trajectory, f64), AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = Trajectory::default();
    let mut state = env.reset();
    loop {
        let obs = scaler.transform(&state.flatten());
        let u = policy.sample(&obs, &mut rng);
        let action: Vec<f64> = u.iter().map(|x| x.tanh()).collect();
        let out = env.step(&action)?;
        traj.log_probs.push(policy.log_prob(&obs, &u));
        traj.values.push(value.predict(&obs));
        traj.rewards.push(out.reward);
        traj.actions.push(u);
        traj.states.push(obs);
        state = out.state;
        if out.done {
            break;
        }
    }
    traj.advantages = advantages(&traj.rewards, &traj.values, cfg.gamma, cfg.lambda);
    traj.returns = traj
        .advantages
        .iter()
        .zip(&traj.values)
        .map(|(a, v)| a + v)
        .collect();
    let total = traj.rewards.iter().sum();
    Ok((traj, total))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Ascent step along `grad`.
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] += lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

fn clip_norm(g: &mut [f64], max_norm: f64) {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        g.iter_mut().for_each(|x| *x *= s);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean over rollouts of the summed per-step rewards.
    pub mean_reward: f64,
    /// Mean clipped surrogate over the batch after the policy update.
    pub objective: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    /// Least-squares slope of mean reward over the last quarter of iterations.
    pub last_quartile_slope: f64,
}

impl TrainingReport {
    /// One JSON object per iteration.
    pub fn write_jsonl<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut sink, r)?;
            sink.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Ordinary least-squares slope of `ys` against `0..len`.
pub fn trend_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Trained parameters plus everything needed to reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAgent {
    pub policy: Policy,
    pub value: ValueHead,
    pub scaler: ObservationScaler,
    pub report: TrainingReport,
}

/// Trains `policy` with clipped-surrogate updates on episodes of `env`.
///
/// Rollouts within an iteration run on cloned environments in parallel, each
/// with its own seed derived from `(seed, iteration, episode)`, and are merged
/// in episode order.
pub fn train(
    env: &TradingEnv,
    policy: Policy,
    value: ValueHead,
    cfg: &PpoConfig,
) -> Result<TrainedAgent, AgentError> {
    cfg.validate()?;
    let d = env.state_dimension();
    if policy.obs_dim != d || policy.stock_dim != env.stock_dim() || value.params.len() != d + 1 {
        return Err(AgentError::Config(format!(
            "policy shape ({}, {}) does not match environment ({d}, {})",
            policy.obs_dim,
            policy.stock_dim,
            env.stock_dim()
        )));
    }
    let scaler = ObservationScaler::fit(env);
    let mut policy = policy;
    let mut value = value;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy_opt = Adam::new(policy.params.len());
    let mut value_opt = Adam::new(value.params.len());
    let mut records = Vec::with_capacity(cfg.iterations);

    for k in 0..cfg.iterations {
        let seeds: Vec<u64> = (0..cfg.episodes_per_iteration).map(|_| rng.random()).collect();
        let results: Vec<Result<(Trajectory, f64), AgentError>> = seeds
            .par_iter()
            .map(|&s| {
                let mut local = env.clone();
                rollout(&mut local, &policy, &value, &scaler, s, cfg)
            })
            .collect();
        let mut batch = Trajectory::default();
        let mut totals = Vec::with_capacity(results.len());
        for r in results {
            let (t, total) = r?;
            batch.extend(t);
            totals.push(total);
        }
        let mean_reward = totals.iter().sum::<f64>() / totals.len() as f64;
        if !mean_reward.is_finite() {
            return Err(AgentError::Divergence {
                iteration: k,
                what: "mean reward",
            });
        }

        let adv_mean = batch.advantages.iter().sum::<f64>() / batch.len() as f64;
        let adv_sd = (batch
            .advantages
            .iter()
            .map(|a| (a - adv_mean).powi(2))
            .sum::<f64>()
            / batch.len() as f64)
            .sqrt();
        let adv: Vec<f64> = batch
            .advantages
            .iter()
            .map(|a| (a - adv_mean) / (adv_sd + 1e-8))
            .collect();

        let lr = cfg.step_size(k);
        let mut order: Vec<usize> = (0..batch.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.minibatch_size) {
                let mut g = vec![0.0; policy.params.len()];
                let mut gv = vec![0.0; value.params.len()];
                let inv = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let obs = &batch.states[i];
                    let u = &batch.actions[i];
                    let ratio = (policy.log_prob(obs, u) - batch.log_probs[i]).exp();
                    if !clip_inactive_gradient(ratio, adv[i], cfg.clip_epsilon) {
                        policy.accumulate_log_prob_grad(obs, u, inv * adv[i] * ratio, &mut g);
                    }
                    let err = value.predict(obs) - batch.returns[i];
                    for (j, x) in obs.iter().enumerate() {
                        gv[j] -= inv * err * x;
                    }
                    gv[d] -= inv * err;
                }
                if cfg.entropy_coef > 0.0 {
                    let off = (policy.obs_dim + 1) * policy.stock_dim;
                    g[off..].iter_mut().for_each(|x| *x += cfg.entropy_coef);
                }
                clip_norm(&mut g, cfg.max_grad_norm);
                clip_norm(&mut gv, cfg.max_grad_norm);
                policy_opt.step(&mut policy.params, &g, lr);
                value_opt.step(&mut value.params, &gv, cfg.value_learning_rate / (1.0 + cfg.lr_decay * k as f64));
            }
        }
        if policy.params.iter().any(|p| !p.is_finite()) {
            return Err(AgentError::Divergence {
                iteration: k,
                what: "policy parameters",
            });
        }

        let mut objective = 0.0;
        for i in 0..batch.len() {
            let ratio = (policy.log_prob(&batch.states[i], &batch.actions[i]) - batch.log_probs[i]).exp();
            objective += ppo_clip_objective(ratio.max(f64::MIN_POSITIVE), adv[i], cfg.clip_epsilon)?;
        }
        objective /= batch.len() as f64;
        if !objective.is_finite() {
            return Err(AgentError::Divergence {
                iteration: k,
                what: "objective",
            });
        }
        records.push(IterationRecord {
            iteration: k,
            mean_reward,
            objective,
            step_size: lr,
        });
    }

    let curve: Vec<f64> = records.iter().map(|r| r.mean_reward).collect();
    let tail = &curve[curve.len() - (curve.len() / 4).max(1).min(curve.len())..];
    let report = TrainingReport {
        seed: cfg.seed,
        last_quartile_slope: trend_slope(tail),
        records,
    };
    Ok(TrainedAgent {
        policy,
        value,
        scaler,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    BuyAndHold,
    Random,
    Flat,
}

impl std::str::FromStr for BaselineKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "buy_and_hold" => Ok(BaselineKind::BuyAndHold),
            "random" => Ok(BaselineKind::Random),
            "flat" => Ok(BaselineKind::Flat),
            other => Err(AgentError::UnknownBaseline(other.to_string())),
        }
    }
}

/// Fixed policies used as benchmarks.
#[derive(Debug, Clone)]
pub enum BaselineActor {
    Flat { stock_dim: usize },
    /// Full buy on the selected assets at the first step, then nothing.
    BuyAndHold { targets: Vec<bool> },
    Random { stock_dim: usize, rng: ChaCha8Rng },
}

impl BaselineActor {
    pub fn buy_and_hold_only(stock_dim: usize, asset: usize) -> Self {
        let mut targets = vec![false; stock_dim];
        targets[asset] = true;
        BaselineActor::BuyAndHold { targets }
    }
}

impl Actor for BaselineActor {
    fn act(&mut self, state: &EnvState) -> Vec<f64> {
        match self {
            BaselineActor::Flat { stock_dim } => vec![0.0; *stock_dim],
            BaselineActor::BuyAndHold { targets } => targets
                .iter()
                .map(|&on| if on && state.t == 0 { 1.0 } else { 0.0 })
                .collect(),
            BaselineActor::Random { stock_dim, rng } => {
                (0..*stock_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
            }
        }
    }
}

pub fn baseline_policy(kind: BaselineKind, stock_dim: usize, seed: u64) -> BaselineActor {
    match kind {
        BaselineKind::Flat => BaselineActor::Flat { stock_dim },
        BaselineKind::BuyAndHold => BaselineActor::BuyAndHold {
            targets: vec![true; stock_dim],
        },
        BaselineKind::Random => BaselineActor::Random {
            stock_dim,
            rng: ChaCha8Rng::seed_from_u64(seed),
        },
    }
}

/// Serializes policy and value parameters with a `d`, `stock_dim`, `seed` header.
///
/// Values are written in shortest round-trip form, so reading back is bit-exact.
pub fn write_checkpoint<W: Write>(
    mut sink: W,
    policy: &Policy,
    value: &ValueHead,
    seed: u64,
) -> std::io::Result<()> {
    writeln!(
        sink,
        "# riskward checkpoint d={} stock_dim={} seed={} policy={} value={}",
        policy.obs_dim,
        policy.stock_dim,
        seed,
        policy.params.len(),
        value.params.len()
    )?;
    for p in policy.params.iter().chain(&value.params) {
        writeln!(sink, "{p:?}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: Policy,
    pub value: ValueHead,
    pub seed: u64,
}

pub fn read_checkpoint<R: BufRead>(source: R) -> Result<Checkpoint, AgentError> {
    let bad = |m: String| AgentError::Checkpoint(m);
    let mut lines = source.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
    let rest = header
        .strip_prefix("# riskward checkpoint ")
        .ok_or_else(|| bad(format!("bad header `{header}`")))?;
    let field = |name: &str| -> Result<u64, AgentError> {
        rest.split_whitespace()
            .find_map(|kv| kv.strip_prefix(name).and_then(|v| v.strip_prefix('=')))
            .ok_or_else(|| bad(format!("header lacks {name}")))?
            .parse()
            .map_err(|e| bad(format!("{name}: {e}")))
    };
    let (d, n, seed) = (field("d")? as usize, field("stock_dim")? as usize, field("seed")?);
    let (np, nv) = (field("policy")? as usize, field("value")? as usize);
    if np != Policy::param_count(d, n) || nv != d + 1 {
        return Err(bad("parameter counts do not match header shape".into()));
    }
    let mut values = Vec::with_capacity(np + nv);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        values.push(line.trim().parse::<f64>().map_err(|e| bad(format!("`{line}`: {e}")))?);
    }
    if values.len() != np + nv {
        return Err(bad(format!("expected {} values, found {}", np + nv, values.len())));
    }
    let value_params = values.split_off(np);
    Ok(Checkpoint {
        policy: Policy {
            obs_dim: d,
            stock_dim: n,
            params: values,
        },
        value: ValueHead {
            params: value_params,
        },
        seed,
    })
}
