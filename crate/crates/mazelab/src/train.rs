//! Training objectives: group-relative trajectory-advantage policy gradient,
//! token-level REINFORCE with returns-to-go and per-position group
//! baselines, and supervised fine-tuning on planner trajectories. The two
//! RL trainers share the dual-clip surrogate, the equalized entropy bonus,
//! and the cosine-annealed coefficient schedule.

use serde::{Deserialize, Serialize};

use crate::codec::Vocab;
use crate::maze::{Direction, Maze, MazeConfig, TileType};
use crate::model::{valid_action_log_probs, Mat, PolicyModel, Scalar};
use crate::rng::{self};
use crate::rollout::{self, RolloutError, Transcript, Turn};
use rand::Rng as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Grpo,
    Reinforce,
    Sft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub momentum: f64,
    /// Rollouts per maze prompt (the group).
    pub group_size: usize,
    pub prompts_per_batch: usize,
    /// PPO clip width (epsilon).
    pub clip_eps: f64,
    /// Lower-bound multiplier for negative advantages (dual clip).
    pub dual_clip: f64,
    /// Symmetric clamp on the log importance ratio.
    pub log_ratio_clamp: f64,
    pub kl_coef: f64,
    /// Initial equalized-entropy coefficient.
    pub entropy_beta0: f64,
    /// Anneal horizon in steps.
    pub anneal_steps: usize,
    /// Anneal speed multiplier.
    pub decay_speed: f64,
    /// Loss-scale divisor for the per-sequence token sum.
    pub loss_scale: f64,
    pub total_steps: usize,
    pub eval_cadence: usize,
    pub temperature: f64,
    pub seed: u64,
    /// SFT minibatch size.
    pub sft_batch: usize,
    /// SFT dataset size (planner trajectories).
    pub sft_dataset: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Grpo,
            lr: 1.0,
            momentum: 0.9,
            group_size: 10,
            prompts_per_batch: 8,
            clip_eps: 0.2,
            dual_clip: 3.0,
            log_ratio_clamp: 20.0,
            kl_coef: 0.0,
            entropy_beta0: 0.01,
            anneal_steps: 500,
            decay_speed: 1.0,
            loss_scale: 2048.0,
            total_steps: 200,
            eval_cadence: 20,
            temperature: 0.7,
            seed: 0,
            sft_batch: 16,
            sft_dataset: 5000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(TrainError::BadConfig("clip_eps must be in (0,1)".into()));
        }
        if self.dual_clip <= 1.0 {
            return Err(TrainError::BadConfig("dual_clip must exceed 1".into()));
        }
        if self.group_size < 2 && self.algorithm != Algorithm::Sft {
            return Err(TrainError::BadConfig(
                "group baselines need group_size >= 2".into(),
            ));
        }
        if self.loss_scale <= 0.0 {
            return Err(TrainError::BadConfig("loss_scale must be positive".into()));
        }
        if self.anneal_steps < 2 {
            return Err(TrainError::BadConfig("anneal_steps must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    BadConfig(String),
    #[error("non-finite loss ({0}); step aborted, parameters unchanged")]
    NonFiniteLoss(f64),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
}

/// Group-relative trajectory advantages: each return minus the group mean,
/// with no standard-deviation normalization.
pub fn group_advantages_grpo(returns: &[f64]) -> Vec<f64> {
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    returns.iter().map(|r| r - mean).collect()
}

/// Undiscounted returns-to-go: suffix sums of the per-turn rewards.
pub fn returns_to_go(rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc += rewards[t];
        out[t] = acc;
    }
    out
}

/// Mask-weighted per-position group baseline and the resulting masked
/// advantages. `g` and `mask` are per-trajectory rows of equal length.
pub fn group_baseline(g: &[Vec<f64>], mask: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let t_max = g.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut baseline = vec![0.0; t_max];
    for t in 0..t_max {
        let mut num = 0.0;
        let mut den = 0.0;
        for (gi, mi) in g.iter().zip(mask) {
            if t < gi.len() {
                num += mi[t] * gi[t];
                den += mi[t];
            }
        }
        baseline[t] = num / den.max(1.0);
    }
    let adv = g
        .iter()
        .zip(mask)
        .map(|(gi, mi)| {
            gi.iter()
                .zip(mi)
                .enumerate()
                .map(|(t, (gv, mv))| (gv - baseline[t]) * mv)
                .collect()
        })
        .collect();
    (baseline, adv)
}

/// Dual-clip surrogate loss for one position.
///
/// For `a >= 0` this is the usual clipped objective
/// `max(-rho a, -clip(rho) a)`; for `a < 0` the value is additionally
/// bounded above by `-c a`.
pub fn dual_clip_surrogate(rho: f64, a: f64, eps: f64, c: f64) -> f64 {
    let clipped = rho.clamp(1.0 - eps, 1.0 + eps);
    let inner = (-rho * a).max(-clipped * a);
    if a >= 0.0 {
        inner
    } else {
        inner.min(-c * a)
    }
}

/// d(dual_clip_surrogate)/d(rho), matching the active branch.
pub fn dual_clip_grad_rho(rho: f64, a: f64, eps: f64, c: f64) -> f64 {
    let clipped = rho.clamp(1.0 - eps, 1.0 + eps);
    if a >= 0.0 {
        // -rho a active iff it is the larger term, i.e. rho <= 1 + eps
        if -rho * a >= -clipped * a {
            -a
        } else {
            0.0
        }
    } else {
        let inner = (-rho * a).max(-clipped * a);
        if inner > -c * a {
            0.0 // capped by the dual clip
        } else if -rho * a >= -clipped * a {
            -a
        } else {
            0.0
        }
    }
}

/// Within-class softmax entropies summed over tile classes with at least
/// two members; classes with fewer contribute zero.
pub fn equalized_entropy(dir_logits: [f64; 4], classes: [TileType; 4]) -> f64 {
    equalized_entropy_with_grad(dir_logits, classes).0
}

/// Returns `(H_eq, dH_eq/dlogits)`.
pub fn equalized_entropy_with_grad(
    dir_logits: [f64; 4],
    classes: [TileType; 4],
) -> (f64, [f64; 4]) {
    let mut total = 0.0;
    let mut grad = [0.0; 4];
    for class in [TileType::Path, TileType::Mold, TileType::Gold] {
        let members: Vec<usize> = (0..4).filter(|&i| classes[i] == class).collect();
        if members.len() < 2 {
            continue;
        }
        let m = members
            .iter()
            .map(|&i| dir_logits[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = members.iter().map(|&i| (dir_logits[i] - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let mut h = 0.0;
        let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
        for &p in &probs {
            if p > 0.0 {
                h -= p * p.ln();
            }
        }
        total += h;
        for (k, &i) in members.iter().enumerate() {
            let p = probs[k];
            if p > 0.0 {
                grad[i] += -p * (p.ln() + h);
            }
        }
    }
    (total, grad)
}

/// Upper bound of the equalized entropy for a neighbor-class multiset:
/// the sum of `ln k_c` over classes with `k_c >= 2`.
pub fn equalized_entropy_bound(classes: [TileType; 4]) -> f64 {
    let mut bound = 0.0;
    for class in [TileType::Path, TileType::Mold, TileType::Gold] {
        let k = classes.iter().filter(|&&c| c == class).count();
        if k >= 2 {
            bound += (k as f64).ln();
        }
    }
    bound
}

/// Cosine-annealed coefficient: `beta0 * (1 + cos(pi p)) / 2` with
/// `p = min(s f / (S - 1), 1)`.
pub fn beta_schedule(step: usize, beta0: f64, anneal_steps: usize, decay_speed: f64) -> f64 {
    beta0 * schedule_multiplier(step, anneal_steps, decay_speed)
}

/// The bare annealing multiplier; it also scales the learning rate.
pub fn schedule_multiplier(step: usize, anneal_steps: usize, decay_speed: f64) -> f64 {
    let p = (step as f64 / (anneal_steps as f64 - 1.0) * decay_speed).min(1.0);
    0.5 * (1.0 + (std::f64::consts::PI * p).cos())
}

/// Plain SGD with momentum over the model's tensor set.
pub struct SgdMomentum<T> {
    velocity: PolicyModel<T>,
    pub momentum: f64,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn new(model: &PolicyModel<T>, momentum: f64) -> SgdMomentum<T> {
        SgdMomentum {
            velocity: model.zeros_like(),
            momentum,
        }
    }

    pub fn step(&mut self, model: &mut PolicyModel<T>, grads: &PolicyModel<T>, lr: f64) {
        let mu = T::from_f64(self.momentum);
        let lr = T::from_f64(lr);
        // gather gradient slices in tensor order, then walk params in the
        // same order
        let mut gslices: Vec<Vec<T>> = Vec::new();
        let mut gg = grads.clone();
        gg.for_each_tensor_mut(|_, t| gslices.push(t.to_vec()));
        let mut idx = 0;
        self.velocity.for_each_tensor_mut(|_, v| {
            let g = &gslices[idx];
            idx += 1;
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = mu * *vi + *gi;
            }
        });
        let mut vslices: Vec<Vec<T>> = Vec::new();
        self.velocity.for_each_tensor_mut(|_, v| vslices.push(v.to_vec()));
        let mut idx = 0;
        model.for_each_tensor_mut(|_, p| {
            let v = &vslices[idx];
            idx += 1;
            for (pi, vi) in p.iter_mut().zip(v) {
                *pi -= lr * *vi;
            }
        });
    }
}

/// Scalar loss terms of one update.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossTerms {
    pub pg: f64,
    pub kl: f64,
    pub entropy: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub step: usize,
    pub mean_reward: f64,
    pub gold_rate: f64,
    pub mold_rate: f64,
    pub beta: f64,
    pub lr_scale: f64,
    pub loss: LossTerms,
}

struct SeqLoss<T> {
    loss_pg: f64,
    loss_kl: f64,
    loss_ent: f64,
    dlogits: Option<Mat<T>>,
}

/// Per-trajectory loss pieces over the action positions. Gradients are
/// returned as d(total batch loss)/d(logits) already scaled by the
/// sequence-mean and loss-scale factors.
fn sequence_loss<T: Scalar>(
    model: &PolicyModel<T>,
    vocab: &Vocab,
    transcript: &Transcript,
    advantages: &[f64],
    cfg: &TrainConfig,
    beta: f64,
    inv_scale: f64,
    want_grads: bool,
) -> Result<(SeqLoss<T>, Option<crate::model::Tape<T>>), TrainError> {
    let enc = transcript.encode(vocab, model.config.context_len)?;
    let dir_ids = vocab.direction_token_ids();
    let tau = cfg.temperature;

    let (logits, tape) = if want_grads {
        let (l, t) = model.forward_train(&enc.ids)?;
        (l, Some(t))
    } else {
        (model.forward(&enc.ids, &[], None)?.logits, None)
    };

    let mut dlogits = want_grads.then(|| Mat::zeros(enc.ids.len(), model.config.vocab_size));
    let mut loss_pg = 0.0;
    let mut loss_kl = 0.0;
    let mut loss_ent = 0.0;

    for (t, (spans, turn)) in enc.turns.iter().zip(&transcript.turns).enumerate() {
        // the direction is predicted at the ASST marker position
        let pos = spans.asst.start;
        let row = logits.row(pos);
        let dir_logits = [
            row[dir_ids[0]].as_f64(),
            row[dir_ids[1]].as_f64(),
            row[dir_ids[2]].as_f64(),
            row[dir_ids[3]].as_f64(),
        ];
        let valid = crate::maze::valid_moves(transcript.env.width, turn.obs.pos);
        let logps = valid_action_log_probs(row, dir_ids, tau, valid);
        let probs: Vec<f64> = logps
            .iter()
            .zip(valid)
            .map(|(l, v)| if v { l.exp() } else { 0.0 })
            .collect();
        let a_idx = turn.action.index();

        let log_ratio =
            (logps[a_idx] - turn.logp_action).clamp(-cfg.log_ratio_clamp, cfg.log_ratio_clamp);
        let clamped = (logps[a_idx] - turn.logp_action).abs() >= cfg.log_ratio_clamp;
        let rho = log_ratio.exp();
        let adv = advantages[t];
        loss_pg += dual_clip_surrogate(rho, adv, cfg.clip_eps, cfg.dual_clip);

        let (h_eq, h_grad) = equalized_entropy_with_grad(dir_logits, turn.obs.neighbors);
        loss_ent += h_eq;

        // KL(new || old) over the masked four-way distribution
        let mut kl = 0.0;
        let mut old_logps = [0.0; 4];
        if cfg.kl_coef != 0.0 {
            if let Some(p_old) = turn.probs {
                for i in 0..4 {
                    if !valid[i] {
                        continue;
                    }
                    old_logps[i] = (p_old[i] as f64).max(1e-30).ln();
                    kl += probs[i] * (logps[i] - old_logps[i]);
                }
            }
            loss_kl += kl;
        }

        if let Some(dl) = dlogits.as_mut() {
            let drow = dl.row_mut(pos);
            // policy-gradient term
            let dl_drho = dual_clip_grad_rho(rho, adv, cfg.clip_eps, cfg.dual_clip);
            let dl_dlogp = if clamped { 0.0 } else { dl_drho * rho };
            for i in 0..4 {
                if !valid[i] {
                    continue;
                }
                let dlogp_dlogit = (if i == a_idx { 1.0 } else { 0.0 } - probs[i]) / tau;
                let mut g = dl_dlogp * dlogp_dlogit;
                // entropy bonus enters the loss negatively
                g -= beta * h_grad[i];
                // KL penalty
                if cfg.kl_coef != 0.0 {
                    let dkl = probs[i] * (logps[i] - old_logps[i] - kl) / tau;
                    g += cfg.kl_coef * dkl;
                }
                drow[dir_ids[i]] += T::from_f64(g * inv_scale);
            }
        }
    }

    Ok((
        SeqLoss {
            loss_pg,
            loss_kl,
            loss_ent,
            dlogits,
        },
        tape,
    ))
}

/// Advantage rows for a batch of groups under the configured algorithm.
fn batch_advantages(groups: &[Vec<Transcript>], cfg: &TrainConfig) -> Vec<Vec<Vec<f64>>> {
    groups
        .iter()
        .map(|group| match cfg.algorithm {
            Algorithm::Grpo => {
                let returns: Vec<f64> = group.iter().map(|t| t.total_reward).collect();
                let adv = group_advantages_grpo(&returns);
                group
                    .iter()
                    .zip(adv)
                    .map(|(t, a)| vec![a; t.turns.len()])
                    .collect()
            }
            Algorithm::Reinforce => {
                let g: Vec<Vec<f64>> = group
                    .iter()
                    .map(|t| returns_to_go(&t.turns.iter().map(|u| u.reward).collect::<Vec<_>>()))
                    .collect();
                let mask: Vec<Vec<f64>> = g.iter().map(|r| vec![1.0; r.len()]).collect();
                group_baseline(&g, &mask).1
            }
            Algorithm::Sft => group.iter().map(|t| vec![0.0; t.turns.len()]).collect(),
        })
        .collect()
}

/// The full batch loss (and optionally gradients), shared by the update
/// path and the finite-difference checks.
pub fn rl_batch_loss<T: Scalar>(
    model: &PolicyModel<T>,
    vocab: &Vocab,
    groups: &[Vec<Transcript>],
    cfg: &TrainConfig,
    step: usize,
    want_grads: bool,
) -> Result<(LossTerms, Option<PolicyModel<T>>), TrainError> {
    let beta = beta_schedule(step, cfg.entropy_beta0, cfg.anneal_steps, cfg.decay_speed);
    let advantages = batch_advantages(groups, cfg);
    let n_seq: usize = groups.iter().map(|g| g.len()).sum();
    let inv_scale = 1.0 / (cfg.loss_scale * n_seq as f64);

    let mut grads = want_grads.then(|| model.zeros_like());
    let mut pg = 0.0;
    let mut kl = 0.0;
    let mut ent = 0.0;
    for (group, group_adv) in groups.iter().zip(&advantages) {
        for (transcript, adv) in group.iter().zip(group_adv) {
            let (seq, tape) =
                sequence_loss(model, vocab, transcript, adv, cfg, beta, inv_scale, want_grads)?;
            pg += seq.loss_pg;
            kl += seq.loss_kl;
            ent += seq.loss_ent;
            if let (Some(g), Some(tape), Some(dl)) = (grads.as_mut(), tape, seq.dlogits) {
                model.backward(&tape, &dl, g);
            }
        }
    }
    let scale = 1.0 / (cfg.loss_scale * n_seq as f64);
    let terms = LossTerms {
        pg: pg * scale,
        kl: cfg.kl_coef * kl * scale,
        entropy: ent * scale,
        total: (pg + cfg.kl_coef * kl - beta * ent) * scale,
    };
    Ok((terms, grads))
}

/// One on-policy update: rolls out `prompts_per_batch` groups under the
/// current parameters, applies the configured objective, and steps the
/// optimizer with the annealed learning rate. A non-finite loss leaves the
/// parameters untouched.
pub fn rl_update<T: Scalar>(
    model: &mut PolicyModel<T>,
    opt: &mut SgdMomentum<T>,
    vocab: &Vocab,
    env: &MazeConfig,
    cfg: &TrainConfig,
    step: usize,
) -> Result<(UpdateMetrics, Vec<Vec<Transcript>>), TrainError> {
    cfg.validate()?;
    let mut groups = Vec::with_capacity(cfg.prompts_per_batch);
    for p in 0..cfg.prompts_per_batch as u64 {
        let maze_seed = rng::mix(rng::mix(cfg.seed, 0x524c + step as u64), p);
        let group_seed = rng::mix(maze_seed, 0x47);
        groups.push(rollout::rollout_group(
            model,
            vocab,
            env,
            maze_seed,
            group_seed,
            cfg.group_size,
            cfg.temperature,
        )?);
    }

    let (terms, grads) = rl_batch_loss(model, vocab, &groups, cfg, step, true)?;
    if !terms.total.is_finite() {
        return Err(TrainError::NonFiniteLoss(terms.total));
    }
    let lr_scale = schedule_multiplier(step, cfg.anneal_steps, cfg.decay_speed);
    opt.step(model, &grads.expect("grads requested"), cfg.lr * lr_scale);

    let metrics = batch_metrics(&groups, cfg, step, lr_scale, terms);
    Ok((metrics, groups))
}

fn batch_metrics(
    groups: &[Vec<Transcript>],
    cfg: &TrainConfig,
    step: usize,
    lr_scale: f64,
    loss: LossTerms,
) -> UpdateMetrics {
    let all: Vec<&Transcript> = groups.iter().flatten().collect();
    let n = all.len().max(1) as f64;
    UpdateMetrics {
        step,
        mean_reward: all.iter().map(|t| t.total_reward).sum::<f64>() / n,
        gold_rate: all.iter().map(|t| t.entry_rate(TileType::Gold)).sum::<f64>() / n,
        mold_rate: all.iter().map(|t| t.entry_rate(TileType::Mold)).sum::<f64>() / n,
        beta: beta_schedule(step, cfg.entropy_beta0, cfg.anneal_steps, cfg.decay_speed),
        lr_scale,
        loss,
    }
}

/// Builds supervised training transcripts by planning wind-free optimal
/// trajectories on fresh mazes and replaying them with wind off.
pub fn make_planner_transcripts(
    env: &MazeConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<Transcript>, TrainError> {
    let planning_env = MazeConfig {
        wind_prob: 0.0,
        ..env.clone()
    };
    let mut out = Vec::with_capacity(count);
    for i in 0..count as u64 {
        let maze_seed = rng::mix(seed, 0x5f7 + i);
        let mut shuffle_rng = rng::stream_rng(rng::mix(maze_seed, 3), crate::rng::stream::SHUFFLE);
        let maze = Maze::generate(&planning_env, maze_seed).map_err(RolloutError::Maze)?;
        let plan = crate::maze::optimal_trajectory(&maze, planning_env.episode_len);
        let mut replay = maze.clone();
        let mut turns = Vec::with_capacity(plan.len());
        let mut total = 0.0;
        for &action in &plan {
            let obs = crate::codec::Observation {
                pos: replay.agent(),
                neighbors: replay.neighbors(),
                wind_notice: None,
            };
            let order = {
                let mut o = Direction::ALL;
                for i in (1..4).rev() {
                    let j = shuffle_rng.gen_range(0..=i);
                    o.swap(i, j);
                }
                o
            };
            let outcome = replay.step_with_wind(action, None).map_err(RolloutError::Maze)?;
            total += outcome.reward;
            turns.push(Turn {
                obs,
                order,
                action,
                reward: outcome.reward,
                wind: None,
                entered: outcome.tiles_entered,
                probs: None,
                logp_action: 0.0,
            });
        }
        out.push(Transcript {
            maze_seed,
            env: planning_env.clone(),
            turns,
            total_reward: total,
        });
    }
    Ok(out)
}

/// Mean cross-entropy of the planner's actions under the masked
/// distribution (temperature 1), plus gradients when requested. The loss
/// touches only assistant direction positions; user-span tokens never
/// contribute.
pub fn sft_batch_loss<T: Scalar>(
    model: &PolicyModel<T>,
    vocab: &Vocab,
    batch: &[&Transcript],
    want_grads: bool,
) -> Result<(f64, Option<PolicyModel<T>>), TrainError> {
    let dir_ids = vocab.direction_token_ids();
    let mut grads = want_grads.then(|| model.zeros_like());
    let mut total = 0.0;
    for transcript in batch {
        let enc = transcript.encode(vocab, model.config.context_len)?;
        let (logits, tape) = if want_grads {
            let (l, t) = model.forward_train(&enc.ids)?;
            (l, Some(t))
        } else {
            (model.forward(&enc.ids, &[], None)?.logits, None)
        };
        let n_actions = transcript.turns.len().max(1) as f64;
        let w = 1.0 / (n_actions * batch.len() as f64);
        let mut dlogits = want_grads.then(|| Mat::zeros(enc.ids.len(), model.config.vocab_size));
        for (spans, turn) in enc.turns.iter().zip(&transcript.turns) {
            let pos = spans.asst.start;
            let valid = crate::maze::valid_moves(transcript.env.width, turn.obs.pos);
            let logps = valid_action_log_probs(logits.row(pos), dir_ids, 1.0, valid);
            let a = turn.action.index();
            total += -logps[a] * w;
            if let Some(dl) = dlogits.as_mut() {
                let drow = dl.row_mut(pos);
                for i in 0..4 {
                    if !valid[i] {
                        continue;
                    }
                    let p = logps[i].exp();
                    let indicator = if i == a { 1.0 } else { 0.0 };
                    drow[dir_ids[i]] += T::from_f64(w * (p - indicator));
                }
            }
        }
        if let (Some(g), Some(tape), Some(dl)) = (grads.as_mut(), tape, dlogits) {
            model.backward(&tape, &dl, g);
        }
    }
    Ok((total, grads))
}

/// One SFT step over a random minibatch of the dataset.
pub fn sft_update<T: Scalar>(
    model: &mut PolicyModel<T>,
    opt: &mut SgdMomentum<T>,
    vocab: &Vocab,
    dataset: &[Transcript],
    cfg: &TrainConfig,
    step: usize,
) -> Result<f64, TrainError> {
    cfg.validate()?;
    let mut rng = rng::stream_rng(rng::mix(cfg.seed, 0x5f7000 + step as u64), 9);
    let batch: Vec<&Transcript> = (0..cfg.sft_batch.min(dataset.len()))
        .map(|_| &dataset[rng.gen_range(0..dataset.len())])
        .collect();
    let (loss, grads) = sft_batch_loss(model, vocab, &batch, true)?;
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss(loss));
    }
    opt.step(model, &grads.expect("grads requested"), cfg.lr);
    Ok(loss)
}

/// Greedy-action agreement with the planner on held-out transcripts.
pub fn planner_action_accuracy<T: Scalar>(
    model: &PolicyModel<T>,
    vocab: &Vocab,
    held_out: &[Transcript],
) -> Result<f64, TrainError> {
    let dir_ids = vocab.direction_token_ids();
    let mut hits = 0usize;
    let mut n = 0usize;
    for t in held_out {
        let enc = t.encode(vocab, model.config.context_len)?;
        let logits = model.forward(&enc.ids, &[], None)?.logits;
        for (&pos, turn) in enc.turns.iter().map(|s| &s.asst.start).zip(&t.turns) {
            // prediction is read at the ASST marker, the position that
            // precedes the action token
            let row = logits.row(pos);
            let valid = crate::maze::valid_moves(t.env.width, turn.obs.pos);
            let mut best = usize::MAX;
            for i in 0..4 {
                if valid[i] && (best == usize::MAX || row[dir_ids[i]] > row[dir_ids[best]]) {
                    best = i;
                }
            }
            hits += (best == turn.action.index()) as usize;
            n += 1;
        }
    }
    Ok(hits as f64 / n.max(1) as f64)
}
