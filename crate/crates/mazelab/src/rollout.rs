//! Episode driver: samples actions from the (optionally steered) policy on
//! fresh mazes and records full transcripts.

use serde::{Deserialize, Serialize};

use crate::codec::{self, CodecError, Observation, Vocab};
use crate::maze::{Direction, Maze, MazeConfig, MazeError, TileType, WindEvent};
use crate::model::{
    valid_action_distribution, valid_action_log_probs, ModelError, PolicyModel, Scalar, Steering,
};
use crate::rng::{self, stream};
use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum RolloutError {
    #[error(transparent)]
    Maze(#[from] MazeError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One turn of a transcript. `wind` is the event that happened on this
/// turn's move; the *next* turn's observation carries the notice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub obs: Observation,
    pub order: [Direction; 4],
    pub action: Direction,
    pub reward: f64,
    pub wind: Option<WindEvent>,
    pub entered: Vec<((usize, usize), TileType)>,
    /// Masked action distribution at sampling time, stored at f32.
    pub probs: Option<[f32; 4]>,
    /// Rollout-time log-probability of the chosen action.
    pub logp_action: f64,
}

/// A complete episode: the maze identity plus the per-turn record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub maze_seed: u64,
    pub env: MazeConfig,
    pub turns: Vec<Turn>,
    pub total_reward: f64,
}

impl Transcript {
    /// Re-encodes the transcript exactly as it was presented at rollout
    /// time (every assistant span closed).
    pub fn encode(
        &self,
        vocab: &Vocab,
        context_len: usize,
    ) -> Result<codec::EncodedTrajectory, CodecError> {
        let triples: Vec<_> = self
            .turns
            .iter()
            .map(|t| (t.obs.clone(), t.order, t.action))
            .collect();
        codec::encode_trajectory(&triples, false, context_len, vocab)
    }

    pub fn gold_entries(&self) -> usize {
        self.count_entries(TileType::Gold)
    }

    pub fn mold_entries(&self) -> usize {
        self.count_entries(TileType::Mold)
    }

    fn count_entries(&self, t: TileType) -> usize {
        self.turns
            .iter()
            .flat_map(|turn| &turn.entered)
            .filter(|&&(_, e)| e == t)
            .count()
    }

    /// Fraction of turns that entered at least one tile of the class.
    pub fn entry_rate(&self, t: TileType) -> f64 {
        let hits = self
            .turns
            .iter()
            .filter(|turn| turn.entered.iter().any(|&(_, e)| e == t))
            .count();
        hits as f64 / self.turns.len().max(1) as f64
    }
}

/// An owned steering request applied at every assistant-turn token.
#[derive(Debug, Clone)]
pub struct SteerVector {
    pub vector: Vec<f64>,
    pub layer: usize,
    pub factor: f64,
}

fn random_order(rng: &mut impl Rng) -> [Direction; 4] {
    let mut order = Direction::ALL;
    for i in (1..4).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

fn sample_index(probs: &[f64; 4], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Runs one episode on a freshly generated maze. Action sampling and
/// direction-order shuffling draw from separate streams of `sample_seed`;
/// wind comes from the maze's own stream, so replays are stable.
pub fn rollout_episode<T: Scalar>(
    model: &PolicyModel<T>,
    vocab: &Vocab,
    env: &MazeConfig,
    maze_seed: u64,
    sample_seed: u64,
    temperature: f64,
    steer: Option<&SteerVector>,
) -> Result<Transcript, RolloutError> {
    let mut maze = Maze::generate(env, maze_seed)?;
    let mut action_rng = rng::stream_rng(sample_seed, stream::ACTIONS);
    let mut shuffle_rng = rng::stream_rng(sample_seed, stream::SHUFFLE);
    let dir_ids = vocab.direction_token_ids();

    let steer_vec: Option<Vec<T>> = steer.map(|s| s.vector.iter().map(|&v| T::from_f64(v)).collect());

    let mut ids: Vec<u32> = Vec::new();
    let mut asst_positions: Vec<usize> = Vec::new();
    let mut turns = Vec::with_capacity(env.episode_len);
    let mut wind_notice: Option<Direction> = None;
    let mut total_reward = 0.0;

    for turn_idx in 0..env.episode_len {
        let obs = Observation {
            pos: maze.agent(),
            neighbors: maze.neighbors(),
            wind_notice,
        };
        let order = random_order(&mut shuffle_rng);
        let prompt = codec::render_turn(&obs, &order, vocab)?;
        ids.extend_from_slice(&prompt);
        if ids.len() + 2 > model.config.context_len {
            return Err(CodecError::ContextOverflow {
                turn: turn_idx,
                limit: model.config.context_len,
            }
            .into());
        }
        // the ASST marker just appended is also a steered position
        asst_positions.push(ids.len() - 1);

        let steering = match (&steer_vec, steer) {
            (Some(v), Some(s)) => Some(Steering {
                vector: v.as_slice(),
                layer: s.layer,
                factor: T::from_f64(s.factor),
                positions: &asst_positions,
            }),
            _ => None,
        };
        let out = model.forward(&ids, &[], steering.as_ref())?;
        let logits_last = out.logits.row(ids.len() - 1);
        let valid = crate::maze::valid_moves(env.width, obs.pos);
        let probs = valid_action_distribution(logits_last, dir_ids, temperature, valid);
        let logps = valid_action_log_probs(logits_last, dir_ids, temperature, valid);
        let choice = sample_index(&probs, &mut action_rng);
        let action = Direction::from_index(choice);

        asst_positions.push(ids.len());
        ids.push(vocab.direction_token(action));
        asst_positions.push(ids.len());
        ids.push(codec::END);

        let outcome = maze.step(action)?;
        total_reward += outcome.reward;
        wind_notice = outcome.wind.map(|w| w.source);
        turns.push(Turn {
            obs,
            order,
            action,
            reward: outcome.reward,
            wind: outcome.wind,
            entered: outcome.tiles_entered,
            probs: Some([
                probs[0] as f32,
                probs[1] as f32,
                probs[2] as f32,
                probs[3] as f32,
            ]),
            logp_action: logps[choice],
        });
    }

    Ok(Transcript {
        maze_seed,
        env: env.clone(),
        turns,
        total_reward,
    })
}

/// Derives the per-episode (maze, sampling) seed pair for episode `i` of a
/// rollout batch. Shared across the CLI and the sweep so identically seeded
/// runs are bitwise comparable.
pub fn episode_seeds(seed: u64, i: u64) -> (u64, u64) {
    (rng::mix(seed, 2 * i), rng::mix(seed, 2 * i + 1))
}

/// `k` episodes, each on a fresh maze.
pub fn rollout<T: Scalar>(
    model: &PolicyModel<T>,
    vocab: &Vocab,
    env: &MazeConfig,
    seed: u64,
    temperature: f64,
    steer: Option<&SteerVector>,
    k: usize,
) -> Result<Vec<Transcript>, RolloutError> {
    (0..k as u64)
        .map(|i| {
            let (maze_seed, sample_seed) = episode_seeds(seed, i);
            rollout_episode(model, vocab, env, maze_seed, sample_seed, temperature, steer)
        })
        .collect()
}

/// A prompt group: `group_size` episodes sharing one maze seed with
/// distinct sampling streams.
pub fn rollout_group<T: Scalar>(
    model: &PolicyModel<T>,
    vocab: &Vocab,
    env: &MazeConfig,
    maze_seed: u64,
    group_seed: u64,
    group_size: usize,
    temperature: f64,
) -> Result<Vec<Transcript>, RolloutError> {
    (0..group_size as u64)
        .map(|g| {
            let sample_seed = rng::mix(group_seed, g);
            rollout_episode(model, vocab, env, maze_seed, sample_seed, temperature, None)
        })
        .collect()
}

/// Mean masked-action Shannon entropy (nats) per turn index, from the
/// stored distribution snapshots.
pub fn per_turn_entropy(transcripts: &[Transcript]) -> Vec<f64> {
    let max_turns = transcripts.iter().map(|t| t.turns.len()).max().unwrap_or(0);
    let mut sums = vec![0.0f64; max_turns];
    let mut counts = vec![0usize; max_turns];
    for t in transcripts {
        for (i, turn) in t.turns.iter().enumerate() {
            if let Some(p) = turn.probs {
                let mut h = 0.0f64;
                for &v in &p {
                    let v = v as f64;
                    if v > 0.0 {
                        h -= v * v.ln();
                    }
                }
                sums[i] += h;
                counts[i] += 1;
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn test_env() -> MazeConfig {
        MazeConfig {
            width: 15,
            episode_len: 6,
            ..MazeConfig::default()
        }
    }

    fn test_model(seed: u64) -> PolicyModel<f32> {
        PolicyModel::init(&ModelConfig {
            n_layers: 2,
            d_model: 16,
            n_heads: 2,
            d_ff: 32,
            context_len: 256,
            seed,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_episodes_give_empty_list() {
        let model = test_model(0);
        let out = rollout(&model, &Vocab::default(), &test_env(), 1, 0.7, None, 0).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn episode_has_exact_length_and_consistent_reward() {
        let model = test_model(1);
        let env = test_env();
        let ts = rollout(&model, &Vocab::default(), &env, 5, 0.7, None, 4).unwrap();
        assert_eq!(ts.len(), 4);
        for t in &ts {
            assert_eq!(t.turns.len(), env.episode_len);
            let sum: f64 = t.turns.iter().map(|u| u.reward).sum();
            assert!((sum - t.total_reward).abs() < 1e-9);
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let model = test_model(2);
        let env = test_env();
        let a = rollout(&model, &Vocab::default(), &env, 7, 0.7, None, 3).unwrap();
        let b = rollout(&model, &Vocab::default(), &env, 7, 0.7, None, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wind_notices_match_previous_turn_events() {
        let model = test_model(3);
        let env = MazeConfig {
            wind_prob: 0.5,
            ..test_env()
        };
        let ts = rollout(&model, &Vocab::default(), &env, 11, 0.7, None, 6).unwrap();
        let mut saw_wind = false;
        for t in &ts {
            for i in 1..t.turns.len() {
                let prev = &t.turns[i - 1];
                let cur = &t.turns[i];
                assert_eq!(cur.obs.wind_notice, prev.wind.map(|w| w.source));
                saw_wind |= prev.wind.is_some();
            }
            assert_eq!(t.turns[0].obs.wind_notice, None);
            for turn in &t.turns {
                match turn.wind {
                    Some(w) => {
                        assert_eq!(turn.entered.len(), 2);
                        assert_eq!(w.displacement, w.source.opposite());
                    }
                    None => assert_eq!(turn.entered.len(), 1),
                }
            }
        }
        assert!(saw_wind, "expected some wind at prob 0.5");
    }

    #[test]
    fn transcript_reencodes_to_model_input() {
        let model = test_model(4);
        let env = test_env();
        let vocab = Vocab::default();
        let ts = rollout(&model, &vocab, &env, 13, 0.7, None, 2).unwrap();
        for t in &ts {
            let enc = t.encode(&vocab, 512).unwrap();
            assert_eq!(enc.turns.len(), env.episode_len);
            for (spans, turn) in enc.turns.iter().zip(&t.turns) {
                assert_eq!(enc.ids[spans.action_pos], vocab.direction_token(turn.action));
            }
        }
    }

    #[test]
    fn per_turn_entropy_matches_hand_values() {
        let env = test_env();
        let uniform_turn = Turn {
            obs: Observation {
                pos: (1, 1),
                neighbors: [TileType::Path; 4],
                wind_notice: None,
            },
            order: Direction::ALL,
            action: Direction::N,
            reward: -0.1,
            wind: None,
            entered: vec![((1, 0), TileType::Path)],
            probs: Some([0.25; 4]),
            logp_action: (0.25f64).ln(),
        };
        let onehot_turn = Turn {
            probs: Some([1.0, 0.0, 0.0, 0.0]),
            ..uniform_turn.clone()
        };
        let t1 = Transcript {
            maze_seed: 0,
            env: env.clone(),
            turns: vec![uniform_turn.clone(), onehot_turn.clone()],
            total_reward: -0.2,
        };
        let h = per_turn_entropy(std::slice::from_ref(&t1));
        assert!((h[0] - 4.0f64.ln()).abs() < 1e-6);
        assert_eq!(h[1], 0.0);

        // mixed batch equals brute-force recomputation
        let t2 = Transcript {
            maze_seed: 1,
            env,
            turns: vec![onehot_turn, uniform_turn],
            total_reward: -0.2,
        };
        let h2 = per_turn_entropy(&[t1.clone(), t2.clone()]);
        for (i, &hv) in h2.iter().enumerate() {
            let mut acc = 0.0;
            let mut n = 0;
            for t in [&t1, &t2] {
                let p = t.turns[i].probs.unwrap();
                let mut e = 0.0;
                for &v in &p {
                    let v = v as f64;
                    if v > 0.0 {
                        e -= v * v.ln();
                    }
                }
                acc += e;
                n += 1;
            }
            assert!((hv - acc / n as f64).abs() < 1e-12, "turn {i}");
        }
    }

    #[test]
    fn steering_changes_rollouts_but_zero_factor_does_not() {
        let model = test_model(5);
        let env = test_env();
        let vocab = Vocab::default();
        let plain = rollout(&model, &vocab, &env, 21, 0.7, None, 2).unwrap();
        let steer0 = SteerVector {
            vector: vec![0.3; 16],
            layer: 1,
            factor: 0.0,
        };
        let with0 = rollout(&model, &vocab, &env, 21, 0.7, Some(&steer0), 2).unwrap();
        assert_eq!(plain, with0);
        let steer = SteerVector {
            factor: 8.0,
            ..steer0
        };
        let with = rollout(&model, &vocab, &env, 21, 0.7, Some(&steer), 2).unwrap();
        assert_ne!(plain, with);
    }
}
