//! Off-policy synthetic trajectory construction for concept-vector
//! extraction: Path-only constrained random walks whose single
//! class-determining step is the last one, balanced across classes and
//! step counts, with direction-balance verification.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{self, CodecError, Observation, Vocab};
use crate::maze::{Direction, Maze, MazeConfig, MazeError, TileType};
use crate::rng::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    /// Trajectories per tile class.
    pub per_class: usize,
    pub base_seed: u64,
    /// Fresh mazes tried per trajectory before giving up.
    pub rejection_budget: usize,
    /// Allowed deviation from 25% in the balance table.
    pub balance_band: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            per_class: 5000,
            base_seed: 474747,
            rejection_budget: 10_000,
            balance_band: 0.03,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("synthesis failed for class {class:?}, n = {n}: rejection budget exhausted")]
    BudgetExhausted { class: TileType, n: usize },
    #[error(transparent)]
    Maze(#[from] MazeError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("invalid spec: {0}")]
    BadSpec(String),
}

/// One synthetic trajectory: `n_steps - 1` Path steps, then a final step
/// onto the labeled class. Encoded with the final assistant move present
/// and no trailing END.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTranscript {
    pub class: TileType,
    pub n_steps: usize,
    pub maze_seed: u64,
    pub actions: Vec<Direction>,
    pub tokens: Vec<u32>,
    pub final_action_position: usize,
}

impl LabeledTranscript {
    pub fn final_direction(&self) -> Direction {
        *self.actions.last().expect("nonempty trajectory")
    }
}

/// Near-even step-count allocation over {1..=episode_len}: counts differ
/// by at most one, lower step counts filled first.
pub fn step_count_allocation(per_class: usize, episode_len: usize) -> Vec<usize> {
    let base = per_class / episode_len;
    let rem = per_class % episode_len;
    (0..episode_len).map(|i| base + usize::from(i < rem)).collect()
}

/// BFS over Path cells from the agent: the smallest step count of each
/// parity that can enter a tile of `target`, counting the entering step.
/// Different tiles of the class may be entered at different parities, so
/// both minima are tracked.
fn min_entry_distance_by_parity(maze: &Maze, target: TileType) -> [Option<usize>; 2] {
    let w = maze.width();
    let start = maze.agent();
    let mut dist = vec![usize::MAX; w * w];
    let mut queue = VecDeque::new();
    dist[start.1 * w + start.0] = 0;
    queue.push_back(start);
    let mut best: [Option<usize>; 2] = [None, None];
    while let Some((x, y)) = queue.pop_front() {
        let d = dist[y * w + x];
        for dir in Direction::ALL {
            let (dx, dy) = dir.delta();
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= w as i64 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            let t = maze.tile(nx, ny);
            if t == target {
                let entry = d + 1;
                let slot = &mut best[entry % 2];
                *slot = Some(slot.map_or(entry, |b| b.min(entry)));
            }
            if t == TileType::Path && dist[ny * w + nx] == usize::MAX {
                dist[ny * w + nx] = d + 1;
                queue.push_back((nx, ny));
            }
        }
    }
    best
}

/// Attempts one constrained walk on a fresh maze. The first `n - 1` steps
/// choose uniformly among Path neighbors (melting excludes revisits); the
/// final step must land on the target class.
fn try_walk(
    maze: &mut Maze,
    class: TileType,
    n: usize,
    walk_rng: &mut impl Rng,
    vocab: &Vocab,
) -> Result<Option<(Vec<(Observation, [Direction; 4], Direction)>, Vec<Direction>)>, SynthError> {
    let mut turns = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    for step_idx in 0..n {
        let obs = Observation {
            pos: maze.agent(),
            neighbors: maze.neighbors(),
            wind_notice: None,
        };
        let final_step = step_idx + 1 == n;
        let want = if final_step { class } else { TileType::Path };
        let mut options = [Direction::N; 4];
        let mut n_opts = 0;
        for dir in Direction::ALL {
            if obs.neighbors[dir.index()] == want {
                options[n_opts] = dir;
                n_opts += 1;
            }
        }
        if n_opts == 0 {
            return Ok(None);
        }
        let action = options[walk_rng.gen_range(0..n_opts)];
        let order = {
            let mut o = Direction::ALL;
            for i in (1..4).rev() {
                let j = walk_rng.gen_range(0..=i);
                o.swap(i, j);
            }
            o
        };
        maze.step_with_wind(action, None)?;
        turns.push((obs, order, action));
        actions.push(action);
    }
    let _ = vocab;
    Ok(Some((turns, actions)))
}

/// Generates the full labeled set: `per_class` trajectories for each of
/// Mold, Gold, Path, step counts near-even over {1..=episode_len}, each on
/// a fresh wind-free maze. Mazes that cannot host the requested walk are
/// discarded and the seed advanced.
pub fn synthesize(
    spec: &SynthSpec,
    env: &MazeConfig,
    vocab: &Vocab,
) -> Result<Vec<LabeledTranscript>, SynthError> {
    if spec.per_class == 0 {
        return Err(SynthError::BadSpec("per_class must be positive".into()));
    }
    let planning_env = MazeConfig {
        wind_prob: 0.0,
        ..env.clone()
    };
    let allocation = step_count_allocation(spec.per_class, env.episode_len);
    let mut out = Vec::with_capacity(3 * spec.per_class);
    for class in [TileType::Mold, TileType::Gold, TileType::Path] {
        for (n_idx, &count) in allocation.iter().enumerate() {
            let n = n_idx + 1;
            let cell_tag = (class.code() as u64) << 32 | n as u64;
            for idx in 0..count as u64 {
                let cell_seed = rng::mix(rng::mix(spec.base_seed, cell_tag), idx);
                let mut produced = None;
                for attempt in 0..spec.rejection_budget as u64 {
                    let maze_seed = rng::mix(cell_seed, attempt);
                    let mut maze = Maze::generate(&planning_env, maze_seed)?;
                    // reachability / parity pre-check on the final class
                    match min_entry_distance_by_parity(&maze, class)[n % 2] {
                        Some(d) if d <= n => {}
                        _ => continue,
                    }
                    let mut walk_rng =
                        rng::stream_rng(rng::mix(maze_seed, 0x77), stream::SYNTH);
                    if let Some((turns, actions)) =
                        try_walk(&mut maze, class, n, &mut walk_rng, vocab)?
                    {
                        let enc = codec::encode_trajectory(&turns, true, usize::MAX, vocab)?;
                        produced = Some(LabeledTranscript {
                            class,
                            n_steps: n,
                            maze_seed,
                            actions,
                            final_action_position: enc.final_action_pos(),
                            tokens: enc.ids,
                        });
                        break;
                    }
                }
                match produced {
                    Some(t) => out.push(t),
                    None => return Err(SynthError::BudgetExhausted { class, n }),
                }
            }
        }
    }
    Ok(out)
}

/// Final-move direction frequencies per class and overall, with cells
/// outside `25% +- band` flagged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceReport {
    /// class -> [N, E, S, W] frequencies
    pub per_class: BTreeMap<String, [f64; 4]>,
    pub overall: [f64; 4],
    pub flagged: Vec<(String, char, f64)>,
    pub band: f64,
}

pub fn verify_balance(transcripts: &[LabeledTranscript], band: f64) -> BalanceReport {
    let mut counts: BTreeMap<String, [usize; 4]> = BTreeMap::new();
    let mut total = [0usize; 4];
    for t in transcripts {
        let dir = t.final_direction().index();
        counts.entry(format!("{:?}", t.class)).or_default()[dir] += 1;
        total[dir] += 1;
    }
    let to_freq = |c: &[usize; 4]| -> [f64; 4] {
        let n: usize = c.iter().sum();
        let n = n.max(1) as f64;
        [
            c[0] as f64 / n,
            c[1] as f64 / n,
            c[2] as f64 / n,
            c[3] as f64 / n,
        ]
    };
    let mut per_class = BTreeMap::new();
    let mut flagged = Vec::new();
    for (class, c) in &counts {
        let f = to_freq(c);
        for (i, &v) in f.iter().enumerate() {
            if (v - 0.25).abs() > band {
                flagged.push((class.clone(), Direction::from_index(i).letter(), v));
            }
        }
        per_class.insert(class.clone(), f);
    }
    BalanceReport {
        per_class,
        overall: to_freq(&total),
        flagged,
        band,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_env() -> MazeConfig {
        MazeConfig {
            width: 13,
            episode_len: 5,
            ..MazeConfig::default()
        }
    }

    #[test]
    fn allocation_is_even_within_one() {
        let a = step_count_allocation(5000, 15);
        assert_eq!(a.iter().sum::<usize>(), 5000);
        let min = a.iter().min().unwrap();
        let max = a.iter().max().unwrap();
        assert!(max - min <= 1);
        assert_eq!(step_count_allocation(7, 5), vec![2, 2, 1, 1, 1]);
    }

    #[test]
    fn single_step_path_trajectory_enters_path_neighbor() {
        let spec = SynthSpec {
            per_class: 1,
            base_seed: 99,
            ..SynthSpec::default()
        };
        let env = MazeConfig {
            episode_len: 1,
            ..small_env()
        };
        let ts = synthesize(&spec, &env, &Vocab::default()).unwrap();
        assert_eq!(ts.len(), 3);
        for t in &ts {
            assert_eq!(t.n_steps, 1);
            assert_eq!(t.actions.len(), 1);
        }
    }

    #[test]
    fn trajectories_replay_to_declared_classes() {
        let spec = SynthSpec {
            per_class: 30,
            base_seed: 4242,
            ..SynthSpec::default()
        };
        let env = small_env();
        let ts = synthesize(&spec, &env, &Vocab::default()).unwrap();
        assert_eq!(ts.len(), 90);
        let planning_env = MazeConfig {
            wind_prob: 0.0,
            ..env.clone()
        };
        for t in &ts {
            let mut maze = Maze::generate(&planning_env, t.maze_seed).unwrap();
            for (i, &action) in t.actions.iter().enumerate() {
                let out = maze.step_with_wind(action, None).unwrap();
                assert_eq!(out.tiles_entered.len(), 1);
                let entered = out.tiles_entered[0].1;
                if i + 1 == t.actions.len() {
                    assert_eq!(entered, t.class, "final step of {:?}", t.class);
                } else {
                    assert_eq!(entered, TileType::Path, "pre-final step of {:?}", t.class);
                }
            }
        }
    }

    #[test]
    fn step_counts_cover_range_evenly() {
        let spec = SynthSpec {
            per_class: 11,
            base_seed: 7,
            ..SynthSpec::default()
        };
        let env = small_env();
        let ts = synthesize(&spec, &env, &Vocab::default()).unwrap();
        for class in [TileType::Mold, TileType::Gold, TileType::Path] {
            let mut counts = vec![0usize; env.episode_len];
            for t in ts.iter().filter(|t| t.class == class) {
                counts[t.n_steps - 1] += 1;
            }
            let min = counts.iter().min().unwrap();
            let max = counts.iter().max().unwrap();
            assert!(max - min <= 1, "{class:?}: {counts:?}");
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let spec = SynthSpec {
            per_class: 10,
            base_seed: 31337,
            ..SynthSpec::default()
        };
        let env = small_env();
        let a = synthesize(&spec, &env, &Vocab::default()).unwrap();
        let b = synthesize(&spec, &env, &Vocab::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tokens_end_with_open_assistant_span() {
        let spec = SynthSpec {
            per_class: 5,
            base_seed: 12,
            ..SynthSpec::default()
        };
        let env = small_env();
        let vocab = Vocab::default();
        let ts = synthesize(&spec, &env, &vocab).unwrap();
        for t in &ts {
            assert_eq!(t.final_action_position, t.tokens.len() - 1);
            let last = *t.tokens.last().unwrap();
            assert_eq!(
                vocab.direction_of_token(last),
                Some(t.final_direction()),
                "no END after the final move"
            );
            let dec = codec::decode_trajectory(&t.tokens, &vocab).unwrap();
            assert_eq!(dec.len(), t.n_steps);
            assert!(!dec.last().unwrap().closed);
            for d in &dec[..dec.len() - 1] {
                assert!(d.closed);
            }
        }
    }

    #[test]
    fn all_north_set_is_flagged() {
        let env = small_env();
        let vocab = Vocab::default();
        let spec = SynthSpec {
            per_class: 4,
            base_seed: 5,
            ..SynthSpec::default()
        };
        let mut ts = synthesize(&spec, &env, &vocab).unwrap();
        for t in &mut ts {
            let n = t.actions.len();
            t.actions = vec![Direction::N; n];
        }
        let report = verify_balance(&ts, 0.03);
        assert_eq!(report.overall[0], 1.0);
        assert!(!report.flagged.is_empty());
    }

    #[test]
    fn balance_matches_independent_recount() {
        let spec = SynthSpec {
            per_class: 60,
            base_seed: 606,
            ..SynthSpec::default()
        };
        let env = small_env();
        let ts = synthesize(&spec, &env, &Vocab::default()).unwrap();
        let report = verify_balance(&ts, 1.0);
        // second pass, independent counter
        for class in [TileType::Mold, TileType::Gold, TileType::Path] {
            let of_class: Vec<_> = ts.iter().filter(|t| t.class == class).collect();
            for d in 0..4 {
                let count = of_class
                    .iter()
                    .filter(|t| t.final_direction().index() == d)
                    .count();
                let freq = count as f64 / of_class.len() as f64;
                let key = format!("{class:?}");
                assert!((report.per_class[&key][d] - freq).abs() < 1e-12);
            }
        }
    }
}
