//! Deterministic bidirectional mapping between maze turns and token
//! sequences over a small fixed symbolic vocabulary.
//!
//! A rendered turn is
//!
//! ```text
//! [WIND <dir>]? USER LOC <x digits> LOC <y digits> SEES (<dir> <tile>)x4 END ASST <dir> [END]
//! ```
//!
//! where the four `(direction, tile)` pairs appear in a per-turn shuffled
//! order and the trailing `END` is omitted on the final turn of extraction
//! inputs. The second `LOC` separates the two variable-width coordinates so
//! decoding never needs out-of-band information.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::maze::{Direction, TileType};

pub const PAD: u32 = 0;
pub const USER: u32 = 1;
pub const ASST: u32 = 2;
pub const END: u32 = 3;
pub const LOC: u32 = 4;
pub const SEES: u32 = 5;
pub const WIND: u32 = 6;
const TILE_BASE: u32 = 7;
const DIR_BASE: u32 = 10;
const DIGIT_BASE: u32 = 14;

/// Number of tokens in the vocabulary.
pub const VOCAB_SIZE: usize = 24;

/// Token inventory plus the tile-to-symbol bijection. The tile-swap control
/// is expressed as a permuted `tile_map`; everything else is fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    /// Symbol slot (0..3, rendered as T0/T1/T2) for Path, Mold, Gold.
    tile_map: [u8; 3],
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab {
            tile_map: [0, 1, 2],
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CodecError {
    #[error("coordinate {0} exceeds 3 digits")]
    CoordinateTooWide(usize),
    #[error("tile_map must be a permutation of 0..3, got {0:?}")]
    BadTileMap([u8; 3]),
    #[error("encoded trajectory exceeds context length {limit} at turn {turn}")]
    ContextOverflow { turn: usize, limit: usize },
    #[error("malformed token sequence at position {0}: {1}")]
    Malformed(usize, String),
}

impl Vocab {
    /// A vocabulary with an explicit tile-to-symbol assignment.
    pub fn with_tile_map(tile_map: [u8; 3]) -> Result<Vocab, CodecError> {
        let mut seen = [false; 3];
        for &s in &tile_map {
            if s > 2 || seen[s as usize] {
                return Err(CodecError::BadTileMap(tile_map));
            }
            seen[s as usize] = true;
        }
        Ok(Vocab { tile_map })
    }

    /// The tile-swap control: Mold and Gold exchange symbols.
    pub fn swapped() -> Vocab {
        Vocab {
            tile_map: [0, 2, 1],
        }
    }

    pub fn size(&self) -> usize {
        VOCAB_SIZE
    }

    pub fn tile_token(&self, t: TileType) -> u32 {
        let slot = match t {
            TileType::Path => self.tile_map[0],
            TileType::Mold => self.tile_map[1],
            TileType::Gold => self.tile_map[2],
        };
        TILE_BASE + slot as u32
    }

    pub fn tile_of_token(&self, tok: u32) -> Option<TileType> {
        if !(TILE_BASE..TILE_BASE + 3).contains(&tok) {
            return None;
        }
        let slot = (tok - TILE_BASE) as u8;
        [TileType::Path, TileType::Mold, TileType::Gold]
            .into_iter()
            .zip(self.tile_map)
            .find(|&(_, s)| s == slot)
            .map(|(t, _)| t)
    }

    pub fn direction_token(&self, d: Direction) -> u32 {
        DIR_BASE + d.index() as u32
    }

    pub fn direction_of_token(&self, tok: u32) -> Option<Direction> {
        if (DIR_BASE..DIR_BASE + 4).contains(&tok) {
            Some(Direction::from_index((tok - DIR_BASE) as usize))
        } else {
            None
        }
    }

    /// Token ids of N, E, S, W in direction-index order.
    pub fn direction_token_ids(&self) -> [usize; 4] {
        [
            DIR_BASE as usize,
            DIR_BASE as usize + 1,
            DIR_BASE as usize + 2,
            DIR_BASE as usize + 3,
        ]
    }

    pub fn token_string(&self, tok: u32) -> String {
        match tok {
            PAD => "<pad>".into(),
            USER => "<user>".into(),
            ASST => "<asst>".into(),
            END => "<end>".into(),
            LOC => "<loc>".into(),
            SEES => "<sees>".into(),
            WIND => "<wind>".into(),
            t if (TILE_BASE..TILE_BASE + 3).contains(&t) => format!("T{}", t - TILE_BASE),
            t if (DIR_BASE..DIR_BASE + 4).contains(&t) => {
                Direction::from_index((t - DIR_BASE) as usize)
                    .letter()
                    .to_string()
            }
            t if (DIGIT_BASE..DIGIT_BASE + 10).contains(&t) => (t - DIGIT_BASE).to_string(),
            t => format!("<invalid:{t}>"),
        }
    }

    /// Reproducibility manifest: token strings in id order plus the tile
    /// assignment.
    pub fn manifest(&self) -> serde_json::Value {
        let tokens: Vec<String> = (0..VOCAB_SIZE as u32).map(|t| self.token_string(t)).collect();
        serde_json::json!({
            "vocab_size": VOCAB_SIZE,
            "tokens": tokens,
            "tile_map": {
                "Path": format!("T{}", self.tile_map[0]),
                "Mold": format!("T{}", self.tile_map[1]),
                "Gold": format!("T{}", self.tile_map[2]),
            },
        })
    }
}

/// What the agent is shown at the start of a turn. `wind_notice` reports the
/// source of a wind event from the previous turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub pos: (usize, usize),
    /// Neighbor tiles keyed by direction index (N, E, S, W).
    pub neighbors: [TileType; 4],
    pub wind_notice: Option<Direction>,
}

/// One fully rendered turn: token ids and the spans needed for steering and
/// capture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnTokens {
    pub ids: Vec<u32>,
    /// Everything before the assistant span (wind notice included).
    pub user_span: Range<usize>,
    /// ASST, the direction token, and END (END omitted on extraction-final
    /// turns).
    pub asst_span: Range<usize>,
    /// Index of the assistant direction token.
    pub action_pos: usize,
}

fn push_digits(ids: &mut Vec<u32>, value: usize) -> Result<(), CodecError> {
    let s = value.to_string();
    if s.len() > 3 {
        return Err(CodecError::CoordinateTooWide(value));
    }
    for b in s.bytes() {
        ids.push(DIGIT_BASE + (b - b'0') as u32);
    }
    Ok(())
}

/// Renders the prompt part of a turn, through the ASST marker.
pub fn render_turn(
    obs: &Observation,
    order: &[Direction; 4],
    vocab: &Vocab,
) -> Result<Vec<u32>, CodecError> {
    let mut ids = Vec::with_capacity(22);
    if let Some(src) = obs.wind_notice {
        ids.push(WIND);
        ids.push(vocab.direction_token(src));
    }
    ids.push(USER);
    ids.push(LOC);
    push_digits(&mut ids, obs.pos.0)?;
    ids.push(LOC);
    push_digits(&mut ids, obs.pos.1)?;
    ids.push(SEES);
    for &dir in order {
        ids.push(vocab.direction_token(dir));
        ids.push(vocab.tile_token(obs.neighbors[dir.index()]));
    }
    ids.push(END);
    ids.push(ASST);
    Ok(ids)
}

/// Renders a complete turn including the assistant move. `with_end = false`
/// leaves the assistant span open, as extraction inputs require on their
/// final turn.
pub fn render_complete_turn(
    obs: &Observation,
    order: &[Direction; 4],
    action: Direction,
    with_end: bool,
    vocab: &Vocab,
) -> Result<TurnTokens, CodecError> {
    let mut ids = render_turn(obs, order, vocab)?;
    let asst_start = ids.len() - 1; // the ASST marker just emitted
    let action_pos = ids.len();
    ids.push(vocab.direction_token(action));
    if with_end {
        ids.push(END);
    }
    let len = ids.len();
    Ok(TurnTokens {
        ids,
        user_span: 0..asst_start,
        asst_span: asst_start..len,
        action_pos,
    })
}

/// Absolute spans of one turn inside an encoded trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnSpans {
    pub user: Range<usize>,
    pub asst: Range<usize>,
    pub action_pos: usize,
}

/// An encoded multi-turn trajectory with its role-span table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedTrajectory {
    pub ids: Vec<u32>,
    pub turns: Vec<TurnSpans>,
}

impl EncodedTrajectory {
    /// Every assistant-turn token position (ASST, direction, END), the
    /// steering site set.
    pub fn assistant_positions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for t in &self.turns {
            out.extend(t.asst.clone());
        }
        out
    }

    /// Direction-token positions, one per turn, in turn order.
    pub fn action_positions(&self) -> Vec<usize> {
        self.turns.iter().map(|t| t.action_pos).collect()
    }

    /// Position of the last turn's direction token (the capture site).
    pub fn final_action_pos(&self) -> usize {
        self.turns.last().expect("nonempty trajectory").action_pos
    }
}

/// Encodes a whole trajectory. With `final_no_end`, the last turn's
/// assistant span omits its END marker.
pub fn encode_trajectory(
    turns: &[(Observation, [Direction; 4], Direction)],
    final_no_end: bool,
    context_len: usize,
    vocab: &Vocab,
) -> Result<EncodedTrajectory, CodecError> {
    let mut ids = Vec::new();
    let mut spans = Vec::with_capacity(turns.len());
    for (i, (obs, order, action)) in turns.iter().enumerate() {
        let with_end = !(final_no_end && i + 1 == turns.len());
        let turn = render_complete_turn(obs, order, *action, with_end, vocab)?;
        let off = ids.len();
        ids.extend_from_slice(&turn.ids);
        spans.push(TurnSpans {
            user: off + turn.user_span.start..off + turn.user_span.end,
            asst: off + turn.asst_span.start..off + turn.asst_span.end,
            action_pos: off + turn.action_pos,
        });
        if ids.len() > context_len {
            return Err(CodecError::ContextOverflow {
                turn: i,
                limit: context_len,
            });
        }
    }
    Ok(EncodedTrajectory { ids, turns: spans })
}

/// One decoded turn: the observation, the order the pairs appeared in, and
/// the assistant move if present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedTurn {
    pub obs: Observation,
    pub order: [Direction; 4],
    pub action: Option<Direction>,
    pub closed: bool,
}

struct Cursor<'a> {
    ids: &'a [u32],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u32> {
        self.ids.get(self.pos).copied()
    }

    fn next(&mut self) -> Result<u32, CodecError> {
        let t = self
            .peek()
            .ok_or_else(|| CodecError::Malformed(self.pos, "unexpected end".into()))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, tok: u32, what: &str) -> Result<(), CodecError> {
        let got = self.next()?;
        if got != tok {
            return Err(CodecError::Malformed(
                self.pos - 1,
                format!("expected {what}, got token {got}"),
            ));
        }
        Ok(())
    }

    fn number(&mut self) -> Result<usize, CodecError> {
        let mut digits = Vec::new();
        while let Some(t) = self.peek() {
            if (DIGIT_BASE..DIGIT_BASE + 10).contains(&t) {
                digits.push((t - DIGIT_BASE) as usize);
                self.pos += 1;
            } else {
                break;
            }
        }
        if digits.is_empty() || digits.len() > 3 {
            return Err(CodecError::Malformed(self.pos, "bad coordinate".into()));
        }
        Ok(digits.iter().fold(0, |acc, d| acc * 10 + d))
    }
}

/// Inverts [`encode_trajectory`]. Accepts a trailing open assistant span.
pub fn decode_trajectory(ids: &[u32], vocab: &Vocab) -> Result<Vec<DecodedTurn>, CodecError> {
    let mut cur = Cursor { ids, pos: 0 };
    let mut out = Vec::new();
    while cur.peek().is_some() {
        let wind_notice = if cur.peek() == Some(WIND) {
            cur.pos += 1;
            let d = cur.next()?;
            Some(vocab.direction_of_token(d).ok_or_else(|| {
                CodecError::Malformed(cur.pos - 1, "wind source is not a direction".into())
            })?)
        } else {
            None
        };
        cur.expect(USER, "USER")?;
        cur.expect(LOC, "LOC")?;
        let x = cur.number()?;
        cur.expect(LOC, "LOC")?;
        let y = cur.number()?;
        cur.expect(SEES, "SEES")?;
        let mut neighbors = [TileType::Path; 4];
        let mut order = [Direction::N; 4];
        let mut listed = [false; 4];
        for slot in 0..4 {
            let d = cur.next()?;
            let dir = vocab.direction_of_token(d).ok_or_else(|| {
                CodecError::Malformed(cur.pos - 1, "expected direction in pair".into())
            })?;
            if listed[dir.index()] {
                return Err(CodecError::Malformed(
                    cur.pos - 1,
                    format!("direction {} listed twice", dir.letter()),
                ));
            }
            listed[dir.index()] = true;
            let t = cur.next()?;
            let tile = vocab.tile_of_token(t).ok_or_else(|| {
                CodecError::Malformed(cur.pos - 1, "expected tile symbol in pair".into())
            })?;
            order[slot] = dir;
            neighbors[dir.index()] = tile;
        }
        cur.expect(END, "END")?;
        cur.expect(ASST, "ASST")?;
        let action = match cur.peek() {
            Some(t) if vocab.direction_of_token(t).is_some() => {
                cur.pos += 1;
                vocab.direction_of_token(t)
            }
            _ => {
                return Err(CodecError::Malformed(
                    cur.pos,
                    "assistant span missing direction".into(),
                ))
            }
        };
        let closed = if cur.peek() == Some(END) {
            cur.pos += 1;
            true
        } else {
            false
        };
        out.push(DecodedTurn {
            obs: Observation {
                pos: (x, y),
                neighbors,
                wind_notice,
            },
            order,
            action,
            closed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs_4_7() -> Observation {
        Observation {
            pos: (4, 7),
            neighbors: [TileType::Mold, TileType::Path, TileType::Path, TileType::Path],
            wind_notice: None,
        }
    }

    #[test]
    fn renders_worked_example_turn() {
        let vocab = Vocab::default();
        let order = [Direction::N, Direction::E, Direction::S, Direction::W];
        let ids = render_turn(&obs_4_7(), &order, &vocab).unwrap();
        let t_mold = vocab.tile_token(TileType::Mold);
        let t_path = vocab.tile_token(TileType::Path);
        let expect = vec![
            USER,
            LOC,
            DIGIT_BASE + 4,
            LOC,
            DIGIT_BASE + 7,
            SEES,
            vocab.direction_token(Direction::N),
            t_mold,
            vocab.direction_token(Direction::E),
            t_path,
            vocab.direction_token(Direction::S),
            t_path,
            vocab.direction_token(Direction::W),
            t_path,
            END,
            ASST,
        ];
        assert_eq!(ids, expect);
    }

    #[test]
    fn shuffle_changes_sequence_not_content() {
        let vocab = Vocab::default();
        let fwd = [Direction::N, Direction::E, Direction::S, Direction::W];
        let rev = [Direction::W, Direction::S, Direction::E, Direction::N];
        let a = render_turn(&obs_4_7(), &fwd, &vocab).unwrap();
        let b = render_turn(&obs_4_7(), &rev, &vocab).unwrap();
        assert_ne!(a, b);
        let da = decode_trajectory(
            &render_complete_turn(&obs_4_7(), &fwd, Direction::E, true, &vocab)
                .unwrap()
                .ids,
            &vocab,
        )
        .unwrap();
        let db = decode_trajectory(
            &render_complete_turn(&obs_4_7(), &rev, Direction::E, true, &vocab)
                .unwrap()
                .ids,
            &vocab,
        )
        .unwrap();
        assert_eq!(da[0].obs, db[0].obs);
    }

    #[test]
    fn wind_notice_prepends_two_tokens() {
        let vocab = Vocab::default();
        let mut obs = obs_4_7();
        obs.wind_notice = Some(Direction::N);
        let order = [Direction::N, Direction::E, Direction::S, Direction::W];
        let ids = render_turn(&obs, &order, &vocab).unwrap();
        assert_eq!(ids[0], WIND);
        assert_eq!(ids[1], vocab.direction_token(Direction::N));
        assert_eq!(ids[2], USER);
    }

    #[test]
    fn coordinate_wider_than_three_digits_errors() {
        let vocab = Vocab::default();
        let mut obs = obs_4_7();
        obs.pos = (1000, 7);
        let order = [Direction::N, Direction::E, Direction::S, Direction::W];
        assert_eq!(
            render_turn(&obs, &order, &vocab).unwrap_err(),
            CodecError::CoordinateTooWide(1000)
        );
    }

    #[test]
    fn empty_trajectory_encodes_empty() {
        let enc = encode_trajectory(&[], false, 512, &Vocab::default()).unwrap();
        assert!(enc.ids.is_empty());
        assert!(enc.turns.is_empty());
    }

    #[test]
    fn fifteen_turn_transcript_fits_length_budget() {
        let vocab = Vocab::default();
        let mut turns = Vec::new();
        for i in 0..15 {
            let obs = Observation {
                pos: (97, 42),
                neighbors: [TileType::Mold, TileType::Path, TileType::Gold, TileType::Path],
                // worst case: every turn carries a wind notice
                wind_notice: Some(Direction::from_index(i % 4)),
            };
            turns.push((
                obs,
                [Direction::W, Direction::N, Direction::E, Direction::S],
                Direction::from_index((i + 1) % 4),
            ));
        }
        let enc = encode_trajectory(&turns, false, 512, &vocab).unwrap();
        assert!(enc.ids.len() <= 15 * 22, "len {}", enc.ids.len());
        assert_eq!(enc.turns.len(), 15);
    }

    #[test]
    fn context_overflow_names_turn() {
        let vocab = Vocab::default();
        let obs = obs_4_7();
        let order = [Direction::N, Direction::E, Direction::S, Direction::W];
        let turns: Vec<_> = (0..4).map(|_| (obs.clone(), order, Direction::N)).collect();
        let err = encode_trajectory(&turns, false, 40, &vocab).unwrap_err();
        match err {
            CodecError::ContextOverflow { turn, limit } => {
                assert_eq!(limit, 40);
                assert_eq!(turn, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn assistant_spans_cover_exactly_asst_dir_end() {
        let vocab = Vocab::default();
        let obs = obs_4_7();
        let order = [Direction::S, Direction::W, Direction::N, Direction::E];
        let turns: Vec<_> = (0..3).map(|_| (obs.clone(), order, Direction::W)).collect();
        let enc = encode_trajectory(&turns, true, 512, &vocab).unwrap();
        for (i, spans) in enc.turns.iter().enumerate() {
            let final_turn = i == 2;
            let expect_len = if final_turn { 2 } else { 3 };
            assert_eq!(spans.asst.len(), expect_len);
            assert_eq!(enc.ids[spans.asst.start], ASST);
            assert_eq!(enc.ids[spans.action_pos], vocab.direction_token(Direction::W));
            if !final_turn {
                assert_eq!(enc.ids[spans.asst.end - 1], END);
            }
        }
        assert_eq!(enc.final_action_pos(), enc.ids.len() - 1);
        // scan: assistant positions are exactly the non-user positions
        let asst: std::collections::BTreeSet<_> =
            enc.assistant_positions().into_iter().collect();
        let user: std::collections::BTreeSet<_> = enc
            .turns
            .iter()
            .flat_map(|t| t.user.clone())
            .collect();
        assert_eq!(asst.len() + user.len(), enc.ids.len());
        assert!(asst.is_disjoint(&user));
    }

    #[test]
    fn tile_swap_is_a_symbol_permutation() {
        let plain = Vocab::default();
        let swapped = Vocab::swapped();
        assert_eq!(
            plain.tile_token(TileType::Mold),
            swapped.tile_token(TileType::Gold)
        );
        assert_eq!(
            plain.tile_token(TileType::Path),
            swapped.tile_token(TileType::Path)
        );
        assert!(Vocab::with_tile_map([0, 0, 1]).is_err());
    }

    #[test]
    fn manifest_lists_every_token() {
        let m = Vocab::default().manifest();
        assert_eq!(m["tokens"].as_array().unwrap().len(), VOCAB_SIZE);
        assert_eq!(m["tile_map"]["Gold"], "T2");
    }

    fn arb_tile() -> impl Strategy<Value = TileType> {
        prop_oneof![
            Just(TileType::Path),
            Just(TileType::Mold),
            Just(TileType::Gold)
        ]
    }

    fn arb_order() -> impl Strategy<Value = [Direction; 4]> {
        (0usize..24).prop_map(|k| {
            let mut dirs = Direction::ALL;
            // index the 24 permutations
            let mut k = k;
            for i in 0..4 {
                let n = 4 - i;
                let j = k % n;
                dirs.swap(i, i + j);
                k /= n;
            }
            dirs
        })
    }

    proptest! {
        #[test]
        fn round_trip_restores_turns(
            xs in proptest::collection::vec((0usize..1000, 0usize..1000), 1..6),
            tiles in proptest::collection::vec([arb_tile(), arb_tile(), arb_tile(), arb_tile()], 1..6),
            orders in proptest::collection::vec(arb_order(), 1..6),
            actions in proptest::collection::vec(0usize..4, 1..6),
            winds in proptest::collection::vec(proptest::option::of(0usize..4), 1..6),
            final_no_end in any::<bool>(),
        ) {
            let n = xs.len().min(tiles.len()).min(orders.len()).min(actions.len()).min(winds.len());
            let vocab = Vocab::default();
            let turns: Vec<_> = (0..n)
                .map(|i| {
                    (
                        Observation {
                            pos: xs[i],
                            neighbors: tiles[i],
                            wind_notice: winds[i].map(Direction::from_index),
                        },
                        orders[i],
                        Direction::from_index(actions[i]),
                    )
                })
                .collect();
            let enc = encode_trajectory(&turns, final_no_end, 4096, &vocab).unwrap();
            prop_assert!(enc.ids.iter().all(|&t| (t as usize) < VOCAB_SIZE));
            let dec = decode_trajectory(&enc.ids, &vocab).unwrap();
            prop_assert_eq!(dec.len(), n);
            for (i, d) in dec.iter().enumerate() {
                prop_assert_eq!(&d.obs, &turns[i].0);
                prop_assert_eq!(d.order, turns[i].1);
                prop_assert_eq!(d.action, Some(turns[i].2));
                prop_assert_eq!(d.closed, !(final_no_end && i + 1 == n));
            }
        }
    }
}
