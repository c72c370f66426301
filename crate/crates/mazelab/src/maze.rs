//! Tile-maze environment: procedural generation, exact step dynamics
//! (per-turn rewards, wind displacement, tile melting) and an exact
//! wind-free planner used to build supervised training data.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, stream};

/// The three tile classes. Snapshot encoding is `Path = 0`, `Mold = 1`,
/// `Gold = 2`; the mapping to prompt symbols is configured in the codec so
/// that tile-swapped controls only permute the symbol table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TileType {
    Path,
    Mold,
    Gold,
}

impl TileType {
    pub fn code(self) -> u8 {
        match self {
            TileType::Path => 0,
            TileType::Mold => 1,
            TileType::Gold => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<TileType> {
        match code {
            0 => Some(TileType::Path),
            1 => Some(TileType::Mold),
            2 => Some(TileType::Gold),
            _ => None,
        }
    }
}

/// Cardinal move directions. North decreases `y`, East increases `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::N => (0, -1),
            Direction::E => (1, 0),
            Direction::S => (0, 1),
            Direction::W => (-1, 0),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::N => Direction::S,
            Direction::E => Direction::W,
            Direction::S => Direction::N,
            Direction::W => Direction::E,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::N => 0,
            Direction::E => 1,
            Direction::S => 2,
            Direction::W => 3,
        }
    }

    pub fn from_index(i: usize) -> Direction {
        Direction::ALL[i]
    }

    pub fn letter(self) -> char {
        match self {
            Direction::N => 'N',
            Direction::E => 'E',
            Direction::S => 'S',
            Direction::W => 'W',
        }
    }
}

/// Per-tile reward constants. A turn's reward is
/// `step + gold * (#Gold entered) + mold * (#Mold entered)`;
/// Path entries carry no term beyond the step cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rewards {
    pub step: f64,
    pub gold: f64,
    pub mold: f64,
}

impl Default for Rewards {
    fn default() -> Self {
        Rewards {
            step: -0.1,
            gold: 20.0,
            mold: -10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MazeConfig {
    /// Full grid side length, border included.
    pub width: usize,
    /// Probability that a move is followed by a wind push.
    pub wind_prob: f64,
    pub rewards: Rewards,
    pub episode_len: usize,
    /// Carving-walk length bounds as multipliers of the interior side length.
    pub walk_len_range: (u64, u64),
    /// Half-open target interval for the interior Mold fraction.
    pub mold_frac_range: (f64, f64),
    /// Gold count as a fraction of the interior Mold count.
    pub gold_frac: f64,
    /// Default generation seed; commands may override it.
    pub seed: u64,
}

impl Default for MazeConfig {
    fn default() -> Self {
        MazeConfig {
            width: 100,
            wind_prob: 0.10,
            rewards: Rewards::default(),
            episode_len: 15,
            walk_len_range: (5, 15),
            mold_frac_range: (0.10, 0.50),
            gold_frac: 0.20,
            seed: 0,
        }
    }
}

impl MazeConfig {
    pub fn validate(&self) -> Result<(), MazeError> {
        if self.width < 7 {
            return Err(MazeError::InvalidConfig(format!(
                "width must be >= 7, got {}",
                self.width
            )));
        }
        if self.episode_len < 1 {
            return Err(MazeError::InvalidConfig("episode_len must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.wind_prob) {
            return Err(MazeError::InvalidConfig(format!(
                "wind_prob must be in [0,1], got {}",
                self.wind_prob
            )));
        }
        let (lo, hi) = self.mold_frac_range;
        if !(lo < hi && hi <= 1.0) {
            return Err(MazeError::InvalidConfig(format!(
                "mold_frac_range must satisfy lower < upper <= 1, got ({lo}, {hi})"
            )));
        }
        if self.walk_len_range.0 > self.walk_len_range.1 || self.walk_len_range.0 == 0 {
            return Err(MazeError::InvalidConfig(format!(
                "walk_len_range must be a nonempty positive range, got {:?}",
                self.walk_len_range
            )));
        }
        Ok(())
    }

    pub fn interior_side(&self) -> usize {
        self.width - 2
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MazeError {
    #[error("invalid maze config: {0}")]
    InvalidConfig(String),
    #[error("move {action:?} from {pos:?} would leave the grid")]
    OutOfBounds { pos: (usize, usize), action: Direction },
    #[error("maze generation failed: {0}")]
    GenerationFailure(String),
}

/// Wind event attached to a step: the reported source and the actual
/// displacement (always opposite the source).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindEvent {
    pub source: Direction,
    pub displacement: Direction,
}

/// Everything that happened during one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: f64,
    /// Tiles in entry order with the class each had *at entry time*
    /// (melting is applied as tiles are vacated, so a wind push back onto
    /// the origin records a Mold entry).
    pub tiles_entered: Vec<((usize, usize), TileType)>,
    pub wind: Option<WindEvent>,
    pub new_pos: (usize, usize),
}

/// Mutable world state for one episode.
#[derive(Debug, Clone)]
pub struct Maze {
    config: MazeConfig,
    seed: u64,
    grid: Vec<TileType>,
    agent: (usize, usize),
    melted: BTreeSet<(usize, usize)>,
    wind_rng: ChaCha8Rng,
}

/// JSON snapshot of the static maze state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MazeSnapshot {
    pub width: usize,
    /// Row-major tile codes, 0 = Path, 1 = Mold, 2 = Gold.
    pub grid: Vec<u8>,
    pub agent: (usize, usize),
    pub seed: u64,
}

impl Maze {
    /// Generates a fresh maze. Deterministic in `(config, seed)`.
    ///
    /// The interior starts all-Mold; a random walk carves Path; the Mold
    /// fraction is rebalanced into the configured interval; Gold is placed
    /// on `max(1, floor(gold_frac * interior_mold))` Path cells; the agent
    /// starts on the Path cell nearest the grid center in BFS order.
    pub fn generate(config: &MazeConfig, seed: u64) -> Result<Maze, MazeError> {
        config.validate()?;
        let w = config.width;
        let side = config.interior_side();
        let mut rng = rng::stream_rng(seed, stream::MAZE_GEN);

        let mut grid = vec![TileType::Mold; w * w];

        // Carving walk over the interior.
        let start_x = rng.gen_range(1..w - 1);
        let start_y = rng.gen_range(1..w - 1);
        let walk_len = rng.gen_range(
            config.walk_len_range.0 * side as u64..=config.walk_len_range.1 * side as u64,
        );
        let mut cur = (start_x, start_y);
        grid[start_y * w + start_x] = TileType::Path;
        for _ in 0..walk_len {
            let mut options = [Direction::N; 4];
            let mut n_opts = 0;
            for dir in Direction::ALL {
                let (dx, dy) = dir.delta();
                let nx = cur.0 as i64 + dx;
                let ny = cur.1 as i64 + dy;
                if nx >= 1 && ny >= 1 && nx <= (w - 2) as i64 && ny <= (w - 2) as i64 {
                    options[n_opts] = dir;
                    n_opts += 1;
                }
            }
            let dir = options[rng.gen_range(0..n_opts)];
            let (dx, dy) = dir.delta();
            cur = ((cur.0 as i64 + dx) as usize, (cur.1 as i64 + dy) as usize);
            grid[cur.1 * w + cur.0] = TileType::Path;
        }

        // Rebalance the interior Mold fraction into [lo, hi).
        let interior_cells = side * side;
        let mut mold_cells: Vec<(usize, usize)> = Vec::new();
        for y in 1..w - 1 {
            for x in 1..w - 1 {
                if grid[y * w + x] == TileType::Mold {
                    mold_cells.push((x, y));
                }
            }
        }
        let upper = config.mold_frac_range.1;
        while !mold_cells.is_empty()
            && mold_cells.len() as f64 / interior_cells as f64 >= upper
        {
            let idx = rng.gen_range(0..mold_cells.len());
            let (x, y) = mold_cells.swap_remove(idx);
            grid[y * w + x] = TileType::Path;
        }
        let interior_mold = mold_cells.len();

        // Place Gold on uniformly chosen distinct Path cells.
        let mut path_cells: Vec<(usize, usize)> = Vec::new();
        for y in 1..w - 1 {
            for x in 1..w - 1 {
                if grid[y * w + x] == TileType::Path {
                    path_cells.push((x, y));
                }
            }
        }
        if path_cells.is_empty() {
            return Err(MazeError::GenerationFailure(
                "no Path cell exists after carving".into(),
            ));
        }
        let gold_count = ((config.gold_frac * interior_mold as f64).floor() as usize).max(1);
        if gold_count >= path_cells.len() {
            return Err(MazeError::GenerationFailure(format!(
                "gold count {gold_count} would consume all {} Path cells",
                path_cells.len()
            )));
        }
        for k in 0..gold_count {
            let idx = rng.gen_range(k..path_cells.len());
            path_cells.swap(k, idx);
            let (x, y) = path_cells[k];
            grid[y * w + x] = TileType::Gold;
        }

        // Start: first Path cell in BFS order from the grid center.
        let center = (w / 2, w / 2);
        let mut agent = None;
        let mut seen = vec![false; w * w];
        let mut queue = VecDeque::new();
        queue.push_back(center);
        seen[center.1 * w + center.0] = true;
        while let Some((x, y)) = queue.pop_front() {
            if grid[y * w + x] == TileType::Path {
                agent = Some((x, y));
                break;
            }
            for dir in Direction::ALL {
                let (dx, dy) = dir.delta();
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < w {
                    let ni = ny as usize * w + nx as usize;
                    if !seen[ni] {
                        seen[ni] = true;
                        queue.push_back((nx as usize, ny as usize));
                    }
                }
            }
        }
        let agent = agent.ok_or_else(|| {
            MazeError::GenerationFailure("no Path cell reachable from grid center".into())
        })?;

        Ok(Maze {
            config: config.clone(),
            seed,
            grid,
            agent,
            melted: BTreeSet::new(),
            wind_rng: rng::stream_rng(seed, stream::WIND),
        })
    }

    /// Builds a maze directly from explicit tiles; cells not listed stay
    /// Mold. Used by replay tests and snapshot loading.
    pub fn from_tiles(
        config: &MazeConfig,
        seed: u64,
        tiles: &[((usize, usize), TileType)],
        agent: (usize, usize),
    ) -> Result<Maze, MazeError> {
        config.validate()?;
        let w = config.width;
        let mut grid = vec![TileType::Mold; w * w];
        for &((x, y), t) in tiles {
            grid[y * w + x] = t;
        }
        Ok(Maze {
            config: config.clone(),
            seed,
            grid,
            agent,
            melted: BTreeSet::new(),
            wind_rng: rng::stream_rng(seed, stream::WIND),
        })
    }

    pub fn config(&self) -> &MazeConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn agent(&self) -> (usize, usize) {
        self.agent
    }

    pub fn tile(&self, x: usize, y: usize) -> TileType {
        self.grid[y * self.config.width + x]
    }

    pub fn melted(&self) -> &BTreeSet<(usize, usize)> {
        &self.melted
    }

    /// The four neighbor tiles in N, E, S, W order. Cells outside the grid
    /// read as Mold, matching the all-Mold border.
    pub fn neighbors(&self) -> [TileType; 4] {
        let w = self.config.width as i64;
        let mut out = [TileType::Mold; 4];
        for (i, dir) in Direction::ALL.iter().enumerate() {
            let (dx, dy) = dir.delta();
            let nx = self.agent.0 as i64 + dx;
            let ny = self.agent.1 as i64 + dy;
            if nx >= 0 && ny >= 0 && nx < w && ny < w {
                out[i] = self.grid[ny as usize * w as usize + nx as usize];
            }
        }
        out
    }

    fn melt(&mut self, cell: (usize, usize)) {
        self.grid[cell.1 * self.config.width + cell.0] = TileType::Mold;
        self.melted.insert(cell);
    }

    fn target_of(&self, pos: (usize, usize), dir: Direction) -> Result<(usize, usize), MazeError> {
        let (dx, dy) = dir.delta();
        let nx = pos.0 as i64 + dx;
        let ny = pos.1 as i64 + dy;
        let w = self.config.width as i64;
        if nx < 0 || ny < 0 || nx >= w || ny >= w {
            return Err(MazeError::OutOfBounds { pos, action: dir });
        }
        Ok((nx as usize, ny as usize))
    }

    /// One turn with the maze's own wind stream.
    pub fn step(&mut self, action: Direction) -> Result<StepOutcome, MazeError> {
        let wind = if self.wind_rng.gen::<f64>() < self.config.wind_prob {
            Some(Direction::from_index(self.wind_rng.gen_range(0..4)))
        } else {
            None
        };
        self.step_with_wind(action, wind)
    }

    /// One turn with an explicit wind displacement (`None` = no wind).
    /// The chosen move resolves first; the wind then pushes one tile
    /// further. Every vacated tile melts to Mold, and both entered tiles
    /// count toward the turn reward. A wind push that would leave the grid
    /// is blocked by the edge and recorded as no wind; a chosen move that
    /// would leave the grid is an error.
    pub fn step_with_wind(
        &mut self,
        action: Direction,
        wind_displacement: Option<Direction>,
    ) -> Result<StepOutcome, MazeError> {
        let first = self.target_of(self.agent, action)?;
        let mut tiles_entered = Vec::with_capacity(2);

        self.melt(self.agent);
        tiles_entered.push((first, self.tile(first.0, first.1)));
        self.agent = first;

        let wind = if let Some(push) = wind_displacement {
            match self.target_of(self.agent, push) {
                Ok(second) => {
                    self.melt(self.agent);
                    tiles_entered.push((second, self.tile(second.0, second.1)));
                    self.agent = second;
                    Some(WindEvent {
                        source: push.opposite(),
                        displacement: push,
                    })
                }
                Err(_) => None,
            }
        } else {
            None
        };

        let r = &self.config.rewards;
        let mut reward = r.step;
        for &(_, t) in &tiles_entered {
            reward += match t {
                TileType::Gold => r.gold,
                TileType::Mold => r.mold,
                TileType::Path => 0.0,
            };
        }

        Ok(StepOutcome {
            reward,
            tiles_entered,
            wind,
            new_pos: self.agent,
        })
    }

    pub fn snapshot(&self) -> MazeSnapshot {
        MazeSnapshot {
            width: self.config.width,
            grid: self.grid.iter().map(|t| t.code()).collect(),
            agent: self.agent,
            seed: self.seed,
        }
    }

    pub fn from_snapshot(config: &MazeConfig, snap: &MazeSnapshot) -> Result<Maze, MazeError> {
        if snap.width != config.width || snap.grid.len() != snap.width * snap.width {
            return Err(MazeError::InvalidConfig(
                "snapshot dimensions do not match config".into(),
            ));
        }
        let grid = snap
            .grid
            .iter()
            .map(|&c| {
                TileType::from_code(c)
                    .ok_or_else(|| MazeError::InvalidConfig(format!("bad tile code {c}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Maze {
            config: config.clone(),
            seed: snap.seed,
            grid,
            agent: snap.agent,
            melted: BTreeSet::new(),
            wind_rng: rng::stream_rng(snap.seed, stream::WIND),
        })
    }
}

/// Whether a move from `pos` in `dir` stays inside a `width`-wide grid.
pub fn move_in_grid(width: usize, pos: (usize, usize), dir: Direction) -> bool {
    let (dx, dy) = dir.delta();
    let nx = pos.0 as i64 + dx;
    let ny = pos.1 as i64 + dy;
    nx >= 0 && ny >= 0 && nx < width as i64 && ny < width as i64
}

/// The valid-action mask at a position: directions whose immediate
/// destination stays inside the grid. Only small grids ever mask anything;
/// at the default sizing every move is valid.
pub fn valid_moves(width: usize, pos: (usize, usize)) -> [bool; 4] {
    [
        move_in_grid(width, pos, Direction::N),
        move_in_grid(width, pos, Direction::E),
        move_in_grid(width, pos, Direction::S),
        move_in_grid(width, pos, Direction::W),
    ]
}

/// Exact wind-free planner: maximizes `(gold entries, -mold entries)`
/// lexicographically over all action sequences of length `len`, with tile
/// melting applied. Depth-first branch and bound with memoization on
/// `(position, melted-set fingerprint, steps left)` and an admissible bound
/// of one Gold entry per remaining step.
pub fn optimal_trajectory(maze: &Maze, len: usize) -> Vec<Direction> {
    let mut search = PlanSearch::new(maze);
    let mut plan = Vec::with_capacity(len);
    // Re-derive the move sequence by replaying the memoized first moves.
    let mut pos = maze.agent;
    for steps_left in (1..=len).rev() {
        let (_, _, dir) = search.solve(pos, steps_left);
        let dir = dir.expect("a move always exists on an interior cell");
        search.apply(&mut pos, dir);
        plan.push(dir);
    }
    plan
}

struct PlanSearch {
    width: usize,
    grid: Vec<TileType>,
    golds: Vec<(usize, usize)>,
    zobrist_keys: HashMap<(usize, usize), u64>,
    zobrist: u64,
    memo: HashMap<(usize, usize, usize, u64), (u32, u32, Option<Direction>)>,
}

impl PlanSearch {
    fn new(maze: &Maze) -> PlanSearch {
        let width = maze.config.width;
        let mut golds = Vec::new();
        for y in 0..width {
            for x in 0..width {
                if maze.grid[y * width + x] == TileType::Gold {
                    golds.push((x, y));
                }
            }
        }
        PlanSearch {
            width,
            grid: maze.grid.clone(),
            golds,
            zobrist_keys: HashMap::new(),
            zobrist: 0,
            memo: HashMap::new(),
        }
    }

    fn key(&mut self, cell: (usize, usize)) -> u64 {
        let w = self.width as u64;
        *self
            .zobrist_keys
            .entry(cell)
            .or_insert_with(|| rng::mix(0x6d61_7a65, cell.1 as u64 * w + cell.0 as u64))
    }

    fn melt(&mut self, cell: (usize, usize)) -> TileType {
        let prev = self.grid[cell.1 * self.width + cell.0];
        if prev != TileType::Mold {
            self.grid[cell.1 * self.width + cell.0] = TileType::Mold;
            self.zobrist ^= self.key(cell);
        }
        prev
    }

    fn unmelt(&mut self, cell: (usize, usize), prev: TileType) {
        if prev != TileType::Mold {
            self.grid[cell.1 * self.width + cell.0] = prev;
            self.zobrist ^= self.key(cell);
        }
    }

    fn in_grid(&self, pos: (usize, usize), dir: Direction) -> Option<(usize, usize)> {
        let (dx, dy) = dir.delta();
        let nx = pos.0 as i64 + dx;
        let ny = pos.1 as i64 + dy;
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.width as i64 {
            None
        } else {
            Some((nx as usize, ny as usize))
        }
    }

    /// Upper bound on further Gold entries: unconsumed Gold within
    /// `steps_left` Manhattan distance, capped at one per step.
    fn gold_bound(&self, pos: (usize, usize), steps_left: usize) -> u32 {
        let mut reachable = 0u32;
        for &(gx, gy) in &self.golds {
            if self.grid[gy * self.width + gx] == TileType::Gold {
                let dist = gx.abs_diff(pos.0) + gy.abs_diff(pos.1);
                if dist <= steps_left {
                    reachable += 1;
                }
            }
        }
        reachable.min(steps_left as u32)
    }

    fn apply(&mut self, pos: &mut (usize, usize), dir: Direction) {
        let next = self.in_grid(*pos, dir).expect("replayed move stays in grid");
        self.melt(*pos);
        self.melt(next); // entering consumes the tile for future purposes
        *pos = next;
    }

    /// Exact best `(gold, mold)` achievable from this state, plus the first
    /// move of one optimal continuation.
    fn solve(&mut self, pos: (usize, usize), steps_left: usize) -> (u32, u32, Option<Direction>) {
        if steps_left == 0 {
            return (0, 0, None);
        }
        let memo_key = (pos.0, pos.1, steps_left, self.zobrist);
        if let Some(&hit) = self.memo.get(&memo_key) {
            return hit;
        }

        // Order moves Gold, Path, Mold so a good incumbent appears early.
        let mut moves: Vec<(u8, Direction, (usize, usize), TileType)> = Vec::with_capacity(4);
        for dir in Direction::ALL {
            if let Some(next) = self.in_grid(pos, dir) {
                let t = self.grid[next.1 * self.width + next.0];
                let rank = match t {
                    TileType::Gold => 0,
                    TileType::Path => 1,
                    TileType::Mold => 2,
                };
                moves.push((rank, dir, next, t));
            }
        }
        moves.sort_by_key(|&(rank, dir, _, _)| (rank, dir.index()));

        let mut best: Option<(u32, u32, Direction)> = None;
        for (_, dir, next, entered) in moves {
            let (eg, em) = match entered {
                TileType::Gold => (1u32, 0u32),
                TileType::Mold => (0, 1),
                TileType::Path => (0, 0),
            };
            if let Some((bg, bm, _)) = best {
                // Admissible bound: gold still reachable after this move;
                // mold along the branch can only grow past what the move
                // already entered.
                let ub_gold = eg + self.gold_bound(next, steps_left - 1);
                if !(ub_gold > bg || (ub_gold == bg && em < bm)) {
                    continue;
                }
            }
            let prev_cur = self.melt(pos);
            let prev_next = self.melt(next);
            let (g, m, _) = self.solve(next, steps_left - 1);
            self.unmelt(next, prev_next);
            self.unmelt(pos, prev_cur);
            let cand = (g + eg, m + em);
            let improves = match best {
                None => true,
                Some((bg, bm, _)) => cand.0 > bg || (cand.0 == bg && cand.1 < bm),
            };
            if improves {
                best = Some((cand.0, cand.1, dir));
            }
        }

        let out = match best {
            Some((g, m, d)) => (g, m, Some(d)),
            None => (0, 0, None),
        };
        self.memo.insert(memo_key, out);
        out
    }
}

/// The planner's objective value for a plan, recomputed by replaying it
/// wind-free on a copy of the maze.
pub fn plan_value(maze: &Maze, plan: &[Direction]) -> (u32, u32) {
    let mut m = maze.clone();
    let mut gold = 0;
    let mut mold = 0;
    for &dir in plan {
        let out = m.step_with_wind(dir, None).expect("plan stays in grid");
        for &(_, t) in &out.tiles_entered {
            match t {
                TileType::Gold => gold += 1,
                TileType::Mold => mold += 1,
                TileType::Path => {}
            }
        }
    }
    (gold, mold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_interior(maze: &Maze, t: TileType) -> usize {
        let w = maze.width();
        let mut n = 0;
        for y in 1..w - 1 {
            for x in 1..w - 1 {
                if maze.tile(x, y) == t {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn border_is_all_mold() {
        let cfg = MazeConfig::default();
        let maze = Maze::generate(&cfg, 1234).unwrap();
        let w = maze.width();
        let mut border_cells = 0;
        for y in 0..w {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == w - 1 {
                    assert_eq!(maze.tile(x, y), TileType::Mold, "border cell ({x},{y})");
                    border_cells += 1;
                }
            }
        }
        assert_eq!(border_cells, 4 * w - 4); // 396 at width 100
        assert_eq!(border_cells, 396);
    }

    #[test]
    fn minimal_grid_has_path_and_start() {
        let cfg = MazeConfig {
            width: 7,
            walk_len_range: (1, 1),
            ..MazeConfig::default()
        };
        for seed in 0..20 {
            let maze = Maze::generate(&cfg, seed).unwrap();
            let n_path = count_interior(&maze, TileType::Path);
            let n_gold = count_interior(&maze, TileType::Gold);
            assert!(n_path + n_gold >= 5, "seed {seed}: {} walkable cells", n_path + n_gold);
            let (x, y) = maze.agent();
            assert_eq!(maze.tile(x, y), TileType::Path);
            assert!(x >= 1 && y >= 1 && x <= 5 && y <= 5);
        }
    }

    #[test]
    fn generation_invariants_hold_on_recount() {
        let cfg = MazeConfig::default();
        for seed in 0..25 {
            let maze = Maze::generate(&cfg, seed).unwrap();
            let side = cfg.interior_side();
            let n_mold = count_interior(&maze, TileType::Mold);
            let n_gold = count_interior(&maze, TileType::Gold);
            let frac = n_mold as f64 / (side * side) as f64;
            assert!(
                (0.10..0.50).contains(&frac),
                "seed {seed}: mold fraction {frac}"
            );
            assert_eq!(n_gold, ((0.20 * n_mold as f64).floor() as usize).max(1));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = MazeConfig::default();
        let a = Maze::generate(&cfg, 99).unwrap();
        let b = Maze::generate(&cfg, 99).unwrap();
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.agent, b.agent);
    }

    fn small_open_maze() -> Maze {
        // 7x7, interior all Path except listed cells.
        let cfg = MazeConfig {
            width: 7,
            ..MazeConfig::default()
        };
        let mut tiles = Vec::new();
        for y in 1..6 {
            for x in 1..6 {
                tiles.push(((x, y), TileType::Path));
            }
        }
        Maze::from_tiles(&cfg, 0, &tiles, (3, 3)).unwrap()
    }

    #[test]
    fn step_onto_path_costs_step_reward() {
        let mut maze = small_open_maze();
        let out = maze.step_with_wind(Direction::N, None).unwrap();
        assert_eq!(out.reward, -0.1);
        assert_eq!(out.tiles_entered.len(), 1);
        assert_eq!(out.new_pos, (3, 2));
        assert_eq!(out.tiles_entered[0], ((3, 2), TileType::Path));
    }

    #[test]
    fn step_onto_gold_rewards_nineteen_nine() {
        let mut maze = small_open_maze();
        maze.grid[2 * 7 + 3] = TileType::Gold; // (3,2)
        let out = maze.step_with_wind(Direction::N, None).unwrap();
        assert!((out.reward - 19.9).abs() < 1e-12);
    }

    #[test]
    fn wind_extends_move_and_enters_two_tiles() {
        // Mirror of the worked example: N chosen from (50,47), wind from
        // the East pushes West, landing at (49,46) with two tiles entered.
        let cfg = MazeConfig {
            width: 100,
            ..MazeConfig::default()
        };
        let tiles = vec![
            ((50, 47), TileType::Path),
            ((50, 46), TileType::Path),
            ((49, 46), TileType::Path),
        ];
        let mut maze = Maze::from_tiles(&cfg, 0, &tiles, (50, 47)).unwrap();
        let out = maze.step_with_wind(Direction::N, Some(Direction::W)).unwrap();
        assert_eq!(out.new_pos, (49, 46));
        assert_eq!(out.tiles_entered.len(), 2);
        assert_eq!(out.tiles_entered[0].0, (50, 46));
        assert_eq!(out.tiles_entered[1].0, (49, 46));
        let wind = out.wind.unwrap();
        assert_eq!(wind.source, Direction::E);
        assert_eq!(wind.displacement, Direction::W);
        assert!((out.reward - (-0.1)).abs() < 1e-12);
        // both vacated tiles melted
        assert_eq!(maze.tile(50, 47), TileType::Mold);
        assert_eq!(maze.tile(50, 46), TileType::Mold);
    }

    #[test]
    fn wind_push_back_onto_origin_counts_mold() {
        let mut maze = small_open_maze();
        let origin = maze.agent();
        let out = maze.step_with_wind(Direction::N, Some(Direction::S)).unwrap();
        assert_eq!(out.new_pos, origin);
        assert_eq!(out.tiles_entered[1], (origin, TileType::Mold));
        assert!((out.reward - (-10.1)).abs() < 1e-12);
    }

    #[test]
    fn melted_set_never_shrinks_and_matches_mold() {
        let mut maze = small_open_maze();
        let mut prev_melted = 0;
        let mut rng = crate::rng::stream_rng(3, 77);
        for _ in 0..8 {
            let dir = Direction::from_index(rng.gen_range(0..4));
            let before = maze.agent();
            if maze.step_with_wind(dir, None).is_err() {
                continue;
            }
            assert!(maze.melted().len() >= prev_melted);
            prev_melted = maze.melted().len();
            assert!(maze.melted().contains(&before));
            for &(x, y) in maze.melted() {
                assert_eq!(maze.tile(x, y), TileType::Mold);
            }
        }
    }

    #[test]
    fn out_of_bounds_move_is_an_error() {
        let cfg = MazeConfig {
            width: 7,
            ..MazeConfig::default()
        };
        let mut maze =
            Maze::from_tiles(&cfg, 0, &[((0, 3), TileType::Path)], (0, 3)).unwrap();
        let err = maze.step_with_wind(Direction::W, None).unwrap_err();
        assert!(matches!(err, MazeError::OutOfBounds { .. }));
    }

    #[test]
    fn reward_audit_from_entered_tiles() {
        let cfg = MazeConfig {
            width: 21,
            ..MazeConfig::default()
        };
        for seed in 0..10 {
            let mut maze = Maze::generate(&cfg, seed).unwrap();
            let mut total = 0.0;
            let mut golds = 0;
            let mut molds = 0;
            let mut turns = 0;
            let mut rng = crate::rng::stream_rng(seed, 91);
            for _ in 0..15 {
                let dir = Direction::from_index(rng.gen_range(0..4));
                let out = maze.step(dir).unwrap();
                total += out.reward;
                turns += 1;
                for &(_, t) in &out.tiles_entered {
                    match t {
                        TileType::Gold => golds += 1,
                        TileType::Mold => molds += 1,
                        TileType::Path => {}
                    }
                }
            }
            let r = &cfg.rewards;
            let expect = r.step * turns as f64 + r.gold * golds as f64 + r.mold * molds as f64;
            assert!((total - expect).abs() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn replay_with_same_wind_rolls_is_identical() {
        let cfg = MazeConfig {
            width: 21,
            ..MazeConfig::default()
        };
        let actions: Vec<Direction> = (0..15).map(|i| Direction::from_index(i % 4)).collect();
        let run = |seed| {
            let mut maze = Maze::generate(&cfg, seed).unwrap();
            actions
                .iter()
                .map(|&d| maze.step(d).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn one_step_plan_takes_adjacent_gold() {
        let mut maze = small_open_maze();
        maze.grid[3 * 7 + 4] = TileType::Gold; // (4,3), to the east
        let plan = optimal_trajectory(&maze, 1);
        assert_eq!(plan, vec![Direction::E]);
    }

    #[test]
    fn goldless_plan_enters_no_mold() {
        // Interior all Path, no Gold anywhere reachable: the plan must
        // wander without ever stepping onto (melted or original) Mold.
        let cfg = MazeConfig {
            width: 13,
            episode_len: 8,
            ..MazeConfig::default()
        };
        let mut tiles = Vec::new();
        for y in 1..12 {
            for x in 1..12 {
                tiles.push(((x, y), TileType::Path));
            }
        }
        let maze = Maze::from_tiles(&cfg, 0, &tiles, (6, 6)).unwrap();
        let plan = optimal_trajectory(&maze, 8);
        let (gold, mold) = plan_value(&maze, &plan);
        assert_eq!((gold, mold), (0, 0));
    }

    /// Independent exhaustive check: depth-first over all action sequences
    /// with melt tracking and a plain remaining-steps bound, no memo.
    fn brute_force_best(maze: &Maze, len: usize) -> (u32, u32) {
        fn go(
            grid: &mut Vec<TileType>,
            w: usize,
            pos: (usize, usize),
            left: usize,
            gold: u32,
            mold: u32,
            best: &mut (u32, i64),
        ) {
            if left == 0 {
                let cand = (gold, -(mold as i64));
                if cand > *best {
                    *best = cand;
                }
                return;
            }
            if (gold + left as u32, -(mold as i64)) < *best {
                return;
            }
            for dir in Direction::ALL {
                let (dx, dy) = dir.delta();
                let nx = pos.0 as i64 + dx;
                let ny = pos.1 as i64 + dy;
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= w as i64 {
                    continue;
                }
                let next = (nx as usize, ny as usize);
                let entered = grid[next.1 * w + next.0];
                let prev_cur = grid[pos.1 * w + pos.0];
                let prev_next = entered;
                grid[pos.1 * w + pos.0] = TileType::Mold;
                grid[next.1 * w + next.0] = TileType::Mold;
                let (dg, dm) = match entered {
                    TileType::Gold => (1, 0),
                    TileType::Mold => (0, 1),
                    TileType::Path => (0, 0),
                };
                go(grid, w, next, left - 1, gold + dg, mold + dm, best);
                grid[pos.1 * w + pos.0] = prev_cur;
                grid[next.1 * w + next.0] = prev_next;
            }
        }
        let mut grid = (0..maze.width() * maze.width())
            .map(|i| maze.grid[i])
            .collect::<Vec<_>>();
        let mut best = (0u32, i64::MIN);
        go(
            &mut grid,
            maze.width(),
            maze.agent(),
            len,
            0,
            0,
            &mut best,
        );
        (best.0, (-best.1) as u32)
    }

    #[test]
    fn planner_matches_exhaustive_search() {
        let cfg = MazeConfig {
            width: 21,
            ..MazeConfig::default()
        };
        for seed in 0..12 {
            let maze = Maze::generate(&cfg, 1000 + seed).unwrap();
            let plan = optimal_trajectory(&maze, 9);
            let got = plan_value(&maze, &plan);
            let want = brute_force_best(&maze, 9);
            assert_eq!(got, want, "seed {seed}");
        }
    }
}
