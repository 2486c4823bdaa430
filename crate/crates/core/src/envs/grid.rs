//! Two-agent Stag Hunt on a 9×9 grid.
//!
//! Layout: spawn points at (4,0) and (4,8), stags in the four corners, hares
//! directly above and below each spawn point. Agents pick up a resource by
//! walking onto it; stepping onto the other resource type swaps, leaving the
//! old resource on that tile. An interaction resolves when at least one agent
//! chooses `Interact` while the agents are within Manhattan distance 1 and
//! both carry something. Payoffs follow the matrix game: (4,4) for two stags,
//! (2,2) for two hares, and 0 to a stag-holder facing a hare-holder, who gets
//! 2. Afterwards both agents respawn at random spawn points with empty hands
//! and the resource layout is restored.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EnvError, EnvSpec, MarkovGame, Step};
use crate::linear_fa::{normalize_features, probe_scale, FeatureMap};

pub const GRID_SIZE: usize = 9;
pub const GRID_OBS_DIM: usize = 15;
pub const GRID_FEATURE_DIM: usize = 200;

const ACTIONS: usize = 6;
const EGO_DIM: usize = 6;
const AFTER_DIM: usize = 6;
const SPAWNS: [(u8, u8); 2] = [(4, 0), (4, 8)];
const STAGS: [(u8, u8); 4] = [(0, 0), (0, 8), (8, 0), (8, 8)];
const HARES: [(u8, u8); 4] = [(3, 0), (5, 0), (3, 8), (5, 8)];
const MAX_DISTANCE: f64 = 2.0 * (GRID_SIZE as f64 - 1.0);

// offsets into φ
const OFF_A0: usize = GRID_OBS_DIM;
const OFF_A1: usize = OFF_A0 + ACTIONS;
const OFF_EGO0: usize = OFF_A1 + ACTIONS;
const OFF_EGO1: usize = OFF_EGO0 + EGO_DIM * ACTIONS;
const OFF_PAIR: usize = OFF_EGO1 + EGO_DIM * ACTIONS;
const OFF_INTERACT: usize = OFF_PAIR + ACTIONS * ACTIONS;
const OFF_AFTER: usize = OFF_INTERACT + 5;
const OFF_EXTRA: usize = OFF_AFTER + 9 * AFTER_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Resource {
    Stag,
    Hare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Inventory {
    #[default]
    Empty,
    Holding(Resource),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Interaction {
    StagStag,
    HareHare,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridAction {
    North,
    South,
    West,
    East,
    Stay,
    Interact,
}

impl GridAction {
    pub const ALL: [GridAction; ACTIONS] = [
        GridAction::North,
        GridAction::South,
        GridAction::West,
        GridAction::East,
        GridAction::Stay,
        GridAction::Interact,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    /// (row, col) per agent
    pub positions: [(u8, u8); 2],
    pub inventory: [Inventory; 2],
    /// row-major resource occupancy
    pub tiles: Vec<Option<Resource>>,
    pub t: u32,
    /// Outcome of the interaction resolved by the step that produced this
    /// state, if any.
    pub last_interaction: Option<Interaction>,
}

impl GridState {
    pub fn resource_at(&self, pos: (u8, u8)) -> Option<Resource> {
        self.tiles[tile_index(pos)]
    }

    fn nearest(&self, from: (u8, u8), kind: Resource) -> Option<usize> {
        self.tiles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == Some(kind))
            .map(|(i, _)| manhattan(from, ((i / GRID_SIZE) as u8, (i % GRID_SIZE) as u8)))
            .min()
    }

    pub fn adjacent(&self) -> bool {
        manhattan(self.positions[0], self.positions[1]) <= 1
    }

    pub fn both_carrying(&self) -> bool {
        self.inventory.iter().all(|i| *i != Inventory::Empty)
    }

    /// ASCII frame: `S`/`h` resources, `0`/`1` agents (`*` when co-located),
    /// followed by a status line.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity((GRID_SIZE + 1) * (GRID_SIZE + 2) + 64);
        for r in 0..GRID_SIZE as u8 {
            for c in 0..GRID_SIZE as u8 {
                let here: Vec<usize> = (0..2).filter(|&i| self.positions[i] == (r, c)).collect();
                let ch = match (here.as_slice(), self.resource_at((r, c))) {
                    ([_, _], _) => '*',
                    ([i], _) => char::from(b'0' + *i as u8),
                    (_, Some(Resource::Stag)) => 'S',
                    (_, Some(Resource::Hare)) => 'h',
                    _ => '.',
                };
                out.push(ch);
            }
            out.push('\n');
        }
        let inv = |i: Inventory| match i {
            Inventory::Empty => "-",
            Inventory::Holding(Resource::Stag) => "stag",
            Inventory::Holding(Resource::Hare) => "hare",
        };
        out.push_str(&format!(
            "t={} inv=({}, {})",
            self.t,
            inv(self.inventory[0]),
            inv(self.inventory[1])
        ));
        if let Some(i) = self.last_interaction {
            out.push_str(&format!(" interaction={i:?}"));
        }
        out.push('\n');
        out
    }
}

fn tile_index((r, c): (u8, u8)) -> usize {
    r as usize * GRID_SIZE + c as usize
}

fn inventory_code(i: Inventory) -> usize {
    match i {
        Inventory::Empty => 0,
        Inventory::Holding(Resource::Stag) => 1,
        Inventory::Holding(Resource::Hare) => 2,
    }
}

fn manhattan(a: (u8, u8), b: (u8, u8)) -> usize {
    (a.0 as isize - b.0 as isize).unsigned_abs() + (a.1 as isize - b.1 as isize).unsigned_abs()
}

fn initial_tiles() -> Vec<Option<Resource>> {
    let mut tiles = vec![None; GRID_SIZE * GRID_SIZE];
    for &p in &STAGS {
        tiles[tile_index(p)] = Some(Resource::Stag);
    }
    for &p in &HARES {
        tiles[tile_index(p)] = Some(Resource::Hare);
    }
    tiles
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub horizon: usize,
    /// Assign the two spawn points to the agents in uniformly random order;
    /// otherwise agent i always uses spawn point i.
    pub random_spawn: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            horizon: 75,
            random_spawn: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicStagHunt {
    config: GridConfig,
    spec: EnvSpec,
    feature_scale: f64,
}

impl DynamicStagHunt {
    pub fn new(config: GridConfig) -> Result<Self, EnvError> {
        if config.horizon == 0 {
            return Err(EnvError::Construction("horizon must be positive".into()));
        }
        let spec = EnvSpec {
            name: "dynamic_stag_hunt".into(),
            action_counts: vec![ACTIONS, ACTIONS],
            horizon: config.horizon,
            feature_dim: GRID_FEATURE_DIM,
            reward_range: (0.0, 4.0),
            generative: false,
        };
        let mut env = Self {
            config,
            spec,
            feature_scale: 1.0,
        };
        env.feature_scale = env.probe_feature_scale();
        Ok(env)
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    /// Max raw feature norm over a fixed probe set of random states and all
    /// joint actions.
    fn probe_feature_scale(&self) -> f64 {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        let mut probes = Vec::new();
        let mut phi = vec![0.0; GRID_FEATURE_DIM];
        for _ in 0..512 {
            let s = self.random_state(&mut rng);
            for a0 in 0..ACTIONS {
                for a1 in 0..ACTIONS {
                    self.raw_features(&s, [a0, a1], &mut phi);
                    probes.push(phi.clone());
                }
            }
        }
        probe_scale(probes.iter().map(|v| v.as_slice()))
    }

    /// A random state with arbitrary positions, inventories, and time, for
    /// probing features.
    pub fn random_state<R: Rng + ?Sized>(&self, rng: &mut R) -> GridState {
        let mut s = GridState {
            positions: [(0, 0); 2],
            inventory: [Inventory::Empty; 2],
            tiles: initial_tiles(),
            t: rng.gen_range(0..self.config.horizon as u32),
            last_interaction: None,
        };
        for i in 0..2 {
            s.positions[i] = (rng.gen_range(0..GRID_SIZE as u8), rng.gen_range(0..GRID_SIZE as u8));
            s.inventory[i] = match rng.gen_range(0..3) {
                0 => Inventory::Empty,
                1 => Inventory::Holding(Resource::Stag),
                _ => Inventory::Holding(Resource::Hare),
            };
        }
        for tile in s.tiles.iter_mut() {
            if tile.is_some() && rng.gen_bool(0.3) {
                *tile = None;
            }
        }
        s
    }

    /// The 15-dimensional observation: positions (4), distances to the
    /// nearest stag and hare per agent (4), inventory indicators (4, empty
    /// hands being all-zero), inter-agent distance, elapsed fraction, bias.
    pub fn observation(&self, s: &GridState) -> [f64; GRID_OBS_DIM] {
        let g = (GRID_SIZE - 1) as f64;
        let dist = |i: usize, kind| s.nearest(s.positions[i], kind).map_or(1.0, |d| d as f64 / MAX_DISTANCE);
        let holds = |i: usize, kind| (s.inventory[i] == Inventory::Holding(kind)) as u8 as f64;
        [
            s.positions[0].0 as f64 / g,
            s.positions[0].1 as f64 / g,
            s.positions[1].0 as f64 / g,
            s.positions[1].1 as f64 / g,
            dist(0, Resource::Stag),
            dist(0, Resource::Hare),
            dist(1, Resource::Stag),
            dist(1, Resource::Hare),
            holds(0, Resource::Stag),
            holds(0, Resource::Hare),
            holds(1, Resource::Stag),
            holds(1, Resource::Hare),
            manhattan(s.positions[0], s.positions[1]) as f64 / MAX_DISTANCE,
            s.t as f64 / self.config.horizon as f64,
            1.0,
        ]
    }

    /// Observation components seen from agent `i`: own and partner
    /// position, own distances to the nearest stag and hare.
    fn ego(obs: &[f64; GRID_OBS_DIM], i: usize) -> [f64; EGO_DIM] {
        let (own, other) = if i == 0 { (0, 1) } else { (1, 0) };
        [
            obs[2 * own],
            obs[2 * own + 1],
            obs[2 * other],
            obs[2 * other + 1],
            obs[4 + 2 * own],
            obs[5 + 2 * own],
        ]
    }

    /// Unnormalized φ: observation, one-hot actions, per-agent
    /// observation-action products, joint-action one-hot, interaction
    /// indicators (ready, and the resolved outcome by inventory pair), and
    /// features of the afterstate the joint action leads to when no
    /// interaction resolves: its inventory pair, one-hot, times separation
    /// and resource distances.
    fn raw_features(&self, s: &GridState, joint: [usize; 2], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let obs = self.observation(s);
        out[..GRID_OBS_DIM].copy_from_slice(&obs);
        out[OFF_A0 + joint[0]] = 1.0;
        out[OFF_A1 + joint[1]] = 1.0;
        for (i, off) in [(0, OFF_EGO0), (1, OFF_EGO1)] {
            for (k, &e) in Self::ego(&obs, i).iter().enumerate() {
                out[off + k * ACTIONS + joint[i]] = e;
            }
        }
        out[OFF_PAIR + joint[0] * ACTIONS + joint[1]] = 1.0;
        let ready = s.adjacent() && s.both_carrying();
        let interact = GridAction::Interact.index();
        let wants = joint[0] == interact || joint[1] == interact;
        if ready {
            out[OFF_INTERACT] = 1.0;
            if wants {
                let slot = match (s.inventory[0], s.inventory[1]) {
                    (Inventory::Holding(Resource::Stag), Inventory::Holding(Resource::Stag)) => 1,
                    (Inventory::Holding(Resource::Hare), Inventory::Holding(Resource::Hare)) => 2,
                    (Inventory::Holding(Resource::Stag), _) => 3,
                    _ => 4,
                };
                out[OFF_INTERACT + slot] = 1.0;
                return;
            }
        } else if wants {
            out[OFF_EXTRA + 5] = 1.0;
        }
        let next = Self::afterstate(s, joint);
        let pair = inventory_code(next.inventory[0]) * 3 + inventory_code(next.inventory[1]);
        let dist = |i: usize, kind| next.nearest(next.positions[i], kind).map_or(1.0, |d| d as f64 / MAX_DISTANCE);
        let sep = manhattan(next.positions[0], next.positions[1]) as f64 / MAX_DISTANCE;
        let block = [
            1.0,
            sep,
            dist(0, Resource::Stag),
            dist(0, Resource::Hare),
            dist(1, Resource::Stag),
            dist(1, Resource::Hare),
        ];
        out[OFF_AFTER + pair * AFTER_DIM..OFF_AFTER + (pair + 1) * AFTER_DIM].copy_from_slice(&block);
        if next.adjacent() && next.both_carrying() {
            out[OFF_EXTRA] = 1.0;
        }
        let elapsed = s.t as f64 / self.config.horizon as f64;
        let carrying_pair = match (next.inventory[0], next.inventory[1]) {
            (Inventory::Holding(Resource::Stag), Inventory::Holding(Resource::Stag)) => Some(1),
            (Inventory::Holding(Resource::Hare), Inventory::Holding(Resource::Hare)) => Some(2),
            (Inventory::Holding(Resource::Stag), Inventory::Holding(_)) => Some(3),
            (Inventory::Holding(_), Inventory::Holding(_)) => Some(4),
            _ => None,
        };
        if let Some(k) = carrying_pair {
            out[OFF_EXTRA + k] = elapsed;
        }
    }

    /// Positions and inventories after `joint` moves (agent 0 picks up
    /// first), ignoring interactions.
    fn afterstate(s: &GridState, joint: [usize; 2]) -> GridState {
        let mut next = s.clone();
        for i in 0..2 {
            let a = GridAction::from_index(joint[i]).expect("valid action");
            next.positions[i] = Self::moved(s.positions[i], a);
        }
        for i in 0..2 {
            Self::pick_up(&mut next, i);
        }
        next
    }

    fn spawn<R: Rng + ?Sized>(&self, rng: &mut R) -> [(u8, u8); 2] {
        if self.config.random_spawn && rng.gen_bool(0.5) {
            [SPAWNS[1], SPAWNS[0]]
        } else {
            SPAWNS
        }
    }

    fn resolve(s: &GridState) -> (Interaction, [f64; 2]) {
        match (s.inventory[0], s.inventory[1]) {
            (Inventory::Holding(Resource::Stag), Inventory::Holding(Resource::Stag)) => {
                (Interaction::StagStag, [4.0, 4.0])
            }
            (Inventory::Holding(Resource::Hare), Inventory::Holding(Resource::Hare)) => {
                (Interaction::HareHare, [2.0, 2.0])
            }
            (Inventory::Holding(Resource::Stag), _) => (Interaction::Mixed, [0.0, 2.0]),
            _ => (Interaction::Mixed, [2.0, 0.0]),
        }
    }

    fn moved((r, c): (u8, u8), a: GridAction) -> (u8, u8) {
        let max = GRID_SIZE as u8 - 1;
        match a {
            GridAction::North => (r.saturating_sub(1), c),
            GridAction::South => ((r + 1).min(max), c),
            GridAction::West => (r, c.saturating_sub(1)),
            GridAction::East => (r, (c + 1).min(max)),
            GridAction::Stay | GridAction::Interact => (r, c),
        }
    }

    fn pick_up(s: &mut GridState, agent: usize) {
        let idx = tile_index(s.positions[agent]);
        let Some(found) = s.tiles[idx] else {
            return;
        };
        match s.inventory[agent] {
            Inventory::Empty => {
                s.inventory[agent] = Inventory::Holding(found);
                s.tiles[idx] = None;
            }
            Inventory::Holding(held) if held != found => {
                s.inventory[agent] = Inventory::Holding(found);
                s.tiles[idx] = Some(held);
            }
            Inventory::Holding(_) => {}
        }
    }
}

impl FeatureMap for DynamicStagHunt {
    type State = GridState;

    fn dim(&self) -> usize {
        GRID_FEATURE_DIM
    }

    fn evaluate(&self, state: &GridState, joint: &[usize], _h: usize, out: &mut [f64]) {
        self.raw_features(state, [joint[0], joint[1]], out);
        normalize_features(out, self.feature_scale);
    }
}

impl MarkovGame for DynamicStagHunt {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> GridState {
        GridState {
            positions: self.spawn(rng),
            inventory: [Inventory::Empty; 2],
            tiles: initial_tiles(),
            t: 0,
            last_interaction: None,
        }
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &GridState,
        joint: &[usize],
        h: usize,
        rng: &mut R,
    ) -> Result<Step<GridState>, EnvError> {
        self.spec.check_joint(joint)?;
        self.spec.check_stage(h)?;
        let actions = [
            GridAction::from_index(joint[0]).expect("checked"),
            GridAction::from_index(joint[1]).expect("checked"),
        ];
        let mut next = state.clone();
        next.t = state.t + 1;
        next.last_interaction = None;
        let wants = actions.contains(&GridAction::Interact);
        if wants && state.adjacent() && state.both_carrying() {
            let (outcome, rewards) = Self::resolve(state);
            next.last_interaction = Some(outcome);
            next.inventory = [Inventory::Empty; 2];
            next.tiles = initial_tiles();
            next.positions = self.spawn(rng);
            return Ok(Step {
                rewards: rewards.to_vec(),
                next,
            });
        }
        for i in 0..2 {
            next.positions[i] = Self::moved(state.positions[i], actions[i]);
        }
        // simultaneous arrival on one resource: a coin flip decides who is first
        let order = if rng.gen_bool(0.5) { [0, 1] } else { [1, 0] };
        for i in order {
            Self::pick_up(&mut next, i);
        }
        Ok(Step {
            rewards: vec![0.0, 0.0],
            next,
        })
    }
}
