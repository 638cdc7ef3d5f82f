//! Two-role Checkers gridworld.
//!
//! Red and yellow rewards sit in a checkered 3 × C region. Agent A wants red
//! and is penalized for yellow; agent B the reverse. Neither agent can clear
//! the board alone without touching the other color, so the optimum needs
//! each agent to open paths for the other.
//!
//! Coordinates are (row, col) inside the valid 3 × (C + 1) region. The
//! padded grid adds one row above and below and two columns on each side;
//! padding cells are never enterable.

use std::collections::VecDeque;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    one_hot, validate_actions, DecomposedObservation, DecomposedState, GameSpec, InputLayout,
    MultiGoalGame, StepResult,
};

pub const NUM_ACTIONS: usize = 5;
pub const VALID_ROWS: usize = 3;
pub const ROW_PAD: usize = 1;
pub const COL_PAD: usize = 2;
pub const VIEW: usize = 5;
pub const VIEW_CHANNELS: usize = 3;
pub const SELF_VECTOR: usize = 4;
pub const MAX_STEPS: usize = 75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    A,
    B,
}

impl Role {
    pub fn index(self) -> usize {
        match self {
            Role::A => 0,
            Role::B => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Red,
    Yellow,
    Empty,
}

/// Reward for `role` stepping onto a cell holding `content`.
pub fn checkers_reward(role: Role, content: Cell) -> f64 {
    match (role, content) {
        (Role::A, Cell::Red) | (Role::B, Cell::Yellow) => 1.0,
        (Role::A, Cell::Yellow) | (Role::B, Cell::Red) => -0.5,
        (_, Cell::Empty) => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckersConfig {
    pub num_agents: usize,
    /// Width C of the reward region; the full board uses 8.
    pub reward_cols: usize,
    pub horizon: usize,
    pub discount: f64,
}

impl Default for CheckersConfig {
    fn default() -> Self {
        Self {
            num_agents: 2,
            reward_cols: 8,
            horizon: MAX_STEPS,
            discount: 0.99,
        }
    }
}

impl CheckersConfig {
    /// The 3 × 4 board used for quick experiments.
    pub fn shrunk() -> Self {
        Self {
            reward_cols: 4,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckersAssignment {
    pub roles: Vec<Role>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    pub row: usize,
    pub col: usize,
    pub red: usize,
    pub yellow: usize,
    pub prev_action: usize,
}

#[derive(Debug, Clone)]
pub struct CheckersWorld {
    config: CheckersConfig,
    spec: GameSpec,
    board: Vec<Cell>,
    agents: Vec<Piece>,
    roles: Vec<Role>,
    goals: Vec<Vec<f64>>,
    t: usize,
}

fn initial_board(cols: usize) -> Vec<Cell> {
    let width = cols + 1;
    (0..VALID_ROWS * width)
        .map(|i| {
            let (r, c) = (i / width, i % width);
            if c >= cols {
                Cell::Empty
            } else if (r + c) % 2 == 0 {
                Cell::Red
            } else {
                Cell::Yellow
            }
        })
        .collect()
}

fn start_position(role: Role, cols: usize) -> (usize, usize) {
    match role {
        Role::A => (0, cols),
        Role::B => (VALID_ROWS - 1, cols),
    }
}

fn move_target(row: usize, col: usize, action: usize) -> (isize, isize) {
    let (r, c) = (row as isize, col as isize);
    match action {
        1 => (r - 1, c),
        2 => (r + 1, c),
        3 => (r, c - 1),
        4 => (r, c + 1),
        _ => (r, c),
    }
}

impl CheckersWorld {
    pub fn new(config: CheckersConfig) -> Result<Self> {
        if config.num_agents == 0 || config.num_agents > 2 {
            return Err(Error::InvalidArgument(format!(
                "checkers supports one or two agents, got {}",
                config.num_agents
            )));
        }
        if config.reward_cols == 0 {
            return Err(Error::InvalidArgument("reward region needs at least one column".into()));
        }
        let n = config.num_agents;
        let spec = GameSpec {
            num_agents: n,
            action_sizes: vec![NUM_ACTIONS; n],
            discount: config.discount,
            horizon: config.horizon,
            goal_dim: 2,
        };
        let roles: Vec<Role> = [Role::A, Role::B][..n].to_vec();
        let mut world = Self {
            board: initial_board(config.reward_cols),
            agents: Vec::new(),
            goals: Vec::new(),
            roles: Vec::new(),
            t: 0,
            config,
            spec,
        };
        world.place(roles);
        Ok(world)
    }

    fn place(&mut self, roles: Vec<Role>) {
        let cols = self.config.reward_cols;
        self.board = initial_board(cols);
        self.agents = roles
            .iter()
            .map(|&role| {
                let (row, col) = start_position(role, cols);
                Piece {
                    row,
                    col,
                    red: 0,
                    yellow: 0,
                    prev_action: 0,
                }
            })
            .collect();
        self.goals = roles.iter().map(|r| one_hot(r.index(), 2)).collect();
        self.roles = roles;
        self.t = 0;
    }

    pub fn config(&self) -> &CheckersConfig {
        &self.config
    }

    pub fn agents(&self) -> &[Piece] {
        &self.agents
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn valid_cols(&self) -> usize {
        self.config.reward_cols + 1
    }

    pub fn padded_rows(&self) -> usize {
        VALID_ROWS + 2 * ROW_PAD
    }

    pub fn padded_cols(&self) -> usize {
        self.valid_cols() + 2 * COL_PAD
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.board[row * self.valid_cols() + col]
    }

    /// Overwrite one board cell; used by tests.
    pub fn set_cell(&mut self, row: usize, col: usize, content: Cell) {
        let w = self.valid_cols();
        self.board[row * w + col] = content;
    }

    /// Place an agent directly; used by tests.
    pub fn set_position(&mut self, agent: usize, row: usize, col: usize) {
        self.agents[agent].row = row;
        self.agents[agent].col = col;
    }

    pub fn remaining_rewards(&self) -> usize {
        self.board.iter().filter(|&&c| c != Cell::Empty).count()
    }

    /// Highest achievable joint score: every reward collected by the agent it pays +1.
    pub fn optimal_score(&self) -> f64 {
        (VALID_ROWS * self.config.reward_cols) as f64
    }

    fn in_bounds(&self, r: isize, c: isize) -> bool {
        r >= 0 && c >= 0 && (r as usize) < VALID_ROWS && (c as usize) < self.valid_cols()
    }

    fn occupied_by_other(&self, agent: usize, row: usize, col: usize) -> bool {
        self.agents
            .iter()
            .enumerate()
            .any(|(k, p)| k != agent && p.row == row && p.col == col)
    }

    /// s_T: red and yellow one-hot planes over the valid region, channels innermost.
    pub fn board_tensor(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.board.len() * 2);
        for cell in &self.board {
            out.push(if *cell == Cell::Red { 1.0 } else { 0.0 });
            out.push(if *cell == Cell::Yellow { 1.0 } else { 0.0 });
        }
        out
    }

    /// The 5 × 5 × 3 view centered on `agent`: red, yellow, invalid.
    pub fn view_tensor(&self, agent: usize) -> Vec<f64> {
        let me = self.agents[agent];
        let half = (VIEW / 2) as isize;
        let mut out = vec![0.0; VIEW * VIEW * VIEW_CHANNELS];
        for dr in -half..=half {
            for dc in -half..=half {
                let (r, c) = (me.row as isize + dr, me.col as isize + dc);
                let base = (((dr + half) as usize) * VIEW + (dc + half) as usize) * VIEW_CHANNELS;
                if !self.in_bounds(r, c) || self.occupied_by_other(agent, r as usize, c as usize) {
                    out[base + 2] = 1.0;
                    continue;
                }
                match self.cell(r as usize, c as usize) {
                    Cell::Red => out[base] = 1.0,
                    Cell::Yellow => out[base + 1] = 1.0,
                    Cell::Empty => {}
                }
            }
        }
        out
    }

    fn normalized_position(&self, p: &Piece) -> [f64; 2] {
        [
            (p.row + ROW_PAD) as f64 / self.padded_rows() as f64,
            (p.col + COL_PAD) as f64 / self.padded_cols() as f64,
        ]
    }

    fn self_vector(&self, agent: usize) -> Vec<f64> {
        let p = &self.agents[agent];
        let [r, c] = self.normalized_position(p);
        vec![r, c, p.red as f64, p.yellow as f64]
    }

    /// Shortest path (first action) from `agent` to the nearest reward of its
    /// own color, moving only through empty or own-color cells.
    fn greedy_action(&self, agent: usize) -> usize {
        let own = match self.roles[agent] {
            Role::A => Cell::Red,
            Role::B => Cell::Yellow,
        };
        let w = self.valid_cols();
        let start = (self.agents[agent].row, self.agents[agent].col);
        let mut first = vec![None; VALID_ROWS * w];
        let mut seen = vec![false; VALID_ROWS * w];
        seen[start.0 * w + start.1] = true;
        let mut queue = VecDeque::from([start]);
        while let Some((r, c)) = queue.pop_front() {
            if (r, c) != start && self.cell(r, c) == own {
                return first[r * w + c].unwrap_or(0);
            }
            for action in 1..NUM_ACTIONS {
                let (nr, nc) = move_target(r, c, action);
                if !self.in_bounds(nr, nc) {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                let idx = nr * w + nc;
                let content = self.cell(nr, nc);
                if seen[idx] || (content != Cell::Empty && content != own) {
                    continue;
                }
                if self.occupied_by_other(agent, nr, nc) {
                    continue;
                }
                seen[idx] = true;
                first[idx] = Some(if (r, c) == start {
                    action
                } else {
                    first[r * w + c].unwrap_or(action)
                });
                queue.push_back((nr, nc));
            }
        }
        0
    }

    /// Hand-coded joint policy: each agent walks to its nearest reachable
    /// own-color reward without touching the other color, and waits otherwise.
    pub fn hand_coded_actions(&self) -> Vec<usize> {
        (0..self.agents.len()).map(|k| self.greedy_action(k)).collect()
    }
}

impl MultiGoalGame for CheckersWorld {
    type Assignment = CheckersAssignment;

    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn layout(&self) -> InputLayout {
        InputLayout {
            env_state: VALID_ROWS * self.valid_cols() * 2,
            agent_state: SELF_VECTOR,
            obs_self: VIEW * VIEW * VIEW_CHANNELS + SELF_VECTOR + NUM_ACTIONS,
            obs_others: 2 * (self.config.num_agents - 1),
            goal: 2,
            num_actions: NUM_ACTIONS,
            critic_uses_self_obs: true,
            critic_side_uses_goals: false,
        }
    }

    fn sample_assignment(&self, rng: &mut dyn RngCore) -> CheckersAssignment {
        let roles = if self.config.num_agents == 1 {
            vec![if rng.random::<bool>() { Role::A } else { Role::B }]
        } else {
            vec![Role::A, Role::B]
        };
        CheckersAssignment { roles }
    }

    fn assignment_goals(&self, assignment: &CheckersAssignment) -> Vec<Vec<f64>> {
        assignment.roles.iter().map(|r| one_hot(r.index(), 2)).collect()
    }

    fn reset_with(&mut self, assignment: CheckersAssignment, _rng: &mut dyn RngCore) -> Result<()> {
        let n = self.config.num_agents;
        if assignment.roles.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} roles for {n} agents",
                assignment.roles.len()
            )));
        }
        if n == 2 && assignment.roles[0] == assignment.roles[1] {
            return Err(Error::InvalidArgument("both agents hold the same role".into()));
        }
        self.place(assignment.roles);
        Ok(())
    }

    fn state(&self) -> DecomposedState {
        DecomposedState {
            env_part: self.board_tensor(),
            agent_parts: (0..self.agents.len()).map(|k| self.self_vector(k)).collect(),
        }
    }

    fn observe(&self, agent: usize) -> DecomposedObservation {
        let mut self_part = self.view_tensor(agent);
        self_part.extend(self.self_vector(agent));
        self_part.extend(one_hot(self.agents[agent].prev_action, NUM_ACTIONS));
        let me = self.normalized_position(&self.agents[agent]);
        let mut others_part = Vec::new();
        for (k, p) in self.agents.iter().enumerate() {
            if k != agent {
                let pos = self.normalized_position(p);
                others_part.push(pos[0] - me[0]);
                others_part.push(pos[1] - me[1]);
            }
        }
        DecomposedObservation {
            self_part,
            others_part,
        }
    }

    fn goals(&self) -> &[Vec<f64>] {
        &self.goals
    }

    fn step(&mut self, actions: &[usize], _rng: &mut dyn RngCore) -> Result<StepResult> {
        validate_actions(&self.spec, actions)?;
        let mut rewards = vec![0.0; self.agents.len()];
        for (k, &action) in actions.iter().enumerate() {
            self.agents[k].prev_action = action;
            let (r, c) = move_target(self.agents[k].row, self.agents[k].col, action);
            if !self.in_bounds(r, c) || self.occupied_by_other(k, r as usize, c as usize) {
                continue;
            }
            let (r, c) = (r as usize, c as usize);
            if (r, c) == (self.agents[k].row, self.agents[k].col) {
                continue;
            }
            self.agents[k].row = r;
            self.agents[k].col = c;
            let content = self.cell(r, c);
            rewards[k] += checkers_reward(self.roles[k], content);
            match content {
                Cell::Red => self.agents[k].red += 1,
                Cell::Yellow => self.agents[k].yellow += 1,
                Cell::Empty => {}
            }
            self.set_cell(r, c, Cell::Empty);
        }
        self.t += 1;
        let terminal = self.remaining_rewards() == 0;
        let timeout = !terminal && self.t >= self.config.horizon;
        Ok(StepResult {
            rewards,
            terminal,
            timeout,
            success: terminal,
        })
    }

    fn kind(&self) -> Option<super::EnvKind> {
        Some(super::EnvKind::Checkers)
    }

    fn induce(&self) -> Result<Self> {
        CheckersWorld::new(CheckersConfig {
            num_agents: 1,
            ..self.config.clone()
        })
    }
}
