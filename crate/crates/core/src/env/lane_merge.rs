//! Kinematic double lane-merge simulator.
//!
//! A 200 m straight road with four 3.2 m lanes, each split into four 0.8 m
//! sublanes. Vehicles move longitudinally with discrete accelerations and
//! shift laterally one sublane per step. Collisions are rectangle overlaps in
//! (x, sublane) space with 5 m long vehicles.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    one_hot, validate_actions, DecomposedObservation, DecomposedState, GameSpec, InputLayout,
    MultiGoalGame, StepResult,
};

pub const NUM_ACTIONS: usize = 5;
pub const ROAD_LENGTH: f64 = 200.0;
pub const ROAD_WIDTH: f64 = 12.8;
pub const NUM_LANES: usize = 4;
pub const SUBLANES_PER_LANE: usize = 4;
pub const NUM_SUBLANES: usize = NUM_LANES * SUBLANES_PER_LANE;
pub const SUBLANE_WIDTH: f64 = 0.8;
pub const DT: f64 = 0.2;
pub const SPEED_NORM: f64 = 29.0;
pub const OVERSPEED: f64 = 35.7;
pub const ARRIVAL_X: f64 = 190.0;
pub const MAX_STEPS: usize = 33;
pub const VEHICLE_LENGTH: f64 = 5.0;
/// Sublane offsets at or below this count as lateral overlap (1.6 m).
pub const LATERAL_OVERLAP: i32 = 2;
pub const ACCELERATION: f64 = 2.5;

pub const GRID_ROWS: usize = 13;
pub const GRID_COLS: usize = 9;
pub const GRID_CHANNELS: usize = 2;
pub const GRID_CELL: f64 = 2.5;
const GRID_HALF_ROWS: i32 = (GRID_ROWS as i32 - 1) / 2;
const GRID_HALF_COLS: i32 = (GRID_COLS as i32 - 1) / 2;

pub const ACTION_NOOP: usize = 0;
pub const ACTION_ACCELERATE: usize = 1;
pub const ACTION_DECELERATE: usize = 2;
pub const ACTION_LEFT: usize = 3;
pub const ACTION_RIGHT: usize = 4;

/// Sublane a vehicle aims for when it targets `lane`.
pub fn lane_center_sublane(lane: usize) -> i32 {
    (lane * SUBLANES_PER_LANE + SUBLANES_PER_LANE / 2) as i32
}

/// Reward-relevant things that can happen to a vehicle during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MergeEvent {
    Collision,
    Timeout,
    /// Crossed the arrival line; `delta` is the sublane offset from the goal
    /// lane center normalized by the total sublane count.
    Arrival { delta: f64 },
    Overspeed,
    None,
}

pub fn merge_reward(event: MergeEvent) -> Result<f64> {
    Ok(match event {
        MergeEvent::Collision => -1.0,
        MergeEvent::Timeout => -10.0,
        MergeEvent::Arrival { delta } => {
            if !(0.0..=1.0).contains(&delta) {
                return Err(Error::InvalidArgument(format!(
                    "arrival sublane difference {delta} outside [0, 1]"
                )));
            }
            10.0 * (1.0 - delta)
        }
        MergeEvent::Overspeed => -0.1,
        MergeEvent::None => 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub x: f64,
    pub sublane: i32,
    pub speed: f64,
    pub depart_step: usize,
    pub arrived: bool,
}

impl Vehicle {
    fn on_road(&self, t: usize) -> bool {
        t >= self.depart_step && !self.arrived
    }

    fn lateral_position(&self) -> f64 {
        (self.sublane as f64 + 0.5) * SUBLANE_WIDTH
    }

    fn overlaps(&self, other: &Vehicle) -> bool {
        (self.x - other.x).abs() < VEHICLE_LENGTH
            && (self.sublane - other.sublane).abs() <= LATERAL_OVERLAP
    }
}

/// Initial and goal lanes for the agent vehicles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanePreset {
    pub initial: Vec<usize>,
    pub goal: Vec<usize>,
}

/// Test configurations with scripted traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaneScenario {
    C1,
    C2,
    C3,
    C4,
}

impl LaneScenario {
    /// `None` means uniformly random lanes.
    pub fn preset(self) -> Option<LanePreset> {
        let (initial, goal) = match self {
            LaneScenario::C1 => (vec![1, 2], vec![3, 0]),
            LaneScenario::C2 => return None,
            LaneScenario::C3 => (vec![1, 2], vec![2, 1]),
            LaneScenario::C4 => (vec![0, 1], vec![3, 2]),
        };
        Some(LanePreset { initial, goal })
    }
}

impl std::str::FromStr for LaneScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "C1" => Ok(LaneScenario::C1),
            "C2" => Ok(LaneScenario::C2),
            "C3" => Ok(LaneScenario::C3),
            "C4" => Ok(LaneScenario::C4),
            _ => Err(Error::Unknown {
                kind: "lane scenario",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    pub num_agents: usize,
    /// Lane layout used with probability `preset_prob`; uniform otherwise.
    pub preset: Option<LanePreset>,
    pub preset_prob: f64,
    pub background_vehicles: usize,
    pub horizon: usize,
    pub discount: f64,
    pub depart_jitter_std: f64,
    pub emit_speed_mean: f64,
    pub emit_speed_std: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            num_agents: 2,
            preset: LaneScenario::C3.preset(),
            preset_prob: 0.8,
            background_vehicles: 0,
            horizon: MAX_STEPS,
            discount: 0.99,
            depart_jitter_std: 0.5,
            emit_speed_mean: 30.0,
            emit_speed_std: 0.5,
        }
    }
}

impl MergeConfig {
    /// Evaluation setting for a test scenario: always that layout, with traffic.
    pub fn scenario(scenario: LaneScenario, background_vehicles: usize) -> Self {
        Self {
            preset: scenario.preset(),
            preset_prob: if scenario == LaneScenario::C2 { 0.0 } else { 1.0 },
            background_vehicles,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeAssignment {
    pub initial_lanes: Vec<usize>,
    pub goal_lanes: Vec<usize>,
    pub depart_steps: Vec<usize>,
    pub speeds: Vec<f64>,
    pub background: Vec<Vehicle>,
}

/// Scripted keep-lane driver with gap keeping.
#[derive(Debug, Clone, PartialEq)]
struct Driver {
    desired_speed: f64,
}

#[derive(Debug, Clone)]
pub struct LaneMergeWorld {
    config: MergeConfig,
    spec: GameSpec,
    agents: Vec<Vehicle>,
    goal_lanes: Vec<usize>,
    goals: Vec<Vec<f64>>,
    background: Vec<Vehicle>,
    drivers: Vec<Driver>,
    t: usize,
}

impl LaneMergeWorld {
    pub fn new(config: MergeConfig) -> Result<Self> {
        if config.num_agents == 0 {
            return Err(Error::InvalidArgument("lane merge needs at least one agent".into()));
        }
        if let Some(preset) = &config.preset {
            let n = config.num_agents;
            if preset.initial.len() != n || preset.goal.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "lane preset lists {} agents, config has {n}",
                    preset.initial.len()
                )));
            }
            if preset.initial.iter().chain(&preset.goal).any(|&l| l >= NUM_LANES) {
                return Err(Error::InvalidArgument("lane index out of range".into()));
            }
        }
        let spec = GameSpec {
            num_agents: config.num_agents,
            action_sizes: vec![NUM_ACTIONS; config.num_agents],
            discount: config.discount,
            horizon: config.horizon,
            goal_dim: NUM_LANES,
        };
        let mut world = Self {
            agents: Vec::new(),
            goal_lanes: Vec::new(),
            goals: Vec::new(),
            background: Vec::new(),
            drivers: Vec::new(),
            t: 0,
            config,
            spec,
        };
        let n = world.config.num_agents;
        world.reset_with(
            MergeAssignment {
                initial_lanes: vec![0; n],
                goal_lanes: vec![0; n],
                depart_steps: vec![0; n],
                speeds: vec![world.config.emit_speed_mean; n],
                background: vec![],
            },
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(0),
        )?;
        Ok(world)
    }

    pub fn config(&self) -> &MergeConfig {
        &self.config
    }

    pub fn agents(&self) -> &[Vehicle] {
        &self.agents
    }

    pub fn background(&self) -> &[Vehicle] {
        &self.background
    }

    pub fn goal_lanes(&self) -> &[usize] {
        &self.goal_lanes
    }

    /// Overwrite vehicle states; used by tests and scripted scenarios.
    pub fn set_vehicles(&mut self, agents: Vec<Vehicle>, background: Vec<Vehicle>) -> Result<()> {
        if agents.len() != self.config.num_agents {
            return Err(Error::DimensionMismatch(format!(
                "{} vehicles for {} agents",
                agents.len(),
                self.config.num_agents
            )));
        }
        self.agents = agents;
        self.drivers = background
            .iter()
            .map(|v| Driver {
                desired_speed: v.speed,
            })
            .collect();
        self.background = background;
        Ok(())
    }

    /// Normalized sublane difference Δ between a vehicle and its goal lane center.
    pub fn sublane_delta(sublane: i32, goal_lane: usize) -> f64 {
        (sublane - lane_center_sublane(goal_lane)).abs() as f64 / NUM_SUBLANES as f64
    }

    fn in_goal_lane(sublane: i32, goal_lane: usize) -> bool {
        sublane as usize / SUBLANES_PER_LANE == goal_lane
    }

    /// The [13, 9, 2] grid of vehicles around agent `agent`, row-major with
    /// channels innermost. Row 0 is 15 m ahead; column 0 is four sublanes right.
    pub fn occupancy_grid(&self, agent: usize) -> Vec<f64> {
        let mut grid = vec![0.0; GRID_ROWS * GRID_COLS * GRID_CHANNELS];
        let me = &self.agents[agent];
        if !me.on_road(self.t) {
            return grid;
        }
        let others = self
            .agents
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != agent)
            .map(|(_, v)| v)
            .chain(self.background.iter());
        for other in others {
            if !other.on_road(self.t) {
                continue;
            }
            let row = GRID_HALF_ROWS - ((other.x - me.x) / GRID_CELL).round() as i32;
            let col = GRID_HALF_COLS + (other.sublane - me.sublane);
            if !(0..GRID_ROWS as i32).contains(&row) || !(0..GRID_COLS as i32).contains(&col) {
                continue;
            }
            let base = ((row as usize) * GRID_COLS + col as usize) * GRID_CHANNELS;
            grid[base] = 1.0;
            grid[base + 1] = (other.speed - me.speed) / SPEED_NORM;
        }
        grid
    }

    fn step_background(&mut self) {
        let snapshot = self.background.clone();
        for (i, (v, driver)) in self.background.iter_mut().zip(&self.drivers).enumerate() {
            if !v.on_road(self.t) {
                continue;
            }
            let blocked = snapshot
                .iter()
                .enumerate()
                .filter(|(j, o)| *j != i && o.on_road(self.t))
                .map(|(_, o)| o)
                .chain(self.agents.iter().filter(|a| a.on_road(self.t)))
                .any(|o| {
                    let gap = o.x - v.x;
                    (o.sublane - v.sublane).abs() <= LATERAL_OVERLAP
                        && gap > 0.0
                        && gap < VEHICLE_LENGTH + v.speed
                });
            let accel = if blocked {
                -ACCELERATION
            } else if v.speed < driver.desired_speed {
                ACCELERATION.min((driver.desired_speed - v.speed) / DT)
            } else {
                0.0
            };
            v.speed = (v.speed + accel * DT).max(0.0);
            v.x += v.speed * DT;
            if v.x > ROAD_LENGTH {
                v.arrived = true;
            }
        }
    }

    fn spawn_background(&self, rng: &mut dyn RngCore) -> Vec<Vehicle> {
        (0..self.config.background_vehicles)
            .map(|k| {
                let spacing = 140.0 / self.config.background_vehicles.max(1) as f64;
                let lane = rng.random_range(0..NUM_LANES);
                Vehicle {
                    x: 20.0 + spacing * k as f64 + rng.random_range(0.0..spacing * 0.5),
                    sublane: lane_center_sublane(lane),
                    speed: rng.random_range(18.0..26.0),
                    depart_step: 0,
                    arrived: false,
                }
            })
            .collect()
    }
}

impl MultiGoalGame for LaneMergeWorld {
    type Assignment = MergeAssignment;

    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn layout(&self) -> InputLayout {
        InputLayout {
            env_state: 0,
            agent_state: 3,
            obs_self: 3,
            obs_others: GRID_ROWS * GRID_COLS * GRID_CHANNELS,
            goal: NUM_LANES,
            num_actions: NUM_ACTIONS,
            critic_uses_self_obs: false,
            critic_side_uses_goals: true,
        }
    }

    fn sample_assignment(&self, rng: &mut dyn RngCore) -> MergeAssignment {
        let n = self.config.num_agents;
        let preset = self
            .config
            .preset
            .as_ref()
            .filter(|_| rng.random::<f64>() < self.config.preset_prob);
        let (initial_lanes, goal_lanes) = match preset {
            Some(p) => (p.initial.clone(), p.goal.clone()),
            None => {
                let mut initial: Vec<usize> = Vec::with_capacity(n);
                // Agents start side by side at x = 0, so they need distinct lanes.
                while initial.len() < n {
                    let lane = rng.random_range(0..NUM_LANES);
                    if n > NUM_LANES || !initial.contains(&lane) {
                        initial.push(lane);
                    }
                }
                let goal = (0..n).map(|_| rng.random_range(0..NUM_LANES)).collect();
                (initial, goal)
            }
        };
        let jitter = Normal::new(0.0, self.config.depart_jitter_std.max(1e-12))
            .expect("finite standard deviation");
        let depart_steps = (0..n)
            .map(|_| {
                let t: f64 = jitter.sample(&mut *rng);
                (t / DT).round().max(0.0) as usize
            })
            .collect();
        let emit = Normal::new(self.config.emit_speed_mean, self.config.emit_speed_std.max(1e-12))
            .expect("finite standard deviation");
        let speeds = (0..n).map(|_| emit.sample(&mut *rng)).collect();
        MergeAssignment {
            initial_lanes,
            goal_lanes,
            depart_steps,
            speeds,
            background: self.spawn_background(rng),
        }
    }

    fn assignment_goals(&self, assignment: &MergeAssignment) -> Vec<Vec<f64>> {
        assignment
            .goal_lanes
            .iter()
            .map(|&l| one_hot(l, NUM_LANES))
            .collect()
    }

    fn reset_with(&mut self, assignment: MergeAssignment, _rng: &mut dyn RngCore) -> Result<()> {
        let n = self.config.num_agents;
        if assignment.initial_lanes.len() != n
            || assignment.goal_lanes.len() != n
            || assignment.depart_steps.len() != n
            || assignment.speeds.len() != n
        {
            return Err(Error::DimensionMismatch(format!(
                "assignment does not describe {n} agents"
            )));
        }
        self.goals = self.assignment_goals(&assignment);
        self.agents = (0..n)
            .map(|k| Vehicle {
                x: 0.0,
                sublane: lane_center_sublane(assignment.initial_lanes[k]),
                speed: assignment.speeds[k],
                depart_step: assignment.depart_steps[k],
                arrived: false,
            })
            .collect();
        self.goal_lanes = assignment.goal_lanes;
        self.drivers = assignment
            .background
            .iter()
            .map(|v| Driver {
                desired_speed: v.speed,
            })
            .collect();
        self.background = assignment.background;
        self.t = 0;
        Ok(())
    }

    fn state(&self) -> DecomposedState {
        DecomposedState {
            env_part: vec![],
            agent_parts: self
                .agents
                .iter()
                .map(|v| {
                    vec![
                        v.x / ROAD_LENGTH,
                        v.lateral_position() / ROAD_WIDTH,
                        v.speed / SPEED_NORM,
                    ]
                })
                .collect(),
        }
    }

    fn observe(&self, agent: usize) -> DecomposedObservation {
        let v = &self.agents[agent];
        let goal_center = lane_center_sublane(self.goal_lanes[agent]);
        DecomposedObservation {
            self_part: vec![
                v.speed / SPEED_NORM,
                (goal_center - v.sublane) as f64 / NUM_SUBLANES as f64,
                (ARRIVAL_X - v.x) / ROAD_LENGTH,
            ],
            others_part: if self.config.num_agents > 1 || !self.background.is_empty() {
                self.occupancy_grid(agent)
            } else {
                vec![0.0; GRID_ROWS * GRID_COLS * GRID_CHANNELS]
            },
        }
    }

    fn goals(&self) -> &[Vec<f64>] {
        &self.goals
    }

    fn step(&mut self, actions: &[usize], _rng: &mut dyn RngCore) -> Result<StepResult> {
        validate_actions(&self.spec, actions)?;
        let t = self.t;
        let n = self.agents.len();
        let mut rewards = vec![0.0; n];
        let mut arrived_now = vec![false; n];

        for (k, (v, &a)) in self.agents.iter_mut().zip(actions).enumerate() {
            if !v.on_road(t) {
                continue;
            }
            match a {
                ACTION_ACCELERATE => v.speed += ACCELERATION * DT,
                ACTION_DECELERATE => v.speed = (v.speed - ACCELERATION * DT).max(0.0),
                ACTION_LEFT => v.sublane = (v.sublane + 1).min(NUM_SUBLANES as i32 - 1),
                ACTION_RIGHT => v.sublane = (v.sublane - 1).max(0),
                _ => {}
            }
            v.x += v.speed * DT;
            if v.x > ARRIVAL_X {
                arrived_now[k] = true;
            }
        }
        self.step_background();

        // Collisions among vehicles that were on the road this step.
        for k in 0..n {
            let me = &self.agents[k];
            if !me.on_road(t) {
                continue;
            }
            let hit = self
                .agents
                .iter()
                .enumerate()
                .filter(|(j, o)| *j != k && o.on_road(t))
                .map(|(_, o)| o)
                .chain(self.background.iter().filter(|o| !o.arrived && t >= o.depart_step))
                .any(|o| me.overlaps(o));
            if hit {
                rewards[k] += merge_reward(MergeEvent::Collision)?;
            }
            if me.speed > OVERSPEED {
                rewards[k] += merge_reward(MergeEvent::Overspeed)?;
            }
        }
        for k in 0..n {
            if arrived_now[k] {
                let delta = Self::sublane_delta(self.agents[k].sublane, self.goal_lanes[k]);
                rewards[k] += merge_reward(MergeEvent::Arrival { delta })?;
                self.agents[k].arrived = true;
            }
        }

        self.t += 1;
        let terminal = self.agents.iter().all(|v| v.arrived);
        let timeout = !terminal && self.t >= self.config.horizon;
        if timeout {
            for (k, v) in self.agents.iter().enumerate() {
                if !v.arrived {
                    rewards[k] += merge_reward(MergeEvent::Timeout)?;
                }
            }
        }
        let success = terminal
            && self
                .agents
                .iter()
                .zip(&self.goal_lanes)
                .all(|(v, &g)| Self::in_goal_lane(v.sublane, g));
        Ok(StepResult {
            rewards,
            terminal,
            timeout,
            success,
        })
    }

    fn kind(&self) -> Option<super::EnvKind> {
        Some(super::EnvKind::LaneMerge)
    }

    fn induce(&self) -> Result<Self> {
        LaneMergeWorld::new(MergeConfig {
            num_agents: 1,
            preset: None,
            preset_prob: 0.0,
            background_vehicles: 0,
            ..self.config.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn car(x: f64, sublane: i32, speed: f64) -> Vehicle {
        Vehicle {
            x,
            sublane,
            speed,
            depart_step: 0,
            arrived: false,
        }
    }

    #[test]
    fn reward_table() {
        assert_eq!(merge_reward(MergeEvent::Arrival { delta: 0.0 }).unwrap(), 10.0);
        assert_eq!(merge_reward(MergeEvent::Arrival { delta: 0.25 }).unwrap(), 7.5);
        assert_eq!(merge_reward(MergeEvent::Timeout).unwrap(), -10.0);
        assert_eq!(merge_reward(MergeEvent::Collision).unwrap(), -1.0);
        assert_eq!(merge_reward(MergeEvent::Overspeed).unwrap(), -0.1);
        assert_eq!(merge_reward(MergeEvent::None).unwrap(), 0.0);
        assert!(merge_reward(MergeEvent::Arrival { delta: 1.5 }).is_err());
        assert!(merge_reward(MergeEvent::Arrival { delta: -0.1 }).is_err());
    }

    #[test]
    fn overspeed_penalized_mid_episode() {
        let mut world = LaneMergeWorld::new(MergeConfig {
            num_agents: 1,
            preset: None,
            ..MergeConfig::default()
        })
        .unwrap();
        world.set_vehicles(vec![car(50.0, 6, 36.0)], vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = world.step(&[ACTION_NOOP], &mut rng).unwrap();
        assert!((s.rewards[0] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn lone_agent_speed_normalized() {
        let mut world = LaneMergeWorld::new(MergeConfig {
            num_agents: 1,
            preset: None,
            ..MergeConfig::default()
        })
        .unwrap();
        world.set_vehicles(vec![car(10.0, 6, 29.0)], vec![]).unwrap();
        assert_eq!(world.observe(0).self_part[0], 1.0);
    }

    #[test]
    fn grid_shape_and_channels() {
        let mut world = LaneMergeWorld::new(MergeConfig::default()).unwrap();
        world
            .set_vehicles(
                vec![car(50.0, 6, 30.0), car(55.0, 8, 25.0)],
                vec![car(40.0, 2, 20.0), car(100.0, 6, 20.0)],
            )
            .unwrap();
        let grid = world.occupancy_grid(0);
        assert_eq!(grid.len(), 13 * 9 * 2);
        // Agent 1 is 5 m ahead (two rows up) and two sublanes to the left.
        let idx = ((6 - 2) * GRID_COLS + (4 + 2)) * 2;
        assert_eq!(grid[idx], 1.0);
        assert!((grid[idx + 1] - (25.0 - 30.0) / 29.0).abs() < 1e-12);
        // Background at 10 m behind, four sublanes right.
        let idx = ((6 + 4) * GRID_COLS) * 2;
        assert_eq!(grid[idx], 1.0);
        // The far vehicle is outside the 15 m window.
        let occupied: f64 = grid.iter().step_by(2).sum();
        assert_eq!(occupied, 2.0);
        for cell in grid.chunks(2) {
            assert!(cell[0] == 0.0 || cell[0] == 1.0);
            if cell[0] == 0.0 {
                assert_eq!(cell[1], 0.0);
            }
        }
    }

    #[test]
    fn arrival_reward_uses_goal_lane_center() {
        let mut world = LaneMergeWorld::new(MergeConfig {
            num_agents: 1,
            preset: Some(LanePreset {
                initial: vec![1],
                goal: vec![2],
            }),
            preset_prob: 1.0,
            ..MergeConfig::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        world.reset(&mut rng).unwrap();
        world
            .set_vehicles(vec![car(189.0, lane_center_sublane(2) + 1, 30.0)], vec![])
            .unwrap();
        let s = world.step(&[ACTION_NOOP], &mut rng).unwrap();
        assert!((s.rewards[0] - 10.0 * (1.0 - 1.0 / 16.0)).abs() < 1e-12);
        assert!(s.terminal && s.success);
    }

    #[test]
    fn collision_by_rectangle_overlap() {
        let mut world = LaneMergeWorld::new(MergeConfig::default()).unwrap();
        world
            .set_vehicles(vec![car(50.0, 6, 30.0), car(53.0, 8, 30.0)], vec![])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = world.step(&[ACTION_NOOP, ACTION_NOOP], &mut rng).unwrap();
        assert_eq!(s.rewards, vec![-1.0, -1.0]);
        world
            .set_vehicles(vec![car(50.0, 6, 30.0), car(53.0, 9, 30.0)], vec![])
            .unwrap();
        let s = world.step(&[ACTION_NOOP, ACTION_NOOP], &mut rng).unwrap();
        assert_eq!(s.rewards, vec![0.0, 0.0]);
    }

    #[test]
    fn timeout_after_horizon() {
        let mut world = LaneMergeWorld::new(MergeConfig {
            num_agents: 1,
            preset: None,
            ..MergeConfig::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        world.reset(&mut rng).unwrap();
        world.set_vehicles(vec![car(0.0, 6, 5.0)], vec![]).unwrap();
        let mut last = None;
        for _ in 0..MAX_STEPS {
            last = Some(world.step(&[ACTION_NOOP], &mut rng).unwrap());
        }
        let last = last.unwrap();
        assert!(last.timeout);
        assert_eq!(last.rewards[0], -10.0);
    }

    #[test]
    fn default_assignment_mixture() {
        let world = LaneMergeWorld::new(MergeConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 4000;
        let preset_hits = (0..trials)
            .filter(|_| {
                let a = world.sample_assignment(&mut rng);
                a.initial_lanes == vec![1, 2] && a.goal_lanes == vec![2, 1]
            })
            .count() as f64
            / trials as f64;
        // 0.8 from the preset plus the uniform branch's small chance of the same layout.
        let expected = 0.8 + 0.2 * (1.0 / 12.0) * (1.0 / 16.0);
        assert!((preset_hits - expected).abs() < 0.03, "{preset_hits}");
    }

    #[test]
    fn scenario_presets() {
        assert_eq!(
            LaneScenario::C3.preset().unwrap(),
            LanePreset {
                initial: vec![1, 2],
                goal: vec![2, 1]
            }
        );
        assert_eq!(LaneScenario::C1.preset().unwrap().goal, vec![3, 0]);
        assert_eq!(LaneScenario::C4.preset().unwrap().initial, vec![0, 1]);
        assert!(LaneScenario::C2.preset().is_none());
    }
}
