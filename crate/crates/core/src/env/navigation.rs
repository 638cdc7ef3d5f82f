//! Cooperative navigation in an unbounded 2-D particle world.
//!
//! Each agent must reach its own landmark. Rewards are individual (negative
//! distance to the assigned landmark) plus a collision penalty, so agents
//! that rush straight to their targets collide in the crossing formations.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    validate_actions, DecomposedObservation, DecomposedState, GameSpec, InputLayout, MultiGoalGame,
    StepResult,
};

pub const NUM_ACTIONS: usize = 5;

/// Predefined start/landmark layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formation {
    Antipodal,
    #[serde(alias = "intersection")]
    Cross,
    Merge,
    UniformRandom,
}

impl std::str::FromStr for Formation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "antipodal" => Ok(Formation::Antipodal),
            "cross" | "intersection" => Ok(Formation::Cross),
            "merge" => Ok(Formation::Merge),
            "uniform" | "uniform_random" | "random" => Ok(Formation::UniformRandom),
            _ => Err(Error::Unknown {
                kind: "formation",
                name: s.to_string(),
            }),
        }
    }
}

const ANTIPODAL_LANDMARKS: [[f64; 2]; 4] = [[0.9, 0.9], [-0.9, -0.9], [0.9, -0.9], [-0.9, 0.9]];
const ANTIPODAL_STARTS: [[f64; 2]; 4] = [[-0.9, -0.9], [0.9, 0.9], [-0.9, 0.9], [0.9, -0.9]];
const CROSS_LANDMARKS: [[f64; 2]; 4] = [[0.9, -0.15], [-0.9, 0.15], [0.15, 0.9], [-0.15, -0.9]];
const CROSS_STARTS: [[f64; 2]; 4] = [[-0.9, -0.15], [0.9, 0.15], [0.15, -0.9], [-0.15, 0.9]];
const MERGE_LANDMARKS: [[f64; 2]; 2] = [[0.9, -0.2], [0.9, 0.2]];
const MERGE_STARTS: [[f64; 2]; 2] = [[-0.9, 0.2], [-0.9, -0.2]];

/// Initial positions and landmarks for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavAssignment {
    pub starts: Vec<[f64; 2]>,
    pub landmarks: Vec<[f64; 2]>,
}

/// Start and landmark coordinates of `formation` for `num_agents` agents.
///
/// `UniformRandom` draws both from (−1, 1)².
pub fn spawn_formation(
    formation: Formation,
    num_agents: usize,
    rng: &mut dyn RngCore,
) -> Result<NavAssignment> {
    let (starts, landmarks): (&[[f64; 2]], &[[f64; 2]]) = match formation {
        Formation::Antipodal => (&ANTIPODAL_STARTS, &ANTIPODAL_LANDMARKS),
        Formation::Cross => (&CROSS_STARTS, &CROSS_LANDMARKS),
        Formation::Merge => (&MERGE_STARTS, &MERGE_LANDMARKS),
        Formation::UniformRandom => {
            let mut draw = || [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let starts = (0..num_agents).map(|_| draw()).collect();
            let landmarks = (0..num_agents).map(|_| draw()).collect();
            return Ok(NavAssignment { starts, landmarks });
        }
    };
    if num_agents == 0 || num_agents > starts.len() {
        return Err(Error::InvalidArgument(format!(
            "{formation:?} formation is defined for at most {} agents, got {num_agents}",
            starts.len()
        )));
    }
    Ok(NavAssignment {
        starts: starts[..num_agents].to_vec(),
        landmarks: landmarks[..num_agents].to_vec(),
    })
}

/// Largest agent count a predefined formation lists coordinates for.
pub fn formation_capacity(formation: Formation) -> Option<usize> {
    match formation {
        Formation::Antipodal | Formation::Cross => Some(4),
        Formation::Merge => Some(2),
        Formation::UniformRandom => None,
    }
}

/// −‖pos − landmark‖₂, minus 1 if the agent collided this step.
pub fn nav_reward(pos: [f64; 2], landmark: [f64; 2], collided: bool) -> f64 {
    let d = distance(pos, landmark);
    -d - if collided { 1.0 } else { 0.0 }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavConfig {
    pub num_agents: usize,
    pub formation: Formation,
    /// Probability of using `formation` rather than uniform placement.
    pub formation_prob: f64,
    pub collisions: bool,
    pub horizon: usize,
    pub discount: f64,
    pub dt: f64,
    pub friction: f64,
    /// Acceleration produced by a movement action.
    pub sensitivity: f64,
    pub radius: f64,
    pub success_radius: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            num_agents: 2,
            formation: Formation::Merge,
            formation_prob: 0.8,
            collisions: true,
            horizon: 50,
            discount: 0.99,
            dt: 0.1,
            friction: 0.25,
            sensitivity: 4.0,
            radius: 0.15,
            success_radius: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct NavigationWorld {
    config: NavConfig,
    spec: GameSpec,
    agents: Vec<Particle>,
    landmarks: Vec<[f64; 2]>,
    goals: Vec<Vec<f64>>,
    t: usize,
}

impl NavigationWorld {
    pub fn new(config: NavConfig) -> Result<Self> {
        if config.num_agents == 0 {
            return Err(Error::InvalidArgument("navigation needs at least one agent".into()));
        }
        if let Some(cap) = formation_capacity(config.formation) {
            if config.formation_prob > 0.0 && config.num_agents > cap {
                return Err(Error::InvalidArgument(format!(
                    "{:?} formation is defined for at most {cap} agents, got {}",
                    config.formation, config.num_agents
                )));
            }
        }
        let spec = GameSpec {
            num_agents: config.num_agents,
            action_sizes: vec![NUM_ACTIONS; config.num_agents],
            discount: config.discount,
            horizon: config.horizon,
            goal_dim: 2,
        };
        let n = config.num_agents;
        Ok(Self {
            config,
            spec,
            agents: vec![
                Particle {
                    pos: [0.0; 2],
                    vel: [0.0; 2],
                };
                n
            ],
            landmarks: vec![[0.0; 2]; n],
            goals: vec![vec![0.0; 2]; n],
            t: 0,
        })
    }

    pub fn config(&self) -> &NavConfig {
        &self.config
    }

    pub fn agents(&self) -> &[Particle] {
        &self.agents
    }

    pub fn landmarks(&self) -> &[[f64; 2]] {
        &self.landmarks
    }

    /// Place agents directly; used by tests and scripted scenarios.
    pub fn set_agents(&mut self, agents: Vec<Particle>) -> Result<()> {
        if agents.len() != self.config.num_agents {
            return Err(Error::DimensionMismatch(format!(
                "{} particles for {} agents",
                agents.len(),
                self.config.num_agents
            )));
        }
        self.agents = agents;
        Ok(())
    }

    fn within_success(&self, n: usize) -> bool {
        distance(self.agents[n].pos, self.landmarks[n]) < self.config.success_radius
    }

    /// Pairwise overlap test followed by symmetric separation.
    fn resolve_collisions(&mut self) -> Vec<bool> {
        let n = self.agents.len();
        let mut collided = vec![false; n];
        if !self.config.collisions {
            return collided;
        }
        let min_dist = 2.0 * self.config.radius;
        for i in 0..n {
            for j in (i + 1)..n {
                let (pi, pj) = (self.agents[i].pos, self.agents[j].pos);
                let d = distance(pi, pj);
                if d < min_dist {
                    collided[i] = true;
                    collided[j] = true;
                    let (ux, uy) = if d > 1e-12 {
                        ((pj[0] - pi[0]) / d, (pj[1] - pi[1]) / d)
                    } else {
                        (1.0, 0.0)
                    };
                    let push = 0.5 * (min_dist - d);
                    self.agents[i].pos[0] -= push * ux;
                    self.agents[i].pos[1] -= push * uy;
                    self.agents[j].pos[0] += push * ux;
                    self.agents[j].pos[1] += push * uy;
                }
            }
        }
        collided
    }
}

fn action_direction(action: usize) -> [f64; 2] {
    match action {
        1 => [0.0, 1.0],
        2 => [0.0, -1.0],
        3 => [-1.0, 0.0],
        4 => [1.0, 0.0],
        _ => [0.0, 0.0],
    }
}

impl MultiGoalGame for NavigationWorld {
    type Assignment = NavAssignment;

    fn spec(&self) -> &GameSpec {
        &self.spec
    }

    fn layout(&self) -> InputLayout {
        InputLayout {
            env_state: 0,
            agent_state: 4,
            obs_self: 4,
            obs_others: 4 * (self.config.num_agents - 1),
            goal: 2,
            num_actions: NUM_ACTIONS,
            critic_uses_self_obs: false,
            critic_side_uses_goals: false,
        }
    }

    fn sample_assignment(&self, rng: &mut dyn RngCore) -> NavAssignment {
        let use_formation = self.config.formation != Formation::UniformRandom
            && rng.random::<f64>() < self.config.formation_prob;
        let formation = if use_formation {
            self.config.formation
        } else {
            Formation::UniformRandom
        };
        spawn_formation(formation, self.config.num_agents, rng)
            .expect("formation validated at construction")
    }

    fn assignment_goals(&self, assignment: &NavAssignment) -> Vec<Vec<f64>> {
        assignment.landmarks.iter().map(|l| l.to_vec()).collect()
    }

    fn reset_with(&mut self, assignment: NavAssignment, _rng: &mut dyn RngCore) -> Result<()> {
        let n = self.config.num_agents;
        if assignment.starts.len() != n || assignment.landmarks.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "assignment for {} agents, world has {n}",
                assignment.starts.len()
            )));
        }
        self.goals = self.assignment_goals(&assignment);
        self.agents = assignment
            .starts
            .iter()
            .map(|&pos| Particle { pos, vel: [0.0; 2] })
            .collect();
        self.landmarks = assignment.landmarks;
        self.t = 0;
        Ok(())
    }

    fn state(&self) -> DecomposedState {
        DecomposedState {
            env_part: vec![],
            agent_parts: self
                .agents
                .iter()
                .map(|p| vec![p.pos[0], p.pos[1], p.vel[0], p.vel[1]])
                .collect(),
        }
    }

    fn observe(&self, agent: usize) -> DecomposedObservation {
        let me = &self.agents[agent];
        let mut others = Vec::with_capacity(4 * (self.agents.len() - 1));
        for (k, other) in self.agents.iter().enumerate() {
            if k == agent {
                continue;
            }
            others.extend_from_slice(&[
                other.pos[0] - me.pos[0],
                other.pos[1] - me.pos[1],
                other.vel[0] - me.vel[0],
                other.vel[1] - me.vel[1],
            ]);
        }
        DecomposedObservation {
            self_part: vec![me.pos[0], me.pos[1], me.vel[0], me.vel[1]],
            others_part: others,
        }
    }

    fn goals(&self) -> &[Vec<f64>] {
        &self.goals
    }

    fn step(&mut self, actions: &[usize], _rng: &mut dyn RngCore) -> Result<StepResult> {
        validate_actions(&self.spec, actions)?;
        let (dt, friction, accel) = (self.config.dt, self.config.friction, self.config.sensitivity);
        for (p, &a) in self.agents.iter_mut().zip(actions) {
            let dir = action_direction(a);
            for k in 0..2 {
                p.vel[k] = (1.0 - friction) * p.vel[k] + accel * dir[k] * dt;
                p.pos[k] += p.vel[k] * dt;
            }
        }
        let collided = self.resolve_collisions();
        let rewards = (0..self.agents.len())
            .map(|n| nav_reward(self.agents[n].pos, self.landmarks[n], collided[n]))
            .collect();
        self.t += 1;
        let terminal = (0..self.agents.len()).all(|n| self.within_success(n));
        let timeout = !terminal && self.t >= self.config.horizon;
        Ok(StepResult {
            rewards,
            terminal,
            timeout,
            success: terminal,
        })
    }

    fn kind(&self) -> Option<super::EnvKind> {
        Some(super::EnvKind::Navigation)
    }

    fn induce(&self) -> Result<Self> {
        NavigationWorld::new(NavConfig {
            num_agents: 1,
            formation: Formation::UniformRandom,
            formation_prob: 0.0,
            collisions: false,
            ..self.config.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reward_examples() {
        let r = nav_reward([0.0, 0.0], [0.9, 0.9], false);
        assert!((r + (0.81f64 + 0.81).sqrt()).abs() < 1e-15);
        assert!((r + 1.272792).abs() < 1e-6);
        assert_eq!(nav_reward([0.3, -0.2], [0.3, -0.2], false), 0.0);
        assert_eq!(nav_reward([0.0, 0.0], [1.0, 0.0], true), -2.0);
    }

    #[test]
    fn formation_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = spawn_formation(Formation::Antipodal, 4, &mut rng).unwrap();
        assert_eq!(a.starts[0], [-0.9, -0.9]);
        assert_eq!(a.landmarks[0], [0.9, 0.9]);
        assert_eq!(a.starts[3], [0.9, -0.9]);
        assert_eq!(a.landmarks[3], [-0.9, 0.9]);
        let m = spawn_formation(Formation::Merge, 2, &mut rng).unwrap();
        assert_eq!(m.starts[1], [-0.9, -0.2]);
        assert_eq!(m.landmarks[1], [0.9, 0.2]);
        let c = spawn_formation(Formation::Cross, 4, &mut rng).unwrap();
        assert_eq!(c.starts[2], [0.15, -0.9]);
        assert_eq!(c.landmarks[2], [0.15, 0.9]);
        assert!(spawn_formation(Formation::Merge, 3, &mut rng).is_err());
    }

    #[test]
    fn uniform_formation_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let u = spawn_formation(Formation::UniformRandom, 4, &mut rng).unwrap();
            for p in u.starts.iter().chain(&u.landmarks) {
                assert!(p.iter().all(|c| *c > -1.0 && *c < 1.0));
            }
        }
    }

    #[test]
    fn egocentric_others() {
        let mut world = NavigationWorld::new(NavConfig::default()).unwrap();
        world
            .set_agents(vec![
                Particle {
                    pos: [0.0, 0.0],
                    vel: [0.0, 0.0],
                },
                Particle {
                    pos: [1.0, 1.0],
                    vel: [0.0, 0.0],
                },
            ])
            .unwrap();
        let o = world.observe(0);
        assert_eq!(o.others_part, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(o.self_part, vec![0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn collision_penalized_and_separated() {
        let mut world = NavigationWorld::new(NavConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        world.reset(&mut rng).unwrap();
        world
            .set_agents(vec![
                Particle {
                    pos: [0.0, 0.0],
                    vel: [0.0, 0.0],
                },
                Particle {
                    pos: [0.1, 0.0],
                    vel: [0.0, 0.0],
                },
            ])
            .unwrap();
        let step = world.step(&[0, 0], &mut rng).unwrap();
        let free0 = nav_reward(world.agents()[0].pos, world.landmarks()[0], false);
        assert!((step.rewards[0] - (free0 - 1.0)).abs() < 1e-12);
        let d = distance(world.agents()[0].pos, world.agents()[1].pos);
        assert!((d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn terminates_at_landmark_and_times_out() {
        let mut world = NavigationWorld::new(NavConfig {
            num_agents: 1,
            formation: Formation::UniformRandom,
            horizon: 3,
            ..NavConfig::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        world
            .reset_with(
                NavAssignment {
                    starts: vec![[0.0, 0.0]],
                    landmarks: vec![[0.01, 0.0]],
                },
                &mut rng,
            )
            .unwrap();
        let s = world.step(&[0], &mut rng).unwrap();
        assert!(s.terminal && s.success && !s.timeout);

        world
            .reset_with(
                NavAssignment {
                    starts: vec![[0.0, 0.0]],
                    landmarks: vec![[0.9, 0.9]],
                },
                &mut rng,
            )
            .unwrap();
        let mut last = None;
        for _ in 0..3 {
            last = Some(world.step(&[0], &mut rng).unwrap());
        }
        let last = last.unwrap();
        assert!(last.timeout && !last.terminal);
    }

    #[test]
    fn induced_world_is_single_agent_without_collisions() {
        let world = NavigationWorld::new(NavConfig {
            num_agents: 4,
            formation: Formation::Antipodal,
            ..NavConfig::default()
        })
        .unwrap();
        let single = world.induce().unwrap();
        assert_eq!(single.spec().num_agents, 1);
        assert!(!single.config().collisions);
        assert_eq!(single.layout().obs_others, 0);
    }

    #[test]
    fn deterministic_given_seed_and_actions() {
        let run = |seed| {
            let mut world = NavigationWorld::new(NavConfig::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            world.reset(&mut rng).unwrap();
            let mut trace = Vec::new();
            for t in 0..20 {
                let s = world.step(&[t % 5, (t * 3) % 5], &mut rng).unwrap();
                trace.extend(s.rewards);
            }
            trace
        };
        assert_eq!(run(11), run(11));
    }
}
