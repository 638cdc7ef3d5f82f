//! Per-environment network shapes.
//!
//! Hidden widths are multiplied by `scale` (minimum 4 units) so small
//! experiments can run narrower copies of the same topology.

use crate::env::checkers::{NUM_ACTIONS as CHECKERS_ACTIONS, SELF_VECTOR, VALID_ROWS, VIEW, VIEW_CHANNELS};
use crate::env::lane_merge::{GRID_CHANNELS, GRID_COLS, GRID_ROWS};
use crate::env::EnvKind;
use crate::features;
use crate::game::InputLayout;

use super::net::{BranchSpec, LayerSpec, NetSpec, SideSpec};

fn w(units: usize, scale: f64) -> usize {
    ((units as f64 * scale).round() as usize).max(4)
}

const VIEW_LEN: usize = VIEW * VIEW * VIEW_CHANNELS;

fn view_conv() -> LayerSpec {
    LayerSpec::Conv {
        height: VIEW,
        width: VIEW,
        channels: VIEW_CHANNELS,
        kernel_h: 3,
        kernel_w: 3,
        filters: 6,
    }
}

fn board_conv(layout: &InputLayout) -> LayerSpec {
    let width = layout.env_state / (VALID_ROWS * 2);
    LayerSpec::Conv {
        height: VALID_ROWS,
        width,
        channels: 2,
        kernel_h: 3,
        kernel_w: 5.min(width),
        filters: 4,
    }
}

fn grid_conv() -> LayerSpec {
    LayerSpec::Conv {
        height: GRID_ROWS,
        width: GRID_COLS,
        channels: GRID_CHANNELS,
        kernel_h: 5,
        kernel_w: 3,
        filters: 4,
    }
}

/// Policy network π¹ over [o_self | g].
pub fn policy(kind: Option<EnvKind>, layout: &InputLayout, scale: f64) -> NetSpec {
    let input_len = features::policy_main_len(layout);
    let a = layout.num_actions;
    match kind {
        Some(EnvKind::LaneMerge) => NetSpec {
            input_len,
            branches: vec![
                BranchSpec::dense(vec![0..layout.obs_self], &[w(32, scale)]),
                BranchSpec::dense(vec![layout.obs_self..input_len], &[w(32, scale)]),
            ],
            trunk: vec![w(64, scale), a],
        },
        Some(EnvKind::Checkers) => NetSpec {
            input_len,
            branches: vec![
                BranchSpec {
                    inputs: vec![0..VIEW_LEN],
                    layers: vec![view_conv(), LayerSpec::Dense { units: w(32, scale) }],
                },
                BranchSpec::passthrough(vec![VIEW_LEN..input_len]),
            ],
            trunk: vec![w(256, scale), w(256, scale), CHECKERS_ACTIONS],
        },
        _ => NetSpec::mlp(input_len, vec![w(64, scale), w(64, scale), a]),
    }
}

/// Side branch over o_others that widens the policy.
pub fn policy_side(kind: Option<EnvKind>, layout: &InputLayout, scale: f64) -> SideSpec {
    let len = layout.obs_others;
    let branch = match kind {
        Some(EnvKind::LaneMerge) => BranchSpec {
            inputs: vec![0..len],
            layers: vec![grid_conv(), LayerSpec::Dense { units: w(64, scale) }],
        },
        Some(EnvKind::Checkers) => BranchSpec::dense(vec![0..len], &[w(256, scale)]),
        _ => BranchSpec::dense(vec![0..len], &[w(128, scale)]),
    };
    SideSpec { input_len: len, branch }
}

/// Stage-One critic Q¹ over the critic main input.
pub fn critic(kind: Option<EnvKind>, layout: &InputLayout, scale: f64) -> NetSpec {
    let input_len = features::critic_main_len(layout);
    match kind {
        Some(EnvKind::LaneMerge) => NetSpec::mlp(input_len, vec![w(256, scale), w(256, scale), 1]),
        Some(EnvKind::Checkers) => {
            let env_end = layout.env_state;
            let agent_end = env_end + layout.agent_state;
            let view_end = agent_end + VIEW_LEN;
            let vector_end = view_end + SELF_VECTOR;
            NetSpec {
                input_len,
                branches: vec![
                    BranchSpec {
                        inputs: vec![0..env_end],
                        layers: vec![board_conv(layout)],
                    },
                    BranchSpec {
                        inputs: vec![agent_end..view_end],
                        layers: vec![view_conv()],
                    },
                    BranchSpec::passthrough(vec![
                        env_end..agent_end,
                        view_end..vector_end,
                        agent_end + layout.obs_self..input_len,
                    ]),
                ],
                trunk: vec![w(256, scale), w(256, scale), 1],
            }
        }
        _ => NetSpec::mlp(input_len, vec![w(64, scale), w(64, scale), 1]),
    }
}

fn critic_side_width(kind: Option<EnvKind>) -> usize {
    match kind {
        Some(EnvKind::Checkers) => 32,
        _ => 128,
    }
}

/// Side branch over [s⁻ⁿ | a⁻ⁿ (| g⁻ⁿ)] for the global action-value function.
pub fn global_side(kind: Option<EnvKind>, layout: &InputLayout, num_agents: usize, scale: f64) -> SideSpec {
    let len = features::global_aug_len(layout, num_agents);
    SideSpec {
        input_len: len,
        branch: BranchSpec::dense(vec![0..len], &[w(critic_side_width(kind), scale)]),
    }
}

/// Side branch over [sᵐ | s⁻ⁿ (| g⁻ⁿ)] for the credit function.
pub fn credit_side(kind: Option<EnvKind>, layout: &InputLayout, num_agents: usize, scale: f64) -> SideSpec {
    let len = features::credit_aug_len(layout, num_agents);
    SideSpec {
        input_len: len,
        branch: BranchSpec::dense(vec![0..len], &[w(critic_side_width(kind), scale)]),
    }
}

/// Independent value function V(o_self, g) for the IAC baseline.
pub fn value(kind: Option<EnvKind>, layout: &InputLayout, scale: f64) -> NetSpec {
    let input_len = features::policy_main_len(layout);
    match kind {
        Some(EnvKind::Checkers) => NetSpec {
            input_len,
            branches: vec![
                BranchSpec {
                    inputs: vec![0..VIEW_LEN],
                    layers: vec![view_conv()],
                },
                BranchSpec::passthrough(vec![
                    VIEW_LEN..VIEW_LEN + SELF_VECTOR,
                    layout.obs_self..input_len,
                ]),
            ],
            trunk: vec![w(256, scale), w(256, scale), 1],
        },
        _ => NetSpec::mlp(input_len, vec![w(64, scale), w(64, scale), 1]),
    }
}

pub fn value_side(kind: Option<EnvKind>, layout: &InputLayout, scale: f64) -> SideSpec {
    let len = layout.obs_others;
    let branch = match kind {
        Some(EnvKind::LaneMerge) => BranchSpec {
            inputs: vec![0..len],
            layers: vec![grid_conv(), LayerSpec::Dense { units: w(128, scale) }],
        },
        Some(EnvKind::Checkers) => BranchSpec::dense(vec![0..len], &[w(32, scale)]),
        _ => BranchSpec::dense(vec![0..len], &[w(128, scale)]),
    };
    SideSpec { input_len: len, branch }
}

/// COMA's centralized critic with one output per own action.
pub fn coma(kind: Option<EnvKind>, layout: &InputLayout, num_agents: usize, scale: f64) -> NetSpec {
    let input_len = features::coma_main_len(layout, num_agents);
    let a = layout.num_actions;
    match kind {
        Some(EnvKind::Checkers) => {
            let env_end = layout.env_state;
            let tail_start = input_len - layout.obs_self;
            NetSpec {
                input_len,
                branches: vec![
                    BranchSpec {
                        inputs: vec![0..env_end],
                        layers: vec![board_conv(layout)],
                    },
                    BranchSpec {
                        inputs: vec![tail_start..tail_start + VIEW_LEN],
                        layers: vec![view_conv()],
                    },
                    BranchSpec::passthrough(vec![
                        env_end..tail_start,
                        tail_start + VIEW_LEN..tail_start + VIEW_LEN + SELF_VECTOR,
                    ]),
                ],
                trunk: vec![w(256, scale), w(256, scale), a],
            }
        }
        _ => NetSpec::mlp(input_len, vec![w(128, scale), w(128, scale), a]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CheckersConfig, CheckersWorld, LaneMergeWorld, MergeConfig, NavConfig, NavigationWorld};
    use crate::game::MultiGoalGame;
    use crate::nn::net::AugmentableNet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build_all(kind: EnvKind, layout: &InputLayout, n: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = Some(kind);
        let pi = AugmentableNet::new(&policy(k, layout, 1.0), &mut rng).unwrap();
        pi.augment(&policy_side(k, layout, 1.0), None, &mut rng).unwrap();
        let q = AugmentableNet::new(&critic(k, layout, 1.0), &mut rng).unwrap();
        q.augment(&global_side(k, layout, n, 1.0), None, &mut rng).unwrap();
        q.augment(&credit_side(k, layout, n, 1.0), None, &mut rng).unwrap();
        let v = AugmentableNet::new(&value(k, layout, 1.0), &mut rng).unwrap();
        v.augment(&value_side(k, layout, 1.0), None, &mut rng).unwrap();
        AugmentableNet::new(&coma(k, layout, n, 1.0), &mut rng).unwrap();
    }

    #[test]
    fn navigation_widths() {
        let world = NavigationWorld::new(NavConfig::default()).unwrap();
        let layout = world.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pi = AugmentableNet::new(&policy(Some(EnvKind::Navigation), &layout, 1.0), &mut rng).unwrap();
        let widths: Vec<usize> = pi.trunk().iter().map(|l| l.output_len()).collect();
        assert_eq!(widths, vec![64, 64, 5]);
        assert_eq!(pi.trunk()[0].input_len(), 6);
        build_all(EnvKind::Navigation, &layout, 2);
    }

    #[test]
    fn lane_merge_shapes() {
        let world = LaneMergeWorld::new(MergeConfig::default()).unwrap();
        build_all(EnvKind::LaneMerge, &world.layout(), 2);
    }

    #[test]
    fn checkers_shapes() {
        for cfg in [CheckersConfig::default(), CheckersConfig::shrunk()] {
            let world = CheckersWorld::new(cfg).unwrap();
            build_all(EnvKind::Checkers, &world.layout(), 2);
        }
    }
}
