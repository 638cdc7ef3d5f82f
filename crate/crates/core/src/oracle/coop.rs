//! Closed-form probability that two ε-greedy agents in a 4×3 gridworld
//! stumble onto a symmetric cooperative trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CooperationProbability {
    /// Agents mix greedy moves with uniform ones at rate ε.
    pub greedy_mix: f64,
    /// Both agents act uniformly at random.
    pub uniform: f64,
}

/// 2ε²((1−ε) + ε/4)⁸, together with its ε = 1 value.
pub fn cooperation_probability(epsilon: f64) -> Result<CooperationProbability> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("exploration {epsilon} outside [0, 1]")));
    }
    let closed = |e: f64| 2.0 * e * e * ((1.0 - e) + e / 4.0).powi(8);
    Ok(CooperationProbability {
        greedy_mix: closed(epsilon),
        uniform: closed(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let p = cooperation_probability(0.5).unwrap();
        assert!((p.greedy_mix - 2.0 * 0.25 * 0.625f64.powi(8)).abs() < 1e-15);
        assert_eq!(p.uniform, 2.0 / 65536.0);
        assert_eq!(cooperation_probability(0.0).unwrap().greedy_mix, 0.0);
        assert!(cooperation_probability(1.5).is_err());
    }
}
