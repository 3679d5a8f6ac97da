//! Rate-telescoping rewards: the mean reward over `n` steps equals `φ_n / t_n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative counters after `n` decision steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardTracker {
    pub n: u64,
    /// Cumulative tracked quantity (detections).
    pub phi: f64,
    /// Cumulative seconds.
    pub t: f64,
}

/// How the reward of the first transition is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstStep {
    /// `φ_1 / t_1`, which makes the sum over `n` steps exactly `n φ_n / t_n`.
    #[default]
    Telescoped,
    /// Zero; the sum is then `n φ_n / t_n − φ_1 / t_1`.
    Zero,
}

impl RewardTracker {
    pub fn advance(&self, detections: f64, seconds: f64) -> Self {
        Self { n: self.n + 1, phi: self.phi + detections, t: self.t + seconds }
    }

    /// `n φ_n / t_n`, taken as 0 before the first step.
    pub fn scaled_rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.n as f64 * self.phi / self.t
        }
    }

    pub fn rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.phi / self.t
        }
    }
}

/// `(n+1) φ_{n+1} / t_{n+1} − n φ_n / t_n`, with `n = before.n`.
pub fn reward(before: &RewardTracker, after: &RewardTracker, first: FirstStep) -> Result<f64> {
    if after.n != before.n + 1 {
        return Err(Error::NonConsecutiveSteps { before: before.n, after: after.n });
    }
    if !(after.t > before.t) {
        return Err(Error::NonMonotonicTime { before: before.t, after: after.t });
    }
    if before.n == 0 && first == FirstStep::Zero {
        return Ok(0.0);
    }
    Ok(after.scaled_rate() - before.scaled_rate())
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean reward per decision step.
pub fn empirical_gain(rewards: &[f64]) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::EmptyList);
    }
    Ok(compensated_sum(rewards.iter().copied()) / rewards.len() as f64)
}

/// Stateful wrapper turning step outcomes into rewards.
#[derive(Debug, Clone, Copy, Default)]
pub struct RewardShaper {
    tracker: RewardTracker,
    first: FirstStep,
}

impl RewardShaper {
    pub fn new(first: FirstStep) -> Self {
        Self { tracker: RewardTracker::default(), first }
    }

    pub fn tracker(&self) -> &RewardTracker {
        &self.tracker
    }

    pub fn push(&mut self, detections: u32, seconds: u64) -> Result<f64> {
        let next = self.tracker.advance(detections as f64, seconds as f64);
        let r = reward(&self.tracker, &next, self.first)?;
        self.tracker = next;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tr(n: u64, phi: f64, t: f64) -> RewardTracker {
        RewardTracker { n, phi, t }
    }

    #[test]
    fn first_transition_modes() {
        let a = tr(0, 0.0, 0.0);
        let b = tr(1, 3.0, 2.0);
        assert_eq!(reward(&a, &b, FirstStep::Zero).unwrap(), 0.0);
        assert_eq!(reward(&a, &b, FirstStep::Telescoped).unwrap(), 1.5);
    }

    #[test]
    fn substituted_example() {
        let r = reward(&tr(1, 1.0, 2.0), &tr(2, 3.0, 4.0), FirstStep::Telescoped).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn rejects_bad_transitions() {
        assert!(matches!(
            reward(&tr(1, 0.0, 2.0), &tr(2, 0.0, 2.0), FirstStep::Telescoped),
            Err(Error::NonMonotonicTime { .. })
        ));
        assert!(matches!(
            reward(&tr(1, 0.0, 2.0), &tr(3, 0.0, 4.0), FirstStep::Telescoped),
            Err(Error::NonConsecutiveSteps { .. })
        ));
    }

    #[test]
    fn gain_examples() {
        assert_eq!(empirical_gain(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(empirical_gain(&[2.5; 7]).unwrap(), 2.5);
        assert!(matches!(empirical_gain(&[]), Err(Error::EmptyList)));
    }

    #[test]
    fn zero_mode_is_offset_by_first_rate() {
        let steps = [(2u32, 3u64), (0, 1), (1, 4), (5, 2)];
        let mut a = RewardShaper::new(FirstStep::Zero);
        let mut b = RewardShaper::new(FirstStep::Telescoped);
        let mut sa = 0.0;
        let mut sb = 0.0;
        for (d, s) in steps {
            sa += a.push(d, s).unwrap();
            sb += b.push(d, s).unwrap();
        }
        assert!((sb - sa - 2.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn telescopes(steps in prop::collection::vec((0u32..5, 1u64..20), 1..300)) {
            let mut shaper = RewardShaper::default();
            let mut rewards = Vec::new();
            for &(d, s) in &steps {
                rewards.push(shaper.push(d, s).unwrap());
            }
            let t = shaper.tracker();
            let target = t.phi / t.t;
            let gain = empirical_gain(&rewards).unwrap();
            prop_assert!((gain - target).abs() <= 1e-12 * target.abs().max(1e-300) || gain == target);
        }

        #[test]
        fn no_detections_sum_to_zero(durations in prop::collection::vec(1u64..30, 1..100)) {
            let mut shaper = RewardShaper::default();
            let rewards: Vec<f64> = durations.iter().map(|&s| shaper.push(0, s).unwrap()).collect();
            prop_assert!(rewards.iter().all(|&r| r <= 0.0));
            prop_assert_eq!(compensated_sum(rewards), 0.0);
        }
    }
}
