use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::rewards::{FirstStep, RewardShaper};

/// One possible result of taking an action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub detections: u32,
    /// Seconds until the next decision.
    pub sojourn: u64,
}

/// Finite semi-Markov decision process stored as outcome lists per
/// state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSMDP {
    outcomes: Vec<Vec<Vec<Outcome>>>,
}

const PROB_TOL: f64 = 1e-9;

impl TabularSMDP {
    /// `outcomes[s][a]` lists the outcomes of action `a` in state `s`.
    pub fn new(outcomes: Vec<Vec<Vec<Outcome>>>) -> Result<Self> {
        let n = outcomes.len();
        if n == 0 {
            return Err(config_err("decision process has no states"));
        }
        for (s, acts) in outcomes.iter().enumerate() {
            if acts.is_empty() {
                return Err(config_err(format!("state {s} has no actions")));
            }
            for (a, outs) in acts.iter().enumerate() {
                let mut total = 0.0;
                for o in outs {
                    if o.next >= n {
                        return Err(config_err(format!("({s}, {a}) leads to unknown state {}", o.next)));
                    }
                    if o.sojourn < 1 {
                        return Err(config_err(format!("({s}, {a}) has a zero sojourn outcome")));
                    }
                    if !(o.prob >= 0.0) {
                        return Err(config_err(format!("({s}, {a}) has a negative probability")));
                    }
                    total += o.prob;
                }
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(config_err(format!("({s}, {a}) probabilities sum to {total}")));
                }
            }
        }
        Ok(Self { outcomes })
    }

    pub fn n_states(&self) -> usize {
        self.outcomes.len()
    }

    pub fn n_actions(&self, s: usize) -> usize {
        self.outcomes[s].len()
    }

    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.outcomes[s][a]
    }

    pub fn expected_detections(&self, s: usize, a: usize) -> f64 {
        self.outcomes[s][a].iter().map(|o| o.prob * o.detections as f64).sum()
    }

    pub fn expected_sojourn(&self, s: usize, a: usize) -> f64 {
        self.outcomes[s][a].iter().map(|o| o.prob * o.sojourn as f64).sum()
    }

    /// Dense next-state distribution.
    pub fn transition_row(&self, s: usize, a: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n_states()];
        for o in &self.outcomes[s][a] {
            row[o.next] += o.prob;
        }
        row
    }

    /// Checks that every state can reach every other under some sequence of
    /// actions.
    pub fn check_communicating(&self) -> Result<()> {
        let n = self.n_states();
        for s in 0..n {
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for outs in &self.outcomes[u] {
                    for o in outs.iter().filter(|o| o.prob > 0.0) {
                        if !seen[o.next] {
                            seen[o.next] = true;
                            stack.push(o.next);
                        }
                    }
                }
            }
            if seen.iter().any(|&v| !v) {
                return Err(Error::NotUnichain(s));
            }
        }
        Ok(())
    }

    fn sample(&self, s: usize, a: usize, rng: &mut impl Rng) -> Outcome {
        let outs = &self.outcomes[s][a];
        let mut u = rng.gen::<f64>();
        for o in outs {
            if u < o.prob {
                return *o;
            }
            u -= o.prob;
        }
        *outs.iter().rev().find(|o| o.prob > 0.0).expect("row sums to one")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmdpSolution {
    /// Optimal detections per second.
    pub rho: f64,
    /// Differential values, `h[0] = 0`.
    pub h: Vec<f64>,
    pub policy: Vec<usize>,
}

const KAPPA: f64 = 0.5;
const MAX_SWEEPS: usize = 200_000;

/// One damped sweep for rewards `d − ρτ`. Returns the new values and bounds
/// on the optimal gain of that reward.
fn sweep(smdp: &TabularSMDP, rho: f64, v: &[f64]) -> (Vec<f64>, f64, f64) {
    let mut next = vec![0.0; v.len()];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in 0..v.len() {
        let best = (0..smdp.n_actions(s))
            .map(|a| {
                let cont: f64 = smdp.outcomes(s, a).iter().map(|o| o.prob * v[o.next]).sum();
                smdp.expected_detections(s, a) - rho * smdp.expected_sojourn(s, a) + cont
            })
            .fold(f64::NEG_INFINITY, f64::max);
        next[s] = (1.0 - KAPPA) * best + KAPPA * v[s];
        let diff = (next[s] - v[s]) / (1.0 - KAPPA);
        lo = lo.min(diff);
        hi = hi.max(diff);
    }
    let base = next[0];
    next.iter_mut().for_each(|x| *x -= base);
    (next, lo, hi)
}

/// Optimal gain by bisection on ρ: the per-step gain of `d − ρτ` is zero
/// exactly at ρ*, and relative value iteration brackets its sign.
pub fn smdp_value_iteration(smdp: &TabularSMDP, tolerance: f64) -> Result<SmdpSolution> {
    if !(tolerance > 0.0) {
        return Err(config_err("tolerance must be positive"));
    }
    smdp.check_communicating()?;
    let n = smdp.n_states();
    let ratios = (0..n).flat_map(|s| (0..smdp.n_actions(s)).map(move |a| (s, a)));
    let (mut lo, mut hi) = ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (s, a)| {
        let r = smdp.expected_detections(s, a) / smdp.expected_sojourn(s, a);
        (lo.min(r), hi.max(r))
    });
    let mut v = vec![0.0; n];
    let inner_eps = tolerance * 1e-3;
    while hi - lo > tolerance {
        let rho = 0.5 * (lo + hi);
        let mut sweeps = 0;
        loop {
            let (next, glo, ghi) = sweep(smdp, rho, &v);
            v = next;
            sweeps += 1;
            if glo > 0.0 {
                lo = rho;
                break;
            }
            if ghi < 0.0 {
                hi = rho;
                break;
            }
            if ghi - glo < inner_eps {
                // Gain indistinguishable from zero at this resolution.
                lo = rho;
                hi = rho;
                break;
            }
            if sweeps >= MAX_SWEEPS {
                return Err(Error::NoConvergence(sweeps));
            }
        }
    }
    let rho = 0.5 * (lo + hi);
    let mut sweeps = 0;
    loop {
        let (next, glo, ghi) = sweep(smdp, rho, &v);
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        sweeps += 1;
        if ghi - glo < inner_eps && change < inner_eps {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NoConvergence(sweeps));
        }
    }
    let policy = (0..n).map(|s| greedy_action(smdp, rho, &v, s)).collect();
    Ok(SmdpSolution { rho, h: v, policy })
}

fn greedy_action(smdp: &TabularSMDP, rho: f64, h: &[f64], s: usize) -> usize {
    let value = |a: usize| {
        let cont: f64 = smdp.outcomes(s, a).iter().map(|o| o.prob * h[o.next]).sum();
        smdp.expected_detections(s, a) - rho * smdp.expected_sojourn(s, a) + cont
    };
    let mut best = 0;
    let mut best_v = value(0);
    for a in 1..smdp.n_actions(s) {
        let q = value(a);
        if q > best_v + 1e-12 {
            best = a;
            best_v = q;
        }
    }
    best
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Long-run detections per second of each closed recurrent class of the
/// chain induced by a deterministic `policy`.
pub fn recurrent_class_rates(smdp: &TabularSMDP, policy: &[usize]) -> Vec<(Vec<usize>, f64)> {
    let n = smdp.n_states();
    let rows: Vec<Vec<f64>> = (0..n).map(|s| smdp.transition_row(s, policy[s])).collect();
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|s| {
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for (t, &p) in rows[u].iter().enumerate() {
                    if p > 0.0 && !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
            seen
        })
        .collect();
    let mut assigned = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if assigned[s] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&t| reach[s][t]).collect();
        if !class.iter().all(|&t| reach[t][s]) {
            continue;
        }
        class.iter().for_each(|&t| assigned[t] = true);
        let m = class.len();
        // μ (P − I) = 0 with the last equation replaced by Σ μ = 1.
        let mut a = vec![vec![0.0; m]; m];
        for (i, &ti) in class.iter().enumerate() {
            for (j, &tj) in class.iter().enumerate() {
                a[j][i] = rows[ti][tj] - if i == j { 1.0 } else { 0.0 };
            }
        }
        let mut b = vec![0.0; m];
        a[m - 1] = vec![1.0; m];
        b[m - 1] = 1.0;
        let mu = solve_dense(a, b).expect("irreducible chains have a unique stationary law");
        let (mut d, mut tau) = (0.0, 0.0);
        for (i, &t) in class.iter().enumerate() {
            d += mu[i] * smdp.expected_detections(t, policy[t]);
            tau += mu[i] * smdp.expected_sojourn(t, policy[t]);
        }
        out.push((class, d / tau));
    }
    out
}

/// Best gain over every deterministic stationary policy, with a policy that
/// attains it on its best recurrent class. Refuses more than `limit` policies.
pub fn enumerate_optimal_gain(smdp: &TabularSMDP, limit: u64) -> Result<(f64, Vec<usize>)> {
    let n = smdp.n_states();
    let mut count: u64 = 1;
    for s in 0..n {
        count = count.saturating_mul(smdp.n_actions(s) as u64);
    }
    if count > limit {
        return Err(config_err(format!("{count} policies exceed the enumeration limit {limit}")));
    }
    let mut policy = vec![0usize; n];
    let mut best = (f64::NEG_INFINITY, policy.clone());
    loop {
        for (_, rate) in recurrent_class_rates(smdp, &policy) {
            if rate > best.0 {
                best = (rate, policy.clone());
            }
        }
        // Odometer increment.
        let mut s = 0;
        loop {
            if s == n {
                return Ok(best);
            }
            policy[s] += 1;
            if policy[s] < smdp.n_actions(s) {
                break;
            }
            policy[s] = 0;
            s += 1;
        }
    }
}

/// Detections per second of `policy` over `steps` sampled decisions.
pub fn simulate_policy(smdp: &TabularSMDP, policy: &[usize], start: usize, steps: u64, rng: &mut impl Rng) -> f64 {
    let (mut d, mut t) = (0u64, 0u64);
    let mut s = start;
    for _ in 0..steps {
        let o = smdp.sample(s, policy[s], rng);
        d += o.detections as u64;
        t += o.sojourn;
        s = o.next;
    }
    d as f64 / t as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularConfig {
    pub steps: u64,
    pub start: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of `steps` over which ε decays linearly.
    pub explore_fraction: f64,
    pub rho_learning_rate: f64,
    /// Table step size is `q_learning_rate / (1 + visits / q_decay)`.
    pub q_learning_rate: f64,
    pub q_decay: f64,
    pub delta: f64,
    pub tau: u64,
    pub first_step: FirstStep,
    pub seed: u64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            steps: 2_000_000,
            start: 0,
            epsilon_start: 1.0,
            epsilon_end: 0.02,
            explore_fraction: 0.3,
            rho_learning_rate: 3e-4,
            q_learning_rate: 0.5,
            q_decay: 100.0,
            delta: 1e-9,
            tau: 1,
            first_step: FirstStep::Telescoped,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularResult {
    pub rho: f64,
    pub policy: Vec<usize>,
    pub q: Vec<Vec<f64>>,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// The deep learner's update rule on an exact table: ε-greedy behaviour,
/// telescoping rewards, double-Q targets, and gain updates from near-greedy
/// samples only.
pub fn tabular_r_learning(smdp: &TabularSMDP, cfg: &TabularConfig) -> Result<TabularResult> {
    if cfg.start >= smdp.n_states() {
        return Err(config_err("start state out of range"));
    }
    if !(cfg.delta > 0.0 && cfg.rho_learning_rate > 0.0 && cfg.q_learning_rate > 0.0 && cfg.tau >= 1) {
        return Err(config_err("tabular learner needs positive rates, δ and τ"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = smdp.n_states();
    let mut q: Vec<Vec<f64>> = (0..n).map(|s| vec![0.0; smdp.n_actions(s)]).collect();
    let mut q_target = q.clone();
    let mut visits: Vec<Vec<u64>> = (0..n).map(|s| vec![0; smdp.n_actions(s)]).collect();
    let mut shaper = RewardShaper::new(cfg.first_step);
    let mut rho = 0.0;
    let decay_steps = (cfg.explore_fraction * cfg.steps as f64).max(1.0);
    let mut s = cfg.start;
    for step in 0..cfg.steps {
        let frac = (step as f64 / decay_steps).min(1.0);
        let eps = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
        let a = if rng.gen::<f64>() < eps { rng.gen_range(0..smdp.n_actions(s)) } else { argmax(&q[s]) };
        let o = smdp.sample(s, a, &mut rng);
        let r = shaper.push(o.detections, o.sojourn)?;
        let a_next = argmax(&q[o.next]);
        let y = r - rho + q_target[o.next][a_next];
        let td = y - q[s][a];
        let greedy_gap = q[s][argmax(&q[s])] - q[s][a];
        visits[s][a] += 1;
        let beta = cfg.q_learning_rate / (1.0 + visits[s][a] as f64 / cfg.q_decay);
        q[s][a] += beta * td;
        if greedy_gap.abs() < cfg.delta {
            rho += cfg.rho_learning_rate * td;
        }
        if (step + 1) % cfg.tau == 0 {
            q_target.clone_from(&q);
        }
        s = o.next;
    }
    let policy = q.iter().map(|row| argmax(row)).collect();
    Ok(TabularResult { rho, policy, q })
}

/// Random dense SMDP: every outcome has positive probability, integer
/// detections in `0..=2` and sojourns in `1..=5` seconds.
pub fn random_smdp(n_states: usize, n_actions: usize, rng: &mut impl Rng) -> TabularSMDP {
    let outcomes = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| {
                    let w: Vec<f64> = (0..n_states).map(|_| rng.gen_range(0.05..1.0)).collect();
                    let total: f64 = w.iter().sum();
                    w.iter()
                        .enumerate()
                        .map(|(next, &x)| Outcome {
                            next,
                            prob: x / total,
                            detections: rng.gen_range(0..=2),
                            sojourn: rng.gen_range(1..=5),
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    TabularSMDP::new(outcomes).expect("generated rows are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(next: usize, prob: f64, detections: u32, sojourn: u64) -> Outcome {
        Outcome { next, prob, detections, sojourn }
    }

    #[test]
    fn rate_comparison_on_one_state() {
        let smdp = TabularSMDP::new(vec![vec![vec![det(0, 1.0, 1, 2)], vec![det(0, 1.0, 1, 4)]]]).unwrap();
        let sol = smdp_value_iteration(&smdp, 1e-9).unwrap();
        assert!((sol.rho - 0.5).abs() < 1e-8);
        assert_eq!(sol.policy, vec![0]);
        assert!((enumerate_optimal_gain(&smdp, 10).unwrap().0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn symmetric_states_share_values() {
        let row = |me: usize, other: usize| vec![vec![det(other, 0.5, 1, 2), det(me, 0.5, 0, 1)]];
        let smdp = TabularSMDP::new(vec![row(0, 1), row(1, 0)]).unwrap();
        let sol = smdp_value_iteration(&smdp, 1e-10).unwrap();
        assert!((sol.h[0] - sol.h[1]).abs() < 1e-8);
        assert!((sol.rho - 0.5 / 1.5).abs() < 1e-8);
    }

    #[test]
    fn invalid_rows_rejected() {
        assert!(TabularSMDP::new(vec![vec![vec![det(0, 0.7, 0, 1)]]]).is_err());
        assert!(TabularSMDP::new(vec![vec![vec![det(0, 1.0, 0, 0)]]]).is_err());
        assert!(TabularSMDP::new(vec![vec![vec![det(1, 1.0, 0, 1)]]]).is_err());
        assert!(TabularSMDP::new(vec![vec![]]).is_err());
    }

    #[test]
    fn disconnected_process_rejected() {
        let smdp = TabularSMDP::new(vec![vec![vec![det(0, 1.0, 1, 1)]], vec![vec![det(1, 1.0, 0, 1)]]]).unwrap();
        assert!(matches!(smdp_value_iteration(&smdp, 1e-6), Err(Error::NotUnichain(0))));
    }

    #[test]
    fn forced_gain_is_learned() {
        let smdp = TabularSMDP::new(vec![vec![vec![det(0, 0.5, 1, 1), det(0, 0.5, 0, 1)]]]).unwrap();
        let res = tabular_r_learning(&smdp, &TabularConfig { steps: 50_000, ..Default::default() }).unwrap();
        assert!((res.rho - 0.5).abs() < 0.02, "{}", res.rho);
    }

    #[test]
    fn hot_cell_is_kept() {
        // State 1 is the hot cell; staying there beats bouncing back to 0.
        let smdp = TabularSMDP::new(vec![
            vec![vec![det(0, 1.0, 0, 1)], vec![det(1, 1.0, 0, 1)]],
            vec![vec![det(0, 1.0, 0, 1)], vec![det(1, 1.0, 1, 1)]],
        ])
        .unwrap();
        let sol = smdp_value_iteration(&smdp, 1e-9).unwrap();
        assert_eq!(sol.policy[1], 1);
        let res = tabular_r_learning(&smdp, &TabularConfig { steps: 50_000, ..Default::default() }).unwrap();
        assert_eq!(res.policy[1], 1);
        assert_eq!(res.policy[0], 1);
    }

    #[test]
    fn value_iteration_matches_enumeration_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let smdp = random_smdp(5, 3, &mut rng);
            let vi = smdp_value_iteration(&smdp, 1e-10).unwrap();
            let (best, _) = enumerate_optimal_gain(&smdp, 1_000).unwrap();
            assert!((vi.rho - best).abs() < 1e-8, "{} vs {best}", vi.rho);
            let greedy_rate = recurrent_class_rates(&smdp, &vi.policy)[0].1;
            assert!((greedy_rate - best).abs() < 1e-8);
        }
    }

    #[test]
    fn stationary_rate_matches_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let smdp = random_smdp(4, 2, &mut rng);
        let policy = vec![1, 0, 1, 0];
        let exact = recurrent_class_rates(&smdp, &policy);
        assert_eq!(exact.len(), 1);
        let sim = simulate_policy(&smdp, &policy, 0, 400_000, &mut rng);
        assert!((sim - exact[0].1).abs() < 0.01 * exact[0].1, "{sim} vs {}", exact[0].1);
    }
}
