use std::io::Write;

use crate::config::AgentKind;
use crate::error::Result;

/// `100 (ours − base) / base`.
pub fn percent_difference(ours: f64, base: f64) -> f64 {
    100.0 * (ours - base) / base
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRow {
    pub instance: usize,
    pub seed: u64,
    pub ours_adt: f64,
    pub ours_dps: f64,
    pub base_adt: f64,
    pub base_dps: f64,
    pub adt_pct: f64,
    pub dps_pct: f64,
}

impl InstanceRow {
    /// `ours` and `base` are `(adt, dps)` pairs.
    pub fn new(instance: usize, seed: u64, ours: (f64, f64), base: (f64, f64)) -> Self {
        Self {
            instance,
            seed,
            ours_adt: ours.0,
            ours_dps: ours.1,
            base_adt: base.0,
            base_dps: base.1,
            adt_pct: percent_difference(ours.0, base.0),
            dps_pct: percent_difference(ours.1, base.1),
        }
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Paired one-sided sign test of "ours beats base".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(X ≥ wins)` for `X ~ Bin(wins + losses, 1/2)`.
    pub p_value: f64,
}

pub fn sign_test(pairs: impl IntoIterator<Item = (f64, f64)>) -> SignTest {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (a, b) in pairs {
        if a > b {
            wins += 1;
        } else if a < b {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    let n = wins + losses;
    let mut p = 0.0;
    let mut binom = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            binom = binom * (n - k + 1) as f64 / k as f64;
        }
        if k >= wins {
            p += binom;
        }
    }
    SignTest { wins, losses, ties, p_value: p / 2f64.powi(n as i32) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub ours: AgentKind,
    pub base: AgentKind,
    pub rows: Vec<InstanceRow>,
}

impl ComparisonReport {
    pub fn new(ours: AgentKind, base: AgentKind, rows: Vec<InstanceRow>) -> Self {
        Self { ours, base, rows }
    }

    fn column(&self, f: impl Fn(&InstanceRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn adt_pct(&self) -> Summary {
        Summary::of(&self.column(|r| r.adt_pct))
    }

    pub fn dps_pct(&self) -> Summary {
        Summary::of(&self.column(|r| r.dps_pct))
    }

    pub fn dps_sign_test(&self) -> SignTest {
        sign_test(self.rows.iter().map(|r| (r.ours_dps, r.base_dps)))
    }

    /// Instances where ours has lower DPS and higher ADT than base.
    pub fn worse_on_both(&self) -> usize {
        self.rows.iter().filter(|r| r.ours_dps < r.base_dps && r.ours_adt > r.base_adt).count()
    }

    /// One row per instance, then a `mean` row whose two trailing columns
    /// hold the standard deviations of the percentage differences.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "instance,seed,ours,base,ours_adt,ours_dps,base_adt,base_dps,adt_pct_diff,dps_pct_diff,adt_pct_std,dps_pct_std"
        )?;
        let (o, b) = (self.ours.name(), self.base.name());
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{o},{b},{},{},{},{},{},{},,",
                r.instance, r.seed, r.ours_adt, r.ours_dps, r.base_adt, r.base_dps, r.adt_pct, r.dps_pct
            )?;
        }
        let mean = |f: fn(&InstanceRow) -> f64| Summary::of(&self.column(f)).mean;
        let (adt, dps) = (self.adt_pct(), self.dps_pct());
        writeln!(
            out,
            "mean,,{o},{b},{},{},{},{},{},{},{},{}",
            mean(|r| r.ours_adt),
            mean(|r| r.ours_dps),
            mean(|r| r.base_adt),
            mean(|r| r.base_dps),
            adt.mean,
            dps.mean,
            adt.std,
            dps.std
        )?;
        Ok(())
    }
}
