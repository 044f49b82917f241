//! Step-decay learning-rate programs.
//!
//! A program spans `horizon` epochs and multiplies the initial rate by
//! `drop_factor` once per drop point already passed. A drop point `p` takes
//! effect from epoch `ceil(p·horizon) + 1`, so with the default `[0.5, 0.75]`
//! over 200 epochs the rate changes at epochs 101 and 151.
//!
//! Two-stage training runs either one program across both stages
//! (stage-incomplete) or a complete program inside each stage
//! (stage-complete), which resets the rate at the stage boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    FullRun,
    StageComplete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub initial_lr: f64,
    pub horizon: usize,
    pub drop_factor: f64,
    pub drop_points: Vec<f64>,
    pub mode: ScheduleMode,
}

pub const DEFAULT_DROP_FACTOR: f64 = 0.1;
pub const DEFAULT_DROP_POINTS: [f64; 2] = [0.5, 0.75];

impl ScheduleConfig {
    /// A full-run program with the default drops.
    pub fn new(initial_lr: f64, horizon: usize) -> Self {
        Self {
            initial_lr,
            horizon,
            drop_factor: DEFAULT_DROP_FACTOR,
            drop_points: DEFAULT_DROP_POINTS.to_vec(),
            mode: ScheduleMode::FullRun,
        }
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::config("schedule.initial_lr", "must be positive and finite"));
        }
        if self.horizon == 0 {
            return Err(Error::config("schedule.horizon", "must be at least 1"));
        }
        if !(self.drop_factor > 0.0 && self.drop_factor <= 1.0) {
            return Err(Error::config("schedule.drop_factor", "must lie in (0, 1]"));
        }
        let mut prev = 0.0;
        for &p in &self.drop_points {
            if !(p > prev && p < 1.0) {
                return Err(Error::config(
                    "schedule.drop_points",
                    "must be strictly increasing fractions in (0, 1)",
                ));
            }
            prev = p;
        }
        Ok(())
    }

    /// Last epoch before each drop, i.e. `ceil(p·horizon)`.
    pub fn drop_epochs(&self) -> Vec<usize> {
        self.drop_points
            .iter()
            .map(|&p| {
                let x = p * self.horizon as f64;
                // 0.3 * 10 is 3.0000000000000004; treat near-integers as integers
                let r = x.round();
                if (x - r).abs() < 1e-9 {
                    r as usize
                } else {
                    x.ceil() as usize
                }
            })
            .collect()
    }

    /// Learning rate for epoch `t` (1-based) of this program.
    pub fn lr_at(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.horizon {
            return Err(Error::contract(format!(
                "epoch {t} outside schedule horizon 1..={}",
                self.horizon
            )));
        }
        let drops = self.drop_epochs().iter().filter(|&&e| t > e).count();
        Ok(decayed(self.initial_lr, self.drop_factor, drops))
    }
}

/// `lr0 · factor^k`, rounded to 15 significant digits so that decimal
/// settings give decimal rates (0.1 · 0.1 is 0.010000000000000002 in binary).
fn decayed(lr0: f64, factor: f64, k: usize) -> f64 {
    if k == 0 {
        return lr0;
    }
    let x = lr0 * factor.powi(k as i32);
    format!("{x:.14e}").parse().unwrap_or(x)
}

/// Learning rate at epoch `t` within one stage of a stage-complete run;
/// `cfg.horizon` is the stage length.
pub fn stage_complete_lr_at(cfg: &ScheduleConfig, t_within_stage: usize) -> Result<f64> {
    cfg.lr_at(t_within_stage)
}

/// Epochs given to the two stages of an `m`-epoch run: `ceil(m/2)` and
/// `floor(m/2)`.
pub fn stage_lengths(m: usize) -> (usize, usize) {
    (m.div_ceil(2), m / 2)
}

/// The learning-rate plan of a two-stage run spanning `base.horizon` epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStageSchedule {
    base: ScheduleConfig,
}

impl TwoStageSchedule {
    /// `base.horizon` is the total epoch budget M; `base.mode` selects whether
    /// each stage gets a complete program.
    pub fn new(base: ScheduleConfig) -> Result<Self> {
        base.validate()?;
        if base.horizon < 2 {
            return Err(Error::config("epochs", "two-stage training needs at least 2 epochs"));
        }
        Ok(Self { base })
    }

    pub fn total_epochs(&self) -> usize {
        self.base.horizon
    }

    pub fn mode(&self) -> ScheduleMode {
        self.base.mode
    }

    pub fn stage_len(&self, stage: usize) -> usize {
        let (a, b) = stage_lengths(self.base.horizon);
        if stage == 1 {
            a
        } else {
            b
        }
    }

    /// Learning rate for epoch `t` (1-based) within `stage` (1 or 2).
    pub fn lr(&self, stage: usize, t: usize) -> Result<f64> {
        if !(stage == 1 || stage == 2) {
            return Err(Error::contract(format!("stage must be 1 or 2, got {stage}")));
        }
        let len = self.stage_len(stage);
        if t == 0 || t > len {
            return Err(Error::contract(format!("epoch {t} outside stage {stage} (1..={len})")));
        }
        match self.base.mode {
            ScheduleMode::StageComplete => stage_complete_lr_at(&self.base.with_horizon(len), t),
            ScheduleMode::FullRun => {
                let offset = if stage == 1 { 0 } else { self.stage_len(1) };
                self.base.lr_at(offset + t)
            }
        }
    }

    /// Every epoch's rate across both stages, in run order.
    pub fn sequence(&self) -> Vec<f64> {
        (1..=2)
            .flat_map(|s| (1..=self.stage_len(s)).map(move |t| (s, t)))
            .map(|(s, t)| self.lr(s, t).expect("in range"))
            .collect()
    }
}

/// Number of epochs that start (or restart) at the initial rate after a
/// lower rate or at the beginning of the run.
pub fn count_resets(lrs: &[f64], initial_lr: f64) -> usize {
    lrs.iter()
        .enumerate()
        .filter(|&(i, &lr)| lr == initial_lr && (i == 0 || lrs[i - 1] < initial_lr))
        .count()
}
