//! Learning-rate schedules.
//!
//! Steps are 1-based. Cyclic schedules split `total_steps` into cycles of
//! `cycle_len()` steps and reach their per-cycle minimum on the last step of
//! each cycle, which is where the ensembling strategies capture weights.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    SnapshotCosine,
    SwaLinear,
    FastCyclic,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::SnapshotCosine => "snapshot_cosine",
            ScheduleKind::SwaLinear => "swa_linear",
            ScheduleKind::FastCyclic => "fast_cyclic",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "snapshot_cosine" => Ok(ScheduleKind::SnapshotCosine),
            "swa_linear" => Ok(ScheduleKind::SwaLinear),
            "fast_cyclic" => Ok(ScheduleKind::FastCyclic),
            other => Err(Error::Config(format!("unknown schedule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub kind: ScheduleKind,
    /// Initial / upper rate (`a0` for the snapshot cosine).
    pub alpha1: f64,
    /// Lower rate; unused by `constant` and `snapshot_cosine`.
    pub alpha2: f64,
    pub total_steps: usize,
    /// Cycle count M for `snapshot_cosine` and `fast_cyclic`, cycle length c
    /// for `swa_linear`, ignored by `constant`.
    pub cycles_or_c: usize,
}

impl LrSchedule {
    pub fn constant(lr: f64, total_steps: usize) -> Result<Self> {
        Self::new(ScheduleKind::Constant, lr, lr, total_steps, 1)
    }

    pub fn snapshot_cosine(a0: f64, total_steps: usize, cycles: usize) -> Result<Self> {
        Self::new(ScheduleKind::SnapshotCosine, a0, 0.0, total_steps, cycles)
    }

    pub fn swa_linear(alpha1: f64, alpha2: f64, total_steps: usize, c: usize) -> Result<Self> {
        Self::new(ScheduleKind::SwaLinear, alpha1, alpha2, total_steps, c)
    }

    pub fn fast_cyclic(alpha1: f64, alpha2: f64, total_steps: usize, cycles: usize) -> Result<Self> {
        Self::new(ScheduleKind::FastCyclic, alpha1, alpha2, total_steps, cycles)
    }

    pub fn new(kind: ScheduleKind, alpha1: f64, alpha2: f64, total_steps: usize, cycles_or_c: usize) -> Result<Self> {
        let s = Self {
            kind,
            alpha1,
            alpha2,
            total_steps,
            cycles_or_c,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) || !self.alpha1.is_finite() || !self.alpha2.is_finite() {
            return Err(Error::Config("learning rates must be finite and >= 0".into()));
        }
        if self.alpha2 > self.alpha1 {
            return Err(Error::Config(format!(
                "lower rate {} exceeds upper rate {}",
                self.alpha2, self.alpha1
            )));
        }
        if self.cycles_or_c == 0 || self.total_steps < self.cycles_or_c {
            return Err(Error::Config(format!(
                "need total_steps ({}) >= cycles/cycle length ({}) >= 1",
                self.total_steps, self.cycles_or_c
            )));
        }
        Ok(())
    }

    /// Steps per cycle: `ceil(T / M)` for the cycle-count schedules, `c` for
    /// SWA, `T` for constant.
    pub fn cycle_len(&self) -> usize {
        match self.kind {
            ScheduleKind::Constant => self.total_steps,
            ScheduleKind::SwaLinear => self.cycles_or_c,
            ScheduleKind::SnapshotCosine | ScheduleKind::FastCyclic => self.total_steps.div_ceil(self.cycles_or_c),
        }
    }

    /// Learning rate for 1-based step `t`.
    pub fn lr_at(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.total_steps {
            return Err(Error::Usage(format!("step {t} outside 1..={}", self.total_steps)));
        }
        let len = self.cycle_len();
        let pos = (t - 1) % len;
        Ok(match self.kind {
            ScheduleKind::Constant => self.alpha1,
            ScheduleKind::SnapshotCosine => self.alpha1 / 2.0 * ((PI * pos as f64 / len as f64).cos() + 1.0),
            ScheduleKind::SwaLinear | ScheduleKind::FastCyclic => linear_anneal(self.alpha1, self.alpha2, pos, len),
        })
    }

    /// Whether step `t` closes a cycle (`t mod cycle_len == 0`).
    pub fn is_cycle_end(&self, t: usize) -> bool {
        t.is_multiple_of(self.cycle_len())
    }

    /// Every cycle-closing step in `1..=total_steps`.
    pub fn cycle_ends(&self) -> Vec<usize> {
        (1..=self.total_steps).filter(|&t| self.is_cycle_end(t)).collect()
    }
}

/// `alpha1` at the first step of a cycle of `len` steps, `alpha2` at the
/// last, linear in between. A one-step cycle stays at `alpha1`.
fn linear_anneal(alpha1: f64, alpha2: f64, pos: usize, len: usize) -> f64 {
    if len <= 1 {
        return alpha1;
    }
    let frac = pos as f64 / (len - 1) as f64;
    alpha1 - (alpha1 - alpha2) * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_cosine_examples() {
        let s = LrSchedule::snapshot_cosine(0.1, 100, 5).unwrap();
        assert_eq!(s.cycle_len(), 20);
        assert_eq!(s.lr_at(1).unwrap(), 0.1);
        assert!((s.lr_at(11).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(s.lr_at(21).unwrap(), 0.1);
        assert_eq!(s.cycle_ends(), vec![20, 40, 60, 80, 100]);
    }

    #[test]
    fn swa_unit_cycle_is_constant() {
        let s = LrSchedule::swa_linear(5e-6, 2e-6, 10, 1).unwrap();
        for t in 1..=10 {
            assert_eq!(s.lr_at(t).unwrap(), 5e-6);
        }
    }

    #[test]
    fn swa_linear_hits_bounds() {
        let s = LrSchedule::swa_linear(5e-6, 2e-6, 10, 5).unwrap();
        assert_eq!(s.lr_at(1).unwrap(), 5e-6);
        assert_eq!(s.lr_at(5).unwrap(), 2e-6);
        assert_eq!(s.lr_at(6).unwrap(), 5e-6);
        assert_eq!(s.cycle_ends(), vec![5, 10]);
    }

    #[test]
    fn constant_everywhere() {
        let s = LrSchedule::constant(3e-4, 7).unwrap();
        assert!((1..=7).all(|t| s.lr_at(t).unwrap() == 3e-4));
    }

    #[test]
    fn out_of_range_step() {
        let s = LrSchedule::constant(1.0, 3).unwrap();
        assert!(matches!(s.lr_at(0), Err(Error::Usage(_))));
        assert!(matches!(s.lr_at(4), Err(Error::Usage(_))));
    }

    #[test]
    fn invalid_schedules() {
        assert!(LrSchedule::swa_linear(1e-6, 2e-6, 10, 5).is_err());
        assert!(LrSchedule::fast_cyclic(1.0, 0.1, 3, 4).is_err());
        assert!(LrSchedule::snapshot_cosine(-1.0, 3, 1).is_err());
    }
}
