//! Epoch-indexed learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant table or a single constant rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    /// `(start_epoch, lr)` rows; an epoch uses the last row whose start it
    /// has reached.
    Table { rows: Vec<(usize, f64)> },
    Constant { lr: f64 },
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self::step_decay()
    }
}

impl LrSchedule {
    /// 1e-3 until epoch 54, then one decade lower at 55, 71, 81, 86 and 91.
    /// Epoch 85 belongs to the 81 row.
    pub fn step_decay() -> Self {
        Self::Table {
            rows: vec![(1, 1e-3), (55, 1e-4), (71, 1e-5), (81, 1e-6), (86, 1e-7), (91, 1e-8)],
        }
    }

    pub fn constant(lr: f64) -> Self {
        Self::Constant { lr }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |lr: f64| lr > 0.0 && lr.is_finite();
        match self {
            Self::Constant { lr } if !positive(*lr) => {
                Err(Error::config(format!("learning rate must be positive, got {lr}")))
            }
            Self::Constant { .. } => Ok(()),
            Self::Table { rows } => {
                if rows.first().map(|r| r.0) != Some(1) {
                    return Err(Error::config("schedule table must start at epoch 1"));
                }
                if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::config("schedule epochs must be strictly increasing"));
                }
                if let Some((_, lr)) = rows.iter().find(|r| !positive(r.1)) {
                    return Err(Error::config(format!("learning rate must be positive, got {lr}")));
                }
                Ok(())
            }
        }
    }

    /// Rate for a 1-based epoch. Epoch 0 is treated as epoch 1.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        match self {
            Self::Constant { lr } => *lr,
            Self::Table { rows } => rows
                .iter()
                .take_while(|(start, _)| *start <= epoch.max(1))
                .last()
                .or(rows.first())
                .map(|r| r.1)
                .unwrap_or(0.0),
        }
    }

    /// Epochs in `2..=epochs` whose rate differs from the previous epoch.
    pub fn change_epochs(&self, epochs: usize) -> Vec<usize> {
        (2..=epochs)
            .filter(|&e| self.lr_at_epoch(e) != self.lr_at_epoch(e - 1))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_lookup() {
        let s = LrSchedule::step_decay();
        s.validate().unwrap();
        let expect = [
            (1, 1e-3),
            (10, 1e-3),
            (54, 1e-3),
            (55, 1e-4),
            (60, 1e-4),
            (70, 1e-4),
            (71, 1e-5),
            (80, 1e-5),
            (81, 1e-6),
            (85, 1e-6),
            (86, 1e-7),
            (90, 1e-7),
            (91, 1e-8),
            (100, 1e-8),
        ];
        for (epoch, lr) in expect {
            assert_eq!(s.lr_at_epoch(epoch), lr, "epoch {epoch}");
        }
        assert_eq!(s.change_epochs(100), [55, 71, 81, 86, 91]);
    }

    #[test]
    fn constant_mode() {
        for lr in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
            let s = LrSchedule::constant(lr);
            s.validate().unwrap();
            assert_eq!(s.lr_at_epoch(1), lr);
            assert_eq!(s.lr_at_epoch(500), lr);
            assert!(s.change_epochs(100).is_empty());
        }
        assert!(LrSchedule::constant(0.0).validate().is_err());
    }

    #[test]
    fn rejects_bad_tables() {
        let unordered = LrSchedule::Table {
            rows: vec![(1, 1e-3), (10, 1e-4), (10, 1e-5)],
        };
        assert!(unordered.validate().is_err());
        let late = LrSchedule::Table { rows: vec![(5, 1e-3)] };
        assert!(late.validate().is_err());
    }

    #[test]
    fn toml_forms() {
        let t: LrSchedule = toml::from_str("mode = \"constant\"\nlr = 0.01\n").unwrap();
        assert_eq!(t, LrSchedule::constant(0.01));
        let t: LrSchedule = toml::from_str("mode = \"table\"\nrows = [[1, 0.1], [3, 0.01]]\n").unwrap();
        assert_eq!(t.lr_at_epoch(3), 0.01);
    }

    proptest! {
        #[test]
        fn step_decay_is_non_increasing(e in 1usize..400) {
            let s = LrSchedule::step_decay();
            prop_assert!(s.lr_at_epoch(e + 1) <= s.lr_at_epoch(e));
        }
    }
}
