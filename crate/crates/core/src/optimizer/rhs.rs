//! Redundancy hierarchical strategy: filter a front column by column with a shrinking
//! tolerance until one row is left.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhsConfig {
    /// Column indices in priority order.
    pub priority: Vec<usize>,
    /// Initial redundancy factor.
    pub alpha: f64,
    /// Decay of the redundancy factor.
    pub beta: f64,
}

impl RhsConfig {
    /// Priority equal to the column order, with α = β = 0.9.
    pub fn in_order(columns: usize) -> Self {
        RhsConfig {
            priority: (0..columns).collect(),
            alpha: 0.9,
            beta: 0.9,
        }
    }

    pub fn validate(&self, columns: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0 && self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Validation("alpha and beta must lie in (0, 1)".into()));
        }
        let mut seen = vec![false; columns];
        for &c in &self.priority {
            if c >= columns || seen[c] {
                return Err(Error::Validation(format!(
                    "priority must be a permutation of the {columns} front columns"
                )));
            }
            seen[c] = true;
        }
        if self.priority.len() != columns {
            return Err(Error::Validation(format!(
                "priority must be a permutation of the {columns} front columns"
            )));
        }
        Ok(())
    }
}

const MAX_ITERATIONS: usize = 100_000;

/// Index of the selected row.
pub fn rhs_select(rows: &[Vec<f64>], cfg: &RhsConfig) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::Domain("cannot select from an empty front".into()));
    }
    cfg.validate(rows[0].len())?;
    let mut alive: Vec<usize> = (0..rows.len()).collect();
    let mut alpha = cfg.alpha;
    let mut i = 0usize;
    while alive.len() > 1 && i < MAX_ITERATIONS {
        let first = &rows[alive[0]];
        if alive
            .iter()
            .all(|&r| cfg.priority.iter().all(|&c| rows[r][c] == first[c]))
        {
            break;
        }
        let col = cfg.priority[i % cfg.priority.len()];
        let (vmi, vma) = alive
            .iter()
            .map(|&r| rows[r][col])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let vr = vmi + (vma - vmi) * alpha;
        let kept: Vec<usize> = alive.iter().copied().filter(|&r| rows[r][col] <= vr).collect();
        alive = if kept.is_empty() {
            alive.into_iter().filter(|&r| rows[r][col] == vmi).collect()
        } else {
            kept
        };
        alpha *= cfg.beta.powi(i as i32);
        i += 1;
    }
    Ok(alive[0])
}
