//! Hyperparameter selection on attack-validation scores.

use std::cmp::Ordering;

use super::roc::roc_curve;
use crate::data::SplitRole;
use crate::detectors::{DetectorKind, ScoreTable};
use crate::error::{Error, Result};
use crate::interrogation::{InterrogationConfig, LayerSelection};
use crate::model::GroupName;

pub const GRID_STEPS: [usize; 3] = [80, 120, 200];
pub const GRID_LR: [f64; 3] = [0.05, 0.1, 0.2];

/// One interrogation setting of the search grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub steps: usize,
    pub lr: f64,
    pub clip: bool,
    pub group: GroupName,
}

impl GridPoint {
    /// `base` with this point's steps, learning rate, clipping and layer group
    /// (equal layer weights).
    pub fn apply(&self, base: &InterrogationConfig) -> InterrogationConfig {
        InterrogationConfig {
            steps: self.steps,
            lr: self.lr,
            clip: self.clip,
            layers: LayerSelection::Group(self.group),
            weights: None,
            ..base.clone()
        }
    }

    /// Tie-break order: fewer steps, lower lr, clipping first, shallower group.
    fn tie_order(&self, other: &Self) -> Ordering {
        self.steps
            .cmp(&other.steps)
            .then(self.lr.total_cmp(&other.lr))
            .then(other.clip.cmp(&self.clip))
            .then(self.group.cmp(&other.group))
    }
}

/// The full 3 × 3 × 2 × 4 grid over steps, learning rate, clipping and layer group.
pub fn search_grid() -> Vec<GridPoint> {
    let mut out = Vec::with_capacity(72);
    for &steps in &GRID_STEPS {
        for &lr in &GRID_LR {
            for clip in [true, false] {
                for group in GroupName::ALL {
                    out.push(GridPoint { steps, lr, clip, group });
                }
            }
        }
    }
    out
}

/// A score table known to come from the attack-validation split. The only
/// constructor checks the role, so selection cannot see attack-test scores.
#[derive(Debug, Clone)]
pub struct ValidationTable(ScoreTable);

impl ValidationTable {
    pub fn new(table: ScoreTable) -> Result<Self> {
        if table.role() != SplitRole::AttackValidation {
            return Err(Error::invalid(
                "hyperparameter selection only accepts attack-validation scores",
            ));
        }
        Ok(ValidationTable(table))
    }

    pub fn table(&self) -> &ScoreTable {
        &self.0
    }
}

/// pAUC@1% of the boosted `detector` series of one validation table.
pub fn validation_pauc(table: &ValidationTable, detector: DetectorKind) -> Result<f64> {
    let (m, n) = table.0.scores(detector, true);
    Ok(roc_curve(&m, &n)?.partial_auc(0.01))
}

/// Grid point with the highest pAUC@1% FPR for `detector`, ties broken by [`GridPoint`] order.
pub fn tune_select(candidates: &[(GridPoint, ValidationTable)], detector: DetectorKind) -> Result<GridPoint> {
    let mut best: Option<(GridPoint, f64)> = None;
    for (point, table) in candidates {
        let score = validation_pauc(table, detector)?;
        best = match best {
            None => Some((*point, score)),
            Some((bp, bs)) => {
                if score > bs || (score == bs && point.tie_order(&bp) == Ordering::Less) {
                    Some((*point, score))
                } else {
                    Some((bp, bs))
                }
            }
        };
    }
    best.map(|(p, _)| p)
        .ok_or_else(|| Error::invalid("no candidate configurations to select from"))
}
