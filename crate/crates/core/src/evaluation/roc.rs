//! ROC curves with exact integer bookkeeping.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called members; `+∞` for the origin.
    pub threshold: f64,
}

/// Operating points from the origin to `(1, 1)`, one per distinct score.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<RocPoint>,
    /// `(true positives, false positives)` at each point.
    counts: Vec<(u64, u64)>,
    positives: u64,
    negatives: u64,
}

impl RocCurve {
    pub fn points(&self) -> &[RocPoint] {
        &self.points
    }

    pub fn positives(&self) -> u64 {
        self.positives
    }

    pub fn negatives(&self) -> u64 {
        self.negatives
    }

    /// Raw area under the curve over `FPR ∈ [0, c]` by the trapezoid rule.
    /// Whole segments are summed in integers, so `partial_auc(1.0)` is the
    /// exact tie-aware pairwise probability rounded once.
    pub fn partial_auc(&self, c: f64) -> f64 {
        let c = c.clamp(0.0, 1.0);
        let n = self.negatives as f64;
        let mut numerator: u128 = 0;
        let mut i = 1;
        while i < self.counts.len() && self.counts[i].1 as f64 / n <= c {
            let (tp0, fp0) = self.counts[i - 1];
            let (tp1, fp1) = self.counts[i];
            numerator += u128::from(fp1 - fp0) * u128::from(tp0 + tp1);
            i += 1;
        }
        let denominator = 2.0 * self.positives as f64 * n;
        let mut area = numerator as f64 / denominator;
        if i < self.points.len() {
            let a = self.points[i - 1];
            if c > a.fpr {
                let tpr_c = interpolate(a, self.points[i], c);
                area += (c - a.fpr) * (a.tpr + tpr_c) / 2.0;
            }
        }
        area
    }

    pub fn auc(&self) -> f64 {
        self.partial_auc(1.0)
    }

    /// TPR at FPR `c`: the highest point with `FPR <= c`, linearly
    /// interpolated toward the next point.
    pub fn tpr_at(&self, c: f64) -> f64 {
        let c = c.clamp(0.0, 1.0);
        let i = self.points.iter().rposition(|p| p.fpr <= c).unwrap_or(0);
        let a = self.points[i];
        if a.fpr == c || i + 1 == self.points.len() {
            return a.tpr;
        }
        interpolate(a, self.points[i + 1], c)
    }
}

fn interpolate(a: RocPoint, b: RocPoint, c: f64) -> f64 {
    if b.fpr == a.fpr {
        return b.tpr;
    }
    a.tpr + (c - a.fpr) / (b.fpr - a.fpr) * (b.tpr - a.tpr)
}

/// Sweeps the threshold over distinct scores in descending order; equal
/// scores enter together.
pub fn roc_curve(members: &[f64], nonmembers: &[f64]) -> Result<RocCurve> {
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::invalid("ROC needs at least one member and one non-member"));
    }
    if members.iter().chain(nonmembers).any(|s| s.is_nan()) {
        return Err(Error::non_finite("ROC scores"));
    }
    let mut all: Vec<(f64, bool)> = members
        .iter()
        .map(|&s| (s, true))
        .chain(nonmembers.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (p, n) = (members.len() as u64, nonmembers.len() as u64);
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut counts = vec![(0, 0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < all.len() {
        let threshold = all[i].0;
        while i < all.len() && all[i].0 == threshold {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
            threshold,
        });
        counts.push((tp, fp));
    }
    Ok(RocCurve {
        points,
        counts,
        positives: p,
        negatives: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy(c: &RocCurve) -> Vec<(f64, f64)> {
        c.points().iter().map(|p| (p.fpr, p.tpr)).collect()
    }

    #[test]
    fn perfect_separation_reaches_the_corner() {
        let c = roc_curve(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
        assert!(xy(&c).contains(&(0.0, 1.0)));
        assert_eq!(c.auc(), 1.0);
        assert_eq!(c.tpr_at(0.01), 1.0);
        assert_eq!(c.partial_auc(0.01), 0.01);
    }

    #[test]
    fn one_tie_group_is_the_diagonal() {
        let c = roc_curve(&[0.5, 0.5], &[0.5]).unwrap();
        assert_eq!(xy(&c), vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(c.auc(), 0.5);
        assert_eq!(c.tpr_at(0.25), 0.25);
    }

    #[test]
    fn four_samples_match_threshold_enumeration() {
        let m = [0.9, 0.4];
        let n = [0.6, 0.1];
        let c = roc_curve(&m, &n).unwrap();
        let mut thresholds: Vec<f64> = m.iter().chain(&n).copied().collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        let mut expected = vec![(0.0, 0.0)];
        for t in thresholds {
            let tpr = m.iter().filter(|&&s| s >= t).count() as f64 / 2.0;
            let fpr = n.iter().filter(|&&s| s >= t).count() as f64 / 2.0;
            expected.push((fpr, tpr));
        }
        assert_eq!(xy(&c), expected);
        assert_eq!(c.auc(), 0.75);
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(roc_curve(&[1.0], &[]).is_err());
        assert!(roc_curve(&[], &[1.0]).is_err());
    }

    #[test]
    fn tpr_interpolates_within_a_segment() {
        // Points (0,0) → (0,0.5) → (0.5,0.5) → (0.5,1) → (1,1).
        let c = roc_curve(&[4.0, 2.0], &[3.0, 1.0]).unwrap();
        assert_eq!(c.tpr_at(0.0), 0.5);
        assert_eq!(c.tpr_at(0.25), 0.5);
        assert_eq!(c.tpr_at(0.5), 1.0);
    }
}
