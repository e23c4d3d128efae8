//! Low-FPR metric suite and its CSV form.

use std::io::{BufRead, Write};

use super::roc::{roc_curve, RocCurve};
use crate::detectors::{DetectorKind, ScoreTable};
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str =
    "detector,boosted,auc,tpr_at_1pct,tpr_at_0p1pct,pauc_at_1pct,n_members,n_nonmembers,seed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub auc: f64,
    pub tpr_at_1pct: f64,
    pub tpr_at_0p1pct: f64,
    /// Unnormalized area over `FPR ∈ [0, 0.01]`.
    pub pauc_at_1pct: f64,
    pub n_members: u64,
    pub n_nonmembers: u64,
}

pub fn metrics(curve: &RocCurve) -> Metrics {
    Metrics {
        auc: curve.auc(),
        tpr_at_1pct: curve.tpr_at(0.01),
        tpr_at_0p1pct: curve.tpr_at(0.001),
        pauc_at_1pct: curve.partial_auc(0.01),
        n_members: curve.positives(),
        n_nonmembers: curve.negatives(),
    }
}

/// One row of a metrics report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub detector: DetectorKind,
    pub boosted: bool,
    pub metrics: Metrics,
    pub seed: u64,
}

/// Metrics of every `(detector, boosted)` series in `table`, in table order.
pub fn report(table: &ScoreTable, seed: u64) -> Result<Vec<MetricsReport>> {
    table
        .series()
        .into_iter()
        .map(|(detector, boosted)| {
            let (m, n) = table.scores(detector, boosted);
            Ok(MetricsReport {
                detector,
                boosted,
                metrics: metrics(&roc_curve(&m, &n)?),
                seed,
            })
        })
        .collect()
}

pub fn write_report(rows: &[MetricsReport], w: &mut impl Write) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        let m = &r.metrics;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.detector,
            u8::from(r.boosted),
            m.auc,
            m.tpr_at_1pct,
            m.tpr_at_0p1pct,
            m.pauc_at_1pct,
            m.n_members,
            m.n_nonmembers,
            r.seed
        )?;
    }
    Ok(())
}

pub fn read_report(r: impl BufRead) -> Result<Vec<MetricsReport>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(METRICS_HEADER) {
        return Err(Error::format("metrics report", "line 1: unexpected header"));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::format("metrics report", format!("line {}: malformed row", i + 2));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 9 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad());
        out.push(MetricsReport {
            detector: f[0].parse().map_err(|_| bad())?,
            boosted: match f[1] {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            },
            metrics: Metrics {
                auc: num(f[2])?,
                tpr_at_1pct: num(f[3])?,
                tpr_at_0p1pct: num(f[4])?,
                pauc_at_1pct: num(f[5])?,
                n_members: int(f[6])?,
                n_nonmembers: int(f[7])?,
            },
            seed: int(f[8])?,
        });
    }
    Ok(out)
}
