//! Membership detectors, the obfuscation defense, score tables and the
//! interrogate-then-detect composition.
//!
//! Every detector maps a query `(x, y)` to a score where higher means
//! "more likely a training member".

pub mod glir;
pub mod grad;
pub mod ia;
pub mod laeq;
pub mod obfuscation;
pub mod sif;

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

pub use glir::{glir_fit, GlirConfig, GlirMode, GlirModel};
pub use grad::{grad_feature, subsample_indices};
pub use ia::{ia_features, ia_fit, IaConfig, IaMeta, ShadowSet};
pub use laeq::{laeq_score, LaeqConfig};
pub use obfuscation::{obfuscate_trace, Obfuscation};
pub use sif::{lissa_cg, Sif, SifConfig};

use crate::data::{Bounds, Dataset, SplitRole};
use crate::error::{Error, Result};
use crate::interrogation::{interrogate, InterrogationConfig};
use crate::model::Model;
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectorKind {
    Glir,
    Loss,
    Laeq,
    Sif,
    Ia,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::Glir,
        DetectorKind::Loss,
        DetectorKind::Laeq,
        DetectorKind::Sif,
        DetectorKind::Ia,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Glir => "glir",
            DetectorKind::Loss => "loss",
            DetectorKind::Laeq => "laeq",
            DetectorKind::Sif => "sif",
            DetectorKind::Ia => "ia",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown detector `{s}`")))
    }
}

/// A detector kind with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSpec {
    Glir(GlirConfig),
    Loss,
    Laeq(LaeqConfig),
    Sif(SifConfig),
    Ia(IaConfig),
}

impl DetectorSpec {
    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorSpec::Glir(_) => DetectorKind::Glir,
            DetectorSpec::Loss => DetectorKind::Loss,
            DetectorSpec::Laeq(_) => DetectorKind::Laeq,
            DetectorSpec::Sif(_) => DetectorKind::Sif,
            DetectorSpec::Ia(_) => DetectorKind::Ia,
        }
    }

    pub fn default_for(kind: DetectorKind) -> Self {
        match kind {
            DetectorKind::Glir => DetectorSpec::Glir(GlirConfig::default()),
            DetectorKind::Loss => DetectorSpec::Loss,
            DetectorKind::Laeq => DetectorSpec::Laeq(LaeqConfig::default()),
            DetectorKind::Sif => DetectorSpec::Sif(SifConfig::default()),
            DetectorKind::Ia => DetectorSpec::Ia(IaConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DetectorSpec::Glir(c) => c.validate(),
            DetectorSpec::Loss => Ok(()),
            DetectorSpec::Laeq(c) => c.validate(),
            DetectorSpec::Sif(c) => c.validate(),
            DetectorSpec::Ia(c) => c.validate(),
        }
    }
}

/// What fitting may draw on: calibration members and non-members of the
/// target (attack-validation) and, for IA, shadow models.
pub struct FitContext<'a, S> {
    pub model: &'a Model<S>,
    pub data: &'a Dataset<S>,
    pub members: &'a [usize],
    pub nonmembers: &'a [usize],
    pub shadows: &'a [ShadowSet<S>],
    /// Defense interposed on activations the detector reads.
    pub defense: Option<Obfuscation>,
}

/// A detector ready to score queries.
#[derive(Debug, Clone)]
pub enum Detector {
    Glir(GlirModel),
    Loss,
    Laeq(LaeqConfig),
    Sif(Sif),
    Ia(IaMeta),
}

impl Detector {
    pub fn fit<S: Real>(spec: &DetectorSpec, ctx: &FitContext<'_, S>) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            DetectorSpec::Glir(cfg) => {
                ctx.data.check_ids(ctx.members)?;
                ctx.data.check_ids(ctx.nonmembers)?;
                let pick = |ids: &[usize]| ids.iter().map(|&i| (ctx.data.x(i), ctx.data.y(i))).collect::<Vec<_>>();
                Detector::Glir(glir_fit(ctx.model, &pick(ctx.members), &pick(ctx.nonmembers), cfg)?)
            }
            DetectorSpec::Loss => Detector::Loss,
            DetectorSpec::Laeq(cfg) => Detector::Laeq(*cfg),
            DetectorSpec::Sif(cfg) => Detector::Sif(Sif::new(ctx.model, *cfg)?),
            DetectorSpec::Ia(cfg) => Detector::Ia(ia_fit(ctx.model.spec(), ctx.shadows, cfg, ctx.defense)?),
        })
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::Glir(_) => DetectorKind::Glir,
            Detector::Loss => DetectorKind::Loss,
            Detector::Laeq(_) => DetectorKind::Laeq,
            Detector::Sif(_) => DetectorKind::Sif,
            Detector::Ia(_) => DetectorKind::Ia,
        }
    }

    pub fn score<S: Real>(&self, model: &Model<S>, x: &Tensor<S>, y: usize) -> Result<f64> {
        let s = match self {
            Detector::Glir(g) => g.score(model, x, y)?,
            Detector::Loss => loss_score(model, x, y)?,
            Detector::Laeq(cfg) => laeq_score(model, x, y, cfg)?,
            Detector::Sif(s) => s.score(model, x, y)?,
            Detector::Ia(meta) => meta.score(model, x, y)?,
        };
        if !s.is_finite() {
            return Err(Error::non_finite(format!("{} score", self.kind())));
        }
        Ok(s)
    }
}

/// Negative cross-entropy.
pub fn loss_score<S: Real>(model: &Model<S>, x: &Tensor<S>, y: usize) -> Result<f64> {
    Ok(-model.loss(x, y)?.as_f64())
}

/// Scores the interrogation image of `x` with an unchanged detector, keeping the query's label.
pub fn boosted_score<S: Real>(
    model: &Model<S>,
    x: &Tensor<S>,
    y: usize,
    icfg: &InterrogationConfig,
    detector: &Detector,
    bounds: &Bounds<S>,
) -> Result<f64> {
    let xg = interrogate(model, x, icfg, bounds)?;
    detector.score(model, &xg, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub sample_id: usize,
    pub is_member: bool,
    pub detector: DetectorKind,
    pub boosted: bool,
    pub score: f64,
}

/// Detector scores over one attack split.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    role: SplitRole,
    rows: Vec<ScoreRow>,
    keys: HashSet<(usize, DetectorKind, bool)>,
}

pub const SCORE_HEADER: &str = "sample_id,is_member,detector,boosted,score";

impl ScoreTable {
    pub fn new(role: SplitRole) -> Self {
        ScoreTable {
            role,
            rows: Vec::new(),
            keys: HashSet::new(),
        }
    }

    pub fn from_rows(role: SplitRole, rows: impl IntoIterator<Item = ScoreRow>) -> Result<Self> {
        let mut t = ScoreTable::new(role);
        for r in rows {
            t.push(r)?;
        }
        Ok(t)
    }

    pub fn role(&self) -> SplitRole {
        self.role
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn push(&mut self, row: ScoreRow) -> Result<()> {
        if !row.score.is_finite() {
            return Err(Error::non_finite(format!("score of sample {}", row.sample_id)));
        }
        if !self.keys.insert((row.sample_id, row.detector, row.boosted)) {
            return Err(Error::invalid(format!(
                "duplicate score for sample {} ({}, boosted={})",
                row.sample_id, row.detector, row.boosted
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Appends every row of `other`, which must come from the same split.
    pub fn extend(&mut self, other: ScoreTable) -> Result<()> {
        if other.role != self.role {
            return Err(Error::invalid("cannot merge score tables from different splits"));
        }
        for r in other.rows {
            self.push(r)?;
        }
        Ok(())
    }

    /// Distinct `(detector, boosted)` pairs in first-seen order.
    pub fn series(&self) -> Vec<(DetectorKind, bool)> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&(r.detector, r.boosted)) {
                seen.push((r.detector, r.boosted));
            }
        }
        seen
    }

    /// `(member scores, non-member scores)` of one series.
    pub fn scores(&self, detector: DetectorKind, boosted: bool) -> (Vec<f64>, Vec<f64>) {
        let mut m = Vec::new();
        let mut n = Vec::new();
        for r in self
            .rows
            .iter()
            .filter(|r| r.detector == detector && r.boosted == boosted)
        {
            if r.is_member {
                m.push(r.score);
            } else {
                n.push(r.score);
            }
        }
        (m, n)
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{SCORE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.sample_id,
                u8::from(r.is_member),
                r.detector,
                u8::from(r.boosted),
                r.score
            )?;
        }
        Ok(())
    }

    /// Parses a table written by [`ScoreTable::write_csv`]; errors name the 1-based line.
    pub fn read_csv(r: impl BufRead, role: SplitRole) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?;
        match header {
            Some(h) if h.trim() == SCORE_HEADER => {}
            _ => {
                return Err(Error::format(
                    "score table",
                    format!("line 1: expected header `{SCORE_HEADER}`"),
                ))
            }
        }
        let mut table = ScoreTable::new(role);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::format("score table", format!("line {lineno}: {what}"));
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 5 {
                return Err(bad(&format!("expected 5 fields, got {}", fields.len())));
            }
            let flag = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(&format!("expected 0 or 1, got `{s}`"))),
            };
            let row = ScoreRow {
                sample_id: fields[0].parse().map_err(|_| bad("bad sample id"))?,
                is_member: flag(fields[1])?,
                detector: fields[2]
                    .parse()
                    .map_err(|_| bad(&format!("unknown detector `{}`", fields[2])))?,
                boosted: flag(fields[3])?,
                score: fields[4].parse().map_err(|_| bad("bad score"))?,
            };
            table.push(row).map_err(|e| bad(&e.to_string()))?;
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, Architecture};

    fn row(id: usize, member: bool, score: f64) -> ScoreRow {
        ScoreRow {
            sample_id: id,
            is_member: member,
            detector: DetectorKind::Loss,
            boosted: false,
            score,
        }
    }

    #[test]
    fn uniform_prediction_scores_minus_log_classes() {
        let m = build_model::<f64>(Architecture::TinyMlp, &[2], 4, 0).unwrap();
        let zero = m.with_params(crate::model::ParamSet::zeros(m.spec())).unwrap();
        let s = loss_score(&zero, &Tensor::vector(vec![0.3, 0.1]).unwrap(), 2).unwrap();
        assert!((s + 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let t = ScoreTable::from_rows(
            SplitRole::AttackTest,
            [row(3, true, -0.125), row(9, false, 1.0 / 3.0), row(4, false, f64::MIN)],
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ScoreTable::read_csv(buf.as_slice(), SplitRole::AttackTest).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn malformed_csv_names_the_line() {
        let text = format!("{SCORE_HEADER}\n1,1,loss,0,0.5\n2,1,loss,0,abc\n");
        let err = ScoreTable::read_csv(text.as_bytes(), SplitRole::AttackTest).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let dup = format!("{SCORE_HEADER}\n1,1,loss,0,0.5\n1,1,loss,0,0.7\n");
        assert!(ScoreTable::read_csv(dup.as_bytes(), SplitRole::AttackTest).is_err());
    }

    #[test]
    fn rejects_non_finite_scores() {
        assert!(ScoreTable::from_rows(SplitRole::AttackTest, [row(1, true, f64::NAN)]).is_err());
    }

    #[test]
    fn detector_names_parse() {
        for k in DetectorKind::ALL {
            assert_eq!(k.name().parse::<DetectorKind>().unwrap(), k);
        }
        assert!("nope".parse::<DetectorKind>().is_err());
    }
}
