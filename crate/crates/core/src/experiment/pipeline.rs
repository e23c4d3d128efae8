//! End-to-end runs: data, split, target training, detector fitting and
//! scoring, plus the validation sweep over interrogation settings.

use super::config::{DataSource, RunConfig};
use crate::data::{load_dataset, stratified_split, BlobSource, Dataset, SplitConfig, SplitPlan, SplitRole};
use crate::detectors::{Detector, DetectorSpec, FitContext, ScoreRow, ScoreTable, ShadowSet};
use crate::error::{Error, Result};
use crate::evaluation::{metrics, report, roc_curve, tune_select, GridPoint, Metrics, MetricsReport, ValidationTable};
use crate::interrogation::interrogate;
use crate::model::{build_model, Model};
use crate::seed;
use crate::train::{train, TrainHistory};

/// The dataset named by the config: generated, or read from a `MIAD` file.
pub fn load_data(cfg: &RunConfig) -> Result<Dataset<f64>> {
    match &cfg.data {
        DataSource::Synth { .. } => blob_source(cfg)?
            .expect("synthetic")
            .sample(per_class(cfg), seed::derive(cfg.seed, "data")),
        DataSource::File(path) => load_dataset(path),
    }
}

fn per_class(cfg: &RunConfig) -> usize {
    match &cfg.data {
        DataSource::Synth { per_class, .. } => *per_class,
        DataSource::File(_) => 0,
    }
}

fn blob_source(cfg: &RunConfig) -> Result<Option<BlobSource>> {
    match &cfg.data {
        DataSource::Synth {
            classes, shape, spread, ..
        } => Ok(Some(BlobSource::new(
            *classes,
            shape,
            *spread,
            seed::derive(cfg.seed, "data"),
        )?)),
        DataSource::File(_) => Ok(None),
    }
}

pub fn split(cfg: &RunConfig, ds: &Dataset<f64>) -> Result<SplitPlan> {
    stratified_split(ds, &cfg.split, seed::derive(cfg.seed, "split"))
}

/// Freshly initialized target trained on the split's members.
pub fn train_target(cfg: &RunConfig, ds: &Dataset<f64>, plan: &SplitPlan) -> Result<(Model<f64>, TrainHistory)> {
    let model = build_model(cfg.arch, ds.shape(), ds.classes(), seed::derive(cfg.seed, "init"))?;
    train(&model, ds, plan, &cfg.train_config("train"))
}

/// Shadow models trained exactly like the target. Synthetic runs draw fresh
/// data from the target's distribution; file runs re-split the file.
pub fn train_shadows(cfg: &RunConfig, ds: &Dataset<f64>) -> Result<Vec<ShadowSet<f64>>> {
    let source = blob_source(cfg)?;
    let split_cfg = SplitConfig {
        attack_validation: 0,
        attack_test: 0,
        ..cfg.split
    };
    (0..cfg.shadows)
        .map(|i| {
            let i = i as u64;
            let data = match &source {
                Some(s) => s.sample(per_class(cfg), seed::derive_indexed(cfg.seed, "shadow-data", i))?,
                None => ds.clone(),
            };
            let plan = stratified_split(&data, &split_cfg, seed::derive_indexed(cfg.seed, "shadow-split", i))?;
            let init = build_model(
                cfg.arch,
                data.shape(),
                data.classes(),
                seed::derive_indexed(cfg.seed, "shadow-init", i),
            )?;
            let mut tc = cfg.train.clone();
            tc.seed = seed::derive_indexed(cfg.seed, "shadow-train", i);
            let (model, _) = train(&init, &data, &plan, &tc)?;
            Ok(ShadowSet {
                model,
                data,
                members: plan.members,
                nonmembers: plan.nonmembers,
            })
        })
        .collect()
}

/// Fits every configured detector, calibrating on attack-validation samples.
pub fn fit_detectors(
    cfg: &RunConfig,
    specs: &[DetectorSpec],
    model: &Model<f64>,
    ds: &Dataset<f64>,
    plan: &SplitPlan,
    shadows: &[ShadowSet<f64>],
) -> Result<Vec<Detector>> {
    let calib = plan.attack(SplitRole::AttackValidation);
    let ctx = FitContext {
        model,
        data: ds,
        members: &calib.members,
        nonmembers: &calib.nonmembers,
        shadows,
        defense: cfg.defense(),
    };
    specs.iter().map(|s| Detector::fit(s, &ctx)).collect()
}

/// Scores every sample of `role` with every detector, on the raw query and
/// (when `boosted`) on its interrogation image.
#[allow(clippy::too_many_arguments)]
pub fn score_split(
    cfg: &RunConfig,
    model: &Model<f64>,
    ds: &Dataset<f64>,
    plan: &SplitPlan,
    role: SplitRole,
    detectors: &[Detector],
    boosted: bool,
    grid: Option<&GridPoint>,
) -> Result<ScoreTable> {
    let mut table = ScoreTable::new(role);
    for (id, is_member) in plan.attack(role).labeled() {
        let (x, y) = (ds.x(id), ds.y(id));
        if grid.is_none() {
            for d in detectors {
                table.push(ScoreRow {
                    sample_id: id,
                    is_member,
                    detector: d.kind(),
                    boosted: false,
                    score: d.score(model, x, y)?,
                })?;
            }
        }
        if boosted {
            let icfg = match grid {
                Some(p) => p.apply(&cfg.interrogation_for(id)),
                None => cfg.interrogation_for(id),
            };
            let xg = interrogate(model, x, &icfg, ds.bounds())?;
            for d in detectors {
                table.push(ScoreRow {
                    sample_id: id,
                    is_member,
                    detector: d.kind(),
                    boosted: true,
                    score: d.score(model, &xg, y)?,
                })?;
            }
        }
    }
    Ok(table)
}

/// Everything an attack run produces.
pub struct AttackOutput {
    pub table: ScoreTable,
    pub report: Vec<MetricsReport>,
}

/// Fits the configured detectors to `model` and scores the attack-test split,
/// raw and boosted.
pub fn run_attack(cfg: &RunConfig, model: &Model<f64>, ds: &Dataset<f64>) -> Result<AttackOutput> {
    check_model(model, ds)?;
    let plan = split(cfg, ds)?;
    let specs = cfg.detector_specs();
    let needs_shadows = specs.iter().any(|s| matches!(s, DetectorSpec::Ia(_)));
    let shadows = if needs_shadows {
        train_shadows(cfg, ds)?
    } else {
        Vec::new()
    };
    let detectors = fit_detectors(cfg, &specs, model, ds, &plan, &shadows)?;
    let table = score_split(cfg, model, ds, &plan, SplitRole::AttackTest, &detectors, true, None)?;
    let report = report(&table, cfg.seed)?;
    Ok(AttackOutput { table, report })
}

fn check_model(model: &Model<f64>, ds: &Dataset<f64>) -> Result<()> {
    if model.spec().input_shape() != ds.shape() || model.spec().classes() != ds.classes() {
        return Err(Error::invalid(format!(
            "model expects {:?} inputs and {} classes, data has {:?} and {}",
            model.spec().input_shape(),
            model.spec().classes(),
            ds.shape(),
            ds.classes()
        )));
    }
    Ok(())
}

/// Full run from the config alone.
pub struct PipelineOutput {
    pub dataset: Dataset<f64>,
    pub plan: SplitPlan,
    pub model: Model<f64>,
    pub history: TrainHistory,
    pub attack: AttackOutput,
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    let dataset = load_data(cfg)?;
    let plan = split(cfg, &dataset)?;
    let (model, history) = train_target(cfg, &dataset, &plan)?;
    let attack = run_attack(cfg, &model, &dataset)?;
    Ok(PipelineOutput {
        dataset,
        plan,
        model,
        history,
        attack,
    })
}

/// Validation metrics of every swept grid point and the selected one.
pub struct SweepOutput {
    pub rows: Vec<(GridPoint, Metrics)>,
    pub chosen: GridPoint,
    /// The input config with the chosen interrogation settings.
    pub chosen_config: RunConfig,
}

/// Scores attack-validation with the sweep detector's boosted variant at
/// every allowed grid point, then applies validation-only selection.
pub fn run_sweep(cfg: &RunConfig, model: &Model<f64>, ds: &Dataset<f64>) -> Result<SweepOutput> {
    check_model(model, ds)?;
    let plan = split(cfg, ds)?;
    let kind = cfg.sweep.detector;
    let spec = cfg
        .detector_specs()
        .into_iter()
        .find(|s| s.kind() == kind)
        .unwrap_or_else(|| DetectorSpec::default_for(kind));
    let shadows = if matches!(spec, DetectorSpec::Ia(_)) {
        train_shadows(cfg, ds)?
    } else {
        Vec::new()
    };
    let detectors = fit_detectors(cfg, std::slice::from_ref(&spec), model, ds, &plan, &shadows)?;
    let mut rows = Vec::new();
    let mut candidates = Vec::new();
    for point in cfg.sweep.points() {
        let table = score_split(
            cfg,
            model,
            ds,
            &plan,
            SplitRole::AttackValidation,
            &detectors,
            true,
            Some(&point),
        )?;
        let (m, n) = table.scores(kind, true);
        rows.push((point, metrics(&roc_curve(&m, &n)?)));
        candidates.push((point, ValidationTable::new(table)?));
    }
    let chosen = tune_select(&candidates, kind)?;
    let mut chosen_config = cfg.clone();
    chosen_config.interrogation = chosen.apply(&cfg.interrogation);
    Ok(SweepOutput {
        rows,
        chosen,
        chosen_config,
    })
}
