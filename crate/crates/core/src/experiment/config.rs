//! Run configuration and its `section.key = value` text form.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::SplitConfig;
use crate::detectors::{
    DetectorKind, DetectorSpec, GlirConfig, GlirMode, IaConfig, LaeqConfig, Obfuscation, SifConfig,
};
use crate::error::{Error, Result};
use crate::evaluation::{search_grid, GridPoint, GRID_LR, GRID_STEPS};
use crate::interrogation::{InterrogationConfig, LayerSelection};
use crate::model::{Architecture, GroupName};
use crate::seed;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synth {
        classes: usize,
        per_class: usize,
        shape: Vec<usize>,
        spread: f64,
    },
    File(PathBuf),
}

/// Restriction of the interrogation search grid plus the detector whose
/// boosted validation pAUC drives selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub steps: Vec<usize>,
    pub lr: Vec<f64>,
    pub clip: Vec<bool>,
    pub groups: Vec<GroupName>,
    pub detector: DetectorKind,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            steps: GRID_STEPS.to_vec(),
            lr: GRID_LR.to_vec(),
            clip: vec![true, false],
            groups: GroupName::ALL.to_vec(),
            detector: DetectorKind::Glir,
        }
    }
}

impl SweepConfig {
    /// Grid points allowed by this restriction, in grid order.
    pub fn points(&self) -> Vec<GridPoint> {
        search_grid()
            .into_iter()
            .filter(|p| {
                self.steps.contains(&p.steps)
                    && self.lr.contains(&p.lr)
                    && self.clip.contains(&p.clip)
                    && self.groups.contains(&p.group)
            })
            .collect()
    }
}

/// Everything one experiment needs. Every random stream derives from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSource,
    pub split: SplitConfig,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub interrogation: InterrogationConfig,
    pub detectors: Vec<DetectorKind>,
    pub glir: GlirConfig,
    pub laeq: LaeqConfig,
    pub sif: SifConfig,
    pub ia: IaConfig,
    /// Shadow models for the IA detector (the last one validates).
    pub shadows: usize,
    /// Obfuscation noise scale; `None` runs without the defense.
    pub defense_sigma: Option<f64>,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    /// Desk-scale setup: 1,600 synthetic 3×8×8 examples in 10 classes, a
    /// TinyCNN trained to memorize, 200/200 attack-validation and 500/500
    /// attack-test samples.
    fn default() -> Self {
        let mut train = TrainConfig::overfit(0);
        train.max_epochs = 30;
        train.patience = 30;
        RunConfig {
            seed: 0,
            data: DataSource::Synth {
                classes: 10,
                per_class: 160,
                shape: vec![3, 8, 8],
                spread: 4.0,
            },
            split: SplitConfig::default(),
            arch: Architecture::TinyCnn,
            train,
            interrogation: InterrogationConfig::default(),
            detectors: DetectorKind::ALL.to_vec(),
            glir: GlirConfig {
                d_sub: Some(512),
                ..GlirConfig::default()
            },
            laeq: LaeqConfig::default(),
            sif: SifConfig::default(),
            ia: IaConfig::default(),
            shadows: 5,
            defense_sigma: None,
            sweep: SweepConfig::default(),
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config {
        line,
        msg: format!("bad value `{v}` for `{key}`"),
    })
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(Error::Config {
            line,
            msg: format!("bad boolean `{v}` for `{key}`"),
        }),
    }
}

fn parse_list<T>(line: usize, key: &str, v: &str, f: impl Fn(usize, &str, &str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(line, key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config {
            line,
            msg: format!("`{key}` needs at least one value"),
        });
    }
    Ok(items)
}

fn parse_optional<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Option<T>> {
    if v == "auto" || v == "none" {
        Ok(None)
    } else {
        parse(line, key, v).map(Some)
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn optional<T: ToString>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map(T::to_string).unwrap_or_else(|| none.to_string())
}

impl RunConfig {
    /// Parses config text on top of the defaults. Unknown keys and bad values
    /// are errors carrying the 1-based line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut synth = match &cfg.data {
            DataSource::Synth {
                classes,
                per_class,
                shape,
                spread,
            } => (*classes, *per_class, shape.clone(), *spread),
            DataSource::File(_) => unreachable!("defaults are synthetic"),
        };
        let mut source = "synth".to_string();
        let mut path: Option<PathBuf> = None;
        let mut layers: Option<Vec<String>> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected `section.key = value`, got `{content}`"),
            })?;
            let (key, v) = (key.trim(), value.trim());
            if !key.contains('.') {
                return Err(Error::Config {
                    line,
                    msg: format!("key `{key}` has no section"),
                });
            }
            let l = line;
            match key {
                "run.seed" => cfg.seed = parse(l, key, v)?,
                "data.source" => match v {
                    "synth" | "file" => source = v.to_string(),
                    _ => {
                        return Err(Error::Config {
                            line,
                            msg: format!("data.source must be synth or file, got `{v}`"),
                        })
                    }
                },
                "data.path" => path = Some(PathBuf::from(v)),
                "data.classes" => synth.0 = parse(l, key, v)?,
                "data.per_class" => synth.1 = parse(l, key, v)?,
                "data.shape" => synth.2 = v.split('x').map(|d| parse(l, key, d.trim())).collect::<Result<_>>()?,
                "data.spread" => synth.3 = parse(l, key, v)?,
                "split.validation_fraction" => cfg.split.validation_fraction = parse(l, key, v)?,
                "split.attack_validation" => cfg.split.attack_validation = parse(l, key, v)?,
                "split.attack_test" => cfg.split.attack_test = parse(l, key, v)?,
                "model.arch" => cfg.arch = parse(l, key, v)?,
                "train.lr" => cfg.train.lr = parse(l, key, v)?,
                "train.momentum" => cfg.train.momentum = parse(l, key, v)?,
                "train.weight_decay" => cfg.train.weight_decay = parse(l, key, v)?,
                "train.batch_size" => cfg.train.batch_size = parse(l, key, v)?,
                "train.max_epochs" => cfg.train.max_epochs = parse(l, key, v)?,
                "train.warmup_epochs" => cfg.train.warmup_epochs = parse(l, key, v)?,
                "train.patience" => cfg.train.patience = parse(l, key, v)?,
                "train.flip" => cfg.train.flip = parse_bool(l, key, v)?,
                "interrogation.steps" => cfg.interrogation.steps = parse(l, key, v)?,
                "interrogation.lr" => cfg.interrogation.lr = parse(l, key, v)?,
                "interrogation.clip" => cfg.interrogation.clip = parse_bool(l, key, v)?,
                "interrogation.group" => {
                    cfg.interrogation.layers = LayerSelection::Group(parse(l, key, v)?);
                    layers = None;
                }
                "interrogation.layers" => layers = Some(parse_list(l, key, v, |_, _, s| Ok(s.to_string()))?),
                "interrogation.weights" => {
                    cfg.interrogation.weights = if v == "equal" {
                        None
                    } else {
                        Some(parse_list(l, key, v, parse)?)
                    }
                }
                "detectors.list" => cfg.detectors = parse_list(l, key, v, parse)?,
                "glir.d_sub" => cfg.glir.d_sub = parse_optional(l, key, v)?,
                "glir.ridge" => cfg.glir.ridge = parse_optional(l, key, v)?,
                "glir.mode" => {
                    cfg.glir.mode = match v {
                        "linear" => GlirMode::Linear,
                        "chi_square" => GlirMode::ChiSquare,
                        _ => {
                            return Err(Error::Config {
                                line,
                                msg: format!("glir.mode must be linear or chi_square, got `{v}`"),
                            })
                        }
                    }
                }
                "laeq.step" => cfg.laeq.step = parse(l, key, v)?,
                "laeq.budget" => cfg.laeq.budget = parse(l, key, v)?,
                "sif.damping" => cfg.sif.damping = parse(l, key, v)?,
                "sif.d_sub" => cfg.sif.d_sub = parse_optional(l, key, v)?,
                "sif.fd_step" => cfg.sif.fd_step = parse(l, key, v)?,
                "ia.shadows" => cfg.shadows = parse(l, key, v)?,
                "ia.hidden" => cfg.ia.hidden = parse(l, key, v)?,
                "ia.lr" => cfg.ia.lr = parse(l, key, v)?,
                "ia.final_lr" => cfg.ia.final_lr = parse(l, key, v)?,
                "ia.batch_size" => cfg.ia.batch_size = parse(l, key, v)?,
                "ia.patience" => cfg.ia.patience = parse(l, key, v)?,
                "ia.max_epochs" => cfg.ia.max_epochs = parse(l, key, v)?,
                "defense.sigma" => cfg.defense_sigma = parse_optional(l, key, v)?,
                "sweep.steps" => cfg.sweep.steps = parse_list(l, key, v, parse)?,
                "sweep.lr" => cfg.sweep.lr = parse_list(l, key, v, parse)?,
                "sweep.clip" => cfg.sweep.clip = parse_list(l, key, v, parse_bool)?,
                "sweep.groups" => cfg.sweep.groups = parse_list(l, key, v, parse)?,
                "sweep.detector" => cfg.sweep.detector = parse(l, key, v)?,
                _ => {
                    return Err(Error::Config {
                        line,
                        msg: format!("unknown key `{key}`"),
                    })
                }
            }
        }
        if let Some(ids) = layers {
            cfg.interrogation.layers = LayerSelection::Layers(ids);
        }
        cfg.data = match source.as_str() {
            "file" => DataSource::File(path.ok_or(Error::Config {
                line: 0,
                msg: "data.source = file needs data.path".into(),
            })?),
            _ => DataSource::Synth {
                classes: synth.0,
                per_class: synth.1,
                shape: synth.2,
                spread: synth.3,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut train = self.train.clone();
        train.seed = 0;
        train.validate()?;
        self.interrogation.validate()?;
        for spec in self.detector_specs() {
            spec.validate()?;
        }
        if self.detectors.is_empty() {
            return Err(Error::invalid("no detectors selected"));
        }
        if self.detectors.contains(&DetectorKind::Ia) && self.shadows < 2 {
            return Err(Error::invalid("the IA detector needs at least 2 shadow models"));
        }
        if let Some(s) = self.defense_sigma {
            Obfuscation::new(s, 0)?;
        }
        if self.sweep.points().is_empty() {
            return Err(Error::invalid("sweep grid restriction leaves no configuration"));
        }
        if let DataSource::Synth {
            classes,
            per_class,
            shape,
            spread,
        } = &self.data
        {
            if *classes < 2 || *per_class < 10 || shape.is_empty() || shape.contains(&0) || !(*spread > 0.0) {
                return Err(Error::invalid("bad synthetic data settings"));
            }
        }
        Ok(())
    }

    /// Training settings with the derived training seed.
    pub fn train_config(&self, role: &str) -> TrainConfig {
        TrainConfig {
            seed: seed::derive(self.seed, role),
            ..self.train.clone()
        }
    }

    pub fn defense(&self) -> Option<Obfuscation> {
        self.defense_sigma.map(|sigma| Obfuscation {
            sigma,
            seed: seed::derive(self.seed, "defense"),
        })
    }

    /// Interrogation settings for one query, with its own noise seed.
    pub fn interrogation_for(&self, sample_id: usize) -> InterrogationConfig {
        InterrogationConfig {
            seed: seed::derive_indexed(self.seed, "interrogate", sample_id as u64),
            defense: self.defense(),
            ..self.interrogation.clone()
        }
    }

    /// Detector specs in `detectors` order, with derived seeds.
    pub fn detector_specs(&self) -> Vec<DetectorSpec> {
        self.detectors
            .iter()
            .map(|kind| match kind {
                DetectorKind::Glir => DetectorSpec::Glir(GlirConfig {
                    seed: seed::derive(self.seed, "glir"),
                    ..self.glir.clone()
                }),
                DetectorKind::Loss => DetectorSpec::Loss,
                DetectorKind::Laeq => DetectorSpec::Laeq(self.laeq),
                DetectorKind::Sif => DetectorSpec::Sif(SifConfig {
                    seed: seed::derive(self.seed, "sif"),
                    ..self.sif
                }),
                DetectorKind::Ia => DetectorSpec::Ia(IaConfig {
                    seed: seed::derive(self.seed, "ia-meta"),
                    ..self.ia
                }),
            })
            .collect()
    }

    /// Text form accepted by [`RunConfig::parse`], listing every key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("run.seed", self.seed.to_string());
        match &self.data {
            DataSource::Synth {
                classes,
                per_class,
                shape,
                spread,
            } => {
                kv("data.source", "synth".into());
                kv("data.classes", classes.to_string());
                kv("data.per_class", per_class.to_string());
                kv(
                    "data.shape",
                    shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x"),
                );
                kv("data.spread", spread.to_string());
            }
            DataSource::File(p) => {
                kv("data.source", "file".into());
                kv("data.path", p.display().to_string());
            }
        }
        kv("split.validation_fraction", self.split.validation_fraction.to_string());
        kv("split.attack_validation", self.split.attack_validation.to_string());
        kv("split.attack_test", self.split.attack_test.to_string());
        kv("model.arch", self.arch.to_string());
        let t = &self.train;
        kv("train.lr", t.lr.to_string());
        kv("train.momentum", t.momentum.to_string());
        kv("train.weight_decay", t.weight_decay.to_string());
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.max_epochs", t.max_epochs.to_string());
        kv("train.warmup_epochs", t.warmup_epochs.to_string());
        kv("train.patience", t.patience.to_string());
        kv("train.flip", t.flip.to_string());
        let ic = &self.interrogation;
        kv("interrogation.steps", ic.steps.to_string());
        kv("interrogation.lr", ic.lr.to_string());
        kv("interrogation.clip", ic.clip.to_string());
        match &ic.layers {
            LayerSelection::Group(g) => kv("interrogation.group", g.to_string()),
            LayerSelection::Layers(ids) => kv("interrogation.layers", ids.join(",")),
        }
        kv(
            "interrogation.weights",
            ic.weights.as_ref().map(|w| join(w)).unwrap_or_else(|| "equal".into()),
        );
        kv("detectors.list", join(&self.detectors));
        kv("glir.d_sub", optional(&self.glir.d_sub, "auto"));
        kv("glir.ridge", optional(&self.glir.ridge, "auto"));
        kv(
            "glir.mode",
            match self.glir.mode {
                GlirMode::Linear => "linear".into(),
                GlirMode::ChiSquare => "chi_square".into(),
            },
        );
        kv("laeq.step", self.laeq.step.to_string());
        kv("laeq.budget", self.laeq.budget.to_string());
        kv("sif.damping", self.sif.damping.to_string());
        kv("sif.d_sub", optional(&self.sif.d_sub, "auto"));
        kv("sif.fd_step", self.sif.fd_step.to_string());
        kv("ia.shadows", self.shadows.to_string());
        kv("ia.hidden", self.ia.hidden.to_string());
        kv("ia.lr", self.ia.lr.to_string());
        kv("ia.final_lr", self.ia.final_lr.to_string());
        kv("ia.batch_size", self.ia.batch_size.to_string());
        kv("ia.patience", self.ia.patience.to_string());
        kv("ia.max_epochs", self.ia.max_epochs.to_string());
        kv("defense.sigma", optional(&self.defense_sigma, "none"));
        kv("sweep.steps", join(&self.sweep.steps));
        kv("sweep.lr", join(&self.sweep.lr));
        kv("sweep.clip", join(&self.sweep.clip));
        kv("sweep.groups", join(&self.sweep.groups));
        kv("sweep.detector", self.sweep.detector.to_string());
        s
    }
}
