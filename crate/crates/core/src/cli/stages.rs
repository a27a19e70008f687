// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pipeline stages over one run directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::LabConfig;
use super::manifest::{sha256_hex, RunManifest};
use super::svg;
use crate::analysis::{
    derive_components, layer_profile, locality_report, BandMode, ComponentSource, ComponentSpec, LayerProfile,
    LocalityReport,
};
use crate::corpus::{build_pairs, generate_world, make_edit_set, EditSet, KnowledgeWorld, PairMode, PairSet, TemplateId};
use crate::editing::{evaluate_editing, write_editing_table, EditOutcome, InputVariant};
use crate::error::{LabError, Result};
use crate::interchange::{
    layer_sweep, mean_interchange, write_accuracy_table, write_jsonl, write_outcomes, write_sweep_csv, AccuracyRow,
    GroupAccuracy, InterventionOutcome, SweepCurve,
};
use crate::model::ModelCheckpoint;
use crate::scoring::{run_score_suite, AblationKind, GridStore, ScoreGrid, SuiteFailure};
use crate::trainer::{filter_known, train, write_train_log, FilteredSet};

pub const WORLD_FILE: &str = "world.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const FILTERED_FILE: &str = "filtered.json";
pub const GRIDS_DIR: &str = "grids";
pub const SCORE_FAILURES_FILE: &str = "score_failures.json";
pub const LOCALITY_FILE: &str = "locality.json";
pub const PROFILES_FILE: &str = "profiles.json";
pub const COMPONENTS_FILE: &str = "components.json";
pub const FIGURES_DIR: &str = "figures";
pub const PAIRS_FILE: &str = "pairs.json";
pub const OUTCOMES_FILE: &str = "outcomes.jsonl";
pub const GROUPS_FILE: &str = "mean_groups.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const TABLE1_FILE: &str = "table1.csv";
pub const EDIT_SET_FILE: &str = "edit_set.json";
pub const EDIT_OUTCOMES_FILE: &str = "edit_outcomes.jsonl";
pub const TABLE2_FILE: &str = "table2.csv";
pub const REPORT_FILE: &str = "report.md";

/// Templates scored by the ablation stage.
pub const SCORE_TEMPLATES: [TemplateId; 2] = TemplateId::QUERY_PAIR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Gen,
    Train,
    Filter,
    Score,
    Locality,
    Interchange,
    Edit,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Gen,
        Stage::Train,
        Stage::Filter,
        Stage::Score,
        Stage::Locality,
        Stage::Interchange,
        Stage::Edit,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Gen => "gen",
            Stage::Train => "train",
            Stage::Filter => "filter",
            Stage::Score => "score",
            Stage::Locality => "locality",
            Stage::Interchange => "interchange",
            Stage::Edit => "edit",
            Stage::Report => "report",
        }
    }

    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::Gen => &[],
            Stage::Train => &[Stage::Gen],
            Stage::Filter => &[Stage::Gen, Stage::Train],
            Stage::Score => &[Stage::Gen, Stage::Train, Stage::Filter],
            Stage::Locality => &[Stage::Gen, Stage::Score],
            Stage::Interchange | Stage::Edit => &[Stage::Gen, Stage::Train, Stage::Filter, Stage::Locality],
            Stage::Report => &[
                Stage::Gen,
                Stage::Train,
                Stage::Filter,
                Stage::Score,
                Stage::Locality,
                Stage::Interchange,
                Stage::Edit,
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

/// Canonical hash of a config.
pub fn config_hash(config: &LabConfig) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(config)?.as_bytes()))
}

/// Locality and profile results per template plus pooled over templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalitySummary {
    pub threshold: f64,
    pub by_template: BTreeMap<String, LocalityReport>,
    pub pooled: LocalityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub by_template: BTreeMap<String, LayerProfile>,
    pub pooled: LayerProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub template: TemplateId,
    pub mode: PairMode,
    pub groups: Vec<GroupAccuracy>,
}

pub struct Run {
    pub dir: PathBuf,
    pub config: LabConfig,
    pub config_hash: String,
    pub manifest: RunManifest,
    pub force: bool,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| LabError::Corrupt { path: path.to_path_buf(), reason: e.to_string() })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

impl Run {
    /// Open (or create) the run directory `<root>/<hash prefix>` for `config`.
    pub fn open(root: &Path, config: LabConfig, force: bool) -> Result<Self> {
        let hash = config_hash(&config)?;
        let dir = root.join(&hash[..16]);
        std::fs::create_dir_all(&dir)?;
        let manifest = RunManifest::load_or_new(&dir, &hash)?;
        let cfg_path = dir.join("config.json");
        if !cfg_path.exists() {
            std::fs::write(&cfg_path, config.to_json()?)?;
        }
        Ok(Self { dir, config, config_hash: hash, manifest, force })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Hash identifying this stage's inputs: the config plus the recorded
    /// outputs of every upstream stage.
    fn stage_hash(&self, stage: Stage) -> Result<String> {
        let mut h = Sha256::new();
        h.update(stage.name().as_bytes());
        h.update(self.config_hash.as_bytes());
        for dep in stage.deps() {
            let rec = self.manifest.verify(&self.dir, dep.name()).map_err(|e| match e {
                LabError::PipelineOrder(m) => LabError::PipelineOrder(format!("{} needs {}: {m}", stage.name(), dep.name())),
                other => other,
            })?;
            for o in &rec.outputs {
                h.update(o.path.as_bytes());
                h.update(o.sha256.as_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn run(&mut self, stage: Stage) -> Result<StageStatus> {
        let hash = self.stage_hash(stage)?;
        if !self.force && self.manifest.is_current(&self.dir, stage.name(), &hash) {
            return Ok(StageStatus::UpToDate);
        }
        let (outputs, seeds) = match stage {
            Stage::Gen => self.gen()?,
            Stage::Train => self.train()?,
            Stage::Filter => self.filter()?,
            Stage::Score => self.score(&hash)?,
            Stage::Locality => self.locality()?,
            Stage::Interchange => self.interchange()?,
            Stage::Edit => self.edit()?,
            Stage::Report => self.report()?,
        };
        let inputs = stage.deps().iter().map(|d| d.name().to_string()).collect();
        let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
        self.manifest.record(&self.dir, stage.name(), hash, inputs, &outputs, seeds)?;
        Ok(StageStatus::Ran)
    }

    pub fn world(&self) -> Result<KnowledgeWorld> {
        let p = self.path(WORLD_FILE);
        KnowledgeWorld::from_json(&std::fs::read_to_string(&p)?)
            .map_err(|e| LabError::Corrupt { path: p, reason: e.to_string() })
    }

    pub fn checkpoint(&self) -> Result<ModelCheckpoint> {
        ModelCheckpoint::load(&self.path(CHECKPOINT_FILE))
    }

    pub fn filtered(&self) -> Result<FilteredSet> {
        read_json(&self.path(FILTERED_FILE))
    }

    pub fn components(&self) -> Result<ComponentSpec> {
        read_json(&self.path(COMPONENTS_FILE))
    }

    /// Every persisted grid, in suite order.
    pub fn grids(&self) -> Result<Vec<ScoreGrid>> {
        let filtered = self.filtered()?;
        let score_hash = &self.manifest.verify(&self.dir, Stage::Score.name())?.stage_hash;
        let store = GridStore::open(self.path(GRIDS_DIR))?;
        let failed: Vec<SuiteFailure> = read_json(&self.path(SCORE_FAILURES_FILE))?;
        let mut grids = Vec::new();
        for (i, t) in filtered.triples.iter().enumerate() {
            for tpl in SCORE_TEMPLATES {
                for kind in AblationKind::ALL {
                    if failed.iter().any(|f| &f.triple == t && f.template == tpl && f.kind == kind) {
                        continue;
                    }
                    let stem = GridStore::stem(i, tpl, kind);
                    let g = store.load(&stem, score_hash)?.ok_or_else(|| LabError::Corrupt {
                        path: store.dir().join(&stem),
                        reason: "grid missing or written under another config".into(),
                    })?;
                    grids.push(g);
                }
            }
        }
        Ok(grids)
    }

    fn gen(&self) -> Result<(Vec<String>, BTreeMap<String, u64>)> {
        let w = generate_world(&self.config.world.config, self.config.world.seed)?;
        std::fs::write(self.path(WORLD_FILE), w.to_json()?)?;
        Ok((vec![WORLD_FILE.into()], BTreeMap::from([("world".into(), self.config.world.seed)])))
    }

    fn train(&self) -> Result<(Vec<String>, BTreeMap<String, u64>)> {
        let w = self.world()?;
        let report = train(&w, &self.config.model.config, &self.config.train, self.config.model.init_seed)?;
        report.checkpoint.save(&self.path(CHECKPOINT_FILE))?;
        write_train_log(&report.log, create(&self.path(TRAIN_LOG_FILE))?)?;
        Ok((
            vec![CHECKPOINT_FILE.into(), TRAIN_LOG_FILE.into()],
            BTreeMap::from([("init".into(), self.config.model.init_seed), ("train".into(), self.config.train.seed)]),
        ))
    }

    fn filter(&self) -> Result<(Vec<String>, BTreeMap<String, u64>)> {
        let w = self.world()?;
        let ck = self.checkpoint()?;
        let f = filter_known(&ck.model, &w)?;
        if f.triples.is_empty() {
            return Err(LabError::Unsatisfiable("no triple survives the recall filter".into()));
        }
        write_json(&self.path(FILTERED_FILE), &f)?;
        Ok((vec![FILTERED_FILE.into()], BTreeMap::new()))
    }

    fn score(&self, stage_hash: &str) -> Result<(Vec<String>, BTreeMap<String, u64>)> {
        let w = self.world()?;
        let ck = self.checkpoint()?;
        let f = self.filtered()?;
        let dir = self.path(GRIDS_DIR);
        if self.force && dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        let store = GridStore::open(&dir)?;
        let suite =
            run_score_suite(&ck.model, &w, &f.triples, &SCORE_TEMPLATES, &self.config.noise, Some((&store, stage_hash)))?;
        log::info!("scored {} grids ({} reused, {} failed)", suite.grids.len(), suite.reused, suite.failures.len());
        write_json(&self.path(SCORE_FAILURES_FILE), &suite.failures)?;
        Ok((
            vec![GRIDS_DIR.into(), SCORE_FAILURES_FILE.into()],
            BTreeMap::from([("noise".into(), self.config.noise.seed)]),
        ))
    }

    fn locality(&self) -> Result<(Vec<String>, BTreeMap<String, u64>)> {
        let w = self.world()?;
        let grids = self.grids()?;
        let threshold = self.config.components.threshold;
        let mut loc = BTreeMap::new();
        let mut prof = BTreeMap::new();
        let figs = self.path(FIGURES_DIR);
        std::fs::create_dir_all(&figs)?;
        let mut outputs = vec![LOCALITY_FILE.to_string(), PROFILES_FILE.into(), COMPONENTS_FILE.into()];
        for tpl in SCORE_TEMPLATES {
            let of: Vec<&ScoreGrid> = grids.iter().filter(|g| g.prompt.template == tpl).collect();
            loc.insert(tpl.as_str().to_string(), locality_report(of.iter().copied(), threshold));
            let p = layer_profile(of.iter().copied());
            for kind in AblationKind::ALL {
                if let Some(g) = of.iter().find(|g| g.kind == kind) {
                    let labels =
                        g.prompt.tokens.iter().map(|&t| w.vocabulary.token(t).map(str::to_string)).collect::<Result<Vec<_>>>()?;
                    let title = format!("{} {}: {}", kind.score_name(), tpl, g.prompt.triple.subject);
                    let name = format!("{FIGURES_DIR}/heatmap_{}_{}.svg", tpl, kind.score_name());
                    std::fs::write(self.path(&name), svg::heatmap(&title, &g.scores, g.layers, g.positions, &labels))?;
                    outputs.push(name);
                }
            }
            let xs: Vec<usize> = (0..p.layers).collect();
            let colors = ["#1f77b4", "#2ca02c", "#d62728"];
            let series: Vec<svg::Series<'_>> = p
                .kinds
                .iter()
                .zip(colors)
                .map(|(k, color)| svg::Series { name: k.kind.score_name(), values: &k.means, color })
                .collect();
            let name = format!("{FIGURES_DIR}/profile_{tpl}.svg");
            std::fs::write(self.path(&name), svg::line_plot(&format!("layer profile {tpl}"), "layer", &xs, &series, &[]))?;
            outputs.push(name);
            prof.insert(tpl.as_str().to_string(), p);
        }
        let pooled_profile = layer_profile(grids.iter());
        let layers = self.checkpoint_layers()?;
        let spec = match self.config.components.mode {
            BandMode::Fractions => derive_components(ComponentSource::Fractions(&self.config.components.fractions), layers)?,
            BandMode::HalfMax => derive_components(ComponentSource::HalfMax(&pooled_profile), layers)?,
        };
        write_json(
            &self.path(LOCALITY_FILE),
            &LocalitySummary { threshold, by_template: loc, pooled: locality_report(grids.iter(), threshold) },
        )?;
        write_json(&self.path(PROFILES_FILE), &ProfileSummary { by_template: prof, pooled: pooled_profile })?;
        write_json(&self.path(COMPONENTS_FILE), &spec)?;
        Ok((outputs, BTreeMap::new()))
    }

    fn checkpoint_layers(&self) -> Result<usize> {
        Ok(self.checkpoint()?.model.config().layers)
    }

    fn interchange(&self) -> Result<(Vec<String>, BTreeMap<String, u64>)> {
        let w = self.world()?;
        let ck = self.checkpoint()?;
        let f = self.filtered()?;
        let spec = self.components()?;
        let ic = &self.config.interchange;
        let mut all_pairs = Vec::new();
        let mut outcomes: Vec<InterventionOutcome> = Vec::new();
        let mut curves: Vec<(TemplateId, SweepCurve)> = Vec::new();
        let mut groups = Vec::new();
        let mut rows = Vec::new();
        let mut outputs = vec![
            PAIRS_FILE.to_string(),
            OUTCOMES_FILE.into(),
            GROUPS_FILE.into(),
            SWEEP_FILE.into(),
            TABLE1_FILE.into(),
        ];
        std::fs::create_dir_all(self.path(FIGURES_DIR))?;
        for (ti, &tpl) in ic.templates.iter().enumerate() {
            let mut acc = [0.0; 4];
            for (mi, mode) in PairMode::ALL.into_iter().enumerate() {
                let seed = ic.seed.wrapping_add((ti * PairMode::ALL.len() + mi) as u64);
                let pairs = build_pairs(&w, &f.triples, tpl, mode, ic.pairs_per_mode, seed)?;
                let mean = mean_interchange(&ck.model, &w, &pairs, mode, &spec)?;
                let sweep = layer_sweep(&ck.model, &w, &pairs, mode, &spec)?;
                acc[mi] = mean.metrics.accuracy;
                let name = format!("{FIGURES_DIR}/sweep_{tpl}_{mode}.svg");
                let series =
                    [svg::Series { name: "vector", values: &sweep.curve.vector_effect, color: "#1f77b4" }];
                std::fs::write(
                    self.path(&name),
                    svg::line_plot(
                        &format!("{mode} layer sweep {tpl}"),
                        "layer",
                        &sweep.curve.layers,
                        &series,
                        &[("textual", sweep.curve.textual_effect)],
                    ),
                )?;
                outputs.push(name);
                groups.push(GroupRecord { template: tpl, mode, groups: mean.groups });
                outcomes.extend(mean.outcomes);
                outcomes.extend(sweep.outcomes);
                curves.push((tpl, sweep.curve));
                all_pairs.extend(pairs);
            }
            rows.push(AccuracyRow {
                template: tpl,
                subject_only: acc[0],
                relation_only: acc[1],
                object_only: acc[2],
                dual: acc[3],
            });
        }
        write_json(
            &self.path(PAIRS_FILE),
            &PairSet { format_version: crate::corpus::pairs::PAIRS_FORMAT_VERSION, seed: ic.seed, pairs: all_pairs },
        )?;
        write_outcomes(&outcomes, create(&self.path(OUTCOMES_FILE))?)?;
        write_json(&self.path(GROUPS_FILE), &groups)?;
        write_sweep_csv(&curves, create(&self.path(SWEEP_FILE))?)?;
        write_accuracy_table(&rows, create(&self.path(TABLE1_FILE))?)?;
        Ok((outputs, BTreeMap::from([("pairs".into(), ic.seed)])))
    }

    fn edit(&self) -> Result<(Vec<String>, BTreeMap<String, u64>)> {
        let w = self.world()?;
        let ck = self.checkpoint()?;
        let f = self.filtered()?;
        let spec = self.components()?;
        let ec = &self.config.edit;
        let items = make_edit_set(&w, &f.triples, ec.count, ec.seed)?;
        let mut results = Vec::new();
        for v in InputVariant::ALL {
            results.push(evaluate_editing(&ck.model, &w, &items, v, &spec, &ec.bands)?);
        }
        write_json(&self.path(EDIT_SET_FILE), &EditSet { format_version: 1, seed: ec.seed, items })?;
        let outcomes: Vec<&EditOutcome> = results.iter().flat_map(|r| &r.outcomes).collect();
        write_jsonl(&outcomes, create(&self.path(EDIT_OUTCOMES_FILE))?)?;
        write_editing_table(&results, create(&self.path(TABLE2_FILE))?)?;
        Ok((
            vec![EDIT_SET_FILE.into(), EDIT_OUTCOMES_FILE.into(), TABLE2_FILE.into()],
            BTreeMap::from([("edit".into(), ec.seed)]),
        ))
    }

    fn report(&self) -> Result<(Vec<String>, BTreeMap<String, u64>)> {
        let text = super::report::render(self)?;
        std::fs::write(self.path(REPORT_FILE), text)?;
        Ok((vec![REPORT_FILE.into()], BTreeMap::new()))
    }
}
