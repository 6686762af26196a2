//! Config-driven runs that write reports and plot-ready tables.
//!
//! A run validates its whole config (including that every input exists)
//! before doing any work, computes all artifacts in memory, and only then
//! writes them, so a failed run leaves no partial output behind. Every run
//! also writes `manifest.json` with a hash of the config and inputs, the
//! seeds and the tool version. Thread count and output directory are
//! excluded from the hash because they never change results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ea::{default_ks, evaluate_ea, test_size_sweep, AlignedPair, AlignmentSet, SweepConfig};
use crate::error::{Error, Result};
use crate::io::{load_alignment, load_splits, load_triples, rank_score_dump};
use crate::kg::Vocabulary;
use crate::lp::{evaluate_lp, FilterIndex, LpOptions, SideHandling};
use crate::metrics::{summarize, MetricReport};
use crate::rank::RankVariant;
use crate::scorers::{train_translational, LpContext, ScorerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Rank,
    Lp,
    Ea,
    Sweep,
    Degrees,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub train_fractions: Vec<f64>,
    pub eval_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
}

fn default_true() -> bool {
    true
}

fn default_threads() -> usize {
    1
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kg_left: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kg_right: Option<PathBuf>,
    /// Evaluated alignment (`ea`, `degrees`) or the full alignment to split (`sweep`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<PathBuf>,
    /// Training alignment for `ea`; known to the scorer, never evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment_train: Option<PathBuf>,
    /// Score dump for `rank`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer: Option<ScorerSpec>,
    #[serde(default)]
    pub variant: RankVariant,
    #[serde(default = "default_true")]
    pub filtered: bool,
    #[serde(default)]
    pub side: SideHandling,
    #[serde(default = "default_ks")]
    pub ks: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
    #[serde(default = "default_threads")]
    pub threads: usize,
    pub out: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl ExperimentConfig {
    pub fn new(task: Task, out: impl Into<PathBuf>) -> Self {
        Self {
            task,
            train: None,
            valid: None,
            test: None,
            kg_left: None,
            kg_right: None,
            alignment: None,
            alignment_train: None,
            scores: None,
            scorer: None,
            variant: RankVariant::Realistic,
            filtered: true,
            side: SideHandling::Pooled,
            ks: default_ks(),
            sweep: None,
            threads: 1,
            out: out.into(),
            formats: default_formats(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn inputs(&self) -> Vec<(&'static str, &Path)> {
        [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
            ("kg_left", &self.kg_left),
            ("kg_right", &self.kg_right),
            ("alignment", &self.alignment),
            ("alignment_train", &self.alignment_train),
            ("scores", &self.scores),
        ]
        .into_iter()
        .filter_map(|(k, p)| p.as_deref().map(|p| (k, p)))
        .collect()
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        let need = |name: &str, p: &Option<PathBuf>| -> Result<()> {
            if p.is_none() {
                return Err(Error::InvalidConfig(format!(
                    "task {:?} requires '{name}'",
                    self.task
                )));
            }
            Ok(())
        };
        match self.task {
            Task::Rank => need("scores", &self.scores)?,
            Task::Lp => {
                need("train", &self.train)?;
                need("test", &self.test)?;
            }
            Task::Ea | Task::Sweep => need("alignment", &self.alignment)?,
            Task::Degrees => {
                need("kg_left", &self.kg_left)?;
                need("kg_right", &self.kg_right)?;
                need("alignment", &self.alignment)?;
            }
        }
        if matches!(self.task, Task::Ea | Task::Sweep) && self.kg_left.is_some() != self.kg_right.is_some() {
            return fail("kg_left and kg_right must be given together".into());
        }
        for (name, p) in self.inputs() {
            if !p.is_file() {
                return fail(format!("input '{name}' not found: {}", p.display()));
            }
        }
        if self.ks.contains(&0) {
            return fail("ks must be positive".into());
        }
        if self.formats.is_empty() {
            return fail("at least one output format is required".into());
        }
        if matches!(self.task, Task::Lp | Task::Ea | Task::Sweep) {
            let Some(spec) = &self.scorer else {
                return fail(format!("task {:?} requires a scorer", self.task));
            };
            spec.validate()?;
            if self.task == Task::Lp && !spec.supports_lp() {
                return fail(format!("scorer '{}' cannot do link prediction", spec.kind()));
            }
            if self.task != Task::Lp && !spec.supports_ea() {
                return fail(format!("scorer '{}' cannot do entity alignment", spec.kind()));
            }
        }
        if self.task == Task::Sweep {
            let Some(grid) = &self.sweep else {
                return fail("task sweep requires a 'sweep' grid".into());
            };
            if let Some(f) = grid.train_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
                return fail(format!("train fraction {f} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything that affects results.
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("threads");
            map.remove("out");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    fn seeds(&self) -> Vec<u64> {
        let mut seeds: Vec<u64> = self.scorer.iter().filter_map(ScorerSpec::seed).collect();
        if let Some(g) = &self.sweep {
            seeds.extend(&g.seeds);
        }
        seeds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub task: Task,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// Input name → SHA-256 of the file content.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub written: Vec<PathBuf>,
    pub report: Option<MetricReport>,
}

struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    report: Option<MetricReport>,
}

impl Artifacts {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            report: None,
        }
    }

    fn add(&mut self, name: &str, content: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), content.into()));
    }

    fn add_report(&mut self, report: MetricReport, formats: &[OutputFormat]) {
        if formats.contains(&OutputFormat::Json) {
            self.add("report.json", report.to_json());
        }
        if formats.contains(&OutputFormat::Csv) {
            self.add("report.csv", report.to_csv());
        }
        self.report = Some(report);
    }
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// Runs one experiment and writes its artifacts under `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let mut artifacts = match config.task {
        Task::Rank => run_rank(config)?,
        Task::Lp => run_lp(config)?,
        Task::Ea => run_ea(config)?,
        Task::Sweep => run_sweep(config)?,
        Task::Degrees => run_degrees(config)?,
    };

    let mut inputs = BTreeMap::new();
    for (name, path) in config.inputs() {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        inputs.insert(name.to_string(), hex::encode(Sha256::digest(&bytes)));
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        task: config.task,
        config_hash: config.config_hash(),
        seeds: config.seeds(),
        inputs,
        outputs: artifacts.files.iter().map(|f| f.0.clone()).collect(),
    };
    artifacts.add("manifest.json", to_json_bytes(&manifest));

    std::fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let mut written = Vec::new();
    for (name, bytes) in &artifacts.files {
        let path = config.out.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(RunOutput {
        written,
        report: artifacts.report,
    })
}

fn required(p: &Option<PathBuf>) -> &Path {
    p.as_deref().expect("checked by validate")
}

fn run_rank(config: &ExperimentConfig) -> Result<Artifacts> {
    let rc = rank_score_dump(required(&config.scores))?;
    let mut a = Artifacts::new();
    a.add_report(summarize(&rc, &config.ks, config.variant)?, &config.formats);
    Ok(a)
}

fn run_lp(config: &ExperimentConfig) -> Result<Artifacts> {
    let mut paths = vec![required(&config.train), required(&config.test)];
    if let Some(v) = &config.valid {
        paths.push(v);
    }
    let data = load_splits(&paths)?;
    let (ne, nr) = (data.entities.len(), data.relations.len());
    let split_refs: Vec<&[_]> = data.splits.iter().map(Vec::as_slice).collect();
    let fi = FilterIndex::build(&split_refs, ne, nr)?;
    let known: Vec<_> = data.splits.iter().flatten().copied().collect();
    let train = &data.splits[0];
    let test = &data.splits[1];
    let opts = LpOptions {
        filtered: config.filtered,
        side_handling: config.side,
        threads: config.threads,
    };

    let spec = config.scorer.as_ref().expect("checked by validate");
    let mut a = Artifacts::new();
    let rc = if let ScorerSpec::Translational(params) = spec {
        let trained = train_translational(train, ne, nr, params)?;
        let table = trained.scorer.table();
        a.add("embeddings.bin", table.to_bytes());
        a.add(
            "embeddings.json",
            to_json_bytes(&serde_json::json!({
                "format": "KGEB",
                "version": crate::scorers::EMBEDDING_VERSION,
                "dimension": table.dimension(),
                "entities": data.entities,
                "relations": data.relations,
            })),
        );
        a.add("training_loss.csv", {
            let mut s = String::from("epoch,mean_loss\n");
            for (i, l) in trained.epoch_losses.iter().enumerate() {
                s.push_str(&format!("{},{}\n", i + 1, crate::metrics::six_sig(*l)));
            }
            s
        });
        evaluate_lp(&trained.scorer, test, &fi, &opts)?
    } else {
        let scorer = spec.build_lp(&LpContext {
            num_entities: ne,
            num_relations: nr,
            train,
            known: &known,
        })?;
        evaluate_lp(&scorer, test, &fi, &opts)?
    };
    a.add_report(summarize(&rc, &config.ks, config.variant)?, &config.formats);
    Ok(a)
}

/// Labels of the alignment files' two columns.
fn alignment_labels(path: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let (l, r, _) = crate::io::load_alignment_labels(path)?;
    Ok((l.labels().to_vec(), r.labels().to_vec()))
}

/// Left/right vocabularies: from the graphs when given, otherwise from the
/// labels of the alignment files.
fn alignment_vocabularies(config: &ExperimentConfig) -> Result<(Vocabulary, Vocabulary)> {
    if let (Some(l), Some(r)) = (&config.kg_left, &config.kg_right) {
        return Ok((load_triples(l)?.entities, load_triples(r)?.entities));
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    for p in [&config.alignment, &config.alignment_train].into_iter().flatten() {
        let (l, r) = alignment_labels(p)?;
        left.extend(l);
        right.extend(r);
    }
    Ok((Vocabulary::from_labels(left), Vocabulary::from_labels(right)))
}

fn run_ea(config: &ExperimentConfig) -> Result<Artifacts> {
    let (lv, rv) = alignment_vocabularies(config)?;
    let test = load_alignment(required(&config.alignment), &lv, &rv)?;
    let train = match &config.alignment_train {
        Some(p) => load_alignment(p, &lv, &rv)?.test().to_vec(),
        None => Vec::new(),
    };
    let alignment = AlignmentSet::new(train, test.test().to_vec())?;
    let spec = config.scorer.as_ref().expect("checked by validate");
    let scorer = spec.build_ea(&alignment.pairs())?;
    let rc = evaluate_ea(&scorer, alignment.test(), config.threads)?;
    let mut a = Artifacts::new();
    a.add_report(summarize(&rc, &config.ks, config.variant)?, &config.formats);
    Ok(a)
}

fn run_sweep(config: &ExperimentConfig) -> Result<Artifacts> {
    let (lv, rv) = alignment_vocabularies(config)?;
    let pairs: Vec<AlignedPair> = load_alignment(required(&config.alignment), &lv, &rv)?.pairs();
    let grid = config.sweep.as_ref().expect("checked by validate");
    let sweep_cfg = SweepConfig {
        train_fractions: grid.train_fractions.clone(),
        eval_sizes: grid.eval_sizes.clone(),
        seeds: grid.seeds.clone(),
        ks: config.ks.clone(),
        variant: config.variant,
    };
    sweep_cfg.validate(pairs.len())?;
    let spec = config.scorer.as_ref().expect("checked by validate");
    let result = test_size_sweep(
        |cell| {
            let mut known = cell.train.to_vec();
            known.extend_from_slice(cell.test);
            spec.with_seed(cell.seed).build_ea(&known)
        },
        &pairs,
        &sweep_cfg,
        config.threads,
    )?;
    let mut a = Artifacts::new();
    if config.formats.contains(&OutputFormat::Csv) {
        a.add("sweep.csv", result.to_csv());
    }
    if config.formats.contains(&OutputFormat::Json) {
        a.add("sweep.json", to_json_bytes(&result));
    }
    Ok(a)
}

fn run_degrees(config: &ExperimentConfig) -> Result<Artifacts> {
    let left = load_triples(required(&config.kg_left))?;
    let right = load_triples(required(&config.kg_right))?;
    let alignment = load_alignment(required(&config.alignment), &left.entities, &right.entities)?;
    let analysis = crate::ea::degree_profile(&left, &right, &alignment)?;
    let mut a = Artifacts::new();
    if config.formats.contains(&OutputFormat::Csv) {
        a.add("degrees.csv", analysis.to_csv(&left, &right));
    }
    if config.formats.contains(&OutputFormat::Json) {
        a.add(
            "degrees.json",
            to_json_bytes(&serde_json::json!({
                "n_pairs": analysis.pairs.len(),
                "spearman_rho": analysis.spearman.rho,
                "p_value": analysis.spearman.p_value,
            })),
        );
    }
    Ok(a)
}
