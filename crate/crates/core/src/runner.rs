//! Experiment manifests and the end-to-end pipeline:
//! render -> gateway -> parse -> fill -> decide -> gate -> calibrate -> score.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::calibration::{platt_fit, reliability_table, CalibrationModel, ReliabilityTable};
use crate::corpus::{
    binarize, coarsen_6_to_3, load_liar_new, load_liar_new_annotations, load_liar_tsv_with,
    load_resolution_sidecar, resolve_all, BinaryLabel, Language, LiarQuoting, PossibilityLabel,
    SixWayLabel, Split, Statement,
};
use crate::error::{Error, Result};
use crate::evidence::{build_evidence_prompt, load_articles, write_jsonl, KeywordMatch};
use crate::gateway::{
    default_prices, summarize, ChatProvider, Gateway, HttpProvider, HttpSettings, ModelRequest,
    PriceTable, ResponseCache, StubProvider, DEFAULT_CONCURRENCY, DEFAULT_TEMPERATURE,
};
use crate::parser::{fill_nonnumeric, write_records, PredictionRecord, VerdictKind};
use crate::prompts::{
    demo_label_to_score, render, select_icl_variant, template_hash, Demonstration, PromptKind,
    RenderedPrompt,
};
use crate::scoring::{stratified_report, write_summary_csv, MetricsReport, ScoredItem};
use crate::studies::{nearest_train_distance, variation_study, VariationReport};
use crate::verdicts::{
    apply_threshold, gate_uncertain, optimize_threshold, score_to_kway, GateMode, ThresholdRule,
};

pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-ada-002";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// LIAR TSV (id, label, statement, ...).
    Liar,
    /// LIAR-New JSONL with English and French text.
    LiarNew,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub format: DatasetFormat,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default)]
    pub quoting: LiarQuoting,
    /// LIAR-New only: keep one language.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<Language>,
    /// LIAR-New only: resolve the raw annotator votes, using this CSV for
    /// escalated triples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolutions: Option<PathBuf>,
}

impl DatasetRef {
    pub fn load(&self) -> Result<Vec<Statement>> {
        match self.format {
            DatasetFormat::Liar => {
                load_liar_tsv_with(&self.path, self.split.unwrap_or(Split::Test), self.quoting)
            }
            DatasetFormat::LiarNew => {
                let mut statements = load_liar_new(&self.path)?;
                if let Some(lang) = self.language {
                    statements.retain(|s| s.language == lang);
                }
                if let Some(sidecar) = &self.resolutions {
                    let triples = load_liar_new_annotations(&self.path)?;
                    let resolved = resolve_all(&triples, &load_resolution_sidecar(sidecar)?);
                    if !resolved.unresolved.is_empty() {
                        log::warn!(
                            "{} escalated annotations have no manual resolution",
                            resolved.unresolved.len()
                        );
                    }
                    for s in &mut statements {
                        if let Some(label) = resolved.labels.get(s.base_id()) {
                            s.possibility = Some(*label);
                        }
                    }
                }
                Ok(statements)
            }
        }
    }
}

/// Integer threshold or optimize-on-validation. Written as `71` or
/// `"optimize"` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdSpec {
    Fixed(u8),
    Optimize,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec::Fixed(ThresholdRule::ZERO_SHOT.threshold)
    }
}

impl FromStr for ThresholdSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("optimize") {
            return Ok(ThresholdSpec::Optimize);
        }
        let t: u8 = s.parse().map_err(|_| {
            Error::argument(format!(
                "threshold must be an integer or \"optimize\", got {s:?}"
            ))
        })?;
        ThresholdRule::new(t).map(|r| ThresholdSpec::Fixed(r.threshold))
    }
}

impl Serialize for ThresholdSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ThresholdSpec::Fixed(t) => s.serialize_u8(*t),
            ThresholdSpec::Optimize => s.serialize_str("optimize"),
        }
    }
}

impl<'de> Deserialize<'de> for ThresholdSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(n) => ThresholdSpec::from_str(&n.to_string()),
            Repr::Str(s) => ThresholdSpec::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSpec {
    #[default]
    None,
    /// Exclude scores 49..=51.
    Band,
    /// Exclude `0.5` abstentions.
    Uncertain,
}

impl FromStr for GateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "none" => Ok(GateSpec::None),
            "band" => Ok(GateSpec::Band),
            "uncertain" => Ok(GateSpec::Uncertain),
            other => Err(Error::argument(format!("unknown gate {other:?}"))),
        }
    }
}

impl GateSpec {
    fn mode(self) -> Option<GateMode> {
        match self {
            GateSpec::None => None,
            GateSpec::Band => Some(GateMode::ScoreBand),
            GateSpec::Uncertain => Some(GateMode::UncertainVerdict),
        }
    }
}

/// `none`, `fit` (on the validation split) or `apply:PATH` (a saved model).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum CalibrationSpec {
    #[default]
    None,
    Fit,
    Apply(PathBuf),
}

impl FromStr for CalibrationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("apply:") {
            if path.is_empty() {
                return Err(Error::argument("apply: needs a model path"));
            }
            return Ok(CalibrationSpec::Apply(PathBuf::from(path)));
        }
        match s {
            "none" => Ok(CalibrationSpec::None),
            "fit" => Ok(CalibrationSpec::Fit),
            other => Err(Error::argument(format!("unknown calibration {other:?}"))),
        }
    }
}

impl fmt::Display for CalibrationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalibrationSpec::None => f.write_str("none"),
            CalibrationSpec::Fit => f.write_str("fit"),
            CalibrationSpec::Apply(p) => write!(f, "apply:{}", p.display()),
        }
    }
}

impl Serialize for CalibrationSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CalibrationSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CalibrationSpec::from_str(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Stub,
    Http,
}

impl FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "stub" => Ok(ProviderKind::Stub),
            "http" => Ok(ProviderKind::Http),
            other => Err(Error::argument(format!("unknown provider {other:?}"))),
        }
    }
}

/// Label space the predictions are scored in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Binary,
    ThreeWay,
    SixWay,
}

impl Task {
    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            Task::Binary => &["false", "true"],
            Task::ThreeWay => &["false", "partially-false", "true"],
            Task::SixWay => &[
                "pants-fire",
                "false",
                "barely-true",
                "half-true",
                "mostly-true",
                "true",
            ],
        }
    }

    fn gold(self, label: SixWayLabel) -> usize {
        match self {
            Task::Binary => binarize(label).index(),
            Task::ThreeWay => coarsen_6_to_3(label).index(),
            Task::SixWay => label.index(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceConfig {
    /// JSONL of `{statement_id, text, url?}`.
    pub articles: PathBuf,
    /// Strip the verdict sentence and everything after it.
    #[serde(default = "yes")]
    pub answerless: bool,
    #[serde(default)]
    pub keyword_match: KeywordMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IclConfig {
    /// Labeled pool the demonstrations are drawn from.
    pub train: DatasetRef,
    #[serde(default = "default_embedding_model")]
    pub embedding_model: String,
    /// Vector length of stub embeddings.
    #[serde(default = "default_stub_dimension")]
    pub stub_dimension: usize,
}

fn yes() -> bool {
    true
}

fn default_embedding_model() -> String {
    DEFAULT_EMBEDDING_MODEL.to_string()
}

fn default_stub_dimension() -> usize {
    64
}

fn default_model() -> String {
    "gpt-4".to_string()
}

fn default_reps() -> u32 {
    1
}

fn default_concurrency() -> usize {
    DEFAULT_CONCURRENCY
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

/// Everything needed to reproduce a run offline given the same fixtures.
/// The API credential is never part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub dataset: DatasetRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<DatasetRef>,
    pub prompt: PromptKind,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_reps")]
    pub repetitions: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub threshold: ThresholdSpec,
    #[serde(default)]
    pub gate: GateSpec,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    pub out: PathBuf,
    #[serde(default)]
    pub provider: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_prices")]
    pub prices: PriceTable,
    #[serde(default)]
    pub http: HttpSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EvidenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icl: Option<IclConfig>,
}

impl ExperimentManifest {
    /// Minimal manifest with defaults for everything optional.
    pub fn new(dataset: DatasetRef, prompt: PromptKind, out: impl Into<PathBuf>) -> Self {
        ExperimentManifest {
            dataset,
            validation: None,
            prompt,
            model: default_model(),
            temperature: DEFAULT_TEMPERATURE,
            repetitions: 1,
            seed: 0,
            task: Task::Binary,
            threshold: ThresholdSpec::default(),
            gate: GateSpec::None,
            calibration: CalibrationSpec::None,
            out: out.into(),
            provider: ProviderKind::Stub,
            fixtures: None,
            cache_dir: None,
            concurrency: DEFAULT_CONCURRENCY,
            prices: default_prices(),
            http: HttpSettings::default(),
            evidence: None,
            icl: None,
        }
    }

    /// TOML, or JSON when the extension is `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("reading {}: {e}", path.display())))?;
        let manifest: ExperimentManifest = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.prompt;
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        if !self.temperature.is_finite() || !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.concurrency == 0 {
            return Err(Error::config("concurrency must be at least 1"));
        }
        let needs_validation =
            self.threshold == ThresholdSpec::Optimize || self.calibration == CalibrationSpec::Fit;
        if needs_validation && self.validation.is_none() {
            return Err(Error::config(
                "threshold optimization and calibration fitting need a validation dataset",
            ));
        }
        let score_only = self.threshold == ThresholdSpec::Optimize
            || self.gate == GateSpec::Band
            || self.calibration != CalibrationSpec::None
            || self.task != Task::Binary;
        if score_only && !kind.is_score() {
            return Err(Error::config(format!(
                "{kind} replies are 0/1; thresholds, band gating, calibration and multi-class tasks need a score prompt"
            )));
        }
        if self.gate == GateSpec::Uncertain
            && kind != PromptKind::BinaryUncertaintyEnabled
            && kind.is_score()
        {
            log::warn!(
                "uncertain gating with {kind}: only literal \"0.5\" replies will be excluded"
            );
        }
        if kind == PromptKind::WebEvidence && self.evidence.is_none() {
            return Err(Error::config(
                "web_evidence prompt needs an [evidence] section",
            ));
        }
        if matches!(
            kind,
            PromptKind::IclV1 | PromptKind::IclV2 | PromptKind::IclV3
        ) && self.icl.is_none()
        {
            return Err(Error::config(format!(
                "{kind} prompt needs an [icl] section"
            )));
        }
        Ok(())
    }
}

/// Build the gateway a manifest asks for. The HTTP credential comes from
/// the environment only.
pub fn build_gateway(manifest: &ExperimentManifest) -> Result<Gateway> {
    let provider: Arc<dyn ChatProvider> = match manifest.provider {
        ProviderKind::Stub => {
            let stub = match &manifest.fixtures {
                Some(p) => StubProvider::from_jsonl(p)
                    .map_err(|e| Error::config(format!("loading fixtures {}: {e}", p.display())))?,
                None => StubProvider::new(Vec::new()),
            };
            let dim = manifest
                .icl
                .as_ref()
                .map_or(default_stub_dimension(), |c| c.stub_dimension);
            Arc::new(stub.with_embedding(dim, manifest.seed))
        }
        ProviderKind::Http => Arc::new(HttpProvider::from_env(&manifest.http)?),
    };
    let cache_dir = manifest
        .cache_dir
        .clone()
        .or_else(|| match manifest.provider {
            ProviderKind::Http => Some(manifest.out.join("cache")),
            ProviderKind::Stub => None,
        });
    let cache = match cache_dir {
        Some(dir) => ResponseCache::open(dir)?,
        None => ResponseCache::in_memory(),
    };
    Ok(Gateway::new(provider)
        .with_cache(cache)
        .with_prices(manifest.prices.clone())
        .with_concurrency(manifest.concurrency))
}

/// How records become scored items.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub task: Task,
    pub rule: ThresholdRule,
    pub gate: GateSpec,
    pub seed: u64,
}

/// Fill non-numeric replies the way a run with `gate` treats them: `0.5`
/// abstentions stay put only when they are about to be gated out.
pub fn fill_for_gate(
    records: &[PredictionRecord],
    seed: u64,
    gate: GateSpec,
) -> Vec<PredictionRecord> {
    fill_nonnumeric(records, seed, gate != GateSpec::Uncertain)
}

/// Score one run's records against gold labels. Records are filled, gated,
/// thresholded (or binned for multi-class tasks) and tallied per stratum.
pub fn evaluate_records(
    records: &[PredictionRecord],
    statements: &[Statement],
    opts: EvalOptions,
) -> Result<MetricsReport> {
    let by_id: HashMap<&str, &Statement> = statements.iter().map(|s| (s.id.as_str(), s)).collect();
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !by_id.contains_key(r.statement_id.as_str()))
        .map(|r| r.statement_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingKeys(missing));
    }
    let filled = fill_for_gate(records, opts.seed, opts.gate);
    let excluded: std::collections::HashSet<(String, u32)> = match opts.gate.mode() {
        Some(mode) => gate_uncertain(&filled, mode)?
            .excluded
            .into_iter()
            .map(|r| (r.statement_id, r.run_index))
            .collect(),
        None => Default::default(),
    };
    let mut items = Vec::with_capacity(filled.len());
    for r in &filled {
        let s = by_id[r.statement_id.as_str()];
        let label = s.six_way.ok_or_else(|| {
            Error::data("statement has no gold label").for_statement(s.id.clone())
        })?;
        let predicted = if excluded.contains(&(r.statement_id.clone(), r.run_index)) {
            None
        } else {
            Some(predict(r, opts).map_err(|e| e.for_statement(r.statement_id.clone()))?)
        };
        items.push(ScoredItem {
            statement_id: r.statement_id.clone(),
            predicted,
            gold: opts.task.gold(label),
            filled_random: r.filled_random,
        });
    }
    let possibility: HashMap<String, PossibilityLabel> = filled
        .iter()
        .filter_map(|r| {
            by_id[r.statement_id.as_str()]
                .possibility
                .map(|p| (r.statement_id.clone(), p))
        })
        .collect();
    let strata = (!possibility.is_empty()).then_some(&possibility);
    stratified_report(&items, opts.task.class_names(), strata)
}

fn predict(r: &PredictionRecord, opts: EvalOptions) -> Result<usize> {
    match (r.verdict, opts.task) {
        (VerdictKind::Binary(b), Task::Binary) => Ok(b as usize),
        (VerdictKind::Score(s), Task::Binary) => Ok(apply_threshold(s, opts.rule).index()),
        (VerdictKind::Score(s), Task::ThreeWay) => score_to_kway(s, 3),
        (VerdictKind::Score(s), Task::SixWay) => score_to_kway(s, 6),
        (v, task) => Err(Error::data(format!(
            "cannot score verdict {v:?} for task {task:?}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_index: u32,
    pub report: MetricsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ece: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub prompt: PromptKind,
    pub model: String,
    pub temperature: f64,
    pub task: Task,
    /// Threshold actually applied (fixed or optimized); `None` for 0/1 prompts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationModel>,
    pub runs: Vec<RunMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ManifestSnapshot<'a> {
    harness_version: &'static str,
    manifest: &'a ExperimentManifest,
    template_hashes: BTreeMap<PromptKind, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<PredictionRecord>,
    pub report: RunReport,
    pub variation: Option<VariationReport>,
    pub reliability: Option<ReliabilityTable>,
}

struct IclContext {
    train: Vec<Statement>,
    train_vectors: Vec<(String, crate::gateway::EmbeddingVector)>,
    model: String,
}

fn icl_context(cfg: &IclConfig, gateway: &Gateway) -> Result<IclContext> {
    let train = cfg.train.load()?;
    if train.is_empty() {
        return Err(Error::data("ICL training pool is empty"));
    }
    if let Some(s) = train.iter().find(|s| s.six_way.is_none()) {
        return Err(Error::data("training item has no label").for_statement(s.id.clone()));
    }
    let texts: Vec<&str> = train.iter().map(|s| s.text.as_str()).collect();
    let vectors = gateway.embed_batch(&texts, &cfg.embedding_model)?;
    Ok(IclContext {
        train_vectors: train.iter().map(|s| s.id.clone()).zip(vectors).collect(),
        train,
        model: cfg.embedding_model.clone(),
    })
}

/// Render one prompt per statement, attaching evidence or demonstrations
/// when the prompt kind needs them.
fn render_all(
    manifest: &ExperimentManifest,
    statements: &[Statement],
    gateway: &Gateway,
    icl: Option<&IclContext>,
    warnings: &mut Vec<String>,
) -> Result<Vec<RenderedPrompt>> {
    let kind = manifest.prompt;
    if let Some(cfg) = manifest
        .evidence
        .as_ref()
        .filter(|_| kind == PromptKind::WebEvidence)
    {
        let articles = load_articles(&cfg.articles)?;
        let missing: Vec<String> = statements
            .iter()
            .filter(|s| !articles.contains_key(&s.id) && !articles.contains_key(s.base_id()))
            .map(|s| s.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingKeys(missing));
        }
        return statements
            .iter()
            .map(|s| {
                let article = articles
                    .get(&s.id)
                    .or_else(|| articles.get(s.base_id()))
                    .expect("checked");
                let ep = build_evidence_prompt(s, article, cfg.answerless, cfg.keyword_match)
                    .map_err(|e| e.for_statement(s.id.clone()))?;
                warnings.extend(ep.warning);
                Ok(ep.prompt)
            })
            .collect();
    }
    let Some(icl) = icl.filter(|_| {
        matches!(
            kind,
            PromptKind::IclV1 | PromptKind::IclV2 | PromptKind::IclV3
        )
    }) else {
        return statements
            .iter()
            .map(|s| render(kind, s, None, None).map_err(|e| e.for_statement(s.id.clone())))
            .collect();
    };
    let texts: Vec<&str> = statements.iter().map(|s| s.text.as_str()).collect();
    let vectors = gateway.embed_batch(&texts, &icl.model)?;
    let nearest = vectors
        .iter()
        .zip(statements)
        .map(|(v, s)| {
            nearest_train_distance(v, &icl.train_vectors).map_err(|e| e.for_statement(s.id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let distances: Vec<f64> = nearest.iter().map(|n| n.distance).collect();
    let train_by_id: HashMap<&str, &Statement> =
        icl.train.iter().map(|s| (s.id.as_str(), s)).collect();
    statements
        .iter()
        .zip(&nearest)
        .map(|(s, n)| {
            let use_demo = kind != PromptKind::IclV3
                || select_icl_variant(n.distance, &distances)? == PromptKind::IclV2;
            let t = train_by_id[n.train_id.as_str()];
            let demo = use_demo.then(|| Demonstration {
                id: &t.id,
                text: &t.text,
                score: demo_label_to_score(t.six_way.expect("checked")),
            });
            render(kind, s, None, demo).map_err(|e| e.for_statement(s.id.clone()))
        })
        .collect()
}

/// Query the gateway for every (prompt, run) pair. Successful replies come
/// back in (run, prompt) order, followed by the first failure if any.
fn collect_records(
    manifest: &ExperimentManifest,
    gateway: &Gateway,
    prompts: &[RenderedPrompt],
    runs: u32,
) -> Result<(Vec<PredictionRecord>, Option<Error>)> {
    let mut requests = Vec::with_capacity(prompts.len() * runs as usize);
    for run in 0..runs {
        for p in prompts {
            requests.push(ModelRequest::new(
                &manifest.model,
                p.clone(),
                manifest.temperature,
                run,
            )?);
        }
    }
    let mut records = Vec::with_capacity(requests.len());
    let mut first_error = None;
    for (req, result) in requests.iter().zip(gateway.chat_batch(&requests)?) {
        match result {
            Ok(resp) => {
                let mut r = PredictionRecord::from_reply(
                    &req.prompt.statement_id,
                    req.prompt.kind,
                    &req.model_id,
                    req.run_index,
                    resp.raw_text,
                );
                r.prompt_hash = Some(req.prompt.hash());
                if r.out_of_range {
                    log::warn!("{}: out-of-range score {:?}", r.statement_id, r.raw_text);
                }
                records.push(r);
            }
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e.for_statement(req.prompt.statement_id.clone()));
                }
            }
        }
    }
    Ok((records, first_error))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_provenance(manifest: &ExperimentManifest, gateway: &Gateway) -> Result<()> {
    let snapshot = ManifestSnapshot {
        harness_version: env!("CARGO_PKG_VERSION"),
        manifest,
        template_hashes: PromptKind::ALL
            .into_iter()
            .filter_map(|k| template_hash(k).map(|h| (k, h)))
            .collect(),
    };
    write_json(&manifest.out.join("manifest.json"), &snapshot)?;
    write_json(
        &manifest.out.join("cost.json"),
        &summarize(&gateway.ledger()),
    )
}

fn scores_and_labels(
    records: &[PredictionRecord],
    statements: &[Statement],
) -> Result<(Vec<u8>, Vec<BinaryLabel>)> {
    let by_id: HashMap<&str, &Statement> = statements.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for r in records {
        let Some(score) = r.verdict.score() else {
            continue;
        };
        let label = by_id
            .get(r.statement_id.as_str())
            .and_then(|s| s.binary())
            .ok_or_else(|| Error::data("no gold label").for_statement(r.statement_id.clone()))?;
        scores.push(score);
        labels.push(label);
    }
    Ok((scores, labels))
}

/// Execute a manifest end to end and write the results directory.
///
/// On a model or parse failure the records gathered so far are still
/// written before the error is returned.
pub fn run(manifest: &ExperimentManifest, gateway: &Gateway) -> Result<RunOutcome> {
    manifest.validate()?;
    fs::create_dir_all(&manifest.out)?;
    let mut warnings = Vec::new();
    let statements = manifest.dataset.load()?;
    if statements.is_empty() {
        let msg = format!("dataset {} is empty", manifest.dataset.path.display());
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let icl = match &manifest.icl {
        Some(cfg) if !statements.is_empty() => Some(icl_context(cfg, gateway)?),
        _ => None,
    };

    // Validation pass (first run only): threshold search and calibration fit.
    let mut rule = match manifest.threshold {
        ThresholdSpec::Fixed(t) => ThresholdRule::new(t)?,
        ThresholdSpec::Optimize => ThresholdRule::ZERO_SHOT,
    };
    let mut calibration = match &manifest.calibration {
        CalibrationSpec::Apply(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::config(format!("reading calibration {}: {e}", path.display()))
            })?;
            Some(
                serde_json::from_str::<CalibrationModel>(&text)
                    .map_err(|e| Error::config(e.to_string()))?,
            )
        }
        _ => None,
    };
    if let Some(val_ref) = &manifest.validation {
        let val = val_ref.load()?;
        let prompts = render_all(manifest, &val, gateway, icl.as_ref(), &mut warnings)?;
        let (records, err) = collect_records(manifest, gateway, &prompts, 1)?;
        write_records(manifest.out.join("val_records.jsonl"), &records)?;
        if let Some(e) = err {
            write_provenance(manifest, gateway)?;
            return Err(e);
        }
        let filled = fill_for_gate(&records, manifest.seed, GateSpec::None);
        let (scores, labels) = scores_and_labels(&filled, &val)?;
        if manifest.threshold == ThresholdSpec::Optimize {
            rule = optimize_threshold(&scores, &labels)?;
            log::info!("optimized threshold on validation: {}", rule.threshold);
        }
        if manifest.calibration == CalibrationSpec::Fit {
            let s: Vec<f64> = scores.iter().map(|&s| s as f64).collect();
            let model = platt_fit(&s, &labels)?;
            write_json(&manifest.out.join("calibration.json"), &model)?;
            calibration = Some(model);
        }
    }

    let prompts = render_all(manifest, &statements, gateway, icl.as_ref(), &mut warnings)?;
    let (records, err) = collect_records(manifest, gateway, &prompts, manifest.repetitions)?;
    write_records(manifest.out.join("records.jsonl"), &records)?;
    if let Some(e) = err {
        write_provenance(manifest, gateway)?;
        return Err(e);
    }

    let opts = EvalOptions {
        task: manifest.task,
        rule,
        gate: manifest.gate,
        seed: manifest.seed,
    };
    let mut runs = Vec::with_capacity(manifest.repetitions as usize);
    let mut reliability = None;
    for run_index in 0..manifest.repetitions {
        let run_records: Vec<PredictionRecord> = records
            .iter()
            .filter(|r| r.run_index == run_index)
            .cloned()
            .collect();
        let report = evaluate_records(&run_records, &statements, opts)?;
        let mut ece = None;
        if let Some(model) = &calibration {
            let kept = match manifest.gate.mode() {
                Some(mode) => {
                    gate_uncertain(&fill_for_gate(&run_records, opts.seed, opts.gate), mode)?.kept
                }
                None => fill_for_gate(&run_records, opts.seed, opts.gate),
            };
            let (scores, labels) = scores_and_labels(&kept, &statements)?;
            if !scores.is_empty() {
                let probs: Vec<f64> = scores.iter().map(|&s| model.apply(s as f64)).collect();
                let table = reliability_table(&probs, &labels, 10)?;
                if table.ties_cross_edges {
                    warnings.push(format!(
                        "run {run_index}: tied probabilities straddle reliability bin edges"
                    ));
                }
                ece = Some(table.ece());
                if run_index == 0 {
                    reliability = Some(table);
                }
            }
        }
        runs.push(RunMetrics {
            run_index,
            report,
            ece,
        });
    }

    let variation =
        if manifest.repetitions >= 2 && manifest.prompt.is_score() && !statements.is_empty() {
            let gold: HashMap<String, BinaryLabel> = statements
                .iter()
                .filter_map(|s| s.binary().map(|b| (s.id.clone(), b)))
                .collect();
            let per_run: Vec<Vec<PredictionRecord>> = (0..manifest.repetitions)
                .map(|k| {
                    records
                        .iter()
                        .filter(|r| r.run_index == k)
                        .cloned()
                        .collect()
                })
                .collect();
            Some(variation_study(&per_run, &gold, rule, manifest.seed)?)
        } else {
            None
        };

    let report = RunReport {
        prompt: manifest.prompt,
        model: manifest.model.clone(),
        temperature: manifest.temperature,
        task: manifest.task,
        threshold: (manifest.prompt.is_score() && manifest.task == Task::Binary)
            .then_some(rule.threshold),
        calibration,
        runs,
        warnings,
    };

    let out = &manifest.out;
    write_json(&out.join("metrics.json"), &report)?;
    let mut summary = BufWriter::new(File::create(out.join("summary.csv"))?);
    for (k, run) in report.runs.iter().enumerate() {
        let mut buf = Vec::new();
        write_summary_csv(&run.report, &mut buf)?;
        let text = String::from_utf8(buf).expect("csv is utf-8");
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if k == 0 {
                    writeln!(summary, "run,{line}")?;
                }
                continue;
            }
            writeln!(summary, "{},{line}", run.run_index)?;
        }
    }
    summary.flush()?;
    if let Some(table) = &reliability {
        table.write_csv(BufWriter::new(File::create(out.join("reliability.csv"))?))?;
    }
    if let Some(v) = &variation {
        write_json(&out.join("variation.json"), v)?;
    }
    write_provenance(manifest, gateway)?;
    if !report.warnings.is_empty() {
        write_jsonl(out.join("warnings.jsonl"), &report.warnings)?;
    }

    Ok(RunOutcome {
        records,
        report,
        variation,
        reliability,
    })
}
