use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use verifact_core::calibration::{platt_fit, reliability_table, CalibrationModel};
use verifact_core::corpus::{BinaryLabel, Language, LiarQuoting, Split, Statement};
use verifact_core::evidence::{audit_truncation, load_articles, write_jsonl, KeywordMatch};
use verifact_core::gateway::{
    default_prices, estimate_cost, summarize, CostLedger, CostSummary, Gateway, HttpProvider,
    HttpSettings, PriceTable, StubProvider,
};
use verifact_core::parser::{read_records, write_records, PredictionRecord};
use verifact_core::prompts::PromptKind;
use verifact_core::runner::{
    self, evaluate_records, fill_for_gate, CalibrationSpec, DatasetFormat, DatasetRef, EvalOptions,
    ExperimentManifest, GateSpec, ProviderKind, Task, ThresholdSpec,
};
use verifact_core::studies::{
    error_partition, nearest_train_distances, variation_study, write_partition_csv,
    GroupTestOptions, NearestTrain, TestMethod,
};
use verifact_core::verdicts::{apply_threshold, gate_uncertain, GateMode, ThresholdRule};
use verifact_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "verifact",
    version,
    about = "LLM veracity-scoring experiment harness"
)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment end to end.
    Run(RunArgs),
    /// Score a records file against gold labels.
    Evaluate(EvaluateArgs),
    /// Fit a Platt model on records, or apply one and report ECE.
    Calibrate(CalibrateArgs),
    /// Split records into kept and excluded by an uncertainty gate.
    Gate(GateArgs),
    /// Variation and error-partition studies.
    #[command(subcommand)]
    Study(StudyCommand),
    /// Strip verdict sentences from fact-check articles.
    Truncate(TruncateArgs),
    /// Price token counts or a saved cost ledger.
    Cost(CostArgs),
}

#[derive(Args, Clone)]
struct DatasetArgs {
    /// LIAR TSV or LIAR-New JSONL.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// liar or liar_new; guessed from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    split: Option<Split>,
    /// LIAR-New: keep one language (en, fr).
    #[arg(long)]
    language: Option<Language>,
    /// Honor CSV double quotes in LIAR TSV files.
    #[arg(long)]
    csv_quoting: bool,
}

impl DatasetArgs {
    fn dataset_ref(&self) -> Result<Option<DatasetRef>> {
        let Some(path) = &self.dataset else {
            return Ok(None);
        };
        Ok(Some(dataset_ref(path, self.format.as_deref(), self)?))
    }

    fn require(&self) -> Result<DatasetRef> {
        self.dataset_ref()?
            .ok_or_else(|| Error::argument("--dataset is required"))
    }
}

fn dataset_ref(path: &Path, format: Option<&str>, args: &DatasetArgs) -> Result<DatasetRef> {
    let format = match format {
        Some("liar") => DatasetFormat::Liar,
        Some("liar_new" | "liar-new") => DatasetFormat::LiarNew,
        Some(other) => return Err(Error::argument(format!("unknown dataset format {other:?}"))),
        None if path
            .extension()
            .is_some_and(|e| e == "jsonl" || e == "json") =>
        {
            DatasetFormat::LiarNew
        }
        None => DatasetFormat::Liar,
    };
    Ok(DatasetRef {
        format,
        path: path.to_path_buf(),
        split: args.split,
        quoting: if args.csv_quoting {
            LiarQuoting::CsvQuoted
        } else {
            LiarQuoting::Literal
        },
        language: args.language,
        resolutions: None,
    })
}

#[derive(Args)]
struct RunArgs {
    /// Manifest (TOML, or JSON by extension). Flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DatasetArgs,
    /// Validation set for --threshold optimize and --calibrate fit.
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long)]
    prompt: Option<PromptKind>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Integer 0..=101 or "optimize".
    #[arg(long)]
    threshold: Option<ThresholdSpec>,
    /// none, band or uncertain.
    #[arg(long)]
    gate: Option<GateSpec>,
    /// none, fit or apply:PATH.
    #[arg(long)]
    calibrate: Option<CalibrationSpec>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// stub or http.
    #[arg(long)]
    provider: Option<ProviderKind>,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    concurrency: Option<usize>,
}

fn manifest_from(args: &RunArgs) -> Result<ExperimentManifest> {
    let mut m = match &args.config {
        Some(path) => ExperimentManifest::load(path)?,
        None => {
            let dataset = args
                .data
                .dataset_ref()?
                .ok_or_else(|| Error::config("either --config or --dataset is required"))?;
            let prompt = args
                .prompt
                .ok_or_else(|| Error::config("--prompt is required without --config"))?;
            let out = args
                .out
                .clone()
                .ok_or_else(|| Error::config("--out is required without --config"))?;
            ExperimentManifest::new(dataset, prompt, out)
        }
    };
    if args.config.is_some() {
        if let Some(d) = args.data.dataset_ref()? {
            m.dataset = d;
        } else if let Some(split) = args.data.split {
            m.dataset.split = Some(split);
        }
    }
    if let Some(v) = &args.validation {
        let mut d = dataset_ref(v, args.data.format.as_deref(), &args.data)?;
        d.split = Some(Split::Val);
        m.validation = Some(d);
    }
    if let Some(p) = args.prompt {
        m.prompt = p;
    }
    if let Some(x) = &args.model {
        m.model = x.clone();
    }
    if let Some(x) = args.temperature {
        m.temperature = x;
    }
    if let Some(x) = args.reps {
        m.repetitions = x;
    }
    if let Some(x) = args.seed {
        m.seed = x;
    }
    if let Some(x) = args.threshold {
        m.threshold = x;
    }
    if let Some(x) = args.gate {
        m.gate = x;
    }
    if let Some(x) = &args.calibrate {
        m.calibration = x.clone();
    }
    if let Some(x) = &args.out {
        m.out = x.clone();
    }
    if let Some(x) = args.provider {
        m.provider = x;
    }
    if let Some(x) = &args.fixtures {
        m.fixtures = Some(x.clone());
    }
    if let Some(x) = args.concurrency {
        m.concurrency = x;
    }
    m.validate()?;
    Ok(m)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let manifest = manifest_from(args)?;
    let gateway = runner::build_gateway(&manifest)?;
    let outcome = runner::run(&manifest, &gateway)?;
    for w in &outcome.report.warnings {
        log::warn!("{w}");
    }
    let first = outcome.report.runs.first().map(|r| &r.report);
    if let Some(r) = first {
        println!(
            "{} records, accuracy {:.1}, weighted F1 {:.1}, macro F1 {:.1} -> {}",
            outcome.records.len(),
            100.0 * r.accuracy,
            100.0 * r.weighted_f1,
            100.0 * r.macro_f1,
            manifest.out.display()
        );
    }
    Ok(())
}

#[derive(Args)]
struct ScoringArgs {
    #[arg(long, default_value = "50")]
    threshold: ThresholdRuleArg,
    #[arg(long, default_value = "none")]
    gate: GateSpec,
    #[arg(long, value_enum, default_value = "binary")]
    task: TaskArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy)]
struct ThresholdRuleArg(ThresholdRule);

impl std::str::FromStr for ThresholdRuleArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<ThresholdSpec>()? {
            ThresholdSpec::Fixed(t) => Ok(ThresholdRuleArg(ThresholdRule::new(t)?)),
            ThresholdSpec::Optimize => Err(Error::argument(
                "optimize is only available in `run`; pass an integer",
            )),
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TaskArg {
    Binary,
    ThreeWay,
    SixWay,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Binary => Task::Binary,
            TaskArg::ThreeWay => Task::ThreeWay,
            TaskArg::SixWay => Task::SixWay,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    records: PathBuf,
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Write the report as JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, value)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, value)?;
            lock.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let statements = args.data.require()?.load()?;
    let records = read_records(&args.records)?;
    if records.is_empty() {
        log::warn!("{} has no records", args.records.display());
    }
    let opts = EvalOptions {
        task: args.scoring.task.into(),
        rule: args.scoring.threshold.0,
        gate: args.scoring.gate,
        seed: args.scoring.seed,
    };
    let mut by_run: std::collections::BTreeMap<u32, Vec<PredictionRecord>> = Default::default();
    for r in records {
        by_run.entry(r.run_index).or_default().push(r);
    }
    let reports = by_run
        .into_iter()
        .map(|(run, recs)| Ok((run, evaluate_records(&recs, &statements, opts)?)))
        .collect::<Result<std::collections::BTreeMap<_, _>>>()?;
    print_json(&reports, args.out.as_deref())
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    records: PathBuf,
    #[command(flatten)]
    data: DatasetArgs,
    /// Apply this saved model instead of fitting one.
    #[arg(long)]
    apply: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fitted model (fit) or reliability CSV (apply); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn gold_scores(
    records: &[PredictionRecord],
    statements: &[Statement],
) -> Result<(Vec<f64>, Vec<BinaryLabel>)> {
    let gold: HashMap<&str, BinaryLabel> = statements
        .iter()
        .filter_map(|s| s.binary().map(|b| (s.id.as_str(), b)))
        .collect();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for r in records {
        let Some(s) = r.verdict.score() else { continue };
        let l = gold
            .get(r.statement_id.as_str())
            .ok_or_else(|| Error::MissingKeys(vec![r.statement_id.clone()]))?;
        scores.push(s as f64);
        labels.push(*l);
    }
    Ok((scores, labels))
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let statements = args.data.require()?.load()?;
    let records = fill_for_gate(&read_records(&args.records)?, args.seed, GateSpec::None);
    let (scores, labels) = gold_scores(&records, &statements)?;
    match &args.apply {
        None => {
            let model = platt_fit(&scores, &labels)?;
            print_json(&model, args.out.as_deref())
        }
        Some(path) => {
            let model: CalibrationModel = serde_json::from_str(&fs::read_to_string(path)?)?;
            let probs: Vec<f64> = scores.iter().map(|&s| model.apply(s)).collect();
            let table = reliability_table(&probs, &labels, args.bins)?;
            if table.ties_cross_edges {
                log::warn!("tied probabilities straddle bin edges; ECE depends on input order");
            }
            eprintln!("ECE {:.4} over {} predictions", table.ece(), table.n());
            match &args.out {
                Some(p) => table.write_csv(BufWriter::new(File::create(p)?)),
                None => table.write_csv(io::stdout().lock()),
            }
        }
    }
}

#[derive(Args)]
struct GateArgs {
    #[arg(long)]
    records: PathBuf,
    /// band or uncertain.
    #[arg(long)]
    mode: GateSpec,
    /// Directory for kept.jsonl and excluded.jsonl.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_gate(args: &GateArgs) -> Result<()> {
    let mode = match args.mode {
        GateSpec::Band => GateMode::ScoreBand,
        GateSpec::Uncertain => GateMode::UncertainVerdict,
        GateSpec::None => return Err(Error::argument("gate mode must be band or uncertain")),
    };
    let records = read_records(&args.records)?;
    let gated = gate_uncertain(&records, mode)?;
    fs::create_dir_all(&args.out)?;
    write_records(args.out.join("kept.jsonl"), &gated.kept)?;
    write_records(args.out.join("excluded.jsonl"), &gated.excluded)?;
    println!(
        "kept {}, excluded {}",
        gated.kept.len(),
        gated.excluded.len()
    );
    Ok(())
}

#[derive(Subcommand)]
enum StudyCommand {
    /// Spread of repeated runs; one records file per run, or one file with
    /// several run indices.
    Variation(VariationArgs),
    /// Which statements each of two systems gets right, with distances to
    /// the nearest training statement.
    Partition(PartitionArgs),
}

#[derive(Args)]
struct VariationArgs {
    #[arg(long, num_args = 1.., required = true)]
    records: Vec<PathBuf>,
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, default_value = "50")]
    threshold: ThresholdRuleArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn binary_gold(statements: &[Statement]) -> HashMap<String, BinaryLabel> {
    statements
        .iter()
        .filter_map(|s| s.binary().map(|b| (s.id.clone(), b)))
        .collect()
}

fn cmd_variation(args: &VariationArgs) -> Result<()> {
    let statements = args.data.require()?.load()?;
    let mut runs: std::collections::BTreeMap<(usize, u32), Vec<PredictionRecord>> =
        Default::default();
    for (i, path) in args.records.iter().enumerate() {
        for r in read_records(path)? {
            runs.entry((i, r.run_index)).or_default().push(r);
        }
    }
    let runs: Vec<_> = runs.into_values().collect();
    let report = variation_study(
        &runs,
        &binary_gold(&statements),
        args.threshold.0,
        args.seed,
    )?;
    print_json(&report, args.out.as_deref())
}

#[derive(Args)]
struct PartitionArgs {
    /// Records of system A (e.g. the LLM).
    #[arg(long)]
    a: PathBuf,
    /// Records of system B (e.g. a fine-tuned classifier, as Binary verdicts).
    #[arg(long)]
    b: PathBuf,
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, default_value = "50")]
    threshold: ThresholdRuleArg,
    /// Training pool (LIAR TSV) for nearest-neighbour distances.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value = runner::DEFAULT_EMBEDDING_MODEL)]
    embedding_model: String,
    #[arg(long, default_value = "stub")]
    provider: ProviderKind,
    #[arg(long, default_value_t = 64)]
    stub_dimension: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = verifact_core::studies::DEFAULT_PERMUTATIONS)]
    permutations: usize,
    /// Directory for partition.csv and tests.json.
    #[arg(long)]
    out: PathBuf,
}

fn binary_predictions(
    records: &[PredictionRecord],
    rule: ThresholdRule,
    seed: u64,
) -> HashMap<String, BinaryLabel> {
    fill_for_gate(records, seed, GateSpec::None)
        .into_iter()
        .filter(|r| r.run_index == 0)
        .filter_map(|r| {
            let label = match r.verdict {
                verifact_core::parser::VerdictKind::Score(s) => apply_threshold(s, rule),
                verifact_core::parser::VerdictKind::Binary(b) => BinaryLabel::from_bool(b == 1),
                _ => return None,
            };
            Some((r.statement_id, label))
        })
        .collect()
}

fn cmd_partition(args: &PartitionArgs) -> Result<()> {
    let statements = args.data.require()?.load()?;
    let a = binary_predictions(&read_records(&args.a)?, args.threshold.0, args.seed);
    let b = binary_predictions(&read_records(&args.b)?, args.threshold.0, args.seed);
    let gold: HashMap<String, BinaryLabel> = binary_gold(&statements)
        .into_iter()
        .filter(|(id, _)| a.contains_key(id) || b.contains_key(id))
        .collect();
    let partition = error_partition(&a, &b, &gold)?;
    fs::create_dir_all(&args.out)?;

    #[derive(Serialize)]
    struct Summary {
        only_a_correct: usize,
        only_b_correct: usize,
        both_correct: usize,
        neither_correct: usize,
        #[serde(skip_serializing_if = "Vec::is_empty")]
        tests: Vec<verifact_core::studies::GroupTest>,
    }
    let mut summary = Summary {
        only_a_correct: partition.only_a_correct.len(),
        only_b_correct: partition.only_b_correct.len(),
        both_correct: partition.both_correct.len(),
        neither_correct: partition.neither_correct.len(),
        tests: Vec::new(),
    };
    let mut distances: HashMap<String, NearestTrain> = HashMap::new();
    if let Some(train_path) = &args.train {
        let provider: Arc<dyn verifact_core::gateway::ChatProvider> = match args.provider {
            ProviderKind::Stub => Arc::new(
                StubProvider::new(Vec::new()).with_embedding(args.stub_dimension, args.seed),
            ),
            ProviderKind::Http => Arc::new(HttpProvider::from_env(&HttpSettings::default())?),
        };
        let gateway = Gateway::new(provider);
        let train = verifact_core::corpus::load_liar_tsv(train_path, Split::Train)?;
        let embed = |items: &[&Statement]| -> Result<Vec<(String, verifact_core::gateway::EmbeddingVector)>> {
            let texts: Vec<&str> = items.iter().map(|s| s.text.as_str()).collect();
            let vecs = gateway.embed_batch(&texts, &args.embedding_model)?;
            Ok(items.iter().map(|s| s.id.clone()).zip(vecs).collect())
        };
        let train_vecs = embed(&train.iter().collect::<Vec<_>>())?;
        let tests: Vec<&Statement> = statements
            .iter()
            .filter(|s| gold.contains_key(&s.id))
            .collect();
        distances = nearest_train_distances(&embed(&tests)?, &train_vecs)?
            .into_iter()
            .collect();
        let opts = GroupTestOptions {
            permutations: args.permutations,
            seed: args.seed,
        };
        for method in [TestMethod::Welch, TestMethod::Permutation] {
            match verifact_core::studies::partition_distance_test(
                &partition, &distances, method, opts,
            ) {
                Ok(t) => summary.tests.push(t),
                Err(e) => log::warn!("{method:?} test skipped: {e}"),
            }
        }
    }
    write_partition_csv(
        &partition,
        &distances,
        BufWriter::new(File::create(args.out.join("partition.csv"))?),
    )?;
    print_json(&summary, Some(&args.out.join("tests.json")))?;
    println!(
        "only A {}, only B {}, both {}, neither {}",
        summary.only_a_correct,
        summary.only_b_correct,
        summary.both_correct,
        summary.neither_correct
    );
    Ok(())
}

#[derive(Args)]
struct TruncateArgs {
    /// JSONL of {statement_id, text, url?}.
    #[arg(long)]
    articles: PathBuf,
    /// Stripped articles; an `.audit.jsonl` file is written beside it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "word")]
    keyword_match: MatchArg,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MatchArg {
    Word,
    Substring,
}

fn cmd_truncate(args: &TruncateArgs) -> Result<()> {
    let mode = match args.keyword_match {
        MatchArg::Word => KeywordMatch::WordBounded,
        MatchArg::Substring => KeywordMatch::Substring,
    };
    let mut articles: Vec<_> = load_articles(&args.articles)?.into_values().collect();
    articles.sort_by(|x, y| x.statement_id.cmp(&y.statement_id));
    let (stripped, audits): (Vec<_>, Vec<_>) =
        articles.iter().map(|a| audit_truncation(a, mode)).unzip();
    write_jsonl(&args.out, &stripped)?;
    write_jsonl(args.out.with_extension("audit.jsonl"), &audits)?;
    let emptied = stripped.iter().filter(|a| a.text.trim().is_empty()).count();
    let diverged = audits.iter().filter(|a| a.match_modes_diverge).count();
    println!(
        "{} articles, {emptied} emptied, {diverged} where word and substring matching disagree",
        stripped.len()
    );
    Ok(())
}

#[derive(Args)]
struct CostArgs {
    #[arg(long, default_value = "gpt-4")]
    model: String,
    #[arg(long, requires = "output_tokens")]
    input_tokens: Option<u64>,
    #[arg(long)]
    output_tokens: Option<u64>,
    /// A `cost.json` written by `run`.
    #[arg(long, conflicts_with = "input_tokens")]
    ledger: Option<PathBuf>,
    /// TOML table of `[model] usd_per_1k_input/usd_per_1k_output`.
    #[arg(long)]
    prices: Option<PathBuf>,
}

fn cmd_cost(args: &CostArgs) -> Result<()> {
    let prices: PriceTable = match &args.prices {
        Some(p) => toml::from_str(&fs::read_to_string(p)?)
            .map_err(|e| Error::config(format!("{}: {e}", p.display())))?,
        None => default_prices(),
    };
    if let Some(path) = &args.ledger {
        let saved: CostSummary = serde_json::from_str(&fs::read_to_string(path)?)?;
        let mut ledger = CostLedger::new(if args.prices.is_some() {
            prices
        } else {
            saved.prices.clone()
        });
        for (model, m) in &saved.models {
            ledger.totals.insert(model.clone(), m.totals);
        }
        return print_json(&summarize(&ledger), None);
    }
    let (Some(input), Some(output)) = (args.input_tokens, args.output_tokens) else {
        return Err(Error::argument(
            "pass --input-tokens and --output-tokens, or --ledger",
        ));
    };
    let mut ledger = CostLedger::new(prices);
    ledger.record(&args.model, input, output);
    println!("{:.2}", estimate_cost(&ledger, &args.model)?);
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Gate(a) => cmd_gate(a),
        Command::Study(StudyCommand::Variation(a)) => cmd_variation(a),
        Command::Study(StudyCommand::Partition(a)) => cmd_partition(a),
        Command::Truncate(a) => cmd_truncate(a),
        Command::Cost(a) => cmd_cost(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
