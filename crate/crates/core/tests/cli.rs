use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use verifact_core::corpus::{load_liar_tsv, Split};
use verifact_core::gateway::Fixture;
use verifact_core::prompts::{render, PromptKind};

fn verifact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verifact"))
        .args(args)
        .env_remove("VERIFACT_API_KEY")
        .env_remove("VERIFACT_ENDPOINT")
        .output()
        .expect("running verifact")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_dataset(dir: &Path) -> std::path::PathBuf {
    let tsv = dir.join("test.tsv");
    fs::write(
        &tsv,
        "1.json\ttrue\tThe river is clean.\n2.json\tfalse\tThe river is on fire.\n3.json\thalf-true\tFish returned.\n",
    )
    .unwrap();
    tsv
}

fn write_fixtures(dir: &Path, tsv: &Path, replies: &[&str]) -> std::path::PathBuf {
    let statements = load_liar_tsv(tsv, Split::Test).unwrap();
    let mut body = String::new();
    for (s, reply) in statements.iter().zip(replies) {
        let f = Fixture {
            prompt_hash: render(PromptKind::Score, s, None, None).unwrap().hash(),
            run_index: 0,
            raw_text: reply.to_string(),
        };
        body.push_str(&serde_json::to_string(&f).unwrap());
        body.push('\n');
    }
    let path = dir.join("fixtures.jsonl");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn cost_prints_dollars() {
    let out = verifact(&[
        "cost",
        "--input-tokens",
        "100000",
        "--output-tokens",
        "3000",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "3.18");
}

#[test]
fn unknown_model_price_is_a_config_error() {
    let out = verifact(&[
        "cost",
        "--model",
        "mystery",
        "--input-tokens",
        "1",
        "--output-tokens",
        "1",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_arguments_exit_2() {
    assert_eq!(code(&verifact(&["run"])), 2);
    assert_eq!(code(&verifact(&["run", "--threshold", "nonsense"])), 2);
}

#[test]
fn http_without_credentials_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = write_dataset(dir.path());
    let out_dir = dir.path().join("out");
    let out = verifact(&[
        "run",
        "--dataset",
        tsv.to_str().unwrap(),
        "--prompt",
        "score",
        "--provider",
        "http",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("VERIFACT_API_KEY"));
}

#[test]
fn fixture_miss_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = write_dataset(dir.path());
    // Only two of three statements have fixtures.
    let fixtures = write_fixtures(dir.path(), &tsv, &["80", "10"]);
    let fixtures_body = fs::read_to_string(&fixtures).unwrap();
    fs::write(
        &fixtures,
        fixtures_body.lines().take(2).collect::<Vec<_>>().join("\n"),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = verifact(&[
        "run",
        "--dataset",
        tsv.to_str().unwrap(),
        "--prompt",
        "score",
        "--fixtures",
        fixtures.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn stub_run_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = write_dataset(dir.path());
    let fixtures = write_fixtures(dir.path(), &tsv, &["80", "10", "I cannot say."]);
    let out_dir = dir.path().join("out");
    let out = verifact(&[
        "run",
        "--dataset",
        tsv.to_str().unwrap(),
        "--prompt",
        "score",
        "--fixtures",
        fixtures.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "records.jsonl",
        "metrics.json",
        "summary.csv",
        "manifest.json",
        "cost.json",
    ] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }

    let records = out_dir.join("records.jsonl");
    let out = verifact(&[
        "evaluate",
        "--records",
        records.to_str().unwrap(),
        "--dataset",
        tsv.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["0"]["n_total"], 3);
    assert_eq!(report["0"]["n_filled_random"], 1);

    let gate_dir = dir.path().join("gated");
    let out = verifact(&[
        "gate",
        "--records",
        records.to_str().unwrap(),
        "--mode",
        "band",
        "--out",
        gate_dir.to_str().unwrap(),
    ]);
    // The refusal has no score, so band gating refuses the file.
    assert_eq!(code(&out), 2);
}

#[test]
fn evaluate_on_garbage_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = write_dataset(dir.path());
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{not json\n").unwrap();
    let out = verifact(&[
        "evaluate",
        "--records",
        bad.to_str().unwrap(),
        "--dataset",
        tsv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn truncate_writes_articles_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let articles = dir.path().join("articles.jsonl");
    fs::write(
        &articles,
        "{\"statement_id\":\"1\",\"text\":\"Some context. We rate this False. More.\"}\n\
         {\"statement_id\":\"2\",\"text\":\"She wore a pantsuit. Nothing else.\"}\n",
    )
    .unwrap();
    let out_path = dir.path().join("stripped.jsonl");
    let out = verifact(&[
        "truncate",
        "--articles",
        articles.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stripped = fs::read_to_string(&out_path).unwrap();
    assert!(stripped.contains("\"Some context.\""));
    assert!(stripped.contains("pantsuit"));
    assert!(dir.path().join("stripped.audit.jsonl").exists());
    assert!(String::from_utf8_lossy(&out.stdout)
        .contains("1 where word and substring matching disagree"));
}

fn write_records(path: &Path, replies: &[(&str, &str)], run: u32) {
    let body: String = replies
        .iter()
        .map(|(id, r)| {
            let rec = verifact_core::parser::PredictionRecord::from_reply(
                *id,
                PromptKind::Score,
                "m",
                run,
                *r,
            );
            serde_json::to_string(&rec).unwrap() + "\n"
        })
        .collect();
    fs::write(path, body).unwrap();
}

#[test]
fn study_variation_and_partition() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = write_dataset(dir.path());
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    write_records(
        &a,
        &[("1.json", "90"), ("2.json", "20"), ("3.json", "30")],
        0,
    );
    write_records(
        &b,
        &[("1.json", "70"), ("2.json", "60"), ("3.json", "80")],
        0,
    );

    let report = dir.path().join("variation.json");
    let out = verifact(&[
        "study",
        "variation",
        "--records",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--dataset",
        tsv.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["n_runs"], 2);
    assert_eq!(v["max_ptp"], 50);

    let train = dir.path().join("train.tsv");
    fs::write(
        &train,
        "t1\ttrue\tRivers are cleaner now.\nt2\tfalse\tThe lake froze in July.\n",
    )
    .unwrap();
    let part = dir.path().join("partition");
    let out = verifact(&[
        "study",
        "partition",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
        "--dataset",
        tsv.to_str().unwrap(),
        "--train",
        train.to_str().unwrap(),
        "--permutations",
        "200",
        "--out",
        part.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(part.join("partition.csv")).unwrap();
    assert!(csv.starts_with("id,distance_to_nearest_train,nearest_train_id,partition_cell"));
    assert!(part.join("tests.json").exists());
}
