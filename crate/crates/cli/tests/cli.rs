use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use schemaprobe::datamodel::{load_examples, load_spider_schemas, SchemaCatalog};
use schemaprobe::geometry::Metric;
use schemaprobe::probe::{collect_embeddings, probe_example, write_dump_file, F32Rounded, ReferenceEncoder, ReferenceEncoderSpec};
use schemaprobe::records::{read_jsonl, LinkRecord, MatrixRecord};
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_schemaprobe")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn probe_reference(dir: &TempDir, name: &str, metric: &str) -> PathBuf {
    let out = dir.path().join(name);
    let o = run(&[
        "probe", "--examples", s(&fixture("examples.jsonl")), "--schemas", s(&fixture("tables.json")),
        "--encoder", "reference", "--metric", metric, "--dim", "32", "--seed", "5", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    out
}

/// Writes a dump of the reference encoder used by `probe --encoder reference --dim 32 --seed 5`.
fn write_reference_dump(path: &Path) {
    let catalog = SchemaCatalog::new(load_spider_schemas(fixture("tables.json")).unwrap()).unwrap();
    let examples = load_examples(fixture("examples.jsonl"), &catalog).unwrap();
    let sets: Vec<_> = examples
        .iter()
        .map(|ex| {
            let enc = ReferenceEncoder::new(ReferenceEncoderSpec::from_gold(ex, 32, 5).unwrap());
            collect_embeddings(ex, &enc).unwrap()
        })
        .collect();
    write_dump_file(path, &sets).unwrap();
}

#[test]
fn selftest_reports_perfect_f1() {
    let o = run(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("F1 = 1.000"));
    assert!(stdout(&o).contains("selftest passed"));
}

#[test]
fn tau_out_of_range_is_validation_error() {
    let dir = TempDir::new().unwrap();
    let matrices = probe_reference(&dir, "m.jsonl", "poincare");
    let o = run(&["link", "--matrices", s(&matrices), "--tau", "1.5", "--out", s(&dir.path().join("l.jsonl"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("[0, 1]"), "{}", stderr(&o));
    let o = run(&["link", "--matrices", s(&matrices), "--tau", "-0.1", "--out", s(&dir.path().join("l.jsonl"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn truncated_dump_exits_with_format_code() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("d.prbd");
    write_reference_dump(&dump);
    let bytes = std::fs::read(&dump).unwrap();
    std::fs::write(&dump, &bytes[..bytes.len() - 10]).unwrap();
    let o = run(&[
        "probe", "--examples", s(&fixture("examples.jsonl")), "--schemas", s(&fixture("tables.json")),
        "--encoder", "dump", "--dump", s(&dump), "--out", s(&dir.path().join("m.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("expected"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_prints_usage() {
    let o = run(&["link", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn dump_encoder_needs_a_dump_path() {
    let dir = TempDir::new().unwrap();
    let o = run(&[
        "probe", "--examples", s(&fixture("examples.jsonl")), "--schemas", s(&fixture("tables.json")),
        "--encoder", "dump", "--out", s(&dir.path().join("m.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dump_and_reference_paths_agree() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("d.prbd");
    write_reference_dump(&dump);
    let out = dir.path().join("from_dump.jsonl");
    let o = run(&[
        "probe", "--examples", s(&fixture("examples.jsonl")), "--schemas", s(&fixture("tables.json")),
        "--encoder", "dump", "--dump", s(&dump), "--metric", "poincare", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let from_dump: Vec<MatrixRecord> = read_jsonl(&out).unwrap();

    let catalog = SchemaCatalog::new(load_spider_schemas(fixture("tables.json")).unwrap()).unwrap();
    let examples = load_examples(fixture("examples.jsonl"), &catalog).unwrap();
    assert_eq!(from_dump.len(), examples.len());
    for (rec, ex) in from_dump.iter().zip(&examples) {
        let enc = ReferenceEncoder::new(ReferenceEncoderSpec::from_gold(ex, 32, 5).unwrap());
        let expected = probe_example(ex, &F32Rounded(&enc), Metric::Poincare).unwrap();
        assert_eq!(rec.example_id, ex.example_id());
        assert_eq!(rec.to_matrix().unwrap(), expected);
    }
}

#[test]
fn full_pipeline_recovers_gold_links() {
    let dir = TempDir::new().unwrap();
    let matrices = probe_reference(&dir, "m.jsonl", "euclidean");
    let probe_links = dir.path().join("probe.jsonl");
    let o = run(&["link", "--matrices", s(&matrices), "--tau", "0.01", "--out", s(&probe_links)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let eval = |pred: &Path, format: &str| {
        run(&[
            "eval", "--pred", s(pred), "--gold-from-examples", s(&fixture("examples.jsonl")),
            "--schemas", s(&fixture("tables.json")), "--report", format,
        ])
    };
    let o = eval(&probe_links, "json");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["examples"], 4);
    assert_eq!(report["f1"], 1.0);

    let lexical = dir.path().join("lexical.jsonl");
    let o = run(&[
        "baseline", "--examples", s(&fixture("examples.jsonl")), "--schemas", s(&fixture("tables.json")),
        "--max-ngram", "3", "--out", s(&lexical),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = eval(&lexical, "text");
    assert!(stdout(&o).contains("F1 = "), "{}", stdout(&o));
    assert!(!stdout(&o).contains("F1 = 1.000"), "synonym example should defeat the baseline");

    let merged = dir.path().join("merged.jsonl");
    let o = run(&["merge", "--a", s(&probe_links), "--b", s(&lexical), "--out", s(&merged)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let merged: Vec<LinkRecord> = read_jsonl(&merged).unwrap();
    let probe: Vec<LinkRecord> = read_jsonl(&probe_links).unwrap();
    let lex: Vec<LinkRecord> = read_jsonl(&lexical).unwrap();
    for ((m, p), l) in merged.iter().zip(&probe).zip(&lex) {
        assert_eq!(m.edges.len(), p.edges.len() + l.edges.len());
    }
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = std::fs::read(probe_reference(&dir, "a.jsonl", "poincare")).unwrap();
    let b = std::fs::read(probe_reference(&dir, "b.jsonl", "poincare")).unwrap();
    assert_eq!(a, b);
    let render = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&[
            "render", "--matrix", s(&dir.path().join("a.jsonl")), "--example-id", "pets_1", "--format", "svg",
            "--examples", s(&fixture("examples.jsonl")), "--schemas", s(&fixture("tables.json")), "--out", s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let svg = render("a.svg");
    assert_eq!(svg, render("b.svg"));
    let text = String::from_utf8(svg).unwrap();
    assert!(text.contains("pets.pettype") && text.contains("category"));
}

#[test]
fn render_pgm_has_one_byte_per_cell() {
    let dir = TempDir::new().unwrap();
    let matrices = probe_reference(&dir, "m.jsonl", "poincare");
    let out = dir.path().join("m.pgm");
    let o = run(&["render", "--matrix", s(&matrices), "--example-id", "concert_0", "--format", "pgm", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let bytes = std::fs::read(out).unwrap();
    let header = b"P5\n10 8\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 80);
    assert!(bytes[header.len()..].contains(&255));

    let o = run(&["render", "--matrix", s(&matrices), "--example-id", "nope", "--format", "csv", "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn input_errors_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o.jsonl");
    let missing = run(&["baseline", "--examples", "/nonexistent.jsonl", "--schemas", s(&fixture("tables.json")), "--out", s(&out)]);
    assert_eq!(missing.status.code(), Some(2));

    let broken = dir.path().join("broken.jsonl");
    std::fs::write(&broken, "{\"example_id\": \"x\",\n").unwrap();
    let o = run(&["baseline", "--examples", s(&broken), "--schemas", s(&fixture("tables.json")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let unknown = dir.path().join("unknown.jsonl");
    std::fs::write(&unknown, "{\"example_id\": \"x\", \"db_id\": \"nope\", \"question_tokens\": [\"a\"]}\n").unwrap();
    let o = run(&["baseline", "--examples", s(&unknown), "--schemas", s(&fixture("tables.json")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));

    let o = run(&["baseline", "--examples", s(&fixture("examples.jsonl")), "--schemas", s(&fixture("tables.json")), "--out", "/nonexistent-dir/x.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
}
