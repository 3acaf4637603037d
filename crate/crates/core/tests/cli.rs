use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmt-distill"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_plan() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("plans/toy-small.toml")
}

#[test]
fn identical_files_score_zero_ter() {
    let dir = tempfile::tempdir().unwrap();
    let text = "a b c d\nthe cat sat\nx\n";
    let h = dir.path().join("h.txt");
    let r = dir.path().join("r.txt");
    fs::write(&h, text).unwrap();
    fs::write(&r, text).unwrap();
    let out = dir.path().join("ter.tsv");
    let o = bin(&["score", "--metric", "ter", "--hyp", s(&h), "--ref", s(&r), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let tsv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines.len(), 5);
    for l in &lines[1..4] {
        assert_eq!(l.split('\t').nth(1), Some("0.000000"));
    }
    assert_eq!(lines[4], "# corpus_ter\t0.00");

    let o = bin(&["score", "--metric", "bleu", "--hyp", s(&h), "--ref", s(&r)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8(o.stdout).unwrap().ends_with("# corpus_bleu\t100.00\n"));
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    assert_eq!(bin(&["score", "--bogus"]).status.code(), Some(1));
    assert_eq!(bin(&["no-such-command"]).status.code(), Some(1));
    let o = bin(&["translate", "--src-vocab", "a"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    assert_eq!(bin(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h");
    fs::write(&h, "a\nb\n").unwrap();
    let r = dir.path().join("r");
    fs::write(&r, "a\n").unwrap();
    let o = bin(&["score", "--metric", "bleu", "--hyp", s(&h), "--ref", s(&r)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    let missing = dir.path().join("missing");
    assert_eq!(
        bin(&["score", "--metric", "ter", "--hyp", s(&missing), "--ref", s(&r)]).status.code(),
        Some(2)
    );
}

#[test]
fn toy_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let toy = d.join("toy");
    let val = d.join("val");
    assert!(bin(&["gen-toy", "--seed", "1", "--size", "150", "--noise", "0.1", "--out-dir", s(&toy)]).status.success());
    assert!(bin(&["gen-toy", "--seed", "2", "--size", "12", "--out-dir", s(&val)]).status.success());
    assert_eq!(fs::read_to_string(toy.join("toy.noise")).unwrap().lines().count(), 150);

    let train = |seed: &str, out: &Path| {
        bin(&[
            "train",
            "--src", s(&toy.join("toy.src")),
            "--tgt", s(&toy.join("toy.tgt")),
            "--val-src", s(&val.join("toy.src")),
            "--val-tgt", s(&val.join("toy.tgt")),
            "--src-vocab", s(&toy.join("src.vocab")),
            "--tgt-vocab", s(&toy.join("tgt.vocab")),
            "--hlayer", "6", "--wemb", "4", "--seed", seed,
            "--max-epochs", "1", "--batch-size", "16", "--beam", "2",
            "--out-dir", s(out),
        ])
    };
    let (m1, m2) = (d.join("m1"), d.join("m2"));
    assert!(train("1", &m1).status.success());
    assert!(train("2", &m2).status.success());
    assert_eq!(fs::read_to_string(m1.join("history.tsv")).unwrap().lines().count(), 2);

    let hyp = d.join("hyp.txt");
    let o = bin(&[
        "translate",
        "--model", s(&m1.join("model.ckpt")),
        "--model", s(&m2.join("model.ckpt")),
        "--src-vocab", s(&toy.join("src.vocab")),
        "--tgt-vocab", s(&toy.join("tgt.vocab")),
        "--input", s(&toy.join("toy.src")),
        "--output", s(&hyp),
        "--beam", "2",
        "--workers", "2",
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("ensemble of 2 member(s)"));
    assert_eq!(fs::read_to_string(&hyp).unwrap().lines().count(), 150);

    let filtered = d.join("filtered");
    let o = bin(&[
        "filter",
        "--src", s(&toy.join("toy.src")),
        "--tgt", s(&toy.join("toy.tgt")),
        "--hyp", s(&hyp),
        "--ter-threshold", "0.8",
        "--recipe", "forward+original",
        "--out-dir", s(&filtered),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let kept = fs::read_to_string(filtered.join("filtered.src")).unwrap().lines().count();
    let ter_lines = fs::read_to_string(filtered.join("ter.tsv")).unwrap();
    let survivors = ter_lines.lines().skip(1).filter(|l| l.ends_with("\t1")).count();
    assert_eq!(kept, 2 * survivors);

    let o = bin(&[
        "translate",
        "--model", s(&m1.join("model.ckpt")),
        "--src-vocab", s(&toy.join("src.vocab")),
        "--tgt-vocab", s(&toy.join("tgt.vocab")),
        "--input", s(&val.join("toy.src")),
        "--output", s(&d.join("oracle.txt")),
        "--oracle-ref", s(&val.join("toy.tgt")),
        "--scores", s(&d.join("oracle.tsv")),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("ensemble of 1 member(s)"));
    let scores = fs::read_to_string(d.join("oracle.tsv")).unwrap();
    assert_eq!(scores.lines().count(), 13);
    assert!(scores.lines().skip(1).all(|l| l.split('\t').nth(2).unwrap().parse::<f64>().is_ok()));
}

#[test]
fn bpe_and_vocab_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let text = d.join("text");
    fs::write(&text, "lower lowest newer\nlow low newest\nwider wide\n").unwrap();
    let codes = d.join("codes");
    assert!(bin(&["bpe-learn", "--src", s(&text), "--merges", "8", "--output", s(&codes)]).status.success());
    assert!(fs::read_to_string(&codes).unwrap().starts_with("#version:1\n"));
    let seg = d.join("seg");
    assert!(bin(&["bpe-apply", "--codes", s(&codes), "--input", s(&text), "--output", s(&seg)]).status.success());
    assert!(fs::read_to_string(&seg).unwrap().contains("@@"));
    let back = d.join("back");
    assert!(bin(&["bpe-apply", "--undo", "--input", s(&seg), "--output", s(&back)]).status.success());
    assert_eq!(fs::read(&back).unwrap(), fs::read(&text).unwrap());

    let vocab = d.join("vocab");
    assert!(bin(&["build-vocab", "--input", s(&seg), "--max-size", "12", "--output", s(&vocab)]).status.success());
    assert!(fs::read_to_string(&vocab).unwrap().lines().count() <= 12);
    assert_eq!(
        bin(&["build-vocab", "--input", s(&seg), "--max-size", "3", "--output", s(&vocab)]).status.code(),
        Some(2)
    );
}

#[test]
fn distill_run_is_reproducible_and_reports_merge() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(bin(&["distill-run", "--plan", s(&small_plan()), "--out-dir", s(&a)]).status.success());
    assert!(bin(&["distill-run", "--plan", s(&small_plan()), "--out-dir", s(&b), "--workers", "4"]).status.success());
    for name in ["report.tsv", "student.ckpt", "ter.tsv", "synthetic.tgt", "train.src", "history.tsv", "teacher-1.ckpt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/toy-small.report.tsv");
    assert_eq!(fs::read_to_string(a.join("report.tsv")).unwrap(), fs::read_to_string(golden).unwrap());
    let merged = dir.path().join("all.tsv");
    let o = bin(&[
        "report",
        "--input", s(&a.join("report.tsv")),
        "--input", s(&b.join("report.tsv")),
        "--output", s(&merged),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(&merged).unwrap().lines().count(), 3);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 4);
}
