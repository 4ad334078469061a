use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn seeds_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/seeds")
}

/// A small but complete synthetic run configuration.
fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let seeds = seeds_dir();
    let text = format!(
        "output = {out}\nseed = 5\nthreads = 1\n\n[paths]\nsexual_seeds = {s}\nclothing_seeds = {c}\n\n\
         [synth]\ngenerate = true\nbroadcasts = 150\n\n[embed]\ndimension = 16\nepochs = 2\nbuckets = 20000\n\n\
         [expand]\nneighbors = 5\n\n[lda]\nks = 2, 3\niterations = 30\n\n[forest]\ntrees = 20\n{extra}",
        out = dir.join("run").display(),
        s = seeds.join("sexual.txt").display(),
        c = seeds.join("clothing.txt").display(),
    );
    let p = dir.join("test.conf");
    std::fs::write(&p, text).unwrap();
    p
}

fn chatscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chatscope"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn assign_before_lda_sweep_names_the_producer() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "");
    let o = chatscope(&["assign", "--config", conf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("requires artifact topics.model (run lda-sweep)"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn validation_errors_are_listed_together() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(
        tmp.path(),
        "\n[coherence]\nwindow = 0\n[mystery]\nkey = 1\n",
    );
    let o = chatscope(&[
        "all",
        "--config",
        conf.to_str().unwrap(),
        "--set",
        "embed.dimension=4",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("dimension"), "{err}");
    assert!(err.contains("coherence"), "{err}");
    assert!(err.contains("unknown key mystery.key"), "{err}");
}

#[test]
fn missing_corpus_file_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "");
    let o = chatscope(&[
        "ingest",
        "--config",
        conf.to_str().unwrap(),
        "--set",
        "paths.broadcasts=/nonexistent.jsonl",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("paths.broadcasts"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_is_rejected() {
    let o = chatscope(&["frobnicate", "--config", "x.conf"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn full_run_then_report_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "");
    let conf = conf.to_str().unwrap();
    let o = chatscope(&["all", "--config", conf]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = tmp.path().join("run");
    for f in [
        "topics.csv",
        "assignments.csv",
        "coherence.csv",
        "mdi.csv",
        "patterns.csv",
        "verbs.csv",
        "manifest.tsv",
    ] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let before: Vec<Vec<u8>> = ["topics.csv", "assignments.csv", "summary.csv"]
        .iter()
        .map(|f| std::fs::read(run.join(f)).unwrap())
        .collect();
    let o = chatscope(&["report", "--config", conf]);
    assert!(o.status.success(), "{}", stderr(&o));
    for (f, old) in ["topics.csv", "assignments.csv", "summary.csv"]
        .iter()
        .zip(before)
    {
        assert_eq!(std::fs::read(run.join(f)).unwrap(), old, "{f} changed");
    }

    let manifest = std::fs::read_to_string(run.join("manifest.tsv")).unwrap();
    let stages: Vec<&str> = manifest
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(
        stages,
        [
            "synth",
            "ingest",
            "prep",
            "embed",
            "expand",
            "colloc",
            "lda-sweep",
            "assign",
            "mdi",
            "patterns",
            "report",
            "report"
        ]
    );
    assert!(manifest.lines().skip(2).all(|l| l.split('\t').count() == 4));
}

#[test]
fn stages_can_be_rerun_in_isolation() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "");
    let conf = conf.to_str().unwrap();
    for stage in [
        "synth",
        "ingest",
        "prep",
        "embed",
        "expand",
        "lda-sweep",
        "assign",
        "patterns",
    ] {
        let o = chatscope(&[stage, "--config", conf]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let run = tmp.path().join("run");
    let first = std::fs::read(run.join("patterns.csv")).unwrap();
    let o = chatscope(&["patterns", "--config", conf]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(run.join("patterns.csv")).unwrap(), first);
}
