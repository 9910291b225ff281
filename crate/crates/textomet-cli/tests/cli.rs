//! Behavior of the subcommands through the real binary: outputs, exit
//! codes, and the train -> predict -> inject -> evaluate chain.

use std::path::Path;
use std::process::{Command, Output};

use textomet::corpus::{corpus_stats, parse_starred_corpus};
use textomet::prep::PrepConfig;

fn textomet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textomet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

const TWO_PART_CORPUS: &str = "\
**** *plateforme_gdn\nclimat planete transition climat\n\
**** *plateforme_gdn\nplanete transition pollution\n\
**** *plateforme_vd\nvitesse radar route vitesse\n\
**** *plateforme_vd\nradar route carburant\n";

#[test]
fn stats_on_empty_file_prints_zero_row() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("empty.txt");
    write(&corpus, "");
    let output = textomet(&["stats", corpus.to_str().unwrap()]);
    assert!(output.status.success());
    assert_eq!(
        String::from_utf8_lossy(&output.stdout),
        "n_texts,n_forms,n_occurrences,n_lemmas\n0,0,0,0\n"
    );
}

#[test]
fn stats_matches_library_computation() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("c.txt");
    write(&corpus_path, TWO_PART_CORPUS);
    let output = textomet(&["stats", corpus_path.to_str().unwrap()]);
    assert!(output.status.success());
    let corpus = parse_starred_corpus(TWO_PART_CORPUS).unwrap();
    let expected = corpus_stats(&corpus, &PrepConfig::default()).to_csv();
    assert_eq!(String::from_utf8_lossy(&output.stdout), expected);
}

#[test]
fn stats_malformed_header_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("bad.txt");
    write(&corpus, "**** *p_a\ntexte\n**** *cassé\n");
    let output = textomet(&["stats", corpus.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
}

#[test]
fn missing_file_exits_2() {
    let output = textomet(&["stats", "/nonexistent/corpus.txt"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn specificity_prints_sorted_csv() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    write(&corpus, TWO_PART_CORPUS);
    let output = textomet(&[
        "specificity",
        corpus.to_str().unwrap(),
        "--var",
        "plateforme",
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    let mut lines = stdout.lines();
    assert_eq!(lines.next().unwrap(), "form,part,k,F,t,T,score");
    assert!(stdout.contains("plateforme=gdn"));
    assert!(stdout.contains("plateforme=vd"));
}

#[test]
fn specificity_unknown_variable_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    write(&corpus, TWO_PART_CORPUS);
    let output =
        textomet(&["specificity", corpus.to_str().unwrap(), "--var", "inexistant"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn chd_writes_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    // Two clear topical groups, several docs each.
    let mut text = String::new();
    for _ in 0..6 {
        text.push_str("**** *p_a\nclimat planete transition\n");
        text.push_str("**** *p_b\nvitesse radar route\n");
    }
    write(&corpus, &text);
    let out = dir.path().join("out");
    let output = textomet(&[
        "chd",
        corpus.to_str().unwrap(),
        "--max-classes",
        "2",
        "--min-class-size",
        "1",
        "--export-dtm",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    for name in [
        "dendrogram.dot",
        "class_profiles.csv",
        "variable_profiles.csv",
        "assignment.csv",
        "dtm.csv",
        "vocabulary.csv",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let dot = std::fs::read_to_string(out.join("dendrogram.dot")).unwrap();
    assert!(dot.starts_with("digraph chd {"));
    let dtm = std::fs::read_to_string(out.join("dtm.csv")).unwrap();
    assert!(dtm.starts_with("row,col,count\n"));
    let vocabulary = std::fs::read_to_string(out.join("vocabulary.csv")).unwrap();
    assert!(vocabulary.starts_with("col,form\n"));
}

#[test]
fn chd_without_out_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    write(&corpus, TWO_PART_CORPUS);
    let output = textomet(&["chd", corpus.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

fn binary_fixture_file(path: &Path, n_docs: usize) {
    let corpus = textomet::fixture::binary_signal_fixture(9, n_docs, 30);
    write(path, &textomet::corpus::write_starred_corpus(&corpus).unwrap());
}

#[test]
fn train_predict_inject_evaluate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("labeled.txt");
    binary_fixture_file(&corpus, 80);
    let out = dir.path().join("out");

    // train
    let output = textomet(&[
        "train",
        corpus.to_str().unwrap(),
        "--target",
        "classe",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let models = out.join("models");
    assert!(models.join("embedding.vec").exists());
    for name in ["nb.model", "logreg.model", "centroid.model"] {
        assert!(models.join("classe").join(name).exists(), "{name} missing");
    }

    // predict on the same corpus
    let output = textomet(&[
        "predict",
        corpus.to_str().unwrap(),
        "--models",
        models.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let predictions = out.join("predictions.csv");
    let csv = std::fs::read_to_string(&predictions).unwrap();
    assert!(csv.starts_with("doc,target,nb_label,nb_score,"));
    assert_eq!(csv.lines().count(), 1 + 80);

    // inject with a prefix
    let output = textomet(&[
        "inject",
        corpus.to_str().unwrap(),
        "--predictions",
        predictions.to_str().unwrap(),
        "--prefix",
        "pred_",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let injected =
        std::fs::read_to_string(out.join("injected_corpus.txt")).unwrap();
    let injected_corpus = parse_starred_corpus(&injected).unwrap();
    assert!(injected_corpus.variable_catalog.contains_key("pred_classe"));
    for doc in &injected_corpus.documents {
        assert!(doc.variables.contains_key("pred_classe"));
        assert!(doc.variables.contains_key("classe"));
    }

    // injecting twice collides and fails as a stage error
    let output = textomet(&[
        "inject",
        out.join("injected_corpus.txt").to_str().unwrap(),
        "--predictions",
        predictions.to_str().unwrap(),
        "--prefix",
        "pred_",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));

    // evaluate against the gold labels
    let output = textomet(&[
        "evaluate",
        corpus.to_str().unwrap(),
        "--predictions",
        predictions.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("target,classifier,class,precision,recall,f1,support"));
    assert!(stdout.contains("classe,vote,MACRO,"));
    assert!(stdout.contains("# averaging: macro"));
}

#[test]
fn pipeline_with_zero_targets_is_a_usage_error_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let labeled = dir.path().join("labeled.txt");
    let target = dir.path().join("target.txt");
    binary_fixture_file(&labeled, 20);
    binary_fixture_file(&target, 10);
    let out = dir.path().join("out");
    let config = dir.path().join("pipeline.toml");
    write(
        &config,
        &format!(
            "[paths]\nlabeled='{}'\ntarget='{}'\nout='{}'\n[pipeline]\ntargets=[]\n",
            labeled.display(),
            target.display(),
            out.display()
        ),
    );
    let output = textomet(&["pipeline", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(!out.exists(), "usage errors must not create the output directory");
}

#[test]
fn pipeline_failure_quarantines_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let labeled = dir.path().join("labeled.txt");
    let target = dir.path().join("target.txt");
    binary_fixture_file(&labeled, 40);
    // Target corpus so small that CHD on it is unsplittable at the root:
    // every document identical.
    write(&target, "**** *p_x\nmotunique motunique\n**** *p_x\nmotunique motunique\n");
    let out = dir.path().join("out");
    let config = dir.path().join("pipeline.toml");
    write(
        &config,
        &format!(
            "[paths]\nlabeled='{}'\ntarget='{}'\nout='{}'\n\
             [prep]\nmin_form_freq=1\n\
             [embedding]\ndim=8\nepochs=2\nmin_count=1\n\
             [pipeline]\ntargets=['classe']\nseed=5\n",
            labeled.display(),
            target.display(),
            out.display()
        ),
    );
    let output = textomet(&["pipeline", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("stage"), "stderr: {stderr}");
    // Partial outputs moved under failed/.
    assert!(out.join("failed").exists(), "failed/ directory missing");
    assert!(out.join("failed").join("predictions.csv").exists());
    assert!(!out.join("predictions.csv").exists());
}
