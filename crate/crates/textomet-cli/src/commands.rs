//! Subcommand implementations. Every tabular output is UTF-8 CSV with a
//! header; dendrograms are DOT; all outputs land under the configured
//! output directory and are byte-deterministic for a fixed seed.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use textomet::classify::{
    self, docov, load_json_model, predict_centroid, predict_logreg, predict_nb,
    prepare_documents, save_json_model, train_centroid, train_logreg, train_nb, train_skipgram,
    CentroidModel, EmbeddingModel, LabeledCorpus, LogisticModel, NaiveBayesModel, PredictionSet,
};
use textomet::corpus::{self, parse_starred_corpus, write_starred_corpus, Corpus};
use textomet::eval::{self, composition, evaluate, EvalReport, SplitSpec, EVAL_CSV_NOTE};
use textomet::prep::{self, PrepConfig};
use textomet::reinert::{
    chd, class_term_profile, class_variable_profile, class_profiles_csv, export_dendrogram_dot,
    variable_profiles_csv,
};
use textomet::rng::SplitMix64;
use textomet::specificity::{specificity_table, Partition};

use crate::artifacts::ArtifactSet;
use crate::config::FileConfig;

/// A command failure carrying the process exit code: 2 for usage and input
/// parse errors, 1 for stage failures.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub fn usage_failure(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

pub fn stage_failure(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read corpus {}", path.display()))?;
    let corpus = parse_starred_corpus(&text)
        .with_context(|| format!("cannot parse corpus {}", path.display()))?;
    Ok(corpus)
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

pub fn cmd_stats(corpus_path: &Path, config: &FileConfig) -> Result<String, Failure> {
    let prep = config.prep_config().map_err(usage_failure)?;
    let corpus = load_corpus(corpus_path).map_err(usage_failure)?;
    let stats = corpus::corpus_stats(&corpus, &prep);
    Ok(stats.to_csv())
}

// ---------------------------------------------------------------------------
// specificity
// ---------------------------------------------------------------------------

fn unit_partition_by_variable(
    units: &[prep::ContextUnit],
    corpus: &Corpus,
    variable: &str,
) -> Partition {
    let labels: Vec<Option<String>> = units
        .iter()
        .map(|u| {
            corpus.documents[u.parent_doc]
                .variables
                .get(variable)
                .map(|m| format!("{variable}={m}"))
        })
        .collect();
    Partition::from_labels(&labels)
}

pub fn cmd_specificity(
    corpus_path: &Path,
    variable: &str,
    banner: Option<usize>,
    config: &FileConfig,
    out: Option<&Path>,
) -> Result<Option<String>, Failure> {
    let prep_config = config.prep_config().map_err(usage_failure)?;
    let corpus = load_corpus(corpus_path).map_err(usage_failure)?;
    if !corpus.variable_catalog.contains_key(variable) {
        return Err(usage_failure(anyhow!(
            "variable `{variable}` does not occur in {}",
            corpus_path.display()
        )));
    }
    let segmented = prep::segment(&corpus, &prep_config);
    let dtm = prep::build_dtm(&segmented, &prep_config)
        .context("building the document-term matrix")
        .map_err(stage_failure)?;
    let partition = unit_partition_by_variable(&segmented.units, &corpus, variable);
    let table = specificity_table(&dtm, &partition)
        .context("computing specificity")
        .map_err(stage_failure)?;
    let csv = table.to_csv(banner);
    match out {
        Some(dir) => {
            let mut artifacts = ArtifactSet::create(dir).map_err(stage_failure)?;
            artifacts.write("specificity.csv", csv.as_bytes()).map_err(stage_failure)?;
            Ok(None)
        }
        None => Ok(Some(csv)),
    }
}

// ---------------------------------------------------------------------------
// chd
// ---------------------------------------------------------------------------

pub fn cmd_chd(
    corpus_path: &Path,
    config: &FileConfig,
    export_dtm: bool,
    out: &Path,
) -> Result<(), Failure> {
    let prep_config = config.prep_config().map_err(usage_failure)?;
    let corpus = load_corpus(corpus_path).map_err(usage_failure)?;
    let mut artifacts = ArtifactSet::create(out).map_err(stage_failure)?;
    run_chd_stage(&corpus, &prep_config, config, export_dtm, &mut artifacts).map_err(|e| {
        let _ = artifacts.quarantine();
        stage_failure(e)
    })
}

fn run_chd_stage(
    corpus: &Corpus,
    prep_config: &PrepConfig,
    config: &FileConfig,
    export_dtm: bool,
    artifacts: &mut ArtifactSet,
) -> Result<()> {
    let segmented = prep::segment(corpus, prep_config);
    let dtm = prep::build_dtm(&segmented, prep_config)
        .context("building the document-term matrix")?;
    if export_dtm {
        artifacts.write("dtm.csv", dtm.to_coo_csv().as_bytes())?;
        artifacts.write("vocabulary.csv", dtm.vocab_csv().as_bytes())?;
    }
    let tree = chd(&dtm, config.chd.max_classes, config.chd.min_class_size)
        .context("descending hierarchical classification")?;
    let term_profile = class_term_profile(&tree, &dtm);
    let variable_profile = class_variable_profile(&tree, &segmented.units, corpus);
    artifacts.write(
        "dendrogram.dot",
        export_dendrogram_dot(
            &tree,
            &term_profile,
            config.chd.top_terms,
            Some((&variable_profile, config.chd.significance_threshold)),
        )
        .as_bytes(),
    )?;
    artifacts.write("class_profiles.csv", class_profiles_csv(&term_profile).as_bytes())?;
    artifacts
        .write("variable_profiles.csv", variable_profiles_csv(&variable_profile).as_bytes())?;
    artifacts.write("assignment.csv", tree.assignment_csv(&segmented.units).as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// train / predict
// ---------------------------------------------------------------------------

/// The three models of one target variable.
struct TargetModels {
    nb: NaiveBayesModel,
    logreg: LogisticModel,
    centroid: CentroidModel,
}

fn train_target_models(
    labeled: &LabeledCorpus,
    embedding: &EmbeddingModel,
    config: &FileConfig,
    seed: u64,
) -> Result<TargetModels> {
    let nb = train_nb(labeled, config.nb.alpha)
        .with_context(|| format!("naive Bayes on `{}`", labeled.target))?;
    let logreg = train_logreg(labeled, &config.logistic_params(seed))
        .with_context(|| format!("logistic regression on `{}`", labeled.target))?;
    let include_mean = config.embedding.include_mean;
    let descriptors: Vec<(u32, Vec<f64>)> = labeled
        .docs
        .iter()
        .filter_map(|d| {
            docov(&d.tokens, embedding, include_mean).ok().map(|desc| (d.label, desc))
        })
        .collect();
    let centroid = train_centroid(&labeled.target, &labeled.modalities, include_mean, &descriptors)
        .with_context(|| format!("centroid model on `{}`", labeled.target))?;
    Ok(TargetModels { nb, logreg, centroid })
}

/// Per-document outputs of the three classifiers: (nb, logreg, centroid).
type ClassifierVotes = ((u32, f64), (u32, f64), Option<(u32, f64)>);

/// Run the three classifiers over prepared documents and combine the votes.
fn predict_set(
    models: &TargetModels,
    embedding: &EmbeddingModel,
    doc_ids: &[usize],
    tokens: &[Vec<String>],
) -> PredictionSet {
    let space = classify::FeatureSpace::from_vocab(models.nb.vocab.clone());
    let include_mean = models.centroid.include_mean;
    let rows: Vec<ClassifierVotes> = tokens
        .par_iter()
        .map(|toks| {
            let counts = space.featurize(toks);
            let nb_pred = predict_nb(&models.nb, &counts);
            let lr_pred = predict_logreg(&models.logreg, &counts);
            let cent_pred = docov(toks, embedding, include_mean)
                .ok()
                .and_then(|desc| predict_centroid(&models.centroid, &desc).ok());
            (nb_pred, lr_pred, cent_pred)
        })
        .collect();
    let nb: Vec<(u32, f64)> = rows.iter().map(|r| r.0).collect();
    let lr: Vec<(u32, f64)> = rows.iter().map(|r| r.1).collect();
    let cent: Vec<Option<(u32, f64)>> = rows.iter().map(|r| r.2).collect();
    classify::combine_predictions(
        &models.nb.target,
        &models.nb.modalities,
        doc_ids,
        &nb,
        &lr,
        &cent,
    )
}

pub fn cmd_train(
    corpus_path: &Path,
    targets: &[String],
    config: &FileConfig,
    seed: u64,
    out: &Path,
) -> Result<(), Failure> {
    if targets.is_empty() {
        return Err(usage_failure(anyhow!("at least one --target is required")));
    }
    let prep_config = config.prep_config().map_err(usage_failure)?;
    let corpus = load_corpus(corpus_path).map_err(usage_failure)?;
    let mut artifacts = ArtifactSet::create(out).map_err(stage_failure)?;
    let mut run = || -> Result<()> {
        let streams = prepare_documents(&corpus, &prep_config);
        let embedding = train_skipgram(&streams, &config.skipgram_params(seed))
            .context("skip-gram training")?;
        artifacts.write("models/embedding.vec", &embedding.to_bytes())?;
        let root = SplitMix64::new(seed);
        for (t, target) in targets.iter().enumerate() {
            let labeled = LabeledCorpus::from_corpus(&corpus, target, &prep_config)?;
            let models =
                train_target_models(&labeled, &embedding, config, root.fork(t as u64).next_u64())?;
            artifacts.write(
                &format!("models/{target}/nb.model"),
                save_json_model("naive-bayes", &models.nb).as_bytes(),
            )?;
            artifacts.write(
                &format!("models/{target}/logreg.model"),
                save_json_model("logistic", &models.logreg).as_bytes(),
            )?;
            artifacts.write(
                &format!("models/{target}/centroid.model"),
                save_json_model("centroid", &models.centroid).as_bytes(),
            )?;
        }
        Ok(())
    };
    run().map_err(|e| {
        let _ = artifacts.quarantine();
        stage_failure(e)
    })
}

fn load_target_models(models_dir: &Path, target: &str) -> Result<TargetModels> {
    let read = |name: &str| -> Result<String> {
        let path = models_dir.join(target).join(name);
        std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read model {}", path.display()))
    };
    Ok(TargetModels {
        nb: load_json_model("naive-bayes", &read("nb.model")?)?,
        logreg: load_json_model("logistic", &read("logreg.model")?)?,
        centroid: load_json_model("centroid", &read("centroid.model")?)?,
    })
}

pub fn cmd_predict(
    corpus_path: &Path,
    models_dir: &Path,
    targets: &[String],
    config: &FileConfig,
    out: &Path,
) -> Result<(), Failure> {
    let prep_config = config.prep_config().map_err(usage_failure)?;
    let corpus = load_corpus(corpus_path).map_err(usage_failure)?;
    let targets: Vec<String> = if targets.is_empty() {
        // Every subdirectory holding a nb.model is a trained target.
        let mut found = Vec::new();
        let entries = std::fs::read_dir(models_dir)
            .with_context(|| format!("cannot read {}", models_dir.display()))
            .map_err(usage_failure)?;
        for entry in entries.flatten() {
            if entry.path().join("nb.model").exists() {
                found.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        found.sort();
        found
    } else {
        targets.to_vec()
    };
    if targets.is_empty() {
        return Err(usage_failure(anyhow!(
            "no trained targets under {}",
            models_dir.display()
        )));
    }

    let mut artifacts = ArtifactSet::create(out).map_err(stage_failure)?;
    let mut run = || -> Result<()> {
        let embedding_bytes = std::fs::read(models_dir.join("embedding.vec"))
            .with_context(|| format!("cannot read {}/embedding.vec", models_dir.display()))?;
        let embedding = EmbeddingModel::from_bytes(&embedding_bytes)?;
        let streams = prepare_documents(&corpus, &prep_config);
        let doc_ids: Vec<usize> = corpus.documents.iter().map(|d| d.id).collect();
        let mut sets = Vec::new();
        for target in &targets {
            let models = load_target_models(models_dir, target)?;
            sets.push(predict_set(&models, &embedding, &doc_ids, &streams));
        }
        artifacts.write("predictions.csv", classify::predictions_csv(&sets).as_bytes())?;
        Ok(())
    };
    run().map_err(|e| {
        let _ = artifacts.quarantine();
        stage_failure(e)
    })
}

// ---------------------------------------------------------------------------
// inject
// ---------------------------------------------------------------------------

fn load_predictions(path: &Path) -> Result<Vec<PredictionSet>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read predictions {}", path.display()))?;
    classify::parse_predictions_csv(&text).map_err(|e| anyhow!(e))
}

pub fn cmd_inject(
    corpus_path: &Path,
    predictions_path: &Path,
    prefix: &str,
    out: &Path,
) -> Result<(), Failure> {
    let corpus = load_corpus(corpus_path).map_err(usage_failure)?;
    let sets = load_predictions(predictions_path).map_err(usage_failure)?;
    let injected =
        corpus::inject_variables(&corpus, &sets, prefix).map_err(|e| stage_failure(e.into()))?;
    let text = write_starred_corpus(&injected).map_err(|e| stage_failure(e.into()))?;
    let mut artifacts = ArtifactSet::create(out).map_err(stage_failure)?;
    artifacts.write("injected_corpus.txt", text.as_bytes()).map_err(stage_failure)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub const EVAL_CSV_HEADER: &str = "target,classifier,class,precision,recall,f1,support";

fn eval_rows_for_set(gold_corpus: &Corpus, set: &PredictionSet) -> Result<String> {
    let modalities: Vec<String> = gold_corpus
        .variable_catalog
        .get(&set.target)
        .map(|s| s.iter().cloned().collect())
        .ok_or_else(|| anyhow!("gold corpus has no variable `{}`", set.target))?;

    let mut gold: Vec<u32> = Vec::new();
    let mut nb_pred = Vec::new();
    let mut lr_pred = Vec::new();
    let mut cent_pred: Vec<(u32, String)> = Vec::new();
    let mut vote_pred = Vec::new();
    for row in &set.rows {
        let doc = gold_corpus
            .documents
            .get(row.doc_id)
            .ok_or_else(|| anyhow!("prediction references unknown document {}", row.doc_id))?;
        let Some(modality) = doc.variables.get(&set.target) else { continue };
        let g = modalities
            .iter()
            .position(|m| m == modality)
            .expect("catalog modality") as u32;
        gold.push(g);
        nb_pred.push(row.nb.0.clone());
        lr_pred.push(row.logreg.0.clone());
        if let Some((label, _)) = &row.centroid {
            cent_pred.push((g, label.clone()));
        }
        vote_pred.push(row.vote.clone());
    }
    if gold.is_empty() {
        bail!("no overlap between predictions for `{}` and the gold corpus", set.target);
    }

    let mut out = String::new();
    let mut push_report = |classifier: &str, report: &EvalReport| {
        out.push_str(&report.csv_rows(&format!("{},{classifier},", set.target)));
    };
    push_report("nb", &evaluate(&modalities, &gold, &nb_pred)?);
    push_report("logreg", &evaluate(&modalities, &gold, &lr_pred)?);
    if !cent_pred.is_empty() {
        let cent_gold: Vec<u32> = cent_pred.iter().map(|(g, _)| *g).collect();
        let cent_labels: Vec<String> = cent_pred.iter().map(|(_, l)| l.clone()).collect();
        push_report("centroid", &evaluate(&modalities, &cent_gold, &cent_labels)?);
    }
    push_report("vote", &evaluate(&modalities, &gold, &vote_pred)?);
    Ok(out)
}

pub fn cmd_evaluate(
    corpus_path: &Path,
    predictions_path: &Path,
    out: Option<&Path>,
) -> Result<Option<String>, Failure> {
    let corpus = load_corpus(corpus_path).map_err(usage_failure)?;
    let sets = load_predictions(predictions_path).map_err(usage_failure)?;
    let run = || -> Result<String> {
        let mut csv = String::from(EVAL_CSV_NOTE);
        csv.push_str(EVAL_CSV_HEADER);
        csv.push('\n');
        for set in &sets {
            csv.push_str(&eval_rows_for_set(&corpus, set)?);
        }
        Ok(csv)
    };
    let csv = run().map_err(stage_failure)?;
    match out {
        Some(dir) => {
            let mut artifacts = ArtifactSet::create(dir).map_err(stage_failure)?;
            artifacts.write("eval.csv", csv.as_bytes()).map_err(stage_failure)?;
            Ok(None)
        }
        None => Ok(Some(csv)),
    }
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

struct StageError {
    stage: &'static str,
    source: anyhow::Error,
}

fn at<T>(stage: &'static str, result: Result<T>) -> Result<T, StageError> {
    result.map_err(|source| StageError { stage, source })
}

pub fn cmd_pipeline(
    config: &FileConfig,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut config = config.clone();
    if let Some(seed) = seed_override {
        config.pipeline.seed = seed;
    }
    if let Some(out) = out_override {
        config.paths.out = Some(out);
    }
    config.validate_for_pipeline().map_err(usage_failure)?;
    let prep_config = config.prep_config().map_err(usage_failure)?;
    let out_dir = config.paths.out.clone().expect("validated");
    let mut artifacts = ArtifactSet::create(&out_dir).map_err(stage_failure)?;

    match run_pipeline(&config, &prep_config, &mut artifacts) {
        Ok(()) => Ok(()),
        Err(StageError { stage, source }) => {
            let _ = artifacts.quarantine();
            Err(stage_failure(source.context(format!("pipeline stage `{stage}` failed"))))
        }
    }
}

fn run_pipeline(
    config: &FileConfig,
    prep_config: &PrepConfig,
    artifacts: &mut ArtifactSet,
) -> Result<(), StageError> {
    let seed = config.pipeline.seed;
    let prefix = &config.pipeline.prefix;

    // load
    let labeled_corpus = at("load", load_corpus(config.paths.labeled.as_ref().expect("validated")))?;
    let target_corpus = at("load", load_corpus(config.paths.target.as_ref().expect("validated")))?;

    // train: one embedding over the labeled text, then 3 models per target
    // on the 70% slice; the 30% slice measures transfer quality.
    let labeled_streams = prepare_documents(&labeled_corpus, prep_config);
    let embedding = at(
        "train",
        train_skipgram(&labeled_streams, &config.skipgram_params(seed))
            .context("skip-gram training"),
    )?;

    let root = SplitMix64::new(seed);
    let split_spec = SplitSpec {
        train_fraction: config.split.train_fraction,
        seed,
        stratified: config.split.stratified,
    };

    let mut eval_csv = String::from(EVAL_CSV_NOTE);
    eval_csv.push_str(EVAL_CSV_HEADER);
    eval_csv.push('\n');
    let mut transfer_sets: Vec<PredictionSet> = Vec::new();

    let target_streams = prepare_documents(&target_corpus, prep_config);
    let target_ids: Vec<usize> = target_corpus.documents.iter().map(|d| d.id).collect();

    for (t, target) in config.pipeline.targets.iter().enumerate() {
        let labeled = at(
            "train",
            LabeledCorpus::from_corpus(&labeled_corpus, target, prep_config)
                .with_context(|| format!("preparing target `{target}`")),
        )?;
        let (train_slice, test_slice) = at(
            "train",
            eval::split(&labeled, &split_spec).with_context(|| format!("splitting `{target}`")),
        )?;
        let models = at(
            "train",
            train_target_models(&train_slice, &embedding, config, root.fork(t as u64).next_u64()),
        )?;

        // evaluate on the held-out slice: the labeled corpus itself carries
        // the gold variables, indexed by document id.
        let test_ids: Vec<usize> = test_slice.docs.iter().map(|d| d.doc_id).collect();
        let test_tokens: Vec<Vec<String>> =
            test_slice.docs.iter().map(|d| d.tokens.clone()).collect();
        let test_set = predict_set(&models, &embedding, &test_ids, &test_tokens);
        let rows = at("evaluate", eval_rows_for_set(&labeled_corpus, &test_set))?;
        eval_csv.push_str(&rows);

        // transfer to the target corpus
        transfer_sets.push(predict_set(&models, &embedding, &target_ids, &target_streams));
    }

    at("predict", {
        artifacts
            .write("predictions.csv", classify::predictions_csv(&transfer_sets).as_bytes())
            .context("writing predictions.csv")
    })?;
    at("evaluate", artifacts.write("eval.csv", eval_csv.as_bytes()).context("writing eval.csv"))?;

    let comp = at("evaluate", composition(&transfer_sets).context("composition report"))?;
    at("evaluate", artifacts.write("composition.csv", comp.to_csv().as_bytes()))?;

    // inject pseudo-variables and write the enriched corpus
    let injected = at(
        "inject",
        corpus::inject_variables(&target_corpus, &transfer_sets, prefix)
            .context("injecting pseudo-variables"),
    )?;
    let injected_text = at("inject", write_starred_corpus(&injected).context("serializing"))?;
    at("inject", artifacts.write("injected_corpus.txt", injected_text.as_bytes()))?;

    // specificity by each pseudo-variable partition
    let segmented = prep::segment(&injected, prep_config);
    let dtm = at(
        "specificity",
        prep::build_dtm(&segmented, prep_config).context("document-term matrix"),
    )?;
    let mut spec_csv = String::from("form,part,k,F,t,T,score\n");
    for target in &config.pipeline.targets {
        let variable = format!("{prefix}{target}");
        let partition = unit_partition_by_variable(&segmented.units, &injected, &variable);
        let table = at(
            "specificity",
            specificity_table(&dtm, &partition)
                .with_context(|| format!("specificity by `{variable}`")),
        )?;
        let csv = table.to_csv(config.pipeline.banner);
        spec_csv.push_str(csv.split_once('\n').map(|(_, rest)| rest).unwrap_or(""));
    }
    at("specificity", artifacts.write("specificity.csv", spec_csv.as_bytes()))?;

    // descending hierarchical classification with variable profiles
    let tree = at(
        "chd",
        chd(&dtm, config.chd.max_classes, config.chd.min_class_size)
            .context("descending hierarchical classification"),
    )?;
    let term_profile = class_term_profile(&tree, &dtm);
    let variable_profile = class_variable_profile(&tree, &segmented.units, &injected);
    at(
        "chd",
        artifacts.write(
            "dendrogram.dot",
            export_dendrogram_dot(
                &tree,
                &term_profile,
                config.chd.top_terms,
                Some((&variable_profile, config.chd.significance_threshold)),
            )
            .as_bytes(),
        ),
    )?;
    at("chd", artifacts.write("class_profiles.csv", class_profiles_csv(&term_profile).as_bytes()))?;
    at(
        "chd",
        artifacts
            .write("variable_profiles.csv", variable_profiles_csv(&variable_profile).as_bytes()),
    )?;
    at("chd", artifacts.write("assignment.csv", tree.assignment_csv(&segmented.units).as_bytes()))?;

    at("manifest", artifacts.write_manifest(seed))?;
    Ok(())
}
