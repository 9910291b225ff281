//! Pipeline configuration: a TOML file with per-stage tables, every field
//! optional with the defaults below. Command-line flags override the file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use textomet::classify::{LogisticParams, SkipgramParams};
use textomet::prep::{self, PrepConfig};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub prep: PrepSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub nb: NbSection,
    #[serde(default)]
    pub logreg: LogregSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub chd: ChdSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub labeled: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepSection {
    pub lowercase: bool,
    pub unit_length: usize,
    pub min_form_freq: usize,
    pub lemma_table: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
}

impl Default for PrepSection {
    fn default() -> Self {
        PrepSection {
            lowercase: true,
            unit_length: 40,
            min_form_freq: 2,
            lemma_table: None,
            stopwords: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub stratified: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { train_fraction: 0.7, stratified: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbSection {
    pub alpha: f64,
}

impl Default for NbSection {
    fn default() -> Self {
        NbSection { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogregSection {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// `counts` (default) or `tfidf`.
    pub features: String,
}

impl Default for LogregSection {
    fn default() -> Self {
        LogregSection { l2: 1e-4, epochs: 30, learning_rate: 0.1, features: "counts".into() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub learning_rate: f64,
    pub include_mean: bool,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            dim: 50,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 5,
            learning_rate: 0.05,
            include_mean: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChdSection {
    pub max_classes: usize,
    pub min_class_size: usize,
    pub top_terms: usize,
    /// chi2 above which a variable modality annotates a dendrogram class
    /// (3.84 is p ~ 0.05 at 1 degree of freedom).
    pub significance_threshold: f64,
}

impl Default for ChdSection {
    fn default() -> Self {
        ChdSection { max_classes: 6, min_class_size: 5, top_terms: 8, significance_threshold: 3.84 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub targets: Vec<String>,
    pub prefix: String,
    pub seed: u64,
    /// Specificity rows kept per part in the pipeline export.
    pub banner: Option<usize>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection { targets: Vec::new(), prefix: "pred_".into(), seed: 42, banner: None }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: FileConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        Ok(config)
    }

    /// Resolve the [prep] section into a PrepConfig, loading side files.
    pub fn prep_config(&self) -> Result<PrepConfig> {
        let lemma_table = match &self.prep.lemma_table {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read lemma table {}", path.display()))?;
                Some(prep::load_lemma_table(&text)?)
            }
            None => None,
        };
        let stopwords = match &self.prep.stopwords {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read stopword list {}", path.display()))?;
                Some(prep::load_stopwords(&text))
            }
            None => None,
        };
        let config = PrepConfig {
            lowercase: self.prep.lowercase,
            lemma_table,
            stopwords,
            min_form_freq: self.prep.min_form_freq,
            target_unit_length: self.prep.unit_length,
        };
        if config.target_unit_length < 5 {
            bail!("prep.unit_length must be >= 5");
        }
        if config.min_form_freq < 1 {
            bail!("prep.min_form_freq must be >= 1");
        }
        Ok(config)
    }

    pub fn logistic_params(&self, seed: u64) -> LogisticParams {
        LogisticParams {
            l2: self.logreg.l2,
            epochs: self.logreg.epochs,
            learning_rate: self.logreg.learning_rate,
            seed,
            tfidf: self.logreg.features == "tfidf",
        }
    }

    pub fn skipgram_params(&self, seed: u64) -> SkipgramParams {
        SkipgramParams {
            dim: self.embedding.dim,
            window: self.embedding.window,
            negatives: self.embedding.negatives,
            epochs: self.embedding.epochs,
            min_count: self.embedding.min_count,
            learning_rate: self.embedding.learning_rate,
            seed,
        }
    }

    /// Checks that must hold before the pipeline does any work.
    pub fn validate_for_pipeline(&self) -> Result<()> {
        if self.pipeline.targets.is_empty() {
            bail!("pipeline.targets is empty: nothing to predict");
        }
        let labeled = self.paths.labeled.as_ref().context("paths.labeled is required")?;
        let target = self.paths.target.as_ref().context("paths.target is required")?;
        let out = self.paths.out.as_ref().context("paths.out is required")?;
        let mut seen = HashSet::new();
        for path in [labeled, target, out] {
            if !seen.insert(path.clone()) {
                bail!("paths must be distinct: {} appears twice", path.display());
            }
        }
        if self.pipeline.prefix.contains(char::is_whitespace)
            || self.pipeline.prefix.contains('*')
        {
            bail!("pipeline.prefix must not contain whitespace or `*`");
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            bail!("split.train_fraction must be strictly between 0 and 1");
        }
        match self.logreg.features.as_str() {
            "counts" | "tfidf" => {}
            other => bail!("logreg.features must be `counts` or `tfidf`, got `{other}`"),
        }
        Ok(())
    }
}
