//! Starred-corpus file format: parsing, writing, variable injection, and
//! corpus-size statistics.
//!
//! Format contract (frozen for this toolkit):
//!
//! * a line starting with `****` opens a new document;
//! * on that line, every whitespace-separated token starting with `*` is a
//!   starred variable `*name_modality`, split on its **last** underscore
//!   (so names may contain underscores, modalities may not);
//! * tokens on the header line without a leading `*` are ignored;
//! * all following lines up to the next header are the document text,
//!   joined with `\n`;
//! * text before the first header is ignored; a file with no header parses
//!   to an empty corpus.
//!
//! The writer emits variables sorted by name and escapes underscores inside
//! modalities as `-`, which keeps the grammar context-free. Text lines are
//! written verbatim, so a text line that itself starts with `****` is
//! unrepresentable and refused.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::classify::PredictionSet;
use crate::prep::{self, PrepConfig};

/// One contribution: free text plus its starred variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    /// Dense index in corpus order.
    pub id: usize,
    pub text: String,
    /// At most one modality per variable name.
    pub variables: BTreeMap<String, String>,
}

/// An ordered set of documents plus the catalog of observed variables.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    /// variable name -> set of observed modalities.
    pub variable_catalog: BTreeMap<String, BTreeSet<String>>,
}

/// Corpus-size summary: texts, distinct surface forms, token occurrences,
/// distinct lemmas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusStats {
    pub n_texts: usize,
    pub n_forms: usize,
    pub n_occurrences: usize,
    pub n_lemmas: usize,
    /// Documents whose text tokenizes to nothing. Kept in the corpus, flagged
    /// here.
    pub n_empty_texts: usize,
}

impl CorpusStats {
    /// Four-column CSV with header, matching the `stats` CLI output.
    pub fn to_csv(&self) -> String {
        format!(
            "n_texts,n_forms,n_occurrences,n_lemmas\n{},{},{},{}\n",
            self.n_texts, self.n_forms, self.n_occurrences, self.n_lemmas
        )
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: starred token `{token}` has no underscore")]
    MalformedVariable { line: usize, token: String },
    #[error("line {line}: variable `{name}` appears twice on one header")]
    DuplicateVariable { line: usize, name: String },
    #[error("variable `{name}`: modality `{modality}` contains whitespace or `*`")]
    UnrepresentableModality { name: String, modality: String },
    #[error("variable name `{name}` contains whitespace or `*`")]
    UnrepresentableName { name: String },
    #[error("document {doc}: text line starts with `****`")]
    UnrepresentableText { doc: usize },
    #[error("injection would overwrite existing variable `{name}`")]
    VariableCollision { name: String },
    #[error("prediction references unknown document id {doc}")]
    UnknownDocument { doc: usize },
}

impl Corpus {
    /// Build a corpus from documents, reassigning dense ids in order and
    /// deriving the variable catalog.
    pub fn from_documents(docs: Vec<Document>) -> Corpus {
        let mut catalog: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let documents = docs
            .into_iter()
            .enumerate()
            .map(|(id, mut d)| {
                for (name, modality) in &d.variables {
                    catalog.entry(name.clone()).or_default().insert(modality.clone());
                }
                d.id = id;
                d
            })
            .collect();
        Corpus { documents, variable_catalog: catalog }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// Parse the starred-corpus format. Empty input yields an empty corpus.
pub fn parse_starred_corpus(input: &str) -> Result<Corpus, CorpusError> {
    let mut lines: Vec<&str> = input.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }

    let mut docs: Vec<Document> = Vec::new();
    let mut current: Option<(BTreeMap<String, String>, Vec<&str>)> = None;

    for (idx, line) in lines.iter().enumerate() {
        let line_no = idx + 1;
        if let Some(header) = line.strip_prefix("****") {
            if let Some((variables, text_lines)) = current.take() {
                docs.push(Document { id: 0, text: text_lines.join("\n"), variables });
            }
            let mut variables = BTreeMap::new();
            for token in header.split_whitespace() {
                if let Some(body) = token.strip_prefix('*') {
                    let Some(split_at) = body.rfind('_') else {
                        return Err(CorpusError::MalformedVariable {
                            line: line_no,
                            token: token.to_string(),
                        });
                    };
                    let name = body[..split_at].to_string();
                    let modality = body[split_at + 1..].to_string();
                    if variables.insert(name.clone(), modality).is_some() {
                        return Err(CorpusError::DuplicateVariable { line: line_no, name });
                    }
                }
            }
            current = Some((variables, Vec::new()));
        } else if let Some((_, text_lines)) = current.as_mut() {
            text_lines.push(line);
        }
    }
    if let Some((variables, text_lines)) = current.take() {
        docs.push(Document { id: 0, text: text_lines.join("\n"), variables });
    }

    Ok(Corpus::from_documents(docs))
}

fn representable(fragment: &str) -> bool {
    !fragment.contains(char::is_whitespace) && !fragment.contains('*')
}

/// Serialize a corpus back to the starred format. Variables are sorted by
/// name; underscores inside modalities are written as `-`.
pub fn write_starred_corpus(corpus: &Corpus) -> Result<String, CorpusError> {
    let mut out = String::new();
    for doc in &corpus.documents {
        out.push_str("****");
        for (name, modality) in &doc.variables {
            if !representable(name) {
                return Err(CorpusError::UnrepresentableName { name: name.clone() });
            }
            if !representable(modality) {
                return Err(CorpusError::UnrepresentableModality {
                    name: name.clone(),
                    modality: modality.clone(),
                });
            }
            out.push_str(" *");
            out.push_str(name);
            out.push('_');
            out.push_str(&modality.replace('_', "-"));
        }
        out.push('\n');
        if !doc.text.is_empty() {
            for line in doc.text.split('\n') {
                if line.starts_with("****") {
                    return Err(CorpusError::UnrepresentableText { doc: doc.id });
                }
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// Attach each predicted document's majority-vote label as a new starred
/// variable `prefix + target`. Existing variables are never overwritten.
pub fn inject_variables(
    corpus: &Corpus,
    predictions: &[PredictionSet],
    prefix: &str,
) -> Result<Corpus, CorpusError> {
    let mut out = corpus.clone();
    for set in predictions {
        let name = format!("{prefix}{}", set.target);
        if corpus.variable_catalog.contains_key(&name) {
            return Err(CorpusError::VariableCollision { name });
        }
        for row in &set.rows {
            let Some(doc) = out.documents.get_mut(row.doc_id) else {
                return Err(CorpusError::UnknownDocument { doc: row.doc_id });
            };
            doc.variables.insert(name.clone(), row.vote.clone());
            out.variable_catalog
                .entry(name.clone())
                .or_default()
                .insert(row.vote.clone());
        }
    }
    Ok(out)
}

/// Token, form, and lemma counts under a preparation config.
///
/// Occurrences count every token the tokenizer produces; the stopword list and
/// frequency floor of `prep` are sizing filters for the DTM, not for corpus
/// size, so they are ignored here.
pub fn corpus_stats(corpus: &Corpus, prep: &PrepConfig) -> CorpusStats {
    let mut forms: BTreeSet<String> = BTreeSet::new();
    let mut lemmas: BTreeSet<String> = BTreeSet::new();
    let mut occurrences = 0usize;
    let mut empty = 0usize;
    for doc in &corpus.documents {
        let tokens = prep::tokenize(&doc.text, prep);
        if tokens.is_empty() {
            empty += 1;
        }
        occurrences += tokens.len();
        for token in tokens {
            let lemma = prep.lemma_of(&token);
            if lemma != token {
                lemmas.insert(lemma.to_string());
            } else if !lemmas.contains(token.as_str()) {
                lemmas.insert(token.clone());
            }
            forms.insert(token);
        }
    }
    CorpusStats {
        n_texts: corpus.documents.len(),
        n_forms: forms.len(),
        n_occurrences: occurrences,
        n_lemmas: lemmas.len(),
        n_empty_texts: empty,
    }
}
