//! Tokenization, lemmatization, context-unit segmentation and the sparse
//! document-term matrix.
//!
//! Tokens are maximal runs of Unicode letters, keeping internal hyphens.
//! Apostrophes split ("l'air" -> "l", "air"); digits and punctuation are
//! dropped. Sentence punctuation (`.` `!` `?` `…`) is not a token but its
//! position is remembered so segmentation can prefer cutting there.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Corpus;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrepError {
    #[error("no retained forms: every lemma falls below min_form_freq")]
    NoRetainedForms,
    #[error("malformed lemma table line {line}: expected `form,lemma`")]
    MalformedLemmaTable { line: usize },
}

/// Preparation parameters shared by stats, segmentation and the DTM.
#[derive(Debug, Clone)]
pub struct PrepConfig {
    pub lowercase: bool,
    /// form -> lemma; forms not in the table pass through unchanged.
    pub lemma_table: Option<HashMap<String, String>>,
    /// Dropped after lemma mapping.
    pub stopwords: Option<HashSet<String>>,
    /// Minimum corpus frequency for a lemma to enter the DTM vocabulary.
    pub min_form_freq: usize,
    /// Nominal context-unit length in lemmas.
    pub target_unit_length: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            lowercase: true,
            lemma_table: None,
            stopwords: None,
            min_form_freq: 1,
            target_unit_length: 40,
        }
    }
}

impl PrepConfig {
    pub fn lemma_of<'a>(&'a self, form: &'a str) -> &'a str {
        match &self.lemma_table {
            Some(table) => table.get(form).map(String::as_str).unwrap_or(form),
            None => form,
        }
    }

    fn is_stopword(&self, lemma: &str) -> bool {
        self.stopwords.as_ref().is_some_and(|s| s.contains(lemma))
    }

    fn assert_valid(&self) {
        assert!(self.target_unit_length >= 5, "target_unit_length must be >= 5");
        assert!(self.min_form_freq >= 1, "min_form_freq must be >= 1");
    }
}

/// Two-column `form,lemma` CSV, one mapping per line.
pub fn load_lemma_table(text: &str) -> Result<HashMap<String, String>, PrepError> {
    let mut table = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((form, lemma)) = line.split_once(',') else {
            return Err(PrepError::MalformedLemmaTable { line: idx + 1 });
        };
        table.insert(form.trim().to_string(), lemma.trim().to_string());
    }
    Ok(table)
}

/// One-column stopword list, one form per line.
pub fn load_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

const SENTENCE_PUNCT: [char; 4] = ['.', '!', '?', '…'];

enum ScanEvent<'a> {
    Token(&'a str),
    SentenceBreak,
}

fn scan_lower_cased<F: FnMut(ScanEvent)>(text: &str, mut emit: F) {
    let bytes_len = text.len();
    let mut chars = text.char_indices().peekable();
    let mut start: Option<usize> = None;

    let flush = |start: &mut Option<usize>, end: usize, emit: &mut F| {
        if let Some(s) = start.take() {
            emit(ScanEvent::Token(&text[s..end]));
        }
    };

    while let Some((i, c)) = chars.next() {
        if c.is_alphabetic() {
            if start.is_none() {
                start = Some(i);
            }
        } else if c == '-'
            && start.is_some()
            && chars.peek().is_some_and(|&(_, next)| next.is_alphabetic())
        {
            // internal hyphen stays inside the token
        } else {
            flush(&mut start, i, &mut emit);
            if SENTENCE_PUNCT.contains(&c) {
                emit(ScanEvent::SentenceBreak);
            }
        }
    }
    flush(&mut start, bytes_len, &mut emit);
}

fn scan<F: FnMut(ScanEvent)>(text: &str, lowercase: bool, emit: F) {
    // Apostrophes split unconditionally, so normalize them to a separator
    // class by handling them as non-letters: both are non-alphabetic already.
    if lowercase {
        scan_lower_cased(&text.to_lowercase(), emit);
    } else {
        scan_lower_cased(text, emit);
    }
}

/// Run `f` over every token of `text` without materializing the token list.
pub fn for_each_token<F: FnMut(&str)>(text: &str, config: &PrepConfig, mut f: F) {
    scan(text, config.lowercase, |ev| {
        if let ScanEvent::Token(t) = ev {
            f(t);
        }
    });
}

/// Ordered surface forms of a text.
pub fn tokenize(text: &str, config: &PrepConfig) -> Vec<String> {
    let mut out = Vec::new();
    for_each_token(text, config, |t| out.push(t.to_string()));
    out
}

/// Map forms through the lemma table (identity fallback), then drop
/// stopwords.
pub fn lemmatize(forms: &[String], config: &PrepConfig) -> Vec<String> {
    forms
        .iter()
        .map(|f| config.lemma_of(f).to_string())
        .filter(|l| !config.is_stopword(l))
        .collect()
}

/// String interner mapping each distinct lemma to a dense id.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    index: HashMap<String, u32>,
    entries: Vec<String>,
}

impl Lexicon {
    pub fn new() -> Self {
        Lexicon::default()
    }

    pub fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.index.get(s) {
            return id;
        }
        let id = self.entries.len() as u32;
        self.entries.push(s.to_string());
        self.index.insert(s.to_string(), id);
        id
    }

    pub fn get(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    pub fn resolve(&self, id: u32) -> &str {
        &self.entries[id as usize]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A segment of a document: the clustering granule of the Reinert analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextUnit {
    /// Dense id in corpus order.
    pub unit_id: usize,
    /// The document this unit was cut from; the unit inherits its variables.
    pub parent_doc: usize,
    /// Ordered lemma ids into the owning [`Lexicon`].
    pub lemma_ids: Vec<u32>,
}

/// Units plus the lexicon their lemma ids point into.
#[derive(Debug, Clone, Default)]
pub struct SegmentedCorpus {
    pub units: Vec<ContextUnit>,
    pub lexicon: Lexicon,
}

struct LemmaStream {
    lemma_ids: Vec<u32>,
    /// Sorted positions `p` meaning "sentence break after lemma `p`".
    breaks_after: Vec<usize>,
}

fn doc_lemma_stream(text: &str, config: &PrepConfig, lexicon: &mut Lexicon) -> LemmaStream {
    let mut lemma_ids = Vec::new();
    let mut breaks_after = Vec::new();
    scan(text, config.lowercase, |ev| match ev {
        ScanEvent::Token(form) => {
            let lemma = config.lemma_of(form);
            if !config.is_stopword(lemma) {
                lemma_ids.push(lexicon.intern(lemma));
            }
        }
        ScanEvent::SentenceBreak => {
            if !lemma_ids.is_empty() {
                let pos = lemma_ids.len() - 1;
                if breaks_after.last() != Some(&pos) {
                    breaks_after.push(pos);
                }
            }
        }
    });
    LemmaStream { lemma_ids, breaks_after }
}

/// Greedy cut of one lemma stream into unit lengths.
fn cut_lengths(n: usize, breaks_after: &[usize], target: usize) -> Vec<usize> {
    let l_min = target / 2;
    let l_max = target * 3 / 2;
    if n < l_min {
        return vec![n];
    }
    let mut lengths = Vec::new();
    let mut s = 0usize;
    let mut break_idx = 0usize;
    while s < n {
        let rem = n - s;
        // Tail shorter than l_min would be stranded, so a cut is only valid
        // if it leaves nothing or at least l_min behind.
        let valid = |len: usize| {
            len >= l_min && len <= l_max && len <= rem && (rem == len || rem - len >= l_min)
        };

        while break_idx < breaks_after.len() && breaks_after[break_idx] < s {
            break_idx += 1;
        }
        let mut best_punct: Option<usize> = None;
        for &b in &breaks_after[break_idx..] {
            let len = b + 1 - s;
            if len > l_max {
                break;
            }
            if valid(len) {
                let better = match best_punct {
                    None => true,
                    Some(cur) => len.abs_diff(target) < cur.abs_diff(target),
                };
                if better {
                    best_punct = Some(len);
                }
            }
        }

        let len = best_punct.unwrap_or_else(|| if valid(target) { target } else { rem });
        lengths.push(len);
        s += len;
    }
    lengths
}

/// Cut every document into context units of roughly `target_unit_length`
/// lemmas, preferring sentence boundaries. Documents shorter than half the
/// target form a single unit.
pub fn segment(corpus: &Corpus, config: &PrepConfig) -> SegmentedCorpus {
    config.assert_valid();
    let mut lexicon = Lexicon::new();
    let mut units = Vec::new();
    for doc in &corpus.documents {
        let stream = doc_lemma_stream(&doc.text, config, &mut lexicon);
        let mut offset = 0usize;
        for len in cut_lengths(stream.lemma_ids.len(), &stream.breaks_after, config.target_unit_length)
        {
            units.push(ContextUnit {
                unit_id: units.len(),
                parent_doc: doc.id,
                lemma_ids: stream.lemma_ids[offset..offset + len].to_vec(),
            });
            offset += len;
        }
    }
    SegmentedCorpus { units, lexicon }
}

/// One unit per document, for analyses working at document granularity.
pub fn document_units(corpus: &Corpus, config: &PrepConfig) -> SegmentedCorpus {
    config.assert_valid();
    let mut lexicon = Lexicon::new();
    let units = corpus
        .documents
        .iter()
        .map(|doc| ContextUnit {
            unit_id: doc.id,
            parent_doc: doc.id,
            lemma_ids: doc_lemma_stream(&doc.text, config, &mut lexicon).lemma_ids,
        })
        .collect();
    SegmentedCorpus { units, lexicon }
}

/// Sparse count matrix of context units over the retained vocabulary, with
/// the binary presence view derived from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentTermMatrix {
    /// Column labels, sorted lexicographically.
    pub vocab: Vec<String>,
    /// Per row: `(column, count)` entries sorted by column, counts >= 1.
    pub rows: Vec<Vec<(u32, u32)>>,
}

impl DocumentTermMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.vocab.len()
    }

    pub fn total_count(&self) -> u64 {
        self.rows.iter().flatten().map(|&(_, c)| c as u64).sum()
    }

    /// Column sums of the count view.
    pub fn column_counts(&self) -> Vec<u64> {
        let mut sums = vec![0u64; self.vocab.len()];
        for row in &self.rows {
            for &(col, count) in row {
                sums[col as usize] += count as u64;
            }
        }
        sums
    }

    /// Column sums of the binary view (number of rows containing the term).
    pub fn column_presences(&self) -> Vec<u32> {
        let mut sums = vec![0u32; self.vocab.len()];
        for row in &self.rows {
            for &(col, _) in row {
                sums[col as usize] += 1;
            }
        }
        sums
    }

    /// Coordinate-list export, `row,col,count`, rows in order.
    pub fn to_coo_csv(&self) -> String {
        let mut out = String::from("row,col,count\n");
        for (r, row) in self.rows.iter().enumerate() {
            for &(col, count) in row {
                out.push_str(&format!("{r},{col},{count}\n"));
            }
        }
        out
    }

    pub fn vocab_csv(&self) -> String {
        let mut out = String::from("col,form\n");
        for (i, form) in self.vocab.iter().enumerate() {
            out.push_str(&format!("{i},{form}\n"));
        }
        out
    }
}

/// Build the DTM over lemmas whose corpus frequency reaches
/// `min_form_freq`. Columns are sorted lexicographically.
pub fn build_dtm(
    segmented: &SegmentedCorpus,
    config: &PrepConfig,
) -> Result<DocumentTermMatrix, PrepError> {
    config.assert_valid();
    let mut freq = vec![0u64; segmented.lexicon.len()];
    for unit in &segmented.units {
        for &id in &unit.lemma_ids {
            freq[id as usize] += 1;
        }
    }

    let mut retained: Vec<u32> = (0..segmented.lexicon.len() as u32)
        .filter(|&id| freq[id as usize] >= config.min_form_freq as u64)
        .collect();
    if retained.is_empty() {
        return Err(PrepError::NoRetainedForms);
    }
    retained.sort_by(|&a, &b| segmented.lexicon.resolve(a).cmp(segmented.lexicon.resolve(b)));

    let mut col_of_id = vec![u32::MAX; segmented.lexicon.len()];
    for (col, &id) in retained.iter().enumerate() {
        col_of_id[id as usize] = col as u32;
    }
    let vocab: Vec<String> =
        retained.iter().map(|&id| segmented.lexicon.resolve(id).to_string()).collect();

    let rows: Vec<Vec<(u32, u32)>> = segmented
        .units
        .par_iter()
        .map(|unit| {
            let mut cols: Vec<u32> = unit
                .lemma_ids
                .iter()
                .filter_map(|&id| {
                    let col = col_of_id[id as usize];
                    (col != u32::MAX).then_some(col)
                })
                .collect();
            cols.sort_unstable();
            let mut entries: Vec<(u32, u32)> = Vec::new();
            for col in cols {
                match entries.last_mut() {
                    Some((c, count)) if *c == col => *count += 1,
                    _ => entries.push((col, 1)),
                }
            }
            entries
        })
        .collect();

    Ok(DocumentTermMatrix { vocab, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_starred_corpus;

    fn config() -> PrepConfig {
        PrepConfig::default()
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("", &config()).is_empty());
    }

    #[test]
    fn tokenize_splits_apostrophes_and_drops_punctuation() {
        assert_eq!(
            tokenize("L'érosion du littoral!", &config()),
            vec!["l", "érosion", "du", "littoral"]
        );
    }

    #[test]
    fn tokenize_drops_digits() {
        assert_eq!(tokenize("80km/h", &config()), vec!["km", "h"]);
    }

    #[test]
    fn tokenize_keeps_internal_hyphens() {
        assert_eq!(tokenize("le porte-monnaie", &config()), vec!["le", "porte-monnaie"]);
        assert_eq!(tokenize("-avant après-", &config()), vec!["avant", "après"]);
    }

    #[test]
    fn tokenize_typographic_apostrophe() {
        assert_eq!(tokenize("l\u{2019}air", &config()), vec!["l", "air"]);
    }

    #[test]
    fn tokenize_without_lowercasing() {
        let mut c = config();
        c.lowercase = false;
        assert_eq!(tokenize("Le Chat", &c), vec!["Le", "Chat"]);
    }

    #[test]
    fn lemmatize_identity_fallback() {
        let forms: Vec<String> = ["radars", "radar"].iter().map(|s| s.to_string()).collect();
        assert_eq!(lemmatize(&forms, &config()), forms);
    }

    #[test]
    fn lemmatize_table_lookup() {
        let mut c = config();
        c.lemma_table = Some([("radars".to_string(), "radar".to_string())].into_iter().collect());
        let forms: Vec<String> = ["radars", "radar"].iter().map(|s| s.to_string()).collect();
        assert_eq!(lemmatize(&forms, &c), vec!["radar", "radar"]);
    }

    #[test]
    fn lemmatize_removes_stopwords_after_mapping() {
        let mut c = config();
        c.stopwords = Some(["de", "la"].iter().map(|s| s.to_string()).collect());
        let forms: Vec<String> =
            ["la", "taxe", "de", "la", "vitesse"].iter().map(|s| s.to_string()).collect();
        assert_eq!(lemmatize(&forms, &c), vec!["taxe", "vitesse"]);
    }

    #[test]
    fn short_document_is_one_unit() {
        assert_eq!(cut_lengths(10, &[], 40), vec![10]);
    }

    #[test]
    fn cut_at_sentence_punctuation() {
        // 80 lemmas, sentence break after lemma 39: two units of 40.
        assert_eq!(cut_lengths(80, &[39], 40), vec![40, 40]);
    }

    #[test]
    fn greedy_cut_without_punctuation() {
        assert_eq!(cut_lengths(100, &[], 40), vec![40, 40, 20]);
    }

    #[test]
    fn no_stranded_short_tail() {
        // 90 lemmas: cutting 40/40 would leave 10 < 20, so the tail merges.
        assert_eq!(cut_lengths(90, &[], 40), vec![40, 50]);
        for &n in &[20usize, 35, 59, 61, 90, 121, 200, 1000] {
            let lengths = cut_lengths(n, &[], 40);
            assert_eq!(lengths.iter().sum::<usize>(), n);
            for &l in &lengths {
                assert!((20..=60).contains(&l), "length {l} out of band for n={n}");
            }
        }
    }

    #[test]
    fn punctuation_cut_prefers_length_closest_to_target() {
        // Breaks after lemmas 24 and 44: lengths 25 and 45; 45 is closer to 40.
        assert_eq!(cut_lengths(90, &[24, 44], 40)[0], 45);
    }

    #[test]
    fn segmentation_partition_recovers_lemma_stream() {
        let corpus = parse_starred_corpus(
            "**** *p_a\nun deux trois. quatre cinq six sept huit\n**** *p_b\nneuf dix\n",
        )
        .unwrap();
        let mut c = config();
        c.target_unit_length = 5;
        let seg = segment(&corpus, &c);
        for doc in &corpus.documents {
            let direct: Vec<String> = lemmatize(&tokenize(&doc.text, &c), &c);
            let recovered: Vec<String> = seg
                .units
                .iter()
                .filter(|u| u.parent_doc == doc.id)
                .flat_map(|u| u.lemma_ids.iter().map(|&id| seg.lexicon.resolve(id).to_string()))
                .collect();
            assert_eq!(recovered, direct);
        }
        assert_eq!(seg.units.iter().map(|u| u.unit_id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn dtm_single_unit_counts() {
        let corpus = parse_starred_corpus("****\na a b\n").unwrap();
        let seg = segment(&corpus, &config());
        let dtm = build_dtm(&seg, &config()).unwrap();
        assert_eq!(dtm.vocab, vec!["a", "b"]);
        assert_eq!(dtm.rows, vec![vec![(0, 2), (1, 1)]]);
    }

    #[test]
    fn dtm_min_freq_drops_rare_forms() {
        let corpus = parse_starred_corpus("****\na a b\n").unwrap();
        let seg = segment(&corpus, &config());
        let mut c = config();
        c.min_form_freq = 2;
        let dtm = build_dtm(&seg, &c).unwrap();
        assert_eq!(dtm.vocab, vec!["a"]);
        assert_eq!(dtm.rows, vec![vec![(0, 2)]]);
    }

    #[test]
    fn dtm_empty_vocabulary_is_an_error() {
        let corpus = parse_starred_corpus("****\na a b\n").unwrap();
        let seg = segment(&corpus, &config());
        let mut c = config();
        c.min_form_freq = 10;
        assert_eq!(build_dtm(&seg, &c), Err(PrepError::NoRetainedForms));
    }

    #[test]
    fn dtm_cells_match_hand_built_table() {
        let corpus =
            parse_starred_corpus("****\nchat chien chat\n****\nchien vélo\n****\nvélo vélo route\n")
                .unwrap();
        let seg = segment(&corpus, &config());
        let dtm = build_dtm(&seg, &config()).unwrap();
        assert_eq!(dtm.vocab, vec!["chat", "chien", "route", "vélo"]);
        assert_eq!(
            dtm.rows,
            vec![
                vec![(0, 2), (1, 1)],
                vec![(1, 1), (3, 1)],
                vec![(2, 1), (3, 2)],
            ]
        );
        assert_eq!(dtm.total_count(), 8);
    }

    #[test]
    fn raising_min_freq_never_adds_columns() {
        let corpus = parse_starred_corpus("****\na a b c c c\n****\nb c d\n").unwrap();
        let seg = segment(&corpus, &config());
        let mut prev: Option<Vec<String>> = None;
        for min_freq in 1..=5 {
            let mut c = config();
            c.min_form_freq = min_freq;
            let vocab = match build_dtm(&seg, &c) {
                Ok(dtm) => dtm.vocab,
                Err(PrepError::NoRetainedForms) => Vec::new(),
                Err(e) => panic!("{e}"),
            };
            if let Some(prev) = &prev {
                assert!(vocab.iter().all(|v| prev.contains(v)));
            }
            prev = Some(vocab);
        }
    }

    #[test]
    fn lemma_table_loader() {
        let table = load_lemma_table("chats,chat\nradars , radar\n\n").unwrap();
        assert_eq!(table["chats"], "chat");
        assert_eq!(table["radars"], "radar");
        assert!(load_lemma_table("pas-de-virgule\n").is_err());
    }

    #[test]
    fn empty_document_forms_single_empty_unit() {
        let corpus = parse_starred_corpus("**** *p_a\n\n**** *p_b\nun mot\n").unwrap();
        let seg = segment(&corpus, &config());
        assert_eq!(seg.units.len(), 2);
        assert!(seg.units[0].lemma_ids.is_empty());
        assert_eq!(seg.units[0].parent_doc, 0);
    }
}
