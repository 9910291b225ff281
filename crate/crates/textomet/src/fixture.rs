//! Synthetic corpora for tests and for reproducing the full pipeline without
//! the original platform data: planted topical blocks for the clustering
//! oracles, a two-platform setting with correlated topics and sociolects for
//! the end-to-end run, and a large zipf-ish corpus for scale checks.

use std::collections::BTreeMap;

use crate::corpus::{Corpus, Document};
use crate::rng::SplitMix64;

const TOPIC_WORDS: [&[&str]; 3] = [
    &[
        "climat", "planete", "rechauffement", "carbone", "emission", "energie", "solaire",
        "eolienne", "biodiversite", "glacier", "canicule", "secheresse", "inondation", "littoral",
        "pollution", "pesticide",
    ],
    &[
        "vitesse", "radar", "route", "autoroute", "carburant", "peage", "voiture", "diesel",
        "essence", "kilometre", "limitation", "conducteur", "trajet", "covoiturage", "permis",
        "bouchon",
    ],
    &[
        "dechet", "tri", "compost", "recyclage", "emballage", "plastique", "poubelle", "verre",
        "carton", "gaspillage", "reparation", "consigne", "collecte", "incinerateur", "biogaz",
        "ressourcerie",
    ],
];

const GJ_MARKERS: [&[&str]; 2] = [
    // ne-soutient-pas
    &[
        "proposer", "encourager", "concerter", "investir", "accompagner", "responsabiliser",
        "innover", "moderniser", "planifier", "dialoguer",
    ],
    // soutient
    &[
        "exiger", "refuser", "imposer", "bloquer", "denoncer", "revendiquer", "taxer",
        "plafonner", "nationaliser", "boycotter",
    ],
];

const SEXE_MARKERS: [&[&str]; 2] = [
    &["donc", "ainsi", "toutefois", "cependant", "neanmoins"],
    &["alors", "enfin", "bref", "voila", "surtout"],
];

const AGE_MARKERS: [&[&str]; 4] = [
    &["effectivement", "notamment", "egalement", "precisement"],
    &["franchement", "carrement", "grave", "direct"],
    &["concretement", "clairement", "simplement", "rapidement"],
    &["jadis", "autrefois", "naguere", "dorenavant"],
];

const NOISE_WORDS: &[&str] = &[
    "il", "faut", "faire", "pour", "avec", "nous", "vous", "plus", "moins", "bien", "tout",
    "cela", "cette", "dans", "aussi", "chaque", "entre", "vers", "chez", "sans",
];

const SEXE_MODALITIES: [&str; 2] = ["femme", "homme"];
const AGE_MODALITIES: [&str; 4] = ["actif", "jeune", "jeune-actif", "senior"];
const GJ_MODALITIES: [&str; 2] = ["ne-soutient-pas", "soutient"];

fn pick<'a>(rng: &mut SplitMix64, words: &[&'a str]) -> &'a str {
    words[rng.next_below(words.len() as u64) as usize]
}

/// Base-26 lowercase suffix of fixed width, so synthetic vocabulary survives
/// the digit-dropping tokenizer.
fn letter_suffix(mut i: usize, width: usize) -> String {
    let mut out = vec![b'a'; width];
    for slot in out.iter_mut().rev() {
        *slot = b'a' + (i % 26) as u8;
        i /= 26;
    }
    String::from_utf8(out).expect("ascii letters")
}

fn weighted(rng: &mut SplitMix64, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.next_f64() * total;
    for (i, w) in weights.iter().enumerate() {
        x -= w;
        if x < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

struct Profile {
    sexe: usize,
    age: usize,
    gj: usize,
    topic: usize,
}

fn sample_profile(rng: &mut SplitMix64, support_rate: f64) -> Profile {
    let gj = usize::from(rng.next_f64() < support_rate);
    let sexe = usize::from(rng.next_f64() < 0.5);
    let age = weighted(rng, &[0.25, 0.3, 0.3, 0.15]);
    // Supporters lean toward the road topic, opponents toward climate.
    let topic = if gj == 1 {
        weighted(rng, &[0.15, 0.70, 0.15])
    } else {
        weighted(rng, &[0.70, 0.15, 0.15])
    };
    Profile { sexe, age, gj, topic }
}

fn compose_text(rng: &mut SplitMix64, profile: &Profile, n_tokens: usize) -> String {
    let mut text = String::new();
    for i in 0..n_tokens {
        let r = rng.next_f64();
        let word = if r < 0.42 {
            pick(rng, TOPIC_WORDS[profile.topic])
        } else if r < 0.60 {
            pick(rng, GJ_MARKERS[profile.gj])
        } else if r < 0.70 {
            pick(rng, SEXE_MARKERS[profile.sexe])
        } else if r < 0.80 {
            pick(rng, AGE_MARKERS[profile.age])
        } else {
            pick(rng, NOISE_WORDS)
        };
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(word);
        if (i + 1) % 12 == 0 {
            text.push('.');
        }
    }
    text
}

/// Parameters of the two-platform fixture.
#[derive(Debug, Clone, Copy)]
pub struct TwoPlatformSpec {
    pub seed: u64,
    /// Documents in the labeled (survey-style) corpus.
    pub n_labeled: usize,
    /// Documents in the unlabeled (debate-style) corpus.
    pub n_target: usize,
    pub tokens_per_doc: usize,
}

impl Default for TwoPlatformSpec {
    fn default() -> Self {
        TwoPlatformSpec { seed: 42, n_labeled: 600, n_target: 800, tokens_per_doc: 60 }
    }
}

/// A labeled corpus carrying `sexe`, `age` and `gj` variables, and an
/// unlabeled corpus from the same generative process with different
/// composition (36% support) whose documents only carry a platform tag.
/// Topics correlate with the `gj` attribute, so injected predictions
/// associate with the topical classes of the clustering.
pub fn two_platform_fixture(spec: &TwoPlatformSpec) -> (Corpus, Corpus) {
    let mut rng = SplitMix64::new(spec.seed);
    let mut labeled_docs = Vec::new();
    for _ in 0..spec.n_labeled {
        let profile = sample_profile(&mut rng, 0.55);
        let n = spec.tokens_per_doc / 2 + rng.next_below(spec.tokens_per_doc as u64) as usize;
        let text = compose_text(&mut rng, &profile, n);
        let mut variables = BTreeMap::new();
        variables.insert("sexe".to_string(), SEXE_MODALITIES[profile.sexe].to_string());
        variables.insert("age".to_string(), AGE_MODALITIES[profile.age].to_string());
        variables.insert("gj".to_string(), GJ_MODALITIES[profile.gj].to_string());
        labeled_docs.push(Document { id: 0, text, variables });
    }

    let mut target_docs = Vec::new();
    for _ in 0..spec.n_target {
        let profile = sample_profile(&mut rng, 0.36);
        let n = spec.tokens_per_doc / 2 + rng.next_below(spec.tokens_per_doc as u64) as usize;
        let text = compose_text(&mut rng, &profile, n);
        let mut variables = BTreeMap::new();
        variables.insert("plateforme".to_string(), "debat".to_string());
        target_docs.push(Document { id: 0, text, variables });
    }

    (Corpus::from_documents(labeled_docs), Corpus::from_documents(target_docs))
}

/// Corpus of `n_units` short documents over `n_blocks` disjoint topical
/// vocabularies plus a shared noise pool. Returns the corpus and the true
/// block of each document.
pub fn planted_blocks(
    seed: u64,
    n_units: usize,
    n_blocks: usize,
    tokens_per_unit: usize,
    noise_rate: f64,
) -> (Corpus, Vec<usize>) {
    let mut rng = SplitMix64::new(seed);
    let vocab_per_block = 12usize;
    let noise_vocab: Vec<String> =
        (0..10).map(|i| format!("bruit{}", letter_suffix(i, 2))).collect();
    let blocks: Vec<Vec<String>> = (0..n_blocks)
        .map(|b| {
            (0..vocab_per_block)
                .map(|i| format!("bloc{}mot{}", letter_suffix(b, 1), letter_suffix(i, 2)))
                .collect()
        })
        .collect();

    let mut docs = Vec::new();
    let mut truth = Vec::new();
    for u in 0..n_units {
        let block = u % n_blocks;
        truth.push(block);
        let mut words = Vec::with_capacity(tokens_per_unit);
        for _ in 0..tokens_per_unit {
            if rng.next_f64() < noise_rate {
                words.push(noise_vocab[rng.next_below(10) as usize].as_str());
            } else {
                words
                    .push(blocks[block][rng.next_below(vocab_per_block as u64) as usize].as_str());
            }
        }
        docs.push(Document {
            id: 0,
            text: words.join(" "),
            variables: BTreeMap::new(),
        });
    }
    (Corpus::from_documents(docs), truth)
}

/// Two-class corpus with disjoint signal vocabularies and shared noise,
/// labeled by the `classe` variable.
pub fn binary_signal_fixture(seed: u64, n_docs: usize, tokens_per_doc: usize) -> Corpus {
    let mut rng = SplitMix64::new(seed);
    let signal: [Vec<String>; 2] = [
        (0..20).map(|i| format!("sigalpha{}", letter_suffix(i, 2))).collect(),
        (0..20).map(|i| format!("sigbeta{}", letter_suffix(i, 2))).collect(),
    ];
    let shared: Vec<String> = (0..30).map(|i| format!("fond{}", letter_suffix(i, 2))).collect();
    let mut docs = Vec::new();
    for d in 0..n_docs {
        let class = d % 2;
        let mut words = Vec::with_capacity(tokens_per_doc);
        for _ in 0..tokens_per_doc {
            if rng.next_f64() < 0.6 {
                words.push(signal[class][rng.next_below(20) as usize].as_str());
            } else {
                words.push(shared[rng.next_below(30) as usize].as_str());
            }
        }
        let mut variables = BTreeMap::new();
        variables
            .insert("classe".to_string(), if class == 0 { "alpha" } else { "beta" }.to_string());
        docs.push(Document { id: 0, text: words.join(" "), variables });
    }
    Corpus::from_documents(docs)
}

/// Large corpus with a zipf-like vocabulary and a two-platform variable,
/// for scale checks. Word ranks follow a log-uniform draw, which gives the
/// heavy head and long tail of natural vocabulary.
pub fn scale_fixture(seed: u64, n_docs: usize, tokens_per_doc: usize) -> Corpus {
    let vocab_size = 30_000usize;
    let vocab: Vec<String> =
        (0..vocab_size).map(|i| format!("mot{}", letter_suffix(i, 4))).collect();
    let platform_extra: Vec<String> =
        (0..500).map(|i| format!("riposte{}", letter_suffix(i, 2))).collect();
    let ln_v = (vocab_size as f64).ln();
    let mut rng = SplitMix64::new(seed);
    let mut docs = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let platform = d % 2;
        let mut text = String::with_capacity(tokens_per_doc * 8);
        for i in 0..tokens_per_doc {
            let word = if platform == 1 && rng.next_f64() < 0.15 {
                &platform_extra[rng.next_below(500) as usize]
            } else {
                let rank = (rng.next_f64() * ln_v).exp() as usize;
                &vocab[rank.min(vocab_size) - 1]
            };
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(word);
            if (i + 1) % 15 == 0 {
                text.push('.');
            }
        }
        let mut variables = BTreeMap::new();
        variables.insert(
            "plateforme".to_string(),
            if platform == 0 { "gdn" } else { "vd" }.to_string(),
        );
        docs.push(Document { id: 0, text, variables });
    }
    Corpus::from_documents(docs)
}
