//! Signed lexical specificity: how over- or under-represented a form is in
//! one part of a partitioned corpus.
//!
//! With `X ~ Hypergeometric(population T, successes F, draws t)` and `k`
//! occurrences observed in the part, the score is `-log10 P(X >= k)` when the
//! upper tail is the smaller one (positive, over-represented) and
//! `log10 P(X <= k)` otherwise (negative, under-represented). When both tails
//! exceed 0.5 the form sits at the mode and the score is 0.
//!
//! Tails are exact cumulative sums of the hypergeometric pmf, carried out in
//! log space: the anchored pmf term comes from log-factorials and neighbour
//! terms from the pmf ratio recurrence. No normal approximation at any size;
//! above the cached factorial range the log-factorials switch to a Stirling
//! series whose truncation error is far below f64 resolution.

use std::sync::OnceLock;

use rayon::prelude::*;
use thiserror::Error;

use crate::prep::DocumentTermMatrix;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecificityError {
    #[error("specificity domain error: k={k}, F={f}, t={t}, T={total}")]
    Domain { k: u64, f: u64, t: u64, total: u64 },
    #[error("partition has fewer than two parts")]
    SinglePart,
    #[error("partition length {got} does not match row count {rows}")]
    PartitionMismatch { got: usize, rows: usize },
    #[error("unknown part `{0}`")]
    UnknownPart(String),
}

const LNFACT_TABLE_SIZE: usize = 4096;

fn lnfact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = vec![0.0; LNFACT_TABLE_SIZE];
        for i in 2..LNFACT_TABLE_SIZE {
            table[i] = table[i - 1] + (i as f64).ln();
        }
        table
    })
}

/// ln(n!), cached for small n, Stirling series beyond.
fn lnfact(n: u64) -> f64 {
    if (n as usize) < LNFACT_TABLE_SIZE {
        return lnfact_table()[n as usize];
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    lnfact(n) - lnfact(k) - lnfact(n - k)
}

fn ln_pmf(k: u64, f: u64, t: u64, total: u64) -> f64 {
    ln_choose(f, k) + ln_choose(total - f, t - k) - ln_choose(total, t)
}

/// Natural logs of both cumulative tails at `k`. The decaying tail is summed
/// exactly in log space (anchored pmf term times a ratio-product series, so
/// it stays finite far beyond f64's linear range); the other tail follows
/// from `P(X<=k) + P(X>=k) = 1 + P(X=k)` and is always close to 1 when its
/// complement is deep.
fn ln_tails(k: u64, f: u64, t: u64, total: u64) -> (f64, f64) {
    let k_lo = t.saturating_sub(total - f);
    let k_hi = f.min(t);
    debug_assert!((k_lo..=k_hi).contains(&k));

    let ln_pmf_k = ln_pmf(k, f, t, total);
    let mean = t as f64 * f as f64 / total as f64;

    let (ln_small, small_is_upper) = if k as f64 >= mean {
        // Upper tail decays; sum P(X >= k) from k upward.
        let mut sum = 1.0f64;
        let mut term = 1.0f64;
        let mut i = k;
        while i < k_hi {
            let ratio = ((f - i) as f64 * (t - i) as f64)
                / ((i + 1) as f64 * ((total - f) + i + 1 - t) as f64);
            term *= ratio;
            sum += term;
            if ratio < 1.0 && term < sum * 1e-18 {
                break;
            }
            i += 1;
        }
        (ln_pmf_k + sum.ln(), true)
    } else {
        // Lower tail decays; sum P(X <= k) from k downward.
        let mut sum = 1.0f64;
        let mut term = 1.0f64;
        let mut i = k;
        while i > k_lo {
            let ratio = (i as f64 * ((total - f) + i - t) as f64)
                / ((f - i + 1) as f64 * (t - i + 1) as f64);
            term *= ratio;
            sum += term;
            if ratio < 1.0 && term < sum * 1e-18 {
                break;
            }
            i -= 1;
        }
        (ln_pmf_k + sum.ln(), false)
    };

    // The complement in linear space; both operands may underflow to 0,
    // which is harmless because the complement is then exactly ln(1) = 0
    // to f64 precision.
    let ln_big = (ln_pmf_k.exp() - ln_small.exp()).ln_1p();
    if small_is_upper {
        (ln_big, ln_small)
    } else {
        (ln_small, ln_big)
    }
}

/// Tolerance for "tail exceeds one half": a tail within one part in 10^12 of
/// 0.5 counts as exactly 0.5 (not exceeding), so that the branch taken never
/// depends on last-ulp rounding of an exactly-half tail.
pub const HALF_TIE_EPS: f64 = 1e-12;

/// Signed log10 hypergeometric specificity of observing `k` of the form's
/// `f` corpus occurrences inside a part of `t` occurrences out of `total`.
pub fn specificity_score(k: u64, f: u64, t: u64, total: u64) -> Result<f64, SpecificityError> {
    let feasible = f >= 1
        && t >= 1
        && f <= total
        && t <= total
        && k <= f.min(t)
        && k >= t.saturating_sub(total - f);
    if !feasible {
        return Err(SpecificityError::Domain { k, f, t, total });
    }
    let (ln_lower, ln_upper) = ln_tails(k, f, t, total);
    let ln_half = (0.5 + HALF_TIE_EPS).ln();
    if ln_lower > ln_half && ln_upper > ln_half {
        Ok(0.0)
    } else if ln_upper <= ln_lower {
        Ok(-ln_upper / std::f64::consts::LN_10)
    } else {
        Ok(ln_lower / std::f64::consts::LN_10)
    }
}

/// Report band for a score under the conventional thresholds
/// (2 is p <= 1e-2, 3.3 is p <= 5e-4).
pub fn significance_band(score: f64, specific: f64, highly: f64) -> &'static str {
    let s = score.abs();
    if s >= highly {
        "highly-specific"
    } else if s >= specific {
        "specific"
    } else {
        "-"
    }
}

/// Which rows belong to which part. Rows mapped to `None` are outside the
/// partition and are ignored.
#[derive(Debug, Clone)]
pub struct Partition {
    pub parts: Vec<String>,
    pub of_row: Vec<Option<u32>>,
}

impl Partition {
    /// Build from one optional label per row.
    pub fn from_labels(labels: &[Option<String>]) -> Partition {
        let mut parts: Vec<String> = labels.iter().flatten().cloned().collect();
        parts.sort();
        parts.dedup();
        let of_row = labels
            .iter()
            .map(|l| {
                l.as_ref().map(|name| parts.binary_search(name).expect("label in parts") as u32)
            })
            .collect();
        Partition { parts, of_row }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecEntry {
    pub form: String,
    /// Index into [`SpecificityTable::parts`].
    pub part: u32,
    /// Form occurrences inside the part (k).
    pub count_in_part: u64,
    /// Form occurrences in the whole partitioned corpus (F).
    pub corpus_count: u64,
    /// Part size in occurrences (t).
    pub part_size: u64,
    /// Corpus size in occurrences (T).
    pub corpus_size: u64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct SpecificityTable {
    pub parts: Vec<String>,
    pub entries: Vec<SpecEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Over,
    Under,
}

/// One specificity entry per (retained form, part). Forms absent from the
/// covered rows and parts with no occurrences contribute no entries.
pub fn specificity_table(
    dtm: &DocumentTermMatrix,
    partition: &Partition,
) -> Result<SpecificityTable, SpecificityError> {
    if partition.of_row.len() != dtm.n_rows() {
        return Err(SpecificityError::PartitionMismatch {
            got: partition.of_row.len(),
            rows: dtm.n_rows(),
        });
    }
    let n_parts = partition.parts.len();
    if n_parts < 2 {
        return Err(SpecificityError::SinglePart);
    }

    let n_cols = dtm.n_cols();
    let mut per_part = vec![0u64; n_parts * n_cols];
    let mut part_sizes = vec![0u64; n_parts];
    for (row, part) in dtm.rows.iter().zip(&partition.of_row) {
        let Some(p) = part else { continue };
        let base = *p as usize * n_cols;
        for &(col, count) in row {
            per_part[base + col as usize] += count as u64;
            part_sizes[*p as usize] += count as u64;
        }
    }
    let corpus_counts: Vec<u64> = (0..n_cols)
        .map(|col| (0..n_parts).map(|p| per_part[p * n_cols + col]).sum())
        .collect();
    let corpus_size: u64 = part_sizes.iter().sum();

    let entries: Vec<SpecEntry> = (0..n_cols as u32)
        .into_par_iter()
        .flat_map_iter(|col| {
            let f = corpus_counts[col as usize];
            let per_part = &per_part;
            let part_sizes = &part_sizes;
            let vocab = &dtm.vocab;
            (0..n_parts as u32).filter_map(move |p| {
                let t = part_sizes[p as usize];
                if f == 0 || t == 0 {
                    return None;
                }
                let k = per_part[p as usize * n_cols + col as usize];
                let score = specificity_score(k, f, t, corpus_size)
                    .expect("aggregated counts are always in domain");
                Some(SpecEntry {
                    form: vocab[col as usize].clone(),
                    part: p,
                    count_in_part: k,
                    corpus_count: f,
                    part_size: t,
                    corpus_size,
                    score,
                })
            })
        })
        .collect();

    Ok(SpecificityTable { parts: partition.parts.clone(), entries })
}

impl SpecificityTable {
    /// Top `count` forms of a part in one direction, ranked by |score|,
    /// ties broken by form. Zero scores match neither direction.
    pub fn top_specific(
        &self,
        part: &str,
        count: usize,
        direction: Direction,
    ) -> Result<Vec<&SpecEntry>, SpecificityError> {
        let part_idx = self
            .parts
            .iter()
            .position(|p| p == part)
            .ok_or_else(|| SpecificityError::UnknownPart(part.to_string()))? as u32;
        let mut matching: Vec<&SpecEntry> = self
            .entries
            .iter()
            .filter(|e| {
                e.part == part_idx
                    && match direction {
                        Direction::Over => e.score > 0.0,
                        Direction::Under => e.score < 0.0,
                    }
            })
            .collect();
        matching.sort_by(|a, b| {
            b.score
                .abs()
                .partial_cmp(&a.score.abs())
                .expect("scores are finite")
                .then_with(|| a.form.cmp(&b.form))
        });
        matching.truncate(count);
        Ok(matching)
    }

    /// CSV sorted by part, then decreasing |score|, then form.
    /// `banner` limits the number of rows kept per part.
    pub fn to_csv(&self, banner: Option<usize>) -> String {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by(|&a, &b| {
            let (ea, eb) = (&self.entries[a], &self.entries[b]);
            ea.part
                .cmp(&eb.part)
                .then_with(|| eb.score.abs().partial_cmp(&ea.score.abs()).unwrap())
                .then_with(|| ea.form.cmp(&eb.form))
        });
        let mut out = String::from("form,part,k,F,t,T,score\n");
        let mut in_part = 0usize;
        let mut current_part = u32::MAX;
        for idx in order {
            let e = &self.entries[idx];
            if e.part != current_part {
                current_part = e.part;
                in_part = 0;
            }
            in_part += 1;
            if banner.is_some_and(|limit| in_part > limit) {
                continue;
            }
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.form,
                self.parts[e.part as usize],
                e.count_in_part,
                e.corpus_count,
                e.part_size,
                e.corpus_size,
                e.score
            ));
        }
        out
    }
}
