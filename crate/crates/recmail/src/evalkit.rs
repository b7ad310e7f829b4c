//! Evaluation utilities: BLEU scoring and user-study log aggregation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no logs for condition {0:?}")]
    MissingCondition(Condition),
    #[error("no logs")]
    EmptyLogs,
    #[error("rating {0} outside 1..=4")]
    BadRating(u8),
}

/// Hypotheses with their reference sets, already tokenized.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub pairs: Vec<(Vec<String>, Vec<Vec<String>>)>,
}

/// Tokenization for BLEU: whitespace split with punctuation split off as
/// separate tokens.
pub fn bleu_tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
        } else if matches!(c, '.' | ',' | '!' | '?' | ';' | ':') {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            tokens.push(c.to_string());
        } else {
            word.push(c);
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the hypothesis n-gram total for one pair.
fn modified_counts(hyp: &[String], refs: &[Vec<String>], n: usize) -> (u64, u64) {
    let hyp_counts = ngram_counts(hyp, n);
    let mut matched = 0;
    for (ngram, &count) in &hyp_counts {
        let max_ref = refs
            .iter()
            .map(|r| ngram_counts(r, n).get(ngram).copied().unwrap_or(0))
            .max()
            .unwrap_or(0);
        matched += count.min(max_ref);
    }
    let total = hyp.len().saturating_sub(n - 1) as u64;
    (matched, total)
}

/// Reference length closest to `c`; ties go to the shorter reference.
fn closest_ref_len(c: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

fn brevity_penalty(c: u64, r: u64) -> f64 {
    if c == 0 {
        0.0
    } else if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

/// Corpus-level BLEU: geometric mean of modified n-gram precisions with
/// uniform weights, times the brevity penalty.
pub fn bleu(corpus: &Corpus, max_n: usize) -> Result<f64, EvalError> {
    if corpus.pairs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut log_precision_sum = 0.0;
    for n in 1..=max_n {
        let (mut matched, mut total) = (0u64, 0u64);
        for (hyp, refs) in &corpus.pairs {
            let (m, t) = modified_counts(hyp, refs, n);
            matched += m;
            total += t;
        }
        if matched == 0 || total == 0 {
            return Ok(0.0);
        }
        log_precision_sum += (matched as f64 / total as f64).ln();
    }
    let c: u64 = corpus.pairs.iter().map(|(h, _)| h.len() as u64).sum();
    let r: u64 = corpus
        .pairs
        .iter()
        .map(|(h, refs)| closest_ref_len(h.len(), refs) as u64)
        .sum();
    Ok(brevity_penalty(c, r) * (log_precision_sum / max_n as f64).exp())
}

/// Per-segment BLEU. With `smooth`, add-one smoothing applies to the
/// n >= 2 precision counts so single sentences do not zero out.
pub fn sentence_bleu(
    hyp: &[String],
    refs: &[Vec<String>],
    max_n: usize,
    smooth: bool,
) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_precision_sum = 0.0;
    for n in 1..=max_n {
        let (mut matched, mut total) = modified_counts(hyp, refs, n);
        if smooth && n >= 2 {
            matched += 1;
            total += 1;
        }
        if matched == 0 || total == 0 {
            return 0.0;
        }
        log_precision_sum += (matched as f64 / total as f64).ln();
    }
    let r = closest_ref_len(hyp.len(), refs) as u64;
    brevity_penalty(hyp.len() as u64, r) * (log_precision_sum / max_n as f64).exp()
}

/// Mean of per-segment scores over the corpus.
pub fn average_sentence_bleu(corpus: &Corpus, max_n: usize, smooth: bool) -> Result<f64, EvalError> {
    if corpus.pairs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let sum: f64 = corpus
        .pairs
        .iter()
        .map(|(hyp, refs)| sentence_bleu(hyp, refs, max_n, smooth))
        .sum();
    Ok(sum / corpus.pairs.len() as f64)
}

// ---------------------------------------------------------------------------
// Study-log analytics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Helped,
    Unhelped,
}

/// One task record from the recruiter study interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskLog {
    pub recruiter_id: String,
    pub task_id: String,
    pub condition: Condition,
    /// 4 = perfect, 3 = minor revision, 2 = major revision, 1 = useless.
    pub rating: u8,
    pub seconds: f64,
}

impl TaskLog {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(1..=4).contains(&self.rating) {
            return Err(EvalError::BadRating(self.rating));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub mean_rating_helped: f64,
    pub mean_rating_unhelped: f64,
    /// Share of ratings >= 3, in percent.
    pub pct_satisfactory_helped: f64,
    pub pct_satisfactory_unhelped: f64,
    pub mean_seconds_helped: f64,
    pub mean_seconds_unhelped: f64,
    pub raw_time_delta: f64,
    pub zero_averaged_time_delta: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut count) = (0.0, 0u64);
    for v in values {
        sum += v;
        count += 1;
    }
    sum / count as f64
}

/// Aggregates study logs: per-condition rating and time means, the raw
/// unhelped-minus-helped time delta, and the same delta after removing
/// each recruiter's overall mean time from their observations.
pub fn summarize_study(logs: &[TaskLog]) -> Result<StudySummary, EvalError> {
    if logs.is_empty() {
        return Err(EvalError::EmptyLogs);
    }
    for log in logs {
        log.validate()?;
    }
    for condition in [Condition::Helped, Condition::Unhelped] {
        if !logs.iter().any(|l| l.condition == condition) {
            return Err(EvalError::MissingCondition(condition));
        }
    }
    let of = |condition: Condition| logs.iter().filter(move |l| l.condition == condition);

    let mean_rating_helped = mean(of(Condition::Helped).map(|l| l.rating as f64));
    let mean_rating_unhelped = mean(of(Condition::Unhelped).map(|l| l.rating as f64));
    let pct = |condition| {
        let total = of(condition).count();
        let good = of(condition).filter(|l| l.rating >= 3).count();
        100.0 * good as f64 / total as f64
    };
    let mean_seconds_helped = mean(of(Condition::Helped).map(|l| l.seconds));
    let mean_seconds_unhelped = mean(of(Condition::Unhelped).map(|l| l.seconds));

    let mut recruiter_means: HashMap<&str, f64> = HashMap::new();
    for (recruiter, group) in logs.iter().fold(HashMap::<&str, Vec<f64>>::new(), |mut m, l| {
        m.entry(&l.recruiter_id).or_default().push(l.seconds);
        m
    }) {
        recruiter_means.insert(recruiter, group.iter().sum::<f64>() / group.len() as f64);
    }
    let adjusted = |condition| {
        mean(of(condition).map(|l| l.seconds - recruiter_means[l.recruiter_id.as_str()]))
    };
    let zero_averaged_time_delta = adjusted(Condition::Unhelped) - adjusted(Condition::Helped);

    Ok(StudySummary {
        mean_rating_helped,
        mean_rating_unhelped,
        pct_satisfactory_helped: pct(Condition::Helped),
        pct_satisfactory_unhelped: pct(Condition::Unhelped),
        mean_seconds_helped,
        mean_seconds_unhelped,
        raw_time_delta: mean_seconds_unhelped - mean_seconds_helped,
        zero_averaged_time_delta,
    })
}
