//! Text post-processing: punctuation deduplication, spacing repair and
//! sentence capitalization, applied in that order. A small Danish
//! abbreviation list guards against false sentence boundaries.

use std::sync::LazyLock;

use regex::Regex;

/// Characters treated as punctuation for run deduplication and spacing.
const PUNCT: &[char] = &['.', ',', '!', '?', ';', ':'];
/// Characters that end a sentence.
const SENTENCE_PUNCT: &[char] = &['.', '!', '?'];

/// Abbreviations whose trailing dot does not end a sentence.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &["bl.a.", "ca.", "evt.", "f.eks.", "kr.", "mv."];

#[derive(Debug, Clone)]
pub struct PostprocessOptions {
    pub abbreviations: Vec<String>,
}

impl Default for PostprocessOptions {
    fn default() -> Self {
        PostprocessOptions {
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Byte offsets of every `.` that belongs to an abbreviation occurrence.
/// Matching is per-character case-insensitive on the original string so
/// offsets stay valid under any input.
fn protected_dots(text: &str, options: &PostprocessOptions) -> Vec<usize> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut protected = Vec::new();
    for abbr in &options.abbreviations {
        let abbr_chars: Vec<char> = abbr.to_lowercase().chars().collect();
        for start in 0..chars.len() {
            if start > 0 && chars[start - 1].1.is_alphanumeric() {
                continue;
            }
            let window = &chars[start..];
            if window.len() < abbr_chars.len() {
                break;
            }
            let matches = window
                .iter()
                .zip(&abbr_chars)
                .all(|(&(_, c), &a)| c.to_lowercase().eq(a.to_lowercase()));
            if matches {
                for (&(pos, c), _) in window.iter().zip(&abbr_chars) {
                    if c == '.' {
                        protected.push(pos);
                    }
                }
            }
        }
    }
    // dots inside URL-ish tokens never end a sentence or need a space
    for (start, end) in url_token_ranges(text) {
        for (p, c) in text[start..end].char_indices() {
            if c == '.' {
                protected.push(start + p);
            }
        }
    }
    protected.sort_unstable();
    protected.dedup();
    protected
}

/// Byte ranges of whitespace-delimited tokens that look like URLs or
/// addresses; spacing repair must leave their interiors untouched.
fn url_token_ranges(text: &str) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut offset = 0;
    for piece in text.split_inclusive(char::is_whitespace) {
        let token = piece.trim_end_matches(char::is_whitespace);
        if token.contains("://") || token.contains('@') || token.starts_with("www.") {
            ranges.push((offset, offset + token.len()));
        }
        offset += piece.len();
    }
    ranges
}

static PUNCT_RUN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[ \t]*[.,!?;:](?:[ \t]*[.,!?;:])+").unwrap());

/// Collapses each run of punctuation marks (spaces in between ignored)
/// to its final mark.
pub fn dedupe_punctuation(text: &str) -> String {
    PUNCT_RUN
        .replace_all(text, |caps: &regex::Captures<'_>| {
            let run = caps.get(0).unwrap().as_str();
            run.chars().rev().find(|c| PUNCT.contains(c)).unwrap().to_string()
        })
        .into_owned()
}

/// Fixes spacing: one space between words, none before punctuation, one
/// after punctuation when a word follows, line edges trimmed and blank
/// line runs collapsed to a single blank line.
pub fn fix_spacing(text: &str) -> String {
    fix_spacing_with(text, &PostprocessOptions::default())
}

pub fn fix_spacing_with(text: &str, options: &PostprocessOptions) -> String {
    let text = text.replace("\r\n", "\n");
    let mut lines: Vec<String> = Vec::new();
    let mut pending_blank = false;
    for raw_line in text.split('\n') {
        let line = fix_line_spacing(raw_line.trim(), options);
        if line.is_empty() {
            pending_blank = !lines.is_empty();
        } else {
            if pending_blank {
                lines.push(String::new());
                pending_blank = false;
            }
            lines.push(line);
        }
    }
    lines.join("\n")
}

fn fix_line_spacing(line: &str, options: &PostprocessOptions) -> String {
    // collapse space runs, drop spaces before punctuation
    let mut compact = String::with_capacity(line.len());
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        if c == ' ' || c == '\t' {
            while matches!(chars.peek(), Some(' ') | Some('\t')) {
                chars.next();
            }
            if chars.peek().is_some_and(|n| !PUNCT.contains(n)) {
                compact.push(' ');
            }
        } else {
            compact.push(c);
        }
    }
    // insert a space after punctuation directly followed by a letter,
    // except inside abbreviations and URL-ish tokens
    let protected = protected_dots(&compact, options);
    let url_ranges = url_token_ranges(&compact);
    let in_url = |pos: usize| url_ranges.iter().any(|&(s, e)| pos >= s && pos < e);
    let mut out = String::with_capacity(compact.len());
    let chars: Vec<(usize, char)> = compact.char_indices().collect();
    for (idx, &(pos, c)) in chars.iter().enumerate() {
        out.push(c);
        if PUNCT.contains(&c)
            && chars.get(idx + 1).is_some_and(|&(_, n)| n.is_alphabetic())
            && !(c == '.' && protected.binary_search(&pos).is_ok())
            && !in_url(pos)
        {
            out.push(' ');
        }
    }
    out
}

/// Uppercases the letter that opens each sentence. A sentence opens at
/// the start of a paragraph or after `.`/`!`/`?` plus whitespace, unless
/// the dot belongs to a known abbreviation. Sentences opening with an
/// uncased character (digits, symbols) are left alone.
pub fn capitalize_sentences(text: &str) -> String {
    capitalize_sentences_with(text, &PostprocessOptions::default())
}

pub fn capitalize_sentences_with(text: &str, options: &PostprocessOptions) -> String {
    let protected = protected_dots(text, options);
    let mut out = String::with_capacity(text.len());
    let mut at_sentence_start = true;
    for (pos, c) in text.char_indices() {
        if at_sentence_start && !c.is_whitespace() {
            at_sentence_start = false;
            if c.is_alphabetic() {
                out.extend(c.to_uppercase());
            } else {
                out.push(c);
            }
        } else {
            out.push(c);
        }
        if SENTENCE_PUNCT.contains(&c)
            && !(c == '.' && protected.binary_search(&pos).is_ok())
        {
            at_sentence_start = true;
        }
    }
    out
}

/// Post-processed text satisfying the cleanliness invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanText {
    pub value: String,
}

/// Applies the three rules in order: punctuation deduplication, spacing
/// repair, sentence capitalization.
pub fn postprocess(text: &str) -> CleanText {
    postprocess_with(text, &PostprocessOptions::default())
}

pub fn postprocess_with(text: &str, options: &PostprocessOptions) -> CleanText {
    let value = capitalize_sentences_with(
        &fix_spacing_with(&dedupe_punctuation(text), options),
        options,
    );
    CleanText { value }
}

/// Checks every cleanliness invariant, returning the first violation.
pub fn check_clean(text: &str) -> Result<(), String> {
    check_clean_with(text, &PostprocessOptions::default())
}

pub fn check_clean_with(text: &str, options: &PostprocessOptions) -> Result<(), String> {
    if text.contains("  ") {
        return Err("double space".into());
    }
    if PUNCT_RUN.is_match(text) {
        return Err("punctuation run".into());
    }
    for line in text.split('\n') {
        if line != line.trim() {
            return Err("untrimmed line edge".into());
        }
        if line.contains(" .") || line.contains(" ,") || line.contains(" !")
            || line.contains(" ?") || line.contains(" ;") || line.contains(" :")
        {
            return Err("space before punctuation".into());
        }
    }
    if text.contains("\n\n\n") {
        return Err("more than one blank line".into());
    }
    let reprocessed = postprocess_with(text, options);
    if reprocessed.value != text {
        return Err("not a postprocess fixpoint".into());
    }
    Ok(())
}
