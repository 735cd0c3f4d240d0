//! Surface statistics for French text: sentences, words, syllables.
//!
//! Everything here is rule-based and dictionary-free. Syllables are counted
//! as maximal vowel groups, which undercounts hiatus ("créativité" gives 4,
//! not 5) but is stable and good enough for relative readability scoring.

use std::ops::Range;

use serde::{Deserialize, Serialize};

const TERMINALS: [char; 4] = ['.', '!', '?', '…'];

/// Characters that may trail a terminal mark and still belong to the sentence.
const CLOSERS: [char; 8] = ['"', '\'', '»', ')', ']', '”', '’', '›'];

/// Word-internal joiners: `aujourd'hui`, `porte-clés`.
const JOINERS: [char; 4] = ['\'', '’', '-', '‐'];

/// Abbreviations whose trailing period never ends a sentence.
const ABBREVIATIONS: [&str; 20] = [
    "M", "MM", "Mme", "Mmes", "Mlle", "Mlles", "Mgr", "Dr", "Pr", "Me", "St", "Ste", "etc", "cf",
    "ex", "p", "pp", "av", "apr", "env",
];

const VOWELS: &str = "aeiouyéèêëàâîïôûùüœAEIOUYÉÈÊËÀÂÎÏÔÛÙÜŒ";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextStats {
    pub n_sentences: usize,
    pub n_words: usize,
    /// Letters and digits only.
    pub n_chars: usize,
    pub n_syllables: usize,
    /// Words of three syllables or more.
    pub n_complex_words: usize,
}

/// Splits text into trimmed sentences.
///
/// A sentence ends at a run of `. ! ? …` (plus any closing quotes or
/// brackets) followed by whitespace or the end of input. A single period
/// right after a known abbreviation (`M.`, `Mme.`, `etc.`, `cf.`) does not
/// end the sentence. Trailing text without a terminal mark forms a final
/// sentence.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if !TERMINALS.contains(&c) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && (TERMINALS.contains(&chars[j].1) || CLOSERS.contains(&chars[j].1)) {
            j += 1;
        }
        // French typography puts a (narrow) space before a closing guillemet.
        let mut k = j;
        while k < chars.len() && matches!(chars[k].1, ' ' | '\u{a0}' | '\u{202f}') {
            k += 1;
        }
        if k > j && k < chars.len() && chars[k].1 == '»' {
            j = k + 1;
        }
        let at_break = j == chars.len() || chars[j].1.is_whitespace();
        let lone_period = c == '.' && (j == i + 1 || !TERMINALS.contains(&chars[i + 1].1));
        if at_break && !(lone_period && follows_abbreviation(&chars, i)) {
            let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
            push_trimmed(&mut sentences, &text[start..end]);
            start = end;
        }
        i = j;
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece.to_string());
    }
}

fn follows_abbreviation(chars: &[(usize, char)], dot: usize) -> bool {
    let mut k = dot;
    while k > 0 && chars[k - 1].1.is_alphabetic() {
        k -= 1;
    }
    if k == dot {
        return false;
    }
    let word: String = chars[k..dot].iter().map(|&(_, c)| c).collect();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Byte ranges of the words in `text`; see [`tokenize_words`].
pub fn word_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphabetic() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        loop {
            match chars.get(j) {
                Some(&(_, c)) if c.is_alphabetic() => j += 1,
                Some(&(_, c)) if JOINERS.contains(&c) && chars.get(j + 1).is_some_and(|&(_, n)| n.is_alphabetic()) => {
                    j += 2
                }
                _ => break,
            }
        }
        let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
        spans.push(start..end);
        i = j;
    }
    spans
}

/// Maximal runs of letters, keeping internal apostrophes and hyphens.
/// Digits and punctuation separate words and are never part of one.
pub fn tokenize_words(text: &str) -> Vec<String> {
    word_spans(text).into_iter().map(|r| text[r].to_string()).collect()
}

/// Number of maximal vowel groups in `word`, at least 1 when it has a letter.
pub fn count_syllables(word: &str) -> usize {
    let mut groups = 0;
    let mut in_group = false;
    let mut has_letter = false;
    for c in word.chars() {
        has_letter |= c.is_alphabetic();
        let vowel = VOWELS.contains(c);
        if vowel && !in_group {
            groups += 1;
        }
        in_group = vowel;
    }
    if has_letter {
        groups.max(1)
    } else {
        0
    }
}

pub fn is_complex_word(word: &str) -> bool {
    count_syllables(word) >= 3
}

pub fn compute_stats(text: &str) -> TextStats {
    let words = tokenize_words(text);
    let syllables: Vec<usize> = words.iter().map(|w| count_syllables(w)).collect();
    TextStats {
        n_sentences: segment_sentences(text).len(),
        n_words: words.len(),
        n_chars: text.chars().filter(|c| c.is_alphanumeric()).count(),
        n_syllables: syllables.iter().sum(),
        n_complex_words: syllables.iter().filter(|&&s| s >= 3).count(),
    }
}
