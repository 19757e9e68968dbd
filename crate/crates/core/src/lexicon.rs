//! Word frequency tables (occurrences per million words) and obscurity.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Result;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconReport {
    pub loaded: u64,
    pub duplicates: u64,
    pub skipped_malformed: u64,
    pub skipped_nonpositive: u64,
}

/// Word -> frequency per million words. Every stored frequency is positive;
/// a missing word is `None`, never zero.
#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    entries: HashMap<String, f64>,
    source: String,
    digest: String,
}

impl FrequencyTable {
    /// Build from in-memory pairs; nonpositive or non-finite frequencies are dropped.
    pub fn from_pairs<I, S>(source: impl Into<String>, pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut hasher = Sha256::new();
        let mut entries = HashMap::new();
        for (w, f) in pairs {
            let w = w.into();
            hasher.update(w.as_bytes());
            hasher.update(f.to_le_bytes());
            if f.is_finite() && f > 0.0 {
                entries.insert(w, f);
            }
        }
        FrequencyTable {
            entries,
            source: source.into(),
            digest: hex::encode(hasher.finalize()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// SHA-256 of the loaded bytes.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Frequency per million for an exact token.
    pub fn fpm(&self, word: &str) -> Option<f64> {
        self.entries.get(word).copied()
    }

    /// Exact lookup, then lowercase.
    pub fn fpm_folded(&self, word: &str) -> Option<f64> {
        self.fpm(word).or_else(|| {
            let lower = word.to_lowercase();
            (lower != word).then(|| self.fpm(&lower)).flatten()
        })
    }

    /// `-log10(fpm)` of the word, if listed.
    pub fn obscurity(&self, word: &str) -> Option<f64> {
        self.fpm(word).map(obscurity_of)
    }

    /// The `n` most frequent words, ties broken alphabetically.
    pub fn top_words(&self, n: usize) -> Vec<&str> {
        let mut all: Vec<(&str, f64)> = self.entries.iter().map(|(w, &f)| (w.as_str(), f)).collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        all.into_iter().take(n).map(|(w, _)| w).collect()
    }

    /// Write as `word\tfpm` lines, alphabetically.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut words: Vec<_> = self.entries.iter().collect();
        words.sort_by(|a, b| a.0.cmp(b.0));
        for (w, f) in words {
            writeln!(out, "{w}\t{f}")?;
        }
        Ok(())
    }
}

/// `-log10` of a positive frequency per million. `obscurity_of(1.0)` is `+0.0`.
pub fn obscurity_of(fpm: f64) -> f64 {
    // + 0.0 folds -0.0
    -fpm.log10() + 0.0
}

/// Parse `word<TAB>per_million` lines. Later duplicates replace earlier ones;
/// malformed and nonpositive lines are skipped and counted. Blank lines and
/// lines starting with `#` are ignored.
pub fn load_frequencies<R: Read>(source: R, label: &str) -> Result<(FrequencyTable, LexiconReport)> {
    let mut reader = BufReader::new(source);
    let mut hasher = Sha256::new();
    let mut report = LexiconReport::default();
    let mut entries = HashMap::new();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        hasher.update(line.as_bytes());
        let text = line.trim_end_matches(['\n', '\r']);
        if text.trim().is_empty() || text.starts_with('#') {
            continue;
        }
        let mut fields = text.split('\t');
        let (Some(word), Some(freq), None) = (fields.next(), fields.next(), fields.next()) else {
            report.skipped_malformed += 1;
            continue;
        };
        let word = word.trim();
        let Ok(freq) = freq.trim().parse::<f64>() else {
            report.skipped_malformed += 1;
            continue;
        };
        if word.is_empty() || !freq.is_finite() {
            report.skipped_malformed += 1;
            continue;
        }
        if freq <= 0.0 {
            report.skipped_nonpositive += 1;
            continue;
        }
        if entries.insert(word.to_string(), freq).is_some() {
            report.duplicates += 1;
        } else {
            report.loaded += 1;
        }
    }
    let table = FrequencyTable {
        entries,
        source: label.to_string(),
        digest: hex::encode(hasher.finalize()),
    };
    Ok((table, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn load(s: &str) -> (FrequencyTable, LexiconReport) {
        load_frequencies(s.as_bytes(), "test").unwrap()
    }

    #[test]
    fn parses_entries() {
        let (t, r) = load("the\t60000\nbaseball\t33.4\n");
        assert_eq!(t.fpm("the"), Some(60000.0));
        assert_eq!(t.fpm("baseball"), Some(33.4));
        assert_eq!(r.loaded, 2);
    }

    #[test]
    fn rejects_nonpositive() {
        let (t, r) = load("x\t-1\n");
        assert!(t.is_empty());
        assert_eq!(r.skipped_nonpositive, 1);
        let (t, r) = load("x\t0\n");
        assert!(t.is_empty());
        assert_eq!(r.skipped_nonpositive, 1);
    }

    #[test]
    fn malformed_lines_are_counted() {
        let (t, r) = load("ok\t2\nno-tab-here\nbad\tabc\n\n# comment\n");
        assert_eq!(t.len(), 1);
        assert_eq!(r.skipped_malformed, 2);
    }

    #[test]
    fn duplicates_take_last() {
        let (t, r) = load("w\t1\nw\t5\n");
        assert_eq!(t.fpm("w"), Some(5.0));
        assert_eq!(r.duplicates, 1);
    }

    #[test]
    fn missing_is_not_zero() {
        let (t, _) = load("w\t1\n");
        assert_eq!(t.fpm("absent"), None);
        assert_eq!(t.obscurity("absent"), None);
    }

    #[test]
    fn obscurity_examples() {
        assert_eq!(obscurity_of(1.0), 0.0);
        assert!(obscurity_of(1.0).is_sign_positive());
        assert_eq!(obscurity_of(10.0), -1.0);
        // -log10(33.4), by hand: log10(33.4) = 1 + log10(3.34) = 1.523746...
        assert!((obscurity_of(33.4) - (-1.523_746_466)).abs() < 1e-9);
    }

    #[test]
    fn top_words_orders_by_frequency_then_word() {
        let t = FrequencyTable::from_pairs("t", [("b", 2.0), ("a", 2.0), ("c", 9.0), ("d", 1.0)]);
        assert_eq!(t.top_words(3), vec!["c", "a", "b"]);
    }

    proptest! {
        #[test]
        fn obscurity_is_strictly_decreasing(a in 1e-6f64..1e6, b in 1e-6f64..1e6) {
            prop_assume!((a / b - 1.0).abs() > 1e-12);
            prop_assert_eq!(obscurity_of(a) > obscurity_of(b), a < b);
        }
    }
}
