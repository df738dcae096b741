//! Corpus preprocessing and the tf-idf constituent ranker.
//!
//! Preprocessing lowercases, splits on anything non-alphanumeric (so
//! hyphenated forms fall apart), drops stopwords, and removes terms that
//! occur exactly once in the whole document collection. The ranker scores
//! query-document pairs by cosine similarity of tf*idf vectors with raw
//! term counts and `ln(N/df)`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::ingest::{RunRecord, Warning};
use crate::kahan::KahanSum;

/// Preprocessed documents and queries over a shared vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub docs: BTreeMap<String, Vec<String>>,
    pub queries: BTreeMap<String, Vec<String>>,
    /// Sorted list of every term surviving preprocessing.
    pub vocabulary: Vec<String>,
}

fn tokenize(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !stopwords.contains(*t))
        .map(str::to_string)
        .collect()
}

/// Parse a stopword file: one word per line, blank lines ignored.
pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.to_lowercase())
        .collect()
}

/// Preprocess raw documents and queries.
///
/// Terms occurring exactly once across all documents are removed from both
/// the documents and the vocabulary; query tokens outside the final
/// vocabulary are dropped. Documents that end up empty are kept (they
/// simply score zero everywhere).
pub fn preprocess(
    docs: &[(String, String)],
    queries: &[(String, String)],
    stopwords: &HashSet<String>,
) -> Result<Corpus> {
    let tokenized: Vec<(String, Vec<String>)> = docs
        .iter()
        .map(|(id, text)| (id.clone(), tokenize(text, stopwords)))
        .collect();

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for (_, tokens) in &tokenized {
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
    }
    let vocabulary: BTreeSet<String> = counts
        .iter()
        .filter(|(_, &c)| c > 1)
        .map(|(t, _)| t.to_string())
        .collect();
    if vocabulary.is_empty() {
        return Err(Error::EmptyVocabulary);
    }

    let docs = tokenized
        .into_iter()
        .map(|(id, tokens)| {
            let kept = tokens.into_iter().filter(|t| vocabulary.contains(t)).collect();
            (id, kept)
        })
        .collect();
    let queries = queries
        .iter()
        .map(|(id, text)| {
            let kept = tokenize(text, stopwords)
                .into_iter()
                .filter(|t| vocabulary.contains(t))
                .collect();
            (id.clone(), kept)
        })
        .collect();
    Ok(Corpus {
        docs,
        queries,
        vocabulary: vocabulary.into_iter().collect(),
    })
}

fn tf(tokens: &[String]) -> HashMap<&str, f64> {
    let mut counts: HashMap<&str, f64> = HashMap::new();
    for t in tokens {
        *counts.entry(t).or_default() += 1.0;
    }
    counts
}

/// Score every (query, document) pair by tf-idf cosine similarity.
///
/// Zero-score documents are omitted, so a query sharing no vocabulary with
/// a document simply never lists it. Queries with no usable terms emit a
/// warning and no records. Records come out grouped by query, ranked by
/// descending score with ties broken by ascending document id.
pub fn tfidf_rank(corpus: &Corpus) -> (Vec<RunRecord>, Vec<Warning>) {
    let n_docs = corpus.docs.len() as f64;
    let mut df: HashMap<&str, f64> = HashMap::new();
    for tokens in corpus.docs.values() {
        let unique: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_default() += 1.0;
        }
    }
    let idf = |term: &str| -> f64 {
        match df.get(term) {
            Some(&d) if d > 0.0 => (n_docs / d).ln(),
            _ => 0.0,
        }
    };

    // Weighted document vectors and their norms.
    let doc_vectors: Vec<(&String, HashMap<&str, f64>, f64)> = corpus
        .docs
        .iter()
        .map(|(id, tokens)| {
            let mut vec = tf(tokens);
            for (term, w) in vec.iter_mut() {
                *w *= idf(term);
            }
            let norm = vec.values().map(|w| w * w).collect::<KahanSum>().value().sqrt();
            (id, vec, norm)
        })
        .collect();

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (qid, tokens) in &corpus.queries {
        if tokens.is_empty() {
            warnings.push(Warning(format!(
                "query {qid} has no vocabulary terms after preprocessing; empty run"
            )));
            continue;
        }
        let mut qvec = tf(tokens);
        for (term, w) in qvec.iter_mut() {
            *w *= idf(term);
        }
        let qnorm = qvec.values().map(|w| w * w).collect::<KahanSum>().value().sqrt();
        if qnorm == 0.0 {
            warnings.push(Warning(format!(
                "query {qid} matches no indexed term; empty run"
            )));
            continue;
        }
        let mut scored: Vec<(&String, f64)> = Vec::new();
        for (doc_id, dvec, dnorm) in &doc_vectors {
            if *dnorm == 0.0 {
                continue;
            }
            let dot = qvec
                .iter()
                .filter_map(|(term, qw)| dvec.get(term).map(|dw| qw * dw))
                .collect::<KahanSum>()
                .value();
            if dot > 0.0 {
                scored.push((doc_id, dot / (qnorm * dnorm)));
            }
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0)));
        records.extend(scored.into_iter().enumerate().map(|(i, (doc_id, score))| RunRecord {
            query_id: qid.clone(),
            doc_id: doc_id.clone(),
            rank: i as i64 + 1,
            score,
            tag: "tfidf".into(),
        }));
    }
    (records, warnings)
}
