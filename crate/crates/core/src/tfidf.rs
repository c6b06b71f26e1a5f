//! TF-IDF index over entity documents.
//!
//! Tokenization: lowercase, split on non-alphanumerics (which covers
//! underscores and dots) and on lower-to-upper camel boundaries; unigrams
//! only. IDF is smoothed, ln((1+N)/(1+df)) + 1, vectors are L2-normalized,
//! and similarity is the cosine (a dot product of normalized vectors), so
//! scores stay in [0, 1].

use std::collections::BTreeMap;

/// Split an identifier-heavy text into lowercase unigrams.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for ch in text.chars() {
        if !ch.is_alphanumeric() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            prev_lower = false;
            continue;
        }
        if prev_lower && ch.is_uppercase() && !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        prev_lower = ch.is_lowercase();
        current.extend(ch.to_lowercase());
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Sparse vector sorted by term index, L2-normalized at construction.
#[derive(Debug, Clone, Default)]
pub struct SparseVector {
    terms: Vec<(usize, f64)>,
}

impl SparseVector {
    fn from_counts(counts: BTreeMap<usize, f64>) -> Self {
        let mut terms: Vec<(usize, f64)> = counts.into_iter().collect();
        let norm = terms.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut terms {
                *w /= norm;
            }
        }
        SparseVector { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j) = (0usize, 0usize);
        let mut sum = 0.0;
        while i < self.terms.len() && j < other.terms.len() {
            match self.terms[i].0.cmp(&other.terms[j].0) {
                std::cmp::Ordering::Equal => {
                    sum += self.terms[i].1 * other.terms[j].1;
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        sum.clamp(0.0, 1.0)
    }
}

/// Fitted index: vocabulary, IDF weights, and one vector per document.
#[derive(Debug, Default)]
pub struct TfIdfIndex {
    vocab: BTreeMap<String, usize>,
    idf: Vec<f64>,
    docs: Vec<SparseVector>,
}

impl TfIdfIndex {
    /// Fit the vocabulary and vectorize `documents` in the given order.
    pub fn build(documents: &[String]) -> Self {
        let tokenized: Vec<Vec<String>> = documents.iter().map(|d| tokenize(d)).collect();
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for tokens in &tokenized {
            let mut seen: Vec<&str> = tokens.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for term in seen {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        let total = documents.len() as f64;
        let mut vocab = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (position, (term, count)) in df.iter().enumerate() {
            vocab.insert((*term).to_string(), position);
            idf.push(((1.0 + total) / (1.0 + *count as f64)).ln() + 1.0);
        }
        let docs = tokenized
            .iter()
            .map(|tokens| Self::vectorize_tokens(tokens, &vocab, &idf))
            .collect();
        TfIdfIndex { vocab, idf, docs }
    }

    fn vectorize_tokens(
        tokens: &[String],
        vocab: &BTreeMap<String, usize>,
        idf: &[f64],
    ) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for token in tokens {
            if let Some(&index) = vocab.get(token) {
                *counts.entry(index).or_insert(0.0) += 1.0;
            }
        }
        for (index, weight) in &mut counts {
            *weight *= idf[*index];
        }
        SparseVector::from_counts(counts)
    }

    /// Vectorize free text against the fitted vocabulary. Terms outside the
    /// vocabulary cannot match any document and are dropped.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        Self::vectorize_tokens(&tokenize(text), &self.vocab, &self.idf)
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    /// Cosine similarity between a query vector and document `index`.
    pub fn similarity(&self, query: &SparseVector, index: usize) -> f64 {
        query.dot(&self.docs[index])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_identifiers() {
        assert_eq!(tokenize("pkg.util_helper"), vec!["pkg", "util", "helper"]);
        assert_eq!(
            tokenize("getEnclosingScopes"),
            vec!["get", "enclosing", "scopes"]
        );
        assert_eq!(tokenize("HTTPServer2"), vec!["httpserver2"]);
        assert!(tokenize("...").is_empty());
    }

    #[test]
    fn exact_term_match_ranks_first() {
        let docs = vec![
            "inc pkg util inc".to_string(),
            "run pkg main run".to_string(),
            "util pkg util".to_string(),
        ];
        let index = TfIdfIndex::build(&docs);
        let query = index.vectorize("inc");
        let scores: Vec<f64> = (0..docs.len())
            .map(|i| index.similarity(&query, i))
            .collect();
        assert!(scores[0] > 0.0);
        assert_eq!(scores[1], 0.0);
        assert_eq!(scores[2], 0.0);
    }

    #[test]
    fn scores_stay_in_unit_interval() {
        let docs = vec![
            "alpha beta".to_string(),
            "alpha alpha beta gamma".to_string(),
        ];
        let index = TfIdfIndex::build(&docs);
        for query in ["alpha", "alpha beta gamma", "beta beta"] {
            let vector = index.vectorize(query);
            for i in 0..docs.len() {
                let score = index.similarity(&vector, i);
                assert!((0.0..=1.0).contains(&score), "{query} -> {score}");
            }
        }
    }

    #[test]
    fn identical_document_scores_one() {
        let docs = vec!["alpha beta".to_string()];
        let index = TfIdfIndex::build(&docs);
        let query = index.vectorize("alpha beta");
        assert!((index.similarity(&query, 0) - 1.0).abs() < 1e-12);
    }
}
