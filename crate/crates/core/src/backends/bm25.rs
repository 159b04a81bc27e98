use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K1: f64 = 1.5;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_TOP_K: usize = 50;

/// Lowercase, split on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    /// term -> (doc, term frequency), docs ascending.
    postings: BTreeMap<String, Vec<(usize, u32)>>,
    doc_lengths: Vec<usize>,
    avg_doc_length: f64,
    pub k1: f64,
    pub b: f64,
}

impl Bm25Index {
    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn doc_length(&self, doc: usize) -> usize {
        self.doc_lengths[doc]
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`, always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs() as f64;
        let df = self.document_frequency(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Score of every document; repeated query terms contribute repeatedly.
    pub fn scores<S: AsRef<str>>(&self, query: &[S]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_docs()];
        for term in query {
            let term = term.as_ref();
            let Some(post) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            for &(doc, tf) in post {
                let tf = tf as f64;
                let len_norm = 1.0 - self.b + self.b * self.doc_lengths[doc] as f64 / self.avg_doc_length;
                out[doc] += idf * tf * (self.k1 + 1.0) / (tf + self.k1 * len_norm);
            }
        }
        out
    }
}

pub fn bm25_build<S: AsRef<str>>(corpus: &[Vec<S>], k1: f64, b: f64) -> Result<Bm25Index> {
    if corpus.is_empty() {
        return Err(Error::Precondition("BM25 needs a nonempty corpus".into()));
    }
    if let Some(i) = corpus.iter().position(Vec::is_empty) {
        return Err(Error::Precondition(format!("document {i} has no tokens")));
    }
    if !(k1 >= 0.0 && (0.0..=1.0).contains(&b)) {
        return Err(Error::Domain(format!("invalid BM25 shape parameters k1={k1}, b={b}")));
    }
    let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
    for (doc, tokens) in corpus.iter().enumerate() {
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t.as_ref()).or_default() += 1;
        }
        for (term, count) in tf {
            postings.entry(term.to_owned()).or_default().push((doc, count));
        }
    }
    let doc_lengths: Vec<usize> = corpus.iter().map(Vec::len).collect();
    let avg_doc_length = doc_lengths.iter().sum::<usize>() as f64 / doc_lengths.len() as f64;
    Ok(Bm25Index { postings, doc_lengths, avg_doc_length, k1, b })
}

/// Top `top_k` documents by score, ties to the lower doc id. An empty query
/// yields an empty ranking.
pub fn bm25_query<S: AsRef<str>>(index: &Bm25Index, query: &[S], top_k: usize) -> Vec<(usize, f64)> {
    if query.is_empty() {
        return Vec::new();
    }
    let mut ranked: Vec<(usize, f64)> = index.scores(query).into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    ranked
}

/// Second-stage reordering of a first-stage ranking.
pub trait Reranker {
    fn rerank(&self, query: &str, ranked: Vec<(usize, f64)>) -> Vec<(usize, f64)>;
}

/// Leaves the first-stage ranking untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThrough;

impl Reranker for PassThrough {
    fn rerank(&self, _query: &str, ranked: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
        ranked
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn corpus(docs: &[&str]) -> Vec<Vec<String>> {
        docs.iter().map(|d| tokenize(d)).collect()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Hello, World!  foo-bar42"), vec!["hello", "world", "foo", "bar42"]);
        assert!(tokenize(" ,;").is_empty());
    }

    #[test]
    fn absent_term_scores_zero() {
        let idx = bm25_build(&corpus(&["a b", "c"]), DEFAULT_K1, DEFAULT_B).unwrap();
        assert!(idx.scores(&["zzz"]).iter().all(|&s| s == 0.0));
        assert!(bm25_query(&idx, &Vec::<String>::new(), 10).is_empty());
    }

    #[test]
    fn single_document() {
        let idx = bm25_build(&corpus(&["unique"]), DEFAULT_K1, DEFAULT_B).unwrap();
        let r = bm25_query(&idx, &["unique"], 10);
        assert_eq!(r[0].0, 0);
        assert!(r[0].1 > 0.0);
    }

    #[test]
    fn three_document_hand_values() {
        let idx = bm25_build(&corpus(&["a b", "a a b", "c"]), 1.5, 0.75).unwrap();
        let s = idx.scores(&["a"]);
        // N = 3, df(a) = 2, avgdl = 2
        let idf = (1.5f64 / 2.5 + 1.0).ln();
        let d0 = idf * 2.5 / (1.0 + 1.5);
        let d1 = idf * 2.0 * 2.5 / (2.0 + 1.5 * (0.25 + 0.75 * 1.5));
        assert_abs_diff_eq!(s[0], d0, epsilon = 1e-9);
        assert_abs_diff_eq!(s[1], d1, epsilon = 1e-9);
        assert_eq!(s[2], 0.0);
        let r = bm25_query(&idx, &["a"], 2);
        assert_eq!(r.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 0]);
    }

    #[test]
    fn ties_break_by_doc_id() {
        let idx = bm25_build(&corpus(&["x y", "x y", "z"]), DEFAULT_K1, DEFAULT_B).unwrap();
        let r = bm25_query(&idx, &["x"], 3);
        assert_eq!((r[0].0, r[1].0), (0, 1));
        assert_eq!(PassThrough.rerank("x", r.clone()), r);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(bm25_build(&Vec::<Vec<String>>::new(), 1.5, 0.75).is_err());
        assert!(bm25_build(&corpus(&["a", ""]), 1.5, 0.75).is_err());
    }
}
