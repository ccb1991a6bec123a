//! TF-IDF text embeddings over a fixed corpus vocabulary.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Bag-of-words TF-IDF with smoothed idf `ln((1+N)/(1+df)) + 1`, raw term
/// counts and L2 normalization. Terms outside the corpus are ignored.
#[derive(Debug, Clone)]
pub struct TfIdf {
    vocab: BTreeMap<String, usize>,
    idf: Vec<f64>,
}

impl TfIdf {
    pub fn fit<S: AsRef<str>>(corpus: &[S]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            let mut terms = tokenize(doc.as_ref());
            terms.sort();
            terms.dedup();
            for t in terms {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = corpus.len() as f64;
        let mut vocab = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (i, (term, d)) in df.into_iter().enumerate() {
            idf.push(((1.0 + n) / (1.0 + d as f64)).ln() + 1.0);
            vocab.insert(term, i);
        }
        TfIdf { vocab, idf }
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut v = vec![0.0; self.dim()];
        for t in tokenize(text) {
            if let Some(&i) = self.vocab.get(&t) {
                v[i] += self.idf[i];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_similarity_and_orthogonality() {
        let m = TfIdf::fit(&["stack the red blocks", "sort green cubes"]);
        let a = m.embed("stack the red blocks").unwrap();
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-12);
        let b = m.embed("sort green cubes").unwrap();
        assert_eq!(cosine(&a, &b), 0.0);
        let unknown = m.embed("zebra").unwrap();
        assert_eq!(cosine(&a, &unknown), 0.0);
        assert_eq!(m.embed("  "), Err(EmbedError::EmptyText));
    }

    #[test]
    fn idf_weights_rare_terms() {
        let m = TfIdf::fit(&["a b", "a c", "a d"]);
        let v = m.embed("a b").unwrap();
        // idf(a) = 1, idf(b) = ln(2) + 1
        let (wa, wb) = (1.0, 2f64.ln() + 1.0);
        let norm = (wa * wa + wb * wb).sqrt();
        assert!((v[0] - wa / norm).abs() < 1e-12);
        assert!((v[1] - wb / norm).abs() < 1e-12);
    }
}
