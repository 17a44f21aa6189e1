//! Plain-text corpus ingestion and vocabulary files.
//!
//! Tokens are lowercased runs of alphanumeric characters. Documents are the
//! regular files of a directory taken in byte-wise filename order; the
//! vocabulary is sorted lexicographically.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::TermDocMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

impl Vocabulary {
    /// Fails on duplicate terms.
    pub fn new(terms: Vec<String>, min_count: usize) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate vocabulary term `{t}`")));
            }
        }
        Ok(Vocabulary {
            terms,
            index,
            min_count,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, v: usize) -> Option<&str> {
        self.terms.get(v).map(String::as_str)
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }
}

/// Lowercased alphanumeric runs of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Builds the term-document matrix of `docs` (name, text). Terms whose total
/// count is below `min_count` are dropped; documents left empty are an error
/// listing their names.
pub fn ingest_texts<S: AsRef<str>>(docs: &[(String, S)], min_count: usize) -> Result<(TermDocMatrix, Vocabulary)> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus("no documents".into()));
    }
    let per_doc: Vec<BTreeMap<String, usize>> = docs
        .iter()
        .map(|(_, text)| {
            let mut counts = BTreeMap::new();
            for tok in tokenize(text.as_ref()) {
                *counts.entry(tok).or_insert(0) += 1;
            }
            counts
        })
        .collect();
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for counts in &per_doc {
        for (t, &c) in counts {
            *totals.entry(t.as_str()).or_insert(0) += c;
        }
    }
    let terms: Vec<String> = totals
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(t, _)| t.to_string())
        .collect();
    if terms.is_empty() {
        return Err(Error::EmptyCorpus(format!("no term occurs at least {min_count} times")));
    }
    let vocab = Vocabulary::new(terms, min_count)?;

    let mut triplets = Vec::new();
    let mut empty = Vec::new();
    for (d, counts) in per_doc.iter().enumerate() {
        let before = triplets.len();
        for (t, &c) in counts {
            if let Some(v) = vocab.index_of(t) {
                triplets.push((v, d, c as f64));
            }
        }
        if triplets.len() == before {
            empty.push(docs[d].0.clone());
        }
    }
    if !empty.is_empty() {
        return Err(Error::EmptyDocuments(empty));
    }
    let x = TermDocMatrix::from_triplets(vocab.len(), docs.len(), triplets)?;
    Ok((x, vocab))
}

/// Ingests every regular file in `dir` as one UTF-8 document.
pub fn ingest_corpus(dir: impl AsRef<Path>, min_count: usize) -> Result<(TermDocMatrix, Vocabulary)> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::EmptyCorpus(format!("{} contains no files", dir.display())));
    }
    paths.sort();
    let docs = paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok((name, text))
        })
        .collect::<Result<Vec<_>>>()?;
    ingest_texts(&docs, min_count)
}

/// One term per line, newline-terminated.
pub fn save_vocabulary(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for t in vocab.terms() {
        text.push_str(t);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Vocabulary::new(text.lines().map(str::to_string).collect(), 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<(String, String)> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("d{i}"), t.to_string()))
            .collect()
    }

    #[test]
    fn hand_tokenized_counts() {
        let (x, vocab) = ingest_texts(&docs(&["a b a", "b c"]), 1).unwrap();
        assert_eq!(vocab.terms(), ["a", "b", "c"]);
        assert_eq!(x.to_dense(), ndarray::array![[2.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
    }

    #[test]
    fn min_count_filters_terms() {
        let (x, vocab) = ingest_texts(&docs(&["a b a", "b c"]), 2).unwrap();
        assert_eq!(vocab.terms(), ["a", "b"]);
        assert_eq!(x.n_terms(), 2);
    }

    #[test]
    fn lowercase_and_punctuation() {
        let toks: Vec<String> = tokenize("Hello, WORLD!  x2-y").collect();
        assert_eq!(toks, ["hello", "world", "x2", "y"]);
    }

    #[test]
    fn empty_documents_are_listed() {
        let e = ingest_texts(&docs(&["a a", "b", "a"]), 2).unwrap_err();
        assert!(matches!(&e, Error::EmptyDocuments(v) if v == &["d1".to_string()]));
        assert!(matches!(ingest_texts::<&str>(&[], 1), Err(Error::EmptyCorpus(_))));
    }

    #[test]
    fn directory_ingest_and_vocab_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("2.txt"), "b c").unwrap();
        std::fs::write(dir.path().join("1.txt"), "a b a").unwrap();
        let (x, vocab) = ingest_corpus(dir.path(), 1).unwrap();
        assert_eq!(x.get(0, 0), 2.0);
        let vpath = dir.path().join("vocab.txt");
        save_vocabulary(&vpath, &vocab).unwrap();
        assert_eq!(std::fs::read_to_string(&vpath).unwrap(), "a\nb\nc\n");
        assert_eq!(load_vocabulary(&vpath).unwrap().terms(), vocab.terms());

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(ingest_corpus(empty.path(), 1), Err(Error::EmptyCorpus(_))));
    }
}
