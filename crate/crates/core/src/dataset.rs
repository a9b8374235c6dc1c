//! Embedding corpus: loading, validation, serialisation and split assignment.
//!
//! The on-disk format is line-delimited JSON. The first line is a header
//! `{"feature_dim": F, "num_classes": K}`, every following line one record
//! `{"id", "label", "split", "embedding", "text"?}`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub label: usize,
    pub split: Option<Split>,
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub feature_dim: usize,
    pub num_classes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingCorpus {
    pub nodes: Vec<NodeRecord>,
    pub feature_dim: usize,
    pub num_classes: usize,
}

impl EmbeddingCorpus {
    /// Builds a corpus and checks every invariant.
    pub fn new(nodes: Vec<NodeRecord>, feature_dim: usize, num_classes: usize) -> Result<Self> {
        let corpus = EmbeddingCorpus {
            nodes,
            feature_dim,
            num_classes,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Corpus("empty corpus".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Corpus("feature_dim must be at least 1".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::Corpus("num_classes must be at least 1".into()));
        }
        let mut seen = HashSet::with_capacity(self.nodes.len());
        for rec in &self.nodes {
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::Corpus(format!("duplicate id {:?}", rec.id)));
            }
            if rec.embedding.len() != self.feature_dim {
                return Err(Error::EmbeddingDim {
                    id: rec.id.clone(),
                    expected: self.feature_dim,
                    found: rec.embedding.len(),
                });
            }
            if rec.label >= self.num_classes {
                return Err(Error::Corpus(format!(
                    "record {:?}: label {} is outside [0, {})",
                    rec.id, rec.label, self.num_classes
                )));
            }
            if rec.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::Corpus(format!(
                    "record {:?}: embedding has non-finite entries",
                    rec.id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn header(&self) -> CorpusHeader {
        CorpusHeader {
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
        }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.id.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.label).collect()
    }

    /// Node feature matrix `N × F`.
    pub fn features<T: Real>(&self) -> Tensor<T> {
        let data = self
            .nodes
            .iter()
            .flat_map(|n| n.embedding.iter().map(|&v| T::from_f64(v)))
            .collect();
        Tensor::matrix(self.nodes.len(), self.feature_dim, data).expect("validated corpus")
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.split == Some(split))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_fully_tagged(&self) -> bool {
        self.nodes.iter().all(|n| n.split.is_some())
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &self.header())?;
        out.write_all(b"\n")?;
        for rec in &self.nodes {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<EmbeddingCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), path)
}

/// Parses a corpus from any line source; `origin` labels error messages.
pub fn read_corpus(reader: impl BufRead, origin: &Path) -> Result<EmbeddingCorpus> {
    let mut header: Option<CorpusHeader> = None;
    let mut nodes = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match header {
            None => {
                header = Some(
                    serde_json::from_str(&line).map_err(|e| Error::json(origin, lineno + 1, e))?,
                );
            }
            Some(_) => {
                let rec: NodeRecord =
                    serde_json::from_str(&line).map_err(|e| Error::json(origin, lineno + 1, e))?;
                nodes.push(rec);
            }
        }
    }
    let Some(header) = header else {
        return Err(Error::Corpus("empty corpus".into()));
    };
    if let Some(first) = nodes.first() {
        if first.embedding.len() != header.feature_dim {
            return Err(Error::EmbeddingDim {
                id: first.id.clone(),
                expected: header.feature_dim,
                found: first.embedding.len(),
            });
        }
    }
    EmbeddingCorpus::new(nodes, header.feature_dim, header.num_classes)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.6,
            val: 0.2,
            test: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ratios = [self.train, self.val, self.test];
        if ratios.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::Config(format!(
                "split ratios must be positive, got {ratios:?}"
            )));
        }
        let total: f64 = ratios.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must sum to 1, got {total}"
            )));
        }
        Ok(())
    }

    /// Split sizes for `n` nodes: floor each ratio, then hand the remainder
    /// to train first and val second.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let ratios = [self.train, self.val, self.test];
        let mut sizes = ratios.map(|r| (r * n as f64 + 1e-9).floor() as usize);
        let mut rest = n - sizes.iter().sum::<usize>();
        let mut k = 0;
        while rest > 0 {
            sizes[k % 2] += 1;
            rest -= 1;
            k += 1;
        }
        sizes
    }
}

/// Tags every node with a split. Fully tagged corpora pass through unchanged.
pub fn assign_splits(corpus: &EmbeddingCorpus, spec: &SplitSpec) -> Result<EmbeddingCorpus> {
    spec.validate()?;
    let tagged = corpus.nodes.iter().filter(|n| n.split.is_some()).count();
    if tagged == corpus.len() {
        return Ok(corpus.clone());
    }
    if tagged != 0 {
        return Err(Error::Corpus(format!(
            "{tagged} of {} records carry a split tag; expected all or none",
            corpus.len()
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let [n_train, n_val, _] = spec.sizes(corpus.len());
    let mut out = corpus.clone();
    for (rank, &idx) in order.iter().enumerate() {
        let split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        out.nodes[idx].split = Some(split);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn rec(id: &str, label: usize, emb: Vec<f64>) -> NodeRecord {
        NodeRecord {
            id: id.into(),
            label,
            split: None,
            embedding: emb,
            text: None,
        }
    }

    fn parse(s: &str) -> Result<EmbeddingCorpus> {
        read_corpus(Cursor::new(s), Path::new("mem"))
    }

    #[test]
    fn loads_happy_path() {
        let src = r#"{"feature_dim": 4, "num_classes": 2}
{"id": "a", "label": 0, "split": "train", "embedding": [1, 0, 0, 0]}
{"id": "b", "label": 1, "split": "val", "embedding": [0, 1, 0, 0], "text": "hello"}
{"id": "c", "label": 1, "split": null, "embedding": [0, 0, 1, 0.5]}
"#;
        let c = parse(src).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.feature_dim, 4);
        assert_eq!(c.nodes[1].text.as_deref(), Some("hello"));
        assert_eq!(c.nodes[2].split, None);
    }

    #[test]
    fn short_embedding_names_record() {
        let src = r#"{"feature_dim": 4, "num_classes": 2}
{"id": "a", "label": 0, "split": "train", "embedding": [1, 0, 0, 0]}
{"id": "short", "label": 0, "split": "train", "embedding": [1, 0, 0]}
"#;
        let err = parse(src).unwrap_err();
        assert!(matches!(&err, Error::EmbeddingDim { id, found: 3, .. } if id == "short"));
        assert!(err.to_string().contains("short"));
    }

    #[test]
    fn header_disagreeing_with_first_record_names_it() {
        let src = r#"{"feature_dim": 4, "num_classes": 2}
{"id": "first", "label": 0, "split": "train", "embedding": [1, 0]}
"#;
        let err = parse(src).unwrap_err();
        assert!(err.to_string().contains("first"));
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(parse("").unwrap_err().to_string().contains("empty corpus"));
        let header_only = "{\"feature_dim\": 2, \"num_classes\": 2}\n";
        assert!(parse(header_only)
            .unwrap_err()
            .to_string()
            .contains("empty corpus"));
    }

    #[test]
    fn rejects_bad_records() {
        let unknown_split = r#"{"feature_dim": 1, "num_classes": 2}
{"id": "a", "label": 0, "split": "holdout", "embedding": [1]}
"#;
        assert!(matches!(
            parse(unknown_split),
            Err(Error::Json { line: 2, .. })
        ));

        let dup = r#"{"feature_dim": 1, "num_classes": 2}
{"id": "a", "label": 0, "split": null, "embedding": [1]}
{"id": "a", "label": 1, "split": null, "embedding": [2]}
"#;
        assert!(parse(dup).unwrap_err().to_string().contains("duplicate"));

        let label = r#"{"feature_dim": 1, "num_classes": 2}
{"id": "a", "label": 2, "split": null, "embedding": [1]}
"#;
        assert!(parse(label).unwrap_err().to_string().contains("label 2"));
    }

    #[test]
    fn split_sizes_follow_floor_then_distribute() {
        let spec = SplitSpec::default();
        assert_eq!(spec.sizes(10), [6, 2, 2]);
        assert_eq!(spec.sizes(5), [3, 1, 1]);
        assert_eq!(spec.sizes(7), [5, 1, 1]);
        assert_eq!(spec.sizes(9), [6, 2, 1]);
    }

    #[test]
    fn ratios_must_sum_to_one() {
        let spec = SplitSpec {
            train: 0.6,
            val: 0.2,
            test: 0.3,
            seed: 1,
        };
        let corpus = EmbeddingCorpus::new(vec![rec("a", 0, vec![1.0])], 1, 2).unwrap();
        assert!(matches!(
            assign_splits(&corpus, &spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn assignment_is_seeded_and_partitions() {
        let nodes = (0..10)
            .map(|i| rec(&format!("n{i}"), i % 2, vec![i as f64 + 1.0]))
            .collect();
        let corpus = EmbeddingCorpus::new(nodes, 1, 2).unwrap();
        let spec = SplitSpec {
            seed: 42,
            ..SplitSpec::default()
        };
        let a = assign_splits(&corpus, &spec).unwrap();
        let b = assign_splits(&corpus, &spec).unwrap();
        assert_eq!(a, b);
        let sizes = Split::ALL.map(|s| a.split_indices(s).len());
        assert_eq!(sizes, [6, 2, 2]);

        // already tagged corpora pass through
        assert_eq!(
            assign_splits(&a, &SplitSpec { seed: 7, ..spec }).unwrap(),
            a
        );
    }

    #[test]
    fn mixed_tagging_is_rejected() {
        let mut nodes: Vec<_> = (0..3)
            .map(|i| rec(&format!("n{i}"), 0, vec![1.0]))
            .collect();
        nodes[0].split = Some(Split::Train);
        let corpus = EmbeddingCorpus::new(nodes, 1, 1).unwrap();
        assert!(assign_splits(&corpus, &SplitSpec::default()).is_err());
    }

    #[test]
    fn serialise_then_load_is_identity() {
        let mut nodes: Vec<_> = (0..4)
            .map(|i| rec(&format!("n{i}"), i % 3, vec![0.1 * i as f64, -1.0 / 3.0]))
            .collect();
        nodes[2].text = Some("quoted \"text\" ünïcode".into());
        nodes[1].split = Some(Split::Val);
        let corpus = EmbeddingCorpus::new(nodes, 2, 3).unwrap();
        let back = parse(&corpus.to_jsonl()).unwrap();
        assert_eq!(back, corpus);
    }
}
