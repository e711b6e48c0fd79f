use std::io::{BufRead, BufReader};
use std::path::Path;

use log::info;

use super::model::ClassifierModel;
use crate::corpus::{Vocabulary, PAD};
use crate::error::{Error, Result};

/// Outcome of a pretrained-vector import.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingLoadReport {
    /// Vocabulary entries that received a pretrained vector.
    pub matched: usize,
    /// Vectors read from the file.
    pub vectors: usize,
    /// Vocabulary entries left at their random initialization.
    pub missing: usize,
}

/// Copies vectors from a word2vec text file into the embedding table.
/// An optional `count dim` header line is accepted.
pub fn load_pretrained_embeddings(
    model: &mut ClassifierModel,
    vocab: &Vocabulary,
    path: impl AsRef<Path>,
) -> Result<EmbeddingLoadReport> {
    let path = path.as_ref();
    let display = path.display().to_string();
    if vocab.size() != model.vocab_size() {
        return Err(Error::VocabMismatch(format!(
            "vocabulary has {} entries, model embedding has {}",
            vocab.size(),
            model.vocab_size()
        )));
    }
    let d = model.config().embed_dim;
    let reader = BufReader::new(std::fs::File::open(path)?);
    let emb = model.embedding_id();
    let mut seen = vec![false; vocab.size()];
    let mut vectors = 0;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if n == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            let dim: usize = fields[1].parse().unwrap();
            if dim != d {
                return Err(Error::parse(&display, 1, format!("vectors have dimension {dim}, model expects {d}")));
            }
            continue;
        }
        if fields.len() != d + 1 {
            return Err(Error::parse(
                &display,
                n + 1,
                format!("vector has dimension {}, model expects {d}", fields.len() - 1),
            ));
        }
        let values = fields[1..]
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(&display, n + 1, e.to_string()))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(&display, n + 1, "non-finite vector component"));
        }
        vectors += 1;
        let token = if vocab.lowercase() { fields[0].to_lowercase() } else { fields[0].to_string() };
        if let Some(id) = vocab.id(&token) {
            if id != PAD && !seen[id as usize] {
                model.params_mut().get_mut(emb).row_mut(id as usize).copy_from_slice(&values);
                seen[id as usize] = true;
            }
        }
    }
    let matched = seen.iter().filter(|&&s| s).count();
    let report = EmbeddingLoadReport {
        matched,
        vectors,
        missing: vocab.size() - 1 - matched,
    };
    info!(
        "pretrained embeddings: {} of {} vocabulary entries matched from {} vectors",
        report.matched,
        vocab.size() - 1,
        report.vectors
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ClassifierConfig, EncoderKind};
    use std::io::Write;

    fn setup() -> (ClassifierModel, Vocabulary) {
        let vocab = Vocabulary::from_tokens(["cat", "dog"], false).unwrap();
        let cfg = ClassifierConfig {
            embed_dim: 3,
            cnn_feature_maps: 1,
            hidden: vec![],
            ..ClassifierConfig::new(EncoderKind::Cnn)
        };
        (ClassifierModel::new(cfg, vocab.size(), 0).unwrap(), vocab)
    }

    #[test]
    fn copies_matching_rows() {
        let (mut m, vocab) = setup();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "3 3\ncat 1 2 3\nbird 0 0 0\n<pad> 9 9 9").unwrap();
        let r = load_pretrained_embeddings(&mut m, &vocab, f.path()).unwrap();
        assert_eq!((r.matched, r.vectors), (1, 3));
        let cat = vocab.id("cat").unwrap() as usize;
        assert_eq!(m.params().get(m.embedding_id()).row(cat), &[1.0, 2.0, 3.0]);
        assert_eq!(m.params().get(m.embedding_id()).row(0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (mut m, vocab) = setup();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "cat 1 2").unwrap();
        let err = load_pretrained_embeddings(&mut m, &vocab, f.path()).unwrap_err();
        assert!(err.to_string().contains("dimension 2"), "{err}");
    }
}
