//! Cross-entropy difference selection: score each pool sentence by
//! `H_in(x) - H_out(x)` and keep the lowest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::corpus::{build_vocabulary, Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::ngram::KnModel;
use crate::rng::seeded;

pub const METHOD_XENT: &str = "xent";

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence {
    pub source_index: usize,
    pub score: f64,
    pub method: String,
}

/// Scores sorted best-first, ties broken by ascending source index.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    items: Vec<ScoredSentence>,
    ascending: bool,
}

impl Ranking {
    pub fn items(&self) -> &[ScoredSentence] {
        &self.items
    }

    pub fn ascending(&self) -> bool {
        self.ascending
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn order(&self) -> Vec<usize> {
        self.items.iter().map(|s| s.source_index).collect()
    }
}

/// `c(x) = H_in(x) - H_out(x)` per pool sentence, in pool order. Lower is
/// more in-domain-like.
pub fn score_xent_diff(
    model_in: &KnModel,
    model_out: &KnModel,
    pool: &Corpus,
) -> Result<Vec<ScoredSentence>> {
    if !model_in.vocab().same_mapping(model_out.vocab()) {
        return Err(Error::VocabMismatch(
            "in-domain and pool language models use different vocabularies".into(),
        ));
    }
    Ok(pool
        .sentences()
        .par_iter()
        .map(|s| ScoredSentence {
            source_index: s.source_index,
            score: model_in.sentence_cross_entropy(s) - model_out.sentence_cross_entropy(s),
            method: METHOD_XENT.to_string(),
        })
        .collect())
}

pub fn rank(mut scores: Vec<ScoredSentence>, ascending: bool) -> Ranking {
    scores.sort_by(|a, b| {
        let by_score = if ascending {
            a.score.total_cmp(&b.score)
        } else {
            b.score.total_cmp(&a.score)
        };
        by_score.then(a.source_index.cmp(&b.source_index))
    });
    debug_assert!(
        {
            let mut idx: Vec<usize> = scores.iter().map(|s| s.source_index).collect();
            idx.sort_unstable();
            idx.windows(2).all(|w| w[0] != w[1])
        },
        "duplicate source index in ranking"
    );
    Ranking {
        items: scores,
        ascending,
    }
}

/// First `n` source indices of the ranking.
pub fn select_top(ranking: &Ranking, n: usize) -> Result<Vec<usize>> {
    if n > ranking.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {n} of {} ranked sentences",
            ranking.len()
        )));
    }
    Ok(ranking.items[..n].iter().map(|s| s.source_index).collect())
}

/// Vocabulary over the in-domain corpus and the pool together, so both
/// models score tokens identically.
pub fn shared_vocabulary<S: AsRef<str>>(
    in_domain: &[S],
    pool: &[S],
    min_count: u64,
    max_size: usize,
    lowercase: bool,
) -> Result<Vocabulary> {
    build_vocabulary(
        in_domain.iter().chain(pool.iter()).map(|s| s.as_ref()),
        min_count,
        max_size,
        lowercase,
    )
}

/// Which pool sentences train the out-of-domain model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolModelData {
    /// Every pool sentence.
    Full,
    /// A seeded random subsample the size of the in-domain corpus.
    SizeMatched { seed: u64 },
}

pub struct XentModels {
    pub in_domain: KnModel,
    pub pool: KnModel,
}

pub fn train_xent_models(
    in_domain: &Corpus,
    pool: &Corpus,
    vocab: Arc<Vocabulary>,
    order: usize,
    pool_data: PoolModelData,
) -> Result<XentModels> {
    let in_model = KnModel::train(in_domain, vocab.clone(), order)?;
    let pool_model = match pool_data {
        PoolModelData::Full => KnModel::train(pool, vocab, order)?,
        PoolModelData::SizeMatched { seed } => {
            let n = in_domain.len().min(pool.len());
            let mut rng = seeded(seed);
            let mut picks: Vec<usize> = sample(&mut rng, pool.len(), n).into_vec();
            picks.sort_unstable();
            let sentences = picks.iter().map(|&i| pool.sentences()[i].clone()).collect();
            KnModel::train(&Corpus::new("pool-sample", sentences), vocab, order)?
        }
    };
    Ok(XentModels {
        in_domain: in_model,
        pool: pool_model,
    })
}

/// Nested selections at `step, 2*step, ...` up to the ranking length.
pub fn size_sweep(ranking: &Ranking, step: usize) -> Result<Vec<(usize, Vec<usize>)>> {
    if step == 0 {
        return Err(Error::InvalidArgument("sweep step must be >= 1".into()));
    }
    (1..=ranking.len() / step)
        .map(|k| Ok((k * step, select_top(ranking, k * step)?)))
        .collect()
}

pub fn write_scores_tsv(
    path: impl AsRef<Path>,
    header: &[String],
    scores: &[ScoredSentence],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for h in header {
        writeln!(out, "# {h}")?;
    }
    for s in scores {
        writeln!(out, "{}\t{}\t{}", s.source_index, s.score, s.method)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_scores_tsv(path: impl AsRef<Path>) -> Result<Vec<ScoredSentence>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut scores = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(&name, n + 1, "expected source_index<TAB>score<TAB>method"));
        }
        let source_index = cols[0]
            .parse()
            .map_err(|_| Error::parse(&name, n + 1, "bad source index"))?;
        let score: f64 = cols[1]
            .parse()
            .map_err(|_| Error::parse(&name, n + 1, "bad score"))?;
        if !score.is_finite() {
            return Err(Error::parse(&name, n + 1, "non-finite score"));
        }
        scores.push(ScoredSentence {
            source_index,
            score,
            method: cols[2].to_string(),
        });
    }
    Ok(scores)
}

/// One source index per line.
pub fn write_selection(path: impl AsRef<Path>, indices: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for i in indices {
        writeln!(out, "{i}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_selection(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    BufReader::new(File::open(path)?)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.is_empty() && !l.starts_with('#')))
        .map(|(n, l)| {
            l?.trim()
                .parse()
                .map_err(|_| Error::parse(&name, n + 1, "bad source index"))
        })
        .collect()
}

/// Writes the original text lines of a selection in ranked order.
pub fn write_selected_text<S: AsRef<str>>(
    path: impl AsRef<Path>,
    lines: &[S],
    indices: &[usize],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for &i in indices {
        let line = lines
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("source index {i} beyond input")))?;
        writeln!(out, "{}", line.as_ref())?;
    }
    out.flush()?;
    Ok(())
}
