use std::sync::Arc;

use rayon::prelude::*;

use super::counts::{count_ngrams, padded, GramTable, NGramCounts};
use crate::corpus::{Corpus, EncodedSentence, Vocabulary, BOS, NUM_SPECIALS, PAD};
use crate::error::{Error, Result};

/// Absolute discount used when count-of-counts are too sparse for the
/// modified estimates.
pub const FALLBACK_DISCOUNT: f64 = 0.75;

/// Per-order discounts for adjusted counts 1, 2 and 3+.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discounts {
    pub d1: f64,
    pub d2: f64,
    pub d3plus: f64,
}

impl Discounts {
    pub fn uniform(d: f64) -> Self {
        Discounts {
            d1: d,
            d2: d,
            d3plus: d,
        }
    }

    pub fn for_count(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.d1,
            2 => self.d2,
            _ => self.d3plus,
        }
    }

    /// Chen-Goodman estimates from count-of-counts `n = [n1, n2, n3, n4]`.
    /// Returns `None` when the counts are too sparse to define all three.
    pub fn modified(n: [u64; 4]) -> Option<Self> {
        let [n1, n2, n3, n4] = n.map(|v| v as f64);
        if n1 == 0.0 || n2 == 0.0 || n3 == 0.0 {
            return None;
        }
        let y = n1 / (n1 + 2.0 * n2);
        let d = Discounts {
            d1: (1.0 - 2.0 * y * n2 / n1).clamp(0.0, 1.0),
            d2: (2.0 - 3.0 * y * n3 / n2).clamp(0.0, 2.0),
            d3plus: (3.0 - 4.0 * y * n4 / n3).clamp(0.0, 3.0),
        };
        // A zero discount leaves no mass for lower orders.
        (d.d1 > 0.0 && d.d2 > 0.0 && d.d3plus > 0.0).then_some(d)
    }
}

/// One n-gram entry: conditional log-probability (nats) and the log backoff
/// weight applied when this gram is used as a context.
///
/// `log_prob` is `None` for context-only grams (runs of BOS), which the model
/// never predicts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub log_prob: Option<f64>,
    pub log_backoff: Option<f64>,
}

/// Interpolated modified Kneser-Ney language model in backoff form.
#[derive(Debug, Clone, PartialEq)]
pub struct KnModel {
    pub(crate) order: usize,
    pub(crate) vocab: Arc<Vocabulary>,
    pub(crate) discounts: Vec<Discounts>,
    pub(crate) tables: Vec<GramTable<Entry>>,
    pub(crate) warnings: Vec<String>,
    pub(crate) meta: Vec<String>,
}

impl KnModel {
    /// Counts and estimates in one go.
    pub fn train(corpus: &Corpus, vocab: Arc<Vocabulary>, order: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let counts = count_ngrams(corpus, order, vocab.size())?;
        estimate_kn(&counts, vocab)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn discounts(&self) -> &[Discounts] {
        &self.discounts
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Free-form metadata lines carried through serialization.
    pub fn meta(&self) -> &[String] {
        &self.meta
    }

    pub fn set_meta(&mut self, meta: Vec<String>) {
        self.meta = meta;
    }

    /// Entries of order `o` (1-based).
    pub fn table(&self, o: usize) -> &GramTable<Entry> {
        &self.tables[o - 1]
    }

    pub fn entry(&self, gram: &[u32]) -> Option<&Entry> {
        if gram.is_empty() || gram.len() > self.order {
            return None;
        }
        self.tables[gram.len() - 1].get(gram)
    }

    /// Ids the model assigns probability to: every id except PAD and BOS.
    pub fn predictable_ids(&self) -> impl Iterator<Item = u32> {
        (0..self.vocab.size() as u32).filter(|&id| id != PAD && id != BOS)
    }

    /// Natural-log probability of `word` after `history`. Only the last
    /// `order - 1` history tokens are used; missing context is backed off.
    pub fn log_prob(&self, word: u32, history: &[u32]) -> f64 {
        debug_assert!(word != PAD && word != BOS, "PAD/BOS are never predicted");
        let keep = history.len().min(self.order - 1);
        let mut ctx = &history[history.len() - keep..];
        let mut acc = 0.0;
        let mut gram = Vec::with_capacity(self.order);
        loop {
            gram.clear();
            gram.extend_from_slice(ctx);
            gram.push(word);
            if let Some(p) = self.tables[gram.len() - 1].get(&gram).and_then(|e| e.log_prob) {
                return acc + p;
            }
            if ctx.is_empty() {
                return f64::NEG_INFINITY;
            }
            if let Some(bo) = self.tables[ctx.len() - 1].get(ctx).and_then(|e| e.log_backoff) {
                acc += bo;
            }
            ctx = &ctx[1..];
        }
    }

    /// Sum of log-probabilities over the sentence tokens and the EOS event.
    pub fn sentence_log_prob(&self, ids: &[u32]) -> f64 {
        let t = padded(ids, self.order);
        (self.order - 1..t.len())
            .map(|j| self.log_prob(t[j], &t[j + 1 - self.order..j]))
            .sum()
    }

    /// Nats per token, EOS included in the normalizer.
    pub fn sentence_cross_entropy(&self, sentence: &EncodedSentence) -> f64 {
        self.cross_entropy_of(&sentence.ids)
    }

    pub fn cross_entropy_of(&self, ids: &[u32]) -> f64 {
        -self.sentence_log_prob(ids) / (ids.len() + 1) as f64
    }

    pub fn perplexity(&self, sentence: &EncodedSentence) -> f64 {
        self.sentence_cross_entropy(sentence).exp()
    }

    /// Per-token perplexity over a whole corpus.
    pub fn corpus_perplexity(&self, corpus: &Corpus) -> f64 {
        let (lp, n) = corpus
            .sentences()
            .par_iter()
            .map(|s| (self.sentence_log_prob(&s.ids), s.len() + 1))
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0.0, 0usize), |(a, b), (x, y)| (a + x, b + y));
        (-lp / n as f64).exp()
    }

    /// Cross-entropies of every sentence, in corpus order.
    pub fn score_corpus(&self, corpus: &Corpus) -> Vec<f64> {
        corpus
            .sentences()
            .par_iter()
            .map(|s| self.sentence_cross_entropy(s))
            .collect()
    }
}

struct ContextStats {
    total: u64,
    n: [u64; 3],
}

/// Estimates interpolated modified Kneser-Ney probabilities from counts.
///
/// Lower orders use adjusted (continuation) counts; the unigram level
/// interpolates with a uniform distribution over every predictable id, so
/// ids unseen in this corpus still get mass.
pub fn estimate_kn(counts: &NGramCounts, vocab: Arc<Vocabulary>) -> Result<KnModel> {
    let order = counts.order();
    if counts.vocab_size() != vocab.size() {
        return Err(Error::VocabMismatch(format!(
            "counts over {} ids, vocabulary has {}",
            counts.vocab_size(),
            vocab.size()
        )));
    }
    if counts.raw(1).is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut warnings = Vec::new();
    let discounts: Vec<Discounts> = (1..=order)
        .map(|o| {
            let n = counts.count_of_counts(o);
            Discounts::modified(n).unwrap_or_else(|| {
                warnings.push(format!(
                    "order {o}: count-of-counts {n:?} too sparse, using absolute discount {FALLBACK_DISCOUNT}"
                ));
                Discounts::uniform(FALLBACK_DISCOUNT)
            })
        })
        .collect();

    // Unigrams over every predictable id.
    let predictable = vocab.size() - 2;
    let raw1 = counts.raw(1);
    let adj1 = counts.adjusted(1);
    let mut uni_adj = vec![0u64; vocab.size()];
    for (i, (k, _)) in raw1.iter().enumerate() {
        uni_adj[k[0] as usize] = adj1[i];
    }
    let d = discounts[0];
    let mut stats = ContextStats {
        total: 0,
        n: [0; 3],
    };
    for (id, &a) in uni_adj.iter().enumerate() {
        if id as u32 == PAD || id as u32 == BOS {
            continue;
        }
        accumulate(&mut stats, a);
    }
    let gamma = gamma_of(&stats, &d);
    let uniform = 1.0 / predictable as f64;
    let mut uni_keys = Vec::new();
    let mut uni_entries = Vec::new();
    for id in 0..vocab.size() as u32 {
        if id == PAD {
            continue;
        }
        uni_keys.push(id);
        let log_prob = (id != BOS).then(|| {
            let a = uni_adj[id as usize];
            let p = (a as f64 - d.for_count(a)) / stats.total as f64 + gamma * uniform;
            p.ln()
        });
        uni_entries.push(Entry {
            log_prob,
            log_backoff: None,
        });
    }
    let mut tables = vec![GramTable::from_sorted(1, uni_keys, uni_entries)];

    for o in 2..=order {
        let raw = counts.raw(o);
        let adj = counts.adjusted(o);
        let d = discounts[o - 1];
        let mut keys = Vec::with_capacity(raw.len() * o);
        let mut entries = Vec::with_capacity(raw.len());
        let mut contexts: Vec<(Vec<u32>, f64)> = Vec::new();
        let mut start = 0;
        while start < raw.len() {
            let ctx = &raw.key(start)[..o - 1];
            let mut end = start;
            let mut stats = ContextStats {
                total: 0,
                n: [0; 3],
            };
            while end < raw.len() && &raw.key(end)[..o - 1] == ctx {
                accumulate(&mut stats, adj[end]);
                end += 1;
            }
            let gamma = gamma_of(&stats, &d);
            let lower = &tables[o - 2];
            for i in start..end {
                let gram = raw.key(i);
                let a = adj[i];
                let lower_lp = lower
                    .get(&gram[1..])
                    .and_then(|e| e.log_prob)
                    .expect("suffix of a counted gram is always counted");
                let p = (a as f64 - d.for_count(a)) / stats.total as f64 + gamma * lower_lp.exp();
                keys.extend_from_slice(gram);
                entries.push(Entry {
                    log_prob: Some(p.ln()),
                    log_backoff: None,
                });
            }
            contexts.push((ctx.to_vec(), gamma.ln()));
            start = end;
        }
        tables.push(GramTable::from_sorted(o, keys, entries));
        attach_backoffs(&mut tables[o - 2], contexts);
    }

    let model = KnModel {
        order,
        vocab,
        discounts,
        tables,
        warnings,
        meta: Vec::new(),
    };
    validate(&model)?;
    Ok(model)
}

fn accumulate(stats: &mut ContextStats, a: u64) {
    stats.total += a;
    match a {
        0 => {}
        1 => stats.n[0] += 1,
        2 => stats.n[1] += 1,
        _ => stats.n[2] += 1,
    }
}

fn gamma_of(stats: &ContextStats, d: &Discounts) -> f64 {
    (d.d1 * stats.n[0] as f64 + d.d2 * stats.n[1] as f64 + d.d3plus * stats.n[2] as f64)
        / stats.total as f64
}

/// Sets backoff weights on existing context grams and inserts context-only
/// entries (all-BOS prefixes) that the lower table lacks.
fn attach_backoffs(table: &mut GramTable<Entry>, contexts: Vec<(Vec<u32>, f64)>) {
    let mut missing = Vec::new();
    for (ctx, lbo) in contexts {
        match table.find(&ctx) {
            Some(i) => table.values_mut()[i].log_backoff = Some(lbo),
            None => missing.push((ctx, lbo)),
        }
    }
    if missing.is_empty() {
        return;
    }
    let order = table.order();
    let mut all: Vec<(Vec<u32>, Entry)> = table
        .iter()
        .map(|(k, e)| (k.to_vec(), *e))
        .chain(missing.into_iter().map(|(k, lbo)| {
            (
                k,
                Entry {
                    log_prob: None,
                    log_backoff: Some(lbo),
                },
            )
        }))
        .collect();
    all.sort_by(|a, b| a.0.cmp(&b.0));
    let keys = all.iter().flat_map(|(k, _)| k.iter().copied()).collect();
    let entries = all.into_iter().map(|(_, e)| e).collect();
    *table = GramTable::from_sorted(order, keys, entries);
}

pub(crate) fn validate(model: &KnModel) -> Result<()> {
    for table in &model.tables {
        for (k, e) in table.iter() {
            let bad_prob = e.log_prob.is_some_and(|p| !p.is_finite() || p > 1e-12);
            let bad_bo = e.log_backoff.is_some_and(|b| !b.is_finite());
            if bad_prob || bad_bo {
                return Err(Error::Format(format!(
                    "invalid log-probability/backoff for n-gram {k:?}: {e:?}"
                )));
            }
            if k.iter().any(|&id| id as usize >= model.vocab.size()) {
                return Err(Error::Format(format!("n-gram {k:?} outside vocabulary")));
            }
        }
    }
    // Stored unigram entries must cover each predictable id.
    let uni = &model.tables[0];
    for id in 0..model.vocab.size() as u32 {
        if id == PAD || id == BOS {
            continue;
        }
        if uni.get(&[id]).and_then(|e| e.log_prob).is_none() {
            return Err(Error::Format(format!(
                "unigram missing for {:?}",
                model.vocab.token(id)
            )));
        }
    }
    debug_assert!(model.vocab.size() >= NUM_SPECIALS);
    Ok(())
}
