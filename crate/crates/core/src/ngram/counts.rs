use std::cmp::Ordering;

use rayon::prelude::*;

use crate::corpus::{Corpus, BOS, EOS};
use crate::error::{Error, Result};

/// Lexicographically sorted table of fixed-order n-grams stored flat.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GramTable<V> {
    order: usize,
    keys: Vec<u32>,
    values: Vec<V>,
}

impl<V> GramTable<V> {
    pub(crate) fn from_sorted(order: usize, keys: Vec<u32>, values: Vec<V>) -> Self {
        debug_assert_eq!(keys.len(), order * values.len());
        GramTable {
            order,
            keys,
            values,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn key(&self, i: usize) -> &[u32] {
        &self.keys[i * self.order..(i + 1) * self.order]
    }

    pub fn value(&self, i: usize) -> &V {
        &self.values[i]
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [V] {
        &mut self.values
    }

    pub fn find(&self, gram: &[u32]) -> Option<usize> {
        if gram.len() != self.order {
            return None;
        }
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.key(mid).cmp(gram) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    pub fn get(&self, gram: &[u32]) -> Option<&V> {
        self.find(gram).map(|i| &self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], &V)> {
        (0..self.len()).map(move |i| (self.key(i), &self.values[i]))
    }
}

/// Sorts a flat buffer of `order`-grams and collapses duplicates into counts.
fn sort_and_count(order: usize, flat: Vec<u32>) -> GramTable<u64> {
    let n = if order == 0 { 0 } else { flat.len() / order };
    let mut idx: Vec<u32> = (0..n as u32).collect();
    let slice = |i: u32| &flat[i as usize * order..(i as usize + 1) * order];
    idx.par_sort_unstable_by(|&a, &b| slice(a).cmp(slice(b)));
    let mut keys = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    let mut prev: Option<&[u32]> = None;
    for &i in &idx {
        let g = slice(i);
        if prev == Some(g) {
            *counts.last_mut().unwrap() += 1;
        } else {
            keys.extend_from_slice(g);
            counts.push(1);
            prev = Some(g);
        }
    }
    GramTable::from_sorted(order, keys, counts)
}

/// Token stream for one sentence: `order-1` BOS, the ids, one EOS.
pub(crate) fn padded(ids: &[u32], order: usize) -> Vec<u32> {
    let mut t = Vec::with_capacity(ids.len() + order);
    t.extend(std::iter::repeat_n(BOS, order.saturating_sub(1)));
    t.extend_from_slice(ids);
    t.push(EOS);
    t
}

/// Raw and Kneser-Ney-adjusted n-gram counts for orders `1..=N`.
///
/// Raw counts are taken at every predicted position (each token and the
/// final EOS; BOS is context only). Adjusted counts equal raw counts at the
/// top order and for grams starting with BOS; otherwise they are
/// continuation counts, the number of distinct tokens seen directly before
/// the gram.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramCounts {
    order: usize,
    vocab_size: usize,
    raw: Vec<GramTable<u64>>,
    adjusted: Vec<Vec<u64>>,
    count_of_counts: Vec<[u64; 4]>,
}

impl NGramCounts {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Raw counts of grams of length `o` (1-based).
    pub fn raw(&self, o: usize) -> &GramTable<u64> {
        &self.raw[o - 1]
    }

    pub fn count(&self, gram: &[u32]) -> u64 {
        if gram.is_empty() || gram.len() > self.order {
            return 0;
        }
        self.raw(gram.len()).get(gram).copied().unwrap_or(0)
    }

    /// Adjusted count aligned with `raw(o)`'s entries.
    pub fn adjusted(&self, o: usize) -> &[u64] {
        &self.adjusted[o - 1]
    }

    pub fn adjusted_count(&self, gram: &[u32]) -> u64 {
        if gram.is_empty() || gram.len() > self.order {
            return 0;
        }
        self.raw(gram.len())
            .find(gram)
            .map(|i| self.adjusted[gram.len() - 1][i])
            .unwrap_or(0)
    }

    /// Number of distinct tokens preceding `gram` in the next order's table.
    pub fn continuation_count(&self, gram: &[u32]) -> u64 {
        let o = gram.len();
        if o == 0 || o >= self.order {
            return 0;
        }
        self.raw(o + 1)
            .iter()
            .filter(|(k, _)| &k[1..] == gram)
            .count() as u64
    }

    /// `n_k` for k=1..4 over adjusted counts of order `o`.
    pub fn count_of_counts(&self, o: usize) -> [u64; 4] {
        self.count_of_counts[o - 1]
    }
}

/// Counts n-grams of orders `1..=order` over the corpus.
pub fn count_ngrams(corpus: &Corpus, order: usize, vocab_size: usize) -> Result<NGramCounts> {
    if order == 0 {
        return Err(Error::InvalidArgument("n-gram order must be >= 1".into()));
    }
    let streams: Vec<Vec<u32>> = corpus
        .sentences()
        .par_iter()
        .map(|s| padded(&s.ids, order))
        .collect();
    let mut raw = Vec::with_capacity(order);
    for o in 1..=order {
        let mut flat = Vec::new();
        for t in &streams {
            for j in (order - 1)..t.len() {
                flat.extend_from_slice(&t[j + 1 - o..=j]);
            }
        }
        raw.push(sort_and_count(o, flat));
    }

    let mut adjusted = Vec::with_capacity(order);
    for o in 1..=order {
        let table = &raw[o - 1];
        if o == order {
            adjusted.push(table.values().to_vec());
            continue;
        }
        // Suffixes of distinct (o+1)-grams, counted, give continuation counts.
        let higher = &raw[o];
        let mut flat = Vec::with_capacity(higher.len() * o);
        for (k, _) in higher.iter() {
            flat.extend_from_slice(&k[1..]);
        }
        let cont = sort_and_count(o, flat);
        let adj = table
            .iter()
            .map(|(k, &c)| {
                if k[0] == BOS {
                    c
                } else {
                    cont.get(k).copied().unwrap_or(0)
                }
            })
            .collect();
        adjusted.push(adj);
    }

    let count_of_counts = adjusted
        .iter()
        .map(|adj| {
            let mut n = [0u64; 4];
            for &a in adj {
                if (1..=4).contains(&a) {
                    n[a as usize - 1] += 1;
                }
            }
            n
        })
        .collect();

    Ok(NGramCounts {
        order,
        vocab_size,
        raw,
        adjusted,
        count_of_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, encode_corpus, EncodeOptions};

    fn corpus(lines: &[&str]) -> (Corpus, usize) {
        let v = build_vocabulary(lines.iter(), 1, 1000, false).unwrap();
        let c = encode_corpus("t", lines, &v, EncodeOptions::default());
        (c, v.size())
    }

    #[test]
    fn bigrams_of_single_token() {
        let (c, v) = corpus(&["a"]);
        let n = count_ngrams(&c, 2, v).unwrap();
        let a = 4;
        assert_eq!(n.raw(2).len(), 2);
        assert_eq!(n.count(&[BOS, a]), 1);
        assert_eq!(n.count(&[a, EOS]), 1);
    }

    #[test]
    fn unigram_and_continuation() {
        let (c, v) = corpus(&["a b", "a c"]);
        let n = count_ngrams(&c, 2, v).unwrap();
        let (a, b) = (4, 5);
        assert_eq!(n.count(&[a]), 2);
        assert_eq!(n.continuation_count(&[b]), 1);
        assert_eq!(n.adjusted_count(&[b]), 1);
        // EOS follows b and c
        assert_eq!(n.adjusted_count(&[EOS]), 2);
        // a only follows BOS
        assert_eq!(n.adjusted_count(&[a]), 1);
    }

    #[test]
    fn zero_order_rejected() {
        let (c, v) = corpus(&["a"]);
        assert!(count_ngrams(&c, 0, v).is_err());
    }

    #[test]
    fn bos_initial_grams_keep_raw_counts() {
        let (c, v) = corpus(&["a b", "a c", "a"]);
        let n = count_ngrams(&c, 3, v).unwrap();
        assert_eq!(n.adjusted_count(&[BOS, 4]), 3);
        assert_eq!(n.count_of_counts(3)[0], n.raw(3).values().iter().filter(|&&c| c == 1).count() as u64);
    }

    #[test]
    fn table_lookup() {
        let t = GramTable::from_sorted(2, vec![1, 2, 1, 3, 4, 0], vec![10u64, 20, 30]);
        assert_eq!(t.get(&[1, 3]), Some(&20));
        assert_eq!(t.get(&[4, 0]), Some(&30));
        assert_eq!(t.get(&[2, 2]), None);
        assert_eq!(t.get(&[1]), None);
    }
}
