//! Brute-force interpolated modified Kneser-Ney, computed straight from the
//! definitions with linear scans. Slow, but shares no code with the library.
//!
//! Conventions: each sentence is preceded by `order - 1` BOS tokens and
//! followed by EOS; every post-padding position is an event. The top order
//! and grams starting with BOS use raw counts, other lower orders use the
//! number of distinct left neighbours. The unigram level interpolates with a
//! uniform distribution over all ids except PAD and BOS.

use std::collections::HashMap;

pub const PAD: u32 = 0;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;

pub struct Oracle {
    pub order: usize,
    pub vocab_size: usize,
    /// Every event n-gram occurrence, kept as a flat list of (gram) copies.
    occurrences: Vec<Vec<u32>>,
    pub discounts: Vec<[f64; 3]>,
}

impl Oracle {
    pub fn new(sentences: &[Vec<u32>], order: usize, vocab_size: usize) -> Self {
        let mut occurrences = Vec::new();
        for s in sentences {
            let mut t = vec![BOS; order - 1];
            t.extend_from_slice(s);
            t.push(EOS);
            for j in order - 1..t.len() {
                for o in 1..=order {
                    occurrences.push(t[j + 1 - o..=j].to_vec());
                }
            }
        }
        let mut oracle = Oracle {
            order,
            vocab_size,
            occurrences,
            discounts: Vec::new(),
        };
        oracle.discounts = (1..=order).map(|o| oracle.discount_for_order(o)).collect();
        oracle
    }

    pub fn raw(&self, gram: &[u32]) -> u64 {
        self.occurrences.iter().filter(|g| g.as_slice() == gram).count() as u64
    }

    /// Distinct grams of one order that occur.
    fn grams(&self, o: usize) -> Vec<Vec<u32>> {
        let mut v: Vec<Vec<u32>> = self.occurrences.iter().filter(|g| g.len() == o).cloned().collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn adjusted(&self, gram: &[u32]) -> u64 {
        if gram.len() == self.order || gram[0] == BOS {
            return self.raw(gram);
        }
        let mut left: Vec<u32> = self
            .occurrences
            .iter()
            .filter(|g| g.len() == gram.len() + 1 && &g[1..] == gram)
            .map(|g| g[0])
            .collect();
        left.sort();
        left.dedup();
        left.len() as u64
    }

    fn discount_for_order(&self, o: usize) -> [f64; 3] {
        let mut n = [0.0f64; 5];
        for g in self.grams(o) {
            let a = self.adjusted(&g);
            if (1..=4).contains(&a) {
                n[a as usize] += 1.0;
            }
        }
        let fallback = [0.75; 3];
        if n[1] == 0.0 || n[2] == 0.0 || n[3] == 0.0 {
            return fallback;
        }
        let y = n[1] / (n[1] + 2.0 * n[2]);
        let d1 = (1.0 - 2.0 * y * n[2] / n[1]).clamp(0.0, 1.0);
        let d2 = (2.0 - 3.0 * y * n[3] / n[2]).clamp(0.0, 2.0);
        let d3 = (3.0 - 4.0 * y * n[4] / n[3]).clamp(0.0, 3.0);
        if d1 <= 0.0 || d2 <= 0.0 || d3 <= 0.0 {
            return fallback;
        }
        [d1, d2, d3]
    }

    fn d(&self, o: usize, a: u64) -> f64 {
        match a {
            0 => 0.0,
            1 => self.discounts[o - 1][0],
            2 => self.discounts[o - 1][1],
            _ => self.discounts[o - 1][2],
        }
    }

    fn predictable(&self) -> impl Iterator<Item = u32> {
        (0..self.vocab_size as u32).filter(|&w| w != PAD && w != BOS)
    }

    /// `P(w | h)` at order `|h| + 1`.
    pub fn prob(&self, w: u32, h: &[u32]) -> f64 {
        if w == PAD || w == BOS {
            return 0.0;
        }
        let o = h.len() + 1;
        if o == 1 {
            let counts: HashMap<u32, u64> = self.predictable().map(|x| (x, self.adjusted(&[x]))).collect();
            let total: u64 = counts.values().sum();
            let mass: f64 = counts.values().map(|&a| self.d(1, a)).sum();
            let a = counts[&w];
            let uniform = 1.0 / (self.vocab_size - 2) as f64;
            return (a as f64 - self.d(1, a)) / total as f64 + mass / total as f64 * uniform;
        }
        let lower = self.prob(w, &h[1..]);
        let extended: Vec<(u32, u64)> = self
            .predictable()
            .map(|x| {
                let mut g = h.to_vec();
                g.push(x);
                (x, self.adjusted(&g))
            })
            .collect();
        let total: u64 = extended.iter().map(|e| e.1).sum();
        if total == 0 {
            return lower;
        }
        let mass: f64 = extended.iter().map(|&(_, a)| self.d(o, a)).sum();
        let a = extended.iter().find(|e| e.0 == w).unwrap().1;
        (a as f64 - self.d(o, a)) / total as f64 + mass / total as f64 * lower
    }

    /// Conditional probability under the full model: the history is cut to
    /// `order - 1` tokens.
    pub fn model_prob(&self, w: u32, history: &[u32]) -> f64 {
        let keep = history.len().min(self.order - 1);
        self.prob(w, &history[history.len() - keep..])
    }
}
