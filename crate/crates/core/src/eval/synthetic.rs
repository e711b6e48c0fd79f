use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::corpus::{encode_corpus, Corpus, EncodeOptions, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, Rng};

/// Two seeded Markov generators and the sizes of the corpora drawn from them.
/// Generator A produces the in-domain corpus, the planted pool sentences and
/// the held-out set; generator B fills the rest of the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub in_domain_size: usize,
    pub pool_size: usize,
    /// Fraction of the pool drawn from generator A.
    pub planted_fraction: f64,
    pub heldout_size: usize,
    /// Function words shared by both generators.
    pub function_words: usize,
    /// Content words private to A and to B.
    pub content_a: usize,
    pub content_b: usize,
    /// Content words both generators can emit.
    pub shared_content: usize,
    /// Probability that a token is a function word.
    pub function_prob: f64,
    /// Probability that a content token comes from the shared set.
    pub shared_prob: f64,
    /// Probability of following the successor table of the previous token.
    pub successor_prob: f64,
    pub successors: usize,
    pub zipf_exponent: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            in_domain_size: 2000,
            pool_size: 20000,
            planted_fraction: 0.1,
            heldout_size: 1000,
            function_words: 40,
            content_a: 800,
            content_b: 2400,
            shared_content: 400,
            function_prob: 0.35,
            shared_prob: 0.3,
            successor_prob: 0.5,
            successors: 6,
            zipf_exponent: 1.0,
            min_len: 4,
            max_len: 20,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    /// Canonical `key = value` text; the config digest hashes this.
    pub fn canonical(&self) -> String {
        format!(
            "in_domain_size = {}\npool_size = {}\nplanted_fraction = {}\nheldout_size = {}\n\
             function_words = {}\ncontent_a = {}\ncontent_b = {}\nshared_content = {}\n\
             function_prob = {}\nshared_prob = {}\nsuccessor_prob = {}\nsuccessors = {}\n\
             zipf_exponent = {}\nmin_len = {}\nmax_len = {}\nseed = {}\n",
            self.in_domain_size,
            self.pool_size,
            self.planted_fraction,
            self.heldout_size,
            self.function_words,
            self.content_a,
            self.content_b,
            self.shared_content,
            self.function_prob,
            self.shared_prob,
            self.successor_prob,
            self.successors,
            self.zipf_exponent,
            self.min_len,
            self.max_len,
            self.seed
        )
    }

    pub fn planted_count(&self) -> usize {
        (self.planted_fraction * self.pool_size as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.in_domain_size < 10 || self.pool_size < 10 {
            return bad("corpus sizes must be >= 10".into());
        }
        if !(0.0..1.0).contains(&self.planted_fraction) {
            return bad(format!("planted fraction {} not in [0, 1)", self.planted_fraction));
        }
        for (name, p) in [
            ("function_prob", self.function_prob),
            ("shared_prob", self.shared_prob),
            ("successor_prob", self.successor_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} not in [0, 1]"));
            }
        }
        if self.function_words == 0 || self.content_a == 0 || self.content_b == 0 {
            return bad("word inventories must be non-empty".into());
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("need 1 <= min_len <= max_len".into());
        }
        Ok(())
    }
}

struct Generator {
    words: Vec<String>,
    function: WeightedIndex<f64>,
    own: WeightedIndex<f64>,
    shared: Option<WeightedIndex<f64>>,
    n_function: usize,
    n_own: usize,
    /// Successor candidates per word index.
    next: Vec<Vec<usize>>,
    function_prob: f64,
    shared_prob: f64,
    successor_prob: f64,
    min_len: usize,
    max_len: usize,
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|k| (k as f64).powf(-s))).expect("non-empty weights")
}

impl Generator {
    /// Word indices: function words, then own content, then shared content.
    fn new(spec: &SyntheticSpec, own_prefix: &str, own_size: usize, seed: u64) -> Self {
        let mut words: Vec<String> = (0..spec.function_words).map(|i| format!("fw{i}")).collect();
        words.extend((0..own_size).map(|i| format!("{own_prefix}{i}")));
        words.extend((0..spec.shared_content).map(|i| format!("sh{i}")));
        let mut g = Generator {
            function: zipf(spec.function_words, spec.zipf_exponent),
            own: zipf(own_size, spec.zipf_exponent),
            shared: (spec.shared_content > 0).then(|| zipf(spec.shared_content, spec.zipf_exponent)),
            n_function: spec.function_words,
            n_own: own_size,
            next: Vec::new(),
            function_prob: spec.function_prob,
            shared_prob: spec.shared_prob,
            successor_prob: spec.successor_prob,
            min_len: spec.min_len,
            max_len: spec.max_len,
            words,
        };
        let mut rng = seeded(seed);
        g.next = (0..g.words.len())
            .map(|_| (0..spec.successors).map(|_| g.fresh(&mut rng)).collect())
            .collect();
        g
    }

    fn fresh(&self, rng: &mut Rng) -> usize {
        if rng.random::<f64>() < self.function_prob {
            return self.function.sample(rng);
        }
        match &self.shared {
            Some(shared) if rng.random::<f64>() < self.shared_prob => {
                self.n_function + self.n_own + shared.sample(rng)
            }
            _ => self.n_function + self.own.sample(rng),
        }
    }

    fn sentence(&self, rng: &mut Rng) -> String {
        let len = rng.random_range(self.min_len..=self.max_len);
        let mut out: Vec<&str> = Vec::with_capacity(len);
        let mut prev: Option<usize> = None;
        for _ in 0..len {
            let w = match prev {
                Some(p) if !self.next[p].is_empty() && rng.random::<f64>() < self.successor_prob => {
                    self.next[p][rng.random_range(0..self.next[p].len())]
                }
                _ => self.fresh(rng),
            };
            out.push(&self.words[w]);
            prev = Some(w);
        }
        out.join(" ")
    }
}

/// Generated text with the pool positions drawn from generator A.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub in_domain: Vec<String>,
    pub pool: Vec<String>,
    pub heldout: Vec<String>,
    /// Pool line numbers of planted (generator A) sentences.
    pub planted: BTreeSet<usize>,
}

/// Encoded form of [`SyntheticData`] under one vocabulary.
#[derive(Debug, Clone)]
pub struct SyntheticCorpora {
    pub in_domain: Corpus,
    pub pool: Corpus,
    pub heldout: Corpus,
    pub planted: BTreeSet<usize>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let gen_a = Generator::new(spec, "ca", spec.content_a, derive_seed(spec.seed, 1));
    let gen_b = Generator::new(spec, "cb", spec.content_b, derive_seed(spec.seed, 2));
    let mut rng_a = seeded(derive_seed(spec.seed, 3));
    let mut rng_b = seeded(derive_seed(spec.seed, 4));

    let in_domain = (0..spec.in_domain_size).map(|_| gen_a.sentence(&mut rng_a)).collect();
    let planted_n = spec.planted_count();
    let mut mixed: Vec<(String, bool)> = (0..planted_n)
        .map(|_| (gen_a.sentence(&mut rng_a), true))
        .chain((planted_n..spec.pool_size).map(|_| (gen_b.sentence(&mut rng_b), false)))
        .collect();
    let heldout = (0..spec.heldout_size).map(|_| gen_a.sentence(&mut rng_a)).collect();
    mixed.shuffle(&mut seeded(derive_seed(spec.seed, 5)));

    let planted = mixed
        .iter()
        .enumerate()
        .filter_map(|(i, (_, p))| p.then_some(i))
        .collect();
    Ok(SyntheticData {
        in_domain,
        pool: mixed.into_iter().map(|(s, _)| s).collect(),
        heldout,
        planted,
    })
}

impl SyntheticData {
    pub fn encode(&self, vocab: &Vocabulary) -> SyntheticCorpora {
        let opts = EncodeOptions::default();
        SyntheticCorpora {
            in_domain: encode_corpus("in-domain", &self.in_domain, vocab, opts),
            pool: encode_corpus("pool", &self.pool, vocab, opts),
            heldout: encode_corpus("heldout", &self.heldout, vocab, opts),
            planted: self.planted.clone(),
        }
    }

    /// Writes `in_domain.txt`, `pool.txt`, `heldout.txt` and `planted.txt`
    /// (one pool line number per line).
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let lines = |v: &[String]| {
            let mut s = v.join("\n");
            s.push('\n');
            s
        };
        fs::write(dir.join("in_domain.txt"), lines(&self.in_domain))?;
        fs::write(dir.join("pool.txt"), lines(&self.pool))?;
        fs::write(dir.join("heldout.txt"), lines(&self.heldout))?;
        let planted: Vec<String> = self.planted.iter().map(|i| i.to_string()).collect();
        fs::write(dir.join("planted.txt"), lines(&planted))?;
        Ok(())
    }
}

/// Reads a `planted.txt` file of pool line numbers.
pub fn read_planted(path: impl AsRef<Path>) -> Result<BTreeSet<usize>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim()
                .parse()
                .map_err(|e: std::num::ParseIntError| Error::parse(&display, n + 1, e.to_string()))
        })
        .collect()
}
