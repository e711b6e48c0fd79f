//! Synthetic two-domain benchmark: planted in-domain sentences in a pool,
//! precision of each selection method at growing sizes, and held-out
//! perplexity of a language model trained on the in-domain corpus plus the
//! selection.

mod report;
mod synthetic;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

pub use report::{read_report_tsv, EvalReport, ReportRow, Timing};
pub use synthetic::{generate_synthetic, read_planted, SyntheticCorpora, SyntheticData, SyntheticSpec};

use crate::classifier::{ClassifierConfig, EncoderKind, OptimizerKind, TrainConfig};
use crate::corpus::{Corpus, EncodedSentence, Vocabulary};
use crate::error::{Error, Result};
use crate::ngram::KnModel;
use crate::nn::AdamConfig;
use crate::rng::{derive_seed, seeded};
use crate::semisup::{self, ClassifierScorer};
use crate::xent::{self, rank, shared_vocabulary, PoolModelData};

pub const METRIC_PRECISION: &str = "precision";
pub const METRIC_PERPLEXITY: &str = "perplexity";
/// Proxy perplexity of the in-domain corpus alone (selection size 0).
pub const BASELINE_IN_DOMAIN: &str = "baseline-in";
/// Proxy perplexity of the in-domain corpus plus the whole pool.
pub const BASELINE_ALL: &str = "baseline-all";

/// Seeded random order of the pool's source indices. Every prefix is a
/// uniform sample without replacement.
pub fn random_order(pool: &Corpus, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = pool.sentences().iter().map(|s| s.source_index).collect();
    order.shuffle(&mut seeded(seed));
    order
}

pub fn select_random(pool: &Corpus, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {n} of {} pool sentences",
            pool.len()
        )));
    }
    let mut order = random_order(pool, seed);
    order.truncate(n);
    Ok(order)
}

/// Fraction of the first `k` selected sentences that are planted, per `k`.
pub fn precision_at_k(order: &[usize], planted: &BTreeSet<usize>, ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    ks.iter()
        .map(|&k| {
            if k == 0 || k > order.len() {
                return Err(Error::InvalidArgument(format!(
                    "k = {k} outside 1..={} selected sentences",
                    order.len()
                )));
            }
            let hits = order[..k].iter().filter(|i| planted.contains(i)).count();
            Ok((k, hits as f64 / k as f64))
        })
        .collect()
}

fn union_corpus(in_domain: &Corpus, pool: &Corpus, indices: &[usize]) -> Result<Corpus> {
    let mut sentences: Vec<EncodedSentence> = in_domain.sentences().to_vec();
    sentences.extend(pool.subset("selection", indices)?.into_sentences());
    Ok(Corpus::new("augmented", sentences))
}

/// Held-out perplexity of an order-`order` model trained on the in-domain
/// corpus plus the first `n` selected sentences, per `n`.
pub fn proxy_downstream(
    in_domain: &Corpus,
    pool: &Corpus,
    order_of_selection: &[usize],
    sizes: &[usize],
    heldout: &Corpus,
    vocab: Arc<Vocabulary>,
    order: usize,
) -> Result<Vec<(usize, f64)>> {
    sizes
        .iter()
        .map(|&n| {
            if n > order_of_selection.len() {
                return Err(Error::InvalidArgument(format!(
                    "size {n} exceeds {} selected sentences",
                    order_of_selection.len()
                )));
            }
            let train = union_corpus(in_domain, pool, &order_of_selection[..n])?;
            let model = KnModel::train(&train, vocab.clone(), order)?;
            Ok((n, model.corpus_perplexity(heldout)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Random,
    Xent,
    Cnn,
    Blstm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Random, Method::Xent, Method::Cnn, Method::Blstm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Xent => "xent",
            Method::Cnn => "cnn",
            Method::Blstm => "blstm",
        }
    }

    fn stream(self) -> u64 {
        self as u64 + 100
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Everything besides the data that determines an evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    pub r: usize,
    pub xent_order: usize,
    pub xent_pool_data: PoolModelData,
    pub proxy_order: usize,
    pub vocab_min_count: u64,
    pub vocab_max_size: usize,
    /// Selection sizes for both precision and proxy perplexity.
    pub size_grid: Vec<usize>,
    pub cnn: (ClassifierConfig, TrainConfig),
    pub blstm: (ClassifierConfig, TrainConfig),
    /// Score the pool once with the last model instead of using the
    /// iterative emitted order.
    pub rescore_final: bool,
}

fn grid(step: usize, max: usize) -> Vec<usize> {
    (1..=max / step).map(|i| i * step).collect()
}

impl EvalConfig {
    /// Full-size classifiers and optimizer defaults.
    pub fn full(spec: &SyntheticSpec) -> Self {
        let r = 500;
        EvalConfig {
            methods: Method::ALL.to_vec(),
            r,
            xent_order: 3,
            xent_pool_data: PoolModelData::Full,
            proxy_order: 3,
            vocab_min_count: 1,
            vocab_max_size: usize::MAX,
            size_grid: grid(r, (spec.pool_size - spec.in_domain_size) / 2),
            cnn: (
                ClassifierConfig::new(EncoderKind::Cnn),
                TrainConfig::for_encoder(EncoderKind::Cnn, 0),
            ),
            blstm: (
                ClassifierConfig::new(EncoderKind::Blstm),
                TrainConfig::for_encoder(EncoderKind::Blstm, 0),
            ),
            rescore_final: false,
        }
    }

    /// Small classifiers with a short Adam schedule, sized so twenty seeded
    /// runs of every method fit on one CPU core.
    pub fn desk(spec: &SyntheticSpec) -> Self {
        let small = |kind| ClassifierConfig {
            embed_dim: 16,
            cnn_widths: vec![3, 4, 5],
            cnn_feature_maps: 8,
            lstm_units: 8,
            hidden: vec![16, 8],
            max_len: 100,
            ..ClassifierConfig::new(kind)
        };
        let adam = |lr| OptimizerKind::Adam(AdamConfig {
            lr,
            ..AdamConfig::default()
        });
        let cnn_train = TrainConfig {
            optimizer: adam(0.003),
            batch_size: 50,
            max_epochs: 3,
            patience: 1,
            ..TrainConfig::for_encoder(EncoderKind::Cnn, 0)
        };
        let blstm_train = TrainConfig {
            optimizer: adam(0.01),
            batch_size: 50,
            max_epochs: 2,
            patience: 1,
            ..TrainConfig::for_encoder(EncoderKind::Blstm, 0)
        };
        EvalConfig {
            cnn: (small(EncoderKind::Cnn), cnn_train),
            blstm: (small(EncoderKind::Blstm), blstm_train),
            ..EvalConfig::full(spec)
        }
    }

    pub fn canonical(&self) -> String {
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        format!(
            "methods = {}\nr = {}\nxent_order = {}\nxent_pool_data = {:?}\nproxy_order = {}\n\
             vocab_min_count = {}\nvocab_max_size = {}\nsize_grid = {:?}\ncnn = {:?}\nblstm = {:?}\n\
             rescore_final = {}\n",
            methods.join(","),
            self.r,
            self.xent_order,
            self.xent_pool_data,
            self.proxy_order,
            self.vocab_min_count,
            self.vocab_max_size,
            self.size_grid,
            self.cnn,
            self.blstm,
            self.rescore_final
        )
    }
}

/// sha256 over the canonical spec and config text (seed excluded; seeds are
/// listed separately in the report).
pub fn config_digest(spec: &SyntheticSpec, config: &EvalConfig) -> String {
    let spec = SyntheticSpec { seed: 0, ..spec.clone() };
    let mut h = Sha256::new();
    h.update(spec.canonical());
    h.update(config.canonical());
    hex::encode(h.finalize())
}

/// Selection order of one method on one generated data set.
pub fn method_order(
    method: Method,
    data: &SyntheticCorpora,
    vocab: &Arc<Vocabulary>,
    config: &EvalConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    let seed = derive_seed(seed, method.stream());
    match method {
        Method::Random => Ok(random_order(&data.pool, seed)),
        Method::Xent => {
            let pool_data = match config.xent_pool_data {
                PoolModelData::Full => PoolModelData::Full,
                PoolModelData::SizeMatched { .. } => PoolModelData::SizeMatched { seed },
            };
            let models = xent::train_xent_models(&data.in_domain, &data.pool, vocab.clone(), config.xent_order, pool_data)?;
            let scores = xent::score_xent_diff(&models.in_domain, &models.pool, &data.pool)?;
            Ok(rank(scores, true).order())
        }
        Method::Cnn | Method::Blstm => {
            let (model_config, train_config) = if method == Method::Cnn { &config.cnn } else { &config.blstm };
            let mut scorer = ClassifierScorer::new(model_config.clone(), train_config.clone(), vocab.size());
            let state = semisup::run(&data.in_domain, &data.pool, config.r, seed, &mut scorer)?;
            if config.rescore_final {
                let model = scorer
                    .last_model()
                    .ok_or_else(|| Error::InvalidArgument("no iteration was run".into()))?;
                Ok(semisup::rescore_final(model, &data.pool, method.name())?.order())
            } else {
                Ok(state.positives().to_vec())
            }
        }
    }
}

/// Runs every configured method on the data generated for each seed.
pub fn compare_methods(spec: &SyntheticSpec, config: &EvalConfig, seeds: &[u64]) -> Result<EvalReport> {
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for &seed in seeds {
        let spec = SyntheticSpec { seed, ..spec.clone() };
        let text = generate_synthetic(&spec)?;
        let vocab = Arc::new(shared_vocabulary(
            &text.in_domain,
            &text.pool,
            config.vocab_min_count,
            config.vocab_max_size,
            false,
        )?);
        let data = text.encode(&vocab);
        let mut push = |method: &str, metric: &str, points: Vec<(usize, f64)>| {
            rows.extend(points.into_iter().map(|(size, value)| ReportRow {
                method: method.to_string(),
                metric: metric.to_string(),
                seed,
                size,
                value,
            }))
        };

        let all: Vec<usize> = data.pool.sentences().iter().map(|s| s.source_index).collect();
        let proxy = |order: &[usize], sizes: &[usize]| {
            proxy_downstream(&data.in_domain, &data.pool, order, sizes, &data.heldout, vocab.clone(), config.proxy_order)
        };
        push(BASELINE_IN_DOMAIN, METRIC_PERPLEXITY, proxy(&all, &[0])?);
        push(BASELINE_ALL, METRIC_PERPLEXITY, proxy(&all, &[all.len()])?);

        for &method in &config.methods {
            let start = Instant::now();
            let order = method_order(method, &data, &vocab, config, seed)?;
            let select_time = start.elapsed().as_secs_f64();
            push(method.name(), METRIC_PRECISION, precision_at_k(&order, &data.planted, &config.size_grid)?);
            push(method.name(), METRIC_PERPLEXITY, proxy(&order, &config.size_grid)?);
            let total = start.elapsed().as_secs_f64();
            info!("seed {seed}: {} done in {total:.1}s (selection {select_time:.1}s)", method.name());
            timings.push(Timing {
                method: method.name().to_string(),
                seed,
                selection_secs: select_time,
                total_secs: total,
            });
        }
    }
    Ok(EvalReport::new(
        config_digest(spec, config),
        seeds.to_vec(),
        spec.planted_count(),
        rows,
        timings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> Corpus {
        Corpus::new("g", (0..n).map(|i| EncodedSentence::new(vec![4], i)).collect())
    }

    #[test]
    fn random_prefixes_nest() {
        let g = pool(50);
        let a = select_random(&g, 10, 3).unwrap();
        let b = select_random(&g, 30, 3).unwrap();
        assert_eq!(a, b[..10]);
        let mut full = select_random(&g, 50, 3).unwrap();
        full.sort();
        assert_eq!(full, (0..50).collect::<Vec<_>>());
        assert!(select_random(&g, 51, 3).is_err());
    }

    #[test]
    fn precision_edges() {
        let planted: BTreeSet<usize> = [1, 2, 3].into();
        let p = precision_at_k(&[1, 2, 3, 9], &planted, &[3, 4]).unwrap();
        assert_eq!(p, vec![(3, 1.0), (4, 0.75)]);
        let p = precision_at_k(&[1, 2], &BTreeSet::new(), &[2]).unwrap();
        assert_eq!(p, vec![(2, 0.0)]);
    }

    #[test]
    fn digest_tracks_config() {
        let spec = SyntheticSpec::default();
        let cfg = EvalConfig::desk(&spec);
        let d = config_digest(&spec, &cfg);
        assert_eq!(d, config_digest(&spec, &cfg.clone()));
        let changed = EvalConfig { r: 400, ..cfg.clone() };
        assert_ne!(d, config_digest(&spec, &changed));
        let spec2 = SyntheticSpec { planted_fraction: 0.2, ..spec.clone() };
        assert_ne!(d, config_digest(&spec2, &cfg));
    }

    #[test]
    fn default_grid() {
        let spec = SyntheticSpec::default();
        let cfg = EvalConfig::desk(&spec);
        assert_eq!(cfg.size_grid.len(), 18);
        assert_eq!(cfg.size_grid[0], 500);
        assert_eq!(*cfg.size_grid.last().unwrap(), 9000);
    }
}
