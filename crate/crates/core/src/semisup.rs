//! Iterative semi-supervised selection. Starting from the in-domain corpus
//! as positives and a random pool sample as negatives, each iteration trains
//! a classifier, moves the `r` best-scoring pool sentences to the positives
//! and the `r` worst to the negatives, until the pool is empty.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::info;
use rand::seq::index::sample;

use crate::classifier::{train_on, ClassifierConfig, ClassifierModel, TrainConfig, TrainHistory};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::xent::{rank, Ranking, ScoredSentence};

const CHECKPOINT_HEADER: &str = "#domain-sieve-semisup v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn code(self) -> &'static str {
        match self {
            Label::Positive => "P",
            Label::Negative => "N",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "P" => Some(Label::Positive),
            "N" => Some(Label::Negative),
            _ => None,
        }
    }
}

/// One pool sentence leaving the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Emitted {
    pub iteration: usize,
    pub rank: usize,
    pub source_index: usize,
    pub score: f64,
    pub label: Label,
}

/// Partition of the pool during selection. The in-domain corpus is part of
/// the positives implicitly; `positives()` lists only pool sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionState {
    iteration: usize,
    in_domain: usize,
    r: usize,
    seed: u64,
    initial_negatives: Vec<usize>,
    positives: Vec<usize>,
    negatives: Vec<usize>,
    pool: BTreeSet<usize>,
    emitted: Vec<Emitted>,
}

impl SelectionState {
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn in_domain_size(&self) -> usize {
        self.in_domain
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Pool sentences selected as positives, in emitted order.
    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    /// Pool sentences used as negatives: the initial sample, then each
    /// iteration's bottom sentences.
    pub fn negatives(&self) -> &[usize] {
        &self.negatives
    }

    pub fn initial_negatives(&self) -> &[usize] {
        &self.initial_negatives
    }

    pub fn pool(&self) -> &BTreeSet<usize> {
        &self.pool
    }

    pub fn emitted(&self) -> &[Emitted] {
        &self.emitted
    }

    /// `|P_i|`, counting the in-domain corpus.
    pub fn num_positives(&self) -> usize {
        self.in_domain + self.positives.len()
    }

    pub fn num_negatives(&self) -> usize {
        self.negatives.len()
    }

    pub fn is_done(&self) -> bool {
        self.pool.is_empty()
    }
}

/// Iterations needed to exhaust a pool of `pool` sentences with `in_domain`
/// initial negatives.
pub fn expected_iterations(in_domain: usize, pool: usize, r: usize) -> usize {
    (pool - in_domain).div_ceil(2 * r)
}

fn check_sizes(in_domain: usize, pool: usize, r: usize) -> Result<()> {
    if in_domain == 0 {
        return Err(Error::EmptyCorpus);
    }
    if pool <= in_domain {
        return Err(Error::PoolTooSmall);
    }
    if r == 0 {
        return Err(Error::InvalidArgument("r must be >= 1".into()));
    }
    Ok(())
}

/// Initial state: all of `in_domain` positive, a seeded sample of
/// `|in_domain|` pool sentences negative.
pub fn init_state(in_domain: &Corpus, pool: &Corpus, r: usize, seed: u64) -> Result<SelectionState> {
    let indices: Vec<usize> = pool.sentences().iter().map(|s| s.source_index).collect();
    init_state_from_indices(in_domain.len(), &indices, r, seed)
}

/// [`init_state`] over bare pool source indices.
pub fn init_state_from_indices(in_domain: usize, pool: &[usize], r: usize, seed: u64) -> Result<SelectionState> {
    check_sizes(in_domain, pool.len(), r)?;
    let mut rng = seeded(seed);
    let negatives: Vec<usize> = sample(&mut rng, pool.len(), in_domain)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let mut rest: BTreeSet<usize> = pool.iter().copied().collect();
    if rest.len() != pool.len() {
        return Err(Error::InvalidArgument("duplicate source index in pool".into()));
    }
    for n in &negatives {
        rest.remove(n);
    }
    Ok(SelectionState {
        iteration: 0,
        in_domain,
        r,
        seed,
        initial_negatives: negatives.clone(),
        positives: Vec::new(),
        negatives,
        pool: rest,
        emitted: Vec::new(),
    })
}

/// Moves the extremes of the scored pool into the positive and negative
/// sets. `scores` must cover exactly the current pool.
pub fn iterate(state: &mut SelectionState, scores: &[(usize, f64)]) -> Result<()> {
    if state.pool.is_empty() {
        return Err(Error::InvalidArgument("pool already exhausted".into()));
    }
    if scores.len() != state.pool.len() {
        return Err(Error::ScoreMismatch(format!(
            "{} scores for a pool of {}",
            scores.len(),
            state.pool.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for &(idx, s) in scores {
        if !state.pool.contains(&idx) || !seen.insert(idx) {
            return Err(Error::ScoreMismatch(format!("source index {idx} not in pool or repeated")));
        }
        if s.is_nan() {
            return Err(Error::ScoreMismatch(format!("score for {idx} is NaN")));
        }
    }

    let mut by_best: Vec<(usize, f64)> = scores.to_vec();
    by_best.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let n = by_best.len();
    let r = state.r;
    let (top, bottom): (Vec<(usize, f64)>, Vec<(usize, f64)>) = if n <= 2 * r {
        let k = n.div_ceil(2);
        let bottom = by_best.split_off(k);
        (by_best, bottom)
    } else {
        let top = by_best[..r].to_vec();
        let mut rest = by_best[r..].to_vec();
        rest.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        rest.truncate(r);
        (top, rest)
    };
    let mut bottom = bottom;
    bottom.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let it = state.iteration;
    for (items, label) in [(&top, Label::Positive), (&bottom, Label::Negative)] {
        for (rank, &(idx, score)) in items.iter().enumerate() {
            state.pool.remove(&idx);
            match label {
                Label::Positive => state.positives.push(idx),
                Label::Negative => state.negatives.push(idx),
            }
            state.emitted.push(Emitted {
                iteration: it,
                rank,
                source_index: idx,
                score,
                label,
            });
        }
    }
    state.iteration += 1;
    Ok(())
}

/// First `n` selected pool sentences (iteration-major, then rank).
pub fn selection_prefix(state: &SelectionState, n: usize) -> Result<Vec<usize>> {
    if n > state.positives.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot take {n} of {} selected sentences",
            state.positives.len()
        )));
    }
    Ok(state.positives[..n].to_vec())
}

/// Training data and pool handed to a scorer at one iteration.
pub struct IterationInput<'a> {
    pub iteration: usize,
    /// Seed for this iteration, derived from the run seed.
    pub seed: u64,
    pub positives: Vec<&'a [u32]>,
    pub negatives: Vec<&'a [u32]>,
    pub pool_indices: Vec<usize>,
    pub pool: Vec<&'a [u32]>,
}

/// Produces `p(in-domain)` for every pool sentence given the current
/// labelled sets.
pub trait PoolScorer {
    fn score(&mut self, input: &IterationInput<'_>) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub positives: usize,
    pub negatives: usize,
    pub pool: usize,
    pub history: TrainHistory,
}

/// Trains a fresh classifier each iteration (or continues from the
/// previous one with `warm_start`) and scores the pool with it.
pub struct ClassifierScorer {
    pub model_config: ClassifierConfig,
    pub train_config: TrainConfig,
    pub vocab_size: usize,
    pub warm_start: bool,
    pub predict_batch: usize,
    pub logs: Vec<IterationLog>,
    last: Option<ClassifierModel>,
}

impl ClassifierScorer {
    pub fn new(model_config: ClassifierConfig, train_config: TrainConfig, vocab_size: usize) -> Self {
        ClassifierScorer {
            model_config,
            train_config,
            vocab_size,
            warm_start: false,
            predict_batch: 256,
            logs: Vec::new(),
            last: None,
        }
    }

    /// Model trained in the latest iteration.
    pub fn last_model(&self) -> Option<&ClassifierModel> {
        self.last.as_ref()
    }
}

impl PoolScorer for ClassifierScorer {
    fn score(&mut self, input: &IterationInput<'_>) -> Result<Vec<f64>> {
        let mut model = match (self.warm_start, self.last.take()) {
            (true, Some(m)) => m,
            _ => ClassifierModel::new(self.model_config.clone(), self.vocab_size, input.seed)?,
        };
        let cfg = TrainConfig {
            seed: input.seed,
            ..self.train_config.clone()
        };
        let history = train_on(&mut model, &input.positives, &input.negatives, &cfg)?;
        let scores = model.predict(&input.pool, self.predict_batch)?;
        info!(
            "iteration {}: |P|={} |N|={} |G|={} best epoch {} validation loss {:?}",
            input.iteration,
            input.positives.len(),
            input.negatives.len(),
            input.pool.len(),
            history.best_epoch,
            history.epochs.get(history.best_epoch.saturating_sub(1)).and_then(|e| e.validation_loss)
        );
        self.logs.push(IterationLog {
            iteration: input.iteration,
            positives: input.positives.len(),
            negatives: input.negatives.len(),
            pool: input.pool.len(),
            history,
        });
        self.last = Some(model);
        Ok(scores)
    }
}

/// Runs selection to exhaustion from a fresh state.
pub fn run(
    in_domain: &Corpus,
    pool: &Corpus,
    r: usize,
    seed: u64,
    scorer: &mut dyn PoolScorer,
) -> Result<SelectionState> {
    let state = init_state(in_domain, pool, r, seed)?;
    resume(state, in_domain, pool, scorer, None)
}

/// Continues a selection until the pool is empty, optionally writing a
/// checkpoint after every iteration.
pub fn resume(
    mut state: SelectionState,
    in_domain: &Corpus,
    pool: &Corpus,
    scorer: &mut dyn PoolScorer,
    checkpoint: Option<&Path>,
) -> Result<SelectionState> {
    if in_domain.len() != state.in_domain {
        return Err(Error::InvalidArgument(format!(
            "state expects {} in-domain sentences, corpus has {}",
            state.in_domain,
            in_domain.len()
        )));
    }
    let by_index: HashMap<usize, &[u32]> = pool
        .sentences()
        .iter()
        .map(|s| (s.source_index, s.ids.as_slice()))
        .collect();
    let lookup = |idx: &usize| {
        by_index
            .get(idx)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("source index {idx} not in pool corpus")))
    };
    while !state.is_done() {
        let positives: Vec<&[u32]> = in_domain
            .sentences()
            .iter()
            .map(|s| s.ids.as_slice())
            .chain(state.positives.iter().map(&lookup).collect::<Result<Vec<_>>>()?)
            .collect();
        let negatives = state.negatives.iter().map(&lookup).collect::<Result<Vec<_>>>()?;
        let pool_indices: Vec<usize> = state.pool.iter().copied().collect();
        let pool_ids = pool_indices.iter().map(&lookup).collect::<Result<Vec<_>>>()?;
        let input = IterationInput {
            iteration: state.iteration,
            seed: derive_seed(state.seed, state.iteration as u64 + 1),
            positives,
            negatives,
            pool_indices,
            pool: pool_ids,
        };
        let scores = scorer.score(&input)?;
        if scores.len() != input.pool_indices.len() {
            return Err(Error::ScoreMismatch(format!(
                "scorer returned {} scores for {} sentences",
                scores.len(),
                input.pool_indices.len()
            )));
        }
        let pairs: Vec<(usize, f64)> = input.pool_indices.iter().copied().zip(scores).collect();
        iterate(&mut state, &pairs)?;
        if let Some(path) = checkpoint {
            save_checkpoint(&state, path)?;
        }
    }
    Ok(state)
}

/// Alternative selection: one model scores the whole pool and sentences are
/// ranked by descending `p(in-domain)`.
pub fn rescore_final(model: &ClassifierModel, pool: &Corpus, method: &str) -> Result<Ranking> {
    let ids: Vec<&[u32]> = pool.sentences().iter().map(|s| s.ids.as_slice()).collect();
    let p = model.predict(&ids, 256)?;
    let scores = pool
        .sentences()
        .iter()
        .zip(p)
        .map(|(s, score)| ScoredSentence {
            source_index: s.source_index,
            score,
            method: method.to_string(),
        })
        .collect();
    Ok(rank(scores, false))
}

fn emitted_line(e: &Emitted) -> String {
    format!("{}\t{}\t{}\t{}\t{}", e.iteration, e.rank, e.source_index, e.score, e.label.code())
}

/// TSV of the emitted order: `iteration rank source_index score label`.
pub fn write_emitted_tsv(state: &SelectionState, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iteration\trank\tsource_index\tscore\tlabel")?;
    for e in &state.emitted {
        writeln!(w, "{}", emitted_line(e))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_emitted(fields: &[&str], path: &str, line: usize) -> Result<Emitted> {
    let err = |m: &str| Error::parse(path, line, m);
    if fields.len() != 5 {
        return Err(err("expected 5 tab-separated fields"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| err(&e.to_string()));
    Ok(Emitted {
        iteration: num(fields[0])?,
        rank: num(fields[1])?,
        source_index: num(fields[2])?,
        score: fields[3].parse().map_err(|_| err("bad score"))?,
        label: Label::parse(fields[4]).ok_or_else(|| err("label must be P or N"))?,
    })
}

pub fn read_emitted_tsv(path: impl AsRef<Path>) -> Result<Vec<Emitted>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut out = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if n == 0 && line.starts_with("iteration\t") {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        out.push(parse_emitted(&fields, &display, n + 1)?);
    }
    Ok(out)
}

/// Versioned text checkpoint holding everything needed to resume.
pub fn checkpoint_string(state: &SelectionState) -> String {
    let mut s = String::new();
    writeln!(s, "{CHECKPOINT_HEADER}").unwrap();
    writeln!(s, "in_domain = {}", state.in_domain).unwrap();
    writeln!(s, "r = {}", state.r).unwrap();
    writeln!(s, "seed = {}", state.seed).unwrap();
    writeln!(s, "iteration = {}", state.iteration).unwrap();
    for n in &state.initial_negatives {
        writeln!(s, "n0\t{n}").unwrap();
    }
    for e in &state.emitted {
        writeln!(s, "e\t{}", emitted_line(e)).unwrap();
    }
    s
}

pub fn save_checkpoint(state: &SelectionState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, checkpoint_string(state))?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Restores a checkpoint against the pool it was created from.
pub fn load_checkpoint(path: impl AsRef<Path>, pool: &Corpus) -> Result<SelectionState> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, CHECKPOINT_HEADER)) => {}
        Some((_, other)) if other.starts_with("#domain-sieve-semisup") => {
            return Err(Error::Format(format!("unsupported checkpoint version {other:?}")))
        }
        _ => return Err(Error::parse(&display, 1, "missing selection checkpoint header")),
    }
    let mut kv = HashMap::new();
    let mut initial = Vec::new();
    let mut emitted = Vec::new();
    for (n, line) in lines {
        let ln = n + 1;
        if let Some(rest) = line.strip_prefix("n0\t") {
            initial.push(rest.parse::<usize>().map_err(|e| Error::parse(&display, ln, e.to_string()))?);
        } else if let Some(rest) = line.strip_prefix("e\t") {
            let fields: Vec<&str> = rest.split('\t').collect();
            emitted.push(parse_emitted(&fields, &display, ln)?);
        } else if let Some((k, v)) = line.split_once('=') {
            let v: u64 = v.trim().parse().map_err(|_| Error::parse(&display, ln, format!("bad value for {}", k.trim())))?;
            kv.insert(k.trim().to_string(), v);
        } else if !line.trim().is_empty() {
            return Err(Error::parse(&display, ln, "unrecognized line"));
        }
    }
    let get = |k: &str| {
        kv.get(k)
            .copied()
            .ok_or_else(|| Error::parse(&display, 0, format!("missing key {k}")))
    };
    let in_domain = get("in_domain")? as usize;
    let indices: Vec<usize> = pool.sentences().iter().map(|s| s.source_index).collect();
    let mut state = init_state_from_indices(in_domain, &indices, get("r")? as usize, get("seed")?)?;
    if state.initial_negatives != initial {
        return Err(Error::Format("checkpoint does not match this pool and seed".into()));
    }
    let iterations = get("iteration")? as usize;
    for e in emitted {
        if e.iteration >= iterations
            || !state.pool.remove(&e.source_index)
        {
            return Err(Error::Format(format!(
                "checkpoint entry for source index {} is inconsistent",
                e.source_index
            )));
        }
        match e.label {
            Label::Positive => state.positives.push(e.source_index),
            Label::Negative => state.negatives.push(e.source_index),
        }
        state.emitted.push(e);
    }
    state.iteration = iterations;
    Ok(state)
}
