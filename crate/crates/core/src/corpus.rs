//! Corpus ingestion: whitespace tokenization, vocabulary construction and
//! integer encoding of sentences.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const NUM_SPECIALS: usize = 4;

pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<unk>", "<s>", "</s>"];

const VOCAB_HEADER: &str = "#domain-sieve-vocab v1";

fn normalize(token: &str, lowercase: bool) -> std::borrow::Cow<'_, str> {
    if lowercase {
        std::borrow::Cow::Owned(token.to_lowercase())
    } else {
        std::borrow::Cow::Borrowed(token)
    }
}

fn is_special_surface(token: &str) -> bool {
    SPECIAL_TOKENS.contains(&token)
}

/// Token/id mapping with four reserved ids (`PAD`, `UNK`, `BOS`, `EOS`).
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    counts: Vec<u64>,
    min_count: u64,
    lowercase: bool,
}

impl Vocabulary {
    fn with_specials(min_count: u64, lowercase: bool) -> Self {
        Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect(),
            counts: vec![0; NUM_SPECIALS],
            min_count,
            lowercase,
        }
    }

    fn push(&mut self, token: String, count: u64) -> u32 {
        let id = self.id_to_token.len() as u32;
        self.token_to_id.insert(token.clone(), id);
        self.id_to_token.push(token);
        self.counts.push(count);
        id
    }

    /// Builds a vocabulary from an explicit token list; ids follow list order
    /// after the specials. Used when reading models that carry their own
    /// vocabulary.
    pub fn from_tokens<I, S>(tokens: I, lowercase: bool) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::with_specials(1, lowercase);
        for token in tokens {
            let token = token.into();
            if is_special_surface(&token) || vocab.token_to_id.contains_key(&token) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate or reserved token {token:?}"
                )));
            }
            vocab.push(token, 0);
        }
        Ok(vocab)
    }

    pub(crate) fn from_parts(
        tokens: Vec<String>,
        counts: Vec<u64>,
        min_count: u64,
        lowercase: bool,
    ) -> Result<Self> {
        let mut vocab = Vocabulary::from_tokens(tokens, lowercase)?;
        if counts.len() != vocab.size() {
            return Err(Error::InvalidArgument("count list does not match tokens".into()));
        }
        vocab.counts = counts;
        vocab.min_count = min_count;
        Ok(vocab)
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    /// Id for an input token after normalization; unknown tokens map to `UNK`.
    pub fn lookup(&self, token: &str) -> u32 {
        self.id(&normalize(token, self.lowercase)).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(SPECIAL_TOKENS[UNK as usize]))
            .collect()
    }

    /// Content hash over the id-ordered token list.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for token in &self.id_to_token {
            hasher.update(token.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// True when both vocabularies assign the same ids to the same tokens.
    pub fn same_mapping(&self, other: &Vocabulary) -> bool {
        self.id_to_token == other.id_to_token && self.lowercase == other.lowercase
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(
            out,
            "{VOCAB_HEADER}\tmin_count={}\tlowercase={}",
            self.min_count, self.lowercase
        )?;
        for (id, token) in self.id_to_token.iter().enumerate() {
            writeln!(out, "{token}\t{id}\t{}", self.counts[id])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::parse(&name, 1, "missing header"))?;
        let mut fields = header.split('\t');
        if fields.next() != Some(VOCAB_HEADER) {
            return Err(Error::parse(&name, 1, "bad vocabulary header"));
        }
        let mut min_count = 1;
        let mut lowercase = false;
        for field in fields {
            match field.split_once('=') {
                Some(("min_count", v)) => {
                    min_count = v
                        .parse()
                        .map_err(|_| Error::parse(&name, 1, "bad min_count"))?
                }
                Some(("lowercase", v)) => {
                    lowercase = v
                        .parse()
                        .map_err(|_| Error::parse(&name, 1, "bad lowercase flag"))?
                }
                _ => return Err(Error::parse(&name, 1, format!("unknown field {field:?}"))),
            }
        }
        let mut vocab = Vocabulary::with_specials(min_count, lowercase);
        for (n, line) in lines.enumerate() {
            let line = line?;
            let lineno = n + 2;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(&name, lineno, "expected token<TAB>id<TAB>count"));
            }
            let id: usize = cols[1]
                .parse()
                .map_err(|_| Error::parse(&name, lineno, "bad id"))?;
            let count: u64 = cols[2]
                .parse()
                .map_err(|_| Error::parse(&name, lineno, "bad count"))?;
            if id < NUM_SPECIALS {
                if cols[0] != SPECIAL_TOKENS[id] {
                    return Err(Error::parse(&name, lineno, "special id with wrong token"));
                }
                vocab.counts[id] = count;
                continue;
            }
            if id != vocab.size() {
                return Err(Error::parse(&name, lineno, "ids must be dense and in order"));
            }
            if is_special_surface(cols[0]) || vocab.token_to_id.contains_key(cols[0]) {
                return Err(Error::parse(&name, lineno, "duplicate token"));
            }
            vocab.push(cols[0].to_string(), count);
        }
        Ok(vocab)
    }
}

/// Counts whitespace tokens and keeps those seen at least `min_count` times.
///
/// When more than `max_size - 4` tokens qualify, the most frequent win and
/// count ties go to the lexicographically smaller token.
pub fn build_vocabulary<I, S>(
    lines: I,
    min_count: u64,
    max_size: usize,
    lowercase: bool,
) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if min_count < 1 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    if max_size < NUM_SPECIALS + 1 {
        return Err(Error::InvalidArgument("max_size must be >= 5".into()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut saw_line = false;
    for line in lines {
        saw_line = true;
        for token in line.as_ref().split_whitespace() {
            let token = normalize(token, lowercase);
            if is_special_surface(&token) {
                continue;
            }
            *counts.entry(token.into_owned()).or_insert(0) += 1;
        }
    }
    if !saw_line {
        return Err(Error::EmptyCorpus);
    }
    let mut kept: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    kept.truncate(max_size - NUM_SPECIALS);
    let mut vocab = Vocabulary::with_specials(min_count, lowercase);
    for (token, count) in kept {
        vocab.push(token, count);
    }
    Ok(vocab)
}

/// A sentence as token ids; BOS/EOS are implied, never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedSentence {
    pub ids: Vec<u32>,
    /// 0-based line number in the originating file.
    pub source_index: usize,
}

impl EncodedSentence {
    pub fn new(ids: Vec<u32>, source_index: usize) -> Self {
        EncodedSentence { ids, source_index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusStats {
    /// |S|
    pub sentences: usize,
    /// |W|, UNK occurrences included.
    pub tokens: usize,
    /// |V|, distinct ordinary ids observed (specials excluded).
    pub types: usize,
}

/// Named collection of encoded sentences with cached statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    sentences: Vec<EncodedSentence>,
    stats: CorpusStats,
}

impl Corpus {
    pub fn new(name: impl Into<String>, sentences: Vec<EncodedSentence>) -> Self {
        let stats = compute_stats(&sentences);
        Corpus {
            name: name.into(),
            sentences,
            stats,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sentences(&self) -> &[EncodedSentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        self.stats
    }

    /// Looks a sentence up by its original line number.
    pub fn by_source_index(&self, source_index: usize) -> Option<&EncodedSentence> {
        self.sentences
            .binary_search_by_key(&source_index, |s| s.source_index)
            .ok()
            .map(|i| &self.sentences[i])
    }

    /// Sub-corpus holding the given source indices, in the given order.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Result<Corpus> {
        let sentences = indices
            .iter()
            .map(|&i| {
                self.by_source_index(i).cloned().ok_or_else(|| {
                    Error::InvalidArgument(format!("source index {i} not in corpus {}", self.name))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus::new(name, sentences))
    }

    pub fn into_sentences(self) -> Vec<EncodedSentence> {
        self.sentences
    }
}

fn compute_stats(sentences: &[EncodedSentence]) -> CorpusStats {
    let mut seen = std::collections::HashSet::new();
    let mut tokens = 0;
    for s in sentences {
        tokens += s.len();
        seen.extend(s.ids.iter().copied().filter(|&id| id as usize >= NUM_SPECIALS));
    }
    CorpusStats {
        sentences: sentences.len(),
        tokens,
        types: seen.len(),
    }
}

/// `(|S|, |W|, |V|)` of a corpus.
pub fn corpus_stats(corpus: &Corpus) -> (usize, usize, usize) {
    let s = corpus.stats();
    (s.sentences, s.tokens, s.types)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EncodeOptions {
    /// Lines with more tokens than this are skipped like empty lines.
    pub max_tokens: Option<usize>,
}

fn encode_line(line: &str, vocab: &Vocabulary) -> Vec<u32> {
    line.split_whitespace().map(|t| vocab.lookup(t)).collect()
}

/// Encodes one sentence per line. Empty lines (and over-long lines when a
/// limit is set) are skipped, leaving a gap in `source_index`.
pub fn encode_corpus<S>(
    name: impl Into<String>,
    lines: &[S],
    vocab: &Vocabulary,
    opts: EncodeOptions,
) -> Corpus
where
    S: AsRef<str> + Sync,
{
    let name = name.into();
    let encoded: Vec<Option<EncodedSentence>> = lines
        .par_iter()
        .enumerate()
        .map(|(i, line)| {
            let ids = encode_line(line.as_ref(), vocab);
            let too_long = opts.max_tokens.is_some_and(|m| ids.len() > m);
            (!ids.is_empty() && !too_long).then(|| EncodedSentence::new(ids, i))
        })
        .collect();
    let skipped = encoded.iter().filter(|s| s.is_none()).count();
    if skipped > 0 {
        log::warn!("{name}: skipped {skipped} empty or filtered line(s)");
    }
    Corpus::new(name, encoded.into_iter().flatten().collect())
}

pub fn read_lines(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let reader = BufReader::new(File::open(path)?);
    reader.lines().map(|l| l.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab_of(lines: &[&str], min_count: u64) -> Vocabulary {
        build_vocabulary(lines.iter(), min_count, 1000, false).unwrap()
    }

    #[test]
    fn counts_and_specials() {
        let v = vocab_of(&["a b a"], 1);
        assert_eq!(v.size(), 6);
        assert_eq!(&v.tokens()[..4], &SPECIAL_TOKENS);
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id("b"), Some(5));
        assert_eq!(v.count(4), 2);
    }

    #[test]
    fn min_count_threshold() {
        let v = vocab_of(&["a b a"], 2);
        assert!(v.id("a").is_some());
        assert!(v.id("b").is_none());
    }

    #[test]
    fn max_size_breaks_ties_lexicographically() {
        let v = build_vocabulary(["c b a d d"], 1, 6, false).unwrap();
        assert_eq!(v.size(), 6);
        assert_eq!(v.id("d"), Some(4));
        assert_eq!(v.id("a"), Some(5));
        assert!(v.id("b").is_none());
    }

    #[test]
    fn empty_stream_is_error() {
        let lines: [&str; 0] = [];
        assert!(matches!(
            build_vocabulary(lines, 1, 10, false),
            Err(Error::EmptyCorpus)
        ));
        assert!(build_vocabulary(["a"], 0, 10, false).is_err());
        assert!(build_vocabulary(["a"], 1, 4, false).is_err());
    }

    #[test]
    fn reserved_surfaces_never_become_tokens() {
        let v = vocab_of(&["<s> x </s> <unk>"], 1);
        assert_eq!(v.size(), 5);
        let c = encode_corpus("t", &["<s> x"], &v, EncodeOptions::default());
        assert_eq!(c.sentences()[0].ids, vec![UNK, 4]);
    }

    #[test]
    fn encode_with_oov() {
        let v = vocab_of(&["a b"], 1);
        let c = encode_corpus("t", &["a b", "a z"], &v, EncodeOptions::default());
        assert_eq!(c.sentences()[0].ids, vec![4, 5]);
        assert_eq!(c.sentences()[1].ids, vec![4, UNK]);
    }

    #[test]
    fn empty_lines_leave_index_gaps() {
        let v = vocab_of(&["a b"], 1);
        let c = encode_corpus("t", &["a", "   ", "", "b a"], &v, EncodeOptions::default());
        let idx: Vec<usize> = c.sentences().iter().map(|s| s.source_index).collect();
        assert_eq!(idx, vec![0, 3]);
        assert!(c.sentences().iter().all(|s| s.len() >= 1));
    }

    #[test]
    fn length_filter() {
        let v = vocab_of(&["a b"], 1);
        let opts = EncodeOptions { max_tokens: Some(2) };
        let c = encode_corpus("t", &["a b a", "a b"], &v, opts);
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentences()[0].source_index, 1);
    }

    #[test]
    fn decode_round_trip() {
        let v = vocab_of(&["the cat sat"], 1);
        let c = encode_corpus("t", &["sat  the\tcat"], &v, EncodeOptions::default());
        assert_eq!(v.decode(&c.sentences()[0].ids), vec!["sat", "the", "cat"]);
    }

    #[test]
    fn lowercase_flag() {
        let v = build_vocabulary(["A a"], 1, 10, true).unwrap();
        assert_eq!(v.size(), 5);
        assert_eq!(v.lookup("A"), v.lookup("a"));
    }

    #[test]
    fn stats() {
        let v = vocab_of(&["a b"], 1);
        let empty = Corpus::new("e", vec![]);
        assert_eq!(corpus_stats(&empty), (0, 0, 0));
        let c = encode_corpus("t", &["a b", "a"], &v, EncodeOptions::default());
        assert_eq!(corpus_stats(&c), (2, 3, 2));
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = build_vocabulary(["x y y z z z"], 1, 100, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.tsv");
        v.write_tsv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("#domain-sieve-vocab v1"));
        assert!(text.contains("z\t4\t3\n"));
        let back = Vocabulary::read_tsv(&path).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn vocab_file_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.tsv");
        std::fs::write(&path, "#domain-sieve-vocab v1\n<pad>\t0\t0\nfoo\t9\t1\n").unwrap();
        match Vocabulary::read_tsv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn subset_by_source_index() {
        let v = vocab_of(&["a b"], 1);
        let c = encode_corpus("t", &["a", "", "b", "a b"], &v, EncodeOptions::default());
        let s = c.subset("s", &[3, 0]).unwrap();
        assert_eq!(s.sentences()[0].source_index, 3);
        assert!(c.subset("s", &[1]).is_err());
    }
}
