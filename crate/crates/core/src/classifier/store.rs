//! Classifier checkpoints: parameters in the binary parameter format plus a
//! `key = value` manifest alongside (`<path>.manifest`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::model::{ClassifierConfig, ClassifierModel};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::nn::checkpoint;

const MANIFEST_HEADER: &str = "#domain-sieve-classifier v1";

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn manifest(model: &ClassifierModel, vocab: &Vocabulary) -> String {
    let c = model.config();
    let mut s = String::from(MANIFEST_HEADER);
    s.push('\n');
    let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
    kv("encoder", c.encoder.name().to_string());
    kv("embed_dim", c.embed_dim.to_string());
    kv("cnn_widths", join(&c.cnn_widths));
    kv("cnn_feature_maps", c.cnn_feature_maps.to_string());
    kv("lstm_units", c.lstm_units.to_string());
    kv("hidden", join(&c.hidden));
    kv("max_len", c.max_len.to_string());
    kv("init_scale", c.init_scale.to_string());
    kv("vocab_size", model.vocab_size().to_string());
    kv("vocab_digest", vocab.digest());
    kv("parameters", model.num_parameters().to_string());
    s
}

pub fn save(model: &ClassifierModel, vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if vocab.size() != model.vocab_size() {
        return Err(Error::VocabMismatch("vocabulary does not match model".into()));
    }
    checkpoint::save(model.params(), path)?;
    std::fs::write(manifest_path(path), manifest(model, vocab))?;
    Ok(())
}

fn parse_list(v: &str) -> std::result::Result<Vec<usize>, std::num::ParseIntError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| x.trim().parse()).collect()
}

/// Loads a checkpoint written by [`save`]; the vocabulary must be the one
/// the model was trained with.
pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<ClassifierModel> {
    let path = path.as_ref();
    let mpath = manifest_path(path);
    let display = mpath.display().to_string();
    let text = std::fs::read_to_string(&mpath)?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::parse(&display, 1, "missing classifier manifest header"));
    }
    let mut kv = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(&display, n + 2, "expected key = value"))?;
        kv.insert(k.trim().to_string(), (n + 2, v.trim().to_string()));
    }
    let get = |k: &str| {
        kv.get(k)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::parse(&display, 0, format!("missing key {k}")))
    };
    let bad = |k: &str, e: String| {
        let line = kv.get(k).map_or(0, |(l, _)| *l);
        Error::parse(&display, line, format!("{k}: {e}"))
    };
    let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|e: std::num::ParseIntError| bad(k, e.to_string())) };
    let list = |k: &str| -> Result<Vec<usize>> { parse_list(get(k)?).map_err(|e| bad(k, e.to_string())) };

    let config = ClassifierConfig {
        encoder: get("encoder")?.parse()?,
        embed_dim: num("embed_dim")?,
        cnn_widths: list("cnn_widths")?,
        cnn_feature_maps: num("cnn_feature_maps")?,
        lstm_units: num("lstm_units")?,
        hidden: list("hidden")?,
        max_len: num("max_len")?,
        init_scale: get("init_scale")?
            .parse()
            .map_err(|e: std::num::ParseFloatError| bad("init_scale", e.to_string()))?,
    };
    let vocab_size = num("vocab_size")?;
    if get("vocab_digest")? != vocab.digest() || vocab_size != vocab.size() {
        return Err(Error::VocabMismatch(format!(
            "{} was trained with a different vocabulary",
            path.display()
        )));
    }
    let mut model = ClassifierModel::new(config, vocab_size, 0)?;
    model.set_params(checkpoint::load(path)?)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::EncoderKind;

    #[test]
    fn round_trip() {
        let vocab = Vocabulary::from_tokens(["a", "b", "c"], false).unwrap();
        for kind in [EncoderKind::Cnn, EncoderKind::Blstm] {
            let cfg = ClassifierConfig {
                embed_dim: 3,
                cnn_feature_maps: 2,
                lstm_units: 2,
                hidden: vec![3],
                ..ClassifierConfig::new(kind)
            };
            let m = ClassifierModel::new(cfg, vocab.size(), 9).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("clf.bin");
            save(&m, &vocab, &p).unwrap();
            let back = load(&p, &vocab).unwrap();
            assert_eq!(back, m);
            let other = Vocabulary::from_tokens(["a", "b", "d"], false).unwrap();
            assert!(matches!(load(&p, &other), Err(Error::VocabMismatch(_))));
        }
    }
}
