//! ARPA text serialization. log10 in the file, nats in memory.
//!
//! Lines before `\data\` starting with `# ` carry model metadata (order,
//! casing flag, discounts, warnings) so that export -> import -> export is a
//! fixed point. Foreign files without them load with defaults.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::counts::GramTable;
use super::kn::{validate, Discounts, Entry, KnModel};
use crate::corpus::{Vocabulary, SPECIAL_TOKENS, UNK};
use crate::error::{Error, Result};

const LN_10: f64 = std::f64::consts::LN_10;
const NO_PROB: &str = "-99";
const MAGIC_LINE: &str = "# domain-sieve kn-lm v1";

fn fmt_log10(nats: f64) -> String {
    format!("{:.10}", nats / LN_10)
}

pub fn to_arpa_string(model: &KnModel) -> String {
    let mut out = String::new();
    let vocab = &model.vocab;
    let _ = writeln!(out, "{MAGIC_LINE}");
    let _ = writeln!(
        out,
        "# order={} lowercase={} vocab_digest={}",
        model.order,
        vocab.lowercase(),
        vocab.digest()
    );
    for (o, d) in model.discounts.iter().enumerate() {
        let _ = writeln!(
            out,
            "# discount order={} d1={} d2={} d3plus={}",
            o + 1,
            d.d1,
            d.d2,
            d.d3plus
        );
    }
    for w in &model.warnings {
        let _ = writeln!(out, "# warning {w}");
    }
    for m in &model.meta {
        let _ = writeln!(out, "# meta {m}");
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "\\data\\");
    for (o, t) in model.tables.iter().enumerate() {
        let _ = writeln!(out, "ngram {}={}", o + 1, t.len());
    }
    for (o, t) in model.tables.iter().enumerate() {
        let _ = writeln!(out);
        let _ = writeln!(out, "\\{}-grams:", o + 1);
        for (key, e) in t.iter() {
            match e.log_prob {
                Some(p) => out.push_str(&fmt_log10(p)),
                None => out.push_str(NO_PROB),
            }
            out.push('\t');
            for (i, &id) in key.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(vocab.token(id).expect("ids are in vocabulary"));
            }
            if let Some(bo) = e.log_backoff {
                out.push('\t');
                out.push_str(&fmt_log10(bo));
            }
            out.push('\n');
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "\\end\\");
    out
}

pub fn export_arpa(model: &KnModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_arpa_string(model))?;
    Ok(())
}

pub fn import_arpa(path: impl AsRef<Path>) -> Result<KnModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_arpa(&text, &path.display().to_string())
}

struct RawGram {
    tokens: Vec<String>,
    log_prob: Option<f64>,
    log_backoff: Option<f64>,
}

fn parse_log10(field: &str, name: &str, lineno: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(name, lineno, format!("bad number {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(name, lineno, "non-finite value"));
    }
    Ok(v * LN_10)
}

pub fn parse_arpa(text: &str, name: &str) -> Result<KnModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut lowercase = false;
    let mut discounts: Vec<(usize, Discounts)> = Vec::new();
    let mut warnings = Vec::new();
    let mut meta = Vec::new();

    // Preamble.
    loop {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::parse(name, 0, "missing \\data\\ section"))?;
        let trimmed = line.trim();
        if trimmed == "\\data\\" {
            break;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some(w) = rest.strip_prefix("warning ") {
                warnings.push(w.to_string());
            } else if let Some(m) = rest.strip_prefix("meta ") {
                meta.push(m.to_string());
            } else if let Some(d) = rest.strip_prefix("discount ") {
                discounts.push(parse_discount_line(d, name, lineno)?);
            } else if rest.starts_with("order=") {
                for kv in rest.split_whitespace() {
                    if let Some(v) = kv.strip_prefix("lowercase=") {
                        lowercase = v
                            .parse()
                            .map_err(|_| Error::parse(name, lineno, "bad lowercase flag"))?;
                    }
                }
            }
        }
    }

    // Counts.
    let mut declared: Vec<usize> = Vec::new();
    let mut pending = None;
    for (lineno, line) in lines.by_ref() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("ngram ") {
            let (o, n) = rest
                .split_once('=')
                .ok_or_else(|| Error::parse(name, lineno, "expected ngram N=count"))?;
            let o: usize = o
                .trim()
                .parse()
                .map_err(|_| Error::parse(name, lineno, "bad order"))?;
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::parse(name, lineno, "bad count"))?;
            if o != declared.len() + 1 {
                return Err(Error::parse(name, lineno, "orders must be declared in sequence"));
            }
            declared.push(n);
        } else {
            pending = Some((lineno, trimmed));
            break;
        }
    }
    if declared.is_empty() {
        return Err(Error::parse(name, 0, "no ngram counts in \\data\\ section"));
    }
    let order = declared.len();

    // Sections.
    let mut sections: Vec<Vec<RawGram>> = Vec::with_capacity(order);
    let mut current: Option<usize> = None;
    let mut section_start = 0;
    let mut ended = false;
    let mut next = pending;
    loop {
        let (lineno, line) = match next.take() {
            Some(x) => x,
            None => match lines.next() {
                Some((n, l)) => (n, l.trim()),
                None => break,
            },
        };
        if line.is_empty() {
            continue;
        }
        if line == "\\end\\" {
            ended = true;
            break;
        }
        if let Some(o) = line
            .strip_prefix('\\')
            .and_then(|l| l.strip_suffix("-grams:"))
        {
            let o: usize = o
                .parse()
                .map_err(|_| Error::parse(name, lineno, "bad section header"))?;
            if let Some(c) = current {
                check_section(name, section_start, c, &sections, &declared)?;
            }
            if o != sections.len() + 1 || o > order {
                return Err(Error::parse(name, lineno, format!("unexpected section {o}-grams")));
            }
            sections.push(Vec::new());
            current = Some(o);
            section_start = lineno;
            continue;
        }
        let o = current.ok_or_else(|| Error::parse(name, lineno, "n-gram outside a section"))?;
        let (prob_field, tokens, bo_field) = if line.contains('\t') {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 && cols.len() != 3 {
                return Err(Error::parse(name, lineno, "wrong number of fields"));
            }
            let tokens: Vec<String> = cols[1].split(' ').map(str::to_string).collect();
            (cols[0], tokens, cols.get(2).copied())
        } else {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != o + 1 && cols.len() != o + 2 {
                return Err(Error::parse(name, lineno, "wrong number of fields"));
            }
            let tokens = cols[1..=o].iter().map(|s| s.to_string()).collect();
            (cols[0], tokens, cols.get(o + 1).copied())
        };
        if tokens.len() != o {
            return Err(Error::parse(
                name,
                lineno,
                format!("expected {o} tokens, found {}", tokens.len()),
            ));
        }
        let log_prob = if prob_field == NO_PROB {
            None
        } else {
            Some(parse_log10(prob_field, name, lineno)?)
        };
        let log_backoff = bo_field.map(|b| parse_log10(b, name, lineno)).transpose()?;
        sections[o - 1].push(RawGram {
            tokens,
            log_prob,
            log_backoff,
        });
    }
    if !ended {
        return Err(Error::parse(name, 0, "missing \\end\\ marker"));
    }
    if let Some(c) = current {
        check_section(name, section_start, c, &sections, &declared)?;
    }
    if sections.len() != order {
        return Err(Error::parse(name, 0, "fewer sections than declared orders"));
    }

    // Vocabulary from unigrams, in file order.
    let mut ordinary = Vec::new();
    let mut has_unk = false;
    for g in &sections[0] {
        let t = &g.tokens[0];
        if t == SPECIAL_TOKENS[UNK as usize] {
            has_unk = true;
        } else if !SPECIAL_TOKENS.contains(&t.as_str()) {
            ordinary.push(t.clone());
        }
    }
    if !has_unk {
        return Err(Error::Format(
            "ARPA model lacks <unk>; an open-vocabulary model is required".into(),
        ));
    }
    let vocab = Arc::new(Vocabulary::from_tokens(ordinary, lowercase)?);
    let ids: HashMap<&str, u32> = (0..vocab.size() as u32)
        .map(|id| (vocab.token(id).unwrap(), id))
        .collect();

    let mut tables = Vec::with_capacity(order);
    for (o, section) in sections.into_iter().enumerate() {
        let mut rows: Vec<(Vec<u32>, Entry)> = section
            .into_iter()
            .map(|g| {
                let key = g
                    .tokens
                    .iter()
                    .map(|t| {
                        ids.get(t.as_str())
                            .copied()
                            .ok_or_else(|| Error::Format(format!("token {t:?} missing from unigrams")))
                    })
                    .collect::<Result<Vec<u32>>>()?;
                Ok((
                    key,
                    Entry {
                        log_prob: g.log_prob,
                        log_backoff: g.log_backoff,
                    },
                ))
            })
            .collect::<Result<_>>()?;
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Format(format!("duplicate {}-gram", o + 1)));
        }
        let keys = rows.iter().flat_map(|(k, _)| k.iter().copied()).collect();
        let entries = rows.into_iter().map(|(_, e)| e).collect();
        tables.push(GramTable::from_sorted(o + 1, keys, entries));
    }

    discounts.sort_by_key(|(o, _)| *o);
    let discounts: Vec<Discounts> = if discounts.len() == order
        && discounts.iter().enumerate().all(|(i, (o, _))| *o == i + 1)
    {
        discounts.into_iter().map(|(_, d)| d).collect()
    } else {
        Vec::new()
    };

    let model = KnModel {
        order,
        vocab,
        discounts,
        tables,
        warnings,
        meta,
    };
    validate(&model)?;
    Ok(model)
}

fn check_section(
    name: &str,
    header_line: usize,
    order: usize,
    sections: &[Vec<RawGram>],
    declared: &[usize],
) -> Result<()> {
    let found = sections[order - 1].len();
    if found != declared[order - 1] {
        return Err(Error::parse(
            name,
            header_line,
            format!(
                "section {order}-grams has {found} entries, header declares {}",
                declared[order - 1]
            ),
        ));
    }
    Ok(())
}

fn parse_discount_line(rest: &str, name: &str, lineno: usize) -> Result<(usize, Discounts)> {
    let mut order = None;
    let mut d = Discounts::uniform(0.0);
    for kv in rest.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::parse(name, lineno, "bad discount field"))?;
        let bad = |_| Error::parse(name, lineno, format!("bad value for {k}"));
        match k {
            "order" => order = Some(v.parse::<usize>().map_err(|_| Error::parse(name, lineno, "bad order"))?),
            "d1" => d.d1 = v.parse().map_err(bad)?,
            "d2" => d.d2 = v.parse().map_err(bad)?,
            "d3plus" => d.d3plus = v.parse().map_err(bad)?,
            _ => return Err(Error::parse(name, lineno, format!("unknown discount field {k}"))),
        }
    }
    let order = order.ok_or_else(|| Error::parse(name, lineno, "discount without order"))?;
    Ok((order, d))
}
