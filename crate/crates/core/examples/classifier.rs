//! Trains a CNN or BLSTM classifier to tell in-domain sentences from pool
//! sentences and prints the training history.
//!
//! ```text
//! cargo run --release --example classifier -- [cnn|blstm]
//! ```

use std::sync::Arc;

use domain_sieve::classifier::{train, ClassifierModel, EncoderKind};
use domain_sieve::eval::{generate_synthetic, EvalConfig, SyntheticSpec};
use domain_sieve::xent::shared_vocabulary;

fn main() -> domain_sieve::Result<()> {
    let kind: EncoderKind = std::env::args().nth(1).as_deref().unwrap_or("cnn").parse()?;
    let spec = SyntheticSpec::default();
    let data = generate_synthetic(&spec)?;
    let vocab = Arc::new(shared_vocabulary(&data.in_domain, &data.pool, 1, usize::MAX, false)?);
    let corpora = data.encode(&vocab);
    // Desk-sized architecture and schedule from the evaluation preset.
    let desk = EvalConfig::desk(&spec);
    let (model_config, train_config) = if kind == EncoderKind::Cnn { desk.cnn } else { desk.blstm };
    let mut model = ClassifierModel::new(model_config, vocab.size(), 1)?;
    println!("{} encoder, {} parameters", kind.name(), model.num_parameters());
    let history = train(&mut model, &corpora.in_domain, &corpora.pool, &train_config)?;
    println!("initial validation loss {:.4}", history.initial_validation_loss.unwrap_or(f64::NAN));
    for e in &history.epochs {
        println!(
            "epoch {}: train loss {:.4}, validation loss {:.4}, accuracy {:.3}",
            e.epoch,
            e.train_loss,
            e.validation_loss.unwrap_or(f64::NAN),
            e.validation_accuracy.unwrap_or(f64::NAN)
        );
    }
    let ids: Vec<&[u32]> = corpora.pool.sentences().iter().map(|s| s.ids.as_slice()).collect();
    let p = model.predict(&ids, 256)?;
    let (planted, other): (Vec<(usize, f64)>, Vec<(usize, f64)>) =
        p.iter().copied().enumerate().partition(|(i, _)| data.planted.contains(i));
    let mean = |v: &[(usize, f64)]| v.iter().map(|x| x.1).sum::<f64>() / v.len() as f64;
    println!("mean p(in-domain): planted {:.3}, other pool {:.3}", mean(&planted), mean(&other));
    Ok(())
}
