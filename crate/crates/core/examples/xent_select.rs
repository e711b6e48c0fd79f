//! Cross-entropy difference selection on generated data, reported as the
//! fraction of planted in-domain sentences among the top picks.
//!
//! ```text
//! cargo run --release --example xent_select -- [order]
//! ```

use std::sync::Arc;

use domain_sieve::eval::{generate_synthetic, precision_at_k, SyntheticSpec};
use domain_sieve::xent::{rank, score_xent_diff, shared_vocabulary, train_xent_models, PoolModelData};

fn main() -> domain_sieve::Result<()> {
    let order: usize = std::env::args().nth(1).map_or(3, |s| s.parse().expect("order"));
    let data = generate_synthetic(&SyntheticSpec::default())?;
    let vocab = Arc::new(shared_vocabulary(&data.in_domain, &data.pool, 1, usize::MAX, false)?);
    let corpora = data.encode(&vocab);
    for pool_data in [PoolModelData::Full, PoolModelData::SizeMatched { seed: 1 }] {
        let models = train_xent_models(&corpora.in_domain, &corpora.pool, vocab.clone(), order, pool_data)?;
        let ranking = rank(score_xent_diff(&models.in_domain, &models.pool, &corpora.pool)?, true);
        let ks = [500, 1000, data.planted.len(), 4000];
        let p = precision_at_k(&ranking.order(), &data.planted, &ks)?;
        let cells: Vec<String> = p.iter().map(|(k, v)| format!("p@{k}={v:.3}")).collect();
        println!("{pool_data:?}: {}", cells.join("  "));
    }
    Ok(())
}
