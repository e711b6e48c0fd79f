//! Runs the four-method comparison on generated data and prints the summary.
//!
//! ```text
//! cargo run --release --example desk_eval -- [seeds] [out-dir]
//! ```

use domain_sieve::eval::{compare_methods, EvalConfig, SyntheticSpec};

fn main() -> domain_sieve::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(1, |s| s.parse().expect("seed count"));
    let out = args.next();

    let spec = SyntheticSpec::default();
    let config = EvalConfig::desk(&spec);
    let seeds: Vec<u64> = (1..=seeds).collect();
    let report = compare_methods(&spec, &config, &seeds)?;
    print!("{}", report.summary());
    print!("{}", report.timings_tsv());
    if let Some(dir) = out {
        report.write_dir(dir)?;
    }
    Ok(())
}
