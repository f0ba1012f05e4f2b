//! Target-language accuracy as the labeled source set grows. Subsets are
//! nested, so the largest size reproduces the full training set.

mod common;

use monox::evalx::{curves_to_table, data_size_sweep, Method};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = common::quick_config();
    let setup = cfg.build_setup()?;
    let sweep = data_size_sweep(&setup, &cfg.sweep.sizes, &[1, 2], &[Method::Vanilla, Method::Kd])?;
    println!("mean target-language test accuracy");
    print!("{}", curves_to_table(&sweep.target)?.to_csv());
    println!("\nmean over all languages");
    print!("{}", curves_to_table(&sweep.all_languages)?.to_csv());
    Ok(())
}
