//! Run a small multi-seed experiment from a TOML config and write its result files.
//!
//! ```bash
//! cargo run --example experiment [-- OUT_DIR]
//! ```

use std::path::PathBuf;

use uncaps::experiment::{compare_methods, run_and_export, ExperimentConfig, Method};
use uncaps::search::Variant;

const CONFIG: &str = r#"
seeds = [1, 2, 3]
variants = ["StandardBO", "UncAPS", "DR"]

[plant]
latent = ["mass", "spring", "damping"]
noise_std = 0.1

[search]
iterations = 10
n_samples = 40

[jumpstart]
episodes = 50
"#;

fn main() -> uncaps::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("uncaps-example"));
    std::fs::create_dir_all(&dir)?;
    let results = run_and_export(&cfg, &dir)?;

    for row in &results.table.rows {
        println!(
            "{:<11} seed {:>2}: jumpstart {:>8.3} ± {:.3}",
            row.method, row.seed, row.jumpstart_mean, row.jumpstart_stderr
        );
    }
    for a in results.table.aggregates() {
        println!("{:<11} mean {:>8.3} ± {:.3}", a.method, a.mean, a.pooled_stderr);
    }
    let t = compare_methods(
        &results.table,
        Method::Search(Variant::Uncaps),
        Method::Search(Variant::StandardBo),
    )?;
    println!(
        "UncAPS beats StandardBO on {}/{} seeds (sign test p = {:.3})",
        t.wins,
        t.wins + t.losses + t.ties,
        t.p_value
    );
    println!("files written to {}", dir.display());
    Ok(())
}
