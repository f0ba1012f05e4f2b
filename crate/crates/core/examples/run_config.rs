//! Resolves a TOML run config with command-line style overrides and runs the
//! full experiment into a scratch run directory, as the `monox` binary does.

use monox::cli::{execute, resolve_config};

const CONFIG: &str = r#"
[corpus]
seed = 3
sizes = { train = 200, unlabeled = 800, dev = 150, test = 300 }

[train]
epochs = 1

[seeds]
count = 2

[experiment]
methods = ["teacher", "vanilla", "kd"]
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join(format!("monox-run-config-example-{}", std::process::id()));
    let overrides = vec![
        ("output.root".to_string(), root.display().to_string()),
        ("output.name".to_string(), "demo".to_string()),
        ("sweep.sizes".to_string(), "[50, 200]".to_string()),
        ("command".to_string(), "full-experiment".to_string()),
    ];
    let cfg = resolve_config(CONFIG, &overrides)?;
    println!("resolved config:\n{}", cfg.to_toml());

    let out = execute(&cfg)?;
    println!("{}", out.summary);
    for entry in std::fs::read_dir(out.run_dir.join("tables"))? {
        println!("wrote {}", entry?.path().display());
    }

    let bad = resolve_config(CONFIG, &[("train.temperature".to_string(), "-1".to_string())]);
    println!("negative temperature: {}", bad.unwrap_err());

    std::fs::remove_dir_all(&root)?;
    Ok(())
}
