//! Writes the built-in experiment presets as editable config files.

use extorq::harness::{experiment_to_doc, ExperimentConfig};

fn main() -> extorq::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "configs".into());
    std::fs::create_dir_all(&dir)?;
    for config in [ExperimentConfig::planar2(), ExperimentConfig::chain6()] {
        let path = format!("{dir}/{}.txt", config.label);
        experiment_to_doc(&config).save(std::path::Path::new(&path))?;
        println!("wrote {path}");
    }
    Ok(())
}
