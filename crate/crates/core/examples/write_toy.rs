//! Regenerates `data/toy/*.pgm` from the built-in generator.
//!
//! Usage: `cargo run -p dualfuse --example write_toy -- <dir>`

use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/toy".into()));
    std::fs::create_dir_all(&dir)?;
    for (name, img) in dualfuse::toy::dataset() {
        dualfuse::pgm::write(&dir.join(format!("{name}.pgm")), &img)?;
    }
    Ok(())
}
