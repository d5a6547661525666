//! Runs every pipeline stage on a small corpus and lists what was written.
//!
//! ```text
//! cargo run --example pipeline -- /tmp/kvlr-demo
//! ```

use std::path::PathBuf;

use kvlr::config::{Config, Resolution};
use kvlr::pipeline::Pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("kvlr-demo"));
    let mut config = Config::default();
    config.resolution = Resolution { height: 32, width: 32 };
    config.synth.frames = 8;

    let p = Pipeline::new(config, &out)?;
    let fields = out.join("fields");
    let mut written = p.synth()?;
    written.extend(p.lift(&out.join("trajectories"))?);
    written.extend(p.route(&fields)?);
    written.extend(p.losses(&fields)?);
    written.extend(p.schedule(&fields)?);
    written.extend(p.eval(&out.join("masks"), &out.join("masks"))?);
    written.extend(p.report(&[])?);

    for f in written.iter().filter(|f| f.extension().is_some_and(|e| e == "csv")) {
        println!("{}", f.display());
    }
    println!("{} files under {}", written.len(), out.display());
    Ok(())
}
