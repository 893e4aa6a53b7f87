//! Config-driven experiment runner behind the `mixflow` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod setup;

use std::path::Path;

pub use commands::Command;
pub use config::{ExperimentConfig, CONFIG_HELP};
pub use error::CliError;

use output::Outputs;
use setup::Setup;

/// Loads and validates `config`, runs `cmd`, and writes its files. On
/// failure every file written by this call is removed.
pub fn run(cmd: Command, config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(), CliError> {
    let base = config.parent().unwrap_or(Path::new("."));
    let cfg = ExperimentConfig::load(config)?.resolve(seed, out.map(Path::to_path_buf), base)?;
    if let Some(p) = &cfg.density.points {
        if cmd == Command::Density && !p.exists() {
            return Err(CliError::Io(format!("points file {} does not exist", p.display())));
        }
    }
    let setup = Setup::build(cfg)?;
    let mut outputs = Outputs::create(setup.cfg.out_dir())?;
    match commands::execute(cmd, &setup, &mut outputs) {
        Ok(()) => Ok(()),
        Err(e) => {
            outputs.discard();
            Err(e)
        }
    }
}
