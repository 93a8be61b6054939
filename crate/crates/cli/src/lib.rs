//! Config-driven experiment runner around the `lazylink` library.

pub mod commands;
pub mod config;
pub mod error;
pub mod presets;

pub use config::ExperimentConfig;
pub use error::CliError;

/// Resolves `--preset` / `--config` sources in the order given.
pub fn load_configs(
    presets: &[String],
    configs: &[std::path::PathBuf],
) -> Result<Vec<ExperimentConfig>, CliError> {
    let mut out = Vec::new();
    for name in presets {
        out.push(presets::preset(name).ok_or_else(|| {
            CliError::Validation(format!(
                "unknown preset {name:?}; available: {}",
                presets::PRESET_NAMES.join(", ")
            ))
        })?);
    }
    for path in configs {
        out.push(ExperimentConfig::load(path)?);
    }
    Ok(out)
}
