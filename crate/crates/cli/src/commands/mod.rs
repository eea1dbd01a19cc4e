pub mod build_texture;
pub mod eval;
pub mod fit;
pub mod synth;

use std::path::Path;

use morphfit::features::DescriptorRegistry;
use serde::de::DeserializeOwned;

use crate::CliError;

/// Clap value parser accepting the names of the built-in feature descriptors.
pub fn descriptor_name(name: &str) -> Result<String, String> {
    let names = DescriptorRegistry::default().names();
    if names.iter().any(|n| n == name) {
        Ok(name.to_string())
    } else {
        Err(format!("unknown descriptor, expected one of {{{}}}", names.join(", ")))
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Reads a JSON config file; a malformed file is an argument error.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("{}: invalid config: {e}", path.display())))
}
