pub mod embed;
pub mod evaluate;
pub mod fit_params;
pub mod fit_pose;
pub mod simulate;
pub mod tetra;

use pbdsim_core::io::Metadata;
use pbdsim_core::Result;
use serde::Serialize;

/// Provenance block with the command's effective configuration echoed in.
pub fn metadata<T: Serialize>(seed: Option<u64>, config: &T) -> Result<Metadata> {
    let echo = serde_json::to_value(config)
        .map_err(|e| pbdsim_core::Error::InvalidInput(format!("config echo failed: {e}")))?;
    Ok(Metadata::new(seed).with_config(echo))
}
