//! Checkpoint layout: one tensor file per parameter plus `checkpoint.json`
//! listing names, shapes and the network config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, NetworkConfig};
use crate::error::{Error, Result};
use crate::tensor::{format, Real};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 4],
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub tensor_format_version: u32,
    pub config: NetworkConfig,
    pub parameters: Vec<ParamEntry>,
}

pub fn save_checkpoint<T: Real>(model: &Model<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut parameters = Vec::new();
    for (name, dims, values) in model.named_parameters() {
        let file = format!("{name}.afdt");
        let t = crate::tensor::Tensor::new(dims, values.to_vec())?;
        format::save(&t, dir.join(&file))?;
        parameters.push(ParamEntry {
            name,
            shape: dims.as_array(),
            file,
        });
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        tensor_format_version: format::FORMAT_VERSION,
        config: model.config().clone(),
        parameters,
    };
    std::fs::write(dir.join(CHECKPOINT_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Rebuilds the model from its config and overwrites every parameter from
/// disk, converting precision if needed.
pub fn load_checkpoint<T: Real>(dir: impl AsRef<Path>) -> Result<Model<T>> {
    let dir = dir.as_ref();
    let text = std::fs::read_to_string(dir.join(CHECKPOINT_FILE))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(Error::Decode(format!(
            "checkpoint version {} unsupported",
            manifest.format_version
        )));
    }
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let mut model = Model::<T>::build(&manifest.config, &mut rng)?;
    let expected: Vec<(String, [usize; 4])> = model
        .named_parameters()
        .into_iter()
        .map(|(n, d, _)| (n, d.as_array()))
        .collect();
    if expected.len() != manifest.parameters.len() {
        return Err(Error::Decode("checkpoint parameter list does not match its config".into()));
    }
    for ((slot, (name, shape)), entry) in model.parameters_mut().into_iter().zip(expected).zip(&manifest.parameters) {
        if entry.name != name || entry.shape != shape {
            return Err(Error::Decode(format!("checkpoint entry {} does not match {name}", entry.name)));
        }
        let t = format::load(dir.join(&entry.file))?.into_real::<T>();
        if t.dims().as_array() != shape {
            return Err(Error::Decode(format!("tensor file {} has shape {}", entry.file, t.dims())));
        }
        slot.copy_from_slice(t.values());
    }
    Ok(model)
}
