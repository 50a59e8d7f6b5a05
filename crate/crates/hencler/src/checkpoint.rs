//! JSON parameter checkpoints.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use hencler_core::autodiff::ParamSet;
use hencler_core::{HenclerParams, Matrix, ModelDims};
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub dims: ModelDims,
    pub tie_maps: bool,
    pub params: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_params(params: &HenclerParams) -> Self {
        let tensors = params
            .param_set()
            .iter()
            .map(|p| TensorRecord {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                values: p.value.as_slice().to_vec(),
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            dims: *params.dims(),
            tie_maps: params.tie_maps(),
            params: tensors,
        }
    }

    pub fn into_params(self) -> anyhow::Result<HenclerParams> {
        if self.version != CHECKPOINT_VERSION {
            bail!("unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})", self.version);
        }
        let mut set = ParamSet::new();
        for t in self.params {
            let m = Matrix::from_vec(t.rows, t.cols, t.values).with_context(|| format!("tensor {}", t.name))?;
            set.insert(t.name, m, true)?;
        }
        Ok(HenclerParams::from_param_set(self.dims, self.tie_maps, set)?)
    }
}

pub fn save(path: &Path, params: &HenclerParams) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(&Checkpoint::from_params(params))?;
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> anyhow::Result<HenclerParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ckpt.into_params()
}
