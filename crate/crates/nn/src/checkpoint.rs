//! Checkpoints: named f32 tensors in a safetensors container, with the model
//! kind, configuration and format version in the header metadata. Loading
//! matches tensors by name, so extra tensors are ignored.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::layers::Module;
use crate::matting::{MattingConfig, MattingNet, SIGMA_DECODER};
use crate::refiner::{Refiner, RefinerConfig};

pub const FORMAT_VERSION: &str = "1";
pub const MATTING_KIND: &str = "matting";
pub const REFINER_KIND: &str = "refiner";
const METADATA_KEY: &str = "clickmat";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn capture(kind: &str, config: &impl Serialize, module: &dyn Module) -> Result<Self> {
        let mut tensors = BTreeMap::new();
        module.visit("", &mut |name, p| {
            tensors.insert(name.to_string(), (p.shape.clone(), p.value.clone()));
        });
        Ok(Self {
            kind: kind.to_string(),
            config: serde_json::to_value(config).map_err(|e| bad(e.to_string()))?,
            tensors,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = self
            .tensors
            .iter()
            .map(|(name, (shape, values))| {
                let raw = values.iter().flat_map(|v| v.to_le_bytes()).collect();
                (name.clone(), shape.clone(), raw)
            })
            .collect();
        let views = bytes
            .iter()
            .map(|(name, shape, raw)| Ok((name.as_str(), TensorView::new(Dtype::F32, shape.clone(), raw)?)))
            .collect::<Result<Vec<_>, safetensors::SafeTensorError>>()
            .map_err(|e| bad(e.to_string()))?;
        // a single entry keeps the header byte-stable; safetensors writes a HashMap
        let header = serde_json::json!({
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "config": self.config,
        });
        let metadata = HashMap::from([(METADATA_KEY.to_string(), header.to_string())]);
        safetensors::serialize(views, Some(metadata)).map_err(|e| bad(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, header) = SafeTensors::read_metadata(bytes).map_err(|e| bad(e.to_string()))?;
        let raw = header
            .metadata()
            .as_ref()
            .and_then(|m| m.get(METADATA_KEY))
            .ok_or_else(|| bad(format!("missing {METADATA_KEY} metadata")))?;
        let meta: serde_json::Value = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        let version = meta["format_version"].as_str().ok_or_else(|| bad("missing format_version"))?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let kind = meta["kind"].as_str().ok_or_else(|| bad("missing kind"))?.to_string();
        let config = meta["config"].clone();
        let file = SafeTensors::deserialize(bytes).map_err(|e| bad(e.to_string()))?;
        let mut tensors = BTreeMap::new();
        for (name, view) in file.tensors() {
            if view.dtype() != Dtype::F32 {
                return Err(bad(format!("{name}: expected F32, found {:?}", view.dtype())));
            }
            let values = view
                .data()
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.insert(name, (view.shape().to_vec(), values));
        }
        Ok(Self { kind, config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn config_as<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.config.clone()).map_err(|e| bad(format!("config: {e}")))
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        let dotted = format!("{prefix}.");
        self.tensors.keys().any(|k| k.starts_with(&dotted))
    }

    /// Copies every parameter of `module` from the tensor of the same name.
    pub fn apply(&self, module: &mut dyn Module) -> Result<()> {
        let mut problem = None;
        module.visit_mut("", &mut |name, p| {
            if problem.is_some() {
                return;
            }
            match self.tensors.get(name) {
                Some((shape, values)) if *shape == p.shape => p.value.clone_from(values),
                Some((shape, _)) => {
                    problem = Some(format!("{name}: shape {shape:?}, model expects {:?}", p.shape));
                }
                None => problem = Some(format!("missing tensor {name}")),
            }
        });
        problem.map_or(Ok(()), |m| Err(bad(m)))
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(bad(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }
}

pub fn save_matting(path: &Path, net: &MattingNet) -> Result<()> {
    Checkpoint::capture(MATTING_KIND, &net.config, net)?.save(path)
}

/// Restores a matting net; the uncertainty decoder is attached when the checkpoint has one.
pub fn load_matting(path: &Path) -> Result<MattingNet> {
    matting_from_checkpoint(&Checkpoint::load(path)?)
}

pub fn matting_from_checkpoint(ckpt: &Checkpoint) -> Result<MattingNet> {
    ckpt.expect_kind(MATTING_KIND)?;
    let config: MattingConfig = ckpt.config_as()?;
    let mut net = MattingNet::new(config)?;
    if ckpt.has_prefix(SIGMA_DECODER) {
        net.attach_uncertainty(0);
    }
    ckpt.apply(&mut net)?;
    Ok(net)
}

pub fn save_refiner(path: &Path, refiner: &Refiner) -> Result<()> {
    Checkpoint::capture(REFINER_KIND, &refiner.config, refiner)?.save(path)
}

pub fn load_refiner(path: &Path) -> Result<Refiner> {
    let ckpt = Checkpoint::load(path)?;
    ckpt.expect_kind(REFINER_KIND)?;
    let config: RefinerConfig = ckpt.config_as()?;
    let mut refiner = Refiner::new(config)?;
    ckpt.apply(&mut refiner)?;
    Ok(refiner)
}
