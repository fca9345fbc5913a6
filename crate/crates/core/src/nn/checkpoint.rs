//! Parameter checkpoints.
//!
//! Layout: one line of compact JSON (the header, terminated by `\n`) followed
//! by the raw little-endian `f64` data of every tensor, concatenated in header
//! order. The header names each tensor and its shape, records network
//! topologies, the seed and any step counters.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, Mlp, MlpSpec, NnError, Tensor};

const FORMAT: &str = "dexgrasp-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    discardable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    phase: String,
    seed: u64,
    counters: BTreeMap<String, u64>,
    networks: BTreeMap<String, MlpSpec>,
    #[serde(default)]
    discardable_networks: Vec<String>,
    #[serde(default)]
    meta: BTreeMap<String, serde_json::Value>,
    tensors: Vec<TensorHeader>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
    /// Training-only state that deployment exports drop.
    pub discardable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub phase: String,
    pub seed: u64,
    pub counters: BTreeMap<String, u64>,
    pub networks: BTreeMap<String, MlpSpec>,
    pub discardable_networks: Vec<String>,
    pub meta: BTreeMap<String, serde_json::Value>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(phase: impl Into<String>, seed: u64) -> Self {
        Self {
            phase: phase.into(),
            seed,
            counters: BTreeMap::new(),
            networks: BTreeMap::new(),
            discardable_networks: Vec::new(),
            meta: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor, discardable: bool) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            tensor,
            discardable,
        });
    }

    pub fn add_mlp(&mut self, name: &str, mlp: &Mlp, discardable: bool) {
        self.networks.insert(name.to_string(), mlp.spec());
        if discardable {
            self.discardable_networks.push(name.to_string());
        }
        for (pname, p) in mlp.param_names(name).into_iter().zip(mlp.params()) {
            self.push(pname, p.clone(), discardable);
        }
    }

    pub fn has_network(&self, name: &str) -> bool {
        self.networks.contains_key(name)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, NnError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &t.tensor)
            .ok_or_else(|| NnError::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn mlp(&self, name: &str) -> Result<Mlp, NnError> {
        let spec = self
            .networks
            .get(name)
            .ok_or_else(|| NnError::Checkpoint(format!("missing network `{name}`")))?;
        let mut mlp = Mlp::from_spec(spec)?;
        let names = mlp.param_names(name);
        for (pname, p) in names.iter().zip(mlp.params_mut()) {
            let stored = self.tensor(pname)?;
            if stored.shape() != p.shape() {
                return Err(NnError::Shape {
                    op: "checkpoint restore",
                    left: p.shape().to_vec(),
                    right: stored.shape().to_vec(),
                });
            }
            p.data_mut().copy_from_slice(stored.data());
        }
        Ok(mlp)
    }

    pub fn add_adam(&mut self, name: &str, adam: &Adam, discardable: bool) {
        self.counters.insert(format!("{name}.step"), adam.step_count());
        let (m, v) = adam.moments();
        for (i, (mi, vi)) in m.iter().zip(v).enumerate() {
            self.push(format!("{name}.m.{i}"), mi.clone(), discardable);
            self.push(format!("{name}.v.{i}"), vi.clone(), discardable);
        }
    }

    pub fn restore_adam(&self, name: &str, adam: &mut Adam) -> Result<(), NnError> {
        let n = adam.moments().0.len();
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            m.push(self.tensor(&format!("{name}.m.{i}"))?.clone());
            v.push(self.tensor(&format!("{name}.v.{i}"))?.clone());
        }
        let step = *self
            .counters
            .get(&format!("{name}.step"))
            .ok_or_else(|| NnError::Checkpoint(format!("missing counter `{name}.step`")))?;
        adam.restore(m, v, step)
    }

    /// Copy without any discardable tensors or networks.
    pub fn deployment(&self) -> Self {
        let mut out = self.clone();
        out.tensors.retain(|t| !t.discardable);
        for name in &self.discardable_networks {
            out.networks.remove(name);
        }
        out.discardable_networks.clear();
        out.phase = format!("{}-deploy", self.phase);
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            phase: self.phase.clone(),
            seed: self.seed,
            counters: self.counters.clone(),
            networks: self.networks.clone(),
            discardable_networks: self.discardable_networks.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorHeader {
                    name: t.name.clone(),
                    shape: t.tensor.shape().to_vec(),
                    discardable: t.discardable,
                })
                .collect(),
        };
        let mut bytes = serde_json::to_vec(&header).expect("header serializes");
        bytes.push(b'\n');
        for t in &self.tensors {
            for v in t.tensor.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| NnError::Checkpoint("missing header terminator".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| NnError::Checkpoint(format!("bad header: {e}")))?;
        if header.format != FORMAT {
            return Err(NnError::Checkpoint(format!("unknown format `{}`", header.format)));
        }
        if header.version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {}", header.version)));
        }
        let mut cursor = nl + 1;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for th in header.tensors {
            let n: usize = th.shape.iter().product();
            let end = cursor + n * 8;
            if end > bytes.len() {
                return Err(NnError::Checkpoint(format!("truncated data for `{}`", th.name)));
            }
            let data = bytes[cursor..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            cursor = end;
            tensors.push(NamedTensor {
                name: th.name,
                tensor: Tensor::new(th.shape, data)?,
                discardable: th.discardable,
            });
        }
        if cursor != bytes.len() {
            return Err(NnError::Checkpoint(format!(
                "{} trailing bytes after tensor data",
                bytes.len() - cursor
            )));
        }
        Ok(Self {
            phase: header.phase,
            seed: header.seed,
            counters: header.counters,
            networks: header.networks,
            discardable_networks: header.discardable_networks,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        fs::write(path, self.to_bytes()).map_err(|e| NnError::Checkpoint(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let bytes = fs::read(path).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}
