//! Versioned checkpoint container.
//!
//! Layout: the 8-byte magic `CRKGNCKP`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the JSON header, then every tensor listed
//! in the header as raw little-endian floats of the recorded dtype. The header
//! carries the full layer graph of each network, so loading never falls back
//! on builder defaults from the source code.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crackgan_core::networks::{AsymmetricUNet, Discriminator, DcganGenerator, EncoderClassifier, SkipLink};
use crackgan_core::nn::{Adam, AdamConfig, Graph, InputContract, LayerSpec, Node};
use crackgan_core::training::{TrainConfig, TrainState};
use crackgan_core::Real;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CRKGNCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn of<T>() -> Self {
        if std::mem::size_of::<T>() == 4 {
            Dtype::F32
        } else {
            Dtype::F64
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// What a graph is, with everything its typed wrapper needs beyond the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NetworkKind {
    Generator {
        encoder: Vec<LayerSpec>,
        decoder: Vec<LayerSpec>,
        skip_links: Vec<SkipLink>,
        batch_norm: bool,
    },
    Discriminator,
    DcganGenerator,
    EncoderClassifier {
        encoder: Vec<LayerSpec>,
        patch: usize,
        batch_norm: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkHeader {
    pub role: String,
    pub kind: NetworkKind,
    pub in_channels: usize,
    pub contract: InputContract,
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub config: AdamConfig,
    pub step: u64,
}

/// Stage progress needed to resume a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHeader {
    pub stage: String,
    pub config: TrainConfig,
    pub state: TrainState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub dtype: Dtype,
    pub networks: Vec<NetworkHeader>,
    /// Optimizer state keyed by the role of the network it updates.
    pub optimizers: Vec<(String, OptimizerHeader)>,
    pub training: Option<TrainingHeader>,
    pub tensors: Vec<TensorEntry>,
}

/// A typed network that can be stored in a checkpoint.
pub trait Network<T: Real>: Sized {
    fn kind(&self) -> NetworkKind;
    fn graph(&self) -> &Graph<T>;
    fn rebuild(kind: &NetworkKind, graph: Graph<T>) -> Result<Self>;
}

fn wrong_kind(expected: &str, kind: &NetworkKind) -> Error {
    Error::Config(format!("expected a {expected} network, found {kind:?}"))
}

impl<T: Real> Network<T> for AsymmetricUNet<T> {
    fn kind(&self) -> NetworkKind {
        NetworkKind::Generator {
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            skip_links: self.skip_links.clone(),
            batch_norm: self.batch_norm,
        }
    }

    fn graph(&self) -> &Graph<T> {
        &self.graph
    }

    fn rebuild(kind: &NetworkKind, graph: Graph<T>) -> Result<Self> {
        match kind {
            NetworkKind::Generator {
                encoder,
                decoder,
                skip_links,
                batch_norm,
            } => {
                let mut net = AsymmetricUNet::from_parts(encoder.clone(), decoder.clone(), skip_links.clone(), *batch_norm)?;
                if net.graph.nodes() != graph.nodes() {
                    return Err(Error::Config(String::from(
                        "generator layer list disagrees with its stored graph",
                    )));
                }
                net.graph = graph;
                Ok(net)
            }
            other => Err(wrong_kind("generator", other)),
        }
    }
}

impl<T: Real> Network<T> for Discriminator<T> {
    fn kind(&self) -> NetworkKind {
        NetworkKind::Discriminator
    }

    fn graph(&self) -> &Graph<T> {
        &self.graph
    }

    fn rebuild(kind: &NetworkKind, graph: Graph<T>) -> Result<Self> {
        match kind {
            NetworkKind::Discriminator => Ok(Discriminator::from_graph(graph)),
            other => Err(wrong_kind("discriminator", other)),
        }
    }
}

impl<T: Real> Network<T> for DcganGenerator<T> {
    fn kind(&self) -> NetworkKind {
        NetworkKind::DcganGenerator
    }

    fn graph(&self) -> &Graph<T> {
        &self.graph
    }

    fn rebuild(kind: &NetworkKind, graph: Graph<T>) -> Result<Self> {
        match kind {
            NetworkKind::DcganGenerator => Ok(DcganGenerator::from_graph(graph)?),
            other => Err(wrong_kind("DC-GAN generator", other)),
        }
    }
}

impl<T: Real> Network<T> for EncoderClassifier<T> {
    fn kind(&self) -> NetworkKind {
        NetworkKind::EncoderClassifier {
            encoder: self.encoder.clone(),
            patch: match self.graph.contract() {
                InputContract::Fixed { height, .. } => height,
                _ => 0,
            },
            batch_norm: self.graph.nodes().iter().any(|n| n.name.ends_with(".bn")),
        }
    }

    fn graph(&self) -> &Graph<T> {
        &self.graph
    }

    fn rebuild(kind: &NetworkKind, graph: Graph<T>) -> Result<Self> {
        match kind {
            NetworkKind::EncoderClassifier {
                encoder,
                patch,
                batch_norm,
            } => {
                let mut net = EncoderClassifier::from_encoder(encoder.clone(), *patch, *batch_norm)?;
                if net.graph.nodes() != graph.nodes() {
                    return Err(Error::Config(String::from(
                        "classifier layer list disagrees with its stored graph",
                    )));
                }
                net.graph = graph;
                Ok(net)
            }
            other => Err(wrong_kind("encoder classifier", other)),
        }
    }
}

/// In-memory checkpoint: networks, optimizer moments and training progress.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    networks: Vec<(NetworkHeader, Graph<T>)>,
    optimizers: Vec<(String, Adam<T>)>,
    pub training: Option<TrainingHeader>,
}

impl<T: Real> Default for Checkpoint<T> {
    fn default() -> Self {
        Checkpoint {
            networks: Vec::new(),
            optimizers: Vec::new(),
            training: None,
        }
    }
}

impl<T: Real> Checkpoint<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_network<N: Network<T>>(mut self, role: &str, net: &N) -> Self {
        let g = net.graph();
        self.networks.retain(|(h, _)| h.role != role);
        self.networks.push((
            NetworkHeader {
                role: role.to_string(),
                kind: net.kind(),
                in_channels: g.in_channels(),
                contract: g.contract(),
                nodes: g.nodes().to_vec(),
            },
            g.clone(),
        ));
        self
    }

    /// Attaches Adam moments for the network stored under `role`.
    pub fn with_optimizer(mut self, role: &str, adam: &Adam<T>) -> Self {
        self.optimizers.retain(|(r, _)| r != role);
        self.optimizers.push((role.to_string(), adam.clone()));
        self
    }

    pub fn with_training(mut self, stage: &str, config: TrainConfig, state: TrainState) -> Self {
        self.training = Some(TrainingHeader {
            stage: stage.to_string(),
            config,
            state,
        });
        self
    }

    pub fn roles(&self) -> Vec<&str> {
        self.networks.iter().map(|(h, _)| h.role.as_str()).collect()
    }

    pub fn has(&self, role: &str) -> bool {
        self.networks.iter().any(|(h, _)| h.role == role)
    }

    pub fn network<N: Network<T>>(&self, role: &str) -> Result<N> {
        let (h, g) = self
            .networks
            .iter()
            .find(|(h, _)| h.role == role)
            .ok_or_else(|| Error::Config(format!("checkpoint has no `{role}` network")))?;
        N::rebuild(&h.kind, g.clone())
    }

    pub fn optimizer(&self, role: &str) -> Result<Adam<T>> {
        self.optimizers
            .iter()
            .find(|(r, _)| r == role)
            .map(|(_, a)| a.clone())
            .ok_or_else(|| Error::Config(format!("checkpoint has no optimizer state for `{role}`")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries = Vec::new();
        let mut data: Vec<&[T]> = Vec::new();
        for (h, g) in &self.networks {
            for (group, ps) in [("param", g.params()), ("buffer", g.buffers())] {
                for p in ps {
                    entries.push(TensorEntry {
                        name: format!("{}/{group}/{}", h.role, p.name),
                        shape: p.shape.clone(),
                    });
                    data.push(&p.value);
                }
            }
        }
        let mut optimizers = Vec::new();
        for (role, adam) in &self.optimizers {
            let (_, g) = self
                .networks
                .iter()
                .find(|(h, _)| &h.role == role)
                .ok_or_else(|| Error::Config(format!("optimizer for missing network `{role}`")))?;
            for (moment, values) in [("adam_m", &adam.m), ("adam_v", &adam.v)] {
                for (p, v) in g.params().iter().zip(values) {
                    entries.push(TensorEntry {
                        name: format!("{role}/{moment}/{}", p.name),
                        shape: p.shape.clone(),
                    });
                    data.push(v);
                }
            }
            optimizers.push((
                role.clone(),
                OptimizerHeader {
                    config: adam.config,
                    step: adam.step,
                },
            ));
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            dtype: Dtype::of::<T>(),
            networks: self.networks.iter().map(|(h, _)| h.clone()).collect(),
            optimizers,
            training: self.training.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&json).map_err(io)?;
        for values in data {
            for v in values {
                match header.dtype {
                    Dtype::F32 => w.write_all(&(v.as_f64() as f32).to_le_bytes()),
                    Dtype::F64 => w.write_all(&v.as_f64().to_le_bytes()),
                }
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::format(path, "not a checkpoint (file too short)"))?;
        if &magic != MAGIC {
            return Err(Error::format(path, "not a checkpoint (bad magic)"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(io)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("checkpoint format {version} is not supported (expected {FORMAT_VERSION})"),
            ));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(io)?;
        let len = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|_| Error::format(path, "truncated header"))?;
        let header: Header = serde_json::from_slice(&json).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let width = header.dtype.width();
        let mut tensors = std::collections::HashMap::new();
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            let mut raw = vec![0u8; n * width];
            r.read_exact(&mut raw)
                .map_err(|_| Error::format(path, format!("truncated tensor {}", e.name)))?;
            let values: Vec<T> = raw
                .chunks_exact(width)
                .map(|b| match header.dtype {
                    Dtype::F32 => T::lit(f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64),
                    Dtype::F64 => T::lit(f64::from_le_bytes(b.try_into().expect("8 bytes"))),
                })
                .collect();
            tensors.insert(e.name.clone(), (e.shape.clone(), values));
        }
        if r.read(&mut [0u8; 1]).map_err(io)? != 0 {
            return Err(Error::format(path, "trailing bytes after the last tensor"));
        }
        let mut take = |name: String, shape: &[usize]| -> Result<Vec<T>> {
            match tensors.remove(&name) {
                Some((s, v)) if s == shape => Ok(v),
                Some((s, _)) => Err(Error::format(path, format!("{name}: shape {s:?}, expected {shape:?}"))),
                None => Err(Error::format(path, format!("missing tensor {name}"))),
            }
        };
        let mut networks = Vec::new();
        for h in header.networks {
            let mut g = Graph::new(h.in_channels, h.contract, h.nodes.clone())?;
            for p in g.params_mut() {
                p.value = take(format!("{}/param/{}", h.role, p.name), &p.shape)?;
            }
            for b in g.buffers_mut() {
                b.value = take(format!("{}/buffer/{}", h.role, b.name), &b.shape)?;
            }
            networks.push((h, g));
        }
        let mut optimizers = Vec::new();
        for (role, oh) in header.optimizers {
            let (_, g) = networks
                .iter()
                .find(|(h, _)| h.role == role)
                .ok_or_else(|| Error::format(path, format!("optimizer for missing network `{role}`")))?;
            let mut adam = Adam::new(oh.config, g);
            adam.step = oh.step;
            for (i, p) in g.params().iter().enumerate() {
                adam.m[i] = take(format!("{role}/adam_m/{}", p.name), &p.shape)?;
                adam.v[i] = take(format!("{role}/adam_v/{}", p.name), &p.shape)?;
            }
            optimizers.push((role, adam));
        }
        if let Some(name) = tensors.keys().next() {
            return Err(Error::format(path, format!("unexpected tensor {name}")));
        }
        Ok(Checkpoint {
            networks,
            optimizers,
            training: header.training,
        })
    }
}

/// Loads the network stored under `role`, whatever else the file holds.
pub fn load_network<T: Real, N: Network<T>>(path: &Path, role: &str) -> Result<N> {
    Checkpoint::<T>::load(path)?.network(role)
}
