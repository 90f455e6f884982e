//! On-disk formats: dataset files and model checkpoints.
//!
//! Both are single-line JSON documents. Floats are written in shortest
//! round-trip form and parsed back exactly, so a load/save cycle reproduces
//! the file byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use arnn_core::data::{FieldSchema, Session, SessionDataset};
use arnn_core::model::{ArnnModel, GruSessionModel, ModelConfig, PnnEncoder, SessionEncoder};
use arnn_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

pub const DATASET_FORMAT: &str = "arnn-dataset/1";
pub const CHECKPOINT_FORMAT: &str = "arnn-checkpoint/1";

/// Hex SHA-256 of the schema's canonical JSON.
pub fn schema_hash(schema: &FieldSchema) -> String {
    let bytes = serde_json::to_vec(schema).expect("schema serializes");
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    schema_hash: String,
    schema: FieldSchema,
    sessions: Vec<Session>,
}

pub fn save_dataset(path: &Path, dataset: &SessionDataset) -> Result<()> {
    let file = DatasetFile {
        format: DATASET_FORMAT.into(),
        schema_hash: schema_hash(&dataset.schema),
        schema: dataset.schema.clone(),
        sessions: dataset.sessions.clone(),
    };
    write_json(path, &file)
}

pub fn load_dataset(path: &Path) -> Result<SessionDataset> {
    let file: DatasetFile = read_json(path)?;
    if file.format != DATASET_FORMAT {
        return Err(AppError::format(
            path,
            format!("unsupported format {:?}", file.format),
        ));
    }
    let schema = file.schema.validated()?;
    if schema_hash(&schema) != file.schema_hash {
        return Err(AppError::format(
            path,
            "schema hash does not match the embedded schema",
        ));
    }
    Ok(SessionDataset::new(file.sessions, schema)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gru,
    Pnn,
    Arnn,
}

impl ModelKind {
    pub fn system_name(self) -> &'static str {
        match self {
            ModelKind::Gru => "GRU4REC",
            ModelKind::Pnn => "PNN",
            ModelKind::Arnn => "ARNN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl NamedTensor {
    fn from_pair((name, t): (String, Tensor)) -> Self {
        Self {
            name,
            shape: t.shape().to_vec(),
            values: t.into_data(),
        }
    }
}

/// Training settings recorded alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub profile: String,
    pub model: ModelConfig,
    pub stage: String,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub batch_lanes: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub kind: ModelKind,
    pub schema_hash: String,
    pub schema: FieldSchema,
    pub hyperparameters: Hyperparameters,
    /// Pretraining checkpoints a merge model was built from, by block, as
    /// file name and SHA-256 of the file.
    pub parents: BTreeMap<String, (String, String)>,
    /// Tensors grouped by network: `gru`, `pnn`, `merge`.
    pub blocks: BTreeMap<String, Vec<NamedTensor>>,
}

fn block(tensors: Vec<(String, Tensor)>) -> Vec<NamedTensor> {
    tensors.into_iter().map(NamedTensor::from_pair).collect()
}

impl Checkpoint {
    fn new(kind: ModelKind, schema: &FieldSchema, hyperparameters: Hyperparameters) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            kind,
            schema_hash: schema_hash(schema),
            schema: schema.clone(),
            hyperparameters,
            parents: BTreeMap::new(),
            blocks: BTreeMap::new(),
        }
    }

    pub fn from_gru(model: &GruSessionModel, schema: &FieldSchema, hp: Hyperparameters) -> Self {
        let mut c = Self::new(ModelKind::Gru, schema, hp);
        c.blocks.insert("gru".into(), block(model.export()));
        c
    }

    pub fn from_pnn(model: &PnnEncoder, schema: &FieldSchema, hp: Hyperparameters) -> Self {
        let mut c = Self::new(ModelKind::Pnn, schema, hp);
        c.blocks.insert("pnn".into(), block(model.export()));
        c
    }

    pub fn from_arnn(model: &ArnnModel, schema: &FieldSchema, hp: Hyperparameters) -> Self {
        let mut c = Self::new(ModelKind::Arnn, schema, hp);
        c.blocks.insert("gru".into(), block(model.session.export()));
        c.blocks.insert("pnn".into(), block(model.pnn.export()));
        c.blocks.insert("merge".into(), block(model.export_merge()));
        c
    }

    fn tensors(&self) -> Result<BTreeMap<String, Tensor>> {
        let mut out = BTreeMap::new();
        for t in self.blocks.values().flatten() {
            let tensor = Tensor::new(t.shape.clone(), t.values.clone())?;
            out.insert(t.name.clone(), tensor);
        }
        Ok(out)
    }

    fn require(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(arnn_core::Error::Load(format!(
                "expected a {:?} checkpoint, found {:?}",
                kind, self.kind
            ))
            .into());
        }
        Ok(())
    }

    fn blank_gru(&self) -> GruSessionModel {
        let m = &self.hyperparameters.model;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        GruSessionModel::new(
            &mut rng,
            self.schema.num_items(),
            m.gru_hidden,
            m.gru_dropout,
        )
    }

    fn blank_pnn(&self) -> PnnEncoder {
        let m = &self.hyperparameters.model;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        PnnEncoder::new(&mut rng, &self.schema, m.pnn_embedding, m.pnn_hidden)
    }

    pub fn gru(&self) -> Result<GruSessionModel> {
        self.require(ModelKind::Gru)?;
        let mut model = self.blank_gru();
        model.import(&self.tensors()?)?;
        Ok(model)
    }

    pub fn pnn(&self) -> Result<PnnEncoder> {
        self.require(ModelKind::Pnn)?;
        let mut model = self.blank_pnn();
        model.import(&self.tensors()?)?;
        Ok(model)
    }

    pub fn arnn(&self) -> Result<ArnnModel> {
        self.require(ModelKind::Arnn)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = ArnnModel::from_pretrained(
            &mut rng,
            self.blank_pnn(),
            self.blank_gru(),
            self.hyperparameters.model.merge_hidden,
        )?;
        model.import(&self.tensors()?)?;
        Ok(model)
    }

    /// Serialized form of one block, for byte-level comparisons.
    pub fn block_bytes(&self, name: &str) -> Option<Vec<u8>> {
        self.blocks
            .get(name)
            .map(|b| serde_json::to_vec(b).expect("block serializes"))
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_json(path, checkpoint)
}

/// Loads a checkpoint. With `expected` set, the checkpoint's schema must
/// hash to the same value.
pub fn load_checkpoint(path: &Path, expected: Option<&FieldSchema>) -> Result<Checkpoint> {
    let mut c: Checkpoint = read_json(path)?;
    if c.format != CHECKPOINT_FORMAT {
        return Err(AppError::format(
            path,
            format!("unsupported format {:?}", c.format),
        ));
    }
    c.schema = c.schema.validated()?;
    if schema_hash(&c.schema) != c.schema_hash {
        return Err(AppError::format(
            path,
            "schema hash does not match the embedded schema",
        ));
    }
    if let Some(schema) = expected {
        let want = schema_hash(schema);
        if want != c.schema_hash {
            return Err(arnn_core::Error::Load(format!(
                "{}: schema hash {} does not match dataset schema {}",
                path.display(),
                c.schema_hash,
                want
            ))
            .into());
        }
    }
    Ok(c)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec(value).map_err(|e| AppError::format(path, e))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| AppError::format(path, e))
}
