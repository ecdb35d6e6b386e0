//! Per-mention and per-ordered-pair embeddings and the pairwise representations built from them.
//!
//! Vectors are kept as `f32`, matching the interchange files, and widened to
//! `f64` whenever a representation is built.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};

const EMB_MAGIC: &[u8; 4] = b"EMB1";
const EMB_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Vision,
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::Text => 0,
            Modality::Vision => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Modality::Text),
            1 => Ok(Modality::Vision),
            other => Err(Error::Format(format!("unknown modality code {other}"))),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Vision => "vision",
        })
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Modality::Text),
            "vision" => Ok(Modality::Vision),
            other => Err(Error::Invalid(format!("unknown modality `{other}`"))),
        }
    }
}

/// Which mention is read first when a pair is encoded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    AB,
    BA,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairFallback {
    /// A missing ordered-pair vector is an error.
    #[default]
    Error,
    /// Substitute `(vec(a) + vec(b)) / 2` for a missing ordered-pair vector.
    Mean,
}

impl FromStr for PairFallback {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(PairFallback::Error),
            "mean" => Ok(PairFallback::Mean),
            other => Err(Error::Invalid(format!("unknown pair fallback `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordId {
    Mention(String),
    /// Ordered pair `(first, second)`.
    Pair(String, String),
}

impl RecordId {
    fn kind(&self) -> u8 {
        match self {
            RecordId::Mention(_) => 0,
            RecordId::Pair(..) => 1,
        }
    }

    fn encode(&self) -> String {
        match self {
            RecordId::Mention(id) => id.clone(),
            RecordId::Pair(a, b) => format!("{a}\u{0}{b}"),
        }
    }

    fn decode(raw: String, kind: u8) -> Result<Self> {
        match kind {
            0 => {
                if raw.contains('\u{0}') {
                    return Err(Error::Format(format!("mention id contains NUL: {raw:?}")));
                }
                Ok(RecordId::Mention(raw))
            }
            1 => {
                let (a, b) = raw
                    .split_once('\u{0}')
                    .ok_or_else(|| Error::Format(format!("pair id without separator: {raw:?}")))?;
                Ok(RecordId::Pair(a.to_string(), b.to_string()))
            }
            other => Err(Error::Format(format!("unknown record kind {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRecord {
    pub id: RecordId,
    pub vec: Vec<f32>,
}

/// One EMB1 file: a single (modality, encoder) with fixed dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingFile {
    pub modality: Modality,
    pub encoder: String,
    pub dim: usize,
    pub records: Vec<EmbeddingRecord>,
}

impl EmbeddingFile {
    pub fn new(modality: Modality, encoder: impl Into<String>, dim: usize) -> Self {
        Self {
            modality,
            encoder: encoder.into(),
            dim,
            records: Vec::new(),
        }
    }

    pub fn push_mention(&mut self, id: impl Into<String>, vec: Vec<f32>) {
        self.records.push(EmbeddingRecord {
            id: RecordId::Mention(id.into()),
            vec,
        });
    }

    pub fn push_pair(&mut self, first: impl Into<String>, second: impl Into<String>, vec: Vec<f32>) {
        self.records.push(EmbeddingRecord {
            id: RecordId::Pair(first.into(), second.into()),
            vec,
        });
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dim = u32::try_from(self.dim).map_err(|_| Error::Format("dim exceeds u32".into()))?;
        let mut w = ByteWriter::new();
        w.bytes(EMB_MAGIC);
        w.u32(EMB_VERSION);
        w.u8(self.modality.code());
        w.short_str(&self.encoder)?;
        w.u32(dim);
        w.u64(self.records.len() as u64);
        for r in &self.records {
            if r.vec.len() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    actual: r.vec.len(),
                });
            }
            if r.vec.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("record {:?}", r.id)));
            }
            w.short_str(&r.id.encode())?;
            w.u8(r.id.kind());
            for &v in &r.vec {
                w.f32(v);
            }
        }
        Ok(w.finish())
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::checked(data)?;
        r.expect_magic(EMB_MAGIC)?;
        let version = r.u32()?;
        if version != EMB_VERSION {
            return Err(Error::Format(format!("unsupported EMB version {version}")));
        }
        let modality = Modality::from_code(r.u8()?)?;
        let encoder = r.short_str()?;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::Format("dim must be positive".into()));
        }
        let count = r.u64()?;
        let mut records = Vec::new();
        for _ in 0..count {
            let raw = r.short_str()?;
            let kind = r.u8()?;
            let id = RecordId::decode(raw, kind)?;
            let mut vec = Vec::with_capacity(dim);
            for _ in 0..dim {
                let v = r.f32()?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("record {id:?}")));
                }
                vec.push(v);
            }
            records.push(EmbeddingRecord { id, vec });
        }
        r.finish()?;
        Ok(Self {
            modality,
            encoder,
            dim,
            records,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

#[derive(Clone, Debug, Default)]
struct EncoderTable {
    dim: usize,
    mentions: HashMap<String, Vec<f32>>,
    pairs: HashMap<(String, String), Vec<f32>>,
}

/// Embedding vectors indexed by (modality, encoder).
#[derive(Clone, Debug, Default)]
pub struct EmbeddingStore {
    tables: BTreeMap<(Modality, String), EncoderTable>,
}

pub fn load_store(
    mention_path: impl AsRef<Path>,
    pair_path: Option<&Path>,
) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new();
    store.add_file(EmbeddingFile::read(mention_path)?)?;
    if let Some(p) = pair_path {
        store.add_file(EmbeddingFile::read(p)?)?;
    }
    Ok(store)
}

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_file(&mut self, file: EmbeddingFile) -> Result<()> {
        let key = (file.modality, file.encoder.clone());
        let table = self.tables.entry(key).or_insert_with(|| EncoderTable {
            dim: file.dim,
            ..EncoderTable::default()
        });
        if table.dim != file.dim {
            return Err(Error::DimMismatch {
                expected: table.dim,
                actual: file.dim,
            });
        }
        for r in file.records {
            if r.vec.len() != table.dim {
                return Err(Error::DimMismatch {
                    expected: table.dim,
                    actual: r.vec.len(),
                });
            }
            let dup = match r.id {
                RecordId::Mention(id) => table.mentions.insert(id.clone(), r.vec).map(|_| id),
                RecordId::Pair(a, b) => table
                    .pairs
                    .insert((a.clone(), b.clone()), r.vec)
                    .map(|_| format!("{a}->{b}")),
            };
            if let Some(id) = dup {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(())
    }

    pub fn add_path(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.add_file(EmbeddingFile::read(path)?)
    }

    /// Encoders registered under `modality`, sorted.
    pub fn encoders(&self, modality: Modality) -> Vec<&str> {
        self.tables
            .keys()
            .filter(|(m, _)| *m == modality)
            .map(|(_, e)| e.as_str())
            .collect()
    }

    fn table(&self, modality: Modality, encoder: &str) -> Result<&EncoderTable> {
        self.tables
            .get(&(modality, encoder.to_string()))
            .ok_or_else(|| Error::UnknownId(format!("{modality}/{encoder}")))
    }

    pub fn dim(&self, modality: Modality, encoder: &str) -> Result<usize> {
        Ok(self.table(modality, encoder)?.dim)
    }

    pub fn mention_count(&self, modality: Modality, encoder: &str) -> Result<usize> {
        Ok(self.table(modality, encoder)?.mentions.len())
    }

    pub fn pair_count(&self, modality: Modality, encoder: &str) -> Result<usize> {
        Ok(self.table(modality, encoder)?.pairs.len())
    }

    pub fn mention(&self, modality: Modality, encoder: &str, id: &str) -> Result<&[f32]> {
        self.table(modality, encoder)?
            .mentions
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingVector(format!("{modality}/{encoder} mention `{id}`")))
    }

    pub fn ordered_pair(
        &self,
        modality: Modality,
        encoder: &str,
        first: &str,
        second: &str,
    ) -> Result<Option<&[f32]>> {
        Ok(self
            .table(modality, encoder)?
            .pairs
            .get(&(first.to_string(), second.to_string()))
            .map(Vec::as_slice))
    }

    /// `[pair | arg1 | arg2 | arg1 ⊙ arg2]`, with arg1 the mention read first.
    pub fn build_pair_representation(
        &self,
        a: &str,
        b: &str,
        direction: Direction,
        modality: Modality,
        encoder: &str,
        fallback: PairFallback,
    ) -> Result<PairRepresentation> {
        let (first, second) = match direction {
            Direction::AB => (a, b),
            Direction::BA => (b, a),
        };
        let arg1 = self.mention(modality, encoder, first)?;
        let arg2 = self.mention(modality, encoder, second)?;
        let h = arg1.len();
        let mut vec = Vec::with_capacity(4 * h);
        match (self.ordered_pair(modality, encoder, first, second)?, fallback) {
            (Some(p), _) => vec.extend(p.iter().map(|&v| v as f64)),
            (None, PairFallback::Mean) => vec.extend(
                arg1.iter()
                    .zip(arg2)
                    .map(|(&x, &y)| (x as f64 + y as f64) / 2.0),
            ),
            (None, PairFallback::Error) => {
                return Err(Error::MissingVector(format!(
                    "{modality}/{encoder} pair `{first}`->`{second}`"
                )))
            }
        }
        vec.extend(arg1.iter().map(|&v| v as f64));
        vec.extend(arg2.iter().map(|&v| v as f64));
        vec.extend(arg1.iter().zip(arg2).map(|(&x, &y)| x as f64 * y as f64));
        Ok(PairRepresentation {
            direction,
            modality,
            encoder: encoder.to_string(),
            vec,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairRepresentation {
    pub direction: Direction,
    pub modality: Modality,
    pub encoder: String,
    /// Length 4H.
    pub vec: Vec<f64>,
}

impl PairRepresentation {
    pub fn hidden_dim(&self) -> usize {
        self.vec.len() / 4
    }

    /// The four H-length blocks: pair, arg1, arg2, product.
    pub fn blocks(&self) -> [&[f64]; 4] {
        let h = self.hidden_dim();
        [
            &self.vec[..h],
            &self.vec[h..2 * h],
            &self.vec[2 * h..3 * h],
            &self.vec[3 * h..],
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedRepresentation {
    pub direction: Direction,
    /// Text 4H followed by vision 4H.
    pub vec: Vec<f64>,
}

pub fn build_fused(
    text: &PairRepresentation,
    vision: &PairRepresentation,
) -> Result<FusedRepresentation> {
    if text.direction != vision.direction {
        return Err(Error::Invalid(format!(
            "direction mismatch: text {:?}, vision {:?}",
            text.direction, vision.direction
        )));
    }
    if text.vec.len() != vision.vec.len() {
        return Err(Error::DimMismatch {
            expected: text.vec.len(),
            actual: vision.vec.len(),
        });
    }
    let mut vec = Vec::with_capacity(text.vec.len() * 2);
    vec.extend_from_slice(&text.vec);
    vec.extend_from_slice(&vision.vec);
    Ok(FusedRepresentation {
        direction: text.direction,
        vec,
    })
}
