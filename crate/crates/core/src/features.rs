//! Scorer inputs for each model kind, built from an embedding store.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{MentionPair, PairLabel};
use crate::embedstore::{build_fused, Direction, EmbeddingStore, Modality, PairFallback};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::linmap::{LinearMap, MapDirection};
use crate::scorer::{PairScore, ScorerParams, TrainSample};

/// Which representation a scorer consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Text,
    Vision,
    Fused,
    /// Source-modality representation pushed through a bridge matrix.
    Mapped(MapDirection),
}

impl FeatureKind {
    /// Modality of the space the resulting vector lives in.
    pub fn space(self) -> Option<Modality> {
        match self {
            FeatureKind::Text => Some(Modality::Text),
            FeatureKind::Vision => Some(Modality::Vision),
            FeatureKind::Fused => None,
            FeatureKind::Mapped(d) => Some(d.target()),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::Text => f.write_str("text"),
            FeatureKind::Vision => f.write_str("vision"),
            FeatureKind::Fused => f.write_str("fused"),
            FeatureKind::Mapped(d) => write!(f, "mapped-{d}"),
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(FeatureKind::Text),
            "vision" => Ok(FeatureKind::Vision),
            "fused" => Ok(FeatureKind::Fused),
            _ => match s.strip_prefix("mapped-") {
                Some(d) => Ok(FeatureKind::Mapped(d.parse()?)),
                None => Err(Error::Invalid(format!("unknown feature kind `{s}`"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FeatureSource<'a> {
    pub store: &'a EmbeddingStore,
    pub text_encoder: &'a str,
    pub vision_encoder: &'a str,
    pub fallback: PairFallback,
}

impl<'a> FeatureSource<'a> {
    pub fn encoder(&self, modality: Modality) -> &'a str {
        match modality {
            Modality::Text => self.text_encoder,
            Modality::Vision => self.vision_encoder,
        }
    }

    /// Hidden size H of a modality's encoder.
    pub fn hidden_dim(&self, modality: Modality) -> Result<usize> {
        self.store.dim(modality, self.encoder(modality))
    }

    /// Scorer input width for `kind`.
    pub fn input_dim(&self, kind: FeatureKind) -> Result<usize> {
        Ok(match kind {
            FeatureKind::Text => 4 * self.hidden_dim(Modality::Text)?,
            FeatureKind::Vision => 4 * self.hidden_dim(Modality::Vision)?,
            FeatureKind::Fused => {
                4 * (self.hidden_dim(Modality::Text)? + self.hidden_dim(Modality::Vision)?)
            }
            FeatureKind::Mapped(d) => 4 * self.hidden_dim(d.target())?,
        })
    }

    fn raw(&self, modality: Modality, a: &str, b: &str, dir: Direction) -> Result<Vec<f64>> {
        Ok(self
            .store
            .build_pair_representation(a, b, dir, modality, self.encoder(modality), self.fallback)?
            .vec)
    }

    fn one(&self, kind: FeatureKind, map: Option<&LinearMap>, a: &str, b: &str, dir: Direction) -> Result<Vec<f64>> {
        match kind {
            FeatureKind::Text => self.raw(Modality::Text, a, b, dir),
            FeatureKind::Vision => self.raw(Modality::Vision, a, b, dir),
            FeatureKind::Fused => {
                let enc_t = self.text_encoder;
                let enc_v = self.vision_encoder;
                let t = self
                    .store
                    .build_pair_representation(a, b, dir, Modality::Text, enc_t, self.fallback)?;
                let v = self
                    .store
                    .build_pair_representation(a, b, dir, Modality::Vision, enc_v, self.fallback)?;
                Ok(build_fused(&t, &v)?.vec)
            }
            FeatureKind::Mapped(d) => {
                let map = map.ok_or_else(|| Error::Invalid(format!("{kind} features need a map")))?;
                if map.direction != d {
                    return Err(Error::Invalid(format!(
                        "map direction {} does not match feature kind {kind}",
                        map.direction
                    )));
                }
                map.apply(&self.raw(d.source(), a, b, dir)?)
            }
        }
    }

    /// AB and BA inputs for one pair.
    pub fn pair_inputs(
        &self,
        kind: FeatureKind,
        map: Option<&LinearMap>,
        a: &str,
        b: &str,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            self.one(kind, map, a, b, Direction::AB)?,
            self.one(kind, map, a, b, Direction::BA)?,
        ))
    }

    /// Bidirectional training samples. Every pair must carry a gold label.
    pub fn training_samples(
        &self,
        kind: FeatureKind,
        map: Option<&LinearMap>,
        pairs: &[MentionPair],
    ) -> Result<Vec<TrainSample>> {
        pairs
            .par_iter()
            .map(|p| {
                let label = match p.label {
                    PairLabel::Coreferent => 1.0,
                    PairLabel::NonCoreferent => 0.0,
                    PairLabel::Unknown => {
                        return Err(Error::Invalid(format!(
                            "training pair {} has no gold label",
                            p.key()
                        )))
                    }
                };
                let (ab, ba) = self.pair_inputs(kind, map, &p.a, &p.b)?;
                Ok(TrainSample::bidirectional(ab, ba, label))
            })
            .collect()
    }

    /// Scores in pair order.
    pub fn score_pairs(
        &self,
        params: &ScorerParams,
        kind: FeatureKind,
        map: Option<&LinearMap>,
        pairs: &[MentionPair],
    ) -> Result<Vec<PairScore>> {
        pairs
            .par_iter()
            .map(|p| {
                let (ab, ba) = self.pair_inputs(kind, map, &p.a, &p.b)?;
                Ok(PairScore::new(&p.a, &p.b, params.forward(&ab)?, params.forward(&ba)?))
            })
            .collect()
    }

    /// Paired text and vision rows for fitting bridge matrices: one AB and
    /// one BA row per pair, optionally only gold positives.
    pub fn map_training_matrices(
        &self,
        pairs: &[MentionPair],
        positives_only: bool,
    ) -> Result<(Matrix, Matrix)> {
        let selected: Vec<&MentionPair> = pairs
            .iter()
            .filter(|p| !positives_only || p.label == PairLabel::Coreferent)
            .collect();
        if selected.is_empty() {
            return Err(Error::Invalid("no pairs available for map fitting".into()));
        }
        let rows: Vec<[Vec<f64>; 4]> = selected
            .par_iter()
            .map(|p| {
                Ok([
                    self.raw(Modality::Text, &p.a, &p.b, Direction::AB)?,
                    self.raw(Modality::Text, &p.a, &p.b, Direction::BA)?,
                    self.raw(Modality::Vision, &p.a, &p.b, Direction::AB)?,
                    self.raw(Modality::Vision, &p.a, &p.b, Direction::BA)?,
                ])
            })
            .collect::<Result<_>>()?;
        let mut text = Vec::with_capacity(rows.len() * 2);
        let mut vision = Vec::with_capacity(rows.len() * 2);
        for [t_ab, t_ba, v_ab, v_ba] in rows {
            text.push(t_ab);
            text.push(t_ba);
            vision.push(v_ab);
            vision.push(v_ba);
        }
        Ok((Matrix::from_rows(&text)?, Matrix::from_rows(&vision)?))
    }
}
