//! Ridge-regression bridge matrices between text and vision pair spaces.
//!
//! Row-vector convention throughout: a mapped representation is `x · β`,
//! where `β` is D×D and solves `(XᵀX + λI) β = XᵀY`. No intercept.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::embedstore::Modality;
use crate::error::{Error, Result};
use crate::linalg::{lu_solve, Cholesky, Matrix};

const MAP_MAGIC: &[u8; 4] = b"LSEM";
const MAP_VERSION: u32 = 1;

pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Pivot-to-diagonal ratio under which an unregularized system counts as singular.
const SINGULAR_RTOL: f64 = 1e-12;
const REFINE_ABOVE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapDirection {
    TextToVision,
    VisionToText,
}

impl MapDirection {
    pub fn code(self) -> u8 {
        match self {
            MapDirection::TextToVision => 0,
            MapDirection::VisionToText => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(MapDirection::TextToVision),
            1 => Ok(MapDirection::VisionToText),
            other => Err(Error::Format(format!("unknown map direction {other}"))),
        }
    }

    pub fn source(self) -> Modality {
        match self {
            MapDirection::TextToVision => Modality::Text,
            MapDirection::VisionToText => Modality::Vision,
        }
    }

    pub fn target(self) -> Modality {
        match self {
            MapDirection::TextToVision => Modality::Vision,
            MapDirection::VisionToText => Modality::Text,
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            MapDirection::TextToVision => MapDirection::VisionToText,
            MapDirection::VisionToText => MapDirection::TextToVision,
        }
    }
}

impl fmt::Display for MapDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapDirection::TextToVision => "text_to_vision",
            MapDirection::VisionToText => "vision_to_text",
        })
    }
}

impl FromStr for MapDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text_to_vision" | "t2v" => Ok(MapDirection::TextToVision),
            "vision_to_text" | "v2t" => Ok(MapDirection::VisionToText),
            other => Err(Error::Invalid(format!("unknown map direction `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    pub direction: MapDirection,
    pub matrix: Matrix,
    pub lambda: f64,
    /// Not persisted in the map file.
    pub source_encoder: String,
    /// Not persisted in the map file.
    pub target_encoder: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n_samples: usize,
    /// `‖Y − Xβ‖_F / ‖Y‖_F`.
    pub train_residual: f64,
    /// `‖(XᵀX + λI)β − XᵀY‖_F / ‖XᵀY‖_F`.
    pub normal_eq_residual: f64,
}

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Solves the ridge normal equations for `β` with `Y ≈ Xβ`.
pub fn fit_ridge(
    x: &Matrix,
    y: &Matrix,
    lambda: f64,
    direction: MapDirection,
) -> Result<(LinearMap, FitReport)> {
    if x.rows() == 0 {
        return Err(Error::Invalid("ridge fit needs at least one sample".into()));
    }
    if x.rows() != y.rows() {
        return Err(Error::DimMismatch {
            expected: x.rows(),
            actual: y.rows(),
        });
    }
    if x.cols() != y.cols() {
        return Err(Error::DimMismatch {
            expected: x.cols(),
            actual: y.cols(),
        });
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("source matrix".into()));
    }
    if !y.is_finite() {
        return Err(Error::NonFinite("target matrix".into()));
    }

    let mut gram = x.t_matmul(x)?;
    gram.add_diagonal(lambda);
    let rhs = x.t_matmul(y)?;

    let mut beta = solve_spd(&gram, &rhs, lambda)?;
    let mut resid = gram.matmul(&beta)?.sub(&rhs)?;
    let rhs_norm = rhs.frobenius_norm();
    if relative(resid.frobenius_norm(), rhs_norm) > REFINE_ABOVE {
        // one step of iterative refinement
        let correction = solve_spd(&gram, &resid.scale(-1.0), lambda)?;
        beta = Matrix::from_vec(
            beta.rows(),
            beta.cols(),
            beta.as_slice()
                .iter()
                .zip(correction.as_slice())
                .map(|(b, c)| b + c)
                .collect(),
        )?;
        resid = gram.matmul(&beta)?.sub(&rhs)?;
    }
    if !beta.is_finite() {
        return Err(Error::Singular("solution is not finite".into()));
    }

    let fitted = x.matmul(&beta)?;
    let report = FitReport {
        n_samples: x.rows(),
        train_residual: relative(y.sub(&fitted)?.frobenius_norm(), y.frobenius_norm()),
        normal_eq_residual: relative(resid.frobenius_norm(), rhs_norm),
    };
    let map = LinearMap {
        direction,
        matrix: beta,
        lambda,
        source_encoder: String::new(),
        target_encoder: String::new(),
    };
    Ok((map, report))
}

fn solve_spd(gram: &Matrix, rhs: &Matrix, lambda: f64) -> Result<Matrix> {
    let factored = Cholesky::factor(gram).and_then(|ch| {
        if lambda == 0.0 {
            let max_diag = (0..gram.rows()).map(|i| gram.get(i, i)).fold(0.0, f64::max);
            let l = ch.lower();
            let min_pivot = (0..l.rows()).map(|i| l.get(i, i).powi(2)).fold(f64::INFINITY, f64::min);
            if min_pivot <= SINGULAR_RTOL * max_diag {
                return Err(Error::Singular("ill-conditioned Gram matrix".into()));
            }
        }
        Ok(ch)
    });
    match factored {
        Ok(ch) => ch.solve(rhs),
        Err(_) => lu_solve(gram, rhs, SINGULAR_RTOL).map_err(|e| match e {
            Error::Singular(msg) => Error::Singular(format!(
                "normal equations singular with lambda={lambda}: {msg}"
            )),
            other => other,
        }),
    }
}

impl LinearMap {
    pub fn identity(dim: usize, direction: MapDirection) -> Self {
        Self {
            direction,
            matrix: Matrix::identity(dim),
            lambda: 0.0,
            source_encoder: String::new(),
            target_encoder: String::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// `x · β` for one row vector.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimMismatch {
                expected: d,
                actual: x.len(),
            });
        }
        let mut out = vec![0.0; d];
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            for (o, &b) in out.iter_mut().zip(self.matrix.row(k)) {
                *o += xk * b;
            }
        }
        Ok(out)
    }

    /// `X · β` row-wise.
    pub fn apply_matrix(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                actual: x.cols(),
            });
        }
        x.matmul(&self.matrix)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let d = u32::try_from(self.dim()).map_err(|_| Error::Format("D exceeds u32".into()))?;
        let mut w = ByteWriter::new();
        w.bytes(MAP_MAGIC);
        w.u32(MAP_VERSION);
        w.u8(self.direction.code());
        w.u32(d);
        w.f64(self.lambda);
        for &v in self.matrix.as_slice() {
            w.f64(v);
        }
        Ok(w.finish())
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::checked(data)?;
        r.expect_magic(MAP_MAGIC)?;
        let version = r.u32()?;
        if version != MAP_VERSION {
            return Err(Error::Format(format!("unsupported LSEM version {version}")));
        }
        let direction = MapDirection::from_code(r.u8()?)?;
        let d = r.u32()? as usize;
        let lambda = r.f64()?;
        let mut data = Vec::with_capacity(d * d);
        for _ in 0..d * d {
            data.push(r.f64()?);
        }
        r.finish()?;
        let matrix = Matrix::from_vec(d, d, data)?;
        if !matrix.is_finite() || !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::NonFinite("map file".into()));
        }
        Ok(Self {
            direction,
            matrix,
            lambda,
            source_encoder: String::new(),
            target_encoder: String::new(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

#[derive(Clone, Debug)]
pub struct BidirectionalFit {
    pub text_to_vision: LinearMap,
    pub vision_to_text: LinearMap,
    pub text_to_vision_report: FitReport,
    pub vision_to_text_report: FitReport,
}

/// Fits both directions over row-aligned text and vision representations.
pub fn fit_bidirectional(x_text: &Matrix, x_vision: &Matrix, lambda: f64) -> Result<BidirectionalFit> {
    let (t2v, r1) = fit_ridge(x_text, x_vision, lambda, MapDirection::TextToVision)?;
    let (v2t, r2) = fit_ridge(x_vision, x_text, lambda, MapDirection::VisionToText)?;
    Ok(BidirectionalFit {
        text_to_vision: t2v,
        vision_to_text: v2t,
        text_to_vision_report: r1,
        vision_to_text_report: r2,
    })
}

/// Largest per-row `‖x·M₁·M₂ − x‖ / ‖x‖` over the rows of `x`.
pub fn round_trip_error(first: &LinearMap, second: &LinearMap, x: &Matrix) -> Result<f64> {
    let there = first.apply_matrix(x)?;
    let back = second.apply_matrix(&there)?;
    let mut worst = 0.0_f64;
    for r in 0..x.rows() {
        let orig = x.row(r);
        let num: f64 = orig
            .iter()
            .zip(back.row(r))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(relative(num, crate::linalg::norm(orig)));
    }
    Ok(worst)
}
