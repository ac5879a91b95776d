//! JSON encodings shared by the library reports and the CLI.
//!
//! Complex matrices are nested row arrays of `[re, im]` pairs. Extended reals
//! write the unbounded value as the string `"+inf"`.

use std::fmt;

use num_complex::Complex64;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::qmatrix::{CMatrix, CVector, HermitianOperator};

/// A real number or `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// The finite value, or `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::PosInf => None,
        }
    }

    pub fn neg_finite(self) -> Option<f64> {
        self.finite().map(|x| -x)
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        if x == f64::INFINITY {
            ExtReal::PosInf
        } else {
            ExtReal::Finite(x)
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::PosInf => f.write_str("+inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(x) => s.serialize_f64(*x),
            ExtReal::PosInf => s.serialize_str("+inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(ExtReal::Finite(x)),
            Raw::Str(s) if s == "+inf" || s == "inf" => Ok(ExtReal::PosInf),
            Raw::Str(s) => Err(de::Error::custom(format!("expected a number or \"+inf\", got {s:?}"))),
        }
    }
}

type Rows = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_rows(m: &CMatrix) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn rows_to_matrix(rows: &Rows) -> Result<CMatrix, String> {
    let r = rows.len();
    if r == 0 {
        return Err("matrix has no rows".into());
    }
    let cols = rows[0].len();
    if cols == 0 {
        return Err("matrix has empty rows".into());
    }
    if let Some(i) = rows.iter().position(|row| row.len() != cols) {
        return Err(format!("row {i} has {} entries, expected {cols}", rows[i].len()));
    }
    Ok(CMatrix::from_fn(r, cols, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

/// `#[serde(with = "codec::matrix")]` for [`CMatrix`] fields.
pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let rows = Rows::deserialize(d)?;
        rows_to_matrix(&rows).map_err(de::Error::custom)
    }
}

/// `#[serde(with = "codec::matrices")]` for `Vec<CMatrix>` fields.
pub mod matrices {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[CMatrix], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(matrix_to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMatrix>, D::Error> {
        let all = Vec::<Rows>::deserialize(d)?;
        all.iter()
            .enumerate()
            .map(|(k, rows)| rows_to_matrix(rows).map_err(|e| de::Error::custom(format!("matrix {k}: {e}"))))
            .collect()
    }
}

/// `#[serde(with = "codec::hermitian")]` for [`HermitianOperator`] fields.
pub mod hermitian {
    use super::*;

    pub fn serialize<S: Serializer>(h: &HermitianOperator, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_rows(h.matrix()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<HermitianOperator, D::Error> {
        let m = super::matrix::deserialize(d)?;
        HermitianOperator::new(m).map_err(de::Error::custom)
    }
}

/// `#[serde(with = "codec::vector")]`: a complex vector as a list of `[re, im]`.
pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &CVector, s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CVector, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        if raw.is_empty() {
            return Err(de::Error::custom("vector is empty"));
        }
        Ok(CVector::from_iterator(raw.len(), raw.iter().map(|p| Complex64::new(p[0], p[1]))))
    }
}
