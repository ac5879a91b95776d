use std::fs;
use std::path::Path;

use oneshot_qcap::channel::{self, ChannelSequence, KrausChannel, SequenceSpec};
use oneshot_qcap::codec;
use oneshot_qcap::qmatrix::{CMatrix, DensityOperator, FactorSpec, HermitianOperator};
use oneshot_qcap::spectrum::{PairSpec, SequencePair};
use oneshot_qcap::QcapError;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), msg: e.to_string() })
}

fn json_err(path: &Path, e: serde_json::Error) -> CliError {
    // serde_json appends " at line L column C" to messages; the location is reported separately
    let msg = e.to_string();
    let msg = match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg,
    };
    CliError::Input { path: path.to_path_buf(), line: e.line(), column: e.column(), msg }
}

fn core_err(path: &Path, e: QcapError) -> CliError {
    CliError::Input { path: path.to_path_buf(), line: 0, column: 0, msg: e.to_string() }
}

pub fn parse<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| json_err(path, e))
}

/// A named channel family, as an alternative to explicit Kraus operators.
#[derive(Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum Family {
    Identity { d: usize },
    Depolarizing { d: usize, p: f64 },
    AmplitudeDamping { gamma: f64 },
    Dephasing { p: f64 },
    Unitary {
        #[serde(with = "codec::matrix")]
        u: CMatrix,
    },
    Random { d_in: usize, d_out: usize, rank: usize, seed: u64 },
}

impl Family {
    fn build(self) -> oneshot_qcap::Result<KrausChannel> {
        match self {
            Family::Identity { d } => channel::identity(d),
            Family::Depolarizing { d, p } => channel::depolarizing(d, p),
            Family::AmplitudeDamping { gamma } => channel::amplitude_damping(gamma),
            Family::Dephasing { p } => channel::dephasing(p),
            Family::Unitary { u } => channel::unitary(u),
            Family::Random { d_in, d_out, rank, seed } => channel::random_channel(d_in, d_out, rank, seed),
        }
    }
}

/// `{"in_dim", "out_dim", "kraus"}` or `{"family": ..., params}`.
pub fn channel(path: &Path) -> Result<KrausChannel, CliError> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    if value.get("family").is_some() {
        let fam: Family = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
        fam.build().map_err(|e| core_err(path, e))
    } else {
        serde_json::from_str(&text).map_err(|e| json_err(path, e))
    }
}

pub fn sequence(path: &Path) -> Result<ChannelSequence, CliError> {
    let raw: SequenceSpec = parse(path)?;
    raw.build().map_err(|e| match e {
        QcapError::Resource(_) => CliError::Core(e),
        e => core_err(path, e),
    })
}

pub fn pair(path: &Path) -> Result<SequencePair, CliError> {
    let raw: PairSpec = parse(path)?;
    raw.build().map_err(|e| match e {
        QcapError::Resource(_) => CliError::Core(e),
        e => core_err(path, e),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequest {
    #[serde(default)]
    id: Option<serde_json::Value>,
    #[serde(with = "codec::matrix")]
    rho: CMatrix,
    #[serde(default, with = "opt_matrix")]
    sigma: Option<CMatrix>,
    #[serde(default, with = "opt_matrix")]
    p: Option<CMatrix>,
    #[serde(default)]
    factors: Option<FactorSpec>,
    #[serde(default)]
    alpha: Vec<f64>,
}

mod opt_matrix {
    use super::*;
    use serde::Deserializer;

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<CMatrix>, D::Error> {
        #[derive(Deserialize)]
        struct W(#[serde(with = "codec::matrix")] CMatrix);
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }
}

/// One validated line of an entropy batch.
pub struct EntropyRequest {
    pub id: Option<serde_json::Value>,
    pub rho: DensityOperator,
    pub sigma: Option<HermitianOperator>,
    pub p: Option<HermitianOperator>,
    pub factors: Option<FactorSpec>,
    pub alpha: Vec<f64>,
}

fn field(path: &Path, line: usize, name: &str, e: QcapError) -> CliError {
    CliError::Input { path: path.to_path_buf(), line, column: 0, msg: format!("field `{name}`: {e}") }
}

/// A JSON object or a stream of them (one per line, or pretty-printed one after another).
pub fn entropy_requests(path: &Path) -> Result<Vec<EntropyRequest>, CliError> {
    let text = read(path)?;
    let mut out = Vec::new();
    let mut stream = serde_json::Deserializer::from_str(&text).into_iter::<RawRequest>();
    loop {
        let start = stream.byte_offset();
        let Some(next) = stream.next() else { break };
        let raw = next.map_err(|e| json_err(path, e))?;
        let lead = text[start..].chars().take_while(|c| c.is_whitespace()).filter(|&c| c == '\n').count();
        let line = 1 + text[..start].matches('\n').count() + lead;
        let rho = DensityOperator::from_matrix(raw.rho).map_err(|e| field(path, line, "rho", e))?;
        let herm = |m: Option<CMatrix>, name: &str| -> Result<Option<HermitianOperator>, CliError> {
            m.map(HermitianOperator::new).transpose().map_err(|e| field(path, line, name, e))
        };
        out.push(EntropyRequest {
            id: raw.id,
            rho,
            sigma: herm(raw.sigma, "sigma")?,
            p: herm(raw.p, "p")?,
            factors: raw.factors,
            alpha: raw.alpha,
        });
    }
    if out.is_empty() {
        return Err(CliError::Input { path: path.to_path_buf(), line: 1, column: 0, msg: "no requests".into() });
    }
    Ok(out)
}
