//! Binary checkpoints for parameter vectors and server state.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic[4] version:u32 kind_len:u32 kind[kind_len] round:u64 n_sections:u32
//! repeated: name_len:u32 name[name_len] len:u64 f64[len]
//! ```
//!
//! A bare parameter vector is a checkpoint with one section named `params`.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::fedalgo::{ScaffoldState, ServerState};
use crate::model::ParamVector;

pub const MAGIC: &[u8; 4] = b"FSCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("CorruptCheckpoint: {0}")]
    Corrupt(String),
    #[error("VersionMismatch: file has version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CheckpointError> = std::result::Result<T, E>;

struct Section<'a> {
    name: String,
    data: std::borrow::Cow<'a, [f64]>,
}

fn encode(kind: &str, round: u64, sections: &[Section<'_>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(kind.len() as u32).to_le_bytes());
    out.extend_from_slice(kind.as_bytes());
    out.extend_from_slice(&round.to_le_bytes());
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for s in sections {
        out.extend_from_slice(&(s.name.len() as u32).to_le_bytes());
        out.extend_from_slice(s.name.as_bytes());
        out.extend_from_slice(&(s.data.len() as u64).to_le_bytes());
        for x in s.data.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            CheckpointError::Corrupt(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::Corrupt("non-UTF-8 name".into()))
    }
}

struct Decoded {
    kind: String,
    round: u64,
    sections: Vec<(String, Vec<f64>)>,
}

fn decode(buf: &[u8]) -> Result<Decoded> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::Corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let kind = r.string()?;
    let round = r.u64()?;
    let n = r.u32()?;
    let mut sections = Vec::new();
    for _ in 0..n {
        let name = r.string()?;
        let len = usize::try_from(r.u64()?).map_err(|_| CheckpointError::Corrupt("section too large".into()))?;
        let bytes = r.take(len.checked_mul(8).ok_or_else(|| CheckpointError::Corrupt("section too large".into()))?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        sections.push((name, data));
    }
    if r.pos != buf.len() {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(Decoded { kind, round, sections })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    Ok(crate::report::write_atomic(path, bytes)?)
}

pub fn encode_params(params: &ParamVector) -> Vec<u8> {
    encode(
        "params",
        0,
        &[Section {
            name: "params".into(),
            data: params.values.as_slice().into(),
        }],
    )
}

pub fn decode_params(buf: &[u8]) -> Result<ParamVector> {
    let d = decode(buf)?;
    match d.sections.into_iter().find(|(n, _)| n == "params") {
        Some((_, v)) => Ok(v.into()),
        None => Err(CheckpointError::Corrupt("no `params` section".into())),
    }
}

pub fn save_params(params: &ParamVector, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_params(params))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ParamVector> {
    decode_params(&fs::read(path)?)
}

pub fn encode_state(state: &ServerState) -> Vec<u8> {
    let mut sections = vec![
        Section { name: "global".into(), data: state.global_params.values.as_slice().into() },
        Section { name: "m".into(), data: state.m.as_slice().into() },
        Section { name: "v".into(), data: state.v.as_slice().into() },
        Section { name: "momentum".into(), data: state.momentum_model.values.as_slice().into() },
    ];
    if let Some(sc) = &state.scaffold {
        sections.push(Section { name: "scaffold.eta_s".into(), data: vec![sc.eta_s].into() });
        sections.push(Section { name: "scaffold.c".into(), data: sc.c.as_slice().into() });
        for (k, ck) in sc.c_clients.iter().enumerate() {
            sections.push(Section { name: format!("scaffold.c.{k}"), data: ck.as_slice().into() });
        }
    }
    encode(&state.algorithm, state.round as u64, &sections)
}

pub fn decode_state(buf: &[u8]) -> Result<ServerState> {
    let d = decode(buf)?;
    let mut sections = d.sections.into_iter();
    let mut next = |want: &str| -> Result<Vec<f64>> {
        match sections.next() {
            Some((name, v)) if name == want => Ok(v),
            Some((name, _)) => Err(CheckpointError::Corrupt(format!("expected section `{want}`, found `{name}`"))),
            None => Err(CheckpointError::Corrupt(format!("missing section `{want}`"))),
        }
    };
    let global = next("global")?;
    let m = next("m")?;
    let v = next("v")?;
    let momentum = next("momentum")?;
    let n = global.len();
    if m.len() != n || v.len() != n || momentum.len() != n {
        return Err(CheckpointError::Corrupt("buffer lengths disagree".into()));
    }
    let scaffold = match next("scaffold.eta_s") {
        Ok(eta) => {
            let eta_s = *eta.first().ok_or_else(|| CheckpointError::Corrupt("empty eta_s".into()))?;
            let c = next("scaffold.c")?;
            let mut c_clients = Vec::new();
            loop {
                match next(&format!("scaffold.c.{}", c_clients.len())) {
                    Ok(ck) => c_clients.push(ck),
                    Err(CheckpointError::Corrupt(msg)) if msg.starts_with("missing") => break,
                    Err(e) => return Err(e),
                }
            }
            Some(ScaffoldState { eta_s, c, c_clients })
        }
        Err(CheckpointError::Corrupt(msg)) if msg.starts_with("missing") => None,
        Err(e) => return Err(e),
    };
    Ok(ServerState {
        algorithm: d.kind,
        round: d.round as usize,
        global_params: global.into(),
        m,
        v,
        momentum_model: momentum.into(),
        scaffold,
    })
}

pub fn save_state(state: &ServerState, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_state(state))
}

pub fn load_state(path: impl AsRef<Path>) -> Result<ServerState> {
    decode_state(&fs::read(path)?)
}
