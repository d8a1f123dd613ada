//! Checkpoint files: one JSON header line, then the parameter tensors as raw
//! little-endian `f64` blocks in [`Parameters::named_tensors`] order.
//!
//! ```text
//! {"format":"gapfill-rnn","version":1,"kind":"uni","d_in":97,"d_out":96,"hidden":64,"family":"softmax","blocks":[["w_x",6208],...]}\n
//! <w_x bytes><w_h bytes>...
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BiRnnParams, OutputFamily, Parameters, UniRnnParams};
use crate::error::{Error, Result};

const FORMAT: &str = "gapfill-rnn";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Uni,
    Bi,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Uni => "uni",
            ModelKind::Bi => "bi",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Uni(UniRnnParams),
    Bi(BiRnnParams),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Uni(_) => ModelKind::Uni,
            Model::Bi(_) => ModelKind::Bi,
        }
    }

    pub fn family(&self) -> OutputFamily {
        match self {
            Model::Uni(p) => p.family,
            Model::Bi(p) => p.family,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Uni(p) => p.input_dim(),
            Model::Bi(p) => p.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Model::Uni(p) => p.output_dim(),
            Model::Bi(p) => p.output_dim(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            Model::Uni(p) => p.hidden_size(),
            Model::Bi(p) => p.hidden_size(),
        }
    }

    fn params(&self) -> &dyn Parameters {
        match self {
            Model::Uni(p) => p,
            Model::Bi(p) => p,
        }
    }

    pub fn into_uni(self) -> Result<UniRnnParams> {
        match self {
            Model::Uni(p) => Ok(p),
            Model::Bi(_) => Err(kind_mismatch(ModelKind::Uni, ModelKind::Bi)),
        }
    }

    pub fn into_bi(self) -> Result<BiRnnParams> {
        match self {
            Model::Bi(p) => Ok(p),
            Model::Uni(_) => Err(kind_mismatch(ModelKind::Bi, ModelKind::Uni)),
        }
    }
}

fn kind_mismatch(expected: ModelKind, found: ModelKind) -> Error {
    Error::Checkpoint {
        field: "kind".into(),
        message: format!("expected a {expected} model, found {found}"),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: ModelKind,
    d_in: usize,
    d_out: usize,
    hidden: usize,
    family: OutputFamily,
    blocks: Vec<(String, usize)>,
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let tensors = model.params().named_tensors();
    let header = Header {
        format: FORMAT.into(),
        version: CHECKPOINT_VERSION,
        kind: model.kind(),
        d_in: model.input_dim(),
        d_out: model.output_dim(),
        hidden: model.hidden_size(),
        family: model.family(),
        blocks: tensors
            .iter()
            .map(|(n, t)| ((*n).to_string(), t.len()))
            .collect(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for (_, t) in &tensors {
        for v in t.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

fn field_err(field: &str, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        field: field.into(),
        message: message.into(),
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let bytes = fs::read(path)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| field_err("format", "missing header line"))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| field_err("format", format!("unreadable header: {e}")))?;
    if header.format != FORMAT {
        return Err(field_err(
            "format",
            format!("expected `{FORMAT}`, found `{}`", header.format),
        ));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(field_err(
            "version",
            format!(
                "unsupported version {} (this build reads {CHECKPOINT_VERSION})",
                header.version
            ),
        ));
    }

    let mut model = match header.kind {
        ModelKind::Uni => Model::Uni(UniRnnParams::zeros(
            header.d_in,
            header.d_out,
            header.hidden,
            header.family,
        )),
        ModelKind::Bi => Model::Bi(BiRnnParams::zeros(
            header.d_in,
            header.d_out,
            header.hidden,
            header.family,
        )),
    };

    let mut body = &bytes[nl + 1..];
    {
        let tensors = match &mut model {
            Model::Uni(p) => p.named_tensors_mut(),
            Model::Bi(p) => p.named_tensors_mut(),
        };
        if tensors.len() != header.blocks.len() {
            return Err(field_err(
                "blocks",
                format!(
                    "expected {} blocks, header lists {}",
                    tensors.len(),
                    header.blocks.len()
                ),
            ));
        }
        for ((name, dst), (hname, hlen)) in tensors.into_iter().zip(&header.blocks) {
            if name != hname || dst.len() != *hlen {
                return Err(field_err(
                    name,
                    format!(
                        "header lists `{hname}` with {hlen} values, expected {} values",
                        dst.len()
                    ),
                ));
            }
            let need = dst.len() * 8;
            if body.len() < need {
                return Err(field_err(
                    name,
                    format!("truncated: need {need} bytes, {} remain", body.len()),
                ));
            }
            for (v, chunk) in dst.iter_mut().zip(body[..need].chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
            body = &body[need..];
        }
    }
    if !body.is_empty() {
        return Err(field_err(
            "blocks",
            format!("{} trailing bytes after the last block", body.len()),
        ));
    }
    match &model {
        Model::Uni(p) => p.validate()?,
        Model::Bi(p) => p.validate()?,
    }
    Ok(model)
}
