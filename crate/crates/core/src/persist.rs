//! Versioned binary container for model parameters and matrix state.
//!
//! Layout:
//!
//! ```text
//! "ASRQ1\n" | u64 LE header length | JSON header (UTF-8, LF-terminated) | raw sections
//! ```
//!
//! Section offsets in the header are relative to the first byte after the
//! header. Model weights are stored as little-endian f32, row-major, in the
//! order W_e, b_e, W_c, b_c, W_s, b_s, W_t, b_t. Loading validates the whole
//! file before building anything, so a failed load leaves no partial result.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrices::MatrixState;
use crate::model::{Activation, ModelParams, TransitionTransform};

pub const MAGIC: &[u8; 6] = b"ASRQ1\n";
pub const FORMAT_VERSION: u32 = 1;

const KIND_MODEL: &str = "model";
const KIND_STATE: &str = "state";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionEntry {
    pub name: String,
    pub offset: u64,
    pub length: u64,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub kind: String,
    pub m: usize,
    pub n: usize,
    #[serde(default)]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_activation: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoder_activation: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransitionTransform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_self_transitions: Option<bool>,
    pub vocab_digest: String,
    pub sections: Vec<SectionEntry>,
}

/// Metadata stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckpointMeta {
    pub num_users: usize,
    pub seed: u64,
    pub vocab_digest: String,
}

/// Bytes taken by magic, length prefix and JSON header of a container.
pub fn header_len(bytes: &[u8]) -> Result<usize> {
    let (_, json_len) = split_prefix(bytes)?;
    Ok(MAGIC.len() + 8 + json_len)
}

fn split_prefix(bytes: &[u8]) -> Result<(&[u8], usize)> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 8 {
        return Err(Error::Truncated { section: "header length".into(), needed: 8, available: rest.len() });
    }
    let len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes"));
    let len = usize::try_from(len).map_err(|_| Error::Format("header length overflows".into()))?;
    let rest = &rest[8..];
    if rest.len() < len {
        return Err(Error::Truncated { section: "header".into(), needed: len, available: rest.len() });
    }
    Ok((rest, len))
}

struct Builder {
    sections: Vec<SectionEntry>,
    payload: Vec<u8>,
}

impl Builder {
    fn new() -> Self {
        Self { sections: Vec::new(), payload: Vec::new() }
    }

    fn push(&mut self, name: &str, dtype: &str, bytes: impl IntoIterator<Item = u8>) {
        let offset = self.payload.len() as u64;
        self.payload.extend(bytes);
        self.sections.push(SectionEntry {
            name: name.into(),
            offset,
            length: self.payload.len() as u64 - offset,
            dtype: dtype.into(),
        });
    }

    fn push_f32(&mut self, name: &str, values: impl Iterator<Item = f64>) {
        self.push(name, "f32", values.flat_map(|v| (v as f32).to_le_bytes()));
    }

    fn finish(self, mut header: Header) -> Result<Vec<u8>> {
        header.sections = self.sections;
        let mut json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        json.push(b'\n');
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }
}

/// Writes to a sibling temp file, fsyncs, then renames over `path`.
fn write_durable(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(".tmp");
    tmp.set_file_name(tmp_name);
    let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parsed container: header plus the payload it describes.
struct Container<'a> {
    header: Header,
    payload: &'a [u8],
}

impl<'a> Container<'a> {
    fn parse(bytes: &'a [u8], kind: &str, expected_digest: Option<&str>) -> Result<Self> {
        let (rest, len) = split_prefix(bytes)?;
        let json = &rest[..len];
        if json.last() != Some(&b'\n') {
            return Err(Error::Format("header is not LF-terminated".into()));
        }
        let header: Header = serde_json::from_slice(json).map_err(|e| Error::Format(format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Version { found: header.format_version, expected: FORMAT_VERSION });
        }
        if header.kind != kind {
            return Err(Error::Format(format!("expected a {kind} container, found `{}`", header.kind)));
        }
        if let Some(expected) = expected_digest {
            if header.vocab_digest != expected {
                return Err(Error::VocabularyDrift {
                    expected: expected.to_string(),
                    found: header.vocab_digest.clone(),
                });
            }
        }
        Ok(Self { header, payload: &rest[len..] })
    }

    /// Checks names, order, dtypes and lengths against the expected layout
    /// and that every section fits in the payload.
    fn check_layout(&self, expected: &[(&str, &str, usize)]) -> Result<()> {
        let secs = &self.header.sections;
        if secs.len() != expected.len() {
            return Err(Error::Format(format!("expected {} sections, header lists {}", expected.len(), secs.len())));
        }
        let mut cursor = 0u64;
        for (s, &(name, dtype, len)) in secs.iter().zip(expected) {
            if s.name != name || s.dtype != dtype {
                return Err(Error::Format(format!(
                    "expected section `{name}` ({dtype}), found `{}` ({})",
                    s.name, s.dtype
                )));
            }
            if s.length != len as u64 {
                return Err(Error::Format(format!(
                    "section `{name}` declares {} bytes, dimensions require {len}",
                    s.length
                )));
            }
            if s.offset != cursor {
                return Err(Error::Format(format!("section `{name}` is not contiguous")));
            }
            let end = s.offset + s.length;
            if end > self.payload.len() as u64 {
                return Err(Error::Truncated {
                    section: name.to_string(),
                    needed: len,
                    available: (self.payload.len() as u64).saturating_sub(s.offset) as usize,
                });
            }
            cursor = end;
        }
        if cursor != self.payload.len() as u64 {
            return Err(Error::Format(format!(
                "{} trailing bytes after the last section",
                self.payload.len() as u64 - cursor
            )));
        }
        Ok(())
    }

    fn bytes(&self, idx: usize) -> &'a [u8] {
        let s = &self.header.sections[idx];
        &self.payload[s.offset as usize..(s.offset + s.length) as usize]
    }

    fn f64s(&self, idx: usize) -> Vec<f64> {
        self.bytes(idx)
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect()
    }

    fn u32s(&self, idx: usize) -> Vec<u32> {
        self.bytes(idx)
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect()
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

const MODEL_SECTIONS: [&str; 8] = ["W_e", "b_e", "W_c", "b_c", "W_s", "b_s", "W_t", "b_t"];

fn model_layout(n: usize, k: usize) -> Vec<(&'static str, &'static str, usize)> {
    let sizes = [n * k, k, k * n, n, k * n, n, k * n, n];
    MODEL_SECTIONS.iter().zip(sizes).map(|(&name, len)| (name, "f32", 4 * len)).collect()
}

/// Serialized checkpoint bytes (what [`save_checkpoint`] writes).
pub fn checkpoint_bytes(params: &ModelParams, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    params.validate()?;
    let mut b = Builder::new();
    b.push_f32("W_e", params.w_enc.iter().copied());
    b.push_f32("b_e", params.b_enc.iter().copied());
    b.push_f32("W_c", params.w_collab.iter().copied());
    b.push_f32("b_c", params.b_collab.iter().copied());
    b.push_f32("W_s", params.w_source.iter().copied());
    b.push_f32("b_s", params.b_source.iter().copied());
    b.push_f32("W_t", params.w_target.iter().copied());
    b.push_f32("b_t", params.b_target.iter().copied());
    b.finish(Header {
        format_version: FORMAT_VERSION,
        kind: KIND_MODEL.into(),
        m: meta.num_users,
        n: params.num_items(),
        k: params.hidden(),
        encoder_activation: Some(Activation::Sigmoid),
        decoder_activation: Some(params.decoder_activation),
        transform: Some(params.transform),
        seed: Some(meta.seed),
        count_self_transitions: None,
        vocab_digest: meta.vocab_digest.clone(),
        sections: Vec::new(),
    })
}

pub fn save_checkpoint(params: &ModelParams, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    write_durable(path, &checkpoint_bytes(params, meta)?)
}

/// Parses checkpoint bytes. `expected_digest = None` skips the vocabulary check.
pub fn parse_checkpoint(bytes: &[u8], expected_digest: Option<&str>) -> Result<(ModelParams, CheckpointMeta)> {
    let c = Container::parse(bytes, KIND_MODEL, expected_digest)?;
    let h = &c.header;
    let (n, k) = (h.n, h.k);
    if n == 0 || k == 0 {
        return Err(Error::Format(format!("model dimensions must be positive (n={n}, k={k})")));
    }
    if h.encoder_activation.is_some_and(|a| a != Activation::Sigmoid) {
        return Err(Error::Format("only a sigmoid encoder is supported".into()));
    }
    c.check_layout(&model_layout(n, k))?;
    let mat = |idx: usize, rows: usize, cols: usize| {
        Array2::from_shape_vec((rows, cols), c.f64s(idx)).expect("length checked against layout")
    };
    let params = ModelParams {
        w_enc: mat(0, n, k),
        b_enc: Array1::from(c.f64s(1)),
        w_collab: mat(2, k, n),
        b_collab: Array1::from(c.f64s(3)),
        w_source: mat(4, k, n),
        b_source: Array1::from(c.f64s(5)),
        w_target: mat(6, k, n),
        b_target: Array1::from(c.f64s(7)),
        decoder_activation: h.decoder_activation.unwrap_or(Activation::Identity),
        transform: h.transform.unwrap_or(TransitionTransform::Log1p),
    };
    params.validate()?;
    let meta = CheckpointMeta {
        num_users: h.m,
        seed: h.seed.unwrap_or(0),
        vocab_digest: h.vocab_digest.clone(),
    };
    Ok((params, meta))
}

pub fn load_checkpoint(path: &Path, expected_digest: Option<&str>) -> Result<(ModelParams, CheckpointMeta)> {
    parse_checkpoint(&read_file(path)?, expected_digest)
}

/// Header of any container, without validating sections.
pub fn read_header(path: &Path) -> Result<Header> {
    let bytes = read_file(path)?;
    let (rest, len) = split_prefix(&bytes)?;
    serde_json::from_slice(&rest[..len]).map_err(|e| Error::Format(format!("header: {e}")))
}

fn bitset_row_bytes(n: usize) -> usize {
    n.div_ceil(8)
}

fn state_layout(m: usize, n: usize) -> Vec<(&'static str, &'static str, usize)> {
    vec![
        ("R", "bitset", m * bitset_row_bytes(n)),
        ("T", "u32", 4 * n * n),
        ("last_item", "i32", 4 * m),
        ("counts", "u32", 4 * m),
        ("applied_count", "u64", 8),
    ]
}

pub fn state_bytes(state: &MatrixState, vocab_digest: &str) -> Result<Vec<u8>> {
    let (m, n) = (state.num_users(), state.num_items());
    let mut b = Builder::new();
    let row_bytes = bitset_row_bytes(n);
    let mut bits = vec![0u8; m * row_bytes];
    for u in 0..m {
        for (i, &x) in state.interaction_row(u as u32).iter().enumerate() {
            if x != 0 {
                bits[u * row_bytes + i / 8] |= 1 << (i % 8);
            }
        }
    }
    b.push("R", "bitset", bits);
    b.push("T", "u32", state.transitions().iter().flat_map(|c| c.to_le_bytes()));
    b.push(
        "last_item",
        "i32",
        state.last_items().iter().flat_map(|l| l.map_or(-1i32, |i| i as i32).to_le_bytes()),
    );
    b.push("counts", "u32", state.counts().iter().flat_map(|c| c.to_le_bytes()));
    b.push("applied_count", "u64", state.applied().to_le_bytes());
    b.finish(Header {
        format_version: FORMAT_VERSION,
        kind: KIND_STATE.into(),
        m,
        n,
        k: 0,
        encoder_activation: None,
        decoder_activation: None,
        transform: None,
        seed: None,
        count_self_transitions: Some(state.counts_self_transitions()),
        vocab_digest: vocab_digest.to_string(),
        sections: Vec::new(),
    })
}

pub fn save_state(state: &MatrixState, vocab_digest: &str, path: &Path) -> Result<()> {
    write_durable(path, &state_bytes(state, vocab_digest)?)
}

pub fn parse_state(bytes: &[u8], expected_digest: Option<&str>) -> Result<MatrixState> {
    let c = Container::parse(bytes, KIND_STATE, expected_digest)?;
    let (m, n) = (c.header.m, c.header.n);
    c.check_layout(&state_layout(m, n))?;

    let row_bytes = bitset_row_bytes(n);
    let bits = c.bytes(0);
    let mut interactions = vec![0u8; m * n];
    for u in 0..m {
        for i in 0..n {
            interactions[u * n + i] = (bits[u * row_bytes + i / 8] >> (i % 8)) & 1;
        }
    }
    let transitions = c.u32s(1);
    let last_item = c
        .u32s(2)
        .into_iter()
        .map(|raw| match raw as i32 {
            -1 => Ok(None),
            i if i >= 0 && (i as usize) < n => Ok(Some(i as u32)),
            i => Err(Error::Format(format!("last_item {i} out of range for {n} items"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let counts = c.u32s(3);
    let applied = u64::from_le_bytes(c.bytes(4).try_into().expect("8 bytes"));
    Ok(MatrixState::from_parts(
        m,
        n,
        interactions,
        transitions,
        last_item,
        counts,
        applied,
        c.header.count_self_transitions.unwrap_or(true),
    ))
}

pub fn load_state(path: &Path, expected_digest: Option<&str>) -> Result<MatrixState> {
    parse_state(&read_file(path)?, expected_digest)
}
