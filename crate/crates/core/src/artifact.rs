//! Binary artifact container (`.mhaf`) for outputs that do not fit inline.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes   "MHAF"
//! version      u16       1
//! entry_count  u16
//! entry*:
//!   name_len   u16, name (UTF-8)
//!   dtype      u8        1=u8 2=i32 3=f32 4=f64
//!   rank       u8
//!   shape      rank x u32
//!   attr_count u16
//!   attr*:     key_len u16, key (UTF-8), value_len u32, value (UTF-8)
//!   data_len   u64       = product(shape) * sizeof(dtype)
//!   data       data_len bytes, row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use crate::engine::{DType, DataArray, InferenceOutcome, OutputType};

pub const MAGIC: &[u8; 4] = b"MHAF";
pub const VERSION: u16 = 1;
pub const EXTENSION: &str = "mhaf";
/// URL route under which the gateway serves stored artifacts.
pub const ROUTE: &str = "/artifacts";

#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactEntry {
    pub name: String,
    pub array: DataArray,
    pub attributes: BTreeMap<String, String>,
}

impl ArtifactEntry {
    pub fn new(name: impl Into<String>, array: DataArray) -> Self {
        Self { name: name.into(), array, attributes: BTreeMap::new() }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    pub fn bit_eq(&self, other: &ArtifactEntry) -> bool {
        self.name == other.name && self.attributes == other.attributes && self.array.bit_eq(&other.array)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArtifactFile {
    pub entries: Vec<ArtifactEntry>,
}

impl ArtifactFile {
    pub fn entry(&self, name: &str) -> Option<&ArtifactEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArtifactError {
    #[error("format error at byte {offset}{}: {message}", entry.as_ref().map(|e| format!(" (entry `{e}`)")).unwrap_or_default())]
    Format { offset: usize, entry: Option<String>, message: String },
    #[error("cannot encode artifact: {0}")]
    Encode(String),
    #[error("store error at {path}: {message}")]
    Store { path: String, message: String },
    #[error("output type `{0}` is returned inline, not as an artifact")]
    Inline(OutputType),
}

pub fn encode(file: &ArtifactFile) -> Result<Vec<u8>, ArtifactError> {
    let count = u16::try_from(file.entries.len())
        .map_err(|_| ArtifactError::Encode("more than 65535 entries".into()))?;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for entry in &file.entries {
        if !seen.insert(entry.name.as_str()) {
            return Err(ArtifactError::Encode(format!("duplicate entry name `{}`", entry.name)));
        }
        put_str16(&mut out, &entry.name)?;
        let array = &entry.array;
        out.push(array.dtype().tag());
        let rank = u8::try_from(array.rank())
            .map_err(|_| ArtifactError::Encode(format!("rank {} exceeds 255", array.rank())))?;
        out.push(rank);
        for &dim in array.shape() {
            let dim = u32::try_from(dim)
                .map_err(|_| ArtifactError::Encode(format!("axis length {dim} exceeds u32")))?;
            out.extend_from_slice(&dim.to_le_bytes());
        }
        let attrs = u16::try_from(entry.attributes.len())
            .map_err(|_| ArtifactError::Encode("more than 65535 attributes".into()))?;
        out.extend_from_slice(&attrs.to_le_bytes());
        for (k, v) in &entry.attributes {
            put_str16(&mut out, k)?;
            let len = u32::try_from(v.len())
                .map_err(|_| ArtifactError::Encode("attribute value too long".into()))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(v.as_bytes());
        }
        out.extend_from_slice(&(array.byte_len() as u64).to_le_bytes());
        out.extend_from_slice(&array.to_le_bytes());
    }
    Ok(out)
}

fn put_str16(out: &mut Vec<u8>, s: &str) -> Result<(), ArtifactError> {
    let len = u16::try_from(s.len())
        .map_err(|_| ArtifactError::Encode(format!("string of {} bytes exceeds u16 length", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    entry: Option<String>,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> ArtifactError {
        ArtifactError::Format { offset, entry: self.entry.clone(), message: message.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ArtifactError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            self.err(self.pos, format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos))
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8, ArtifactError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, ArtifactError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, ArtifactError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, ArtifactError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, len: usize, what: &str) -> Result<String, ArtifactError> {
        let at = self.pos;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.err(at, format!("{what} is not UTF-8")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ArtifactFile, ArtifactError> {
    let mut r = Reader { bytes, pos: 0, entry: None };
    let magic = r.take(4, "magic").map_err(|_| r.err(0, "truncated magic"))?;
    if magic != MAGIC {
        return Err(r.err(0, format!("bad magic {magic:?}")));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.err(4, format!("unsupported version {version}")));
    }
    let count = r.u16("entry count")?;
    let mut entries = Vec::with_capacity(count as usize);
    for index in 0..count {
        r.entry = Some(format!("#{index}"));
        let len = r.u16("name length")? as usize;
        let name = r.string(len, "entry name")?;
        r.entry = Some(name.clone());
        if entries.iter().any(|e: &ArtifactEntry| e.name == name) {
            return Err(r.err(r.pos, "duplicate entry name"));
        }
        let tag_at = r.pos;
        let tag = r.u8("dtype")?;
        let dtype = DType::from_tag(tag).ok_or_else(|| r.err(tag_at, format!("unknown dtype tag {tag}")))?;
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("shape")? as usize);
        }
        let attr_count = r.u16("attribute count")?;
        let mut attributes = BTreeMap::new();
        for _ in 0..attr_count {
            let klen = r.u16("attribute key length")? as usize;
            let key = r.string(klen, "attribute key")?;
            let vlen = r.u32("attribute value length")? as usize;
            let value = r.string(vlen, "attribute value")?;
            attributes.insert(key, value);
        }
        let len_at = r.pos;
        let data_len = r.u64("data length")?;
        let expected = shape
            .iter()
            .try_fold(dtype.size() as u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| r.err(len_at, "shape overflows"))?;
        if data_len != expected {
            return Err(r.err(len_at, format!("data length {data_len} does not match shape (expected {expected})")));
        }
        let data_at = r.pos;
        let data = r.take(data_len as usize, "data buffer")?;
        let array = DataArray::from_le_bytes(dtype, shape, data).map_err(|e| r.err(data_at, e.to_string()))?;
        entries.push(ArtifactEntry { name, array, attributes });
    }
    r.entry = None;
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(ArtifactFile { entries })
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reference to a stored artifact. `url` is the route path; the gateway makes it absolute.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ArtifactRef {
    pub url: String,
    pub file_digest: String,
}

/// Label lists, vectors, and contours are returned inline.
pub fn is_envelope_representable(output_type: OutputType) -> bool {
    matches!(output_type, OutputType::LabelList | OutputType::Vector | OutputType::Contour)
}

/// Artifact content for an outcome: one entry `output` with type and model attributes.
pub fn outcome_file(outcome: &InferenceOutcome) -> Result<ArtifactFile, ArtifactError> {
    let array = outcome.output.array().ok_or(ArtifactError::Inline(outcome.output_type()))?;
    let entry = ArtifactEntry::new("output", array.clone())
        .with_attr("output_type", outcome.output_type().as_str())
        .with_attr("model_id", outcome.model_id.clone());
    Ok(ArtifactFile { entries: vec![entry] })
}

/// Digest-addressed artifact directory.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ArtifactStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.{EXTENSION}"))
    }

    pub fn write_artifact(&self, outcome: &InferenceOutcome) -> Result<ArtifactRef, ArtifactError> {
        self.write_file(&outcome_file(outcome)?)
    }

    /// Writes under a temporary name, then renames into place.
    pub fn write_file(&self, file: &ArtifactFile) -> Result<ArtifactRef, ArtifactError> {
        let bytes = encode(file)?;
        let digest = digest_bytes(&bytes);
        let store_err = |path: &Path, e: std::io::Error| ArtifactError::Store {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        fs::create_dir_all(&self.dir).map_err(|e| store_err(&self.dir, e))?;
        let final_path = self.path_for(&digest);
        let tmp = self.dir.join(format!(
            ".{digest}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &final_path)
        };
        if let Err(e) = write() {
            let _ = fs::remove_file(&tmp);
            return Err(store_err(&final_path, e));
        }
        Ok(ArtifactRef { url: format!("{ROUTE}/{digest}.{EXTENSION}"), file_digest: digest })
    }

    /// Resolves `<digest>.mhaf`; rejects anything that is not a plain digest name.
    pub fn lookup(&self, file_name: &str) -> Option<PathBuf> {
        let digest = file_name.strip_suffix(".mhaf")?;
        if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        let path = self.path_for(digest);
        path.is_file().then_some(path)
    }
}

pub fn read_artifact(path: &Path) -> Result<ArtifactFile, ArtifactError> {
    let bytes = fs::read(path).map_err(|e| ArtifactError::Store {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode(&bytes)
}
