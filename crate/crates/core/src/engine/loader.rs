//! Chain-of-responsibility input loading and array conversion.
//!
//! Loaders are consulted in registration order; the first loader that claims
//! a format tag handles it. Converters follow the same rule.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use super::array::DataArray;
use super::EngineError;
use crate::artifact;

pub const FORMAT_PNG: &str = "png";
pub const FORMAT_JPEG: &str = "jpeg";
pub const FORMAT_RAW_ARRAY: &str = "raw-array";

/// Input in its native (undecoded) form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NativeInput {
    pub format_tag: String,
    pub bytes: Vec<u8>,
    pub source_locator: String,
}

pub trait Loader: Send + Sync {
    fn name(&self) -> &str;

    fn formats(&self) -> Vec<String>;

    fn claims(&self, format_tag: &str) -> bool {
        self.formats().iter().any(|f| f == format_tag)
    }

    fn load(&self, bytes: Vec<u8>, locator: &str) -> Result<NativeInput, EngineError>;
}

pub trait Converter: Send + Sync {
    fn accepts(&self, format_tag: &str) -> bool;

    fn convert(&self, input: &NativeInput) -> Result<DataArray, EngineError>;
}

/// Loader that wraps the payload untouched under a fixed set of tags.
pub struct PassthroughLoader {
    name: String,
    formats: Vec<String>,
}

impl PassthroughLoader {
    pub fn new(name: impl Into<String>, formats: &[&str]) -> Self {
        Self { name: name.into(), formats: formats.iter().map(|s| s.to_string()).collect() }
    }
}

impl Loader for PassthroughLoader {
    fn name(&self) -> &str {
        &self.name
    }

    fn formats(&self) -> Vec<String> {
        self.formats.clone()
    }

    fn load(&self, bytes: Vec<u8>, locator: &str) -> Result<NativeInput, EngineError> {
        let format_tag = detect_format(locator, &bytes);
        Ok(NativeInput { format_tag, bytes, source_locator: locator.to_string() })
    }
}

/// Decodes PNG/JPEG into `[height, width, channels]` u8, keeping channel count.
pub struct RasterConverter;

impl Converter for RasterConverter {
    fn accepts(&self, format_tag: &str) -> bool {
        format_tag == FORMAT_PNG || format_tag == FORMAT_JPEG
    }

    fn convert(&self, input: &NativeInput) -> Result<DataArray, EngineError> {
        let format = if input.format_tag == FORMAT_PNG { ImageFormat::Png } else { ImageFormat::Jpeg };
        let mut reader = ImageReader::new(Cursor::new(&input.bytes));
        reader.set_format(format);
        let img = reader
            .decode()
            .map_err(|e| EngineError::Conversion(format!("{}: {e}", input.source_locator)))?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        let (channels, data) = match img {
            DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
            DynamicImage::ImageLumaA8(b) => (2, b.into_raw()),
            DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
            DynamicImage::ImageRgba8(b) => (4, b.into_raw()),
            other => {
                let channels = other.color().channel_count() as usize;
                match channels {
                    1 => (1, other.to_luma8().into_raw()),
                    2 => (2, other.to_luma_alpha8().into_raw()),
                    3 => (3, other.to_rgb8().into_raw()),
                    _ => (4, other.to_rgba8().into_raw()),
                }
            }
        };
        DataArray::from_u8(vec![height, width, channels], data)
            .map_err(|e| EngineError::Conversion(e.to_string()))
    }
}

/// Reads an artifact container; uses entry `input`, or the sole entry.
pub struct RawArrayConverter;

impl Converter for RawArrayConverter {
    fn accepts(&self, format_tag: &str) -> bool {
        format_tag == FORMAT_RAW_ARRAY
    }

    fn convert(&self, input: &NativeInput) -> Result<DataArray, EngineError> {
        let file = artifact::decode(&input.bytes)
            .map_err(|e| EngineError::Conversion(format!("{}: {e}", input.source_locator)))?;
        let entry = match file.entry("input") {
            Some(e) => e,
            None if file.entries.len() == 1 => &file.entries[0],
            None => {
                return Err(EngineError::Conversion(format!(
                    "{}: raw-array input needs an entry named `input` or exactly one entry",
                    input.source_locator
                )))
            }
        };
        Ok(entry.array.clone())
    }
}

/// Format tag from the locator extension, falling back to magic-byte sniffing.
pub fn detect_format(locator: &str, bytes: &[u8]) -> String {
    if let Some(tag) = format_from_locator(locator) {
        return tag;
    }
    sniff_format(bytes).unwrap_or("unknown").to_string()
}

pub fn format_from_locator(locator: &str) -> Option<String> {
    let path = locator.split(['?', '#']).next().unwrap_or(locator);
    let file = path.rsplit('/').next().unwrap_or(path);
    let ext = Path::new(file).extension()?.to_str()?.to_ascii_lowercase();
    Some(
        match ext.as_str() {
            "png" => FORMAT_PNG,
            "jpg" | "jpeg" => FORMAT_JPEG,
            "mhaf" => FORMAT_RAW_ARRAY,
            other => other,
        }
        .to_string(),
    )
}

pub fn sniff_format(bytes: &[u8]) -> Option<&'static str> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        Some(FORMAT_PNG)
    } else if bytes.starts_with(&[0xff, 0xd8, 0xff]) {
        Some(FORMAT_JPEG)
    } else if bytes.starts_with(artifact::MAGIC) {
        Some(FORMAT_RAW_ARRAY)
    } else {
        None
    }
}

/// Ordered loader and converter chains. Append-only once serving starts.
#[derive(Default)]
pub struct InputChain {
    loaders: Vec<Box<dyn Loader>>,
    converters: Vec<Box<dyn Converter>>,
}

impl InputChain {
    pub fn new() -> Self {
        Self::default()
    }

    /// PNG, JPEG, and raw-array support.
    pub fn standard() -> Self {
        let mut chain = Self::new();
        chain
            .register_loader(Box::new(PassthroughLoader::new("raster", &[FORMAT_PNG, FORMAT_JPEG])))
            .expect("fresh chain");
        chain
            .register_loader(Box::new(PassthroughLoader::new("raw-array", &[FORMAT_RAW_ARRAY])))
            .expect("fresh chain");
        chain.register_converter(Box::new(RasterConverter));
        chain.register_converter(Box::new(RawArrayConverter));
        chain
    }

    pub fn register_loader(&mut self, loader: Box<dyn Loader>) -> Result<(), EngineError> {
        let mut claims = loader.formats();
        if claims.is_empty() {
            return Err(EngineError::NoClaims(loader.name().to_string()));
        }
        claims.sort();
        claims.dedup();
        let duplicate = self.loaders.iter().any(|existing| {
            let mut other = existing.formats();
            other.sort();
            other.dedup();
            existing.name() == loader.name() && other == claims
        });
        if duplicate {
            return Err(EngineError::DuplicateExactClaim(loader.name().to_string()));
        }
        self.loaders.push(loader);
        Ok(())
    }

    pub fn register_converter(&mut self, converter: Box<dyn Converter>) {
        self.converters.push(converter);
    }

    /// First-registered loader claiming `format_tag`.
    pub fn select(&self, format_tag: &str) -> Option<&dyn Loader> {
        self.loaders.iter().find(|l| l.claims(format_tag)).map(|l| l.as_ref())
    }

    pub fn load_input(&self, locator: &str, allowed: &[String]) -> Result<NativeInput, EngineError> {
        let path = locator.strip_prefix("file://").unwrap_or(locator);
        if let Some(tag) = format_from_locator(path) {
            self.gate(&tag, allowed)?;
        }
        let bytes = std::fs::read(path)
            .map_err(|e| EngineError::Read { locator: locator.to_string(), message: e.to_string() })?;
        self.load_bytes(bytes, locator, allowed)
    }

    /// Loads an in-memory payload; `name` is used for format detection.
    pub fn load_bytes(
        &self,
        bytes: Vec<u8>,
        name: &str,
        allowed: &[String],
    ) -> Result<NativeInput, EngineError> {
        let tag = detect_format(name, &bytes);
        let loader = self.gate(&tag, allowed)?;
        let mut input = loader.load(bytes, name)?;
        input.format_tag = tag;
        Ok(input)
    }

    fn gate(&self, tag: &str, allowed: &[String]) -> Result<&dyn Loader, EngineError> {
        let unsupported = || EngineError::UnsupportedFormat {
            format: tag.to_string(),
            allowed: allowed.to_vec(),
        };
        if !allowed.iter().any(|a| a == tag) {
            return Err(unsupported());
        }
        self.select(tag).ok_or_else(unsupported)
    }

    pub fn convert(&self, input: &NativeInput) -> Result<DataArray, EngineError> {
        let converter = self
            .converters
            .iter()
            .find(|c| c.accepts(&input.format_tag))
            .ok_or_else(|| EngineError::Conversion(format!("no converter for `{}`", input.format_tag)))?;
        converter.convert(input)
    }
}
