//! RGB pixel buffers, PNG I/O and sources of pixel data keyed by image id.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, Cursor};
use std::path::{Path, PathBuf};

use crate::dataset::{Dataset, ImageId};
use crate::error::{Error, Result};

pub const MIN_SIDE: u32 = 8;

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PixelImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl PixelImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} is below the {MIN_SIDE}x{MIN_SIDE} minimum"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::InvalidImage(format!(
                "buffer has {} bytes, expected {expected}",
                data.len()
            )));
        }
        Ok(PixelImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self::new(width, height, data)
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> [u8; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = (y as usize * self.width as usize + x as usize) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }
}

fn png_err(e: png::DecodingError) -> Error {
    Error::PngCorrupt(e.to_string())
}

/// Decode an 8-bit PNG into RGB. Grayscale is replicated across channels and
/// alpha is composited over white. Sub-byte depths and palettes are expanded;
/// 16-bit images are rejected.
pub fn decode_png_bytes(bytes: &[u8]) -> Result<PixelImage> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let depth = reader.info().bit_depth;
    if depth == png::BitDepth::Sixteen {
        return Err(Error::UnsupportedBitDepth(16));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::PngCorrupt("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedBitDepth(info.bit_depth as u8));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut rgb = Vec::with_capacity(w * h * 3);
    for row in buf.chunks(info.line_size).take(h) {
        match info.color_type {
            png::ColorType::Rgb => rgb.extend_from_slice(&row[..w * 3]),
            png::ColorType::Rgba => {
                for px in row[..w * 4].chunks_exact(4) {
                    let a = px[3];
                    rgb.extend(px[..3].iter().map(|&c| over_white(c, a)));
                }
            }
            png::ColorType::Grayscale => {
                for &g in &row[..w] {
                    rgb.extend_from_slice(&[g, g, g]);
                }
            }
            png::ColorType::GrayscaleAlpha => {
                for px in row[..w * 2].chunks_exact(2) {
                    let g = over_white(px[0], px[1]);
                    rgb.extend_from_slice(&[g, g, g]);
                }
            }
            png::ColorType::Indexed => {
                return Err(Error::PngCorrupt("palette was not expanded".into()));
            }
        }
    }
    PixelImage::new(info.width, info.height, rgb)
}

fn over_white(c: u8, a: u8) -> u8 {
    let (c, a) = (u32::from(c), u32::from(a));
    ((c * a + 255 * (255 - a) + 127) / 255) as u8
}

pub fn decode_png(path: impl AsRef<Path>) -> Result<PixelImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png_bytes(&bytes)
}

pub fn encode_png_bytes(img: &PixelImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width, img.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::InvalidImage(e.to_string()))?;
        writer
            .write_image_data(&img.data)
            .map_err(|e| Error::InvalidImage(e.to_string()))?;
    }
    Ok(out)
}

pub fn encode_png(img: &PixelImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png_bytes(img)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    std::io::Write::write_all(&mut BufWriter::new(f), &bytes).map_err(|e| Error::io(path, e))
}

/// Supplies pixel data for images by id.
pub trait ImageSource: Sync {
    fn load(&self, id: ImageId) -> Result<PixelImage>;
}

/// In-memory image table; used for synthetic datasets and tests.
#[derive(Debug, Clone, Default)]
pub struct MemoryImages {
    images: HashMap<ImageId, PixelImage>,
}

impl MemoryImages {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: ImageId, img: PixelImage) {
        self.images.insert(id, img);
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

impl ImageSource for MemoryImages {
    fn load(&self, id: ImageId) -> Result<PixelImage> {
        self.images
            .get(&id)
            .cloned()
            .ok_or(Error::MissingImageFile(id))
    }
}

/// Reads `<dir>/<image_key>.png` for real images of a dataset.
#[derive(Debug, Clone)]
pub struct DirImages {
    dir: PathBuf,
    keys: Vec<String>,
}

impl DirImages {
    pub fn new(dir: impl Into<PathBuf>, dataset: &Dataset) -> Self {
        DirImages {
            dir: dir.into(),
            keys: dataset.keys().image_keys.clone(),
        }
    }

    pub fn path_of(&self, id: ImageId) -> Option<PathBuf> {
        let key = self.keys.get(id.real_index()?)?;
        Some(self.dir.join(format!("{key}.png")))
    }
}

impl ImageSource for DirImages {
    fn load(&self, id: ImageId) -> Result<PixelImage> {
        let path = self.path_of(id).ok_or(Error::MissingImageFile(id))?;
        if !path.exists() {
            return Err(Error::MissingImageFile(id));
        }
        let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut bytes = Vec::new();
        std::io::Read::read_to_end(&mut BufReader::new(f), &mut bytes)
            .map_err(|e| Error::io(&path, e))?;
        decode_png_bytes(&bytes)
    }
}
