//! 8-bit grayscale rasters, sparse perturbations and lossless file I/O.
//!
//! Two on-disk formats are supported: binary PGM (`P5`, maxval 255) and
//! 8-bit PNG. Color PNGs are reduced to their first channel.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelGrid {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for PixelGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PixelGrid({}x{})", self.height, self.width)
    }
}

impl PixelGrid {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::DimensionMismatch {
                expected: (height.max(1), width.max(1)),
                found: (height, width),
            });
        }
        if data.len() != height * width {
            return Err(Error::Truncated {
                expected: height * width,
                found: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// `X' = X + ΔX`. Fails rather than clamps when a pixel would leave [0, 255].
    pub fn apply_delta(&self, delta: &DeltaMap) -> Result<PixelGrid> {
        if delta.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: delta.dims(),
            });
        }
        let mut out = self.clone();
        for (&(row, col), &d) in delta.iter() {
            let value = self.get(row, col) as i32 + d;
            if !(0..=255).contains(&value) {
                return Err(Error::PixelRange { row, col, value });
            }
            out.set(row, col, value as u8);
        }
        Ok(out)
    }

    /// L1 distance between two grids of equal size.
    pub fn l1_distance(&self, other: &PixelGrid) -> u64 {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as i64 - b as i64).unsigned_abs())
            .sum()
    }
}

/// Sparse signed perturbation of a grid. Absent entries are zero.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeltaMap {
    height: usize,
    width: usize,
    #[serde(with = "entry_list")]
    entries: BTreeMap<(usize, usize), i32>,
}

impl DeltaMap {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            entries: BTreeMap::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Adds `delta` at `(row, col)`; zero results are dropped.
    pub fn add(&mut self, row: usize, col: usize, delta: i32) {
        assert!(row < self.height && col < self.width, "delta out of bounds");
        let entry = self.entries.entry((row, col)).or_insert(0);
        *entry += delta;
        if *entry == 0 {
            self.entries.remove(&(row, col));
        }
    }

    pub fn get(&self, row: usize, col: usize) -> i32 {
        self.entries.get(&(row, col)).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &i32)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l1_norm(&self) -> u64 {
        self.entries.values().map(|d| d.unsigned_abs() as u64).sum()
    }

    /// Merges a partial map covering a disjoint region.
    pub fn merge(&mut self, other: &DeltaMap) {
        assert_eq!(self.dims(), other.dims());
        for (&(r, c), &d) in other.iter() {
            self.add(r, c, d);
        }
    }
}

mod entry_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        row: usize,
        col: usize,
        delta: i32,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(usize, usize), i32>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let list: Vec<Entry> = map
            .iter()
            .map(|(&(row, col), &delta)| Entry { row, col, delta })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(usize, usize), i32>, D::Error> {
        let list = Vec::<Entry>::deserialize(d)?;
        Ok(list
            .into_iter()
            .map(|e| ((e.row, e.col), e.delta))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("pgm") => Ok(ImageFormat::Pgm),
            Some("png") => Ok(ImageFormat::Png),
            other => Err(Error::UnsupportedFormat(format!(
                "extension {:?} (expected .pgm or .png)",
                other.unwrap_or("")
            ))),
        }
    }
}

/// Loads a grid, sniffing the format from the file's magic bytes.
pub fn load_image(path: impl AsRef<Path>) -> Result<PixelGrid> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<PixelGrid> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)
    } else {
        Err(Error::UnsupportedFormat(
            "not a binary PGM (P5) or PNG file".into(),
        ))
    }
}

/// Saves a grid; the format follows the file extension.
pub fn save_image(grid: &PixelGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match ImageFormat::from_path(path)? {
        ImageFormat::Pgm => encode_pgm(grid),
        ImageFormat::Png => encode_png(grid)?,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(grid: &PixelGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width, grid.height).into_bytes();
    out.extend_from_slice(&grid.data);
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<PixelGrid> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = next_header_token(bytes, &mut pos)?;
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::UnsupportedFormat("malformed PGM header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedDepth(format!("PGM maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::UnsupportedFormat("PGM with zero dimension".into()));
    }
    let expected = width * height;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: raster.len(),
        });
    }
    PixelGrid::new(height, width, raster[..expected].to_vec())
}

fn next_header_token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::UnsupportedFormat("truncated PGM header".into())),
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::UnsupportedFormat("malformed PGM header".into()))
}

pub fn encode_png(grid: &PixelGrid) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, grid.width as u32, grid.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
        writer
            .write_image_data(&grid.data)
            .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<PixelGrid> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::UnsupportedFormat("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::UnsupportedFormat(format!("truncated or corrupt PNG: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedDepth(format!("PNG {:?}", info.bit_depth)));
    }
    let channels = info.color_type.samples();
    if channels > 1 {
        log::warn!(
            "{:?} PNG reduced to its first channel",
            info.color_type
        );
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = buf[..info.buffer_size()]
        .chunks(info.line_size)
        .take(h)
        .flat_map(|line| line.chunks(channels).take(w).map(|px| px[0]))
        .collect();
    PixelGrid::new(h, w, data)
}
