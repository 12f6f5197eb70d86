//! Class-index, depth, and normal rasters and their PNG encodings.
//!
//! Semantic rasters hold one palette index per pixel. Depth rasters hold the
//! Euclidean ray distance in meters (not z-depth), 0 meaning no hit. Normal
//! rasters hold world-frame unit normals where a surface was hit.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use thiserror::Error;

/// Fixed semantic palette shared by the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum SemClass {
    Void = 0,
    Wall = 1,
    Floor = 2,
    Ceiling = 3,
    Door = 4,
    Window = 5,
    Opening = 6,
}

impl SemClass {
    pub const COUNT: usize = 7;

    /// All non-void classes, in palette order.
    pub const NON_VOID: [SemClass; 6] = [
        SemClass::Wall,
        SemClass::Floor,
        SemClass::Ceiling,
        SemClass::Door,
        SemClass::Window,
        SemClass::Opening,
    ];

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            0 => Some(Self::Void),
            1 => Some(Self::Wall),
            2 => Some(Self::Floor),
            3 => Some(Self::Ceiling),
            4 => Some(Self::Door),
            5 => Some(Self::Window),
            6 => Some(Self::Opening),
            _ => None,
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Void => "void",
            Self::Wall => "wall",
            Self::Floor => "floor",
            Self::Ceiling => "ceiling",
            Self::Door => "door",
            Self::Window => "window",
            Self::Opening => "opening",
        }
    }

    /// Display color used only for debug renders.
    pub fn debug_color(self) -> [u8; 3] {
        match self {
            Self::Void => [0, 0, 0],
            Self::Wall => [158, 158, 158],
            Self::Floor => [92, 64, 31],
            Self::Ceiling => [222, 222, 210],
            Self::Door => [219, 133, 28],
            Self::Window => [72, 145, 220],
            Self::Opening => [120, 50, 150],
        }
    }
}

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image I/O failed: {0}")]
    Image(#[from] image::ImageError),
    #[error("raster dimensions {width}x{height} are invalid")]
    BadDimensions { width: u32, height: u32 },
    #[error("pixel value {value} is not a palette class index")]
    BadClassIndex { value: u8 },
}

/// Single-channel class-index image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl SemanticImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, class: u8) {
        self.data[(y * self.width + x) as usize] = class;
    }

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    /// Fraction of pixels per palette class.
    pub fn class_fractions(&self) -> [f64; SemClass::COUNT] {
        let mut counts = [0usize; SemClass::COUNT];
        for &p in &self.data {
            counts[(p as usize).min(SemClass::COUNT - 1)] += 1;
        }
        let total = self.data.len() as f64;
        let mut out = [0.0; SemClass::COUNT];
        for (o, c) in out.iter_mut().zip(counts) {
            *o = c as f64 / total;
        }
        out
    }

    /// Number of distinct non-void classes covering at least `min_fraction`
    /// of the pixels.
    pub fn present_class_count(&self, min_fraction: f64) -> usize {
        let f = self.class_fractions();
        SemClass::NON_VOID
            .iter()
            .filter(|c| f[c.index() as usize] >= min_fraction)
            .count()
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        let img: GrayImage =
            ImageBuffer::from_raw(self.width, self.height, self.data.clone()).expect("size");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self, RasterError> {
        let img = image::open(path)?.into_luma8();
        let (width, height) = img.dimensions();
        let data = img.into_raw();
        if let Some(&value) = data.iter().find(|&&p| p as usize >= SemClass::COUNT) {
            return Err(RasterError::BadClassIndex { value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

/// Per-pixel Euclidean ray distance in meters; 0 encodes no hit.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, meters: f64) {
        self.data[(y * self.width + x) as usize] = meters;
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Saves as 16-bit grayscale PNG in millimeters (saturating at 65.535 m).
    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        let raw: Vec<u16> = self
            .data
            .iter()
            .map(|&m| (m * 1000.0).round().clamp(0.0, 65535.0) as u16)
            .collect();
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width, self.height, raw).expect("size");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self, RasterError> {
        let img = image::open(path)?.into_luma16();
        let (width, height) = img.dimensions();
        let data = img.into_raw().iter().map(|&mm| mm as f64 / 1000.0).collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

/// Per-pixel world-frame unit normal; (0,0,0) where there was no hit.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalImage {
    width: u32,
    height: u32,
    data: Vec<[f64; 3]>,
}

impl NormalImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0; 3]; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f64; 3] {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, n: [f64; 3]) {
        self.data[(y * self.width + x) as usize] = n;
    }

    /// Saves as 8-bit RGB with `round((n+1)/2*255)` per channel; no-hit
    /// pixels are written as (0,0,0), which no unit normal maps to.
    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        let mut raw = Vec::with_capacity(self.data.len() * 3);
        for n in &self.data {
            if n == &[0.0; 3] {
                raw.extend_from_slice(&[0, 0, 0]);
            } else {
                for c in n {
                    raw.push(((c + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        let img: RgbImage = ImageBuffer::from_raw(self.width, self.height, raw).expect("size");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self, RasterError> {
        let img = image::open(path)?.into_rgb8();
        let (width, height) = img.dimensions();
        let data = img
            .pixels()
            .map(|Rgb([r, g, b])| {
                if (*r, *g, *b) == (0, 0, 0) {
                    [0.0; 3]
                } else {
                    [
                        *r as f64 / 255.0 * 2.0 - 1.0,
                        *g as f64 / 255.0 * 2.0 - 1.0,
                        *b as f64 / 255.0 * 2.0 - 1.0,
                    ]
                }
            })
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }
}
