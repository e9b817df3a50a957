//! Pixel-level utilities for the control experiments: grid stitching of
//! image sequences into one composite, pixel-space information reduction
//! (downsample then upsample back), and bilinear resizing.
//!
//! All operations work on plain 8-bit RGB buffers and are pure functions;
//! PNG/JPEG codecs are only touched at the I/O boundary. Resampling is
//! bilinear with half-pixel sample centers throughout, and resizing to an
//! image's own dimensions is an exact copy, which makes factor-1 reduction
//! bit-identical by construction.

use std::fmt;
use std::path::Path;

/// Interpolation filter used by every resampling path in this crate.
pub const INTERPOLATION: &str = "bilinear";

/// Errors from pixel operations and image I/O.
#[derive(Debug)]
pub enum ImageOpsError {
    /// Bad argument (zero images, zero factor, buffer size mismatch...).
    Usage(String),
    /// Decode/encode failure from the underlying codec.
    Codec(String),
    Io(std::io::Error),
}

impl fmt::Display for ImageOpsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageOpsError::Usage(msg) => write!(f, "usage error: {msg}"),
            ImageOpsError::Codec(msg) => write!(f, "codec error: {msg}"),
            ImageOpsError::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for ImageOpsError {}

impl From<std::io::Error> for ImageOpsError {
    fn from(err: std::io::Error) -> Self {
        ImageOpsError::Io(err)
    }
}

/// An 8-bit RGB image, row-major, 3 samples per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl PixelImage {
    /// All-black image of the given size.
    pub fn new(width: u32, height: u32) -> Result<Self, ImageOpsError> {
        if width == 0 || height == 0 {
            return Err(ImageOpsError::Usage(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(PixelImage {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        })
    }

    /// Solid-color image.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImageOpsError> {
        let mut img = PixelImage::new(width, height)?;
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        Ok(img)
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageOpsError> {
        let expected = width as usize * height as usize * 3;
        if width == 0 || height == 0 || data.len() != expected {
            return Err(ImageOpsError::Usage(format!(
                "buffer of {} bytes does not match {width}x{height} RGB",
                data.len()
            )));
        }
        Ok(PixelImage {
            width,
            height,
            data,
        })
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

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copy of the rectangle at (x, y) with the given size.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<PixelImage, ImageOpsError> {
        if x + w > self.width || y + h > self.height {
            return Err(ImageOpsError::Usage(format!(
                "crop {w}x{h}+{x}+{y} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut out = PixelImage::new(w, h)?;
        for row in 0..h {
            for col in 0..w {
                out.set_pixel(col, row, self.pixel(x + col, y + row));
            }
        }
        Ok(out)
    }
}

/// Bilinear resize to exactly `(width, height)`.
///
/// Sample positions use half-pixel centers clamped to the source; resizing
/// to the source dimensions returns a bit-exact copy.
pub fn resize(img: &PixelImage, width: u32, height: u32) -> Result<PixelImage, ImageOpsError> {
    if width == 0 || height == 0 {
        return Err(ImageOpsError::Usage(format!(
            "target dimensions must be positive, got {width}x{height}"
        )));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let mut out = PixelImage::new(width, height)?;
    for dy in 0..height {
        let fy = ((dy as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        let y0 = fy.floor() as u32;
        let y1 = (y0 + 1).min(img.height - 1);
        let wy = fy - y0 as f64;
        for dx in 0..width {
            let fx = ((dx as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            let x0 = fx.floor() as u32;
            let x1 = (x0 + 1).min(img.width - 1);
            let wx = fx - x0 as f64;
            let p00 = img.pixel(x0, y0);
            let p10 = img.pixel(x1, y0);
            let p01 = img.pixel(x0, y1);
            let p11 = img.pixel(x1, y1);
            let mut rgb = [0u8; 3];
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - wx) + p10[c] as f64 * wx;
                let bottom = p01[c] as f64 * (1.0 - wx) + p11[c] as f64 * wx;
                rgb[c] = (top * (1.0 - wy) + bottom * wy).round().clamp(0.0, 255.0) as u8;
            }
            out.set_pixel(dx, dy, rgb);
        }
    }
    Ok(out)
}

/// Stitch a sequence of images into one composite.
///
/// Each input is resized to `tile_size` squared, then laid out row-major in
/// a grid with `ceil(sqrt(M))` columns; trailing cells stay black.
pub fn stitch_grid(images: &[PixelImage], tile_size: u32) -> Result<PixelImage, ImageOpsError> {
    if images.is_empty() {
        return Err(ImageOpsError::Usage("need at least one image to stitch".into()));
    }
    if tile_size == 0 {
        return Err(ImageOpsError::Usage("tile size must be positive".into()));
    }
    let count = images.len() as u32;
    let cols = (count as f64).sqrt().ceil() as u32;
    let rows = count.div_ceil(cols);
    let mut out = PixelImage::new(cols * tile_size, rows * tile_size)?;
    for (i, img) in images.iter().enumerate() {
        let tile = resize(img, tile_size, tile_size)?;
        let ox = (i as u32 % cols) * tile_size;
        let oy = (i as u32 / cols) * tile_size;
        for y in 0..tile_size {
            for x in 0..tile_size {
                out.set_pixel(ox + x, oy + y, tile.pixel(x, y));
            }
        }
    }
    Ok(out)
}

/// Result of a pixel-space reduction.
#[derive(Debug, Clone)]
pub struct ReduceOutcome {
    pub image: PixelImage,
    /// True when the requested factor pushed the intermediate below one
    /// pixel on some axis and it was clamped to 1.
    pub clamped: bool,
}

/// Reduce visual information while preserving dimensions: bilinear
/// downsample by `factor`, then bilinear upsample back to the original
/// size. Factor 1 returns the input bit-exactly.
pub fn pixel_reduce(img: &PixelImage, factor: u32) -> Result<ReduceOutcome, ImageOpsError> {
    if factor == 0 {
        return Err(ImageOpsError::Usage("reduction factor must be at least 1".into()));
    }
    let dw = img.width / factor;
    let dh = img.height / factor;
    let clamped = dw == 0 || dh == 0;
    let small = resize(img, dw.max(1), dh.max(1))?;
    let restored = resize(&small, img.width, img.height)?;
    Ok(ReduceOutcome {
        image: restored,
        clamped,
    })
}

/// Decode a PNG or JPEG file into an RGB image.
pub fn load_image(path: &Path) -> Result<PixelImage, ImageOpsError> {
    let decoded = image::open(path).map_err(|e| ImageOpsError::Codec(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    PixelImage::from_raw(rgb.width(), rgb.height(), rgb.into_raw())
}

/// Encode to PNG or JPEG based on the file extension (PNG by default).
pub fn save_image(img: &PixelImage, path: &Path) -> Result<(), ImageOpsError> {
    let buffer = image::RgbImage::from_raw(img.width, img.height, img.data.clone())
        .ok_or_else(|| ImageOpsError::Codec("buffer does not match dimensions".into()))?;
    let format = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("jpg") | Some("jpeg") => image::ImageFormat::Jpeg,
        _ => image::ImageFormat::Png,
    };
    buffer
        .save_with_format(path, format)
        .map_err(|e| ImageOpsError::Codec(e.to_string()))
}
