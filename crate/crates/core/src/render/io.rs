use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{ImageBuffer, Rgb};

use super::splat::RenderedImage;
use crate::error::{Error, Result};

fn to_byte(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Saves the color channels as an 8-bit RGB PNG.
pub fn write_png(img: &RenderedImage, path: &Path) -> Result<()> {
    let buf = ImageBuffer::<Rgb<u8>, _>::from_fn(img.width as u32, img.height as u32, |x, y| {
        Rgb(img.pixel(x as usize, y as usize).map(to_byte))
    });
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::Data(other.to_string()),
        })
}

/// Raw dump: four little-endian `f32` planes (red, green, blue, alpha), each
/// `height × width` row-major, no header.
pub fn write_raw_planes<W: Write>(img: &RenderedImage, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    for ch in 0..4 {
        for p in 0..img.width * img.height {
            let v = if ch < 3 { img.color[p][ch] } else { img.alpha[p] };
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_raw_planes_file(img: &RenderedImage, path: &Path) -> Result<()> {
    write_raw_planes(img, File::create(path)?)
}

/// Inverse of [`write_raw_planes`]; the caller supplies the dimensions.
pub fn read_raw_planes<R: Read>(input: R, width: usize, height: usize) -> Result<RenderedImage> {
    let mut bytes = Vec::new();
    BufReader::new(input).read_to_end(&mut bytes)?;
    let n = width * height;
    if bytes.len() != 16 * n {
        return Err(Error::Data(format!(
            "raw image has {} bytes, expected {} for {width}×{height}",
            bytes.len(),
            16 * n
        )));
    }
    let value = |i: usize| f64::from(f32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()));
    let mut img = RenderedImage::black(width, height);
    for p in 0..n {
        img.color[p] = [value(p), value(n + p), value(2 * n + p)];
        img.alpha[p] = value(3 * n + p);
    }
    Ok(img)
}

pub fn read_raw_planes_file(path: &Path, width: usize, height: usize) -> Result<RenderedImage> {
    read_raw_planes(File::open(path)?, width, height)
}
