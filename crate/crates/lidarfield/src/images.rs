//! PNG codecs for camera images and aligned lidar products.
//!
//! Depth is 16-bit grayscale in millimeters (0 = no return), normals are
//! 8-bit RGB with `n = 2 v / 255 - 1` and black marking invalid pixels, sky
//! masks are 8-bit grayscale with 255 for sky.

use std::path::Path;

use lidarfield_core::image::{Image, Rgb};
use png::{BitDepth, ColorType};

use crate::error::{read, write, Error, Result};

/// Largest encodable depth (m).
pub const MAX_DEPTH: f64 = 65.535;

struct Raw {
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    data: Vec<u8>,
}

fn encode(path: &Path, width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<()> {
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut w = enc.write_header().map_err(|e| Error::format(path, e.to_string()))?;
        w.write_image_data(data).map_err(|e| Error::format(path, e.to_string()))?;
    }
    write(path, &bytes)
}

fn decode(path: &Path) -> Result<Raw> {
    let bytes = read(path)?;
    let decoder = png::Decoder::new(bytes.as_slice());
    let mut reader = decoder.read_info().map_err(|e| Error::format(path, e.to_string()))?;
    let mut data = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut data).map_err(|e| Error::format(path, e.to_string()))?;
    data.truncate(info.buffer_size());
    Ok(Raw {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

fn unexpected(path: &Path, raw: &Raw, wanted: &str) -> Error {
    Error::format(path, format!("expected {wanted}, found {:?} {:?}", raw.color, raw.depth))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_rgb(path: &Path, img: &Image<Rgb>) -> Result<()> {
    let data: Vec<u8> = img.pixels().iter().flat_map(|c| c.map(to_u8)).collect();
    encode(path, img.width(), img.height(), ColorType::Rgb, BitDepth::Eight, &data)
}

/// Reads an 8-bit RGB, RGBA or grayscale PNG as linear values in `[0, 1]`.
pub fn read_rgb(path: &Path) -> Result<Image<Rgb>> {
    let raw = decode(path)?;
    if raw.depth != BitDepth::Eight {
        return Err(unexpected(path, &raw, "8-bit color"));
    }
    let channels = match raw.color {
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Grayscale => 1,
        _ => return Err(unexpected(path, &raw, "8-bit color")),
    };
    let px: Vec<Rgb> = raw
        .data
        .chunks_exact(channels)
        .map(|c| {
            let f = |v: u8| v as f64 / 255.0;
            if channels == 1 {
                [f(c[0]); 3]
            } else {
                [f(c[0]), f(c[1]), f(c[2])]
            }
        })
        .collect();
    Ok(Image::from_vec(raw.width, raw.height, px)?)
}

pub fn write_depth(path: &Path, img: &Image<f64>) -> Result<()> {
    let mut data = Vec::with_capacity(img.len() * 2);
    for &d in img.pixels() {
        let mm = if d.is_finite() && d > 0.0 { (d * 1000.0).round().min(65535.0) as u16 } else { 0 };
        data.extend_from_slice(&mm.to_be_bytes());
    }
    encode(path, img.width(), img.height(), ColorType::Grayscale, BitDepth::Sixteen, &data)
}

pub fn read_depth(path: &Path) -> Result<Image<f64>> {
    let raw = decode(path)?;
    if raw.color != ColorType::Grayscale || raw.depth != BitDepth::Sixteen {
        return Err(unexpected(path, &raw, "16-bit grayscale depth"));
    }
    let px = raw
        .data
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 1000.0)
        .collect();
    Ok(Image::from_vec(raw.width, raw.height, px)?)
}

pub fn write_normals(path: &Path, img: &Image<[f64; 3]>) -> Result<()> {
    let mut data = Vec::with_capacity(img.len() * 3);
    for n in img.pixels() {
        if n.iter().all(|v| *v == 0.0) || !n.iter().all(|v| v.is_finite()) {
            data.extend_from_slice(&[0, 0, 0]);
        } else {
            data.extend(n.map(|v| to_u8((v + 1.0) * 0.5)));
        }
    }
    encode(path, img.width(), img.height(), ColorType::Rgb, BitDepth::Eight, &data)
}

pub fn read_normals(path: &Path) -> Result<Image<[f64; 3]>> {
    let raw = decode(path)?;
    if raw.color != ColorType::Rgb || raw.depth != BitDepth::Eight {
        return Err(unexpected(path, &raw, "8-bit RGB normals"));
    }
    let px = raw
        .data
        .chunks_exact(3)
        .map(|c| {
            if c == [0, 0, 0] {
                return [0.0; 3];
            }
            let n = nalgebra::Vector3::new(c[0], c[1], c[2]).map(|v| 2.0 * (v as f64 / 255.0) - 1.0);
            let len = n.norm();
            if len > 0.0 {
                (n / len).into()
            } else {
                [0.0; 3]
            }
        })
        .collect();
    Ok(Image::from_vec(raw.width, raw.height, px)?)
}

pub fn write_mask(path: &Path, img: &Image<bool>) -> Result<()> {
    let data: Vec<u8> = img.pixels().iter().map(|&s| if s { 255 } else { 0 }).collect();
    encode(path, img.width(), img.height(), ColorType::Grayscale, BitDepth::Eight, &data)
}

pub fn read_mask(path: &Path) -> Result<Image<bool>> {
    let raw = decode(path)?;
    if raw.color != ColorType::Grayscale || raw.depth != BitDepth::Eight {
        return Err(unexpected(path, &raw, "8-bit grayscale mask"));
    }
    let px = raw.data.iter().map(|&v| v > 127).collect();
    Ok(Image::from_vec(raw.width, raw.height, px)?)
}
