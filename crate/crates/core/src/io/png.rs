//! PNG codecs for label (8-bit indexed or gray), RGB (8-bit) and depth
//! (16-bit gray millimeters) rasters.

use std::io::Cursor;

use png::{BitDepth, ColorType, Decoder, Encoder, Limits, Transformations};

use crate::geo::{is_valid_depth, DepthPanorama};
use crate::raster::{LabelRaster, RgbImage};
use crate::vocab::Palette;
use crate::{Error, Result};

/// Decoder allocation cap.
const DECODE_LIMIT_BYTES: usize = 256 << 20;

struct Decoded {
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    data: Vec<u8>,
}

fn decode(bytes: &[u8], transform: Transformations) -> Result<Decoded> {
    let mut decoder = Decoder::new_with_limits(
        Cursor::new(bytes),
        Limits {
            bytes: DECODE_LIMIT_BYTES,
        },
    );
    decoder.set_transformations(transform);
    let mut reader = decoder.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::parse("png output size overflows"))?;
    if size > DECODE_LIMIT_BYTES {
        return Err(Error::parse(format!("png needs {size} bytes, over the decode limit")));
    }
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data)?;
    data.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

/// Raw class ids from an 8-bit indexed or grayscale PNG (palette ignored).
pub fn decode_label_png(bytes: &[u8]) -> Result<LabelRaster> {
    let d = decode(bytes, Transformations::IDENTITY)?;
    match (d.color, d.depth) {
        (ColorType::Indexed | ColorType::Grayscale, BitDepth::Eight) => {
            LabelRaster::new(d.height, d.width, d.data)
        }
        other => Err(Error::parse(format!(
            "label rasters must be 8-bit indexed or gray, got {other:?}"
        ))),
    }
}

/// Indexed PNG whose palette colors ids via `palette` (missing ids black).
pub fn encode_label_png(raster: &LabelRaster, palette: &Palette) -> Result<Vec<u8>> {
    let mut plte = Vec::with_capacity(256 * 3);
    for id in 0..=255u8 {
        plte.extend_from_slice(&palette.color(id));
    }
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, dim(raster.width)?, dim(raster.height)?);
        enc.set_color(ColorType::Indexed);
        enc.set_depth(BitDepth::Eight);
        enc.set_palette(plte);
        let mut w = enc.write_header()?;
        w.write_image_data(&raster.data)?;
    }
    Ok(out)
}

pub fn decode_rgb_png(bytes: &[u8]) -> Result<RgbImage> {
    let d = decode(bytes, Transformations::EXPAND | Transformations::STRIP_16)?;
    let px = d.width * d.height;
    let rgb: Vec<u8> = match d.color {
        ColorType::Rgb => d.data,
        ColorType::Rgba => d.data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        ColorType::Grayscale => d.data.iter().flat_map(|g| [*g, *g, *g]).collect(),
        ColorType::GrayscaleAlpha => d.data.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        ColorType::Indexed => return Err(Error::parse("palette was not expanded")),
    };
    if rgb.len() != px * 3 {
        return Err(Error::parse("truncated rgb image data"));
    }
    RgbImage::from_rgb8(d.height, d.width, &rgb)
}

pub fn encode_rgb_png(image: &RgbImage) -> Result<Vec<u8>> {
    encode_raw(image.width, image.height, ColorType::Rgb, BitDepth::Eight, &image.to_rgb8())
}

pub fn encode_gray8_png(height: usize, width: usize, data: &[u8]) -> Result<Vec<u8>> {
    encode_raw(width, height, ColorType::Grayscale, BitDepth::Eight, data)
}

/// 16-bit grayscale millimeters; 0 marks invalid depth.
pub fn decode_depth16_png(bytes: &[u8]) -> Result<DepthPanorama> {
    let d = decode(bytes, Transformations::IDENTITY)?;
    if (d.color, d.depth) != (ColorType::Grayscale, BitDepth::Sixteen) {
        return Err(Error::parse(format!(
            "depth PNG must be 16-bit grayscale, got {:?} {:?}",
            d.color, d.depth
        )));
    }
    let meters = d
        .data
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 1000.0)
        .collect();
    DepthPanorama::new(d.height, d.width, meters)
}

pub fn encode_depth16_png(depth: &DepthPanorama) -> Result<Vec<u8>> {
    let mut raw = Vec::with_capacity(depth.data().len() * 2);
    for d in depth.data() {
        let mm = if is_valid_depth(*d) { (d * 1000.0).round() } else { 0.0 };
        if mm > u16::MAX as f64 {
            return Err(Error::invalid(format!("depth {d} m exceeds the 16-bit millimeter range")));
        }
        raw.extend_from_slice(&(mm as u16).to_be_bytes());
    }
    encode_raw(depth.width(), depth.height(), ColorType::Grayscale, BitDepth::Sixteen, &raw)
}

fn encode_raw(width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, dim(width)?, dim(height)?);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut w = enc.write_header()?;
        w.write_image_data(data)?;
    }
    Ok(out)
}

fn dim(v: usize) -> Result<u32> {
    u32::try_from(v)
        .ok()
        .filter(|v| *v > 0)
        .ok_or_else(|| Error::invalid(format!("image dimension {v} out of range")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocabulary;

    #[test]
    fn label_round_trip_keeps_ids() {
        let r = LabelRaster::new(2, 3, vec![0, 1, 255, 19, 4, 0]).unwrap();
        let bytes = encode_label_png(&r, &Vocabulary::matterport().palette()).unwrap();
        assert_eq!(decode_label_png(&bytes).unwrap(), r);
    }

    #[test]
    fn gray_label_accepted() {
        let bytes = encode_gray8_png(1, 2, &[3, 7]).unwrap();
        assert_eq!(decode_label_png(&bytes).unwrap().data, vec![3, 7]);
    }

    #[test]
    fn rgb_is_not_a_label_raster() {
        let img = RgbImage::zeros(2, 2);
        let bytes = encode_rgb_png(&img).unwrap();
        assert!(decode_label_png(&bytes).is_err());
        assert_eq!(decode_rgb_png(&bytes).unwrap(), img);
    }

    #[test]
    fn depth_round_trip_in_millimeters() {
        let d = DepthPanorama::new(1, 4, vec![0.0, 1.234, 2.0004, 65.0]).unwrap();
        let back = decode_depth16_png(&encode_depth16_png(&d).unwrap()).unwrap();
        assert_eq!(back.data(), &[0.0, 1.234, 2.0, 65.0]);
        let far = DepthPanorama::new(1, 1, vec![70.0]).unwrap();
        assert!(encode_depth16_png(&far).is_err());
    }

    #[test]
    fn garbage_is_an_error() {
        assert!(decode_label_png(b"not a png").is_err());
        assert!(decode_depth16_png(&[]).is_err());
        assert!(decode_rgb_png(&[0x89, b'P', b'N', b'G']).is_err());
    }
}
