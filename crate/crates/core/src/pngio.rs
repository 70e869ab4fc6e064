//! PNG storage: 16-bit grayscale for RAW mosaics, 8-bit RGB for developed
//! images. Writers can stamp a `tEXt` chunk carrying the run fingerprint.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::raw::unit_to_u8;
use crate::{BayerRaw, Error, Result, RgbImage};

/// `tEXt` keyword under which run fingerprints are stored.
pub const FINGERPRINT_KEY: &str = "rawmark-fingerprint";

fn open_reader(path: &Path) -> Result<png::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| Error::Decode {
            path: path.to_owned(),
            message: e.to_string(),
        })
}

fn read_frame(path: &Path, reader: &mut png::Reader<BufReader<File>>) -> Result<Vec<u8>> {
    let size = reader.output_buffer_size().ok_or_else(|| Error::Decode {
        path: path.to_owned(),
        message: "image too large".into(),
    })?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Decode {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    buf.truncate(info.buffer_size());
    Ok(buf)
}

fn format_err(path: &Path, property: &'static str, found: String, expected: &str) -> Error {
    Error::Format {
        path: path.to_owned(),
        property,
        found,
        expected: expected.to_owned(),
    }
}

/// Load a 16-bit single-channel PNG, scaling samples by `1/65535`.
pub fn load_raw_png(path: impl AsRef<Path>) -> Result<BayerRaw> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale {
        return Err(format_err(
            path,
            "channel layout",
            format!("{:?}", info.color_type),
            "Grayscale (1 channel)",
        ));
    }
    if info.bit_depth != png::BitDepth::Sixteen {
        return Err(format_err(
            path,
            "bit depth",
            format!("{}", info.bit_depth as u8),
            "16",
        ));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let buf = read_frame(path, &mut reader)?;
    let data = buf
        .chunks_exact(2)
        .map(|b| f32::from(u16::from_be_bytes([b[0], b[1]])) / 65535.0)
        .collect();
    BayerRaw::new(data, height, width)
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    bytes: &[u8],
    fingerprint: Option<&str>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let to_err = |e: png::EncodingError| Error::Decode {
        path: path.to_owned(),
        message: e.to_string(),
    };
    if let Some(fp) = fingerprint {
        encoder
            .add_text_chunk(FINGERPRINT_KEY.to_owned(), fp.to_owned())
            .map_err(to_err)?;
    }
    let mut writer = encoder.write_header().map_err(to_err)?;
    writer.write_image_data(bytes).map_err(to_err)?;
    writer.finish().map_err(to_err)
}

/// Store a mosaic as 16-bit grayscale (`round(v * 65535)`).
pub fn save_raw_png(raw: &BayerRaw, path: impl AsRef<Path>, fingerprint: Option<&str>) -> Result<()> {
    let bytes: Vec<u8> = raw
        .data()
        .iter()
        .flat_map(|&v| ((v.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes())
        .collect();
    write_png(
        path.as_ref(),
        raw.width(),
        raw.height(),
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &bytes,
        fingerprint,
    )
}

/// Load an 8-bit RGB PNG.
pub fn load_rgb_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Rgb {
        return Err(format_err(
            path,
            "channel layout",
            format!("{:?}", info.color_type),
            "Rgb (3 channels)",
        ));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(format_err(
            path,
            "bit depth",
            format!("{}", info.bit_depth as u8),
            "8",
        ));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let buf = read_frame(path, &mut reader)?;
    RgbImage::from_u8(&buf, height, width)
}

/// Load any image format the `image` crate understands, converted to RGB.
/// Used for free-form source corpora.
pub fn load_any_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)
        .map_err(|e| Error::Decode {
            path: path.to_owned(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    RgbImage::from_u8(img.as_raw(), h as usize, w as usize)
}

pub fn save_rgb_png(rgb: &RgbImage, path: impl AsRef<Path>, fingerprint: Option<&str>) -> Result<()> {
    let bytes: Vec<u8> = rgb.data().iter().map(|&v| unit_to_u8(v)).collect();
    write_png(
        path.as_ref(),
        rgb.width(),
        rgb.height(),
        png::ColorType::Rgb,
        png::BitDepth::Eight,
        &bytes,
        fingerprint,
    )
}

/// Read back the fingerprint stamped by the writers above, if any.
pub fn read_fingerprint(path: impl AsRef<Path>) -> Result<Option<String>> {
    let path = path.as_ref();
    let reader = open_reader(path)?;
    Ok(reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .find(|c| c.keyword == FINGERPRINT_KEY)
        .map(|c| c.text.clone()))
}
