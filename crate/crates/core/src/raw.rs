//! RAW mosaic and RGB image containers plus the lossless Bayer transforms.
//!
//! All buffers are row-major `f32`. Multi-channel images are stored
//! interleaved (`[(y * width + x) * channels + c]`).

use crate::{Error, Result};

/// Colour filter layout. Only RGGB is produced or accepted by this toolkit:
/// `R G` on even rows, `G B` on odd rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BayerPattern {
    #[default]
    Rggb,
}

/// Shared read access for the metrics, which work on RAW and RGB alike.
pub trait ImageData {
    fn values(&self) -> &[f32];
    /// `(height, width, channels)`
    fn shape(&self) -> (usize, usize, usize);
}

fn check_unit_range(data: &[f32]) -> Result<()> {
    match data
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        Some((index, &value)) => Err(Error::OutOfRange { index, value }),
        None => Ok(()),
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::BufferLength { expected, actual });
    }
    Ok(())
}

fn check_even(height: usize, width: usize) -> Result<()> {
    if height % 2 != 0 || width % 2 != 0 || height == 0 || width == 0 {
        return Err(Error::OddDimensions { height, width });
    }
    Ok(())
}

/// Single-channel RGGB sensor mosaic with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BayerRaw {
    data: Vec<f32>,
    height: usize,
    width: usize,
    bit_depth_origin: u8,
}

impl BayerRaw {
    pub fn new(data: Vec<f32>, height: usize, width: usize) -> Result<Self> {
        Self::with_bit_depth(data, height, width, 16)
    }

    /// `bit_depth_origin` records the quantisation of the source sensor data
    /// (10..=16 bits); it is metadata only.
    pub fn with_bit_depth(
        data: Vec<f32>,
        height: usize,
        width: usize,
        bit_depth_origin: u8,
    ) -> Result<Self> {
        check_even(height, width)?;
        check_len(height * width, data.len())?;
        check_unit_range(&data)?;
        Ok(Self {
            data,
            height,
            width,
            bit_depth_origin: bit_depth_origin.clamp(10, 16),
        })
    }

    /// Clamps every value into `[0, 1]` (NaN becomes 0) before validating.
    pub fn from_unclamped(mut data: Vec<f32>, height: usize, width: usize) -> Result<Self> {
        clamp_unit(&mut data);
        Self::new(data, height, width)
    }

    pub fn constant(value: f32, height: usize, width: usize) -> Result<Self> {
        Self::new(vec![value; height * width], height, width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pattern(&self) -> BayerPattern {
        BayerPattern::Rggb
    }

    pub fn bit_depth_origin(&self) -> u8 {
        self.bit_depth_origin
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Crop an even-aligned window. `top`/`left` are rounded down to even
    /// so the crop stays on the RGGB grid.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        check_even(height, width)?;
        let (top, left) = (top & !1, left & !1);
        if top + height > self.height || left + width > self.width {
            return Err(Error::ShapeMismatch {
                left: (self.height, self.width, 1),
                right: (top + height, left + width, 1),
            });
        }
        let mut data = Vec::with_capacity(height * width);
        for y in top..top + height {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + left..row + left + width]);
        }
        Ok(Self {
            data,
            height,
            width,
            bit_depth_origin: self.bit_depth_origin,
        })
    }
}

impl ImageData for BayerRaw {
    fn values(&self) -> &[f32] {
        &self.data
    }
    fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, 1)
    }
}

/// Half-resolution four-channel view of a mosaic, channel order
/// `(R, Gr, Gb, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedBayer {
    data: Vec<f32>,
    height: usize,
    width: usize,
}

impl PackedBayer {
    /// `height`/`width` are the packed (half) dimensions.
    pub fn new(data: Vec<f32>, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::OddDimensions { height, width });
        }
        check_len(height * width * 4, data.len())?;
        Ok(Self {
            data,
            height,
            width,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 4 + c]
    }
}

/// Full-colour image, `H x W x 3`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    data: Vec<f32>,
    height: usize,
    width: usize,
}

impl RgbImage {
    pub fn new(data: Vec<f32>, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::BufferLength {
                expected: 1,
                actual: 0,
            });
        }
        check_len(height * width * 3, data.len())?;
        check_unit_range(&data)?;
        Ok(Self {
            data,
            height,
            width,
        })
    }

    pub fn from_unclamped(mut data: Vec<f32>, height: usize, width: usize) -> Result<Self> {
        clamp_unit(&mut data);
        Self::new(data, height, width)
    }

    pub fn constant(rgb: [f32; 3], height: usize, width: usize) -> Result<Self> {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self::new(data, height, width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 3 + c]
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::ShapeMismatch {
                left: (self.height, self.width, 3),
                right: (top + height, left + width, 3),
            });
        }
        let mut data = Vec::with_capacity(height * width * 3);
        for y in top..top + height {
            let row = (y * self.width + left) * 3;
            data.extend_from_slice(&self.data[row..row + width * 3]);
        }
        Self::new(data, height, width)
    }

    /// Rec.601 luma, the same weights JPEG uses.
    pub fn luma(&self) -> Vec<f32> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }

    /// Quantise to 8 bits per channel (round half up).
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| unit_to_u8(v)).collect()
    }

    pub fn from_u8(bytes: &[u8], height: usize, width: usize) -> Result<Self> {
        let data = bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
        Self::new(data, height, width)
    }
}

impl ImageData for RgbImage {
    fn values(&self) -> &[f32] {
        &self.data
    }
    fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, 3)
    }
}

/// `H x W x 4` nearest-neighbour upsampling of a [`PackedBayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct DemosaicedRaw {
    data: Vec<f32>,
    height: usize,
    width: usize,
}

impl DemosaicedRaw {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 4 + c]
    }
}

pub(crate) fn unit_to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn clamp_unit(data: &mut [f32]) {
    for v in data {
        *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    }
}

/// Offsets of the `(R, Gr, Gb, B)` sites inside a 2x2 RGGB cell.
pub const RGGB_SITES: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Split the mosaic into its four colour sub-images.
pub fn pack_bayer(raw: &BayerRaw) -> PackedBayer {
    let (h, w) = (raw.height / 2, raw.width / 2);
    let mut data = Vec::with_capacity(h * w * 4);
    for y in 0..h {
        for x in 0..w {
            for (dy, dx) in RGGB_SITES {
                data.push(raw.get(2 * y + dy, 2 * x + dx));
            }
        }
    }
    PackedBayer {
        data,
        height: h,
        width: w,
    }
}

/// Exact inverse of [`pack_bayer`].
pub fn unpack_bayer(packed: &PackedBayer) -> Result<BayerRaw> {
    let (h, w) = (packed.height * 2, packed.width * 2);
    let mut data = vec![0.0; h * w];
    for y in 0..packed.height {
        for x in 0..packed.width {
            for (c, (dy, dx)) in RGGB_SITES.into_iter().enumerate() {
                data[(2 * y + dy) * w + 2 * x + dx] = packed.get(y, x, c);
            }
        }
    }
    BayerRaw::new(data, h, w)
}

/// Nearest-neighbour 2x upsampling of every packed channel.
pub fn demosaic_upsample(raw: &BayerRaw) -> DemosaicedRaw {
    let packed = pack_bayer(raw);
    let (h, w) = (raw.height, raw.width);
    let mut data = Vec::with_capacity(h * w * 4);
    for y in 0..h {
        for x in 0..w {
            let base = ((y / 2) * packed.width + x / 2) * 4;
            data.extend_from_slice(&packed.data[base..base + 4]);
        }
    }
    DemosaicedRaw {
        data,
        height: h,
        width: w,
    }
}

/// Synthesise a mosaic from an RGB image: linearise with `x^inverse_gamma`
/// and keep the channel each RGGB site samples.
pub fn mosaic_from_rgb(rgb: &RgbImage, inverse_gamma: f32) -> Result<BayerRaw> {
    if !(inverse_gamma > 0.0) || !inverse_gamma.is_finite() {
        return Err(Error::NonPositiveGamma(inverse_gamma));
    }
    check_even(rgb.height, rgb.width)?;
    let mut data = Vec::with_capacity(rgb.height * rgb.width);
    for y in 0..rgb.height {
        for x in 0..rgb.width {
            let c = match (y % 2, x % 2) {
                (0, 0) => 0,
                (1, 1) => 2,
                _ => 1,
            };
            data.push(rgb.get(y, x, c).powf(inverse_gamma).clamp(0.0, 1.0));
        }
    }
    BayerRaw::new(data, rgb.height, rgb.width)
}
