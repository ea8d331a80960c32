//! Lossless image loading and saving.
//!
//! The embedding medium is a flat, row-major, channel-interleaved byte
//! sequence. Only PNG is accepted on disk: lossy formats recompress and
//! destroy embedded bits, so anything else is refused at load time.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};

/// Decoded image: `width * height * channels` bytes, row-major, channels
/// interleaved. Each byte is one embedding slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    channels: u8,
    bytes: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32, channels: u8, bytes: Vec<u8>) -> Result<Self> {
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::Parameter(format!(
                "channel count must be 1, 3, or 4, got {channels}"
            )));
        }
        let expected = width as u64 * height as u64 * u64::from(channels);
        if bytes.len() as u64 != expected {
            return Err(Error::Parameter(format!(
                "byte length {} does not match {width}x{height}x{channels} = {expected}",
                bytes.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            bytes,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Number of embedding slots (one per channel byte).
    pub fn total_slots(&self) -> usize {
        self.bytes.len()
    }
}

/// Loads an 8-bit raster from a PNG file.
///
/// Non-PNG inputs are refused outright; 16-bit and palette images are
/// normalized to 8-bit RGB (or RGBA when an alpha channel is present).
pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let data = fs::read(path)?;
    let format = image::guess_format(&data).map_err(|_| {
        Error::Format("unrecognized image data: embedding requires a lossless PNG".into())
    })?;
    if format != ImageFormat::Png {
        return Err(Error::Format(format!(
            "{format:?} input refused: the format is lossy or recompressed in transit, \
             embedding requires lossless PNG"
        )));
    }
    let img = image::load_from_memory_with_format(&data, ImageFormat::Png)?;
    let (width, height) = (img.width(), img.height());
    match img {
        DynamicImage::ImageLuma8(buf) => Raster::new(width, height, 1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => Raster::new(width, height, 3, buf.into_raw()),
        DynamicImage::ImageRgba8(buf) => Raster::new(width, height, 4, buf.into_raw()),
        other if other.color().has_alpha() => {
            Raster::new(width, height, 4, other.to_rgba8().into_raw())
        }
        other => Raster::new(width, height, 3, other.to_rgb8().into_raw()),
    }
}

/// Writes a raster as a non-interlaced 8-bit PNG whose decoded bytes equal
/// the input exactly.
pub fn save_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    if raster.width() == 0 || raster.height() == 0 {
        return Err(Error::Parameter(
            "cannot encode an image with zero width or height".into(),
        ));
    }
    let color = match raster.channels() {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        _ => ExtendedColorType::Rgba8,
    };
    let file = fs::File::create(path)?;
    let encoder = PngEncoder::new(BufWriter::new(file));
    encoder.write_image(raster.bytes(), raster.width(), raster.height(), color)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    #[test]
    fn layout_is_row_major_interleaved() {
        let bytes: Vec<u8> = (0..12).collect();
        let raster = Raster::new(2, 2, 3, bytes.clone()).unwrap();
        assert_eq!(raster.total_slots(), 12);
        assert_eq!(raster.bytes(), &bytes[..]);

        let dir = tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        save_raster(&raster, &path).unwrap();
        let loaded = load_raster(&path).unwrap();
        assert_eq!(loaded, raster);
    }

    #[test]
    fn rejects_mismatched_length_and_channels() {
        assert!(Raster::new(2, 2, 3, vec![0; 11]).is_err());
        assert!(Raster::new(2, 2, 2, vec![0; 8]).is_err());
    }

    #[test]
    fn jpeg_input_is_refused() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cover.jpg");
        image::RgbImage::from_pixel(8, 8, image::Rgb([120, 90, 30]))
            .save(&path)
            .unwrap();
        let err = load_raster(&path).unwrap_err();
        match err {
            Error::Format(msg) => assert!(msg.contains("lossless"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_png_is_a_decode_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.png");
        let mut data = b"\x89PNG\r\n\x1a\n".to_vec();
        data.extend_from_slice(&[0u8; 32]);
        std::fs::write(&path, data).unwrap();
        assert!(matches!(load_raster(&path), Err(Error::Image(_))));
    }

    #[test]
    fn alpha_channel_survives_roundtrip() {
        let bytes: Vec<u8> = (0..64).map(|i| (i * 3) as u8).collect();
        let raster = Raster::new(4, 4, 4, bytes).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("rgba.png");
        save_raster(&raster, &path).unwrap();
        assert_eq!(load_raster(&path).unwrap(), raster);
    }

    #[test]
    fn zero_sized_raster_is_rejected_on_save() {
        let raster = Raster::new(0, 4, 3, vec![]).unwrap();
        let dir = tempdir().unwrap();
        assert!(matches!(
            save_raster(&raster, dir.path().join("empty.png")),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn sixteen_bit_png_normalizes_to_eight() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_pixel(3, 3, image::Luma([40_000]));
        img.save(&path).unwrap();
        let raster = load_raster(&path).unwrap();
        assert_eq!(raster.channels(), 3);
        assert_eq!(raster.total_slots(), 27);
    }

    #[test]
    fn gray_alpha_png_normalizes_to_rgba() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("la.png");
        let img =
            image::ImageBuffer::<image::LumaA<u8>, _>::from_pixel(3, 2, image::LumaA([77, 200]));
        img.save(&path).unwrap();
        let raster = load_raster(&path).unwrap();
        assert_eq!(raster.channels(), 4);
        assert_eq!(raster.bytes()[3], 200);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn save_load_is_identity(
            width in 1u32..24,
            height in 1u32..24,
            channel_pick in 0usize..3,
            seed in any::<u64>(),
        ) {
            let channels = [1u8, 3, 4][channel_pick];
            let len = (width * height * u32::from(channels)) as usize;
            let mut stream = crate::formula::KeystreamState::from_seed(seed);
            let bytes: Vec<u8> = (0..len).map(|_| stream.next_word() as u8).collect();
            let raster = Raster::new(width, height, channels, bytes).unwrap();

            let dir = tempdir().unwrap();
            let path = dir.path().join("roundtrip.png");
            save_raster(&raster, &path).unwrap();
            prop_assert_eq!(load_raster(&path).unwrap(), raster);
        }
    }
}
