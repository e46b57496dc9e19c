use std::path::Path;

use super::{FormatError, Location};
use crate::raster::{BinaryMask, RasterImage};

/// Decodes a binary PGM (`P5`) or PPM (`P6`) with maxval ≤ 255. Returns
/// the image and the number of bytes consumed.
pub fn decode_pnm(bytes: &[u8]) -> Result<(RasterImage, usize), FormatError> {
    let mut pos = 0usize;
    let magic = bytes
        .get(0..2)
        .ok_or_else(|| FormatError::parse(Location::Byte(0), "truncated PNM magic"))?;
    let channels = match magic {
        b"P5" => 1u8,
        b"P6" => 3u8,
        b"P1" | b"P2" | b"P3" | b"P4" => {
            return Err(FormatError::UnsupportedFormat(
                "only binary P5/P6 portable pixmaps are supported".into(),
            ))
        }
        _ => return Err(FormatError::parse(Location::Byte(0), "not a PNM file")),
    };
    pos += 2;
    let mut header = [0usize; 3];
    for slot in header.iter_mut() {
        // whitespace and comments between fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos || pos - start > 9 {
            return Err(FormatError::parse(Location::Byte(start), "invalid PNM header field"));
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::parse(Location::Byte(start), "invalid PNM header field"))?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 255 {
        return Err(FormatError::UnsupportedFormat(format!("PNM maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(FormatError::parse(Location::Byte(pos), "missing separator after maxval"));
    }
    pos += 1;
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels as usize))
        .ok_or_else(|| FormatError::parse(Location::Byte(pos), "image too large"))?;
    let data = bytes
        .get(pos..pos.saturating_add(len))
        .filter(|d| d.len() == len)
        .ok_or_else(|| FormatError::parse(Location::Byte(bytes.len()), "truncated pixel data"))?;
    let pixels = if maxval == 255 {
        data.to_vec()
    } else {
        data.iter()
            .map(|&v| ((v.min(maxval as u8) as usize * 255 + maxval / 2) / maxval) as u8)
            .collect()
    };
    let img = RasterImage::new(width as u32, height as u32, channels, pixels)
        .map_err(|e| FormatError::parse(Location::Byte(pos), e.to_string()))?;
    Ok((img, pos + len))
}

fn encode_pnm(img: &RasterImage, magic: &str) -> Vec<u8> {
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

/// Binary PGM of the image's intensity.
pub fn encode_pgm(img: &RasterImage) -> Vec<u8> {
    encode_pnm(&img.to_gray(), "P5")
}

/// Binary PPM; grayscale input is replicated to three channels.
pub fn encode_ppm(img: &RasterImage) -> Vec<u8> {
    if img.channels() == 3 {
        return encode_pnm(img, "P6");
    }
    let rgb = img.pixels().iter().flat_map(|&g| [g, g, g]).collect();
    let img = RasterImage::new(img.width(), img.height(), 3, rgb).expect("valid by construction");
    encode_pnm(&img, "P6")
}

fn decode_png(bytes: &[u8]) -> Result<RasterImage, FormatError> {
    let dynimg = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| FormatError::parse(Location::Byte(0), format!("PNG decode: {e}")))?;
    let gray_like = matches!(
        dynimg.color(),
        image::ColorType::L8 | image::ColorType::La8 | image::ColorType::L16 | image::ColorType::La16
    );
    let (w, h) = (dynimg.width(), dynimg.height());
    let result = if gray_like {
        RasterImage::new(w, h, 1, dynimg.into_luma8().into_raw())
    } else {
        RasterImage::new(w, h, 3, dynimg.into_rgb8().into_raw())
    };
    result.map_err(|e| FormatError::parse(Location::Byte(0), e.to_string()))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else if bytes.first() == Some(&b'P') {
        decode_pnm(&bytes).map(|(img, _)| img)
    } else {
        Err(FormatError::UnsupportedFormat(format!(
            "{}: expected PNM or PNG",
            path.display()
        )))
    }
}

/// Writes PNG for `.png` paths, PGM for `.pgm`, and PPM otherwise.
pub fn save_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = match ext.as_deref() {
        Some("png") => {
            let mut buf = std::io::Cursor::new(Vec::new());
            let color = if img.channels() == 1 {
                image::ExtendedColorType::L8
            } else {
                image::ExtendedColorType::Rgb8
            };
            image::write_buffer_with_format(
                &mut buf,
                img.pixels(),
                img.width(),
                img.height(),
                color,
                image::ImageFormat::Png,
            )
            .map_err(|e| FormatError::io(path, std::io::Error::other(e)))?;
            buf.into_inner()
        }
        Some("pgm") => encode_pgm(img),
        _ => encode_ppm(img),
    };
    std::fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}

/// Loads an image and binarizes it at 128.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask, FormatError> {
    Ok(BinaryMask::from_image(&load_image(path)?))
}

/// Loads a mask that must match the paired image's dimensions.
pub fn load_mask_paired(
    path: impl AsRef<Path>,
    image_dims: (u32, u32),
) -> Result<BinaryMask, FormatError> {
    let mask = load_mask(path)?;
    if mask.dims() != image_dims {
        return Err(FormatError::DimensionMismatch {
            mask: mask.dims(),
            image: image_dims,
        });
    }
    Ok(mask)
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let img = mask.to_image();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("png") => save_image(&img, path),
        _ => std::fs::write(path, encode_pgm(&img)).map_err(|e| FormatError::io(path, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_ppm() {
        let mut bytes = b"P6\n# comment\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]);
        let (img, used) = decode_pnm(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(img.rgb(0, 0), [1, 2, 3]);
        assert_eq!(img.rgb(1, 0), [4, 5, 6]);
        assert_eq!(img.rgb(0, 1), [7, 8, 9]);
        assert_eq!(img.rgb(1, 1), [10, 11, 12]);
    }

    #[test]
    fn zero_pgm_is_empty_mask() {
        let mut bytes = b"P5 3 2 255\n".to_vec();
        bytes.extend_from_slice(&[0; 6]);
        let (img, _) = decode_pnm(&bytes).unwrap();
        assert!(BinaryMask::from_image(&img).is_empty());
    }

    #[test]
    fn mask_threshold_at_128() {
        let img = RasterImage::new(3, 1, 1, vec![127, 128, 255]).unwrap();
        let m = BinaryMask::from_image(&img);
        assert_eq!(m.bits(), &[false, true, true]);
    }

    #[test]
    fn paired_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        save_mask(&BinaryMask::new(4, 3), &p).unwrap();
        assert!(load_mask_paired(&p, (4, 3)).is_ok());
        assert!(matches!(
            load_mask_paired(&p, (3, 4)),
            Err(FormatError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = RasterImage::new(3, 2, 3, (0..18).collect()).unwrap();
        let p = dir.path().join("a.png");
        save_image(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }

    #[test]
    fn truncated_and_unsupported() {
        assert!(decode_pnm(b"P6\n2 2\n255\n\x01\x02").is_err());
        assert!(matches!(
            decode_pnm(b"P6\n2 2\n65535\n"),
            Err(FormatError::UnsupportedFormat(_))
        ));
        assert!(decode_pnm(b"P9").is_err());
    }

    proptest! {
        #[test]
        fn ppm_round_trip(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
            let n = (w * h * 3) as usize;
            let pixels: Vec<u8> = (0..n).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 13) as u8).collect();
            let img = RasterImage::new(w, h, 3, pixels).unwrap();
            let (back, _) = decode_pnm(&encode_ppm(&img)).unwrap();
            prop_assert_eq!(back, img);
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let mut b = b"P5 ".to_vec();
            b.extend_from_slice(&bytes);
            let _ = decode_pnm(&b);
            let _ = decode_pnm(&bytes);
        }
    }
}
