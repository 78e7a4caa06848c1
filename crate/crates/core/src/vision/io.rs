//! Binary PGM (`P5`) / PPM (`P6`) with maxval 255, and PNG.

use std::path::Path;

use super::{Frame, ImageGray, RgbImage};
use crate::error::{Error, Result};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::Format("truncated PNM header".into()));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments before each token
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Format("truncated PNM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PNM header".into()))?;
    }
    // exactly one whitespace byte separates maxval from the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Format("malformed PNM header".into()));
    }
    if fields[2] != 255 {
        return Err(Error::Format(format!("PNM maxval {} (only 255 supported)", fields[2])));
    }
    Ok(Header {
        magic,
        width: fields[0],
        height: fields[1],
        data_offset: pos + 1,
    })
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Frame> {
    let h = parse_header(bytes)?;
    let channels = match &h.magic {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::Format(format!(
                "unsupported PNM magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let n = h.width * h.height * channels;
    let raster = bytes
        .get(h.data_offset..h.data_offset + n)
        .ok_or_else(|| Error::Format("truncated PNM raster".into()))?;
    Ok(if channels == 1 {
        Frame::Gray(ImageGray::new(h.width, h.height, raster.to_vec())?)
    } else {
        Frame::Rgb(RgbImage {
            width: h.width,
            height: h.height,
            pixels: raster.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        })
    })
}

pub fn encode_pgm(img: &ImageGray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().flatten());
    out
}

fn decode_png(bytes: &[u8]) -> Result<Frame> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    Ok(match decoded.color() {
        image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16 => {
            Frame::Gray(ImageGray::new(w, h, decoded.into_luma8().into_raw())?)
        }
        _ => Frame::Rgb(RgbImage {
            width: w,
            height: h,
            pixels: decoded.into_rgb8().pixels().map(|p| p.0).collect(),
        }),
    })
}

/// Reads a PGM, PPM or PNG frame, dispatching on the file's magic bytes.
pub fn read_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else {
        decode_pnm(&bytes)
    }
}

pub fn write_pgm(path: impl AsRef<Path>, img: &ImageGray) -> Result<()> {
    std::fs::write(path, encode_pgm(img))?;
    Ok(())
}

pub fn write_png(path: impl AsRef<Path>, img: &ImageGray) -> Result<()> {
    image::save_buffer(
        path,
        img.pixels(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| Error::Format(format!("PNG: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_bytes_are_exact() {
        let img = ImageGray::new(3, 2, vec![0, 1, 2, 253, 254, 255]).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(decode_pnm(&bytes).unwrap(), Frame::Gray(img));
    }

    #[test]
    fn header_comments_and_whitespace() {
        let mut bytes = b"P6 # rgb\n# another\n 2\t1 255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let Frame::Rgb(img) = decode_pnm(&bytes).unwrap() else {
            panic!("expected rgb")
        };
        assert_eq!(img.pixels, vec![[1, 2, 3], [4, 5, 6]]);
        assert_eq!(decode_pnm(&encode_ppm(&img)).unwrap(), Frame::Rgb(img));
    }

    #[test]
    fn rejects_other_maxval_and_magic() {
        assert!(decode_pnm(b"P5\n1 1\n65535\n\0\0").is_err());
        assert!(decode_pnm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pnm(b"P5\n2 2\n255\n\0").is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.png");
        let img = ImageGray::new(4, 3, (0..12).map(|v| v * 20).collect()).unwrap();
        write_png(&path, &img).unwrap();
        assert_eq!(read_frame(&path).unwrap(), Frame::Gray(img));
    }
}
