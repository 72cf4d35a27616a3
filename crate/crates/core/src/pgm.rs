//! Portable graymap (PGM) reading and writing, binary `P5` and ASCII `P2`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::preprocess::GrayImage;
use crate::{Error, Result};

struct Header {
    binary: bool,
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Pgm(msg.into())
}

/// Skips whitespace and `#` comments, then reads one unsigned integer token.
fn next_uint(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&c) = bytes.get(*pos) {
                    *pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            }
            Some(c) if c.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(bad("unexpected end of header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(bad(format!("expected a number at byte {start}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .unwrap()
        .parse()
        .map_err(|_| bad("number out of range"))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(bad("missing P5/P2 magic")),
    };
    let mut pos = 2;
    let width = next_uint(bytes, &mut pos)? as usize;
    let height = next_uint(bytes, &mut pos)? as usize;
    let maxval = next_uint(bytes, &mut pos)?;
    if width == 0 || height == 0 {
        return Err(bad("zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(bad(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from binary data
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing whitespace after header"));
    }
    Ok(Header {
        binary,
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

/// Decodes a PGM, rescaling samples to `0..=255` when `maxval < 255`.
pub fn decode(bytes: &[u8]) -> Result<GrayImage> {
    let h = parse_header(bytes)?;
    let n = h
        .width
        .checked_mul(h.height)
        .ok_or_else(|| bad("image too large"))?;
    let raw: Vec<u32> = if h.binary {
        let data = bytes
            .get(h.data_start..h.data_start + n)
            .ok_or_else(|| bad(format!("expected {n} pixel bytes")))?;
        data.iter().map(|&b| u32::from(b)).collect()
    } else {
        let mut pos = h.data_start;
        (0..n)
            .map(|_| next_uint(bytes, &mut pos))
            .collect::<Result<_>>()?
    };
    let pixels = raw
        .into_iter()
        .map(|v| {
            if v > h.maxval {
                Err(bad(format!("sample {v} exceeds maxval {}", h.maxval)))
            } else {
                Ok(((v * 255 + h.maxval / 2) / h.maxval) as u8)
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    GrayImage::new(h.width, h.height, pixels)
}

pub fn read(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode(&bytes).map_err(|e| e.in_file(path))
}

/// Binary `P5` encoding with maxval 255.
pub fn encode_binary(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

/// ASCII `P2` encoding with maxval 255, at most 16 samples per line.
pub fn encode_ascii(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P2\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for row in img.pixels().chunks(img.width()) {
        for line in row.chunks(16) {
            let text: Vec<String> = line.iter().map(u8::to_string).collect();
            writeln!(out, "{}", text.join(" ")).unwrap();
        }
    }
    out
}

pub fn write_binary(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_binary(img))?;
    Ok(())
}

pub fn write_ascii(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_ascii(img))?;
    Ok(())
}
