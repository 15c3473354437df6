//! Netpbm grayscale images (`P2` ASCII and `P5` binary).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major pixels, first row at the top.
    pub pixels: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, maxval: u16) -> Self {
        GrayImage {
            width,
            height,
            maxval,
            pixels: vec![0; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: u16) {
        self.pixels[row * self.width + col] = v;
    }
}

struct Tokens<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Tokens<'_> {
    fn next_number(&mut self) -> Result<usize> {
        loop {
            match self.data.get(self.pos) {
                Some(b'#') => {
                    while let Some(&c) = self.data.get(self.pos) {
                        self.pos += 1;
                        if c == b'\n' || c == b'\r' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(Error::ImageFormat("unexpected end of file".into())),
            }
        }
        let start = self.pos;
        while matches!(self.data.get(self.pos), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::ImageFormat(format!("expected a number at byte {start}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::ImageFormat("number out of range".into()))
    }
}

pub fn parse_pgm(data: &[u8]) -> Result<GrayImage> {
    if data.len() < 2 || data[0] != b'P' || (data[1] != b'2' && data[1] != b'5') {
        return Err(Error::ImageFormat("missing P2/P5 magic".into()));
    }
    let binary = data[1] == b'5';
    let mut t = Tokens { data, pos: 2 };
    let width = t.next_number()?;
    let height = t.next_number()?;
    let maxval = t.next_number()?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::ImageFormat(format!("bad header {width}x{height} max {maxval}")));
    }
    let n = width * height;
    let mut pixels = Vec::with_capacity(n);
    if binary {
        let start = t.pos + 1;
        let bytes = if maxval > 255 { 2 } else { 1 };
        let body = data
            .get(start..start + n * bytes)
            .ok_or_else(|| Error::ImageFormat("truncated pixel data".into()))?;
        for k in 0..n {
            pixels.push(if bytes == 2 {
                u16::from_be_bytes([body[2 * k], body[2 * k + 1]])
            } else {
                body[k] as u16
            });
        }
    } else {
        for _ in 0..n {
            pixels.push(t.next_number()? as u16);
        }
    }
    if pixels.iter().any(|&p| p as usize > maxval) {
        return Err(Error::ImageFormat("pixel exceeds maxval".into()));
    }
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    parse_pgm(&std::fs::read(path)?)
}

/// Writes an ASCII `P2` image; `comments` become `#` lines after the magic.
pub fn write_pgm(path: &Path, img: &GrayImage, comments: &[String]) -> Result<()> {
    let mut out = String::new();
    out.push_str("P2\n");
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(&format!("{} {}\n{}\n", img.width, img.height, img.maxval));
    for row in img.pixels.chunks(img.width) {
        let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_round_trip() {
        let mut img = GrayImage::new(3, 2, 65535);
        img.set(0, 1, 7);
        img.set(1, 2, 65535);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        write_pgm(&p, &img, &["hello".into()]).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), img);
    }

    #[test]
    fn binary_images() {
        let mut data = b"P5\n# c\n2 1\n255\n".to_vec();
        data.extend_from_slice(&[3, 250]);
        let img = parse_pgm(&data).unwrap();
        assert_eq!(img.pixels, vec![3, 250]);
        let mut data = b"P5 1 1 1000\n".to_vec();
        data.extend_from_slice(&[0x01, 0x02]);
        assert_eq!(parse_pgm(&data).unwrap().pixels, vec![258]);
    }

    #[test]
    fn malformed_images() {
        assert!(parse_pgm(b"P3 1 1 255 0").is_err());
        assert!(parse_pgm(b"P2 2 2 255 0 1 2").is_err());
        assert!(parse_pgm(b"P2 1 1 10 11").is_err());
    }
}
