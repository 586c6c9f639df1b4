//! Line-art rasterizer for landmark shapes, plus binary PPM (P6) I/O.

use std::path::Path;

use super::basis::{Landmarks, BROW_L, BROW_R, EYE_L, EYE_R, JAW, MOUTH_IN, MOUTH_OUT, NOSE_BRIDGE, NOSTRILS};
use crate::error::{Error, Result};

pub const IMAGE_WIDTH: usize = 640;
pub const IMAGE_HEIGHT: usize = 480;

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::dim(width * height * 3, data.len(), "image bytes"));
        }
        Ok(Image { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Image { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    fn put(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("ppm: {m}"));
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        }
        if fields[0] != "P6" {
            return Err(bad("not a binary PPM (P6)"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (w, h, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if max != 255 {
            return Err(bad("only 8-bit PPM is supported"));
        }
        let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing pixel data"))?;
        Image::new(w, h, data.to_vec()).map_err(|_| bad("pixel data length mismatch"))
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, &self.to_ppm())
    }
}

fn background() -> Image {
    let mut img = Image::filled(IMAGE_WIDTH, IMAGE_HEIGHT, [0; 3]);
    for y in 0..IMAGE_HEIGHT {
        let shade = (y * 40 / IMAGE_HEIGHT) as u8;
        for x in 0..IMAGE_WIDTH {
            img.put(x as i64, y as i64, [224 - shade, 208 - shade, 196 - shade]);
        }
    }
    img
}

fn to_pixel(p: [f64; 2]) -> (i64, i64) {
    let x = (p[0] * (IMAGE_WIDTH - 1) as f64).round() as i64;
    let y = (p[1] * (IMAGE_HEIGHT - 1) as f64).round() as i64;
    (x, y)
}

fn draw_line(img: &mut Image, a: (i64, i64), b: (i64, i64), rgb: [u8; 3]) {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        for oy in -1..=1 {
            for ox in -1..=1 {
                img.put(x + ox, y + oy, rgb);
            }
        }
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn polyline(img: &mut Image, pts: &Landmarks, range: std::ops::Range<usize>, closed: bool, rgb: [u8; 3]) {
    let idx: Vec<usize> = range.collect();
    for w in idx.windows(2) {
        draw_line(img, to_pixel(pts[w[0]]), to_pixel(pts[w[1]]), rgb);
    }
    if closed && idx.len() > 2 {
        draw_line(img, to_pixel(pts[*idx.last().unwrap()]), to_pixel(pts[idx[0]]), rgb);
    }
}

/// Rasterizes the face outline, brows, nose, eyes and lips onto a fixed
/// gradient background. Identical landmarks give identical pixels.
pub fn render_image(landmarks: &Landmarks) -> Result<Image> {
    if let Some((i, p)) = landmarks
        .iter()
        .enumerate()
        .find(|(_, p)| !p.iter().all(|v| (0.0..=1.0).contains(v)))
    {
        return Err(Error::Argument(format!("landmark {i} at {p:?} outside [0, 1]^2")));
    }
    let mut img = background();
    polyline(&mut img, landmarks, JAW, false, [120, 84, 70]);
    polyline(&mut img, landmarks, BROW_L, false, [60, 40, 30]);
    polyline(&mut img, landmarks, BROW_R, false, [60, 40, 30]);
    polyline(&mut img, landmarks, NOSE_BRIDGE, false, [150, 100, 90]);
    polyline(&mut img, landmarks, NOSTRILS, false, [150, 100, 90]);
    polyline(&mut img, landmarks, EYE_L, true, [30, 60, 110]);
    polyline(&mut img, landmarks, EYE_R, true, [30, 60, 110]);
    polyline(&mut img, landmarks, MOUTH_OUT, true, [170, 50, 60]);
    polyline(&mut img, landmarks, MOUTH_IN, true, [110, 20, 30]);
    Ok(img)
}
