//! OBJ and binary PPM (P6) export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DensityGrid, RenderError, Result};
use crate::tensor::Tensor;

// Face table: neighbor offset, then the four corners (unit-cube coordinates)
// wound counter-clockwise seen from outside.
const FACES: [([i64; 3], [[u8; 3]; 4]); 6] = [
    ([-1, 0, 0], [[0, 0, 0], [0, 0, 1], [0, 1, 1], [0, 1, 0]]),
    ([1, 0, 0], [[1, 0, 0], [1, 1, 0], [1, 1, 1], [1, 0, 1]]),
    ([0, -1, 0], [[0, 0, 0], [1, 0, 0], [1, 0, 1], [0, 0, 1]]),
    ([0, 1, 0], [[0, 1, 0], [0, 1, 1], [1, 1, 1], [1, 1, 0]]),
    ([0, 0, -1], [[0, 0, 0], [0, 1, 0], [1, 1, 0], [1, 0, 0]]),
    ([0, 0, 1], [[0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]]),
];

/// Writes the boundary of all voxels with density above `threshold` as an
/// ASCII OBJ; faces shared by two occupied voxels are culled. Returns the
/// triangle count.
pub fn export_obj(grid: &DensityGrid, threshold: f64, path: &Path) -> Result<usize> {
    let (text, tris) = obj_text(grid, threshold)?;
    fs::write(path, text)?;
    Ok(tris)
}

pub(crate) fn obj_text(grid: &DensityGrid, threshold: f64) -> Result<(String, usize)> {
    if !(threshold > 0.0) {
        return Err(RenderError::Threshold(threshold));
    }
    let r = grid.resolution();
    let density = grid.density();
    let occupied = |x: i64, y: i64, z: i64| {
        let inside = |v: i64| (0..r as i64).contains(&v);
        inside(x)
            && inside(y)
            && inside(z)
            && density[grid.index(x as usize, y as usize, z as usize)] > threshold
    };
    let size = grid.voxel_size();
    let mut out = String::from("# voxel boundary mesh\n");
    let mut verts = 0usize;
    let mut tris = 0usize;
    for z in 0..r as i64 {
        for y in 0..r as i64 {
            for x in 0..r as i64 {
                if !occupied(x, y, z) {
                    continue;
                }
                for (off, corners) in FACES {
                    if occupied(x + off[0], y + off[1], z + off[2]) {
                        continue;
                    }
                    for c in corners {
                        let p = |i: i64, d: u8| -1.0 + (i + i64::from(d)) as f64 * size;
                        let _ = writeln!(out, "v {} {} {}", p(x, c[0]), p(y, c[1]), p(z, c[2]));
                    }
                    let b = verts + 1;
                    let _ = writeln!(out, "f {} {} {}", b, b + 1, b + 2);
                    let _ = writeln!(out, "f {} {} {}", b, b + 2, b + 3);
                    verts += 4;
                    tris += 2;
                }
            }
        }
    }
    Ok((out, tris))
}

fn to_byte(v: f64, index: usize) -> Result<u8> {
    if !(0.0..=1.0).contains(&v) {
        return Err(RenderError::OutOfRange { index, value: v });
    }
    // round half up
    Ok((v * 255.0 + 0.5).floor() as u8)
}

/// Encodes an `[H, W, 3]` image in `[0, 1]` as P6 bytes.
pub fn encode_ppm(img: &Tensor) -> Result<Vec<u8>> {
    let s = img.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(RenderError::Image(format!("expected [H, W, 3], got {s:?}")));
    }
    let mut bytes = format!("P6\n{} {}\n255\n", s[1], s[0]).into_bytes();
    for (i, &v) in img.data().iter().enumerate() {
        bytes.push(to_byte(v, i)?);
    }
    Ok(bytes)
}

/// Writes an `[H, W, 3]` image as binary PPM, rejecting values outside
/// `[0, 1]`.
pub fn export_image(img: &Tensor, path: &Path) -> Result<()> {
    let bytes = encode_ppm(img)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a binary PPM into an `[H, W, 3]` tensor scaled to `[0, 1]`.
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    decode_ppm(&fs::read(path)?)
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(RenderError::Image("truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(RenderError::Image(format!("unsupported header {fields:?}")));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| RenderError::Image(format!("bad dimension {s}")))
    };
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != w * h * 3 {
        return Err(RenderError::Image(format!(
            "expected {} pixel bytes, found {}",
            w * h * 3,
            body.len()
        )));
    }
    let data = body.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(Tensor::new(&[h, w, 3], data)?)
}

/// Lays images of equal size side by side and writes one PPM.
pub fn write_contact_sheet(images: &[Tensor], path: &Path) -> Result<()> {
    let first = images
        .first()
        .ok_or_else(|| RenderError::Image("no images for contact sheet".into()))?;
    let (h, w) = (first.shape()[0], first.shape()[1]);
    let n = images.len();
    let mut data = vec![0.0; h * w * n * 3];
    for (k, img) in images.iter().enumerate() {
        if img.shape() != first.shape() {
            return Err(RenderError::Image("contact sheet images differ in size".into()));
        }
        for y in 0..h {
            let src = &img.data()[y * w * 3..(y + 1) * w * 3];
            let dst = (y * w * n + k * w) * 3;
            data[dst..dst + w * 3].copy_from_slice(src);
        }
    }
    export_image(&Tensor::new(&[h, w * n, 3], data)?, path)
}
