//! Minimal Wavefront-style triangle mesh reader.
//!
//! Understood lines: `v x y z [r g b]` with optional colors in `[0, 1]`,
//! and `f a b c ...` with 1-based indices (negative indices count back from
//! the latest vertex; `a/b/c` forms use the first field). Polygons are fan
//! triangulated. Normals, texture coordinates, groups and material lines
//! are skipped; any other keyword is an error.

use nalgebra::Vector3;

use super::text::parse_f64;
use crate::error::{Error, Location, Result};
use crate::frame::Rgb;
use crate::voxel::TriangleMesh;

const SKIPPED: [&str; 9] = ["vn", "vt", "vp", "o", "g", "s", "usemtl", "mtllib", "l"];

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::format_at(Location::Line(line), msg)
}

fn face_index(tok: &str, line: usize, n_vertices: usize) -> Result<usize> {
    let first = tok.split('/').next().unwrap_or("");
    let i: i64 = first
        .parse()
        .map_err(|_| err(line, format!("bad face index {tok:?}")))?;
    let resolved = match i {
        0 => None,
        i if i > 0 => Some(i as usize - 1),
        i => n_vertices.checked_sub(i.unsigned_abs() as usize),
    };
    resolved
        .filter(|&r| r < n_vertices)
        .ok_or_else(|| err(line, format!("face index {i} is out of range for {n_vertices} vertices")))
}

pub fn read_obj_mesh(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut colors: Vec<Rgb> = Vec::new();
    let mut triangles = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split_once('#').map_or(raw, |(a, _)| a);
        let mut toks = line.split_whitespace();
        let Some(kw) = toks.next() else { continue };
        let rest: Vec<&str> = toks.collect();
        match kw {
            "v" => {
                if rest.len() != 3 && rest.len() != 6 {
                    return Err(err(n, format!("vertex needs 3 or 6 numbers, got {}", rest.len())));
                }
                let f = rest
                    .iter()
                    .map(|t| parse_f64(t, n, "vertex field"))
                    .collect::<Result<Vec<_>>>()?;
                vertices.push(Vector3::new(f[0], f[1], f[2]));
                if f.len() == 6 {
                    if colors.len() + 1 != vertices.len() {
                        return Err(err(n, "vertex colors must be given for all vertices or none"));
                    }
                    let mut c = [0u8; 3];
                    for (ch, v) in c.iter_mut().zip(&f[3..]) {
                        if !(0.0..=1.0).contains(v) {
                            return Err(err(n, format!("vertex color {v} is outside [0, 1]")));
                        }
                        *ch = (v * 255.0).round() as u8;
                    }
                    colors.push(c);
                } else if !colors.is_empty() {
                    return Err(err(n, "vertex colors must be given for all vertices or none"));
                }
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(err(n, format!("face needs at least 3 vertices, got {}", rest.len())));
                }
                let idx = rest
                    .iter()
                    .map(|t| face_index(t, n, vertices.len()))
                    .collect::<Result<Vec<_>>>()?;
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            kw if SKIPPED.contains(&kw) => {}
            other => return Err(err(n, format!("unsupported line type {other:?}"))),
        }
    }
    let colors = (!colors.is_empty()).then_some(colors);
    TriangleMesh::new(vertices, triangles, colors)
}
