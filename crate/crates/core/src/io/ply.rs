//! ASCII PLY export of colored point clouds, and the matching reader.

use std::fmt::Write as _;

use nalgebra::Vector3;

use super::text::parse_f64;
use crate::error::{Error, Location, Result};
use crate::geometry::{CoordFrame, PointCloud};

const PROPERTIES: [(&[&str], &str); 6] = [
    (&["float", "float32"], "x"),
    (&["float", "float32"], "y"),
    (&["float", "float32"], "z"),
    (&["uchar", "uint8"], "red"),
    (&["uchar", "uint8"], "green"),
    (&["uchar", "uint8"], "blue"),
];

pub fn write_ply(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(160 + cloud.len() * 40);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str(
        "property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
    );
    for (p, c) in cloud.iter() {
        let _ = writeln!(
            out,
            "{:.6} {:.6} {:.6} {} {} {}",
            p.x, p.y, p.z, c[0], c[1], c[2]
        );
    }
    out
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::format_at(Location::Line(line), msg)
}

/// Reads ASCII PLY files with a single `vertex` element laid out exactly as
/// [`write_ply`] writes it. `comment` lines in the header are ignored.
pub fn read_ply(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let mut header = lines
        .by_ref()
        .filter(|(_, l)| !l.starts_with("comment") && !l.starts_with("obj_info"));

    let mut expect = |want: &str| -> Result<usize> {
        match header.next() {
            Some((n, l)) if l.trim() == want => Ok(n),
            Some((n, l)) => Err(err(n, format!("expected {want:?}, found {l:?}"))),
            None => Err(err(0, format!("missing {want:?}"))),
        }
    };
    expect("ply")?;
    expect("format ascii 1.0")?;

    let (n_line, count) = match header.next() {
        Some((n, l)) => {
            let toks: Vec<&str> = l.split_whitespace().collect();
            match toks.as_slice() {
                ["element", "vertex", c] => (
                    n,
                    c.parse::<usize>()
                        .map_err(|_| err(n, format!("bad vertex count {c:?}")))?,
                ),
                _ => return Err(err(n, format!("expected vertex element, found {l:?}"))),
            }
        }
        None => return Err(err(0, "missing element line")),
    };
    for (types, name) in PROPERTIES {
        match header.next() {
            Some((n, l)) => {
                let toks: Vec<&str> = l.split_whitespace().collect();
                let ok = matches!(toks.as_slice(), ["property", t, nm] if types.contains(t) && nm == &name);
                if !ok {
                    return Err(err(n, format!("unsupported property layout at {l:?}")));
                }
            }
            None => return Err(err(n_line, "header ends before all properties")),
        }
    }
    match header.next() {
        Some((_, "end_header")) => {}
        Some((n, l)) => return Err(err(n, format!("unsupported header line {l:?}"))),
        None => return Err(err(n_line, "missing end_header")),
    }
    drop(header);

    let mut points = Vec::with_capacity(count.min(1 << 24));
    let mut colors = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        let (n, l) = lines
            .next()
            .ok_or_else(|| err(0, format!("expected {count} vertices, found {}", points.len())))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 6 {
            return Err(err(n, format!("vertex needs 6 fields, got {}", toks.len())));
        }
        points.push(Vector3::new(
            parse_f64(toks[0], n, "x")?,
            parse_f64(toks[1], n, "y")?,
            parse_f64(toks[2], n, "z")?,
        ));
        let mut c = [0u8; 3];
        for (ch, t) in c.iter_mut().zip(&toks[3..]) {
            *ch = t.parse().map_err(|_| err(n, format!("bad color channel {t:?}")))?;
        }
        colors.push(c);
    }
    if let Some((n, l)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(err(n, format!("unexpected data after vertices: {l:?}")));
    }
    PointCloud::new(CoordFrame::World, points, colors)
}
