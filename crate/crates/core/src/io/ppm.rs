//! Binary PPM (`P6`, maxval 255) color frames.

use crate::error::{Error, Location, Result};
use crate::frame::ColorFrame;

fn is_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | b'\x0b' | b'\x0c')
}

/// Reads the next header token, skipping whitespace and `#` comments.
/// Returns the token and the offset just past it.
fn token(bytes: &[u8], mut pos: usize) -> Result<(&[u8], usize)> {
    loop {
        match bytes.get(pos) {
            None => {
                return Err(Error::format_at(
                    Location::Byte(pos),
                    "unexpected end of PPM header",
                ))
            }
            Some(b'#') => {
                while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                    pos += 1;
                }
            }
            Some(b) if is_space(*b) => pos += 1,
            Some(_) => break,
        }
    }
    let start = pos;
    while bytes.get(pos).is_some_and(|b| !is_space(*b) && *b != b'#') {
        pos += 1;
    }
    Ok((&bytes[start..pos], pos))
}

fn number(bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize)> {
    let (tok, end) = token(bytes, pos)?;
    let n = std::str::from_utf8(tok)
        .ok()
        .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| {
            Error::format_at(
                Location::Byte(end - tok.len()),
                format!("bad PPM {what} {:?}", String::from_utf8_lossy(tok)),
            )
        })?;
    Ok((n, end))
}

pub fn read_color_frame(bytes: &[u8]) -> Result<ColorFrame> {
    let (magic, pos) = token(bytes, 0)?;
    if magic != b"P6" {
        return Err(Error::format_at(
            Location::Byte(0),
            format!("expected P6 magic, found {:?}", String::from_utf8_lossy(magic)),
        ));
    }
    let (w, pos) = number(bytes, pos, "width")?;
    let (h, pos) = number(bytes, pos, "height")?;
    let (maxval, pos) = number(bytes, pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::format_at(
            Location::Byte(pos),
            format!("maxval {maxval} unsupported (only 255)"),
        ));
    }
    if !bytes.get(pos).is_some_and(|b| is_space(*b)) {
        return Err(Error::format_at(
            Location::Byte(pos),
            "missing whitespace after maxval",
        ));
    }
    let start = pos + 1;
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::format_at(Location::Byte(start), "dimensions overflow"))?;
    let payload = &bytes[start..];
    if payload.len() != need {
        return Err(Error::format_at(
            Location::Byte(start + payload.len().min(need)),
            format!("{w}x{h} image needs {need} payload bytes, have {}", payload.len()),
        ));
    }
    let pixels = payload.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    ColorFrame::new(w, h, pixels)
        .map_err(|e| Error::format_at(Location::Byte(0), e.to_string()))
}

pub fn write_color_frame(frame: &ColorFrame) -> Vec<u8> {
    let (w, h) = frame.dims();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * w * h);
    for p in frame.pixels() {
        out.extend_from_slice(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let mut b = b"P6 1 1 255 ".to_vec();
        b.extend_from_slice(&[255, 0, 0]);
        let f = read_color_frame(&b).unwrap();
        assert_eq!(f.dims(), (1, 1));
        assert_eq!(f.pixels(), &[[255, 0, 0]]);
    }

    #[test]
    fn comments_are_skipped() {
        let mut b = b"P6\n# made by hand\n2 1\n# another\n255\n".to_vec();
        b.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let f = read_color_frame(&b).unwrap();
        assert_eq!(f.pixels(), &[[1, 2, 3], [4, 5, 6]]);
    }

    #[test]
    fn payload_may_start_with_whitespace_byte() {
        let mut b = b"P6 1 1 255\n".to_vec();
        b.extend_from_slice(&[b'\n', b' ', b'#']);
        assert_eq!(read_color_frame(&b).unwrap().pixels(), &[[10, 32, 35]]);
    }

    #[test]
    fn malformed() {
        let mut p5 = b"P5 1 1 255 ".to_vec();
        p5.push(0);
        assert!(matches!(read_color_frame(&p5), Err(Error::Format { .. })));
        let mut deep = b"P6 1 1 65535 ".to_vec();
        deep.extend_from_slice(&[0; 6]);
        assert!(read_color_frame(&deep).is_err());
        let short = b"P6 2 2 255 \x00\x00\x00".to_vec();
        assert!(read_color_frame(&short).is_err());
        assert!(read_color_frame(b"P6 1").is_err());
        assert!(read_color_frame(b"P6 x 1 255 ").is_err());
        assert!(read_color_frame(b"").is_err());
    }

    #[test]
    fn round_trip() {
        let f = ColorFrame::new(2, 2, vec![[0, 1, 2], [3, 4, 5], [6, 7, 8], [255, 254, 253]]).unwrap();
        assert_eq!(read_color_frame(&write_color_frame(&f)).unwrap(), f);
    }
}
