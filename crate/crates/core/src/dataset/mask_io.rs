//! Label mask images (binary P5 PGM, maxval 65535, big-endian samples) and
//! the instance class table `masks/instances.csv`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{LabelMask, MaskKind};

use super::{create_writer, open_reader, read_file};
use std::io::BufRead;

/// Parses the PGM header: magic, width, height, maxval, then the byte
/// offset of the raster (one whitespace byte after the maxval token).
fn parse_pgm_header(path: &Path, bytes: &[u8]) -> Result<(u32, u32, u32, usize)> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(Error::parse(path, None, "not a P5 pgm"));
    }
    let mut pos = 2usize;
    let mut tokens = [0u32; 3];
    for slot in tokens.iter_mut() {
        // Skip whitespace and '#' comment lines.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::parse(path, None, "truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(Error::parse(path, None, "expected integer in header"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap();
        *slot = text
            .parse()
            .map_err(|e| Error::parse(path, None, format!("header value: {e}")))?;
    }
    // Exactly one whitespace byte separates the maxval from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::parse(path, None, "missing raster separator")),
    }
    Ok((tokens[0], tokens[1], tokens[2], pos))
}

pub fn load_mask(path: &Path, kind: MaskKind, camera_id: u32, frame_index: u32) -> Result<LabelMask> {
    let bytes = read_file(path)?;
    let (width, height, maxval, offset) = parse_pgm_header(path, &bytes)?;
    if maxval != 65535 {
        return Err(Error::parse(
            path,
            None,
            format!("expected maxval 65535, got {maxval}"),
        ));
    }
    let n = width as usize * height as usize;
    let raster = &bytes[offset..];
    if raster.len() != n * 2 {
        return Err(Error::parse(
            path,
            None,
            format!("raster is {} bytes, expected {}", raster.len(), n * 2),
        ));
    }
    let data: Vec<u16> = raster
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    let mask = LabelMask {
        kind,
        camera_id,
        frame_index,
        width,
        height,
        data,
    };
    mask.validate()?;
    Ok(mask)
}

pub fn save_mask(path: &Path, mask: &LabelMask) -> Result<()> {
    mask.validate()?;
    let mut w = create_writer(path)?;
    let header = format!("P5\n{} {}\n65535\n", mask.width, mask.height);
    let mut buf = Vec::with_capacity(header.len() + mask.data.len() * 2);
    buf.extend_from_slice(header.as_bytes());
    for &v in &mask.data {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// `masks/<kind>/cam%02d/%06d.pgm` relative to the dataset root.
pub fn mask_rel_path(kind: MaskKind, camera_id: u32, frame_index: u32) -> String {
    format!(
        "masks/{}/cam{camera_id:02}/{frame_index:06}.pgm",
        kind.dir_name()
    )
}

pub fn load_instance_classes(path: &Path) -> Result<BTreeMap<u16, String>> {
    let reader = open_reader(path)?;
    let mut map = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 {
            if line.trim_end() != "instance_id,class" {
                return Err(Error::parse(path, Some(1), format!("bad header {line:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (id_text, class) = line.split_once(',').ok_or_else(|| {
            Error::parse(path, Some(lineno), "expected instance_id,class")
        })?;
        let id: u16 = id_text
            .parse()
            .map_err(|e| Error::parse(path, Some(lineno), format!("instance id: {e}")))?;
        if id == 0 {
            return Err(Error::parse(path, Some(lineno), "instance id 0 is reserved"));
        }
        if class.is_empty() {
            return Err(Error::parse(path, Some(lineno), "empty class"));
        }
        if map.insert(id, class.to_string()).is_some() {
            return Err(Error::parse(path, Some(lineno), format!("duplicate id {id}")));
        }
    }
    Ok(map)
}

pub fn save_instance_classes(path: &Path, classes: &BTreeMap<u16, String>) -> Result<()> {
    let mut w = create_writer(path)?;
    let mut out = String::from("instance_id,class\n");
    for (id, class) in classes {
        out.push_str(&format!("{id},{class}\n"));
    }
    w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
