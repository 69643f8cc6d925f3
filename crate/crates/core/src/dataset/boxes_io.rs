//! Box tables: `gt/boxes.csv` and `predictions/boxes.csv`.
//!
//! Header `frame_index,id,class,x,y,z,w,h,l,theta,vx,vy,ax,ay`. Float
//! fields carry 9 significant digits; rows are sorted by frame then id.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::Box3D;

use super::{create_writer, open_reader};

pub const HEADER: &str = "frame_index,id,class,x,y,z,w,h,l,theta,vx,vy,ax,ay";

/// Formats with 9 significant digits, fixed notation for decimal exponents
/// in [-4, 8] and scientific otherwise, trailing zeros trimmed. Parsing the
/// result and formatting again reproduces the same string.
pub fn fmt_sig9(x: f64) -> String {
    debug_assert!(x.is_finite());
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{x:.8e}");
    let (mant, exp_text) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp_text.parse().expect("exponent value");
    let sign = if mant.starts_with('-') { "-" } else { "" };
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 9);
    if (-4..=8).contains(&exp) {
        if exp >= 0 {
            let split = exp as usize + 1;
            let int_part = &digits[..split];
            let frac = digits[split..].trim_end_matches('0');
            if frac.is_empty() {
                format!("{sign}{int_part}")
            } else {
                format!("{sign}{int_part}.{frac}")
            }
        } else {
            let zeros = "0".repeat((-exp - 1) as usize);
            let frac = digits.trim_end_matches('0');
            format!("{sign}0.{zeros}{frac}")
        }
    } else {
        let lead = &digits[..1];
        let frac = digits[1..].trim_end_matches('0');
        if frac.is_empty() {
            format!("{sign}{lead}e{exp}")
        } else {
            format!("{sign}{lead}.{frac}e{exp}")
        }
    }
}

fn check_class(class: &str) -> Result<()> {
    if class.is_empty() || class.contains([',', '\n', '\r']) {
        return Err(Error::validation(
            "box.class",
            format!("{class:?} is empty or contains separators"),
        ));
    }
    Ok(())
}

pub fn load_boxes(path: &Path) -> Result<Vec<Box3D>> {
    let reader = open_reader(path)?;
    let mut boxes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 {
            if line.trim_end() != HEADER {
                return Err(Error::parse(path, Some(1), format!("bad header {line:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(Error::parse(
                path,
                Some(lineno),
                format!("expected 14 fields, got {}", fields.len()),
            ));
        }
        let perr = |j: usize, e: &dyn std::fmt::Display| {
            Error::parse(path, Some(lineno), format!("field {j}: {e}"))
        };
        let frame_index: u32 = fields[0].parse().map_err(|e| perr(0, &e))?;
        let id: u64 = fields[1].parse().map_err(|e| perr(1, &e))?;
        let mut f = [0f64; 11];
        for (j, field) in fields[3..].iter().enumerate() {
            f[j] = field.parse().map_err(|e| perr(j + 3, &e))?;
        }
        let b = Box3D {
            frame_index,
            id,
            class: fields[2].to_string(),
            x: f[0],
            y: f[1],
            z: f[2],
            w: f[3],
            h: f[4],
            l: f[5],
            theta: f[6],
            v: [f[7], f[8]],
            a: [f[9], f[10]],
        };
        b.validate()
            .map_err(|e| Error::parse(path, Some(lineno), e.to_string()))?;
        check_class(&b.class).map_err(|e| Error::parse(path, Some(lineno), e.to_string()))?;
        boxes.push(b);
    }
    check_unique(path, &boxes)?;
    Ok(boxes)
}

fn check_unique(path: &Path, boxes: &[Box3D]) -> Result<()> {
    let mut keys: Vec<(u32, u64)> = boxes.iter().map(|b| (b.frame_index, b.id)).collect();
    keys.sort_unstable();
    for w in keys.windows(2) {
        if w[0] == w[1] {
            return Err(Error::parse(
                path,
                None,
                format!("duplicate box id {} in frame {}", w[0].1, w[0].0),
            ));
        }
    }
    Ok(())
}

/// Writes boxes sorted by (frame_index, id).
pub fn save_boxes(path: &Path, boxes: &[Box3D]) -> Result<()> {
    for b in boxes {
        b.validate()?;
        check_class(&b.class)?;
    }
    check_unique(path, boxes)?;
    let mut sorted: Vec<&Box3D> = boxes.iter().collect();
    sorted.sort_by_key(|b| (b.frame_index, b.id));
    let mut out = String::with_capacity(64 * (boxes.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for b in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            b.frame_index,
            b.id,
            b.class,
            fmt_sig9(b.x),
            fmt_sig9(b.y),
            fmt_sig9(b.z),
            fmt_sig9(b.w),
            fmt_sig9(b.h),
            fmt_sig9(b.l),
            fmt_sig9(b.theta),
            fmt_sig9(b.v[0]),
            fmt_sig9(b.v[1]),
            fmt_sig9(b.a[0]),
            fmt_sig9(b.a[1]),
        ));
    }
    let mut w = create_writer(path)?;
    w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
