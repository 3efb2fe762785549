use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::InitPointCloud;
use crate::error::{Error, Result};

/// One vertex as stored on disk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlyVertex {
    pub position: [f32; 3],
    pub rgb: [u8; 3],
}

fn quantize(c: f64) -> u8 {
    // round half up
    (c.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Writes `cloud` as a binary little-endian PLY with `x y z` floats and
/// `red green blue` bytes.
///
/// Empty clouds are refused unless `allow_empty` is set.
pub fn export_ply<W: Write>(cloud: &InitPointCloud, mut out: W, allow_empty: bool) -> Result<()> {
    if cloud.is_empty() && !allow_empty {
        return Err(Error::invalid(
            "refusing to export an empty point cloud (no voxel reached the opacity threshold)",
        ));
    }
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )?;
    let mut record = [0u8; 15];
    for p in &cloud.points {
        for (axis, v) in p.position.iter().enumerate() {
            record[axis * 4..axis * 4 + 4].copy_from_slice(&(*v as f32).to_le_bytes());
        }
        for (ch, c) in p.color.iter().enumerate() {
            record[12 + ch] = quantize(*c);
        }
        out.write_all(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ply_file(cloud: &InitPointCloud, path: &Path, allow_empty: bool) -> Result<()> {
    let file = File::create(path)?;
    export_ply(cloud, BufWriter::new(file), allow_empty)
}

/// Reads back files in exactly the layout produced by [`export_ply`].
pub fn read_ply<R: Read>(input: R) -> Result<Vec<PlyVertex>> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    let mut header = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::Data("PLY header is not terminated".into()));
        }
        let trimmed = line.trim_end().to_string();
        if trimmed == "end_header" {
            break;
        }
        header.push(trimmed);
    }
    let expected = [
        "ply",
        "format binary_little_endian 1.0",
        "",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
    ];
    if header.len() != expected.len() {
        return Err(Error::Data(format!(
            "unexpected PLY header with {} lines",
            header.len()
        )));
    }
    let mut count = None;
    for (got, want) in header.iter().zip(expected) {
        if want.is_empty() {
            count = got
                .strip_prefix("element vertex ")
                .and_then(|n| n.parse::<usize>().ok());
            if count.is_none() {
                return Err(Error::Data(format!("bad element line {got:?}")));
            }
        } else if got != want {
            return Err(Error::Data(format!("expected {want:?}, found {got:?}")));
        }
    }
    let count = count.unwrap_or(0);
    let mut vertices = Vec::with_capacity(count);
    let mut record = [0u8; 15];
    for _ in 0..count {
        reader
            .read_exact(&mut record)
            .map_err(|e| Error::Data(format!("truncated PLY body: {e}")))?;
        let f = |o: usize| f32::from_le_bytes(record[o..o + 4].try_into().unwrap());
        vertices.push(PlyVertex {
            position: [f(0), f(4), f(8)],
            rgb: [record[12], record[13], record[14]],
        });
    }
    Ok(vertices)
}
