//! Binary laser profile records, little-endian:
//!
//! ```text
//! u64 profile_count
//! repeat profile_count:
//!     f64 timestamp
//!     repeat N: f32 x, f32 z, u8 valid
//! ```
//!
//! `N` is not stored; every profile in a file has the same length and the
//! reader recovers it from the file size.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::IoError;
use crate::sim::{LaserProfile, ProfileSample};

const SAMPLE_BYTES: usize = 9;

pub fn write_profiles(path: impl AsRef<Path>, profiles: &[LaserProfile]) -> Result<(), IoError> {
    let n = profiles.first().map_or(0, |p| p.samples.len());
    if profiles.iter().any(|p| p.samples.len() != n) {
        return Err(IoError::Format("profiles differ in sample count".into()));
    }
    let mut w = BufWriter::with_capacity(1 << 20, File::create(path)?);
    w.write_all(&(profiles.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 + n * SAMPLE_BYTES);
    for p in profiles {
        buf.clear();
        buf.extend_from_slice(&p.timestamp.to_le_bytes());
        for s in &p.samples {
            buf.extend_from_slice(&(s.x as f32).to_le_bytes());
            buf.extend_from_slice(&(s.z as f32).to_le_bytes());
            buf.push(s.valid as u8);
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profiles(path: impl AsRef<Path>) -> Result<Vec<LaserProfile>, IoError> {
    let file = File::open(path)?;
    let size = file.metadata()?.len() as usize;
    let mut r = BufReader::with_capacity(1 << 20, file);
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let count = u64::from_le_bytes(word) as usize;
    if count == 0 {
        return if size == 8 {
            Ok(Vec::new())
        } else {
            Err(IoError::Format("trailing bytes after empty profile file".into()))
        };
    }
    let body = size - 8;
    if !body.is_multiple_of(count) || (body / count) < 8 || !(body / count - 8).is_multiple_of(SAMPLE_BYTES) {
        return Err(IoError::Format(format!("{body} bytes do not split into {count} equal profiles")));
    }
    let n = (body / count - 8) / SAMPLE_BYTES;
    let mut buf = vec![0u8; n * SAMPLE_BYTES];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut word)?;
        let timestamp = f64::from_le_bytes(word);
        r.read_exact(&mut buf)?;
        let samples = buf
            .chunks_exact(SAMPLE_BYTES)
            .map(|c| {
                let x = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let z = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                match c[8] {
                    0 => Ok(ProfileSample { x: x as f64, z: z as f64, valid: false }),
                    1 => Ok(ProfileSample { x: x as f64, z: z as f64, valid: true }),
                    v => Err(IoError::Format(format!("bad validity byte {v}"))),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(LaserProfile { timestamp, samples });
    }
    Ok(out)
}
