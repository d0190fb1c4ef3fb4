use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::BrownianPath;
use crate::error::{Result, RoughFlowError};

const MAGIC: &[u8; 4] = b"RFBP";
const VERSION: u32 = 1;

/// Binary cache: `"RFBP"`, version `u32`, `m u32`, `steps u64`, `h f64`,
/// `seed u64`, then row-major increments, all little-endian.
///
/// Only the level-0 addressing is recoverable from the header, so a reloaded
/// path refines as a freshly sampled one.
pub fn write_cache(path: &BrownianPath, file: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(file)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(path.m() as u32).to_le_bytes())?;
    w.write_all(&(path.steps() as u64).to_le_bytes())?;
    w.write_all(&path.h().to_le_bytes())?;
    w.write_all(&path.seed().to_le_bytes())?;
    for v in path.increments() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cache(file: &Path) -> Result<BrownianPath> {
    let mut r = BufReader::new(File::open(file)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(RoughFlowError::Io(format!("{}: bad magic", file.display())));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(RoughFlowError::Io(format!("{}: unsupported version {version}", file.display())));
    }
    r.read_exact(&mut b4)?;
    let m = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let steps = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let h = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    let mut increments = vec![0.0; steps * m];
    for v in increments.iter_mut() {
        r.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    if m == 0 {
        return BrownianPath::silent(0, steps as f64 * h, h);
    }
    BrownianPath::from_increments(seed, m, h, increments)
}

/// CSV with columns `step, t, dw_1..dw_m`.
pub fn write_csv(path: &BrownianPath, file: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(file)?);
    let m = path.m();
    let header: Vec<String> = (1..=m).map(|c| format!("dw_{c}")).collect();
    writeln!(w, "step,t,{}", header.join(","))?;
    for k in 0..path.steps() {
        let vals: Vec<String> = path.step(k).iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{k},{:e},{}", k as f64 * path.h(), vals.join(","))?;
    }
    w.flush()?;
    Ok(())
}
