//! On-disk formats: depth maps, spectra, accuracy reports and raw traces.
//!
//! Binary layouts are little-endian.
//!
//! Depth map (`.bin`): 16-byte header `b"DMAP"`, u32 N, u32 reserved,
//! u32 reserved, then N² f64 ranges in metres, row-major. Pixels flagged
//! no-peak are stored as NaN.
//!
//! Trace frame (`.iqt`): header `b"IQTR"`, u32 version (1), u32 N,
//! u32 trace count, u64 frame index, u64 laser seed, u64 noise seed; then
//! per trace u32 row, u32 col, u32 chirp, u32 reserved, f64 fs, u64 length
//! and `length` interleaved (i, q) f64 pairs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::array::Frame;
use crate::dsp::{AccuracyReport, DepthMap, PeakQuality, Spectrum};
use crate::error::{Error, Result};
use crate::laser::ChirpConfig;
use crate::receiver::{IqTrace, TraceMeta};

pub const DEPTH_MAGIC: &[u8; 4] = b"DMAP";
pub const TRACE_MAGIC: &[u8; 4] = b"IQTR";
pub const TRACE_VERSION: u32 = 1;

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn depth_map_csv(map: &DepthMap) -> String {
    let mut out = String::from("row,col,range_m,beat_hz,peak_snr_db,quality\n");
    for (idx, e) in map.estimates.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            idx / map.n,
            idx % map.n,
            e.range,
            e.beat_frequency,
            e.peak_snr_db,
            e.quality.name()
        );
    }
    out
}

pub fn depth_map_bin(map: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * map.estimates.len());
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&(map.n as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for e in &map.estimates {
        let r = if e.quality == PeakQuality::NoPeak {
            f64::NAN
        } else {
            e.range
        };
        out.extend_from_slice(&r.to_le_bytes());
    }
    out
}

/// Decodes a binary depth map into `(N, ranges)`.
pub fn parse_depth_map_bin(bytes: &[u8]) -> std::result::Result<(usize, Vec<f64>), String> {
    if bytes.len() < 16 || &bytes[..4] != DEPTH_MAGIC {
        return Err("missing DMAP header".into());
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != 8 * n * n {
        return Err(format!(
            "expected {} range values, found {} bytes",
            n * n,
            body.len()
        ));
    }
    let ranges = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((n, ranges))
}

/// Spectrum as `frequency_hz,magnitude_db,phase_rad`, most negative
/// frequency first.
pub fn spectrum_csv(spec: &Spectrum) -> String {
    let n = spec.len();
    let mut out = String::from("frequency_hz,magnitude_db,phase_rad\n");
    for j in 0..n {
        let k = (j + n / 2) % n;
        let b = spec.bins[k];
        let _ = writeln!(
            out,
            "{},{},{}",
            spec.frequency(k),
            20.0 * b.norm().log10(),
            b.arg()
        );
    }
    out
}

pub fn accuracy_csv(report: &AccuracyReport) -> String {
    let mut out =
        String::from("row,col,truth_m,valid_frames,mean_error_m,sigma_m,sigma_over_range\n");
    for p in &report.pixels {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.row,
            p.col,
            opt(p.truth),
            p.valid,
            opt(p.mean_error),
            opt(p.sigma),
            opt(p.ratio)
        );
    }
    out
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let samples: usize = frame.traces.iter().map(|t| t.len()).sum();
    let mut out = Vec::with_capacity(40 + 32 * frame.traces.len() + 16 * samples);
    out.extend_from_slice(TRACE_MAGIC);
    out.extend_from_slice(&TRACE_VERSION.to_le_bytes());
    out.extend_from_slice(&(frame.n as u32).to_le_bytes());
    out.extend_from_slice(&(frame.traces.len() as u32).to_le_bytes());
    out.extend_from_slice(&(frame.frame_index as u64).to_le_bytes());
    out.extend_from_slice(&frame.laser_seed.to_le_bytes());
    out.extend_from_slice(&frame.noise_seed.to_le_bytes());
    for t in &frame.traces {
        for v in [t.meta.row, t.meta.col, t.meta.chirp, 0] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&t.fs.to_le_bytes());
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for (i, q) in t.i.iter().zip(&t.q) {
            out.extend_from_slice(&i.to_le_bytes());
            out.extend_from_slice(&q.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode_frame_inner(bytes: &[u8], chirp: &ChirpConfig) -> std::result::Result<Frame, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != TRACE_MAGIC {
        return Err("missing IQTR header".into());
    }
    let version = r.u32()?;
    if version != TRACE_VERSION {
        return Err(format!("unsupported trace version {version}"));
    }
    let n = r.u32()? as usize;
    let count = r.u32()? as usize;
    let frame_index = r.u64()? as usize;
    let laser_seed = r.u64()?;
    let noise_seed = r.u64()?;
    let mut traces = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let row = r.u32()? as usize;
        let col = r.u32()? as usize;
        let chirp_index = r.u32()? as usize;
        r.u32()?;
        let fs = r.f64()?;
        let len = r.u64()? as usize;
        if len > (bytes.len() - r.pos) / 16 {
            return Err(format!(
                "trace ({row}, {col}) claims {len} samples beyond end of file"
            ));
        }
        let mut i = Vec::with_capacity(len);
        let mut q = Vec::with_capacity(len);
        for _ in 0..len {
            i.push(r.f64()?);
            q.push(r.f64()?);
        }
        let mut t = IqTrace::new(i, q, fs).map_err(|e| e.to_string())?;
        t.meta = TraceMeta {
            row,
            col,
            chirp: chirp_index,
        };
        traces.push(t);
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(Frame {
        n,
        chirp: chirp.clone(),
        traces,
        frame_index,
        laser_seed,
        noise_seed,
    })
}

pub fn decode_frame(bytes: &[u8], chirp: &ChirpConfig, path: &Path) -> Result<Frame> {
    decode_frame_inner(bytes, chirp).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}
