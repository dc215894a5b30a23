//! `.dflo` archives: a fixed little-endian header followed by a payload.
//!
//! Header layout (37 bytes): magic `DFLO`, version `u32`, kind `u8`,
//! `nx: u64`, `ny: u64`, channels or planes `u32`, payload length `u64`.
//! Plane data are `f64` little-endian, `ny × nx` with `x` fastest.

use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diffeo::{DiffeoMap, MapChain};
use crate::error::{Error, Result};
use crate::field::{Grid, PeriodicField};
use crate::lifting::{FixedLifter, Lifter, LifterKind, SpectralLifter};
use crate::solvers::{Trajectory, TrajectoryMeta};

pub const MAGIC: [u8; 4] = *b"DFLO";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 37;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ArchiveKind {
    Field = 1,
    Map = 2,
    Chain = 3,
    Trajectory = 4,
    Lifter = 5,
}

impl ArchiveKind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => ArchiveKind::Field,
            2 => ArchiveKind::Map,
            3 => ArchiveKind::Chain,
            4 => ArchiveKind::Trajectory,
            5 => ArchiveKind::Lifter,
            other => return Err(Error::Malformed(format!("unknown archive kind {other}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchiveHeader {
    pub kind: ArchiveKind,
    pub nx: u64,
    pub ny: u64,
    pub channels: u32,
    pub payload_len: u64,
}

impl ArchiveHeader {
    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..8].copy_from_slice(&VERSION.to_le_bytes());
        b[8] = self.kind as u8;
        b[9..17].copy_from_slice(&self.nx.to_le_bytes());
        b[17..25].copy_from_slice(&self.ny.to_le_bytes());
        b[25..29].copy_from_slice(&self.channels.to_le_bytes());
        b[29..37].copy_from_slice(&self.payload_len.to_le_bytes());
        b
    }

    /// Parses and validates the header at the start of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated(format!("{} bytes, no magic", bytes.len())));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::MagicMismatch(magic));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated(format!("header needs {HEADER_LEN} bytes, got {}", bytes.len())));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::VersionMismatch(version));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        Ok(Self {
            kind: ArchiveKind::from_u8(bytes[8])?,
            nx: u64_at(9),
            ny: u64_at(17),
            channels: u32::from_le_bytes(bytes[25..29].try_into().expect("4 bytes")),
            payload_len: u64_at(29),
        })
    }

    fn grid(&self) -> Result<Grid> {
        Grid::new(to_usize(self.nx)?, to_usize(self.ny)?)
            .map_err(|e| Error::Malformed(format!("header grid: {e}")))
    }
}

fn to_usize(v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Malformed(format!("size {v} does not fit in memory")))
}

fn archive(kind: ArchiveKind, nx: usize, ny: usize, channels: u32, payload: Vec<u8>) -> Vec<u8> {
    let header = ArchiveHeader {
        kind,
        nx: nx as u64,
        ny: ny as u64,
        channels,
        payload_len: payload.len() as u64,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&header.encode());
    out.extend(payload);
    out
}

/// Validates the header against `expected` and returns it with the payload.
fn open(bytes: &[u8], expected: ArchiveKind) -> Result<(ArchiveHeader, &[u8])> {
    let h = ArchiveHeader::decode(bytes)?;
    if h.kind != expected {
        return Err(Error::KindMismatch {
            expected: expected as u8,
            found: h.kind as u8,
        });
    }
    let body = &bytes[HEADER_LEN..];
    let len = to_usize(h.payload_len)?;
    if body.len() < len {
        return Err(Error::Truncated(format!("payload of {len} bytes, only {} present", body.len())));
    }
    if body.len() > len {
        return Err(Error::Malformed(format!("{} trailing bytes after payload", body.len() - len)));
    }
    Ok((h, body))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Truncated(format!("needed {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::Malformed("length overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn json<T: for<'de> Deserialize<'de>>(&mut self) -> Result<T> {
        let n = to_usize(self.u64()?)?;
        Ok(serde_json::from_slice(self.take(n)?)?)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Malformed(format!(
                "{} unread payload bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_json<T: Serialize>(out: &mut Vec<u8>, value: &T) -> Result<()> {
    let text = serde_json::to_vec(value)?;
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend(text);
    Ok(())
}

fn put_map(out: &mut Vec<u8>, map: &DiffeoMap) {
    for plane in map.planes() {
        put_f64s(out, &plane);
    }
}

fn read_map(r: &mut Reader<'_>, grid: Grid) -> Result<DiffeoMap> {
    let planes: Vec<Vec<f64>> = (0..8).map(|_| r.f64s(grid.len())).collect::<Result<_>>()?;
    let refs: [&[f64]; 8] = std::array::from_fn(|k| planes[k].as_slice());
    DiffeoMap::from_planes(grid, refs).map_err(|e| Error::Malformed(format!("map planes: {e}")))
}

fn put_chain(out: &mut Vec<u8>, chain: &MapChain) {
    out.extend_from_slice(&(chain.len() as u64).to_le_bytes());
    for m in chain.maps() {
        put_map(out, m);
    }
}

fn read_chain(r: &mut Reader<'_>, grid: Option<Grid>) -> Result<MapChain> {
    let n = to_usize(r.u64()?)?;
    let Some(grid) = grid else {
        if n == 0 {
            return Ok(MapChain::new());
        }
        return Err(Error::Malformed("non-empty chain without a grid".into()));
    };
    let mut chain = MapChain::new();
    for _ in 0..n {
        chain.push(read_map(r, grid)?)?;
    }
    Ok(chain)
}

fn read_field_data(r: &mut Reader<'_>, grid: Grid, channels: usize) -> Result<PeriodicField> {
    let data = r.f64s(grid.len() * channels)?;
    PeriodicField::new(grid, channels, data).map_err(|e| Error::Malformed(format!("field data: {e}")))
}

pub fn encode_field(field: &PeriodicField) -> Vec<u8> {
    let g = field.grid();
    let mut payload = Vec::new();
    put_f64s(&mut payload, field.data());
    archive(ArchiveKind::Field, g.nx(), g.ny(), field.channels() as u32, payload)
}

pub fn decode_field(bytes: &[u8]) -> Result<PeriodicField> {
    let (h, body) = open(bytes, ArchiveKind::Field)?;
    let mut r = Reader::new(body);
    let f = read_field_data(&mut r, h.grid()?, h.channels as usize)?;
    r.finish()?;
    Ok(f)
}

pub fn encode_map(map: &DiffeoMap) -> Vec<u8> {
    let g = map.grid();
    let mut payload = Vec::new();
    put_map(&mut payload, map);
    archive(ArchiveKind::Map, g.nx(), g.ny(), 8, payload)
}

pub fn decode_map(bytes: &[u8]) -> Result<DiffeoMap> {
    let (h, body) = open(bytes, ArchiveKind::Map)?;
    let mut r = Reader::new(body);
    let m = read_map(&mut r, h.grid()?)?;
    r.finish()?;
    Ok(m)
}

/// An empty chain has no grid and is stored with `nx = ny = 0`.
pub fn encode_chain(chain: &MapChain) -> Vec<u8> {
    let (nx, ny) = chain.grid().map_or((0, 0), |g| (g.nx(), g.ny()));
    let mut payload = Vec::new();
    put_chain(&mut payload, chain);
    archive(ArchiveKind::Chain, nx, ny, 8, payload)
}

pub fn decode_chain(bytes: &[u8]) -> Result<MapChain> {
    let (h, body) = open(bytes, ArchiveKind::Chain)?;
    let grid = if h.nx == 0 && h.ny == 0 { None } else { Some(h.grid()?) };
    let mut r = Reader::new(body);
    let c = read_chain(&mut r, grid)?;
    r.finish()?;
    Ok(c)
}

#[derive(Serialize, Deserialize)]
struct TrajectoryHeader {
    dt: f64,
    frames: usize,
    meta: TrajectoryMeta,
}

/// Payload: JSON metadata, the frames, then a flag byte and the optional
/// submap chain.
pub fn encode_trajectory(traj: &Trajectory) -> Result<Vec<u8>> {
    let channels = traj.frames[0].channels();
    if traj.frames.iter().any(|f| f.channels() != channels) {
        return Err(Error::InvalidField("frames have different channel counts".into()));
    }
    let mut payload = Vec::new();
    put_json(
        &mut payload,
        &TrajectoryHeader {
            dt: traj.dt,
            frames: traj.frames.len(),
            meta: traj.meta.clone(),
        },
    )?;
    for f in &traj.frames {
        put_f64s(&mut payload, f.data());
    }
    match &traj.submaps {
        Some(chain) => {
            payload.push(1);
            put_chain(&mut payload, chain);
        }
        None => payload.push(0),
    }
    Ok(archive(
        ArchiveKind::Trajectory,
        traj.grid.nx(),
        traj.grid.ny(),
        channels as u32,
        payload,
    ))
}

pub fn decode_trajectory(bytes: &[u8]) -> Result<Trajectory> {
    let (h, body) = open(bytes, ArchiveKind::Trajectory)?;
    let grid = h.grid()?;
    let mut r = Reader::new(body);
    let th: TrajectoryHeader = r.json()?;
    let frames = (0..th.frames)
        .map(|_| read_field_data(&mut r, grid, h.channels as usize))
        .collect::<Result<Vec<_>>>()?;
    let submaps = match r.u8()? {
        0 => None,
        1 => Some(read_chain(&mut r, Some(grid))?),
        other => return Err(Error::Malformed(format!("bad submap flag {other}"))),
    };
    r.finish()?;
    Trajectory::new(grid, th.dt, frames, submaps, th.meta)
}

/// Lifters that can be written to disk.
#[derive(Debug, Clone)]
pub enum StoredLifter {
    Spectral(SpectralLifter),
    Fixed(FixedLifter),
}

impl Lifter for StoredLifter {
    fn window(&self) -> usize {
        match self {
            StoredLifter::Spectral(l) => l.window(),
            StoredLifter::Fixed(l) => l.window(),
        }
    }

    fn grid(&self) -> Grid {
        match self {
            StoredLifter::Spectral(l) => l.grid(),
            StoredLifter::Fixed(l) => l.grid(),
        }
    }

    fn kind(&self) -> LifterKind {
        match self {
            StoredLifter::Spectral(l) => l.kind(),
            StoredLifter::Fixed(l) => l.kind(),
        }
    }

    fn lift(&self, history: &[PeriodicField], step: usize) -> Result<DiffeoMap> {
        match self {
            StoredLifter::Spectral(l) => l.lift(history, step),
            StoredLifter::Fixed(l) => l.lift(history, step),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LifterHeader {
    kind: LifterKind,
    window: usize,
    #[serde(default)]
    k_feat: usize,
    #[serde(default)]
    ridge: f64,
    #[serde(default)]
    bias: [f64; 2],
    #[serde(default)]
    weights: usize,
}

/// Spectral payload: JSON metadata then interleaved `(re, im)` weights.
/// Fixed payload: JSON metadata then the 8 map planes.
pub fn encode_lifter(lifter: &StoredLifter) -> Result<Vec<u8>> {
    let g = lifter.grid();
    let mut payload = Vec::new();
    match lifter {
        StoredLifter::Spectral(l) => {
            put_json(
                &mut payload,
                &LifterHeader {
                    kind: LifterKind::Spectral,
                    window: l.window(),
                    k_feat: l.k_feat(),
                    ridge: l.ridge(),
                    bias: l.bias(),
                    weights: l.weights().len(),
                },
            )?;
            let flat: Vec<f64> = l.weights().iter().flat_map(|w| [w.re, w.im]).collect();
            put_f64s(&mut payload, &flat);
            Ok(archive(ArchiveKind::Lifter, g.nx(), g.ny(), 2, payload))
        }
        StoredLifter::Fixed(l) => {
            put_json(
                &mut payload,
                &LifterHeader {
                    kind: LifterKind::Fixed,
                    window: l.window(),
                    k_feat: 0,
                    ridge: 0.0,
                    bias: [0.0; 2],
                    weights: 0,
                },
            )?;
            put_map(&mut payload, l.map());
            Ok(archive(ArchiveKind::Lifter, g.nx(), g.ny(), 8, payload))
        }
    }
}

pub fn decode_lifter(bytes: &[u8]) -> Result<StoredLifter> {
    let (h, body) = open(bytes, ArchiveKind::Lifter)?;
    let grid = h.grid()?;
    let mut r = Reader::new(body);
    let lh: LifterHeader = r.json()?;
    let lifter = match lh.kind {
        LifterKind::Spectral => {
            let flat = r.f64s(2 * lh.weights)?;
            let weights = flat.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
            let l = SpectralLifter::from_parts(grid, lh.window, lh.k_feat, lh.ridge, weights, lh.bias)
                .map_err(|e| Error::Malformed(format!("spectral lifter: {e}")))?;
            StoredLifter::Spectral(l)
        }
        LifterKind::Fixed => StoredLifter::Fixed(FixedLifter::new(read_map(&mut r, grid)?, lh.window)?),
        other => return Err(Error::Malformed(format!("{other} lifters cannot be stored"))),
    };
    r.finish()?;
    Ok(lifter)
}

pub fn save_field(path: &Path, field: &PeriodicField) -> Result<()> {
    Ok(fs::write(path, encode_field(field))?)
}

pub fn load_field(path: &Path) -> Result<PeriodicField> {
    decode_field(&fs::read(path)?)
}

pub fn save_map(path: &Path, map: &DiffeoMap) -> Result<()> {
    Ok(fs::write(path, encode_map(map))?)
}

pub fn load_map(path: &Path) -> Result<DiffeoMap> {
    decode_map(&fs::read(path)?)
}

pub fn save_chain(path: &Path, chain: &MapChain) -> Result<()> {
    Ok(fs::write(path, encode_chain(chain))?)
}

pub fn load_chain(path: &Path) -> Result<MapChain> {
    decode_chain(&fs::read(path)?)
}

pub fn save_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    Ok(fs::write(path, encode_trajectory(traj)?)?)
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    decode_trajectory(&fs::read(path)?)
}

pub fn save_lifter(path: &Path, lifter: &StoredLifter) -> Result<()> {
    Ok(fs::write(path, encode_lifter(lifter)?)?)
}

pub fn load_lifter(path: &Path) -> Result<StoredLifter> {
    decode_lifter(&fs::read(path)?)
}

/// Header of an archive file, without reading the payload semantics.
pub fn peek_header(path: &Path) -> Result<ArchiveHeader> {
    ArchiveHeader::decode(&fs::read(path)?)
}
