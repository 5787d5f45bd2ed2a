//! Mesh files: a little-endian binary container and an equivalent text form.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "CAMGMESH"
//! version    u32      = 1
//! n_meta     u32      then n_meta x (u32 len, key bytes, u32 len, value bytes)
//! n_nodes    u64
//! n_elems    u64
//! flags      u8       bit 0: transmural coordinates present
//! nodes      n_nodes x 3 f64
//! elements   n_elems x 8 u64
//! fibers     n_elems x 9 f64   (a_l, a_t, a_n)
//! transmural n_elems x f64     (if flagged)
//! ```
//!
//! The text form starts with `cardio-amg-mesh 1` and mirrors the same
//! sections line by line. Floats are written in shortest round-trip form, so
//! both formats reproduce the mesh exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{FiberFrame, HexMesh, MeshError};

const MAGIC: &[u8; 8] = b"CAMGMESH";
const TEXT_MAGIC: &str = "cardio-amg-mesh";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Binary,
    Text,
}

impl MeshFormat {
    /// `.txt` selects the text form; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") => MeshFormat::Text,
            _ => MeshFormat::Binary,
        }
    }
}

pub fn save_mesh(mesh: &HexMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_mesh(mesh, MeshFormat::from_path(path), &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Loads either format, detected from the leading bytes.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<HexMesh, MeshError> {
    let bytes = fs::read(path)?;
    read_mesh(&bytes)
}

pub fn write_mesh<W: Write>(mesh: &HexMesh, format: MeshFormat, w: &mut W) -> Result<(), MeshError> {
    match format {
        MeshFormat::Binary => write_binary(mesh, w),
        MeshFormat::Text => write_text(mesh, w),
    }
}

pub fn read_mesh(bytes: &[u8]) -> Result<HexMesh, MeshError> {
    if bytes.starts_with(MAGIC) {
        read_binary(bytes)
    } else if bytes.starts_with(TEXT_MAGIC.as_bytes()) {
        let text = std::str::from_utf8(bytes).map_err(|e| MeshError::Parse {
            location: format!("byte {}", e.valid_up_to()),
            msg: "text mesh is not valid UTF-8".into(),
        })?;
        read_text(text)
    } else {
        Err(MeshError::Parse {
            location: "byte 0".into(),
            msg: "unrecognized mesh file magic".into(),
        })
    }
}

fn write_binary<W: Write>(mesh: &HexMesh, w: &mut W) -> Result<(), MeshError> {
    let mut out = Vec::with_capacity(64 + mesh.n_nodes() * 24 + mesh.n_elements() * 144);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(mesh.metadata.len() as u32).to_le_bytes());
    for (k, v) in &mesh.metadata {
        for s in [k, v] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
    }
    out.extend_from_slice(&(mesh.n_nodes() as u64).to_le_bytes());
    out.extend_from_slice(&(mesh.n_elements() as u64).to_le_bytes());
    out.push(u8::from(mesh.transmural.is_some()));
    for p in &mesh.nodes {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for e in &mesh.elements {
        for &i in e {
            out.extend_from_slice(&(i as u64).to_le_bytes());
        }
    }
    for f in &mesh.fibers {
        for v in [f.a_l, f.a_t, f.a_n] {
            for c in v {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    if let Some(t) = &mesh.transmural {
        for c in t {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    w.write_all(&out)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], MeshError> {
        if self.bytes.len() - self.pos < n {
            return Err(MeshError::Parse {
                location: format!("byte {}", self.pos),
                msg: format!("truncated file while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, MeshError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, MeshError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, MeshError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String, MeshError> {
        let len = self.u32(what)? as usize;
        let at = self.pos;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| MeshError::Parse {
            location: format!("byte {at}"),
            msg: format!("{what} is not UTF-8"),
        })
    }

    fn count(&mut self, what: &str, item_size: usize) -> Result<usize, MeshError> {
        let at = self.pos;
        let n = self.u64(what)?;
        // reject counts that cannot fit in the remaining bytes before allocating
        let max = (self.bytes.len() / item_size.max(1)) as u64;
        if n > max {
            return Err(MeshError::Parse {
                location: format!("byte {at}"),
                msg: format!("{what} = {n} exceeds file size"),
            });
        }
        Ok(n as usize)
    }
}

fn read_binary(bytes: &[u8]) -> Result<HexMesh, MeshError> {
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(MeshError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let n_meta = r.u32("metadata count")?;
    let mut metadata = BTreeMap::new();
    for _ in 0..n_meta {
        let k = r.string("metadata key")?;
        let v = r.string("metadata value")?;
        metadata.insert(k, v);
    }
    let n_nodes = r.count("node count", 24)?;
    let n_elems = r.count("element count", 136)?;
    let flags = r.take(1, "flags")?[0];
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        nodes.push([r.f64("node")?, r.f64("node")?, r.f64("node")?]);
    }
    let mut elements = Vec::with_capacity(n_elems);
    for _ in 0..n_elems {
        let mut e = [0usize; 8];
        for slot in &mut e {
            *slot = usize::try_from(r.u64("element")?).map_err(|_| MeshError::Parse {
                location: format!("byte {}", r.pos),
                msg: "node index overflows usize".into(),
            })?;
        }
        elements.push(e);
    }
    let mut fibers = Vec::with_capacity(n_elems);
    for _ in 0..n_elems {
        let mut v = [[0.0; 3]; 3];
        for axis in &mut v {
            for c in axis.iter_mut() {
                *c = r.f64("fiber")?;
            }
        }
        fibers.push(FiberFrame {
            a_l: v[0],
            a_t: v[1],
            a_n: v[2],
        });
    }
    let transmural = if flags & 1 == 1 {
        let mut t = Vec::with_capacity(n_elems);
        for _ in 0..n_elems {
            t.push(r.f64("transmural")?);
        }
        Some(t)
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(MeshError::Parse {
            location: format!("byte {}", r.pos),
            msg: "trailing bytes after mesh data".into(),
        });
    }
    HexMesh::from_parts(nodes, elements, fibers, transmural, metadata)
}

fn write_text<W: Write>(mesh: &HexMesh, w: &mut W) -> Result<(), MeshError> {
    let mut s = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(s, "{TEXT_MAGIC} {VERSION}");
    for (k, v) in &mesh.metadata {
        let _ = writeln!(s, "meta {k} {v}");
    }
    let _ = writeln!(s, "nodes {}", mesh.n_nodes());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{:e} {:e} {:e}", p[0], p[1], p[2]);
    }
    let _ = writeln!(s, "elements {}", mesh.n_elements());
    for e in &mesh.elements {
        let line: Vec<String> = e.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    let _ = writeln!(s, "fibers");
    for f in &mesh.fibers {
        let v: Vec<String> = [f.a_l, f.a_t, f.a_n]
            .iter()
            .flatten()
            .map(|c| format!("{c:e}"))
            .collect();
        let _ = writeln!(s, "{}", v.join(" "));
    }
    if let Some(t) = &mesh.transmural {
        let _ = writeln!(s, "transmural");
        for c in t {
            let _ = writeln!(s, "{c:e}");
        }
    }
    let _ = writeln!(s, "end");
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_text(text: &str) -> Result<HexMesh, MeshError> {
    let mut lines = text.lines().enumerate().peekable();
    let err = |ln: usize, msg: String| MeshError::Parse {
        location: format!("line {}", ln + 1),
        msg,
    };
    let mut next = |what: &str| -> Result<(usize, &str), MeshError> {
        lines
            .next()
            .map(|(i, l)| (i, l.trim()))
            .ok_or_else(|| MeshError::Parse {
                location: "end of file".into(),
                msg: format!("truncated file while reading {what}"),
            })
    };
    fn floats<const N: usize>(ln: usize, line: &str, what: &str) -> Result<[f64; N], MeshError> {
        let mut out = [0.0; N];
        let mut it = line.split_whitespace();
        for slot in out.iter_mut() {
            let tok = it.next().ok_or_else(|| MeshError::Parse {
                location: format!("line {}", ln + 1),
                msg: format!("too few values for {what}"),
            })?;
            *slot = tok.parse().map_err(|_| MeshError::Parse {
                location: format!("line {}", ln + 1),
                msg: format!("bad number '{tok}' in {what}"),
            })?;
        }
        if it.next().is_some() {
            return Err(MeshError::Parse {
                location: format!("line {}", ln + 1),
                msg: format!("too many values for {what}"),
            });
        }
        Ok(out)
    }
    fn header_count(ln: usize, line: &str, key: &str) -> Result<usize, MeshError> {
        let rest = line.strip_prefix(key).ok_or_else(|| MeshError::Parse {
            location: format!("line {}", ln + 1),
            msg: format!("expected '{key} <count>'"),
        })?;
        rest.trim().parse().map_err(|_| MeshError::Parse {
            location: format!("line {}", ln + 1),
            msg: format!("bad {key} count"),
        })
    }

    let (ln, head) = next("header")?;
    let mut parts = head.split_whitespace();
    if parts.next() != Some(TEXT_MAGIC) {
        return Err(err(ln, "missing text mesh header".into()));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| err(ln, "missing version".into()))?;
    if version != VERSION {
        return Err(MeshError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let mut metadata = BTreeMap::new();
    let (mut ln, mut line) = next("nodes header")?;
    while let Some(rest) = line.strip_prefix("meta ") {
        let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
        metadata.insert(k.to_string(), v.to_string());
        (ln, line) = next("nodes header")?;
    }
    let n_nodes = header_count(ln, line, "nodes")?;
    let mut nodes = Vec::with_capacity(n_nodes.min(1 << 24));
    for _ in 0..n_nodes {
        let (ln, l) = next("nodes")?;
        nodes.push(floats::<3>(ln, l, "node")?);
    }
    let (ln, line) = next("elements header")?;
    let n_elems = header_count(ln, line, "elements")?;
    let mut elements = Vec::with_capacity(n_elems.min(1 << 24));
    for _ in 0..n_elems {
        let (ln, l) = next("elements")?;
        let mut e = [0usize; 8];
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 8 {
            return Err(err(ln, format!("element needs 8 node indices, found {}", toks.len())));
        }
        for (slot, t) in e.iter_mut().zip(toks) {
            *slot = t.parse().map_err(|_| err(ln, format!("bad node index '{t}'")))?;
        }
        elements.push(e);
    }
    let (ln, line) = next("fibers header")?;
    if line != "fibers" {
        return Err(err(ln, "expected 'fibers'".into()));
    }
    let mut fibers = Vec::with_capacity(n_elems.min(1 << 24));
    for _ in 0..n_elems {
        let (ln, l) = next("fibers")?;
        let v = floats::<9>(ln, l, "fiber frame")?;
        fibers.push(FiberFrame {
            a_l: [v[0], v[1], v[2]],
            a_t: [v[3], v[4], v[5]],
            a_n: [v[6], v[7], v[8]],
        });
    }
    let (ln, line) = next("end")?;
    let transmural = match line {
        "transmural" => {
            let mut t = Vec::with_capacity(n_elems.min(1 << 24));
            for _ in 0..n_elems {
                let (ln, l) = next("transmural")?;
                t.push(floats::<1>(ln, l, "transmural")?[0]);
            }
            let (ln, line) = next("end")?;
            if line != "end" {
                return Err(err(ln, "expected 'end'".into()));
            }
            Some(t)
        }
        "end" => None,
        _ => return Err(err(ln, "expected 'transmural' or 'end'".into())),
    };
    HexMesh::from_parts(nodes, elements, fibers, transmural, metadata)
}
