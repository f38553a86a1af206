//! On-disk formats shared between the library and the CLI.
//!
//! All multi-byte fields are little-endian; metadata is JSON so files stay
//! human-inspectable, bulk payloads are binary:
//!
//! - **GIMK** keypoints — JSON lines, one object per keypoint.
//! - **GIMD** descriptors — magic `GIMD`, u32 version, u32 count, u32 dim,
//!   then count×dim f32 values.
//! - **GIMG** graph — JSON `{n, method, params, edges}` with each edge
//!   `[i, j]`, i < j, sorted lexicographically.
//! - **GIMW** weights — magic `GIMW`, u32 version, a JSON manifest of
//!   `{name, shape, offset}` entries, a contiguous f32 blob, and a trailing
//!   SHA-256 checksum of everything before it.
//! - **Matches** — TSV rows `iA⟨tab⟩jB⟨tab⟩confidence`.
//! - **Training state** — JSON sidecar next to a GIMW checkpoint.
//!
//! Every writer goes through [`atomic_write`] (temp file + rename) so
//! readers never observe a half-written file.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::core::{DescriptorSet, Graph, Keypoint, Match, MatchSet};
use crate::encoder::ModelWeights;
use crate::trainer::Adam;
use crate::{Error, Result};

pub const GIMD_VERSION: u32 = 1;
pub const GIMW_VERSION: u32 = 1;

/// Writes `bytes` to a temp file in the target's directory and renames it
/// into place, so `path` either keeps its old content or holds all of the
/// new — never a prefix.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp_name = format!(
        ".{}.{}.tmp",
        file_name.to_string_lossy(),
        std::process::id()
    );
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => Path::new(&tmp_name).to_path_buf(),
    };
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

// ---------------------------------------------------------------- GIMK --

/// One keypoint per line as a JSON object.
pub fn write_gimk(path: &Path, kps: &[Keypoint]) -> Result<()> {
    let mut out = Vec::new();
    for kp in kps {
        serde_json::to_writer(&mut out, kp)
            .map_err(|e| Error::Format(format!("keypoint serialization: {e}")))?;
        out.push(b'\n');
    }
    atomic_write(path, &out)
}

pub fn read_gimk(path: &Path) -> Result<Vec<Keypoint>> {
    let text = fs::read_to_string(path)?;
    let mut kps = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let kp: Keypoint = serde_json::from_str(line).map_err(|e| {
            Error::Format(format!(
                "{}:{}: bad keypoint record: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        kps.push(kp);
    }
    Ok(kps)
}

// ---------------------------------------------------------------- GIMD --

/// Binary descriptor container; values are stored at f32 precision.
pub fn write_gimd(path: &Path, descs: &DescriptorSet) -> Result<()> {
    let count = u32::try_from(descs.count())
        .map_err(|_| Error::InvalidInput("descriptor count exceeds u32".into()))?;
    let dim = u32::try_from(descs.dim())
        .map_err(|_| Error::InvalidInput("descriptor dim exceeds u32".into()))?;
    let mut out = Vec::with_capacity(16 + descs.data().len() * 4);
    out.extend_from_slice(b"GIMD");
    out.extend_from_slice(&GIMD_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for &v in descs.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    atomic_write(path, &out)
}

pub fn read_gimd(path: &Path) -> Result<DescriptorSet> {
    let bytes = fs::read(path)?;
    let fail = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 {
        return Err(fail("truncated GIMD header"));
    }
    if &bytes[..4] != b"GIMD" {
        return Err(fail("bad magic, expected GIMD"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != GIMD_VERSION {
        return Err(fail(&format!(
            "unsupported GIMD version {version}, expected {GIMD_VERSION}"
        )));
    }
    let count = u32_at(8) as usize;
    let dim = u32_at(12) as usize;
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| fail("count×dim overflows"))?;
    if bytes.len() != expected {
        return Err(fail(&format!(
            "payload is {} bytes, header promises {}",
            bytes.len() - 16,
            expected - 16
        )));
    }
    let data: Vec<f64> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    DescriptorSet::new(count, dim, data)
}

// ---------------------------------------------------------------- GIMG --

/// JSON graph with its provenance (construction method and parameters).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub method: String,
    pub params: serde_json::Value,
    pub edges: Vec<(usize, usize)>,
}

impl GraphFile {
    pub fn from_graph(g: &Graph, method: &str, params: serde_json::Value) -> Self {
        let mut edges: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .filter(|&&(a, b)| a != b)
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Self {
            n: g.vertex_count(),
            method: method.to_string(),
            params,
            edges,
        }
    }

    /// Strictly validates the canonical-form contract before handing the
    /// edge list to [`Graph`].
    pub fn to_graph(&self) -> Result<Graph> {
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            if i >= j {
                return Err(Error::Format(format!(
                    "edge {k} = ({i}, {j}) violates i < j"
                )));
            }
            if j >= self.n {
                return Err(Error::Format(format!(
                    "edge {k} = ({i}, {j}) out of range for n = {}",
                    self.n
                )));
            }
            if k > 0 && self.edges[k - 1] >= (i, j) {
                return Err(Error::Format(format!(
                    "edges not sorted lexicographically at index {k}"
                )));
            }
        }
        Ok(Graph::new(self.n, self.edges.clone()))
    }
}

pub fn write_gimg(path: &Path, gf: &GraphFile) -> Result<()> {
    let json = serde_json::to_vec_pretty(gf)
        .map_err(|e| Error::Format(format!("graph serialization: {e}")))?;
    atomic_write(path, &json)
}

pub fn read_gimg(path: &Path) -> Result<GraphFile> {
    let text = fs::read_to_string(path)?;
    let gf: GraphFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: bad graph file: {e}", path.display())))?;
    Ok(gf)
}

// ---------------------------------------------------------------- GIMW --

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Element (not byte) offset into the f32 blob.
    offset: usize,
}

/// Serializes all model tensors: `GIMW`, u32 version, u64 manifest length,
/// manifest JSON, u64 element count, f32 blob, SHA-256 of all prior bytes.
pub fn write_gimw(path: &Path, w: &ModelWeights) -> Result<()> {
    let tensors = w.export_tensors();
    let mut manifest = Vec::with_capacity(tensors.len());
    let mut blob: Vec<f64> = Vec::new();
    for (name, shape, data) in &tensors {
        manifest.push(ManifestEntry {
            name: name.clone(),
            shape: shape.clone(),
            offset: blob.len(),
        });
        blob.extend_from_slice(data);
    }
    let manifest_json = serde_json::to_vec(&manifest)
        .map_err(|e| Error::Format(format!("weights manifest serialization: {e}")))?;

    let mut out = Vec::new();
    out.extend_from_slice(b"GIMW");
    out.extend_from_slice(&GIMW_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_json);
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    for &v in &blob {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    atomic_write(path, &out)
}

pub fn read_gimw(path: &Path) -> Result<ModelWeights> {
    let bytes = fs::read(path)?;
    let fail = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 + 8 + 32 {
        return Err(fail("truncated GIMW file".into()));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != checksum {
        return Err(fail(
            "checksum mismatch: file is corrupt or was not written by this format".into(),
        ));
    }
    if &body[..4] != b"GIMW" {
        return Err(fail("bad magic, expected GIMW".into()));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
    if version != GIMW_VERSION {
        return Err(fail(format!(
            "unsupported GIMW version {version}, expected {GIMW_VERSION}"
        )));
    }
    let manifest_len = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
    let manifest_end = 16usize
        .checked_add(manifest_len)
        .filter(|&e| e + 8 <= body.len())
        .ok_or_else(|| fail("manifest length exceeds file".into()))?;
    let manifest: Vec<ManifestEntry> = serde_json::from_slice(&body[16..manifest_end])
        .map_err(|e| fail(format!("bad weights manifest: {e}")))?;
    let blob_elems =
        u64::from_le_bytes(body[manifest_end..manifest_end + 8].try_into().unwrap()) as usize;
    let blob_start = manifest_end + 8;
    let expected = blob_elems
        .checked_mul(4)
        .and_then(|b| b.checked_add(blob_start))
        .ok_or_else(|| fail("blob length overflows".into()))?;
    if body.len() != expected {
        return Err(fail(format!(
            "blob holds {} bytes, header promises {}",
            body.len() - blob_start,
            expected - blob_start
        )));
    }
    let blob: Vec<f64> = body[blob_start..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();

    let mut tensors = Vec::with_capacity(manifest.len());
    for entry in &manifest {
        let len: usize = entry.shape.iter().product();
        let end = entry
            .offset
            .checked_add(len)
            .filter(|&e| e <= blob.len())
            .ok_or_else(|| {
                fail(format!(
                    "tensor '{}' (offset {}, {} elements) exceeds the blob",
                    entry.name, entry.offset, len
                ))
            })?;
        tensors.push((
            entry.name.clone(),
            entry.shape.clone(),
            blob[entry.offset..end].to_vec(),
        ));
    }
    ModelWeights::from_tensors(&tensors)
}

// -------------------------------------------------------------- matches --

/// TSV rows `iA⟨tab⟩jB⟨tab⟩confidence`. Confidence uses Rust's shortest
/// round-trip float formatting, so read∘write is exact.
pub fn write_matches(path: &Path, ms: &MatchSet) -> Result<()> {
    let mut out = String::new();
    for m in &ms.pairs {
        out.push_str(&format!("{}\t{}\t{}\n", m.a, m.b, m.confidence));
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_matches(path: &Path) -> Result<MatchSet> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |msg: &str| {
            Error::Format(format!("{}:{}: {msg}", path.display(), lineno + 1))
        };
        let mut fields = line.split('\t');
        let a = fields
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| fail("bad iA field"))?;
        let b = fields
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| fail("bad jB field"))?;
        let confidence = fields
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| fail("bad confidence field"))?;
        if fields.next().is_some() {
            return Err(fail("expected exactly 3 tab-separated fields"));
        }
        pairs.push(Match { a, b, confidence });
    }
    Ok(MatchSet { pairs })
}

// -------------------------------------------------------- training state --

/// JSON sidecar written next to a GIMW checkpoint so training can resume:
/// optimizer state, loss history, and the run's base seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub adam: Adam,
    pub losses: Vec<f64>,
    pub seed: u64,
}

pub fn write_train_state(path: &Path, state: &TrainState) -> Result<()> {
    let json = serde_json::to_vec_pretty(state)
        .map_err(|e| Error::Format(format!("training-state serialization: {e}")))?;
    atomic_write(path, &json)
}

pub fn read_train_state(path: &Path) -> Result<TrainState> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: bad training state: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::alternating_kinds;
    use tempfile::tempdir;

    fn kp(x: f64, y: f64) -> Keypoint {
        Keypoint {
            x,
            y,
            scale: 2.5,
            orientation: 1.25,
            response: 0.125,
            octave: 1,
        }
    }

    #[test]
    fn gimk_round_trips_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("kp.gimk");
        let kps = vec![kp(1.5, 2.25), kp(-0.1, 1e-17), kp(1000.0, 3.0)];
        write_gimk(&path, &kps).unwrap();
        assert_eq!(read_gimk(&path).unwrap(), kps);
    }

    #[test]
    fn empty_gimk_is_valid() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.gimk");
        write_gimk(&path, &[]).unwrap();
        assert!(read_gimk(&path).unwrap().is_empty());
    }

    #[test]
    fn gimk_rejects_malformed_lines_with_location() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.gimk");
        std::fs::write(&path, "{\"x\":1.0}\n").unwrap();
        let err = read_gimk(&path).unwrap_err().to_string();
        assert!(err.contains(":1:"), "error should cite the line: {err}");
    }

    #[test]
    fn gimd_round_trips_f32_representable_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.gimd");
        let data: Vec<f64> = (0..12).map(|k| k as f64 * 0.25 - 1.0).collect();
        let descs = DescriptorSet::new(3, 4, data).unwrap();
        write_gimd(&path, &descs).unwrap();
        let back = read_gimd(&path).unwrap();
        assert_eq!(back.count(), 3);
        assert_eq!(back.dim(), 4);
        assert_eq!(back.data(), descs.data());
    }

    #[test]
    fn gimd_header_layout_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.gimd");
        let descs = DescriptorSet::new(1, 2, vec![1.0, -2.0]).unwrap();
        write_gimd(&path, &descs).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"GIMD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 16 + 2 * 4);
        assert_eq!(
            f32::from_le_bytes(bytes[16..20].try_into().unwrap()),
            1.0f32
        );
    }

    #[test]
    fn gimd_rejects_corruption() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.gimd");
        let descs = DescriptorSet::new(2, 2, vec![0.0; 4]).unwrap();
        write_gimd(&path, &descs).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();

        let bad_magic = dir.path().join("magic.gimd");
        let mut b = bytes.clone();
        b[0] = b'X';
        std::fs::write(&bad_magic, &b).unwrap();
        assert!(read_gimd(&bad_magic).is_err());

        let truncated = dir.path().join("trunc.gimd");
        bytes.pop();
        std::fs::write(&truncated, &bytes).unwrap();
        assert!(read_gimd(&truncated).is_err());
    }

    #[test]
    fn gimg_round_trips_and_validates() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.gimg");
        let g = Graph::canonical(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]).unwrap();
        let gf = GraphFile::from_graph(&g, "agc", serde_json::json!({"beta": 15.0}));
        write_gimg(&path, &gf).unwrap();
        let back = read_gimg(&path).unwrap();
        assert_eq!(back.n, 5);
        assert_eq!(back.method, "agc");
        assert_eq!(back.edges, gf.edges);
        let g2 = back.to_graph().unwrap();
        assert_eq!(g2.edges(), g.edges());
    }

    #[test]
    fn gimg_rejects_non_canonical_edge_lists() {
        let mk = |edges: Vec<(usize, usize)>| GraphFile {
            n: 4,
            method: "test".into(),
            params: serde_json::Value::Null,
            edges,
        };
        assert!(mk(vec![(1, 0)]).to_graph().is_err(), "i >= j must fail");
        assert!(mk(vec![(0, 9)]).to_graph().is_err(), "out of range must fail");
        assert!(
            mk(vec![(1, 2), (0, 1)]).to_graph().is_err(),
            "unsorted must fail"
        );
        assert!(
            mk(vec![(0, 1), (0, 1)]).to_graph().is_err(),
            "duplicates must fail"
        );
        assert!(mk(vec![(0, 1), (1, 3)]).to_graph().is_ok());
    }

    #[test]
    fn gimg_edges_serialize_as_pair_arrays() {
        let gf = GraphFile {
            n: 3,
            method: "knn".into(),
            params: serde_json::json!({"k": 1}),
            edges: vec![(0, 2)],
        };
        let v = serde_json::to_value(&gf).unwrap();
        assert_eq!(v["edges"], serde_json::json!([[0, 2]]));
    }

    fn small_weights(seed: u64) -> ModelWeights {
        ModelWeights::xavier_init(8, 2, 2, &alternating_kinds(1), seed).unwrap()
    }

    #[test]
    fn gimw_round_trips_at_f32_precision() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("w.gimw");
        let w = small_weights(11);
        write_gimw(&path, &w).unwrap();
        let back = read_gimw(&path).unwrap();
        assert_eq!(back.dim, w.dim);
        assert_eq!(back.heads, w.heads);
        assert_eq!(back.gnn.len(), w.gnn.len());
        assert_eq!(back.attn.len(), w.attn.len());
        for (k, kk) in back
            .attn
            .iter()
            .map(|l| l.kind)
            .zip(w.attn.iter().map(|l| l.kind))
        {
            assert_eq!(k, kk);
        }
        let (a, b) = (w.to_flat(), back.to_flat());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            // f32 storage: absolute error bounded by one f32 ULP of the value
            assert!(
                (x - y).abs() <= x.abs().max(1.0) * 1e-6,
                "value {x} came back as {y}"
            );
        }
    }

    #[test]
    fn gimw_exact_for_f32_representable_weights() {
        // Weights already on the f32 grid survive bit-exactly.
        let dir = tempdir().unwrap();
        let path = dir.path().join("w.gimw");
        let mut w = small_weights(3);
        let flat: Vec<f64> = w.to_flat().iter().map(|&v| v as f32 as f64).collect();
        w.assign_flat(&flat).unwrap();
        write_gimw(&path, &w).unwrap();
        assert_eq!(read_gimw(&path).unwrap().to_flat(), flat);
    }

    #[test]
    fn gimw_detects_corruption_via_checksum() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("w.gimw");
        write_gimw(&path, &small_weights(5)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let bad = dir.path().join("bad.gimw");
        std::fs::write(&bad, &bytes).unwrap();
        let err = read_gimw(&bad).unwrap_err().to_string();
        assert!(err.contains("checksum"), "got: {err}");
    }

    #[test]
    fn gimw_preserves_head_count_not_recoverable_from_shapes() {
        let dir = tempdir().unwrap();
        for heads in [1usize, 2, 4] {
            let w = ModelWeights::xavier_init(8, 1, heads, &alternating_kinds(1), 9).unwrap();
            let path = dir.path().join(format!("h{heads}.gimw"));
            write_gimw(&path, &w).unwrap();
            assert_eq!(read_gimw(&path).unwrap().heads, heads);
        }
    }

    #[test]
    fn matches_tsv_round_trips_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let ms = MatchSet {
            pairs: vec![
                Match {
                    a: 0,
                    b: 3,
                    confidence: 0.123456789012345,
                },
                Match {
                    a: 7,
                    b: 1,
                    confidence: 1.0,
                },
            ],
        };
        write_matches(&path, &ms).unwrap();
        let back = read_matches(&path).unwrap();
        assert_eq!(back.pairs.len(), 2);
        for (m, n) in back.pairs.iter().zip(&ms.pairs) {
            assert_eq!((m.a, m.b), (n.a, n.b));
            assert_eq!(m.confidence, n.confidence, "TSV floats must round-trip");
        }
    }

    #[test]
    fn matches_tsv_rejects_malformed_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        std::fs::write(&path, "1\t2\n").unwrap();
        assert!(read_matches(&path).is_err());
        std::fs::write(&path, "1\t2\t0.5\t9\n").unwrap();
        assert!(read_matches(&path).is_err());
        std::fs::write(&path, "a\t2\t0.5\n").unwrap();
        assert!(read_matches(&path).is_err());
    }

    #[test]
    fn train_state_round_trips_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("state.json");
        let mut adam = Adam::new(1e-3, 3);
        let mut p = vec![0.1, 0.2, 0.3];
        adam.apply(&mut p, &[0.01, -0.02, 0.03]);
        let state = TrainState {
            adam,
            losses: vec![1.5, 1.25, 1.125],
            seed: 42,
        };
        write_train_state(&path, &state).unwrap();
        let back = read_train_state(&path).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.losses, state.losses);
        assert_eq!(back.adam.step, state.adam.step);
        assert_eq!(back.adam.m, state.adam.m);
        assert_eq!(back.adam.v, state.adam.v);
    }

    #[test]
    fn atomic_write_replaces_existing_content_completely() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("out.txt");
        atomic_write(&path, b"first version, quite long").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        // No temp files left behind.
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
