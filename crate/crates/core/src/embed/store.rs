//! Binary embedding store.
//!
//! ```text
//! magic    16 bytes  "VFEMBED1" followed by 8 zero bytes
//! dim      u32
//! count    u64
//! backend  u32 length + UTF-8
//! count × { u32 len + video_id, u32 action_id, u32 len + source,
//!           u32 frame_index, dim × f32 }
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::Source;
use crate::error::{Error, Result};

pub const STORE_MAGIC: [u8; 16] = *b"VFEMBED1\0\0\0\0\0\0\0\0";
const MAX_STRING: u32 = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub video_id: String,
    pub source: Source,
    pub action_id: u32,
    pub frame_index: u32,
    pub backend: String,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn vector_f64(&self) -> Vec<f64> {
        self.vector.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Embeddings of one backend, all of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    backend: String,
    dim: usize,
    records: Vec<EmbeddingRecord>,
}

impl EmbeddingStore {
    pub fn new(backend: impl Into<String>, dim: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        let backend = backend.into();
        if dim == 0 && !records.is_empty() {
            return Err(Error::contract("a non-empty store needs a positive dimension"));
        }
        if u32::try_from(dim).is_err() {
            return Err(Error::contract(format!("dimension {dim} too large")));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.vector.len() != dim {
                return Err(Error::contract(format!(
                    "records[{i}] ({}, frame {}) has dimension {}, store has {dim}",
                    r.video_id,
                    r.frame_index,
                    r.vector.len()
                )));
            }
            if r.backend != backend {
                return Err(Error::contract(format!(
                    "records[{i}] comes from backend {:?}, store is {backend:?}",
                    r.backend
                )));
            }
            if r.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("records[{i}] has non-finite values")));
            }
            if !seen.insert((r.video_id.as_str(), r.frame_index)) {
                return Err(Error::contract(format!(
                    "duplicate record for {} frame {}",
                    r.video_id, r.frame_index
                )));
            }
        }
        Ok(EmbeddingStore { backend, dim, records })
    }

    /// Builds a store from records, taking the backend and dimension from the
    /// first record. An empty list gives an empty store with dimension 0.
    pub fn from_records(records: Vec<EmbeddingRecord>) -> Result<Self> {
        match records.first() {
            Some(r) => {
                let (backend, dim) = (r.backend.clone(), r.vector.len());
                Self::new(backend, dim, records)
            }
            None => Self::new("", 0, records),
        }
    }

    pub fn backend(&self) -> &str {
        &self.backend
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    /// Sorts into canonical `(video_id, frame_index)` order.
    pub fn canonicalize(&mut self) {
        self.records
            .sort_by(|a, b| (&a.video_id, a.frame_index).cmp(&(&b.video_id, b.frame_index)));
    }

    /// Records grouped per video, each group in frame order.
    pub fn by_video(&self) -> BTreeMap<&str, Vec<&EmbeddingRecord>> {
        let mut out: BTreeMap<&str, Vec<&EmbeddingRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.video_id.as_str()).or_default().push(r);
        }
        for group in out.values_mut() {
            group.sort_by_key(|r| r.frame_index);
        }
        out
    }

    pub fn write_to<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = BufWriter::new(out);
        w.write_all(&STORE_MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        write_str(&mut w, &self.backend)?;
        for r in &self.records {
            write_str(&mut w, &r.video_id)?;
            w.write_all(&r.action_id.to_le_bytes())?;
            write_str(&mut w, &r.source.to_string())?;
            w.write_all(&r.frame_index.to_le_bytes())?;
            for v in &r.vector {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    /// Writes to `path` via a temporary file and an atomic rename.
    pub fn write(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        self.write_to(tmp.as_file_mut()).map_err(|e| Error::io(path, e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R, context: &str) -> Result<Self> {
        let mut r = Reader {
            inner: BufReader::new(input),
            pos: 0,
            context,
        };
        let magic = r.bytes(16, "magic")?;
        if magic != STORE_MAGIC {
            return Err(r.error_at(0, "not an embedding store (bad magic)"));
        }
        let dim = r.u32("dimension")? as usize;
        let count = r.u64("record count")?;
        let backend = r.string("backend name")?;
        if count > 0 && dim == 0 {
            return Err(r.error_at(16, "dimension 0 with a non-zero record count"));
        }
        let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
        let mut vec_buf = vec![0u8; 4 * dim];
        for i in 0..count {
            let start = r.pos;
            let video_id = r.string("video_id")?;
            let action_id = r.u32("action_id")?;
            let source_text = r.string("source")?;
            let source: Source = source_text
                .parse()
                .map_err(|e: Error| r.error_at(start, &format!("record {i}: {e}")))?;
            let frame_index = r.u32("frame_index")?;
            let vec_start = r.pos;
            r.fill(&mut vec_buf, "vector")?;
            let vector: Vec<f32> = vec_buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(r.error_at(vec_start, &format!("record {i} has non-finite values")));
            }
            records.push(EmbeddingRecord {
                video_id,
                source,
                action_id,
                frame_index,
                backend: backend.clone(),
                vector,
            });
        }
        let mut probe = [0u8; 1];
        if r.inner.read(&mut probe).map_err(|e| Error::io(context, e))? != 0 {
            return Err(r.error_at(r.pos, "trailing bytes after the last record"));
        }
        EmbeddingStore::new(backend, dim, records)
            .map_err(|e| Error::parse(context.to_owned(), e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file, &path.display().to_string())
    }
}

pub fn write_store(records: &[EmbeddingRecord], path: &Path) -> Result<()> {
    EmbeddingStore::from_records(records.to_vec())?.write(path)
}

pub fn read_store(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    Ok(EmbeddingStore::read(path)?.into_records())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    let len = u32::try_from(s.len())
        .ok()
        .filter(|&l| l <= MAX_STRING)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "string field too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

struct Reader<'c, R> {
    inner: BufReader<R>,
    pos: u64,
    context: &'c str,
}

impl<R: Read> Reader<'_, R> {
    fn error_at(&self, offset: u64, message: &str) -> Error {
        Error::parse(self.context.to_owned(), format!("at byte {offset}: {message}"))
    }

    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.pos += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                Err(self.error_at(self.pos, &format!("file truncated while reading {what}")))
            }
            Err(e) => Err(Error::io(self.context, e)),
        }
    }

    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.fill(&mut buf, what)?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let start = self.pos;
        let len = self.u32(what)?;
        if len > MAX_STRING {
            return Err(self.error_at(start, &format!("{what} length {len} is implausible")));
        }
        let bytes = self.bytes(len as usize, what)?;
        String::from_utf8(bytes).map_err(|_| self.error_at(start + 4, &format!("{what} is not UTF-8")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(video: &str, frame: u32, vector: Vec<f32>) -> EmbeddingRecord {
        EmbeddingRecord {
            video_id: video.into(),
            source: if video.starts_with('r') { Source::Real } else { Source::Veo },
            action_id: 3,
            frame_index: frame,
            backend: "toy".into(),
            vector,
        }
    }

    fn bytes_of(store: &EmbeddingStore) -> Vec<u8> {
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let records = vec![
            rec("r1", 0, vec![0.1, -0.0, f32::MIN_POSITIVE]),
            rec("r1", 10, vec![1e-40, 3.5, -7.25]),
            rec("v1", 0, vec![f32::MAX, f32::MIN, 1.0 / 3.0]),
        ];
        let store = EmbeddingStore::from_records(records.clone()).unwrap();
        let buf = bytes_of(&store);
        let back = EmbeddingStore::read_from(&buf[..], "mem").unwrap();
        assert_eq!(back.records().len(), 3);
        for (a, b) in records.iter().zip(back.records()) {
            assert_eq!(a.video_id, b.video_id);
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.vector), bits(&b.vector));
        }
        assert_eq!(back, store);
    }

    #[test]
    fn empty_store() {
        let store = EmbeddingStore::from_records(vec![]).unwrap();
        let buf = bytes_of(&store);
        assert_eq!(buf.len(), 16 + 4 + 8 + 4);
        let back = EmbeddingStore::read_from(&buf[..], "mem").unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn mixed_dims_rejected() {
        let err = EmbeddingStore::from_records(vec![rec("a", 0, vec![1.0]), rec("b", 0, vec![1.0, 2.0])])
            .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn truncation_reports_offset() {
        let store = EmbeddingStore::from_records(vec![rec("r1", 0, vec![1.0, 2.0])]).unwrap();
        let buf = bytes_of(&store);
        for cut in [3, 20, buf.len() - 1] {
            let err = EmbeddingStore::read_from(&buf[..cut], "mem").unwrap_err();
            let Error::Parse { message, .. } = err else { panic!("{err:?}") };
            assert!(message.contains("at byte"), "{message}");
            assert!(message.contains("truncated"), "{message}");
        }
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(EmbeddingStore::read_from(&extra[..], "mem"), Err(Error::Parse { .. })));
        let mut bad = buf;
        bad[0] = b'X';
        assert!(matches!(EmbeddingStore::read_from(&bad[..], "mem"), Err(Error::Parse { .. })));
    }

    #[test]
    fn canonical_order() {
        let mut store = EmbeddingStore::from_records(vec![
            rec("v1", 5, vec![0.0]),
            rec("r1", 9, vec![0.0]),
            rec("r1", 2, vec![0.0]),
        ])
        .unwrap();
        store.canonicalize();
        let keys: Vec<_> = store.records().iter().map(|r| (r.video_id.as_str(), r.frame_index)).collect();
        assert_eq!(keys, vec![("r1", 2), ("r1", 9), ("v1", 5)]);
    }
}
