//! On-disk encoding of segments. See `docs/index-format.md`.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::doc_model::{from_canonical_json, to_canonical_json, Field};

use super::segment::{DeletedDocs, DocRecord, Posting, SegmentData, SegmentId, Term};

const DICT_MAGIC: &[u8; 8] = b"BSDICT01";
const POST_MAGIC: &[u8; 8] = b"BSPOST01";
const STORE_MAGIC: &[u8; 8] = b"BSSTOR01";
const NORMS_MAGIC: &[u8; 8] = b"BSNORM01";
const DEL_MAGIC: &[u8; 8] = b"BSDELS01";

pub(crate) fn segment_file(dir: &Path, id: SegmentId, ext: &str) -> PathBuf {
    dir.join(format!("seg_{id:08}.{ext}"))
}

pub(crate) fn deletes_file(dir: &Path, id: SegmentId, generation: u64) -> PathBuf {
    dir.join(format!("seg_{id:08}_{generation}.del"))
}

pub(crate) const SEGMENT_EXTENSIONS: [&str; 4] = ["dict", "post", "store", "norms"];

pub(crate) fn write_varint(out: &mut Vec<u8>, mut value: u64) {
    while value >= 0x80 {
        out.push((value as u8) | 0x80);
        value >>= 7;
    }
    out.push(value as u8);
}

fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    write_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn corrupt(what: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, what.into())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 8]) -> io::Result<Self> {
        if buf.len() < 8 || &buf[..8] != magic {
            return Err(corrupt("bad magic"));
        }
        Ok(Cursor { buf, pos: 8 })
    }

    fn take(&mut self, n: usize) -> io::Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(corrupt("truncated file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> io::Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> io::Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> io::Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| corrupt("invalid utf-8"))
    }

    fn varint(&mut self) -> io::Result<u64> {
        let mut value = 0u64;
        let mut shift = 0;
        loop {
            let byte = self.u8()?;
            if shift >= 64 {
                return Err(corrupt("varint overflow"));
            }
            value |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(value);
            }
            shift += 7;
        }
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Encoded bytes of one segment's files, in [`SEGMENT_EXTENSIONS`] order.
pub(crate) struct EncodedSegment {
    pub dict: Vec<u8>,
    pub post: Vec<u8>,
    pub store: Vec<u8>,
    pub norms: Vec<u8>,
}

impl EncodedSegment {
    pub fn index_bytes(&self) -> u64 {
        (self.dict.len() + self.post.len()) as u64
    }
}

pub(crate) fn encode_segment(segment: &SegmentData) -> EncodedSegment {
    let mut dict = DICT_MAGIC.to_vec();
    let mut post = POST_MAGIC.to_vec();
    write_u32(&mut dict, segment.terms.len() as u32);
    for (term, postings) in &segment.terms {
        let offset = post.len() as u64;
        let mut prev_doc = 0u32;
        for (i, p) in postings.iter().enumerate() {
            let delta = if i == 0 { p.doc } else { p.doc - prev_doc };
            prev_doc = p.doc;
            write_varint(&mut post, u64::from(delta));
            write_varint(&mut post, p.positions.len() as u64);
            let mut prev_pos = 0u32;
            for (j, &pos) in p.positions.iter().enumerate() {
                let d = if j == 0 { pos } else { pos - prev_pos };
                prev_pos = pos;
                write_varint(&mut post, u64::from(d));
            }
        }
        dict.push(term.field.ordinal() as u8);
        write_str(&mut dict, &term.token);
        write_u32(&mut dict, postings.len() as u32);
        write_u64(&mut dict, offset);
        write_u32(&mut dict, (post.len() as u64 - offset) as u32);
    }

    let mut store = STORE_MAGIC.to_vec();
    let mut norms = NORMS_MAGIC.to_vec();
    write_u32(&mut store, segment.docs.len() as u32);
    write_u32(&mut norms, segment.docs.len() as u32);
    for record in &segment.docs {
        write_str(&mut store, &record.key);
        write_str(&mut store, &to_canonical_json(&record.stored));
        for len in record.field_lengths {
            write_u32(&mut norms, len);
        }
        write_u64(&mut norms, record.text_bytes);
    }
    EncodedSegment {
        dict,
        post,
        store,
        norms,
    }
}

pub(crate) fn decode_segment(
    id: SegmentId,
    doc_base: u32,
    encoded: &EncodedSegment,
) -> io::Result<SegmentData> {
    let mut store = Cursor::new(&encoded.store, STORE_MAGIC)?;
    let mut norms = Cursor::new(&encoded.norms, NORMS_MAGIC)?;
    let count = store.u32()?;
    if norms.u32()? != count {
        return Err(corrupt("norms/store doc count mismatch"));
    }
    let mut docs = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let key = store.string()?;
        let json = store.string()?;
        let stored = from_canonical_json(&json).map_err(|e| corrupt(e.to_string()))?;
        let mut field_lengths = [0u32; Field::COUNT];
        for len in field_lengths.iter_mut() {
            *len = norms.u32()?;
        }
        let text_bytes = norms.u64()?;
        docs.push(DocRecord {
            key,
            stored,
            field_lengths,
            text_bytes,
        });
    }
    if !store.done() || !norms.done() {
        return Err(corrupt("trailing bytes in store"));
    }

    let mut dict = Cursor::new(&encoded.dict, DICT_MAGIC)?;
    let post_buf = &encoded.post;
    Cursor::new(post_buf, POST_MAGIC)?;
    let term_count = dict.u32()?;
    let mut terms = std::collections::BTreeMap::new();
    for _ in 0..term_count {
        let field = Field::from_ordinal(dict.u8()? as usize).ok_or_else(|| corrupt("bad field"))?;
        let token = dict.string()?;
        let doc_freq = dict.u32()?;
        let offset = dict.u64()? as usize;
        let len = dict.u32()? as usize;
        if offset + len > post_buf.len() {
            return Err(corrupt("postings out of bounds"));
        }
        let mut cur = Cursor {
            buf: &post_buf[..offset + len],
            pos: offset,
        };
        let mut postings = Vec::with_capacity(doc_freq as usize);
        let mut doc = 0u32;
        for i in 0..doc_freq {
            let delta = cur.varint()? as u32;
            doc = if i == 0 { delta } else { doc + delta };
            if doc >= count {
                return Err(corrupt("doc id out of range"));
            }
            let tf = cur.varint()? as usize;
            let mut positions = Vec::with_capacity(tf);
            let mut pos = 0u32;
            for j in 0..tf {
                let d = cur.varint()? as u32;
                pos = if j == 0 { d } else { pos + d };
                positions.push(pos);
            }
            postings.push(Posting { doc, positions });
        }
        if !cur.done() {
            return Err(corrupt("postings length mismatch"));
        }
        terms.insert(Term { field, token }, postings);
    }
    Ok(SegmentData {
        id,
        doc_base,
        docs,
        terms,
        index_bytes: encoded.index_bytes(),
    })
}

pub(crate) fn encode_deletes(deleted: &DeletedDocs) -> Vec<u8> {
    let mut out = DEL_MAGIC.to_vec();
    write_u32(&mut out, deleted.len());
    out.extend(deleted.to_bytes());
    out
}

pub(crate) fn decode_deletes(bytes: &[u8]) -> io::Result<DeletedDocs> {
    let mut cur = Cursor::new(bytes, DEL_MAGIC)?;
    let len = cur.u32()?;
    DeletedDocs::from_bytes(len, &bytes[cur.pos..]).ok_or_else(|| corrupt("bad deletion bitmap"))
}

/// Writes `bytes` to `path` and fsyncs it.
pub(crate) fn write_durable(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

pub(crate) fn sync_dir(dir: &Path) -> io::Result<()> {
    // Directory fsync is not supported everywhere; failure here is not fatal.
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

pub(crate) fn write_segment(dir: &Path, id: SegmentId, encoded: &EncodedSegment) -> io::Result<()> {
    let parts: [(&str, &Vec<u8>); 4] = [
        ("dict", &encoded.dict),
        ("post", &encoded.post),
        ("store", &encoded.store),
        ("norms", &encoded.norms),
    ];
    for (ext, bytes) in parts {
        write_durable(&segment_file(dir, id, ext), bytes)?;
    }
    Ok(())
}

pub(crate) fn read_segment(dir: &Path, id: SegmentId, doc_base: u32) -> io::Result<SegmentData> {
    let encoded = EncodedSegment {
        dict: fs::read(segment_file(dir, id, "dict"))?,
        post: fs::read(segment_file(dir, id, "post"))?,
        store: fs::read(segment_file(dir, id, "store"))?,
        norms: fs::read(segment_file(dir, id, "norms"))?,
    };
    decode_segment(id, doc_base, &encoded)
}
