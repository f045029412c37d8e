//! Segmented fielded inverted index.
//!
//! An index lives in one directory: immutable per-segment files plus a JSON
//! manifest naming the committed segments. A single [`IndexWriter`] (guarded by
//! a lock file) buffers documents and turns them into a new segment on
//! [`IndexWriter::commit`]; any number of [`IndexReader`]s search immutable
//! snapshots and never block the writer.

mod codec;
mod reader;
mod segment;
pub mod tokenizer;
mod writer;

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc_model::{DocumentError, Field, FieldSpec, Schema};

pub use reader::{index_size_ratio, IndexReader, IndexStats};
pub use segment::{
    analyze_field, DeletedDocs, DocNumber, FieldTokens, Posting, PostingsList, SegmentId, Term,
    POSITION_GAP,
};
pub use tokenizer::{Token, Tokenizer};
pub use writer::{CommitFault, IndexWriter, DEFAULT_MERGE_THRESHOLD};

use segment::SegmentData;

const MANIFEST: &str = "manifest.json";
const MANIFEST_TMP: &str = "manifest.json.tmp";
const LOCK_FILE: &str = "write.lock";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("no index found at {0}")]
    NotFound(PathBuf),
    #[error("an index already exists at {0}")]
    AlreadyExists(PathBuf),
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("index is locked by another writer")]
    WriterLocked,
    #[error("writer is closed")]
    WriterClosed,
    #[error("duplicate document: {0}")]
    DuplicateDocument(String),
    #[error(transparent)]
    InvalidDocument(#[from] DocumentError),
    #[error("commit failed: {0}")]
    CommitFailed(String),
    #[error("merge failed: {0}")]
    MergeFailed(String),
    #[error("merge needs at least 2 segments, index has {0}")]
    NotEnoughSegments(usize),
    #[error("no such document: {0}")]
    NoSuchDocument(DocNumber),
    #[error("index contains no indexed text")]
    EmptyIndex,
}

impl IndexError {
    fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> IndexError {
        let context = context.into();
        move |source| IndexError::Io { context, source }
    }
}

pub type Result<T, E = IndexError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct FieldFlags {
    name: String,
    stored: bool,
    indexed: bool,
    tokenized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SegmentMeta {
    id: SegmentId,
    doc_base: DocNumber,
    doc_count: u32,
    /// Generation of the deletion bitmap file, absent when nothing is deleted.
    deletes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Manifest {
    format: u32,
    generation: u64,
    next_segment_id: SegmentId,
    next_doc: DocNumber,
    schema: Vec<FieldFlags>,
    stopwords: Vec<String>,
    segments: Vec<SegmentMeta>,
}

impl Manifest {
    fn schema(&self) -> Result<Schema> {
        if self.schema.len() != Field::COUNT {
            return Err(IndexError::Corrupt(format!(
                "schema has {} fields, expected {}",
                self.schema.len(),
                Field::COUNT
            )));
        }
        let mut specs = Field::ALL.map(|f| FieldSpec {
            name: f.name(),
            stored: false,
            indexed: false,
            tokenized: false,
        });
        for (i, flags) in self.schema.iter().enumerate() {
            let field = Field::from_ordinal(i).unwrap();
            if flags.name != field.name() {
                return Err(IndexError::Corrupt(format!(
                    "schema field {i} is `{}`, expected `{}`",
                    flags.name,
                    field.name()
                )));
            }
            specs[i] = FieldSpec {
                name: field.name(),
                stored: flags.stored,
                indexed: flags.indexed,
                tokenized: flags.tokenized,
            };
        }
        Schema::new(specs).map_err(|e| IndexError::Corrupt(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SegmentEntry {
    pub data: Arc<SegmentData>,
    pub deleted: Arc<DeletedDocs>,
    pub deletes_generation: Option<u64>,
}

impl SegmentEntry {
    fn meta(&self) -> SegmentMeta {
        SegmentMeta {
            id: self.data.id,
            doc_base: self.data.doc_base,
            doc_count: self.data.doc_count(),
            deletes: self.deletes_generation,
        }
    }

    pub fn live_count(&self) -> u32 {
        self.data.doc_count() - self.deleted.count()
    }
}

/// Committed state of the index at one generation.
#[derive(Debug, Clone)]
pub(crate) struct Snapshot {
    pub generation: u64,
    pub next_segment_id: SegmentId,
    pub next_doc: DocNumber,
    pub schema: Arc<Schema>,
    pub tokenizer: Arc<Tokenizer>,
    /// Ordered by `doc_base`.
    pub segments: Vec<SegmentEntry>,
}

impl Snapshot {
    fn manifest(&self) -> Manifest {
        Manifest {
            format: FORMAT_VERSION,
            generation: self.generation,
            next_segment_id: self.next_segment_id,
            next_doc: self.next_doc,
            schema: self
                .schema
                .specs()
                .iter()
                .map(|s| FieldFlags {
                    name: s.name.to_string(),
                    stored: s.stored,
                    indexed: s.indexed,
                    tokenized: s.tokenized,
                })
                .collect(),
            stopwords: self.tokenizer.stopwords().map(str::to_string).collect(),
            segments: self.segments.iter().map(SegmentEntry::meta).collect(),
        }
    }
}

#[derive(Debug)]
struct IndexInner {
    dir: PathBuf,
    current: RwLock<Arc<Snapshot>>,
}

/// Handle to an index directory. Cheap to clone; clones share the published
/// snapshot, so a commit through one writer is visible to readers opened from
/// any clone afterwards.
#[derive(Debug, Clone)]
pub struct Index {
    inner: Arc<IndexInner>,
}

impl Index {
    /// Creates a new, empty index in `dir` (created if missing).
    pub fn create(dir: impl AsRef<Path>, schema: Schema, tokenizer: Tokenizer) -> Result<Index> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(IndexError::io(format!("creating {}", dir.display())))?;
        if dir.join(MANIFEST).exists() {
            return Err(IndexError::AlreadyExists(dir));
        }
        let snapshot = Snapshot {
            generation: 0,
            next_segment_id: 1,
            next_doc: 0,
            schema: Arc::new(schema),
            tokenizer: Arc::new(tokenizer),
            segments: Vec::new(),
        };
        write_manifest(&dir, &snapshot.manifest(), None)?;
        Ok(Index {
            inner: Arc::new(IndexInner {
                dir,
                current: RwLock::new(Arc::new(snapshot)),
            }),
        })
    }

    pub fn create_default(dir: impl AsRef<Path>) -> Result<Index> {
        Index::create(dir, Schema::default(), Tokenizer::default())
    }

    /// Opens an existing index.
    pub fn open(dir: impl AsRef<Path>) -> Result<Index> {
        let dir = dir.as_ref().to_path_buf();
        let snapshot = load_snapshot(&dir, None)?;
        Ok(Index {
            inner: Arc::new(IndexInner {
                dir,
                current: RwLock::new(Arc::new(snapshot)),
            }),
        })
    }

    pub fn open_or_create(dir: impl AsRef<Path>) -> Result<Index> {
        if dir.as_ref().join(MANIFEST).exists() {
            Index::open(dir)
        } else {
            Index::create_default(dir)
        }
    }

    pub fn exists(dir: impl AsRef<Path>) -> bool {
        dir.as_ref().join(MANIFEST).exists()
    }

    pub fn dir(&self) -> &Path {
        &self.inner.dir
    }

    /// A reader over the most recently published snapshot.
    pub fn reader(&self) -> IndexReader {
        IndexReader::new(self.current())
    }

    /// Opens the single writer for this index.
    pub fn writer(&self) -> Result<IndexWriter> {
        IndexWriter::open(self.clone())
    }

    /// Re-reads the manifest, picking up commits made by other processes.
    pub fn reload(&self) -> Result<()> {
        let current = self.current();
        let fresh = load_snapshot(&self.inner.dir, Some(&current))?;
        if fresh.generation != current.generation {
            self.publish(Arc::new(fresh));
        }
        Ok(())
    }

    pub(crate) fn current(&self) -> Arc<Snapshot> {
        self.inner.current.read().unwrap().clone()
    }

    pub(crate) fn publish(&self, snapshot: Arc<Snapshot>) {
        *self.inner.current.write().unwrap() = snapshot;
    }
}

fn write_manifest(dir: &Path, manifest: &Manifest, fault: Option<CommitFault>) -> Result<()> {
    let tmp = dir.join(MANIFEST_TMP);
    let json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    codec::write_durable(&tmp, &json).map_err(IndexError::io("writing manifest"))?;
    if fault == Some(CommitFault::BeforeManifestRename) {
        return Err(IndexError::CommitFailed(
            "injected fault before manifest rename".into(),
        ));
    }
    fs::rename(&tmp, dir.join(MANIFEST)).map_err(IndexError::io("replacing manifest"))?;
    codec::sync_dir(dir).map_err(IndexError::io("syncing index directory"))?;
    Ok(())
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(IndexError::NotFound(dir.to_path_buf()))
        }
        Err(e) => return Err(IndexError::io(format!("reading {}", path.display()))(e)),
    };
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| IndexError::Corrupt(e.to_string()))?;
    if manifest.format != FORMAT_VERSION {
        return Err(IndexError::Corrupt(format!(
            "unsupported format version {}",
            manifest.format
        )));
    }
    Ok(manifest)
}

/// Loads the committed snapshot, reusing already-loaded segment data from
/// `previous` where segment ids match.
fn load_snapshot(dir: &Path, previous: Option<&Snapshot>) -> Result<Snapshot> {
    let manifest = read_manifest(dir)?;
    let schema = manifest.schema()?;
    let tokenizer = Tokenizer::new(&manifest.stopwords);
    let cached: HashMap<SegmentId, &SegmentEntry> = previous
        .map(|p| p.segments.iter().map(|s| (s.data.id, s)).collect())
        .unwrap_or_default();

    let mut segments = Vec::with_capacity(manifest.segments.len());
    for meta in &manifest.segments {
        let data = match cached.get(&meta.id) {
            Some(entry) => entry.data.clone(),
            None => Arc::new(
                codec::read_segment(dir, meta.id, meta.doc_base)
                    .map_err(IndexError::io(format!("reading segment {}", meta.id)))?,
            ),
        };
        if data.doc_count() != meta.doc_count || data.doc_base != meta.doc_base {
            return Err(IndexError::Corrupt(format!(
                "segment {} does not match manifest",
                meta.id
            )));
        }
        let deleted = match (meta.deletes, cached.get(&meta.id)) {
            (None, _) => Arc::new(DeletedDocs::new(meta.doc_count)),
            (Some(generation), Some(entry)) if entry.deletes_generation == Some(generation) => {
                entry.deleted.clone()
            }
            (Some(generation), _) => {
                let path = codec::deletes_file(dir, meta.id, generation);
                let bytes = fs::read(&path)
                    .map_err(IndexError::io(format!("reading {}", path.display())))?;
                let deleted = codec::decode_deletes(&bytes)
                    .map_err(|e| IndexError::Corrupt(e.to_string()))?;
                if deleted.len() != meta.doc_count {
                    return Err(IndexError::Corrupt(format!(
                        "deletion bitmap of segment {} has wrong size",
                        meta.id
                    )));
                }
                Arc::new(deleted)
            }
        };
        segments.push(SegmentEntry {
            data,
            deleted,
            deletes_generation: meta.deletes,
        });
    }
    segments.sort_by_key(|s| s.data.doc_base);
    Ok(Snapshot {
        generation: manifest.generation,
        next_segment_id: manifest.next_segment_id,
        next_doc: manifest.next_doc,
        schema: Arc::new(schema),
        tokenizer: Arc::new(tokenizer),
        segments,
    })
}

/// Removes segment and deletion files the manifest no longer references.
fn remove_unreferenced_files(dir: &Path, snapshot: &Snapshot) -> io::Result<()> {
    let mut keep: Vec<PathBuf> = Vec::new();
    for s in &snapshot.segments {
        for ext in codec::SEGMENT_EXTENSIONS {
            keep.push(codec::segment_file(dir, s.data.id, ext));
        }
        if let Some(generation) = s.deletes_generation {
            keep.push(codec::deletes_file(dir, s.data.id, generation));
        }
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let ours = name.starts_with("seg_") || name == MANIFEST_TMP;
        if ours && !keep.contains(&path) {
            fs::remove_file(&path)?;
        }
    }
    Ok(())
}
