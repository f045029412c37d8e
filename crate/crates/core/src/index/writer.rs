use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions, TryLockError};
use std::sync::Arc;

use crate::doc_model::BlogPostDocument;

use super::codec;
use super::segment::{self, DeletedDocs, DocNumber, SegmentBuilder, SegmentId};
use super::{
    remove_unreferenced_files, write_manifest, Index, IndexError, Result, SegmentEntry, Snapshot,
    LOCK_FILE,
};

/// Segment count above which a commit triggers a full merge.
pub const DEFAULT_MERGE_THRESHOLD: usize = 8;

/// Test hook: makes the next commit or merge fail at a chosen point, leaving
/// whatever files were already written on disk as a crash would.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitFault {
    /// After the new segment files are durable, before the manifest is written.
    AfterSegmentFiles,
    /// After the new manifest is written to its temp file, before the rename.
    BeforeManifestRename,
}

#[derive(Debug)]
struct BufferedDoc {
    doc: BlogPostDocument,
    deleted: bool,
}

/// The single writer of an index.
///
/// Documents added here get their final doc number immediately but only
/// become visible to readers opened after the next [`commit`](Self::commit).
#[derive(Debug)]
pub struct IndexWriter {
    index: Index,
    lock: Option<File>,
    base: Arc<Snapshot>,
    buffer: Vec<BufferedDoc>,
    pending_deletes: BTreeMap<SegmentId, BTreeSet<u32>>,
    /// post_url → doc number for every live doc, committed or buffered.
    live: HashMap<String, DocNumber>,
    merge_threshold: usize,
    fault: Option<CommitFault>,
}

impl IndexWriter {
    pub(super) fn open(index: Index) -> Result<IndexWriter> {
        let lock_path = index.dir().join(LOCK_FILE);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(IndexError::io("opening write lock"))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => return Err(IndexError::WriterLocked),
            Err(TryLockError::Error(e)) => return Err(IndexError::io("locking index")(e)),
        }

        index.reload()?;
        let base = index.current();
        remove_unreferenced_files(index.dir(), &base)
            .map_err(IndexError::io("removing stale segment files"))?;

        let mut live = HashMap::new();
        for entry in &base.segments {
            for (local, record) in entry.data.docs.iter().enumerate() {
                if !entry.deleted.contains(local as u32) {
                    live.insert(record.key.clone(), entry.data.doc_base + local as u32);
                }
            }
        }
        Ok(IndexWriter {
            index,
            lock: Some(lock),
            base,
            buffer: Vec::new(),
            pending_deletes: BTreeMap::new(),
            live,
            merge_threshold: DEFAULT_MERGE_THRESHOLD,
            fault: None,
        })
    }

    fn check_open(&self) -> Result<()> {
        if self.lock.is_none() {
            Err(IndexError::WriterClosed)
        } else {
            Ok(())
        }
    }

    pub fn set_merge_threshold(&mut self, threshold: usize) {
        self.merge_threshold = threshold.max(1);
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Option<CommitFault>) {
        self.fault = fault;
    }

    fn buffer_base(&self) -> DocNumber {
        self.base.next_doc
    }

    /// Buffers a document and returns its doc number.
    pub fn add_document(&mut self, doc: BlogPostDocument) -> Result<DocNumber> {
        self.check_open()?;
        doc.validate()?;
        if self.live.contains_key(&doc.post_url) {
            return Err(IndexError::DuplicateDocument(doc.post_url));
        }
        let number = self.buffer_base() + self.buffer.len() as u32;
        self.live.insert(doc.post_url.clone(), number);
        self.buffer.push(BufferedDoc {
            doc,
            deleted: false,
        });
        Ok(number)
    }

    /// Marks the live document with this post_url deleted. Returns whether one
    /// existed.
    pub fn delete_document(&mut self, post_url: &str) -> Result<bool> {
        self.check_open()?;
        let Some(number) = self.live.remove(post_url) else {
            return Ok(false);
        };
        let buffer_base = self.buffer_base();
        if number >= buffer_base {
            self.buffer[(number - buffer_base) as usize].deleted = true;
        } else {
            let entry = self
                .base
                .segments
                .iter()
                .rev()
                .find(|s| s.data.doc_base <= number)
                .expect("live doc belongs to a committed segment");
            self.pending_deletes
                .entry(entry.data.id)
                .or_default()
                .insert(number - entry.data.doc_base);
        }
        Ok(true)
    }

    /// Number of buffered, not yet committed, documents.
    pub fn pending_docs(&self) -> usize {
        self.buffer.iter().filter(|b| !b.deleted).count()
    }

    /// Writes buffered documents as one new segment and applies pending
    /// deletions. Returns the new segment's id, or `None` when nothing was
    /// buffered.
    pub fn commit(&mut self) -> Result<Option<SegmentId>> {
        self.check_open()?;
        if self.buffer.is_empty() && self.pending_deletes.is_empty() {
            return Ok(None);
        }
        let dir = self.index.dir().to_path_buf();
        let base = self.base.clone();
        let generation = base.generation + 1;
        let mut next = Snapshot {
            generation,
            next_segment_id: base.next_segment_id,
            next_doc: base.next_doc,
            schema: base.schema.clone(),
            tokenizer: base.tokenizer.clone(),
            segments: Vec::with_capacity(base.segments.len() + 1),
        };

        for entry in &base.segments {
            match self.pending_deletes.get(&entry.data.id) {
                Some(locals) => {
                    let mut deleted = (*entry.deleted).clone();
                    for &local in locals {
                        deleted.insert(local);
                    }
                    let path = codec::deletes_file(&dir, entry.data.id, generation);
                    codec::write_durable(&path, &codec::encode_deletes(&deleted))
                        .map_err(|e| IndexError::CommitFailed(e.to_string()))?;
                    next.segments.push(SegmentEntry {
                        data: entry.data.clone(),
                        deleted: Arc::new(deleted),
                        deletes_generation: Some(generation),
                    });
                }
                None => next.segments.push(entry.clone()),
            }
        }

        let mut new_segment = None;
        if self.buffer.iter().any(|b| !b.deleted) {
            let id = next.next_segment_id;
            let mut builder = SegmentBuilder::new(&base.schema, &base.tokenizer);
            let mut deleted = DeletedDocs::new(self.buffer.len() as u32);
            for (i, buffered) in self.buffer.iter().enumerate() {
                builder.add(&buffered.doc);
                if buffered.deleted {
                    deleted.insert(i as u32);
                }
            }
            let mut data = builder.build(id, base.next_doc);
            let encoded = codec::encode_segment(&data);
            data.index_bytes = encoded.index_bytes();
            codec::write_segment(&dir, id, &encoded)
                .map_err(|e| IndexError::CommitFailed(e.to_string()))?;
            let deletes_generation = if deleted.count() > 0 {
                codec::write_durable(
                    &codec::deletes_file(&dir, id, generation),
                    &codec::encode_deletes(&deleted),
                )
                .map_err(|e| IndexError::CommitFailed(e.to_string()))?;
                Some(generation)
            } else {
                None
            };
            next.next_segment_id = id + 1;
            next.next_doc = base.next_doc + data.doc_count();
            next.segments.push(SegmentEntry {
                data: Arc::new(data),
                deleted: Arc::new(deleted),
                deletes_generation,
            });
            new_segment = Some(id);
        }

        if self.fault == Some(CommitFault::AfterSegmentFiles) {
            return Err(IndexError::CommitFailed(
                "injected fault after segment files".into(),
            ));
        }
        write_manifest(&dir, &next.manifest(), self.fault)?;

        let next = Arc::new(next);
        self.index.publish(next.clone());
        self.base = next;
        self.buffer.clear();
        self.pending_deletes.clear();
        // Best effort: stale files are also swept when the next writer opens.
        let _ = remove_unreferenced_files(&dir, &self.base);

        if self.base.segments.len() > self.merge_threshold {
            self.merge_segments()?;
        }
        Ok(new_segment)
    }

    /// Merges every committed segment into one, dropping deleted documents and
    /// renumbering the rest contiguously from 0. Buffered documents are
    /// committed first.
    pub fn merge_segments(&mut self) -> Result<SegmentId> {
        self.check_open()?;
        self.commit()?;
        let base = self.base.clone();
        if base.segments.len() < 2 {
            return Err(IndexError::NotEnoughSegments(base.segments.len()));
        }
        let dir = self.index.dir().to_path_buf();
        let id = base.next_segment_id;
        let parts: Vec<_> = base
            .segments
            .iter()
            .map(|s| (s.data.as_ref(), s.deleted.as_ref()))
            .collect();
        let mut merged = segment::merge(&parts, id, 0);
        let encoded = codec::encode_segment(&merged);
        merged.index_bytes = encoded.index_bytes();
        codec::write_segment(&dir, id, &encoded)
            .map_err(|e| IndexError::MergeFailed(e.to_string()))?;
        if self.fault == Some(CommitFault::AfterSegmentFiles) {
            return Err(IndexError::MergeFailed(
                "injected fault after segment files".into(),
            ));
        }

        let doc_count = merged.doc_count();
        let next = Snapshot {
            generation: base.generation + 1,
            next_segment_id: id + 1,
            next_doc: doc_count,
            schema: base.schema.clone(),
            tokenizer: base.tokenizer.clone(),
            segments: vec![SegmentEntry {
                data: Arc::new(merged),
                deleted: Arc::new(DeletedDocs::new(doc_count)),
                deletes_generation: None,
            }],
        };
        write_manifest(&dir, &next.manifest(), self.fault).map_err(|e| match e {
            IndexError::CommitFailed(msg) => IndexError::MergeFailed(msg),
            other => other,
        })?;

        self.live = next.segments[0]
            .data
            .docs
            .iter()
            .enumerate()
            .map(|(i, r)| (r.key.clone(), i as u32))
            .collect();
        let next = Arc::new(next);
        self.index.publish(next.clone());
        self.base = next;
        let _ = remove_unreferenced_files(&dir, &self.base);
        Ok(id)
    }

    /// Releases the write lock. Uncommitted changes are discarded.
    pub fn close(&mut self) {
        self.buffer.clear();
        self.pending_deletes.clear();
        if let Some(lock) = self.lock.take() {
            let _ = lock.unlock();
        }
    }
}

impl Drop for IndexWriter {
    fn drop(&mut self) {
        self.close();
    }
}
