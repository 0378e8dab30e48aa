//! Archive bundles: a directory holding the staged inputs and the built
//! indexes, tied together by the checksum of the canonical manifest.
//!
//! ```text
//! manifest.tsv       canonical manifest with explicit keyframe lines
//! semantic.shgc      semantic codes (required)
//! low_level.shgc     low-level codes (optional)
//! annotations.tsv    concept/person annotations (optional)
//! text.tsv           recognized words (optional)
//! encoders.json      stand-in encoder parameters per space (optional)
//! semantic.shgt      tree snapshots, written by `build`
//! low_level.shgt
//! bundle.json        build metadata, written by `build`
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hamming::{read_snapshot, write_snapshot, CodeStore, IndexError, VpTree};
use crate::ingest::{
    self, encode_vectors, load_annotations, load_codes, load_manifest, load_text, load_vectors, write_annotations,
    write_codes, write_manifest, write_text, HyperplaneEncoder, IngestError,
};
use crate::lexical::{Postings, Vocabulary};
use crate::model::{AnnotationEntry, AnnotationKind, CodeSpace, ShotTable, TextOccurrence};
use crate::similarity::{QueryEncoders, SimilarityIndex, SpaceIndex};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const ANNOTATIONS_FILE: &str = "annotations.tsv";
pub const TEXT_FILE: &str = "text.tsv";
pub const ENCODERS_FILE: &str = "encoders.json";
pub const METADATA_FILE: &str = "bundle.json";

pub fn codes_file(space: CodeSpace) -> String {
    format!("{}.shgc", space.name())
}

pub fn tree_file(space: CodeSpace) -> String {
    format!("{}.shgt", space.name())
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Metadata { path: PathBuf, message: String },
    #[error("{file}: {source}")]
    Ingest {
        file: String,
        #[source]
        source: IngestError,
    },
    #[error("{file}: {source}")]
    Index {
        file: String,
        #[source]
        source: IndexError,
    },
    #[error("manifest checksum mismatch: bundle built from {expected}, found {found}")]
    ChecksumMismatch { expected: String, found: String },
    #[error("{0}")]
    Input(String),
}

impl BundleError {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
        move |source| BundleError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

fn ingest_err(file: &Path) -> impl FnOnce(IngestError) -> BundleError + '_ {
    move |source| BundleError::Ingest {
        file: file.display().to_string(),
        source,
    }
}

fn index_err(file: &str) -> impl FnOnce(IndexError) -> BundleError + '_ {
    move |source| BundleError::Index {
        file: file.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub seed: u64,
    pub dimension: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub semantic: Option<EncoderParams>,
    pub low_level: Option<EncoderParams>,
}

impl EncoderConfig {
    pub fn encoders(&self) -> QueryEncoders {
        let make = |p: &EncoderParams| HyperplaneEncoder::new(p.seed, p.dimension);
        QueryEncoders {
            semantic: self.semantic.as_ref().map(make),
            low_level: self.low_level.as_ref().map(make),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub format_version: u32,
    pub manifest_sha256: String,
    pub tree_seed: u64,
    pub shots: usize,
    pub keyframes: usize,
    pub spaces: Vec<CodeSpace>,
    pub concepts: usize,
    pub persons: usize,
    pub annotations: usize,
    pub text_occurrences: usize,
    pub vocabulary: usize,
    pub encoders: EncoderConfig,
    pub built_at_unix: u64,
}

/// Where to find each raw input for [`ingest_archive`].
#[derive(Debug, Clone, Default)]
pub struct IngestInputs {
    pub manifest: PathBuf,
    pub semantic_codes: Option<PathBuf>,
    pub semantic_vectors: Option<PathBuf>,
    pub low_level_codes: Option<PathBuf>,
    pub low_level_vectors: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub text: Option<PathBuf>,
    /// Seed of the semantic encoder; the low-level encoder uses `seed + 1`.
    pub encoder_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub shots: usize,
    pub keyframes: usize,
    pub spaces: Vec<CodeSpace>,
    pub annotations: usize,
    pub text_occurrences: usize,
}

pub fn manifest_checksum(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), BundleError> {
    std::fs::write(path, bytes).map_err(BundleError::io(path))
}

fn read(path: &Path) -> Result<Vec<u8>, BundleError> {
    std::fs::read(path).map_err(BundleError::io(path))
}

/// Validates every raw input and writes the canonical staged files to `out`.
pub fn ingest_archive(inputs: &IngestInputs, out: &Path) -> Result<IngestSummary, BundleError> {
    std::fs::create_dir_all(out).map_err(BundleError::io(out))?;
    let table = load_manifest(&inputs.manifest).map_err(ingest_err(&inputs.manifest))?;
    write(&out.join(MANIFEST_FILE), write_manifest(&table).as_bytes())?;

    let mut spaces = Vec::new();
    let mut encoders = EncoderConfig::default();
    let sources = [
        (
            CodeSpace::Semantic,
            &inputs.semantic_codes,
            &inputs.semantic_vectors,
            inputs.encoder_seed,
        ),
        (
            CodeSpace::LowLevel,
            &inputs.low_level_codes,
            &inputs.low_level_vectors,
            inputs.encoder_seed.wrapping_add(1),
        ),
    ];
    for (space, codes, vectors, seed) in sources {
        let records = match (codes, vectors) {
            (Some(_), Some(_)) => {
                return Err(BundleError::Input(format!(
                    "give either codes or vectors for the {space} space, not both"
                )))
            }
            (Some(path), None) => load_codes(path, space, &table).map_err(ingest_err(path))?,
            (None, Some(path)) => {
                let vecs = load_vectors(path, &table).map_err(ingest_err(path))?;
                let dimension = vecs.first().map_or(ingest::DEFAULT_DIMENSION, |v| v.vector.dimension());
                let encoder = HyperplaneEncoder::new(seed, dimension);
                let params = Some(EncoderParams { seed, dimension });
                match space {
                    CodeSpace::Semantic => encoders.semantic = params,
                    CodeSpace::LowLevel => encoders.low_level = params,
                }
                encode_vectors(&encoder, space, &vecs).map_err(ingest_err(path))?
            }
            (None, None) if space == CodeSpace::Semantic => {
                return Err(BundleError::Input("semantic codes or vectors are required".into()))
            }
            (None, None) => continue,
        };
        // Completeness is checked here so `build` cannot fail on coverage later.
        let store = CodeStore::from_records(space, &table, &records).map_err(index_err(space.name()))?;
        write(
            &out.join(codes_file(space)),
            &write_codes(space, &store.to_records(&table)),
        )?;
        spaces.push(space);
    }
    if encoders != EncoderConfig::default() {
        let json = serde_json::to_vec_pretty(&encoders).expect("serializable");
        write(&out.join(ENCODERS_FILE), &json)?;
    }

    let mut annotation_count = 0;
    if let Some(path) = &inputs.annotations {
        let entries = load_annotations(path, &table).map_err(ingest_err(path))?;
        annotation_count = entries.len();
        write(&out.join(ANNOTATIONS_FILE), write_annotations(&entries).as_bytes())?;
    }
    let mut text_count = 0;
    if let Some(path) = &inputs.text {
        let occurrences = load_text(path, &table).map_err(ingest_err(path))?;
        text_count = occurrences.len();
        write(&out.join(TEXT_FILE), write_text(&occurrences).as_bytes())?;
    }
    Ok(IngestSummary {
        shots: table.len(),
        keyframes: table.keyframe_count(),
        spaces,
        annotations: annotation_count,
        text_occurrences: text_count,
    })
}

/// Everything a query needs, immutable once loaded.
#[derive(Debug, Clone)]
pub struct ArchiveBundle {
    pub metadata: BundleMetadata,
    pub shots: Arc<ShotTable>,
    pub similarity: SimilarityIndex,
    pub postings: Postings,
    pub vocabulary: Vocabulary,
    pub encoders: QueryEncoders,
}

struct Staged {
    manifest_bytes: Vec<u8>,
    table: ShotTable,
    stores: Vec<CodeStore>,
    annotations: Vec<AnnotationEntry>,
    text: Vec<TextOccurrence>,
    encoders: EncoderConfig,
}

fn load_staged(dir: &Path) -> Result<Staged, BundleError> {
    let manifest_bytes = read(&dir.join(MANIFEST_FILE))?;
    load_staged_with(dir, manifest_bytes)
}

fn load_staged_with(dir: &Path, manifest_bytes: Vec<u8>) -> Result<Staged, BundleError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = ingest::utf8(manifest_bytes.clone()).map_err(ingest_err(&manifest_path))?;
    let table = ingest::parse_manifest(&text).map_err(ingest_err(&manifest_path))?;
    let mut stores = Vec::new();
    for space in [CodeSpace::Semantic, CodeSpace::LowLevel] {
        let path = dir.join(codes_file(space));
        if !path.exists() {
            if space == CodeSpace::Semantic {
                return Err(BundleError::Input(format!("{} is missing", path.display())));
            }
            continue;
        }
        let records = load_codes(&path, space, &table).map_err(ingest_err(&path))?;
        stores.push(CodeStore::from_records(space, &table, &records).map_err(index_err(&codes_file(space)))?);
    }
    let path = dir.join(ANNOTATIONS_FILE);
    let annotations = if path.exists() {
        load_annotations(&path, &table).map_err(ingest_err(&path))?
    } else {
        Vec::new()
    };
    let path = dir.join(TEXT_FILE);
    let text = if path.exists() {
        load_text(&path, &table).map_err(ingest_err(&path))?
    } else {
        Vec::new()
    };
    let path = dir.join(ENCODERS_FILE);
    let encoders = if path.exists() {
        serde_json::from_slice(&read(&path)?).map_err(|e| BundleError::Metadata {
            path: path.clone(),
            message: e.to_string(),
        })?
    } else {
        EncoderConfig::default()
    };
    Ok(Staged {
        manifest_bytes,
        table,
        stores,
        annotations,
        text,
        encoders,
    })
}

#[allow(clippy::too_many_arguments)]
fn metadata_for(
    checksum: &[u8; 32],
    tree_seed: u64,
    table: &ShotTable,
    spaces: Vec<CodeSpace>,
    annotations: &[AnnotationEntry],
    postings: &Postings,
    text: &[TextOccurrence],
    vocabulary: &Vocabulary,
    encoders: EncoderConfig,
) -> BundleMetadata {
    BundleMetadata {
        format_version: BUNDLE_FORMAT_VERSION,
        manifest_sha256: hex(checksum),
        tree_seed,
        shots: table.len(),
        keyframes: table.keyframe_count(),
        spaces,
        concepts: postings.labels(AnnotationKind::Concept).len(),
        persons: postings.labels(AnnotationKind::Person).len(),
        annotations: annotations.len(),
        text_occurrences: text.len(),
        vocabulary: vocabulary.len(),
        encoders,
        built_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    }
}

/// Builds the trees over a staged directory and writes snapshots plus metadata.
pub fn build_bundle(dir: &Path, tree_seed: u64) -> Result<BundleMetadata, BundleError> {
    let staged = load_staged(dir)?;
    let checksum = manifest_checksum(&staged.manifest_bytes);
    let mut spaces = Vec::new();
    for store in &staged.stores {
        let name = tree_file(store.space());
        let tree = VpTree::build(store, tree_seed).map_err(index_err(&name))?;
        write(&dir.join(&name), &write_snapshot(&tree, store.space(), &checksum))?;
        spaces.push(store.space());
    }
    let postings = Postings::build(&staged.annotations);
    let vocabulary = Vocabulary::build(&staged.text);
    let metadata = metadata_for(
        &checksum,
        tree_seed,
        &staged.table,
        spaces,
        &staged.annotations,
        &postings,
        &staged.text,
        &vocabulary,
        staged.encoders,
    );
    let path = dir.join(METADATA_FILE);
    write(&path, &serde_json::to_vec_pretty(&metadata).expect("serializable"))?;
    Ok(metadata)
}

impl ArchiveBundle {
    /// Loads a built bundle, verifying that every index matches the manifest.
    pub fn load(dir: &Path) -> Result<Self, BundleError> {
        let meta_path = dir.join(METADATA_FILE);
        let metadata: BundleMetadata =
            serde_json::from_slice(&read(&meta_path)?).map_err(|e| BundleError::Metadata {
                path: meta_path.clone(),
                message: e.to_string(),
            })?;
        if metadata.format_version != BUNDLE_FORMAT_VERSION {
            return Err(BundleError::Metadata {
                path: meta_path,
                message: format!("unsupported bundle format {}", metadata.format_version),
            });
        }
        // Compare checksums before parsing, so an edited manifest is reported
        // as such rather than as whatever it breaks downstream.
        let manifest_bytes = read(&dir.join(MANIFEST_FILE))?;
        let checksum = manifest_checksum(&manifest_bytes);
        if hex(&checksum) != metadata.manifest_sha256 {
            return Err(BundleError::ChecksumMismatch {
                expected: metadata.manifest_sha256,
                found: hex(&checksum),
            });
        }
        let staged = load_staged_with(dir, manifest_bytes)?;
        let mut semantic = None;
        let mut low_level = None;
        for store in staged.stores {
            let name = tree_file(store.space());
            let bytes = read(&dir.join(&name))?;
            let tree = read_snapshot(&bytes, &store, &checksum).map_err(index_err(&name))?;
            let index = SpaceIndex { store, tree };
            match index.store.space() {
                CodeSpace::Semantic => semantic = Some(index),
                CodeSpace::LowLevel => low_level = Some(index),
            }
        }
        let shots = Arc::new(staged.table);
        let semantic = semantic.ok_or_else(|| BundleError::Input("semantic index missing".into()))?;
        Ok(Self {
            encoders: metadata.encoders.encoders(),
            similarity: SimilarityIndex {
                shots: shots.clone(),
                semantic,
                low_level,
            },
            postings: Postings::build(&staged.annotations),
            vocabulary: Vocabulary::build(&staged.text),
            shots,
            metadata,
        })
    }

    /// Builds a bundle in memory without touching disk.
    pub fn from_parts(
        table: ShotTable,
        semantic: CodeStore,
        low_level: Option<CodeStore>,
        annotations: &[AnnotationEntry],
        text: &[TextOccurrence],
        encoders: EncoderConfig,
        tree_seed: u64,
    ) -> Result<Self, BundleError> {
        let checksum = manifest_checksum(write_manifest(&table).as_bytes());
        let semantic = SpaceIndex::build(semantic, tree_seed).map_err(index_err("semantic"))?;
        let low_level = low_level
            .map(|s| SpaceIndex::build(s, tree_seed))
            .transpose()
            .map_err(index_err("low_level"))?;
        let mut spaces = vec![CodeSpace::Semantic];
        if low_level.is_some() {
            spaces.push(CodeSpace::LowLevel);
        }
        let postings = Postings::build(annotations);
        let vocabulary = Vocabulary::build(text);
        let metadata = metadata_for(
            &checksum,
            tree_seed,
            &table,
            spaces,
            annotations,
            &postings,
            text,
            &vocabulary,
            encoders.clone(),
        );
        let shots = Arc::new(table);
        Ok(Self {
            encoders: encoders.encoders(),
            similarity: SimilarityIndex {
                shots: shots.clone(),
                semantic,
                low_level,
            },
            postings,
            vocabulary,
            shots,
            metadata,
        })
    }
}
