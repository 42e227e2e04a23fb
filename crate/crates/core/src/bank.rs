//! The reasoning-path bank.
//!
//! Maps `(category, canonical intent)` to the reasoning paths observed for
//! it, routes questions to canonical intents, retrieves top-scoring paths,
//! stages correct novel paths in a buffer and folds them back in by
//! re-clustering the affected categories once the buffer is full.
//!
//! Paths are never removed, so the distinct path count only grows.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cluster::{canonicalize, ClusterError, DbscanParams, IntentCluster};
use crate::embed::{cosine, embed_path, EmbedError, Embedder};
use crate::types::{PathError, ReasoningPath, Vector};

pub const SCHEMA_VERSION: u32 = 1;
pub const DISTANCE: &str = "cosine";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BankError {
    #[error("seed set is empty")]
    EmptySeed,
    #[error("invalid seed path: {0}")]
    InvalidPath(#[from] PathError),
    #[error("tau_buf must be at least 1")]
    InvalidTau,
    #[error("k_ret must be at least 1")]
    InvalidK,
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("bank holds no paths")]
    EmptyBank,
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("unsupported bank schema_version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersionMismatch { found: u32 },
    #[error("bank was built with embedding {found:?} but the provider is {expected:?}")]
    EmbeddingFingerprintMismatch { expected: String, found: String },
    #[error("malformed bank document: {0}")]
    InvalidDocument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankMetadata {
    pub embedding_fingerprint: String,
    pub distance: String,
    pub dbscan: DbscanParams,
    pub created_unix: u64,
    pub revision: u64,
}

/// A seed question's labels, intent embedding and elicited path.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRecord {
    pub category: String,
    pub intent: String,
    pub intent_vector: Vector,
    pub path: ReasoningPath,
}

/// A correct novel path waiting for the next re-clustering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferedRecord {
    pub category: String,
    pub raw_intent: String,
    pub path: ReasoningPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackLevel {
    Entry,
    Category,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingResult {
    pub category: String,
    pub canonical_intent: Option<String>,
    pub similarity: Option<f64>,
    pub candidates: Vec<(ReasoningPath, f64)>,
    pub fallback_level: FallbackLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyOutcome {
    Buffered,
    Duplicate,
    RejectedIncorrect,
    RejectedInvalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReclusterOutcome {
    NotTriggered,
    Merged { merged: usize, categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bank {
    canonical_intents: BTreeMap<String, Vec<IntentCluster>>,
    entries: BTreeMap<(String, String), Vec<ReasoningPath>>,
    buffer: Vec<BufferedRecord>,
    tau_buf: usize,
    metadata: BankMetadata,
    path_vectors: BTreeMap<ReasoningPath, Vector>,
}

fn push_unique(paths: &mut Vec<ReasoningPath>, path: &ReasoningPath) {
    if !paths.contains(path) {
        paths.push(path.clone());
    }
}

impl Bank {
    /// Clusters each category's seed intents and files every seed path under
    /// the canonical intent that absorbed its raw intent.
    pub fn init<E: Embedder + ?Sized>(
        seed: &[SeedRecord],
        params: &DbscanParams,
        tau_buf: usize,
        embedder: &E,
        created_unix: u64,
    ) -> Result<Self, BankError> {
        if seed.is_empty() {
            return Err(BankError::EmptySeed);
        }
        if tau_buf == 0 {
            return Err(BankError::InvalidTau);
        }
        params.check()?;
        for r in seed {
            r.path.check()?;
        }

        let mut by_category: BTreeMap<&str, Vec<(String, Vector)>> = BTreeMap::new();
        for r in seed {
            let intents = by_category.entry(r.category.as_str()).or_default();
            if !intents.iter().any(|(s, _)| *s == r.intent) {
                intents.push((r.intent.clone(), r.intent_vector.clone()));
            }
        }

        let mut canonical_intents = BTreeMap::new();
        for (category, intents) in by_category {
            canonical_intents.insert(category.to_string(), canonicalize(category, &intents, params)?);
        }

        let mut bank = Bank {
            canonical_intents,
            entries: BTreeMap::new(),
            buffer: Vec::new(),
            tau_buf,
            metadata: BankMetadata {
                embedding_fingerprint: embedder.fingerprint(),
                distance: DISTANCE.to_string(),
                dbscan: *params,
                created_unix,
                revision: 0,
            },
            path_vectors: BTreeMap::new(),
        };
        for r in seed {
            let label = bank.label_for(&r.category, &r.intent).expect("every seed intent was clustered").to_string();
            let paths = bank.entries.entry((r.category.clone(), label)).or_default();
            push_unique(paths, &r.path);
        }
        bank.embed_missing_paths(embedder)?;
        Ok(bank)
    }

    fn label_for(&self, category: &str, raw_intent: &str) -> Option<&str> {
        self.canonical_intents
            .get(category)?
            .iter()
            .find(|c| c.contains(raw_intent))
            .map(|c| c.canonical_label.as_str())
    }

    fn embed_missing_paths<E: Embedder + ?Sized>(&mut self, embedder: &E) -> Result<(), BankError> {
        let missing: Vec<ReasoningPath> = self
            .entries
            .values()
            .flatten()
            .filter(|p| !self.path_vectors.contains_key(*p))
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut vectors = Vec::with_capacity(missing.len());
        for p in &missing {
            vectors.push(embed_path(embedder, p)?);
        }
        self.path_vectors.extend(missing.into_iter().zip(vectors));
        Ok(())
    }

    /// Number of distinct paths across all entries.
    pub fn k_bank(&self) -> usize {
        self.path_vectors.len()
    }

    /// Recounts distinct paths from the entries, bypassing the cache.
    pub fn recount_k_bank(&self) -> usize {
        self.entries.values().flatten().collect::<BTreeSet<_>>().len()
    }

    pub fn revision(&self) -> u64 {
        self.metadata.revision
    }

    pub fn tau_buf(&self) -> usize {
        self.tau_buf
    }

    pub fn metadata(&self) -> &BankMetadata {
        &self.metadata
    }

    pub fn buffer(&self) -> &[BufferedRecord] {
        &self.buffer
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.canonical_intents.keys().map(String::as_str)
    }

    pub fn canonical_intents(&self, category: &str) -> &[IntentCluster] {
        self.canonical_intents.get(category).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn entry(&self, category: &str, canonical_intent: &str) -> &[ReasoningPath] {
        self.entries.get(&(category.to_string(), canonical_intent.to_string())).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn entries(&self) -> impl Iterator<Item = ((&str, &str), &[ReasoningPath])> {
        self.entries.iter().map(|((c, t), p)| ((c.as_str(), t.as_str()), p.as_slice()))
    }

    pub fn contains_path(&self, path: &ReasoningPath) -> bool {
        self.path_vectors.contains_key(path)
    }

    pub fn all_paths(&self) -> impl Iterator<Item = &ReasoningPath> {
        self.path_vectors.keys()
    }

    /// Registers an empty category for a label the bank has not seen.
    /// Returns whether the category was new.
    pub fn provision_category(&mut self, category: &str) -> bool {
        if self.canonical_intents.contains_key(category) {
            return false;
        }
        self.canonical_intents.insert(category.to_string(), Vec::new());
        true
    }

    /// Canonical intent of `category` whose centroid is most similar to the
    /// question; ties go to the smaller label.
    pub fn route(&self, question: &Vector, category: &str) -> Result<(String, f64), BankError> {
        let clusters = self.canonical_intents(category);
        let mut best: Option<(&str, f64)> = None;
        for c in clusters {
            let sim = cosine(question, &c.centroid)?;
            best = match best {
                Some((label, s)) if s > sim || (s == sim && label <= c.canonical_label.as_str()) => Some((label, s)),
                _ => Some((c.canonical_label.as_str(), sim)),
            };
        }
        best.map(|(l, s)| (l.to_string(), s)).ok_or_else(|| BankError::UnknownCategory(category.to_string()))
    }

    /// Top-`k` paths of the entry by cosine to the question, falling back to
    /// the category's union of paths and then to every path in the bank.
    pub fn retrieve_topk(
        &self,
        question: &Vector,
        category: &str,
        canonical_intent: Option<&str>,
        k: usize,
    ) -> Result<RoutingResult, BankError> {
        if k == 0 {
            return Err(BankError::InvalidK);
        }
        if self.path_vectors.is_empty() {
            return Err(BankError::EmptyBank);
        }

        let entry = canonical_intent.map(|t| self.entry(category, t)).unwrap_or(&[]);
        let (pool, level): (Vec<&ReasoningPath>, FallbackLevel) = if !entry.is_empty() {
            (entry.iter().collect(), FallbackLevel::Entry)
        } else {
            let in_category: BTreeSet<&ReasoningPath> =
                self.entries.iter().filter(|((c, _), _)| c == category).flat_map(|(_, p)| p).collect();
            if !in_category.is_empty() {
                (in_category.into_iter().collect(), FallbackLevel::Category)
            } else {
                (self.path_vectors.keys().collect(), FallbackLevel::Global)
            }
        };

        let mut scored = Vec::with_capacity(pool.len());
        for p in pool {
            let v = &self.path_vectors[p];
            scored.push((p.clone(), cosine(question, v)?));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);

        Ok(RoutingResult {
            category: category.to_string(),
            canonical_intent: canonical_intent.map(str::to_string),
            similarity: None,
            candidates: scored,
            fallback_level: level,
        })
    }

    /// [`Bank::route`] followed by [`Bank::retrieve_topk`]; an unknown
    /// category retrieves globally.
    pub fn route_and_retrieve(&self, question: &Vector, category: &str, k: usize) -> Result<RoutingResult, BankError> {
        let routed = match self.route(question, category) {
            Ok(r) => Some(r),
            Err(BankError::UnknownCategory(_)) => None,
            Err(e) => return Err(e),
        };
        let mut result = self.retrieve_topk(question, category, routed.as_ref().map(|(t, _)| t.as_str()), k)?;
        result.similarity = routed.map(|(_, s)| s);
        Ok(result)
    }

    /// Stages a path when it is valid, correct, and absent from both the
    /// bank and the buffer.
    pub fn record_novel(
        &mut self,
        category: &str,
        raw_intent: &str,
        path: &ReasoningPath,
        answer_correct: bool,
    ) -> NoveltyOutcome {
        if !path.is_valid() {
            return NoveltyOutcome::RejectedInvalid;
        }
        if self.contains_path(path) || self.buffer.iter().any(|r| r.path == *path) {
            return NoveltyOutcome::Duplicate;
        }
        if !answer_correct {
            return NoveltyOutcome::RejectedIncorrect;
        }
        self.buffer.push(BufferedRecord {
            category: category.to_string(),
            raw_intent: raw_intent.to_string(),
            path: path.clone(),
        });
        NoveltyOutcome::Buffered
    }

    /// Re-clusters every category touched by the buffer once it holds
    /// `tau_buf` records. The bank is left untouched if embedding fails.
    pub fn maybe_recluster<E: Embedder + ?Sized>(&mut self, embedder: &E) -> Result<ReclusterOutcome, BankError> {
        if self.buffer.len() < self.tau_buf {
            return Ok(ReclusterOutcome::NotTriggered);
        }
        let params = self.metadata.dbscan;
        let affected: BTreeSet<&str> = self.buffer.iter().map(|r| r.category.as_str()).collect();

        let mut new_intents = BTreeMap::new();
        let mut new_entries = BTreeMap::new();
        for &category in &affected {
            let old_clusters = self.canonical_intents(category);
            let mut members: Vec<(String, Vector)> =
                old_clusters.iter().flat_map(|c| c.member_intents.iter().cloned()).collect();
            for r in self.buffer.iter().filter(|r| r.category == category) {
                if !members.iter().any(|(s, _)| *s == r.raw_intent) {
                    members.push((r.raw_intent.clone(), embedder.embed(&r.raw_intent)?));
                }
            }
            let clusters = canonicalize(category, &members, &params)?;
            let relabel = |intent: &str| -> String {
                clusters
                    .iter()
                    .find(|c| c.contains(intent))
                    .map(|c| c.canonical_label.clone())
                    .expect("every member was clustered")
            };

            let mut entries: BTreeMap<(String, String), Vec<ReasoningPath>> = BTreeMap::new();
            for old in old_clusters {
                let old_paths = self.entry(category, &old.canonical_label);
                if old_paths.is_empty() {
                    continue;
                }
                let slot = entries.entry((category.to_string(), relabel(&old.canonical_label))).or_default();
                for p in old_paths {
                    push_unique(slot, p);
                }
            }
            for r in self.buffer.iter().filter(|r| r.category == category) {
                let slot = entries.entry((category.to_string(), relabel(&r.raw_intent))).or_default();
                push_unique(slot, &r.path);
            }
            new_intents.insert(category.to_string(), clusters);
            new_entries.insert(category.to_string(), entries);
        }

        let mut new_vectors = Vec::new();
        for r in &self.buffer {
            if !self.path_vectors.contains_key(&r.path) {
                new_vectors.push((r.path.clone(), embed_path(embedder, &r.path)?));
            }
        }

        let merged = self.buffer.len();
        let categories: Vec<String> = affected.iter().map(|c| c.to_string()).collect();
        for (category, entries) in new_entries {
            self.entries.retain(|(c, _), _| *c != category);
            self.entries.extend(entries);
        }
        self.canonical_intents.extend(new_intents);
        self.path_vectors.extend(new_vectors);
        self.buffer.clear();
        self.metadata.revision += 1;
        Ok(ReclusterOutcome::Merged { merged, categories })
    }

    pub fn to_document(&self) -> BankDocument {
        BankDocument {
            schema_version: SCHEMA_VERSION,
            metadata: self.metadata.clone(),
            k_bank: self.k_bank(),
            tau_buf: self.tau_buf,
            categories: self
                .canonical_intents
                .iter()
                .map(|(name, clusters)| CategoryDoc {
                    name: name.clone(),
                    intents: clusters
                        .iter()
                        .map(|c| IntentDoc {
                            label: c.canonical_label.clone(),
                            members: c.member_intents.iter().map(|(s, _)| s.clone()).collect(),
                            centroid: c.centroid.clone(),
                        })
                        .collect(),
                })
                .collect(),
            entries: self
                .entries
                .iter()
                .map(|((c, t), paths)| EntryDoc { category: c.clone(), intent: t.clone(), paths: paths.clone() })
                .collect(),
            buffer: self.buffer.clone(),
        }
    }

    /// Rebuilds a bank, recomputing member and path vectors with `embedder`.
    /// A fingerprint mismatch is rejected unless `force` is set.
    pub fn from_document<E: Embedder + ?Sized>(
        doc: BankDocument,
        embedder: &E,
        force: bool,
    ) -> Result<Self, BankError> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(BankError::SchemaVersionMismatch { found: doc.schema_version });
        }
        let expected = embedder.fingerprint();
        if doc.metadata.embedding_fingerprint != expected && !force {
            return Err(BankError::EmbeddingFingerprintMismatch {
                expected,
                found: doc.metadata.embedding_fingerprint,
            });
        }
        if doc.tau_buf == 0 {
            return Err(BankError::InvalidTau);
        }
        doc.metadata.dbscan.check()?;

        let mut canonical_intents = BTreeMap::new();
        for cat in doc.categories {
            let mut clusters = Vec::with_capacity(cat.intents.len());
            for intent in cat.intents {
                if !intent.members.contains(&intent.label) {
                    return Err(BankError::InvalidDocument(format!(
                        "canonical label {:?} is not a member of its cluster",
                        intent.label
                    )));
                }
                let mut members = Vec::with_capacity(intent.members.len());
                for m in intent.members {
                    let v = embedder.embed(&m)?;
                    members.push((m, v));
                }
                clusters.push(IntentCluster {
                    category: cat.name.clone(),
                    canonical_label: intent.label,
                    member_intents: members,
                    centroid: intent.centroid,
                });
            }
            canonical_intents.insert(cat.name, clusters);
        }

        let mut entries = BTreeMap::new();
        for e in doc.entries {
            let known = canonical_intents
                .get(&e.category)
                .is_some_and(|cs: &Vec<IntentCluster>| cs.iter().any(|c| c.canonical_label == e.intent));
            if !known {
                return Err(BankError::InvalidDocument(format!(
                    "entry ({:?}, {:?}) has no canonical intent",
                    e.category, e.intent
                )));
            }
            for p in &e.paths {
                p.check()?;
            }
            entries.insert((e.category, e.intent), e.paths);
        }

        let mut bank = Bank {
            canonical_intents,
            entries,
            buffer: doc.buffer,
            tau_buf: doc.tau_buf,
            metadata: doc.metadata,
            path_vectors: BTreeMap::new(),
        };
        bank.embed_missing_paths(embedder)?;
        if bank.k_bank() != doc.k_bank {
            return Err(BankError::InvalidDocument(format!(
                "k_bank {} recorded but {} distinct paths stored",
                doc.k_bank,
                bank.k_bank()
            )));
        }
        Ok(bank)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("bank document serializes")
    }

    pub fn from_json<E: Embedder + ?Sized>(text: &str, embedder: &E, force: bool) -> Result<Self, BankError> {
        let version: VersionProbe =
            serde_json::from_str(text).map_err(|e| BankError::InvalidDocument(format!("{e}")))?;
        if version.schema_version != SCHEMA_VERSION {
            return Err(BankError::SchemaVersionMismatch { found: version.schema_version });
        }
        let doc: BankDocument = serde_json::from_str(text).map_err(|e| BankError::InvalidDocument(format!("{e}")))?;
        Self::from_document(doc, embedder, force)
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

/// On-disk form of a bank. Member vectors are recomputed on load; only
/// canonical-intent centroids are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankDocument {
    pub schema_version: u32,
    pub metadata: BankMetadata,
    pub k_bank: usize,
    pub tau_buf: usize,
    pub categories: Vec<CategoryDoc>,
    pub entries: Vec<EntryDoc>,
    pub buffer: Vec<BufferedRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDoc {
    pub name: String,
    pub intents: Vec<IntentDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentDoc {
    pub label: String,
    pub members: Vec<String>,
    pub centroid: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDoc {
    pub category: String,
    pub intent: String,
    pub paths: Vec<ReasoningPath>,
}
