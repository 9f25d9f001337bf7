//! Corpus, candidate pools and their file formats.
//!
//! Files are UTF-8 with LF line endings and rows sorted by id:
//!
//! - vectors: `id<TAB>v1,v2,...,vD`
//! - qrels (TREC): `query_id 0 doc_id grade`
//! - candidate pools: `query_id<TAB>doc_id<TAB>provenance`

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::metrics::RelevanceJudgments;
use crate::parallel::Executor;
use crate::plackett_luce::sort_policy;
use crate::rng;
use crate::scoring::{dot, EmbeddingTable, FeatureVector, ScorerParams};
use crate::{ensure, Error, Result};

pub const QUERIES_FILE: &str = "queries.tsv";
pub const DOCS_FILE: &str = "docs.tsv";
pub const QRELS_FILE: &str = "qrels.txt";
pub const DISTRACTORS_FILE: &str = "distractors.tsv";

/// Id-sorted collection of equal-width vectors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VectorSet {
    ids: Vec<String>,
    vectors: Vec<FeatureVector>,
    index: HashMap<String, usize>,
}

impl VectorSet {
    pub fn new(mut rows: Vec<(String, FeatureVector)>) -> Result<Self> {
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut set = VectorSet::default();
        for (id, v) in rows {
            ensure!(!id.is_empty(), "empty id");
            ensure!(
                !id.chars().any(char::is_whitespace),
                "id {id:?} contains whitespace"
            );
            if let Some(first) = set.vectors.first() {
                ensure!(
                    first.dim() == v.dim(),
                    "vector {id} has dimension {} but {} has {}",
                    v.dim(),
                    set.ids[0],
                    first.dim()
                );
            }
            ensure!(
                set.index.insert(id.clone(), set.ids.len()).is_none(),
                "duplicate id {id}"
            );
            set.ids.push(id);
            set.vectors.push(v);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(|v| v.dim())
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&FeatureVector> {
        self.position(id).map(|i| &self.vectors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &FeatureVector)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    /// Union with `other`; ids must not collide.
    pub fn merged(&self, other: &VectorSet) -> Result<VectorSet> {
        let rows = self
            .iter()
            .chain(other.iter())
            .map(|(id, v)| (id.to_string(), v.clone()))
            .collect();
        VectorSet::new(rows)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (id, v) in self.iter() {
            s.push_str(id);
            s.push('\t');
            let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            s.push_str(&vals.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (id, vals) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `id<TAB>v1,v2,...`"))?;
            let values = vals
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(path, i + 1, format!("bad number {v:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let fv =
                FeatureVector::new(values).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            rows.push((id.to_string(), fv));
        }
        VectorSet::new(rows).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Relevance judgments keyed by query, then document.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Qrels(BTreeMap<String, BTreeMap<String, u32>>);

impl Qrels {
    pub fn new() -> Self {
        Qrels::default()
    }

    pub fn insert(&mut self, query: &str, doc: &str, grade: u32) {
        self.0
            .entry(query.to_string())
            .or_default()
            .insert(doc.to_string(), grade);
    }

    pub fn grade(&self, query: &str, doc: &str) -> u32 {
        self.0
            .get(query)
            .and_then(|m| m.get(doc))
            .copied()
            .unwrap_or(0)
    }

    /// Documents with positive grade for `query`, in id order.
    pub fn relevant(&self, query: &str) -> impl Iterator<Item = (&str, u32)> {
        self.0
            .get(query)
            .into_iter()
            .flat_map(|m| m.iter())
            .filter(|(_, &g)| g > 0)
            .map(|(d, &g)| (d.as_str(), g))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.0
            .iter()
            .flat_map(|(q, m)| m.iter().map(move |(d, &g)| (q.as_str(), d.as_str(), g)))
    }

    pub fn to_trec(&self) -> String {
        let mut s = String::new();
        for (q, d, g) in self.iter() {
            s.push_str(&format!("{q} 0 {d} {g}\n"));
        }
        s
    }

    pub fn parse_trec(text: &str, path: &Path) -> Result<Self> {
        let mut qrels = Qrels::new();
        for (i, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.is_empty() {
                continue;
            }
            if cols.len() != 4 {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected 4 columns, found {}", cols.len()),
                ));
            }
            let grade: i64 = cols[3]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad grade {:?}", cols[3])))?;
            if grade < 0 {
                return Err(Error::parse(path, i + 1, "negative grade"));
            }
            qrels.insert(cols[0], cols[2], grade as u32);
        }
        Ok(qrels)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_trec(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_trec()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub queries: VectorSet,
    pub docs: VectorSet,
    pub qrels: Qrels,
}

impl Corpus {
    pub fn new(queries: VectorSet, docs: VectorSet, qrels: Qrels) -> Result<Self> {
        if let (Some(a), Some(b)) = (queries.dim(), docs.dim()) {
            ensure!(a == b, "queries have dimension {a} but documents have {b}");
        }
        for (q, d, _) in qrels.iter() {
            ensure!(
                queries.position(q).is_some(),
                "qrels reference unknown query {q}"
            );
            ensure!(
                docs.position(d).is_some(),
                "qrels reference unknown document {d}"
            );
        }
        Ok(Corpus {
            queries,
            docs,
            qrels,
        })
    }

    pub fn dim(&self) -> usize {
        self.queries.dim().or(self.docs.dim()).unwrap_or(0)
    }

    /// Copy of the corpus with additional (unjudged) documents.
    pub fn with_extra_docs(&self, extra: &VectorSet) -> Result<Corpus> {
        Corpus::new(
            self.queries.clone(),
            self.docs.merged(extra)?,
            self.qrels.clone(),
        )
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let queries = VectorSet::read(&dir.join(QUERIES_FILE))?;
        let docs = VectorSet::read(&dir.join(DOCS_FILE))?;
        let qrels_path = dir.join(QRELS_FILE);
        let qrels = Qrels::read(&qrels_path)?;
        Corpus::new(queries, docs, qrels).map_err(|e| Error::parse(qrels_path, 0, e.to_string()))
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.queries.write(&dir.join(QUERIES_FILE))?;
        self.docs.write(&dir.join(DOCS_FILE))?;
        self.qrels.write(&dir.join(QRELS_FILE))
    }
}

/// One query's documents, the unit every policy operates on.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub query_id: String,
    pub query: FeatureVector,
    pub doc_ids: Vec<String>,
    pub docs: Vec<FeatureVector>,
    pub grades: Option<RelevanceJudgments>,
}

impl CandidateSet {
    pub fn new(
        query_id: String,
        query: FeatureVector,
        doc_ids: Vec<String>,
        docs: Vec<FeatureVector>,
        grades: Option<RelevanceJudgments>,
    ) -> Result<Self> {
        ensure!(
            doc_ids.len() == docs.len(),
            "{} doc ids for {} feature vectors",
            doc_ids.len(),
            docs.len()
        );
        if let Some(g) = &grades {
            ensure!(
                g.len() == docs.len(),
                "{} grades for {} documents",
                g.len(),
                docs.len()
            );
        }
        let unique: BTreeSet<&String> = doc_ids.iter().collect();
        ensure!(
            unique.len() == doc_ids.len(),
            "duplicate doc id in candidate set {query_id}"
        );
        ensure!(
            docs.iter().all(|d| d.dim() == query.dim()),
            "candidate set {query_id} mixes feature dimensions"
        );
        Ok(CandidateSet {
            query_id,
            query,
            doc_ids,
            docs,
            grades,
        })
    }

    /// Candidate set with anonymous doc ids, for tests and tooling.
    pub fn from_features(
        query: Vec<f64>,
        docs: Vec<Vec<f64>>,
        grades: Option<Vec<u32>>,
    ) -> Result<Self> {
        let ids = (0..docs.len()).map(|i| format!("d{i}")).collect();
        let docs = docs
            .into_iter()
            .map(FeatureVector::new)
            .collect::<Result<Vec<_>>>()?;
        CandidateSet::new(
            "q".to_string(),
            FeatureVector::new(query)?,
            ids,
            docs,
            grades.map(RelevanceJudgments::new),
        )
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn grades(&self) -> Result<&RelevanceJudgments> {
        self.grades.as_ref().ok_or_else(|| {
            Error::Contract(format!("candidate set {} has no grades", self.query_id))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    GroundTruthRelevant,
    Stage1Retrieved,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::GroundTruthRelevant => "ground_truth_relevant",
            Provenance::Stage1Retrieved => "stage1_retrieved",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ground_truth_relevant" => Ok(Provenance::GroundTruthRelevant),
            "stage1_retrieved" => Ok(Provenance::Stage1Retrieved),
            _ => Err(Error::Contract(format!("unknown provenance {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolEntry {
    pub doc_id: String,
    pub provenance: Provenance,
}

/// Per-query candidate documents, each list sorted by doc id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CandidatePool(BTreeMap<String, Vec<PoolEntry>>);

impl CandidatePool {
    pub fn new() -> Self {
        CandidatePool::default()
    }

    pub fn insert(&mut self, query_id: &str, mut entries: Vec<PoolEntry>) -> Result<()> {
        entries.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        ensure!(
            entries.windows(2).all(|w| w[0].doc_id != w[1].doc_id),
            "duplicate document in pool for query {query_id}"
        );
        self.0.insert(query_id.to_string(), entries);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&[PoolEntry]> {
        self.0.get(query_id).map(Vec::as_slice)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Pool restricted to the given queries.
    pub fn subset<'a>(&self, queries: impl IntoIterator<Item = &'a str>) -> CandidatePool {
        CandidatePool(
            queries
                .into_iter()
                .filter_map(|q| self.0.get(q).map(|e| (q.to_string(), e.clone())))
                .collect(),
        )
    }

    /// Materializes one query's candidate set with features and grades.
    pub fn candidate_set(&self, corpus: &Corpus, query_id: &str) -> Result<CandidateSet> {
        let entries = self
            .get(query_id)
            .ok_or_else(|| Error::Contract(format!("no pool for query {query_id}")))?;
        let query = corpus
            .queries
            .get(query_id)
            .ok_or_else(|| Error::Contract(format!("pool references unknown query {query_id}")))?
            .clone();
        let mut ids = Vec::with_capacity(entries.len());
        let mut docs = Vec::with_capacity(entries.len());
        let mut grades = Vec::with_capacity(entries.len());
        for e in entries {
            let v = corpus.docs.get(&e.doc_id).ok_or_else(|| {
                Error::Contract(format!("pool references unknown document {}", e.doc_id))
            })?;
            ids.push(e.doc_id.clone());
            docs.push(v.clone());
            grades.push(corpus.qrels.grade(query_id, &e.doc_id));
        }
        CandidateSet::new(
            query_id.to_string(),
            query,
            ids,
            docs,
            Some(RelevanceJudgments::new(grades)),
        )
    }

    /// All candidate sets in query-id order.
    pub fn candidate_sets(&self, corpus: &Corpus) -> Result<Vec<CandidateSet>> {
        self.query_ids()
            .map(|q| self.candidate_set(corpus, q))
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (q, entries) in &self.0 {
            for e in entries {
                s.push_str(&format!("{q}\t{}\t{}\n", e.doc_id, e.provenance));
            }
        }
        s
    }

    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut grouped: BTreeMap<String, Vec<PoolEntry>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(
                    path,
                    i + 1,
                    "expected `query_id<TAB>doc_id<TAB>provenance`",
                ));
            }
            let provenance = cols[2]
                .parse()
                .map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?;
            grouped
                .entry(cols[0].to_string())
                .or_default()
                .push(PoolEntry {
                    doc_id: cols[1].to_string(),
                    provenance,
                });
        }
        let mut pool = CandidatePool::new();
        for (q, entries) in grouped {
            pool.insert(&q, entries)
                .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        }
        Ok(pool)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// First-stage retriever used to select pool candidates.
#[derive(Clone, Debug)]
pub enum Stage1 {
    /// Dot product on raw feature vectors.
    RawDot,
    Model(ScorerParams),
}

impl Stage1 {
    fn prepare<'a>(&'a self, corpus: &'a Corpus) -> Result<PreparedStage1<'a>> {
        Ok(match self {
            Stage1::RawDot => PreparedStage1::RawDot(corpus.docs.vectors()),
            Stage1::Model(p) => {
                PreparedStage1::Model(p, p.cache_doc_embeddings(corpus.docs.vectors())?)
            }
        })
    }
}

enum PreparedStage1<'a> {
    RawDot(&'a [FeatureVector]),
    Model(&'a ScorerParams, EmbeddingTable),
}

impl PreparedStage1<'_> {
    /// Collection document indices for `query`, best first, ties by ascending doc id.
    fn ranked_docs(&self, query: &FeatureVector) -> Result<Vec<usize>> {
        let scores: Vec<f64> = match self {
            PreparedStage1::RawDot(docs) => docs.iter().map(|d| dot(query, d)).collect(),
            PreparedStage1::Model(p, table) => table.scores(&p.encode_query(query)?),
        };
        Ok(sort_policy(&scores).into_inner())
    }
}

/// Training pools: every ground-truth relevant document plus the
/// highest-scoring non-relevant documents until `pool_size` is reached.
pub fn build_training_candidates(
    corpus: &Corpus,
    stage1: &Stage1,
    pool_size: usize,
    exec: &Executor,
) -> Result<CandidatePool> {
    build_pool(corpus, stage1, pool_size, exec, |q, ranked| {
        let mut entries: Vec<PoolEntry> = corpus
            .qrels
            .relevant(q)
            .filter(|(d, _)| corpus.docs.position(d).is_some())
            .map(|(d, _)| PoolEntry {
                doc_id: d.to_string(),
                provenance: Provenance::GroundTruthRelevant,
            })
            .collect();
        for &i in ranked {
            if entries.len() >= pool_size {
                break;
            }
            let id = &corpus.docs.ids()[i];
            if corpus.qrels.grade(q, id) == 0 {
                entries.push(PoolEntry {
                    doc_id: id.clone(),
                    provenance: Provenance::Stage1Retrieved,
                });
            }
        }
        entries
    })
}

/// Evaluation pools: the top `pool_size` stage-1 documents united with the
/// ground-truth relevant documents, trimmed back to `pool_size` by dropping
/// the lowest-ranked non-relevant stage-1 documents.
pub fn build_eval_candidates(
    corpus: &Corpus,
    stage1: &Stage1,
    pool_size: usize,
    exec: &Executor,
) -> Result<CandidatePool> {
    build_pool(corpus, stage1, pool_size, exec, |q, ranked| {
        let top: Vec<usize> = ranked.iter().take(pool_size).copied().collect();
        let top_ids: BTreeSet<&str> = top.iter().map(|&i| corpus.docs.ids()[i].as_str()).collect();
        let injected: Vec<&str> = corpus
            .qrels
            .relevant(q)
            .map(|(d, _)| d)
            .filter(|d| corpus.docs.position(d).is_some() && !top_ids.contains(d))
            .collect();
        let mut excess = (top.len() + injected.len()).saturating_sub(pool_size);
        let mut keep = vec![true; top.len()];
        for j in (0..top.len()).rev() {
            if excess == 0 {
                break;
            }
            if corpus.qrels.grade(q, &corpus.docs.ids()[top[j]]) == 0 {
                keep[j] = false;
                excess -= 1;
            }
        }
        let mut entries: Vec<PoolEntry> = top
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(&i, _)| PoolEntry {
                doc_id: corpus.docs.ids()[i].clone(),
                provenance: Provenance::Stage1Retrieved,
            })
            .collect();
        entries.extend(injected.into_iter().map(|d| PoolEntry {
            doc_id: d.to_string(),
            provenance: Provenance::GroundTruthRelevant,
        }));
        entries
    })
}

fn build_pool<F>(
    corpus: &Corpus,
    stage1: &Stage1,
    pool_size: usize,
    exec: &Executor,
    select: F,
) -> Result<CandidatePool>
where
    F: Fn(&str, &[usize]) -> Vec<PoolEntry> + Sync + Send,
{
    ensure!(pool_size > 0, "pool size must be positive");
    let prepared = stage1.prepare(corpus)?;
    let per_query = exec.try_map(corpus.queries.len(), |i| {
        let q = &corpus.queries.ids()[i];
        let ranked = prepared.ranked_docs(&corpus.queries.vectors()[i])?;
        Ok::<_, Error>((q.clone(), select(q, &ranked)))
    })?;
    let mut pool = CandidatePool::new();
    for (q, entries) in per_query {
        pool.insert(&q, entries)?;
    }
    Ok(pool)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub num_queries: usize,
    /// Documents generated per query (relevant ones included).
    pub docs_per_query_pool: usize,
    pub relevant_per_query: usize,
    pub noise_scale: f64,
    /// Grade relevant documents 3/2/1 by noise-magnitude tercile.
    pub graded: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dim: 16,
            num_queries: 100,
            docs_per_query_pool: 100,
            relevant_per_query: 5,
            noise_scale: 0.5,
            graded: false,
            seed: 0,
        }
    }
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn id_width(count: usize) -> usize {
    count.max(1).to_string().len().max(4)
}

/// Synthetic corpus. Queries are uniform on the unit sphere; each relevant
/// document is its query plus isotropic Gaussian noise whose expected norm
/// is about `noise_scale`; irrelevant documents are independent uniform
/// unit vectors.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Corpus> {
    ensure!(config.dim > 0, "dimension must be positive");
    ensure!(config.num_queries > 0, "query count must be positive");
    ensure!(config.docs_per_query_pool > 0, "pool size must be positive");
    ensure!(
        config.relevant_per_query > 0 && config.relevant_per_query <= config.docs_per_query_pool,
        "relevant count must be in 1..=docs_per_query_pool"
    );
    ensure!(
        config.noise_scale >= 0.0 && config.noise_scale.is_finite(),
        "noise scale must be non-negative"
    );
    let mut rng = rng::seeded(config.seed);
    let qw = id_width(config.num_queries);
    let dw = id_width(config.num_queries * config.docs_per_query_pool);
    let sigma = config.noise_scale / (config.dim as f64).sqrt();
    let mut queries = Vec::with_capacity(config.num_queries);
    let mut docs = Vec::with_capacity(config.num_queries * config.docs_per_query_pool);
    let mut qrels = Qrels::new();
    for qi in 0..config.num_queries {
        let qid = format!("q{qi:0qw$}");
        let q = unit_vector(&mut rng, config.dim);
        let mut relevant = Vec::with_capacity(config.relevant_per_query);
        for _ in 0..config.relevant_per_query {
            let noise: Vec<f64> = (0..config.dim)
                .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let magnitude = noise.iter().map(|x| x * x).sum::<f64>().sqrt();
            let d: Vec<f64> = q.iter().zip(&noise).map(|(a, b)| a + b).collect();
            relevant.push((d, magnitude));
        }
        let mut by_noise: Vec<usize> = (0..relevant.len()).collect();
        by_noise.sort_by(|&a, &b| relevant[a].1.total_cmp(&relevant[b].1).then(a.cmp(&b)));
        let mut grades = vec![1u32; relevant.len()];
        if config.graded {
            for (rank, &i) in by_noise.iter().enumerate() {
                grades[i] = 3 - (3 * rank / relevant.len()) as u32;
            }
        }
        let mut local: Vec<(Vec<f64>, Option<u32>)> = relevant
            .into_iter()
            .zip(grades)
            .map(|((d, _), g)| (d, Some(g)))
            .collect();
        for _ in config.relevant_per_query..config.docs_per_query_pool {
            local.push((unit_vector(&mut rng, config.dim), None));
        }
        local.shuffle(&mut rng);
        for (d, grade) in local {
            let did = format!("d{:0dw$}", docs.len());
            if let Some(g) = grade {
                qrels.insert(&qid, &did, g);
            }
            docs.push((did, FeatureVector::new(d)?));
        }
        queries.push((qid, FeatureVector::new(q)?));
    }
    Corpus::new(VectorSet::new(queries)?, VectorSet::new(docs)?, qrels)
}

/// Unjudged uniform unit-vector documents with ids `x…`.
pub fn generate_distractors(dim: usize, count: usize, seed: u64) -> Result<VectorSet> {
    ensure!(dim > 0, "dimension must be positive");
    let mut rng = rng::stream(seed, &[0xD15_7AC7]);
    let w = id_width(count);
    let rows = (0..count)
        .map(|i| {
            Ok((
                format!("x{i:0w$}"),
                FeatureVector::new(unit_vector(&mut rng, dim))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    VectorSet::new(rows)
}

/// Seeded split of query ids into (train, validation).
pub fn split_queries(
    ids: &[String],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    ensure!(
        (0.0..1.0).contains(&val_fraction),
        "validation fraction must be in [0, 1), got {val_fraction}"
    );
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut rng::stream(seed, &[0x5B117]));
    let n_val = ((ids.len() as f64) * val_fraction).round() as usize;
    let n_val = if val_fraction > 0.0 && ids.len() > 1 {
        n_val.clamp(1, ids.len() - 1)
    } else {
        n_val
    };
    let mut val = shuffled.split_off(ids.len() - n_val);
    shuffled.sort();
    val.sort();
    Ok((shuffled, val))
}
