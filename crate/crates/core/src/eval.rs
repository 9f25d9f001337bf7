//! Reranking and full-collection retrieval evaluation, TREC run files and
//! metric tables.
//!
//! Rankings use the deterministic sort policy with ties broken by ascending
//! doc id. Metrics are computed against all judged documents of a query, so
//! relevant documents that were not retrieved still count towards the ideal
//! DCG and the average-precision denominator.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{CandidatePool, Corpus, Qrels};
use crate::metrics::Metric;
use crate::parallel::Executor;
use crate::plackett_luce::sort_policy;
use crate::scoring::ScorerParams;
use crate::{ensure, Error, Result};

/// One query's result list in rank order.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    /// `(doc_id, score)`, best first.
    pub entries: Vec<(String, f64)>,
}

/// A system's result lists for a set of queries, in query-id order.
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub tag: String,
    pub lists: Vec<RankedList>,
}

impl Run {
    pub fn new(tag: &str, mut lists: Vec<RankedList>) -> Result<Self> {
        ensure!(
            !tag.is_empty() && !tag.contains(char::is_whitespace),
            "run tag must be a non-empty word, got {tag:?}"
        );
        lists.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        for w in lists.windows(2) {
            ensure!(
                w[0].query_id != w[1].query_id,
                "duplicate query {} in run",
                w[0].query_id
            );
        }
        Ok(Run {
            tag: tag.to_string(),
            lists,
        })
    }

    pub fn get(&self, query_id: &str) -> Option<&RankedList> {
        self.lists
            .binary_search_by(|l| l.query_id.as_str().cmp(query_id))
            .ok()
            .map(|i| &self.lists[i])
    }

    /// TREC run text: `query_id Q0 doc_id rank score tag`.
    pub fn to_trec(&self) -> String {
        let mut s = String::new();
        for list in &self.lists {
            for (rank, (doc, score)) in list.entries.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{} Q0 {doc} {} {score:.6} {}",
                    list.query_id,
                    rank + 1,
                    self.tag
                );
            }
        }
        s
    }

    pub fn parse_trec(text: &str, path: &Path) -> Result<Self> {
        let mut tag: Option<String> = None;
        let mut lists: Vec<RankedList> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::parse(path, i + 1, msg);
            if cols.len() != 6 {
                return Err(bad(format!("expected 6 columns, found {}", cols.len())));
            }
            if cols[1] != "Q0" {
                return Err(bad(format!(
                    "second column must be Q0, found {:?}",
                    cols[1]
                )));
            }
            let rank: usize = cols[3]
                .parse()
                .map_err(|_| bad(format!("bad rank {:?}", cols[3])))?;
            let score: f64 = cols[4]
                .parse()
                .map_err(|_| bad(format!("bad score {:?}", cols[4])))?;
            if !score.is_finite() {
                return Err(bad("non-finite score".to_string()));
            }
            match &tag {
                None => tag = Some(cols[5].to_string()),
                Some(t) if t != cols[5] => {
                    return Err(bad(format!("tag {:?} differs from {t:?}", cols[5])))
                }
                _ => {}
            }
            let new_query = lists.last().is_none_or(|l| l.query_id != cols[0]);
            if new_query {
                if lists.iter().any(|l| l.query_id == cols[0]) {
                    return Err(bad(format!(
                        "lines for query {} are not contiguous",
                        cols[0]
                    )));
                }
                lists.push(RankedList {
                    query_id: cols[0].to_string(),
                    entries: Vec::new(),
                });
            }
            let list = lists.last_mut().unwrap();
            if rank != list.entries.len() + 1 {
                return Err(bad(format!(
                    "expected rank {}, found {rank}",
                    list.entries.len() + 1
                )));
            }
            if let Some(&(_, prev)) = list.entries.last() {
                if score > prev {
                    return Err(bad(
                        "scores must be non-increasing within a query".to_string()
                    ));
                }
            }
            list.entries.push((cols[2].to_string(), score));
        }
        Run::new(tag.as_deref().unwrap_or("run"), lists)
            .map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_trec(&text, path)
    }

    /// Writes the run from a single writer, in query-id order.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_trec()).map_err(|e| Error::io(path, e))
    }
}

/// Per-query and aggregate metric values.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTable {
    pub metrics: Vec<Metric>,
    /// `(query_id, value per metric)` in query-id order.
    pub per_query: Vec<(String, Vec<f64>)>,
}

impl EvalTable {
    /// Arithmetic mean over queries, one value per metric.
    pub fn aggregate(&self) -> Vec<f64> {
        let n = self.per_query.len();
        (0..self.metrics.len())
            .map(|m| {
                if n == 0 {
                    0.0
                } else {
                    self.per_query.iter().map(|(_, v)| v[m]).sum::<f64>() / n as f64
                }
            })
            .collect()
    }

    pub fn value(&self, metric: Metric) -> Option<f64> {
        let m = self.metrics.iter().position(|&x| x == metric)?;
        Some(self.aggregate()[m])
    }

    /// `metric<TAB>value` rows plus a query count.
    pub fn aggregate_tsv(&self) -> String {
        let mut s = String::from("metric\tvalue\n");
        for (m, v) in self.metrics.iter().zip(self.aggregate()) {
            let _ = writeln!(s, "{m}\t{v:.6}");
        }
        let _ = writeln!(s, "queries\t{}", self.per_query.len());
        s
    }

    pub fn per_query_tsv(&self) -> String {
        let mut s = String::from("query_id");
        for m in &self.metrics {
            let _ = write!(s, "\t{m}");
        }
        s.push('\n');
        for (q, vals) in &self.per_query {
            s.push_str(q);
            for v in vals {
                let _ = write!(s, "\t{v:.6}");
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub table: EvalTable,
    pub run: Run,
}

fn judged_grades(qrels: &Qrels, query_id: &str) -> Vec<u32> {
    qrels.relevant(query_id).map(|(_, g)| g).collect()
}

fn list_values(list: &RankedList, qrels: &Qrels, metrics: &[Metric]) -> Vec<f64> {
    let grades: Vec<u32> = list
        .entries
        .iter()
        .map(|(d, _)| qrels.grade(&list.query_id, d))
        .collect();
    let judged = judged_grades(qrels, &list.query_id);
    metrics
        .iter()
        .map(|m| m.evaluate_list(&grades, &judged))
        .collect()
}

/// Scores a run against qrels. Used both in-process and on run files read
/// back from disk.
pub fn evaluate_run(run: &Run, qrels: &Qrels, metrics: &[Metric]) -> EvalTable {
    EvalTable {
        metrics: metrics.to_vec(),
        per_query: run
            .lists
            .iter()
            .map(|l| (l.query_id.clone(), list_values(l, qrels, metrics)))
            .collect(),
    }
}

/// Reorders each pooled query's candidates by descending score.
pub fn rerank_pool(
    params: &ScorerParams,
    corpus: &Corpus,
    pool: &CandidatePool,
    tag: &str,
    exec: &Executor,
) -> Result<Run> {
    let ids: Vec<&str> = pool.query_ids().collect();
    let lists = exec.try_map(ids.len(), |i| {
        let cs = pool.candidate_set(corpus, ids[i])?;
        let scores = params.forward_candidates(&cs.query, &cs.docs)?.scores;
        let entries = sort_policy(&scores)
            .order()
            .iter()
            .map(|&d| (cs.doc_ids[d].clone(), scores[d]))
            .collect();
        Ok::<_, Error>(RankedList {
            query_id: cs.query_id,
            entries,
        })
    })?;
    Run::new(tag, lists)
}

/// Top `top_k_cut` documents of the whole collection for each listed query.
pub fn retrieve(
    params: &ScorerParams,
    corpus: &Corpus,
    query_ids: &[String],
    top_k_cut: usize,
    tag: &str,
    exec: &Executor,
) -> Result<Run> {
    ensure!(top_k_cut > 0, "top_k_cut must be positive");
    let table = params.cache_doc_embeddings(corpus.docs.vectors())?;
    let lists = exec.try_map(query_ids.len(), |i| {
        let q = &query_ids[i];
        let qv = corpus
            .queries
            .get(q)
            .ok_or_else(|| Error::Contract(format!("unknown query {q}")))?;
        let scores = table.scores(&params.encode_query(qv)?);
        let entries = sort_policy(&scores)
            .order()
            .iter()
            .take(top_k_cut)
            .map(|&d| (corpus.docs.ids()[d].clone(), scores[d]))
            .collect();
        Ok::<_, Error>(RankedList {
            query_id: q.clone(),
            entries,
        })
    })?;
    Run::new(tag, lists)
}

/// Second-stage evaluation: rerank each query's pool and score it.
pub fn eval_second_stage(
    params: &ScorerParams,
    corpus: &Corpus,
    pool: &CandidatePool,
    metrics: &[Metric],
    exec: &Executor,
) -> Result<Evaluation> {
    ensure!(!metrics.is_empty(), "no metrics requested");
    let run = rerank_pool(params, corpus, pool, "pgrank-rerank", exec)?;
    Ok(Evaluation {
        table: evaluate_run(&run, &corpus.qrels, metrics),
        run,
    })
}

/// First-stage evaluation: retrieve from the whole collection and score
/// the top `top_k_cut` documents.
pub fn eval_first_stage(
    params: &ScorerParams,
    corpus: &Corpus,
    query_ids: &[String],
    metrics: &[Metric],
    top_k_cut: usize,
    exec: &Executor,
) -> Result<Evaluation> {
    ensure!(!metrics.is_empty(), "no metrics requested");
    let run = retrieve(
        params,
        corpus,
        query_ids,
        top_k_cut,
        "pgrank-retrieve",
        exec,
    )?;
    Ok(Evaluation {
        table: evaluate_run(&run, &corpus.qrels, metrics),
        run,
    })
}

/// Parses metric lists such as `ndcg@10,mrr,map`, or a metric name with
/// several cutoffs such as `ndcg@1,3,10`.
pub fn parse_metric_list(spec: &str) -> Result<Vec<Metric>> {
    let mut out = Vec::new();
    let mut last_family: Option<&str> = None;
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let metric = if part.chars().all(|c| c.is_ascii_digit()) {
            let family = last_family
                .ok_or_else(|| Error::Contract(format!("cutoff {part} without a metric name")))?;
            format!("{family}@{part}").parse()?
        } else {
            last_family = part.split_once('@').map(|(f, _)| f);
            part.parse()?
        };
        out.push(metric);
    }
    ensure!(!out.is_empty(), "empty metric list");
    Ok(out)
}
