//! File formats.
//!
//! * Triples: UTF-8, three tab-separated columns `head relation tail`, no
//!   header. CRLF line endings are accepted. Any line with a column count
//!   other than three is rejected.
//! * Alignments: UTF-8, two tab-separated columns `left right`, no header.
//! * Score dumps: JSON lines, one object per test instance:
//!   `{"id": "...", "scores": [..], "true_index": 0, "mask": [..]}` where
//!   `mask` is optional and `true` marks an excluded candidate.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::ea::{AlignedPair, AlignmentSet};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple, Vocabulary};
use crate::metrics::{summarize, MetricReport, RankCollection};
use crate::rank::{rank_scores, RankVariant};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Splits `text` into tab-separated rows of exactly `columns` fields.
/// Returns `(line number, fields)`.
fn parse_tsv<'a>(text: &'a str, columns: usize, path: &Path) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {columns} tab-separated columns, found {}", fields.len()),
            });
        }
        rows.push((i + 1, fields));
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{}: empty file", path.display())));
    }
    Ok(rows)
}

type LabelledTriple = (String, String, String);

fn read_labelled_triples(path: &Path) -> Result<Vec<LabelledTriple>> {
    let text = read_text(path)?;
    let rows = parse_tsv(&text, 3, path)?;
    let mut seen = HashSet::with_capacity(rows.len());
    let mut out = Vec::with_capacity(rows.len());
    let mut duplicates = 0usize;
    for (_, f) in rows {
        let t = (f[0].to_string(), f[1].to_string(), f[2].to_string());
        if seen.insert(t.clone()) {
            out.push(t);
        } else {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        warn!("{}: dropped {duplicates} duplicate triple line(s)", path.display());
    }
    Ok(out)
}

/// Loads one triple file into a graph with its own vocabularies.
pub fn load_triples(path: &Path) -> Result<KnowledgeGraph> {
    Ok(KnowledgeGraph::from_labelled(&read_labelled_triples(path)?))
}

/// Several triple splits over shared vocabularies.
#[derive(Debug, Clone)]
pub struct LpDataset {
    pub entities: Vocabulary,
    pub relations: Vocabulary,
    pub splits: Vec<Vec<Triple>>,
}

impl LpDataset {
    /// Graph of one split, with the shared vocabularies.
    pub fn graph(&self, split: usize) -> KnowledgeGraph {
        KnowledgeGraph::new(
            self.entities.clone(),
            self.relations.clone(),
            self.splits[split].clone(),
        )
        .expect("split ids come from the shared vocabularies")
    }
}

/// Loads split files; vocabularies cover the union of all splits and ids
/// follow sorted label order, so they do not depend on the split order.
pub fn load_splits(paths: &[&Path]) -> Result<LpDataset> {
    let labelled: Vec<Vec<LabelledTriple>> = paths
        .iter()
        .map(|p| read_labelled_triples(p))
        .collect::<Result<_>>()?;
    let entities = Vocabulary::from_labels(
        labelled
            .iter()
            .flatten()
            .flat_map(|(h, _, t)| [h.as_str(), t.as_str()]),
    );
    let relations = Vocabulary::from_labels(labelled.iter().flatten().map(|(_, r, _)| r.as_str()));
    let splits = labelled
        .iter()
        .map(|split| {
            let mut ids: Vec<Triple> = split
                .iter()
                .map(|(h, r, t)| {
                    Triple::new(
                        entities.id(h).unwrap(),
                        relations.id(r).unwrap(),
                        entities.id(t).unwrap(),
                    )
                })
                .collect();
            ids.sort_unstable();
            ids
        })
        .collect();
    Ok(LpDataset {
        entities,
        relations,
        splits,
    })
}

fn read_alignment_rows(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let text = read_text(path)?;
    Ok(parse_tsv(&text, 2, path)?
        .into_iter()
        .map(|(line, f)| (line, f[0].to_string(), f[1].to_string()))
        .collect())
}

/// Loads alignment pairs (all placed in the test part), resolving labels
/// against the given vocabularies. Every unknown label is reported.
pub fn load_alignment(path: &Path, left: &Vocabulary, right: &Vocabulary) -> Result<AlignmentSet> {
    let rows = read_alignment_rows(path)?;
    let mut pairs = Vec::with_capacity(rows.len());
    let mut offenders = Vec::new();
    for (line, l, r) in &rows {
        match (left.id(l), right.id(r)) {
            (Some(a), Some(b)) => pairs.push((a, b)),
            (a, b) => {
                if a.is_none() {
                    offenders.push(format!("line {line}: unknown left entity '{l}'"));
                }
                if b.is_none() {
                    offenders.push(format!("line {line}: unknown right entity '{r}'"));
                }
            }
        }
    }
    if !offenders.is_empty() {
        return Err(Error::invalid(format!(
            "{}: {}",
            path.display(),
            offenders.join("; ")
        )));
    }
    Ok(AlignmentSet::all_test(pairs))
}

/// Loads alignment pairs and builds both vocabularies from the file itself.
pub fn load_alignment_labels(path: &Path) -> Result<(Vocabulary, Vocabulary, Vec<AlignedPair>)> {
    let rows = read_alignment_rows(path)?;
    let left = Vocabulary::from_labels(rows.iter().map(|r| r.1.as_str()));
    let right = Vocabulary::from_labels(rows.iter().map(|r| r.2.as_str()));
    let mut pairs: Vec<AlignedPair> = rows
        .iter()
        .map(|(_, l, r)| (left.id(l).unwrap(), right.id(r).unwrap()))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    Ok((left, right, pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreDumpRecord {
    pub id: String,
    pub scores: Vec<f64>,
    pub true_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
}

/// Ranks every line of a score dump. Blank lines are skipped; any invalid
/// line aborts with its line number.
pub fn rank_score_dump(path: &Path) -> Result<RankCollection> {
    let text = read_text(path)?;
    let mut rc = RankCollection::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: ScoreDumpRecord = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        let record = rank_scores(&rec.scores, rec.true_index, rec.mask.as_deref())
            .map_err(|e| at(format!("instance '{}': {e}", rec.id)))?;
        rc.push(record.into(), None);
    }
    if rc.is_empty() {
        return Err(Error::invalid(format!("{}: no score records", path.display())));
    }
    Ok(rc)
}

pub fn evaluate_score_dump(path: &Path, variant: RankVariant, ks: &[u64]) -> Result<MetricReport> {
    summarize(&rank_score_dump(path)?, ks, variant)
}

pub fn write_score_dump(path: &Path, records: &[ScoreDumpRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}
