//! Run and qrels file handling plus dataset assembly.
//!
//! Run files use the 6-column retrieval-run convention
//! (`qid Q0 docid rank score tag`), qrels the 4-column one
//! (`qid iter docid rel`), both whitespace separated, so runs produced by
//! other retrieval software fuse without conversion. Blank lines and lines
//! starting with `#` are skipped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, PanelSet, RelevanceSet, ScorePanel};

/// One scored (query, document) pair from a run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: String,
    pub doc_id: String,
    /// Rank as stated in the file; informational only, assembly orders by
    /// score.
    pub rank: i64,
    pub score: f64,
    /// Ranker name.
    pub tag: String,
}

/// One relevance judgment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrelRecord {
    pub query_id: String,
    pub doc_id: String,
    /// Relevant iff positive.
    pub relevance: i64,
}

/// Non-fatal issues from assembly, reported to the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Warning(pub String);

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn skippable(line: &str) -> bool {
    let trimmed = line.trim_start();
    trimmed.is_empty() || trimmed.starts_with('#')
}

/// Parse a run file. Duplicate (query, document) pairs are rejected with
/// both offending line numbers.
pub fn parse_run(text: &str) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if skippable(line) {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 6 fields (qid Q0 docid rank score tag), got {}", fields.len()),
            });
        }
        if fields[1] != "Q0" {
            return Err(Error::Parse {
                line: line_no,
                message: format!("second field must be the literal Q0, got {:?}", fields[1]),
            });
        }
        let rank: i64 = fields[3].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("rank {:?} is not an integer", fields[3]),
        })?;
        let score: f64 = fields[4].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("score {:?} is not a number", fields[4]),
        })?;
        if !score.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("score {:?} is not finite", fields[4]),
            });
        }
        let key = (fields[0].to_string(), fields[2].to_string());
        if let Some(&first) = seen.get(&key) {
            return Err(Error::DuplicateRecord {
                query_id: key.0,
                doc_id: key.1,
                first_line: first,
                second_line: line_no,
            });
        }
        seen.insert(key, line_no);
        records.push(RunRecord {
            query_id: fields[0].to_string(),
            doc_id: fields[2].to_string(),
            rank,
            score,
            tag: fields[5].to_string(),
        });
    }
    Ok(records)
}

/// Render records back into the 6-column format. Scores print with Rust's
/// shortest round-trip formatting, so `parse_run(serialize_run(r)) == r`.
pub fn serialize_run(records: &[RunRecord]) -> String {
    let mut out = String::new();
    for r in records {
        writeln!(out, "{} Q0 {} {} {} {}", r.query_id, r.doc_id, r.rank, r.score, r.tag).unwrap();
    }
    out
}

/// Parse a qrels file.
pub fn parse_qrels(text: &str) -> Result<Vec<QrelRecord>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if skippable(line) {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 fields (qid iter docid rel), got {}", fields.len()),
            });
        }
        let relevance: i64 = fields[3].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("relevance {:?} is not an integer", fields[3]),
        })?;
        if relevance < 0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("relevance must be nonnegative, got {relevance}"),
            });
        }
        records.push(QrelRecord {
            query_id: fields[0].to_string(),
            doc_id: fields[2].to_string(),
            relevance,
        });
    }
    Ok(records)
}

pub fn serialize_qrels(records: &[QrelRecord]) -> String {
    let mut out = String::new();
    for r in records {
        writeln!(out, "{} 0 {} {}", r.query_id, r.doc_id, r.relevance).unwrap();
    }
    out
}

/// The single tag of a run, enforced uniform across its records.
fn run_tag(run: &[RunRecord], position: usize) -> Result<String> {
    let first = run.first().ok_or_else(|| {
        Error::InvalidArgument(format!("run {position} has no records; cannot determine its tag"))
    })?;
    for r in run {
        if r.tag != first.tag {
            return Err(Error::InvalidArgument(format!(
                "run {position} mixes tags {:?} and {:?}",
                first.tag, r.tag
            )));
        }
    }
    Ok(first.tag.clone())
}

/// Build score panels from one run per ranker, without relevance.
///
/// Each query's document universe is the union of documents any ranker
/// scored for it; scores a ranker did not assign are 0. Queries and
/// documents come out sorted by id.
pub fn assemble_panels(runs: &[Vec<RunRecord>]) -> Result<PanelSet> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("need at least one run".into()));
    }
    let mut tags = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        let tag = run_tag(run, i)?;
        if tags.contains(&tag) {
            return Err(Error::InvalidArgument(format!("duplicate run tag {tag:?}")));
        }
        tags.push(tag);
    }
    // query -> doc -> per-ranker scores
    let mut table: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for (k, run) in runs.iter().enumerate() {
        for r in run {
            table
                .entry(r.query_id.clone())
                .or_default()
                .entry(r.doc_id.clone())
                .or_insert_with(|| vec![0.0; runs.len()])[k] = r.score;
        }
    }
    let panels = table
        .into_iter()
        .map(|(qid, docs)| {
            let (doc_ids, rows): (Vec<String>, Vec<Vec<f64>>) = docs.into_iter().unzip();
            ScorePanel::from_rows(qid, doc_ids, rows)
        })
        .collect::<Result<Vec<_>>>()?;
    PanelSet::new(panels, tags)
}

/// Assemble a training dataset from per-ranker runs and qrels.
///
/// On top of [`assemble_panels`] semantics, judged-relevant documents join
/// the universe (zero-filled where unscored), queries present only in the
/// qrels are dropped with a warning, and so are queries with no relevant
/// document at all.
pub fn assemble_dataset(
    runs: &[Vec<RunRecord>],
    qrels: &[QrelRecord],
) -> Result<(Dataset, Vec<Warning>)> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("need at least one run".into()));
    }
    let mut tags = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        let tag = run_tag(run, i)?;
        if tags.contains(&tag) {
            return Err(Error::InvalidArgument(format!("duplicate run tag {tag:?}")));
        }
        tags.push(tag);
    }

    let mut relevant: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for q in qrels {
        if q.relevance > 0 {
            relevant.entry(q.query_id.clone()).or_default().insert(q.doc_id.clone());
        }
    }

    let mut table: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for (k, run) in runs.iter().enumerate() {
        for r in run {
            table
                .entry(r.query_id.clone())
                .or_default()
                .entry(r.doc_id.clone())
                .or_insert_with(|| vec![0.0; runs.len()])[k] = r.score;
        }
    }

    let mut warnings = Vec::new();
    for qid in relevant.keys() {
        if !table.contains_key(qid) {
            warnings.push(Warning(format!(
                "query {qid} appears in the qrels but in no run; dropped"
            )));
        }
    }

    let mut panels = Vec::new();
    let mut rels = Vec::new();
    for (qid, mut docs) in table {
        let Some(rel_docs) = relevant.get(&qid) else {
            warnings.push(Warning(format!(
                "query {qid} has no relevant documents; dropped"
            )));
            continue;
        };
        for doc in rel_docs {
            docs.entry(doc.clone()).or_insert_with(|| vec![0.0; runs.len()]);
        }
        let (doc_ids, rows): (Vec<String>, Vec<Vec<f64>>) = docs.into_iter().unzip();
        panels.push(ScorePanel::from_rows(&qid, doc_ids, rows)?);
        rels.push(RelevanceSet::new(&qid, rel_docs.iter().cloned()));
    }
    if panels.is_empty() {
        return Err(Error::EmptyDataset(
            "no query has both run scores and relevant documents".into(),
        ));
    }
    Ok((Dataset::new(panels, rels, tags)?, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_single_line() {
        let records = parse_run("q1 Q0 d3 1 0.385 ens2\n").unwrap();
        assert_eq!(
            records,
            vec![RunRecord {
                query_id: "q1".into(),
                doc_id: "d3".into(),
                rank: 1,
                score: 0.385,
                tag: "ens2".into(),
            }]
        );
    }

    #[test]
    fn parse_empty_and_comments() {
        assert!(parse_run("").unwrap().is_empty());
        assert!(parse_run("\n# comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn parse_rejects_bad_score() {
        let err = parse_run("q1 Q0 d3 1 abc ens2").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn parse_rejects_wrong_arity() {
        assert!(matches!(
            parse_run("q1 Q0 d3 1 0.4"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn parse_rejects_missing_q0() {
        assert!(matches!(
            parse_run("q1 QX d3 1 0.4 t"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn parse_reports_duplicates_with_both_lines() {
        let text = "q1 Q0 d1 1 0.9 t\nq1 Q0 d2 2 0.8 t\nq1 Q0 d1 3 0.7 t\n";
        match parse_run(text).unwrap_err() {
            Error::DuplicateRecord {
                first_line,
                second_line,
                ..
            } => {
                assert_eq!(first_line, 1);
                assert_eq!(second_line, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_qrels_lines() {
        let records = parse_qrels("q1 0 d2 1\nq1 0 d5 0\n").unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].relevance, 1);
        assert_eq!(records[1].relevance, 0);
        assert!(matches!(
            parse_qrels("q1 0 d2"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn run_round_trip(
            entries in prop::collection::vec(
                ("q[0-9]{1,3}", "d[0-9]{1,4}", -5i64..5000, -1e6f64..1e6),
                0..40,
            )
        ) {
            let mut seen = std::collections::HashSet::new();
            let records: Vec<RunRecord> = entries
                .into_iter()
                .filter(|(q, d, _, _)| seen.insert((q.clone(), d.clone())))
                .map(|(query_id, doc_id, rank, score)| RunRecord {
                    query_id,
                    doc_id,
                    rank,
                    score,
                    tag: "t".into(),
                })
                .collect();
            let parsed = parse_run(&serialize_run(&records)).unwrap();
            prop_assert_eq!(parsed, records);
        }
    }

    fn toy_runs() -> Vec<Vec<RunRecord>> {
        let run = |tag: &str, scores: [(f64, &str); 3]| -> Vec<RunRecord> {
            scores
                .iter()
                .enumerate()
                .map(|(i, (score, doc))| RunRecord {
                    query_id: "q1".into(),
                    doc_id: (*doc).into(),
                    rank: i as i64 + 1,
                    score: *score,
                    tag: tag.into(),
                })
                .collect()
        };
        vec![
            run("r1", [(0.35, "d1"), (0.4, "d2"), (0.25, "d3")]),
            run("r2", [(0.2, "d1"), (0.1, "d2"), (0.7, "d3")]),
        ]
    }

    #[test]
    fn assemble_toy_dataset() {
        let qrels = parse_qrels("q1 0 d2 1\nq1 0 d3 1\n").unwrap();
        let (dataset, warnings) = assemble_dataset(&toy_runs(), &qrels).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(dataset.len(), 1);
        assert_eq!(dataset.ranker_tags(), &["r1".to_string(), "r2".to_string()]);
        let panel = &dataset.panels()[0];
        assert_eq!(panel.n_docs(), 3);
        assert_eq!(panel.n_rankers(), 2);
        assert_eq!(panel.score(panel.doc_index("d3").unwrap(), 1), 0.7);
    }

    #[test]
    fn assemble_unions_documents_and_zero_fills() {
        let runs = vec![
            vec![RunRecord {
                query_id: "q".into(),
                doc_id: "d1".into(),
                rank: 1,
                score: 0.5,
                tag: "a".into(),
            }],
            vec![RunRecord {
                query_id: "q".into(),
                doc_id: "d2".into(),
                rank: 1,
                score: 0.8,
                tag: "b".into(),
            }],
        ];
        let qrels = [QrelRecord {
            query_id: "q".into(),
            doc_id: "d1".into(),
            relevance: 1,
        }];
        let (dataset, _) = assemble_dataset(&runs, &qrels).unwrap();
        let panel = &dataset.panels()[0];
        assert_eq!(panel.n_docs(), 2);
        let d1 = panel.doc_index("d1").unwrap();
        let d2 = panel.doc_index("d2").unwrap();
        assert_eq!(panel.score(d1, 0), 0.5);
        assert_eq!(panel.score(d1, 1), 0.0);
        assert_eq!(panel.score(d2, 0), 0.0);
        assert_eq!(panel.score(d2, 1), 0.8);
    }

    #[test]
    fn assemble_drops_qrels_only_queries_with_warning() {
        let qrels = parse_qrels("q1 0 d2 1\nq1 0 d3 1\nq9 0 d1 1\n").unwrap();
        let (dataset, warnings) = assemble_dataset(&toy_runs(), &qrels).unwrap();
        assert_eq!(dataset.len(), 1);
        assert!(warnings.iter().any(|w| w.0.contains("q9")));
    }

    #[test]
    fn assemble_drops_unjudged_queries_with_warning() {
        let mut runs = toy_runs();
        runs[0].push(RunRecord {
            query_id: "q2".into(),
            doc_id: "d1".into(),
            rank: 1,
            score: 0.3,
            tag: "r1".into(),
        });
        let qrels = parse_qrels("q1 0 d2 1\nq1 0 d3 1\n").unwrap();
        let (dataset, warnings) = assemble_dataset(&runs, &qrels).unwrap();
        assert_eq!(dataset.len(), 1);
        assert!(warnings.iter().any(|w| w.0.contains("q2")));
    }

    #[test]
    fn assemble_with_no_usable_query_errors() {
        let qrels = parse_qrels("q9 0 d1 1\n").unwrap();
        assert!(matches!(
            assemble_dataset(&toy_runs(), &qrels),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn relevant_unscored_document_joins_universe() {
        let qrels = parse_qrels("q1 0 d2 1\nq1 0 d9 1\n").unwrap();
        let (dataset, _) = assemble_dataset(&toy_runs(), &qrels).unwrap();
        let panel = &dataset.panels()[0];
        let d9 = panel.doc_index("d9").unwrap();
        assert_eq!(panel.score(d9, 0), 0.0);
        assert_eq!(panel.score(d9, 1), 0.0);
    }

    #[test]
    fn mixed_tags_within_a_run_rejected() {
        let mut runs = toy_runs();
        runs[0][1].tag = "other".into();
        let qrels = parse_qrels("q1 0 d2 1\n").unwrap();
        assert!(assemble_dataset(&runs, &qrels).is_err());
    }
}
