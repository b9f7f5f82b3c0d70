//! Attachment scores, topic-EDU accuracy, annotator agreement and the
//! cumulative ablation of the pipeline modifications.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::parser::ParserModel;
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineError, TranslationAdapter};
use crate::treebank::{DiscourseTree, Granularity};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{doc_id}: {reason}")]
    Mismatch { doc_id: String, reason: String },

    #[error("no documents to score")]
    Empty,

    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

fn mismatch(doc_id: &str, reason: impl Into<String>) -> EvalError {
    EvalError::Mismatch {
        doc_id: doc_id.to_owned(),
        reason: reason.into(),
    }
}

/// Per-EDU tallies; the artificial root is never counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AttachmentCounts {
    pub total: usize,
    pub head_correct: usize,
    pub label_correct: usize,
}

impl AttachmentCounts {
    pub fn uas(&self) -> f64 {
        ratio(self.head_correct, self.total)
    }

    pub fn las(&self) -> f64 {
        ratio(self.label_correct, self.total)
    }
}

impl std::ops::Add for AttachmentCounts {
    type Output = AttachmentCounts;

    fn add(self, o: AttachmentCounts) -> AttachmentCounts {
        AttachmentCounts {
            total: self.total + o.total,
            head_correct: self.head_correct + o.head_correct,
            label_correct: self.label_correct + o.label_correct,
        }
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Compares `pred` against `gold` EDU by EDU. Relations are compared after
/// projecting both onto `granularity`.
pub fn attachment_counts(
    pred: &DiscourseTree,
    gold: &DiscourseTree,
    granularity: Granularity,
) -> Result<AttachmentCounts, EvalError> {
    if pred.edus.len() != gold.edus.len() {
        return Err(mismatch(
            &gold.doc_id,
            format!(
                "{} predicted EDUs against {} gold EDUs",
                pred.edus.len(),
                gold.edus.len()
            ),
        ));
    }
    if let Some((p, g)) = pred.edus.iter().zip(&gold.edus).find(|(p, g)| p.id != g.id) {
        return Err(mismatch(
            &gold.doc_id,
            format!("EDU id {} does not match gold id {}", p.id, g.id),
        ));
    }
    let mut counts = AttachmentCounts::default();
    for edu in &gold.edus {
        let g = gold
            .arc_of(edu.id)
            .ok_or_else(|| mismatch(&gold.doc_id, format!("gold EDU {} has no head", edu.id)))?;
        counts.total += 1;
        let Some(p) = pred.arc_of(edu.id) else { continue };
        if p.head != g.head {
            continue;
        }
        counts.head_correct += 1;
        let same = match (&p.relation, &g.relation) {
            (Some(a), Some(b)) => a.at(granularity).name() == b.at(granularity).name(),
            _ => false,
        };
        if same {
            counts.label_correct += 1;
        }
    }
    Ok(counts)
}

pub fn uas(pred: &DiscourseTree, gold: &DiscourseTree) -> Result<f64, EvalError> {
    Ok(attachment_counts(pred, gold, Granularity::Fine)?.uas())
}

pub fn las(pred: &DiscourseTree, gold: &DiscourseTree) -> Result<f64, EvalError> {
    las_at(pred, gold, Granularity::Fine)
}

pub fn las_at(pred: &DiscourseTree, gold: &DiscourseTree, granularity: Granularity) -> Result<f64, EvalError> {
    Ok(attachment_counts(pred, gold, granularity)?.las())
}

/// Pairs documents by id. Both sides must hold exactly the same ids.
fn align<'a>(
    preds: &'a [DiscourseTree],
    golds: &'a [DiscourseTree],
) -> Result<Vec<(&'a DiscourseTree, &'a DiscourseTree)>, EvalError> {
    let mut by_id = BTreeMap::new();
    for p in preds {
        if by_id.insert(p.doc_id.as_str(), p).is_some() {
            return Err(mismatch(&p.doc_id, "duplicate predicted document"));
        }
    }
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::with_capacity(golds.len());
    for g in golds {
        if !seen.insert(g.doc_id.as_str()) {
            return Err(mismatch(&g.doc_id, "duplicate gold document"));
        }
        let p = by_id
            .get(g.doc_id.as_str())
            .ok_or_else(|| mismatch(&g.doc_id, "no prediction for gold document"))?;
        pairs.push((*p, g));
    }
    if let Some(extra) = by_id.keys().find(|id| !seen.contains(*id)) {
        return Err(mismatch(extra, "prediction has no gold document"));
    }
    Ok(pairs)
}

fn topic_correct(pred: &DiscourseTree, gold: &DiscourseTree) -> bool {
    pred.root_dependents() == gold.root_dependents()
}

/// Fraction of documents whose set of root dependents matches gold exactly.
pub fn topic_edu_accuracy(preds: &[DiscourseTree], golds: &[DiscourseTree]) -> Result<f64, EvalError> {
    let pairs = align(preds, golds)?;
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let correct = pairs.iter().filter(|(p, g)| topic_correct(p, g)).count();
    Ok(ratio(correct, pairs.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DocScore {
    pub doc_id: String,
    pub uas: f64,
    pub las: f64,
    pub topic_correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub uas: f64,
    pub las: f64,
    pub topic_acc: f64,
    pub n_docs: usize,
    pub n_edus_scored: usize,
    /// Corpus scores pool EDUs across documents; `per_doc` holds the
    /// per-document view.
    pub averaging: &'static str,
    pub granularity: Granularity,
    pub per_doc: Vec<DocScore>,
}

/// Scores predictions against gold documents matched by `doc_id`.
pub fn evaluate(
    preds: &[DiscourseTree],
    golds: &[DiscourseTree],
    granularity: Granularity,
) -> Result<EvalReport, EvalError> {
    let pairs = align(preds, golds)?;
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let scored: Vec<(AttachmentCounts, bool)> = pairs
        .par_iter()
        .map(|(p, g)| Ok((attachment_counts(p, g, granularity)?, topic_correct(p, g))))
        .collect::<Result<_, EvalError>>()?;
    let total = scored.iter().fold(AttachmentCounts::default(), |acc, (c, _)| acc + *c);
    let topic_hits = scored.iter().filter(|(_, t)| *t).count();
    let per_doc = pairs
        .iter()
        .zip(&scored)
        .map(|((_, g), (c, t))| DocScore {
            doc_id: g.doc_id.clone(),
            uas: c.uas(),
            las: c.las(),
            topic_correct: *t,
        })
        .collect();
    Ok(EvalReport {
        uas: total.uas(),
        las: total.las(),
        topic_acc: ratio(topic_hits, pairs.len()),
        n_docs: pairs.len(),
        n_edus_scored: total.total,
        averaging: "micro",
        granularity,
        per_doc,
    })
}

/// Agreement between two annotations of the same documents, with `a` scored
/// against `b`.
pub fn agreement(a: &[DiscourseTree], b: &[DiscourseTree], granularity: Granularity) -> Result<(f64, f64), EvalError> {
    let report = evaluate(a, b, granularity)?;
    Ok((report.uas, report.las))
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "documents   {}", self.n_docs)?;
        writeln!(f, "EDUs        {}", self.n_edus_scored)?;
        writeln!(f, "granularity {}", self.granularity)?;
        writeln!(f, "averaging   {}", self.averaging)?;
        writeln!(f, "UAS         {:.3}", self.uas)?;
        writeln!(f, "LAS         {:.3}", self.las)?;
        writeln!(f, "topic acc   {:.3}", self.topic_acc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub config: String,
    pub uas: f64,
    pub las: f64,
    pub topic_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationReport {
    pub n_docs: usize,
    pub granularity: Granularity,
    pub averaging: &'static str,
    pub rows: Vec<AblationRow>,
}

/// Direct parsing followed by the modifications switched on one at a time,
/// in order: pronoun adjustment, punctuation, two-part parsing.
pub fn cumulative_grid(base: &PipelineConfig) -> Vec<(String, PipelineConfig)> {
    [
        ("Direct parsing", false, false, false),
        ("+ Relative Pronoun Adjustment", true, false, false),
        ("+ Punctuation Modification", true, true, false),
        ("+ Two-part Parsing", true, true, true),
    ]
    .into_iter()
    .map(|(name, pronoun, punct, two_part)| (name.to_owned(), base.clone().with_toggles(pronoun, punct, two_part)))
    .collect()
}

/// Runs the pipeline over stripped copies of `golds` once per grid entry
/// and scores each run.
pub fn ablation_report(
    golds: &[DiscourseTree],
    model: &ParserModel,
    adapter: &dyn TranslationAdapter,
    grid: &[(String, PipelineConfig)],
    granularity: Granularity,
) -> Result<AblationReport, EvalError> {
    if golds.is_empty() {
        return Err(EvalError::Empty);
    }
    let rows = grid
        .iter()
        .map(|(name, config)| {
            let preds = golds
                .par_iter()
                .map(|g| run_pipeline(&g.stripped(), config, model, adapter))
                .collect::<Result<Vec<_>, _>>()?;
            let report = evaluate(&preds, golds, granularity)?;
            Ok(AblationRow {
                config: name.clone(),
                uas: report.uas,
                las: report.las,
                topic_acc: report.topic_acc,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(AblationReport {
        n_docs: golds.len(),
        granularity,
        averaging: "micro",
        rows,
    })
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.config.chars().count())
            .max()
            .unwrap_or(0)
            .max(6);
        writeln!(
            f,
            "{:<width$}  {:>5}  {:>5}  {:>9}",
            "Config", "UAS", "LAS", "Topic acc"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:.3}  {:.3}  {:>9.3}",
                r.config, r.uas, r.las, r.topic_acc
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{Arc, Edu, RelationLabel};

    fn tree(id: &str, arcs: &[(usize, usize, &str)]) -> DiscourseTree {
        let edus = (1..=arcs.len()).map(|i| Edu::new(i, format!("e{i}"), 1)).collect();
        let arcs = arcs
            .iter()
            .map(|&(h, d, r)| Arc::new(h, d, RelationLabel::parse(r).unwrap()))
            .collect();
        DiscourseTree::new(id, edus, arcs)
    }

    fn gold() -> DiscourseTree {
        tree(
            "d",
            &[
                (0, 1, "ROOT"),
                (1, 2, "elab-addition"),
                (1, 3, "result"),
                (3, 4, "bg-general"),
            ],
        )
    }

    #[test]
    fn identical_trees_score_one() {
        let g = gold();
        assert_eq!(uas(&g, &g).unwrap(), 1.0);
        assert_eq!(las(&g, &g).unwrap(), 1.0);
    }

    #[test]
    fn three_of_four_heads() {
        let p = tree(
            "d",
            &[
                (0, 1, "ROOT"),
                (1, 2, "elab-addition"),
                (1, 3, "result"),
                (1, 4, "bg-general"),
            ],
        );
        assert_eq!(uas(&p, &gold()).unwrap(), 0.75);
        assert_eq!(las(&p, &gold()).unwrap(), 0.75);
    }

    #[test]
    fn labels_compared_at_granularity() {
        let p = tree(
            "d",
            &[
                (0, 1, "ROOT"),
                (1, 2, "elab-aspect"),
                (1, 3, "cause"),
                (3, 4, "bg-compare"),
            ],
        );
        assert_eq!(las(&p, &gold()).unwrap(), 0.25);
        assert_eq!(las_at(&p, &gold(), Granularity::Coarse).unwrap(), 1.0);
    }

    #[test]
    fn mismatched_documents() {
        let short = tree("d", &[(0, 1, "ROOT")]);
        assert!(matches!(uas(&short, &gold()), Err(EvalError::Mismatch { .. })));
        let other = tree(
            "x",
            &[
                (0, 1, "ROOT"),
                (1, 2, "elab-addition"),
                (1, 3, "result"),
                (3, 4, "bg-general"),
            ],
        );
        assert!(evaluate(&[other], &[gold()], Granularity::Fine).is_err());
        assert!(matches!(evaluate(&[], &[], Granularity::Fine), Err(EvalError::Empty)));
    }

    #[test]
    fn topic_accuracy() {
        let a = gold();
        let b = tree("e", &[(0, 1, "ROOT"), (0, 2, "ROOT")]);
        let b_pred = tree("e", &[(0, 1, "ROOT"), (1, 2, "ROOT")]);
        assert_eq!(
            topic_edu_accuracy(&[a.clone(), b.clone()], &[a.clone(), b.clone()]).unwrap(),
            1.0
        );
        assert_eq!(topic_edu_accuracy(&[b_pred, a.clone()], &[a, b]).unwrap(), 0.5);
    }

    #[test]
    fn report_pools_edus() {
        let g2 = tree("e", &[(0, 1, "ROOT"), (1, 2, "result")]);
        let p2 = tree("e", &[(2, 1, "result"), (0, 2, "ROOT")]);
        let r = evaluate(&[gold(), p2], &[gold(), g2], Granularity::Fine).unwrap();
        assert_eq!(r.n_edus_scored, 6);
        assert!((r.uas - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.topic_acc, 0.5);
        assert_eq!(r.per_doc[1].uas, 0.0);
        assert_eq!(r.averaging, "micro");
        assert_eq!(agreement(&[gold()], &[gold()], Granularity::Fine).unwrap(), (1.0, 1.0));
    }
}
