//! EDU-level discourse dependency trees, the on-disk document format,
//! structural validation and corpus statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relation carried by the single arc leaving the artificial root.
pub const ROOT_RELATION: &str = "ROOT";

/// Relation the random baseline assigns to every non-root arc.
pub const MOST_FREQUENT_RELATION: &str = "elab-addition";

/// Fine-grained inventory (26 labels). `ROOT` comes first so that it owns
/// label index 0 in relation models.
pub const FINE_RELATIONS: [&str; 26] = [
    "ROOT",
    "attribution",
    "bg-compare",
    "bg-general",
    "bg-goal",
    "cause",
    "comparison",
    "condition",
    "contrast",
    "elab-addition",
    "elab-aspect",
    "elab-definition",
    "elab-enum_member",
    "elab-example",
    "elab-process_step",
    "enablement",
    "evaluation",
    "exp-evidence",
    "exp-reason",
    "joint",
    "manner-means",
    "progression",
    "result",
    "same-unit",
    "summary",
    "temporal",
];

/// Coarse-grained inventory (17 labels).
pub const COARSE_RELATIONS: [&str; 17] = [
    "ROOT",
    "attribution",
    "background",
    "cause-effect",
    "comparison",
    "condition",
    "contrast",
    "elaboration",
    "enablement",
    "evaluation",
    "explain",
    "joint",
    "manner-means",
    "progression",
    "same-unit",
    "summary",
    "temporal",
];

#[derive(Debug, Error)]
pub enum TreebankError {
    #[error("{file}: {reason}")]
    Parse { file: String, reason: String },

    #[error("document {doc_id}: {rule}")]
    Validation { doc_id: String, rule: Violation },

    #[error("unknown relation label '{0}'")]
    UnknownRelation(String),

    #[error("unknown granularity '{0}' (expected coarse or fine)")]
    UnknownGranularity(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> TreebankError + '_ {
    move |source| TreebankError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Coarse,
    #[default]
    Fine,
}

impl Granularity {
    pub fn inventory(self) -> &'static [&'static str] {
        match self {
            Granularity::Coarse => &COARSE_RELATIONS,
            Granularity::Fine => &FINE_RELATIONS,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Coarse => "coarse",
            Granularity::Fine => "fine",
        })
    }
}

impl FromStr for Granularity {
    type Err = TreebankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coarse" => Ok(Granularity::Coarse),
            "fine" => Ok(Granularity::Fine),
            _ => Err(TreebankError::UnknownGranularity(s.to_owned())),
        }
    }
}

/// Maps a fine label onto its coarse class. Coarse labels map to themselves.
fn coarse_class(name: &str) -> Option<&'static str> {
    let coarse = match name {
        "bg-compare" | "bg-general" | "bg-goal" => "background",
        "cause" | "result" => "cause-effect",
        "exp-evidence" | "exp-reason" => "explain",
        n if n.starts_with("elab-") => "elaboration",
        n => return COARSE_RELATIONS.iter().copied().find(|c| *c == n),
    };
    FINE_RELATIONS.contains(&name).then_some(coarse)
}

/// A relation label from one of the two closed inventories.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationLabel {
    name: &'static str,
    granularity: Granularity,
}

impl RelationLabel {
    pub fn new(name: &str, granularity: Granularity) -> Result<Self, TreebankError> {
        granularity
            .inventory()
            .iter()
            .find(|l| **l == name)
            .map(|l| RelationLabel { name: l, granularity })
            .ok_or_else(|| TreebankError::UnknownRelation(name.to_owned()))
    }

    /// Resolves a label against the fine inventory first, then the coarse one.
    pub fn parse(name: &str) -> Result<Self, TreebankError> {
        RelationLabel::new(name, Granularity::Fine).or_else(|_| RelationLabel::new(name, Granularity::Coarse))
    }

    pub fn root() -> Self {
        RelationLabel {
            name: ROOT_RELATION,
            granularity: Granularity::Fine,
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn is_root(&self) -> bool {
        self.name == ROOT_RELATION
    }

    /// Projects the label onto `granularity`. Coarse labels cannot be refined
    /// and are returned unchanged when asked for the fine view.
    pub fn at(&self, granularity: Granularity) -> RelationLabel {
        match (self.granularity, granularity) {
            (Granularity::Fine, Granularity::Coarse) => RelationLabel {
                name: coarse_class(self.name).expect("fine label has a coarse class"),
                granularity: Granularity::Coarse,
            },
            _ => self.clone(),
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

/// One elementary discourse unit. Real EDUs are numbered 1..k; id 0 is the
/// artificial root and is never stored in a document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edu {
    pub id: usize,
    pub text: String,
    pub sentence_index: usize,
    pub ends_with_period: bool,
}

impl Edu {
    pub fn new(id: usize, text: impl Into<String>, sentence_index: usize) -> Self {
        let text = text.into();
        let ends_with_period = ends_sentence(&text);
        Edu {
            id,
            text,
            sentence_index,
            ends_with_period,
        }
    }

    pub fn root() -> Self {
        Edu {
            id: 0,
            text: String::new(),
            sentence_index: 0,
            ends_with_period: false,
        }
    }

    pub fn is_root(&self) -> bool {
        self.id == 0
    }
}

/// True when `text` ends with sentence-final punctuation (Latin or CJK).
pub fn ends_sentence(text: &str) -> bool {
    matches!(
        text.trim_end().chars().last(),
        Some('.' | '!' | '?' | '。' | '！' | '？')
    )
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arc {
    pub head: usize,
    pub dependent: usize,
    /// `None` for structure-only arcs that have not been labeled yet.
    pub relation: Option<RelationLabel>,
}

impl Arc {
    pub fn new(head: usize, dependent: usize, relation: RelationLabel) -> Self {
        Arc {
            head,
            dependent,
            relation: Some(relation),
        }
    }

    pub fn unlabeled(head: usize, dependent: usize) -> Self {
        Arc {
            head,
            dependent,
            relation: None,
        }
    }
}

/// A document: its real EDUs in order and the head arcs over them.
///
/// A document with no arcs is unannotated (raw input for parsing).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscourseTree {
    pub doc_id: String,
    pub edus: Vec<Edu>,
    pub arcs: Vec<Arc>,
}

impl DiscourseTree {
    pub fn new(doc_id: impl Into<String>, edus: Vec<Edu>, mut arcs: Vec<Arc>) -> Self {
        arcs.sort_by_key(|a| (a.dependent, a.head));
        DiscourseTree {
            doc_id: doc_id.into(),
            edus,
            arcs,
        }
    }

    pub fn unannotated(doc_id: impl Into<String>, edus: Vec<Edu>) -> Self {
        DiscourseTree::new(doc_id, edus, Vec::new())
    }

    /// Number of real EDUs.
    pub fn len(&self) -> usize {
        self.edus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edus.is_empty()
    }

    pub fn is_annotated(&self) -> bool {
        !self.arcs.is_empty()
    }

    /// EDU by id; id 0 is not stored and yields `None`.
    pub fn edu(&self, id: usize) -> Option<&Edu> {
        id.checked_sub(1).and_then(|i| self.edus.get(i))
    }

    /// Head of every EDU indexed by id. Index 0 is always `None`. When an EDU
    /// has several heads the last one wins, so only use this on valid trees.
    pub fn heads(&self) -> Vec<Option<usize>> {
        let mut heads = vec![None; self.len() + 1];
        for arc in &self.arcs {
            if let Some(slot) = heads.get_mut(arc.dependent) {
                *slot = Some(arc.head);
            }
        }
        heads
    }

    pub fn arc_of(&self, dependent: usize) -> Option<&Arc> {
        self.arcs.iter().find(|a| a.dependent == dependent)
    }

    /// Dependents of the artificial root.
    pub fn root_dependents(&self) -> BTreeSet<usize> {
        self.arcs.iter().filter(|a| a.head == 0).map(|a| a.dependent).collect()
    }

    /// Copy of the tree with every relation projected onto `granularity`.
    pub fn at_granularity(&self, granularity: Granularity) -> DiscourseTree {
        let arcs = self
            .arcs
            .iter()
            .map(|a| Arc {
                head: a.head,
                dependent: a.dependent,
                relation: a.relation.as_ref().map(|r| r.at(granularity)),
            })
            .collect();
        DiscourseTree::new(self.doc_id.clone(), self.edus.clone(), arcs)
    }

    /// Same EDUs, no arcs.
    pub fn stripped(&self) -> DiscourseTree {
        DiscourseTree::unannotated(self.doc_id.clone(), self.edus.clone())
    }
}

/// A broken tree invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Violation {
    EmptyDocument,
    EduOrder { position: usize, id: usize },
    RootAsDependent { head: usize },
    UnknownEdu { id: usize },
    MultipleHeads { id: usize },
    Headless { id: usize },
    Cycle { ids: Vec<usize> },
    RootDependents { count: usize },
    RootRelation { id: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDocument => write!(f, "empty-document"),
            Violation::EduOrder { position, id } => {
                write!(f, "edu-order(position {position} has id {id})")
            }
            Violation::RootAsDependent { head } => write!(f, "root-as-dependent(head {head})"),
            Violation::UnknownEdu { id } => write!(f, "unknown-edu({id})"),
            Violation::MultipleHeads { id } => write!(f, "multiple-heads({id})"),
            Violation::Headless { id } => write!(f, "headless({id})"),
            Violation::Cycle { ids } => write!(f, "cycle({ids:?})"),
            Violation::RootDependents { count } => {
                write!(f, "root-dependents(expected 1, found {count})")
            }
            Violation::RootRelation { id } => write!(f, "root-relation({id})"),
        }
    }
}

/// Checks every structural invariant of an annotated tree. Violations are
/// reported in rule order: EDU numbering, arc endpoints, head counts, then
/// cycles and the single root dependent (the last two only when every EDU
/// has exactly one head).
pub fn validate_tree(tree: &DiscourseTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = tree.len();
    if k == 0 {
        out.push(Violation::EmptyDocument);
        return out;
    }
    for (i, edu) in tree.edus.iter().enumerate() {
        if edu.id != i + 1 {
            out.push(Violation::EduOrder {
                position: i + 1,
                id: edu.id,
            });
        }
    }

    let mut heads: Vec<Vec<usize>> = vec![Vec::new(); k + 1];
    let mut endpoints_ok = true;
    for arc in &tree.arcs {
        if arc.dependent == 0 {
            out.push(Violation::RootAsDependent { head: arc.head });
            endpoints_ok = false;
            continue;
        }
        for id in [arc.head, arc.dependent] {
            if id > k {
                out.push(Violation::UnknownEdu { id });
                endpoints_ok = false;
            }
        }
        if arc.dependent <= k && arc.head <= k {
            heads[arc.dependent].push(arc.head);
        }
        if let Some(rel) = &arc.relation {
            if arc.head == 0 && !rel.is_root() {
                out.push(Violation::RootRelation { id: arc.dependent });
            }
        }
    }
    for (id, hs) in heads.iter().enumerate().skip(1) {
        match hs.len() {
            0 => out.push(Violation::Headless { id }),
            1 => {}
            _ => out.push(Violation::MultipleHeads { id }),
        }
    }
    if !endpoints_ok || heads.iter().skip(1).any(|h| h.len() != 1) {
        return out;
    }

    let head: Vec<usize> = heads.iter().map(|h| h.first().copied().unwrap_or(0)).collect();
    out.extend(find_cycles(&head).into_iter().map(|ids| Violation::Cycle { ids }));
    let root_deps = head.iter().skip(1).filter(|h| **h == 0).count();
    if root_deps != 1 {
        out.push(Violation::RootDependents { count: root_deps });
    }
    out
}

/// Cycles in a head function (`head[0]` ignored), each as sorted member ids.
fn find_cycles(head: &[usize]) -> Vec<Vec<usize>> {
    // 0 = unvisited, 1 = on current path, 2 = done
    let mut state = vec![0u8; head.len()];
    state[0] = 2;
    let mut cycles = Vec::new();
    for start in 1..head.len() {
        let mut path = Vec::new();
        let mut node = start;
        while state[node] == 0 {
            state[node] = 1;
            path.push(node);
            node = head[node];
        }
        if state[node] == 1 {
            let pos = path.iter().position(|n| *n == node).expect("node on path");
            let mut ids = path[pos..].to_vec();
            ids.sort_unstable();
            cycles.push(ids);
        }
        for n in path {
            state[n] = 2;
        }
    }
    cycles
}

/// True when every arc is projective: all EDUs strictly between a head and
/// its dependent are descendants of that head (root sits at position 0).
/// Expects a valid tree.
pub fn is_projective(tree: &DiscourseTree) -> bool {
    let head = tree.heads();
    let k = tree.len();
    let dominated_by = |ancestor: usize, mut node: usize| {
        for _ in 0..=k {
            if node == ancestor {
                return true;
            }
            match head.get(node).copied().flatten() {
                Some(h) if node != 0 => node = h,
                _ => return false,
            }
        }
        false
    };
    tree.arcs.iter().all(|arc| {
        let (lo, hi) = if arc.head < arc.dependent {
            (arc.head, arc.dependent)
        } else {
            (arc.dependent, arc.head)
        };
        (lo + 1..hi).all(|between| dominated_by(arc.head, between))
    })
}

/// On-disk EDU record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EduRecord {
    id: usize,
    text: String,
    parent: i64,
    relation: String,
    sentence: usize,
    ends_with_period: bool,
}

/// On-disk document record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DocumentRecord {
    doc_id: String,
    edus: Vec<EduRecord>,
}

impl DocumentRecord {
    fn from_tree(tree: &DiscourseTree) -> Self {
        let edus = tree
            .edus
            .iter()
            .map(|edu| {
                let arc = tree.arc_of(edu.id);
                EduRecord {
                    id: edu.id,
                    text: edu.text.clone(),
                    parent: arc.map_or(-1, |a| a.head as i64),
                    relation: arc
                        .and_then(|a| a.relation.as_ref())
                        .map_or_else(String::new, |r| r.name().to_owned()),
                    sentence: edu.sentence_index,
                    ends_with_period: edu.ends_with_period,
                }
            })
            .collect();
        DocumentRecord {
            doc_id: tree.doc_id.clone(),
            edus,
        }
    }

    fn into_tree(self, origin: &str) -> Result<DiscourseTree, TreebankError> {
        let parse_err = |reason: String| TreebankError::Parse {
            file: origin.to_owned(),
            reason,
        };
        let annotated = self.edus.iter().filter(|e| e.parent >= 0).count();
        let mut edus = Vec::with_capacity(self.edus.len());
        let mut arcs = Vec::with_capacity(annotated);
        for rec in self.edus {
            if rec.parent < -1 {
                return Err(parse_err(format!("EDU {}: invalid parent {}", rec.id, rec.parent)));
            }
            if rec.parent >= 0 {
                let relation = match rec.relation.as_str() {
                    "" => None,
                    name => Some(RelationLabel::parse(name).map_err(|e| parse_err(e.to_string()))?),
                };
                arcs.push(Arc {
                    head: rec.parent as usize,
                    dependent: rec.id,
                    relation,
                });
            } else if !rec.relation.is_empty() {
                return Err(parse_err(format!("EDU {}: relation without a parent", rec.id)));
            }
            edus.push(Edu {
                id: rec.id,
                text: rec.text,
                sentence_index: rec.sentence,
                ends_with_period: rec.ends_with_period,
            });
        }
        let tree = DiscourseTree::new(self.doc_id, edus, arcs);

        let mut violations = if annotated == 0 {
            validate_tree(&tree)
                .into_iter()
                .filter(|v| !matches!(v, Violation::Headless { .. }))
                .collect()
        } else {
            validate_tree(&tree)
        };
        if violations.is_empty() {
            Ok(tree)
        } else {
            Err(TreebankError::Validation {
                doc_id: tree.doc_id,
                rule: violations.remove(0),
            })
        }
    }
}

/// Parses one document record. `origin` names the source in error messages.
pub fn parse_document(json: &str, origin: &str) -> Result<DiscourseTree, TreebankError> {
    let record: DocumentRecord = serde_json::from_str(json).map_err(|e| TreebankError::Parse {
        file: origin.to_owned(),
        reason: e.to_string(),
    })?;
    record.into_tree(origin)
}

/// Canonical serialization: pretty JSON with a trailing newline.
pub fn document_to_json(tree: &DiscourseTree) -> String {
    let mut s = serde_json::to_string_pretty(&DocumentRecord::from_tree(tree)).expect("document record serializes");
    s.push('\n');
    s
}

pub fn load_document(path: &Path) -> Result<DiscourseTree, TreebankError> {
    let json = fs::read_to_string(path).map_err(io_error(path))?;
    parse_document(&json, &path.display().to_string())
}

/// `*.json` files of a corpus directory in lexicographic filename order.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, TreebankError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_error(dir))? {
        let path = entry.map_err(io_error(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Loads every document of a corpus directory.
pub fn load_corpus(dir: &Path) -> Result<Vec<DiscourseTree>, TreebankError> {
    corpus_files(dir)?.iter().map(|p| load_document(p)).collect()
}

/// One node of a SciDTB `.dep` file.
#[derive(Deserialize)]
struct SciDtbNode {
    id: usize,
    parent: i64,
    text: String,
    relation: String,
}

#[derive(Deserialize)]
struct SciDtbDocument {
    root: Vec<SciDtbNode>,
}

const SCIDTB_SENTENCE_MARK: &str = "<S>";

/// Converts a SciDTB `.dep` document. Sentence boundaries come from the
/// `<S>` markers, relation names are lowercased and root arcs become `ROOT`.
pub fn import_scidtb(json: &str, doc_id: &str) -> Result<DiscourseTree, TreebankError> {
    let parse_err = |reason: String| TreebankError::Parse {
        file: doc_id.to_owned(),
        reason,
    };
    let doc: SciDtbDocument = serde_json::from_str(json).map_err(|e| parse_err(e.to_string()))?;
    let mut edus = Vec::new();
    let mut arcs = Vec::new();
    let mut sentence = 1;
    for node in doc.root.into_iter().filter(|n| n.id != 0) {
        let ends_sentence_mark = node.text.contains(SCIDTB_SENTENCE_MARK);
        let text = node.text.replace(SCIDTB_SENTENCE_MARK, " ").trim().to_owned();
        edus.push(Edu::new(node.id, text, sentence));
        if ends_sentence_mark {
            sentence += 1;
        }
        if node.parent < 0 {
            return Err(parse_err(format!("EDU {} has no parent", node.id)));
        }
        let relation = if node.parent == 0 {
            RelationLabel::root()
        } else {
            RelationLabel::new(&node.relation.trim().to_lowercase(), Granularity::Fine)
                .map_err(|e| parse_err(e.to_string()))?
        };
        arcs.push(Arc::new(node.parent as usize, node.id, relation));
    }
    let tree = DiscourseTree::new(doc_id, edus, arcs);
    match validate_tree(&tree).into_iter().next() {
        None => Ok(tree),
        Some(rule) => Err(TreebankError::Validation {
            doc_id: tree.doc_id,
            rule,
        }),
    }
}

/// File name a document is saved under.
pub fn document_file_name(tree: &DiscourseTree) -> String {
    let stem: String = tree
        .doc_id
        .chars()
        .map(|c| if matches!(c, '/' | '\\' | '\0') { '_' } else { c })
        .collect();
    format!("{stem}.json")
}

pub fn save_document(tree: &DiscourseTree, path: &Path) -> Result<(), TreebankError> {
    fs::write(path, document_to_json(tree)).map_err(io_error(path))
}

/// Writes one `<doc_id>.json` per document into `dir`, creating it if needed.
pub fn save_corpus(corpus: &[DiscourseTree], dir: &Path) -> Result<(), TreebankError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    for tree in corpus {
        save_document(tree, &dir.join(document_file_name(tree)))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelationFrequency {
    pub relation: String,
    pub count: usize,
    pub percentage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub n_docs: usize,
    /// Includes one artificial root per document.
    pub n_edus: usize,
    pub n_relations: usize,
    pub avg_edus_per_doc: f64,
    pub avg_edus_per_sentence: f64,
    pub avg_chars_per_edu: f64,
    /// Sorted by descending count, then by name.
    pub relation_freq: Vec<RelationFrequency>,
}

pub fn corpus_stats(corpus: &[DiscourseTree]) -> Result<CorpusStats, TreebankError> {
    if corpus.is_empty() {
        return Err(TreebankError::EmptyCorpus);
    }
    let n_docs = corpus.len();
    let real_edus: usize = corpus.iter().map(DiscourseTree::len).sum();
    let n_sentences: usize = corpus
        .iter()
        .map(|t| t.edus.iter().map(|e| e.sentence_index).collect::<BTreeSet<_>>().len())
        .sum();
    let chars: usize = corpus
        .iter()
        .flat_map(|t| &t.edus)
        .map(|e| e.text.trim().chars().count())
        .sum();

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut n_relations = 0;
    for arc in corpus.iter().flat_map(|t| &t.arcs) {
        n_relations += 1;
        if let Some(rel) = &arc.relation {
            *counts.entry(rel.name()).or_default() += 1;
        }
    }
    let labeled: usize = counts.values().sum();
    let mut relation_freq: Vec<RelationFrequency> = counts
        .into_iter()
        .map(|(name, count)| RelationFrequency {
            relation: name.to_owned(),
            count,
            percentage: 100.0 * count as f64 / labeled as f64,
        })
        .collect();
    relation_freq.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.relation.cmp(&b.relation)));

    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(CorpusStats {
        n_docs,
        n_edus: real_edus + n_docs,
        n_relations,
        avg_edus_per_doc: ratio(real_edus, n_docs),
        avg_edus_per_sentence: ratio(real_edus, n_sentences),
        avg_chars_per_edu: ratio(chars, real_edus),
        relation_freq,
    })
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "documents            {}", self.n_docs)?;
        writeln!(f, "EDUs (incl. roots)   {}", self.n_edus)?;
        writeln!(f, "relations            {}", self.n_relations)?;
        writeln!(f, "EDUs per document    {:.2}", self.avg_edus_per_doc)?;
        writeln!(f, "EDUs per sentence    {:.2}", self.avg_edus_per_sentence)?;
        writeln!(f, "characters per EDU   {:.2}", self.avg_chars_per_edu)?;
        writeln!(f)?;
        writeln!(f, "{:<20} {:>9} {:>8}", "relation", "frequency", "%")?;
        for row in &self.relation_freq {
            writeln!(f, "{:<20} {:>9} {:>8.2}", row.relation, row.count, row.percentage)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tree_from_heads(heads: &[(usize, usize)]) -> DiscourseTree {
        let k = heads.len();
        let edus = (1..=k).map(|i| Edu::new(i, format!("edu {i}"), 1)).collect();
        let arcs = heads.iter().map(|&(h, d)| Arc::unlabeled(h, d)).collect();
        DiscourseTree::new("t", edus, arcs)
    }

    #[test]
    fn inventories_have_published_sizes() {
        assert_eq!(FINE_RELATIONS.len(), 26);
        assert_eq!(COARSE_RELATIONS.len(), 17);
        for name in FINE_RELATIONS {
            let coarse = RelationLabel::new(name, Granularity::Fine)
                .unwrap()
                .at(Granularity::Coarse);
            assert!(COARSE_RELATIONS.contains(&coarse.name()), "{name}");
        }
        for name in ["elab-addition", "joint", "enablement", "bg-general", "evaluation"] {
            assert!(FINE_RELATIONS.contains(&name));
        }
    }

    #[test]
    fn coarse_projection() {
        let l = RelationLabel::parse("bg-goal").unwrap();
        assert_eq!(l.at(Granularity::Coarse).name(), "background");
        let c = RelationLabel::parse("background").unwrap();
        assert_eq!(c.granularity(), Granularity::Coarse);
        assert_eq!(c.at(Granularity::Fine), c);
        assert!(RelationLabel::parse("made-up").is_err());
    }

    #[test]
    fn validate_accepts_nested_tree() {
        let t = tree_from_heads(&[(0, 2), (2, 1), (2, 3)]);
        assert!(validate_tree(&t).is_empty());
    }

    #[test]
    fn validate_reports_multiple_heads() {
        let mut t = tree_from_heads(&[(0, 1), (1, 2)]);
        t.arcs.push(Arc::unlabeled(2, 1));
        assert_eq!(validate_tree(&t), vec![Violation::MultipleHeads { id: 1 }]);
    }

    #[test]
    fn validate_reports_headless() {
        let t = DiscourseTree::new(
            "t",
            (1..=3).map(|i| Edu::new(i, "x", 1)).collect(),
            vec![Arc::unlabeled(0, 2), Arc::unlabeled(2, 1)],
        );
        assert_eq!(validate_tree(&t), vec![Violation::Headless { id: 3 }]);
    }

    #[test]
    fn validate_reports_cycles_and_root_count() {
        let t = tree_from_heads(&[(0, 1), (3, 2), (2, 3)]);
        assert_eq!(validate_tree(&t), vec![Violation::Cycle { ids: vec![2, 3] }]);
        let t = tree_from_heads(&[(0, 1), (0, 2)]);
        assert_eq!(validate_tree(&t), vec![Violation::RootDependents { count: 2 }]);
        let t = tree_from_heads(&[(1, 1)]);
        assert_eq!(
            validate_tree(&t),
            vec![
                Violation::Cycle { ids: vec![1] },
                Violation::RootDependents { count: 0 }
            ]
        );
    }

    #[test]
    fn validate_reports_root_as_dependent_and_bad_root_label() {
        let mut t = tree_from_heads(&[(0, 1)]);
        t.arcs.push(Arc::unlabeled(1, 0));
        assert!(validate_tree(&t).contains(&Violation::RootAsDependent { head: 1 }));

        let edus = vec![Edu::new(1, "a", 1)];
        let t = DiscourseTree::new("t", edus, vec![Arc::new(0, 1, RelationLabel::parse("joint").unwrap())]);
        assert_eq!(validate_tree(&t), vec![Violation::RootRelation { id: 1 }]);
    }

    #[test]
    fn projectivity_examples() {
        assert!(is_projective(&tree_from_heads(&[(0, 2), (2, 1), (2, 3)])));
        assert!(is_projective(&tree_from_heads(&[(0, 1), (1, 3), (3, 2)])));
        assert!(!is_projective(&tree_from_heads(&[(0, 2), (2, 4), (4, 1), (1, 3)])));
    }

    #[test]
    fn stats_for_tiny_corpora() {
        let one = DiscourseTree::new(
            "a",
            vec![Edu::new(1, "only one", 1)],
            vec![Arc::new(0, 1, RelationLabel::root())],
        );
        let s = corpus_stats(std::slice::from_ref(&one)).unwrap();
        assert_eq!((s.n_docs, s.n_edus, s.n_relations), (1, 2, 1));
        assert_eq!(s.avg_edus_per_doc, 1.0);
        assert_eq!(s.avg_chars_per_edu, 8.0);

        let two = tree_from_heads(&[(0, 1), (1, 2)]);
        let four = tree_from_heads(&[(0, 1), (1, 2), (1, 3), (1, 4)]);
        let s = corpus_stats(&[two, four]).unwrap();
        assert_eq!(s.avg_edus_per_doc, 3.0);
        assert_eq!(s.n_relations, s.n_edus - s.n_docs);

        assert!(matches!(corpus_stats(&[]), Err(TreebankError::EmptyCorpus)));
    }

    #[test]
    fn stats_percentages_and_order() {
        let rel = |n| RelationLabel::parse(n).unwrap();
        let t = DiscourseTree::new(
            "d",
            (1..=4).map(|i| Edu::new(i, "中文文本，", 1)).collect(),
            vec![
                Arc::new(0, 1, rel("ROOT")),
                Arc::new(1, 2, rel("joint")),
                Arc::new(1, 3, rel("elab-addition")),
                Arc::new(1, 4, rel("elab-addition")),
            ],
        );
        let s = corpus_stats(&[t]).unwrap();
        assert_eq!(s.relation_freq[0].relation, "elab-addition");
        assert_eq!(s.relation_freq[0].count, 2);
        let total: f64 = s.relation_freq.iter().map(|r| r.percentage).sum();
        assert!((total - 100.0).abs() < 0.01);
        assert_eq!(s.avg_chars_per_edu, 5.0);
    }

    #[test]
    fn parse_rejects_self_head() {
        let json = r#"{"doc_id":"x","edus":[
            {"id":1,"text":"a","parent":1,"relation":"joint","sentence":1,"ends_with_period":false}]}"#;
        match parse_document(json, "x.json") {
            Err(TreebankError::Validation {
                rule: Violation::Cycle { ids },
                ..
            }) => assert_eq!(ids, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_accepts_unannotated_and_rejects_partial() {
        let raw = r#"{"doc_id":"x","edus":[
            {"id":1,"text":"a","parent":-1,"relation":"","sentence":1,"ends_with_period":false},
            {"id":2,"text":"b","parent":-1,"relation":"","sentence":1,"ends_with_period":true}]}"#;
        let t = parse_document(raw, "x").unwrap();
        assert!(!t.is_annotated());
        assert_eq!(t.len(), 2);

        let partial = raw.replacen(
            "\"parent\":-1,\"relation\":\"\"",
            "\"parent\":0,\"relation\":\"ROOT\"",
            1,
        );
        assert!(matches!(
            parse_document(&partial, "x"),
            Err(TreebankError::Validation {
                rule: Violation::Headless { id: 2 },
                ..
            })
        ));
    }

    #[test]
    fn parse_rejects_malformed_records() {
        assert!(matches!(
            parse_document("{\"doc_id\": 3}", "bad"),
            Err(TreebankError::Parse { .. })
        ));
        let bad_rel = r#"{"doc_id":"x","edus":[
            {"id":1,"text":"a","parent":0,"relation":"nonsense","sentence":1,"ends_with_period":false}]}"#;
        assert!(matches!(parse_document(bad_rel, "x"), Err(TreebankError::Parse { .. })));
    }

    #[test]
    fn canonical_round_trip() {
        let t = DiscourseTree::new(
            "doc-1",
            vec![
                Edu::new(1, "We propose a parser,", 1),
                Edu::new(2, "which is \"fast\".", 1),
            ],
            vec![
                Arc::new(0, 1, RelationLabel::root()),
                Arc::new(1, 2, RelationLabel::parse("elab-addition").unwrap()),
            ],
        );
        let json = document_to_json(&t);
        let back = parse_document(&json, "mem").unwrap();
        assert_eq!(back, t);
        assert_eq!(document_to_json(&back), json);
    }

    #[test]
    fn scidtb_import() {
        let json = r#"{"root": [
            {"id": 0, "parent": -1, "text": "ROOT", "relation": "null"},
            {"id": 1, "parent": 0, "text": "We propose a parser <S>", "relation": "ROOT"},
            {"id": 2, "parent": 1, "text": "that is fast . <S>", "relation": "Elab-addition"},
            {"id": 3, "parent": 1, "text": "It works . <S>", "relation": "evaluation"}
        ]}"#;
        let t = import_scidtb(json, "D14-1001").unwrap();
        assert_eq!(t.edus[1].text, "that is fast .");
        assert!(t.edus[1].ends_with_period);
        assert_eq!(t.edus.iter().map(|e| e.sentence_index).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(t.arc_of(2).unwrap().relation.as_ref().unwrap().name(), "elab-addition");
        assert!(t.arc_of(1).unwrap().relation.as_ref().unwrap().is_root());
        let bad = json.replace("evaluation", "nonsense");
        assert!(import_scidtb(&bad, "x").is_err());
    }
}
