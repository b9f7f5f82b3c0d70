//! Two-stage discourse dependency parser: a greedy arc-standard decoder
//! driven by the action classifier, followed by per-arc relation labeling.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::classifier::{self, ClassifierError, Example, LinearModel, Lines, TrainConfig};
use crate::features::{extract_relation_features, extract_structure_features};
use crate::transition::{oracle_actions, Action, ParserState, TransitionError};
use crate::treebank::{
    is_projective, validate_tree, Arc, DiscourseTree, Edu, Granularity, RelationLabel, MOST_FREQUENT_RELATION,
};

const PARSER_MAGIC: &str = "ddparse-parser";
const PARSER_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum ParserError {
    #[error("no projective tree to train the action classifier on")]
    NoTrainableTrees,

    #[error("document {0} has no EDUs")]
    EmptyDocument(String),

    #[error("action model labels must be Shift, LeftArc, RightArc (got {0:?})")]
    ActionLabels(Vec<String>),

    #[error("relation model label '{0}' is not in the inventory")]
    RelationLabel(String),

    #[error(transparent)]
    Classifier(#[from] ClassifierError),

    #[error(transparent)]
    Transition(#[from] TransitionError),

    #[error("parser file error at line {line}: {reason}")]
    Format { line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Stage-1 action classifier plus stage-2 relation classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct ParserModel {
    action_model: LinearModel,
    relation_model: LinearModel,
    granularity: Granularity,
}

fn action_labels() -> Vec<String> {
    Action::ALL.iter().map(|a| a.name().to_owned()).collect()
}

fn relation_labels(granularity: Granularity) -> Vec<String> {
    granularity.inventory().iter().map(|l| (*l).to_owned()).collect()
}

impl ParserModel {
    pub fn new(
        action_model: LinearModel,
        relation_model: LinearModel,
        granularity: Granularity,
    ) -> Result<Self, ParserError> {
        if action_model.labels() != action_labels().as_slice() {
            return Err(ParserError::ActionLabels(action_model.labels().to_vec()));
        }
        for label in relation_model.labels() {
            RelationLabel::new(label, granularity).map_err(|_| ParserError::RelationLabel(label.clone()))?;
        }
        Ok(ParserModel {
            action_model,
            relation_model,
            granularity,
        })
    }

    /// All-zero model; every decision falls to the tie-break order.
    pub fn untrained(granularity: Granularity) -> Self {
        ParserModel {
            action_model: LinearModel::zeros(action_labels()),
            relation_model: LinearModel::zeros(relation_labels(granularity)),
            granularity,
        }
    }

    pub fn action_model(&self) -> &LinearModel {
        &self.action_model
    }

    pub fn relation_model(&self) -> &LinearModel {
        &self.relation_model
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{PARSER_MAGIC} v{PARSER_VERSION}\ngranularity\t{}\n", self.granularity);
        self.action_model.write_text(&mut out);
        self.relation_model.write_text(&mut out);
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ParserError> {
        let mut lines = Lines::new(text);
        let (n, header) = lines.require("parser header")?;
        let format_err = |line: usize, reason: &str| ParserError::Format {
            line,
            reason: reason.to_owned(),
        };
        match header.strip_prefix(PARSER_MAGIC).and_then(|v| v.strip_prefix(" v")) {
            Some(PARSER_VERSION) => {}
            Some(other) => {
                return Err(ClassifierError::VersionMismatch {
                    found: other.to_owned(),
                }
                .into())
            }
            None => return Err(format_err(n, "missing parser header")),
        }
        let (n, gran) = lines.require("granularity")?;
        let granularity = gran
            .strip_prefix("granularity\t")
            .and_then(|g| g.parse().ok())
            .ok_or_else(|| format_err(n, "bad granularity line"))?;
        let action_model = LinearModel::read_text(&mut lines)?;
        let relation_model = LinearModel::read_text(&mut lines)?;
        if let Some((n, _)) = lines.next_nonempty() {
            return Err(format_err(n, "trailing content after relation model"));
        }
        ParserModel::new(action_model, relation_model, granularity)
    }

    pub fn save(&self, path: &Path) -> Result<(), ParserError> {
        fs::write(path, self.to_text()).map_err(|source| ParserError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ParserError> {
        let text = fs::read_to_string(path).map_err(|source| ParserError::Io {
            path: path.to_owned(),
            source,
        })?;
        ParserModel::from_text(&text)
    }
}

/// Training examples for both stages.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub actions: Vec<Example>,
    pub relations: Vec<Example>,
    pub n_docs: usize,
    /// Documents left out of stage 1 because no arc-standard derivation exists.
    pub skipped_non_projective: Vec<String>,
}

/// Collects stage-1 examples along each projective gold derivation and
/// stage-2 examples from every labeled gold arc (non-projective trees
/// included). Relations are projected onto `granularity`.
pub fn collect_examples(corpus: &[DiscourseTree], granularity: Granularity) -> Result<TrainingSet, ParserError> {
    let mut set = TrainingSet {
        n_docs: corpus.len(),
        ..TrainingSet::default()
    };
    for tree in corpus {
        if let Some(violation) = validate_tree(tree).into_iter().next() {
            return Err(TransitionError::InvalidTree {
                doc_id: tree.doc_id.clone(),
                violation,
            }
            .into());
        }
        if is_projective(tree) {
            let mut state = ParserState::initial(tree.len())?;
            for action in oracle_actions(tree)? {
                set.actions
                    .push((extract_structure_features(&state, &tree.edus), action.name().to_owned()));
                state.apply_mut(action)?;
            }
        } else {
            set.skipped_non_projective.push(tree.doc_id.clone());
        }
        for arc in &tree.arcs {
            if let Some(rel) = &arc.relation {
                set.relations.push((
                    extract_relation_features(arc, &tree.edus),
                    rel.at(granularity).name().to_owned(),
                ));
            }
        }
    }
    Ok(set)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainSummary {
    pub n_docs: usize,
    pub skipped_non_projective: Vec<String>,
    pub n_action_examples: usize,
    pub n_relation_examples: usize,
    pub n_relation_labels: usize,
}

pub fn train_parser(
    corpus: &[DiscourseTree],
    config: &TrainConfig,
    granularity: Granularity,
) -> Result<(ParserModel, TrainSummary), ParserError> {
    let set = collect_examples(corpus, granularity)?;
    train_from_examples(&set, config, granularity)
}

pub fn train_from_examples(
    set: &TrainingSet,
    config: &TrainConfig,
    granularity: Granularity,
) -> Result<(ParserModel, TrainSummary), ParserError> {
    if set.actions.is_empty() {
        return Err(ParserError::NoTrainableTrees);
    }
    let action_model = classifier::train_with_labels(&set.actions, &action_labels(), config)?;
    let labels = relation_labels(granularity);
    let relation_model = if set.relations.is_empty() {
        LinearModel::zeros(labels)
    } else {
        classifier::train_with_labels(&set.relations, &labels, config)?
    };
    let summary = TrainSummary {
        n_docs: set.n_docs,
        skipped_non_projective: set.skipped_non_projective.clone(),
        n_action_examples: set.actions.len(),
        n_relation_examples: set.relations.len(),
        n_relation_labels: relation_model.labels().len(),
    };
    Ok((ParserModel::new(action_model, relation_model, granularity)?, summary))
}

/// Fraction of stage-1 examples whose unmasked prediction differs from the
/// oracle action.
pub fn action_error_rate(model: &ParserModel, examples: &[Example]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let wrong = examples
        .iter()
        .filter(|(fv, gold)| model.action_model.predict(fv) != gold)
        .count();
    wrong as f64 / examples.len() as f64
}

/// True when `action` keeps `forced_root` eligible to be the root's single
/// dependent, i.e. never attaches it below a real EDU.
fn keeps_root(state: &ParserState, action: Action, forced_root: Option<usize>) -> bool {
    let Some(r) = forced_root else { return true };
    match action {
        Action::Shift => true,
        Action::LeftArc => state.s1() != Some(r),
        Action::RightArc => state.s0() != Some(r) || state.s1() == Some(0),
    }
}

fn check_edus(edus: &[Edu]) -> Result<(), ParserError> {
    if edus.is_empty() {
        return Err(ParserError::EmptyDocument(String::new()));
    }
    Ok(())
}

/// Greedy structure decoding: the best-scoring legal action at every step.
pub fn parse_structure(edus: &[Edu], model: &ParserModel) -> Result<DiscourseTree, ParserError> {
    parse_structure_rooted(edus, model, None)
}

/// Greedy structure decoding with EDU `forced_root` (an id in `1..=k`) made
/// the dependent of the artificial root.
pub fn parse_structure_rooted(
    edus: &[Edu],
    model: &ParserModel,
    forced_root: Option<usize>,
) -> Result<DiscourseTree, ParserError> {
    check_edus(edus)?;
    let forced_root = forced_root.filter(|r| (1..=edus.len()).contains(r));
    let mut state = ParserState::initial(edus.len())?;
    while !state.is_terminal() {
        let fv = extract_structure_features(&state, edus);
        let best = model
            .action_model
            .predict_index_where(&fv, |i| {
                let a = Action::ALL[i];
                state.is_legal(a) && keeps_root(&state, a, forced_root)
            })
            .expect("a non-terminal state always has an admissible action");
        state.apply_mut(Action::ALL[best])?;
    }
    Ok(tree_from_state(&state, edus))
}

fn tree_from_state(state: &ParserState, edus: &[Edu]) -> DiscourseTree {
    let arcs = state.arcs().iter().map(|&(h, d)| Arc::unlabeled(h, d)).collect();
    DiscourseTree::new(String::new(), edus.to_vec(), arcs)
}

/// Assigns a relation to every arc; the root arc always gets `ROOT`.
pub fn label_relations(tree: &DiscourseTree, model: &ParserModel) -> DiscourseTree {
    let root = RelationLabel::root().at(model.granularity);
    let arcs = tree
        .arcs
        .iter()
        .map(|arc| {
            let relation = if arc.head == 0 {
                root.clone()
            } else {
                let fv = extract_relation_features(arc, &tree.edus);
                RelationLabel::new(model.relation_model.predict(&fv), model.granularity)
                    .expect("relation model labels are validated on construction")
            };
            Arc::new(arc.head, arc.dependent, relation)
        })
        .collect();
    DiscourseTree::new(tree.doc_id.clone(), tree.edus.clone(), arcs)
}

pub fn parse(edus: &[Edu], model: &ParserModel) -> Result<DiscourseTree, ParserError> {
    Ok(label_relations(&parse_structure(edus, model)?, model))
}

/// Parses an unannotated document, keeping its id.
pub fn parse_document(doc: &DiscourseTree, model: &ParserModel) -> Result<DiscourseTree, ParserError> {
    let mut tree = parse(&doc.edus, model).map_err(|e| match e {
        ParserError::EmptyDocument(_) => ParserError::EmptyDocument(doc.doc_id.clone()),
        e => e,
    })?;
    tree.doc_id = doc.doc_id.clone();
    Ok(tree)
}

/// Baseline: a uniformly random legal action at every step, every non-root
/// arc labeled with the most frequent relation.
pub fn random_parse(edus: &[Edu], seed: u64) -> Result<DiscourseTree, ParserError> {
    check_edus(edus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ParserState::initial(edus.len())?;
    while !state.is_terminal() {
        let legal = state.legal_actions()?;
        let action = legal[rng.random_range(0..legal.len())];
        state.apply_mut(action)?;
    }
    let frequent = RelationLabel::parse(MOST_FREQUENT_RELATION).expect("inventory label");
    let arcs = state
        .arcs()
        .iter()
        .map(|&(h, d)| {
            let rel = if h == 0 {
                RelationLabel::root()
            } else {
                frequent.clone()
            };
            Arc::new(h, d, rel)
        })
        .collect();
    Ok(DiscourseTree::new(String::new(), edus.to_vec(), arcs))
}
