//! Zero-shot parsing of source-language documents through per-EDU
//! translation into the parser's training language.

pub mod adapter;
pub mod edits;

use std::path::PathBuf;

use thiserror::Error;

pub use adapter::{
    AdapterConfig, AdapterError, AdapterKind, CachedAdapter, DictionaryAdapter, HttpAdapter, IdentityAdapter,
    TranslationAdapter, TranslationCache,
};
pub use edits::{
    adjust_punctuation, adjust_relative_pronouns, replace_terminal_periods, AlignmentError, DEFAULT_RELATIVE_PRONOUNS,
    EMPTY_EDU,
};

use crate::parser::{label_relations, parse_structure, parse_structure_rooted, ParserError, ParserModel};
use crate::treebank::{ends_sentence, Arc, DiscourseTree, Edu};

pub const DEFAULT_TOPIC_CUES: [&str; 5] = ["该文", "本文", "该研究", "本研究", "该方法"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{doc_id}: EDU {edu_id}: {source}")]
    Adapter {
        doc_id: String,
        edu_id: usize,
        #[source]
        source: AdapterError,
    },

    #[error("{doc_id}: document has no EDUs")]
    EmptyDocument { doc_id: String },

    #[error("{doc_id}: {source}")]
    Alignment {
        doc_id: String,
        #[source]
        source: AlignmentError,
    },

    #[error(transparent)]
    Parser(#[from] ParserError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub adapter: AdapterConfig,
    pub enable_punct_fix: bool,
    pub enable_pronoun_fix: bool,
    pub enable_two_part: bool,
    pub topic_cues: Vec<String>,
    pub relative_pronouns: Vec<String>,
    pub cache_path: Option<PathBuf>,
    pub source_lang: String,
    pub target_lang: String,
}

impl Default for PipelineConfig {
    /// Every modification enabled.
    fn default() -> Self {
        PipelineConfig {
            adapter: AdapterConfig::default(),
            enable_punct_fix: true,
            enable_pronoun_fix: true,
            enable_two_part: true,
            topic_cues: DEFAULT_TOPIC_CUES.iter().map(|s| s.to_string()).collect(),
            relative_pronouns: DEFAULT_RELATIVE_PRONOUNS.iter().map(|s| s.to_string()).collect(),
            cache_path: None,
            source_lang: "zh".into(),
            target_lang: "en".into(),
        }
    }
}

impl PipelineConfig {
    /// Translation followed by a plain parse.
    pub fn direct() -> Self {
        PipelineConfig::default().with_toggles(false, false, false)
    }

    pub fn with_toggles(mut self, pronoun_fix: bool, punct_fix: bool, two_part: bool) -> Self {
        self.enable_pronoun_fix = pronoun_fix;
        self.enable_punct_fix = punct_fix;
        self.enable_two_part = two_part;
        self
    }

    /// The configured adapter, wrapped in the file cache when one is set.
    pub fn build_adapter(&self) -> Result<Box<dyn TranslationAdapter>, AdapterError> {
        let inner = self.adapter.build()?;
        Ok(match &self.cache_path {
            Some(path) => Box::new(CachedAdapter::new(
                inner,
                TranslationCache::open(path, &self.source_lang, &self.target_lang)?,
            )),
            None => inner,
        })
    }
}

/// One translated EDU per source EDU, with ids and sentence indices kept.
pub fn translate_edus(
    doc: &DiscourseTree,
    adapter: &dyn TranslationAdapter,
    source_lang: &str,
    target_lang: &str,
) -> Result<Vec<Edu>, PipelineError> {
    if doc.edus.is_empty() {
        return Err(PipelineError::EmptyDocument {
            doc_id: doc.doc_id.clone(),
        });
    }
    doc.edus
        .iter()
        .map(|edu| {
            let fail = |source| PipelineError::Adapter {
                doc_id: doc.doc_id.clone(),
                edu_id: edu.id,
                source,
            };
            let text = adapter.translate(&edu.text, source_lang, target_lang).map_err(fail)?;
            if text.trim().is_empty() {
                return Err(fail(AdapterError::Empty(edu.text.clone())));
            }
            Ok(Edu {
                ends_with_period: ends_sentence(&text),
                text,
                ..edu.clone()
            })
        })
        .collect()
}

/// Sentence index of the first sentence whose opening EDU starts with a cue.
pub fn detect_topic_sentence<S: AsRef<str>>(doc: &DiscourseTree, cues: &[S]) -> Option<usize> {
    let mut previous = None;
    for edu in &doc.edus {
        if previous == Some(edu.sentence_index) {
            continue;
        }
        previous = Some(edu.sentence_index);
        let text = edu.text.trim_start();
        if cues
            .iter()
            .any(|c| !c.as_ref().is_empty() && text.starts_with(c.as_ref()))
        {
            return Some(edu.sentence_index);
        }
    }
    None
}

fn renumbered(edus: &[Edu]) -> Vec<Edu> {
    edus.iter()
        .enumerate()
        .map(|(i, e)| Edu { id: i + 1, ..e.clone() })
        .collect()
}

/// Parses the material before the topic sentence and the material from it
/// onward separately, then joins them.
///
/// The topic sentence's first EDU becomes the document's root dependent and
/// the root of the earlier part is attached to it. Falls back to a whole
/// document parse when the split would leave the first part empty.
pub fn two_part_parse(edus: &[Edu], split_sentence: usize, model: &ParserModel) -> Result<DiscourseTree, ParserError> {
    let split = match edus.iter().position(|e| e.sentence_index == split_sentence) {
        Some(pos) if pos > 0 => pos,
        _ => return parse_structure(edus, model),
    };
    let (part_a, part_b) = edus.split_at(split);
    let tree_a = parse_structure(&renumbered(part_a), model)?;
    let tree_b = parse_structure_rooted(&renumbered(part_b), model, Some(1))?;
    let topic = split + 1;
    let mut arcs: Vec<Arc> = tree_a
        .arcs
        .iter()
        .map(|a| Arc::unlabeled(if a.head == 0 { topic } else { a.head }, a.dependent))
        .collect();
    arcs.extend(tree_b.arcs.iter().map(|a| {
        let head = if a.head == 0 { 0 } else { a.head + split };
        Arc::unlabeled(head, a.dependent + split)
    }));
    Ok(DiscourseTree::new(String::new(), edus.to_vec(), arcs))
}

/// A pipeline result together with its intermediate products.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineRun {
    /// The parse over the source-language EDUs.
    pub tree: DiscourseTree,
    /// The edited translations that were actually parsed.
    pub translations: Vec<Edu>,
    pub topic_sentence: Option<usize>,
}

pub fn run_pipeline_traced(
    doc: &DiscourseTree,
    config: &PipelineConfig,
    model: &ParserModel,
    adapter: &dyn TranslationAdapter,
) -> Result<PipelineRun, PipelineError> {
    let mut english = translate_edus(doc, adapter, &config.source_lang, &config.target_lang)?;
    if config.enable_punct_fix {
        english = adjust_punctuation(&english, &doc.edus).map_err(|source| PipelineError::Alignment {
            doc_id: doc.doc_id.clone(),
            source,
        })?;
    }
    if config.enable_pronoun_fix {
        english = adjust_relative_pronouns(&english, &config.relative_pronouns);
    }
    let topic_sentence = if config.enable_two_part {
        detect_topic_sentence(doc, &config.topic_cues)
    } else {
        None
    };
    let structure = match topic_sentence {
        Some(s) => two_part_parse(&english, s, model)?,
        None => parse_structure(&english, model)?,
    };
    let labeled = label_relations(&structure, model);
    Ok(PipelineRun {
        tree: DiscourseTree::new(doc.doc_id.clone(), doc.edus.clone(), labeled.arcs),
        translations: english,
        topic_sentence,
    })
}

/// Parses a source-language document; the result is over the document's own EDUs.
pub fn run_pipeline(
    doc: &DiscourseTree,
    config: &PipelineConfig,
    model: &ParserModel,
    adapter: &dyn TranslationAdapter,
) -> Result<DiscourseTree, PipelineError> {
    run_pipeline_traced(doc, config, model, adapter).map(|run| run.tree)
}
