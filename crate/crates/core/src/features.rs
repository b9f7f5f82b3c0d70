//! Sparse indicator features for the action classifier (parser states) and
//! the relation classifier (attached arcs).

use std::collections::BTreeMap;

use crate::transition::ParserState;
use crate::treebank::{Arc, Edu};

/// Value emitted for positions or pairs that do not exist.
pub const NONE: &str = "NONE";
const ROOT_TOKEN: &str = "<ROOT>";

/// Sparse feature map. Names are kept sorted so serialization is stable and
/// zero-valued entries are never stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector {
    entries: BTreeMap<String, f64>,
}

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `value` to feature `name`. Tabs, newlines and other control
    /// characters in the name are replaced so names never collide with the
    /// model file's record separators.
    pub fn add(&mut self, name: impl AsRef<str>, value: f64) {
        if value == 0.0 {
            return;
        }
        let name = sanitize(name.as_ref());
        let sum = self.entries.get(&name).copied().unwrap_or(0.0) + value;
        if sum == 0.0 {
            self.entries.remove(&name);
        } else {
            self.entries.insert(name, sum);
        }
    }

    pub fn indicator(&mut self, name: impl AsRef<str>) {
        self.add(name, 1.0);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Every value multiplied by `factor` (must be non-zero).
    pub fn scaled(&self, factor: f64) -> FeatureVector {
        assert!(factor != 0.0, "scaling by zero would empty the vector");
        FeatureVector {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
        }
    }
}

impl<S: AsRef<str>> FromIterator<(S, f64)> for FeatureVector {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        let mut fv = FeatureVector::new();
        for (name, value) in iter {
            fv.add(name, value);
        }
        fv
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_control() || c.is_whitespace() { '_' } else { c })
        .collect()
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '，' | '。'
                | '、'
                | '；'
                | '：'
                | '！'
                | '？'
                | '“'
                | '”'
                | '‘'
                | '’'
                | '（'
                | '）'
                | '《'
                | '》'
                | '…'
                | '—'
        )
}

/// Lowercased whitespace tokens with trailing punctuation split off into
/// one token per character.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for piece in text.split_whitespace() {
        let body = piece.trim_end_matches(is_punct);
        if !body.is_empty() {
            tokens.push(body.to_lowercase());
        }
        tokens.extend(piece[body.len()..].chars().map(String::from));
    }
    tokens
}

/// `1, 2, 3, 4-6, 7-10, 11+`
fn bucket(n: usize) -> &'static str {
    match n {
        0 => "0",
        1 => "1",
        2 => "2",
        3 => "3",
        4..=6 => "4-6",
        7..=10 => "7-10",
        _ => "11+",
    }
}

fn signed_bucket(d: i64) -> String {
    let b = bucket(d.unsigned_abs() as usize);
    if d < 0 {
        format!("-{b}")
    } else {
        b.to_owned()
    }
}

fn edu_at(edus: &[Edu], id: usize) -> Option<&Edu> {
    id.checked_sub(1).and_then(|i| edus.get(i))
}

/// Surface view of one EDU slot.
struct Slot<'a> {
    edu: Option<&'a Edu>,
    is_root: bool,
    tokens: Vec<String>,
}

impl<'a> Slot<'a> {
    fn new(id: Option<usize>, edus: &'a [Edu]) -> Self {
        match id {
            None => Slot {
                edu: None,
                is_root: false,
                tokens: Vec::new(),
            },
            Some(0) => Slot {
                edu: None,
                is_root: true,
                tokens: Vec::new(),
            },
            Some(id) => {
                let edu = edu_at(edus, id);
                Slot {
                    edu,
                    is_root: false,
                    tokens: edu.map(|e| tokenize(&e.text)).unwrap_or_default(),
                }
            }
        }
    }

    fn present(&self) -> bool {
        self.is_root || self.edu.is_some()
    }

    fn first(&self) -> &str {
        if self.is_root {
            ROOT_TOKEN
        } else {
            self.tokens.first().map_or(NONE, String::as_str)
        }
    }

    fn emit(&self, prefix: &str, fv: &mut FeatureVector) {
        if self.is_root {
            for t in ["first", "last", "first2", "len", "period"] {
                fv.indicator(format!("{prefix}.{t}={ROOT_TOKEN}"));
            }
            fv.indicator(format!("{prefix}.is_root=true"));
            return;
        }
        let Some(edu) = self.edu else {
            for t in ["first", "last", "first2", "len", "period", "is_root"] {
                fv.indicator(format!("{prefix}.{t}={NONE}"));
            }
            return;
        };
        let last = self.tokens.last().map_or(NONE, String::as_str);
        let second = self.tokens.get(1).map_or("</s>", String::as_str);
        fv.indicator(format!("{prefix}.first={}", self.first()));
        fv.indicator(format!("{prefix}.last={last}"));
        fv.indicator(format!("{prefix}.first2={}+{second}", self.first()));
        fv.indicator(format!("{prefix}.len={}", bucket(self.tokens.len())));
        fv.indicator(format!("{prefix}.period={}", edu.ends_with_period));
        fv.indicator(format!("{prefix}.is_root=false"));
    }
}

fn same_sentence(a: &Slot, b: &Slot) -> String {
    match (a.edu, b.edu) {
        (Some(x), Some(y)) => (x.sentence_index == y.sentence_index).to_string(),
        _ => NONE.to_owned(),
    }
}

fn distance(from: Option<usize>, to: Option<usize>) -> String {
    match (from, to) {
        (Some(a), Some(b)) if a != 0 && b != 0 => signed_bucket(b as i64 - a as i64),
        _ => NONE.to_owned(),
    }
}

/// Features of a parser state over stack top (s0), second (s1) and buffer
/// front (b0).
pub fn extract_structure_features(state: &ParserState, edus: &[Edu]) -> FeatureVector {
    let (s0, s1, b0) = (state.s0(), state.s1(), state.b0());
    let slots = [
        ("s0", Slot::new(s0, edus)),
        ("s1", Slot::new(s1, edus)),
        ("b0", Slot::new(b0, edus)),
    ];
    let mut fv = FeatureVector::new();
    for (prefix, slot) in &slots {
        slot.emit(prefix, &mut fv);
    }
    let [(_, s0v), (_, s1v), (_, b0v)] = &slots;
    fv.indicator(format!("same_sent(s0,s1)={}", same_sentence(s0v, s1v)));
    fv.indicator(format!("same_sent(s0,b0)={}", same_sentence(s0v, b0v)));
    fv.indicator(format!("dist(s0,s1)={}", distance(s1, s0)));
    fv.indicator(format!("dist(s0,b0)={}", distance(s0, b0)));
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let (pa, a) = &slots[i];
        let (pb, b) = &slots[j];
        let first = |s: &Slot| {
            if s.present() {
                s.first().to_owned()
            } else {
                NONE.to_owned()
            }
        };
        fv.indicator(format!("{pa}.first|{pb}.first={}|{}", first(a), first(b)));
    }
    fv
}

/// Features of an attached arc for relation labeling.
pub fn extract_relation_features(arc: &Arc, edus: &[Edu]) -> FeatureVector {
    let head = Slot::new(Some(arc.head), edus);
    let dep = Slot::new(Some(arc.dependent), edus);
    let mut fv = FeatureVector::new();
    head.emit("head", &mut fv);
    dep.emit("dep", &mut fv);
    let direction = if arc.dependent > arc.head { "right" } else { "left" };
    fv.indicator(format!("direction={direction}"));
    let dist = if arc.head == 0 {
        NONE.to_owned()
    } else {
        bucket(arc.head.abs_diff(arc.dependent)).to_owned()
    };
    fv.indicator(format!("dist={dist}"));
    fv.indicator(format!("same_sentence={}", same_sentence(&head, &dep)));
    fv.indicator(format!("head.first|dep.first={}|{}", head.first(), dep.first()));
    fv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::{initial_state, Action};
    use crate::treebank::RelationLabel;

    fn edus(texts: &[(&str, usize)]) -> Vec<Edu> {
        texts
            .iter()
            .enumerate()
            .map(|(i, (t, s))| Edu::new(i + 1, *t, *s))
            .collect()
    }

    #[test]
    fn tokenizer_splits_trailing_punctuation() {
        assert_eq!(tokenize("A b"), vec!["a", "b"]);
        assert_eq!(tokenize("It works."), vec!["it", "works", "."]);
        assert_eq!(tokenize("e.g. fine,"), vec!["e.g", ".", "fine", ","]);
        assert_eq!(tokenize("该文提出，"), vec!["该文提出", "，"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn initial_state_templates() {
        let e = edus(&[("A b", 1), ("c", 1)]);
        let fv = extract_structure_features(&initial_state(2).unwrap(), &e);
        for f in [
            "b0.first=a",
            "s0.is_root=true",
            "dist(s0,b0)=NONE",
            "s1.first=NONE",
            "b0.first2=a+b",
        ] {
            assert!(fv.contains(f), "missing {f}: {fv:?}");
        }
    }

    #[test]
    fn absent_second_item() {
        let e = edus(&[("A b", 1), ("c", 1)]);
        let s = initial_state(2).unwrap().apply(Action::Shift).unwrap();
        let fv = extract_structure_features(&s, &e);
        assert!(fv.contains("s0.first=a"));
        assert!(fv.contains("s1.is_root=true"));
        let s = s.apply(Action::Shift).unwrap();
        let fv = extract_structure_features(&s, &e);
        assert!(fv.contains("b0.first=NONE"));
        assert!(fv.contains("dist(s0,s1)=1"));
        assert!(fv.contains("same_sent(s0,s1)=true"));
    }

    #[test]
    fn relation_templates() {
        let e = edus(&[("We propose", 1), ("a parser", 1), ("that works", 1), ("Then x.", 2)]);
        let root = extract_relation_features(&Arc::new(0, 4, RelationLabel::root()), &e);
        assert!(root.contains("head.is_root=true"));
        let fv = extract_relation_features(&Arc::unlabeled(2, 3), &e);
        for f in ["same_sentence=true", "direction=right", "dist=1", "dep.first=that"] {
            assert!(fv.contains(f), "missing {f}");
        }
        let fv = extract_relation_features(&Arc::unlabeled(4, 1), &e);
        assert!(fv.contains("direction=left"));
        assert!(fv.contains("same_sentence=false"));
        assert!(fv.contains("dist=3"));
    }

    #[test]
    fn values_are_never_zero_and_names_have_no_separators() {
        let mut fv = FeatureVector::new();
        fv.add("a\tb\nc", 1.0);
        fv.add("z", 0.0);
        fv.add("y", 2.0);
        fv.add("y", -2.0);
        assert_eq!(fv.len(), 1);
        assert!(fv.contains("a_b_c"));
    }
}
