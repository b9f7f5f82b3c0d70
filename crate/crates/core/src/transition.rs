//! Arc-standard transitions over EDUs and the static training oracle.
//!
//! The artificial root starts on the stack and may only take its dependent
//! once the buffer is empty, so every complete derivation yields a tree with
//! exactly one root dependent.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::treebank::{validate_tree, DiscourseTree, Violation};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransitionError {
    #[error("a document needs at least one EDU (got {0})")]
    InvalidCount(usize),

    #[error("no action is possible in a terminal state")]
    TerminalState,

    #[error("{action} is not legal in state {state}")]
    IllegalAction { action: Action, state: String },

    #[error("document {0} is not projective; arc-standard cannot derive it")]
    NonProjective(String),

    #[error("document {doc_id} is not a valid tree: {violation}")]
    InvalidTree { doc_id: String, violation: Violation },

    #[error("unknown action '{0}'")]
    UnknownAction(String),
}

/// Unlabeled arc-standard actions. The declaration order is the tie-break
/// order used by every decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Shift,
    LeftArc,
    RightArc,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Shift, Action::LeftArc, Action::RightArc];

    pub fn name(self) -> &'static str {
        match self {
            Action::Shift => "Shift",
            Action::LeftArc => "LeftArc",
            Action::RightArc => "RightArc",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = TransitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| TransitionError::UnknownAction(s.to_owned()))
    }
}

/// Stack, buffer and the unlabeled arcs built so far.
///
/// The buffer is always a suffix `next..=k` of the document, so it is kept as
/// a cursor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ParserState {
    stack: Vec<usize>,
    next: usize,
    k: usize,
    arcs: Vec<(usize, usize)>,
}

impl ParserState {
    pub fn initial(k: usize) -> Result<Self, TransitionError> {
        if k < 1 {
            return Err(TransitionError::InvalidCount(k));
        }
        Ok(ParserState {
            stack: vec![0],
            next: 1,
            k,
            arcs: Vec::with_capacity(k),
        })
    }

    /// Bottom to top.
    pub fn stack(&self) -> &[usize] {
        &self.stack
    }

    pub fn buffer(&self) -> std::ops::RangeInclusive<usize> {
        self.next..=self.k
    }

    pub fn buffer_len(&self) -> usize {
        self.k + 1 - self.next
    }

    /// `(head, dependent)` pairs in creation order.
    pub fn arcs(&self) -> &[(usize, usize)] {
        &self.arcs
    }

    pub fn edu_count(&self) -> usize {
        self.k
    }

    /// Stack top.
    pub fn s0(&self) -> Option<usize> {
        self.stack.last().copied()
    }

    /// Second item from the stack top.
    pub fn s1(&self) -> Option<usize> {
        self.stack.len().checked_sub(2).map(|i| self.stack[i])
    }

    /// Buffer front.
    pub fn b0(&self) -> Option<usize> {
        (self.next <= self.k).then_some(self.next)
    }

    pub fn is_terminal(&self) -> bool {
        self.next > self.k && self.stack == [0]
    }

    pub fn is_legal(&self, action: Action) -> bool {
        let reducible = self.stack.len() >= 2;
        match action {
            Action::Shift => self.next <= self.k,
            Action::LeftArc => reducible && self.s1() != Some(0),
            Action::RightArc => reducible && (self.s1() != Some(0) || self.next > self.k),
        }
    }

    /// Legal actions in tie-break order.
    pub fn legal_actions(&self) -> Result<Vec<Action>, TransitionError> {
        if self.is_terminal() {
            return Err(TransitionError::TerminalState);
        }
        Ok(Action::ALL.into_iter().filter(|a| self.is_legal(*a)).collect())
    }

    pub fn apply(&self, action: Action) -> Result<ParserState, TransitionError> {
        let mut next = self.clone();
        next.apply_mut(action)?;
        Ok(next)
    }

    pub(crate) fn apply_mut(&mut self, action: Action) -> Result<(), TransitionError> {
        if self.is_terminal() || !self.is_legal(action) {
            return Err(TransitionError::IllegalAction {
                action,
                state: self.to_string(),
            });
        }
        match action {
            Action::Shift => {
                self.stack.push(self.next);
                self.next += 1;
            }
            Action::LeftArc => {
                let top = self.stack.pop().expect("legal LeftArc");
                let second = self.stack.pop().expect("legal LeftArc");
                self.arcs.push((top, second));
                self.stack.push(top);
            }
            Action::RightArc => {
                let top = self.stack.pop().expect("legal RightArc");
                let second = *self.stack.last().expect("legal RightArc");
                self.arcs.push((second, top));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ParserState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let buffer: Vec<usize> = self.buffer().collect();
        write!(f, "(stack={:?}, buffer={:?}, arcs={:?})", self.stack, buffer, self.arcs)
    }
}

pub fn initial_state(k: usize) -> Result<ParserState, TransitionError> {
    ParserState::initial(k)
}

pub fn legal_actions(state: &ParserState) -> Result<Vec<Action>, TransitionError> {
    state.legal_actions()
}

pub fn apply(state: &ParserState, action: Action) -> Result<ParserState, TransitionError> {
    state.apply(action)
}

/// Runs `actions` from the initial state of a `k`-EDU document.
pub fn replay(k: usize, actions: &[Action]) -> Result<ParserState, TransitionError> {
    let mut state = ParserState::initial(k)?;
    for &action in actions {
        state.apply_mut(action)?;
    }
    Ok(state)
}

/// Static arc-standard oracle: at each state prefer LeftArc when the second
/// item's gold head is the top, then RightArc when the top's gold head is the
/// second item and all of the top's dependents are attached, else Shift.
pub fn oracle_actions(tree: &DiscourseTree) -> Result<Vec<Action>, TransitionError> {
    if let Some(violation) = validate_tree(tree).into_iter().next() {
        return Err(TransitionError::InvalidTree {
            doc_id: tree.doc_id.clone(),
            violation,
        });
    }
    let k = tree.len();
    let gold: Vec<usize> = tree.heads().iter().map(|h| h.unwrap_or(0)).collect();
    let mut pending = vec![0usize; k + 1];
    for &h in gold.iter().skip(1) {
        pending[h] += 1;
    }

    let mut state = ParserState::initial(k)?;
    let mut actions = Vec::with_capacity(2 * k);
    while !state.is_terminal() {
        let action = match (state.s1(), state.s0()) {
            (Some(second), Some(top)) if second != 0 && gold[second] == top && pending[second] == 0 => Action::LeftArc,
            (Some(second), Some(top))
                if gold[top] == second && pending[top] == 0 && state.is_legal(Action::RightArc) =>
            {
                Action::RightArc
            }
            _ if state.b0().is_some() => Action::Shift,
            _ => return Err(TransitionError::NonProjective(tree.doc_id.clone())),
        };
        match action {
            Action::LeftArc => pending[state.s0().expect("top")] -= 1,
            Action::RightArc => pending[state.s1().expect("second")] -= 1,
            Action::Shift => {}
        }
        state.apply_mut(action)?;
        actions.push(action);
    }
    if state.arcs().iter().any(|&(h, d)| gold[d] != h) {
        return Err(TransitionError::NonProjective(tree.doc_id.clone()));
    }
    Ok(actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{Arc, Edu};
    use Action::*;

    fn state(stack: &[usize], next: usize, k: usize) -> ParserState {
        ParserState {
            stack: stack.to_vec(),
            next,
            k,
            arcs: Vec::new(),
        }
    }

    fn tree(arcs: &[(usize, usize)]) -> DiscourseTree {
        let k = arcs.len();
        DiscourseTree::new(
            "t",
            (1..=k).map(|i| Edu::new(i, "x", 1)).collect(),
            arcs.iter().map(|&(h, d)| Arc::unlabeled(h, d)).collect(),
        )
    }

    #[test]
    fn initial_states() {
        let s = initial_state(1).unwrap();
        assert_eq!(s.stack(), &[0]);
        assert_eq!(s.buffer().collect::<Vec<_>>(), vec![1]);
        assert_eq!(initial_state(3).unwrap().buffer().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(initial_state(0), Err(TransitionError::InvalidCount(0)));
    }

    #[test]
    fn legality() {
        assert_eq!(legal_actions(&initial_state(3).unwrap()).unwrap(), vec![Shift]);
        assert_eq!(
            legal_actions(&state(&[0, 1, 2], 3, 3)).unwrap(),
            vec![Shift, LeftArc, RightArc]
        );
        assert_eq!(legal_actions(&state(&[0, 1], 2, 2)).unwrap(), vec![Shift]);
        assert_eq!(legal_actions(&state(&[0, 1], 2, 1)).unwrap(), vec![RightArc]);
        assert_eq!(legal_actions(&state(&[0], 2, 1)), Err(TransitionError::TerminalState));
    }

    #[test]
    fn apply_rules() {
        let s = apply(&state(&[0], 1, 2), Shift).unwrap();
        assert_eq!((s.stack(), s.buffer().collect::<Vec<_>>()), (&[0, 1][..], vec![2]));

        let s = apply(&state(&[0, 1, 2], 3, 2), RightArc).unwrap();
        assert_eq!(s.stack(), &[0, 1]);
        assert_eq!(s.arcs(), &[(1, 2)]);

        let s = apply(&state(&[0, 1, 2], 3, 2), LeftArc).unwrap();
        assert_eq!(s.stack(), &[0, 2]);
        assert_eq!(s.arcs(), &[(2, 1)]);

        assert!(matches!(
            apply(&initial_state(2).unwrap(), LeftArc),
            Err(TransitionError::IllegalAction { action: LeftArc, .. })
        ));
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(
            oracle_actions(&tree(&[(0, 2), (2, 1), (2, 3)])).unwrap(),
            vec![Shift, Shift, LeftArc, Shift, RightArc, RightArc]
        );
        assert_eq!(oracle_actions(&tree(&[(0, 1)])).unwrap(), vec![Shift, RightArc]);
        assert_eq!(
            oracle_actions(&tree(&[(0, 2), (2, 4), (4, 1), (1, 3)])),
            Err(TransitionError::NonProjective("t".into()))
        );
    }

    #[test]
    fn oracle_rejects_invalid_trees() {
        assert!(matches!(
            oracle_actions(&tree(&[(0, 1), (0, 2)])),
            Err(TransitionError::InvalidTree { .. })
        ));
    }

    #[test]
    fn action_names_round_trip() {
        for a in Action::ALL {
            assert_eq!(a.name().parse::<Action>().unwrap(), a);
        }
        assert!("Reduce".parse::<Action>().is_err());
    }
}
