//! Words over a symmetric generating alphabet.
//!
//! A letter is an index into the presentation's ordered alphabet, so the
//! derived lexicographic order on letters is exactly the presentation order.
//! `Word` comparison is *shortlex*: shorter words first, ties broken
//! lexicographically. That order is load-bearing throughout the crate — the
//! canonical representative of a group element is the shortlex-least geodesic
//! word, and ball tables store each sphere in shortlex order.

use smallvec::SmallVec;
use std::cmp::Ordering;
use std::fmt;

/// A generator index. Alphabets here are tiny (at most a few dozen letters).
pub type Gen = u8;

/// A word in the generators. Inline storage covers every word the desk-scale
/// pipelines produce; longer words spill to the heap transparently.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(SmallVec<[Gen; 16]>);

impl Word {
    pub fn empty() -> Self {
        Word(SmallVec::new())
    }

    pub fn single(g: Gen) -> Self {
        let mut v = SmallVec::new();
        v.push(g);
        Word(v)
    }

    pub fn from_slice(s: &[Gen]) -> Self {
        Word(SmallVec::from_slice(s))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Gen] {
        &self.0
    }

    pub fn push(&mut self, g: Gen) {
        self.0.push(g);
    }

    pub fn pop(&mut self) -> Option<Gen> {
        self.0.pop()
    }

    pub fn first(&self) -> Option<Gen> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<Gen> {
        self.0.last().copied()
    }

    /// The word with the last letter removed; identity stays identity.
    pub fn parent(&self) -> Word {
        let mut w = self.clone();
        w.pop();
        w
    }

    /// `self` followed by `g`.
    pub fn child(&self, g: Gen) -> Word {
        let mut w = self.clone();
        w.push(g);
        w
    }

    /// Plain concatenation, no reduction.
    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = Gen> + '_ {
        self.0.iter().copied()
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "ε");
        }
        for g in self.iter() {
            write!(f, "{}.", g)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortlex_order() {
        let e = Word::empty();
        let a = Word::from_slice(&[0]);
        let b = Word::from_slice(&[1]);
        let aa = Word::from_slice(&[0, 0]);
        let ab = Word::from_slice(&[0, 1]);
        let mut v = vec![ab.clone(), aa.clone(), b.clone(), e.clone(), a.clone()];
        v.sort();
        assert_eq!(v, vec![e, a, b, aa, ab]);
    }

    #[test]
    fn parent_child_roundtrip() {
        let w = Word::from_slice(&[3, 1, 2]);
        assert_eq!(w.parent().child(2), w);
        assert_eq!(Word::empty().parent(), Word::empty());
    }
}
