//! The word-problem oracle: canonical shortlex-geodesic representatives.
//!
//! For a presentation satisfying the metric small-cancellation condition
//! C'(1/6), two rewriting moves generate everything we need:
//!
//! * **shortening move** — a factor matching *more* than half of a relator
//!   rotation is replaced by the inverse of the complementary part (strictly
//!   shorter, this is the classical word-problem step);
//! * **exchange move** — a factor matching *exactly* half of an even-length
//!   relator rotation is swapped for the inverse of the other half (same
//!   length, possibly lexicographically smaller or larger).
//!
//! Geodesic spellings of a fixed element are connected under exchange moves
//! (equal-length sides of a reduced diagram flip cell by cell), and a
//! non-geodesic word always admits a shortening move after finitely many
//! exchanges (some cell of the diagram exposes more than half of its
//! boundary). The closure of a word under both moves is therefore finite,
//! contains every geodesic spelling, and its shortlex minimum is a canonical
//! representative of the group element. That minimum is what
//! [`GroupOracle::canonical_form`] returns.
//!
//! The construction is certified at finite scale by the automaton validator,
//! which cross-checks enumeration against independent sphere counts.

use crate::error::{Error, Result};
use crate::presentation::Presentation;
use crate::word::{Gen, Word};

/// How the oracle resolves words.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMode {
    /// Rewriting via the presentation's relators (requires C'(1/6); free
    /// presentations are the degenerate case with no relators).
    Dehn,
    /// No word arithmetic available; the group is described only through an
    /// externally supplied automaton. Enumeration-style queries still work
    /// at the automaton level, reduction queries are configuration errors.
    External,
}

#[derive(Clone, Debug)]
pub struct GroupOracle {
    pres: Presentation,
    mode: OracleMode,
    /// cap on the number of equal-length spellings explored per closure
    closure_budget: usize,
}

enum Step {
    /// found a strictly shorter equivalent word (freely reduced)
    Shorter(Word),
    /// closure exhausted; this is its shortlex-least member
    Done(Word),
}

impl GroupOracle {
    /// Rewriting oracle. Refuses presentations that are neither free nor
    /// C'(1/6), since the moves above are only justified there.
    pub fn new(pres: Presentation) -> Result<GroupOracle> {
        let sc = pres.small_cancellation();
        if !pres.is_free() && !sc.c_one_sixth {
            return Err(Error::Input(format!(
                "presentation is not C'(1/6): max piece {} vs min relator {}; \
                 supply a validated automaton instead",
                sc.max_piece, sc.min_relator
            )));
        }
        Ok(GroupOracle {
            pres,
            mode: OracleMode::Dehn,
            closure_budget: 100_000,
        })
    }

    /// Oracle for a group known only through an external automaton.
    pub fn external(pres: Presentation) -> GroupOracle {
        GroupOracle {
            pres,
            mode: OracleMode::External,
            closure_budget: 0,
        }
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    pub fn presentation(&self) -> &Presentation {
        &self.pres
    }

    fn require_dehn(&self) -> Result<()> {
        if self.mode != OracleMode::Dehn {
            return Err(Error::Config(
                "oracle is in external-automaton mode; word reduction unavailable".into(),
            ));
        }
        Ok(())
    }

    /// Canonical representative: the shortlex-least geodesic word equal to
    /// `w` in the group. Equal elements always map to the same output; the
    /// output is empty iff `w` represents the identity; output length never
    /// exceeds input length.
    pub fn canonical_form(&self, w: &Word) -> Result<Word> {
        self.require_dehn()?;
        let mut cur = self.pres.free_reduce(w);
        loop {
            match self.closure_step(&cur)? {
                Step::Shorter(v) => cur = v,
                Step::Done(least) => return Ok(least),
            }
        }
    }

    /// Does appending `s` to the canonical word `w` yield another canonical
    /// word? This is the branch predicate of the shortlex tree; ball
    /// enumeration and automaton construction are built on it.
    pub fn is_canonical_child(&self, w: &Word, s: Gen) -> Result<bool> {
        self.require_dehn()?;
        if w.last() == Some(self.pres.inv(s)) {
            return Ok(false);
        }
        let u0 = w.child(s);
        // Explore the closure of u0; bail out as soon as any member beats it.
        let mut seen: Vec<Word> = vec![u0.clone()];
        let mut next = 0usize;
        while next < seen.len() {
            let u = seen[next].clone();
            next += 1;
            if !self.expand(&u, &u0, &mut seen)? {
                return Ok(false);
            }
            if seen.len() > self.closure_budget {
                return Err(Error::Resource {
                    what: format!("rewrite closure of a word of length {}", u0.len()),
                    completed: None,
                });
            }
        }
        Ok(true)
    }

    /// Expand one closure member; push unseen equal-length spellings.
    /// Returns false (short-circuit) if a spelling shorter or shortlex-less
    /// than `u0` exists.
    fn expand(&self, u: &Word, u0: &Word, seen: &mut Vec<Word>) -> Result<bool> {
        let us = u.as_slice();
        for i in 0..us.len() {
            for &ri in self.pres.rotations_starting_with(us[i]) {
                let r = &self.pres.rotations()[ri as usize].word;
                let n = r.len();
                let m = lcp(&us[i..], r.as_slice());
                if 2 * m > n {
                    return Ok(false); // shortening move exists
                }
                if n.is_multiple_of(2) && m == n / 2 {
                    let v = self.splice(us, i, m, r);
                    if v.len() < u0.len() || (v.len() == u0.len() && v < *u0) {
                        return Ok(false);
                    }
                    if v.len() == u0.len() && !seen.contains(&v) {
                        seen.push(v);
                    }
                }
            }
        }
        Ok(true)
    }

    /// One round of closure exploration for `canonical_form`.
    fn closure_step(&self, w: &Word) -> Result<Step> {
        let mut seen: Vec<Word> = vec![w.clone()];
        let mut least = w.clone();
        let mut next = 0usize;
        while next < seen.len() {
            let u = seen[next].clone();
            next += 1;
            let us = u.as_slice();
            for i in 0..us.len() {
                for &ri in self.pres.rotations_starting_with(us[i]) {
                    let r = &self.pres.rotations()[ri as usize].word;
                    let n = r.len();
                    let m = lcp(&us[i..], r.as_slice());
                    if 2 * m > n {
                        return Ok(Step::Shorter(self.splice(us, i, m, r)));
                    }
                    if n.is_multiple_of(2) && m == n / 2 {
                        let v = self.splice(us, i, m, r);
                        if v.len() < u.len() {
                            return Ok(Step::Shorter(v));
                        }
                        if !seen.contains(&v) {
                            if v < least {
                                least = v.clone();
                            }
                            seen.push(v);
                        }
                    }
                }
            }
            if seen.len() > self.closure_budget {
                return Err(Error::Resource {
                    what: format!("rewrite closure of a word of length {}", w.len()),
                    completed: None,
                });
            }
        }
        Ok(Step::Done(least))
    }

    /// Replace `u[i..i+m]` (a prefix of rotation `r`) by the inverse of the
    /// complementary part of `r`, freely reducing the seams.
    fn splice(&self, u: &[Gen], i: usize, m: usize, r: &Word) -> Word {
        let mut v = Word::from_slice(&u[..i]);
        for &g in r.as_slice()[m..].iter().rev() {
            let g = self.pres.inv(g);
            if v.last() == Some(self.pres.inv(g)) {
                v.pop();
            } else {
                v.push(g);
            }
        }
        for &g in &u[i + m..] {
            if v.last() == Some(self.pres.inv(g)) {
                v.pop();
            } else {
                v.push(g);
            }
        }
        v
    }

    /// Canonical form of the product of two words.
    pub fn mul(&self, a: &Word, b: &Word) -> Result<Word> {
        self.canonical_form(&a.concat(b))
    }

    /// Canonical form of `w`·`s`.
    pub fn ext(&self, w: &Word, s: Gen) -> Result<Word> {
        self.canonical_form(&w.child(s))
    }

    /// Canonical form of the inverse.
    pub fn inv_word(&self, w: &Word) -> Result<Word> {
        self.canonical_form(&self.pres.free_inverse(w))
    }

    /// Word-metric distance between the elements spelled by `a` and `b`.
    pub fn dist(&self, a: &Word, b: &Word) -> Result<usize> {
        Ok(self
            .canonical_form(&self.pres.free_inverse(a).concat(b))?
            .len())
    }

    pub fn is_identity(&self, w: &Word) -> Result<bool> {
        Ok(self.canonical_form(w)?.is_empty())
    }
}

fn lcp(a: &[Gen], b: &[Gen]) -> usize {
    let mut k = 0;
    while k < a.len() && k < b.len() && a[k] == b[k] {
        k += 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presentation::standard;

    fn g2() -> GroupOracle {
        GroupOracle::new(standard::genus2()).unwrap()
    }

    #[test]
    fn free_reduction_only_for_free_groups() {
        let o = GroupOracle::new(standard::free2()).unwrap();
        let p = o.presentation().clone();
        let w = p.parse_word("abBA").unwrap();
        assert!(o.canonical_form(&w).unwrap().is_empty());
        let w = p.parse_word("abb").unwrap();
        assert_eq!(o.canonical_form(&w).unwrap(), w);
    }

    #[test]
    fn relator_collapses_to_identity() {
        let o = g2();
        let p = o.presentation();
        let r = p.parse_word("abABcdCD").unwrap();
        assert!(o.is_identity(&r).unwrap());
        // conjugates and inverses too
        let c = p.parse_word("dCDabABc").unwrap();
        assert!(o.is_identity(&c).unwrap());
        let ri = p.free_inverse(&r);
        assert!(o.is_identity(&ri).unwrap());
        // squared relator needs two shortening rounds
        assert!(o.is_identity(&r.concat(&r)).unwrap());
    }

    #[test]
    fn over_half_relator_shortens() {
        let o = g2();
        let p = o.presentation();
        // abABc is five letters of the octagon; the complement dCD inverts
        // to dcD, giving a 3-letter geodesic
        let w = p.parse_word("abABc").unwrap();
        let c = o.canonical_form(&w).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(p.format_word(&c), "dcD");
        assert_eq!(o.dist(&w, &c).unwrap(), 0);
    }

    #[test]
    fn half_relator_exchanges_to_lex_least() {
        let o = g2();
        let p = o.presentation();
        // dcDC and abAB spell the same element; abAB is shortlex-least
        let w = p.parse_word("dcDC").unwrap();
        let c = o.canonical_form(&w).unwrap();
        assert_eq!(p.format_word(&c), "abAB");
        // and the canonical form is idempotent
        assert_eq!(o.canonical_form(&c).unwrap(), c);
    }

    #[test]
    fn canonical_form_constant_on_equal_elements() {
        let o = g2();
        let p = o.presentation();
        // multiply a word by a full relator conjugate: same element
        let w = p.parse_word("aabb").unwrap();
        let r = p.parse_word("BcdCDabA").unwrap(); // rotation of the relator
        let wr = o.canonical_form(&w.concat(&r)).unwrap();
        assert_eq!(wr, o.canonical_form(&w).unwrap());
    }

    #[test]
    fn canonical_children_of_identity() {
        let o = g2();
        let e = Word::empty();
        let all: Vec<bool> = (0..8)
            .map(|s| o.is_canonical_child(&e, s).unwrap())
            .collect();
        assert!(all.iter().all(|&b| b), "every letter starts a geodesic");
    }

    #[test]
    fn backtracking_is_never_canonical() {
        let o = g2();
        let p = o.presentation();
        let w = p.parse_word("ab").unwrap();
        let binv = p.inv(p.gen_of_symbol('b').unwrap());
        assert!(!o.is_canonical_child(&w, binv).unwrap());
    }

    #[test]
    fn external_mode_refuses_reduction() {
        let o = GroupOracle::external(standard::genus2());
        assert!(o.canonical_form(&Word::empty()).is_err());
    }

    #[test]
    fn non_small_cancellation_is_refused() {
        // ⟨a | a^4⟩ has pieces of length 3 (the cyclic word overlaps itself)
        let p = Presentation::parse("generators: a A\nrelator: aaaa").unwrap();
        assert!(GroupOracle::new(p).is_err());
    }
}
