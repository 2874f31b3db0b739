//! The shortlex automaton: a deterministic FSA whose language is exactly the
//! set of canonical words.
//!
//! Construction is by cone typing: two elements get the same state when their
//! shortlex extension trees agree to a fixed lookahead depth. Hyperbolic
//! groups have finitely many cone types, so the state set closes: starting
//! from the identity, each newly discovered type contributes its canonical
//! children, whose types either already exist or open new states. Transitions
//! are read off the discovering representative and audited against later
//! representatives of the same type; an insufficient lookahead shows up
//! either as an audit conflict at build time or as a language mismatch in
//! [`validate_fsa`]. Correctness is certified exactly up to the validation
//! radius, never beyond — reports carry that radius.

use rayon::prelude::*;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::oracle::GroupOracle;
use crate::presentation::Presentation;
use crate::word::{Gen, Word};

#[derive(Clone, Debug)]
pub struct ShortlexFsa {
    alphabet: usize,
    start: u32,
    /// `trans[state * alphabet + letter]`, `None` = letter not readable
    trans: Vec<Option<u32>>,
    /// shortlex-least discovered representative per state (absent for
    /// imported automata)
    reps: Option<Vec<Word>>,
    /// build parameters, recorded for reports (0 when imported)
    lookahead: usize,
    /// length of the longest state representative (depth at which the type
    /// closure stabilized; 0 when imported)
    rep_depth: usize,
}

/// Serialized extension-tree shape to a fixed depth; equal keys = same state.
fn type_key(oracle: &GroupOracle, w: &Word, depth: usize, out: &mut Vec<u8>) -> Result<()> {
    let k = oracle.presentation().alphabet_len() as Gen;
    for s in 0..k {
        if oracle.is_canonical_child(w, s)? {
            out.push(s + 1);
            if depth > 1 {
                type_key(oracle, &w.child(s), depth - 1, out)?;
            }
        }
    }
    out.push(0);
    Ok(())
}

/// extra representatives audited per state for transition consistency
const AUDIT_REPS: usize = 2;

/// Build the shortlex automaton by closing the set of lookahead-bounded cone
/// types under canonical extension. `max_states` guards against divergence on
/// bad input (the closure is finite for hyperbolic groups).
pub fn build_shortlex_fsa(
    oracle: &GroupOracle,
    lookahead: usize,
    max_states: usize,
) -> Result<ShortlexFsa> {
    if lookahead == 0 {
        return Err(Error::Config(
            "automaton construction needs lookahead ≥ 1".into(),
        ));
    }
    let alphabet = oracle.presentation().alphabet_len();
    let key_of = |w: &Word| -> Result<Vec<u8>> {
        let mut out = Vec::new();
        type_key(oracle, w, lookahead, &mut out)?;
        Ok(out)
    };

    let mut type_id: HashMap<Vec<u8>, u32> = HashMap::new();
    let mut keys: Vec<Vec<u8>> = Vec::new();
    let mut reps: Vec<Word> = Vec::new();
    let mut audits: Vec<Vec<Word>> = Vec::new();
    let mut trans: Vec<Option<u32>> = Vec::new();

    let root_key = key_of(&Word::empty())?;
    type_id.insert(root_key.clone(), 0);
    keys.push(root_key);
    reps.push(Word::empty());
    audits.push(Vec::new());
    trans.extend(std::iter::repeat_n(None, alphabet));

    // breadth-first over states; reps are discovered in shortlex order, so
    // each state's rep is the least canonical word reaching it
    let mut next_state = 0usize;
    while next_state < reps.len() {
        let w = reps[next_state].clone();
        // type the canonical children in parallel (tree walks dominate)
        let children: Vec<Option<(Word, Vec<u8>)>> = (0..alphabet as Gen)
            .into_par_iter()
            .map(|s| {
                if oracle.is_canonical_child(&w, s)? {
                    let child = w.child(s);
                    let key = key_of(&child)?;
                    Ok(Some((child, key)))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        for (s, entry) in children.into_iter().enumerate() {
            let Some((child, key)) = entry else { continue };
            let id = match type_id.get(&key) {
                Some(&id) => {
                    if audits[id as usize].len() < AUDIT_REPS {
                        audits[id as usize].push(child);
                    }
                    id
                }
                None => {
                    let id = reps.len() as u32;
                    if reps.len() >= max_states {
                        return Err(Error::Resource {
                            what: format!("cone-type closure exceeds {max_states} states"),
                            completed: None,
                        });
                    }
                    type_id.insert(key.clone(), id);
                    keys.push(key);
                    reps.push(child);
                    audits.push(Vec::new());
                    trans.extend(std::iter::repeat_n(None, alphabet));
                    id
                }
            };
            trans[next_state * alphabet + s] = Some(id);
        }
        next_state += 1;
    }

    // audit: the recorded transitions must reproduce on other representatives
    let audit_jobs: Vec<(u32, Word)> = audits
        .iter()
        .enumerate()
        .flat_map(|(id, ws)| ws.iter().map(move |w| (id as u32, w.clone())))
        .collect();
    audit_jobs
        .par_iter()
        .map(|(id, w)| {
            for s in 0..alphabet as Gen {
                let recorded = trans[*id as usize * alphabet + s as usize];
                if oracle.is_canonical_child(w, s)? {
                    let child_key = key_of(&w.child(s))?;
                    match recorded {
                        Some(t) if keys[t as usize] == child_key => {}
                        _ => {
                            return Err(Error::Incomplete(format!(
                                "state {id} representative {w:?} disagrees with the \
                                 recorded transition on letter {s}; lookahead \
                                 {lookahead} is too small"
                            )));
                        }
                    }
                } else if recorded.is_some() {
                    return Err(Error::Incomplete(format!(
                        "state {id} representative {w:?} lacks the recorded \
                         canonical child on letter {s}; lookahead {lookahead} is too small"
                    )));
                }
            }
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;

    let rep_depth = reps.iter().map(Word::len).max().unwrap_or(0);
    Ok(ShortlexFsa {
        alphabet,
        start: 0,
        trans,
        reps: Some(reps),
        lookahead,
        rep_depth,
    })
}

impl ShortlexFsa {
    pub fn num_states(&self) -> usize {
        self.trans.len() / self.alphabet
    }

    pub fn alphabet_len(&self) -> usize {
        self.alphabet
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    pub fn rep_depth(&self) -> usize {
        self.rep_depth
    }

    pub fn transition(&self, state: u32, letter: Gen) -> Option<u32> {
        self.trans[state as usize * self.alphabet + letter as usize]
    }

    pub fn representative(&self, state: u32) -> Option<&Word> {
        self.reps.as_ref().map(|r| &r[state as usize])
    }

    /// State reached by reading `w` from the start, if every letter is
    /// readable.
    pub fn state_of(&self, w: &Word) -> Option<u32> {
        let mut st = self.start;
        for s in w.iter() {
            st = self.transition(st, s)?;
        }
        Some(st)
    }

    pub fn accepts(&self, w: &Word) -> bool {
        self.state_of(w).is_some()
    }

    /// Number of length-`n` words in the language (= sphere size when the
    /// automaton is correct). Exact in u128; overflow is an error.
    pub fn sphere_count(&self, n: usize) -> Result<u128> {
        let ns = self.num_states();
        let mut cur = vec![0u128; ns];
        cur[self.start as usize] = 1;
        for _ in 0..n {
            let mut next = vec![0u128; ns];
            for (st, &count) in cur.iter().enumerate() {
                if count == 0 {
                    continue;
                }
                for s in 0..self.alphabet {
                    if let Some(t) = self.trans[st * self.alphabet + s] {
                        next[t as usize] = next[t as usize].checked_add(count).ok_or_else(
                            || Error::OutOfRange(format!("path count overflow at length {n}")),
                        )?;
                    }
                }
            }
            cur = next;
        }
        Ok(cur.iter().sum())
    }

    /// All length-`n` words of the language, in shortlex order.
    pub fn enumerate_level(&self, n: usize, budget: usize) -> Result<Vec<Word>> {
        let mut level: Vec<(Word, u32)> = vec![(Word::empty(), self.start)];
        for _ in 0..n {
            let mut next = Vec::new();
            for (w, st) in &level {
                for s in 0..self.alphabet as Gen {
                    if let Some(t) = self.transition(*st, s) {
                        next.push((w.child(s), t));
                        if next.len() > budget {
                            return Err(Error::Resource {
                                what: format!("language level {n} exceeds budget {budget}"),
                                completed: None,
                            });
                        }
                    }
                }
            }
            level = next;
        }
        Ok(level.into_iter().map(|(w, _)| w).collect())
    }

    /// Adjacency counts: `matrix[j][i]` = number of letters taking state `i`
    /// to state `j` (column-to-row convention, successors counted with
    /// multiplicity).
    pub fn adjacency(&self) -> Vec<Vec<u64>> {
        let ns = self.num_states();
        let mut m = vec![vec![0u64; ns]; ns];
        for (i, row) in self.trans.chunks(self.alphabet).enumerate() {
            for j in row.iter().flatten() {
                m[*j as usize][i] += 1;
            }
        }
        m
    }

    /// Successor states of `state`, with multiplicity.
    pub fn successors(&self, state: u32) -> impl Iterator<Item = u32> + '_ {
        let base = state as usize * self.alphabet;
        self.trans[base..base + self.alphabet]
            .iter()
            .flatten()
            .copied()
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("states: {}\n", self.num_states()));
        out.push_str(&format!("start: {}\n", self.start));
        for st in 0..self.num_states() {
            for s in 0..self.alphabet {
                if let Some(t) = self.trans[st * self.alphabet + s] {
                    out.push_str(&format!("trans: {st} {s} {t}\n"));
                }
            }
        }
        out
    }

    /// Parse the line format produced by [`ShortlexFsa::serialize`]. The
    /// presentation supplies the alphabet size.
    pub fn parse(pres: &Presentation, text: &str) -> Result<ShortlexFsa> {
        let alphabet = pres.alphabet_len();
        let mut n_states: Option<usize> = None;
        let mut start: Option<u32> = None;
        let mut triples: Vec<(usize, usize, u32)> = Vec::new();
        for (lno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| {
                Error::Input(format!("fsa line {}: {what}: `{line}`", lno + 1))
            };
            if let Some(rest) = line.strip_prefix("states:") {
                n_states = Some(
                    rest.trim()
                        .parse::<usize>()
                        .map_err(|_| bad("unreadable state count"))?,
                );
            } else if let Some(rest) = line.strip_prefix("start:") {
                start = Some(
                    rest.trim()
                        .parse::<u32>()
                        .map_err(|_| bad("unreadable start state"))?,
                );
            } else if let Some(rest) = line.strip_prefix("trans:") {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(bad("expected `trans: <state> <letter> <state>`"));
                }
                let src: usize = toks[0].parse().map_err(|_| bad("unreadable source"))?;
                let letter: usize = toks[1].parse().map_err(|_| bad("unreadable letter"))?;
                let dst: u32 = toks[2].parse().map_err(|_| bad("unreadable target"))?;
                triples.push((src, letter, dst));
            } else {
                return Err(bad("unrecognized directive"));
            }
        }
        let n_states = n_states.ok_or_else(|| Error::Input("missing states: line".into()))?;
        let start = start.ok_or_else(|| Error::Input("missing start: line".into()))?;
        if (start as usize) >= n_states {
            return Err(Error::Input("start state out of range".into()));
        }
        let mut trans = vec![None; n_states * alphabet];
        for (src, letter, dst) in triples {
            if src >= n_states || (dst as usize) >= n_states || letter >= alphabet {
                return Err(Error::Input(format!(
                    "transition ({src}, {letter}, {dst}) out of range"
                )));
            }
            if trans[src * alphabet + letter].is_some() {
                return Err(Error::Input(format!(
                    "duplicate transition from state {src} on letter {letter}"
                )));
            }
            trans[src * alphabet + letter] = Some(dst);
        }
        Ok(ShortlexFsa {
            alphabet,
            start,
            trans,
            reps: None,
            lookahead: 0,
            rep_depth: 0,
        })
    }
}

/// One level of the agreement check between the automaton language and the
/// oracle-enumerated sphere.
#[derive(Clone, Debug)]
pub struct LevelCheck {
    pub n: usize,
    pub enumerated: u64,
    pub accepted: u64,
    /// canonical words the automaton rejects (capped sample)
    pub missing: Vec<Word>,
    /// accepted words that are not canonical (capped sample)
    pub extra: Vec<Word>,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub radius: usize,
    pub levels: Vec<LevelCheck>,
    /// state reachability defect (states with no path from start)
    pub unreachable_states: usize,
}

impl ValidationReport {
    pub fn agreement(&self) -> bool {
        self.unreachable_states == 0
            && self
                .levels
                .iter()
                .all(|l| l.enumerated == l.accepted && l.missing.is_empty() && l.extra.is_empty())
    }
}

const SAMPLE_CAP: usize = 5;

/// Compare the automaton's language against oracle enumeration, level by
/// level up to `radius`. Also checks the path-count identity (DP counts equal
/// enumerated counts) and state reachability.
pub fn validate_fsa(
    oracle: &GroupOracle,
    fsa: &ShortlexFsa,
    radius: usize,
) -> Result<ValidationReport> {
    let mut levels = Vec::new();
    let mut bfs: Vec<Word> = vec![Word::empty()];
    let k = oracle.presentation().alphabet_len() as Gen;
    for n in 0..=radius {
        let accepted_words = fsa.enumerate_level(n, 60_000_000)?;
        // both lists are shortlex-sorted: set difference by merge
        let mut missing = Vec::new();
        let mut extra = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < bfs.len() || j < accepted_words.len() {
            if j >= accepted_words.len()
                || (i < bfs.len() && bfs[i] < accepted_words[j])
            {
                if missing.len() < SAMPLE_CAP {
                    missing.push(bfs[i].clone());
                }
                i += 1;
            } else if i >= bfs.len() || accepted_words[j] < bfs[i] {
                if extra.len() < SAMPLE_CAP {
                    extra.push(accepted_words[j].clone());
                }
                j += 1;
            } else {
                i += 1;
                j += 1;
            }
        }
        // path-count identity
        let dp = fsa.sphere_count(n)?;
        if dp != accepted_words.len() as u128 {
            return Err(Error::Incomplete(format!(
                "path-count identity broken at length {n}: DP {dp} vs enumeration {}",
                accepted_words.len()
            )));
        }
        levels.push(LevelCheck {
            n,
            enumerated: bfs.len() as u64,
            accepted: accepted_words.len() as u64,
            missing,
            extra,
        });
        if n == radius {
            break;
        }
        let batches: Result<Vec<Vec<Word>>> = bfs
            .par_iter()
            .map(|w| {
                let mut kids = Vec::new();
                for s in 0..k {
                    if oracle.is_canonical_child(w, s)? {
                        kids.push(w.child(s));
                    }
                }
                Ok(kids)
            })
            .collect();
        bfs = batches?.into_iter().flatten().collect();
    }

    // reachability sweep
    let ns = fsa.num_states();
    let mut seen = vec![false; ns];
    let mut stack = vec![fsa.start()];
    seen[fsa.start() as usize] = true;
    while let Some(st) = stack.pop() {
        for t in fsa.successors(st) {
            if !seen[t as usize] {
                seen[t as usize] = true;
                stack.push(t);
            }
        }
    }
    let unreachable_states = seen.iter().filter(|&&b| !b).count();

    Ok(ValidationReport {
        radius,
        levels,
        unreachable_states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presentation::standard;

    #[test]
    fn line_fsa_has_three_states() {
        let o = GroupOracle::new(standard::line()).unwrap();
        let fsa = build_shortlex_fsa(&o, 1, 10_000).unwrap();
        assert_eq!(fsa.num_states(), 3);
        let rep = validate_fsa(&o, &fsa, 6).unwrap();
        assert!(rep.agreement());
    }

    #[test]
    fn free2_fsa_has_five_states() {
        let o = GroupOracle::new(standard::free2()).unwrap();
        let fsa = build_shortlex_fsa(&o, 1, 10_000).unwrap();
        assert_eq!(fsa.num_states(), 5);
        let rep = validate_fsa(&o, &fsa, 6).unwrap();
        assert!(rep.agreement());
        assert_eq!(fsa.sphere_count(4).unwrap(), 108);
        assert_eq!(fsa.sphere_count(10).unwrap(), 4 * 3u128.pow(9));
    }

    #[test]
    fn free2_language_is_freely_reduced_words() {
        let o = GroupOracle::new(standard::free2()).unwrap();
        let p = o.presentation().clone();
        let fsa = build_shortlex_fsa(&o, 1, 10_000).unwrap();
        assert!(fsa.accepts(&p.parse_word("abAb").unwrap()));
        assert!(!fsa.accepts(&p.parse_word("abBa").unwrap()));
        assert_eq!(fsa.state_of(&Word::empty()), Some(fsa.start()));
    }

    #[test]
    fn genus2_fsa_validates_at_small_radius() {
        let o = GroupOracle::new(standard::genus2()).unwrap();
        let fsa = build_shortlex_fsa(&o, 3, 10_000).unwrap();
        assert_eq!(fsa.num_states(), 36);
        let rep = validate_fsa(&o, &fsa, 5).unwrap();
        assert!(
            rep.agreement(),
            "levels: {:?}",
            rep.levels
                .iter()
                .map(|l| (l.n, l.enumerated, l.accepted))
                .collect::<Vec<_>>()
        );
        assert_eq!(fsa.sphere_count(5).unwrap(), 19096);
        assert_eq!(fsa.sphere_count(6).unwrap(), 133288);
        // higher lookaheads agree on the state count
        assert_eq!(build_shortlex_fsa(&o, 4, 10_000).unwrap().num_states(), 36);
        // and an insufficient lookahead is detected, not silently accepted
        assert!(matches!(
            build_shortlex_fsa(&o, 2, 10_000),
            Err(Error::Incomplete(_))
        ));
    }

    #[test]
    fn mutated_fsa_is_caught() {
        let o = GroupOracle::new(standard::free2()).unwrap();
        let fsa = build_shortlex_fsa(&o, 1, 10_000).unwrap();
        let mut text = fsa.serialize();
        // delete the last transition line
        let cut = text.trim_end().rfind('\n').unwrap();
        text.truncate(cut + 1);
        let broken = ShortlexFsa::parse(o.presentation(), &text).unwrap();
        let rep = validate_fsa(&o, &broken, 4).unwrap();
        assert!(!rep.agreement());
        assert!(rep.levels.iter().any(|l| !l.missing.is_empty()));
    }

    #[test]
    fn wrong_group_fsa_mismatches_by_radius_two() {
        let line = GroupOracle::new(standard::line()).unwrap();
        let line_fsa = build_shortlex_fsa(&line, 1, 10_000).unwrap();
        // validate the ℤ automaton against F₂'s oracle: alphabet sizes differ,
        // so compare counts directly instead
        let f2 = GroupOracle::new(standard::free2()).unwrap();
        let f2_fsa = build_shortlex_fsa(&f2, 1, 10_000).unwrap();
        assert_ne!(
            line_fsa.sphere_count(2).unwrap(),
            f2_fsa.sphere_count(2).unwrap()
        );
    }

    #[test]
    fn serialization_roundtrip_is_bit_exact() {
        let o = GroupOracle::new(standard::free2()).unwrap();
        let fsa = build_shortlex_fsa(&o, 1, 10_000).unwrap();
        let text = fsa.serialize();
        let back = ShortlexFsa::parse(o.presentation(), &text).unwrap();
        assert_eq!(text, back.serialize());
        let rep = validate_fsa(&o, &back, 5).unwrap();
        assert!(rep.agreement());
    }

    #[test]
    fn adjacency_counts_multiplicity() {
        let o = GroupOracle::new(standard::line()).unwrap();
        let fsa = build_shortlex_fsa(&o, 1, 10_000).unwrap();
        let m = fsa.adjacency();
        let total: u64 = m.iter().flatten().sum();
        // ε has 2 outgoing, each ray state 1
        assert_eq!(total, 4);
    }
}
