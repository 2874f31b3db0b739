//! Finite symmetric presentations and the small-cancellation certificate.
//!
//! The text format is line oriented:
//!
//! ```text
//! # genus-2 surface group
//! generators: a A b B c C d D
//! relator: abABcdCD
//! ```
//!
//! The `generators:` line lists the alphabet in lexicographic order; each
//! letter is immediately followed by its formal inverse (a letter equal to
//! its successor denotes an involution). Relators are written as contiguous
//! letter strings and are cyclically reduced on load.

use crate::error::{Error, Result};
use crate::word::{Gen, Word};

/// One rotation of a relator (or of an inverse relator), precomputed for the
/// rewriting oracle. A factor of a word equal to `word[..k]` with `k` over
/// half the length can be replaced by the inverse of `word[k..]`.
#[derive(Clone, Debug)]
pub struct Rotation {
    pub word: Word,
}

#[derive(Clone, Debug)]
pub struct Presentation {
    symbols: Vec<char>,
    inv: Vec<Gen>,
    relators: Vec<Word>,
    rotations: Vec<Rotation>,
    /// rotation indices grouped by first letter, for fast factor scans
    rot_by_first: Vec<Vec<u32>>,
}

/// Outcome of the metric small-cancellation test.
#[derive(Clone, Debug)]
pub struct SmallCancellation {
    /// length of the longest piece (common factor of two distinct positions
    /// among all rotations), 0 when there is at most one rotation
    pub max_piece: usize,
    /// length of the shortest relator
    pub min_relator: usize,
    /// whether every piece is shorter than one sixth of every relator
    /// containing it
    pub c_one_sixth: bool,
}

impl Presentation {
    pub fn new(symbols: Vec<char>, inv: Vec<Gen>, relators: Vec<Word>) -> Result<Presentation> {
        if symbols.is_empty() {
            return Err(Error::Input("empty generator list".into()));
        }
        if symbols.len() > 64 {
            return Err(Error::Input("alphabet too large (max 64)".into()));
        }
        if inv.len() != symbols.len() {
            return Err(Error::Input("inverse table length mismatch".into()));
        }
        let n = symbols.len();
        for (i, &j) in inv.iter().enumerate() {
            if (j as usize) >= n || inv[j as usize] as usize != i {
                return Err(Error::Input(format!(
                    "inverse table is not an involution at letter {}",
                    symbols[i]
                )));
            }
        }
        {
            let mut seen = symbols.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != symbols.len() {
                return Err(Error::Input("duplicate generator symbol".into()));
            }
        }
        let mut p = Presentation {
            symbols,
            inv,
            relators: Vec::new(),
            rotations: Vec::new(),
            rot_by_first: Vec::new(),
        };
        let relators = relators
            .into_iter()
            .map(|r| {
                let c = p.cyclic_reduce(&r);
                if c.is_empty() {
                    Err(Error::Input("relator reduces to the identity".into()))
                } else {
                    Ok(c)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        p.relators = relators;
        p.build_rotations();
        Ok(p)
    }

    fn build_rotations(&mut self) {
        let mut rots: Vec<Word> = Vec::new();
        for r in &self.relators {
            for base in [r.clone(), self.free_inverse(r)] {
                let n = base.len();
                for s in 0..n {
                    let mut w = Word::empty();
                    for i in 0..n {
                        w.push(base.as_slice()[(s + i) % n]);
                    }
                    rots.push(w);
                }
            }
        }
        rots.sort();
        rots.dedup();
        self.rot_by_first = vec![Vec::new(); self.symbols.len()];
        for (i, w) in rots.iter().enumerate() {
            self.rot_by_first[w.first().unwrap() as usize].push(i as u32);
        }
        self.rotations = rots.into_iter().map(|word| Rotation { word }).collect();
    }

    pub fn alphabet_len(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn relators(&self) -> &[Word] {
        &self.relators
    }

    pub fn rotations(&self) -> &[Rotation] {
        &self.rotations
    }

    pub fn rotations_starting_with(&self, g: Gen) -> &[u32] {
        &self.rot_by_first[g as usize]
    }

    pub fn inv(&self, g: Gen) -> Gen {
        self.inv[g as usize]
    }

    pub fn symbol(&self, g: Gen) -> char {
        self.symbols[g as usize]
    }

    pub fn gen_of_symbol(&self, c: char) -> Result<Gen> {
        self.symbols
            .iter()
            .position(|&s| s == c)
            .map(|i| i as Gen)
            .ok_or_else(|| Error::Input(format!("unknown generator symbol `{c}`")))
    }

    /// Formal inverse of a word (letterwise inverse, reversed). No reduction.
    pub fn free_inverse(&self, w: &Word) -> Word {
        let mut out = Word::empty();
        for g in w.as_slice().iter().rev() {
            out.push(self.inv(*g));
        }
        out
    }

    /// Cancel adjacent inverse pairs until none remain.
    pub fn free_reduce(&self, w: &Word) -> Word {
        let mut out = Word::empty();
        for g in w.iter() {
            if out.last() == Some(self.inv(g)) {
                out.pop();
            } else {
                out.push(g);
            }
        }
        out
    }

    fn cyclic_reduce(&self, w: &Word) -> Word {
        let mut r = self.free_reduce(w);
        loop {
            match (r.first(), r.last()) {
                (Some(f), Some(l)) if r.len() >= 2 && l == self.inv(f) => {
                    let inner = Word::from_slice(&r.as_slice()[1..r.len() - 1]);
                    r = self.free_reduce(&inner);
                }
                _ => return r,
            }
        }
    }

    /// Parse a contiguous letter string into a word.
    pub fn parse_word(&self, s: &str) -> Result<Word> {
        if s == "-" {
            return Ok(Word::empty());
        }
        let mut w = Word::empty();
        for c in s.chars() {
            w.push(self.gen_of_symbol(c)?);
        }
        Ok(w)
    }

    pub fn format_word(&self, w: &Word) -> String {
        if w.is_empty() {
            return "-".into();
        }
        w.iter().map(|g| self.symbol(g)).collect()
    }

    /// Longest-piece computation. A piece is a factor that occurs at two
    /// distinct positions among the rotations of the relators and their
    /// inverses (distinct rotation, or distinct offset in the same rotation,
    /// so a self-overlapping relator such as `aaaa` is caught).
    pub fn small_cancellation(&self) -> SmallCancellation {
        // Rotations with multiplicity: one entry per (relator-or-inverse,
        // starting offset), tagged with the parent relator length. A common
        // prefix of two entries is exactly a factor occurring at two distinct
        // positions.
        let mut rots: Vec<(Word, usize)> = Vec::new();
        for r in &self.relators {
            for base in [r.clone(), self.free_inverse(r)] {
                let n = base.len();
                for s in 0..n {
                    let mut w = Word::empty();
                    for i in 0..n {
                        w.push(base.as_slice()[(s + i) % n]);
                    }
                    rots.push((w, n));
                }
            }
        }
        let min_relator = self.relators.iter().map(Word::len).min().unwrap_or(0);
        let mut max_piece = 0usize;
        let mut c_one_sixth = true;
        for i in 0..rots.len() {
            for j in (i + 1)..rots.len() {
                let a = rots[i].0.as_slice();
                let b = rots[j].0.as_slice();
                let mut k = 0;
                while k < a.len() && k < b.len() && a[k] == b[k] {
                    k += 1;
                }
                max_piece = max_piece.max(k);
                // the piece is a factor of both parent relators
                if 6 * k >= rots[i].1 || 6 * k >= rots[j].1 {
                    c_one_sixth = false;
                }
            }
        }
        SmallCancellation {
            max_piece,
            min_relator,
            c_one_sixth,
        }
    }

    pub fn is_free(&self) -> bool {
        self.relators.is_empty()
    }

    /// Stable 64-bit fingerprint of the presentation, used to tie patch files
    /// to the presentation they were generated from.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the canonical serialization
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        };
        for &c in &self.symbols {
            eat(c as u8);
        }
        eat(0xff);
        for &g in &self.inv {
            eat(g);
        }
        eat(0xff);
        for r in &self.relators {
            for g in r.iter() {
                eat(g);
            }
            eat(0xfe);
        }
        h
    }

    pub fn parse(text: &str) -> Result<Presentation> {
        let mut symbols: Vec<char> = Vec::new();
        let mut inv: Vec<Gen> = Vec::new();
        let mut relator_strs: Vec<String> = Vec::new();
        for (lno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("generators:") {
                if !symbols.is_empty() {
                    return Err(Error::Input("duplicate generators line".into()));
                }
                let toks: Vec<&str> = rest.split_whitespace().collect();
                let mut i = 0;
                while i < toks.len() {
                    let t = toks[i];
                    if t.chars().count() != 1 {
                        return Err(Error::Input(format!(
                            "line {}: generator symbols are single characters, got `{t}`",
                            lno + 1
                        )));
                    }
                    let c = t.chars().next().unwrap();
                    if i + 1 >= toks.len() {
                        return Err(Error::Input(format!(
                            "line {}: generator `{c}` has no inverse listed",
                            lno + 1
                        )));
                    }
                    let t2 = toks[i + 1];
                    let c2 = t2.chars().next().unwrap();
                    if t2.chars().count() != 1 {
                        return Err(Error::Input(format!(
                            "line {}: generator symbols are single characters, got `{t2}`",
                            lno + 1
                        )));
                    }
                    if c == c2 {
                        // involution: letter is its own inverse
                        symbols.push(c);
                        let k = (symbols.len() - 1) as Gen;
                        inv.push(k);
                    } else {
                        symbols.push(c);
                        symbols.push(c2);
                        let k = symbols.len() as Gen;
                        inv.push(k - 1);
                        inv.push(k - 2);
                    }
                    i += 2;
                }
            } else if let Some(rest) = line.strip_prefix("relator:") {
                relator_strs.push(rest.trim().to_string());
            } else {
                return Err(Error::Input(format!(
                    "line {}: unrecognized directive `{line}`",
                    lno + 1
                )));
            }
        }
        if symbols.is_empty() {
            return Err(Error::Input("missing generators line".into()));
        }
        // temporary presentation to parse relator strings against
        let proto = Presentation::new(symbols.clone(), inv.clone(), Vec::new())?;
        let relators = relator_strs
            .iter()
            .map(|s| proto.parse_word(s))
            .collect::<Result<Vec<_>>>()?;
        Presentation::new(symbols, inv, relators)
    }

    /// Canonical text serialization; `parse` of the output reproduces the
    /// presentation byte for byte.
    pub fn serialize(&self) -> String {
        let mut out = String::from("generators:");
        let mut i = 0;
        while i < self.symbols.len() {
            let j = self.inv[i] as usize;
            if j == i {
                out.push_str(&format!(" {0} {0}", self.symbols[i]));
                i += 1;
            } else {
                out.push_str(&format!(" {} {}", self.symbols[i], self.symbols[j]));
                i += 2;
            }
        }
        out.push('\n');
        for r in &self.relators {
            out.push_str(&format!("relator: {}\n", self.format_word(r)));
        }
        out
    }
}

/// The three groups exercised throughout the test suite.
pub mod standard {
    use super::Presentation;

    /// ℤ = ⟨ t ⟩.
    pub fn line() -> Presentation {
        Presentation::parse("generators: t T").unwrap()
    }

    /// Free group of rank 2.
    pub fn free2() -> Presentation {
        Presentation::parse("generators: a A b B").unwrap()
    }

    /// Genus-2 surface group, one octagonal relator.
    pub fn genus2() -> Presentation {
        Presentation::parse("generators: a A b B c C d D\nrelator: abABcdCD").unwrap()
    }
}
