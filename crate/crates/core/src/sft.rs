//! Generic pattern-rule checking over group balls, distance-N colorings,
//! and product configurations.
//!
//! A subshift of finite type is cut out by finitely many local rules: a
//! configuration assigns a symbol to every element, and membership is
//! decided window by window — the pattern seen in the radius-r ball around
//! each element must belong to an allowed dictionary (or avoid a forbidden
//! list; the two forms are interconvertible for finite windows). The
//! distance-N coloring kills finite-order symmetries: any isometry fixing a
//! properly colored configuration cannot move an element within distance N
//! of itself. Products of rule sets run componentwise, so independent
//! constraint layers combine into one subshift.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::oracle::GroupOracle;
use crate::presentation::Presentation;
use crate::shelling::{LocalData, LocalFrame, RuleDictionary, DH_UNDEF};
use crate::word::{Gen, Word};

// ---------------------------------------------------------------------------
// Pattern rule sets.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    /// Patterns list everything that may appear.
    Allow,
    /// Patterns list what must not appear.
    Forbid,
}

/// A finite set of local rules: total symbol patterns over the radius-r
/// ball, either allowed (dictionary form) or forbidden.
///
/// Window positions are the canonical ball enumeration — position 0 is the
/// anchor, later positions are reached by walking one generator from an
/// earlier position — so the same rule set applies at every anchor cell of
/// any frame of the same presentation.
pub struct PatternRuleSet {
    pub alphabet: Vec<String>,
    pub window: usize,
    pub polarity: Polarity,
    window_words: Vec<Word>,
    window_tree: Vec<(u32, Gen)>,
    patterns: HashSet<Vec<u16>>,
}

/// Per non-anchor window position: the earlier position and letter that
/// reach it.
type WindowTree = Vec<(u32, Gen)>;

/// Window offsets of radius `window`, read off the frame's own ball
/// enumeration: the offset words and the walk tree connecting them.
fn window_structure(frame: &LocalFrame, window: usize) -> Result<(Vec<Word>, WindowTree)> {
    if window == 0 {
        return Err(Error::Input("window radius must be at least 1".into()));
    }
    if window > frame.radius() {
        return Err(Error::Input(format!(
            "window radius {window} exceeds the validated ball radius {}",
            frame.radius()
        )));
    }
    let end = frame.cells_at_level(window).end;
    let words: Vec<Word> = (0..end).map(|c| frame.word(c).clone()).collect();
    let tree: Vec<(u32, Gen)> = (1..end)
        .map(|c| {
            let w = frame.word(c);
            let parent = frame
                .cell(&w.parent())
                .expect("ball enumeration is prefix-closed");
            (parent, w.last().expect("non-center cell"))
        })
        .collect();
    Ok((words, tree))
}

impl PatternRuleSet {
    /// Build a rule set over the given frame's presentation. Every pattern
    /// must be total on the window and use valid symbol indices; an empty
    /// allowed set is rejected (it forbids everything), an empty forbidden
    /// set is the full shift.
    pub fn new(
        frame: &LocalFrame,
        alphabet: Vec<String>,
        window: usize,
        polarity: Polarity,
        patterns: Vec<Vec<u16>>,
    ) -> Result<PatternRuleSet> {
        if alphabet.is_empty() {
            return Err(Error::Input("alphabet is empty".into()));
        }
        for s in &alphabet {
            if s.is_empty() || s.contains(char::is_whitespace) || s.contains('=') {
                return Err(Error::Input(format!(
                    "symbol `{s}` must be nonempty without whitespace or `=`"
                )));
            }
        }
        let mut seen = HashSet::new();
        for s in &alphabet {
            if !seen.insert(s) {
                return Err(Error::Input(format!("duplicate symbol `{s}`")));
            }
        }
        let (window_words, window_tree) = window_structure(frame, window)?;
        if polarity == Polarity::Allow && patterns.is_empty() {
            return Err(Error::Input(
                "an empty allowed set forbids every configuration".into(),
            ));
        }
        let mut set = HashSet::new();
        for p in patterns {
            if p.len() != window_words.len() {
                return Err(Error::Input(format!(
                    "pattern has {} entries but the window has {} positions",
                    p.len(),
                    window_words.len()
                )));
            }
            if let Some(&bad) = p.iter().find(|&&s| s as usize >= alphabet.len()) {
                return Err(Error::Input(format!(
                    "pattern uses symbol index {bad} outside the alphabet"
                )));
            }
            set.insert(p);
        }
        Ok(PatternRuleSet {
            alphabet,
            window,
            polarity,
            window_words,
            window_tree,
            patterns: set,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_words.len()
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    pub fn window_offsets(&self) -> &[Word] {
        &self.window_words
    }

    pub fn contains(&self, pattern: &[u16]) -> bool {
        self.patterns.contains(pattern)
    }

    /// A pattern is acceptable when it is allowed (dictionary form) or not
    /// forbidden.
    pub fn accepts(&self, pattern: &[u16]) -> bool {
        match self.polarity {
            Polarity::Allow => self.patterns.contains(pattern),
            Polarity::Forbid => !self.patterns.contains(pattern),
        }
    }

    /// Convert to the opposite polarity by enumerating the complement of
    /// the pattern set. Only feasible for small alphabet^window_len.
    pub fn complemented(&self) -> Result<PatternRuleSet> {
        let positions = self.window_len();
        let total = (self.alphabet.len() as f64).powi(positions as i32);
        if total > 1e6 {
            return Err(Error::Resource {
                what: format!(
                    "complementing a rule set with {total:.0} total patterns"
                ),
                completed: None,
            });
        }
        let mut complement = HashSet::new();
        let a = self.alphabet.len() as u16;
        let mut current = vec![0u16; positions];
        loop {
            if !self.patterns.contains(&current) {
                complement.insert(current.clone());
            }
            // Odometer increment.
            let mut i = 0;
            loop {
                if i == positions {
                    let polarity = match self.polarity {
                        Polarity::Allow => Polarity::Forbid,
                        Polarity::Forbid => Polarity::Allow,
                    };
                    if polarity == Polarity::Allow && complement.is_empty() {
                        return Err(Error::Input(
                            "complement is empty: the rule set forbids everything".into(),
                        ));
                    }
                    return Ok(PatternRuleSet {
                        alphabet: self.alphabet.clone(),
                        window: self.window,
                        polarity,
                        window_words: self.window_words.clone(),
                        window_tree: self.window_tree.clone(),
                        patterns: complement,
                    });
                }
                current[i] += 1;
                if current[i] < a {
                    break;
                }
                current[i] = 0;
                i += 1;
            }
        }
    }
}

/// A cell whose window pattern breaks the rules.
#[derive(Clone, Debug)]
pub struct PatternViolation {
    pub cell: u32,
    pub detail: String,
}

/// Walk the window anchored at `at`; `None` if it leaves the frame.
fn window_cells_at(
    frame: &LocalFrame,
    tree: &[(u32, Gen)],
    at: u32,
) -> Option<Vec<u32>> {
    let mut cells = Vec::with_capacity(tree.len() + 1);
    cells.push(at);
    for &(parent, letter) in tree {
        let base = cells[parent as usize];
        cells.push(frame.neighbor(base, letter)?);
    }
    Some(cells)
}

/// Check a configuration against a rule set. `config` assigns a symbol per
/// frame cell (`None` = undefined). With explicit `anchors`, a window that
/// leaves the defined region is itself a violation; without them, every
/// cell whose window is fully defined is checked and the rest are skipped
/// (truncation policy: boundary cells are unverifiable, not wrong).
pub fn check_pattern_rules(
    frame: &LocalFrame,
    rules: &PatternRuleSet,
    config: &[Option<u16>],
    anchors: Option<&[u32]>,
) -> Result<Vec<PatternViolation>> {
    if config.len() != frame.len() {
        return Err(Error::Input(format!(
            "configuration has {} cells but the frame has {}",
            config.len(),
            frame.len()
        )));
    }
    for s in config.iter().flatten() {
        if *s as usize >= rules.alphabet.len() {
            return Err(Error::Input(format!(
                "configuration uses symbol index {s} outside the alphabet"
            )));
        }
    }
    let explicit = anchors.is_some();
    let anchor_list: Vec<u32> = match anchors {
        Some(a) => a.to_vec(),
        None => (0..frame.len() as u32).collect(),
    };
    let mut out = Vec::new();
    let mut pattern = vec![0u16; rules.window_len()];
    for &at in &anchor_list {
        if at as usize >= frame.len() {
            return Err(Error::Input(format!("anchor {at} outside the frame")));
        }
        let cells = match window_cells_at(frame, &rules.window_tree, at) {
            Some(c) => c,
            None => {
                if explicit {
                    out.push(PatternViolation {
                        cell: at,
                        detail: "window leaves the frame".into(),
                    });
                }
                continue;
            }
        };
        let mut defined = true;
        for (slot, &c) in pattern.iter_mut().zip(&cells) {
            match config[c as usize] {
                Some(s) => *slot = s,
                None => {
                    defined = false;
                    break;
                }
            }
        }
        if !defined {
            if explicit {
                out.push(PatternViolation {
                    cell: at,
                    detail: "window leaves the configured domain".into(),
                });
            }
            continue;
        }
        if !rules.accepts(&pattern) {
            let rendered: Vec<&str> = pattern
                .iter()
                .map(|&s| rules.alphabet[s as usize].as_str())
                .collect();
            out.push(PatternViolation {
                cell: at,
                detail: match rules.polarity {
                    Polarity::Allow => {
                        format!("window pattern [{}] matches no allowed pattern", rendered.join(" "))
                    }
                    Polarity::Forbid => {
                        format!("window pattern [{}] is forbidden", rendered.join(" "))
                    }
                },
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dictionary adapter.
// ---------------------------------------------------------------------------

fn local_symbol(data: &LocalData, cell: u32) -> Option<String> {
    let dp = data.dp[cell as usize]?;
    let mut s = format!("s{}p{}h", data.state[cell as usize], dp);
    for g in 0..data.alphabet as Gen {
        let v = data.dh_at(cell, g);
        if v == DH_UNDEF {
            return None;
        }
        let _ = write!(s, "{v},");
    }
    Some(s)
}

/// Express a shortlex-shelling dictionary as an allowed-pattern rule set,
/// and encode the given local data over the same symbol table. The symbol
/// of a cell packs its automaton state, predecessor letter, and height
/// differentials; a cell with undefined entries (frame boundary) encodes as
/// `None`. Checking the returned configuration against the returned rules
/// at deep-interior anchors reproduces the dictionary clause of the
/// shortlex local-rule checker.
pub fn dictionary_rule_set(
    frame: &LocalFrame,
    dict: &RuleDictionary,
    data: &LocalData,
) -> Result<(PatternRuleSet, Vec<Option<u16>>)> {
    let window = 2 * dict.delta;
    if window == 0 {
        return Err(Error::Config(
            "a zero-radius dictionary window has no pattern content".into(),
        ));
    }
    let mut symbol_index: HashMap<String, u16> = HashMap::new();
    let mut alphabet: Vec<String> = Vec::new();
    let mut intern = |s: String, alphabet: &mut Vec<String>| -> u16 {
        if let Some(&i) = symbol_index.get(&s) {
            return i;
        }
        let i = alphabet.len() as u16;
        symbol_index.insert(s.clone(), i);
        alphabet.push(s);
        i
    };
    // Dictionary patterns first, in deterministic order.
    let mut states: Vec<u32> = dict.by_state.keys().copied().collect();
    states.sort_unstable();
    let mut patterns: Vec<Vec<u16>> = Vec::new();
    for st in states {
        for pat in &dict.by_state[&st] {
            let len = pat.state.len();
            let mut encoded = Vec::with_capacity(len);
            for i in 0..len {
                let mut s = format!("s{}p{}h", pat.state[i], pat.dp[i]);
                for g in 0..data.alphabet {
                    let _ = write!(s, "{},", pat.dh[i * data.alphabet + g]);
                }
                encoded.push(intern(s, &mut alphabet));
            }
            patterns.push(encoded);
        }
    }
    // Then the configuration's own symbols, so unmatched-but-defined cells
    // stay checkable (and simply match nothing).
    let config: Vec<Option<u16>> = (0..frame.len() as u32)
        .map(|c| local_symbol(data, c).map(|s| intern(s, &mut alphabet)))
        .collect();
    let rules = PatternRuleSet::new(frame, alphabet, window, Polarity::Allow, patterns)?;
    Ok((rules, config))
}

// ---------------------------------------------------------------------------
// Distance-N colorings.
// ---------------------------------------------------------------------------

pub struct TorsionColoring {
    pub n: usize,
    pub colors_used: usize,
    /// Color per frame cell.
    pub color: Vec<u32>,
}

/// All frame cells at group distance 1..=n from `cell`, via multiplication
/// by the nonidentity ball offsets (exact: the offsets enumerate B(n)).
fn ball_neighbors(
    oracle: &GroupOracle,
    frame: &LocalFrame,
    offsets: &[Word],
    cell: u32,
) -> Result<Vec<u32>> {
    let base = frame.word(cell);
    let mut out = Vec::with_capacity(offsets.len());
    for off in offsets {
        let mut w = base.clone();
        for g in off.iter() {
            w = oracle.ext(&w, g)?;
        }
        if let Some(c2) = frame.cell(&w) {
            out.push(c2);
        }
    }
    Ok(out)
}

/// Greedy proper distance-N coloring of the frame's ball in canonical
/// order: each cell takes the least color unused within distance N among
/// already-colored cells. Since at most #B(N,1) − 1 earlier cells are that
/// close, at most #B(N,1) colors are ever needed — the counting argument
/// that kills torsion: a color-preserving isometry can move no element
/// within distance N of itself.
pub fn torsion_coloring(
    oracle: &GroupOracle,
    frame: &LocalFrame,
    n: usize,
) -> Result<TorsionColoring> {
    if n == 0 {
        return Err(Error::Input("coloring distance must be at least 1".into()));
    }
    if n > frame.radius() {
        return Err(Error::Input(format!(
            "coloring distance {n} exceeds the ball radius {}",
            frame.radius()
        )));
    }
    let ball_n = frame.cells_at_level(n).end;
    let offsets: Vec<Word> = (1..ball_n).map(|c| frame.word(c).clone()).collect();
    let mut color = vec![u32::MAX; frame.len()];
    let mut used = vec![false; ball_n as usize];
    let mut colors_used = 0usize;
    for cell in 0..frame.len() as u32 {
        used.iter_mut().for_each(|u| *u = false);
        for c2 in ball_neighbors(oracle, frame, &offsets, cell)? {
            let c = color[c2 as usize];
            if c != u32::MAX {
                used[c as usize] = true;
            }
        }
        let mex = used
            .iter()
            .position(|&u| !u)
            .expect("at most #B(N) - 1 neighbors are colored") as u32;
        color[cell as usize] = mex;
        colors_used = colors_used.max(mex as usize + 1);
    }
    Ok(TorsionColoring {
        n,
        colors_used,
        color,
    })
}

/// Exhaustively verify a distance-N coloring: every pair of cells at group
/// distance ≤ n must have distinct colors. Returns the violating pairs.
pub fn check_coloring(
    oracle: &GroupOracle,
    frame: &LocalFrame,
    coloring: &TorsionColoring,
    n: usize,
) -> Result<Vec<(u32, u32)>> {
    if coloring.color.len() != frame.len() {
        return Err(Error::Input(format!(
            "coloring has {} cells but the frame has {}",
            coloring.color.len(),
            frame.len()
        )));
    }
    let ball_n = frame.cells_at_level(n.min(frame.radius())).end;
    let offsets: Vec<Word> = (1..ball_n).map(|c| frame.word(c).clone()).collect();
    let mut bad = Vec::new();
    for cell in 0..frame.len() as u32 {
        for c2 in ball_neighbors(oracle, frame, &offsets, cell)? {
            if c2 > cell && coloring.color[c2 as usize] == coloring.color[cell as usize] {
                bad.push((cell, c2));
            }
        }
    }
    Ok(bad)
}

// ---------------------------------------------------------------------------
// Product configurations.
// ---------------------------------------------------------------------------

/// Pair two configurations cellwise over the product alphabet: the symbol
/// is `s1·a2 + s2`, undefined wherever either factor is.
pub fn product_config(
    c1: &[Option<u16>],
    a1: usize,
    c2: &[Option<u16>],
    a2: usize,
) -> Result<Vec<Option<u16>>> {
    if c1.len() != c2.len() {
        return Err(Error::Input(format!(
            "configurations live on different domains ({} vs {} cells)",
            c1.len(),
            c2.len()
        )));
    }
    if a1.saturating_mul(a2) > u16::MAX as usize {
        return Err(Error::Input(format!(
            "product alphabet {a1}×{a2} exceeds the symbol range"
        )));
    }
    c1.iter()
        .zip(c2)
        .map(|(x, y)| match (x, y) {
            (Some(s1), Some(s2)) => {
                if *s1 as usize >= a1 || *s2 as usize >= a2 {
                    Err(Error::Input(format!(
                        "symbol ({s1}, {s2}) outside the {a1}×{a2} alphabet"
                    )))
                } else {
                    Ok(Some(s1 * a2 as u16 + s2))
                }
            }
            _ => Ok(None),
        })
        .collect()
}

/// Split a product configuration back into its factors.
pub fn product_split(c: &[Option<u16>], a2: usize) -> (Vec<Option<u16>>, Vec<Option<u16>>) {
    let c1 = c.iter().map(|s| s.map(|v| v / a2 as u16)).collect();
    let c2 = c.iter().map(|s| s.map(|v| v % a2 as u16)).collect();
    (c1, c2)
}

/// Combine two allowed-form rule sets with the same window into one over
/// the product alphabet: a product pattern is allowed exactly when both
/// components are, so checking the product equals checking each factor.
pub fn product_rules(r1: &PatternRuleSet, r2: &PatternRuleSet) -> Result<PatternRuleSet> {
    if r1.polarity != Polarity::Allow || r2.polarity != Polarity::Allow {
        return Err(Error::Config(
            "product rules need allowed form; convert with complemented()".into(),
        ));
    }
    if r1.window_words != r2.window_words {
        return Err(Error::Config(
            "rule sets have different windows".into(),
        ));
    }
    let a2 = r2.alphabet.len();
    if r1.alphabet.len().saturating_mul(a2) > u16::MAX as usize {
        return Err(Error::Input("product alphabet exceeds the symbol range".into()));
    }
    let mut alphabet = Vec::with_capacity(r1.alphabet.len() * a2);
    for s1 in &r1.alphabet {
        for s2 in &r2.alphabet {
            alphabet.push(format!("{s1}|{s2}"));
        }
    }
    let mut patterns = HashSet::with_capacity(r1.patterns.len() * r2.patterns.len());
    for p1 in &r1.patterns {
        for p2 in &r2.patterns {
            let combined: Vec<u16> = p1
                .iter()
                .zip(p2)
                .map(|(&s1, &s2)| s1 * a2 as u16 + s2)
                .collect();
            patterns.insert(combined);
        }
    }
    Ok(PatternRuleSet {
        alphabet,
        window: r1.window,
        polarity: Polarity::Allow,
        window_words: r1.window_words.clone(),
        window_tree: r1.window_tree.clone(),
        patterns,
    })
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

fn offset_name(pres: &Presentation, w: &Word) -> String {
    if w.is_empty() {
        "1".into()
    } else {
        pres.format_word(w)
    }
}

/// Rule-set file format: `alphabet:`, `window:`, `polarity:` headers, then
/// one `allow:`/`forbid:` line per pattern listing `offset=symbol` pairs.
pub fn serialize_rules(pres: &Presentation, rules: &PatternRuleSet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "pattern-rules");
    let _ = writeln!(out, "presentation: {:016x}", pres.fingerprint());
    let _ = writeln!(out, "alphabet: {}", rules.alphabet.join(" "));
    let _ = writeln!(out, "window: {}", rules.window);
    let keyword = match rules.polarity {
        Polarity::Allow => "allow",
        Polarity::Forbid => "forbid",
    };
    let _ = writeln!(out, "polarity: {keyword}");
    let mut pats: Vec<&Vec<u16>> = rules.patterns.iter().collect();
    pats.sort();
    for p in pats {
        let entries: Vec<String> = rules
            .window_words
            .iter()
            .zip(p)
            .map(|(w, &s)| {
                format!("{}={}", offset_name(pres, w), rules.alphabet[s as usize])
            })
            .collect();
        let _ = writeln!(out, "{keyword}: {}", entries.join(" "));
    }
    out
}

pub fn parse_rules(
    pres: &Presentation,
    frame: &LocalFrame,
    text: &str,
) -> Result<PatternRuleSet> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next() != Some("pattern-rules") {
        return Err(Error::Input("missing `pattern-rules` header".into()));
    }
    let mut header = |key: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Input(format!("file ends before `{key}:`")))?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(':'))
            .map(|r| r.trim().to_string())
            .ok_or_else(|| Error::Input(format!("expected `{key}:`, found `{line}`")))
    };
    if header("presentation")? != format!("{:016x}", pres.fingerprint()) {
        return Err(Error::Input(
            "file was written for a different presentation".into(),
        ));
    }
    let alphabet: Vec<String> = header("alphabet")?
        .split_whitespace()
        .map(|s| s.to_string())
        .collect();
    let window: usize = header("window")?
        .parse()
        .map_err(|_| Error::Input("bad window radius".into()))?;
    let polarity = match header("polarity")?.as_str() {
        "allow" => Polarity::Allow,
        "forbid" => Polarity::Forbid,
        other => return Err(Error::Input(format!("bad polarity `{other}`"))),
    };
    let keyword = match polarity {
        Polarity::Allow => "allow:",
        Polarity::Forbid => "forbid:",
    };
    let symbol_index: HashMap<&str, u16> = alphabet
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u16))
        .collect();
    let (window_words, _) = window_structure(frame, window)?;
    let offset_index: HashMap<String, usize> = window_words
        .iter()
        .enumerate()
        .map(|(i, w)| (offset_name(pres, w), i))
        .collect();
    let mut patterns = Vec::new();
    for line in lines {
        let rest = line.strip_prefix(keyword).ok_or_else(|| {
            Error::Input(format!(
                "expected `{keyword}` pattern lines, found `{line}`"
            ))
        })?;
        let mut pattern = vec![u16::MAX; window_words.len()];
        for entry in rest.split_whitespace() {
            let (off, sym) = entry
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("bad pattern entry `{entry}`")))?;
            let pos = *offset_index
                .get(off)
                .ok_or_else(|| Error::Input(format!("`{off}` is not a window offset")))?;
            let s = *symbol_index
                .get(sym)
                .ok_or_else(|| Error::Input(format!("`{sym}` is not in the alphabet")))?;
            if pattern[pos] != u16::MAX {
                return Err(Error::Input(format!("offset `{off}` listed twice")));
            }
            pattern[pos] = s;
        }
        if pattern.contains(&u16::MAX) {
            return Err(Error::Input(format!(
                "pattern line does not cover the whole window: `{line}`"
            )));
        }
        patterns.push(pattern);
    }
    PatternRuleSet::new(frame, alphabet, window, polarity, patterns)
}
