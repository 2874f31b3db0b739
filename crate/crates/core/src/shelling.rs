//! Finite patches of shortlex shellings and their local rules.
//!
//! A *shelling* equips a group with three local fields: an integer height
//! `h` that decreases along a distinguished predecessor edge out of every
//! element, an automaton `state` per element, and the predecessor direction
//! `dp` itself (a generator moving from an element to its predecessor).
//! The canonical model is built from the shortlex structure: the height of
//! an element is its distance to the identity, the state is the shortlex
//! automaton state of its canonical word, and the predecessor strips the
//! last letter of the canonical word.
//!
//! This module materializes the model on finite ball-shaped domains — both
//! around the identity ([`model_shelling`]) and re-centered at a far-away
//! basepoint ([`generate_shelling_patch`]), which is how shellings look deep
//! inside the group — and checks the two layers of local rules:
//!
//! * [`check_preshelling`]: the height differential takes values in
//!   `{-1, 0, 1}`, is antisymmetric along edges, and integrates to zero
//!   around every defining-relator loop; the predecessor stays within
//!   distance one.
//! * [`check_shortlex_local_rules`]: the predecessor edge drops height by
//!   exactly one and is consistent with the automaton transitions, and the
//!   local data restricted to a radius-`2δ` window around each deep-interior
//!   cell matches a dictionary of window patterns harvested from the model
//!   at far-away basepoints.
//!
//! Heights, states and predecessor letters are stored per *cell*, where the
//! cells are the elements of a shared [`LocalFrame`] (a ball around the
//! identity with its adjacency precomputed). A translated patch at basepoint
//! `g0` stores the model's data at `g0·x` in the cell of `x`, with heights
//! shifted so the center has height zero.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;

use crate::ball::build_ball;
use crate::error::{Error, Result};
use crate::fsa::ShortlexFsa;
use crate::oracle::GroupOracle;
use crate::presentation::Presentation;
use crate::word::{Gen, Word};

/// Sentinel for a height difference whose far endpoint is outside the domain.
pub const DH_UNDEF: i8 = i8::MIN;

// ---------------------------------------------------------------------------
// Local frame: a ball with precomputed adjacency, shared by all patches.
// ---------------------------------------------------------------------------

/// A ball around the identity with cell indexing and adjacency tables.
///
/// Cells are canonical words ordered by length and then shortlex; they are
/// prefix-closed, so every non-center cell's parent (its canonical word minus
/// the last letter) is also a cell. Cell `0` is the center (empty word).
pub struct LocalFrame {
    radius: usize,
    alphabet: usize,
    cells: Vec<Word>,
    level_of: Vec<u8>,
    level_offsets: Vec<usize>,
    index: HashMap<Word, u32>,
    /// `adj[cell * alphabet + s]` = cell of `word·s`, or `-1` if outside.
    adj: Vec<i32>,
    /// Parent cell (word minus last letter); center points to itself.
    parent: Vec<u32>,
    /// Last letter of the cell's word; center has none.
    last: Vec<Option<Gen>>,
}

impl LocalFrame {
    /// Enumerate the ball of the given radius and precompute adjacency.
    /// `budget` caps the number of elements enumerated.
    pub fn build(oracle: &GroupOracle, radius: usize, budget: usize) -> Result<LocalFrame> {
        let ball = build_ball(oracle, radius, budget)?;
        let alphabet = oracle.presentation().alphabet_len();
        let mut cells: Vec<Word> = Vec::with_capacity(ball.ball_size() as usize);
        let mut level_of = Vec::new();
        let mut level_offsets = vec![0usize];
        for l in 0..=radius {
            for w in ball.sphere(l) {
                cells.push(w.clone());
                level_of.push(l as u8);
            }
            level_offsets.push(cells.len());
        }
        let index: HashMap<Word, u32> = cells
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let adj: Vec<i32> = cells
            .par_iter()
            .map(|w| {
                let mut row = vec![-1i32; alphabet];
                for (s, slot) in row.iter_mut().enumerate() {
                    let t = oracle.ext(w, s as Gen)?;
                    if let Some(&id) = index.get(&t) {
                        *slot = id as i32;
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<Vec<i32>>>>()?
            .into_iter()
            .flatten()
            .collect();
        let mut parent = vec![0u32; cells.len()];
        let mut last = vec![None; cells.len()];
        for (i, w) in cells.iter().enumerate().skip(1) {
            let p = w.parent();
            parent[i] = *index
                .get(&p)
                .expect("ball cells are prefix-closed");
            last[i] = w.last();
        }
        Ok(LocalFrame {
            radius,
            alphabet,
            cells,
            level_of,
            level_offsets,
            index,
            adj,
            parent,
            last,
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// The canonical word of a cell (identity-centered coordinates).
    pub fn word(&self, cell: u32) -> &Word {
        &self.cells[cell as usize]
    }

    /// The cell of a canonical word, if it lies in the ball.
    pub fn cell(&self, w: &Word) -> Option<u32> {
        self.index.get(w).copied()
    }

    /// Distance of a cell from the center.
    pub fn level(&self, cell: u32) -> usize {
        self.level_of[cell as usize] as usize
    }

    /// The cell reached by one generator step, if still inside the ball.
    pub fn neighbor(&self, cell: u32, s: Gen) -> Option<u32> {
        let v = self.adj[cell as usize * self.alphabet + s as usize];
        if v < 0 {
            None
        } else {
            Some(v as u32)
        }
    }

    /// Cell ids at a given distance from the center.
    pub fn cells_at_level(&self, level: usize) -> std::ops::Range<u32> {
        let lo = self.level_offsets[level] as u32;
        let hi = self.level_offsets[level + 1] as u32;
        lo..hi
    }

    fn ensure_len(&self, n: usize, what: &str) -> Result<()> {
        if n != self.cells.len() {
            return Err(Error::Input(format!(
                "{what} has {n} cells but the frame has {}",
                self.cells.len()
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Patches and local data.
// ---------------------------------------------------------------------------

/// The three shelling fields on the cells of a [`LocalFrame`].
///
/// For every cell `x` (in identity-centered coordinates) the patch stores
/// the height `h`, automaton `state`, and predecessor letter `dp` of the
/// group element `g0·x`, where `g0` is the basepoint (the identity for the
/// model patch). Heights are normalized so the center has `h = 0` for
/// translated patches and `h = |x|` for the model patch.
///
/// Invariants of freshly generated patches (enforced by construction,
/// re-checked by the rule checkers): the predecessor of every cell is at
/// distance one and one level of height below it, and the predecessor letter
/// is the inverse of the last letter of the cell's canonical word in the
/// group — so following `dp` repeatedly walks back along the shortlex
/// geodesic. `dp` is `None` only where the predecessor is the element itself,
/// which in the model happens exactly at the identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShellingPatch {
    pub radius: usize,
    /// Canonical word of the basepoint; `None` for the identity-centered model.
    pub basepoint: Option<Word>,
    pub h: Vec<i32>,
    pub state: Vec<u32>,
    pub dp: Vec<Option<Gen>>,
}

/// Derivative form of a patch: height differences along edges instead of
/// absolute heights. This is the data the local rules actually constrain,
/// and the form in which mutations for sensitivity testing are applied.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalData {
    pub alphabet: usize,
    /// `dh[cell * alphabet + s]` = `h(cell·s) - h(cell)`, or [`DH_UNDEF`]
    /// when `cell·s` is outside the domain.
    pub dh: Vec<i8>,
    pub state: Vec<u32>,
    pub dp: Vec<Option<Gen>>,
}

impl LocalData {
    pub fn dh_at(&self, cell: u32, s: Gen) -> i8 {
        self.dh[cell as usize * self.alphabet + s as usize]
    }
}

/// The model shelling restricted to the frame's ball: height = distance to
/// the identity, state = automaton state of the canonical word, predecessor
/// = canonical word minus its last letter (the identity is its own
/// predecessor).
pub fn model_shelling(
    oracle: &GroupOracle,
    fsa: &ShortlexFsa,
    frame: &LocalFrame,
) -> Result<ShellingPatch> {
    let pres = oracle.presentation();
    let mut h = Vec::with_capacity(frame.len());
    let mut state = Vec::with_capacity(frame.len());
    let mut dp = Vec::with_capacity(frame.len());
    for id in 0..frame.len() as u32 {
        let w = frame.word(id);
        h.push(frame.level(id) as i32);
        state.push(fsa.state_of(w).ok_or_else(|| {
            Error::Input(format!(
                "canonical word `{}` rejected by the automaton",
                pres.format_word(w)
            ))
        })?);
        dp.push(w.last().map(|g| pres.inv(g)));
    }
    Ok(ShellingPatch {
        radius: frame.radius(),
        basepoint: None,
        h,
        state,
        dp,
    })
}

/// The model shelling seen from a far-away basepoint, re-centered.
///
/// For each cell `x` of the frame the patch records the model data of
/// `g0·x`: height `|g0·x| - |g0|` (so the center has height zero), the
/// automaton state of the canonical word of `g0·x`, and the predecessor
/// letter (inverse of the last letter of that canonical word).
///
/// Requires `|g0| ≥ radius + 1`, so the domain `g0·B(radius)` avoids the
/// identity and every cell has a genuine predecessor.
pub fn generate_shelling_patch(
    oracle: &GroupOracle,
    fsa: &ShortlexFsa,
    frame: &LocalFrame,
    basepoint: &Word,
) -> Result<ShellingPatch> {
    let pres = oracle.presentation();
    let b = oracle.canonical_form(basepoint)?;
    if b.len() < frame.radius() + 1 {
        return Err(Error::Input(format!(
            "basepoint at distance {} is too close for patch radius {}; need distance ≥ radius + 1",
            b.len(),
            frame.radius()
        )));
    }
    // Canonical form of g0·x for every cell x, computed level by level so
    // each cell extends its parent's already-canonical word by one letter.
    let mut translate: Vec<Word> = Vec::with_capacity(frame.len());
    translate.push(b.clone());
    for level in 1..=frame.radius() {
        let range = frame.cells_at_level(level);
        let done = &translate;
        let next: Vec<Word> = (range.start..range.end)
            .into_par_iter()
            .map(|id| {
                let p = frame.parent[id as usize] as usize;
                let s = frame.last[id as usize].expect("non-center cell has a last letter");
                oracle.ext(&done[p], s)
            })
            .collect::<Result<Vec<Word>>>()?;
        translate.extend(next);
    }
    let d = b.len() as i32;
    let mut h = Vec::with_capacity(frame.len());
    let mut state = Vec::with_capacity(frame.len());
    let mut dp = Vec::with_capacity(frame.len());
    for t in &translate {
        h.push(t.len() as i32 - d);
        state.push(fsa.state_of(t).ok_or_else(|| {
            Error::Input(format!(
                "canonical word `{}` rejected by the automaton",
                pres.format_word(t)
            ))
        })?);
        let g = t.last().ok_or_else(|| {
            Error::Input("patch domain touches the identity".to_string())
        })?;
        dp.push(Some(pres.inv(g)));
    }
    Ok(ShellingPatch {
        radius: frame.radius(),
        basepoint: Some(b),
        h,
        state,
        dp,
    })
}

/// Differentiate a patch: record height differences along every in-domain
/// edge, alongside the state and predecessor fields.
pub fn local_data(frame: &LocalFrame, patch: &ShellingPatch) -> Result<LocalData> {
    frame.ensure_len(patch.h.len(), "patch")?;
    let alphabet = frame.alphabet();
    let mut dh = vec![DH_UNDEF; frame.len() * alphabet];
    for cell in 0..frame.len() as u32 {
        for s in 0..alphabet as Gen {
            if let Some(n) = frame.neighbor(cell, s) {
                let diff = patch.h[n as usize] - patch.h[cell as usize];
                dh[cell as usize * alphabet + s as usize] =
                    diff.clamp(i8::MIN as i32 + 1, i8::MAX as i32) as i8;
            }
        }
    }
    Ok(LocalData {
        alphabet,
        dh,
        state: patch.state.clone(),
        dp: patch.dp.clone(),
    })
}

/// Sum the height differential along a path of pairwise-adjacent cells.
///
/// Returns an input error if consecutive cells are not adjacent in the
/// frame. A closed path around a relator loop must integrate to zero for
/// the data to be a genuine height function.
pub fn integrate_derivative(frame: &LocalFrame, data: &LocalData, path: &[u32]) -> Result<i64> {
    frame.ensure_len(data.state.len(), "local data")?;
    let mut acc = 0i64;
    for pair in path.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let letter = (0..frame.alphabet() as Gen)
            .find(|&s| frame.neighbor(a, s) == Some(b))
            .ok_or_else(|| {
                Error::Input(format!("cells {a} and {b} are not adjacent in the frame"))
            })?;
        let v = data.dh_at(a, letter);
        debug_assert!(v != DH_UNDEF);
        acc += v as i64;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Violations.
// ---------------------------------------------------------------------------

/// Which local rule a violation breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleKind {
    /// A height difference outside `{-1, 0, 1}`.
    LipschitzRange,
    /// `dh(g)(s) + dh(gs)(s⁻¹) ≠ 0`.
    EdgeAntisymmetry,
    /// A defining-relator loop whose height differential does not sum to zero.
    RelatorLoop,
    /// A cell with no predecessor letter.
    MissingPredecessor,
    /// The predecessor edge does not drop the height by exactly one.
    PredecessorDrop,
    /// The automaton does not carry the predecessor's state to the cell's
    /// state along the connecting letter.
    TransitionConsistency,
    /// The local data around a deep-interior cell matches no dictionary
    /// window pattern.
    WindowPattern,
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RuleKind::LipschitzRange => "lipschitz-range",
            RuleKind::EdgeAntisymmetry => "edge-antisymmetry",
            RuleKind::RelatorLoop => "relator-loop",
            RuleKind::MissingPredecessor => "missing-predecessor",
            RuleKind::PredecessorDrop => "predecessor-drop",
            RuleKind::TransitionConsistency => "transition-consistency",
            RuleKind::WindowPattern => "window-pattern",
        };
        f.write_str(s)
    }
}

/// A broken local rule, anchored at a cell of the frame.
#[derive(Clone, Debug)]
pub struct Violation {
    pub cell: u32,
    pub kind: RuleKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cell {}: {}: {}", self.cell, self.kind, self.detail)
    }
}

// ---------------------------------------------------------------------------
// Preshelling rules.
// ---------------------------------------------------------------------------

/// Check the preshelling layer of rules on derivative data: height
/// differences lie in `{-1, 0, 1}`, are antisymmetric along edges, and sum
/// to zero around every defining-relator loop that lies fully inside the
/// domain. (The predecessor staying within distance one is enforced by the
/// representation: `dp` is a single letter or `None`.)
///
/// Relator-loop violations are reported once per loop, anchored at the
/// smallest cell id on the loop.
pub fn check_preshelling(
    pres: &Presentation,
    frame: &LocalFrame,
    data: &LocalData,
) -> Result<Vec<Violation>> {
    frame.ensure_len(data.state.len(), "local data")?;
    if data.alphabet != frame.alphabet() {
        return Err(Error::Input(format!(
            "local data alphabet {} does not match frame alphabet {}",
            data.alphabet,
            frame.alphabet()
        )));
    }
    let mut out = Vec::new();
    for cell in 0..frame.len() as u32 {
        for s in 0..frame.alphabet() as Gen {
            let v = data.dh_at(cell, s);
            if v == DH_UNDEF {
                continue;
            }
            if !(-1..=1).contains(&v) {
                out.push(Violation {
                    cell,
                    kind: RuleKind::LipschitzRange,
                    detail: format!("dh along `{}` is {v}", pres.symbol(s)),
                });
            }
            let n = frame.neighbor(cell, s).expect("dh defined only on edges");
            let back = data.dh_at(n, pres.inv(s));
            // Each undirected edge is visited from both ends; report once.
            if (cell, s) <= (n, pres.inv(s)) && back != DH_UNDEF && v as i32 + back as i32 != 0 {
                out.push(Violation {
                    cell,
                    kind: RuleKind::EdgeAntisymmetry,
                    detail: format!(
                        "dh along `{}` is {v} but the reverse reads {back}",
                        pres.symbol(s)
                    ),
                });
            }
        }
    }
    for (ri, r) in pres.relators().iter().enumerate() {
        for cell in 0..frame.len() as u32 {
            let mut at = cell;
            let mut lowest = cell;
            let mut sum = 0i64;
            let mut inside = true;
            for s in r.iter() {
                let v = data.dh_at(at, s);
                match frame.neighbor(at, s) {
                    Some(n) => {
                        debug_assert!(v != DH_UNDEF);
                        sum += v as i64;
                        at = n;
                        lowest = lowest.min(n);
                    }
                    None => {
                        inside = false;
                        break;
                    }
                }
            }
            if inside {
                debug_assert_eq!(at, cell, "relators represent the identity");
                // The same loop is traced from each of its cells; report it
                // once, anchored at its smallest cell id.
                if sum != 0 && lowest == cell {
                    out.push(Violation {
                        cell,
                        kind: RuleKind::RelatorLoop,
                        detail: format!("relator {ri} loop integrates to {sum}"),
                    });
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Window patterns and the model dictionary.
// ---------------------------------------------------------------------------

/// The local data restricted to a radius-`2δ` window: for every window cell
/// (in frame enumeration order) the full vector of height differences, the
/// state, and the predecessor letter. Two cells of a shelling "look alike"
/// exactly when their windows carry the same pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowPattern {
    pub dh: Vec<i8>,
    pub state: Vec<u32>,
    pub dp: Vec<Gen>,
}

/// How much of the model the dictionary scan saw, shell by shell.
#[derive(Clone, Debug)]
pub struct ShellScan {
    /// Distance of the scanned basepoints from the identity.
    pub shell: usize,
    /// Number of basepoints sampled on this shell.
    pub sampled: usize,
    /// Patterns seen here for the first time.
    pub new_patterns: usize,
}

/// Provenance and saturation summary of a [`RuleDictionary`].
#[derive(Clone, Debug)]
pub struct DictionaryReport {
    pub scans: Vec<ShellScan>,
    /// Distinct basepoint states encountered.
    pub states_seen: usize,
    /// Largest number of distinct patterns sharing one basepoint state.
    pub max_patterns_per_state: usize,
    /// True when the final scanned shell contributed no new pattern.
    pub saturated: bool,
}

/// A dictionary of window patterns harvested from the model shelling at
/// far-away basepoints, keyed by the basepoint's automaton state.
///
/// The dictionary certifies only what it scanned: patterns are collected
/// from sampled basepoints on the recorded shells, and [`DictionaryReport`]
/// says whether the scan saturated (the last shell brought nothing new) and
/// whether the basepoint state determined the pattern on every sample.
pub struct RuleDictionary {
    pub delta: usize,
    window_words: Vec<Word>,
    /// Parent cell and connecting letter for each non-center window cell,
    /// for walking the window from an arbitrary anchor cell.
    window_tree: Vec<(u32, Gen)>,
    pub by_state: HashMap<u32, Vec<WindowPattern>>,
    /// The basepoints actually scanned, in scan order. Patches anchored at
    /// (or deep-interior-covered by) these basepoints are certified against
    /// the dictionary; others may be flagged even when legitimate, because
    /// the scan under-approximates the full pattern set.
    pub scanned_basepoints: Vec<Word>,
    pub report: DictionaryReport,
}

impl RuleDictionary {
    /// Number of cells in the radius-`2δ` window.
    pub fn window_len(&self) -> usize {
        self.window_words.len()
    }

    /// Total number of distinct patterns.
    pub fn pattern_count(&self) -> usize {
        self.by_state.values().map(|v| v.len()).sum()
    }
}

/// Map each window cell to its cell in `frame` when the window is anchored
/// at `at`. Returns `None` if the window leaves the frame.
fn window_cells(
    frame: &LocalFrame,
    dict_tree: &[(u32, Gen)],
    at: u32,
) -> Option<Vec<u32>> {
    let mut cells = Vec::with_capacity(dict_tree.len() + 1);
    cells.push(at);
    for &(parent, letter) in dict_tree {
        let base = cells[parent as usize];
        cells.push(frame.neighbor(base, letter)?);
    }
    Some(cells)
}

/// Assemble the window pattern of `data` anchored at `at`. Returns an error
/// description instead if the window leaves the domain or a predecessor
/// letter is missing inside it.
fn observed_pattern(
    frame: &LocalFrame,
    data: &LocalData,
    dict_tree: &[(u32, Gen)],
    at: u32,
) -> std::result::Result<WindowPattern, String> {
    let cells = window_cells(frame, dict_tree, at)
        .ok_or_else(|| "window leaves the domain".to_string())?;
    let alphabet = data.alphabet;
    let mut dh = Vec::with_capacity(cells.len() * alphabet);
    let mut state = Vec::with_capacity(cells.len());
    let mut dp = Vec::with_capacity(cells.len());
    for &c in &cells {
        for s in 0..alphabet as Gen {
            let v = data.dh_at(c, s);
            if v == DH_UNDEF {
                return Err(format!(
                    "height difference undefined at window cell {c}"
                ));
            }
            dh.push(v);
        }
        state.push(data.state[c as usize]);
        match data.dp[c as usize] {
            Some(g) => dp.push(g),
            None => {
                return Err(format!("predecessor letter missing at window cell {c}"))
            }
        }
    }
    Ok(WindowPattern { dh, state, dp })
}

/// Harvest the dictionary of radius-`2δ` window patterns from the model.
///
/// `shells` lists `(distance, samples)` pairs: on each shell at the given
/// distance from the identity, that many basepoints are taken, evenly spaced
/// through the shell's enumeration (all of them if the shell is smaller).
/// Every shell must be at distance ≥ `2δ + 2` so the scanned balls avoid the
/// identity; this loses nothing, because a deep-interior cell of any legal
/// translated patch sits at distance ≥ `2δ + 2` in the group. The scan is
/// recorded in the dictionary's report; saturation is evidence — not proof —
/// that the dictionary is complete.
/// The deterministic sample of basepoints a dictionary scan takes from one
/// shell: `samples` evenly strided picks (all of them when the shell is
/// small). Exposed so callers can anchor patches at basepoints the
/// dictionary is guaranteed to have scanned — window patterns carry so much
/// data that distinct basepoints rarely share one, so anchoring elsewhere
/// typically flags the anchor pattern as unknown.
pub fn shell_scan_picks(level: &[Word], samples: usize) -> Vec<Word> {
    if level.is_empty() {
        return Vec::new();
    }
    let take = samples.min(level.len()).max(1);
    let stride = level.len() / take;
    (0..take).map(|k| level[k * stride].clone()).collect()
}

pub fn build_rule_dictionary(
    oracle: &GroupOracle,
    fsa: &ShortlexFsa,
    delta: usize,
    shells: &[(usize, usize)],
    budget: usize,
) -> Result<RuleDictionary> {
    if shells.is_empty() {
        return Err(Error::Input("no shells to scan for the dictionary".into()));
    }
    for &(shell, _) in shells {
        if shell < 2 * delta + 2 {
            return Err(Error::Input(format!(
                "dictionary shell {shell} is closer than 2δ+2 = {}",
                2 * delta + 2
            )));
        }
    }
    // Window data at an anchor reads heights one step beyond the window, so
    // patches are generated on a ball of radius 2δ+1.
    let frame = LocalFrame::build(oracle, 2 * delta + 1, budget)?;
    let window_end = frame.cells_at_level(2 * delta).end;
    let window_words: Vec<Word> = (0..window_end).map(|c| frame.word(c).clone()).collect();
    let window_tree: Vec<(u32, Gen)> = (1..window_end)
        .map(|c| {
            (
                frame.parent[c as usize],
                frame.last[c as usize].expect("non-center cell"),
            )
        })
        .collect();

    let mut by_state: HashMap<u32, Vec<WindowPattern>> = HashMap::new();
    let mut scans = Vec::new();
    let mut scanned_basepoints = Vec::new();
    for &(shell, samples) in shells {
        let level = fsa.enumerate_level(shell, budget)?;
        if level.is_empty() {
            return Err(Error::Degenerate(format!("no elements at distance {shell}")));
        }
        let picks = shell_scan_picks(&level, samples);
        scanned_basepoints.extend(picks.iter().cloned());
        let patterns: Vec<(u32, WindowPattern)> = picks
            .par_iter()
            .map(|bp| {
                let patch = generate_shelling_patch(oracle, fsa, &frame, bp)?;
                let data = local_data(&frame, &patch)?;
                let pat = observed_pattern(&frame, &data, &window_tree, 0)
                    .map_err(Error::Input)?;
                Ok((patch.state[0], pat))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut new_here = 0usize;
        for (state, pat) in patterns {
            let bucket = by_state.entry(state).or_default();
            if !bucket.contains(&pat) {
                bucket.push(pat);
                new_here += 1;
            }
        }
        scans.push(ShellScan {
            shell,
            sampled: picks.len(),
            new_patterns: new_here,
        });
    }
    let states_seen = by_state.len();
    let max_patterns_per_state = by_state.values().map(|v| v.len()).max().unwrap_or(0);
    let saturated = scans.last().map(|s| s.new_patterns == 0).unwrap_or(false);
    Ok(RuleDictionary {
        delta,
        window_words,
        window_tree,
        by_state,
        scanned_basepoints,
        report: DictionaryReport {
            scans,
            states_seen,
            max_patterns_per_state,
            saturated,
        },
    })
}

/// Human-readable dictionary provenance summary.
pub fn render_dictionary_report(dict: &RuleDictionary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "window radius {} ({} cells), {} patterns over {} basepoint states\n",
        2 * dict.delta,
        dict.window_len(),
        dict.pattern_count(),
        dict.report.states_seen
    ));
    for s in &dict.report.scans {
        out.push_str(&format!(
            "  shell {}: {} basepoints sampled, {} new patterns\n",
            s.shell, s.sampled, s.new_patterns
        ));
    }
    out.push_str(&format!(
        "  saturated: {}; max patterns per state: {}\n",
        if dict.report.saturated { "yes" } else { "no (scan deeper shells)" },
        dict.report.max_patterns_per_state
    ));
    out
}

// ---------------------------------------------------------------------------
// Shortlex-shelling rules.
// ---------------------------------------------------------------------------

/// Check the shortlex layer of rules on derivative data.
///
/// Every cell must have a predecessor letter; along every in-domain
/// predecessor edge the height must drop by exactly one and the automaton
/// must carry the predecessor's state to the cell's state. Around every
/// *deep-interior* cell — one whose radius-`2δ+1` ball lies inside the
/// domain — the local data restricted to the radius-`2δ` window must match
/// one of the dictionary's model patterns for the cell's state.
///
/// `delta` is the hyperbolicity parameter in force; the dictionary must
/// have been built for it (configuration error otherwise). For `δ = 0` the
/// window check degenerates to matching the single-cell data, so the check
/// is dominated by transition consistency.
pub fn check_shortlex_local_rules(
    pres: &Presentation,
    fsa: &ShortlexFsa,
    frame: &LocalFrame,
    data: &LocalData,
    dict: &RuleDictionary,
    delta: usize,
) -> Result<Vec<Violation>> {
    frame.ensure_len(data.state.len(), "local data")?;
    if dict.delta != delta {
        return Err(Error::Config(format!(
            "dictionary was built for δ = {} but the check runs at δ = {delta}",
            dict.delta
        )));
    }
    if data.alphabet != frame.alphabet() {
        return Err(Error::Input(format!(
            "local data alphabet {} does not match frame alphabet {}",
            data.alphabet,
            frame.alphabet()
        )));
    }
    let mut out = Vec::new();
    for cell in 0..frame.len() as u32 {
        match data.dp[cell as usize] {
            None => out.push(Violation {
                cell,
                kind: RuleKind::MissingPredecessor,
                detail: "cell has no predecessor letter".into(),
            }),
            Some(g) => {
                if let Some(p) = frame.neighbor(cell, g) {
                    let drop = data.dh_at(cell, g);
                    if drop != -1 {
                        out.push(Violation {
                            cell,
                            kind: RuleKind::PredecessorDrop,
                            detail: format!(
                                "height changes by {drop} along predecessor letter `{}`",
                                pres.symbol(g)
                            ),
                        });
                    }
                    let expect = fsa.transition(data.state[p as usize], pres.inv(g));
                    if expect != Some(data.state[cell as usize]) {
                        out.push(Violation {
                            cell,
                            kind: RuleKind::TransitionConsistency,
                            detail: format!(
                                "state {} is not the automaton successor of state {} under `{}`",
                                data.state[cell as usize],
                                data.state[p as usize],
                                pres.symbol(pres.inv(g))
                            ),
                        });
                    }
                }
            }
        }
    }
    let window_reach = 2 * delta + 1;
    if frame.radius() >= window_reach {
        let deep = frame.cells_at_level(frame.radius() - window_reach).end;
        for cell in 0..deep {
            match observed_pattern(frame, data, &dict.window_tree, cell) {
                Err(why) => out.push(Violation {
                    cell,
                    kind: RuleKind::WindowPattern,
                    detail: why,
                }),
                Ok(pat) => {
                    let hit = dict
                        .by_state
                        .get(&pat.state[0])
                        .map(|b| b.contains(&pat))
                        .unwrap_or(false);
                    if !hit {
                        out.push(Violation {
                            cell,
                            kind: RuleKind::WindowPattern,
                            detail: format!(
                                "window pattern for state {} matches no model pattern",
                                pat.state[0]
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Horospheres and the dip property.
// ---------------------------------------------------------------------------

/// Group the cells of a patch by height, ascending.
pub fn horospheres(frame: &LocalFrame, patch: &ShellingPatch) -> Result<Vec<(i32, Vec<u32>)>> {
    frame.ensure_len(patch.h.len(), "patch")?;
    let mut by_h: HashMap<i32, Vec<u32>> = HashMap::new();
    for cell in 0..frame.len() as u32 {
        by_h.entry(patch.h[cell as usize]).or_default().push(cell);
    }
    let mut out: Vec<(i32, Vec<u32>)> = by_h.into_iter().collect();
    out.sort_by_key(|(h, _)| *h);
    Ok(out)
}

/// Outcome of a dip check for one pair of cells.
#[derive(Clone, Debug)]
pub enum DipOutcome {
    /// Preconditions not met (heights differ, or the pair is too close for
    /// the requested position).
    Skipped { reason: String },
    /// Every in-domain point at position `x` on a geodesic between the pair
    /// satisfies the dip bound. `candidates` counts the points examined.
    Confirmed { candidates: usize },
    /// Some geodesic midpoints break the bound.
    Violated { cells: Vec<u32> },
}

/// Per-pair results of [`check_dip`].
#[derive(Clone, Debug)]
pub struct DipReport {
    pub x: usize,
    pub delta: usize,
    pub outcomes: Vec<((u32, u32), DipOutcome)>,
}

/// Check the dip property: for cells `g1, g2` on a common horosphere with
/// `d(g1, g2) > 2x + 2δ`, every point at position `x` on a geodesic from
/// `g1` to `g2` must have height at most `h(g1) - (x - 2δ)`.
///
/// A cell `z` lies at position `x` on some geodesic exactly when
/// `d(g1, z) = x` and `d(z, g2) = d(g1, g2) - x`; distances are exact group
/// distances from the oracle, so candidates are found even when no full
/// geodesic stays inside the domain. Only in-domain candidates can be
/// examined — the report is about the truncated patch.
pub fn check_dip(
    oracle: &GroupOracle,
    frame: &LocalFrame,
    patch: &ShellingPatch,
    pairs: &[(u32, u32)],
    x: usize,
    delta: usize,
) -> Result<DipReport> {
    frame.ensure_len(patch.h.len(), "patch")?;
    let mut outcomes = Vec::new();
    for &(g1, g2) in pairs {
        let h1 = patch.h[g1 as usize];
        let h2 = patch.h[g2 as usize];
        if h1 != h2 {
            outcomes.push((
                (g1, g2),
                DipOutcome::Skipped {
                    reason: format!("heights differ: {h1} vs {h2}"),
                },
            ));
            continue;
        }
        let d = oracle.dist(frame.word(g1), frame.word(g2))?;
        if d <= 2 * x + 2 * delta {
            outcomes.push((
                (g1, g2),
                DipOutcome::Skipped {
                    reason: format!("distance {d} is not above 2x + 2δ = {}", 2 * x + 2 * delta),
                },
            ));
            continue;
        }
        let bound = h1 as i64 - (x as i64 - 2 * delta as i64);
        let mut candidates = 0usize;
        let mut bad = Vec::new();
        for z in 0..frame.len() as u32 {
            let du = oracle.dist(frame.word(g1), frame.word(z))?;
            if du != x {
                continue;
            }
            let dv = oracle.dist(frame.word(z), frame.word(g2))?;
            if du + dv != d {
                continue;
            }
            candidates += 1;
            if patch.h[z as usize] as i64 > bound {
                bad.push(z);
            }
        }
        let outcome = if bad.is_empty() {
            DipOutcome::Confirmed { candidates }
        } else {
            DipOutcome::Violated { cells: bad }
        };
        outcomes.push(((g1, g2), outcome));
    }
    Ok(DipReport { x, delta, outcomes })
}

// ---------------------------------------------------------------------------
// Mutations (for sensitivity testing).
// ---------------------------------------------------------------------------

/// A single-cell edit of a patch.
#[derive(Clone, Copy, Debug)]
pub enum Mutation {
    /// Shift the height of one cell.
    Height { cell: u32, amount: i32 },
    /// Replace the state of one cell.
    State { cell: u32, state: u32 },
    /// Replace the predecessor letter of one cell.
    Predecessor { cell: u32, letter: Gen },
}

impl Mutation {
    pub fn cell(&self) -> u32 {
        match *self {
            Mutation::Height { cell, .. } => cell,
            Mutation::State { cell, .. } => cell,
            Mutation::Predecessor { cell, .. } => cell,
        }
    }
}

/// Apply a single-cell edit, returning the edited patch.
pub fn apply_mutation(patch: &ShellingPatch, m: Mutation) -> ShellingPatch {
    let mut out = patch.clone();
    match m {
        Mutation::Height { cell, amount } => out.h[cell as usize] += amount,
        Mutation::State { cell, state } => out.state[cell as usize] = state,
        Mutation::Predecessor { cell, letter } => out.dp[cell as usize] = Some(letter),
    }
    out
}

// ---------------------------------------------------------------------------
// Patch files.
// ---------------------------------------------------------------------------

/// Optional per-cell annotations carried by patch files (population counts
/// and generation marks used by populated shellings).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PatchAnnotations {
    pub pop: Option<Vec<i64>>,
    pub marks: Option<Vec<i32>>,
}

/// A patch read back from its text form.
pub struct ParsedPatch {
    pub patch: ShellingPatch,
    pub annotations: PatchAnnotations,
}

fn format_cell_word(pres: &Presentation, w: &Word) -> String {
    if w.is_empty() {
        "1".to_string()
    } else {
        pres.format_word(w)
    }
}

fn parse_cell_word(pres: &Presentation, s: &str) -> Result<Word> {
    if s == "1" {
        Ok(Word::empty())
    } else {
        pres.parse_word(s)
    }
}

/// Serialize a patch (with optional per-cell annotations) to text.
///
/// The header ties the file to the presentation by fingerprint and records
/// the radius and basepoint; then one `cell:` line per frame cell, in frame
/// order: `cell: <word> h=<int> state=<int> P=<letter|self>` with optional
/// `pop=` and `mark=` fields.
pub fn serialize_patch(
    pres: &Presentation,
    frame: &LocalFrame,
    patch: &ShellingPatch,
    annotations: &PatchAnnotations,
) -> Result<String> {
    frame.ensure_len(patch.h.len(), "patch")?;
    let mut out = String::new();
    out.push_str(&format!("presentation: {:016x}\n", pres.fingerprint()));
    out.push_str(&format!("radius: {}\n", patch.radius));
    match &patch.basepoint {
        Some(b) => out.push_str(&format!("basepoint: {}\n", format_cell_word(pres, b))),
        None => out.push_str("basepoint: -\n"),
    }
    out.push_str(&format!("cells: {}\n", frame.len()));
    for cell in 0..frame.len() {
        let w = format_cell_word(pres, frame.word(cell as u32));
        let p = match patch.dp[cell] {
            Some(g) => pres.symbol(g).to_string(),
            None => "self".to_string(),
        };
        out.push_str(&format!(
            "cell: {w} h={} state={} P={p}",
            patch.h[cell], patch.state[cell]
        ));
        if let Some(pop) = &annotations.pop {
            out.push_str(&format!(" pop={}", pop[cell]));
        }
        if let Some(marks) = &annotations.marks {
            out.push_str(&format!(" mark={}", marks[cell]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parse a patch file against the frame it was written from.
///
/// The presentation fingerprint, radius, cell count, and the cell words
/// themselves (in frame order) must all match.
pub fn parse_patch(
    pres: &Presentation,
    frame: &LocalFrame,
    text: &str,
) -> Result<ParsedPatch> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut expect = |key: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Input(format!("patch file ends before `{key}:`")))?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(':'))
            .map(|r| r.trim().to_string())
            .ok_or_else(|| Error::Input(format!("expected `{key}:` line, found `{line}`")))
    };
    let fp = expect("presentation")?;
    if fp != format!("{:016x}", pres.fingerprint()) {
        return Err(Error::Input(
            "patch file was written for a different presentation".into(),
        ));
    }
    let radius: usize = expect("radius")?
        .parse()
        .map_err(|_| Error::Input("bad radius".into()))?;
    if radius != frame.radius() {
        return Err(Error::Input(format!(
            "patch radius {radius} does not match frame radius {}",
            frame.radius()
        )));
    }
    let bp_text = expect("basepoint")?;
    let basepoint = if bp_text == "-" {
        None
    } else {
        Some(parse_cell_word(pres, &bp_text)?)
    };
    let cells: usize = expect("cells")?
        .parse()
        .map_err(|_| Error::Input("bad cell count".into()))?;
    if cells != frame.len() {
        return Err(Error::Input(format!(
            "patch has {cells} cells but the frame has {}",
            frame.len()
        )));
    }
    let mut h = Vec::with_capacity(cells);
    let mut state = Vec::with_capacity(cells);
    let mut dp = Vec::with_capacity(cells);
    let mut pop: Vec<i64> = Vec::new();
    let mut marks: Vec<i32> = Vec::new();
    for cell in 0..cells {
        let body = expect("cell")?;
        let mut fields = body.split_whitespace();
        let w = parse_cell_word(
            pres,
            fields
                .next()
                .ok_or_else(|| Error::Input("empty cell line".into()))?,
        )?;
        if &w != frame.word(cell as u32) {
            return Err(Error::Input(format!(
                "cell {cell} word `{}` does not match the frame",
                format_cell_word(pres, &w)
            )));
        }
        let (mut got_h, mut got_state, mut got_p) = (None, None, None);
        for f in fields {
            let (key, value) = f
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("bad cell field `{f}`")))?;
            match key {
                "h" => {
                    got_h = Some(value.parse::<i32>().map_err(|_| {
                        Error::Input(format!("bad height `{value}`"))
                    })?)
                }
                "state" => {
                    got_state = Some(value.parse::<u32>().map_err(|_| {
                        Error::Input(format!("bad state `{value}`"))
                    })?)
                }
                "P" => {
                    got_p = Some(if value == "self" {
                        None
                    } else {
                        let c = value
                            .chars()
                            .next()
                            .filter(|_| value.chars().count() == 1)
                            .ok_or_else(|| {
                                Error::Input(format!("bad predecessor `{value}`"))
                            })?;
                        Some(pres.gen_of_symbol(c)?)
                    })
                }
                "pop" => pop.push(value.parse::<i64>().map_err(|_| {
                    Error::Input(format!("bad population `{value}`"))
                })?),
                "mark" => marks.push(value.parse::<i32>().map_err(|_| {
                    Error::Input(format!("bad mark `{value}`"))
                })?),
                other => {
                    return Err(Error::Input(format!("unknown cell field `{other}`")))
                }
            }
        }
        h.push(got_h.ok_or_else(|| Error::Input(format!("cell {cell} missing h")))?);
        state.push(got_state.ok_or_else(|| Error::Input(format!("cell {cell} missing state")))?);
        dp.push(got_p.ok_or_else(|| Error::Input(format!("cell {cell} missing P")))?);
    }
    if !pop.is_empty() && pop.len() != cells {
        return Err(Error::Input("pop annotations on only some cells".into()));
    }
    if !marks.is_empty() && marks.len() != cells {
        return Err(Error::Input("mark annotations on only some cells".into()));
    }
    Ok(ParsedPatch {
        patch: ShellingPatch {
            radius,
            basepoint,
            h,
            state,
            dp,
        },
        annotations: PatchAnnotations {
            pop: if pop.is_empty() { None } else { Some(pop) },
            marks: if marks.is_empty() { None } else { Some(marks) },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsa::build_shortlex_fsa;

    const BUDGET: usize = 10_000_000;

    fn setup(genus2: bool) -> (GroupOracle, ShortlexFsa) {
        let text = if genus2 {
            "generators: a A b B c C d D\nrelator: abABcdCD"
        } else {
            "generators: a A b B\n"
        };
        let pres = Presentation::parse(text).unwrap();
        let oracle = GroupOracle::new(pres).unwrap();
        let fsa = build_shortlex_fsa(&oracle, 3, 10_000).unwrap();
        (oracle, fsa)
    }

    fn zline() -> (GroupOracle, ShortlexFsa) {
        let pres = Presentation::parse("generators: a A\n").unwrap();
        let oracle = GroupOracle::new(pres).unwrap();
        let fsa = build_shortlex_fsa(&oracle, 1, 100).unwrap();
        (oracle, fsa)
    }

    #[test]
    fn model_free_group_structure() {
        let (oracle, fsa) = setup(false);
        let frame = LocalFrame::build(&oracle, 3, BUDGET).unwrap();
        let model = model_shelling(&oracle, &fsa, &frame).unwrap();
        let pres = oracle.presentation();
        for cell in 0..frame.len() as u32 {
            let w = frame.word(cell);
            assert_eq!(model.h[cell as usize], w.len() as i32);
            match w.last() {
                None => assert_eq!(model.dp[cell as usize], None),
                Some(g) => {
                    assert_eq!(model.dp[cell as usize], Some(pres.inv(g)));
                    // Following dp strips the last letter.
                    let p = frame.neighbor(cell, pres.inv(g)).unwrap();
                    assert_eq!(frame.word(p), &w.parent());
                }
            }
        }
        // In a tree every edge changes the distance by exactly one.
        let data = local_data(&frame, &model).unwrap();
        for cell in 0..frame.len() as u32 {
            for s in 0..frame.alphabet() as Gen {
                let v = data.dh_at(cell, s);
                if v != DH_UNDEF {
                    assert_eq!(v.abs(), 1);
                }
            }
        }
    }

    #[test]
    fn translated_patch_recenters_heights() {
        let (oracle, fsa) = setup(false);
        let frame = LocalFrame::build(&oracle, 2, BUDGET).unwrap();
        let pres = oracle.presentation();
        let bp = pres.parse_word("aaaaa").unwrap();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        assert_eq!(patch.h[0], 0);
        let a = pres.parse_word("a").unwrap();
        let a_inv = pres.parse_word("A").unwrap();
        let b = pres.parse_word("b").unwrap();
        assert_eq!(patch.h[frame.cell(&a).unwrap() as usize], 1);
        assert_eq!(patch.h[frame.cell(&a_inv).unwrap() as usize], -1);
        assert_eq!(patch.h[frame.cell(&b).unwrap() as usize], 1);
        // The center's predecessor points back along the basepoint word.
        assert_eq!(patch.dp[0], Some(pres.gen_of_symbol('A').unwrap()));
        // aaaaa then A has canonical form aaaa: two steps of dp walk land at aaa.
        let aa_down = frame
            .neighbor(frame.cell(&a_inv).unwrap(), pres.gen_of_symbol('A').unwrap())
            .unwrap();
        assert_eq!(patch.h[aa_down as usize], -2);
    }

    #[test]
    fn basepoint_too_close_is_rejected() {
        let (oracle, fsa) = setup(false);
        let frame = LocalFrame::build(&oracle, 2, BUDGET).unwrap();
        let bp = oracle.presentation().parse_word("aa").unwrap();
        let err = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn integrate_along_geodesics_and_loops() {
        let (oracle, fsa) = setup(true);
        let frame = LocalFrame::build(&oracle, 4, BUDGET).unwrap();
        let model = model_shelling(&oracle, &fsa, &frame).unwrap();
        let data = local_data(&frame, &model).unwrap();
        // Walk the canonical word of a level-4 cell: integral = 4.
        let target = frame.cells_at_level(4).start;
        let mut path = vec![0u32];
        let mut at = 0u32;
        for s in frame.word(target).clone().iter() {
            at = frame.neighbor(at, s).unwrap();
            path.push(at);
        }
        assert_eq!(at, target);
        assert_eq!(integrate_derivative(&frame, &data, &path).unwrap(), 4);
        // The defining relator traces a loop of integral 0 from the center.
        let relator = oracle.presentation().relators()[0].clone();
        let mut loop_path = vec![0u32];
        let mut lat = 0u32;
        for s in relator.iter() {
            lat = frame.neighbor(lat, s).unwrap();
            loop_path.push(lat);
        }
        assert_eq!(lat, 0);
        assert_eq!(integrate_derivative(&frame, &data, &loop_path).unwrap(), 0);
        // Non-adjacent cells are an input error.
        let far = frame.cells_at_level(4).start + 1;
        assert!(matches!(
            integrate_derivative(&frame, &data, &[0, far]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn preshelling_holds_on_model_and_translates() {
        let (oracle, fsa) = setup(true);
        let pres = oracle.presentation().clone();
        let frame = LocalFrame::build(&oracle, 3, BUDGET).unwrap();
        let model = model_shelling(&oracle, &fsa, &frame).unwrap();
        let data = local_data(&frame, &model).unwrap();
        assert!(check_preshelling(&pres, &frame, &data).unwrap().is_empty());

        let bp = fsa.enumerate_level(4, BUDGET).unwrap()[7].clone();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        let tdata = local_data(&frame, &patch).unwrap();
        assert!(check_preshelling(&pres, &frame, &tdata).unwrap().is_empty());
    }

    #[test]
    fn preshelling_catches_bad_heights_and_bad_loops() {
        let (oracle, fsa) = setup(true);
        let pres = oracle.presentation().clone();
        // Radius 4: the length-8 relator loop reaches distance 4 from its
        // basepoint, so smaller frames contain no full loop to check.
        let frame = LocalFrame::build(&oracle, 4, BUDGET).unwrap();
        let model = model_shelling(&oracle, &fsa, &frame).unwrap();

        // A height bump of 2 breaks the Lipschitz range on edges at the cell.
        let bumped = apply_mutation(
            &model,
            Mutation::Height {
                cell: frame.cells_at_level(1).start,
                amount: 2,
            },
        );
        let bdata = local_data(&frame, &bumped).unwrap();
        let violations = check_preshelling(&pres, &frame, &bdata).unwrap();
        assert!(violations
            .iter()
            .any(|v| v.kind == RuleKind::LipschitzRange));

        // Editing one directed dh entry breaks antisymmetry.
        let data = local_data(&frame, &model).unwrap();
        let mut asym = data.clone();
        let r0 = pres.relators()[0].first().unwrap();
        asym.dh[r0 as usize] = -1; // center's edge along the relator's first letter
        let violations = check_preshelling(&pres, &frame, &asym).unwrap();
        assert!(violations
            .iter()
            .any(|v| v.kind == RuleKind::EdgeAntisymmetry));

        // Editing both directions consistently slips past antisymmetry but
        // breaks the relator loop through the edge.
        let mut looped = data.clone();
        let n = frame.neighbor(0, r0).unwrap();
        looped.dh[r0 as usize] = -1;
        looped.dh[n as usize * looped.alphabet + pres.inv(r0) as usize] = 1;
        let violations = check_preshelling(&pres, &frame, &looped).unwrap();
        assert!(!violations
            .iter()
            .any(|v| v.kind == RuleKind::EdgeAntisymmetry));
        assert!(violations.iter().any(|v| v.kind == RuleKind::RelatorLoop));
    }

    #[test]
    fn free_group_dictionary_and_rules() {
        let (oracle, fsa) = setup(false);
        let pres = oracle.presentation().clone();
        // δ = 0: window is a single cell, read together with its edges.
        let dict = build_rule_dictionary(&oracle, &fsa, 0, &[(2, 20), (3, 50), (4, 60)], BUDGET)
            .unwrap();
        assert_eq!(dict.window_len(), 1);
        // One pattern per last letter, constant per state.
        assert_eq!(dict.report.max_patterns_per_state, 1);
        assert_eq!(dict.pattern_count(), 4);
        assert!(dict.report.saturated);

        let frame = LocalFrame::build(&oracle, 2, BUDGET).unwrap();
        let bp = pres.parse_word("bab").unwrap();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        let data = local_data(&frame, &patch).unwrap();
        let violations =
            check_shortlex_local_rules(&pres, &fsa, &frame, &data, &dict, 0).unwrap();
        assert!(violations.is_empty(), "{violations:?}");

        // The model around the identity breaks the rules exactly at the
        // identity, which has no predecessor.
        let model = model_shelling(&oracle, &fsa, &frame).unwrap();
        let mdata = local_data(&frame, &model).unwrap();
        let violations =
            check_shortlex_local_rules(&pres, &fsa, &frame, &mdata, &dict, 0).unwrap();
        assert!(!violations.is_empty());
        assert!(violations.iter().all(|v| v.cell == 0), "{violations:?}");
    }

    #[test]
    fn state_and_predecessor_mutations_break_transition_consistency() {
        let (oracle, fsa) = setup(false);
        let pres = oracle.presentation().clone();
        let dict =
            build_rule_dictionary(&oracle, &fsa, 0, &[(2, 20), (3, 30)], BUDGET).unwrap();
        let frame = LocalFrame::build(&oracle, 2, BUDGET).unwrap();
        let bp = pres.parse_word("abab").unwrap();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();

        // Mutate away from the outer boundary, where every incident edge —
        // in particular the predecessor edge — stays inside the domain.
        let cell = frame.cells_at_level(1).start + 1;
        let old = patch.state[cell as usize];
        let mutated = apply_mutation(
            &patch,
            Mutation::State {
                cell,
                state: (old + 1) % fsa.num_states() as u32,
            },
        );
        let data = local_data(&frame, &mutated).unwrap();
        let violations =
            check_shortlex_local_rules(&pres, &fsa, &frame, &data, &dict, 0).unwrap();
        assert!(violations
            .iter()
            .any(|v| v.kind == RuleKind::TransitionConsistency));

        let old_p = patch.dp[cell as usize].unwrap();
        let new_p = (0..frame.alphabet() as Gen).find(|&s| s != old_p).unwrap();
        let mutated = apply_mutation(&patch, Mutation::Predecessor { cell, letter: new_p });
        let data = local_data(&frame, &mutated).unwrap();
        let violations =
            check_shortlex_local_rules(&pres, &fsa, &frame, &data, &dict, 0).unwrap();
        assert!(
            violations.iter().any(|v| matches!(
                v.kind,
                RuleKind::TransitionConsistency | RuleKind::PredecessorDrop
            )),
            "{violations:?}"
        );
    }

    #[test]
    fn dictionary_rejects_close_shells_and_delta_mismatch() {
        let (oracle, fsa) = setup(false);
        let pres = oracle.presentation().clone();
        assert!(matches!(
            build_rule_dictionary(&oracle, &fsa, 1, &[(3, 5)], BUDGET),
            Err(Error::Input(_))
        ));
        let dict = build_rule_dictionary(&oracle, &fsa, 0, &[(2, 8)], BUDGET).unwrap();
        let frame = LocalFrame::build(&oracle, 1, BUDGET).unwrap();
        let model = model_shelling(&oracle, &fsa, &frame).unwrap();
        let data = local_data(&frame, &model).unwrap();
        assert!(matches!(
            check_shortlex_local_rules(&pres, &fsa, &frame, &data, &dict, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn horosphere_partition_covers_patch() {
        let (oracle, fsa) = setup(false);
        let frame = LocalFrame::build(&oracle, 2, BUDGET).unwrap();
        let bp = oracle.presentation().parse_word("aaa").unwrap();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        let layers = horospheres(&frame, &patch).unwrap();
        let total: usize = layers.iter().map(|(_, cells)| cells.len()).sum();
        assert_eq!(total, frame.len());
        let hs: Vec<i32> = layers.iter().map(|(h, _)| *h).collect();
        assert_eq!(hs, vec![-2, -1, 0, 1, 2]);
        for (h, cells) in &layers {
            for &c in cells {
                assert_eq!(patch.h[c as usize], *h);
            }
        }
    }

    #[test]
    fn dip_confirmed_in_tree_and_violated_on_flat_line() {
        // Free group, δ = 0: a geodesic between far-apart same-level cells
        // descends through their common ancestor; the bound is tight.
        let (oracle, fsa) = setup(false);
        let frame = LocalFrame::build(&oracle, 4, BUDGET).unwrap();
        let model = model_shelling(&oracle, &fsa, &frame).unwrap();
        let pres = oracle.presentation().clone();
        let u = frame.cell(&pres.parse_word("aaaa").unwrap()).unwrap();
        let v = frame.cell(&pres.parse_word("bbbb").unwrap()).unwrap();
        let report = check_dip(&oracle, &frame, &model, &[(u, v)], 2, 0).unwrap();
        match &report.outcomes[0].1 {
            DipOutcome::Confirmed { candidates } => assert!(*candidates > 0),
            other => panic!("expected confirmation, got {other:?}"),
        }

        // A flat height on a long line violates the dip property.
        let (zo, zf) = zline();
        let zframe = LocalFrame::build(&zo, 5, BUDGET).unwrap();
        let mut flat = model_shelling(&zo, &zf, &zframe).unwrap();
        for h in flat.h.iter_mut() {
            *h = 0;
        }
        let zp = zo.presentation().clone();
        let u = zframe.cell(&zp.parse_word("aaaaa").unwrap()).unwrap();
        let v = zframe.cell(&zp.parse_word("AAAAA").unwrap()).unwrap();
        let report = check_dip(&zo, &zframe, &flat, &[(u, v)], 3, 0).unwrap();
        match &report.outcomes[0].1 {
            DipOutcome::Violated { cells } => assert!(!cells.is_empty()),
            other => panic!("expected violation, got {other:?}"),
        }

        // Too-close pairs are skipped.
        let report = check_dip(&zo, &zframe, &flat, &[(u, u)], 3, 0).unwrap();
        assert!(matches!(
            report.outcomes[0].1,
            DipOutcome::Skipped { .. }
        ));
    }

    #[test]
    fn future_cones_are_determined_by_state() {
        // Two cells with the same automaton state must grow identical future
        // cones: the same letters extend canonically (checked against the
        // oracle, independently of the automaton's own transitions), and the
        // rebased heights, states, and predecessor letters agree throughout.
        let (oracle, fsa) = setup(true);
        let frame = LocalFrame::build(&oracle, 4, BUDGET).unwrap();
        let model = model_shelling(&oracle, &fsa, &frame).unwrap();
        let mut by_state: HashMap<u32, Vec<u32>> = HashMap::new();
        for level in 1..=2 {
            for cell in frame.cells_at_level(level) {
                by_state.entry(model.state[cell as usize]).or_default().push(cell);
            }
        }
        let mut compared = 0usize;
        let mut pairs = 0usize;
        for mates in by_state.values() {
            if mates.len() < 2 {
                continue;
            }
            pairs += 1;
            let mut stack = vec![(mates[0], mates[1])];
            while let Some((x, y)) = stack.pop() {
                assert_eq!(model.state[x as usize], model.state[y as usize]);
                assert_eq!(
                    model.h[x as usize] - model.h[mates[0] as usize],
                    model.h[y as usize] - model.h[mates[1] as usize]
                );
                for s in 0..frame.alphabet() as Gen {
                    let ex = oracle.is_canonical_child(frame.word(x), s).unwrap();
                    let ey = oracle.is_canonical_child(frame.word(y), s).unwrap();
                    assert_eq!(ex, ey, "cone shapes differ at {x}/{y} letter {s}");
                    compared += 1;
                    if ex && ey {
                        if let (Some(cx), Some(cy)) =
                            (frame.neighbor(x, s), frame.neighbor(y, s))
                        {
                            // Children acquired by the same letter share it
                            // as their predecessor direction.
                            assert_eq!(model.dp[cx as usize], model.dp[cy as usize]);
                            stack.push((cx, cy));
                        }
                    }
                }
            }
        }
        assert!(pairs >= 5, "too few same-state pairs: {pairs}");
        assert!(compared > 200, "too few cone comparisons: {compared}");
    }

    #[test]
    fn predecessor_rays_approach_within_two_delta() {
        let (oracle, fsa) = setup(true);
        let frame = LocalFrame::build(&oracle, 4, BUDGET).unwrap();
        let model = model_shelling(&oracle, &fsa, &frame).unwrap();
        let delta = 2usize;
        let top = frame.cells_at_level(4);
        let n = top.end - top.start;
        // Sample pairs across the outer sphere.
        let picks: Vec<(u32, u32)> = (0..40)
            .map(|k| (top.start + (k * 97) % n, top.start + ((k * 211) + 5) % n))
            .filter(|(u, v)| u != v)
            .collect();
        for (u, v) in picks {
            let mut ray_u = u;
            let mut ray_v = v;
            let mut approached = false;
            // Follow both predecessor rays; they must come within 2δ of each
            // other strictly before reaching the center.
            for _ in 0..frame.level(u) {
                let d = oracle.dist(frame.word(ray_u), frame.word(ray_v)).unwrap();
                if d <= 2 * delta {
                    approached = true;
                    break;
                }
                ray_u = frame.neighbor(ray_u, model.dp[ray_u as usize].unwrap()).unwrap();
                ray_v = frame.neighbor(ray_v, model.dp[ray_v as usize].unwrap()).unwrap();
                if ray_u == 0 || ray_v == 0 {
                    break;
                }
            }
            assert!(approached, "rays from {u} and {v} never came within 2δ");
        }
    }

    #[test]
    fn patch_file_round_trip() {
        let (oracle, fsa) = setup(true);
        let pres = oracle.presentation().clone();
        let frame = LocalFrame::build(&oracle, 3, BUDGET).unwrap();
        let bp = fsa.enumerate_level(5, BUDGET).unwrap()[12].clone();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        let annotations = PatchAnnotations {
            pop: Some((0..frame.len() as i64).collect()),
            marks: None,
        };
        let text = serialize_patch(&pres, &frame, &patch, &annotations).unwrap();
        let parsed = parse_patch(&pres, &frame, &text).unwrap();
        assert_eq!(parsed.patch, patch);
        assert_eq!(parsed.annotations, annotations);

        // A different presentation's frame rejects the file.
        let (other, _) = setup(false);
        let oframe = LocalFrame::build(&other, 3, BUDGET).unwrap();
        assert!(matches!(
            parse_patch(other.presentation(), &oframe, &text),
            Err(Error::Input(_))
        ));
    }
}
