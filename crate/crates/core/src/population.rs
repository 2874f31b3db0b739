//! Populating shellings: path covers of divergence graphs, balanced density
//! sequences, floor-telescoped population values, and the parent–child
//! matching between consecutive horospheres.
//!
//! The pipeline assigns to each growth-positive cell of a patch an integer
//! population `℘` whose density along each horosphere follows a prescribed
//! value ν, lets ν evolve between horospheres by the recurrence
//! `ν_{i+1} = (q^{Δ_i}/λ)·ν_i` confined to a window `[A, qA)`, and realizes
//! the generation step as a bijection assigning each person `q^Δ` children
//! in nearby villages of the next horosphere. When `log_q λ` is irrational
//! the exponent sequence `Δ` cannot be periodic — the mechanism that rules
//! out periodic configurations.
//!
//! Truncation policy: all invariants are asserted on interior regions —
//! villages whose divergence-graph neighborhoods and child fibers are fully
//! inside the patch; boundary cells carry data but absorb the imbalance
//! that a finite window necessarily creates.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::divergence::{successor_lists, DivergenceGraph};
use crate::error::{Error, Result};
use crate::fsa::ShortlexFsa;
use crate::growth::GrowthData;
use crate::numeric::DyInterval;
use crate::oracle::GroupOracle;
use crate::presentation::Presentation;
use crate::shelling::{
    check_preshelling, check_shortlex_local_rules, generate_shelling_patch, local_data,
    LocalFrame, RuleDictionary, ShellingPatch, Violation,
};
use crate::word::Word;

/// Working precision (bits) for the balanced-sequence interval arithmetic.
const SEQ_PREC: u32 = 256;

// ---------------------------------------------------------------------------
// Path covers.
// ---------------------------------------------------------------------------

/// A decomposition of a divergence graph's interior vertices into disjoint
/// paths whose consecutive entries are close in the graph metric — the
/// finite stand-in for a translation-like ℤ action (whose infinite orbits a
/// finite patch cannot host; truncated orbits become path segments).
#[derive(Clone, Debug)]
pub struct PathCover {
    /// Vertex sequences (cells), pairwise disjoint, jointly covering all
    /// interior vertices.
    pub paths: Vec<Vec<u32>>,
    /// Max graph distance between consecutive entries over all paths.
    pub defect: usize,
    pub warnings: Vec<String>,
}

impl PathCover {
    pub fn covered(&self) -> usize {
        self.paths.iter().map(|p| p.len()).sum()
    }

    pub fn contains(&self, cell: u32) -> bool {
        self.paths.iter().any(|p| p.contains(&cell))
    }
}

/// Vertices within `l` graph hops of `start` (including it), ascending.
fn graph_ball(graph: &DivergenceGraph, start: u32, l: usize) -> Vec<u32> {
    let mut dist: HashMap<u32, usize> = HashMap::new();
    dist.insert(start, 0);
    let mut frontier = vec![start];
    for d in 1..=l {
        let mut next = Vec::new();
        for &c in &frontier {
            for &n in graph.neighbors(c) {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(n) {
                    e.insert(d);
                    next.push(n);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    let mut out: Vec<u32> = dist.into_keys().collect();
    out.sort_unstable();
    out
}

/// BFS distance between two vertices in the graph, capped at `l`.
fn graph_distance_capped(graph: &DivergenceGraph, from: u32, to: u32, l: usize) -> Option<usize> {
    if from == to {
        return Some(0);
    }
    let mut seen: HashSet<u32> = HashSet::new();
    seen.insert(from);
    let mut frontier = vec![from];
    for d in 1..=l {
        let mut next = Vec::new();
        for &c in &frontier {
            for &n in graph.neighbors(c) {
                if n == to {
                    return Some(d);
                }
                if seen.insert(n) {
                    next.push(n);
                }
            }
        }
        if next.is_empty() {
            return None;
        }
        frontier = next;
    }
    None
}

/// Greedily decompose the interior vertices of a divergence graph into
/// disjoint paths with jump length ≤ `l_bound` in the graph metric. Jumps
/// may route through boundary or already-covered vertices — only the path
/// entries themselves are consumed. Deterministic: vertices are taken in
/// ascending cell order and each extension picks the nearest uncovered
/// interior vertex (ties broken by cell id). A disconnected interior yields
/// one cover per component and a warning, not an error.
pub fn path_cover(graph: &DivergenceGraph, l_bound: usize) -> Result<PathCover> {
    if l_bound == 0 {
        return Err(Error::Input("jump bound must be at least 1".into()));
    }
    let mut uncovered: std::collections::BTreeSet<u32> = graph
        .vertices
        .iter()
        .enumerate()
        .filter(|&(i, _)| graph.interior[i])
        .map(|(_, &c)| c)
        .collect();
    let mut paths: Vec<Vec<u32>> = Vec::new();
    let mut defect = 0usize;
    while let Some(&start) = uncovered.iter().next() {
        uncovered.remove(&start);
        let mut path = vec![start];
        loop {
            // Nearest uncovered interior vertex within l_bound of the tip.
            let tip = *path.last().unwrap();
            let mut seen: HashSet<u32> = HashSet::new();
            seen.insert(tip);
            let mut frontier = vec![tip];
            let mut found: Option<(u32, usize)> = None;
            'bfs: for d in 1..=l_bound {
                let mut next = Vec::new();
                for &c in &frontier {
                    let mut nbrs: Vec<u32> = graph.neighbors(c).to_vec();
                    nbrs.sort_unstable();
                    for n in nbrs {
                        if seen.insert(n) {
                            if uncovered.contains(&n) {
                                found = Some((n, d));
                                break 'bfs;
                            }
                            next.push(n);
                        }
                    }
                }
                if next.is_empty() {
                    break;
                }
                frontier = next;
            }
            match found {
                Some((n, d)) => {
                    uncovered.remove(&n);
                    path.push(n);
                    defect = defect.max(d);
                }
                None => break,
            }
        }
        paths.push(path);
    }
    let mut warnings = Vec::new();
    if paths.len() > 1 {
        warnings.push(format!(
            "{} paths were needed: interior not connected within jump bound {}",
            paths.len(),
            l_bound
        ));
    }
    Ok(PathCover {
        paths,
        defect,
        warnings,
    })
}

/// Replay-verify a path cover: disjointness, coverage of every interior
/// vertex, and every consecutive jump within `l_bound`. Returns the list of
/// violations (empty when the cover is valid).
pub fn verify_path_cover(
    graph: &DivergenceGraph,
    cover: &PathCover,
    l_bound: usize,
) -> Vec<String> {
    let mut problems = Vec::new();
    let mut seen: HashSet<u32> = HashSet::new();
    for (pi, path) in cover.paths.iter().enumerate() {
        for &v in path {
            if !graph.is_vertex(v) {
                problems.push(format!("path {pi}: {v} is not a graph vertex"));
            }
            if !seen.insert(v) {
                problems.push(format!("path {pi}: vertex {v} covered twice"));
            }
        }
        for w in path.windows(2) {
            match graph_distance_capped(graph, w[0], w[1], l_bound) {
                Some(_) => {}
                None => problems.push(format!(
                    "path {pi}: jump {} -> {} exceeds bound {l_bound}",
                    w[0], w[1]
                )),
            }
        }
    }
    for (i, &v) in graph.vertices.iter().enumerate() {
        if graph.interior[i] && !seen.contains(&v) {
            problems.push(format!("interior vertex {v} not covered"));
        }
    }
    problems
}

// ---------------------------------------------------------------------------
// Balanced sequences.
// ---------------------------------------------------------------------------

/// The density recurrence `ν_{i+1} = (q^{Δ_i}/λ)·ν_i` confined to `[A, qA)`:
/// `Δ_i` is the larger exponent exactly when `ν_i` lies below the threshold
/// `(λ/q^⌊log_q λ⌋)·A`. For irrational `log_q λ` this is an irrational
/// rotation in disguise, so `(Δ_i)` is aperiodic; when `λ = q^k` the
/// sequence degenerates to a constant (flagged).
pub struct BalancedSequence {
    pub q: u32,
    pub floor_exp: u32,
    pub ceil_exp: u32,
    pub a: BigRational,
    /// λ enclosure the sequence was built against.
    pub lambda_lo: BigRational,
    pub lambda_hi: BigRational,
    /// True when λ is exactly a power of q (degenerate constant sequence).
    pub commensurable: bool,
    /// Certified enclosures of ν_i.
    pub nu: Vec<DyInterval>,
    pub delta: Vec<u32>,
}

impl BalancedSequence {
    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn nu_f64(&self, i: usize) -> f64 {
        self.nu[i].mid_f64()
    }

    pub fn mean_delta(&self) -> f64 {
        if self.delta.is_empty() {
            return f64::NAN;
        }
        self.delta.iter().map(|&d| d as f64).sum::<f64>() / self.delta.len() as f64
    }

    /// Certified check that ν_i ∈ [A, qA); None when the enclosure is too
    /// wide to decide.
    pub fn nu_in_window(&self, i: usize) -> Option<bool> {
        let a = DyInterval::from_rational(&self.a, SEQ_PREC);
        let qa = DyInterval::from_rational(
            &(&self.a * BigRational::from_integer(BigInt::from(self.q))),
            SEQ_PREC,
        );
        let ge_a = !self.nu[i].certainly_lt(&a)?;
        let lt_qa = self.nu[i].certainly_lt(&qa)?;
        Some(ge_a && lt_qa)
    }
}

struct SeqContext {
    floor_exp: u32,
    ceil_exp: u32,
    commensurable: bool,
    threshold: DyInterval,
    ratio_floor: DyInterval,
    ratio_ceil: DyInterval,
    inv_floor: DyInterval,
    inv_ceil: DyInterval,
}

fn seq_context(
    lambda_lo: &BigRational,
    lambda_hi: &BigRational,
    q: u32,
    a: &BigRational,
) -> Result<SeqContext> {
    if q < 2 {
        return Err(Error::Input("base q must be at least 2".into()));
    }
    if lambda_lo > lambda_hi || !lambda_lo.is_positive() {
        return Err(Error::Input("invalid λ enclosure".into()));
    }
    if lambda_hi <= &BigRational::one() {
        return Err(Error::Input("λ must exceed 1".into()));
    }
    let qr = BigRational::from_integer(BigInt::from(q));
    // Largest k with q^k ≤ λ_lo.
    let mut floor_exp = 0u32;
    let mut pw = qr.clone();
    while &pw <= lambda_lo {
        floor_exp += 1;
        pw *= &qr;
    }
    // Smallest k with q^k ≥ λ_hi.
    let mut ceil_exp = 0u32;
    let mut pw = BigRational::one();
    while &pw < lambda_hi {
        ceil_exp += 1;
        pw *= &qr;
    }
    let commensurable = floor_exp == ceil_exp;
    if !commensurable && ceil_exp != floor_exp + 1 {
        return Err(Error::Precision(format!(
            "λ enclosure [{}, {}] straddles a power of {q}; refine it",
            lambda_lo.to_f64().unwrap_or(f64::NAN),
            lambda_hi.to_f64().unwrap_or(f64::NAN)
        )));
    }
    let qf = BigRational::from_integer(BigInt::from(q).pow(floor_exp));
    let qc = BigRational::from_integer(BigInt::from(q).pow(ceil_exp));
    // threshold = (λ/q^floor)·A
    let threshold = DyInterval::from_rationals(
        &(lambda_lo / &qf * a),
        &(lambda_hi / &qf * a),
        SEQ_PREC,
    );
    let ratio = |p: &BigRational| {
        DyInterval::from_rationals(&(p / lambda_hi), &(p / lambda_lo), SEQ_PREC)
    };
    let inv = |p: &BigRational| {
        DyInterval::from_rationals(&(lambda_lo / p), &(lambda_hi / p), SEQ_PREC)
    };
    Ok(SeqContext {
        floor_exp,
        ceil_exp,
        commensurable,
        threshold,
        ratio_floor: ratio(&qf),
        ratio_ceil: ratio(&qc),
        inv_floor: inv(&qf),
        inv_ceil: inv(&qc),
    })
}

fn classify(ctx: &SeqContext, nu: &DyInterval, index: i64) -> Result<u32> {
    if ctx.commensurable {
        return Ok(ctx.floor_exp);
    }
    match nu.certainly_lt(&ctx.threshold) {
        Some(true) => Ok(ctx.ceil_exp),
        Some(false) => Ok(ctx.floor_exp),
        None => Err(Error::Precision(format!(
            "ν_{index} ≈ {} cannot be separated from the threshold at {SEQ_PREC}-bit precision",
            nu.mid_f64()
        ))),
    }
}

/// Build a balanced sequence of the given length from `ν₀ ∈ [A, qA)`.
///
/// All classifications run in certified interval arithmetic at 256-bit
/// precision; an enclosure that cannot be separated from the threshold is a
/// precision error naming the ambiguous index, never a silent choice. When
/// λ is exactly a power of q the sequence is the degenerate constant and
/// `commensurable` is set.
pub fn balanced_sequence(
    lambda_lo: &BigRational,
    lambda_hi: &BigRational,
    q: u32,
    a: &BigRational,
    nu0: &BigRational,
    length: usize,
) -> Result<BalancedSequence> {
    if a < &BigRational::one() {
        return Err(Error::Input("window base A must be ≥ 1".into()));
    }
    let qa = a * BigRational::from_integer(BigInt::from(q));
    if nu0 < a || nu0 >= &qa {
        return Err(Error::Input(format!(
            "ν₀ = {} outside the window [A, qA) = [{}, {})",
            nu0.to_f64().unwrap_or(f64::NAN),
            a.to_f64().unwrap_or(f64::NAN),
            qa.to_f64().unwrap_or(f64::NAN)
        )));
    }
    let ctx = seq_context(lambda_lo, lambda_hi, q, a)?;
    let mut nu = Vec::with_capacity(length);
    let mut delta = Vec::with_capacity(length);
    let mut cur = DyInterval::from_rational(nu0, SEQ_PREC);
    for i in 0..length {
        let d = classify(&ctx, &cur, i as i64)?;
        let ratio = if d == ctx.ceil_exp && !ctx.commensurable {
            &ctx.ratio_ceil
        } else {
            &ctx.ratio_floor
        };
        let next = cur.mul(ratio, SEQ_PREC);
        nu.push(cur);
        delta.push(d);
        cur = next;
    }
    Ok(BalancedSequence {
        q,
        floor_exp: ctx.floor_exp,
        ceil_exp: ctx.ceil_exp,
        a: a.clone(),
        lambda_lo: lambda_lo.clone(),
        lambda_hi: lambda_hi.clone(),
        commensurable: ctx.commensurable,
        nu,
        delta,
    })
}

/// Extend a balanced sequence `count` steps backward: the recurrence inverts
/// exactly, and the window-plus-threshold discipline determines each earlier
/// exponent uniquely. Returns a new sequence whose index 0 is the earliest
/// extended term (the original sequence occupies indices `count..`).
pub fn extend_backward(seq: &BalancedSequence, count: usize) -> Result<BalancedSequence> {
    let ctx = seq_context(&seq.lambda_lo, &seq.lambda_hi, seq.q, &seq.a)?;
    let a_int = DyInterval::from_rational(&seq.a, SEQ_PREC);
    let qa_int = DyInterval::from_rational(
        &(&seq.a * BigRational::from_integer(BigInt::from(seq.q))),
        SEQ_PREC,
    );
    let mut front_nu: Vec<DyInterval> = Vec::with_capacity(count);
    let mut front_delta: Vec<u32> = Vec::with_capacity(count);
    let mut cur = seq
        .nu
        .first()
        .cloned()
        .ok_or_else(|| Error::Input("cannot extend an empty sequence".into()))?;
    for step in 1..=count {
        let index = -(step as i64);
        let mut chosen: Option<(u32, DyInterval)> = None;
        if ctx.commensurable {
            let cand = cur.mul(&ctx.inv_floor, SEQ_PREC);
            chosen = Some((ctx.floor_exp, cand));
        } else {
            // Δ = ceil ⇔ predecessor lies in [A, threshold).
            let cand = cur.mul(&ctx.inv_ceil, SEQ_PREC);
            let in_low = match (cand.certainly_lt(&a_int), cand.certainly_lt(&ctx.threshold)) {
                (Some(below_a), Some(below_t)) => Some(!below_a && below_t),
                _ => None,
            };
            match in_low {
                Some(true) => chosen = Some((ctx.ceil_exp, cand)),
                Some(false) => {
                    let cand2 = cur.mul(&ctx.inv_floor, SEQ_PREC);
                    let in_high = match (
                        cand2.certainly_lt(&ctx.threshold),
                        cand2.certainly_lt(&qa_int),
                    ) {
                        (Some(below_t), Some(below_qa)) => Some(!below_t && below_qa),
                        _ => None,
                    };
                    if let Some(true) = in_high {
                        chosen = Some((ctx.floor_exp, cand2));
                    }
                }
                None => {}
            }
        }
        let (d, prev) = chosen.ok_or_else(|| {
            Error::Precision(format!(
                "ν_{index} cannot be classified at {SEQ_PREC}-bit precision"
            ))
        })?;
        front_nu.push(prev.clone());
        front_delta.push(d);
        cur = prev;
    }
    front_nu.reverse();
    front_delta.reverse();
    front_nu.extend(seq.nu.iter().cloned());
    front_delta.extend(seq.delta.iter().copied());
    Ok(BalancedSequence {
        q: seq.q,
        floor_exp: seq.floor_exp,
        ceil_exp: seq.ceil_exp,
        a: seq.a.clone(),
        lambda_lo: seq.lambda_lo.clone(),
        lambda_hi: seq.lambda_hi.clone(),
        commensurable: seq.commensurable,
        nu: front_nu,
        delta: front_delta,
    })
}

// ---------------------------------------------------------------------------
// Density realization.
// ---------------------------------------------------------------------------

/// Assign populations along the paths of a cover by the telescoping-floor
/// rule: relative to each path's anchor (its lexicographically least
/// vertex), `℘ = ⌊⋆ + ν·M_{next}⌋ − ⌊⋆ + ν·M⌋` where `M` accumulates the μ
/// weights. Cells off the cover are absent from the map (population 0).
/// Every sub-interval `R` of a path then satisfies `|℘_R − ν·μ_R| < 2` —
/// in fact < 1 per path — exactly, because the arithmetic is rational.
pub fn realize_density(
    cover: &PathCover,
    mu: &dyn Fn(u32) -> BigRational,
    nu: &BigRational,
    star: &BigRational,
) -> Result<HashMap<u32, i64>> {
    if nu <= &BigRational::one() {
        return Err(Error::Input("density ν must exceed 1".into()));
    }
    let mut pop = HashMap::new();
    for path in &cover.paths {
        let weights: Vec<BigRational> = path.iter().map(|&v| mu(v)).collect();
        for (i, w) in weights.iter().enumerate() {
            if !w.is_positive() {
                return Err(Error::Input(format!(
                    "μ must be positive on cover vertices (cell {})",
                    path[i]
                )));
            }
        }
        let anchor = path
            .iter()
            .enumerate()
            .min_by_key(|&(_, &v)| v)
            .map(|(i, _)| i)
            .unwrap_or(0);
        // prefix[i] = Σ_{j<i} μ_j; offsets are taken relative to the anchor.
        let mut prefix = Vec::with_capacity(path.len() + 1);
        prefix.push(BigRational::zero());
        for w in &weights {
            let last = prefix.last().unwrap().clone();
            prefix.push(last + w);
        }
        let base = prefix[anchor].clone();
        let floor_at = |i: usize| -> BigInt {
            (star + nu * (&prefix[i] - &base)).floor().to_integer()
        };
        for (i, &v) in path.iter().enumerate() {
            let val = floor_at(i + 1) - floor_at(i);
            let val = val.to_i64().ok_or_else(|| Error::Resource {
                what: "population value overflows i64".into(),
                completed: None,
            })?;
            pop.insert(v, val);
        }
    }
    Ok(pop)
}

// ---------------------------------------------------------------------------
// Bipartite matching utilities (person-level, small instances).
// ---------------------------------------------------------------------------

/// An explicit bipartite graph: `adj[l]` lists the right neighbors of left
/// node `l`.
#[derive(Clone, Debug)]
pub struct BipartiteInstance {
    pub left: usize,
    pub right: usize,
    pub adj: Vec<Vec<u32>>,
}

/// Maximum bipartite matching by augmenting paths; returns the partner of
/// each left node.
pub fn max_bipartite_matching(inst: &BipartiteInstance) -> Vec<Option<u32>> {
    let mut match_left: Vec<Option<u32>> = vec![None; inst.left];
    let mut match_right: Vec<Option<u32>> = vec![None; inst.right];
    fn augment(
        l: usize,
        inst: &BipartiteInstance,
        match_left: &mut [Option<u32>],
        match_right: &mut [Option<u32>],
        visited: &mut [bool],
    ) -> bool {
        for &r in &inst.adj[l] {
            if visited[r as usize] {
                continue;
            }
            visited[r as usize] = true;
            let free = match match_right[r as usize] {
                None => true,
                Some(l2) => augment(l2 as usize, inst, match_left, match_right, visited),
            };
            if free {
                match_left[l] = Some(r);
                match_right[r as usize] = Some(l as u32);
                return true;
            }
        }
        false
    }
    for l in 0..inst.left {
        let mut visited = vec![false; inst.right];
        augment(l, inst, &mut match_left, &mut match_right, &mut visited);
    }
    match_left
}

/// When the matching is not left-perfect, return a Hall-violating left set:
/// the left nodes alternating-reachable from any unmatched left node, whose
/// joint neighborhood is strictly smaller. Returns None for a left-perfect
/// matching.
pub fn hall_deficient_set(
    inst: &BipartiteInstance,
    matching: &[Option<u32>],
) -> Option<Vec<usize>> {
    let unmatched: Vec<usize> = (0..inst.left).filter(|&l| matching[l].is_none()).collect();
    if unmatched.is_empty() {
        return None;
    }
    let mut match_right: Vec<Option<u32>> = vec![None; inst.right];
    for (l, m) in matching.iter().enumerate() {
        if let Some(r) = m {
            match_right[*r as usize] = Some(l as u32);
        }
    }
    let mut left_seen = vec![false; inst.left];
    let mut right_seen = vec![false; inst.right];
    let mut stack = unmatched.clone();
    for &l in &stack {
        left_seen[l] = true;
    }
    while let Some(l) = stack.pop() {
        for &r in &inst.adj[l] {
            if right_seen[r as usize] {
                continue;
            }
            right_seen[r as usize] = true;
            if let Some(l2) = match_right[r as usize] {
                if !left_seen[l2 as usize] {
                    left_seen[l2 as usize] = true;
                    stack.push(l2 as usize);
                }
            }
        }
    }
    let w: Vec<usize> = (0..inst.left).filter(|&l| left_seen[l]).collect();
    let n_w = right_seen.iter().filter(|&&b| b).count();
    debug_assert!(w.len() > n_w);
    Some(w)
}

/// Exhaustively test Hall's condition over all subsets of the left side
/// (≤ 20 left nodes, ≤ 128 right nodes). Returns the first violating subset
/// or None when the condition holds everywhere.
pub fn hall_exhaustive(inst: &BipartiteInstance) -> Result<Option<Vec<usize>>> {
    if inst.left > 20 {
        return Err(Error::Resource {
            what: format!("exhaustive Hall check over {} left nodes (max 20)", inst.left),
            completed: None,
        });
    }
    if inst.right > 128 {
        return Err(Error::Resource {
            what: format!("exhaustive Hall check over {} right nodes (max 128)", inst.right),
            completed: None,
        });
    }
    let masks: Vec<u128> = inst
        .adj
        .iter()
        .map(|nbrs| nbrs.iter().fold(0u128, |m, &r| m | (1u128 << r)))
        .collect();
    for subset in 1u32..(1u32 << inst.left) {
        let mut union = 0u128;
        let mut size = 0u32;
        for (l, mask) in masks.iter().enumerate() {
            if subset & (1 << l) != 0 {
                union |= mask;
                size += 1;
            }
        }
        if (union.count_ones()) < size {
            let w = (0..inst.left).filter(|&l| subset & (1 << l) != 0).collect();
            return Ok(Some(w));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Max-flow with lower bounds (village-level matching solver).
// ---------------------------------------------------------------------------

struct Dinic {
    to: Vec<u32>,
    cap: Vec<i64>,
    adj: Vec<Vec<u32>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    fn new(n: usize) -> Dinic {
        Dinic {
            to: Vec::new(),
            cap: Vec::new(),
            adj: vec![Vec::new(); n],
            level: vec![-1; n],
            iter: vec![0; n],
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, cap: i64) -> usize {
        let id = self.to.len();
        self.to.push(v as u32);
        self.cap.push(cap);
        self.adj[u].push(id as u32);
        self.to.push(u as u32);
        self.cap.push(0);
        self.adj[v].push(id as u32 + 1);
        id
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, f: i64) -> i64 {
        if u == t {
            return f;
        }
        while self.iter[u] < self.adj[u].len() {
            let e = self.adj[u][self.iter[u]] as usize;
            let v = self.to[e] as usize;
            if self.cap[e] > 0 && self.level[v] == self.level[u] + 1 {
                let d = self.dfs(v, t, f.min(self.cap[e]));
                if d > 0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            self.iter[u] += 1;
        }
        0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut total = 0;
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, i64::MAX);
                if f == 0 {
                    break;
                }
                total += f;
            }
        }
        total
    }

    /// Flow pushed along a forward edge (its reverse edge's residual).
    fn flow_on(&self, edge: usize) -> i64 {
        self.cap[edge ^ 1]
    }

    /// Nodes reachable from `s` in the residual graph.
    fn residual_reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &e in &self.adj[u] {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

// ---------------------------------------------------------------------------
// Generation matching.
// ---------------------------------------------------------------------------

/// Level-n inputs of a generation step.
pub struct GenerationInput<'a> {
    pub graph: &'a DivergenceGraph,
    pub pop: &'a HashMap<u32, i64>,
    /// Exponent Δ at this level: each person spawns q^Δ child-slots.
    pub delta: u32,
    pub l_bound: usize,
}

/// A child-slot: (village, person j, slot k).
pub type SlotKey = (u32, u16, u16);
/// A person of an upper village: (village, person l).
pub type PersonKey = (u32, u16);

/// One generation's parent–child assignment, person-resolved. Indices `j`
/// (person of a village) and `k` (child slot) and `l` (person of the upper
/// village) are 0-based here and 1-based in the file format.
#[derive(Clone, Debug)]
pub struct GenerationMatching {
    pub level: i32,
    pub q: u32,
    pub delta: u32,
    pub l_bound: usize,
    /// Villages whose entire slot fan must be (and is) matched: interior in
    /// the divergence graph, populated, with every growth-positive child
    /// populated.
    pub required_villages: Vec<u32>,
    /// Upper villages all of whose people must be (and are) matched:
    /// children of required villages.
    pub required_upper: Vec<u32>,
    /// (village, person j, slot k) → (upper village, person l).
    pub assignments: Vec<(SlotKey, PersonKey)>,
    pub optional_slots_unmatched: i64,
    pub optional_people_unmatched: i64,
}

/// Which side of the bipartite instance a Hall certificate indicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertificateSide {
    /// A set of villages whose child-slots exceed the people reachable
    /// from them.
    SlotsDeficient,
    /// A set of upper villages whose people exceed the slots reachable
    /// from them.
    PeopleDeficient,
    /// The combined lower-bound problem is infeasible although each
    /// one-sided Hall condition holds.
    Combined,
}

/// Witness that no conforming matching exists.
#[derive(Clone, Debug)]
pub struct HallCertificate {
    pub side: CertificateSide,
    /// The deficient village set (lower villages for `SlotsDeficient`,
    /// upper villages for `PeopleDeficient`).
    pub villages: Vec<u32>,
    /// Total demand of the set (slots, or people).
    pub demand: i64,
    /// Total supply reachable from the set.
    pub supply: i64,
}

pub enum MatchOutcome {
    Matched(GenerationMatching),
    Infeasible(HallCertificate),
}

/// Match one generation: every person of a level-n village `v` owns `q^Δ`
/// child-slots, each of which must be filled by a distinct person of some
/// level-(n+1) village `u` with `P(u)` within `l_bound` graph hops of `v`.
///
/// Interior semantics: slot fans of *required* villages (interior, populated,
/// all growth-positive children populated) must be fully matched, as must
/// all people of their children; other villages and people participate as
/// optional absorbers of boundary imbalance. A fully required instance with
/// unequal totals is a capacity-mismatch error; an unsatisfiable required
/// set yields a Hall certificate.
pub fn match_generations(
    frame: &LocalFrame,
    patch: &ShellingPatch,
    positive_mask: &[bool],
    q: u32,
    lower: &GenerationInput,
    upper_pop: &HashMap<u32, i64>,
) -> Result<MatchOutcome> {
    let graph = lower.graph;
    let q_pow = (q as i64).pow(lower.delta);
    let succ = successor_lists(frame, patch);
    let parent_of = |u: u32| -> Option<u32> {
        patch.dp[u as usize].and_then(|g| frame.neighbor(u, g))
    };

    // Lower villages and their required status.
    let villages: Vec<u32> = graph
        .vertices
        .iter()
        .copied()
        .filter(|v| lower.pop.get(v).copied().unwrap_or(0) > 0)
        .collect();
    let required: Vec<bool> = villages
        .iter()
        .map(|&v| {
            graph.is_interior(v)
                && succ[v as usize].iter().all(|&c| {
                    let positive = *positive_mask
                        .get(patch.state[c as usize] as usize)
                        .unwrap_or(&false);
                    !positive || upper_pop.get(&c).copied().unwrap_or(0) > 0
                })
        })
        .collect();
    let required_set: HashSet<u32> = villages
        .iter()
        .zip(&required)
        .filter(|&(_, &r)| r)
        .map(|(&v, _)| v)
        .collect();

    // Upper villages with people and an in-graph parent.
    let mut uppers: Vec<(u32, u32)> = Vec::new(); // (cell, parent)
    let mut upper_cells: Vec<u32> = upper_pop
        .iter()
        .filter(|&(_, &p)| p > 0)
        .map(|(&u, _)| u)
        .collect();
    upper_cells.sort_unstable();
    for u in upper_cells {
        if let Some(p) = parent_of(u) {
            if graph.is_vertex(p) {
                uppers.push((u, p));
            }
        }
    }
    let upper_required: Vec<bool> = uppers
        .iter()
        .map(|&(_, p)| required_set.contains(&p))
        .collect();

    // Capacity-mismatch error on fully required instances.
    let all_required =
        required.iter().all(|&r| r) && upper_required.iter().all(|&r| r);
    let total_slots: i64 = villages.iter().map(|v| q_pow * lower.pop[v]).sum();
    let total_people: i64 = uppers.iter().map(|(u, _)| upper_pop[u]).sum();
    if all_required && total_slots != total_people {
        return Err(Error::Input(format!(
            "capacity mismatch on fully interior region: {total_slots} child-slots vs {total_people} people"
        )));
    }

    // Locality arcs via graph balls around the distinct parents.
    let mut reach_of_parent: HashMap<u32, Vec<u32>> = HashMap::new();
    for &(_, p) in &uppers {
        reach_of_parent
            .entry(p)
            .or_insert_with(|| graph_ball(graph, p, lower.l_bound));
    }
    let vil_index: HashMap<u32, usize> =
        villages.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    // Lower-bound flow: S=0, T=1, S*=2, T*=3, villages 4.., uppers after.
    let vn = villages.len();
    let un = uppers.len();
    let (s, t, s_star, t_star) = (0usize, 1usize, 2usize, 3usize);
    let vil_node = |i: usize| 4 + i;
    let upper_node = |i: usize| 4 + vn + i;
    let n_nodes = 4 + vn + un;
    let mut din = Dinic::new(n_nodes);
    let mut excess = vec![0i64; n_nodes];
    let inf = i64::MAX / 4;

    for (i, &v) in villages.iter().enumerate() {
        let cap = q_pow * lower.pop[&v];
        let low = if required[i] { cap } else { 0 };
        din.add_edge(s, vil_node(i), cap - low);
        excess[vil_node(i)] += low;
        excess[s] -= low;
    }
    let mut arc_ids: Vec<(usize, usize, usize)> = Vec::new(); // (vil i, upper i, edge)
    for (ui, &(u, p)) in uppers.iter().enumerate() {
        for &v in &reach_of_parent[&p] {
            if let Some(&vi) = vil_index.get(&v) {
                let e = din.add_edge(vil_node(vi), upper_node(ui), inf);
                arc_ids.push((vi, ui, e));
            }
        }
        let cap = upper_pop[&u];
        let low = if upper_required[ui] { cap } else { 0 };
        din.add_edge(upper_node(ui), t, cap - low);
        excess[t] += low;
        excess[upper_node(ui)] -= low;
    }
    din.add_edge(t, s, inf);
    let mut need = 0i64;
    for (node, &e) in excess.iter().enumerate() {
        if e > 0 {
            din.add_edge(s_star, node, e);
            need += e;
        } else if e < 0 {
            din.add_edge(node, t_star, -e);
        }
    }
    let got = din.max_flow(s_star, t_star);
    if got < need {
        return Ok(MatchOutcome::Infeasible(certificate(
            &villages,
            &required,
            &uppers,
            &upper_required,
            upper_pop,
            lower.pop,
            q_pow,
            &reach_of_parent,
            &din,
            s_star,
        )));
    }
    // Top up with ordinary max flow so optional capacity is used too.
    din.max_flow(s, t);

    // Expand village-level flow into person-level assignments.
    let mut flows: Vec<Vec<(usize, i64)>> = vec![Vec::new(); vn]; // per village: (upper, count)
    for &(vi, ui, e) in &arc_ids {
        let f = din.flow_on(e);
        if f > 0 {
            flows[vi].push((ui, f));
        }
    }
    let mut person_cursor: Vec<i64> = vec![0; un];
    let mut assignments = Vec::new();
    for (vi, &v) in villages.iter().enumerate() {
        flows[vi].sort_unstable();
        let mut slot = 0i64; // linear slot index = j·q^Δ + k
        for &(ui, count) in &flows[vi] {
            let u = uppers[ui].0;
            for _ in 0..count {
                let j = (slot / q_pow) as u16;
                let k = (slot % q_pow) as u16;
                let l = person_cursor[ui] as u16;
                person_cursor[ui] += 1;
                assignments.push(((v, j, k), (u, l)));
                slot += 1;
            }
        }
    }
    let matched_slots: i64 = assignments.len() as i64;
    let matched_people: i64 = person_cursor.iter().sum();
    let required_upper: Vec<u32> = uppers
        .iter()
        .zip(&upper_required)
        .filter(|&(_, &r)| r)
        .map(|(&(u, _), _)| u)
        .collect();
    let mut required_villages: Vec<u32> = required_set.into_iter().collect();
    required_villages.sort_unstable();
    Ok(MatchOutcome::Matched(GenerationMatching {
        level: graph.level,
        q,
        delta: lower.delta,
        l_bound: lower.l_bound,
        required_villages,
        required_upper,
        assignments,
        optional_slots_unmatched: total_slots - matched_slots,
        optional_people_unmatched: total_people - matched_people,
    }))
}

/// Derive a readable Hall certificate from an infeasible generation.
#[allow(clippy::too_many_arguments)]
fn certificate(
    villages: &[u32],
    required: &[bool],
    uppers: &[(u32, u32)],
    upper_required: &[bool],
    upper_pop: &HashMap<u32, i64>,
    lower_pop: &HashMap<u32, i64>,
    q_pow: i64,
    reach_of_parent: &HashMap<u32, Vec<u32>>,
    feas: &Dinic,
    s_star: usize,
) -> HallCertificate {
    // One-sided check: can the required slots alone be matched into all
    // people? (Village-level Hall on the slots side.)
    let vn = villages.len();
    let un = uppers.len();
    let vil_index: HashMap<u32, usize> =
        villages.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let inf = i64::MAX / 4;
    {
        let mut din = Dinic::new(2 + vn + un);
        let (s, t) = (0usize, 1usize);
        let mut demand = 0i64;
        for (i, &v) in villages.iter().enumerate() {
            if required[i] {
                let cap = q_pow * lower_pop[&v];
                din.add_edge(s, 2 + i, cap);
                demand += cap;
            }
        }
        for (ui, &(u, p)) in uppers.iter().enumerate() {
            for &v in &reach_of_parent[&p] {
                if let Some(&vi) = vil_index.get(&v) {
                    din.add_edge(2 + vi, 2 + vn + ui, inf);
                }
            }
            din.add_edge(2 + vn + ui, t, upper_pop[&u]);
        }
        let flow = din.max_flow(s, t);
        if flow < demand {
            let reach = din.residual_reachable(s);
            let set: Vec<u32> = villages
                .iter()
                .enumerate()
                .filter(|&(i, _)| required[i] && reach[2 + i])
                .map(|(_, &v)| v)
                .collect();
            let d: i64 = set.iter().map(|v| q_pow * lower_pop[v]).sum();
            let supply: i64 = uppers
                .iter()
                .enumerate()
                .filter(|&(ui, _)| reach[2 + vn + ui])
                .map(|(_, &(u, _))| upper_pop[&u])
                .sum();
            return HallCertificate {
                side: CertificateSide::SlotsDeficient,
                villages: set,
                demand: d,
                supply,
            };
        }
    }
    // Symmetric: can the required people be matched into all slots?
    {
        let mut din = Dinic::new(2 + vn + un);
        let (s, t) = (0usize, 1usize);
        let mut demand = 0i64;
        for (ui, &(u, p)) in uppers.iter().enumerate() {
            if upper_required[ui] {
                din.add_edge(s, 2 + vn + ui, upper_pop[&u]);
                demand += upper_pop[&u];
            }
            for &v in &reach_of_parent[&p] {
                if let Some(&vi) = vil_index.get(&v) {
                    din.add_edge(2 + vn + ui, 2 + vi, inf);
                }
            }
        }
        for (i, &v) in villages.iter().enumerate() {
            din.add_edge(2 + i, t, q_pow * lower_pop[&v]);
        }
        let flow = din.max_flow(s, t);
        if flow < demand {
            let reach = din.residual_reachable(s);
            let set: Vec<u32> = uppers
                .iter()
                .enumerate()
                .filter(|&(ui, _)| upper_required[ui] && reach[2 + vn + ui])
                .map(|(_, &(u, _))| u)
                .collect();
            let d: i64 = set.iter().map(|u| upper_pop[u]).sum();
            let supply: i64 = villages
                .iter()
                .enumerate()
                .filter(|&(i, _)| reach[2 + i])
                .map(|(_, &v)| q_pow * lower_pop[&v])
                .sum();
            return HallCertificate {
                side: CertificateSide::PeopleDeficient,
                villages: set,
                demand: d,
                supply,
            };
        }
    }
    // Both one-sided conditions hold: report the combined cut.
    let reach = feas.residual_reachable(s_star);
    let set: Vec<u32> = villages
        .iter()
        .enumerate()
        .filter(|&(i, _)| reach[4 + i])
        .map(|(_, &v)| v)
        .collect();
    HallCertificate {
        side: CertificateSide::Combined,
        villages: set,
        demand: 0,
        supply: 0,
    }
}

// ---------------------------------------------------------------------------
// Populated patches.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct PopulationParams {
    pub q: u32,
    /// Window base A (default `(2q+2)·max μ + 1`).
    pub a: BigRational,
    /// Population cap N (default `⌈qA·max μ⌉ + 1`).
    pub n_cap: i64,
    /// Path-cover jump bound and matching neighborhood radius
    /// (default `2·#B(2δ) + 1`).
    pub l_bound: usize,
    /// Telescoping basepoint ⋆.
    pub star: BigRational,
    /// Divergence future depth.
    pub depth: usize,
    /// Hyperbolicity parameter δ.
    pub delta_param: usize,
    pub floor_exp: u32,
    pub ceil_exp: u32,
}

/// Build-time knobs for [`build_populated_patch`].
pub struct PopulationConfig {
    pub q: u32,
    /// ν₀ for the lowest populated level; default A.
    pub nu0: Option<BigRational>,
    pub star: BigRational,
    pub depth: usize,
    pub delta_param: usize,
    /// Override for the jump bound L (default `2·#B(2δ)+1` from the frame).
    pub l_bound: Option<usize>,
    /// Levels whose cell count exceeds this are not populated (their
    /// divergence graphs would be dominated by truncation).
    pub max_level_cells: usize,
    /// Exponent bound for the commensurability scan.
    pub incommensurability_bound: u32,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            q: 2,
            nu0: None,
            star: BigRational::zero(),
            depth: 2,
            delta_param: 2,
            l_bound: None,
            max_level_cells: 1500,
            incommensurability_bound: 12,
        }
    }
}

/// A shelling patch with populations, per-level exponents, and per-level
/// parent–child matchings.
pub struct PopulatedPatch {
    pub base: ShellingPatch,
    /// Per cell; 0 off the populated covers.
    pub pop: Vec<i64>,
    /// Per cell; −1 where undefined (cell not on a populated level).
    pub delta: Vec<i8>,
    /// Populated levels, a contiguous ascending run.
    pub levels: Vec<i32>,
    /// Exact ν per populated level (recurrence at the rational midpoint λ̃).
    pub nu_exact: Vec<BigRational>,
    pub delta_per_level: Vec<u32>,
    /// Divergence graph per populated level.
    pub graphs: Vec<DivergenceGraph>,
    pub covers: Vec<PathCover>,
    /// Matchings for consecutive level pairs (`levels[i]` → `levels[i+1]`).
    pub matchings: Vec<GenerationMatching>,
    pub params: PopulationParams,
    pub warnings: Vec<String>,
}

impl PopulatedPatch {
    pub fn level_index(&self, level: i32) -> Option<usize> {
        self.levels.iter().position(|&l| l == level)
    }

    pub fn graph_at(&self, level: i32) -> Option<&DivergenceGraph> {
        self.level_index(level).map(|i| &self.graphs[i])
    }
}

fn positivity_mask(growth: &GrowthData) -> Vec<bool> {
    let mut mask = vec![false; growth.partition.len()];
    for s in growth.positive_states() {
        mask[s as usize] = true;
    }
    mask
}

/// Assemble a populated patch: shelling → divergence graphs per level →
/// path covers → balanced sequence anchored at the lowest populated level →
/// telescoped populations → generation matchings. Stages fail with the
/// stage named; a Hall failure on a required (interior) region is a hard
/// error.
pub fn build_populated_patch(
    oracle: &GroupOracle,
    fsa: &ShortlexFsa,
    growth: &GrowthData,
    frame: &LocalFrame,
    basepoint: &Word,
    cfg: &PopulationConfig,
) -> Result<PopulatedPatch> {
    let mut warnings = Vec::new();
    let stage = |name: &str, e: Error| -> Error {
        match e {
            Error::Config(m) => Error::Config(format!("{name} stage: {m}")),
            Error::Input(m) => Error::Input(format!("{name} stage: {m}")),
            other => other,
        }
    };

    // Parameters from the growth data.
    let max_mu: BigRational = growth
        .mu
        .iter()
        .cloned()
        .max()
        .ok_or_else(|| Error::Config("growth data has no states".into()))?;
    if !max_mu.is_positive() {
        return Err(Error::Config("growth weights are all zero".into()));
    }
    let qr = BigRational::from_integer(BigInt::from(cfg.q));
    let two = BigRational::from_integer(BigInt::from(2));
    let a = (&qr * &two + &two) * &max_mu + BigRational::one();
    let n_cap = (&qr * &a * &max_mu).ceil().to_integer().to_i64().unwrap_or(i64::MAX) + 1;
    let delta_param = cfg.delta_param;
    if frame.radius() < 2 * delta_param {
        return Err(Error::Config(format!(
            "frame radius {} cannot host 2δ = {}",
            frame.radius(),
            2 * delta_param
        )));
    }
    let ball_2delta: usize = (0..=2 * delta_param)
        .map(|l| frame.cells_at_level(l).len())
        .sum();
    let l_bound = cfg.l_bound.unwrap_or(2 * ball_2delta + 1);

    // Commensurability advisory.
    match crate::growth::check_incommensurable(growth, cfg.q as u64, cfg.incommensurability_bound)
    {
        Ok(rep) => {
            if !rep.incommensurable {
                warnings.push(format!(
                    "λ and q = {} are commensurable (witness q^{} = λ^{}): the exponent sequence will be periodic",
                    cfg.q,
                    rep.witness.map(|w| w.0).unwrap_or(0),
                    rep.witness.map(|w| w.1).unwrap_or(0)
                ));
            }
        }
        Err(e) => warnings.push(format!("commensurability scan skipped: {e}")),
    }

    // Shelling stage.
    let patch = generate_shelling_patch(oracle, fsa, frame, basepoint)
        .map_err(|e| stage("shelling", e))?;
    let mask = positivity_mask(growth);
    let min_h = *patch.h.iter().min().unwrap();
    let max_h = *patch.h.iter().max().unwrap();

    // Divergence stage: graphs for all levels that are small enough and
    // deep enough for the future test.
    let mut level_count: BTreeMap<i32, usize> = BTreeMap::new();
    for &h in &patch.h {
        *level_count.entry(h).or_insert(0) += 1;
    }
    let mut candidates: Vec<(i32, DivergenceGraph)> = Vec::new();
    for level in min_h..=max_h - cfg.depth as i32 {
        let cells = level_count.get(&level).copied().unwrap_or(0);
        if cells == 0 || cells > cfg.max_level_cells {
            continue;
        }
        let g = build_divergence_graph(
            oracle,
            frame,
            &patch,
            &mask,
            level,
            cfg.depth,
            delta_param,
        )
        .map_err(|e| stage("divergence", e))?;
        if g.interior.iter().any(|&b| b) {
            candidates.push((level, g));
        }
    }

    // Longest contiguous run of populated levels.
    let mut best: (usize, usize) = (0, 0); // (start index, len)
    let mut i = 0;
    while i < candidates.len() {
        let mut j = i;
        while j + 1 < candidates.len() && candidates[j + 1].0 == candidates[j].0 + 1 {
            j += 1;
        }
        if j - i + 1 > best.1 {
            best = (i, j - i + 1);
        }
        i = j + 1;
    }
    if best.1 < 3 {
        return Err(Error::Config(format!(
            "shelling stage: only {} contiguous interior levels available; a population needs at least 3 (increase the patch radius)",
            best.1
        )));
    }
    let run: Vec<(i32, DivergenceGraph)> = candidates
        .drain(best.0..best.0 + best.1)
        .collect();
    let levels: Vec<i32> = run.iter().map(|&(l, _)| l).collect();
    let graphs: Vec<DivergenceGraph> = run.into_iter().map(|(_, g)| g).collect();

    // Path covers.
    let mut covers = Vec::with_capacity(graphs.len());
    for g in &graphs {
        let c = path_cover(g, l_bound).map_err(|e| stage("path cover", e))?;
        warnings.extend(
            c.warnings
                .iter()
                .map(|w| format!("level {}: {w}", g.level)),
        );
        covers.push(c);
    }

    // Balanced sequence anchored at the lowest populated level.
    let nu0 = cfg.nu0.clone().unwrap_or_else(|| a.clone());
    let seq = balanced_sequence(
        growth.lambda.lo(),
        growth.lambda.hi(),
        cfg.q,
        &a,
        &nu0,
        levels.len(),
    )
    .map_err(|e| stage("balanced sequence", e))?;
    if seq.commensurable {
        warnings.push("balanced sequence is the degenerate constant (λ a power of q)".into());
    }

    // Exact ν recurrence at the rational midpoint λ̃ (certified Δ choices).
    let lambda_mid = (growth.lambda.lo() + growth.lambda.hi())
        / BigRational::from_integer(BigInt::from(2));
    let mut nu_exact = Vec::with_capacity(levels.len());
    let mut cur = nu0.clone();
    for &d in &seq.delta {
        nu_exact.push(cur.clone());
        cur = cur * BigRational::from_integer(BigInt::from(cfg.q).pow(d)) / &lambda_mid;
    }

    // Population realization per level.
    let mut pop = vec![0i64; frame.len()];
    let mut delta = vec![-1i8; frame.len()];
    let mu_of = |cell: u32| growth.mu[patch.state[cell as usize] as usize].clone();
    let mut pop_maps: Vec<HashMap<u32, i64>> = Vec::with_capacity(levels.len());
    for (i, cover) in covers.iter().enumerate() {
        let map = realize_density(cover, &mu_of, &nu_exact[i], &cfg.star)
            .map_err(|e| stage("density", e))?;
        for (&cell, &v) in &map {
            pop[cell as usize] = v;
        }
        pop_maps.push(map);
    }
    for (i, &level) in levels.iter().enumerate() {
        let d = seq.delta[i] as i8;
        for (cell, &h) in patch.h.iter().enumerate() {
            if h == level {
                delta[cell] = d;
            }
        }
    }

    // Generation matchings for consecutive pairs.
    let mut matchings = Vec::with_capacity(levels.len().saturating_sub(1));
    for i in 0..levels.len() - 1 {
        let gen = GenerationInput {
            graph: &graphs[i],
            pop: &pop_maps[i],
            delta: seq.delta[i],
            l_bound,
        };
        match match_generations(frame, &patch, &mask, cfg.q, &gen, &pop_maps[i + 1])
            .map_err(|e| stage("matching", e))?
        {
            MatchOutcome::Matched(m) => matchings.push(m),
            MatchOutcome::Infeasible(cert) => {
                return Err(Error::Input(format!(
                    "matching stage: Hall failure at level {} ({:?} side): {} villages demand {} against supply {} — interior infeasibility indicates a bug",
                    levels[i],
                    cert.side,
                    cert.villages.len(),
                    cert.demand,
                    cert.supply
                )));
            }
        }
    }

    Ok(PopulatedPatch {
        base: patch,
        pop,
        delta,
        levels,
        nu_exact,
        delta_per_level: seq.delta.clone(),
        graphs,
        covers,
        matchings,
        params: PopulationParams {
            q: cfg.q,
            a,
            n_cap,
            l_bound,
            star: cfg.star.clone(),
            depth: cfg.depth,
            delta_param,
            floor_exp: seq.floor_exp,
            ceil_exp: seq.ceil_exp,
        },
        warnings,
    })
}

use crate::divergence::build_divergence_graph;

// ---------------------------------------------------------------------------
// Populated-rule checking.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PopRuleKind {
    /// ℘ outside [0, N] or positive off the populated levels.
    PopRange,
    /// ℘ positive on a growth-zero cell, or zero on a covered cell.
    PopZeroSet,
    /// Δ not constant across a horosphere.
    DeltaConstancy,
    /// Δ outside {⌊log_q λ⌋, ⌈log_q λ⌉}.
    DeltaValue,
    /// A required slot or person left unmatched.
    MatchIncomplete,
    /// A slot or person matched twice.
    MatchDuplicate,
    /// An assigned child's village is not within L graph hops.
    MatchLocality,
    /// A person with the wrong number of child slots.
    ChildCount,
    /// A violation of the underlying shortlex-shelling rules.
    Underlying,
}

impl std::fmt::Display for PopRuleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PopRuleKind::PopRange => "population range",
            PopRuleKind::PopZeroSet => "population zero-set",
            PopRuleKind::DeltaConstancy => "exponent horosphere-constancy",
            PopRuleKind::DeltaValue => "exponent value",
            PopRuleKind::MatchIncomplete => "matching completeness",
            PopRuleKind::MatchDuplicate => "matching injectivity",
            PopRuleKind::MatchLocality => "matching locality",
            PopRuleKind::ChildCount => "child count",
            PopRuleKind::Underlying => "underlying shelling rule",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct PopViolation {
    pub cell: u32,
    pub kind: PopRuleKind,
    pub detail: String,
}

/// Check every populated-shelling clause on the interior: population range
/// and zero-set agreement, horosphere-constancy and admissibility of Δ,
/// matching completeness/injectivity/locality and child counts, plus the
/// underlying shortlex-shelling rules (window rules when a dictionary is
/// supplied). Violations are data, not errors.
pub fn check_populated_rules(
    pres: &Presentation,
    fsa: &ShortlexFsa,
    frame: &LocalFrame,
    growth: &GrowthData,
    pp: &PopulatedPatch,
    dict: Option<&RuleDictionary>,
) -> Result<Vec<PopViolation>> {
    let mut out = Vec::new();
    let patch = &pp.base;
    let mask = positivity_mask(growth);
    let level_set: HashSet<i32> = pp.levels.iter().copied().collect();

    // Population range and zero-set.
    for cell in 0..frame.len() as u32 {
        let p = pp.pop[cell as usize];
        if !(0..=pp.params.n_cap).contains(&p) {
            out.push(PopViolation {
                cell,
                kind: PopRuleKind::PopRange,
                detail: format!("℘ = {p} outside [0, {}]", pp.params.n_cap),
            });
        }
        if p > 0 && !level_set.contains(&patch.h[cell as usize]) {
            out.push(PopViolation {
                cell,
                kind: PopRuleKind::PopRange,
                detail: "positive population off the populated levels".into(),
            });
        }
        if p > 0 && !mask[patch.state[cell as usize] as usize] {
            out.push(PopViolation {
                cell,
                kind: PopRuleKind::PopZeroSet,
                detail: "positive population on a growth-zero cell".into(),
            });
        }
    }
    for (i, cover) in pp.covers.iter().enumerate() {
        for path in &cover.paths {
            for &v in path {
                if pp.pop[v as usize] == 0 {
                    out.push(PopViolation {
                        cell: v,
                        kind: PopRuleKind::PopZeroSet,
                        detail: format!(
                            "covered cell of level {} has zero population",
                            pp.levels[i]
                        ),
                    });
                }
            }
        }
    }

    // Δ per horosphere: defined exactly on populated levels, constant there
    // (majority vote localizes the offenders), and an admissible exponent.
    for (i, &level) in pp.levels.iter().enumerate() {
        let mut counts: HashMap<i8, usize> = HashMap::new();
        for (cell, &h) in patch.h.iter().enumerate() {
            if h == level {
                *counts.entry(pp.delta[cell]).or_insert(0) += 1;
            }
        }
        let majority = counts
            .iter()
            .max_by_key(|&(&v, &c)| (c, std::cmp::Reverse(v)))
            .map(|(&v, _)| v)
            .unwrap_or(-1);
        for (cell, &h) in patch.h.iter().enumerate() {
            if h != level {
                continue;
            }
            let d = pp.delta[cell];
            if d != majority {
                out.push(PopViolation {
                    cell: cell as u32,
                    kind: PopRuleKind::DeltaConstancy,
                    detail: format!("Δ = {d} differs from the level's majority {majority}"),
                });
            }
            if d < 0
                || !(d as u32 == pp.params.floor_exp || d as u32 == pp.params.ceil_exp)
            {
                out.push(PopViolation {
                    cell: cell as u32,
                    kind: PopRuleKind::DeltaValue,
                    detail: format!(
                        "Δ = {d} not in {{{}, {}}}",
                        pp.params.floor_exp, pp.params.ceil_exp
                    ),
                });
            }
        }
        let expected = pp.delta_per_level[i] as i8;
        if majority != expected {
            out.push(PopViolation {
                cell: u32::MAX,
                kind: PopRuleKind::DeltaConstancy,
                detail: format!(
                    "level {level} majority Δ = {majority} disagrees with the balanced sequence's {expected}"
                ),
            });
        }
    }
    for (cell, &d) in pp.delta.iter().enumerate() {
        if d >= 0 && !level_set.contains(&patch.h[cell]) {
            out.push(PopViolation {
                cell: cell as u32,
                kind: PopRuleKind::DeltaValue,
                detail: "Δ defined off the populated levels".into(),
            });
        }
    }

    // Matching replay.
    for m in &pp.matchings {
        let graph = match pp.graph_at(m.level) {
            Some(g) => g,
            None => {
                out.push(PopViolation {
                    cell: u32::MAX,
                    kind: PopRuleKind::MatchIncomplete,
                    detail: format!("no divergence graph stored for level {}", m.level),
                });
                continue;
            }
        };
        let q_pow = (m.q as i64).pow(m.delta);
        let mut slot_seen: HashSet<(u32, u16, u16)> = HashSet::new();
        let mut person_seen: HashSet<(u32, u16)> = HashSet::new();
        let mut slots_of: HashMap<u32, i64> = HashMap::new();
        let mut people_of: HashMap<u32, i64> = HashMap::new();
        let mut locality_cache: HashMap<(u32, u32), bool> = HashMap::new();
        for &((v, j, k), (u, l)) in &m.assignments {
            if !slot_seen.insert((v, j, k)) {
                out.push(PopViolation {
                    cell: v,
                    kind: PopRuleKind::MatchDuplicate,
                    detail: format!("slot ({v}, {j}, {k}) assigned twice"),
                });
            }
            if !person_seen.insert((u, l)) {
                out.push(PopViolation {
                    cell: u,
                    kind: PopRuleKind::MatchDuplicate,
                    detail: format!("person ({u}, {l}) matched twice"),
                });
            }
            *slots_of.entry(v).or_insert(0) += 1;
            *people_of.entry(u).or_insert(0) += 1;
            if (j as i64) >= pp.pop[v as usize] || (k as i64) >= q_pow {
                out.push(PopViolation {
                    cell: v,
                    kind: PopRuleKind::ChildCount,
                    detail: format!(
                        "slot index ({j}, {k}) outside ℘ = {} × q^Δ = {q_pow}",
                        pp.pop[v as usize]
                    ),
                });
            }
            if (l as i64) >= pp.pop[u as usize] {
                out.push(PopViolation {
                    cell: u,
                    kind: PopRuleKind::ChildCount,
                    detail: format!("person index {l} outside ℘ = {}", pp.pop[u as usize]),
                });
            }
            if patch.h[v as usize] != m.level || patch.h[u as usize] != m.level + 1 {
                out.push(PopViolation {
                    cell: v,
                    kind: PopRuleKind::MatchLocality,
                    detail: "assignment crosses the wrong levels".into(),
                });
                continue;
            }
            let parent = patch.dp[u as usize].and_then(|g| frame.neighbor(u, g));
            match parent {
                None => out.push(PopViolation {
                    cell: u,
                    kind: PopRuleKind::MatchLocality,
                    detail: "assigned child's predecessor leaves the patch".into(),
                }),
                Some(p) => {
                    let local = *locality_cache.entry((v, p)).or_insert_with(|| {
                        graph_distance_capped(graph, v, p, m.l_bound).is_some()
                    });
                    if !local {
                        out.push(PopViolation {
                            cell: v,
                            kind: PopRuleKind::MatchLocality,
                            detail: format!(
                                "child's village {u} has predecessor {p} beyond {} hops of {v}",
                                m.l_bound
                            ),
                        });
                    }
                }
            }
        }
        for &v in &m.required_villages {
            let want = q_pow * pp.pop[v as usize];
            let got = slots_of.get(&v).copied().unwrap_or(0);
            if got != want {
                out.push(PopViolation {
                    cell: v,
                    kind: PopRuleKind::MatchIncomplete,
                    detail: format!("required village has {got}/{want} slots matched"),
                });
            }
        }
        for &u in &m.required_upper {
            let want = pp.pop[u as usize];
            let got = people_of.get(&u).copied().unwrap_or(0);
            if got != want {
                out.push(PopViolation {
                    cell: u,
                    kind: PopRuleKind::MatchIncomplete,
                    detail: format!("required upper village has {got}/{want} people matched"),
                });
            }
        }
    }

    // Underlying shortlex-shelling rules.
    let data = local_data(frame, patch)?;
    let mut underlying: Vec<Violation> = check_preshelling(pres, frame, &data)?;
    if let Some(d) = dict {
        underlying.extend(check_shortlex_local_rules(
            pres,
            fsa,
            frame,
            &data,
            d,
            pp.params.delta_param,
        )?);
    }
    out.extend(underlying.into_iter().map(|v| PopViolation {
        cell: v.cell,
        kind: PopRuleKind::Underlying,
        detail: format!("{}: {}", v.kind, v.detail),
    }));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Hall inequalities on regions.
// ---------------------------------------------------------------------------

/// For a region `R` of populated villages at `levels[pair]`: returns
/// `(q^Δ·℘_R, ℘_{P⁻¹𝒩R})` — the lower Hall inequality demands the first
/// not exceed the second.
pub fn hall_lower(
    frame: &LocalFrame,
    pp: &PopulatedPatch,
    pair: usize,
    region: &[u32],
) -> Result<(i64, i64)> {
    if pair + 1 >= pp.levels.len() {
        return Err(Error::Input("no generation above this level".into()));
    }
    let graph = &pp.graphs[pair];
    let q_pow = (pp.params.q as i64).pow(pp.delta_per_level[pair]);
    let lhs: i64 = region.iter().map(|&v| q_pow * pp.pop[v as usize]).sum();
    let mut nbrs: HashSet<u32> = HashSet::new();
    for &v in region {
        if !graph.is_vertex(v) {
            return Err(Error::Input(format!("{v} is not a vertex of the level")));
        }
        nbrs.extend(graph_ball(graph, v, pp.params.l_bound));
    }
    let succ = successor_lists(frame, &pp.base);
    let rhs: i64 = nbrs
        .iter()
        .flat_map(|&v| succ[v as usize].iter())
        .map(|&u| pp.pop[u as usize])
        .sum();
    Ok((lhs, rhs))
}

/// For a region `R` of populated villages at `levels[pair + 1]`: returns
/// `(℘_R, q^Δ·℘_{𝒩(P R)})` — the upper Hall inequality demands the first
/// not exceed the second.
pub fn hall_upper(
    frame: &LocalFrame,
    pp: &PopulatedPatch,
    pair: usize,
    region: &[u32],
) -> Result<(i64, i64)> {
    if pair + 1 >= pp.levels.len() {
        return Err(Error::Input("no generation above this level".into()));
    }
    let graph = &pp.graphs[pair];
    let q_pow = (pp.params.q as i64).pow(pp.delta_per_level[pair]);
    let lhs: i64 = region.iter().map(|&u| pp.pop[u as usize]).sum();
    let mut villages: HashSet<u32> = HashSet::new();
    for &u in region {
        let p = pp.base.dp[u as usize]
            .and_then(|g| frame.neighbor(u, g))
            .ok_or_else(|| Error::Input(format!("{u} has no in-patch predecessor")))?;
        if !graph.is_vertex(p) {
            return Err(Error::Input(format!(
                "{u}'s predecessor is not a vertex of the level below"
            )));
        }
        villages.extend(graph_ball(graph, p, pp.params.l_bound));
    }
    let rhs: i64 = villages.iter().map(|&v| q_pow * pp.pop[v as usize]).sum();
    Ok((lhs, rhs))
}

// ---------------------------------------------------------------------------
// Growth-sequence analysis.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct GrowthSequenceReport {
    /// Smallest period ≤ max_period under which the window is periodic.
    pub period: Option<usize>,
    /// Exponent sum over one period, when periodic.
    pub period_exponent_sum: Option<u64>,
    pub final_mean_delta: f64,
    pub log_q_lambda: f64,
    /// |final mean − log_q λ|.
    pub final_deviation: f64,
    /// Max over prefixes of |prefix mean − log_q λ|.
    pub max_prefix_deviation: f64,
    pub verdict: String,
}

/// Analyze an exponent sequence: scan for small periods, compare running
/// means against `log_q λ`, and state the rational-approximation verdict —
/// a p-periodic window with exponent sum Δ̂ forces `λ^p = q^Δ̂`, i.e.
/// `log_q λ = Δ̂/p ∈ ℚ`, which certified incommensurability rules out.
pub fn analyze_growth_sequence(
    delta: &[u32],
    q: u32,
    lambda: f64,
    max_period: usize,
    incommensurable: Option<bool>,
) -> GrowthSequenceReport {
    assert!(!delta.is_empty(), "exponent sequence must be nonempty");
    let mut period = None;
    for p in 1..=max_period.min(delta.len().saturating_sub(1)) {
        if delta.iter().zip(delta.iter().skip(p)).all(|(a, b)| a == b) {
            period = Some(p);
            break;
        }
    }
    let period_exponent_sum =
        period.map(|p| delta.iter().take(p).map(|&d| d as u64).sum());
    let target = lambda.ln() / (q as f64).ln();
    let mut sum = 0.0f64;
    let mut max_dev = 0.0f64;
    for (i, &d) in delta.iter().enumerate() {
        sum += d as f64;
        let mean = sum / (i + 1) as f64;
        max_dev = max_dev.max((mean - target).abs());
    }
    let final_mean = sum / delta.len() as f64;
    let final_dev = (final_mean - target).abs();
    let verdict = match (period, incommensurable) {
        (Some(p), Some(true)) => format!(
            "window is {p}-periodic, forcing log_{q} λ = {}/{p} ∈ ℚ — contradicting certified incommensurability; finite-window artifact or corrupted sequence",
            period_exponent_sum.unwrap()
        ),
        (Some(p), _) => format!(
            "window is {p}-periodic with exponent sum {}: consistent with λ^{p} = q^{} (commensurable λ)",
            period_exponent_sum.unwrap(),
            period_exponent_sum.unwrap()
        ),
        (None, Some(true)) => format!(
            "no period ≤ {max_period} in a window of {}: consistent with certified incommensurability",
            delta.len()
        ),
        (None, _) => format!("no period ≤ {max_period} in a window of {}", delta.len()),
    };
    GrowthSequenceReport {
        period,
        period_exponent_sum,
        final_mean_delta: final_mean,
        log_q_lambda: target,
        final_deviation: final_dev,
        max_prefix_deviation: max_dev,
        verdict,
    }
}

// ---------------------------------------------------------------------------
// Descendant cones.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct DescendantConeReport {
    pub village: u32,
    pub depth: usize,
    pub descendant_villages: usize,
    pub fiber_size: usize,
    /// Max over descendants of the distance to the n-fold fiber over the
    /// village.
    pub max_deviation: usize,
    pub bound: usize,
    pub within: bool,
}

/// Trace the matched descendants of a village `n` generations up and
/// measure how far each strays from the n-fold predecessor fiber over the
/// village. The quasi-geodesic stability constant has no explicit formula,
/// so `r_cfg` is configuration and the report carries the empirical max.
pub fn check_descendant_cone(
    oracle: &GroupOracle,
    frame: &LocalFrame,
    pp: &PopulatedPatch,
    village: u32,
    n: usize,
    r_cfg: usize,
) -> Result<DescendantConeReport> {
    let level = pp.base.h[village as usize];
    let start = pp
        .level_index(level)
        .ok_or_else(|| Error::Input(format!("cell {village} is not on a populated level")))?;
    if start + n > pp.matchings.len() {
        return Err(Error::Config(format!(
            "only {} generations available above level {level}",
            pp.matchings.len().saturating_sub(start)
        )));
    }
    // Matched descendants.
    let mut current: HashSet<u32> = HashSet::from([village]);
    for g in 0..n {
        let m = pp
            .matchings
            .get(start + g)
            .ok_or_else(|| Error::Config("generation matchings exhausted".into()))?;
        let mut next = HashSet::new();
        for &((v, _, _), (u, _)) in &m.assignments {
            if current.contains(&v) {
                next.insert(u);
            }
        }
        current = next;
    }
    // n-fold fiber over the village (in-frame successor composition).
    let succ = successor_lists(frame, &pp.base);
    let mut fiber: Vec<u32> = vec![village];
    for _ in 0..n {
        let mut next = Vec::new();
        for &c in &fiber {
            if frame.level(c) >= frame.radius() {
                return Err(Error::Config(
                    "the village's depth-n future leaves the patch".into(),
                ));
            }
            next.extend_from_slice(&succ[c as usize]);
        }
        next.sort_unstable();
        next.dedup();
        fiber = next;
    }
    let mut max_dev = 0usize;
    for &w in &current {
        let mut best = usize::MAX;
        for &z in &fiber {
            best = best.min(oracle.dist(frame.word(w), frame.word(z))?);
            if best == 0 {
                break;
            }
        }
        max_dev = max_dev.max(best);
    }
    let bound = 2 * r_cfg;
    Ok(DescendantConeReport {
        village,
        depth: n,
        descendant_villages: current.len(),
        fiber_size: fiber.len(),
        max_deviation: max_dev,
        bound,
        within: max_dev <= bound,
    })
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

fn fmt_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let (n, d) = s
        .split_once('/')
        .ok_or_else(|| Error::Input(format!("expected p/q rational, found `{s}`")))?;
    let n: BigInt = n
        .parse()
        .map_err(|_| Error::Input(format!("bad numerator `{n}`")))?;
    let d: BigInt = d
        .parse()
        .map_err(|_| Error::Input(format!("bad denominator `{d}`")))?;
    if d.is_zero() {
        return Err(Error::Input("zero denominator".into()));
    }
    Ok(BigRational::new(n, d))
}

fn fmt_cell_word(pres: &Presentation, frame: &LocalFrame, cell: u32) -> String {
    let w = frame.word(cell);
    if w.is_empty() {
        "1".into()
    } else {
        pres.format_word(w)
    }
}

fn parse_cell_word(pres: &Presentation, frame: &LocalFrame, s: &str) -> Result<u32> {
    let w = if s == "1" {
        Word::empty()
    } else {
        pres.parse_word(s)?
    };
    frame
        .cell(&w)
        .ok_or_else(|| Error::Input(format!("`{s}` is not a cell of the frame")))
}

/// Serialize a populated patch: the patch file format extended with `pop=`
/// and `delta=` cell fields, per-level `level:` lines, `required:` village
/// lines, and a `match:` section (1-based person/slot indices).
pub fn serialize_populated_patch(
    pres: &Presentation,
    frame: &LocalFrame,
    pp: &PopulatedPatch,
) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "populated-patch");
    let _ = writeln!(out, "presentation: {:016x}", pres.fingerprint());
    let _ = writeln!(out, "radius: {}", pp.base.radius);
    let bp = match &pp.base.basepoint {
        Some(w) => pres.format_word(w),
        None => "-".into(),
    };
    let _ = writeln!(out, "basepoint: {bp}");
    let p = &pp.params;
    let _ = writeln!(out, "q: {}", p.q);
    let _ = writeln!(out, "a: {}", fmt_rational(&p.a));
    let _ = writeln!(out, "n-cap: {}", p.n_cap);
    let _ = writeln!(out, "l-bound: {}", p.l_bound);
    let _ = writeln!(out, "star: {}", fmt_rational(&p.star));
    let _ = writeln!(out, "depth: {}", p.depth);
    let _ = writeln!(out, "delta-param: {}", p.delta_param);
    let _ = writeln!(out, "exponents: {} {}", p.floor_exp, p.ceil_exp);
    let _ = writeln!(out, "cells: {}", frame.len());
    for (i, &level) in pp.levels.iter().enumerate() {
        let _ = writeln!(
            out,
            "level: {level} delta={} nu={}",
            pp.delta_per_level[i],
            fmt_rational(&pp.nu_exact[i])
        );
    }
    for cell in 0..frame.len() as u32 {
        let word = fmt_cell_word(pres, frame, cell);
        let h = pp.base.h[cell as usize];
        let state = pp.base.state[cell as usize];
        let dp = match pp.base.dp[cell as usize] {
            Some(g) => pres.format_word(&Word::single(g)),
            None => "self".into(),
        };
        let _ = write!(out, "cell: {word} h={h} state={state} P={dp}");
        if pp.pop[cell as usize] != 0 {
            let _ = write!(out, " pop={}", pp.pop[cell as usize]);
        }
        if pp.delta[cell as usize] >= 0 {
            let _ = write!(out, " delta={}", pp.delta[cell as usize]);
        }
        let _ = writeln!(out);
    }
    for m in &pp.matchings {
        for &v in &m.required_villages {
            let _ = writeln!(
                out,
                "required: {} lower {}",
                m.level,
                fmt_cell_word(pres, frame, v)
            );
        }
        for &u in &m.required_upper {
            let _ = writeln!(
                out,
                "required: {} upper {}",
                m.level,
                fmt_cell_word(pres, frame, u)
            );
        }
        for &((v, j, k), (u, l)) in &m.assignments {
            let _ = writeln!(
                out,
                "match: {} {} {} {} -> {} {}",
                m.level,
                fmt_cell_word(pres, frame, v),
                j + 1,
                k + 1,
                fmt_cell_word(pres, frame, u),
                l + 1
            );
        }
    }
    Ok(out)
}

/// Parse a serialized populated patch against its frame. Divergence graphs
/// and path covers are not stored in the file; rebuild them with
/// [`rebuild_support`] before running checks that need them.
pub fn parse_populated_patch(
    pres: &Presentation,
    frame: &LocalFrame,
    text: &str,
) -> Result<PopulatedPatch> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    if lines.next() != Some("populated-patch") {
        return Err(Error::Input("missing `populated-patch` header".into()));
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
    let radius: usize = header("radius")?
        .parse()
        .map_err(|_| Error::Input("bad radius".into()))?;
    if radius != frame.radius() {
        return Err(Error::Input(format!(
            "file radius {radius} does not match the frame's {}",
            frame.radius()
        )));
    }
    let bp = header("basepoint")?;
    let basepoint = if bp == "-" {
        None
    } else {
        Some(pres.parse_word(&bp)?)
    };
    let q: u32 = header("q")?.parse().map_err(|_| Error::Input("bad q".into()))?;
    let a = parse_rational(&header("a")?)?;
    let n_cap: i64 = header("n-cap")?
        .parse()
        .map_err(|_| Error::Input("bad n-cap".into()))?;
    let l_bound: usize = header("l-bound")?
        .parse()
        .map_err(|_| Error::Input("bad l-bound".into()))?;
    let star = parse_rational(&header("star")?)?;
    let depth: usize = header("depth")?
        .parse()
        .map_err(|_| Error::Input("bad depth".into()))?;
    let delta_param: usize = header("delta-param")?
        .parse()
        .map_err(|_| Error::Input("bad delta-param".into()))?;
    let exps = header("exponents")?;
    let mut it = exps.split_whitespace();
    let floor_exp: u32 = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Input("bad exponents".into()))?;
    let ceil_exp: u32 = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Input("bad exponents".into()))?;
    let cells: usize = header("cells")?
        .parse()
        .map_err(|_| Error::Input("bad cell count".into()))?;
    if cells != frame.len() {
        return Err(Error::Input(format!(
            "file has {cells} cells, frame has {}",
            frame.len()
        )));
    }

    let mut levels = Vec::new();
    let mut delta_per_level = Vec::new();
    let mut nu_exact = Vec::new();
    while let Some(line) = lines.peek() {
        if let Some(rest) = line.strip_prefix("level:") {
            let mut parts = rest.split_whitespace();
            let level: i32 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Input("bad level line".into()))?;
            let d: u32 = parts
                .next()
                .and_then(|s| s.strip_prefix("delta="))
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Input("level line missing delta".into()))?;
            let nu = parts
                .next()
                .and_then(|s| s.strip_prefix("nu="))
                .ok_or_else(|| Error::Input("level line missing nu".into()))?;
            levels.push(level);
            delta_per_level.push(d);
            nu_exact.push(parse_rational(nu)?);
            lines.next();
        } else {
            break;
        }
    }

    let mut h = vec![0i32; frame.len()];
    let mut state = vec![0u32; frame.len()];
    let mut dp = vec![None; frame.len()];
    let mut pop = vec![0i64; frame.len()];
    let mut delta = vec![-1i8; frame.len()];
    for expect in 0..frame.len() as u32 {
        let line = lines
            .next()
            .ok_or_else(|| Error::Input("file ends inside the cell section".into()))?;
        let rest = line
            .strip_prefix("cell:")
            .ok_or_else(|| Error::Input(format!("expected `cell:`, found `{line}`")))?;
        let mut parts = rest.split_whitespace();
        let word = parts
            .next()
            .ok_or_else(|| Error::Input("empty cell line".into()))?;
        let cell = parse_cell_word(pres, frame, word)?;
        if cell != expect {
            return Err(Error::Input(format!(
                "cell lines out of frame order at `{word}`"
            )));
        }
        for field in parts {
            if let Some(v) = field.strip_prefix("h=") {
                h[cell as usize] = v
                    .parse()
                    .map_err(|_| Error::Input(format!("bad height `{v}`")))?;
            } else if let Some(v) = field.strip_prefix("state=") {
                state[cell as usize] = v
                    .parse()
                    .map_err(|_| Error::Input(format!("bad state `{v}`")))?;
            } else if let Some(v) = field.strip_prefix("P=") {
                dp[cell as usize] = if v == "self" {
                    None
                } else {
                    let w = pres.parse_word(v)?;
                    if w.len() != 1 {
                        return Err(Error::Input(format!("bad predecessor `{v}`")));
                    }
                    Some(w.as_slice()[0])
                };
            } else if let Some(v) = field.strip_prefix("pop=") {
                pop[cell as usize] = v
                    .parse()
                    .map_err(|_| Error::Input(format!("bad population `{v}`")))?;
            } else if let Some(v) = field.strip_prefix("delta=") {
                delta[cell as usize] = v
                    .parse()
                    .map_err(|_| Error::Input(format!("bad delta `{v}`")))?;
            } else {
                return Err(Error::Input(format!("unrecognized cell field `{field}`")));
            }
        }
    }

    let mut matchings: BTreeMap<i32, GenerationMatching> = BTreeMap::new();
    for (i, &level) in levels.iter().enumerate() {
        if i + 1 < levels.len() {
            matchings.insert(
                level,
                GenerationMatching {
                    level,
                    q,
                    delta: delta_per_level[i],
                    l_bound,
                    required_villages: Vec::new(),
                    required_upper: Vec::new(),
                    assignments: Vec::new(),
                    optional_slots_unmatched: 0,
                    optional_people_unmatched: 0,
                },
            );
        }
    }
    for line in lines {
        if let Some(rest) = line.strip_prefix("required:") {
            let mut parts = rest.split_whitespace();
            let level: i32 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Input("bad required line".into()))?;
            let side = parts
                .next()
                .ok_or_else(|| Error::Input("required line missing side".into()))?;
            let word = parts
                .next()
                .ok_or_else(|| Error::Input("required line missing word".into()))?;
            let cell = parse_cell_word(pres, frame, word)?;
            let m = matchings
                .get_mut(&level)
                .ok_or_else(|| Error::Input(format!("required line for unknown level {level}")))?;
            match side {
                "lower" => m.required_villages.push(cell),
                "upper" => m.required_upper.push(cell),
                _ => return Err(Error::Input(format!("bad required side `{side}`"))),
            }
        } else if let Some(rest) = line.strip_prefix("match:") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 7 || parts[4] != "->" {
                return Err(Error::Input(format!("bad match line `{line}`")));
            }
            let level: i32 = parts[0]
                .parse()
                .map_err(|_| Error::Input("bad match level".into()))?;
            let v = parse_cell_word(pres, frame, parts[1])?;
            let j: u16 = parts[2]
                .parse()
                .map_err(|_| Error::Input("bad person index".into()))?;
            let k: u16 = parts[3]
                .parse()
                .map_err(|_| Error::Input("bad slot index".into()))?;
            let u = parse_cell_word(pres, frame, parts[5])?;
            let l: u16 = parts[6]
                .parse()
                .map_err(|_| Error::Input("bad person index".into()))?;
            if j == 0 || k == 0 || l == 0 {
                return Err(Error::Input("match indices are 1-based".into()));
            }
            let m = matchings
                .get_mut(&level)
                .ok_or_else(|| Error::Input(format!("match line for unknown level {level}")))?;
            m.assignments.push(((v, j - 1, k - 1), (u, l - 1)));
        } else {
            return Err(Error::Input(format!("unrecognized line `{line}`")));
        }
    }

    Ok(PopulatedPatch {
        base: ShellingPatch {
            radius,
            basepoint,
            h,
            state,
            dp,
        },
        pop,
        delta,
        levels,
        nu_exact,
        delta_per_level,
        graphs: Vec::new(),
        covers: Vec::new(),
        matchings: matchings.into_values().collect(),
        params: PopulationParams {
            q,
            a,
            n_cap,
            l_bound,
            star,
            depth,
            delta_param,
            floor_exp,
            ceil_exp,
        },
        warnings: Vec::new(),
    })
}

/// Rebuild the divergence graphs (and optionally path covers) of a parsed
/// populated patch; both are deterministic functions of the base patch and
/// parameters, so they are not stored in the file.
pub fn rebuild_support(
    oracle: &GroupOracle,
    frame: &LocalFrame,
    growth: &GrowthData,
    pp: &mut PopulatedPatch,
) -> Result<()> {
    let mask = positivity_mask(growth);
    pp.graphs = pp
        .levels
        .iter()
        .map(|&level| {
            build_divergence_graph(
                oracle,
                frame,
                &pp.base,
                &mask,
                level,
                pp.params.depth,
                pp.params.delta_param,
            )
        })
        .collect::<Result<_>>()?;
    pp.covers = pp
        .graphs
        .iter()
        .map(|g| path_cover(g, pp.params.l_bound))
        .collect::<Result<_>>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsa::build_shortlex_fsa;
    use crate::growth::analyze_growth;

    const BUDGET: usize = 50_000_000;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn line_graph(n: u32) -> DivergenceGraph {
        let vertices: Vec<u32> = (0..n).collect();
        let interior = vec![true; n as usize];
        let edges: Vec<(u32, u32)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        DivergenceGraph::from_edges(0, 1, 1, vertices, interior, edges).unwrap()
    }

    #[test]
    fn path_cover_on_line_and_cycle() {
        let line = line_graph(5);
        let cover = path_cover(&line, 1).unwrap();
        assert_eq!(cover.paths.len(), 1);
        assert_eq!(cover.paths[0], vec![0, 1, 2, 3, 4]);
        assert_eq!(cover.defect, 1);
        assert!(verify_path_cover(&line, &cover, 1).is_empty());

        let cycle = DivergenceGraph::from_edges(
            0,
            1,
            1,
            (0..6).collect(),
            vec![true; 6],
            vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)],
        )
        .unwrap();
        let cover = path_cover(&cycle, 1).unwrap();
        assert_eq!(cover.paths.len(), 1);
        assert_eq!(cover.covered(), 6);
        assert!(verify_path_cover(&cycle, &cover, 1).is_empty());
    }

    #[test]
    fn path_cover_random_graph_replay() {
        // Deterministic scramble: a 50-vertex ring plus chords.
        let n = 50u32;
        let mut edges: Vec<(u32, u32)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let mut x = 0x2545f4914f6cdd1du64;
        for _ in 0..40 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let a = (x % n as u64) as u32;
            let b = ((x >> 32) % n as u64) as u32;
            if a != b {
                edges.push((a.min(b), a.max(b)));
            }
        }
        let g = DivergenceGraph::from_edges(0, 1, 4, (0..n).collect(), vec![true; n as usize], edges)
            .unwrap();
        let cover = path_cover(&g, 9).unwrap();
        assert!(verify_path_cover(&g, &cover, 9).is_empty());
        assert_eq!(cover.covered(), n as usize);
        assert!(cover.defect <= 9);

        // Tampering is caught by the replay.
        let mut bad = cover.clone();
        let moved = bad.paths[0].remove(0);
        assert!(verify_path_cover(&g, &bad, 9)
            .iter()
            .any(|p| p.contains("not covered")));
        bad.paths[0].insert(0, moved);
        bad.paths[0].insert(1, moved);
        assert!(verify_path_cover(&g, &bad, 9)
            .iter()
            .any(|p| p.contains("covered twice")));
    }

    #[test]
    fn path_cover_disconnected_warns() {
        let g = DivergenceGraph::from_edges(
            0,
            1,
            1,
            vec![0, 1, 2, 3],
            vec![true; 4],
            vec![(0, 1), (2, 3)],
        )
        .unwrap();
        let cover = path_cover(&g, 2).unwrap();
        assert_eq!(cover.paths.len(), 2);
        assert!(!cover.warnings.is_empty());
        assert!(verify_path_cover(&g, &cover, 2).is_empty());
    }

    #[test]
    fn balanced_sequence_matches_frozen_table() {
        let three = ratio(3, 1);
        let seq =
            balanced_sequence(&three, &three, 2, &ratio(10, 1), &ratio(10, 1), 8).unwrap();
        assert!(!seq.commensurable);
        assert_eq!(seq.floor_exp, 1);
        assert_eq!(seq.ceil_exp, 2);
        assert_eq!(seq.delta, vec![2, 2, 1, 2, 1, 2, 2, 1]);
        let expect = [
            10.0,
            13.333333333333334,
            17.77777777777778,
            11.851851851851853,
            15.802469135802469,
            10.534979423868313,
            14.046639231824417,
            18.72885230909922,
        ];
        for (i, e) in expect.iter().enumerate() {
            assert!(
                (seq.nu_f64(i) - e).abs() < 1e-6,
                "ν_{i} = {} vs {e}",
                seq.nu_f64(i)
            );
            assert_eq!(seq.nu_in_window(i), Some(true));
        }
    }

    #[test]
    fn balanced_sequence_commensurable_is_constant_and_flagged() {
        let four = ratio(4, 1);
        let seq =
            balanced_sequence(&four, &four, 2, &ratio(7, 1), &ratio(7, 1), 50).unwrap();
        assert!(seq.commensurable);
        assert!(seq.delta.iter().all(|&d| d == 2));
        for i in 0..seq.len() {
            assert!((seq.nu_f64(i) - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn balanced_sequence_rejects_bad_inputs() {
        let three = ratio(3, 1);
        assert!(balanced_sequence(&three, &three, 2, &ratio(10, 1), &ratio(30, 1), 4).is_err());
        assert!(balanced_sequence(&three, &three, 1, &ratio(10, 1), &ratio(10, 1), 4).is_err());
        assert!(balanced_sequence(&three, &three, 2, &ratio(1, 2), &ratio(1, 2), 4).is_err());
        // Enclosure straddling a power of q is a precision error.
        assert!(matches!(
            balanced_sequence(&ratio(39, 10), &ratio(41, 10), 2, &ratio(10, 1), &ratio(10, 1), 4),
            Err(Error::Precision(_))
        ));
    }

    #[test]
    fn balanced_sequence_reverses_exactly() {
        let three = ratio(3, 1);
        let seq =
            balanced_sequence(&three, &three, 2, &ratio(10, 1), &ratio(123, 10), 40).unwrap();
        let ext = extend_backward(&seq, 25).unwrap();
        assert_eq!(ext.len(), 65);
        assert_eq!(&ext.delta[25..], &seq.delta[..]);
        // Every extended term sits in the window and is threshold-consistent
        // with its exponent; replaying the forward recurrence over the
        // extension lands back on the original ν₀ enclosure.
        for i in 0..25 {
            assert_eq!(ext.nu_in_window(i), Some(true));
        }
        let mut cur = ext.nu[0].clone();
        let lam = DyInterval::from_rational(&three, SEQ_PREC);
        for &d in &ext.delta[..25] {
            let qd = DyInterval::from_rational(&ratio(1 << d, 1), SEQ_PREC);
            cur = cur.mul(&qd, SEQ_PREC).div(&lam, SEQ_PREC);
        }
        let nu0 = &seq.nu[0];
        assert!(
            cur.lo.cmp_val(&nu0.hi) != std::cmp::Ordering::Greater
                && nu0.lo.cmp_val(&cur.hi) != std::cmp::Ordering::Greater,
            "forward replay of the backward extension must overlap ν₀"
        );
    }

    #[test]
    fn realize_density_examples_and_interval_bound() {
        let cover = PathCover {
            paths: vec![(0..10u32).collect()],
            defect: 1,
            warnings: vec![],
        };
        let one = |_: u32| BigRational::one();
        // Integer ν telescopes exactly.
        let pop = realize_density(&cover, &one, &ratio(3, 1), &BigRational::zero()).unwrap();
        assert!((0..10u32).all(|v| pop[&v] == 3));
        // ν = 2.5 alternates 2, 3 from the anchor.
        let pop = realize_density(&cover, &one, &ratio(5, 2), &BigRational::zero()).unwrap();
        let vals: Vec<i64> = (0..10u32).map(|v| pop[&v]).collect();
        assert_eq!(vals, vec![2, 3, 2, 3, 2, 3, 2, 3, 2, 3]);
        assert!(realize_density(&cover, &one, &ratio(1, 1), &BigRational::zero()).is_err());

        // Random μ ∈ {1, 2}, ν = 7.3: every sub-interval within 2, values
        // in {0} ∪ [⌊ν⌋, ⌈ν·max μ⌉].
        let n = 1000u32;
        let cover = PathCover {
            paths: vec![(0..n).collect()],
            defect: 1,
            warnings: vec![],
        };
        let mu = |v: u32| ratio(1 + ((v as i64 * 2654435761) >> 13 & 1), 1);
        let nu = ratio(73, 10);
        let pop = realize_density(&cover, &mu, &nu, &ratio(1, 3)).unwrap();
        for v in 0..n {
            let p = pop[&v];
            assert!((7..=15).contains(&p), "value {p} out of range");
        }
        let mut x = 0x9e3779b97f4a7c15u64;
        for _ in 0..500 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let s = (x % n as u64) as u32;
            let e = s + 1 + ((x >> 32) % (n - s) as u64) as u32;
            let pop_sum: i64 = (s..e).map(|v| pop[&v]).sum();
            let mu_sum: BigRational = (s..e).map(mu).sum();
            let err = BigRational::from_integer(BigInt::from(pop_sum)) - &nu * mu_sum;
            assert!(
                err.abs() < ratio(2, 1),
                "interval [{s}, {e}) error {}",
                err.to_f64().unwrap()
            );
        }
    }

    #[test]
    fn matching_small_instances_and_certificates() {
        // One parent with two slots, two unit villages: unique perfect.
        let inst = BipartiteInstance {
            left: 2,
            right: 2,
            adj: vec![vec![0, 1], vec![0, 1]],
        };
        let m = max_bipartite_matching(&inst);
        assert!(m.iter().all(|x| x.is_some()));
        assert!(hall_deficient_set(&inst, &m).is_none());
        assert!(hall_exhaustive(&inst).unwrap().is_none());

        // 6 slots into 5 people: deficiency certificate.
        let inst = BipartiteInstance {
            left: 6,
            right: 5,
            adj: (0..6).map(|_| (0..5u32).collect()).collect(),
        };
        let m = max_bipartite_matching(&inst);
        let w = hall_deficient_set(&inst, &m).expect("deficient set");
        let nbrs: HashSet<u32> = w.iter().flat_map(|&l| inst.adj[l].iter().copied()).collect();
        assert!(w.len() > nbrs.len(), "certificate must violate Hall");
        assert!(hall_exhaustive(&inst).unwrap().is_some());
    }

    #[test]
    fn matching_agrees_with_exhaustive_hall_on_small_instances() {
        let mut x = 0xc0ffee123456789u64;
        let mut rand = move || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            x
        };
        for trial in 0..200 {
            let left = 3 + (rand() % 10) as usize; // ≤ 12
            let right = 2 + (rand() % 12) as usize;
            let adj: Vec<Vec<u32>> = (0..left)
                .map(|_| {
                    (0..right as u32)
                        .filter(|_| rand() % 3 == 0)
                        .collect()
                })
                .collect();
            let inst = BipartiteInstance { left, right, adj };
            let matching = max_bipartite_matching(&inst);
            let perfect = matching.iter().all(|m| m.is_some());
            let hall = hall_exhaustive(&inst).unwrap();
            assert_eq!(
                perfect,
                hall.is_none(),
                "trial {trial}: matching and Hall disagree"
            );
            if let Some(w) = hall {
                let nbrs: HashSet<u32> =
                    w.iter().flat_map(|&l| inst.adj[l].iter().copied()).collect();
                assert!(w.len() > nbrs.len());
            }
            if !perfect {
                let w = hall_deficient_set(&inst, &matching).unwrap();
                let nbrs: HashSet<u32> =
                    w.iter().flat_map(|&l| inst.adj[l].iter().copied()).collect();
                assert!(w.len() > nbrs.len());
            }
        }
    }

    fn genus2() -> (GroupOracle, ShortlexFsa, GrowthData) {
        let pres =
            Presentation::parse("generators: a A b B c C d D\nrelator: abABcdCD").unwrap();
        let oracle = GroupOracle::new(pres).unwrap();
        let fsa = build_shortlex_fsa(&oracle, 3, 10_000).unwrap();
        let growth = analyze_growth(&fsa).unwrap();
        (oracle, fsa, growth)
    }

    fn build_small_pp() -> (GroupOracle, ShortlexFsa, GrowthData, LocalFrame, PopulatedPatch) {
        let (oracle, fsa, growth) = genus2();
        let frame = LocalFrame::build(&oracle, 5, BUDGET).unwrap();
        let bp = fsa.enumerate_level(6, BUDGET).unwrap()[0].clone();
        let cfg = PopulationConfig::default();
        let pp =
            build_populated_patch(&oracle, &fsa, &growth, &frame, &bp, &cfg).unwrap();
        (oracle, fsa, growth, frame, pp)
    }

    #[test]
    fn populated_patch_end_to_end_clean() {
        let (oracle, fsa, growth, frame, pp) = build_small_pp();
        assert!(pp.levels.len() >= 3, "levels: {:?}", pp.levels);
        assert!(pp
            .matchings
            .iter()
            .any(|m| !m.required_villages.is_empty()));
        assert!(pp.matchings.iter().any(|m| !m.assignments.is_empty()));
        let pres = oracle.presentation();
        let violations =
            check_populated_rules(pres, &fsa, &frame, &growth, &pp, None).unwrap();
        assert!(violations.is_empty(), "{:?}", &violations[..violations.len().min(5)]);
    }

    #[test]
    fn populated_rules_catch_mutations() {
        let (oracle, fsa, growth, frame, mut pp) = build_small_pp();
        let pres = oracle.presentation().clone();
        // Δ edited at one covered cell of a middle level.
        let mid = pp.levels[pp.levels.len() / 2];
        let cell = (0..frame.len()).find(|&c| pp.base.h[c] == mid).unwrap();
        let orig = pp.delta[cell];
        pp.delta[cell] = if orig == pp.params.floor_exp as i8 {
            pp.params.ceil_exp as i8
        } else {
            pp.params.floor_exp as i8
        };
        let violations =
            check_populated_rules(&pres, &fsa, &frame, &growth, &pp, None).unwrap();
        assert!(violations
            .iter()
            .any(|v| v.kind == PopRuleKind::DeltaConstancy && v.cell == cell as u32));
        pp.delta[cell] = orig;

        // A required village's child reassigned to a far (isolated) village.
        let mi = pp
            .matchings
            .iter()
            .position(|m| !m.assignments.is_empty() && !m.required_villages.is_empty())
            .unwrap();
        let graph = pp.graph_at(pp.matchings[mi].level).unwrap();
        let req: HashSet<u32> = pp.matchings[mi].required_villages.iter().copied().collect();
        let ai = pp.matchings[mi]
            .assignments
            .iter()
            .position(|&((v, _, _), _)| req.contains(&v))
            .expect("an assignment from a required village");
        let ((v0, _, _), _) = pp.matchings[mi].assignments[ai];
        let far = graph
            .vertices
            .iter()
            .copied()
            .find(|&v| graph.degree(v) == 0 && v != v0)
            .expect("isolated vertex");
        let far_pop = 1.max(pp.pop[far as usize]);
        pp.pop[far as usize] = far_pop;
        pp.matchings[mi].assignments[ai].0 .0 = far;
        let violations =
            check_populated_rules(&pres, &fsa, &frame, &growth, &pp, None).unwrap();
        assert!(
            violations
                .iter()
                .any(|v| v.kind == PopRuleKind::MatchLocality),
            "expected a locality violation"
        );
        // The original village also lost a slot.
        assert!(violations
            .iter()
            .any(|v| v.kind == PopRuleKind::MatchIncomplete));
    }

    #[test]
    fn populated_hall_inequalities_on_regions() {
        let (_oracle, _fsa, _growth, frame, pp) = build_small_pp();
        for pair in 0..pp.levels.len() - 1 {
            let m = &pp.matchings[pair];
            // Exhaustive singletons and adjacent pairs over required villages.
            for &v in &m.required_villages {
                let (lhs, rhs) = hall_lower(&frame, &pp, pair, &[v]).unwrap();
                assert!(lhs <= rhs, "lower Hall fails at {v}: {lhs} > {rhs}");
            }
            for w in m.required_villages.windows(2) {
                let (lhs, rhs) = hall_lower(&frame, &pp, pair, w).unwrap();
                assert!(lhs <= rhs);
            }
            for &u in &m.required_upper {
                let (lhs, rhs) = hall_upper(&frame, &pp, pair, &[u]).unwrap();
                assert!(lhs <= rhs, "upper Hall fails at {u}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn growth_sequence_analysis() {
        // Constant exponents: period 1, consistent with commensurability.
        let r = analyze_growth_sequence(&[2; 64], 2, 4.0, 16, Some(false));
        assert_eq!(r.period, Some(1));
        assert!(r.verdict.contains("commensurable"));
        assert!(r.final_deviation < 1e-12);

        // Balanced λ = 3 window: no small period, mean near log₂ 3.
        let three = ratio(3, 1);
        let seq =
            balanced_sequence(&three, &three, 2, &ratio(10, 1), &ratio(10, 1), 1000).unwrap();
        let r = analyze_growth_sequence(&seq.delta, 2, 3.0, 100, Some(true));
        assert_eq!(r.period, None);
        assert!(r.final_deviation < 1e-2, "deviation {}", r.final_deviation);
        assert!(r.verdict.contains("incommensurability"));

        // A genuinely periodic non-constant window is detected.
        let d: Vec<u32> = (0..60).map(|i| if i % 3 == 0 { 2 } else { 1 }).collect();
        let r = analyze_growth_sequence(&d, 2, 3.0, 10, Some(true));
        assert_eq!(r.period, Some(3));
        assert!(r.verdict.contains("contradicting"));
    }

    #[test]
    fn descendant_cone_stays_near_fiber() {
        let (oracle, _fsa, _growth, frame, pp) = build_small_pp();
        let m = pp
            .matchings
            .iter()
            .find(|m| !m.required_villages.is_empty())
            .unwrap();
        let v = m.required_villages[0];
        let rep = check_descendant_cone(&oracle, &frame, &pp, v, 1, 10).unwrap();
        assert!(rep.descendant_villages > 0);
        assert!(rep.fiber_size > 0);
        assert!(rep.within, "deviation {} > {}", rep.max_deviation, rep.bound);
        // ℘ = 0 villages have empty descendant sets.
        let empty = (0..frame.len() as u32)
            .find(|&c| pp.base.h[c as usize] == m.level && pp.pop[c as usize] == 0);
        if let Some(c) = empty {
            let rep = check_descendant_cone(&oracle, &frame, &pp, c, 1, 10).unwrap();
            assert_eq!(rep.descendant_villages, 0);
            assert_eq!(rep.max_deviation, 0);
        }
    }

    #[test]
    fn populated_patch_round_trip() {
        let (oracle, fsa, growth, frame, pp) = build_small_pp();
        let pres = oracle.presentation().clone();
        let text = serialize_populated_patch(&pres, &frame, &pp).unwrap();
        let mut parsed = parse_populated_patch(&pres, &frame, &text).unwrap();
        assert_eq!(parsed.base.h, pp.base.h);
        assert_eq!(parsed.base.state, pp.base.state);
        assert_eq!(parsed.base.dp, pp.base.dp);
        assert_eq!(parsed.pop, pp.pop);
        assert_eq!(parsed.delta, pp.delta);
        assert_eq!(parsed.levels, pp.levels);
        assert_eq!(parsed.nu_exact, pp.nu_exact);
        assert_eq!(parsed.params.n_cap, pp.params.n_cap);
        assert_eq!(parsed.params.a, pp.params.a);
        for (a, b) in parsed.matchings.iter().zip(&pp.matchings) {
            assert_eq!(a.level, b.level);
            assert_eq!(a.assignments, b.assignments);
            let mut ra = a.required_villages.clone();
            let mut rb = b.required_villages.clone();
            ra.sort_unstable();
            rb.sort_unstable();
            assert_eq!(ra, rb);
        }
        // Rebuilt support lets the full checker run on the parsed object.
        rebuild_support(&oracle, &frame, &growth, &mut parsed).unwrap();
        let violations =
            check_populated_rules(&pres, &fsa, &frame, &growth, &parsed, None).unwrap();
        assert!(violations.is_empty());
    }

    #[test]
    fn capacity_mismatch_is_an_error() {
        // A fully required synthetic instance with unequal totals: one
        // village with one person and q^Δ = 2 slots, one child village with
        // only one person. Build on the free group for a tiny frame.
        let pres = Presentation::parse("generators: a A b B\n").unwrap();
        let oracle = GroupOracle::new(pres).unwrap();
        let fsa = build_shortlex_fsa(&oracle, 1, 100).unwrap();
        let frame = LocalFrame::build(&oracle, 3, BUDGET).unwrap();
        let bp = fsa.enumerate_level(4, BUDGET).unwrap()[0].clone();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        let mask = vec![true; fsa.num_states()];
        // Pick an interior-capable vertex: the frame center.
        let center = frame.cell(&Word::empty()).unwrap();
        let level = patch.h[center as usize];
        let graph = build_divergence_graph(&oracle, &frame, &patch, &mask, level, 1, 0).unwrap();
        assert!(graph.is_interior(center));
        let succ = successor_lists(&frame, &patch);
        // Populate every child so the center village is required; its one
        // person owns q^Δ = 2 slots against 3 required people.
        let lower_pop: HashMap<u32, i64> = HashMap::from([(center, 1)]);
        let upper_pop: HashMap<u32, i64> =
            succ[center as usize].iter().map(|&c| (c, 1)).collect();
        assert_eq!(upper_pop.len(), 3);
        let gen = GenerationInput {
            graph: &graph,
            pop: &lower_pop,
            delta: 1,
            l_bound: 1,
        };
        let r = match_generations(&frame, &patch, &mask, 2, &gen, &upper_pop);
        match r {
            Err(Error::Input(msg)) => assert!(msg.contains("capacity mismatch"), "{msg}"),
            Ok(MatchOutcome::Infeasible(_)) => {}
            other => panic!(
                "expected capacity mismatch or certificate, got {:?}",
                other.is_ok()
            ),
        }
    }
}
