//! Divergence graphs on horospheres of shelling patches.
//!
//! Fix a patch and a height level. The vertices of the level's *divergence
//! graph* are the cells on that horosphere whose automaton state carries
//! positive growth weight; two vertices are joined when their successor
//! sets stay within `2δ` of each other at every tested depth: for all
//! `n ≤ D`, the minimum group distance between the n-fold
//! predecessor-preimages of the two vertices is at most `2δ`. (In the
//! infinite object "bounded forever" and "within `2δ` forever" agree; the
//! finite test is faithful up to the recorded depth.)
//!
//! Truncation is handled explicitly: a vertex is *interior* when its entire
//! depth-`D` future fan lies strictly inside the ball, so nothing it needs
//! was cut off; structural assertions (connectivity above all) are made on
//! interior vertices, and the report carries the depth and any distance
//! queries that could not be resolved inside the ball.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::oracle::GroupOracle;
use crate::presentation::Presentation;
use crate::shelling::{LocalFrame, ShellingPatch};
use crate::word::{Gen, Word};

/// Resolve at most this many exact distance queries per edge test before
/// declaring the pair unresolved.
const FALLBACK_CAP: usize = 40_000;

/// The divergence graph of one horosphere, built to a finite future depth.
pub struct DivergenceGraph {
    pub level: i32,
    /// Future depth `D` used for the edge test.
    pub depth_used: usize,
    pub delta: usize,
    /// Vertex cells (μ-positive cells of the level), ascending.
    pub vertices: Vec<u32>,
    /// Parallel to `vertices`: true when the vertex's depth-`D` future fan
    /// lies strictly inside the ball (no truncation).
    pub interior: Vec<bool>,
    /// Undirected edges as (smaller cell, larger cell), sorted.
    pub edges: Vec<(u32, u32)>,
    /// Edge tests that could not be decided inside the ball (dropped
    /// conservatively; nonzero values weaken the graph's certification).
    pub unresolved: usize,
    index: HashMap<u32, u32>,
    adj: Vec<Vec<u32>>,
}

impl DivergenceGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_vertex(&self, cell: u32) -> bool {
        self.index.contains_key(&cell)
    }

    pub fn is_interior(&self, cell: u32) -> bool {
        self.index
            .get(&cell)
            .map(|&i| self.interior[i as usize])
            .unwrap_or(false)
    }

    /// Neighbors of a vertex cell (empty for non-vertices).
    pub fn neighbors(&self, cell: u32) -> &[u32] {
        match self.index.get(&cell) {
            Some(&i) => &self.adj[i as usize],
            None => &[],
        }
    }

    pub fn degree(&self, cell: u32) -> usize {
        self.neighbors(cell).len()
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.neighbors(a).contains(&b)
    }

    /// Construct a graph from externally specified parts (synthetic graphs
    /// for path-cover and matching tests, or trusted imports). Edges are
    /// symmetrized and must join listed vertices; self-loops are rejected.
    pub fn from_edges(
        level: i32,
        depth_used: usize,
        delta: usize,
        vertices: Vec<u32>,
        interior: Vec<bool>,
        edges: Vec<(u32, u32)>,
    ) -> Result<DivergenceGraph> {
        if interior.len() != vertices.len() {
            return Err(Error::Input(
                "interior flags must match the vertex list".into(),
            ));
        }
        let set: std::collections::HashSet<u32> = vertices.iter().copied().collect();
        if set.len() != vertices.len() {
            return Err(Error::Input("duplicate vertex".into()));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b {
                return Err(Error::Input(format!("self-loop at vertex {a}")));
            }
            if !set.contains(&a) || !set.contains(&b) {
                return Err(Error::Input("edge endpoint is not a vertex".into()));
            }
            norm.push((a.min(b), a.max(b)));
        }
        Ok(DivergenceGraph::from_parts(
            level, depth_used, delta, vertices, interior, norm, 0,
        ))
    }

    fn from_parts(
        level: i32,
        depth_used: usize,
        delta: usize,
        vertices: Vec<u32>,
        interior: Vec<bool>,
        mut edges: Vec<(u32, u32)>,
        unresolved: usize,
    ) -> DivergenceGraph {
        edges.sort_unstable();
        edges.dedup();
        let index: HashMap<u32, u32> = vertices
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32))
            .collect();
        let mut adj = vec![Vec::new(); vertices.len()];
        for &(a, b) in &edges {
            adj[index[&a] as usize].push(b);
            adj[index[&b] as usize].push(a);
        }
        for l in adj.iter_mut() {
            l.sort_unstable();
        }
        DivergenceGraph {
            level,
            depth_used,
            delta,
            vertices,
            interior,
            edges,
            unresolved,
            index,
            adj,
        }
    }
}

/// Per-vertex future fans `F_0 .. F_D` (in-ball n-fold successor sets) and
/// whether the fan was complete (never clipped by the ball boundary).
struct FutureFan {
    levels: Vec<Vec<u32>>,
    complete: bool,
}

pub(crate) fn successor_lists(frame: &LocalFrame, patch: &ShellingPatch) -> Vec<Vec<u32>> {
    let mut succ = vec![Vec::new(); frame.len()];
    for cell in 0..frame.len() as u32 {
        if let Some(g) = patch.dp[cell as usize] {
            if let Some(t) = frame.neighbor(cell, g) {
                succ[t as usize].push(cell);
            }
        }
    }
    succ
}

fn future_fan(frame: &LocalFrame, succ: &[Vec<u32>], v: u32, depth: usize) -> FutureFan {
    let mut levels = Vec::with_capacity(depth + 1);
    levels.push(vec![v]);
    let mut complete = true;
    for _ in 0..depth {
        let cur = levels.last().unwrap();
        let mut next = Vec::new();
        for &c in cur {
            // A cell strictly inside the ball has every group successor
            // present as an in-ball cell; at the boundary the fan is clipped.
            if frame.level(c) >= frame.radius() {
                complete = false;
            }
            next.extend_from_slice(&succ[c as usize]);
        }
        next.sort_unstable();
        next.dedup();
        levels.push(next);
    }
    FutureFan { levels, complete }
}

/// Scratch space for repeated bounded BFS over the frame.
struct BfsScratch {
    stamp: Vec<u32>,
    target: Vec<u32>,
    epoch: u32,
    frontier: Vec<u32>,
    next: Vec<u32>,
}

impl BfsScratch {
    fn new(cells: usize) -> BfsScratch {
        BfsScratch {
            stamp: vec![0; cells],
            target: vec![0; cells],
            epoch: 0,
            frontier: Vec::new(),
            next: Vec::new(),
        }
    }

    /// True if some cell of `targets` lies within `radius` frame-graph steps
    /// of `sources`. Ball paths are genuine group paths, so a hit certifies
    /// the group distance; a miss certifies nothing near the boundary.
    fn within(
        &mut self,
        frame: &LocalFrame,
        sources: &[u32],
        targets: &[u32],
        radius: usize,
    ) -> bool {
        self.epoch += 1;
        let e = self.epoch;
        for &t in targets {
            self.target[t as usize] = e;
        }
        self.frontier.clear();
        for &s in sources {
            if self.target[s as usize] == e {
                return true;
            }
            if self.stamp[s as usize] != e {
                self.stamp[s as usize] = e;
                self.frontier.push(s);
            }
        }
        for _ in 0..radius {
            self.next.clear();
            for &c in &self.frontier {
                for s in 0..frame.alphabet() as Gen {
                    if let Some(n) = frame.neighbor(c, s) {
                        if self.stamp[n as usize] != e {
                            self.stamp[n as usize] = e;
                            if self.target[n as usize] == e {
                                return true;
                            }
                            self.next.push(n);
                        }
                    }
                }
            }
            std::mem::swap(&mut self.frontier, &mut self.next);
            if self.frontier.is_empty() {
                break;
            }
        }
        false
    }
}

/// Exact fallback: is the minimum group distance between the two cell sets
/// at most `bound`? `None` when the query would exceed the fallback cap.
fn exact_within(
    oracle: &GroupOracle,
    frame: &LocalFrame,
    a: &[u32],
    b: &[u32],
    bound: usize,
) -> Result<Option<bool>> {
    if a.len() * b.len() > FALLBACK_CAP {
        return Ok(None);
    }
    for &u in a {
        for &v in b {
            if oracle.dist(frame.word(u), frame.word(v))? <= bound {
                return Ok(Some(true));
            }
        }
    }
    Ok(Some(false))
}

/// Could a bounded BFS from these sources have been blind to a short group
/// path? Only when some source sits within `radius` of the ball boundary.
fn bfs_conclusive(frame: &LocalFrame, sources: &[u32], radius: usize) -> bool {
    sources
        .iter()
        .all(|&c| frame.level(c) + radius <= frame.radius())
}

/// Build the divergence graph of one horosphere.
///
/// `positive_mask[state]` says whether the state carries positive growth
/// weight; the graph's vertices are the level's cells with positive states.
/// An edge is placed between vertices at group distance ≤ `2δ` whose future
/// fans stay within `2δ` at every depth `n ≤ depth`. Minimum-distance tests
/// run as bounded BFS inside the ball (hits are exact certificates) with an
/// exact-distance fallback where the ball boundary could hide a short path;
/// tests that exceed the fallback budget drop the edge and are counted in
/// `unresolved`.
pub fn build_divergence_graph(
    oracle: &GroupOracle,
    frame: &LocalFrame,
    patch: &ShellingPatch,
    positive_mask: &[bool],
    level: i32,
    depth: usize,
    delta: usize,
) -> Result<DivergenceGraph> {
    if patch.h.len() != frame.len() {
        return Err(Error::Input(
            "patch does not belong to this frame".into(),
        ));
    }
    let max_h = *patch.h.iter().max().unwrap();
    let min_h = *patch.h.iter().min().unwrap();
    if level < min_h || level as i64 + depth as i64 > max_h as i64 {
        return Err(Error::Config(format!(
            "levels {level}..{} not present in the patch (heights {min_h}..{max_h})",
            level as i64 + depth as i64
        )));
    }
    let vertices: Vec<u32> = (0..frame.len() as u32)
        .filter(|&c| {
            patch.h[c as usize] == level
                && *positive_mask
                    .get(patch.state[c as usize] as usize)
                    .unwrap_or(&false)
        })
        .collect();
    let succ = successor_lists(frame, patch);
    let fans: Vec<FutureFan> = vertices
        .par_iter()
        .map(|&v| future_fan(frame, &succ, v, depth))
        .collect();
    let interior: Vec<bool> = fans.iter().map(|f| f.complete).collect();

    // Candidate pairs: same-level vertex pairs at exact group distance ≤ 2δ.
    let reach = 2 * delta;
    let candidates: Vec<(u32, u32)> = (0..vertices.len())
        .into_par_iter()
        .map(|i| -> Result<Vec<(u32, u32)>> {
            let mut out = Vec::new();
            for j in (i + 1)..vertices.len() {
                let (a, b) = (vertices[i], vertices[j]);
                if oracle.dist(frame.word(a), frame.word(b))? <= reach {
                    out.push((i as u32, j as u32));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    // Edge test per candidate: all depths must stay within 2δ.
    let results: Vec<Result<(bool, bool)>> = candidates
        .par_chunks(64.max(candidates.len() / (8 * rayon::current_num_threads()).max(1)))
        .map_init(
            || BfsScratch::new(frame.len()),
            |scratch, chunk| {
                chunk
                    .iter()
                    .map(|&(i, j)| {
                        let (fi, fj) = (&fans[i as usize], &fans[j as usize]);
                        for n in 1..=depth {
                            let (sa, sb) = (&fi.levels[n], &fj.levels[n]);
                            if sa.is_empty() || sb.is_empty() {
                                // Clipped future: cannot witness the bound.
                                return Ok((false, false));
                            }
                            if scratch.within(frame, sa, sb, reach) {
                                continue;
                            }
                            if bfs_conclusive(frame, sa, reach) {
                                return Ok((false, false));
                            }
                            match exact_within(oracle, frame, sa, sb, reach)? {
                                Some(true) => continue,
                                Some(false) => return Ok((false, false)),
                                None => return Ok((false, true)),
                            }
                        }
                        Ok((true, false))
                    })
                    .collect::<Vec<Result<(bool, bool)>>>()
            },
        )
        .flatten()
        .collect();

    let mut edges = Vec::new();
    let mut unresolved = 0usize;
    for (k, r) in results.into_iter().enumerate() {
        let (is_edge, was_unresolved) = r?;
        if is_edge {
            let (i, j) = candidates[k];
            edges.push((vertices[i as usize], vertices[j as usize]));
        }
        if was_unresolved {
            unresolved += 1;
        }
    }
    Ok(DivergenceGraph::from_parts(
        level, depth, delta, vertices, interior, edges, unresolved,
    ))
}

// ---------------------------------------------------------------------------
// Property checking.
// ---------------------------------------------------------------------------

/// Results of [`check_divergence_properties`], with truncation caveats.
#[derive(Clone, Debug)]
pub struct DivergenceReport {
    pub level: i32,
    pub depth_used: usize,
    pub delta: usize,
    pub vertex_count: usize,
    pub interior_count: usize,
    pub edge_count: usize,
    /// Longest edge in the group metric; must be ≤ 2δ.
    pub max_edge_length: usize,
    pub edges_within_2delta: bool,
    /// Largest vertex degree and the bound #B(2δ) it must respect.
    pub max_degree: usize,
    pub degree_bound: usize,
    pub degrees_bounded: bool,
    /// Worst distance from a level cell to the vertex set, and whether every
    /// level cell has a vertex within 4δ (distances found by in-ball BFS).
    pub max_vertex_gap: Option<usize>,
    pub four_delta_dense: bool,
    /// Connected components of the subgraph induced on interior vertices.
    pub interior_components: usize,
    pub interior_connected: bool,
    /// Components of interior vertices when boundary vertices may be used
    /// as through-points (truncation-tolerant reading).
    pub interior_components_via_all: usize,
    /// Predecessor compatibility against the previous level's graph:
    /// for each edge, P(v) and P(w) coincide or form an edge there.
    pub predecessor_checked: Option<usize>,
    pub predecessor_failures: usize,
    /// Successor-edge property against the next level's graph: each edge
    /// has at least one edge among its successor pairs there. Edges whose
    /// successor pairs were all truncated in the next graph are skipped.
    pub successor_checked: Option<usize>,
    pub successor_failures: usize,
    pub successor_skipped: usize,
    pub unresolved: usize,
    pub caveats: Vec<String>,
}

impl DivergenceReport {
    /// True when every checked structural property held.
    pub fn all_hold(&self) -> bool {
        self.edges_within_2delta
            && self.degrees_bounded
            && self.four_delta_dense
            && self.interior_connected
            && self.predecessor_failures == 0
            && self.successor_failures == 0
    }
}

/// Verify the structural properties of a divergence graph: edge lengths
/// ≤ 2δ, degrees ≤ #B(2δ), 4δ-density of the vertex set in the horosphere,
/// connectivity of the interior vertex set, and — when the neighboring
/// levels' graphs are supplied — predecessor compatibility (downward) and
/// existence of successor edges (upward).
pub fn check_divergence_properties(
    oracle: &GroupOracle,
    frame: &LocalFrame,
    patch: &ShellingPatch,
    graph: &DivergenceGraph,
    prev: Option<&DivergenceGraph>,
    next: Option<&DivergenceGraph>,
    ball_2delta: usize,
) -> Result<DivergenceReport> {
    let delta = graph.delta;
    let mut caveats = Vec::new();

    let mut max_edge_length = 0usize;
    for &(a, b) in &graph.edges {
        max_edge_length = max_edge_length.max(oracle.dist(frame.word(a), frame.word(b))?);
    }
    let edges_within_2delta = max_edge_length <= 2 * delta;

    let max_degree = graph
        .vertices
        .iter()
        .map(|&v| graph.degree(v))
        .max()
        .unwrap_or(0);
    let degrees_bounded = max_degree <= ball_2delta;

    // 4δ-density: BFS out from the vertex set and record when each level
    // cell is first reached.
    let level_cells: Vec<u32> = (0..frame.len() as u32)
        .filter(|&c| patch.h[c as usize] == graph.level)
        .collect();
    let mut max_vertex_gap = None;
    let mut four_delta_dense = true;
    if !level_cells.is_empty() {
        if graph.vertices.is_empty() {
            four_delta_dense = false;
            caveats.push("level has cells but no μ-positive vertices".into());
        } else {
            let mut dist = vec![usize::MAX; frame.len()];
            let mut frontier: Vec<u32> = graph.vertices.clone();
            for &v in &frontier {
                dist[v as usize] = 0;
            }
            let mut d = 0usize;
            while !frontier.is_empty() && d < 4 * delta {
                d += 1;
                let mut next_frontier = Vec::new();
                for &c in &frontier {
                    for s in 0..frame.alphabet() as Gen {
                        if let Some(n) = frame.neighbor(c, s) {
                            if dist[n as usize] == usize::MAX {
                                dist[n as usize] = d;
                                next_frontier.push(n);
                            }
                        }
                    }
                }
                frontier = next_frontier;
            }
            let mut worst = 0usize;
            for &c in &level_cells {
                match dist[c as usize] {
                    usize::MAX => {
                        four_delta_dense = false;
                        caveats.push(format!(
                            "cell {c} has no vertex within 4δ (in-ball search)"
                        ));
                        break;
                    }
                    d => worst = worst.max(d),
                }
            }
            max_vertex_gap = Some(worst);
            if worst > 4 * delta {
                four_delta_dense = false;
            }
        }
    }

    // Connectivity on interior vertices: (a) induced subgraph, (b) allowing
    // boundary vertices as through-points.
    let interior_count = graph.interior.iter().filter(|&&b| b).count();
    let (interior_components, interior_components_via_all) = {
        let components = |use_boundary: bool| -> usize {
            let n = graph.vertices.len();
            let mut uf: Vec<u32> = (0..n as u32).collect();
            fn find(uf: &mut [u32], mut x: u32) -> u32 {
                while uf[x as usize] != x {
                    uf[x as usize] = uf[uf[x as usize] as usize];
                    x = uf[x as usize];
                }
                x
            }
            for &(a, b) in &graph.edges {
                let (ia, ib) = (graph.index[&a], graph.index[&b]);
                let ok = use_boundary
                    || (graph.interior[ia as usize] && graph.interior[ib as usize]);
                if ok {
                    let (ra, rb) = (find(&mut uf, ia), find(&mut uf, ib));
                    uf[ra as usize] = rb;
                }
            }
            let mut roots: Vec<u32> = (0..n as u32)
                .filter(|&i| graph.interior[i as usize])
                .map(|i| find(&mut uf, i))
                .collect();
            roots.sort_unstable();
            roots.dedup();
            roots.len()
        };
        (components(false), components(true))
    };
    let interior_connected = interior_components <= 1;
    if interior_count == 0 {
        caveats.push("no interior vertices at this depth: deepen the patch".into());
    }
    if graph.unresolved > 0 {
        caveats.push(format!(
            "{} edge tests exceeded the in-ball budget and were dropped",
            graph.unresolved
        ));
    }
    caveats.push(format!(
        "edge test ran to finite depth {}; the defining condition quantifies over all depths",
        graph.depth_used
    ));

    // Predecessor compatibility against the level-below graph.
    let (predecessor_checked, predecessor_failures) = match prev {
        None => (None, 0),
        Some(pg) => {
            if pg.level != graph.level - 1 {
                return Err(Error::Config(format!(
                    "previous graph is at level {}, expected {}",
                    pg.level,
                    graph.level - 1
                )));
            }
            let mut checked = 0usize;
            let mut failures = 0usize;
            for &(a, b) in &graph.edges {
                let pa = patch.dp[a as usize].and_then(|g| frame.neighbor(a, g));
                let pb = patch.dp[b as usize].and_then(|g| frame.neighbor(b, g));
                if let (Some(pa), Some(pb)) = (pa, pb) {
                    checked += 1;
                    if pa != pb && !pg.has_edge(pa, pb) {
                        failures += 1;
                    }
                }
            }
            (Some(checked), failures)
        }
    };

    // Successor-edge existence against the level-above graph. An edge at
    // this level guarantees closeness of its successor fans only one depth
    // shorter, and the next graph's own edge tests are conclusive only at
    // its interior vertices, so absence of a successor edge counts as a
    // failure only when every successor pair was tested untruncated there.
    let (successor_checked, successor_failures, successor_skipped) = match next {
        None => (None, 0, 0),
        Some(ng) => {
            if ng.level != graph.level + 1 {
                return Err(Error::Config(format!(
                    "next graph is at level {}, expected {}",
                    ng.level,
                    graph.level + 1
                )));
            }
            let succ = successor_lists(frame, patch);
            let mut checked = 0usize;
            let mut failures = 0usize;
            let mut skipped = 0usize;
            for &(a, b) in &graph.edges {
                // Need both endpoints strictly inside the ball so the
                // successor lists themselves are complete.
                if frame.level(a) >= frame.radius() || frame.level(b) >= frame.radius() {
                    skipped += 1;
                    continue;
                }
                checked += 1;
                // Coinciding successors are impossible (P is a function),
                // so the clause reduces to a successor edge existing.
                let found = succ[a as usize].iter().any(|&u| {
                    ng.is_vertex(u)
                        && succ[b as usize]
                            .iter()
                            .any(|&w| u == w || ng.has_edge(u, w))
                });
                if found {
                    continue;
                }
                let conclusive = succ[a as usize]
                    .iter()
                    .filter(|&&u| ng.is_vertex(u))
                    .all(|&u| ng.is_interior(u))
                    && succ[b as usize]
                        .iter()
                        .filter(|&&w| ng.is_vertex(w))
                        .all(|&w| ng.is_interior(w));
                if conclusive {
                    failures += 1;
                } else {
                    checked -= 1;
                    skipped += 1;
                }
            }
            (Some(checked), failures, skipped)
        }
    };

    Ok(DivergenceReport {
        level: graph.level,
        depth_used: graph.depth_used,
        delta,
        vertex_count: graph.vertex_count(),
        interior_count,
        edge_count: graph.edge_count(),
        max_edge_length,
        edges_within_2delta,
        max_degree,
        degree_bound: ball_2delta,
        degrees_bounded,
        max_vertex_gap,
        four_delta_dense,
        interior_components,
        interior_connected,
        interior_components_via_all,
        predecessor_checked,
        predecessor_failures,
        successor_checked,
        successor_failures,
        successor_skipped,
        unresolved: graph.unresolved,
        caveats,
    })
}

/// Compare a level's graphs at two depths: how many of the shallow graph's
/// edges survive the deeper test. The finite-depth edge test only
/// approximates the quantification over all depths, so stability across
/// adjacent depths is the honest signal that the shallow depth sufficed.
pub fn edge_stability(
    shallow: &DivergenceGraph,
    deep: &DivergenceGraph,
) -> Result<(usize, usize)> {
    if shallow.level != deep.level {
        return Err(Error::Config(format!(
            "graphs are at different levels ({} vs {})",
            shallow.level, deep.level
        )));
    }
    if shallow.depth_used >= deep.depth_used {
        return Err(Error::Config(
            "stability comparison needs a strictly deeper second graph".into(),
        ));
    }
    let surviving = shallow
        .edges
        .iter()
        .filter(|&&(a, b)| deep.has_edge(a, b))
        .count();
    Ok((shallow.edge_count(), surviving))
}

/// Human-readable report.
pub fn render_divergence_report(r: &DivergenceReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "divergence graph at level {} (depth {}, δ = {}):",
        r.level, r.depth_used, r.delta
    );
    let _ = writeln!(
        s,
        "  {} vertices ({} interior), {} edges",
        r.vertex_count, r.interior_count, r.edge_count
    );
    let _ = writeln!(
        s,
        "  max edge length {} vs 2δ = {} → {}",
        r.max_edge_length,
        2 * r.delta,
        if r.edges_within_2delta { "ok" } else { "VIOLATED" }
    );
    let _ = writeln!(
        s,
        "  max degree {} vs #B(2δ) = {} → {}",
        r.max_degree,
        r.degree_bound,
        if r.degrees_bounded { "ok" } else { "VIOLATED" }
    );
    let _ = writeln!(
        s,
        "  vertex set 4δ-dense in level: {} (worst gap {:?})",
        if r.four_delta_dense { "yes" } else { "NO" },
        r.max_vertex_gap
    );
    let _ = writeln!(
        s,
        "  interior components: {} (via boundary: {}) → {}",
        r.interior_components,
        r.interior_components_via_all,
        if r.interior_connected { "connected" } else { "DISCONNECTED" }
    );
    if let Some(n) = r.predecessor_checked {
        let _ = writeln!(
            s,
            "  predecessor compatibility: {}/{} edges ok",
            n - r.predecessor_failures,
            n
        );
    }
    if let Some(n) = r.successor_checked {
        let _ = writeln!(
            s,
            "  successor edges: {}/{} edges ok ({} skipped as truncated)",
            n - r.successor_failures,
            n,
            r.successor_skipped
        );
    }
    for c in &r.caveats {
        let _ = writeln!(s, "  caveat: {c}");
    }
    s
}

// ---------------------------------------------------------------------------
// Text formats.
// ---------------------------------------------------------------------------

fn cell_word(pres: &Presentation, frame: &LocalFrame, cell: u32) -> String {
    let w = frame.word(cell);
    if w.is_empty() {
        "1".to_string()
    } else {
        pres.format_word(w)
    }
}

fn word_cell(pres: &Presentation, frame: &LocalFrame, s: &str) -> Result<u32> {
    let w = if s == "1" {
        Word::empty()
    } else {
        pres.parse_word(s)?
    };
    frame
        .cell(&w)
        .ok_or_else(|| Error::Input(format!("word `{s}` is not a cell of the frame")))
}

/// Serialize a divergence graph as an adjacency-list text format keyed by
/// cell words.
pub fn serialize_graph(
    pres: &Presentation,
    frame: &LocalFrame,
    graph: &DivergenceGraph,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "divergence-graph");
    let _ = writeln!(out, "presentation: {:016x}", pres.fingerprint());
    let _ = writeln!(out, "level: {}", graph.level);
    let _ = writeln!(out, "depth: {}", graph.depth_used);
    let _ = writeln!(out, "delta: {}", graph.delta);
    let _ = writeln!(out, "unresolved: {}", graph.unresolved);
    for (i, &v) in graph.vertices.iter().enumerate() {
        let _ = writeln!(
            out,
            "vertex: {} interior={}",
            cell_word(pres, frame, v),
            if graph.interior[i] { 1 } else { 0 }
        );
    }
    for &(a, b) in &graph.edges {
        let _ = writeln!(
            out,
            "edge: {} {}",
            cell_word(pres, frame, a),
            cell_word(pres, frame, b)
        );
    }
    out
}

/// Parse a serialized divergence graph against its frame. The level of the
/// vertices is not re-derived from a patch; the file is trusted to the
/// extent its words resolve to frame cells.
pub fn parse_graph(
    pres: &Presentation,
    frame: &LocalFrame,
    text: &str,
) -> Result<DivergenceGraph> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next() != Some("divergence-graph") {
        return Err(Error::Input("missing `divergence-graph` header".into()));
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
    let fp = header("presentation")?;
    if fp != format!("{:016x}", pres.fingerprint()) {
        return Err(Error::Input(
            "graph file was written for a different presentation".into(),
        ));
    }
    let level: i32 = header("level")?
        .parse()
        .map_err(|_| Error::Input("bad level".into()))?;
    let depth: usize = header("depth")?
        .parse()
        .map_err(|_| Error::Input("bad depth".into()))?;
    let delta: usize = header("delta")?
        .parse()
        .map_err(|_| Error::Input("bad delta".into()))?;
    let unresolved: usize = header("unresolved")?
        .parse()
        .map_err(|_| Error::Input("bad unresolved count".into()))?;
    let mut vertices = Vec::new();
    let mut interior = Vec::new();
    let mut edges = Vec::new();
    for line in lines {
        if let Some(rest) = line.strip_prefix("vertex:") {
            let mut parts = rest.split_whitespace();
            let w = parts
                .next()
                .ok_or_else(|| Error::Input("empty vertex line".into()))?;
            let flag = parts
                .next()
                .and_then(|f| f.strip_prefix("interior="))
                .ok_or_else(|| Error::Input("vertex line missing interior flag".into()))?;
            vertices.push(word_cell(pres, frame, w)?);
            interior.push(flag == "1");
        } else if let Some(rest) = line.strip_prefix("edge:") {
            let mut parts = rest.split_whitespace();
            let a = parts
                .next()
                .ok_or_else(|| Error::Input("edge line missing endpoint".into()))?;
            let b = parts
                .next()
                .ok_or_else(|| Error::Input("edge line missing endpoint".into()))?;
            let (ca, cb) = (word_cell(pres, frame, a)?, word_cell(pres, frame, b)?);
            edges.push((ca.min(cb), ca.max(cb)));
        } else {
            return Err(Error::Input(format!("unrecognized line `{line}`")));
        }
    }
    let vertex_set: std::collections::HashSet<u32> = vertices.iter().copied().collect();
    for &(a, b) in &edges {
        if !vertex_set.contains(&a) || !vertex_set.contains(&b) {
            return Err(Error::Input("edge endpoint is not a vertex".into()));
        }
    }
    Ok(DivergenceGraph::from_parts(
        level, depth, delta, vertices, interior, edges, unresolved,
    ))
}

/// Emit the graph in dot format for offline visualization. Interior
/// vertices are filled; boundary vertices are drawn hollow.
pub fn graph_to_dot(pres: &Presentation, frame: &LocalFrame, graph: &DivergenceGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "graph divergence_level_{} {{", graph.level);
    for (i, &v) in graph.vertices.iter().enumerate() {
        let style = if graph.interior[i] {
            "style=filled"
        } else {
            "style=dashed"
        };
        let _ = writeln!(out, "  \"{}\" [{style}];", cell_word(pres, frame, v));
    }
    for &(a, b) in &graph.edges {
        let _ = writeln!(
            out,
            "  \"{}\" -- \"{}\";",
            cell_word(pres, frame, a),
            cell_word(pres, frame, b)
        );
    }
    let _ = writeln!(out, "}}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsa::build_shortlex_fsa;
    use crate::shelling::generate_shelling_patch;

    const BUDGET: usize = 50_000_000;

    fn group(genus2: bool) -> (GroupOracle, crate::fsa::ShortlexFsa) {
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

    fn all_positive(fsa: &crate::fsa::ShortlexFsa) -> Vec<bool> {
        vec![true; fsa.num_states()]
    }

    #[test]
    fn free_group_futures_diverge() {
        // Run F₂ with an artificial δ = 1 so the edge test is not vacuous:
        // distinct tree vertices at distance 2 exist, but their future fans
        // separate immediately, so no edges survive depth 2.
        let (oracle, fsa) = group(false);
        let frame = LocalFrame::build(&oracle, 4, BUDGET).unwrap();
        let bp = fsa.enumerate_level(5, BUDGET).unwrap()[3].clone();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        let g = build_divergence_graph(
            &oracle,
            &frame,
            &patch,
            &all_positive(&fsa),
            0,
            2,
            1,
        )
        .unwrap();
        assert!(g.vertex_count() > 2);
        assert_eq!(g.edge_count(), 0, "tree futures must diverge");
        let report = check_divergence_properties(
            &oracle, &frame, &patch, &g, None, None, 17,
        )
        .unwrap();
        assert!(!report.interior_connected || report.interior_count <= 1);
    }

    #[test]
    fn self_pairs_excluded_and_vertices_mu_positive() {
        let (oracle, fsa) = group(false);
        let frame = LocalFrame::build(&oracle, 3, BUDGET).unwrap();
        let bp = fsa.enumerate_level(4, BUDGET).unwrap()[0].clone();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        // Mark only two states positive; vertices must shrink accordingly.
        let mut mask = vec![false; fsa.num_states()];
        let some_state = patch.state[10] as usize;
        mask[some_state] = true;
        let g =
            build_divergence_graph(&oracle, &frame, &patch, &mask, 0, 1, 0).unwrap();
        assert!(g
            .vertices
            .iter()
            .all(|&v| patch.state[v as usize] as usize == some_state));
        for &(a, b) in &g.edges {
            assert_ne!(a, b);
        }
    }

    #[test]
    fn depth_monotonicity_removes_edges() {
        let (oracle, fsa) = group(true);
        let frame = LocalFrame::build(&oracle, 4, BUDGET).unwrap();
        let bp = fsa.enumerate_level(5, BUDGET).unwrap()[11].clone();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        let mask = all_positive(&fsa);
        let shallow =
            build_divergence_graph(&oracle, &frame, &patch, &mask, -1, 2, 2).unwrap();
        let deep =
            build_divergence_graph(&oracle, &frame, &patch, &mask, -1, 3, 2).unwrap();
        let shallow_set: std::collections::HashSet<(u32, u32)> =
            shallow.edges.iter().copied().collect();
        for e in &deep.edges {
            assert!(shallow_set.contains(e), "deeper test added edge {e:?}");
        }
        assert_eq!(shallow.vertices, deep.vertices);
    }

    #[test]
    fn missing_levels_is_config_error() {
        let (oracle, fsa) = group(false);
        let frame = LocalFrame::build(&oracle, 3, BUDGET).unwrap();
        let bp = fsa.enumerate_level(4, BUDGET).unwrap()[0].clone();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        assert!(matches!(
            build_divergence_graph(
                &oracle,
                &frame,
                &patch,
                &all_positive(&fsa),
                2,
                4,
                0
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn graph_round_trip_and_dot() {
        let (oracle, fsa) = group(true);
        let pres = oracle.presentation().clone();
        let frame = LocalFrame::build(&oracle, 4, BUDGET).unwrap();
        let bp = fsa.enumerate_level(5, BUDGET).unwrap()[2].clone();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        let g = build_divergence_graph(
            &oracle,
            &frame,
            &patch,
            &all_positive(&fsa),
            0,
            2,
            2,
        )
        .unwrap();
        let text = serialize_graph(&pres, &frame, &g);
        let parsed = parse_graph(&pres, &frame, &text).unwrap();
        assert_eq!(parsed.level, g.level);
        assert_eq!(parsed.vertices, g.vertices);
        assert_eq!(parsed.edges, g.edges);
        assert_eq!(parsed.interior, g.interior);
        let dot = graph_to_dot(&pres, &frame, &g);
        assert!(dot.starts_with("graph divergence_level_0 {"));
        assert!(dot.contains("--") || g.edge_count() == 0);
    }

    #[test]
    fn genus2_horosphere_graph_properties() {
        let (oracle, fsa) = group(true);
        let frame = LocalFrame::build(&oracle, 4, BUDGET).unwrap();
        let bp = fsa.enumerate_level(5, BUDGET).unwrap()[0].clone();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        let mask = all_positive(&fsa);
        let g = build_divergence_graph(&oracle, &frame, &patch, &mask, 0, 2, 2).unwrap();
        // Horocycle section through the basepoint level of a radius-4 ball.
        assert_eq!(g.vertex_count(), 49);
        assert!(g.edge_count() > 0, "interleaving futures should create edges");
        assert_eq!(g.unresolved, 0);
        let prev = build_divergence_graph(&oracle, &frame, &patch, &mask, -1, 2, 2).unwrap();
        let next = build_divergence_graph(&oracle, &frame, &patch, &mask, 1, 2, 2).unwrap();
        let report = check_divergence_properties(
            &oracle,
            &frame,
            &patch,
            &g,
            Some(&prev),
            Some(&next),
            3193,
        )
        .unwrap();
        assert!(report.edges_within_2delta);
        assert!(report.degrees_bounded);
        assert!(report.four_delta_dense);
        assert!(report.interior_connected, "{report:?}");
        assert!(report.interior_count > 1);
        assert_eq!(report.predecessor_failures, 0, "{report:?}");
        assert_eq!(report.successor_failures, 0, "{report:?}");
        // A horocycle's divergence graph is a line: degrees stay ≤ 2.
        assert!(report.max_degree <= 2);
    }

    #[test]
    fn edge_stability_across_depths() {
        let (oracle, fsa) = group(true);
        let frame = LocalFrame::build(&oracle, 4, BUDGET).unwrap();
        let bp = fsa.enumerate_level(5, BUDGET).unwrap()[0].clone();
        let patch = generate_shelling_patch(&oracle, &fsa, &frame, &bp).unwrap();
        let mask = all_positive(&fsa);
        let d1 = build_divergence_graph(&oracle, &frame, &patch, &mask, -1, 1, 2).unwrap();
        let d2 = build_divergence_graph(&oracle, &frame, &patch, &mask, -1, 2, 2).unwrap();
        let (total, surviving) = edge_stability(&d1, &d2).unwrap();
        assert_eq!(total, d1.edge_count());
        assert!(surviving <= total);
        assert_eq!(surviving, d2.edge_count());
        assert!(edge_stability(&d2, &d1).is_err());
        let other = build_divergence_graph(&oracle, &frame, &patch, &mask, 0, 2, 2).unwrap();
        assert!(edge_stability(&d1, &other).is_err());
    }
}
