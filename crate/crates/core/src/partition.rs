//! Splits coupling edges into sequential and parallel sets under a limit on
//! computation levels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::coupling::CouplingGraph;
use crate::error::{Error, Result};

/// Largest edge count `partition_exact` accepts.
pub const EXACT_EDGE_LIMIT: usize = 24;

/// Maximum number of computation levels per group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LevelLimit {
    Finite(usize),
    Unbounded,
}

impl LevelLimit {
    pub fn new(value: usize) -> Result<Self> {
        if value == 0 {
            return Err(Error::Config("level limit must be at least 1".into()));
        }
        Ok(LevelLimit::Finite(value))
    }

    pub fn allows(&self, levels: usize) -> bool {
        match self {
            LevelLimit::Finite(l) => levels <= *l,
            LevelLimit::Unbounded => true,
        }
    }
}

impl fmt::Display for LevelLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelLimit::Finite(l) => write!(f, "{l}"),
            LevelLimit::Unbounded => write!(f, "inf"),
        }
    }
}

impl FromStr for LevelLimit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "unbounded" => Ok(LevelLimit::Unbounded),
            v => {
                let n: usize = v
                    .parse()
                    .map_err(|_| Error::Config(format!("level limit {v:?} is neither an integer nor \"inf\"")))?;
                LevelLimit::new(n)
            }
        }
    }
}

impl Serialize for LevelLimit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LevelLimit::Finite(l) => s.serialize_u64(*l as u64),
            LevelLimit::Unbounded => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for LevelLimit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Int(n) => LevelLimit::new(n),
            Raw::Text(t) => t.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Levels of the sequential subgraph: weakly connected groups, their level
/// counts and each vehicle's level (1-based).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Levels {
    pub groups: Vec<Vec<usize>>,
    pub levels_per_group: Vec<usize>,
    pub level_of: Vec<usize>,
}

impl Levels {
    pub fn max_levels(&self) -> usize {
        self.levels_per_group.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Indices into the graph's edge list, ascending.
    pub sequential_edges: Vec<usize>,
    pub parallel_edges: Vec<usize>,
    #[serde(flatten)]
    pub levels: Levels,
}

impl Partition {
    pub fn cut_weight(&self, g: &CouplingGraph) -> f64 {
        self.parallel_edges.iter().fold(0.0, |acc, &i| acc + g.edges[i].weight)
    }

    pub fn is_sequential(&self, edge: usize) -> bool {
        self.sequential_edges.binary_search(&edge).is_ok()
    }
}

/// Longest-path levels over `edges` on `n` vertices; fails on a cycle.
pub fn compute_levels(n: usize, edges: &[(usize, usize)]) -> Result<Levels> {
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for &(a, b) in edges {
        succ[a].push(b);
        indeg[b] += 1;
    }
    let mut level_of = vec![1usize; n];
    let mut stack: Vec<usize> = (0..n).rev().filter(|&v| indeg[v] == 0).collect();
    let mut visited = 0;
    while let Some(v) = stack.pop() {
        visited += 1;
        for &w in &succ[v] {
            level_of[w] = level_of[w].max(level_of[v] + 1);
            indeg[w] -= 1;
            if indeg[w] == 0 {
                stack.push(w);
            }
        }
    }
    if visited != n {
        return Err(Error::Cyclic);
    }

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], v: usize) -> usize {
        let mut r = v;
        while parent[r] != r {
            r = parent[r];
        }
        let mut v = v;
        while parent[v] != r {
            let next = parent[v];
            parent[v] = r;
            v = next;
        }
        r
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut group_of_root = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        if group_of_root[r] == usize::MAX {
            group_of_root[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[group_of_root[r]].push(v);
    }
    let levels_per_group = groups
        .iter()
        .map(|g| g.iter().map(|&v| level_of[v]).max().unwrap_or(1))
        .collect();
    Ok(Levels {
        groups,
        levels_per_group,
        level_of,
    })
}

fn assemble(g: &CouplingGraph, sequential: Vec<bool>) -> Result<Partition> {
    let pairs: Vec<(usize, usize)> = g
        .edges
        .iter()
        .zip(&sequential)
        .filter(|(_, s)| **s)
        .map(|(e, _)| (e.from, e.to))
        .collect();
    let levels = compute_levels(g.n_vehicles, &pairs)?;
    let (seq, par): (Vec<usize>, Vec<usize>) = (0..g.edges.len()).partition(|&i| sequential[i]);
    Ok(Partition {
        sequential_edges: seq,
        parallel_edges: par,
        levels,
    })
}

fn greedy_order(g: &CouplingGraph) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.edges.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&g.edges[a], &g.edges[b]);
        eb.weight
            .total_cmp(&ea.weight)
            .then((ea.from, ea.to).cmp(&(eb.from, eb.to)))
    });
    order
}

/// One greedy pass: edges in descending weight (ties by (from, to)) become
/// sequential whenever the level count of the merged group stays within
/// `limit`.
pub fn partition_greedy_single_pass(g: &CouplingGraph, limit: LevelLimit) -> Result<Partition> {
    compute_levels(g.n_vehicles, &g.edge_pairs())?;
    let mut sequential = vec![false; g.edges.len()];
    let mut pairs = Vec::with_capacity(g.edges.len());
    for i in greedy_order(g) {
        let e = &g.edges[i];
        pairs.push((e.from, e.to));
        let ok = limit.allows(compute_levels(g.n_vehicles, &pairs)?.max_levels());
        if ok {
            sequential[i] = true;
        } else {
            pairs.pop();
        }
    }
    assemble(g, sequential)
}

/// Greedy partition. A single pass is not monotone in the limit (a larger
/// limit can admit an early heavy edge that blocks several later ones), so
/// the pass is run for every limit up to `limit` and the smallest cut wins
/// (first one on ties). Raising the limit therefore never raises the cut.
pub fn partition_greedy(g: &CouplingGraph, limit: LevelLimit) -> Result<Partition> {
    let top = match limit {
        LevelLimit::Finite(l) => l.min(g.n_vehicles.max(1)),
        LevelLimit::Unbounded => g.n_vehicles.max(1),
    };
    let mut best: Option<(f64, Partition)> = None;
    for l in 1..=top {
        let p = partition_greedy_single_pass(g, LevelLimit::Finite(l))?;
        let cut = p.cut_weight(g);
        if best.as_ref().is_none_or(|(b, _)| cut < *b) {
            best = Some((cut, p));
        }
    }
    match best {
        Some((_, p)) => Ok(p),
        None => assemble(g, vec![false; g.edges.len()]),
    }
}

/// Minimum-cut partition by enumerating every sequential edge subset; ties go
/// to the lexicographically smallest sequential index list.
pub fn partition_exact(g: &CouplingGraph, limit: LevelLimit) -> Result<Partition> {
    let m = g.edges.len();
    if m > EXACT_EDGE_LIMIT {
        return Err(Error::TooManyEdges(m, EXACT_EDGE_LIMIT));
    }
    compute_levels(g.n_vehicles, &g.edge_pairs())?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1u32 << m) {
        let seq: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let pairs: Vec<(usize, usize)> = seq.iter().map(|&i| (g.edges[i].from, g.edges[i].to)).collect();
        if !limit.allows(compute_levels(g.n_vehicles, &pairs)?.max_levels()) {
            continue;
        }
        let cut: f64 = (0..m)
            .filter(|&i| mask & (1 << i) == 0)
            .map(|i| g.edges[i].weight)
            .sum();
        let better = match &best {
            None => true,
            Some((b, bseq)) => cut < *b || (cut == *b && seq < *bseq),
        };
        if better {
            best = Some((cut, seq));
        }
    }
    let (_, seq) = best.expect("the empty sequential set is always feasible");
    let mut sequential = vec![false; m];
    for i in seq {
        sequential[i] = true;
    }
    assemble(g, sequential)
}
