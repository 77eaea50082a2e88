//! Coupling graph: which vehicles can interact within the horizon, who yields
//! to whom, and how urgent each interaction is.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{union_intersects, PolyUnion};
use crate::mpa::{reachable_sets, MpaState, ReachTable};
use crate::vehicle::Pose;

/// Unordered vehicle pair `a < b` whose reachable sets first meet at step
/// `earliest_step`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coupling {
    pub a: usize,
    pub b: usize,
    pub earliest_step: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
    pub earliest_step: usize,
}

/// Directed coupling graph; edges point from higher to lower priority.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingGraph {
    pub n_vehicles: usize,
    pub edges: Vec<Edge>,
}

impl CouplingGraph {
    /// Edge indices entering `v`.
    pub fn in_edges(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.to == v)
            .map(|(i, _)| i)
    }

    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.from, e.to)).collect()
    }
}

/// Ranks are 1-based; rank 1 is the highest priority.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityAssignment {
    pub rank: Vec<usize>,
}

impl PriorityAssignment {
    pub fn from_order(order: &[usize]) -> Self {
        let mut rank = vec![0; order.len()];
        for (pos, &v) in order.iter().enumerate() {
            rank[v] = pos + 1;
        }
        Self { rank }
    }

    /// Vehicles from highest to lowest priority.
    pub fn order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.rank.len()).collect();
        order.sort_by_key(|&v| self.rank[v]);
        order
    }

    pub fn is_permutation(&self) -> bool {
        let set: BTreeSet<usize> = self.rank.iter().copied().collect();
        set.len() == self.rank.len() && set.iter().all(|&r| r >= 1 && r <= self.rank.len())
    }
}

/// How vehicles are ranked from their couplings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorityRule {
    /// Ascending (earliest coupling step, id).
    EarliestCoupling,
    /// Within each coupled pair, the vehicle that needs more steps to reach
    /// the area the other occupies in the first step goes first. This lets a
    /// leader keep priority over the vehicle following it. Pairwise
    /// decisions are merged into a total order by a topological sort that
    /// breaks ties and cycles by (earliest coupling step, id).
    #[default]
    ReachOrder,
}

/// Pairs whose reachable sets intersect at some common step.
pub fn couplings_from_sets(sets: &[Vec<PolyUnion>]) -> Vec<Coupling> {
    let n = sets.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let first = sets[a]
                .iter()
                .zip(&sets[b])
                .position(|(ra, rb)| union_intersects(ra, rb));
            if let Some(h) = first {
                out.push(Coupling { a, b, earliest_step: h });
            }
        }
    }
    out
}

pub fn build_couplings(vehicles: &[(MpaState, Pose)], table: &ReachTable) -> Result<Vec<Coupling>> {
    let sets = vehicles
        .iter()
        .map(|(s, p)| reachable_sets(table, *s, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(couplings_from_sets(&sets))
}

fn earliest_keys(couplings: &[Coupling], n: usize, horizon: usize) -> Vec<usize> {
    let mut key = vec![horizon; n];
    for c in couplings {
        key[c.a] = key[c.a].min(c.earliest_step);
        key[c.b] = key[c.b].min(c.earliest_step);
    }
    key
}

/// Ascending (min earliest coupling step, id); uncoupled vehicles use the
/// horizon as their step.
pub fn assign_priorities(couplings: &[Coupling], n: usize, horizon: usize) -> PriorityAssignment {
    priorities_from_keys(&earliest_keys(couplings, n, horizon))
}

/// Rank 1 to the smallest (key, id).
pub fn priorities_from_keys(key: &[usize]) -> PriorityAssignment {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by_key(|&v| (key[v], v));
    PriorityAssignment::from_order(&order)
}

/// First step at which a set in `a` touches the first set in `b`.
fn first_entry(a: &[PolyUnion], b: &[PolyUnion]) -> usize {
    a.iter().position(|ra| union_intersects(ra, &b[0])).unwrap_or(a.len())
}

pub fn assign_priorities_reach_order(
    couplings: &[Coupling],
    sets: &[Vec<PolyUnion>],
    horizon: usize,
) -> PriorityAssignment {
    let n = sets.len();
    let key = earliest_keys(couplings, n, horizon);
    let tie = |v: usize| (key[v], v);
    // preds[v]: vehicles that must precede v
    let mut preds: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for c in couplings {
        let ab = first_entry(&sets[c.a], &sets[c.b]);
        let ba = first_entry(&sets[c.b], &sets[c.a]);
        let a_first = (ab, tie(c.b)) > (ba, tie(c.a));
        if a_first {
            preds[c.b].insert(c.a);
        } else {
            preds[c.a].insert(c.b);
        }
    }
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let ready = (0..n)
            .filter(|&v| !done[v] && preds[v].iter().all(|&u| done[u]))
            .min_by_key(|&v| tie(v));
        // a cycle leaves nothing ready; release its smallest member
        let next = ready.unwrap_or_else(|| {
            (0..n)
                .filter(|&v| !done[v])
                .min_by_key(|&v| tie(v))
                .expect("vehicles left")
        });
        done[next] = true;
        order.push(next);
    }
    PriorityAssignment::from_order(&order)
}

/// Weight `(N_p − h*) / N_p`.
pub fn coupling_weight(earliest_step: usize, horizon: usize) -> f64 {
    (horizon - earliest_step.min(horizon)) as f64 / horizon as f64
}

pub fn orient_and_weight(couplings: &[Coupling], prio: &PriorityAssignment, horizon: usize) -> CouplingGraph {
    let mut edges: Vec<Edge> = couplings
        .iter()
        .map(|c| {
            let (from, to) = if prio.rank[c.a] < prio.rank[c.b] {
                (c.a, c.b)
            } else {
                (c.b, c.a)
            };
            Edge {
                from,
                to,
                weight: coupling_weight(c.earliest_step, horizon),
                earliest_step: c.earliest_step,
            }
        })
        .collect();
    edges.sort_by_key(|e| (e.from, e.to));
    CouplingGraph {
        n_vehicles: prio.rank.len(),
        edges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpa::{build_mpa, build_reach_table, reachable_set, Compaction, MpaConfig};
    use proptest::prelude::*;

    fn c(a: usize, b: usize, h: usize) -> Coupling {
        Coupling { a, b, earliest_step: h }
    }

    fn is_acyclic(g: &CouplingGraph) -> bool {
        let mut indeg = vec![0; g.n_vehicles];
        for e in &g.edges {
            indeg[e.to] += 1;
        }
        let mut stack: Vec<usize> = (0..g.n_vehicles).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for e in g.edges.iter().filter(|e| e.from == v) {
                indeg[e.to] -= 1;
                if indeg[e.to] == 0 {
                    stack.push(e.to);
                }
            }
        }
        seen == g.n_vehicles
    }

    #[test]
    fn priorities_by_id_without_couplings() {
        assert_eq!(assign_priorities(&[], 3, 7).rank, vec![1, 2, 3]);
        assert_eq!(assign_priorities(&[], 1, 7).rank, vec![1]);
    }

    #[test]
    fn priorities_by_earliest_step() {
        // vehicle ids 1, 2, 3 at indices 0, 1, 2
        assert_eq!(priorities_from_keys(&[3, 0, 3]).order(), vec![1, 0, 2]);
        // a pair coupled at step 0 outranks everyone else; the id breaks its tie
        let cs = [c(1, 2, 0), c(0, 3, 3)];
        assert_eq!(assign_priorities(&cs, 5, 7).order(), vec![1, 2, 0, 3, 4]);
    }

    #[test]
    fn weights_and_orientation() {
        let p = PriorityAssignment::from_order(&[0, 1]);
        let g = orient_and_weight(&[c(0, 1, 0)], &p, 7);
        assert_eq!((g.edges[0].from, g.edges[0].to), (0, 1));
        assert_eq!(g.edges[0].weight, 1.0);
        let g = orient_and_weight(&[c(0, 1, 6)], &PriorityAssignment::from_order(&[1, 0]), 7);
        assert_eq!((g.edges[0].from, g.edges[0].to), (1, 0));
        assert!((g.edges[0].weight - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn mixed_couplings_form_dag() {
        let cs = [c(0, 1, 2), c(1, 2, 0), c(2, 3, 5), c(0, 3, 1), c(1, 3, 4)];
        for rule in [PriorityRule::EarliestCoupling, PriorityRule::ReachOrder] {
            let p = match rule {
                PriorityRule::EarliestCoupling => assign_priorities(&cs, 4, 7),
                PriorityRule::ReachOrder => {
                    let sets = vec![vec![PolyUnion::empty(); 7]; 4];
                    assign_priorities_reach_order(&cs, &sets, 7)
                }
            };
            assert!(p.is_permutation());
            assert!(is_acyclic(&orient_and_weight(&cs, &p, 7)));
        }
    }

    fn table() -> (crate::mpa::Mpa, ReachTable) {
        let mpa = build_mpa(MpaConfig::default()).unwrap();
        let t = build_reach_table(&mpa, Compaction::default());
        (mpa, t)
    }

    #[test]
    fn geometric_couplings() {
        let (mpa, t) = table();
        let fast = MpaState::new(4, mpa.zero_steering());
        // far apart: no edge
        let far = build_couplings(
            &[
                (fast, Pose::new(0.0, 0.0, 0.0)),
                (fast, Pose::new(10.0, 0.0, std::f64::consts::PI)),
            ],
            &t,
        )
        .unwrap();
        assert!(far.is_empty());
        // identical pose: coupled at step 0
        let same = build_couplings(&[(fast, Pose::ORIGIN), (fast, Pose::ORIGIN)], &t).unwrap();
        assert_eq!(same, vec![c(0, 1, 0)]);
        // head-on from 3 m: earliest step matches a direct per-step check
        let a = (fast, Pose::new(0.0, 0.0, 0.0));
        let b = (fast, Pose::new(3.0, 0.0, std::f64::consts::PI));
        let got = build_couplings(&[a, b], &t).unwrap();
        let oracle = (0..mpa.horizon()).find(|&h| {
            let ra = reachable_set(&t, a.0, &a.1, h).unwrap();
            let rb = reachable_set(&t, b.0, &b.1, h).unwrap();
            ra.parts()
                .iter()
                .any(|p| rb.parts().iter().any(|q| crate::geometry::intersects(p, q)))
        });
        assert_eq!(got.first().map(|c| c.earliest_step), oracle);
        assert!(oracle.is_some());
    }

    #[test]
    fn reach_order_puts_leader_first() {
        let (mpa, t) = table();
        let cruise = MpaState::new(4, mpa.zero_steering());
        // vehicle 0 follows vehicle 1 on the same lane
        let vs = [(cruise, Pose::new(0.0, 0.0, 0.0)), (cruise, Pose::new(0.6, 0.0, 0.0))];
        let sets: Vec<_> = vs.iter().map(|(s, p)| reachable_sets(&t, *s, p).unwrap()).collect();
        let cs = couplings_from_sets(&sets);
        assert_eq!(cs.len(), 1);
        let p = assign_priorities_reach_order(&cs, &sets, mpa.horizon());
        assert_eq!(p.order(), vec![1, 0]);
    }

    proptest! {
        #[test]
        fn orientation_is_acyclic_for_any_permutation(
            perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle(),
            hs in proptest::collection::vec(0usize..7, 15),
        ) {
            let mut cs = Vec::new();
            let mut k = 0;
            for a in 0..6 {
                for b in a + 1..6 {
                    if hs[k] < 5 {
                        cs.push(c(a, b, hs[k]));
                    }
                    k += 1;
                }
            }
            let g = orient_and_weight(&cs, &PriorityAssignment::from_order(&perm), 7);
            prop_assert!(is_acyclic(&g));
            for e in &g.edges {
                prop_assert!(e.weight > 0.0 && e.weight <= 1.0);
            }
        }

        #[test]
        fn weight_is_monotone(h1 in 0usize..7, h2 in 0usize..7) {
            if h1 <= h2 {
                prop_assert!(coupling_weight(h1, 7) >= coupling_weight(h2, 7));
            }
        }

        #[test]
        fn priorities_are_relabeling_equivariant(
            perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle(),
            hs in proptest::collection::vec(0usize..9, 15),
        ) {
            let mut cs = Vec::new();
            let mut k = 0;
            for a in 0..6 {
                for b in a + 1..6 {
                    if hs[k] < 7 {
                        cs.push(c(a, b, hs[k]));
                    }
                    k += 1;
                }
            }
            let key = earliest_keys(&cs, 6, 7);
            let relabeled: Vec<_> = cs
                .iter()
                .map(|x| {
                    let (a, b) = (perm[x.a], perm[x.b]);
                    c(a.min(b), a.max(b), x.earliest_step)
                })
                .collect();
            let p = assign_priorities(&relabeled, 6, 7);
            prop_assert!(p.is_permutation());
            // only the id tie-break may depend on labels
            for u in 0..6 {
                for w in 0..6 {
                    if key[u] < key[w] {
                        prop_assert!(p.rank[perm[u]] < p.rank[perm[w]]);
                    }
                }
            }
        }
    }
}
