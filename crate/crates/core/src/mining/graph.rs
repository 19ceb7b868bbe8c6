//! Candidate graphs over frames, with bitset adjacency.

use std::collections::HashMap;

use crate::geo::{geo_distance_sq, Position};

use super::cliques::{BitSet, KCliqueIter, MaximalCliques};

/// Symmetric adjacency over `n` vertices, one bitset row per vertex.
#[derive(Clone, Debug)]
pub struct AdjacencyMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl AdjacencyMatrix {
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Self {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut adj = Self::new(n);
        for &(u, v) in edges {
            adj.add_edge(u, v);
        }
        adj
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add_edge(&mut self, u: u32, v: u32) {
        assert_ne!(u, v, "self loops are not allowed");
        let (u, v) = (u as usize, v as usize);
        self.bits[u * self.words + v / 64] |= 1 << (v % 64);
        self.bits[v * self.words + u / 64] |= 1 << (u % 64);
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        let (u, v) = (u as usize, v as usize);
        self.bits[u * self.words + v / 64] & (1 << (v % 64)) != 0
    }

    pub fn degree(&self, u: u32) -> u32 {
        self.row(u).iter().map(|w| w.count_ones()).sum()
    }

    pub(crate) fn row(&self, u: u32) -> &[u64] {
        let u = u as usize;
        &self.bits[u * self.words..(u + 1) * self.words]
    }
}

/// Graph over the frames of descriptor-similar sequences: vertices are
/// frames, edges join pairs strictly closer than `tau` meters. Sampling
/// marks vertices dead instead of rebuilding the structure.
#[derive(Clone, Debug)]
pub struct CandidateGraph {
    frame_ids: Vec<u64>,
    positions: Vec<Position>,
    adj: AdjacencyMatrix,
    alive: BitSet,
    tau: f64,
}

impl CandidateGraph {
    /// Builds the graph for the given frames. Edge construction buckets
    /// vertices into a `tau`-sized grid so only nearby pairs are tested.
    pub(crate) fn build(frame_ids: Vec<u64>, positions: Vec<Position>, tau: f64) -> Self {
        assert_eq!(frame_ids.len(), positions.len());
        let n = frame_ids.len();
        let mut adj = AdjacencyMatrix::new(n);
        let tau_sq = tau * tau;

        let cell = |p: Position| -> (i64, i64) {
            ((p.east / tau).floor() as i64, (p.north / tau).floor() as i64)
        };
        let mut grid: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (v, &p) in positions.iter().enumerate() {
            grid.entry(cell(p)).or_default().push(v as u32);
        }
        for (v, &p) in positions.iter().enumerate() {
            let (ce, cn) = cell(p);
            for de in -1..=1 {
                for dn in -1..=1 {
                    let Some(bucket) = grid.get(&(ce + de, cn + dn)) else {
                        continue;
                    };
                    for &u in bucket {
                        if (u as usize) < v && geo_distance_sq(positions[u as usize], p) < tau_sq
                        {
                            adj.add_edge(u, v as u32);
                        }
                    }
                }
            }
        }

        Self {
            frame_ids,
            positions,
            adj,
            alive: BitSet::full(n),
            tau,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n_vertices(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn n_alive(&self) -> usize {
        self.alive.count() as usize
    }

    pub fn frame_id(&self, v: u32) -> u64 {
        self.frame_ids[v as usize]
    }

    pub fn position(&self, v: u32) -> Position {
        self.positions[v as usize]
    }

    pub fn is_edge(&self, u: u32, v: u32) -> bool {
        self.adj.has_edge(u, v)
    }

    pub fn is_alive(&self, v: u32) -> bool {
        self.alive.test(v)
    }

    pub fn adjacency(&self) -> &AdjacencyMatrix {
        &self.adj
    }

    /// Alive vertices in ascending index order.
    pub fn alive_vertices(&self) -> Vec<u32> {
        self.alive.ones().collect()
    }

    pub fn frame_ids_of(&self, verts: &[u32]) -> Vec<u64> {
        verts.iter().map(|&v| self.frame_id(v)).collect()
    }

    /// Streams every clique of exactly `k` alive vertices, each one once.
    pub fn enumerate_cliques_of_size(&self, k: usize) -> KCliqueIter<'_> {
        let order = self.alive_vertices();
        KCliqueIter::new(&self.adj, &self.alive, order, k)
    }

    /// Streams maximal cliques of the alive subgraph, visiting vertices in
    /// the given order (a permutation of the alive vertices).
    pub(crate) fn maximal_cliques_with_order(&self, order: &[u32]) -> MaximalCliques<'_> {
        MaximalCliques::new(&self.adj, &self.alive, order)
    }

    /// Kills the given vertices and every alive neighbor of them.
    pub fn remove_closed_neighborhood(&mut self, verts: &[u32]) {
        let mut doomed = BitSet::zeros(self.n_vertices());
        for &v in verts {
            doomed.set(v);
            doomed.or_words(self.adj.row(v));
        }
        self.alive.clear_words(doomed.words());
    }

    /// Kills every alive vertex strictly closer than `tau` to any anchor.
    /// Keeps batches mined across graph rebuilds mutually separated.
    pub(crate) fn cull_within(&mut self, anchors: &[Position], tau: f64) {
        let tau_sq = tau * tau;
        let doomed: Vec<u32> = self
            .alive
            .ones()
            .filter(|&v| {
                anchors
                    .iter()
                    .any(|&a| geo_distance_sq(self.positions[v as usize], a) < tau_sq)
            })
            .collect();
        for v in doomed {
            self.alive.clear(v);
        }
    }
}
