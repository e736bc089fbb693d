//! Service-similarity graph.
//!
//! Two services are adjacent when their concatenated LSH indices coincide in
//! at least one of `T` independent indexing rounds. Each edge remembers the
//! first round that produced it.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{PdsrError, Result};
use crate::federation::{index_round, PlatformDataset, ServiceIndex};

/// Word budget for per-bucket membership bitsets in [`SimilarityGraph::from_rounds`].
const DENSE_BUCKET_WORDS: usize = 1 << 24;

/// Undirected, self-loop-free graph over services `0..M`, stored as sorted
/// adjacency lists with a witness round per directed entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityGraph {
    n_vertices: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    witness: Vec<u32>,
}

impl SimilarityGraph {
    /// A graph with `n` vertices and no edges.
    pub fn empty(n: usize) -> Self {
        SimilarityGraph {
            n_vertices: n,
            offsets: vec![0; n + 1],
            neighbors: Vec::new(),
            witness: Vec::new(),
        }
    }

    /// Builds a graph from an explicit edge list, every witness round set to 1.
    /// Duplicate edges collapse; self-loops are rejected.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut adj: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(PdsrError::invalid(format!("edge ({a}, {b}) outside {n} vertices")));
            }
            if a == b {
                return Err(PdsrError::invalid(format!("self-loop on vertex {a}")));
            }
            adj[a as usize].push((b, 1));
            adj[b as usize].push((a, 1));
        }
        Ok(Self::from_adjacency(adj))
    }

    fn from_adjacency(mut adj: Vec<Vec<(u32, u32)>>) -> Self {
        let n = adj.len();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let total: usize = adj.iter().map(Vec::len).sum();
        let mut neighbors = Vec::with_capacity(total);
        let mut witness = Vec::with_capacity(total);
        for list in &mut adj {
            // Lowest witness first so dedup keeps the earliest round.
            list.sort_unstable();
            list.dedup_by_key(|e| e.0);
            for &(v, w) in list.iter() {
                neighbors.push(v);
                witness.push(w);
            }
            offsets.push(neighbors.len());
        }
        SimilarityGraph {
            n_vertices: n,
            offsets,
            neighbors,
            witness,
        }
    }

    /// Accumulates edges from per-round index tables (round `t` is `rounds[t - 1]`).
    ///
    /// Services are bucketed by index value in each round; every pair sharing
    /// a bucket becomes an edge, which is exactly the all-pairs equality scan.
    pub fn from_rounds(n: usize, rounds: &[Vec<ServiceIndex>]) -> Result<Self> {
        Self::from_rounds_with(n, rounds, None)
    }

    fn from_rounds_with(n: usize, rounds: &[Vec<ServiceIndex>], dense: Option<bool>) -> Result<Self> {
        // buckets[t][b] = members, bucket_of[t][i] = b
        let mut buckets: Vec<Vec<Vec<u32>>> = Vec::with_capacity(rounds.len());
        let mut bucket_of: Vec<Vec<u32>> = Vec::with_capacity(rounds.len());
        for table in rounds {
            if table.len() != n {
                return Err(PdsrError::invalid(format!(
                    "index table has {} services, graph has {n}",
                    table.len()
                )));
            }
            let mut ids: HashMap<&[bool], u32> = HashMap::new();
            let mut members: Vec<Vec<u32>> = Vec::new();
            let mut of = vec![0u32; n];
            for (pos, index) in table.iter().enumerate() {
                if index.service_id as usize != pos {
                    return Err(PdsrError::invalid(format!(
                        "index table position {pos} holds service {}",
                        index.service_id
                    )));
                }
                let next = members.len() as u32;
                let b = *ids.entry(index.bits.as_slice()).or_insert(next);
                if b == next {
                    members.push(Vec::new());
                }
                members[b as usize].push(pos as u32);
                of[pos] = b;
            }
            buckets.push(members);
            bucket_of.push(of);
        }

        let words = n.div_ceil(64);
        let total_buckets: usize = buckets.iter().map(Vec::len).sum();
        if dense.unwrap_or(total_buckets.saturating_mul(words) <= DENSE_BUCKET_WORDS) {
            Ok(Self::union_dense(n, &buckets, &bucket_of))
        } else {
            Ok(Self::union_sparse(n, &buckets, &bucket_of))
        }
    }

    /// Per-vertex union of bucket members, tracking each neighbor's first round.
    fn union_sparse(n: usize, buckets: &[Vec<Vec<u32>>], bucket_of: &[Vec<u32>]) -> Self {
        let mut first_round = vec![0u32; n];
        let mut touched: Vec<u32> = Vec::new();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        let mut witness = Vec::new();
        for i in 0..n {
            for (t, (members, of)) in buckets.iter().zip(bucket_of).enumerate() {
                for &j in &members[of[i] as usize] {
                    if j as usize != i && first_round[j as usize] == 0 {
                        first_round[j as usize] = t as u32 + 1;
                        touched.push(j);
                    }
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                neighbors.push(j);
                witness.push(first_round[j as usize]);
                first_round[j as usize] = 0;
            }
            touched.clear();
            offsets.push(neighbors.len());
        }
        SimilarityGraph {
            n_vertices: n,
            offsets,
            neighbors,
            witness,
        }
    }

    /// Same union over bucket bitsets; neighbors come out sorted without a sort.
    fn union_dense(n: usize, buckets: &[Vec<Vec<u32>>], bucket_of: &[Vec<u32>]) -> Self {
        let words = n.div_ceil(64);
        let bits: Vec<Vec<u64>> = buckets
            .iter()
            .map(|members| {
                let mut b = vec![0u64; members.len() * words];
                for (k, m) in members.iter().enumerate() {
                    for &j in m {
                        b[k * words + j as usize / 64] |= 1 << (j % 64);
                    }
                }
                b
            })
            .collect();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        let mut witness = Vec::new();
        let mut seen = vec![0u64; words];
        let mut first = vec![0u32; n];
        for i in 0..n {
            seen.iter_mut().for_each(|w| *w = 0);
            for (t, (b, of)) in bits.iter().zip(bucket_of).enumerate() {
                let row = &b[of[i] as usize * words..(of[i] as usize + 1) * words];
                for (w, (s, r)) in seen.iter_mut().zip(row).enumerate() {
                    let mut fresh = r & !*s;
                    *s |= r;
                    while fresh != 0 {
                        let j = w * 64 + fresh.trailing_zeros() as usize;
                        first[j] = t as u32 + 1;
                        fresh &= fresh - 1;
                    }
                }
            }
            seen[i / 64] &= !(1 << (i % 64));
            for (w, &s) in seen.iter().enumerate() {
                let mut rest = s;
                while rest != 0 {
                    let j = w * 64 + rest.trailing_zeros() as usize;
                    neighbors.push(j as u32);
                    witness.push(first[j]);
                    rest &= rest - 1;
                }
            }
            offsets.push(neighbors.len());
        }
        SimilarityGraph {
            n_vertices: n,
            offsets,
            neighbors,
            witness,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n_vertices == 0 {
            0.0
        } else {
            self.neighbors.len() as f64 / self.n_vertices as f64
        }
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Sorted neighbor ids of `v`.
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Witness rounds aligned with [`neighbors`](Self::neighbors).
    pub fn witness_rounds(&self, v: usize) -> &[u32] {
        &self.witness[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.n_vertices && b < self.n_vertices && self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }

    /// First round in which `a` and `b` shared an index, if they are adjacent.
    pub fn witness(&self, a: usize, b: usize) -> Option<u32> {
        if a >= self.n_vertices || b >= self.n_vertices {
            return None;
        }
        let pos = self.neighbors(a).binary_search(&(b as u32)).ok()?;
        Some(self.witness_rounds(a)[pos])
    }

    /// Edges as `(i, i', witness)` with `i < i'`, lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        (0..self.n_vertices).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .zip(self.witness_rounds(i))
                .filter(move |(&j, _)| j as usize > i)
                .map(move |(&j, &w)| (i as u32, j, w))
        })
    }

    fn check_vertices(&self, subset: &[u32]) -> Result<()> {
        match subset.iter().find(|&&v| v as usize >= self.n_vertices) {
            Some(v) => Err(PdsrError::invalid(format!(
                "vertex {v} not in graph of {} vertices",
                self.n_vertices
            ))),
            None => Ok(()),
        }
    }

    /// The subset together with every vertex adjacent to it, sorted.
    pub fn expanded_set(&self, subset: &[u32]) -> Result<Vec<u32>> {
        self.check_vertices(subset)?;
        let mut seen = vec![false; self.n_vertices];
        for &v in subset {
            seen[v as usize] = true;
            for &u in self.neighbors(v as usize) {
                seen[u as usize] = true;
            }
        }
        Ok(seen
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(v, _)| v as u32)
            .collect())
    }

    /// Size of [`expanded_set`](Self::expanded_set) without materializing it.
    pub fn expanded_size(&self, subset: &[u32]) -> Result<usize> {
        self.check_vertices(subset)?;
        let mut seen = vec![false; self.n_vertices];
        let mut count = 0;
        for &v in subset {
            for u in std::iter::once(v).chain(self.neighbors(v as usize).iter().copied()) {
                if !std::mem::replace(&mut seen[u as usize], true) {
                    count += 1;
                }
            }
        }
        Ok(count)
    }

    /// `|Exp(subset)| / M`.
    pub fn expansion_ratio(&self, subset: &[u32]) -> Result<f64> {
        if self.n_vertices == 0 {
            return Err(PdsrError::invalid("expansion ratio of an empty graph"));
        }
        Ok(self.expanded_size(subset)? as f64 / self.n_vertices as f64)
    }

    /// Writes the edge list as TSV, preceded by a `# PDSR-graph v1` header.
    pub fn write_tsv<W: Write>(&self, mut out: W, t_rounds: usize, seed: u64) -> Result<()> {
        writeln!(out, "# PDSR-graph v1 M={} T={} seed={}", self.n_vertices, t_rounds, seed)?;
        for (i, j, w) in self.edges() {
            writeln!(out, "{i}\t{j}\t{w}")?;
        }
        Ok(())
    }
}

/// Runs `t_rounds` federated indexing rounds and links services whose indices
/// match in any of them. Every encoded message is handed to `observer`.
pub fn build_graph_observed(
    platforms: &[PlatformDataset],
    h_counts: &[usize],
    t_rounds: usize,
    seed: u64,
    mut observer: impl FnMut(&[u8]) -> Result<()>,
) -> Result<SimilarityGraph> {
    let n = platforms
        .first()
        .map(PlatformDataset::n_services)
        .ok_or_else(|| PdsrError::invalid("at least one platform is required"))?;
    let rounds = (1..=t_rounds as u32)
        .map(|t| {
            let round = index_round(platforms, h_counts, seed, t)?;
            for msg in &round.transcript {
                observer(msg)?;
            }
            Ok(round.indices)
        })
        .collect::<Result<Vec<_>>>()?;
    SimilarityGraph::from_rounds(n, &rounds)
}

pub fn build_graph(platforms: &[PlatformDataset], h_counts: &[usize], t_rounds: usize, seed: u64) -> Result<SimilarityGraph> {
    build_graph_observed(platforms, h_counts, t_rounds, seed, |_| Ok(()))
}
