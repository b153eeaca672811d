//! Undirected Erdős–Rényi networks with degree-class bookkeeping.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Immutable sparse undirected graph stored in compressed adjacency form.
///
/// Neighbor lists are sorted, symmetric and free of self-loops and
/// duplicates. `degree_classes` partitions the node set by degree.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    num_nodes: usize,
    offsets: Vec<usize>,
    adjacency: Vec<u32>,
    degree_classes: BTreeMap<usize, Vec<u32>>,
    connection_probability: f64,
    seed: u64,
}

impl Network {
    /// Builds a network from an undirected edge list. Self-loops are rejected
    /// and duplicate edges collapsed.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(u32, u32)],
        connection_probability: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut degree = vec![0usize; num_nodes];
        for &(a, b) in edges {
            let (a, b) = (a as usize, b as usize);
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) out of range for {num_nodes} nodes"
                )));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at node {a}")));
            }
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..num_nodes].to_vec();
        let mut adjacency = vec![0u32; offsets[num_nodes]];
        for &(a, b) in edges {
            adjacency[fill[a as usize]] = b;
            fill[a as usize] += 1;
            adjacency[fill[b as usize]] = a;
            fill[b as usize] += 1;
        }
        // sort and dedup each segment, compacting in place
        let mut compact_offsets = Vec::with_capacity(num_nodes + 1);
        compact_offsets.push(0);
        let mut write = 0;
        for i in 0..num_nodes {
            let seg = &mut adjacency[offsets[i]..offsets[i + 1]];
            seg.sort_unstable();
            let mut last = None;
            for r in offsets[i]..offsets[i + 1] {
                let v = adjacency[r];
                if Some(v) != last {
                    adjacency[write] = v;
                    write += 1;
                    last = Some(v);
                }
            }
            compact_offsets.push(write);
        }
        adjacency.truncate(write);

        let mut degree_classes: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for i in 0..num_nodes {
            let k = compact_offsets[i + 1] - compact_offsets[i];
            degree_classes.entry(k).or_default().push(i as u32);
        }
        Ok(Self {
            num_nodes,
            offsets: compact_offsets,
            adjacency,
            degree_classes,
            connection_probability,
            seed,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|i| self.degree(i)).collect()
    }

    /// Nodes grouped by degree, V(k). Only non-empty classes are present.
    pub fn degree_classes(&self) -> &BTreeMap<usize, Vec<u32>> {
        &self.degree_classes
    }

    pub fn connection_probability(&self) -> f64 {
        self.connection_probability
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn max_degree(&self) -> usize {
        self.degree_classes.keys().next_back().copied().unwrap_or(0)
    }

    pub fn mean_degree(&self) -> f64 {
        if self.num_nodes == 0 {
            0.0
        } else {
            self.adjacency.len() as f64 / self.num_nodes as f64
        }
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for i in 0..self.num_nodes {
            for &j in self.neighbors(i) {
                if (i as u32) < j {
                    out.push((i as u32, j));
                }
            }
        }
        out
    }

    /// Writes the edge-list text format: a `# n=<N> p=<p> seed=<seed>` header
    /// followed by one `i j` line per edge with `i < j`.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# n={} p={} seed={}",
            self.num_nodes, self.connection_probability, self.seed
        )?;
        let mut buf = String::new();
        for (i, j) in self.edges() {
            buf.clear();
            let _ = writeln!(buf, "{i} {j}");
            w.write_all(buf.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })??;
        let (n, p, seed) = parse_header(&header)?;
        let mut edges = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 2;
            let mut it = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<u32> {
                s.ok_or_else(|| Error::Parse {
                    line: lineno,
                    msg: "expected two node ids".into(),
                })?
                .parse()
                .map_err(|e| Error::Parse {
                    line: lineno,
                    msg: format!("{e}"),
                })
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            if i >= j {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("edge ({i}, {j}) must satisfy i < j"),
                });
            }
            edges.push((i, j));
        }
        Self::from_edges(n, &edges, p, seed)
    }
}

fn parse_header(header: &str) -> Result<(usize, f64, u64)> {
    let bad = |msg: &str| Error::Parse {
        line: 1,
        msg: msg.to_string(),
    };
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| bad("header must start with '#'"))?;
    let (mut n, mut p, mut seed) = (None, None, None);
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| bad("header fields must be key=value"))?;
        match key {
            "n" => n = Some(value.parse().map_err(|_| bad("bad n"))?),
            "p" => p = Some(value.parse().map_err(|_| bad("bad p"))?),
            "seed" => seed = Some(value.parse().map_err(|_| bad("bad seed"))?),
            other => return Err(bad(&format!("unknown header key '{other}'"))),
        }
    }
    Ok((
        n.ok_or_else(|| bad("missing n"))?,
        p.ok_or_else(|| bad("missing p"))?,
        seed.ok_or_else(|| bad("missing seed"))?,
    ))
}

fn check_er_args(n: usize, p: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("network needs at least one node".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "connection probability {p} outside [0, 1]"
        )));
    }
    if n > u32::MAX as usize {
        return Err(Error::InvalidArgument(format!("{n} nodes exceeds u32 ids")));
    }
    Ok(())
}

/// Visits the candidate pairs `(v, w)`, `w < v`, of G(n, p) chosen by
/// geometric skipping over the lexicographic pair order.
fn geometric_skip<R: Rng, F: FnMut(&mut R, u32, u32)>(n: usize, p: f64, rng: &mut R, mut emit: F) {
    if p <= 0.0 || n < 2 {
        return;
    }
    if p >= 1.0 {
        for v in 1..n {
            for w in 0..v {
                emit(rng, v as u32, w as u32);
            }
        }
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut v: i64 = 1;
    let mut w: i64 = -1;
    let n = n as i64;
    while v < n {
        let r: f64 = rng.gen();
        // 1 - r is in (0, 1], so the log is finite
        w += 1 + ((1.0 - r).ln() / log_q).floor() as i64;
        while w >= v && v < n {
            w -= v;
            v += 1;
        }
        if v < n {
            emit(rng, v as u32, w as u32);
        }
    }
}

/// Erdős–Rényi G(n, p): each unordered pair is connected independently with
/// probability `p`. Deterministic in `(n, p, seed)`.
pub fn generate_er(n: usize, p: f64, seed: u64) -> Result<Network> {
    check_er_args(n, p)?;
    let mut rng = rng::chacha(seed, rng::tag::NETWORK, 0);
    let mut edges = Vec::with_capacity((p * (n as f64) * (n as f64 - 1.0) / 2.0 * 1.1) as usize + 16);
    geometric_skip(n, p, &mut rng, |_, v, w| edges.push((w, v)));
    Network::from_edges(n, &edges, p, seed)
}

/// G(n, p) obtained by independent thinning of G(n, `p_ref`) with retention
/// probability `p / p_ref`.
///
/// The result is distributed exactly as G(n, p), and for a fixed seed the
/// edge sets are nested in `p`, which couples networks built at nearby
/// connection probabilities.
pub fn generate_er_coupled(n: usize, p: f64, p_ref: f64, seed: u64) -> Result<Network> {
    check_er_args(n, p)?;
    check_er_args(n, p_ref)?;
    if p > p_ref {
        return Err(Error::InvalidArgument(format!(
            "p = {p} exceeds the coupling reference {p_ref}"
        )));
    }
    if p_ref == 0.0 {
        return Network::from_edges(n, &[], p, seed);
    }
    let keep = p / p_ref;
    let mut rng = rng::chacha(seed, rng::tag::NETWORK, 1);
    let mut edges = Vec::with_capacity((p * (n as f64) * (n as f64 - 1.0) / 2.0 * 1.1) as usize + 16);
    geometric_skip(n, p_ref, &mut rng, |rng, v, w| {
        let mark: f64 = rng.gen();
        if mark < keep {
            edges.push((w, v));
        }
    });
    Network::from_edges(n, &edges, p, seed)
}

pub fn degree_histogram(net: &Network) -> BTreeMap<usize, usize> {
    net.degree_classes()
        .iter()
        .map(|(&k, nodes)| (k, nodes.len()))
        .collect()
}

/// Local clustering coefficient 2·E_i / (k_i (k_i − 1)), E_i being the number
/// of edges among the neighbors of `i`.
pub fn clustering_coefficient(net: &Network, i: usize) -> Result<f64> {
    if i >= net.num_nodes() {
        return Err(Error::InvalidArgument(format!("node {i} out of range")));
    }
    let nbrs = net.neighbors(i);
    let k = nbrs.len();
    if k < 2 {
        return Err(Error::UndefinedClustering { node: i, degree: k });
    }
    let mut links = 0usize;
    for (a_idx, &a) in nbrs.iter().enumerate() {
        let na = net.neighbors(a as usize);
        for &b in &nbrs[a_idx + 1..] {
            if na.binary_search(&b).is_ok() {
                links += 1;
            }
        }
    }
    Ok(2.0 * links as f64 / (k * (k - 1)) as f64)
}

/// Mean clustering over nodes with degree ≥ 2, together with the number of
/// such nodes. Nodes of lower degree are skipped.
pub fn mean_clustering(net: &Network) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..net.num_nodes() {
        if let Ok(c) = clustering_coefficient(net, i) {
            sum += c;
            count += 1;
        }
    }
    if count == 0 {
        (0.0, 0)
    } else {
        (sum / count as f64, count)
    }
}

fn bfs_distances(net: &Network, source: usize, dist: &mut [u32], queue: &mut VecDeque<u32>) {
    dist.fill(u32::MAX);
    queue.clear();
    dist[source] = 0;
    queue.push_back(source as u32);
    while let Some(v) = queue.pop_front() {
        let dv = dist[v as usize];
        for &w in net.neighbors(v as usize) {
            if dist[w as usize] == u32::MAX {
                dist[w as usize] = dv + 1;
                queue.push_back(w);
            }
        }
    }
}

/// Average shortest-path length over all connected ordered pairs, by BFS
/// from every node.
pub fn exact_mean_path_length(net: &Network) -> Result<f64> {
    let n = net.num_nodes();
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    let mut total = 0u64;
    let mut pairs = 0u64;
    for s in 0..n {
        bfs_distances(net, s, &mut dist, &mut queue);
        for (t, &d) in dist.iter().enumerate() {
            if t != s && d != u32::MAX {
                total += d as u64;
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(Error::NoConnectedPair {
            sampled: n * n.saturating_sub(1),
        });
    }
    Ok(total as f64 / pairs as f64)
}

/// Estimates the mean shortest-path length from `sample_pairs` uniformly
/// drawn node pairs, ignoring disconnected ones.
///
/// When `sample_pairs` is at least the number of unordered pairs the exact
/// all-pairs average is returned instead.
pub fn mean_path_length(net: &Network, sample_pairs: usize, seed: u64) -> Result<f64> {
    let n = net.num_nodes();
    if n < 2 {
        return Err(Error::NoConnectedPair { sampled: 0 });
    }
    if sample_pairs >= n * (n - 1) / 2 {
        return exact_mean_path_length(net);
    }
    let mut rng = rng::chacha(seed, rng::tag::PATHS, 0);
    let mut pairs: Vec<(u32, u32)> = (0..sample_pairs)
        .map(|_| {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i as u32, j as u32)
        })
        .collect();
    // group by source so each BFS serves every pair that shares it
    pairs.sort_unstable();
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    let mut total = 0u64;
    let mut connected = 0u64;
    let mut current = None;
    for &(i, j) in &pairs {
        if current != Some(i) {
            bfs_distances(net, i as usize, &mut dist, &mut queue);
            current = Some(i);
        }
        let d = dist[j as usize];
        if d != u32::MAX {
            total += d as u64;
            connected += 1;
        }
    }
    if connected == 0 {
        return Err(Error::NoConnectedPair {
            sampled: sample_pairs,
        });
    }
    Ok(total as f64 / connected as f64)
}

/// Size of the largest connected component.
pub fn giant_component_size(net: &Network) -> usize {
    let n = net.num_nodes();
    let mut seen = vec![false; n];
    let mut best = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        stack.push(s as u32);
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for &w in net.neighbors(v as usize) {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    stack.push(w);
                }
            }
        }
        best = best.max(size);
    }
    best
}

/// Relabels nodes by `perm` (old id `i` becomes `perm[i]`).
pub fn relabel(net: &Network, perm: &[u32]) -> Result<Network> {
    if perm.len() != net.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: net.num_nodes(),
            got: perm.len(),
        });
    }
    let edges: Vec<(u32, u32)> = net
        .edges()
        .into_iter()
        .map(|(a, b)| (perm[a as usize], perm[b as usize]))
        .collect();
    Network::from_edges(net.num_nodes(), &edges, net.connection_probability(), net.seed())
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation(n: usize, seed: u64) -> Vec<u32> {
    let mut perm: Vec<u32> = (0..n as u32).collect();
    perm.shuffle(&mut rng::chacha(seed, rng::tag::PATHS, 1));
    perm
}
