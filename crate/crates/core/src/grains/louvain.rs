//! Multi-level modularity optimisation (Louvain method).
//!
//! Node and community bookkeeping follows the reference implementation:
//! self-loops are listed once in the adjacency, node degree counts them
//! once, and the internal weight of a community counts each internal edge
//! from both ends.

use super::{DisorientationGraph, GrainError, GrainPartition, ReconMethod};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Weighted adjacency in compressed-row form.
#[derive(Debug, Clone)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

impl Csr {
    fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    fn neighbours(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.targets[r.clone()]
            .iter()
            .zip(&self.weights[r])
            .map(|(&t, &w)| (t as usize, w))
    }

    /// Builds from (source, target, weight) triples, summing duplicates in
    /// a fixed order.
    fn from_directed(n: usize, mut triples: Vec<(u32, u32, f64)>) -> Self {
        triples.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut offsets = vec![0usize; n + 1];
        let mut targets = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut last: Option<(u32, u32)> = None;
        for (s, t, w) in triples {
            if last == Some((s, t)) {
                *weights.last_mut().unwrap() += w;
            } else {
                targets.push(t);
                weights.push(w);
                offsets[s as usize + 1] += 1;
                last = Some((s, t));
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Self {
            offsets,
            targets,
            weights,
        }
    }

    fn from_graph(g: &DisorientationGraph) -> Self {
        let mut triples = Vec::with_capacity(2 * g.edges.len());
        for e in &g.edges {
            if e.a == e.b {
                triples.push((e.a, e.b, e.weight));
            } else {
                triples.push((e.a, e.b, e.weight));
                triples.push((e.b, e.a, e.weight));
            }
        }
        Self::from_directed(g.n_nodes, triples)
    }

    fn degree(&self, i: usize) -> f64 {
        self.weights[self.offsets[i]..self.offsets[i + 1]].iter().sum()
    }

    fn self_loop(&self, i: usize) -> f64 {
        self.neighbours(i).filter(|&(t, _)| t == i).map(|(_, w)| w).sum()
    }
}

struct Level<'a> {
    g: &'a Csr,
    m2: f64,
    degree: Vec<f64>,
    loops: Vec<f64>,
    comm: Vec<u32>,
    tot: Vec<f64>,
    inn: Vec<f64>,
}

impl<'a> Level<'a> {
    fn new(g: &'a Csr) -> Self {
        let n = g.n();
        let degree: Vec<f64> = (0..n).map(|i| g.degree(i)).collect();
        let loops: Vec<f64> = (0..n).map(|i| g.self_loop(i)).collect();
        let m2 = degree.iter().sum();
        Self {
            g,
            m2,
            tot: degree.clone(),
            inn: loops.clone(),
            degree,
            loops,
            comm: (0..n as u32).collect(),
        }
    }

    fn modularity(&self) -> f64 {
        let mut q = 0.0;
        for c in 0..self.tot.len() {
            if self.tot[c] > 0.0 {
                q += self.inn[c] / self.m2 - (self.tot[c] / self.m2).powi(2);
            }
        }
        q
    }

    /// Repeated node sweeps; returns whether any node changed community.
    fn optimise(&mut self, order: &[usize], q_c: f64) -> bool {
        let n = self.g.n();
        let mut neigh_w = vec![-1.0f64; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut improved = false;
        let mut cur = self.modularity();
        loop {
            let mut moves = 0usize;
            for &i in order {
                let ci = self.comm[i] as usize;
                let ki = self.degree[i];
                touched.clear();
                touched.push(ci);
                neigh_w[ci] = 0.0;
                for (j, w) in self.g.neighbours(i) {
                    if j == i {
                        continue;
                    }
                    let c = self.comm[j] as usize;
                    if neigh_w[c] < 0.0 {
                        neigh_w[c] = 0.0;
                        touched.push(c);
                    }
                    neigh_w[c] += w;
                }
                self.tot[ci] -= ki;
                self.inn[ci] -= 2.0 * neigh_w[ci] + self.loops[i];

                let mut best = ci;
                let mut best_w = 0.0;
                let mut best_gain = 0.0;
                for &c in &touched {
                    let gain = neigh_w[c] - self.tot[c] * ki / self.m2;
                    if gain > best_gain {
                        best = c;
                        best_w = neigh_w[c];
                        best_gain = gain;
                    }
                }
                self.tot[best] += ki;
                self.inn[best] += 2.0 * best_w + self.loops[i];
                self.comm[i] = best as u32;
                if best != ci {
                    moves += 1;
                }
                for &c in &touched {
                    neigh_w[c] = -1.0;
                }
            }
            let new = self.modularity();
            if moves > 0 {
                improved = true;
            }
            if !(moves > 0 && new - cur > q_c) {
                break;
            }
            cur = new;
        }
        improved
    }
}

/// Renumbers communities densely by first appearance.
fn renumber(comm: &[u32]) -> (Vec<u32>, usize) {
    let mut map = vec![u32::MAX; comm.len()];
    let mut next = 0u32;
    let out = comm
        .iter()
        .map(|&c| {
            if map[c as usize] == u32::MAX {
                map[c as usize] = next;
                next += 1;
            }
            map[c as usize]
        })
        .collect();
    (out, next as usize)
}

fn aggregate(g: &Csr, comm: &[u32], n_comm: usize) -> Csr {
    let mut triples = Vec::with_capacity(g.targets.len());
    for i in 0..g.n() {
        for (j, w) in g.neighbours(i) {
            triples.push((comm[i], comm[j], w));
        }
    }
    Csr::from_directed(n_comm, triples)
}

/// Partitions the graph by multi-level modularity maximisation.
///
/// Within a level, node sweeps repeat while nodes move and the sweep gains
/// more than `q_c` in modularity; levels repeat while a level moved any
/// node. Node order is a seeded shuffle per level, so results are
/// deterministic for a given seed.
pub fn louvain(graph: &DisorientationGraph, q_c: f64, seed: u64) -> Result<GrainPartition, GrainError> {
    if !(q_c >= 0.0 && q_c.is_finite()) {
        return Err(GrainError::InvalidParameter(format!("Q_c = {q_c}")));
    }
    let method = ReconMethod::Louvain { k_l: graph.k_l };
    let mut labels: Vec<u32> = (0..graph.n_nodes as u32).collect();
    if graph.edges.is_empty() {
        return Ok(GrainPartition::from_raw_labels(&labels, method));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Csr::from_graph(graph);
    loop {
        let mut level = Level::new(&g);
        if level.m2 <= 0.0 {
            break;
        }
        let mut order: Vec<usize> = (0..g.n()).collect();
        order.shuffle(&mut rng);
        let improved = level.optimise(&order, q_c);
        if !improved {
            break;
        }
        let (comm, n_comm) = renumber(&level.comm);
        for l in labels.iter_mut() {
            *l = comm[*l as usize];
        }
        let next = aggregate(&g, &comm, n_comm);
        if n_comm == g.n() {
            break;
        }
        g = next;
    }
    Ok(GrainPartition::from_raw_labels(&labels, method))
}

/// Newman modularity of a partition of the graph.
pub fn modularity(graph: &DisorientationGraph, labels: &[u32]) -> f64 {
    let n_comm = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut tot = vec![0.0; n_comm];
    let mut inn = vec![0.0; n_comm];
    let mut m2 = 0.0;
    for e in &graph.edges {
        let (ca, cb) = (labels[e.a as usize] as usize, labels[e.b as usize] as usize);
        tot[ca] += e.weight;
        tot[cb] += e.weight;
        m2 += 2.0 * e.weight;
        if ca == cb {
            inn[ca] += 2.0 * e.weight;
        }
    }
    if m2 == 0.0 {
        return 0.0;
    }
    (0..n_comm).map(|c| inn[c] / m2 - (tot[c] / m2).powi(2)).sum()
}
