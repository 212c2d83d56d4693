//! Min-cost max-flow by successive shortest paths with potentials.
//!
//! Edge costs must be non-negative, which holds for matching distances, so
//! zero initial potentials are valid and every augmentation runs Dijkstra
//! on reduced costs. Heap ordering breaks distance ties by node index, so
//! identical inputs always produce identical flows.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub struct MinCostFlow {
    adj: Vec<Vec<u32>>,
    to: Vec<u32>,
    cap: Vec<i64>,
    cost: Vec<f64>,
    orig_cap: Vec<i64>,
}

struct HeapEntry {
    dist: f64,
    node: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we need the smallest distance,
        // ties resolved toward the smaller node id.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl MinCostFlow {
    pub fn new(n_nodes: usize) -> Self {
        MinCostFlow {
            adj: vec![Vec::new(); n_nodes],
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
            orig_cap: Vec::new(),
        }
    }

    /// Add a directed edge; returns its id. `cost` must be non-negative.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: i64, cost: f64) -> usize {
        debug_assert!(cost >= 0.0, "negative edge cost {cost}");
        let id = self.to.len();
        self.adj[u].push(id as u32);
        self.to.push(v as u32);
        self.cap.push(cap);
        self.cost.push(cost);
        self.orig_cap.push(cap);

        self.adj[v].push((id + 1) as u32);
        self.to.push(u as u32);
        self.cap.push(0);
        self.cost.push(-cost);
        self.orig_cap.push(0);
        id
    }

    /// Flow currently on a forward edge.
    pub fn edge_flow(&self, id: usize) -> i64 {
        self.orig_cap[id] - self.cap[id]
    }

    /// Push min-cost max-flow from `s` to `t`; returns `(flow, cost)`.
    pub fn solve(&mut self, s: usize, t: usize) -> (i64, f64) {
        let n = self.adj.len();
        let mut phi = vec![0.0_f64; n];
        let mut total_flow = 0_i64;
        let mut total_cost = 0.0_f64;

        loop {
            let mut dist = vec![f64::INFINITY; n];
            let mut parent_edge = vec![u32::MAX; n];
            let mut done = vec![false; n];
            let mut heap = BinaryHeap::new();
            dist[s] = 0.0;
            heap.push(HeapEntry {
                dist: 0.0,
                node: s as u32,
            });

            while let Some(HeapEntry { dist: du, node: u }) = heap.pop() {
                let u = u as usize;
                if done[u] {
                    continue;
                }
                done[u] = true;
                for &eid in &self.adj[u] {
                    let e = eid as usize;
                    if self.cap[e] <= 0 {
                        continue;
                    }
                    let v = self.to[e] as usize;
                    let reduced = (self.cost[e] + phi[u] - phi[v]).max(0.0);
                    let cand = du + reduced;
                    if cand < dist[v] {
                        dist[v] = cand;
                        parent_edge[v] = eid;
                        heap.push(HeapEntry {
                            dist: cand,
                            node: v as u32,
                        });
                    }
                }
            }

            if parent_edge[t] == u32::MAX {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    phi[v] += dist[v];
                }
            }

            // Bottleneck along the augmenting path.
            let mut bottleneck = i64::MAX;
            let mut v = t;
            while v != s {
                let e = parent_edge[v] as usize;
                bottleneck = bottleneck.min(self.cap[e]);
                v = self.to[e ^ 1] as usize;
            }
            let mut v = t;
            while v != s {
                let e = parent_edge[v] as usize;
                self.cap[e] -= bottleneck;
                self.cap[e ^ 1] += bottleneck;
                total_cost += bottleneck as f64 * self.cost[e];
                v = self.to[e ^ 1] as usize;
            }
            total_flow += bottleneck;
        }

        (total_flow, total_cost)
    }
}
