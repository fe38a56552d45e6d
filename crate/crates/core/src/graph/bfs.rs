use std::collections::VecDeque;

use super::Network;

/// BFS shells around `i`: entry `s` lists the nodes at shortest-path distance
/// exactly `s`, for `s = 0..=s_max`. Each shell is sorted.
pub fn neighbors_at_distance(g: &Network, i: usize, s_max: usize) -> Vec<Vec<usize>> {
    let mut shells = vec![Vec::new(); s_max + 1];
    let mut dist = vec![usize::MAX; g.n()];
    dist[i] = 0;
    shells[0].push(i);
    let mut queue = VecDeque::from([i]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u];
        if du == s_max {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = du + 1;
                shells[du + 1].push(v);
                queue.push_back(v);
            }
        }
    }
    for shell in &mut shells {
        shell.sort_unstable();
    }
    shells
}

/// Every node's neighbours within `radius` hops, tagged with their distance.
/// Built once per network and shared read-only by variance computations.
#[derive(Debug, Clone)]
pub struct ShellIndex {
    radius: usize,
    offsets: Vec<usize>,
    pairs: Vec<(usize, usize)>,
}

impl ShellIndex {
    pub fn new(g: &Network, radius: usize) -> Self {
        let n = g.n();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut pairs = Vec::new();
        // reusable BFS scratch
        let mut dist = vec![usize::MAX; n];
        let mut touched = Vec::new();
        let mut queue = VecDeque::new();
        for i in 0..n {
            dist[i] = 0;
            touched.push(i);
            queue.push_back(i);
            while let Some(u) = queue.pop_front() {
                let du = dist[u];
                if du == radius {
                    continue;
                }
                for &v in g.neighbors(u) {
                    if dist[v] == usize::MAX {
                        dist[v] = du + 1;
                        touched.push(v);
                        pairs.push((v, du + 1));
                        queue.push_back(v);
                    }
                }
            }
            for &t in &touched {
                dist[t] = usize::MAX;
            }
            touched.clear();
            offsets.push(pairs.len());
        }
        Self { radius, offsets, pairs }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `(j, s)` for every `j != i` with `1 <= dist(i, j) = s <= radius`.
    pub fn within(&self, i: usize) -> &[(usize, usize)] {
        &self.pairs[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn total_pairs(&self) -> usize {
        self.pairs.len()
    }
}
