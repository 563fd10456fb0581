//! Dinic maximum flow on real capacities.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct FlowNetwork {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    residual: Vec<f64>,
    capacity: Vec<f64>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            head: vec![Vec::new(); nodes],
            ..Default::default()
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.head.len()
    }

    /// Adds the arc pair `u -> v` (capacity `forward`) and `v -> u` (capacity `backward`).
    pub fn add_pair(&mut self, u: usize, v: usize, forward: f64, backward: f64) -> usize {
        let e = self.to.len();
        self.head[u].push(e);
        self.head[v].push(e + 1);
        self.to.extend([v, u]);
        self.residual.extend([forward, backward]);
        self.capacity.extend([forward, backward]);
        e
    }

    fn tol(&self) -> f64 {
        let scale = self
            .capacity
            .iter()
            .filter(|c| c.is_finite())
            .fold(0.0f64, |a, c| a.max(*c));
        1e-14 * scale.max(f64::MIN_POSITIVE)
    }

    fn levels(&self, s: usize, eps: f64) -> Vec<i64> {
        let mut level = vec![-1; self.n_nodes()];
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if level[v] < 0 && self.residual[e] > eps {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level
    }

    /// Maximum `s`-`t` flow. Fails if an augmenting path has unbounded capacity.
    pub fn max_flow(&mut self, s: usize, t: usize) -> Result<f64> {
        let eps = self.tol();
        let mut total = 0.0;
        loop {
            let mut level = self.levels(s, eps);
            if level[t] < 0 {
                return Ok(total);
            }
            let mut next = vec![0usize; self.n_nodes()];
            let mut path: Vec<usize> = Vec::new();
            let mut u = s;
            loop {
                if u == t {
                    let push = path
                        .iter()
                        .map(|&e| self.residual[e])
                        .fold(f64::INFINITY, f64::min);
                    if !push.is_finite() {
                        return Err(Error::Internal("unbounded augmenting path".into()));
                    }
                    let mut cut = path.len();
                    for (i, &e) in path.iter().enumerate() {
                        self.residual[e] -= push;
                        self.residual[e ^ 1] += push;
                        if cut == path.len() && self.residual[e] <= eps {
                            cut = i;
                        }
                    }
                    total += push;
                    path.truncate(cut);
                    u = path.last().map_or(s, |&e| self.to[e]);
                    continue;
                }
                let mut advanced = false;
                while next[u] < self.head[u].len() {
                    let e = self.head[u][next[u]];
                    let v = self.to[e];
                    if self.residual[e] > eps && level[v] == level[u] + 1 {
                        path.push(e);
                        u = v;
                        advanced = true;
                        break;
                    }
                    next[u] += 1;
                }
                if !advanced {
                    level[u] = -1;
                    match path.pop() {
                        Some(e) => {
                            u = self.to[e ^ 1];
                            next[u] += 1;
                        }
                        None => break,
                    }
                }
            }
        }
    }

    /// Nodes reachable from `s` in the residual network.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let eps = self.tol();
        self.levels(s, eps).iter().map(|l| *l >= 0).collect()
    }

    /// Sum of original capacities of arcs leaving `side`.
    pub fn cut_capacity(&self, side: &[bool]) -> f64 {
        let mut total = 0.0;
        for (u, arcs) in self.head.iter().enumerate() {
            if !side[u] {
                continue;
            }
            for &e in arcs {
                if !side[self.to[e]] {
                    total += self.capacity[e];
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_network() {
        let mut g = FlowNetwork::new(6);
        for &(u, v, c) in &[
            (0, 1, 16.0),
            (0, 2, 13.0),
            (1, 3, 12.0),
            (2, 1, 4.0),
            (2, 4, 14.0),
            (3, 2, 9.0),
            (3, 5, 20.0),
            (4, 3, 7.0),
            (4, 5, 4.0),
        ] {
            g.add_pair(u, v, c, 0.0);
        }
        let f = g.max_flow(0, 5).unwrap();
        assert_eq!(f, 23.0);
        let side = g.source_side(0);
        assert_eq!(g.cut_capacity(&side), 23.0);
    }

    #[test]
    fn infinite_arcs_are_pins() {
        let mut g = FlowNetwork::new(4);
        g.add_pair(0, 1, f64::INFINITY, 0.0);
        g.add_pair(1, 2, 0.5, 0.5);
        g.add_pair(2, 3, f64::INFINITY, 0.0);
        assert_eq!(g.max_flow(0, 3).unwrap(), 0.5);
        assert_eq!(g.source_side(0), vec![true, true, false, false]);
    }

    #[test]
    fn unbounded_path_is_an_error() {
        let mut g = FlowNetwork::new(2);
        g.add_pair(0, 1, f64::INFINITY, 0.0);
        assert!(g.max_flow(0, 1).is_err());
    }
}
