use std::collections::VecDeque;

use super::{distance, Placement, Role};

/// Relay reachability of sensing UAVs towards computing UAVs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityResult {
    /// Per placement entry: true iff it is a sensing UAV with a relay path
    /// to some computing UAV.
    pub reachable: Vec<bool>,
    /// Undirected links `(i, j)`, `i < j`, between relay-capable UAVs
    /// (sensing or computing) within communication range.
    pub edges: Vec<(usize, usize)>,
}

impl ConnectivityResult {
    pub fn reachable_sensing(&self) -> usize {
        self.reachable.iter().filter(|&&r| r).count()
    }
}

/// Multi-source breadth-first search from every computing UAV over the
/// disk graph of sensing and computing UAVs. Ranges are inclusive.
pub fn connectivity(placement: &Placement, comm_range_m: f64) -> ConnectivityResult {
    let n = placement.assignments.len();
    let relays: Vec<bool> = placement
        .assignments
        .iter()
        .map(|a| a.role != Role::Deterrence)
        .collect();
    let mut adj = vec![Vec::new(); n];
    let mut edges = Vec::new();
    for i in 0..n {
        if !relays[i] {
            continue;
        }
        for j in i + 1..n {
            if relays[j] && distance(placement.positions[i], placement.positions[j]) <= comm_range_m
            {
                adj[i].push(j);
                adj[j].push(i);
                edges.push((i, j));
            }
        }
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for (i, a) in placement.assignments.iter().enumerate() {
        if a.role == Role::Computing {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    let reachable = placement
        .assignments
        .iter()
        .zip(&seen)
        .map(|(a, &s)| a.role == Role::Sensing && s)
        .collect();
    ConnectivityResult { reachable, edges }
}
