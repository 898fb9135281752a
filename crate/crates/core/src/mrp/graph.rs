//! Exact structural checks on the transition graph `i -> j iff P_ij > 0`.

use std::collections::VecDeque;

use super::MarkovRewardProcess;

fn bfs_levels(m: usize, mut edge: impl FnMut(usize, usize) -> bool) -> Vec<Option<usize>> {
    let mut level = vec![None; m];
    level[0] = Some(0);
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        let lu = level[u].unwrap_or(0);
        for v in 0..m {
            if level[v].is_none() && edge(u, v) {
                level[v] = Some(lu + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

/// Every state reaches every other state.
pub fn is_irreducible(mrp: &MarkovRewardProcess) -> bool {
    let m = mrp.num_states();
    let forward = bfs_levels(m, |u, v| mrp.prob(u, v) > 0.0);
    let backward = bfs_levels(m, |u, v| mrp.prob(v, u) > 0.0);
    forward.iter().all(Option::is_some) && backward.iter().all(Option::is_some)
}

/// Period of the communicating class of state 0: the gcd of
/// `level(u) + 1 - level(v)` over all edges `u -> v` inside that class.
pub fn period(mrp: &MarkovRewardProcess) -> usize {
    let m = mrp.num_states();
    let level = bfs_levels(m, |u, v| mrp.prob(u, v) > 0.0);
    let mut g = 0usize;
    for u in 0..m {
        let Some(lu) = level[u] else { continue };
        for v in mrp.successors(u) {
            let Some(lv) = level[v] else { continue };
            g = gcd(g, (lu + 1).abs_diff(lv));
        }
    }
    g
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
