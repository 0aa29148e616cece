//! Index-based graph helpers shared by the workflow and quotient layers.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Kahn's algorithm over vertices `0..n`, always emitting the smallest ready
/// index first. On failure returns one cycle, as a vertex sequence whose last
/// element has an edge back to the first.
pub fn topo_sort<'a, F>(n: usize, succ: F) -> Result<Vec<usize>, Vec<usize>>
where
    F: Fn(usize) -> &'a [usize],
{
    let mut indeg = vec![0usize; n];
    for u in 0..n {
        for &v in succ(u) {
            indeg[v] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&u| indeg[u] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(u)) = ready.pop() {
        order.push(u);
        for &v in succ(u) {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                ready.push(Reverse(v));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    let comps = strongly_connected_components(n, &succ);
    let comp = comps
        .into_iter()
        .find(|c| c.len() > 1 || succ(c[0]).contains(&c[0]))
        .expect("incomplete topological order implies a cycle");
    Err(cycle_in_component(&comp, &succ))
}

/// Tarjan's SCC algorithm, iterative. Components are returned with members
/// sorted ascending, ordered by their smallest member.
pub fn strongly_connected_components<'a, F>(n: usize, succ: &F) -> Vec<Vec<usize>>
where
    F: Fn(usize) -> &'a [usize],
{
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0usize;

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (vertex, next successor position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (u, ref mut pos)) = call.last_mut() {
            let out = succ(u);
            if *pos < out.len() {
                let v = out[*pos];
                *pos += 1;
                if index[v] == UNSEEN {
                    index[v] = next;
                    low[v] = next;
                    next += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    call.push((v, 0));
                } else if on_stack[v] {
                    low[u] = low[u].min(index[v]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[u]);
                }
                if low[u] == index[u] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == u {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps.sort_by_key(|c| c[0]);
    comps
}

/// Walks successors inside a strongly connected component until a vertex
/// repeats, and returns the closed walk as a simple cycle.
pub fn cycle_in_component<'a, F>(comp: &[usize], succ: &F) -> Vec<usize>
where
    F: Fn(usize) -> &'a [usize],
{
    let mut path = vec![comp[0]];
    loop {
        let u = *path.last().unwrap();
        let v = succ(u)
            .iter()
            .copied()
            .filter(|v| comp.binary_search(v).is_ok())
            .min()
            .expect("every vertex of a cyclic component has a successor inside it");
        if let Some(start) = path.iter().position(|&w| w == v) {
            return path.split_off(start);
        }
        path.push(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topo_prefers_small_indices() {
        let adj: Vec<Vec<usize>> = vec![vec![2, 1], vec![3], vec![3], vec![]];
        assert_eq!(topo_sort(4, |u| &adj[u]).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn topo_reports_cycle() {
        let adj: Vec<Vec<usize>> = vec![vec![1], vec![2], vec![1], vec![]];
        assert_eq!(topo_sort(4, |u| &adj[u]).unwrap_err(), vec![1, 2]);
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let adj: Vec<Vec<usize>> = vec![vec![0]];
        assert_eq!(topo_sort(1, |u| &adj[u]).unwrap_err(), vec![0]);
    }

    #[test]
    fn scc_groups() {
        let adj: Vec<Vec<usize>> = vec![vec![1], vec![0, 2], vec![3], vec![2], vec![]];
        let comps = strongly_connected_components(5, &|u| &adj[u][..]);
        assert_eq!(comps, vec![vec![0, 1], vec![2, 3], vec![4]]);
    }
}
