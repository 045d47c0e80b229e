//! Strongly connected components over adjacency lists.
//!
//! Tarjan's algorithm, iterative so deep chains don't blow the stack.

/// SCC decomposition of a directed graph.
#[derive(Debug, Clone)]
pub struct Components {
    /// Component id of each node.
    pub component_of: Vec<usize>,
    /// Nodes of each component, ascending.
    pub members: Vec<Vec<usize>>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.members.len()
    }

    /// Whether each component is closed, i.e. has no edge leaving it in the
    /// condensation.
    pub fn closed(&self, adj: &[Vec<usize>]) -> Vec<bool> {
        let mut closed = vec![true; self.members.len()];
        for (u, targets) in adj.iter().enumerate() {
            let cu = self.component_of[u];
            if targets.iter().any(|&v| self.component_of[v] != cu) {
                closed[cu] = false;
            }
        }
        closed
    }
}

pub fn strongly_connected_components(adj: &[Vec<usize>]) -> Components {
    const UNVISITED: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNVISITED; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut component_of = vec![UNVISITED; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut next_index = 0usize;
    // (node, position in its adjacency list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        lowlink[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&(u, pos)) = call.last() {
            if let Some(&v) = adj[u].get(pos) {
                if let Some(top) = call.last_mut() {
                    top.1 += 1;
                }
                if index[v] == UNVISITED {
                    index[v] = next_index;
                    lowlink[v] = next_index;
                    next_index += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    call.push((v, 0));
                } else if on_stack[v] {
                    lowlink[u] = lowlink[u].min(index[v]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                lowlink[parent] = lowlink[parent].min(lowlink[u]);
            }
            if lowlink[u] == index[u] {
                let id = members.len();
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    component_of[w] = id;
                    comp.push(w);
                    if w == u {
                        break;
                    }
                }
                comp.sort_unstable();
                members.push(comp);
            }
        }
    }
    Components {
        component_of,
        members,
    }
}

pub fn is_strongly_connected(adj: &[Vec<usize>]) -> bool {
    !adj.is_empty() && strongly_connected_components(adj).count() == 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reach(adj: &[Vec<usize>], from: usize) -> Vec<bool> {
        let mut seen = vec![false; adj.len()];
        let mut todo = vec![from];
        seen[from] = true;
        while let Some(u) = todo.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    todo.push(v);
                }
            }
        }
        seen
    }

    #[test]
    fn small_graphs() {
        // 0 <-> 1 -> 2 <-> 3, 4 alone
        let adj = vec![vec![1], vec![0, 2], vec![3], vec![2], vec![]];
        let c = strongly_connected_components(&adj);
        assert_eq!(c.count(), 3);
        assert_eq!(c.component_of[0], c.component_of[1]);
        assert_eq!(c.component_of[2], c.component_of[3]);
        let closed = c.closed(&adj);
        assert!(!closed[c.component_of[0]]);
        assert!(closed[c.component_of[2]]);
        assert!(closed[c.component_of[4]]);
        assert!(!is_strongly_connected(&adj));
        assert!(is_strongly_connected(&[vec![0]]));
    }

    #[test]
    fn long_chain_does_not_overflow() {
        let n = 200_000;
        let adj: Vec<Vec<usize>> = (0..n).map(|i| vec![(i + 1) % n]).collect();
        assert!(is_strongly_connected(&adj));
    }

    proptest! {
        #[test]
        fn matches_mutual_reachability(edges in proptest::collection::vec((0usize..12, 0usize..12), 0..40)) {
            let mut adj = vec![Vec::new(); 12];
            for (a, b) in edges {
                adj[a].push(b);
            }
            let c = strongly_connected_components(&adj);
            let r: Vec<_> = (0..12).map(|u| reach(&adj, u)).collect();
            for (u, ru) in r.iter().enumerate() {
                for (v, rv) in r.iter().enumerate() {
                    prop_assert_eq!(c.component_of[u] == c.component_of[v], ru[v] && rv[u]);
                }
            }
        }
    }
}
