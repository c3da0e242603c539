//! Smallest set of smallest rings via Horton candidate cycles and
//! GF(2) independence selection.

use std::collections::{HashSet, VecDeque};

use super::Bond;

struct EdgeSet {
    words: Vec<u64>,
}

impl EdgeSet {
    fn new(n_edges: usize) -> Self {
        EdgeSet { words: vec![0; n_edges.div_ceil(64).max(1)] }
    }

    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn xor(&mut self, other: &EdgeSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    fn lowest(&self) -> Option<usize> {
        self.words.iter().enumerate().find(|(_, w)| **w != 0).map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
    }
}

pub(super) fn smallest_rings(n: usize, bonds: &[Bond], adjacency: &[Vec<(usize, usize)>]) -> Vec<Vec<usize>> {
    // Strip acyclic branches: repeatedly remove degree-1 atoms.
    let mut degree: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
    let mut alive = vec![true; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| degree[i] <= 1).collect();
    while let Some(a) = queue.pop_front() {
        if !alive[a] {
            continue;
        }
        alive[a] = false;
        for &(nb, _) in &adjacency[a] {
            if alive[nb] {
                degree[nb] -= 1;
                if degree[nb] == 1 {
                    queue.push_back(nb);
                }
            }
        }
    }
    let core_edges: Vec<usize> = (0..bonds.len()).filter(|&i| alive[bonds[i].a] && alive[bonds[i].b]).collect();
    let core_atoms: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    if core_edges.is_empty() {
        return Vec::new();
    }

    // Cyclomatic number of the core graph.
    let components = count_components(&core_atoms, adjacency, &alive);
    let target = core_edges.len() + components - core_atoms.len();
    if target == 0 {
        return Vec::new();
    }

    let mut candidates: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    for &root in &core_atoms {
        let (dist, parent) = bfs(root, adjacency, &alive, n);
        for &ei in &core_edges {
            let (x, y) = (bonds[ei].a, bonds[ei].b);
            let (Some(dx), Some(dy)) = (dist[x], dist[y]) else {
                continue;
            };
            if dx.abs_diff(dy) > 1 {
                continue;
            }
            let px = path_to(root, x, &parent);
            let py = path_to(root, y, &parent);
            // Paths must share only the root, and the edge must not lie on either path.
            let sx: HashSet<usize> = px.iter().copied().collect();
            if py.iter().skip(1).any(|a| sx.contains(a)) {
                continue;
            }
            let mut cycle = px.clone();
            cycle.extend(py.iter().skip(1).rev());
            if cycle.len() < 3 {
                continue;
            }
            let mut edges = cycle_edges(&cycle, adjacency);
            edges.sort_unstable();
            if seen.insert(edges.clone()) {
                candidates.push((cycle, edges));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.1.cmp(&b.1)));

    let mut basis: Vec<(usize, EdgeSet)> = Vec::new();
    let mut rings = Vec::new();
    for (cycle, edges) in candidates {
        let mut v = EdgeSet::new(bonds.len());
        for &e in &edges {
            v.set(e);
        }
        for (pivot, row) in &basis {
            if v.get(*pivot) {
                v.xor(row);
            }
        }
        if let Some(pivot) = v.lowest() {
            basis.push((pivot, v));
            rings.push(cycle);
            if rings.len() == target {
                break;
            }
        }
    }
    rings
}

fn count_components(atoms: &[usize], adjacency: &[Vec<(usize, usize)>], alive: &[bool]) -> usize {
    let mut seen = vec![false; alive.len()];
    let mut count = 0;
    for &start in atoms {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(a) = stack.pop() {
            for &(nb, _) in &adjacency[a] {
                if alive[nb] && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }
    count
}

fn bfs(root: usize, adjacency: &[Vec<(usize, usize)>], alive: &[bool], n: usize) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut dist = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    dist[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(a) = queue.pop_front() {
        let d = dist[a].unwrap();
        for &(nb, _) in &adjacency[a] {
            if alive[nb] && dist[nb].is_none() {
                dist[nb] = Some(d + 1);
                parent[nb] = a;
                queue.push_back(nb);
            }
        }
    }
    (dist, parent)
}

fn path_to(root: usize, target: usize, parent: &[usize]) -> Vec<usize> {
    let mut path = vec![target];
    let mut cur = target;
    while cur != root {
        cur = parent[cur];
        path.push(cur);
    }
    path.reverse();
    path
}

fn cycle_edges(cycle: &[usize], adjacency: &[Vec<(usize, usize)>]) -> Vec<usize> {
    (0..cycle.len())
        .map(|k| {
            let (a, b) = (cycle[k], cycle[(k + 1) % cycle.len()]);
            adjacency[a]
                .iter()
                .find(|&&(nb, _)| nb == b)
                .map(|&(_, bi)| bi)
                .expect("consecutive cycle atoms are bonded")
        })
        .collect()
}
