//! Backtracking subgraph matcher. Query atoms are placed rarest-first and
//! then grown along query bonds, so every placement after the first is drawn
//! from the neighbours of an already placed atom.

use std::collections::HashSet;

use super::Pattern;
use crate::molgraph::Molecule;

/// Target atom index for each query atom, in query-atom order.
pub type AtomMap = Vec<usize>;

struct Plan {
    order: Vec<usize>,
    /// Placed neighbour used to generate candidates (`None` for the first atom).
    anchor: Vec<Option<usize>>,
}

fn candidates(pattern: &Pattern, m: &Molecule) -> Vec<Vec<bool>> {
    pattern.atoms().iter().map(|q| (0..m.atom_count()).map(|t| q.expr.matches(m, t)).collect()).collect()
}

fn plan(pattern: &Pattern, counts: &[usize], root: Option<usize>) -> Plan {
    let n = pattern.atom_count();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut anchor = vec![None; n];
    let first = root.unwrap_or_else(|| (0..n).min_by_key(|&q| (counts[q], q)).unwrap());
    placed[first] = true;
    order.push(first);
    while order.len() < n {
        let mut best: Option<(usize, usize, usize)> = None;
        for q in (0..n).filter(|&q| !placed[q]) {
            if let Some(&(nb, _)) = pattern.neighbors(q).iter().find(|&&(nb, _)| placed[nb]) {
                let key = (counts[q], q, nb);
                if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                    best = Some(key);
                }
            }
        }
        let (_, q, nb) = best.expect("patterns are connected");
        placed[q] = true;
        anchor[q] = Some(nb);
        order.push(q);
    }
    Plan { order, anchor }
}

struct Search<'a> {
    pattern: &'a Pattern,
    m: &'a Molecule,
    cand: Vec<Vec<bool>>,
    plan: Plan,
    mapping: Vec<usize>,
    used: Vec<bool>,
    first_only: bool,
    found: Vec<AtomMap>,
}

impl<'a> Search<'a> {
    fn feasible(&self, q: usize, t: usize, depth: usize) -> bool {
        if self.used[t] || !self.cand[q][t] {
            return false;
        }
        for &(qn, qb) in self.pattern.neighbors(q) {
            if !self.plan.order[..depth].contains(&qn) {
                continue;
            }
            let tn = self.mapping[qn];
            match self.m.bond_between(t, tn) {
                Some(bond) if self.pattern.bonds()[qb].expr.matches(bond.order) => {}
                _ => return false,
            }
        }
        true
    }

    fn run(&mut self, depth: usize, roots: &[usize]) -> bool {
        if depth == self.plan.order.len() {
            self.found.push(self.mapping.clone());
            return self.first_only;
        }
        let q = self.plan.order[depth];
        let pool: Vec<usize> = match self.plan.anchor[q] {
            None => roots.to_vec(),
            Some(a) => self.m.neighbors(self.mapping[a]).iter().map(|&(nb, _)| nb).collect(),
        };
        for t in pool {
            if !self.feasible(q, t, depth) {
                continue;
            }
            self.mapping[q] = t;
            self.used[t] = true;
            let stop = self.run(depth + 1, roots);
            self.used[t] = false;
            if stop {
                return true;
            }
        }
        false
    }
}

fn search(pattern: &Pattern, m: &Molecule, root: Option<usize>, first_only: bool) -> Vec<AtomMap> {
    if pattern.atom_count() > m.atom_count() {
        return Vec::new();
    }
    let cand = candidates(pattern, m);
    let counts: Vec<usize> = cand.iter().map(|c| c.iter().filter(|&&b| b).count()).collect();
    if counts.contains(&0) {
        return Vec::new();
    }
    let plan = plan(pattern, &counts, root.map(|_| 0));
    let roots: Vec<usize> = match root {
        Some(t) => vec![t],
        None => (0..m.atom_count()).collect(),
    };
    let mut s = Search {
        pattern,
        m,
        cand,
        plan,
        mapping: vec![usize::MAX; pattern.atom_count()],
        used: vec![false; m.atom_count()],
        first_only,
        found: Vec::new(),
    };
    s.run(0, &roots);
    s.found
}

/// True if some embedding of `pattern` maps query atom 0 onto `atom`.
pub(crate) fn matches_rooted(pattern: &Pattern, m: &Molecule, atom: usize) -> bool {
    !search(pattern, m, Some(atom), true).is_empty()
}

pub fn has_substruct_match(m: &Molecule, p: &Pattern) -> bool {
    !search(p, m, None, true).is_empty()
}

/// All embeddings of `p` in `m`, ordered lexicographically by the canonical
/// ranks of the mapped atoms (query-atom order). The order does not depend on
/// the input atom order of `m`.
pub fn enumerate_matches(m: &Molecule, p: &Pattern) -> Vec<AtomMap> {
    let ranks = m.canonical_ranks();
    let mut found = search(p, m, None, false);
    found.sort_by_cached_key(|map| map.iter().map(|&t| ranks[t]).collect::<Vec<u32>>());
    found
}

/// Number of distinct target-atom sets covered by embeddings of `p`.
pub fn count_unique_matches(m: &Molecule, p: &Pattern) -> usize {
    search(p, m, None, false)
        .into_iter()
        .map(|mut map| {
            map.sort_unstable();
            map
        })
        .collect::<HashSet<_>>()
        .len()
}
