//! Canonical atom ranking (iterative neighbourhood refinement with
//! deterministic tie breaking) and the SMILES writer that consumes it.

use std::collections::HashSet;

use super::{organic_implicit_h, BondOrder, Molecule};

type Signature = (u32, Vec<(u32, u8)>);

fn rank_by<T: Ord>(keys: &[T]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0u32; keys.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = if pos > 0 && keys[order[pos - 1]] == keys[i] { ranks[order[pos - 1]] } else { pos as u32 };
    }
    ranks
}

fn distinct(ranks: &[u32]) -> usize {
    ranks.iter().collect::<HashSet<_>>().len()
}

fn refine(m: &Molecule, mut ranks: Vec<u32>) -> Vec<u32> {
    let mut classes = distinct(&ranks);
    loop {
        let sigs: Vec<Signature> = (0..m.atom_count())
            .map(|i| {
                let mut nbrs: Vec<(u32, u8)> =
                    m.neighbors(i).iter().map(|&(nb, bi)| (ranks[nb], m.bonds()[bi].order.code())).collect();
                nbrs.sort_unstable();
                (ranks[i], nbrs)
            })
            .collect();
        let next = rank_by(&sigs);
        let next_classes = distinct(&next);
        ranks = next;
        if next_classes == classes {
            return ranks;
        }
        classes = next_classes;
    }
}

pub(super) fn canonical_ranks(m: &Molecule) -> Vec<u32> {
    let n = m.atom_count();
    let invariants: Vec<_> = m
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| (a.element.atomic_number(), a.charge, m.degree(i), a.h_count, a.aromatic, m.atom_ring_count(i)))
        .collect();
    let mut ranks = refine(m, rank_by(&invariants));
    while distinct(&ranks) < n {
        // Smallest tied class: keep the first member, push the others up one.
        let mut counts = vec![0usize; n];
        for &r in &ranks {
            counts[r as usize] += 1;
        }
        let tied = (0..n).find(|&r| counts[r] > 1).unwrap() as u32;
        let chosen = (0..n).find(|&i| ranks[i] == tied).unwrap();
        for (i, r) in ranks.iter_mut().enumerate() {
            if *r == tied && i != chosen {
                *r = tied + 1;
            }
        }
        ranks = refine(m, ranks);
    }
    ranks
}

fn atom_token(m: &Molecule, i: usize) -> String {
    let atom = m.atom(i);
    let symbol =
        if atom.aromatic { atom.element.symbol().to_ascii_lowercase() } else { atom.element.symbol().to_string() };
    if atom.element.in_organic_subset()
        && atom.charge == 0
        && (!atom.aromatic || matches!(symbol.as_str(), "b" | "c" | "n" | "o" | "p" | "s"))
        && organic_implicit_h(atom.element, atom.aromatic, m.bond_order_sum(i)) == Some(atom.h_count)
    {
        return symbol;
    }
    let mut s = format!("[{symbol}");
    match atom.h_count {
        0 => {}
        1 => s.push('H'),
        h => s.push_str(&format!("H{h}")),
    }
    match atom.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("+{c}")),
        c => s.push_str(&format!("-{}", -c)),
    }
    s.push(']');
    s
}

fn bond_token(m: &Molecule, bond: usize) -> &'static str {
    let b = &m.bonds()[bond];
    match b.order {
        BondOrder::Single if m.atom(b.a).aromatic && m.atom(b.b).aromatic => "-",
        BondOrder::Single | BondOrder::Aromatic => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

fn ring_label(d: u32) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d}")
    }
}

struct Writer<'a> {
    m: &'a Molecule,
    ranks: &'a [u32],
    visited: Vec<bool>,
    children: Vec<Vec<(usize, usize)>>,
    closures: Vec<Vec<usize>>,
    closure_seen: HashSet<usize>,
}

impl<'a> Writer<'a> {
    fn sorted_neighbors(&self, a: usize) -> Vec<(usize, usize)> {
        let mut nbrs = self.m.neighbors(a).to_vec();
        nbrs.sort_by_key(|&(nb, _)| self.ranks[nb]);
        nbrs
    }

    fn build_tree(&mut self, a: usize, parent_bond: Option<usize>) {
        self.visited[a] = true;
        for (nb, bi) in self.sorted_neighbors(a) {
            if Some(bi) == parent_bond {
                continue;
            }
            if self.visited[nb] {
                if self.closure_seen.insert(bi) {
                    self.closures[a].push(bi);
                    self.closures[nb].push(bi);
                }
            } else {
                self.children[a].push((nb, bi));
                self.build_tree(nb, Some(bi));
            }
        }
    }

    fn emit(&self, a: usize, out: &mut String, written: &mut [bool], open: &mut Vec<Option<usize>>) {
        written[a] = true;
        out.push_str(&atom_token(self.m, a));
        let mut closing = Vec::new();
        let mut opening = Vec::new();
        for &bi in &self.closures[a] {
            let other = self.m.bonds()[bi].other(a);
            if written[other] {
                let digit = open.iter().position(|&o| o == Some(bi)).unwrap();
                closing.push((digit, bi));
            } else {
                opening.push((self.ranks[other], bi));
            }
        }
        closing.sort_unstable();
        for (digit, bi) in closing {
            out.push_str(bond_token(self.m, bi));
            out.push_str(&ring_label(digit as u32 + 1));
            open[digit] = None;
        }
        opening.sort_unstable();
        for (_, bi) in opening {
            let digit = match open.iter().position(|o| o.is_none()) {
                Some(d) => {
                    open[d] = Some(bi);
                    d
                }
                None => {
                    open.push(Some(bi));
                    open.len() - 1
                }
            };
            out.push_str(&ring_label(digit as u32 + 1));
        }
        let kids = &self.children[a];
        for (k, &(child, bi)) in kids.iter().enumerate() {
            let last = k + 1 == kids.len();
            if !last {
                out.push('(');
            }
            out.push_str(bond_token(self.m, bi));
            self.emit(child, out, written, open);
            if !last {
                out.push(')');
            }
        }
    }
}

/// Writes SMILES for `m`, visiting atoms in `ranks` order.
pub(super) fn write_smiles(m: &Molecule, ranks: &[u32]) -> String {
    let n = m.atom_count();
    let mut w = Writer {
        m,
        ranks,
        visited: vec![false; n],
        children: vec![Vec::new(); n],
        closures: vec![Vec::new(); n],
        closure_seen: HashSet::new(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| ranks[i]);
    let mut written = vec![false; n];
    let mut parts = Vec::new();
    for start in order {
        if w.visited[start] {
            continue;
        }
        w.build_tree(start, None);
        let mut out = String::new();
        let mut open = Vec::new();
        w.emit(start, &mut out, &mut written, &mut open);
        parts.push(out);
    }
    parts.join(".")
}
