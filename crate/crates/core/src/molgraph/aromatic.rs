//! Hückel aromaticity over smallest rings, with a fused-pair fallback for
//! ring systems (azulene-like) whose individual rings fail the 4n+2 test.

use super::{Atom, Bond, BondOrder, Element, MolError};

fn is_chalcogen(e: Element) -> bool {
    matches!(e.atomic_number(), 8 | 16 | 34)
}

fn is_pnictogen(e: Element) -> bool {
    matches!(e.atomic_number(), 7 | 15)
}

struct BondContext {
    has_aromatic: bool,
    ring_double: bool,
    exo_double_hetero: bool,
    exo_double_other: bool,
    triple: bool,
    any_double: bool,
}

fn context(
    atom: usize,
    atoms: &[Atom],
    bonds: &[Bond],
    adjacency: &[Vec<(usize, usize)>],
    bond_in_ring: Option<&[bool]>,
) -> BondContext {
    let mut ctx = BondContext {
        has_aromatic: false,
        ring_double: false,
        exo_double_hetero: false,
        exo_double_other: false,
        triple: false,
        any_double: false,
    };
    for &(nb, bi) in &adjacency[atom] {
        match bonds[bi].order {
            BondOrder::Aromatic => ctx.has_aromatic = true,
            BondOrder::Triple => ctx.triple = true,
            BondOrder::Double => {
                ctx.any_double = true;
                let in_ring = bond_in_ring.map(|r| r[bi]).unwrap_or(false);
                if in_ring {
                    ctx.ring_double = true;
                } else if is_chalcogen(atoms[nb].element) || atoms[nb].element == Element::N {
                    ctx.exo_double_hetero = true;
                } else {
                    ctx.exo_double_other = true;
                }
            }
            BondOrder::Single => {}
        }
    }
    ctx
}

/// Pi electrons donated by an atom written in aromatic form.
fn aromatic_form_electrons(atom: &Atom, conns: usize, ctx: &BondContext) -> Option<u8> {
    let e = atom.element;
    if ctx.triple {
        return None;
    }
    if e == Element::C {
        if ctx.exo_double_hetero {
            return Some(0);
        }
        if ctx.exo_double_other {
            return None;
        }
        return match atom.charge {
            0 => Some(1),
            -1 => Some(2),
            1 => Some(0),
            _ => None,
        };
    }
    if is_pnictogen(e) {
        return match (atom.charge, conns) {
            (0, 2) => Some(1),
            (0, 3) if ctx.exo_double_hetero => Some(1),
            (0, 3) => Some(2),
            (1, _) => Some(1),
            (-1, 2) => Some(2),
            _ => None,
        };
    }
    if is_chalcogen(e) {
        return match (atom.charge, conns) {
            (0, 2) => Some(2),
            (1, _) => Some(1),
            _ => None,
        };
    }
    if e == Element::B && atom.charge == 0 {
        return Some(0);
    }
    None
}

/// Pi electrons donated by an atom in a Kekulé structure.
fn kekule_electrons(atom: &Atom, conns: usize, ctx: &BondContext) -> Option<u8> {
    let e = atom.element;
    if ctx.triple {
        return None;
    }
    if ctx.ring_double {
        return if e == Element::C || is_pnictogen(e) || is_chalcogen(e) || e == Element::B { Some(1) } else { None };
    }
    if e == Element::C {
        if ctx.exo_double_hetero {
            return Some(0);
        }
        if ctx.exo_double_other {
            return None;
        }
        return match atom.charge {
            -1 => Some(2),
            1 => Some(0),
            _ => None,
        };
    }
    if ctx.any_double {
        return None;
    }
    if is_pnictogen(e) {
        return match (atom.charge, conns) {
            (0, 3) => Some(2),
            (-1, 2) => Some(2),
            _ => None,
        };
    }
    if is_chalcogen(e) {
        return match (atom.charge, conns) {
            (0, 2) => Some(2),
            _ => None,
        };
    }
    if e == Element::B && atom.charge == 0 && conns == 3 {
        return Some(0);
    }
    None
}

/// Electrons contributed by an already-aromatic atom; used by the valence
/// check, where a one-electron donor carries an extra unit of valence.
pub(super) fn pi_electrons_aromatic(
    atom: &Atom,
    index: usize,
    bonds: &[Bond],
    adjacency: &[Vec<(usize, usize)>],
) -> Option<u8> {
    let conns = adjacency[index].len() + atom.h_count as usize;
    let mut ctx = BondContext {
        has_aromatic: true,
        ring_double: false,
        exo_double_hetero: false,
        exo_double_other: false,
        triple: false,
        any_double: false,
    };
    for &(_, bi) in &adjacency[index] {
        match bonds[bi].order {
            BondOrder::Double => {
                // Doubles on aromatic atoms are exocyclic after perception.
                ctx.exo_double_hetero = true;
            }
            BondOrder::Triple => ctx.triple = true,
            _ => {}
        }
    }
    aromatic_form_electrons(atom, conns, &ctx)
}

/// Perceives aromatic rings, rewriting atom flags and ring bond orders.
/// Returns a flag per ring.
pub(super) fn perceive(
    atoms: &mut [Atom],
    bonds: &mut [Bond],
    adjacency: &[Vec<(usize, usize)>],
    rings: &[Vec<usize>],
    bond_in_ring: &[bool],
) -> Result<Vec<bool>, MolError> {
    let electrons: Vec<Option<u8>> = (0..atoms.len())
        .map(|i| {
            if !atoms[i].in_ring {
                return None;
            }
            let ctx = context(i, atoms, bonds, adjacency, Some(bond_in_ring));
            let conns = adjacency[i].len() + atoms[i].h_count as usize;
            if ctx.has_aromatic || atoms[i].aromatic {
                aromatic_form_electrons(&atoms[i], conns, &ctx)
            } else {
                kekule_electrons(&atoms[i], conns, &ctx)
            }
        })
        .collect();

    let candidate: Vec<bool> = rings.iter().map(|r| r.iter().all(|&a| electrons[a].is_some())).collect();
    let huckel = |atom_set: &[usize]| {
        let total: u32 = atom_set.iter().map(|&a| electrons[a].unwrap() as u32).sum();
        total % 4 == 2
    };
    let mut aromatic_ring: Vec<bool> = rings.iter().zip(&candidate).map(|(r, &c)| c && huckel(r)).collect();

    for i in 0..rings.len() {
        if !candidate[i] || aromatic_ring[i] {
            continue;
        }
        for j in 0..rings.len() {
            if i == j || !candidate[j] {
                continue;
            }
            let shared = rings[i].iter().filter(|a| rings[j].contains(a)).count();
            if shared < 2 {
                continue;
            }
            let mut union: Vec<usize> = rings[i].iter().chain(&rings[j]).copied().collect();
            union.sort_unstable();
            union.dedup();
            if huckel(&union) {
                aromatic_ring[i] = true;
                aromatic_ring[j] = true;
            }
        }
    }

    let mut atom_flag = vec![false; atoms.len()];
    let mut bond_flag = vec![false; bonds.len()];
    for (ring, _) in rings.iter().zip(&aromatic_ring).filter(|(_, &a)| a) {
        for (k, &a) in ring.iter().enumerate() {
            atom_flag[a] = true;
            let b = ring[(k + 1) % ring.len()];
            let bi = adjacency[a].iter().find(|&&(nb, _)| nb == b).unwrap().1;
            bond_flag[bi] = true;
        }
    }

    for (i, atom) in atoms.iter_mut().enumerate() {
        if atom.aromatic && !atom_flag[i] {
            return Err(MolError::Aromaticity { atom: i });
        }
        atom.aromatic = atom_flag[i];
    }
    for (bi, bond) in bonds.iter_mut().enumerate() {
        if bond_flag[bi] {
            bond.order = BondOrder::Aromatic;
        } else if bond.order == BondOrder::Aromatic {
            if bond_in_ring[bi] {
                return Err(MolError::Aromaticity { atom: bond.a });
            }
            // Implicit bond between two aromatic atoms of different rings (biaryl).
            bond.order = BondOrder::Single;
        }
    }
    Ok(aromatic_ring)
}
