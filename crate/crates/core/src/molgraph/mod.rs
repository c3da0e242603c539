//! Molecular graphs: SMILES input/output, canonical forms, ring and
//! aromaticity perception, and simple descriptors.
//!
//! A [`Molecule`] is immutable once built. Every constructor funnels through
//! [`Molecule::from_parts`], which perceives rings and aromaticity and rejects
//! atoms whose valence is out of range, so a `Molecule` value is always a
//! valid state.

mod aromatic;
mod canon;
mod element;
mod rings;
mod smiles;

use std::fmt;
use std::sync::OnceLock;

use thiserror::Error;

pub use element::Element;
pub use smiles::parse_smiles;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MolError {
    #[error("SMILES syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("valence error on atom {atom} ({element}): valence {valence} exceeds {max}")]
    Valence { atom: usize, element: String, valence: u8, max: u8 },
    #[error("unmatched ring-closure bond {digit}")]
    RingClosure { digit: u32 },
    #[error("atom {atom} is marked aromatic but is not part of an aromatic ring")]
    Aromaticity { atom: usize },
    #[error("invalid bond between atoms {a} and {b}")]
    InvalidBond { a: usize, b: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the bond-order sum; aromatic bonds count one, with the
    /// remaining pi electron handled by the aromaticity model.
    pub fn valence_contribution(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub charge: i8,
    /// Total attached hydrogens.
    pub h_count: u8,
    pub aromatic: bool,
    pub in_ring: bool,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom { element, charge: 0, h_count: 0, aromatic: false, in_ring: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Self {
        Bond { a, b, order }
    }

    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RingInfo {
    pub ring_count: usize,
    pub aromatic_ring_count: usize,
    pub hetero_ring_count: usize,
    /// Smallest set of smallest rings, each as an ordered atom cycle.
    pub rings: Vec<Vec<usize>>,
    /// Parallel to `rings`.
    pub aromatic: Vec<bool>,
}

#[derive(Debug, Clone)]
struct Canonical {
    smiles: String,
    ranks: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    ring_info: RingInfo,
    atom_ring_count: Vec<u8>,
    bond_in_ring: Vec<bool>,
    canonical: OnceLock<Canonical>,
}

impl Molecule {
    /// Builds a molecule from atoms (with hydrogen counts already assigned)
    /// and bonds, perceiving rings and aromaticity and checking valences.
    pub fn from_parts(mut atoms: Vec<Atom>, mut bonds: Vec<Bond>) -> Result<Molecule, MolError> {
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        for (i, bond) in bonds.iter().enumerate() {
            if bond.a == bond.b || bond.a >= n || bond.b >= n {
                return Err(MolError::InvalidBond { a: bond.a, b: bond.b });
            }
            if adjacency[bond.a].iter().any(|&(nb, _)| nb == bond.b) {
                return Err(MolError::InvalidBond { a: bond.a, b: bond.b });
            }
            adjacency[bond.a].push((bond.b, i));
            adjacency[bond.b].push((bond.a, i));
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
        }

        let rings = rings::smallest_rings(n, &bonds, &adjacency);
        let mut atom_ring_count = vec![0u8; n];
        let mut bond_in_ring = vec![false; bonds.len()];
        for ring in &rings {
            for (k, &a) in ring.iter().enumerate() {
                atom_ring_count[a] = atom_ring_count[a].saturating_add(1);
                let b = ring[(k + 1) % ring.len()];
                let bi =
                    adjacency[a].iter().find(|&&(nb, _)| nb == b).map(|&(_, bi)| bi).expect("ring edges are bonds");
                bond_in_ring[bi] = true;
            }
        }
        for (atom, &count) in atoms.iter_mut().zip(&atom_ring_count) {
            atom.in_ring = count > 0;
        }

        let aromatic_rings = aromatic::perceive(&mut atoms, &mut bonds, &adjacency, &rings, &bond_in_ring)?;

        for (i, atom) in atoms.iter().enumerate() {
            let mut valence: u16 = atom.h_count as u16;
            for &(_, bi) in &adjacency[i] {
                valence += bonds[bi].order.valence_contribution() as u16;
            }
            if atom.aromatic && aromatic::pi_electrons_aromatic(atom, i, &bonds, &adjacency) == Some(1) {
                valence += 1;
            }
            let max = atom.element.max_valence(atom.charge);
            if valence > max as u16 {
                return Err(MolError::Valence {
                    atom: i,
                    element: atom.element.symbol().to_string(),
                    valence: valence.min(255) as u8,
                    max,
                });
            }
        }

        let hetero_ring_count = rings.iter().filter(|r| r.iter().any(|&a| !atoms[a].element.is_carbon())).count();
        let ring_info = RingInfo {
            ring_count: rings.len(),
            aromatic_ring_count: aromatic_rings.iter().filter(|&&a| a).count(),
            hetero_ring_count,
            rings,
            aromatic: aromatic_rings,
        };

        Ok(Molecule { atoms, bonds, adjacency, ring_info, atom_ring_count, bond_in_ring, canonical: OnceLock::new() })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element != Element::H).count()
    }

    /// Neighbours of `atom` as `(neighbour, bond index)`, sorted by neighbour.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    /// Heavy-atom degree plus attached hydrogens (SMARTS `X`).
    pub fn total_connections(&self, atom: usize) -> usize {
        self.adjacency[atom].len() + self.atoms[atom].h_count as usize
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a].iter().find(|&&(nb, _)| nb == b).map(|&(_, bi)| &self.bonds[bi])
    }

    pub fn bond_index(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a].iter().find(|&&(nb, _)| nb == b).map(|&(_, bi)| bi)
    }

    /// Number of smallest-set rings containing `atom`.
    pub fn atom_ring_count(&self, atom: usize) -> u8 {
        self.atom_ring_count[atom]
    }

    pub fn bond_in_ring(&self, bond: usize) -> bool {
        self.bond_in_ring[bond]
    }

    pub fn ring_info(&self) -> &RingInfo {
        &self.ring_info
    }

    pub fn bond_order_sum(&self, atom: usize) -> u8 {
        self.adjacency[atom].iter().map(|&(_, bi)| self.bonds[bi].order.valence_contribution()).sum()
    }

    fn canonical(&self) -> &Canonical {
        self.canonical.get_or_init(|| {
            let ranks = canon::canonical_ranks(self);
            let smiles = canon::write_smiles(self, &ranks);
            Canonical { smiles, ranks }
        })
    }

    /// Canonical SMILES; computed once and cached.
    pub fn canonical_smiles(&self) -> &str {
        &self.canonical().smiles
    }

    /// Canonical atom ranks, a permutation of `0..atom_count()`.
    pub fn canonical_ranks(&self) -> &[u32] {
        &self.canonical().ranks
    }

    /// Connected components as sorted atom lists, ordered by lowest atom index.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut i = 0;
            while i < comp.len() {
                let a = comp[i];
                for &(nb, _) in &self.adjacency[a] {
                    if !seen[nb] {
                        seen[nb] = true;
                        comp.push(nb);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Copy of the molecule restricted to atoms where `keep` is true and with
    /// the bonds in `cut` removed. Each severed bond is capped with hydrogens
    /// on the surviving atoms.
    pub fn fragment(&self, keep: &[bool], cut: &[usize]) -> Result<Molecule, MolError> {
        let mut new_index = vec![usize::MAX; self.atoms.len()];
        let mut atoms = Vec::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            if keep[i] {
                new_index[i] = atoms.len();
                atoms.push(atom.clone());
            }
        }
        let mut bonds = Vec::new();
        for (bi, bond) in self.bonds.iter().enumerate() {
            let (ka, kb) = (keep[bond.a], keep[bond.b]);
            if ka && kb && !cut.contains(&bi) {
                bonds.push(Bond::new(new_index[bond.a], new_index[bond.b], bond.order));
                continue;
            }
            let cap = bond.order.valence_contribution();
            if ka {
                atoms[new_index[bond.a]].h_count += cap;
            }
            if kb {
                atoms[new_index[bond.b]].h_count += cap;
            }
        }
        Molecule::from_parts(atoms, bonds)
    }
}

impl PartialEq for Molecule {
    /// Graph identity through canonical form.
    fn eq(&self, other: &Self) -> bool {
        self.canonical_smiles() == other.canonical_smiles()
    }
}

impl Eq for Molecule {}

impl fmt::Display for Molecule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_smiles())
    }
}

impl std::str::FromStr for Molecule {
    type Err = MolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_smiles(s)
    }
}

/// Canonical SMILES of `m`.
pub fn canonical_smiles(m: &Molecule) -> String {
    m.canonical_smiles().to_string()
}

pub fn perceive_rings(m: &Molecule) -> RingInfo {
    m.ring_info().clone()
}

/// Average molecular mass in daltons, implicit hydrogens included.
pub fn molecular_weight(m: &Molecule) -> f64 {
    m.atoms().iter().map(|a| a.element.mass() + a.h_count as f64 * Element::H.mass()).sum()
}

/// Implicit hydrogen count for an unbracketed organic-subset atom with the
/// given bond-order sum; `None` when no allowed valence accommodates it.
pub(crate) fn organic_implicit_h(element: Element, aromatic: bool, bond_sum: u8) -> Option<u8> {
    let valence = element.allowed_valences(0).into_iter().find(|&v| v >= bond_sum)?;
    if aromatic {
        Some(if valence > bond_sum { valence - bond_sum - 1 } else { 0 })
    } else {
        Some(valence - bond_sum)
    }
}

/// Reads a SMILES-per-line file body: blank lines and lines starting with
/// `#` are skipped, and anything after the first whitespace is ignored.
/// Returns `(line number, molecule)` pairs.
pub fn parse_smiles_lines(text: &str) -> Result<Vec<(usize, Molecule)>, (usize, MolError)> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let smiles = line.split_whitespace().next().unwrap_or(line);
        match parse_smiles(smiles) {
            Ok(m) => out.push((no + 1, m)),
            Err(e) => return Err((no + 1, e)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mol(s: &str) -> Molecule {
        parse_smiles(s).unwrap_or_else(|e| panic!("{s}: {e}"))
    }

    #[test]
    fn smiles_lines_keep_triple_bonds() {
        let got = parse_smiles_lines("# blocks\nCC#N nitrile\n\n  CCO\n").unwrap();
        let smiles: Vec<(usize, &str)> = got.iter().map(|(n, m)| (*n, m.canonical_smiles())).collect();
        assert_eq!(smiles, vec![(2, "CC#N"), (4, "CCO")]);
    }

    #[test]
    fn methane_has_four_implicit_hydrogens() {
        let m = mol("C");
        assert_eq!(m.atom_count(), 1);
        assert_eq!(m.atom(0).h_count, 4);
    }

    #[test]
    fn benzene_is_one_aromatic_ring() {
        let m = mol("c1ccccc1");
        assert_eq!(m.atom_count(), 6);
        assert!(m.atoms().iter().all(|a| a.aromatic && a.h_count == 1));
        let info = m.ring_info();
        assert_eq!((info.ring_count, info.aromatic_ring_count, info.hetero_ring_count), (1, 1, 0));
    }

    #[test]
    fn acetic_acid_atom_and_bond_table() {
        let m = mol("CC(=O)O");
        let table: Vec<(&str, u8)> = m.atoms().iter().map(|a| (a.element.symbol(), a.h_count)).collect();
        assert_eq!(table, vec![("C", 3), ("C", 0), ("O", 0), ("O", 1)]);
        let orders: Vec<_> = m.bonds().iter().map(|b| (b.a, b.b, b.order)).collect();
        assert_eq!(orders, vec![(0, 1, BondOrder::Single), (1, 2, BondOrder::Double), (1, 3, BondOrder::Single)]);
    }

    #[test]
    fn ring_examples() {
        let py = mol("c1ccncc1").ring_info().clone();
        assert_eq!((py.ring_count, py.aromatic_ring_count, py.hetero_ring_count), (1, 1, 1));
        let decalin = mol("C1CCC2CCCCC2C1").ring_info().clone();
        assert_eq!((decalin.ring_count, decalin.aromatic_ring_count), (2, 0));
    }

    #[test]
    fn weights() {
        assert!((molecular_weight(&mol("C")) - 16.04).abs() < 0.01);
        assert!((molecular_weight(&mol("O")) - 18.02).abs() < 0.01);
        assert!((molecular_weight(&mol("CCO")) - 46.07).abs() < 0.01);
    }

    #[test]
    fn weight_is_additive_over_components() {
        let a = molecular_weight(&mol("CCO"));
        let b = molecular_weight(&mol("c1ccccc1"));
        let ab = molecular_weight(&mol("CCO.c1ccccc1"));
        assert!((a + b - ab).abs() < 1e-9);
    }

    #[test]
    fn kekule_benzene_is_perceived_aromatic() {
        assert_eq!(mol("C1=CC=CC=C1").canonical_smiles(), mol("c1ccccc1").canonical_smiles());
    }

    #[test]
    fn canonical_order_invariance() {
        assert_eq!(mol("OCC").canonical_smiles(), mol("CCO").canonical_smiles());
        let c = mol("c1ccccc1C").canonical_smiles().to_string();
        assert_eq!(mol(&c).canonical_smiles(), c);
    }

    #[test]
    fn rejects_pentavalent_carbon() {
        assert!(matches!(parse_smiles("C(C)(C)(C)(C)C"), Err(MolError::Valence { .. })));
        assert!(matches!(parse_smiles("CC(=O)(=O)C"), Err(MolError::Valence { .. })));
        assert!(matches!(parse_smiles("[CH5]"), Err(MolError::Valence { .. })));
    }

    #[test]
    fn rejects_non_aromatic_lowercase_ring() {
        assert!(matches!(parse_smiles("c1cccc1"), Err(MolError::Aromaticity { .. })));
    }

    #[test]
    fn fragment_caps_cut_bonds_with_hydrogen() {
        let m = mol("CCO");
        let f = m.fragment(&[true, true, false], &[]).unwrap();
        assert_eq!(f.canonical_smiles(), "CC");
    }

    #[test]
    fn fused_and_heteroaromatics() {
        for s in [
            "c1ccc2ccccc2c1",
            "c1ccc2[nH]ccc2c1",
            "c1ccoc1",
            "c1ccsc1",
            "O=c1cc[nH]cc1",
            "c1ncc2[nH]cnc2n1",
            "Cn1cccc1",
            "c1nn[nH]n1",
            "C[n+]1ccccc1",
        ] {
            let m = mol(s);
            assert!(m.atoms().iter().filter(|a| a.in_ring).all(|a| a.aromatic), "{s}");
            let c = m.canonical_smiles().to_string();
            assert_eq!(mol(&c).canonical_smiles(), c, "{s}");
        }
    }
}
