//! SMARTS-subset queries and substructure matching.
//!
//! Supported: element symbols (aliphatic upper case, aromatic lower case),
//! `#n`, `*`, `a`, `A`, `X<n>`, `D<n>`, `H<n>`, charges, `R`, `R<n>`, the
//! logical operators `!`, `&`, `,`, `;`, one level of recursive `$(...)`,
//! bonds `- = # : ~`, branches, ring closures and `:n` atom maps inside
//! brackets. Anything else is rejected with [`PatternError::Unsupported`].

mod matcher;
mod smarts;

use thiserror::Error;

use crate::molgraph::{BondOrder, Element, Molecule};

pub use matcher::{count_unique_matches, enumerate_matches, has_substruct_match, AtomMap};
pub use smarts::parse_smarts;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatternError {
    #[error("SMARTS syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unsupported SMARTS feature '{token}' at byte {pos}")]
    Unsupported { pos: usize, token: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum AtomPrimitive {
    /// `aromatic` is `None` for `#n`, `Some(false)` for `C`, `Some(true)` for `c`.
    Element {
        element: Element,
        aromatic: Option<bool>,
    },
    Any,
    Aromatic,
    Aliphatic,
    TotalConnections(u8),
    Degree(u8),
    HydrogenCount(u8),
    Charge(i8),
    /// `R` with no count: any ring membership.
    InRing,
    /// `R<n>`: member of exactly `n` smallest rings (`R0` = acyclic).
    RingCount(u8),
    Recursive(Box<Pattern>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AtomExpr {
    Primitive(AtomPrimitive),
    Not(Box<AtomExpr>),
    And(Vec<AtomExpr>),
    Or(Vec<AtomExpr>),
}

impl AtomExpr {
    /// Evaluates the expression on `atom`, delegating recursive environments
    /// to `recursive(pattern, atom)`.
    pub fn eval_with(&self, m: &Molecule, atom: usize, recursive: &mut dyn FnMut(&Pattern, usize) -> bool) -> bool {
        match self {
            AtomExpr::Primitive(p) => eval_primitive(p, m, atom, recursive),
            AtomExpr::Not(e) => !e.eval_with(m, atom, recursive),
            AtomExpr::And(es) => es.iter().all(|e| e.eval_with(m, atom, recursive)),
            AtomExpr::Or(es) => es.iter().any(|e| e.eval_with(m, atom, recursive)),
        }
    }

    pub fn matches(&self, m: &Molecule, atom: usize) -> bool {
        self.eval_with(m, atom, &mut |p, a| matcher::matches_rooted(p, m, a))
    }

    fn conjuncts(&self) -> Vec<&AtomPrimitive> {
        match self {
            AtomExpr::Primitive(p) => vec![p],
            AtomExpr::And(es) => es.iter().flat_map(|e| e.conjuncts()).collect(),
            _ => Vec::new(),
        }
    }

    /// Element fixed by a top-level conjunct, with its aromatic flag if the
    /// spelling carried one.
    pub fn definite_element(&self) -> Option<(Element, Option<bool>)> {
        self.conjuncts().into_iter().find_map(|p| match p {
            AtomPrimitive::Element { element, aromatic } => Some((*element, *aromatic)),
            _ => None,
        })
    }

    pub fn explicit_charge(&self) -> Option<i8> {
        self.conjuncts().into_iter().find_map(|p| match p {
            AtomPrimitive::Charge(c) => Some(*c),
            _ => None,
        })
    }

    pub fn explicit_h(&self) -> Option<u8> {
        self.conjuncts().into_iter().find_map(|p| match p {
            AtomPrimitive::HydrogenCount(h) => Some(*h),
            _ => None,
        })
    }
}

fn eval_primitive(
    p: &AtomPrimitive,
    m: &Molecule,
    atom: usize,
    recursive: &mut dyn FnMut(&Pattern, usize) -> bool,
) -> bool {
    let a = m.atom(atom);
    match p {
        AtomPrimitive::Element { element, aromatic } => {
            a.element == *element && aromatic.is_none_or(|ar| ar == a.aromatic)
        }
        AtomPrimitive::Any => true,
        AtomPrimitive::Aromatic => a.aromatic,
        AtomPrimitive::Aliphatic => !a.aromatic,
        AtomPrimitive::TotalConnections(n) => m.total_connections(atom) == *n as usize,
        AtomPrimitive::Degree(n) => m.degree(atom) == *n as usize,
        AtomPrimitive::HydrogenCount(n) => a.h_count == *n,
        AtomPrimitive::Charge(c) => a.charge == *c,
        AtomPrimitive::InRing => a.in_ring,
        AtomPrimitive::RingCount(n) => m.atom_ring_count(atom) == *n,
        AtomPrimitive::Recursive(pattern) => recursive(pattern, atom),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondExpr {
    Single,
    Double,
    Triple,
    Aromatic,
    Any,
    /// Unwritten bond: single or aromatic.
    Implicit,
}

impl BondExpr {
    pub fn matches(self, order: BondOrder) -> bool {
        match self {
            BondExpr::Single => order == BondOrder::Single,
            BondExpr::Double => order == BondOrder::Double,
            BondExpr::Triple => order == BondOrder::Triple,
            BondExpr::Aromatic => order == BondOrder::Aromatic,
            BondExpr::Any => true,
            BondExpr::Implicit => matches!(order, BondOrder::Single | BondOrder::Aromatic),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryAtom {
    pub expr: AtomExpr,
    pub map: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryBond {
    pub a: usize,
    pub b: usize,
    pub expr: BondExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    text: String,
    atoms: Vec<QueryAtom>,
    bonds: Vec<QueryBond>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Pattern {
    pub(crate) fn new(text: String, atoms: Vec<QueryAtom>, bonds: Vec<QueryBond>) -> Self {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (i, b) in bonds.iter().enumerate() {
            adjacency[b.a].push((b.b, i));
            adjacency[b.b].push((b.a, i));
        }
        Pattern { text, atoms, bonds, adjacency }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn atoms(&self) -> &[QueryAtom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[QueryBond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn neighbors(&self, q: usize) -> &[(usize, usize)] {
        &self.adjacency[q]
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&QueryBond> {
        self.adjacency[a].iter().find(|&&(nb, _)| nb == b).map(|&(_, bi)| &self.bonds[bi])
    }

    /// Query atom index carrying atom-map label `label`.
    pub fn atom_with_map(&self, label: u32) -> Option<usize> {
        self.atoms.iter().position(|a| a.map == Some(label))
    }
}

impl std::str::FromStr for Pattern {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_smarts(s)
    }
}
