//! SMILES reader.
//!
//! Supports the organic subset, bracket atoms (isotope ignored, charge,
//! hydrogen count, atom class ignored), bonds `- = # :`, branches and ring
//! closures including `%nn`. Stereo markers (`/`, `\`, `@`) are accepted and
//! dropped.

use std::collections::BTreeMap;

use super::{organic_implicit_h, Atom, Bond, BondOrder, Element, MolError, Molecule};

struct RawAtom {
    element: Element,
    aromatic: bool,
    charge: i8,
    /// `Some` for bracket atoms.
    h: Option<u8>,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
}

fn syntax(pos: usize, msg: impl Into<String>) -> MolError {
    MolError::Syntax { pos, msg: msg.into() }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<u8> {
        self.text.get(self.pos + offset).copied()
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        std::str::from_utf8(&self.text[start..self.pos]).ok()?.parse().ok()
    }

    fn organic_atom(&mut self) -> Result<RawAtom, MolError> {
        let start = self.pos;
        let c = self.peek().unwrap();
        let two = |a: u8, b: u8| c == a && self.peek_at(1) == Some(b);
        let (symbol, aromatic, len) = if two(b'C', b'l') {
            ("Cl", false, 2)
        } else if two(b'B', b'r') {
            ("Br", false, 2)
        } else {
            match c {
                b'B' => ("B", false, 1),
                b'C' => ("C", false, 1),
                b'N' => ("N", false, 1),
                b'O' => ("O", false, 1),
                b'P' => ("P", false, 1),
                b'S' => ("S", false, 1),
                b'F' => ("F", false, 1),
                b'I' => ("I", false, 1),
                b'b' => ("B", true, 1),
                b'c' => ("C", true, 1),
                b'n' => ("N", true, 1),
                b'o' => ("O", true, 1),
                b'p' => ("P", true, 1),
                b's' => ("S", true, 1),
                _ => return Err(syntax(start, format!("unexpected character '{}'", c as char))),
            }
        };
        self.pos += len;
        Ok(RawAtom { element: Element::from_symbol(symbol).unwrap(), aromatic, charge: 0, h: None })
    }

    fn bracket_atom(&mut self) -> Result<RawAtom, MolError> {
        let open = self.pos;
        self.pos += 1;
        let _isotope = self.number();
        let start = self.pos;
        let rest = &self.text[self.pos..];
        let mut found = None;
        // Two-letter symbols first, then single letters; lowercase means aromatic.
        if rest.len() >= 2 {
            let cand = std::str::from_utf8(&rest[..2]).unwrap_or("");
            if rest[0].is_ascii_uppercase() {
                if let Some(e) = Element::from_symbol(cand) {
                    found = Some((e, false, 2));
                }
            } else if cand == "se" {
                found = Some((Element::from_symbol("Se").unwrap(), true, 2));
            }
        }
        if found.is_none() && !rest.is_empty() {
            let ch = rest[0];
            if ch.is_ascii_uppercase() {
                let s = (ch as char).to_string();
                if let Some(e) = Element::from_symbol(&s) {
                    found = Some((e, false, 1));
                }
            } else if ch.is_ascii_lowercase() {
                let s = (ch.to_ascii_uppercase() as char).to_string();
                if let Some(e) = Element::from_symbol(&s).filter(|e| e.can_be_aromatic()) {
                    found = Some((e, true, 1));
                }
            }
        }
        let Some((element, aromatic, len)) = found else {
            return Err(syntax(start, "unknown element in bracket atom"));
        };
        self.pos += len;

        // Chirality: '@', '@@', or '@TH1'-style classes.
        while self.peek() == Some(b'@') {
            self.pos += 1;
        }
        if self.peek().is_some_and(|c| c.is_ascii_uppercase())
            && self.peek_at(1).is_some_and(|c| c.is_ascii_uppercase())
        {
            let tag = &self.text[self.pos..self.pos + 2];
            if matches!(tag, b"TH" | b"AL" | b"SP" | b"TB" | b"OH") {
                self.pos += 2;
                self.number();
            }
        }

        let mut h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            h = self.number().map(|n| n as u8).unwrap_or(1);
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.number() {
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
        }
        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.number().is_none() {
                return Err(syntax(self.pos, "expected atom class number"));
            }
        }
        if self.peek() != Some(b']') {
            return Err(syntax(self.pos.min(self.text.len()), format!("unterminated bracket atom opened at {open}")));
        }
        self.pos += 1;
        if !(-8..=8).contains(&charge) {
            return Err(syntax(open, "charge out of range"));
        }
        Ok(RawAtom { element, aromatic, charge: charge as i8, h: Some(h) })
    }
}

/// Parses a SMILES string into a validated molecule.
pub fn parse_smiles(text: &str) -> Result<Molecule, MolError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(syntax(0, "empty SMILES"));
    }
    let mut p = Parser { text: text.as_bytes(), pos: 0 };
    let mut atoms: Vec<RawAtom> = Vec::new();
    let mut bonds: Vec<(usize, usize, Option<BondOrder>)> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut pending: Option<(BondOrder, usize)> = None;
    let mut branches: Vec<Option<usize>> = Vec::new();
    let mut open_rings: BTreeMap<u32, (usize, Option<BondOrder>, usize)> = BTreeMap::new();

    let add_bond = |bonds: &mut Vec<(usize, usize, Option<BondOrder>)>,
                    a: usize,
                    b: usize,
                    order: Option<BondOrder>,
                    pos: usize| {
        if a == b || bonds.iter().any(|&(x, y, _)| (x == a && y == b) || (x == b && y == a)) {
            return Err(syntax(pos, "duplicate or self bond"));
        }
        bonds.push((a, b, order));
        Ok(())
    };

    while let Some(c) = p.peek() {
        let here = p.pos;
        match c {
            b'(' => {
                if prev.is_none() || pending.is_some() {
                    return Err(syntax(here, "branch without a preceding atom"));
                }
                branches.push(prev);
                p.pos += 1;
            }
            b')' => {
                if pending.is_some() {
                    return Err(syntax(here, "bond symbol before ')'"));
                }
                prev = branches.pop().ok_or_else(|| syntax(here, "unbalanced ')'"))?;
                p.pos += 1;
            }
            b'.' => {
                if pending.is_some() {
                    return Err(syntax(here, "bond symbol before '.'"));
                }
                prev = None;
                p.pos += 1;
            }
            b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                if pending.is_some() {
                    return Err(syntax(here, "consecutive bond symbols"));
                }
                let order = match c {
                    b'=' => BondOrder::Double,
                    b'#' => BondOrder::Triple,
                    b':' => BondOrder::Aromatic,
                    _ => BondOrder::Single,
                };
                pending = Some((order, here));
                p.pos += 1;
            }
            b'0'..=b'9' | b'%' => {
                let digit = if c == b'%' {
                    p.pos += 1;
                    let (a, b) = (p.peek(), p.peek_at(1));
                    match (a, b) {
                        (Some(a @ b'0'..=b'9'), Some(b @ b'0'..=b'9')) => {
                            p.pos += 2;
                            ((a - b'0') * 10 + (b - b'0')) as u32
                        }
                        _ => return Err(syntax(here, "expected two digits after '%'")),
                    }
                } else {
                    p.pos += 1;
                    (c - b'0') as u32
                };
                let Some(atom) = prev else {
                    return Err(syntax(here, "ring closure without a preceding atom"));
                };
                let order = pending.take().map(|(o, _)| o);
                if let Some((other, other_order, _)) = open_rings.remove(&digit) {
                    let resolved = match (order, other_order) {
                        (Some(a), Some(b)) if a != b => {
                            return Err(syntax(here, "conflicting ring-closure bond orders"))
                        }
                        (Some(a), _) | (None, Some(a)) => Some(a),
                        (None, None) => None,
                    };
                    add_bond(&mut bonds, other, atom, resolved, here)?;
                } else {
                    open_rings.insert(digit, (atom, order, here));
                }
            }
            b'[' | b'A'..=b'Z' | b'a'..=b'z' => {
                let atom = if c == b'[' { p.bracket_atom()? } else { p.organic_atom()? };
                if atom.aromatic && !atom.element.can_be_aromatic() {
                    return Err(syntax(here, "element cannot be aromatic"));
                }
                let idx = atoms.len();
                atoms.push(atom);
                if let Some(prev_atom) = prev {
                    add_bond(&mut bonds, prev_atom, idx, pending.take().map(|(o, _)| o), here)?;
                } else if let Some((_, pos)) = pending {
                    return Err(syntax(pos, "bond symbol without a preceding atom"));
                }
                prev = Some(idx);
            }
            b'*' => return Err(syntax(here, "wildcard atoms are not supported in SMILES input")),
            _ => return Err(syntax(here, format!("unexpected character '{}'", c as char))),
        }
    }
    if let Some((_, pos)) = pending {
        return Err(syntax(pos, "dangling bond symbol"));
    }
    if !branches.is_empty() {
        return Err(syntax(text.len(), "unclosed branch"));
    }
    if let Some((&digit, _)) = open_rings.iter().next() {
        return Err(MolError::RingClosure { digit });
    }

    let bonds: Vec<Bond> = bonds
        .into_iter()
        .map(|(a, b, order)| {
            let order = order.unwrap_or(if atoms[a].aromatic && atoms[b].aromatic {
                BondOrder::Aromatic
            } else {
                BondOrder::Single
            });
            Bond::new(a, b, order)
        })
        .collect();

    let mut bond_sum = vec![0u8; atoms.len()];
    for b in &bonds {
        let v = b.order.valence_contribution();
        bond_sum[b.a] += v;
        bond_sum[b.b] += v;
    }
    let mut out_atoms = Vec::with_capacity(atoms.len());
    for (i, raw) in atoms.iter().enumerate() {
        let h = match raw.h {
            Some(h) => h,
            None => organic_implicit_h(raw.element, raw.aromatic, bond_sum[i]).ok_or_else(|| MolError::Valence {
                atom: i,
                element: raw.element.symbol().to_string(),
                valence: bond_sum[i],
                max: raw.element.max_valence(0),
            })?,
        };
        out_atoms.push(Atom {
            element: raw.element,
            charge: raw.charge,
            h_count: h,
            aromatic: raw.aromatic,
            in_ring: false,
        });
    }

    fold_explicit_hydrogens(out_atoms, bonds)
}

/// Turns neutral `[H]` atoms hanging off a single heavy atom into hydrogen
/// counts on that atom.
fn fold_explicit_hydrogens(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Molecule, MolError> {
    let mut degree = vec![0usize; atoms.len()];
    for b in &bonds {
        degree[b.a] += 1;
        degree[b.b] += 1;
    }
    let foldable: Vec<bool> = atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            a.element == Element::H
                && a.charge == 0
                && a.h_count == 0
                && degree[i] == 1
                && bonds.iter().any(|b| {
                    (b.a == i || b.b == i) && b.order == BondOrder::Single && atoms[b.other(i)].element != Element::H
                })
        })
        .collect();
    if !foldable.iter().any(|&f| f) {
        return Molecule::from_parts(atoms, bonds);
    }
    let mut atoms = atoms;
    for b in &bonds {
        if foldable[b.a] {
            atoms[b.b].h_count += 1;
        } else if foldable[b.b] {
            atoms[b.a].h_count += 1;
        }
    }
    let mut remap = vec![usize::MAX; atoms.len()];
    let mut kept = Vec::new();
    for (i, a) in atoms.into_iter().enumerate() {
        if !foldable[i] {
            remap[i] = kept.len();
            kept.push(a);
        }
    }
    let bonds = bonds
        .into_iter()
        .filter(|b| !foldable[b.a] && !foldable[b.b])
        .map(|b| Bond::new(remap[b.a], remap[b.b], b.order))
        .collect();
    Molecule::from_parts(kept, bonds)
}
