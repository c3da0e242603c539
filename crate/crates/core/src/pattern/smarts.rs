use std::collections::BTreeMap;

use super::{AtomExpr, AtomPrimitive, BondExpr, Pattern, PatternError, QueryAtom, QueryBond};
use crate::molgraph::Element;

fn syntax(pos: usize, msg: impl Into<String>) -> PatternError {
    PatternError::Syntax { pos, msg: msg.into() }
}

fn unsupported(pos: usize, token: impl Into<String>) -> PatternError {
    PatternError::Unsupported { pos, token: token.into() }
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    /// Byte offset of this text inside the outermost pattern, for error positions.
    base: usize,
    depth: u8,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn at(&self) -> usize {
        self.base + self.pos
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

    fn element_token(&mut self, in_bracket: bool) -> Option<AtomPrimitive> {
        let rest = &self.text[self.pos..];
        if rest.len() >= 2 && rest[0].is_ascii_uppercase() && rest[1].is_ascii_lowercase() {
            let sym = std::str::from_utf8(&rest[..2]).ok()?;
            let allowed = in_bracket || matches!(sym, "Cl" | "Br");
            if allowed {
                if let Some(e) = Element::from_symbol(sym) {
                    self.pos += 2;
                    return Some(AtomPrimitive::Element { element: e, aromatic: Some(false) });
                }
            }
        }
        if in_bracket && rest.starts_with(b"se") {
            self.pos += 2;
            return Some(AtomPrimitive::Element { element: Element::from_symbol("Se").unwrap(), aromatic: Some(true) });
        }
        let c = *rest.first()?;
        if c.is_ascii_uppercase() && c != b'H' && c != b'X' && c != b'D' && c != b'R' && c != b'A' {
            let e = Element::from_symbol(&(c as char).to_string())?;
            if !in_bracket && !e.in_organic_subset() {
                return None;
            }
            self.pos += 1;
            return Some(AtomPrimitive::Element { element: e, aromatic: Some(false) });
        }
        if matches!(c, b'b' | b'c' | b'n' | b'o' | b'p' | b's') {
            let e = Element::from_symbol(&(c.to_ascii_uppercase() as char).to_string())?;
            self.pos += 1;
            return Some(AtomPrimitive::Element { element: e, aromatic: Some(true) });
        }
        None
    }

    fn primitive(&mut self, first_in_bracket: bool) -> Result<AtomExpr, PatternError> {
        let start = self.at();
        let Some(c) = self.peek() else {
            return Err(syntax(start, "unexpected end of atom expression"));
        };
        let prim = match c {
            b'$' => {
                self.pos += 1;
                if self.peek() != Some(b'(') {
                    return Err(syntax(self.at(), "expected '(' after '$'"));
                }
                if self.depth >= 1 {
                    return Err(unsupported(start, "nested $()"));
                }
                let open = self.pos;
                let mut depth = 0i32;
                let mut close = None;
                for (i, &ch) in self.text[open..].iter().enumerate() {
                    match ch {
                        b'(' => depth += 1,
                        b')' => {
                            depth -= 1;
                            if depth == 0 {
                                close = Some(open + i);
                                break;
                            }
                        }
                        _ => {}
                    }
                }
                let close = close.ok_or_else(|| syntax(start, "unterminated $("))?;
                let inner = std::str::from_utf8(&self.text[open + 1..close]).unwrap();
                let pattern = parse_with(inner, self.base + open + 1, self.depth + 1)?;
                self.pos = close + 1;
                AtomPrimitive::Recursive(Box::new(pattern))
            }
            b'#' => {
                self.pos += 1;
                let n = self.number().ok_or_else(|| syntax(self.at(), "expected atomic number"))?;
                let e = u8::try_from(n)
                    .ok()
                    .and_then(Element::from_number)
                    .ok_or_else(|| unsupported(start, format!("#{n}")))?;
                AtomPrimitive::Element { element: e, aromatic: None }
            }
            b'*' => {
                self.pos += 1;
                AtomPrimitive::Any
            }
            b'a' => {
                self.pos += 1;
                AtomPrimitive::Aromatic
            }
            b'A' => {
                self.pos += 1;
                AtomPrimitive::Aliphatic
            }
            b'X' | b'D' | b'R' => {
                self.pos += 1;
                let n = self.number();
                match c {
                    b'X' => AtomPrimitive::TotalConnections(n.unwrap_or(1) as u8),
                    b'D' => AtomPrimitive::Degree(n.unwrap_or(1) as u8),
                    _ => match n {
                        None => AtomPrimitive::InRing,
                        Some(n) => AtomPrimitive::RingCount(n as u8),
                    },
                }
            }
            b'H' => {
                self.pos += 1;
                let n = self.number();
                if first_in_bracket && n.is_none() && matches!(self.peek(), Some(b']' | b'+' | b'-')) {
                    return Err(unsupported(start, "[H] hydrogen atom"));
                }
                AtomPrimitive::HydrogenCount(n.unwrap_or(1) as u8)
            }
            b'+' | b'-' => {
                let unit: i32 = if c == b'+' { 1 } else { -1 };
                self.pos += 1;
                let charge = if let Some(n) = self.number() {
                    unit * n as i32
                } else {
                    let mut total = unit;
                    while self.peek() == Some(c) {
                        self.pos += 1;
                        total += unit;
                    }
                    total
                };
                AtomPrimitive::Charge(charge as i8)
            }
            _ => match self.element_token(true) {
                Some(p) => p,
                None => {
                    let token = (c as char).to_string();
                    return Err(unsupported(start, token));
                }
            },
        };
        Ok(AtomExpr::Primitive(prim))
    }

    fn unary(&mut self, first: bool) -> Result<AtomExpr, PatternError> {
        if self.peek() == Some(b'!') {
            self.pos += 1;
            return Ok(AtomExpr::Not(Box::new(self.unary(false)?)));
        }
        self.primitive(first)
    }

    fn ends_term(&self) -> bool {
        matches!(self.peek(), None | Some(b';' | b',' | b']' | b':'))
    }

    fn and_high(&mut self, first: bool) -> Result<AtomExpr, PatternError> {
        let mut terms = vec![self.unary(first)?];
        loop {
            if self.peek() == Some(b'&') {
                self.pos += 1;
                terms.push(self.unary(false)?);
            } else if !self.ends_term() {
                terms.push(self.unary(false)?);
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { AtomExpr::And(terms) })
    }

    fn or(&mut self, first: bool) -> Result<AtomExpr, PatternError> {
        let mut terms = vec![self.and_high(first)?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            terms.push(self.and_high(false)?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { AtomExpr::Or(terms) })
    }

    fn and_low(&mut self) -> Result<AtomExpr, PatternError> {
        let mut terms = vec![self.or(true)?];
        while self.peek() == Some(b';') {
            self.pos += 1;
            terms.push(self.or(false)?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { AtomExpr::And(terms) })
    }

    fn bracket_atom(&mut self) -> Result<QueryAtom, PatternError> {
        let open = self.at();
        self.pos += 1;
        if self.peek() == Some(b']') {
            return Err(syntax(open, "empty bracket atom"));
        }
        let expr = self.and_low()?;
        let mut map = None;
        if self.peek() == Some(b':') {
            self.pos += 1;
            map = Some(self.number().ok_or_else(|| syntax(self.at(), "expected atom-map number"))?);
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(c) => return Err(unsupported(self.at(), (c as char).to_string())),
            None => return Err(syntax(open, "unterminated bracket atom")),
        }
        Ok(QueryAtom { expr, map })
    }

    fn bare_atom(&mut self) -> Result<QueryAtom, PatternError> {
        let start = self.at();
        let c = self.peek().unwrap();
        let prim = match c {
            b'*' => {
                self.pos += 1;
                AtomPrimitive::Any
            }
            b'a' => {
                self.pos += 1;
                AtomPrimitive::Aromatic
            }
            b'A' => {
                self.pos += 1;
                AtomPrimitive::Aliphatic
            }
            _ => self.element_token(false).ok_or_else(|| unsupported(start, (c as char).to_string()))?,
        };
        Ok(QueryAtom { expr: AtomExpr::Primitive(prim), map: None })
    }
}

/// Parses a SMARTS string within the supported subset.
pub fn parse_smarts(text: &str) -> Result<Pattern, PatternError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(syntax(0, "empty SMARTS"));
    }
    parse_with(trimmed, 0, 0)
}

fn parse_with(text: &str, base: usize, depth: u8) -> Result<Pattern, PatternError> {
    let mut p = Parser { text: text.as_bytes(), pos: 0, base, depth };
    let mut atoms: Vec<QueryAtom> = Vec::new();
    let mut bonds: Vec<QueryBond> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut pending: Option<BondExpr> = None;
    let mut branches: Vec<Option<usize>> = Vec::new();
    let mut open_rings: BTreeMap<u32, (usize, Option<BondExpr>)> = BTreeMap::new();

    while let Some(c) = p.peek() {
        let here = p.at();
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
                    return Err(syntax(here, "bond before ')'"));
                }
                prev = branches.pop().ok_or_else(|| syntax(here, "unbalanced ')'"))?;
                p.pos += 1;
            }
            b'.' => return Err(unsupported(here, ".")),
            b'-' | b'=' | b'#' | b':' | b'~' => {
                if pending.is_some() {
                    return Err(unsupported(here, "compound bond expression"));
                }
                pending = Some(match c {
                    b'-' => BondExpr::Single,
                    b'=' => BondExpr::Double,
                    b'#' => BondExpr::Triple,
                    b':' => BondExpr::Aromatic,
                    _ => BondExpr::Any,
                });
                p.pos += 1;
            }
            b'@' | b'/' | b'\\' | b'!' | b'&' | b',' | b';' => {
                return Err(unsupported(here, (c as char).to_string()));
            }
            b'0'..=b'9' | b'%' => {
                let digit = if c == b'%' {
                    p.pos += 1;
                    let start = p.pos;
                    let n = p.number().ok_or_else(|| syntax(here, "expected digits after '%'"))?;
                    if p.pos - start != 2 {
                        return Err(syntax(here, "expected two digits after '%'"));
                    }
                    n
                } else {
                    p.pos += 1;
                    (c - b'0') as u32
                };
                let atom = prev.ok_or_else(|| syntax(here, "ring closure without a preceding atom"))?;
                let order = pending.take();
                if let Some((other, other_order)) = open_rings.remove(&digit) {
                    let expr = match (order, other_order) {
                        (Some(a), Some(b)) if a != b => return Err(syntax(here, "conflicting ring-closure bonds")),
                        (Some(a), _) | (None, Some(a)) => a,
                        (None, None) => BondExpr::Implicit,
                    };
                    if other == atom {
                        return Err(syntax(here, "ring closure to the same atom"));
                    }
                    bonds.push(QueryBond { a: other, b: atom, expr });
                } else {
                    open_rings.insert(digit, (atom, order));
                }
            }
            _ => {
                let atom = if c == b'[' { p.bracket_atom()? } else { p.bare_atom()? };
                let idx = atoms.len();
                atoms.push(atom);
                if let Some(prev_atom) = prev {
                    bonds.push(QueryBond { a: prev_atom, b: idx, expr: pending.take().unwrap_or(BondExpr::Implicit) });
                } else if pending.is_some() {
                    return Err(syntax(here, "bond without a preceding atom"));
                }
                prev = Some(idx);
            }
        }
    }
    if pending.is_some() {
        return Err(syntax(base + text.len(), "dangling bond"));
    }
    if !branches.is_empty() {
        return Err(syntax(base + text.len(), "unclosed branch"));
    }
    if let Some((&digit, _)) = open_rings.iter().next() {
        return Err(syntax(base + text.len(), format!("unclosed ring bond {digit}")));
    }
    if atoms.is_empty() {
        return Err(syntax(base, "pattern has no atoms"));
    }
    let mut labels = std::collections::HashSet::new();
    for a in &atoms {
        if let Some(m) = a.map {
            if !labels.insert(m) {
                return Err(syntax(base, format!("duplicate atom map :{m}")));
            }
        }
    }
    Ok(Pattern::new(text.to_string(), atoms, bonds))
}
