//! Template application.
//!
//! Semantics follow the usual mapped-template conventions:
//! matched atoms without a product-side label are deleted, atoms reachable
//! from surviving mapped atoms are carried over, bonds between two mapped
//! atoms that the reactant pattern spells out are rewritten by the product
//! pattern, and hydrogen counts absorb the change in bond order.

use std::collections::{BTreeMap, HashMap};

use super::{ReactionError, ReactionTemplate};
use crate::molgraph::{parse_smiles, Atom, Bond, BondOrder, Element, Molecule};
use crate::pattern::{enumerate_matches, AtomExpr, AtomMap, AtomPrimitive, BondExpr, Pattern};

/// Embedding combinations tried before giving up.
pub const MAX_COMBINATIONS: usize = 1000;

#[derive(Debug, Clone, Copy)]
enum Source {
    Mapped { slot: usize, query: usize },
    New { element: Element },
}

#[derive(Debug, Clone)]
pub(super) struct ProductPlan {
    product: Pattern,
    sources: Vec<Source>,
}

fn spelled_aromatic(e: &AtomExpr) -> bool {
    match e {
        AtomExpr::Primitive(AtomPrimitive::Element { aromatic: Some(true), .. })
        | AtomExpr::Primitive(AtomPrimitive::Aromatic) => true,
        AtomExpr::And(es) => es.iter().any(spelled_aromatic),
        _ => false,
    }
}

impl ProductPlan {
    pub(super) fn new(reactants: &[Pattern], product: Pattern) -> Result<Self, String> {
        let mut labels: HashMap<u32, (usize, usize)> = HashMap::new();
        for (slot, p) in reactants.iter().enumerate() {
            for (q, atom) in p.atoms().iter().enumerate() {
                if let Some(l) = atom.map {
                    if labels.insert(l, (slot, q)).is_some() {
                        return Err(format!("map label {l} used twice on the reactant side"));
                    }
                }
            }
        }
        let mut sources = Vec::with_capacity(product.atom_count());
        for (i, atom) in product.atoms().iter().enumerate() {
            match atom.map.and_then(|l| labels.get(&l)) {
                Some(&(slot, query)) => sources.push(Source::Mapped { slot, query }),
                None => match atom.expr.definite_element() {
                    Some((element, _)) => sources.push(Source::New { element }),
                    None => return Err(format!("product atom {i} is new but has no definite element")),
                },
            }
        }
        if product.bonds().iter().any(|b| b.expr == BondExpr::Any) {
            return Err("product bonds must have a definite order".into());
        }
        Ok(ProductPlan { product, sources })
    }
}

/// Hydrogens completing the lowest allowed valence that fits `bond_sum`.
fn default_h(element: Element, charge: i8, aromatic: bool, bond_sum: u8) -> Option<u8> {
    let v = element.allowed_valences(charge).into_iter().find(|&v| v >= bond_sum)?;
    Some(if aromatic { v.saturating_sub(bond_sum + 1) } else { v - bond_sum })
}

struct Combination<'a> {
    reactants: &'a [&'a Molecule],
    embeddings: Vec<&'a AtomMap>,
    offsets: Vec<usize>,
}

impl Combination<'_> {
    fn global(&self, slot: usize, local: usize) -> usize {
        self.offsets[slot] + local
    }

    fn locate(&self, g: usize) -> (usize, usize) {
        let slot = self.offsets.partition_point(|&o| o <= g) - 1;
        (slot, g - self.offsets[slot])
    }
}

fn build(plan: &ProductPlan, patterns: &[Pattern], c: &Combination) -> Option<Molecule> {
    let total = *c.offsets.last().unwrap();
    // Role of each matched reactant atom: the query atom it fills.
    let mut query_of: Vec<Option<usize>> = vec![None; total];
    for (slot, emb) in c.embeddings.iter().enumerate() {
        for (q, &t) in emb.iter().enumerate() {
            query_of[c.global(slot, t)] = Some(q);
        }
    }
    // Product atom index for surviving mapped reactant atoms.
    let mut product_of: Vec<Option<usize>> = vec![None; total];
    for (p, src) in plan.sources.iter().enumerate() {
        if let Source::Mapped { slot, query } = *src {
            product_of[c.global(slot, c.embeddings[slot][query])] = Some(p);
        }
    }
    let deleted = |g: usize| query_of[g].is_some() && product_of[g].is_none();

    // Carry over everything reachable from a surviving mapped atom.
    let mut keep = vec![false; total];
    let mut stack: Vec<usize> = (0..total).filter(|&g| product_of[g].is_some()).collect();
    for &g in &stack {
        keep[g] = true;
    }
    while let Some(g) = stack.pop() {
        let (slot, local) = c.locate(g);
        for &(nb, _) in c.reactants[slot].neighbors(local) {
            let gn = c.global(slot, nb);
            if !keep[gn] && !deleted(gn) {
                keep[gn] = true;
                stack.push(gn);
            }
        }
    }

    let mut out_index = vec![usize::MAX; total];
    let mut atoms: Vec<Atom> = Vec::new();
    for g in (0..total).filter(|&g| keep[g]) {
        let (slot, local) = c.locate(g);
        out_index[g] = atoms.len();
        atoms.push(c.reactants[slot].atom(local).clone());
    }
    let mut product_out = vec![usize::MAX; plan.sources.len()];
    for (p, src) in plan.sources.iter().enumerate() {
        product_out[p] = match *src {
            Source::Mapped { slot, query } => out_index[c.global(slot, c.embeddings[slot][query])],
            Source::New { element } => {
                let mut a = Atom::new(element);
                a.aromatic = spelled_aromatic(&plan.product.atoms()[p].expr);
                atoms.push(a);
                atoms.len() - 1
            }
        };
    }

    let mut bonds: BTreeMap<(usize, usize), BondOrder> = BTreeMap::new();
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    for (slot, m) in c.reactants.iter().enumerate() {
        for bond in m.bonds() {
            let (ga, gb) = (c.global(slot, bond.a), c.global(slot, bond.b));
            if !keep[ga] || !keep[gb] {
                continue;
            }
            let rewritten = product_of[ga].is_some()
                && product_of[gb].is_some()
                && patterns[slot].bond_between(query_of[ga].unwrap(), query_of[gb].unwrap()).is_some();
            if !rewritten {
                bonds.insert(key(out_index[ga], out_index[gb]), bond.order);
            }
        }
    }
    for qb in plan.product.bonds() {
        let (oa, ob) = (product_out[qb.a], product_out[qb.b]);
        let order = match qb.expr {
            BondExpr::Single => BondOrder::Single,
            BondExpr::Double => BondOrder::Double,
            BondExpr::Triple => BondOrder::Triple,
            BondExpr::Aromatic => BondOrder::Aromatic,
            BondExpr::Implicit => {
                let original = match (plan.sources[qb.a], plan.sources[qb.b]) {
                    (Source::Mapped { slot: sa, query: qa }, Source::Mapped { slot: sb, query: qbq }) if sa == sb => {
                        c.reactants[sa].bond_between(c.embeddings[sa][qa], c.embeddings[sb][qbq]).map(|b| b.order)
                    }
                    _ => None,
                };
                original.unwrap_or(
                    if spelled_aromatic(&plan.product.atoms()[qb.a].expr)
                        && spelled_aromatic(&plan.product.atoms()[qb.b].expr)
                    {
                        BondOrder::Aromatic
                    } else {
                        BondOrder::Single
                    },
                )
            }
            BondExpr::Any => unreachable!("rejected when the plan is built"),
        };
        bonds.insert(key(oa, ob), order);
    }

    let mut new_sum = vec![0u8; atoms.len()];
    for (&(a, b), order) in &bonds {
        new_sum[a] += order.valence_contribution();
        new_sum[b] += order.valence_contribution();
    }

    let mut mapped_at = vec![None; atoms.len()];
    for (p, &o) in product_out.iter().enumerate() {
        mapped_at[o] = Some(p);
    }
    for g in (0..total).filter(|&g| keep[g]) {
        let (slot, local) = c.locate(g);
        let o = out_index[g];
        let old = c.reactants[slot].atom(local);
        let old_sum = c.reactants[slot].bond_order_sum(local);
        let carried = (old.h_count as i16 + old_sum as i16 - new_sum[o] as i16).try_into().ok();
        let h = match mapped_at[o].map(|p| &plan.product.atoms()[p].expr) {
            None => carried?,
            Some(expr) => {
                let element = expr.definite_element().map_or(old.element, |(e, _)| e);
                let charge = expr.explicit_charge().unwrap_or(old.charge);
                let atom = &mut atoms[o];
                let changed = element != old.element || charge != old.charge;
                atom.element = element;
                atom.charge = charge;
                match expr.explicit_h() {
                    Some(h) => h,
                    None if changed => default_h(element, charge, atom.aromatic, new_sum[o])?,
                    None => carried?,
                }
            }
        };
        atoms[o].h_count = h;
    }
    for (p, src) in plan.sources.iter().enumerate() {
        if let Source::New { .. } = src {
            let expr = &plan.product.atoms()[p].expr;
            let o = product_out[p];
            let charge = expr.explicit_charge().unwrap_or(0);
            atoms[o].charge = charge;
            atoms[o].h_count = match expr.explicit_h() {
                Some(h) => h,
                None => default_h(atoms[o].element, charge, atoms[o].aromatic, new_sum[o])?,
            };
        }
    }

    let bonds: Vec<Bond> = bonds.into_iter().map(|((a, b), order)| Bond::new(a, b, order)).collect();
    let m = Molecule::from_parts(atoms, bonds).ok()?;
    // Round trip so the result is exactly what a reader of its SMILES gets.
    parse_smiles(m.canonical_smiles()).ok()
}

/// Applies `t` to `reactants` (one molecule per slot, in slot order) and
/// returns the first valid product over the lexicographic cross product of
/// per-slot embeddings, each list ordered as [`enumerate_matches`] returns it.
pub fn apply_template(t: &ReactionTemplate, reactants: &[&Molecule]) -> Result<Molecule, ReactionError> {
    if reactants.len() != t.arity() {
        return Err(ReactionError::Arity { id: t.id().to_string(), expected: t.arity(), got: reactants.len() });
    }
    let mut per_slot = Vec::with_capacity(reactants.len());
    for (slot, (m, p)) in reactants.iter().zip(t.reactant_patterns()).enumerate() {
        let found = enumerate_matches(m, p);
        if found.is_empty() {
            return Err(ReactionError::NoEmbedding { id: t.id().to_string(), slot });
        }
        per_slot.push(found);
    }
    let mut offsets = vec![0];
    for m in reactants {
        offsets.push(offsets.last().unwrap() + m.atom_count());
    }

    let mut idx = vec![0usize; per_slot.len()];
    for _ in 0..MAX_COMBINATIONS {
        let combo = Combination {
            reactants,
            embeddings: idx.iter().zip(&per_slot).map(|(&i, list)| &list[i]).collect(),
            offsets: offsets.clone(),
        };
        if let Some(product) = build(&t.plan, t.reactant_patterns(), &combo) {
            return Ok(product);
        }
        // Odometer: the last slot varies fastest.
        let mut s = per_slot.len();
        loop {
            if s == 0 {
                return Err(ReactionError::NoValidProduct { id: t.id().to_string() });
            }
            s -= 1;
            idx[s] += 1;
            if idx[s] < per_slot[s].len() {
                break;
            }
            idx[s] = 0;
        }
    }
    Err(ReactionError::NoValidProduct { id: t.id().to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reactions::TemplateLibrary;

    fn run(id: &str, smiles: &[&str]) -> Result<String, ReactionError> {
        let lib = TemplateLibrary::default_library();
        let mols: Vec<Molecule> = smiles.iter().map(|s| parse_smiles(s).unwrap()).collect();
        let refs: Vec<&Molecule> = mols.iter().collect();
        apply_template(lib.get(id).unwrap(), &refs).map(|m| m.canonical_smiles().to_string())
    }

    fn canon(s: &str) -> String {
        parse_smiles(s).unwrap().canonical_smiles().to_string()
    }

    #[test]
    fn amide_coupling() {
        assert_eq!(run("amide_coupling", &["CC(=O)O", "CN"]).unwrap(), canon("CNC(C)=O"));
    }

    #[test]
    fn nitrile_to_tetrazole() {
        assert_eq!(run("nitrile_to_tetrazole", &["CC#N"]).unwrap(), canon("Cc1nnn[nH]1"));
    }

    #[test]
    fn symmetric_diamine_is_deterministic() {
        let first = run("n_alkylation", &["NCCN", "CCBr"]).unwrap();
        assert_eq!(first, canon("CCNCCN"));
        for _ in 0..100 {
            assert_eq!(run("n_alkylation", &["NCCN", "CCBr"]).unwrap(), first);
        }
        assert_eq!(run("n_alkylation", &["NCCN", "BrCC"]).unwrap(), first);
    }

    #[test]
    fn wrong_reactant_is_no_embedding() {
        assert!(matches!(run("amide_coupling", &["CCC", "CN"]), Err(ReactionError::NoEmbedding { slot: 0, .. })));
    }

    #[test]
    fn arity_is_checked() {
        assert!(matches!(run("amide_coupling", &["CC(=O)O"]), Err(ReactionError::Arity { .. })));
    }

    #[test]
    fn charge_change_recomputes_hydrogens() {
        assert_eq!(run("nitro_reduction", &["O=[N+]([O-])c1ccccc1"]).unwrap(), canon("Nc1ccccc1"));
    }

    #[test]
    fn ring_closure_builds_aromatic_system() {
        assert_eq!(run("benzimidazole_formation", &["Nc1ccccc1N", "CC=O"]).unwrap(), canon("Cc1nc2ccccc2[nH]1"));
    }

    #[test]
    fn biaryl_coupling_keeps_single_bond() {
        assert_eq!(run("suzuki_coupling", &["Brc1ccccc1", "OB(O)c1ccncc1"]).unwrap(), canon("c1ccc(cc1)-c1ccncc1"));
    }
}
