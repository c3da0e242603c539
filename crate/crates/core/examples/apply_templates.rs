//! List the templates that match a molecule and apply each with a
//! compatible building block from a small in-line set.
//!
//! ```text
//! cargo run --example apply_templates -- "NCc1ccc(Br)cc1"
//! ```

use rxnopt::molgraph::{parse_smiles, Molecule};
use rxnopt::pattern::has_substruct_match;
use rxnopt::reactions::{apply_template, match_templates, TemplateLibrary};

const BLOCKS: &[&str] = &[
    "OC(=O)c1ccccc1",
    "BrCc1ccccc1",
    "O=Cc1ccncc1",
    "OB(O)c1ccccc1",
    "ClC(=O)C1CC1",
    "C1COCCN1",
    "O=C=Nc1ccccc1",
    "CS(=O)(=O)Cl",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let smiles = std::env::args().nth(1).unwrap_or_else(|| "NCc1ccc(Br)cc1".into());
    let m = parse_smiles(&smiles)?;
    let lib = TemplateLibrary::default_library();
    let blocks: Vec<Molecule> = BLOCKS.iter().map(|s| parse_smiles(s)).collect::<Result<_, _>>()?;
    println!("{} ({} templates in library, digest {})", m.canonical_smiles(), lib.len(), &lib.digest()[..12]);
    for t in match_templates(&m, &lib) {
        let input = t.slot_for(&m).expect("matched");
        let slots = t.block_slots(input);
        let picks: Option<Vec<&Molecule>> =
            slots.iter().map(|&s| blocks.iter().find(|b| has_substruct_match(b, &t.reactant_patterns()[s]))).collect();
        let Some(picks) = picks else {
            println!("  {:<32} no compatible block in the sample set", t.name());
            continue;
        };
        let mut it = picks.iter();
        let reactants: Vec<&Molecule> =
            (0..t.arity()).map(|s| if s == input { &m } else { *it.next().unwrap() }).collect();
        match apply_template(&t, &reactants) {
            Ok(p) => {
                let with: Vec<&str> = picks.iter().map(|b| b.canonical_smiles()).collect();
                println!("  {:<32} {:<22} -> {}", t.name(), with.join(" + "), p.canonical_smiles());
            }
            Err(e) => println!("  {:<32} failed: {e}", t.name()),
        }
    }
    Ok(())
}
