//! Parse SMILES, print canonical forms and ring data, and run SMARTS queries.
//!
//! ```text
//! cargo run --example molecules_and_patterns -- "OC(=O)c1ccc(O)cc1" "[OX2H]"
//! ```

use rxnopt::molgraph::{molecular_weight, parse_smiles};
use rxnopt::pattern::{count_unique_matches, enumerate_matches, parse_smarts};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let smiles = args.next().unwrap_or_else(|| "OC(=O)c1ccc(NCCO)cc1".into());
    let queries: Vec<String> = args.collect();
    let queries = if queries.is_empty() {
        vec!["[OX2H]".into(), "[N&X3;H1,H2]".into(), "[CX3](=O)[OX2H1]".into(), "c".into()]
    } else {
        queries
    };

    let m = parse_smiles(&smiles)?;
    let rings = m.ring_info();
    println!("input      {smiles}");
    println!("canonical  {}", m.canonical_smiles());
    println!("atoms      {} heavy, weight {:.2}", m.heavy_atom_count(), molecular_weight(&m));
    println!(
        "rings      {} ({} aromatic, {} hetero)",
        rings.ring_count, rings.aromatic_ring_count, rings.hetero_ring_count
    );
    for q in &queries {
        let p = parse_smarts(q)?;
        let maps = enumerate_matches(&m, &p);
        println!(
            "{q:<22} {} embeddings, {} distinct atom sets, first {:?}",
            maps.len(),
            count_unique_matches(&m, &p),
            maps.first()
        );
    }
    Ok(())
}
