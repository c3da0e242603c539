//! Print every chemistry tool report for a molecule, in the text form the
//! proposer receives.
//!
//! ```text
//! cargo run --example tool_reports -- "O=C(NCc1ccccc1)c1ccc(OCc2ccccc2)cc1"
//! ```

use rxnopt::chemtools::{all_reports, ChemTools};
use rxnopt::molgraph::parse_smiles;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let smiles = std::env::args().nth(1).unwrap_or_else(|| "O=C(NCc1ccccc1)c1ccc(OCc2ccccc2)cc1".into());
    let m = parse_smiles(&smiles)?;
    println!("{}", m.canonical_smiles());
    for r in all_reports(&ChemTools::default(), &m) {
        println!("  {:<11} {}", r.kind.key(), r.text);
    }
    Ok(())
}
