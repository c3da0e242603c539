//! Score molecules with a composite oracle under a small metered budget and
//! summarize the resulting call log.

use rxnopt::evalmetrics::{MetricsReport, ScoreHistory};
use rxnopt::molgraph::parse_smiles;
use rxnopt::oracles::{build_oracle, Component, OracleMeter, OracleSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = OracleSpec::Composite {
        components: vec![
            Component { weight: 2.0, oracle: OracleSpec::SimilarityToTarget { target: "CC(=O)Nc1ccc(O)cc1".into() } },
            Component { weight: 1.0, oracle: OracleSpec::WeightWindow { min: 150.0, max: 300.0, falloff: 100.0 } },
        ],
    };
    let oracle = build_oracle(&spec)?;
    let meter = OracleMeter::new(5);
    println!("{}", oracle.describe());
    for s in
        ["Oc1ccccc1", "CC(=O)Nc1ccccc1", "CC(=O)Nc1ccc(O)cc1", "CC(=O)Nc1ccc(OC)cc1", "CCCCCCCCCCCCCCCCCCCC", "CCO"]
    {
        match meter.evaluate(&oracle, &parse_smiles(s)?) {
            Ok(v) => println!("  {s:<24} {v:.4}   ({} of {} calls used)", meter.used(), meter.budget()),
            Err(e) => println!("  {s:<24} refused: {e}"),
        }
    }
    let history = ScoreHistory::new(meter.log())?;
    print!("{}", MetricsReport::compute(&history, meter.budget())?.to_text());
    Ok(())
}
