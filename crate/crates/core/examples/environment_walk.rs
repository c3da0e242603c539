//! Expand a lead with the heuristic proposer, take the first reaction at
//! each step, and show the cache absorbing a repeated expansion.

use std::sync::Arc;

use rxnopt::environment::{
    Action, EnvConfig, EnvState, Environment, Expansion, HeuristicProposer, ReactionCache, DEFAULT_K_MAX,
};
use rxnopt::molgraph::parse_smiles;
use rxnopt::reactions::TemplateLibrary;
use rxnopt::run::read_molecules;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lib = Arc::new(TemplateLibrary::default_library());
    let blocks = read_molecules(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/bench/blocks.smi").as_ref())?;
    let proposer = Arc::new(HeuristicProposer::new(lib.clone(), blocks, DEFAULT_K_MAX, 0, None));
    let cache = Arc::new(ReactionCache::in_memory());
    let env = Environment::new(EnvConfig::new("walk"), lib, proposer, cache.clone(), "explore");

    let lead = parse_smiles("OC(=O)c1ccc(O)cc1")?;
    let mut state = EnvState::new(lead.clone());
    loop {
        let exp = env.propose(&state)?;
        let Expansion::Actions(space) = exp.as_ref() else {
            println!("{} is terminal", state.molecule.canonical_smiles());
            break;
        };
        println!("step {}: {} with {} actions", state.depth(), state.molecule.canonical_smiles(), space.len());
        for (slot, a) in space.candidates().iter().enumerate() {
            match a {
                Action::Reaction(r) => {
                    println!("  [{slot}] {:<30} -> {}", r.template_name, r.product.canonical_smiles())
                }
                Action::Stop => println!("  [{slot}] stop"),
            }
        }
        let t = env.step_slot(&state, space, 0)?;
        state = t.state;
        if t.terminal {
            break;
        }
    }
    println!("pathway of {} steps ends at {}", state.pathway.len(), state.molecule.canonical_smiles());
    env.propose(&EnvState::new(lead))?;
    println!("cache after revisiting the lead: {:?}", cache.stats());
    Ok(())
}
