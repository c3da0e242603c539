//! Train the policy on the toy fixture and print the per-step log, then
//! compare greedy held-out episodes before and after training.

use rand::SeedableRng;
use rxnopt::grpo::{run_episode, train, Selection};
use rxnopt::oracles::OracleMeter;
use rxnopt::run::{RunConfig, Session};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/toy/run.toml"))?;
    let session = Session::new(cfg)?;
    let meter = OracleMeter::new(session.config.budget.train);
    let outcome = train(
        &session.env,
        &session.featurizer,
        &session.oracle,
        &meter,
        &session.train_leads,
        session.initial_params(),
        &session.config.grpo,
        session.seeds.train,
    )?;
    println!("{:>4} {:>8} {:>8} {:>9} {:>8} {:>8} {:>6}", "step", "reward", "max", "loss", "kl", "entropy", "calls");
    for s in &outcome.log {
        println!(
            "{:>4} {:>8.4} {:>8.4} {:>9.5} {:>8.5} {:>8.4} {:>6}",
            s.step, s.mean_reward, s.max_reward, s.loss.loss, s.loss.kl, s.loss.entropy, s.budget_used
        );
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for lead in &session.eval_leads {
        let before = run_episode(
            &session.env,
            &session.featurizer,
            &session.initial_params(),
            lead,
            Selection::Greedy,
            &mut rng,
        )?;
        let after = run_episode(&session.env, &session.featurizer, &outcome.params, lead, Selection::Greedy, &mut rng)?;
        println!(
            "{:<24} untrained {:.3}  trained {:.3}  {}",
            lead.canonical_smiles(),
            session.oracle.score(&before.final_state.molecule),
            session.oracle.score(&after.final_state.molecule),
            after.final_state.molecule.canonical_smiles()
        );
    }
    Ok(())
}
