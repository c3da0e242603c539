//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! ```text
//! cargo test --test acceptance
//! cargo test --test acceptance -- --regenerate-transitions
//! ```

mod common;

use std::collections::{BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use common::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rxnopt::environment::*;
use rxnopt::evalmetrics::*;
use rxnopt::fingerprints::{ecfp4, Fingerprint};
use rxnopt::grpo::*;
use rxnopt::molgraph::{Atom, Bond, BondOrder, Element, Molecule};
use rxnopt::pattern::{enumerate_matches, has_substruct_match, parse_smarts, Pattern};
use rxnopt::policy::*;
use rxnopt::reactions::{apply_template, match_templates, TemplateLibrary};
use rxnopt::run::{compare_with_baselines, read_molecules, RunConfig, Session};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

/// Random connected molecules of at most 12 heavy atoms, built in Kekulé
/// form so ring systems go through aromaticity perception.
fn random_molecule(rng: &mut ChaCha8Rng) -> Molecule {
    const ELEMENTS: &[(&str, u8, u32)] =
        &[("C", 4, 50), ("N", 3, 15), ("O", 2, 15), ("S", 2, 4), ("F", 1, 4), ("Cl", 1, 6), ("Br", 1, 6)];
    let total: u32 = ELEMENTS.iter().map(|e| e.2).sum();
    loop {
        let target = rng.random_range(2..=12);
        let mut elems: Vec<(Element, u8, i8)> = Vec::new();
        let mut bonds: Vec<(usize, usize, u8)> = Vec::new();
        if target >= 6 && rng.random_bool(0.45) {
            for k in 0..6 {
                let n = k > 0 && rng.random_bool(0.15);
                elems.push(if n {
                    (Element::from_symbol("N").unwrap(), 3, 0)
                } else {
                    (Element::from_symbol("C").unwrap(), 4, 0)
                });
                bonds.push((k, (k + 1) % 6, if k % 2 == 0 { 2 } else { 1 }));
            }
        } else {
            elems.push((Element::from_symbol("C").unwrap(), 4, 0));
        }
        let used = |elems: &Vec<(Element, u8, i8)>, bonds: &Vec<(usize, usize, u8)>, i: usize| -> u8 {
            bonds.iter().filter(|b| b.0 == i || b.1 == i).map(|b| b.2).sum::<u8>().min(elems[i].1)
        };
        while elems.len() < target {
            let free: Vec<usize> = (0..elems.len()).filter(|&i| used(&elems, &bonds, i) < elems[i].1).collect();
            let Some(&at) = free.choose(rng) else { break };
            if elems.len() + 3 <= target && rng.random_bool(0.05) {
                let n = elems.len();
                elems.push((Element::from_symbol("N").unwrap(), 4, 1));
                elems.push((Element::from_symbol("O").unwrap(), 2, 0));
                elems.push((Element::from_symbol("O").unwrap(), 1, -1));
                bonds.extend([(at, n, 1), (n, n + 1, 2), (n, n + 2, 1)]);
                continue;
            }
            let mut pick = rng.random_range(0..total);
            let &(sym, valence, _) = ELEMENTS
                .iter()
                .find(|e| {
                    if pick < e.2 {
                        true
                    } else {
                        pick -= e.2;
                        false
                    }
                })
                .unwrap();
            let room = elems[at].1 - used(&elems, &bonds, at);
            let mut order = 1;
            if room >= 2 && valence >= 2 && rng.random_bool(0.2) {
                order = 2;
            }
            if room >= 3 && valence >= 3 && rng.random_bool(0.1) {
                order = 3;
            }
            elems.push((Element::from_symbol(sym).unwrap(), valence, 0));
            bonds.push((at, elems.len() - 1, order));
        }
        for _ in 0..rng.random_range(0..=2) {
            let free: Vec<usize> = (0..elems.len()).filter(|&i| used(&elems, &bonds, i) < elems[i].1).collect();
            if free.len() < 2 {
                break;
            }
            let a = *free.choose(rng).unwrap();
            let b = *free.choose(rng).unwrap();
            if a != b && !bonds.iter().any(|x| (x.0, x.1) == (a, b) || (x.0, x.1) == (b, a)) {
                bonds.push((a.min(b), a.max(b), 1));
            }
        }
        let atoms: Vec<Atom> = elems
            .iter()
            .enumerate()
            .map(|(i, &(e, valence, charge))| {
                let mut a = Atom::new(e);
                a.charge = charge;
                a.h_count = valence - used(&elems, &bonds, i);
                a
            })
            .collect();
        let bonds = bonds
            .iter()
            .map(|&(a, b, o)| {
                let order = match o {
                    1 => BondOrder::Single,
                    2 => BondOrder::Double,
                    _ => BondOrder::Triple,
                };
                Bond::new(a, b, order)
            })
            .collect();
        if let Ok(m) = Molecule::from_parts(atoms, bonds) {
            return m;
        }
    }
}

/// Every injective atom map satisfying all atom and bond predicates, found
/// by enumerating the full product of per-atom candidate lists. Recursive
/// environments are evaluated by the same enumeration rooted at the atom.
fn brute_embeddings(m: &Molecule, p: &Pattern, root: Option<usize>) -> BTreeSet<Vec<usize>> {
    let k = p.atom_count();
    let cands: Vec<Vec<usize>> = (0..k)
        .map(|q| {
            (0..m.atom_count())
                .filter(|&t| q != 0 || root.is_none_or(|r| r == t))
                .filter(|&t| {
                    p.atoms()[q].expr.eval_with(m, t, &mut |sub, a| !brute_embeddings(m, sub, Some(a)).is_empty())
                })
                .collect()
        })
        .collect();
    let mut found = BTreeSet::new();
    if cands.iter().any(|c| c.is_empty()) {
        return found;
    }
    let mut idx = vec![0usize; k];
    loop {
        let map: Vec<usize> = (0..k).map(|q| cands[q][idx[q]]).collect();
        let injective = map.iter().collect::<HashSet<_>>().len() == k;
        let bonds_ok =
            || p.bonds().iter().all(|b| m.bond_between(map[b.a], map[b.b]).is_some_and(|mb| b.expr.matches(mb.order)));
        if injective && bonds_ok() {
            found.insert(map);
        }
        let mut q = 0;
        loop {
            if q == k {
                return found;
            }
            idx[q] += 1;
            if idx[q] < cands[q].len() {
                break;
            }
            idx[q] = 0;
            q += 1;
        }
    }
}

const MATCHER_PATTERNS: &[&str] = &[
    // prompt-format examples
    "[N&X3;H1,H2$(N[#6])]",
    "[#6][C&H1]=O",
    "[#6]C(=O)[O&H1]",
    "[Cl,Br,I][#6]",
    "[OX2H]",
    "[N&X3;H1,H2]",
    // site motifs
    "[CX3]=[OX1]",
    "[NX3;H1,H2;!$(NC=O)]",
    "[F,Cl,Br,I]",
    "[CX3]=[CX3]-[CX3]=[OX1]",
    // template and functional-group queries
    "[N&X3;H1,H2;!$(NC=O):3]",
    "[C:1](=[O:2])[OX2H1]",
    "[c:1][Br,I]",
    "[CX2]#[NX1]",
    "[N+](=O)[O-]",
    "[OX2;!$(OC=O)]([#6])[#6]",
    "[#6;R][#6;!R]",
    "[c:1]([NX3H2:2])[c:3][NX3H2:4]",
    "a~*~A",
    "[!#6;!#1]~[#6]=[#6,#7]",
];

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let corpus: Vec<Molecule> = (0..200).map(|_| random_molecule(&mut rng)).collect();
    ensure(corpus.iter().all(|m| m.heavy_atom_count() <= 12), || "corpus exceeds 12 heavy atoms".into())?;
    let patterns: Vec<Pattern> =
        MATCHER_PATTERNS.iter().map(|s| parse_smarts(s).map_err(|e| format!("{s}: {e}"))).collect::<Result<_, _>>()?;
    let (mut pairs, mut hits) = (0, 0);
    for m in &corpus {
        for (p, text) in patterns.iter().zip(MATCHER_PATTERNS) {
            let brute = brute_embeddings(m, p, None);
            let fast = has_substruct_match(m, p);
            ensure(fast == !brute.is_empty(), || {
                format!("{text} on {}: matcher {fast}, enumeration {}", m.canonical_smiles(), brute.len())
            })?;
            let listed: BTreeSet<Vec<usize>> = enumerate_matches(m, p).into_iter().collect();
            ensure(listed == brute, || format!("{text} on {}: embedding sets differ", m.canonical_smiles()))?;
            pairs += 1;
            hits += fast as usize;
        }
    }
    Ok(format!("{pairs}/{pairs} pairs agree ({hits} matching), embedding sets identical"))
}

// ---------------------------------------------------------------- 2

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordedTransition {
    state: String,
    template_id: String,
    input_slot: usize,
    building_blocks: Vec<String>,
    product: String,
}

fn transitions_path() -> PathBuf {
    fixture("transitions.jsonl")
}

fn replay(lib: &TemplateLibrary, state: &Molecule, t: &RecordedTransition) -> Result<String, String> {
    let template = lib.get(&t.template_id).ok_or("unknown template")?;
    let blocks: Vec<Molecule> = t.building_blocks.iter().map(|s| mol(s)).collect();
    let mut it = blocks.iter();
    let reactants: Vec<&Molecule> =
        (0..template.arity()).map(|s| if s == t.input_slot { state } else { it.next().unwrap() }).collect();
    apply_template(template, &reactants).map(|p| p.canonical_smiles().to_string()).map_err(|e| e.to_string())
}

/// Samples valid (state, template, blocks) triples by random walks from the
/// benchmark leads and writes them with their products.
fn regenerate_transitions() {
    let lib = TemplateLibrary::default_library();
    let blocks = read_molecules(&fixture("bench/blocks.smi")).unwrap();
    let mut pool = read_molecules(&fixture("bench/leads_train.smi")).unwrap();
    pool.extend(read_molecules(&fixture("bench/leads_eval.smi")).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut seen = HashSet::new();
    let mut out = String::new();
    while seen.len() < 1000 {
        let state = pool.choose(&mut rng).unwrap().clone();
        let matched = match_templates(&state, &lib);
        let Some(t) = matched.choose(&mut rng) else { continue };
        let input = t.slot_for(&state).unwrap();
        let picks: Option<Vec<&Molecule>> = t
            .block_slots(input)
            .into_iter()
            .map(|s| {
                let fits: Vec<&Molecule> =
                    blocks.iter().filter(|b| has_substruct_match(b, &t.reactant_patterns()[s])).collect();
                fits.choose(&mut rng).copied()
            })
            .collect();
        let Some(picks) = picks else { continue };
        let mut it = picks.iter();
        let reactants: Vec<&Molecule> =
            (0..t.arity()).map(|s| if s == input { &state } else { *it.next().unwrap() }).collect();
        let Ok(product) = apply_template(t, &reactants) else { continue };
        let rec = RecordedTransition {
            state: state.canonical_smiles().to_string(),
            template_id: t.id().to_string(),
            input_slot: input,
            building_blocks: picks.iter().map(|b| b.canonical_smiles().to_string()).collect(),
            product: product.canonical_smiles().to_string(),
        };
        if seen.insert((rec.state.clone(), rec.template_id.clone(), rec.building_blocks.clone())) {
            out.push_str(&serde_json::to_string(&rec).unwrap());
            out.push('\n');
            if product.heavy_atom_count() <= 40 {
                pool.push(product);
            }
        }
    }
    std::fs::write(transitions_path(), out).unwrap();
}

fn criterion_2() -> Outcome {
    let lib = TemplateLibrary::default_library();
    let text = std::fs::read_to_string(transitions_path()).map_err(|e| e.to_string())?;
    let records: Vec<RecordedTransition> =
        text.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    ensure(records.len() >= 1000, || format!("only {} recorded transitions", records.len()))?;
    let mut mismatches = 0;
    for (i, r) in records.iter().enumerate() {
        let state = mol(&r.state);
        let perm = random_permutation(state.atom_count(), i as u64);
        for s in [state.clone(), permuted(&state, &perm)] {
            if replay(&lib, &s, r)?.as_bytes() != r.product.as_bytes() {
                mismatches += 1;
            }
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    Ok(format!("{} frozen transitions replayed, input order and permuted, 0 mismatches", records.len()))
}

// ---------------------------------------------------------------- 3

/// The clipped objective written out from log-softmax, independent of the
/// library's loss code.
fn reference_loss(p: &PolicyParams, reference: &PolicyParams, batch: &RandomBatch, cfg: &GrpoConfig) -> f64 {
    let n = batch.features.len() as f64;
    let mut total = 0.0;
    for i in 0..batch.features.len() {
        let lp = log_softmax(&logits(p, &batch.features[i]));
        let lq = log_softmax(&logits(reference, &batch.features[i]));
        let rho = (lp[batch.chosen[i]] - batch.behavior_logp[i]).exp();
        let a = batch.advantages[i];
        let surr = (rho * a).min(rho.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * a);
        let kl: f64 = lp.iter().zip(&lq).map(|(x, y)| x.exp() * (x - y)).sum();
        let ent: f64 = -lp.iter().map(|x| x.exp() * x).sum::<f64>();
        total += surr - cfg.kl_coef * kl + cfg.entropy_coef * ent;
    }
    -total / n
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let draws = 120;
    for draw in 0..draws {
        let cfg = GrpoConfig {
            kl_coef: rng.random_range(0.0..0.5),
            entropy_coef: rng.random_range(0.0..0.3),
            micro_batch: rng.random_range(1..=20),
            ..GrpoConfig::default()
        };
        let arch = Architecture {
            input_dim: rng.random_range(2..8),
            hidden: [0, 3, 6][draw % 3],
            activation: if draw % 2 == 0 { Activation::Tanh } else { Activation::Relu },
        };
        let p = random_params(&mut rng, arch);
        let old = perturbed(&mut rng, &p, 0.3);
        let reference = perturbed(&mut rng, &p, 0.5);
        let n = rng.random_range(1..=20);
        let batch = random_batch(&mut rng, &p, &old, cfg.clip_epsilon, n, 11);
        let (parts, g) = batch_loss(&p, &reference, &batch.records(), &cfg).map_err(|e| e.to_string())?;
        let expected = reference_loss(&p, &reference, &batch, &cfg);
        ensure((parts.loss - expected).abs() <= 1e-12 * expected.abs().max(1.0), || {
            format!("draw {draw}: loss {} vs reference {expected}", parts.loss)
        })?;
        let fd = central_difference(
            |theta| reference_loss(&PolicyParams { theta: theta.to_vec(), ..p.clone() }, &reference, &batch, &cfg),
            &p.theta,
            1e-5,
        );
        let err = relative_error(&g, &fd);
        // ReLU kinks make a central difference meaningless within h of zero.
        if arch.activation == Activation::Relu && err >= 1e-4 {
            let near_kink =
                batch.features.iter().flatten().any(|x| pre_activations(&p, x).iter().any(|z| z.abs() < 1e-4));
            if near_kink {
                continue;
            }
        }
        ensure(err < 1e-4, || format!("draw {draw}: relative error {err:.3e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("{draws} random micro-batched losses, max relative error {worst:.2e}"))
}

fn pre_activations(p: &PolicyParams, x: &[f64]) -> Vec<f64> {
    let (d, h) = (p.arch.input_dim, p.arch.hidden);
    (0..h)
        .map(|j| p.theta[j * d..(j + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + p.theta[h * d + j])
        .collect()
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut max_mean, mut max_dev): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let g = rng.random_range(2..=16);
        let rewards: Vec<f64> = loop {
            let r: Vec<f64> = (0..g).map(|_| rng.random_range(0.0..=1.0)).collect();
            if r.iter().any(|&x| x != r[0]) {
                break r;
            }
        };
        let a = compute_advantages(&rewards, 1e-8);
        let n = g as f64;
        let mean = a.iter().sum::<f64>() / n;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        max_mean = max_mean.max(mean.abs());
        max_dev = max_dev.max((std - 1.0).abs());
    }
    ensure(max_mean < 1e-10, || format!("|mean| reached {max_mean:.2e}"))?;
    ensure(max_dev <= 1e-8, || format!("|std - 1| reached {max_dev:.2e}"))?;
    for _ in 0..100 {
        let v = rng.random_range(0.0..=1.0);
        let a = compute_advantages(&vec![v; rng.random_range(1..=16)], 1e-8);
        ensure(a.iter().all(|&x| x == 0.0), || format!("constant group {v} gave {a:?}"))?;
    }
    Ok(format!("1000 groups: max |mean| {max_mean:.1e}, max |std-1| {max_dev:.1e}; constant groups exactly zero"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let slots = DEFAULT_K_MAX + 1;
    let dim = 6;
    for space in 0..1000 {
        let arch = Architecture { input_dim: dim, hidden: [0, 4][space % 2], activation: Activation::Tanh };
        let p = random_params(&mut rng, arch);
        let n = rng.random_range(1..=slots);
        let padded: Vec<Vec<f64>> =
            (0..slots).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let feats = &padded[..n];
        let d = action_distribution(&p, feats, slots);

        // Masked softmax over all slots, padding scored and then excluded.
        let all = logits(&p, &padded);
        let masked: Vec<f64> = (0..slots).map(|k| if k < n { all[k] } else { f64::NEG_INFINITY }).collect();
        let max = masked[..n].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = masked.iter().map(|l| (l - max).exp()).sum();
        for (k, l) in masked.iter().enumerate() {
            let expect = (l - max).exp() / z;
            ensure((d.probs()[k] - expect).abs() < 1e-12, || {
                format!("space {space} slot {k}: {} vs {expect}", d.probs()[k])
            })?;
        }
        ensure(d.probs()[n..].iter().all(|&q| q == 0.0), || format!("space {space}: masked slot has mass"))?;
        let sum: f64 = d.probs()[..n].iter().sum();
        ensure((sum - 1.0).abs() < 1e-12, || format!("space {space}: valid mass {sum}"))?;

        // Padding never reaches the gradient: changing it leaves every
        // quantity, including the parameter gradient, bit-identical.
        let chosen = rng.random_range(0..n);
        let g = log_prob_grad(&p, feats, chosen);
        let mut repadded = padded.clone();
        for row in &mut repadded[n..] {
            row.iter_mut().for_each(|v| *v = rng.random_range(-5.0..5.0));
        }
        ensure(log_prob_grad(&p, &repadded[..n], chosen) == g, || {
            format!("space {space}: padding changed the gradient")
        })?;
        let lp = |k: usize, x: &[Vec<f64>]| action_distribution(&p, &x[..n], slots).log_probs()[k];
        for k in n..slots {
            for j in 0..dim {
                let mut bumped = padded.clone();
                bumped[k][j] += 1e-3;
                ensure(lp(chosen, &bumped) == lp(chosen, &padded), || {
                    format!("space {space}: masked slot {k} has gradient")
                })?;
            }
        }

        let perm = random_permutation(n, space as u64);
        let mut shuffled = feats.to_vec();
        for (old, &new) in perm.iter().enumerate() {
            shuffled[new] = feats[old].clone();
        }
        let e = action_distribution(&p, &shuffled, slots);
        for (old, &new) in perm.iter().enumerate() {
            ensure((d.probs()[old] - e.probs()[new]).abs() < 1e-15, || {
                format!("space {space}: not permutation-equivariant")
            })?;
        }
    }
    Ok("1000 random spaces: masked mass 0, masked gradient 0, valid mass 1 within 1e-12, permutation-equivariant"
        .into())
}

// ---------------------------------------------------------------- 6

struct Counted<P> {
    inner: P,
    calls: AtomicUsize,
}

impl<P: Proposer> Proposer for Counted<P> {
    fn propose(&self, r: &ProposerRequest) -> Result<ProposerResponse, ProposerError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.propose(r)
    }
}

fn bench_env(cache: Arc<ReactionCache>) -> (Environment, Arc<Counted<HeuristicProposer>>) {
    let lib = Arc::new(TemplateLibrary::default_library());
    let blocks = read_molecules(&fixture("bench/blocks.smi")).unwrap();
    let proposer = Arc::new(Counted {
        inner: HeuristicProposer::new(lib.clone(), blocks, DEFAULT_K_MAX, 1, None),
        calls: AtomicUsize::new(0),
    });
    (Environment::new(EnvConfig::new("cache-acceptance"), lib, proposer.clone(), cache, "similarity"), proposer)
}

fn space_signature(exp: &Expansion) -> Vec<(String, usize, Vec<String>, String)> {
    match exp {
        Expansion::Terminal => Vec::new(),
        Expansion::Actions(space) => space
            .reactions()
            .map(|r| {
                (
                    r.template_id.clone(),
                    r.input_slot,
                    r.building_blocks.iter().map(|b| b.canonical_smiles().to_string()).collect(),
                    r.product.canonical_smiles().to_string(),
                )
            })
            .collect(),
    }
}

fn criterion_6() -> Outcome {
    let lib = TemplateLibrary::default_library();
    let text = std::fs::read_to_string(transitions_path()).map_err(|e| e.to_string())?;
    let mut uniques: Vec<Molecule> = Vec::new();
    let mut keys = HashSet::new();
    for line in text.lines() {
        let r: RecordedTransition = serde_json::from_str(line).map_err(|e| e.to_string())?;
        for s in [&r.state, &r.product] {
            let m = mol(s);
            if !match_templates(&m, &lib).is_empty() && keys.insert(s.clone()) {
                uniques.push(m);
            }
        }
        if uniques.len() >= 90 {
            break;
        }
    }
    // 150 calls, 60 of them (40%) revisiting a state, each revisit
    // presented with a fresh atom order.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut pattern: Vec<bool> = (0..150).map(|i| (1..=60).contains(&i)).collect();
    pattern[1..].shuffle(&mut rng);
    let mut next = uniques.iter();
    let mut seen: Vec<Molecule> = Vec::new();
    let mut script = Vec::new();
    for (i, &repeat) in pattern.iter().enumerate() {
        if repeat {
            let m = seen.choose(&mut rng).unwrap();
            script.push(permuted(m, &random_permutation(m.atom_count(), i as u64)));
        } else {
            let m = next.next().ok_or("not enough distinct states")?.clone();
            seen.push(m.clone());
            script.push(m);
        }
    }
    let distinct: HashSet<&str> = script.iter().map(|m| m.canonical_smiles()).collect();

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("cache.jsonl");
    let cache = Arc::new(ReactionCache::open(&path, &lib).map_err(|e| e.to_string())?);
    let (env, proposer) = bench_env(cache.clone());
    let mut first = Vec::new();
    for m in &script {
        first.push(space_signature(&*env.propose(&EnvState::new(m.clone())).map_err(|e| e.to_string())?));
    }
    let stats = cache.stats();
    let calls = proposer.calls.load(Ordering::SeqCst);
    ensure(calls == distinct.len(), || format!("{calls} proposer calls for {} distinct states", distinct.len()))?;
    ensure(stats.hits + stats.misses == script.len() as u64, || {
        format!("{stats:?} for {} propose calls", script.len())
    })?;
    ensure(stats.hits == 60, || format!("{stats:?}"))?;
    drop(env);

    let reopened = Arc::new(ReactionCache::open(&path, &lib).map_err(|e| e.to_string())?);
    let (env, proposer) = bench_env(reopened);
    for (m, sig) in script.iter().zip(&first) {
        let again = space_signature(&*env.propose(&EnvState::new(m.clone())).map_err(|e| e.to_string())?);
        ensure(&again == sig, || format!("persisted space differs for {}", m.canonical_smiles()))?;
    }
    ensure(proposer.calls.load(Ordering::SeqCst) == 0, || "persisted replay invoked the proposer".into())?;
    Ok(format!(
        "{} calls, {} distinct: {calls} proposer calls, {} hits + {} misses; persisted replay identical with 0 proposer calls",
        script.len(),
        distinct.len(),
        stats.hits,
        stats.misses
    ))
}

// ---------------------------------------------------------------- 7

fn naive_int_div(fps: &[Fingerprint]) -> f64 {
    let sets: Vec<HashSet<usize>> = fps.iter().map(|f| f.on_bits().into_iter().collect()).collect();
    let mut sum = 0.0;
    let mut pairs = 0.0;
    for i in 0..sets.len() {
        for j in 0..sets.len() {
            if i < j {
                let inter = sets[i].intersection(&sets[j]).count() as f64;
                let union = sets[i].union(&sets[j]).count() as f64;
                sum += if union == 0.0 { 1.0 } else { inter / union };
                pairs += 1.0;
            }
        }
    }
    1.0 - sum / pairs
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let c = rng.random_range(0.0..=1.0);
        let n = rng.random_range(1..=50);
        let k = rng.random_range(1..=20);
        let budget = n + rng.random_range(0..=50);
        let h = ScoreHistory::from_scores(&vec![c; n]).map_err(|e| e.to_string())?;
        let auc = auc_top_k(&h, k, budget).map_err(|e| e.to_string())?;
        ensure(auc == c, || format!("constant {c}: AUC {auc}"))?;
    }

    let blocks = read_molecules(&fixture("bench/blocks.smi")).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=30);
        let fps: Vec<Fingerprint> = if rng.random_bool(0.5) {
            (0..n).map(|_| ecfp4(blocks.choose(&mut rng).unwrap())).collect()
        } else {
            (0..n)
                .map(|_| {
                    let bits: Vec<usize> = (0..256).filter(|_| rng.random_bool(0.1)).collect();
                    Fingerprint::from_on_bits(256, 2, &bits).unwrap()
                })
                .collect()
        };
        let got = internal_diversity(&fps).map_err(|e| e.to_string())?;
        worst = worst.max((got - naive_int_div(&fps)).abs());
    }
    ensure(worst < 1e-12, || format!("IntDiv differs from the double loop by {worst:.2e}"))?;

    // Worked examples. The top-2 mean of 0.9 and 0.8 is checked against the
    // correctly rounded mean of those doubles, which sits one ulp above 0.85.
    let top2 = top_k(&ScoreHistory::from_scores(&[0.9, 0.8, 0.1]).unwrap(), 2).map_err(|e| e.to_string())?;
    ensure(top2 == (0.9 + 0.8) / 2.0 && (top2 - 0.85).abs() <= f64::EPSILON, || format!("top-2 {top2}"))?;
    let auc = auc_top_k(&ScoreHistory::from_scores(&[0.0, 1.0]).unwrap(), 1, 2).map_err(|e| e.to_string())?;
    ensure(auc == 0.5, || format!("two-point AUC {auc}"))?;
    let fp = |bits: &[usize]| Fingerprint::from_on_bits(64, 2, bits).unwrap();
    let trio = [fp(&[0, 1, 2, 3, 4]), fp(&[0, 1, 5, 6, 7, 8, 9]), fp(&[0, 2, 3, 4, 5, 6, 7, 8, 9])];
    let div = internal_diversity(&trio).map_err(|e| e.to_string())?;
    ensure((div - 0.6).abs() < 1e-15, || format!("three-molecule IntDiv {div}"))?;
    Ok(format!("constant AUC exact on 200 histories; IntDiv vs double loop max {worst:.1e}; worked examples {top2}, {auc}, {div}"))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let seeds: Vec<u64> = (1..=5).collect();
    let rows: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                s.spawn(move || -> Result<_, String> {
                    let mut cfg = RunConfig::load(fixture("bench/run.toml")).map_err(|e| e.to_string())?;
                    cfg.seed = seed;
                    compare_with_baselines(&Session::new(cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect::<Result<Vec<_>, _>>()
    })?;
    for r in &rows {
        println!(
            "      seed {}: trained {:.4}  random {:.4}  greedy-oracle {:.4}",
            r.seed, r.trained, r.random, r.greedy_oracle
        );
    }
    let n = rows.len() as f64;
    let trained = rows.iter().map(|r| r.trained).sum::<f64>() / n;
    let random = rows.iter().map(|r| r.random).sum::<f64>() / n;
    let greedy = rows.iter().map(|r| r.greedy_oracle).sum::<f64>() / n;
    let wins = rows.iter().filter(|r| r.trained >= greedy).count();
    ensure(trained >= 1.15 * random, || format!("trained {trained:.4} vs random {random:.4}"))?;
    ensure(wins >= 3, || format!("trained reached the greedy-oracle mean on {wins}/5 seeds"))?;
    Ok(format!(
        "mean Top-10 trained {trained:.4}, random {random:.4} (x{:.2}), greedy-oracle {greedy:.4}; {wins}/5 seeds at or above greedy-oracle",
        trained / random
    ))
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let cfg = RunConfig::load(fixture("bench/run.toml")).map_err(|e| e.to_string())?;
    let session = Session::new(cfg).map_err(|e| e.to_string())?;
    let params = session.architecture().param_count();
    ensure(params < 1_000_000, || format!("{params} policy parameters"))?;
    println!("      Not reproduced: the large-scale reference figures (average Top-10 0.571, AUC-10 0.556,");
    println!("      56.4% cache hit rate, 43% wall-time reduction) need a 70B-parameter language-model proposer,");
    println!("      a 4B-parameter policy and the TDC/proxy oracle suite. This build ships a deterministic heuristic");
    println!("      proposer, a {params}-parameter scorer and fingerprint/descriptor oracles; acceptance rests on");
    println!("      criteria 1-8 and the module invariant suites.");
    Ok("statement printed; shipped scale confirmed far below the reference setup".into())
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_rxnopt");
    let config = fixture("toy/run.toml");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |out: &Path| -> Result<Vec<u8>, String> {
        let o = Command::new(bin)
            .args(["optimize", "--config"])
            .arg(&config)
            .arg("--output")
            .arg(out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || {
            format!("optimize exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr))
        })?;
        for f in [
            "policy.bin",
            "train_log.jsonl",
            "train_oracle.jsonl",
            "eval_oracle.jsonl",
            "eval_episodes.jsonl",
            "pathways.jsonl",
            "metrics.txt",
            "train_curve.csv",
            "eval_curve.csv",
        ] {
            ensure(out.join(f).is_file(), || format!("missing artifact {f}"))?;
        }
        std::fs::read(out.join("metrics.txt")).map_err(|e| e.to_string())
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = run(&a)?;
    let second = run(&b)?;
    ensure(first == second, || "metrics reports differ between identical-seed runs".into())?;
    let o = Command::new(bin)
        .args(["replay", "--templates"])
        .arg(fixture("toy/templates.jsonl"))
        .arg("--pathways")
        .arg(a.join("pathways.jsonl"))
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || {
        format!("replay exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr))
    })?;
    let pathways = std::fs::read_to_string(a.join("pathways.jsonl")).map_err(|e| e.to_string())?.lines().count();
    Ok(format!("artifacts written, {pathways} pathways replay-verified, metrics byte-identical across runs"))
}

fn main() {
    if std::env::args().any(|a| a == "--regenerate-transitions") {
        regenerate_transitions();
        println!("wrote {}", transitions_path().display());
        return;
    }
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 10] = [
        ("matcher agrees with brute-force embedding", criterion_1),
        ("transition replay is byte-identical", criterion_2),
        ("loss gradient matches finite differences", criterion_3),
        ("advantage standardization", criterion_4),
        ("masked softmax contract", criterion_5),
        ("cache contract", criterion_6),
        ("metric unit suite", criterion_7),
        ("learning beats random", criterion_8),
        ("non-reproduction statement", criterion_9),
        ("end-to-end smoke test", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
