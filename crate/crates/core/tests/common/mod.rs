#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rxnopt::molgraph::{parse_smiles, Bond, Molecule};

pub fn mol(s: &str) -> Molecule {
    parse_smiles(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

/// Same molecule with atoms renumbered by `perm` (old index -> new index).
pub fn permuted(m: &Molecule, perm: &[usize]) -> Molecule {
    let mut atoms = m.atoms().to_vec();
    for (old, &new) in perm.iter().enumerate() {
        atoms[new] = m.atom(old).clone();
    }
    let mut bonds: Vec<Bond> = m.bonds().iter().map(|b| Bond::new(perm[b.a], perm[b.b], b.order)).collect();
    bonds.reverse();
    Molecule::from_parts(atoms, bonds).expect("permutation preserves validity")
}

pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

/// Central finite differences of `f` at `theta`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            x[i] = theta[i] + h;
            let up = f(&x);
            x[i] = theta[i] - h;
            let down = f(&x);
            x[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm; 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Random loss inputs: per-record candidate features, chosen slot, behavior
/// log-probability and advantage.
pub struct RandomBatch {
    pub features: Vec<Vec<Vec<f64>>>,
    pub chosen: Vec<usize>,
    pub behavior_logp: Vec<f64>,
    pub advantages: Vec<f64>,
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Builds a batch whose behavior policy is `old`. Records whose ratio under
/// `params` sits within 1e-3 of a clip boundary are redrawn, since the
/// objective has a kink there.
pub fn random_batch<R: rand::Rng>(
    rng: &mut R,
    params: &rxnopt::policy::PolicyParams,
    old: &rxnopt::policy::PolicyParams,
    clip: f64,
    records: usize,
    max_candidates: usize,
) -> RandomBatch {
    let dim = params.arch.input_dim;
    let mut b = RandomBatch { features: vec![], chosen: vec![], behavior_logp: vec![], advantages: vec![] };
    while b.features.len() < records {
        let n = rng.random_range(1..=max_candidates);
        let feats: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let chosen = rng.random_range(0..n);
        let lp_old = log_softmax(&rxnopt::policy::logits(old, &feats))[chosen];
        let lp_new = log_softmax(&rxnopt::policy::logits(params, &feats))[chosen];
        let rho = (lp_new - lp_old).exp();
        if (rho - 1.0 - clip).abs() < 1e-3 || (rho - 1.0 + clip).abs() < 1e-3 {
            continue;
        }
        b.features.push(feats);
        b.chosen.push(chosen);
        b.behavior_logp.push(lp_old);
        b.advantages.push(rng.random_range(-2.0..2.0));
    }
    b
}

impl RandomBatch {
    pub fn records(&self) -> Vec<rxnopt::grpo::LossRecord<'_>> {
        (0..self.features.len())
            .map(|i| rxnopt::grpo::LossRecord {
                features: &self.features[i],
                chosen: self.chosen[i],
                behavior_logp: self.behavior_logp[i],
                advantage: self.advantages[i],
            })
            .collect()
    }
}

pub fn perturbed<R: rand::Rng>(
    rng: &mut R,
    p: &rxnopt::policy::PolicyParams,
    scale: f64,
) -> rxnopt::policy::PolicyParams {
    let mut q = p.clone();
    for v in &mut q.theta {
        *v += rng.random_range(-scale..scale);
    }
    q
}

pub fn random_params<R: rand::Rng>(rng: &mut R, arch: rxnopt::policy::Architecture) -> rxnopt::policy::PolicyParams {
    let mut p = rxnopt::policy::PolicyParams::init(arch, 0);
    for v in &mut p.theta {
        *v = rng.random_range(-0.7..0.7);
    }
    p
}
