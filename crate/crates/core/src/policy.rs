//! Action scoring policy.
//!
//! Each candidate in an action space is featurized on its own and scored by
//! one shared scorer, so a candidate's logit never depends on the slot it
//! occupies. Unfilled slots are masked out of the softmax.
//!
//! Feature layout, in order:
//!
//! | block      | width              | contents                                   |
//! |------------|--------------------|--------------------------------------------|
//! | product fp | `fp_bits`          | ECFP4 of the product folded to `fp_bits`   |
//! | template   | `template_bits`    | one-hot of the hashed template id          |
//! | deltas     | 4 + sites          | weight/100, rings, aromatic rings, sim, one per site motif |
//! | stop       | 1                  | 1 for Stop, 0 otherwise                    |
//!
//! Stop leaves every other block at zero.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemtools::ChemTools;
use crate::environment::{Action, Reaction};
use crate::fingerprints::{ecfp4, splitmix64, tanimoto, Fingerprint};
use crate::molgraph::{molecular_weight, Molecule};
use crate::pattern::count_unique_matches;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint architecture {found:?} does not match expected {expected:?}")]
    DimensionMismatch { expected: Architecture, found: Architecture },
    #[error("invalid feature configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub fp_bits: usize,
    pub template_bits: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { fp_bits: 128, template_bits: 32 }
    }
}

/// Per-molecule descriptors shared by the state and product sides.
#[derive(Debug, Clone)]
struct Descriptors {
    weight: f64,
    rings: f64,
    aromatic_rings: f64,
    similarity: f64,
    sites: Vec<f64>,
}

pub struct Featurizer {
    config: FeatureConfig,
    tools: ChemTools,
    target: Option<Fingerprint>,
}

fn hash_str(s: &str) -> u64 {
    s.bytes().fold(splitmix64(0x7e3a), |h, b| splitmix64(h ^ b as u64))
}

impl Featurizer {
    /// `target` is the objective's similarity target, when it has one.
    pub fn new(config: FeatureConfig, tools: ChemTools, target: Option<Fingerprint>) -> Result<Self, PolicyError> {
        if config.fp_bits == 0
            || !config.fp_bits.is_power_of_two()
            || config.fp_bits > crate::fingerprints::DEFAULT_WIDTH
        {
            return Err(PolicyError::Config(format!("fp_bits must be a power of two <= 2048, got {}", config.fp_bits)));
        }
        if config.template_bits == 0 {
            return Err(PolicyError::Config("template_bits must be positive".into()));
        }
        Ok(Featurizer { config, tools, target })
    }

    pub fn config(&self) -> FeatureConfig {
        self.config
    }

    pub fn site_count(&self) -> usize {
        self.tools.site_table().entries().len()
    }

    pub fn dim(&self) -> usize {
        self.config.fp_bits + self.config.template_bits + 4 + self.site_count() + 1
    }

    fn descriptors(&self, m: &Molecule) -> Descriptors {
        let ri = m.ring_info();
        Descriptors {
            weight: molecular_weight(m),
            rings: ri.ring_count as f64,
            aromatic_rings: ri.aromatic_ring_count as f64,
            similarity: self.target.as_ref().map_or(0.0, |t| tanimoto(&ecfp4(m), t).expect("same width")),
            sites: self.tools.site_table().entries().iter().map(|(_, p)| count_unique_matches(m, p) as f64).collect(),
        }
    }

    fn reaction_features(&self, state: &Descriptors, r: &Reaction) -> Vec<f64> {
        let c = self.config;
        let mut x = vec![0.0; self.dim()];
        let fp = ecfp4(&r.product).fold(c.fp_bits).expect("validated width");
        for b in fp.on_bits() {
            x[b] = 1.0;
        }
        x[c.fp_bits + (hash_str(&r.template_id) % c.template_bits as u64) as usize] = 1.0;
        let p = self.descriptors(&r.product);
        let d = c.fp_bits + c.template_bits;
        x[d] = (p.weight - state.weight) / 100.0;
        x[d + 1] = p.rings - state.rings;
        x[d + 2] = p.aromatic_rings - state.aromatic_rings;
        x[d + 3] = p.similarity - state.similarity;
        for (k, (a, b)) in p.sites.iter().zip(&state.sites).enumerate() {
            x[d + 4 + k] = a - b;
        }
        x
    }

    fn stop_features(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        *x.last_mut().unwrap() = 1.0;
        x
    }

    /// Features of one candidate in `state`.
    pub fn featurize(&self, state: &Molecule, action: &Action) -> Vec<f64> {
        match action {
            Action::Stop => self.stop_features(),
            Action::Reaction(r) => self.reaction_features(&self.descriptors(state), r),
        }
    }

    /// Features of every candidate, sharing the state's descriptors.
    pub fn featurize_all(&self, state: &Molecule, candidates: &[Action]) -> Vec<Vec<f64>> {
        let s = self.descriptors(state);
        candidates
            .iter()
            .map(|a| match a {
                Action::Stop => self.stop_features(),
                Action::Reaction(r) => self.reaction_features(&s, r),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `h` and input `z`.
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Scorer shape. `hidden == 0` is the linear scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn linear(input_dim: usize) -> Self {
        Architecture { input_dim, hidden: 0, activation: Activation::Tanh }
    }

    pub fn param_count(&self) -> usize {
        if self.hidden == 0 {
            self.input_dim + 1
        } else {
            self.hidden * self.input_dim + 2 * self.hidden + 1
        }
    }
}

/// Scorer weights as one flat vector.
///
/// Linear layout: `[w (input_dim), b]`. Hidden layout:
/// `[W1 (hidden x input_dim, row major), b1 (hidden), w2 (hidden), b2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub arch: Architecture,
    pub theta: Vec<f64>,
    pub version: u64,
}

const INIT_SCALE: f64 = 0.1;

impl PolicyParams {
    /// Output weights start at zero, so every initial policy is uniform over
    /// filled slots. Hidden-layer weights are drawn from `seed`.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut theta = vec![0.0; arch.param_count()];
        if arch.hidden > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n1 = arch.hidden * arch.input_dim;
            for v in &mut theta[..n1] {
                *v = rng.random_range(-INIT_SCALE..INIT_SCALE);
            }
        }
        PolicyParams { arch, theta, version: 0 }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let a = self.arch;
        debug_assert_eq!(x.len(), a.input_dim);
        if a.hidden == 0 {
            return dot(&self.theta[..a.input_dim], x) + self.theta[a.input_dim];
        }
        let (w1, rest) = self.theta.split_at(a.hidden * a.input_dim);
        let (b1, rest) = rest.split_at(a.hidden);
        let (w2, b2) = rest.split_at(a.hidden);
        let mut s = b2[0];
        for j in 0..a.hidden {
            let z = dot(&w1[j * a.input_dim..(j + 1) * a.input_dim], x) + b1[j];
            s += w2[j] * a.activation.apply(z);
        }
        s
    }

    /// Adds `coef * d score(x) / d theta` into `grad`.
    pub fn accumulate_score_grad(&self, x: &[f64], coef: f64, grad: &mut [f64]) {
        if coef == 0.0 {
            return;
        }
        let a = self.arch;
        let d = a.input_dim;
        if a.hidden == 0 {
            for (g, xi) in grad[..d].iter_mut().zip(x) {
                *g += coef * xi;
            }
            grad[d] += coef;
            return;
        }
        let h = a.hidden;
        let (w1, rest) = self.theta.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let w2 = &rest[..h];
        let (g_w1, g_rest) = grad.split_at_mut(h * d);
        let (g_b1, g_rest) = g_rest.split_at_mut(h);
        let (g_w2, g_b2) = g_rest.split_at_mut(h);
        for j in 0..h {
            let z = dot(&w1[j * d..(j + 1) * d], x) + b1[j];
            let hj = a.activation.apply(z);
            g_w2[j] += coef * hj;
            let back = coef * w2[j] * a.activation.derivative(z, hj);
            if back != 0.0 {
                g_b1[j] += back;
                for (g, xi) in g_w1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += back * xi;
                }
            }
        }
        g_b2[0] += coef;
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Loads a checkpoint, refusing one whose architecture differs from
    /// `expected` when given.
    pub fn load(path: impl AsRef<Path>, expected: Option<Architecture>) -> Result<Self, PolicyError> {
        let p = Self::read_from(&mut BufReader::new(File::open(path)?))?;
        if let Some(e) = expected {
            if e != p.arch {
                return Err(PolicyError::DimensionMismatch { expected: e, found: p.arch });
            }
        }
        Ok(p)
    }

    /// Binary layout, little endian: magic `RXPOLICY`, u32 format (1),
    /// u64 input_dim, u64 hidden, u8 activation, u64 version, u64 count,
    /// then `count` f64 values.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_FORMAT)?;
        w.write_u64::<LittleEndian>(self.arch.input_dim as u64)?;
        w.write_u64::<LittleEndian>(self.arch.hidden as u64)?;
        w.write_u8(self.arch.activation.code())?;
        w.write_u64::<LittleEndian>(self.version)?;
        w.write_u64::<LittleEndian>(self.theta.len() as u64)?;
        for &v in &self.theta {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, PolicyError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(PolicyError::Checkpoint("not a policy checkpoint".into()));
        }
        let format = r.read_u32::<LittleEndian>()?;
        if format != CHECKPOINT_FORMAT {
            return Err(PolicyError::Checkpoint(format!("unsupported format {format}")));
        }
        let input_dim = r.read_u64::<LittleEndian>()? as usize;
        let hidden = r.read_u64::<LittleEndian>()? as usize;
        let activation =
            Activation::from_code(r.read_u8()?).ok_or_else(|| PolicyError::Checkpoint("unknown activation".into()))?;
        let version = r.read_u64::<LittleEndian>()?;
        let count = r.read_u64::<LittleEndian>()? as usize;
        let arch = Architecture { input_dim, hidden, activation };
        if count != arch.param_count() {
            return Err(PolicyError::Checkpoint(format!(
                "{count} parameters stored, architecture needs {}",
                arch.param_count()
            )));
        }
        let mut theta = vec![0.0; count];
        r.read_f64_into::<LittleEndian>(&mut theta)?;
        Ok(PolicyParams { arch, theta, version })
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"RXPOLICY";
const CHECKPOINT_FORMAT: u32 = 1;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Masked softmax over a fixed number of slots. Slots at or beyond
/// `filled()` have probability 0 and log-probability negative infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    filled: usize,
}

impl ActionDistribution {
    /// Panics unless `1 <= logits.len() <= slots`.
    pub fn from_logits(logits: &[f64], slots: usize) -> Self {
        let filled = logits.len();
        assert!(filled >= 1 && filled <= slots, "{filled} candidates for {slots} slots");
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let mut log_probs = vec![f64::NEG_INFINITY; slots];
        let mut probs = vec![0.0; slots];
        for (k, l) in logits.iter().enumerate() {
            log_probs[k] = l - lse;
            probs[k] = log_probs[k].exp();
        }
        ActionDistribution { probs, log_probs, filled }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn filled(&self) -> usize {
        self.filled
    }

    pub fn slots(&self) -> usize {
        self.probs.len()
    }

    pub fn entropy(&self) -> f64 {
        -(0..self.filled).map(|k| self.probs[k] * self.log_probs[k]).sum::<f64>()
    }

    /// Most probable slot; ties go to the lowest slot.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for k in 1..self.filled {
            if self.probs[k] > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

pub fn logits(params: &PolicyParams, features: &[Vec<f64>]) -> Vec<f64> {
    features.iter().map(|x| params.score(x)).collect()
}

pub fn action_distribution(params: &PolicyParams, features: &[Vec<f64>], slots: usize) -> ActionDistribution {
    ActionDistribution::from_logits(&logits(params, features), slots)
}

/// Draws a slot by inverse CDF over the filled slots.
pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut slot = dist.filled - 1;
    for k in 0..dist.filled {
        acc += dist.probs[k];
        if u < acc {
            slot = k;
            break;
        }
    }
    (slot, dist.log_probs[slot])
}

/// Gradient of `log pi(chosen)` with respect to the parameters.
pub fn log_prob_grad(params: &PolicyParams, features: &[Vec<f64>], chosen: usize) -> Vec<f64> {
    assert!(chosen < features.len(), "slot {chosen} is not filled");
    let dist = action_distribution(params, features, features.len());
    let mut grad = vec![0.0; params.theta.len()];
    for (k, x) in features.iter().enumerate() {
        let coef = if k == chosen { 1.0 } else { 0.0 } - dist.probs[k];
        params.accumulate_score_grad(x, coef, &mut grad);
    }
    grad
}
