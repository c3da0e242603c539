//! Surrogate scoring functions and the budgeted call meter.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprints::{ecfp4, tanimoto, Fingerprint};
use crate::molgraph::{molecular_weight, parse_smiles, Molecule};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid oracle spec: {0}")]
    Spec(String),
    #[error("oracle budget of {budget} calls exhausted")]
    BudgetExhausted { budget: usize },
    #[error("writing oracle log: {0}")]
    Io(#[from] std::io::Error),
}

fn default_decay() -> f64 {
    1.0
}

fn default_falloff() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    /// Tanimoto similarity to `target`.
    SimilarityToTarget { target: String },
    /// One minus Tanimoto similarity to `reference`.
    Dissimilarity { reference: String },
    /// exp(-decay * |rings - goal|).
    RingCountTarget {
        goal: u32,
        #[serde(default = "default_decay")]
        decay: f64,
    },
    /// 1 inside [min, max], falling linearly to 0 over `falloff` Daltons.
    WeightWindow {
        min: f64,
        max: f64,
        #[serde(default = "default_falloff")]
        falloff: f64,
    },
    /// Weighted geometric mean of the components.
    Composite { components: Vec<Component> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub oracle: OracleSpec,
}

#[derive(Debug, Clone)]
enum Kind {
    Similarity(Fingerprint),
    Dissimilarity(Fingerprint),
    Rings { goal: u32, decay: f64 },
    Weight { min: f64, max: f64, falloff: f64 },
    Composite(Vec<(f64, Oracle)>),
}

#[derive(Debug, Clone)]
pub struct Oracle {
    spec: OracleSpec,
    kind: Kind,
}

fn target_fp(smiles: &str) -> Result<Fingerprint, OracleError> {
    parse_smiles(smiles).map(|m| ecfp4(&m)).map_err(|e| OracleError::Spec(format!("target '{smiles}': {e}")))
}

pub fn build_oracle(spec: &OracleSpec) -> Result<Oracle, OracleError> {
    let bad = |msg: &str| Err(OracleError::Spec(msg.to_string()));
    let kind = match spec {
        OracleSpec::SimilarityToTarget { target } => Kind::Similarity(target_fp(target)?),
        OracleSpec::Dissimilarity { reference } => Kind::Dissimilarity(target_fp(reference)?),
        &OracleSpec::RingCountTarget { goal, decay } => {
            if !(decay > 0.0 && decay.is_finite()) {
                return bad("ring decay must be positive");
            }
            Kind::Rings { goal, decay }
        }
        &OracleSpec::WeightWindow { min, max, falloff } => {
            if !(min <= max && min.is_finite() && max.is_finite()) {
                return bad("weight window must satisfy min <= max");
            }
            if !(falloff > 0.0 && falloff.is_finite()) {
                return bad("weight falloff must be positive");
            }
            Kind::Weight { min, max, falloff }
        }
        OracleSpec::Composite { components } => {
            if components.is_empty() {
                return bad("composite needs at least one component");
            }
            let mut parts = Vec::with_capacity(components.len());
            for c in components {
                if !(c.weight > 0.0 && c.weight.is_finite()) {
                    return bad("composite weights must be positive");
                }
                parts.push((c.weight, build_oracle(&c.oracle)?));
            }
            Kind::Composite(parts)
        }
    };
    Ok(Oracle { spec: spec.clone(), kind })
}

impl Oracle {
    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    pub fn score(&self, m: &Molecule) -> f64 {
        let s = match &self.kind {
            Kind::Similarity(t) => tanimoto(&ecfp4(m), t).expect("same parameters"),
            Kind::Dissimilarity(t) => 1.0 - tanimoto(&ecfp4(m), t).expect("same parameters"),
            Kind::Rings { goal, decay } => {
                let diff = (m.ring_info().ring_count as f64 - *goal as f64).abs();
                (-decay * diff).exp()
            }
            Kind::Weight { min, max, falloff } => {
                let w = molecular_weight(m);
                let dist = if w < *min {
                    min - w
                } else if w > *max {
                    w - max
                } else {
                    0.0
                };
                (1.0 - dist / falloff).max(0.0)
            }
            Kind::Composite(parts) => {
                let total: f64 = parts.iter().map(|(w, _)| w).sum();
                let mut log_sum = 0.0;
                for (w, o) in parts {
                    let s = o.score(m);
                    if s <= 0.0 {
                        return 0.0;
                    }
                    log_sum += w * s.ln();
                }
                (log_sum / total).exp()
            }
        };
        s.clamp(0.0, 1.0)
    }

    /// Fingerprint of the similarity target, when the objective has one.
    pub fn similarity_target(&self) -> Option<&Fingerprint> {
        match &self.kind {
            Kind::Similarity(t) => Some(t),
            Kind::Composite(parts) => parts.iter().find_map(|(_, o)| o.similarity_target()),
            _ => None,
        }
    }

    /// Plain-language objective passed to proposers.
    pub fn describe(&self) -> String {
        match &self.spec {
            OracleSpec::SimilarityToTarget { target } => format!("maximize similarity to {target}"),
            OracleSpec::Dissimilarity { reference } => format!("minimize similarity to {reference}"),
            OracleSpec::RingCountTarget { goal, .. } => format!("reach a total ring count of {goal}"),
            OracleSpec::WeightWindow { min, max, .. } => format!("keep molecular weight within {min}-{max}"),
            OracleSpec::Composite { .. } => {
                let Kind::Composite(parts) = &self.kind else { unreachable!() };
                let items: Vec<String> = parts.iter().map(|(_, o)| o.describe()).collect();
                items.join("; ")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCall {
    /// 1-based position in the meter's call sequence.
    pub call: usize,
    pub smiles: String,
    pub score: f64,
}

#[derive(Debug, Default)]
struct MeterState {
    log: Vec<OracleCall>,
    seen: HashMap<String, f64>,
}

/// Budgeted, logged access to an oracle. Increments are serialized, so
/// concurrent callers observe strictly increasing call indices.
#[derive(Debug)]
pub struct OracleMeter {
    budget: usize,
    dedup: bool,
    state: Mutex<MeterState>,
}

impl OracleMeter {
    pub fn new(budget: usize) -> Self {
        OracleMeter { budget, dedup: false, state: Mutex::new(MeterState::default()) }
    }

    /// Repeated molecules return the recorded score without spending budget.
    pub fn with_dedup(mut self, dedup: bool) -> Self {
        self.dedup = dedup;
        self
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn used(&self) -> usize {
        self.state.lock().log.len()
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.used()
    }

    pub fn evaluate(&self, oracle: &Oracle, m: &Molecule) -> Result<f64, OracleError> {
        let mut st = self.state.lock();
        let smiles = m.canonical_smiles();
        if self.dedup {
            if let Some(&s) = st.seen.get(smiles) {
                return Ok(s);
            }
        }
        if st.log.len() >= self.budget {
            return Err(OracleError::BudgetExhausted { budget: self.budget });
        }
        let score = oracle.score(m);
        let call = st.log.len() + 1;
        st.log.push(OracleCall { call, smiles: smiles.to_string(), score });
        if self.dedup {
            st.seen.insert(smiles.to_string(), score);
        }
        Ok(score)
    }

    pub fn log(&self) -> Vec<OracleCall> {
        self.state.lock().log.clone()
    }

    /// Writes the log as one JSON record per line.
    pub fn write_log(&self, path: impl AsRef<Path>) -> Result<(), OracleError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for call in self.state.lock().log.iter() {
            serde_json::to_writer(&mut out, call).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn read_oracle_log(path: impl AsRef<Path>) -> Result<Vec<OracleCall>, OracleError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| OracleError::Io(e.into())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mol(s: &str) -> Molecule {
        parse_smiles(s).unwrap()
    }

    #[test]
    fn self_similarity_is_one() {
        let o = build_oracle(&OracleSpec::SimilarityToTarget { target: "CC(=O)Nc1ccc(O)cc1".into() }).unwrap();
        assert_eq!(o.score(&mol("CC(=O)Nc1ccc(O)cc1")), 1.0);
        assert!(o.score(&mol("CCO")) < 1.0);
    }

    #[test]
    fn ring_target_exact_hit() {
        let o = build_oracle(&OracleSpec::RingCountTarget { goal: 3, decay: 1.0 }).unwrap();
        assert_eq!(o.score(&mol("c1ccc2cc3ccccc3cc2c1")), 1.0);
        assert!((o.score(&mol("c1ccccc1")) - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn weight_window_falloff() {
        let o = build_oracle(&OracleSpec::WeightWindow { min: 100.0, max: 200.0, falloff: 50.0 }).unwrap();
        assert_eq!(o.score(&mol("c1ccccc1C(=O)O")), 1.0);
        assert_eq!(o.score(&mol("O")), 0.0);
        let methanol = mol("CO");
        let expect = 1.0 - (100.0 - molecular_weight(&methanol)) / 50.0;
        assert!((o.score(&methanol) - expect.max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn composite_geometric_mean() {
        // Ring goal 0 scores 1.0 on an acyclic molecule; goal 2 with decay ln 4 scores 0.25.
        let spec = OracleSpec::Composite {
            components: vec![
                Component { weight: 1.0, oracle: OracleSpec::RingCountTarget { goal: 0, decay: 1.0 } },
                Component { weight: 1.0, oracle: OracleSpec::RingCountTarget { goal: 1, decay: 4f64.ln() } },
            ],
        };
        let o = build_oracle(&spec).unwrap();
        assert!((o.score(&mol("CCO")) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            OracleSpec::SimilarityToTarget { target: "C1CC".into() },
            OracleSpec::WeightWindow { min: 5.0, max: 1.0, falloff: 1.0 },
            OracleSpec::RingCountTarget { goal: 1, decay: 0.0 },
            OracleSpec::Composite { components: vec![] },
            OracleSpec::Composite {
                components: vec![Component {
                    weight: -1.0,
                    oracle: OracleSpec::RingCountTarget { goal: 1, decay: 1.0 },
                }],
            },
        ] {
            assert!(matches!(build_oracle(&spec), Err(OracleError::Spec(_))), "{spec:?}");
        }
    }

    #[test]
    fn budget_boundary() {
        let o = build_oracle(&OracleSpec::RingCountTarget { goal: 1, decay: 1.0 }).unwrap();
        let meter = OracleMeter::new(1);
        meter.evaluate(&o, &mol("C1CC1")).unwrap();
        assert_eq!(meter.used(), 1);
        assert!(matches!(meter.evaluate(&o, &mol("C1CC1")), Err(OracleError::BudgetExhausted { budget: 1 })));
        assert_eq!(meter.log().len(), 1);
    }

    #[test]
    fn duplicates_consume_budget_unless_deduped() {
        let o = build_oracle(&OracleSpec::RingCountTarget { goal: 1, decay: 1.0 }).unwrap();
        let m = mol("CCO");
        let plain = OracleMeter::new(5);
        plain.evaluate(&o, &m).unwrap();
        plain.evaluate(&o, &m).unwrap();
        assert_eq!(plain.used(), 2);
        let dedup = OracleMeter::new(5).with_dedup(true);
        dedup.evaluate(&o, &m).unwrap();
        dedup.evaluate(&o, &m).unwrap();
        assert_eq!(dedup.used(), 1);
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let text = r#"
kind = "composite"
[[components]]
weight = 2.0
oracle = { kind = "similarity_to_target", target = "c1ccccc1" }
[[components]]
weight = 1.0
oracle = { kind = "weight_window", min = 150.0, max = 350.0 }
"#;
        let spec: OracleSpec = toml::from_str(text).unwrap();
        let o = build_oracle(&spec).unwrap();
        assert!(o.similarity_target().is_some());
        assert_eq!(o.describe(), "maximize similarity to c1ccccc1; keep molecular weight within 150-350");
    }
}
