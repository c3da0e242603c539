//! Reaction proposers: the wire types, a deterministic heuristic proposer
//! and an HTTP client for remote proposers.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemtools::{ChemTools, ToolKind};
use crate::fingerprints::{ecfp4, splitmix64, Fingerprint};
use crate::molgraph::{parse_smiles, Molecule};
use crate::pattern::has_substruct_match;
use crate::reactions::{apply_template, ReactionTemplate, TemplateLibrary};

/// Fewest heavy atoms a building block may have.
pub const MIN_BLOCK_HEAVY_ATOMS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateDescriptor {
    pub id: String,
    pub name: String,
    pub arity: usize,
    pub reactant_smarts: Vec<String>,
}

impl From<&ReactionTemplate> for TemplateDescriptor {
    fn from(t: &ReactionTemplate) -> Self {
        TemplateDescriptor {
            id: t.id().to_string(),
            name: t.name().to_string(),
            arity: t.arity(),
            reactant_smarts: t.record().reactant_smarts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSummary {
    pub weight: String,
    pub funcgroups: String,
    pub scaffold: String,
    pub brics: String,
    pub rings: String,
    pub sites: String,
}

impl ToolSummary {
    pub fn compute(tools: &ChemTools, m: &Molecule) -> Self {
        let text = |k| tools.report(k, m).text;
        ToolSummary {
            weight: text(ToolKind::Weight),
            funcgroups: text(ToolKind::FuncGroups),
            scaffold: text(ToolKind::Scaffold),
            brics: text(ToolKind::Brics),
            rings: text(ToolKind::Rings),
            sites: text(ToolKind::Sites),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerRequest {
    pub task_id: String,
    pub smiles: String,
    pub objective: String,
    pub templates: Vec<TemplateDescriptor>,
    pub tools: ToolSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub template_id: String,
    pub building_blocks: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposerResponse {
    pub proposals: Vec<Proposal>,
}

#[derive(Debug, Error)]
pub enum ProposerError {
    #[error("proposer timed out: {0}")]
    Timeout(String),
    #[error("proposer protocol error: {0}")]
    Protocol(String),
    #[error("proposer unavailable: {0}")]
    Unavailable(String),
}

pub trait Proposer: Send + Sync {
    fn propose(&self, request: &ProposerRequest) -> Result<ProposerResponse, ProposerError>;
}

/// Drops entries naming templates absent from the request, unparsable
/// SMILES and single-atom building blocks, logging each reason.
pub fn validate_response(request: &ProposerRequest, response: ProposerResponse) -> ProposerResponse {
    let proposals = response
        .proposals
        .into_iter()
        .filter(|p| {
            let Some(t) = request.templates.iter().find(|t| t.id == p.template_id) else {
                log::warn!("dropping proposal: template '{}' was not offered", p.template_id);
                return false;
            };
            if p.building_blocks.len() + 1 != t.arity {
                log::warn!(
                    "dropping proposal for '{}': {} building blocks for arity {}",
                    t.id,
                    p.building_blocks.len(),
                    t.arity
                );
                return false;
            }
            p.building_blocks.iter().all(|s| match parse_smiles(s) {
                Ok(m) if m.heavy_atom_count() >= MIN_BLOCK_HEAVY_ATOMS => true,
                Ok(_) => {
                    log::warn!("dropping proposal for '{}': building block '{s}' is a single atom", t.id);
                    false
                }
                Err(e) => {
                    log::warn!("dropping proposal for '{}': building block '{s}': {e}", t.id);
                    false
                }
            })
        })
        .collect();
    ProposerResponse { proposals }
}

/// Deterministic stand-in for an agent: round-robin over matched templates,
/// blocks ranked smallest first, then by overlap with the objective's
/// target fingerprint, then by a seeded hash.
pub struct HeuristicProposer {
    library: Arc<TemplateLibrary>,
    blocks: Vec<Molecule>,
    /// Per template (library order), per slot: compatible block indices in rank order.
    compatible: Vec<Vec<Vec<usize>>>,
    k_max: usize,
}

fn string_hash(seed: u64, s: &str) -> u64 {
    s.bytes().fold(splitmix64(seed), |h, b| splitmix64(h ^ b as u64))
}

fn overlap(block: &Fingerprint, target: &Fingerprint) -> f64 {
    let on = block.on_bits();
    if on.is_empty() {
        return 0.0;
    }
    on.iter().filter(|&&b| target.get(b)).count() as f64 / on.len() as f64
}

impl HeuristicProposer {
    pub fn new(
        library: Arc<TemplateLibrary>,
        blocks: Vec<Molecule>,
        k_max: usize,
        seed: u64,
        target: Option<&Fingerprint>,
    ) -> Self {
        let blocks: Vec<Molecule> =
            blocks.into_iter().filter(|b| b.heavy_atom_count() >= MIN_BLOCK_HEAVY_ATOMS).collect();
        let keys: Vec<(usize, i64, u64)> = blocks
            .iter()
            .map(|b| {
                let ov = target.map_or(0.0, |t| overlap(&ecfp4(b), t));
                (b.heavy_atom_count(), -(ov * 1e6).round() as i64, string_hash(seed, b.canonical_smiles()))
            })
            .collect();
        let compatible = library
            .templates()
            .iter()
            .map(|t| {
                t.reactant_patterns()
                    .iter()
                    .map(|p| {
                        let mut idx: Vec<usize> =
                            (0..blocks.len()).filter(|&i| has_substruct_match(&blocks[i], p)).collect();
                        idx.sort_by_key(|&i| keys[i]);
                        idx
                    })
                    .collect()
            })
            .collect();
        HeuristicProposer { library, blocks, compatible, k_max }
    }

    pub fn blocks(&self) -> &[Molecule] {
        &self.blocks
    }

    /// Block tuples for the non-input slots, best first.
    fn block_tuples(&self, t_index: usize, input: usize) -> Vec<Vec<usize>> {
        let t = &self.library.templates()[t_index];
        let lists: Vec<&Vec<usize>> = t.block_slots(input).into_iter().map(|s| &self.compatible[t_index][s]).collect();
        match lists.as_slice() {
            [] => vec![vec![]],
            [a] => a.iter().map(|&i| vec![i]).collect(),
            [a, b] => {
                let mut pairs: Vec<(usize, usize)> =
                    (0..a.len()).flat_map(|i| (0..b.len()).map(move |j| (i, j))).collect();
                pairs.sort_by_key(|&(i, j)| (i + j, i, j));
                pairs.into_iter().map(|(i, j)| vec![a[i], b[j]]).collect()
            }
            _ => unreachable!("arity is at most 3"),
        }
    }
}

impl Proposer for HeuristicProposer {
    fn propose(&self, request: &ProposerRequest) -> Result<ProposerResponse, ProposerError> {
        let m = parse_smiles(&request.smiles).map_err(|e| ProposerError::Protocol(e.to_string()))?;
        // One queue per offered template, each yielding valid distinct proposals lazily.
        let mut queues = Vec::new();
        for d in &request.templates {
            let Some(t_index) = self.library.templates().iter().position(|t| t.id() == d.id) else {
                continue;
            };
            let t = &self.library.templates()[t_index];
            let Some(input) = t.slot_for(&m) else { continue };
            queues.push((t_index, input, self.block_tuples(t_index, input).into_iter()));
        }
        let mut products: Vec<String> = vec![m.canonical_smiles().to_string()];
        let mut proposals = Vec::new();
        let mut active = true;
        while active && proposals.len() < self.k_max {
            active = false;
            for (t_index, input, tuples) in queues.iter_mut() {
                if proposals.len() >= self.k_max {
                    break;
                }
                let t = &self.library.templates()[*t_index];
                for tuple in tuples.by_ref() {
                    let mut blocks = tuple.iter().map(|&i| &self.blocks[i]);
                    let reactants: Vec<&Molecule> =
                        (0..t.arity()).map(|s| if s == *input { &m } else { blocks.next().unwrap() }).collect();
                    let Ok(product) = apply_template(t, &reactants) else { continue };
                    if products.iter().any(|p| p == product.canonical_smiles()) {
                        continue;
                    }
                    products.push(product.canonical_smiles().to_string());
                    proposals.push(Proposal {
                        template_id: t.id().to_string(),
                        building_blocks: tuple.iter().map(|&i| self.blocks[i].canonical_smiles().to_string()).collect(),
                    });
                    active = true;
                    break;
                }
            }
        }
        Ok(ProposerResponse { proposals })
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Posts the request as JSON to `endpoint` and reads a JSON response.
pub struct RemoteProposer {
    endpoint: String,
    agent: ureq::Agent,
}

impl RemoteProposer {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        RemoteProposer { endpoint: endpoint.into(), agent }
    }
}

impl Proposer for RemoteProposer {
    fn propose(&self, request: &ProposerRequest) -> Result<ProposerResponse, ProposerError> {
        let mut response = self.agent.post(&self.endpoint).send_json(request).map_err(|e| match e {
            ureq::Error::Timeout(t) => ProposerError::Timeout(t.to_string()),
            ureq::Error::StatusCode(code) => ProposerError::Protocol(format!("HTTP status {code}")),
            ureq::Error::Io(ref io) if io.kind() == std::io::ErrorKind::TimedOut => {
                ProposerError::Timeout(e.to_string())
            }
            other => ProposerError::Unavailable(other.to_string()),
        })?;
        let body: ProposerResponse =
            response.body_mut().read_json().map_err(|e| ProposerError::Protocol(e.to_string()))?;
        Ok(validate_response(request, body))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reactions::match_templates;

    fn request(lib: &TemplateLibrary, smiles: &str) -> ProposerRequest {
        let m = parse_smiles(smiles).unwrap();
        ProposerRequest {
            task_id: "t".into(),
            smiles: smiles.into(),
            objective: "test".into(),
            templates: match_templates(&m, lib).iter().map(|t| TemplateDescriptor::from(t.as_ref())).collect(),
            tools: ToolSummary::compute(&ChemTools::default(), &m),
        }
    }

    fn lib_with(ids: &[&str]) -> Arc<TemplateLibrary> {
        let text: String = crate::reactions::DEFAULT_LIBRARY
            .lines()
            .filter(|l| ids.iter().any(|id| l.contains(&format!("\"id\":\"{id}\""))))
            .map(|l| format!("{l}\n"))
            .collect();
        Arc::new(TemplateLibrary::from_jsonl(&text).unwrap())
    }

    fn blocks(smiles: &[&str]) -> Vec<Molecule> {
        smiles.iter().map(|s| parse_smiles(s).unwrap()).collect()
    }

    #[test]
    fn unimolecular_template_gives_one_proposal() {
        let lib = lib_with(&["nitrile_to_tetrazole"]);
        let p = HeuristicProposer::new(lib.clone(), blocks(&["CCO"]), 10, 1, None);
        let r = p.propose(&request(&lib, "CC#N")).unwrap();
        assert_eq!(r.proposals, vec![Proposal { template_id: "nitrile_to_tetrazole".into(), building_blocks: vec![] }]);
    }

    #[test]
    fn round_robin_covers_templates_before_repeating() {
        let lib = lib_with(&["n_alkylation", "reductive_amination"]);
        let p = HeuristicProposer::new(
            lib.clone(),
            blocks(&["CCBr", "CCCBr", "CCCCBr", "O=Cc1ccccc1", "O=Cc1ccncc1", "O=Cc1ccco1"]),
            10,
            7,
            None,
        );
        let r = p.propose(&request(&lib, "NCc1ccccc1")).unwrap();
        assert_eq!(r.proposals.len(), 6, "{:?}", r.proposals);
        assert_ne!(r.proposals[0].template_id, r.proposals[1].template_id);
        assert_eq!(r.proposals[0].building_blocks, vec!["CCBr".to_string()]);
        let capped = HeuristicProposer::new(lib.clone(), p.blocks().to_vec(), 3, 7, None);
        assert_eq!(capped.propose(&request(&lib, "NCc1ccccc1")).unwrap().proposals.len(), 3);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let lib = Arc::new(TemplateLibrary::default_library());
        let bb = blocks(&["CCBr", "BrCC", "CBr", "ICC", "CC(=O)O", "CC=O", "OB(O)c1ccccc1", "CS(=O)(=O)Cl"]);
        let a = HeuristicProposer::new(lib.clone(), bb.clone(), 10, 3, None);
        let b = HeuristicProposer::new(lib.clone(), bb, 10, 3, None);
        let req = request(&lib, "Nc1ccc(Br)cc1");
        let ra = serde_json::to_string(&a.propose(&req).unwrap()).unwrap();
        let rb = serde_json::to_string(&b.propose(&req).unwrap()).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn validation_drops_bad_entries() {
        let lib = lib_with(&["n_alkylation"]);
        let req = request(&lib, "CCN");
        let resp = ProposerResponse {
            proposals: vec![
                Proposal { template_id: "made_up".into(), building_blocks: vec!["CCBr".into()] },
                Proposal { template_id: "n_alkylation".into(), building_blocks: vec!["O".into()] },
                Proposal { template_id: "n_alkylation".into(), building_blocks: vec!["C1CC".into()] },
                Proposal { template_id: "n_alkylation".into(), building_blocks: vec![] },
                Proposal { template_id: "n_alkylation".into(), building_blocks: vec!["CCBr".into()] },
            ],
        };
        let kept = validate_response(&req, resp);
        assert_eq!(
            kept.proposals,
            vec![Proposal { template_id: "n_alkylation".into(), building_blocks: vec!["CCBr".into()] }]
        );
    }
}
