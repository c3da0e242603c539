//! The reaction MDP: states are molecules with their pathway, actions are
//! validated (template, building blocks) reactions plus Stop, transitions
//! are template applications.

mod cache;
mod proposer;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemtools::ChemTools;
use crate::molgraph::{parse_smiles, Molecule};
use crate::reactions::{apply_template, match_templates, TemplateLibrary};

pub use cache::{cache_file_summary, CacheKey, CacheRecord, CacheStats, CachedAction, ReactionCache};
pub use proposer::{
    validate_response, HeuristicProposer, Proposal, Proposer, ProposerError, ProposerRequest, ProposerResponse,
    RemoteProposer, TemplateDescriptor, ToolSummary, DEFAULT_TIMEOUT, MIN_BLOCK_HEAVY_ATOMS,
};

pub const DEFAULT_K_MAX: usize = 10;
pub const DEFAULT_T_MAX: usize = 5;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Proposer(#[from] ProposerError),
    #[error("action is not in the state's action space")]
    InvalidAction,
    #[error("state is already terminal")]
    Terminal,
    #[error("pathway step {step}: {msg}")]
    ReplayMismatch { step: usize, msg: String },
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reaction {
    pub template_id: String,
    pub template_name: String,
    /// Reactant slot held by the current molecule.
    pub input_slot: usize,
    pub building_blocks: Vec<Molecule>,
    pub product: Molecule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum Action {
    Reaction(Reaction),
    Stop,
}

/// Reaction candidates in proposer order, Stop last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    candidates: Vec<Action>,
}

impl ActionSpace {
    pub fn new(candidates: Vec<Action>) -> Self {
        debug_assert_eq!(candidates.last(), Some(&Action::Stop));
        ActionSpace { candidates }
    }

    pub fn candidates(&self) -> &[Action] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, slot: usize) -> Option<&Action> {
        self.candidates.get(slot)
    }

    pub fn reactions(&self) -> impl Iterator<Item = &Reaction> {
        self.candidates.iter().filter_map(|a| match a {
            Action::Reaction(r) => Some(r),
            Action::Stop => None,
        })
    }
}

/// Result of expanding a state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expansion {
    /// No template matches: the episode ends at this molecule.
    Terminal,
    Actions(Arc<ActionSpace>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathwayStep {
    pub template_id: String,
    pub template_name: String,
    pub input_slot: usize,
    pub building_blocks: Vec<String>,
    pub product: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    pub lead: Molecule,
    pub molecule: Molecule,
    pub pathway: Vec<PathwayStep>,
}

impl EnvState {
    pub fn new(lead: Molecule) -> Self {
        EnvState { molecule: lead.clone(), lead, pathway: Vec::new() }
    }

    pub fn depth(&self) -> usize {
        self.pathway.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub state: EnvState,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub task_id: String,
    pub k_max: usize,
    pub t_max: usize,
}

impl EnvConfig {
    pub fn new(task_id: impl Into<String>) -> Self {
        EnvConfig { task_id: task_id.into(), k_max: DEFAULT_K_MAX, t_max: DEFAULT_T_MAX }
    }
}

pub struct Environment {
    config: EnvConfig,
    library: Arc<TemplateLibrary>,
    proposer: Arc<dyn Proposer>,
    cache: Arc<ReactionCache>,
    tools: ChemTools,
    objective: String,
}

impl Environment {
    pub fn new(
        config: EnvConfig,
        library: Arc<TemplateLibrary>,
        proposer: Arc<dyn Proposer>,
        cache: Arc<ReactionCache>,
        objective: impl Into<String>,
    ) -> Self {
        Environment { config, library, proposer, cache, tools: ChemTools::default(), objective: objective.into() }
    }

    pub fn with_tools(mut self, tools: ChemTools) -> Self {
        self.tools = tools;
        self
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn library(&self) -> &Arc<TemplateLibrary> {
        &self.library
    }

    pub fn cache(&self) -> &Arc<ReactionCache> {
        &self.cache
    }

    pub fn objective(&self) -> &str {
        &self.objective
    }

    pub fn cache_key(&self, m: &Molecule) -> CacheKey {
        CacheKey {
            task_id: self.config.task_id.clone(),
            library_digest: self.library.digest().to_string(),
            smiles: m.canonical_smiles().to_string(),
        }
    }

    pub fn request_for(&self, m: &Molecule) -> ProposerRequest {
        ProposerRequest {
            task_id: self.config.task_id.clone(),
            smiles: m.canonical_smiles().to_string(),
            objective: self.objective.clone(),
            templates: match_templates(m, &self.library).iter().map(|t| TemplateDescriptor::from(t.as_ref())).collect(),
            tools: ToolSummary::compute(&self.tools, m),
        }
    }

    /// Action space for `m`, memoized per canonical SMILES.
    pub fn expand(&self, m: &Molecule) -> Result<Arc<Expansion>, EnvError> {
        self.cache.get_or_compute(&self.cache_key(m), || self.build_expansion(m))
    }

    pub fn propose(&self, state: &EnvState) -> Result<Arc<Expansion>, EnvError> {
        self.expand(&state.molecule)
    }

    fn build_expansion(&self, m: &Molecule) -> Result<Expansion, EnvError> {
        let request = self.request_for(m);
        if request.templates.is_empty() {
            return Ok(Expansion::Terminal);
        }
        let response = self.proposer.propose(&request)?;
        let mut candidates: Vec<Action> = Vec::new();
        for p in response.proposals {
            if candidates.len() == self.config.k_max {
                break;
            }
            match self.execute(m, &request, &p) {
                Ok(r) => {
                    let dup = candidates.iter().any(|c| matches!(c, Action::Reaction(o) if o.product == r.product));
                    if dup {
                        log::debug!("dropping duplicate product {} from '{}'", r.product, p.template_id);
                    } else {
                        candidates.push(Action::Reaction(r));
                    }
                }
                Err(reason) => log::debug!("dropping proposal '{}' {:?}: {reason}", p.template_id, p.building_blocks),
            }
        }
        candidates.push(Action::Stop);
        Ok(Expansion::Actions(Arc::new(ActionSpace::new(candidates))))
    }

    fn execute(&self, m: &Molecule, request: &ProposerRequest, p: &Proposal) -> Result<Reaction, String> {
        if !request.templates.iter().any(|t| t.id == p.template_id) {
            return Err("template was not offered".into());
        }
        let t = self.library.get(&p.template_id).ok_or("unknown template")?;
        let input = t.slot_for(m).ok_or("template does not match")?;
        if p.building_blocks.len() + 1 != t.arity() {
            return Err(format!("{} building blocks for arity {}", p.building_blocks.len(), t.arity()));
        }
        let blocks = p
            .building_blocks
            .iter()
            .map(|s| parse_smiles(s).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        if blocks.iter().any(|b| b.heavy_atom_count() < MIN_BLOCK_HEAVY_ATOMS) {
            return Err("single-atom building block".into());
        }
        let mut it = blocks.iter();
        let reactants: Vec<&Molecule> =
            (0..t.arity()).map(|s| if s == input { m } else { it.next().unwrap() }).collect();
        let product = apply_template(t, &reactants).map_err(|e| e.to_string())?;
        Ok(Reaction {
            template_id: t.id().to_string(),
            template_name: t.name().to_string(),
            input_slot: input,
            building_blocks: blocks,
            product,
        })
    }

    /// Applies `action`, which must belong to the state's action space.
    pub fn step(&self, state: &EnvState, action: &Action) -> Result<Transition, EnvError> {
        if state.depth() >= self.config.t_max {
            return Err(EnvError::Terminal);
        }
        let space = match self.propose(state)?.as_ref() {
            Expansion::Terminal => return Err(EnvError::Terminal),
            Expansion::Actions(space) => space.clone(),
        };
        if !space.candidates().contains(action) {
            return Err(EnvError::InvalidAction);
        }
        Ok(self.apply_unchecked(state, action))
    }

    /// Applies the action in `slot` of `space`, which must be the state's
    /// current action space.
    pub fn step_slot(&self, state: &EnvState, space: &ActionSpace, slot: usize) -> Result<Transition, EnvError> {
        let action = space.get(slot).ok_or(EnvError::InvalidAction)?;
        Ok(self.apply_unchecked(state, action))
    }

    fn apply_unchecked(&self, state: &EnvState, action: &Action) -> Transition {
        match action {
            Action::Stop => Transition { state: state.clone(), terminal: true },
            Action::Reaction(r) => {
                let mut next = state.clone();
                next.molecule = r.product.clone();
                next.pathway.push(PathwayStep {
                    template_id: r.template_id.clone(),
                    template_name: r.template_name.clone(),
                    input_slot: r.input_slot,
                    building_blocks: r.building_blocks.iter().map(|b| b.canonical_smiles().to_string()).collect(),
                    product: r.product.canonical_smiles().to_string(),
                });
                let terminal = next.depth() >= self.config.t_max;
                Transition { state: next, terminal }
            }
        }
    }
}

/// Re-runs every step of a pathway from `lead` and checks each recorded
/// product. Returns the final molecule.
pub fn replay_pathway(lib: &TemplateLibrary, lead: &Molecule, steps: &[PathwayStep]) -> Result<Molecule, EnvError> {
    let mut current = lead.clone();
    for (i, step) in steps.iter().enumerate() {
        let fail = |msg: String| EnvError::ReplayMismatch { step: i, msg };
        let t = lib.get(&step.template_id).ok_or_else(|| fail(format!("unknown template '{}'", step.template_id)))?;
        let blocks = step
            .building_blocks
            .iter()
            .map(|s| parse_smiles(s).map_err(|e| fail(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if blocks.len() + 1 != t.arity() || step.input_slot >= t.arity() {
            return Err(fail("building-block count does not fit the template".into()));
        }
        let mut it = blocks.iter();
        let reactants: Vec<&Molecule> =
            (0..t.arity()).map(|s| if s == step.input_slot { &current } else { it.next().unwrap() }).collect();
        let product = apply_template(t, &reactants).map_err(|e| fail(e.to_string()))?;
        if product.canonical_smiles() != step.product {
            return Err(fail(format!("recorded {} but replay gives {}", step.product, product.canonical_smiles())));
        }
        current = product;
    }
    Ok(current)
}
