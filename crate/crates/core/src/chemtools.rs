//! The six structural analysis tools. Each returns a one-line plain-text
//! report plus the structured payload it renders.
//!
//! Text layouts:
//!
//! ```text
//! Weight      335.14
//! FuncGroups  carboxylic acid (1), primary amine (1)
//! Scaffold    [Scaffold] c1ccc2ncccc2c1; rings=2; hetero=1
//! BRICS       frag_count=3; frags=[CCN, c1ccncc1, C(=O)O]
//! Rings       total=3; arom=2; hetero=1; [6A,6A,5H]
//! Sites       count=2; sites=[carbonyl, nucl_amine]
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::{molecular_weight, BondOrder, Molecule};
use crate::pattern::{
    count_unique_matches, enumerate_matches, has_substruct_match, parse_smarts, Pattern, PatternError,
};

pub const DEFAULT_FUNCGROUPS: &str = include_str!("../data/funcgroups.txt");
pub const DEFAULT_SITES: &str = include_str!("../data/sites.txt");
pub const DEFAULT_BRICS: &str = include_str!("../data/brics.txt");

#[derive(Debug, Error)]
pub enum TableError {
    #[error("pattern table line {line}: expected 'name: SMARTS'")]
    Format { line: usize },
    #[error("pattern table line {line}: {source}")]
    Pattern {
        line: usize,
        #[source]
        source: PatternError,
    },
    #[error("cleavage rule on line {line} needs map labels 1 and 2 on bonded atoms")]
    CleavageRule { line: usize },
    #[error("reading pattern table: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered `name: SMARTS` table. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone)]
pub struct PatternTable {
    entries: Vec<(String, Pattern)>,
}

impl PatternTable {
    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut entries = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, smarts) = line.split_once(':').ok_or(TableError::Format { line: no + 1 })?;
            let (name, smarts) = (name.trim(), smarts.trim());
            if name.is_empty() || smarts.is_empty() {
                return Err(TableError::Format { line: no + 1 });
            }
            let p = parse_smarts(smarts).map_err(|source| TableError::Pattern { line: no + 1, source })?;
            entries.push((name.to_string(), p));
        }
        Ok(PatternTable { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TableError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[(String, Pattern)] {
        &self.entries
    }
}

/// BRICS-style cleavage rule: the bond between labels 1 and 2.
#[derive(Debug, Clone)]
pub struct CleavageRule {
    pub name: String,
    pub pattern: Pattern,
    ends: (usize, usize),
}

fn cleavage_rules(table: &PatternTable) -> Result<Vec<CleavageRule>, TableError> {
    table
        .entries()
        .iter()
        .enumerate()
        .map(|(i, (name, p))| {
            let ends = match (p.atom_with_map(1), p.atom_with_map(2)) {
                (Some(a), Some(b)) if p.bond_between(a, b).is_some() => (a, b),
                _ => return Err(TableError::CleavageRule { line: i + 1 }),
            };
            Ok(CleavageRule { name: name.clone(), pattern: p.clone(), ends })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToolKind {
    Weight,
    FuncGroups,
    Scaffold,
    #[serde(rename = "BRICS")]
    Brics,
    Rings,
    Sites,
}

impl ToolKind {
    pub const ALL: [ToolKind; 6] =
        [ToolKind::Weight, ToolKind::FuncGroups, ToolKind::Scaffold, ToolKind::Brics, ToolKind::Rings, ToolKind::Sites];

    /// Lower-case key used in JSON requests.
    pub fn key(self) -> &'static str {
        match self {
            ToolKind::Weight => "weight",
            ToolKind::FuncGroups => "funcgroups",
            ToolKind::Scaffold => "scaffold",
            ToolKind::Brics => "brics",
            ToolKind::Rings => "rings",
            ToolKind::Sites => "sites",
        }
    }
}

impl FromStr for ToolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolKind::ALL.into_iter().find(|k| k.key().eq_ignore_ascii_case(s)).ok_or_else(|| format!("unknown tool '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ToolPayload {
    Weight(f64),
    FuncGroups(Vec<(String, usize)>),
    Scaffold { smiles: Option<String>, rings: usize, hetero: usize },
    Brics(Vec<String>),
    Rings { total: usize, arom: usize, hetero: usize, labels: Vec<String> },
    Sites(Vec<String>),
}

impl fmt::Display for ToolPayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ToolPayload::Weight(w) => write!(f, "{w:.2}"),
            ToolPayload::FuncGroups(groups) if groups.is_empty() => f.write_str("none"),
            ToolPayload::FuncGroups(groups) => {
                let parts: Vec<String> = groups.iter().map(|(n, c)| format!("{n} ({c})")).collect();
                f.write_str(&parts.join(", "))
            }
            ToolPayload::Scaffold { smiles, rings, hetero } => {
                write!(f, "[Scaffold] {}; rings={rings}; hetero={hetero}", smiles.as_deref().unwrap_or("none"))
            }
            ToolPayload::Brics(frags) => write!(f, "frag_count={}; frags=[{}]", frags.len(), frags.join(", ")),
            ToolPayload::Rings { total, arom, hetero, labels } => {
                write!(f, "total={total}; arom={arom}; hetero={hetero}; [{}]", labels.join(","))
            }
            ToolPayload::Sites(sites) => write!(f, "count={}; sites=[{}]", sites.len(), sites.join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolReport {
    pub kind: ToolKind,
    pub text: String,
    pub payload: ToolPayload,
}

/// Tool configuration: the editable pattern tables.
#[derive(Debug, Clone)]
pub struct ChemTools {
    funcgroups: PatternTable,
    sites: PatternTable,
    cleavage: Vec<CleavageRule>,
}

static DEFAULT_TOOLS: Lazy<ChemTools> = Lazy::new(|| {
    ChemTools::new(
        PatternTable::parse(DEFAULT_FUNCGROUPS).expect("default functional groups"),
        PatternTable::parse(DEFAULT_SITES).expect("default sites"),
        PatternTable::parse(DEFAULT_BRICS).expect("default cleavage rules"),
    )
    .expect("default cleavage rules are well formed")
});

impl Default for ChemTools {
    fn default() -> Self {
        DEFAULT_TOOLS.clone()
    }
}

impl ChemTools {
    pub fn new(funcgroups: PatternTable, sites: PatternTable, cleavage: PatternTable) -> Result<Self, TableError> {
        Ok(ChemTools { funcgroups, sites, cleavage: cleavage_rules(&cleavage)? })
    }

    pub fn site_table(&self) -> &PatternTable {
        &self.sites
    }

    pub fn report(&self, kind: ToolKind, m: &Molecule) -> ToolReport {
        let payload = match kind {
            ToolKind::Weight => ToolPayload::Weight(molecular_weight(m)),
            ToolKind::FuncGroups => ToolPayload::FuncGroups(
                self.funcgroups
                    .entries()
                    .iter()
                    .map(|(name, p)| (name.clone(), count_unique_matches(m, p)))
                    .filter(|&(_, c)| c > 0)
                    .collect(),
            ),
            ToolKind::Scaffold => {
                let scaffold = murcko_scaffold(m);
                let info = scaffold.as_ref().map(|s| s.ring_info().clone()).unwrap_or_default();
                ToolPayload::Scaffold {
                    smiles: scaffold.map(|s| s.canonical_smiles().to_string()),
                    rings: info.ring_count,
                    hetero: info.hetero_ring_count,
                }
            }
            ToolKind::Brics => {
                ToolPayload::Brics(self.fragments(m).iter().map(|f| f.canonical_smiles().to_string()).collect())
            }
            ToolKind::Rings => {
                let info = m.ring_info();
                let mut rings: Vec<(usize, u8, String)> = info
                    .rings
                    .iter()
                    .zip(&info.aromatic)
                    .map(|(r, &arom)| {
                        let hetero = r.iter().any(|&a| !m.atom(a).element.is_carbon());
                        let (order, tag) = match (arom, hetero) {
                            (true, _) => (0, 'A'),
                            (false, true) => (1, 'H'),
                            (false, false) => (2, 'C'),
                        };
                        (r.len(), order, format!("{}{tag}", r.len()))
                    })
                    .collect();
                rings.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                ToolPayload::Rings {
                    total: info.ring_count,
                    arom: info.aromatic_ring_count,
                    hetero: info.hetero_ring_count,
                    labels: rings.into_iter().map(|r| r.2).collect(),
                }
            }
            ToolKind::Sites => ToolPayload::Sites(self.sites(m)),
        };
        ToolReport { kind, text: payload.to_string(), payload }
    }

    /// Motif names from the site table that occur in `m`, in table order.
    pub fn sites(&self, m: &Molecule) -> Vec<String> {
        self.sites.entries().iter().filter(|(_, p)| has_substruct_match(m, p)).map(|(n, _)| n.clone()).collect()
    }

    /// Bonds cut by the cleavage rules: acyclic single bonds only.
    pub fn cleavable_bonds(&self, m: &Molecule) -> Vec<usize> {
        let mut cut = Vec::new();
        for rule in &self.cleavage {
            for map in enumerate_matches(m, &rule.pattern) {
                let bi = m.bond_index(map[rule.ends.0], map[rule.ends.1]).expect("pattern bond");
                if !m.bond_in_ring(bi) && m.bonds()[bi].order == BondOrder::Single && !cut.contains(&bi) {
                    cut.push(bi);
                }
            }
        }
        cut.sort_unstable();
        cut
    }

    /// Hydrogen-capped fragments after cutting every cleavable bond, ordered
    /// by the lowest canonical rank they contain in the parent.
    pub fn fragments(&self, m: &Molecule) -> Vec<Molecule> {
        let cut = self.cleavable_bonds(m);
        let all = vec![true; m.atom_count()];
        let pieces = m.fragment(&all, &cut).expect("capping cut bonds keeps valences");
        let ranks = m.canonical_ranks();
        let mut comps = pieces.components();
        comps.sort_by_key(|c| c.iter().map(|&a| ranks[a]).min());
        comps
            .iter()
            .map(|c| {
                let mut keep = vec![false; m.atom_count()];
                for &a in c {
                    keep[a] = true;
                }
                pieces.fragment(&keep, &[]).expect("component of a valid molecule")
            })
            .collect()
    }
}

/// Ring systems plus linkers: degree-1 non-ring atoms are pruned until none
/// remain. `None` for acyclic molecules.
pub fn murcko_scaffold(m: &Molecule) -> Option<Molecule> {
    if m.ring_info().ring_count == 0 {
        return None;
    }
    let n = m.atom_count();
    let mut keep = vec![true; n];
    let mut degree: Vec<usize> = (0..n).map(|i| m.degree(i)).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&i| degree[i] <= 1 && !m.atom(i).in_ring).collect();
    while let Some(a) = stack.pop() {
        if !keep[a] {
            continue;
        }
        keep[a] = false;
        for &(nb, _) in m.neighbors(a) {
            if keep[nb] {
                degree[nb] -= 1;
                if degree[nb] <= 1 && !m.atom(nb).in_ring {
                    stack.push(nb);
                }
            }
        }
    }
    Some(m.fragment(&keep, &[]).expect("pruning keeps valences"))
}

/// Report with the default pattern tables.
pub fn tool_report(kind: ToolKind, m: &Molecule) -> ToolReport {
    DEFAULT_TOOLS.report(kind, m)
}

/// All six reports in [`ToolKind::ALL`] order.
pub fn all_reports(tools: &ChemTools, m: &Molecule) -> Vec<ToolReport> {
    ToolKind::ALL.iter().map(|&k| tools.report(k, m)).collect()
}
