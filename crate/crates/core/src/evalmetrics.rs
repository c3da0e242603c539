//! Benchmark metrics over oracle call logs: Top-k, the area under the running
//! Top-k curve, and internal diversity.
//!
//! Molecules are deduplicated by canonical SMILES, keeping each one's best
//! score. With fewer than `k` distinct molecules, Top-k averages the ones
//! available. The running curve takes, at call `c`, the Top-k over every
//! record with call index `<= c` (0 before the first record) and is held at
//! its last value up to the budget; the AUC is its mean over calls `1..=B`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprints::{ecfp4, tanimoto, Fingerprint};
use crate::molgraph::parse_smiles;
use crate::oracles::OracleCall;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("score history is empty")]
    EmptyHistory,
    #[error("internal diversity needs at least two molecules, got {0}")]
    TooFew(usize),
    #[error("invalid history: {0}")]
    InvalidHistory(String),
}

/// Validated oracle log.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistory {
    calls: Vec<OracleCall>,
}

impl ScoreHistory {
    /// Checks that call indices strictly increase and scores lie in [0, 1].
    pub fn new(calls: Vec<OracleCall>) -> Result<Self, MetricsError> {
        for (i, c) in calls.iter().enumerate() {
            if !(0.0..=1.0).contains(&c.score) {
                return Err(MetricsError::InvalidHistory(format!("score {} at call {}", c.score, c.call)));
            }
            if i > 0 && c.call <= calls[i - 1].call {
                return Err(MetricsError::InvalidHistory(format!("call index {} after {}", c.call, calls[i - 1].call)));
            }
        }
        Ok(ScoreHistory { calls })
    }

    /// History from plain scores with call indices `1..=n` and one distinct
    /// placeholder name per call.
    pub fn from_scores(scores: &[f64]) -> Result<Self, MetricsError> {
        Self::new(
            scores
                .iter()
                .enumerate()
                .map(|(i, &score)| OracleCall { call: i + 1, smiles: format!("#{}", i + 1), score })
                .collect(),
        )
    }

    pub fn calls(&self) -> &[OracleCall] {
        &self.calls
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn last_call(&self) -> usize {
        self.calls.last().map_or(0, |c| c.call)
    }

    /// Best score per distinct molecule, best first; ties by SMILES.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut best: HashMap<&str, f64> = HashMap::new();
        for c in &self.calls {
            let e = best.entry(&c.smiles).or_insert(c.score);
            if c.score > *e {
                *e = c.score;
            }
        }
        let mut out: Vec<(String, f64)> = best.into_iter().map(|(s, v)| (s.to_string(), v)).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

pub fn top_k(history: &ScoreHistory, k: usize) -> Result<f64, MetricsError> {
    if history.is_empty() {
        return Err(MetricsError::EmptyHistory);
    }
    let ranked = history.ranked();
    let n = k.min(ranked.len()).max(1);
    Ok(mean(ranked[..n].iter().map(|(_, v)| *v)))
}

/// Mean taken as deviations from the first value, so equal values average
/// to themselves exactly.
fn mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(pivot) = it.next() else { return 0.0 };
    let n = values.clone().count() as f64;
    pivot + values.map(|v| v - pivot).sum::<f64>() / n
}

/// Running Top-k of the deduplicated scores.
struct RunningTopK {
    k: usize,
    best: HashMap<String, f64>,
    top: Vec<(f64, String)>,
}

impl RunningTopK {
    fn new(k: usize) -> Self {
        RunningTopK { k: k.max(1), best: HashMap::new(), top: Vec::new() }
    }

    fn push(&mut self, smiles: &str, score: f64) {
        match self.best.get_mut(smiles) {
            Some(old) if *old >= score => return,
            Some(old) => *old = score,
            None => {
                self.best.insert(smiles.to_string(), score);
            }
        }
        if let Some(entry) = self.top.iter_mut().find(|(_, s)| s == smiles) {
            entry.0 = score;
        } else if self.top.len() < self.k || score > self.top.last().unwrap().0 {
            self.top.push((score, smiles.to_string()));
        } else {
            return;
        }
        self.top.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        self.top.truncate(self.k);
    }

    fn value(&self) -> f64 {
        mean(self.top.iter().map(|(v, _)| *v))
    }
}

/// Running Top-k after each record, paired with the record's call index.
pub fn running_top_k(history: &ScoreHistory, k: usize) -> Vec<(usize, f64)> {
    let mut run = RunningTopK::new(k);
    history
        .calls
        .iter()
        .map(|c| {
            run.push(&c.smiles, c.score);
            (c.call, run.value())
        })
        .collect()
}

pub fn auc_top_k(history: &ScoreHistory, k: usize, budget: usize) -> Result<f64, MetricsError> {
    if history.is_empty() {
        return Err(MetricsError::EmptyHistory);
    }
    if history.last_call() > budget {
        return Err(MetricsError::InvalidHistory(format!("call {} exceeds budget {budget}", history.last_call())));
    }
    // Piecewise-constant segments (value, length). Summing deviations from the
    // first segment keeps a constant curve exact.
    let mut segments: Vec<(f64, usize)> = Vec::new();
    let running = running_top_k(history, k);
    let first_call = running[0].0;
    if first_call > 1 {
        segments.push((0.0, first_call - 1));
    }
    for (i, &(call, value)) in running.iter().enumerate() {
        let end = running.get(i + 1).map_or(budget + 1, |n| n.0);
        segments.push((value, end - call));
    }
    let base = segments[0].0;
    let b = budget as f64;
    Ok(base + segments.iter().map(|&(v, len)| (v - base) * len as f64).sum::<f64>() / b)
}

/// One minus the mean pairwise Tanimoto similarity.
pub fn internal_diversity(fps: &[Fingerprint]) -> Result<f64, MetricsError> {
    let n = fps.len();
    if n < 2 {
        return Err(MetricsError::TooFew(n));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += tanimoto(&fps[i], &fps[j]).map_err(|e| MetricsError::InvalidHistory(e.to_string()))?;
        }
    }
    Ok(1.0 - 2.0 * sum / (n * (n - 1)) as f64)
}

pub fn internal_diversity_of_smiles(smiles: &[&str]) -> Result<f64, MetricsError> {
    let fps = smiles
        .iter()
        .map(|s| parse_smiles(s).map(|m| ecfp4(&m)).map_err(|e| MetricsError::InvalidHistory(format!("{s}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    internal_diversity(&fps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub budget: usize,
    pub calls: usize,
    pub unique_molecules: usize,
    pub top1: f64,
    pub top10: f64,
    pub top100: f64,
    pub auc_top1: f64,
    pub auc_top10: f64,
    pub auc_top100: f64,
    /// Over the 100 best distinct molecules; absent with fewer than two.
    pub int_div_top100: Option<f64>,
    pub best: Vec<(String, f64)>,
}

impl MetricsReport {
    pub fn compute(history: &ScoreHistory, budget: usize) -> Result<Self, MetricsError> {
        let ranked = history.ranked();
        let top: Vec<&str> = ranked.iter().take(100).map(|(s, _)| s.as_str()).collect();
        let int_div = if top.len() >= 2 { Some(internal_diversity_of_smiles(&top)?) } else { None };
        Ok(MetricsReport {
            budget,
            calls: history.len(),
            unique_molecules: ranked.len(),
            top1: top_k(history, 1)?,
            top10: top_k(history, 10)?,
            top100: top_k(history, 100)?,
            auc_top1: auc_top_k(history, 1, budget)?,
            auc_top10: auc_top_k(history, 10, budget)?,
            auc_top100: auc_top_k(history, 100, budget)?,
            int_div_top100: int_div,
            best: ranked.into_iter().take(10).collect(),
        })
    }

    /// Plain `key = value` summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "budget = {}", self.budget);
        let _ = writeln!(s, "calls = {}", self.calls);
        let _ = writeln!(s, "unique_molecules = {}", self.unique_molecules);
        for (k, v) in [
            ("top1", self.top1),
            ("top10", self.top10),
            ("top100", self.top100),
            ("auc_top1", self.auc_top1),
            ("auc_top10", self.auc_top10),
            ("auc_top100", self.auc_top100),
        ] {
            let _ = writeln!(s, "{k} = {v:.6}");
        }
        match self.int_div_top100 {
            Some(d) => {
                let _ = writeln!(s, "int_div_top100 = {d:.6}");
            }
            None => {
                let _ = writeln!(s, "int_div_top100 = n/a");
            }
        }
        for (i, (smi, v)) in self.best.iter().enumerate() {
            let _ = writeln!(s, "best.{} = {v:.6} {smi}", i + 1);
        }
        s
    }
}

/// Per-call curve as CSV: `call,smiles,score,top1,top10,top100`.
pub fn curve_csv(history: &ScoreHistory) -> String {
    let r1 = running_top_k(history, 1);
    let r10 = running_top_k(history, 10);
    let r100 = running_top_k(history, 100);
    let mut out = String::from("call,smiles,score,top1,top10,top100\n");
    for (i, c) in history.calls().iter().enumerate() {
        let _ = writeln!(out, "{},{},{:.6},{:.6},{:.6},{:.6}", c.call, c.smiles, c.score, r1[i].1, r10[i].1, r100[i].1);
    }
    out
}

pub fn write_curve(history: &ScoreHistory, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, curve_csv(history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(i: usize, s: &str, v: f64) -> OracleCall {
        OracleCall { call: i, smiles: s.into(), score: v }
    }

    #[test]
    fn top_k_worked_examples() {
        assert_eq!(top_k(&ScoreHistory::from_scores(&[0.7]).unwrap(), 10).unwrap(), 0.7);
        // 0.85 is not representable; the mean of the doubles 0.9 and 0.8 rounds one ulp above it.
        assert!(
            (top_k(&ScoreHistory::from_scores(&[0.9, 0.8, 0.1]).unwrap(), 2).unwrap() - 0.85).abs() <= f64::EPSILON
        );
        let h = ScoreHistory::new(vec![call(1, "CC", 0.4), call(2, "CC", 0.6), call(3, "CO", 0.2)]).unwrap();
        assert_eq!(top_k(&h, 2).unwrap(), 0.4);
        assert_eq!(top_k(&ScoreHistory::new(vec![]).unwrap(), 1), Err(MetricsError::EmptyHistory));
    }

    #[test]
    fn auc_worked_examples() {
        assert_eq!(auc_top_k(&ScoreHistory::from_scores(&[0.5; 7]).unwrap(), 10, 20).unwrap(), 0.5);
        assert_eq!(auc_top_k(&ScoreHistory::from_scores(&[0.0, 1.0]).unwrap(), 1, 2).unwrap(), 0.5);
        let h = ScoreHistory::new(vec![call(3, "CC", 0.8)]).unwrap();
        assert!((auc_top_k(&h, 1, 4).unwrap() - 0.4).abs() < 1e-15);
        assert!(auc_top_k(&h, 1, 2).is_err());
        let c = 0.8970203351977397;
        assert_eq!(auc_top_k(&ScoreHistory::from_scores(&[c; 5]).unwrap(), 3, 37).unwrap(), c);
    }

    #[test]
    fn running_top_k_updates_improved_member() {
        let h = ScoreHistory::new(vec![call(1, "A", 0.2), call(2, "B", 0.4), call(3, "A", 0.9), call(4, "C", 0.1)])
            .unwrap();
        let r: Vec<f64> = running_top_k(&h, 2).into_iter().map(|x| x.1).collect();
        assert_eq!(r, vec![0.2, 0.30000000000000004, 0.65, 0.65]);
    }

    #[test]
    fn diversity_worked_examples() {
        let fp = |bits: &[usize]| Fingerprint::from_on_bits(64, 2, bits).unwrap();
        let a = fp(&[0, 1, 2, 3, 4]);
        let b = fp(&[0, 1, 5, 6, 7, 8, 9]);
        let c = fp(&[0, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert!((internal_diversity(&[a.clone(), b, c]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(internal_diversity(&[a.clone(), a.clone()]).unwrap(), 0.0);
        assert_eq!(internal_diversity(&[fp(&[1]), fp(&[2])]).unwrap(), 1.0);
        assert_eq!(internal_diversity(&[a]), Err(MetricsError::TooFew(1)));
    }

    #[test]
    fn history_validation() {
        assert!(ScoreHistory::new(vec![call(2, "C", 0.1), call(2, "C", 0.1)]).is_err());
        assert!(ScoreHistory::new(vec![call(1, "C", 1.5)]).is_err());
    }
}
