//! Refresh placement for a fixed per-layer level budget.

use serde::{Deserialize, Serialize};

use super::{GraphError, HcnnGraph};

/// What the planner needs to know about one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub cost: usize,
    /// Ciphertexts a refresh before this layer would process.
    pub live_cts: usize,
    pub refresh_allowed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelPlan {
    pub start_level: usize,
    pub refresh_target: usize,
    /// Layers preceded by a refresh, ascending.
    pub refresh_points: Vec<usize>,
    /// Level at each layer's input, after any refresh.
    pub entry_level: Vec<usize>,
    pub final_level: usize,
}

impl LevelPlan {
    pub fn refreshes_before(&self, layer: usize) -> bool {
        self.refresh_points.binary_search(&layer).is_ok()
    }
}

/// `(refresh count, ciphertexts refreshed, positions)`, compared lexicographically.
type Score = (usize, usize, Vec<usize>);

/// Level trajectory of a given refresh placement, or `None` when some layer runs short.
pub fn simulate(steps: &[PlanStep], start_level: usize, refresh_target: usize, points: &[usize]) -> Option<Vec<usize>> {
    let mut level = start_level;
    let mut entry = Vec::with_capacity(steps.len());
    for (i, s) in steps.iter().enumerate() {
        if points.contains(&i) {
            if !s.refresh_allowed {
                return None;
            }
            level = refresh_target;
        }
        if level < s.cost {
            return None;
        }
        entry.push(level);
        level -= s.cost;
    }
    Some(entry)
}

/// Fewest refreshes; among those, fewest ciphertexts refreshed; then earliest positions.
pub fn plan_profile(steps: &[PlanStep], start_level: usize, refresh_target: usize) -> Result<LevelPlan, GraphError> {
    if let Some((i, s)) = steps.iter().enumerate().find(|(_, s)| s.cost > refresh_target.max(start_level)) {
        return Err(GraphError::Infeasible(format!("layer {i} needs {} levels, refresh target is {refresh_target}", s.cost)));
    }
    let top = start_level.max(refresh_target);
    let mut best: Vec<Option<Score>> = vec![None; top + 1];
    best[start_level] = Some((0, 0, Vec::new()));
    for (i, s) in steps.iter().enumerate() {
        let mut next: Vec<Option<Score>> = vec![None; top + 1];
        let relax = |slot: &mut Option<Score>, cand: Score| {
            if slot.as_ref().is_none_or(|cur| cand < *cur) {
                *slot = Some(cand);
            }
        };
        for (level, score) in best.iter().enumerate() {
            let Some(score) = score else { continue };
            if level >= s.cost {
                relax(&mut next[level - s.cost], score.clone());
            }
            if s.refresh_allowed && refresh_target >= s.cost {
                let mut pos = score.2.clone();
                pos.push(i);
                relax(&mut next[refresh_target - s.cost], (score.0 + 1, score.1 + s.live_cts, pos));
            }
        }
        best = next;
    }
    let (_, _, points) = best
        .into_iter()
        .flatten()
        .min()
        .ok_or_else(|| GraphError::Infeasible("no refresh placement fits the level budget".into()))?;
    let entry_level = simulate(steps, start_level, refresh_target, &points).expect("planned trajectory is feasible");
    let final_level = match (entry_level.last(), steps.last()) {
        (Some(l), Some(s)) => l - s.cost,
        _ => start_level,
    };
    Ok(LevelPlan { start_level, refresh_target, refresh_points: points, entry_level, final_level })
}

/// Plan options; defaults start at the top level and refresh to one below it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanOptions {
    pub max_level: usize,
    pub start_level: Option<usize>,
    pub refresh_target: Option<usize>,
}

impl PlanOptions {
    pub fn new(max_level: usize) -> Self {
        Self { max_level, start_level: None, refresh_target: None }
    }
}

pub fn plan_steps(graph: &HcnnGraph) -> Vec<PlanStep> {
    graph
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| PlanStep { cost: l.node.level_cost(), live_cts: l.live_cts, refresh_allowed: graph.refresh_allowed(i) })
        .collect()
}

pub fn plan_levels(graph: &HcnnGraph, opts: PlanOptions) -> Result<LevelPlan, GraphError> {
    let start = opts.start_level.unwrap_or(opts.max_level);
    let target = opts.refresh_target.unwrap_or(opts.max_level.saturating_sub(1));
    if target > opts.max_level || start > opts.max_level {
        return Err(GraphError::Infeasible(format!(
            "start level {start} and refresh target {target} must not exceed {}",
            opts.max_level
        )));
    }
    plan_profile(&plan_steps(graph), start, target)
}
