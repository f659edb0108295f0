//! Scoring a fused map against ground truth.
//!
//! Height errors are mean absolute `h_max` differences over the cells that
//! both grids define; `mhe` covers every such cell (it is also known as the
//! mean absolute error, MAE) and `mte` only the traversable ones. Collision
//! decisions are scored with adjacency tolerance: a predicted collision cell
//! is a true positive when it or one of its neighbors is a ground-truth
//! collision cell, and a ground-truth collision cell is recalled when it or
//! one of its neighbors is predicted. Cells the map never populated count as
//! predicted free.

use std::fmt::Write as _;

use crate::config::{DecisionRule, EvalConfig};
use crate::error::{Error, Result};
use crate::fusion::MapSnapshot;
use crate::geometry::GridSpec;
use crate::sim::GroundTruthGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightErrors {
    pub mhe: f64,
    pub mte: f64,
    pub cells_compared: usize,
    pub traversable_compared: usize,
    /// Ground-truth cells with a height that the map never populated.
    pub coverage_misses: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CollisionCounts {
    /// Predicted cells with a ground-truth collision within tolerance.
    pub tp: usize,
    pub fp: usize,
    /// Ground-truth collision cells with a prediction within tolerance.
    pub tp_gt: usize,
    pub fn_: usize,
    pub tn: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub counts: CollisionCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub valid: bool,
    pub heights: HeightErrors,
    pub collision: CollisionMetrics,
    pub decision_rule: DecisionRule,
    pub decision_tau: f64,
}

fn check_aligned(a: &GridSpec, b: &GridSpec) -> Result<()> {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1.0);
    if a.cols != b.cols
        || a.rows != b.rows
        || !close(a.resolution, b.resolution)
        || !close(a.origin[0], b.origin[0])
        || !close(a.origin[1], b.origin[1])
    {
        return Err(Error::Eval(format!(
            "map window {a:?} is not aligned with the ground truth {b:?}"
        )));
    }
    Ok(())
}

pub fn height_errors(map: &MapSnapshot, gt: &GroundTruthGrid) -> Result<HeightErrors> {
    check_aligned(&map.spec, &gt.spec)?;
    let (mut sum, mut n, mut sum_t, mut n_t, mut misses) = (0.0, 0usize, 0.0, 0usize, 0usize);
    for (i, truth) in gt.h_max.iter().enumerate() {
        let Some(truth) = truth else { continue };
        let Some(cell) = &map.cells[i] else {
            misses += 1;
            continue;
        };
        let e = (cell.h_max - truth).abs();
        sum += e;
        n += 1;
        if gt.traversable(i) {
            sum_t += e;
            n_t += 1;
        }
    }
    let mean = |s: f64, k: usize| if k == 0 { f64::NAN } else { s / k as f64 };
    Ok(HeightErrors {
        mhe: mean(sum, n),
        mte: mean(sum_t, n_t),
        cells_compared: n,
        traversable_compared: n_t,
        coverage_misses: misses,
    })
}

/// Predicted collision mask: populated cells whose collision probability
/// under `rule` is at least `decision_tau`.
pub fn predicted_collisions(map: &MapSnapshot, rule: DecisionRule, decision_tau: f64) -> Vec<bool> {
    map.cells
        .iter()
        .map(|c| {
            c.is_some_and(|c| {
                let p = match rule {
                    DecisionRule::Posterior => c.r_coll,
                    DecisionRule::MeanEvidence => c.r_coll_mean,
                };
                p >= decision_tau
            })
        })
        .collect()
}

/// Adjacency-tolerant scoring of two boolean masks over `spec`. `radius` is
/// the Chebyshev tolerance in cells (1 = the eight neighbors).
pub fn score_masks(spec: &GridSpec, predicted: &[bool], truth: &[bool], radius: usize) -> CollisionMetrics {
    let near = |mask: &[bool], i: usize| {
        let (x, y) = spec.coords(i);
        let r = radius as isize;
        (-r..=r).any(|dy| {
            (-r..=r).any(|dx| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                nx >= 0
                    && ny >= 0
                    && (nx as usize) < spec.cols
                    && (ny as usize) < spec.rows
                    && mask[spec.index(nx as usize, ny as usize)]
            })
        })
    };
    let mut c = CollisionCounts {
        total: spec.len(),
        ..Default::default()
    };
    for i in 0..spec.len() {
        if predicted[i] {
            if near(truth, i) {
                c.tp += 1;
            } else {
                c.fp += 1;
            }
        }
        if truth[i] {
            if near(predicted, i) {
                c.tp_gt += 1;
            } else {
                c.fn_ += 1;
            }
        }
    }
    c.tn = c.total - c.tp - c.fp - c.fn_;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp_gt, c.tp_gt + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    CollisionMetrics {
        precision,
        recall,
        f1,
        accuracy: ratio(c.tp + c.tn, c.total),
        counts: c,
    }
}

pub fn collision_metrics(map: &MapSnapshot, gt: &GroundTruthGrid, decision: &EvalConfig) -> Result<CollisionMetrics> {
    check_aligned(&map.spec, &gt.spec)?;
    let pred = predicted_collisions(map, decision.decision_rule, decision.decision_tau);
    Ok(score_masks(&gt.spec, &pred, &gt.collision, 1))
}

pub fn evaluate(map: &MapSnapshot, gt: &GroundTruthGrid, decision: &EvalConfig) -> Result<EvalReport> {
    let heights = height_errors(map, gt)?;
    let collision = collision_metrics(map, gt, decision)?;
    Ok(EvalReport {
        valid: heights.cells_compared > 0,
        heights,
        collision,
        decision_rule: decision.decision_rule,
        decision_tau: decision.decision_tau,
    })
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let h = &self.heights;
        let c = &self.collision;
        let k = &c.counts;
        let mut s = String::new();
        if !self.valid {
            s.push_str("INVALID: the map and the ground truth share no cells\n");
        }
        let _ = writeln!(
            s,
            "height error (mhe)      {:.4} m over {} cells",
            h.mhe, h.cells_compared
        );
        let _ = writeln!(
            s,
            "traversable error (mte) {:.4} m over {} cells",
            h.mte, h.traversable_compared
        );
        let _ = writeln!(s, "coverage misses         {}", h.coverage_misses);
        let _ = writeln!(
            s,
            "collision decision      {} >= {}",
            self.decision_rule, self.decision_tau
        );
        let _ = writeln!(s, "precision               {:.4}", c.precision);
        let _ = writeln!(s, "recall                  {:.4}", c.recall);
        let _ = writeln!(s, "f1                      {:.4}", c.f1);
        let _ = writeln!(s, "accuracy                {:.4}", c.accuracy);
        let _ = writeln!(
            s,
            "counts                  tp={} fp={} tp_gt={} fn={} tn={} total={}",
            k.tp, k.fp, k.tp_gt, k.fn_, k.tn, k.total
        );
        s
    }

    /// One `key=value` pair per line.
    pub fn to_key_values(&self) -> String {
        let h = &self.heights;
        let c = &self.collision;
        let k = &c.counts;
        let pairs: [(&str, String); 18] = [
            ("valid", self.valid.to_string()),
            ("mhe", h.mhe.to_string()),
            ("mae", h.mhe.to_string()),
            ("mte", h.mte.to_string()),
            ("cells_compared", h.cells_compared.to_string()),
            ("traversable_compared", h.traversable_compared.to_string()),
            ("coverage_misses", h.coverage_misses.to_string()),
            ("decision_rule", self.decision_rule.to_string()),
            ("decision_tau", self.decision_tau.to_string()),
            ("precision", c.precision.to_string()),
            ("recall", c.recall.to_string()),
            ("f1", c.f1.to_string()),
            ("accuracy", c.accuracy.to_string()),
            ("tp", k.tp.to_string()),
            ("fp", k.fp.to_string()),
            ("tp_gt", k.tp_gt.to_string()),
            ("fn", k.fn_.to_string()),
            ("tn", k.tn.to_string()),
        ];
        pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
