//! Summary statistics over trial records.

use super::record::TrialRecord;

/// Weighted least-squares non-decreasing fit (pool adjacent violators).
pub fn isotonic_increasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len(), "one weight per value");
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            let w = w1 + w2;
            let mean = if w > 0.0 { (m1 * w1 + m2 * w2) / w } else { (m1 + m2) / 2.0 };
            blocks.truncate(blocks.len() - 2);
            blocks.push((mean, w, l1 + l2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(mean, _, len)| std::iter::repeat_n(mean, len))
        .collect()
}

/// First x at which `ys` reaches `level`, linearly interpolated between
/// neighbouring sweep points. `xs` must be increasing.
pub fn crossing(xs: &[f64], ys: &[f64], level: f64) -> Option<f64> {
    let first = ys.iter().position(|y| *y >= level)?;
    if first == 0 {
        return Some(xs[0]);
    }
    let (x0, x1) = (xs[first - 1], xs[first]);
    let (y0, y1) = (ys[first - 1], ys[first]);
    if y1 == y0 {
        return Some(x1);
    }
    Some(x0 + (level - y0) * (x1 - x0) / (y1 - y0))
}

/// Aggregate over the rows of one (cell, variant, solver) group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub cell_index: usize,
    pub cell: String,
    pub variant: String,
    pub solver: String,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub rows: usize,
    pub successes: usize,
    pub mean_ops: Option<f64>,
    pub mean_stability: Option<f64>,
    pub regime: String,
}

impl GroupSummary {
    pub fn rate(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.successes as f64 / self.rows as f64
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Groups rows by (cell, variant, solver) in order of first appearance.
pub fn summarize(records: &[TrialRecord]) -> Vec<GroupSummary> {
    let mut keys: Vec<(usize, &str, &str)> = Vec::new();
    for r in records {
        let key = (r.cell_index, r.variant.as_str(), r.solver.as_str());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(cell_index, variant, solver)| {
            let rows: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.cell_index == cell_index && r.variant == variant && r.solver == solver)
                .collect();
            let first = rows[0];
            GroupSummary {
                cell_index,
                cell: first.cell.clone(),
                variant: variant.to_string(),
                solver: solver.to_string(),
                m: first.m,
                k: first.k,
                n: first.n,
                rows: rows.len(),
                successes: rows.iter().filter(|r| r.outcome() == Some(true)).count(),
                mean_ops: mean(rows.iter().filter_map(|r| r.total_ops).map(|v| v as f64)),
                mean_stability: mean(rows.iter().filter_map(|r| r.stability_ratio)),
                regime: first.regime.clone(),
            }
        })
        .collect()
}
