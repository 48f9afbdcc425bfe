//! Clustering quality metrics: accuracy (weighted cluster purity),
//! weighted F1 over cluster-majority predictions, and normalized mutual
//! information.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

fn check_lengths(assignments: &[usize], labels: &[usize]) -> Result<()> {
    if assignments.is_empty() || labels.is_empty() {
        return Err(Error::TooFewSamples { got: 0, min: 1 });
    }
    if assignments.len() != labels.len() {
        return Err(Error::Other(format!(
            "assignments ({}) and labels ({}) differ in length",
            assignments.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Majority ground-truth label per cluster; ties break to the smallest
/// label. Returns the per-sample predicted labels.
pub fn majority_predictions(assignments: &[usize], labels: &[usize]) -> Vec<usize> {
    let mut tallies: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&c, &l) in assignments.iter().zip(labels.iter()) {
        *tallies.entry(c).or_default().entry(l).or_default() += 1;
    }
    let majority: BTreeMap<usize, usize> = tallies
        .into_iter()
        .map(|(c, counts)| {
            // BTreeMap iterates labels ascending, so > keeps the smallest on ties
            let (label, _) = counts
                .into_iter()
                .fold((usize::MAX, 0usize), |acc, (l, n)| if n > acc.1 { (l, n) } else { acc });
            (c, label)
        })
        .collect();
    assignments.iter().map(|c| majority[c]).collect()
}

/// Weighted cluster purity: each cluster contributes its majority-label
/// count; the sum is divided by N.
pub fn cluster_accuracy(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(assignments, labels)?;
    let preds = majority_predictions(assignments, labels);
    let correct = preds.iter().zip(labels.iter()).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Per-class F1 of the induced majority-label predictions, weighted by
/// class support. Classes with no true and no predicted samples would
/// carry zero support, so they cannot arise from the label set itself.
pub fn weighted_f1(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(assignments, labels)?;
    Ok(f1_breakdown(assignments, labels).0)
}

fn f1_breakdown(assignments: &[usize], labels: &[usize]) -> (f64, Vec<ClassF1>) {
    let preds = majority_predictions(assignments, labels);
    let classes: Vec<usize> = {
        let mut c: Vec<usize> = labels.to_vec();
        c.sort_unstable();
        c.dedup();
        c
    };
    let n = labels.len() as f64;
    let mut weighted = 0.0;
    let mut breakdown = Vec::with_capacity(classes.len());
    for &class in &classes {
        let tp = preds.iter().zip(labels.iter()).filter(|&(p, l)| *p == class && *l == class).count() as f64;
        let fp = preds.iter().zip(labels.iter()).filter(|&(p, l)| *p == class && *l != class).count() as f64;
        let fn_ = preds.iter().zip(labels.iter()).filter(|&(p, l)| *p != class && *l == class).count() as f64;
        let support = tp + fn_;
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
        weighted += f1 * support / n;
        breakdown.push(ClassF1 { label: class, support: support as usize, f1 });
    }
    (weighted, breakdown)
}

/// Normalized mutual information I(A;L) / sqrt(H(A) H(L)), natural log.
/// Defined as 0 when exactly one entropy is zero and 1 when both are.
pub fn nmi(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(assignments, labels)?;
    let n = labels.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut pa: BTreeMap<usize, usize> = BTreeMap::new();
    let mut pl: BTreeMap<usize, usize> = BTreeMap::new();
    for (&a, &l) in assignments.iter().zip(labels.iter()) {
        *joint.entry((a, l)).or_default() += 1;
        *pa.entry(a).or_default() += 1;
        *pl.entry(l).or_default() += 1;
    }
    let entropy = |counts: &BTreeMap<usize, usize>| -> f64 {
        counts
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let ha = entropy(&pa);
    let hl = entropy(&pl);
    if ha == 0.0 && hl == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hl == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (&(a, l), &c) in &joint {
        let pj = c as f64 / n;
        let pa_ = pa[&a] as f64 / n;
        let pl_ = pl[&l] as f64 / n;
        mi += pj * (pj / (pa_ * pl_)).ln();
    }
    Ok((mi / (ha * hl).sqrt()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassF1 {
    pub label: usize,
    pub support: usize,
    pub f1: f64,
}

/// Full clustering evaluation bundle.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub cluster_accuracy: f64,
    pub weighted_f1: f64,
    pub nmi: f64,
    pub per_class: Vec<ClassF1>,
    pub n_samples: usize,
    pub n_classes: usize,
}

pub fn clustering_report(assignments: &[usize], labels: &[usize]) -> Result<MetricsReport> {
    check_lengths(assignments, labels)?;
    let (weighted, per_class) = f1_breakdown(assignments, labels);
    Ok(MetricsReport {
        cluster_accuracy: cluster_accuracy(assignments, labels)?,
        weighted_f1: weighted,
        nmi: nmi(assignments, labels)?,
        n_classes: per_class.len(),
        per_class,
        n_samples: labels.len(),
    })
}
