//! Clustering evaluation: ACC under optimal label matching, NMI and purity.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Minimum-cost perfect matching on a square cost matrix
/// (Kuhn-Munkres, O(k³) potentials formulation).
///
/// Returns `assignment[row] = col`.
pub fn hungarian(cost: &Matrix) -> Result<Vec<usize>> {
    if !cost.is_square() {
        return Err(Error::shape("hungarian", cost.shape(), (cost.rows(), cost.rows())));
    }
    if !cost.is_finite() {
        return Err(Error::Numeric("hungarian needs finite costs".into()));
    }
    let n = cost.rows();
    // 1-based potentials; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

fn check_lengths(y: &[usize], c: &[usize]) -> Result<()> {
    if y.len() != c.len() {
        return Err(Error::shape("labels", (y.len(), 1), (c.len(), 1)));
    }
    if y.is_empty() {
        return Err(Error::Argument("metrics need at least one sample".into()));
    }
    Ok(())
}

/// Square contingency table, `table[t][p]` = samples with true label `t`
/// and predicted label `p`, zero-padded to `max(k_true, k_pred)`.
pub fn contingency(y: &[usize], c: &[usize]) -> Result<Vec<Vec<usize>>> {
    check_lengths(y, c)?;
    let k = y.iter().chain(c).max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; k]; k];
    for (&t, &p) in y.iter().zip(c) {
        table[t][p] += 1;
    }
    Ok(table)
}

/// Optimal mapping from predicted to true labels: `map[pred] = true`.
pub fn best_mapping(y: &[usize], c: &[usize]) -> Result<Vec<usize>> {
    let table = contingency(y, c)?;
    let k = table.len();
    // rows are predicted clusters, columns true classes
    let cost = Matrix::from_fn(k, k, |p, t| -(table[t][p] as f64));
    hungarian(&cost)
}

/// Fraction of samples matched after the best one-to-one relabeling.
pub fn accuracy(y: &[usize], c: &[usize]) -> Result<f64> {
    let map = best_mapping(y, c)?;
    let hits = y.iter().zip(c).filter(|(&t, &p)| map[p] == t).count();
    Ok(hits as f64 / y.len() as f64)
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by `max(H(Y), H(Ŷ))`.
///
/// Two single-class partitions score 1; exactly one single-class
/// partition scores 0.
pub fn nmi(y: &[usize], c: &[usize]) -> Result<f64> {
    let table = contingency(y, c)?;
    let n = y.len() as f64;
    let k = table.len();
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..k).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let hy = entropy(&rows, n);
    let hc = entropy(&cols, n);
    let denom = hy.max(hc);
    if denom == 0.0 {
        return Ok(1.0);
    }
    if hy == 0.0 || hc == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (t, row) in table.iter().enumerate() {
        for (p, &count) in row.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let pxy = count as f64 / n;
            mi += pxy * (pxy / ((rows[t] as f64 / n) * (cols[p] as f64 / n))).ln();
        }
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Share of samples belonging to the majority true class of their cluster.
pub fn purity(y: &[usize], c: &[usize]) -> Result<f64> {
    let table = contingency(y, c)?;
    let k = table.len();
    let majority: usize = (0..k).map(|p| table.iter().map(|r| r[p]).max().unwrap_or(0)).sum();
    Ok(majority as f64 / y.len() as f64)
}

/// Predicted labels with their scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterReport {
    pub predicted: Vec<usize>,
    pub acc: f64,
    pub nmi: f64,
    pub pur: f64,
    /// Rows are true classes, columns predicted clusters reordered so that
    /// column `t` holds the cluster matched to class `t`.
    pub confusion: Vec<Vec<usize>>,
}

impl ClusterReport {
    pub fn evaluate(y: &[usize], predicted: Vec<usize>) -> Result<Self> {
        let table = contingency(y, &predicted)?;
        let map = best_mapping(y, &predicted)?;
        let k = table.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for (t, row) in table.iter().enumerate() {
            for (p, &count) in row.iter().enumerate() {
                confusion[t][map[p]] += count;
            }
        }
        Ok(Self {
            acc: accuracy(y, &predicted)?,
            nmi: nmi(y, &predicted)?,
            pur: purity(y, &predicted)?,
            predicted,
            confusion,
        })
    }
}
