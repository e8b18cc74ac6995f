use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::table::AssociationCostTable;
use crate::error::{Error, Result};
use crate::rfs::AssociationMap;
use crate::scalar::{log_sum_exp, to_f64, Real};

/// Largest instance accepted by exact enumeration.
pub const MAX_EXACT_ROWS: usize = 6;
pub const MAX_EXACT_MEASUREMENTS: usize = 6;

/// Joint assignment over all table rows. `-1` absent, `0` misdetected,
/// `j > 0` measurement `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawHypothesis<T: Real> {
    pub choices: Vec<i32>,
    pub log_weight: T,
}

pub(crate) fn fits_exact<T: Real>(table: &AssociationCostTable<T>) -> bool {
    table.rows.len() <= MAX_EXACT_ROWS && table.active_measurements() <= MAX_EXACT_MEASUREMENTS
}

/// Every assignment with nonzero weight, by depth-first search.
pub(crate) fn enumerate_raw<T: Real>(table: &AssociationCostTable<T>) -> Result<Vec<RawHypothesis<T>>> {
    if !fits_exact(table) {
        return Err(Error::EnumerationTooLarge {
            rows: table.rows.len(),
            measurements: table.active_measurements(),
        });
    }
    let mut out = Vec::new();
    let mut choices = vec![-1i32; table.rows.len()];
    let mut used = vec![false; table.num_measurements + 1];
    dfs(table, 0, T::zero(), &mut choices, &mut used, &mut out);
    Ok(out)
}

fn dfs<T: Real>(
    table: &AssociationCostTable<T>,
    row: usize,
    acc: T,
    choices: &mut Vec<i32>,
    used: &mut Vec<bool>,
    out: &mut Vec<RawHypothesis<T>>,
) {
    if row == table.rows.len() {
        out.push(RawHypothesis {
            choices: choices.clone(),
            log_weight: acc,
        });
        return;
    }
    let r = &table.rows[row];
    for c in -1..=table.num_measurements as i32 {
        if c > 0 && used[c as usize] {
            continue;
        }
        let lw = r.log_weight(c);
        if !lw.is_finite() {
            continue;
        }
        choices[row] = c;
        if c > 0 {
            used[c as usize] = true;
        }
        dfs(table, row + 1, acc + lw, choices, used, out);
        if c > 0 {
            used[c as usize] = false;
        }
    }
    choices[row] = -1;
}

/// Greedy start: each row in turn takes its best still-available choice.
pub(crate) fn greedy_start<T: Real>(table: &AssociationCostTable<T>) -> Vec<i32> {
    let mut used = vec![false; table.num_measurements + 1];
    table
        .rows
        .iter()
        .map(|r| {
            let mut best = -1;
            let mut best_w = r.log_absent;
            for c in 0..=table.num_measurements as i32 {
                if c > 0 && used[c as usize] {
                    continue;
                }
                let w = r.log_weight(c);
                if w > best_w || !best_w.is_finite() && w.is_finite() {
                    best = c;
                    best_w = w;
                }
            }
            if best > 0 {
                used[best as usize] = true;
            }
            best
        })
        .collect()
}

/// Distinct assignments visited by a systematic-scan Gibbs chain. Weights
/// are the exact products of the row factors, not visit frequencies.
pub(crate) fn gibbs_raw<T: Real>(
    table: &AssociationCostTable<T>,
    iterations: usize,
    seed: u64,
) -> Vec<RawHypothesis<T>> {
    let rows = table.rows.len();
    let mut state = greedy_start(table);
    let mut seen: HashSet<Vec<i32>> = HashSet::new();
    let mut out = Vec::new();
    let record = |state: &Vec<i32>, seen: &mut HashSet<Vec<i32>>, out: &mut Vec<RawHypothesis<T>>| {
        if seen.insert(state.clone()) {
            out.push(RawHypothesis {
                choices: state.clone(),
                log_weight: table.log_weight(state),
            });
        }
    };
    record(&state, &mut seen, &mut out);
    if rows == 0 {
        return out;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // owner[j] = row currently holding measurement j
    let mut owner = vec![usize::MAX; table.num_measurements + 1];
    for (i, &c) in state.iter().enumerate() {
        if c > 0 {
            owner[c as usize] = i;
        }
    }
    let mut cand_c: Vec<i32> = Vec::with_capacity(table.num_measurements + 2);
    let mut cand_w: Vec<f64> = Vec::with_capacity(table.num_measurements + 2);
    let mut logs: Vec<T> = Vec::with_capacity(table.num_measurements + 2);
    for _ in 0..iterations {
        for i in 0..rows {
            let r = &table.rows[i];
            cand_c.clear();
            logs.clear();
            for c in -1..=table.num_measurements as i32 {
                if c > 0 {
                    let o = owner[c as usize];
                    if o != usize::MAX && o != i {
                        continue;
                    }
                }
                let lw = r.log_weight(c);
                if lw.is_finite() {
                    cand_c.push(c);
                    logs.push(lw);
                }
            }
            if cand_c.is_empty() {
                continue;
            }
            let norm = log_sum_exp(&logs);
            cand_w.clear();
            cand_w.extend(logs.iter().map(|&l| to_f64((l - norm).exp())));
            let u: f64 = rng.random::<f64>() * cand_w.iter().sum::<f64>();
            let mut pick = cand_c[cand_c.len() - 1];
            let mut acc = 0.0;
            for (c, w) in cand_c.iter().zip(&cand_w) {
                acc += w;
                if u < acc {
                    pick = *c;
                    break;
                }
            }
            let prev = state[i];
            if prev > 0 {
                owner[prev as usize] = usize::MAX;
            }
            if pick > 0 {
                owner[pick as usize] = i;
            }
            state[i] = pick;
        }
        record(&state, &mut seen, &mut out);
    }
    out
}

/// Sorts by weight (descending, ties by assignment), keeps the best
/// `max_hypotheses` and returns normalised weights in log form.
pub(crate) fn truncate_and_normalize<T: Real>(
    mut hyps: Vec<RawHypothesis<T>>,
    max_hypotheses: usize,
) -> Vec<RawHypothesis<T>> {
    hyps.sort_by(|a, b| {
        b.log_weight
            .partial_cmp(&a.log_weight)
            .unwrap()
            .then_with(|| a.choices.cmp(&b.choices))
    });
    hyps.truncate(max_hypotheses.max(1));
    let logs: Vec<T> = hyps.iter().map(|h| h.log_weight).collect();
    let norm = log_sum_exp(&logs);
    for h in &mut hyps {
        h.log_weight -= norm;
    }
    hyps
}

fn to_maps<T: Real>(table: &AssociationCostTable<T>, hyps: Vec<RawHypothesis<T>>) -> Vec<(AssociationMap, T)> {
    hyps.into_iter()
        .map(|h| {
            let pairs = table
                .rows
                .iter()
                .zip(&h.choices)
                .filter(|(_, &c)| c >= 0)
                .map(|(r, &c)| (r.label, c as usize));
            (
                AssociationMap::new(pairs).expect("sampler keeps assignments 1-1"),
                h.log_weight.exp(),
            )
        })
        .collect()
}

/// All valid association maps with normalised weights.
pub fn enumerate_hypotheses_exact<T: Real>(table: &AssociationCostTable<T>) -> Result<Vec<(AssociationMap, T)>> {
    let hyps = enumerate_raw(table)?;
    let n = hyps.len();
    Ok(to_maps(table, truncate_and_normalize(hyps, n)))
}

/// Distinct association maps found by a Gibbs chain, weights normalised over
/// the maps found. Deterministic for a given seed.
pub fn gibbs_sample_hypotheses<T: Real>(
    table: &AssociationCostTable<T>,
    iterations: usize,
    seed: u64,
) -> Result<Vec<(AssociationMap, T)>> {
    if iterations == 0 {
        return Err(Error::InvalidParameter("Gibbs sampler needs at least one iteration".into()));
    }
    let hyps = gibbs_raw(table, iterations, seed);
    let n = hyps.len();
    Ok(to_maps(table, truncate_and_normalize(hyps, n)))
}
