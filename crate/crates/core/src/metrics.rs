//! OSPA and OSPA² errors, cardinality statistics and the assignment solver
//! they rely on.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::ste::TrajectorySet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    /// Cutoff `c` in metres.
    pub cutoff: f64,
    /// Order `p >= 1`.
    pub order: f64,
    /// OSPA² window length in steps.
    pub window: u32,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            cutoff: 100.0,
            order: 1.0,
            window: 10,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0) || !(self.order >= 1.0) || self.window < 1 {
            return Err(Error::InvalidParameter("metric config needs c > 0, p >= 1, window >= 1".into()));
        }
        Ok(())
    }
}

/// Minimum-cost matching of the smaller side of a rectangular matrix into
/// the larger one (shortest augmenting paths, O(n^2 m)). Returns `(row, col)`
/// pairs sorted by row and the total cost.
pub fn optimal_assignment<T: Real>(cost: &DMatrix<T>) -> (Vec<(usize, usize)>, T) {
    let (r, c) = cost.shape();
    if r == 0 || c == 0 {
        return (Vec::new(), T::zero());
    }
    if r > c {
        let (pairs, total) = optimal_assignment(&cost.transpose());
        let mut pairs: Vec<_> = pairs.into_iter().map(|(j, i)| (i, j)).collect();
        pairs.sort_unstable();
        return (pairs, total);
    }
    let (n, m) = (r, c);
    let inf = T::max_value().unwrap_or_else(|| lit(f64::MAX));
    // 1-based potentials; column 0 is a virtual source
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m).filter(|&j| owner[j] != 0).map(|j| (owner[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    let total = pairs.iter().fold(T::zero(), |a, &(i, j)| a + cost[(i, j)]);
    (pairs, total)
}

/// OSPA value with its localisation and cardinality parts. For `p = 1`,
/// `total = localisation + cardinality`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ospa<T> {
    pub total: T,
    pub localisation: T,
    pub cardinality: T,
}

fn cut_distance<T: Real>(a: &DVector<T>, b: &DVector<T>, c: T, p: T) -> T {
    (a - b).norm().min(c).powf(p)
}

/// OSPA distance between two point sets.
pub fn ospa<T: Real>(x: &[DVector<T>], y: &[DVector<T>], cfg: &MetricConfig) -> Ospa<T> {
    let c: T = lit(cfg.cutoff);
    let p: T = lit(cfg.order);
    let n = x.len().max(y.len());
    if n == 0 {
        return Ospa {
            total: T::zero(),
            localisation: T::zero(),
            cardinality: T::zero(),
        };
    }
    let cost = DMatrix::from_fn(x.len(), y.len(), |i, j| cut_distance(&x[i], &y[j], c, p));
    let (_, loc_sum) = optimal_assignment(&cost);
    let nf = T::from_usize(n).unwrap();
    let card_sum = c.powf(p) * T::from_usize(x.len().abs_diff(y.len())).unwrap();
    let inv_p = T::one() / p;
    Ospa {
        total: ((loc_sum + card_sum) / nf).powf(inv_p),
        localisation: (loc_sum / nf).powf(inv_p),
        cardinality: (card_sum / nf).powf(inv_p),
    }
}

/// OSPA² at `time` over the window `time - window + 1 ..= time`. Trajectory
/// states must already be positions. Only trajectories existing somewhere in
/// the window take part. The base distance between two trajectories is the
/// mean, over the steps where at least one exists, of `min(d, c)` when both
/// exist and `c` otherwise.
pub fn ospa2<T: Real>(a: &TrajectorySet<T>, b: &TrajectorySet<T>, time: u32, cfg: &MetricConfig) -> T {
    let c: T = lit(cfg.cutoff);
    let p: T = lit(cfg.order);
    let first = time.saturating_sub(cfg.window - 1).max(1);
    let window: Vec<u32> = (first..=time).collect();
    let in_window = |set: &TrajectorySet<T>| -> Vec<Vec<Option<DVector<T>>>> {
        set.values()
            .map(|t| window.iter().map(|&k| t.at(k).cloned()).collect::<Vec<_>>())
            .filter(|s| s.iter().any(Option::is_some))
            .collect()
    };
    let xa = in_window(a);
    let xb = in_window(b);
    let n = xa.len().max(xb.len());
    if n == 0 {
        return T::zero();
    }
    let cost = DMatrix::from_fn(xa.len(), xb.len(), |i, j| {
        let mut sum = T::zero();
        let mut count = 0usize;
        for (sa, sb) in xa[i].iter().zip(&xb[j]) {
            match (sa, sb) {
                (Some(u), Some(v)) => sum += (u - v).norm().min(c),
                (None, None) => continue,
                _ => sum += c,
            }
            count += 1;
        }
        (sum / T::from_usize(count).unwrap()).powf(p)
    });
    let (_, matched) = optimal_assignment(&cost);
    let card = c.powf(p) * T::from_usize(xa.len().abs_diff(xb.len())).unwrap();
    ((matched + card) / T::from_usize(n).unwrap()).powf(T::one() / p)
}

/// True cardinality with the mean and population standard deviation of the
/// estimated cardinality over trials, at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardinalityStat {
    pub true_n: usize,
    pub mean: f64,
    pub std: f64,
}

/// Per-step cardinality statistics. `per_trial[t][k]` is the estimated count
/// of trial `t` at step index `k`.
pub fn cardinality_stats(per_trial: &[Vec<usize>], truth: &[usize]) -> Vec<CardinalityStat> {
    truth
        .iter()
        .enumerate()
        .map(|(k, &true_n)| {
            let xs: Vec<f64> = per_trial.iter().map(|t| t.get(k).copied().unwrap_or(0) as f64).collect();
            let (mean, std) = mean_std(&xs);
            CardinalityStat { true_n, mean, std }
        })
        .collect()
}

/// Mean and population standard deviation; zeros for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfs::Label;
    use crate::ste::Trajectory;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    // Brute force over injective maps from the smaller side.
    fn brute_min(cost: &DMatrix<f64>) -> f64 {
        let (r, c) = cost.shape();
        if r > c {
            return brute_min(&cost.transpose());
        }
        let mut best = f64::INFINITY;
        for perm in permutations(c) {
            let s: f64 = (0..r).map(|i| cost[(i, perm[i])]).sum();
            best = best.min(s);
        }
        if r == 0 {
            0.0
        } else {
            best
        }
    }

    #[test]
    fn assignment_examples() {
        let (p, t) = optimal_assignment(&DMatrix::from_element(1, 1, 3.0));
        assert_eq!((p, t), (vec![(0, 0)], 3.0));
        let (p, t) = optimal_assignment(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert_eq!((p, t), (vec![(0, 0), (1, 1)], 2.0));
        let (p, t) = optimal_assignment(&DMatrix::<f64>::zeros(0, 3));
        assert!(p.is_empty() && t == 0.0);
        let (p, _) = optimal_assignment(&DMatrix::from_row_slice(3, 1, &[5.0, 1.0, 3.0]));
        assert_eq!(p, vec![(1, 0)]);
    }

    fn point(x: f64, y: f64) -> DVector<f64> {
        DVector::from_row_slice(&[x, y])
    }

    #[test]
    fn ospa_examples() {
        let cfg = MetricConfig::default();
        let x = vec![point(1.0, 2.0), point(-40.0, 8.0)];
        assert_eq!(ospa(&x, &x, &cfg).total, 0.0);
        let o = ospa(&[], &[point(0.0, 0.0)], &cfg);
        assert_eq!((o.total, o.localisation, o.cardinality), (100.0, 0.0, 100.0));
        let o = ospa(&[point(0.0, 0.0)], &[point(3.0, 4.0)], &cfg);
        assert_relative_eq!(o.total, 5.0);
        assert_relative_eq!(o.localisation, 5.0);
        assert_eq!(o.cardinality, 0.0);
        assert_eq!(ospa::<f64>(&[], &[], &cfg).total, 0.0);
    }

    #[test]
    fn cardinality_examples() {
        let s = cardinality_stats(&[vec![3, 2], vec![5, 2]], &[4, 2]);
        assert_eq!(s[0], CardinalityStat { true_n: 4, mean: 4.0, std: 1.0 });
        assert_eq!(s[1], CardinalityStat { true_n: 2, mean: 2.0, std: 0.0 });
        let empty = cardinality_stats(&[vec![], vec![]], &[3]);
        assert_eq!(empty[0].mean, 0.0);
    }

    fn traj(points: &[(u32, f64, f64)]) -> Trajectory<f64> {
        Trajectory::new(points.iter().map(|&(t, x, y)| (t, point(x, y))).collect())
    }

    fn set(ts: Vec<Trajectory<f64>>) -> TrajectorySet<f64> {
        ts.into_iter().enumerate().map(|(i, t)| (Label::new(1, i as u32), t)).collect()
    }

    #[test]
    fn ospa2_identical_is_zero_and_relabel_invariant() {
        let cfg = MetricConfig::default();
        let a = set(vec![
            traj(&[(1, 0.0, 0.0), (2, 1.0, 0.0), (3, 2.0, 0.0)]),
            traj(&[(2, 50.0, 50.0), (3, 51.0, 50.0)]),
        ]);
        for k in 1..=5 {
            assert_eq!(ospa2(&a, &a, k, &cfg), 0.0);
        }
        let relabelled: TrajectorySet<f64> = a.values().cloned().zip([Label::new(9, 4), Label::new(3, 0)]).map(|(t, l)| (l, t)).collect();
        let truth = set(vec![traj(&[(1, 0.0, 3.0), (2, 1.0, 3.0), (3, 2.0, 3.0)])]);
        assert_eq!(ospa2(&truth, &a, 3, &cfg), ospa2(&truth, &relabelled, 3, &cfg));
    }

    #[test]
    fn ospa2_penalises_fragmentation() {
        let cfg = MetricConfig::default();
        let truth = set(vec![traj(&(1..=6).map(|t| (t, t as f64 * 10.0, 0.0)).collect::<Vec<_>>())]);
        // same 5 m position error everywhere
        let whole = set(vec![traj(&(1..=6).map(|t| (t, t as f64 * 10.0, 5.0)).collect::<Vec<_>>())]);
        let split = set(vec![
            traj(&(1..=3).map(|t| (t, t as f64 * 10.0, 5.0)).collect::<Vec<_>>()),
            traj(&(4..=6).map(|t| (t, t as f64 * 10.0, 5.0)).collect::<Vec<_>>()),
        ]);
        let d_whole = ospa2(&truth, &whole, 6, &cfg);
        let d_split = ospa2(&truth, &split, 6, &cfg);
        assert_relative_eq!(d_whole, 5.0, epsilon = 1e-12);
        // by hand: pair (truth, first half) = (3*5 + 3*100)/6 = 52.5, plus
        // one unmatched trajectory at c: (52.5 + 100)/2
        assert_relative_eq!(d_split, (52.5 + 100.0) / 2.0, epsilon = 1e-12);
        assert!(d_split > d_whole);
    }

    fn arb_set(max: usize) -> impl Strategy<Value = Vec<DVector<f64>>> {
        prop::collection::vec((-150.0f64..150.0, -150.0f64..150.0), 0..=max)
            .prop_map(|v| v.into_iter().map(|(x, y)| point(x, y)).collect())
    }

    // OSPA from a brute-force assignment.
    fn ospa_oracle(x: &[DVector<f64>], y: &[DVector<f64>], c: f64, p: f64) -> f64 {
        let n = x.len().max(y.len());
        if n == 0 {
            return 0.0;
        }
        let cost = DMatrix::from_fn(x.len(), y.len(), |i, j| (&x[i] - &y[j]).norm().min(c).powf(p));
        let card = c.powf(p) * x.len().abs_diff(y.len()) as f64;
        ((brute_min(&cost) + card) / n as f64).powf(1.0 / p)
    }

    proptest! {
        #[test]
        fn assignment_matches_brute_force(r in 1usize..=5, c in 1usize..=5, vals in prop::collection::vec(0.0f64..100.0, 25)) {
            let cost = DMatrix::from_fn(r, c, |i, j| vals[i * 5 + j]);
            let (pairs, total) = optimal_assignment(&cost);
            prop_assert_eq!(pairs.len(), r.min(c));
            prop_assert!((total - brute_min(&cost)).abs() <= 1e-9);
        }

        #[test]
        fn ospa_properties(x in arb_set(5), y in arb_set(5), z in arb_set(5), p in prop::sample::select(vec![1.0, 2.0])) {
            let cfg = MetricConfig { order: p, ..Default::default() };
            let dxy = ospa(&x, &y, &cfg);
            prop_assert!((dxy.total - ospa_oracle(&x, &y, 100.0, p)).abs() <= 1e-9);
            prop_assert!((dxy.total - ospa(&y, &x, &cfg).total).abs() <= 1e-9);
            prop_assert!(dxy.total <= 100.0 + 1e-9);
            let dxz = ospa(&x, &z, &cfg).total;
            let dzy = ospa(&z, &y, &cfg).total;
            prop_assert!(dxy.total <= dxz + dzy + 1e-9);
            if p == 1.0 {
                prop_assert!((dxy.total - dxy.localisation - dxy.cardinality).abs() <= 1e-9);
            } else {
                let recombined = (dxy.localisation.powf(p) + dxy.cardinality.powf(p)).powf(1.0 / p);
                prop_assert!((dxy.total - recombined).abs() <= 1e-9);
            }
            if !x.is_empty() {
                prop_assert_eq!(ospa(&x, &[], &cfg).total, 100.0);
            }
        }

        #[test]
        fn ospa2_window_one_is_ospa(x in arb_set(4), y in arb_set(4)) {
            let cfg = MetricConfig { window: 1, ..Default::default() };
            let lift = |s: &[DVector<f64>]| -> TrajectorySet<f64> {
                s.iter().enumerate().map(|(i, v)| (Label::new(1, i as u32), Trajectory::new(vec![(7, v.clone())]))).collect()
            };
            let a = lift(&x);
            let b = lift(&y);
            prop_assert!((ospa2(&a, &b, 7, &cfg) - ospa(&x, &y, &cfg).total).abs() <= 1e-9);
            // nothing exists in other windows
            prop_assert_eq!(ospa2(&a, &b, 8, &cfg), 0.0);
            let empty: TrajectorySet<f64> = BTreeMap::new();
            prop_assert_eq!(ospa2(&empty, &empty, 7, &cfg), 0.0);
        }
    }
}
