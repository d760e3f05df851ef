//! Greedy baselines: one buy per sell (pairwise), and a best subset of buys
//! per sell (diversified).

use crate::error::{Error, Result};
use crate::model::{Allocation, ProblemInstance};

/// Default cap on incident buys per sell for the exhaustive subset search.
pub const DEFAULT_SUBSET_LIMIT: usize = 20;

/// Expected profit of matching one unit of buy `u` with one unit of sell `i`.
pub fn pair_value(instance: &ProblemInstance, u: usize, i: usize) -> Result<f64> {
    if u >= instance.num_buys() || i >= instance.num_sells() || !instance.has_edge(u, i) {
        return Err(Error::validation(
            "pair",
            format!("({u}, {i}) is not an edge"),
        ));
    }
    let (b, s) = (instance.buy(u), instance.sell(i));
    Ok(-b.price + (1.0 - b.fail_prob) * s.price - b.fail_prob * s.penalty)
}

/// Pairs in decreasing value; ties go to the lower sell, then the lower buy.
pub fn greedy_pairwise(instance: &ProblemInstance) -> Allocation {
    let mut pairs: Vec<(f64, usize, usize)> = instance
        .edges()
        .iter()
        .map(|e| {
            (
                pair_value(instance, e.buy, e.sell).expect("edge"),
                e.sell,
                e.buy,
            )
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut alloc = Allocation::zero(instance);
    let mut buy_left: Vec<u32> = instance.buys().iter().map(|b| b.capacity).collect();
    let mut sell_left: Vec<u32> = instance.sells().iter().map(|s| s.capacity).collect();
    for (value, i, u) in pairs {
        if value <= 0.0 {
            break;
        }
        let t = buy_left[u].min(sell_left[i]);
        buy_left[u] -= t;
        sell_left[i] -= t;
        alloc.n[u] += t;
        alloc.m[i] += t;
    }
    alloc
}

/// Expected profit of covering one unit of sell `i` with one unit of every
/// buy in `subset`; the sell defaults only if all of them fail.
pub fn subset_value(instance: &ProblemInstance, subset: &[usize], i: usize) -> Result<f64> {
    if i >= instance.num_sells() {
        return Err(Error::validation("sell", format!("index {i} out of range")));
    }
    if subset.is_empty() {
        return Err(Error::validation("subset", "must be nonempty"));
    }
    for (pos, &u) in subset.iter().enumerate() {
        if u >= instance.num_buys() || !instance.has_edge(u, i) {
            return Err(Error::validation(
                format!("subset[{pos}]"),
                format!("buy {u} is not incident on sell {i}"),
            ));
        }
        if subset[..pos].contains(&u) {
            return Err(Error::validation(
                format!("subset[{pos}]"),
                format!("buy {u} repeated"),
            ));
        }
    }
    Ok(subset_value_unchecked(instance, subset, i))
}

fn subset_value_unchecked(instance: &ProblemInstance, subset: &[usize], i: usize) -> f64 {
    let s = instance.sell(i);
    let cost: f64 = subset.iter().map(|&u| instance.buy(u).price).sum();
    let p_all_fail: f64 = subset.iter().map(|&u| instance.buy(u).fail_prob).product();
    -cost + (1.0 - p_all_fail) * s.price - p_all_fail * s.penalty
}

pub fn greedy_diversified(instance: &ProblemInstance) -> Result<Allocation> {
    greedy_diversified_with_limit(instance, DEFAULT_SUBSET_LIMIT)
}

/// Repeatedly commits the best positive (sell, subset) combination for as
/// many units as the remaining capacities allow.
pub fn greedy_diversified_with_limit(
    instance: &ProblemInstance,
    limit: usize,
) -> Result<Allocation> {
    for i in 0..instance.num_sells() {
        let size = instance.sell_edges(i).len();
        if size > limit {
            return Err(Error::SubsetLimit {
                sell: i,
                size,
                limit,
            });
        }
    }

    let mut alloc = Allocation::zero(instance);
    let mut buy_left: Vec<u32> = instance.buys().iter().map(|b| b.capacity).collect();
    let mut sell_left: Vec<u32> = instance.sells().iter().map(|s| s.capacity).collect();
    loop {
        let mut best: Option<(f64, usize, Vec<usize>)> = None;
        for i in 0..instance.num_sells() {
            if sell_left[i] == 0 {
                continue;
            }
            let Some((value, subset)) = best_subset(instance, i, &buy_left) else {
                continue;
            };
            if value > 0.0 && best.as_ref().map_or(true, |b| value > b.0) {
                best = Some((value, i, subset));
            }
        }
        let Some((_, i, subset)) = best else {
            return Ok(alloc);
        };
        let t = subset
            .iter()
            .map(|&u| buy_left[u])
            .min()
            .unwrap_or(0)
            .min(sell_left[i]);
        sell_left[i] -= t;
        alloc.m[i] += t;
        for u in subset {
            buy_left[u] -= t;
            alloc.n[u] += t;
        }
    }
}

/// Highest-value subset of the buys incident on `i` that still have
/// capacity; ties go to the lexicographically smaller index list.
fn best_subset(
    instance: &ProblemInstance,
    i: usize,
    buy_left: &[u32],
) -> Option<(f64, Vec<usize>)> {
    let open: Vec<usize> = instance
        .incident_buys(i)
        .into_iter()
        .filter(|&u| buy_left[u] > 0)
        .collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut subset = Vec::with_capacity(open.len());
    for mask in 1u64..(1u64 << open.len()) {
        subset.clear();
        subset.extend(
            (0..open.len())
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| open[b]),
        );
        let value = subset_value_unchecked(instance, &subset, i);
        let better = match &best {
            None => true,
            Some((v, s)) => value > *v || (value == *v && subset < *s),
        };
        if better {
            best = Some((value, subset.clone()));
        }
    }
    best
}
