//! Reference computations that do not touch the LP solver.
#![allow(dead_code)]

use stochmatch_core::{Allocation, FailureConfiguration, ProblemInstance};

/// Largest recoverable penalty by unit augmenting paths. Weights sit on the
/// sell side only, so covering sells greedily by penalty is optimal.
pub fn recourse_oracle(
    instance: &ProblemInstance,
    n: &[u32],
    m: &[u32],
    config: &FailureConfiguration,
) -> f64 {
    let (q, k) = (instance.num_buys(), instance.num_sells());
    let supply: Vec<u32> = (0..q)
        .map(|u| if config.is_alive(u) { n[u] } else { 0 })
        .collect();
    let mut used = vec![0u32; q];
    let mut flow = vec![vec![0u32; k]; q];
    let mut sells: Vec<usize> = (0..k).collect();
    sells.sort_by(|&a, &b| {
        instance
            .sell(b)
            .penalty
            .total_cmp(&instance.sell(a).penalty)
    });

    let mut total = 0.0;
    for i in sells {
        for _ in 0..m[i] {
            let mut seen = vec![false; q];
            if augment(instance, i, &supply, &mut used, &mut flow, &mut seen) {
                total += instance.sell(i).penalty;
            } else {
                break;
            }
        }
    }
    total
}

/// Finds a path sell -> buy (-> sell -> buy ...) ending at a buy with spare
/// supply and pushes one unit along it.
fn augment(
    instance: &ProblemInstance,
    sell: usize,
    supply: &[u32],
    used: &mut [u32],
    flow: &mut [Vec<u32>],
    seen: &mut [bool],
) -> bool {
    for u in instance.incident_buys(sell) {
        if seen[u] || supply[u] == 0 {
            continue;
        }
        seen[u] = true;
        if used[u] < supply[u] {
            used[u] += 1;
            flow[u][sell] += 1;
            return true;
        }
        // Reroute one unit that u sends to another sell.
        for other in 0..flow[u].len() {
            if flow[u][other] > 0
                && other != sell
                && augment(instance, other, supply, used, flow, seen)
            {
                flow[u][other] -= 1;
                flow[u][sell] += 1;
                return true;
            }
        }
    }
    false
}

pub fn probability(instance: &ProblemInstance, config: &FailureConfiguration) -> f64 {
    (0..instance.num_buys())
        .map(|u| {
            let p = instance.buy(u).fail_prob;
            if config.is_alive(u) {
                1.0 - p
            } else {
                p
            }
        })
        .product()
}

pub fn value_oracle(instance: &ProblemInstance, a: &Allocation) -> f64 {
    let first: f64 =
        a.n.iter()
            .zip(instance.buys())
            .map(|(&n, b)| -(n as f64) * b.price)
            .sum::<f64>()
            + a.m
                .iter()
                .zip(instance.sells())
                .map(|(&m, s)| m as f64 * (s.price - s.penalty))
                .sum::<f64>();
    let second: f64 = FailureConfiguration::enumerate(instance.num_buys())
        .map(|c| probability(instance, &c) * recourse_oracle(instance, &a.n, &a.m, &c))
        .sum();
    first + second
}

pub fn all_allocations(instance: &ProblemInstance) -> Vec<Allocation> {
    let caps: Vec<u32> = instance
        .buys()
        .iter()
        .map(|b| b.capacity)
        .chain(instance.sells().iter().map(|s| s.capacity))
        .collect();
    let q = instance.num_buys();
    let mut out = Vec::new();
    let mut cur = vec![0u32; caps.len()];
    loop {
        out.push(Allocation {
            n: cur[..q].to_vec(),
            m: cur[q..].to_vec(),
        });
        let Some(pos) = (0..cur.len()).find(|&d| cur[d] < caps[d]) else {
            return out;
        };
        cur[pos] += 1;
        cur[..pos].iter_mut().for_each(|x| *x = 0);
    }
}

/// Best value over every integral allocation, by the LP-free oracle.
pub fn brute_force(instance: &ProblemInstance) -> (f64, Allocation) {
    all_allocations(instance)
        .into_iter()
        .map(|a| (value_oracle(instance, &a), a))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
}

pub const TINY: &str = r#"{
    "buys": [
        {"id": "A", "price": 1, "fail_prob": 0.1, "capacity": 1},
        {"id": "B", "price": 2, "fail_prob": 0.5, "capacity": 1}
    ],
    "sells": [{"id": "X", "price": 4, "penalty": 6, "capacity": 1}],
    "edges": [[0, 0], [1, 0]]
}"#;
