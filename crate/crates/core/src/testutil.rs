use crate::model::{Allocation, ProblemInstance};
use crate::recourse::evaluate_exact;

/// Every integral allocation within capacity.
pub fn all_allocations(instance: &ProblemInstance) -> Vec<Allocation> {
    let caps: Vec<u32> = instance
        .buys()
        .iter()
        .map(|b| b.capacity)
        .chain(instance.sells().iter().map(|s| s.capacity))
        .collect();
    let mut out = Vec::new();
    let mut cur = vec![0u32; caps.len()];
    loop {
        let q = instance.num_buys();
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

/// Best exact expected value over every integral allocation.
pub fn brute_force_optimum(instance: &ProblemInstance) -> (f64, Allocation) {
    all_allocations(instance)
        .into_iter()
        .map(|a| (evaluate_exact(instance, &a).unwrap(), a))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
}
