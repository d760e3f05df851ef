use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::model::{check_config_len, FailureConfiguration, ProblemInstance};

/// Which side of the optimum a clustering approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Lower,
    Upper,
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Bound::Lower => "lower",
            Bound::Upper => "upper",
        })
    }
}

fn same_len(s1: &FailureConfiguration, s2: &FailureConfiguration) -> Result<()> {
    if s1.len() != s2.len() {
        return Err(Error::validation(
            "configuration",
            format!("length mismatch: {} vs {}", s1.len(), s2.len()),
        ));
    }
    Ok(())
}

/// `s1` has failed wherever `s2` has, i.e. `s1` is at least as broken.
pub fn failure_dominates(s1: &FailureConfiguration, s2: &FailureConfiguration) -> Result<bool> {
    same_len(s1, s2)?;
    Ok(dominates(s1, s2))
}

/// The mirror relation: `s1` is alive wherever `s2` is.
pub fn non_failure_dominates(s1: &FailureConfiguration, s2: &FailureConfiguration) -> Result<bool> {
    same_len(s1, s2)?;
    Ok(dominates(s2, s1))
}

#[inline]
pub(crate) fn dominates(s1: &FailureConfiguration, s2: &FailureConfiguration) -> bool {
    s1.alive_mask() & !s2.alive_mask() == 0
}

/// Configuration whose failures are those shared by both inputs. The
/// configurations dominated by it are exactly those dominated by both.
pub fn failure_overlap(
    s1: &FailureConfiguration,
    s2: &FailureConfiguration,
) -> Result<FailureConfiguration> {
    same_len(s1, s2)?;
    Ok(FailureConfiguration::from_alive_mask(
        s1.alive_mask() | s2.alive_mask(),
        s1.len(),
    ))
}

/// Probability that the realized configuration is failure-dominated by `s`,
/// which is the probability that every buy alive in `s` survives.
pub fn fds_probability(instance: &ProblemInstance, s: &FailureConfiguration) -> Result<f64> {
    check_config_len(instance, s)?;
    Ok(alive_marginal(instance, s.alive_mask()))
}

pub(crate) fn alive_marginal(instance: &ProblemInstance, alive: u64) -> f64 {
    instance
        .fail_probs()
        .enumerate()
        .filter(|(u, _)| alive >> u & 1 == 1)
        .map(|(_, p)| 1.0 - p)
        .product()
}

pub(crate) fn failed_marginal(instance: &ProblemInstance, failed: u64) -> f64 {
    instance
        .fail_probs()
        .enumerate()
        .filter(|(u, _)| failed >> u & 1 == 1)
        .map(|(_, p)| p)
        .product()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeedOrderViolation {
    #[error("no seeds")]
    Empty,
    #[error("seed {index} has {len} bits, expected {expected}")]
    LengthMismatch {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error("first seed must be the all-alive configuration")]
    MissingAllAlive,
    #[error("last seed must be the all-failed configuration")]
    MissingAllFail,
    #[error("seed {later} repeats seed {earlier} ({config})")]
    Duplicate {
        earlier: usize,
        later: usize,
        config: FailureConfiguration,
    },
    #[error(
        "seed {earlier} ({earlier_config}) failure-dominates later seed {later} ({later_config})"
    )]
    Dominance {
        earlier: usize,
        later: usize,
        earlier_config: FailureConfiguration,
        later_config: FailureConfiguration,
    },
}

/// Ordered seed configurations: all-alive first, all-failed last, and no
/// seed failure-dominating a later one.
///
/// Every configuration belongs to exactly one lower cluster (the first seed
/// that failure-dominates it) and one upper cluster (scanning backwards, the
/// first seed that non-failure-dominates it).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SeedOrder {
    seeds: Vec<FailureConfiguration>,
}

pub fn validate_seed_order(
    candidate: Vec<FailureConfiguration>,
) -> std::result::Result<SeedOrder, SeedOrderViolation> {
    SeedOrder::new(candidate)
}

impl SeedOrder {
    pub fn new(seeds: Vec<FailureConfiguration>) -> std::result::Result<Self, SeedOrderViolation> {
        let first = *seeds.first().ok_or(SeedOrderViolation::Empty)?;
        let q = first.len();
        for (index, s) in seeds.iter().enumerate() {
            if s.len() != q {
                return Err(SeedOrderViolation::LengthMismatch {
                    index,
                    len: s.len(),
                    expected: q,
                });
            }
        }
        if !first.is_all_alive() {
            return Err(SeedOrderViolation::MissingAllAlive);
        }
        if !seeds.last().unwrap().is_all_failed() {
            return Err(SeedOrderViolation::MissingAllFail);
        }
        for later in 1..seeds.len() {
            for earlier in 0..later {
                let (a, b) = (seeds[earlier], seeds[later]);
                if a == b {
                    return Err(SeedOrderViolation::Duplicate {
                        earlier,
                        later,
                        config: a,
                    });
                }
                if dominates(&a, &b) {
                    return Err(SeedOrderViolation::Dominance {
                        earlier,
                        later,
                        earlier_config: a,
                        later_config: b,
                    });
                }
            }
        }
        Ok(Self { seeds })
    }

    /// The coarsest order: all-alive, then all-failed.
    pub fn endpoints(q: usize) -> Self {
        Self {
            seeds: vec![
                FailureConfiguration::all_alive(q),
                FailureConfiguration::all_failed(q),
            ],
        }
    }

    /// Every configuration as a seed, by increasing failure count.
    pub fn all_configurations(q: usize) -> Self {
        let mut seeds: Vec<_> = FailureConfiguration::enumerate(q).collect();
        seeds.sort_by_key(|s| (s.failure_count(), *s));
        Self { seeds }
    }

    /// A random valid order with `count` seeds. Interior seeds are drawn
    /// uniformly without replacement and arranged in a random order
    /// compatible with dominance.
    pub fn random(q: usize, count: usize, rng_seed: u64) -> Result<Self> {
        let total = if q >= 63 { u64::MAX } else { 1u64 << q };
        if count < 2 || (count as u64) > total {
            return Err(Error::validation(
                "count",
                format!("need 2 to {total} seeds for {q} buy types, got {count}"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let full = FailureConfiguration::all_alive(q).alive_mask();
        let mut interior: Vec<FailureConfiguration> = Vec::with_capacity(count - 2);
        if q <= 16 {
            let mut pool: Vec<u64> = (1..full).collect();
            pool.shuffle(&mut rng);
            interior.extend(
                pool[..count - 2]
                    .iter()
                    .map(|&m| FailureConfiguration::from_alive_mask(m, q)),
            );
        } else {
            while interior.len() < count - 2 {
                let c = FailureConfiguration::from_alive_mask(rng.gen::<u64>(), q);
                if !c.is_all_alive() && !c.is_all_failed() && !interior.contains(&c) {
                    interior.push(c);
                }
            }
        }

        let mut seeds = vec![FailureConfiguration::all_alive(q)];
        while !interior.is_empty() {
            // Anything that dominates no other remaining seed may go next.
            let ready: Vec<usize> = (0..interior.len())
                .filter(|&a| {
                    (0..interior.len()).all(|b| a == b || !dominates(&interior[a], &interior[b]))
                })
                .collect();
            let pick = ready[rng.gen_range(0..ready.len())];
            seeds.push(interior.swap_remove(pick));
        }
        seeds.push(FailureConfiguration::all_failed(q));
        Ok(Self::new(seeds)?)
    }

    pub fn seeds(&self) -> &[FailureConfiguration] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of buy types.
    pub fn q(&self) -> usize {
        self.seeds[0].len()
    }

    pub fn position(&self, config: &FailureConfiguration) -> Option<usize> {
        self.seeds.iter().position(|s| s == config)
    }

    pub fn contains(&self, config: &FailureConfiguration) -> bool {
        self.position(config).is_some()
    }

    /// Index of the seed whose cluster contains `config`.
    pub fn assign(&self, config: &FailureConfiguration, bound: Bound) -> usize {
        match bound {
            Bound::Lower => self.seeds.iter().position(|s| dominates(s, config)),
            Bound::Upper => self.seeds.iter().rposition(|s| dominates(config, s)),
        }
        .expect("endpoint seeds cover every configuration")
    }

    /// Returns the order with `config` inserted at `position`, revalidated.
    pub fn inserted(
        &self,
        position: usize,
        config: FailureConfiguration,
    ) -> std::result::Result<Self, SeedOrderViolation> {
        let mut seeds = self.seeds.clone();
        seeds.insert(position.min(seeds.len()), config);
        Self::new(seeds)
    }

    pub fn into_seeds(self) -> Vec<FailureConfiguration> {
        self.seeds
    }
}

/// Index of the seed of `w` whose cluster contains `config`.
pub fn assign_cluster(w: &SeedOrder, config: &FailureConfiguration, bound: Bound) -> Result<usize> {
    if config.len() != w.q() {
        return Err(Error::validation(
            "configuration",
            format!("expected {} bits, got {}", w.q(), config.len()),
        ));
    }
    Ok(w.assign(config, bound))
}

impl Serialize for SeedOrder {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.seeds.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SeedOrder {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let seeds = Vec::<FailureConfiguration>::deserialize(deserializer)?;
        SeedOrder::new(seeds).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{generate_instance, GeneratorParams};
    use proptest::prelude::*;

    fn order(bits: &[&str]) -> std::result::Result<SeedOrder, SeedOrderViolation> {
        validate_seed_order(bits.iter().map(|b| config(b)).collect())
    }

    #[test]
    fn dominance_examples() {
        assert!(failure_dominates(&config("00"), &config("10")).unwrap());
        assert!(!failure_dominates(&config("10"), &config("01")).unwrap());
        assert!(!failure_dominates(&config("01"), &config("10")).unwrap());
        assert!(failure_dominates(&config("01"), &config("01")).unwrap());
        assert!(non_failure_dominates(&config("10"), &config("00")).unwrap());
        assert!(failure_dominates(&config("1"), &config("10")).is_err());
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(
            failure_overlap(&config("10"), &config("11")).unwrap(),
            config("11")
        );
        assert_eq!(
            failure_overlap(&config("10"), &config("01")).unwrap(),
            config("11")
        );
        for s in FailureConfiguration::enumerate(3) {
            assert_eq!(failure_overlap(&config("000"), &s).unwrap(), s);
        }
        assert!(failure_overlap(&config("000"), &config("00")).is_err());
    }

    #[test]
    fn fds_examples() {
        let tiny = tiny();
        assert!((fds_probability(&tiny, &config("11")).unwrap() - 0.45).abs() < 1e-12);
        assert!((fds_probability(&tiny, &config("10")).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(fds_probability(&tiny, &config("00")).unwrap(), 1.0);
        assert!(fds_probability(&tiny, &config("000")).is_err());
    }

    #[test]
    fn fds_is_the_dominated_mass() {
        let inst = generate_instance(&GeneratorParams::new(4, 2, 0.5), 9).unwrap();
        for s in FailureConfiguration::enumerate(4) {
            let mass: f64 = FailureConfiguration::enumerate(4)
                .filter(|c| dominates(&s, c))
                .map(|c| crate::recourse::scenario_probability(&inst, &c).unwrap())
                .sum();
            assert!((fds_probability(&inst, &s).unwrap() - mass).abs() < 1e-12);
        }
    }

    #[test]
    fn seed_order_examples() {
        assert!(order(&["11", "10", "00"]).is_ok());
        assert_eq!(
            order(&["11", "00", "10"]).unwrap_err(),
            SeedOrderViolation::MissingAllFail
        );
        assert_eq!(
            order(&["11", "00", "10", "00"]).unwrap_err(),
            SeedOrderViolation::Dominance {
                earlier: 1,
                later: 2,
                earlier_config: config("00"),
                later_config: config("10"),
            }
        );
        assert_eq!(
            order(&["10", "00"]).unwrap_err(),
            SeedOrderViolation::MissingAllAlive
        );
        assert_eq!(order(&[]).unwrap_err(), SeedOrderViolation::Empty);
        assert!(matches!(
            order(&["11", "10", "10", "00"]).unwrap_err(),
            SeedOrderViolation::Duplicate {
                earlier: 1,
                later: 2,
                ..
            }
        ));
        assert!(matches!(
            order(&["11", "0"]).unwrap_err(),
            SeedOrderViolation::LengthMismatch { index: 1, .. }
        ));
    }

    #[test]
    fn cluster_assignment_examples() {
        let w = order(&["11", "00"]).unwrap();
        assert_eq!(assign_cluster(&w, &config("10"), Bound::Lower).unwrap(), 1);
        assert_eq!(assign_cluster(&w, &config("10"), Bound::Upper).unwrap(), 0);
        assert_eq!(assign_cluster(&w, &config("11"), Bound::Lower).unwrap(), 0);
        assert_eq!(assign_cluster(&w, &config("00"), Bound::Upper).unwrap(), 1);
        assert!(assign_cluster(&w, &config("1"), Bound::Lower).is_err());
    }

    #[test]
    fn seed_order_serde_validates() {
        let w: SeedOrder = serde_json::from_str(r#"["11", "10", "00"]"#).unwrap();
        assert_eq!(serde_json::to_string(&w).unwrap(), r#"["11","10","00"]"#);
        assert!(serde_json::from_str::<SeedOrder>(r#"["11", "00", "10"]"#).is_err());
    }

    #[test]
    fn every_configuration_order_is_valid() {
        for q in 1..=6 {
            assert_eq!(SeedOrder::all_configurations(q).len(), 1 << q);
        }
    }

    #[test]
    fn insertion_revalidates() {
        let w = SeedOrder::endpoints(2);
        assert!(w.inserted(1, config("10")).is_ok());
        assert!(w.inserted(0, config("10")).is_err());
    }

    proptest! {
        #[test]
        fn random_orders_are_valid_and_deterministic(q in 1usize..7, extra in 0usize..20, seed in any::<u64>()) {
            let count = (2 + extra).min(1 << q);
            let w = SeedOrder::random(q, count, seed).unwrap();
            prop_assert_eq!(w.len(), count);
            prop_assert_eq!(&w, &SeedOrder::random(q, count, seed).unwrap());
        }

        #[test]
        fn assignments_respect_dominance(q in 1usize..7, extra in 0usize..20, seed in any::<u64>()) {
            let w = SeedOrder::random(q, (2 + extra).min(1 << q), seed).unwrap();
            for s in FailureConfiguration::enumerate(q) {
                let lo = w.assign(&s, Bound::Lower);
                prop_assert!(failure_dominates(&w.seeds()[lo], &s).unwrap());
                prop_assert!(w.seeds()[..lo].iter().all(|t| !dominates(t, &s)));
                let up = w.assign(&s, Bound::Upper);
                prop_assert!(non_failure_dominates(&w.seeds()[up], &s).unwrap());
                prop_assert!(w.seeds()[up + 1..].iter().all(|t| !dominates(&s, t)));
            }
        }
    }
}
