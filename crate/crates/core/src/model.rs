//! Problem instances, failure configurations and allocations.
//!
//! Contract types are aggregated: a record describes one type of contract
//! together with how many units of it may be held. All units of a buy type
//! share a single failure event, so a [`FailureConfiguration`] carries one bit
//! per buy type.
//!
//! Penalties are stored as nonnegative magnitudes. The recourse objective
//! recovers `penalty` per matched sell unit and the first-stage revenue of a
//! sell unit is `price - penalty`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Buy types are tracked in a 64-bit alive mask.
pub const MAX_BUY_TYPES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuyContractType {
    pub id: String,
    pub price: f64,
    pub fail_prob: f64,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SellContractType {
    pub id: String,
    pub price: f64,
    /// Magnitude of the penalty paid per unsatisfied unit.
    pub penalty: f64,
    pub capacity: u32,
}

/// Admissible match: units of buy type `buy` may cover sell type `sell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub buy: usize,
    pub sell: usize,
}

/// A validated instance. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    buys: Vec<BuyContractType>,
    sells: Vec<SellContractType>,
    edges: Vec<Edge>,
    buy_edges: Vec<Vec<usize>>,
    sell_edges: Vec<Vec<usize>>,
}

impl ProblemInstance {
    pub fn new(
        buys: Vec<BuyContractType>,
        sells: Vec<SellContractType>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if buys.is_empty() {
            return Err(Error::validation(
                "buys",
                "at least one buy contract type is required",
            ));
        }
        if sells.is_empty() {
            return Err(Error::validation(
                "sells",
                "at least one sell contract type is required",
            ));
        }
        if buys.len() > MAX_BUY_TYPES {
            return Err(Error::validation(
                "buys",
                format!(
                    "at most {MAX_BUY_TYPES} buy contract types are supported, got {}",
                    buys.len()
                ),
            ));
        }

        let mut ids = HashSet::new();
        for (u, b) in buys.iter().enumerate() {
            check_id(&mut ids, &b.id, || format!("buys[{u}].id"))?;
            check_amount(b.price, || format!("buys[{u}].price"))?;
            if !b.fail_prob.is_finite() || !(0.0..=1.0).contains(&b.fail_prob) {
                return Err(Error::validation(
                    format!("buys[{u}].fail_prob"),
                    format!("must lie in [0, 1], got {}", b.fail_prob),
                ));
            }
        }
        for (i, s) in sells.iter().enumerate() {
            check_id(&mut ids, &s.id, || format!("sells[{i}].id"))?;
            check_amount(s.price, || format!("sells[{i}].price"))?;
            check_amount(s.penalty, || format!("sells[{i}].penalty"))?;
        }

        let mut seen = HashSet::new();
        let mut checked = Vec::with_capacity(edges.len());
        for (e, &(buy, sell)) in edges.iter().enumerate() {
            if buy >= buys.len() {
                return Err(Error::validation(
                    format!("edges[{e}]"),
                    format!("buy index {buy} out of range (q = {})", buys.len()),
                ));
            }
            if sell >= sells.len() {
                return Err(Error::validation(
                    format!("edges[{e}]"),
                    format!("sell index {sell} out of range (k = {})", sells.len()),
                ));
            }
            if !seen.insert((buy, sell)) {
                return Err(Error::validation(
                    format!("edges[{e}]"),
                    format!("duplicate edge [{buy}, {sell}]"),
                ));
            }
            checked.push(Edge { buy, sell });
        }

        let mut buy_edges = vec![Vec::new(); buys.len()];
        let mut sell_edges = vec![Vec::new(); sells.len()];
        for (idx, edge) in checked.iter().enumerate() {
            buy_edges[edge.buy].push(idx);
            sell_edges[edge.sell].push(idx);
        }

        Ok(Self {
            buys,
            sells,
            edges: checked,
            buy_edges,
            sell_edges,
        })
    }

    /// Number of buy contract types (`q`).
    pub fn num_buys(&self) -> usize {
        self.buys.len()
    }

    /// Number of sell contract types (`k`).
    pub fn num_sells(&self) -> usize {
        self.sells.len()
    }

    pub fn buys(&self) -> &[BuyContractType] {
        &self.buys
    }

    pub fn sells(&self) -> &[SellContractType] {
        &self.sells
    }

    pub fn buy(&self, u: usize) -> &BuyContractType {
        &self.buys[u]
    }

    pub fn sell(&self, i: usize) -> &SellContractType {
        &self.sells[i]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn has_edge(&self, buy: usize, sell: usize) -> bool {
        self.edge_index(buy, sell).is_some()
    }

    pub fn edge_index(&self, buy: usize, sell: usize) -> Option<usize> {
        self.buy_edges
            .get(buy)?
            .iter()
            .copied()
            .find(|&e| self.edges[e].sell == sell)
    }

    /// Indices (into [`edges`](Self::edges)) of the edges leaving buy `u`.
    pub fn buy_edges(&self, u: usize) -> &[usize] {
        &self.buy_edges[u]
    }

    /// Indices of the edges entering sell `i`.
    pub fn sell_edges(&self, i: usize) -> &[usize] {
        &self.sell_edges[i]
    }

    /// Buy types incident on sell `i`, in ascending index order.
    pub fn incident_buys(&self, i: usize) -> Vec<usize> {
        let mut buys: Vec<usize> = self.sell_edges[i]
            .iter()
            .map(|&e| self.edges[e].buy)
            .collect();
        buys.sort_unstable();
        buys
    }

    pub fn fail_probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.buys.iter().map(|b| b.fail_prob)
    }

    pub fn to_document(&self) -> InstanceDocument {
        InstanceDocument {
            buys: self.buys.clone(),
            sells: self.sells.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| [e.buy as i64, e.sell as i64])
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document())
            .expect("instance documents always serialize")
    }
}

fn check_id(ids: &mut HashSet<String>, id: &str, path: impl Fn() -> String) -> Result<()> {
    if id.trim().is_empty() {
        return Err(Error::validation(path(), "id must not be empty"));
    }
    if !ids.insert(id.to_owned()) {
        return Err(Error::validation(path(), format!("duplicate id {id:?}")));
    }
    Ok(())
}

fn check_amount(value: f64, path: impl Fn() -> String) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::validation(
            path(),
            format!("must be a finite nonnegative number, got {value}"),
        ));
    }
    Ok(())
}

/// Wire form of an instance as written out.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub buys: Vec<BuyContractType>,
    pub sells: Vec<SellContractType>,
    pub edges: Vec<[i64; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBuy {
    id: String,
    price: f64,
    fail_prob: f64,
    capacity: i64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSell {
    id: String,
    price: f64,
    penalty: f64,
    capacity: i64,
}

// Capacities and edge indices are read as signed integers so that negative
// values surface as validation errors rather than syntax errors.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    buys: Vec<RawBuy>,
    sells: Vec<RawSell>,
    edges: Vec<[i64; 2]>,
}

fn capacity(value: i64, path: impl Fn() -> String) -> Result<u32> {
    u32::try_from(value).map_err(|_| {
        Error::validation(
            path(),
            format!("must be a nonnegative integer below 2^32, got {value}"),
        )
    })
}

fn index(value: i64, path: impl Fn() -> String) -> Result<usize> {
    usize::try_from(value).map_err(|_| Error::validation(path(), format!("negative index {value}")))
}

impl TryFrom<RawInstance> for ProblemInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        let buys = raw
            .buys
            .into_iter()
            .enumerate()
            .map(|(u, b)| {
                Ok(BuyContractType {
                    capacity: capacity(b.capacity, || format!("buys[{u}].capacity"))?,
                    id: b.id,
                    price: b.price,
                    fail_prob: b.fail_prob,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sells = raw
            .sells
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(SellContractType {
                    capacity: capacity(s.capacity, || format!("sells[{i}].capacity"))?,
                    id: s.id,
                    price: s.price,
                    penalty: s.penalty,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = raw
            .edges
            .iter()
            .enumerate()
            .map(|(e, &[u, i])| {
                Ok((
                    index(u, || format!("edges[{e}][0]"))?,
                    index(i, || format!("edges[{e}][1]"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        ProblemInstance::new(buys, sells, edges)
    }
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<ProblemInstance> {
    let raw: RawInstance = serde_json::from_str(text).map_err(|e| Error::Syntax(e.to_string()))?;
    ProblemInstance::try_from(raw)
}

impl Serialize for ProblemInstance {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ProblemInstance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawInstance::deserialize(deserializer)?;
        ProblemInstance::try_from(raw).map_err(serde::de::Error::custom)
    }
}

/// Which buy types survived. Bit `u` set means type `u` did not fail.
///
/// Displayed and parsed as a bit string whose `u`-th character is the state
/// of buy `u`, so `"10"` means the first buy is alive and the second failed.
/// The total order is lexicographic on that string.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FailureConfiguration {
    alive: u64,
    len: u8,
}

impl FailureConfiguration {
    fn mask_for(len: usize) -> u64 {
        if len == 64 {
            u64::MAX
        } else {
            (1u64 << len) - 1
        }
    }

    /// Builds a configuration from an alive mask. Bits at or above `len` are
    /// ignored.
    pub fn from_alive_mask(alive: u64, len: usize) -> Self {
        assert!(len <= MAX_BUY_TYPES, "at most {MAX_BUY_TYPES} buy types");
        Self {
            alive: alive & Self::mask_for(len),
            len: len as u8,
        }
    }

    pub fn from_bools(alive: &[bool]) -> Self {
        let mask = alive
            .iter()
            .enumerate()
            .fold(0u64, |acc, (u, &a)| if a { acc | (1 << u) } else { acc });
        Self::from_alive_mask(mask, alive.len())
    }

    pub fn all_alive(len: usize) -> Self {
        Self::from_alive_mask(u64::MAX, len)
    }

    pub fn all_failed(len: usize) -> Self {
        Self::from_alive_mask(0, len)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn alive_mask(&self) -> u64 {
        self.alive
    }

    pub fn failed_mask(&self) -> u64 {
        !self.alive & Self::mask_for(self.len())
    }

    pub fn is_alive(&self, u: usize) -> bool {
        self.alive >> u & 1 == 1
    }

    pub fn alive_count(&self) -> usize {
        self.alive.count_ones() as usize
    }

    pub fn failure_count(&self) -> usize {
        self.len() - self.alive_count()
    }

    pub fn is_all_alive(&self) -> bool {
        self.failure_count() == 0
    }

    pub fn is_all_failed(&self) -> bool {
        self.alive == 0
    }

    /// Position of this configuration in lexicographic enumeration order.
    pub fn lex_rank(&self) -> u64 {
        (0..self.len()).fold(0u64, |acc, u| acc << 1 | (self.alive >> u & 1))
    }

    pub fn from_lex_rank(rank: u64, len: usize) -> Self {
        let mask = (0..len).fold(0u64, |acc, u| acc | ((rank >> (len - 1 - u) & 1) << u));
        Self::from_alive_mask(mask, len)
    }

    /// All `2^len` configurations in lexicographic order, starting from the
    /// all-failed one.
    pub fn enumerate(len: usize) -> impl Iterator<Item = Self> + Clone {
        assert!(len < 64, "cannot enumerate 2^{len} configurations");
        (0..1u64 << len).map(move |rank| Self::from_lex_rank(rank, len))
    }
}

impl PartialOrd for FailureConfiguration {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FailureConfiguration {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.len
            .cmp(&other.len)
            .then_with(|| self.lex_rank().cmp(&other.lex_rank()))
    }
}

impl fmt::Display for FailureConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for u in 0..self.len() {
            f.write_str(if self.is_alive(u) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for FailureConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FailureConfiguration({self})")
    }
}

impl FromStr for FailureConfiguration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > MAX_BUY_TYPES {
            return Err(Error::validation(
                "configuration",
                format!("expected 1 to {MAX_BUY_TYPES} bits, got {:?}", s),
            ));
        }
        let mut alive = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '1' => alive.push(true),
                '0' => alive.push(false),
                _ => {
                    return Err(Error::validation(
                        "configuration",
                        format!("expected only '0' and '1', got {:?}", s),
                    ))
                }
            }
        }
        Ok(Self::from_bools(&alive))
    }
}

impl Serialize for FailureConfiguration {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FailureConfiguration {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Numbers of contracts held: `n[u]` buys of type `u`, `m[i]` sells of type `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Allocation {
    pub n: Vec<u32>,
    pub m: Vec<u32>,
}

impl Allocation {
    pub fn zero(instance: &ProblemInstance) -> Self {
        Self {
            n: vec![0; instance.num_buys()],
            m: vec![0; instance.num_sells()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.n.iter().chain(&self.m).all(|&x| x == 0)
    }

    /// Checks shape and the `0 <= n_u <= C_u`, `0 <= m_i <= C_i` bounds.
    pub fn validate(&self, instance: &ProblemInstance) -> Result<()> {
        if self.n.len() != instance.num_buys() {
            return Err(Error::validation(
                "n",
                format!(
                    "expected {} entries, got {}",
                    instance.num_buys(),
                    self.n.len()
                ),
            ));
        }
        if self.m.len() != instance.num_sells() {
            return Err(Error::validation(
                "m",
                format!(
                    "expected {} entries, got {}",
                    instance.num_sells(),
                    self.m.len()
                ),
            ));
        }
        for (u, (&held, buy)) in self.n.iter().zip(instance.buys()).enumerate() {
            if held > buy.capacity {
                return Err(Error::validation(
                    format!("n[{u}]"),
                    format!("{held} exceeds capacity {}", buy.capacity),
                ));
            }
        }
        for (i, (&held, sell)) in self.m.iter().zip(instance.sells()).enumerate() {
            if held > sell.capacity {
                return Err(Error::validation(
                    format!("m[{i}]"),
                    format!("{held} exceeds capacity {}", sell.capacity),
                ));
            }
        }
        Ok(())
    }

    /// First-stage profit: `-sum n_u R_u + sum m_i (R_i - penalty_i)`.
    pub fn first_stage_value(&self, instance: &ProblemInstance) -> f64 {
        let buys: f64 = self
            .n
            .iter()
            .zip(instance.buys())
            .map(|(&n, b)| n as f64 * b.price)
            .sum();
        let sells: f64 = self
            .m
            .iter()
            .zip(instance.sells())
            .map(|(&m, s)| m as f64 * (s.price - s.penalty))
            .sum();
        sells - buys
    }

    pub fn n_f64(&self) -> Vec<f64> {
        self.n.iter().map(|&x| x as f64).collect()
    }

    pub fn m_f64(&self) -> Vec<f64> {
        self.m.iter().map(|&x| x as f64).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("allocations always serialize")
    }
}

/// Parses an allocation document `{"n": [...], "m": [...]}`. Bounds are
/// checked separately by [`Allocation::validate`].
pub fn parse_allocation(text: &str) -> Result<Allocation> {
    serde_json::from_str(text).map_err(|e| Error::Syntax(e.to_string()))
}

pub(crate) fn check_config_len(
    instance: &ProblemInstance,
    config: &FailureConfiguration,
) -> Result<()> {
    if config.len() != instance.num_buys() {
        return Err(Error::validation(
            "configuration",
            format!(
                "expected {} bits, got {}",
                instance.num_buys(),
                config.len()
            ),
        ));
    }
    Ok(())
}

/// Closed interval sampled uniformly by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

impl ValueRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub buys: usize,
    pub sells: usize,
    pub edge_density: f64,
    pub buy_price: ValueRange,
    pub fail_prob: ValueRange,
    pub sell_price: ValueRange,
    pub penalty: ValueRange,
    pub buy_capacity: (u32, u32),
    pub sell_capacity: (u32, u32),
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            buys: 6,
            sells: 4,
            edge_density: 0.5,
            buy_price: ValueRange::new(1.0, 3.0),
            fail_prob: ValueRange::new(0.05, 0.5),
            sell_price: ValueRange::new(3.0, 6.0),
            penalty: ValueRange::new(4.0, 12.0),
            buy_capacity: (1, 5),
            sell_capacity: (1, 5),
        }
    }
}

impl GeneratorParams {
    pub fn new(buys: usize, sells: usize, edge_density: f64) -> Self {
        Self {
            buys,
            sells,
            edge_density,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.buys == 0 || self.buys > MAX_BUY_TYPES {
            return Err(Error::validation(
                "q",
                format!("must be in 1..={MAX_BUY_TYPES}, got {}", self.buys),
            ));
        }
        if self.sells == 0 {
            return Err(Error::validation("k", "must be at least 1"));
        }
        if !(self.edge_density > 0.0 && self.edge_density <= 1.0) {
            return Err(Error::validation(
                "edge_density",
                format!("must lie in (0, 1], got {}", self.edge_density),
            ));
        }
        for (name, range) in [
            ("buy_price", self.buy_price),
            ("sell_price", self.sell_price),
            ("penalty", self.penalty),
            ("fail_prob", self.fail_prob),
        ] {
            if !(range.min.is_finite()
                && range.max.is_finite()
                && 0.0 <= range.min
                && range.min <= range.max)
            {
                return Err(Error::validation(
                    name,
                    format!("invalid range [{}, {}]", range.min, range.max),
                ));
            }
        }
        if self.fail_prob.max > 1.0 {
            return Err(Error::validation(
                "fail_prob",
                "range must lie within [0, 1]",
            ));
        }
        for (name, (lo, hi)) in [
            ("buy_capacity", self.buy_capacity),
            ("sell_capacity", self.sell_capacity),
        ] {
            if lo > hi {
                return Err(Error::validation(
                    name,
                    format!("invalid range [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, range: ValueRange, decimals: i32) -> f64 {
    let raw = if range.min == range.max {
        range.min
    } else {
        rng.gen_range(range.min..=range.max)
    };
    let scale = 10f64.powi(decimals);
    ((raw * scale).round() / scale).clamp(range.min, range.max)
}

/// Draws a random instance. Prices are rounded to cents and probabilities to
/// three decimals. Every sell type receives at least one edge: a sell left
/// without edges after the density draw is connected to a uniformly chosen buy.
pub fn generate_instance(params: &GeneratorParams, rng_seed: u64) -> Result<ProblemInstance> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let buys: Vec<BuyContractType> = (0..params.buys)
        .map(|u| BuyContractType {
            id: format!("b{u}"),
            price: draw(&mut rng, params.buy_price, 2),
            fail_prob: draw(&mut rng, params.fail_prob, 3),
            capacity: rng.gen_range(params.buy_capacity.0..=params.buy_capacity.1),
        })
        .collect();
    let sells: Vec<SellContractType> = (0..params.sells)
        .map(|i| SellContractType {
            id: format!("s{i}"),
            price: draw(&mut rng, params.sell_price, 2),
            penalty: draw(&mut rng, params.penalty, 2),
            capacity: rng.gen_range(params.sell_capacity.0..=params.sell_capacity.1),
        })
        .collect();

    let mut edges = Vec::new();
    for u in 0..params.buys {
        for i in 0..params.sells {
            if params.edge_density >= 1.0 || rng.gen_bool(params.edge_density) {
                edges.push((u, i));
            }
        }
    }
    connect_isolated_sells(&mut rng, &mut edges, params.buys, params.sells);
    edges.sort_unstable();

    ProblemInstance::new(buys, sells, edges)
}

fn connect_isolated_sells(
    rng: &mut ChaCha8Rng,
    edges: &mut Vec<(usize, usize)>,
    buys: usize,
    sells: usize,
) {
    for i in 0..sells {
        if !edges.iter().any(|&(_, s)| s == i) {
            edges.push((rng.gen_range(0..buys), i));
        }
    }
}
