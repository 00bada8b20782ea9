//! Domain types for facility assignment on a line with server capacities.
//!
//! Every coordinate and cost is an exact [`Rational`]. Positions are read from
//! JSON as integers, decimals, or `"p/q"` strings, and written back as integers
//! when integral and `"p/q"` strings otherwise.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{OfalError, Result};

pub type Rational = num_rational::BigRational;

/// Free sets are 64-bit masks, which caps the layout size.
pub const MAX_SERVERS: usize = 64;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn dist(a: &Rational, b: &Rational) -> Rational {
    (a - b).abs()
}

/// Parses `"3"`, `"-1.25"`, `"7/3"` or `"1e-2"`.
pub fn parse_coord(text: &str) -> Result<Rational> {
    let bad = || OfalError::Coordinate(text.to_string());
    let t = text.trim();
    if t.is_empty() {
        return Err(bad());
    }
    if let Some((p, q)) = t.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(p, q));
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = t[pos + 1..].parse().map_err(|_| bad())?;
            (&t[..pos], e)
        }
        None => (t, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let joined = format!("{whole}{frac}");
    let numer: BigInt = joined.parse().map_err(|_| bad())?;
    let scale = exponent - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Rational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Ok(value)
}

/// `"p/q"` for non-integers, `"p"` for integers.
pub fn format_coord(q: &Rational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Decimal rendering with `digits` significant digits (for human-facing output).
pub fn to_decimal(q: &Rational, digits: usize) -> String {
    match q.to_f64() {
        Some(v) if v.is_finite() => format!("{:.*e}", digits.saturating_sub(1), v)
            .parse::<f64>()
            .map(|x| format!("{x}"))
            .unwrap_or_else(|_| v.to_string()),
        _ => format_coord(q),
    }
}

pub(crate) fn coord_to_json(q: &Rational) -> serde_json::Value {
    if q.is_integer() {
        if let Some(v) = q.numer().to_i64() {
            return serde_json::Value::from(v);
        }
    }
    serde_json::Value::String(format_coord(q))
}

pub(crate) fn coord_from_json(v: &serde_json::Value) -> Result<Rational> {
    match v {
        serde_json::Value::Number(n) => parse_coord(&n.to_string()),
        serde_json::Value::String(s) => parse_coord(s),
        other => Err(OfalError::Coordinate(other.to_string())),
    }
}

/// serde adapter for a single exact coordinate.
pub mod serde_coord {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        coord_to_json(q).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        coord_from_json(&v).map_err(serde::de::Error::custom)
    }
}

/// serde adapter for a list of exact coordinates.
pub mod serde_coords {
    use super::*;

    pub fn serialize<S: Serializer>(qs: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
        let values: Vec<_> = qs.iter().map(coord_to_json).collect();
        values.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<Rational>, D::Error> {
        let values = Vec::<serde_json::Value>::deserialize(d)?;
        values
            .iter()
            .map(coord_from_json)
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)
    }
}

/// Strictly increasing server positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ServerLayout {
    positions: Vec<Rational>,
}

impl ServerLayout {
    pub fn new(positions: Vec<Rational>) -> Result<Self> {
        if positions.is_empty() {
            return Err(OfalError::EmptyLayout);
        }
        if positions.len() > MAX_SERVERS {
            return Err(OfalError::TooManyServers {
                count: positions.len(),
                max: MAX_SERVERS,
            });
        }
        for (i, w) in positions.windows(2).enumerate() {
            match w[0].cmp(&w[1]) {
                Ordering::Less => {}
                Ordering::Equal => return Err(OfalError::Duplicate { index: i + 1 }),
                Ordering::Greater => return Err(OfalError::Unsorted { index: i + 1 }),
            }
        }
        Ok(Self { positions })
    }

    pub fn from_integers(xs: &[i64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| int(x)).collect())
    }

    pub fn positions(&self) -> &[Rational] {
        &self.positions
    }

    pub fn position(&self, j: usize) -> &Rational {
        &self.positions[j]
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn first(&self) -> &Rational {
        &self.positions[0]
    }

    pub fn last(&self) -> &Rational {
        &self.positions[self.positions.len() - 1]
    }

    /// Layout with one more server appended on the right.
    pub fn extended(&self, position: Rational) -> Result<Self> {
        let mut positions = self.positions.clone();
        positions.push(position);
        Self::new(positions)
    }
}

/// A layout together with a capacity per server.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Instance {
    layout: ServerLayout,
    capacities: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    #[serde(with = "serde_coords")]
    servers: Vec<Rational>,
    capacities: Vec<u32>,
}

impl Instance {
    pub fn new(layout: ServerLayout, capacities: Vec<u32>) -> Result<Self> {
        if capacities.len() != layout.len() {
            return Err(OfalError::CapacityCount {
                expected: layout.len(),
                found: capacities.len(),
            });
        }
        if let Some(index) = capacities.iter().position(|&c| c == 0) {
            return Err(OfalError::NonPositiveCapacity { index });
        }
        Ok(Self { layout, capacities })
    }

    pub fn unit(layout: ServerLayout) -> Self {
        let k = layout.len();
        Self {
            layout,
            capacities: vec![1; k],
        }
    }

    pub fn uniform(layout: ServerLayout, capacity: u32) -> Result<Self> {
        let k = layout.len();
        Self::new(layout, vec![capacity; k])
    }

    pub fn layout(&self) -> &ServerLayout {
        &self.layout
    }

    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    pub fn capacity(&self, j: usize) -> u32 {
        self.capacities[j]
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    pub fn position(&self, j: usize) -> &Rational {
        self.layout.position(j)
    }

    pub fn total_capacity(&self) -> u64 {
        self.capacities.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn is_unit(&self) -> bool {
        self.capacities.iter().all(|&c| c == 1)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        Self::new(ServerLayout::new(file.servers)?, file.capacities)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = InstanceFile {
            servers: self.layout.positions.clone(),
            capacities: self.capacities.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

impl Serialize for Instance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        InstanceFile {
            servers: self.layout.positions.clone(),
            capacities: self.capacities.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = InstanceFile::deserialize(d)?;
        ServerLayout::new(file.servers)
            .and_then(|layout| Instance::new(layout, file.capacities))
            .map_err(serde::de::Error::custom)
    }
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    Instance::from_json(&std::fs::read_to_string(path)?)
}

/// Ordered request positions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestSequence {
    #[serde(with = "serde_coords")]
    pub requests: Vec<Rational>,
}

impl RequestSequence {
    pub fn new(requests: Vec<Rational>) -> Self {
        Self { requests }
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rational> {
        self.requests.iter()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl std::ops::Index<usize> for RequestSequence {
    type Output = Rational;

    fn index(&self, i: usize) -> &Rational {
        &self.requests[i]
    }
}

impl FromIterator<Rational> for RequestSequence {
    fn from_iter<I: IntoIterator<Item = Rational>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

pub fn load_sequence(path: impl AsRef<Path>) -> Result<RequestSequence> {
    RequestSequence::from_json(&std::fs::read_to_string(path)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CapacityViolation {
    pub requests: usize,
    pub capacity: u64,
}

impl fmt::Display for CapacityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} requests exceed total capacity {}",
            self.requests, self.capacity
        )
    }
}

impl From<CapacityViolation> for OfalError {
    fn from(v: CapacityViolation) -> Self {
        OfalError::CapacityExceeded {
            requests: v.requests,
            capacity: v.capacity,
        }
    }
}

pub fn validate_pair(inst: &Instance, seq: &RequestSequence) -> std::result::Result<(), CapacityViolation> {
    let capacity = inst.total_capacity();
    if seq.len() as u64 <= capacity {
        Ok(())
    } else {
        Err(CapacityViolation {
            requests: seq.len(),
            capacity,
        })
    }
}

/// Result of running an algorithm on a sequence.
///
/// `free_snapshots[t]` holds the residual capacity of every server just after
/// request `t` was matched; a server is free in that snapshot iff its entry is
/// positive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentTrace {
    pub algorithm: String,
    pub assignment: Vec<usize>,
    pub free_snapshots: Vec<Vec<u32>>,
    #[serde(with = "serde_coords")]
    pub per_step_cost: Vec<Rational>,
    #[serde(with = "serde_coord")]
    pub total_cost: Rational,
}

impl AssignmentTrace {
    /// Builds a trace from a raw assignment, checking capacities.
    pub fn from_assignment(
        algorithm: impl Into<String>,
        inst: &Instance,
        seq: &RequestSequence,
        assignment: Vec<usize>,
    ) -> Result<Self> {
        if assignment.len() != seq.len() {
            return Err(OfalError::LengthMismatch {
                what: "assignment",
                expected: seq.len(),
                found: assignment.len(),
            });
        }
        let mut remaining = inst.capacities().to_vec();
        let mut free_snapshots = Vec::with_capacity(seq.len());
        let mut per_step_cost = Vec::with_capacity(seq.len());
        let mut total_cost = Rational::zero();
        for (r, &j) in seq.iter().zip(&assignment) {
            if j >= inst.len() {
                return Err(OfalError::InvalidParameter(format!(
                    "server index {j} out of range"
                )));
            }
            if remaining[j] == 0 {
                return Err(OfalError::CapacityViolated {
                    server: j,
                    capacity: inst.capacity(j),
                });
            }
            remaining[j] -= 1;
            let c = dist(r, inst.position(j));
            total_cost += &c;
            per_step_cost.push(c);
            free_snapshots.push(remaining.clone());
        }
        Ok(Self {
            algorithm: algorithm.into(),
            assignment,
            free_snapshots,
            per_step_cost,
            total_cost,
        })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Free server indices just after step `t`.
    pub fn free_after(&self, t: usize) -> Vec<usize> {
        free_indices(&self.free_snapshots[t])
    }

    /// Free server indices just before step `t`.
    pub fn free_before(&self, inst: &Instance, t: usize) -> Vec<usize> {
        if t == 0 {
            (0..inst.len()).collect()
        } else {
            self.free_after(t - 1)
        }
    }
}

pub fn free_indices(remaining: &[u32]) -> Vec<usize> {
    remaining
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(j, _)| j)
        .collect()
}

/// Σ |r_t − s_{assignment[t]}| for a trace replayed against its inputs.
pub fn matching_cost(
    trace: &AssignmentTrace,
    inst: &Instance,
    seq: &RequestSequence,
) -> Result<Rational> {
    if trace.assignment.len() != seq.len() {
        return Err(OfalError::LengthMismatch {
            what: "trace",
            expected: seq.len(),
            found: trace.assignment.len(),
        });
    }
    let mut total = Rational::zero();
    for (r, &j) in seq.iter().zip(&trace.assignment) {
        if j >= inst.len() {
            return Err(OfalError::InvalidParameter(format!(
                "server index {j} out of range"
            )));
        }
        total += dist(r, inst.position(j));
    }
    Ok(total)
}

/// Cost ratio with the conventions ∞ for `opt = 0 < alg` and 1 for `0 = 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Rate {
    Finite(Rational),
    Infinite,
}

impl Rate {
    pub fn of(alg: &Rational, opt: &Rational) -> Self {
        if opt.is_positive() {
            Rate::Finite(alg / opt)
        } else if alg.is_positive() {
            Rate::Infinite
        } else {
            Rate::Finite(Rational::one())
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Rate::Finite(_))
    }

    pub fn finite(&self) -> Option<&Rational> {
        match self {
            Rate::Finite(q) => Some(q),
            Rate::Infinite => None,
        }
    }

    pub fn le(&self, bound: &Rational) -> bool {
        match self {
            Rate::Finite(q) => q <= bound,
            Rate::Infinite => false,
        }
    }

    pub fn ge(&self, bound: &Rational) -> bool {
        match self {
            Rate::Finite(q) => q >= bound,
            Rate::Infinite => true,
        }
    }

    pub fn decimal(&self) -> String {
        match self {
            Rate::Finite(q) => to_decimal(q, 12),
            Rate::Infinite => "inf".to_string(),
        }
    }
}

impl Ord for Rate {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Rate::Finite(a), Rate::Finite(b)) => a.cmp(b),
            (Rate::Finite(_), Rate::Infinite) => Ordering::Less,
            (Rate::Infinite, Rate::Finite(_)) => Ordering::Greater,
            (Rate::Infinite, Rate::Infinite) => Ordering::Equal,
        }
    }
}

impl PartialOrd for Rate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Finite(q) => f.write_str(&format_coord(q)),
            Rate::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        if text == "inf" {
            Ok(Rate::Infinite)
        } else {
            parse_coord(&text)
                .map(Rate::Finite)
                .map_err(serde::de::Error::custom)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatioReport {
    pub instance_id: String,
    pub algorithm: String,
    pub seed: Option<u64>,
    #[serde(with = "serde_coord")]
    pub alg_cost: Rational,
    #[serde(with = "serde_coord")]
    pub opt_cost: Rational,
    pub rate: Rate,
    #[serde(with = "serde_coord")]
    pub bound: Rational,
    pub within_bound: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_coordinate_forms() {
        assert_eq!(parse_coord("3").unwrap(), int(3));
        assert_eq!(parse_coord("-1.25").unwrap(), rat(-5, 4));
        assert_eq!(parse_coord("7/3").unwrap(), rat(7, 3));
        assert_eq!(parse_coord("1e-2").unwrap(), rat(1, 100));
        assert_eq!(parse_coord(".5").unwrap(), rat(1, 2));
        assert!(parse_coord("1/0").is_err());
        assert!(parse_coord("abc").is_err());
        assert!(parse_coord("").is_err());
    }

    #[test]
    fn loads_small_instance() {
        let inst = Instance::from_json(r#"{"servers":[0,2],"capacities":[1,1]}"#).unwrap();
        assert_eq!(inst.len(), 2);
        assert_eq!(inst.position(1), &int(2));
    }

    #[test]
    fn loads_exponential_layout() {
        let inst =
            Instance::from_json(r#"{"servers":[0,2,4,8],"capacities":[1,1,1,1]}"#).unwrap();
        assert_eq!(inst.len(), 4);
        assert_eq!(inst.layout().last(), &int(8));
    }

    #[test]
    fn accepts_decimal_numbers_exactly() {
        let inst = Instance::from_json(r#"{"servers":[0.1,"1/3",2],"capacities":[1,2,1]}"#)
            .unwrap();
        assert_eq!(inst.position(0), &rat(1, 10));
        assert_eq!(inst.position(1), &rat(1, 3));
        let seq = RequestSequence::from_json(r#"{"requests":[0.9,"0.9"]}"#).unwrap();
        assert_eq!(seq[0], rat(9, 10));
        assert_eq!(seq[0], seq[1]);
    }

    #[test]
    fn rejects_bad_instances() {
        let unsorted = Instance::from_json(r#"{"servers":[2,0],"capacities":[1,1]}"#);
        assert!(matches!(unsorted, Err(OfalError::Unsorted { .. })));
        assert!(unsorted.unwrap_err().to_string().contains("unsorted"));
        let dup = Instance::from_json(r#"{"servers":[0,0],"capacities":[1,1]}"#);
        assert!(matches!(dup, Err(OfalError::Duplicate { .. })));
        let zero = Instance::from_json(r#"{"servers":[0,1],"capacities":[1,0]}"#);
        assert!(matches!(zero, Err(OfalError::NonPositiveCapacity { index: 1 })));
        let count = Instance::from_json(r#"{"servers":[0,1],"capacities":[1]}"#);
        assert!(matches!(count, Err(OfalError::CapacityCount { .. })));
        assert!(Instance::from_json(r#"{"servers":[],"capacities":[]}"#).is_err());
        assert!(Instance::from_json("not json").is_err());
    }

    #[test]
    fn validate_pair_counts_capacity() {
        let two = Instance::unit(ServerLayout::from_integers(&[0, 2]).unwrap());
        let seq = |n: usize| RequestSequence::new(vec![int(1); n]);
        assert!(validate_pair(&two, &seq(2)).is_ok());
        assert_eq!(
            validate_pair(&two, &seq(3)),
            Err(CapacityViolation {
                requests: 3,
                capacity: 2
            })
        );
        let one = Instance::new(ServerLayout::from_integers(&[0]).unwrap(), vec![5]).unwrap();
        assert!(validate_pair(&one, &seq(5)).is_ok());
    }

    #[test]
    fn matching_cost_cases() {
        let inst = Instance::unit(ServerLayout::from_integers(&[0, 2]).unwrap());
        let on_servers = RequestSequence::new(vec![int(0), int(2)]);
        let trace = AssignmentTrace::from_assignment("x", &inst, &on_servers, vec![0, 1]).unwrap();
        assert_eq!(matching_cost(&trace, &inst, &on_servers).unwrap(), int(0));

        let single = RequestSequence::new(vec![int(1)]);
        let trace = AssignmentTrace::from_assignment("x", &inst, &single, vec![0]).unwrap();
        assert_eq!(matching_cost(&trace, &inst, &single).unwrap(), int(1));
        assert!(matching_cost(&trace, &inst, &on_servers).is_err());
    }

    #[test]
    fn trace_rejects_over_capacity() {
        let inst = Instance::unit(ServerLayout::from_integers(&[0, 2]).unwrap());
        let seq = RequestSequence::new(vec![int(0), int(0)]);
        assert!(matches!(
            AssignmentTrace::from_assignment("x", &inst, &seq, vec![0, 0]),
            Err(OfalError::CapacityViolated { server: 0, .. })
        ));
    }

    #[test]
    fn rate_case_split() {
        assert_eq!(Rate::of(&int(3), &int(2)), Rate::Finite(rat(3, 2)));
        assert_eq!(Rate::of(&int(1), &int(0)), Rate::Infinite);
        assert_eq!(Rate::of(&int(0), &int(0)), Rate::Finite(int(1)));
        assert!(Rate::Infinite > Rate::Finite(int(1000)));
        assert!(!Rate::Infinite.le(&int(5)));
    }

    #[test]
    fn instance_round_trips_through_json() {
        let inst = Instance::new(
            ServerLayout::new(vec![rat(-3, 2), int(0), rat(7, 3)]).unwrap(),
            vec![1, 4, 2],
        )
        .unwrap();
        let text = inst.to_json().unwrap();
        assert_eq!(Instance::from_json(&text).unwrap(), inst);
        let seq = RequestSequence::new(vec![rat(1, 7), int(-4)]);
        assert_eq!(RequestSequence::from_json(&seq.to_json().unwrap()).unwrap(), seq);
    }
}
