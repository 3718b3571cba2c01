//! Exhaustive check that deterministic non-revisiting search over the
//! `k`-subsets of `{1, …, d}` yields the same distribution of observed value
//! sequences for every algorithm, once averaged over all objective functions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 8;
pub const MAX_POINTS: usize = 64;
/// Largest number of objective functions `|𝒴|^|points|` enumerated.
pub const MAX_FUNCTIONS: u64 = 1 << 24;

/// All `k`-subsets of `{1, …, d}` (1-based) in lexicographic order.
pub fn enumerate_strategies(d: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > d {
        return Err(Error::InvalidParameter(format!("need 1 ≤ k ≤ d (d={d}, k={k})")));
    }
    if d > MAX_DIM {
        return Err(Error::TooLarge(format!("d = {d} exceeds {MAX_DIM}")));
    }
    let count = binomial(d, k);
    if count > MAX_POINTS {
        return Err(Error::TooLarge(format!("C({d}, {k}) = {count} exceeds {MAX_POINTS}")));
    }
    let mut out = Vec::with_capacity(count);
    let mut current: Vec<usize> = (1..=k).collect();
    loop {
        out.push(current.clone());
        // advance the rightmost entry that still has room
        let Some(i) = (0..k).rev().find(|&i| current[i] < d - (k - 1 - i)) else {
            break;
        };
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub points: Vec<Vec<usize>>,
    /// `|𝒴|`; objective values are `0..alphabet`.
    pub alphabet: usize,
    /// Query budget `m`.
    pub m: usize,
}

impl SearchSpace {
    pub fn new(d: usize, k: usize, alphabet: usize, m: usize) -> Result<Self> {
        let points = enumerate_strategies(d, k)?;
        if alphabet == 0 {
            return Err(Error::InvalidParameter("value alphabet must be nonempty".into()));
        }
        if m == 0 || m > points.len() {
            return Err(Error::InvalidParameter(format!("query budget m must lie in 1..={}, got {m}", points.len())));
        }
        Ok(Self { points, alphabet, m })
    }

    fn function_count(&self) -> Option<u64> {
        (self.alphabet as u64).checked_pow(self.points.len() as u32)
    }
}

/// A deterministic algorithm written out as a decision tree: the point
/// (index into [`SearchSpace::points`]) queried after each observed value history.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchAlgorithm {
    pub name: String,
    #[serde(with = "sequence_keys")]
    pub tree: BTreeMap<Vec<usize>, usize>,
}

impl SearchAlgorithm {
    /// Tabulates `policy(visited, history)` over every history of length `< m`.
    pub fn from_policy<F>(name: &str, space: &SearchSpace, policy: F) -> Result<Self>
    where
        F: Fn(&[usize], &[usize]) -> usize,
    {
        let mut tree = BTreeMap::new();
        let mut frontier: Vec<(Vec<usize>, Vec<usize>)> = vec![(Vec::new(), Vec::new())];
        while let Some((history, visited)) = frontier.pop() {
            let next = policy(&visited, &history);
            tree.insert(history.clone(), next);
            if history.len() + 1 < space.m {
                for value in 0..space.alphabet {
                    let mut h = history.clone();
                    h.push(value);
                    let mut v = visited.clone();
                    v.push(next);
                    frontier.push((h, v));
                }
            }
        }
        let alg = Self { name: name.to_string(), tree };
        alg.validate(space)?;
        Ok(alg)
    }

    /// Checks that every reachable history has a next point and that no path revisits a point.
    pub fn validate(&self, space: &SearchSpace) -> Result<()> {
        let mut stack: Vec<(Vec<usize>, Vec<usize>)> = vec![(Vec::new(), Vec::new())];
        while let Some((history, visited)) = stack.pop() {
            let &next = self.tree.get(&history).ok_or_else(|| {
                Error::InvalidAlgorithm(format!("{}: no move after history {history:?}", self.name))
            })?;
            if next >= space.points.len() {
                return Err(Error::InvalidAlgorithm(format!("{}: point {next} out of range", self.name)));
            }
            if visited.contains(&next) {
                return Err(Error::InvalidAlgorithm(format!(
                    "{}: revisits point {next} after history {history:?}",
                    self.name
                )));
            }
            if history.len() + 1 < space.m {
                for value in 0..space.alphabet {
                    let mut h = history.clone();
                    h.push(value);
                    let mut v = visited.clone();
                    v.push(next);
                    stack.push((h, v));
                }
            }
        }
        Ok(())
    }

    fn next(&self, history: &[usize]) -> usize {
        self.tree[history]
    }
}

fn unvisited(space: &SearchSpace, visited: &[usize]) -> Vec<usize> {
    (0..space.points.len()).filter(|p| !visited.contains(p)).collect()
}

/// Visits points in lexicographic order.
pub fn lexicographic(space: &SearchSpace) -> Result<SearchAlgorithm> {
    SearchAlgorithm::from_policy("lexicographic", space, |visited, _| unvisited(space, visited)[0])
}

/// Visits points in reverse lexicographic order.
pub fn reverse_lexicographic(space: &SearchSpace) -> Result<SearchAlgorithm> {
    SearchAlgorithm::from_policy("reverse", space, |visited, _| *unvisited(space, visited).last().expect("m ≤ |points|"))
}

/// Lexicographic order starting from point `offset` and wrapping around.
pub fn rotation(space: &SearchSpace, offset: usize) -> Result<SearchAlgorithm> {
    let n = space.points.len();
    SearchAlgorithm::from_policy(&format!("rotation-{offset}"), space, |visited, _| {
        (0..n).map(|i| (offset + i) % n).find(|p| !visited.contains(p)).expect("m ≤ |points|")
    })
}

/// Picks the unvisited point at position `(Σ observed values) mod |unvisited|`.
pub fn value_adaptive(space: &SearchSpace) -> Result<SearchAlgorithm> {
    SearchAlgorithm::from_policy("value-adaptive", space, |visited, history| {
        let free = unvisited(space, visited);
        free[history.iter().sum::<usize>() % free.len()]
    })
}

/// Walks forward while the last value is the largest symbol seen so far,
/// otherwise jumps to the last unvisited point.
pub fn greedy_on_value(space: &SearchSpace) -> Result<SearchAlgorithm> {
    SearchAlgorithm::from_policy("greedy-on-value", space, |visited, history| {
        let free = unvisited(space, visited);
        match history.last() {
            Some(&last) if history.iter().all(|&v| v <= last) => free[0],
            Some(_) => *free.last().expect("nonempty"),
            None => free[free.len() / 2],
        }
    })
}

/// The shipped algorithm zoo for a search space.
pub fn algorithm_zoo(space: &SearchSpace) -> Result<Vec<SearchAlgorithm>> {
    let mut zoo = vec![lexicographic(space)?, reverse_lexicographic(space)?];
    for offset in 1..space.points.len().min(3) {
        zoo.push(rotation(space, offset)?);
    }
    zoo.push(value_adaptive(space)?);
    zoo.push(greedy_on_value(space)?);
    Ok(zoo)
}

/// Number of objective functions producing each value sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHistogram {
    #[serde(with = "sequence_keys")]
    pub counts: BTreeMap<Vec<usize>, u64>,
}

impl TraceHistogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Runs `alg` for `m` queries on every `f ∈ 𝒴^points`.
pub fn trace_histogram(space: &SearchSpace, alg: &SearchAlgorithm) -> Result<TraceHistogram> {
    let total = space
        .function_count()
        .filter(|&c| c <= MAX_FUNCTIONS)
        .ok_or_else(|| Error::BudgetExceeded(format!("{}^{} objective functions exceed 2^24", space.alphabet, space.points.len())))?;
    alg.validate(space)?;
    let base = space.alphabet as u64;
    let mut counts = BTreeMap::new();
    let mut history = Vec::with_capacity(space.m);
    for code in 0..total {
        history.clear();
        for _ in 0..space.m {
            let p = alg.next(&history);
            history.push(((code / base.pow(p as u32)) % base) as usize);
        }
        *counts.entry(history.clone()).or_insert(0) += 1;
    }
    Ok(TraceHistogram { counts })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NflVerdict {
    pub identical: bool,
    pub discrepancy: u64,
    pub first: TraceHistogram,
    pub second: TraceHistogram,
}

pub fn nfl_verdict(space: &SearchSpace, alg1: &SearchAlgorithm, alg2: &SearchAlgorithm) -> Result<NflVerdict> {
    let first = trace_histogram(space, alg1)?;
    let second = trace_histogram(space, alg2)?;
    let discrepancy = first
        .counts
        .keys()
        .chain(second.counts.keys())
        .map(|y| {
            let a = first.counts.get(y).copied().unwrap_or(0);
            let b = second.counts.get(y).copied().unwrap_or(0);
            a.abs_diff(b)
        })
        .max()
        .unwrap_or(0);
    Ok(NflVerdict { identical: discrepancy == 0, discrepancy, first, second })
}

/// JSON object keys must be strings: value sequences are written as `"0,1,2"`
/// and the empty sequence as `""`.
mod sequence_keys {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<V: Serialize, S: Serializer>(map: &BTreeMap<Vec<usize>, V>, s: S) -> Result<S::Ok, S::Error> {
        let keyed: BTreeMap<String, &V> = map
            .iter()
            .map(|(k, v)| (k.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","), v))
            .collect();
        keyed.serialize(s)
    }

    pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Vec<usize>, V>, D::Error> {
        let keyed = BTreeMap::<String, V>::deserialize(d)?;
        keyed
            .into_iter()
            .map(|(k, v)| {
                let key = if k.is_empty() {
                    Vec::new()
                } else {
                    k.split(',').map(|x| x.parse::<usize>().map_err(D::Error::custom)).collect::<Result<_, _>>()?
                };
                Ok((key, v))
            })
            .collect()
    }
}
