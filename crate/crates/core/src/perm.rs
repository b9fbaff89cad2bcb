//! Permutations of branch labels {0, …, n−1}, their orbits under a
//! generating set, and bounded group closure.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

/// A permutation stored as its image list: `map[i]` is where label i goes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Perm {
    map: Vec<usize>,
}

impl Perm {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &v in &map {
            if v >= n || seen[v] {
                return Err(Error::CompositionTable(format!(
                    "image list {map:?} is not a permutation"
                )));
            }
            seen[v] = true;
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn images(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// self ∘ other: first apply `other`, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        Self {
            map: (0..self.len()).map(|i| self.map[other.map[i]]).collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &v) in self.map.iter().enumerate() {
            inv[v] = i;
        }
        Self { map: inv }
    }

    /// Disjoint cycle notation, fixed points omitted (identity prints "()").
    pub fn cycle_notation(&self) -> String {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = String::new();
        for start in 0..n {
            if seen[start] || self.map[start] == start {
                seen[start] = true;
                continue;
            }
            out.push('(');
            let mut i = start;
            loop {
                seen[i] = true;
                out.push_str(&i.to_string());
                i = self.map[i];
                if i == start {
                    break;
                }
                out.push(' ');
            }
            out.push(')');
        }
        if out.is_empty() {
            out.push_str("()");
        }
        out
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.cycle_notation())
    }
}

/// Orbits of {0, …, n−1} under a generating set. The orbit containing 0
/// comes first; the rest are ordered by smallest element; each orbit is
/// sorted ascending.
pub fn orbits(generators: &[Perm], n: usize) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for g in generators {
        assert_eq!(g.len(), n);
        for i in 0..n {
            let (a, b) = (find(&mut parent, i), find(&mut parent, g.apply(i)));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut buckets: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        buckets.entry(r).or_default().push(i);
    }
    let mut all: Vec<Vec<usize>> = buckets.into_values().collect();
    for orbit in &mut all {
        orbit.sort_unstable();
    }
    all.sort_by_key(|o| o[0]);
    let zero_pos = all.iter().position(|o| o.contains(&0)).unwrap();
    all.swap(0, zero_pos);
    all
}

/// Full group generated by the given permutations, by breadth-first
/// closure. Errors if the group exceeds `cap` elements.
pub fn closure(generators: &[Perm], n: usize, cap: usize) -> Result<Vec<Perm>> {
    let id = Perm::identity(n);
    let mut seen: HashSet<Perm> = HashSet::from([id.clone()]);
    let mut order: Vec<Perm> = vec![id.clone()];
    let mut queue: VecDeque<Perm> = VecDeque::from([id]);
    while let Some(g) = queue.pop_front() {
        for gen in generators {
            let h = gen.compose(&g);
            if seen.insert(h.clone()) {
                if order.len() >= cap {
                    return Err(Error::CompositionTable(format!(
                        "group closure exceeded the cap of {cap} elements"
                    )));
                }
                order.push(h.clone());
                queue.push_back(h);
            }
        }
    }
    Ok(order)
}
