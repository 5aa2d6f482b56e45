//! Potential, player costs and single-move deltas on unit-cache instances.
//!
//! Functions here treat every agent as holding exactly the one resource
//! given by the allocation. Capacitated instances go through
//! [`crate::instance::reduce_to_unit_cache`] first, or through
//! [`capacitated_cost`].

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{CacheContents, Instance};

#[inline]
pub(crate) fn pos(a: f64) -> f64 {
    if a > 0.0 {
        a
    } else {
        0.0
    }
}

/// One resource per agent, 0-indexed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation(Vec<usize>);

impl Allocation {
    pub fn new(x: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(i) = x.iter().position(|&l| l >= k) {
            return Err(Error::arg(format!(
                "agent {} holds resource {} but k = {k}",
                i + 1,
                x[i] + 1
            )));
        }
        Ok(Allocation(x))
    }

    /// Checks the allocation length against an instance.
    pub fn for_instance(x: Vec<usize>, inst: &Instance) -> Result<Self> {
        if x.len() != inst.n {
            return Err(Error::arg(format!(
                "allocation has {} entries, instance has {} agents",
                x.len(),
                inst.n
            )));
        }
        Allocation::new(x, inst.k)
    }

    /// Parses a comma separated, 1-indexed resource list such as `"1,2,1"`.
    pub fn parse(s: &str, k: usize) -> Result<Self> {
        let x = s
            .split(',')
            .map(|t| {
                let t = t.trim();
                match t.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(Error::arg(format!(
                        "bad resource index {t:?} in allocation"
                    ))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Allocation::new(x, k)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.0[i]
    }

    /// Caller guarantees `l < k`.
    #[inline]
    pub fn set(&mut self, i: usize, l: usize) {
        self.0[i] = l;
    }

    /// Holder sets `X^l` in increasing agent order.
    pub fn holders(&self, k: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); k];
        for (i, &l) in self.0.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Number of coordinates where the two allocations differ.
    pub fn hamming(&self, other: &Allocation) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn uniform_random(n: usize, k: usize, rng: &mut impl Rng) -> Self {
        Allocation((0..n).map(|_| rng.random_range(0..k)).collect())
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (idx, l) in self.0.iter().enumerate() {
            if idx > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", l + 1)?;
        }
        Ok(())
    }
}

impl FromStr for Allocation {
    type Err = Error;

    /// Parses without a resource bound; prefer [`Allocation::parse`].
    fn from_str(s: &str) -> Result<Self> {
        Allocation::parse(s, usize::MAX)
    }
}

/// `d(j, S)`: cheapest access cost from `j` to a member of `set`, or the
/// empty-set penalty when `set` is empty.
pub fn distance(inst: &Instance, j: usize, set: &[usize]) -> f64 {
    set.iter()
        .map(|&i| inst.cost(i, j))
        .fold(inst.empty_set_distance, f64::min)
}

/// Fills `mins[l]` with `d(j, X^l)`, ignoring agent `skip` if given.
fn holder_distances(
    inst: &Instance,
    alloc: &Allocation,
    j: usize,
    skip: Option<usize>,
    mins: &mut [f64],
) {
    mins.fill(inst.empty_set_distance);
    for (a, &l) in alloc.as_slice().iter().enumerate() {
        if Some(a) != skip {
            let c = inst.cost(a, j);
            if c < mins[l] {
                mins[l] = c;
            }
        }
    }
}

/// Sum of demand-weighted distances plus fees.
pub fn potential(inst: &Instance, alloc: &Allocation) -> f64 {
    let mut mins = vec![0.0; inst.k];
    let mut total = 0.0;
    for j in 0..inst.n {
        holder_distances(inst, alloc, j, None, &mut mins);
        total += inst
            .demands
            .row(j)
            .iter()
            .zip(&mins)
            .map(|(w, d)| w * d)
            .sum::<f64>();
    }
    total
        + alloc
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &l)| inst.fee(i, l))
            .sum::<f64>()
}

/// Cost of agent `i`: the access savings it provides to everyone, plus its fee.
pub fn player_cost(inst: &Instance, alloc: &Allocation, i: usize) -> f64 {
    let mut mins = vec![0.0; inst.k];
    let mut total = 0.0;
    for j in 0..inst.n {
        holder_distances(inst, alloc, j, None, &mut mins);
        let c = inst.cost(i, j);
        total += inst
            .demands
            .row(j)
            .iter()
            .zip(&mins)
            .map(|(w, d)| w * pos(d - c))
            .sum::<f64>();
    }
    total + inst.fee(i, alloc.get(i))
}

/// Writes `c_i(o, x_{-i})` for every resource `o` into `out`.
///
/// With `S_l = Σ_j w_j^l (d(j, X^l - i) - c_ij)^+`, switching to `o` zeroes
/// the `o` term, so `c_i(o) = Σ_l S_l - S_o + f_i^o`.
pub fn cost_profile_into(inst: &Instance, alloc: &Allocation, i: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), inst.k);
    let mut mins = vec![0.0; inst.k];
    out.fill(0.0);
    for j in 0..inst.n {
        holder_distances(inst, alloc, j, Some(i), &mut mins);
        let c = inst.cost(i, j);
        for ((s, w), d) in out.iter_mut().zip(inst.demands.row(j)).zip(&mins) {
            *s += w * pos(d - c);
        }
    }
    let total: f64 = out.iter().sum();
    for (o, s) in out.iter_mut().enumerate() {
        *s = total - *s + inst.fee(i, o);
    }
}

pub fn cost_profile(inst: &Instance, alloc: &Allocation, i: usize) -> Vec<f64> {
    let mut out = vec![0.0; inst.k];
    cost_profile_into(inst, alloc, i, &mut out);
    out
}

/// Effect of agent `player` switching from `from` to `to`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MoveDelta {
    pub player: usize,
    pub from: usize,
    pub to: usize,
    pub delta_cost: f64,
    pub delta_potential: f64,
}

/// Computes both deltas of a unilateral move.
///
/// The potential change uses the closed form: the savings `i` stops providing
/// on its old resource, minus the savings it starts providing on the new one,
/// plus the fee difference. The cost change is taken from two direct
/// evaluations of [`player_cost`], so the two numbers come from independent
/// code paths.
pub fn move_delta(inst: &Instance, alloc: &Allocation, i: usize, to: usize) -> MoveDelta {
    let from = alloc.get(i);
    if from == to {
        return MoveDelta {
            player: i,
            from,
            to,
            delta_cost: 0.0,
            delta_potential: 0.0,
        };
    }
    let mut mins = vec![0.0; inst.k];
    let mut lost = 0.0;
    let mut gained = 0.0;
    for j in 0..inst.n {
        let c = inst.cost(i, j);
        holder_distances(inst, alloc, j, Some(i), &mut mins);
        lost += inst.demand(j, from) * pos(mins[from] - c);
        // `i` is not in X^to, so skipping it changes nothing there.
        gained += inst.demand(j, to) * pos(mins[to] - c);
    }
    let delta_potential = lost - gained + inst.fee(i, to) - inst.fee(i, from);

    let mut moved = alloc.clone();
    moved.set(i, to);
    let delta_cost = player_cost(inst, &moved, i) - player_cost(inst, alloc, i);
    MoveDelta {
        player: i,
        from,
        to,
        delta_cost,
        delta_potential,
    }
}

/// Largest `|delta_cost - delta_potential|` over random moves from random
/// allocations. Zero for an exact potential game, up to rounding.
pub fn check_exact_potential(inst: &Instance, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            let x = Allocation::uniform_random(inst.n, inst.k, &mut rng);
            let i = rng.random_range(0..inst.n);
            let to = rng.random_range(0..inst.k);
            let m = move_delta(inst, &x, i, to);
            (m.delta_cost - m.delta_potential).abs()
        })
        .fold(0.0, f64::max)
}

/// First agent (in index order) with a move improving its cost by more than
/// `tol`, together with its best resource and the improvement.
pub fn improving_move(
    inst: &Instance,
    alloc: &Allocation,
    tol: f64,
) -> Option<(usize, usize, f64)> {
    let mut profile = vec![0.0; inst.k];
    for i in 0..inst.n {
        cost_profile_into(inst, alloc, i, &mut profile);
        let current = profile[alloc.get(i)];
        let (best, &cost) = profile
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("k >= 1");
        if current - cost > tol {
            return Some((i, best, current - cost));
        }
    }
    None
}

/// Potential with agent `j` removed from its holder set. The agent's own fee
/// is dropped when `drop_fee` is set and kept otherwise.
pub fn evacuated_potential(inst: &Instance, alloc: &Allocation, j: usize, drop_fee: bool) -> f64 {
    let mut mins = vec![0.0; inst.k];
    let mut total = 0.0;
    for a in 0..inst.n {
        holder_distances(inst, alloc, a, Some(j), &mut mins);
        total += inst
            .demands
            .row(a)
            .iter()
            .zip(&mins)
            .map(|(w, d)| w * d)
            .sum::<f64>();
    }
    let fees: f64 = alloc
        .as_slice()
        .iter()
        .enumerate()
        .filter(|&(i, _)| !drop_fee || i != j)
        .map(|(i, &l)| inst.fee(i, l))
        .sum();
    total + fees
}

/// Objective of a capacitated instance: every slot pays its fee, every
/// agent reaches the nearest agent holding each resource.
pub fn capacitated_cost(inst: &Instance, contents: &CacheContents) -> Result<f64> {
    if contents.0.len() != inst.n {
        return Err(Error::arg(format!(
            "cache contents list {} agents, instance has {}",
            contents.0.len(),
            inst.n
        )));
    }
    let mut holders = vec![Vec::new(); inst.k];
    let mut fees = 0.0;
    for (i, slots) in contents.0.iter().enumerate() {
        if slots.len() != inst.cache_sizes[i] as usize {
            return Err(Error::arg(format!(
                "agent {} fills {} of {} slots",
                i + 1,
                slots.len(),
                inst.cache_sizes[i]
            )));
        }
        for &l in slots {
            if l >= inst.k {
                return Err(Error::arg(format!("resource {} out of range", l + 1)));
            }
            fees += inst.fee(i, l);
            if holders[l].last() != Some(&i) {
                holders[l].push(i);
            }
        }
    }
    let access: f64 = (0..inst.n)
        .flat_map(|j| (0..inst.k).map(move |l| (j, l)))
        .map(|(j, l)| inst.demand(j, l) * distance(inst, j, &holders[l]))
        .sum();
    Ok(access + fees)
}
