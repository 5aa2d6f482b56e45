//! Exhaustive oracles over the full allocation space: optima, the Glauber
//! transition matrix, the Gibbs distribution and exact mixing curves.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glauber::softmax_neg_into;
use crate::instance::{CacheContents, Instance};
use crate::objective::{capacitated_cost, cost_profile_into, potential, Allocation};

/// Largest state space the oracles will enumerate.
pub const DEFAULT_STATE_CAP: usize = 2_000_000;

/// Two values are treated as tied optima within this tolerance.
pub const TIE_TOL: f64 = 1e-9;

/// `[k]^n` with allocations encoded as base-`k` integers, agent 0 being
/// the most significant digit. Integer order is lexicographic order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateSpace {
    n: usize,
    k: usize,
    size: usize,
}

impl StateSpace {
    pub fn new(n: usize, k: usize, cap: usize) -> Result<Self> {
        let states = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if states > cap as u128 {
            return Err(Error::StateSpaceTooLarge { states, cap });
        }
        Ok(StateSpace {
            n,
            k,
            size: states as usize,
        })
    }

    pub fn of(inst: &Instance) -> Result<Self> {
        StateSpace::new(inst.n, inst.k, DEFAULT_STATE_CAP)
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn encode(&self, x: &Allocation) -> usize {
        x.as_slice().iter().fold(0, |acc, &l| acc * self.k + l)
    }

    pub fn decode(&self, mut idx: usize) -> Allocation {
        let mut x = vec![0; self.n];
        for slot in x.iter_mut().rev() {
            *slot = idx % self.k;
            idx /= self.k;
        }
        Allocation::new(x, self.k).expect("digits are below k")
    }

    /// Place value of agent `i`'s digit.
    pub fn weight(&self, i: usize) -> usize {
        self.k.pow((self.n - 1 - i) as u32)
    }
}

/// Potential of every state, indexed by encoding.
pub fn all_potentials(inst: &Instance, space: &StateSpace) -> Vec<f64> {
    (0..space.len())
        .into_par_iter()
        .map(|s| potential(inst, &space.decode(s)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Optimum {
    /// The optimum with the smallest encoding.
    pub allocation: Allocation,
    pub value: f64,
    /// Every allocation within [`TIE_TOL`] of the optimum, in encoding order.
    pub optima: Vec<Allocation>,
}

pub fn brute_force_optimum(inst: &Instance) -> Result<Optimum> {
    let space = StateSpace::of(inst)?;
    let phis = all_potentials(inst, &space);
    Ok(optimum_from(&space, &phis))
}

pub(crate) fn optimum_from(space: &StateSpace, phis: &[f64]) -> Optimum {
    let value = phis.iter().copied().fold(f64::INFINITY, f64::min);
    let optima: Vec<Allocation> = phis
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p <= value + TIE_TOL)
        .map(|(s, _)| space.decode(s))
        .collect();
    Optimum {
        allocation: optima[0].clone(),
        value,
        optima,
    }
}

/// Optimum of a capacitated instance by enumerating, per agent, every
/// multiset of `u_i` resources.
pub fn brute_force_capacitated(inst: &Instance) -> Result<(CacheContents, f64)> {
    inst.check()?;
    let per_agent: Vec<Vec<Vec<usize>>> = inst
        .cache_sizes
        .iter()
        .map(|&u| multisets(inst.k, u as usize))
        .collect();
    let total = per_agent
        .iter()
        .try_fold(1usize, |acc, m| acc.checked_mul(m.len()))
        .filter(|&t| t <= DEFAULT_STATE_CAP)
        .ok_or_else(|| Error::StateSpaceTooLarge {
            states: per_agent.iter().map(|m| m.len() as u128).product(),
            cap: DEFAULT_STATE_CAP,
        })?;
    let mut best: Option<(CacheContents, f64)> = None;
    let mut idx = vec![0usize; inst.n];
    for _ in 0..total {
        let contents = CacheContents(
            idx.iter()
                .zip(&per_agent)
                .map(|(&r, m)| m[r].clone())
                .collect(),
        );
        let cost = capacitated_cost(inst, &contents)?;
        if best.as_ref().is_none_or(|b| cost < b.1 - TIE_TOL) {
            best = Some((contents, cost));
        }
        for (slot, m) in idx.iter_mut().zip(&per_agent).rev() {
            *slot += 1;
            if *slot < m.len() {
                break;
            }
            *slot = 0;
        }
    }
    Ok(best.expect("at least one state"))
}

/// Nondecreasing sequences of length `size` over `0..k`.
fn multisets(k: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(size);
    fn rec(k: usize, size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for l in start..k {
            cur.push(l);
            rec(k, size, l, cur, out);
            cur.pop();
        }
    }
    rec(k, size, 0, &mut cur, &mut out);
    out
}

/// Row-stochastic Glauber kernel in compressed sparse row form. Every row
/// has `n(k-1)+1` entries with strictly increasing columns.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    size: usize,
    width: usize,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl TransitionMatrix {
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn row(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = x * self.width..(x + 1) * self.width;
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        let r = x * self.width..(x + 1) * self.width;
        match self.cols[r.clone()].binary_search(&(y as u32)) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => 0.0,
        }
    }

    /// `out = mu P`.
    pub fn apply_left(&self, mu: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (x, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let r = x * self.width..(x + 1) * self.width;
            for (&c, &v) in self.cols[r.clone()].iter().zip(&self.vals[r]) {
                out[c as usize] += m * v;
            }
        }
    }
}

/// Kernel of the dynamics: a uniform agent resamples its resource from the
/// softmax of its negated, `beta`-scaled costs.
pub fn transition_matrix(inst: &Instance, beta: f64) -> Result<TransitionMatrix> {
    check_beta(beta)?;
    let space = StateSpace::of(inst)?;
    let (n, k) = (inst.n, inst.k);
    let width = n * (k - 1) + 1;
    let mut cols = vec![0u32; space.len() * width];
    let mut vals = vec![0.0; space.len() * width];
    cols.par_chunks_mut(width)
        .zip(vals.par_chunks_mut(width))
        .enumerate()
        .for_each(|(s, (cr, vr))| {
            let x = space.decode(s);
            let mut profile = vec![0.0; k];
            let mut probs = vec![0.0; k];
            let mut entries: Vec<(u32, f64)> = Vec::with_capacity(width);
            let mut stay = 0.0;
            for i in 0..n {
                cost_profile_into(inst, &x, i, &mut profile);
                softmax_neg_into(beta, &profile, &mut probs);
                let xi = x.get(i);
                let base = s - xi * space.weight(i);
                for (o, &p) in probs.iter().enumerate() {
                    if o == xi {
                        stay += p / n as f64;
                    } else {
                        entries.push(((base + o * space.weight(i)) as u32, p / n as f64));
                    }
                }
            }
            entries.push((s as u32, stay));
            entries.sort_unstable_by_key(|e| e.0);
            for ((c, v), (ec, ev)) in cr.iter_mut().zip(vr.iter_mut()).zip(entries) {
                *c = ec;
                *v = ev;
            }
        });
    Ok(TransitionMatrix {
        size: space.len(),
        width,
        cols,
        vals,
    })
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::arg(format!(
            "beta must be finite and nonnegative, got {beta}"
        )));
    }
    Ok(())
}

/// `π(x) ∝ exp(-β Φ(x))` over the full state space.
#[derive(Clone, Debug)]
pub struct GibbsDistribution {
    pub beta: f64,
    pub space: StateSpace,
    pub probs: Vec<f64>,
}

impl GibbsDistribution {
    /// Total probability of a set of allocations.
    pub fn mass_on<'a>(&self, states: impl IntoIterator<Item = &'a Allocation>) -> f64 {
        states
            .into_iter()
            .map(|x| self.probs[self.space.encode(x)])
            .sum()
    }
}

pub fn gibbs_distribution(inst: &Instance, beta: f64) -> Result<GibbsDistribution> {
    check_beta(beta)?;
    let space = StateSpace::of(inst)?;
    let phis = all_potentials(inst, &space);
    Ok(gibbs_from(beta, space, &phis))
}

pub(crate) fn gibbs_from(beta: f64, space: StateSpace, phis: &[f64]) -> GibbsDistribution {
    let min = phis.iter().copied().fold(f64::INFINITY, f64::min);
    let mut probs: Vec<f64> = phis.iter().map(|p| (-beta * (p - min)).exp()).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    GibbsDistribution { beta, space, probs }
}

/// `||πP - π||_1`.
pub fn stationarity_residual(p: &TransitionMatrix, pi: &[f64]) -> f64 {
    let mut out = vec![0.0; pi.len()];
    p.apply_left(pi, &mut out);
    out.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
}

/// Largest `|π(x)P(x,y) - π(y)P(y,x)|` over neighbouring states.
pub fn detailed_balance_violation(p: &TransitionMatrix, pi: &[f64]) -> f64 {
    (0..p.len())
        .into_par_iter()
        .map(|x| {
            p.row(x)
                .filter(|&(y, _)| y != x)
                .map(|(y, v)| (pi[x] * v - pi[y] * p.get(y, x)).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

pub fn check_detailed_balance(inst: &Instance, beta: f64) -> Result<f64> {
    let p = transition_matrix(inst, beta)?;
    let pi = gibbs_distribution(inst, beta)?;
    Ok(detailed_balance_violation(&p, &pi.probs))
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// `d(t) = max_x ||δ_x P^t - π||_TV` for `t = 0..=t_max`. The supremum over
/// initial laws is attained at point masses because TV is convex in the
/// initial law.
pub fn exact_tv_curve(inst: &Instance, beta: f64, t_max: usize) -> Result<Vec<f64>> {
    let p = transition_matrix(inst, beta)?;
    let pi = gibbs_distribution(inst, beta)?;
    Ok(tv_curve(&p, &pi.probs, t_max))
}

/// Evolves every point mass separately; the elementwise max is exact so the
/// result does not depend on scheduling.
pub fn tv_curve(p: &TransitionMatrix, pi: &[f64], t_max: usize) -> Vec<f64> {
    let size = p.len();
    (0..size)
        .into_par_iter()
        .map(|x| {
            let mut cur = vec![0.0; size];
            let mut next = vec![0.0; size];
            cur[x] = 1.0;
            let mut curve = Vec::with_capacity(t_max + 1);
            curve.push(total_variation(&cur, pi));
            for _ in 0..t_max {
                p.apply_left(&cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
                curve.push(total_variation(&cur, pi));
            }
            curve
        })
        .reduce(
            || vec![0.0; t_max + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x = x.max(y));
                a
            },
        )
}

/// Certified bound on every player cost: each `(d - c)^+` term is at most
/// the empty-set penalty.
pub fn cost_bound_u(inst: &Instance) -> f64 {
    inst.demands.sum() * inst.empty_set_distance + inst.placement_fees.max()
}

/// `max_{i,x} c_i(x)` by enumeration.
pub fn exact_max_cost(inst: &Instance) -> Result<f64> {
    let space = StateSpace::of(inst)?;
    Ok((0..space.len())
        .into_par_iter()
        .map(|s| {
            let x = space.decode(s);
            let mut profile = vec![0.0; inst.k];
            (0..inst.n)
                .map(|i| {
                    cost_profile_into(inst, &x, i, &mut profile);
                    profile[x.get(i)]
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

/// Noise level `k / (6 n ū)` under which the coupling argument guarantees
/// fast mixing.
pub fn fast_mixing_beta(inst: &Instance) -> f64 {
    inst.k as f64 / (6.0 * inst.n as f64 * cost_bound_u(inst))
}

/// `n e^{-t/(7n)}`.
pub fn mixing_bound(n: usize, t: f64) -> f64 {
    n as f64 * (-t / (7.0 * n as f64)).exp()
}

/// `⌈7n ln(n/ε)⌉`, the time at which [`mixing_bound`] reaches `ε`.
pub fn mixing_time_bound(n: usize, eps: f64) -> usize {
    let t = 7.0 * n as f64 * (n as f64 / eps).ln();
    t.ceil().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{embed_uflp, gen_random, GenParams};
    use crate::matrix::Matrix;
    use crate::objective::player_cost;

    fn hand() -> Instance {
        let c = Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        Instance::new(
            vec![1, 1],
            c,
            Matrix::filled(2, 2, 1.0),
            Matrix::zeros(2, 2),
            None,
        )
        .unwrap()
    }

    #[test]
    fn encoding_round_trips_in_lexicographic_order() {
        let space = StateSpace::new(3, 3, 100).unwrap();
        assert_eq!(space.len(), 27);
        for s in 0..27 {
            assert_eq!(space.encode(&space.decode(s)), s);
        }
        assert_eq!(space.decode(1).as_slice(), &[0, 0, 1]);
        assert!(matches!(
            StateSpace::new(30, 4, DEFAULT_STATE_CAP),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn hand_optimum() {
        let opt = brute_force_optimum(&hand()).unwrap();
        assert_eq!(opt.value, 2.0);
        let optima: Vec<String> = opt.optima.iter().map(|x| x.to_string()).collect();
        assert_eq!(optima, ["1,2", "2,1"]);
        assert_eq!(opt.allocation.to_string(), "1,2");
    }

    #[test]
    fn uflp_optimum() {
        let c = Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let inst = embed_uflp(&[0.0, 100.0], &c).unwrap();
        let opt = brute_force_optimum(&inst).unwrap();
        assert_eq!(opt.value, 1.0);
        assert_eq!(opt.allocation.to_string(), "1,2");
    }

    #[test]
    fn zero_data_optimum_is_zero() {
        let inst = gen_random(
            3,
            &GenParams {
                n: 3,
                k: 2,
                demand_range: (0.0, 0.0),
                fee_range: (0.0, 0.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(brute_force_optimum(&inst).unwrap().value, 0.0);
    }

    #[test]
    fn uniform_kernel_at_zero_beta() {
        let inst = gen_random(1, &GenParams::unit(3, 2)).unwrap();
        let p = transition_matrix(&inst, 0.0).unwrap();
        for x in 0..p.len() {
            for (y, v) in p.row(x) {
                let expect = if y == x { 0.5 } else { 1.0 / 6.0 };
                assert!((v - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_player_kernel_is_softmax() {
        let inst = Instance::new(
            vec![3],
            Matrix::zeros(1, 1),
            Matrix::zeros(1, 3),
            Matrix::from_rows(vec![vec![0.0, 1.0, 2.0]]).unwrap(),
            None,
        )
        .unwrap();
        let p = transition_matrix(&inst, 1.0).unwrap();
        let z: f64 = (0..3).map(|o| (-(o as f64)).exp()).sum();
        for x in 0..3 {
            for y in 0..3 {
                assert!((p.get(x, y) - (-(y as f64)).exp() / z).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rows_are_stochastic_and_sorted() {
        let inst = gen_random(4, &GenParams::unit(4, 3)).unwrap();
        let p = transition_matrix(&inst, 0.7).unwrap();
        for x in 0..p.len() {
            let row: Vec<_> = p.row(x).collect();
            assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            assert!((row.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gibbs_ratio_and_uniformity() {
        let inst = hand();
        let g = gibbs_distribution(&inst, 1.0).unwrap();
        let a = g.probs[g.space.encode(&Allocation::parse("1,2", 2).unwrap())];
        let b = g.probs[g.space.encode(&Allocation::parse("1,1", 2).unwrap())];
        let c_empty = inst.empty_set_distance;
        assert!((a / b - (-(2.0 - 2.0 * c_empty)).exp()).abs() < 1e-9);
        let u = gibbs_distribution(&inst, 0.0).unwrap();
        assert!(u.probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn gibbs_concentrates_at_high_beta() {
        let inst = gen_random(6, &GenParams::unit(4, 2)).unwrap();
        let opt = brute_force_optimum(&inst).unwrap();
        let g = gibbs_distribution(&inst, 1e3).unwrap();
        assert!(g.mass_on(&opt.optima) >= 1.0 - 1e-6);
    }

    #[test]
    fn balance_and_stationarity() {
        let inst = gen_random(9, &GenParams::unit(4, 2)).unwrap();
        for beta in [0.0, 0.3, 1.0] {
            let p = transition_matrix(&inst, beta).unwrap();
            let pi = gibbs_distribution(&inst, beta).unwrap();
            assert!(detailed_balance_violation(&p, &pi.probs) <= 1e-12);
            assert!(stationarity_residual(&p, &pi.probs) <= 1e-10);
        }
        assert!(check_detailed_balance(&hand(), 1.0).unwrap() <= 1e-12);
    }

    #[test]
    fn tv_curve_starts_at_point_mass_distance_and_decays() {
        let inst = gen_random(2, &GenParams::unit(3, 2)).unwrap();
        let pi = gibbs_distribution(&inst, 0.5).unwrap();
        let curve = exact_tv_curve(&inst, 0.5, 60).unwrap();
        let min_pi = pi.probs.iter().copied().fold(1.0, f64::min);
        assert!((curve[0] - (1.0 - min_pi)).abs() < 1e-12);
        assert!(curve.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(curve[60] < 1e-3);
    }

    #[test]
    fn cost_bound_dominates_exact_max() {
        let inst = hand();
        assert_eq!(cost_bound_u(&inst), 12.0);
        let exact = exact_max_cost(&inst).unwrap();
        // Brute force over the 4 states and 2 players.
        let space = StateSpace::of(&inst).unwrap();
        let direct = (0..4)
            .flat_map(|s| (0..2).map(move |i| (s, i)))
            .map(|(s, i)| player_cost(&inst, &space.decode(s), i))
            .fold(0.0, f64::max);
        assert_eq!(exact, direct);
        assert!(exact <= 12.0);
        for seed in 0..50 {
            let inst = gen_random(seed, &GenParams::unit(3, 2)).unwrap();
            assert!(exact_max_cost(&inst).unwrap() <= cost_bound_u(&inst) + 1e-9);
        }
    }

    #[test]
    fn capacitated_brute_force_matches_reduction() {
        for seed in 0..5 {
            let inst = gen_random(
                seed,
                &GenParams {
                    n: 3,
                    k: 3,
                    cache_range: (1, 2),
                    ..Default::default()
                },
            )
            .unwrap();
            let (_, direct) = brute_force_capacitated(&inst).unwrap();
            let unit = crate::instance::reduce_to_unit_cache(&inst).unwrap();
            let reduced = brute_force_optimum(&unit).unwrap().value;
            assert!((direct - reduced).abs() < 1e-9);
        }
    }

    #[test]
    fn mixing_helpers() {
        assert_eq!(mixing_time_bound(1, 1.0), 0);
        assert!((mixing_bound(4, mixing_time_bound(4, 0.05) as f64) - 0.05).abs() < 0.01);
    }
}
