//! Glauber dynamics, best-response dynamics and coupled chains.
//!
//! Every Monte Carlo routine draws from ChaCha8. Replica `r` of a run with
//! seed `s` uses the generator seeded with `s` on stream `r`, so results are
//! reproducible bit for bit and independent of thread scheduling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{brute_force_optimum, StateSpace, DEFAULT_STATE_CAP};
use crate::instance::Instance;
use crate::objective::{cost_profile_into, potential, Allocation};

/// Generator for replica `stream` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `out = softmax(-beta * costs)`, shifted by the minimum cost.
pub fn softmax_neg_into(beta: f64, costs: &[f64], out: &mut [f64]) {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    for (o, &c) in out.iter_mut().zip(costs) {
        *o = (-beta * (c - min)).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}

/// Law of agent `i`'s next resource when it is selected.
pub fn update_distribution(inst: &Instance, alloc: &Allocation, i: usize, beta: f64) -> Vec<f64> {
    let mut costs = vec![0.0; inst.k];
    cost_profile_into(inst, alloc, i, &mut costs);
    let mut probs = vec![0.0; inst.k];
    softmax_neg_into(beta, &costs, &mut probs);
    probs
}

fn sample(probs: &[f64], rng: &mut impl Rng) -> usize {
    WeightedIndex::new(probs)
        .expect("probabilities are finite with positive total")
        .sample(rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub player: usize,
    pub old: usize,
    pub new: usize,
    /// Change of the selected player's cost, which equals the potential change.
    pub delta: f64,
}

/// One update: a uniform agent resamples its resource.
pub fn step(inst: &Instance, alloc: &mut Allocation, beta: f64, rng: &mut impl Rng) -> StepRecord {
    let mut costs = vec![0.0; inst.k];
    let mut probs = vec![0.0; inst.k];
    step_with(inst, alloc, beta, rng, &mut costs, &mut probs)
}

fn step_with(
    inst: &Instance,
    alloc: &mut Allocation,
    beta: f64,
    rng: &mut impl Rng,
    costs: &mut [f64],
    probs: &mut [f64],
) -> StepRecord {
    let player = rng.random_range(0..inst.n);
    let old = alloc.get(player);
    if inst.k == 1 {
        return StepRecord {
            player,
            old,
            new: old,
            delta: 0.0,
        };
    }
    cost_profile_into(inst, alloc, player, costs);
    softmax_neg_into(beta, costs, probs);
    let new = sample(probs, rng);
    alloc.set(player, new);
    StepRecord {
        player,
        old,
        new,
        delta: costs[new] - costs[old],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Explicit(Allocation),
    UniformRandom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlauberConfig {
    pub beta: f64,
    pub steps: u64,
    pub seed: u64,
    pub init: InitialState,
    /// Record every `stride`-th step; 0 records only the initial state.
    pub stride: u64,
    /// Potential whose first visit (within `1e-9`) is reported as the hit time.
    pub target: Option<f64>,
}

impl GlauberConfig {
    pub fn new(beta: f64, steps: u64, seed: u64) -> Self {
        GlauberConfig {
            beta,
            steps,
            seed,
            init: InitialState::UniformRandom,
            stride: 0,
            target: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: u64,
    /// Absent for the initial state.
    pub step: Option<StepRecord>,
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainTrace {
    pub initial: Allocation,
    pub records: Vec<TraceRecord>,
    pub final_state: Allocation,
    pub final_phi: f64,
    pub best_phi: f64,
    pub best_state: Allocation,
    pub hit_time: Option<u64>,
}

/// Re-evaluate the potential from scratch this often to stop drift.
const RESYNC: u64 = 4096;

pub fn run(inst: &Instance, config: &GlauberConfig) -> Result<ChainTrace> {
    if !(config.beta.is_finite() && config.beta >= 0.0) {
        return Err(Error::arg(format!(
            "beta must be finite and nonnegative, got {}",
            config.beta
        )));
    }
    let mut rng = replica_rng(config.seed, 0);
    let mut x = match &config.init {
        InitialState::Explicit(x) => Allocation::for_instance(x.as_slice().to_vec(), inst)?,
        InitialState::UniformRandom => Allocation::uniform_random(inst.n, inst.k, &mut rng),
    };
    let initial = x.clone();
    let mut phi = potential(inst, &x);
    let hits = |phi: f64| config.target.is_some_and(|t| phi <= t + 1e-9);
    let mut trace = ChainTrace {
        initial: initial.clone(),
        records: vec![TraceRecord {
            t: 0,
            step: None,
            phi,
        }],
        final_state: initial.clone(),
        final_phi: phi,
        best_phi: phi,
        best_state: initial,
        hit_time: hits(phi).then_some(0),
    };
    let mut costs = vec![0.0; inst.k];
    let mut probs = vec![0.0; inst.k];
    for t in 1..=config.steps {
        let rec = step_with(inst, &mut x, config.beta, &mut rng, &mut costs, &mut probs);
        phi = if t % RESYNC == 0 {
            potential(inst, &x)
        } else {
            phi + rec.delta
        };
        if phi < trace.best_phi {
            trace.best_phi = phi;
            trace.best_state = x.clone();
        }
        if trace.hit_time.is_none() && hits(phi) {
            trace.hit_time = Some(t);
        }
        if config.stride > 0 && t % config.stride == 0 {
            trace.records.push(TraceRecord {
                t,
                step: Some(rec),
                phi,
            });
        }
    }
    trace.final_phi = potential(inst, &x);
    trace.final_state = x;
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestResponseOutcome {
    pub allocation: Allocation,
    pub moves: usize,
    pub sweeps: usize,
}

/// Strict improvement needed before an agent moves.
pub const IMPROVE_TOL: f64 = 1e-9;

/// Round-robin best response. Agent `i` moves to its cheapest resource
/// (lowest index among ties) when that beats its current cost by more than
/// [`IMPROVE_TOL`]. Stops after a sweep without moves.
pub fn best_response_dynamics(
    inst: &Instance,
    initial: &Allocation,
    max_sweeps: usize,
) -> Result<BestResponseOutcome> {
    let mut x = Allocation::for_instance(initial.as_slice().to_vec(), inst)?;
    let mut costs = vec![0.0; inst.k];
    let mut moves = 0;
    for sweep in 1..=max_sweeps {
        let mut moved = false;
        for i in 0..inst.n {
            cost_profile_into(inst, &x, i, &mut costs);
            let mut best = 0;
            for o in 1..inst.k {
                if costs[o] < costs[best] {
                    best = o;
                }
            }
            if costs[best] < costs[x.get(i)] - IMPROVE_TOL {
                x.set(i, best);
                moves += 1;
                moved = true;
            }
        }
        if !moved {
            return Ok(BestResponseOutcome {
                allocation: x,
                moves,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NoConvergence { sweeps: max_sweeps })
}

pub fn total_variation(mu: &[f64], nu: &[f64]) -> f64 {
    0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&v| !(v.is_finite() && v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::arg(format!(
            "{name} is not a probability vector (sum {sum})"
        )));
    }
    Ok(())
}

/// Draws `(a, b)` with `a ~ mu`, `b ~ nu` and `P(a != b) = TV(mu, nu)`.
///
/// With probability `Σ min(mu, nu)` both come from the normalized overlap;
/// otherwise they are drawn independently from the normalized residuals.
pub fn maximal_coupling_sample(
    mu: &[f64],
    nu: &[f64],
    rng: &mut impl Rng,
) -> Result<(usize, usize)> {
    if mu.len() != nu.len() || mu.is_empty() {
        return Err(Error::arg(
            "distributions must have the same nonzero length",
        ));
    }
    check_distribution("mu", mu)?;
    check_distribution("nu", nu)?;
    Ok(coupled_draw(mu, nu, rng))
}

fn coupled_draw(mu: &[f64], nu: &[f64], rng: &mut impl Rng) -> (usize, usize) {
    let overlap: Vec<f64> = mu.iter().zip(nu).map(|(a, b)| a.min(*b)).collect();
    let shared: f64 = overlap.iter().sum();
    let u: f64 = rng.random();
    let rest_mu: Vec<f64> = mu.iter().zip(&overlap).map(|(a, m)| a - m).collect();
    let rest_nu: Vec<f64> = nu.iter().zip(&overlap).map(|(b, m)| b - m).collect();
    let has_rest = rest_mu.iter().any(|&v| v > 0.0) && rest_nu.iter().any(|&v| v > 0.0);
    if u < shared || !has_rest {
        let o = sample(&overlap, rng);
        (o, o)
    } else {
        (sample(&rest_mu, rng), sample(&rest_nu, rng))
    }
}

/// Two copies of the dynamics driven by a shared agent choice and a maximal
/// coupling of their resource updates.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledChain {
    pub x: Allocation,
    pub y: Allocation,
}

impl CoupledChain {
    pub fn new(x: Allocation, y: Allocation) -> Self {
        CoupledChain { x, y }
    }

    /// Hamming distance between the two states.
    pub fn rho(&self) -> usize {
        self.x.hamming(&self.y)
    }

    pub fn coalesced(&self) -> bool {
        self.x == self.y
    }

    /// Advances both chains one step and returns the new distance.
    pub fn step(&mut self, inst: &Instance, beta: f64, rng: &mut impl Rng) -> usize {
        let i = rng.random_range(0..inst.n);
        let mu = update_distribution(inst, &self.x, i, beta);
        if self.coalesced() {
            let o = sample(&mu, rng);
            self.x.set(i, o);
            self.y.set(i, o);
            return 0;
        }
        let nu = update_distribution(inst, &self.y, i, beta);
        let (a, b) = coupled_draw(&mu, &nu, rng);
        self.x.set(i, a);
        self.y.set(i, b);
        self.rho()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledRun {
    /// First time the chains agree, if within the horizon.
    pub coalescence_time: Option<u64>,
    /// Distance at times `0, 1, ...` up to coalescence or the horizon.
    pub rho: Vec<usize>,
}

pub fn coupled_run(
    inst: &Instance,
    x: &Allocation,
    y: &Allocation,
    beta: f64,
    t_max: u64,
    rng: &mut impl Rng,
) -> CoupledRun {
    let mut chain = CoupledChain::new(x.clone(), y.clone());
    let mut rho = vec![chain.rho()];
    if chain.coalesced() {
        return CoupledRun {
            coalescence_time: Some(0),
            rho,
        };
    }
    for t in 1..=t_max {
        rho.push(chain.step(inst, beta, rng));
        if chain.coalesced() {
            return CoupledRun {
                coalescence_time: Some(t),
                rho,
            };
        }
    }
    CoupledRun {
        coalescence_time: None,
        rho,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingConfig {
    pub beta: f64,
    pub eps: f64,
    /// Coupled runs per starting pair.
    pub replicas: usize,
    /// Random starting pairs in addition to the adversarial one.
    pub random_pairs: usize,
    pub t_max: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingEstimate {
    /// Smallest `t` at which, for every starting pair, the fraction of
    /// replicas not yet coalesced is at most `eps`.
    pub t_mix: Option<u64>,
    /// Starting pairs; the first is the adversarial pair.
    pub pairs: Vec<(Allocation, Allocation)>,
    /// Worst fraction not coalesced, as `(t, fraction)` at every change point.
    pub exceedance: Vec<(u64, f64)>,
}

/// Coupling-based upper estimate of the mixing time.
///
/// The adversarial pair starts one chain at the optimum (or the all-first
/// allocation when enumeration is too large) and the other at the state
/// differing from it in every coordinate.
pub fn estimate_mixing(inst: &Instance, config: &MixingConfig) -> Result<MixingEstimate> {
    if config.replicas == 0 {
        return Err(Error::arg("replicas must be at least 1"));
    }
    if !(config.eps > 0.0 && config.eps <= 1.0) {
        return Err(Error::arg(format!(
            "eps must lie in (0, 1], got {}",
            config.eps
        )));
    }
    let anchor = match StateSpace::new(inst.n, inst.k, DEFAULT_STATE_CAP) {
        Ok(_) => brute_force_optimum(inst)?.allocation,
        Err(_) => Allocation::new(vec![0; inst.n], inst.k)?,
    };
    let far = Allocation::new(
        anchor
            .as_slice()
            .iter()
            .map(|&l| (l + 1) % inst.k)
            .collect(),
        inst.k,
    )?;
    let mut pairs = vec![(anchor, far)];
    let mut rng = replica_rng(config.seed, u64::MAX);
    for _ in 0..config.random_pairs {
        pairs.push((
            Allocation::uniform_random(inst.n, inst.k, &mut rng),
            Allocation::uniform_random(inst.n, inst.k, &mut rng),
        ));
    }

    let r = config.replicas as u64;
    // Per pair: sorted coalescence times, u64::MAX for "not within horizon".
    let times: Vec<Vec<u64>> = pairs
        .iter()
        .enumerate()
        .map(|(p, (x, y))| {
            let mut ts: Vec<u64> = (0..r)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = replica_rng(config.seed, p as u64 * r + rep);
                    coupled_run(inst, x, y, config.beta, config.t_max, &mut rng)
                        .coalescence_time
                        .unwrap_or(u64::MAX)
                })
                .collect();
            ts.sort_unstable();
            ts
        })
        .collect();

    let not_coalesced = |t: u64| {
        times
            .iter()
            .map(|ts| (ts.len() - ts.partition_point(|&c| c <= t)) as f64 / r as f64)
            .fold(0.0, f64::max)
    };
    let mut change_points: Vec<u64> = times
        .iter()
        .flatten()
        .copied()
        .filter(|&t| t <= config.t_max)
        .chain(std::iter::once(0))
        .collect();
    change_points.sort_unstable();
    change_points.dedup();
    let exceedance: Vec<(u64, f64)> = change_points
        .iter()
        .map(|&t| (t, not_coalesced(t)))
        .collect();
    let t_mix = exceedance
        .iter()
        .find(|&&(_, f)| f <= config.eps)
        .map(|&(t, _)| t);
    Ok(MixingEstimate {
        t_mix,
        pairs,
        exceedance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{gibbs_distribution, transition_matrix, StateSpace};
    use crate::instance::{gen_random, GenParams};
    use crate::matrix::Matrix;
    use crate::objective::move_delta;

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
    fn softmax_examples() {
        let mut out = [0.0; 3];
        softmax_neg_into(0.0, &[1.0, 5.0, 9.0], &mut out);
        assert!(out.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        let beta = 1.7;
        let mut two = [0.0; 2];
        softmax_neg_into(beta, &[0.0, 2f64.ln() / beta], &mut two);
        assert!((two[0] - 2.0 / 3.0).abs() < 1e-12 && (two[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn update_distribution_matches_kernel() {
        let inst = gen_random(5, &GenParams::unit(3, 3)).unwrap();
        let beta = 0.8;
        let p = transition_matrix(&inst, beta).unwrap();
        let space = StateSpace::of(&inst).unwrap();
        for s in [0, 7, 19] {
            let x = space.decode(s);
            for i in 0..3 {
                let probs = update_distribution(&inst, &x, i, beta);
                for (o, &q) in probs.iter().enumerate() {
                    if o == x.get(i) {
                        continue;
                    }
                    let y = s - x.get(i) * space.weight(i) + o * space.weight(i);
                    assert!((p.get(s, y) * 3.0 - q).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_resource_never_moves() {
        let inst = gen_random(1, &GenParams::unit(3, 1)).unwrap();
        let mut x = Allocation::new(vec![0; 3], 1).unwrap();
        let mut rng = replica_rng(1, 0);
        for _ in 0..100 {
            step(&inst, &mut x, 3.0, &mut rng);
            assert_eq!(x.as_slice(), &[0, 0, 0]);
        }
    }

    #[test]
    fn zero_beta_steps_are_uniform() {
        let inst = hand();
        let mut x = Allocation::new(vec![0, 0], 2).unwrap();
        let mut rng = replica_rng(3, 0);
        let trials = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..trials {
            let rec = step(&inst, &mut x, 0.0, &mut rng);
            counts[rec.player * 2 + rec.new] += 1;
        }
        let p = 0.25;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - trials as f64 * p).abs() <= 3.0 * sigma,
                "{counts:?}"
            );
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let inst = gen_random(2, &GenParams::unit(5, 3)).unwrap();
        let mut cfg = GlauberConfig::new(1.0, 500, 42);
        cfg.stride = 1;
        assert_eq!(run(&inst, &cfg).unwrap(), run(&inst, &cfg).unwrap());
        cfg.steps = 0;
        assert_eq!(run(&inst, &cfg).unwrap().records.len(), 1);
    }

    #[test]
    fn trace_potential_matches_recomputation() {
        let inst = gen_random(4, &GenParams::unit(5, 3)).unwrap();
        let mut cfg = GlauberConfig::new(0.5, 2000, 9);
        cfg.stride = 1;
        let trace = run(&inst, &cfg).unwrap();
        let mut x = trace.initial.clone();
        for rec in &trace.records[1..] {
            let s = rec.step.unwrap();
            let m = move_delta(&inst, &x, s.player, s.new);
            assert!((m.delta_cost - s.delta).abs() < 1e-9);
            x.set(s.player, s.new);
            assert!((potential(&inst, &x) - rec.phi).abs() < 1e-9);
        }
        assert_eq!(x, trace.final_state);
    }

    #[test]
    fn hand_chain_finds_optimum() {
        let mut cfg = GlauberConfig::new(5.0, 10_000, 1);
        cfg.target = Some(2.0);
        let trace = run(&hand(), &cfg).unwrap();
        assert_eq!(trace.best_phi, 2.0);
        assert!(trace.hit_time.is_some());
    }

    #[test]
    fn long_run_frequencies_approach_gibbs() {
        let inst = gen_random(8, &GenParams::unit(3, 2)).unwrap();
        let beta = 0.2;
        let pi = gibbs_distribution(&inst, beta).unwrap();
        let mut x = Allocation::new(vec![0; 3], 2).unwrap();
        let mut rng = replica_rng(5, 0);
        let mut freq = vec![0.0; pi.probs.len()];
        let steps = 1_000_000;
        for _ in 0..steps {
            step(&inst, &mut x, beta, &mut rng);
            freq[pi.space.encode(&x)] += 1.0 / steps as f64;
        }
        assert!(total_variation(&freq, &pi.probs) < 0.02);
    }

    #[test]
    fn best_response_examples() {
        let inst = hand();
        let out =
            best_response_dynamics(&inst, &Allocation::new(vec![0, 0], 2).unwrap(), 100).unwrap();
        assert_eq!(potential(&inst, &out.allocation), 2.0);
        assert!(out.moves <= 2);
        let opt = brute_force_optimum(&inst).unwrap();
        let stay = best_response_dynamics(&inst, &opt.allocation, 100).unwrap();
        assert_eq!(stay.moves, 0);
    }

    #[test]
    fn coupling_edge_cases() {
        let mut rng = replica_rng(0, 0);
        for _ in 0..100 {
            let (a, b) = maximal_coupling_sample(&[0.3, 0.7], &[0.3, 0.7], &mut rng).unwrap();
            assert_eq!(a, b);
            assert_eq!(
                maximal_coupling_sample(&[1.0, 0.0], &[0.0, 1.0], &mut rng).unwrap(),
                (0, 1)
            );
        }
        assert!(maximal_coupling_sample(&[0.5, 0.6], &[0.5, 0.5], &mut rng).is_err());
        assert!(maximal_coupling_sample(&[1.0], &[0.5, 0.5], &mut rng).is_err());
    }

    #[test]
    fn coupling_disagreement_rate() {
        let mut rng = replica_rng(1, 0);
        let draws = 100_000;
        let mu = [0.7, 0.3];
        let nu = [0.3, 0.7];
        let mut differ = 0;
        let mut first = 0;
        for _ in 0..draws {
            let (a, b) = maximal_coupling_sample(&mu, &nu, &mut rng).unwrap();
            differ += usize::from(a != b);
            first += usize::from(a == 0);
        }
        let sd = (0.4 * 0.6 / draws as f64).sqrt();
        assert!((differ as f64 / draws as f64 - 0.4).abs() <= 3.0 * sd);
        let sd = (0.7 * 0.3 / draws as f64).sqrt();
        assert!((first as f64 / draws as f64 - 0.7).abs() <= 3.0 * sd);
    }

    #[test]
    fn coupled_runs() {
        let inst = gen_random(3, &GenParams::unit(4, 2)).unwrap();
        let x = Allocation::new(vec![0, 1, 0, 1], 2).unwrap();
        let mut rng = replica_rng(2, 0);
        assert_eq!(
            coupled_run(&inst, &x, &x, 1.0, 10, &mut rng).coalescence_time,
            Some(0)
        );
        let y = Allocation::new(vec![1, 0, 1, 0], 2).unwrap();
        let run = coupled_run(&inst, &x, &y, 0.0, 10_000, &mut rng);
        assert!(run.rho.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*run.rho.last().unwrap(), 0);
    }

    #[test]
    fn vacuous_mixing_threshold() {
        let inst = gen_random(3, &GenParams::unit(3, 2)).unwrap();
        let cfg = MixingConfig {
            beta: 0.1,
            eps: 1.0,
            replicas: 10,
            random_pairs: 2,
            t_max: 1000,
            seed: 0,
        };
        assert_eq!(estimate_mixing(&inst, &cfg).unwrap().t_mix, Some(0));
    }
}
