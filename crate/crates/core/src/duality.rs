//! The dual of the placement linear program: evaluation, supergradients,
//! ascent, and the certificate built from a Nash equilibrium.
//!
//! Dual prices are stored per unit of demand: `beta[j][l]` is what client
//! `j` pays per unit of demand for resource `l`. Entries with zero demand
//! are pinned to 0.
//!
//! The relaxation lets a client go without a resource at the empty-set
//! distance, so prices live in `[0, C]` with `C` that distance. Without the
//! upper limit the dual can exceed the integral optimum whenever the
//! optimum leaves a resource uncached.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glauber::best_response_dynamics;
use crate::instance::Instance;
use crate::matrix::Matrix;
use crate::objective::{evacuated_potential, improving_move, pos, potential, Allocation};

/// Slack allowed in dual feasibility checks.
pub const FEAS_TOL: f64 = 1e-9;

fn check_beta(inst: &Instance, beta: &Matrix) -> Result<()> {
    if beta.shape() != (inst.n, inst.k) {
        return Err(Error::arg(format!(
            "beta is {}x{}, expected {}x{}",
            beta.rows(),
            beta.cols(),
            inst.n,
            inst.k
        )));
    }
    if let Some(p) = beta
        .as_slice()
        .iter()
        .position(|b| !(b.is_finite() && *b >= 0.0))
    {
        return Err(Error::arg(format!(
            "beta[{}][{}] = {} must be finite and nonnegative",
            p / inst.k + 1,
            p % inst.k + 1,
            beta.as_slice()[p]
        )));
    }
    Ok(())
}

/// `surplus[i][l] = Σ_j w_j^l (beta_j^l - c_ij)^+ - f_i^l`: what resource `l`
/// gains from holding item `i`, net of the fee.
pub fn surplus(inst: &Instance, beta: &Matrix) -> Matrix {
    let mut s = Matrix::zeros(inst.n, inst.k);
    for j in 0..inst.n {
        let w = inst.demands.row(j);
        let b = beta.row(j);
        for i in 0..inst.n {
            let c = inst.cost(i, j);
            let row = s.row_mut(i);
            for l in 0..inst.k {
                row[l] += w[l] * pos(b[l] - c);
            }
        }
    }
    for i in 0..inst.n {
        for l in 0..inst.k {
            s[(i, l)] -= inst.fee(i, l);
        }
    }
    s
}

/// Value of the dual at `beta` together with the minimizing integral
/// item assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct DualEval {
    pub objective: f64,
    pub alpha: Vec<f64>,
    /// Resource each item goes to, `None` when no resource has positive surplus.
    pub assignment: Vec<Option<usize>>,
    pub surplus: Matrix,
}

/// `g(beta) = Σ w beta - Σ_i max(0, max_l surplus[i][l])`. The inner
/// minimization over the item polytope is attained at a vertex, so the
/// assignment is integral; ties go to the smallest resource.
pub fn eval_dual(inst: &Instance, beta: &Matrix) -> Result<DualEval> {
    check_beta(inst, beta)?;
    Ok(eval_unchecked(inst, beta))
}

fn eval_unchecked(inst: &Instance, beta: &Matrix) -> DualEval {
    let surplus = surplus(inst, beta);
    let mut alpha = Vec::with_capacity(inst.n);
    let mut assignment = Vec::with_capacity(inst.n);
    for i in 0..inst.n {
        let row = surplus.row(i);
        let mut best: Option<usize> = None;
        for (l, &v) in row.iter().enumerate() {
            if v > 0.0 && best.is_none_or(|b| v > row[b]) {
                best = Some(l);
            }
        }
        alpha.push(best.map_or(0.0, |l| row[l]));
        assignment.push(best);
    }
    let charged: f64 = inst
        .demands
        .as_slice()
        .iter()
        .zip(beta.as_slice())
        .map(|(w, b)| w * b)
        .sum();
    DualEval {
        objective: charged - alpha.iter().sum::<f64>(),
        alpha,
        assignment,
        surplus,
    }
}

/// Supergradient of `g` at `beta`: `w_j^l (1 - #{assigned items i of l with
/// beta_j^l > c_ij})`.
pub fn dual_subgradient(inst: &Instance, beta: &Matrix) -> Result<Matrix> {
    check_beta(inst, beta)?;
    let ev = eval_unchecked(inst, beta);
    Ok(subgradient_from(inst, beta, &ev.assignment))
}

fn subgradient_from(inst: &Instance, beta: &Matrix, assignment: &[Option<usize>]) -> Matrix {
    let mut g = inst.demands.clone();
    for (i, a) in assignment.iter().enumerate() {
        if let Some(l) = *a {
            for j in 0..inst.n {
                if beta[(j, l)] > inst.cost(i, j) {
                    g[(j, l)] -= inst.demand(j, l);
                }
            }
        }
    }
    g
}

/// A feasible dual point. `alpha` is always recomputed from `beta`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualSolution {
    pub beta: Matrix,
    pub alpha: Vec<f64>,
    pub objective: f64,
}

impl DualSolution {
    /// The cheapest feasible `alpha` for `beta`.
    pub fn from_beta(inst: &Instance, beta: Matrix) -> Result<Self> {
        let ev = eval_dual(inst, &beta)?;
        Ok(DualSolution {
            beta,
            alpha: ev.alpha,
            objective: ev.objective,
        })
    }

    /// `u_ij^l = w_j^l (beta_j^l - c_ij)^+`.
    pub fn u_var(&self, inst: &Instance, i: usize, j: usize, l: usize) -> f64 {
        inst.demand(j, l) * pos(self.beta[(j, l)] - inst.cost(i, j))
    }

    /// Largest violation of `Σ_j u_ij^l - f_i^l <= alpha_i`, of the sign
    /// constraints, or of `beta <= C`; 0 when feasible.
    pub fn feasibility_residual(&self, inst: &Instance) -> f64 {
        let s = surplus(inst, &self.beta);
        let mut worst: f64 = 0.0;
        for i in 0..inst.n {
            worst = worst.max(-self.alpha[i]);
            for l in 0..inst.k {
                worst = worst.max(s[(i, l)] - self.alpha[i]);
            }
        }
        for &b in self.beta.as_slice() {
            worst = worst.max(-b).max(b - inst.empty_set_distance);
        }
        worst
    }

    /// `Σ w beta`, the total charged to clients in unscaled units.
    pub fn charged(&self, inst: &Instance) -> f64 {
        inst.demands
            .as_slice()
            .iter()
            .zip(self.beta.as_slice())
            .map(|(w, b)| w * b)
            .sum()
    }
}

/// Upper bound on the linear program from a fractional item assignment:
/// each client fills one unit of each resource from the nearest fractional
/// holders and takes any shortfall at the empty-set distance.
pub fn primal_upper_bound(inst: &Instance, y: &Matrix) -> f64 {
    let mut total = 0.0;
    let mut order: Vec<usize> = (0..inst.n).collect();
    for j in 0..inst.n {
        order.sort_by(|&a, &b| inst.cost(a, j).total_cmp(&inst.cost(b, j)).then(a.cmp(&b)));
        for l in 0..inst.k {
            let w = inst.demand(j, l);
            if w == 0.0 {
                continue;
            }
            let mut need = 1.0;
            let mut cost = 0.0;
            for &i in &order {
                let take = y[(i, l)].min(need);
                cost += take * inst.cost(i, j);
                need -= take;
                if need <= 0.0 {
                    break;
                }
            }
            if need > 0.0 {
                cost += need * inst.empty_set_distance;
            }
            total += w * cost;
        }
    }
    total
        + inst
            .placement_fees
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(f, v)| f * v)
            .sum::<f64>()
}

/// Step size schedule of the ascent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum StepRule {
    /// `a / (b + t)` times the raw supergradient. `a = None` picks
    /// `0.1 · C / ||G_0||_inf` with `C` the empty-set distance.
    Harmonic { a: Option<f64>, b: f64 },
    /// Moves a distance `scale · C / (1 + t/b)` along the normalized
    /// supergradient, restarting from the best point with half the scale
    /// whenever `restart` iterations pass without improvement.
    Normalized { scale: f64, b: f64, restart: usize },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Normalized {
            scale: 0.5,
            b: 10.0,
            restart: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveConfig {
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Relative duality gap at which the ascent stops.
    pub tol: f64,
    /// `None` starts from `beta = 0`, otherwise from a random point.
    pub seed: Option<u64>,
    /// Optional known value (e.g. the integral optimum) for gap reporting.
    pub reference: Option<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_iters: 200_000,
            step_rule: StepRule::default(),
            tol: 1e-6,
            seed: None,
            reference: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualOutcome {
    pub solution: DualSolution,
    pub assignment: Vec<Option<usize>>,
    pub iterations: usize,
    /// Best upper bound on the LP value found along the way.
    pub upper_bound: f64,
    /// `upper_bound - objective`.
    pub certified_gap: f64,
    pub tolerance_met: bool,
    /// `reference - objective` when a reference was supplied.
    pub reference_gap: Option<f64>,
    /// Best objective after each improvement, as `(iteration, value)`.
    pub history: Vec<(usize, f64)>,
}

/// How often the primal bound is refreshed.
const CERTIFY_EVERY: usize = 500;

/// Projected supergradient ascent with best-iterate tracking.
///
/// Averaged item assignments give a fractional primal point whose cost
/// upper-bounds the LP value; the ascent stops once the returned dual value
/// is within `tol` (relative) of that bound.
pub fn solve_dual(inst: &Instance, config: &SolveConfig) -> Result<DualOutcome> {
    inst.check()?;
    let (n, k) = (inst.n, inst.k);
    let scale = inst.empty_set_distance;
    let active: Vec<bool> = inst.demands.as_slice().iter().map(|&w| w > 0.0).collect();
    let mut beta = Matrix::zeros(n, k);
    if let Some(seed) = config.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (b, &on) in beta.as_mut_slice().iter_mut().zip(&active) {
            if on {
                *b = rng.random_range(0.0..scale);
            }
        }
    }

    // Every allocation is feasible for the relaxation; a local optimum
    // makes a cheap first bound.
    let start = Allocation::new((0..n).map(|i| i % k).collect(), k)?;
    let anchor = best_response_dynamics(inst, &start, 10 * n * k + 10)
        .map(|o| o.allocation)
        .unwrap_or(start);
    let mut upper = potential(inst, &anchor);

    let first = eval_unchecked(inst, &beta);
    let mut best = (beta.clone(), first.objective, first.assignment.clone());
    let mut history = vec![(0, first.objective)];
    let mut avg = Matrix::zeros(n, k);
    let mut avg_weight = 0.0;
    let mut window = Matrix::zeros(n, k);
    let mut window_weight = 0.0;
    let mut since_improve = 0usize;
    let mut step_scale = match config.step_rule {
        StepRule::Normalized { scale: s, .. } => s,
        StepRule::Harmonic { .. } => 1.0,
    };
    let mut epoch_t = 0usize;
    let mut harmonic_a = None;
    let mut iterations = 0;
    let mut ev = first;

    let gap_ok = |upper: f64, lower: f64| upper - lower <= config.tol * lower.abs().max(1.0);

    for t in 1..=config.max_iters {
        iterations = t;
        let g = subgradient_from(inst, &beta, &ev.assignment);
        let gnorm2: f64 = g
            .as_slice()
            .iter()
            .zip(&active)
            .zip(beta.as_slice())
            .map(|((&v, &on), &b)| {
                let free = (v > 0.0 && b < scale) || (v < 0.0 && b > 0.0);
                if on && free {
                    v * v
                } else {
                    0.0
                }
            })
            .sum();
        if gnorm2 == 0.0 {
            // Zero projected supergradient: beta is a maximizer.
            upper = upper.min(ev.objective);
            break;
        }
        let step = match config.step_rule {
            StepRule::Harmonic { a, b } => {
                let a = *harmonic_a.get_or_insert_with(|| {
                    a.unwrap_or_else(|| {
                        let inf = g.as_slice().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
                        0.1 * scale / inf
                    })
                });
                a / (b + t as f64)
            }
            StepRule::Normalized { b, .. } => {
                step_scale * scale / (1.0 + epoch_t as f64 / b) / gnorm2.sqrt()
            }
        };
        // Two running averages of the assignments: step-weighted over the
        // epoch and uniform over the current certification window.
        for (i, a) in ev.assignment.iter().enumerate() {
            if let Some(l) = *a {
                avg[(i, l)] += step;
                window[(i, l)] += 1.0;
            }
        }
        avg_weight += step;
        window_weight += 1.0;

        for ((b, &d), &on) in beta
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(&active)
        {
            if on {
                *b = (*b + step * d).clamp(0.0, scale);
            }
        }
        ev = eval_unchecked(inst, &beta);
        epoch_t += 1;
        if ev.objective >= best.1 {
            if ev.objective > best.1 {
                history.push((t, ev.objective));
                since_improve = 0;
            }
            best = (beta.clone(), ev.objective, ev.assignment.clone());
        } else {
            since_improve += 1;
        }

        if t % CERTIFY_EVERY == 0 {
            upper = upper
                .min(averaged_bound(inst, &avg, avg_weight))
                .min(averaged_bound(inst, &window, window_weight));
            if gap_ok(upper, best.1) {
                break;
            }
            window = Matrix::zeros(n, k);
            window_weight = 0.0;
        }
        if let StepRule::Normalized { restart, .. } = config.step_rule {
            if since_improve >= restart {
                beta = best.0.clone();
                ev = eval_unchecked(inst, &beta);
                step_scale *= 0.5;
                epoch_t = 0;
                since_improve = 0;
                upper = upper.min(averaged_bound(inst, &avg, avg_weight));
                avg = Matrix::zeros(n, k);
                avg_weight = 0.0;
            }
        }
    }
    upper = upper.min(averaged_bound(inst, &avg, avg_weight));

    let (beta, objective, assignment) = best;
    let solution = DualSolution::from_beta(inst, beta)?;
    debug_assert_eq!(solution.objective, objective);
    let certified_gap = (upper - objective).max(0.0);
    Ok(DualOutcome {
        tolerance_met: gap_ok(upper, objective),
        reference_gap: config.reference.map(|r| r - objective),
        solution,
        assignment,
        iterations,
        upper_bound: upper,
        certified_gap,
        history,
    })
}

fn averaged_bound(inst: &Instance, sum: &Matrix, weight: f64) -> f64 {
    if weight <= 0.0 {
        return f64::INFINITY;
    }
    let ybar = Matrix::from_fn(inst.n, inst.k, |i, l| sum[(i, l)] / weight);
    primal_upper_bound(inst, &ybar)
}

/// Dual point read off an equilibrium: clients pay their current access
/// distance and each item's price is the saving it provides, floored at 0.
pub fn ne_dual_certificate(inst: &Instance, ne: &Allocation) -> Result<DualSolution> {
    let ne = Allocation::for_instance(ne.as_slice().to_vec(), inst)?;
    if let Some((agent, resource, improvement)) =
        improving_move(inst, &ne, crate::glauber::IMPROVE_TOL)
    {
        return Err(Error::NotEquilibrium {
            agent,
            resource,
            improvement,
        });
    }
    let holders = ne.holders(inst.k);
    let beta = Matrix::from_fn(inst.n, inst.k, |j, l| {
        if inst.demand(j, l) > 0.0 {
            crate::objective::distance(inst, j, &holders[l])
        } else {
            0.0
        }
    });
    let alpha = (0..inst.n)
        .map(|i| {
            let l = ne.get(i);
            let others: Vec<usize> = holders[l].iter().copied().filter(|&a| a != i).collect();
            let saving: f64 = (0..inst.n)
                .map(|j| {
                    inst.demand(j, l)
                        * pos(crate::objective::distance(inst, j, &others) - inst.cost(i, j))
                })
                .sum();
            pos(saving - inst.fee(i, l))
        })
        .collect::<Vec<_>>();
    let charged: f64 = inst
        .demands
        .as_slice()
        .iter()
        .zip(beta.as_slice())
        .map(|(w, b)| w * b)
        .sum();
    let objective = charged - alpha.iter().sum::<f64>();
    Ok(DualSolution {
        beta,
        alpha,
        objective,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeQualityReport {
    pub phi: f64,
    pub optimum: Option<f64>,
    /// Potential with each agent's cache emptied, its fee still paid.
    pub evacuated: Vec<f64>,
    /// Same with the evacuated agent's fee removed.
    pub evacuated_drop_fee: Vec<f64>,
    /// `(optimum + Σ evacuated) / (n + 1)`, when the optimum is known.
    pub bound: Option<f64>,
    /// The same expression over `evacuated_drop_fee`. Tighter, and not
    /// implied by the equilibrium conditions: it fails on single-resource
    /// instances.
    pub bound_drop_fee: Option<f64>,
    pub certificate_objective: f64,
    /// `phi` exceeds `bound` by more than `1e-9`.
    pub violated: bool,
}

/// Upper bound on an equilibrium's potential from its evacuation values.
pub fn ne_quality_bound(
    inst: &Instance,
    ne: &Allocation,
    optimum: Option<f64>,
) -> Result<NeQualityReport> {
    let cert = ne_dual_certificate(inst, ne)?;
    let evacuated: Vec<f64> = (0..inst.n)
        .map(|j| evacuated_potential(inst, ne, j, false))
        .collect();
    let evacuated_drop_fee: Vec<f64> = (0..inst.n)
        .map(|j| evacuated_potential(inst, ne, j, true))
        .collect();
    let phi = potential(inst, ne);
    let n1 = (inst.n + 1) as f64;
    let bound = optimum.map(|o| (o + evacuated.iter().sum::<f64>()) / n1);
    let bound_drop_fee = optimum.map(|o| (o + evacuated_drop_fee.iter().sum::<f64>()) / n1);
    Ok(NeQualityReport {
        phi,
        optimum,
        violated: bound.is_some_and(|b| phi > b + 1e-9),
        evacuated,
        evacuated_drop_fee,
        bound,
        bound_drop_fee,
        certificate_objective: cert.objective,
    })
}
