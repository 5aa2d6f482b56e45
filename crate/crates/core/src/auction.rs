//! First-price auction of cache slots driven by dual prices, the primal
//! solution it induces, and the accounting that bounds its cost.

use serde::Serialize;

use crate::duality::{surplus, DualSolution, FEAS_TOL};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::matrix::Matrix;
use crate::objective::pos;

/// Bids at or below this are treated as zero: the item stays unsold.
pub const ZERO_BID: f64 = 1e-12;

/// `bid[i][l] = (Σ_j w_j^l (beta_j^l - c_ij)^+ - f_i^l)^+`.
pub fn compute_bids(inst: &Instance, beta: &Matrix) -> Result<Matrix> {
    crate::duality::eval_dual(inst, beta)?;
    let mut s = surplus(inst, beta);
    s.as_mut_slice().iter_mut().for_each(|v| *v = pos(*v));
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuctionOutcome {
    pub beta: Matrix,
    pub bids: Matrix,
    /// Winning resource per item, `None` when unsold.
    pub winners: Vec<Option<usize>>,
    /// First-price payment per item (0 when unsold).
    pub payments: Vec<f64>,
    /// Items won by each resource.
    pub bundles: Vec<Vec<usize>>,
    /// Each resource's charges to clients minus its payments.
    pub utilities: Vec<f64>,
    pub social_welfare: f64,
    pub revenue: f64,
    /// `Σ w beta`, the raw charges.
    pub charged: f64,
    /// `revenue / charged`; `None` when nothing is charged.
    pub gamma: Option<f64>,
    /// `1 + revenue / social_welfare`; `None` unless welfare is positive.
    pub factor: Option<f64>,
}

/// Sells every item to its highest bidder at the bid. Ties go to the
/// smallest resource index; items with no positive bid stay unsold.
pub fn run_auction(inst: &Instance, dual: &DualSolution) -> Result<AuctionOutcome> {
    let residual = dual.feasibility_residual(inst);
    if residual > FEAS_TOL {
        return Err(Error::arg(format!(
            "dual is infeasible (residual {residual:.3e})"
        )));
    }
    let bids = compute_bids(inst, &dual.beta)?;
    let mut winners = Vec::with_capacity(inst.n);
    let mut payments = Vec::with_capacity(inst.n);
    let mut bundles = vec![Vec::new(); inst.k];
    for i in 0..inst.n {
        let row = bids.row(i);
        let mut best = 0;
        for l in 1..inst.k {
            if row[l] > row[best] {
                best = l;
            }
        }
        if row[best] > ZERO_BID {
            winners.push(Some(best));
            payments.push(row[best]);
            bundles[best].push(i);
        } else {
            winners.push(None);
            payments.push(0.0);
        }
    }
    let utilities: Vec<f64> = (0..inst.k)
        .map(|l| {
            let charges: f64 = (0..inst.n)
                .map(|j| inst.demand(j, l) * dual.beta[(j, l)])
                .sum();
            charges - bundles[l].iter().map(|&i| payments[i]).sum::<f64>()
        })
        .collect();
    let social_welfare: f64 = utilities.iter().sum();
    let revenue: f64 = payments.iter().sum();
    let charged = dual.charged(inst);
    Ok(AuctionOutcome {
        beta: dual.beta.clone(),
        bids,
        winners,
        payments,
        bundles,
        utilities,
        gamma: (charged > 0.0).then(|| revenue / charged),
        factor: (social_welfare > 0.0).then(|| 1.0 + revenue / social_welfare),
        social_welfare,
        revenue,
        charged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrimalSolution {
    /// Resource cached by each item, `None` when unsold.
    pub y: Vec<Option<usize>>,
    /// `connections[j][l]`: the agent client `j` fetches `l` from.
    pub connections: Vec<Vec<Option<usize>>>,
    /// Resources nobody holds; their clients pay the empty-set distance.
    pub uncovered: Vec<usize>,
    pub access_cost: f64,
    pub fee_cost: f64,
    pub cost: f64,
}

/// Caches the auction bundles and connects every client to its nearest
/// holder (lowest index among ties).
pub fn build_primal(inst: &Instance, outcome: &AuctionOutcome) -> PrimalSolution {
    let mut connections = vec![vec![None; inst.k]; inst.n];
    let mut access_cost = 0.0;
    for (j, row) in connections.iter_mut().enumerate() {
        for (l, slot) in row.iter_mut().enumerate() {
            let nearest = outcome.bundles[l]
                .iter()
                .copied()
                .min_by(|&a, &b| inst.cost(a, j).total_cmp(&inst.cost(b, j)).then(a.cmp(&b)));
            *slot = nearest;
            let d = nearest.map_or(inst.empty_set_distance, |i| inst.cost(i, j));
            access_cost += inst.demand(j, l) * d;
        }
    }
    let fee_cost: f64 = outcome
        .winners
        .iter()
        .enumerate()
        .filter_map(|(i, w)| w.map(|l| inst.fee(i, l)))
        .sum();
    PrimalSolution {
        y: outcome.winners.clone(),
        uncovered: (0..inst.k)
            .filter(|&l| outcome.bundles[l].is_empty())
            .collect(),
        connections,
        access_cost,
        fee_cost,
        cost: access_cost + fee_cost,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certification {
    pub cost: f64,
    pub social_welfare: f64,
    pub revenue: f64,
    pub gamma: Option<f64>,
    /// `1 + revenue / social_welfare`, `None` when welfare is not positive.
    pub factor: Option<f64>,
    /// `1 / (1 - gamma)`, for comparison with `factor`.
    pub factor_from_gamma: Option<f64>,
    /// Whether every fee is zero; the bound is only claimed then.
    pub within_hypothesis: bool,
    /// `cost <= social_welfare + revenue + 1e-9`.
    pub bound_holds: bool,
    /// `cost / optimum`, when the optimum is known and positive.
    pub ratio_to_optimum: Option<f64>,
    /// `cost / optimum <= factor + 1e-6`.
    pub ratio_holds: Option<bool>,
}

pub fn certify_bound(
    inst: &Instance,
    outcome: &AuctionOutcome,
    primal: &PrimalSolution,
    optimum: Option<f64>,
) -> Certification {
    let factor_from_gamma = outcome.gamma.filter(|&g| g < 1.0).map(|g| 1.0 / (1.0 - g));
    let ratio_to_optimum = optimum.filter(|&o| o > 0.0).map(|o| primal.cost / o);
    Certification {
        cost: primal.cost,
        social_welfare: outcome.social_welfare,
        revenue: outcome.revenue,
        gamma: outcome.gamma,
        factor: outcome.factor,
        factor_from_gamma,
        within_hypothesis: inst.placement_fees.as_slice().iter().all(|&f| f == 0.0),
        bound_holds: primal.cost <= outcome.social_welfare + outcome.revenue + 1e-9,
        ratio_holds: ratio_to_optimum
            .zip(outcome.factor)
            .map(|(r, f)| r <= f + 1e-6),
        ratio_to_optimum,
    }
}

/// Tolerance of the slackness checks.
pub const CS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum CsFinding {
    /// A sold item's price differs from its winner's surplus.
    PriceMismatch {
        item: usize,
        resource: usize,
        alpha: f64,
        surplus: f64,
    },
    /// An unsold item still carries a positive price.
    PricedUnsold { item: usize, alpha: f64 },
    /// An item is unsold at price 0: its slot constraint is slack.
    SlackItem { item: usize },
    /// A demanded resource has no holder.
    Uncovered { resource: usize },
    /// A client is connected to a holder farther than its price.
    Underpriced {
        client: usize,
        resource: usize,
        holder: usize,
        beta: f64,
        cost: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsAudit {
    pub findings: Vec<CsFinding>,
    /// `Σ_{i,j,l} u_ij^l (y_i^l - x_ij^l)`.
    pub gap: f64,
    pub cost: f64,
    pub dual_objective: f64,
    /// `cost - dual_objective - gap`.
    pub identity_residual: f64,
    /// No finding other than slack items at price zero.
    pub conditions_hold: bool,
    /// `conditions_hold` and the residual is within tolerance.
    pub identity_holds: bool,
}

/// Checks the pricing, coverage and connection conditions under which the
/// primal cost equals the dual value plus the slot-constraint gap.
pub fn cs_audit(inst: &Instance, primal: &PrimalSolution, dual: &DualSolution) -> CsAudit {
    let s = surplus(inst, &dual.beta);
    let mut findings = Vec::new();
    for (i, y) in primal.y.iter().enumerate() {
        match *y {
            Some(l) if (dual.alpha[i] - s[(i, l)]).abs() > CS_TOL => {
                findings.push(CsFinding::PriceMismatch {
                    item: i,
                    resource: l,
                    alpha: dual.alpha[i],
                    surplus: s[(i, l)],
                })
            }
            Some(_) => {}
            None if dual.alpha[i] > CS_TOL => findings.push(CsFinding::PricedUnsold {
                item: i,
                alpha: dual.alpha[i],
            }),
            None => findings.push(CsFinding::SlackItem { item: i }),
        }
    }
    for &l in &primal.uncovered {
        if (0..inst.n).any(|j| inst.demand(j, l) > 0.0) {
            findings.push(CsFinding::Uncovered { resource: l });
        }
    }
    let mut gap = 0.0;
    for (i, y) in primal.y.iter().enumerate() {
        if let Some(l) = *y {
            gap += (0..inst.n).map(|j| dual.u_var(inst, i, j, l)).sum::<f64>();
        }
    }
    for j in 0..inst.n {
        for l in 0..inst.k {
            if let Some(i) = primal.connections[j][l] {
                gap -= dual.u_var(inst, i, j, l);
                let (beta, cost) = (dual.beta[(j, l)], inst.cost(i, j));
                if inst.demand(j, l) > 0.0 && beta < cost - CS_TOL {
                    findings.push(CsFinding::Underpriced {
                        client: j,
                        resource: l,
                        holder: i,
                        beta,
                        cost,
                    });
                }
            }
        }
    }
    let identity_residual = primal.cost - dual.objective - gap;
    let conditions_hold = findings
        .iter()
        .all(|f| matches!(f, CsFinding::SlackItem { .. }));
    CsAudit {
        identity_holds: conditions_hold && identity_residual.abs() <= CS_TOL,
        findings,
        gap,
        cost: primal.cost,
        dual_objective: dual.objective,
        identity_residual,
        conditions_hold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::{eval_dual, solve_dual, SolveConfig};
    use crate::exact::brute_force_optimum;
    use crate::instance::{gen_random, GenParams};
    use crate::objective::potential;

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

    fn fee_free(seed: u64, n: usize, k: usize) -> Instance {
        gen_random(
            seed,
            &GenParams {
                fee_range: (0.0, 0.0),
                ..GenParams::unit(n, k)
            },
        )
        .unwrap()
    }

    fn outcome_for(inst: &Instance, winners: &[Option<usize>]) -> AuctionOutcome {
        let zero = DualSolution::from_beta(inst, Matrix::zeros(inst.n, inst.k)).unwrap();
        let mut out = run_auction(inst, &zero).unwrap();
        out.winners = winners.to_vec();
        out.bundles = vec![Vec::new(); inst.k];
        for (i, w) in winners.iter().enumerate() {
            if let Some(l) = w {
                out.bundles[*l].push(i);
            }
        }
        out
    }

    #[test]
    fn zero_prices_sell_nothing() {
        let inst = hand();
        let dual = DualSolution::from_beta(&inst, Matrix::zeros(2, 2)).unwrap();
        let out = run_auction(&inst, &dual).unwrap();
        assert!(out.bids.as_slice().iter().all(|&b| b == 0.0));
        assert!(out.winners.iter().all(Option::is_none));
        assert_eq!((out.revenue, out.social_welfare), (0.0, 0.0));
        assert_eq!(out.factor, None);
        let primal = build_primal(&inst, &out);
        assert_eq!(primal.cost, 4.0 * inst.empty_set_distance);
        assert_eq!(primal.uncovered, vec![0, 1]);
    }

    #[test]
    fn hand_bids() {
        let bids = compute_bids(&hand(), &Matrix::filled(2, 2, 1.0)).unwrap();
        assert!(bids.as_slice().iter().all(|&b| b == 1.0));
    }

    #[test]
    fn huge_fee_zeroes_bid() {
        let mut inst = hand();
        inst.placement_fees[(0, 0)] = 1e6;
        let bids = compute_bids(&inst, &Matrix::filled(2, 2, 1.0)).unwrap();
        assert_eq!(bids[(0, 0)], 0.0);
    }

    #[test]
    fn infeasible_dual_rejected() {
        let inst = hand();
        let mut dual = DualSolution::from_beta(&inst, Matrix::filled(2, 2, 1.0)).unwrap();
        dual.alpha[0] = 0.0;
        assert!(run_auction(&inst, &dual).is_err());
    }

    #[test]
    fn accounting_matches_dual() {
        for seed in 0..30 {
            let inst = gen_random(seed, &GenParams::unit(2 + (seed % 5) as usize, 2)).unwrap();
            let out = solve_dual(
                &inst,
                &SolveConfig {
                    max_iters: 20_000,
                    ..Default::default()
                },
            )
            .unwrap();
            let a = run_auction(&inst, &out.solution).unwrap();
            let ev = eval_dual(&inst, &out.solution.beta).unwrap();
            assert_eq!(a.winners, ev.assignment);
            assert!((a.social_welfare - out.solution.objective).abs() < 1e-9);
            let sold: f64 = a
                .winners
                .iter()
                .zip(&a.payments)
                .filter(|(w, _)| w.is_some())
                .map(|(_, p)| p)
                .sum();
            assert_eq!(a.revenue, sold);
            for l in 0..inst.k {
                let charges: f64 = (0..inst.n)
                    .map(|j| inst.demand(j, l) * a.beta[(j, l)])
                    .sum();
                let paid: f64 = a.bundles[l].iter().map(|&i| a.payments[i]).sum();
                assert!((a.utilities[l] + paid - charges).abs() < 1e-9);
                for &i in &a.bundles[l] {
                    assert!(ev.surplus[(i, l)] >= 0.0);
                }
            }
            if let (Some(g), Some(f)) = (a.gamma, a.factor) {
                assert!(g < 1.0);
                assert!((1.0 / (1.0 - g) - f).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn optimal_bundles_cost_the_optimum() {
        let inst = gen_random(3, &GenParams::unit(4, 2)).unwrap();
        let opt = brute_force_optimum(&inst).unwrap();
        let winners: Vec<_> = opt.allocation.as_slice().iter().map(|&l| Some(l)).collect();
        let primal = build_primal(&inst, &outcome_for(&inst, &winners));
        assert!((primal.cost - opt.value).abs() < 1e-9);
        assert!((potential(&inst, &opt.allocation) - primal.cost).abs() < 1e-9);
    }

    #[test]
    fn nearest_holder_beats_every_assignment() {
        let inst = gen_random(5, &GenParams::unit(3, 2)).unwrap();
        let winners = [Some(0), Some(0), Some(1)];
        let primal = build_primal(&inst, &outcome_for(&inst, &winners));
        let holders = [vec![0, 1], vec![2]];
        // Enumerate every client-to-holder choice: 2^3 for resource 0.
        for mask in 0..8u32 {
            let mut cost = primal.fee_cost;
            for j in 0..3 {
                let h = holders[0][((mask >> j) & 1) as usize];
                cost += inst.demand(j, 0) * inst.cost(h, j) + inst.demand(j, 1) * inst.cost(2, j);
            }
            assert!(primal.cost <= cost + 1e-12);
        }
    }

    #[test]
    fn zero_price_audit_blames_coverage() {
        let inst = hand();
        let dual = DualSolution::from_beta(&inst, Matrix::zeros(2, 2)).unwrap();
        let out = run_auction(&inst, &dual).unwrap();
        let audit = cs_audit(&inst, &build_primal(&inst, &out), &dual);
        assert_eq!(audit.gap, 0.0);
        assert!(!audit.identity_holds);
        assert!(audit
            .findings
            .iter()
            .any(|f| matches!(f, CsFinding::Uncovered { .. })));
        assert!(audit
            .findings
            .iter()
            .any(|f| matches!(f, CsFinding::SlackItem { .. })));
    }

    #[test]
    fn symmetric_instance_ties_leave_a_resource_uncovered() {
        // Every optimal price vector of the symmetric instance prices both
        // resources alike, so both items go to the same bidder.
        let inst = hand();
        let out = solve_dual(&inst, &SolveConfig::default()).unwrap();
        assert!((out.solution.objective - 2.0).abs() < 1e-9);
        let a = run_auction(&inst, &out.solution).unwrap();
        let primal = build_primal(&inst, &a);
        assert_eq!(primal.uncovered.len(), 1);
        let audit = cs_audit(&inst, &primal, &out.solution);
        assert!(audit
            .findings
            .iter()
            .any(|f| matches!(f, CsFinding::Uncovered { .. })));
        assert!(!certify_bound(&inst, &a, &primal, Some(2.0)).bound_holds);
    }

    #[test]
    fn fee_free_bound_and_identity() {
        for seed in 0..30 {
            let inst = fee_free(seed, 3 + (seed % 5) as usize, 2 + (seed % 2) as usize);
            let out = solve_dual(&inst, &SolveConfig::default()).unwrap();
            if !out.tolerance_met {
                continue;
            }
            let a = run_auction(&inst, &out.solution).unwrap();
            let primal = build_primal(&inst, &a);
            let cert = certify_bound(&inst, &a, &primal, None);
            let audit = cs_audit(&inst, &primal, &out.solution);
            assert!(cert.within_hypothesis);
            assert!(cert.bound_holds, "seed {seed}");
            if audit.conditions_hold {
                assert!(audit.identity_residual.abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn zero_revenue_optimal_bundles() {
        // Two isolated agents each demanding only their own resource: free
        // caching of the demanded resource is optimal and nobody pays.
        let c = Matrix::from_rows(vec![vec![0.0, 5.0], vec![5.0, 0.0]]).unwrap();
        let w = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let inst = Instance::new(vec![1, 1], c, w, Matrix::zeros(2, 2), None).unwrap();
        let out = solve_dual(&inst, &SolveConfig::default()).unwrap();
        let a = run_auction(&inst, &out.solution).unwrap();
        let primal = build_primal(&inst, &a);
        let cert = certify_bound(&inst, &a, &primal, Some(0.0));
        assert_eq!(primal.cost, 0.0);
        assert!(cert.bound_holds);
    }
}
