//! Problem data, validation, the unit-cache reduction and instance I/O.
//!
//! Agents and resources are 0-indexed in memory. Everything user facing
//! (violation messages, reports, allocation strings) is 1-indexed.

use std::fmt;
use std::ops::{Deref, Range};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::objective::Allocation;

/// A data placement instance.
///
/// `access_costs[i][j]` is the cost for agent `j` to fetch from agent `i`,
/// `demands[j][l]` the request rate of agent `j` for resource `l` and
/// `placement_fees[i][l]` the cost of caching `l` at agent `i`. Costs need
/// not satisfy the triangle inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub n: usize,
    pub k: usize,
    pub cache_sizes: Vec<u32>,
    pub access_costs: Matrix,
    pub demands: Matrix,
    pub placement_fees: Matrix,
    /// Distance from any agent to an empty holder set.
    pub empty_set_distance: f64,
}

/// On-disk layout. `empty_set_distance` may be omitted.
#[derive(Serialize, Deserialize)]
struct InstanceFile {
    n: usize,
    k: usize,
    cache_sizes: Vec<u32>,
    access_costs: Matrix,
    demands: Matrix,
    placement_fees: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    empty_set_distance: Option<f64>,
}

/// A single broken instance invariant. Indices are stored 0-based and
/// displayed 1-based.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoAgents,
    NoResources,
    Length {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    Shape {
        field: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    NonFinite {
        field: &'static str,
        row: usize,
        col: usize,
    },
    Negative {
        field: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    NonzeroDiagonal {
        agent: usize,
        value: f64,
    },
    Asymmetric {
        i: usize,
        j: usize,
        forward: f64,
        backward: f64,
    },
    ZeroCache {
        agent: usize,
    },
    Infeasible {
        total_cache: u64,
        k: usize,
    },
    EmptySetDistance {
        value: f64,
        max_cost: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::NoAgents => write!(f, "n must be positive"),
            Violation::NoResources => write!(f, "k must be positive"),
            Violation::Length {
                field,
                expected,
                found,
            } => write!(f, "{field} has length {found}, expected {expected}"),
            Violation::Shape {
                field,
                expected,
                found,
            } => write!(
                f,
                "{field} has shape {}x{}, expected {}x{}",
                found.0, found.1, expected.0, expected.1
            ),
            Violation::NonFinite { field, row, col } => {
                write!(f, "{field} must be finite: {field}[{}][{}]", row + 1, col + 1)
            }
            Violation::Negative {
                field,
                row,
                col,
                value,
            } => write!(
                f,
                "{field} must be nonnegative: {field}[{}][{}] = {value}",
                row + 1,
                col + 1
            ),
            Violation::NonzeroDiagonal { agent, value } => write!(
                f,
                "access_costs diagonal must be zero: c[{0}][{0}] = {value}",
                agent + 1
            ),
            Violation::Asymmetric {
                i,
                j,
                forward,
                backward,
            } => write!(
                f,
                "access_costs must be symmetric at ({},{}): c[{0}][{1}] = {forward} but c[{1}][{0}] = {backward}",
                i + 1,
                j + 1
            ),
            Violation::ZeroCache { agent } => {
                write!(f, "cache_sizes[{}] = 0: every agent needs at least one slot", agent + 1)
            }
            Violation::Infeasible { total_cache, k } => write!(f, "Σu_i={total_cache} < k={k}"),
            Violation::EmptySetDistance { value, max_cost } => write!(
                f,
                "empty_set_distance {value} must be finite and exceed the largest access cost {max_cost}"
            ),
        }
    }
}

/// Default penalty distance to an empty holder set: `2·max c + 1`.
pub fn default_empty_set_distance(access_costs: &Matrix) -> f64 {
    let max = access_costs
        .as_slice()
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(0.0, f64::max);
    2.0 * max + 1.0
}

impl Instance {
    /// Builds an instance and rejects it if any invariant fails.
    pub fn new(
        cache_sizes: Vec<u32>,
        access_costs: Matrix,
        demands: Matrix,
        placement_fees: Matrix,
        empty_set_distance: Option<f64>,
    ) -> Result<Self> {
        let inst = Instance {
            n: cache_sizes.len(),
            k: demands.cols(),
            empty_set_distance: empty_set_distance
                .unwrap_or_else(|| default_empty_set_distance(&access_costs)),
            cache_sizes,
            access_costs,
            demands,
            placement_fees,
        };
        inst.check()?;
        Ok(inst)
    }

    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    /// Lists every invariant violation. Empty iff the instance is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (n, k) = (self.n, self.k);
        if n == 0 {
            out.push(Violation::NoAgents);
        }
        if k == 0 {
            out.push(Violation::NoResources);
        }
        if self.cache_sizes.len() != n {
            out.push(Violation::Length {
                field: "cache_sizes",
                expected: n,
                found: self.cache_sizes.len(),
            });
        }

        let costs_ok = check_matrix(&mut out, "access_costs", &self.access_costs, (n, n));
        check_matrix(&mut out, "demands", &self.demands, (n, k));
        check_matrix(&mut out, "placement_fees", &self.placement_fees, (n, k));

        if costs_ok {
            let c = &self.access_costs;
            for i in 0..n {
                if c[(i, i)] != 0.0 && c[(i, i)].is_finite() {
                    out.push(Violation::NonzeroDiagonal {
                        agent: i,
                        value: c[(i, i)],
                    });
                }
                for j in i + 1..n {
                    if c[(i, j)] != c[(j, i)] && c[(i, j)].is_finite() && c[(j, i)].is_finite() {
                        out.push(Violation::Asymmetric {
                            i,
                            j,
                            forward: c[(i, j)],
                            backward: c[(j, i)],
                        });
                    }
                }
            }
            let max_cost = c.as_slice().iter().copied().fold(0.0, f64::max);
            if !(self.empty_set_distance.is_finite() && self.empty_set_distance > max_cost) {
                out.push(Violation::EmptySetDistance {
                    value: self.empty_set_distance,
                    max_cost,
                });
            }
        }

        for (agent, &u) in self.cache_sizes.iter().enumerate() {
            if u == 0 {
                out.push(Violation::ZeroCache { agent });
            }
        }
        let total: u64 = self.cache_sizes.iter().map(|&u| u as u64).sum();
        if k > 0 && total < k as u64 {
            out.push(Violation::Infeasible {
                total_cache: total,
                k,
            });
        }
        out
    }

    /// Total number of cache slots, i.e. the agent count after reduction.
    pub fn total_cache(&self) -> usize {
        self.cache_sizes.iter().map(|&u| u as usize).sum()
    }

    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.access_costs[(i, j)]
    }

    #[inline]
    pub fn demand(&self, j: usize, l: usize) -> f64 {
        self.demands[(j, l)]
    }

    #[inline]
    pub fn fee(&self, i: usize, l: usize) -> f64 {
        self.placement_fees[(i, l)]
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, serde_json::Error> {
        let file: InstanceFile = serde_json::from_str(s)?;
        let empty_set_distance = file
            .empty_set_distance
            .unwrap_or_else(|| default_empty_set_distance(&file.access_costs));
        Ok(Instance {
            n: file.n,
            k: file.k,
            cache_sizes: file.cache_sizes,
            access_costs: file.access_costs,
            demands: file.demands,
            placement_fees: file.placement_fees,
            empty_set_distance,
        })
    }

    pub fn to_json_string(&self) -> String {
        let file = InstanceFile {
            n: self.n,
            k: self.k,
            cache_sizes: self.cache_sizes.clone(),
            access_costs: self.access_costs.clone(),
            demands: self.demands.clone(),
            placement_fees: self.placement_fees.clone(),
            empty_set_distance: Some(self.empty_set_distance),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("instance serializes");
        s.push('\n');
        s
    }

    /// Reads and validates an instance file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let inst = Instance::from_json_str(&text).map_err(|source| Error::Parse {
            path: path.to_owned(),
            source,
        })?;
        inst.check()?;
        Ok(inst)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }
}

fn check_matrix(
    out: &mut Vec<Violation>,
    field: &'static str,
    m: &Matrix,
    expected: (usize, usize),
) -> bool {
    // An empty row list deserializes as 0x0 regardless of the column count.
    let found = if m.rows() == 0 {
        (0, expected.1)
    } else {
        m.shape()
    };
    if found != expected {
        out.push(Violation::Shape {
            field,
            expected,
            found: m.shape(),
        });
        return false;
    }
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let value = m[(r, c)];
            if !value.is_finite() {
                out.push(Violation::NonFinite {
                    field,
                    row: r,
                    col: c,
                });
            } else if value < 0.0 {
                out.push(Violation::Negative {
                    field,
                    row: r,
                    col: c,
                    value,
                });
            }
        }
    }
    true
}

/// A valid instance in which every agent caches exactly one resource,
/// together with the map from each unit agent back to its source agent.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitInstance {
    instance: Instance,
    origin: Vec<usize>,
}

impl UnitInstance {
    /// Wraps an instance that already has unit caches.
    pub fn from_unit(instance: Instance) -> Result<Self> {
        instance.check()?;
        if let Some(i) = instance.cache_sizes.iter().position(|&u| u != 1) {
            return Err(Error::arg(format!(
                "agent {} has cache size {}; reduce the instance first",
                i + 1,
                instance.cache_sizes[i]
            )));
        }
        let origin = (0..instance.n).collect();
        Ok(UnitInstance { instance, origin })
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn into_instance(self) -> Instance {
        self.instance
    }

    /// Source agent of unit agent `a`.
    pub fn origin(&self, a: usize) -> usize {
        self.origin[a]
    }

    pub fn origins(&self) -> &[usize] {
        &self.origin
    }

    /// Unit agents that are copies of source agent `i`. Copies are contiguous.
    pub fn copies_of(&self, i: usize) -> Range<usize> {
        let start = self.origin.partition_point(|&o| o < i);
        let end = self.origin.partition_point(|&o| o <= i);
        start..end
    }

    /// Maps per-agent cache contents of the source instance to the matched
    /// unit allocation: copy `r` of agent `i` holds the `r`-th resource of `i`.
    pub fn expand(&self, contents: &CacheContents) -> Result<Allocation> {
        let sources = self.origin.last().map_or(0, |&o| o + 1);
        if contents.0.len() != sources {
            return Err(Error::arg(format!(
                "cache contents list {} agents, source instance has {sources}",
                contents.0.len()
            )));
        }
        let mut x = Vec::with_capacity(self.instance.n);
        for (i, slots) in contents.0.iter().enumerate() {
            if slots.len() != self.copies_of(i).len() {
                return Err(Error::arg(format!(
                    "agent {} holds {} resources but has {} slots",
                    i + 1,
                    slots.len(),
                    self.copies_of(i).len()
                )));
            }
            x.extend_from_slice(slots);
        }
        Allocation::new(x, self.instance.k)
    }

    /// Inverse of [`UnitInstance::expand`].
    pub fn collapse(&self, alloc: &Allocation) -> CacheContents {
        let sources = self.origin.last().map_or(0, |&o| o + 1);
        let mut out = vec![Vec::new(); sources];
        for (a, &l) in alloc.as_slice().iter().enumerate() {
            out[self.origin[a]].push(l);
        }
        CacheContents(out)
    }
}

impl Deref for UnitInstance {
    type Target = Instance;

    fn deref(&self) -> &Instance {
        &self.instance
    }
}

/// Resources held by each agent of a capacitated instance, one entry per
/// cache slot. Repeats are allowed; every slot is filled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheContents(pub Vec<Vec<usize>>);

/// Replaces every agent of cache size `u` by `u` collocated unit agents,
/// each with demand `w/u` and the original fee vector.
pub fn reduce_to_unit_cache(inst: &Instance) -> Result<UnitInstance> {
    inst.check()?;
    let origin: Vec<usize> = inst
        .cache_sizes
        .iter()
        .enumerate()
        .flat_map(|(i, &u)| std::iter::repeat_n(i, u as usize))
        .collect();
    let m = origin.len();
    let k = inst.k;
    let access_costs = Matrix::from_fn(m, m, |a, b| inst.cost(origin[a], origin[b]));
    let demands = Matrix::from_fn(m, k, |a, l| {
        inst.demand(origin[a], l) / inst.cache_sizes[origin[a]] as f64
    });
    let placement_fees = Matrix::from_fn(m, k, |a, l| inst.fee(origin[a], l));
    let instance = Instance {
        n: m,
        k,
        cache_sizes: vec![1; m],
        access_costs,
        demands,
        placement_fees,
        empty_set_distance: inst.empty_set_distance,
    };
    debug_assert!(instance.validate().is_empty());
    Ok(UnitInstance { instance, origin })
}

/// Encodes an uncapacitated facility location instance as a two-resource
/// placement instance: agents caching resource 1 are the open facilities,
/// resource 2 is a free dummy nobody requests.
pub fn embed_uflp(facility_fees: &[f64], access_costs: &Matrix) -> Result<Instance> {
    let n = facility_fees.len();
    if access_costs.shape() != (n, n) {
        return Err(Error::arg(format!(
            "access_costs is {}x{} but there are {n} facilities",
            access_costs.rows(),
            access_costs.cols()
        )));
    }
    let demands = Matrix::from_fn(n, 2, |_, l| if l == 0 { 1.0 } else { 0.0 });
    let placement_fees = Matrix::from_fn(n, 2, |i, l| if l == 0 { facility_fees[i] } else { 0.0 });
    Instance::new(
        vec![1; n],
        access_costs.clone(),
        demands,
        placement_fees,
        None,
    )
}

/// Parameters of [`gen_random`]. Ranges are closed intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n: usize,
    pub k: usize,
    pub cost_range: (f64, f64),
    pub demand_range: (f64, f64),
    pub fee_range: (f64, f64),
    pub cache_range: (u32, u32),
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            n: 4,
            k: 2,
            cost_range: (0.0, 10.0),
            demand_range: (0.0, 1.0),
            fee_range: (0.0, 1.0),
            cache_range: (1, 1),
        }
    }
}

impl GenParams {
    pub fn unit(n: usize, k: usize) -> Self {
        GenParams {
            n,
            k,
            ..Default::default()
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
        return Err(Error::arg(format!(
            "{name} [{lo}, {hi}] must satisfy 0 <= lo <= hi < inf"
        )));
    }
    Ok(())
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws a random valid instance. The same seed and parameters always give
/// a bit-identical instance.
pub fn gen_random(seed: u64, params: &GenParams) -> Result<Instance> {
    let GenParams { n, k, .. } = *params;
    if n == 0 || k == 0 {
        return Err(Error::arg("n and k must be positive"));
    }
    check_range("cost_range", params.cost_range)?;
    check_range("demand_range", params.demand_range)?;
    check_range("fee_range", params.fee_range)?;
    let (umin, umax) = params.cache_range;
    if umin == 0 || umin > umax {
        return Err(Error::arg(format!(
            "cache_range [{umin}, {umax}] must satisfy 1 <= lo <= hi"
        )));
    }
    if (n as u64) * (umax as u64) < k as u64 {
        return Err(Error::arg(format!(
            "{n} agents with at most {umax} slots cannot hold {k} resources"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut access_costs = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let c = draw(&mut rng, params.cost_range);
            access_costs[(i, j)] = c;
            access_costs[(j, i)] = c;
        }
    }
    let demands = Matrix::from_fn(n, k, |_, _| draw(&mut rng, params.demand_range));
    let placement_fees = Matrix::from_fn(n, k, |_, _| draw(&mut rng, params.fee_range));
    let cache_sizes = loop {
        let u: Vec<u32> = (0..n).map(|_| rng.random_range(umin..=umax)).collect();
        if u.iter().map(|&x| x as u64).sum::<u64>() >= k as u64 {
            break u;
        }
    };
    Instance::new(cache_sizes, access_costs, demands, placement_fees, None)
}
