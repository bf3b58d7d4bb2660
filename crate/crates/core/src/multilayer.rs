//! Multi-layer rate-relevance region: bound evaluation, membership search,
//! successive-refinability checks and the independent-pair certificate.
//!
//! A layer problem is a joint `p(x, y_1, …, y_L)`. An auxiliary
//! `p(u_1, …, u_L | x)` yields the rate bounds `I(X; U_l, …, U_L)` and the
//! relevance bounds `I(Y_l; U_l, …, U_L)`; a tuple is in the region when
//! some auxiliary meets all of them.
//!
//! Searches here can only ever exhibit witnesses. A failed search is
//! reported as "no witness found at this search budget", never as proof of
//! non-membership; the one exception is [`counterexample_certify`], whose
//! exhaustive grid is backed by an analytic floor.

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::Rng;
use rayon::prelude::*;

use crate::closed_form::{bsc_cascade_sr_witness, BscProblem};
use crate::error::{Error, Result};
use crate::oracle::{compositions, random_channel, rr_oracle, stream_rng, OracleConfig, PairModel};
use crate::prob::{mutual_information, Axis, Channel, JointDist, ProbVec};

/// Tolerance on each bound for a membership witness.
pub const MEMBERSHIP_TOL: f64 = 1e-4;
/// Tolerance on each condition for a successive-refinement witness.
pub const SR_TOL: f64 = 1e-3;
/// Slack on the rate conditions of the certificate grid.
pub const CERTIFY_RATE_SLACK: f64 = 1e-3;
/// Budget on the number of cells of a membership grid.
const GRID_BUDGET: usize = 2_000_000;
/// Target margin inside the tolerance used by the local polish.
const POLISH_MARGIN: f64 = 2e-5;

/// Joint of an observation `x` and hidden layers `y1..yL`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerProblem {
    joint: JointDist,
}

impl LayerProblem {
    /// Wraps a joint whose axes are named `x, y1, …, yL` in that order.
    pub fn new(joint: JointDist) -> Result<Self> {
        let axes = joint.axes();
        if axes.len() < 2 {
            return Err(Error::Usage("need an x axis and at least one layer".into()));
        }
        for (i, a) in axes.iter().enumerate() {
            let want = if i == 0 { "x".to_string() } else { format!("y{i}") };
            if a.name != want {
                return Err(Error::Usage(format!(
                    "axis {i} is named '{}', expected '{want}'",
                    a.name
                )));
            }
        }
        Ok(Self { joint })
    }

    /// Layers drawn independently through one channel each, given `x`.
    pub fn from_channels(source: &ProbVec, channels: &[Channel]) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Usage("need at least one layer".into()));
        }
        let mut j = JointDist::from_source("x", source);
        for (l, ch) in channels.iter().enumerate() {
            j = j.extend(&format!("y{}", l + 1), "x", ch)?;
        }
        Self::new(j)
    }

    /// Uniform binary source observed through one BSC per layer.
    pub fn bsc(crossovers: &[f64]) -> Result<Self> {
        let chans = crossovers.iter().map(|&p| Channel::bsc(p)).collect::<Result<Vec<_>>>()?;
        Self::from_channels(&ProbVec::uniform(2)?, &chans)
    }

    /// `X = (X_1, X_2)` independent uniform bits, encoded as `x = 2 x_1 + x_2`,
    /// with `Y_1 = X_1` and `Y_2 = X_2`.
    pub fn independent_pair() -> Self {
        let y1 = Channel::new(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
        let y2 = Channel::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        Self::from_channels(&ProbVec::uniform(4).expect("uniform"), &[y1.expect("y1"), y2.expect("y2")])
            .expect("valid construction")
    }

    pub fn joint(&self) -> &JointDist {
        &self.joint
    }

    pub fn layers(&self) -> usize {
        self.joint.axes().len() - 1
    }

    pub fn x_size(&self) -> usize {
        self.joint.axes()[0].size
    }

    /// Two-axis marginal `p(x, y_l)` (layers are 1-based), axes `x, y`.
    pub fn pair(&self, layer: usize) -> Result<JointDist> {
        self.check_layer(layer)?;
        let name = format!("y{layer}");
        let table = self.joint.marginal(&["x", &name])?;
        let ny = self.joint.axis_size(&name)?;
        JointDist::new(vec![Axis::new("x", self.x_size()), Axis::new("y", ny)], table)
    }

    /// `I(X; Y_l)`, the largest achievable relevance of layer `l`.
    pub fn relevance_cap(&self, layer: usize) -> Result<f64> {
        self.check_layer(layer)?;
        mutual_information(&self.joint, &["x"], &[&format!("y{layer}")])
    }

    /// The crossovers when `X` is a uniform bit and every layer sees it
    /// through a BSC with crossover at most 1/2.
    pub fn as_bsc(&self) -> Option<BscProblem> {
        if self.x_size() != 2 {
            return None;
        }
        let mut crossovers = Vec::with_capacity(self.layers());
        for l in 1..=self.layers() {
            let t = self.pair(l).ok()?;
            if t.axes()[1].size != 2 {
                return None;
            }
            let t = t.table();
            let p = 2.0 * t[1];
            let sym = [t[0] + t[1] - 0.5, t[2] + t[3] - 0.5, t[1] - t[2], t[0] - t[3]];
            if sym.iter().any(|d| d.abs() > 1e-12) || p > 0.5 {
                return None;
            }
            crossovers.push(p.clamp(0.0, 0.5));
        }
        BscProblem::new(crossovers).ok()
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.layers() {
            return Err(Error::Usage(format!(
                "layer {layer} outside 1..={}",
                self.layers()
            )));
        }
        Ok(())
    }

    fn pair_models(&self) -> Result<Vec<PairModel>> {
        (1..=self.layers())
            .map(|l| PairModel::from_joint(&self.pair(l)?))
            .collect()
    }
}

/// Rates and relevances of a candidate point of the region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionTuple {
    rates: Vec<f64>,
    relevances: Vec<f64>,
}

impl RegionTuple {
    /// Rates must be nonnegative and nonincreasing; relevances nonnegative.
    pub fn new(rates: Vec<f64>, relevances: Vec<f64>) -> Result<Self> {
        if rates.len() != relevances.len() || rates.is_empty() {
            return Err(Error::Usage(format!(
                "{} rates and {} relevances",
                rates.len(),
                relevances.len()
            )));
        }
        if let Some(v) = rates.iter().chain(&relevances).find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain {
                name: "tuple entry",
                value: *v,
                domain: "[0, inf)",
            });
        }
        if let Some(l) = rates.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::Usage(format!(
                "rates must be nonincreasing, but R{} = {} < R{} = {}",
                l + 1,
                rates[l],
                l + 2,
                rates[l + 1]
            )));
        }
        Ok(Self { rates, relevances })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn relevances(&self) -> &[f64] {
        &self.relevances
    }

    pub fn layers(&self) -> usize {
        self.rates.len()
    }
}

/// `p(u_1, …, u_L | x)` as one channel onto the product alphabet, decoded
/// row-major (`u_1` slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct AuxGeneral {
    channel: Channel,
    sizes: Vec<usize>,
}

impl AuxGeneral {
    pub fn new(channel: Channel, sizes: Vec<usize>) -> Result<Self> {
        let prod: usize = sizes.iter().product();
        if sizes.is_empty() || prod != channel.outputs() {
            return Err(Error::Usage(format!(
                "channel has {} outputs but aux sizes {sizes:?} need {prod}",
                channel.outputs()
            )));
        }
        Ok(Self { channel, sizes })
    }

    /// Every `U_l` constant.
    pub fn constant(x_size: usize, layers: usize) -> Self {
        Self {
            channel: Channel::constant(x_size, 1),
            sizes: vec![1; layers],
        }
    }

    /// Every `U_l` equal to `X`.
    pub fn identity(x_size: usize, layers: usize) -> Self {
        let outputs = x_size.pow(layers as u32);
        let mut rows = vec![0.0; x_size * outputs];
        for x in 0..x_size {
            let idx = (0..layers).fold(0, |k, _| k * x_size + x);
            rows[x * outputs + idx] = 1.0;
        }
        Self {
            channel: Channel::from_flat(x_size, outputs, rows).expect("one-hot rows"),
            sizes: vec![x_size; layers],
        }
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> usize {
        self.sizes.len()
    }
}

/// Forward chain `p(u_1|x), p(u_2|u_1), …, p(u_L|u_{L-1})`; the Markov
/// structure `U_L − ⋯ − U_1 − X` holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxChain {
    stages: Vec<Channel>,
}

impl AuxChain {
    pub fn new(stages: Vec<Channel>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Usage("a chain needs at least one stage".into()));
        }
        for (l, w) in stages.windows(2).enumerate() {
            if w[1].inputs() != w[0].outputs() {
                return Err(Error::Usage(format!(
                    "stage {} has {} outputs but stage {} expects {} inputs",
                    l + 1,
                    w[0].outputs(),
                    l + 2,
                    w[1].inputs()
                )));
            }
        }
        Ok(Self { stages })
    }

    /// `U_l = X ⊕ M_1 ⊕ ⋯ ⊕ M_l` with independent `M_l ~ Bern(m_l)`.
    pub fn bsc_cascade(steps: &[f64]) -> Result<Self> {
        Self::new(steps.iter().map(|&m| Channel::bsc(m)).collect::<Result<_>>()?)
    }

    pub fn stages(&self) -> &[Channel] {
        &self.stages
    }

    pub fn layers(&self) -> usize {
        self.stages.len()
    }

    /// Cumulative channels `p(u_l | x)`.
    pub fn marginal_channels(&self) -> Vec<Channel> {
        let mut out: Vec<Channel> = Vec::with_capacity(self.stages.len());
        for s in &self.stages {
            let next = match out.last() {
                Some(prev) => prev.then(s).expect("composable by construction"),
                None => s.clone(),
            };
            out.push(next);
        }
        out
    }

    /// The same auxiliary as one channel onto `U_1 × ⋯ × U_L`.
    pub fn to_general(&self) -> AuxGeneral {
        let sizes: Vec<usize> = self.stages.iter().map(|s| s.outputs()).collect();
        let nx = self.stages[0].inputs();
        let total: usize = sizes.iter().product();
        let mut rows = Vec::with_capacity(nx * total);
        for x in 0..nx {
            let mut cur: Vec<f64> = self.stages[0].row(x).to_vec();
            for s in &self.stages[1..] {
                let mut next = Vec::with_capacity(cur.len() * s.outputs());
                for (k, &w) in cur.iter().enumerate() {
                    let prev = k % s.inputs();
                    next.extend(s.row(prev).iter().map(|v| w * v));
                }
                cur = next;
            }
            rows.extend(cur);
        }
        AuxGeneral {
            channel: Channel::from_unnormalized(nx, total, rows),
            sizes,
        }
    }
}

/// Per-layer bounds of one auxiliary.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionBounds {
    /// `I(X; U_l, …, U_L)`.
    pub rates: Vec<f64>,
    /// `I(Y_l; U_l, …, U_L)`.
    pub relevances: Vec<f64>,
}

impl RegionBounds {
    /// Largest bound violation against a tuple (0 when every bound holds).
    pub fn violation(&self, tuple: &RegionTuple) -> f64 {
        let r = self.rates.iter().zip(tuple.rates()).map(|(i, r)| i - r);
        let m = self.relevances.iter().zip(tuple.relevances()).map(|(j, m)| m - j);
        r.chain(m).fold(0.0, f64::max)
    }
}

/// Rate and relevance bounds of `aux`, evaluated on the augmented joint
/// `p(x, y_1..y_L) · p(u_1..u_L | x)`.
pub fn region_bounds(problem: &LayerProblem, aux: &AuxGeneral) -> Result<RegionBounds> {
    let layers = problem.layers();
    if aux.layers() != layers || aux.channel.inputs() != problem.x_size() {
        return Err(Error::Usage(format!(
            "aux for {} layers over {} inputs, problem has {} layers over {}",
            aux.layers(),
            aux.channel.inputs(),
            layers,
            problem.x_size()
        )));
    }
    let names: Vec<String> = (1..=layers).map(|l| format!("u{l}")).collect();
    let new_axes: Vec<(&str, usize)> = names.iter().map(String::as_str).zip(aux.sizes.iter().copied()).collect();
    let full = problem.joint.extend_split(&new_axes, "x", &aux.channel)?;
    let mut rates = Vec::with_capacity(layers);
    let mut relevances = Vec::with_capacity(layers);
    for l in 0..layers {
        let tail: Vec<&str> = names[l..].iter().map(String::as_str).collect();
        rates.push(mutual_information(&full, &["x"], &tail)?);
        relevances.push(mutual_information(&full, &[&format!("y{}", l + 1)], &tail)?);
    }
    Ok(RegionBounds { rates, relevances })
}

/// Fast bounds of a flat product-alphabet channel through the pair models.
fn fast_bounds(models: &[PairModel], sizes: &[usize], q: &[f64]) -> RegionBounds {
    let nx = models[0].nx;
    let total: usize = sizes.iter().product();
    let mut rates = Vec::with_capacity(sizes.len());
    let mut relevances = Vec::with_capacity(sizes.len());
    for (l, m) in models.iter().enumerate() {
        let tail: usize = sizes[l..].iter().product();
        let mut ql = vec![0.0; nx * tail];
        for x in 0..nx {
            for k in 0..total {
                ql[x * tail + k % tail] += q[x * total + k];
            }
        }
        let (r, j) = m.evaluate(&ql, tail);
        rates.push(r);
        relevances.push(j);
    }
    RegionBounds { rates, relevances }
}

/// How the exhaustive membership grid is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridMode {
    /// Grid when `L = 2` and `X` is binary or ternary.
    #[default]
    Auto,
    /// Grid demanded; a budget error when it is out of reach.
    Required,
    Off,
}

/// Settings for [`membership`] and [`sr_check`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchConfig {
    pub oracle: OracleConfig,
    pub grid: GridMode,
}

/// Outcome of a membership search.
#[derive(Debug, Clone, PartialEq)]
pub enum Membership {
    /// A verified witness; `bounds` come from [`region_bounds`].
    Member { witness: AuxGeneral, bounds: RegionBounds },
    /// No witness found at this search budget. `infeasible` is set when a
    /// relevance exceeds `I(X; Y_l)`, which no auxiliary can reach.
    NotFound { infeasible: bool, best_violation: f64 },
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member { .. })
    }
}

fn softmax_rows(theta: &[f64], rows: usize, cols: usize, out: &mut Vec<f64>) {
    // cols - 1 free logits per row, the last fixed at 0
    for r in 0..rows {
        let t = &theta[r * (cols - 1)..(r + 1) * (cols - 1)];
        let top = t.iter().copied().fold(0.0, f64::max);
        let start = out.len();
        out.extend(t.iter().map(|v| (v - top).exp()));
        out.push((-top).exp());
        let s: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|v| *v /= s);
    }
}

fn logits_of(rows: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() / cols * (cols - 1));
    for row in rows.chunks(cols) {
        let last = row[cols - 1].max(1e-12).ln();
        out.extend(row[..cols - 1].iter().map(|v| v.max(1e-12).ln() - last));
    }
    out
}

struct Objective<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(p))
    }
}

/// Nelder-Mead from `x0` with an axis-aligned initial simplex.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: Vec<f64>, step: f64, iters: u64) -> Vec<f64> {
    if x0.is_empty() {
        return x0;
    }
    let mut simplex = vec![x0.clone()];
    for i in 0..x0.len() {
        let mut v = x0.clone();
        v[i] += step;
        simplex.push(v);
    }
    let solver = match NelderMead::new(simplex).with_sd_tolerance(1e-14) {
        Ok(s) => s,
        Err(_) => return x0,
    };
    match Executor::new(Objective(f), solver)
        .configure(|s| s.max_iters(iters))
        .run()
    {
        Ok(res) => res.state.best_param.unwrap_or(x0),
        Err(_) => x0,
    }
}

fn hinge2(v: f64) -> f64 {
    let h = v.max(0.0);
    h * h
}

/// Local polish of a product-alphabet channel against the tuple bounds.
fn polish_general(models: &[PairModel], sizes: &[usize], tuple: &RegionTuple, start: &[f64]) -> Vec<f64> {
    let nx = models[0].nx;
    let total: usize = sizes.iter().product();
    if total < 2 {
        return start.to_vec();
    }
    let f = |theta: &[f64]| {
        let mut q = Vec::with_capacity(nx * total);
        softmax_rows(theta, nx, total, &mut q);
        let b = fast_bounds(models, sizes, &q);
        let mut pen = 0.0;
        for l in 0..sizes.len() {
            pen += hinge2(b.rates[l] - tuple.rates[l] + POLISH_MARGIN);
            pen += hinge2(tuple.relevances[l] - b.relevances[l] + POLISH_MARGIN);
        }
        pen
    };
    let mut theta = logits_of(start, total);
    for step in [1.0, 0.1, 0.01] {
        theta = nelder_mead(f, theta, step, 3000);
    }
    let mut q = Vec::with_capacity(nx * total);
    softmax_rows(&theta, nx, total, &mut q);
    q
}

/// Searches for an auxiliary meeting every bound of `tuple` within
/// [`MEMBERSHIP_TOL`].
pub fn membership(problem: &LayerProblem, tuple: &RegionTuple, search: &SearchConfig) -> Result<Membership> {
    membership_with_hints(problem, tuple, search, &[])
}

/// [`membership`] with extra starting auxiliaries tried before the search.
pub fn membership_with_hints(
    problem: &LayerProblem,
    tuple: &RegionTuple,
    search: &SearchConfig,
    hints: &[AuxGeneral],
) -> Result<Membership> {
    let layers = problem.layers();
    if tuple.layers() != layers {
        return Err(Error::Usage(format!(
            "tuple has {} layers, problem has {layers}",
            tuple.layers()
        )));
    }
    search.oracle.validate()?;
    let nx = problem.x_size();
    let grid_ok = layers == 2 && nx <= 3;
    if search.grid == GridMode::Required && !grid_ok {
        return Err(Error::Budget(format!(
            "exhaustive membership grid needs L = 2 and |X| <= 3 (got L = {layers}, |X| = {nx})"
        )));
    }

    for l in 1..=layers {
        if tuple.relevances[l - 1] > problem.relevance_cap(l)? + 1e-9 {
            return Ok(Membership::NotFound {
                infeasible: true,
                best_violation: tuple.relevances[l - 1] - problem.relevance_cap(l)?,
            });
        }
    }
    let verify = |aux: AuxGeneral| -> Result<Option<Membership>> {
        let bounds = region_bounds(problem, &aux)?;
        Ok((bounds.violation(tuple) <= MEMBERSHIP_TOL).then_some(Membership::Member { witness: aux, bounds }))
    };
    if tuple.relevances.iter().all(|&m| m == 0.0) {
        if let Some(m) = verify(AuxGeneral::constant(nx, layers))? {
            return Ok(m);
        }
    }

    let models = problem.pair_models()?;
    // (sizes, flat channel) starting points, in priority order
    let mut starts: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for h in hints {
        if h.layers() == layers && h.channel.inputs() == nx {
            starts.push((h.sizes.clone(), h.channel.as_flat().to_vec()));
        }
    }
    if let Some(bsc) = problem.as_bsc() {
        if let Ok(steps) = bsc_cascade_sr_witness(&bsc, &tuple.relevances) {
            let aux = AuxChain::bsc_cascade(&steps)?.to_general();
            starts.push((aux.sizes.clone(), aux.channel.as_flat().to_vec()));
        }
    }
    if grid_ok && search.grid != GridMode::Off {
        starts.extend(membership_grid(&models, tuple).into_iter().map(|q| (vec![2, 2], q)));
    }
    let k = search.oracle.aux_size(nx);
    let sizes = vec![k; layers];
    let total: usize = sizes.iter().product();
    for r in 0..search.oracle.restarts {
        let mut rng = stream_rng(search.oracle.seed, 0x4d45_4d42, r as u64);
        starts.push((sizes.clone(), random_channel(&mut rng, nx, total)));
    }

    let mut best_violation = f64::INFINITY;
    for (sizes, q) in &starts {
        let b = fast_bounds(&models, sizes, q);
        if b.violation(tuple) <= MEMBERSHIP_TOL / 2.0 {
            let aux = AuxGeneral::new(Channel::from_unnormalized(nx, q.len() / nx, q.clone()), sizes.clone())?;
            if let Some(m) = verify(aux)? {
                return Ok(m);
            }
        }
    }
    // polish in parallel, keep the first verified start in priority order
    let polished: Vec<(Vec<usize>, Vec<f64>)> = starts
        .par_iter()
        .map(|(sizes, q)| (sizes.clone(), polish_general(&models, sizes, tuple, q)))
        .collect();
    for (sizes, q) in polished {
        let total = q.len() / nx;
        let aux = AuxGeneral::new(Channel::from_unnormalized(nx, total, q), sizes)?;
        let bounds = region_bounds(problem, &aux)?;
        let v = bounds.violation(tuple);
        best_violation = best_violation.min(v);
        if v <= MEMBERSHIP_TOL {
            return Ok(Membership::Member { witness: aux, bounds });
        }
    }
    Ok(Membership::NotFound {
        infeasible: false,
        best_violation,
    })
}

/// Grid over `X → U_1 × U_2` with binary `U_l`; returns the few cells with
/// the smallest violation.
fn membership_grid(models: &[PairModel], tuple: &RegionTuple) -> Vec<Vec<f64>> {
    let nx = models[0].nx;
    let sizes = [2usize, 2];
    let mut res = 40;
    while res > 1 && compositions(res, 4).len().pow(nx as u32) > GRID_BUDGET {
        res -= 1;
    }
    let simplex = compositions(res, 4);
    let cells = simplex.len().pow(nx as u32);
    let scale = res as f64;
    let mut scored: Vec<(f64, usize)> = (0..cells)
        .into_par_iter()
        .map(|cell| {
            let q = grid_channel(&simplex, cell, nx, scale);
            (fast_bounds(models, &sizes, &q).violation(tuple), cell)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored
        .iter()
        .take(8)
        .map(|&(_, cell)| grid_channel(&simplex, cell, nx, scale))
        .collect()
}

fn grid_channel(simplex: &[Vec<usize>], mut cell: usize, nx: usize, scale: f64) -> Vec<f64> {
    let mut q = Vec::with_capacity(nx * simplex[0].len());
    for _ in 0..nx {
        let row = &simplex[cell % simplex.len()];
        cell /= simplex.len();
        q.extend(row.iter().map(|&v| v as f64 / scale));
    }
    q
}

/// Result of a successive-refinability check.
#[derive(Debug, Clone, PartialEq)]
pub struct SrReport {
    pub refinable: bool,
    /// Present exactly when `refinable`.
    pub witness: Option<AuxChain>,
    /// `(I(X; U_l), I(Y_l; U_l))` of the best chain found.
    pub achieved: Vec<(f64, f64)>,
    /// Smallest total constraint shortfall found; zero when refinable.
    pub gap: f64,
    /// Number of chains examined.
    pub chains_tried: usize,
}

struct ChainEval {
    achieved: Vec<(f64, f64)>,
    shortfall: f64,
}

fn eval_chain(models: &[PairModel], stages: &[Vec<f64>], sizes: &[usize], rates: &[f64], mu: &[f64]) -> ChainEval {
    let nx = models[0].nx;
    let mut cur = stages[0].clone();
    let mut achieved = Vec::with_capacity(sizes.len());
    let mut shortfall = 0.0;
    for l in 0..sizes.len() {
        if l > 0 {
            let (a, b) = (sizes[l - 1], sizes[l]);
            let mut next = vec![0.0; nx * b];
            for x in 0..nx {
                for u in 0..a {
                    let w = cur[x * a + u];
                    if w != 0.0 {
                        for v in 0..b {
                            next[x * b + v] += w * stages[l][u * b + v];
                        }
                    }
                }
            }
            cur = next;
        }
        let (r, j) = models[l].evaluate(&cur, sizes[l]);
        shortfall += (r - rates[l]).max(0.0) + (mu[l] - j).max(0.0);
        achieved.push((r, j));
    }
    ChainEval { achieved, shortfall }
}

fn polish_chain(models: &[PairModel], sizes: &[usize], rates: &[f64], mu: &[f64], start: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let nx = models[0].nx;
    let dims: Vec<(usize, usize)> = (0..sizes.len())
        .map(|l| (if l == 0 { nx } else { sizes[l - 1] }, sizes[l]))
        .collect();
    let unpack = |theta: &[f64]| -> Vec<Vec<f64>> {
        let mut off = 0;
        dims.iter()
            .map(|&(rows, cols)| {
                let mut st = Vec::with_capacity(rows * cols);
                if cols == 1 {
                    st.resize(rows, 1.0);
                } else {
                    softmax_rows(&theta[off..off + rows * (cols - 1)], rows, cols, &mut st);
                    off += rows * (cols - 1);
                }
                st
            })
            .collect()
    };
    let f = |theta: &[f64]| {
        let st = unpack(theta);
        let e = eval_chain(models, &st, sizes, rates, mu);
        e.achieved
            .iter()
            .enumerate()
            .map(|(l, (r, j))| hinge2(r - rates[l] + POLISH_MARGIN) + hinge2(mu[l] - j + POLISH_MARGIN))
            .sum::<f64>()
    };
    let mut theta: Vec<f64> = start
        .iter()
        .zip(&dims)
        .filter(|(_, d)| d.1 > 1)
        .flat_map(|(s, d)| logits_of(s, d.1))
        .collect();
    for step in [1.0, 0.1, 0.01] {
        theta = nelder_mead(f, theta, step, 3000);
    }
    unpack(&theta)
}

/// Checks whether the single-layer optima `(rr_values[l], mu[l])` are
/// jointly achievable by one nested chain `U_L − ⋯ − U_1 − X`.
pub fn sr_check(problem: &LayerProblem, mu: &[f64], rr_values: &[f64], search: &SearchConfig) -> Result<SrReport> {
    sr_check_with_hints(problem, mu, rr_values, search, &[])
}

/// [`sr_check`] with extra candidate chains tried first.
pub fn sr_check_with_hints(
    problem: &LayerProblem,
    mu: &[f64],
    rr_values: &[f64],
    search: &SearchConfig,
    hints: &[AuxChain],
) -> Result<SrReport> {
    let layers = problem.layers();
    if mu.len() != layers || rr_values.len() != layers {
        return Err(Error::Usage(format!(
            "{} relevances and {} rates for {layers} layers",
            mu.len(),
            rr_values.len()
        )));
    }
    search.oracle.validate()?;
    for l in 1..=layers {
        let cap = problem.relevance_cap(l)?;
        if !(mu[l - 1] >= 0.0) || mu[l - 1] > cap + 1e-9 {
            return Err(Error::Infeasible(format!(
                "mu{l} = {} exceeds I(X;Y{l}) = {cap}",
                mu[l - 1]
            )));
        }
    }
    let nx = problem.x_size();
    let models = problem.pair_models()?;

    let mut starts: Vec<(Vec<usize>, Vec<Vec<f64>>)> = Vec::new();
    let push_chain = |c: &AuxChain, starts: &mut Vec<(Vec<usize>, Vec<Vec<f64>>)>| {
        if c.layers() == layers && c.stages[0].inputs() == nx {
            starts.push((
                c.stages.iter().map(|s| s.outputs()).collect(),
                c.stages.iter().map(|s| s.as_flat().to_vec()).collect(),
            ));
        }
    };
    for h in hints {
        push_chain(h, &mut starts);
    }
    if let Some(bsc) = problem.as_bsc() {
        if let Ok(steps) = bsc_cascade_sr_witness(&bsc, mu) {
            push_chain(&AuxChain::bsc_cascade(&steps)?, &mut starts);
        }
    }
    let k = search.oracle.aux_size(nx);
    // first stage from the single-layer optimum of layer 1
    let first = rr_oracle(&problem.pair(1)?, mu[0], &search.oracle)?.achieving_channel;
    {
        let mut sizes = vec![first.outputs()];
        let mut stages = vec![first.as_flat().to_vec()];
        let mut rng = stream_rng(search.oracle.seed, 0x5352, 0);
        for _ in 1..layers {
            let prev = *sizes.last().expect("nonempty");
            stages.push(random_channel(&mut rng, prev, k));
            sizes.push(k);
        }
        starts.push((sizes, stages));
    }
    for r in 0..search.oracle.restarts {
        let mut rng = stream_rng(search.oracle.seed, 0x5352, r as u64 + 1);
        let mut sizes = Vec::with_capacity(layers);
        let mut stages = Vec::with_capacity(layers);
        let mut prev = nx;
        for _ in 0..layers {
            stages.push(random_channel(&mut rng, prev, k));
            sizes.push(k);
            prev = k;
        }
        starts.push((sizes, stages));
    }

    let chains_tried = starts.len();
    let judge = |sizes: &[usize], stages: Vec<Vec<f64>>| -> Result<(AuxChain, ChainEval)> {
        let mut prev = nx;
        let mut chans = Vec::with_capacity(layers);
        for (s, st) in sizes.iter().zip(stages) {
            chans.push(Channel::from_unnormalized(prev, *s, st));
            prev = *s;
        }
        let chain = AuxChain::new(chans)?;
        let flat: Vec<Vec<f64>> = chain.stages.iter().map(|c| c.as_flat().to_vec()).collect();
        let e = eval_chain(&models, &flat, sizes, rr_values, mu);
        Ok((chain, e))
    };
    let meets = |e: &ChainEval| {
        e.achieved
            .iter()
            .enumerate()
            .all(|(l, (r, j))| *r <= rr_values[l] + SR_TOL && *j >= mu[l] - SR_TOL)
    };

    let mut best: Option<(AuxChain, ChainEval)> = None;
    let consider = |cand: (AuxChain, ChainEval), best: &mut Option<(AuxChain, ChainEval)>| {
        if best.as_ref().is_none_or(|b| cand.1.shortfall < b.1.shortfall) {
            *best = Some(cand);
        }
    };
    let mut found: Option<(AuxChain, ChainEval)> = None;
    for (sizes, st) in &starts {
        let cand = judge(sizes, st.clone())?;
        if meets(&cand.1) {
            found = Some(cand);
            break;
        }
        consider(cand, &mut best);
    }
    if found.is_none() {
        let polished: Vec<(Vec<usize>, Vec<Vec<f64>>)> = starts
            .par_iter()
            .map(|(sizes, st)| (sizes.clone(), polish_chain(&models, sizes, rr_values, mu, st)))
            .collect();
        for (sizes, st) in polished {
            let cand = judge(&sizes, st)?;
            if meets(&cand.1) {
                found = Some(cand);
                break;
            }
            consider(cand, &mut best);
        }
    }

    if let Some((chain, _)) = found {
        // independent re-evaluation on the augmented joint; for a chain the
        // tail bounds reduce to I(X; U_l) and I(Y_l; U_l)
        let bounds = region_bounds(problem, &chain.to_general())?;
        let achieved: Vec<(f64, f64)> = bounds.rates.iter().copied().zip(bounds.relevances.iter().copied()).collect();
        for (l, &(r, j)) in achieved.iter().enumerate() {
            if j >= mu[l] - SR_TOL && r < rr_values[l] - SR_TOL {
                return Err(Error::InconsistentTargets(format!(
                    "layer {} reaches relevance {j} at rate {r}, below the supplied optimum {}",
                    l + 1,
                    rr_values[l]
                )));
            }
        }
        if achieved
            .iter()
            .enumerate()
            .all(|(l, &(r, j))| r <= rr_values[l] + SR_TOL && j >= mu[l] - SR_TOL)
        {
            return Ok(SrReport {
                refinable: true,
                witness: Some(chain),
                achieved,
                gap: 0.0,
                chains_tried,
            });
        }
    }
    let (_, e) = best.expect("at least one start");
    Ok(SrReport {
        refinable: false,
        witness: None,
        achieved: e.achieved,
        gap: e.shortfall,
        chains_tried,
    })
}

/// Certificate for the independent-pair problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedGap {
    /// Smallest relevance shortfall over every grid chain meeting the rate
    /// conditions.
    pub gap: f64,
    /// Analytic lower bound `μ_2 − 1e-3` on any chain's shortfall.
    pub floor: f64,
    pub resolution: usize,
    pub aux_sizes: (usize, usize),
    /// Chains whose first stage passed the rate condition.
    pub chains_evaluated: u64,
    /// Set for `μ_2 = 0`, where the single-layer optima nest trivially.
    pub degenerate: bool,
}

/// Exhaustive certificate that the independent-pair problem is not
/// successively refinable at `(μ_1, μ_2)`, with binary `U_1, U_2`.
pub fn counterexample_certify(mu1: f64, mu2: f64, resolution: usize) -> Result<CertifiedGap> {
    counterexample_certify_with(mu1, mu2, resolution, (2, 2))
}

/// [`counterexample_certify`] with explicit auxiliary sizes (each in 1..=5).
pub fn counterexample_certify_with(mu1: f64, mu2: f64, resolution: usize, aux_sizes: (usize, usize)) -> Result<CertifiedGap> {
    for (name, v) in [("mu1", mu1), ("mu2", mu2)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain {
                name,
                value: v,
                domain: "[0, 1]",
            });
        }
    }
    if mu2 > mu1 {
        return Err(Error::Usage(format!("need mu2 <= mu1, got mu1 = {mu1}, mu2 = {mu2}")));
    }
    let (a, b) = aux_sizes;
    if !(1..=5).contains(&a) || !(1..=5).contains(&b) {
        return Err(Error::Usage(format!("aux sizes {aux_sizes:?} outside 1..=5")));
    }
    if resolution == 0 {
        return Err(Error::Usage("resolution must be >= 1".into()));
    }
    if mu2 == 0.0 {
        return Ok(CertifiedGap {
            gap: 0.0,
            floor: 0.0,
            resolution,
            aux_sizes,
            chains_evaluated: 0,
            degenerate: true,
        });
    }
    let s1 = compositions(resolution, a);
    let s2 = compositions(resolution, b);
    let first_cells = s1.len().checked_pow(4).unwrap_or(usize::MAX);
    let second_cells = s2.len().checked_pow(a as u32).unwrap_or(usize::MAX);
    if first_cells.saturating_mul(second_cells) > 50_000_000_000 {
        return Err(Error::Budget(format!(
            "{first_cells} x {second_cells} grid chains exceed the certificate budget"
        )));
    }
    let scale = resolution as f64;
    let second: Vec<Vec<f64>> = (0..second_cells).map(|c| grid_channel(&s2, c, a, scale)).collect();
    let rate1_cap = mu1 + CERTIFY_RATE_SLACK;
    let rate2_cap = mu2 + CERTIFY_RATE_SLACK;

    // per first-stage cell: (best shortfall, evaluated?)
    let chunk = 4096;
    let results: Vec<(f64, u64)> = (0..first_cells.div_ceil(chunk))
        .into_par_iter()
        .map(|ci| {
            let mut best = f64::INFINITY;
            let mut evaluated = 0u64;
            let mut q2 = vec![0.0; 4 * b];
            for cell in ci * chunk..((ci + 1) * chunk).min(first_cells) {
                let q1 = grid_channel(&s1, cell, 4, scale);
                let (r1, j1, j2_up) = pair_infos(&q1, a);
                if r1 > rate1_cap {
                    continue;
                }
                evaluated += 1;
                let short1 = (mu1 - j1).max(0.0);
                // the second layer can never see more of X_2 than U_1 does
                if short1 + (mu2 - j2_up).max(0.0) >= best {
                    continue;
                }
                for st in &second {
                    q2.iter_mut().for_each(|v| *v = 0.0);
                    for x in 0..4 {
                        for u in 0..a {
                            let w = q1[x * a + u];
                            if w != 0.0 {
                                for v in 0..b {
                                    q2[x * b + v] += w * st[u * b + v];
                                }
                            }
                        }
                    }
                    let (r2, _, j2) = pair_infos(&q2, b);
                    if r2 > rate2_cap {
                        continue;
                    }
                    let total = short1 + (mu2 - j2).max(0.0);
                    if total < best {
                        best = total;
                    }
                }
            }
            (best, evaluated)
        })
        .collect();
    let gap = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let chains_evaluated = results.iter().map(|r| r.1).sum();
    Ok(CertifiedGap {
        gap,
        floor: (mu2 - CERTIFY_RATE_SLACK).max(0.0),
        resolution,
        aux_sizes,
        chains_evaluated,
        degenerate: false,
    })
}

/// `(I(X;U), I(X_1;U), I(X_2;U))` for uniform `X = (X_1, X_2)` on 4 letters.
fn pair_infos(q: &[f64], nu: usize) -> (f64, f64, f64) {
    let mut pu = [0.0; 5];
    let mut p1 = [[0.0; 5]; 2];
    let mut p2 = [[0.0; 5]; 2];
    for x in 0..4 {
        for u in 0..nu {
            let w = 0.25 * q[x * nu + u];
            pu[u] += w;
            p1[x >> 1][u] += w;
            p2[x & 1][u] += w;
        }
    }
    let mut rx = 0.0;
    for x in 0..4 {
        for u in 0..nu {
            let w = q[x * nu + u];
            if w > 0.0 {
                rx += 0.25 * w * (w * 0.25 / (0.25 * pu[u])).log2();
            }
        }
    }
    let part = |t: &[[f64; 5]; 2]| {
        let mut s = 0.0;
        for row in t {
            for u in 0..nu {
                if row[u] > 0.0 {
                    s += row[u] * (row[u] / (0.5 * pu[u])).log2();
                }
            }
        }
        s.max(0.0)
    };
    (rx.max(0.0), part(&p1), part(&p2))
}

/// A random auxiliary with the given sizes, for property checks.
pub fn random_aux(rng: &mut impl Rng, x_size: usize, sizes: &[usize]) -> AuxGeneral {
    let total: usize = sizes.iter().product();
    AuxGeneral {
        channel: Channel::from_unnormalized(x_size, total, random_channel(rng, x_size, total)),
        sizes: sizes.to_vec(),
    }
}
