//! Numerical rate-relevance function for arbitrary finite joints.
//!
//! Two independent routes are provided:
//!
//! * the self-consistent information bottleneck iteration, swept over a
//!   grid of trade-off parameters `β` with multi-start random
//!   initialization and bisection on `β` around each target relevance;
//! * an exhaustive grid over test channels (binary `X`, `|U| ≤ 3`),
//!   refined by local zooming.
//!
//! Both routes collect achievable `(relevance, rate)` points together with
//! the channels that realize them. A target relevance is answered by the
//! cheapest point meeting it, or by time-sharing two points that bracket
//! it (the union-alphabet channel `[λ q_a | (1-λ) q_b]` realizes the convex
//! combination exactly).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::prob::{Axis, Channel, JointDist};

/// Slack on the relevance constraint of a returned point.
pub const RELEVANCE_SLACK: f64 = 1e-6;
/// Slack on `μ ≤ I(X;Y)` before a target is declared infeasible.
const FEASIBILITY_SLACK: f64 = 1e-9;
/// Iterations given to each random start before the best is refined.
const SCREEN_ITERATIONS: usize = 400;

/// Search settings shared by the oracle and the multi-layer searches.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Auxiliary alphabet size; `None` means `|X| + 1`.
    pub aux_cardinality: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
    /// Trade-off parameters swept by the bottleneck iteration.
    pub beta_grid: Vec<f64>,
    pub convergence_tol: f64,
    pub max_iterations: usize,
    /// Steps per simplex coordinate for exhaustive grids.
    pub grid_resolution: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            aux_cardinality: None,
            restarts: 16,
            seed: 0x01b0_5eed,
            beta_grid: log_grid(0.25, 4096.0, 57),
            convergence_tol: 1e-10,
            max_iterations: 100_000,
            grid_resolution: 200,
        }
    }
}

impl OracleConfig {
    pub fn aux_size(&self, x_size: usize) -> usize {
        self.aux_cardinality.unwrap_or(x_size + 1)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.aux_cardinality == Some(0) {
            return Err(Error::Usage("aux_cardinality must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Usage("restarts must be >= 1".into()));
        }
        if self.beta_grid.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::Usage("beta grid entries must be positive".into()));
        }
        if !(self.convergence_tol > 0.0) || self.max_iterations == 0 {
            return Err(Error::Usage("convergence settings must be positive".into()));
        }
        Ok(())
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Which route produced a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Bottleneck,
    Grid,
    /// Fixed endpoints: the constant and identity channels.
    Endpoint,
    TimeShare,
}

/// A point on (or above) the rate-relevance curve with its test channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    /// Target relevance.
    pub mu: f64,
    /// `I(X;U)` of `achieving_channel`.
    pub rate: f64,
    /// `I(Y;U)` of `achieving_channel`; at least `mu - 1e-6`.
    pub relevance: f64,
    pub achieving_channel: Channel,
    /// Trade-off parameter of the bottleneck solution, when there is one.
    pub beta: Option<f64>,
    pub converged: bool,
    pub method: Method,
    /// Set by [`rr_curve`] when the point was replaced by a later point's
    /// channel to keep rates nondecreasing.
    pub monotone_adjusted: bool,
}

/// `p(x)` and `p(y|x)` extracted from a two-axis joint (first axis `X`).
#[derive(Debug, Clone)]
pub(crate) struct PairModel {
    pub px: Vec<f64>,
    pub pygx: Vec<f64>,
    pub py: Vec<f64>,
    pub nx: usize,
    pub ny: usize,
}

impl PairModel {
    pub fn from_joint(j: &JointDist) -> Result<Self> {
        let axes = j.axes();
        if axes.len() != 2 {
            return Err(Error::Usage(format!(
                "expected a two-axis joint (X, Y), got {} axes",
                axes.len()
            )));
        }
        let (nx, ny) = (axes[0].size, axes[1].size);
        Ok(Self::from_table(nx, ny, j.table()))
    }

    pub fn from_table(nx: usize, ny: usize, table: &[f64]) -> Self {
        let mut px = vec![0.0; nx];
        let mut py = vec![0.0; ny];
        for x in 0..nx {
            for y in 0..ny {
                px[x] += table[x * ny + y];
                py[y] += table[x * ny + y];
            }
        }
        let mut pygx = vec![1.0 / ny as f64; nx * ny];
        for x in 0..nx {
            if px[x] > 0.0 {
                for y in 0..ny {
                    pygx[x * ny + y] = table[x * ny + y] / px[x];
                }
            }
        }
        Self {
            px,
            pygx,
            py,
            nx,
            ny,
        }
    }

    pub fn mutual_information(&self) -> f64 {
        let mut mi = 0.0;
        for x in 0..self.nx {
            for y in 0..self.ny {
                let w = self.pygx[x * self.ny + y];
                let pxy = self.px[x] * w;
                if pxy > 0.0 {
                    mi += pxy * (w / self.py[y]).log2();
                }
            }
        }
        mi.max(0.0)
    }

    /// `(I(X;U), I(Y;U))` for the test channel `q` (row-major, `nx × nu`).
    pub fn evaluate(&self, q: &[f64], nu: usize) -> (f64, f64) {
        let mut pu = vec![0.0; nu];
        let mut pyu = vec![0.0; self.ny * nu];
        for x in 0..self.nx {
            let px = self.px[x];
            if px == 0.0 {
                continue;
            }
            let row = &q[x * nu..(x + 1) * nu];
            for (u, &w) in row.iter().enumerate() {
                pu[u] += px * w;
            }
            for y in 0..self.ny {
                let pxy = px * self.pygx[x * self.ny + y];
                if pxy == 0.0 {
                    continue;
                }
                for (u, &w) in row.iter().enumerate() {
                    pyu[y * nu + u] += pxy * w;
                }
            }
        }
        let mut rate = 0.0;
        for x in 0..self.nx {
            let px = self.px[x];
            if px == 0.0 {
                continue;
            }
            for (u, &w) in q[x * nu..(x + 1) * nu].iter().enumerate() {
                if w > 0.0 {
                    rate += px * w * (w / pu[u]).log2();
                }
            }
        }
        let mut rel = 0.0;
        for y in 0..self.ny {
            for u in 0..nu {
                let p = pyu[y * nu + u];
                if p > 0.0 {
                    rel += p * (p / (self.py[y] * pu[u])).log2();
                }
            }
        }
        (rate.max(0.0), rel.max(0.0))
    }
}

/// An achievable point with the channel realizing it.
#[derive(Debug, Clone)]
struct Candidate {
    rate: f64,
    relevance: f64,
    channel: Channel,
    beta: Option<f64>,
    converged: bool,
    method: Method,
}

impl Candidate {
    fn new(model: &PairModel, channel: Channel, beta: Option<f64>, converged: bool, method: Method) -> Self {
        let (rate, relevance) = model.evaluate(channel.as_flat(), channel.outputs());
        Self {
            rate,
            relevance,
            channel,
            beta,
            converged,
            method,
        }
    }

    fn into_point(self, mu: f64) -> CurvePoint {
        CurvePoint {
            mu,
            rate: self.rate,
            relevance: self.relevance,
            achieving_channel: self.channel,
            beta: self.beta,
            converged: self.converged,
            method: self.method,
            monotone_adjusted: false,
        }
    }
}

/// Result of one run of the bottleneck iteration.
struct IbRun {
    channel: Vec<f64>,
    converged: bool,
    lagrangian: f64,
}

/// Self-consistent update `q(u|x) ∝ p(u) · 2^{-β D(p(y|x) ‖ p(y|u))}`, the
/// stationarity condition of `I(X;U) - β I(Y;U)` in bits.
fn ib_run(model: &PairModel, nu: usize, beta: f64, init: &[f64], tol: f64, max_iter: usize) -> IbRun {
    let (nx, ny) = (model.nx, model.ny);
    let mut q = init.to_vec();
    let mut next = vec![0.0; nx * nu];
    let mut pu = vec![0.0; nu];
    // p(u, y) and then log2 p(y|u), laid out u-major
    let mut puy = vec![0.0; nu * ny];
    let mut converged = false;
    // Σ_y p(y|x) log2 p(y|x), so that D = neg_ent[x] - Σ_y p(y|x) log2 p(y|u)
    let neg_ent: Vec<f64> = (0..nx)
        .map(|x| {
            model.pygx[x * ny..(x + 1) * ny]
                .iter()
                .filter(|a| **a > 0.0)
                .map(|a| a * a.log2())
                .sum()
        })
        .collect();
    for _ in 0..max_iter {
        pu.iter_mut().for_each(|v| *v = 0.0);
        puy.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..nx {
            let px = model.px[x];
            let row = &model.pygx[x * ny..(x + 1) * ny];
            for u in 0..nu {
                let w = px * q[x * nu + u];
                if w > 0.0 {
                    pu[u] += w;
                    for (acc, a) in puy[u * ny..(u + 1) * ny].iter_mut().zip(row) {
                        *acc += w * a;
                    }
                }
            }
        }
        for u in 0..nu {
            if pu[u] > 0.0 {
                for v in &mut puy[u * ny..(u + 1) * ny] {
                    *v = if *v > 0.0 { (*v / pu[u]).log2() } else { f64::NEG_INFINITY };
                }
            }
        }
        for x in 0..nx {
            let a = &model.pygx[x * ny..(x + 1) * ny];
            // log2 weights first, then a max-shift for stability
            let row = &mut next[x * nu..(x + 1) * nu];
            let mut top = f64::NEG_INFINITY;
            for u in 0..nu {
                if pu[u] <= 0.0 {
                    row[u] = f64::NEG_INFINITY;
                    continue;
                }
                let mut cross = 0.0;
                for (ai, lb) in a.iter().zip(&puy[u * ny..(u + 1) * ny]) {
                    if *ai > 0.0 {
                        cross += ai * lb;
                    }
                }
                let kl = neg_ent[x] - cross;
                row[u] = if kl.is_finite() { pu[u].log2() - beta * kl } else { f64::NEG_INFINITY };
                top = top.max(row[u]);
            }
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = if v.is_finite() { (*v - top).exp2() } else { 0.0 };
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        let delta = q
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut q, &mut next);
        if delta < tol {
            converged = true;
            break;
        }
    }
    let (rate, rel) = model.evaluate(&q, nu);
    IbRun {
        channel: q,
        converged,
        lagrangian: rate - beta * rel,
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent RNG stream for a (point, restart) pair.
pub(crate) fn stream_rng(seed: u64, point: u64, restart: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(point)) ^ restart))
}

/// Row-wise uniform sample on the simplex.
pub(crate) fn random_channel(rng: &mut impl Rng, inputs: usize, outputs: usize) -> Vec<f64> {
    let mut rows: Vec<f64> = (0..inputs * outputs)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    for row in rows.chunks_mut(outputs) {
        let t: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= t);
    }
    rows
}

/// One bottleneck solve at a fixed `β` from the given initial channel.
///
/// Larger `β` weights relevance more heavily. The returned point's `mu` is
/// the relevance reached by the final channel.
pub fn ib_iterate(joint_xy: &JointDist, cfg: &OracleConfig, beta: f64, init: &Channel) -> Result<CurvePoint> {
    cfg.validate()?;
    if !(beta > 0.0) {
        return Err(Error::Usage("beta must be positive".into()));
    }
    let model = PairModel::from_joint(joint_xy)?;
    if init.inputs() != model.nx {
        return Err(Error::Usage(format!(
            "initial channel has {} inputs, X has {}",
            init.inputs(),
            model.nx
        )));
    }
    let run = ib_run(&model, init.outputs(), beta, init.as_flat(), cfg.convergence_tol, cfg.max_iterations);
    let channel = Channel::from_unnormalized(model.nx, init.outputs(), run.channel);
    let c = Candidate::new(&model, channel, Some(beta), run.converged, Method::Bottleneck);
    let mu = c.relevance;
    Ok(c.into_point(mu))
}

/// Lagrangian `I(X;U) - β I(Y;U)` of a channel, for monitoring.
pub fn ib_lagrangian(joint_xy: &JointDist, beta: f64, channel: &Channel) -> Result<f64> {
    let model = PairModel::from_joint(joint_xy)?;
    let (r, m) = model.evaluate(channel.as_flat(), channel.outputs());
    Ok(r - beta * m)
}

/// Achievable points gathered by the bottleneck sweep.
struct IbSweep {
    /// Best (lowest Lagrangian) solution per grid β, in grid order.
    best: Vec<Candidate>,
    /// Every solution found.
    pool: Vec<Candidate>,
}

fn ib_sweep(model: &PairModel, cfg: &OracleConfig, nu: usize) -> IbSweep {
    let mut betas = cfg.beta_grid.clone();
    betas.sort_by(|a, b| a.total_cmp(b));
    let screen = SCREEN_ITERATIONS.min(cfg.max_iterations);
    let mut best: Vec<Candidate> = Vec::with_capacity(betas.len());
    let mut pool = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    for (bi, &beta) in betas.iter().enumerate() {
        let mut starts: Vec<Vec<f64>> = (0..cfg.restarts)
            .map(|r| random_channel(&mut stream_rng(cfg.seed, bi as u64, r as u64), model.nx, nu))
            .collect();
        if let Some(w) = &warm {
            starts.push(w.clone());
        }
        let runs: Vec<IbRun> = starts
            .par_iter()
            .map(|s| ib_run(model, nu, beta, s, cfg.convergence_tol, screen))
            .collect();
        // strict < keeps the lowest start index on ties
        let mut pick = 0;
        for (i, run) in runs.iter().enumerate() {
            if run.lagrangian < runs[pick].lagrangian - 1e-15 {
                pick = i;
            }
            let ch = Channel::from_unnormalized(model.nx, nu, run.channel.clone());
            pool.push(Candidate::new(model, ch, Some(beta), run.converged, Method::Bottleneck));
        }
        let run = if runs[pick].converged {
            runs.into_iter().nth(pick).expect("picked run")
        } else {
            ib_run(model, nu, beta, &runs[pick].channel, cfg.convergence_tol, cfg.max_iterations)
        };
        let ch = Channel::from_unnormalized(model.nx, nu, run.channel.clone());
        let c = Candidate::new(model, ch, Some(beta), run.converged, Method::Bottleneck);
        pool.push(c.clone());
        warm = Some(run.channel);
        best.push(c);
    }
    IbSweep { best, pool }
}

/// Bisection on `β` between two sweep solutions bracketing `mu`.
fn ib_bisect(model: &PairModel, cfg: &OracleConfig, lo: &Candidate, hi: &Candidate, mu: f64) -> Vec<Candidate> {
    let nu = lo.channel.outputs();
    let (mut blo, mut bhi) = match (lo.beta, hi.beta) {
        (Some(a), Some(b)) if a < b => (a, b),
        _ => return Vec::new(),
    };
    let mut clo = lo.channel.as_flat().to_vec();
    let mut chi = hi.channel.as_flat().to_vec();
    let mut out = Vec::new();
    let mut gap = hi.relevance - lo.relevance;
    for _ in 0..60 {
        if bhi / blo - 1.0 < 1e-12 || gap < 1e-9 {
            break;
        }
        let beta = (blo * bhi).sqrt();
        let (a, b) = rayon::join(
            || ib_run(model, nu, beta, &chi, cfg.convergence_tol, cfg.max_iterations),
            || ib_run(model, nu, beta, &clo, cfg.convergence_tol, cfg.max_iterations),
        );
        let run = if a.lagrangian <= b.lagrangian { a } else { b };
        let ch = Channel::from_unnormalized(model.nx, nu, run.channel.clone());
        let c = Candidate::new(model, ch, Some(beta), run.converged, Method::Bottleneck);
        if c.relevance >= mu {
            bhi = beta;
            chi = run.channel;
            gap = c.relevance - mu;
        } else {
            blo = beta;
            clo = run.channel;
            gap = gap.min(mu - c.relevance);
        }
        out.push(c);
    }
    out
}

/// Time-sharing of two pool points: `(below, above, λ, rate)`.
type Share = (usize, usize, f64, f64);

/// Index of the pool point with the smallest rate meeting `mu`, plus the
/// best time-sharing pair if it beats that.
fn best_in_pool(pool: &[Candidate], mu: f64) -> (Option<usize>, Option<Share>) {
    let target = mu - RELEVANCE_SLACK;
    let pure = pool
        .iter()
        .enumerate()
        .filter(|(_, c)| c.relevance >= target)
        .min_by(|(_, a), (_, b)| a.rate.total_cmp(&b.rate))
        .map(|(i, _)| i);
    let pure_rate = pure.map_or(f64::INFINITY, |i| pool[i].rate);
    // the best bracketing pair is an edge of the lower convex hull
    let hull = lower_hull(pool, &pareto(pool));
    let share = hull.windows(2).find_map(|w| {
        let (ca, cb) = (&pool[w[0]], &pool[w[1]]);
        if !(ca.relevance < mu && mu < cb.relevance) {
            return None;
        }
        let lambda = (cb.relevance - mu) / (cb.relevance - ca.relevance);
        let rate = lambda * ca.rate + (1.0 - lambda) * cb.rate;
        (rate < pure_rate - 1e-12).then_some((w[0], w[1], lambda, rate))
    });
    (pure, share)
}

/// Indices of points not dominated in (higher relevance, lower rate),
/// sorted by ascending relevance.
fn pareto(pool: &[Candidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        pool[b]
            .relevance
            .total_cmp(&pool[a].relevance)
            .then(pool[a].rate.total_cmp(&pool[b].rate))
            .then(a.cmp(&b))
    });
    let mut keep = Vec::new();
    let mut best = f64::INFINITY;
    for i in order {
        if pool[i].rate < best {
            best = pool[i].rate;
            keep.push(i);
        }
    }
    keep.reverse();
    keep
}

/// Lower convex hull of points already sorted by ascending relevance.
fn lower_hull(pool: &[Candidate], sorted: &[usize]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::new();
    for &i in sorted {
        while hull.len() >= 2 {
            let (a, b) = (&pool[hull[hull.len() - 2]], &pool[hull[hull.len() - 1]]);
            let c = &pool[i];
            let cross = (b.relevance - a.relevance) * (c.rate - a.rate) - (b.rate - a.rate) * (c.relevance - a.relevance);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Union-alphabet channel realizing the λ-mixture of two test channels.
fn time_share(a: &Channel, b: &Channel, lambda: f64) -> Channel {
    let (na, nb) = (a.outputs(), b.outputs());
    let nx = a.inputs();
    let mut rows = Vec::with_capacity(nx * (na + nb));
    for x in 0..nx {
        rows.extend(a.row(x).iter().map(|w| lambda * w));
        rows.extend(b.row(x).iter().map(|w| (1.0 - lambda) * w));
    }
    // drop output letters that are never used
    let keep: Vec<usize> = (0..na + nb)
        .filter(|&u| (0..nx).any(|x| rows[x * (na + nb) + u] > 0.0))
        .collect();
    let mut packed = Vec::with_capacity(nx * keep.len());
    for x in 0..nx {
        packed.extend(keep.iter().map(|&u| rows[x * (na + nb) + u]));
    }
    Channel::from_unnormalized(nx, keep.len(), packed)
}

fn answer_from_pool(model: &PairModel, pool: &[Candidate], mu: f64) -> Option<CurvePoint> {
    let (pure, share) = best_in_pool(pool, mu);
    if let Some((a, b, lambda, _)) = share {
        let ch = time_share(&pool[a].channel, &pool[b].channel, lambda);
        let converged = pool[a].converged && pool[b].converged;
        let c = Candidate::new(model, ch, None, converged, Method::TimeShare);
        if c.relevance >= mu - RELEVANCE_SLACK {
            return Some(c.into_point(mu));
        }
    }
    pure.map(|i| pool[i].clone().into_point(mu))
}

fn endpoints(model: &PairModel) -> Vec<Candidate> {
    vec![
        Candidate::new(model, Channel::constant(model.nx, 1), Some(0.0), true, Method::Endpoint),
        Candidate::new(model, Channel::identity(model.nx), None, true, Method::Endpoint),
    ]
}

/// Enumerates all compositions of `total` into `parts` nonnegative parts.
pub(crate) fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; parts];
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[i] = v;
            rec(i + 1, left - v, cur, out);
        }
    }
    if parts > 0 {
        rec(0, total, &mut cur, &mut out);
    }
    out
}

/// Exhaustive grid over binary-input channels with `nu` outputs, followed by
/// local zooming around the candidates that answer each target.
struct GridSearch<'a> {
    model: &'a PairModel,
    nu: usize,
}

impl GridSearch<'_> {
    fn candidate(&self, rows: &[f64]) -> Candidate {
        let ch = Channel::from_unnormalized(self.model.nx, self.nu, rows.to_vec());
        Candidate::new(self.model, ch, None, true, Method::Grid)
    }

    /// Lower-right frontier of the full grid: sorted by relevance, keeping
    /// points whose rate is below every point of higher relevance.
    fn coarse(&self, resolution: usize) -> Vec<Candidate> {
        let simplex = compositions(resolution, self.nu);
        let r = resolution as f64;
        let mut pts: Vec<(f64, f64, usize, usize)> = Vec::with_capacity(simplex.len() * simplex.len());
        let mut rows = vec![0.0; 2 * self.nu];
        for (i, a) in simplex.iter().enumerate() {
            for (j, b) in simplex.iter().enumerate() {
                for u in 0..self.nu {
                    rows[u] = a[u] as f64 / r;
                    rows[self.nu + u] = b[u] as f64 / r;
                }
                let (rate, rel) = self.model.evaluate(&rows, self.nu);
                pts.push((rel, rate, i, j));
            }
        }
        pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
        let mut frontier = Vec::new();
        let mut best_rate = f64::INFINITY;
        for (_, rate, i, j) in pts {
            if rate < best_rate {
                best_rate = rate;
                for u in 0..self.nu {
                    rows[u] = simplex[i][u] as f64 / r;
                    rows[self.nu + u] = simplex[j][u] as f64 / r;
                }
                frontier.push(self.candidate(&rows));
            }
        }
        frontier
    }

    /// Local grid of `±h` around `center` (free coordinates of each row) at
    /// step `h / 4`, clipped to the simplex.
    fn zoom(&self, center: &Channel, h: f64) -> Vec<Candidate> {
        let nu = self.nu;
        let free = nu - 1;
        let dims = 2 * free;
        let steps: Vec<f64> = (-4..=4).map(|k| k as f64 * h / 4.0).collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; dims];
        let base = center.as_flat();
        'outer: loop {
            let mut rows = vec![0.0; 2 * nu];
            let mut ok = true;
            for x in 0..2 {
                let mut used = 0.0;
                for u in 0..free {
                    let v = base[x * nu + u] + steps[idx[x * free + u]];
                    if !(-1e-15..=1.0 + 1e-15).contains(&v) {
                        ok = false;
                    }
                    rows[x * nu + u] = v.clamp(0.0, 1.0);
                    used += rows[x * nu + u];
                }
                if used > 1.0 + 1e-15 {
                    ok = false;
                }
                rows[x * nu + free] = (1.0 - used).max(0.0);
            }
            if ok {
                out.push(self.candidate(&rows));
            }
            for d in 0..dims {
                idx[d] += 1;
                if idx[d] < steps.len() {
                    continue 'outer;
                }
                idx[d] = 0;
            }
            break;
        }
        out
    }
}

/// Precomputed search state for one joint; answers many targets.
struct Frontier {
    model: PairModel,
    ib: Option<IbSweep>,
    grid: Vec<(usize, f64, Vec<Candidate>)>,
    info_xy: f64,
}

/// Which routes [`Frontier`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Minimum over both routes.
    Both,
    Bottleneck,
    Grid,
}

impl Frontier {
    fn build(joint_xy: &JointDist, cfg: &OracleConfig, route: Route) -> Result<Self> {
        cfg.validate()?;
        let model = PairModel::from_joint(joint_xy)?;
        let nu = cfg.aux_size(model.nx);
        let ib = matches!(route, Route::Both | Route::Bottleneck).then(|| ib_sweep(&model, cfg, nu));
        let mut grid = Vec::new();
        if matches!(route, Route::Both | Route::Grid) {
            if model.nx != 2 {
                if route == Route::Grid {
                    return Err(Error::Usage("grid search requires a binary X".into()));
                }
            } else {
                for k in 2..=nu.min(3) {
                    // |U| = 3 grows as resolution^4; cap its coarse pass
                    let res = if k == 2 { cfg.grid_resolution } else { cfg.grid_resolution.min(40) };
                    let search = GridSearch { model: &model, nu: k };
                    grid.push((k, 1.0 / res.max(1) as f64, search.coarse(res.max(1))));
                }
            }
        }
        let info_xy = model.mutual_information();
        Ok(Self {
            model,
            ib,
            grid,
            info_xy,
        })
    }

    fn check_target(&self, mu: f64) -> Result<f64> {
        if !(mu >= 0.0) {
            return Err(Error::Domain {
                name: "mu",
                value: mu,
                domain: "[0, I(X;Y)]",
            });
        }
        if mu > self.info_xy + FEASIBILITY_SLACK {
            return Err(Error::Infeasible(format!(
                "mu = {mu} exceeds I(X;Y) = {}",
                self.info_xy
            )));
        }
        Ok(mu.min(self.info_xy))
    }

    fn query_ib(&self, cfg: &OracleConfig, mu: f64, warm: Option<&Channel>) -> Option<CurvePoint> {
        let sweep = self.ib.as_ref()?;
        let mut pool: Vec<Candidate> = endpoints(&self.model);
        pool.extend(sweep.pool.iter().cloned());
        // bracket on the per-β best solutions, then bisect
        let lo = sweep.best.iter().rev().find(|c| c.relevance < mu);
        let hi = sweep.best.iter().find(|c| c.relevance >= mu);
        if let (Some(lo), Some(hi)) = (lo, hi) {
            pool.extend(ib_bisect(&self.model, cfg, lo, hi, mu));
        }
        if let Some(w) = warm {
            if w.inputs() == self.model.nx {
                if let Some(hi) = hi {
                    let start = Candidate::new(&self.model, w.clone(), hi.beta, true, Method::Bottleneck);
                    if start.relevance < mu {
                        pool.extend(ib_bisect(&self.model, cfg, &start, hi, mu));
                    }
                }
            }
        }
        answer_from_pool(&self.model, &pool, mu)
    }

    fn query_grid(&self, mu: f64) -> Option<CurvePoint> {
        if self.grid.is_empty() {
            return None;
        }
        let mut pool: Vec<Candidate> = endpoints(&self.model);
        for (k, h0, coarse) in &self.grid {
            let search = GridSearch { model: &self.model, nu: *k };
            let mut local: Vec<Candidate> = coarse.clone();
            let mut h = *h0;
            for _ in 0..6 {
                let (pure, share) = best_in_pool(&local, mu);
                let mut centers: Vec<Channel> = Vec::new();
                if let Some(i) = pure {
                    centers.push(local[i].channel.clone());
                }
                if let Some((a, b, _, _)) = share {
                    centers.push(local[a].channel.clone());
                    centers.push(local[b].channel.clone());
                }
                for c in centers {
                    local.extend(search.zoom(&c, h));
                }
                h /= 4.0;
                local = pareto(&local).into_iter().map(|i| local[i].clone()).collect();
            }
            pool.extend(local);
        }
        answer_from_pool(&self.model, &pool, mu)
    }

    fn query(&self, cfg: &OracleConfig, mu: f64, warm: Option<&Channel>) -> Result<CurvePoint> {
        let mu = self.check_target(mu)?;
        if mu == 0.0 {
            let c = Candidate::new(&self.model, Channel::constant(self.model.nx, 1), Some(0.0), true, Method::Endpoint);
            return Ok(c.into_point(0.0));
        }
        let a = self.query_ib(cfg, mu, warm);
        let b = self.query_grid(mu);
        match (a, b) {
            (Some(a), Some(b)) => Ok(if b.rate < a.rate { b } else { a }),
            (Some(p), None) | (None, Some(p)) => Ok(p),
            (None, None) => Err(Error::Budget(format!("no point reaching mu = {mu} was found"))),
        }
    }
}

/// Rate-relevance function `min I(X;U)` s.t. `I(Y;U) ≥ μ` for a two-axis
/// joint `(X, Y)`, as the minimum over both search routes.
pub fn rr_oracle(joint_xy: &JointDist, mu: f64, cfg: &OracleConfig) -> Result<CurvePoint> {
    rr_oracle_with(joint_xy, mu, cfg, Route::Both)
}

/// [`rr_oracle`] restricted to one route.
pub fn rr_oracle_with(joint_xy: &JointDist, mu: f64, cfg: &OracleConfig, route: Route) -> Result<CurvePoint> {
    Frontier::build(joint_xy, cfg, route)?.query(cfg, mu, None)
}

/// [`rr_oracle`] over an ascending grid, sharing one sweep and warm-starting
/// each bisection from the previous point. Rates are made nondecreasing by
/// reusing a later point's channel where needed (no convexification).
pub fn rr_curve(joint_xy: &JointDist, mu_grid: &[f64], cfg: &OracleConfig) -> Result<Vec<CurvePoint>> {
    rr_curve_with(joint_xy, mu_grid, cfg, Route::Both)
}

pub fn rr_curve_with(joint_xy: &JointDist, mu_grid: &[f64], cfg: &OracleConfig, route: Route) -> Result<Vec<CurvePoint>> {
    if mu_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Usage("mu grid must be sorted ascending".into()));
    }
    let frontier = Frontier::build(joint_xy, cfg, route)?;
    for &mu in mu_grid {
        frontier.check_target(mu)?;
    }
    let mut out: Vec<CurvePoint> = Vec::with_capacity(mu_grid.len());
    for &mu in mu_grid {
        let warm = out.last().map(|p| p.achieving_channel.clone());
        out.push(frontier.query(cfg, mu, warm.as_ref())?);
    }
    for i in (0..out.len().saturating_sub(1)).rev() {
        if out[i].rate > out[i + 1].rate {
            let next = out[i + 1].clone();
            out[i] = CurvePoint {
                mu: out[i].mu,
                monotone_adjusted: true,
                ..next
            };
        }
    }
    Ok(out)
}

/// Midpoint quantization of `Y = X + N`, `X ~ N(0, σx²)`, `N ~ N(0, σN²)`.
///
/// Each variable gets `points` equal cells over `±span_sigmas` of its own
/// standard deviation, with the tails folded into the edge cells. `p(x)`
/// is the exact cell mass; `p(y|x)` is evaluated at the cell midpoint.
pub fn quantize_gaussian(source_var: f64, noise_var: f64, points: usize, span_sigmas: f64) -> Result<JointDist> {
    if !(source_var > 0.0) || !(noise_var > 0.0) {
        return Err(Error::Usage("variances must be positive".into()));
    }
    if points < 2 || !(span_sigmas > 0.0) {
        return Err(Error::Usage("need points >= 2 and span_sigmas > 0".into()));
    }
    let sx = source_var.sqrt();
    let sy = (source_var + noise_var).sqrt();
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let edges = |sd: f64| -> Vec<f64> {
        let w = 2.0 * span_sigmas * sd / points as f64;
        (0..=points).map(|i| -span_sigmas * sd + i as f64 * w).collect()
    };
    let (ex, ey) = (edges(sx), edges(sy));
    let cdf = |z: f64, i: usize, n: usize| -> f64 {
        if i == 0 {
            0.0
        } else if i == n {
            1.0
        } else {
            std.cdf(z)
        }
    };
    let sn = noise_var.sqrt();
    let mut table = Vec::with_capacity(points * points);
    for i in 0..points {
        let px = cdf(ex[i + 1] / sx, i + 1, points) - cdf(ex[i] / sx, i, points);
        let mid = 0.5 * (ex[i] + ex[i + 1]);
        for j in 0..points {
            let pyx = cdf((ey[j + 1] - mid) / sn, j + 1, points) - cdf((ey[j] - mid) / sn, j, points);
            table.push(px * pyx.max(0.0));
        }
    }
    let total: f64 = table.iter().sum();
    table.iter_mut().for_each(|v| *v /= total);
    JointDist::new(vec![Axis::new("x", points), Axis::new("y", points)], table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{bsc_relevance_cap, rr_bsc};
    use crate::prob::{compose_joint, mutual_information, ChainLink, ProbVec};

    fn bsc_joint(p: f64) -> JointDist {
        compose_joint(
            "x",
            &ProbVec::uniform(2).unwrap(),
            &[ChainLink::new("y", "x", Channel::bsc(p).unwrap())],
        )
        .unwrap()
    }

    fn fast_cfg() -> OracleConfig {
        OracleConfig {
            restarts: 4,
            beta_grid: log_grid(0.5, 2048.0, 25),
            ..OracleConfig::default()
        }
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(4, 2).len(), 5);
        assert_eq!(compositions(10, 3).len(), 66);
        assert!(compositions(3, 3).iter().all(|c| c.iter().sum::<usize>() == 3));
    }

    #[test]
    fn evaluate_matches_joint_route() {
        let j = bsc_joint(0.15);
        let model = PairModel::from_joint(&j).unwrap();
        let q = Channel::new(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]]).unwrap();
        let (r, m) = model.evaluate(q.as_flat(), 3);
        let full = j.extend("u", "x", &q).unwrap();
        assert!((r - mutual_information(&full, &["x"], &["u"]).unwrap()).abs() < 1e-12);
        assert!((m - mutual_information(&full, &["y"], &["u"]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn small_beta_collapses() {
        let j = bsc_joint(0.1);
        let mut rng = stream_rng(3, 0, 0);
        let init = Channel::from_unnormalized(2, 3, random_channel(&mut rng, 2, 3));
        let pt = ib_iterate(&j, &fast_cfg(), 0.05, &init).unwrap();
        assert!(pt.rate < 1e-6 && pt.relevance < 1e-6, "{pt:?}");
    }

    #[test]
    fn large_beta_identity_optimum() {
        let j = bsc_joint(0.0);
        let init = Channel::new(vec![vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let pt = ib_iterate(&j, &fast_cfg(), 200.0, &init).unwrap();
        assert!((pt.rate - 1.0).abs() < 1e-6, "{pt:?}");
        assert!((pt.relevance - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lagrangian_non_increasing() {
        let j = bsc_joint(0.2);
        let model = PairModel::from_joint(&j).unwrap();
        for seed in 0..5 {
            let mut q = random_channel(&mut stream_rng(seed, 1, 1), 2, 3);
            let beta = 4.0;
            let (r, m) = model.evaluate(&q, 3);
            let mut last = r - beta * m;
            for _ in 0..200 {
                let run = ib_run(&model, 3, beta, &q, 0.0, 1);
                assert!(run.lagrangian <= last + 1e-12, "{} > {last}", run.lagrangian);
                last = run.lagrangian;
                q = run.channel;
            }
        }
    }

    #[test]
    fn zero_target_is_free() {
        let pt = rr_oracle(&bsc_joint(0.1), 0.0, &fast_cfg()).unwrap();
        assert_eq!(pt.rate, 0.0);
    }

    #[test]
    fn infeasible_target_rejected() {
        let r = rr_oracle(&bsc_joint(0.1), 0.6, &fast_cfg());
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn identity_joint_rate_equals_relevance() {
        let j = bsc_joint(0.0);
        for mu in [0.2, 0.5, 0.9] {
            let pt = rr_oracle(&j, mu, &fast_cfg()).unwrap();
            assert!((pt.rate - mu).abs() < 5e-3, "mu {mu}: {pt:?}");
        }
    }

    #[test]
    fn bsc_point_matches_closed_form() {
        let j = bsc_joint(0.1);
        let expect = rr_bsc(0.1, 0.3).unwrap().rate;
        for route in [Route::Bottleneck, Route::Grid] {
            let pt = rr_oracle_with(&j, 0.3, &fast_cfg(), route).unwrap();
            assert!((pt.rate - expect).abs() < 5e-3, "{route:?}: {} vs {expect}", pt.rate);
            assert!(pt.relevance >= 0.3 - RELEVANCE_SLACK);
        }
    }

    #[test]
    fn curve_is_monotone_and_reproducible() {
        let j = bsc_joint(0.2);
        let cap = bsc_relevance_cap(0.2);
        let grid: Vec<f64> = (0..=5).map(|i| cap * i as f64 / 5.0).collect();
        let a = rr_curve(&j, &grid, &fast_cfg()).unwrap();
        let b = rr_curve(&j, &grid, &fast_cfg()).unwrap();
        assert_eq!(a, b);
        for w in a.windows(2) {
            assert!(w[1].rate >= w[0].rate);
        }
        assert_eq!(a[0].rate, 0.0);
        assert!(rr_curve(&j, &[0.2, 0.1], &fast_cfg()).is_err());
    }

    #[test]
    fn quantized_gaussian_information() {
        let j = quantize_gaussian(1.0, 1.0, 33, 4.0).unwrap();
        let mi = mutual_information(&j, &["x"], &["y"]).unwrap();
        assert!((mi - 0.5).abs() < 0.03, "{mi}");

        let coarse = quantize_gaussian(1.0, 1.0, 2, 0.1).unwrap();
        let t = coarse.table();
        assert!((t[0] - t[3]).abs() < 1e-12 && (t[1] - t[2]).abs() < 1e-12);
        assert!(mutual_information(&coarse, &["x"], &["y"]).unwrap() <= 1.0);

        let mis: Vec<f64> = [17, 33, 65]
            .iter()
            .map(|&n| {
                let j = quantize_gaussian(1.0, 1.0, n, 4.0).unwrap();
                mutual_information(&j, &["x"], &["y"]).unwrap()
            })
            .collect();
        assert!((mis[0] - 0.5).abs() > (mis[1] - 0.5).abs());
        assert!((mis[1] - 0.5).abs() > (mis[2] - 0.5).abs());
    }
}
