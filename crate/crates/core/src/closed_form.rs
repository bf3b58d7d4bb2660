//! Closed-form rate-relevance functions for the binary symmetric, binary
//! erasure and scalar Gaussian hidden-variable models, with the test
//! channels that achieve them.

use crate::error::{check_half, check_unit, Error, Result};
use crate::prob::{binary_entropy_inv_unchecked, binary_entropy_unchecked, star};

/// Slack allowed on feasibility caps so that points computed exactly at a
/// cap (e.g. `1 - H_b(p)`) are not rejected by rounding.
const CAP_SLACK: f64 = 1e-12;

/// Layered binary source with `Y_l = X ⊕ N_l`, `N_l ~ Bern(p_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BscProblem {
    crossovers: Vec<f64>,
}

impl BscProblem {
    pub fn new(crossovers: Vec<f64>) -> Result<Self> {
        if crossovers.is_empty() {
            return Err(Error::Usage("need at least one layer".into()));
        }
        for &p in &crossovers {
            check_half("p", p)?;
        }
        Ok(Self { crossovers })
    }

    pub fn layers(&self) -> usize {
        self.crossovers.len()
    }

    pub fn crossovers(&self) -> &[f64] {
        &self.crossovers
    }
}

/// Two-layer binary source: `Y_1 = BEC_ε(X)`, `Y_2 = BSC_p(X)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BecBscProblem {
    pub erasure: f64,
    pub crossover: f64,
}

impl BecBscProblem {
    pub fn new(erasure: f64, crossover: f64) -> Result<Self> {
        check_half("epsilon", erasure)?;
        check_half("p", crossover)?;
        Ok(Self { erasure, crossover })
    }
}

/// Scalar Gaussian source with `Y_l = X + N_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianProblem {
    pub source_var: f64,
    pub noise_vars: Vec<f64>,
}

impl GaussianProblem {
    pub fn new(source_var: f64, noise_vars: Vec<f64>) -> Result<Self> {
        check_positive("sigma_x2", source_var)?;
        for &v in &noise_vars {
            check_positive("sigma_n2", v)?;
        }
        Ok(Self {
            source_var,
            noise_vars,
        })
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value: v,
            domain: "(0, inf)",
        })
    }
}

fn check_relevance(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "mu",
            value: mu,
            domain: "[0, inf)",
        })
    }
}

/// One point of a rate-relevance function with the parameter of the test
/// channel achieving it.
///
/// `achiever_param` is a crossover for the binary families, a reveal
/// probability for the erasure-style achiever and an additive noise
/// variance for the Gaussian family. `degenerate` marks `μ = 0`, where the
/// achiever carries no information (Gaussian: infinite noise variance).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub relevance: f64,
    pub rate: f64,
    pub achiever_param: f64,
    pub degenerate: bool,
}

/// `H_b(p ∗ H_b⁻¹(h))`: the lower bound on `H(X ⊕ N | U)` given `H(X|U) = h`.
pub fn mrs_gerber_bound(p: f64, h: f64) -> Result<f64> {
    check_half("p", p)?;
    check_unit("h", h)?;
    Ok(binary_entropy_unchecked(star(p, binary_entropy_inv_unchecked(h))))
}

/// Largest relevance a BSC(p) hidden variable admits: `1 - H_b(p)`.
pub fn bsc_relevance_cap(p: f64) -> f64 {
    1.0 - binary_entropy_unchecked(p)
}

/// `R(μ) = 1 - H_b((H_b⁻¹(1-μ) - p) / (1 - 2p))` for a BSC(p) hidden variable.
///
/// The achiever is `U = X ⊕ Bern(α)` with `α = H_b⁻¹(1 - R)`.
pub fn rr_bsc(p: f64, mu: f64) -> Result<RatePoint> {
    check_half("p", p)?;
    check_relevance(mu)?;
    if p == 0.5 {
        if mu == 0.0 {
            return Ok(RatePoint {
                relevance: 0.0,
                rate: 0.0,
                achiever_param: 0.5,
                degenerate: true,
            });
        }
        return Err(Error::Degenerate(
            "BSC(0.5) output is independent of X; only mu = 0 is feasible".into(),
        ));
    }
    let cap = bsc_relevance_cap(p);
    if mu > cap + CAP_SLACK {
        return Err(Error::Infeasible(format!(
            "mu = {mu} exceeds 1 - H_b(p) = {cap}"
        )));
    }
    let mu = mu.min(cap);
    let alpha = ((binary_entropy_inv_unchecked(1.0 - mu) - p) / (1.0 - 2.0 * p)).clamp(0.0, 0.5);
    Ok(RatePoint {
        relevance: mu,
        rate: 1.0 - binary_entropy_unchecked(alpha),
        achiever_param: alpha,
        degenerate: mu == 0.0,
    })
}

/// `R(μ) = μ / (1 - ε)` for a BEC(ε) hidden variable.
///
/// Every test channel satisfies `I(Y;U) = (1-ε) I(X;U)` here, so the
/// symmetric achiever `U = X ⊕ Bern(α)`, `α = H_b⁻¹(1 - R)`, is optimal.
pub fn rr_bec(eps: f64, mu: f64) -> Result<RatePoint> {
    check_half("epsilon", eps)?;
    check_relevance(mu)?;
    let cap = 1.0 - eps;
    if mu > cap + CAP_SLACK {
        return Err(Error::Infeasible(format!("mu = {mu} exceeds 1 - epsilon = {cap}")));
    }
    let rate = (mu / cap).min(1.0);
    Ok(RatePoint {
        relevance: mu.min(cap),
        rate,
        achiever_param: binary_entropy_inv_unchecked(1.0 - rate),
        degenerate: mu == 0.0,
    })
}

/// Largest relevance for the Gaussian pair: `½ log2(1 + σx²/σN²)`.
pub fn gaussian_relevance_cap(source_var: f64, noise_var: f64) -> f64 {
    0.5 * (1.0 + source_var / noise_var).log2()
}

/// `R(μ) = ½ log2(2^{2μ} σx² / (σx² + σN² - 2^{2μ} σN²))`.
///
/// The achiever is `U = X + P` with `σ_P² = σx² / (2^{2R} - 1)`, which gives
/// `I(X;U) = R` exactly. At `μ = 0` the achiever variance is `+∞` and the
/// point is flagged degenerate.
pub fn rr_gaussian(source_var: f64, noise_var: f64, mu: f64) -> Result<RatePoint> {
    check_positive("sigma_x2", source_var)?;
    check_positive("sigma_n2", noise_var)?;
    check_relevance(mu)?;
    let cap = gaussian_relevance_cap(source_var, noise_var);
    if mu >= cap {
        return Err(Error::Infeasible(format!(
            "mu = {mu} must be strictly below 1/2 log2(1 + sigma_x2/sigma_n2) = {cap}"
        )));
    }
    if mu == 0.0 {
        return Ok(RatePoint {
            relevance: 0.0,
            rate: 0.0,
            achiever_param: f64::INFINITY,
            degenerate: true,
        });
    }
    let g = (2.0 * mu).exp2();
    let rate = 0.5 * (g * source_var / (source_var + noise_var - g * noise_var)).log2();
    Ok(RatePoint {
        relevance: mu,
        rate,
        achiever_param: gaussian_achiever_variance(source_var, rate),
        degenerate: false,
    })
}

/// Additive-noise variance `σx² / (2^{2R} - 1)` of the Gaussian test channel
/// with `I(X; X + P) = R`.
pub fn gaussian_achiever_variance(source_var: f64, rate: f64) -> f64 {
    source_var / ((2.0 * rate).exp2() - 1.0)
}

/// Per-layer crossovers `m_1..m_L` of the cascade `U_l = X ⊕ M_1 ⊕ ⋯ ⊕ M_l`
/// whose cumulative crossover meets every layer's rate-relevance point.
///
/// Requires the closed-form rates to be nonincreasing across layers.
pub fn bsc_cascade_sr_witness(problem: &BscProblem, mu: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != problem.layers() {
        return Err(Error::Usage(format!(
            "{} relevance targets for {} layers",
            mu.len(),
            problem.layers()
        )));
    }
    let points = problem
        .crossovers()
        .iter()
        .zip(mu)
        .map(|(&p, &m)| rr_bsc(p, m))
        .collect::<Result<Vec<_>>>()?;
    for (l, w) in points.windows(2).enumerate() {
        if w[1].rate > w[0].rate + CAP_SLACK {
            return Err(Error::NotOrderable(format!(
                "R_{} = {} < R_{} = {}",
                l + 1,
                w[0].rate,
                l + 2,
                w[1].rate
            )));
        }
    }
    let mut prev = 0.0_f64;
    let mut steps = Vec::with_capacity(points.len());
    for pt in &points {
        let q = pt.achiever_param.max(prev);
        let m = if prev >= 0.5 {
            0.0
        } else {
            ((q - prev) / (1.0 - 2.0 * prev)).clamp(0.0, 0.5)
        };
        steps.push(m);
        prev = q;
    }
    Ok(steps)
}

/// Rate-relevance point for the independent-pair example, `R = μ`, with
/// the reveal probability `μ / H(X_1)` of the achiever that outputs `X_1`
/// or a fixed symbol.
pub fn counterexample_rr(mu: f64, h_x1: f64) -> Result<RatePoint> {
    check_relevance(mu)?;
    check_positive("H(X1)", h_x1)?;
    if mu > h_x1 + CAP_SLACK {
        return Err(Error::Infeasible(format!("mu = {mu} exceeds H(X1) = {h_x1}")));
    }
    let mu = mu.min(h_x1);
    Ok(RatePoint {
        relevance: mu,
        rate: mu,
        achiever_param: mu / h_x1,
        degenerate: mu == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{
        binary_entropy, compose_joint, conditional_entropy, mutual_information, ChainLink,
        Channel, ProbVec,
    };

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn uniform_bit() -> ProbVec {
        ProbVec::uniform(2).unwrap()
    }

    #[test]
    fn mrs_gerber_examples() {
        for p in [0.0, 0.1, 0.3, 0.5] {
            close(mrs_gerber_bound(p, 1.0).unwrap(), 1.0, 1e-12);
        }
        for h in [0.0, 0.2, 0.5, 0.9] {
            close(mrs_gerber_bound(0.0, h).unwrap(), h, 1e-12);
        }
        let v = mrs_gerber_bound(0.1, 0.5).unwrap();
        close(v, 0.6973, 5e-4);
        assert!(mrs_gerber_bound(0.6, 0.5).is_err());
        assert!(mrs_gerber_bound(0.1, 1.5).is_err());
    }

    /// Exhaustive check over binary (U, X) joints with H(X|U) = 0.5: the
    /// symmetric channel attains the bound and no other channel beats it.
    #[test]
    fn mrs_gerber_bound_matches_exhaustive_joints() {
        let p = 0.1;
        let a = crate::prob::binary_entropy_inv(0.5).unwrap();
        let sym = compose_joint(
            "x",
            &uniform_bit(),
            &[
                ChainLink::new("u", "x", Channel::bsc(a).unwrap()),
                ChainLink::new("y", "x", Channel::bsc(p).unwrap()),
            ],
        )
        .unwrap();
        close(conditional_entropy(&sym, &["x"], &["u"]).unwrap(), 0.5, 1e-10);
        let h_sym = conditional_entropy(&sym, &["y"], &["u"]).unwrap();
        close(h_sym, mrs_gerber_bound(p, 0.5).unwrap(), 1e-10);

        let mut best = f64::INFINITY;
        let steps = 400;
        for i in 0..=steps {
            let a0 = i as f64 / steps as f64;
            // Solve for the second row so that H(X|U) = 0.5 by bisection.
            let h_of = |a1: f64| {
                let ch = Channel::new(vec![vec![1.0 - a0, a0], vec![a1, 1.0 - a1]]).unwrap();
                let j = compose_joint("x", &uniform_bit(), &[ChainLink::new("u", "x", ch)]).unwrap();
                conditional_entropy(&j, &["x"], &["u"]).unwrap()
            };
            let (mut lo, mut hi) = (0.0, 0.5);
            if (h_of(lo) - 0.5) * (h_of(hi) - 0.5) > 0.0 {
                continue;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if (h_of(lo) - 0.5) * (h_of(mid) - 0.5) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let a1 = 0.5 * (lo + hi);
            let ch = Channel::new(vec![vec![1.0 - a0, a0], vec![a1, 1.0 - a1]]).unwrap();
            let j = compose_joint(
                "x",
                &uniform_bit(),
                &[
                    ChainLink::new("u", "x", ch),
                    ChainLink::new("y", "x", Channel::bsc(p).unwrap()),
                ],
            )
            .unwrap();
            best = best.min(conditional_entropy(&j, &["y"], &["u"]).unwrap());
        }
        assert!(best >= h_sym - 1e-9, "{best} < {h_sym}");
        close(best, h_sym, 1e-6);
    }

    #[test]
    fn rr_bsc_examples() {
        for p in [0.05, 0.1, 0.3] {
            let pt = rr_bsc(p, 0.0).unwrap();
            close(pt.rate, 0.0, 1e-12);
            close(pt.achiever_param, 0.5, 1e-12);
            assert!(pt.degenerate);
            let pt = rr_bsc(p, bsc_relevance_cap(p)).unwrap();
            close(pt.rate, 1.0, 1e-9);
            close(pt.achiever_param, 0.0, 1e-9);
        }
        close(rr_bsc(0.1, 0.3).unwrap().rate, 0.496, 5e-3);
    }

    #[test]
    fn rr_bsc_errors() {
        assert!(matches!(rr_bsc(0.1, 0.6), Err(Error::Infeasible(_))));
        assert!(matches!(rr_bsc(0.5, 0.1), Err(Error::Degenerate(_))));
        assert_eq!(rr_bsc(0.5, 0.0).unwrap().rate, 0.0);
        assert!(matches!(rr_bsc(0.6, 0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn rr_bsc_increasing_and_convex() {
        for p in [0.05, 0.2, 0.35] {
            let cap = bsc_relevance_cap(p);
            let rs: Vec<f64> = (0..=100)
                .map(|i| rr_bsc(p, cap * i as f64 / 100.0).unwrap().rate)
                .collect();
            for w in rs.windows(3) {
                assert!(w[1] > w[0]);
                assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-12);
            }
        }
    }

    #[test]
    fn rr_bsc_achiever_is_exact() {
        for (p, mu) in [(0.1, 0.3), (0.2, 0.1), (0.05, 0.6), (0.3, 0.05)] {
            let pt = rr_bsc(p, mu).unwrap();
            let j = compose_joint(
                "x",
                &uniform_bit(),
                &[
                    ChainLink::new("y", "x", Channel::bsc(p).unwrap()),
                    ChainLink::new("u", "x", Channel::bsc(pt.achiever_param).unwrap()),
                ],
            )
            .unwrap();
            close(mutual_information(&j, &["y"], &["u"]).unwrap(), mu, 1e-9);
            close(mutual_information(&j, &["x"], &["u"]).unwrap(), pt.rate, 1e-9);
        }
    }

    #[test]
    fn rr_bec_examples() {
        close(rr_bec(0.0, 0.4).unwrap().rate, 0.4, 1e-15);
        close(rr_bec(0.3, 0.0).unwrap().rate, 0.0, 0.0);
        close(rr_bec(0.5, 0.25).unwrap().rate, 0.5, 1e-15);
        assert!(matches!(rr_bec(0.3, 0.71), Err(Error::Infeasible(_))));
        assert!(rr_bec(0.6, 0.1).is_err());
    }

    #[test]
    fn rr_bec_linear_law_on_exact_joint() {
        for eps in [0.1, 0.3, 0.5] {
            for mu in [0.05, 0.2, 0.4] {
                let pt = rr_bec(eps, mu).unwrap();
                let alpha = pt.achiever_param;
                let j = compose_joint(
                    "x",
                    &uniform_bit(),
                    &[
                        ChainLink::new("y", "x", Channel::bec(eps).unwrap()),
                        ChainLink::new("u", "x", Channel::bsc(alpha).unwrap()),
                    ],
                )
                .unwrap();
                let rel = mutual_information(&j, &["y"], &["u"]).unwrap();
                close(rel, (1.0 - eps) * (1.0 - binary_entropy(alpha).unwrap()), 1e-9);
                close(rel, mu, 1e-9);
                close(mutual_information(&j, &["x"], &["u"]).unwrap(), pt.rate, 1e-9);
            }
        }
    }

    #[test]
    fn rr_gaussian_examples() {
        let pt = rr_gaussian(2.0, 0.5, 0.0).unwrap();
        assert_eq!(pt.rate, 0.0);
        assert!(pt.degenerate && pt.achiever_param.is_infinite());

        let r = rr_gaussian(1.0, 1.0, 0.25).unwrap().rate;
        let s2 = 2f64.sqrt();
        close(r, 0.5 * (s2 / (2.0 - s2)).log2(), 1e-14);
        close(r, 0.6358, 1e-4);

        let v = gaussian_achiever_variance(1.0, 1.0);
        close(v, 1.0 / 3.0, 1e-15);
        close(0.5 * (1.0 + 1.0 / v).log2(), 1.0, 1e-15);

        assert!(matches!(rr_gaussian(1.0, 1.0, 0.5), Err(Error::Infeasible(_))));
        assert!(rr_gaussian(0.0, 1.0, 0.1).is_err());
    }

    /// Closed-form relevance of the jointly Gaussian pair (Y, U) with
    /// Y = X + N, U = X + P: I = -½ log2(1 - ρ²).
    #[test]
    fn rr_gaussian_achiever_meets_relevance() {
        for (sx, sn, mu) in [(1.0, 1.0, 0.25), (2.0, 0.5, 0.9), (0.5, 3.0, 0.05)] {
            let pt = rr_gaussian(sx, sn, mu).unwrap();
            let sp = pt.achiever_param;
            let rho2 = sx * sx / ((sx + sn) * (sx + sp));
            close(-0.5 * (1.0 - rho2).log2(), mu, 1e-12);
            close(0.5 * (1.0 + sx / sp).log2(), pt.rate, 1e-12);
        }
    }

    #[test]
    fn rr_gaussian_increasing_and_convex() {
        for (sx, sn) in [(1.0, 1.0), (4.0, 1.0), (1.0, 3.0)] {
            let cap = gaussian_relevance_cap(sx, sn);
            let rs: Vec<f64> = (0..100)
                .map(|i| rr_gaussian(sx, sn, cap * i as f64 / 100.0).unwrap().rate)
                .collect();
            for w in rs.windows(3) {
                assert!(w[1] > w[0]);
                assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-12);
            }
        }
    }

    #[test]
    fn cascade_witness_examples() {
        let single = BscProblem::new(vec![0.1]).unwrap();
        let m = bsc_cascade_sr_witness(&single, &[0.3]).unwrap();
        close(m[0], binary_entropy_inv_unchecked(1.0 - rr_bsc(0.1, 0.3).unwrap().rate), 1e-12);

        // Same crossover and relevance on both layers: no extra noise needed.
        let twin = BscProblem::new(vec![0.2, 0.2]).unwrap();
        let m = bsc_cascade_sr_witness(&twin, &[0.1, 0.1]).unwrap();
        close(m[1], 0.0, 1e-15);

        let bad = BscProblem::new(vec![0.1, 0.1]).unwrap();
        assert!(matches!(
            bsc_cascade_sr_witness(&bad, &[0.1, 0.3]),
            Err(Error::NotOrderable(_))
        ));
    }

    #[test]
    fn cascade_witness_is_exact() {
        let problem = BscProblem::new(vec![0.1, 0.2]).unwrap();
        let mu = [0.3, 0.1];
        let m = bsc_cascade_sr_witness(&problem, &mu).unwrap();
        let j = compose_joint(
            "x",
            &uniform_bit(),
            &[
                ChainLink::new("y1", "x", Channel::bsc(0.1).unwrap()),
                ChainLink::new("y2", "x", Channel::bsc(0.2).unwrap()),
                ChainLink::new("u1", "x", Channel::bsc(m[0]).unwrap()),
                ChainLink::new("u2", "u1", Channel::bsc(m[1]).unwrap()),
            ],
        )
        .unwrap();
        for (l, (&p, &target)) in problem.crossovers().iter().zip(&mu).enumerate() {
            let u = format!("u{}", l + 1);
            let y = format!("y{}", l + 1);
            close(
                mutual_information(&j, &["x"], &[&u]).unwrap(),
                rr_bsc(p, target).unwrap().rate,
                1e-9,
            );
            close(mutual_information(&j, &[&y], &[&u]).unwrap(), target, 1e-9);
        }
    }

    #[test]
    fn counterexample_rr_examples() {
        let pt = counterexample_rr(0.0, 1.0).unwrap();
        assert_eq!((pt.rate, pt.achiever_param), (0.0, 0.0));
        let pt = counterexample_rr(1.0, 1.0).unwrap();
        assert_eq!((pt.rate, pt.achiever_param), (1.0, 1.0));
        assert!(matches!(counterexample_rr(1.2, 1.0), Err(Error::Infeasible(_))));

        let pt = counterexample_rr(0.5, 1.0).unwrap();
        assert_eq!((pt.rate, pt.achiever_param), (0.5, 0.5));
        // U = X1 with probability 1/2, else the fixed symbol 0 (a third letter).
        let r = pt.achiever_param;
        let reveal = Channel::new(vec![vec![r, 0.0, 1.0 - r], vec![0.0, r, 1.0 - r]]).unwrap();
        let j = compose_joint(
            "x1",
            &uniform_bit(),
            &[ChainLink::new("u", "x1", reveal)],
        )
        .unwrap();
        close(mutual_information(&j, &["x1"], &["u"]).unwrap(), 0.5, 1e-12);
    }
}
