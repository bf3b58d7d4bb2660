//! Dispatch from a validated config to the core library.

use std::path::{Path, PathBuf};

use ibregion_core::closed_form::{
    bsc_cascade_sr_witness, counterexample_rr, rr_bec, rr_bsc, rr_gaussian, BscProblem,
};
use ibregion_core::codesim::{converse_check, simulate, SimConfig, Typicality, TypicalityMode};
use ibregion_core::multilayer::{
    counterexample_certify, membership, sr_check, AuxChain, AuxGeneral, LayerProblem, Membership, RegionTuple,
    SearchConfig,
};
use ibregion_core::oracle::{log_grid, quantize_gaussian, rr_curve, rr_oracle, OracleConfig};
use ibregion_core::prob::{Channel, JointDist, ProbVec};
use ibregion_core::{Error, Result};

use crate::config::{ExperimentConfig, Family, TypicalityKind};
use crate::report::{format_g12, Cell, CsvReport};
use crate::{CliError, Command};

/// Certifier resolution when the config sets none.
pub const DEFAULT_RESOLUTION: usize = 20;

/// Runs the configured command and returns its report, footer included.
pub fn run_command(cfg: &ExperimentConfig) -> std::result::Result<CsvReport, CliError> {
    let mut report = match cfg.command {
        Command::Curve => curve(cfg)?,
        Command::Region => region(cfg)?,
        Command::Refinability => refinability(cfg)?,
        Command::Counterexample => counterexample(cfg)?,
        Command::Simulate => simulate_runs(cfg)?,
    };
    report.footer.push(format!("command={}", cfg.command));
    report.footer.push(format!("seed={}", cfg.seed));
    report.footer.push(format!("config_sha256={}", cfg.config_hash));
    report.footer.push(format!("version=ibregion {}", env!("CARGO_PKG_VERSION")));
    Ok(report)
}

/// Oracle settings for the config's family. Quantized Gaussian joints are
/// large, so they get a smaller auxiliary alphabet and a shorter sweep.
pub fn oracle_config(cfg: &ExperimentConfig) -> OracleConfig {
    let mut o = match cfg.family {
        Family::Gaussian { .. } => OracleConfig {
            aux_cardinality: Some(6),
            restarts: 2,
            beta_grid: log_grid(0.5, 512.0, 28),
            convergence_tol: 1e-9,
            max_iterations: 5000,
            ..OracleConfig::default()
        },
        _ => OracleConfig::default(),
    };
    o.seed = cfg.seed;
    if let Some(r) = cfg.restarts {
        o.restarts = r;
    }
    if let Some(r) = cfg.resolution {
        o.grid_resolution = r;
    }
    o
}

fn search_config(cfg: &ExperimentConfig) -> SearchConfig {
    SearchConfig {
        oracle: oracle_config(cfg),
        ..SearchConfig::default()
    }
}

/// Builds the multi-layer problem for a family.
pub fn build_problem(family: &Family) -> Result<LayerProblem> {
    match family {
        Family::Bsc { p } => LayerProblem::bsc(p),
        Family::BecBsc { epsilon, p } => {
            LayerProblem::from_channels(&ProbVec::uniform(2)?, &[Channel::bec(*epsilon)?, Channel::bsc(*p)?])
        }
        Family::Gaussian {
            sigma_x2,
            sigma_n2,
            points,
            span,
        } => {
            let mut source = None;
            let mut channels = Vec::new();
            for &n2 in sigma_n2 {
                let (px, ch) = split_pair(&quantize_gaussian(*sigma_x2, n2, *points, *span)?)?;
                source.get_or_insert(px);
                channels.push(ch);
            }
            let source = source.ok_or_else(|| Error::Usage("gaussian family needs at least one layer".into()))?;
            LayerProblem::from_channels(&source, &channels)
        }
        Family::Counterexample => Ok(LayerProblem::independent_pair()),
        Family::Custom { joint, .. } => LayerProblem::new(joint.clone()),
    }
}

/// `(p(x), p(y|x))` of a two-axis joint. Zero-mass inputs get a uniform row.
fn split_pair(j: &JointDist) -> Result<(ProbVec, Channel)> {
    let (nx, ny) = (j.axes()[0].size, j.axes()[1].size);
    let px = j.marginal(&[j.axes()[0].name.as_str()])?;
    let mut rows = Vec::with_capacity(nx * ny);
    for (x, &m) in px.iter().enumerate() {
        let row = &j.table()[x * ny..(x + 1) * ny];
        if m > 0.0 {
            rows.extend(row.iter().map(|v| v / m));
        } else {
            rows.extend(std::iter::repeat_n(1.0 / ny as f64, ny));
        }
    }
    Ok((ProbVec::new(px)?, Channel::from_flat(nx, ny, rows)?))
}

/// Closed-form single-layer rate on `layer`, when the family has one.
fn closed_form_rate(family: &Family, layer: usize, mu: f64) -> Result<Option<f64>> {
    let rate = match family {
        Family::Bsc { p } => rr_bsc(p[layer], mu)?.rate,
        Family::BecBsc { epsilon, p } => {
            if layer == 0 {
                rr_bec(*epsilon, mu)?.rate
            } else {
                rr_bsc(*p, mu)?.rate
            }
        }
        Family::Gaussian { sigma_x2, sigma_n2, .. } => rr_gaussian(*sigma_x2, sigma_n2[layer], mu)?.rate,
        Family::Counterexample => counterexample_rr(mu, 1.0)?.rate,
        Family::Custom { .. } => return Ok(None),
    };
    Ok(Some(rate))
}

fn curve(cfg: &ExperimentConfig) -> Result<CsvReport> {
    let problem = build_problem(&cfg.family)?;
    let pair = problem.pair(1)?;
    let mut grid = cfg.curve_targets().to_vec();
    grid.sort_by(f64::total_cmp);
    let points = rr_curve(&pair, &grid, &oracle_config(cfg))?;
    let mut report = CsvReport::new(["mu", "R_closed_form", "R_oracle", "gap"]);
    for (&mu, pt) in grid.iter().zip(&points) {
        let closed = closed_form_rate(&cfg.family, 0, mu)?;
        report.push(vec![
            mu.into(),
            closed.into(),
            pt.rate.into(),
            closed.map(|c| (pt.rate - c).abs()).into(),
        ]);
    }
    Ok(report)
}

fn region(cfg: &ExperimentConfig) -> std::result::Result<CsvReport, CliError> {
    let problem = build_problem(&cfg.family)?;
    let rates = cfg.rates.clone().unwrap_or_default();
    let mu = cfg.mu.clone().unwrap_or_default();
    let layers = rates.len();
    let tuple = RegionTuple::new(rates.clone(), mu.clone())?;
    let outcome = membership(&problem, &tuple, &search_config(cfg))?;
    let mut header: Vec<String> = (1..=layers).map(|l| format!("R{l}")).collect();
    header.extend((1..=layers).map(|l| format!("mu{l}")));
    header.extend(["member".to_string(), "witness_file".to_string()]);
    let mut report = CsvReport::new(header);
    let witness_file = match &outcome {
        Membership::Member { witness, .. } => match &cfg.output {
            Some(out) => {
                let path = witness_path(out);
                std::fs::write(&path, witness_text(witness))
                    .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
                Cell::Text(file_name(&path))
            }
            None => {
                eprintln!("ibregion: witness not saved (no output path)");
                Cell::Empty
            }
        },
        Membership::NotFound {
            infeasible,
            best_violation,
        } => {
            eprintln!("ibregion: no witness found (infeasible = {infeasible}, best violation = {best_violation})");
            Cell::Empty
        }
    };
    let mut row: Vec<Cell> = rates.iter().chain(&mu).map(|&v| v.into()).collect();
    row.push(outcome.is_member().into());
    row.push(witness_file);
    report.push(row);
    Ok(report)
}

/// `out.csv` → `out.witness.txt`, next to the report.
fn witness_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned());
    output.with_file_name(format!("{stem}.witness.txt"))
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or(String::new(), |s| s.to_string_lossy().into_owned())
}

/// Witness channel as text: a `sizes` line, then one row per source symbol.
pub fn witness_text(aux: &AuxGeneral) -> String {
    let ch = aux.channel();
    let mut out = String::from("sizes");
    for s in aux.sizes() {
        out.push_str(&format!(" {s}"));
    }
    out.push('\n');
    for x in 0..ch.inputs() {
        let row: Vec<String> = ch.row(x).iter().map(|&v| format_g12(v)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn refinability(cfg: &ExperimentConfig) -> Result<CsvReport> {
    let problem = build_problem(&cfg.family)?;
    let mu = cfg.mu.clone().unwrap_or_default();
    let oracle = oracle_config(cfg);
    let mut targets = Vec::with_capacity(mu.len());
    for (l, &m) in mu.iter().enumerate() {
        let r = match closed_form_rate(&cfg.family, l, m)? {
            Some(r) => r,
            None => rr_oracle(&problem.pair(l + 1)?, m, &oracle)?.rate,
        };
        targets.push(r);
    }
    let sr = sr_check(&problem, &mu, &targets, &search_config(cfg))?;
    let mut report = CsvReport::new([
        "layer",
        "R_target",
        "mu_target",
        "R_witness",
        "mu_witness",
        "refinable",
        "gap",
    ]);
    for l in 0..mu.len() {
        let (rw, mw) = sr.achieved.get(l).copied().unwrap_or((f64::NAN, f64::NAN));
        report.push(vec![
            (l + 1).into(),
            targets[l].into(),
            mu[l].into(),
            rw.into(),
            mw.into(),
            sr.refinable.into(),
            sr.gap.into(),
        ]);
    }
    Ok(report)
}

fn counterexample(cfg: &ExperimentConfig) -> Result<CsvReport> {
    let mu = cfg.mu.as_deref().unwrap_or_default();
    let resolution = cfg.resolution.unwrap_or(DEFAULT_RESOLUTION);
    let cert = counterexample_certify(mu[0], mu[1], resolution)?;
    let mut report = CsvReport::new(["mu1", "mu2", "resolution", "certified_gap"]);
    report.push(vec![mu[0].into(), mu[1].into(), resolution.into(), cert.gap.into()]);
    Ok(report)
}

/// Auxiliary chain used by the simulated code: the closed-form cascade for
/// the binary symmetric family, the oracle's channel otherwise.
fn sim_aux(cfg: &ExperimentConfig, problem: &LayerProblem, mu: &[f64]) -> Result<AuxGeneral> {
    if let Family::Bsc { p } = &cfg.family {
        let steps = bsc_cascade_sr_witness(&BscProblem::new(p.clone())?, mu)?;
        return Ok(AuxChain::bsc_cascade(&steps)?.to_general());
    }
    if problem.layers() != 1 {
        return Err(Error::Usage("multi-layer simulation needs the bsc family".into()));
    }
    let pt = rr_oracle(&problem.pair(1)?, mu[0], &oracle_config(cfg))?;
    let outputs = pt.achieving_channel.outputs();
    AuxGeneral::new(pt.achieving_channel, vec![outputs])
}

fn simulate_runs(cfg: &ExperimentConfig) -> Result<CsvReport> {
    let problem = build_problem(&cfg.family)?;
    let mu = cfg.mu.clone().unwrap_or_default();
    let rates = cfg.rates.clone().unwrap_or_default();
    let aux = sim_aux(cfg, &problem, &mu)?;
    let typicality = Typicality {
        mode: match cfg.typicality {
            TypicalityKind::Robust => TypicalityMode::Robust,
            TypicalityKind::Absolute => TypicalityMode::Absolute,
        },
        epsilon: cfg.epsilon_typ,
    };
    let oracle = oracle_config(cfg);
    let mut report = CsvReport::new([
        "n",
        "seed",
        "layer",
        "empirical_rate",
        "empirical_relevance",
        "encoder_error_prob",
        "converse_ok",
    ]);
    for &n in &cfg.n {
        let sim = SimConfig::new(problem.clone(), aux.clone(), n, rates.clone(), cfg.seed)?.with_typicality(typicality)?;
        let (_, result) = simulate(&sim)?;
        let checks = converse_check(&result, &problem, &oracle)?;
        for (l, c) in checks.iter().enumerate() {
            report.push(vec![
                n.into(),
                cfg.seed.into(),
                (l + 1).into(),
                result.empirical_rate[l].into(),
                result.relevance[l].into(),
                result.encoder_error.into(),
                c.ok.into(),
            ]);
        }
    }
    Ok(report)
}
