//! Flat `key = value` experiment documents with `[section]` headers.
//!
//! Every line is checked and every problem is reported with its line
//! number; a document with any error produces no configuration at all.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use ibregion_core::prob::{Axis, JointDist};

use crate::Command;

/// Accepted section names.
pub const SECTIONS: &[&str] = &["problem", "targets", "oracle", "sim", "output"];

/// Accepted keys.
pub const KEYS: &[&str] = &[
    "family",
    "p",
    "epsilon",
    "sigma_x2",
    "sigma_n2",
    "points",
    "span",
    "mu",
    "mu_grid",
    "rates",
    "n",
    "seed",
    "restarts",
    "resolution",
    "typicality",
    "epsilon_typ",
    "output",
];

const FAMILIES: &str = "bsc, bec_bsc, gaussian, counterexample, or a path to a joint file";

/// One problem found in a configuration document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// 1-based line, or `None` for document-level problems.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// Problem family with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Uniform bit seen through one BSC per layer.
    Bsc { p: Vec<f64> },
    /// Uniform bit; layer 1 through a BEC, layer 2 through a BSC.
    BecBsc { epsilon: f64, p: f64 },
    /// Quantized Gaussian source, one noise variance per layer.
    Gaussian {
        sigma_x2: f64,
        sigma_n2: Vec<f64>,
        points: usize,
        span: f64,
    },
    /// Two independent uniform bits, each layer observing one of them.
    Counterexample,
    /// Joint loaded from a file.
    Custom { path: PathBuf, joint: JointDist },
}

impl Family {
    pub fn layers(&self) -> usize {
        match self {
            Family::Bsc { p } => p.len(),
            Family::BecBsc { .. } | Family::Counterexample => 2,
            Family::Gaussian { sigma_n2, .. } => sigma_n2.len(),
            Family::Custom { joint, .. } => joint.axes().len() - 1,
        }
    }
}

/// Encoder typicality test for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypicalityKind {
    Robust,
    Absolute,
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub family: Family,
    pub mu: Option<Vec<f64>>,
    pub mu_grid: Option<Vec<f64>>,
    pub rates: Option<Vec<f64>>,
    pub n: Vec<usize>,
    pub seed: u64,
    pub restarts: Option<usize>,
    pub resolution: Option<usize>,
    pub typicality: TypicalityKind,
    pub epsilon_typ: f64,
    pub output: Option<PathBuf>,
    /// SHA-256 of the document bytes.
    pub config_hash: String,
}

impl ExperimentConfig {
    /// Relevance targets of `curve`: the grid, else the `mu` list.
    pub fn curve_targets(&self) -> &[f64] {
        self.mu_grid.as_deref().or(self.mu.as_deref()).unwrap_or(&[])
    }
}

struct Entry {
    line: usize,
    value: String,
}

/// Parses and validates a document for `command`. Relative file paths are
/// resolved against `base_dir`.
pub fn parse_config(text: &str, command: Command, base_dir: &Path) -> Result<ExperimentConfig, Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    let mut entries: BTreeMap<&'static str, Entry> = BTreeMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            match name.strip_suffix(']').map(str::trim) {
                Some(n) if SECTIONS.contains(&n) => section = Some(n.to_string()),
                Some(n) => issues.push(issue(line, format!("unknown section [{n}]; expected one of {}", SECTIONS.join(", ")))),
                None => issues.push(issue(line, "malformed section header".into())),
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            issues.push(issue(line, format!("expected 'key = value', got '{content}'")));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            issues.push(issue(line, format!("unknown key '{key}'")));
            continue;
        };
        if section.is_none() {
            issues.push(issue(line, format!("key '{key}' appears before any [section]")));
        }
        if let Some(prev) = entries.get(known) {
            issues.push(issue(line, format!("duplicate key '{key}' (first set on line {})", prev.line)));
            continue;
        }
        entries.insert(known, Entry { line, value: value.to_string() });
    }

    let mut v = Validator { entries: &entries, issues: &mut issues };
    let family = v.family(base_dir);
    let mu = v.list("mu", 0.0, f64::INFINITY);
    let mu_grid = v.grid("mu_grid");
    let rates = v.list("rates", 0.0, f64::INFINITY);
    let n = v.int_list("n", 1, 12).unwrap_or_default();
    let seed = v.uint("seed").unwrap_or(0);
    let restarts = v.int("restarts", 1, 1_000_000);
    let resolution = v.int("resolution", 1, 100_000);
    let typicality = match entries.get("typicality").map(|e| (e.line, e.value.as_str())) {
        None | Some((_, "robust")) => TypicalityKind::Robust,
        Some((_, "absolute")) => TypicalityKind::Absolute,
        Some((line, other)) => {
            v.issues.push(issue(line, format!("typicality must be robust or absolute, got '{other}'")));
            TypicalityKind::Robust
        }
    };
    let epsilon_typ = v.real("epsilon_typ", f64::MIN_POSITIVE, f64::INFINITY, "(0, inf)").unwrap_or(0.1);
    let output = entries.get("output").map(|e| base_dir.join(&e.value));

    if let Some(family) = &family {
        check_command(command, family, &entries, mu.as_deref(), mu_grid.as_deref(), rates.as_deref(), &n, &mut issues);
    }
    if !issues.is_empty() {
        issues.sort_by_key(|i| i.line.unwrap_or(usize::MAX));
        return Err(issues);
    }
    Ok(ExperimentConfig {
        command,
        family: family.expect("family validated"),
        mu,
        mu_grid,
        rates,
        n,
        seed,
        restarts,
        resolution,
        typicality,
        epsilon_typ,
        output,
        config_hash: sha256_hex(text.as_bytes()),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn issue(line: usize, message: String) -> ConfigIssue {
    ConfigIssue { line: Some(line), message }
}

struct Validator<'a> {
    entries: &'a BTreeMap<&'static str, Entry>,
    issues: &'a mut Vec<ConfigIssue>,
}

impl Validator<'_> {
    fn real(&mut self, key: &str, lo: f64, hi: f64, domain: &str) -> Option<f64> {
        let e = self.entries.get(key)?;
        match e.value.parse::<f64>() {
            Ok(x) if x >= lo && x <= hi => Some(x),
            Ok(_) => {
                self.issues.push(issue(e.line, format!("{key} must lie in {domain}")));
                None
            }
            Err(_) => {
                self.issues.push(issue(e.line, format!("{key}: '{}' is not a number", e.value)));
                None
            }
        }
    }

    fn list(&mut self, key: &str, lo: f64, hi: f64) -> Option<Vec<f64>> {
        let e = self.entries.get(key)?;
        let mut out = Vec::new();
        for part in e.value.split(',') {
            match part.trim().parse::<f64>() {
                Ok(x) if x >= lo && x <= hi => out.push(x),
                Ok(x) => {
                    self.issues.push(issue(e.line, format!("{key}: {x} outside [{lo}, {hi}]")));
                    return None;
                }
                Err(_) => {
                    self.issues.push(issue(e.line, format!("{key}: '{}' is not a number", part.trim())));
                    return None;
                }
            }
        }
        Some(out)
    }

    /// `start:stop:count`, inclusive on both ends.
    fn grid(&mut self, key: &str) -> Option<Vec<f64>> {
        let e = self.entries.get(key)?;
        let parts: Vec<&str> = e.value.split(':').map(str::trim).collect();
        let parsed = match parts.as_slice() {
            [a, b, c] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()).zip(c.parse::<usize>().ok()),
            _ => None,
        };
        let Some(((start, stop), count)) = parsed else {
            self.issues.push(issue(e.line, format!("{key} must be start:stop:count, got '{}'", e.value)));
            return None;
        };
        if count == 0 || start < 0.0 || stop < start || (count == 1 && stop != start) {
            self.issues.push(issue(
                e.line,
                format!("{key} needs 0 <= start <= stop and count >= 1 (count 1 only when start = stop)"),
            ));
            return None;
        }
        if count == 1 {
            return Some(vec![start]);
        }
        Some(
            (0..count)
                .map(|i| if i + 1 == count { stop } else { start + (stop - start) * i as f64 / (count - 1) as f64 })
                .collect(),
        )
    }

    fn uint(&mut self, key: &str) -> Option<u64> {
        let e = self.entries.get(key)?;
        match e.value.parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.issues.push(issue(e.line, format!("{key} must be an unsigned 64-bit integer")));
                None
            }
        }
    }

    fn int(&mut self, key: &str, lo: usize, hi: usize) -> Option<usize> {
        let e = self.entries.get(key)?;
        match e.value.parse::<usize>() {
            Ok(v) if (lo..=hi).contains(&v) => Some(v),
            _ => {
                self.issues.push(issue(e.line, format!("{key} must be an integer in [{lo}, {hi}]")));
                None
            }
        }
    }

    fn int_list(&mut self, key: &str, lo: usize, hi: usize) -> Option<Vec<usize>> {
        let e = self.entries.get(key)?;
        let mut out = Vec::new();
        for part in e.value.split(',') {
            match part.trim().parse::<usize>() {
                Ok(v) if (lo..=hi).contains(&v) => out.push(v),
                _ => {
                    self.issues.push(issue(e.line, format!("{key} entries must be integers in [{lo}, {hi}]")));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn family(&mut self, base_dir: &Path) -> Option<Family> {
        let Some(e) = self.entries.get("family") else {
            self.issues.push(ConfigIssue {
                line: None,
                message: format!("missing key 'family'; accepted families: {FAMILIES}"),
            });
            return None;
        };
        let line = e.line;
        let need = |v: &mut Self, key: &str| {
            if !v.entries.contains_key(key) {
                v.issues.push(issue(line, format!("family '{}' requires key '{key}'", e.value)));
            }
        };
        match e.value.as_str() {
            "bsc" => {
                need(self, "p");
                let p = self.list("p", 0.0, 0.5);
                if p.is_none() && self.entries.contains_key("p") {
                    self.note_domain("p", "p must lie in [0, 0.5]");
                }
                Some(Family::Bsc { p: p? })
            }
            "bec_bsc" => {
                need(self, "p");
                need(self, "epsilon");
                let epsilon = self.real("epsilon", 0.0, 0.5, "[0, 0.5]");
                let p = self.real("p", 0.0, 0.5, "[0, 0.5]");
                Some(Family::BecBsc { epsilon: epsilon?, p: p? })
            }
            "gaussian" => {
                need(self, "sigma_x2");
                need(self, "sigma_n2");
                let sigma_x2 = self.real("sigma_x2", f64::MIN_POSITIVE, f64::INFINITY, "(0, inf)");
                let sigma_n2 = self.list("sigma_n2", f64::MIN_POSITIVE, f64::INFINITY);
                let points = if self.entries.contains_key("points") { self.int("points", 2, 257) } else { Some(33) };
                let span = if self.entries.contains_key("span") {
                    self.real("span", f64::MIN_POSITIVE, 50.0, "(0, 50]")
                } else {
                    Some(4.0)
                };
                Some(Family::Gaussian {
                    sigma_x2: sigma_x2?,
                    sigma_n2: sigma_n2?,
                    points: points?,
                    span: span?,
                })
            }
            "counterexample" => Some(Family::Counterexample),
            other => {
                let path = base_dir.join(other);
                if !path.is_file() {
                    self.issues.push(issue(line, format!("family '{other}' is not one of {FAMILIES} (no such file)")));
                    return None;
                }
                match std::fs::read_to_string(&path).map_err(|e| e.to_string()).and_then(|t| parse_joint(&t)) {
                    Ok(joint) => Some(Family::Custom { path, joint }),
                    Err(msg) => {
                        self.issues.push(issue(line, format!("joint file {}: {msg}", path.display())));
                        None
                    }
                }
            }
        }
    }

    /// Rewrites the last issue on `key`'s line with a family-specific message.
    fn note_domain(&mut self, key: &str, message: &str) {
        let line = self.entries[key].line;
        if let Some(last) = self.issues.iter_mut().rev().find(|i| i.line == Some(line)) {
            if last.message.contains("outside") {
                last.message = message.to_string();
            }
        }
    }
}

/// Joint file: a `sizes <|X|> <|Y_1|> … <|Y_L|>` line followed by the
/// table entries, row-major with the last axis fastest. `#` starts a comment.
pub fn parse_joint(text: &str) -> Result<JointDist, String> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());
    let header = lines.next().unwrap_or("");
    let mut words = header.split_whitespace();
    if words.next() != Some("sizes") {
        return Err("must start with a 'sizes' line".into());
    }
    let sizes = words
        .map(|w| w.parse::<usize>().ok().filter(|&s| s > 0).ok_or(format!("bad size '{w}'")))
        .collect::<Result<Vec<_>, _>>()?;
    if sizes.len() < 2 {
        return Err("need sizes for x and at least one layer".into());
    }
    let values = lines
        .flat_map(str::split_whitespace)
        .map(|t| t.parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    let axes: Vec<Axis> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| Axis::new(if i == 0 { "x".to_string() } else { format!("y{i}") }, s))
        .collect();
    JointDist::new(axes, values).map_err(|e| e.to_string())
}

#[allow(clippy::too_many_arguments)]
fn check_command(
    command: Command,
    family: &Family,
    entries: &BTreeMap<&'static str, Entry>,
    mu: Option<&[f64]>,
    mu_grid: Option<&[f64]>,
    rates: Option<&[f64]>,
    n: &[usize],
    issues: &mut Vec<ConfigIssue>,
) {
    let layers = family.layers();
    let line_of = |k: &str| entries.get(k).map(|e| e.line);
    let mut doc = |message: String| issues.push(ConfigIssue { line: None, message });
    let per_layer = |key: &str, got: Option<&[f64]>, doc: &mut dyn FnMut(String)| match got {
        None if line_of(key).is_none() => doc(format!("command {command} requires key '{key}'")),
        Some(v) if v.len() != layers => doc(format!(
            "'{key}' (line {}) has {} entries but the problem has {layers} layers",
            line_of(key).unwrap_or(0),
            v.len()
        )),
        _ => {}
    };
    match command {
        Command::Curve => {
            if mu_grid.is_none() && mu.is_none() && line_of("mu_grid").is_none() && line_of("mu").is_none() {
                doc("command curve requires 'mu_grid' or 'mu'".into());
            }
        }
        Command::Region => {
            per_layer("rates", rates, &mut doc);
            per_layer("mu", mu, &mut doc);
            if let Some(r) = rates {
                if r.windows(2).any(|w| w[1] > w[0]) {
                    doc(format!("'rates' (line {}) must be nonincreasing", line_of("rates").unwrap_or(0)));
                }
            }
        }
        Command::Refinability => per_layer("mu", mu, &mut doc),
        Command::Counterexample => {
            if *family != Family::Counterexample {
                doc("command counterexample requires family = counterexample".into());
            }
            per_layer("mu", mu, &mut doc);
            if let Some(&[m1, m2]) = mu {
                if m2 > m1 || m1 > 1.0 {
                    doc(format!("'mu' (line {}) needs 0 <= mu2 <= mu1 <= 1", line_of("mu").unwrap_or(0)));
                }
            }
        }
        Command::Simulate => {
            per_layer("mu", mu, &mut doc);
            per_layer("rates", rates, &mut doc);
            if n.is_empty() && line_of("n").is_none() {
                doc("command simulate requires key 'n'".into());
            }
            let bsc_ok = matches!(family, Family::Bsc { p } if p.len() <= 2);
            if layers > 1 && !bsc_ok {
                doc("simulate supports multi-layer problems only for the bsc family with at most 2 layers".into());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, command: Command) -> Result<ExperimentConfig, Vec<ConfigIssue>> {
        parse_config(text, command, Path::new("."))
    }

    #[test]
    fn curve_grid_parses() {
        let c = parse("[problem]\nfamily = bsc\np = 0.1\n[targets]\nmu_grid = 0.1:0.5:5\n", Command::Curve).unwrap();
        assert_eq!(c.family, Family::Bsc { p: vec![0.1] });
        assert_eq!(c.curve_targets().len(), 5);
        assert_eq!(c.curve_targets()[4], 0.5);
        assert!((c.curve_targets()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn out_of_domain_p_reported_with_line() {
        let e = parse("[problem]\nfamily = bsc\np = 0.7\n[targets]\nmu = 0.1\n", Command::Curve).unwrap_err();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].line, Some(3));
        assert!(e[0].message.contains("p must lie in [0, 0.5]"), "{}", e[0]);
    }

    #[test]
    fn missing_family_lists_choices() {
        let e = parse("[targets]\nmu = 0.1\n", Command::Curve).unwrap_err();
        assert!(e[0].message.contains("bsc, bec_bsc, gaussian, counterexample"));
    }

    #[test]
    fn every_error_reported() {
        let text = "family = bsc\n[problem]\nbogus = 1\np = x\n[nope]\nseed = -1\n";
        let e = parse(text, Command::Curve).unwrap_err();
        let lines: Vec<Option<usize>> = e.iter().map(|i| i.line).collect();
        for l in [1, 3, 4, 5, 6] {
            assert!(lines.contains(&Some(l)), "{e:?}");
        }
    }

    #[test]
    fn command_requirements() {
        let e = parse("[problem]\nfamily = bsc\np = 0.1, 0.2\n[targets]\nmu = 0.3\n", Command::Region).unwrap_err();
        assert!(e.iter().any(|i| i.message.contains("requires key 'rates'")));
        assert!(e.iter().any(|i| i.message.contains("2 layers")));
        let e = parse("[problem]\nfamily = bsc\np = 0.1\n[targets]\nmu = 0.5, 0.5\n", Command::Counterexample).unwrap_err();
        assert!(e.iter().any(|i| i.message.contains("family = counterexample")));
    }

    #[test]
    fn joint_file_format() {
        let j = parse_joint("# two layers\nsizes 2 2 1\n0.5 0\n0.1 0.4\n").unwrap();
        assert_eq!(j.axes().len(), 3);
        assert_eq!(j.axes()[2].name, "y2");
        assert!(parse_joint("sizes 2 2\n0.5 0.5 0.5 0.5\n").is_err());
        assert!(parse_joint("0.5 0.5").is_err());
    }
}
