//! Desk-scale nested random coding with exact relevance evaluation.
//!
//! A codebook holds `⌈2^{nR_L}⌉` top-layer sequences drawn i.i.d. from
//! `p(u_L)`; under every higher-layer index tuple, layer `l` holds
//! `⌈2^{n(R_l − R_{l+1})}⌉` sequences drawn symbol-wise from
//! `p(u_l | u_{l+1}, …, u_L)`. The encoder returns the first index tuple,
//! scanning `(i_L, …, i_1)` lexicographically, whose codewords are jointly
//! typical with the source block, and falls back to the all-first tuple.
//!
//! Because `n ≤ 12`, every source block can be enumerated, so the layer
//! relevances `I(Y_l^n; Z_l)` are computed exactly rather than estimated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::multilayer::{AuxGeneral, LayerProblem};
use crate::oracle::{rr_oracle, OracleConfig};
use crate::prob::{entropy_raw, Channel};

pub const MAX_BLOCKLENGTH: usize = 12;
pub const MAX_CODEWORDS: usize = 4096;
/// Budget on `|X|^n · |Y_l|^n` per evaluated layer.
pub const MAX_STATES: usize = 1 << 24;
/// Slack of the converse check.
pub const CONVERSE_SLACK: f64 = 1e-3;

const CODEBOOK_HEADER: &str = "ibregion-codebook";
const CODEBOOK_VERSION: u32 = 1;

/// How empirical frequencies are compared with the reference joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TypicalityMode {
    /// `|π(a) − p(a)| ≤ ε p(a)` for every letter.
    #[default]
    Robust,
    /// `|π(a) − p(a)| ≤ ε` for every letter.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Typicality {
    pub mode: TypicalityMode,
    pub epsilon: f64,
}

impl Default for Typicality {
    fn default() -> Self {
        Self {
            mode: TypicalityMode::Robust,
            epsilon: 0.1,
        }
    }
}

impl Typicality {
    /// Whether the letter counts of a length-`n` block match `reference`.
    pub fn accepts(&self, counts: &[u32], n: usize, reference: &[f64]) -> bool {
        let n = n as f64;
        counts.iter().zip(reference).all(|(&c, &p)| {
            let d = (c as f64 / n - p).abs();
            match self.mode {
                TypicalityMode::Robust => d <= self.epsilon * p,
                TypicalityMode::Absolute => d <= self.epsilon,
            }
        })
    }
}

/// Everything that determines a simulation run.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub problem: LayerProblem,
    /// Test channel whose statistics drive code generation and typicality.
    pub aux: AuxGeneral,
    pub n: usize,
    /// Per-letter rates, nonincreasing across layers.
    pub rates: Vec<f64>,
    pub typicality: Typicality,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(problem: LayerProblem, aux: AuxGeneral, n: usize, rates: Vec<f64>, seed: u64) -> Result<Self> {
        let cfg = Self {
            problem,
            aux,
            n,
            rates,
            typicality: Typicality::default(),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_typicality(mut self, typicality: Typicality) -> Result<Self> {
        self.typicality = typicality;
        self.validate()?;
        Ok(self)
    }

    pub fn layers(&self) -> usize {
        self.rates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let layers = self.problem.layers();
        if self.rates.len() != layers || self.aux.layers() != layers {
            return Err(Error::Usage(format!(
                "problem has {layers} layers, rates {} and aux {}",
                self.rates.len(),
                self.aux.layers()
            )));
        }
        if self.aux.channel().inputs() != self.problem.x_size() {
            return Err(Error::Usage("aux input size differs from |X|".into()));
        }
        if self.n == 0 || self.n > MAX_BLOCKLENGTH {
            return Err(Error::Usage(format!(
                "blocklength {} outside 1..={MAX_BLOCKLENGTH}",
                self.n
            )));
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::Domain {
                name: "rate",
                value: *r,
                domain: "[0, inf)",
            });
        }
        if self.rates.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Usage("rates must be nonincreasing across layers".into()));
        }
        if !(self.typicality.epsilon > 0.0) {
            return Err(Error::Domain {
                name: "epsilon_typ",
                value: self.typicality.epsilon,
                domain: "(0, inf)",
            });
        }
        if layers > 1 && self.problem.x_size() > 2 {
            return Err(Error::Budget("multi-layer simulation supports binary sources only".into()));
        }
        let counts = layer_counts(self.n, &self.rates);
        for l in 0..layers {
            let total = codewords_in_layer(&counts, l);
            if total > MAX_CODEWORDS {
                return Err(Error::Budget(format!(
                    "layer {} needs {total} codewords, over {MAX_CODEWORDS}",
                    l + 1
                )));
            }
        }
        let nx = self.problem.x_size();
        for l in 1..=layers {
            let ny = self.problem.pair(l)?.axes()[1].size;
            let states = (nx * ny).checked_pow(self.n as u32).unwrap_or(usize::MAX);
            if states > MAX_STATES {
                return Err(Error::Budget(format!(
                    "|X|^n |Y{l}|^n = {states} states exceeds {MAX_STATES}"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of a canonical description (bit-exact floats).
    pub fn hash(&self) -> String {
        let mut s = format!("n={};rates=", self.n);
        for r in &self.rates {
            s.push_str(&format!("{:016x},", r.to_bits()));
        }
        s.push_str(&format!(
            ";typ={:?}:{:016x};sizes={:?};aux=",
            self.typicality.mode,
            self.typicality.epsilon.to_bits(),
            self.aux.sizes()
        ));
        for v in self.aux.channel().as_flat() {
            s.push_str(&format!("{:016x},", v.to_bits()));
        }
        s.push_str(";joint=");
        for v in self.problem.joint().table() {
            s.push_str(&format!("{:016x},", v.to_bits()));
        }
        hex(&Sha256::digest(s.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `⌈2^{n(R_l − R_{l+1})}⌉` per layer (with `R_{L+1} = 0`), layer 1 first.
pub fn layer_counts(n: usize, rates: &[f64]) -> Vec<usize> {
    (0..rates.len())
        .map(|l| {
            let next = rates.get(l + 1).copied().unwrap_or(0.0);
            let e = n as f64 * (rates[l] - next);
            // keep exact powers of two exact
            let v = (e.exp2() - 1e-9).ceil();
            if v > usize::MAX as f64 {
                usize::MAX
            } else {
                v.max(1.0) as usize
            }
        })
        .collect()
}

fn codewords_in_layer(counts: &[usize], layer: usize) -> usize {
    counts[layer..].iter().fold(1usize, |a, &c| a.saturating_mul(c))
}

/// Layered codewords. Layer `l` (0-based) stores one sequence per index
/// tuple `(i_L, …, i_l)`, row-major with `i_L` slowest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    n: usize,
    counts: Vec<usize>,
    sizes: Vec<usize>,
    layers: Vec<Vec<u16>>,
    seed: u64,
    config_hash: String,
}

impl Codebook {
    /// Explicit construction; `layers[l]` concatenates the layer's
    /// codewords in index order.
    pub fn from_layers(n: usize, counts: Vec<usize>, sizes: Vec<usize>, layers: Vec<Vec<u16>>) -> Result<Self> {
        let cb = Self {
            n,
            counts,
            sizes,
            layers,
            seed: 0,
            config_hash: String::new(),
        };
        cb.validate()?;
        Ok(cb)
    }

    fn validate(&self) -> Result<()> {
        let l = self.counts.len();
        if l == 0 || self.sizes.len() != l || self.layers.len() != l || self.n == 0 {
            return Err(Error::Usage("codebook shape is inconsistent".into()));
        }
        for k in 0..l {
            let want = codewords_in_layer(&self.counts, k) * self.n;
            if self.layers[k].len() != want {
                return Err(Error::Usage(format!(
                    "layer {} holds {} symbols, expected {want}",
                    k + 1,
                    self.layers[k].len()
                )));
            }
            if self.layers[k].iter().any(|&s| s as usize >= self.sizes[k]) {
                return Err(Error::Usage(format!("layer {} has a symbol out of range", k + 1)));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Codewords per fixed higher-layer indices, layer 1 first.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn layers(&self) -> usize {
        self.counts.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    /// Number of distinct values of `Z_l = (i_l, …, i_L)`.
    pub fn index_range(&self, layer: usize) -> usize {
        codewords_in_layer(&self.counts, layer)
    }

    /// Codeword of layer `l` at flat index `(i_L, …, i_l)`.
    pub fn codeword(&self, layer: usize, flat: usize) -> &[u16] {
        &self.layers[layer][flat * self.n..(flat + 1) * self.n]
    }

    /// Versioned text form: header lines, then one codeword per line.
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = format!(
            "{CODEBOOK_HEADER} {CODEBOOK_VERSION}\nseed {}\nconfig {}\nn {}\ncounts {}\nsizes {}\n",
            self.seed,
            if self.config_hash.is_empty() { "-" } else { &self.config_hash },
            self.n,
            join(&self.counts),
            join(&self.sizes)
        );
        for (l, layer) in self.layers.iter().enumerate() {
            s.push_str(&format!("layer {}\n", l + 1));
            for cw in layer.chunks(self.n) {
                let line: Vec<String> = cw.iter().map(|v| v.to_string()).collect();
                s.push_str(&line.join(" "));
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let version = header_field(&mut lines, CODEBOOK_HEADER)?;
        if version != CODEBOOK_VERSION.to_string() {
            return Err(text_error(format!("unsupported version {version}")));
        }
        let seed: u64 = header_field(&mut lines, "seed")?
            .parse()
            .map_err(|e| text_error(format!("seed: {e}")))?;
        let hash = header_field(&mut lines, "config")?;
        let n: usize = header_field(&mut lines, "n")?
            .parse()
            .map_err(|e| text_error(format!("n: {e}")))?;
        let counts = parse_list(&header_field(&mut lines, "counts")?)?;
        let sizes = parse_list(&header_field(&mut lines, "sizes")?)?;
        let mut layers = Vec::with_capacity(counts.len());
        for l in 0..counts.len() {
            if header_field(&mut lines, "layer")? != (l + 1).to_string() {
                return Err(text_error(format!("expected layer {}", l + 1)));
            }
            let rows = codewords_in_layer(&counts, l);
            let mut syms = Vec::with_capacity(rows.saturating_mul(n));
            for _ in 0..rows {
                let (i, line) = lines.next().ok_or_else(|| text_error("truncated codewords".into()))?;
                let before = syms.len();
                for t in line.split(' ') {
                    syms.push(t.parse::<u16>().map_err(|e| text_error(format!("line {}: {e}", i + 1)))?);
                }
                if syms.len() - before != n {
                    return Err(text_error(format!("line {}: codeword length differs from n", i + 1)));
                }
            }
            layers.push(syms);
        }
        if let Some((i, _)) = lines.next() {
            return Err(text_error(format!("line {}: trailing content", i + 1)));
        }
        let mut cb = Self::from_layers(n, counts, sizes, layers)?;
        cb.seed = seed;
        cb.config_hash = if hash == "-" { String::new() } else { hash };
        Ok(cb)
    }
}

fn text_error(msg: String) -> Error {
    Error::Usage(format!("codebook text: {msg}"))
}

fn header_field<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<String> {
    let (i, line) = lines
        .next()
        .ok_or_else(|| text_error(format!("missing '{key}' line")))?;
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .map(str::to_string)
        .ok_or_else(|| text_error(format!("line {}: expected '{key}'", i + 1)))
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(' ')
        .map(|t| t.parse().map_err(|e| text_error(format!("'{t}': {e}"))))
        .collect()
}

/// Joint `p(x, u_1, …, u_L)` of the configuration, `x` slowest.
fn augmented_joint(cfg: &SimConfig) -> Result<Vec<f64>> {
    let px = cfg.problem.joint().marginal(&["x"])?;
    let q = cfg.aux.channel();
    let mut out = Vec::with_capacity(px.len() * q.outputs());
    for (x, p) in px.iter().enumerate() {
        out.extend(q.row(x).iter().map(|w| p * w));
    }
    Ok(out)
}

fn sample(rng: &mut ChaCha8Rng, weights: &[f64]) -> u16 {
    let total: f64 = weights.iter().sum();
    let mut t = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = i;
            if t < w {
                return i as u16;
            }
            t -= w;
        }
    }
    last as u16
}

/// Draws the codebook; fully determined by the configuration and seed.
pub fn generate_codebook(cfg: &SimConfig) -> Result<Codebook> {
    cfg.validate()?;
    let sizes = cfg.aux.sizes().to_vec();
    let layers = sizes.len();
    let total: usize = sizes.iter().product();
    // p(u_1, …, u_L), u_1 slowest
    let joint = augmented_joint(cfg)?;
    let mut pu = vec![0.0; total];
    for (k, v) in joint.iter().enumerate() {
        pu[k % total] += v;
    }
    let counts = layer_counts(cfg.n, &cfg.rates);
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out: Vec<Vec<u16>> = vec![Vec::new(); layers];
    for l in (0..layers).rev() {
        // p(u_l, …, u_L) over the tail product, u_l slowest
        let tail: usize = sizes[l..].iter().product();
        let above: usize = sizes[l + 1..].iter().product();
        let mut ptail = vec![0.0; tail];
        for (k, v) in pu.iter().enumerate() {
            ptail[k % tail] += v;
        }
        let parents = if l + 1 < layers { codewords_in_layer(&counts, l + 1) } else { 1 };
        let mut seqs = Vec::with_capacity(parents * counts[l] * n);
        let mut weights = vec![0.0; sizes[l]];
        for parent in 0..parents {
            // tail symbols above layer l at each position, for this parent
            let mut ctx = vec![0usize; n];
            for k in l + 1..layers {
                let cw = &out[k][flat_index_for(&counts, l + 1, k, parent) * n..][..n];
                for t in 0..n {
                    ctx[t] = ctx[t] * sizes[k] + cw[t] as usize;
                }
            }
            for _ in 0..counts[l] {
                for &c in &ctx {
                    for (u, w) in weights.iter_mut().enumerate() {
                        *w = ptail[u * above + c];
                    }
                    seqs.push(sample(&mut rng, &weights));
                }
            }
        }
        out[l] = seqs;
    }
    let mut cb = Codebook::from_layers(n, counts, sizes, out)?;
    cb.seed = cfg.seed;
    cb.config_hash = cfg.hash();
    Ok(cb)
}

/// Flat index in layer `k` of the ancestor of the layer-`from` codeword
/// with flat index `flat` (`k ≥ from`).
fn flat_index_for(counts: &[usize], from: usize, k: usize, flat: usize) -> usize {
    let below: usize = counts[from..k].iter().product();
    flat / below
}

/// Encoder outcome for one source block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Encoding {
    /// Flat layer-1 index `(i_L, …, i_1)`; `Z_l` is `flat / Π_{k<l} count_k`.
    pub flat: usize,
    /// The all-first fallback was used.
    pub fallback: bool,
}

/// Precomputed encoder state.
pub struct Encoder<'a> {
    codebook: &'a Codebook,
    typ: Typicality,
    px: Vec<f64>,
    joint: Vec<f64>,
}

impl<'a> Encoder<'a> {
    pub fn new(codebook: &'a Codebook, cfg: &SimConfig) -> Result<Self> {
        if codebook.sizes != cfg.aux.sizes() || codebook.n != cfg.n {
            return Err(Error::Usage("codebook does not match the configuration".into()));
        }
        Ok(Self {
            codebook,
            typ: cfg.typicality,
            px: cfg.problem.joint().marginal(&["x"])?,
            joint: augmented_joint(cfg)?,
        })
    }

    /// First jointly typical index tuple in `(i_L, …, i_1)` order, or the
    /// all-first tuple when the block or every tuple is atypical.
    pub fn encode(&self, x: &[u16]) -> Encoding {
        let cb = self.codebook;
        let n = cb.n;
        let mut xc = vec![0u32; self.px.len()];
        for &s in x {
            xc[s as usize] += 1;
        }
        let fallback = Encoding { flat: 0, fallback: true };
        if !self.typ.accepts(&xc, n, &self.px) {
            return fallback;
        }
        let layers = cb.layers();
        let mut counts = vec![0u32; self.joint.len()];
        let mut cells = vec![0usize; n];
        // layer-1 flat order is exactly the lexicographic (i_L, …, i_1) scan
        for flat in 0..cb.index_range(0) {
            cells.iter_mut().zip(x).for_each(|(c, &s)| *c = s as usize);
            let mut below = 1;
            for l in 0..layers {
                let idx = flat / below;
                let cw = cb.codeword(l, idx);
                for t in 0..n {
                    cells[t] = cells[t] * cb.sizes[l] + cw[t] as usize;
                }
                below *= cb.counts[l];
            }
            counts.iter_mut().for_each(|c| *c = 0);
            for &c in &cells {
                counts[c] += 1;
            }
            if self.typ.accepts(&counts, n, &self.joint) {
                return Encoding { flat, fallback: false };
            }
        }
        fallback
    }
}

/// Exact per-layer statistics of one simulated code.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub n: usize,
    pub seed: u64,
    /// `(1/n) log2 |range(Z_l)|`.
    pub empirical_rate: Vec<f64>,
    /// `(1/n) I(Y_l^n; Z_l)`.
    pub relevance: Vec<f64>,
    /// `(1/n) I(X^n; Z_l) = (1/n) H(Z_l)`.
    pub info_x: Vec<f64>,
    /// Probability that the encoder fell back to the all-first tuple.
    pub encoder_error: f64,
    /// `Z_{l+1}` is a function of `Z_l` on every source block.
    pub nested: bool,
}

/// Enumerates every source block and computes the layer relevances exactly.
pub fn exact_relevance(codebook: &Codebook, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let enc = Encoder::new(codebook, cfg)?;
    let n = cfg.n;
    let px = cfg.problem.joint().marginal(&["x"])?;
    let nx = px.len();
    let blocks = nx.pow(n as u32);

    let block_of = |mut b: usize| -> Vec<u16> {
        let mut x = vec![0u16; n];
        for t in (0..n).rev() {
            x[t] = (b % nx) as u16;
            b /= nx;
        }
        x
    };
    let encoded: Vec<(f64, Encoding)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let x = block_of(b);
            let p: f64 = x.iter().map(|&s| px[s as usize]).product();
            (p, enc.encode(&x))
        })
        .collect();
    let encoder_error: f64 = encoded.iter().filter(|e| e.1.fallback).map(|e| e.0).sum();

    let layers = cfg.layers();
    let mut empirical_rate = Vec::with_capacity(layers);
    let mut relevance = Vec::with_capacity(layers);
    let mut info_x = Vec::with_capacity(layers);
    let mut nested = true;
    let mut below = 1;
    for l in 0..layers {
        let range = codebook.index_range(l);
        let z: Vec<usize> = encoded.iter().map(|e| e.1.flat / below).collect();
        if l + 1 < layers {
            // Z_{l+1} = Z_l / count_l by construction; confirm on the map
            let mut seen = vec![usize::MAX; range];
            let next_below = below * codebook.counts[l];
            for e in &encoded {
                let (a, b) = (e.1.flat / below, e.1.flat / next_below);
                if seen[a] == usize::MAX {
                    seen[a] = b;
                } else if seen[a] != b {
                    nested = false;
                }
            }
        }
        below *= codebook.counts[l];

        let mut pz = vec![0.0; range];
        for (e, &zi) in encoded.iter().zip(&z) {
            pz[zi] += e.0;
        }
        let hz = entropy_raw(&pz);
        let yl = cfg.problem.pair(l + 1)?;
        let ny = yl.axes()[1].size;
        let pyx = Channel::from_unnormalized(nx, ny, conditional_rows(yl.table(), nx, ny));
        let (hy, hyz) = layer_entropies(&encoded, &z, range, &pyx, n);
        empirical_rate.push((range as f64).log2() / n as f64);
        relevance.push(((hy - hyz) / n as f64).max(0.0));
        info_x.push(hz / n as f64);
    }
    Ok(SimResult {
        n,
        seed: cfg.seed,
        empirical_rate,
        relevance,
        info_x,
        encoder_error,
        nested,
    })
}

fn conditional_rows(table: &[f64], nx: usize, ny: usize) -> Vec<f64> {
    let mut rows = table.to_vec();
    for x in 0..nx {
        let s: f64 = rows[x * ny..(x + 1) * ny].iter().sum();
        for v in &mut rows[x * ny..(x + 1) * ny] {
            *v = if s > 0.0 { *v / s } else { 1.0 / ny as f64 };
        }
    }
    rows
}

/// `p(y^n | x^n)` over all `y^n`, `y_1` slowest.
fn block_likelihood(x: &[u16], pyx: &Channel, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    for &s in x {
        let row = pyx.row(s as usize);
        let prev = std::mem::take(out);
        out.reserve(prev.len() * row.len());
        for p in prev {
            out.extend(row.iter().map(|w| p * w));
        }
    }
}

/// `(H(Y^n), H(Y^n | Z))` with `Y^n` drawn from the enumerated blocks.
fn layer_entropies(encoded: &[(f64, Encoding)], z: &[usize], range: usize, pyx: &Channel, n: usize) -> (f64, f64) {
    let nx = pyx.inputs();
    let ny = pyx.outputs();
    let ystates = ny.pow(n as u32);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); range];
    for (b, &zi) in z.iter().enumerate() {
        if encoded[b].0 > 0.0 {
            groups[zi].push(b);
        }
    }
    let block_of = |mut b: usize| -> Vec<u16> {
        let mut x = vec![0u16; n];
        for t in (0..n).rev() {
            x[t] = (b % nx) as u16;
            b /= nx;
        }
        x
    };
    // fixed chunks merged in order keep the sums deterministic
    let parts: Vec<(Vec<f64>, f64)> = groups
        .par_chunks(range.div_ceil(64).max(1))
        .map(|chunk| {
            let mut py = vec![0.0; ystates];
            let mut hyz = 0.0;
            let mut acc = vec![0.0; ystates];
            let mut lik = Vec::with_capacity(ystates);
            for members in chunk {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for &b in members {
                    block_likelihood(&block_of(b), pyx, &mut lik);
                    let p = encoded[b].0;
                    acc.iter_mut().zip(&lik).for_each(|(a, l)| *a += p * l);
                }
                let pz: f64 = acc.iter().sum();
                if pz > 0.0 {
                    hyz += entropy_raw(&acc) + pz * pz.log2();
                }
                py.iter_mut().zip(&acc).for_each(|(a, v)| *a += v);
            }
            (py, hyz)
        })
        .collect();
    let mut py = vec![0.0; ystates];
    let mut hyz = 0.0;
    for (part, h) in &parts {
        py.iter_mut().zip(part).for_each(|(a, v)| *a += v);
        hyz += h;
    }
    (entropy_raw(&py), hyz)
}

/// Codebook generation followed by exact evaluation.
pub fn simulate(cfg: &SimConfig) -> Result<(Codebook, SimResult)> {
    let cb = generate_codebook(cfg)?;
    let res = exact_relevance(&cb, cfg)?;
    Ok((cb, res))
}

/// Outcome of the converse check on one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverseCheck {
    pub layer: usize,
    pub empirical_rate: f64,
    pub relevance: f64,
    /// Single-layer rate-relevance value at the empirical relevance.
    pub bound: f64,
    pub ok: bool,
}

/// Checks `(1/n) log2 |range(Z_l)| ≥ R_{X→Y_l}((1/n) I(Y_l^n; Z_l)) − 1e-3`
/// on every layer. A failure indicates a bug.
pub fn converse_check(result: &SimResult, problem: &LayerProblem, oracle: &OracleConfig) -> Result<Vec<ConverseCheck>> {
    let mut out = Vec::with_capacity(result.relevance.len());
    for (l, (&rate, &rel)) in result.empirical_rate.iter().zip(&result.relevance).enumerate() {
        let pair = problem.pair(l + 1)?;
        let cap = problem.relevance_cap(l + 1)?;
        let bound = if rel <= 0.0 { 0.0 } else { rr_oracle(&pair, rel.min(cap), oracle)?.rate };
        out.push(ConverseCheck {
            layer: l + 1,
            empirical_rate: rate,
            relevance: rel,
            bound,
            ok: rate >= bound - CONVERSE_SLACK,
        });
    }
    Ok(out)
}
