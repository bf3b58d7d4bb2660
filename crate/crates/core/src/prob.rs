//! Finite-alphabet probability arithmetic.
//!
//! Every information quantity here is measured in bits and uses the
//! convention `0 · log 0 = 0`. Inputs that are off by more than the stated
//! tolerances are rejected; nothing is renormalized silently.

use crate::error::{check_unit, Error, Result};

/// Tolerance on the total mass of a probability vector or channel row.
pub const PROB_TOL: f64 = 1e-12;
/// Tolerance on the total mass of a joint table.
pub const JOINT_TOL: f64 = 1e-10;

/// `p · log2(1/p)` with the `0 · log 0 = 0` convention.
#[inline]
pub(crate) fn surprisal_term(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Entropy of an arbitrary nonnegative weight slice, without validation.
pub(crate) fn entropy_raw(weights: &[f64]) -> f64 {
    weights.iter().copied().map(surprisal_term).sum()
}

fn check_weights(weights: &[f64], tol: f64, what: &str) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidDistribution(format!("{what} is empty")));
    }
    if let Some((i, w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !w.is_finite() || **w < 0.0)
    {
        return Err(Error::InvalidDistribution(format!(
            "{what} has invalid weight {w} at index {i}"
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(Error::InvalidDistribution(format!(
            "{what} sums to {total}, not 1"
        )));
    }
    Ok(())
}

/// A probability vector on a finite alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVec {
    mass: Vec<f64>,
}

impl ProbVec {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        check_weights(&mass, PROB_TOL, "probability vector")?;
        Ok(Self { mass })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        Ok(Self {
            mass: vec![1.0 / size as f64; size],
        })
    }

    /// Bernoulli distribution `(1 - p, p)`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        check_unit("p", p)?;
        Ok(Self {
            mass: vec![1.0 - p, p],
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.mass.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }
}

/// Shannon entropy `-Σ p_i log2 p_i`.
pub fn entropy(p: &ProbVec) -> f64 {
    entropy_raw(p.as_slice())
}

/// Binary entropy function `H_b(p)`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    check_unit("p", p)?;
    Ok(binary_entropy_unchecked(p))
}

#[inline]
pub(crate) fn binary_entropy_unchecked(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    // ln_1p keeps the (1 - p) term accurate for tiny p.
    -p * p.log2() - (1.0 - p) * (-p).ln_1p() / std::f64::consts::LN_2
}

/// Inverse of `H_b` restricted to `[0, 1/2]`, by bisection.
///
/// `H_b` is strictly increasing on `[0, 1/2]`, so the bracket always holds
/// the unique preimage. The returned value is within `1e-12` of it.
pub fn binary_entropy_inv(h: f64) -> Result<f64> {
    check_unit("h", h)?;
    Ok(binary_entropy_inv_unchecked(h))
}

pub(crate) fn binary_entropy_inv_unchecked(h: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    if h >= 1.0 {
        return 0.5;
    }
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy_unchecked(mid) < h {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Crossover of two cascaded binary symmetric channels, `a(1-b) + b(1-a)`.
pub fn convolve_star(a: f64, b: f64) -> Result<f64> {
    check_unit("a", a)?;
    check_unit("b", b)?;
    Ok(star(a, b))
}

#[inline]
pub(crate) fn star(a: f64, b: f64) -> f64 {
    a * (1.0 - b) + b * (1.0 - a)
}

/// Entropy of a binary erasure channel output with uniform input:
/// `ε log2(1/ε) + (1-ε) log2(2/(1-ε))`, which equals `H_b(ε) + 1 - ε`.
pub fn erasure_entropy(eps: f64) -> Result<f64> {
    check_unit("epsilon", eps)?;
    Ok(binary_entropy_unchecked(eps) + (1.0 - eps))
}

/// A row-stochastic matrix `p(output | input)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    inputs: usize,
    outputs: usize,
    rows: Vec<f64>,
}

impl Channel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let inputs = rows.len();
        let outputs = rows.first().map_or(0, Vec::len);
        if inputs == 0 || outputs == 0 {
            return Err(Error::InvalidDistribution("channel has no entries".into()));
        }
        if rows.iter().any(|r| r.len() != outputs) {
            return Err(Error::Usage("channel rows have unequal lengths".into()));
        }
        Self::from_flat(inputs, outputs, rows.into_iter().flatten().collect())
    }

    /// Builds a channel from a row-major buffer of `inputs * outputs` entries.
    pub fn from_flat(inputs: usize, outputs: usize, rows: Vec<f64>) -> Result<Self> {
        if inputs == 0 || outputs == 0 || rows.len() != inputs * outputs {
            return Err(Error::Usage(format!(
                "channel buffer of length {} does not match {inputs}x{outputs}",
                rows.len()
            )));
        }
        for (i, row) in rows.chunks(outputs).enumerate() {
            check_weights(row, PROB_TOL, &format!("channel row {i}"))?;
        }
        Ok(Self {
            inputs,
            outputs,
            rows,
        })
    }

    /// Normalizes each row of a nonnegative buffer, then validates.
    /// Intended for internally generated channels (random starts, updates).
    pub(crate) fn from_unnormalized(inputs: usize, outputs: usize, mut rows: Vec<f64>) -> Self {
        for row in rows.chunks_mut(outputs) {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|w| *w /= total);
            } else {
                row.iter_mut().for_each(|w| *w = 1.0 / outputs as f64);
            }
        }
        Self {
            inputs,
            outputs,
            rows,
        }
    }

    /// Binary symmetric channel with crossover `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        check_unit("p", p)?;
        Ok(Self {
            inputs: 2,
            outputs: 2,
            rows: vec![1.0 - p, p, p, 1.0 - p],
        })
    }

    /// Binary erasure channel; output alphabet `{0, e, 1}` in that order.
    pub fn bec(eps: f64) -> Result<Self> {
        check_unit("epsilon", eps)?;
        Ok(Self {
            inputs: 2,
            outputs: 3,
            rows: vec![1.0 - eps, eps, 0.0, 0.0, eps, 1.0 - eps],
        })
    }

    pub fn identity(size: usize) -> Self {
        let mut rows = vec![0.0; size * size];
        for i in 0..size {
            rows[i * size + i] = 1.0;
        }
        Self {
            inputs: size,
            outputs: size,
            rows,
        }
    }

    /// Every input maps to output 0.
    pub fn constant(inputs: usize, outputs: usize) -> Self {
        let mut rows = vec![0.0; inputs * outputs];
        for i in 0..inputs {
            rows[i * outputs] = 1.0;
        }
        Self {
            inputs,
            outputs,
            rows,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn row(&self, input: usize) -> &[f64] {
        &self.rows[input * self.outputs..(input + 1) * self.outputs]
    }

    pub fn get(&self, input: usize, output: usize) -> f64 {
        self.rows[input * self.outputs + output]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.rows
    }

    /// Cascade `self` followed by `next`: `p(w|x) = Σ_u p(u|x) p(w|u)`.
    pub fn then(&self, next: &Channel) -> Result<Channel> {
        if self.outputs != next.inputs {
            return Err(Error::Usage(format!(
                "cannot cascade {}x{} into {}x{}",
                self.inputs, self.outputs, next.inputs, next.outputs
            )));
        }
        let mut rows = vec![0.0; self.inputs * next.outputs];
        for x in 0..self.inputs {
            let out = &mut rows[x * next.outputs..(x + 1) * next.outputs];
            for (u, &w) in self.row(x).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(next.row(u)) {
                    *o += w * v;
                }
            }
        }
        Ok(Channel::from_unnormalized(self.inputs, next.outputs, rows))
    }

    /// Output distribution for the given input distribution.
    pub fn push_forward(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs];
        for (x, &px) in input.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.row(x)) {
                *o += px * w;
            }
        }
        out
    }
}

/// A named variable with its alphabet size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Axis {
    pub name: String,
    pub size: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Self {
            name: name.into(),
            size,
        }
    }
}

/// Dense joint probability table over named axes, row-major with the last
/// axis varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDist {
    axes: Vec<Axis>,
    table: Vec<f64>,
}

impl JointDist {
    pub fn new(axes: Vec<Axis>, table: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Usage("joint distribution needs at least one axis".into()));
        }
        for (i, a) in axes.iter().enumerate() {
            if a.size == 0 {
                return Err(Error::Usage(format!("axis '{}' has empty alphabet", a.name)));
            }
            if axes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Usage(format!("duplicate axis name '{}'", a.name)));
            }
        }
        let cells: usize = axes.iter().map(|a| a.size).product();
        if cells != table.len() {
            return Err(Error::Usage(format!(
                "table has {} cells, axes require {cells}",
                table.len()
            )));
        }
        check_weights(&table, JOINT_TOL, "joint table")?;
        Ok(Self { axes, table })
    }

    /// Single-axis joint holding a source distribution.
    pub fn from_source(name: &str, source: &ProbVec) -> Self {
        Self {
            axes: vec![Axis::new(name, source.alphabet_size())],
            table: source.as_slice().to_vec(),
        }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn axis_index(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::Usage(format!("unknown axis '{name}'")))
    }

    pub fn axis_size(&self, name: &str) -> Result<usize> {
        Ok(self.axes[self.axis_index(name)?].size)
    }

    fn stride(&self, axis: usize) -> usize {
        self.axes[axis + 1..].iter().map(|a| a.size).product()
    }

    /// Appends a new axis drawn through `channel` from the existing axis `given`.
    pub fn extend(&self, name: &str, given: &str, channel: &Channel) -> Result<Self> {
        self.extend_split(&[(name, channel.outputs())], given, channel)
    }

    /// Appends several axes whose product alphabet is the output of `channel`,
    /// conditioned on the existing axis `given`. The output index is decoded
    /// row-major over `new_axes`.
    pub fn extend_split(
        &self,
        new_axes: &[(&str, usize)],
        given: &str,
        channel: &Channel,
    ) -> Result<Self> {
        let g = self.axis_index(given)?;
        if channel.inputs() != self.axes[g].size {
            return Err(Error::Usage(format!(
                "channel expects {} inputs but axis '{given}' has {}",
                channel.inputs(),
                self.axes[g].size
            )));
        }
        let out: usize = new_axes.iter().map(|(_, s)| s).product();
        if out != channel.outputs() || new_axes.is_empty() {
            return Err(Error::Usage(format!(
                "channel has {} outputs but new axes need {out}",
                channel.outputs()
            )));
        }
        let mut axes = self.axes.clone();
        for &(name, size) in new_axes {
            if axes.iter().any(|a| a.name == name) {
                return Err(Error::Usage(format!("duplicate axis name '{name}'")));
            }
            axes.push(Axis::new(name, size));
        }
        let stride = self.stride(g);
        let size = self.axes[g].size;
        let mut table = Vec::with_capacity(self.table.len() * out);
        for (cell, &p) in self.table.iter().enumerate() {
            let v = (cell / stride) % size;
            table.extend(channel.row(v).iter().map(|w| p * w));
        }
        Ok(Self { axes, table })
    }

    /// Marginal over the named axes, laid out row-major in the given order.
    pub fn marginal(&self, names: &[&str]) -> Result<Vec<f64>> {
        let idx = names
            .iter()
            .map(|n| self.axis_index(n))
            .collect::<Result<Vec<_>>>()?;
        for (i, a) in idx.iter().enumerate() {
            if idx[..i].contains(a) {
                return Err(Error::Usage(format!("axis '{}' listed twice", names[i])));
            }
        }
        let strides: Vec<usize> = idx.iter().map(|&a| self.stride(a)).collect();
        let sizes: Vec<usize> = idx.iter().map(|&a| self.axes[a].size).collect();
        let mut out = vec![0.0; sizes.iter().product()];
        for (cell, &p) in self.table.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut k = 0;
            for (s, n) in strides.iter().zip(&sizes) {
                k = k * n + (cell / s) % n;
            }
            out[k] += p;
        }
        Ok(out)
    }

    /// Joint entropy of the named axes.
    pub fn entropy_of(&self, names: &[&str]) -> Result<f64> {
        if names.is_empty() {
            return Ok(0.0);
        }
        Ok(entropy_raw(&self.marginal(names)?))
    }
}

fn check_disjoint(a: &[&str], b: &[&str]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Usage("variable groups must be nonempty".into()));
    }
    if let Some(n) = a.iter().find(|n| b.contains(n)) {
        return Err(Error::Usage(format!("axis '{n}' appears in both groups")));
    }
    Ok(())
}

/// `I(A;B) = H(A) + H(B) - H(A,B)` for disjoint axis groups.
pub fn mutual_information(j: &JointDist, group_a: &[&str], group_b: &[&str]) -> Result<f64> {
    check_disjoint(group_a, group_b)?;
    let both: Vec<&str> = group_a.iter().chain(group_b).copied().collect();
    let mi = j.entropy_of(group_a)? + j.entropy_of(group_b)? - j.entropy_of(&both)?;
    Ok(mi.max(0.0))
}

/// `H(T|G) = H(T,G) - H(G)`.
pub fn conditional_entropy(j: &JointDist, target: &[&str], given: &[&str]) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::Usage("target group must be nonempty".into()));
    }
    if given.is_empty() {
        return j.entropy_of(target);
    }
    check_disjoint(target, given)?;
    let both: Vec<&str> = target.iter().chain(given).copied().collect();
    Ok((j.entropy_of(&both)? - j.entropy_of(given)?).max(0.0))
}

/// One step of a Markov construction: `name` is drawn through `channel`
/// from the previously introduced axis `given`.
#[derive(Debug, Clone)]
pub struct ChainLink {
    pub name: String,
    pub given: String,
    pub channel: Channel,
}

impl ChainLink {
    pub fn new(name: impl Into<String>, given: impl Into<String>, channel: Channel) -> Self {
        Self {
            name: name.into(),
            given: given.into(),
            channel,
        }
    }
}

/// Builds `p(source) · Π p(link | given)` in link order.
pub fn compose_joint(source_name: &str, source: &ProbVec, links: &[ChainLink]) -> Result<JointDist> {
    links.iter().try_fold(JointDist::from_source(source_name, source), |j, l| {
        j.extend(&l.name, &l.given, &l.channel)
    })
}
