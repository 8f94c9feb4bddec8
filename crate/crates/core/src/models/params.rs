//! Named, constraint-typed parameter blocks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constraint domain of a parameter block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// Each value in `[0, 1]`.
    UnitInterval,
    /// Each value `>= 0`.
    Positive,
    /// Positive and non-decreasing: `x_0 <= x_1 <= ...`.
    OrderedPositive,
    /// Non-negative, summing to one.
    Simplex,
    /// Each value in the open interval `(lo, hi)`.
    Interval { lo: f64, hi: f64 },
    Real,
}

impl Domain {
    /// Number of free (unconstrained) coordinates for a block of `len` values.
    pub fn free_dim(&self, len: usize) -> usize {
        match self {
            Domain::Simplex => len.saturating_sub(1),
            _ => len,
        }
    }
}

/// Prior density on a block, up to an additive constant in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    /// Uniform over the block's domain.
    Flat,
    /// `exp(-x^2 / 2 scale^2)` on `x >= 0`.
    HalfNormal { scale: f64 },
    /// `exp(-x^2 / 2 scale^2)` on the real line.
    Normal { scale: f64 },
}

impl Prior {
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Flat => 0.0,
            Prior::HalfNormal { scale } | Prior::Normal { scale } => {
                -x * x / (2.0 * scale * scale)
            }
        }
    }

    pub fn d_log_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Flat => 0.0,
            Prior::HalfNormal { scale } | Prior::Normal { scale } => -x / (scale * scale),
        }
    }
}

/// One block of the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub domain: Domain,
    pub prior: Prior,
    /// Offset into the flat value vector.
    pub offset: usize,
    pub len: usize,
    /// Display names, one per element.
    pub element_names: Vec<String>,
    /// Whether the block was declared as a scalar (a length-one block named without suffix).
    pub scalar: bool,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Ordered collection of parameter blocks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamLayout {
    blocks: Vec<Block>,
    len: usize,
}

/// Handle to a block within a layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(pub usize);

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a scalar block.
    pub fn scalar(&mut self, name: &str, domain: Domain, prior: Prior) -> BlockId {
        self.push(name, domain, prior, vec![name.to_string()], true)
    }

    /// Appends a block whose elements are suffixed `name_0, name_1, ...`.
    pub fn indexed(&mut self, name: &str, len: usize, domain: Domain, prior: Prior) -> BlockId {
        let names = (0..len).map(|k| format!("{name}_{k}")).collect();
        self.push(name, domain, prior, names, false)
    }

    /// Appends a per-node block whose elements are named `name[label]`.
    pub fn per_node(
        &mut self,
        name: &str,
        labels: &[String],
        domain: Domain,
        prior: Prior,
    ) -> BlockId {
        let names = labels.iter().map(|l| format!("{name}[{l}]")).collect();
        self.push(name, domain, prior, names, false)
    }

    pub fn with_names(
        &mut self,
        name: &str,
        names: Vec<String>,
        domain: Domain,
        prior: Prior,
    ) -> BlockId {
        self.push(name, domain, prior, names, false)
    }

    fn push(
        &mut self,
        name: &str,
        domain: Domain,
        prior: Prior,
        element_names: Vec<String>,
        scalar: bool,
    ) -> BlockId {
        let len = element_names.len();
        self.blocks.push(Block {
            name: name.to_string(),
            domain,
            prior,
            offset: self.len,
            len,
            element_names,
            scalar,
        });
        self.len += len;
        BlockId(self.blocks.len() - 1)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id.0]
    }

    pub fn find(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub(crate) fn block_mut(&mut self, name: &str) -> Option<&mut Block> {
        self.blocks.iter_mut().find(|b| b.name == name)
    }

    /// Total number of constrained values.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Total number of unconstrained coordinates.
    pub fn free_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.domain.free_dim(b.len)).sum()
    }

    /// Flat list of element names, in value order.
    pub fn names(&self) -> Vec<String> {
        self.blocks
            .iter()
            .flat_map(|b| b.element_names.iter().cloned())
            .collect()
    }
}

/// Values for every block of a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    layout: Arc<ParamLayout>,
    values: Vec<f64>,
}

const SIMPLEX_TOL: f64 = 1e-12;

impl ParameterVector {
    /// Wraps values and checks every block's domain.
    pub fn new(layout: Arc<ParamLayout>, values: Vec<f64>) -> Result<Self> {
        let theta = Self::new_unchecked(layout, values)?;
        theta.check_domain()?;
        Ok(theta)
    }

    /// Wraps values checking only the length.
    pub fn new_unchecked(layout: Arc<ParamLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Shape(format!(
                "parameter vector has {} values, layout expects {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(ParameterVector { layout, values })
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn block(&self, id: BlockId) -> &[f64] {
        let b = self.layout.block(id);
        &self.values[b.range()]
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.layout.find(name).map(|b| &self.values[b.range()])
    }

    /// Sets a named block, broadcasting a single value over the whole block.
    pub fn set(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let b = self
            .layout
            .find(name)
            .ok_or_else(|| Error::Model(format!("unknown parameter block {name:?}")))?;
        let range = b.range();
        match values.len() {
            1 => self.values[range].fill(values[0]),
            l if l == b.len => self.values[range].copy_from_slice(values),
            l => {
                return Err(Error::Shape(format!(
                    "block {name:?} has {} values, got {l}",
                    b.len
                )))
            }
        }
        Ok(())
    }

    /// Checks every value against its block's domain.
    pub fn check_domain(&self) -> Result<()> {
        for b in self.layout.blocks() {
            let xs = &self.values[b.range()];
            if let Some(bad) = xs.iter().position(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("{} is not finite", b.element_names[bad])));
            }
            let fail = |k: usize, what: &str| {
                Err(Error::Domain(format!(
                    "{} = {} {what}",
                    b.element_names[k], xs[k]
                )))
            };
            match b.domain {
                Domain::UnitInterval => {
                    if let Some(k) = xs.iter().position(|&x| !(0.0..=1.0).contains(&x)) {
                        return fail(k, "is outside [0, 1]");
                    }
                }
                Domain::Positive => {
                    if let Some(k) = xs.iter().position(|&x| x < 0.0) {
                        return fail(k, "is negative");
                    }
                }
                Domain::OrderedPositive => {
                    if let Some(k) = xs.iter().position(|&x| x < 0.0) {
                        return fail(k, "is negative");
                    }
                    if let Some(k) = xs.windows(2).position(|w| w[1] < w[0]) {
                        return fail(k + 1, "breaks the required ordering");
                    }
                }
                Domain::Simplex => {
                    if let Some(k) = xs.iter().position(|&x| x < 0.0) {
                        return fail(k, "is negative");
                    }
                    let s: f64 = xs.iter().sum();
                    if (s - 1.0).abs() > SIMPLEX_TOL {
                        return Err(Error::Domain(format!(
                            "block {} sums to {s}, expected 1",
                            b.name
                        )));
                    }
                }
                Domain::Interval { lo, hi } => {
                    if let Some(k) = xs.iter().position(|&x| !(x > lo && x < hi)) {
                        return fail(k, &format!("is outside ({lo}, {hi})"));
                    }
                }
                Domain::Real => {}
            }
        }
        Ok(())
    }

    pub fn in_domain(&self) -> bool {
        self.check_domain().is_ok()
    }

    /// Sum of block prior log densities; `-inf` outside the domain.
    pub fn log_prior(&self) -> f64 {
        if !self.in_domain() {
            return f64::NEG_INFINITY;
        }
        self.layout
            .blocks()
            .iter()
            .map(|b| {
                self.values[b.range()]
                    .iter()
                    .map(|&x| b.prior.log_density(x))
                    .sum::<f64>()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> Arc<ParamLayout> {
        let mut l = ParamLayout::new();
        l.scalar("rho", Domain::UnitInterval, Prior::Flat);
        l.indexed("lambda", 3, Domain::OrderedPositive, Prior::HalfNormal { scale: 100.0 });
        l.indexed(
            "alpha",
            2,
            Domain::Interval { lo: 0.5, hi: 1.0 },
            Prior::Flat,
        );
        Arc::new(l)
    }

    #[test]
    fn log_prior_examples() {
        let l = layout();
        let t = ParameterVector::new(l.clone(), vec![0.5, 0.0, 0.0, 0.0, 0.7, 0.8]).unwrap();
        assert_eq!(t.log_prior(), 0.0);
        let t = ParameterVector::new_unchecked(l, vec![0.5, 0.0, 1.0, 2.0, 0.4, 0.8]).unwrap();
        assert_eq!(t.log_prior(), f64::NEG_INFINITY);
        assert!(matches!(t.check_domain(), Err(Error::Domain(_))));
    }

    #[test]
    fn domain_checks() {
        let l = layout();
        let bad_order = ParameterVector::new_unchecked(l.clone(), vec![0.5, 3.0, 1.0, 2.0, 0.7, 0.8]).unwrap();
        assert!(!bad_order.in_domain());
        let bad_rho = ParameterVector::new_unchecked(l, vec![1.5, 0.0, 1.0, 2.0, 0.7, 0.8]).unwrap();
        assert!(!bad_rho.in_domain());
        let mut s = ParamLayout::new();
        s.indexed("rho", 3, Domain::Simplex, Prior::Flat);
        let s = Arc::new(s);
        assert!(ParameterVector::new(s.clone(), vec![0.58, 0.28, 0.14]).is_ok());
        assert!(ParameterVector::new(s, vec![0.58, 0.28, 0.15]).is_err());
    }

    #[test]
    fn set_broadcasts() {
        let l = layout();
        let mut t = ParameterVector::new_unchecked(l, vec![0.0; 6]).unwrap();
        t.set("alpha", &[0.75]).unwrap();
        assert_eq!(t.get("alpha").unwrap(), &[0.75, 0.75]);
        assert!(t.set("lambda", &[1.0, 2.0]).is_err());
        assert_eq!(t.layout().names()[1], "lambda_0");
    }
}
