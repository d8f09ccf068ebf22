//! Coagulation kernels `α(m, n)`.
//!
//! Every parametric family is written as a sum of at most two separable
//! products so that the exact sampler and the Smoluchowski right-hand side
//! can work with per-size weights instead of the full pair matrix:
//!
//! | family        | `α(m, n)`            | factorization                 |
//! |---------------|----------------------|-------------------------------|
//! | `Constant(c)` | `c`                  | `c · 1 · 1`                   |
//! | `Additive(s)` | `s (m + n)`          | `s (m·1 + 1·n)`               |
//! | `Product(a)`  | `(mn)^a`             | `m^a · n^a`                   |
//! | `Sum(q)`      | `m^q + n^q`          | `m^q·1 + 1·n^q`               |
//! | `Mixed(q)`    | `m^q n + n^q m`      | `m^q·n + n·m^q` (symmetrized) |
//! | `Table`       | explicit matrix      | none (dense)                  |

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A dense symmetric rate table for sizes `1..=max_size()`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    size: usize,
    values: Vec<f64>,
}

impl KernelTable {
    /// Builds a table from rows; `rows[i][j]` is `α(i + 1, j + 1)`.
    ///
    /// Asymmetric, non-square, non-finite or non-positive input is rejected.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::domain("kernel table is empty"));
        }
        let mut values = Vec::with_capacity(size * size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::domain(format!(
                    "kernel table row {} has {} entries, expected {size}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() || x <= 0.0 {
                    return Err(Error::domain(format!(
                        "kernel table entry ({}, {}) = {x} is not a positive finite rate",
                        i + 1,
                        j + 1
                    )));
                }
            }
            values.extend_from_slice(row);
        }
        for i in 0..size {
            for j in (i + 1)..size {
                if values[i * size + j] != values[j * size + i] {
                    return Err(Error::domain(format!(
                        "kernel table is not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { size, values })
    }

    /// Reads a comma-separated table; row `i`, column `j` holds `α(i, j)`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|cell| cell.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| {
                    Error::config(format!("{}:{}: {e}", path.display(), lineno + 1))
                })?;
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn max_size(&self) -> u64 {
        self.size as u64
    }

    fn get(&self, m: u64, n: u64) -> Option<f64> {
        let (i, j) = (m as usize, n as usize);
        if i == 0 || j == 0 || i > self.size || j > self.size {
            return None;
        }
        Some(self.values[(i - 1) * self.size + (j - 1)])
    }
}

/// Kernel family and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    Constant { c: f64 },
    Additive { scale: f64 },
    Product { a: f64 },
    Sum { q: f64 },
    Mixed { q: f64 },
    Table(Arc<KernelTable>),
}

/// A symmetric, strictly positive coagulation rate.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
}

/// Per-size weight used in a separable factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    One,
    Linear,
    Power(f64),
}

impl Weight {
    fn power(p: f64) -> Self {
        if p == 0.0 {
            Weight::One
        } else if p == 1.0 {
            Weight::Linear
        } else {
            Weight::Power(p)
        }
    }

    #[inline]
    pub fn at(self, n: u64) -> f64 {
        match self {
            Weight::One => 1.0,
            Weight::Linear => n as f64,
            Weight::Power(p) => (n as f64).powf(p),
        }
    }
}

/// Separable structure of a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factorization {
    /// `α(m, n) = scale · u(m) u(n)`.
    Product { scale: f64, u: Weight },
    /// `α(m, n) = scale · (u(m) v(n) + v(m) u(n))`.
    Symmetric { scale: f64, u: Weight, v: Weight },
    /// No separable form; pairs are enumerated.
    Dense,
}

/// Closed form of `ᾱ(n) = lim_m α(m, n) / m`, written as `coef · n^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LimitRatio {
    pub coef: f64,
    pub exponent: f64,
}

impl LimitRatio {
    pub fn at(&self, n: u64) -> f64 {
        if self.coef == 0.0 {
            0.0
        } else {
            self.coef * (n as f64).powf(self.exponent)
        }
    }

    /// Sol-gel coupling `β(n, ∞) = ᾱ(n) / n`.
    pub fn gel_coupling(&self, n: u64) -> f64 {
        self.at(n) / n as f64
    }
}

/// Which gelation hypotheses a kernel satisfies, derived symbolically.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HypothesisReport {
    /// `sup α(m, n) / (m + n) < ∞`.
    pub linear_growth: bool,
    /// Largest `a > 1/2` with `α(m, n) ≥ (mn)^a` that the family guarantees.
    pub simple_gel: Option<f64>,
    /// `q ∈ (1, 2)` with `α(m, n) ≥ m^q + n^q`.
    pub instantaneous_gel: Option<f64>,
    /// `q > 1` with `α(m, n) ≥ m^q n + n^q m`.
    pub complete_gel: Option<f64>,
    /// `ᾱ(n)` when the limit exists for every `n`.
    pub limit_ratio: Option<LimitRatio>,
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {x}")))
    }
}

fn finite(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::domain(format!("{name} must be finite, got {x}")))
    }
}

impl KernelSpec {
    pub fn constant(c: f64) -> Result<Self> {
        Ok(Self::from_family(KernelFamily::Constant { c: positive("c", c)? }))
    }

    pub fn additive(scale: f64) -> Result<Self> {
        Ok(Self::from_family(KernelFamily::Additive {
            scale: positive("scale", scale)?,
        }))
    }

    pub fn product(a: f64) -> Result<Self> {
        Ok(Self::from_family(KernelFamily::Product { a: finite("a", a)? }))
    }

    pub fn sum(q: f64) -> Result<Self> {
        Ok(Self::from_family(KernelFamily::Sum { q: finite("q", q)? }))
    }

    pub fn mixed(q: f64) -> Result<Self> {
        Ok(Self::from_family(KernelFamily::Mixed { q: finite("q", q)? }))
    }

    pub fn table(table: KernelTable) -> Self {
        Self::from_family(KernelFamily::Table(Arc::new(table)))
    }

    fn from_family(family: KernelFamily) -> Self {
        Self { family }
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    /// Largest size the kernel is defined for, if bounded.
    pub fn max_size(&self) -> Option<u64> {
        match &self.family {
            KernelFamily::Table(t) => Some(t.max_size()),
            _ => None,
        }
    }

    /// `α(m, n)`.
    pub fn evaluate(&self, m: u64, n: u64) -> Result<f64> {
        if m == 0 || n == 0 {
            return Err(Error::domain(format!("sizes must be >= 1, got ({m}, {n})")));
        }
        if let KernelFamily::Table(t) = &self.family {
            return t.get(m, n).ok_or_else(|| {
                Error::domain(format!(
                    "size pair ({m}, {n}) outside kernel table (max size {})",
                    t.max_size()
                ))
            });
        }
        Ok(self.rate(m, n))
    }

    /// `α(m, n)` for parametric families; panics for out-of-range table sizes.
    #[inline]
    pub(crate) fn rate(&self, m: u64, n: u64) -> f64 {
        let (x, y) = (m as f64, n as f64);
        match &self.family {
            KernelFamily::Constant { c } => *c,
            KernelFamily::Additive { scale } => scale * (x + y),
            KernelFamily::Product { a } => {
                if *a == 1.0 {
                    x * y
                } else {
                    (x * y).powf(*a)
                }
            }
            KernelFamily::Sum { q } => x.powf(*q) + y.powf(*q),
            KernelFamily::Mixed { q } => x.powf(*q) * y + y.powf(*q) * x,
            KernelFamily::Table(t) => t.get(m, n).expect("size outside kernel table"),
        }
    }

    pub fn factorization(&self) -> Factorization {
        match &self.family {
            KernelFamily::Constant { c } => Factorization::Product {
                scale: *c,
                u: Weight::One,
            },
            KernelFamily::Additive { scale } => Factorization::Symmetric {
                scale: *scale,
                u: Weight::Linear,
                v: Weight::One,
            },
            KernelFamily::Product { a } => Factorization::Product {
                scale: 1.0,
                u: Weight::power(*a),
            },
            KernelFamily::Sum { q } => Factorization::Symmetric {
                scale: 1.0,
                u: Weight::power(*q),
                v: Weight::One,
            },
            KernelFamily::Mixed { q } => Factorization::Symmetric {
                scale: 1.0,
                u: Weight::power(*q),
                v: Weight::Linear,
            },
            KernelFamily::Table(_) => Factorization::Dense,
        }
    }

    /// Reports which gelation hypotheses hold, from the closed form of each family.
    pub fn hypothesis_check(&self) -> HypothesisReport {
        let zero = Some(LimitRatio {
            coef: 0.0,
            exponent: 0.0,
        });
        match &self.family {
            KernelFamily::Constant { .. } => HypothesisReport {
                linear_growth: true,
                simple_gel: None,
                instantaneous_gel: None,
                complete_gel: None,
                limit_ratio: zero,
            },
            KernelFamily::Additive { scale } => HypothesisReport {
                linear_growth: true,
                simple_gel: None,
                instantaneous_gel: None,
                complete_gel: None,
                limit_ratio: Some(LimitRatio {
                    coef: *scale,
                    exponent: 0.0,
                }),
            },
            KernelFamily::Product { a } => {
                let a = *a;
                // (mn)^a / m = m^(a-1) n^a
                let limit_ratio = if a < 1.0 {
                    zero
                } else if a == 1.0 {
                    Some(LimitRatio {
                        coef: 1.0,
                        exponent: 1.0,
                    })
                } else {
                    None
                };
                HypothesisReport {
                    // (mn)^a <= ((m+n)/2)^(2a) <= m+n for a <= 1/2 and m+n >= 2
                    linear_growth: a <= 0.5,
                    simple_gel: (a > 0.5).then_some(a),
                    instantaneous_gel: None,
                    complete_gel: None,
                    limit_ratio,
                }
            }
            KernelFamily::Sum { q } => {
                let q = *q;
                let limit_ratio = if q < 1.0 {
                    zero
                } else if q == 1.0 {
                    Some(LimitRatio {
                        coef: 1.0,
                        exponent: 0.0,
                    })
                } else {
                    None
                };
                HypothesisReport {
                    linear_growth: q <= 1.0,
                    // m^q + n^q >= 2 (mn)^(q/2)
                    simple_gel: (q > 1.0).then_some(q / 2.0),
                    instantaneous_gel: (q > 1.0 && q < 2.0).then_some(q),
                    complete_gel: None,
                    limit_ratio,
                }
            }
            KernelFamily::Mixed { q } => {
                let q = *q;
                // (m^q n + n^q m) / m = m^(q-1) n + n^q
                let limit_ratio = if q < 1.0 {
                    Some(LimitRatio {
                        coef: 1.0,
                        exponent: q,
                    })
                } else if q == 1.0 {
                    Some(LimitRatio {
                        coef: 2.0,
                        exponent: 1.0,
                    })
                } else {
                    None
                };
                HypothesisReport {
                    linear_growth: q <= 0.0,
                    // m^q n + n^q m >= 2 (mn)^((q+1)/2)
                    simple_gel: (q > 0.0).then_some((q + 1.0) / 2.0),
                    // m^q n + n^q m >= m^q + n^q
                    instantaneous_gel: (q > 1.0 && q < 2.0).then_some(q),
                    complete_gel: (q > 1.0).then_some(q),
                    limit_ratio,
                }
            }
            // A finite table has bounded growth on its support and no limit at infinity.
            KernelFamily::Table(_) => HypothesisReport {
                linear_growth: true,
                simple_gel: None,
                instantaneous_gel: None,
                complete_gel: None,
                limit_ratio: None,
            },
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            KernelFamily::Constant { c } => write!(f, "Constant(c={c})"),
            KernelFamily::Additive { scale } => write!(f, "Additive(scale={scale})"),
            KernelFamily::Product { a } => write!(f, "Product(a={a})"),
            KernelFamily::Sum { q } => write!(f, "Sum(q={q})"),
            KernelFamily::Mixed { q } => write!(f, "Mixed(q={q})"),
            KernelFamily::Table(t) => write!(f, "Table(max={})", t.max_size()),
        }
    }
}
