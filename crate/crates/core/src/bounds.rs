//! Closed-form constants and bound shapes for gelation times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reading of `x^-` in the factor `2^{(a-1)^-}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum NegativePart {
    /// `(a-1)^- = max(1 - a, 0)`: the factor is 1 for `a >= 1` and grows for `a < 1`.
    #[default]
    Standard,
    /// `max(a - 1, 0)`, kept for comparison only.
    PositivePart,
}

impl NegativePart {
    fn of_a_minus_one(self, a: f64) -> f64 {
        match self {
            NegativePart::Standard => (1.0 - a).max(0.0),
            NegativePart::PositivePart => (a - 1.0).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JeonConstants {
    /// Gel-size prefactor `C`.
    pub c: f64,
    /// Bound `C'` on the expected gelation time.
    pub c_prime: f64,
}

/// `C(c, a, β)` and `C'(c, a, β)` for kernels with `α(m, n) >= (mn)^a`.
///
/// ```text
/// C  = 1/2 (c^2 (1 - 2^-β)^2 2^{-(a-1)^-} 2^{-2a-1})^{1/(1+2β)}
/// C' = 2 c^-2 (1 - 2^-β)^-2 2^{(a-1)^-} (1 - 2^{-(2a-1-2β)})^-1
/// ```
pub fn jeon_constants(c: f64, a: f64, beta: f64, neg: NegativePart) -> Result<JeonConstants> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::domain(format!("c must lie in (0, 1], got {c}")));
    }
    if !(a > 0.5 && a.is_finite()) {
        return Err(Error::domain(format!("a must exceed 1/2, got {a}")));
    }
    if !(beta > 0.0) {
        return Err(Error::domain(format!("beta must be positive, got {beta}")));
    }
    if !(beta < a - 0.5) {
        return Err(Error::domain(format!(
            "beta = {beta} must be below a - 1/2 = {}",
            a - 0.5
        )));
    }
    let np = neg.of_a_minus_one(a);
    let gap = 1.0 - (-beta).exp2();
    let base = c * c * gap * gap * (-np).exp2() * (-2.0 * a - 1.0).exp2();
    let big_c = 0.5 * base.powf(1.0 / (1.0 + 2.0 * beta));
    let c_prime = 2.0 / (c * c * gap * gap) * np.exp2() / (1.0 - (-(2.0 * a - 1.0 - 2.0 * beta)).exp2());
    Ok(JeonConstants { c: big_c, c_prime })
}

/// `(C_0, C_0') = (C, C')(1 - δ, a, (1/b - 1)/2)`.
///
/// `C_0` is the gel-size prefactor for the stopping time with threshold
/// `C_0 N^b`, and `C_0'` bounds its mean uniformly in `N`.
pub fn theorem13_bound(a: f64, b: f64, delta: f64, neg: NegativePart) -> Result<JeonConstants> {
    if !(a > 0.5 && a.is_finite()) {
        return Err(Error::domain(format!("a must exceed 1/2, got {a}")));
    }
    let lo = 1.0 / (2.0 * a);
    if !(b > lo && b < 1.0) {
        return Err(Error::domain(format!("b = {b} must lie in (1/(2a), 1) = ({lo}, 1)")));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::domain(format!("delta must lie in [0, 1), got {delta}")));
    }
    jeon_constants(1.0 - delta, a, (1.0 / b - 1.0) / 2.0, neg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SbarEtabar {
    pub sbar: f64,
    pub etabar: f64,
    /// `A < q / ((2 - q)(6 - q))`.
    pub admissible: bool,
}

/// Admissibility threshold `q (2-q)^-1 (6-q)^-1` for `A`.
pub fn a_threshold(q: f64) -> f64 {
    q / ((2.0 - q) * (6.0 - q))
}

/// `s̄ = (sqrt((1 + q/2)^2 + 2q/A) - 1 - q/2) / 2` and `η̄ = min((q-1)/4, s̄ + q - 2)`.
pub fn sbar_etabar(q: f64, a: f64) -> Result<SbarEtabar> {
    if !(q > 1.0 && q < 2.0) {
        return Err(Error::domain(format!("q must lie in (1, 2), got {q}")));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::domain(format!("A must be positive, got {a}")));
    }
    let h = 1.0 + q / 2.0;
    let sbar = ((h * h + 2.0 * q / a).sqrt() - h) / 2.0;
    let etabar = ((q - 1.0) / 4.0).min(sbar + q - 2.0);
    Ok(SbarEtabar {
        sbar,
        etabar,
        admissible: a < a_threshold(q),
    })
}

/// `4 δ^-1 k^{1-q}`.
pub fn lemma41_bound(delta: f64, k: u64, q: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    Ok(4.0 / delta * (k as f64).powf(1.0 - q))
}

/// A bound whose `N`-dependence is known up to a constant factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BoundCurve {
    /// `(1 - δ)^-1 (ln N)^-θ` for `Sum(q)` kernels, `θ < η̄`.
    Thm16 { q: f64, a: f64, theta: f64, delta: f64 },
    /// `(ln ln N / ln N)^{q-1}`.
    Thm17 { q: f64 },
    /// `4 δ^-1 k^{1-q}`, independent of `N`.
    Lem41 { delta: f64, k: u64, q: f64 },
}

impl BoundCurve {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BoundCurve::Thm16 { q, a, theta, delta } => {
                let se = sbar_etabar(q, a)?;
                if !se.admissible {
                    return Err(Error::domain(format!(
                        "A = {a} violates A < q/((2-q)(6-q)) = {}",
                        a_threshold(q)
                    )));
                }
                if !(theta > 0.0 && theta < se.etabar) {
                    return Err(Error::domain(format!(
                        "theta = {theta} must lie in (0, etabar) = (0, {})",
                        se.etabar
                    )));
                }
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::domain(format!("delta must lie in (0, 1), got {delta}")));
                }
            }
            BoundCurve::Thm17 { q } => {
                if !(q > 1.0 && q.is_finite()) {
                    return Err(Error::domain(format!("q must exceed 1, got {q}")));
                }
            }
            BoundCurve::Lem41 { delta, k, q } => {
                lemma41_bound(delta, k, q)?;
            }
        }
        Ok(())
    }

    /// Shape at total mass `n`; `Thm16` needs `n >= 2`, `Thm17` needs `n >= 3`.
    pub fn shape(&self, n: u64) -> Result<f64> {
        self.validate()?;
        let ln = (n as f64).ln();
        match *self {
            BoundCurve::Thm16 { theta, delta, .. } => {
                if n < 2 {
                    return Err(Error::domain(format!("N must be at least 2, got {n}")));
                }
                Ok(ln.powf(-theta) / (1.0 - delta))
            }
            BoundCurve::Thm17 { q } => {
                if n < 3 {
                    return Err(Error::domain(format!("N must be at least 3, got {n}")));
                }
                Ok((ln.ln() / ln).powf(q - 1.0))
            }
            BoundCurve::Lem41 { delta, k, q } => lemma41_bound(delta, k, q),
        }
    }
}

/// `(N, shape(N))` over a grid.
pub fn bound_curves(curve: &BoundCurve, grid: &[u64]) -> Result<Vec<(u64, f64)>> {
    grid.iter().map(|&n| Ok((n, curve.shape(n)?))).collect()
}
