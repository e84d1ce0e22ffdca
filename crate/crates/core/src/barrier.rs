//! Barrier Lyapunov functions.
//!
//! Seven barriers are provided, two logarithmic and five fractional. Each
//! maps a Lyapunov value `v` in `[0, bound)` to a non-negative number that
//! blows up as `v` approaches `bound`:
//!
//! | kind  | f(v)                          |
//! |-------|-------------------------------|
//! | `LI`  | ln(b / (b - v))               |
//! | `LII` | ln(b e^v / (b - v))           |
//! | `FI`  | v / (b - v)                   |
//! | `FII` | b v / (b - v)                 |
//! | `FIII`| (b + 1 - v) v / (b - v)       |
//! | `FIV` | (2b - v) v / (b - v)          |
//! | `FV`  | (b + 1) v / (b - v)           |
//!
//! First and second derivatives are closed forms. The second derivatives of
//! the fractional kinds carry a factor 2 (e.g. `2b / (b - v)^3` for `FI`);
//! some published tables print them without it. The finite-difference tests
//! in this module settle which one is right.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Raised when a barrier is evaluated outside `0 <= v < bound`.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("barrier domain error: value {value} outside [0, {bound})")]
pub struct DomainError {
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BarrierKind {
    LI,
    LII,
    FI,
    FII,
    FIII,
    FIV,
    FV,
}

impl BarrierKind {
    pub const ALL: [BarrierKind; 7] = [
        BarrierKind::LI,
        BarrierKind::LII,
        BarrierKind::FI,
        BarrierKind::FII,
        BarrierKind::FIII,
        BarrierKind::FIV,
        BarrierKind::FV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BarrierKind::LI => "LI",
            BarrierKind::LII => "LII",
            BarrierKind::FI => "FI",
            BarrierKind::FII => "FII",
            BarrierKind::FIII => "FIII",
            BarrierKind::FIV => "FIV",
            BarrierKind::FV => "FV",
        }
    }

    pub fn eval(self, v: f64, bound: f64) -> Result<f64, DomainError> {
        check_domain(v, bound)?;
        let gap = bound - v;
        Ok(match self {
            // -ln(1 - v/b) keeps precision when b >> v
            BarrierKind::LI => -(-v / bound).ln_1p(),
            BarrierKind::LII => v - (-v / bound).ln_1p(),
            BarrierKind::FI => v / gap,
            BarrierKind::FII => bound * v / gap,
            BarrierKind::FIII => (bound + 1.0 - v) * v / gap,
            BarrierKind::FIV => (2.0 * bound - v) * v / gap,
            BarrierKind::FV => (bound + 1.0) * v / gap,
        })
    }

    pub fn d1(self, v: f64, bound: f64) -> Result<f64, DomainError> {
        check_domain(v, bound)?;
        let gap = bound - v;
        let gap2 = gap * gap;
        Ok(match self {
            BarrierKind::LI => 1.0 / gap,
            BarrierKind::LII => 1.0 + 1.0 / gap,
            BarrierKind::FI => bound / gap2,
            BarrierKind::FII => bound * bound / gap2,
            BarrierKind::FIII => 1.0 + bound / gap2,
            BarrierKind::FIV => 1.0 + bound * bound / gap2,
            BarrierKind::FV => bound * (bound + 1.0) / gap2,
        })
    }

    pub fn d2(self, v: f64, bound: f64) -> Result<f64, DomainError> {
        check_domain(v, bound)?;
        let gap = bound - v;
        let gap2 = gap * gap;
        let gap3 = gap2 * gap;
        Ok(match self {
            BarrierKind::LI | BarrierKind::LII => 1.0 / gap2,
            BarrierKind::FI | BarrierKind::FIII => 2.0 * bound / gap3,
            BarrierKind::FII | BarrierKind::FIV => 2.0 * bound * bound / gap3,
            BarrierKind::FV => 2.0 * bound * (bound + 1.0) / gap3,
        })
    }
}

impl fmt::Display for BarrierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BarrierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BarrierKind::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown barrier kind `{s}`"))
    }
}

fn check_domain(v: f64, bound: f64) -> Result<(), DomainError> {
    if v >= 0.0 && v < bound && bound.is_finite() {
        Ok(())
    } else {
        Err(DomainError { value: v, bound })
    }
}

/// Fraction of the domain excluded at the top when sampling orderings.
pub const ORDER_MARGIN: f64 = 0.01;
/// Rounding slack for ordering comparisons.
pub const ORDER_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderAspect {
    Value,
    FirstDerivative,
    SecondDerivative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderViolation {
    pub v: f64,
    pub aspect: OrderAspect,
    pub lo_value: f64,
    pub hi_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderVerdict {
    pub holds: bool,
    pub first_violation: Option<OrderViolation>,
}

/// Checks `lo ≼ hi`: value, first and second derivative of `hi` dominate
/// those of `lo` on `samples` evenly spaced points of `[0, bound (1 - margin)]`.
pub fn verify_order(
    lo: BarrierKind,
    hi: BarrierKind,
    bound: f64,
    samples: usize,
) -> Result<OrderVerdict, DomainError> {
    assert!(samples >= 2, "verify_order needs at least two samples");
    if bound.is_nan() || bound <= 0.0 {
        return Err(DomainError { value: 0.0, bound });
    }
    let top = bound * (1.0 - ORDER_MARGIN);
    let step = top / (samples - 1) as f64;
    type Calc = fn(BarrierKind, f64, f64) -> Result<f64, DomainError>;
    let aspects: [(OrderAspect, Calc); 3] = [
        (OrderAspect::Value, BarrierKind::eval),
        (OrderAspect::FirstDerivative, BarrierKind::d1),
        (OrderAspect::SecondDerivative, BarrierKind::d2),
    ];
    for i in 0..samples {
        let v = i as f64 * step;
        for (aspect, calc) in aspects {
            let a = calc(lo, v, bound)?;
            let b = calc(hi, v, bound)?;
            if a > b + ORDER_SLACK {
                return Ok(OrderVerdict {
                    holds: false,
                    first_violation: Some(OrderViolation {
                        v,
                        aspect,
                        lo_value: a,
                        hi_value: b,
                    }),
                });
            }
        }
    }
    Ok(OrderVerdict {
        holds: true,
        first_violation: None,
    })
}

/// Below this the ratio f(v, b)/v is treated as having collapsed to zero.
pub const IBP_ZERO_TOL: f64 = 1e-4;
/// Relative agreement required between the last two ratios.
pub const IBP_CONVERGENCE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct IbpProbe {
    pub kind: BarrierKind,
    /// f(v, b) at the largest bound.
    pub limit_estimate: f64,
    /// f(v, b) / v at the largest bound.
    pub c_estimate: f64,
    pub ibp_holds: bool,
}

/// Bounds 10^1, 10^2, ..., 10^8.
pub fn default_bound_sequence() -> Vec<f64> {
    (1..=8).map(|p| 10f64.powi(p)).collect()
}

/// Tracks f(v, b)/v as b grows along `bounds` and decides whether the
/// barrier degenerates to a positive multiple of v.
pub fn ibp_probe(kind: BarrierKind, v: f64, bounds: &[f64]) -> Result<IbpProbe, DomainError> {
    assert!(v > 0.0, "ibp_probe needs v > 0");
    assert!(!bounds.is_empty(), "ibp_probe needs at least one bound");
    assert!(
        bounds.windows(2).all(|w| w[0] < w[1]),
        "bound sequence must be strictly increasing"
    );
    let ratios = bounds
        .iter()
        .map(|&b| kind.eval(v, b).map(|f| f / v))
        .collect::<Result<Vec<_>, _>>()?;
    let last = *ratios.last().unwrap();
    let settled = match ratios.len() {
        1 => true,
        n => (last - ratios[n - 2]).abs() <= IBP_CONVERGENCE_TOL * last.abs().max(IBP_ZERO_TOL),
    };
    Ok(IbpProbe {
        kind,
        limit_estimate: last * v,
        c_estimate: last,
        ibp_holds: settled && last > IBP_ZERO_TOL,
    })
}
