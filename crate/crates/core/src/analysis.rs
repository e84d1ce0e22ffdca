//! Checks on recorded sequences and runs.
//!
//! The lemma checkers only test the stated recursions on finite data and
//! report empirical limits. In particular, the hypothesis that `s_k → 0`
//! whenever `r_k → 0` cannot be verified from a finite prefix and is taken
//! as an assumption.
//!
//! A finite-run "limsup" is the maximum over the last quarter of the
//! entries.

use std::io::Write;

use crate::barrier::{self, BarrierKind, IbpProbe};
use crate::engine::{ModelKind, RunReport};
use crate::error::{Error, Result};
use crate::plant::Plant;

/// Slack on the recursion inequalities.
pub const LEMMA_SLACK: f64 = 1e-12;
/// `s` counts as vanishing when its tail max is this fraction of its peak.
pub const VANISH_RATIO: f64 = 1e-3;
/// Relative slack when comparing a limsup to `d̄`.
pub const BOUND_SLACK: f64 = 1e-9;

/// Number of entries in the tail window of a length-`len` sequence.
pub fn tail_len(len: usize) -> usize {
    len.div_ceil(4).max(1).min(len)
}

/// Max over the last `window` entries.
pub fn tail_max(values: &[f64], window: usize) -> f64 {
    let window = window.min(values.len());
    values[values.len() - window..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Max over the standard tail window (last 25%).
pub fn tail_limsup(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    tail_max(values, tail_len(values.len()))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceTriple {
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub d: Option<Vec<f64>>,
    pub d_bar: Option<f64>,
}

impl SequenceTriple {
    pub fn new(r: Vec<f64>, s: Vec<f64>) -> Self {
        SequenceTriple {
            r,
            s,
            d: None,
            d_bar: None,
        }
    }

    pub fn with_residual(mut self, d: Vec<f64>, d_bar: Option<f64>) -> Self {
        self.d = Some(d);
        self.d_bar = d_bar;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.r.len();
        if n < 2 {
            return Err(Error::Parameter {
                name: "r",
                reason: "need at least two entries".into(),
            });
        }
        crate::error::check_dim("s", n, self.s.len())?;
        if let Some(d) = &self.d {
            crate::error::check_dim("d", n, d.len())?;
        }
        if !self.r[0].is_finite() {
            return Err(Error::Parameter {
                name: "r",
                reason: "r_0 must be finite".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Verdict {
    pub inequality_holds: bool,
    pub first_violation: Option<usize>,
    pub s_limit_estimate: f64,
    pub s_vanishes: bool,
    pub r_bounded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma2Verdict {
    pub inequality_holds: bool,
    pub first_violation: Option<usize>,
    pub limsup_s: f64,
    /// `limsup s <= d̄ (1 + slack)`, when `d̄` was supplied.
    pub bound_respected: Option<bool>,
    /// Whether `s` vanishes, reported only when `d` itself vanishes.
    pub s_vanishes: Option<bool>,
    pub r_bounded: bool,
}

struct Recursion {
    first_violation: Option<usize>,
    limsup_s: f64,
    s_vanishes: bool,
    r_bounded: bool,
}

fn vanishes(values: &[f64]) -> bool {
    let peak = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    tail_limsup(&values.iter().map(|v| v.abs()).collect::<Vec<_>>()) <= VANISH_RATIO * peak
}

// r_k <= r_{k-1} - s_k + d_k for k >= 1
fn check_recursion(r: &[f64], s: &[f64], d: impl Fn(usize) -> f64) -> Recursion {
    let first_violation = (1..r.len()).find(|&k| {
        let rhs = r[k - 1] - s[k] + d(k) + LEMMA_SLACK;
        r[k].partial_cmp(&rhs).is_none_or(|o| o.is_gt())
    });
    Recursion {
        first_violation,
        limsup_s: tail_limsup(s),
        s_vanishes: vanishes(s),
        r_bounded: r.iter().all(|v| v.is_finite()),
    }
}

/// `r_k <= r_{k-1} - s_k`.
pub fn lemma1_check(seq: &SequenceTriple) -> Result<Lemma1Verdict> {
    seq.validate()?;
    if seq.d.is_some() {
        return Err(Error::Parameter {
            name: "d",
            reason: "the residual-free check takes no d sequence".into(),
        });
    }
    let rec = check_recursion(&seq.r, &seq.s, |_| 0.0);
    Ok(Lemma1Verdict {
        inequality_holds: rec.first_violation.is_none(),
        first_violation: rec.first_violation,
        s_limit_estimate: rec.limsup_s,
        s_vanishes: rec.s_vanishes,
        r_bounded: rec.r_bounded,
    })
}

/// `r_k <= r_{k-1} - s_k + d_k`.
pub fn lemma2_check(seq: &SequenceTriple) -> Result<Lemma2Verdict> {
    seq.validate()?;
    let d = seq.d.as_deref().ok_or_else(|| Error::Parameter {
        name: "d",
        reason: "the residual check needs a d sequence".into(),
    })?;
    let rec = check_recursion(&seq.r, &seq.s, |k| d[k]);
    let d_vanishes =
        tail_limsup(&d.iter().map(|v| v.abs()).collect::<Vec<_>>()) <= LEMMA_SLACK || vanishes(d);
    Ok(Lemma2Verdict {
        inequality_holds: rec.first_violation.is_none(),
        first_violation: rec.first_violation,
        limsup_s: rec.limsup_s,
        bound_respected: seq
            .d_bar
            .map(|bar| rec.limsup_s <= bar * (1.0 + BOUND_SLACK) + LEMMA_SLACK),
        s_vanishes: d_vanishes.then_some(rec.s_vanishes),
        r_bounded: rec.r_bounded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceMetrics {
    /// Tail max of sup_t V_k (Model I) or sup_t eᵀPe (Model II).
    pub limsup_sup_v: f64,
    /// `limsup_sup_v / (εT)` for Model I, `/ (2εT)` for Model II.
    pub bound_ratio: f64,
    /// Error radius implied by the residual bound.
    pub e_radius: f64,
}

pub const MIN_ITERATIONS_FOR_METRICS: usize = 8;

pub fn residual_bound(model: ModelKind, eps: f64, horizon: f64) -> f64 {
    match model {
        ModelKind::I => eps * horizon,
        ModelKind::II => 2.0 * eps * horizon,
    }
}

pub fn convergence_metrics(
    report: &RunReport,
    plant: &Plant,
    eps: f64,
    horizon: f64,
) -> Result<ConvergenceMetrics> {
    if report.iterations.len() < MIN_ITERATIONS_FOR_METRICS {
        return Err(Error::Parameter {
            name: "K",
            reason: format!(
                "need at least {MIN_ITERATIONS_FOR_METRICS} iterations, got {}",
                report.iterations.len()
            ),
        });
    }
    let limsup = tail_limsup(&report.sup_v());
    let bound = residual_bound(report.model, eps, horizon);
    Ok(ConvergenceMetrics {
        limsup_sup_v: limsup,
        bound_ratio: limsup / bound,
        e_radius: plant.error_radius(bound),
    })
}

/// An ordering `lo ≼ hi` asserted for the barrier catalogue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relation {
    pub lo: BarrierKind,
    pub hi: BarrierKind,
    /// Asserted only when the bound is at most 1.
    pub needs_unit_bound: bool,
}

pub const RELATIONS: [Relation; 9] = {
    use BarrierKind::*;
    const fn rel(lo: BarrierKind, hi: BarrierKind) -> Relation {
        Relation {
            lo,
            hi,
            needs_unit_bound: false,
        }
    }
    [
        rel(LI, LII),
        rel(LI, FI),
        rel(FI, FIII),
        rel(LII, FIII),
        Relation {
            lo: FII,
            hi: FIII,
            needs_unit_bound: true,
        },
        rel(FII, FIV),
        rel(FI, FV),
        rel(FII, FV),
        rel(FIII, FV),
    ]
};

impl Relation {
    pub fn applies_at(&self, bound: f64) -> bool {
        !self.needs_unit_bound || bound <= 1.0
    }

    pub fn label(&self) -> String {
        format!("{}<={}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationRow {
    pub relation: Relation,
    pub bound: f64,
    pub holds: bool,
    pub first_violation: Option<barrier::OrderViolation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlfReport {
    pub relations: Vec<RelationRow>,
    pub ibp: Vec<IbpProbe>,
}

/// Samples per relation per bound in [`blf_report`].
pub const REPORT_SAMPLES: usize = 10_000;

impl BlfReport {
    pub fn all_hold(&self) -> bool {
        self.relations.iter().all(|r| r.holds)
    }

    /// Columns `relation, lo, hi, b_V, holds, violation_at`, then the IBP
    /// rows `ibp, kind, , , holds, c`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["relation", "lo", "hi", "b_V", "holds", "detail"])?;
        for row in &self.relations {
            w.write_record([
                row.relation.label(),
                row.relation.lo.to_string(),
                row.relation.hi.to_string(),
                row.bound.to_string(),
                row.holds.to_string(),
                row.first_violation
                    .map(|v| format!("{:?} at V={}", v.aspect, v.v))
                    .unwrap_or_default(),
            ])?;
        }
        for p in &self.ibp {
            w.write_record([
                "ibp".to_string(),
                p.kind.to_string(),
                String::new(),
                String::new(),
                p.ibp_holds.to_string(),
                format!("c={}", p.c_estimate),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("relation      b_V       verdict\n");
        for row in &self.relations {
            out.push_str(&format!(
                "{:<13} {:<9} {}\n",
                row.relation.label(),
                row.bound,
                if row.holds { "holds" } else { "VIOLATED" }
            ));
        }
        out.push_str("\nbarrier  c (V=1, b->1e8) IBP\n");
        for p in &self.ibp {
            out.push_str(&format!(
                "{:<8} {:<16.8} {}\n",
                p.kind.to_string(),
                p.c_estimate,
                if p.ibp_holds { "holds" } else { "fails" }
            ));
        }
        out
    }
}

/// Every asserted ordering at every applicable bound, plus the IBP probe of
/// each kind at `V = 1`.
pub fn blf_report(bounds: &[f64]) -> Result<BlfReport> {
    if bounds.is_empty() {
        return Err(Error::Parameter {
            name: "bounds",
            reason: "need at least one bound".into(),
        });
    }
    let mut relations = Vec::new();
    for &bound in bounds {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::Parameter {
                name: "bounds",
                reason: format!("bound must be positive, got {bound}"),
            });
        }
        for rel in RELATIONS.iter().filter(|r| r.applies_at(bound)) {
            let verdict = barrier::verify_order(rel.lo, rel.hi, bound, REPORT_SAMPLES)?;
            relations.push(RelationRow {
                relation: *rel,
                bound,
                holds: verdict.holds,
                first_violation: verdict.first_violation,
            });
        }
    }
    let seq = barrier::default_bound_sequence();
    let ibp = BarrierKind::ALL
        .iter()
        .map(|&k| barrier::ibp_probe(k, 1.0, &seq))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(BlfReport { relations, ibp })
}
