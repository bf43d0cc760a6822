//! Invariants of the suspension flow over a Markov measure: Abramov entropy,
//! Lyapunov exponent, Hausdorff dimension, and the constants `a` and `b`.

use serde::Serialize;

use crate::error::Result;
use crate::markov::MarkovMeasure;
use crate::sft::LocallyConstantFn;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowStats {
    /// Flow entropy `h(mu_P) / ∫r`.
    pub h_flow: f64,
    /// Exponent `∫F^u / ∫r`.
    pub lambda: f64,
    /// `1 + 2 h(mu_P) / ∫F^u`.
    pub dim: f64,
    /// `-∫G`, which equals the shift entropy.
    pub a: f64,
    /// `∫F^u`.
    pub b: f64,
    pub roof_mean: f64,
}

impl FlowStats {
    /// Entropy-to-exponent ratio `h / λ`; dimension two means exactly 1/2.
    pub fn ratio(&self) -> f64 {
        self.a / self.b
    }

    /// Whether `h_flow <= lambda`, which holds for any measure coming from a
    /// genuine geodesic flow but is not implied by arbitrary inputs.
    pub fn entropy_below_exponent(&self) -> bool {
        self.h_flow <= self.lambda + 1e-12
    }
}

pub fn flow_stats(measure: &MarkovMeasure, roof: &LocallyConstantFn, fu: &LocallyConstantFn) -> Result<FlowStats> {
    roof.check_positive()?;
    fu.check_positive()?;
    let h = measure.entropy();
    let roof_mean = measure.integrate(roof);
    let b = measure.integrate(fu);
    Ok(FlowStats {
        h_flow: h / roof_mean,
        lambda: b / roof_mean,
        dim: 1.0 + 2.0 * h / b,
        a: h,
        b,
        roof_mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimTwoReport {
    pub is_dim_two: bool,
    /// `h / ∫F^u - 1/2`.
    pub residual_ratio: f64,
    /// `b - 2a`.
    pub residual_b2a: f64,
}

pub fn check_dim_two(stats: &FlowStats, tol: f64) -> DimTwoReport {
    let residual_ratio = stats.ratio() - 0.5;
    DimTwoReport {
        is_dim_two: residual_ratio.abs() <= tol,
        residual_ratio,
        residual_b2a: stats.b - 2.0 * stats.a,
    }
}
