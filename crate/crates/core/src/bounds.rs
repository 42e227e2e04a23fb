//! Generalization-bound calculators for banked LoRA distillation.
//!
//! All logarithms are natural, so entropies and KL terms are in nats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use libm::{log, pow, sqrt};
use serde::{Deserialize, Serialize};

pub const LOG_BASE: &str = "e";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundsError {
    #[error("variances must be positive")]
    NonpositiveVariance,
    #[error("lambda must be positive")]
    NonpositiveLambda,
    #[error("{name} is out of range: {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("sample is empty")]
    EmptySample,
    #[error("k values must be non-empty, at least 1 and strictly ascending")]
    BadKValues,
}

fn positive(name: &'static str, value: f64) -> Result<f64, BoundsError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(BoundsError::OutOfRange { name, value })
    }
}

fn nonnegative(name: &'static str, value: f64) -> Result<f64, BoundsError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(BoundsError::OutOfRange { name, value })
    }
}

/// `rho - 1 - ln rho`, zero at `rho = 1` and positive elsewhere.
fn variance_penalty(rho: f64) -> f64 {
    rho - 1.0 - log(rho)
}

/// KL between the isotropic Gaussian posterior and prior over `m` adapter
/// parameters.
pub fn gaussian_kl(m: f64, mu_norm_sq: f64, sigma0_sq: f64, sigma_post_sq: f64) -> Result<f64, BoundsError> {
    if !(sigma0_sq > 0.0 && sigma_post_sq > 0.0) || !sigma0_sq.is_finite() || !sigma_post_sq.is_finite() {
        return Err(BoundsError::NonpositiveVariance);
    }
    nonnegative("m", m)?;
    nonnegative("mu_norm_sq", mu_norm_sq)?;
    let rho = sigma_post_sq / sigma0_sq;
    Ok(mu_norm_sq / (2.0 * sigma0_sq) + (m / 2.0) * variance_penalty(rho))
}

/// Upper bound on the squared norm of the regularized minimizer.
pub fn norm_bound(l0: f64, lambda: f64) -> Result<f64, BoundsError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(BoundsError::NonpositiveLambda);
    }
    nonnegative("L0", l0)?;
    Ok(2.0 * l0 / lambda)
}

/// `ln K_bank + H_R + H_A + eps`.
pub fn entropy_floor_m(k_bank: u64, h_r: f64, h_a: f64, eps_slack: f64) -> Result<f64, BoundsError> {
    if k_bank == 0 {
        return Err(BoundsError::OutOfRange { name: "k_bank", value: 0.0 });
    }
    nonnegative("H_R", h_r)?;
    nonnegative("H_A", h_a)?;
    nonnegative("eps_slack", eps_slack)?;
    Ok(log(k_bank as f64) + h_r + h_a + eps_slack)
}

/// `L0 / (sigma0_sq * lambda) + (m/2)(rho - 1 - ln rho) + ln(1/delta)`.
/// `delta = 1` is accepted here for identity checks.
pub fn complexity_n(l0: f64, sigma0_sq: f64, lambda: f64, m: f64, rho: f64, delta: f64) -> Result<f64, BoundsError> {
    nonnegative("L0", l0)?;
    if !(sigma0_sq > 0.0) {
        return Err(BoundsError::NonpositiveVariance);
    }
    if !(lambda > 0.0) {
        return Err(BoundsError::NonpositiveLambda);
    }
    nonnegative("m", m)?;
    positive("rho", rho)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(BoundsError::OutOfRange { name: "delta", value: delta });
    }
    Ok(l0 / (sigma0_sq * lambda) + (m / 2.0) * variance_penalty(rho) + log(1.0 / delta))
}

fn default_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    pub tau: f64,
    pub n: u64,
    pub m: u64,
    pub sigma0_sq: f64,
    pub sigma_post_sq: f64,
    pub lambda: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    #[serde(rename = "L_hat")]
    pub l_hat: f64,
    pub k_bank: u64,
    #[serde(rename = "H_R")]
    pub h_r: f64,
    #[serde(rename = "H_A")]
    pub h_a: f64,
    /// Near-floor slack; deliberately has no default.
    pub eps_slack: f64,
    pub delta: f64,
    #[serde(default = "default_c")]
    pub c_const: f64,
}

impl BoundInputs {
    pub fn check(&self) -> Result<(), BoundsError> {
        positive("tau", self.tau)?;
        if self.n == 0 {
            return Err(BoundsError::OutOfRange { name: "n", value: 0.0 });
        }
        if self.m == 0 {
            return Err(BoundsError::OutOfRange { name: "m", value: 0.0 });
        }
        if !(self.sigma0_sq > 0.0 && self.sigma_post_sq > 0.0) {
            return Err(BoundsError::NonpositiveVariance);
        }
        if !(self.lambda > 0.0) {
            return Err(BoundsError::NonpositiveLambda);
        }
        nonnegative("L0", self.l0)?;
        nonnegative("L_hat", self.l_hat)?;
        if self.k_bank == 0 {
            return Err(BoundsError::OutOfRange { name: "k_bank", value: 0.0 });
        }
        nonnegative("H_R", self.h_r)?;
        nonnegative("H_A", self.h_a)?;
        nonnegative("eps_slack", self.eps_slack)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BoundsError::OutOfRange { name: "delta", value: self.delta });
        }
        positive("c_const", self.c_const)?;
        Ok(())
    }

    pub fn rho(&self) -> f64 {
        self.sigma_post_sq / self.sigma0_sq
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(rename = "M")]
    pub m_term: f64,
    #[serde(rename = "N")]
    pub n_term: f64,
    pub kl_upper: f64,
    pub gap_term: f64,
    pub lower_order_term: f64,
    pub total_bound: f64,
    pub log_base: String,
    pub components: BTreeMap<String, f64>,
}

pub fn theorem_bound(inputs: &BoundInputs) -> Result<BoundReport, BoundsError> {
    inputs.check()?;
    let rho = inputs.rho();
    let m = inputs.m as f64;
    let n = inputs.n as f64;
    let m_term = entropy_floor_m(inputs.k_bank, inputs.h_r, inputs.h_a, inputs.eps_slack)?;
    let n_term = complexity_n(inputs.l0, inputs.sigma0_sq, inputs.lambda, m, rho, inputs.delta)?;
    let mu_sq = norm_bound(inputs.l0, inputs.lambda)?;
    let kl_upper = gaussian_kl(m, mu_sq, inputs.sigma0_sq, inputs.sigma_post_sq)?;
    let gap_term = sqrt(2.0 * inputs.tau * m_term * n_term / n);
    let lower_order_term = inputs.c_const * inputs.tau * n_term / n;

    let mut components = BTreeMap::new();
    components.insert("ln_k_bank".to_string(), log(inputs.k_bank as f64));
    components.insert("H_R".to_string(), inputs.h_r);
    components.insert("H_A".to_string(), inputs.h_a);
    components.insert("eps_slack".to_string(), inputs.eps_slack);
    components.insert("frozen_fit".to_string(), inputs.l0 / (inputs.sigma0_sq * inputs.lambda));
    components.insert("variance_penalty".to_string(), (m / 2.0) * variance_penalty(rho));
    components.insert("confidence".to_string(), log(1.0 / inputs.delta));
    components.insert("rho".to_string(), rho);
    components.insert("norm_bound".to_string(), mu_sq);

    Ok(BoundReport {
        m_term,
        n_term,
        kl_upper,
        gap_term,
        lower_order_term,
        total_bound: inputs.l_hat + gap_term + lower_order_term,
        log_base: LOG_BASE.to_string(),
        components,
    })
}

/// Plug-in `H(outcome | context)` from empirical frequencies.
pub fn plug_in_conditional_entropy<C: Ord, O: Ord>(samples: &[(C, O)]) -> Result<f64, BoundsError> {
    if samples.is_empty() {
        return Err(BoundsError::EmptySample);
    }
    let mut counts: BTreeMap<&C, BTreeMap<&O, u64>> = BTreeMap::new();
    for (c, o) in samples {
        *counts.entry(c).or_default().entry(o).or_default() += 1;
    }
    let total = samples.len() as f64;
    let mut h = 0.0;
    for outcomes in counts.values() {
        let n_ctx: u64 = outcomes.values().sum();
        let n_ctx = n_ctx as f64;
        let mut h_ctx = 0.0;
        for &k in outcomes.values() {
            let p = k as f64 / n_ctx;
            h_ctx -= p * log(p);
        }
        h += (n_ctx / total) * h_ctx;
    }
    Ok(h.max(0.0))
}

/// Synthetic coverage slack `c0 * k^(-alpha)`.
pub fn coverage_epsilon(k: u64, c0: f64, alpha: f64) -> f64 {
    c0 * pow(k as f64, -alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub coverage_model: String,
    pub c0: f64,
    pub alpha: f64,
    pub points: Vec<(u64, f64)>,
    pub argmin_k: u64,
    pub min_m: f64,
}

/// `M(k) = ln k + H_R + H_A + c0 k^(-alpha)` over `k_values`; ties in the
/// minimum go to the smallest k.
pub fn tradeoff_curve(k_values: &[u64], c0: f64, alpha: f64, h_r: f64, h_a: f64) -> Result<TradeoffCurve, BoundsError> {
    if k_values.is_empty() || k_values[0] == 0 || k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BoundsError::BadKValues);
    }
    nonnegative("c0", c0)?;
    nonnegative("alpha", alpha)?;
    nonnegative("H_R", h_r)?;
    nonnegative("H_A", h_a)?;
    let points: Vec<(u64, f64)> =
        k_values.iter().map(|&k| (k, log(k as f64) + h_r + h_a + coverage_epsilon(k, c0, alpha))).collect();
    let (argmin_k, min_m) = points.iter().copied().fold(points[0], |best, p| if p.1 < best.1 { p } else { best });
    Ok(TradeoffCurve { coverage_model: "synthetic".to_string(), c0, alpha, points, argmin_k, min_m })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinReport {
    pub bound: f64,
    /// Whether `V_hat <= tau * L_hat`, which bounded losses always satisfy.
    pub mean_variance_ok: bool,
}

fn check_bernstein(l_hat: f64, kl: f64, delta: f64, n: u64, tau: f64, c_const: f64) -> Result<(), BoundsError> {
    nonnegative("L_hat", l_hat)?;
    nonnegative("kl", kl)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(BoundsError::OutOfRange { name: "delta", value: delta });
    }
    if n == 0 {
        return Err(BoundsError::OutOfRange { name: "n", value: 0.0 });
    }
    positive("tau", tau)?;
    positive("c_const", c_const)?;
    Ok(())
}

/// `L_hat + sqrt(2 V_hat (KL + ln 1/delta) / n) + c tau (KL + ln 1/delta) / n`.
pub fn bernstein_bound(
    l_hat: f64,
    v_hat: f64,
    kl: f64,
    delta: f64,
    n: u64,
    tau: f64,
    c_const: f64,
) -> Result<BernsteinReport, BoundsError> {
    check_bernstein(l_hat, kl, delta, n, tau, c_const)?;
    nonnegative("V_hat", v_hat)?;
    let budget = kl + log(1.0 / delta);
    let n = n as f64;
    Ok(BernsteinReport {
        bound: l_hat + sqrt(2.0 * v_hat * budget / n) + c_const * tau * budget / n,
        mean_variance_ok: v_hat <= tau * l_hat,
    })
}

/// The mean-dependent form obtained with `V_hat = tau * L_hat`.
pub fn bernstein_corollary(
    l_hat: f64,
    kl: f64,
    delta: f64,
    n: u64,
    tau: f64,
    c_const: f64,
) -> Result<f64, BoundsError> {
    check_bernstein(l_hat, kl, delta, n, tau, c_const)?;
    let budget = kl + log(1.0 / delta);
    let n = n as f64;
    Ok(l_hat + sqrt(2.0 * tau * l_hat * budget / n) + c_const * tau * budget / n)
}

/// Empirical mean and population variance.
pub fn mean_and_variance(xs: &[f64]) -> Result<(f64, f64), BoundsError> {
    if xs.is_empty() {
        return Err(BoundsError::EmptySample);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok((mean, var))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub train_nll: f64,
    pub test_nll: f64,
    pub gap: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    pub adapter_norm_sq: f64,
    pub accuracy: f64,
}

pub fn table3_report(
    train_nll: f64,
    test_nll: f64,
    l0: f64,
    adapter_norm_sq: f64,
    accuracy: f64,
) -> Result<Table3Row, BoundsError> {
    nonnegative("train_nll", train_nll)?;
    nonnegative("test_nll", test_nll)?;
    Ok(Table3Row { train_nll, test_nll, gap: test_nll - train_nll, l0, adapter_norm_sq, accuracy })
}

/// Whether the banked supervision is at least as predictable to the frozen
/// student as free-form supervision.
pub fn frozen_alignment_holds(l0_bank: f64, l0_free: f64) -> bool {
    l0_bank <= l0_free
}
