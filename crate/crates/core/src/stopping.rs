//! Stopping rules: a-priori indices, Morozov's discrepancy principle and the
//! preconditioned (modified) discrepancy principle.
//!
//! All a-posteriori rules stop at the first index whose functional value is
//! at or below the threshold.

use libm::{ceil, log, pow, sqrt};

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg;
use crate::operators::Preconditioner;
use crate::solvers::InverseProblem;

/// A-priori index formulas `k*(h, δ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum APrioriRule {
    /// `⌈scale · (h^{min(1,p)} + δ)^{-1/(p+1)}⌉`
    HolderRate { p: f64, scale: f64 },
    /// `⌈scale · (h + δ)^{-a}⌉`, `a ∈ (0, 1)`
    LogRate { a: f64, scale: f64 },
    /// `⌈scale · (h + δ)^{-1/2}⌉`; grows unboundedly while `k·(h+δ) → 0`.
    Admissible { scale: f64 },
}

/// The two parameterizations of the modified discrepancy threshold.
///
/// For `G = μI`, `Tau(τ)` and `Tau0(τ₀)` describe the same rule when
/// `τ₀ = τ·μ`. General `G` only accepts `Tau0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiscrepancyScale {
    Tau(f64),
    Tau0(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StoppingCriterion {
    APriori(APrioriRule),
    Morozov { tau0: f64 },
    ModifiedDiscrepancy { scale: DiscrepancyScale, c_dagger: f64 },
    MaxOnly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppingRule {
    pub criterion: StoppingCriterion,
    pub n_max: usize,
}

impl StoppingRule {
    pub fn max_only(n_max: usize) -> Self {
        Self {
            criterion: StoppingCriterion::MaxOnly,
            n_max,
        }
    }

    pub fn morozov(tau0: f64, n_max: usize) -> Self {
        Self {
            criterion: StoppingCriterion::Morozov { tau0 },
            n_max,
        }
    }

    pub fn modified(scale: DiscrepancyScale, c_dagger: f64, n_max: usize) -> Self {
        Self {
            criterion: StoppingCriterion::ModifiedDiscrepancy { scale, c_dagger },
            n_max,
        }
    }

    pub fn a_priori(rule: APrioriRule, n_max: usize) -> Self {
        Self {
            criterion: StoppingCriterion::APriori(rule),
            n_max,
        }
    }

    pub fn needs_preconditioner(&self) -> bool {
        matches!(self.criterion, StoppingCriterion::ModifiedDiscrepancy { .. })
    }

    /// Parameter checks; `g` is required for the modified discrepancy rule.
    pub fn validate(&self, g: Option<&Preconditioner>) -> Result<()> {
        match self.criterion {
            StoppingCriterion::Morozov { tau0 } if !(tau0 > 1.0) => {
                Err(invalid("tau0", tau0, "Morozov's rule needs tau0 > 1"))
            }
            StoppingCriterion::ModifiedDiscrepancy { scale, c_dagger } => {
                if !(c_dagger >= 0.0) {
                    return Err(invalid("c_dagger", c_dagger, "must be non-negative"));
                }
                let g = g.ok_or(Error::Unsupported(
                    "the modified discrepancy rule needs a preconditioner",
                ))?;
                tau0_of(scale, g).and_then(|t0| {
                    if t0 > 1.0 {
                        Ok(())
                    } else {
                        Err(invalid("tau", t0, "needs tau·mu > 1 (equivalently tau0 > 1)"))
                    }
                })
            }
            _ => Ok(()),
        }
    }
}

/// Outcome of evaluating a rule at one iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppingDecision {
    pub stop: bool,
    pub functional_value: f64,
    pub threshold: f64,
}

impl StoppingDecision {
    pub fn compare(functional_value: f64, threshold: f64) -> Self {
        Self {
            stop: functional_value <= threshold,
            functional_value,
            threshold,
        }
    }
}

fn tau0_of(scale: DiscrepancyScale, g: &Preconditioner) -> Result<f64> {
    match (scale, g.scalar_value()) {
        (DiscrepancyScale::Tau0(t0), _) => Ok(t0),
        (DiscrepancyScale::Tau(t), Some(mu)) => Ok(t * mu),
        (DiscrepancyScale::Tau(_), None) => Err(Error::Unsupported(
            "tau is only defined for a scalar preconditioner; use tau0",
        )),
    }
}

/// Stopping functional of the modified discrepancy principle.
///
/// Scalar `G = μI`: `‖(μI + A_hA_hᵀ)⁻¹(y^δ − A_h|z|)‖`.
/// General square case: `‖G^{1/2}(G + A_hA_hᵀ)⁻¹(y^δ − A_h|z|)‖`.
pub fn preconditioned_residual(p: &InverseProblem, g: &Preconditioner, z: &[f64]) -> Result<f64> {
    check_len("preconditioned residual iterate", p.cols(), z.len())?;
    let abs_z: alloc::vec::Vec<f64> = z.iter().map(|v| v.abs()).collect();
    let az = p.operator_noisy.apply(&abs_z)?;
    preconditioned_residual_from_image(p, g, &az)
}

/// As [`preconditioned_residual`], given `A_h|z|` already.
pub(crate) fn preconditioned_residual_from_image(
    p: &InverseProblem,
    g: &Preconditioner,
    image: &[f64],
) -> Result<f64> {
    let r: alloc::vec::Vec<f64> = p.data_noisy.iter().zip(image).map(|(y, v)| y - v).collect();
    let factor = g.data_factor(&p.operator_noisy)?;
    let s = factor.solve(&r);
    if g.is_scalar() {
        Ok(linalg::norm(&s))
    } else {
        Ok(sqrt(g.quadratic_form(&s)?.max(0.0)))
    }
}

fn check_noise(delta: f64, h: f64) -> Result<()> {
    if !(delta >= 0.0) {
        return Err(invalid("delta", delta, "noise level must be non-negative"));
    }
    if !(h >= 0.0) {
        return Err(invalid("h", h, "noise level must be non-negative"));
    }
    Ok(())
}

/// Threshold of the modified discrepancy principle for `g`.
///
/// Scalar `G`: `τ(δ + hC†)`. General `G`: `τ₀(δ + hC†)/‖G^{1/2}‖`.
pub fn modified_threshold(
    scale: DiscrepancyScale,
    c_dagger: f64,
    delta: f64,
    h: f64,
    g: &Preconditioner,
) -> Result<f64> {
    check_noise(delta, h)?;
    let level = delta + h * c_dagger;
    match (g.scalar_value(), scale) {
        (Some(_), DiscrepancyScale::Tau(t)) => Ok(t * level),
        (Some(mu), DiscrepancyScale::Tau0(t0)) => Ok(t0 / mu * level),
        (None, _) => Ok(tau0_of(scale, g)? * level / g.sqrt_norm()),
    }
}

pub fn should_stop_modified(
    r: f64,
    scale: DiscrepancyScale,
    c_dagger: f64,
    delta: f64,
    h: f64,
    g: &Preconditioner,
) -> Result<StoppingDecision> {
    if !(r >= 0.0) {
        return Err(invalid("r", r, "functional value must be non-negative"));
    }
    let threshold = modified_threshold(scale, c_dagger, delta, h, g)?;
    Ok(StoppingDecision::compare(r, threshold))
}

/// Morozov's rule `‖A_h x − y^δ‖ ≤ τ₀(h + δ)`.
pub fn should_stop_morozov(residual_norm: f64, tau0: f64, delta: f64, h: f64) -> Result<StoppingDecision> {
    check_noise(delta, h)?;
    if !(residual_norm >= 0.0) {
        return Err(invalid("residual_norm", residual_norm, "must be non-negative"));
    }
    Ok(StoppingDecision::compare(residual_norm, tau0 * (h + delta)))
}

// Exact integers such as 100 can come out of `pow` as 100.00000000000001;
// strip a few ulps before rounding up.
fn ceil_index(v: f64) -> usize {
    ceil(v * (1.0 - 4.0 * f64::EPSILON)).max(0.0) as usize
}

pub fn a_priori_k(h: f64, delta: f64, rule: APrioriRule) -> Result<usize> {
    check_noise(delta, h)?;
    let (base, exponent, scale) = match rule {
        APrioriRule::HolderRate { p, scale } => {
            if !(p > 0.0) {
                return Err(invalid("p", p, "Hölder exponent must be positive"));
            }
            (pow(h, p.min(1.0)) + delta, -1.0 / (p + 1.0), scale)
        }
        APrioriRule::LogRate { a, scale } => {
            if !(a > 0.0 && a < 1.0) {
                return Err(invalid("a", a, "log-rate exponent must lie in (0, 1)"));
            }
            (h + delta, -a, scale)
        }
        APrioriRule::Admissible { scale } => (h + delta, -0.5, scale),
    };
    if !(scale > 0.0) {
        return Err(invalid("scale", scale, "must be positive"));
    }
    if base == 0.0 {
        return Err(Error::InfiniteIndex);
    }
    Ok(ceil_index(scale * pow(base, exponent)))
}

/// `log^{-ν}(1/x)`, shared with the rate experiments.
pub(crate) fn inverse_log_power(x: f64, nu: f64) -> f64 {
    pow(log(1.0 / x), -nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::DenseOperator;
    use alloc::vec;

    fn scalar(mu: f64, n: usize) -> Preconditioner {
        Preconditioner::scalar(mu, n).unwrap()
    }

    #[test]
    fn residual_examples() {
        let a = DenseOperator::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        let z = vec![0.5, -1.0];
        let y = a.apply(&[0.5, 1.0]).unwrap();
        let p = InverseProblem::new(a, y, 0.0, 0.0).unwrap();
        assert_eq!(preconditioned_residual(&p, &scalar(1.0, 2), &z).unwrap(), 0.0);

        let p = InverseProblem::new(DenseOperator::zeros(1, 1), vec![4.0], 0.0, 0.0).unwrap();
        let r = preconditioned_residual(&p, &scalar(2.0, 1), &[123.0]).unwrap();
        assert!((r - 2.0).abs() < 1e-15);

        let p = InverseProblem::new(DenseOperator::from_rows(&[&[1.0]]), vec![3.0], 0.0, 0.0).unwrap();
        let r = preconditioned_residual(&p, &scalar(1.0, 1), &[1.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn general_g_residual_matches_scalar_form_up_to_sqrt_mu() {
        // With G = μI written as a diagonal, the general functional is √μ times the scalar one.
        let a = DenseOperator::from_rows(&[&[1.0, 0.3], &[0.2, 0.7]]);
        let p = InverseProblem::new(a, vec![1.0, -0.5], 0.0, 0.0).unwrap();
        let z = [0.3, -0.2];
        let rs = preconditioned_residual(&p, &scalar(0.5, 2), &z).unwrap();
        let g = Preconditioner::diagonal(vec![0.5, 0.5]).unwrap();
        let rg = preconditioned_residual(&p, &g, &z).unwrap();
        assert!((rg - sqrt(0.5) * rs).abs() < 1e-14);
    }

    #[test]
    fn modified_examples() {
        let g = scalar(1.0, 1);
        let d = should_stop_modified(0.0, DiscrepancyScale::Tau(2.0), 1.0, 0.0, 0.0, &g).unwrap();
        assert!(d.stop);
        let d = should_stop_modified(0.3, DiscrepancyScale::Tau(2.0), 0.0, 0.1, 0.0, &g).unwrap();
        assert!(!d.stop);
        assert!((d.threshold - 0.2).abs() < 1e-15);
        let d = should_stop_modified(0.3, DiscrepancyScale::Tau(2.0), 2.0, 0.1, 0.05, &g).unwrap();
        assert!(d.stop);
        assert!(should_stop_modified(0.3, DiscrepancyScale::Tau(2.0), 2.0, -0.1, 0.0, &g).is_err());
    }

    #[test]
    fn tau_and_tau0_agree_for_scalar_g() {
        let g = scalar(0.25, 3);
        let a = modified_threshold(DiscrepancyScale::Tau(4.4), 1.1, 0.01, 0.02, &g).unwrap();
        let b = modified_threshold(DiscrepancyScale::Tau0(1.1), 1.1, 0.01, 0.02, &g).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn general_g_threshold_divides_by_sqrt_norm() {
        let g = Preconditioner::diagonal(vec![4.0, 1.0]).unwrap();
        let t = modified_threshold(DiscrepancyScale::Tau0(1.1), 1.1, 0.1, 0.1, &g).unwrap();
        assert!((t - 1.1 * 0.21 / 2.0).abs() < 1e-15);
        assert!(modified_threshold(DiscrepancyScale::Tau(1.1), 1.1, 0.1, 0.1, &g).is_err());
    }

    #[test]
    fn morozov_examples() {
        assert!(should_stop_morozov(0.0, 1.1, 0.0, 0.0).unwrap().stop);
        assert!(!should_stop_morozov(0.03, 1.1, 0.01, 0.01).unwrap().stop);
        assert!(should_stop_morozov(0.02, 1.1, 0.01, 0.01).unwrap().stop);
    }

    #[test]
    fn a_priori_examples() {
        let k = a_priori_k(0.0, 1e-4, APrioriRule::HolderRate { p: 1.0, scale: 1.0 }).unwrap();
        assert_eq!(k, 100);
        let k = a_priori_k(0.02, 0.02, APrioriRule::LogRate { a: 0.5, scale: 1.0 }).unwrap();
        assert_eq!(k, 5);
        let k = a_priori_k(0.5, 0.5, APrioriRule::Admissible { scale: 1.0 }).unwrap();
        assert_eq!(k, 1);
        assert_eq!(
            a_priori_k(0.0, 0.0, APrioriRule::Admissible { scale: 1.0 }),
            Err(Error::InfiniteIndex)
        );
        assert!(a_priori_k(0.1, 0.1, APrioriRule::LogRate { a: 1.0, scale: 1.0 }).is_err());
    }

    #[test]
    fn admissible_rule_limits() {
        let mut prev = 0;
        for m in 1..=20 {
            let noise = pow(2.0, -(m as f64));
            let k = a_priori_k(noise / 2.0, noise / 2.0, APrioriRule::Admissible { scale: 1.0 }).unwrap();
            assert!(k >= prev);
            prev = k;
            if m == 20 {
                assert!(k as f64 * noise < 1e-2);
                assert!(k > 1000);
            }
        }
    }

    #[test]
    fn rule_validation() {
        let g = scalar(0.5, 2);
        assert!(StoppingRule::morozov(1.0, 10).validate(None).is_err());
        assert!(StoppingRule::morozov(1.1, 10).validate(None).is_ok());
        let bad = StoppingRule::modified(DiscrepancyScale::Tau(1.5), 1.0, 10);
        assert!(bad.validate(Some(&g)).is_err());
        let ok = StoppingRule::modified(DiscrepancyScale::Tau(2.5), 1.0, 10);
        assert!(ok.validate(Some(&g)).is_ok());
        assert!(ok.validate(None).is_err());
    }
}
