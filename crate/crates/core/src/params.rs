//! Model constants, the bifurcation parameterization and the closed-form
//! first-order coefficients of the thin-annulus expansion.
//!
//! `mu` is the primary parameter. The far-field LDL level is derived from it
//! through `L0 = (rho3 (gamma + H0) + epsilon mu) / lambda`, and `rho4` is not
//! a parameter at all: it is an output of the steady-state solve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    pub k1: f64,
    pub k2: f64,
    #[serde(rename = "K1")]
    pub big_k1: f64,
    #[serde(rename = "K2")]
    pub big_k2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub lambda: f64,
    pub gamma: f64,
    #[serde(rename = "D")]
    pub diffusivity: f64,
    #[serde(rename = "M0")]
    pub m0: f64,
    #[serde(rename = "H0")]
    pub h0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub mu: f64,
}

/// One violated standing assumption.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: &'static str,
    pub detail: String,
}

pub const BETA_DISTINCT: &str = "β₁≠β₂";
pub const EPSILON_RANGE: &str = "0 < epsilon < 1/4";
pub const MU_ABOVE_CRITICAL: &str = "mu > mu_c";
pub const MU_C_NEGATIVE: &str = "μ_c<0";

impl Parameters {
    pub fn with_mu(&self, mu: f64) -> Self {
        Parameters { mu, ..*self }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Parameters { epsilon, ..*self }
    }

    /// `gamma + H0`, which appears in nearly every closed form.
    pub fn gamma_h0(&self) -> f64 {
        self.gamma + self.h0
    }

    /// Far-field LDL concentration implied by `(mu, epsilon)`.
    pub fn l0(&self) -> f64 {
        (self.rho3 * self.gamma_h0() + self.epsilon * self.mu) / self.lambda
    }

    /// Inverse of [`Parameters::l0`].
    pub fn mu_from_l0(&self, l0: f64) -> f64 {
        (self.lambda * l0 - self.rho3 * self.gamma_h0()) / self.epsilon
    }

    /// `lambda K1 + rho3 (gamma + H0)`.
    fn production_denominator(&self) -> f64 {
        self.lambda * self.big_k1 + self.rho3 * self.gamma_h0()
    }

    fn positivity(&self) -> [(&'static str, f64); 14] {
        [
            ("k1 >= 0", self.k1),
            ("k2 >= 0", self.k2),
            ("K1 > 0", self.big_k1),
            ("K2 > 0", self.big_k2),
            ("rho1 >= 0", self.rho1),
            ("rho2 >= 0", self.rho2),
            ("rho3 >= 0", self.rho3),
            ("lambda > 0", self.lambda),
            ("gamma > 0", self.gamma),
            ("D > 0", self.diffusivity),
            ("M0 > 0", self.m0),
            ("H0 > 0", self.h0),
            ("beta1 > 0", self.beta1),
            ("beta2 > 0", self.beta2),
        ]
    }

    /// Positivity and range constraints only (everything except the two
    /// assumptions tied to `mu` and to `beta1 != beta2`).
    pub fn validate_positivity(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, value) in self.positivity() {
            let strict = name.contains("> 0");
            let bad = !value.is_finite() || if strict { value <= 0.0 } else { value < 0.0 };
            if bad {
                out.push(Violation {
                    constraint: name,
                    detail: format!("value {value}"),
                });
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.25) {
            out.push(Violation {
                constraint: EPSILON_RANGE,
                detail: format!("epsilon = {}", self.epsilon),
            });
        }
        if !self.mu.is_finite() {
            out.push(Violation {
                constraint: "mu finite",
                detail: format!("mu = {}", self.mu),
            });
        }
        out
    }

    /// Every standing assumption; an empty list means the set is admissible
    /// for the full analysis.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = self.validate_positivity();
        if out.is_empty() {
            match compute_mu_c(self) {
                Ok(mu_c) if self.mu > mu_c => {}
                Ok(mu_c) => out.push(Violation {
                    constraint: MU_ABOVE_CRITICAL,
                    detail: format!("mu = {} <= mu_c = {mu_c}", self.mu),
                }),
                Err(e) => out.push(Violation {
                    constraint: MU_ABOVE_CRITICAL,
                    detail: e.to_string(),
                }),
            }
        }
        if self.beta1 == self.beta2 {
            out.push(Violation {
                constraint: BETA_DISTINCT,
                detail: format!("beta1 = beta2 = {}", self.beta1),
            });
        }
        out
    }
}

/// Parameter sets shipped with the crate, by name.
pub const NAMED_SETS: [(&str, &str); 3] = [
    ("reference", include_str!("../configs/reference_set.toml")),
    ("gap", include_str!("../configs/gap_set.toml")),
    ("mode", include_str!("../configs/mode_set.toml")),
];

pub fn from_toml_str(text: &str) -> Result<Parameters> {
    toml::from_str(text).map_err(|e| Error::Config(format!("bad parameter table: {e}")))
}

pub fn named_set(name: &str) -> Result<Parameters> {
    let (_, text) = NAMED_SETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown parameter set '{name}'")))?;
    from_toml_str(text)
}

/// Critical threshold below which the radial steady state is not available:
///
/// `mu_c = rho3/beta1 * { (gamma+H0) (lambda k1 M0 / (lambda K1 + rho3 (gamma+H0)) + rho1) - rho2 H0 }`
pub fn compute_mu_c(p: &Parameters) -> Result<f64> {
    let denom = p.production_denominator();
    if !(denom > 0.0) {
        return Err(Error::Domain(format!(
            "lambda K1 + rho3 (gamma + H0) = {denom} must be positive"
        )));
    }
    if !(p.beta1 > 0.0) {
        return Err(Error::Domain(format!("beta1 = {} must be positive", p.beta1)));
    }
    let brace = p.gamma_h0() * (p.lambda * p.k1 * p.m0 / denom + p.rho1) - p.rho2 * p.h0;
    Ok(p.rho3 / p.beta1 * brace)
}

/// First-order coefficients `L* ~ rho3 (gamma+H0)/lambda + eps L*1`,
/// `H* ~ H0 + eps H*1`, `F* ~ eps F*1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub mu_c: f64,
    pub lstar1: f64,
    pub hstar1: f64,
    pub fstar1: f64,
    /// `None` when `F*1 = 0`, where the leading-order rho4 formula is undefined.
    pub rho4_leading: Option<f64>,
}

impl DerivedConstants {
    /// O(1) part of `L*`.
    pub fn lstar0(p: &Parameters) -> f64 {
        p.rho3 * p.gamma_h0() / p.lambda
    }
}

pub fn leading_order_coeffs(p: &Parameters) -> Result<DerivedConstants> {
    let denom = p.production_denominator();
    if !(denom > 0.0) || p.lambda == 0.0 || p.beta1 == 0.0 || p.beta2 == 0.0 || p.diffusivity == 0.0
    {
        return Err(Error::Domain(
            "zero denominator in the first-order coefficients".into(),
        ));
    }
    let gh = p.gamma_h0();
    let lstar1 = p.mu / p.lambda
        - (p.rho3 * gh / p.beta1) * (p.k1 * p.m0 / denom + p.rho1 / p.lambda);
    let hstar1 = -p.rho2 * p.h0 / p.beta1;
    let fstar1 = (p.rho3 * gh / (p.beta2 * p.diffusivity)) * p.k1 * p.m0 / denom;
    let mut derived = DerivedConstants {
        mu_c: compute_mu_c(p)?,
        lstar1,
        hstar1,
        fstar1,
        rho4_leading: None,
    };
    derived.rho4_leading = rho4_leading(&derived, p).ok();
    Ok(derived)
}

/// O(1) part of rho4: `(1/F*1) (M0/(gamma+H0)) (lambda L*1 - rho3 H*1)`.
pub fn rho4_leading(d: &DerivedConstants, p: &Parameters) -> Result<f64> {
    let numerator = p.m0 / p.gamma_h0() * (p.lambda * d.lstar1 - p.rho3 * d.hstar1);
    if d.fstar1 == 0.0 {
        if numerator == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::Degenerate(
            "F*1 = 0 (no foam-cell production), rho4 is undetermined at leading order".into(),
        ));
    }
    Ok(numerator / d.fstar1)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_set() -> Parameters {
        Parameters {
            k1: 1.0,
            k2: 1.0,
            big_k1: 1.0,
            big_k2: 1.0,
            rho1: 0.1,
            rho2: 0.1,
            rho3: 0.2,
            lambda: 1.0,
            gamma: 1.0,
            diffusivity: 1.0,
            m0: 1.0,
            h0: 1.0,
            beta1: 1.0,
            beta2: 2.0,
            epsilon: 0.01,
            mu: 0.0,
        }
    }

    #[test]
    fn named_sets_parse_and_validate() {
        for (name, _) in NAMED_SETS {
            let p = named_set(name).unwrap();
            assert!(p.validate_positivity().is_empty(), "{name}");
            assert!(compute_mu_c(&p).unwrap() < p.mu);
        }
        assert!(named_set("gap").unwrap().validate().is_empty());
        let r = named_set("reference").unwrap();
        assert!((compute_mu_c(&r).unwrap() + 0.074_285_714_285_714_3).abs() < 1e-12);
        assert!(matches!(named_set("nope"), Err(Error::Config(_))));
        assert!(matches!(from_toml_str("k1 = 1.0\nbogus = 2.0"), Err(Error::Config(_))));
    }

    #[test]
    fn mu_c_closed_form() {
        // 0.2 * {2 * (1/1.4 + 0.1) - 0.1} = 0.2 * (1.628571428... - 0.1)
        let mu_c = compute_mu_c(&unit_set()).unwrap();
        let expected = 0.2 * (2.0 * (1.0 / 1.4 + 0.1) - 0.1);
        assert!((mu_c - expected).abs() < 1e-15);
        assert!((mu_c - 0.305_714_285_714_285_7).abs() < 1e-12);
    }

    #[test]
    fn mu_c_vanishes() {
        let p = Parameters { rho3: 0.0, ..unit_set() };
        assert_eq!(compute_mu_c(&p).unwrap(), 0.0);
        let p = Parameters { k1: 0.0, rho1: 0.0, rho2: 0.0, ..unit_set() };
        assert_eq!(compute_mu_c(&p).unwrap(), 0.0);
    }

    #[test]
    fn mu_c_domain_error() {
        let p = Parameters { lambda: -1.0, rho3: 0.0, ..unit_set() };
        assert!(matches!(compute_mu_c(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn validate_reports() {
        let gap = Parameters { rho2: 2.0, ..unit_set() };
        let mu_c = compute_mu_c(&gap).unwrap();
        assert!((mu_c + 0.074_285_714_285_714).abs() < 1e-12);
        assert!(gap.validate().is_empty());

        let same = Parameters { beta2: 1.0, ..gap };
        let v = same.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, BETA_DISTINCT);

        let thick = Parameters { epsilon: 0.5, ..gap };
        let v = thick.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, EPSILON_RANGE);

        let low = Parameters { mu: -1.0, ..gap };
        assert_eq!(low.validate()[0].constraint, MU_ABOVE_CRITICAL);
    }

    #[test]
    fn leading_coefficients() {
        let p = Parameters { k1: 0.0, rho1: 0.0, ..unit_set() };
        let d = leading_order_coeffs(&p).unwrap();
        assert_eq!(d.lstar1, 0.0);
        assert_eq!(d.fstar1, 0.0);

        let p = Parameters { rho2: 2.0, h0: 1.0, beta1: 1.0, ..unit_set() };
        assert_eq!(leading_order_coeffs(&p).unwrap().hstar1, -2.0);
    }

    #[test]
    fn rho4_closed_form() {
        let p = Parameters {
            m0: 1.0,
            gamma: 1.0,
            h0: 1.0,
            lambda: 1.0,
            rho3: 0.2,
            ..unit_set()
        };
        let d = DerivedConstants {
            mu_c: 0.0,
            lstar1: 0.5,
            hstar1: -2.0,
            fstar1: 0.1,
            rho4_leading: None,
        };
        // (1/0.1) (1/2) (0.5 + 0.4) = 4.5
        assert!((rho4_leading(&d, &p).unwrap() - 4.5).abs() < 1e-12);

        let balanced = DerivedConstants { lstar1: 0.2 * -2.0, ..d };
        assert_eq!(rho4_leading(&balanced, &p).unwrap(), 0.0);

        let degenerate = DerivedConstants { fstar1: 0.0, ..d };
        assert!(matches!(rho4_leading(&degenerate, &p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rho4_leading_is_mu_excess() {
        // lambda L*1 - rho3 H*1 = mu - mu_c
        let p = Parameters { rho2: 2.0, mu: 0.3, ..unit_set() };
        let d = leading_order_coeffs(&p).unwrap();
        let lhs = p.lambda * d.lstar1 - p.rho3 * d.hstar1;
        assert!((lhs - (p.mu - d.mu_c)).abs() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_params() -> impl Strategy<Value = Parameters> {
            (
                0.1f64..5.0,
                0.1f64..5.0,
                0.0f64..3.0,
                0.0f64..3.0,
                0.05f64..2.0,
                0.1f64..3.0,
                0.1f64..2.0,
                0.1f64..2.0,
                0.001f64..0.2,
                -5.0f64..5.0,
            )
                .prop_map(|(k1, big_k1, rho1, rho2, rho3, lambda, gamma, beta1, epsilon, mu)| {
                    Parameters {
                        k1,
                        big_k1,
                        rho1,
                        rho2,
                        rho3,
                        lambda,
                        gamma,
                        beta1,
                        epsilon,
                        mu,
                        ..unit_set()
                    }
                })
        }

        proptest! {
            #[test]
            fn mu_c_linear_in_rho2(p in arb_params(), delta in 0.01f64..2.0) {
                let base = compute_mu_c(&p).unwrap();
                let shifted = compute_mu_c(&Parameters { rho2: p.rho2 + delta, ..p }).unwrap();
                let slope = -delta * p.rho3 * p.h0 / p.beta1;
                let scale = base.abs().max(shifted.abs()).max(slope.abs());
                prop_assert!(((shifted - base) - slope).abs() <= 1e-12 * scale);
            }

            #[test]
            fn coefficients_affine_in_mu(p in arb_params(), delta in -3.0f64..3.0) {
                let a = leading_order_coeffs(&p).unwrap();
                let b = leading_order_coeffs(&p.with_mu(p.mu + delta)).unwrap();
                let scale = a.lstar1.abs().max(b.lstar1.abs()).max(1.0);
                prop_assert!(((b.lstar1 - a.lstar1) - delta / p.lambda).abs() <= 1e-14 * scale);
                prop_assert_eq!(a.hstar1, b.hstar1);
                prop_assert_eq!(a.fstar1, b.fstar1);
            }

            #[test]
            fn l0_round_trip(p in arb_params()) {
                let mu = p.mu_from_l0(p.l0());
                // mu is recovered from a difference of O(1) numbers divided by epsilon
                let scale = p.mu.abs().max(p.rho3 * p.gamma_h0() / p.epsilon);
                prop_assert!((mu - p.mu).abs() <= 1e-14 * scale);
            }
        }
    }
}
