//! Analytic transfer expressions for the constant-conductance switch model.
//!
//! Every unit transistor is replaced by a fixed on-conductance (`gop` for
//! the pull-up, `gon` for the pull-down), which turns the DAC into a
//! conductance divider. These are fast estimates and cross-checks for the
//! nonlinear solver, not substitutes for it.
//!
//! Two code conventions exist. A bare inverter chain is *inverting*: code
//! `m` turns on `m` pull-downs. A GPIO buffer (two inverters) is
//! *non-inverting*: code `m` turns on `m` pull-ups. Callers always pick one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label attached to closed-form results wherever they are reported.
pub const MODEL_LABEL: &str = "constant-conductance approximation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Code `m` enables `m` pull-down units (inverter chain).
    Inverting,
    /// Code `m` enables `m` pull-up units (GPIO buffer).
    NonInverting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchModel {
    /// Unit pull-up on-conductance, siemens.
    pub gop: f64,
    /// Unit pull-down on-conductance, siemens.
    pub gon: f64,
    pub vdd: f64,
    pub d_max: u32,
}

impl SwitchModel {
    pub fn new(gop: f64, gon: f64, vdd: f64, d_max: u32) -> Result<Self> {
        let m = Self {
            gop,
            gon,
            vdd,
            d_max,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gop > 0.0 && self.gon > 0.0) {
            return Err(Error::Domain(format!(
                "conductances must be > 0 (gop = {}, gon = {})",
                self.gop, self.gon
            )));
        }
        if self.d_max < 1 {
            return Err(Error::Domain("d_max must be >= 1".into()));
        }
        if self.epsilon().abs() >= 1.0 {
            return Err(Error::Domain(format!(
                "|epsilon| = {} must be < 1",
                self.epsilon().abs()
            )));
        }
        Ok(())
    }

    /// Relative error factor `1 - gon / gop`.
    pub fn epsilon(&self) -> f64 {
        1.0 - self.gon / self.gop
    }

    fn check_code(&self, code: u32) -> Result<()> {
        check_code(self.d_max, code)
    }
}

fn check_code(d_max: u32, code: u32) -> Result<()> {
    if d_max < 1 {
        return Err(Error::Domain("d_max must be >= 1".into()));
    }
    if code > d_max {
        return Err(Error::Domain(format!(
            "code {code} exceeds d_max = {d_max}"
        )));
    }
    Ok(())
}

/// Ideal non-inverting output `code / d_max * vdd`.
pub fn ideal_output(d_max: u32, code: u32, vdd: f64) -> Result<f64> {
    check_code(d_max, code)?;
    Ok(code as f64 * vdd / d_max as f64)
}

/// Conductance-divider output of the switch model.
pub fn switch_model_output(m: &SwitchModel, code: u32, convention: Convention) -> Result<f64> {
    m.validate()?;
    m.check_code(code)?;
    let (up, down) = unit_counts(m.d_max, code, convention);
    let g_up = up * m.gop;
    let g_down = down * m.gon;
    Ok(g_up / (g_up + g_down) * m.vdd)
}

/// The same divider written as the ideal output times an error term in
/// `epsilon`. Algebraically identical to [`switch_model_output`].
pub fn error_factor_output(m: &SwitchModel, code: u32, convention: Convention) -> Result<f64> {
    m.validate()?;
    m.check_code(code)?;
    let d = m.d_max as f64;
    let e = m.epsilon();
    // Fraction of the code range spent on pull-downs.
    let (ideal, x) = match convention {
        Convention::Inverting => ((d - code as f64) / d * m.vdd, code as f64 / d),
        Convention::NonInverting => (code as f64 / d * m.vdd, (d - code as f64) / d),
    };
    Ok(ideal * (1.0 + x * e / (1.0 - x * e)))
}

fn unit_counts(d_max: u32, code: u32, convention: Convention) -> (f64, f64) {
    let (m, rest) = (code as f64, (d_max - code) as f64);
    match convention {
        Convention::Inverting => (rest, m),
        Convention::NonInverting => (m, rest),
    }
}

/// Two-resistor expression as published:
/// `(m + gpp/gop) / (d_max - m*eps + (gpp + gnn)/gop) * vdd`.
///
/// The `m * eps` denominator term belongs to the inverting convention while
/// the numerator is non-inverting; the two agree only at `eps = 0`. See
/// [`two_resistor_divider`] for the self-consistent form.
pub fn two_resistor_output(m: &SwitchModel, code: u32, gpp: f64, gnn: f64) -> Result<f64> {
    m.validate()?;
    m.check_code(code)?;
    check_conductances(gpp, gnn)?;
    let c = code as f64;
    let num = c + gpp / m.gop;
    let den = m.d_max as f64 - c * m.epsilon() + (gpp + gnn) / m.gop;
    Ok(num / den * m.vdd)
}

/// Exact non-inverting divider with parallel conductances `gpp` (to VDD)
/// and `gnn` (to GND).
pub fn two_resistor_divider(m: &SwitchModel, code: u32, gpp: f64, gnn: f64) -> Result<f64> {
    m.validate()?;
    m.check_code(code)?;
    check_conductances(gpp, gnn)?;
    let (up, down) = unit_counts(m.d_max, code, Convention::NonInverting);
    let g_up = up * m.gop + gpp;
    let g_down = down * m.gon + gnn;
    Ok(g_up / (g_up + g_down) * m.vdd)
}

/// Symmetric form `(m + alpha_g) / (d_max + 2 alpha_g) * vdd` with
/// `alpha_g = gp / go`.
pub fn symmetric_two_resistor_output(d_max: u32, code: u32, alpha_g: f64, vdd: f64) -> Result<f64> {
    check_code(d_max, code)?;
    if !(alpha_g >= 0.0) {
        return Err(Error::Domain(format!(
            "alpha_g must be >= 0, got {alpha_g}"
        )));
    }
    Ok((code as f64 + alpha_g) / (d_max as f64 + 2.0 * alpha_g) * vdd)
}

/// Conductance ratio that pins code 0 at `vth` and code `d_max` at
/// `vdd - vth`: `alpha_g = d_max * vth / (vdd - 2 vth)`.
pub fn pinning_alpha_g(d_max: u32, vth: f64, vdd: f64) -> Result<f64> {
    if !(vth >= 0.0) {
        return Err(Error::Domain(format!("vth must be >= 0, got {vth}")));
    }
    let window = vdd - 2.0 * vth;
    if !(window > 0.0) {
        return Err(Error::Infeasible {
            constraint: "linear-region",
            detail: format!("vdd - 2 vth = {window} V leaves no triode-triode range"),
        });
    }
    Ok(d_max as f64 * vth / window)
}

fn check_conductances(gpp: f64, gnn: f64) -> Result<()> {
    if gpp > 0.0 && gnn > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "parallel conductances must be > 0 (gpp = {gpp}, gnn = {gnn})"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ideal_values() {
        assert_eq!(ideal_output(15, 0, 3.3).unwrap(), 0.0);
        assert_eq!(ideal_output(15, 15, 3.3).unwrap(), 3.3);
        assert!((ideal_output(15, 5, 3.3).unwrap() - 1.1).abs() < 1e-15);
        assert!(ideal_output(15, 16, 3.3).is_err());
        assert!(ideal_output(0, 0, 3.3).is_err());
    }

    #[test]
    fn matched_switch_model_reduces_to_ideal() {
        let m = SwitchModel::new(0.025, 0.025, 3.3, 15).unwrap();
        let v = switch_model_output(&m, 5, Convention::NonInverting).unwrap();
        assert!((v - 1.1).abs() < 1e-12);
        let inv = switch_model_output(&m, 5, Convention::Inverting).unwrap();
        assert!((inv - (3.3 - 1.1)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_switch_model_values() {
        let m = SwitchModel::new(0.025, 0.0225, 3.3, 15).unwrap();
        assert!((m.epsilon() - 0.1).abs() < 1e-12);
        assert_eq!(
            switch_model_output(&m, 15, Convention::NonInverting).unwrap(),
            3.3
        );
        // 8 gop / (8 gop + 7 gon) * 3.3
        let v = switch_model_output(&m, 8, Convention::NonInverting).unwrap();
        let expected = 8.0 * 0.025 / (8.0 * 0.025 + 7.0 * 0.0225) * 3.3;
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 1.846_15).abs() < 1e-5);
    }

    #[test]
    fn symmetric_form_endpoints() {
        let lo = symmetric_two_resistor_output(15, 0, 17.25, 3.3).unwrap();
        let hi = symmetric_two_resistor_output(15, 15, 17.25, 3.3).unwrap();
        assert!((lo - 1.15).abs() < 1e-12);
        assert!((hi - 2.15).abs() < 1e-12);
        // alpha_g -> 0 recovers the ideal line.
        for code in 0..=15 {
            let v = symmetric_two_resistor_output(15, code, 0.0, 3.3).unwrap();
            assert!((v - ideal_output(15, code, 3.3).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn pinning_alpha_requires_window() {
        assert!((pinning_alpha_g(15, 1.15, 3.3).unwrap() - 17.25).abs() < 1e-12);
        assert!(matches!(
            pinning_alpha_g(15, 1.65, 3.3),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn epsilon_bound_enforced() {
        assert!(SwitchModel::new(0.01, 0.025, 3.3, 15).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn error_factor_form_equals_divider(
            eps in -0.9f64..0.9,
            n_bits in 1u32..10,
            frac in 0.0f64..=1.0,
            inverting in any::<bool>(),
        ) {
            let d_max = (1u32 << n_bits) - 1;
            let code = (frac * d_max as f64).round() as u32;
            let gop = 0.025;
            let m = SwitchModel::new(gop, gop * (1.0 - eps), 3.3, d_max).unwrap();
            let conv = if inverting { Convention::Inverting } else { Convention::NonInverting };
            let a = switch_model_output(&m, code, conv).unwrap();
            let b = error_factor_output(&m, code, conv).unwrap();
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }

        #[test]
        fn symmetric_form_is_published_form_at_zero_eps(
            alpha in 0.01f64..100.0,
            n_bits in 1u32..10,
            frac in 0.0f64..=1.0,
        ) {
            let d_max = (1u32 << n_bits) - 1;
            let code = (frac * d_max as f64).round() as u32;
            let gop = 0.025;
            let m = SwitchModel::new(gop, gop, 3.3, d_max).unwrap();
            let gp = alpha * gop;
            let a = two_resistor_output(&m, code, gp, gp).unwrap();
            let b = symmetric_two_resistor_output(d_max, code, alpha, 3.3).unwrap();
            let c = two_resistor_divider(&m, code, gp, gp).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((a - c).abs() <= 1e-12);
        }

        #[test]
        fn pinning_alpha_stretches_to_threshold(
            vth in 0.05f64..1.6,
            n_bits in 1u32..10,
        ) {
            let d_max = (1u32 << n_bits) - 1;
            let alpha = pinning_alpha_g(d_max, vth, 3.3).unwrap();
            let lo = symmetric_two_resistor_output(d_max, 0, alpha, 3.3).unwrap();
            let hi = symmetric_two_resistor_output(d_max, d_max, alpha, 3.3).unwrap();
            prop_assert!((lo - vth).abs() <= 1e-12);
            prop_assert!((hi - (3.3 - vth)).abs() <= 1e-12);
        }
    }
}
