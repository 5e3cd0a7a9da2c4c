//! Device-parameter extraction from a standalone transfer curve and sizing
//! of the external linearization resistors.

use serde::{Deserialize, Serialize};

use crate::closed_form::pinning_alpha_g;
use crate::device::OperatingRegion;
use crate::error::{Error, Result};
use crate::network::{
    transfer_curve, DacConfig, NodeSolution, ParallelAttach, Topology, TransferCurve,
};

/// Device figures recovered from a measured or simulated transfer curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractedParams {
    pub vth: f64,
    /// Mid-range secant resistance of one unit, ohms.
    pub ron: f64,
    pub vdd: f64,
    /// Output span where both device groups are in triode, volts.
    pub linear_range: (f64, f64),
}

impl ExtractedParams {
    pub fn new(vth: f64, ron: f64, vdd: f64) -> Result<Self> {
        let p = Self {
            vth,
            ron,
            vdd,
            linear_range: (vth, vdd - vth),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vdd > 0.0) {
            return Err(Error::Domain(format!("vdd must be > 0, got {}", self.vdd)));
        }
        if !(self.vth > 0.0 && self.vth < self.vdd / 2.0) {
            return Err(Error::Domain(format!(
                "vth = {} V must lie in (0, vdd/2)",
                self.vth
            )));
        }
        if !(self.ron > 0.0) || !self.ron.is_finite() {
            return Err(Error::Domain(format!("ron must be > 0, got {}", self.ron)));
        }
        Ok(())
    }
}

/// Threshold implied by a measured triode-triode span.
pub fn threshold_from_span(vdd: f64, linear_span: f64) -> f64 {
    (vdd - linear_span) / 2.0
}

pub fn extract_parameters(curve: &TransferCurve) -> Result<ExtractedParams> {
    if curve.config.topology != Topology::Standalone {
        return Err(Error::Precondition(
            "extraction needs a standalone (uncorrected) curve".into(),
        ));
    }
    extract_from_rows(&curve.rows, curve.config.vdd)
}

/// Extraction over bare rows, e.g. a curve imported from bench data.
///
/// The linear region is the longest run of codes with both groups in
/// triode. Its edges are placed halfway between the last code inside and
/// the first code outside, which removes most of the one-code bias of a
/// coarse curve. `ron` is the secant `v / i` of one unit at half supply,
/// read from a zero-intercept quadratic `i = a v + b v^2` fitted to the
/// pull-up and pull-down samples inside the run (the triode law has exactly
/// this shape).
pub fn extract_from_rows(rows: &[NodeSolution], vdd: f64) -> Result<ExtractedParams> {
    if rows.len() < 2 {
        return Err(Error::Extraction("curve has fewer than 2 codes".into()));
    }
    if rows.windows(2).any(|w| w[1].code <= w[0].code) {
        return Err(Error::Extraction("codes must be strictly ascending".into()));
    }
    let (lo, hi) = longest_triode_run(rows)
        .ok_or_else(|| Error::Extraction("no code has both device groups in triode".into()))?;
    if hi - lo + 1 < 2 {
        return Err(Error::Extraction(format!(
            "linear region holds a single code ({}); curve too coarse",
            rows[lo].code
        )));
    }

    let lower = if lo > 0 {
        0.5 * (rows[lo - 1].vdac + rows[lo].vdac)
    } else {
        rows[lo].vdac
    };
    let upper = if hi + 1 < rows.len() {
        0.5 * (rows[hi].vdac + rows[hi + 1].vdac)
    } else {
        rows[hi].vdac
    };
    let vth = threshold_from_span(vdd, upper - lower);

    let mut samples: Vec<(f64, f64)> = rows[lo..=hi]
        .iter()
        .flat_map(|r| {
            [
                (r.vd - r.vdac, r.i_per_pullup),
                (r.vdac - r.vs, r.i_per_pulldown),
            ]
        })
        .filter(|(v, i)| v.is_finite() && i.is_finite())
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    samples.dedup_by(|a, b| a.0 == b.0);
    let i_mid = quadratic_fit_at(&samples, vdd / 2.0).ok_or_else(|| {
        Error::Extraction("not enough current samples in the linear region".into())
    })?;
    if !(i_mid > 0.0) {
        return Err(Error::Extraction(format!(
            "non-positive unit current {i_mid} A at mid-range"
        )));
    }

    let p = ExtractedParams {
        vth,
        ron: (vdd / 2.0) / i_mid,
        vdd,
        linear_range: (lower, upper),
    };
    p.validate().map_err(|e| Error::Extraction(e.to_string()))?;
    Ok(p)
}

fn longest_triode_run(rows: &[NodeSolution]) -> Option<(usize, usize)> {
    let tt = |r: &NodeSolution| {
        r.region_p == OperatingRegion::Triode && r.region_n == OperatingRegion::Triode
    };
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for (i, r) in rows.iter().enumerate() {
        match (tt(r), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| i - s > b - a + 1) {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        let end = rows.len() - 1;
        if best.is_none_or(|(a, b)| end - s > b - a) {
            best = Some((s, end));
        }
    }
    best
}

// Least-squares `y = a x + b x^2` evaluated at `x`.
fn quadratic_fit_at(samples: &[(f64, f64)], x: f64) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let (mut s2, mut s3, mut s4, mut sy1, mut sy2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(v, i) in samples {
        s2 += v * v;
        s3 += v * v * v;
        s4 += v * v * v * v;
        sy1 += i * v;
        sy2 += i * v * v;
    }
    let det = s2 * s4 - s3 * s3;
    if !(det.abs() > 1e-12 * s2 * s4) {
        return None;
    }
    let a = (sy1 * s4 - sy2 * s3) / det;
    let b = (s2 * sy2 - s3 * sy1) / det;
    Some(a * x + b * x * x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingResult {
    pub topology: Topology,
    /// Parallel-to-unit conductance ratio (two-resistor sizing).
    pub alpha_g: Option<f64>,
    /// Total current bounds for the chosen series resistance (four-resistor).
    pub it_bounds: Option<(f64, f64)>,
    /// Admissible series resistance interval for the current target.
    pub rs_bounds: Option<(f64, f64)>,
    pub rs_total: Option<f64>,
    /// Expected (lowest, highest) output level.
    pub predicted_dynamic_range: (f64, f64),
    /// Supply minus series drop still reaches threshold.
    pub strong_inversion_ok: Option<bool>,
    /// How `rs_total` was chosen.
    pub series_rule: Option<String>,
}

/// Parallel resistors that stretch the triode-triode region over all codes:
/// `rp = ron / alpha_g`, `alpha_g = d_max * vth / (vdd - 2 vth)`.
pub fn size_two_resistor(p: &ExtractedParams, d_max: u32) -> Result<SizingResult> {
    if d_max < 1 {
        return Err(Error::Domain("d_max must be >= 1".into()));
    }
    let alpha_g = pinning_alpha_g(d_max, p.vth, p.vdd)?;
    let rp = p.ron / alpha_g;
    if !rp.is_finite() {
        return Err(Error::Infeasible {
            constraint: "alpha-g",
            detail: format!("alpha_g = {alpha_g} gives unbounded parallel resistance"),
        });
    }
    Ok(SizingResult {
        topology: Topology::TwoResistor { rpp: rp, rpn: rp },
        alpha_g: Some(alpha_g),
        it_bounds: None,
        rs_bounds: None,
        rs_total: None,
        predicted_dynamic_range: (p.vth, p.vdd - p.vth),
        strong_inversion_ok: None,
        series_rule: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourResistorRequest {
    /// Target total supply current, amperes.
    pub it_target: f64,
    /// Fraction of the series resistance placed on the supply side (`rsp`).
    pub split: f64,
    /// Fixed total series resistance; the interval midpoint when absent.
    pub rs_total: Option<f64>,
}

impl FourResistorRequest {
    pub fn new(it_target: f64, split: f64) -> Self {
        Self {
            it_target,
            split,
            rs_total: None,
        }
    }
}

/// Series and parallel resistors for simultaneous P/N saturation at a
/// current target.
///
/// The series total must satisfy `(vdd - 2 vth)/rs <= it <= (vdd - vth)/rs`;
/// the midpoint of the resulting `rs` interval is used unless one is fixed.
/// Parallel resistors are `vth / it`.
pub fn size_four_resistor(p: &ExtractedParams, req: &FourResistorRequest) -> Result<SizingResult> {
    let it = req.it_target;
    if !(it > 0.0) || !it.is_finite() {
        return Err(Error::Domain(format!("it_target must be > 0, got {it}")));
    }
    if !(0.0..=1.0).contains(&req.split) {
        return Err(Error::Domain(format!(
            "split must lie in [0, 1], got {}",
            req.split
        )));
    }
    let (vdd, vth) = (p.vdd, p.vth);
    let window = vdd - 2.0 * vth;
    if !(window > 0.0) {
        return Err(Error::Infeasible {
            constraint: "linear-region",
            detail: format!("vdd - 2 vth = {window} V; no saturation window exists"),
        });
    }
    let rs_bounds = (window / it, (vdd - vth) / it);
    let (rs_total, rule) = match req.rs_total {
        Some(rs) => {
            if !(rs > 0.0) {
                return Err(Error::Domain(format!("rs_total must be > 0, got {rs}")));
            }
            let (lo, hi) = (window / rs, (vdd - vth) / rs);
            if it < lo || it > hi {
                return Err(Error::Infeasible {
                    constraint: "total-current-bounds",
                    detail: format!(
                        "it_target = {it} A outside [{lo}, {hi}] A allowed by rs = {rs} ohm"
                    ),
                });
            }
            (rs, "fixed")
        }
        None => (0.5 * (rs_bounds.0 + rs_bounds.1), "midpoint"),
    };
    let strong_inversion_ok = vdd - it * rs_total >= vth;
    if !strong_inversion_ok {
        return Err(Error::Infeasible {
            constraint: "strong-inversion",
            detail: format!(
                "vdd - it * rs = {} V is below vth = {vth} V",
                vdd - it * rs_total
            ),
        });
    }
    let rsp = req.split * rs_total;
    let rsn = rs_total - rsp;
    let rp = vth / it;
    Ok(SizingResult {
        topology: Topology::FourResistor {
            rsp,
            rsn,
            rpp: rp,
            rpn: rp,
            parallel_attach: ParallelAttach::InnerRails,
        },
        alpha_g: None,
        it_bounds: Some((window / rs_total, (vdd - vth) / rs_total)),
        rs_bounds: Some(rs_bounds),
        rs_total: Some(rs_total),
        predicted_dynamic_range: (vdd - it * rsp - vth, it * rsn + vth),
        strong_inversion_ok: Some(strong_inversion_ok),
        series_rule: Some(rule.to_string()),
    })
}

/// Saturation status of one code's operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationFlags {
    pub code: u32,
    /// Gate drive `vd - vs` exceeds both thresholds.
    pub strong_inversion: bool,
    pub p_saturated: bool,
    pub n_saturated: bool,
}

impl SaturationFlags {
    pub fn in_window(&self) -> bool {
        self.strong_inversion && self.p_saturated && self.n_saturated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationWindow {
    pub flags: Vec<SaturationFlags>,
}

impl SaturationWindow {
    pub fn codes(&self) -> Vec<u32> {
        self.flags
            .iter()
            .filter(|f| f.in_window())
            .map(|f| f.code)
            .collect()
    }

    /// Fraction of codes inside the window.
    pub fn coverage(&self) -> f64 {
        self.codes().len() as f64 / self.flags.len() as f64
    }
}

/// Evaluates, at every solved code, the strong-inversion and P/N saturation
/// conditions: `vd - vs >= vth`, `vdac >= vd - vthn`, `vdac <= vs + |vthp|`.
///
/// Standalone configurations are accepted as the zero-series-resistance
/// case; the two-resistor topology is rejected.
pub fn check_saturation_window(config: &DacConfig) -> Result<SaturationWindow> {
    match config.topology {
        Topology::FourResistor { .. } | Topology::Standalone => {}
        Topology::TwoResistor { .. } => {
            return Err(Error::Precondition(
                "saturation window needs a four-resistor (or standalone) topology".into(),
            ))
        }
    }
    let curve = transfer_curve(config)?;
    Ok(SaturationWindow {
        flags: curve
            .rows
            .iter()
            .map(|r| SaturationFlags {
                code: r.code,
                strong_inversion: r.region_p != OperatingRegion::Cutoff
                    && r.region_n != OperatingRegion::Cutoff,
                p_saturated: r.region_p == OperatingRegion::Saturation,
                n_saturated: r.region_n == OperatingRegion::Saturation,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DevicePair;
    use crate::network::Encoding;

    fn paper_params() -> ExtractedParams {
        ExtractedParams::new(1.15, 40.0, 3.3).unwrap()
    }

    #[test]
    fn span_to_threshold() {
        assert!((threshold_from_span(3.3, 1.0) - 1.15).abs() < 1e-15);
    }

    #[test]
    fn two_resistor_values() {
        let s = size_two_resistor(&paper_params(), 15).unwrap();
        assert!((s.alpha_g.unwrap() - 17.25).abs() < 1e-12);
        let Topology::TwoResistor { rpp, rpn } = s.topology else {
            panic!()
        };
        assert_eq!(rpp, rpn);
        assert!((rpp - 40.0 / 17.25).abs() < 1e-12);
        assert!((rpp - 2.32).abs() < 0.01);
        assert_eq!(s.predicted_dynamic_range, (1.15, 3.3 - 1.15));

        let s31 = size_two_resistor(&paper_params(), 31).unwrap();
        let Topology::TwoResistor { rpp: rp31, .. } = s31.topology else {
            panic!()
        };
        // rp scales as 1/d_max.
        assert!((rp31 * 31.0 - rpp * 15.0).abs() < 1e-12);
        assert!((rp31 - 1.122).abs() < 1e-3);
    }

    #[test]
    fn two_resistor_small_vth_limit() {
        let p = ExtractedParams::new(1e-6, 40.0, 3.3).unwrap();
        let s = size_two_resistor(&p, 15).unwrap();
        assert!(s.alpha_g.unwrap() < 1e-5);
        let Topology::TwoResistor { rpp, .. } = s.topology else {
            panic!()
        };
        assert!(rpp > 1e6);
    }

    #[test]
    fn two_resistor_without_window_fails() {
        let p = ExtractedParams {
            vth: 1.7,
            ron: 40.0,
            vdd: 3.3,
            linear_range: (0.0, 0.0),
        };
        assert!(matches!(
            size_two_resistor(&p, 15),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn four_resistor_values() {
        let s = size_four_resistor(&paper_params(), &FourResistorRequest::new(0.2, 1.0)).unwrap();
        let (lo, hi) = s.rs_bounds.unwrap();
        assert!((lo - 5.0).abs() < 1e-12 && (hi - 10.75).abs() < 1e-12);
        let Topology::FourResistor {
            rsp, rsn, rpp, rpn, ..
        } = s.topology
        else {
            panic!()
        };
        assert!((rpp - 5.75).abs() < 1e-12 && rpp == rpn);
        assert!((rsp - 7.875).abs() < 1e-12 && rsn == 0.0);
        assert_eq!(s.strong_inversion_ok, Some(true));
        assert_eq!(s.series_rule.as_deref(), Some("midpoint"));
        // The hand-picked 10 ohm series resistor is inside the interval.
        assert!(lo <= 10.0 && 10.0 <= hi);
    }

    #[test]
    fn four_resistor_large_current_limit() {
        let s = size_four_resistor(&paper_params(), &FourResistorRequest::new(1e6, 0.5)).unwrap();
        assert!(s.rs_total.unwrap() < 1e-5);
        let Topology::FourResistor { rpp, rsp, rsn, .. } = s.topology else {
            panic!()
        };
        assert!(rpp < 1e-5);
        assert!((rsp - rsn).abs() < 1e-18);
    }

    #[test]
    fn four_resistor_collapse_at_high_threshold() {
        let p = ExtractedParams::new(1.6, 40.0, 3.3).unwrap();
        let mut req = FourResistorRequest::new(0.2, 1.0);
        req.rs_total = Some(10.0);
        // (vdd - vth) / rs = 0.17 A < 0.2 A
        match size_four_resistor(&p, &req) {
            Err(Error::Infeasible { constraint, .. }) => {
                assert_eq!(constraint, "total-current-bounds")
            }
            other => panic!("{other:?}"),
        }
        let free = size_four_resistor(&p, &FourResistorRequest::new(0.2, 1.0)).unwrap();
        let (lo, _) = free.rs_bounds.unwrap();
        assert!((lo - 0.5).abs() < 1e-12);
        let p = ExtractedParams {
            vth: 1.65,
            ron: 40.0,
            vdd: 3.3,
            linear_range: (0.0, 0.0),
        };
        assert!(matches!(
            size_four_resistor(&p, &FourResistorRequest::new(0.2, 1.0)),
            Err(Error::Infeasible {
                constraint: "linear-region",
                ..
            })
        ));
    }

    #[test]
    fn four_resistor_rejects_bad_requests() {
        assert!(size_four_resistor(&paper_params(), &FourResistorRequest::new(0.0, 1.0)).is_err());
        assert!(size_four_resistor(&paper_params(), &FourResistorRequest::new(0.2, 1.5)).is_err());
    }

    fn four_bit(topology: Topology) -> DacConfig {
        DacConfig::new(
            4,
            3.3,
            DevicePair::calibrated(1.15, 40.0, 3.3).unwrap(),
            topology,
            Encoding::Binary,
        )
        .unwrap()
    }

    #[test]
    fn saturation_window_cases() {
        let standalone = check_saturation_window(&four_bit(Topology::Standalone)).unwrap();
        assert!(standalone.codes().is_empty());

        let sized = four_bit(Topology::FourResistor {
            rsp: 10.0,
            rsn: 0.0,
            rpp: 5.0,
            rpn: 5.0,
            parallel_attach: ParallelAttach::InnerRails,
        });
        assert!(check_saturation_window(&sized).unwrap().coverage() >= 0.8);

        let starved = four_bit(Topology::FourResistor {
            rsp: 1000.0,
            rsn: 0.0,
            rpp: 5.0,
            rpn: 5.0,
            parallel_attach: ParallelAttach::InnerRails,
        });
        let w = check_saturation_window(&starved).unwrap();
        assert!(w
            .flags
            .iter()
            .all(|f| !f.strong_inversion && !f.in_window()));

        let two = four_bit(Topology::TwoResistor {
            rpp: 2.35,
            rpn: 2.35,
        });
        assert!(matches!(
            check_saturation_window(&two),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn extraction_errors() {
        let corrected = transfer_curve(&four_bit(Topology::TwoResistor {
            rpp: 2.35,
            rpn: 2.35,
        }))
        .unwrap();
        assert!(matches!(
            extract_parameters(&corrected),
            Err(Error::Precondition(_))
        ));
        // Every code in triode-triode gives no outside neighbours but still extracts;
        // a curve with none fails.
        let mut rows = transfer_curve(&four_bit(Topology::Standalone))
            .unwrap()
            .rows;
        for r in rows.iter_mut() {
            r.region_p = OperatingRegion::Saturation;
        }
        assert!(matches!(
            extract_from_rows(&rows, 3.3),
            Err(Error::Extraction(_))
        ));
    }

    #[test]
    fn longest_run_prefers_longer_tail() {
        let base = transfer_curve(&four_bit(Topology::Standalone))
            .unwrap()
            .rows;
        let mut rows = base.clone();
        for (i, r) in rows.iter_mut().enumerate() {
            let tt = matches!(i, 1 | 5 | 6 | 7);
            r.region_p = if tt {
                OperatingRegion::Triode
            } else {
                OperatingRegion::Saturation
            };
            r.region_n = OperatingRegion::Triode;
        }
        assert_eq!(longest_triode_run(&rows), Some((5, 7)));
        for (i, r) in rows.iter_mut().enumerate() {
            r.region_p = if i >= 13 || i == 2 {
                OperatingRegion::Triode
            } else {
                OperatingRegion::Saturation
            };
        }
        assert_eq!(longest_triode_run(&rows), Some((13, 15)));
    }
}
