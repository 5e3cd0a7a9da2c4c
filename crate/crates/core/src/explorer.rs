//! Resistor sweeps and trade-off tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{summary, LinearityReport};
use crate::network::{transfer_curve, DacConfig, Topology};

/// Parallel resistances from 5 to 10 ohms in 0.5 ohm steps.
pub fn default_rp_grid() -> Vec<f64> {
    (0..=10).map(|i| 5.0 + 0.5 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rp: f64,
    /// Total series resistance, zero for the two-resistor topology.
    pub rs: f64,
    /// Absent when this point failed; see `status`.
    pub report: Option<LinearityReport>,
    /// `ok`, or the failure message.
    pub status: String,
}

impl SweepPoint {
    fn evaluate(config: Result<DacConfig>, rp: f64, rs: f64) -> Self {
        let outcome = config
            .and_then(|c| transfer_curve(&c))
            .and_then(|curve| summary(&curve));
        match outcome {
            Ok(report) => Self {
                rp,
                rs,
                report: Some(report),
                status: "ok".into(),
            },
            Err(e) => Self {
                rp,
                rs,
                report: None,
                status: e.to_string(),
            },
        }
    }
}

fn check_sweepable(base: &DacConfig, values: &[f64], what: &str) -> Result<()> {
    if matches!(base.topology, Topology::Standalone) {
        return Err(Error::Precondition(
            "sweeps need a two- or four-resistor base topology".into(),
        ));
    }
    if values.is_empty() {
        return Err(Error::Precondition(format!("{what} list is empty")));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "{what} values must be positive, got {v}"
        )));
    }
    Ok(())
}

/// Re-solves `base` with both parallel resistors set to each value.
/// Results follow the input order; a failing point is recorded, not fatal.
pub fn sweep_parallel(base: &DacConfig, rp_values: &[f64]) -> Result<Vec<SweepPoint>> {
    base.validate()?;
    check_sweepable(base, rp_values, "rp")?;
    let (rsp, rsn) = base.topology.series();
    Ok(rp_values
        .par_iter()
        .map(|&rp| {
            let config = base
                .topology
                .with_parallel(rp)
                .and_then(|t| base.with_topology(t));
            SweepPoint::evaluate(config, rp, rsp + rsn)
        })
        .collect())
}

/// Rows are `rs` major. The series total is split between the supply and
/// ground sides in the same ratio as in `base` (all on the supply side if
/// `base` has none).
pub fn sweep_grid(
    base: &DacConfig,
    rp_values: &[f64],
    rs_values: &[f64],
) -> Result<Vec<SweepPoint>> {
    base.validate()?;
    check_sweepable(base, rp_values, "rp")?;
    let Topology::FourResistor {
        rsp,
        rsn,
        parallel_attach,
        ..
    } = base.topology
    else {
        return Err(Error::Precondition(
            "series sweeps need a four-resistor base topology".into(),
        ));
    };
    if let Some(v) = rs_values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "rs values must be positive, got {v}"
        )));
    }
    if rs_values.is_empty() {
        return Err(Error::Precondition("rs list is empty".into()));
    }
    let split = if rsp + rsn > 0.0 {
        rsp / (rsp + rsn)
    } else {
        1.0
    };
    let grid: Vec<(f64, f64)> = rs_values
        .iter()
        .flat_map(|&rs| rp_values.iter().map(move |&rp| (rp, rs)))
        .collect();
    Ok(grid
        .par_iter()
        .map(|&(rp, rs)| {
            let topology = Topology::FourResistor {
                rsp: split * rs,
                rsn: (1.0 - split) * rs,
                rpp: rp,
                rpn: rp,
                parallel_attach,
            };
            SweepPoint::evaluate(base.with_topology(topology), rp, rs)
        })
        .collect())
}

pub const SWEEP_CSV_HEADER: &str =
    "rp_ohm,rs_ohm,dnl_max_lsb,inl_max_lsb,dr_volt,imax_amp,monotonic,status";

/// Rendered table; failed rows leave the metric columns empty.
pub fn to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for p in points {
        let metrics = match &p.report {
            Some(r) => format!(
                "{},{},{},{},{}",
                r.dnl_max_abs, r.inl_max_abs, r.dynamic_range, r.i_max, r.monotonic
            ),
            None => ",,,,".to_string(),
        };
        let status = if p.status.contains([',', '"', '\n']) {
            format!("\"{}\"", p.status.replace('"', "\"\"").replace('\n', " "))
        } else {
            p.status.clone()
        };
        out.push_str(&format!("{},{},{metrics},{status}\n", p.rp, p.rs));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DevicePair;
    use crate::network::{Encoding, ParallelAttach};

    fn paper_four_resistor() -> DacConfig {
        DacConfig::new(
            4,
            3.3,
            DevicePair::calibrated(1.15, 40.0, 3.3).unwrap(),
            Topology::FourResistor {
                rsp: 10.0,
                rsn: 0.0,
                rpp: 5.0,
                rpn: 5.0,
                parallel_attach: ParallelAttach::InnerRails,
            },
            Encoding::Binary,
        )
        .unwrap()
    }

    #[test]
    fn grid_is_half_ohm_steps() {
        let g = default_rp_grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 5.0);
        assert_eq!(g[10], 10.0);
    }

    #[test]
    fn single_point_matches_direct_summary() {
        let base = paper_four_resistor();
        let pts = sweep_parallel(&base, &[5.0]).unwrap();
        let direct = summary(&transfer_curve(&base).unwrap()).unwrap();
        assert_eq!(pts[0].report.as_ref(), Some(&direct));
        assert_eq!(pts[0].rs, 10.0);
    }

    #[test]
    fn order_follows_input() {
        let pts = sweep_parallel(&paper_four_resistor(), &[9.0, 5.0, 7.0]).unwrap();
        let rps: Vec<f64> = pts.iter().map(|p| p.rp).collect();
        assert_eq!(rps, [9.0, 5.0, 7.0]);
    }

    #[test]
    fn preconditions() {
        let standalone = paper_four_resistor()
            .with_topology(Topology::Standalone)
            .unwrap();
        assert!(sweep_parallel(&standalone, &[5.0]).is_err());
        assert!(sweep_parallel(&paper_four_resistor(), &[]).is_err());
        assert!(sweep_parallel(&paper_four_resistor(), &[-1.0]).is_err());
    }

    #[test]
    fn grid_sweep_layout_and_csv() {
        let pts = sweep_grid(&paper_four_resistor(), &[5.0, 6.0], &[8.0, 10.0]).unwrap();
        let pairs: Vec<(f64, f64)> = pts.iter().map(|p| (p.rp, p.rs)).collect();
        assert_eq!(pairs, [(5.0, 8.0), (6.0, 8.0), (5.0, 10.0), (6.0, 10.0)]);
        let csv = to_csv(&pts);
        assert_eq!(csv.lines().next(), Some(SWEEP_CSV_HEADER));
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().skip(1).all(|l| l.ends_with(",ok")));
    }

    #[test]
    fn failed_rows_keep_their_place() {
        let p = SweepPoint {
            rp: 1.0,
            rs: 2.0,
            report: None,
            status: "solver failed, residual 3".into(),
        };
        assert_eq!(
            to_csv(&[p]).lines().nth(1),
            Some("1,2,,,,,,\"solver failed, residual 3\"")
        );
    }
}
