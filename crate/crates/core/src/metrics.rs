//! Static linearity figures: DNL, INL (end-point referenced), dynamic range
//! and current extrema.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::TransferCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InlReference {
    /// Straight line through the first and last code.
    EndPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    /// Per-step DNL in LSB, `d_max` entries.
    pub dnl: Vec<f64>,
    /// Per-code INL in LSB, `d_max + 1` entries.
    pub inl: Vec<f64>,
    pub dnl_max_abs: f64,
    pub inl_max_abs: f64,
    /// `vdac(d_max) - vdac(0)`, volts.
    pub dynamic_range: f64,
    pub monotonic: bool,
    pub i_max: f64,
    pub i_at_midrange: f64,
    /// Volts per LSB used for every LSB-denominated figure.
    #[serde(rename = "lsb_ref_v")]
    pub lsb_ref: f64,
    pub inl_reference: InlReference,
}

/// End-point LSB: `(v[last] - v[0]) / (len - 1)`.
pub fn lsb(levels: &[f64]) -> Result<f64> {
    if levels.len() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 levels, got {}",
            levels.len()
        )));
    }
    let span = levels[levels.len() - 1] - levels[0];
    if span == 0.0 || !span.is_finite() {
        return Err(Error::ZeroSpan);
    }
    Ok(span / (levels.len() - 1) as f64)
}

pub fn dnl_from_levels(levels: &[f64]) -> Result<Vec<f64>> {
    let q = lsb(levels)?;
    Ok(levels.windows(2).map(|w| (w[1] - w[0]) / q - 1.0).collect())
}

pub fn inl_from_levels(levels: &[f64]) -> Result<Vec<f64>> {
    let q = lsb(levels)?;
    let v0 = levels[0];
    let mut inl: Vec<f64> = levels
        .iter()
        .enumerate()
        .map(|(i, v)| (v - (v0 + q * i as f64)) / q)
        .collect();
    // The reference line passes through both end points by construction.
    let last = inl.len() - 1;
    inl[0] = 0.0;
    inl[last] = 0.0;
    Ok(inl)
}

pub fn dnl(curve: &TransferCurve) -> Result<Vec<f64>> {
    dnl_from_levels(&curve.vdac())
}

pub fn inl(curve: &TransferCurve) -> Result<Vec<f64>> {
    inl_from_levels(&curve.vdac())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Report from bare levels and the per-code supply currents.
pub fn summarize_levels(levels: &[f64], currents: &[f64]) -> Result<LinearityReport> {
    if currents.len() != levels.len() {
        return Err(Error::Domain(format!(
            "{} levels but {} current samples",
            levels.len(),
            currents.len()
        )));
    }
    let lsb_ref = lsb(levels)?;
    let dnl = dnl_from_levels(levels)?;
    let inl = inl_from_levels(levels)?;
    let d_max = levels.len() - 1;
    Ok(LinearityReport {
        dnl_max_abs: max_abs(&dnl),
        inl_max_abs: max_abs(&inl),
        dynamic_range: levels[d_max] - levels[0],
        monotonic: levels.windows(2).all(|w| w[1] >= w[0]),
        i_max: currents.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        i_at_midrange: currents[d_max.div_ceil(2)],
        lsb_ref,
        dnl,
        inl,
        inl_reference: InlReference::EndPoint,
    })
}

pub fn summary(curve: &TransferCurve) -> Result<LinearityReport> {
    let currents: Vec<f64> = curve.rows.iter().map(|r| r.i_total).collect();
    summarize_levels(&curve.vdac(), &currents)
}
