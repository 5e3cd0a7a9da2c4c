//! First-order (square-law) MOSFET model of a GPIO output stage.
//!
//! All voltages handed to the public functions are magnitudes: for an NMOS
//! `vgs_mag = vgs`, `vds_mag = vds`; for a PMOS `vgs_mag = vsg`,
//! `vds_mag = vsd`. Channel-length modulation, body effect and weak
//! inversion are not modeled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Nmos,
    Pmos,
}

/// Threshold and transconductance of one unit transistor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosfetParams {
    pub polarity: Polarity,
    /// Threshold voltage magnitude, volts.
    pub vth: f64,
    /// Transconductance parameter `mu * Cox * W / L`, A/V^2.
    pub k: f64,
}

impl MosfetParams {
    pub fn new(polarity: Polarity, vth: f64, k: f64) -> Result<Self> {
        let p = Self { polarity, vth, k };
        p.validate()?;
        Ok(p)
    }

    /// Picks `k` so that a unit biased at `vgs = vdd`, `vds = vdd / 2` shows a
    /// secant resistance `vds / I` of `ron`.
    ///
    /// This is the resistance a bench measurement of one GPIO's current at
    /// the middle of the code range reports.
    pub fn from_midrange_resistance(
        polarity: Polarity,
        vth: f64,
        ron: f64,
        vdd: f64,
    ) -> Result<Self> {
        if !(ron > 0.0) || !(vdd > 0.0) {
            return Err(Error::Domain(format!(
                "ron ({ron}) and vdd ({vdd}) must be positive"
            )));
        }
        if !(vth > 0.0 && vth < vdd / 2.0) {
            return Err(Error::Domain(format!(
                "vth = {vth} V must lie in (0, vdd/2) for a triode mid-range"
            )));
        }
        let k = 1.0 / (ron * (vdd - vth - vdd / 4.0));
        Self::new(polarity, vth, k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vth > 0.0) || !self.vth.is_finite() {
            return Err(Error::Domain(format!("vth must be > 0, got {}", self.vth)));
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::Domain(format!("k must be > 0, got {}", self.k)));
        }
        Ok(())
    }

    fn overdrive(&self, vgs_mag: f64) -> f64 {
        vgs_mag - self.vth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatingRegion {
    Cutoff,
    Triode,
    Saturation,
}

impl OperatingRegion {
    pub fn as_str(self) -> &'static str {
        match self {
            OperatingRegion::Cutoff => "cutoff",
            OperatingRegion::Triode => "triode",
            OperatingRegion::Saturation => "saturation",
        }
    }
}

impl std::str::FromStr for OperatingRegion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cutoff" => Ok(OperatingRegion::Cutoff),
            "triode" => Ok(OperatingRegion::Triode),
            "saturation" => Ok(OperatingRegion::Saturation),
            other => Err(Error::Domain(format!("unknown operating region `{other}`"))),
        }
    }
}

impl std::fmt::Display for OperatingRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_bias(vgs_mag: f64, vds_mag: f64) -> Result<()> {
    if !(vgs_mag >= 0.0) || !(vds_mag >= 0.0) {
        return Err(Error::Domain(format!(
            "bias magnitudes must be >= 0 (vgs = {vgs_mag}, vds = {vds_mag})"
        )));
    }
    Ok(())
}

// Forward-biased square law, no domain checks.
fn square_law(p: &MosfetParams, vgs_mag: f64, vds_mag: f64) -> f64 {
    let vov = p.overdrive(vgs_mag);
    if vov <= 0.0 {
        0.0
    } else if vds_mag < vov {
        p.k * (vov * vds_mag - 0.5 * vds_mag * vds_mag)
    } else {
        0.5 * p.k * vov * vov
    }
}

/// Drain current magnitude of one unit transistor.
pub fn drain_current(p: &MosfetParams, vgs_mag: f64, vds_mag: f64) -> Result<f64> {
    check_bias(vgs_mag, vds_mag)?;
    Ok(square_law(p, vgs_mag, vds_mag))
}

/// Region at a bias point. The triode/saturation boundary belongs to saturation.
pub fn classify_region(p: &MosfetParams, vgs_mag: f64, vds_mag: f64) -> Result<OperatingRegion> {
    check_bias(vgs_mag, vds_mag)?;
    Ok(region_unchecked(p, vgs_mag, vds_mag))
}

fn region_unchecked(p: &MosfetParams, vgs_mag: f64, vds_mag: f64) -> OperatingRegion {
    if vgs_mag < p.vth {
        OperatingRegion::Cutoff
    } else if vds_mag >= vgs_mag - p.vth {
        OperatingRegion::Saturation
    } else {
        OperatingRegion::Triode
    }
}

/// Small-signal triode resistance at `vds -> 0`: `1 / (k * (vgs - vth))`.
pub fn on_resistance(p: &MosfetParams, vgs_mag: f64) -> Result<f64> {
    if !vgs_mag.is_finite() || vgs_mag <= p.vth {
        return Err(Error::NoConduction {
            vgs: vgs_mag,
            vth: p.vth,
        });
    }
    Ok(1.0 / (p.k * p.overdrive(vgs_mag)))
}

/// Large-signal resistance `vds / I` at a bias point.
pub fn secant_resistance(p: &MosfetParams, vgs_mag: f64, vds_mag: f64) -> Result<f64> {
    check_bias(vgs_mag, vds_mag)?;
    if vgs_mag <= p.vth {
        return Err(Error::NoConduction {
            vgs: vgs_mag,
            vth: p.vth,
        });
    }
    if vds_mag == 0.0 {
        return on_resistance(p, vgs_mag);
    }
    Ok(vds_mag / square_law(p, vgs_mag, vds_mag))
}

/// Channel current and its partial derivatives at a (signed) bias point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPoint {
    pub current: f64,
    pub d_vgs: f64,
    pub d_vds: f64,
}

impl ChannelPoint {
    const OFF: ChannelPoint = ChannelPoint {
        current: 0.0,
        d_vgs: 0.0,
        d_vds: 0.0,
    };

    pub fn scaled(self, units: f64) -> ChannelPoint {
        ChannelPoint {
            current: self.current * units,
            d_vgs: self.d_vgs * units,
            d_vds: self.d_vds * units,
        }
    }
}

/// Behavior of one DAC unit cell's transistor.
///
/// `SquareLaw` is the first-order model; `Ohmic` is a fixed conductance
/// switch, the idealization behind the resistor-divider formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Device {
    SquareLaw(MosfetParams),
    Ohmic { conductance: f64 },
}

impl Device {
    pub fn validate(&self) -> Result<()> {
        match self {
            Device::SquareLaw(p) => p.validate(),
            Device::Ohmic { conductance } => {
                if *conductance > 0.0 && conductance.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Domain(format!(
                        "conductance must be > 0, got {conductance}"
                    )))
                }
            }
        }
    }

    /// `|vth|` for square-law devices, 0 for ohmic switches.
    pub fn vth(&self) -> f64 {
        match self {
            Device::SquareLaw(p) => p.vth,
            Device::Ohmic { .. } => 0.0,
        }
    }

    pub fn mosfet(&self) -> Option<&MosfetParams> {
        match self {
            Device::SquareLaw(p) => Some(p),
            Device::Ohmic { .. } => None,
        }
    }

    /// Evaluates the channel with `vds` of either sign.
    ///
    /// A reverse-biased square-law channel swaps source and drain, so the
    /// effective gate drive becomes `vgs - vds`. The extension is continuous
    /// and keeps Newton iterates meaningful outside the physical ordering of
    /// the node voltages.
    pub fn channel(&self, vgs: f64, vds: f64) -> ChannelPoint {
        match self {
            Device::Ohmic { conductance } => {
                if vgs > 0.0 {
                    ChannelPoint {
                        current: conductance * vds,
                        d_vgs: 0.0,
                        d_vds: *conductance,
                    }
                } else {
                    ChannelPoint::OFF
                }
            }
            Device::SquareLaw(p) => {
                if vds >= 0.0 {
                    forward_point(p, vgs, vds)
                } else {
                    let f = forward_point(p, vgs - vds, -vds);
                    ChannelPoint {
                        current: -f.current,
                        d_vgs: -f.d_vgs,
                        d_vds: f.d_vgs + f.d_vds,
                    }
                }
            }
        }
    }

    /// Region reported for a unit at the given (magnitude) bias.
    pub fn region(&self, vgs_mag: f64, vds_mag: f64) -> OperatingRegion {
        match self {
            Device::Ohmic { .. } => {
                if vgs_mag > 0.0 {
                    OperatingRegion::Triode
                } else {
                    OperatingRegion::Cutoff
                }
            }
            Device::SquareLaw(p) => region_unchecked(p, vgs_mag.max(0.0), vds_mag.max(0.0)),
        }
    }
}

fn forward_point(p: &MosfetParams, vgs: f64, vds: f64) -> ChannelPoint {
    let vov = p.overdrive(vgs);
    if vov <= 0.0 {
        ChannelPoint::OFF
    } else if vds < vov {
        ChannelPoint {
            current: p.k * (vov * vds - 0.5 * vds * vds),
            d_vgs: p.k * vds,
            d_vds: p.k * (vov - vds),
        }
    } else {
        ChannelPoint {
            current: 0.5 * p.k * vov * vov,
            d_vgs: p.k * vov,
            d_vds: 0.0,
        }
    }
}

/// Pull-up and pull-down unit devices of the GPIO output stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevicePair {
    pub pmos: Device,
    pub nmos: Device,
}

impl DevicePair {
    pub fn new(pmos: Device, nmos: Device) -> Result<Self> {
        let pair = Self { pmos, nmos };
        pair.validate()?;
        Ok(pair)
    }

    /// Identical square-law pull-up and pull-down.
    pub fn symmetric(vth: f64, k: f64) -> Result<Self> {
        Self::new(
            Device::SquareLaw(MosfetParams::new(Polarity::Pmos, vth, k)?),
            Device::SquareLaw(MosfetParams::new(Polarity::Nmos, vth, k)?),
        )
    }

    /// Symmetric pair calibrated by its mid-range secant resistance.
    pub fn calibrated(vth: f64, ron_midrange: f64, vdd: f64) -> Result<Self> {
        Self::new(
            Device::SquareLaw(MosfetParams::from_midrange_resistance(
                Polarity::Pmos,
                vth,
                ron_midrange,
                vdd,
            )?),
            Device::SquareLaw(MosfetParams::from_midrange_resistance(
                Polarity::Nmos,
                vth,
                ron_midrange,
                vdd,
            )?),
        )
    }

    /// Constant-conductance switches.
    pub fn ohmic(gop: f64, gon: f64) -> Result<Self> {
        Self::new(
            Device::Ohmic { conductance: gop },
            Device::Ohmic { conductance: gon },
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.pmos.validate()?;
        self.nmos.validate()?;
        if let Device::SquareLaw(p) = &self.pmos {
            if p.polarity != Polarity::Pmos {
                return Err(Error::Domain("pull-up device must be PMOS".into()));
            }
        }
        if let Device::SquareLaw(n) = &self.nmos {
            if n.polarity != Polarity::Nmos {
                return Err(Error::Domain("pull-down device must be NMOS".into()));
            }
        }
        Ok(())
    }

    /// True when both devices carry the same parameters.
    pub fn is_symmetric(&self) -> bool {
        fn close(a: f64, b: f64) -> bool {
            (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
        }
        match (&self.pmos, &self.nmos) {
            (Device::SquareLaw(p), Device::SquareLaw(n)) => close(p.vth, n.vth) && close(p.k, n.k),
            (Device::Ohmic { conductance: gp }, Device::Ohmic { conductance: gn }) => {
                close(*gp, *gn)
            }
            _ => false,
        }
    }
}
