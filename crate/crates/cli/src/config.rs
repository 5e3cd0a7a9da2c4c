//! Project configuration file: parsing, `--set` overrides, resolution into
//! library types, and the canonical digest.

use std::path::PathBuf;

use gpiodac::hdlgen::{default_pins, step_cycles, HdlSpec, PinAssignment};
use gpiodac::sizing::FourResistorRequest;
use gpiodac::transient::{SkewMode, TimingParams};
use gpiodac::{
    DacConfig, Device, DevicePair, Encoding, MosfetParams, ParallelAttach, Polarity, Topology,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub dac: DacSection,
    #[serde(default)]
    pub transient: TransientSection,
    #[serde(default)]
    pub hdl: HdlSection,
    #[serde(default)]
    pub sizing: SizingSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            output_dir: None,
            dac: DacSection::default(),
            transient: TransientSection::default(),
            hdl: HdlSection::default(),
            sizing: SizingSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DacSection {
    pub n_bits: u32,
    /// Volts.
    pub vdd: f64,
    pub encoding: Encoding,
    /// Same parameters for both polarities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub device: Option<DeviceSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pmos: Option<DeviceSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmos: Option<DeviceSpec>,
    pub topology: TopologySpec,
}

impl Default for DacSection {
    fn default() -> Self {
        Self {
            n_bits: 4,
            vdd: 3.3,
            encoding: Encoding::Binary,
            device: None,
            pmos: None,
            nmos: None,
            topology: TopologySpec::default(),
        }
    }
}

/// A unit transistor: `vth` with exactly one of `k` (A/V^2) or `ron_mid`
/// (ohms, mid-range secant), or a fixed `conductance` (siemens) alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ron_mid: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conductance: Option<f64>,
}

impl DeviceSpec {
    fn resolve(&self, polarity: Polarity, vdd: f64, key: &str) -> Result<Device, CliError> {
        let bad = |msg: String| CliError::config(format!("{key}: {msg}"));
        match (self.vth, self.k, self.ron_mid, self.conductance) {
            (None, None, None, Some(g)) => Ok(Device::Ohmic { conductance: g }),
            (Some(_), _, _, Some(_)) | (_, Some(_), _, Some(_)) | (_, _, Some(_), Some(_)) => Err(
                bad("`conductance` cannot be combined with `vth`, `k` or `ron_mid`".into()),
            ),
            (Some(vth), Some(k), None, None) => MosfetParams::new(polarity, vth, k)
                .map(Device::SquareLaw)
                .map_err(|e| bad(e.to_string())),
            (Some(vth), None, Some(ron), None) => {
                MosfetParams::from_midrange_resistance(polarity, vth, ron, vdd)
                    .map(Device::SquareLaw)
                    .map_err(|e| bad(e.to_string()))
            }
            (Some(_), Some(_), Some(_), None) => Err(bad("give `k` or `ron_mid`, not both".into())),
            (Some(_), None, None, None) => Err(bad("missing `k` or `ron_mid`".into())),
            (None, _, _, None) => Err(bad("missing `vth`".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    #[default]
    Standalone,
    TwoResistor,
    FourResistor,
}

/// Resistances in ohms. `rp` sets both parallel resistors at once.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    #[serde(default)]
    pub kind: TopologyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpn: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rsp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rsn: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallel_attach: Option<ParallelAttach>,
}

impl TopologySpec {
    pub fn resolve(&self) -> Result<Topology, CliError> {
        let err = |m: &str| CliError::config(format!("dac.topology: {m}"));
        let parallel = || -> Result<(f64, f64), CliError> {
            match (self.rp, self.rpp, self.rpn) {
                (Some(rp), None, None) => Ok((rp, rp)),
                (None, Some(p), Some(n)) => Ok((p, n)),
                (Some(_), _, _) => Err(err("give `rp` or `rpp`/`rpn`, not both")),
                _ => Err(err("needs `rp` or both `rpp` and `rpn`")),
            }
        };
        let topology = match self.kind {
            TopologyKind::Standalone => {
                if self.rp.is_some()
                    || self.rpp.is_some()
                    || self.rpn.is_some()
                    || self.rsp.is_some()
                    || self.rsn.is_some()
                    || self.parallel_attach.is_some()
                {
                    return Err(err("standalone takes no resistors"));
                }
                Topology::Standalone
            }
            TopologyKind::TwoResistor => {
                if self.rsp.is_some() || self.rsn.is_some() || self.parallel_attach.is_some() {
                    return Err(err("two-resistor takes only `rp` or `rpp`/`rpn`"));
                }
                let (rpp, rpn) = parallel()?;
                Topology::TwoResistor { rpp, rpn }
            }
            TopologyKind::FourResistor => {
                let (rpp, rpn) = parallel()?;
                Topology::FourResistor {
                    rsp: self.rsp.ok_or_else(|| err("four-resistor needs `rsp`"))?,
                    rsn: self.rsn.ok_or_else(|| err("four-resistor needs `rsn`"))?,
                    rpp,
                    rpn,
                    parallel_attach: self.parallel_attach.unwrap_or_default(),
                }
            }
        };
        topology
            .validate()
            .map_err(|e| CliError::config(format!("dac.topology: {e}")))?;
        Ok(topology)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SkewModeSpec {
    #[default]
    Deterministic,
    Random,
}

/// Times in seconds, capacitance in farads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransientSection {
    pub t_rise: f64,
    pub t_fall: f64,
    pub skew_max: f64,
    pub sample_period: f64,
    pub load_capacitance: f64,
    pub skew_mode: SkewModeSpec,
    pub seed: u64,
    /// Glitch threshold in LSB.
    pub band_lsb: f64,
    /// Code sequence; two passes of the full staircase when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codes: Option<Vec<u32>>,
}

impl Default for TransientSection {
    fn default() -> Self {
        let t = TimingParams::default();
        Self {
            t_rise: t.t_rise,
            t_fall: t.t_fall,
            skew_max: t.skew_max,
            sample_period: t.sample_period,
            load_capacitance: t.load_capacitance,
            skew_mode: SkewModeSpec::Deterministic,
            seed: 0,
            band_lsb: 1.0,
            codes: None,
        }
    }
}

impl TransientSection {
    pub fn timing(&self) -> TimingParams {
        TimingParams {
            t_rise: self.t_rise,
            t_fall: self.t_fall,
            skew_max: self.skew_max,
            sample_period: self.sample_period,
            load_capacitance: self.load_capacitance,
        }
    }

    pub fn skew_mode(&self) -> SkewMode {
        match self.skew_mode {
            SkewModeSpec::Deterministic => SkewMode::Deterministic,
            SkewModeSpec::Random => SkewMode::Random { seed: self.seed },
        }
    }

    pub fn codes(&self, d_max: u32) -> Vec<u32> {
        self.codes
            .clone()
            .unwrap_or_else(|| (0..=d_max).chain(0..=d_max).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HdlSection {
    pub module_name: String,
    pub clock_hz: u64,
    /// Staircase step length in seconds; ignored when `staircase_step_cycles` is set.
    pub step_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub staircase_step_cycles: Option<u64>,
    pub clock_pin: String,
    /// Package pin for each logical output, in logical order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pins: Option<Vec<String>>,
    /// Emit the staircase pattern generator as the top level.
    pub staircase: bool,
}

impl Default for HdlSection {
    fn default() -> Self {
        Self {
            module_name: "gpio_dac".into(),
            clock_hz: 100_000_000,
            step_seconds: 500e-6,
            staircase_step_cycles: None,
            clock_pin: gpiodac::hdlgen::DEFAULT_CLOCK_PIN.into(),
            pins: None,
            staircase: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizingSection {
    /// Amperes.
    pub it_target: f64,
    /// Share of the series resistance on the supply side.
    pub split: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rs_total: Option<f64>,
}

impl Default for SizingSection {
    fn default() -> Self {
        Self {
            it_target: 0.2,
            split: 1.0,
            rs_total: None,
        }
    }
}

impl SizingSection {
    pub fn request(&self) -> FourResistorRequest {
        FourResistorRequest {
            it_target: self.it_target,
            split: self.split,
            rs_total: self.rs_total,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Parallel resistances, ohms; 5..10 in 0.5 steps when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rp: Option<Vec<f64>>,
    /// Series totals, ohms; when present the sweep covers the full grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rs: Option<Vec<f64>>,
}

impl ProjectConfig {
    /// Parses a document and applies `key=value` overrides on dotted paths.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let config: ProjectConfig = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| CliError::config(one_line(&e.to_string())))?
        } else {
            let mut doc: toml::Table =
                toml::from_str(text).map_err(|e| CliError::config(one_line(&e.to_string())))?;
            for o in overrides {
                apply_override(&mut doc, o)?;
            }
            let rendered = toml::to_string(&doc).map_err(|e| CliError::config(e.to_string()))?;
            toml::from_str(&rendered).map_err(|e| {
                CliError::config(format!(
                    "after --set overrides: {}",
                    one_line(&e.to_string())
                ))
            })?
        };
        if config.schema != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "schema: unsupported version {} (expected {SCHEMA_VERSION})",
                config.schema
            )));
        }
        Ok(config)
    }

    pub fn dac_config(&self) -> Result<DacConfig, CliError> {
        let d = &self.dac;
        let devices = match (&d.device, &d.pmos, &d.nmos) {
            (None, None, None) => DevicePair::calibrated(1.15, 40.0, d.vdd)
                .map_err(|e| CliError::config(format!("dac: {e}")))?,
            (Some(dev), None, None) => DevicePair::new(
                dev.resolve(Polarity::Pmos, d.vdd, "dac.device")?,
                dev.resolve(Polarity::Nmos, d.vdd, "dac.device")?,
            )
            .map_err(|e| CliError::config(format!("dac.device: {e}")))?,
            (None, Some(p), Some(n)) => DevicePair::new(
                p.resolve(Polarity::Pmos, d.vdd, "dac.pmos")?,
                n.resolve(Polarity::Nmos, d.vdd, "dac.nmos")?,
            )
            .map_err(|e| CliError::config(format!("dac: {e}")))?,
            (Some(_), _, _) => {
                return Err(CliError::config(
                    "dac: give either `device` or `pmos`/`nmos`, not both",
                ))
            }
            _ => {
                return Err(CliError::config(
                    "dac: `pmos` and `nmos` must be given together",
                ))
            }
        };
        DacConfig::new(d.n_bits, d.vdd, devices, d.topology.resolve()?, d.encoding)
            .map_err(|e| CliError::config(format!("dac: {e}")))
    }

    pub fn hdl_spec(&self) -> Result<HdlSpec, CliError> {
        let h = &self.hdl;
        let cycles = h
            .staircase_step_cycles
            .unwrap_or_else(|| step_cycles(h.clock_hz, h.step_seconds));
        let pin_assignments = match &h.pins {
            Some(pins) => pins
                .iter()
                .enumerate()
                .map(|(j, p)| PinAssignment {
                    logical: j as u32,
                    package_pin: p.clone(),
                })
                .collect(),
            None => default_pins(self.dac.n_bits, &h.clock_pin)
                .map_err(|e| CliError::config(format!("hdl: {e}")))?,
        };
        let spec = HdlSpec {
            n_bits: self.dac.n_bits,
            encoding: self.dac.encoding,
            module_name: h.module_name.clone(),
            clock_hz: h.clock_hz,
            staircase_step_cycles: cycles,
            pin_assignments,
            clock_pin: h.clock_pin.clone(),
        };
        spec.validate()
            .map_err(|e| CliError::config(format!("hdl: {e}")))?;
        Ok(spec)
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("--set `{spec}`: expected key=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("--set `{spec}`: malformed key")));
    }
    let value = parse_value(raw.trim());
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("--set `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

// A TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrapper {
        v: toml::Value,
    }
    toml::from_str::<Wrapper>(&format!("v = {raw}"))
        .map(|w| w.v)
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}
