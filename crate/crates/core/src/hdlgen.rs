//! Verilog and PCF generation for the GPIO DAC.
//!
//! Port names are fixed (`clk`, `code`, `dac_out`); only the module name is
//! configurable. Outputs are registered so that all pins toggle on the same
//! clock edge.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{binary_bit_of_pin, pin_count, Encoding, MAX_BITS};

const VERILOG_KEYWORDS: &[&str] = &[
    "always",
    "and",
    "assign",
    "automatic",
    "begin",
    "buf",
    "case",
    "casex",
    "casez",
    "cell",
    "cmos",
    "config",
    "deassign",
    "default",
    "defparam",
    "design",
    "disable",
    "edge",
    "else",
    "end",
    "endcase",
    "endconfig",
    "endfunction",
    "endgenerate",
    "endmodule",
    "endprimitive",
    "endspecify",
    "endtable",
    "endtask",
    "event",
    "for",
    "force",
    "forever",
    "fork",
    "function",
    "generate",
    "genvar",
    "highz0",
    "highz1",
    "if",
    "ifnone",
    "incdir",
    "include",
    "initial",
    "inout",
    "input",
    "instance",
    "integer",
    "join",
    "large",
    "liblist",
    "library",
    "localparam",
    "macromodule",
    "medium",
    "module",
    "nand",
    "negedge",
    "nmos",
    "nor",
    "noshowcancelled",
    "not",
    "notif0",
    "notif1",
    "or",
    "output",
    "parameter",
    "pmos",
    "posedge",
    "primitive",
    "pull0",
    "pull1",
    "pulldown",
    "pullup",
    "pulsestyle_ondetect",
    "pulsestyle_onevent",
    "rcmos",
    "real",
    "realtime",
    "reg",
    "release",
    "repeat",
    "rnmos",
    "rpmos",
    "rtran",
    "rtranif0",
    "rtranif1",
    "scalared",
    "showcancelled",
    "signed",
    "small",
    "specify",
    "specparam",
    "strong0",
    "strong1",
    "supply0",
    "supply1",
    "table",
    "task",
    "time",
    "tran",
    "tranif0",
    "tranif1",
    "tri",
    "tri0",
    "tri1",
    "triand",
    "trior",
    "trireg",
    "unsigned",
    "use",
    "uwire",
    "vectored",
    "wait",
    "wand",
    "weak0",
    "weak1",
    "while",
    "wire",
    "wor",
    "xnor",
    "xor",
];

/// Package pins used when none are assigned: ball names of a 16x16 BGA,
/// row letters without I and O.
const BALL_ROWS: &[&str] = &[
    "A", "B", "C", "D", "E", "F", "G", "H", "J", "K", "L", "M", "N", "P", "R", "T",
];
pub const DEFAULT_CLOCK_PIN: &str = "R9";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinAssignment {
    pub logical: u32,
    pub package_pin: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdlSpec {
    pub n_bits: u32,
    pub encoding: Encoding,
    pub module_name: String,
    pub clock_hz: u64,
    pub staircase_step_cycles: u64,
    pub pin_assignments: Vec<PinAssignment>,
    pub clock_pin: String,
}

/// Clock cycles per staircase step, at least one.
pub fn step_cycles(clock_hz: u64, step_seconds: f64) -> u64 {
    ((clock_hz as f64 * step_seconds).round() as u64).max(1)
}

pub fn default_pins(n_bits: u32, clock_pin: &str) -> Result<Vec<PinAssignment>> {
    let needed = pin_count(n_bits.min(MAX_BITS)) as usize;
    let pool: Vec<String> = BALL_ROWS
        .iter()
        .flat_map(|r| (1..=16).map(move |c| format!("{r}{c}")))
        .filter(|p| p != clock_pin)
        .collect();
    if needed > pool.len() {
        return Err(Error::Hdl(format!(
            "{needed} pins requested but the default pool has {}",
            pool.len()
        )));
    }
    Ok(pool
        .into_iter()
        .take(needed)
        .enumerate()
        .map(|(j, package_pin)| PinAssignment {
            logical: j as u32,
            package_pin,
        })
        .collect())
}

impl HdlSpec {
    /// Spec on a 100 MHz clock with a 500 µs staircase step and default pins.
    pub fn new(n_bits: u32, encoding: Encoding, module_name: &str) -> Result<Self> {
        let spec = Self {
            n_bits,
            encoding,
            module_name: module_name.to_string(),
            clock_hz: 100_000_000,
            staircase_step_cycles: step_cycles(100_000_000, 500e-6),
            pin_assignments: default_pins(n_bits, DEFAULT_CLOCK_PIN)?,
            clock_pin: DEFAULT_CLOCK_PIN.to_string(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn pin_count(&self) -> u32 {
        pin_count(self.n_bits)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_BITS).contains(&self.n_bits) {
            return Err(Error::Hdl(format!(
                "n_bits must be in 1..={MAX_BITS}, got {}",
                self.n_bits
            )));
        }
        validate_identifier(&self.module_name)?;
        if self.clock_hz == 0 {
            return Err(Error::Hdl("clock_hz must be > 0".into()));
        }
        if self.staircase_step_cycles == 0 {
            return Err(Error::Hdl("staircase_step_cycles must be >= 1".into()));
        }
        let n = self.pin_count() as usize;
        if self.pin_assignments.len() != n {
            return Err(Error::Hdl(format!(
                "{} pin assignments given, {n} required",
                self.pin_assignments.len()
            )));
        }
        let mut logical = vec![false; n];
        let mut package = HashSet::new();
        validate_pin_name(&self.clock_pin)?;
        package.insert(self.clock_pin.as_str());
        for a in &self.pin_assignments {
            let slot = logical.get_mut(a.logical as usize).ok_or_else(|| {
                Error::Hdl(format!("logical pin {} out of range 0..{n}", a.logical))
            })?;
            if std::mem::replace(slot, true) {
                return Err(Error::Hdl(format!(
                    "logical pin {} assigned twice",
                    a.logical
                )));
            }
            validate_pin_name(&a.package_pin)?;
            if !package.insert(a.package_pin.as_str()) {
                return Err(Error::Hdl(format!(
                    "package pin {} used more than once",
                    a.package_pin
                )));
            }
        }
        Ok(())
    }
}

fn validate_identifier(name: &str) -> Result<()> {
    let mut chars = name.chars();
    let head_ok = chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    if !head_ok || !chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$') {
        return Err(Error::Hdl(format!(
            "`{name}` is not a valid module identifier"
        )));
    }
    if VERILOG_KEYWORDS.contains(&name) {
        return Err(Error::Hdl(format!("`{name}` is a reserved word")));
    }
    Ok(())
}

fn validate_pin_name(pin: &str) -> Result<()> {
    if pin.is_empty() || !pin.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(Error::Hdl(format!(
            "`{pin}` is not a valid package pin name"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub logical: u32,
    /// Binary: the code bit driving the pin. Thermometer: the code above which it asserts.
    pub bit_group: u32,
    pub package_pin: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub module: String,
    pub top: String,
    pub n_bits: u32,
    pub encoding: Encoding,
    pub clock_hz: u64,
    pub staircase_step_cycles: u64,
    pub clock_pin: String,
    pub pins: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HdlArtifact {
    pub rtl_text: String,
    pub constraints_text: String,
    pub manifest: Manifest,
}

fn manifest(spec: &HdlSpec, top: &str) -> Manifest {
    Manifest {
        module: spec.module_name.clone(),
        top: top.to_string(),
        n_bits: spec.n_bits,
        encoding: spec.encoding,
        clock_hz: spec.clock_hz,
        staircase_step_cycles: spec.staircase_step_cycles,
        clock_pin: spec.clock_pin.clone(),
        pins: spec
            .pin_assignments
            .iter()
            .map(|a| ManifestEntry {
                logical: a.logical,
                bit_group: match spec.encoding {
                    Encoding::Binary => binary_bit_of_pin(a.logical),
                    Encoding::Thermometer => a.logical,
                },
                package_pin: a.package_pin.clone(),
            })
            .collect(),
    }
}

fn bus(width: u64) -> String {
    if width <= 1 {
        String::new()
    } else {
        format!("[{}:0] ", width - 1)
    }
}

fn dac_module(spec: &HdlSpec) -> String {
    let n = spec.n_bits;
    let pins = spec.pin_count();
    let mut s = String::new();
    let code_bus = bus(n as u64);
    let out_bus = bus(pins as u64);
    let _ = writeln!(s, "module {} (", spec.module_name);
    let _ = writeln!(s, "    input  wire {code_bus}code,");
    let _ = writeln!(s, "    input  wire clk,");
    let _ = writeln!(s, "    output reg  {out_bus}dac_out");
    let _ = writeln!(s, ");");
    s.push('\n');
    let _ = writeln!(s, "    initial dac_out = {pins}'d0;");
    s.push('\n');
    let _ = writeln!(s, "    always @(posedge clk) begin");
    for j in 0..pins {
        let lhs = if pins == 1 {
            "dac_out".to_string()
        } else {
            format!("dac_out[{j}]")
        };
        let rhs = match spec.encoding {
            Encoding::Binary if n == 1 => "code".to_string(),
            Encoding::Binary => format!("code[{}]", binary_bit_of_pin(j)),
            Encoding::Thermometer => format!("(code > {n}'d{j})"),
        };
        let _ = writeln!(s, "        {lhs} <= {rhs};");
    }
    let _ = writeln!(s, "    end");
    s.push('\n');
    let _ = writeln!(s, "endmodule");
    s
}

pub fn generate_dac(spec: &HdlSpec) -> Result<HdlArtifact> {
    spec.validate()?;
    Ok(HdlArtifact {
        rtl_text: dac_module(spec),
        constraints_text: generate_constraints(spec)?,
        manifest: manifest(spec, &spec.module_name),
    })
}

pub fn staircase_top_name(spec: &HdlSpec) -> String {
    format!("{}_staircase", spec.module_name)
}

/// DAC module plus a top level that advances the code by one every
/// `staircase_step_cycles` clocks, wrapping after the last code.
pub fn generate_staircase(spec: &HdlSpec) -> Result<HdlArtifact> {
    spec.validate()?;
    let top = staircase_top_name(spec);
    validate_identifier(&top)?;
    let n = spec.n_bits;
    let pins = spec.pin_count();
    let limit = spec.staircase_step_cycles - 1;
    let div_width = (64 - limit.leading_zeros()).max(1) as u64;

    let mut s = dac_module(spec);
    s.push('\n');
    let _ = writeln!(s, "module {top} (");
    let _ = writeln!(s, "    input  wire clk,");
    let _ = writeln!(s, "    output wire {}dac_out", bus(pins as u64));
    let _ = writeln!(s, ");");
    s.push('\n');
    let _ = writeln!(s, "    localparam STEP_LAST = {div_width}'d{limit};");
    s.push('\n');
    let _ = writeln!(s, "    reg {}divider = {div_width}'d0;", bus(div_width));
    let _ = writeln!(s, "    reg {}code = {n}'d0;", bus(n as u64));
    s.push('\n');
    let _ = writeln!(s, "    always @(posedge clk) begin");
    let _ = writeln!(s, "        if (divider == STEP_LAST) begin");
    let _ = writeln!(s, "            divider <= {div_width}'d0;");
    let _ = writeln!(s, "            code <= code + {n}'d1;");
    let _ = writeln!(s, "        end else begin");
    let _ = writeln!(s, "            divider <= divider + {div_width}'d1;");
    let _ = writeln!(s, "        end");
    let _ = writeln!(s, "    end");
    s.push('\n');
    let _ = writeln!(s, "    {} dac (", spec.module_name);
    let _ = writeln!(s, "        .code(code),");
    let _ = writeln!(s, "        .clk(clk),");
    let _ = writeln!(s, "        .dac_out(dac_out)");
    let _ = writeln!(s, "    );");
    s.push('\n');
    let _ = writeln!(s, "endmodule");

    Ok(HdlArtifact {
        rtl_text: s,
        constraints_text: generate_constraints(spec)?,
        manifest: manifest(spec, &top),
    })
}

/// One `set_io` line per DAC pin in assignment order, then the clock.
pub fn generate_constraints(spec: &HdlSpec) -> Result<String> {
    spec.validate()?;
    let single = spec.pin_count() == 1;
    let mut s = String::new();
    for a in &spec.pin_assignments {
        if single {
            let _ = writeln!(s, "set_io dac_out {}", a.package_pin);
        } else {
            let _ = writeln!(s, "set_io dac_out[{}] {}", a.logical, a.package_pin);
        }
    }
    let _ = writeln!(s, "set_io clk {}", spec.clock_pin);
    Ok(s)
}
