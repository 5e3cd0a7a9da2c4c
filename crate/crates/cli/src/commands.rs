use std::path::Path;

use gpiodac::explorer::{default_rp_grid, sweep_grid, sweep_parallel, to_csv};
use gpiodac::hdlgen::{generate_dac, generate_staircase};
use gpiodac::metrics::{summary, LinearityReport};
use gpiodac::sizing::{
    check_saturation_window, extract_from_rows, extract_parameters, size_four_resistor,
    size_two_resistor, ExtractedParams, SaturationWindow, SizingResult,
};
use gpiodac::transient::{detect_glitches, render_ramped, synthesize_with, Glitch, SkewMode};
use gpiodac::{
    transfer_curve, DacConfig, DevicePair, NodeSolution, OperatingRegion, Topology, TransferCurve,
};
use serde::{Deserialize, Serialize};

use crate::config::{ProjectConfig, SCHEMA_VERSION};
use crate::error::{Category, CliError};
use crate::output::{OutputSet, Provenance};

pub struct Context {
    pub project: ProjectConfig,
    pub digest: String,
    pub out_dir: std::path::PathBuf,
}

impl Context {
    fn outputs(&self) -> Result<OutputSet, CliError> {
        OutputSet::create(&self.out_dir)
    }

    fn provenance(&self, command: &str) -> Provenance {
        Provenance::new(command, &self.digest)
    }
}

/// One line of `transfer.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TransferRow {
    code: u32,
    vdac_v: f64,
    vd_v: f64,
    vs_v: f64,
    itotal_a: f64,
    i_pullup_a: f64,
    i_pulldown_a: f64,
    region_p: OperatingRegion,
    region_n: OperatingRegion,
    kcl_residual_a: f64,
}

impl From<&NodeSolution> for TransferRow {
    fn from(r: &NodeSolution) -> Self {
        Self {
            code: r.code,
            vdac_v: r.vdac,
            vd_v: r.vd,
            vs_v: r.vs,
            itotal_a: r.i_total,
            i_pullup_a: r.i_per_pullup,
            i_pulldown_a: r.i_per_pulldown,
            region_p: r.region_p,
            region_n: r.region_n,
            kcl_residual_a: r.kcl_residual,
        }
    }
}

impl TransferRow {
    fn into_solution(self) -> NodeSolution {
        NodeSolution {
            code: self.code,
            vdac: self.vdac_v,
            vd: self.vd_v,
            vs: self.vs_v,
            i_total: self.itotal_a,
            i_per_pullup: self.i_pullup_a,
            i_per_pulldown: self.i_pulldown_a,
            i_rpp: f64::NAN,
            i_rpn: f64::NAN,
            region_p: self.region_p,
            region_n: self.region_n,
            kcl_residual: self.kcl_residual_a,
        }
    }
}

fn transfer_csv(curve: &TransferCurve) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &curve.rows {
        w.serialize(TransferRow::from(row))
            .map_err(|e| CliError::io(format!("transfer.csv: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| CliError::io(format!("transfer.csv: {e}")))
}

fn read_transfer_csv(path: &Path) -> Result<Vec<NodeSolution>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
    r.deserialize::<TransferRow>()
        .map(|row| {
            row.map(TransferRow::into_solution)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        })
        .collect()
}

const GNUPLOT_SCRIPT: &str = "\
set datafile separator \",\"
set key top left
set xlabel \"code\"
set ylabel \"output (V)\"
set y2label \"supply current (A)\"
set y2tics
plot \"transfer.csv\" using 1:2 skip 1 with linespoints title \"vdac\", \\
     \"transfer.csv\" using 1:5 skip 1 axes x1y2 with lines title \"itotal\"
";

#[derive(Serialize)]
struct WindowSummary {
    codes: Vec<u32>,
    coverage: f64,
}

impl From<&SaturationWindow> for WindowSummary {
    fn from(w: &SaturationWindow) -> Self {
        Self {
            codes: w.codes(),
            coverage: w.coverage(),
        }
    }
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    schema: u32,
    provenance: Provenance,
    config: &'a DacConfig,
    linearity: LinearityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    saturation_window: Option<WindowSummary>,
}

pub fn simulate(ctx: &Context, gnuplot: bool) -> Result<Vec<String>, CliError> {
    let cfg = ctx.project.dac_config()?;
    let curve = transfer_curve(&cfg)?;
    let linearity = summary(&curve)?;
    let window = match cfg.topology {
        Topology::TwoResistor { .. } => None,
        _ => Some(WindowSummary::from(&check_saturation_window(&cfg)?)),
    };
    let report = SimulateReport {
        schema: SCHEMA_VERSION,
        provenance: ctx.provenance("simulate"),
        config: &cfg,
        linearity,
        saturation_window: window,
    };
    let mut out = ctx.outputs()?;
    out.write("transfer.csv", &transfer_csv(&curve)?)?;
    out.write_json("report.json", &report)?;
    if gnuplot {
        out.write("transfer.gp", GNUPLOT_SCRIPT.as_bytes())?;
    }
    out.finish(ctx.provenance("simulate"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeKind {
    TwoResistor,
    FourResistor,
}

#[derive(Debug, Clone, Default)]
pub struct SizeInputs {
    pub vth: Option<f64>,
    pub ron: Option<f64>,
    pub curve: Option<std::path::PathBuf>,
}

#[derive(Serialize)]
struct SizeReport {
    schema: u32,
    provenance: Provenance,
    /// Where the device parameters came from: `arguments`, `curve` or `simulated`.
    parameter_source: &'static str,
    extracted: ExtractedParams,
    sizing: SizingResult,
    rp_ohm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rs_total_ohm: Option<f64>,
    /// Model prediction for the sized network.
    linearity: LinearityReport,
}

pub fn size(ctx: &Context, kind: SizeKind, inputs: &SizeInputs) -> Result<Vec<String>, CliError> {
    let base = ctx.project.dac_config()?;
    let vdd = base.vdd;
    let (source, params, devices) = match (inputs.vth, inputs.ron, &inputs.curve) {
        (Some(vth), Some(ron), None) => {
            let p =
                ExtractedParams::new(vth, ron, vdd).map_err(|e| CliError::config(e.to_string()))?;
            ("arguments", p, None)
        }
        (None, None, Some(path)) => (
            "curve",
            extract_from_rows(&read_transfer_csv(path)?, vdd)?,
            None,
        ),
        (None, None, None) => {
            let standalone = base.with_topology(Topology::Standalone)?;
            let p = extract_parameters(&transfer_curve(&standalone)?)?;
            ("simulated", p, Some(base.devices))
        }
        _ => {
            return Err(CliError::config(
                "size: give both --vth and --ron, or --curve, or neither",
            ))
        }
    };
    let command = match kind {
        SizeKind::TwoResistor => "size two-resistor",
        SizeKind::FourResistor => "size four-resistor",
    };
    let sizing = match kind {
        SizeKind::TwoResistor => size_two_resistor(&params, base.d_max())?,
        SizeKind::FourResistor => size_four_resistor(&params, &ctx.project.sizing.request())?,
    };
    let devices = match devices {
        Some(d) => d,
        None => DevicePair::calibrated(params.vth, params.ron, vdd)?,
    };
    let sized = DacConfig::new(base.n_bits, vdd, devices, sizing.topology, base.encoding)?;
    let linearity = summary(&transfer_curve(&sized)?)?;
    let rp_ohm = sizing
        .topology
        .parallel()
        .map(|(p, _)| p)
        .unwrap_or(f64::NAN);
    let report = SizeReport {
        schema: SCHEMA_VERSION,
        provenance: ctx.provenance(command),
        parameter_source: source,
        extracted: params,
        rs_total_ohm: sizing.rs_total,
        sizing,
        rp_ohm,
        linearity,
    };
    let mut out = ctx.outputs()?;
    out.write_json("report.json", &report)?;
    out.finish(ctx.provenance(command))
}

#[derive(Serialize)]
struct ExtractReport {
    schema: u32,
    provenance: Provenance,
    source: String,
    params: ExtractedParams,
}

pub fn extract(ctx: &Context, curve: &Path, vdd: Option<f64>) -> Result<Vec<String>, CliError> {
    let vdd = vdd.unwrap_or(ctx.project.dac.vdd);
    let rows = read_transfer_csv(curve)?;
    let params = extract_from_rows(&rows, vdd)?;
    let report = ExtractReport {
        schema: SCHEMA_VERSION,
        provenance: ctx.provenance("extract"),
        source: curve
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        params,
    };
    let mut out = ctx.outputs()?;
    out.write_json("extract.json", &report)?;
    out.finish(ctx.provenance("extract"))
}

pub fn sweep(ctx: &Context) -> Result<Vec<String>, CliError> {
    let base = ctx.project.dac_config()?;
    let rp = ctx.project.sweep.rp.clone().unwrap_or_else(default_rp_grid);
    let points = match &ctx.project.sweep.rs {
        Some(rs) => sweep_grid(&base, &rp, rs)?,
        None => sweep_parallel(&base, &rp)?,
    };
    let mut out = ctx.outputs()?;
    out.write("sweep.csv", to_csv(&points).as_bytes())?;
    out.finish(ctx.provenance("sweep"))
}

#[derive(Serialize)]
struct GlitchReport {
    schema: u32,
    provenance: Provenance,
    encoding: gpiodac::Encoding,
    skew_mode: SkewMode,
    lsb_ref_v: f64,
    band_lsb: f64,
    glitches: Vec<Glitch>,
}

pub fn transient(
    ctx: &Context,
    seed: Option<u64>,
    ramp_step: Option<f64>,
) -> Result<Vec<String>, CliError> {
    let cfg = ctx.project.dac_config()?;
    let section = &ctx.project.transient;
    let mode = match seed {
        Some(seed) => SkewMode::Random { seed },
        None => section.skew_mode(),
    };
    let timing = section.timing();
    let wave = synthesize_with(&cfg, &section.codes(cfg.d_max()), &timing, mode)?;
    let glitches = detect_glitches(&wave, section.band_lsb);
    let report = GlitchReport {
        schema: SCHEMA_VERSION,
        provenance: ctx.provenance("transient"),
        encoding: cfg.encoding,
        skew_mode: mode,
        lsb_ref_v: wave.lsb_ref,
        band_lsb: section.band_lsb,
        glitches,
    };
    let mut out = ctx.outputs()?;
    out.write("waveform.csv", wave.to_csv().as_bytes())?;
    if let Some(dt) = ramp_step {
        let mut text = String::from("time_s,volts\n");
        for (t, v) in render_ramped(&wave, &timing, dt)? {
            text.push_str(&format!("{t:e},{v}\n"));
        }
        out.write("waveform_ramped.csv", text.as_bytes())?;
    }
    out.write_json("glitches.json", &report)?;
    out.finish(ctx.provenance("transient"))
}

pub fn hdl(ctx: &Context, staircase: bool) -> Result<Vec<String>, CliError> {
    let spec = ctx.project.hdl_spec()?;
    let artifact = if staircase || ctx.project.hdl.staircase {
        generate_staircase(&spec)?
    } else {
        generate_dac(&spec)?
    };
    let stem = &spec.module_name;
    let mut out = ctx.outputs()?;
    out.write(&format!("{stem}.v"), artifact.rtl_text.as_bytes())?;
    out.write(&format!("{stem}.pcf"), artifact.constraints_text.as_bytes())?;
    out.write(
        &format!("{stem}.json"),
        artifact.manifest.to_json().as_bytes(),
    )?;
    out.finish(ctx.provenance("hdl"))
}

/// Loads the project file (or the built-in defaults) and applies overrides.
pub fn load_project(path: Option<&Path>, overrides: &[String]) -> Result<ProjectConfig, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CliError::new(Category::Io, format!("reading {}: {e}", p.display())))?,
        None => format!("schema = {SCHEMA_VERSION}\n"),
    };
    ProjectConfig::parse(&text, overrides)
}
