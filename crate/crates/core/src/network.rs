//! DC operating point of the shorted-GPIO DAC network.
//!
//! `code` pull-up units (PMOS, source at `vd`) and `d_max - code` pull-down
//! units (NMOS, source at `vs`) drive the shared output node `vdac`. Gates
//! swing between the inner rails, so every active unit sees a gate drive of
//! `vd - vs`. Identical units biased at the same point are aggregated into
//! one device carrying `count` times the unit current.
//!
//! ```text
//!   VDD ─[rsp]─ vd ──┬── code x PMOS ──┐
//!                    └───── rpp ───────┤
//!                                     vdac
//!                    ┌───── rpn ───────┤
//!   GND ─[rsn]─ vs ──┴─ (d_max-code) x NMOS
//! ```
//!
//! Standalone: `rsp = rsn = 0`, no parallel resistors. Two-resistor: parallel
//! resistors to the supply rails. Four-resistor: series resistors plus
//! parallel resistors on either the inner or the supply rails.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{ChannelPoint, DevicePair, OperatingRegion};
use crate::error::{Error, Result};

pub const MAX_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParallelAttach {
    /// `rpp` from VDD to `vdac`, `rpn` from `vdac` to GND.
    SupplyRails,
    /// `rpp` from `vd` to `vdac`, `rpn` from `vdac` to `vs`.
    #[default]
    InnerRails,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Topology {
    Standalone,
    TwoResistor {
        rpp: f64,
        rpn: f64,
    },
    FourResistor {
        rsp: f64,
        rsn: f64,
        rpp: f64,
        rpn: f64,
        #[serde(default)]
        parallel_attach: ParallelAttach,
    },
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be > 0 ohm, got {v}")))
            }
        }
        match *self {
            Topology::Standalone => Ok(()),
            Topology::TwoResistor { rpp, rpn } => {
                positive("rpp", rpp)?;
                positive("rpn", rpn)
            }
            Topology::FourResistor {
                rsp, rsn, rpp, rpn, ..
            } => {
                for (name, v) in [("rsp", rsp), ("rsn", rsn)] {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(Error::Domain(format!("{name} must be >= 0 ohm, got {v}")));
                    }
                }
                positive("rpp", rpp)?;
                positive("rpn", rpn)
            }
        }
    }

    /// Parallel resistor pair, if any.
    pub fn parallel(&self) -> Option<(f64, f64)> {
        match *self {
            Topology::Standalone => None,
            Topology::TwoResistor { rpp, rpn } | Topology::FourResistor { rpp, rpn, .. } => {
                Some((rpp, rpn))
            }
        }
    }

    /// Series resistor pair; zero for topologies without them.
    pub fn series(&self) -> (f64, f64) {
        match *self {
            Topology::FourResistor { rsp, rsn, .. } => (rsp, rsn),
            _ => (0.0, 0.0),
        }
    }

    /// Same topology with both parallel resistors replaced.
    pub fn with_parallel(&self, rp: f64) -> Result<Topology> {
        match *self {
            Topology::Standalone => Err(Error::Precondition(
                "standalone topology has no parallel resistors".into(),
            )),
            Topology::TwoResistor { .. } => Ok(Topology::TwoResistor { rpp: rp, rpn: rp }),
            Topology::FourResistor {
                rsp,
                rsn,
                parallel_attach,
                ..
            } => Ok(Topology::FourResistor {
                rsp,
                rsn,
                rpp: rp,
                rpn: rp,
                parallel_attach,
            }),
        }
    }

    /// Mirror-symmetric about `vdd / 2` (equal parallel and equal series arms).
    pub fn is_mirror_symmetric(&self) -> bool {
        let (rsp, rsn) = self.series();
        let parallel_ok = self.parallel().is_none_or(|(a, b)| a == b);
        parallel_ok && rsp == rsn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Binary,
    Thermometer,
}

impl Encoding {
    /// Whether unit pin `pin` is driven high for `code`.
    ///
    /// Binary: bit `i` owns pins `2^i - 1 .. 2^(i+1) - 1`. Thermometer: pin
    /// `j` is high iff `j < code`. Both assert exactly `code` pins.
    pub fn is_asserted(self, pin: u32, code: u32) -> bool {
        match self {
            Encoding::Binary => (code >> binary_bit_of_pin(pin)) & 1 == 1,
            Encoding::Thermometer => pin < code,
        }
    }

    pub fn pin_states(self, n_bits: u32, code: u32) -> Vec<bool> {
        (0..pin_count(n_bits))
            .map(|p| self.is_asserted(p, code))
            .collect()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::Binary => "binary",
            Encoding::Thermometer => "thermometer",
        }
    }
}

/// Code bit that drives unit pin `pin` in the binary-weighted mapping.
pub fn binary_bit_of_pin(pin: u32) -> u32 {
    31 - (pin + 1).leading_zeros()
}

/// Number of shorted unit pins, `2^n_bits - 1`.
pub fn pin_count(n_bits: u32) -> u32 {
    (1u32 << n_bits) - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DacConfig {
    pub n_bits: u32,
    pub vdd: f64,
    pub devices: DevicePair,
    pub topology: Topology,
    pub encoding: Encoding,
}

impl DacConfig {
    pub fn new(
        n_bits: u32,
        vdd: f64,
        devices: DevicePair,
        topology: Topology,
        encoding: Encoding,
    ) -> Result<Self> {
        let c = Self {
            n_bits,
            vdd,
            devices,
            topology,
            encoding,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bits < 1 || self.n_bits > MAX_BITS {
            return Err(Error::Domain(format!(
                "n_bits must be in 1..={MAX_BITS}, got {}",
                self.n_bits
            )));
        }
        if !(self.vdd > 0.0) || !self.vdd.is_finite() {
            return Err(Error::Domain(format!("vdd must be > 0, got {}", self.vdd)));
        }
        self.devices.validate()?;
        for (name, d) in [("pmos", &self.devices.pmos), ("nmos", &self.devices.nmos)] {
            if d.vth() >= self.vdd {
                return Err(Error::Domain(format!(
                    "{name} vth = {} V never conducts from a {} V supply",
                    d.vth(),
                    self.vdd
                )));
            }
        }
        self.topology.validate()
    }

    pub fn d_max(&self) -> u32 {
        pin_count(self.n_bits)
    }

    pub fn with_topology(&self, topology: Topology) -> Result<Self> {
        let mut c = *self;
        c.topology = topology;
        c.validate()?;
        Ok(c)
    }
}

/// DC operating point for one input code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSolution {
    pub code: u32,
    pub vdac: f64,
    pub vd: f64,
    pub vs: f64,
    /// Current drawn from VDD.
    pub i_total: f64,
    /// Current of one pull-up unit at the solved bias (source-to-drain).
    pub i_per_pullup: f64,
    /// Current of one pull-down unit at the solved bias.
    pub i_per_pulldown: f64,
    /// Current in `rpp` toward `vdac`.
    pub i_rpp: f64,
    /// Current in `rpn` away from `vdac`.
    pub i_rpn: f64,
    pub region_p: OperatingRegion,
    pub region_n: OperatingRegion,
    /// Largest absolute KCL imbalance over the solved nodes.
    pub kcl_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCurve {
    pub config: DacConfig,
    pub rows: Vec<NodeSolution>,
}

impl TransferCurve {
    pub fn vdac(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.vdac).collect()
    }

    pub fn d_max(&self) -> u32 {
        self.config.d_max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// KCL residual target, amperes.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest Newton update per iteration, volts.
    pub max_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 200,
            max_step: 0.5,
        }
    }
}

// Unknown ordering in the state vector.
const DAC: usize = 0;
const VD: usize = 1;
const VS: usize = 2;

struct Network<'a> {
    cfg: &'a DacConfig,
    up: f64,
    down: f64,
    rsp: Option<f64>,
    rsn: Option<f64>,
    parallel: Option<(f64, f64)>,
    inner: bool,
    active: [bool; 3],
}

struct Eval {
    f: [f64; 3],
    jac: [[f64; 3]; 3],
    up: ChannelPoint,
    i_rpp: f64,
    i_rpn: f64,
}

impl Eval {
    fn norm(&self, active: &[bool; 3]) -> f64 {
        (0..3)
            .filter(|&i| active[i])
            .map(|i| self.f[i].abs())
            .fold(0.0, f64::max)
    }
}

impl<'a> Network<'a> {
    fn new(cfg: &'a DacConfig, code: u32) -> Self {
        let d_max = cfg.d_max();
        let (rsp, rsn, parallel, inner) = match cfg.topology {
            Topology::Standalone => (None, None, None, false),
            Topology::TwoResistor { rpp, rpn } => (None, None, Some((rpp, rpn)), false),
            Topology::FourResistor {
                rsp,
                rsn,
                rpp,
                rpn,
                parallel_attach,
            } => (
                (rsp > 0.0).then_some(rsp),
                (rsn > 0.0).then_some(rsn),
                Some((rpp, rpn)),
                parallel_attach == ParallelAttach::InnerRails,
            ),
        };
        Self {
            cfg,
            up: code as f64,
            down: (d_max - code) as f64,
            rsp,
            rsn,
            parallel,
            inner,
            active: [true, rsp.is_some(), rsn.is_some()],
        }
    }

    fn seed(&self, code: u32) -> [f64; 3] {
        let ideal = code as f64 / self.cfg.d_max() as f64 * self.cfg.vdd;
        [ideal, self.cfg.vdd, 0.0]
    }

    /// KCL residuals (current into each node) and their Jacobian.
    fn eval(&self, x: &[f64; 3]) -> Eval {
        let vdd = self.cfg.vdd;
        let (vdac, vd, vs) = (x[DAC], x[VD], x[VS]);
        let gate = vd - vs;
        let up = self
            .cfg
            .devices
            .pmos
            .channel(gate, vd - vdac)
            .scaled(self.up);
        let down = self
            .cfg
            .devices
            .nmos
            .channel(gate, vdac - vs)
            .scaled(self.down);

        let mut f = [0.0; 3];
        let mut j = [[0.0; 3]; 3];

        // Pull-up: d/dvd = dg + dd, d/dvs = -dg, d/dvdac = -dd.
        let dup = [-up.d_vds, up.d_vgs + up.d_vds, -up.d_vgs];
        // Pull-down: d/dvd = dg, d/dvs = -dg - dd, d/dvdac = dd.
        let ddown = [down.d_vds, down.d_vgs, -down.d_vgs - down.d_vds];

        f[DAC] = up.current - down.current;
        for c in 0..3 {
            j[DAC][c] = dup[c] - ddown[c];
        }

        let (mut i_rpp, mut i_rpn) = (0.0, 0.0);
        if let Some((rpp, rpn)) = self.parallel {
            let (gp, gn) = (1.0 / rpp, 1.0 / rpn);
            let (top, bottom) = if self.inner { (vd, vs) } else { (vdd, 0.0) };
            i_rpp = (top - vdac) * gp;
            i_rpn = (vdac - bottom) * gn;
            f[DAC] += i_rpp - i_rpn;
            j[DAC][DAC] -= gp + gn;
            if self.inner {
                j[DAC][VD] += gp;
                j[DAC][VS] += gn;
            }
        }

        if let Some(rsp) = self.rsp {
            let gs = 1.0 / rsp;
            f[VD] = (vdd - vd) * gs - up.current;
            for c in 0..3 {
                j[VD][c] = -dup[c];
            }
            j[VD][VD] -= gs;
            if let (true, Some((rpp, _))) = (self.inner, self.parallel) {
                f[VD] -= i_rpp;
                j[VD][VD] -= 1.0 / rpp;
                j[VD][DAC] += 1.0 / rpp;
            }
        }

        if let Some(rsn) = self.rsn {
            let gs = 1.0 / rsn;
            f[VS] = down.current - vs * gs;
            j[VS] = ddown;
            j[VS][VS] -= gs;
            if let (true, Some((_, rpn))) = (self.inner, self.parallel) {
                f[VS] += i_rpn;
                j[VS][VS] -= 1.0 / rpn;
                j[VS][DAC] += 1.0 / rpn;
            }
        }

        for i in 0..3 {
            if !self.active[i] {
                f[i] = 0.0;
                j[i] = [0.0; 3];
                for row in j.iter_mut() {
                    row[i] = 0.0;
                }
                j[i][i] = 1.0;
            }
        }

        Eval {
            f,
            jac: j,
            up,
            i_rpp,
            i_rpn,
        }
    }

    fn clamp(&self, x: &mut [f64; 3]) {
        for (i, v) in x.iter_mut().enumerate() {
            if self.active[i] {
                *v = v.clamp(0.0, self.cfg.vdd);
            }
        }
    }

    /// Damped Newton with backtracking. Returns the final point and residual.
    fn newton(&self, mut x: [f64; 3], opts: &SolverOptions) -> ([f64; 3], f64, bool) {
        let mut e = self.eval(&x);
        let mut norm = e.norm(&self.active);
        for _ in 0..opts.max_iterations {
            if norm <= opts.tolerance {
                return (x, norm, true);
            }
            let rhs = [-e.f[0], -e.f[1], -e.f[2]];
            let Some(mut dx) = solve3(&e.jac, &rhs) else {
                break;
            };
            let largest = dx.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if largest > opts.max_step {
                let s = opts.max_step / largest;
                dx.iter_mut().for_each(|v| *v *= s);
            }
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-6 {
                let mut trial = [x[0] + t * dx[0], x[1] + t * dx[1], x[2] + t * dx[2]];
                self.clamp(&mut trial);
                let te = self.eval(&trial);
                let tn = te.norm(&self.active);
                if tn < norm {
                    x = trial;
                    e = te;
                    norm = tn;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (x, norm, norm <= opts.tolerance)
    }

    /// Nonlinear Gauss-Seidel: each node's KCL is monotone decreasing in its
    /// own voltage, so it can be bracketed on `[0, vdd]` and bisected.
    fn bisection_sweeps(&self, mut x: [f64; 3], opts: &SolverOptions) -> ([f64; 3], f64, bool) {
        const SWEEPS: usize = 5000;
        let order = [VD, VS, DAC];
        let mut norm = self.eval(&x).norm(&self.active);
        for _ in 0..SWEEPS {
            if norm <= opts.tolerance {
                break;
            }
            for &node in order.iter().filter(|&&n| self.active[n]) {
                let (mut lo, mut hi) = (0.0, self.cfg.vdd);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    x[node] = mid;
                    if self.eval(&x).f[node] > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                x[node] = 0.5 * (lo + hi);
            }
            norm = self.eval(&x).norm(&self.active);
        }
        (x, norm, norm <= opts.tolerance)
    }
}

/// Gaussian elimination with partial pivoting on a 3x3 system.
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..3 {
            let factor = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (dst, src) in m[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= factor * src;
            }
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = m[row][3];
        for k in row + 1..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub fn solve_code(config: &DacConfig, code: u32) -> Result<NodeSolution> {
    solve_code_with(config, code, &SolverOptions::default())
}

pub fn solve_code_with(
    config: &DacConfig,
    code: u32,
    opts: &SolverOptions,
) -> Result<NodeSolution> {
    config.validate()?;
    let d_max = config.d_max();
    if code > d_max {
        return Err(Error::Domain(format!(
            "code {code} exceeds d_max = {d_max}"
        )));
    }
    let net = Network::new(config, code);

    // With no parallel path, an empty group leaves the output tied to the
    // opposite rail with no static current.
    let rail = match config.topology {
        Topology::Standalone if code == 0 => Some(0.0),
        Topology::Standalone if code == d_max => Some(config.vdd),
        _ => None,
    };

    let x = if let Some(v) = rail {
        [v, config.vdd, 0.0]
    } else {
        let (x, norm, ok) = net.newton(net.seed(code), opts);
        if ok {
            x
        } else {
            let (xb, norm_b, ok_b) = net.bisection_sweeps(x, opts);
            if ok_b {
                // Polish the bracketed point.
                let (xp, _, ok_p) = net.newton(xb, opts);
                if ok_p {
                    xp
                } else {
                    xb
                }
            } else {
                return Err(Error::NoConvergence {
                    code,
                    iterations: opts.max_iterations,
                    residual: norm.min(norm_b),
                });
            }
        }
    };

    let e = net.eval(&x);
    let (vdac, vd, vs) = (x[DAC], x[VD], x[VS]);
    let unit_up = config.devices.pmos.channel(vd - vs, vd - vdac).current;
    let unit_down = config.devices.nmos.channel(vd - vs, vdac - vs).current;
    let i_total = match config.topology {
        Topology::Standalone => e.up.current,
        Topology::TwoResistor { .. } => e.up.current + e.i_rpp,
        Topology::FourResistor {
            rsp,
            parallel_attach,
            ..
        } => match (rsp > 0.0, parallel_attach) {
            (true, ParallelAttach::InnerRails) => (config.vdd - vd) / rsp,
            (true, ParallelAttach::SupplyRails) => (config.vdd - vd) / rsp + e.i_rpp,
            (false, _) => e.up.current + e.i_rpp,
        },
    };

    Ok(NodeSolution {
        code,
        vdac,
        vd,
        vs,
        i_total,
        i_per_pullup: unit_up,
        i_per_pulldown: unit_down,
        i_rpp: e.i_rpp,
        i_rpn: e.i_rpn,
        region_p: config.devices.pmos.region(vd - vs, vd - vdac),
        region_n: config.devices.nmos.region(vd - vs, vdac - vs),
        kcl_residual: e.norm(&net.active),
    })
}

/// Solves every code `0..=d_max` (in parallel) and assembles them in order.
pub fn transfer_curve(config: &DacConfig) -> Result<TransferCurve> {
    transfer_curve_with(config, &SolverOptions::default())
}

pub fn transfer_curve_with(config: &DacConfig, opts: &SolverOptions) -> Result<TransferCurve> {
    config.validate()?;
    let results: Vec<Result<NodeSolution>> = (0..=config.d_max())
        .into_par_iter()
        .map(|code| solve_code_with(config, code, opts))
        .collect();
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(TransferCurve {
        config: *config,
        rows,
    })
}

/// Largest deviation from the mirror identity `vdac(d_max - m) = vdd - vdac(m)`.
///
/// Requires a mirror-symmetric topology; device mismatch is what this measures.
pub fn complement_check(curve: &TransferCurve) -> Result<f64> {
    if !curve.config.topology.is_mirror_symmetric() {
        return Err(Error::Precondition(
            "complement check needs rpp == rpn and rsp == rsn".into(),
        ));
    }
    let vdd = curve.config.vdd;
    let d_max = curve.rows.len() - 1;
    Ok((0..=d_max)
        .map(|m| (curve.rows[d_max - m].vdac - (vdd - curve.rows[m].vdac)).abs())
        .fold(0.0, f64::max))
}
