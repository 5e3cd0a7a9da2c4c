//! Reference implementations shared by the integration suites.
//!
//! Nothing here calls into the solver. The oracle re-derives the circuit
//! from terminal voltages and finds the operating point by nested
//! bisection, one node per level, relying only on each node's KCL being
//! monotone in its own voltage.

#![allow(dead_code)]

use gpiodac::{
    DacConfig, Device, DevicePair, Encoding, MosfetParams, ParallelAttach, Polarity, Topology,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const BISECTIONS: usize = 56;

#[derive(Debug, Clone, Copy)]
pub struct Nodes {
    pub vdac: f64,
    pub vd: f64,
    pub vs: f64,
}

fn square_law(vth: f64, k: f64, vgs: f64, vds: f64) -> f64 {
    let vov = vgs - vth;
    if vov <= 0.0 {
        0.0
    } else if vds >= vov {
        k * vov * vov / 2.0
    } else {
        k * (vov - vds / 2.0) * vds
    }
}

/// Current from terminal `a` to terminal `b` of a P-channel unit gated at `g`.
fn p_current(dev: &Device, a: f64, b: f64, g: f64, drive: f64) -> f64 {
    match dev {
        Device::Ohmic { conductance } => {
            if drive > 0.0 {
                conductance * (a - b)
            } else {
                0.0
            }
        }
        Device::SquareLaw(p) => {
            let (src, drn, sign) = if a >= b { (a, b, 1.0) } else { (b, a, -1.0) };
            sign * square_law(p.vth, p.k, src - g, src - drn)
        }
    }
}

/// Current from terminal `a` to terminal `b` of an N-channel unit gated at `g`.
fn n_current(dev: &Device, a: f64, b: f64, g: f64, drive: f64) -> f64 {
    match dev {
        Device::Ohmic { conductance } => {
            if drive > 0.0 {
                conductance * (a - b)
            } else {
                0.0
            }
        }
        Device::SquareLaw(p) => {
            let (drn, src, sign) = if a >= b { (a, b, 1.0) } else { (b, a, -1.0) };
            sign * square_law(p.vth, p.k, g - src, drn - src)
        }
    }
}

fn bisect(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    if f(lo) <= 0.0 {
        return lo;
    }
    if f(hi) >= 0.0 {
        return hi;
    }
    for _ in 0..BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Circuit {
    vdd: f64,
    pmos: Device,
    nmos: Device,
    ups: f64,
    downs: f64,
    rsp: f64,
    rsn: f64,
    rp: Option<(f64, f64)>,
    inner: bool,
}

impl Circuit {
    fn new(cfg: &DacConfig, code: u32) -> Self {
        let (rsp, rsn, rp, inner) = match cfg.topology {
            Topology::Standalone => (0.0, 0.0, None, true),
            Topology::TwoResistor { rpp, rpn } => (0.0, 0.0, Some((rpp, rpn)), false),
            Topology::FourResistor {
                rsp,
                rsn,
                rpp,
                rpn,
                parallel_attach,
            } => (
                rsp,
                rsn,
                Some((rpp, rpn)),
                parallel_attach == ParallelAttach::InnerRails,
            ),
        };
        let d_max = (1u32 << cfg.n_bits) - 1;
        Self {
            vdd: cfg.vdd,
            pmos: cfg.devices.pmos,
            nmos: cfg.devices.nmos,
            ups: code as f64,
            downs: (d_max - code) as f64,
            rsp,
            rsn,
            rp,
            inner,
        }
    }

    // Currents into the output node and out of the vd node, and into the vs node.
    fn branch(&self, vdac: f64, vd: f64, vs: f64) -> (f64, f64, f64) {
        let drive = vd - vs;
        let up = self.ups * p_current(&self.pmos, vd, vdac, vs, drive);
        let down = self.downs * n_current(&self.nmos, vdac, vs, vd, drive);
        let (mut into_dac, mut out_of_vd, mut into_vs) = (up - down, up, down);
        if let Some((rpp, rpn)) = self.rp {
            let (top, bottom) = if self.inner {
                (vd, vs)
            } else {
                (self.vdd, 0.0)
            };
            let ip = (top - vdac) / rpp;
            let in_ = (vdac - bottom) / rpn;
            into_dac += ip - in_;
            if self.inner {
                out_of_vd += ip;
                into_vs += in_;
            }
        }
        (into_dac, out_of_vd, into_vs)
    }

    fn vdac_given(&self, vd: f64, vs: f64) -> f64 {
        bisect(0.0, self.vdd, |v| self.branch(v, vd, vs).0)
    }

    fn vd_given(&self, vs: f64) -> (f64, f64) {
        if self.rsp == 0.0 {
            return (self.vdd, self.vdac_given(self.vdd, vs));
        }
        let vd = bisect(0.0, self.vdd, |vd| {
            let vdac = self.vdac_given(vd, vs);
            (self.vdd - vd) / self.rsp - self.branch(vdac, vd, vs).1
        });
        (vd, self.vdac_given(vd, vs))
    }

    fn solve(&self) -> Nodes {
        if self.rsn == 0.0 {
            let (vd, vdac) = self.vd_given(0.0);
            return Nodes { vdac, vd, vs: 0.0 };
        }
        let vs = bisect(0.0, self.vdd, |vs| {
            let (vd, vdac) = self.vd_given(vs);
            self.branch(vdac, vd, vs).2 - vs / self.rsn
        });
        let (vd, vdac) = self.vd_given(vs);
        Nodes { vdac, vd, vs }
    }
}

pub fn oracle_solve(cfg: &DacConfig, code: u32) -> Nodes {
    Circuit::new(cfg, code).solve()
}

fn random_device(rng: &mut ChaCha8Rng, polarity: Polarity, vdd: f64) -> Device {
    if rng.gen_bool(0.2) {
        Device::Ohmic {
            conductance: rng.gen_range(0.005..0.1),
        }
    } else {
        let vth = rng.gen_range(0.15..0.45) * vdd;
        Device::SquareLaw(MosfetParams::new(polarity, vth, rng.gen_range(0.002..0.08)).unwrap())
    }
}

fn random_topology(rng: &mut ChaCha8Rng) -> Topology {
    match rng.gen_range(0..4) {
        0 => Topology::Standalone,
        1 => Topology::TwoResistor {
            rpp: rng.gen_range(1.0..200.0),
            rpn: rng.gen_range(1.0..200.0),
        },
        _ => Topology::FourResistor {
            rsp: if rng.gen_bool(0.15) {
                0.0
            } else {
                rng.gen_range(0.5..30.0)
            },
            rsn: if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.5..30.0)
            },
            rpp: rng.gen_range(1.0..100.0),
            rpn: rng.gen_range(1.0..100.0),
            parallel_attach: if rng.gen_bool(0.75) {
                ParallelAttach::InnerRails
            } else {
                ParallelAttach::SupplyRails
            },
        },
    }
}

/// Random configuration with up to 6 bits, any device kind and topology.
pub fn random_config(rng: &mut ChaCha8Rng) -> DacConfig {
    let vdd = rng.gen_range(1.8..5.0);
    let devices = DevicePair::new(
        random_device(rng, Polarity::Pmos, vdd),
        random_device(rng, Polarity::Nmos, vdd),
    )
    .unwrap();
    DacConfig::new(
        rng.gen_range(1..=6),
        vdd,
        devices,
        random_topology(rng),
        Encoding::Binary,
    )
    .unwrap()
}

/// Fresh square-law device parameters: `(vth, ron)` at `vdd`.
pub fn random_device_params(rng: &mut ChaCha8Rng) -> (f64, f64) {
    (rng.gen_range(0.7..1.4), rng.gen_range(20.0..80.0))
}

/// Naive DNL straight from the definition: step over end-point LSB minus one.
pub fn naive_dnl(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let lsb = (v[n - 1] - v[0]) / (n as f64 - 1.0);
    (1..n).map(|i| (v[i] - v[i - 1]) / lsb - 1.0).collect()
}

/// Naive end-point INL: distance from the chord, in LSB.
pub fn naive_inl(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let lsb = (v[n - 1] - v[0]) / (n as f64 - 1.0);
    (0..n)
        .map(|i| {
            let chord = v[0] + (v[n - 1] - v[0]) * i as f64 / (n as f64 - 1.0);
            (v[i] - chord) / lsb
        })
        .collect()
}

/// Pins driven high by a decode table recovered from generated RTL text.
pub fn decode_rtl(rtl: &str, n_bits: u32, code: u32) -> Vec<u32> {
    let bit = regex::Regex::new(r"dac_out(?:\[(\d+)\])? <= code(?:\[(\d+)\])?;").unwrap();
    let cmp = regex::Regex::new(r"dac_out(?:\[(\d+)\])? <= \(code > (\d+)'d(\d+)\);").unwrap();
    let mut high = Vec::new();
    for line in rtl.lines() {
        if let Some(c) = bit.captures(line) {
            let pin = c.get(1).map_or(0, |m| m.as_str().parse().unwrap());
            let b: u32 = c.get(2).map_or(0, |m| m.as_str().parse().unwrap());
            if code >> b & 1 == 1 {
                high.push(pin);
            }
        } else if let Some(c) = cmp.captures(line) {
            let pin = c.get(1).map_or(0, |m| m.as_str().parse().unwrap());
            let width: u32 = c[2].parse().unwrap();
            assert_eq!(width, n_bits, "comparison width mismatch in `{line}`");
            let threshold: u32 = c[3].parse().unwrap();
            if code > threshold {
                high.push(pin);
            }
        }
    }
    high.sort_unstable();
    high
}
