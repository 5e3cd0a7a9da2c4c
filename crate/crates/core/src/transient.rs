//! Event-driven replay of code sequences through per-pin switching skew.
//!
//! Every pin holds its old level until its own event time and then commits
//! to the new one. Between events the DC solver is evaluated on the
//! intermediate pin state, so the output only ever takes values the static
//! model can produce. Glitches appear when a binary transition releases
//! low-order pins before the high-order group asserts.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{pin_count, solve_code, DacConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    pub t_rise: f64,
    pub t_fall: f64,
    /// Upper bound of the per-pin switching stagger.
    pub skew_max: f64,
    /// Time between code updates.
    pub sample_period: f64,
    /// Probe load; documented only, the static model ignores it.
    pub load_capacitance: f64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            t_rise: 30e-9,
            t_fall: 30e-9,
            skew_max: 5e-9,
            sample_period: 50e-9,
            load_capacitance: 100e-12,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_rise", self.t_rise),
            ("t_fall", self.t_fall),
            ("skew_max", self.skew_max),
            ("sample_period", self.sample_period),
            ("load_capacitance", self.load_capacitance),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        let edge = self.t_rise.max(self.t_fall);
        if self.sample_period <= edge {
            return Err(Error::Domain(format!(
                "sample_period {} s must exceed the slowest edge {edge} s",
                self.sample_period
            )));
        }
        if self.skew_max + edge / 2.0 >= self.sample_period {
            return Err(Error::Domain(format!(
                "skew_max {} s plus half an edge does not settle within sample_period {} s",
                self.skew_max, self.sample_period
            )));
        }
        Ok(())
    }
}

/// How per-pin skews are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SkewMode {
    /// Pin `j` switches `j * skew_max / pin_count` after the code update.
    #[default]
    Deterministic,
    /// Independent uniform draws in `[0, skew_max]`, one per pin.
    Random { seed: u64 },
}

pub fn pin_skews(n_pins: u32, skew_max: f64, mode: SkewMode) -> Vec<f64> {
    match mode {
        SkewMode::Deterministic => (0..n_pins)
            .map(|j| j as f64 * skew_max / n_pins as f64)
            .collect(),
        SkewMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n_pins)
                .map(|_| {
                    if skew_max > 0.0 {
                        rng.gen_range(0.0..=skew_max)
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    /// Instant the new code is presented.
    pub time: f64,
    pub code: u32,
    /// Instant the last pin of this transition committed.
    pub settled: f64,
}

/// Sample-and-hold waveform: `values[i]` holds from `times[i]` until the next time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub annotations: Vec<Annotation>,
    pub lsb_ref: f64,
}

impl Waveform {
    /// Values at each settled instant, one per code.
    pub fn settled_values(&self) -> Vec<f64> {
        self.annotations
            .iter()
            .map(|a| self.value_at(a.settled))
            .collect()
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x <= t);
        self.values[idx.saturating_sub(1)]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,volts\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            out.push_str(&format!("{t:e},{v}\n"));
        }
        out
    }
}

struct LevelCache<'a> {
    config: &'a DacConfig,
    levels: HashMap<u32, f64>,
}

impl LevelCache<'_> {
    fn level(&mut self, asserted: u32, time: f64) -> Result<f64> {
        if let Some(v) = self.levels.get(&asserted) {
            return Ok(*v);
        }
        let v = solve_code(self.config, asserted)
            .map_err(|e| Error::Transient {
                time,
                source: Box::new(e),
            })?
            .vdac;
        self.levels.insert(asserted, v);
        Ok(v)
    }
}

pub fn synthesize(config: &DacConfig, codes: &[u32], timing: &TimingParams) -> Result<Waveform> {
    synthesize_with(config, codes, timing, SkewMode::Deterministic)
}

/// Code `k` of the sequence is presented at `k * sample_period`. A pin's
/// commit instant is its skew plus half of its edge time (rise or fall).
pub fn synthesize_with(
    config: &DacConfig,
    codes: &[u32],
    timing: &TimingParams,
    mode: SkewMode,
) -> Result<Waveform> {
    config.validate()?;
    timing.validate()?;
    if codes.is_empty() {
        return Err(Error::Domain("code sequence is empty".into()));
    }
    let d_max = config.d_max();
    if let Some(c) = codes.iter().find(|&&c| c > d_max) {
        return Err(Error::Domain(format!("code {c} exceeds d_max = {d_max}")));
    }
    let n_pins = pin_count(config.n_bits);
    let skews = pin_skews(n_pins, timing.skew_max, mode);
    let mut cache = LevelCache {
        config,
        levels: HashMap::new(),
    };

    let lsb_ref = (cache.level(d_max, 0.0)? - cache.level(0, 0.0)?) / d_max as f64;
    let mut state = config.encoding.pin_states(config.n_bits, codes[0]);
    let mut times = vec![0.0];
    let mut values = vec![cache.level(codes[0], 0.0)?];
    let mut annotations = vec![Annotation {
        time: 0.0,
        code: codes[0],
        settled: 0.0,
    }];

    for (k, &code) in codes.iter().enumerate().skip(1) {
        let t0 = k as f64 * timing.sample_period;
        let target = config.encoding.pin_states(config.n_bits, code);
        let mut events: Vec<(f64, usize)> = (0..n_pins as usize)
            .filter(|&j| state[j] != target[j])
            .map(|j| {
                let edge = if target[j] {
                    timing.t_rise
                } else {
                    timing.t_fall
                };
                (t0 + skews[j] + edge / 2.0, j)
            })
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut settled = t0;
        let mut i = 0;
        while i < events.len() {
            let t = events[i].0;
            while i < events.len() && events[i].0 == t {
                let j = events[i].1;
                state[j] = target[j];
                i += 1;
            }
            let asserted = state.iter().filter(|&&s| s).count() as u32;
            let v = cache.level(asserted, t)?;
            if t > *times.last().unwrap() {
                times.push(t);
                values.push(v);
            } else {
                *values.last_mut().unwrap() = v;
            }
            settled = t;
        }
        annotations.push(Annotation {
            time: t0,
            code,
            settled,
        });
    }

    Ok(Waveform {
        times,
        values,
        annotations,
        lsb_ref,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Glitch {
    /// Instant of the worst excursion.
    pub time: f64,
    pub from_code: u32,
    pub to_code: u32,
    pub excursion_v: f64,
    pub excursion_lsb: f64,
}

/// Excursions more than `band` LSB outside the interval spanned by the two
/// settled levels of each transition.
pub fn detect_glitches(w: &Waveform, band: f64) -> Vec<Glitch> {
    let mut out = Vec::new();
    if w.lsb_ref == 0.0 || !w.lsb_ref.is_finite() {
        return out;
    }
    let lsb = w.lsb_ref.abs();
    for pair in w.annotations.windows(2) {
        let (prev, cur) = (pair[0], pair[1]);
        let old = w.value_at(prev.settled);
        let new = w.value_at(cur.settled);
        let (lo, hi) = (old.min(new), old.max(new));
        let start = w.times.partition_point(|&t| t < cur.time);
        let end = w.times.partition_point(|&t| t <= cur.settled);
        let worst = (start..end)
            .map(|i| {
                let v = w.values[i];
                (w.times[i], (lo - v).max(v - hi).max(0.0))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((time, excursion_v)) = worst {
            if excursion_v > band * lsb {
                out.push(Glitch {
                    time,
                    from_code: prev.code,
                    to_code: cur.code,
                    excursion_v,
                    excursion_lsb: excursion_v / lsb,
                });
            }
        }
    }
    out
}

/// Uniformly resampled copy with linear edges of `t_rise` / `t_fall`
/// between held levels, for plotting only.
pub fn render_ramped(w: &Waveform, timing: &TimingParams, dt: f64) -> Result<Vec<(f64, f64)>> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("render step must be > 0, got {dt}")));
    }
    let t_end = w.times.last().copied().unwrap_or(0.0) + timing.sample_period;
    let n = (t_end / dt).ceil() as usize + 1;
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let t = s as f64 * dt;
        let idx = w.times.partition_point(|&x| x <= t).saturating_sub(1);
        let mut v = w.values[idx];
        if idx > 0 {
            let prev = w.values[idx - 1];
            let edge = if v >= prev {
                timing.t_rise
            } else {
                timing.t_fall
            };
            let elapsed = t - w.times[idx];
            if edge > 0.0 && elapsed < edge {
                v = prev + (v - prev) * elapsed / edge;
            }
        }
        out.push((t, v));
    }
    Ok(out)
}
