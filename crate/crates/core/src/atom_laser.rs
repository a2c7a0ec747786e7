//! Pulsed atom-laser measurement.
//!
//! A train of RF pulses outcouples a small fraction of the trapped atoms; the
//! released atoms fall to a detector plane where the horizontal coordinates
//! and arrival time of each detected atom are recorded. The detector-plane
//! coordinate of a cloud with in-trap position `x` and velocity `v` is
//! `x + v·t_fall`, i.e. `v* = v + x/t_fall` times the fall time. The vertical
//! coordinate is recovered from the arrival-time offset multiplied by the
//! velocity at the detector.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::Trajectory;

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Error)]
pub enum AtomLaserError {
    #[error("trajectory [{start}, {end}] s does not cover pulse at {t} s")]
    Coverage { t: f64, start: f64, end: f64 },
    #[error("invalid pulse train: {0}")]
    InvalidTrain(String),
    #[error("event file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseTrain {
    /// Time of the first pulse, s.
    pub start_time: f64,
    pub period: f64,
    pub pulse_count: usize,
    pub outcoupled_fraction: f64,
    pub detection_efficiency: f64,
    /// Trap-to-detector distance, m.
    pub fall_distance: f64,
    pub resolution_xy: f64,
    pub resolution_z: f64,
    pub gravity: f64,
    /// In-trap width of the condensate at `b = 1` per axis, m.
    pub in_trap_width: [f64; 3],
}

impl Default for PulseTrain {
    fn default() -> Self {
        Self {
            start_time: 0.0,
            period: 0.010,
            pulse_count: 250,
            outcoupled_fraction: 0.02,
            detection_efficiency: 0.10,
            fall_distance: 0.852,
            resolution_xy: 120e-6,
            resolution_z: 10e-6,
            gravity: STANDARD_GRAVITY,
            in_trap_width: [150e-6, 30e-6, 30e-6],
        }
    }
}

impl PulseTrain {
    pub fn validate(&self) -> Result<(), AtomLaserError> {
        let frac_ok = |f: f64| f > 0.0 && f <= 1.0;
        if !frac_ok(self.outcoupled_fraction) || !frac_ok(self.detection_efficiency) {
            return Err(AtomLaserError::InvalidTrain(
                "fractions must lie in (0, 1]".into(),
            ));
        }
        if !(self.period > 0.0) || self.pulse_count == 0 {
            return Err(AtomLaserError::InvalidTrain(
                "period must be positive and pulse_count at least 1".into(),
            ));
        }
        if !(self.fall_distance > 0.0 && self.gravity > 0.0) {
            return Err(AtomLaserError::InvalidTrain(
                "fall distance and gravity must be positive".into(),
            ));
        }
        if self.resolution_xy < 0.0
            || self.resolution_z < 0.0
            || self.in_trap_width.iter().any(|w| *w < 0.0)
        {
            return Err(AtomLaserError::InvalidTrain(
                "widths and resolutions must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn pulse_time(&self, i: usize) -> f64 {
        self.start_time + self.period * i as f64
    }

    pub fn end_time(&self) -> f64 {
        self.pulse_time(self.pulse_count - 1)
    }

    pub fn fall(&self) -> FreeFall {
        FreeFall::new(self.fall_distance, self.gravity)
    }

    /// True when the pulse period is at most half the period of the fastest
    /// axis (`ω_max` in rad/s), i.e. the oscillation is sampled above Nyquist.
    pub fn nyquist_ok(&self, max_omega: f64) -> bool {
        self.period <= 0.5 * (2.0 * PI / max_omega)
    }

    fn resolution(&self) -> [f64; 3] {
        [self.resolution_xy, self.resolution_xy, self.resolution_z]
    }
}

/// Free fall from the trap to the detector plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeFall {
    pub t_fall: f64,
    /// Vertical speed at the detector, m/s.
    pub detector_velocity: f64,
}

impl FreeFall {
    pub fn new(distance: f64, gravity: f64) -> Self {
        let t_fall = (2.0 * distance / gravity).sqrt();
        Self {
            t_fall,
            detector_velocity: gravity * t_fall,
        }
    }

    /// Detector-plane coordinate of an atom at `x` moving with `v`.
    pub fn far_field(&self, x: f64, v: f64) -> f64 {
        x + v * self.t_fall
    }

    /// Far-field velocity `v* = v + x/t_fall`.
    pub fn far_field_velocity(&self, x: f64, v: f64) -> f64 {
        v + x / self.t_fall
    }
}

/// Per-pulse statistics at the detector plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub pulse_index: usize,
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub count: u64,
}

impl DetectionRecord {
    pub fn empty(pulse_index: usize) -> Self {
        Self {
            pulse_index,
            mean: [0.0; 3],
            std: [0.0; 3],
            count: 0,
        }
    }
}

/// A single detected atom: arrival time and horizontal position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorEvent {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Detector events ordered by arrival time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventSet {
    events: Vec<DetectorEvent>,
}

impl EventSet {
    pub fn new(mut events: Vec<DetectorEvent>) -> Self {
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self { events }
    }

    pub fn events(&self) -> &[DetectorEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// CSV with header `t_s,x_m,y_m`.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, AtomLaserError> {
        let mut events = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let trimmed = line.trim();
            if i == 0 {
                if trimmed.trim_start_matches('\u{feff}') != "t_s,x_m,y_m" {
                    return Err(AtomLaserError::Parse {
                        line: line_no,
                        msg: format!("expected header t_s,x_m,y_m, got {trimmed:?}"),
                    });
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 3 {
                return Err(AtomLaserError::Parse {
                    line: line_no,
                    msg: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            let mut vals = [0.0; 3];
            for (v, f) in vals.iter_mut().zip(&fields) {
                *v = f.trim().parse::<f64>().map_err(|e| AtomLaserError::Parse {
                    line: line_no,
                    msg: format!("{f:?}: {e}"),
                })?;
                if !v.is_finite() {
                    return Err(AtomLaserError::Parse {
                        line: line_no,
                        msg: format!("non-finite value {f:?}"),
                    });
                }
            }
            events.push(DetectorEvent {
                t: vals[0],
                x: vals[1],
                y: vals[2],
            });
        }
        Ok(Self::new(events))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_s,x_m,y_m")?;
        for e in &self.events {
            writeln!(w, "{},{},{}", e.t, e.x, e.y)?;
        }
        Ok(())
    }
}

/// CSV with header `pulse,mean_x,mean_y,mean_z,std_x,std_y,std_z,count`.
pub fn write_records_csv<W: Write>(records: &[DetectionRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "pulse,mean_x,mean_y,mean_z,std_x,std_y,std_z,count")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.pulse_index, r.mean[0], r.mean[1], r.mean[2], r.std[0], r.std[1], r.std[2], r.count
        )?;
    }
    Ok(())
}

/// What a pulse would measure with infinitely many atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseExpectation {
    pub time: f64,
    pub mean: [f64; 3],
    /// Detector-plane width including resolution.
    pub width: [f64; 3],
    /// Atoms outcoupled by this pulse.
    pub outcoupled: f64,
    /// Detection probability times outcoupled atoms.
    pub expected_count: f64,
}

/// Running mean and population variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0).sqrt()
        }
    }
}

fn records_from_stats(pulse_index: usize, stats: &[Welford; 3]) -> DetectionRecord {
    DetectionRecord {
        pulse_index,
        mean: [stats[0].mean, stats[1].mean, stats[2].mean],
        std: [stats[0].std(), stats[1].std(), stats[2].std()],
        count: stats[0].n,
    }
}

/// Expected detector-plane signal for every pulse of the train.
pub fn pulse_expectations(
    traj: &Trajectory,
    train: &PulseTrain,
) -> Result<Vec<PulseExpectation>, AtomLaserError> {
    train.validate()?;
    let fall = train.fall();
    let res = train.resolution();
    let mut remaining = 1.0;
    let mut out = Vec::with_capacity(train.pulse_count);
    for i in 0..train.pulse_count {
        let t = train.pulse_time(i);
        let (s, _) = traj.state_at(t).ok_or(AtomLaserError::Coverage {
            t,
            start: traj.start_time(),
            end: traj.end_time(),
        })?;
        let mut mean = [0.0; 3];
        let mut width = [0.0; 3];
        for a in 0..3 {
            mean[a] = fall.far_field(s.position[a], s.velocity[a]);
            let w0 = train.in_trap_width[a];
            let mapped = (w0 * s.scale[a] + fall.t_fall * w0 * s.scale_rate[a]).abs();
            width[a] = mapped.hypot(res[a]);
        }
        let outcoupled = s.atom_number.max(0.0) * remaining * train.outcoupled_fraction;
        remaining *= 1.0 - train.outcoupled_fraction;
        out.push(PulseExpectation {
            time: t,
            mean,
            width,
            outcoupled,
            expected_count: outcoupled * train.detection_efficiency,
        });
    }
    Ok(out)
}

/// Result of a simulated pulse train.
#[derive(Debug, Clone)]
pub struct PulseSimulation {
    pub records: Vec<DetectionRecord>,
    pub expectations: Vec<PulseExpectation>,
    /// Raw detector events, when requested.
    pub events: Option<EventSet>,
    /// The pulse period exceeds half the period of the fastest trap axis.
    pub nyquist_warning: bool,
}

impl PulseSimulation {
    pub fn total_detections(&self) -> u64 {
        self.records.iter().map(|r| r.count).sum()
    }
}

fn simulate(
    traj: &Trajectory,
    train: &PulseTrain,
    seed: u64,
    keep_events: bool,
) -> Result<PulseSimulation, AtomLaserError> {
    let expectations = pulse_expectations(traj, train)?;
    let fall = train.fall();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(expectations.len());
    let mut events = Vec::new();
    let mut max_omega: f64 = 0.0;
    for (i, e) in expectations.iter().enumerate() {
        if let Some((_, trap)) = traj.state_at(e.time) {
            max_omega = max_omega.max(trap.max_omega());
        }
        let trials = e.outcoupled.round().max(0.0) as u64;
        let count = if trials == 0 {
            0
        } else {
            Binomial::new(trials, train.detection_efficiency)
                .map_err(|err| AtomLaserError::InvalidTrain(err.to_string()))?
                .sample(&mut rng)
        };
        let mut stats = [Welford::default(); 3];
        for _ in 0..count {
            let mut d = [0.0; 3];
            for a in 0..3 {
                let z: f64 = StandardNormal.sample(&mut rng);
                d[a] = e.mean[a] + e.width[a] * z;
                stats[a].push(d[a]);
            }
            if keep_events {
                events.push(DetectorEvent {
                    t: e.time + fall.t_fall + d[2] / fall.detector_velocity,
                    x: d[0],
                    y: d[1],
                });
            }
        }
        records.push(records_from_stats(i, &stats));
    }
    Ok(PulseSimulation {
        records,
        expectations,
        events: keep_events.then(|| EventSet::new(events)),
        nyquist_warning: max_omega > 0.0 && !train.nyquist_ok(max_omega),
    })
}

/// Simulate the pulse train over `traj` and summarise each pulse.
pub fn simulate_pulses(
    traj: &Trajectory,
    train: &PulseTrain,
    seed: u64,
) -> Result<PulseSimulation, AtomLaserError> {
    simulate(traj, train, seed, false)
}

/// Like [`simulate_pulses`] but also returns the raw detector events. The
/// records are identical to those of [`simulate_pulses`] for the same seed.
pub fn simulate_events(
    traj: &Trajectory,
    train: &PulseTrain,
    seed: u64,
) -> Result<PulseSimulation, AtomLaserError> {
    simulate(traj, train, seed, true)
}

/// Binned detector data.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedEvents {
    pub records: Vec<DetectionRecord>,
    /// Events outside every pulse window.
    pub dropped: usize,
}

/// Assign each event to the nearest pulse window (half-width `period/2`
/// around the expected arrival time) and summarise each pulse.
pub fn bin_events(
    events: &EventSet,
    train: &PulseTrain,
    fall: &FreeFall,
) -> Result<BinnedEvents, AtomLaserError> {
    train.validate()?;
    let mut stats = vec![[Welford::default(); 3]; train.pulse_count];
    let mut dropped = 0;
    let half = 0.5 * train.period;
    for e in events.events() {
        let rel = (e.t - train.start_time - fall.t_fall) / train.period;
        let idx = rel.round();
        if !(idx >= 0.0 && idx < train.pulse_count as f64) {
            dropped += 1;
            continue;
        }
        let i = idx as usize;
        let offset = e.t - train.pulse_time(i) - fall.t_fall;
        if offset.abs() > half {
            dropped += 1;
            continue;
        }
        let z = offset * fall.detector_velocity;
        let s = &mut stats[i];
        s[0].push(e.x);
        s[1].push(e.y);
        s[2].push(z);
    }
    Ok(BinnedEvents {
        records: stats
            .iter()
            .enumerate()
            .map(|(i, s)| records_from_stats(i, s))
            .collect(),
        dropped,
    })
}
