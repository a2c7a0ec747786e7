//! The simulated rig: ramp → condensate dynamics → pulsed outcoupling → cost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atom_laser::{simulate_pulses, AtomLaserError, FreeFall, PulseSimulation, PulseTrain};
use crate::cost::{robust_cost, CostError, CostReport, CostWeights};
use crate::dynamics::{
    com_energy_x, evolve, evolve_with, CondensateState, DynamicsConfig, DynamicsError, StaticDrive,
    Trajectory,
};
use crate::optimizer::{Experiment, Problem};
use crate::ramp::{RampError, RampKind, RampSpec, DEFAULT_SEGMENTS};
use crate::trap::{trap_from_controls, ControlBox, CurrentMapCalibration, TrapError, TrapParameters};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Ramp(#[from] RampError),
    #[error(transparent)]
    Trap(#[from] TrapError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    AtomLaser(#[from] AtomLaserError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Everything about the simulated apparatus that is not being optimised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSettings {
    pub atom_number: f64,
    /// `start_time` is measured from the end of the controlled ramp.
    pub pulses: PulseTrain,
    pub dynamics: DynamicsConfig,
    pub control_box: ControlBox,
    pub segments: usize,
    /// Starting exponential time constants, as fractions of the duration.
    pub initial_tau_fraction: [f64; 2],
    /// Steps per stored sample on the hold trajectory.
    pub hold_stride: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            atom_number: 8e5,
            pulses: PulseTrain::default(),
            dynamics: DynamicsConfig::default(),
            control_box: ControlBox::default(),
            segments: DEFAULT_SEGMENTS,
            initial_tau_fraction: [0.3, 0.3],
            hold_stride: 1,
        }
    }
}

/// Induced-oscillation setup for the damping scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DampingSettings {
    /// Duration of the deliberately non-adiabatic linear ramp into the trap.
    pub induction_duration: f64,
    pub window: f64,
    pub segments: usize,
    /// (axial, radial) frequencies of the trap being damped, Hz.
    pub trap_hz: [f64; 2],
    /// Escape velocity of the damped trap, m/s; the loss model never uses
    /// a shallower depth in this scenario.
    pub escape_velocity: f64,
    /// Bounds on the control-window knots.
    pub knot_box: ControlBox,
    /// Acquisition trust region used when the optimiser settings leave it
    /// unset.
    pub trust_region: Option<f64>,
}

impl Default for DampingSettings {
    fn default() -> Self {
        Self {
            induction_duration: 0.373,
            window: 0.120,
            segments: 8,
            trap_hz: [15.0, 25.0],
            escape_velocity: 0.5,
            knot_box: ControlBox {
                v1: [0.3, 1.5],
                v2: [2.0, 6.0],
            },
            trust_region: Some(0.1),
        }
    }
}

/// Ramp template from the initial to the final trap for `kind`.
pub fn transport_ramp(
    cal: &CurrentMapCalibration,
    sim: &SimulationSettings,
    kind: RampKind,
    duration: f64,
) -> Result<RampSpec, ExperimentError> {
    let start = cal.currents_to_controls(cal.initial_configuration());
    let end = cal.currents_to_controls(cal.final_configuration());
    sim.control_box.check(start)?;
    sim.control_box.check(end)?;
    Ok(match kind {
        RampKind::Linear => RampSpec::linear(duration, start, end)?,
        RampKind::Exponential => RampSpec::exponential(duration, start, end, sim.initial_tau_fraction)?,
        RampKind::PiecewiseLinear { segments } => {
            RampSpec::piecewise_linear(duration, start, end, segments, &sim.control_box)?
        }
    })
}

/// One full simulated shot.
#[derive(Debug, Clone)]
pub struct Shot {
    pub ramp: Trajectory,
    pub hold: Trajectory,
    pub pulses: PulseSimulation,
    pub train: PulseTrain,
    pub report: CostReport,
    pub hold_trap: TrapParameters,
}

impl Shot {
    /// Detector-plane amplitude of the residual COM oscillation per axis,
    /// from the state at the end of the ramp in the held trap.
    pub fn far_field_amplitude(&self) -> [f64; 3] {
        far_field_amplitude(self.ramp.last(), &self.hold_trap, &self.train.fall())
    }

    /// x-axis COM energy at the start of the hold.
    pub fn com_energy_x(&self, mass: f64) -> f64 {
        com_energy_x(self.ramp.last(), &self.hold_trap, mass)
    }

    /// Amplitude of a sinusoid at the hold-trap frequency fitted to the
    /// per-pulse x means.
    pub fn fitted_amplitude_x(&self) -> f64 {
        let (t, x): (Vec<f64>, Vec<f64>) = self
            .pulses
            .records
            .iter()
            .zip(&self.pulses.expectations)
            .filter(|(r, _)| r.count > 0)
            .map(|(r, e)| (e.time, r.mean[0]))
            .unzip();
        fit_sinusoid_amplitude(&t, &x, self.hold_trap.omega_x())
    }
}

/// `A·sqrt(1 + (ω t_fall)²)` with `A` the in-trap amplitude.
pub fn far_field_amplitude(state: &CondensateState, trap: &TrapParameters, fall: &FreeFall) -> [f64; 3] {
    let c = trap.center();
    let mut out = [0.0; 3];
    for a in 0..3 {
        let w = trap.omega[a];
        let d = state.position[a] - c[a];
        let amp = d.hypot(state.velocity[a] / w);
        out[a] = amp * (1.0 + (w * fall.t_fall).powi(2)).sqrt();
    }
    out
}

/// Least-squares `a·cos ωt + b·sin ωt + c`; returns `hypot(a, b)`.
pub fn fit_sinusoid_amplitude(t: &[f64], y: &[f64], omega: f64) -> f64 {
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    let mut r = nalgebra::Vector3::<f64>::zeros();
    for (&ti, &yi) in t.iter().zip(y) {
        let b = nalgebra::Vector3::new((omega * ti).cos(), (omega * ti).sin(), 1.0);
        m += b * b.transpose();
        r += b * yi;
    }
    match m.lu().solve(&r) {
        Some(c) => c[0].hypot(c[1]),
        None => f64::NAN,
    }
}

/// A simulated shot parameterised by the free parameters of a ramp template.
#[derive(Debug, Clone)]
pub struct SimulatedExperiment {
    pub template: RampSpec,
    pub cal: CurrentMapCalibration,
    pub sim: SimulationSettings,
    pub weights: CostWeights,
    pub initial_state: CondensateState,
}

impl SimulatedExperiment {
    /// Transport and decompression from the initial to the final trap,
    /// starting from a condensate at rest in the initial trap.
    pub fn transport(
        cal: CurrentMapCalibration,
        sim: SimulationSettings,
        weights: CostWeights,
        kind: RampKind,
        duration: f64,
    ) -> Result<Self, ExperimentError> {
        let template = transport_ramp(&cal, &sim, kind, duration)?;
        let trap0 = trap_from_controls(template.start, &cal)?;
        let initial_state = CondensateState::ground(&trap0, sim.atom_number);
        Ok(Self {
            template,
            cal,
            sim,
            weights,
            initial_state,
        })
    }

    /// A condensate set sloshing by a linear ramp into the damping trap,
    /// followed by a piecewise-linear control window that starts and ends at
    /// that trap.
    pub fn damping(
        cal: CurrentMapCalibration,
        mut sim: SimulationSettings,
        weights: CostWeights,
        damping: &DampingSettings,
    ) -> Result<Self, ExperimentError> {
        sim.dynamics.min_escape_velocity = damping.escape_velocity;
        let start = cal.currents_to_controls(cal.initial_configuration());
        let [axial_hz, radial_hz] = damping.trap_hz;
        let target = cal.currents_to_controls(cal.currents_for_frequencies(axial_hz, radial_hz));
        damping.knot_box.check(target)?;
        let induction = RampSpec::linear(damping.induction_duration, start, target)?;
        let trap0 = trap_from_controls(start, &cal)?;
        let ground = CondensateState::ground(&trap0, sim.atom_number);
        let traj = evolve(
            &ground,
            &induction,
            &cal,
            &sim.dynamics,
            None,
            damping.induction_duration,
            64,
        )?;
        let template =
            RampSpec::piecewise_linear(damping.window, target, target, damping.segments, &damping.knot_box)?;
        Ok(Self {
            template,
            cal,
            sim,
            weights,
            initial_state: *traj.last(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.template.dimension()
    }

    /// Start the optimisation from `params` instead of the template default,
    /// clamped into the template's box.
    pub fn warm_started(mut self, params: &[f64]) -> Result<Self, ExperimentError> {
        let clamped: Vec<f64> = params
            .iter()
            .zip(&self.template.bounds)
            .map(|(&p, &[lo, hi])| p.clamp(lo, hi))
            .collect();
        self.template = self.template.with_params(&clamped)?;
        Ok(self)
    }

    /// Optimisation problem over the template's free parameters.
    pub fn problem(&self, seed: u64) -> Problem {
        Problem {
            bounds: self.template.bounds.clone(),
            initial: self.template.params.clone(),
            seed,
        }
    }

    pub fn spec_for(&self, params: &[f64]) -> Result<RampSpec, ExperimentError> {
        Ok(self.template.with_params(params)?)
    }

    /// Run one shot. `pulse_offset` shifts the pulse train (interlacing).
    pub fn shoot(&self, params: &[f64], seed: u64, pulse_offset: f64) -> Result<Shot, ExperimentError> {
        let spec = self.spec_for(params)?;
        let ramp = evolve(
            &self.initial_state,
            &spec,
            &self.cal,
            &self.sim.dynamics,
            None,
            spec.duration,
            16,
        )?;
        let end = *ramp.last();
        let hold_trap = trap_from_controls(spec.end, &self.cal)?;
        let mut train = self.sim.pulses.clone();
        train.start_time = end.time + self.sim.pulses.start_time + pulse_offset;
        let hold = evolve_with(
            &end,
            &StaticDrive(hold_trap),
            &self.sim.dynamics,
            None,
            train.end_time() + train.period,
            self.sim.hold_stride,
        )?;
        let pulses = simulate_pulses(&hold, &train, seed)?;
        let report = robust_cost(&pulses.records, &self.weights)?;
        Ok(Shot {
            ramp,
            hold,
            pulses,
            train,
            report,
            hold_trap,
        })
    }
}

impl Experiment for SimulatedExperiment {
    fn evaluate(&mut self, params_raw: &[f64], seed: u64) -> Result<CostReport, String> {
        self.shoot(params_raw, seed, 0.0)
            .map(|s| s.report)
            .map_err(|e| e.to_string())
    }
}
