//! Cooling-power control stack: decoupled PI loops on the two refrigerant
//! power channels, an independent PI on the discharge channel, cascade flow
//! loops with valve-model feedforward, the superheat supervisor, and the
//! operating-mode logic.
//!
//! References and measurements are handled as power magnitudes [W]; the
//! plant's sign conventions stay inside the models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ControlConfig, PiGains, PlantConfig, ValveParams};
use crate::cycle::{valve_opening_for_flow, CycleOperatingPoint};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ControlError {
    #[error("gain matrix is singular (det = {det:.3e})")]
    SingularGains { det: f64 },
    #[error("decoupler synthesis needs nonzero diagonal gains")]
    ZeroDiagonal,
}

/// Static-gain description of the linearised power plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearPlantModel {
    /// 3x3 static gains [W per kg/s]: rows (Q_e_sec, Q_tes, Q_tes_sec),
    /// columns (m_e, m_tes, m_tes_sec). The secondary channel couplings
    /// (1,3), (2,3), (3,1), (3,2) are structurally zero.
    pub k: [[f64; 3]; 3],
    /// Dominant pole time constant [s].
    pub tau_dp: f64,
    /// Lead-zero time constant [s] of the diagonal refrigerant channels.
    pub tau_z: f64,
}

impl LinearPlantModel {
    pub fn from_config(c: &ControlConfig) -> Self {
        Self {
            k: [
                [c.k_hat[0][0], c.k_hat[0][1], 0.0],
                [c.k_hat[1][0], c.k_hat[1][1], 0.0],
                [0.0, 0.0, c.k33],
            ],
            tau_dp: c.tau_dp,
            tau_z: c.tau_z,
        }
    }

    /// Upper-left 2x2 refrigerant block.
    pub fn k_hat(&self) -> [[f64; 2]; 2] {
        [
            [self.k[0][0], self.k[0][1]],
            [self.k[1][0], self.k[1][1]],
        ]
    }
}

/// Relative gain array of a 2x2 gain block: `lambda_ij = k_ij * (K^-T)_ij`.
/// Rows and columns each sum to one.
pub fn rga(k: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2], ControlError> {
    let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
    if det.abs() < 1e-12 * (k[0][0].abs() + k[1][1].abs()).max(1.0) {
        return Err(ControlError::SingularGains { det });
    }
    let l11 = k[0][0] * k[1][1] / det;
    let l12 = -k[0][1] * k[1][0] / det;
    Ok([[l11, l12], [l12, l11]])
}

/// Static decoupler: unit diagonal, off-diagonals chosen so `K * D` is
/// diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplerConfig {
    /// 2x2 decoupling matrix with d11 = d22 = 1.
    pub d: [[f64; 2]; 2],
    /// Resulting diagonal plant gains [W per kg/s].
    pub k_diag: [f64; 2],
}

impl DecouplerConfig {
    pub fn identity(k: [[f64; 2]; 2]) -> Self {
        Self {
            d: [[1.0, 0.0], [0.0, 1.0]],
            k_diag: [k[0][0], k[1][1]],
        }
    }

    /// Applies the decoupler to the two PI outputs.
    pub fn mix(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.d[0][0] * v[0] + self.d[0][1] * v[1],
            self.d[1][0] * v[0] + self.d[1][1] * v[1],
        ]
    }
}

/// Computes the unit-diagonal decoupler for a 2x2 gain block:
/// `d12 = -k12/k11`, `d21 = -k21/k22`, leaving the diagonal plant
/// `det(K)/k22` and `det(K)/k11`.
pub fn synthesize_decoupler(k: [[f64; 2]; 2]) -> Result<DecouplerConfig, ControlError> {
    let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
    if det.abs() < 1e-12 * (k[0][0].abs() + k[1][1].abs()).max(1.0) {
        return Err(ControlError::SingularGains { det });
    }
    if k[0][0] == 0.0 || k[1][1] == 0.0 {
        return Err(ControlError::ZeroDiagonal);
    }
    Ok(DecouplerConfig {
        d: [[1.0, -k[0][1] / k[0][0]], [-k[1][0] / k[1][1], 1.0]],
        k_diag: [det / k[1][1], det / k[0][0]],
    })
}

/// PI regulator with output limits and back-calculation anti-windup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiController {
    pub kp: f64,
    pub ti: f64,
    pub out_min: f64,
    pub out_max: f64,
    /// Anti-windup tracking time [s]; the integral state follows the
    /// saturated output with this time constant.
    pub tt: f64,
    /// Integral state, in output units.
    integral: f64,
}

impl PiController {
    pub fn new(gains: PiGains, out_min: f64, out_max: f64) -> Self {
        Self {
            kp: gains.kp,
            ti: gains.ti,
            out_min,
            out_max,
            tt: gains.ti,
            integral: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
    }

    /// Preloads the integral so the next zero-error output equals `u`.
    pub fn preload(&mut self, u: f64) {
        self.integral = u.clamp(self.out_min, self.out_max);
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// One PI update on the error `reference - measurement`. The tracking
    /// correction is capped at a full step so anti-windup stays stable when
    /// the sample time exceeds the tracking time.
    pub fn step(&mut self, reference: f64, measurement: f64, dt: f64) -> f64 {
        let e = reference - measurement;
        let unsat = self.kp * e + self.integral;
        let u = unsat.clamp(self.out_min, self.out_max);
        let track = (dt / self.tt).min(1.0);
        self.integral += dt * self.kp / self.ti * e + track * (u - unsat);
        u
    }

    pub fn is_saturated(&self) -> bool {
        let probe = self.integral;
        probe <= self.out_min || probe >= self.out_max
    }
}

/// Activation pattern of the three cooling powers, numbered as the plant's
/// operating modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatingMode {
    /// Chamber + charge.
    M1 = 1,
    /// Chamber only.
    M2 = 2,
    /// Chamber + discharge.
    M3 = 3,
    /// Discharge only (cycle stopped).
    M4 = 4,
    /// Charge only.
    M5 = 5,
    /// Charge + discharge.
    M6 = 6,
    /// Chamber + charge + discharge.
    M7 = 7,
    /// Stand-by (cycle stopped).
    M8 = 8,
}

impl OperatingMode {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    /// Mode from the activation triple (chamber, charge, discharge).
    pub fn from_flags(e: bool, c: bool, d: bool) -> Self {
        match (e, c, d) {
            (true, true, false) => Self::M1,
            (true, false, false) => Self::M2,
            (true, false, true) => Self::M3,
            (false, false, true) => Self::M4,
            (false, true, false) => Self::M5,
            (false, true, true) => Self::M6,
            (true, true, true) => Self::M7,
            (false, false, false) => Self::M8,
        }
    }

    /// The compressor runs in every mode with refrigerant-side demand.
    pub fn compressor_on(self) -> bool {
        !matches!(self, Self::M4 | Self::M8)
    }

    pub fn chamber_active(self) -> bool {
        matches!(self, Self::M1 | Self::M2 | Self::M3 | Self::M7)
    }

    pub fn charge_active(self) -> bool {
        matches!(self, Self::M1 | Self::M5 | Self::M6 | Self::M7)
    }

    pub fn discharge_active(self) -> bool {
        matches!(self, Self::M3 | Self::M4 | Self::M6 | Self::M7)
    }
}

/// Cooling-power setpoints as magnitudes [W].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerReferences {
    pub q_e_sec: f64,
    pub q_tes: f64,
    pub q_tes_sec: f64,
}

/// Measured cooling powers as magnitudes [W].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoolingPowers {
    pub q_e_sec: f64,
    pub q_tes: f64,
    pub q_tes_sec: f64,
}

impl CoolingPowers {
    pub fn from_operating_point(op: &CycleOperatingPoint) -> Self {
        Self {
            q_e_sec: op.q_e_sec.abs(),
            q_tes: op.q_tes.abs(),
            q_tes_sec: op.q_tes_sec.abs(),
        }
    }
}

/// Flow commands produced by one control step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlowCommands {
    /// Virtual refrigerant-flow references [kg/s].
    pub m_e_ref: f64,
    pub m_tes_ref: f64,
    /// Secondary-flow command [kg/s] (directly manipulated).
    pub m_tes_sec: f64,
}

/// The complete controller state advanced once per control period.
#[derive(Debug, Clone)]
pub struct ControllerBank {
    pub cfg: ControlConfig,
    pub decoupler: DecouplerConfig,
    pub use_decoupler: bool,
    pub c11: PiController,
    pub c22: PiController,
    pub c33: PiController,
    pub c_m_e: PiController,
    pub c_m_tes: PiController,
    pub c_tsh: PiController,
    pub mode: OperatingMode,
    /// Superheat setpoint [K], held at the supervisor minimum.
    pub t_sh_ref: f64,
    /// Discharge-loop gain schedule: designed loop product [-] and the
    /// exchanger data needed to evaluate the local plant slope.
    loop_product_3: f64,
    ua_secondary: f64,
    cp_secondary: f64,
    dt_discharge_nominal: f64,
    last_flows: FlowCommands,
}

impl ControllerBank {
    pub fn new(plant: &PlantConfig, use_decoupler: bool) -> Result<Self, ControlError> {
        let cfg = &plant.control;
        let decoupler = if use_decoupler {
            synthesize_decoupler(cfg.k_hat)?
        } else {
            DecouplerConfig::identity(cfg.k_hat)
        };
        let pi_flow = |g: PiGains| PiController::new(g, cfg.flow_min, cfg.flow_max);
        Ok(Self {
            decoupler,
            use_decoupler,
            c11: pi_flow(cfg.c11),
            c22: pi_flow(cfg.c22),
            c33: PiController::new(cfg.c33, cfg.m_sec_min, cfg.m_sec_max),
            c_m_e: PiController::new(cfg.c_m_e, -90.0, 90.0),
            c_m_tes: PiController::new(cfg.c_m_tes, -90.0, 90.0),
            c_tsh: PiController::new(cfg.c_tsh, cfg.t_sh_min_speed(), cfg.t_sh_max_speed()),
            mode: OperatingMode::M8,
            t_sh_ref: cfg.t_sh_min,
            loop_product_3: cfg.c33.kp * cfg.k33,
            ua_secondary: plant.tank.ua_secondary,
            cp_secondary: plant.secondary.cp,
            dt_discharge_nominal: plant.nominal.t_sec_in - plant.pcm.t_lat,
            last_flows: FlowCommands::default(),
            cfg: cfg.clone(),
        })
    }

    /// Local discharge-plant slope d|Q|/dm [W per kg/s] of the
    /// effectiveness exchange at flow `m`, evaluated at the nominal
    /// approach. Used to hold the discharge loop gain constant across the
    /// strongly saturating flow range.
    fn discharge_gain(&self, m: f64) -> f64 {
        let m = m.clamp(self.cfg.m_sec_min, self.cfg.m_sec_max);
        let c = m * self.cp_secondary;
        let x = self.ua_secondary / c;
        let slope = (1.0 - (-x).exp()) - x * (-x).exp();
        (self.cp_secondary * self.dt_discharge_nominal * slope).max(1.0)
    }

    /// Mode from the reference pattern, resetting the loops that fall
    /// inactive on a transition.
    pub fn mode_logic(&mut self, refs: &PowerReferences) -> OperatingMode {
        let dz = self.cfg.deadzone;
        let new_mode = OperatingMode::from_flags(
            refs.q_e_sec.abs() > dz,
            refs.q_tes.abs() > dz,
            refs.q_tes_sec.abs() > dz,
        );
        if new_mode != self.mode {
            if !new_mode.chamber_active() {
                self.c11.reset();
                self.c_m_e.reset();
            }
            if !new_mode.charge_active() {
                self.c22.reset();
                self.c_m_tes.reset();
            }
            if !new_mode.discharge_active() {
                self.c33.reset();
            }
            if !new_mode.compressor_on() {
                self.c_tsh.reset();
            }
            self.mode = new_mode;
        }
        new_mode
    }

    /// Superheat supervision: the compressor runs as slow as possible and
    /// speeds up only when the superheat would drop under the minimum.
    pub fn tsh_supervisor_step(&mut self, t_sh_meas: f64, dt: f64) -> f64 {
        if !self.mode.compressor_on() {
            return 0.0;
        }
        self.t_sh_ref = self.cfg.t_sh_min;
        // error sign: too little superheat -> positive error -> speed up
        self.c_tsh.step(self.t_sh_ref, t_sh_meas, dt)
    }

    /// Decoupled power control: PI outputs of the two refrigerant channels
    /// pass through the decoupler to become flow references; the discharge
    /// channel drives the secondary flow directly.
    pub fn power_control_step(
        &mut self,
        refs: &PowerReferences,
        meas: &CoolingPowers,
        dt: f64,
    ) -> FlowCommands {
        let v1 = if self.mode.chamber_active() {
            self.c11.step(refs.q_e_sec, meas.q_e_sec, dt)
        } else {
            0.0
        };
        let v2 = if self.mode.charge_active() {
            self.c22.step(refs.q_tes, meas.q_tes, dt)
        } else {
            0.0
        };
        let mixed = self.decoupler.mix([v1, v2]);
        let m_e_ref = if self.mode.chamber_active() {
            mixed[0].clamp(0.0, self.cfg.flow_max)
        } else {
            0.0
        };
        let m_tes_ref = if self.mode.charge_active() {
            mixed[1].clamp(0.0, self.cfg.flow_max)
        } else {
            0.0
        };
        let m_tes_sec = if self.mode.discharge_active() {
            self.c33.kp = self.loop_product_3 / self.discharge_gain(self.last_flows.m_tes_sec);
            self.c33.step(refs.q_tes_sec, meas.q_tes_sec, dt)
        } else {
            0.0
        };
        self.last_flows = FlowCommands {
            m_e_ref,
            m_tes_ref,
            m_tes_sec,
        };
        self.last_flows
    }

    pub fn last_flows(&self) -> FlowCommands {
        self.last_flows
    }
}

impl ControlConfig {
    fn t_sh_min_speed(&self) -> f64 {
        30.0
    }
    fn t_sh_max_speed(&self) -> f64 {
        50.0
    }
}

/// Cascade flow loop of one expansion valve: inverse-valve feedforward plus
/// PI trim on the flow error, clamped to the controllable opening range.
#[allow(clippy::too_many_arguments)]
pub fn valve_cascade_step(
    ctl: &mut PiController,
    valve: &ValveParams,
    m_ref: f64,
    m_meas: f64,
    p_up: f64,
    rho_up: f64,
    p_down: f64,
    dt: f64,
    use_feedforward: bool,
) -> f64 {
    if m_ref <= 0.0 {
        ctl.reset();
        return 0.0;
    }
    let a_ff = if use_feedforward {
        valve_opening_for_flow(valve.c_v, m_ref, p_up, rho_up, p_down)
    } else {
        0.0
    };
    let trim = ctl.step(m_ref, m_meas, dt);
    (a_ff + trim).clamp(valve.a_min, valve.a_max)
}
