//! Plant parameter set with calibrated defaults and TOML overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pcm_tank::{PcmCurve, TesGeometry};
use crate::thermo::{FluidModel, SimpleFluid};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Thermo(#[from] crate::thermo::ThermoError),
}

/// Expansion-valve coefficient; both valves share one sizing.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ValveParams {
    /// Orifice coefficient [kg/s per sqrt(kg/m3 Pa)] at full opening.
    pub c_v: f64,
    /// Controllable opening range [%].
    pub a_min: f64,
    pub a_max: f64,
}

impl Default for ValveParams {
    fn default() -> Self {
        // c_v sized so that 90 % opening at the nominal pressure lift
        // (15 bar condensing, 1 bar suction, subcooled liquid upstream)
        // passes 10 g/s.
        Self {
            c_v: 2.8866e-7,
            a_min: 10.0,
            a_max: 90.0,
        }
    }
}

/// Volumetric compressor with fixed efficiencies.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct CompressorParams {
    /// Displacement [m3 per revolution-equivalent]; flow = eta_v * v_disp * N * rho.
    pub v_disp: f64,
    /// Volumetric efficiency [-].
    pub eta_v: f64,
    /// Isentropic efficiency [-].
    pub eta_is: f64,
    /// Speed range [Hz].
    pub n_min: f64,
    pub n_max: f64,
}

impl Default for CompressorParams {
    fn default() -> Self {
        Self {
            v_disp: 4.0e-5,
            eta_v: 0.85,
            eta_is: 0.70,
            n_min: 30.0,
            n_max: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct EvaporatorParams {
    /// Overall conductance [W/K] split across the boiling and superheat zones.
    pub ua: f64,
}

impl Default for EvaporatorParams {
    fn default() -> Self {
        Self { ua: 220.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct CondenserParams {
    /// Internal refrigerant volume [m3].
    pub volume: f64,
    /// Conductance to ambient air [W/K].
    pub ua: f64,
    /// Outlet subcooling [K].
    pub subcooling: f64,
}

impl Default for CondenserParams {
    fn default() -> Self {
        Self {
            volume: 22.0e-3,
            ua: 120.0,
            subcooling: 2.0,
        }
    }
}

/// One PI parameter pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PiGains {
    pub kp: f64,
    pub ti: f64,
}

/// Controller parameters. The power-loop gains are scaled against the
/// identified diagonal plant gains so the loop shape carries over when the
/// plant calibration changes (see the `calibrate` subcommand).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ControlConfig {
    /// Identified 2x2 static gain block of the refrigerant power channels
    /// [W per kg/s]: rows (Q_e_sec, Q_tes), columns (m_e, m_tes), absolute
    /// powers.
    pub k_hat: [[f64; 2]; 2],
    /// Identified secondary-channel gain [W per kg/s].
    pub k33: f64,
    /// Dominant time constant [s] of the power channels.
    pub tau_dp: f64,
    /// Lead-zero time constant [s] of the diagonal channels.
    pub tau_z: f64,
    /// Evaporator power PI (flow command per W of error).
    pub c11: PiGains,
    /// Charge power PI.
    pub c22: PiGains,
    /// Discharge power PI.
    pub c33: PiGains,
    /// Valve-cascade flow PIs [% per kg/s].
    pub c_m_e: PiGains,
    pub c_m_tes: PiGains,
    /// Superheat PI [Hz per K].
    pub c_tsh: PiGains,
    /// Minimum superheat [K] the supervisor holds.
    pub t_sh_min: f64,
    /// Reference dead zone [W]: a power is active when |ref| exceeds it.
    pub deadzone: f64,
    /// Virtual refrigerant-flow command range [kg/s].
    pub flow_min: f64,
    pub flow_max: f64,
    /// Secondary-flow command range [kg/s].
    pub m_sec_min: f64,
    pub m_sec_max: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            // Step-identified around the nominal all-powers operating point
            // (see the `calibrate` subcommand, which regenerates this block).
            k_hat: [[1.042020e5, -8.457908e3], [-6.0061e3, 9.99038e4]],
            k33: 3.932073e2,
            tau_dp: 58.43,
            tau_z: 62.91,
            // Power-loop proportional gains preserve the designed loop-gain
            // products on the identified diagonal plant; integral times are
            // set for the 5 s control period.
            c11: PiGains {
                kp: 2.169856e-6,
                ti: 7.5,
            },
            c22: PiGains {
                kp: 2.514678e-6,
                ti: 7.5,
            },
            c33: PiGains {
                kp: 7.629564e-4,
                ti: 7.5,
            },
            c_m_e: PiGains { kp: 1.0e3, ti: 1.0 },
            c_m_tes: PiGains { kp: 1.0e3, ti: 1.0 },
            c_tsh: PiGains { kp: 0.3, ti: 6.0 },
            t_sh_min: 2.0,
            deadzone: 1.0,
            flow_min: 0.0,
            flow_max: 0.011,
            m_sec_min: 0.050,
            m_sec_max: 0.440,
        }
    }
}

/// Boundary conditions that stay fixed unless a scenario overrides them.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct NominalConditions {
    /// Condenser-side ambient temperature [K].
    pub t_amb: f64,
    /// Tank surroundings temperature [K].
    pub t_surr: f64,
    /// Chamber secondary temperature entering evaporator and tank [K].
    pub t_sec_in: f64,
    /// Chamber pump flow through the evaporator [kg/s] (not manipulated).
    pub m_e_sec: f64,
}

impl Default for NominalConditions {
    fn default() -> Self {
        Self {
            t_amb: 293.15,
            t_surr: 293.15,
            t_sec_in: 253.15,
            m_e_sec: 0.30,
        }
    }
}

fn default_tank_geometry() -> TesGeometry {
    TesGeometry {
        n_pcm: 500,
        n_lay: 10,
        radius: 0.007,
        length: 0.8,
        rho_pcm: 1300.0,
        k_solid: 2.5,
        k_liquid: 1.2,
        m_int: 45.0,
        c_int: 2000.0,
        ua_refrigerant: 200.0,
        ua_flow_exponent: 0.8,
        m_flow_ref: 0.010,
        ua_secondary: 150.0,
        ua_ambient: 2.0,
        ua_film_pcm: 19.0,
        approach: 0.0,
    }
}

fn default_pcm_curve() -> PcmCurve {
    PcmCurve {
        h_lat_minus: 1.0e5,
        h_lat: 2.0e5,
        t_lat: 244.15,
        c_solid: 2.0e3,
        c_liquid: 2.0e3,
    }
}

fn default_secondary() -> SimpleFluid {
    SimpleFluid {
        cp: 3300.0,
        rho: 1050.0,
    }
}

/// Full plant parameter set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PlantConfig {
    /// Optional path to a refrigerant table; the embedded R404A-class table
    /// is used when absent.
    pub refrigerant_table: Option<String>,
    pub secondary: SimpleFluid,
    pub tank: TesGeometry,
    pub pcm: PcmCurve,
    pub valve: ValveParams,
    pub compressor: CompressorParams,
    pub evaporator: EvaporatorParams,
    pub condenser: CondenserParams,
    pub control: ControlConfig,
    pub nominal: NominalConditions,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            refrigerant_table: None,
            secondary: default_secondary(),
            tank: default_tank_geometry(),
            pcm: default_pcm_curve(),
            valve: ValveParams::default(),
            compressor: CompressorParams::default(),
            evaporator: EvaporatorParams::default(),
            condenser: CondenserParams::default(),
            control: ControlConfig::default(),
            nominal: NominalConditions::default(),
        }
    }
}

impl PlantConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Instantiates the refrigerant model this configuration names.
    pub fn refrigerant(&self) -> Result<FluidModel, ConfigError> {
        match &self.refrigerant_table {
            None => Ok(FluidModel::default_refrigerant()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok(FluidModel::from_table_text(&text)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PlantConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = PlantConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let cfg = PlantConfig::from_toml_str("[condenser]\nua = 99.0\n").unwrap();
        assert_eq!(cfg.condenser.ua, 99.0);
        assert_eq!(cfg.evaporator.ua, PlantConfig::default().evaporator.ua);
    }

    #[test]
    fn valve_anchor_ten_grams_per_second() {
        // 90 % opening, 15 bar -> 1 bar, subcooled upstream liquid: 10 g/s.
        let v = ValveParams::default();
        let f = FluidModel::default_refrigerant();
        let sat = f.saturation(15.0e5).unwrap();
        let h_up = sat.h_liq - 1450.0 * 2.0;
        let rho = f.density_ph(15.0e5, h_up).unwrap();
        let m = v.c_v * 0.9 * (rho * (15.0e5 - 1.0e5)).sqrt();
        assert!((m - 0.010).abs() < 2.0e-4, "anchor flow {m}");
    }
}
