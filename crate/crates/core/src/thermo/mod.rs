//! Thermodynamic property provider for the working fluids.
//!
//! The refrigerant is described by a committed saturation table plus
//! constant-cp single-phase extensions on either side of the dome; the
//! secondary (brine) and intermediate fluids are constant-property liquids.
//! All property functions are pure and the model is immutable after load, so
//! it can be shared freely across threads.

pub mod correlations;
pub mod table;

use thiserror::Error;

pub use table::{SatRow, SaturationTable};

/// Committed knots for the default R404A-class refrigerant.
const DEFAULT_TABLE: &str = include_str!("../data/r404a.tsv");

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ThermoError {
    #[error("pressure {p:.1} Pa outside table range [{min:.1}, {max:.1}]")]
    PressureOutOfRange { p: f64, min: f64, max: f64 },
    #[error("temperature {t:.2} K outside table range [{min:.2}, {max:.2}]")]
    TemperatureOutOfRange { t: f64, min: f64, max: f64 },
    #[error("enthalpy {h:.0} J/kg outside model range [{min:.0}, {max:.0}] at P = {p:.1} Pa")]
    EnthalpyOutOfRange { p: f64, h: f64, min: f64, max: f64 },
    #[error("enthalpy {h:.0} J/kg is outside the two-phase dome at P = {p:.1} Pa")]
    NotTwoPhase { p: f64, h: f64 },
    #[error("fluid table line {line}: {reason}")]
    TableFormat { line: usize, reason: String },
}

/// Refrigerant state identified by the pressure / specific-enthalpy pair,
/// with temperature and vapour quality derived from the fluid model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoState {
    /// Pressure [Pa].
    pub p: f64,
    /// Specific enthalpy [J/kg].
    pub h: f64,
    /// Temperature [K].
    pub t: f64,
    /// Vapour quality [-]; `None` outside the two-phase dome.
    pub q: Option<f64>,
}

/// Phase region of a (P, h) point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    SubcooledLiquid,
    TwoPhase,
    SuperheatedVapour,
}

/// Table-backed refrigerant model with constant-cp single-phase extensions.
#[derive(Debug, Clone)]
pub struct FluidModel {
    table: SaturationTable,
    /// Liquid heat capacity [J/(kg K)] for the subcooled extension.
    pub cp_liq: f64,
    /// Vapour heat capacity [J/(kg K)] for the superheat extension.
    pub cp_vap: f64,
    /// Specific gas constant [J/(kg K)] for superheated vapour density.
    pub r_specific: f64,
    /// Maximum superheat [K] above saturation accepted before a range error.
    pub max_superheat: f64,
    /// Maximum subcooling [K] below saturation accepted before a range error.
    pub max_subcool: f64,
}

impl FluidModel {
    /// Loads the committed R404A-class default table.
    pub fn default_refrigerant() -> Self {
        Self::from_table_text(DEFAULT_TABLE).expect("embedded table is valid")
    }

    pub fn from_table_text(text: &str) -> Result<Self, ThermoError> {
        Ok(Self {
            table: SaturationTable::parse(text)?,
            cp_liq: correlations::CP_LIQ,
            cp_vap: correlations::CP_VAP,
            r_specific: correlations::R_SPECIFIC,
            max_superheat: 140.0,
            max_subcool: 60.0,
        })
    }

    pub fn name(&self) -> &str {
        &self.table.name
    }

    pub fn p_min(&self) -> f64 {
        self.table.p_min()
    }

    pub fn p_max(&self) -> f64 {
        self.table.p_max()
    }

    /// Saturation properties at `p`.
    pub fn saturation(&self, p: f64) -> Result<SatRow, ThermoError> {
        self.table.at_pressure(p)
    }

    /// Saturation temperature [K]; strictly increasing in pressure.
    pub fn sat_temperature(&self, p: f64) -> Result<f64, ThermoError> {
        Ok(self.table.at_pressure(p)?.t_sat)
    }

    /// Saturation pressure [Pa] at temperature [K].
    pub fn sat_pressure(&self, t: f64) -> Result<f64, ThermoError> {
        self.table.p_at_temperature(t)
    }

    fn h_bounds(&self, sat: &SatRow) -> (f64, f64) {
        (
            sat.h_liq - self.cp_liq * self.max_subcool,
            sat.h_vap + self.cp_vap * self.max_superheat,
        )
    }

    /// Phase region of (P, h). Errors when h leaves the model floor/ceiling.
    pub fn phase_ph(&self, p: f64, h: f64) -> Result<Phase, ThermoError> {
        let sat = self.table.at_pressure(p)?;
        let (h_floor, h_ceil) = self.h_bounds(&sat);
        if !h.is_finite() || h < h_floor || h > h_ceil {
            return Err(ThermoError::EnthalpyOutOfRange {
                p,
                h,
                min: h_floor,
                max: h_ceil,
            });
        }
        Ok(if h < sat.h_liq {
            Phase::SubcooledLiquid
        } else if h > sat.h_vap {
            Phase::SuperheatedVapour
        } else {
            Phase::TwoPhase
        })
    }

    /// Temperature [K] at (P, h): the two-phase isotherm inside the dome,
    /// constant-cp inversion outside it.
    pub fn temperature_ph(&self, p: f64, h: f64) -> Result<f64, ThermoError> {
        let sat = self.table.at_pressure(p)?;
        Ok(match self.phase_ph(p, h)? {
            Phase::TwoPhase => sat.t_sat,
            Phase::SuperheatedVapour => sat.t_sat + (h - sat.h_vap) / self.cp_vap,
            Phase::SubcooledLiquid => sat.t_sat + (h - sat.h_liq) / self.cp_liq,
        })
    }

    /// Vapour quality from the lever rule; errors outside the dome so the
    /// caller must branch on phase explicitly.
    pub fn quality_ph(&self, p: f64, h: f64) -> Result<f64, ThermoError> {
        let sat = self.table.at_pressure(p)?;
        if h < sat.h_liq || h > sat.h_vap {
            return Err(ThermoError::NotTwoPhase { p, h });
        }
        Ok((h - sat.h_liq) / (sat.h_vap - sat.h_liq))
    }

    /// Specific enthalpy [J/kg] at (P, q), q in [0, 1].
    pub fn enthalpy_pq(&self, p: f64, q: f64) -> Result<f64, ThermoError> {
        let sat = self.table.at_pressure(p)?;
        if !(0.0..=1.0).contains(&q) {
            return Err(ThermoError::NotTwoPhase {
                p,
                h: sat.h_liq + q * (sat.h_vap - sat.h_liq),
            });
        }
        Ok(sat.h_liq + q * (sat.h_vap - sat.h_liq))
    }

    /// Specific enthalpy [J/kg] of single-phase fluid at (P, T). Inside the
    /// dome a temperature does not identify a state; `t` at the saturation
    /// temperature returns saturated vapour.
    pub fn enthalpy_pt(&self, p: f64, t: f64) -> Result<f64, ThermoError> {
        let sat = self.table.at_pressure(p)?;
        let h = if t >= sat.t_sat {
            sat.h_vap + self.cp_vap * (t - sat.t_sat)
        } else {
            sat.h_liq + self.cp_liq * (t - sat.t_sat)
        };
        // reuse the range check
        self.phase_ph(p, h)?;
        Ok(h)
    }

    /// Density [kg/m3] at (P, h).
    pub fn density_ph(&self, p: f64, h: f64) -> Result<f64, ThermoError> {
        let sat = self.table.at_pressure(p)?;
        Ok(match self.phase_ph(p, h)? {
            Phase::TwoPhase => {
                let q = (h - sat.h_liq) / (sat.h_vap - sat.h_liq);
                let v = (1.0 - q) / sat.rho_liq + q / sat.rho_vap;
                1.0 / v
            }
            Phase::SuperheatedVapour => {
                let t = sat.t_sat + (h - sat.h_vap) / self.cp_vap;
                let z = correlations::z_factor(p);
                p / (z * self.r_specific * t)
            }
            Phase::SubcooledLiquid => {
                let t = sat.t_sat + (h - sat.h_liq) / self.cp_liq;
                correlations::rho_liq(t)
            }
        })
    }

    /// Specific entropy [J/(kg K)] at (P, h): lever rule inside the dome,
    /// constant-cp `s + cp ln(T/T_sat)` outside it.
    pub fn entropy_ph(&self, p: f64, h: f64) -> Result<f64, ThermoError> {
        let sat = self.table.at_pressure(p)?;
        Ok(match self.phase_ph(p, h)? {
            Phase::TwoPhase => {
                let q = (h - sat.h_liq) / (sat.h_vap - sat.h_liq);
                sat.s_liq + q * (sat.s_vap - sat.s_liq)
            }
            Phase::SuperheatedVapour => {
                let t = sat.t_sat + (h - sat.h_vap) / self.cp_vap;
                sat.s_vap + self.cp_vap * (t / sat.t_sat).ln()
            }
            Phase::SubcooledLiquid => {
                let t = sat.t_sat + (h - sat.h_liq) / self.cp_liq;
                sat.s_liq + self.cp_liq * (t / sat.t_sat).ln()
            }
        })
    }

    /// Specific enthalpy [J/kg] reached from `state` by an isentropic path to
    /// `p_target`.
    pub fn isentropic_enthalpy(&self, p_target: f64, state: &ThermoState) -> Result<f64, ThermoError> {
        let s = self.entropy_ph(state.p, state.h)?;
        let sat = self.table.at_pressure(p_target)?;
        let h = if s > sat.s_vap {
            let t = sat.t_sat * ((s - sat.s_vap) / self.cp_vap).exp();
            sat.h_vap + self.cp_vap * (t - sat.t_sat)
        } else if s < sat.s_liq {
            let t = sat.t_sat * ((s - sat.s_liq) / self.cp_liq).exp();
            sat.h_liq + self.cp_liq * (t - sat.t_sat)
        } else {
            let q = (s - sat.s_liq) / (sat.s_vap - sat.s_liq);
            sat.h_liq + q * (sat.h_vap - sat.h_liq)
        };
        self.phase_ph(p_target, h)?;
        Ok(h)
    }

    /// Full state from the (P, h) pair.
    pub fn state_ph(&self, p: f64, h: f64) -> Result<ThermoState, ThermoError> {
        let t = self.temperature_ph(p, h)?;
        let q = self.quality_ph(p, h).ok();
        Ok(ThermoState { p, h, t, q })
    }
}

/// Constant-property liquid (secondary brine, intermediate fluid).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimpleFluid {
    /// Heat capacity [J/(kg K)].
    pub cp: f64,
    /// Density [kg/m3].
    pub rho: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fluid() -> FluidModel {
        FluidModel::default_refrigerant()
    }

    #[test]
    fn sat_temperature_matches_generator_at_knot() {
        // Knot values are exact: interpolation must return them untouched.
        let f = fluid();
        for row in f.table.rows() {
            let t = f.sat_temperature(row.p).unwrap();
            assert_eq!(t, row.t_sat);
        }
    }

    #[test]
    fn sat_temperature_monotone() {
        let f = fluid();
        let n = 400;
        let (pmin, pmax) = (f.p_min(), f.p_max());
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=n {
            let p = pmin + (pmax - pmin) * i as f64 / n as f64;
            let t = f.sat_temperature(p).unwrap();
            assert!(t > prev);
            prev = t;
        }
    }

    #[test]
    fn sat_temperature_against_correlation() {
        // Mid-knot interpolation error vs the generating correlation stays
        // small (the knot spacing was chosen for < 0.5 % error in h).
        let f = fluid();
        let rows = f.table.rows();
        for w in rows.windows(2) {
            let p = 0.5 * (w[0].p + w[1].p);
            let t = f.sat_temperature(p).unwrap();
            assert!((t - correlations::t_sat(p)).abs() < 0.05);
            let sat = f.saturation(p).unwrap();
            let h_ref = correlations::h_vap(correlations::t_sat(p));
            assert!((sat.h_vap - h_ref).abs() / h_ref < 5e-3);
            let hl_ref = correlations::h_liq(correlations::t_sat(p));
            assert!((sat.h_liq - hl_ref).abs() / hl_ref < 5e-3);
        }
    }

    #[test]
    fn out_of_range_pressure_is_error() {
        let f = fluid();
        assert!(matches!(
            f.sat_temperature(f.p_min() * 0.5),
            Err(ThermoError::PressureOutOfRange { .. })
        ));
        assert!(matches!(
            f.sat_temperature(f.p_max() * 2.0),
            Err(ThermoError::PressureOutOfRange { .. })
        ));
    }

    #[test]
    fn temperature_ph_dome_and_superheat() {
        let f = fluid();
        let p = 1.0e5;
        let sat = f.saturation(p).unwrap();
        // dome boundary
        assert!((f.temperature_ph(p, sat.h_vap).unwrap() - sat.t_sat).abs() < 1e-9);
        // constant-cp superheat: +5 K
        let h = sat.h_vap + f.cp_vap * 5.0;
        assert!((f.temperature_ph(p, h).unwrap() - (sat.t_sat + 5.0)).abs() < 1e-9);
        // mid-dome isotherm
        let h_mid = 0.5 * (sat.h_liq + sat.h_vap);
        assert!((f.temperature_ph(p, h_mid).unwrap() - sat.t_sat).abs() < 1e-9);
    }

    #[test]
    fn quality_lever_rule() {
        let f = fluid();
        let p = 2.3e5;
        let sat = f.saturation(p).unwrap();
        assert_eq!(f.quality_ph(p, sat.h_liq).unwrap(), 0.0);
        assert_eq!(f.quality_ph(p, sat.h_vap).unwrap(), 1.0);
        let mid = 0.5 * (sat.h_liq + sat.h_vap);
        assert!((f.quality_ph(p, mid).unwrap() - 0.5).abs() < 1e-12);
        assert!(f.quality_ph(p, sat.h_vap + 1.0).is_err());
        assert!(f.quality_ph(p, sat.h_liq - 1.0).is_err());
    }

    #[test]
    fn enthalpy_pq_endpoints() {
        let f = fluid();
        let p = 5.0e5;
        let sat = f.saturation(p).unwrap();
        assert_eq!(f.enthalpy_pq(p, 1.0).unwrap(), sat.h_vap);
        assert_eq!(f.enthalpy_pq(p, 0.0).unwrap(), sat.h_liq);
    }

    #[test]
    fn round_trip_pt_ph() {
        // (P,T) -> h -> T round trip within 0.01 K on a validation grid.
        let f = fluid();
        for i in 0..40 {
            let p = f.p_min() * 1.02 + (f.p_max() * 0.98 - f.p_min() * 1.02) * i as f64 / 39.0;
            let t_sat = f.sat_temperature(p).unwrap();
            for dt in [-20.0, -5.0, 5.0, 20.0, 60.0] {
                let t = t_sat + dt;
                let h = match f.enthalpy_pt(p, t) {
                    Ok(h) => h,
                    Err(_) => continue, // outside floor/ceiling at extreme knots
                };
                let t_back = f.temperature_ph(p, h).unwrap();
                assert!(
                    (t_back - t).abs() < 0.01,
                    "round-trip failed at P={p} dt={dt}"
                );
            }
        }
    }

    #[test]
    fn isentropic_identity_and_compression() {
        let f = fluid();
        let p = 1.0e5;
        let sat = f.saturation(p).unwrap();
        let state = f.state_ph(p, sat.h_vap + f.cp_vap * 5.0).unwrap();
        // identity path
        let h_same = f.isentropic_enthalpy(p, &state).unwrap();
        assert!((h_same - state.h).abs() < 50.0);
        // compression raises enthalpy
        let h_hi = f.isentropic_enthalpy(1.5e6, &state).unwrap();
        assert!(h_hi > state.h);
        // entropy is conserved along the path
        let s0 = f.entropy_ph(p, state.h).unwrap();
        let s1 = f.entropy_ph(1.5e6, h_hi).unwrap();
        assert!((s1 - s0).abs() < 1e-6);
    }

    #[test]
    fn density_decreases_across_dome() {
        let f = fluid();
        let p = 3.0e5;
        let sat = f.saturation(p).unwrap();
        let rho_l = f.density_ph(p, sat.h_liq - 1000.0).unwrap();
        let rho_m = f.density_ph(p, 0.5 * (sat.h_liq + sat.h_vap)).unwrap();
        let rho_v = f.density_ph(p, sat.h_vap + 1000.0).unwrap();
        assert!(rho_l > rho_m && rho_m > rho_v);
        assert!(rho_v > 0.0);
    }
}
