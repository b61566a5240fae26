//! Reduced-order condenser model carrying the cycle's dominant dynamics.
//!
//! The condenser is a lumped control volume holding refrigerant charge and
//! enthalpy-energy. The condensing pressure is recovered from the pair
//! (mean density, mean enthalpy) through the property model, the outlet
//! leaves with a fixed subcooling, and heat rejection follows
//! `UA_c (T_sat(P_c) - T_amb)`. Everything else in the cycle is static, so
//! this single state pair sets the dominant time constant.

use thiserror::Error;

use crate::config::CondenserParams;
use crate::thermo::{FluidModel, ThermoError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CondenserError {
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error("condenser state left the property range: mean density {rho:.1} kg/m3, mean enthalpy {h:.0} J/kg")]
    StateOutOfRange { rho: f64, h: f64 },
}

/// Lumped condenser state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondenserState {
    /// Refrigerant charge [kg].
    pub mass: f64,
    /// Enthalpy-energy of the charge [J].
    pub energy: f64,
}

impl CondenserState {
    /// State in equilibrium at `p_c` with the given mean vapour quality.
    pub fn at_pressure(
        params: &CondenserParams,
        fluid: &FluidModel,
        p_c: f64,
        mean_quality: f64,
    ) -> Result<Self, CondenserError> {
        let sat = fluid.saturation(p_c)?;
        let h_mean = sat.h_liq + mean_quality * (sat.h_vap - sat.h_liq);
        let rho = fluid.density_ph(p_c, h_mean)?;
        let mass = rho * params.volume;
        Ok(Self {
            mass,
            energy: mass * h_mean,
        })
    }

    /// Mean specific enthalpy [J/kg] of the charge.
    pub fn mean_enthalpy(&self) -> f64 {
        self.energy / self.mass
    }

    /// Condensing pressure [Pa]: the pressure at which the property model
    /// reproduces the stored (density, enthalpy) pair. The density at fixed
    /// enthalpy rises monotonically with pressure, so bisection suffices.
    pub fn pressure(
        &self,
        params: &CondenserParams,
        fluid: &FluidModel,
    ) -> Result<f64, CondenserError> {
        let rho_target = self.mass / params.volume;
        let h = self.mean_enthalpy();
        let out_of_range = || CondenserError::StateOutOfRange { rho: rho_target, h };
        let mut lo = fluid.p_min() * (1.0 + 1.0e-9);
        let mut hi = fluid.p_max() * (1.0 - 1.0e-9);
        let rho_lo = fluid.density_ph(lo, h).map_err(|_| out_of_range())?;
        let rho_hi = fluid.density_ph(hi, h).map_err(|_| out_of_range())?;
        if rho_target < rho_lo || rho_target > rho_hi {
            return Err(out_of_range());
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let rho = fluid.density_ph(mid, h).map_err(|_| out_of_range())?;
            if rho < rho_target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1.0e-6 * mid {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Outlet specific enthalpy [J/kg]: saturated liquid minus the configured
    /// subcooling.
    pub fn outlet_enthalpy(
        &self,
        params: &CondenserParams,
        fluid: &FluidModel,
        cp_liq: f64,
    ) -> Result<f64, CondenserError> {
        let p_c = self.pressure(params, fluid)?;
        let sat = fluid.saturation(p_c)?;
        Ok(sat.h_liq - cp_liq * params.subcooling)
    }

    /// Heat rejected to ambient [W] at the current pressure.
    pub fn heat_rejection(
        &self,
        params: &CondenserParams,
        fluid: &FluidModel,
        t_amb: f64,
    ) -> Result<f64, CondenserError> {
        let p_c = self.pressure(params, fluid)?;
        let t_sat = fluid.sat_temperature(p_c)?;
        Ok(params.ua * (t_sat - t_amb))
    }
}

/// Advances the lumped balances one fast step: charge integrates the flow
/// mismatch, energy integrates inflow enthalpy minus outflow and rejection.
#[allow(clippy::too_many_arguments)]
pub fn step_fast(
    state: &CondenserState,
    params: &CondenserParams,
    fluid: &FluidModel,
    m_in: f64,
    h_c_in: f64,
    m_out: f64,
    t_amb: f64,
    dt: f64,
) -> Result<CondenserState, CondenserError> {
    let p_c = state.pressure(params, fluid)?;
    let sat = fluid.saturation(p_c)?;
    let h_out = sat.h_liq - fluid.cp_liq * params.subcooling;
    let q_c = params.ua * (sat.t_sat - t_amb);
    let next = CondenserState {
        mass: state.mass + dt * (m_in - m_out),
        energy: state.energy + dt * (m_in * h_c_in - m_out * h_out - q_c),
    };
    // validate the new state maps back to a pressure
    next.pressure(params, fluid)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (CondenserParams, FluidModel) {
        (
            crate::config::PlantConfig::default().condenser,
            FluidModel::default_refrigerant(),
        )
    }

    #[test]
    fn pressure_recovers_initial_state() {
        let (params, fluid) = setup();
        for p in [8.0e5, 12.0e5, 16.0e5] {
            let st = CondenserState::at_pressure(&params, &fluid, p, 0.35).unwrap();
            let p_back = st.pressure(&params, &fluid).unwrap();
            assert!((p_back - p).abs() / p < 1e-5);
        }
    }

    #[test]
    fn steady_state_is_fixed_point_of_first_law() {
        // with inflow = outflow and the inflow enthalpy balancing rejection,
        // the state stops moving: Q_c = m (h_in - h_out)
        let (params, fluid) = setup();
        let st = CondenserState::at_pressure(&params, &fluid, 14.0e5, 0.35).unwrap();
        let m = 0.006;
        let h_out = st.outlet_enthalpy(&params, &fluid, fluid.cp_liq).unwrap();
        let q_c = st.heat_rejection(&params, &fluid, 293.15).unwrap();
        let h_in = h_out + q_c / m;
        let next = step_fast(&st, &params, &fluid, m, h_in, m, 293.15, 1.0).unwrap();
        assert!((next.mass - st.mass).abs() < 1e-12);
        assert!((next.energy - st.energy).abs() < 1e-6 * st.energy.abs());
    }

    #[test]
    fn inflow_step_raises_pressure_monotonically() {
        let (params, fluid) = setup();
        let mut st = CondenserState::at_pressure(&params, &fluid, 12.0e5, 0.35).unwrap();
        let m0 = 0.005;
        let h_out = st.outlet_enthalpy(&params, &fluid, fluid.cp_liq).unwrap();
        let q_c = st.heat_rejection(&params, &fluid, 293.15).unwrap();
        let h_in = h_out + q_c / m0;
        // step the inflow up while the drain stays matched to the inflow:
        // the extra enthalpy advected in pushes the pressure up
        let mut prev_p = st.pressure(&params, &fluid).unwrap();
        for _ in 0..120 {
            st = step_fast(&st, &params, &fluid, 0.007, h_in, 0.007, 293.15, 1.0).unwrap();
            let p = st.pressure(&params, &fluid).unwrap();
            assert!(p >= prev_p - 1.0);
            prev_p = p;
        }
        assert!(prev_p > 12.0e5);
    }

    #[test]
    fn relaxation_time_has_tens_of_seconds_scale() {
        // free relaxation toward ambient equilibrium behaves first-order;
        // the 63 % time must sit in the tens of seconds
        let (params, fluid) = setup();
        let mut st = CondenserState::at_pressure(&params, &fluid, 15.0e5, 0.35).unwrap();
        let m = 0.006;
        let h_out0 = st.outlet_enthalpy(&params, &fluid, fluid.cp_liq).unwrap();
        let q0 = st.heat_rejection(&params, &fluid, 293.15).unwrap();
        // start at equilibrium, then drop the inflow enthalpy by 10 kJ/kg
        let h_in = h_out0 + q0 / m - 1.0e4;
        let p0 = st.pressure(&params, &fluid).unwrap();
        let mut t63 = None;
        let mut p_final = p0;
        for i in 0..2000 {
            st = step_fast(&st, &params, &fluid, m, h_in, m, 293.15, 1.0).unwrap();
            p_final = st.pressure(&params, &fluid).unwrap();
            if i == 1999 {
                break;
            }
            if t63.is_none() {
                let _ = p_final;
            }
        }
        // second pass to find the 63 % crossing against the settled value
        let mut st2 = CondenserState::at_pressure(&params, &fluid, 15.0e5, 0.35).unwrap();
        for i in 0..2000usize {
            st2 = step_fast(&st2, &params, &fluid, m, h_in, m, 293.15, 1.0).unwrap();
            let p = st2.pressure(&params, &fluid).unwrap();
            if t63.is_none() && (p - p0).abs() >= 0.632 * (p_final - p0).abs() {
                t63 = Some(i as f64 + 1.0);
                break;
            }
        }
        let tau = t63.expect("response must cross 63 %");
        assert!(tau > 5.0 && tau < 200.0, "tau = {tau}");
    }
}
