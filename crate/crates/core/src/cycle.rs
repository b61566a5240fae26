//! Steady-state models of the fast cycle components and the fixed-point
//! solver that couples them.
//!
//! At every fast instant the compressor, both expansion valves, the
//! evaporator and the tank's refrigerant side are static; the only unknown is
//! the suction pressure. The solver drives the flow mismatch between the
//! compressor draw and the valve feeds to zero and hands the condenser its
//! boundary conditions (total flow and discharge enthalpy).

use thiserror::Error;

use crate::config::PlantConfig;
use crate::pcm_tank::{self, TankError};
use crate::thermo::{FluidModel, Phase, ThermoError};

/// Flow-mismatch tolerance [kg/s] for an accepted solution.
pub const PSI_TOL: f64 = 1.0e-7;
const MAX_SUBSTITUTION_ITER: usize = 30;
const MAX_BISECTION_ITER: usize = 90;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StaticsError {
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Tank(#[from] TankError),
    #[error("junction undefined: both branch flows are zero")]
    JunctionUndefined,
    #[error("suction pressure fell below the property range (mismatch {psi:.3e} kg/s at the floor)")]
    SuctionBelowRange { psi: f64 },
    #[error("requested flows exceed compressor capacity (mismatch {psi:.3e} kg/s at the ceiling)")]
    CapacityExceeded { psi: f64 },
    #[error("statics iteration failed to converge; last residual {psi:.3e} kg/s")]
    NoConvergence { psi: f64 },
    #[error("compressor inlet is two-phase (wet compression)")]
    WetCompression,
    #[error("no admissible suction interval: condensing pressure {p_c:.0} Pa too low")]
    NoSuctionInterval { p_c: f64 },
}

/// Manipulated inputs of the fast cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleInputs {
    /// Compressor speed [Hz].
    pub n_comp: f64,
    /// Evaporator expansion-valve opening [%].
    pub a_v: f64,
    /// Tank expansion-valve opening [%].
    pub a_v_tes: f64,
    /// Secondary flow through the tank [kg/s].
    pub m_tes_sec: f64,
    /// Secondary flow through the evaporator [kg/s].
    pub m_e_sec: f64,
    /// Chamber secondary temperature [K].
    pub t_sec_in: f64,
}

/// How the refrigerant branches are driven: by physical valve openings or by
/// virtual flow commands (the valve model is then inverted to report the
/// openings that realise them).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchDrive {
    Valves { a_v: f64, a_v_tes: f64 },
    Flows { m_e: f64, m_tes: f64 },
}

/// Converged fast-scale solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOperatingPoint {
    /// Suction (evaporation) pressure [Pa].
    pub p_e: f64,
    /// Condensing pressure [Pa].
    pub p_c: f64,
    /// Branch and total refrigerant flows [kg/s].
    pub m_e: f64,
    pub m_tes: f64,
    pub m_total: f64,
    /// Branch outlet / junction / discharge enthalpies [J/kg].
    pub h_e_out: f64,
    pub h_tes_out: f64,
    pub h_comp_in: f64,
    pub h_comp_out: f64,
    pub h_c_in: f64,
    /// Superheat at the compressor intake [K] (zero inside the dome).
    pub t_sh: f64,
    /// Superheat continued linearly below the dome edge [K]: the enthalpy
    /// margin `(h - h_vap) / cp_vap` when the intake is two-phase. The
    /// supervisor regulates on this signal so it never saturates.
    pub t_sh_signed: f64,
    /// Cooling powers [W]; secondary-side signs (negative when the served
    /// fluid is cooled), tank-side sign for `q_tes`.
    pub q_e_sec: f64,
    pub q_tes: f64,
    pub q_tes_sec: f64,
    /// Compressor mechanical power [W].
    pub w_comp: f64,
    /// Valve openings [%] (echoed or inverted from flow commands).
    pub a_v: f64,
    pub a_v_tes: f64,
    /// Solver state.
    pub converged: bool,
    /// Final flow mismatch [kg/s].
    pub residual: f64,
    /// Compressor intake was two-phase at the solution.
    pub wet_compression: bool,
}

impl CycleOperatingPoint {
    /// All-zero point for the stopped cycle (no refrigerant circulating).
    pub fn stopped(p_c: f64, q_tes_sec: f64) -> Self {
        Self {
            p_e: p_c,
            p_c,
            m_e: 0.0,
            m_tes: 0.0,
            m_total: 0.0,
            h_e_out: 0.0,
            h_tes_out: 0.0,
            h_comp_in: 0.0,
            h_comp_out: 0.0,
            h_c_in: 0.0,
            t_sh: 0.0,
            t_sh_signed: 0.0,
            q_e_sec: 0.0,
            q_tes: 0.0,
            q_tes_sec,
            w_comp: 0.0,
            a_v: 0.0,
            a_v_tes: 0.0,
            converged: true,
            residual: 0.0,
            wet_compression: false,
        }
    }
}

/// Isenthalpic orifice flow [kg/s] through an expansion valve.
///
/// Returns zero with the back-flow flag set when the pressure gradient is
/// adverse.
pub fn valve_flow(c_v: f64, a_v: f64, p_up: f64, rho_up: f64, p_down: f64) -> (f64, bool) {
    if p_up <= p_down {
        return (0.0, true);
    }
    ((c_v * (a_v / 100.0) * (rho_up * (p_up - p_down)).sqrt()).max(0.0), false)
}

/// Opening [%] that realises `m_dot` at the current pressure lift; unclamped,
/// the caller decides whether an out-of-range opening is admissible.
pub fn valve_opening_for_flow(c_v: f64, m_dot: f64, p_up: f64, rho_up: f64, p_down: f64) -> f64 {
    if p_up <= p_down || m_dot <= 0.0 {
        return 0.0;
    }
    100.0 * m_dot / (c_v * (rho_up * (p_up - p_down)).sqrt())
}

/// Compressor result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressorOutput {
    pub m_dot: f64,
    pub h_out: f64,
    pub w_comp: f64,
}

fn compressor_eval(
    cfg: &PlantConfig,
    fluid: &FluidModel,
    n: f64,
    p_e: f64,
    p_c: f64,
    h_in: f64,
) -> Result<CompressorOutput, ThermoError> {
    if n <= 0.0 {
        return Ok(CompressorOutput {
            m_dot: 0.0,
            h_out: h_in,
            w_comp: 0.0,
        });
    }
    let c = &cfg.compressor;
    let rho = fluid.density_ph(p_e, h_in)?;
    let m_dot = c.eta_v * c.v_disp * n * rho;
    let h_out = if p_c <= p_e {
        h_in
    } else {
        let state = fluid.state_ph(p_e, h_in)?;
        let h_is = fluid.isentropic_enthalpy(p_c, &state)?;
        h_in + (h_is - h_in) / c.eta_is
    };
    Ok(CompressorOutput {
        m_dot,
        h_out,
        w_comp: m_dot * (h_out - h_in),
    })
}

/// Volumetric compressor with constant volumetric and isentropic
/// efficiencies. Errors on a two-phase intake; the superheat supervisor
/// exists to keep the plant away from that region.
pub fn compressor(
    cfg: &PlantConfig,
    fluid: &FluidModel,
    n: f64,
    p_e: f64,
    p_c: f64,
    h_in: f64,
) -> Result<CompressorOutput, StaticsError> {
    if n > 0.0 && fluid.phase_ph(p_e, h_in)? != Phase::SuperheatedVapour {
        return Err(StaticsError::WetCompression);
    }
    Ok(compressor_eval(cfg, fluid, n, p_e, p_c, h_in)?)
}

/// Evaporator result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaporatorOutput {
    pub h_out: f64,
    /// Secondary-side power [W], negative when the chamber fluid is cooled.
    pub q_e_sec: f64,
    pub t_sec_out: f64,
    pub no_driving_dt: bool,
}

/// Two-zone (boiling + superheat) effectiveness model of the evaporator
/// against the chamber secondary stream in counterflow. The area split is
/// found by bisection on the boiling-zone fraction.
pub fn evaporator_static(
    cfg: &PlantConfig,
    fluid: &FluidModel,
    m_e: f64,
    p_e: f64,
    h_in: f64,
    t_sec_in: f64,
    m_sec: f64,
) -> Result<EvaporatorOutput, ThermoError> {
    if m_e <= 0.0 || m_sec <= 0.0 {
        return Ok(EvaporatorOutput {
            h_out: h_in,
            q_e_sec: 0.0,
            t_sec_out: t_sec_in,
            no_driving_dt: false,
        });
    }
    let sat = fluid.saturation(p_e)?;
    let t_e = sat.t_sat;
    if t_sec_in <= t_e {
        return Ok(EvaporatorOutput {
            h_out: h_in,
            q_e_sec: 0.0,
            t_sec_out: t_sec_in,
            no_driving_dt: true,
        });
    }
    let ua = cfg.evaporator.ua;
    let c_sec = m_sec * cfg.secondary.cp;
    let c_ref = m_e * fluid.cp_vap;

    let superheat_zone = |ua_sh: f64| -> f64 {
        // counterflow effectiveness, refrigerant vapour is C_min in practice
        let c_min = c_ref.min(c_sec);
        let c_max = c_ref.max(c_sec);
        let cr = c_min / c_max;
        let ntu = ua_sh / c_min;
        let eff = if (1.0 - cr).abs() < 1e-9 {
            ntu / (1.0 + ntu)
        } else {
            let e = (-(ntu) * (1.0 - cr)).exp();
            (1.0 - e) / (1.0 - cr * e)
        };
        eff * c_min * (t_sec_in - t_e)
    };

    let needed = (m_e * (sat.h_vap - h_in)).max(0.0);
    let boiling_full = (1.0 - (-ua / c_sec).exp()) * c_sec * (t_sec_in - t_e);

    let (q_abs, h_out) = if boiling_full <= needed {
        // refrigerant leaves two-phase (or exactly saturated)
        (boiling_full, h_in + boiling_full / m_e)
    } else {
        // split the area: boiling zone takes fraction x, the superheat zone
        // preheats the secondary stream before it reaches the boiling zone
        let balance = |x: f64| -> (f64, f64) {
            let q_sh = superheat_zone(ua * (1.0 - x));
            let t_mid = t_sec_in - q_sh / c_sec;
            let q_tp = (1.0 - (-(ua * x) / c_sec).exp()) * c_sec * (t_mid - t_e);
            (q_tp, q_sh)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..48 {
            let mid = 0.5 * (lo + hi);
            let (q_tp, _) = balance(mid);
            if q_tp < needed {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        let (_, q_sh) = balance(x);
        (needed + q_sh, sat.h_vap + q_sh / m_e)
    };
    Ok(EvaporatorOutput {
        h_out,
        q_e_sec: -q_abs,
        t_sec_out: t_sec_in - q_abs / c_sec,
        no_driving_dt: false,
    })
}

/// Junction result: mixture enthalpy and intake superheat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JunctionOutput {
    pub h_comp_in: f64,
    pub t_sh: f64,
}

/// Mixing point where the evaporator and tank branches merge: flow-weighted
/// enthalpy, superheat measured against saturated vapour at the suction
/// pressure.
pub fn junction(
    fluid: &FluidModel,
    m_e: f64,
    h_e_out: f64,
    m_tes: f64,
    h_tes_out: f64,
    p_e: f64,
) -> Result<JunctionOutput, StaticsError> {
    let m_total = m_e + m_tes;
    if m_total <= 0.0 {
        return Err(StaticsError::JunctionUndefined);
    }
    let h_comp_in = (m_e * h_e_out + m_tes * h_tes_out) / m_total;
    let t_e = fluid.sat_temperature(p_e)?;
    let t_comp_in = fluid.temperature_ph(p_e, h_comp_in)?;
    Ok(JunctionOutput {
        h_comp_in,
        t_sh: t_comp_in - t_e,
    })
}

/// Everything evaluated at one trial suction pressure.
struct TrialPoint {
    m_e: f64,
    m_tes: f64,
    h_e_out: f64,
    h_tes_out: f64,
    q_e_sec: f64,
    q_tes: f64,
    h_comp_in: f64,
    t_sh: f64,
    comp: CompressorOutput,
    psi: f64,
}

/// Fixed boundary data of one statics solve.
pub struct StaticsContext<'a> {
    pub cfg: &'a PlantConfig,
    pub fluid: &'a FluidModel,
    /// Intermediate-fluid temperature [K] seen by the tank exchange.
    pub t_int: f64,
    /// Condensing pressure [Pa] and condenser outlet enthalpy [J/kg].
    pub p_c: f64,
    pub h_c_out: f64,
    /// Chamber secondary conditions.
    pub t_sec_in: f64,
    pub m_e_sec: f64,
}

impl StaticsContext<'_> {
    fn eval(&self, drive: BranchDrive, n_comp: f64, p_e: f64) -> Result<TrialPoint, StaticsError> {
        let cfg = self.cfg;
        let (m_e, m_tes) = match drive {
            BranchDrive::Flows { m_e, m_tes } => (m_e, m_tes),
            BranchDrive::Valves { a_v, a_v_tes } => {
                let rho_up = self.fluid.density_ph(self.p_c, self.h_c_out)?;
                let (m_e, _) = valve_flow(cfg.valve.c_v, a_v, self.p_c, rho_up, p_e);
                let (m_tes, _) = valve_flow(cfg.valve.c_v, a_v_tes, self.p_c, rho_up, p_e);
                (m_e, m_tes)
            }
        };
        let evap = evaporator_static(
            cfg,
            self.fluid,
            m_e,
            p_e,
            self.h_c_out,
            self.t_sec_in,
            self.m_e_sec,
        )?;
        let tes = pcm_tank::refrigerant_side(
            self.fluid,
            p_e,
            self.h_c_out,
            m_tes,
            self.t_int,
            &cfg.tank,
        )?;
        let jn = junction(self.fluid, m_e, evap.h_out, m_tes, tes.h_out, p_e)?;
        let comp = compressor_eval(cfg, self.fluid, n_comp, p_e, self.p_c, jn.h_comp_in)?;
        Ok(TrialPoint {
            m_e,
            m_tes,
            h_e_out: evap.h_out,
            h_tes_out: tes.h_out,
            q_e_sec: evap.q_e_sec,
            q_tes: tes.q_tes,
            h_comp_in: jn.h_comp_in,
            t_sh: jn.t_sh,
            comp,
            psi: comp.m_dot - (m_e + m_tes),
        })
    }
}

/// Solves the coupled steady-state component models.
///
/// The residual is the flow mismatch `psi = m_comp - (m_e + m_tes)`, strictly
/// increasing in the suction pressure; a damped successive-substitution pass
/// on the suction density runs first, falling back to bisection when it does
/// not settle.
pub fn solve_statics(
    ctx: &StaticsContext,
    drive: BranchDrive,
    n_comp: f64,
    m_tes_sec: f64,
    warm_start: Option<f64>,
) -> Result<CycleOperatingPoint, StaticsError> {
    let cfg = ctx.cfg;
    let q_tes_sec =
        pcm_tank::secondary_side(ctx.t_sec_in, m_tes_sec, ctx.t_int, &cfg.tank, &cfg.secondary)
            .q_tes_sec;

    let no_branch_flow = match drive {
        BranchDrive::Valves { a_v, a_v_tes } => a_v <= 0.0 && a_v_tes <= 0.0,
        BranchDrive::Flows { m_e, m_tes } => m_e <= 0.0 && m_tes <= 0.0,
    };
    if n_comp <= 0.0 || no_branch_flow {
        return Ok(CycleOperatingPoint::stopped(ctx.p_c, q_tes_sec));
    }

    let p_lo = ctx.fluid.p_min() * (1.0 + 1.0e-9);
    let p_hi = (ctx.p_c * 0.995).min(ctx.fluid.p_max() * (1.0 - 1.0e-9));
    if p_hi <= p_lo {
        return Err(StaticsError::NoSuctionInterval { p_c: ctx.p_c });
    }

    // damped successive substitution on the suction density
    let mut p = warm_start
        .unwrap_or_else(|| (p_lo * p_hi).sqrt())
        .clamp(p_lo, p_hi);
    let mut trial = ctx.eval(drive, n_comp, p)?;
    let mut converged = trial.psi.abs() < PSI_TOL;
    if !converged {
        for _ in 0..MAX_SUBSTITUTION_ITER {
            let rho_cur = trial.comp.m_dot / (cfg.compressor.eta_v * cfg.compressor.v_disp * n_comp);
            let m_total = trial.m_e + trial.m_tes;
            if m_total <= 0.0 || rho_cur <= 0.0 {
                break;
            }
            let rho_req = m_total / (cfg.compressor.eta_v * cfg.compressor.v_disp * n_comp);
            let ratio = rho_req / rho_cur;
            let p_next = (p * (0.5 + 0.5 * ratio)).clamp(p_lo, p_hi);
            if (p_next - p).abs() < 1.0e-9 * p && trial.psi.abs() >= PSI_TOL {
                break; // pinned at a bound or stalled
            }
            p = p_next;
            trial = ctx.eval(drive, n_comp, p)?;
            if trial.psi.abs() < PSI_TOL {
                converged = true;
                break;
            }
        }
    }

    if !converged {
        // bisection fallback on the monotone residual
        let psi_lo = ctx.eval(drive, n_comp, p_lo)?.psi;
        if psi_lo > 0.0 {
            return Err(StaticsError::SuctionBelowRange { psi: psi_lo });
        }
        let psi_hi = ctx.eval(drive, n_comp, p_hi)?.psi;
        if psi_hi < 0.0 {
            return Err(StaticsError::CapacityExceeded { psi: psi_hi });
        }
        let (mut lo, mut hi) = (p_lo, p_hi);
        for _ in 0..MAX_BISECTION_ITER {
            p = 0.5 * (lo + hi);
            trial = ctx.eval(drive, n_comp, p)?;
            if trial.psi.abs() < PSI_TOL {
                converged = true;
                break;
            }
            if trial.psi < 0.0 {
                lo = p;
            } else {
                hi = p;
            }
            if hi - lo < 1.0e-9 {
                break;
            }
        }
        if !converged {
            return Err(StaticsError::NoConvergence { psi: trial.psi });
        }
    }

    let sat = ctx.fluid.saturation(p)?;
    let wet = trial.h_comp_in < sat.h_vap - 1.0e-9;
    let t_sh_signed = if wet {
        (trial.h_comp_in - sat.h_vap) / ctx.fluid.cp_vap
    } else {
        trial.t_sh
    };
    let rho_up = ctx.fluid.density_ph(ctx.p_c, ctx.h_c_out)?;
    let (a_v, a_v_tes) = match drive {
        BranchDrive::Valves { a_v, a_v_tes } => (a_v, a_v_tes),
        BranchDrive::Flows { m_e, m_tes } => (
            valve_opening_for_flow(cfg.valve.c_v, m_e, ctx.p_c, rho_up, p),
            valve_opening_for_flow(cfg.valve.c_v, m_tes, ctx.p_c, rho_up, p),
        ),
    };
    Ok(CycleOperatingPoint {
        p_e: p,
        p_c: ctx.p_c,
        m_e: trial.m_e,
        m_tes: trial.m_tes,
        m_total: trial.m_e + trial.m_tes,
        h_e_out: trial.h_e_out,
        h_tes_out: trial.h_tes_out,
        h_comp_in: trial.h_comp_in,
        h_comp_out: trial.comp.h_out,
        h_c_in: trial.comp.h_out,
        t_sh: trial.t_sh,
        t_sh_signed,
        q_e_sec: trial.q_e_sec,
        q_tes: trial.q_tes,
        q_tes_sec,
        w_comp: trial.comp.w_comp,
        a_v,
        a_v_tes,
        converged,
        residual: trial.psi,
        wet_compression: wet,
    })
}

/// Independent bisection on the same residual, used as the reference for the
/// fixed-point solver. Tolerance is on the pressure interval.
pub fn bisect_suction_pressure(
    ctx: &StaticsContext,
    drive: BranchDrive,
    n_comp: f64,
    p_tol: f64,
) -> Result<f64, StaticsError> {
    let mut lo = ctx.fluid.p_min() * (1.0 + 1.0e-9);
    let mut hi = (ctx.p_c * 0.995).min(ctx.fluid.p_max() * (1.0 - 1.0e-9));
    let psi_lo = ctx.eval(drive, n_comp, lo)?.psi;
    if psi_lo > 0.0 {
        return Err(StaticsError::SuctionBelowRange { psi: psi_lo });
    }
    let psi_hi = ctx.eval(drive, n_comp, hi)?.psi;
    if psi_hi < 0.0 {
        return Err(StaticsError::CapacityExceeded { psi: psi_hi });
    }
    while hi - lo > p_tol {
        let mid = 0.5 * (lo + hi);
        if ctx.eval(drive, n_comp, mid)?.psi < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (PlantConfig, FluidModel) {
        (PlantConfig::default(), FluidModel::default_refrigerant())
    }

    fn ctx<'a>(cfg: &'a PlantConfig, fluid: &'a FluidModel, t_int: f64) -> StaticsContext<'a> {
        let sat = fluid.saturation(15.0e5).unwrap();
        StaticsContext {
            cfg,
            fluid,
            t_int,
            p_c: 15.0e5,
            h_c_out: sat.h_liq - fluid.cp_liq * cfg.condenser.subcooling,
            t_sec_in: cfg.nominal.t_sec_in,
            m_e_sec: cfg.nominal.m_e_sec,
        }
    }

    #[test]
    fn valve_zero_opening_and_backflow() {
        let (m, back) = valve_flow(2.9e-7, 0.0, 15.0e5, 1000.0, 1.0e5);
        assert_eq!(m, 0.0);
        assert!(!back);
        let (m, back) = valve_flow(2.9e-7, 50.0, 1.0e5, 1000.0, 15.0e5);
        assert_eq!(m, 0.0);
        assert!(back);
    }

    #[test]
    fn valve_square_root_law() {
        // quadrupling the pressure drop doubles the flow
        let (m1, _) = valve_flow(2.9e-7, 40.0, 2.0e5, 1000.0, 1.0e5);
        let (m2, _) = valve_flow(2.9e-7, 40.0, 5.0e5, 1000.0, 1.0e5);
        assert!((m2 / m1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn valve_inverse_round_trip() {
        let (m, _) = valve_flow(2.9e-7, 63.0, 14.0e5, 1058.0, 1.4e5);
        let a = valve_opening_for_flow(2.9e-7, m, 14.0e5, 1058.0, 1.4e5);
        assert!((a - 63.0).abs() < 1e-9);
    }

    #[test]
    fn compressor_zero_speed_and_unit_pressure_ratio() {
        let (cfg, fluid) = setup();
        let sat = fluid.saturation(1.0e5).unwrap();
        let h_in = sat.h_vap + fluid.cp_vap * 5.0;
        let out = compressor(&cfg, &fluid, 0.0, 1.0e5, 15.0e5, h_in).unwrap();
        assert_eq!(out.m_dot, 0.0);
        assert_eq!(out.w_comp, 0.0);
        let out = compressor(&cfg, &fluid, 40.0, 1.0e5, 1.0e5, h_in).unwrap();
        assert_eq!(out.h_out, h_in);
        assert_eq!(out.w_comp, 0.0);
    }

    #[test]
    fn compressor_flow_increases_with_speed() {
        let (cfg, fluid) = setup();
        let sat = fluid.saturation(1.5e5).unwrap();
        let h_in = sat.h_vap + fluid.cp_vap * 5.0;
        let m30 = compressor(&cfg, &fluid, 30.0, 1.5e5, 15.0e5, h_in)
            .unwrap()
            .m_dot;
        let m50 = compressor(&cfg, &fluid, 50.0, 1.5e5, 15.0e5, h_in)
            .unwrap()
            .m_dot;
        assert!(m50 > m30);
        // nominal sizing keeps the compressor inside the plausible band
        let m40 = compressor(&cfg, &fluid, 40.0, 1.5e5, 15.0e5, h_in)
            .unwrap()
            .m_dot;
        assert!(m40 > 0.002 && m40 < 0.020, "m40 = {m40}");
    }

    #[test]
    fn compressor_rejects_wet_intake() {
        let (cfg, fluid) = setup();
        let sat = fluid.saturation(1.0e5).unwrap();
        let err = compressor(&cfg, &fluid, 40.0, 1.0e5, 15.0e5, sat.h_vap - 1.0e3).unwrap_err();
        assert!(matches!(err, StaticsError::WetCompression));
    }

    #[test]
    fn evaporator_zero_flow_and_zero_dt() {
        let (cfg, fluid) = setup();
        let out = evaporator_static(&cfg, &fluid, 0.0, 1.0e5, 243.0e3, 253.15, 0.3).unwrap();
        assert_eq!(out.q_e_sec, 0.0);
        assert_eq!(out.h_out, 243.0e3);
        let t_sat = fluid.sat_temperature(2.0e5).unwrap();
        let out = evaporator_static(&cfg, &fluid, 0.004, 2.0e5, 243.0e3, t_sat, 0.3).unwrap();
        assert_eq!(out.q_e_sec, 0.0);
        assert!(out.no_driving_dt);
    }

    #[test]
    fn evaporator_respects_second_law_and_energy_balance() {
        let (cfg, fluid) = setup();
        let out = evaporator_static(&cfg, &fluid, 0.004, 1.5e5, 243.0e3, 253.15, 0.3).unwrap();
        // refrigerant cannot leave warmer than the incoming secondary stream
        let h_cap = fluid.enthalpy_pt(1.5e5, 253.15).unwrap();
        assert!(out.h_out <= h_cap + 1e-9);
        // secondary-side power equals the refrigerant-side duty
        let q_ref = 0.004 * (out.h_out - 243.0e3);
        assert!((out.q_e_sec + q_ref).abs() < 1e-6);
        assert!(out.q_e_sec < 0.0);
        // secondary outlet consistent with its energy balance
        let dt = out.q_e_sec / (0.3 * cfg.secondary.cp);
        assert!((out.t_sec_out - (253.15 + dt)).abs() < 1e-9);
    }

    #[test]
    fn junction_weighted_average_and_superheat() {
        let (_, fluid) = setup();
        // equal enthalpies pass through
        let j = junction(&fluid, 0.003, 360.0e3, 0.001, 360.0e3, 1.0e5).unwrap();
        assert_eq!(j.h_comp_in, 360.0e3);
        // single branch
        let j = junction(&fluid, 0.003, 350.0e3, 0.0, 0.0, 1.0e5).unwrap();
        assert_eq!(j.h_comp_in, 350.0e3);
        // 2:1 weighting
        let j = junction(&fluid, 0.004, 390.0e3, 0.002, 360.0e3, 1.0e5).unwrap();
        assert!((j.h_comp_in - 380.0e3).abs() < 1e-9);
        // superheat definition
        let sat = fluid.saturation(1.0e5).unwrap();
        let t_comp_in = fluid.temperature_ph(1.0e5, j.h_comp_in).unwrap();
        assert!((j.t_sh - (t_comp_in - sat.t_sat)).abs() < 1e-12);
        // both flows zero
        assert!(matches!(
            junction(&fluid, 0.0, 0.0, 0.0, 0.0, 1.0e5),
            Err(StaticsError::JunctionUndefined)
        ));
    }

    #[test]
    fn statics_stopped_cycle_is_trivial() {
        let (cfg, fluid) = setup();
        let c = ctx(&cfg, &fluid, 244.15);
        let op = solve_statics(&c, BranchDrive::Flows { m_e: 0.0, m_tes: 0.0 }, 0.0, 0.0, None)
            .unwrap();
        assert_eq!(op.m_total, 0.0);
        assert_eq!(op.q_e_sec, 0.0);
        assert_eq!(op.q_tes, 0.0);
        assert_eq!(op.w_comp, 0.0);
        assert!(op.converged);
    }

    #[test]
    fn statics_symmetric_branches_split_evenly() {
        // identical valve openings with the tank acting exactly like the
        // evaporator source give identical branch flows by symmetry
        let (mut cfg, fluid) = setup();
        cfg.tank.ua_refrigerant = cfg.evaporator.ua;
        let c = ctx(&cfg, &fluid, cfg.nominal.t_sec_in);
        let op = solve_statics(
            &c,
            BranchDrive::Valves {
                a_v: 45.0,
                a_v_tes: 45.0,
            },
            40.0,
            0.0,
            None,
        )
        .unwrap();
        assert!(op.converged);
        assert!((op.m_e - op.m_tes).abs() < 1e-12);
        assert!(op.m_e > 0.0);
    }

    #[test]
    fn statics_converges_and_matches_bisection_oracle() {
        let (cfg, fluid) = setup();
        let c = ctx(&cfg, &fluid, 244.15);
        let drive = BranchDrive::Flows {
            m_e: 0.004,
            m_tes: 0.003,
        };
        let op = solve_statics(&c, drive, 40.0, 0.2, None).unwrap();
        assert!(op.converged);
        assert!(op.residual.abs() < PSI_TOL);
        assert!(op.p_e > fluid.p_min() && op.p_e < c.p_c);
        let p_ref = bisect_suction_pressure(&c, drive, 40.0, 1.0e-3).unwrap();
        assert!(
            (op.p_e - p_ref).abs() < 10.0,
            "solver {} vs oracle {}",
            op.p_e,
            p_ref
        );
        // mass balance at the junction holds exactly
        assert!((op.m_total - (op.m_e + op.m_tes)).abs() < 1e-15);
    }

    #[test]
    fn statics_first_law_closure() {
        let (cfg, fluid) = setup();
        let c = ctx(&cfg, &fluid, 244.15);
        let op = solve_statics(
            &c,
            BranchDrive::Flows {
                m_e: 0.005,
                m_tes: 0.002,
            },
            42.0,
            0.0,
            None,
        )
        .unwrap();
        let q_cond = op.m_total * (op.h_c_in - c.h_c_out);
        let q_e_ref = op.m_e * (op.h_e_out - c.h_c_out);
        let q_tes_ref = op.m_tes * (op.h_tes_out - c.h_c_out);
        let closure = op.w_comp + q_e_ref + q_tes_ref;
        assert!(
            ((q_cond - closure) / q_cond).abs() < 1e-3,
            "condenser duty {q_cond} vs closure {closure}"
        );
    }

    #[test]
    fn statics_monotone_in_valve_opening() {
        let (cfg, fluid) = setup();
        let c = ctx(&cfg, &fluid, 244.15);
        let mut prev_flow = 0.0;
        let mut prev_power = 0.0;
        for a in [20.0, 40.0, 60.0, 80.0] {
            let op = solve_statics(
                &c,
                BranchDrive::Valves {
                    a_v: a,
                    a_v_tes: 0.0,
                },
                40.0,
                0.0,
                None,
            )
            .unwrap();
            assert!(op.m_e > prev_flow);
            assert!(op.q_e_sec.abs() > prev_power);
            prev_flow = op.m_e;
            prev_power = op.q_e_sec.abs();
        }
    }

    #[test]
    fn statics_two_initialisations_agree() {
        let (cfg, fluid) = setup();
        let c = ctx(&cfg, &fluid, 244.15);
        let drive = BranchDrive::Flows {
            m_e: 0.003,
            m_tes: 0.004,
        };
        let a = solve_statics(&c, drive, 38.0, 0.1, Some(0.6e5)).unwrap();
        let b = solve_statics(&c, drive, 38.0, 0.1, Some(4.0e5)).unwrap();
        assert!((a.p_e - b.p_e).abs() < 10.0);
    }

    #[test]
    fn statics_capacity_error_on_excessive_flows() {
        let (cfg, fluid) = setup();
        let c = ctx(&cfg, &fluid, 244.15);
        let err = solve_statics(
            &c,
            BranchDrive::Flows {
                m_e: 2.0,
                m_tes: 2.0,
            },
            30.0,
            0.0,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, StaticsError::CapacityExceeded { .. }));
        // far smaller but still beyond vapour capacity: converges wet
        let op = solve_statics(
            &c,
            BranchDrive::Flows {
                m_e: 0.05,
                m_tes: 0.05,
            },
            30.0,
            0.0,
            None,
        )
        .unwrap();
        assert!(op.wet_compression);
        assert!(op.t_sh < 2.0);
    }
}
