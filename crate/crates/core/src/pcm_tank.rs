//! Finite-volume model of the PCM thermal-storage tank.
//!
//! The tank holds `n_pcm` identical PCM cylinders bathed in an intermediate
//! fluid. Each cylinder is split into `n_lay` radial layers carrying a
//! specific enthalpy; refrigerant and secondary pipe bundles exchange heat
//! with the intermediate fluid only, never with the PCM directly. On the fast
//! time scale both exchanges see the intermediate-fluid temperature as an
//! isothermal source; the slow step then moves the stored energy between the
//! fluid and the layered cylinders.
//!
//! Sign convention: a power is negative for the body it leaves. `q_tes` is
//! the refrigerant-side exchange seen from the tank (negative while
//! charging); `q_tes_sec` is seen from the secondary fluid (negative while
//! the secondary fluid is cooled, i.e. while discharging).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::thermo::{FluidModel, SimpleFluid, ThermoError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TankError {
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error("slow step of {dt:.1} s exceeds the explicit stability bound {bound:.2} s; enable auto_substep or shorten the step")]
    Unstable { dt: f64, bound: f64 },
    #[error("layer profile has {got} entries, geometry has {expected} layers")]
    ProfileLength { got: usize, expected: usize },
}

/// Temperature / specific-enthalpy curve of the PCM.
///
/// Temperature is `t_lat` on the plateau `[h_lat_minus, h_lat_minus + h_lat]`
/// and follows the sensible slopes on either side.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PcmCurve {
    /// Lower plateau enthalpy [J/kg] (reference level, fully solid).
    pub h_lat_minus: f64,
    /// Latent width [J/kg].
    pub h_lat: f64,
    /// Phase-change temperature [K].
    pub t_lat: f64,
    /// Solid heat capacity [J/(kg K)].
    pub c_solid: f64,
    /// Liquid heat capacity [J/(kg K)].
    pub c_liquid: f64,
}

impl PcmCurve {
    pub fn h_lat_plus(&self) -> f64 {
        self.h_lat_minus + self.h_lat
    }

    /// Temperature [K] at PCM enthalpy `h`.
    pub fn temperature(&self, h: f64) -> f64 {
        if h < self.h_lat_minus {
            self.t_lat + (h - self.h_lat_minus) / self.c_solid
        } else if h > self.h_lat_plus() {
            self.t_lat + (h - self.h_lat_plus()) / self.c_liquid
        } else {
            self.t_lat
        }
    }

    /// Molten fraction in [0, 1]; 0 below the plateau, 1 above it.
    pub fn melt_fraction(&self, h: f64) -> f64 {
        ((h - self.h_lat_minus) / self.h_lat).clamp(0.0, 1.0)
    }
}

/// Tank geometry and heat-transfer parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TesGeometry {
    /// Number of PCM cylinders.
    pub n_pcm: usize,
    /// Radial layers per cylinder.
    pub n_lay: usize,
    /// Cylinder radius [m].
    pub radius: f64,
    /// Cylinder length [m].
    pub length: f64,
    /// PCM density [kg/m3].
    pub rho_pcm: f64,
    /// PCM conductivity in the solid phase [W/(m K)].
    pub k_solid: f64,
    /// PCM conductivity in the liquid phase [W/(m K)].
    pub k_liquid: f64,
    /// Intermediate-fluid mass [kg].
    pub m_int: f64,
    /// Intermediate-fluid heat capacity [J/(kg K)].
    pub c_int: f64,
    /// Intermediate <-> refrigerant pipe bundle conductance [W/K] at the
    /// reference refrigerant flow `m_flow_ref`.
    pub ua_refrigerant: f64,
    /// Boiling-side conductance scales with (m / m_flow_ref)^ua_flow_exponent.
    pub ua_flow_exponent: f64,
    /// Reference refrigerant flow [kg/s] for the conductance scaling.
    pub m_flow_ref: f64,
    /// Intermediate <-> secondary pipe bundle conductance [W/K].
    pub ua_secondary: f64,
    /// Tank surface <-> surroundings conductance [W/K].
    pub ua_ambient: f64,
    /// Intermediate <-> single cylinder surface film conductance [W/K].
    pub ua_film_pcm: f64,
    /// Minimum refrigerant approach [K] for the outlet-enthalpy cap.
    pub approach: f64,
}

impl TesGeometry {
    /// Outer radius [m] of layer `i` (0 = core).
    fn r_outer(&self, i: usize) -> f64 {
        self.radius * (i + 1) as f64 / self.n_lay as f64
    }

    /// Radial midpoint [m] of layer `i`.
    fn r_centre(&self, i: usize) -> f64 {
        self.radius * (i as f64 + 0.5) / self.n_lay as f64
    }

    /// Mass [kg] of layer `i` in one cylinder.
    pub fn layer_mass(&self, i: usize) -> f64 {
        let r_in = if i == 0 { 0.0 } else { self.r_outer(i - 1) };
        let r_out = self.r_outer(i);
        self.rho_pcm * std::f64::consts::PI * (r_out * r_out - r_in * r_in) * self.length
    }

    /// PCM mass [kg] of one cylinder.
    pub fn cylinder_mass(&self) -> f64 {
        self.rho_pcm * std::f64::consts::PI * self.radius * self.radius * self.length
    }

    /// Total PCM mass [kg] in the tank.
    pub fn pcm_mass(&self) -> f64 {
        self.cylinder_mass() * self.n_pcm as f64
    }

    /// Cylindrical-shell conduction resistance [K/W] between radii, with
    /// conductivity `k`.
    fn shell_resistance(&self, r_in: f64, r_out: f64, k: f64) -> f64 {
        (r_out / r_in).ln() / (2.0 * std::f64::consts::PI * k * self.length)
    }
}

/// Direction of net heat flow between the intermediate fluid and the PCM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcmHeatDirection {
    /// Heat drawn out of the PCM (freezing front supplies latent heat).
    OutOfPcm,
    /// Heat pushed into the PCM (melting front absorbs latent heat).
    IntoPcm,
}

/// Tank state: intermediate-fluid temperature plus per-layer PCM enthalpies
/// of the representative cylinder (core first, edge last).
#[derive(Debug, Clone, PartialEq)]
pub struct TesState {
    /// Intermediate-fluid temperature [K].
    pub t_int: f64,
    /// Layer specific enthalpies [J/kg], index 0 = core, n_lay-1 = edge.
    pub layer_h: Vec<f64>,
}

/// Charge ratio with its out-of-plateau report flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeRatio {
    /// Normalised charge in [0, 1] (clamped).
    pub gamma: f64,
    /// True when some layer left the latent interval, so the raw ratio was
    /// clamped rather than exact.
    pub clamped: bool,
}

impl TesState {
    /// Uniform state with every layer at the given molten fraction.
    pub fn uniform(t_int: f64, melt_fraction: f64, geom: &TesGeometry, curve: &PcmCurve) -> Self {
        Self {
            t_int,
            layer_h: vec![curve.h_lat_minus + melt_fraction * curve.h_lat; geom.n_lay],
        }
    }

    /// State from per-layer molten fractions (core first).
    pub fn from_melt_profile(
        t_int: f64,
        fractions: &[f64],
        geom: &TesGeometry,
        curve: &PcmCurve,
    ) -> Result<Self, TankError> {
        if fractions.len() != geom.n_lay {
            return Err(TankError::ProfileLength {
                got: fractions.len(),
                expected: geom.n_lay,
            });
        }
        Ok(Self {
            t_int,
            layer_h: fractions
                .iter()
                .map(|f| curve.h_lat_minus + f * curve.h_lat)
                .collect(),
        })
    }

    /// Stored thermal energy [J] of one cylinder.
    pub fn u_pcm(&self, geom: &TesGeometry) -> f64 {
        self.layer_h
            .iter()
            .enumerate()
            .map(|(i, h)| geom.layer_mass(i) * h)
            .sum()
    }

    /// Stored thermal energy [J] of the whole tank PCM inventory.
    pub fn u_tes(&self, geom: &TesGeometry) -> f64 {
        self.u_pcm(geom) * geom.n_pcm as f64
    }

    /// CSV header matching [`TesState::csv_row`].
    pub fn csv_header(n_lay: usize) -> String {
        let mut s = String::from("t,t_int,gamma_tes");
        for i in 0..n_lay {
            s.push_str(&format!(",h_layer_{i}"));
        }
        s
    }

    /// Snapshot row `t, T_int, gamma, h_0..h_n` for state logging.
    pub fn csv_row(&self, t: f64, curve: &PcmCurve, geom: &TesGeometry) -> String {
        let mut s = format!(
            "{:.1},{:.4},{:.6}",
            t,
            self.t_int,
            charge_ratio(self, curve, geom).gamma
        );
        for h in &self.layer_h {
            s.push_str(&format!(",{h:.1}"));
        }
        s
    }
}

/// Normalised charge ratio of the tank.
///
/// 1 when the whole PCM volume sits at the lower plateau bound (maximum
/// useful cold energy stored), 0 at the upper bound.
pub fn charge_ratio(state: &TesState, curve: &PcmCurve, geom: &TesGeometry) -> ChargeRatio {
    let m_cyl = geom.cylinder_mass();
    let u = state.u_pcm(geom);
    let u_min = m_cyl * curve.h_lat_minus;
    let u_max = m_cyl * curve.h_lat_plus();
    let raw = (u_max - u) / (u_max - u_min);
    let tol = 1e-9 * curve.h_lat;
    let clamped = state
        .layer_h
        .iter()
        .any(|&h| h < curve.h_lat_minus - tol || h > curve.h_lat_plus() + tol);
    ChargeRatio {
        gamma: raw.clamp(0.0, 1.0),
        clamped,
    }
}

/// PCM temperature [K] at enthalpy `h`. Thin wrapper kept for symmetry with
/// the other tank operations.
pub fn pcm_temperature(h: f64, curve: &PcmCurve) -> f64 {
    curve.temperature(h)
}

/// Refrigerant-side exchange result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefrigerantSide {
    /// Tank-side power [W]; negative while the tank is being charged.
    pub q_tes: f64,
    /// Refrigerant outlet enthalpy [J/kg].
    pub h_out: f64,
    /// Refrigerant outlet pressure [Pa].
    pub p_out: f64,
    /// Set when there was no driving temperature difference.
    pub no_driving_dt: bool,
}

/// Static refrigerant-side exchange against the isothermal intermediate
/// fluid: a boiling zone sized in closed form plus an effectiveness-limited
/// superheat zone on the remaining area.
pub fn refrigerant_side(
    fluid: &FluidModel,
    p_in: f64,
    h_in: f64,
    m_dot: f64,
    t_int: f64,
    geom: &TesGeometry,
) -> Result<RefrigerantSide, TankError> {
    let p_out = p_in; // frictional drop not modelled by default
    if m_dot <= 0.0 {
        return Ok(RefrigerantSide {
            q_tes: 0.0,
            h_out: h_in,
            p_out,
            no_driving_dt: false,
        });
    }
    let sat = fluid.saturation(p_in)?;
    let t_r = sat.t_sat;
    if t_int <= t_r {
        return Ok(RefrigerantSide {
            q_tes: 0.0,
            h_out: h_in,
            p_out,
            no_driving_dt: true,
        });
    }
    let ua = geom.ua_refrigerant * (m_dot / geom.m_flow_ref).powf(geom.ua_flow_exponent);
    let dt = t_int - t_r;
    let to_saturate = (m_dot * (sat.h_vap - h_in)).max(0.0);
    let q_abs = if ua * dt <= to_saturate {
        // outlet still two-phase: both sides isothermal, duty is UA * dT
        ua * dt
    } else {
        // boiling completes on a fraction of the area, the rest superheats
        let x = to_saturate / (ua * dt);
        let c = m_dot * fluid.cp_vap;
        let eff = 1.0 - (-(ua * (1.0 - x)) / c).exp();
        to_saturate + eff * c * dt
    };
    // cap: the refrigerant cannot leave warmer than t_int - approach
    let h_cap = fluid.enthalpy_pt(p_in, (t_int - geom.approach).max(t_r))?;
    let q_abs = q_abs.min((m_dot * (h_cap - h_in)).max(0.0));
    Ok(RefrigerantSide {
        q_tes: -q_abs,
        h_out: h_in + q_abs / m_dot,
        p_out,
        no_driving_dt: false,
    })
}

/// Secondary-side exchange result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondarySide {
    /// Secondary-side power [W]; negative while the secondary fluid is cooled.
    pub q_tes_sec: f64,
    /// Secondary outlet temperature [K].
    pub t_sec_out: f64,
}

/// Single-phase effectiveness exchange of the secondary stream against the
/// isothermal intermediate fluid.
pub fn secondary_side(
    t_sec_in: f64,
    m_dot_sec: f64,
    t_int: f64,
    geom: &TesGeometry,
    secondary: &SimpleFluid,
) -> SecondarySide {
    if m_dot_sec <= 0.0 {
        return SecondarySide {
            q_tes_sec: 0.0,
            t_sec_out: t_sec_in,
        };
    }
    let c = m_dot_sec * secondary.cp;
    let t_sec_out = t_int + (t_sec_in - t_int) * (-geom.ua_secondary / c).exp();
    SecondarySide {
        q_tes_sec: c * (t_sec_out - t_sec_in),
        t_sec_out,
    }
}

/// Boundary inputs of the tank model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TesInputs {
    /// Refrigerant mass flow [kg/s].
    pub m_tes: f64,
    /// Refrigerant inlet pressure [Pa].
    pub p_tes_in: f64,
    /// Refrigerant inlet specific enthalpy [J/kg].
    pub h_tes_in: f64,
    /// Secondary mass flow [kg/s].
    pub m_tes_sec: f64,
    /// Secondary inlet temperature [K].
    pub t_sec_in: f64,
    /// Surroundings temperature [K].
    pub t_surr: f64,
}

/// Boundary outputs of the tank model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TesOutputs {
    pub p_tes_out: f64,
    pub h_tes_out: f64,
    pub t_sec_out: f64,
    /// Tank-side refrigerant power [W] (<= 0 while charging).
    pub q_tes: f64,
    /// Secondary-side power [W] (<= 0 while discharging).
    pub q_tes_sec: f64,
}

/// Evaluates both fast-scale exchanges at the current intermediate-fluid
/// temperature.
pub fn exchange(
    fluid: &FluidModel,
    secondary: &SimpleFluid,
    state: &TesState,
    inputs: &TesInputs,
    geom: &TesGeometry,
) -> Result<TesOutputs, TankError> {
    let r = refrigerant_side(
        fluid,
        inputs.p_tes_in,
        inputs.h_tes_in,
        inputs.m_tes,
        state.t_int,
        geom,
    )?;
    let s = secondary_side(inputs.t_sec_in, inputs.m_tes_sec, state.t_int, geom, secondary);
    Ok(TesOutputs {
        p_tes_out: r.p_out,
        h_tes_out: r.h_out,
        t_sec_out: s.t_sec_out,
        q_tes: r.q_tes,
        q_tes_sec: s.q_tes_sec,
    })
}

/// Diagnostics of one slow step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowStepDiag {
    /// Explicit sub-steps taken.
    pub substeps: usize,
    /// Integrated ambient heat into the tank [J] over the step.
    pub ambient_energy: f64,
    /// Energy-balance residual [J]: change of stored energy minus the
    /// injected boundary energy. Rounding-level when the update is sound.
    pub residual: f64,
    /// Sum of absolute boundary energies [J], for relative residual checks.
    pub throughput: f64,
}

/// Advances the tank over `dt` seconds with the boundary powers held
/// constant. Radial conduction uses an explicit update with automatic
/// sub-stepping against the diffusion stability bound.
#[allow(clippy::too_many_arguments)]
pub fn step_slow(
    state: &TesState,
    t_surr: f64,
    q_tes: f64,
    q_tes_sec: f64,
    dt: f64,
    geom: &TesGeometry,
    curve: &PcmCurve,
    auto_substep: bool,
) -> Result<(TesState, SlowStepDiag), TankError> {
    assert!(dt > 0.0, "slow step must be positive");
    let n = geom.n_lay;
    let masses: Vec<f64> = (0..n).map(|i| geom.layer_mass(i)).collect();
    let c_min = geom.c_solid_liquid_min(curve);

    // Conservative stability bound with the larger conductivity everywhere.
    let k_max = geom.k_solid.max(geom.k_liquid);
    let g_between_max: Vec<f64> = (0..n.saturating_sub(1))
        .map(|i| {
            let r = geom.shell_resistance(geom.r_centre(i), geom.r_outer(i), k_max)
                + geom.shell_resistance(geom.r_outer(i), geom.r_centre(i + 1), k_max);
            1.0 / r
        })
        .collect();
    let g_surf_max = 1.0
        / (1.0 / geom.ua_film_pcm
            + geom.shell_resistance(geom.r_centre(n - 1), geom.radius, k_max));
    let mut bound = f64::INFINITY;
    for i in 0..n {
        let mut g = 0.0;
        if i > 0 {
            g += g_between_max[i - 1];
        }
        if i + 1 < n {
            g += g_between_max[i];
        } else {
            g += g_surf_max;
        }
        bound = bound.min(masses[i] * c_min / g);
    }
    let g_fluid = geom.ua_ambient + geom.n_pcm as f64 * g_surf_max;
    bound = bound.min(geom.m_int * geom.c_int / g_fluid);
    bound *= 0.5;

    let substeps = if dt <= bound {
        1
    } else if auto_substep {
        (dt / bound).ceil() as usize
    } else {
        return Err(TankError::Unstable { dt, bound });
    };
    let dt_sub = dt / substeps as f64;

    let mut h = state.layer_h.clone();
    let mut t_int = state.t_int;
    let mut ambient_energy = 0.0;
    let n_pcm = geom.n_pcm as f64;

    for _ in 0..substeps {
        let temps: Vec<f64> = h.iter().map(|&hi| curve.temperature(hi)).collect();
        let ks: Vec<f64> = h
            .iter()
            .map(|&hi| {
                let f = curve.melt_fraction(hi);
                geom.k_solid + (geom.k_liquid - geom.k_solid) * f
            })
            .collect();
        let mut dh = vec![0.0; n];
        for i in 0..n - 1 {
            let r = geom.shell_resistance(geom.r_centre(i), geom.r_outer(i), ks[i])
                + geom.shell_resistance(geom.r_outer(i), geom.r_centre(i + 1), ks[i + 1]);
            let q = (temps[i] - temps[i + 1]) / r;
            dh[i] -= q;
            dh[i + 1] += q;
        }
        let g_surf = 1.0
            / (1.0 / geom.ua_film_pcm
                + geom.shell_resistance(geom.r_centre(n - 1), geom.radius, ks[n - 1]));
        let q_surf = g_surf * (temps[n - 1] - t_int);
        dh[n - 1] -= q_surf;

        let q_amb = geom.ua_ambient * (t_surr - t_int);
        let q_fluid = q_tes - q_tes_sec + q_amb + n_pcm * q_surf;

        for i in 0..n {
            h[i] += dt_sub * dh[i] / masses[i];
        }
        t_int += dt_sub * q_fluid / (geom.m_int * geom.c_int);
        ambient_energy += dt_sub * q_amb;
    }

    let new_state = TesState {
        t_int,
        layer_h: h,
    };
    let du_pcm = new_state.u_tes(geom) - state.u_tes(geom);
    let du_int = geom.m_int * geom.c_int * (new_state.t_int - state.t_int);
    let injected = dt * (q_tes - q_tes_sec) + ambient_energy;
    Ok((
        new_state,
        SlowStepDiag {
            substeps,
            ambient_energy,
            residual: du_pcm + du_int - injected,
            throughput: dt * (q_tes.abs() + q_tes_sec.abs()) + ambient_energy.abs(),
        },
    ))
}

impl TesGeometry {
    fn c_solid_liquid_min(&self, curve: &PcmCurve) -> f64 {
        curve.c_solid.min(curve.c_liquid)
    }
}

/// Quasi-static conductance [W/K, whole tank] between the latent front and
/// the intermediate fluid, through the film and any sensible shell layers.
///
/// Walking inward from the surface, a layer belongs to the shell when it can
/// no longer supply (`OutOfPcm`) or absorb (`IntoPcm`) latent heat. Returns 0
/// when no layer can act as a front.
pub fn shell_conductance(
    state: &TesState,
    curve: &PcmCurve,
    geom: &TesGeometry,
    direction: PcmHeatDirection,
) -> f64 {
    let tol = 1e-6 * curve.h_lat;
    let is_shell = |h: f64| match direction {
        PcmHeatDirection::OutOfPcm => h <= curve.h_lat_minus + tol,
        PcmHeatDirection::IntoPcm => h >= curve.h_lat_plus() - tol,
    };
    let mut resistance = 1.0 / geom.ua_film_pcm;
    let mut front = None;
    for i in (0..geom.n_lay).rev() {
        if is_shell(state.layer_h[i]) {
            let r_in = if i == 0 { 0.0 } else { geom.r_outer(i - 1) };
            if r_in == 0.0 {
                return 0.0; // shell reaches the core: no latent front left
            }
            let k = match direction {
                PcmHeatDirection::OutOfPcm => geom.k_solid,
                PcmHeatDirection::IntoPcm => geom.k_liquid,
            };
            resistance += geom.shell_resistance(r_in, geom.r_outer(i), k);
        } else {
            front = Some(i);
            break;
        }
    }
    match front {
        Some(_) => geom.n_pcm as f64 / resistance,
        None => 0.0,
    }
}
