//! Scenario-driven closed-loop simulation: the two-time-scale loop coupling
//! the fast cycle statics and condenser dynamics with the slow tank model,
//! under the full control stack.
//!
//! Every fast step re-solves the cycle statics at the current intermediate
//! fluid temperature and advances the condenser; every control step runs the
//! mode logic, the superheat supervisor and the power PIs; every slow step
//! advances the tank with the powers averaged over the slow window.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condenser::{step_fast, CondenserError, CondenserState};
use crate::config::{ConfigError, PlantConfig};
use crate::control::{
    valve_cascade_step, ControlError, ControllerBank, CoolingPowers, FlowCommands, OperatingMode,
    PowerReferences,
};
use crate::cycle::{solve_statics, BranchDrive, CycleOperatingPoint, StaticsContext};
use crate::pcm_tank::{charge_ratio, step_slow, TankError, TesState};
use crate::thermo::{FluidModel, ThermoError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Tank(#[from] TankError),
    #[error(transparent)]
    Condenser(#[from] CondenserError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario invalid: {0}")]
    Invalid(String),
}

/// Integration rates [s]; the fast step must divide the control step, which
/// must divide the slow step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RateConfig {
    pub fast_dt: f64,
    pub control_dt: f64,
    pub slow_dt: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            fast_dt: 1.0,
            control_dt: 5.0,
            slow_dt: 30.0,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let divides = |a: f64, b: f64| (b / a - (b / a).round()).abs() < 1e-9;
        if self.fast_dt <= 0.0 || self.control_dt <= 0.0 || self.slow_dt <= 0.0 {
            return Err(SimError::Invalid("rates must be positive".into()));
        }
        if !divides(self.fast_dt, self.control_dt) || !divides(self.control_dt, self.slow_dt) {
            return Err(SimError::Invalid(format!(
                "rate contract violated: fast {} must divide control {} must divide slow {}",
                self.fast_dt, self.control_dt, self.slow_dt
            )));
        }
        Ok(())
    }
}

/// One piecewise-constant reference segment (power magnitudes [W]).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct RefSegment {
    pub t_start: f64,
    #[serde(default)]
    pub q_e_sec: f64,
    #[serde(default)]
    pub q_tes: f64,
    #[serde(default)]
    pub q_tes_sec: f64,
}

/// A closed-loop experiment description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Scenario {
    /// Simulated duration [s].
    pub duration_s: f64,
    /// Initial condensing pressure [Pa].
    pub p_c0: f64,
    /// Initial intermediate-fluid temperature [K].
    pub t_int0: f64,
    /// Uniform initial molten fraction of every layer (used when
    /// `layer_melt_fraction` is absent).
    pub melt_fraction0: f64,
    /// Optional per-layer initial molten fractions, core first.
    pub layer_melt_fraction: Option<Vec<f64>>,
    /// Boundary-condition overrides.
    pub t_sec_in: Option<f64>,
    pub t_amb: Option<f64>,
    pub t_surr: Option<f64>,
    /// Reference profile, breakpoints sorted by `t_start`.
    pub refs: Vec<RefSegment>,
    pub rates: RateConfig,
    /// Optional envelope CSV; references outside the listed per-mode ranges
    /// produce warnings (an infeasible reference is an experiment, not an
    /// error).
    pub envelope_csv: Option<String>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            duration_s: 600.0,
            p_c0: 1.2e6,
            t_int0: 244.15,
            melt_fraction0: 0.5,
            layer_melt_fraction: None,
            t_sec_in: None,
            t_amb: None,
            t_surr: None,
            refs: Vec::new(),
            rates: RateConfig::default(),
            envelope_csv: None,
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let sc: Scenario = toml::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_path(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.rates.validate()?;
        if self.duration_s <= 0.0 {
            return Err(SimError::Invalid("duration_s must be positive".into()));
        }
        if self.refs.is_empty() {
            return Err(SimError::Invalid("at least one [[refs]] segment".into()));
        }
        for w in self.refs.windows(2) {
            if w[1].t_start <= w[0].t_start {
                return Err(SimError::Invalid(format!(
                    "reference breakpoints not sorted near t = {}",
                    w[0].t_start
                )));
            }
        }
        for r in &self.refs {
            if r.q_e_sec < 0.0 || r.q_tes < 0.0 || r.q_tes_sec < 0.0 {
                return Err(SimError::Invalid(
                    "references are magnitudes and must be non-negative".into(),
                ));
            }
        }
        if let Some(f) = &self.layer_melt_fraction {
            if f.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(SimError::Invalid(
                    "layer_melt_fraction entries must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    /// Active references at time `t`.
    pub fn refs_at(&self, t: f64) -> PowerReferences {
        let mut current = PowerReferences::default();
        for seg in &self.refs {
            if t + 1e-9 >= seg.t_start {
                current = PowerReferences {
                    q_e_sec: seg.q_e_sec,
                    q_tes: seg.q_tes,
                    q_tes_sec: seg.q_tes_sec,
                };
            } else {
                break;
            }
        }
        current
    }
}

/// One telemetry row, emitted every control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub mode: u8,
    pub q_e_sec_ref: f64,
    pub q_e_sec: f64,
    pub q_tes_ref: f64,
    pub q_tes: f64,
    pub q_tes_sec_ref: f64,
    pub q_tes_sec: f64,
    /// Superheat [K]; meaningful while the compressor runs.
    pub t_sh: f64,
    pub n_comp: f64,
    pub a_v: f64,
    pub a_v_tes: f64,
    pub m_e: f64,
    pub m_tes: f64,
    pub m_tes_sec: f64,
    pub t_int: f64,
    pub gamma_tes: f64,
}

pub const TRACE_HEADER: &str = "t,mode,q_e_sec_ref,q_e_sec,q_tes_ref,q_tes,q_tes_sec_ref,q_tes_sec,t_sh,n_comp,a_v,a_v_tes,m_e,m_tes,m_tes_sec,t_int,gamma_tes";

impl TraceRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{:.1},{},{:.3},{:.6},{:.3},{:.6},{:.3},{:.6},{:.6},{:.3},{:.4},{:.4},{:.7},{:.7},{:.5},{:.5},{:.8}",
            self.t,
            self.mode,
            self.q_e_sec_ref,
            self.q_e_sec,
            self.q_tes_ref,
            self.q_tes,
            self.q_tes_sec_ref,
            self.q_tes_sec,
            self.t_sh,
            self.n_comp,
            self.a_v,
            self.a_v_tes,
            self.m_e,
            self.m_tes,
            self.m_tes_sec,
            self.t_int,
            self.gamma_tes
        )
    }
}

/// Ablation switches and runtime options.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub use_decoupler: bool,
    pub use_feedforward: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            use_decoupler: true,
            use_feedforward: true,
        }
    }
}

/// Run summary written next to the trace.
#[derive(Debug, Clone)]
pub struct Summary {
    pub rows: usize,
    /// Minimum superheat [K] over rows with the compressor running.
    pub min_t_sh: Option<f64>,
    pub final_gamma: f64,
    pub final_t_int: f64,
    /// Distinct consecutive modes visited, in order.
    pub mode_sequence: Vec<u8>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rows: {}", self.rows);
        match self.min_t_sh {
            Some(v) => {
                let _ = writeln!(s, "min_t_sh_while_running: {v:.3} K");
            }
            None => {
                let _ = writeln!(s, "min_t_sh_while_running: n/a (compressor never ran)");
            }
        }
        let _ = writeln!(s, "final_gamma_tes: {:.4}", self.final_gamma);
        let _ = writeln!(s, "final_t_int: {:.3} K", self.final_t_int);
        let seq: Vec<String> = self.mode_sequence.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(s, "mode_sequence: {}", seq.join(" -> "));
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// Full result of one run. On a solver failure the trace holds everything up
/// to the failure and `failure` records the cause.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub trace: Vec<TraceRow>,
    pub failure: Option<String>,
    pub summary: Summary,
}

pub fn run_scenario(
    cfg: &PlantConfig,
    fluid: &FluidModel,
    sc: &Scenario,
    opts: &SimOptions,
) -> Result<SimResult, SimError> {
    sc.validate()?;
    let rates = sc.rates;
    let t_sec_in = sc.t_sec_in.unwrap_or(cfg.nominal.t_sec_in);
    let t_amb = sc.t_amb.unwrap_or(cfg.nominal.t_amb);
    let t_surr = sc.t_surr.unwrap_or(cfg.nominal.t_surr);

    let mut tes = match &sc.layer_melt_fraction {
        Some(fr) => TesState::from_melt_profile(sc.t_int0, fr, &cfg.tank, &cfg.pcm)?,
        None => TesState::uniform(sc.t_int0, sc.melt_fraction0, &cfg.tank, &cfg.pcm),
    };
    let mut cond = CondenserState::at_pressure(&cfg.condenser, fluid, sc.p_c0, 0.35)?;
    let mut bank = ControllerBank::new(cfg, opts.use_decoupler)?;

    let steps = (sc.duration_s / rates.fast_dt).round() as usize;
    let control_every = (rates.control_dt / rates.fast_dt).round() as usize;
    let slow_every = (rates.slow_dt / rates.fast_dt).round() as usize;

    let mut trace = Vec::with_capacity(steps / control_every + 1);
    let mut failure = None;
    let mut warnings = envelope_warnings(sc);

    let mut op = CycleOperatingPoint::stopped(sc.p_c0, 0.0);
    let mut flows = FlowCommands::default();
    let mut n_cmd;
    let mut a_v;
    let mut a_v_tes;
    let mut warm_p_e: Option<f64> = None;
    // powers accumulated over the slow window (constant-rate hand-off)
    let mut acc_q_tes = 0.0;
    let mut acc_q_tes_sec = 0.0;

    'outer: for k in 0..steps {
        let t = k as f64 * rates.fast_dt;

        if k % control_every == 0 {
            let refs = sc.refs_at(t);
            bank.mode_logic(&refs);
            let meas = CoolingPowers::from_operating_point(&op);
            flows = bank.power_control_step(&refs, &meas, rates.control_dt);
        }

        // low-level loops (superheat supervision, valve cascades) run at
        // the fast rate
        n_cmd = if bank.mode.compressor_on() {
            bank.tsh_supervisor_step(op.t_sh_signed, rates.fast_dt)
        } else {
            bank.tsh_supervisor_step(0.0, rates.fast_dt)
        };
        let p_c = cond.pressure(&cfg.condenser, fluid)?;
        let h_c_out = cond.outlet_enthalpy(&cfg.condenser, fluid, fluid.cp_liq)?;
        let rho_up = fluid.density_ph(p_c, h_c_out)?;
        let p_down = if op.m_total > 0.0 { op.p_e } else { p_c * 0.2 };
        a_v = if bank.mode.chamber_active() {
            valve_cascade_step(
                &mut bank.c_m_e,
                &cfg.valve,
                flows.m_e_ref,
                op.m_e,
                p_c,
                rho_up,
                p_down,
                rates.fast_dt,
                opts.use_feedforward,
            )
        } else {
            0.0
        };
        a_v_tes = if bank.mode.charge_active() {
            valve_cascade_step(
                &mut bank.c_m_tes,
                &cfg.valve,
                flows.m_tes_ref,
                op.m_tes,
                p_c,
                rho_up,
                p_down,
                rates.fast_dt,
                opts.use_feedforward,
            )
        } else {
            0.0
        };

        let ctx = StaticsContext {
            cfg,
            fluid,
            t_int: tes.t_int,
            p_c,
            h_c_out,
            t_sec_in,
            m_e_sec: cfg.nominal.m_e_sec,
        };
        op = match solve_statics(
            &ctx,
            BranchDrive::Valves { a_v, a_v_tes },
            n_cmd,
            flows.m_tes_sec,
            warm_p_e,
        ) {
            Ok(op) => op,
            Err(e) => {
                failure = Some(format!("t = {t} s: {e}"));
                break 'outer;
            }
        };
        warm_p_e = if op.m_total > 0.0 { Some(op.p_e) } else { None };

        cond = match step_fast(
            &cond,
            &cfg.condenser,
            fluid,
            op.m_total,
            op.h_c_in,
            op.m_total,
            t_amb,
            rates.fast_dt,
        ) {
            Ok(c) => c,
            Err(e) => {
                failure = Some(format!("t = {t} s: {e}"));
                break 'outer;
            }
        };

        acc_q_tes += op.q_tes * rates.fast_dt;
        acc_q_tes_sec += op.q_tes_sec * rates.fast_dt;

        if k % control_every == 0 {
            let refs = sc.refs_at(t);
            let gamma = charge_ratio(&tes, &cfg.pcm, &cfg.tank).gamma;
            trace.push(TraceRow {
                t,
                mode: bank.mode.as_u8(),
                q_e_sec_ref: refs.q_e_sec,
                q_e_sec: op.q_e_sec.abs(),
                q_tes_ref: refs.q_tes,
                q_tes: op.q_tes.abs(),
                q_tes_sec_ref: refs.q_tes_sec,
                q_tes_sec: op.q_tes_sec.abs(),
                t_sh: if bank.mode.compressor_on() { op.t_sh } else { 0.0 },
                n_comp: n_cmd,
                a_v,
                a_v_tes,
                m_e: op.m_e,
                m_tes: op.m_tes,
                m_tes_sec: flows.m_tes_sec,
                t_int: tes.t_int,
                gamma_tes: gamma,
            });
        }

        if (k + 1) % slow_every == 0 {
            let window = rates.slow_dt;
            let q_tes_mean = acc_q_tes / window;
            let q_tes_sec_mean = acc_q_tes_sec / window;
            let (next, _diag) = step_slow(
                &tes,
                t_surr,
                q_tes_mean,
                q_tes_sec_mean,
                window,
                &cfg.tank,
                &cfg.pcm,
                true,
            )?;
            tes = next;
            acc_q_tes = 0.0;
            acc_q_tes_sec = 0.0;
        }
    }

    let min_t_sh = trace
        .iter()
        .filter(|r| r.mode != 4 && r.mode != 8)
        .map(|r| r.t_sh)
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.min(v)))
        });
    let mut mode_sequence = Vec::new();
    for r in &trace {
        if mode_sequence.last() != Some(&r.mode) {
            mode_sequence.push(r.mode);
        }
    }
    if let Some(f) = &failure {
        warnings.push(format!("run truncated: {f}"));
    }
    let summary = Summary {
        rows: trace.len(),
        min_t_sh,
        final_gamma: trace.last().map_or(0.0, |r| r.gamma_tes),
        final_t_int: tes.t_int,
        mode_sequence,
        warnings,
    };
    Ok(SimResult {
        trace,
        failure,
        summary,
    })
}

/// Renders the trace in the versioned CSV format.
pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::with_capacity(trace.len() * 160 + 64);
    out.push_str("# tescycle-trace v1\n");
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for row in trace {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    out
}

/// Checks the scenario references against a previously computed envelope
/// CSV, returning warnings for references outside the listed ranges.
fn envelope_warnings(sc: &Scenario) -> Vec<String> {
    let mut warnings = Vec::new();
    let Some(path) = &sc.envelope_csv else {
        return warnings;
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            warnings.push(format!("envelope file {path} unreadable: {e}"));
            return warnings;
        }
    };
    // rows: mode,location,q_e_sec_min,q_e_sec_max,q_tes_min,q_tes_max,
    //       q_tes_sec_min,q_tes_sec_max
    let mut ranges: std::collections::BTreeMap<u8, [Option<(f64, f64)>; 3]> =
        std::collections::BTreeMap::new();
    for line in text.lines().skip_while(|l| l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 8 {
            continue;
        }
        let Ok(mode) = f[0].parse::<u8>() else {
            continue;
        };
        let parse_pair = |a: &str, b: &str| -> Option<(f64, f64)> {
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => Some((x, y)),
                _ => None,
            }
        };
        let entry = ranges.entry(mode).or_default();
        let widen = |slot: &mut Option<(f64, f64)>, pair: Option<(f64, f64)>| {
            if let Some((lo, hi)) = pair {
                *slot = Some(match *slot {
                    None => (lo, hi),
                    Some((a, b)) => (a.min(lo), b.max(hi)),
                });
            }
        };
        widen(&mut entry[0], parse_pair(f[2], f[3]));
        widen(&mut entry[1], parse_pair(f[4], f[5]));
        widen(&mut entry[2], parse_pair(f[6], f[7]));
    }
    for seg in &sc.refs {
        let refs = PowerReferences {
            q_e_sec: seg.q_e_sec,
            q_tes: seg.q_tes,
            q_tes_sec: seg.q_tes_sec,
        };
        let mode = OperatingMode::from_flags(
            refs.q_e_sec > 1.0,
            refs.q_tes > 1.0,
            refs.q_tes_sec > 1.0,
        );
        let Some(r) = ranges.get(&mode.as_u8()) else {
            continue;
        };
        let mut check = |name: &str, value: f64, slot: Option<(f64, f64)>| {
            if value <= 1.0 {
                return;
            }
            if let Some((lo, hi)) = slot {
                if value < lo || value > hi {
                    warnings.push(format!(
                        "segment at t = {} s: {name} reference {value:.0} W outside mode-{} envelope [{lo:.0}, {hi:.0}] W",
                        seg.t_start,
                        mode.as_u8()
                    ));
                }
            }
        };
        check("q_e_sec", refs.q_e_sec, r[0]);
        check("q_tes", refs.q_tes, r[1]);
        check("q_tes_sec", refs.q_tes_sec, r[2]);
    }
    warnings
}
