//! Steady-state feasibility analysis: per-mode cooling-power ranges and
//! coupled power maps as functions of the freezing/melting boundary location.
//!
//! Every grid point over the admissible virtual-flow box is solved to a full
//! steady state: suction pressure from the statics solver, condensing
//! pressure from the condenser heat balance, intermediate-fluid temperature
//! from the tank balance with the PCM front feeding through the sensible
//! shell, and the compressor speed at the lowest value that still holds the
//! minimum superheat. Points that fail any of those are simply not part of
//! the envelope.

use thiserror::Error;

use crate::config::PlantConfig;
use crate::control::OperatingMode;
use crate::cycle::{solve_statics, BranchDrive, CycleOperatingPoint, StaticsContext};
use crate::pcm_tank::{shell_conductance, PcmHeatDirection, TesState};
use crate::thermo::FluidModel;

#[derive(Debug, Clone, Error)]
pub enum EnvelopeError {
    #[error(transparent)]
    Thermo(#[from] crate::thermo::ThermoError),
    #[error("envelope sweep needs a grid of at least 2 points per axis")]
    GridTooSmall,
}

/// Position of the freezing/melting boundary inside the PCM cylinders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BoundaryLocation {
    /// Front at the cylinder edge: no sensible shell.
    Edge,
    /// Outer half of the layers in sensible state.
    Halfway,
    /// Every layer but the core in sensible state.
    Centre,
}

impl BoundaryLocation {
    pub const ALL: [BoundaryLocation; 3] = [Self::Edge, Self::Halfway, Self::Centre];

    pub fn label(self) -> &'static str {
        match self {
            Self::Edge => "edge",
            Self::Halfway => "halfway",
            Self::Centre => "centre",
        }
    }

    /// Layer melt profile presenting this boundary location to heat flowing
    /// in the given direction (`bound` is the plateau end the shell sits at).
    fn melt_profile(self, n_lay: usize, bound: f64) -> Vec<f64> {
        let mut fr = vec![0.5; n_lay];
        match self {
            Self::Edge => {}
            Self::Halfway => {
                for f in fr.iter_mut().skip(n_lay / 2) {
                    *f = bound;
                }
            }
            Self::Centre => {
                for f in fr.iter_mut().skip(1) {
                    *f = bound;
                }
            }
        }
        fr
    }
}

/// One converged steady-state grid point (powers as magnitudes [W]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopePoint {
    pub m_e: f64,
    pub m_tes: f64,
    pub m_tes_sec: f64,
    pub q_e_sec: f64,
    pub q_tes: f64,
    pub q_tes_sec: f64,
    pub t_sh: f64,
    pub n_comp: f64,
    pub t_int: f64,
    pub p_e: f64,
    pub p_c: f64,
}

/// Per-mode feasible power ranges plus the underlying point cloud.
#[derive(Debug, Clone)]
pub struct PowerEnvelope {
    pub mode: u8,
    pub location: BoundaryLocation,
    /// (min, max) magnitude [W] of each active power; `None` when inactive.
    pub q_e_sec: Option<(f64, f64)>,
    pub q_tes: Option<(f64, f64)>,
    pub q_tes_sec: Option<(f64, f64)>,
    pub points: Vec<EnvelopePoint>,
}

/// Feasible cloud and upper frontier of the coupled (|Q_e_sec|, |Q_tes|) map.
#[derive(Debug, Clone)]
pub struct PowerMap {
    pub mode: u8,
    pub location: BoundaryLocation,
    pub points: Vec<EnvelopePoint>,
    /// Per-bin maxima of |Q_tes| over |Q_e_sec| bins: (bin centre, max).
    pub frontier: Vec<(f64, f64)>,
}

/// Virtual-flow grid box [kg/s] shared by all sweeps.
pub const FLOW_GRID_MIN: f64 = 0.001;
pub const FLOW_GRID_MAX: f64 = 0.010;

/// Safeguarded regula falsi (Illinois) on a monotone-decreasing residual.
/// `f` may declare a trial point infeasible by returning `Ok(None)`.
/// End-point residuals can be supplied when the caller already has them.
fn illinois<E>(
    mut f: impl FnMut(f64) -> Result<Option<f64>, E>,
    (lo, f_lo): (f64, Option<f64>),
    (hi, f_hi): (f64, Option<f64>),
    x_tol: f64,
    max_iter: usize,
) -> Result<Option<f64>, E> {
    let mut a = lo;
    let mut b = hi;
    let mut fa = match f_lo {
        Some(v) => v,
        None => match f(a)? {
            Some(v) => v,
            None => return Ok(None),
        },
    };
    if fa <= 0.0 {
        return Ok(Some(a));
    }
    let mut fb = match f_hi {
        Some(v) => v,
        None => match f(b)? {
            Some(v) => v,
            None => return Ok(None),
        },
    };
    if fb >= 0.0 {
        return Ok(Some(b));
    }
    let mut side = 0i8;
    for _ in 0..max_iter {
        if (b - a).abs() < x_tol {
            break;
        }
        let mut x = (a * fb - b * fa) / (fb - fa);
        // keep strictly inside; fall back to bisection when stuck at an edge
        if !(x > a.min(b) && x < a.max(b)) {
            x = 0.5 * (a + b);
        }
        let fx = match f(x)? {
            Some(v) => v,
            None => return Ok(None),
        };
        if fx > 0.0 {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    Ok(Some(0.5 * (a + b)))
}

/// Seeds carried between successive nonlinear solves.
#[derive(Debug, Clone, Copy, Default)]
pub struct WarmStart {
    /// Last converged suction pressure [Pa].
    pub p_e: Option<f64>,
    /// Last converged condensing temperature [K].
    pub t_c: Option<f64>,
}

/// All fixed data of one equilibrium sweep.
pub struct EquilibriumSolver<'a> {
    cfg: &'a PlantConfig,
    fluid: &'a FluidModel,
    /// Shell conductances [W/K, whole tank] for heat leaving / entering the
    /// PCM at the configured boundary location.
    g_out: f64,
    g_in: f64,
    t_sec_in: f64,
    t_amb: f64,
    t_surr: f64,
}

impl<'a> EquilibriumSolver<'a> {
    pub fn new(cfg: &'a PlantConfig, fluid: &'a FluidModel, location: BoundaryLocation) -> Self {
        let n_lay = cfg.tank.n_lay;
        let state_out = TesState::from_melt_profile(
            cfg.pcm.t_lat,
            &location.melt_profile(n_lay, 0.0),
            &cfg.tank,
            &cfg.pcm,
        )
        .expect("profile length matches geometry");
        let state_in = TesState::from_melt_profile(
            cfg.pcm.t_lat,
            &location.melt_profile(n_lay, 1.0),
            &cfg.tank,
            &cfg.pcm,
        )
        .expect("profile length matches geometry");
        Self {
            cfg,
            fluid,
            g_out: shell_conductance(&state_out, &cfg.pcm, &cfg.tank, PcmHeatDirection::OutOfPcm),
            g_in: shell_conductance(&state_in, &cfg.pcm, &cfg.tank, PcmHeatDirection::IntoPcm),
            t_sec_in: cfg.nominal.t_sec_in,
            t_amb: cfg.nominal.t_amb,
            t_surr: cfg.nominal.t_surr,
        }
    }

    /// Quasi-static PCM heat flow [W] into the intermediate fluid.
    fn q_pcm(&self, t_int: f64) -> f64 {
        let g = if t_int >= self.cfg.pcm.t_lat {
            self.g_in
        } else {
            self.g_out
        };
        g * (self.cfg.pcm.t_lat - t_int)
    }

    /// Cycle statics with the condensing pressure at its heat-balance
    /// equilibrium, at fixed intermediate-fluid temperature. `None` when the
    /// flows are infeasible anywhere along the solve. `warm_p_e` carries the
    /// suction-pressure seed between trial evaluations.
    pub fn cycle_at_t_int(
        &self,
        flows: (f64, f64, f64),
        n_comp: f64,
        t_int: f64,
        warm: &mut WarmStart,
    ) -> Result<Option<CycleOperatingPoint>, EnvelopeError> {
        let warm_p_e = &mut warm.p_e;
        let (m_e, m_tes, m_tes_sec) = flows;
        let cond = &self.cfg.condenser;
        let p_lo = self
            .fluid
            .sat_pressure(self.t_amb + 0.2)
            .unwrap_or(self.fluid.p_min() * 1.5);
        let p_hi = self.fluid.p_max() * 0.98;
        let mut solve_at = |p_c: f64| -> Option<(CycleOperatingPoint, f64)> {
            let sat = self.fluid.saturation(p_c).ok()?;
            let h_c_out = sat.h_liq - self.fluid.cp_liq * cond.subcooling;
            let ctx = StaticsContext {
                cfg: self.cfg,
                fluid: self.fluid,
                t_int,
                p_c,
                h_c_out,
                t_sec_in: self.t_sec_in,
                m_e_sec: self.cfg.nominal.m_e_sec,
            };
            let op = solve_statics(
                &ctx,
                BranchDrive::Flows { m_e, m_tes },
                n_comp,
                m_tes_sec,
                warm_p_e.filter(|p| *p < p_c * 0.99),
            )
            .ok()?;
            *warm_p_e = Some(op.p_e);
            let duty = op.m_total * (op.h_c_in - h_c_out);
            Some((op, duty))
        };
        // heat balance as a fixed point on the condensing temperature:
        // t_c = t_amb + duty(t_c) / UA_c; the duty moves weakly with t_c,
        // so plain substitution contracts quickly
        let mut t_c = warm.t_c.unwrap_or(self.t_amb + 8.0);
        let t_c_lo = self.fluid.sat_temperature(p_lo).map_err(EnvelopeError::from)?;
        let t_c_hi = self.fluid.sat_temperature(p_hi).map_err(EnvelopeError::from)?;
        for _ in 0..25 {
            t_c = t_c.clamp(t_c_lo, t_c_hi);
            let p_c = match self.fluid.sat_pressure(t_c) {
                Ok(p) => p,
                Err(_) => return Ok(None),
            };
            let (op, duty) = match solve_at(p_c) {
                Some(v) => v,
                None => return Ok(None),
            };
            let t_next = (self.t_amb + duty / cond.ua).clamp(t_c_lo, t_c_hi);
            if (t_next - t_c).abs() < 2.0e-3 {
                warm.t_c = Some(t_next);
                return Ok(Some(op));
            }
            t_c = t_next;
        }
        // substitution stalled (duty unusually sensitive): treat as infeasible
        Ok(None)
    }

    /// Tank-side steady state: intermediate-fluid temperature where the
    /// fluid's net heat flow vanishes, with the cycle re-solved at each
    /// trial. Returns the converged operating point and `t_int`.
    pub fn equilibrium_at_speed(
        &self,
        flows: (f64, f64, f64),
        n_comp: f64,
        t_hint: Option<f64>,
    ) -> Result<Option<(CycleOperatingPoint, f64)>, EnvelopeError> {
        let pcm = &self.cfg.pcm;
        let tank = &self.cfg.tank;
        let has_cycle = n_comp > 0.0 && (flows.0 > 0.0 || flows.1 > 0.0);
        // with neither bundle active the tank is decoupled from the cycle:
        // solve once at the phase-change temperature so the result cannot
        // depend on the boundary location
        if flows.1 <= 0.0 && flows.2 <= 0.0 {
            if !has_cycle {
                return Ok(Some((CycleOperatingPoint::stopped(0.0, 0.0), pcm.t_lat)));
            }
            let mut warm = WarmStart::default();
            return Ok(self
                .cycle_at_t_int(flows, n_comp, pcm.t_lat, &mut warm)?
                .map(|op| (op, pcm.t_lat)));
        }
        let t_lo = (pcm.t_lat - 60.0).max(self.fluid.t_min_margin());
        let t_hi = pcm.t_lat.max(self.t_sec_in) + 40.0;
        let mut op_cache: Option<CycleOperatingPoint> = None;
        let mut warm = WarmStart::default();
        let mut net = |t_int: f64,
                       cache: &mut Option<CycleOperatingPoint>|
         -> Result<Option<f64>, EnvelopeError> {
            let op = if has_cycle {
                match self.cycle_at_t_int(flows, n_comp, t_int, &mut warm)? {
                    Some(op) => op,
                    None => return Ok(None),
                }
            } else {
                let q_tes_sec = crate::pcm_tank::secondary_side(
                    self.t_sec_in,
                    flows.2,
                    t_int,
                    tank,
                    &self.cfg.secondary,
                )
                .q_tes_sec;
                CycleOperatingPoint::stopped(0.0, q_tes_sec)
            };
            let balance = op.q_tes - op.q_tes_sec
                + tank.ua_ambient * (self.t_surr - t_int)
                + self.q_pcm(t_int);
            *cache = Some(op);
            Ok(Some(balance))
        };
        // a hint from a nearby solution narrows the search to a small
        // bracket, falling back to the full interval when the root moved out
        let mut bracket = ((t_lo, None), (t_hi, None));
        if let Some(h) = t_hint {
            let (nl, nh) = ((h - 0.8).max(t_lo), (h + 0.8).min(t_hi));
            if nl < nh {
                let fl = net(nl, &mut op_cache)?;
                let fh = net(nh, &mut op_cache)?;
                if let (Some(fl), Some(fh)) = (fl, fh) {
                    if fl > 0.0 && fh < 0.0 {
                        bracket = ((nl, Some(fl)), (nh, Some(fh)));
                    }
                }
            }
        }
        let root = illinois(
            |t| net(t, &mut op_cache),
            bracket.0,
            bracket.1,
            2.0e-2,
            40,
        )?;
        match root {
            None => Ok(None),
            Some(t_int) => {
                let mut last = None;
                match net(t_int, &mut last)? {
                    Some(_) => Ok(last.map(|op| (op, t_int))),
                    None => Ok(None),
                }
            }
        }
    }

    /// Full steady state of one flow triple with the superheat supervision
    /// applied: the compressor runs at the lowest speed keeping
    /// `T_SH >= t_sh_min`. `None` when no admissible speed exists.
    pub fn solve(
        &self,
        mode: OperatingMode,
        flows: (f64, f64, f64),
        t_hint: Option<f64>,
    ) -> Result<Option<EnvelopePoint>, EnvelopeError> {
        let comp = &self.cfg.compressor;
        let t_sh_min = self.cfg.control.t_sh_min;
        if !mode.compressor_on() {
            return Ok(self
                .equilibrium_at_speed((0.0, 0.0, flows.2), 0.0, t_hint)?
                .map(|(op, t_int)| self.point(flows, 0.0, t_int, &op)));
        }

        let mut hint = t_hint;
        let at_min = self.equilibrium_at_speed(flows, comp.n_min, hint)?;
        if let Some((op, t_int)) = at_min {
            hint = Some(t_int);
            if op.t_sh >= t_sh_min && self.openings_admissible(&op) {
                return Ok(Some(self.point(flows, comp.n_min, t_int, &op)));
            }
        }
        let at_max = self.equilibrium_at_speed(flows, comp.n_max, hint)?;
        match &at_max {
            Some((op, t_int)) if op.t_sh >= t_sh_min => hint = Some(*t_int),
            _ => return Ok(None), // even the fastest speed cannot hold T_SH
        }
        // lowest speed with T_SH(n) - t_sh_min = 0 (T_SH rises with speed;
        // flip the sign for the decreasing-residual root finder)
        let mut cache: Option<(CycleOperatingPoint, f64)> = None;
        let g = |n: f64,
                 cache: &mut Option<(CycleOperatingPoint, f64)>,
                     hint: &mut Option<f64>|
         -> Result<Option<f64>, EnvelopeError> {
            match self.equilibrium_at_speed(flows, n, *hint)? {
                Some((op, t_int)) => {
                    let v = t_sh_min - op.t_sh;
                    *hint = Some(t_int);
                    *cache = Some((op, t_int));
                    Ok(Some(v))
                }
                None => Ok(None),
            }
        };
        let root = illinois(
            |n| g(n, &mut cache, &mut hint),
            (comp.n_min, None),
            (comp.n_max, None),
            0.05,
            40,
        )?;
        match root {
            None => Ok(None),
            Some(n) => {
                // nudge up until the minimum actually holds
                let mut n_ok = n;
                for _ in 0..6 {
                    let mut last = None;
                    if g(n_ok, &mut last, &mut hint)?.is_none() {
                        return Ok(None);
                    }
                    let (op, t_int) = last.expect("cached by g");
                    if op.t_sh >= t_sh_min - 1.0e-6 {
                        if !self.openings_admissible(&op) {
                            return Ok(None);
                        }
                        return Ok(Some(self.point(flows, n_ok, t_int, &op)));
                    }
                    n_ok = (n_ok + 0.05).min(comp.n_max);
                }
                Ok(None)
            }
        }
    }

    fn openings_admissible(&self, op: &CycleOperatingPoint) -> bool {
        let v = &self.cfg.valve;
        let ok = |m: f64, a: f64| m <= 0.0 || (a >= v.a_min - 1.0e-9 && a <= v.a_max + 1.0e-9);
        ok(op.m_e, op.a_v) && ok(op.m_tes, op.a_v_tes)
    }

    fn point(
        &self,
        flows: (f64, f64, f64),
        n_comp: f64,
        t_int: f64,
        op: &CycleOperatingPoint,
    ) -> EnvelopePoint {
        EnvelopePoint {
            m_e: flows.0,
            m_tes: flows.1,
            m_tes_sec: flows.2,
            q_e_sec: op.q_e_sec.abs(),
            q_tes: op.q_tes.abs(),
            q_tes_sec: op.q_tes_sec.abs(),
            t_sh: op.t_sh,
            n_comp,
            t_int,
            p_e: op.p_e,
            p_c: op.p_c,
        }
    }
}

impl FluidModel {
    fn t_min_margin(&self) -> f64 {
        self.sat_temperature(self.p_min() * 1.001).unwrap_or(180.0) + 1.0
    }
}

fn axis(active: bool, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !active {
        return vec![0.0];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Grids the admissible input box of `mode` and collects every converged
/// steady state into the mode's power envelope.
pub fn sweep_envelope(
    cfg: &PlantConfig,
    fluid: &FluidModel,
    mode: OperatingMode,
    location: BoundaryLocation,
    grid_n: usize,
) -> Result<PowerEnvelope, EnvelopeError> {
    if grid_n < 2 {
        return Err(EnvelopeError::GridTooSmall);
    }
    let solver = EquilibriumSolver::new(cfg, fluid, location);
    let ctl = &cfg.control;
    let m_e_axis = axis(mode.chamber_active(), FLOW_GRID_MIN, FLOW_GRID_MAX, grid_n);
    let m_tes_axis = axis(mode.charge_active(), FLOW_GRID_MIN, FLOW_GRID_MAX, grid_n);
    let m_sec_axis = axis(
        mode.discharge_active(),
        ctl.m_sec_min,
        ctl.m_sec_max,
        grid_n,
    );

    let mut grid = Vec::new();
    for &m_e in &m_e_axis {
        for &m_tes in &m_tes_axis {
            for &m_sec in &m_sec_axis {
                grid.push((m_e, m_tes, m_sec));
            }
        }
    }
    // grid points are independent; chunked threads keep the output order
    // (and therefore the envelope) identical to a serial sweep
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(grid.len().max(1));
    let chunk = grid.len().div_ceil(workers);
    let mut solved: Vec<Result<Option<EnvelopePoint>, EnvelopeError>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for slab in grid.chunks(chunk.max(1)) {
            let solver = &solver;
            handles.push(scope.spawn(move || {
                let mut hint: Option<f64> = None;
                slab.iter()
                    .map(|&flows| {
                        let r = solver.solve(mode, flows, hint);
                        if let Ok(Some(pt)) = &r {
                            hint = Some(pt.t_int);
                        }
                        r
                    })
                    .collect::<Vec<_>>()
            }));
        }
        for h in handles {
            solved.extend(h.join().expect("sweep worker panicked"));
        }
    });
    let mut points = Vec::new();
    for r in solved {
        if let Some(pt) = r? {
            points.push(pt);
        }
    }

    let minmax = |active: bool, get: fn(&EnvelopePoint) -> f64| {
        if !active || points.is_empty() {
            return None;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &points {
            let v = get(p);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Some((lo, hi))
    };
    Ok(PowerEnvelope {
        mode: mode.as_u8(),
        location,
        q_e_sec: minmax(mode.chamber_active(), |p| p.q_e_sec),
        q_tes: minmax(mode.charge_active(), |p| p.q_tes),
        q_tes_sec: minmax(mode.discharge_active(), |p| p.q_tes_sec),
        points,
    })
}

/// Coupled (|Q_e_sec|, |Q_tes|) map of mode 1 or 7 with its upper frontier.
pub fn coupled_power_map(
    cfg: &PlantConfig,
    fluid: &FluidModel,
    mode: OperatingMode,
    location: BoundaryLocation,
    grid_n: usize,
) -> Result<PowerMap, EnvelopeError> {
    let env = sweep_envelope(cfg, fluid, mode, location, grid_n)?;
    let mut frontier = Vec::new();
    if !env.points.is_empty() {
        let x_max = env
            .points
            .iter()
            .map(|p| p.q_e_sec)
            .fold(f64::NEG_INFINITY, f64::max);
        let x_min = env
            .points
            .iter()
            .map(|p| p.q_e_sec)
            .fold(f64::INFINITY, f64::min);
        let bins = grid_n;
        let width = ((x_max - x_min) / bins as f64).max(1e-9);
        let mut best = vec![f64::NEG_INFINITY; bins];
        for p in &env.points {
            let i = (((p.q_e_sec - x_min) / width) as usize).min(bins - 1);
            best[i] = best[i].max(p.q_tes);
        }
        for (i, &b) in best.iter().enumerate() {
            if b > f64::NEG_INFINITY {
                frontier.push((x_min + (i as f64 + 0.5) * width, b));
            }
        }
    }
    Ok(PowerMap {
        mode: env.mode,
        location,
        points: env.points,
        frontier,
    })
}
