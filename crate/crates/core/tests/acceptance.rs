//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see every line;
//! the envelope criteria take a few minutes at the full 21-point grid.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use tescycle::config::PlantConfig;
use tescycle::control::{rga, synthesize_decoupler, OperatingMode};
use tescycle::cycle::{
    bisect_suction_pressure, junction, solve_statics, BranchDrive, StaticsContext, PSI_TOL,
};
use tescycle::envelope::{coupled_power_map, sweep_envelope, BoundaryLocation};
use tescycle::pcm_tank::{
    charge_ratio, refrigerant_side, secondary_side, step_slow, TesState,
};
use tescycle::sim::{run_scenario, RefSegment, Scenario, SimOptions, TraceRow};
use tescycle::thermo::FluidModel;

fn verdict(criterion: u32, name: &str, pass: bool) -> bool {
    println!(
        "criterion {criterion:2}: {} - {name}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn plant() -> (PlantConfig, FluidModel) {
    (PlantConfig::default(), FluidModel::default_refrigerant())
}

#[test]
fn criterion_01_rga_anchor() {
    let l = rga([[4.5e4, -2.0e4], [-2.0e4, 5.0e4]]).unwrap();
    let ok = (l[0][0] - 1.22).abs() < 0.005
        && (l[1][1] - 1.22).abs() < 0.005
        && (l[0][1] + 0.22).abs() < 0.005
        && (l[1][0] + 0.22).abs() < 0.005;
    assert!(verdict(1, "relative gain array reference values", ok));
}

#[test]
fn criterion_02_decoupler_anchor() {
    let k = [[4.5e4, -2.0e4], [-2.0e4, 5.0e4]];
    let d = synthesize_decoupler(k).unwrap();
    let kd01 = k[0][0] * d.d[0][1] + k[0][1] * d.d[1][1];
    let kd10 = k[1][0] * d.d[0][0] + k[1][1] * d.d[1][0];
    let norm = 5.0e4;
    let ok = (d.d[0][1] - 0.44).abs() < 0.005
        && (d.d[1][0] - 0.40).abs() < 0.005
        && (d.k_diag[0] - 3.7e4).abs() < 0.05e4
        && (d.k_diag[1] - 4.1e4).abs() < 0.05e4
        && kd01.abs() < 1e-6 * norm
        && kd10.abs() < 1e-6 * norm;
    assert!(verdict(2, "decoupling matrix reference solution", ok));
}

#[test]
fn criterion_03_junction_exactness() {
    let (_, fluid) = plant();
    let mut rng = StdRng::seed_from_u64(3);
    let mut ok = true;
    for _ in 0..1000 {
        let p_e = rng.gen_range(0.5e5..3.0e5);
        let sat = fluid.saturation(p_e).unwrap();
        let m_e = rng.gen_range(1.0e-4..1.0e-2);
        let m_tes = rng.gen_range(1.0e-4..1.0e-2);
        let h_e = rng.gen_range(sat.h_liq..sat.h_vap + 40.0e3);
        let h_t = rng.gen_range(sat.h_liq..sat.h_vap + 40.0e3);
        let j = junction(&fluid, m_e, h_e, m_tes, h_t, p_e).unwrap();
        // energy balance of the mix holds to relative 1e-12
        let lhs = (m_e + m_tes) * j.h_comp_in;
        let rhs = m_e * h_e + m_tes * h_t;
        if ((lhs - rhs) / rhs).abs() > 1e-12 {
            ok = false;
        }
        // superheat is the defining temperature difference
        let t_sh = fluid.temperature_ph(p_e, j.h_comp_in).unwrap() - sat.t_sat;
        if (t_sh - j.t_sh).abs() > 1e-12 {
            ok = false;
        }
    }
    assert!(verdict(3, "junction mass/energy balances on 1000 random draws", ok));
}

#[test]
fn criterion_04_charge_ratio_endpoints() {
    let (cfg, _) = plant();
    let (curve, geom) = (cfg.pcm, cfg.tank.clone());
    let full = TesState::uniform(curve.t_lat, 0.0, &geom, &curve);
    let empty = TesState::uniform(curve.t_lat, 1.0, &geom, &curve);
    let endpoints = charge_ratio(&full, &curve, &geom).gamma == 1.0
        && charge_ratio(&empty, &curve, &geom).gamma == 0.0;
    // four equal-thickness layers weigh 1/16, 3/16, 5/16, 7/16 of the
    // cylinder: layers {0, 3} and {1, 2} hold exactly half the mass each
    let mut g4 = geom.clone();
    g4.n_lay = 4;
    let half = TesState::from_melt_profile(curve.t_lat, &[0.0, 1.0, 1.0, 0.0], &g4, &curve).unwrap();
    let half_ok = (charge_ratio(&half, &curve, &g4).gamma - 0.5).abs() < 1e-9;
    assert!(verdict(4, "charge-ratio endpoints and mass-weighted half", endpoints && half_ok));
}

/// Tank boundary powers recomputed from the current state, as the simulation
/// loop does each slow window.
fn tank_powers(
    cfg: &PlantConfig,
    fluid: &FluidModel,
    state: &TesState,
    m_tes: f64,
    m_sec: f64,
) -> (f64, f64) {
    let r = refrigerant_side(fluid, 1.0e5, 258.0e3, m_tes, state.t_int, &cfg.tank).unwrap();
    let s = secondary_side(253.15, m_sec, state.t_int, &cfg.tank, &cfg.secondary);
    (r.q_tes, s.q_tes_sec)
}

#[test]
fn criterion_05_tes_energy_conservation() {
    let (mut cfg, fluid) = plant();
    cfg.tank.ua_ambient = 0.0; // adiabatic bookkeeping run
    let curve = cfg.pcm;
    let mut state = TesState::uniform(242.15, 1.0, &cfg.tank, &curve);
    let mut ok = true;
    let mut drift = 0.0;
    let mut exchanged = 0.0;
    let dt = 30.0;
    // full charge, then full discharge
    for phase in 0..2 {
        for _ in 0..40_000 {
            let (q_tes, q_sec) = if phase == 0 {
                (tank_powers(&cfg, &fluid, &state, 0.006, 0.0).0, 0.0)
            } else {
                (0.0, tank_powers(&cfg, &fluid, &state, 0.0, 0.25).1)
            };
            let (next, diag) =
                step_slow(&state, 293.15, q_tes, q_sec, dt, &cfg.tank, &curve, true).unwrap();
            if diag.residual.abs() > 1e-3 * diag.throughput.max(1.0) {
                ok = false;
            }
            drift += diag.residual;
            exchanged += diag.throughput;
            state = next;
            let gamma = charge_ratio(&state, &curve, &cfg.tank).gamma;
            if phase == 0 && gamma >= 0.995 {
                break;
            }
            if phase == 1 && gamma <= 0.005 {
                break;
            }
        }
    }
    let cumulative_ok = drift.abs() < 5e-3 * exchanged;
    assert!(verdict(
        5,
        "tank energy conservation over full charge + discharge",
        ok && cumulative_ok
    ));
}

/// Time [s] to complete a charge (gamma 0 -> 1) and the power samples along
/// the run.
fn charge_run(cfg: &PlantConfig, fluid: &FluidModel, m_tes: f64) -> (f64, Vec<(f64, f64)>) {
    let curve = cfg.pcm;
    let mut state = TesState::uniform(242.15, 1.0, &cfg.tank, &curve);
    let dt = 30.0;
    let mut t = 0.0;
    let mut samples = Vec::new();
    loop {
        let (q_tes, _) = tank_powers(cfg, fluid, &state, m_tes, 0.0);
        let gamma = charge_ratio(&state, &curve, &cfg.tank).gamma;
        samples.push((gamma, q_tes.abs()));
        if gamma >= 0.995 || t > 3.0e6 {
            return (t, samples);
        }
        let (next, _) = step_slow(&state, 293.15, q_tes, 0.0, dt, &cfg.tank, &curve, true).unwrap();
        state = next;
        t += dt;
    }
}

fn discharge_run(cfg: &PlantConfig, fluid: &FluidModel, m_sec: f64) -> (f64, Vec<(f64, f64)>) {
    let curve = cfg.pcm;
    let mut state = TesState::uniform(246.15, 0.0, &cfg.tank, &curve);
    let dt = 30.0;
    let mut t = 0.0;
    let mut samples = Vec::new();
    loop {
        let (_, q_sec) = tank_powers(cfg, fluid, &state, 0.0, m_sec);
        let gamma = charge_ratio(&state, &curve, &cfg.tank).gamma;
        samples.push((gamma, q_sec.abs()));
        if gamma <= 0.005 || t > 3.0e6 {
            return (t, samples);
        }
        let (next, _) = step_slow(&state, 293.15, 0.0, q_sec, dt, &cfg.tank, &curve, true).unwrap();
        state = next;
        t += dt;
    }
}

#[test]
fn criterion_06_charge_discharge_trends() {
    let (mut cfg, fluid) = plant();
    cfg.tank.ua_ambient = 0.0; // isolate the transfer trends from losses
    // charge levels from the five valve openings at the nominal lift
    let sat = fluid.saturation(15.0e5).unwrap();
    let rho_up = fluid
        .density_ph(15.0e5, sat.h_liq - fluid.cp_liq * 2.0)
        .unwrap();
    let charge_flows: Vec<f64> = [10.0, 30.0, 50.0, 70.0, 90.0]
        .iter()
        .map(|a| tescycle::cycle::valve_flow(cfg.valve.c_v, *a, 15.0e5, rho_up, 1.0e5).0)
        .collect();
    let discharge_flows = [0.050, 0.150, 0.250, 0.350, 0.450];

    let mut ok = true;
    let mut prev_time = f64::INFINITY;
    let mut charge_drop_mid = 0.0;
    for (i, &m) in charge_flows.iter().enumerate() {
        let (t_full, samples) = charge_run(&cfg, &fluid, m);
        if t_full >= prev_time {
            ok = false; // more power must charge strictly faster
        }
        prev_time = t_full;
        if i == 2 {
            charge_drop_mid = edge_to_centre_drop(&samples);
        }
    }
    let mut prev_time = f64::INFINITY;
    let mut discharge_drop_mid = 0.0;
    for (i, &m) in discharge_flows.iter().enumerate() {
        let (t_full, samples) = discharge_run(&cfg, &fluid, m);
        if t_full >= prev_time {
            ok = false;
        }
        prev_time = t_full;
        // once past the initial intermediate-fluid transient (the global
        // power peak), the released power never recovers within one run
        let peak_at = samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        for w in samples[peak_at..].windows(2) {
            if w[1].1 > w[0].1 * (1.0 + 1e-9) {
                ok = false;
            }
        }
        if i == 2 {
            discharge_drop_mid = edge_to_centre_drop(&samples);
        }
    }
    let asymmetry_ok = discharge_drop_mid > charge_drop_mid;
    println!(
        "  (edge-to-centre power drop: discharge {:.1} %, charge {:.1} %)",
        discharge_drop_mid * 100.0,
        charge_drop_mid * 100.0
    );
    assert!(verdict(
        6,
        "charge/discharge times and power degradation trends",
        ok && asymmetry_ok
    ));
}

/// Relative power drop between the early (boundary near the edge) and late
/// (boundary near the centre) phases of a full charge or discharge.
fn edge_to_centre_drop(samples: &[(f64, f64)]) -> f64 {
    let phase = |lo: f64, hi: f64| {
        let vals: Vec<f64> = samples
            .iter()
            .filter(|(g, _)| {
                let progress = if samples[0].0 > 0.5 { 1.0 - g } else { *g };
                progress >= lo && progress <= hi
            })
            .map(|(_, p)| *p)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    };
    let early = phase(0.05, 0.15);
    let late = phase(0.85, 0.95);
    (early - late) / early.max(1e-9)
}

#[test]
fn criterion_07_and_08_envelope_structure() {
    let (cfg, fluid) = plant();
    let grid = 21;
    let all = BoundaryLocation::ALL;

    // (a) mode 2 identical across boundary locations
    let m2: Vec<_> = all
        .iter()
        .map(|&loc| sweep_envelope(&cfg, &fluid, OperatingMode::M2, loc, grid).unwrap())
        .collect();
    let a_ok = m2[0].q_e_sec == m2[1].q_e_sec && m2[1].q_e_sec == m2[2].q_e_sec;

    // (b) mode 4 discharge maximum strictly decreasing edge -> centre
    let m4: Vec<f64> = all
        .iter()
        .map(|&loc| {
            sweep_envelope(&cfg, &fluid, OperatingMode::M4, loc, grid)
                .unwrap()
                .q_tes_sec
                .expect("mode 4 discharges")
                .1
        })
        .collect();
    let b_ok = m4[0] > m4[1] && m4[1] > m4[2];

    // (c) mode-1/7 charge maxima nearly location-independent (< 2 % spread),
    //     and (d) every point holds the minimum superheat
    let mut c_ok = true;
    let mut d_ok = true;
    let mut maps = Vec::new();
    for mode in [OperatingMode::M1, OperatingMode::M7] {
        let mut maxima = Vec::new();
        for &loc in &all {
            let map = coupled_power_map(&cfg, &fluid, mode, loc, grid).unwrap();
            let q_max = map
                .points
                .iter()
                .map(|p| p.q_tes)
                .fold(f64::NEG_INFINITY, f64::max);
            maxima.push(q_max);
            for p in &map.points {
                if p.n_comp > 0.0 && p.t_sh < cfg.control.t_sh_min - 1e-6 {
                    d_ok = false;
                }
            }
            maps.push(map);
        }
        let hi = maxima.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = maxima.iter().cloned().fold(f64::INFINITY, f64::min);
        println!(
            "  (mode {} charge maxima by location: {:.1} / {:.1} / {:.1} W, spread {:.2} %)",
            mode.as_u8(),
            maxima[0],
            maxima[1],
            maxima[2],
            (hi - lo) / hi * 100.0
        );
        if (hi - lo) / hi >= 0.02 {
            c_ok = false;
        }
    }
    println!("  (7a mode2 identical: {a_ok}, 7b mode4 decreasing: {b_ok}, 7c spreads: {c_ok}, 7d superheat: {d_ok})");
    assert!(verdict(
        7,
        "envelope structure across boundary locations",
        a_ok && b_ok && c_ok && d_ok
    ));

    // criterion 8 reuses the mode-1/7 maps: frontier monotone, corner infeasible
    let mut frontier_ok = true;
    let mut corner_ok = true;
    for map in &maps {
        let mut prev = f64::INFINITY;
        for &(_, q_tes_max) in &map.frontier {
            if q_tes_max > prev + 1e-6 {
                frontier_ok = false;
            }
            prev = q_tes_max;
        }
        let x_max = map
            .points
            .iter()
            .map(|p| p.q_e_sec)
            .fold(f64::NEG_INFINITY, f64::max);
        let y_max = map
            .points
            .iter()
            .map(|p| p.q_tes)
            .fold(f64::NEG_INFINITY, f64::max);
        if map
            .points
            .iter()
            .any(|p| p.q_e_sec >= 0.98 * x_max && p.q_tes >= 0.98 * y_max)
        {
            corner_ok = false; // the rectangle corner must not be reachable
        }
    }
    assert!(verdict(
        8,
        "coupled power map frontier monotone, corner infeasible",
        frontier_ok && corner_ok
    ));
}

fn tour_scenario() -> Scenario {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/mode_tour.toml");
    Scenario::from_path(std::path::Path::new(path)).unwrap()
}

fn segment_bounds(sc: &Scenario) -> Vec<(f64, f64)> {
    let mut bounds = Vec::new();
    for (i, seg) in sc.refs.iter().enumerate() {
        let end = sc
            .refs
            .get(i + 1)
            .map(|s| s.t_start)
            .unwrap_or(sc.duration_s);
        bounds.push((seg.t_start, end));
    }
    bounds
}

#[test]
fn criterion_09_mode_tour_tracking() {
    let (cfg, fluid) = plant();
    let sc = tour_scenario();
    let r = run_scenario(&cfg, &fluid, &sc, &SimOptions::default()).unwrap();
    let mut ok = r.failure.is_none();

    // tracking per segment: steady-state error < 1 %, +-5 % settling < 2 min
    for (a, b) in segment_bounds(&sc) {
        let seg: Vec<&TraceRow> = r.trace.iter().filter(|row| row.t >= a && row.t < b).collect();
        let tail: Vec<&TraceRow> = seg
            .iter()
            .copied()
            .filter(|row| row.t >= b - (b - a) * 0.2)
            .collect();
        type Channel = (f64, fn(&TraceRow) -> f64);
        let channels: [Channel; 3] = [
            (seg[0].q_e_sec_ref, |r| r.q_e_sec),
            (seg[0].q_tes_ref, |r| r.q_tes),
            (seg[0].q_tes_sec_ref, |r| r.q_tes_sec),
        ];
        for (reference, meas) in channels {
            if reference < 1.0 {
                continue;
            }
            let ss = tail.iter().map(|r| meas(r)).sum::<f64>() / tail.len() as f64;
            if ((ss - reference) / reference).abs() > 0.01 {
                ok = false;
            }
            let mut settle = a;
            for row in &seg {
                if (meas(row) - reference).abs() > 0.05 * reference {
                    settle = row.t + 5.0;
                }
            }
            if settle - a > 120.0 {
                ok = false;
            }
        }
    }

    // minimum superheat while the cycle runs
    if r.summary.min_t_sh.unwrap_or(0.0) < 1.8 {
        ok = false;
    }
    // intended mode order
    if r.summary.mode_sequence != vec![1, 2, 3, 4, 5, 6, 7] {
        ok = false;
    }
    // charge ratio keeps falling through modes 6-7 (net discharge)
    let g67: Vec<f64> = r
        .trace
        .iter()
        .filter(|row| row.t >= 3300.0)
        .map(|row| row.gamma_tes)
        .collect();
    if !g67.windows(2).all(|w| w[1] <= w[0] + 1e-12) {
        ok = false;
    }
    // secondary flow ramps upward under the constant mode-3 reference
    let seg3: Vec<&TraceRow> = r
        .trace
        .iter()
        .filter(|row| (1560.0..2100.0).contains(&row.t))
        .collect();
    let head = seg3[..12].iter().map(|r| r.m_tes_sec).sum::<f64>() / 12.0;
    let tail = seg3[seg3.len() - 12..]
        .iter()
        .map(|r| r.m_tes_sec)
        .sum::<f64>()
        / 12.0;
    if tail <= head * 1.005 {
        ok = false;
    }
    assert!(verdict(9, "closed-loop mode tour tracking and trends", ok));
}

#[test]
fn criterion_10_decoupler_ablation() {
    let (cfg, fluid) = plant();
    let (q_base, q_step, q_tes_ref) = (350.0, 500.0, 420.0);
    let sc = Scenario {
        duration_s: 1400.0,
        refs: vec![
            RefSegment {
                t_start: 0.0,
                q_e_sec: q_base,
                q_tes: q_tes_ref,
                q_tes_sec: 0.0,
            },
            RefSegment {
                t_start: 900.0,
                q_e_sec: q_step,
                q_tes: q_tes_ref,
                q_tes_sec: 0.0,
            },
        ],
        ..Scenario::default()
    };
    let peak = |use_decoupler: bool| {
        let r = run_scenario(
            &cfg,
            &fluid,
            &sc,
            &SimOptions {
                use_decoupler,
                use_feedforward: true,
            },
        )
        .unwrap();
        assert!(r.failure.is_none());
        r.trace
            .iter()
            .filter(|row| (900.0..=1250.0).contains(&row.t))
            .map(|row| (row.q_tes - q_tes_ref).abs())
            .fold(0.0f64, f64::max)
    };
    let with_decoupler = peak(true);
    let without = peak(false);
    let step = q_step - q_base;
    println!(
        "  (cross peak with decoupler {:.2} W = {:.1} % of the step; without {:.2} W; ratio {:.2})",
        with_decoupler,
        with_decoupler / step * 100.0,
        without,
        without / with_decoupler
    );
    let small_ok = with_decoupler < 0.15 * step;
    let ratio_ok = without >= 2.0 * with_decoupler;
    assert!(verdict(
        10,
        "decoupler ablation: cross peak small and ablation at least twice worse",
        small_ok && ratio_ok
    ));
}

#[test]
fn criterion_11_statics_solver_oracle() {
    let (cfg, fluid) = plant();
    let mut rng = StdRng::seed_from_u64(11);
    let mut checked = 0;
    let mut ok = true;
    let mut attempts = 0;
    while checked < 100 && attempts < 2000 {
        attempts += 1;
        let p_c = rng.gen_range(1.1e6..1.6e6);
        let sat = fluid.saturation(p_c).unwrap();
        let ctx = StaticsContext {
            cfg: &cfg,
            fluid: &fluid,
            t_int: rng.gen_range(242.0..248.0),
            p_c,
            h_c_out: sat.h_liq - fluid.cp_liq * cfg.condenser.subcooling,
            t_sec_in: cfg.nominal.t_sec_in,
            m_e_sec: cfg.nominal.m_e_sec,
        };
        let drive = BranchDrive::Flows {
            m_e: rng.gen_range(1.5e-3..8.0e-3),
            m_tes: rng.gen_range(1.5e-3..8.0e-3),
        };
        let n = rng.gen_range(30.0..50.0);
        let Ok(op) = solve_statics(&ctx, drive, n, 0.0, None) else {
            continue; // infeasible draw, resample
        };
        checked += 1;
        if op.residual.abs() >= PSI_TOL {
            ok = false;
        }
        let p_ref = bisect_suction_pressure(&ctx, drive, n, 1.0e-4).unwrap();
        if (op.p_e - p_ref).abs() >= 10.0 {
            ok = false;
        }
    }
    assert!(verdict(
        11,
        "fixed-point suction solution matches the bisection oracle",
        ok && checked == 100
    ));
}

#[test]
fn criterion_12_condenser_time_constant() {
    let (cfg, fluid) = plant();
    let cal = tescycle::calib::calibrate(&cfg, &fluid).unwrap();
    println!("  (identified tau_dp = {:.1} s)", cal.tau_dp);
    let ok = cal.tau_dp >= 21.0 && cal.tau_dp <= 84.0;
    assert!(verdict(
        12,
        "identified dominant time constant within a factor 2 of 42 s",
        ok
    ));
}
