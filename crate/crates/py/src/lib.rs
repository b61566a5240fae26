//! Python bindings: refrigerant properties, decoupling synthesis, the tank
//! model, envelope sweeps, and the closed-loop scenario runner.

use std::collections::HashMap;
use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tescycle::config::PlantConfig;
use tescycle::control::OperatingMode;
use tescycle::envelope::{sweep_envelope, BoundaryLocation};
use tescycle::pcm_tank::{self, TesState};
use tescycle::sim::{run_scenario, trace_to_csv, Scenario, SimOptions};
use tescycle::thermo::FluidModel;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn mode_from_u8(m: u8) -> PyResult<OperatingMode> {
    use OperatingMode::*;
    Ok(match m {
        1 => M1,
        2 => M2,
        3 => M3,
        4 => M4,
        5 => M5,
        6 => M6,
        7 => M7,
        8 => M8,
        _ => return Err(value_err(format!("no such operating mode: {m}"))),
    })
}

fn location_from_str(s: &str) -> PyResult<BoundaryLocation> {
    Ok(match s {
        "edge" => BoundaryLocation::Edge,
        "halfway" => BoundaryLocation::Halfway,
        "centre" | "center" => BoundaryLocation::Centre,
        _ => return Err(value_err(format!("no such boundary location: {s}"))),
    })
}

/// Table-backed refrigerant property model (the built-in R404A-class fluid).
#[pyclass]
struct Fluid {
    inner: FluidModel,
}

#[pymethods]
impl Fluid {
    #[new]
    fn new() -> Self {
        Self {
            inner: FluidModel::default_refrigerant(),
        }
    }

    /// Saturation temperature [K] at pressure [Pa].
    fn sat_temperature(&self, p: f64) -> PyResult<f64> {
        self.inner.sat_temperature(p).map_err(value_err)
    }

    /// Temperature [K] at the pressure/specific-enthalpy pair.
    fn temperature_ph(&self, p: f64, h: f64) -> PyResult<f64> {
        self.inner.temperature_ph(p, h).map_err(value_err)
    }

    /// Vapour quality at (P, h); raises outside the two-phase dome.
    fn quality_ph(&self, p: f64, h: f64) -> PyResult<f64> {
        self.inner.quality_ph(p, h).map_err(value_err)
    }

    /// Specific enthalpy [J/kg] at (P, q).
    fn enthalpy_pq(&self, p: f64, q: f64) -> PyResult<f64> {
        self.inner.enthalpy_pq(p, q).map_err(value_err)
    }

    /// Density [kg/m3] at (P, h).
    fn density_ph(&self, p: f64, h: f64) -> PyResult<f64> {
        self.inner.density_ph(p, h).map_err(value_err)
    }

    #[getter]
    fn p_min(&self) -> f64 {
        self.inner.p_min()
    }

    #[getter]
    fn p_max(&self) -> f64 {
        self.inner.p_max()
    }
}

/// PCM storage tank with the default plant geometry.
#[pyclass]
struct Tank {
    cfg: PlantConfig,
    fluid: FluidModel,
    state: TesState,
}

#[pymethods]
impl Tank {
    /// A tank with every layer at the given molten fraction and the given
    /// intermediate-fluid temperature [K].
    #[new]
    #[pyo3(signature = (t_int=244.15, melt_fraction=0.5))]
    fn new(t_int: f64, melt_fraction: f64) -> Self {
        let cfg = PlantConfig::default();
        let state = TesState::uniform(t_int, melt_fraction, &cfg.tank, &cfg.pcm);
        Self {
            cfg,
            fluid: FluidModel::default_refrigerant(),
            state,
        }
    }

    /// Charge ratio in [0, 1].
    #[getter]
    fn gamma(&self) -> f64 {
        pcm_tank::charge_ratio(&self.state, &self.cfg.pcm, &self.cfg.tank).gamma
    }

    #[getter]
    fn t_int(&self) -> f64 {
        self.state.t_int
    }

    /// Refrigerant-side exchange at the current state: returns
    /// `(q_tes, h_out)` with the tank-side sign convention.
    fn refrigerant_side(&self, p_in: f64, h_in: f64, m_dot: f64) -> PyResult<(f64, f64)> {
        let r = pcm_tank::refrigerant_side(
            &self.fluid,
            p_in,
            h_in,
            m_dot,
            self.state.t_int,
            &self.cfg.tank,
        )
        .map_err(value_err)?;
        Ok((r.q_tes, r.h_out))
    }

    /// Secondary-side exchange: returns `(q_tes_sec, t_sec_out)`.
    fn secondary_side(&self, t_sec_in: f64, m_dot: f64) -> (f64, f64) {
        let s = pcm_tank::secondary_side(
            t_sec_in,
            m_dot,
            self.state.t_int,
            &self.cfg.tank,
            &self.cfg.secondary,
        );
        (s.q_tes_sec, s.t_sec_out)
    }

    /// Advances the tank by `dt` seconds with the boundary powers held
    /// constant; returns the new charge ratio.
    #[pyo3(signature = (q_tes, q_tes_sec, dt, t_surr=293.15))]
    fn step_slow(&mut self, q_tes: f64, q_tes_sec: f64, dt: f64, t_surr: f64) -> PyResult<f64> {
        let (next, _) = pcm_tank::step_slow(
            &self.state,
            t_surr,
            q_tes,
            q_tes_sec,
            dt,
            &self.cfg.tank,
            &self.cfg.pcm,
            true,
        )
        .map_err(value_err)?;
        self.state = next;
        Ok(self.gamma())
    }
}

/// Relative gain array of a 2x2 static gain block.
#[pyfunction]
#[pyo3(name = "rga")]
fn rga_py(k: [[f64; 2]; 2]) -> PyResult<[[f64; 2]; 2]> {
    tescycle::control::rga(k).map_err(value_err)
}

/// Unit-diagonal decoupler: returns `(d, k_diag)`.
#[pyfunction]
fn synthesize_decoupler(k: [[f64; 2]; 2]) -> PyResult<([[f64; 2]; 2], [f64; 2])> {
    let d = tescycle::control::synthesize_decoupler(k).map_err(value_err)?;
    Ok((d.d, d.k_diag))
}

/// Steady-state power envelope of one operating mode at one boundary
/// location. Returns a dict with the per-power `(min, max)` ranges and the
/// feasible point count.
#[pyfunction]
#[pyo3(signature = (mode, location="edge", grid=9))]
fn envelope(
    py: Python<'_>,
    mode: u8,
    location: &str,
    grid: usize,
) -> PyResult<HashMap<String, Py<PyAny>>> {
    let cfg = PlantConfig::default();
    let fluid = cfg.refrigerant().map_err(runtime_err)?;
    let env = sweep_envelope(
        &cfg,
        &fluid,
        mode_from_u8(mode)?,
        location_from_str(location)?,
        grid,
    )
    .map_err(runtime_err)?;
    let mut out: HashMap<String, Py<PyAny>> = HashMap::new();
    let set = |out: &mut HashMap<String, Py<PyAny>>,
               name: &str,
               v: Option<(f64, f64)>|
     -> PyResult<()> {
        out.insert(name.to_string(), v.into_pyobject(py)?.into_any().unbind());
        Ok(())
    };
    set(&mut out, "q_e_sec", env.q_e_sec)?;
    set(&mut out, "q_tes", env.q_tes)?;
    set(&mut out, "q_tes_sec", env.q_tes_sec)?;
    out.insert(
        "points".to_string(),
        env.points.len().into_pyobject(py)?.into_any().unbind(),
    );
    Ok(out)
}

/// Runs a closed-loop scenario file; optionally writes the trace CSV.
/// Returns a summary dict.
#[pyfunction]
#[pyo3(signature = (scenario_path, trace_csv=None, decoupler=true, feedforward=true))]
fn run_scenario_file(
    py: Python<'_>,
    scenario_path: &str,
    trace_csv: Option<&str>,
    decoupler: bool,
    feedforward: bool,
) -> PyResult<HashMap<String, Py<PyAny>>> {
    let cfg = PlantConfig::default();
    let fluid = cfg.refrigerant().map_err(runtime_err)?;
    let sc = Scenario::from_path(Path::new(scenario_path)).map_err(value_err)?;
    let opts = SimOptions {
        use_decoupler: decoupler,
        use_feedforward: feedforward,
    };
    let result = run_scenario(&cfg, &fluid, &sc, &opts).map_err(runtime_err)?;
    if let Some(path) = trace_csv {
        std::fs::write(path, trace_to_csv(&result.trace)).map_err(runtime_err)?;
    }
    let mut out: HashMap<String, Py<PyAny>> = HashMap::new();
    out.insert(
        "rows".into(),
        result.trace.len().into_pyobject(py)?.into_any().unbind(),
    );
    out.insert(
        "min_t_sh".into(),
        result.summary.min_t_sh.into_pyobject(py)?.into_any().unbind(),
    );
    out.insert(
        "final_gamma".into(),
        result.summary.final_gamma.into_pyobject(py)?.into_any().unbind(),
    );
    out.insert(
        "mode_sequence".into(),
        result
            .summary
            .mode_sequence
            .iter()
            .map(|&m| m as u32)
            .collect::<Vec<u32>>()
            .into_pyobject(py)?
            .into_any()
            .unbind(),
    );
    out.insert(
        "failure".into(),
        result.failure.into_pyobject(py)?.into_any().unbind(),
    );
    Ok(out)
}

#[pymodule]
fn tescycle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Fluid>()?;
    m.add_class::<Tank>()?;
    m.add_function(wrap_pyfunction!(rga_py, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_decoupler, m)?)?;
    m.add_function(wrap_pyfunction!(envelope, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario_file, m)?)?;
    Ok(())
}
