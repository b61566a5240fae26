//! Saturation-table storage and interpolation.
//!
//! The table is a structured text file, one knot per line, sorted by rising
//! pressure. Line format (tab- or whitespace-separated):
//!
//! ```text
//! # tescycle-fluid-table v1 <fluid-name>
//! # P[Pa]  T_sat[K]  h_liq[J/kg]  h_vap[J/kg]  s_liq[J/kgK]  s_vap[J/kgK]  rho_liq[kg/m3]  rho_vap[kg/m3]
//! 12000.0  191.33  81273.1  295618.9  ...
//! ```
//!
//! Lookups interpolate linearly between knots; queries outside the tabulated
//! pressure range are errors, never clamps.

use super::ThermoError;

/// One saturation knot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatRow {
    pub p: f64,
    pub t_sat: f64,
    pub h_liq: f64,
    pub h_vap: f64,
    pub s_liq: f64,
    pub s_vap: f64,
    pub rho_liq: f64,
    pub rho_vap: f64,
}

/// Saturation curve of one fluid as sorted knots.
#[derive(Debug, Clone)]
pub struct SaturationTable {
    pub(crate) name: String,
    rows: Vec<SatRow>,
}

impl SaturationTable {
    /// Parses the structured text format described in the module docs.
    pub fn parse(text: &str) -> Result<Self, ThermoError> {
        let mut name = String::from("unnamed");
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(tag) = rest.strip_prefix("tescycle-fluid-table") {
                    let mut parts = tag.split_whitespace();
                    match parts.next() {
                        Some("v1") => {}
                        other => {
                            return Err(ThermoError::TableFormat {
                                line: lineno + 1,
                                reason: format!("unsupported table version {other:?}"),
                            })
                        }
                    }
                    if let Some(n) = parts.next() {
                        name = n.to_string();
                    }
                }
                continue;
            }
            let fields: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ThermoError::TableFormat {
                    line: lineno + 1,
                    reason: e.to_string(),
                })?;
            if fields.len() != 8 {
                return Err(ThermoError::TableFormat {
                    line: lineno + 1,
                    reason: format!("expected 8 columns, got {}", fields.len()),
                });
            }
            rows.push(SatRow {
                p: fields[0],
                t_sat: fields[1],
                h_liq: fields[2],
                h_vap: fields[3],
                s_liq: fields[4],
                s_vap: fields[5],
                rho_liq: fields[6],
                rho_vap: fields[7],
            });
        }
        if rows.len() < 2 {
            return Err(ThermoError::TableFormat {
                line: 0,
                reason: "table needs at least two knots".into(),
            });
        }
        for w in rows.windows(2) {
            if w[1].p <= w[0].p || w[1].t_sat <= w[0].t_sat {
                return Err(ThermoError::TableFormat {
                    line: 0,
                    reason: format!("knots not strictly increasing near P = {}", w[0].p),
                });
            }
        }
        for r in &rows {
            if r.h_vap <= r.h_liq {
                return Err(ThermoError::TableFormat {
                    line: 0,
                    reason: format!("h_vap <= h_liq at P = {}", r.p),
                });
            }
        }
        Ok(Self { name, rows })
    }

    pub fn p_min(&self) -> f64 {
        self.rows[0].p
    }

    pub fn p_max(&self) -> f64 {
        self.rows[self.rows.len() - 1].p
    }

    pub fn t_min(&self) -> f64 {
        self.rows[0].t_sat
    }

    pub fn t_max(&self) -> f64 {
        self.rows[self.rows.len() - 1].t_sat
    }

    fn check_p(&self, p: f64) -> Result<(), ThermoError> {
        if !p.is_finite() || p < self.p_min() || p > self.p_max() {
            return Err(ThermoError::PressureOutOfRange {
                p,
                min: self.p_min(),
                max: self.p_max(),
            });
        }
        Ok(())
    }

    /// Interpolated saturation properties at pressure `p`.
    pub fn at_pressure(&self, p: f64) -> Result<SatRow, ThermoError> {
        self.check_p(p)?;
        let idx = match self
            .rows
            .binary_search_by(|r| r.p.partial_cmp(&p).expect("finite"))
        {
            Ok(i) => return Ok(self.rows[i]),
            Err(i) => i,
        };
        let (lo, hi) = (self.rows[idx - 1], self.rows[idx]);
        let w = (p - lo.p) / (hi.p - lo.p);
        Ok(SatRow {
            p,
            t_sat: lo.t_sat + w * (hi.t_sat - lo.t_sat),
            h_liq: lo.h_liq + w * (hi.h_liq - lo.h_liq),
            h_vap: lo.h_vap + w * (hi.h_vap - lo.h_vap),
            s_liq: lo.s_liq + w * (hi.s_liq - lo.s_liq),
            s_vap: lo.s_vap + w * (hi.s_vap - lo.s_vap),
            rho_liq: lo.rho_liq + w * (hi.rho_liq - lo.rho_liq),
            rho_vap: lo.rho_vap + w * (hi.rho_vap - lo.rho_vap),
        })
    }

    /// Saturation pressure [Pa] at temperature [K]; inverse interpolation of
    /// the strictly increasing (P, T_sat) knots.
    pub fn p_at_temperature(&self, t: f64) -> Result<f64, ThermoError> {
        if !t.is_finite() || t < self.t_min() || t > self.t_max() {
            return Err(ThermoError::TemperatureOutOfRange {
                t,
                min: self.t_min(),
                max: self.t_max(),
            });
        }
        let idx = match self
            .rows
            .binary_search_by(|r| r.t_sat.partial_cmp(&t).expect("finite"))
        {
            Ok(i) => return Ok(self.rows[i].p),
            Err(i) => i,
        };
        let (lo, hi) = (self.rows[idx - 1], self.rows[idx]);
        let w = (t - lo.t_sat) / (hi.t_sat - lo.t_sat);
        Ok(lo.p + w * (hi.p - lo.p))
    }

    pub fn rows(&self) -> &[SatRow] {
        &self.rows
    }
}
