//! Correlation set used to generate the committed refrigerant saturation table.
//!
//! This is the offline reference for the R404A-class working fluid: an Antoine
//! vapour-pressure curve, a Watson latent-heat scaling, constant liquid heat
//! capacity for the sensible terms, and a pressure-corrected ideal-gas vapour
//! density. The simulator itself only reads the tabulated knots (see
//! [`super::table`]); these functions exist so the table can be regenerated
//! deterministically (`gen_fluid_table` binary) and so tests can measure the
//! interpolation error against the smooth reference.
//!
//! Enthalpy/entropy references follow the IIR convention: h = 200 kJ/kg and
//! s = 1 kJ/(kg K) for saturated liquid at 0 degC.

/// Antoine constants for ln(P[Pa]) = A - B / (T[K] + C), dew line.
pub const ANTOINE_A: f64 = 21.1015332662;
pub const ANTOINE_B: f64 = 1898.283465;
pub const ANTOINE_C: f64 = -29.164701;

/// Critical temperature [K] used by the Watson latent-heat scaling.
pub const T_CRIT: f64 = 345.2;
/// Latent heat anchor: `DH_REF` [J/kg] at `T_REF_LATENT` [K].
pub const DH_REF: f64 = 200.0e3;
pub const T_REF_LATENT: f64 = 228.15;
const WATSON_EXP: f64 = 0.38;

/// Saturated-liquid heat capacity [J/(kg K)], treated as constant.
pub const CP_LIQ: f64 = 1450.0;
/// Vapour heat capacity [J/(kg K)] for the constant-cp superheat model.
pub const CP_VAP: f64 = 900.0;
/// Specific gas constant [J/(kg K)] of the R404A-class blend (M ~ 97.6 g/mol).
pub const R_SPECIFIC: f64 = 85.2;

const H_LIQ_REF: f64 = 200.0e3;
const S_LIQ_REF: f64 = 1.0e3;
const T_IIR: f64 = 273.15;

/// Saturation temperature [K] at pressure [Pa].
pub fn t_sat(p: f64) -> f64 {
    ANTOINE_B / (ANTOINE_A - p.ln()) - ANTOINE_C
}

/// Saturation pressure [Pa] at temperature [K]. Inverse of [`t_sat`].
pub fn p_sat(t: f64) -> f64 {
    (ANTOINE_A - ANTOINE_B / (t + ANTOINE_C)).exp()
}

/// Latent heat of vaporisation [J/kg] at saturation temperature [K].
pub fn latent_heat(t: f64) -> f64 {
    DH_REF * ((T_CRIT - t) / (T_CRIT - T_REF_LATENT)).powf(WATSON_EXP)
}

/// Saturated-liquid specific enthalpy [J/kg].
pub fn h_liq(t: f64) -> f64 {
    H_LIQ_REF + CP_LIQ * (t - T_IIR)
}

/// Saturated-vapour specific enthalpy [J/kg].
pub fn h_vap(t: f64) -> f64 {
    h_liq(t) + latent_heat(t)
}

/// Saturated-liquid specific entropy [J/(kg K)].
pub fn s_liq(t: f64) -> f64 {
    S_LIQ_REF + CP_LIQ * (t / T_IIR).ln()
}

/// Saturated-vapour specific entropy [J/(kg K)].
pub fn s_vap(t: f64) -> f64 {
    s_liq(t) + latent_heat(t) / t
}

/// Saturated-liquid density [kg/m3].
pub fn rho_liq(t: f64) -> f64 {
    1151.0 - 3.1 * (t - T_IIR)
}

/// Compressibility factor along the dew line, linear in pressure.
pub fn z_factor(p: f64) -> f64 {
    0.972 - 0.030 * (p / 1.0e6)
}

/// Saturated-vapour density [kg/m3].
pub fn rho_vap(p: f64) -> f64 {
    p / (z_factor(p) * R_SPECIFIC * t_sat(p))
}

/// Pressure range [Pa] and knot count of the committed table.
pub const TABLE_P_MIN: f64 = 1.2e4;
pub const TABLE_P_MAX: f64 = 2.0e6;
pub const TABLE_KNOTS: usize = 96;

/// Renders the full saturation table in the committed text format.
/// Knots are log-spaced in pressure so relative spacing stays uniform.
pub fn generate_table_text() -> String {
    let mut out = String::new();
    out.push_str("# tescycle-fluid-table v1 r404a-class\n");
    out.push_str(
        "# P[Pa] T_sat[K] h_liq[J/kg] h_vap[J/kg] s_liq[J/kgK] s_vap[J/kgK] rho_liq[kg/m3] rho_vap[kg/m3]\n",
    );
    let ln_min = TABLE_P_MIN.ln();
    let ln_max = TABLE_P_MAX.ln();
    for i in 0..TABLE_KNOTS {
        let p = (ln_min + (ln_max - ln_min) * i as f64 / (TABLE_KNOTS - 1) as f64).exp();
        let t = t_sat(p);
        out.push_str(&format!(
            "{:.10e} {:.10e} {:.10e} {:.10e} {:.10e} {:.10e} {:.10e} {:.10e}\n",
            p,
            t,
            h_liq(t),
            h_vap(t),
            s_liq(t),
            s_vap(t),
            rho_liq(t),
            rho_vap(p),
        ));
    }
    out
}
