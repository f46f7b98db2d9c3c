//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export has a plain Rust twin returning `clubgood::Result`, so the
//! numerics are testable off the browser.

use clubgood::economy::{presets, uniform_grid, Economy, ProfitNetworkEffect, TypeDistribution, ValuationModel};
use clubgood::payments::{interim_schedule, InterimMethod};
use clubgood::verification::{benchmark_cutoffs, region_grid, BenchmarkCutoffs, EffectSign, RegionLabel};
use wasm_bindgen::prelude::*;

/// Largest lattice the page may request; keeps a click under a second.
pub const MAX_RESOLUTION: usize = 801;

fn js_error(err: clubgood::Error) -> JsError {
    JsError::new(&err.to_string())
}

fn check_resolution(resolution: usize) -> clubgood::Result<()> {
    if !(2..=MAX_RESOLUTION).contains(&resolution) {
        return Err(clubgood::Error::InvalidArgument(format!("resolution must lie in 2..={MAX_RESOLUTION}")));
    }
    Ok(())
}

/// Two buyers with uniform types and `v = g(k) θ`.
pub fn linear_economy(cost: f64, slopes: [f64; 2], phi: [f64; 2]) -> clubgood::Result<Economy> {
    Economy::new(
        2,
        cost,
        TypeDistribution::uniform(1.0)?,
        ValuationModel::LinearInK { slopes: slopes.to_vec() },
        ProfitNetworkEffect::from_table(vec![0.0, phi[0], phi[1]])?,
    )
}

fn label_code(label: RegionLabel) -> u8 {
    match label {
        RegionLabel::Nobody => 0,
        RegionLabel::First => 1,
        RegionLabel::Second => 2,
        RegionLabel::Both => 3,
    }
}

/// Row-major consumer-set codes (`0` nobody, `1` first, `2` second, `3` both);
/// row `i` holds the first buyer's `i`-th cell.
pub fn region_codes(economy: &Economy, resolution: usize) -> clubgood::Result<Vec<u8>> {
    check_resolution(resolution)?;
    Ok(region_grid(economy, resolution)?.labels().iter().map(|&l| label_code(l)).collect())
}

/// Rows `[θ, Q¹, Q², M]` flattened, for buyer one of a `π` economy.
pub fn interim_rows(pi: f64, cost: f64, points: usize) -> clubgood::Result<Vec<f64>> {
    check_resolution(points)?;
    let economy = presets::pi_family(pi, cost)?;
    let schedule = interim_schedule(&economy, 0, &uniform_grid(0.0, 1.0, points), InterimMethod::Quadrature)?;
    Ok(schedule
        .points
        .iter()
        .flat_map(|p| [p.theta, p.q_by_size[0], p.q_by_size[1], p.payment])
        .collect())
}

/// Benchmark cutoffs of a `π` economy.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Cutoffs {
    kind: String,
    names: Vec<String>,
    values: Vec<f64>,
}

#[wasm_bindgen]
impl Cutoffs {
    /// `positive`, `negative`, `reserve` or `public`.
    #[wasm_bindgen(getter)]
    pub fn kind(&self) -> String {
        self.kind.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn names(&self) -> Vec<String> {
        self.names.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

pub fn pi_cutoffs(pi: f64, cost: f64) -> clubgood::Result<Cutoffs> {
    let named = |kind: &str, pairs: &[(&str, f64)]| Cutoffs {
        kind: kind.to_string(),
        names: pairs.iter().map(|(n, _)| n.to_string()).collect(),
        values: pairs.iter().map(|&(_, v)| v).collect(),
    };
    Ok(match benchmark_cutoffs(&presets::pi_family(pi, cost)?)? {
        BenchmarkCutoffs::FourRegion { x, y, z, sign } => {
            let kind = match sign {
                EffectSign::Positive => "positive",
                EffectSign::Negative => "negative",
            };
            named(kind, &[("x", x), ("y", y), ("z", z)])
        }
        BenchmarkCutoffs::Reserve { reserve } => named("reserve", &[("reserve", reserve)]),
        BenchmarkCutoffs::PublicGood { lowest, line_sum } => named("public", &[("lowest", lowest), ("line_sum", line_sum)]),
    })
}

#[wasm_bindgen(js_name = piRegionGrid)]
pub fn pi_region_grid(pi: f64, cost: f64, resolution: usize) -> Result<Vec<u8>, JsError> {
    presets::pi_family(pi, cost).and_then(|e| region_codes(&e, resolution)).map_err(js_error)
}

#[wasm_bindgen(js_name = linearRegionGrid)]
pub fn linear_region_grid(
    cost: f64,
    solo_slope: f64,
    joint_slope: f64,
    solo_phi: f64,
    joint_phi: f64,
    resolution: usize,
) -> Result<Vec<u8>, JsError> {
    linear_economy(cost, [solo_slope, joint_slope], [solo_phi, joint_phi])
        .and_then(|e| region_codes(&e, resolution))
        .map_err(js_error)
}

#[wasm_bindgen(js_name = interimCurves)]
pub fn interim_curves(pi: f64, cost: f64, points: usize) -> Result<Vec<f64>, JsError> {
    interim_rows(pi, cost, points).map_err(js_error)
}

#[wasm_bindgen(js_name = cutoffs)]
pub fn cutoffs(pi: f64, cost: f64) -> Result<Cutoffs, JsError> {
    pi_cutoffs(pi, cost).map_err(js_error)
}
