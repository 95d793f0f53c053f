//! Browser demo bindings. Three interactive operations, each taking and
//! returning JSON strings so the page needs no glue beyond `JSON.parse`:
//!
//! * [`allocate_demo`] — one channel draw, the optimal power split per
//!   sub-channel, for the stacked allocation chart,
//! * [`region_demo`] — averaged boundary points over a weight fan, for the
//!   secrecy region plot,
//! * [`csit_demo`] — rate trends against the outage threshold under noisy
//!   channel knowledge.
//!
//! Build with `wasm-pack build --target web` (or cargo + wasm-bindgen-cli)
//! and serve `www/`.

use bcc_alloc::allocator::{allocate, SolverConfig};
use bcc_alloc::channel::{gain_bounds, partition, sample_realization, ChannelPrior, EstimationModel, Subset};
use bcc_alloc::rates::Weights;
use bcc_alloc::sim::{csit_sweep, region_sweep, ExperimentConfig};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn stringify(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Deserialize)]
struct AllocateRequest {
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_l")]
    l: usize,
    #[serde(default = "default_p")]
    p: f64,
    #[serde(default = "default_snr")]
    snr1_db: f64,
    #[serde(default = "default_snr")]
    snr2_db: f64,
    #[serde(default)]
    sigma: f64,
    #[serde(default = "default_eps")]
    epsilon: f64,
    #[serde(default = "one")]
    w0: f64,
    #[serde(default = "one")]
    w1: f64,
    #[serde(default = "one")]
    w2: f64,
}

fn default_seed() -> u64 {
    7
}
fn default_l() -> usize {
    32
}
fn default_p() -> f64 {
    32.0
}
fn default_snr() -> f64 {
    10.0
}
fn default_eps() -> f64 {
    0.05
}
fn one() -> f64 {
    1.0
}

#[derive(Serialize)]
struct AllocateResponse {
    subsets: Vec<&'static str>,
    alpha1_minus: Vec<f64>,
    alpha2_minus: Vec<f64>,
    p0: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    r0: f64,
    r1: f64,
    r2: f64,
    step: u8,
    lambda: f64,
    mu: Option<f64>,
}

/// Draws one channel realization, computes the gain margins and returns the
/// optimal per-sub-channel power split with its rates.
#[wasm_bindgen]
pub fn allocate_demo(request_json: &str) -> Result<String, JsValue> {
    allocate_demo_impl(request_json).map_err(|e| JsValue::from_str(&e))
}

pub fn allocate_demo_impl(request_json: &str) -> Result<String, String> {
    let req: AllocateRequest = serde_json::from_str(request_json).map_err(stringify)?;
    let prior = ChannelPrior::from_snr_db(req.snr1_db, req.snr2_db, req.l).map_err(stringify)?;
    let model = if req.sigma > 0.0 {
        EstimationModel::new(req.sigma, req.epsilon).map_err(stringify)?
    } else {
        EstimationModel::perfect()
    };
    let real = sample_realization(&prior, &model, req.seed);
    let bounds = gain_bounds(&prior, &model, &real.h_hat).map_err(stringify)?;
    let part = partition(&bounds);
    let weights = Weights::new(req.w0, req.w1, req.w2).map_err(stringify)?;
    let result = allocate(&bounds, &part, &weights, req.p, &SolverConfig::default())
        .map_err(stringify)?;
    let response = AllocateResponse {
        subsets: (0..req.l)
            .map(|idx| match part.subset(idx) {
                Subset::S1 => "s1",
                Subset::S2 => "s2",
                Subset::S3 => "s3",
            })
            .collect(),
        alpha1_minus: (0..req.l).map(|idx| bounds.minus(0, idx)).collect(),
        alpha2_minus: (0..req.l).map(|idx| bounds.minus(1, idx)).collect(),
        p0: result.allocation.p0.clone(),
        p1: result.allocation.p1.clone(),
        p2: result.allocation.p2.clone(),
        r0: result.rates.r0,
        r1: result.rates.r1,
        r2: result.rates.r2,
        step: result.diagnostics.step.as_u8(),
        lambda: result.diagnostics.lambda,
        mu: result.diagnostics.mu,
    };
    serde_json::to_string(&response).map_err(stringify)
}

#[derive(Deserialize)]
struct RegionRequest {
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_l")]
    l: usize,
    #[serde(default = "default_p")]
    p: f64,
    #[serde(default = "default_snr")]
    snr1_db: f64,
    #[serde(default = "default_snr")]
    snr2_db: f64,
    #[serde(default = "default_trials")]
    trials: u32,
    /// Common-rate weights, one boundary curve each.
    #[serde(default = "default_w0_levels")]
    w0_levels: Vec<f64>,
    /// Number of (w1, w2) ray directions per curve.
    #[serde(default = "default_rays")]
    rays: usize,
}

fn default_trials() -> u32 {
    24
}
fn default_w0_levels() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_rays() -> usize {
    9
}

#[derive(Serialize)]
struct RegionPoint {
    w0: f64,
    w1: f64,
    w2: f64,
    r0: f64,
    r1: f64,
    r2: f64,
}

/// Sweeps a fan of confidential-weight directions for each common weight
/// level and returns the averaged boundary rates per point (per
/// sub-channel).
#[wasm_bindgen]
pub fn region_demo(request_json: &str) -> Result<String, JsValue> {
    region_demo_impl(request_json).map_err(|e| JsValue::from_str(&e))
}

pub fn region_demo_impl(request_json: &str) -> Result<String, String> {
    let req: RegionRequest = serde_json::from_str(request_json).map_err(stringify)?;
    let mut weight_grid = Vec::new();
    let rays = req.rays.max(2);
    for &w0 in &req.w0_levels {
        for k in 0..rays {
            let phi = std::f64::consts::FRAC_PI_2 * (k as f64 + 0.5) / rays as f64;
            weight_grid.push(Weights {
                w0,
                w1: phi.cos().max(1e-3),
                w2: phi.sin().max(1e-3),
            });
        }
    }
    let cfg = ExperimentConfig {
        l: req.l,
        p: req.p,
        snr1_db: vec![req.snr1_db],
        snr2_db: vec![req.snr2_db],
        weight_grid,
        trials: req.trials,
        seed: req.seed,
        ..ExperimentConfig::default()
    };
    let result = region_sweep(&cfg, &SolverConfig::default()).map_err(stringify)?;
    let scale = req.l as f64;
    let points: Vec<RegionPoint> = result
        .rows
        .iter()
        .map(|row| RegionPoint {
            w0: row.weights.w0,
            w1: row.weights.w1,
            w2: row.weights.w2,
            r0: row.mean.r0 / scale,
            r1: row.mean.r1 / scale,
            r2: row.mean.r2 / scale,
        })
        .collect();
    serde_json::to_string(&points).map_err(stringify)
}

#[derive(Deserialize)]
struct CsitRequest {
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_l")]
    l: usize,
    #[serde(default = "default_p")]
    p: f64,
    #[serde(default = "default_snr")]
    snr_db: f64,
    #[serde(default = "default_sigma")]
    sigma: f64,
    #[serde(default = "default_trials")]
    trials: u32,
    #[serde(default = "default_eps_list")]
    epsilon_list: Vec<f64>,
}

fn default_sigma() -> f64 {
    0.01
}
fn default_eps_list() -> Vec<f64> {
    vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.3]
}

#[derive(Serialize)]
struct CsitPoint {
    epsilon: f64,
    r0: f64,
    r1: f64,
    r2: f64,
    realized_r0: f64,
    realized_secrecy: f64,
}

/// Guaranteed and realized rate trends against the outage threshold at fixed
/// estimation noise (per sub-channel).
#[wasm_bindgen]
pub fn csit_demo(request_json: &str) -> Result<String, JsValue> {
    csit_demo_impl(request_json).map_err(|e| JsValue::from_str(&e))
}

pub fn csit_demo_impl(request_json: &str) -> Result<String, String> {
    let req: CsitRequest = serde_json::from_str(request_json).map_err(stringify)?;
    let cfg = ExperimentConfig {
        l: req.l,
        p: req.p,
        snr1_db: vec![req.snr_db],
        snr2_db: vec![req.snr_db],
        sigma: req.sigma,
        epsilon: req.epsilon_list.clone(),
        trials: req.trials,
        seed: req.seed,
        ..ExperimentConfig::default()
    };
    let result = csit_sweep(&cfg, &SolverConfig::default()).map_err(stringify)?;
    let scale = req.l as f64;
    let points: Vec<CsitPoint> = result
        .rows
        .iter()
        .map(|row| CsitPoint {
            epsilon: row.epsilon,
            r0: row.mean.r0 / scale,
            r1: row.mean.r1 / scale,
            r2: row.mean.r2 / scale,
            realized_r0: row.mean_realized.r0 / scale,
            realized_secrecy: (row.mean_realized.r1 + row.mean_realized.r2) / scale,
        })
        .collect();
    serde_json::to_string(&points).map_err(stringify)
}
