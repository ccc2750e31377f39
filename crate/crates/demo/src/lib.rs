//! Browser bindings for three small interactive views: CDF response shaping,
//! the two online rules racing on a 3-client simplex, and a toy federated run.
//!
//! The functions are plain Rust returning flat `Vec<f64>` buffers so they can
//! be unit tested natively; the `wasm_bindgen` attribute exposes them to JS as
//! `Float64Array`s.

use wasm_bindgen::prelude::*;

use aaggff::bench::{pattern_response, OnlineLearner, ResponsePattern};
use aaggff::config::ExperimentConfig;
use aaggff::decision::decision_grad;
use aaggff::experiment::run_seed;
use aaggff::metrics::cumulative_regret;
use aaggff::response::{cdf_eval, transform_losses, CdfFamily, CdfKind, ResponseBounds};
use aaggff::{Decision, FtrlState, OnsState};

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn family(name: &str) -> Result<CdfFamily, JsValue> {
    CdfFamily::ALL
        .into_iter()
        .find(|f| format!("{f:?}").eq_ignore_ascii_case(name))
        .ok_or_else(|| js_err(format!("unknown CDF family {name}")))
}

fn pattern(name: &str) -> Result<ResponsePattern, JsValue> {
    ResponsePattern::ALL
        .into_iter()
        .find(|p| format!("{p:?}").eq_ignore_ascii_case(name))
        .ok_or_else(|| js_err(format!("unknown pattern {name}")))
}

/// `n` evenly spaced samples of the CDF on `[0, x_max]`.
#[wasm_bindgen]
pub fn cdf_curve(name: &str, scale: f64, shape: f64, x_max: f64, n: usize) -> Result<Vec<f64>, JsValue> {
    let kind = CdfKind::new(family(name)?, scale, shape).map_err(js_err)?;
    (0..n)
        .map(|i| cdf_eval(kind, x_max * i as f64 / (n.max(2) - 1) as f64).map_err(js_err))
        .collect()
}

/// Responses for `losses` in `[0, 1]`.
#[wasm_bindgen]
pub fn transform(name: &str, scale: f64, shape: f64, losses: &[f64]) -> Result<Vec<f64>, JsValue> {
    let kind = CdfKind::new(family(name)?, scale, shape).map_err(js_err)?;
    let unit = ResponseBounds::new(0.0, 1.0).map_err(js_err)?;
    transform_losses(losses, kind, unit).map_err(js_err)
}

/// Decisions of both rules on a 3-client sequence: per round
/// `[ons_0, ons_1, ons_2, ftrl_0, ftrl_1, ftrl_2]`, followed by the final
/// `[ons_regret, ons_bound, ftrl_regret, ftrl_bound]`.
#[wasm_bindgen]
pub fn simplex_race(pattern_name: &str, rounds: usize, seed: u64) -> Result<Vec<f64>, JsValue> {
    let k = 3;
    let pat = pattern(pattern_name)?;
    let bounds = ResponseBounds::cross_silo(k).map_err(js_err)?;
    let l = bounds.c2();
    let mut ons = OnsState::new(k, l).map_err(js_err)?;
    let mut ftrl = FtrlState::new(k, l).map_err(js_err)?;
    let (mut p_ons, mut p_ftrl) = (Decision::uniform(k).map_err(js_err)?, Decision::uniform(k).map_err(js_err)?);
    let mut out = Vec::with_capacity(6 * rounds + 4);
    let (mut d_ons, mut d_ftrl, mut r_ons, mut r_ftrl) = (vec![], vec![], vec![], vec![]);
    for t in 0..rounds {
        out.extend_from_slice(p_ons.as_slice());
        out.extend_from_slice(p_ftrl.as_slice());
        // the adaptive pattern reacts to each learner separately
        let ro = pattern_response(pat, k, t, bounds, seed, &p_ons);
        let rf = pattern_response(pat, k, t, bounds, seed, &p_ftrl);
        let next_ons = ons.step(&decision_grad(&p_ons, &ro).map_err(js_err)?).map_err(js_err)?;
        let next_ftrl = ftrl.step(&decision_grad(&p_ftrl, &rf).map_err(js_err)?).map_err(js_err)?;
        d_ons.push(std::mem::replace(&mut p_ons, next_ons));
        d_ftrl.push(std::mem::replace(&mut p_ftrl, next_ftrl));
        r_ons.push(ro);
        r_ftrl.push(rf);
    }
    if rounds > 0 {
        for (learner, d, r) in [(OnlineLearner::Ons, &d_ons, &r_ons), (OnlineLearner::Ftrl, &d_ftrl, &r_ftrl)] {
            out.push(cumulative_regret(d, r).map_err(js_err)?.regret);
            out.push(aaggff::bench::regret_bound(learner, bounds, k, rounds).map_err(js_err)?);
        }
    }
    Ok(out)
}

/// A small federated run. Returns `[worst10 per round..., final client
/// accuracies...]`; the first `rounds` entries are the per-round series.
#[wasm_bindgen]
pub fn fairness_run(method: &str, clients: usize, rounds: usize, sampling: f64, alpha: f64, seed: u64) -> Result<Vec<f64>, JsValue> {
    let bounds = if sampling < 1.0 { "CrossDevice" } else { "CrossSilo" };
    let text = format!(
        "K = {clients}\nT = {rounds}\nC = {sampling}\nmethod = \"{method}\"\nbounds_mode = \"{bounds}\"\n\
         dirichlet_alpha = {alpha}\nsamples = {}\nseparation = 1.5\n",
        100 * clients
    );
    let cfg = ExperimentConfig::parse(&text).map_err(js_err)?;
    let out = run_seed(&cfg, seed).map_err(js_err)?;
    let mut v: Vec<f64> = out.reports.iter().map(|r| r.eval.worst10).collect();
    v.extend(out.client_accuracy);
    Ok(v)
}
