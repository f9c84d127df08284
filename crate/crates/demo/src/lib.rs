//! Browser bindings for the keyforge demo page. Each export is a thin
//! wrapper over a plain function so the logic also runs in native tests.

use keyforge::commitment::{commit, decommit, Commitment, Decommitment};
use keyforge::eval::{generate_population, run_crossval_lda, run_zero_effort, EvalConfig, PopulationConfig};
use keyforge::features::FeatureVector;
use keyforge::spc::{decode, enumerate_codewords, SpcCode};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use wasm_bindgen::prelude::*;

fn two_feature_code(d: u32, l0: u32, l1: u32) -> Result<SpcCode, String> {
    SpcCode::new(d, vec![l0, l1]).map_err(|e| e.to_string())
}

/// Decoded codeword for every point of the `2^d x 2^d` grid, row-major with
/// the first symbol as the row, flattened as `(c0, c1)` pairs.
pub fn decode_grid(d: u32, l0: u32, l1: u32) -> Result<Vec<u32>, String> {
    if d > 8 {
        return Err(format!("grid too large for d = {d}; use d <= 8"));
    }
    let code = two_feature_code(d, l0, l1)?;
    let q = 1u32 << d;
    let mut out = Vec::with_capacity(2 * (q * q) as usize);
    for a in 0..q {
        for b in 0..q {
            out.extend(decode(&[a, b], &code).map_err(|e| e.to_string())?.symbols);
        }
    }
    Ok(out)
}

/// Flattened `(c0, c1)` pairs of all codewords.
pub fn list_codewords(d: u32, l0: u32, l1: u32) -> Result<Vec<u32>, String> {
    let code = two_feature_code(d, l0, l1)?;
    if code.key_bits() > 16 {
        return Err("too many codewords to list".into());
    }
    Ok(enumerate_codewords(&code).into_iter().flat_map(|c| c.symbols).collect())
}

/// Commits to `values` under a code with exponents `l`; returns the
/// commitment as JSON.
pub fn commit_json(values: &[u32], d: u32, l: &[u32], seed: u32) -> Result<String, String> {
    let code = SpcCode::new(d, l.to_vec()).map_err(|e| e.to_string())?;
    let x = FeatureVector::new(values.to_vec(), d).map_err(|e| e.to_string())?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed as u64);
    let (com, _) = commit(&x, &code, &mut rng).map_err(|e| e.to_string())?;
    serde_json::to_string_pretty(&com).map_err(|e| e.to_string())
}

/// Opens a JSON commitment with `values`; `None` when the tag does not match.
pub fn open_json(commitment: &str, values: &[u32], z: &str) -> Result<Option<String>, String> {
    let com: Commitment = serde_json::from_str(commitment).map_err(|e| e.to_string())?;
    let y = FeatureVector::new(values.to_vec(), com.code.d()).map_err(|e| e.to_string())?;
    match decommit(&y, &com, z.as_bytes()).map_err(|e| e.to_string())? {
        Decommitment::Key(k) => Ok(Some(k.to_hex())),
        Decommitment::NoKey => Ok(None),
    }
}

/// Plain and LDA reports on a small synthetic population, as
/// `{"plain": .., "lda": ..}`.
pub fn sweep_json(users: usize, minutes: f64, seed: u32) -> Result<String, String> {
    let pop = PopulationConfig { users, session_minutes: minutes, ..PopulationConfig::default() };
    let (_, data) = generate_population(&pop, seed as u64).map_err(|e| e.to_string())?;
    let cfg = EvalConfig::default();
    let plain = run_zero_effort(&data, &cfg).map_err(|e| e.to_string())?;
    let lda = run_crossval_lda(&data, &cfg).map_err(|e| e.to_string())?;
    serde_json::to_string(&serde_json::json!({ "plain": plain, "lda": lda })).map_err(|e| e.to_string())
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen(js_name = decodeGrid)]
pub fn decode_grid_js(d: u32, l0: u32, l1: u32) -> Result<Vec<u32>, JsError> {
    decode_grid(d, l0, l1).map_err(js)
}

#[wasm_bindgen(js_name = listCodewords)]
pub fn list_codewords_js(d: u32, l0: u32, l1: u32) -> Result<Vec<u32>, JsError> {
    list_codewords(d, l0, l1).map_err(js)
}

#[wasm_bindgen(js_name = commitTemplate)]
pub fn commit_js(values: Vec<u32>, d: u32, l: Vec<u32>, seed: u32) -> Result<String, JsError> {
    commit_json(&values, d, &l, seed).map_err(js)
}

#[wasm_bindgen(js_name = openCommitment)]
pub fn open_js(commitment: &str, values: Vec<u32>, z: &str) -> Result<Option<String>, JsError> {
    open_json(commitment, &values, z).map_err(js)
}

#[wasm_bindgen(js_name = rateSweep)]
pub fn sweep_js(users: usize, minutes: f64, seed: u32) -> Result<String, JsError> {
    sweep_json(users, minutes, seed).map_err(js)
}
