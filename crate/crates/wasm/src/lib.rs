//! Browser bindings: each operation takes DAG text and returns a JSON document,
//! or throws the error message.

use dagcheck::dsep::{d_separated, enumerate_paths, minimal_adjustment_sets, path_status, VarSet};
use dagcheck::graph::parse_dag;
use dagcheck::implications::implied_independencies;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct PathReport {
    path: String,
    open: bool,
    blocking_nodes: VarSet,
    colliders_opened: VarSet,
}

#[derive(Serialize)]
struct DsepReport {
    dag_fingerprint: String,
    x: String,
    y: String,
    conditioning: VarSet,
    separated: bool,
    paths: Vec<PathReport>,
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

/// Comma- or whitespace-separated names.
fn names(list: &str) -> VarSet {
    list.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn implications_json(dag: &str) -> Result<String, String> {
    let dag = parse_dag(dag).map_err(|e| e.to_string())?;
    implied_independencies(&dag).map(|h| h.to_json()).map_err(|e| e.to_string())
}

pub fn dseparation_json(dag: &str, x: &str, y: &str, conditioning: &str) -> Result<String, String> {
    let dag = parse_dag(dag).map_err(|e| e.to_string())?;
    let (x, y, z) = (x.trim(), y.trim(), names(conditioning));
    let separated = d_separated(&dag, x, y, &z).map_err(|e| e.to_string())?;
    let paths = enumerate_paths(&dag, x, y)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| {
            let s = path_status(&dag, &p, &z).map_err(|e| e.to_string())?;
            Ok(PathReport {
                path: p.to_string(),
                open: s.open,
                blocking_nodes: s.blocking_nodes,
                colliders_opened: s.colliders_opened,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(to_json(&DsepReport {
        dag_fingerprint: dag.fingerprint(),
        x: x.to_string(),
        y: y.to_string(),
        conditioning: z,
        separated,
        paths,
    }))
}

/// Empty `exposure` or `outcome` falls back to the roles marked in the DAG.
pub fn adjustment_json(dag: &str, exposure: &str, outcome: &str) -> Result<String, String> {
    let dag = parse_dag(dag).map_err(|e| e.to_string())?;
    let pick = |given: &str, marked: Option<&str>, role: &str| -> Result<String, String> {
        match given.trim() {
            "" => marked.map(str::to_string).ok_or_else(|| format!("no {role} given or marked")),
            s => Ok(s.to_string()),
        }
    };
    let x = pick(exposure, dag.exposure(), "exposure")?;
    let y = pick(outcome, dag.outcome(), "outcome")?;
    minimal_adjustment_sets(&dag, &x, &y)
        .map(|s| to_json(&s))
        .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn implications(dag: &str) -> Result<String, JsValue> {
    implications_json(dag).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn dseparation(dag: &str, x: &str, y: &str, conditioning: &str) -> Result<String, JsValue> {
    dseparation_json(dag, x, y, conditioning).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn adjustment(dag: &str, exposure: &str, outcome: &str) -> Result<String, JsValue> {
    adjustment_json(dag, exposure, outcome).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn literature_fixture() -> String {
    dagcheck::fixtures::LITERATURE_DAG.to_string()
}

#[wasm_bindgen]
pub fn data_validated_fixture() -> String {
    dagcheck::fixtures::DATA_VALIDATED_DAG.to_string()
}
