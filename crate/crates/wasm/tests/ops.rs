use dagcheck::fixtures::{DATA_VALIDATED_DAG, LITERATURE_DAG};
use dagcheck_wasm::{adjustment_json, dseparation_json, implications_json};
use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.unwrap()).unwrap()
}

#[test]
fn implications_of_fixture() {
    let v = parse(implications_json(DATA_VALIDATED_DAG));
    assert_eq!(v["claims"].as_array().unwrap().len(), 4);
    assert!(implications_json("A -> B\nB -> A").unwrap_err().contains("cycle"));
}

#[test]
fn dseparation_lists_path_status() {
    let v = parse(dseparation_json("A -> B\nC -> B\nB -> D", "A", "C", "D"));
    assert_eq!(v["separated"], false);
    assert_eq!(v["paths"][0]["path"], "A -> B <- C");
    assert_eq!(v["paths"][0]["colliders_opened"][0], "B");
    let v = parse(dseparation_json("A -> B\nC -> B\nB -> D", "A", "C", ""));
    assert_eq!(v["separated"], true);
    assert_eq!(v["paths"][0]["blocking_nodes"][0], "B");
}

#[test]
fn adjustment_uses_marked_roles() {
    let v = parse(adjustment_json(LITERATURE_DAG, "", ""));
    assert_eq!(v["exposure"], "CI");
    assert_eq!(v["sets"], serde_json::json!([["Age"]]));
    assert!(adjustment_json("A -> B", "", "").is_err());
}
