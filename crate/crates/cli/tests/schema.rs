//! The committed JSON schema and the configuration parser describe the same key tree.

use std::path::{Path, PathBuf};

use weakkam_cli::config::{apply_override, read_table};
use weakkam_cli::RunConfig;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn leaf_keys(prefix: &str, node: &serde_json::Value, out: &mut Vec<String>) {
    match node.get("properties").and_then(|p| p.as_object()) {
        Some(props) if node["type"] == "object" => {
            for (name, child) in props {
                let key = if prefix.is_empty() { name.clone() } else { format!("{prefix}.{name}") };
                leaf_keys(&key, child, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

fn schema_keys() -> Vec<String> {
    let schema: serde_json::Value = serde_json::from_slice(&std::fs::read(configs().join("schema.json")).unwrap()).unwrap();
    let mut keys = Vec::new();
    leaf_keys("", &schema, &mut keys);
    keys
}

#[test]
fn every_schema_key_is_accepted_by_the_parser() {
    let keys = schema_keys();
    assert!(keys.len() > 30, "{keys:?}");
    for key in keys {
        let mut table = toml::Table::new();
        apply_override(&mut table, &format!("{key}=1")).unwrap_or_else(|e| panic!("{key}: {e}"));
    }
}

#[test]
fn keys_outside_the_schema_are_rejected() {
    let mut table = toml::Table::new();
    let err = apply_override(&mut table, "grid.spacing=0.1").unwrap_err();
    assert_eq!(err.to_string(), "grid.spacing: unknown key");
}

#[test]
fn shipped_configs_use_only_schema_keys_and_parse() {
    let keys = schema_keys();
    for name in ["eikonal_abs.toml", "quadratic.toml"] {
        let path = configs().join(name);
        let table = read_table(&path).unwrap();
        let mut used = Vec::new();
        for (section, body) in &table {
            for k in body.as_table().unwrap().keys() {
                used.push(format!("{section}.{k}"));
            }
        }
        for k in used {
            assert!(keys.contains(&k), "{name}: {k} not in schema");
        }
        RunConfig::from_table(&table, &configs()).unwrap();
    }
}
