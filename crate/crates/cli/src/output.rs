//! Output plumbing: provenance headers and file-or-stdout writing.

use qpot_core::network::Network;
use std::fmt::Write as _;
use std::path::PathBuf;

/// Comment header recording tool version, network hash, and the full
/// parameter set. Prepended to CSV outputs; JSON reports embed the same
/// fields in a `meta` object.
pub fn csv_header(net: &Network, command: &str, params: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# tool: qpot {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# network_hash: {:016x}", net.hash64());
    let _ = writeln!(out, "# command: {command}");
    for (k, v) in params {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out
}

pub fn meta_json(net: &Network, command: &str, params: &[(&str, String)]) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    map.insert(
        "tool".to_string(),
        serde_json::Value::String(format!("qpot {}", env!("CARGO_PKG_VERSION"))),
    );
    map.insert(
        "network_hash".to_string(),
        serde_json::Value::String(format!("{:016x}", net.hash64())),
    );
    map.insert(
        "command".to_string(),
        serde_json::Value::String(command.to_string()),
    );
    for (k, v) in params {
        map.insert(k.to_string(), serde_json::Value::String(v.clone()));
    }
    serde_json::Value::Object(map)
}

pub fn emit(out: &Option<PathBuf>, content: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

pub fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}
