//! Human-readable summaries of artifact directories.

use std::path::Path;

use serde_json::Value;

use crate::error::CliError;
use crate::MANIFEST;

fn read_json(path: &Path) -> Result<Value, CliError> {
    let s = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&s).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn f(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::Number(n) => n.to_string(),
        other => other.to_string(),
    }
}

pub fn report(dir: &Path) -> Result<Vec<String>, CliError> {
    let manifest = read_json(&dir.join(MANIFEST))?;
    let summary = read_json(&dir.join("summary.json"))?;
    let task = manifest["task"].as_str().unwrap_or("");
    let mut out = vec![
        format!("task {task}, seed {}, {} threads, {} s", f(&manifest["seed"]), f(&manifest["threads"]), f(&manifest["wall_time_s"])),
        format!("config sha256 {}", manifest["config_sha256"].as_str().unwrap_or("")),
    ];
    if manifest["unconverged_rows"].as_u64().unwrap_or(0) > 0 {
        out.push(format!("warning: {} rows did not converge", f(&manifest["unconverged_rows"])));
    }
    match task {
        "met-scan" | "bond-sweep" | "param-sweep" => {
            for inst in summary["instances"].as_array().into_iter().flatten() {
                let b = &inst["bracket_ns"];
                out.push(format!(
                    "{}: MET {} ns, bracket [{}, {}], {} failures above",
                    inst["instance"].as_str().unwrap_or(""),
                    f(&inst["met_ns"]),
                    f(&b[0]),
                    f(&b[1]),
                    inst["failures_above_met"].as_array().map_or(0, Vec::len)
                ));
            }
        }
        "haar-campaign" => {
            out.push(format!(
                "{} qubit(s), {} pairs ({} excluded, {} repaired cells)",
                f(&summary["n_qubits"]),
                f(&summary["n_pairs"]),
                f(&summary["excluded"]),
                f(&summary["repaired_cells"])
            ));
            out.push(format!("maximal MET {} ns, widest CI {}", f(&summary["max_met_ns"]), f(&summary["max_ci_width"])));
            let fit = &summary["fit"];
            if !fit.is_null() {
                out.push(format!("HI v = {} rad/ns (chi2/dof {})", f(&fit["hi_v"]), f(&fit["hi_chi2_per_dof"])));
                out.push(format!("fitted v_tilde = {} rad/ns (chi2/dof {})", f(&fit["v_tilde"]), f(&fit["chi2_per_dof"])));
            }
        }
        "fit" => {
            out.push(format!("d = {}: HI v = {} rad/ns (chi2/dof {})", f(&summary["d"]), f(&summary["hi_v"]), f(&summary["hi_chi2_per_dof"])));
            out.push("model selection (L, terms, parameters, chi2/dof):".into());
            for s in summary["trace"].as_array().into_iter().flatten() {
                out.push(format!("  {} {} {} {}", f(&s["l"]), f(&s["n_terms"]), f(&s["n_parameters"]), f(&s["chi2_per_dof"])));
            }
            out.push(format!(
                "chosen v_tilde = {} rad/ns, chi2/dof {}, stop {}",
                f(&summary["v_tilde"]),
                f(&summary["chi2_per_dof"]),
                summary["stop"].as_str().unwrap_or("")
            ));
        }
        "bounds" => {
            let b = &summary["budget"];
            for k in ["one_qubit_max", "two_qubit_max", "two_qubit_from_01_max", "two_qubit_min"] {
                out.push(format!("{k}: {} ns", f(&b[k])));
            }
        }
        other => return Err(CliError::Config(format!("unknown task {other:?} in manifest"))),
    }
    Ok(out)
}
