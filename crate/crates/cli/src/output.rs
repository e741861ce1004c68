//! Report and table serialization: JSON (pretty, deterministic field
//! order) and flat CSV, written to a path or stdout.

use std::io::Write;
use std::path::PathBuf;

use percascade::identities::VerificationReport;

use crate::opts::CliError;

/// Writes `content` to the path, or stdout if none.
pub fn write_text(out: Option<&PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => std::io::stdout().write_all(content.as_bytes())?,
    }
    Ok(())
}

/// Quotes a CSV field if it contains a comma, quote, or newline.
pub fn csv_field(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn reports_to_json(reports: &[VerificationReport]) -> String {
    let mut text = serde_json::to_string_pretty(reports).expect("reports serialize");
    text.push('\n');
    text
}

/// One row per report; the structured params and rule fields ride along
/// as embedded JSON.
pub fn reports_to_csv(reports: &[VerificationReport]) -> String {
    let mut out = String::from(
        "identity,verdict,lhs_value,lhs_stderr,lhs_method,lhs_replicates,\
         rhs_value,rhs_stderr,rhs_method,rhs_replicates,rule,seed,elapsed_ms,params\n",
    );
    for r in reports {
        let method = |m| serde_json::to_value(m).unwrap().as_str().unwrap().to_string();
        let verdict = serde_json::to_value(r.verdict).unwrap().as_str().unwrap().to_string();
        let rule = serde_json::to_string(&r.rule).unwrap();
        let params = serde_json::to_string(&r.params).unwrap();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            csv_field(&r.identity),
            verdict,
            r.lhs.value,
            r.lhs.stderr,
            method(r.lhs.method),
            r.lhs.replicates,
            r.rhs.value,
            r.rhs.stderr,
            method(r.rhs.method),
            r.rhs.replicates,
            csv_field(&rule),
            r.seed,
            r.elapsed_ms,
            csv_field(&params),
        ));
    }
    out
}

/// Two-column table: CSV with the given header, non-finite values as
/// `inf`/`-inf`/`NaN` (Rust float formatting).
pub fn table_to_csv(header: (&str, &str), rows: &[(f64, f64)]) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (x, v) in rows {
        out.push_str(&format!("{x},{v}\n"));
    }
    out
}

/// JSON rendering of a table: array of `[input, value]` pairs with
/// non-finite values as null (JSON has no infinities).
pub fn table_to_json(header: (&str, &str), rows: &[(f64, f64)]) -> String {
    let items: Vec<serde_json::Value> = rows
        .iter()
        .map(|&(x, v)| {
            let val = if v.is_finite() {
                serde_json::json!(v)
            } else {
                serde_json::Value::Null
            };
            serde_json::json!({ header.0: x, header.1: val })
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&items).expect("table serializes");
    text.push('\n');
    text
}
