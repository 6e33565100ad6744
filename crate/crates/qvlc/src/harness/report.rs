//! Report rows and the versioned CSV/JSON serializations.
//!
//! Reports are deterministic byte-for-byte for a fixed config and seed:
//! floats print with 17 significant digits, rows are sorted by
//! `(n, rate, quantity, k, i)`, and no timing or environment data is
//! embedded.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::Result;

pub const SCHEMA_VERSION: &str = "qvlc-1";

/// Unit of a reported value, for the display-only bits conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    /// Probabilities, errors, deviations.
    Dimensionless,
    /// Entropies, rates, coding lengths, exponents.
    Nats,
}

/// One long-format report row.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub mode: &'static str,
    pub n: usize,
    pub d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_prime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i: Option<usize>,
    pub quantity: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub satisfied: Option<bool>,
    pub unit: Unit,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub note: String,
}

impl ReportRow {
    pub fn new(mode: &'static str, n: usize, d: usize, quantity: &str, value: f64) -> Self {
        Self {
            mode,
            n,
            d,
            rate: None,
            delta: None,
            delta_prime: None,
            k: None,
            i: None,
            quantity: quantity.to_string(),
            value,
            bound: None,
            satisfied: None,
            unit: Unit::Dimensionless,
            method: None,
            note: String::new(),
        }
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        self.rate = Some(rate);
        self
    }

    pub fn with_deltas(mut self, delta: Option<f64>, delta_prime: Option<f64>) -> Self {
        self.delta = delta;
        self.delta_prime = delta_prime;
        self
    }

    pub fn with_outcome(mut self, k: usize, i: usize) -> Self {
        self.k = Some(k);
        self.i = Some(i);
        self
    }

    pub fn with_bound(mut self, bound: f64, tol: f64) -> Self {
        self.bound = Some(bound);
        self.satisfied = Some(self.value <= bound + tol);
        self
    }

    pub fn in_nats(mut self) -> Self {
        self.unit = Unit::Nats;
        self
    }

    pub fn with_method(mut self, method: &str) -> Self {
        self.method = Some(method.to_string());
        self
    }

    pub fn with_note(mut self, note: String) -> Self {
        self.note = note;
        self
    }

    /// Quantities whose failure is an internal invariant breach rather than
    /// a bound violation.
    pub fn is_internal_check(&self) -> bool {
        matches!(
            self.quantity.as_str(),
            "povm_deviation" | "definitional_agreement" | "completeness_deviation" | "chain_order"
        )
    }
}

/// A finished report: provenance plus rows.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub schema: &'static str,
    pub version: &'static str,
    pub seed: u64,
    /// Compact JSON echo of the configuration.
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
}

fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

fn fmt_opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

impl SimulationReport {
    pub fn new(seed: u64, config: serde_json::Value, mut rows: Vec<ReportRow>) -> Self {
        rows.sort_by(|a, b| {
            (a.n, a.rate.map(f64::to_bits), &a.quantity, a.k, a.i, a.delta.map(f64::to_bits))
                .cmp(&(b.n, b.rate.map(f64::to_bits), &b.quantity, b.k, b.i, b.delta.map(f64::to_bits)))
        });
        Self {
            schema: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            rows,
        }
    }

    /// Any paper-bound row with a false flag.
    pub fn has_bound_violation(&self) -> bool {
        self.rows
            .iter()
            .any(|r| r.satisfied == Some(false) && !r.is_internal_check())
    }

    /// Any internal-invariant row with a false flag.
    pub fn has_invariant_breach(&self) -> bool {
        self.rows
            .iter()
            .any(|r| r.satisfied == Some(false) && r.is_internal_check())
    }

    /// Render as CSV with provenance header comments.
    ///
    /// `bits = true` converts nats-valued quantities to bits for display.
    pub fn to_csv(&self, bits: bool) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {} v{}\n", self.schema, self.version));
        out.push_str(&format!("# seed={}\n", self.seed));
        out.push_str(&format!("# units={}\n", if bits { "bits" } else { "nats" }));
        out.push_str(&format!("# config={}\n", self.config));
        out.push_str(
            "mode,n,d,rate,delta,delta_prime,k,i,quantity,value,bound,satisfied,unit,method,note\n",
        );
        let conv = |v: f64, unit: Unit| -> f64 {
            if bits && unit == Unit::Nats {
                v / std::f64::consts::LN_2
            } else {
                v
            }
        };
        for r in &self.rows {
            let unit_name = match (r.unit, bits) {
                (Unit::Nats, true) => "bits",
                (Unit::Nats, false) => "nats",
                (Unit::Dimensionless, _) => "1",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.mode,
                r.n,
                r.d,
                fmt_opt_float(r.rate),
                fmt_opt_float(r.delta),
                fmt_opt_float(r.delta_prime),
                r.k.map(|k| k.to_string()).unwrap_or_default(),
                r.i.map(|i| i.to_string()).unwrap_or_default(),
                r.quantity,
                fmt_float(conv(r.value, r.unit)),
                fmt_opt_float(r.bound.map(|b| conv(b, r.unit))),
                r.satisfied.map(|s| s.to_string()).unwrap_or_default(),
                unit_name,
                r.method.as_deref().unwrap_or(""),
                csv_escape(&r.note),
            ));
        }
        out
    }

    /// Render as pretty JSON (values always in nats).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Write a file atomically (temp file + rename).
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir)?;
    }
    let file_name = path
        .file_name()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "report".to_string());
    let tmp = dir.join(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
