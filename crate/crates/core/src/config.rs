//! Run configuration: defaults, a flat `key = value` text format with
//! dotted section keys, JSON input, and validation.
//!
//! Grammar of the text format, one entry per line:
//!
//! ```text
//! # comment
//! n = 20
//! potential.kind = square_barrier
//! fit.integral_ladder = [128, 256, 512, 1024, 2048]
//! output.out = "results/run 1.json"
//! ```
//!
//! Values are numbers, `true`/`false`, lists in brackets (a bare comma
//! list is also accepted), double-quoted JSON strings, or bare strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::potentials::RadialPotential;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialConfig {
    /// square_barrier, smooth_bump, tabulated or zero
    pub kind: String,
    pub v0: f64,
    pub radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig { kind: "square_barrier".into(), v0: 2.0, radius: 1.0, table: None }
    }
}

impl PotentialConfig {
    pub fn build(&self) -> Result<RadialPotential> {
        match self.kind.as_str() {
            "square_barrier" => RadialPotential::square_barrier(self.v0, self.radius),
            "smooth_bump" => RadialPotential::smooth_bump(self.v0, self.radius),
            "zero" => Ok(RadialPotential::zero()),
            "tabulated" => match &self.table {
                Some(p) => RadialPotential::from_table_file(p),
                None => Err(Error::invalid("potential.table", "required for a tabulated potential")),
            },
            other => Err(Error::invalid(
                "potential.kind",
                format!("unknown kind {other:?} (square_barrier, smooth_bump, tabulated, zero)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogMode {
    Lattice,
    Integral,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub mode: LogMode,
    pub enabled: bool,
    pub integral_ladder: Vec<f64>,
    pub lattice_ladder: Vec<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            mode: LogMode::Integral,
            enabled: false,
            integral_ladder: vec![128.0, 256.0, 512.0, 1024.0, 2048.0],
            lattice_ladder: vec![8.0, 16.0, 32.0, 48.0, 96.0, 192.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LhyConfig {
    pub rho: f64,
    pub a: f64,
}

impl Default for LhyConfig {
    fn default() -> Self {
        LhyConfig { rho: 1e-6, a: 1.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub potential: PotentialConfig,
    pub n: u64,
    pub ell: f64,
    /// Shell radius |n| ≤ K of the coefficient sums; unset means momentum 3N.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub max_m: u32,
    pub second_order_k: u32,
    pub fit: FitConfig,
    pub lhy: LhyConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            potential: PotentialConfig::default(),
            n: 20,
            ell: 0.25,
            cutoff: None,
            threads: None,
            max_m: 200,
            second_order_k: 64,
            fit: FitConfig::default(),
            lhy: LhyConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a config file; `.json` files are JSON, anything else is the
    /// key = value format.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), reason: e.to_string() })?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_kv(&text)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut root = Map::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid("config", format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() || key.split('.').any(|p| p.is_empty()) {
                return Err(Error::invalid("config", format!("line {}: bad key {key:?}", lineno + 1)));
            }
            let value = parse_value(value.trim())
                .map_err(|r| Error::invalid(key.to_string(), format!("line {}: {r}", lineno + 1)))?;
            insert_dotted(&mut root, key, value).map_err(|r| Error::invalid(key.to_string(), r))?;
        }
        serde_json::from_value(Value::Object(root)).map_err(|e| Error::invalid("config", e.to_string()))
    }

    pub fn to_kv(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        flatten("", &v, &mut out);
        out
    }

    /// Checks every field against the preconditions of the computations.
    pub fn validate(&self) -> Result<()> {
        let v = self.potential.build()?;
        if self.n < 2 {
            return Err(Error::invalid("n", format!("must be >= 2, got {}", self.n)));
        }
        if !(self.ell > 0.0 && self.ell < 0.5) {
            return Err(Error::invalid("ell", format!("must lie in (0, 1/2), got {}", self.ell)));
        }
        if !v.is_zero() && self.n as f64 * self.ell <= v.support_radius() {
            return Err(Error::invalid(
                "ell",
                format!("N*ell = {} must exceed the support radius {}", self.n as f64 * self.ell, v.support_radius()),
            ));
        }
        if self.cutoff == Some(0) {
            return Err(Error::invalid("cutoff", "must be >= 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads", "must be >= 1"));
        }
        if self.max_m < 8 {
            return Err(Error::invalid("max_m", format!("must be >= 8, got {}", self.max_m)));
        }
        if self.second_order_k < 4 {
            return Err(Error::invalid("second_order_k", format!("must be >= 4, got {}", self.second_order_k)));
        }
        for (name, ladder) in [("fit.integral_ladder", &self.fit.integral_ladder), ("fit.lattice_ladder", &self.fit.lattice_ladder)] {
            if ladder.iter().any(|n| !(*n >= 4.0) || !n.is_finite()) {
                return Err(Error::invalid(name, "entries must be finite and >= 4"));
            }
            if self.fit.enabled {
                let lo = ladder.iter().cloned().fold(f64::MAX, f64::min);
                let hi = ladder.iter().cloned().fold(0.0, f64::max);
                if ladder.len() < 4 || hi < 8.0 * lo {
                    return Err(Error::invalid(name, "a fit needs >= 4 points spanning a factor of 8"));
                }
            }
        }
        if !(self.lhy.rho > 0.0) || !(self.lhy.a >= 0.0) || !self.lhy.rho.is_finite() || !self.lhy.a.is_finite() {
            return Err(Error::invalid("lhy", "rho must be > 0 and a >= 0"));
        }
        Ok(())
    }
}

fn parse_scalar(s: &str) -> std::result::Result<Value, String> {
    if s.starts_with('"') {
        return serde_json::from_str::<String>(s).map(Value::String).map_err(|e| e.to_string());
    }
    if s == "true" || s == "false" {
        return Ok(Value::Bool(s == "true"));
    }
    if let Ok(i) = s.parse::<u64>() {
        return Ok(Value::from(i));
    }
    if let Ok(i) = s.parse::<i64>() {
        return Ok(Value::from(i));
    }
    if let Ok(x) = s.parse::<f64>() {
        return serde_json::Number::from_f64(x).map(Value::Number).ok_or_else(|| format!("non-finite number {s}"));
    }
    Ok(Value::String(s.to_string()))
}

fn parse_value(s: &str) -> std::result::Result<Value, String> {
    let list = |body: &str| -> std::result::Result<Value, String> {
        if body.trim().is_empty() {
            return Ok(Value::Array(vec![]));
        }
        body.split(',').map(|x| parse_scalar(x.trim())).collect::<std::result::Result<Vec<_>, _>>().map(Value::Array)
    };
    if let Some(body) = s.strip_prefix('[') {
        let body = body.strip_suffix(']').ok_or("unterminated list")?;
        return list(body);
    }
    if !s.starts_with('"') && s.contains(',') {
        return list(s);
    }
    parse_scalar(s)
}

fn insert_dotted(root: &mut Map<String, Value>, key: &str, value: Value) -> std::result::Result<(), String> {
    let mut parts = key.split('.').peekable();
    let mut cur = root;
    while let Some(p) = parts.next() {
        if parts.peek().is_none() {
            if cur.insert(p.to_string(), value).is_some() {
                return Err("duplicate key".into());
            }
            return Ok(());
        }
        let slot = cur.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
        cur = slot.as_object_mut().ok_or("key is both a value and a section")?;
    }
    Ok(())
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => {
            let plain = !s.is_empty()
                && s.trim() == s
                && !s.contains([',', '[', ']', '"', '#'])
                && matches!(parse_scalar(s), Ok(Value::String(_)));
            if plain {
                s.clone()
            } else {
                serde_json::to_string(s).expect("string serializes")
            }
        }
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(xs) => {
            let items: Vec<String> = xs.iter().map(scalar_text).collect();
            out.push_str(&format!("{prefix} = [{}]\n", items.join(", ")));
        }
        Value::Null => {}
        other => out.push_str(&format!("{prefix} = {}\n", scalar_text(other))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn kv_parsing() {
        let c = RunConfig::from_kv(
            "# test\nn = 40\nell = 0.3\npotential.kind = smooth_bump\npotential.v0 = 3\n\
             fit.integral_ladder = 64, 128, 512, 1024\nfit.enabled = true\noutput.out = \"a b.json\"\n",
        )
        .unwrap();
        assert_eq!(c.n, 40);
        assert_eq!(c.potential.kind, "smooth_bump");
        assert_eq!(c.potential.v0, 3.0);
        assert_eq!(c.fit.integral_ladder, vec![64.0, 128.0, 512.0, 1024.0]);
        assert_eq!(c.output.out.as_deref(), Some(Path::new("a b.json")));
        c.validate().unwrap();
    }

    #[test]
    fn kv_errors_name_the_field() {
        let e = RunConfig::from_kv("n = 20\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        assert!(RunConfig::from_kv("n 20\n").is_err());
        assert!(RunConfig::from_kv("n = 1\nn = 2\n").is_err());
        let e = RunConfig { ell: 0.7, ..Default::default() }.validate().unwrap_err();
        assert!(matches!(e, Error::InvalidInput { ref field, .. } if field == "ell"));
        let e = RunConfig { n: 3, ..Default::default() }.validate().unwrap_err();
        assert!(matches!(e, Error::InvalidInput { ref field, .. } if field == "ell"));
        let mut c = RunConfig::default();
        c.potential.kind = "coulomb".into();
        assert!(matches!(c.validate(), Err(Error::InvalidInput { ref field, .. }) if field == "potential.kind"));
    }

    #[test]
    fn json_and_kv_agree() {
        let c = RunConfig { cutoff: Some(12), threads: Some(3), ..Default::default() };
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(RunConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    proptest! {
        #[test]
        fn kv_round_trip(
            n in 2u64..100_000,
            ell in 1e-3f64..0.499,
            v0 in 1e-6f64..1e6,
            cutoff in proptest::option::of(1u32..500),
            ladder in proptest::collection::vec(4.0f64..1e5, 0..6),
            out in proptest::option::of("[a-zA-Z0-9 ,_./#\\[\\]\"-]{1,20}"),
            kind in prop_oneof![Just("square_barrier"), Just("1e3"), Just("true"), Just("x, y")],
        ) {
            let mut c = RunConfig { n, ell, cutoff, ..Default::default() };
            c.potential.v0 = v0;
            c.potential.kind = kind.to_string();
            c.fit.lattice_ladder = ladder;
            c.output.out = out.map(PathBuf::from);
            let text = c.to_kv();
            let back = RunConfig::from_kv(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.to_kv(), text);
        }
    }
}
