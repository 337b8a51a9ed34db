//! Experiment configuration documents (JSON).
//!
//! Parsing is strict: unknown keys, missing physical quantities and
//! inconsistent values are all collected and reported together.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::msq::ErrorMetric;
use crate::problem::{registry, SdeProblem};
use crate::schemes::SchemeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Pullback,
    Periodicity,
    Coupling,
    Converge,
    Validate,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Simulate,
        Command::Pullback,
        Command::Periodicity,
        Command::Coupling,
        Command::Converge,
        Command::Validate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Pullback => "pullback",
            Command::Periodicity => "periodicity",
            Command::Coupling => "coupling",
            Command::Converge => "converge",
            Command::Validate => "validate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub h: f64,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateBlock {
    pub t0: f64,
    pub t_end: f64,
    pub xi: Vec<f64>,
    pub samples: usize,
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackBlock {
    pub k_list: Vec<usize>,
    pub window: (f64, f64),
    pub xi_list: Vec<Vec<f64>>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicityBlock {
    pub depth_k: usize,
    pub window: (f64, f64),
    pub shift_count: usize,
    pub xi: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlock {
    pub t0: f64,
    pub t_end: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub samples: usize,
    pub stride: Option<usize>,
    /// Pairs used to estimate the contraction constants; 0 skips the bound.
    pub bound_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceSpec {
    FinestPmm,
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeBlock {
    pub schemes: Vec<SchemeKind>,
    pub ladder: Vec<f64>,
    pub h_ref: f64,
    pub reference: ReferenceSpec,
    pub t0: f64,
    pub t_end: f64,
    pub xi: Vec<f64>,
    pub samples: usize,
    pub metric: ErrorMetric,
    pub gamma: Option<f64>,
    pub include_failed_rows: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateBlock {
    pub samples: usize,
    pub radius: f64,
    pub q: f64,
    pub p_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Simulate(SimulateBlock),
    Pullback(PullbackBlock),
    Periodicity(PeriodicityBlock),
    Coupling(CouplingBlock),
    Converge(ConvergeBlock),
    Validate(ValidateBlock),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Command,
    pub problem_label: String,
    pub problem_params: BTreeMap<String, f64>,
    pub problem: SdeProblem,
    pub period: f64,
    pub scheme: Option<SchemeSpec>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub block: Block,
    /// The document as parsed, for the run manifest.
    pub raw: Value,
}

struct Reader<'a> {
    map: &'a Map<String, Value>,
    path: String,
    known: Vec<&'static str>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn as_f64_list(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(Value::as_f64).collect()
}

impl<'a> Reader<'a> {
    fn open(v: &'a Value, path: &str, errs: &mut Vec<String>) -> Option<Self> {
        match v.as_object() {
            Some(map) => Some(Reader { map, path: path.to_string(), known: Vec::new() }),
            None => {
                errs.push(format!("{}: expected an object", if path.is_empty() { "document" } else { path }));
                None
            }
        }
    }

    fn name(&self, key: &str) -> String {
        join(&self.path, key)
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.known.push(key);
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn required(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<&'a Value> {
        let v = self.get(key);
        if v.is_none() {
            errs.push(format!("{}: missing required key", self.name(key)));
        }
        v
    }

    fn typed<T>(&mut self, key: &'static str, what: &str, required: bool, errs: &mut Vec<String>, conv: impl Fn(&'a Value) -> Option<T>) -> Option<T> {
        let v = if required { self.required(key, errs)? } else { self.get(key)? };
        let out = conv(v);
        if out.is_none() {
            errs.push(format!("{}: expected {what}, got {v}", self.name(key)));
        }
        out
    }

    fn f64(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<f64> {
        self.typed(key, "a finite number", true, errs, |v| v.as_f64().filter(|x| x.is_finite()))
    }

    fn opt_f64(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<f64> {
        self.typed(key, "a finite number", false, errs, |v| v.as_f64().filter(|x| x.is_finite()))
    }

    fn count(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<usize> {
        self.typed(key, "a non-negative integer", true, errs, |v| v.as_u64().map(|n| n as usize))
    }

    fn opt_count(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<usize> {
        self.typed(key, "a non-negative integer", false, errs, |v| v.as_u64().map(|n| n as usize))
    }

    fn string(&mut self, key: &'static str, required: bool, errs: &mut Vec<String>) -> Option<&'a str> {
        self.typed(key, "a string", required, errs, |v| v.as_str())
    }

    fn list(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<Vec<f64>> {
        self.typed(key, "a list of numbers", true, errs, as_f64_list)
    }

    fn window(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<(f64, f64)> {
        let w = self.typed(key, "a pair [lo, hi]", true, errs, |v| as_f64_list(v).filter(|w| w.len() == 2))?;
        if w[1] < w[0] {
            errs.push(format!("{}: lower end {} exceeds upper end {}", self.name(key), w[0], w[1]));
        }
        Some((w[0], w[1]))
    }

    fn finish(self, errs: &mut Vec<String>) {
        for key in self.map.keys() {
            if !self.known.contains(&key.as_str()) {
                errs.push(format!("{}: unknown key", self.name(key)));
            }
        }
    }
}

fn is_multiple(len: f64, h: f64) -> bool {
    let r = len / h;
    r.round() >= 1.0 && (r - r.round()).abs() <= 1e-9 * r
}

fn check_state(name: &str, xi: &Option<Vec<f64>>, dim: Option<usize>, errs: &mut Vec<String>) {
    if let (Some(xi), Some(d)) = (xi, dim) {
        if xi.len() != d {
            errs.push(format!("{name}: has {} components, the problem has dimension {d}", xi.len()));
        }
    }
}

fn check_positive(name: String, n: Option<usize>, min: usize, errs: &mut Vec<String>) {
    if let Some(n) = n {
        if n < min {
            errs.push(format!("{name}: must be at least {min}, got {n}"));
        }
    }
}

fn parse_scheme(v: &Value, errs: &mut Vec<String>) -> Option<SchemeSpec> {
    let mut r = Reader::open(v, "scheme", errs)?;
    let kind = r.string("kind", true, errs).and_then(|s| match s.parse::<SchemeKind>() {
        Ok(k) => Some(k),
        Err(_) => {
            errs.push(format!("scheme.kind: unknown scheme '{s}', expected PMM, PEM or EM"));
            None
        }
    });
    let h = r.f64("h", errs);
    if let Some(h) = h {
        if !(h > 0.0 && h < 1.0) {
            errs.push(format!("scheme.h: stepsize {h} must lie in (0, 1)"));
        }
    }
    let gamma = r.opt_f64("gamma", errs);
    if let Some(g) = gamma {
        if g < 1.0 {
            errs.push(format!("scheme.gamma: must be at least 1, got {g}"));
        }
    }
    r.finish(errs);
    Some(SchemeSpec { kind: kind?, h: h?, gamma })
}

fn parse_problem(v: &Value, errs: &mut Vec<String>) -> Option<(String, BTreeMap<String, f64>, Option<SdeProblem>)> {
    let mut r = Reader::open(v, "problem", errs)?;
    let label = r.string("label", true, errs);
    let mut params = BTreeMap::new();
    if let Some(p) = r.get("params") {
        match p.as_object() {
            Some(map) => {
                for (k, v) in map {
                    match v.as_f64() {
                        Some(x) => {
                            params.insert(k.clone(), x);
                        }
                        None => errs.push(format!("problem.params.{k}: expected a number, got {v}")),
                    }
                }
            }
            None => errs.push("problem.params: expected an object".into()),
        }
    }
    r.finish(errs);
    let label = label?.to_string();
    let problem = match registry::lookup(&label, &params) {
        Ok(p) => Some(p),
        Err(e) => {
            errs.push(format!("problem: {}", e.to_string().trim_start_matches("configuration error: ")));
            None
        }
    };
    Some((label, params, problem))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: Value = serde_json::from_str(text).map_err(|e| {
        Error::Invalid(vec![format!("syntax error at line {}, column {}: {e}", e.line(), e.column())])
    })?;
    let mut errs = Vec::new();
    let Some(mut top) = Reader::open(&raw, "", &mut errs) else {
        return Err(Error::Invalid(errs));
    };

    let command = top.string("command", true, &mut errs).and_then(|s| {
        let c = Command::parse(s);
        if c.is_none() {
            let names: Vec<&str> = Command::ALL.iter().map(|c| c.as_str()).collect();
            errs.push(format!("command: unknown command '{s}', expected one of {names:?}"));
        }
        c
    });
    let problem = top.required("problem", &mut errs).and_then(|v| parse_problem(v, &mut errs));
    let dim = problem.as_ref().and_then(|p| p.2.as_ref()).map(|p| p.dim());
    let period = top.f64("period", &mut errs);
    if let Some(tau) = period {
        if !(tau > 0.0) {
            errs.push(format!("period: must be positive, got {tau}"));
        } else if let Some(p) = problem.as_ref().and_then(|p| p.2.as_ref()) {
            if (p.period() - tau).abs() > 1e-12 * tau {
                errs.push(format!("period: {tau} does not match the period {} of problem '{}'", p.period(), p.label()));
            }
        }
    }
    let seed = top.typed("seed", "an unsigned 64-bit integer", true, &mut errs, Value::as_u64);
    let out = top.string("out", false, &mut errs).map(PathBuf::from);
    let scheme_value = top.get("scheme");

    let mut blocks = Vec::new();
    for c in Command::ALL {
        if let Some(v) = top.get(c.as_str()) {
            blocks.push((c, v));
        }
    }
    top.finish(&mut errs);

    let mut block = None;
    if let Some(command) = command {
        for (c, _) in &blocks {
            if *c != command {
                errs.push(format!("{}: block does not belong to command '{}'", c.as_str(), command.as_str()));
            }
        }
        match blocks.iter().find(|(c, _)| *c == command) {
            Some((_, v)) => block = parse_block(command, v, dim, &mut errs),
            None => errs.push(format!("{}: missing block for the selected command", command.as_str())),
        }
    }

    let scheme = match (command, scheme_value) {
        (Some(Command::Converge), Some(_)) => {
            errs.push("scheme: not used by converge; set converge.schemes, converge.ladder and converge.gamma".into());
            None
        }
        (Some(Command::Converge), None) => None,
        (_, Some(v)) => parse_scheme(v, &mut errs),
        (Some(_), None) => {
            errs.push("scheme: missing required key".into());
            None
        }
        (None, None) => None,
    };
    if let (Some(s), Some(tau)) = (&scheme, period) {
        if s.h > 0.0 && tau > 0.0 && !is_multiple(tau, s.h) {
            errs.push(format!("period {tau} is not an integer multiple of the stepsize h = {}", s.h));
        }
    }
    if let (Some(Block::Converge(c)), Some(p)) = (&block, problem.as_ref()) {
        if c.reference == ReferenceSpec::Exact && p.0 != "gbm" {
            errs.push(format!("converge.reference: the exact reference is only available for 'gbm', not '{}'", p.0));
        }
    }

    if !errs.is_empty() {
        return Err(Error::Invalid(errs));
    }
    let (problem_label, problem_params, problem) = problem.expect("checked");
    Ok(ExperimentConfig {
        command: command.expect("checked"),
        problem_label,
        problem_params,
        problem: problem.expect("checked"),
        period: period.expect("checked"),
        scheme,
        seed: seed.expect("checked"),
        out,
        block: block.expect("checked"),
        raw,
    })
}

fn parse_block(command: Command, v: &Value, dim: Option<usize>, errs: &mut Vec<String>) -> Option<Block> {
    let name = command.as_str();
    let mut r = Reader::open(v, name, errs)?;
    let block = match command {
        Command::Simulate => {
            let t0 = r.f64("t0", errs);
            let t_end = r.f64("t_end", errs);
            let xi = r.list("xi", errs);
            let samples = r.count("samples", errs);
            let stride = r.opt_count("stride", errs);
            check_state("simulate.xi", &xi, dim, errs);
            check_positive(r.name("samples"), samples, 1, errs);
            if let (Some(a), Some(b)) = (t0, t_end) {
                if b <= a {
                    errs.push(format!("simulate: t_end {b} must exceed t0 {a}"));
                }
            }
            Block::Simulate(SimulateBlock { t0: t0?, t_end: t_end?, xi: xi?, samples: samples?, stride })
        }
        Command::Pullback => {
            let k_list = r.typed("k_list", "a list of positive integers", true, errs, |v| {
                v.as_array()?.iter().map(|k| k.as_u64().map(|k| k as usize)).collect::<Option<Vec<_>>>()
            });
            if let Some(k) = &k_list {
                if k.is_empty() || k.contains(&0) || k.windows(2).any(|w| w[1] < w[0]) {
                    errs.push(format!("pullback.k_list: {k:?} must be non-empty, positive and ascending"));
                }
            }
            let window = r.window("window", errs);
            let xi_list = r.typed("xi_list", "a list of initial values", true, errs, |v| {
                v.as_array()?.iter().map(as_f64_list).collect::<Option<Vec<_>>>()
            });
            if let Some(list) = &xi_list {
                if list.is_empty() {
                    errs.push("pullback.xi_list: must not be empty".into());
                }
                for (i, xi) in list.iter().enumerate() {
                    check_state(&format!("pullback.xi_list[{i}]"), &Some(xi.clone()), dim, errs);
                }
            }
            let samples = r.count("samples", errs);
            check_positive(r.name("samples"), samples, 1, errs);
            Block::Pullback(PullbackBlock { k_list: k_list?, window: window?, xi_list: xi_list?, samples: samples? })
        }
        Command::Periodicity => {
            let depth_k = r.count("depth_k", errs);
            check_positive(r.name("depth_k"), depth_k, 1, errs);
            let window = r.window("window", errs);
            let shift_count = r.count("shift_count", errs);
            let xi = r.list("xi", errs);
            check_state("periodicity.xi", &xi, dim, errs);
            let samples = r.count("samples", errs);
            check_positive(r.name("samples"), samples, 1, errs);
            Block::Periodicity(PeriodicityBlock {
                depth_k: depth_k?,
                window: window?,
                shift_count: shift_count?,
                xi: xi?,
                samples: samples?,
            })
        }
        Command::Coupling => {
            let t0 = r.f64("t0", errs);
            let t_end = r.f64("t_end", errs);
            let xi = r.list("xi", errs);
            let eta = r.list("eta", errs);
            check_state("coupling.xi", &xi, dim, errs);
            check_state("coupling.eta", &eta, dim, errs);
            let samples = r.count("samples", errs);
            check_positive(r.name("samples"), samples, 1, errs);
            let stride = r.opt_count("stride", errs);
            let bound_pairs = r.opt_count("bound_pairs", errs).unwrap_or(10_000);
            if let (Some(a), Some(b)) = (t0, t_end) {
                if b <= a {
                    errs.push(format!("coupling: t_end {b} must exceed t0 {a}"));
                }
            }
            Block::Coupling(CouplingBlock {
                t0: t0?,
                t_end: t_end?,
                xi: xi?,
                eta: eta?,
                samples: samples?,
                stride,
                bound_pairs,
            })
        }
        Command::Converge => {
            let schemes = r.typed("schemes", "a list of scheme names (PMM, PEM, EM)", true, errs, |v| {
                v.as_array()?.iter().map(|s| s.as_str()?.parse::<SchemeKind>().ok()).collect::<Option<Vec<_>>>()
            });
            let ladder = r.list("ladder", errs);
            let h_ref = r.f64("h_ref", errs);
            let reference = r.string("reference", true, errs).and_then(|s| match s {
                "finest_pmm" => Some(ReferenceSpec::FinestPmm),
                "exact" => Some(ReferenceSpec::Exact),
                other => {
                    errs.push(format!("converge.reference: unknown reference '{other}', expected 'finest_pmm' or 'exact'"));
                    None
                }
            });
            let t0 = r.f64("t0", errs);
            let t_end = r.f64("t_end", errs);
            let xi = r.list("xi", errs);
            check_state("converge.xi", &xi, dim, errs);
            let samples = r.count("samples", errs);
            check_positive(r.name("samples"), samples, 2, errs);
            let metric = match r.string("metric", false, errs) {
                None | Some("endpoint") => Some(ErrorMetric::Endpoint),
                Some("sup") => Some(ErrorMetric::Sup),
                Some(other) => {
                    errs.push(format!("converge.metric: unknown metric '{other}', expected 'endpoint' or 'sup'"));
                    None
                }
            };
            let gamma = r.opt_f64("gamma", errs);
            let include_failed_rows = r
                .typed("include_failed_rows", "a boolean", false, errs, Value::as_bool)
                .unwrap_or(false);
            if let (Some(ladder), Some(h_ref)) = (&ladder, h_ref) {
                if !(h_ref > 0.0 && h_ref < 1.0) {
                    errs.push(format!("converge.h_ref: stepsize {h_ref} must lie in (0, 1)"));
                } else {
                    for &h in ladder {
                        if !is_multiple(h, h_ref) {
                            errs.push(format!("converge.ladder: {h} is not an integer multiple of h_ref = {h_ref}"));
                        }
                    }
                }
                if ladder.is_empty() {
                    errs.push("converge.ladder: must not be empty".into());
                }
            }
            if let (Some(a), Some(b)) = (t0, t_end) {
                if b <= a {
                    errs.push(format!("converge: t_end {b} must exceed t0 {a}"));
                } else if let Some(ladder) = &ladder {
                    for &h in ladder.iter().chain(h_ref.as_ref()) {
                        if h > 0.0 && !is_multiple(b - a, h) {
                            errs.push(format!("converge: interval length {} is not a multiple of stepsize {h}", b - a));
                        }
                    }
                }
            }
            Block::Converge(ConvergeBlock {
                schemes: schemes?,
                ladder: ladder?,
                h_ref: h_ref?,
                reference: reference?,
                t0: t0?,
                t_end: t_end?,
                xi: xi?,
                samples: samples?,
                metric: metric?,
                gamma,
                include_failed_rows,
            })
        }
        Command::Validate => {
            let samples = r.count("samples", errs);
            check_positive(r.name("samples"), samples, 1, errs);
            let radius = r.opt_f64("radius", errs).unwrap_or(10.0);
            if !(radius > 0.0) {
                errs.push(format!("validate.radius: must be positive, got {radius}"));
            }
            let q = r.opt_f64("q", errs).unwrap_or(1.0);
            if !(q > 0.0) {
                errs.push(format!("validate.q: must be positive, got {q}"));
            }
            let p_star = r.opt_f64("p_star", errs);
            Block::Validate(ValidateBlock { samples: samples?, radius, q, p_star })
        }
    };
    r.finish(errs);
    Some(block)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIMULATE: &str = r#"{
        "command": "simulate",
        "problem": {"label": "benchmark"},
        "period": 2,
        "seed": 1,
        "scheme": {"kind": "PMM", "h": 0.01},
        "simulate": {"t0": -1, "t_end": 0, "xi": [0.5], "samples": 2}
    }"#;

    fn violations(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::Invalid(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn minimal_simulate() {
        let c = parse_config(SIMULATE).unwrap();
        assert_eq!(c.command, Command::Simulate);
        assert_eq!(c.scheme.unwrap().kind, SchemeKind::Pmm);
        assert_eq!(c.seed, 1);
    }

    #[test]
    fn unknown_key_is_named() {
        let v = violations(&SIMULATE.replace(r#""h": 0.01"#, r#""h": 0.01, "stepsize_h": 0.01"#));
        assert_eq!(v, vec!["scheme.stepsize_h: unknown key".to_string()]);
    }

    #[test]
    fn period_not_multiple_of_h() {
        let v = violations(&SIMULATE.replace("0.01", "0.3"));
        assert!(v.iter().any(|m| m.contains("period 2") && m.contains("0.3")), "{v:?}");
    }

    #[test]
    fn all_violations_reported() {
        let text = SIMULATE
            .replace(r#""seed": 1,"#, "")
            .replace(r#""xi": [0.5]"#, r#""xi": [0.5, 1.0]"#)
            .replace(r#""period": 2"#, r#""period": 3"#);
        let v = violations(&text);
        assert_eq!(v.len(), 3, "{v:?}");
    }

    #[test]
    fn syntax_error_has_position() {
        let v = violations("{\n  \"command\": }");
        assert!(v[0].contains("line 2"), "{v:?}");
    }

    #[test]
    fn block_must_match_command() {
        let v = violations(&SIMULATE.replace(r#""simulate": {"#, r#""coupling": {"#));
        assert!(v.iter().any(|m| m.starts_with("coupling: block does not belong")));
        assert!(v.iter().any(|m| m.starts_with("simulate: missing block")));
    }
}
