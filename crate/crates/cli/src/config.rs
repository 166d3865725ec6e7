//! Experiment configuration.
//!
//! A config is a sequence of `[section]` headers followed by `key = value`
//! lines. Values use TOML syntax: quoted strings, numbers, booleans and
//! bracketed arrays. `#` starts a comment. Every key is checked against the
//! table in [`SECTIONS`]; unknown keys, keys that do not apply to the chosen
//! potential family, out-of-range values and missing required keys are all
//! reported together, each with its line number.
//!
//! The `config` object inside a `run_meta.json` is accepted as well, so a
//! finished run can be replayed from its metadata.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde_json::{json, Map, Value as Json};
use transportlab::dynamics::{Method, ProfileConfig};
use transportlab::lattice::BoxPolicy;
use transportlab::potentials::{PolymerBlocks, Sampler, SubstitutionRules, GOLDEN_THETA};
use transportlab::{PotentialSpec, WavePacket};

/// Accepted keys per section.
pub const SECTIONS: &[(&str, &[&str])] = &[
    ("experiment", &["kind", "seed", "output"]),
    ("potential", &["family", "coupling", "theta", "phase", "sampler", "plus", "minus", "bernoulli", "value"]),
    ("state", &["sites", "second", "mix"]),
    ("time", &["value", "start", "stop", "count"]),
    (
        "analysis",
        &[
            "p",
            "alpha",
            "m",
            "c",
            "epsilon",
            "delta",
            "phases",
            "two_sided",
            "k_min",
            "k_max",
            "energy",
            "energy_min",
            "energy_max",
            "energy_count",
            "intervals",
            "tol",
        ],
    ),
    ("box", &["method", "half_width", "c_box", "margin", "tol", "leakage_tol"]),
    ("grid", &["half_span", "spacing_factor", "tail_panels"]),
];

/// A value in the parsed key/value tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Array(Vec<Value>),
}

#[derive(Clone, Debug)]
struct Entry {
    value: Value,
    line: usize,
}

#[derive(Clone, Debug, Default)]
struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

type Tree = BTreeMap<String, Section>;

/// One problem found in a config.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    /// 1-based line; 0 when the source has no line information (JSON).
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}: {}", self.line, self.key, self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Profile,
    Moments,
    Beta,
    SAlpha,
    PremiseScan,
    Certificate,
    Tracemap,
    BandScan,
    CriticalScan,
    Sublinearity,
}

impl ExperimentKind {
    const ALL: [(&'static str, ExperimentKind); 10] = [
        ("profile", ExperimentKind::Profile),
        ("moments", ExperimentKind::Moments),
        ("beta", ExperimentKind::Beta),
        ("s_alpha", ExperimentKind::SAlpha),
        ("premise_scan", ExperimentKind::PremiseScan),
        ("certificate", ExperimentKind::Certificate),
        ("tracemap", ExperimentKind::Tracemap),
        ("band_scan", ExperimentKind::BandScan),
        ("critical_scan", ExperimentKind::CriticalScan),
        ("sublinearity", ExperimentKind::Sublinearity),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, k)| *k == self).unwrap().0
    }

    fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().find(|(n, _)| *n == s).map(|(_, k)| *k)
    }

    fn time_mode(self) -> TimeMode {
        use ExperimentKind::*;
        match self {
            Profile | Certificate => TimeMode::Single,
            Moments | Beta | SAlpha | PremiseScan | Sublinearity => TimeMode::Grid,
            Tracemap | BandScan | CriticalScan => TimeMode::None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum TimeMode {
    Single,
    Grid,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Fibonacci,
    Sturmian,
    AlmostMathieu,
    Quasiperiodic,
    ThueMorse,
    PeriodDoubling,
    Polymer,
    Dimer,
    Constant,
    Free,
}

impl Family {
    const ALL: [(&'static str, Family); 10] = [
        ("fibonacci", Family::Fibonacci),
        ("sturmian", Family::Sturmian),
        ("almost_mathieu", Family::AlmostMathieu),
        ("quasiperiodic", Family::Quasiperiodic),
        ("thue_morse", Family::ThueMorse),
        ("period_doubling", Family::PeriodDoubling),
        ("polymer", Family::Polymer),
        ("dimer", Family::Dimer),
        ("constant", Family::Constant),
        ("free", Family::Free),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, f)| *f == self).unwrap().0
    }

    fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().find(|(n, _)| *n == s).map(|(_, f)| *f)
    }

    /// Potential keys this family reads besides `family`.
    fn keys(self) -> &'static [&'static str] {
        use Family::*;
        match self {
            Fibonacci | ThueMorse | PeriodDoubling | Dimer => &["coupling"],
            Sturmian | AlmostMathieu => &["coupling", "theta", "phase"],
            Quasiperiodic => &["coupling", "theta", "phase", "sampler"],
            Polymer => &["plus", "minus", "bernoulli"],
            Constant => &["value"],
            Free => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialConfig {
    pub family: Family,
    pub coupling: f64,
    pub theta: f64,
    pub phase: f64,
    pub sampler: Sampler,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    pub bernoulli: f64,
    pub value: f64,
}

impl PotentialConfig {
    pub fn to_spec(&self, seed: u64) -> transportlab::Result<PotentialSpec> {
        use Family::*;
        match self.family {
            Fibonacci => PotentialSpec::sturmian(self.coupling, GOLDEN_THETA, 0.0),
            Sturmian => PotentialSpec::sturmian(self.coupling, self.theta, self.phase),
            AlmostMathieu => PotentialSpec::almost_mathieu(self.coupling, self.theta, self.phase),
            Quasiperiodic => PotentialSpec::quasiperiodic(self.sampler, self.coupling, self.theta, self.phase),
            ThueMorse => PotentialSpec::substitution(SubstitutionRules::thue_morse(), self.coupling),
            PeriodDoubling => PotentialSpec::substitution(SubstitutionRules::period_doubling(), self.coupling),
            Polymer => {
                PotentialSpec::polymer(PolymerBlocks::new(self.plus.clone(), self.minus.clone(), self.bernoulli, seed)?)
            }
            Dimer => PotentialSpec::polymer(PolymerBlocks::dimer(self.coupling, seed)),
            Constant => Ok(PotentialSpec::constant(self.value)),
            Free => Ok(PotentialSpec::free()),
        }
    }

    /// The two polymer blocks, for families that have them.
    pub fn blocks(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self.family {
            Family::Polymer => Some((self.plus.clone(), self.minus.clone())),
            Family::Dimer => Some((vec![self.coupling; 2], vec![-self.coupling; 2])),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TimeConfig {
    Single(f64),
    Grid { start: f64, stop: f64, count: usize },
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisConfig {
    pub p: Vec<f64>,
    pub alpha: Option<f64>,
    pub m: f64,
    pub c: f64,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub phases: usize,
    pub two_sided: bool,
    pub k_min: usize,
    pub k_max: usize,
    pub energy: Option<f64>,
    pub energy_min: f64,
    pub energy_max: f64,
    pub energy_count: usize,
    pub intervals: Vec<(f64, f64)>,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxConfig {
    pub method: Method,
    pub half_width: Option<usize>,
    pub c_box: f64,
    pub margin: usize,
    pub tol: f64,
    pub leakage_tol: f64,
}

impl BoxConfig {
    pub fn profile_config(&self) -> ProfileConfig {
        ProfileConfig {
            method: self.method,
            half_width: self.half_width,
            box_policy: BoxPolicy { c_box: self.c_box, margin: self.margin },
            box_tol: self.tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub half_span: Option<f64>,
    /// Trapezoid spacing in units of `1/T`.
    pub spacing_factor: f64,
    pub tail_panels: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub output: String,
    pub potential: PotentialConfig,
    pub state: Vec<(i64, f64, f64)>,
    pub second: Option<Vec<(i64, f64, f64)>>,
    pub mix: (f64, f64),
    pub time: TimeConfig,
    pub analysis: AnalysisConfig,
    pub boxing: BoxConfig,
    pub grid: GridConfig,
}

pub const DEFAULT_OUTPUT: &str = "transportlab-out";

fn packet(sites: &[(i64, f64, f64)]) -> transportlab::Result<WavePacket> {
    let pairs: Vec<(i64, Complex64)> = sites.iter().map(|&(n, re, im)| (n, Complex64::new(re, im))).collect();
    WavePacket::from_sites(&pairs)
}

impl ExperimentConfig {
    pub fn spec(&self) -> transportlab::Result<PotentialSpec> {
        self.potential.to_spec(self.seed)
    }

    pub fn packet(&self) -> transportlab::Result<WavePacket> {
        packet(&self.state)
    }

    pub fn second_packet(&self) -> Option<transportlab::Result<WavePacket>> {
        self.second.as_deref().map(packet)
    }

    pub fn times(&self) -> Vec<f64> {
        match self.time {
            TimeConfig::Single(t) => vec![t],
            TimeConfig::Grid { start, stop, count } => {
                transportlab::exponents::geometric_grid(start, stop, count).unwrap_or_default()
            }
            TimeConfig::None => Vec::new(),
        }
    }

    /// Every resolved parameter as a JSON object with the config's sections.
    pub fn to_json(&self) -> Json {
        let sites =
            |s: &[(i64, f64, f64)]| Json::from(s.iter().map(|&(n, re, im)| json!([n, re, im])).collect::<Vec<_>>());
        let mut potential = Map::new();
        potential.insert("family".into(), self.potential.family.name().into());
        for key in self.potential.family.keys() {
            let p = &self.potential;
            let v = match *key {
                "coupling" => json!(p.coupling),
                "theta" => json!(p.theta),
                "phase" => json!(p.phase),
                "sampler" => json!(p.sampler.name()),
                "plus" => json!(p.plus),
                "minus" => json!(p.minus),
                "bernoulli" => json!(p.bernoulli),
                "value" => json!(p.value),
                _ => unreachable!(),
            };
            potential.insert((*key).into(), v);
        }
        let mut state = Map::new();
        state.insert("sites".into(), sites(&self.state));
        if let Some(second) = &self.second {
            state.insert("second".into(), sites(second));
        }
        state.insert("mix".into(), json!([self.mix.0, self.mix.1]));
        let time = match self.time {
            TimeConfig::Single(t) => json!({ "value": t }),
            TimeConfig::Grid { start, stop, count } => json!({ "start": start, "stop": stop, "count": count }),
            TimeConfig::None => json!({}),
        };
        let a = &self.analysis;
        let mut analysis = Map::new();
        analysis.insert("p".into(), json!(a.p));
        if let Some(alpha) = a.alpha {
            analysis.insert("alpha".into(), json!(alpha));
        }
        analysis.insert("m".into(), json!(a.m));
        analysis.insert("c".into(), json!(a.c));
        if let Some(eps) = a.epsilon {
            analysis.insert("epsilon".into(), json!(eps));
        }
        analysis.insert("delta".into(), json!(a.delta));
        analysis.insert("phases".into(), json!(a.phases));
        analysis.insert("two_sided".into(), json!(a.two_sided));
        analysis.insert("k_min".into(), json!(a.k_min));
        analysis.insert("k_max".into(), json!(a.k_max));
        if let Some(e) = a.energy {
            analysis.insert("energy".into(), json!(e));
        }
        analysis.insert("energy_min".into(), json!(a.energy_min));
        analysis.insert("energy_max".into(), json!(a.energy_max));
        analysis.insert("energy_count".into(), json!(a.energy_count));
        if !a.intervals.is_empty() {
            analysis
                .insert("intervals".into(), json!(a.intervals.iter().map(|&(x, y)| json!([x, y])).collect::<Vec<_>>()));
        }
        analysis.insert("tol".into(), json!(a.tol));
        let b = &self.boxing;
        let mut boxing = Map::new();
        boxing.insert("method".into(), json!(b.method.name()));
        if let Some(l) = b.half_width {
            boxing.insert("half_width".into(), json!(l));
        }
        boxing.insert("c_box".into(), json!(b.c_box));
        boxing.insert("margin".into(), json!(b.margin));
        boxing.insert("tol".into(), json!(b.tol));
        boxing.insert("leakage_tol".into(), json!(b.leakage_tol));
        let mut grid = Map::new();
        if let Some(h) = self.grid.half_span {
            grid.insert("half_span".into(), json!(h));
        }
        grid.insert("spacing_factor".into(), json!(self.grid.spacing_factor));
        grid.insert("tail_panels".into(), json!(self.grid.tail_panels));
        json!({
            "experiment": { "kind": self.kind.name(), "seed": self.seed, "output": self.output },
            "potential": potential,
            "state": state,
            "time": time,
            "analysis": analysis,
            "box": boxing,
            "grid": grid,
        })
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn convert_toml(value: &toml_edit::Value) -> Option<Value> {
    use toml_edit::Value as T;
    Some(match value {
        T::String(s) => Value::Str(s.value().clone()),
        T::Integer(i) => Value::Int(*i.value()),
        T::Float(f) => Value::Float(*f.value()),
        T::Boolean(b) => Value::Bool(*b.value()),
        T::Array(a) => Value::Array(a.iter().map(convert_toml).collect::<Option<_>>()?),
        T::Datetime(_) | T::InlineTable(_) => return None,
    })
}

fn parse_toml(text: &str) -> Result<Tree, Vec<Violation>> {
    let doc = toml_edit::Document::parse(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
        vec![Violation { line, key: "syntax".into(), message: e.message().trim().to_string() }]
    })?;
    let mut tree = Tree::new();
    let mut violations = Vec::new();
    let root = doc.as_table();
    for (name, item) in root.iter() {
        let key_line = root.key(name).and_then(|k| k.span()).map(|s| line_of(text, s.start)).unwrap_or(0);
        let Some(table) = item.as_table() else {
            violations.push(Violation {
                line: key_line,
                key: name.into(),
                message: "key outside any [section]".into(),
            });
            continue;
        };
        let line = table.span().map(|s| line_of(text, s.start)).unwrap_or(key_line);
        let mut section = Section { line, entries: BTreeMap::new() };
        for (key, item) in table.iter() {
            let line = table.key(key).and_then(|k| k.span()).map(|s| line_of(text, s.start)).unwrap_or(line);
            match item.as_value().and_then(convert_toml) {
                Some(value) => {
                    section.entries.insert(key.into(), Entry { value, line });
                }
                None => violations.push(Violation {
                    line,
                    key: format!("{name}.{key}"),
                    message: "unsupported value (nested tables and dates are not accepted)".into(),
                }),
            }
        }
        tree.insert(name.into(), section);
    }
    if violations.is_empty() {
        Ok(tree)
    } else {
        Err(violations)
    }
}

fn convert_json(value: &Json) -> Option<Value> {
    Some(match value {
        Json::Bool(b) => Value::Bool(*b),
        Json::Number(n) => match n.as_i64() {
            Some(i) => Value::Int(i),
            None => Value::Float(n.as_f64()?),
        },
        Json::String(s) => Value::Str(s.clone()),
        Json::Array(a) => Value::Array(a.iter().map(convert_json).collect::<Option<_>>()?),
        Json::Null | Json::Object(_) => return None,
    })
}

fn parse_json(text: &str) -> Result<Tree, Vec<Violation>> {
    let root: Json = serde_json::from_str(text)
        .map_err(|e| vec![Violation { line: e.line(), key: "syntax".into(), message: e.to_string() }])?;
    // a run_meta.json carries the config under "config"
    let root = match root.get("config") {
        Some(c) => c.clone(),
        None => root,
    };
    let Json::Object(sections) = root else {
        return Err(vec![Violation { line: 0, key: "syntax".into(), message: "expected an object".into() }]);
    };
    let mut tree = Tree::new();
    let mut violations = Vec::new();
    for (name, body) in sections {
        let Json::Object(entries) = body else {
            violations.push(Violation { line: 0, key: name.clone(), message: "expected a section object".into() });
            continue;
        };
        let mut section = Section::default();
        for (key, v) in entries {
            match convert_json(&v) {
                Some(value) => {
                    section.entries.insert(key, Entry { value, line: 0 });
                }
                None => violations.push(Violation {
                    line: 0,
                    key: format!("{name}.{key}"),
                    message: "unsupported value".into(),
                }),
            }
        }
        tree.insert(name, section);
    }
    if violations.is_empty() {
        Ok(tree)
    } else {
        Err(violations)
    }
}

/// Reads typed values out of the tree and accumulates violations.
struct Reader<'a> {
    tree: &'a Tree,
    violations: Vec<Violation>,
}

impl<'a> Reader<'a> {
    fn entry(&self, section: &str, key: &str) -> Option<&'a Entry> {
        self.tree.get(section).and_then(|s| s.entries.get(key))
    }

    fn section_line(&self, section: &str) -> usize {
        self.tree.get(section).map(|s| s.line).unwrap_or(0)
    }

    fn has(&self, section: &str, key: &str) -> bool {
        self.entry(section, key).is_some()
    }

    fn fail(&mut self, line: usize, section: &str, key: &str, message: impl Into<String>) {
        self.violations.push(Violation { line, key: format!("{section}.{key}"), message: message.into() });
    }

    fn missing(&mut self, section: &str, key: &str) {
        let line = self.section_line(section);
        self.fail(line, section, key, "missing required key");
    }

    fn float_of(v: &Value) -> Option<f64> {
        match v {
            Value::Float(f) => Some(*f),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    /// Optional float with a range predicate described by `range`.
    fn float(&mut self, section: &str, key: &str, range: &str, ok: impl Fn(f64) -> bool) -> Option<f64> {
        let e = self.entry(section, key)?;
        match Self::float_of(&e.value) {
            Some(f) if f.is_finite() && ok(f) => Some(f),
            Some(f) => {
                self.fail(e.line, section, key, format!("value {f} out of range: must be {range}"));
                None
            }
            None => {
                self.fail(e.line, section, key, "expected a number");
                None
            }
        }
    }

    fn int(&mut self, section: &str, key: &str, range: &str, ok: impl Fn(i64) -> bool) -> Option<i64> {
        let e = self.entry(section, key)?;
        match e.value {
            Value::Int(i) if ok(i) => Some(i),
            Value::Int(i) => {
                self.fail(e.line, section, key, format!("value {i} out of range: must be {range}"));
                None
            }
            _ => {
                self.fail(e.line, section, key, "expected an integer");
                None
            }
        }
    }

    fn string(&mut self, section: &str, key: &str) -> Option<&'a str> {
        let e = self.entry(section, key)?;
        match &e.value {
            Value::Str(s) => Some(s),
            _ => {
                self.fail(e.line, section, key, "expected a quoted string");
                None
            }
        }
    }

    fn boolean(&mut self, section: &str, key: &str) -> Option<bool> {
        let e = self.entry(section, key)?;
        match e.value {
            Value::Bool(b) => Some(b),
            _ => {
                self.fail(e.line, section, key, "expected true or false");
                None
            }
        }
    }

    fn floats(&mut self, section: &str, key: &str) -> Option<Vec<f64>> {
        let e = self.entry(section, key)?;
        let parsed = match &e.value {
            Value::Array(items) => items.iter().map(Self::float_of).collect::<Option<Vec<f64>>>(),
            _ => None,
        };
        match parsed {
            Some(v) if v.iter().all(|x| x.is_finite()) => Some(v),
            _ => {
                self.fail(e.line, section, key, "expected an array of finite numbers");
                None
            }
        }
    }

    fn sites(&mut self, section: &str, key: &str) -> Option<Vec<(i64, f64, f64)>> {
        let e = self.entry(section, key)?;
        let parse = |v: &Value| match v {
            Value::Array(t) if t.len() == 3 => match (&t[0], Self::float_of(&t[1]), Self::float_of(&t[2])) {
                (Value::Int(n), Some(re), Some(im)) if re.is_finite() && im.is_finite() => Some((*n, re, im)),
                _ => None,
            },
            _ => None,
        };
        let parsed = match &e.value {
            Value::Array(items) if !items.is_empty() => items.iter().map(parse).collect::<Option<Vec<_>>>(),
            _ => None,
        };
        match parsed {
            Some(s) => {
                if let Err(err) = packet(&s) {
                    self.fail(e.line, section, key, err.to_string());
                    return None;
                }
                Some(s)
            }
            None => {
                self.fail(e.line, section, key, "expected a non-empty array of [index, re, im] triples");
                None
            }
        }
    }
}

/// Parses and validates a config (TOML-style text or JSON).
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<Violation>> {
    let tree = if text.trim_start().starts_with('{') { parse_json(text)? } else { parse_toml(text)? };
    let mut r = Reader { tree: &tree, violations: Vec::new() };

    for (name, section) in &tree {
        match SECTIONS.iter().find(|(s, _)| s == name) {
            None => r.violations.push(Violation {
                line: section.line,
                key: name.clone(),
                message: "unknown section".into(),
            }),
            Some((_, keys)) => {
                for (key, entry) in &section.entries {
                    if !keys.contains(&key.as_str()) {
                        r.fail(entry.line, name, key, "unknown key");
                    }
                }
            }
        }
    }

    let kind = match r.string("experiment", "kind") {
        Some(s) => match ExperimentKind::from_name(s) {
            Some(k) => Some(k),
            None => {
                let line = r.entry("experiment", "kind").unwrap().line;
                let names: Vec<_> = ExperimentKind::ALL.iter().map(|(n, _)| *n).collect();
                r.fail(line, "experiment", "kind", format!("unknown kind `{s}`; expected one of {}", names.join(", ")));
                None
            }
        },
        None => {
            if !r.has("experiment", "kind") {
                r.missing("experiment", "kind");
            }
            None
        }
    };
    let seed = r.int("experiment", "seed", "≥ 0", |v| v >= 0).unwrap_or(0) as u64;
    let output = r.string("experiment", "output").unwrap_or(DEFAULT_OUTPUT).to_string();

    let family = match r.string("potential", "family") {
        Some(s) => match Family::from_name(s) {
            Some(f) => Some(f),
            None => {
                let line = r.entry("potential", "family").unwrap().line;
                let names: Vec<_> = Family::ALL.iter().map(|(n, _)| *n).collect();
                r.fail(
                    line,
                    "potential",
                    "family",
                    format!("unknown family `{s}`; expected one of {}", names.join(", ")),
                );
                None
            }
        },
        None => {
            if !r.has("potential", "family") {
                r.missing("potential", "family");
            }
            None
        }
    };
    if let Some(f) = family {
        if let Some(section) = tree.get("potential") {
            for (key, entry) in &section.entries {
                if key != "family" && !f.keys().contains(&key.as_str()) && potential_keys().contains(&key.as_str()) {
                    r.fail(entry.line, "potential", key, format!("does not apply to family `{}`", f.name()));
                }
            }
        }
    }
    let coupling = r.float("potential", "coupling", "finite and ≥ 0", |v| v >= 0.0).unwrap_or(1.0);
    let theta = r.float("potential", "theta", "in (0, 1)", |v| v > 0.0 && v < 1.0).unwrap_or(GOLDEN_THETA);
    let phase = r.float("potential", "phase", "in [0, 1)", |v| (0.0..1.0).contains(&v)).unwrap_or(0.0);
    let sampler = match r.string("potential", "sampler") {
        Some(s) => Sampler::from_name(s).unwrap_or_else(|_| {
            let line = r.entry("potential", "sampler").unwrap().line;
            r.fail(line, "potential", "sampler", format!("unknown sampler `{s}`; expected cosine or sqrt"));
            Sampler::Cosine
        }),
        None => Sampler::Cosine,
    };
    let plus = r.floats("potential", "plus");
    let minus = r.floats("potential", "minus");
    if family == Some(Family::Polymer) {
        for (key, v) in [("plus", &plus), ("minus", &minus)] {
            match v {
                None if !r.has("potential", key) => r.missing("potential", key),
                Some(b) if b.is_empty() => {
                    let line = r.entry("potential", key).unwrap().line;
                    r.fail(line, "potential", key, "block must be non-empty");
                }
                _ => {}
            }
        }
    }
    let bernoulli = r.float("potential", "bernoulli", "in (0, 1)", |v| v > 0.0 && v < 1.0).unwrap_or(0.5);
    let value = r.float("potential", "value", "finite", |_| true).unwrap_or(0.0);

    let state = r.sites("state", "sites").unwrap_or_else(|| vec![(0, 1.0, 0.0)]);
    let second = r.sites("state", "second");
    let mix = match r.floats("state", "mix") {
        Some(v) if v.len() == 2 && v.iter().any(|&x| x != 0.0) => (v[0], v[1]),
        Some(_) => {
            let line = r.entry("state", "mix").unwrap().line;
            r.fail(line, "state", "mix", "expected [x, y], not both zero");
            (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2)
        }
        None => (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    };

    let t_value = r.float("time", "value", "> 0", |v| v > 0.0);
    let t_start = r.float("time", "start", "> 0", |v| v > 0.0);
    let t_stop = r.float("time", "stop", "> 0", |v| v > 0.0);
    let t_count = r.int("time", "count", "between 6 and 200", |v| (6..=200).contains(&v));
    let time = match kind.map(|k| k.time_mode()) {
        Some(TimeMode::Single) => {
            for key in ["start", "stop", "count"] {
                if let Some(e) = r.entry("time", key) {
                    r.fail(e.line, "time", key, "this experiment takes a single `value`");
                }
            }
            match t_value {
                Some(t) => TimeConfig::Single(t),
                None => {
                    if !r.has("time", "value") {
                        r.missing("time", "value");
                    }
                    TimeConfig::None
                }
            }
        }
        Some(TimeMode::Grid) => {
            if let Some(e) = r.entry("time", "value") {
                r.fail(e.line, "time", "value", "this experiment takes a grid (start, stop, count)");
            }
            for key in ["start", "stop"] {
                if !r.has("time", key) {
                    r.missing("time", key);
                }
            }
            let count = t_count.unwrap_or(8) as usize;
            match (t_start, t_stop) {
                (Some(a), Some(b)) if b > a => TimeConfig::Grid { start: a, stop: b, count },
                (Some(_), Some(_)) => {
                    let line = r.entry("time", "stop").unwrap().line;
                    r.fail(line, "time", "stop", "must exceed time.start");
                    TimeConfig::None
                }
                _ => TimeConfig::None,
            }
        }
        _ => TimeConfig::None,
    };

    let p = r.floats("analysis", "p").unwrap_or_else(|| vec![2.0]);
    if p.is_empty() || p.iter().any(|&x| x <= 0.0) {
        let line = r.entry("analysis", "p").map(|e| e.line).unwrap_or(0);
        r.fail(line, "analysis", "p", "need a non-empty list of positive exponents");
    }
    let alpha_range: (&str, fn(f64) -> bool) = match kind {
        Some(ExperimentKind::PremiseScan) => ("in (0, 1)", |v| v > 0.0 && v < 1.0),
        Some(ExperimentKind::SAlpha) => ("in (0, 1]", |v| v > 0.0 && v <= 1.0),
        _ => ("≥ 0", |v| v >= 0.0),
    };
    let mut alpha = r.float("analysis", "alpha", alpha_range.0, alpha_range.1);
    match kind {
        Some(ExperimentKind::PremiseScan | ExperimentKind::SAlpha) if !r.has("analysis", "alpha") => {
            r.missing("analysis", "alpha")
        }
        Some(ExperimentKind::Certificate) if alpha.is_none() && !r.has("analysis", "alpha") => alpha = Some(0.0),
        _ => {}
    }
    let m = r.float("analysis", "m", "> 1", |v| v > 1.0).unwrap_or(2.0);
    let c = r.float("analysis", "c", "> 0", |v| v > 0.0).unwrap_or(1.0);
    let epsilon = r.float("analysis", "epsilon", "> 0", |v| v > 0.0);
    let delta = r.float("analysis", "delta", "in (0, 0.1]", |v| v > 0.0 && v <= 0.1).unwrap_or(0.05);
    let phases = r.int("analysis", "phases", "between 1 and 4096", |v| (1..=4096).contains(&v)).unwrap_or(8) as usize;
    let two_sided = r.boolean("analysis", "two_sided").unwrap_or(false);
    let (k_lo, k_hi) = match kind {
        Some(ExperimentKind::Tracemap) => (3, 22),
        _ => (1, 18),
    };
    let k_range = format!("between {k_lo} and {k_hi}");
    let k_min = r.int("analysis", "k_min", &k_range, |v| (k_lo..=k_hi).contains(&v)).unwrap_or(3) as usize;
    let k_max = r.int("analysis", "k_max", &k_range, |v| (k_lo..=k_hi).contains(&v)).unwrap_or(12) as usize;
    if k_min > k_max {
        let line = r.entry("analysis", "k_max").or(r.entry("analysis", "k_min")).map(|e| e.line).unwrap_or(0);
        r.fail(line, "analysis", "k_max", "must be ≥ k_min");
    }
    let energy = r.float("analysis", "energy", "finite", |_| true);
    if kind == Some(ExperimentKind::Tracemap) && !r.has("analysis", "energy") {
        r.missing("analysis", "energy");
    }
    let energy_min = r.float("analysis", "energy_min", "finite", |_| true).unwrap_or(-3.0);
    let energy_max = r.float("analysis", "energy_max", "finite", |_| true).unwrap_or(3.0);
    if energy_max <= energy_min {
        let line = r.entry("analysis", "energy_max").map(|e| e.line).unwrap_or(0);
        r.fail(line, "analysis", "energy_max", "must exceed energy_min");
    }
    let energy_count = r
        .int("analysis", "energy_count", "between 2 and 10^6", |v| (2..=1_000_000).contains(&v))
        .unwrap_or(601) as usize;
    let intervals = match r.entry("analysis", "intervals") {
        Some(e) => {
            let parsed = match &e.value {
                Value::Array(items) if !items.is_empty() => items
                    .iter()
                    .map(|v| match v {
                        Value::Array(pair) if pair.len() == 2 => {
                            match (Reader::float_of(&pair[0]), Reader::float_of(&pair[1])) {
                                (Some(a), Some(b)) if a.is_finite() && b.is_finite() && a <= b => Some((a, b)),
                                _ => None,
                            }
                        }
                        _ => None,
                    })
                    .collect::<Option<Vec<_>>>(),
                _ => None,
            };
            parsed.unwrap_or_else(|| {
                r.fail(e.line, "analysis", "intervals", "expected a non-empty array of [a, b] with a ≤ b");
                Vec::new()
            })
        }
        None => {
            if kind == Some(ExperimentKind::Certificate) {
                r.missing("analysis", "intervals");
            }
            Vec::new()
        }
    };
    let tol = r.float("analysis", "tol", "in (0, 1)", |v| v > 0.0 && v < 1.0).unwrap_or(1e-10);

    let method = match r.string("box", "method") {
        Some("resolvent") | None => Method::Resolvent,
        Some("time-quadrature") => Method::TimeQuadrature,
        Some("eigen-exact") => Method::EigenExact,
        Some(other) => {
            let line = r.entry("box", "method").unwrap().line;
            r.fail(
                line,
                "box",
                "method",
                format!("unknown method `{other}`; expected resolvent, time-quadrature or eigen-exact"),
            );
            Method::Resolvent
        }
    };
    let half_width =
        r.int("box", "half_width", "between 1 and 10^6", |v| (1..=1_000_000).contains(&v)).map(|v| v as usize);
    let c_box = r.float("box", "c_box", "> 0", |v| v > 0.0).unwrap_or(1.5);
    let margin = r.int("box", "margin", "≥ 0", |v| v >= 0).unwrap_or(16) as usize;
    let box_tol = r.float("box", "tol", "in (0, 1)", |v| v > 0.0 && v < 1.0).unwrap_or(1e-8);
    let leakage_tol = r.float("box", "leakage_tol", "in (0, 1)", |v| v > 0.0 && v < 1.0).unwrap_or(1e-6);

    let half_span = r.float("grid", "half_span", "> 0", |v| v > 0.0);
    let spacing_factor = r.float("grid", "spacing_factor", "in (0, 0.25]", |v| v > 0.0 && v <= 0.25).unwrap_or(0.25);
    let tail_panels =
        r.int("grid", "tail_panels", "between 1 and 256", |v| (1..=256).contains(&v)).unwrap_or(4) as usize;

    // cross-key requirements
    if let Some(k) = kind {
        match k {
            ExperimentKind::Sublinearity if second.is_none() && !r.has("state", "second") => {
                r.missing("state", "second")
            }
            ExperimentKind::CriticalScan if !matches!(family, Some(Family::Polymer | Family::Dimer) | None) => {
                let line = r.entry("potential", "family").map(|e| e.line).unwrap_or(0);
                r.fail(line, "potential", "family", "critical_scan needs a polymer or dimer potential");
            }
            ExperimentKind::Tracemap | ExperimentKind::BandScan
                if !matches!(family, Some(Family::Fibonacci) | None) =>
            {
                let line = r.entry("potential", "family").map(|e| e.line).unwrap_or(0);
                r.fail(line, "potential", "family", format!("{} needs the fibonacci family", k.name()));
            }
            ExperimentKind::PremiseScan
                if !two_sided
                    && !matches!(
                        family,
                        Some(Family::Fibonacci | Family::Sturmian | Family::AlmostMathieu | Family::Quasiperiodic)
                            | None
                    ) =>
            {
                let line = r.entry("potential", "family").map(|e| e.line).unwrap_or(0);
                r.fail(line, "potential", "family", "a phase-averaged premise scan needs a potential with a circle phase; set analysis.two_sided = true otherwise");
            }
            _ => {}
        }
    }

    if !r.violations.is_empty() {
        let mut v = r.violations;
        v.sort_by_key(|x| x.line);
        return Err(v);
    }
    let family = family.unwrap();
    Ok(ExperimentConfig {
        kind: kind.unwrap(),
        seed,
        output,
        potential: PotentialConfig {
            family,
            coupling,
            theta,
            phase,
            sampler,
            plus: plus.unwrap_or_default(),
            minus: minus.unwrap_or_default(),
            bernoulli,
            value,
        },
        state,
        second,
        mix,
        time,
        analysis: AnalysisConfig {
            p,
            alpha,
            m,
            c,
            epsilon,
            delta,
            phases,
            two_sided,
            k_min,
            k_max,
            energy,
            energy_min,
            energy_max,
            energy_count,
            intervals,
            tol,
        },
        boxing: BoxConfig { method, half_width, c_box, margin, tol: box_tol, leakage_tol },
        grid: GridConfig { half_span, spacing_factor, tail_panels },
    })
}

fn potential_keys() -> &'static [&'static str] {
    SECTIONS.iter().find(|(s, _)| *s == "potential").unwrap().1
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[experiment]\nkind = \"profile\"\n\n[potential]\nfamily = \"free\"\n\n[time]\nvalue = 10\n";

    #[test]
    fn minimal_profile() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.kind, ExperimentKind::Profile);
        assert_eq!(c.time, TimeConfig::Single(10.0));
        assert_eq!(c.state, vec![(0, 1.0, 0.0)]);
        assert_eq!(c.analysis.p, vec![2.0]);
        assert_eq!(c.boxing.method, Method::Resolvent);
        assert_eq!(c.output, DEFAULT_OUTPUT);
    }

    #[test]
    fn line_numbers() {
        let text = "[experiment]\nkind = \"beta\"\n[potential]\nfamily = \"sturmian\"\ntheta = 1.5\ncoupling = 1\n[time]\nstart = 10\nstop = 100\ncolour = 3\n";
        let errs = parse_config(text).unwrap_err();
        assert!(errs.iter().any(|e| e.line == 5 && e.key == "potential.theta" && e.message.contains("range")));
        assert!(errs.iter().any(|e| e.line == 10 && e.key == "time.colour" && e.message.contains("unknown key")));
    }

    #[test]
    fn family_specific_keys() {
        let text =
            "[experiment]\nkind = \"profile\"\n[potential]\nfamily = \"fibonacci\"\ntheta = 0.3\n[time]\nvalue = 5\n";
        let errs = parse_config(text).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("does not apply"));
    }

    #[test]
    fn missing_keys_are_all_reported() {
        let errs = parse_config("[experiment]\nkind = \"certificate\"\n[potential]\n").unwrap_err();
        let keys: Vec<_> = errs.iter().map(|e| e.key.as_str()).collect();
        for k in ["potential.family", "time.value", "analysis.intervals"] {
            assert!(keys.contains(&k), "{keys:?}");
        }
    }

    #[test]
    fn syntax_error_has_line() {
        let errs = parse_config("[experiment]\nkind = \"profile\n").unwrap_err();
        assert_eq!(errs[0].line, 2);
    }

    #[test]
    fn json_round_trip() {
        let text = "[experiment]\nkind = \"beta\"\nseed = 4\n[potential]\nfamily = \"dimer\"\ncoupling = 0.5\n\
                    [state]\nsites = [[0, 0.6, 0.0], [1, 0.0, 0.8]]\n[time]\nstart = 10\nstop = 200\ncount = 7\n\
                    [analysis]\np = [1.5, 2]\n[box]\nhalf_width = 300\n";
        let c = parse_config(text).unwrap();
        let json = serde_json::to_string(&serde_json::json!({ "config": c.to_json() })).unwrap();
        assert_eq!(parse_config(&json).unwrap(), c);
    }
}
