//! Experiment configuration: JSON in, validated [`ExperimentConfig`] out.
//!
//! Parsing walks the JSON tree by hand so that every violation is collected (not just the first)
//! and unknown keys are rejected at any depth. Every field that was filled from a default is
//! recorded in [`ExperimentConfig::defaulted`] so the metadata can echo it.

use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};

use fracobs::capacity::CompactSet1D;
use fracobs::fractional::PenaltyFunction;
use fracobs::kernels::BUILTIN_KERNELS;
use fracobs::mesh::MAX_NODES;

use crate::expr::DataExpr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Solve2,
    Membranes,
    Penalize,
    SweepS,
    KernelKa,
    Capacity,
    Verify,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Self::Solve,
        Self::Solve2,
        Self::Membranes,
        Self::Penalize,
        Self::SweepS,
        Self::KernelKa,
        Self::Capacity,
        Self::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Solve2 => "solve2",
            Self::Membranes => "membranes",
            Self::Penalize => "penalize",
            Self::SweepS => "sweep-s",
            Self::KernelKa => "kernel-ka",
            Self::Capacity => "capacity",
            Self::Verify => "verify",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scalar data: an expression in `x` or interior nodal values.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Expr(DataExpr),
    Nodal(Vec<f64>),
}

impl Serialize for Field {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Expr(e) => s.serialize_str(e.source()),
            Self::Nodal(v) => v.serialize(s),
        }
    }
}

impl Field {
    fn expr(src: &str) -> Self {
        Self::Expr(DataExpr::parse(src).expect("built-in default expression"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSpec {
    pub name: String,
    /// Multiplier for the `scaled` kernel.
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSpec {
    pub f: Field,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_vec: Option<Field>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstacleSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<Field>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<Field>,
    /// Membrane loads `f^1, …, f^N`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub loads: Vec<Field>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Psor,
    Penalty,
    /// Penalization from below (one obstacle only).
    PenaltyLower,
}

impl Method {
    const NAMES: [(&'static str, Method); 3] =
        [("psor", Method::Psor), ("penalty", Method::Penalty), ("penalty_lower", Method::PenaltyLower)];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSpec {
    pub method: Method,
    pub omega: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub epsilon: Vec<f64>,
    pub theta: String,
    pub lambda: f64,
}

impl SolverSpec {
    pub fn theta(&self) -> PenaltyFunction {
        PenaltyFunction::from_name(&self.theta).expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub s_list: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacitySpec {
    /// Each set is a list of disjoint closed intervals.
    pub sets: Vec<Vec<[f64; 2]>>,
    pub kernels: Vec<String>,
}

impl CapacitySpec {
    pub fn compact_sets(&self) -> Vec<CompactSet1D> {
        self.sets
            .iter()
            .map(|set| CompactSet1D::new(set.iter().map(|[a, b]| (*a, *b)).collect()).expect("validated"))
            .collect()
    }
}

/// Coefficient `A(z)` for the `k_A` kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum KaField {
    Counterexample,
    Constant(f64),
    Expr(DataExpr),
}

impl Serialize for KaField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Counterexample => s.serialize_str("counterexample"),
            Self::Constant(c) => s.serialize_f64(*c),
            Self::Expr(e) => s.serialize_str(e.source()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KaSpec {
    pub field: KaField,
    pub pairs: Vec<[f64; 2]>,
    /// Points where `κ(x, y, z)` is tabulated for the first pair.
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySpec {
    pub seed: u64,
    pub instances: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub domain: [f64; 2],
    pub s: f64,
    pub n: usize,
    pub kernel: KernelSpec,
    pub data: DataSpec,
    pub obstacles: ObstacleSpec,
    pub solver: SolverSpec,
    pub sweep: SweepSpec,
    pub capacity: CapacitySpec,
    pub ka: KaSpec,
    pub verify: VerifySpec,
    /// Also write the assembled matrix, mass and load as CSV.
    pub dump_matrix: bool,
    /// Dotted paths of fields filled from defaults.
    #[serde(skip)]
    pub defaulted: Vec<String>,
}

pub const DEFAULT_OMEGA: f64 = 1.5;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200_000;

/// Why a configuration was rejected.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl ConfigError {
    pub fn violations(&self) -> &[String] {
        match self {
            Self::Invalid(v) => v,
            Self::Syntax { .. } => &[],
        }
    }
}

/// Parses `text` for the CLI command `command`. A `command` key in the document is optional but
/// must agree with the CLI.
pub fn parse_config(text: &str, command: Command) -> Result<ExperimentConfig, ConfigError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut p = Parser::default();
    let cfg = p.root(&value, command);
    if p.errors.is_empty() {
        Ok(cfg.expect("no errors implies a config"))
    } else {
        Err(ConfigError::Invalid(p.errors))
    }
}

/// Canonical JSON of a config (every field explicit), accepted back by [`parse_config`].
pub fn emit_config(cfg: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}

#[derive(Default)]
struct Parser {
    errors: Vec<String>,
    defaulted: Vec<String>,
}

/// One JSON object being consumed; leftover keys are reported as unknown.
struct Obj<'a> {
    path: String,
    map: Option<&'a Map<String, Value>>,
    seen: Vec<&'static str>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Parser {
    fn err(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn object<'a>(&mut self, path: &str, v: Option<&'a Value>) -> Obj<'a> {
        let map = match v {
            None => None,
            Some(Value::Object(m)) => Some(m),
            Some(_) => {
                self.err(format!("{path}: expected an object"));
                None
            }
        };
        if v.is_none() && !path.is_empty() {
            self.defaulted.push(path.to_string());
        }
        Obj { path: path.to_string(), map, seen: Vec::new() }
    }

    fn finish(&mut self, obj: Obj<'_>) {
        if let Some(m) = obj.map {
            for k in m.keys() {
                if !obj.seen.contains(&k.as_str()) {
                    let allowed = obj.seen.join(", ");
                    self.err(format!("{}: unknown key (allowed: {allowed})", join(&obj.path, k)));
                }
            }
        }
    }

    /// Looks up `key`; records a default when the object itself was present but the key is not.
    fn get<'a>(&mut self, obj: &mut Obj<'a>, key: &'static str, defaults: bool) -> Option<&'a Value> {
        obj.seen.push(key);
        let v = obj.map.and_then(|m| m.get(key));
        if v.is_none() && defaults && obj.map.is_some() {
            self.defaulted.push(join(&obj.path, key));
        }
        v
    }

    fn f64_or(&mut self, obj: &mut Obj<'_>, key: &'static str, default: f64) -> f64 {
        let path = join(&obj.path, key);
        match self.get(obj, key, true) {
            None => default,
            Some(v) => self.number(&path, v).unwrap_or(default),
        }
    }

    fn number(&mut self, path: &str, v: &Value) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.err(format!("{path}: expected a finite number"));
                None
            }
        }
    }

    fn usize_or(&mut self, obj: &mut Obj<'_>, key: &'static str, default: usize) -> usize {
        let path = join(&obj.path, key);
        match self.get(obj, key, true) {
            None => default,
            Some(v) => match v.as_u64() {
                Some(x) => x as usize,
                None => {
                    self.err(format!("{path}: expected a nonnegative integer"));
                    default
                }
            },
        }
    }

    fn string_or(&mut self, obj: &mut Obj<'_>, key: &'static str, default: &str) -> String {
        let path = join(&obj.path, key);
        match self.get(obj, key, true) {
            None => default.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                self.err(format!("{path}: expected a string"));
                default.to_string()
            }
        }
    }

    fn numbers(&mut self, path: &str, v: &Value) -> Option<Vec<f64>> {
        let Value::Array(items) = v else {
            self.err(format!("{path}: expected an array of numbers"));
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            match self.number(&format!("{path}[{i}]"), item) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn numbers_or(&mut self, obj: &mut Obj<'_>, key: &'static str, default: &[f64]) -> Vec<f64> {
        let path = join(&obj.path, key);
        match self.get(obj, key, true) {
            None => default.to_vec(),
            Some(v) => self.numbers(&path, v).unwrap_or_else(|| default.to_vec()),
        }
    }

    fn pair(&mut self, path: &str, v: &Value) -> Option<[f64; 2]> {
        match self.numbers(path, v)?.as_slice() {
            [a, b] => Some([*a, *b]),
            _ => {
                self.err(format!("{path}: expected two numbers"));
                None
            }
        }
    }

    fn pairs(&mut self, path: &str, v: &Value) -> Option<Vec<[f64; 2]>> {
        let Value::Array(items) = v else {
            self.err(format!("{path}: expected an array of [a, b] pairs"));
            return None;
        };
        let parsed: Vec<_> = items.iter().enumerate().map(|(i, it)| self.pair(&format!("{path}[{i}]"), it)).collect();
        parsed.into_iter().collect()
    }

    fn field(&mut self, path: &str, v: &Value, n: usize) -> Option<Field> {
        match v {
            Value::String(src) => match DataExpr::parse(src) {
                Ok(e) => Some(Field::Expr(e)),
                Err(msg) => {
                    self.err(format!("{path}: {msg}"));
                    None
                }
            },
            Value::Number(_) => self.number(path, v).map(|c| Field::Expr(DataExpr::parse(&format!("{c:?}")).expect("literal"))),
            Value::Array(_) => {
                let vals = self.numbers(path, v)?;
                if vals.len() != n {
                    self.err(format!("{path}: nodal array has {} values, expected n = {n}", vals.len()));
                    return None;
                }
                Some(Field::Nodal(vals))
            }
            _ => {
                self.err(format!("{path}: expected an expression string or a nodal array"));
                None
            }
        }
    }

    fn opt_field(&mut self, obj: &mut Obj<'_>, key: &'static str, n: usize) -> Option<Field> {
        let path = join(&obj.path, key);
        let v = self.get(obj, key, false)?;
        self.field(&path, v, n)
    }

    fn root(&mut self, v: &Value, command: Command) -> Option<ExperimentConfig> {
        let mut root = self.object("", Some(v));
        root.map?;

        if let Some(c) = self.get(&mut root, "command", false) {
            match c.as_str().map(|s| (s, Command::from_name(s))) {
                Some((_, Some(c))) if c == command => {}
                Some((s, Some(_))) => self.err(format!("command: config is for {s:?} but the CLI asked for {command:?}", command = command.name())),
                _ => {
                    let names: Vec<_> = Command::ALL.iter().map(|c| c.name()).collect();
                    self.err(format!("command: expected one of {}", names.join(", ")));
                }
            }
        }

        let domain = match self.get(&mut root, "domain", true) {
            None => [-1.0, 1.0],
            Some(v) => self.pair("domain", v).unwrap_or([-1.0, 1.0]),
        };
        if domain[0] >= domain[1] {
            self.err(format!("domain: lower end {} must be below upper end {}", domain[0], domain[1]));
        }
        let s = self.f64_or(&mut root, "s", 0.5);
        if !(s > 0.0 && s < 1.0) {
            self.err("s must lie in (0,1)".into());
        }
        let n = self.usize_or(&mut root, "n", 64);
        if !(1..=MAX_NODES).contains(&n) {
            self.err(format!("n must lie in [1, {MAX_NODES}]"));
        }

        let kernel = self.kernel(&mut root);
        let data = self.data(&mut root, n);
        let obstacles = self.obstacles(&mut root, n, command);
        let solver = self.solver(&mut root, command);
        let sweep = self.sweep(&mut root);
        let capacity = self.capacity(&mut root, domain, command);
        let ka = self.ka(&mut root);
        let verify = self.verify(&mut root);
        let dump_matrix = match self.get(&mut root, "dump_matrix", true) {
            None => false,
            Some(Value::Bool(b)) => *b,
            Some(_) => {
                self.err("dump_matrix: expected a boolean".into());
                false
            }
        };
        self.finish(root);

        Some(ExperimentConfig {
            command,
            domain,
            s,
            n,
            kernel,
            data,
            obstacles,
            solver,
            sweep,
            capacity,
            ka,
            verify,
            dump_matrix,
            defaulted: std::mem::take(&mut self.defaulted),
        })
    }

    fn check_kernel_name(&mut self, path: &str, name: &str) {
        if !BUILTIN_KERNELS.contains(&name) {
            self.err(format!("{path}: unknown kernel {name:?}; available kernels: {}", BUILTIN_KERNELS.join(", ")));
        }
    }

    fn kernel(&mut self, root: &mut Obj<'_>) -> KernelSpec {
        let v = self.get(root, "kernel", false);
        let mut o = self.object("kernel", v);
        let name = self.string_or(&mut o, "name", "fractional");
        self.check_kernel_name("kernel.name", &name);
        let factor = self.f64_or(&mut o, "factor", 1.0);
        if factor <= 0.0 {
            self.err("kernel.factor must be positive".into());
        }
        self.finish(o);
        KernelSpec { name, factor }
    }

    fn data(&mut self, root: &mut Obj<'_>, n: usize) -> DataSpec {
        let v = self.get(root, "data", false);
        let mut o = self.object("data", v);
        let f = match self.get(&mut o, "f", true) {
            None => Field::expr("0"),
            Some(v) => self.field("data.f", v, n).unwrap_or_else(|| Field::expr("0")),
        };
        let f_vec = self.opt_field(&mut o, "f_vec", n);
        self.finish(o);
        DataSpec { f, f_vec }
    }

    fn obstacles(&mut self, root: &mut Obj<'_>, n: usize, command: Command) -> ObstacleSpec {
        let v = self.get(root, "obstacles", false);
        let mut o = self.object("obstacles", v);
        let psi = self.opt_field(&mut o, "psi", n);
        let phi = self.opt_field(&mut o, "phi", n);
        let loads = match self.get(&mut o, "loads", false) {
            None => Vec::new(),
            Some(Value::Array(items)) => {
                let parsed: Vec<_> = items.iter().enumerate().map(|(i, it)| self.field(&format!("obstacles.loads[{i}]"), it, n)).collect();
                parsed.into_iter().flatten().collect()
            }
            Some(_) => {
                self.err("obstacles.loads: expected an array of fields".into());
                Vec::new()
            }
        };
        self.finish(o);
        let needs_psi = matches!(command, Command::Solve | Command::Solve2 | Command::Penalize | Command::SweepS);
        if needs_psi && psi.is_none() {
            self.err(format!("obstacles.psi is required for {command}"));
        }
        if command == Command::Solve2 && phi.is_none() {
            self.err("obstacles.phi is required for solve2".into());
        }
        if command == Command::Membranes && loads.len() < 2 {
            self.err("obstacles.loads needs at least two membrane loads".into());
        }
        ObstacleSpec { psi, phi, loads }
    }

    fn solver(&mut self, root: &mut Obj<'_>, command: Command) -> SolverSpec {
        let v = self.get(root, "solver", false);
        let mut o = self.object("solver", v);
        let method_name = self.string_or(&mut o, "method", "psor");
        let method = match Method::NAMES.iter().find(|(k, _)| *k == method_name) {
            Some((_, m)) => *m,
            None => {
                self.err(format!("solver.method: unknown method {method_name:?}; available: psor, penalty, penalty_lower"));
                Method::Psor
            }
        };
        if method == Method::PenaltyLower && command != Command::Solve {
            self.err("solver.method: penalty_lower applies to solve only".into());
        }
        let omega = self.f64_or(&mut o, "omega", DEFAULT_OMEGA);
        if !(omega > 0.0 && omega < 2.0) {
            self.err("solver.omega must lie in (0,2)".into());
        }
        let tol = self.f64_or(&mut o, "tol", DEFAULT_TOL);
        if tol <= 0.0 {
            self.err("solver.tol must be positive".into());
        }
        let max_iter = self.usize_or(&mut o, "max_iter", DEFAULT_MAX_ITER);
        if max_iter == 0 {
            self.err("solver.max_iter must be at least 1".into());
        }
        let epsilon = self.numbers_or(&mut o, "epsilon", &[0.1, 0.05, 0.025]);
        if epsilon.is_empty() || epsilon.iter().any(|e| *e <= 0.0) {
            self.err("solver.epsilon must be a nonempty list of positive numbers".into());
        }
        let theta = self.string_or(&mut o, "theta", "rational");
        if PenaltyFunction::from_name(&theta).is_none() {
            let names: Vec<_> = PenaltyFunction::ALL.iter().map(|p| p.name()).collect();
            self.err(format!("solver.theta: unknown penalty {theta:?}; available: {}", names.join(", ")));
        }
        let lambda = self.f64_or(&mut o, "lambda", 0.0);
        if lambda < 0.0 {
            self.err("solver.lambda must be nonnegative".into());
        }
        self.finish(o);
        SolverSpec { method, omega, tol, max_iter, epsilon, theta, lambda }
    }

    fn sweep(&mut self, root: &mut Obj<'_>) -> SweepSpec {
        let v = self.get(root, "sweep", false);
        let mut o = self.object("sweep", v);
        let s_list = self.numbers_or(&mut o, "s_list", &[0.6, 0.7, 0.8, 0.9, 0.95, 0.99]);
        if s_list.is_empty() || s_list.iter().any(|s| !(*s > 0.0 && *s < 1.0)) || s_list.windows(2).any(|w| w[0] >= w[1]) {
            self.err("sweep.s_list must be a nonempty, strictly increasing list in (0,1)".into());
        }
        self.finish(o);
        SweepSpec { s_list }
    }

    /// Containment in the domain is only enforced when the capacity command will use the sets.
    fn capacity(&mut self, root: &mut Obj<'_>, domain: [f64; 2], command: Command) -> CapacitySpec {
        let v = self.get(root, "capacity", false);
        let mut o = self.object("capacity", v);
        let default_sets = vec![vec![[-0.25, 0.25]], vec![[-0.5, 0.5]], vec![[-0.6, -0.3], [0.2, 0.5]]];
        let given = self.get(&mut o, "sets", true);
        let defaulted = given.is_none();
        let sets = match given {
            None => default_sets.clone(),
            Some(Value::Array(items)) => {
                let parsed: Vec<_> = items.iter().enumerate().map(|(i, it)| self.pairs(&format!("capacity.sets[{i}]"), it)).collect();
                parsed.into_iter().collect::<Option<Vec<_>>>().unwrap_or(default_sets)
            }
            Some(_) => {
                self.err("capacity.sets: expected an array of interval lists".into());
                default_sets
            }
        };
        for (i, set) in sets.iter().enumerate() {
            match CompactSet1D::new(set.iter().map(|[a, b]| (*a, *b)).collect()) {
                Err(e) => self.err(format!("capacity.sets[{i}]: {e}")),
                Ok(k) => {
                    let (lo, hi) = (k.intervals()[0].0, k.intervals()[k.intervals().len() - 1].1);
                    if command == Command::Capacity && (lo <= domain[0] || hi >= domain[1]) {
                        let hint = if defaulted { " (default sets; give capacity.sets for this domain)" } else { "" };
                        self.err(format!("capacity.sets[{i}]: set must lie strictly inside the domain{hint}"));
                    }
                }
            }
        }
        let kernels = match self.get(&mut o, "kernels", true) {
            None => vec!["fractional".to_string(), "sin_cos".to_string(), "sin_diff".to_string()],
            Some(Value::Array(items)) if items.iter().all(Value::is_string) => {
                items.iter().map(|v| v.as_str().unwrap_or_default().to_string()).collect()
            }
            Some(_) => {
                self.err("capacity.kernels: expected an array of kernel names".into());
                Vec::new()
            }
        };
        for (i, k) in kernels.iter().enumerate() {
            self.check_kernel_name(&format!("capacity.kernels[{i}]"), k);
        }
        self.finish(o);
        CapacitySpec { sets, kernels }
    }

    fn ka(&mut self, root: &mut Obj<'_>) -> KaSpec {
        let v = self.get(root, "ka", false);
        let mut o = self.object("ka", v);
        let field = match self.get(&mut o, "field", true) {
            None => KaField::Counterexample,
            Some(Value::String(s)) if s == "counterexample" => KaField::Counterexample,
            Some(Value::String(s)) => match DataExpr::parse(s) {
                Ok(e) => KaField::Expr(e),
                Err(msg) => {
                    self.err(format!("ka.field: {msg}"));
                    KaField::Counterexample
                }
            },
            Some(v) => match self.number("ka.field", v) {
                Some(c) => KaField::Constant(c),
                None => KaField::Counterexample,
            },
        };
        let pairs = match self.get(&mut o, "pairs", true) {
            None => vec![[-0.5, 0.5]],
            Some(v) => self.pairs("ka.pairs", v).unwrap_or_default(),
        };
        if pairs.iter().any(|[x, y]| x == y) {
            self.err("ka.pairs: x and y must differ".into());
        }
        let z = self.numbers_or(&mut o, "z", &[0.9, 1.5]);
        if let Some([x, y]) = pairs.first() {
            if z.iter().any(|z| z == x || z == y) {
                self.err("ka.z: points must differ from the first pair".into());
            }
        }
        self.finish(o);
        KaSpec { field, pairs, z }
    }

    fn verify(&mut self, root: &mut Obj<'_>) -> VerifySpec {
        let v = self.get(root, "verify", false);
        let mut o = self.object("verify", v);
        let seed = self.usize_or(&mut o, "seed", 1) as u64;
        let instances = self.usize_or(&mut o, "instances", 8);
        let n = self.usize_or(&mut o, "n", 32);
        if instances == 0 {
            self.err("verify.instances must be at least 1".into());
        }
        if !(4..=512).contains(&n) {
            self.err("verify.n must lie in [4, 512]".into());
        }
        self.finish(o);
        VerifySpec { seed, instances, n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_solve_gets_documented_defaults() {
        let cfg = parse_config(r#"{"obstacles": {"psi": "0.2 - x^2"}}"#, Command::Solve).unwrap();
        assert_eq!(cfg.solver.omega, 1.5);
        assert_eq!(cfg.solver.tol, 1e-10);
        assert_eq!(cfg.n, 64);
        assert_eq!(cfg.domain, [-1.0, 1.0]);
        assert!(cfg.defaulted.contains(&"solver".to_string()));
        assert!(cfg.defaulted.contains(&"s".to_string()));
    }

    #[test]
    fn order_out_of_range() {
        let err = parse_config(r#"{"s": 1.2, "obstacles": {"psi": "0"}}"#, Command::Solve).unwrap_err();
        assert_eq!(err.violations(), ["s must lie in (0,1)"]);
    }

    #[test]
    fn unknown_kernel_lists_available() {
        let err = parse_config(r#"{"kernel": {"name": "gauss"}}"#, Command::Verify).unwrap_err();
        let msg = &err.violations()[0];
        for k in BUILTIN_KERNELS {
            assert!(msg.contains(k), "{msg}");
        }
    }

    #[test]
    fn all_violations_reported() {
        let text = r#"{"s": 0, "n": 0, "solver": {"omega": 2.5, "bogus": 1}, "extra": true}"#;
        let err = parse_config(text, Command::Solve).unwrap_err();
        let v = err.violations();
        assert!(v.len() >= 5, "{v:?}");
        assert!(v.iter().any(|m| m.starts_with("solver.bogus: unknown key")));
        assert!(v.iter().any(|m| m.starts_with("extra: unknown key")));
        assert!(v.iter().any(|m| m.contains("obstacles.psi is required")));
    }

    #[test]
    fn syntax_error_has_location() {
        let err = parse_config("{\n  \"s\": 0.5,\n  oops\n}", Command::Verify).unwrap_err();
        match err {
            ConfigError::Syntax { line, column, .. } => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn capacity_sets_only_checked_for_capacity() {
        let text = r#"{"domain": [0, 2], "obstacles": {"psi": "0"}}"#;
        assert!(parse_config(text, Command::Solve).is_ok());
        let err = parse_config(text, Command::Capacity).unwrap_err();
        assert!(err.violations().iter().all(|v| v.contains("default sets")), "{err:?}");
    }

    #[test]
    fn command_mismatch() {
        let err = parse_config(r#"{"command": "solve"}"#, Command::Verify).unwrap_err();
        assert!(err.violations()[0].starts_with("command:"));
    }

    #[test]
    fn nodal_length_checked() {
        let err = parse_config(r#"{"n": 3, "obstacles": {"psi": [0, 1]}}"#, Command::Solve).unwrap_err();
        assert!(err.violations()[0].contains("expected n = 3"));
    }
}
