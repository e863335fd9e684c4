//! Flat `section.key = value` experiment configuration: one text format
//! shared by every subcommand, strict about unknown keys, and echoable back
//! to an equivalent file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::basis::PodKind;
use crate::models::{BbmParams, KdvParams, NonsepParams, WaveParams};
use crate::reduce::CanonicalVariant;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{path}: missing required key `{key}`")]
    Missing { path: String, key: &'static str },
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

/// Reduction or inference route of a single sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    GRom,
    HRom,
    CH,
    NcH,
    Generic,
    Separable,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::GRom => "g-rom",
            Method::HRom => "h-rom",
            Method::CH => "c-h",
            Method::NcH => "nc-h",
            Method::Generic => "generic",
            Method::Separable => "separable",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "g-rom" => Some(Method::GRom),
            "h-rom" => Some(Method::HRom),
            "c-h" => Some(Method::CH),
            "nc-h" => Some(Method::NcH),
            "generic" => Some(Method::Generic),
            "separable" => Some(Method::Separable),
            _ => None,
        }
    }

    /// True for the routes that fit operators from data rather than
    /// projecting known ones.
    pub fn is_inference(&self) -> bool {
        matches!(self, Method::CH | Method::NcH | Method::Generic | Method::Separable)
    }
}

/// Which inferred operator a convergence study compares to its intrusive
/// reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergeTarget {
    /// Skew structure matrix Lhat against U'LU.
    NoncanonicalL,
    /// Symmetric energy block Ahat against U'AU.
    CanonicalA,
}

impl ConvergeTarget {
    pub fn label(&self) -> &'static str {
        match self {
            ConvergeTarget::NoncanonicalL => "nc-h",
            ConvergeTarget::CanonicalA => "c-h",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalFiles {
    pub mass: PathBuf,
    pub stiffness: PathBuf,
    pub q: PathBuf,
    pub pv: PathBuf,
    pub momentum_form: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBlock {
    Wave(WaveParams),
    Nonsep(NonsepParams),
    KdvV1(KdvParams),
    KdvV2(KdvParams),
    Bbm(BbmParams),
    External(ExternalFiles),
}

impl ModelBlock {
    pub fn name(&self) -> &'static str {
        match self {
            ModelBlock::Wave(_) => "wave",
            ModelBlock::Nonsep(_) => "nonsep",
            ModelBlock::KdvV1(_) => "kdv",
            ModelBlock::KdvV2(_) => "kdv2",
            ModelBlock::Bbm(_) => "bbm",
            ModelBlock::External(_) => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeBlock {
    pub dt: f64,
    pub t_end_train: f64,
    pub t_end_test: f64,
    /// Record every `stride`-th integrator state as a training snapshot.
    pub stride: usize,
    /// Maximum internal substep for explicit steppers; 0 disables.
    pub substep: f64,
    pub newton_tol: f64,
    /// Use model right-hand sides instead of finite differences for X_t.
    pub exact_derivatives: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisBlock {
    pub kind: PodKind,
    pub center: bool,
    pub schedule: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferBlock {
    pub methods: Vec<Method>,
    pub variant: CanonicalVariant,
    pub eta: f64,
    pub one_shot: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParametricBlock {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeBlock {
    pub dts: Vec<f64>,
    /// Extra random initial conditions pooled into the training data.
    pub ics: usize,
    pub target: ConvergeTarget,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoBlock {
    pub out: PathBuf,
    pub emit_wallclock: bool,
    pub write_drift_series: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub time: TimeBlock,
    pub basis: BasisBlock,
    pub infer: InferBlock,
    pub parametric: Option<ParametricBlock>,
    pub converge: ConvergeBlock,
    pub io: IoBlock,
    /// Seeds randomized self-checks and generated initial conditions; never
    /// perturbs deterministic numerics.
    pub seed: u64,
    pub workers: usize,
}

/// Parsed `key = value` lines with line numbers, consumed key by key so
/// leftovers can be reported as typos.
struct RawConfig {
    path: String,
    values: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    fn parse(text: &str, path: &str) -> Result<RawConfig, ConfigError> {
        let mut values = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let Some(eq) = content.find('=') else {
                return Err(ConfigError::Parse {
                    path: path.into(),
                    line,
                    msg: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = content[..eq].trim().to_string();
            let value = content[eq + 1..].trim().to_string();
            if key.is_empty() || !key.contains('.') {
                return Err(ConfigError::Parse {
                    path: path.into(),
                    line,
                    msg: format!("key `{key}` is not of the form section.name"),
                });
            }
            if let Some((_, first)) = values.get(&key) {
                return Err(ConfigError::Parse {
                    path: path.into(),
                    line,
                    msg: format!("key `{key}` already set on line {first}"),
                });
            }
            values.insert(key, (value, line));
        }
        Ok(RawConfig { path: path.into(), values })
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.values.remove(key)
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn parse_err(&self, line: usize, msg: String) -> ConfigError {
        ConfigError::Parse { path: self.path.clone(), line, msg }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse::<f64>()
                .map_err(|_| self.parse_err(line, format!("`{key}` needs a number, got `{v}`"))),
        }
    }

    fn req_f64(&mut self, key: &'static str) -> Result<f64, ConfigError> {
        match self.take(key) {
            None => Err(ConfigError::Missing { path: self.path.clone(), key }),
            Some((v, line)) => v
                .parse::<f64>()
                .map_err(|_| self.parse_err(line, format!("`{key}` needs a number, got `{v}`"))),
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse::<usize>()
                .map_err(|_| self.parse_err(line, format!("`{key}` needs an integer, got `{v}`"))),
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some((v, line)) => match v.as_str() {
                "0" | "false" => Ok(false),
                "1" | "true" => Ok(true),
                _ => Err(self.parse_err(line, format!("`{key}` needs 0/1, got `{v}`"))),
            },
        }
    }

    fn str_or(&mut self, key: &str, default: &str) -> String {
        self.take(key).map(|(v, _)| v).unwrap_or_else(|| default.to_string())
    }

    fn req_path(&mut self, key: &'static str) -> Result<PathBuf, ConfigError> {
        match self.take(key) {
            None => Err(ConfigError::Missing { path: self.path.clone(), key }),
            Some((v, _)) => Ok(PathBuf::from(v)),
        }
    }

    fn list_f64(&mut self, key: &str) -> Result<Vec<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(vec![]),
            Some((v, line)) => v
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| {
                        self.parse_err(line, format!("`{key}` has a bad entry `{}`", tok.trim()))
                    })
                })
                .collect(),
        }
    }

    fn list_usize(&mut self, key: &str) -> Result<Vec<usize>, ConfigError> {
        match self.take(key) {
            None => Ok(vec![]),
            Some((v, line)) => v
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<usize>().map_err(|_| {
                        self.parse_err(line, format!("`{key}` has a bad entry `{}`", tok.trim()))
                    })
                })
                .collect(),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some((key, (_, line))) = self.values.into_iter().next() {
            return Err(ConfigError::Parse {
                path: self.path,
                line,
                msg: format!("unknown key `{key}`"),
            });
        }
        Ok(())
    }
}

fn invalid(path: &str, msg: String) -> ConfigError {
    ConfigError::Invalid { path: path.into(), msg }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let label = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: label.clone(), msg: e.to_string() })?;
        ExperimentConfig::parse(&text, &label)
    }

    pub fn parse(text: &str, path: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut raw = RawConfig::parse(text, path)?;

        let model = {
            let (name, line) = raw
                .take("model.name")
                .ok_or(ConfigError::Missing { path: path.into(), key: "model.name" })?;
            match name.as_str() {
                "wave" => {
                    let d = WaveParams::default();
                    ModelBlock::Wave(WaveParams {
                        c: raw.f64_or("model.c", d.c)?,
                        l: raw.f64_or("model.l", d.l)?,
                        cells: raw.usize_or("model.cells", d.cells)?,
                        alpha: raw.f64_or("model.alpha", d.alpha)?,
                    })
                }
                "nonsep" => {
                    let d = NonsepParams::default();
                    ModelBlock::Nonsep(NonsepParams {
                        alpha: raw.f64_or("model.alpha", d.alpha)?,
                        points: raw.usize_or("model.points", d.points)?,
                        length: raw.f64_or("model.length", d.length)?,
                    })
                }
                "kdv" | "kdv2" => {
                    let d = KdvParams::default();
                    let p = KdvParams {
                        alpha: raw.f64_or("model.alpha", d.alpha)?,
                        rho: raw.f64_or("model.rho", d.rho)?,
                        nu: raw.f64_or("model.nu", d.nu)?,
                        l: raw.f64_or("model.l", d.l)?,
                        points: raw.usize_or("model.points", d.points)?,
                    };
                    if name == "kdv" { ModelBlock::KdvV1(p) } else { ModelBlock::KdvV2(p) }
                }
                "bbm" => {
                    let d = BbmParams::default();
                    ModelBlock::Bbm(BbmParams {
                        alpha: raw.f64_or("model.alpha", d.alpha)?,
                        beta: raw.f64_or("model.beta", d.beta)?,
                        gamma: raw.f64_or("model.gamma", d.gamma)?,
                        l: raw.f64_or("model.l", d.l)?,
                        points: raw.usize_or("model.points", d.points)?,
                    })
                }
                "external" => ModelBlock::External(ExternalFiles {
                    mass: raw.req_path("model.mass_file")?,
                    stiffness: raw.req_path("model.stiffness_file")?,
                    q: raw.req_path("model.q_file")?,
                    pv: raw.req_path("model.pv_file")?,
                    momentum_form: raw.bool_or("model.momentum_form", false)?,
                }),
                other => {
                    return Err(raw.parse_err(line, format!("unknown model name `{other}`")))
                }
            }
        };

        let t_end_train = raw.req_f64("time.t_end_train")?;
        let time = TimeBlock {
            dt: raw.req_f64("time.dt")?,
            t_end_train,
            t_end_test: raw.f64_or("time.t_end_test", t_end_train)?,
            stride: raw.usize_or("time.stride", 1)?,
            substep: raw.f64_or("time.substep", 0.0)?,
            newton_tol: raw.f64_or("time.newton_tol", 1e-10)?,
            exact_derivatives: raw.bool_or("time.exact_derivatives", false)?,
        };
        if !(time.dt > 0.0) {
            return Err(invalid(path, format!("time.dt must be positive, got {}", time.dt)));
        }
        if time.t_end_test < time.t_end_train {
            return Err(invalid(
                path,
                format!(
                    "time.t_end_test = {} is shorter than time.t_end_train = {}",
                    time.t_end_test, time.t_end_train
                ),
            ));
        }
        if time.stride == 0 {
            return Err(invalid(path, "time.stride must be at least 1".into()));
        }
        if time.substep < 0.0 || !(time.newton_tol > 0.0) {
            return Err(invalid(path, "time.substep and time.newton_tol must be positive".into()));
        }

        let basis = {
            let kind = match raw.take("basis.kind") {
                None => PodKind::Ordinary,
                Some((v, line)) => PodKind::parse(&v)
                    .ok_or_else(|| raw.parse_err(line, format!("unknown basis kind `{v}`")))?,
            };
            BasisBlock {
                kind,
                center: raw.bool_or("basis.center", true)?,
                schedule: raw.list_usize("basis.schedule")?,
            }
        };
        if basis.schedule.iter().any(|&n| n == 0) {
            return Err(invalid(path, "basis.schedule entries must be at least 1".into()));
        }

        let infer = {
            let methods = match raw.take("infer.method") {
                None => vec![Method::HRom],
                Some((v, line)) => v
                    .split(',')
                    .map(|tok| {
                        let tok = tok.trim();
                        Method::parse(tok)
                            .ok_or_else(|| raw.parse_err(line, format!("unknown method `{tok}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            };
            let variant = match raw.take("infer.variant") {
                None => CanonicalVariant::Exact,
                Some((v, line)) => match v.as_str() {
                    "exact" => CanonicalVariant::Exact,
                    "approx" => CanonicalVariant::JtjApproxIdentity,
                    _ => return Err(raw.parse_err(line, format!("unknown variant `{v}`"))),
                },
            };
            InferBlock {
                methods,
                variant,
                eta: raw.f64_or("infer.eta", 0.0)?,
                one_shot: raw.bool_or("infer.one_shot", false)?,
            }
        };
        if infer.methods.is_empty() {
            return Err(invalid(path, "infer.method must name at least one method".into()));
        }
        if infer.eta < 0.0 {
            return Err(invalid(path, format!("infer.eta must be nonnegative, got {}", infer.eta)));
        }

        let parametric = if raw.has("parametric.train") || raw.has("parametric.test") {
            let block = ParametricBlock {
                train: raw.list_f64("parametric.train")?,
                test: raw.list_f64("parametric.test")?,
            };
            if block.train.is_empty() || block.test.is_empty() {
                return Err(invalid(
                    path,
                    "parametric.train and parametric.test must both be nonempty".into(),
                ));
            }
            for t in &block.test {
                if block.train.iter().any(|s| s == t) {
                    return Err(invalid(
                        path,
                        format!("test parameter {t} also appears in parametric.train"),
                    ));
                }
            }
            Some(block)
        } else {
            None
        };

        let converge = {
            let target = match raw.take("converge.target") {
                None => ConvergeTarget::NoncanonicalL,
                Some((v, line)) => match v.as_str() {
                    "nc-h" => ConvergeTarget::NoncanonicalL,
                    "c-h" => ConvergeTarget::CanonicalA,
                    _ => {
                        return Err(
                            raw.parse_err(line, format!("unknown convergence target `{v}`"))
                        )
                    }
                },
            };
            ConvergeBlock {
                dts: raw.list_f64("converge.dts")?,
                ics: raw.usize_or("converge.ics", 2)?,
                target,
                eta: raw.f64_or("converge.eta", infer.eta)?,
            }
        };
        if converge.dts.iter().any(|&d| !(d > 0.0)) {
            return Err(invalid(path, "converge.dts entries must be positive".into()));
        }

        let io = IoBlock {
            out: PathBuf::from(raw.str_or("io.out", "out")),
            emit_wallclock: raw.bool_or("io.emit_wallclock", false)?,
            write_drift_series: raw.bool_or("io.write_drift_series", false)?,
        };

        let seed = {
            let v = raw.f64_or("run.seed", 0.0)?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(invalid(path, format!("run.seed must be a nonnegative integer, got {v}")));
            }
            v as u64
        };
        let workers = raw.usize_or("run.workers", 1)?;
        if workers == 0 {
            return Err(invalid(path, "run.workers must be at least 1".into()));
        }

        raw.finish()?;
        Ok(ExperimentConfig { model, time, basis, infer, parametric, converge, io, seed, workers })
    }

    /// Render the effective configuration back to config syntax; parsing the
    /// result reproduces this value exactly.
    pub fn render(&self) -> String {
        let mut s = String::new();
        match &self.model {
            ModelBlock::Wave(p) => {
                writeln!(s, "model.name = wave").unwrap();
                writeln!(s, "model.c = {}", p.c).unwrap();
                writeln!(s, "model.l = {}", p.l).unwrap();
                writeln!(s, "model.cells = {}", p.cells).unwrap();
                writeln!(s, "model.alpha = {}", p.alpha).unwrap();
            }
            ModelBlock::Nonsep(p) => {
                writeln!(s, "model.name = nonsep").unwrap();
                writeln!(s, "model.alpha = {}", p.alpha).unwrap();
                writeln!(s, "model.points = {}", p.points).unwrap();
                writeln!(s, "model.length = {}", p.length).unwrap();
            }
            ModelBlock::KdvV1(p) | ModelBlock::KdvV2(p) => {
                writeln!(s, "model.name = {}", self.model.name()).unwrap();
                writeln!(s, "model.alpha = {}", p.alpha).unwrap();
                writeln!(s, "model.rho = {}", p.rho).unwrap();
                writeln!(s, "model.nu = {}", p.nu).unwrap();
                writeln!(s, "model.l = {}", p.l).unwrap();
                writeln!(s, "model.points = {}", p.points).unwrap();
            }
            ModelBlock::Bbm(p) => {
                writeln!(s, "model.name = bbm").unwrap();
                writeln!(s, "model.alpha = {}", p.alpha).unwrap();
                writeln!(s, "model.beta = {}", p.beta).unwrap();
                writeln!(s, "model.gamma = {}", p.gamma).unwrap();
                writeln!(s, "model.l = {}", p.l).unwrap();
                writeln!(s, "model.points = {}", p.points).unwrap();
            }
            ModelBlock::External(f) => {
                writeln!(s, "model.name = external").unwrap();
                writeln!(s, "model.mass_file = {}", f.mass.display()).unwrap();
                writeln!(s, "model.stiffness_file = {}", f.stiffness.display()).unwrap();
                writeln!(s, "model.q_file = {}", f.q.display()).unwrap();
                writeln!(s, "model.pv_file = {}", f.pv.display()).unwrap();
                writeln!(s, "model.momentum_form = {}", self.flag(f.momentum_form)).unwrap();
            }
        }
        writeln!(s, "time.dt = {}", self.time.dt).unwrap();
        writeln!(s, "time.t_end_train = {}", self.time.t_end_train).unwrap();
        writeln!(s, "time.t_end_test = {}", self.time.t_end_test).unwrap();
        writeln!(s, "time.stride = {}", self.time.stride).unwrap();
        writeln!(s, "time.substep = {}", self.time.substep).unwrap();
        writeln!(s, "time.newton_tol = {}", self.time.newton_tol).unwrap();
        writeln!(s, "time.exact_derivatives = {}", self.flag(self.time.exact_derivatives))
            .unwrap();
        writeln!(s, "basis.kind = {}", self.basis.kind.label()).unwrap();
        writeln!(s, "basis.center = {}", self.flag(self.basis.center)).unwrap();
        if !self.basis.schedule.is_empty() {
            writeln!(s, "basis.schedule = {}", join(&self.basis.schedule)).unwrap();
        }
        let methods: Vec<&str> = self.infer.methods.iter().map(|m| m.label()).collect();
        writeln!(s, "infer.method = {}", methods.join(",")).unwrap();
        let variant = match self.infer.variant {
            CanonicalVariant::Exact => "exact",
            CanonicalVariant::JtjApproxIdentity => "approx",
        };
        writeln!(s, "infer.variant = {variant}").unwrap();
        writeln!(s, "infer.eta = {}", self.infer.eta).unwrap();
        writeln!(s, "infer.one_shot = {}", self.flag(self.infer.one_shot)).unwrap();
        if let Some(p) = &self.parametric {
            writeln!(s, "parametric.train = {}", join(&p.train)).unwrap();
            writeln!(s, "parametric.test = {}", join(&p.test)).unwrap();
        }
        if !self.converge.dts.is_empty() {
            writeln!(s, "converge.dts = {}", join(&self.converge.dts)).unwrap();
        }
        writeln!(s, "converge.ics = {}", self.converge.ics).unwrap();
        writeln!(s, "converge.target = {}", self.converge.target.label()).unwrap();
        writeln!(s, "converge.eta = {}", self.converge.eta).unwrap();
        writeln!(s, "io.out = {}", self.io.out.display()).unwrap();
        writeln!(s, "io.emit_wallclock = {}", self.flag(self.io.emit_wallclock)).unwrap();
        writeln!(s, "io.write_drift_series = {}", self.flag(self.io.write_drift_series)).unwrap();
        writeln!(s, "run.seed = {}", self.seed).unwrap();
        writeln!(s, "run.workers = {}", self.workers).unwrap();
        s
    }

    fn flag(&self, b: bool) -> &'static str {
        if b { "1" } else { "0" }
    }

    /// Integrator steps covering [0, t_end_train].
    pub fn train_steps(&self) -> usize {
        (self.time.t_end_train / self.time.dt).round() as usize
    }

    /// Integrator steps covering [0, t_end_test].
    pub fn test_steps(&self) -> usize {
        (self.time.t_end_test / self.time.dt).round() as usize
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}
