use std::path::{Path, PathBuf};

use serde::Deserialize;

use compoda_core::algorithms::{Algorithm, Execution};

/// A schema or validation problem in the experiment config; maps to exit 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub debug: bool,
    /// Cost of one uncompressed vector; defaults to `1 / delta`.
    pub m: Option<f64>,
    pub problem: ProblemSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub clients: ClientsSection,
    pub compressor: CompressorSection,
    #[serde(default)]
    pub composite: CompositeSection,
    pub mechanism: Option<MechanismSection>,
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub smoothness: SmoothnessSection,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ProblemType {
    Softmax,
    Logistic,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Rows are shuffled and cut into `n` groups.
    #[default]
    Split,
    /// Every client holds all rows.
    Replicated,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(rename = "type")]
    pub kind: ProblemType,
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub mu: Option<f64>,
    /// Data-generation seed; defaults to the run seed.
    pub seed: Option<u64>,
    /// Softmax instance file written by `gen softmax`.
    pub instance_path: Option<PathBuf>,
    pub layout: Option<Layout>,
    pub csv_path: Option<PathBuf>,
    pub has_header: Option<bool>,
    pub normalize: Option<bool>,
    /// Generated logistic data when no CSV is given.
    pub samples: Option<usize>,
    pub classes: Option<u32>,
    pub positive_class: Option<u32>,
    /// `x_0` is drawn uniformly on the sphere of this radius.
    pub x0_radius: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientsSection {
    #[serde(default = "one")]
    pub n: usize,
    #[serde(default = "half")]
    pub frac_random: f64,
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

impl Default for ClientsSection {
    fn default() -> Self {
        ClientsSection {
            n: 1,
            frac_random: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKind {
    TopK,
    Identity,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressorSection {
    pub kind: CompressorKind,
    pub k_frac: Option<f64>,
    pub k: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CompositeKind {
    #[default]
    Zero,
    L1,
    Ball,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeSection {
    #[serde(default)]
    pub kind: CompositeKind,
    pub lambda: Option<f64>,
    pub radius: Option<f64>,
    pub center: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Econtrol,
    Ef,
    Ef21,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSection {
    pub kind: MechanismKind,
    pub eta: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    EcontrolDa,
    ProxEf,
    ProxEf21,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionKind {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub kind: Option<AlgorithmKind>,
    #[serde(rename = "T", alias = "rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub stepsize: StepsizeSection,
    pub a_t: Option<Vec<f64>>,
    pub initial_step: Option<bool>,
    pub eta: Option<f64>,
    #[serde(default)]
    pub execution: ExecutionKind,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    FixedTheorem,
    VariableTheorem,
    RealIterates,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepsizeSection {
    pub preset: Option<Preset>,
    pub gamma: Option<f64>,
    pub inv_gamma: Option<f64>,
    pub h: Option<f64>,
    /// `1/gamma` values for dual averaging, `h` values for the baselines.
    pub grid: Option<Vec<f64>>,
    /// Distance from `x_0` to a minimizer; computed when absent.
    pub r0: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessSection {
    #[serde(rename = "L")]
    pub l_global: Option<f64>,
    pub ell: Option<f64>,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_safety")]
    pub safety: f64,
}

fn default_probes() -> usize {
    32
}

fn default_safety() -> f64 {
    1.5
}

impl Default for SmoothnessSection {
    fn default() -> Self {
        SmoothnessSection {
            l_global: None,
            ell: None,
            probes: default_probes(),
            safety: default_safety(),
        }
    }
}

/// How the run's stepsize is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum StepsizeChoice {
    Preset(Preset),
    /// Constant `gamma`; the baselines use `h = 1 / gamma`.
    Gamma(f64),
    /// Grid of `1/gamma` (equivalently `h`) values; sweeps only.
    Grid(Vec<f64>),
}

/// A config that passed schema validation.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub raw: RawConfig,
    pub source: String,
    pub algorithm: Algorithm,
    pub execution: Execution,
    pub eta: Option<f64>,
    pub stepsize: Option<StepsizeChoice>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let message = e.message().replace('\n', " ");
            match line {
                Some(line) => ConfigError(format!("line {line}: {message}")),
                None => ConfigError(message),
            }
        })?;
        validate(raw, text)
    }

    pub fn rounds(&self) -> usize {
        self.raw.algorithm.rounds
    }

    pub fn sigma(&self) -> f64 {
        self.raw.noise.sigma
    }

    pub fn clients(&self) -> usize {
        self.raw.clients.n
    }
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        invalid(format!("{name} must be positive and finite, got {v}"))
    }
}

fn forbid(kind: &str, keys: &[(&str, bool)]) -> Result<(), ConfigError> {
    for (key, present) in keys {
        if *present {
            return invalid(format!("key `{key}` does not apply to {kind}"));
        }
    }
    Ok(())
}

fn validate(raw: RawConfig, text: &str) -> Result<ExperimentConfig, ConfigError> {
    let p = &raw.problem;
    match p.kind {
        ProblemType::Softmax => {
            forbid(
                "problem type softmax",
                &[
                    ("csv_path", p.csv_path.is_some()),
                    ("has_header", p.has_header.is_some()),
                    ("normalize", p.normalize.is_some()),
                    ("samples", p.samples.is_some()),
                    ("classes", p.classes.is_some()),
                    ("positive_class", p.positive_class.is_some()),
                ],
            )?;
            if p.instance_path.is_some() {
                forbid(
                    "a softmax instance file",
                    &[
                        ("d", p.d.is_some()),
                        ("k", p.k.is_some()),
                        ("mu", p.mu.is_some()),
                    ],
                )?;
            } else {
                match (p.d, p.k) {
                    (Some(d), Some(k)) if d > 0 && k > 0 => {}
                    _ => return invalid("softmax needs d > 0 and k > 0 or an instance_path"),
                }
                positive("problem.mu", p.mu.unwrap_or(0.1))?;
            }
        }
        ProblemType::Logistic => {
            forbid(
                "problem type logistic",
                &[
                    ("k", p.k.is_some()),
                    ("mu", p.mu.is_some()),
                    ("instance_path", p.instance_path.is_some()),
                    ("layout", p.layout.is_some()),
                ],
            )?;
            if p.csv_path.is_some() {
                forbid(
                    "a logistic CSV",
                    &[
                        ("d", p.d.is_some()),
                        ("samples", p.samples.is_some()),
                        ("classes", p.classes.is_some()),
                    ],
                )?;
            } else {
                forbid(
                    "generated logistic data",
                    &[
                        ("has_header", p.has_header.is_some()),
                        ("normalize", p.normalize.is_some()),
                    ],
                )?;
                match (p.samples, p.d) {
                    (Some(s), Some(d)) if s > 0 && d > 0 => {}
                    _ => return invalid("logistic needs samples > 0 and d > 0 or a csv_path"),
                }
                if p.classes == Some(0) {
                    return invalid("problem.classes must be >= 1");
                }
            }
        }
    }
    if let Some(r) = p.x0_radius {
        if !(r >= 0.0 && r.is_finite()) {
            return invalid(format!("problem.x0_radius must be >= 0, got {r}"));
        }
    }
    if !(raw.noise.sigma >= 0.0 && raw.noise.sigma.is_finite()) {
        return invalid(format!("noise.sigma must be >= 0, got {}", raw.noise.sigma));
    }
    if raw.clients.n == 0 {
        return invalid("clients.n must be >= 1");
    }
    if !(0.0..=1.0).contains(&raw.clients.frac_random) {
        return invalid(format!(
            "clients.frac_random must lie in [0, 1], got {}",
            raw.clients.frac_random
        ));
    }
    let c = &raw.compressor;
    match c.kind {
        CompressorKind::TopK => match (c.k_frac, c.k) {
            (Some(f), None) if f > 0.0 && f <= 1.0 => {}
            (None, Some(k)) if k > 0 => {}
            (Some(_), Some(_)) => {
                return invalid("set only one of compressor.k_frac and compressor.k")
            }
            _ => return invalid("top_k needs k_frac in (0, 1] or k >= 1"),
        },
        CompressorKind::Identity => forbid(
            "the identity compressor",
            &[("k_frac", c.k_frac.is_some()), ("k", c.k.is_some())],
        )?,
    }
    if let (Some(k), Some(d)) = (c.k, p.d) {
        if k > d {
            return invalid(format!("compressor.k = {k} exceeds dimension d = {d}"));
        }
    }
    if let (ProblemType::Softmax, Some(k)) = (p.kind, p.k) {
        if p.layout.unwrap_or_default() == Layout::Split && raw.clients.n > k {
            return invalid(format!(
                "cannot split {k} softmax rows across {} clients",
                raw.clients.n
            ));
        }
    }
    let psi = &raw.composite;
    match psi.kind {
        CompositeKind::Zero => forbid(
            "composite zero",
            &[
                ("lambda", psi.lambda.is_some()),
                ("radius", psi.radius.is_some()),
                ("center", psi.center.is_some()),
            ],
        )?,
        CompositeKind::L1 => {
            forbid(
                "composite l1",
                &[
                    ("radius", psi.radius.is_some()),
                    ("center", psi.center.is_some()),
                ],
            )?;
            match psi.lambda {
                Some(l) if l >= 0.0 && l.is_finite() => {}
                _ => return invalid("composite l1 needs lambda >= 0"),
            }
        }
        CompositeKind::Ball => {
            forbid("composite ball", &[("lambda", psi.lambda.is_some())])?;
            positive("composite.radius", psi.radius.unwrap_or(f64::NAN))?;
        }
    }
    if let Some(m) = raw.m {
        if !(m >= 1.0 && m.is_finite()) {
            return invalid(format!("m must be >= 1, got {m}"));
        }
    }

    let from_mechanism = raw.mechanism.as_ref().map(|m| match m.kind {
        MechanismKind::Econtrol => Algorithm::EControlDa,
        MechanismKind::Ef => Algorithm::ProxEf,
        MechanismKind::Ef21 => Algorithm::ProxEf21,
    });
    let from_algorithm = raw.algorithm.kind.map(|k| match k {
        AlgorithmKind::EcontrolDa => Algorithm::EControlDa,
        AlgorithmKind::ProxEf => Algorithm::ProxEf,
        AlgorithmKind::ProxEf21 => Algorithm::ProxEf21,
    });
    let algorithm = match (from_mechanism, from_algorithm) {
        (Some(a), Some(b)) if a != b => {
            return invalid(format!(
                "mechanism does not match algorithm {}: econtrol runs with econtrol_da, ef with prox_ef, ef21 with prox_ef21",
                b.name()
            ))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return invalid("set algorithm.kind or mechanism.kind"),
    };
    let eta = match (
        raw.mechanism.as_ref().and_then(|m| m.eta),
        raw.algorithm.eta,
    ) {
        (Some(a), Some(b)) if a != b => return invalid("mechanism.eta and algorithm.eta disagree"),
        (a, b) => a.or(b),
    };
    if let Some(eta) = eta {
        if algorithm != Algorithm::EControlDa {
            return invalid("eta only applies to the econtrol mechanism");
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return invalid(format!("eta must lie in (0, 1], got {eta}"));
        }
    }

    let alg = &raw.algorithm;
    if let Some(a) = &alg.a_t {
        if a.len() < alg.rounds {
            return invalid(format!(
                "algorithm.a_t has {} entries for T = {}",
                a.len(),
                alg.rounds
            ));
        }
        if a.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return invalid("algorithm.a_t entries must be positive");
        }
    }
    if alg.initial_step == Some(true) && algorithm != Algorithm::EControlDa {
        return invalid("initial_step only applies to econtrol_da");
    }
    let stepsize = stepsize_choice(&alg.stepsize, algorithm)?;
    if let Some(r0) = alg.stepsize.r0 {
        positive("algorithm.stepsize.r0", r0)?;
    }
    let s = &raw.smoothness;
    if let Some(l) = s.l_global {
        positive("smoothness.L", l)?;
    }
    if let Some(l) = s.ell {
        positive("smoothness.ell", l)?;
    }
    if s.probes < 2 {
        return invalid("smoothness.probes must be >= 2");
    }
    positive("smoothness.safety", s.safety)?;

    let output_dir = raw
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("compoda_out"));
    Ok(ExperimentConfig {
        algorithm,
        execution: match alg.execution {
            ExecutionKind::Sequential => Execution::Sequential,
            ExecutionKind::Parallel => Execution::Parallel,
        },
        eta,
        stepsize,
        output_dir,
        source: text.to_string(),
        raw,
    })
}

fn stepsize_choice(
    s: &StepsizeSection,
    algorithm: Algorithm,
) -> Result<Option<StepsizeChoice>, ConfigError> {
    let set = [
        s.preset.is_some(),
        s.gamma.is_some(),
        s.inv_gamma.is_some(),
        s.h.is_some(),
        s.grid.is_some(),
    ]
    .iter()
    .filter(|v| **v)
    .count();
    if set > 1 {
        return invalid("set only one of stepsize.preset, gamma, inv_gamma, h, grid");
    }
    let choice = if let Some(p) = s.preset {
        if algorithm != Algorithm::EControlDa {
            return invalid("stepsize presets only apply to econtrol_da; use h for the baselines");
        }
        StepsizeChoice::Preset(p)
    } else if let Some(g) = s.gamma {
        StepsizeChoice::Gamma(positive("stepsize.gamma", g)?)
    } else if let Some(v) = s.inv_gamma {
        StepsizeChoice::Gamma(1.0 / positive("stepsize.inv_gamma", v)?)
    } else if let Some(h) = s.h {
        StepsizeChoice::Gamma(1.0 / positive("stepsize.h", h)?)
    } else if let Some(grid) = &s.grid {
        validate_grid(grid)?;
        StepsizeChoice::Grid(grid.clone())
    } else {
        return Ok(None);
    };
    Ok(Some(choice))
}

pub fn validate_grid(grid: &[f64]) -> Result<(), ConfigError> {
    if grid.is_empty() {
        return invalid("stepsize grid is empty");
    }
    for v in grid {
        positive("stepsize grid value", *v)?;
    }
    Ok(())
}
