//! Plain-text experiment configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. Keys are dotted
//! (`grid.n_cells`), lists are comma separated and seed lists also accept
//! half-open ranges `a..b`. The first key must be `schema_version`.
//!
//! ```text
//! schema_version = 1
//! experiment = synchro
//! seeds = 0..4
//! model.name = burgers
//! noise.modes = 1:1.0
//! forcing.space = sine:1
//! ```
//!
//! Every key not given takes the default of the named experiment, and
//! [`ExperimentConfig::to_text`] writes all of them back in a fixed order,
//! so `parse ∘ to_text` is the identity.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use synclaw_core::excursions::CenterSets;
use synclaw_core::noise::{Forcing, NoiseSpec, SineMode, SpaceProfile, TimeProfile};
use synclaw_core::solver::SolverConfig;
use synclaw_core::{Field, FluxModel, Grid};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
const MAX_LIST: usize = 100_000;
const MAX_RANDOM_MODES: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    Synchro,
    Supersolution,
    Exitprob,
    Excursions,
    Oracle,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Synchro,
        Experiment::Supersolution,
        Experiment::Exitprob,
        Experiment::Excursions,
        Experiment::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Synchro => "synchro",
            Experiment::Supersolution => "supersolution",
            Experiment::Exitprob => "exitprob",
            Experiment::Excursions => "excursions",
            Experiment::Oracle => "oracle",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Shape of an initial datum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `amplitude·sin(index·πx/L)`, written `sine:A:k`.
    Sine { amplitude: f64, index: u32 },
    /// Written `constant:c`.
    Constant { value: f64 },
    /// Sine series on `modes` modes with uniform coefficients, rescaled to
    /// sup norm `amplitude`; drawn from the run seed. Written `random:A:m`.
    Random { amplitude: f64, modes: u32 },
}

impl Profile {
    pub fn field(&self, grid: Grid, seed: u64, slot: u64) -> Field {
        let l = grid.length();
        match *self {
            Profile::Sine { amplitude, index } => Field::from_fn(grid, |x| {
                amplitude * (index as f64 * std::f64::consts::PI * x / l).sin()
            }),
            Profile::Constant { value } => Field::from_fn(grid, |_| value),
            Profile::Random { amplitude, modes } => {
                let mut rng = profile_rng(seed, slot);
                let c: Vec<f64> = (0..modes).map(|_| rng.random_range(-1.0..1.0)).collect();
                random_series(grid, &c, amplitude)
            }
        }
    }
}

pub(crate) fn profile_rng(seed: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot);
    rng
}

/// `Σ cₖ sin(kπx/L)` rescaled to sup norm `amplitude` (zero if degenerate).
pub(crate) fn random_series(grid: Grid, coeffs: &[f64], amplitude: f64) -> Field {
    let l = grid.length();
    let f = Field::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * x / l).sin())
            .sum()
    });
    let m = f.max_abs();
    if m > 0.0 {
        f.scaled(amplitude / m)
    } else {
        Field::zeros(grid)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Profile::Sine { amplitude, index } => write!(f, "sine:{}:{index}", num(amplitude)),
            Profile::Constant { value } => write!(f, "constant:{}", num(value)),
            Profile::Random { amplitude, modes } => write!(f, "random:{}:{modes}", num(amplitude)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub length: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub name: String,
    pub params: Vec<f64>,
    /// Overrides the model's growth exponent `𝔞` (may be `inf`).
    pub growth_exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSection {
    pub modes: Vec<SineMode>,
    pub hoelder: f64,
    pub forcing: Forcing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub dt: f64,
    pub t_final: f64,
    pub cfl_safety: f64,
    pub norm_p: f64,
    pub stride: usize,
    /// Write binary snapshots of the stored states.
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSection {
    pub u: Profile,
    pub v: Profile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynchroKnobs {
    pub t_burn: f64,
    pub audit_t: Vec<f64>,
    pub audit_h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupersolutionKnobs {
    pub n_random: usize,
    pub max_amplitude: f64,
    pub t_min: f64,
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitKnobs {
    pub t: Vec<f64>,
    pub h: Vec<f64>,
    pub n_paths: usize,
    pub n_starts: usize,
    pub sde_dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionKnobs {
    pub pilot_seeds: Vec<u64>,
    pub pilot_t_final: f64,
    /// `κ = kappa_fraction · ĉ₁/2`.
    pub kappa_fraction: f64,
    pub n_running: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub min_excursions: usize,
    pub b_sup: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub r3: Option<f64>,
    pub rbar1: Option<f64>,
    pub rbar2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub output_dir: String,
    pub seeds: Vec<u64>,
    pub grid: GridSection,
    pub model: ModelSection,
    pub noise: NoiseSection,
    pub solver: SolverSection,
    pub initial: InitialSection,
    pub synchro: SynchroKnobs,
    pub supersolution: SupersolutionKnobs,
    pub exitprob: ExitKnobs,
    pub excursions: ExcursionKnobs,
}

/// Line of every key in the source text.
pub type KeyLines = BTreeMap<String, usize>;

impl ExperimentConfig {
    pub fn default_for(experiment: Experiment) -> Self {
        let forced = NoiseSection {
            modes: vec![SineMode {
                index: 1,
                amplitude: 1.0,
            }],
            hoelder: 0.5,
            forcing: Forcing::sine(2.0, 1),
        };
        let quiet = NoiseSection {
            modes: Vec::new(),
            hoelder: 0.5,
            forcing: Forcing::none(),
        };
        let mut cfg = Self {
            experiment,
            output_dir: experiment.name().to_string(),
            seeds: vec![0],
            grid: GridSection {
                length: 1.0,
                n_cells: 64,
            },
            model: ModelSection {
                name: "burgers".into(),
                params: Vec::new(),
                growth_exponent: None,
            },
            noise: forced,
            solver: SolverSection {
                dt: 1e-3,
                t_final: 30.0,
                cfl_safety: 0.5,
                norm_p: 2.0,
                stride: 10,
                snapshots: false,
            },
            initial: InitialSection {
                u: Profile::Sine {
                    amplitude: 3.0,
                    index: 1,
                },
                v: Profile::Sine {
                    amplitude: -3.0,
                    index: 2,
                },
            },
            synchro: SynchroKnobs {
                t_burn: 0.5,
                audit_t: vec![1.0],
                audit_h: vec![0.1, 0.5],
            },
            supersolution: SupersolutionKnobs {
                n_random: 50,
                max_amplitude: 100.0,
                t_min: 0.05,
                amplitudes: vec![10.0, 100.0, 1000.0],
            },
            exitprob: ExitKnobs {
                t: vec![1.0],
                h: vec![0.1, 0.5],
                n_paths: 10_000,
                n_starts: 32,
                sde_dt: None,
            },
            excursions: ExcursionKnobs {
                pilot_seeds: vec![1000, 1001, 1002],
                pilot_t_final: 100.0,
                kappa_fraction: 0.5,
                n_running: 100,
                delta: 0.1,
                epsilon: 0.1,
                min_excursions: 100,
                b_sup: None,
                r1: None,
                r2: None,
                r3: None,
                rbar1: None,
                rbar2: None,
            },
        };
        match experiment {
            Experiment::Synchro => {}
            Experiment::Supersolution => {
                cfg.noise = quiet;
                cfg.solver.t_final = 2.0;
                cfg.solver.stride = 1;
            }
            Experiment::Exitprob => {
                cfg.solver.t_final = 2.0;
                cfg.solver.stride = 1;
            }
            Experiment::Excursions => {
                cfg.solver.t_final = 100.0;
            }
            Experiment::Oracle => {
                cfg.grid.n_cells = 256;
                cfg.model.name = "zero".into();
                cfg.noise = quiet;
                cfg.solver.dt = 1e-4;
                cfg.solver.t_final = 0.2;
                cfg.solver.stride = 1;
                cfg.initial = InitialSection {
                    u: Profile::Sine {
                        amplitude: 1.0,
                        index: 1,
                    },
                    v: Profile::Constant { value: 0.0 },
                };
            }
        }
        cfg
    }

    /// Parses and validates.
    pub fn parse(text: &str) -> Result<Self> {
        let (cfg, lines) = Self::parse_unchecked(text)?;
        cfg.validate_with(&lines)?;
        Ok(cfg)
    }

    /// Syntax only: every key known, every value well formed.
    pub fn parse_unchecked(text: &str) -> Result<(Self, KeyLines)> {
        let entries = tokenize(text)?;
        let Some(first) = entries.first() else {
            return Err(Error::config(0, "empty config: expected `schema_version = 1`"));
        };
        if first.key != "schema_version" {
            return Err(Error::config(
                first.line,
                format!("first key must be `schema_version`, found `{}`", first.key),
            ));
        }
        match first.value.parse::<u32>() {
            Ok(SCHEMA_VERSION) => {}
            _ => {
                return Err(Error::config(
                    first.line,
                    format!(
                        "unsupported schema_version `{}` (this build reads {SCHEMA_VERSION})",
                        first.value
                    ),
                ))
            }
        }
        let exp_entry = entries
            .iter()
            .find(|e| e.key == "experiment")
            .ok_or_else(|| Error::config(0, "missing required key `experiment`"))?;
        let experiment = Experiment::from_name(exp_entry.value).ok_or_else(|| {
            let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
            Error::config(
                exp_entry.line,
                format!("unknown experiment `{}` (one of {})", exp_entry.value, names.join(", ")),
            )
        })?;
        let mut cfg = Self::default_for(experiment);
        let mut lines = KeyLines::new();
        for e in &entries {
            if let Some(prev) = lines.insert(e.key.to_string(), e.line) {
                return Err(Error::config(
                    e.line,
                    format!("duplicate key `{}` (first set on line {prev})", e.key),
                ));
            }
            if e.key == "schema_version" || e.key == "experiment" {
                continue;
            }
            cfg.set(e.key, e.value).map_err(|m| Error::config(e.line, m))?;
        }
        Ok((cfg, lines))
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "output_dir" => {
                if v.is_empty() {
                    return Err("output_dir must not be empty".into());
                }
                self.output_dir = v.to_string();
            }
            "seeds" => self.seeds = seed_list(v)?,
            "grid.length" => self.grid.length = real(v)?,
            "grid.n_cells" => self.grid.n_cells = count(v)?,
            "model.name" => self.model.name = ident(v)?,
            "model.params" => self.model.params = real_list(v)?,
            "model.growth_exponent" => self.model.growth_exponent = opt(v, extended_real)?,
            "noise.modes" => self.noise.modes = modes(v)?,
            "noise.hoelder" => self.noise.hoelder = real(v)?,
            "forcing.amplitude" => self.noise.forcing.amplitude = real(v)?,
            "forcing.space" => self.noise.forcing.space = space_profile(v)?,
            "forcing.time" => self.noise.forcing.time = time_profile(v)?,
            "solver.dt" => self.solver.dt = real(v)?,
            "solver.t_final" => self.solver.t_final = real(v)?,
            "solver.cfl_safety" => self.solver.cfl_safety = real(v)?,
            "solver.norm_p" => self.solver.norm_p = real(v)?,
            "solver.stride" => self.solver.stride = count(v)?,
            "solver.snapshots" => self.solver.snapshots = boolean(v)?,
            "initial.u" => self.initial.u = profile(v)?,
            "initial.v" => self.initial.v = profile(v)?,
            "synchro.t_burn" => self.synchro.t_burn = real(v)?,
            "synchro.audit_t" => self.synchro.audit_t = real_list(v)?,
            "synchro.audit_h" => self.synchro.audit_h = real_list(v)?,
            "supersolution.n_random" => self.supersolution.n_random = count(v)?,
            "supersolution.max_amplitude" => self.supersolution.max_amplitude = real(v)?,
            "supersolution.t_min" => self.supersolution.t_min = real(v)?,
            "supersolution.amplitudes" => self.supersolution.amplitudes = real_list(v)?,
            "exitprob.t" => self.exitprob.t = real_list(v)?,
            "exitprob.h" => self.exitprob.h = real_list(v)?,
            "exitprob.n_paths" => self.exitprob.n_paths = count(v)?,
            "exitprob.n_starts" => self.exitprob.n_starts = count(v)?,
            "exitprob.sde_dt" => self.exitprob.sde_dt = opt(v, real)?,
            "excursions.pilot_seeds" => self.excursions.pilot_seeds = seed_list(v)?,
            "excursions.pilot_t_final" => self.excursions.pilot_t_final = real(v)?,
            "excursions.kappa_fraction" => self.excursions.kappa_fraction = real(v)?,
            "excursions.n_running" => self.excursions.n_running = count(v)?,
            "excursions.delta" => self.excursions.delta = real(v)?,
            "excursions.epsilon" => self.excursions.epsilon = real(v)?,
            "excursions.min_excursions" => self.excursions.min_excursions = count(v)?,
            "excursions.b_sup" => self.excursions.b_sup = opt(v, real)?,
            "excursions.r1" => self.excursions.r1 = opt(v, real)?,
            "excursions.r2" => self.excursions.r2 = opt(v, real)?,
            "excursions.r3" => self.excursions.r3 = opt(v, real)?,
            "excursions.rbar1" => self.excursions.rbar1 = opt(v, real)?,
            "excursions.rbar2" => self.excursions.rbar2 = opt(v, real)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Canonical `(key, value)` pairs; optional keys appear only when set.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out: Vec<(&'static str, String)> = vec![
            ("schema_version", SCHEMA_VERSION.to_string()),
            ("experiment", self.experiment.name().into()),
            ("output_dir", self.output_dir.clone()),
            ("seeds", join(self.seeds.iter().map(|s| s.to_string()))),
            ("grid.length", num(self.grid.length)),
            ("grid.n_cells", self.grid.n_cells.to_string()),
            ("model.name", self.model.name.clone()),
            ("model.params", join(self.model.params.iter().map(|&x| num(x)))),
        ];
        if let Some(a) = self.model.growth_exponent {
            out.push(("model.growth_exponent", num(a)));
        }
        out.extend([
            (
                "noise.modes",
                join(
                    self.noise
                        .modes
                        .iter()
                        .map(|m| format!("{}:{}", m.index, num(m.amplitude))),
                ),
            ),
            ("noise.hoelder", num(self.noise.hoelder)),
            ("forcing.amplitude", num(self.noise.forcing.amplitude)),
            ("forcing.space", space_text(self.noise.forcing.space)),
            ("forcing.time", time_text(self.noise.forcing.time)),
            ("solver.dt", num(self.solver.dt)),
            ("solver.t_final", num(self.solver.t_final)),
            ("solver.cfl_safety", num(self.solver.cfl_safety)),
            ("solver.norm_p", num(self.solver.norm_p)),
            ("solver.stride", self.solver.stride.to_string()),
            ("solver.snapshots", self.solver.snapshots.to_string()),
            ("initial.u", self.initial.u.to_string()),
            ("initial.v", self.initial.v.to_string()),
            ("synchro.t_burn", num(self.synchro.t_burn)),
            ("synchro.audit_t", join(self.synchro.audit_t.iter().map(|&x| num(x)))),
            ("synchro.audit_h", join(self.synchro.audit_h.iter().map(|&x| num(x)))),
            ("supersolution.n_random", self.supersolution.n_random.to_string()),
            ("supersolution.max_amplitude", num(self.supersolution.max_amplitude)),
            ("supersolution.t_min", num(self.supersolution.t_min)),
            (
                "supersolution.amplitudes",
                join(self.supersolution.amplitudes.iter().map(|&x| num(x))),
            ),
            ("exitprob.t", join(self.exitprob.t.iter().map(|&x| num(x)))),
            ("exitprob.h", join(self.exitprob.h.iter().map(|&x| num(x)))),
            ("exitprob.n_paths", self.exitprob.n_paths.to_string()),
            ("exitprob.n_starts", self.exitprob.n_starts.to_string()),
        ]);
        if let Some(d) = self.exitprob.sde_dt {
            out.push(("exitprob.sde_dt", num(d)));
        }
        let ex = &self.excursions;
        out.extend([
            (
                "excursions.pilot_seeds",
                join(ex.pilot_seeds.iter().map(|s| s.to_string())),
            ),
            ("excursions.pilot_t_final", num(ex.pilot_t_final)),
            ("excursions.kappa_fraction", num(ex.kappa_fraction)),
            ("excursions.n_running", ex.n_running.to_string()),
            ("excursions.delta", num(ex.delta)),
            ("excursions.epsilon", num(ex.epsilon)),
            ("excursions.min_excursions", ex.min_excursions.to_string()),
        ]);
        for (k, v) in [
            ("excursions.b_sup", ex.b_sup),
            ("excursions.r1", ex.r1),
            ("excursions.r2", ex.r2),
            ("excursions.r3", ex.r3),
            ("excursions.rbar1", ex.rbar1),
            ("excursions.rbar2", ex.rbar2),
        ] {
            if let Some(v) = v {
                out.push((k, num(v)));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut section = "";
        for (k, v) in self.entries() {
            let head = k.split('.').next().unwrap_or("");
            if k.contains('.') && head != section {
                s.push('\n');
                section = head;
            }
            if v.is_empty() {
                s.push_str(&format!("{k} =\n"));
            } else {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }

    /// SHA-256 of the canonical text, lower-case hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn grid(&self) -> synclaw_core::Result<Grid> {
        Grid::new(self.grid.length, self.grid.n_cells)
    }

    pub fn flux_model(&self) -> synclaw_core::Result<FluxModel> {
        let m = FluxModel::builtin(&self.model.name, &self.model.params)?;
        match self.model.growth_exponent {
            Some(a) => m.with_growth_exponent(a),
            None => Ok(m),
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            modes: self.noise.modes.clone(),
            forcing: self.noise.forcing,
            hoelder_exponent: self.noise.hoelder,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut c = SolverConfig::new(self.solver.dt, self.solver.t_final)
            .with_stride(self.solver.stride)
            .with_norm(self.solver.norm_p);
        c.cfl_safety = self.solver.cfl_safety;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(&KeyLines::new())
    }

    /// Semantic checks, errors anchored at the line of the offending key.
    pub fn validate_with(&self, lines: &KeyLines) -> Result<()> {
        let at = |key: &str| -> usize { lines.get(key).or_else(|| lines.get("experiment")).copied().unwrap_or(0) };
        let fail = |key: &str, msg: String| Err(Error::config(at(key), msg));
        if self.seeds.is_empty() {
            return fail("seeds", "at least one seed is required".into());
        }
        if let Err(e) = self.grid() {
            return fail(
                if self.grid.n_cells < 2 {
                    "grid.n_cells"
                } else {
                    "grid.length"
                },
                e.to_string(),
            );
        }
        let model = match self.flux_model() {
            Ok(m) => m,
            Err(e) => {
                let key = if lines.contains_key("model.growth_exponent") && self.model.growth_exponent.is_some() {
                    "model.growth_exponent"
                } else {
                    "model.name"
                };
                return fail(key, e.to_string());
            }
        };
        if let Err(e) = self.noise_spec().validate() {
            return fail("noise.modes", e.to_string());
        }
        if let Err(e) = self.solver_config().validate() {
            let key = if !(self.solver.dt > 0.0) {
                "solver.dt"
            } else if !(self.solver.t_final > 0.0) || self.solver.t_final < self.solver.dt {
                "solver.t_final"
            } else if !(self.solver.cfl_safety > 0.0 && self.solver.cfl_safety <= 1.0) {
                "solver.cfl_safety"
            } else if self.solver.stride == 0 {
                "solver.stride"
            } else {
                "solver.norm_p"
            };
            return fail(key, e.to_string());
        }
        for (key, p) in [("initial.u", self.initial.u), ("initial.v", self.initial.v)] {
            match p {
                Profile::Sine { index: 0, .. } => return fail(key, "sine profile index must be at least 1".into()),
                Profile::Random { modes, .. } if modes == 0 || modes > MAX_RANDOM_MODES => {
                    return fail(
                        key,
                        format!("random profile needs 1 to {MAX_RANDOM_MODES} modes, got {modes}"),
                    )
                }
                _ => {}
            }
        }
        let t_final = self.solver.t_final;
        match self.experiment {
            Experiment::Synchro => {
                let k = &self.synchro;
                if !(k.t_burn >= 0.0 && k.t_burn < t_final) {
                    return fail(
                        "synchro.t_burn",
                        format!("t_burn must lie in [0, t_final), got {}", k.t_burn),
                    );
                }
                for &t in &k.audit_t {
                    for &h in &k.audit_h {
                        if !(t >= 0.0 && h > 0.0 && t + h <= t_final + 1e-12) {
                            return fail(
                                "synchro.audit_h",
                                format!(
                                    "audit window [{t}, {}] must be non-empty and inside [0, {t_final}]",
                                    t + h
                                ),
                            );
                        }
                    }
                }
            }
            Experiment::Supersolution => {
                if model.coercivity().is_none() {
                    return fail(
                        "model.name",
                        format!(
                            "regime mismatch: supersolution needs a coercive flux, `{}` declares no coercivity",
                            self.model.name
                        ),
                    );
                }
                let k = &self.supersolution;
                if t_final < 2.0 {
                    return fail(
                        "solver.t_final",
                        format!("supersolution needs t_final ≥ 2 to cover the window [1, 2], got {t_final}"),
                    );
                }
                if !(k.t_min > 0.0 && k.t_min < t_final) {
                    return fail(
                        "supersolution.t_min",
                        format!("t_min must lie in (0, t_final), got {}", k.t_min),
                    );
                }
                if k.n_random == 0 || !(k.max_amplitude > 0.0) {
                    return fail(
                        "supersolution.n_random",
                        "need at least one random datum and a positive max_amplitude".into(),
                    );
                }
                if k.amplitudes.is_empty() || k.amplitudes.iter().any(|&a| !(a > 0.0)) {
                    return fail(
                        "supersolution.amplitudes",
                        "amplitudes must be a non-empty list of positive values".into(),
                    );
                }
            }
            Experiment::Exitprob => {
                let k = &self.exitprob;
                if k.t.is_empty() || k.h.is_empty() {
                    return fail("exitprob.h", "need at least one t and one h".into());
                }
                for &h in &k.h {
                    if !(h > 0.0 && h <= 1.0) {
                        return fail("exitprob.h", format!("h must lie in (0, 1], got {h}"));
                    }
                    for &t in &k.t {
                        if !(t >= 0.0 && t + h <= t_final + 1e-12) {
                            return fail(
                                "exitprob.t",
                                format!("window [{t}, {}] is not inside [0, {t_final}]", t + h),
                            );
                        }
                    }
                }
                if k.n_paths == 0 || k.n_starts == 0 {
                    return fail("exitprob.n_paths", "n_paths and n_starts must be positive".into());
                }
                if let Some(d) = k.sde_dt {
                    let hmin = k.h.iter().copied().fold(f64::INFINITY, f64::min);
                    if !(d > 0.0 && d <= hmin) {
                        return fail(
                            "exitprob.sde_dt",
                            format!("sde_dt must lie in (0, min h = {hmin}], got {d}"),
                        );
                    }
                }
            }
            Experiment::Excursions => {
                if model.growth_exponent().is_infinite() {
                    return fail(
                        "model.growth_exponent",
                        format!(
                            "regime mismatch: excursions calibrate Lᵖ centers and need a finite growth exponent 𝔞, `{}` has 𝔞 = ∞",
                            self.model.name
                        ),
                    );
                }
                let k = &self.excursions;
                if k.pilot_seeds.is_empty() || !(k.pilot_t_final > 0.0) {
                    return fail(
                        "excursions.pilot_seeds",
                        "need pilot seeds and a positive pilot_t_final".into(),
                    );
                }
                if !(k.kappa_fraction > 0.0 && k.kappa_fraction <= 1.0) {
                    return fail(
                        "excursions.kappa_fraction",
                        format!(
                            "kappa_fraction must lie in (0, 1] so that κ ≤ ĉ₁/2, got {}",
                            k.kappa_fraction
                        ),
                    );
                }
                if k.n_running == 0 {
                    return fail("excursions.n_running", "n_running must be positive".into());
                }
                if !(k.delta > 0.0) || !(k.epsilon > 0.0 && k.epsilon < 1.0) {
                    return fail("excursions.delta", "need delta > 0 and epsilon in (0, 1)".into());
                }
                if let Some(b) = k.b_sup {
                    if !(b >= 0.0) {
                        return fail("excursions.b_sup", format!("b_sup must be non-negative, got {b}"));
                    }
                }
                for (key, v) in [
                    ("excursions.r1", k.r1),
                    ("excursions.r2", k.r2),
                    ("excursions.r3", k.r3),
                    ("excursions.rbar1", k.rbar1),
                    ("excursions.rbar2", k.rbar2),
                ] {
                    if let Some(v) = v {
                        if !(v > 0.0) {
                            return fail(key, format!("radius must be positive, got {v}"));
                        }
                    }
                }
                for (lo_key, lo, hi_key, hi, name) in [
                    ("excursions.r1", k.r1, "excursions.r2", k.r2, "R1 < R2"),
                    ("excursions.r2", k.r2, "excursions.r3", k.r3, "R2 < R3"),
                    ("excursions.rbar1", k.rbar1, "excursions.rbar2", k.rbar2, "R̄1 < R̄2"),
                ] {
                    if let (Some(a), Some(b)) = (lo, hi) {
                        if a >= b {
                            let key = if at(lo_key) >= at(hi_key) { lo_key } else { hi_key };
                            return fail(
                                key,
                                format!("violates the invariant {name}: {lo_key} = {a} is not below {hi_key} = {b}"),
                            );
                        }
                    }
                }
                if let (Some(r1), Some(r2), Some(r3), Some(b1), Some(b2)) = (k.r1, k.r2, k.r3, k.rbar1, k.rbar2) {
                    if let Err(e) = CenterSets::new(self.solver.norm_p, r1, r2, r3, b1, b2) {
                        return fail("excursions.r1", e.to_string());
                    }
                }
            }
            Experiment::Oracle => {
                if !model.is_zero() {
                    return fail(
                        "model.name",
                        "regime mismatch: the oracle checks need the zero flux".into(),
                    );
                }
                if !self.noise.modes.is_empty() || !self.noise.forcing.is_zero() {
                    return fail(
                        "noise.modes",
                        "regime mismatch: the oracle checks need zero noise and forcing".into(),
                    );
                }
            }
        }
        Ok(())
    }
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

fn tokenize(text: &str) -> Result<Vec<Entry<'_>>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| Error::config(line, format!("expected `key = value`, found `{body}`")))?;
        let key = k.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            return Err(Error::config(line, format!("malformed key `{key}`")));
        }
        out.push(Entry {
            line,
            key,
            value: v.trim(),
        });
    }
    Ok(out)
}

/// Shortest round-trip representation.
pub(crate) fn num(x: f64) -> String {
    format!("{x:?}")
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(", ")
}

fn real(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("expected a number, found `{v}`"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite number, found `{v}`"))
    }
}

fn extended_real(v: &str) -> Result<f64, String> {
    match v {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => real(v),
    }
}

fn count(v: &str) -> Result<usize, String> {
    v.parse()
        .map_err(|_| format!("expected a non-negative integer, found `{v}`"))
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected `true` or `false`, found `{v}`")),
    }
}

fn ident(v: &str) -> Result<String, String> {
    if !v.is_empty() && v.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        Ok(v.to_string())
    } else {
        Err(format!("expected a name, found `{v}`"))
    }
}

fn opt(v: &str, f: fn(&str) -> Result<f64, String>) -> Result<Option<f64>, String> {
    if v.is_empty() {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

fn items(v: &str) -> impl Iterator<Item = &str> {
    let empty = v.is_empty();
    v.split(',').map(str::trim).filter(move |_| !empty)
}

fn real_list(v: &str) -> Result<Vec<f64>, String> {
    let out: Vec<f64> = items(v).map(real).collect::<Result<_, _>>()?;
    if out.len() > MAX_LIST {
        return Err(format!("list longer than {MAX_LIST} entries"));
    }
    Ok(out)
}

fn seed_list(v: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in items(v) {
        let parse =
            |s: &str| -> Result<u64, String> { s.trim().parse().map_err(|_| format!("expected a seed, found `{s}`")) };
        if let Some((a, b)) = item.split_once("..") {
            let (a, b) = (parse(a)?, parse(b)?);
            if b <= a {
                return Err(format!("empty seed range `{item}`"));
            }
            if b - a > MAX_LIST as u64 || out.len() + (b - a) as usize > MAX_LIST {
                return Err(format!("seed list longer than {MAX_LIST} entries"));
            }
            out.extend(a..b);
        } else {
            out.push(parse(item)?);
        }
        if out.len() > MAX_LIST {
            return Err(format!("seed list longer than {MAX_LIST} entries"));
        }
    }
    Ok(out)
}

fn modes(v: &str) -> Result<Vec<SineMode>, String> {
    let out: Vec<SineMode> = items(v)
        .map(|item| {
            let (k, a) = item
                .split_once(':')
                .ok_or_else(|| format!("expected `index:amplitude`, found `{item}`"))?;
            Ok(SineMode {
                index: k.trim().parse().map_err(|_| format!("bad mode index `{k}`"))?,
                amplitude: real(a.trim())?,
            })
        })
        .collect::<Result<_, String>>()?;
    if out.len() > MAX_LIST {
        return Err(format!("list longer than {MAX_LIST} entries"));
    }
    Ok(out)
}

fn parts(v: &str) -> Vec<&str> {
    v.split(':').map(str::trim).collect()
}

fn profile(v: &str) -> Result<Profile, String> {
    let p = parts(v);
    let index = |s: &str| -> Result<u32, String> { s.parse().map_err(|_| format!("bad integer `{s}` in `{v}`")) };
    match p.as_slice() {
        ["sine", a, k] => Ok(Profile::Sine {
            amplitude: real(a)?,
            index: index(k)?,
        }),
        ["constant", c] => Ok(Profile::Constant { value: real(c)? }),
        ["random", a, m] => Ok(Profile::Random {
            amplitude: real(a)?,
            modes: index(m)?,
        }),
        _ => Err(format!(
            "expected `sine:A:k`, `constant:c` or `random:A:modes`, found `{v}`"
        )),
    }
}

fn space_profile(v: &str) -> Result<SpaceProfile, String> {
    match parts(v).as_slice() {
        ["zero"] => Ok(SpaceProfile::Zero),
        ["constant"] => Ok(SpaceProfile::Constant),
        ["sine", k] => Ok(SpaceProfile::Sine {
            index: k.parse().map_err(|_| format!("bad sine index in `{v}`"))?,
        }),
        _ => Err(format!("expected `zero`, `constant` or `sine:k`, found `{v}`")),
    }
}

fn space_text(s: SpaceProfile) -> String {
    match s {
        SpaceProfile::Zero => "zero".into(),
        SpaceProfile::Constant => "constant".into(),
        SpaceProfile::Sine { index } => format!("sine:{index}"),
    }
}

fn time_profile(v: &str) -> Result<TimeProfile, String> {
    match parts(v).as_slice() {
        ["constant"] => Ok(TimeProfile::Constant),
        ["cosine", f] => Ok(TimeProfile::Cosine { frequency: real(f)? }),
        _ => Err(format!("expected `constant` or `cosine:frequency`, found `{v}`")),
    }
}

fn time_text(t: TimeProfile) -> String {
    match t {
        TimeProfile::Constant => "constant".into(),
        TimeProfile::Cosine { frequency } => format!("cosine:{}", num(frequency)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line_of(err: Error) -> (usize, String) {
        match err {
            Error::Config { line, message } => (line, message),
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        for e in Experiment::ALL {
            let cfg = ExperimentConfig::default_for(e);
            cfg.validate().unwrap();
            let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
    }

    #[test]
    fn minimal_file_and_ranges() {
        let cfg = ExperimentConfig::parse(
            "schema_version = 1\nexperiment = synchro # pair runs\n\nseeds = 0..3, 7\nsolver.t_final = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2, 7]);
        assert_eq!(cfg.solver.t_final, 5.0);
        assert_eq!(cfg.model.name, "burgers");
    }

    #[test]
    fn errors_name_their_line() {
        let (l, m) = line_of(ExperimentConfig::parse("experiment = synchro\n").unwrap_err());
        assert_eq!(l, 1);
        assert!(m.contains("schema_version"));
        let (l, _) = line_of(ExperimentConfig::parse("schema_version = 2\nexperiment = synchro\n").unwrap_err());
        assert_eq!(l, 1);
        let (l, m) = line_of(
            ExperimentConfig::parse("schema_version = 1\nexperiment = synchro\n\ngrid.cells = 3\n").unwrap_err(),
        );
        assert_eq!(l, 4);
        assert!(m.contains("unknown key"));
        let (l, m) = line_of(
            ExperimentConfig::parse("schema_version = 1\nexperiment = synchro\nseeds = 1\nseeds = 2\n").unwrap_err(),
        );
        assert_eq!(l, 4);
        assert!(m.contains("line 3"));
        let (l, _) = line_of(ExperimentConfig::parse("schema_version = 1\nexperiment = nope\n").unwrap_err());
        assert_eq!(l, 2);
        let (l, _) =
            line_of(ExperimentConfig::parse("schema_version = 1\nexperiment = oracle\nno equals\n").unwrap_err());
        assert_eq!(l, 3);
        let (l, _) = line_of(
            ExperimentConfig::parse("schema_version = 1\nexperiment = oracle\nsolver.dt = fast\n").unwrap_err(),
        );
        assert_eq!(l, 3);
        let (l, m) = line_of(ExperimentConfig::parse("schema_version = 1\n").unwrap_err());
        assert_eq!(l, 0);
        assert!(m.contains("experiment"));
    }

    #[test]
    fn rbar_order_is_enforced() {
        let text = "schema_version = 1\nexperiment = excursions\nexcursions.rbar1 = 5\nexcursions.rbar2 = 2\n";
        let (l, m) = line_of(ExperimentConfig::parse(text).unwrap_err());
        assert_eq!(l, 4);
        assert!(m.contains("R̄1 < R̄2"), "{m}");
    }

    #[test]
    fn regime_consistency() {
        let text = "schema_version = 1\nexperiment = supersolution\nmodel.name = sine\n";
        let (l, m) = line_of(ExperimentConfig::parse(text).unwrap_err());
        assert_eq!(l, 3);
        assert!(m.contains("coercive"));
        let text = "schema_version = 1\nexperiment = excursions\nmodel.growth_exponent = inf\n";
        let (l, m) = line_of(ExperimentConfig::parse(text).unwrap_err());
        assert_eq!(l, 3);
        assert!(m.contains("finite growth"));
        // the same model is fine where no Lᵖ calibration is needed
        let text = "schema_version = 1\nexperiment = synchro\nmodel.growth_exponent = inf\n";
        assert!(ExperimentConfig::parse(text).is_ok());
    }

    #[test]
    fn window_and_kappa_checks() {
        let bad = [
            "exitprob.h = 1.5",
            "exitprob.t = 1.9",
            "solver.dt = 0",
            "excursions.kappa_fraction = 2",
            "grid.n_cells = 1",
            "seeds =",
            "initial.u = random:1:0",
        ];
        for (i, line) in bad.iter().enumerate() {
            let exp = if line.starts_with("exc") {
                "excursions"
            } else {
                "exitprob"
            };
            let text = format!("schema_version = 1\nexperiment = {exp}\n{line}\n");
            let (l, _) = line_of(ExperimentConfig::parse(&text).unwrap_err());
            assert_eq!(l, 3, "case {i}: {line}");
        }
    }

    #[test]
    fn random_profile_is_seeded_and_scaled() {
        let g = Grid::new(1.0, 32).unwrap();
        let p = Profile::Random {
            amplitude: 7.0,
            modes: 5,
        };
        let a = p.field(g, 3, 0);
        assert_eq!(a, p.field(g, 3, 0));
        assert_ne!(a, p.field(g, 4, 0));
        assert_ne!(a, p.field(g, 3, 1));
        assert!((a.max_abs() - 7.0).abs() < 1e-12);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6f64..1e6, Just(0.0), Just(1e-300), Just(-2.5e17)]
    }

    fn arb_profile() -> impl Strategy<Value = Profile> {
        prop_oneof![
            (finite(), 0u32..9).prop_map(|(amplitude, index)| Profile::Sine { amplitude, index }),
            finite().prop_map(|value| Profile::Constant { value }),
            (finite(), 0u32..99).prop_map(|(amplitude, modes)| Profile::Random { amplitude, modes }),
        ]
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            prop::sample::select(Experiment::ALL.to_vec()),
            prop::collection::vec(any::<u64>(), 0..5),
            (
                finite(),
                0usize..5000,
                prop::sample::select(vec!["burgers", "zero", "linear", "cubic"]),
            ),
            prop::collection::vec(finite(), 0..3),
            prop::option::of(prop_oneof![Just(f64::INFINITY), 1.0f64..5.0]),
            prop::collection::vec((1u32..20, finite()), 0..4),
            (finite(), finite(), 0u32..5, prop::option::of(finite())),
            (finite(), finite(), 1usize..100, any::<bool>()),
            (arb_profile(), arb_profile()),
            (
                prop::collection::vec(finite(), 0..4),
                prop::option::of(finite()),
                prop::option::of(finite()),
            ),
        )
            .prop_map(
                |(e, seeds, (len, n, name), params, growth, modes, forcing, solver, init, lists)| {
                    let mut c = ExperimentConfig::default_for(e);
                    c.seeds = seeds;
                    c.grid = GridSection {
                        length: len,
                        n_cells: n,
                    };
                    c.model = ModelSection {
                        name: name.into(),
                        params,
                        growth_exponent: growth,
                    };
                    c.noise.modes = modes
                        .into_iter()
                        .map(|(index, amplitude)| SineMode { index, amplitude })
                        .collect();
                    let (amp, freq, idx, hoelder) = forcing;
                    c.noise.forcing = Forcing {
                        amplitude: amp,
                        time: if idx % 2 == 0 {
                            TimeProfile::Constant
                        } else {
                            TimeProfile::Cosine { frequency: freq }
                        },
                        space: match idx {
                            0 => SpaceProfile::Zero,
                            1 => SpaceProfile::Constant,
                            k => SpaceProfile::Sine { index: k },
                        },
                    };
                    if let Some(h) = hoelder {
                        c.noise.hoelder = h;
                    }
                    let (dt, t_final, stride, snaps) = solver;
                    c.solver.dt = dt;
                    c.solver.t_final = t_final;
                    c.solver.stride = stride;
                    c.solver.snapshots = snaps;
                    c.initial = InitialSection { u: init.0, v: init.1 };
                    let (list, o1, o2) = lists;
                    c.synchro.audit_h = list.clone();
                    c.exitprob.t = list;
                    c.exitprob.sde_dt = o1;
                    c.excursions.rbar2 = o2;
                    c.excursions.b_sup = o1;
                    c
                },
            )
    }

    proptest! {
        #[test]
        fn parse_serialize_is_identity(cfg in arb_config()) {
            let text = cfg.to_text();
            let (back, lines) = ExperimentConfig::parse_unchecked(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_text(), text);
            prop_assert!(lines.contains_key("schema_version"));
        }

        #[test]
        fn parser_never_panics(text in "(?s).{0,400}") {
            let _ = ExperimentConfig::parse(&text);
        }
    }
}
