//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, dotted keys (`init.kind = gaussian_bump`), `#`
//! starts a comment. Lists are comma separated. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow::{DtPolicy, DuhamelConfig, FlowConfig, ImexOrder, Scheme};
use crate::grid::{DerivativeBackend, DerivativeKind, GridSpec};

use super::generate::{InitialData, Pattern};

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsSection {
    pub adm_radii: Vec<f64>,
    /// Radii for the local masses `A(t,R)`.
    pub a_radii: Vec<f64>,
    pub xt: bool,
    /// Explicit X_T radii; empty means the automatic ladder.
    pub xt_radii: Vec<f64>,
    /// Restrict `min_R`, `max_R` to this origin ball.
    pub curvature_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitSection {
    pub window: Option<(f64, f64)>,
    pub expected: Option<f64>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarnackSection {
    pub t0: Option<f64>,
    pub probes: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write an RDTF snapshot every this many steps (0: initial and final only).
    pub snapshot_every: usize,
    /// Full CSV records (and stored states for trajectory diagnostics) every this many steps.
    pub csv_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub flow: FlowConfig,
    pub p_list: Vec<f64>,
    pub init: InitialData,
    pub diagnostics: DiagnosticsSection,
    pub fit: FitSection,
    pub harnack: HarnackSection,
    pub output: OutputSection,
}

/// Raw assignments with the line each came from.
struct Table {
    entries: BTreeMap<String, (usize, String)>,
}

impl Table {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", i + 1), format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return Err(Error::config(format!("line {}", i + 1), format!("bad key `{k}`")));
            }
            if entries.insert(k.to_string(), (i + 1, v.to_string())).is_some() {
                return Err(Error::config(k, "assigned more than once"));
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::config(key, format!("expected a finite number, got `{v}`")))
            })
            .transpose()
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.take(key)
            .map(|v| v.parse::<usize>().map_err(|_| Error::config(key, format!("expected a nonnegative integer, got `{v}`"))))
            .transpose()
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.take(key)
            .map(|v| v.parse::<u64>().map_err(|_| Error::config(key, format!("expected an unsigned 64-bit integer, got `{v}`"))))
            .transpose()
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        self.take(key)
            .map(|v| match v.as_str() {
                "true" | "yes" | "on" => Ok(true),
                "false" | "no" | "off" => Ok(false),
                _ => Err(Error::config(key, format!("expected true or false, got `{v}`"))),
            })
            .transpose()
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        self.take(key)
            .map(|v| {
                if v.is_empty() {
                    return Ok(Vec::new());
                }
                v.split(',')
                    .map(|s| {
                        let s = s.trim();
                        s.parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| Error::config(key, format!("expected a comma-separated list of numbers, got `{s}`")))
                    })
                    .collect()
            })
            .transpose()
    }

    fn require_f64(&mut self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| Error::config(key, "required"))
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            Some((k, (line, _))) => Err(Error::config(k, format!("unknown key (line {line})"))),
            None => Ok(()),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut t = Table::parse(text)?;

        let n = t.usize("grid.n")?.ok_or_else(|| Error::config("grid.n", "required"))?;
        let res = t.usize("grid.resolution")?.ok_or_else(|| Error::config("grid.resolution", "required"))?;
        let box_length = t.require_f64("grid.box_length")?;
        let grid = GridSpec::new(n, res, box_length).map_err(|e| Error::config("grid", e.to_string()))?;

        let mut flow = FlowConfig::default();
        flow.scheme = match t.take("flow.scheme").as_deref() {
            None | Some("imex") => Scheme::Imex,
            Some("duhamel") => Scheme::Duhamel,
            Some(v) => return Err(Error::config("flow.scheme", format!("expected imex or duhamel, got `{v}`"))),
        };
        flow.order = match t.take("flow.order").as_deref() {
            None | Some("euler") => ImexOrder::Euler,
            Some("rk2") => ImexOrder::Rk2,
            Some(v) => return Err(Error::config("flow.order", format!("expected euler or rk2, got `{v}`"))),
        };
        let mut backend = match t.take("flow.backend").as_deref() {
            None | Some("spectral") => DerivativeBackend::spectral(),
            Some("central4") => DerivativeBackend::central4(),
            Some(v) => return Err(Error::config("flow.backend", format!("expected spectral or central4, got `{v}`"))),
        };
        if let Some(d) = t.bool("flow.dealias")? {
            backend.dealias = d && backend.kind == DerivativeKind::Spectral;
        }
        flow.backend = backend;
        flow.dt_policy = match (t.f64("flow.dt")?, t.f64("flow.cfl_safety")?) {
            (Some(_), Some(_)) => return Err(Error::config("flow.dt", "give either flow.dt or flow.cfl_safety, not both")),
            (Some(dt), None) => DtPolicy::Fixed(positive("flow.dt", dt)?),
            (None, Some(s)) => DtPolicy::Cfl(s),
            (None, None) => DtPolicy::Cfl(0.9),
        };
        flow.t_end = positive("flow.t_end", t.require_f64("flow.t_end")?)?;
        let d = DuhamelConfig::default();
        flow.duhamel = DuhamelConfig {
            window: t.f64("flow.duhamel.window")?,
            slices: t.usize("flow.duhamel.slices")?.unwrap_or(d.slices),
            max_iters: t.usize("flow.duhamel.max_iters")?.unwrap_or(d.max_iters),
            contraction_tol: t.f64("flow.duhamel.tolerance")?.unwrap_or(d.contraction_tol),
        };
        flow.validate(&grid).map_err(|e| match e {
            Error::Config { key, reason } => Error::config(format!("flow.{key}"), reason),
            Error::Cfl(msg) => Error::config("flow.dt", msg),
            other => other,
        })?;

        let p_list = t.list("p_list")?.unwrap_or_else(|| vec![1.0]);
        if p_list.is_empty() || p_list.iter().any(|&p| p < 1.0) {
            return Err(Error::config("p_list", "need one or more exponents, each ≥ 1"));
        }

        let init = parse_init(&mut t, &grid)?;

        let quarter = grid.box_length() / 4.0;
        let radii = |t: &mut Table, key: &str| -> Result<Vec<f64>> {
            let v = t.list(key)?.unwrap_or_default();
            for &r in &v {
                if !(r > 0.0 && r < quarter) {
                    return Err(Error::config(key, format!("radius {r} must lie in (0, box_length/4 = {quarter})")));
                }
            }
            Ok(v)
        };
        let diagnostics = DiagnosticsSection {
            adm_radii: radii(&mut t, "diagnostics.adm_radii")?,
            a_radii: radii(&mut t, "diagnostics.a_radii")?,
            xt: t.bool("diagnostics.xt")?.unwrap_or(false),
            xt_radii: radii(&mut t, "diagnostics.xt_radii")?,
            curvature_radius: t.f64("diagnostics.curvature_radius")?.map(|r| positive("diagnostics.curvature_radius", r)).transpose()?,
        };

        let window = match t.list("fit.window")? {
            None => None,
            Some(w) if w.len() == 2 && w[0] > 0.0 && w[1] > w[0] => Some((w[0], w[1])),
            Some(_) => return Err(Error::config("fit.window", "expected `lo, hi` with 0 < lo < hi")),
        };
        let fit = FitSection {
            window,
            expected: t.f64("fit.expected")?,
            tolerance: positive("fit.tolerance", t.f64("fit.tolerance")?.unwrap_or(0.1))?,
        };

        let harnack = HarnackSection {
            t0: t.f64("harnack.t0")?.map(|v| positive("harnack.t0", v)).transpose()?,
            probes: t.usize("harnack.probes")?.unwrap_or(20),
            seed: t.u64("harnack.seed")?.unwrap_or(0),
        };

        let output = OutputSection {
            dir: t.take("output.dir").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out")),
            snapshot_every: t.usize("output.snapshot_every")?.unwrap_or(0),
            csv_every: t.usize("output.csv_every")?.unwrap_or(1),
        };
        if output.csv_every == 0 {
            return Err(Error::config("output.csv_every", "must be at least 1"));
        }
        t.finish()?;
        Ok(Self { grid, flow, p_list, init, diagnostics, fit, harnack, output })
    }

    /// Replace the seeds of the initial data and of the probe sampler.
    pub fn override_seed(&mut self, seed: u64) {
        if let InitialData::RandomBandlimited { seed: s, .. } = &mut self.init {
            *s = seed;
        }
        self.harnack.seed = seed;
    }
}

fn parse_init(t: &mut Table, grid: &GridSpec) -> Result<InitialData> {
    let kind = t.take("init.kind").unwrap_or_else(|| "zero".into());
    let init = match kind.as_str() {
        "zero" => InitialData::Zero,
        "gaussian_bump" => {
            let pattern = match t.take("init.pattern").as_deref() {
                None | Some("diagonal") => Pattern::Diagonal,
                Some("offdiagonal") => Pattern::OffDiagonal,
                Some(v) => {
                    let vals: Vec<f64> = v
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::config("init.pattern", format!("expected diagonal, offdiagonal or a list of numbers, got `{v}`")))?;
                    if vals.len() != grid.sym_len() {
                        return Err(Error::config(
                            "init.pattern",
                            format!("expected {} component values, got {}", grid.sym_len(), vals.len()),
                        ));
                    }
                    Pattern::Components(vals)
                }
            };
            InitialData::GaussianBump {
                amplitude: t.require_f64("init.amplitude")?,
                width: positive("init.width", t.require_f64("init.width")?)?,
                pattern,
            }
        }
        "conformal2d" => InitialData::Conformal2d {
            amplitude: t.require_f64("init.amplitude")?,
            width: positive("init.width", t.require_f64("init.width")?)?,
        },
        "regularized_schwarzschild" => InitialData::RegularizedSchwarzschild {
            mass: t.require_f64("init.mass")?,
            core: positive("init.core", t.require_f64("init.core")?)?,
        },
        "random_bandlimited" => InitialData::RandomBandlimited {
            amplitude: t.require_f64("init.amplitude")?,
            cutoff: positive("init.cutoff", t.require_f64("init.cutoff")?)?,
            seed: t.u64("init.seed")?.ok_or_else(|| Error::config("init.seed", "required for randomized initial data"))?,
        },
        other => {
            return Err(Error::config(
                "init.kind",
                format!("unknown kind `{other}` (zero, gaussian_bump, conformal2d, regularized_schwarzschild, random_bandlimited)"),
            ))
        }
    };
    init.validate(grid)?;
    Ok(init)
}
