//! Run orchestration: generate → flow → diagnostics → probes, with artifacts
//! written under one output directory.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use super::config::ExperimentConfig;
use super::generate::{generate, taper_band, InitialData, Provenance};
use crate::diagnostics::{
    adm_mass, decay_fit, interpolation_check_tensor, xt_norm, DiagnosticsConfig, DiagnosticsSeries, SeriesBuilder, XtConfig,
};
use crate::error::{Error, Result};
use crate::flow::{diffeo_flow, run_flow, FlowConfig, FlowState, RunOutcome};
use crate::grid::snapshot::Snapshot;
use crate::grid::{Differentiator, GridSpec, SymTensorField, MAX_DIM};
use crate::harnack::{
    borderline_l1_check, kernel_lower_bound_check, measure_c2, rigidity_probe, write_probe_csv, Background,
    HarnackConstants, KernelConfig, Probe,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Generate,
    Evolve,
    Diagnose,
    FitDecay,
    HarnackCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Evolve => "evolve",
            Command::Diagnose => "diagnose",
            Command::FitDecay => "fit-decay",
            Command::HarnackCheck => "harnack-check",
        }
    }

    /// Trajectory-level diagnostics need the stored states.
    fn stores_states(&self) -> bool {
        matches!(self, Command::Diagnose | Command::HarnackCheck)
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "generate" => Command::Generate,
            "evolve" => Command::Evolve,
            "diagnose" => Command::Diagnose,
            "fit-decay" => Command::FitDecay,
            "harnack-check" => Command::HarnackCheck,
            _ => return Err(Error::config("command", format!("unknown command `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Ordered `key = value` entries plus a pass/fail table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
    pub checks: Vec<Check>,
}

impl Summary {
    fn set(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    fn check(&mut self, name: &str, value: f64, bound: f64, pass: bool) {
        self.checks.push(Check { name: name.into(), value, bound, pass });
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}")?;
        }
        if !self.checks.is_empty() {
            writeln!(out)?;
            writeln!(out, "# check value bound result")?;
            for c in &self.checks {
                writeln!(out, "{} {:e} {:e} {}", c.name, c.value, c.bound, if c.pass { "PASS" } else { "FAIL" })?;
            }
        }
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_provenance(p: &Provenance, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "kind = {}", p.kind)?;
    if let Some(s) = p.seed {
        writeln!(out, "seed = {s}")?;
    }
    writeln!(out, "sup_h = {}", p.sup)?;
    for (q, v) in &p.lp {
        writeln!(out, "lp_h.{q} = {v}")?;
    }
    writeln!(out, "min_R = {}", p.min_r)?;
    writeln!(out, "max_R = {}", p.max_r)?;
    writeln!(out, "min_R_core = {}", p.min_r_core)?;
    out.flush()?;
    Ok(())
}

/// Read an RDTF snapshot as a flow state.
pub fn replay(path: impl AsRef<Path>) -> Result<FlowState> {
    let snap = Snapshot::read(path)?;
    Ok(FlowState { t: snap.time, h: snap.to_field()?, step_index: 0 })
}

/// Decode `input` and write it back to `output`.
pub fn replay_to(input: impl AsRef<Path>, output: impl AsRef<Path>) -> Result<FlowState> {
    let state = replay(&input)?;
    Snapshot::from_field(&state.h, state.t).write(output)?;
    Ok(state)
}

struct Evolved {
    outcome: RunOutcome,
    series: DiagnosticsSeries,
    adm: Vec<(f64, Vec<f64>)>,
}

fn evolve(cfg: &ExperimentConfig, cmd: Command, h0: &SymTensorField, diff: &Differentiator, out: &Path) -> Result<Evolved> {
    let flow = FlowConfig { store_every: if cmd.stores_states() { cfg.output.csv_every } else { 0 }, ..cfg.flow };
    let mut builder = SeriesBuilder::new(
        cfg.grid,
        DiagnosticsConfig {
            p_list: cfg.p_list.clone(),
            radii: cfg.diagnostics.a_radii.clone(),
            every: cfg.output.csv_every,
            backend: cfg.flow.backend,
            curvature_radius: cfg.diagnostics.curvature_radius,
        },
    )?;
    let adm_radii = if cmd == Command::Diagnose && (2..=3).contains(&cfg.grid.dim()) {
        cfg.diagnostics.adm_radii.clone()
    } else {
        Vec::new()
    };
    let mut adm = Vec::new();
    let snap_every = cfg.output.snapshot_every;
    let outcome = run_flow(h0, &flow, |s| {
        builder.observe(s)?;
        if snap_every > 0 && s.step_index % snap_every == 0 {
            Snapshot::from_field(&s.h, s.t).write(out.join(format!("snap_{:06}.rdtf", s.step_index)))?;
        }
        if !adm_radii.is_empty() && s.step_index % cfg.output.csv_every == 0 {
            adm.push((s.t, adm_mass(&s.h, &adm_radii, diff)?));
        }
        Ok(())
    })?;
    let series = builder.finish(&outcome.final_state)?;
    Snapshot::from_field(&outcome.final_state.h, outcome.final_state.t).write(out.join("final.rdtf"))?;
    let mut w = create(&out.join("series.csv"))?;
    series.write_csv(&mut w)?;
    w.flush()?;
    Ok(Evolved { outcome, series, adm })
}

fn flow_checks(summary: &mut Summary, ev: &Evolved) {
    let steps = &ev.series.steps;
    let l2_0 = steps[0].l2_h;
    let ratio = steps.windows(2).filter(|w| w[0].l2_h > 0.0).map(|w| w[1].l2_h / w[0].l2_h).fold(0.0, f64::max);
    summary.check("l2_nonexpansion", ratio, 1.01, ratio <= 1.01);
    let grad = steps.last().map_or(0.0, |s| s.grad_l2_cumulative);
    summary.check("gradient_spacetime", grad, 2.0 * l2_0 * l2_0, grad <= 2.0 * l2_0 * l2_0);
}

/// Execute `cmd` and write its artifacts into `out`.
pub fn run(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    fs::create_dir_all(out)?;
    let grid = cfg.grid;
    let diff = Differentiator::new(grid, cfg.flow.backend);
    let (h0, prov) = generate(&cfg.init, grid, &cfg.p_list, &diff)?;
    Snapshot::from_field(&h0, 0.0).write(out.join("h0.rdtf"))?;
    write_provenance(&prov, &out.join("provenance.txt"))?;

    let mut s = Summary::default();
    s.set("command", cmd.name());
    s.set("init.kind", prov.kind);
    if let Some(seed) = prov.seed {
        s.set("init.seed", seed);
    }
    s.set("grid.n", grid.dim());
    s.set("grid.resolution", grid.resolution());
    s.set("grid.box_length", grid.box_length());
    s.set("h0.sup", prov.sup);
    for (p, v) in &prov.lp {
        s.set(format!("h0.lp.{p}"), v);
    }
    s.set("h0.min_R", prov.min_r);
    s.set("h0.min_R_core", prov.min_r_core);
    if cmd == Command::Generate {
        finish(&s, out)?;
        return Ok(s);
    }

    let ev = evolve(cfg, cmd, &h0, &diff, out)?;
    s.set("flow.scheme", format!("{:?}", cfg.flow.scheme).to_lowercase());
    s.set("flow.order", format!("{:?}", cfg.flow.order).to_lowercase());
    s.set("flow.dt", cfg.flow.dt(&grid));
    s.set("flow.t_end", cfg.flow.t_end);
    s.set("flow.steps", ev.outcome.steps);
    s.set("final.sup", ev.outcome.final_state.h.sup_norm());
    if let (Some(lo), Some(hi)) = (
        ev.series.records.iter().map(|r| r.min_r).reduce(f64::min),
        ev.series.records.iter().map(|r| r.max_r).reduce(f64::max),
    ) {
        s.set("series.min_R", lo);
        s.set("series.max_R", hi);
    }
    for w in &ev.outcome.warnings {
        s.set("warning", w);
    }
    flow_checks(&mut s, &ev);

    match cmd {
        Command::Generate | Command::Evolve => {}
        Command::FitDecay => fit_decay(cfg, &ev, &mut s)?,
        Command::Diagnose => diagnose(cfg, &h0, &ev, &diff, out, &mut s)?,
        Command::HarnackCheck => harnack_check(cfg, &ev, &diff, out, &mut s)?,
    }
    finish(&s, out)?;
    Ok(s)
}

fn finish(s: &Summary, out: &Path) -> Result<()> {
    let mut w = create(&out.join("summary.txt"))?;
    s.write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn fit_decay(cfg: &ExperimentConfig, ev: &Evolved, s: &mut Summary) -> Result<()> {
    let window = cfg.fit.window.unwrap_or((cfg.flow.t_end / 10.0, cfg.flow.t_end));
    let times: Vec<f64> = ev.series.steps.iter().map(|r| r.t).collect();
    let sups: Vec<f64> = ev.series.steps.iter().map(|r| r.sup_h).collect();
    let fit = decay_fit(&times, &sups, window)?;
    s.set("decay.window", format!("{}, {}", window.0, window.1));
    s.set("decay.exponent", fit.exponent);
    s.set("decay.prefactor", fit.prefactor);
    s.set("decay.r2", fit.r2);
    s.set("decay.samples", fit.samples);
    if let Some(e) = cfg.fit.expected {
        let dev = (fit.exponent - e).abs();
        s.check("decay_exponent", fit.exponent, e, dev <= cfg.fit.tolerance);
    }
    Ok(())
}

fn diagnose(
    cfg: &ExperimentConfig,
    h0: &SymTensorField,
    ev: &Evolved,
    diff: &Differentiator,
    out: &Path,
    s: &mut Summary,
) -> Result<()> {
    let states = &ev.outcome.trajectory.states;
    for &p in &cfg.p_list {
        match interpolation_check_tensor(h0, p, diff) {
            Ok(r) => s.check(&format!("interpolation_p{p}"), r.lhs, r.rhs, r.holds),
            Err(e) => s.set(format!("interpolation_p{p}"), format!("skipped: {e}")),
        }
    }
    if cfg.diagnostics.xt {
        let xcfg = XtConfig { radii: cfg.diagnostics.xt_radii.clone(), ..XtConfig::default() };
        match xt_norm(states, &xcfg, diff) {
            Ok(r) => {
                s.set("xt.sup_term", r.sup_term);
                s.set("xt.norm", r.norm);
                s.set("xt.radii", r.radii.len());
                s.set("xt.skipped", r.skipped.len());
            }
            Err(e) => s.set("xt", format!("skipped: {e}")),
        }
    }
    if !ev.adm.is_empty() {
        let mut w = csv::Writer::from_writer(create(&out.join("adm.csv"))?);
        let mut header = vec!["t".to_string()];
        header.extend(cfg.diagnostics.adm_radii.iter().map(|r| format!("r={r}")));
        w.write_record(&header)?;
        for (t, row) in &ev.adm {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        if let InitialData::RegularizedSchwarzschild { mass, core } = cfg.init {
            if cfg.grid.dim() == 3 {
                // untapered flux for comparison; the taper starts at taper_band().0
                let (lo, hi) = taper_band(&cfg.grid);
                s.set("adm.taper", format!("{lo}, {hi}"));
                for (&r, &got) in cfg.diagnostics.adm_radii.iter().zip(&ev.adm[0].1) {
                    let a2 = r * r + core * core;
                    let u = 1.0 + mass / a2.sqrt();
                    let exact = 32.0 * std::f64::consts::PI * mass * u.powi(3) * r.powi(3) / a2.powf(1.5);
                    s.set(format!("adm.truncation_rel_diff.r{r}"), (got - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
                }
            }
        }
    }
    Ok(())
}

/// Probe pairs inside the ball of radius `box_length/8`, with diffusion reach
/// below `box_length/4`.
fn sample_probes(grid: &GridSpec, t0: f64, t_last: f64, count: usize, seed: u64) -> Vec<Probe> {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let n = grid.dim();
    let rad = grid.box_length() / 8.0;
    let point = |rng: &mut Xoshiro256StarStar| loop {
        let mut p = [0.0; MAX_DIM];
        for v in p.iter_mut().take(n) {
            *v = rng.gen_range(-rad..rad);
        }
        if p[..n].iter().map(|v| v * v).sum::<f64>() <= rad * rad {
            return p;
        }
    };
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = point(&mut rng);
        let y = point(&mut rng);
        let s = rng.gen_range(t0..t_last);
        let t = rng.gen_range(s..=t_last);
        if t > s && 2.0 * (t - s).sqrt() + grid.distance(&x, &y) < grid.box_length() / 4.0 {
            out.push(Probe { x, y, s, t });
        }
    }
    out
}

fn harnack_check(cfg: &ExperimentConfig, ev: &Evolved, diff: &Differentiator, out: &Path, s: &mut Summary) -> Result<()> {
    let states = &ev.outcome.trajectory.states;
    let grid = cfg.grid;
    let p = cfg.p_list[0];
    let t0 = cfg.harnack.t0.unwrap_or(cfg.flow.t_end / 10.0);
    let decay = measure_c2(states, p, t0, diff)?;
    let eps = states.iter().filter(|st| st.t >= t0).map(|st| st.h.sup_norm()).fold(0.0, f64::max);
    let c = HarnackConstants::from_c2(decay.c2, decay.lp_norm, decay.lambda, t0, grid.dim(), eps)?;
    s.set("harnack.t0", t0);
    s.set("harnack.c2", c.c2);
    s.set("harnack.c3", c.c3);
    s.set("harnack.c4", c.c4);
    s.set("harnack.c5", c.c5);
    if let Some(f) = &decay.fit {
        s.set("harnack.curvature_exponent", f.exponent);
    }
    let bg = Background::from_diffeo(&diffeo_flow(states, t0, diff)?, p, diff)?;
    let t_last = *bg.times().last().expect("nonempty background");
    let probes = sample_probes(&grid, t0, t_last, cfg.harnack.probes, cfg.harnack.seed);
    let rep = kernel_lower_bound_check(&bg, &probes, &c, &KernelConfig::default(), diff)?;
    let mut w = create(&out.join("probes.csv"))?;
    write_probe_csv(&rep.results, grid.dim(), &mut w)?;
    w.flush()?;
    s.set("harnack.probes", probes.len());
    s.set("harnack.skipped", rep.skipped);
    s.check("kernel_violations", rep.violations as f64, 0.0, rep.violations == 0);
    s.set("harnack.min_margin", rep.min_margin);

    let rig = rigidity_probe(states, &c, diff)?;
    s.set("rigidity.c6", rig.c6);
    if let Some(sl) = rig.floor_slope {
        s.set("rigidity.floor_slope", sl);
    }
    if let Some(tc) = rig.crossing_time {
        s.set("rigidity.crossing_time", tc);
    }
    s.set("rigidity.verdict", rig.verdict);
    if grid.dim() >= 3 {
        let checkpoints: Vec<f64> = (0..4).map(|k| t0 * 10f64.powf(k as f64 / 3.0)).collect();
        let b = borderline_l1_check(states, &checkpoints, diff)?;
        for e in &b.entries {
            s.set(format!("borderline.l1_R.t{}", e.t0), e.l1_r);
            s.set(format!("borderline.c7.t{}", e.t0), e.c7);
        }
        s.set("borderline.nonincreasing", b.nonincreasing);
    }
    Ok(())
}
