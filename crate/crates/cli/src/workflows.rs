use std::fs;
use std::path::Path;

use metastab::action::{gradient_decomposition, minimize_action_potential, quasipotential_exit};
use metastab::cycling::{density_csv, fit_cycling, sample_exit_angles, AngleHistogram};
use metastab::fieldsolver::{
    capacity_from_field, committor_grid, generator_spectrum_1d, mean_time_potential_theory, Region,
};
use metastab::io::{fmt_f64, write_json, CsvTable};
use metastab::landscape::{
    classify, critical_points_csv, find_critical_points, metastable_order, transition_spec, BoxDomain,
    FloodingConfig,
};
use metastab::rate::{eyring_kramers, pitchfork_prefactor};
use metastab::sde::{
    ball_target_oracle_1d, exit_location_histogram, invariant_histogram, replica_rng, sample_hitting_times,
    simulate_em, GradientDrift, HistogramBox, HittingStats, SimConfig, Target,
};
use metastab::spde::{
    chain_prediction, discretize_allen_cahn, linearization_spectrum, spde_mc_validation, spde_prefactor,
    spde_prefactor_bifurcation, stationary_states, Boundary, SpdeMcSettings,
};
use metastab::{make_builtin, Potential, SharedPotential};
use serde::Serialize;
use serde_json::json;

use crate::config::{self, RunConfig, Workflow};
use crate::Failure;

/// Files written so far, relative to the output directory.
struct Sink<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Sink<'_> {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        write_json(&self.dir.join(name), value)?;
        self.written.push(name.into());
        Ok(())
    }

    fn csv(&mut self, name: &str, table: &CsvTable) -> Result<(), Failure> {
        table.write(&self.dir.join(name))?;
        self.written.push(name.into());
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), Failure> {
        fs::write(self.dir.join(name), text)?;
        self.written.push(name.into());
        Ok(())
    }

    /// Binary array plus its `.json` sidecar.
    fn binary(&mut self, name: &str, write: impl FnOnce(&Path) -> metastab::Result<()>) -> Result<(), Failure> {
        write(&self.dir.join(name))?;
        self.written.push(name.into());
        self.written.push(format!("{name}.json"));
        Ok(())
    }
}

pub fn execute(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>, Failure> {
    let mut sink = Sink { dir, written: Vec::new() };
    let potential = cfg.potential.as_ref().map(make_builtin).transpose()?;
    let p = || potential.clone().expect("checked by RunConfig::validate");
    match &cfg.workflow {
        Workflow::Analyze(w) => analyze(&p(), w, &mut sink)?,
        Workflow::Predict(w) => predict(&p(), w, &mut sink)?,
        Workflow::Simulate(w) => simulate(&p(), w, cfg.seed, &mut sink)?,
        Workflow::Committor(w) => committor(&p(), w, &mut sink)?,
        Workflow::Action(w) => action(&p(), w, &mut sink)?,
        Workflow::Cycling(w) => cycling(w, cfg.seed, &mut sink)?,
        Workflow::Spde(w) => spde(w, cfg.seed, &mut sink)?,
        Workflow::Validate(w) => validate(&p(), w, cfg.seed, &mut sink)?,
    }
    Ok(sink.written)
}

fn checked_box(b: &BoxDomain) -> Result<BoxDomain, Failure> {
    Ok(BoxDomain::new(b.lower.clone(), b.upper.clone())?)
}

fn analyze(p: &SharedPotential, w: &config::Analyze, sink: &mut Sink) -> Result<(), Failure> {
    let domain = checked_box(&w.domain)?;
    let points = find_critical_points(p.as_ref(), &domain, w.seeds_per_axis)?;
    sink.text("critical_points.csv", &critical_points_csv(&points))?;
    sink.json("critical_points.json", &points)?;
    if let Some(theta) = w.theta {
        let minima: Vec<_> = points.iter().filter(|c| c.is_minimum()).cloned().collect();
        let flooding = FloodingConfig { cells_per_axis: w.flooding_cells, domain: Some(domain) };
        // An unresolvable ordering is a finding about the landscape, not a
        // failed run.
        let record = match metastable_order(&minima, p.as_ref(), theta, &flooding) {
            Ok(h) => json!({ "resolvable": true, "hierarchy": h }),
            Err(e @ metastab::Error::HierarchyNotResolvable { .. }) => {
                json!({ "resolvable": false, "theta": theta, "reason": e.to_string() })
            }
            Err(e) => return Err(e.into()),
        };
        sink.json("hierarchy.json", &record)?;
    }
    Ok(())
}

fn predict(p: &SharedPotential, w: &config::Predict, sink: &mut Sink) -> Result<(), Failure> {
    if w.eps.is_empty() {
        return Err(Failure::Validation("predict needs at least one eps".into()));
    }
    match (&w.start, &w.target) {
        (Some(start), Some(target)) => {
            let spec = transition_spec(p.as_ref(), start, target, w.target_radius, &FloodingConfig::default())?;
            let mut records = Vec::new();
            for &eps in &w.eps {
                let k = eyring_kramers(&spec, eps)?;
                records.push(json!({
                    "exponent": k.exponent,
                    "prefactor": k.prefactor,
                    "regime": k.regime,
                    "epsilon": k.epsilon,
                    "error_order": k.error_order,
                    "mean_time": k.mean_time(),
                }));
            }
            sink.json("transition.json", &spec)?;
            sink.json("predictions.json", &records)?;
        }
        (None, None) if w.pitchfork.is_some() => {}
        _ => return Err(Failure::Validation("predict needs both start and target".into())),
    }
    if let Some(sweep) = &w.pitchfork {
        if sweep.points < 2 || !(sweep.lambda2_max > sweep.lambda2_min) {
            return Err(Failure::Validation("pitchfork sweep needs points >= 2 and a nonempty range".into()));
        }
        let mut t = CsvTable::new(["eps", "lambda2", "prefactor"]);
        for &eps in &w.eps {
            for i in 0..sweep.points {
                let l2 = sweep.lambda2_min
                    + (sweep.lambda2_max - sweep.lambda2_min) * i as f64 / (sweep.points - 1) as f64;
                let mut s = sweep.saddle.clone();
                s.lambda2 = l2;
                let c = pitchfork_prefactor(&s, eps)?;
                t.push_numbers(&[eps, l2, c.prefactor]);
            }
        }
        sink.csv("pitchfork_sweep.csv", &t)?;
    }
    Ok(())
}

/// Hitting-time statistics without the sample array.
#[derive(Serialize)]
struct StatsSummary {
    replicas: usize,
    uncensored: usize,
    censored: usize,
    aborted: usize,
    max_time: f64,
    mean: f64,
    std_error: f64,
    ks: f64,
    censored_fraction: f64,
    valid: bool,
}

impl From<&HittingStats> for StatsSummary {
    fn from(s: &HittingStats) -> Self {
        StatsSummary {
            replicas: s.replicas,
            uncensored: s.samples.len(),
            censored: s.censored,
            aborted: s.aborted,
            max_time: s.max_time,
            mean: s.mean,
            std_error: s.std_error,
            ks: s.ks,
            censored_fraction: s.censored_fraction,
            valid: s.valid,
        }
    }
}

fn simulate(p: &SharedPotential, w: &config::Simulate, seed: u64, sink: &mut Sink) -> Result<(), Failure> {
    let cfg = SimConfig::new(w.eps, w.dt, w.max_time, w.target.clone(), seed, w.replicas);
    cfg.validate()?;
    let stats = sample_hitting_times(p.as_ref(), &w.x0, &cfg)?;
    sink.csv("hitting_times.csv", &stats.to_csv())?;
    sink.json("hitting_stats.json", &StatsSummary::from(&stats))?;
    if w.trajectory {
        let traj = simulate_em(p.as_ref(), &w.x0, &cfg)?;
        sink.binary("trajectory.f64", |path| traj.write_binary(path))?;
    }
    if let Some(inv) = &w.invariant {
        let support = HistogramBox { lower: inv.lower.clone(), upper: inv.upper.clone(), periodic: false };
        let h = invariant_histogram(p.as_ref(), &w.x0, w.eps, w.dt, inv.burn_in, inv.total_time, seed, &support, inv.bins)?;
        sink.csv("invariant_histogram.csv", &h.to_csv())?;
        sink.json(
            "invariant_summary.json",
            &json!({ "l1_distance": h.l1, "samples": h.samples, "resolution_warning": h.resolution_warning }),
        )?;
    }
    if let Some(exit) = &w.exit {
        let x0: [f64; 2] = w
            .x0
            .as_slice()
            .try_into()
            .map_err(|_| Failure::Validation("exit histograms need a planar start point".into()))?;
        let h = exit_location_histogram(
            &GradientDrift(p.as_ref()),
            &exit.domain,
            x0,
            w.eps,
            w.dt,
            w.max_time,
            seed,
            w.replicas,
            exit.bins,
        )?;
        sink.csv("exit_histogram.csv", &h.to_csv())?;
        let modal = h.modal_bin();
        sink.json(
            "exit_summary.json",
            &json!({
                "exits": h.exit_times.len(),
                "censored": h.censored,
                "aborted": h.aborted,
                "modal_bin": [h.edges[modal], h.edges[modal + 1]],
            }),
        )?;
    }
    Ok(())
}

fn committor(p: &SharedPotential, w: &config::Committor, sink: &mut Sink) -> Result<(), Failure> {
    let domain = checked_box(&w.domain)?;
    let field = committor_grid(p.as_ref(), &domain, &w.a, &w.b, w.eps, w.h)?;
    let cap = capacity_from_field(&field, p.as_ref())?;
    sink.binary("committor.f64", |path| field.write_binary(path))?;
    if field.dim() == 1 {
        let mut t = CsvTable::new(["x", "h"]);
        for (i, v) in field.values.iter().enumerate() {
            t.push_numbers(&[field.coords(i)[0], *v]);
        }
        sink.csv("committor.csv", &t)?;
    }
    let estimate = match &w.minimum {
        Some(m) => Some(mean_time_potential_theory(p.as_ref(), &classify(p.as_ref(), m), &field)?),
        None => None,
    };
    sink.json(
        "capacity.json",
        &json!({ "capacity": cap, "eps": w.eps, "h": w.h, "residual": field.residual, "estimate": estimate }),
    )
}

fn action(p: &SharedPotential, w: &config::Action, sink: &mut Sink) -> Result<(), Failure> {
    let opts = w.options.unwrap_or_default();
    let res = minimize_action_potential(p.as_ref(), &w.start, &w.end, &opts)?;
    let dec = gradient_decomposition(&res.path, p.as_ref())?;
    sink.csv("path.csv", &res.path.to_csv())?;
    sink.json(
        "action.json",
        &json!({
            "action": res.action,
            "t_opt": res.t_opt,
            "converged": res.converged,
            "at_upper_bracket": res.at_upper_bracket,
            "decomposition": dec,
        }),
    )?;
    sink.json("trace.json", &res.trace)?;
    if let Some(boundary) = &w.exit_boundary {
        sink.json("quasipotential.json", &quasipotential_exit(p.as_ref(), &w.start, boundary)?)?;
    }
    Ok(())
}

fn cycling(w: &config::Cycling, seed: u64, sink: &mut Sink) -> Result<(), Failure> {
    let cp = w.params;
    sink.csv("density.csv", &density_csv(&cp, w.theta_max, w.points)?)?;
    if let Some(n) = w.samples {
        let bins = w.bins.unwrap_or(200);
        let mut rng = replica_rng(seed, 0);
        let angles = sample_exit_angles(&cp, n, &mut rng)?;
        let hist = AngleHistogram::from_samples(&angles, cp.theta0, w.theta_max, bins)?;
        let mut t = CsvTable::new(["theta_lo", "theta_hi", "count"]);
        for i in 0..hist.counts.len() {
            t.push_raw(vec![fmt_f64(hist.edges[i]), fmt_f64(hist.edges[i + 1]), hist.counts[i].to_string()]);
        }
        sink.csv("histogram.csv", &t)?;
        sink.json("fit.json", &fit_cycling(&hist, &cp)?)?;
    }
    Ok(())
}

fn spde(w: &config::Spde, seed: u64, sink: &mut Sink) -> Result<(), Failure> {
    let cp = discretize_allen_cahn(w.length, w.sites, w.boundary)?;
    let states = stationary_states(&cp)?;
    let mut spectra = serde_json::Map::new();
    for s in std::iter::once(&states.minus).chain(&states.saddles).chain(std::iter::once(&states.plus)) {
        sink.csv(&format!("state_{}.csv", s.label), &s.to_csv())?;
        let m = w.modes.min(cp.sites);
        spectra.insert(s.label.clone(), json!(linearization_spectrum(&cp, &s.u, m)?));
    }
    sink.json("spectra.json", &spectra)?;

    let neumann = w.boundary == Boundary::Neumann;
    let below = w.length < std::f64::consts::PI;
    let mut record = json!({
        "length": w.length,
        "sites": w.sites,
        "barrier": states.barrier(),
        "prefactor": if neumann && below { Some(spde_prefactor(w.length, w.boundary)?) } else { None },
    });
    if let Some(eps) = w.eps {
        let (chain_time, _) = chain_prediction(&cp, eps)?;
        record["eps"] = json!(eps);
        record["chain_prediction"] = json!(chain_time);
        if neumann && w.length <= std::f64::consts::PI {
            record["prefactor_bifurcation"] = json!(spde_prefactor_bifurcation(w.length, eps)?);
        }
    }
    sink.json("spde.json", &record)?;

    if let Some(mc) = &w.monte_carlo {
        let eps = w.eps.ok_or_else(|| Failure::Validation("spde Monte Carlo needs eps".into()))?;
        if !neumann {
            return Err(Failure::Validation("spde Monte Carlo uses Neumann boundaries".into()));
        }
        let settings = SpdeMcSettings {
            dt: mc.dt,
            max_time: mc.max_time,
            replicas: mc.replicas,
            seed,
            target_l2_radius: mc.target_l2_radius,
        };
        sink.json("spde_mc.json", &spde_mc_validation(w.length, w.sites, eps, &settings)?)?;
    }
    Ok(())
}

/// Interval around both points on which `V` rises `20ε` above `height`.
fn reflecting_box(p: &dyn Potential, a: f64, b: f64, height: f64, eps: f64) -> Result<(f64, f64), Failure> {
    let level = height + 20.0 * eps;
    let v = |x: f64| p.value(&[x]);
    let walk = |from: f64, dir: f64| -> Result<f64, Failure> {
        let mut x = from;
        let mut step = 0.01;
        for _ in 0..200 {
            if v(x) >= level {
                return Ok(x);
            }
            x += dir * step;
            step *= 1.1;
        }
        Err(Failure::Validation("potential does not confine: no reflecting boundary found".into()))
    };
    Ok((walk(a.min(b), -1.0)?, walk(a.max(b), 1.0)?))
}

fn validate(p: &SharedPotential, w: &config::Validate, seed: u64, sink: &mut Sink) -> Result<(), Failure> {
    if p.dim() != 1 {
        return Err(Failure::Validation("validate compares one-dimensional oracles".into()));
    }
    let spec = transition_spec(p.as_ref(), &[w.start], &[w.target], w.target_radius, &FloodingConfig::default())?;
    let (x0, y) = (spec.start.location[0], spec.target.location[0]);
    let kramers = eyring_kramers(&spec, w.eps)?.mean_time();
    let quadrature = ball_target_oracle_1d(p.as_ref(), x0, y, w.target_radius, w.eps)?;

    let target = Target { center: vec![y], radius: w.target_radius };
    let cfg = SimConfig::new(w.eps, w.dt, 50.0 * kramers, target, seed, w.replicas);
    cfg.validate()?;
    let mc = sample_hitting_times(p.as_ref(), &[x0], &cfg)?;

    // Grid: small ball at the start, half-line beyond the near edge of the
    // target, reflecting ends where V is 20ε above the saddle.
    let (lo, hi) = reflecting_box(p.as_ref(), x0, y, spec.height, w.eps)?;
    let edge = if y > x0 { y - w.target_radius } else { y + w.target_radius };
    let a = if y > x0 { Region::Above { axis: 0, value: edge } } else { Region::Below { axis: 0, value: edge } };
    let c = Region::Ball { center: vec![x0], radius: w.target_radius };
    let field = committor_grid(p.as_ref(), &BoxDomain::new(vec![lo], vec![hi])?, &c, &a, w.eps, w.h)?;
    let grid = mean_time_potential_theory(p.as_ref(), &spec.start, &field)?;

    let spectrum = generator_spectrum_1d(p.as_ref(), w.eps, lo, hi, 401, 2)?;
    let lambda1 = spectrum.generator[1].abs();

    let mut t = CsvTable::new(["method", "mean_time", "rel_to_quadrature"]);
    let mut row = |name: &str, v: f64| {
        t.push_raw(vec![name.into(), fmt_f64(v), fmt_f64(v / quadrature - 1.0)]);
    };
    row("quadrature", quadrature);
    row("monte_carlo", mc.mean);
    row("grid", grid.mean_time);
    row("kramers", kramers);
    sink.csv("validate.csv", &t)?;
    sink.json(
        "validate.json",
        &json!({
            "eps": w.eps,
            "start": x0,
            "target": y,
            "barrier": spec.barrier,
            "quadrature": quadrature,
            "monte_carlo": StatsSummary::from(&mc),
            "mc_z_score": (mc.mean - quadrature) / mc.std_error,
            "grid": grid,
            "kramers": kramers,
            "lambda1": lambda1,
            "lambda1_times_quadrature": lambda1 * quadrature,
        }),
    )
}
