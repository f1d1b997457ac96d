//! Plain-text summaries and gnuplot-ready `.dat` files for finished runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use metastab::io::CsvTable;
use serde_json::Value;

use crate::Failure;

fn read_json(dir: &Path, name: &str) -> Result<Value, Failure> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))
}

fn read_csv(dir: &Path, name: &str) -> Result<CsvTable, Failure> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok(CsvTable::parse(&text)?)
}

/// Whitespace-separated columns with a `#` header line.
fn dat(columns: &[(&str, &[f64])]) -> String {
    let mut out = format!("# {}\n", columns.iter().map(|c| c.0).collect::<Vec<_>>().join(" "));
    let n = columns.iter().map(|c| c.1.len()).min().unwrap_or(0);
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| format!("{:.17e}", c.1[i])).collect();
        out += &row.join(" ");
        out.push('\n');
    }
    out
}

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.6e}"),
        None => v.to_string(),
    }
}

struct Plots<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Plots<'_> {
    fn write(&mut self, name: &str, columns: &[(&str, &[f64])]) -> Result<(), Failure> {
        let plots = self.dir.join("plots");
        fs::create_dir_all(&plots)?;
        fs::write(plots.join(name), dat(columns))?;
        self.files.push(format!("plots/{name}"));
        Ok(())
    }
}

/// Summarize the run in `dir`; the summary is also stored as `summary.txt`.
pub fn report(dir: &Path) -> Result<String, Failure> {
    if !dir.join("manifest.json").is_file() {
        return Err(Failure::Io(format!("no manifest.json in {}", dir.display())));
    }
    let manifest = read_json(dir, "manifest.json")?;
    let workflow = manifest["workflow"].as_str().unwrap_or("unknown").to_string();
    let mut s = String::new();
    let mut plots = Plots { dir, files: Vec::new() };
    let _ = writeln!(s, "workflow   {workflow}");
    let _ = writeln!(s, "version    {}", manifest["version"].as_str().unwrap_or("?"));
    let _ = writeln!(s, "seed       {}", manifest["seed"]);
    let _ = writeln!(s, "wall time  {:.3} s", manifest["wall_time_seconds"].as_f64().unwrap_or(f64::NAN));
    if let Some(p) = manifest["config"]["potential"]["name"].as_str() {
        let _ = writeln!(s, "potential  {p}");
    }
    let _ = writeln!(s);

    match workflow.as_str() {
        "analyze" => {
            let points = read_json(dir, "critical_points.json")?;
            for c in points.as_array().into_iter().flatten() {
                let _ = writeln!(s, "critical point {} index {} value {}", c["location"], c["index"], num(&c["value"]));
            }
            if dir.join("hierarchy.json").is_file() {
                let h = read_json(dir, "hierarchy.json")?;
                if h["resolvable"].as_bool() == Some(true) {
                    let order: Vec<String> = h["hierarchy"]["minima"]
                        .as_array()
                        .into_iter()
                        .flatten()
                        .map(|m| m["location"].to_string())
                        .collect();
                    let _ = writeln!(s, "metastable order {}", order.join(" < "));
                } else {
                    let _ = writeln!(s, "hierarchy not resolvable: {}", h["reason"].as_str().unwrap_or(""));
                }
            }
        }
        "predict" => {
            if dir.join("predictions.json").is_file() {
                for r in read_json(dir, "predictions.json")?.as_array().into_iter().flatten() {
                    let _ = writeln!(
                        s,
                        "eps {}  exponent {}  prefactor {}  mean time {}  ({})",
                        num(&r["epsilon"]),
                        num(&r["exponent"]),
                        num(&r["prefactor"]),
                        num(&r["mean_time"]),
                        r["regime"].as_str().unwrap_or("")
                    );
                }
            }
            if dir.join("pitchfork_sweep.csv").is_file() {
                let t = read_csv(dir, "pitchfork_sweep.csv")?;
                let (eps, l2, c) = (t.column_f64("eps")?, t.column_f64("lambda2")?, t.column_f64("prefactor")?);
                let mut start = 0;
                let mut curve = 0;
                while start < eps.len() {
                    let end = (start..eps.len()).find(|&i| eps[i] != eps[start]).unwrap_or(eps.len());
                    let name = format!("pitchfork_prefactor_{curve}.dat");
                    curve += 1;
                    plots.write(&name, &[("lambda2", &l2[start..end]), ("prefactor", &c[start..end])])?;
                    let (k, cmin) = c[start..end]
                        .iter()
                        .enumerate()
                        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
                    let at_zero = (start..end).min_by(|&i, &j| l2[i].abs().total_cmp(&l2[j].abs())).unwrap_or(start);
                    let _ = writeln!(
                        s,
                        "pitchfork sweep eps {:.3e}: minimum prefactor {:.4e} at lambda2 {:.4e}, {:.4e} at lambda2 {:.1e} (eps^1/4 = {:.4e})",
                        eps[start],
                        cmin,
                        l2[start + k],
                        c[at_zero],
                        l2[at_zero],
                        eps[start].powf(0.25)
                    );
                    start = end;
                }
            }
        }
        "simulate" => {
            let st = read_json(dir, "hitting_stats.json")?;
            let _ = writeln!(
                s,
                "mean hitting time {} ± {}  (KS {}, censored {} of {})",
                num(&st["mean"]),
                num(&st["std_error"]),
                num(&st["ks"]),
                st["censored"],
                st["replicas"]
            );
            let t = read_csv(dir, "hitting_times.csv")?;
            let tau = t.column_f64("tau")?;
            let flag = t.column_f64("censored")?;
            let mut sorted: Vec<f64> = tau.iter().zip(&flag).filter(|(_, c)| **c == 0.0).map(|(t, _)| *t).collect();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len() as f64;
            let surv: Vec<f64> = (0..sorted.len()).map(|i| 1.0 - (i as f64 + 1.0) / n).collect();
            plots.write("survival.dat", &[("tau", &sorted), ("survival", &surv)])?;
            if dir.join("invariant_summary.json").is_file() {
                let inv = read_json(dir, "invariant_summary.json")?;
                let _ = writeln!(s, "invariant histogram L1 distance {}", num(&inv["l1_distance"]));
            }
            if dir.join("exit_summary.json").is_file() {
                let ex = read_json(dir, "exit_summary.json")?;
                let _ = writeln!(s, "exit locations: {} exits, modal angle bin {}", ex["exits"], ex["modal_bin"]);
                let h = read_csv(dir, "exit_histogram.csv")?;
                let (lo, hi, count) = (h.column_f64("theta_lo")?, h.column_f64("theta_hi")?, h.column_f64("count")?);
                let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
                plots.write("exit_angles.dat", &[("theta", &mid), ("count", &count)])?;
            }
        }
        "committor" => {
            let c = read_json(dir, "capacity.json")?;
            let _ = writeln!(s, "capacity {}  (eps {}, h {})", num(&c["capacity"]), num(&c["eps"]), num(&c["h"]));
            if !c["estimate"].is_null() {
                let _ = writeln!(s, "potential-theory mean time {}", num(&c["estimate"]["mean_time"]));
            }
            if dir.join("committor.csv").is_file() {
                let t = read_csv(dir, "committor.csv")?;
                plots.write("committor.dat", &[("x", &t.column_f64("x")?), ("h", &t.column_f64("h")?)])?;
            }
        }
        "action" => {
            let a = read_json(dir, "action.json")?;
            let _ = writeln!(
                s,
                "minimal action {} at T = {} (converged {}, at upper bracket {})",
                num(&a["action"]),
                num(&a["t_opt"]),
                a["converged"],
                a["at_upper_bracket"]
            );
            let t = read_csv(dir, "path.csv")?;
            let time = t.column_f64("t")?;
            for name in t.header.iter().filter(|h| h.starts_with('x')) {
                plots.write(&format!("path_{name}.dat"), &[("t", &time), (name, &t.column_f64(name)?)])?;
            }
            if dir.join("quasipotential.json").is_file() {
                let q = read_json(dir, "quasipotential.json")?;
                let _ = writeln!(s, "exit quasipotential {}", num(&q["value"]));
            }
        }
        "cycling" => {
            let t = read_csv(dir, "density.csv")?;
            plots.write("cycling_density.dat", &[("theta", &t.column_f64("theta")?), ("p", &t.column_f64("p")?)])?;
            let cp = &manifest["config"]["workflow"]["params"];
            let lt = cp["lyapunov"].as_f64().unwrap_or(f64::NAN) * cp["period"].as_f64().unwrap_or(f64::NAN);
            let _ = writeln!(s, "cycling density: period {lt:.6e} in theta (lambda T)");
            if dir.join("fit.json").is_file() {
                let f = read_json(dir, "fit.json")?;
                let _ = writeln!(
                    s,
                    "fit: theta0 {}  T {}  T_K {}  reduced chi2 {}  poor fit {}",
                    num(&f["params"]["theta0"]),
                    num(&f["params"]["period"]),
                    num(&f["params"]["kramers_time"]),
                    num(&f["reduced_chi2"]),
                    f["poor_fit"]
                );
            }
        }
        "spde" => {
            let r = read_json(dir, "spde.json")?;
            let _ = writeln!(s, "L {}  N {}  barrier {}", num(&r["length"]), r["sites"], num(&r["barrier"]));
            if !r["prefactor"].is_null() {
                let _ = writeln!(s, "prefactor {}", num(&r["prefactor"]));
            }
            if !r["chain_prediction"].is_null() {
                let _ = writeln!(s, "chain prediction {} at eps {}", num(&r["chain_prediction"]), num(&r["eps"]));
            }
            let mut names: Vec<String> = fs::read_dir(dir)?
                .filter_map(|e| e.ok()?.file_name().into_string().ok())
                .filter(|n| n.starts_with("state_") && n.ends_with(".csv"))
                .collect();
            names.sort();
            for name in names {
                let t = read_csv(dir, &name)?;
                plots.write(
                    &name.replace(".csv", ".dat"),
                    &[("site", &t.column_f64("site")?), ("u", &t.column_f64("u")?)],
                )?;
            }
            if dir.join("spde_mc.json").is_file() {
                let m = read_json(dir, "spde_mc.json")?;
                let _ = writeln!(
                    s,
                    "Monte Carlo mean {} ± {}, ratio to chain prediction {}",
                    num(&m["mc_mean"]),
                    num(&m["mc_std_error"]),
                    num(&m["ratio"])
                );
            }
        }
        "validate" => {
            let t = read_csv(dir, "validate.csv")?;
            let _ = writeln!(s, "{:<12} {:>14} {:>12}", "method", "mean time", "rel");
            for row in &t.rows {
                let v: f64 = row[1].parse().unwrap_or(f64::NAN);
                let r: f64 = row[2].parse().unwrap_or(f64::NAN);
                let _ = writeln!(s, "{:<12} {:>14.6e} {:>+12.4}", row[0], v, r);
            }
        }
        other => return Err(Failure::Validation(format!("unknown workflow '{other}' in manifest"))),
    }

    if !plots.files.is_empty() {
        let _ = writeln!(s);
        for f in &plots.files {
            let _ = writeln!(s, "plot data  {f}");
        }
    }
    fs::write(dir.join("summary.txt"), &s)?;
    Ok(s)
}
