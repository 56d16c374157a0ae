//! Executes a validated config and writes its artifacts.
//!
//! Everything is computed into memory first so that a failing run never
//! leaves half a directory behind.

use std::fs;
use std::path::Path;

use dynmaxent::analysis::{covariance_sweep, solve_moment_equation};
use dynmaxent::experiment::{run_case, CaseRun};
use dynmaxent::fp_solver::Horizon;
use dynmaxent::model::ModelKind;
use dynmaxent::special::beta_moments as beta;
use dynmaxent::spectral::spectral_gap;
use dynmaxent::{ModelParams, ObservableSet, QuadratureSpec, Settings, Table, Variant};
use serde_json::{json, Value};

use crate::config::{Kind, Validated};
use crate::CliError;

pub const ERRORS_FILE: &str = "errors.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Shortest text that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

struct Csv(csv::Writer<Vec<u8>>);

impl Csv {
    fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header.iter().map(|s| s.as_ref())).expect("in-memory write");
        Csv(w)
    }

    fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        self.0.write_record(cells.iter().map(|s| s.as_ref())).expect("in-memory write");
    }

    fn finish(self) -> Vec<u8> {
        self.0.into_inner().expect("in-memory flush")
    }
}

fn param_columns(p: &ModelParams) -> (Vec<&'static str>, Vec<f64>) {
    match p.kind {
        ModelKind::ScalarToy { alpha } => (vec!["alpha"], vec![alpha]),
        ModelKind::Vector { gamma, eta, mu } => (vec!["gamma", "eta", "mu"], vec![gamma, eta, mu]),
    }
}

fn param_json(p: &ModelParams) -> Value {
    let (names, values) = param_columns(p);
    let mut m = serde_json::Map::new();
    m.insert("N".into(), json!(p.population_size));
    for (n, v) in names.into_iter().zip(values) {
        m.insert(n.into(), json!(v));
    }
    Value::Object(m)
}

fn labels(set: &ObservableSet) -> Vec<String> {
    set.iter().map(|o| o.label().to_string()).collect()
}

pub fn settings(v: &Validated) -> Settings {
    let c = &v.config;
    Settings {
        grid_n: c.grid_n,
        horizon: match c.horizon {
            Some(t) => Horizon::Fixed(t),
            None => Settings::default().horizon,
        },
        fp_dt: c.fp_dt,
        fp_sample_every: c.fp_sample_every,
        closure_dt: c.closure_dt,
        closure_sample_every: c.closure_sample_every,
        convention: c.scalar_rhs_convention,
        time_scale: c.time_scale,
        ..Settings::default()
    }
}

fn settings_json(s: &Settings) -> Value {
    let horizon = match s.horizon {
        Horizon::Fixed(t) => json!({"fixed": t}),
        Horizon::Settle { tolerance, max_time } => json!({"settle": {"tolerance": tolerance, "max_time": max_time}}),
    };
    json!({
        "grid_n": s.grid_n,
        "horizon": horizon,
        "fp_dt": s.fp_dt,
        "cfl": s.cfl,
        "fp_sample_every": s.fp_sample_every,
        "closure_dt": s.closure_dt,
        "closure_sample_every": s.closure_sample_every,
        "scalar_rhs_convention": s.convention,
        "time_scale": s.time_scale,
        "quadrature": s.quadrature,
    })
}

/// Named file contents plus the kind-specific part of the manifest.
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    manifest: Value,
    failures: Vec<String>,
}

fn fp_csv(case: &CaseRun<f64>) -> Vec<u8> {
    let mut head = vec!["t".to_string()];
    head.extend(labels(&case.report));
    head.push("l1_distance".into());
    let mut w = Csv::new(&head);
    for (k, t) in case.fp.times.iter().enumerate() {
        let mut row = vec![num(*t)];
        row.extend(case.fp.moments[k].iter().map(|v| num(*v)));
        row.push(num(case.fp.l1_distance[k]));
        w.row(&row);
    }
    w.finish()
}

fn closure_csv(case: &CaseRun<f64>, variant: Variant) -> Option<Vec<u8>> {
    let traj = case.method(variant)?.trajectory.as_ref()?;
    let (names, _) = param_columns(&case.target);
    let mut head = vec!["t".to_string()];
    head.extend(names.iter().map(|s| s.to_string()));
    head.extend(labels(&case.report));
    let mut w = Csv::new(&head);
    for (k, t) in traj.times.iter().enumerate() {
        let (_, values) = param_columns(&case.target.with_natural(&traj.theta[k]));
        let mut row = vec![num(*t)];
        row.extend(values.into_iter().map(num));
        row.extend(traj.moments[k].iter().map(|v| num(*v)));
        w.row(&row);
    }
    Some(w.finish())
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Original => "original",
        Variant::Modified => "modified",
    }
}

fn compare(v: &Validated) -> Result<Artifacts, CliError> {
    let kind = v.config.kind;
    let settings = settings(v);
    let report = if kind.is_scalar() {
        ObservableSet::ln_xi()
    } else {
        Table::vector_observables()
    };
    let initial = v.initial.expect("validated");
    let cases = v
        .targets
        .iter()
        .map(|t| run_case(&initial, t, &report, kind.variants(), &settings))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Run(e.to_string()))?;

    let mut files = Vec::new();
    let mut failures = Vec::new();
    let mut case_info = Vec::new();
    for (k, case) in cases.iter().enumerate() {
        files.push((format!("case{k}_fp.csv"), fp_csv(case)));
        let mut methods = serde_json::Map::new();
        for &variant in kind.variants() {
            let name = variant_name(variant);
            let m = case.method(variant).expect("variant was run");
            match &m.errors {
                Ok(_) => {
                    let traj = m.trajectory.as_ref().expect("successful run keeps its trajectory");
                    methods.insert(name.into(), json!({"steps": traj.steps, "halvings": traj.halvings.len()}));
                }
                Err(e) => {
                    failures.push(format!("case {k}, {name}: {e}"));
                    methods.insert(name.into(), json!({"error": e.to_string()}));
                }
            }
            if let Some(bytes) = closure_csv(case, variant) {
                files.push((format!("case{k}_{name}.csv"), bytes));
            }
        }
        case_info.push(json!({
            "initial": param_json(&case.initial),
            "target": param_json(&case.target),
            "fp": {
                "dt": case.fp.dt,
                "steps": case.fp.steps,
                "end_time": case.fp.end_time(),
                "stationary_moments": case.fp.stationary_moments,
            },
            "methods": methods,
        }));
    }

    // one row per method; scalar columns are targets, vector columns moments
    let mut head = vec!["method".to_string()];
    if kind.is_scalar() {
        head.extend(v.targets.iter().map(|t| match t.kind {
            ModelKind::ScalarToy { alpha } => format!("alpha={alpha}"),
            ModelKind::Vector { .. } => unreachable!("scalar kind"),
        }));
    } else {
        head.extend(labels(&report));
    }
    let mut w = Csv::new(&head);
    for &variant in kind.variants() {
        let cells: Vec<Result<f64, ()>> = if kind.is_scalar() {
            cases
                .iter()
                .map(|c| c.method(variant).expect("run").errors.as_ref().map(|e| e[0]).map_err(|_| ()))
                .collect()
        } else {
            let m = cases[0].method(variant).expect("run");
            (0..report.dim()).map(|j| m.errors.as_ref().map(|e| e[j]).map_err(|_| ())).collect()
        };
        let mut row = vec![variant_name(variant).to_string()];
        row.extend(cells.into_iter().map(|c| c.map_or_else(|_| "NA".to_string(), num)));
        w.row(&row);
    }
    files.push((ERRORS_FILE.into(), w.finish()));

    Ok(Artifacts {
        files,
        manifest: json!({"settings": settings_json(&settings), "cases": case_info}),
        failures,
    })
}

fn sweep(v: &Validated) -> Artifacts {
    let spec = QuadratureSpec::default();
    let alphas: Vec<f64> = v
        .targets
        .iter()
        .map(|t| match t.kind {
            ModelKind::ScalarToy { alpha } => alpha,
            ModelKind::Vector { .. } => unreachable!("scalar kind"),
        })
        .collect();
    let mut w = Csv::new(&["alpha", "covariance", "closed_form"]);
    let mut failures = Vec::new();
    for p in covariance_sweep(&alphas, &spec) {
        let c = match p.covariance {
            Ok(c) => num(c),
            Err(e) => {
                failures.push(format!("alpha = {}: {e}", p.alpha));
                "NA".into()
            }
        };
        w.row(&[num(p.alpha), c, num(beta::cov_xi_ln_xi(p.alpha))]);
    }
    Artifacts {
        files: vec![("covariance_sweep.csv".into(), w.finish())],
        manifest: json!({"quadrature": spec}),
        failures,
    }
}

fn gaps(v: &Validated) -> Artifacts {
    let n = v.config.grid_n;
    let (names, _) = param_columns(&v.targets[0]);
    let mut head = vec!["N".to_string()];
    head.extend(names.iter().map(|s| s.to_string()));
    head.extend(["lambda0", "lambda1", "gap", "n_grid"].map(String::from));
    let mut w = Csv::new(&head);
    let mut failures = Vec::new();
    for p in &v.targets {
        let (_, values) = param_columns(p);
        let mut row = vec![num(p.population_size)];
        row.extend(values.into_iter().map(num));
        match spectral_gap(p, n) {
            Ok(r) => row.extend([num(r.eigenvalues[0]), num(r.eigenvalues[1]), num(r.gap), r.n_grid.to_string()]),
            Err(e) => {
                failures.push(format!("{:?}: {e}", p.kind));
                row.extend(["NA", "NA", "NA"].map(String::from));
                row.push(n.to_string());
            }
        }
        w.row(&row);
    }
    Artifacts {
        files: vec![("spectral_gap.csv".into(), w.finish())],
        manifest: json!({"n_grid": n}),
        failures,
    }
}

fn moment_match(v: &Validated) -> Artifacts {
    let spec = QuadratureSpec::default();
    let tol = 1e-12;
    let mut w = Csv::new(&["mean_ln_xi", "alpha"]);
    let mut failures = Vec::new();
    for &m in &v.config.moments {
        let a = match solve_moment_equation(m, tol, &spec) {
            Ok(a) => num(a),
            Err(e) => {
                failures.push(format!("{m}: {e}"));
                "NA".into()
            }
        };
        w.row(&[num(m), a]);
    }
    Artifacts {
        files: vec![("moment_match.csv".into(), w.finish())],
        manifest: json!({"tolerance": tol, "quadrature": spec}),
        failures,
    }
}

/// Runs the experiment and writes every artifact plus the manifest.
pub fn run(v: &Validated) -> Result<Vec<String>, CliError> {
    let art = match v.config.kind {
        Kind::CovarianceSweep => sweep(v),
        Kind::SpectralGap => gaps(v),
        Kind::MomentMatch => moment_match(v),
        _ => compare(v)?,
    };
    let mut names: Vec<String> = art.files.iter().map(|(n, _)| n.clone()).collect();
    names.push(MANIFEST_FILE.into());
    let manifest = json!({
        "program": concat!("dynmaxent ", env!("CARGO_PKG_VERSION")),
        "config": v.config,
        "table": v.table.map(Table::number),
        "run": art.manifest,
        "failures": art.failures,
        "files": names,
    });
    write_all(&v.out_dir, &art.files, &manifest)?;
    Ok(art.failures)
}

fn write_all(dir: &Path, files: &[(String, Vec<u8>)], manifest: &Value) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes).map_err(io)?;
    }
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text).map_err(io)
}
