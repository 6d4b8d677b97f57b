use std::fs;
use std::path::{Path, PathBuf};

use linflow_core::acpf::{solve_acpf, InjectionSpec, SolveOptions};
use linflow_core::cases;
use linflow_core::evaluation::{
    collinearity_contrast, evaluate_all, matrix_csv, matrix_similarity, surface_csv, two_bus_surface, EvalConfig,
};
use linflow_core::mapping::{fit_branch, fit_forward, fit_inverse, partition_inverse, MappingModel, ModelKind};
use linflow_core::network::{build_admittance, bus_ordering, load_case, NetworkCase};
use linflow_core::regression::{Engine, EngineConfig};
use linflow_core::scenario::{
    daily_profiles, generate_mc, generate_profiles, read_profiles, sidecar_path, split, McConfig, ProfileConfig,
    SnapshotDataset,
};
use serde_json::{json, Value};

use crate::config::{self, FileConfig, GenFlags, GenMode, RunConfig};
use crate::{Cli, CliError, Command};

const VERSION: &str = env!("CARGO_PKG_VERSION");

const A22_HINT: &str = "the regulated-bus block of the inverse model (how Q at PV and slack buses moves their \
voltages) cannot be inverted, so the unknown voltages are not identifiable from this data. Regenerate with \
varying voltage setpoints (gen.v_setpoint_jitter > 0) or fit a forward model instead";

struct Ctx<'a> {
    cli: &'a Cli,
    file: FileConfig,
    seed: u64,
}

impl Ctx<'_> {
    fn say(&self, text: impl AsRef<str>) {
        if !self.cli.quiet {
            println!("{}", text.as_ref());
        }
    }

    fn out_path(&self, name: &str) -> Result<PathBuf, CliError> {
        let dir = &self.cli.out;
        fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir.join(name))
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => config::read_file(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let ctx = Ctx { cli, file, seed };
    match &cli.command {
        Command::Inspect { case } => inspect(&ctx, case),
        Command::Gen {
            case,
            mode,
            n,
            split,
            profiles,
            amplitude,
            noise_sigma,
            name,
        } => {
            let flags = GenFlags {
                mode: *mode,
                n: *n,
                split: *split,
                profiles: profiles.clone(),
                amplitude: *amplitude,
                noise_sigma: *noise_sigma,
            };
            gen(&ctx, case, &flags, name.as_deref())
        }
        Command::Fit {
            dataset,
            case,
            kind,
            engine,
            components,
            branch_input,
            name,
        } => {
            let settings = config::resolve_fit(
                kind.map(Into::into),
                engine.map(Into::into),
                branch_input.map(Into::into),
                &ctx.file.fit,
            );
            fit(&ctx, dataset, case.as_deref(), settings, *components, name.as_deref())
        }
        Command::Eval {
            case,
            train,
            test,
            engines,
            contrast,
            branch_input,
        } => {
            let settings = config::resolve_eval(
                engines.as_ref().map(|v| v.iter().map(|&e| e.into()).collect()),
                *contrast,
                branch_input.map(Into::into),
                &ctx.file.eval,
            )?;
            eval(&ctx, case, train, test, settings)
        }
        Command::Surface {
            case,
            p_range,
            q_range,
            grid,
        } => {
            let settings = config::resolve_surface(*p_range, *q_range, *grid, &ctx.file.surface)?;
            surface(&ctx, case, settings)
        }
        Command::Similarity { model, case } => similarity(&ctx, model, case),
    }
}

/// A case file path, or the name of a bundled case.
fn resolve_case(arg: &str) -> Result<NetworkCase, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        return Ok(load_case(path)?);
    }
    if cases::json(arg).is_some() {
        return Ok(cases::load(arg)?);
    }
    let names: Vec<&str> = cases::names().collect();
    Err(CliError::usage(format!(
        "{arg:?} is neither a case file nor a bundled case ({})",
        names.join(", ")
    )))
}

fn case_stem(arg: &str) -> String {
    Path::new(arg)
        .file_stem()
        .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned())
}

fn load_dataset(path: &Path) -> Result<SnapshotDataset, CliError> {
    if !path.is_file() {
        return Err(CliError::usage(format!("dataset {} does not exist", path.display())));
    }
    Ok(SnapshotDataset::load(path)?)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    write(path, &(serde_json::to_string_pretty(value).expect("JSON value serializes") + "\n"))
}

/// Adds the run settings and tool version to a JSON object.
fn stamp(mut value: Value, run: &RunConfig) -> Value {
    if let Value::Object(map) = &mut value {
        map.insert("run_config".into(), run.to_json());
        map.insert("version".into(), Value::String(VERSION.into()));
    }
    value
}

fn text_header(run: &RunConfig) -> String {
    format!(
        "# linflow {VERSION}\n# run_config {}\n",
        serde_json::to_string(&run.to_json()).expect("JSON value serializes")
    )
}

fn inspect(ctx: &Ctx, arg: &str) -> Result<(), CliError> {
    let case = resolve_case(arg)?;
    let adm = build_admittance(&case);
    let ord = bus_ordering(&case);
    let (pq, pv, _) = ord.block_sizes();
    let ids = |idx: &[usize]| idx.iter().map(|&k| case.buses[k].id.to_string()).collect::<Vec<_>>().join(" ");
    let mut lines = vec![
        format!("case {arg}: base {} MVA", case.base_mva),
        format!(
            "{} buses ({pq} PQ, {pv} PV, slack {}), {} in-service branches of {}, {} generators",
            case.n_buses(),
            case.buses[ord.slack()].id,
            case.n_flows(),
            case.branches.len(),
            case.generators.len()
        ),
        format!("block order: PQ [{}] PV [{}] slack [{}]", ids(ord.pq()), ids(ord.pv()), ids(&[ord.slack()])),
    ];
    match solve_acpf(&case, &adm, &InjectionSpec::nominal(&case), &SolveOptions::default()) {
        Ok(sol) => {
            let vmin = sol.point.v.iter().copied().fold(f64::INFINITY, f64::min);
            let vmax = sol.point.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            lines.push(format!(
                "nominal power flow: {} iterations, mismatch {:.2e} p.u., V in [{vmin:.4}, {vmax:.4}] p.u.",
                sol.iterations, sol.mismatch
            ));
        }
        Err(e) => lines.push(format!("nominal power flow failed: {e}")),
    }
    ctx.say(lines.join("\n"));
    Ok(())
}

fn gen(ctx: &Ctx, arg: &str, flags: &GenFlags, name: Option<&str>) -> Result<(), CliError> {
    let settings = config::resolve_gen(flags, &ctx.file.gen)?;
    let case = resolve_case(arg)?;
    let adm = build_admittance(&case);
    let mut ds = match settings.mode {
        GenMode::Mc => {
            let cfg = McConfig {
                n_samples: settings.n,
                p_factor_range: settings.p_factor_range.expect("set for mc"),
                q_ratio_range: settings.q_ratio_range,
                v_setpoint_jitter: settings.v_setpoint_jitter,
                seed: ctx.seed,
            };
            generate_mc(&case, &adm, &cfg)?
        }
        GenMode::Profiles => {
            let profiles = match &settings.profiles {
                Some(path) => {
                    let rows = read_profiles(path, &case)?;
                    if rows.len() < settings.n {
                        return Err(CliError::usage(format!(
                            "profile file has {} rows, {} snapshots requested",
                            rows.len(),
                            settings.n
                        )));
                    }
                    rows[..settings.n].to_vec()
                }
                None => daily_profiles(&case, settings.n, settings.amplitude.expect("set without a file"), ctx.seed),
            };
            let cfg = ProfileConfig {
                profiles,
                noise_sigma: settings.noise_sigma.expect("set for profiles"),
                scale: settings.scale.expect("set for profiles"),
                q_ratio_range: settings.q_ratio_range,
                v_setpoint_jitter: settings.v_setpoint_jitter,
                seed: ctx.seed,
            };
            generate_profiles(&case, &adm, &cfg)?
        }
    };
    ds.case_ref = arg.to_string();
    let mode = match settings.mode {
        GenMode::Mc => "mc",
        GenMode::Profiles => "profiles",
    };
    let stem = name.map_or_else(|| format!("{}_{mode}", case_stem(arg)), str::to_string);
    let mut run = RunConfig::new("gen", ctx.seed).input("case", arg).input("name", &stem);
    run.gen = Some(settings.clone());

    let outputs: Vec<(PathBuf, SnapshotDataset)> = match settings.split {
        None => vec![(ctx.out_path(&format!("{stem}.csv"))?, ds.clone())],
        Some([n_train, n_test]) => {
            let (train, test) = split(&ds, n_train, n_test, ctx.seed)?;
            vec![
                (ctx.out_path(&format!("{stem}_train.csv"))?, train),
                (ctx.out_path(&format!("{stem}_test.csv"))?, test),
            ]
        }
    };
    for (path, part) in &outputs {
        part.save(path)?;
        let meta_path = sidecar_path(path);
        let text = fs::read_to_string(&meta_path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", meta_path.display())))?;
        let sidecar: Value = serde_json::from_str(&text).map_err(|e| CliError::usage(e.to_string()))?;
        write_json(&meta_path, &stamp(sidecar, &run))?;
    }
    let m = &ds.meta;
    ctx.say(format!(
        "{} snapshots of {arg} ({mode}), {} draws discarded, ACPF tolerance {:e}, worst mismatch {:.2e} p.u.",
        ds.n_rows(),
        m.discarded,
        m.acpf_tol,
        m.max_mismatch
    ));
    for (path, part) in &outputs {
        ctx.say(format!("wrote {} ({} rows)", path.display(), part.n_rows()));
    }
    Ok(())
}

fn kind_str(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Forward => "forward",
        ModelKind::Inverse => "inverse",
        ModelKind::Branch => "branch",
    }
}

fn fit(
    ctx: &Ctx,
    dataset: &Path,
    case_arg: Option<&str>,
    settings: config::FitSettings,
    components: Option<usize>,
    name: Option<&str>,
) -> Result<(), CliError> {
    let ds = load_dataset(dataset)?;
    let case_arg = match case_arg {
        Some(c) => c.to_string(),
        None if !ds.case_ref.is_empty() => ds.case_ref.clone(),
        None => return Err(CliError::usage("the dataset has no case reference; pass --case")),
    };
    let case = resolve_case(&case_arg)?;
    ds.check_case(&case)?;

    let mut engines = ctx.file.engines.clone();
    if let Some(p) = components {
        if settings.engine != Engine::Pls {
            return Err(CliError::usage("--components applies to the pls engine only"));
        }
        let mut pls = engines.pls.unwrap_or_default();
        pls.components = Some(p);
        engines.pls = Some(pls);
    }
    let engine = engines.config(settings.engine);

    let model = match settings.kind {
        ModelKind::Forward => MappingModel::Forward(fit_forward(&ds, &case, &engine)?),
        ModelKind::Branch => MappingModel::Branch(fit_branch(
            &ds,
            &case,
            &engine,
            settings.branch_input.unwrap_or_default(),
        )?),
        ModelKind::Inverse => {
            let inv = fit_inverse(&ds, &case, &engine).map_err(|e| match e {
                linflow_core::Error::DegenerateData(msg) => CliError::numerical(format!("degenerate data: {msg}")),
                other => other.into(),
            })?;
            let part = partition_inverse(&inv)?;
            if !(part.cond_a22 < settings.cond_threshold) {
                return Err(CliError::numerical(format!(
                    "cond(A22) = {:.3e} exceeds {:.1e}: {A22_HINT}",
                    part.cond_a22, settings.cond_threshold
                )));
            }
            MappingModel::Inverse(inv)
        }
    };

    let engine_name = settings.engine.as_str();
    let stem = name.map_or_else(|| format!("{}_{engine_name}", kind_str(settings.kind)), str::to_string);
    let mut run = RunConfig::new("fit", ctx.seed)
        .input("dataset", dataset.display().to_string())
        .input("case", &case_arg)
        .input("name", &stem);
    run.engines = Some(engines.resolved(&[settings.engine]));
    run.fit = Some(settings);
    let path = ctx.out_path(&format!("{stem}.json"))?;
    write_json(&path, &stamp(model.to_json_value()?, &run))?;

    let lin = model.linear();
    let mut summary = format!(
        "{} model, {}: {} outputs × {} inputs",
        kind_str(model.kind()),
        engine_name.to_uppercase(),
        lin.a.nrows(),
        lin.a.ncols()
    );
    if let EngineConfig::Pls(_) = engine {
        if let Some(p) = lin.fit_meta.pls.as_ref().map(|m| m.components) {
            summary.push_str(&format!(", {p} components"));
        }
    }
    if let Some(b) = &lin.fit_meta.blr {
        summary.push_str(&format!(", {} coefficients pruned", b.pruned));
    }
    if let Some(o) = &lin.fit_meta.ols {
        summary.push_str(&format!(", rank {}, cond {:.3e}", o.rank, o.condition_number));
    }
    if let Some(c) = model.to_export().cond_a22 {
        summary.push_str(&format!(", cond(A22) {c:.3e}"));
    }
    ctx.say(summary);
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

fn eval(ctx: &Ctx, case_arg: &str, train: &Path, test: &Path, settings: config::EvalSettings) -> Result<(), CliError> {
    let case = resolve_case(case_arg)?;
    let adm = build_admittance(&case);
    let mut train_ds = load_dataset(train)?;
    let test_ds = load_dataset(test)?;
    train_ds.case_ref = case_arg.to_string();
    let engines: Vec<EngineConfig> = settings.engines.iter().map(|&e| ctx.file.engines.config(e)).collect();
    let cfg = EvalConfig {
        mape_eps: settings.mape_eps,
        branch_input: settings.branch_input,
        cond_threshold: settings.cond_threshold,
    };
    let report = evaluate_all(&case, &adm, &train_ds, &test_ds, &engines, &cfg)?;
    let contrast = if settings.contrast {
        Some(collinearity_contrast(&case, &train_ds, &test_ds, &engines, &cfg)?)
    } else {
        None
    };

    let mut run = RunConfig::new("eval", ctx.seed)
        .input("case", case_arg)
        .input("train", train.display().to_string())
        .input("test", test.display().to_string());
    run.engines = Some(ctx.file.engines.resolved(&settings.engines));
    run.eval = Some(settings);
    let header = text_header(&run);
    let text = ctx.out_path("report.txt")?;
    let js = ctx.out_path("report.json")?;
    write(&text, &format!("{header}{}", report.to_text()))?;
    write_json(&js, &stamp(serde_json::to_value(&report).expect("report serializes"), &run))?;
    ctx.say(report.to_text());
    ctx.say(format!("wrote {} and {}", text.display(), js.display()));
    if let Some(c) = contrast {
        let text = ctx.out_path("collinearity.txt")?;
        let js = ctx.out_path("collinearity.json")?;
        write(&text, &format!("{header}{}", c.to_text()))?;
        write_json(&js, &stamp(serde_json::to_value(&c).expect("report serializes"), &run))?;
        ctx.say(c.to_text());
        ctx.say(format!("wrote {} and {}", text.display(), js.display()));
    }
    Ok(())
}

fn surface(ctx: &Ctx, case_arg: &str, settings: config::SurfaceSettings) -> Result<(), CliError> {
    let case = resolve_case(case_arg)?;
    let adm = build_admittance(&case);
    let points = two_bus_surface(&case, &adm, settings.p_range, settings.q_range, settings.grid)?;
    let worst = |f: fn(&linflow_core::evaluation::SurfacePoint) -> f64| {
        points
            .iter()
            .filter_map(|s| s.acpf.map(|a| (f(s) - a).abs()))
            .fold(0.0, f64::max)
    };
    let (dlpf, dcpf) = (worst(|s| s.dlpf), worst(|s| s.dcpf));
    let infeasible = points.iter().filter(|s| s.acpf.is_none()).count();

    let mut run = RunConfig::new("surface", ctx.seed).input("case", case_arg);
    run.surface = Some(settings);
    let path = ctx.out_path("surface.csv")?;
    write(&path, &surface_csv(&points))?;
    let meta = json!({
        "n_points": points.len(),
        "n_infeasible": infeasible,
        "max_abs_dev_dlpf": dlpf,
        "max_abs_dev_dcpf": dcpf,
    });
    write_json(&sidecar_path(&path), &stamp(meta, &run))?;
    ctx.say(format!(
        "{} grid points ({infeasible} without an AC solution); max |θ₂ − θ₂_ACPF|: DLPF {dlpf:.4e}, DCPF {dcpf:.4e} rad",
        points.len()
    ));
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

fn similarity(ctx: &Ctx, model_path: &Path, case_arg: &str) -> Result<(), CliError> {
    if !model_path.is_file() {
        return Err(CliError::usage(format!("model {} does not exist", model_path.display())));
    }
    let model = MappingModel::load(model_path)?;
    let case = resolve_case(case_arg)?;
    let adm = build_admittance(&case);
    let (report, mats) = matrix_similarity(&model, &case, &adm)?;
    let run = RunConfig::new("similarity", ctx.seed)
        .input("model", model_path.display().to_string())
        .input("case", case_arg);
    let js = ctx.out_path("similarity.json")?;
    let reference = ctx.out_path("similarity_reference.csv")?;
    let regression = ctx.out_path("similarity_regression.csv")?;
    write_json(&js, &stamp(serde_json::to_value(&report).expect("report serializes"), &run))?;
    write(&reference, &matrix_csv(&mats.row_labels, &mats.col_labels, &mats.reference))?;
    write(&regression, &matrix_csv(&mats.row_labels, &mats.col_labels, &mats.regression))?;
    ctx.say(format!(
        "{} vs {:?}: relative Frobenius error {:.4e}, correlation {:.6}, sign agreement {:.4}, nonzero fraction {:.4}",
        report.engine.to_uppercase(),
        report.reference,
        report.frobenius_rel_error,
        report.correlation,
        report.sign_agreement,
        report.nonzero_fraction
    ));
    ctx.say(format!("wrote {}, {} and {}", js.display(), reference.display(), regression.display()));
    Ok(())
}
