use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use nmfgen::diagnose::{fit_report, match_features, residual_table, FitReport};
use nmfgen::estimate::{alpha_profile, estimate_alpha, estimate_power_with, resolve_cost, PowerGrid};
use nmfgen::factorize::{fit, Engine, Factors, Factorization, FitConfig};
use nmfgen::io::{load_matrix, write_matrix_coord, write_matrix_csv, MatrixFormat};
use nmfgen::model::{
    format_model_spec, parse_model_spec, CostModel, DataMatrix, Family, ModelSpec, Variant,
};
use nmfgen::synth::{synth, SynthFamily};
use nmfgen::timing::time_update_sweep;

use crate::report::{BenchRecord, ConfigEcho, PhaseSeconds, RunReport};
use crate::{FitArgs, InputArgs};

const EXIT_OK: ExitCode = ExitCode::SUCCESS;

fn exit_not_converged() -> ExitCode {
    ExitCode::from(2u8)
}

fn load(input: &InputArgs) -> Result<DataMatrix> {
    let format = MatrixFormat::from_str(&input.format)?;
    load_matrix(&input.input, format)
        .with_context(|| format!("reading {}", input.input.display()))
}

fn fit_config(args: &FitArgs) -> FitConfig {
    FitConfig {
        tol: args.tol,
        max_iter: args.max_iter,
        restarts: args.restarts,
        seed: args.seed,
        init_scale: None,
    }
}

fn config_echo(args: &FitArgs) -> ConfigEcho {
    ConfigEcho {
        tol: args.tol,
        max_iter: args.max_iter,
        restarts: args.restarts,
        seed: args.seed,
    }
}

fn parse_variant(token: &str) -> Result<Variant> {
    match token {
        "T" | "t" => Ok(Variant::Traditional),
        "C" | "c" => Ok(Variant::Convex),
        other => bail!("unknown variant `{other}`; expected T or C"),
    }
}

/// Accepts `T/Po`, `C/NB_5` or a full `NMF/...` spec (rank ignored in favour
/// of the explicit --rank).
fn parse_model_token(token: &str) -> Result<ModelSpec> {
    let text = if token.starts_with("NMF/") {
        token.to_string()
    } else {
        format!("NMF/{token}")
    };
    Ok(parse_model_spec(&text)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn feature_labels(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("f{i}")).collect()
}

fn default_labels(count: usize, prefix: &str) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

fn spec_slug(spec: &str) -> String {
    spec.replace('/', "_")
}

fn row_label_vec(v: &DataMatrix) -> Vec<String> {
    v.row_labels
        .clone()
        .unwrap_or_else(|| default_labels(v.n_rows(), "r"))
}

fn col_label_vec(v: &DataMatrix) -> Vec<String> {
    v.col_labels
        .clone()
        .unwrap_or_else(|| default_labels(v.n_cols(), "c"))
}

/// Write the factor matrices; returns the paths written.
fn write_factors(out: &Path, v: &DataMatrix, fitted: &Factorization) -> Result<Vec<PathBuf>> {
    let k = fitted.weights().ncols();
    let features = feature_labels(k);
    let rows = row_label_vec(v);
    let cols = col_label_vec(v);
    let mut written = Vec::new();
    match &fitted.factors {
        Factors::Traditional { w, h } => {
            let w_path = out.join("W.csv");
            write_matrix_csv(&w_path, w.view(), Some(&rows), Some(&features), "row")?;
            let h_path = out.join("H.csv");
            write_matrix_csv(&h_path, h.view(), Some(&features), Some(&cols), "feature")?;
            written.push(w_path);
            written.push(h_path);
        }
        Factors::Convex { e, d } => {
            let e_path = out.join("E.csv");
            write_matrix_csv(&e_path, e.view(), Some(&rows), Some(&features), "row")?;
            let d_path = out.join("D.csv");
            write_matrix_csv(&d_path, d.view(), Some(&features), Some(&rows), "feature")?;
            // Reconstructed features (V^T E)^T, one row per feature; rows sum
            // to one under the post-fit normalisation.
            let vte_path = out.join("VtE.csv");
            write_matrix_csv(
                &vte_path,
                fitted.features(v).view(),
                Some(&features),
                Some(&cols),
                "feature",
            )?;
            written.push(e_path);
            written.push(d_path);
            written.push(vte_path);
        }
    }
    Ok(written)
}

fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "iteration,divergence")?;
    for (t, d) in trace.iter().enumerate() {
        writeln!(out, "{t},{d}")?;
    }
    out.flush()?;
    Ok(())
}

fn write_residuals(path: &Path, table: &nmfgen::diagnose::ResidualTable) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "fitted,residual,band")?;
    for row in &table.rows {
        writeln!(out, "{},{},{}", row.fitted, row.residual, row.band)?;
    }
    out.flush()?;
    Ok(())
}

fn write_meanvar(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "mean,variance")?;
    for (mean, variance) in curve {
        writeln!(out, "{mean},{variance}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_fit(input: &InputArgs, model: &str, fit_args: &FitArgs, out: &Path) -> Result<ExitCode> {
    let v = load(input)?;
    let spec = parse_model_spec(model)?;
    spec.require_rank()
        .context("the fit spec must include a rank, e.g. NMF/T/Po/5")?;
    let config = fit_config(fit_args);
    fs::create_dir_all(out)?;

    let t0 = Instant::now();
    let cost = resolve_cost(&v, &spec, &config)?;
    let estimate_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let fitted = fit(&v, &spec, &cost, &config)?;
    let fit_secs = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let report = fit_report(&v, &fitted, &cost, &spec)?;
    let diagnose_secs = t2.elapsed().as_secs_f64();

    let mut manifest = write_factors(out, &v, &fitted)?;
    let trace_path = out.join("trace.csv");
    write_trace(&trace_path, &fitted.divergence_trace)?;
    manifest.push(trace_path);

    let report_path = out.join("report.json");
    let run_report = RunReport {
        spec: report.spec.clone(),
        config: config_echo(fit_args),
        seed: fitted.seed,
        iterations: fitted.iterations,
        converged: fitted.converged,
        final_divergence: fitted.final_divergence(),
        loglik: report.loglik,
        bic: report.bic,
        n_params: report.n_params,
        wall_time_seconds: PhaseSeconds {
            estimate: estimate_secs,
            fit: fit_secs,
            diagnose: diagnose_secs,
        },
        manifest: {
            let mut m = manifest.clone();
            m.push(report_path.clone());
            m
        },
    };
    write_json(&report_path, &run_report)?;

    println!(
        "{}: divergence {:.6e}, BIC {:.3}, {} iterations{} -> {}",
        run_report.spec,
        run_report.final_divergence,
        run_report.bic,
        run_report.iterations,
        if run_report.converged { "" } else { " (not converged)" },
        out.display()
    );
    Ok(if fitted.converged { EXIT_OK } else { exit_not_converged() })
}

#[derive(Serialize)]
struct SelectEntry {
    #[serde(flatten)]
    report: FitReport,
    converged: bool,
    final_divergence: f64,
    residuals_csv: PathBuf,
    meanvar_csv: PathBuf,
}

#[derive(Serialize)]
struct SelectFailure {
    spec: String,
    error: String,
}

#[derive(Serialize)]
struct SelectOutput {
    models: Vec<SelectEntry>,
    failures: Vec<SelectFailure>,
}

const ALL_MODEL_TOKENS: &str = "T/N,T/Po,T/TW,T/NB,C/N,C/Po,C/TW,C/NB";

pub fn cmd_select(
    input: &InputArgs,
    rank: usize,
    models: Option<&str>,
    fit_args: &FitArgs,
    out: &Path,
) -> Result<ExitCode> {
    let v = load(input)?;
    let config = fit_config(fit_args);
    fs::create_dir_all(out)?;

    let tokens: Vec<&str> = models
        .unwrap_or(ALL_MODEL_TOKENS)
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        bail!("no models requested");
    }

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for token in &tokens {
        let run = || -> Result<SelectEntry> {
            let spec = parse_model_token(token)?.with_rank(rank);
            let cost = resolve_cost(&v, &spec, &config)?;
            let fitted = fit(&v, &spec, &cost, &config)?;
            let report = fit_report(&v, &fitted, &cost, &spec)?;
            let slug = spec_slug(&report.spec);
            let residuals_csv = out.join(format!("{slug}.residuals.csv"));
            write_residuals(&residuals_csv, &residual_table(&v, &fitted, &cost)?)?;
            let meanvar_csv = out.join(format!("{slug}.meanvar.csv"));
            write_meanvar(&meanvar_csv, &report.meanvar_curve)?;
            Ok(SelectEntry {
                converged: fitted.converged,
                final_divergence: fitted.final_divergence(),
                residuals_csv,
                meanvar_csv,
                report,
            })
        };
        match run() {
            Ok(entry) => entries.push(entry),
            Err(err) => {
                eprintln!("model {token} failed: {err:#}");
                failures.push(SelectFailure {
                    spec: token.to_string(),
                    error: format!("{err:#}"),
                });
            }
        }
    }

    entries.sort_by(|a, b| a.report.bic.total_cmp(&b.report.bic));
    for entry in &entries {
        println!("{}: BIC {:.3}", entry.report.spec, entry.report.bic);
    }
    let any_succeeded = !entries.is_empty();
    write_json(&out.join("reports.json"), &SelectOutput { models: entries, failures })?;
    if any_succeeded {
        Ok(EXIT_OK)
    } else {
        bail!("every requested model failed");
    }
}

#[derive(Serialize)]
struct AlphaResult {
    variant: String,
    rank: usize,
    alpha: f64,
    spec: String,
    poisson_converged: bool,
    profile_argmax: Option<f64>,
}

pub fn cmd_estimate_alpha(
    input: &InputArgs,
    rank: usize,
    variant: &str,
    fit_args: &FitArgs,
    profile: Option<&str>,
    out: &Path,
) -> Result<ExitCode> {
    let v = load(input)?;
    let variant = parse_variant(variant)?;
    let config = fit_config(fit_args);
    fs::create_dir_all(out)?;

    let poisson_spec = ModelSpec::new(variant, Family::Poisson, None, Some(rank));
    let prefit = fit(&v, &poisson_spec, &CostModel::Poisson, &config)?;
    let alpha = estimate_alpha(&v, prefit.fitted.view())?;

    let mut profile_argmax = None;
    if let Some(grid_text) = profile {
        let parts: Vec<f64> = grid_text
            .split(',')
            .map(|t| t.trim().parse::<f64>().context("profile grid must be lo,hi,steps"))
            .collect::<Result<_>>()?;
        let [lo, hi, steps] = parts[..] else {
            bail!("profile grid must be lo,hi,steps");
        };
        if !(lo > 0.0 && hi > lo && steps >= 2.0) {
            bail!("profile grid must satisfy 0 < lo < hi and steps >= 2");
        }
        let n = steps as usize;
        let grid: Vec<f64> = (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect();
        let prof = alpha_profile(&v, prefit.fitted.view(), &grid)?;
        let path = out.join("alpha_profile.csv");
        let mut file = BufWriter::new(File::create(&path)?);
        writeln!(file, "alpha,loglik")?;
        for (a, ll) in prof.grid.iter().zip(prof.loglik.iter()) {
            writeln!(file, "{a},{ll}")?;
        }
        file.flush()?;
        profile_argmax = Some(prof.argmax);
    }

    let spec = ModelSpec::new(variant, Family::NegBin, Some(alpha), Some(rank));
    let result = AlphaResult {
        variant: format!("{variant:?}"),
        rank,
        alpha,
        spec: format_model_spec(&spec),
        poisson_converged: prefit.converged,
        profile_argmax,
    };
    write_json(&out.join("alpha.json"), &result)?;
    println!("alpha = {alpha} ({})", result.spec);
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct PowerResult {
    variant: String,
    rank: usize,
    p: f64,
    sigma2: f64,
    spec: String,
}

pub fn cmd_estimate_power(
    input: &InputArgs,
    rank: usize,
    variant: &str,
    step: f64,
    no_refine: bool,
    fit_args: &FitArgs,
    out: &Path,
) -> Result<ExitCode> {
    let v = load(input)?;
    let variant = parse_variant(variant)?;
    let config = fit_config(fit_args);
    fs::create_dir_all(out)?;

    let spec = ModelSpec::new(variant, Family::Tweedie, None, Some(rank));
    let grid = PowerGrid {
        coarse_step: step,
        refine_step: (!no_refine).then_some(0.01),
    };
    let estimate = estimate_power_with(&v, &spec, &config, &grid)?;

    let path = out.join("power_profile.csv");
    let mut file = BufWriter::new(File::create(&path)?);
    writeln!(file, "p,loglik")?;
    for (p, ll) in estimate.profile.grid.iter().zip(estimate.profile.loglik.iter()) {
        writeln!(file, "{p},{ll}")?;
    }
    file.flush()?;

    let result = PowerResult {
        variant: format!("{variant:?}"),
        rank,
        p: estimate.p,
        sigma2: estimate.sigma2,
        spec: format_model_spec(&spec.with_param(estimate.p)),
    };
    write_json(&out.join("power.json"), &result)?;
    println!("p = {} (sigma2 = {})", estimate.p, estimate.sigma2);
    Ok(EXIT_OK)
}

pub fn cmd_diagnose(
    input: &InputArgs,
    model: &str,
    max_rows: Option<usize>,
    fit_args: &FitArgs,
    out: &Path,
) -> Result<ExitCode> {
    let v = load(input)?;
    let spec = parse_model_spec(model)?;
    spec.require_rank()
        .context("the diagnose spec must include a rank, e.g. NMF/T/NB/5")?;
    let config = fit_config(fit_args);
    fs::create_dir_all(out)?;

    let cost = resolve_cost(&v, &spec, &config)?;
    let fitted = fit(&v, &spec, &cost, &config)?;
    let report = fit_report(&v, &fitted, &cost, &spec)?;

    let mut table = residual_table(&v, &fitted, &cost)?;
    if let Some(cap) = max_rows {
        table = table.downsample(cap, fit_args.seed);
    }
    write_residuals(&out.join("residuals.csv"), &table)?;
    write_meanvar(&out.join("meanvar.csv"), &report.meanvar_curve)?;
    write_json(&out.join("report.json"), &report)?;

    println!(
        "{}: BIC {:.3}, 2sd coverage {:.3} -> {}",
        report.spec,
        report.bic,
        report.coverage_2sd,
        out.display()
    );
    Ok(if fitted.converged { EXIT_OK } else { exit_not_converged() })
}

pub fn cmd_compare(features_a: &Path, features_b: &Path, out: &Path) -> Result<ExitCode> {
    let a = load_matrix(features_a, MatrixFormat::Csv)
        .with_context(|| format!("reading {}", features_a.display()))?;
    let b = load_matrix(features_b, MatrixFormat::Csv)
        .with_context(|| format!("reading {}", features_b.display()))?;
    fs::create_dir_all(out)?;

    let assignment = match_features(a.values().view(), b.values().view())?;

    let label = |m: &DataMatrix, i: usize| -> String {
        m.row_labels
            .as_ref()
            .map(|l| l[i].clone())
            .unwrap_or_else(|| format!("f{}", i + 1))
    };
    let path = out.join("matching.csv");
    let mut file = BufWriter::new(File::create(&path)?);
    writeln!(file, "feature_a,feature_b,similarity")?;
    for pair in &assignment.pairs {
        writeln!(file, "{},{},{}", label(&a, pair.a), label(&b, pair.b), pair.similarity)?;
    }
    file.flush()?;
    write_json(&out.join("summary.json"), &assignment)?;

    println!(
        "matched {} pairs: mean similarity {:.4}, min {:.4}",
        assignment.pairs.len(),
        assignment.mean_similarity,
        assignment.min_similarity
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SynthReport {
    rows: usize,
    cols: usize,
    rank: usize,
    family: String,
    sigma2: Option<f64>,
    alpha: Option<f64>,
    power: Option<f64>,
    mean: f64,
    seed: u64,
    sparsity: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_synth(
    rows: usize,
    cols: usize,
    rank: usize,
    family: &str,
    sigma2: f64,
    alpha: Option<f64>,
    power: Option<f64>,
    mean: f64,
    seed: u64,
    format: &str,
    out: &Path,
) -> Result<ExitCode> {
    let synth_family = match family {
        "normal" => SynthFamily::Normal { sigma2 },
        "poisson" => SynthFamily::Poisson,
        "negbin" => SynthFamily::NegBin {
            alpha: alpha.context("--alpha is required for the negbin family")?,
        },
        "compound" => SynthFamily::CompoundPoisson {
            p: power.context("--power is required for the compound family")?,
            sigma2,
        },
        other => bail!("unknown family `{other}`; expected normal, poisson, negbin or compound"),
    };
    let format = MatrixFormat::from_str(format)?;
    let data = synth(rows, cols, rank, synth_family, mean, seed)?;
    fs::create_dir_all(out)?;

    let row_labels = default_labels(rows, "r");
    let col_labels = default_labels(cols, "c");
    let features = feature_labels(rank);
    match format {
        MatrixFormat::Csv => {
            write_matrix_csv(
                &out.join("V.csv"),
                data.v.values().view(),
                Some(&row_labels),
                Some(&col_labels),
                "row",
            )?;
        }
        MatrixFormat::Coord => write_matrix_coord(&out.join("V.coord"), data.v.values().view())?,
    }
    write_matrix_csv(&out.join("W_true.csv"), data.w.view(), Some(&row_labels), Some(&features), "row")?;
    write_matrix_csv(&out.join("H_true.csv"), data.h.view(), Some(&features), Some(&col_labels), "feature")?;

    let report = SynthReport {
        rows,
        cols,
        rank,
        family: family.to_string(),
        sigma2: matches!(synth_family, SynthFamily::Normal { .. } | SynthFamily::CompoundPoisson { .. })
            .then_some(sigma2),
        alpha,
        power,
        mean,
        seed,
        sparsity: data.v.sparsity(),
    };
    write_json(&out.join("synth.json"), &report)?;
    println!(
        "wrote {}x{} {} matrix (sparsity {:.4}) -> {}",
        rows,
        cols,
        family,
        data.v.sparsity(),
        out.display()
    );
    Ok(EXIT_OK)
}

fn engine_for(spec: &ModelSpec) -> Engine {
    match (spec.family, spec.family_param) {
        (Family::Normal, _) => Engine::Normal,
        (Family::Poisson, _) => Engine::Poisson,
        (Family::Tweedie, p) => Engine::Tweedie(p.unwrap_or(1.5)),
        (Family::NegBin, a) => Engine::NegBin(a.unwrap_or(10.0)),
    }
}

const BENCH_MODEL_TOKENS: &str = "T/N,T/Po,T/TW_1.5,T/NB_10,C/N,C/Po,C/TW_1.5,C/NB_10";

pub fn cmd_bench(
    sizes: &str,
    m: usize,
    k: usize,
    reps: usize,
    models: Option<&str>,
    seed: u64,
    out: &Path,
) -> Result<ExitCode> {
    let sizes: Vec<usize> = sizes
        .split(',')
        .map(|t| t.trim().parse::<usize>().context("--sizes must be a comma-separated list of N"))
        .collect::<Result<_>>()?;
    if sizes.is_empty() {
        bail!("--sizes is empty");
    }
    let tokens: Vec<&str> = models
        .unwrap_or(BENCH_MODEL_TOKENS)
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    let threads = rayon::current_num_threads();

    let mut records = Vec::new();
    for token in &tokens {
        let spec = parse_model_token(token)?;
        let engine = engine_for(&spec);
        for &n in &sizes {
            let data = synth(n, m, k, SynthFamily::Poisson, 10.0, seed)?;
            let seconds = time_update_sweep(&data.v, k, spec.variant, engine, reps, seed)?;
            println!("{token} N={n}: {seconds:.6} s/iteration");
            records.push(BenchRecord {
                variant: match spec.variant {
                    Variant::Traditional => "T".to_string(),
                    Variant::Convex => "C".to_string(),
                },
                family: token.split('/').nth(1).unwrap_or("?").to_string(),
                n,
                m,
                k,
                repetitions: reps,
                threads,
                seconds_per_iteration: seconds,
            });
        }
    }

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut file = BufWriter::new(File::create(out)?);
    writeln!(file, "variant,family,n,m,k,repetitions,threads,seconds_per_iteration")?;
    for r in &records {
        writeln!(
            file,
            "{},{},{},{},{},{},{},{}",
            r.variant, r.family, r.n, r.m, r.k, r.repetitions, r.threads, r.seconds_per_iteration
        )?;
    }
    file.flush()?;
    Ok(EXIT_OK)
}
