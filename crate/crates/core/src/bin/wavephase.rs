use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wavephase::eval::{empirical_error, long_range_profile, model_error, structure_error};
use wavephase::gaussian::{fit_gaussian_model, fit_gaussian_report, sample_gaussian, GaussianDualState};
use wavephase::graph::{build_foveal_edges, estimate_table, gaussianity_report, GaussianityReport, ModelName};
use wavephase::grid::{dft2, radial_power_spectrum};
use wavephase::io::{export_pgm, fmt_f64, load_field, load_fields, save_field, write_csv, write_field_file, write_table, FieldFile, RunConfig};
use wavephase::micro::synthesize;
use wavephase::{ComplexField, Error, Result, WaveletBank};

#[derive(Parser)]
#[command(name = "wavephase", version, about = "Wavelet phase harmonic statistics, Gaussian models and microcanonical synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured restart count.
    #[arg(long)]
    restarts: Option<usize>,
    /// Accepted; computation runs on one thread.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the covariance table of a field.
    Cov {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize fields matching a reference (Gaussian sampler for model A).
    Synth {
        reference: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the maximum-entropy Gaussian model to a field.
    GaussFit {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Draw samples from a fitted Gaussian model.
    GaussSample {
        state: PathBuf,
        /// Number of samples; defaults to the configured count.
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare model samples with a reference ensemble.
    Eval {
        reference: PathBuf,
        model: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Gaussianity diagnostics of a field or directory of fields.
    GaussTest {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Radially averaged power spectrum of a field or directory of fields.
    Spectrum {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Export a field as a 16-bit PGM with a JSON sidecar.
    Export {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn run_config(c: &Common, default_model: ModelName) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::preset(default_model, 3, 8),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(r) = c.restarts {
        cfg.restarts = r;
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(c: &Common) -> Result<&Path> {
    fs::create_dir_all(&c.out)?;
    Ok(&c.out)
}

fn bank_for(x: &ComplexField, cfg: &RunConfig) -> Result<(WaveletBank, wavephase::graph::ModelSpec)> {
    let spec = cfg.model_spec()?;
    Ok((WaveletBank::bump(x.side(), spec.scales, spec.angles)?, spec))
}

fn cmd_cov(input: &Path, c: &Common) -> Result<()> {
    let cfg = run_config(c, ModelName::A)?;
    let x = load_field(input)?;
    let (bank, spec) = bank_for(&x, &cfg)?;
    let edges = build_foveal_edges(&spec)?;
    let table = estimate_table(&x, &bank, &edges)?;
    let out = out_dir(c)?;
    write_table(&out.join("table.phkt"), &table)?;
    let d = (x.side() * x.side()) as f64;
    let summary = format!(
        "model {:?}\nside {}\nedges {}\nmodel size {}\nmodel size / d {:.4e}\nvertices {}\n",
        spec.name,
        x.side(),
        edges.len(),
        edges.model_size(),
        edges.model_size() as f64 / d,
        table.vertices.len()
    );
    fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn gauss_fit(x: &ComplexField, cfg: &RunConfig) -> Result<GaussianDualState> {
    let (bank, spec) = bank_for(x, cfg)?;
    let table = estimate_table(x, &bank, &build_foveal_edges(&spec)?)?;
    match cfg.gaussian.max_iter {
        Some(m) => {
            let s = fit_gaussian_report(&table, &bank, cfg.gaussian.tol, m)?;
            if !s.feasible {
                return Err(Error::Numerical("fitted precision is not positive".into()));
            }
            Ok(s)
        }
        None => fit_gaussian_model(&table, &bank, cfg.gaussian.tol),
    }
}

fn write_gauss_state(out: &Path, s: &GaussianDualState) -> Result<()> {
    fs::write(out.join("gauss_state.json"), serde_json::to_vec(s)?)?;
    write_field_file(&out.join("spectrum.phkf"), &FieldFile::real_2d(s.side, s.spectrum.clone())?)
}

fn cmd_synth(reference: &Path, c: &Common) -> Result<()> {
    let cfg = run_config(c, ModelName::B)?;
    let x = load_field(reference)?;
    let spec = cfg.model_spec()?;
    let out = out_dir(c)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    if spec.name == ModelName::A {
        let s = gauss_fit(&x, &cfg)?;
        write_gauss_state(out, &s)?;
        let samples = sample_gaussian(&s, cfg.seed, cfg.restarts)?;
        for (r, y) in samples.iter().enumerate() {
            save_field(&out.join(format!("sample_{r:03}.phkf")), y)?;
            summary.push(vec![
                r.to_string(),
                cfg.seed.wrapping_add(r as u64).to_string(),
                fmt_f64(s.max_rel_error),
                s.iterations.to_string(),
                format!("{:?}", s.termination),
                "true".into(),
                (r == 0).to_string(),
            ]);
        }
        println!("gaussian model: {} dual iterations, max relative constraint error {:.3e}", s.iterations, s.max_rel_error);
    } else {
        let bank = WaveletBank::bump(x.side(), spec.scales, spec.angles)?;
        let res = synthesize(&x, &bank, &spec, cfg.restarts, cfg.seed)?;
        for (r, run) in res.restarts.iter().enumerate() {
            save_field(&out.join(format!("sample_{r:03}.phkf")), &ComplexField::from_real(res.side, &run.field)?)?;
            for (i, l) in run.losses.iter().enumerate() {
                rows.push(vec![r.to_string(), i.to_string(), fmt_f64(*l)]);
            }
            summary.push(vec![
                r.to_string(),
                run.seed.to_string(),
                fmt_f64(run.final_loss / run.initial_loss),
                run.iterations.to_string(),
                format!("{:?}", run.termination),
                run.success.to_string(),
                (r == res.best).to_string(),
            ]);
            println!(
                "restart {r}: seed {} loss {:.3e} -> {:.3e} ({} iterations, {:?}){}",
                run.seed,
                run.initial_loss,
                run.final_loss,
                run.iterations,
                run.termination,
                if r == res.best { " best" } else { "" }
            );
        }
        write_csv(&out.join("loss.csv"), &["restart", "iteration", "loss"], &rows)?;
    }
    write_csv(
        &out.join("restarts.csv"),
        &["restart", "seed", "relative_loss", "iterations", "termination", "success", "best"],
        &summary,
    )
}

fn cmd_gauss_fit(input: &Path, c: &Common) -> Result<()> {
    let cfg = run_config(c, ModelName::A)?;
    let x = load_field(input)?;
    let s = gauss_fit(&x, &cfg)?;
    write_gauss_state(out_dir(c)?, &s)?;
    println!("{} iterations ({:?}), max relative constraint error {:.3e}, entropy {:.6e}", s.iterations, s.termination, s.max_rel_error, s.entropy);
    Ok(())
}

fn cmd_gauss_sample(state: &Path, count: Option<usize>, c: &Common) -> Result<()> {
    let cfg = match &c.config {
        Some(_) => run_config(c, ModelName::A)?,
        None => {
            let mut r = RunConfig::preset(ModelName::A, 1, 2);
            r.seed = c.seed.unwrap_or(0);
            r
        }
    };
    let s: GaussianDualState = serde_json::from_slice(&fs::read(state)?)?;
    let n = count.unwrap_or(cfg.gaussian.samples);
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let out = out_dir(c)?;
    for (i, y) in sample_gaussian(&s, cfg.seed, n)?.iter().enumerate() {
        save_field(&out.join(format!("sample_{i:03}.phkf")), y)?;
    }
    println!("wrote {n} samples");
    Ok(())
}

fn cmd_eval(reference: &Path, model: &Path, c: &Common) -> Result<()> {
    let cfg = run_config(c, ModelName::A)?;
    let refs = load_fields(reference)?;
    let models = load_fields(model)?;
    let side = refs[0].side();
    if refs.iter().chain(&models).any(|x| x.side() != side) {
        return Err(Error::Shape("reference and model grids differ".into()));
    }
    let spec = cfg.model_spec()?;
    let bank = WaveletBank::bump(side, spec.scales, spec.angles)?;
    let e = &cfg.eval;
    let out = out_dir(c)?;
    let emp = empirical_error(&refs, &bank, &e.window, e.power_tol)?;
    let em = model_error(&refs, &models, &bank, &e.window, e.power_tol)?;
    let mut rows = vec![
        vec!["eps_emp".into(), String::new(), String::new(), fmt_f64(emp.mean), fmt_f64(emp.std)],
        vec!["eps_model".into(), String::new(), String::new(), fmt_f64(em), fmt_f64(0.0)],
    ];
    for &j in &e.structure_j {
        for &q in &e.structure_q {
            let r = structure_error(&refs, &models, j, q)?;
            rows.push(vec!["eps_st".into(), j.to_string(), fmt_f64(q), fmt_f64(r.mean), fmt_f64(r.std)]);
        }
    }
    write_csv(&out.join("errors.csv"), &["metric", "j", "q", "mean", "std"], &rows)?;
    for (name, fields) in [("reference", &refs), ("model", &models)] {
        let mut rows = Vec::new();
        for &k in &e.profile_k {
            for &j in &e.profile_j {
                for (a, v) in long_range_profile(fields, &bank, k, j, e.profile_a_max)?.iter().enumerate() {
                    rows.push(vec![k.to_string(), j.to_string(), a.to_string(), fmt_f64(*v)]);
                }
            }
        }
        write_csv(&out.join(format!("profile_{name}.csv")), &["k", "j", "a", "value"], &rows)?;
    }
    println!("eps_emp {:.4e} (std {:.2e}), eps_model {:.4e}, {} references, {} model samples", emp.mean, emp.std, em, refs.len(), models.len());
    Ok(())
}

fn cmd_gauss_test(input: &Path, c: &Common) -> Result<()> {
    let cfg = run_config(c, ModelName::A)?;
    let fields = load_fields(input)?;
    let spec = cfg.model_spec()?;
    let bank = WaveletBank::bump(fields[0].side(), spec.scales, spec.angles)?;
    let r = gaussianity_report(&fields, &bank, &cfg.gaussianity)?;
    let out = out_dir(c)?;
    fs::write(out.join("gaussianity.json"), serde_json::to_vec_pretty(&r)?)?;
    let rows: Vec<Vec<String>> = r
        .channels
        .iter()
        .map(|ch| {
            vec![
                ch.channel.to_string(),
                fmt_f64(ch.ratio),
                fmt_f64(ch.gaussian_ratio),
                fmt_f64(ch.noncircularity),
                GaussianityReport::verdict(ch).into(),
            ]
        })
        .collect();
    write_csv(&out.join("sparsity.csv"), &["channel", "ratio", "gaussian_ratio", "noncircularity", "verdict"], &rows)?;
    for ch in &r.channels {
        println!("channel {:3}: ratio {:.4} (gaussian {:.4}) {}", ch.channel, ch.ratio, ch.gaussian_ratio, GaussianityReport::verdict(ch));
    }
    let flagged = r.pairs.iter().filter(|p| p.flagged).count();
    println!("cross pairs: {} tested, {} flagged", r.pairs.len(), flagged);
    println!("overall: {}", if r.consistent_with_gaussian() { "consistent with Gaussian" } else { "non-Gaussian" });
    Ok(())
}

fn cmd_spectrum(input: &Path, c: &Common) -> Result<()> {
    let fields = load_fields(input)?;
    let spectra = fields.iter().map(dft2).collect::<Result<Vec<_>>>()?;
    let s = radial_power_spectrum(&spectra)?;
    let rows: Vec<Vec<String>> = (0..s.radius.len())
        .map(|i| vec![fmt_f64(s.radius[i]), fmt_f64(s.power[i]), fmt_f64(s.log_power[i]), s.counts[i].to_string()])
        .collect();
    write_csv(&out_dir(c)?.join("spectrum.csv"), &["radius", "power", "log10_power", "count"], &rows)
}

fn cmd_export(input: &Path, c: &Common) -> Result<()> {
    let x = load_field(input)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("field");
    let path = out_dir(c)?.join(format!("{stem}.pgm"));
    let s = export_pgm(&x, &path)?;
    println!("{} (min {}, max {})", path.display(), s.min, s.max);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Cov { input, common } => cmd_cov(input, common),
        Command::Synth { reference, common } => cmd_synth(reference, common),
        Command::GaussFit { input, common } => cmd_gauss_fit(input, common),
        Command::GaussSample { state, count, common } => cmd_gauss_sample(state, *count, common),
        Command::Eval { reference, model, common } => cmd_eval(reference, model, common),
        Command::GaussTest { input, common } => cmd_gauss_test(input, common),
        Command::Spectrum { input, common } => cmd_spectrum(input, common),
        Command::Export { input, common } => cmd_export(input, common),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
