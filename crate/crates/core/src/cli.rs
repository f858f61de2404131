//! The `bnnverify` command line.
//!
//! Exit codes: 0 success or verified, 1 falsified, 2 unknown, timeout or an
//! invalid witness, 64 usage error, 65 unreadable or malformed input.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};

use crate::bench::{
    self, generate_benchmark, load_image_dir, load_models, load_ppm, parse_counts, parse_results,
    render_results, render_table, run_instances, score_csv, score_results, write_fixtures, Engine,
    GenerateConfig, Outcome, RunConfig, VerdictRecord,
};
use crate::bnn::count_params;
use crate::falsifier::{falsify, AttackConfig};
use crate::onnx::parse_model;
use crate::verifier::cnf::first_layer_phases;
use crate::verifier::{export_cnf, Verdict};
use crate::vnnlib::{parse_property, property_file_name, witness_status, RobustnessProperty, Witness, WitnessStatus};
use crate::Network;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FALSIFIED: i32 = 1;
pub const EXIT_UNDECIDED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_FORMAT: i32 = 65;

/// Name of the variable holding the log filter, e.g. `BNNVERIFY_LOG=debug`.
pub const LOG_ENV: &str = "BNNVERIFY_LOG";

#[derive(Parser, Debug)]
#[command(name = "bnnverify", version, about = "Local-robustness verification for binarized neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the layer chain, shapes and parameter counts of a model.
    Inspect { model: PathBuf },
    /// Write one property file for an image.
    Generate {
        model: PathBuf,
        image: PathBuf,
        #[arg(long)]
        epsilon: f64,
        /// Target label; defaults to the model's prediction.
        #[arg(long)]
        label: Option<usize>,
        /// Image index used in the file name.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        clip: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Build a benchmark from a model directory and a labelled image directory.
    Bench {
        models: PathBuf,
        images: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = bench::generate::DEFAULT_EPSILONS)]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = bench::generate::DEFAULT_IMAGES_PER_MODEL)]
        images_per_model: usize,
        /// Per-instance timeout written to instances.csv.
        #[arg(long, default_value_t = bench::generate::DEFAULT_TIMEOUT)]
        timeout: f64,
        #[arg(long)]
        clip: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write randomly weighted stand-in models and self-labelled images.
    Fixtures {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        images_per_model: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decide a property with one engine.
    Verify {
        model: PathBuf,
        property: PathBuf,
        #[arg(long, default_value = "bab")]
        engine: Engine,
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Witness file written on `sat`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for a counterexample.
    Falsify {
        model: PathBuf,
        property: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long, default_value_t = AttackConfig::default().max_samples)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a witness against a model and property.
    Check {
        model: PathBuf,
        property: PathBuf,
        witness: PathBuf,
    },
    /// Run an engine over instances.csv and write results.csv.
    Run {
        instances: PathBuf,
        #[arg(long, default_value = "falsify")]
        engine: Engine,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Caps every instance's timeout.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score tools from result files (`tool=results.csv`) or a counts file.
    Score {
        results: Vec<String>,
        /// CSV with tool,verified,falsified,fastest,penalty.
        #[arg(long, conflicts_with = "results")]
        counts: Option<PathBuf>,
        /// Also write score.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the negated property as DIMACS CNF plus a variable map.
    Cnf {
        model: PathBuf,
        property: PathBuf,
        /// Fix first-layer signs to those of the box centre.
        #[arg(long)]
        center_phases: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

fn format_err(context: &Path, e: impl Display) -> Failure {
    Failure {
        code: EXIT_FORMAT,
        message: format!("{}: {e}", context.display()),
    }
}

fn io_fail(e: impl Display) -> Failure {
    Failure {
        code: EXIT_FORMAT,
        message: e.to_string(),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| format_err(path, e))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| format_err(path, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| format_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| format_err(path, e))
}

fn load_model(path: &Path) -> Result<Network, Failure> {
    parse_model(&read(path)?).map_err(|e| format_err(path, e))
}

fn load_property(path: &Path) -> Result<RobustnessProperty, Failure> {
    parse_property(&read_text(path)?).map_err(|e| format_err(path, e))
}

fn timeout_of(seconds: Option<f64>) -> Result<Option<Duration>, Failure> {
    seconds
        .map(|s| {
            Duration::try_from_secs_f64(s).map_err(|_| Failure {
                code: EXIT_USAGE,
                message: format!("invalid timeout {s}"),
            })
        })
        .transpose()
}

/// Prints the verdict line, writes or prints the witness, and maps the
/// verdict to an exit code.
fn report_verdict(out: &mut dyn Write, verdict: &Verdict, witness_out: Option<&Path>) -> Result<i32, Failure> {
    writeln!(out, "{}", verdict.as_str()).map_err(io_fail)?;
    Ok(match verdict {
        Verdict::Verified => EXIT_OK,
        Verdict::Falsified(w) => {
            let text = format!("sat\n{}", w.render());
            match witness_out {
                Some(p) => {
                    write_file(p, text)?;
                    writeln!(out, "witness written to {}", p.display()).map_err(io_fail)?;
                }
                None => write!(out, "{}", w.render()).map_err(io_fail)?,
            }
            EXIT_FALSIFIED
        }
        Verdict::Unknown | Verdict::Timeout => EXIT_UNDECIDED,
    })
}

fn inspect(out: &mut dyn Write, model: &Path) -> Result<i32, Failure> {
    let net = load_model(model)?;
    let shapes = net.shape_chain();
    let mut text = format!("input {:?}\n", net.input_shape());
    for (i, (layer, shape)) in net.layers().iter().zip(&shapes[1..]).enumerate() {
        let detail = if layer.quantizes_input() { " (sign input)" } else { "" };
        text += &format!("{i:>3} {:<10} -> {shape:?}{detail}\n", layer.name());
    }
    let p = count_params(&net);
    text += &format!("classes {}\n", net.num_classes());
    text += &format!("binary={} real={} total={}\n", p.binary, p.real, p.total);
    out.write_all(text.as_bytes()).map_err(io_fail)?;
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn generate(
    out: &mut dyn Write,
    model: &Path,
    image: &Path,
    epsilon: f64,
    label: Option<usize>,
    index: usize,
    clip: bool,
    dir: &Path,
) -> Result<i32, Failure> {
    let net = load_model(model)?;
    let img = load_ppm(&read(image)?).map_err(|e| format_err(image, e))?;
    let predicted = net.predict(&img).map_err(|e| format_err(image, e))?;
    let label = label.unwrap_or(predicted);
    if label != predicted {
        log::warn!("model predicts {predicted}, property targets {label}");
    }
    let prop = RobustnessProperty::around(&img, epsilon, label, net.num_classes(), clip)
        .map_err(|e| Failure {
            code: EXIT_USAGE,
            message: e.to_string(),
        })?
        .with_source(index, epsilon);
    let path = dir.join(property_file_name(net.input_shape()[0], index, epsilon));
    write_file(&path, prop.render())?;
    writeln!(out, "{}", path.display()).map_err(io_fail)?;
    Ok(EXIT_OK)
}

fn bench_failure(e: bench::BenchError) -> Failure {
    let code = match e {
        bench::BenchError::Config(_) | bench::BenchError::NotEnoughImages { .. } => EXIT_USAGE,
        _ => EXIT_FORMAT,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

/// `tool=path` or a bare path, whose parent directory or stem names the tool.
fn tool_and_path(arg: &str) -> (String, PathBuf) {
    if let Some((tool, path)) = arg.split_once('=') {
        return (tool.to_string(), PathBuf::from(path));
    }
    let path = PathBuf::from(arg);
    let name = if path.file_stem().is_some_and(|s| s == "results") {
        path.parent().and_then(|p| p.file_name())
    } else {
        path.file_stem()
    };
    let tool = name.map_or_else(|| arg.to_string(), |n| n.to_string_lossy().into_owned());
    (tool, path)
}

fn score(out: &mut dyn Write, results: &[String], counts: Option<&Path>, dest: Option<&Path>) -> Result<i32, Failure> {
    let tallies = match counts {
        Some(path) => parse_counts(&read_text(path)?).map_err(|e| format_err(path, e))?,
        None => {
            let mut runs: Vec<(String, Vec<VerdictRecord>)> = Vec::new();
            for arg in results {
                let (tool, path) = tool_and_path(arg);
                let rows = parse_results(&read_text(&path)?).map_err(|e| format_err(&path, e))?;
                runs.push((tool, rows));
            }
            bench::counts_from_runs(&runs)
        }
    };
    let rows = score_results(&tallies).map_err(|e| Failure {
        code: EXIT_USAGE,
        message: e.to_string(),
    })?;
    out.write_all(render_table(&rows).as_bytes()).map_err(io_fail)?;
    if let Some(d) = dest {
        write_file(&d.join("score.csv"), score_csv(&rows))?;
    }
    Ok(EXIT_OK)
}

fn check(out: &mut dyn Write, model: &Path, property: &Path, witness: &Path) -> Result<i32, Failure> {
    let net = load_model(model)?;
    let prop = load_property(property)?;
    let w = Witness::parse(&read_text(witness)?).map_err(|e| format_err(witness, e))?;
    let status = witness_status(&net, &prop, &w).map_err(|e| format_err(witness, e))?;
    let line = match status {
        WitnessStatus::Valid { margin } => format!("valid (margin {margin})"),
        WitnessStatus::OutOfBounds { index, value } => {
            format!("invalid: X_{index} = {value} is outside the property bounds")
        }
        WitnessStatus::NoViolation { margin } => {
            format!("invalid: label {} still wins by {}", prop.target_label, -margin)
        }
    };
    writeln!(out, "{line}").map_err(io_fail)?;
    Ok(if status.is_valid() { EXIT_OK } else { EXIT_UNDECIDED })
}

fn cnf(out: &mut dyn Write, model: &Path, property: &Path, center_phases: bool, dest: &Path) -> Result<i32, Failure> {
    let net = load_model(model)?;
    let prop = load_property(property)?;
    let phases = if center_phases {
        Some(first_layer_phases(&net, &prop.center()).map_err(|e| format_err(model, e))?)
    } else {
        None
    };
    let export = export_cnf(&net, &prop, phases.as_deref()).map_err(|e| Failure {
        code: EXIT_USAGE,
        message: e.to_string(),
    })?;
    write_file(dest, export.formula.to_dimacs())?;
    let map = dest.with_extension("map");
    write_file(&map, export.render_var_map())?;
    writeln!(
        out,
        "{} variables, {} clauses\n{}\n{}",
        export.formula.num_vars,
        export.formula.clauses.len(),
        dest.display(),
        map.display()
    )
    .map_err(io_fail)?;
    Ok(EXIT_OK)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    match cli.command {
        Command::Inspect { model } => inspect(out, &model),
        Command::Generate {
            model,
            image,
            epsilon,
            label,
            index,
            clip,
            out: dir,
        } => generate(out, &model, &image, epsilon, label, index, clip, &dir),
        Command::Bench {
            models,
            images,
            seed,
            epsilons,
            images_per_model,
            timeout,
            clip,
            out: dir,
        } => {
            let models = load_models(&models).map_err(bench_failure)?;
            let images = load_image_dir(&images).map_err(bench_failure)?;
            let cfg = GenerateConfig {
                seed,
                images_per_model,
                epsilons,
                timeout,
                clip,
            };
            let b = generate_benchmark(&models, &images, &cfg, &dir).map_err(bench_failure)?;
            writeln!(
                out,
                "{} instances, {} s total budget\n{}",
                b.instances.len(),
                b.total_budget(),
                b.csv_path.display()
            )
            .map_err(io_fail)?;
            Ok(EXIT_OK)
        }
        Command::Fixtures {
            seed,
            images_per_model,
            out: dir,
        } => {
            let (m, i) = write_fixtures(&dir, seed, images_per_model).map_err(bench_failure)?;
            writeln!(out, "{}\n{}", m.display(), i.display()).map_err(io_fail)?;
            Ok(EXIT_OK)
        }
        Command::Verify {
            model,
            property,
            engine,
            timeout,
            seed,
            out: witness_out,
        } => {
            let net = load_model(&model)?;
            let prop = load_property(&property)?;
            let cfg = RunConfig {
                attack: AttackConfig {
                    seed,
                    ..AttackConfig::default()
                },
                ..RunConfig::default()
            };
            let verdict = match bench::run::run_engine(&net, &prop, engine, timeout_of(timeout)?, &cfg) {
                Ok(r) => r.verdict,
                Err(e @ bench::BenchError::Verify(_)) => {
                    log::warn!("{e}");
                    Verdict::Unknown
                }
                Err(e) => return Err(format_err(&property, e)),
            };
            report_verdict(out, &verdict, witness_out.as_deref())
        }
        Command::Falsify {
            model,
            property,
            seed,
            timeout,
            samples,
            out: witness_out,
        } => {
            let net = load_model(&model)?;
            let prop = load_property(&property)?;
            let cfg = AttackConfig {
                seed,
                max_samples: samples,
                time_limit: timeout_of(timeout)?,
                integer_grid: prop.integer_bounds().is_some(),
                ..AttackConfig::default()
            };
            let found = falsify(&net, &prop, &cfg).map_err(|e| Failure {
                code: EXIT_USAGE,
                message: e.to_string(),
            })?;
            let verdict = found.map_or(Verdict::Unknown, Verdict::Falsified);
            report_verdict(out, &verdict, witness_out.as_deref())
        }
        Command::Check {
            model,
            property,
            witness,
        } => check(out, &model, &property, &witness),
        Command::Run {
            instances,
            engine,
            jobs,
            timeout,
            seed,
            out: dir,
        } => {
            let cfg = RunConfig {
                engine,
                jobs,
                timeout_cap: timeout,
                witness_dir: Some(dir.join("witnesses")),
                attack: AttackConfig {
                    seed,
                    ..AttackConfig::default()
                },
                ..RunConfig::default()
            };
            let records = run_instances(&instances, &cfg).map_err(bench_failure)?;
            let path = dir.join("results.csv");
            write_file(&path, render_results(&records))?;
            for r in &records {
                writeln!(out, "{} {} {:.3}", r.outcome.as_str(), r.instance, r.seconds).map_err(io_fail)?;
            }
            writeln!(out, "{}", path.display()).map_err(io_fail)?;
            let penalties = records.iter().filter(|r| r.penalty).count();
            if penalties > 0 {
                log::error!("{penalties} witnesses failed the re-check");
            }
            let errors = records.iter().filter(|r| r.outcome == Outcome::Error).count();
            Ok(if errors > 0 { EXIT_FORMAT } else { EXIT_OK })
        }
        Command::Score { results, counts, out: dir } => score(out, &results, counts.as_deref(), dir.as_deref()),
        Command::Cnf {
            model,
            property,
            center_phases,
            out: dest,
        } => cnf(out, &model, &property, center_phases, &dest),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Results go to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
