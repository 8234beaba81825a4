use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hlsforge::dse::{optimize, write_csv, ExploreOptions, SpaceCaps};
use hlsforge::emit::{emit, emit_header};
use hlsforge::frontend::{parse_and_raise, parse_c};
use hlsforge::graph::extract_dataflow;
use hlsforge::interp::{execute_with_stats, random_tape, tape_from_json, tape_to_json};
use hlsforge::ir::printer::print_program;
use hlsforge::ir::Program;
use hlsforge::passes::{catalog_text, parse_pipeline, run_pipeline};
use hlsforge::qor::{estimate, TargetSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "hlsforge", version, about = "Loop-level HLS optimizer for a small C subset", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct TargetArg {
    /// Target profile name (`edge`, `large`) or JSON file.
    #[arg(long, env = "HLSFORGE_TARGET", default_value = "edge")]
    target: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Apply passes in argument order and print the resulting IR.
    #[command(after_help = format!("Passes:\n{}", catalog_text()))]
    Opt {
        #[command(flatten)]
        target: TargetArg,
        /// Print C++ instead of IR.
        #[arg(long)]
        emit_cpp: bool,
        /// Write the top function's dataflow graph (Graphviz) here.
        #[arg(long, value_name = "DOT")]
        dump_dataflow: Option<PathBuf>,
        /// Write the result here instead of stdout.
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
        /// Pass flags with their `key=value` parameters, and the input file.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, required = true, value_name = "PASSES.. INPUT")]
        args: Vec<String>,
    },
    /// Print the estimated QoR report as JSON.
    Estimate {
        input: PathBuf,
        #[command(flatten)]
        target: TargetArg,
    },
    /// Explore the design space, write the evaluated points and the best design.
    Dse {
        input: PathBuf,
        #[command(flatten)]
        target: TargetArg,
        #[arg(long, default_value_t = 128)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Threads for evaluating the initial sample.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 8)]
        tile_cap: i64,
        #[arg(long, default_value_t = 32)]
        ii_max: u32,
        /// Leave dataflow splitting out of the space.
        #[arg(long)]
        no_dataflow: bool,
        #[arg(long, default_value = "pareto.csv")]
        output_space: PathBuf,
        /// Directory for `<top>_opt.cpp`.
        #[arg(long, default_value = ".")]
        emit_best: PathBuf,
    },
    /// Emit C++ with synthesis pragmas.
    Emit {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write a header with the top-function prototype.
        #[arg(long)]
        header: Option<PathBuf>,
    },
    /// Run the top function on a tape and print the final parameter values as JSON.
    Interp {
        input: PathBuf,
        /// JSON tape; random inputs when absent.
        #[arg(long)]
        tape: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print operation counts to stderr.
        #[arg(long)]
        stats: bool,
    },
    /// Print the IR.
    DumpIr {
        input: PathBuf,
        /// Skip raising to affine form.
        #[arg(long)]
        raw: bool,
    },
}

enum Failure {
    Usage(String),
    Diag(String),
}

type Res = Result<(), Failure>;

fn diag(e: impl std::fmt::Display) -> Failure {
    Failure::Diag(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Diag(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Program, Failure> {
    parse_and_raise(&read(path)?).map_err(|e| Failure::Diag(format!("{}:{e}", path.display())))
}

fn target(t: &TargetArg) -> Result<TargetSpec, Failure> {
    TargetSpec::load(&t.target).map_err(|e| Failure::Diag(format!("{}: {e}", t.target)))
}

/// Writes to stdout. A closed pipe (`| head`) ends output quietly.
fn out(text: &str) -> Res {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(Failure::Diag(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Res {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Diag(format!("{}: {e}", p.display()))),
        None => out(text),
    }
}

fn run(cmd: Cmd) -> Res {
    match cmd {
        Cmd::Opt { target: t, emit_cpp, dump_dataflow, output, args } => {
            let (passes, inputs) =
                parse_pipeline(&args).map_err(|e| Failure::Usage(format!("{e}\n\nPasses:\n{}", catalog_text())))?;
            let [input] = inputs.as_slice() else {
                return Err(Failure::Usage(format!("expected exactly one input file, got {}", inputs.len())));
            };
            let mut p = load(Path::new(input))?;
            let diags = run_pipeline(&mut p, &passes, &target(&t)?);
            if let Some(dot) = dump_dataflow {
                let g = extract_dataflow(p.top_function(), Some(&p)).map_err(diag)?;
                fs::write(&dot, g.to_dot()).map_err(|e| Failure::Diag(format!("{}: {e}", dot.display())))?;
            }
            let text = if emit_cpp { emit(&p).map_err(diag)? } else { print_program(&p) };
            write_or_print(output.as_deref(), &text)?;
            if !diags.is_empty() {
                return Err(Failure::Diag(diags.join("\n")));
            }
            Ok(())
        }
        Cmd::Estimate { input, target: t } => {
            let p = load(&input)?;
            let r = estimate(&p, &target(&t)?).map_err(diag)?;
            out(&(serde_json::to_string_pretty(&r).expect("report serializes") + "\n"))?;
            Ok(())
        }
        Cmd::Dse { input, target: t, budget, seed, jobs, tile_cap, ii_max, no_dataflow, output_space, emit_best } => {
            let p = load(&input)?;
            let spec = target(&t)?;
            let caps = SpaceCaps { tile_cap, ii_max, dataflow: !no_dataflow };
            let opts = ExploreOptions { budget, seed, jobs, ..Default::default() };
            let (space, x, best) = optimize(&p, &caps, &opts, &spec).map_err(diag)?;
            for d in [output_space.parent(), Some(emit_best.as_path())].into_iter().flatten().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(d).map_err(|e| Failure::Diag(format!("{}: {e}", d.display())))?;
            }
            let mut csv = vec![];
            write_csv(&mut csv, &space, &x).map_err(diag)?;
            fs::write(&output_space, csv).map_err(|e| Failure::Diag(format!("{}: {e}", output_space.display())))?;
            let cpp = emit_best.join(format!("{}_opt.cpp", best.top));
            fs::write(&cpp, emit(&best).map_err(diag)?).map_err(diag)?;
            let r = estimate(&best, &spec).map_err(diag)?;
            let summary = serde_json::json!({
                "space_size": space.size().to_string(),
                "evaluated": x.records.len(),
                "frontier": x.frontier.members.len(),
                "stop": x.stop,
                "best": {
                    "point": hlsforge::dse::finalize(&x, &spec)
                        .map(|b| space.describe(&b.point).into_iter().map(|(k, v)| (k, serde_json::Value::String(v))).collect::<serde_json::Map<_, _>>())
                        .unwrap_or_default(),
                    "latency": r.latency, "dsp": r.dsp, "lut": r.lut, "bram_bits": r.bram_bits,
                },
                "pareto_csv": output_space,
                "design": cpp,
            });
            out(&(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
            Ok(())
        }
        Cmd::Emit { input, output, header } => {
            let p = load(&input)?;
            if let Some(h) = header {
                fs::write(&h, emit_header(&p).map_err(diag)?).map_err(diag)?;
            }
            write_or_print(output.as_deref(), &emit(&p).map_err(diag)?)
        }
        Cmd::Interp { input, tape, seed, stats } => {
            let p = load(&input)?;
            let f = p.top_function();
            let t = match tape {
                Some(path) => {
                    let j: serde_json::Value = serde_json::from_str(&read(&path)?).map_err(|e| Failure::Diag(format!("{}: {e}", path.display())))?;
                    tape_from_json(f, &j).map_err(|e| Failure::Diag(format!("{}: {e}", path.display())))?
                }
                None => random_tape(f, &mut ChaCha8Rng::seed_from_u64(seed)),
            };
            let (fin, st) = execute_with_stats(&p, &p.top, &t).map_err(diag)?;
            if stats {
                eprintln!("loads {} stores {} arith {}", st.loads, st.stores, st.arith);
            }
            out(&(serde_json::to_string_pretty(&tape_to_json(&fin)).expect("tape serializes") + "\n"))?;
            Ok(())
        }
        Cmd::DumpIr { input, raw } => {
            let src = read(&input)?;
            let p = if raw { parse_c(&src) } else { parse_and_raise(&src) }.map_err(|e| Failure::Diag(format!("{}:{e}", input.display())))?;
            out(&print_program(&p))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Diag(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(2)
        }
    }
}
