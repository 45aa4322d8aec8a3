//! Command-line front end: solve, check, converge and gen.
//!
//! Exit codes: 1 parse error, 2 validation or invariant failure, 3 i/o
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sandnet::analysis::{
    convergence_study, source_mass_fine, uniqueness_check, StudyError, StudyReference,
};
use sandnet::netfile::{self, Generator, NetFile, ReadError, ReadOptions};
use sandnet::output;
use sandnet::pipeline::{solve_network, solve_with_step, Solution};
use sandnet::rolling::{flux_report, RollingField};
use sandnet::verify::{run_all, CheckOptions};

#[derive(Parser)]
#[command(
    name = "sandnet",
    about = "Equilibrium sandpiles on metric networks: standing and rolling layers",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Gnuplot,
    Svg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenKind {
    Test1,
    Test2,
    Test3,
    Star,
    Sierpinski,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a network and write d.csv, v.csv and report.txt.
    Solve {
        input: PathBuf,
        /// Replace every edge's node count to reach this step.
        #[arg(long)]
        h: Option<f64>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Ignore comments and extension lines in the input.
        #[arg(long)]
        strict: bool,
        /// Samples per edge for the fine source-mass quadrature.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Solve and audit every invariant; exit 0 iff all pass.
    Check {
        input: PathBuf,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        strict: bool,
        /// Audit a previously written v.csv instead of the computed field.
        #[arg(long)]
        v_csv: Option<PathBuf>,
    },
    /// Error table over a list of steps, with fitted convergence orders.
    Converge {
        input: PathBuf,
        /// Comma-separated step sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        h_list: Vec<f64>,
        /// Compare against a 10x finer solve instead of the registered
        /// exact solution.
        #[arg(long)]
        reference: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
        /// Samples per edge for the error norms.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Write a generated network as a .net file.
    Gen {
        kind: GenKind,
        #[arg(long, default_value_t = 5)]
        arms: usize,
        #[arg(long, default_value_t = 2)]
        level: u32,
        /// Uniform arm length for star networks.
        #[arg(long, default_value_t = 1.0)]
        length: f64,
        /// Output path (defaults to <kind>.net).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Parse(String),
    Validation(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Parse(m) | Failure::Validation(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ReadError> for Failure {
    fn from(err: ReadError) -> Failure {
        match &err {
            ReadError::Io(_) => Failure::Io(err.to_string()),
            ReadError::Invalid(_) => Failure::Validation(err.to_string()),
            _ => Failure::Parse(err.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Failure {
        Failure::Io(err.to_string())
    }
}

impl From<sandnet::pipeline::PipelineError> for Failure {
    fn from(err: sandnet::pipeline::PipelineError) -> Failure {
        Failure::Validation(err.to_string())
    }
}

fn tolerance() -> f64 {
    std::env::var("SANDNET_TOL")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|t: &f64| *t > 0.0)
        .unwrap_or(1e-12)
}

fn load(path: &Path, strict: bool) -> Result<NetFile, Failure> {
    let opts = ReadOptions {
        strict,
        validate: true,
    };
    let file = netfile::read_path(path, &opts)?;
    for w in &file.warnings {
        eprintln!("warning: {}", w);
    }
    Ok(file)
}

fn solve_input(file: &NetFile, h: Option<f64>, tol: f64) -> Result<Solution, Failure> {
    Ok(match h {
        Some(h) if h > 0.0 => solve_with_step(&file.network, h, &file.overrides, tol)?,
        Some(_) => return Err(Failure::Validation("step must be positive".into())),
        None => solve_network(&file.network, &file.overrides, tol)?,
    })
}

fn cmd_solve(
    input: &Path,
    h: Option<f64>,
    out: &Path,
    format: Format,
    strict: bool,
    samples: usize,
) -> Result<(), Failure> {
    let tol = tolerance();
    let file = load(input, strict)?;
    let net = &file.network;
    let sol = solve_input(&file, h, tol)?;

    let uniq = uniqueness_check(net, &sol.grid, &sol.distance, &sol.classes)
        .map_err(|e| Failure::Validation(e.to_string()))?;
    let flux = flux_report(net, &sol.grid, &sol.classes, &sol.rolling, &sol.spec)
        .map_err(|e| Failure::Validation(e.to_string()))?;
    let fine_mass =
        source_mass_fine(net, samples).map_err(|e| Failure::Validation(e.to_string()))?;

    std::fs::create_dir_all(out)?;
    output::write_atomic(out.join("d.csv"), &output::d_csv(net, &sol.grid, &sol.distance))?;
    output::write_atomic(out.join("v.csv"), &output::v_csv(net, &sol.grid, &sol.rolling))?;
    let report = output::report_text(
        net,
        &sol.grid,
        &sol.distance,
        &sol.classes,
        &sol.rolling,
        &sol.spec,
        &uniq,
        &flux,
        fine_mass,
    );
    output::write_atomic(out.join("report.txt"), &report)?;
    match format {
        Format::Csv => {}
        Format::Gnuplot => {
            let d_vals: Vec<Vec<f64>> = net
                .edge_ids()
                .map(|e| sol.distance.edge_values(&sol.grid, e))
                .collect();
            output::write_atomic(out.join("d_xyz.dat"), &output::xyz_data(net, &sol.grid, &d_vals))?;
            output::write_atomic(
                out.join("v_xyz.dat"),
                &output::xyz_data(net, &sol.grid, &sol.rolling.per_edge),
            )?;
            output::write_atomic(out.join("plot.gp"), &output::gnuplot_script())?;
        }
        Format::Svg => {
            output::write_atomic(
                out.join("solution.svg"),
                &output::svg(net, &sol.grid, &sol.distance, &sol.rolling),
            )?;
        }
    }
    print!("{}", report);
    Ok(())
}

fn cmd_check(
    input: &Path,
    h: Option<f64>,
    strict: bool,
    v_csv: Option<&Path>,
) -> Result<bool, Failure> {
    let tol = tolerance();
    let file = load(input, strict)?;
    let net = &file.network;
    let mut sol = solve_input(&file, h, tol)?;

    let audited_external = if let Some(path) = v_csv {
        let text = std::fs::read_to_string(path)?;
        let per_edge = output::parse_v_csv(&text, net, &sol.grid)
            .map_err(|e| Failure::Validation(format!("v csv: {}", e)))?;
        sol.rolling = RollingField::from_edge_values(net, &sol.grid, &sol.classes, per_edge);
        true
    } else {
        false
    };

    let opts = CheckOptions {
        tol,
        // the weak-form refinement re-solves internally, so it says nothing
        // about an externally supplied field
        weak_form: !audited_external,
    };
    let report = run_all(net, &sol, &file.overrides, &opts)?;
    for entry in &report.entries {
        println!(
            "{} {} - {}",
            if entry.passed { "PASS" } else { "FAIL" },
            entry.name,
            entry.detail
        );
    }
    let uniq = uniqueness_check(net, &sol.grid, &sol.distance, &sol.classes)
        .map_err(|e| Failure::Validation(e.to_string()))?;
    println!(
        "verdict: solution pair is {}",
        if uniq.unique { "unique" } else { "not unique" }
    );
    Ok(report.all_passed())
}

fn cmd_converge(
    input: &Path,
    h_list: &[f64],
    reference: bool,
    out: &Path,
    strict: bool,
    samples: usize,
) -> Result<(), Failure> {
    let tol = tolerance();
    let file = load(input, strict)?;
    let study_ref = if reference {
        StudyReference::Refined { factor: 10.0 }
    } else {
        StudyReference::Test1Exact
    };
    let table = convergence_study(
        &file.network,
        h_list,
        study_ref,
        samples,
        &file.overrides,
        tol,
    )
    .map_err(|e| match e {
        StudyError::NeedTwoSteps(_) => Failure::Validation(format!("{} (need >= 2 steps)", e)),
        StudyError::NotTest1 => Failure::Validation(format!(
            "{}; rerun with --reference for a self-refinement study",
            e
        )),
        StudyError::Pipeline(p) => Failure::Validation(p.to_string()),
    })?;

    std::fs::create_dir_all(out)?;
    output::write_atomic(out.join("errors.csv"), &output::errors_csv(&table))?;

    println!("h, Linf_d, L1_d, Linf_v, L1_v");
    for r in &table.rows {
        println!(
            "{:.6e}, {:.6e}, {:.6e}, {:.6e}, {:.6e}",
            r.h, r.linf_d, r.l1_d, r.linf_v, r.l1_v
        );
    }
    println!(
        "fitted orders: d: Linf {:.3}, L1 {:.3}; v: Linf {:.3}, L1 {:.3}",
        table.slopes.linf_d, table.slopes.l1_d, table.slopes.linf_v, table.slopes.l1_v
    );
    Ok(())
}

fn cmd_gen(
    kind: GenKind,
    arms: usize,
    level: u32,
    length: f64,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let (gen, default_name) = match kind {
        GenKind::Test1 => (Generator::Test1, "test1.net"),
        GenKind::Test2 => (Generator::Test2, "test2.net"),
        GenKind::Test3 => (Generator::Test3, "test3.net"),
        GenKind::Star => (
            Generator::Star {
                arms,
                lengths: vec![length; arms],
            },
            "star.net",
        ),
        GenKind::Sierpinski => (Generator::Sierpinski { level }, "sierpinski.net"),
    };
    let file = netfile::generate(gen).map_err(|e| Failure::Validation(e.to_string()))?;
    let path = out.unwrap_or_else(|| PathBuf::from(default_name));
    output::write_atomic(&path, &netfile::write_string(&file))?;
    println!(
        "wrote {} ({} vertices, {} edges)",
        path.display(),
        file.network.vertices().len(),
        file.network.edges().len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<bool, Failure> = match &cli.cmd {
        Cmd::Solve {
            input,
            h,
            out,
            format,
            strict,
            samples,
        } => cmd_solve(input, *h, out, *format, *strict, *samples).map(|_| true),
        Cmd::Check {
            input,
            h,
            strict,
            v_csv,
        } => cmd_check(input, *h, *strict, v_csv.as_deref()),
        Cmd::Converge {
            input,
            h_list,
            reference,
            out,
            strict,
            samples,
        } => cmd_converge(input, h_list, *reference, out, *strict, *samples).map(|_| true),
        Cmd::Gen {
            kind,
            arms,
            level,
            length,
            out,
        } => cmd_gen(*kind, *arms, *level, *length, out.clone()).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
