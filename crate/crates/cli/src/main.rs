use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};
use lanetrade::core_program::build_program;
use lanetrade::experiments::{
    analyze_pfg, conjecture_sweep, run_table1, run_table2, solve_instance, SweepSpec, Table1Spec,
    Table2Spec,
};
use lanetrade::horizontal::SimConfig;
use lanetrade::values::CoreRule;
use lanetrade::vertical::{build_pfg, VerticalInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Mode {
    VerticalTable1,
    DynamicTable2,
    SolveInstance,
    AnalyzePfg,
    ConjectureSweep,
}

/// Strong-core lane exchange experiments.
#[derive(Debug, Parser)]
#[command(name = "lanetrade", version)]
struct Args {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Replications per cell (runs per cell for the dynamic study,
    /// instances for the sweep).
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Simulation config for the dynamic study, or the instance file for
    /// `solve_instance` and `analyze_pfg`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the ε-program (and solution) as JSON.
    #[arg(long)]
    dump_lp: bool,
    /// Subtract one from every vertical delay.
    #[arg(long)]
    delay_offset: bool,
    /// `any-block` or `every-block`; the default depends on the mode.
    #[arg(long)]
    core_rule: Option<CoreRule>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: &Args) -> anyhow::Result<ExitCode> {
    if args.reps == Some(0) {
        bail!("--reps must be at least 1");
    }
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    match args.mode {
        Mode::VerticalTable1 => table1(args),
        Mode::DynamicTable2 => table2(args),
        Mode::SolveInstance => solve(args),
        Mode::AnalyzePfg => analyze(args),
        Mode::ConjectureSweep => sweep(args),
    }
}

fn write(dir: Option<&Path>, name: &str, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = dir {
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        anyhow::anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column())
    })
}

fn load_instance(args: &Args) -> anyhow::Result<VerticalInstance> {
    let path = args.config.as_deref().context("--config <instance.json> is required")?;
    let mut inst: VerticalInstance = read_json(path)?;
    inst.delay_offset |= args.delay_offset;
    inst.validate().with_context(|| format!("validating {}", path.display()))?;
    Ok(inst)
}

fn table1(args: &Args) -> anyhow::Result<ExitCode> {
    let spec = Table1Spec {
        reps: args.reps.unwrap_or(250),
        seed: args.seed,
        delay_offset: args.delay_offset,
        rule: args.core_rule.unwrap_or(CoreRule::EveryBlock),
        ..Table1Spec::default()
    };
    let table = run_table1(&spec)?;
    let (free, mcq) = (table.free_csv(), table.mcquillin_csv());
    println!("externality-free value, % in strong core\n{free}");
    println!("McQuillin value, % in strong core\n{mcq}");
    let dir = args.out_dir.as_deref();
    write(dir, "table1_free.csv", &free)?;
    write(dir, "table1_mcquillin.csv", &mcq)?;
    write(dir, "table1.json", &pretty(&table))?;
    Ok(ExitCode::SUCCESS)
}

fn table2(args: &Args) -> anyhow::Result<ExitCode> {
    let mut base = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SimConfig::from_json(&text).with_context(|| format!("loading {}", path.display()))?
        }
        None => SimConfig::default(),
    };
    if let Some(rule) = args.core_rule {
        base.core_rule = rule;
    }
    let spec = Table2Spec {
        runs: args.reps.unwrap_or(6),
        seed: args.seed,
        base,
        ..Table2Spec::default()
    };
    let runs_dir = args.out_dir.as_ref().map(|d| d.join("runs"));
    let table = run_table2(&spec, runs_dir.as_deref())?;
    let (stable, ratio, ratio_u) = (table.stable_csv(), table.ratio_csv(), table.ratio_unstable_csv());
    println!("% strong-core stable optimizations\n{stable}");
    println!("mean epsilon / mean cost, all optimizations\n{ratio}");
    println!("mean epsilon / mean cost, unstable optimizations\n{ratio_u}");
    let dir = args.out_dir.as_deref();
    write(dir, "table2_stable.csv", &stable)?;
    write(dir, "table2_ratio.csv", &ratio)?;
    write(dir, "table2_ratio_unstable.csv", &ratio_u)?;
    write(dir, "table2.json", &pretty(&table))?;
    Ok(ExitCode::SUCCESS)
}

fn solve(args: &Args) -> anyhow::Result<ExitCode> {
    let inst = load_instance(args)?;
    let rule = args.core_rule.unwrap_or_default();
    let (report, pfg) = solve_instance(&inst, rule)?;
    let lanes = |a: &[usize]| a.iter().map(|l| (l + 1).to_string()).collect::<Vec<_>>().join(" ");
    println!("agents {}  lanes {}  rule {rule}", inst.n(), inst.lanes());
    println!("grand-coalition lanes  {}  (worth {})", lanes(&report.assignment), report.grand_value);
    println!("first-come lanes       {}  (worth {})", lanes(&report.fcfs_assignment), report.fcfs_total);
    println!("externality-free value {:?}  in core: {}", report.externality_free.0, report.externality_free_in_core);
    println!("McQuillin value        {:?}  in core: {}", report.mcquillin.0, report.mcquillin_in_core);
    println!("minimal epsilon        {}", report.solution.epsilon);
    println!("imputation             {:?}", report.solution.x.0);
    let json = pretty(&report);
    match args.out_dir.as_deref() {
        Some(dir) => write(Some(dir), "solution.json", &json)?,
        None => print!("{json}"),
    }
    if args.dump_lp {
        let dump = serde_json::json!({
            "program": build_program(&pfg, rule).to_json(),
            "solution": report.solution.to_json(),
        });
        match args.out_dir.as_deref() {
            Some(dir) => write(Some(dir), "program.json", &pretty(&dump))?,
            None => print!("{}", pretty(&dump)),
        }
    }
    Ok(if report.solution.epsilon == 0.0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn analyze(args: &Args) -> anyhow::Result<ExitCode> {
    let inst = load_instance(args)?;
    let pfg = build_pfg(&inst)?;
    let analysis = analyze_pfg(&pfg)?;
    println!(
        "externalities: {} positive, {} negative, {} none; superadditivity violations: {}",
        analysis.positive_externalities,
        analysis.negative_externalities,
        analysis.zero_externalities,
        analysis.superadditivity_violations.len()
    );
    if let Some(w) = &analysis.negative_witness {
        let rho: Vec<String> = w.rho.iter().map(|c| c.to_string()).collect();
        println!(
            "negative externality: {} merging with {} changes the worth of {} by {} (rest {})",
            w.s,
            w.t,
            w.c,
            w.difference,
            if rho.is_empty() { "-".into() } else { rho.join(" ") }
        );
    }
    let json = pretty(&serde_json::json!({ "analysis": analysis, "pfg": pfg.to_json() }));
    match args.out_dir.as_deref() {
        Some(dir) => write(Some(dir), "analysis.json", &json)?,
        None => print!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: &Args) -> anyhow::Result<ExitCode> {
    let spec = SweepSpec {
        instances: args.reps.unwrap_or(1000),
        seed: args.seed,
        rule: args.core_rule.unwrap_or(CoreRule::AnyBlock),
        ..SweepSpec::default()
    };
    let report = conjecture_sweep(&spec)?;
    println!(
        "{} instances, max epsilon {}, {} above {}",
        spec.instances,
        report.max_epsilon,
        report.violations.len(),
        spec.tolerance
    );
    if let Some(dir) = args.out_dir.as_deref() {
        write(Some(dir), "sweep.json", &pretty(&report))?;
        for c in &report.violations {
            write(Some(dir), &format!("counterexample_{:05}.json", c.index), &pretty(c))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
