use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use synthmean::cohort::{ensure_height_percentiles, ColumnMapping, Gender};
use synthmean::error::{Error, Result};
use synthmean::reference::simulate_stratum;
use synthmean::report::{
    emit_diagnostic_csv, emit_figure_data, emit_replicates, emit_table1, figure_models, load_cohort,
    load_reference, run_on_cohort, write_atomically, write_report, Analysis, RunConfig, DEFAULT_FIGURE_DRAWS,
};
use synthmean::rng::{Domain, RandomStream};
use synthmean::Method;

#[derive(Parser)]
#[command(name = "synthmean", version, about = "Population mean estimation under positivity violations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the cohort (and reference table, if given) and report what was read.
    Validate(Common),
    /// Run the requested estimators and write report.json.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of complete_case, gcomp_linear, gcomp_saturated,
        /// synthesis, bounds, diagnostic.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Write bootstrap replicate values as single-column CSV.
        #[arg(long)]
        dump_replicates: Option<PathBuf>,
    },
    /// Plug-in bounds for the population mean.
    Bounds(Common),
    /// Compare statistical and mathematical model means in the positive region.
    Diagnose(Common),
    /// Draw from reference-table strata.
    Simulate(SimulateArgs),
    /// Write CSV data behind the outcome-by-age figures.
    Figures {
        #[command(flatten)]
        common: Common,
        /// Mathematical-model draws per age.
        #[arg(long, default_value_t = DEFAULT_FIGURE_DRAWS)]
        draws: usize,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; other flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cohort: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// JSON column mapping for the cohort file.
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long)]
    delimiter: Option<char>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads for resampling (0 = all cores). Does not affect results.
    #[arg(long)]
    workers: Option<usize>,
    /// Youngest age at which the outcome can be observed.
    #[arg(long)]
    cutoff: Option<u32>,
    #[arg(long)]
    age_min: Option<u32>,
    #[arg(long)]
    age_max: Option<u32>,
    /// Plausible range for the nonpositive-region mean.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    bounds: Option<Vec<f64>>,
    #[arg(long, env = "SYNTHMEAN_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    age: Option<u32>,
    #[arg(long)]
    gender: Option<String>,
    /// Height percentile used to pick the bracket; defaults to every bracket.
    #[arg(long)]
    height_percentile: Option<f64>,
    #[arg(short = 'n', long, default_value_t = DEFAULT_FIGURE_DRAWS)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "SYNTHMEAN_OUT_DIR", default_value = "synthmean-out")]
    out: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load_json(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.cohort {
            c.cohort = p.clone();
        }
        if let Some(p) = &self.reference {
            c.reference = Some(p.clone());
        }
        if let Some(p) = &self.mapping {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            c.mapping = serde_json::from_str::<ColumnMapping>(&text)?;
        }
        if let Some(d) = self.delimiter {
            c.mapping.delimiter = d;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(r) = self.replicates {
            c.replicates = r;
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        if let Some(k) = self.cutoff {
            c.cutoff = k;
        }
        if let Some(a) = self.age_min {
            c.age_range[0] = a;
        }
        if let Some(a) = self.age_max {
            c.age_range[1] = a;
        }
        if let Some(b) = &self.bounds {
            c.bounds = [b[0], b[1]];
        }
        if let Some(o) = &self.out {
            c.output_dir = o.clone();
        }
        Ok(c)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomically(path, |w| w.write_all(s.as_bytes()).map_err(|e| io_err(path, e)))
}

fn dump_path(base: &Path, method: Method, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = base.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    base.with_file_name(format!("{stem}_{method}.{ext}"))
}

fn run_estimate(config: RunConfig, dump: Option<&Path>) -> Result<()> {
    config.validate()?;
    let (cohort, ingest) = load_cohort(&config)?;
    let table = config.reference.as_deref().map(load_reference).transpose()?;
    let run = run_on_cohort(&config, &cohort, ingest.clone(), table.as_ref())?;

    let out = &config.output_dir;
    write_json(&out.join("ingest.json"), &serde_json::to_value(&ingest)?)?;
    if let Some(rows) = &run.report.diagnostic {
        emit_diagnostic_csv(rows, &out.join("diagnostic.csv"))?;
    }
    if let Some(base) = dump {
        let several = run.replicates.len() > 1;
        for (method, values) in &run.replicates {
            emit_replicates(values, &dump_path(base, *method, several))?;
        }
    }
    write_report(&run.report, &out.join("report.json"))?;
    print!("{}", run.report.to_json()?);
    Ok(())
}

fn run_validate(config: RunConfig) -> Result<()> {
    if !config.cohort.is_file() {
        return Err(Error::Config(format!("cohort file {} does not exist", config.cohort.display())));
    }
    let (cohort, ingest) = load_cohort(&config)?;
    let mut summary = json!({ "ingest": ingest, "n": cohort.len() });
    if let Some(path) = &config.reference {
        let table = load_reference(path)?;
        let mut pairs: Vec<(u32, Gender)> = cohort.participants().iter().map(|p| (p.age, p.gender)).collect();
        pairs.sort();
        pairs.dedup();
        table.require_coverage(pairs)?;
        ensure_height_percentiles(&cohort)?;
        summary["reference_rows"] = json!(table.len());
        summary["coverage"] = json!("complete");
    }
    let out = &config.output_dir;
    emit_table1(&cohort, &out.join("table1.csv"))?;
    write_json(&out.join("ingest.json"), &serde_json::to_value(&ingest)?)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run_figures(config: RunConfig, draws: usize) -> Result<()> {
    if !config.cohort.is_file() {
        return Err(Error::Config(format!("cohort file {} does not exist", config.cohort.display())));
    }
    let (cohort, ingest) = load_cohort(&config)?;
    let table = config.reference.as_deref().map(load_reference).transpose()?;
    let (linear, saturated) = figure_models(&cohort);
    let out = &config.output_dir;
    let files = emit_figure_data(
        &cohort,
        table.as_ref(),
        linear.as_ref(),
        saturated.as_ref(),
        &out.join("figure_"),
        draws,
        config.seed,
    )?;
    emit_table1(&cohort, &out.join("table1.csv"))?;
    write_json(&out.join("ingest.json"), &serde_json::to_value(&ingest)?)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "observed": files.observed,
            "curves": files.curves,
            "simulated": files.simulated,
            "table1": out.join("table1.csv"),
        }))?
    );
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let table = load_reference(&args.reference)?;
    let gender = args
        .gender
        .as_deref()
        .map(|g| {
            ColumnMapping::default()
                .parse_gender_code(g)
                .ok_or_else(|| Error::Config(format!("unknown gender {g:?}")))
        })
        .transpose()?;

    let mut rows = Vec::new();
    let mut index = 0u64;
    for (age, g) in table.coverage() {
        if args.age.is_some_and(|a| a != age) || gender.is_some_and(|x| x != g) {
            continue;
        }
        let brackets: Vec<f64> = match args.height_percentile {
            Some(p) => vec![table.lookup(age, g, p)?.height_percentile],
            None => table.brackets(age, g)?.iter().map(|b| b.height_percentile).collect(),
        };
        for bracket in brackets {
            let mut rng = RandomStream::substream(args.seed, Domain::Simulation, index);
            index += 1;
            for v in simulate_stratum(&table, age, g, bracket, args.n, &mut rng)? {
                rows.push([age.to_string(), g.to_string(), bracket.to_string(), v.to_string()]);
            }
        }
    }
    if rows.is_empty() && args.n > 0 {
        return Err(Error::Config("no reference strata match the requested filters".into()));
    }
    let path = args.out.join("simulated_strata.csv");
    write_atomically(&path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["age", "gender", "bracket", "value"])?;
        for r in &rows {
            csv.write_record(r)?;
        }
        csv.flush().map_err(|e| io_err(&path, e))
    })?;
    println!("{}", json!({ "rows": rows.len(), "path": path }));
    Ok(())
}

fn with_methods(mut c: RunConfig, methods: Vec<Analysis>) -> RunConfig {
    c.methods = methods;
    c
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(common) => run_validate(common.resolve()?),
        Command::Estimate {
            common,
            methods,
            dump_replicates,
        } => {
            let mut config = common.resolve()?;
            if let Some(ms) = methods {
                config.methods = ms.iter().map(|m| Analysis::parse(m)).collect::<Result<_>>()?;
            }
            run_estimate(config, dump_replicates.as_deref())
        }
        Command::Bounds(common) => run_estimate(with_methods(common.resolve()?, vec![Analysis::Bounds]), None),
        Command::Diagnose(common) => {
            run_estimate(with_methods(common.resolve()?, vec![Analysis::Diagnostic]), None)
        }
        Command::Simulate(args) => run_simulate(args),
        Command::Figures { common, draws } => run_figures(common.resolve()?, draws),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            let _ = writeln!(std::io::stderr(), "{body}");
            ExitCode::FAILURE
        }
    }
}
