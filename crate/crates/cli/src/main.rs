use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use joinlearn::executor::{preprocess_c, run_fixed_order, skinner_c, Advance, Execution, SkinnerCConfig};
use joinlearn::generic::{skinner_g_simulated, skinner_h_simulated, GenericConfig};
use joinlearn::manifest::{parse_schema, Manifest, ManifestEntry};
use joinlearn::oracle::{nested_loop_join, optimal_order, worst_order};
use joinlearn::postproc::{self, QueryOutput};
use joinlearn::workload::{generate_torture, Pattern, TortureMode, TortureSpec};
use joinlearn::{parse_query, BoundQuery, Catalog, JoinOrder, RunStats};
use rand::seq::SliceRandom;
use rand::SeedableRng;

/// Costs above this are treated as equal when searching for the worst order.
const WORST_ORDER_CAP: u64 = 1_000_000;

#[derive(Parser)]
#[command(name = "joinlearn", version, about = "Learned join ordering for select-project-join queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load CSV tables, check them, and optionally write a catalog manifest.
    Load(LoadArgs),
    /// Run a query against a catalog.
    Query(QueryArgs),
    /// Generate a torture instance (CSV files, query.sql, catalog.json).
    GenTorture(GenArgs),
}

#[derive(Args)]
struct LoadArgs {
    /// Existing manifest to include (repeatable).
    #[arg(long = "manifest")]
    manifests: Vec<PathBuf>,
    /// `name:path:schema`, schema as `col:type,...` with type int or str.
    #[arg(long = "table")]
    tables: Vec<String>,
    /// CSV files of `--table` entries have no header row.
    #[arg(long)]
    no_header: bool,
    /// Write the combined manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    /// Catalog manifest (repeatable).
    #[arg(long = "catalog", required = true)]
    catalogs: Vec<PathBuf>,
    /// Query text; `@file` reads it from a file.
    sql: String,
    /// skinner-c, skinner-g-sim, skinner-h-sim, fixed:<optimal|worst|a,b,..>, fixed, oracle
    #[arg(long, default_value = "skinner-c")]
    strategy: String,
    /// Loop iterations per time slice.
    #[arg(long, default_value_t = 500)]
    budget: u64,
    /// UCT exploration weight; defaults to 1e-6 for skinner-c, sqrt(2) otherwise.
    #[arg(long)]
    w: Option<f64>,
    /// Batches per table for the generic strategies.
    #[arg(long, default_value_t = 10)]
    batches: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write run statistics as JSON here.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Print only the number of result rows.
    #[arg(long)]
    count: bool,
    /// Order for `fixed` and the traditional plan of skinner-h-sim:
    /// optimal, worst, random, or comma-separated aliases.
    #[arg(long)]
    fixed_order: Option<String>,
    /// Stop fixed-order runs once this many tuples were examined.
    #[arg(long)]
    max_examined: Option<u64>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "chain")]
    pattern: Pattern,
    #[arg(long, default_value = "udf")]
    mode: TortureMode,
    #[arg(long, default_value_t = 5)]
    tables: usize,
    #[arg(long, default_value_t = 1000)]
    rows: usize,
    /// 1-based position of the predicate that empties the result.
    #[arg(long, default_value_t = 1)]
    good: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Load(a) => cmd_load(a),
        Command::Query(a) => cmd_query(a),
        Command::GenTorture(a) => cmd_gen_torture(a),
    }
}

fn absolutize(base: &Path, entry: &ManifestEntry) -> ManifestEntry {
    let mut e = entry.clone();
    if e.path.is_relative() {
        e.path = base.join(&e.path);
    }
    e
}

fn cmd_load(a: LoadArgs) -> Result<()> {
    let mut combined = Manifest::default();
    for m in &a.manifests {
        let manifest = Manifest::read(m)?;
        let base = m.parent().unwrap_or(Path::new("."));
        combined.tables.extend(manifest.tables.iter().map(|e| absolutize(base, e)));
    }
    for spec in &a.tables {
        let mut parts = spec.splitn(3, ':');
        let (Some(name), Some(path), Some(schema)) = (parts.next(), parts.next(), parts.next()) else {
            bail!("--table expects name:path:schema, got `{spec}`");
        };
        parse_schema(schema).map_err(anyhow::Error::msg).with_context(|| format!("table `{name}`"))?;
        combined.tables.push(ManifestEntry {
            name: name.to_owned(),
            path: std::path::absolute(path)?,
            header: !a.no_header,
            schema: schema.to_owned(),
        });
    }
    let mut catalog = Catalog::new();
    combined.load_into(Path::new("."), &mut catalog)?;
    let mut stdout = std::io::stdout().lock();
    for e in &combined.tables {
        let t = catalog.get(&e.name).expect("just loaded");
        writeln!(stdout, "{}\t{} rows\t{}", t.name(), t.row_count(), e.path.display())?;
    }
    if let Some(out) = a.out {
        combined.write(&out).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn load_catalog(paths: &[PathBuf]) -> Result<Catalog> {
    let mut catalog = Catalog::new();
    for p in paths {
        joinlearn::manifest::load_manifest(p, &mut catalog)?;
    }
    Ok(catalog)
}

fn resolve_order(query: &BoundQuery, text: &str, seed: u64) -> Result<JoinOrder> {
    Ok(match text {
        "optimal" => optimal_order(query)?.0,
        "worst" => worst_order(query, WORST_ORDER_CAP)?.0,
        "random" => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..query.table_count()).collect();
            order.shuffle(&mut rng);
            JoinOrder::new(order, query.table_count())?
        }
        list => query.parse_order(list)?,
    })
}

fn cmd_query(a: QueryArgs) -> Result<()> {
    let catalog = load_catalog(&a.catalogs)?;
    let sql = match a.sql.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?,
        None => a.sql.clone(),
    };
    let spec = parse_query(sql.trim())?;
    let prepared = preprocess_c(&spec, &catalog)?;
    let query = prepared.query();
    let generic_cfg = GenericConfig {
        batches: a.batches.max(1),
        w: a.w.unwrap_or(std::f64::consts::SQRT_2),
        seed: a.seed,
    };
    let (output, stats): (QueryOutput, RunStats) = match a.strategy.as_str() {
        "skinner-c" => {
            let cfg = SkinnerCConfig {
                budget: a.budget.max(1),
                w: a.w.unwrap_or(1e-6),
                seed: a.seed,
                ..Default::default()
            };
            let run = skinner_c(&prepared, &cfg);
            (run.output(query), run.stats)
        }
        "skinner-g-sim" => {
            let run = skinner_g_simulated(&prepared, &generic_cfg);
            (run.output(query), run.stats)
        }
        "skinner-h-sim" => {
            let order = resolve_order(query, a.fixed_order.as_deref().unwrap_or("optimal"), a.seed)?;
            let (run, _) = skinner_h_simulated(&prepared, &order, &generic_cfg);
            (run.output(query), run.stats)
        }
        "oracle" => {
            let tuples = nested_loop_join(query);
            let stats = RunStats {
                result_rows: tuples.len() as u64,
                ..Default::default()
            };
            (postproc::finish(query, &tuples), stats)
        }
        s if s == "fixed" || s.starts_with("fixed:") => {
            let text = match s.strip_prefix("fixed:") {
                Some(t) => t.to_owned(),
                None => a.fixed_order.clone().context("strategy `fixed` needs --fixed-order")?,
            };
            let order = resolve_order(query, &text, a.seed)?;
            let run: Execution = run_fixed_order(&prepared, &order, Advance::Indexed, a.max_examined);
            if !run.finished {
                log::warn!("stopped after {} examined tuples; result is partial", run.stats.examined_tuples);
            }
            (run.output(query), run.stats)
        }
        other => bail!("unknown strategy `{other}`"),
    };
    if let Some(path) = &a.stats {
        std::fs::write(path, stats.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    let mut stdout = std::io::stdout().lock();
    if a.count {
        writeln!(stdout, "{}", output.rows.len())?;
        return Ok(());
    }
    let mut w = csv::Writer::from_writer(&mut stdout);
    w.write_record(&output.columns)?;
    for row in &output.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_gen_torture(a: GenArgs) -> Result<()> {
    let spec = TortureSpec {
        pattern: a.pattern,
        mode: a.mode,
        tables: a.tables,
        rows: a.rows,
        good: a.good,
    };
    let inst = generate_torture(&spec)?;
    inst.write_to(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", inst.sql);
    Ok(())
}
