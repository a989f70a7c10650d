use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use htec::analysis::{
    bandwidth_sweep, bounds_sweep, gamma_curve, multi_failure_report, partition_comparison, piggyback_comparison,
    BoundsScope, SweepOptions,
};
use htec::codec::{assign_coefficients, binomial, verify_mds_with, CodeInstance, CodecError};
use htec::construction::{build_index_arrays, CodeParams};
use htec::galois::FieldSpec;
use htec::iomodel::{count_reads, fleet_io, optimize_io, DiskModel, DEFAULT_IO_BYTES, DEFAULT_NODE_BYTES};
use htec::repair::{node_label, plan_repair, repair_stats};
use htec_cli::store::{self, StoreError};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "htec", version, about = "HashTag erasure codes with low repair bandwidth")]
struct Cli {
    /// Bytes per disk I/O for the read model.
    #[arg(long, global = true, default_value_t = DEFAULT_IO_BYTES)]
    io_bytes: u64,
    /// Bytes stored per node for the read model.
    #[arg(long, global = true, default_value_t = DEFAULT_NODE_BYTES)]
    node_bytes: u64,
    /// Seed for the coefficient search.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build index arrays, search MDS coefficients and write a code file.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        alpha: usize,
        #[arg(long, default_value_t = 8)]
        field_w: u8,
        /// Reduction polynomial including the x^w term; defaults per width.
        #[arg(long, value_parser = parse_u32)]
        poly: Option<u32>,
        #[arg(long, default_value_t = htec::codec::DEFAULT_MAX_ATTEMPTS)]
        max_attempts: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a file into shard files under a directory.
    Encode {
        code: PathBuf,
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the original file from any k intact shards.
    Decode {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Delete shard files (`d1`, `p2` or zero-based indices).
    Kill {
        dir: PathBuf,
        #[arg(required = true)]
        nodes: Vec<String>,
    },
    /// Restore missing or damaged shards.
    Repair {
        dir: PathBuf,
        /// Print bandwidth and I/O statistics.
        #[arg(long)]
        report: bool,
    },
    /// Show the repair plan for a failure set.
    Plan {
        code: PathBuf,
        #[arg(required = true)]
        failed: Vec<String>,
    },
    /// Describe a code file or shard directory.
    Inspect { path: PathBuf },
    /// Tabulate bandwidth and bound checks.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
        #[arg(long, default_value_t = 9)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,3,6,9")]
        alphas: Vec<usize>,
        /// Failures per repair.
        #[arg(long, default_value_t = 1)]
        t: usize,
        #[arg(long, default_value_t = 16)]
        field_w: u8,
        /// Code file for `multi`.
        #[arg(long)]
        code: Option<PathBuf>,
        /// Largest k for `bounds`.
        #[arg(long, default_value_t = 12)]
        max_k: usize,
        /// Parity counts for `bounds`.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        rs: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Hill-climb the layout for fewer random reads at equal bandwidth.
    OptimizeIo {
        code: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        budget: usize,
    },
    /// `(alpha, gamma)` series for single-failure bandwidth curves.
    PlotData {
        #[arg(long, default_value_t = 9)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        k: usize,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<usize>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    /// Bandwidth and I/O per alpha.
    Bandwidth,
    /// Condition verdicts and bandwidth of three fixed (9,6) layouts.
    Partitions,
    /// Every failure set of size t for a code file.
    Multi,
    /// Bound checks across the design space.
    Bounds,
    /// Comparison with published Piggyback numbers.
    Piggyback,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

/// Exit status classes.
enum Failure {
    Param(anyhow::Error),
    Integrity(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        if e.downcast_ref::<StoreError>().is_some() {
            Failure::Integrity(e)
        } else {
            Failure::Param(e)
        }
    }
}

trait Classify<T> {
    fn integrity(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn integrity(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Integrity(e.into()))
    }
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let t = s.trim();
    match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(h) => u32::from_str_radix(h, 16),
        None => t.parse(),
    }
    .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Param(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Integrity(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn model(cli: &Cli) -> anyhow::Result<DiskModel> {
    Ok(DiskModel::new(cli.node_bytes, cli.io_bytes)?)
}

fn load_code(path: &Path) -> anyhow::Result<CodeInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(CodeInstance::from_json(&value)?)
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let model = model(&cli)?;
    match &cli.command {
        Command::Gen { n, k, alpha, field_w, poly, max_attempts, out } => {
            let field = match poly {
                Some(p) => FieldSpec::new(*field_w, *p).map_err(anyhow::Error::from)?,
                None => FieldSpec::with_width(*field_w).map_err(anyhow::Error::from)?,
            };
            let params = CodeParams::new(*n, *k, *alpha, field).map_err(anyhow::Error::from)?;
            let arrays = build_index_arrays(&params).map_err(anyhow::Error::from)?;
            let inst = match assign_coefficients(&arrays, cli.seed, *max_attempts) {
                Ok(inst) => inst,
                Err(CodecError::NoMdsCoefficients { attempts }) => {
                    let bound = binomial(*n, *k) * (*n - *k) as u128 * *alpha as u128;
                    return Err(Failure::Param(anyhow::anyhow!(
                        "no MDS coefficients found in {attempts} attempts over GF(2^{field_w}); \
                         a field with q >= C(n,k)*r*alpha = {bound} always admits one (q = {})",
                        field.order()
                    )));
                }
                Err(e) => return Err(anyhow::Error::from(e).into()),
            };
            write_json(out, &inst.to_json())?;
            let summary = serde_json::json!({
                "params": inst.params(),
                "seed": inst.seed(),
                "attempt": inst.attempt(),
                "checksum": inst.checksum(),
                "out": out,
            });
            if cli.json {
                print_json(&summary)?;
            } else {
                println!(
                    "({n},{k}) alpha={alpha} over {} verified MDS (seed {}, attempt {}) -> {}",
                    field,
                    inst.seed(),
                    inst.attempt(),
                    out.display()
                );
            }
        }
        Command::Encode { code, input, out } => {
            let inst = load_code(code)?;
            let data = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            let m = store::encode_to_dir(&inst, &data, out)?;
            if cli.json {
                print_json(&serde_json::json!({"bytes": data.len(), "stripes": m.stripes, "dir": out}))?;
            } else {
                println!("{} bytes in {} stripes -> {}", data.len(), m.stripes, out.display());
            }
        }
        Command::Decode { dir, out } => {
            let data = store::decode_dir(dir)?;
            fs::write(out, &data).with_context(|| format!("writing {}", out.display()))?;
            if !cli.json {
                println!("{} bytes -> {}", data.len(), out.display());
            } else {
                print_json(&serde_json::json!({"bytes": data.len(), "out": out}))?;
            }
        }
        Command::Kill { dir, nodes } => {
            let (_, inst) = store::Manifest::load(dir)?;
            let ids = nodes.iter().map(|s| store::parse_node(inst.params(), s)).collect::<anyhow::Result<Vec<_>>>()?;
            let removed = store::kill(dir, &ids)?;
            if cli.json {
                print_json(&removed)?;
            } else {
                for p in removed {
                    println!("removed {}", p.display());
                }
            }
        }
        Command::Repair { dir, report } => match store::repair_dir(dir, &model)? {
            None => println!("{}", if cli.json { "null" } else { "nothing to repair" }),
            Some(r) => {
                if *report || cli.json {
                    print_json(&r)?;
                } else {
                    println!(
                        "restored {} across {} stripes reading {} symbols",
                        r.failed.join(", "),
                        r.stripes,
                        r.symbols_read_total
                    );
                }
            }
        },
        Command::Plan { code, failed } => {
            let inst = load_code(code)?;
            let p = *inst.params();
            let ids = failed.iter().map(|s| store::parse_node(&p, s)).collect::<anyhow::Result<Vec<_>>>()?;
            let plan = plan_repair(&inst, &ids).map_err(anyhow::Error::from)?;
            let out = serde_json::json!({
                "plan": plan.to_json(&p),
                "stats": repair_stats(&plan, &p),
                "io": count_reads(&plan, &model, &p),
            });
            if cli.json {
                print_json(&out)?;
            } else {
                let stats = repair_stats(&plan, &p);
                println!("method {:?}, {} symbols, gamma {:.4}", plan.method, stats.symbols_read, stats.gamma);
                for (j, rows) in &plan.reads {
                    let rows: Vec<String> = rows.iter().map(|i| (i + 1).to_string()).collect();
                    println!("  {:>4}: rows {}", node_label(&p, *j), rows.join(","));
                }
            }
        }
        Command::Inspect { path } => inspect(path, cli.json, &model)?,
        Command::Sweep { kind, n, k, alphas, t, field_w, code, max_k, rs, format } => {
            let format = if cli.json { Format::Json } else { *format };
            let opts = SweepOptions {
                field: FieldSpec::with_width(*field_w).map_err(anyhow::Error::from)?,
                seed: cli.seed,
                model,
                ..SweepOptions::default()
            };
            match kind {
                SweepKind::Bandwidth => {
                    if n <= k {
                        return Err(anyhow::anyhow!("n must exceed k").into());
                    }
                    let rows = bandwidth_sweep(*k, n - k, alphas, *t, &opts).map_err(anyhow::Error::from)?;
                    emit(&rows, format)?;
                }
                SweepKind::Partitions => emit(&partition_comparison().map_err(anyhow::Error::from)?, format)?,
                SweepKind::Multi => {
                    let Some(code) = code else { return Err(anyhow::anyhow!("--code is required").into()) };
                    let inst = load_code(code)?;
                    let report = multi_failure_report(&inst, *t).map_err(anyhow::Error::from)?;
                    if format == Format::Json {
                        print_json(&report)?;
                    } else {
                        emit(&report.cases, format)?;
                        println!(
                            "average {:.4} node units, {:.3}% below reading k nodes",
                            report.average_gamma, report.reduction_percent
                        );
                    }
                }
                SweepKind::Bounds => {
                    let scope = BoundsScope { max_k: *max_k, rs: rs.clone(), opts };
                    let report = bounds_sweep(&scope).map_err(anyhow::Error::from)?;
                    if format == Format::Json {
                        print_json(&report)?;
                    } else {
                        emit(&report.violations, format)?;
                        println!(
                            "{} codes, {} plans, {} outside bounds, {} below the cut-set floor, {} unverified",
                            report.instances,
                            report.plans,
                            report.violations.len(),
                            report.below_cut_set,
                            report.unverified.len()
                        );
                    }
                }
                SweepKind::Piggyback => emit(&piggyback_comparison(&model).map_err(anyhow::Error::from)?, format)?,
            }
        }
        Command::OptimizeIo { code, out, budget } => {
            let inst = load_code(code)?;
            let res = optimize_io(&inst, &model, *budget).map_err(anyhow::Error::from)?;
            write_json(out, &res.instance.to_json())?;
            if cli.json {
                print_json(&serde_json::json!({"before": res.before, "after": res.after, "moves": res.moves}))?;
            } else {
                println!(
                    "random {:.2} -> {:.2}, sequential {:.2} -> {:.2}, gamma {:.4}, {} moves -> {}",
                    res.before.avg_random,
                    res.after.avg_random,
                    res.before.avg_sequential,
                    res.after.avg_sequential,
                    res.after.avg_gamma,
                    res.moves,
                    out.display()
                );
            }
        }
        Command::PlotData { n, k, alphas } => {
            if n <= k {
                return Err(anyhow::anyhow!("n must exceed k").into());
            }
            let max = CodeParams::max_alpha(*k, n - k) as usize;
            let alphas = alphas.clone().unwrap_or_else(|| (1..=max).collect());
            let points = gamma_curve(*n, *k, &alphas, &model).map_err(anyhow::Error::from)?;
            if cli.json {
                print_json(&points)?;
            } else {
                for (x, y) in points {
                    println!("{x} {y:.6}");
                }
            }
        }
    }
    Ok(())
}

fn inspect(path: &Path, json: bool, model: &DiskModel) -> Result<(), Failure> {
    let (inst, shards) = if path.is_dir() {
        let (m, inst) = store::Manifest::load(path)?;
        let shards = store::load_shards(path, &m, &inst)?;
        (inst, Some((m, shards)))
    } else {
        (load_code(path)?, None)
    };
    let p = *inst.params();
    let mds = verify_mds_with(&inst, true).integrity()?;
    let fleet = fleet_io(&inst, model).map_err(anyhow::Error::from)?;
    if json {
        let mut v = serde_json::json!({
            "params": p,
            "checksum": inst.checksum(),
            "mds": mds,
            "layout": inst.arrays().to_json(),
            "single_failure": fleet,
        });
        if let Some((m, s)) = &shards {
            v["stripes"] = m.stripes.into();
            v["original_length"] = m.original_length.into();
            v["lost"] = s.lost.iter().map(|&j| node_label(&p, j)).collect::<Vec<_>>().into();
        }
        print_json(&v)?;
        return Ok(());
    }
    println!("({},{}) alpha={} over {}  mds={mds}", p.n, p.k, p.alpha, p.field);
    println!("checksum {}", inst.checksum());
    for l in 0..p.r {
        println!("P{}", l + 1);
        let arr = inst.arrays().array(l);
        for i in 0..p.alpha {
            let cells: Vec<String> = (0..arr.cols())
                .map(|c| match arr.cell(i, c) {
                    Some(s) => format!("({},{})", s.row + 1, s.node + 1),
                    None => "  .  ".into(),
                })
                .collect();
            println!("  {}", cells.join(" "));
        }
    }
    println!(
        "single failure: gamma {:.4}, random {:.2}, sequential {:.2}",
        fleet.avg_gamma, fleet.avg_random, fleet.avg_sequential
    );
    if let Some((m, s)) = shards {
        let lost: Vec<String> = s.lost.iter().map(|&j| node_label(&p, j)).collect();
        println!("{} bytes in {} stripes; lost: {}", m.original_length, m.stripes, if lost.is_empty() { "none".into() } else { lost.join(", ") });
    }
    Ok(())
}

/// Prints rows as an aligned table, CSV or JSON.
fn emit<T: Serialize>(rows: &[T], format: Format) -> anyhow::Result<()> {
    if format == Format::Json {
        return print_json(&rows);
    }
    let flat: Vec<serde_json::Map<String, serde_json::Value>> = rows
        .iter()
        .map(|r| flatten(&serde_json::to_value(r).expect("rows serialise")))
        .collect();
    let Some(first) = flat.first() else {
        if format == Format::Table {
            println!("(no rows)");
        }
        return Ok(());
    };
    let headers: Vec<&String> = first.keys().collect();
    let cell = |v: &serde_json::Value| match v {
        serde_json::Value::Number(n) if n.is_f64() => format!("{:.4}", n.as_f64().unwrap_or_default()),
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    };
    let body: Vec<Vec<String>> = flat.iter().map(|m| headers.iter().map(|h| cell(&m[*h])).collect()).collect();
    if format == Format::Csv {
        let mut w = csv::Writer::from_writer(std::io::stdout());
        w.write_record(&headers)?;
        for row in &body {
            w.write_record(row)?;
        }
        w.flush()?;
        return Ok(());
    }
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(c, h)| body.iter().map(|r| r[c].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
    };
    println!("{}", line(headers.iter().map(|h| h.as_str()).collect()));
    for row in &body {
        println!("{}", line(row.iter().map(String::as_str).collect()));
    }
    Ok(())
}

/// One level of nested objects becomes `outer.inner` columns.
fn flatten(v: &serde_json::Value) -> serde_json::Map<String, serde_json::Value> {
    let mut out = serde_json::Map::new();
    if let serde_json::Value::Object(m) = v {
        for (k, val) in m {
            match val {
                serde_json::Value::Object(inner) => {
                    for (ik, iv) in inner {
                        out.insert(format!("{k}.{ik}"), iv.clone());
                    }
                }
                other => {
                    out.insert(k.clone(), other.clone());
                }
            }
        }
    }
    out
}
