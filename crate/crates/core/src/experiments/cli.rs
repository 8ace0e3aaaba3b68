//! `harbench` subcommands. Every training command writes the fully resolved
//! protocol as `protocol.json` next to its outputs; feeding that file back
//! through `--protocol` with the same seed reproduces the outputs exactly.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use super::{emit_curves, run_sweep, value_label, SweepScope, SweepSpec, DEFAULT_SEEDS};
use crate::data::{generate_synthetic, load_dataset, save_dataset, DatasetMeta, SensorDataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::evaluation::{compare, run_fold, run_loso, FoldRecord, ResultTable};
use crate::models::{save_checkpoint, Arch, ModelSpec};
use crate::protocol::{audit, load_preset, preset_source, Base, Component, ComponentStatus, TrainingProtocol};
use crate::util::write_atomic;

#[derive(Debug, Parser)]
#[command(name = "harbench", version, about = "Declarative training procedures and LOSO benchmarks for HAR models")]
pub struct Cli {
    /// Seed overriding the protocol's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = "harbench-out")]
    out_dir: PathBuf,
    /// Training-protocol JSON file.
    #[arg(long, global = true)]
    protocol: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train and test a single LOSO fold.
    Run {
        #[command(flatten)]
        setup: Setup,
        /// Held-out subject (default: the lowest id).
        #[arg(long)]
        subject: Option<u32>,
    },
    /// Full leave-one-subject-out cross-validation.
    Loso {
        #[command(flatten)]
        setup: Setup,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Control-variates sweep of one protocol field.
    Sweep {
        #[command(flatten)]
        setup: Setup,
        /// Protocol field to vary.
        #[arg(long)]
        factor: String,
        /// Comma-separated values; each is parsed as JSON, else taken as a string.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Run every fold instead of only the first subject's.
        #[arg(long)]
        full_loso: bool,
    },
    /// LOSO study of two procedures across model families.
    Compare {
        #[arg(long, default_value = "comm")]
        preset_a: String,
        #[arg(long, default_value = "new")]
        preset_b: String,
        /// Protocol file used for procedure B instead of `--preset-b`.
        #[arg(long)]
        protocol_b: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "MCNN,CNNLSTM,TRANSFORMER")]
        models: Vec<Arch>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        widths: WidthArgs,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Report which protocol components a document specifies.
    Audit {
        /// Protocol document (defaults to `--protocol`).
        file: Option<PathBuf>,
        /// Audit a shipped preset instead of a file.
        #[arg(long, conflicts_with = "file")]
        preset: Option<String>,
    },
    /// Generate a synthetic dataset in the canonical on-disk layout.
    Synth {
        /// Copy the shape of a benchmark (DSADS, HAPT, OPPO, PAMAP2, RWHAR).
        #[arg(long)]
        like: Option<String>,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        window_length: Option<usize>,
        /// Activity segments per class in each recording.
        #[arg(long)]
        segments_per_class: Option<usize>,
        /// Segment length in windows.
        #[arg(long)]
        segment_windows: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory, `synth`, or `synth:<BENCHMARK>`.
    #[arg(long)]
    dataset: Option<String>,
    /// Seed of the synthetic generator.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(Debug, Args)]
struct WidthArgs {
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    ff_dim: Option<usize>,
}

#[derive(Debug, Args)]
struct Setup {
    /// Shipped preset used when `--protocol` is absent.
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    data: DataArgs,
    /// Architecture; defaults to the protocol's resolved model, else MCNN.
    #[arg(long)]
    model: Option<Arch>,
    #[command(flatten)]
    widths: WidthArgs,
}

impl WidthArgs {
    fn apply(&self, spec: &mut ModelSpec) {
        let fields = [
            (self.filters, &mut spec.filters),
            (self.kernel_size, &mut spec.kernel_size),
            (self.depth, &mut spec.depth),
            (self.hidden, &mut spec.hidden),
            (self.d_model, &mut spec.d_model),
            (self.heads, &mut spec.heads),
            (self.ff_dim, &mut spec.ff_dim),
        ];
        for (v, slot) in fields {
            if let Some(v) = v {
                *slot = v;
            }
        }
    }
}

/// Loads and validates a protocol file, reporting unknown keys on stderr.
pub fn read_protocol(path: &Path) -> Result<TrainingProtocol> {
    let text = std::fs::read_to_string(path)?;
    let (p, warnings) = TrainingProtocol::from_json_str(&text)?;
    for w in warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    p.validate()
}

fn base_protocol(file: Option<&Path>, preset: Option<&str>, seed: Option<u64>) -> Result<TrainingProtocol> {
    let mut p = match (file, preset) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument("give either --protocol or --preset, not both".into()))
        }
        (Some(f), None) => read_protocol(f)?,
        (None, p) => load_preset(p.unwrap_or("cv-baseline"))?,
    };
    if let Some(s) = seed {
        p.seed = s;
    }
    p.validate()
}

struct ResolvedData {
    dataset: SensorDataset,
    description: Value,
}

fn resolve_data(args: &DataArgs, protocol: &TrainingProtocol) -> Result<ResolvedData> {
    let recorded = protocol.dataset_description.as_ref();
    let source = match &args.dataset {
        Some(s) => s.clone(),
        None => recorded
            .and_then(|d| d.get("source"))
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::InvalidArgument("--dataset is required".into()))?,
    };
    let data_seed = match (&args.dataset, recorded.and_then(|d| d.get("data_seed")).and_then(Value::as_u64)) {
        (None, Some(s)) => s,
        _ => args.data_seed,
    };
    let (dataset, synthetic) = if let Some(rest) = source.strip_prefix("synth") {
        let cfg = match rest.strip_prefix(':') {
            None if rest.is_empty() => SyntheticConfig {
                seed: data_seed,
                ..SyntheticConfig::default()
            },
            Some(name) => {
                let meta = DatasetMeta::benchmark(name)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown benchmark `{name}`")))?;
                SyntheticConfig::like(&meta, data_seed)
            }
            None => return Err(Error::InvalidArgument(format!("unknown dataset source `{source}`"))),
        };
        (generate_synthetic(&cfg)?, Some(cfg))
    } else {
        (load_dataset(&source)?, None)
    };
    let mut description = json!({ "source": source, "meta": dataset.meta });
    if let Some(cfg) = synthetic {
        description["data_seed"] = json!(data_seed);
        description["synthetic"] = serde_json::to_value(cfg)?;
    }
    Ok(ResolvedData { dataset, description })
}

/// Model from `--model` (plus overrides), else from the protocol's recorded
/// `ModelSpec`, else MCNN at default widths.
fn resolve_model(
    arch: Option<Arch>,
    widths: &WidthArgs,
    protocol: &TrainingProtocol,
    meta: &DatasetMeta,
) -> Result<ModelSpec> {
    let recorded = protocol
        .model_parameters
        .as_ref()
        .filter(|v| v.get("arch").is_some())
        .map(|v| serde_json::from_value::<ModelSpec>(v.clone()))
        .transpose()
        .map_err(|e| Error::Parse(format!("model_parameters: {e}")))?;
    let mut spec = match (arch, recorded) {
        (None, Some(spec)) => spec,
        (a, _) => ModelSpec::new(a.unwrap_or(Arch::Mcnn), meta.window_length, meta.n_channels, meta.n_classes),
    };
    widths.apply(&mut spec);
    if (spec.window_length, spec.n_channels, spec.n_classes) != (meta.window_length, meta.n_channels, meta.n_classes)
    {
        return Err(Error::Config(format!(
            "model shape ({}, {}) -> {} does not fit dataset `{}`",
            spec.window_length, spec.n_channels, spec.n_classes, meta.name
        )));
    }
    spec.check()?;
    Ok(spec)
}

fn resolved(mut protocol: TrainingProtocol, data: &ResolvedData, spec: Option<&ModelSpec>) -> TrainingProtocol {
    protocol.dataset_description = Some(data.description.clone());
    if let Some(spec) = spec {
        protocol.model_parameters = Some(serde_json::to_value(spec).expect("spec serializes"));
    }
    protocol
}

fn write(out_dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    write_atomic(&path, contents.as_ref())?;
    Ok(path)
}

fn seeds_or_default(seeds: Option<Vec<u64>>, seed: Option<u64>) -> Vec<u64> {
    seeds.unwrap_or_else(|| seed.map_or_else(|| DEFAULT_SEEDS.to_vec(), |s| vec![s]))
}

fn print_groups(table: &ResultTable) {
    for (k, g) in table.groups() {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{} {} {}: mean macro F1 {} (std {}, {} runs, {} failed)",
            k.model,
            k.procedure,
            k.dataset,
            fmt(g.mean),
            fmt(g.std),
            g.values.len() + g.n_failed,
            g.n_failed
        );
    }
}

fn run_traces(table: &ResultTable) -> Vec<(String, Vec<crate::engine::TrainingTrace>)> {
    let traces = table.rows().iter().filter_map(|r| r.trace.clone()).collect();
    vec![("subjects".to_string(), traces)]
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            let _ = e.print();
            std::process::exit(0)
        }
        _ => Error::InvalidArgument(e.to_string()),
    })?;
    execute(cli)
}

fn execute(cli: Cli) -> Result<()> {
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Run { setup, subject } => {
            let p = base_protocol(cli.protocol.as_deref(), setup.preset.as_deref(), cli.seed)?;
            let data = resolve_data(&setup.data, &p)?;
            let spec = resolve_model(setup.model, &setup.widths, &p, &data.dataset.meta)?;
            let subject = match subject {
                Some(s) => s,
                None => *data.dataset.subjects().first().ok_or(Error::InvalidArgument("dataset has no subjects".into()))?,
            };
            let p = resolved(p, &data, Some(&spec));
            write(out, "protocol.json", p.to_json_pretty())?;
            let fold = run_fold(&p, &data.dataset, &spec, p.seed, subject)?;
            let trace = &fold.training.trace;
            write(out, "trace.csv", trace.to_csv())?;
            save_checkpoint(&fold.training.checkpoint, out.join("checkpoint.bin"))?;
            let mut table = ResultTable::default();
            table.push(FoldRecord {
                model: spec.arch.name().to_string(),
                procedure: setup.preset.unwrap_or_else(|| "custom".into()),
                dataset: data.dataset.meta.name.clone(),
                seed: p.seed,
                subject,
                macro_f1: Some(fold.test.macro_f1),
                diverged: trace.diverged(),
                error: None,
                confusion: Some(fold.test.confusion.clone()),
                trace: None,
            });
            write(out, "results.csv", table.results_csv())?;
            emit_curves(&[("run".into(), vec![trace.clone()])], Base::ValLoss, out, "curves")?;
            println!(
                "subject {subject}: {} epochs, selected epoch {}, test macro F1 {:.4}",
                trace.records.len(),
                trace.selected_epoch,
                fold.test.macro_f1
            );
        }
        Command::Loso { setup, seeds } => {
            let p = base_protocol(cli.protocol.as_deref(), setup.preset.as_deref(), cli.seed)?;
            let data = resolve_data(&setup.data, &p)?;
            let spec = resolve_model(setup.model, &setup.widths, &p, &data.dataset.meta)?;
            let seeds = seeds_or_default(seeds, cli.seed);
            let p = resolved(p, &data, Some(&spec));
            write(out, "protocol.json", p.to_json_pretty())?;
            let name = setup.preset.unwrap_or_else(|| "custom".into());
            let table = run_loso(&p, &name, &data.dataset, &spec, &seeds)?;
            write(out, "results.csv", table.results_csv())?;
            write(out, "summary.csv", table.summary_csv())?;
            emit_curves(&run_traces(&table), Base::ValMetric, out, "curves")?;
            for r in table.rows().iter().filter(|r| r.error.is_some()) {
                eprintln!("seed {} subject {}: {}", r.seed, r.subject, r.error.as_deref().unwrap_or(""));
            }
            print_groups(&table);
        }
        Command::Sweep {
            setup,
            factor,
            values,
            seeds,
            full_loso,
        } => {
            let p = base_protocol(cli.protocol.as_deref(), setup.preset.as_deref(), cli.seed)?;
            let data = resolve_data(&setup.data, &p)?;
            let spec = resolve_model(setup.model.or(Some(Arch::Cnnlstm)), &setup.widths, &p, &data.dataset.meta)?;
            let values: Vec<Value> = values
                .iter()
                .map(|v| serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.clone())))
                .collect();
            let baseline = resolved(p, &data, Some(&spec));
            let sweep = SweepSpec::new(baseline.clone(), factor, values);
            let scope = if full_loso { SweepScope::FullLoso } else { SweepScope::FirstSubject };
            let seeds = seeds_or_default(seeds, cli.seed);
            let result = run_sweep(&sweep, &data.dataset, &spec, &seeds, scope)?;
            write(out, "protocol.json", baseline.to_json_pretty())?;
            for (v, proto) in result.values.iter().zip(&result.protocols) {
                let label = value_label(v).replace(['/', '\\', ' '], "_");
                write(&out.join("protocols"), &format!("{}={label}.json", result.factor), proto.to_json_pretty())?;
            }
            write(out, "sweep_traces.csv", result.traces_csv())?;
            write(out, "sweep_summary.csv", result.summary_csv())?;
            let fams = result.families();
            emit_curves(&fams, Base::ValLoss, out, "sweep")?;
            for v in &result.values {
                let fin = result.final_mean(v, Base::ValLoss);
                match fin {
                    Some(x) => println!("{}={}: final val loss {x:.5}", result.factor, value_label(v)),
                    None => println!("{}={}: diverged", result.factor, value_label(v)),
                }
            }
        }
        Command::Compare {
            preset_a,
            preset_b,
            protocol_b,
            models,
            data,
            widths,
            seeds,
        } => {
            let a = base_protocol(cli.protocol.as_deref(), cli.protocol.is_none().then_some(preset_a.as_str()), cli.seed)?;
            let b = base_protocol(protocol_b.as_deref(), protocol_b.is_none().then_some(preset_b.as_str()), cli.seed)?;
            let name_a = if cli.protocol.is_some() { "a".to_string() } else { preset_a };
            let name_b = if protocol_b.is_some() { "b".to_string() } else { preset_b };
            if name_a == name_b {
                return Err(Error::InvalidArgument("the two procedures need distinct names".into()));
            }
            let resolved_data = resolve_data(&data, &a)?;
            let seeds = seeds_or_default(seeds, cli.seed);
            let mut table = ResultTable::default();
            for (name, p) in [(&name_a, &a), (&name_b, &b)] {
                let p = resolved(p.clone(), &resolved_data, None);
                write(out, &format!("protocol-{name}.json"), p.to_json_pretty())?;
                for &arch in &models {
                    let spec = resolve_model(Some(arch), &widths, &p, &resolved_data.dataset.meta)?;
                    table.extend(run_loso(&p, name, &resolved_data.dataset, &spec, &seeds)?);
                }
            }
            write(out, "results.csv", table.results_csv())?;
            write(out, "summary.csv", table.summary_csv())?;
            let cmp = compare(&table, &name_a, &name_b);
            write(out, "comparison.csv", cmp.to_csv())?;
            write(out, "comparison.txt", cmp.to_text())?;
            print!("{}", cmp.to_text());
        }
        Command::Audit { file, preset } => {
            let (label, text) = match (preset, file.or(cli.protocol)) {
                (Some(name), _) => (
                    name.clone(),
                    preset_source(&name).ok_or(Error::UnknownPreset(name))?.to_string(),
                ),
                (None, Some(path)) => (path.display().to_string(), std::fs::read_to_string(&path)?),
                (None, None) => return Err(Error::InvalidArgument("audit needs a protocol file".into())),
            };
            let report = audit(&text)?;
            println!("{label}: {}/{}", report.completeness_score, Component::ALL.len());
            for (c, s) in &report.component_status {
                let mark = if *s == ComponentStatus::Present { "PRESENT" } else { "MISSING" };
                println!("  {mark:<8} {}", c.label());
            }
            for w in &report.warnings {
                println!("  warning: {w}");
            }
        }
        Command::Synth {
            like,
            subjects,
            channels,
            classes,
            window_length,
            segments_per_class,
            segment_windows,
        } => {
            let seed = cli.seed.unwrap_or(0);
            let mut cfg = match like {
                Some(name) => {
                    let meta = DatasetMeta::benchmark(&name)
                        .ok_or_else(|| Error::InvalidArgument(format!("unknown benchmark `{name}`")))?;
                    SyntheticConfig::like(&meta, seed)
                }
                None => SyntheticConfig {
                    seed,
                    ..SyntheticConfig::default()
                },
            };
            cfg.n_subjects = subjects.unwrap_or(cfg.n_subjects);
            cfg.n_channels = channels.unwrap_or(cfg.n_channels);
            cfg.n_classes = classes.unwrap_or(cfg.n_classes);
            cfg.window_length = window_length.unwrap_or(cfg.window_length);
            cfg.segments_per_class = segments_per_class.unwrap_or(cfg.segments_per_class);
            cfg.segment_windows = segment_windows.unwrap_or(cfg.segment_windows);
            let ds = generate_synthetic(&cfg)?;
            save_dataset(&ds, out)?;
            write(out, "synthetic.json", serde_json::to_string_pretty(&cfg)?)?;
            println!(
                "wrote {} subjects, {} channels, {} classes to {}",
                ds.meta.n_subjects,
                ds.meta.n_channels,
                ds.meta.n_classes,
                out.display()
            );
        }
    }
    Ok(())
}
