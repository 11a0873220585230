//! Command-line front end.
//!
//! Every failure is reported as one line on stderr,
//! `error: code=<code> exit=<status> msg=<text>`, and mapped to a fixed exit
//! status. Usage errors exit with 2.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::data::{bayesian_average, predicted_labels, Dims, LabelMap, MapId, Scope, UncertaintyMap};
use crate::error::{Error, Result};
use crate::eval::{
    brats_unc, class_specific_mask, evaluate_case, misclassification_mask, pr_curve, CaseEvaluation,
    EvalRecord, Metric,
};
use crate::io::npy::{read_labels, read_map, read_samples, write_labels, write_map, write_samples};
use crate::io::records::{
    read_comparison_json, read_records_file, write_brats_curves_csv, write_comparison_csv,
    write_comparison_json, write_modes_csv, write_pr_curve_csv, write_records,
};
use crate::io::RunConfig;
use crate::maps::{all_requests, compute_maps, compute_maps_with_labels, requests_for, MapRequest};
use crate::stats::{compare_maps, mode_correlation, Grouping, ModelFilter};
use crate::synth::{generate_phantom, DropoutKind, PhantomSpec};

pub const THREADS_ENV: &str = "UNCMAP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "uncmap", version, about = "Epistemic uncertainty maps from MC-dropout samples")]
pub struct Cli {
    /// JSON file overriding the default run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a phantom sample tensor and its labels.
    Synth(SynthArgs),
    /// Compute uncertainty maps from a sample tensor.
    Maps(MapsArgs),
    /// Score maps against ground truth and write evaluation records.
    Evaluate(EvaluateArgs),
    /// Write PR and BRATS-UNC curve points.
    Curves(CurvesArgs),
    /// Pairwise Bayesian comparison of maps from evaluation records.
    Compare(CompareArgs),
    /// Correlate posterior modes of two comparison matrices.
    Modes(ModesArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out_samples: PathBuf,
    #[arg(long)]
    out_labels: PathBuf,
    #[arg(long, default_value_t = 64)]
    nx: usize,
    #[arg(long, default_value_t = 64)]
    ny: usize,
    #[arg(long, default_value_t = 8)]
    nz: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    /// bernoulli, gaussian or none.
    #[arg(long, default_value = "bernoulli")]
    dropout: String,
    #[arg(long, default_value_t = 0.3)]
    rate: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    sharpness: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    anatomy_seed: u64,
}

#[derive(Debug, Args)]
struct MapsArgs {
    /// Print the map ids and exit.
    #[arg(long)]
    list: bool,
    #[arg(long, required_unless_present = "list")]
    samples: Option<PathBuf>,
    #[arg(long, required_unless_present = "list")]
    out_dir: Option<PathBuf>,
    /// Map id to compute; repeat for several. Defaults to all ten.
    #[arg(long = "map")]
    maps: Vec<String>,
    /// Also write the predicted labels of the averaged prediction.
    #[arg(long)]
    pred_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// CSV naming one case per row: model_id, patient_id, labels and any of
    /// samples, pred, maps_dir.
    #[arg(long, conflicts_with_all = ["samples", "labels", "pred", "maps_dir"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Ground-truth labels.
    #[arg(long, required_unless_present = "manifest")]
    labels: Option<PathBuf>,
    /// Predicted labels; defaults to the argmax of the averaged prediction.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Read precomputed maps from here instead of computing them.
    #[arg(long)]
    maps_dir: Option<PathBuf>,
    #[arg(long, default_value = "model")]
    model_id: String,
    #[arg(long, default_value = "patient")]
    patient_id: String,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long = "map")]
    maps: Vec<String>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    records: PathBuf,
    /// auc_pr_combined, auc_pr_class, brats_unc or dice.
    #[arg(long)]
    metric: String,
    #[arg(long)]
    class: Option<usize>,
    /// model or patient.
    #[arg(long)]
    grouping: Option<String>,
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    min_dice: Option<f64>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModesArgs {
    #[arg(long)]
    full: PathBuf,
    #[arg(long)]
    subset: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                print!("{e}");
                return 0;
            }
            _ => {
                let text = e.to_string();
                let first = text
                    .lines()
                    .find(|l| !l.trim().is_empty())
                    .unwrap_or("invalid usage")
                    .trim_start_matches("error: ");
                eprintln!("error: code=usage exit=2 msg={first}");
                return 2;
            }
        },
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: code={} exit={} msg={msg}", e.code(), e.exit_code());
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    configure_threads()?;
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Maps(a) => maps(a, &cfg),
        Command::Evaluate(a) => evaluate(a, &cfg),
        Command::Curves(a) => curves(a, &cfg),
        Command::Compare(a) => compare(a, &cfg),
        Command::Modes(a) => modes(a),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Argument(format!("{THREADS_ENV} must be a non-negative integer, got '{raw}'")))?;
    if n > 0 {
        // Fails only if a pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn parse_map_ids(raw: &[String]) -> Result<Vec<MapId>> {
    if raw.is_empty() {
        return Ok(MapId::ALL.to_vec());
    }
    raw.iter().map(|s| s.parse()).collect()
}

fn synth(a: SynthArgs) -> Result<()> {
    let dropout = match a.dropout.as_str() {
        "none" => None,
        other => Some(other.parse::<DropoutKind>()?),
    };
    let spec = PhantomSpec {
        dims: Dims::new(a.nx, a.ny, a.nz),
        classes: a.classes,
        samples: a.samples,
        dropout,
        dropout_rate: a.rate,
        noise_scale: a.noise,
        sharpness: a.sharpness,
        seed: a.seed,
        anatomy_seed: a.anatomy_seed,
    };
    let (samples, labels) = generate_phantom(&spec)?;
    write_samples(&a.out_samples, &samples)?;
    write_labels(&a.out_labels, &labels)
}

fn check_samples(cfg: &RunConfig, t: usize, path: &Path) {
    if t != cfg.expected_samples {
        eprintln!(
            "warning: {} has {t} samples, expected {}",
            path.display(),
            cfg.expected_samples
        );
    }
}

fn maps(a: MapsArgs, cfg: &RunConfig) -> Result<()> {
    if a.list {
        let mut out = std::io::stdout().lock();
        for id in MapId::ALL {
            writeln!(out, "{id}")?;
        }
        return Ok(());
    }
    let (Some(samples_path), Some(out_dir)) = (a.samples, a.out_dir) else {
        return Err(Error::Argument("--samples and --out-dir are required".into()));
    };
    let ids = parse_map_ids(&a.maps)?;
    let s = read_samples(&samples_path)?;
    check_samples(cfg, s.samples(), &samples_path);
    std::fs::create_dir_all(&out_dir)?;
    let requests = requests_for(&ids, s.classes());
    let (maps, labels) = compute_maps_with_labels(&s, &requests, cfg.measure())?;
    drop(s);
    for m in &maps {
        write_map(&out_dir.join(format!("{}.npy", m.file_stem())), m)?;
    }
    if let Some(p) = a.pred_out {
        write_labels(&p, &labels)?;
    }
    Ok(())
}

/// Reads every map file present in `dir` for the given class count.
fn read_maps_dir(dir: &Path, classes: usize) -> Result<Vec<UncertaintyMap>> {
    let mut maps = Vec::new();
    for r in all_requests(classes) {
        let stem = match r.scope {
            Scope::Combined => r.id.as_str().to_string(),
            Scope::Class(c) => format!("{}_c{c}", r.id.as_str()),
        };
        let path = dir.join(format!("{stem}.npy"));
        if path.exists() {
            maps.push(read_map(&path, r.id, r.scope)?);
        }
    }
    if maps.is_empty() {
        return Err(Error::Argument(format!("no map files in {}", dir.display())));
    }
    Ok(maps)
}

struct Case {
    model_id: String,
    patient_id: String,
    samples: Option<PathBuf>,
    labels: PathBuf,
    pred: Option<PathBuf>,
    maps_dir: Option<PathBuf>,
}

fn run_case(case: &Case, cfg: &RunConfig) -> Result<CaseEvaluation> {
    let s = match &case.samples {
        Some(p) => {
            let s = read_samples(p)?;
            check_samples(cfg, s.samples(), p);
            Some(s)
        }
        None => None,
    };
    // without a tensor the class count comes from the configured class names
    let classes = s.as_ref().map_or(cfg.class_names.len(), |s| s.classes());
    let gt = read_labels(&case.labels, classes)?;
    let pred = match (&case.pred, &s) {
        (Some(p), _) => read_labels(p, classes)?,
        (None, Some(s)) => predicted_labels(&bayesian_average(s)),
        (None, None) => return Err(Error::Argument(missing_input(case))),
    };
    let maps = match (&case.maps_dir, &s) {
        (Some(dir), _) => read_maps_dir(dir, classes)?,
        (None, Some(s)) => compute_maps(s, &all_requests(classes), cfg.measure())?,
        (None, None) => return Err(Error::Argument(missing_input(case))),
    };
    drop(s);
    evaluate_case(&case.model_id, &case.patient_id, &pred, &gt, &maps, cfg.n_bins)
}

fn missing_input(case: &Case) -> String {
    format!(
        "case {}/{} needs samples, or both pred and maps_dir",
        case.model_id, case.patient_id
    )
}

/// Columns are matched by name. `model_id`, `patient_id` and `labels` are
/// required; `samples`, `pred` and `maps_dir` are optional. Relative paths
/// are resolved against the manifest's directory.
fn read_manifest(path: &Path) -> Result<Vec<Case>> {
    const KNOWN: [&str; 6] = ["model_id", "patient_id", "samples", "labels", "pred", "maps_dir"];
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if let Some(h) = header.iter().find(|h| !KNOWN.contains(&h.as_str())) {
        return Err(Error::Record(format!("unknown manifest column '{h}'")));
    }
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(model), Some(patient), Some(labels)) = (col("model_id"), col("patient_id"), col("labels"))
    else {
        return Err(Error::Record(
            "manifest needs model_id, patient_id and labels columns".into(),
        ));
    };
    let (samples, pred, maps_dir) = (col("samples"), col("pred"), col("maps_dir"));
    let mut cases = Vec::new();
    for row in reader.records() {
        let row = row?;
        let opt = |i: Option<usize>| {
            i.and_then(|i| row.get(i))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(resolve)
        };
        cases.push(Case {
            model_id: row[model].trim().to_string(),
            patient_id: row[patient].trim().to_string(),
            samples: opt(samples),
            labels: resolve(row[labels].trim()),
            pred: opt(pred),
            maps_dir: opt(maps_dir),
        });
    }
    Ok(cases)
}

fn evaluate(a: EvaluateArgs, cfg: &RunConfig) -> Result<()> {
    let cases = match &a.manifest {
        Some(m) => read_manifest(m)?,
        None => vec![Case {
            model_id: a.model_id.clone(),
            patient_id: a.patient_id.clone(),
            samples: a.samples.clone(),
            labels: a.labels.clone().expect("required by clap"),
            pred: a.pred.clone(),
            maps_dir: a.maps_dir.clone(),
        }],
    };
    let results: Vec<CaseEvaluation> = cases
        .par_iter()
        .map(|c| run_case(c, cfg))
        .collect::<Result<_>>()?;
    let mut records: Vec<EvalRecord> = Vec::new();
    for (case, r) in cases.iter().zip(results) {
        for s in &r.skipped {
            eprintln!("warning: {}/{}: skipped {s}", case.model_id, case.patient_id);
        }
        records.extend(r.records);
    }
    write_records(output(a.out.as_deref())?, &records)
}

fn curves(a: CurvesArgs, cfg: &RunConfig) -> Result<()> {
    let ids = parse_map_ids(&a.maps)?;
    let s = read_samples(&a.samples)?;
    let gt = read_labels(&a.labels, s.classes())?;
    let pred: LabelMap = match &a.pred {
        Some(p) => read_labels(p, s.classes())?,
        None => predicted_labels(&bayesian_average(&s)),
    };
    let requests: Vec<MapRequest> = requests_for(&ids, s.classes());
    let maps = compute_maps(&s, &requests, cfg.measure())?;
    std::fs::create_dir_all(&a.out_dir)?;
    let mis = misclassification_mask(&pred, &gt)?;
    for m in &maps {
        let stem = m.file_stem();
        let mask = match m.scope {
            Scope::Combined => mis.clone(),
            Scope::Class(c) => class_specific_mask(&pred, &gt, c)?,
        };
        match pr_curve(m.values(), &mask) {
            Ok(curve) => {
                let f = BufWriter::new(File::create(a.out_dir.join(format!("pr_{stem}.csv")))?);
                write_pr_curve_csv(f, &curve)?;
            }
            Err(Error::Undefined(msg)) => eprintln!("warning: pr curve for {stem} skipped: {msg}"),
            Err(e) => return Err(e),
        }
        if let Scope::Class(c) = m.scope {
            let (_, curves) = brats_unc(m.values(), &pred.class_mask(c), &gt.class_mask(c), cfg.n_bins)?;
            let f = BufWriter::new(File::create(a.out_dir.join(format!("brats_{stem}.csv")))?);
            write_brats_curves_csv(f, &curves)?;
        }
    }
    Ok(())
}

fn compare(a: CompareArgs, cfg: &RunConfig) -> Result<()> {
    let records = read_records_file(&a.records)?;
    let metric = Metric::from_parts(a.metric.trim(), a.class)?;
    let grouping = match &a.grouping {
        Some(g) => g.parse::<Grouping>()?,
        None => cfg.grouping,
    };
    let filter = ModelFilter {
        top: a.top.or(cfg.top),
        min_dice: a.min_dice.or(cfg.min_dice),
    };
    if filter.top == Some(0) {
        return Err(Error::Argument("--top must be at least 1".into()));
    }
    let level = a.level.unwrap_or(cfg.credible_level);
    let matrix = compare_maps(&records, metric, grouping, &filter, level)?;
    if a.out_csv.is_none() && a.out_json.is_none() {
        return write_comparison_csv(output(None)?, &matrix);
    }
    if let Some(p) = &a.out_csv {
        write_comparison_csv(output(Some(p))?, &matrix)?;
    }
    if let Some(p) = &a.out_json {
        write_comparison_json(output(Some(p))?, &matrix)?;
    }
    Ok(())
}

fn modes(a: ModesArgs) -> Result<()> {
    let full = read_comparison_json(&a.full)?;
    let subset = read_comparison_json(&a.subset)?;
    let points = mode_correlation(&full, &subset)?;
    write_modes_csv(output(a.out.as_deref())?, &points)
}
