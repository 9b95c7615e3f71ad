use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use vinemark_core::agrovars::{
    area_error, bud_count_error, internode_error, AreaErrorBreakdown, BudCountError,
    PlantAssumptions,
};
use vinemark_core::harness::{
    best_per_metric, evaluate_detector, family_histograms, load_samples, read_manifest,
    render_markdown, scatter_rows, write_scatter_csv, write_table_csv, DetectorSpec, Family,
    HistMetric, ImageError, Metric, Sample, ScatterKind, Selection, SweepSummary, TableRow,
    Threshold,
};
use vinemark_core::io::{read_mask, read_probability_map, write_mask, write_pgm};
use vinemark_core::metrics::{DetectionCounts, ImageEvaluation};
use vinemark_core::raster::Connectivity;
use vinemark_core::swdetect::{
    build_grid, threshold_votes, vote, CsvLabelClassifier, PatchClassifier, TruthOracleClassifier,
};
use vinemark_core::synth::write_corpus;

use crate::{EvalArgs, Format, ReportArgs, ReportKind, SwArgs, SweepArgs, SynthArgs, VarsArgs};

pub enum Outcome {
    Complete,
    /// The run finished but this many images could not be evaluated.
    Partial(usize),
}

impl Outcome {
    fn from_errors(n: usize) -> Self {
        if n == 0 {
            Outcome::Complete
        } else {
            Outcome::Partial(n)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ToolInfo {
    name: String,
    version: String,
}

impl ToolInfo {
    fn current() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load(manifest: &Path, connectivity: Connectivity) -> Result<(Vec<Sample>, Vec<ImageError>)> {
    let entries = read_manifest(manifest)
        .with_context(|| format!("reading manifest {}", manifest.display()))?;
    Ok(load_samples(&entries, connectivity))
}

#[derive(Debug, Serialize)]
struct EvalConfig {
    manifest: String,
    label: String,
    detector: DetectorSpec,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    tool: ToolInfo,
    config: EvalConfig,
    counts: DetectionCounts,
    summary: SweepSummary,
    row: TableRow,
    images: Vec<ImageEvaluation>,
    errors: Vec<ImageError>,
}

pub fn eval(args: &EvalArgs) -> Result<Outcome> {
    let (family, threshold) = match (args.tau, args.nu) {
        (Some(t), None) => (Family::Fcn, Threshold::Tau(t)),
        (None, Some(n)) => (Family::Sw, Threshold::Nu(n)),
        _ => bail!("pass exactly one of --tau or --nu"),
    };
    let spec = DetectorSpec::new(
        family,
        args.variant.clone(),
        threshold,
        args.alpha,
        args.connectivity,
    )?;
    let (samples, mut errors) = load(&args.manifest, args.connectivity)?;
    if samples.is_empty() {
        let detail: Vec<String> = errors
            .iter()
            .map(|e| format!("{}: {}", e.image_id, e.message))
            .collect();
        bail!("no image could be loaded:\n  {}", detail.join("\n  "));
    }
    let evaluation = evaluate_detector(&spec, &samples)?;
    errors.extend(evaluation.errors);
    let report = EvalReport {
        tool: ToolInfo::current(),
        config: EvalConfig {
            manifest: args.manifest.display().to_string(),
            label: spec.label(),
            detector: spec,
        },
        counts: evaluation.summary.counts,
        row: evaluation.summary.table_row(),
        summary: evaluation.summary,
        images: evaluation.images,
        errors,
    };
    emit(args.out.as_deref(), &to_json(&report)?)?;
    Ok(Outcome::from_errors(report.errors.len()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectorSource {
    family: Family,
    variant: String,
    manifest: PathBuf,
}

fn parse_sources(args: &SweepArgs) -> Result<Vec<DetectorSource>> {
    let mut out = Vec::new();
    for (family, specs) in [(Family::Fcn, &args.fcn), (Family::Sw, &args.sw)] {
        for s in specs {
            let (variant, manifest) = s
                .split_once('=')
                .with_context(|| format!("expected NAME=MANIFEST, got {s:?}"))?;
            ensure!(!variant.is_empty(), "empty detector name in {s:?}");
            if family == Family::Sw {
                let size: usize = variant
                    .parse()
                    .with_context(|| format!("window size must be an integer, got {variant:?}"))?;
                ensure!(size > 0, "window size must be positive");
            }
            out.push(DetectorSource {
                family,
                variant: variant.to_string(),
                manifest: PathBuf::from(manifest),
            });
        }
    }
    ensure!(
        !out.is_empty(),
        "no detectors given; pass --fcn VARIANT=MANIFEST or --sw SIZE=MANIFEST"
    );
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepRun {
    alpha: f64,
    summaries: Vec<SweepSummary>,
    rows: Vec<TableRow>,
    selection: Selection,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
struct SweepError {
    detector: String,
    image_id: String,
    message: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepReport {
    tool: ToolInfo,
    connectivity: Connectivity,
    detectors: Vec<DetectorSource>,
    runs: Vec<SweepRun>,
    errors: Vec<SweepError>,
}

fn thresholds(family: Family, args: &SweepArgs) -> Vec<Threshold> {
    match family {
        Family::Fcn => args.tau.iter().map(|&t| Threshold::Tau(t)).collect(),
        Family::Sw => args.nu.iter().map(|&n| Threshold::Nu(n)).collect(),
    }
}

pub fn sweep(args: &SweepArgs) -> Result<Outcome> {
    let sources = parse_sources(args)?;
    ensure!(!args.alpha.is_empty(), "no alpha given");
    for s in &sources {
        ensure!(
            !thresholds(s.family, args).is_empty(),
            "no thresholds given for the {} family",
            s.family
        );
    }
    if args.format == Format::Csv && args.alpha.len() > 1 {
        bail!("CSV output holds a single alpha; pass one --alpha or use json/markdown");
    }

    let mut errors = BTreeSet::new();
    let mut datasets = Vec::with_capacity(sources.len());
    for s in &sources {
        let (samples, load_errors) = load(&s.manifest, args.connectivity)?;
        for e in load_errors {
            errors.insert(SweepError {
                detector: format!("{}_{}", s.family, s.variant),
                image_id: e.image_id,
                message: e.message,
            });
        }
        ensure!(
            !samples.is_empty(),
            "no image of {} could be loaded",
            s.manifest.display()
        );
        datasets.push(samples);
    }

    let mut runs = Vec::with_capacity(args.alpha.len());
    for &alpha in &args.alpha {
        let mut summaries = Vec::new();
        for (source, samples) in sources.iter().zip(&datasets) {
            for threshold in thresholds(source.family, args) {
                let spec = DetectorSpec::new(
                    source.family,
                    source.variant.clone(),
                    threshold,
                    alpha,
                    args.connectivity,
                )?;
                let evaluation = evaluate_detector(&spec, samples)?;
                for e in evaluation.errors {
                    errors.insert(SweepError {
                        detector: format!("{}_{}", source.family, source.variant),
                        image_id: e.image_id,
                        message: e.message,
                    });
                }
                summaries.push(evaluation.summary);
            }
        }
        let rows: Vec<TableRow> = summaries.iter().map(SweepSummary::table_row).collect();
        let selection = best_per_metric(&rows)?;
        runs.push(SweepRun {
            alpha,
            summaries,
            rows,
            selection,
        });
    }

    let report = SweepReport {
        tool: ToolInfo::current(),
        connectivity: args.connectivity,
        detectors: sources,
        runs,
        errors: errors.into_iter().collect(),
    };
    let text = match args.format {
        Format::Json => to_json(&report)?,
        Format::Markdown => {
            let mut s = String::new();
            for run in &report.runs {
                let _ = writeln!(s, "## alpha = {}\n", run.alpha);
                s.push_str(&render_markdown(&run.rows, &run.selection));
                s.push('\n');
                s.push_str(&selection_markdown(&run.selection));
                s.push('\n');
            }
            s
        }
        Format::Csv => {
            let mut buf = Vec::new();
            write_table_csv(&report.runs[0].rows, &mut buf)?;
            String::from_utf8(buf)?
        }
    };
    emit(args.out.as_deref(), &text)?;
    Ok(Outcome::from_errors(report.errors.len()))
}

/// Winners per metric as a Markdown table, one column per family.
fn selection_markdown(selection: &Selection) -> String {
    let families: Vec<Family> = selection.family_best.keys().copied().collect();
    let mut s = String::from("| Metric |");
    for f in &families {
        let _ = write!(s, " Best {f} |");
    }
    s.push_str(" Best overall |\n|:---|");
    for _ in 0..=families.len() {
        s.push_str(":---|");
    }
    s.push('\n');
    let cell = |w: Option<&Vec<String>>| w.map(|w| w.join(", ")).unwrap_or_else(|| "--".into());
    for m in Metric::ALL {
        let _ = write!(s, "| {} |", m.header());
        for f in &families {
            let _ = write!(s, " {} |", cell(selection.family_best[f].get(&m)));
        }
        let _ = writeln!(s, " {} |", cell(selection.overall_best.get(&m)));
    }
    s
}

pub fn sw(args: &SwArgs) -> Result<Outcome> {
    let image = read_probability_map(&args.image)
        .with_context(|| format!("reading {}", args.image.display()))?;
    let (width, height) = image.dims();
    let grid = build_grid(width, height, args.size)?;
    let labels = match &args.labels {
        Some(path) => Some(
            CsvLabelClassifier::from_path(path)
                .with_context(|| format!("reading labels {}", path.display()))?,
        ),
        None => None,
    };
    let oracle = match &args.oracle {
        Some(path) => {
            let truth =
                read_mask(path).with_context(|| format!("reading truth {}", path.display()))?;
            Some(TruthOracleClassifier::new(&truth, args.min_fraction)?)
        }
        None => None,
    };
    let classifier: &dyn PatchClassifier = match (&labels, &oracle) {
        (Some(l), _) => l,
        (None, Some(o)) => o,
        (None, None) => bail!("pass --labels or --oracle"),
    };
    let votes = vote(&grid, classifier, &image)?;
    let mask = threshold_votes(&votes, args.nu)?;
    write_mask(&args.out, &mask)?;
    if let Some(path) = &args.votes_out {
        write_pgm(path, &votes.to_gray())?;
    }
    if let Some(missing) = labels
        .as_ref()
        .map(CsvLabelClassifier::missing_lookups)
        .filter(|&n| n > 0)
    {
        eprintln!("warning: {missing} patch(es) had no label and were treated as negative");
    }
    Ok(Outcome::Complete)
}

pub fn synth(args: &SynthArgs, seed: u64) -> Result<Outcome> {
    ensure!(args.count > 0, "--count must be positive");
    let sidecar = write_corpus(&args.out, args.count, seed, args.max_side, args.alpha)?;
    let path = args.out.join("expected.json");
    fs::write(&path, to_json(&sidecar)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(Outcome::Complete)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RowsInput {
    Rows(Vec<TableRow>),
    Sweep { runs: Vec<SweepRun> },
}

fn read_rows(path: &Path) -> Result<Vec<TableRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let input: RowsInput = serde_json::from_str(&text).with_context(|| {
        format!(
            "{} is neither a sweep report nor a list of table rows",
            path.display()
        )
    })?;
    match input {
        RowsInput::Rows(rows) => Ok(rows),
        RowsInput::Sweep { mut runs } => {
            ensure!(
                runs.len() == 1,
                "sweep report holds {} alphas; expected exactly one",
                runs.len()
            );
            Ok(runs.remove(0).rows)
        }
    }
}

pub fn report(args: &ReportArgs) -> Result<Outcome> {
    let rows = read_rows(&args.input)?;
    ensure!(
        !rows.is_empty(),
        "no table rows in {}",
        args.input.display()
    );
    let scatter = |kind| -> Result<String> {
        let mut buf = Vec::new();
        write_scatter_csv(&scatter_rows(&rows, kind), &mut buf)?;
        Ok(String::from_utf8(buf)?)
    };
    let text = match args.kind {
        ReportKind::Table => match args.format {
            Format::Markdown => render_markdown(&rows, &best_per_metric(&rows)?),
            Format::Json => to_json(&rows)?,
            Format::Csv => {
                let mut buf = Vec::new();
                write_table_csv(&rows, &mut buf)?;
                String::from_utf8(buf)?
            }
        },
        ReportKind::ScatterDetection => scatter(ScatterKind::DetectionPr)?,
        ReportKind::ScatterSegTp => scatter(ScatterKind::SegPrTp)?,
        ReportKind::ScatterSegSplit => scatter(ScatterKind::SegPrSplit)?,
        ReportKind::HistNa => to_json(&family_histograms(&rows, HistMetric::Na))?,
        ReportKind::HistNd => to_json(&family_histograms(&rows, HistMetric::Nd))?,
    };
    emit(args.out.as_deref(), &text)?;
    Ok(Outcome::Complete)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SummaryInput {
    Report { row: TableRow },
    Row(TableRow),
}

#[derive(Debug, Default, Serialize)]
struct VarsInputs {
    p_d: Option<f64>,
    r_d: Option<f64>,
    na: Option<f64>,
    ps_tp: Option<f64>,
    ps_split: Option<f64>,
    nd: Option<f64>,
}

#[derive(Debug, Serialize)]
struct VarsReport {
    assumptions: PlantAssumptions,
    inputs: VarsInputs,
    bud_count: Option<BudCountError>,
    bud_area: Option<AreaErrorBreakdown>,
    internode: Option<f64>,
}

pub fn vars(args: &VarsArgs) -> Result<Outcome> {
    let mut inputs = VarsInputs::default();
    if let Some(path) = &args.summary {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let row = match serde_json::from_str(&text).with_context(|| {
            format!(
                "{} is neither an eval report nor a table row",
                path.display()
            )
        })? {
            SummaryInput::Report { row } | SummaryInput::Row(row) => row,
        };
        inputs = VarsInputs {
            p_d: Some(row.p_d),
            r_d: Some(row.r_d),
            na: row.na.mean,
            ps_tp: row.ps_tp.mean,
            ps_split: row.ps_s.mean,
            nd: row.nd.mean,
        };
    }
    for (slot, flag) in [
        (&mut inputs.p_d, args.p_d),
        (&mut inputs.r_d, args.r_d),
        (&mut inputs.na, args.na),
        (&mut inputs.ps_tp, args.ps_tp),
        (&mut inputs.ps_split, args.ps_split),
        (&mut inputs.nd, args.nd),
    ] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    let assumptions = PlantAssumptions {
        buds_per_plant: args.buds_per_plant,
        bud_diameter_mm: args.bud_diameter_mm,
        internode_mm: args.internode_mm,
    };
    assumptions.validate()?;
    let bud_count = match (inputs.p_d, inputs.r_d) {
        (Some(p), Some(r)) => Some(bud_count_error(&assumptions, p, r)?),
        _ => None,
    };
    let bud_area = match (inputs.na, inputs.ps_tp, inputs.ps_split) {
        (Some(na), Some(tp), Some(s)) => Some(area_error(na, tp, s)?),
        _ => None,
    };
    let internode = inputs
        .nd
        .map(|nd| internode_error(&assumptions, nd))
        .transpose()?;
    ensure!(
        bud_count.is_some() || bud_area.is_some() || internode.is_some(),
        "nothing to estimate; pass --summary or the metric flags"
    );
    let report = VarsReport {
        assumptions,
        inputs,
        bud_count,
        bud_area,
        internode,
    };
    emit(None, &to_json(&report)?)?;
    Ok(Outcome::Complete)
}
