use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use condcls_core::clustering::{
    compute_indicator_vectors, spectral_clustering, IndicatorMatrix, LabeledProbs, SpectralOptions,
};
use condcls_core::compressor::{plan, ModelIR, WidthPolicy};
use condcls_core::harness::{write_csv, Simulation, SimulationConfig, SplitPolicy};
use condcls_core::linalg::DenseMatrix;
use condcls_core::router::write_trace;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cli::{ClusterArgs, FlopsArgs, Output, PlanArgs, SimulateArgs, SweepArgs, TaskArgs};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
}

/// Writes `body` to `path`, or to standard output.
fn emit(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            body(&mut w)
                .and_then(|_| w.flush())
                .with_context(|| format!("cannot write {}", p.display()))
        }
        None => {
            let mut w = io::stdout().lock();
            body(&mut w).context("cannot write to standard output")
        }
    }
}

fn emit_json<T: Serialize>(out: &Output, value: &T) -> Result<()> {
    emit(out.out.as_deref(), |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn indicators(path: &Path) -> Result<IndicatorMatrix> {
    let value: Value = read_json(path)?;
    let parsed = match &value {
        Value::Array(_) => serde_json::from_value::<Vec<Vec<f64>>>(value)
            .map_err(anyhow::Error::from)
            .and_then(|rows| Ok(DenseMatrix::from_rows(&rows)?))
            .and_then(|m| Ok(IndicatorMatrix::new(m)?)),
        Value::Object(o) if o.contains_key("samples") => {
            #[derive(Deserialize)]
            struct Samples {
                #[serde(rename = "K")]
                num_classes: usize,
                samples: Vec<LabeledProbs>,
            }
            serde_json::from_value::<Samples>(value)
                .map_err(anyhow::Error::from)
                .and_then(|s| Ok(compute_indicator_vectors(&s.samples, s.num_classes)?))
        }
        Value::Object(_) => serde_json::from_value(value).map_err(anyhow::Error::from),
        _ => bail!("expected an array of rows or an object"),
    };
    parsed.with_context(|| format!("invalid cluster input {}", path.display()))
}

pub fn cluster(args: &ClusterArgs) -> Result<()> {
    let ind = indicators(&args.input)?;
    let outcome = spectral_clustering(
        ind.vectors(),
        args.k,
        args.seed,
        &SpectralOptions::default(),
    )
    .with_context(|| format!("clustering {}", args.input.display()))?;
    let a = &outcome.assignment;
    eprintln!("K1 = {}, sizes = {:?}", a.num_clusters(), a.sizes());
    emit_json(&args.output, a)
}

fn load_ir(path: &Path) -> Result<ModelIR> {
    let ir: ModelIR = read_json(path)?;
    ir.infer_shapes()
        .with_context(|| format!("invalid model {}", path.display()))?;
    Ok(ir)
}

pub fn plan_cmd(args: &PlanArgs) -> Result<()> {
    let ir = load_ir(&args.ir)?;
    let widths = WidthPolicy::new(args.width_ratio)?;
    let p = plan(&ir, args.level, args.shared_prefix, &widths)
        .with_context(|| format!("planning {} for {}", args.level, args.ir.display()))?;
    eprintln!(
        "{}: {} -> {} MACs ({:.2}% reduction)",
        p.level,
        p.flops_before,
        p.flops_after,
        100.0 * p.reduction
    );
    emit_json(&args.output, &p)
}

#[derive(Serialize)]
struct LayerCost {
    index: usize,
    layer: String,
    output: condcls_core::compressor::Shape,
    flops: u64,
}

#[derive(Serialize)]
struct FlopReport {
    input: condcls_core::compressor::Shape,
    layers: Vec<LayerCost>,
    total: u64,
}

pub fn flops(args: &FlopsArgs) -> Result<()> {
    let ir = load_ir(&args.ir)?;
    let shapes = ir.infer_shapes()?;
    let costs = ir.layer_flops()?;
    let report = FlopReport {
        input: ir.input_shape,
        layers: ir
            .layers
            .iter()
            .zip(shapes)
            .zip(&costs)
            .enumerate()
            .map(|(index, ((l, output), &flops))| LayerCost {
                index,
                layer: l.name(),
                output,
                flops,
            })
            .collect(),
        total: costs.iter().sum(),
    };
    eprintln!("{} layers, {} MACs", report.layers.len(), report.total);
    emit_json(&args.output, &report)
}

fn simulation(args: &TaskArgs) -> Result<Simulation> {
    let mut cfg = match &args.config {
        Some(p) => read_json::<SimulationConfig>(p)?,
        None => SimulationConfig::reference(0),
    };
    if let Some(seed) = args.seed {
        cfg.task.seed = seed;
        if let SplitPolicy::Shuffled { seed: s } = &mut cfg.split {
            *s = seed.wrapping_add(1);
        }
    }
    let source = args
        .config
        .as_ref()
        .map_or("the reference config".to_string(), |p| {
            p.display().to_string()
        });
    Simulation::new(&cfg).with_context(|| format!("invalid simulation config {source}"))
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let sim = simulation(&args.task)?;
    let report = sim.evaluate(args.tau)?;
    if let Some(path) = &args.trace {
        let records = sim.trace(args.tau)?;
        emit(Some(path), |w| write_trace(w, &records))?;
    }
    if let Some(path) = &args.dataset {
        emit(Some(path), |w| {
            serde_json::to_writer(&mut *w, &sim.dataset)?;
            writeln!(w)
        })?;
    }
    eprintln!(
        "tau {}: top1 {:.4}, cc_save {:.4}, histogram {:?}",
        report.tau, report.top1, report.cc_save, report.activation_histogram
    );
    emit_json(&args.output, &report)
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let sim = simulation(&args.task)?;
    let reports = sim.sweep_tau(&args.taus.0)?;
    if let Some(path) = &args.json {
        emit(Some(path), |w| {
            serde_json::to_writer_pretty(&mut *w, &reports)?;
            writeln!(w)
        })?;
    }
    eprintln!("{} thresholds evaluated", reports.len());
    emit(args.output.out.as_deref(), |w| write_csv(w, &reports))
}
