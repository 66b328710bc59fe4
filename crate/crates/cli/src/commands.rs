use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use trustdrift::data::{read_csv, write_csv, Dataset};
use trustdrift::eval::{compare_detectors, trial_seeds, BenchmarkResult, BenchmarkTable};
use trustdrift::pipeline::FittedPipeline;
use trustdrift::synth::{airline_schema, generate_dataset, GeneratorConfig};
use trustdrift::trust::TrustReport;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::plot;

pub const DATA_CSV: &str = "flights.csv";
pub const DATA_META: &str = "flights.meta.json";
pub const REPORT_JSON: &str = "trust_report.json";
pub const REPORT_CSV: &str = "trust_report.csv";
pub const BENCH_CSV: &str = "benchmark.csv";
pub const BENCH_JSON: &str = "benchmark.json";
pub const BENCH_TRIALS: &str = "benchmark_trials.json";

#[derive(Serialize)]
struct DatasetMeta<'a> {
    format: &'static str,
    version: u32,
    seed: u64,
    rows: usize,
    generator: &'a GeneratorConfig,
}

fn io_at(path: &Path, e: std::io::Error) -> CliError {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into()
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_at(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_at(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let s = serde_json::to_string_pretty(value).map_err(trustdrift::Error::from)?;
    Ok(s + "\n")
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| {
        CliError::Usage(format!("cannot create output directory {}: {e}", out.display()))
    })
}

/// Write the generated dataset and a sidecar with the generator settings.
pub fn cmd_generate(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    config.generator.validate()?;
    prepare_out(out)?;
    let data = generate_dataset(&config.generator)?;
    let csv_path = out.join(DATA_CSV);
    write_csv(&data, create(&csv_path)?)?;
    let meta = DatasetMeta {
        format: "trustdrift.dataset",
        version: 1,
        seed: config.generator.seed,
        rows: data.len(),
        generator: &config.generator,
    };
    let meta_path = out.join(DATA_META);
    write_text(&meta_path, &to_json(&meta)?)?;
    log::info!("wrote {} rows to {}", data.len(), csv_path.display());
    Ok(vec![csv_path, meta_path])
}

fn load_input(config: &RunConfig) -> Result<Dataset, CliError> {
    match &config.input {
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::Input {
                path: path.clone(),
                source: e.into(),
            })?;
            read_csv(&airline_schema(), file).map_err(|source| CliError::Input {
                path: path.clone(),
                source,
            })
        }
        None => {
            config.generator.validate()?;
            Ok(generate_dataset(&config.generator)?)
        }
    }
}

/// Write a report as JSON and CSV plus its charts.
pub fn write_report(report: &TrustReport, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    prepare_out(out)?;
    let json = out.join(REPORT_JSON);
    write_text(&json, &(report.to_json()? + "\n"))?;
    let csv = out.join(REPORT_CSV);
    report.write_csv(create(&csv)?)?;
    let mut paths = vec![json, csv];
    for (name, svg) in plot::render_all(report) {
        let p = out.join(name);
        write_text(&p, &svg)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Fit the pipeline, score the stream and write the report, charts and
/// model checkpoints.
pub fn cmd_run(config: &RunConfig, out: &Path) -> Result<TrustReport, CliError> {
    config.validate()?;
    prepare_out(out)?;
    let data = load_input(config)?;
    let fitted = FittedPipeline::fit(data, &config.pipeline)?;
    let report = fitted.monitor(&config.drift)?;
    write_report(&report, out)?;

    let models = out.join("models");
    prepare_out(&models)?;
    fitted.classifier.save(&models.join("classifier.json"))?;
    fitted.autoencoder.save(&models.join("autoencoder.json"))?;
    fitted.transformer.save(&models.join("transformer.json"))?;
    write_text(&out.join("run_config.json"), &to_json(config)?)?;
    match report.first_flagged() {
        Some(b) => log::info!("first flagged batch: {b}"),
        None => log::info!("no batch flagged"),
    }
    Ok(report)
}

/// Compare the selected detectors over seeded trials.
pub fn cmd_bench(
    config: &RunConfig,
    out: &Path,
) -> Result<(BenchmarkTable, Vec<BenchmarkResult>), CliError> {
    config.validate()?;
    if config.input.is_some() {
        return Err(CliError::Usage("bench generates its own data; drop the input".into()));
    }
    if config.bench.detectors.is_empty() {
        return Err(CliError::Usage("no detectors selected".into()));
    }
    prepare_out(out)?;
    let seeds = trial_seeds(config.generator.seed, config.bench.trials);
    let (table, results) = compare_detectors(&config.benchmark(), &seeds)?;
    let keep = |k| config.bench.detectors.contains(&k);
    let table = BenchmarkTable {
        rows: table.rows.into_iter().filter(|r| keep(r.detector)).collect(),
    };
    let results: Vec<BenchmarkResult> = results.into_iter().filter(|r| keep(r.detector)).collect();

    table.write_csv(create(&out.join(BENCH_CSV))?)?;
    write_text(&out.join(BENCH_JSON), &(table.to_json()? + "\n"))?;
    write_text(&out.join(BENCH_TRIALS), &to_json(&results)?)?;
    Ok((table, results))
}
