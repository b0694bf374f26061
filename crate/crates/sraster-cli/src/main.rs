//! `sraster`: density-based clustering of point streams on a decimal grid.
//!
//! Exit codes: 0 on success, 1 for usage or configuration problems, 2 for
//! bad input data or I/O failures.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sraster::batch::{raster, raster_prime, BatchParams};
use sraster::generate::{generate, write_points_csv, write_truth_csv, GenerateError, GeneratorSpec};
use sraster::grid::{rescale, GeoPoint, Metric, Precision, Tile};
use sraster::ingest::{parse_timestamp, CsvStream, IngestConfig, IngestError};
use sraster::pipeline::{run_pipeline, LatePolicy, PipelineConfig, PipelineError};
use sraster::stream::{ClusterRow, PeriodId, StreamRecord};

#[derive(Parser)]
#[command(
    name = "sraster",
    version,
    about = "Density-based clustering of point streams on a fixed decimal grid"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a finite CSV of points in one pass.
    Batch(BatchArgs),
    /// Cluster a period-stamped stream, one snapshot per elapsed period.
    Stream(StreamArgs),
    /// Produce a synthetic stream plus ground truth from a JSON spec.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct GridArgs {
    /// Decimal digits kept when projecting coordinates to tiles.
    #[arg(long, default_value_t = 4)]
    prec: u8,

    /// Points a tile must collect to be significant.
    #[arg(long, default_value_t = 5)]
    tau: u64,

    /// Neighborhood radius in tiles.
    #[arg(long, default_value_t = 1)]
    delta: u32,

    /// Minimum tiles per reported cluster.
    #[arg(long, default_value_t = 2)]
    mu: usize,

    /// Tile adjacency metric.
    #[arg(long, value_enum, default_value_t = MetricArg::Chebyshev)]
    metric: MetricArg,
}

impl GridArgs {
    fn params(&self) -> Result<BatchParams, CliError> {
        let prec = Precision::new(self.prec).map_err(usage)?;
        let metric = match self.metric {
            MetricArg::Chebyshev => Metric::chebyshev(self.delta),
            MetricArg::Manhattan => Metric::manhattan(self.delta),
        }
        .map_err(usage)?;
        BatchParams::new(prec, self.tau, metric, self.mu).map_err(usage)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    /// Eight-neighbor adjacency (square of side 2*delta+1).
    Chebyshev,
    /// Four-neighbor adjacency (diamond of radius delta).
    Manhattan,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    /// One row per tile (or per point with --retain-points).
    Csv,
    /// A FeatureCollection with one MultiPoint feature per cluster.
    Geojson,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    grid: GridArgs,

    /// Carry original points into the output, one row per point.
    #[arg(long)]
    retain_points: bool,

    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,

    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// CSV whose first two columns are x,y; extra columns are ignored.
    /// Pass "-" to read stdin.
    input: String,
}

#[derive(Args)]
struct StreamArgs {
    #[command(flatten)]
    grid: GridArgs,

    /// Sliding window length in periods.
    #[arg(long, default_value_t = 3)]
    window: u32,

    /// Length of one period in seconds.
    #[arg(long, default_value_t = 60)]
    period_seconds: i64,

    /// Start of period 0: RFC 3339 or epoch seconds. Defaults to the first
    /// record's timestamp rounded down to a period boundary.
    #[arg(long)]
    epoch: Option<String>,

    /// Projection worker threads.
    #[arg(long, default_value_t = 1)]
    pi: usize,

    /// Accumulator partitions.
    #[arg(long, default_value_t = 1)]
    alpha: usize,

    /// Carry original points into the output, one row per point.
    #[arg(long)]
    retain_points: bool,

    /// What to do with records older than one already seen.
    #[arg(long, value_enum, default_value_t = LatePolicyArg::Drop)]
    late_policy: LatePolicyArg,

    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,

    /// Output file; stdout when omitted. CSV rows stream out as periods
    /// complete; GeoJSON is written once the stream ends.
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// CSV of x,y,timestamp rows; "-" reads stdin.
    input: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum LatePolicyArg {
    /// Discard late records (counted on stderr).
    Drop,
    /// Buffer two periods so records up to one period late still count.
    DelayOnePeriod,
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON generator spec.
    spec: PathBuf,

    /// Points CSV to write; ground truth lands next to it as
    /// `<output>.truth.csv`.
    #[arg(short, long)]
    output: PathBuf,
}

enum CliError {
    /// Bad flags or parameters: exit 1.
    Usage(String),
    /// Bad input data or I/O failure: exit 2.
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

fn usage(err: impl std::fmt::Display) -> CliError {
    CliError::Usage(err.to_string())
}

fn data(err: impl std::fmt::Display) -> CliError {
    CliError::Data(err.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version arrive here too; only real usage errors
            // exit nonzero.
            let failed = err.use_stderr();
            let _ = err.print();
            return if failed { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Batch(args) => cmd_batch(args),
        Command::Stream(args) => cmd_stream(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}

fn open_input(input: &str) -> Result<Box<dyn Read + Send>, CliError> {
    if input == "-" {
        Ok(Box::new(io::stdin()))
    } else {
        let file = File::open(input)
            .map_err(|err| CliError::Data(format!("cannot open {input}: {err}")))?;
        Ok(Box::new(file))
    }
}

fn open_output(output: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match output {
        Some(path) => {
            let file = File::create(path)
                .map_err(|err| CliError::Data(format!("cannot create {}: {err}", path.display())))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

/// Renders a coordinate with exactly the grid's digits, so tile corners
/// read back as the same tile.
fn coord(value: f64, prec: Precision) -> String {
    format!("{:.*}", prec.digits() as usize, value)
}

fn cmd_batch(args: BatchArgs) -> Result<(), CliError> {
    let params = args.grid.params()?;
    let reader = open_input(&args.input)?;
    let mut rows = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader)
        .into_records();
    let mut points: Vec<GeoPoint> = Vec::new();
    while let Some(row) = rows.next() {
        let row = row.map_err(data)?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() < 2 {
            return Err(CliError::Data(format!(
                "line {line}: expected at least 2 columns, found {}",
                row.len()
            )));
        }
        let parse = |i: usize, name: &str| -> Result<f64, CliError> {
            row[i].trim().parse::<f64>().map_err(|_| {
                CliError::Data(format!("line {line}: {name} value {:?} is not a number", &row[i]))
            })
        };
        points.push(GeoPoint::new(parse(0, "x")?, parse(1, "y")?));
    }

    let mut out = open_output(args.output.as_deref())?;
    let prec = params.prec();
    if args.retain_points {
        let clusters = raster_prime(points, &params).map_err(data)?;
        match args.format {
            FormatArg::Csv => {
                writeln!(out, "cluster_id,x,y,point_x,point_y").map_err(data)?;
                for (id, cluster) in clusters.iter().enumerate() {
                    for tile in cluster.cluster().iter() {
                        let corner = rescale(*tile, prec);
                        for point in cluster.points_for(*tile) {
                            writeln!(
                                out,
                                "{id},{},{},{},{}",
                                coord(corner.x, prec),
                                coord(corner.y, prec),
                                point.x,
                                point.y
                            )
                            .map_err(data)?;
                        }
                    }
                }
            }
            FormatArg::Geojson => {
                let features: Vec<_> = clusters
                    .iter()
                    .enumerate()
                    .map(|(id, cluster)| {
                        tile_feature(cluster.cluster().iter().copied(), prec, id as u32, None)
                    })
                    .collect();
                write_feature_collection(&mut out, features)?;
            }
        }
    } else {
        let clusters = raster(points, &params).map_err(data)?;
        match args.format {
            FormatArg::Csv => {
                writeln!(out, "cluster_id,x,y").map_err(data)?;
                for (id, cluster) in clusters.iter().enumerate() {
                    for tile in cluster.iter() {
                        let corner = rescale(*tile, prec);
                        writeln!(out, "{id},{},{}", coord(corner.x, prec), coord(corner.y, prec))
                            .map_err(data)?;
                    }
                }
            }
            FormatArg::Geojson => {
                let features: Vec<_> = clusters
                    .iter()
                    .enumerate()
                    .map(|(id, cluster)| tile_feature(cluster.iter().copied(), prec, id as u32, None))
                    .collect();
                write_feature_collection(&mut out, features)?;
            }
        }
    }
    out.flush().map_err(data)
}

/// Stops at the first ingest error, parking it for the caller to report
/// after the pipeline drains.
struct FallibleSource<R: Read> {
    inner: CsvStream<R>,
    error: Arc<Mutex<Option<IngestError>>>,
}

impl<R: Read> Iterator for FallibleSource<R> {
    type Item = StreamRecord;

    fn next(&mut self) -> Option<StreamRecord> {
        match self.inner.next()? {
            Ok(record) => Some(record),
            Err(err) => {
                *self.error.lock().expect("no other holder panics") = Some(err);
                None
            }
        }
    }
}

fn cmd_stream(args: StreamArgs) -> Result<(), CliError> {
    let params = args.grid.params()?;
    let mut ingest = IngestConfig::new(args.period_seconds).map_err(usage)?;
    if let Some(raw) = &args.epoch {
        let epoch = parse_timestamp(raw).ok_or_else(|| {
            CliError::Usage(format!(
                "epoch {raw:?} is neither RFC 3339 nor integer epoch seconds"
            ))
        })?;
        ingest.epoch = Some(epoch);
    }

    let mut config = PipelineConfig::new(params, args.window);
    config.num_pi = args.pi;
    config.num_alpha = args.alpha;
    config.retain_points = args.retain_points;
    config.late_policy = match args.late_policy {
        LatePolicyArg::Drop => LatePolicy::Drop,
        LatePolicyArg::DelayOnePeriod => LatePolicy::DelayOnePeriod,
    };

    let reader = open_input(&args.input)?;
    let ingest_error = Arc::new(Mutex::new(None));
    let source = FallibleSource {
        inner: CsvStream::new(reader, ingest),
        error: Arc::clone(&ingest_error),
    };

    let output = match run_pipeline(config, source) {
        Ok(output) => output,
        Err(PipelineError::Config(message)) => return Err(CliError::Usage(message)),
        Err(err) => return Err(data(err)),
    };

    let mut out = open_output(args.output.as_deref())?;
    let prec = params.prec();
    let mut output = output;
    match args.format {
        FormatArg::Csv => {
            if args.retain_points {
                writeln!(out, "period,cluster_id,x,y,point_x,point_y").map_err(data)?;
            } else {
                writeln!(out, "period,cluster_id,x,y").map_err(data)?;
            }
            for row in &mut output {
                write_stream_row(&mut out, &row, prec, args.retain_points)?;
            }
        }
        FormatArg::Geojson => {
            let rows: Vec<ClusterRow> = (&mut output).collect();
            let features = stream_features(&rows);
            write_feature_collection(&mut out, features)?;
        }
    }
    out.flush().map_err(data)?;

    let report = match output.finish() {
        Ok(report) => report,
        Err(PipelineError::Config(message)) => return Err(CliError::Usage(message)),
        Err(err) => return Err(data(err)),
    };
    if report.late_dropped > 0 || report.invalid_dropped > 0 {
        eprintln!(
            "dropped {} late and {} invalid records",
            report.late_dropped, report.invalid_dropped
        );
    }
    if let Some(err) = ingest_error.lock().expect("no other holder panics").take() {
        return Err(data(err));
    }
    Ok(())
}

fn write_stream_row(
    out: &mut dyn Write,
    row: &ClusterRow,
    prec: Precision,
    retain_points: bool,
) -> Result<(), CliError> {
    if retain_points {
        let point = row.point.unwrap_or(GeoPoint::new(f64::NAN, f64::NAN));
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.period,
            row.cluster_id,
            coord(row.x, prec),
            coord(row.y, prec),
            point.x,
            point.y
        )
        .map_err(data)
    } else {
        writeln!(
            out,
            "{},{},{},{}",
            row.period,
            row.cluster_id,
            coord(row.x, prec),
            coord(row.y, prec)
        )
        .map_err(data)
    }
}

/// One feature per (period, cluster) pair, in emission order.
fn stream_features(rows: &[ClusterRow]) -> Vec<serde_json::Value> {
    let mut features = Vec::new();
    let mut current: Option<(PeriodId, u32)> = None;
    let mut tiles: Vec<GeoPoint> = Vec::new();
    let mut flush = |key: Option<(PeriodId, u32)>, tiles: &mut Vec<GeoPoint>| {
        if let Some((period, cluster_id)) = key {
            let coordinates: Vec<[f64; 2]> = tiles.iter().map(|p| [p.x, p.y]).collect();
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "MultiPoint", "coordinates": coordinates },
                "properties": {
                    "period": period,
                    "cluster_id": cluster_id,
                    "tile_count": coordinates.len(),
                },
            }));
            tiles.clear();
        }
    };
    for row in rows {
        let key = Some((row.period, row.cluster_id));
        if key != current {
            flush(current, &mut tiles);
            current = key;
        }
        // Prime mode repeats a tile once per retained point; the feature
        // should list it once.
        let corner = GeoPoint::new(row.x, row.y);
        if tiles.last() != Some(&corner) {
            tiles.push(corner);
        }
    }
    flush(current, &mut tiles);
    features
}

fn tile_feature<I>(
    tiles: I,
    prec: Precision,
    cluster_id: u32,
    period: Option<PeriodId>,
) -> serde_json::Value
where
    I: IntoIterator<Item = Tile>,
{
    let coordinates: Vec<[f64; 2]> = tiles
        .into_iter()
        .map(|tile| {
            let corner = rescale(tile, prec);
            [corner.x, corner.y]
        })
        .collect();
    let mut properties = json!({
        "cluster_id": cluster_id,
        "tile_count": coordinates.len(),
    });
    if let Some(period) = period {
        properties["period"] = json!(period);
    }
    json!({
        "type": "Feature",
        "geometry": { "type": "MultiPoint", "coordinates": coordinates },
        "properties": properties,
    })
}

fn write_feature_collection(
    out: &mut dyn Write,
    features: Vec<serde_json::Value>,
) -> Result<(), CliError> {
    let collection = json!({ "type": "FeatureCollection", "features": features });
    serde_json::to_writer(&mut *out, &collection).map_err(data)?;
    writeln!(out).map_err(data)
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let file = File::open(&args.spec)
        .map_err(|err| CliError::Data(format!("cannot open {}: {err}", args.spec.display())))?;
    let spec: GeneratorSpec = serde_json::from_reader(io::BufReader::new(file))
        .map_err(|err| CliError::Usage(format!("bad generator spec: {err}")))?;
    let generated = generate(&spec).map_err(|err| match err {
        GenerateError::Io(err) => data(err),
        other => usage(other),
    })?;

    let points_path = &args.output;
    let truth_path = args.output.with_extension("truth.csv");
    let mut points_out = BufWriter::new(File::create(points_path).map_err(|err| {
        CliError::Data(format!("cannot create {}: {err}", points_path.display()))
    })?);
    write_points_csv(&generated.points, &mut points_out).map_err(data)?;
    points_out.flush().map_err(data)?;
    let mut truth_out = BufWriter::new(File::create(&truth_path).map_err(|err| {
        CliError::Data(format!("cannot create {}: {err}", truth_path.display()))
    })?);
    write_truth_csv(&generated.truth, &mut truth_out).map_err(data)?;
    truth_out.flush().map_err(data)?;
    eprintln!(
        "wrote {} points to {} and {} truth rows to {}",
        generated.points.len(),
        points_path.display(),
        generated.truth.len(),
        truth_path.display()
    );
    Ok(())
}
