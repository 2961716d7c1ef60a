//! The `mfmig` command line: one subcommand group per module.
//!
//! Data goes to the output stream, diagnostics to the error stream. Exit
//! codes: 0 success or PASS, 1 semantic failure (mismatch, missing record,
//! FAIL verdict, value that does not fit), 2 usage or configuration error,
//! 3 I/O or corruption. `recio compare` follows the `cmp` convention
//! instead: 0 equal, 1 different, 2 trouble of any kind.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::codec::{
    self, cp037, decode_record, encode_field, transcode_record, Decimal, Direction, Encoding, FieldValue, OverflowPolicy,
    RecordError,
};
use crate::copybook::{self, load_schema, parse_copybook, Category, CopybookSchema, SchemaFileError};
use crate::harness::{self, load_report, rerun_failed, run_plan, validate_plan, Plan, PlanError, PlanErrors, RunOptions, RunReport, ValidatedPlan, Verdict};
use crate::ksds::{
    self, bench_scan, cache_open, read_lock_owner, stored_backend, Backend, BenchRow, Dataset, KeyedDataset, KsdsError, KsdsStore,
    StartMode,
};
use crate::migrate::{self, MigrateError, Predicate, Strategy};
use crate::recio::{
    compare_files, inspect_to, open_records, CompareOptions, CompareReport, IgnoreMask, KeySpec, MatchBy, MismatchKind, RecioError,
    RecordFileSpec, RecordFormat, RecordWriter,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SEMANTIC: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// A failed command: the exit code and the message for the error stream.
#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> CliError {
        CliError { code, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> CliError {
        CliError::new(EXIT_USAGE, message)
    }
}

fn ksds_code(e: &KsdsError) -> i32 {
    match e {
        KsdsError::Config(_) | KsdsError::SchemaMismatch { .. } | KsdsError::StoreMismatch { .. } => EXIT_USAGE,
        KsdsError::ExclusiveLockHeld { .. } | KsdsError::FlushConflict { .. } => EXIT_IO,
        KsdsError::Recio(r) => recio_code(r),
        e if e.is_io() => EXIT_IO,
        _ => EXIT_SEMANTIC,
    }
}

fn recio_code(e: &RecioError) -> i32 {
    match e.root() {
        RecioError::InvalidSpec(_) | RecioError::KeyRequired => EXIT_USAGE,
        _ => EXIT_IO,
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::new(EXIT_IO, e.to_string())
    }
}

impl From<KsdsError> for CliError {
    fn from(e: KsdsError) -> Self {
        CliError::new(ksds_code(&e), e.to_string())
    }
}

impl From<RecioError> for CliError {
    fn from(e: RecioError) -> Self {
        CliError::new(recio_code(&e), e.to_string())
    }
}

impl From<SchemaFileError> for CliError {
    fn from(e: SchemaFileError) -> Self {
        let code = if matches!(e, SchemaFileError::Io { .. }) { EXIT_IO } else { EXIT_USAGE };
        CliError::new(code, e.to_string())
    }
}

impl From<MigrateError> for CliError {
    fn from(e: MigrateError) -> Self {
        let code = match &e {
            MigrateError::BadPredicate(_) | MigrateError::EncodingMismatch { .. } => EXIT_USAGE,
            MigrateError::Recio(r) => recio_code(r),
            MigrateError::Ksds(k) => ksds_code(k),
            _ => EXIT_SEMANTIC,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        let code = if matches!(e, PlanError::Io { .. }) { EXIT_IO } else { EXIT_USAGE };
        CliError::new(code, e.to_string())
    }
}

impl From<PlanErrors> for CliError {
    fn from(e: PlanErrors) -> Self {
        let code = if e.0.iter().all(|p| matches!(p, PlanError::Io { .. })) { EXIT_IO } else { EXIT_USAGE };
        CliError::new(code, e.to_string())
    }
}

type CliResult = Result<i32, CliError>;

/// Version line: crate version plus every on-disk / grammar format version.
pub fn version_line() -> String {
    format!(
        "mfmig version={} copybook-grammar={} plan-format={} report-format={} store-format={} inspect-format=1",
        env!("CARGO_PKG_VERSION"),
        copybook::GRAMMAR_VERSION,
        harness::PLAN_VERSION,
        harness::REPORT_VERSION,
        ksds::MANIFEST_VERSION,
    )
}

#[derive(Parser)]
#[command(
    name = "mfmig",
    about = "Mainframe dataset migration toolkit",
    long_about = "Mainframe dataset migration toolkit.\n\n\
        Exit codes: 0 success/PASS, 1 semantic failure, 2 usage or configuration error, 3 I/O or corruption.",
    disable_version_flag = true
)]
struct Cli {
    /// Print format versions as key=value pairs and exit.
    #[arg(long)]
    version: bool,
    /// Log more on stderr (-v info, -vv debug). MFMIG_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Option<Group>,
}

#[derive(Subcommand)]
enum Group {
    /// Copybook parsing and layout resolution.
    #[command(subcommand)]
    Copybook(CopybookCmd),
    /// Field codecs and record transcoding.
    #[command(subcommand)]
    Codec(CodecCmd),
    /// Fixed and variable record files.
    #[command(subcommand)]
    Recio(RecioCmd),
    /// Keyed dataset stores.
    #[command(subcommand)]
    Ksds(KsdsCmd),
    /// Loading, unloading, validating and pruning stores.
    #[command(subcommand)]
    Migrate(MigrateCmd),
    /// Parallel-run plans and equivalence reports.
    #[command(subcommand)]
    Harness(HarnessCmd),
}

#[derive(Args)]
struct SchemaArgs {
    /// Copybook file.
    #[arg(long)]
    schema: PathBuf,
    /// Discriminator rule (TOML) choosing between layouts.
    #[arg(long)]
    discriminator: Option<PathBuf>,
}

impl SchemaArgs {
    fn load(&self) -> Result<CopybookSchema, CliError> {
        Ok(load_schema(&self.schema, self.discriminator.as_deref())?)
    }
}

#[derive(Args)]
struct OptSchemaArgs {
    /// Copybook file.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Discriminator rule (TOML) choosing between layouts.
    #[arg(long, requires = "schema")]
    discriminator: Option<PathBuf>,
}

impl OptSchemaArgs {
    fn load(&self) -> Result<Option<CopybookSchema>, CliError> {
        self.schema.as_deref().map(|s| Ok(load_schema(s, self.discriminator.as_deref())?)).transpose()
    }
}

#[derive(Args, Clone)]
struct FramingArgs {
    /// Record format: fixed or variable (RDW).
    #[arg(long, default_value = "fixed")]
    format: RecordFormat,
    /// Record length (fixed) or maximum payload (variable); defaults to the
    /// schema's record length.
    #[arg(long)]
    lrecl: Option<usize>,
}

impl FramingArgs {
    fn spec(&self, encoding: Encoding, schema: Option<&CopybookSchema>) -> Result<RecordFileSpec, CliError> {
        let lrecl = match (self.lrecl, schema) {
            (Some(l), _) => l,
            (None, Some(s)) => s.total_length(),
            (None, None) => return Err(CliError::usage("--lrecl is required without --schema")),
        };
        let spec = RecordFileSpec::new(self.format, lrecl, encoding);
        spec.validate()?;
        Ok(match schema {
            Some(s) => spec.with_schema(s.clone()),
            None => spec,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    /// One ordered table.
    Single,
    /// One table per layout, read through a merge.
    Perlayout,
    /// In-memory session over the stored backend, written back on exit.
    Cached,
}

#[derive(Args)]
struct StoreArgs {
    /// Store directory; created on first use.
    #[arg(long)]
    store: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Primary key extent as OFFSET,LENGTH.
    #[arg(long)]
    key: KeySpec,
    #[arg(long, value_enum, default_value = "single")]
    backend: BackendArg,
    /// Character encoding of the stored records.
    #[arg(long, default_value = "ebcdic")]
    encoding: Encoding,
}

#[derive(Subcommand)]
enum CopybookCmd {
    /// Parses a copybook and prints its field table.
    Parse {
        file: PathBuf,
        /// Discriminator rule (TOML) to check against the layouts.
        #[arg(long)]
        discriminator: Option<PathBuf>,
        /// Print layouts as JSON.
        #[arg(long)]
        json: bool,
        /// Print the normalised copybook text instead.
        #[arg(long, conflicts_with = "json")]
        normalize: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum UsageArg {
    Display,
    Comp,
    #[value(name = "comp-3")]
    Comp3,
}

#[derive(Subcommand)]
enum CodecCmd {
    /// Converts a record file between code pages, keeping COMP and COMP-3
    /// bytes as they are.
    Transcode {
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long)]
        from: Encoding,
        #[arg(long)]
        to: Encoding,
        #[command(flatten)]
        framing: FramingArgs,
        input: PathBuf,
        output: PathBuf,
    },
    /// Decodes one record given in hex.
    Decode {
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long, default_value = "ebcdic")]
        encoding: Encoding,
        /// Record bytes as hex.
        #[arg(long = "hex")]
        record_hex: String,
        #[arg(long)]
        json: bool,
    },
    /// Encodes one value into a field described by a PICTURE string.
    Encode {
        /// PICTURE string, e.g. `S9(5)V99` or `X(8)`.
        #[arg(long)]
        pic: String,
        #[arg(long, value_enum, default_value = "display")]
        usage: UsageArg,
        #[arg(long, allow_hyphen_values = true)]
        value: String,
        /// truncate (keep low-order digits, like MOVE) or strict.
        #[arg(long, default_value = "truncate")]
        overflow: OverflowPolicy,
        #[arg(long, default_value = "ebcdic")]
        encoding: Encoding,
    },
}

#[derive(Subcommand)]
enum RecioCmd {
    /// Dumps a record file as text, decoding fields when a schema is given.
    Inspect {
        #[command(flatten)]
        framing: FramingArgs,
        #[arg(long, default_value = "ebcdic")]
        encoding: Encoding,
        #[command(flatten)]
        schema: OptSchemaArgs,
        input: PathBuf,
    },
    /// Compares two record files. Exit 0 equal, 1 different, 2 error.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        framing: FramingArgs,
        #[arg(long, default_value = "ebcdic")]
        encoding: Encoding,
        #[command(flatten)]
        schema: OptSchemaArgs,
        /// Pair records by position (order) or by key.
        #[arg(long = "match", default_value = "order")]
        match_by: MatchBy,
        /// Key extent as OFFSET,LENGTH (for --match key).
        #[arg(long)]
        key: Option<KeySpec>,
        /// Field name or OFFSET,LENGTH to leave out; repeatable.
        #[arg(long)]
        ignore: Vec<IgnoreMask>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct KeyArgs {
    /// Key arguments are hex rather than text in the store's encoding.
    #[arg(long)]
    key_hex: bool,
    /// Print records decoded, one JSON object per line.
    #[arg(long)]
    decode: bool,
}

#[derive(Subcommand)]
enum KsdsCmd {
    /// Loads a record file into a store (same as `migrate load`).
    Load(LoadArgs),
    /// Reads records in key order.
    Scan {
        #[command(flatten)]
        store: StoreArgs,
        /// Start position (key prefix).
        #[arg(long)]
        from: Option<String>,
        /// How --from positions: `=`, `>=` or `>`.
        #[arg(long, default_value = ">=")]
        mode: StartMode,
        /// Read backwards (from the end, or from before --from).
        #[arg(long)]
        reverse: bool,
        #[arg(long)]
        limit: Option<usize>,
        #[command(flatten)]
        keys: KeyArgs,
    },
    /// Reads one record by full key. Exit 1 when absent.
    Get {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(value_name = "KEY")]
        record_key: String,
        #[command(flatten)]
        keys: KeyArgs,
    },
    /// Shows a store's tables, generation and lock owner.
    Info {
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Times full scans of synthetic per-layout stores.
    Bench {
        /// Layout counts to measure.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 10, 97])]
        layouts: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        records: usize,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        /// Column separator of the table.
        #[arg(long, default_value_t = ',')]
        delimiter: char,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct LoadArgs {
    #[command(flatten)]
    store: StoreArgs,
    #[command(flatten)]
    framing: FramingArgs,
    input: PathBuf,
    /// Replace the contents of a non-empty store.
    #[arg(long)]
    replace: bool,
}

#[derive(Subcommand)]
enum MigrateCmd {
    /// Loads a record file into a store.
    Load(LoadArgs),
    /// Writes every record of a store, in key order, to a file.
    Unload {
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        framing: FramingArgs,
        output: PathBuf,
    },
    /// Checks a store against the file it was loaded from. Exit 1 on any
    /// difference.
    Validate {
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        framing: FramingArgs,
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Deletes every record matching a predicate.
    Prune {
        #[command(flatten)]
        store: StoreArgs,
        /// e.g. `STATUS=C AND DAYS>90`.
        #[arg(long = "where")]
        predicate: String,
        /// inplace (delete matches) or reload (empty and reinsert the rest).
        #[arg(long, default_value = "inplace")]
        strategy: Strategy,
    },
}

#[derive(Args)]
struct RunArgs {
    plan: PathBuf,
    /// Jobs allowed to run at once.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Report path (JSON, plus a .txt alongside); defaults to
    /// `report.json` in the plan's log directory.
    #[arg(long)]
    report: Option<PathBuf>,
    /// NAME=VALUE for `${NAME}` in job commands; repeatable.
    #[arg(long = "var", value_parser = parse_var)]
    vars: Vec<(String, String)>,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    json: bool,
}

fn parse_var(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(format!("expected NAME=VALUE, got `{s}`")),
    }
}

#[derive(Subcommand)]
enum HarnessCmd {
    /// Checks a plan without running it. Exit 2 on any problem.
    Validate { plan: PathBuf },
    /// Runs a plan. Exit 0 PASS, 1 FAIL.
    Run(RunArgs),
    /// Reruns the failed part of an earlier run of an unchanged plan.
    Rerun {
        #[command(flatten)]
        run: RunArgs,
        /// Report of the earlier run.
        #[arg(long)]
        from: PathBuf,
    },
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("MFMIG_LOG")
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    init_logging(cli.verbose);
    if cli.version {
        let _ = writeln!(out, "{}", version_line());
        return EXIT_OK;
    }
    let Some(group) = cli.command else {
        let _ = write!(err, "{}", Cli::command().render_help());
        return EXIT_USAGE;
    };
    let result = match group {
        Group::Copybook(c) => copybook_cmd(c, out),
        Group::Codec(c) => codec_cmd(c, out),
        Group::Recio(c) => recio_cmd(c, out, err),
        Group::Ksds(c) => ksds_cmd(c, out),
        Group::Migrate(c) => migrate_cmd(c, out),
        Group::Harness(c) => harness_cmd(c, out, err),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "mfmig: {}", e.message);
            e.code
        }
    };
    if out.flush().is_err() && code == EXIT_OK {
        return EXIT_IO;
    }
    code
}

/// Process entry point.
pub fn main() -> i32 {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut err = io::stderr().lock();
    run(std::env::args_os(), &mut out, &mut err)
}

// --- copybook -------------------------------------------------------------

fn copybook_cmd(cmd: CopybookCmd, out: &mut dyn Write) -> CliResult {
    let CopybookCmd::Parse { file, discriminator, json, normalize } = cmd;
    let schema = load_schema(&file, discriminator.as_deref())?;
    if json {
        let doc = serde_json::json!({
            "name": schema.name(),
            "fingerprint": schema.fingerprint(),
            "total_length": schema.total_length(),
            "layouts": schema.layouts(),
            "discriminator": schema.discriminator(),
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("schema serializes"))?;
    } else if normalize {
        out.write_all(schema.to_copybook().as_bytes())?;
    } else {
        out.write_all(schema.field_table().as_bytes())?;
    }
    Ok(EXIT_OK)
}

// --- codec ----------------------------------------------------------------

fn codec_cmd(cmd: CodecCmd, out: &mut dyn Write) -> CliResult {
    match cmd {
        CodecCmd::Transcode { schema, from, to, framing, input, output } => {
            let schema = schema.load()?;
            let direction = Direction::new(from, to).ok_or_else(|| CliError::usage("--from and --to must differ"))?;
            let in_spec = framing.spec(from, Some(&schema))?;
            let out_spec = framing.spec(to, Some(&schema))?;
            match transcode_file(&input, &output, &in_spec, &out_spec, &schema, direction) {
                Ok(n) => {
                    writeln!(out, "{n} records transcoded {from} -> {to}")?;
                    Ok(EXIT_OK)
                }
                Err(e) => {
                    let _ = fs::remove_file(&output);
                    Err(e)
                }
            }
        }
        CodecCmd::Decode { schema, encoding, record_hex, json } => {
            let schema = schema.load()?;
            let record = hex::decode(record_hex.trim()).map_err(|e| CliError::usage(format!("--hex: {e}")))?;
            let decoded = decode_record(&record, &schema, encoding).map_err(|e| CliError::new(EXIT_SEMANTIC, e.to_string()))?;
            if json {
                writeln!(out, "{}", serde_json::to_string(&decoded).expect("record serializes"))?;
            } else {
                writeln!(out, "layout={}", decoded.layout)?;
                for (name, value) in &decoded.fields {
                    writeln!(out, "{name}={}", value.display())?;
                }
            }
            Ok(EXIT_OK)
        }
        CodecCmd::Encode { pic, usage, value, overflow, encoding } => {
            let clause = match usage {
                UsageArg::Display => "",
                UsageArg::Comp => " COMP",
                UsageArg::Comp3 => " COMP-3",
            };
            let schema = parse_copybook(&format!("01 R. 05 V PIC {pic}{clause}."))
                .map_err(|e| CliError::usage(format!("bad picture `{pic}`: {e}")))?;
            let spec = schema.layouts()[0].fields[0].clone();
            let v = if spec.category == Category::Alphanumeric {
                FieldValue::Text(value)
            } else {
                FieldValue::Number(value.parse::<Decimal>().map_err(|e| CliError::usage(e.to_string()))?)
            };
            let bytes = encode_field(&v, &spec, encoding, overflow)
                .map_err(|e| CliError::new(EXIT_SEMANTIC, format!("{}: {e}", e.name())))?;
            let back = codec::decode_field(&bytes, &spec, encoding).map_err(|e| CliError::new(EXIT_SEMANTIC, e.to_string()))?;
            writeln!(out, "hex={} value={}", hex::encode_upper(&bytes), back.display())?;
            Ok(EXIT_OK)
        }
    }
}

fn transcode_file(
    input: &Path,
    output: &Path,
    in_spec: &RecordFileSpec,
    out_spec: &RecordFileSpec,
    schema: &CopybookSchema,
    direction: Direction,
) -> Result<usize, CliError> {
    let mut reader = open_records(input, in_spec)?;
    let file = fs::File::create(output).map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", output.display())))?;
    let mut writer = RecordWriter::new(BufWriter::new(file), out_spec)?;
    let mut ordinal = 0;
    while let Some(record) = reader.next_record().map_err(|e| e.in_file(input))? {
        ordinal += 1;
        let converted = transcode_record(&record, schema, direction)
            .map_err(|e: RecordError| CliError::new(EXIT_SEMANTIC, format!("record {ordinal}: {e}")))?;
        writer.write_record(&converted)?;
    }
    writer.finish()?.flush()?;
    Ok(ordinal)
}

// --- recio ----------------------------------------------------------------

fn recio_cmd(cmd: RecioCmd, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    match cmd {
        RecioCmd::Inspect { framing, encoding, schema, input } => {
            let schema = schema.load()?;
            let spec = framing.spec(encoding, schema.as_ref())?;
            let file = fs::File::open(&input).map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", input.display())))?;
            let mut out = out;
            inspect_to(io::BufReader::new(file), &spec, &mut out).map_err(|e| e.in_file(&input))?;
            Ok(EXIT_OK)
        }
        RecioCmd::Compare { a, b, framing, encoding, schema, match_by, key, ignore, json } => {
            // Every failure here is "trouble", exit 2.
            let trouble = |e: CliError| CliError::new(EXIT_USAGE, e.message);
            let schema = schema.load().map_err(trouble)?;
            let mut spec = framing.spec(encoding, schema.as_ref()).map_err(trouble)?;
            if let Some(k) = key {
                spec = spec.with_key(k);
            }
            let options = CompareOptions { match_by, ignore };
            let report = compare_files(&a, &b, &spec, &options).map_err(|e| CliError::usage(e.to_string()))?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"))?;
            } else {
                out.write_all(compare_text(&report).as_bytes())?;
            }
            if report.is_equal() {
                Ok(EXIT_OK)
            } else {
                writeln!(err, "mfmig: files differ ({} mismatching records)", report.mismatches.len())?;
                Ok(EXIT_SEMANTIC)
            }
        }
    }
}

fn compare_text(r: &CompareReport) -> String {
    let opt = |v: &Option<String>| v.clone().unwrap_or_else(|| "-".into());
    let ord = |v: Option<usize>| v.map_or_else(|| "-".into(), |n| n.to_string());
    let mut s = String::new();
    for m in &r.mismatches {
        let kind = match m.kind {
            MismatchKind::FieldMismatch => "differs",
            MismatchKind::OnlyInA => "only-in-a",
            MismatchKind::OnlyInB => "only-in-b",
        };
        s.push_str(&format!(
            "record a#{} b#{} {kind} key={} layout={}/{}\n",
            ord(m.ordinal_a),
            ord(m.ordinal_b),
            opt(&m.key),
            opt(&m.layout_a),
            opt(&m.layout_b)
        ));
        for f in &m.fields {
            s.push_str(&format!("  {} @{}+{} a={}", f.field, f.offset, f.length, f.a_hex));
            if let Some(v) = &f.a_value {
                s.push_str(&format!(" [{v}]"));
            }
            s.push_str(&format!(" b={}", f.b_hex));
            if let Some(v) = &f.b_value {
                s.push_str(&format!(" [{v}]"));
            }
            s.push('\n');
        }
    }
    s.push_str(&format!(
        "records a={} b={} equal={} mismatches={} {}\n",
        r.records_a,
        r.records_b,
        r.equal,
        r.mismatches.len(),
        if r.is_equal() { "EQUAL" } else { "DIFFERENT" }
    ));
    s
}

// --- ksds -----------------------------------------------------------------

fn open_dataset(a: &StoreArgs) -> Result<Dataset, CliError> {
    let schema = a.schema.load()?;
    let backend = match a.backend {
        BackendArg::Single => Backend::Single,
        BackendArg::Perlayout => Backend::PerLayout,
        BackendArg::Cached => stored_backend(&a.store)?.unwrap_or(Backend::Single),
    };
    let store = KsdsStore::open(&a.store, schema, a.key, backend, a.encoding)?;
    Ok(match a.backend {
        BackendArg::Cached => Dataset::Cache(cache_open(store)),
        _ => Dataset::Store(store),
    })
}

/// Writes back a dataset after a mutating command.
fn close_dataset(ds: Dataset) -> Result<(), CliError> {
    if let Some(s) = ds.close()? {
        log::info!("cache flushed: {} deletes, {} upserts ({} inserted, {} updated)", s.deletes, s.upserts, s.inserted, s.updated);
    }
    Ok(())
}

/// Key argument as bytes: hex, or text in the store's encoding.
fn key_arg(text: &str, is_hex: bool, encoding: Encoding) -> Result<Vec<u8>, CliError> {
    if is_hex {
        return hex::decode(text).map_err(|e| CliError::usage(format!("key `{text}`: {e}")));
    }
    text.chars()
        .map(|c| {
            let b = u8::try_from(u32::from(c)).map_err(|_| CliError::usage(format!("key character {c:?} is not Latin-1")))?;
            Ok(match encoding {
                Encoding::Ascii => b,
                Encoding::Ebcdic => cp037::LATIN1_TO_EBCDIC[b as usize],
            })
        })
        .collect()
}

fn print_record(out: &mut dyn Write, record: &[u8], ds: &Dataset, decode: bool) -> io::Result<()> {
    let store = ds.store();
    let key = hex::encode_upper(ds.key_spec().extract(record).unwrap_or(&[]));
    if !decode {
        return writeln!(out, "{key}\t{}", hex::encode_upper(record));
    }
    let line = match decode_record(record, store.schema(), store.encoding()) {
        Ok(d) => {
            let mut v = serde_json::to_value(&d).expect("record serializes");
            v["key"] = key.into();
            v
        }
        Err(e) => serde_json::json!({ "key": key, "error": e.to_string(), "hex": hex::encode_upper(record) }),
    };
    writeln!(out, "{line}")
}

fn ksds_cmd(cmd: KsdsCmd, out: &mut dyn Write) -> CliResult {
    match cmd {
        KsdsCmd::Scan { store, from, mode, reverse, limit, keys } => {
            // Read-only: the dataset is dropped, not closed, so nothing is rewritten.
            let mut ds = open_dataset(&store)?;
            let mut cursor = match &from {
                Some(k) => ds.start(&key_arg(k, keys.key_hex, store.encoding)?, mode)?,
                None if reverse => ds.last(),
                None => ds.first(),
            };
            let limit = limit.unwrap_or(usize::MAX);
            let mut n = 0;
            while n < limit {
                let next = if reverse { ds.read_prev(&mut cursor) } else { ds.read_next(&mut cursor) };
                match next {
                    Ok(r) => print_record(out, &r, &ds, keys.decode)?,
                    Err(KsdsError::EndOfFile) => break,
                    Err(e) => return Err(e.into()),
                }
                n += 1;
            }
            let s = ds.stats();
            log::info!("{n} records; {} sub-cursor advances, {} comparisons", s.sub_cursor_advances, s.comparisons);
            Ok(EXIT_OK)
        }
        KsdsCmd::Get { store, record_key, keys } => {
            let ds = open_dataset(&store)?;
            let record = ds.read(&key_arg(&record_key, keys.key_hex, store.encoding)?)?;
            print_record(out, &record, &ds, keys.decode)?;
            Ok(EXIT_OK)
        }
        KsdsCmd::Info { store: args } => {
            let ds = open_dataset(&args)?;
            let s = ds.store();
            writeln!(out, "store {}", args.store.display())?;
            writeln!(out, "backend {}", s.backend())?;
            writeln!(out, "key {}", args.key)?;
            writeln!(out, "encoding {}", s.encoding())?;
            writeln!(out, "generation {}", s.generation())?;
            writeln!(out, "schema {}", s.schema().fingerprint())?;
            for (name, count) in s.table_counts() {
                writeln!(out, "table {name} {count}")?;
            }
            writeln!(out, "records {}", ds.len())?;
            if let Some(o) = read_lock_owner(&args.store) {
                writeln!(out, "lock pid={} host={} since={}", o.pid, o.host, o.acquired)?;
            }
            Ok(EXIT_OK)
        }
        KsdsCmd::Load(args) => load_cmd(args, out),
        KsdsCmd::Bench { layouts, records, runs, delimiter, json } => {
            let rows: Vec<BenchRow> = bench_scan(&layouts, records, runs)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&rows).expect("rows serialize"))?;
            } else {
                let sep = delimiter.to_string();
                writeln!(out, "{}", BenchRow::HEADER.replace(',', &sep))?;
                for r in &rows {
                    writeln!(out, "{}", r.to_csv().replace(',', &sep))?;
                }
            }
            Ok(EXIT_OK)
        }
    }
}

// --- migrate --------------------------------------------------------------

fn load_cmd(args: LoadArgs, out: &mut dyn Write) -> CliResult {
    let mut ds = open_dataset(&args.store)?;
    let spec = args.framing.spec(args.store.encoding, Some(ds.store().schema()))?;
    let summary = migrate::load(&args.input, &spec, &mut ds, args.replace)?;
    close_dataset(ds)?;
    writeln!(out, "loaded {} records", summary.records)?;
    for (layout, count) in &summary.per_layout {
        writeln!(out, "  {layout} {count}")?;
    }
    Ok(EXIT_OK)
}

fn migrate_cmd(cmd: MigrateCmd, out: &mut dyn Write) -> CliResult {
    match cmd {
        MigrateCmd::Load(args) => load_cmd(args, out),
        MigrateCmd::Unload { store, framing, output } => {
            let ds = open_dataset(&store)?;
            let spec = framing.spec(store.encoding, Some(ds.store().schema()))?;
            let n = migrate::unload(&ds, &spec, &output)?;
            writeln!(out, "unloaded {n} records")?;
            Ok(EXIT_OK)
        }
        MigrateCmd::Validate { store, framing, input, json } => {
            let ds = open_dataset(&store)?;
            let spec = framing.spec(store.encoding, Some(ds.store().schema()))?;
            let report = migrate::validate(&input, &spec, &ds)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"))?;
            } else {
                out.write_all(report.to_text().as_bytes())?;
            }
            Ok(if report.is_empty() { EXIT_OK } else { EXIT_SEMANTIC })
        }
        MigrateCmd::Prune { store, predicate, strategy } => {
            let predicate: Predicate = predicate.parse().map_err(|e| CliError::usage(format!("--where: {e}")))?;
            let mut ds = open_dataset(&store)?;
            let s = migrate::prune(&mut ds, &predicate, strategy)?;
            close_dataset(ds)?;
            writeln!(
                out,
                "strategy={} examined={} deleted={} retained={} delete_ops={} insert_ops={} operations={}",
                s.strategy,
                s.examined,
                s.deleted,
                s.retained,
                s.delete_ops,
                s.insert_ops,
                s.operations()
            )?;
            Ok(EXIT_OK)
        }
    }
}

// --- harness --------------------------------------------------------------

fn load_plan(path: &Path) -> Result<ValidatedPlan, CliError> {
    let plan = Plan::load(path)?;
    Ok(validate_plan(&plan)?)
}

fn finish_run(report: RunReport, vp: &ValidatedPlan, args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let path = args.report.clone().unwrap_or_else(|| vp.plan.log_dir().join("report.json"));
    report
        .write(&path)
        .map_err(|e| CliError::new(EXIT_IO, format!("cannot write report {}: {e}", path.display())))?;
    if args.json {
        writeln!(out, "{}", report.to_json())?;
    } else {
        out.write_all(report.to_text().as_bytes())?;
    }
    writeln!(err, "report written to {}", path.display())?;
    Ok(match report.verdict() {
        Verdict::Pass => EXIT_OK,
        Verdict::Fail => EXIT_SEMANTIC,
    })
}

fn run_options(args: &RunArgs) -> Result<RunOptions, CliError> {
    if args.parallel == 0 {
        return Err(CliError::usage("--parallel must be at least 1"));
    }
    Ok(RunOptions { parallelism: args.parallel, vars: args.vars.iter().cloned().collect() })
}

fn harness_cmd(cmd: HarnessCmd, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    match cmd {
        HarnessCmd::Validate { plan } => {
            let vp = load_plan(&plan)?;
            let order: Vec<&str> = vp.order.iter().map(|&i| vp.jobs()[i].id.as_str()).collect();
            writeln!(
                out,
                "plan {} ok: {} jobs, {} comparisons; order {}",
                vp.plan.file.name,
                order.len(),
                vp.comparisons.len(),
                order.join(" ")
            )?;
            writeln!(out, "fingerprint {}", vp.fingerprint)?;
            Ok(EXIT_OK)
        }
        HarnessCmd::Run(args) => {
            let vp = load_plan(&args.plan)?;
            let report = run_plan(&vp, &run_options(&args)?);
            finish_run(report, &vp, &args, out, err)
        }
        HarnessCmd::Rerun { run: args, from } => {
            let vp = load_plan(&args.plan)?;
            let previous = load_report(&from)?;
            let report = rerun_failed(&vp, &previous, &run_options(&args)?)?;
            finish_run(report, &vp, &args, out, err)
        }
    }
}

#[cfg(test)]
mod tests;
