//! Late-payment credit batch step, in two implementations.
//!
//! `legacy` mirrors the original program: it works on the EBCDIC bytes
//! directly and moves DAYS-LATE into the two-digit CREDIT-DAYS the way a
//! COBOL MOVE does, dropping high-order digits. `modern` is the rewrite: it
//! decodes through the copybook and re-encodes under a chosen overflow
//! policy. With `--overflow strict` a record over 99 days aborts the step.
//!
//! Credit = BALANCE * RATE / 100 (RATE is a percentage), truncated to cents.
//! STATUS-CODE is `LT` when the stored CREDIT-DAYS exceeds 30, else `OK`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfmig::codec::{decode_field, encode_field, Decimal, Encoding, FieldValue, OverflowPolicy};
use mfmig::copybook::{parse_copybook, CopybookSchema, RecordLayout};
use mfmig::recio::{read_records, write_records, RecordFileSpec};

const IN_COPYBOOK: &str = include_str!("../../demo/billing/billing-in.cpy");
const OUT_COPYBOOK: &str = include_str!("../../demo/billing/billing-out.cpy");

/// Abend-style return code for a data exception.
const RC_DATA: u8 = 12;
const RC_IO: u8 = 8;

/// Index of the generated record carrying 147 days late.
const LONG_OVERDUE: usize = 137;

#[derive(Parser)]
#[command(name = "billing-credit", about = "Late-payment credit batch step (demo)")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Writes a deterministic EBCDIC input file.
    Generate {
        #[arg(long, default_value_t = 1000)]
        records: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reference implementation.
    Legacy {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewritten implementation.
    Modern {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "truncate")]
        overflow: OverflowPolicy,
    },
}

fn schemas() -> (CopybookSchema, CopybookSchema) {
    let parse = |text| parse_copybook(text).expect("bundled copybook parses");
    (parse(IN_COPYBOOK), parse(OUT_COPYBOOK))
}

fn layout(schema: &CopybookSchema) -> &RecordLayout {
    &schema.layouts()[0]
}

fn spec(schema: &CopybookSchema) -> RecordFileSpec {
    RecordFileSpec::fixed(schema.total_length(), Encoding::Ebcdic)
}

fn generate(records: usize) -> Vec<Vec<u8>> {
    let (input, _) = schemas();
    let l = layout(&input);
    let put = |r: &mut Vec<u8>, name: &str, v: FieldValue| {
        let f = l.field(name).expect("field exists");
        let bytes = encode_field(&v, f, Encoding::Ebcdic, OverflowPolicy::Strict).expect("generated value fits");
        r[f.offset..f.end()].copy_from_slice(&bytes);
    };
    (0..records)
        .map(|i| {
            let mut r = vec![0u8; input.total_length()];
            let days = if i == LONG_OVERDUE { 147 } else { (i as i64 * 37 + 11) % 100 };
            let balance = ((i as i128 * 7919 + 1234) % 10_000_000) * if i % 7 == 3 { -1 } else { 1 };
            let rate = (i as i128 * 13) % 2500;
            put(&mut r, "ACCT-ID", FieldValue::Text(format!("A{:07}", i + 1)));
            put(&mut r, "CUST-NAME", FieldValue::Text(format!("CUSTOMER {:05}", i + 1)));
            put(&mut r, "DAYS-LATE", FieldValue::Number(Decimal::from_int(days)));
            put(&mut r, "BALANCE", FieldValue::Number(Decimal::new(balance, 2)));
            put(&mut r, "RATE", FieldValue::Number(Decimal::new(rate, 2)));
            r
        })
        .collect()
}

// --- legacy: byte-level, EBCDIC throughout -------------------------------

const EBCDIC_O: u8 = 0xD6;
const EBCDIC_K: u8 = 0xD2;
const EBCDIC_L: u8 = 0xD3;
const EBCDIC_T: u8 = 0xE3;

fn unpack(bytes: &[u8]) -> i128 {
    let mut v: i128 = 0;
    for (i, b) in bytes.iter().enumerate() {
        v = v * 10 + (b >> 4) as i128;
        if i + 1 < bytes.len() {
            v = v * 10 + (b & 0x0F) as i128;
        }
    }
    if bytes.last().is_some_and(|b| b & 0x0F == 0x0D) {
        -v
    } else {
        v
    }
}

fn pack(value: i128, len: usize) -> Vec<u8> {
    let digits = len * 2 - 1;
    let mut v = value.unsigned_abs() % 10u128.pow(digits as u32);
    let mut nibbles = vec![if value < 0 { 0x0D } else { 0x0C }];
    for _ in 0..digits {
        nibbles.push((v % 10) as u8);
        v /= 10;
    }
    nibbles.reverse();
    nibbles.chunks(2).map(|p| (p[0] << 4) | p[1]).collect()
}

fn legacy_step(r: &[u8]) -> Vec<u8> {
    // BILL-IN: ACCT-ID 0..8, CUST-NAME 8..28, DAYS-LATE 28..31,
    // BALANCE 31..36, RATE 36..40.
    let mut out = Vec::with_capacity(17);
    out.extend_from_slice(&r[0..8]);
    // MOVE DAYS-LATE TO CREDIT-DAYS keeps the two low-order digits.
    out.extend_from_slice(&r[29..31]);
    let balance = unpack(&r[31..36]);
    let rate = i32::from_be_bytes([r[36], r[37], r[38], r[39]]) as i128;
    out.extend(pack(balance * rate / 10_000, 5));
    let days = (out[8] & 0x0F) as u32 * 10 + (out[9] & 0x0F) as u32;
    out.extend_from_slice(&if days > 30 { [EBCDIC_L, EBCDIC_T] } else { [EBCDIC_O, EBCDIC_K] });
    out
}

// --- modern: through the codec ---------------------------------------------

#[derive(Debug)]
struct StepError(String);

fn modern_step(r: &[u8], input: &RecordLayout, output: &RecordLayout, policy: OverflowPolicy) -> Result<Vec<u8>, StepError> {
    let enc = Encoding::Ebcdic;
    let get = |name: &str| {
        let f = input.field(name).expect("input field");
        decode_field(r, f, enc).map_err(|e| StepError(format!("{name}: {e}")))
    };
    let number = |v: FieldValue| match v {
        FieldValue::Number(d) => d,
        FieldValue::Text(_) => unreachable!("numeric field"),
    };
    let acct = get("ACCT-ID")?;
    let days = number(get("DAYS-LATE")?);
    let balance = number(get("BALANCE")?);
    let rate = number(get("RATE")?);
    let credit = Decimal::new(balance.coefficient() * rate.coefficient() / 10_000, 2);

    let put = |out: &mut [u8], name: &str, v: &FieldValue| -> Result<(), StepError> {
        let f = output.field(name).expect("output field");
        let bytes = encode_field(v, f, enc, policy).map_err(|e| StepError(format!("{name}: {e}")))?;
        out[f.offset..f.end()].copy_from_slice(&bytes);
        Ok(())
    };
    let mut out = vec![0u8; output.length];
    put(&mut out, "ACCT-ID", &acct)?;
    put(&mut out, "CREDIT-DAYS", &FieldValue::Number(days))?;
    put(&mut out, "CREDIT-AMT", &FieldValue::Number(credit))?;
    // Status follows the stored (possibly truncated) day count.
    let stored = decode_field(&out, output.field("CREDIT-DAYS").expect("output field"), enc)
        .map_err(|e| StepError(e.to_string()))?;
    let late = number(stored) > Decimal::from_int(30);
    put(&mut out, "STATUS-CODE", &FieldValue::Text(if late { "LT" } else { "OK" }.into()))?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (input, output) = schemas();
    let io_fail = |e: &dyn std::fmt::Display| {
        eprintln!("billing-credit: {e}");
        ExitCode::from(RC_IO)
    };
    match cli.command {
        Cmd::Generate { records, out } => match write_records(&out, &spec(&input), generate(records)) {
            Ok(_) => ExitCode::SUCCESS,
            Err(e) => io_fail(&e),
        },
        Cmd::Legacy { input: path, out } => {
            let records = match read_records(&path, &spec(&input)) {
                Ok(r) => r,
                Err(e) => return io_fail(&e),
            };
            match write_records(&out, &spec(&output), records.iter().map(|r| legacy_step(r))) {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => io_fail(&e),
            }
        }
        Cmd::Modern { input: path, out, overflow } => {
            let records = match read_records(&path, &spec(&input)) {
                Ok(r) => r,
                Err(e) => return io_fail(&e),
            };
            let mut produced = Vec::with_capacity(records.len());
            for (i, r) in records.iter().enumerate() {
                match modern_step(r, layout(&input), layout(&output), overflow) {
                    Ok(o) => produced.push(o),
                    Err(StepError(msg)) => {
                        eprintln!("billing-credit: record {}: {msg}", i + 1);
                        return ExitCode::from(RC_DATA);
                    }
                }
            }
            match write_records(&out, &spec(&output), produced) {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => io_fail(&e),
            }
        }
    }
}
