//! C ABI over the copybook and codec layer.
//!
//! Conventions:
//! * every fallible call returns an [`MfStatus`]; on failure a message is
//!   available from [`mf_last_error`] on the same thread;
//! * schemas are opaque [`MfSchema`] handles released with [`mf_schema_free`];
//! * strings returned through `char **` are owned by the caller and released
//!   with [`mf_string_free`];
//! * byte outputs go to caller buffers; when a buffer is too small the call
//!   returns `MF_BUFFER_TOO_SMALL` and stores the needed size in `*out_len`.
//!
//! No call unwinds across the boundary: panics become `MF_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;

use mfmig::codec::{self, Decimal, Direction, Encoding, FieldValue, OverflowPolicy};
use mfmig::copybook::{parse_copybook, Category, CopybookSchema, DiscriminatorRule};

/// Result code of every fallible call.
pub type MfStatus = i32;

pub const MF_OK: MfStatus = 0;
/// A required pointer argument was null.
pub const MF_NULL_ARGUMENT: MfStatus = 1;
/// A string argument was not valid UTF-8.
pub const MF_INVALID_UTF8: MfStatus = 2;
/// An enum-valued argument was out of range, or a value did not parse.
pub const MF_INVALID_ARGUMENT: MfStatus = 3;
/// Copybook text was rejected.
pub const MF_PARSE_ERROR: MfStatus = 4;
/// Layout selection or discriminator configuration failed.
pub const MF_LAYOUT_ERROR: MfStatus = 5;
/// A record could not be decoded, encoded or transcoded.
pub const MF_RECORD_ERROR: MfStatus = 6;
/// A value does not fit its field under the strict policy.
pub const MF_OVERFLOW: MfStatus = 7;
/// The output buffer is too small; `*out_len` holds the needed size.
pub const MF_BUFFER_TOO_SMALL: MfStatus = 8;
pub const MF_PANIC: MfStatus = 99;

pub type MfEncoding = u32;
pub const MF_EBCDIC: MfEncoding = 0;
pub const MF_ASCII: MfEncoding = 1;

pub type MfOverflow = u32;
pub const MF_OVERFLOW_TRUNCATE: MfOverflow = 0;
pub const MF_OVERFLOW_STRICT: MfOverflow = 1;

pub type MfUsage = u32;
pub const MF_USAGE_DISPLAY: MfUsage = 0;
pub const MF_USAGE_COMP: MfUsage = 1;
pub const MF_USAGE_COMP3: MfUsage = 2;

/// Parsed copybook, optionally with a layout discriminator.
pub struct MfSchema {
    schema: CopybookSchema,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(MfStatus, String);

type Outcome = Result<(), Failure>;

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

/// Runs `body`, recording any failure or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Outcome) -> MfStatus {
    match panic::catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            MF_OK
        }
        Ok(Err(Failure(code, message))) => {
            set_last_error(&message);
            code
        }
        Err(_) => {
            set_last_error("internal panic");
            MF_PANIC
        }
    }
}

fn fail<T>(code: MfStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(code, message.into()))
}

unsafe fn text_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(MF_NULL_ARGUMENT, format!("{what} is null"));
    }
    CStr::from_ptr(p).to_str().or_else(|_| fail(MF_INVALID_UTF8, format!("{what} is not UTF-8")))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(MF_NULL_ARGUMENT, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn schema_arg<'a>(p: *const MfSchema) -> Result<&'a CopybookSchema, Failure> {
    p.as_ref().map(|s| &s.schema).ok_or(Failure(MF_NULL_ARGUMENT, "schema is null".into()))
}

fn encoding_arg(e: MfEncoding) -> Result<Encoding, Failure> {
    match e {
        MF_EBCDIC => Ok(Encoding::Ebcdic),
        MF_ASCII => Ok(Encoding::Ascii),
        other => fail(MF_INVALID_ARGUMENT, format!("unknown encoding {other}")),
    }
}

/// Copies `bytes` into the caller's buffer, or reports the size needed.
unsafe fn write_out(bytes: &[u8], out: *mut u8, cap: usize, out_len: *mut usize) -> Outcome {
    if out_len.is_null() {
        return fail(MF_NULL_ARGUMENT, "out_len is null");
    }
    *out_len = bytes.len();
    if bytes.len() > cap {
        return fail(MF_BUFFER_TOO_SMALL, format!("need {} bytes, buffer holds {cap}", bytes.len()));
    }
    if !bytes.is_empty() {
        if out.is_null() {
            return fail(MF_NULL_ARGUMENT, "output buffer is null");
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
    }
    Ok(())
}

unsafe fn write_string(s: String, out: *mut *mut c_char) -> Outcome {
    if out.is_null() {
        return fail(MF_NULL_ARGUMENT, "output pointer is null");
    }
    *out = CString::new(s).or_else(|_| fail(MF_RECORD_ERROR, "result contains NUL"))?.into_raw();
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn mf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses copybook text into a new schema handle.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_schema_parse(text: *const c_char, out: *mut *mut MfSchema) -> MfStatus {
    guard(|| {
        if out.is_null() {
            return fail(MF_NULL_ARGUMENT, "out is null");
        }
        *out = ptr::null_mut();
        let schema = parse_copybook(text_arg(text, "text")?).or_else(|e| fail(MF_PARSE_ERROR, e.to_string()))?;
        *out = Box::into_raw(Box::new(MfSchema { schema }));
        Ok(())
    })
}

/// Releases a schema; null is ignored.
///
/// # Safety
/// `schema` must come from [`mf_schema_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mf_schema_free(schema: *mut MfSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// Attaches a discriminator given as TOML (`field`, `[values]`, optional
/// `default`). On failure the schema is left unchanged.
///
/// # Safety
/// `schema` must be a live handle and `toml` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mf_schema_set_discriminator(schema: *mut MfSchema, toml: *const c_char) -> MfStatus {
    guard(|| {
        let handle = schema.as_mut().ok_or(Failure(MF_NULL_ARGUMENT, "schema is null".into()))?;
        let rule = DiscriminatorRule::from_toml(text_arg(toml, "toml")?).or_else(|e| fail(MF_LAYOUT_ERROR, e.to_string()))?;
        let updated = handle.schema.clone().with_discriminator(rule).or_else(|e| fail(MF_LAYOUT_ERROR, e.to_string()))?;
        handle.schema = updated;
        Ok(())
    })
}

/// Length of the longest layout, in bytes; 0 for a null handle.
///
/// # Safety
/// `schema` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_schema_total_length(schema: *const MfSchema) -> usize {
    schema.as_ref().map_or(0, |s| s.schema.total_length())
}

/// Number of record layouts; 0 for a null handle.
///
/// # Safety
/// `schema` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_schema_layout_count(schema: *const MfSchema) -> usize {
    schema.as_ref().map_or(0, |s| s.schema.layouts().len())
}

/// Stable fingerprint of the schema's layouts and discriminator.
///
/// # Safety
/// `schema` must be a live handle; `out` must be writable. Free the result
/// with [`mf_string_free`].
#[no_mangle]
pub unsafe extern "C" fn mf_schema_fingerprint(schema: *const MfSchema, out: *mut *mut c_char) -> MfStatus {
    guard(|| write_string(schema_arg(schema)?.fingerprint(), out))
}

/// Converts one record between code pages, field by field: text and zoned
/// fields are translated, COMP and COMP-3 bytes are copied untouched.
///
/// # Safety
/// `record` must point to `len` readable bytes and `out` to `cap` writable
/// bytes; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_transcode_record(
    schema: *const MfSchema,
    from: MfEncoding,
    to: MfEncoding,
    record: *const u8,
    len: usize,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> MfStatus {
    guard(|| {
        let schema = schema_arg(schema)?;
        let direction = Direction::new(encoding_arg(from)?, encoding_arg(to)?)
            .ok_or(Failure(MF_INVALID_ARGUMENT, "source and target encodings are the same".into()))?;
        let bytes = codec::transcode_record(bytes_arg(record, len, "record")?, schema, direction)
            .or_else(|e| fail(MF_RECORD_ERROR, e.to_string()))?;
        write_out(&bytes, out, cap, out_len)
    })
}

/// Decodes one record to JSON: `{"layout": .., "fields": {NAME: {"text"|"number": ..}}}`.
///
/// # Safety
/// `record` must point to `len` readable bytes; `out_json` must be writable.
/// Free the result with [`mf_string_free`].
#[no_mangle]
pub unsafe extern "C" fn mf_decode_record_json(
    schema: *const MfSchema,
    encoding: MfEncoding,
    record: *const u8,
    len: usize,
    out_json: *mut *mut c_char,
) -> MfStatus {
    guard(|| {
        let schema = schema_arg(schema)?;
        let decoded = codec::decode_record(bytes_arg(record, len, "record")?, schema, encoding_arg(encoding)?)
            .or_else(|e| fail(MF_RECORD_ERROR, e.to_string()))?;
        let json = serde_json::to_string(&decoded).or_else(|e| fail(MF_RECORD_ERROR, e.to_string()))?;
        write_string(json, out_json)
    })
}

/// Encodes `value` (text, or a decimal such as `-12.50`) into a field
/// described by a PICTURE string and usage.
///
/// # Safety
/// `pic` and `value` must be NUL-terminated strings; `out` must point to
/// `cap` writable bytes and `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_encode_field(
    pic: *const c_char,
    usage: MfUsage,
    value: *const c_char,
    encoding: MfEncoding,
    overflow: MfOverflow,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> MfStatus {
    guard(|| {
        let pic = text_arg(pic, "pic")?;
        let value = text_arg(value, "value")?;
        let clause = match usage {
            MF_USAGE_DISPLAY => "",
            MF_USAGE_COMP => " COMP",
            MF_USAGE_COMP3 => " COMP-3",
            other => return fail(MF_INVALID_ARGUMENT, format!("unknown usage {other}")),
        };
        let policy = match overflow {
            MF_OVERFLOW_TRUNCATE => OverflowPolicy::LegacyTruncate,
            MF_OVERFLOW_STRICT => OverflowPolicy::Strict,
            other => return fail(MF_INVALID_ARGUMENT, format!("unknown overflow policy {other}")),
        };
        let schema = parse_copybook(&format!("01 R. 05 V PIC {pic}{clause}."))
            .or_else(|e| fail(MF_PARSE_ERROR, format!("bad picture `{pic}`: {e}")))?;
        let spec = &schema.layouts()[0].fields[0];
        let v = if spec.category == Category::Alphanumeric {
            FieldValue::Text(value.to_string())
        } else {
            FieldValue::Number(value.parse::<Decimal>().or_else(|e| fail(MF_INVALID_ARGUMENT, e.to_string()))?)
        };
        let bytes = codec::encode_field(&v, spec, encoding_arg(encoding)?, policy).or_else(|e| {
            let code = if matches!(e, codec::CodecError::Overflow { .. }) { MF_OVERFLOW } else { MF_RECORD_ERROR };
            fail(code, format!("{}: {e}", e.name()))
        })?;
        write_out(&bytes, out, cap, out_len)
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
