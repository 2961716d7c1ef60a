#ifndef MFMIG_H
#define MFMIG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Parsed copybook, optionally with a layout discriminator.
 */
typedef struct MfSchema MfSchema;

/*
 Result code of every fallible call.
 */
typedef int32_t MfStatus;

typedef uint32_t MfEncoding;

typedef uint32_t MfUsage;

typedef uint32_t MfOverflow;

#define MF_OK 0

/*
 A required pointer argument was null.
 */
#define MF_NULL_ARGUMENT 1

/*
 A string argument was not valid UTF-8.
 */
#define MF_INVALID_UTF8 2

/*
 An enum-valued argument was out of range, or a value did not parse.
 */
#define MF_INVALID_ARGUMENT 3

/*
 Copybook text was rejected.
 */
#define MF_PARSE_ERROR 4

/*
 Layout selection or discriminator configuration failed.
 */
#define MF_LAYOUT_ERROR 5

/*
 A record could not be decoded, encoded or transcoded.
 */
#define MF_RECORD_ERROR 6

/*
 A value does not fit its field under the strict policy.
 */
#define MF_OVERFLOW 7

/*
 The output buffer is too small; `*out_len` holds the needed size.
 */
#define MF_BUFFER_TOO_SMALL 8

#define MF_PANIC 99

#define MF_EBCDIC 0

#define MF_ASCII 1

#define MF_OVERFLOW_TRUNCATE 0

#define MF_OVERFLOW_STRICT 1

#define MF_USAGE_DISPLAY 0

#define MF_USAGE_COMP 1

#define MF_USAGE_COMP3 2

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call on this thread.
 */
const char *mf_last_error(void);

/*
 Parses copybook text into a new schema handle.

 # Safety
 `text` must be a NUL-terminated string; `out` must be writable.
 */
MfStatus mf_schema_parse(const char *text, MfSchema **out);

/*
 Releases a schema; null is ignored.

 # Safety
 `schema` must come from [`mf_schema_parse`] and not be used afterwards.
 */
void mf_schema_free(MfSchema *schema);

/*
 Attaches a discriminator given as TOML (`field`, `[values]`, optional
 `default`). On failure the schema is left unchanged.

 # Safety
 `schema` must be a live handle and `toml` a NUL-terminated string.
 */
MfStatus mf_schema_set_discriminator(MfSchema *schema, const char *toml);

/*
 Length of the longest layout, in bytes; 0 for a null handle.

 # Safety
 `schema` must be null or a live handle.
 */
uintptr_t mf_schema_total_length(const MfSchema *schema);

/*
 Number of record layouts; 0 for a null handle.

 # Safety
 `schema` must be null or a live handle.
 */
uintptr_t mf_schema_layout_count(const MfSchema *schema);

/*
 Stable fingerprint of the schema's layouts and discriminator.

 # Safety
 `schema` must be a live handle; `out` must be writable. Free the result
 with [`mf_string_free`].
 */
MfStatus mf_schema_fingerprint(const MfSchema *schema, char **out);

/*
 Converts one record between code pages, field by field: text and zoned
 fields are translated, COMP and COMP-3 bytes are copied untouched.

 # Safety
 `record` must point to `len` readable bytes and `out` to `cap` writable
 bytes; `out_len` must be writable.
 */
MfStatus mf_transcode_record(const MfSchema *schema,
                             MfEncoding from,
                             MfEncoding to,
                             const uint8_t *record,
                             uintptr_t len,
                             uint8_t *out,
                             uintptr_t cap,
                             uintptr_t *out_len);

/*
 Decodes one record to JSON: `{"layout": .., "fields": {NAME: {"text"|"number": ..}}}`.

 # Safety
 `record` must point to `len` readable bytes; `out_json` must be writable.
 Free the result with [`mf_string_free`].
 */
MfStatus mf_decode_record_json(const MfSchema *schema,
                               MfEncoding encoding,
                               const uint8_t *record,
                               uintptr_t len,
                               char **out_json);

/*
 Encodes `value` (text, or a decimal such as `-12.50`) into a field
 described by a PICTURE string and usage.

 # Safety
 `pic` and `value` must be NUL-terminated strings; `out` must point to
 `cap` writable bytes and `out_len` must be writable.
 */
MfStatus mf_encode_field(const char *pic,
                         MfUsage usage,
                         const char *value,
                         MfEncoding encoding,
                         MfOverflow overflow,
                         uint8_t *out,
                         uintptr_t cap,
                         uintptr_t *out_len);

/*
 Releases a string returned by this library; null is ignored.

 # Safety
 `s` must come from this library and not be used afterwards.
 */
void mf_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MFMIG_H */
