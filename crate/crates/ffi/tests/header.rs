//! The generated header is current and compiles as C and C++.

use std::path::Path;
use std::process::Command;

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mfmig.h")).unwrap()
}

#[test]
fn header_declares_the_api() {
    let h = header();
    for name in [
        "mf_schema_parse",
        "mf_schema_free",
        "mf_schema_set_discriminator",
        "mf_schema_total_length",
        "mf_schema_layout_count",
        "mf_schema_fingerprint",
        "mf_transcode_record",
        "mf_decode_record_json",
        "mf_encode_field",
        "mf_string_free",
        "mf_last_error",
        "typedef struct MfSchema MfSchema;",
        "#define MF_BUFFER_TOO_SMALL 8",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"mfmig.h\"\nint main(void) { MfSchema *s = 0; size_t n = 0; (void)n;\n  return mf_schema_parse(\"01 R. 05 A PIC X.\", &s) == MF_OK ? (int)mf_schema_total_length(s) - 1 : 1; }\n",
    )
    .unwrap();
    for (compiler, extra) in [("cc", &["-std=c99"][..]), ("c++", &["-x", "c++"][..])] {
        let status = Command::new(compiler)
            .args(extra)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(&include)
            .arg(&src)
            .status();
        match status {
            Ok(s) => assert!(s.success(), "{compiler} rejected the header"),
            Err(e) => eprintln!("skipping {compiler}: {e}"),
        }
    }
}
