use std::path::Path;

use super::*;

/// Runs the CLI and returns (exit code, stdout, stderr).
fn mfmig(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("mfmig").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const CPY: &str = "01 ACCT. 05 ID PIC X(4). 05 DAYS PIC 9(3). 05 BAL PIC S9(5)V99 COMP-3.";

fn records(n: u32) -> Vec<u8> {
    let schema = parse_copybook(CPY).unwrap();
    let l = &schema.layouts()[0];
    let mut bytes = Vec::new();
    for i in 1..=n {
        let mut r = vec![0u8; l.length];
        for (name, v) in [
            ("ID", FieldValue::Text(format!("{i:04}"))),
            ("DAYS", FieldValue::Number(Decimal::from_int(i as i64 * 10))),
            ("BAL", FieldValue::Number(Decimal::new(i as i128 * 101, 2))),
        ] {
            let f = l.field(name).unwrap();
            r[f.offset..f.end()].copy_from_slice(&encode_field(&v, f, Encoding::Ebcdic, OverflowPolicy::Strict).unwrap());
        }
        bytes.extend(r);
    }
    bytes
}

#[test]
fn help_goes_to_stdout_with_exit_0() {
    let (code, out, err) = mfmig(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("Usage"));
    assert!(err.is_empty());
    let (code, out, _) = mfmig(&["ksds", "scan", "--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("--from"));
}

#[test]
fn usage_errors_exit_2_on_stderr() {
    for args in [&["frobnicate"][..], &[], &["recio", "inspect"], &["codec", "encode", "--pic", "99"]] {
        let (code, out, err) = mfmig(args);
        assert_eq!(code, 2, "{args:?}");
        assert!(out.is_empty(), "{args:?}: {out}");
        assert!(!err.is_empty());
    }
}

#[test]
fn version_is_key_value() {
    let (code, out, _) = mfmig(&["--version"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("mfmig version="));
    assert!(out.contains("copybook-grammar=1"));
    assert_eq!(out.lines().count(), 1);
}

#[test]
fn encode_overflow_by_policy() {
    let (code, out, err) = mfmig(&["codec", "encode", "--pic", "99", "--value", "147", "--overflow", "truncate"]);
    assert_eq!((code, out.as_str(), err.as_str()), (0, "hex=F4F7 value=47\n", ""));
    let (code, out, err) = mfmig(&["codec", "encode", "--pic", "99", "--value", "147", "--overflow", "strict"]);
    assert_eq!(code, 1);
    assert!(out.is_empty());
    assert!(err.contains("OverflowError"), "{err}");
    let (code, out, _) = mfmig(&["codec", "encode", "--pic", "S9(3)V9", "--usage", "comp-3", "--value", "-12.5"]);
    assert_eq!((code, out.as_str()), (0, "hex=00125D value=-12.5\n"));
}

#[test]
fn copybook_parse_table_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cpy = write(dir.path(), "a.cpy", CPY);
    let (code, out, err) = mfmig(&["copybook", "parse", &cpy]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("BAL\t05\t7\t4\tpacked"), "{out}");
    let bad = write(dir.path(), "b.cpy", "01 R. 05 A PIC X(4) SYNC.");
    let (code, out, err) = mfmig(&["copybook", "parse", &bad]);
    assert_eq!(code, 2);
    assert!(out.is_empty() && !err.is_empty());
    let (code, _, _) = mfmig(&["copybook", "parse", &dir.path().join("missing.cpy").to_string_lossy()]);
    assert_eq!(code, 3);
}

#[test]
fn transcode_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let cpy = write(dir.path(), "a.cpy", CPY);
    let ebc = dir.path().join("in.ebc");
    fs::write(&ebc, records(3)).unwrap();
    let asc = dir.path().join("out.asc");
    let back = dir.path().join("back.ebc");
    let (code, out, err) =
        mfmig(&["codec", "transcode", "--schema", &cpy, "--from", "ebcdic", "--to", "ascii", ebc.to_str().unwrap(), asc.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("3 records"));
    let a = fs::read(&asc).unwrap();
    assert_eq!(&a[0..7], b"0001010");
    mfmig(&["codec", "transcode", "--schema", &cpy, "--from", "ascii", "--to", "ebcdic", asc.to_str().unwrap(), back.to_str().unwrap()]);
    assert_eq!(fs::read(&back).unwrap(), fs::read(&ebc).unwrap());

    let (code, out, _) = mfmig(&["recio", "inspect", "--schema", &cpy, "--encoding", "ascii", asc.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("  BAL=2.02"), "{out}");
    // Truncated file: dump stops with a corruption error.
    fs::write(&asc, &a[..a.len() - 1]).unwrap();
    let (code, _, err) = mfmig(&["recio", "inspect", "--lrecl", "11", asc.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(err.contains("trailing"), "{err}");
}

#[test]
fn compare_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cpy = write(dir.path(), "a.cpy", CPY);
    let a = dir.path().join("a.dat");
    let b = dir.path().join("b.dat");
    fs::write(&a, records(3)).unwrap();
    fs::write(&b, records(3)).unwrap();
    let args = |b: &Path| {
        vec!["recio".to_string(), "compare".into(), "--schema".into(), cpy.clone(), a.to_string_lossy().into(), b.to_string_lossy().into()]
    };
    let run_with = |v: Vec<String>| mfmig(&v.iter().map(String::as_str).collect::<Vec<_>>());
    let (code, out, _) = run_with(args(&b));
    assert_eq!(code, 0);
    assert!(out.ends_with("EQUAL\n"));

    let mut changed = records(3);
    changed[11 + 5] = 0xF9;
    fs::write(&b, changed).unwrap();
    let (code, out, err) = run_with(args(&b));
    assert_eq!(code, 1);
    assert!(out.contains("DAYS @4+3 a=F0F2F0 [20] b=F0F9F0 [90]"), "{out}");
    assert!(err.contains("differ"));

    let mut ignored = args(&b);
    ignored.extend(["--ignore".to_string(), "DAYS".into()]);
    assert_eq!(run_with(ignored).0, 0);

    fs::write(&b, &records(3)[..20]).unwrap();
    assert_eq!(run_with(args(&b)).0, 2);
    assert_eq!(run_with(args(&dir.path().join("nope"))).0, 2);
}

#[test]
fn store_round_trip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cpy = write(dir.path(), "a.cpy", CPY);
    let input = dir.path().join("in.dat");
    fs::write(&input, records(10)).unwrap();
    let store = dir.path().join("store");
    let s = |extra: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
        v.extend(["--store".into(), store.to_string_lossy().into(), "--schema".into(), cpy.clone(), "--key".into(), "0,4".into()]);
        v
    };
    let go = |v: Vec<String>| mfmig(&v.iter().map(String::as_str).collect::<Vec<_>>());
    let inp = input.to_string_lossy().to_string();

    let (code, out, err) = go(s(&["ksds", "load", &inp]));
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("loaded 10 records"));
    assert_eq!(go(s(&["migrate", "load", &inp])).0, 1, "non-empty store needs --replace");
    assert_eq!(go(s(&["migrate", "validate", &inp])).0, 0);

    let (code, out, _) = go(s(&["ksds", "get", "0003", "--decode"]));
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["fields"]["DAYS"], serde_json::json!({"number": "30"}));
    assert_eq!(v["fields"]["BAL"], serde_json::json!({"number": "3.03"}));
    assert_eq!(v["key"], "F0F0F0F3");
    let (code, out, err) = go(s(&["ksds", "get", "0042"]));
    assert_eq!(code, 1);
    assert!(out.is_empty() && err.contains("not found"));

    let (code, out, _) = go(s(&["ksds", "scan", "--from", "0008", "--reverse", "--limit", "2"]));
    assert_eq!(code, 0);
    let keys: Vec<&str> = out.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(keys, ["F0F0F0F7", "F0F0F0F6"]);

    let (code, out, err) = go(s(&["migrate", "prune", "--where", "DAYS>50", "--backend", "cached"]));
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("deleted=5 retained=5 delete_ops=5 insert_ops=0"), "{out}");
    let (code, out, _) = go(s(&["migrate", "validate", &inp]));
    assert_eq!(code, 1);
    assert!(out.ends_with("file=10 store=5 missing=5 extra=0 differing=0\n"), "{out}");
    assert_eq!(go(s(&["migrate", "prune", "--where", "DAYS>=5"])).0, 2);

    let out_file = dir.path().join("out.dat");
    let (code, out, _) = go(s(&["migrate", "unload", &out_file.to_string_lossy()]));
    assert_eq!((code, out.as_str()), (0, "unloaded 5 records\n"));
    assert_eq!(fs::read(&out_file).unwrap(), records(5));

    let (code, out, _) = go(s(&["ksds", "info"]));
    assert_eq!(code, 0);
    assert!(out.contains("table RECORDS 5"));

    // A second handle while one holds the lock.
    let held = KsdsStore::open(&store, parse_copybook(CPY).unwrap(), KeySpec::new(0, 4), Backend::Single, Encoding::Ebcdic).unwrap();
    let (code, _, err) = go(s(&["ksds", "get", "0001"]));
    assert_eq!(code, 3);
    assert!(err.contains("locked"), "{err}");
    drop(held);
    assert_eq!(go(s(&["ksds", "get", "0001", "--backend", "perlayout"])).0, 2, "backend mismatch");
}

#[test]
fn bench_prints_csv() {
    let (code, out, _) = mfmig(&["ksds", "bench", "--layouts", "1,3", "--records", "30", "--runs", "1", "--delimiter", ";"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "N;records;wall_ms;advances;comparisons");
    assert!(lines[1].starts_with("1;30;"));
    // 3 layouts, 30 records: 3 + 30 - 1 advances.
    assert!(lines[2].starts_with("3;30;") && lines[2].contains(";32;"), "{}", lines[2]);
}

#[test]
fn harness_validate_and_run() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "r.cpy", "01 R. 05 ID PIC X(4). 05 AMT PIC 9(4).");
    write(dir.path(), "in.dat", "0001000300020004");
    let plan = write(
        dir.path(),
        "plan.toml",
        r#"
version = 1
name = "t"

[[job]]
id = "legacy"
command = ["/bin/sh", "-c", "cp in.dat legacy.dat"]
inputs = ["in.dat"]
outputs = ["legacy.dat"]

[[job]]
id = "modern"
command = ["/bin/sh", "-c", "${MAKE_MODERN}"]
inputs = ["in.dat"]
outputs = ["modern.dat"]

[[comparison]]
name = "out"
legacy = "legacy.dat"
modern = "modern.dat"
schema = "r.cpy"
format = "fixed"
lrecl = 8
encoding = "ascii"
"#,
    );
    let (code, out, _) = mfmig(&["harness", "validate", &plan]);
    assert_eq!(code, 0);
    assert!(out.contains("2 jobs, 1 comparisons"));

    let report = dir.path().join("r.json").to_string_lossy().to_string();
    let (code, out, err) =
        mfmig(&["harness", "run", &plan, "--parallel", "2", "--report", &report, "--var", "MAKE_MODERN=cp in.dat modern.dat"]);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.contains("verdict PASS"));
    assert!(err.contains("report written"));

    let (code, out, _) =
        mfmig(&["harness", "run", &plan, "--report", &report, "--var", "MAKE_MODERN=printf 0001000300020099 > modern.dat"]);
    assert_eq!(code, 1);
    assert!(out.contains("verdict FAIL"));
    assert!(out.contains("AMT @4+4"), "{out}");

    let (code, out, _) = mfmig(&["harness", "run", &plan, "--report", &report, "--var", "MAKE_MODERN=exit 3"]);
    assert_eq!(code, 1);
    assert!(out.contains("job modern failed exit=3"), "{out}");

    let (code, out, err) =
        mfmig(&["harness", "rerun", &plan, "--from", &report, "--var", "MAKE_MODERN=cp in.dat modern.dat", "--json"]);
    assert_eq!(code, 0, "{err}");
    let json: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(json["body"]["verdict"], "PASS");
    assert_eq!(json["header"]["executed"], serde_json::json!(["modern"]));

    let broken = write(dir.path(), "bad.toml", &fs::read_to_string(&plan).unwrap().replace("legacy.dat\"]\n\n", "modern.dat\"]\n\n"));
    let (code, out, err) = mfmig(&["harness", "validate", &broken]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("both write"), "{err}");
}
