//! The hand-written header must match the exported symbols and types.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn exported(src: &str) -> BTreeSet<String> {
    src.lines()
        .filter_map(|l| l.trim().split_once("extern \"C\" fn "))
        .map(|(_, rest)| rest.split('(').next().unwrap().trim().to_string())
        .collect()
}

fn declared(header: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for line in header.lines() {
        let line = line.trim();
        if line.starts_with("/*") || line.starts_with('*') || line.starts_with('#') {
            continue;
        }
        if let Some(open) = line.find("uav_").filter(|_| line.contains('(')) {
            let name: String = line[open..]
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
                .collect();
            if line[open + name.len()..].starts_with('(') {
                out.insert(name);
            }
        }
    }
    out
}

fn screaming(camel: &str) -> String {
    let mut s = String::new();
    for (i, c) in camel.chars().enumerate() {
        if c.is_ascii_uppercase() && i > 0 {
            s.push('_');
        }
        s.push(c.to_ascii_uppercase());
    }
    s
}

#[test]
fn header_declares_every_export() {
    let src = fs::read_to_string(root().join("src/lib.rs")).unwrap();
    let header = fs::read_to_string(root().join("include/uav_coop.h")).unwrap();
    let ex = exported(&src);
    let de = declared(&header);
    assert!(ex.len() >= 15, "found {ex:?}");
    assert_eq!(ex, de);
}

#[test]
fn status_codes_match() {
    let src = fs::read_to_string(root().join("src/lib.rs")).unwrap();
    let header = fs::read_to_string(root().join("include/uav_coop.h")).unwrap();
    let body = src.split("pub enum UavStatus {").nth(1).unwrap();
    let body = &body[..body.find('}').unwrap()];
    let mut n = 0;
    for line in body.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (name, value) = line.trim_end_matches(',').split_once(" = ").unwrap();
        let c = format!("UAV_STATUS_{} = {value},", screaming(name));
        assert!(header.contains(&c), "missing `{c}`");
        n += 1;
    }
    assert_eq!(n, header.matches("UAV_STATUS_").count());
}

#[test]
fn struct_fields_match() {
    let src = fs::read_to_string(root().join("src/lib.rs")).unwrap();
    let header = fs::read_to_string(root().join("include/uav_coop.h")).unwrap();
    for ty in ["UavCcpSettings", "UavPowerSummary"] {
        let rust = src.split(&format!("pub struct {ty} {{")).nth(1).unwrap();
        let rust = &rust[..rust.find('}').unwrap()];
        let fields: Vec<&str> = rust
            .lines()
            .filter_map(|l| l.trim().strip_prefix("pub "))
            .map(|l| l.split(':').next().unwrap())
            .collect();
        let c = header.split(&format!("typedef struct {ty} {{")).nth(1).unwrap();
        let c = &c[..c.find('}').unwrap()];
        let c_fields: Vec<&str> = c
            .lines()
            .map(str::trim)
            .filter(|l| l.ends_with(';'))
            .map(|l| l.trim_end_matches(';').rsplit(' ').next().unwrap())
            .collect();
        assert_eq!(fields, c_fields, "{ty}");
    }
}

fn compiler() -> Option<&'static str> {
    ["cc", "clang", "gcc"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
}

/// `target/<profile>` of the running test binary.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(root().join("include/uav_coop.h"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    let lib = profile_dir().join("libuav_coop_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(root().join("include"))
        .arg(root().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("smoke ok"), "{stdout}");
}
