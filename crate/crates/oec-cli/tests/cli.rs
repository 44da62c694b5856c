//! Exit codes, RESULT lines and the run -> verify -> report pipeline of the
//! command-line interface.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn oec(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oec"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn scenario_path() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/two_node.json").into()
}

#[test]
fn run_verify_report_pipeline_is_closed() {
    let dir = tempfile::tempdir().unwrap();
    let out = oec(&["run", &scenario_path(), "--out", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let result = stdout.lines().last().unwrap();
    assert!(result.starts_with("RESULT ok "), "got: {result}");
    let tip = result.split_whitespace().nth(2).unwrap().to_string();
    assert_eq!(tip.len(), 64);

    // verify agrees and reports the same tip
    let ledger = dir.path().join("run/ledger.l1");
    let out = oec(&["verify", ledger.to_str().unwrap()], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains(&format!("RESULT ok {tip}")));

    // report regenerates byte-identical CSVs from the ledger alone
    let out = oec(
        &["report", ledger.to_str().unwrap(), "--out", "rep"],
        dir.path(),
    );
    assert!(out.status.success());
    for name in [
        "payments.csv",
        "reputations.csv",
        "rejections.csv",
        "utilization.csv",
        "spectrum.csv",
        "summary.txt",
    ] {
        let a = fs::read(dir.path().join("run").join(name)).unwrap();
        let b = fs::read(dir.path().join("rep").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between run and report");
    }
}

#[test]
fn missing_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = oec(&["run", "no-such-scenario.json", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty(), "diagnostic on stderr");
}

#[test]
fn invalid_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"seed": 1, "epochs": 0, "nodes": []}"#).unwrap();
    let out = oec(&["run", bad.to_str().unwrap(), "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tampered_ledger_verify_exits_1_with_index() {
    let dir = tempfile::tempdir().unwrap();
    let out = oec(&["run", &scenario_path(), "--out", "run", "--quiet"], dir.path());
    assert!(out.status.success());
    let ledger_path = dir.path().join("run/ledger.l1");
    let text = fs::read_to_string(&ledger_path).unwrap();

    // hex-edit one digit inside block 3's payload region
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut chars: Vec<char> = lines[3].chars().collect();
    let mid = chars.len() / 2;
    chars[mid] = if chars[mid] == 'f' { '0' } else { 'f' };
    lines[3] = chars.into_iter().collect();
    fs::write(&ledger_path, lines.join("\n")).unwrap();

    let out = oec(&["verify", ledger_path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("bad block index: 3"),
        "first bad index printed: {stdout}"
    );
    assert!(stdout.contains("RESULT fail"));

    // report on a tampered ledger also fails with exit 1
    let out = oec(
        &["report", ledger_path.to_str().unwrap(), "--out", "rep"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn truncated_ledger_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = oec(&["run", &scenario_path(), "--out", "run", "--quiet"], dir.path());
    assert!(out.status.success());
    let ledger_path = dir.path().join("run/ledger.l1");
    let bytes = fs::read(&ledger_path).unwrap();
    fs::write(&ledger_path, &bytes[..100]).unwrap();

    let out = oec(&["verify", ledger_path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_on_genesis_only_ledger_writes_headers() {
    let dir = tempfile::tempdir().unwrap();
    // a genesis-only export: one line
    let genesis_hex = {
        use oec::encoding::Canonical;
        oec::tx::Block::genesis().canonical_hex()
    };
    let path = dir.path().join("empty.l1");
    fs::write(&path, format!("{genesis_hex}\n")).unwrap();

    let out = oec(&["report", path.to_str().unwrap(), "--out", "rep"], dir.path());
    assert!(out.status.success());
    let payments = fs::read_to_string(dir.path().join("rep/payments.csv")).unwrap();
    assert_eq!(payments, "epoch,system,payer,payee,f,g,z_micro\n");
    let reputations = fs::read_to_string(dir.path().join("rep/reputations.csv")).unwrap();
    assert_eq!(reputations, "epoch,node,reputation\n");
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    for (name, seed) in [("a", "1"), ("b", "2")] {
        let out = oec(
            &["run", &scenario_path(), "--seed", seed, "--quiet", "--out", name],
            dir.path(),
        );
        assert!(out.status.success());
    }
    let a = fs::read(dir.path().join("a/ledger.l1")).unwrap();
    let b = fs::read(dir.path().join("b/ledger.l1")).unwrap();
    assert_ne!(a, b, "different seeds give different ledgers");
}

#[test]
fn vectors_are_printed_and_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let out = oec(&["vectors"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let hashvecs: Vec<&str> = stdout.lines().filter(|l| l.starts_with("HASHVEC")).collect();
    let nizkvecs: Vec<&str> = stdout.lines().filter(|l| l.starts_with("NIZKVEC")).collect();
    assert!(!hashvecs.is_empty());
    assert!(nizkvecs.len() >= 3);

    // hash vectors recompute
    for line in hashvecs {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bytes = {
            let hexstr = fields[2];
            (0..hexstr.len())
                .step_by(2)
                .map(|i| u8::from_str_radix(&hexstr[i..i + 2], 16).unwrap())
                .collect::<Vec<u8>>()
        };
        assert_eq!(oec::Hash256::digest(&bytes).to_hex(), fields[3]);
    }

    // proof vectors verify: g^s == t * pk^c with the derived challenge
    for line in nizkvecs {
        let f: Vec<&str> = line.split_whitespace().collect();
        let big = |s: &str| num_bigint::BigUint::parse_bytes(s.as_bytes(), 16).unwrap();
        let params = oec::GroupParams {
            p: big(f[1]),
            q: big(f[2]),
            g: big(f[3]),
        };
        let sk = big(f[4]);
        let context: Vec<u8> = (0..f[6].len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&f[6][i..i + 2], 16).unwrap())
            .collect();
        let kp = oec::KeyPair::from_secret(&params, sk).unwrap();
        let proof = oec::ZkProof {
            commitment: big(f[7]),
            response: big(f[8]),
            context,
        };
        assert!(oec::verify_proof(&params, &kp.pk, &proof), "vector verifies: {line}");
    }
}
