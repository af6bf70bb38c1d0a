use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skymemory"))
}

fn here(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join(rel)
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Compares against a checked-in file; `UPDATE_GOLDEN=1` rewrites it.
fn golden(name: &str, actual: &str) {
    let path = here(&format!("golden/{name}"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let want = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(want == actual, "{name} differs from golden copy:\n{actual}");
}

#[test]
fn sweep_csv_matches_golden() {
    let out = stdout(&bin().arg("sweep").output().unwrap());
    golden("sweep_default.csv", &out);
}

#[test]
fn sweep_writes_output_file_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let charts = dir.path().join("charts");
    stdout(
        &bin()
            .args(["sweep", "--charts"])
            .arg(&charts)
            .arg("--output")
            .arg(&csv)
            .output()
            .unwrap(),
    );
    golden("sweep_default.csv", &fs::read_to_string(&csv).unwrap());
    for section in ["kvc_bytes", "servers", "chunk_processing_time", "altitude"] {
        let svg = fs::read_to_string(charts.join(format!("{section}.svg"))).unwrap();
        golden(&format!("chart_{section}.svg"), &svg);
    }
}

#[test]
fn sweep_reads_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(
        &cfg,
        "SERVERS = 9..25\nSWEEP_POINTS = 2\nSTRATEGIES = hop-aware\n",
    )
    .unwrap();
    let out = stdout(
        &bin()
            .arg("--config")
            .arg(&cfg)
            .arg("sweep")
            .output()
            .unwrap(),
    );
    // 2 points for three sections, 2 odd squares for servers
    assert_eq!(out.lines().count(), 1 + 2 * 3 + 2);
    assert!(out.lines().skip(1).all(|l| l.contains(",hop-aware,")));
}

#[test]
fn malformed_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "SERVERS = 9..81\nALTITUDE = high\n").unwrap();
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("sweep")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn renders_match_golden() {
    for strategy in ["rotation-aware", "hop-aware", "rotation-hop-aware"] {
        for size in [3, 5, 7, 9] {
            for format in ["ascii", "svg"] {
                let out = stdout(
                    &bin()
                        .args([
                            "render",
                            "--strategy",
                            strategy,
                            "--size",
                            &size.to_string(),
                            "--format",
                            format,
                        ])
                        .output()
                        .unwrap(),
                );
                let ext = if format == "ascii" { "txt" } else { "svg" };
                golden(&format!("render_{strategy}_{size}.{ext}"), &out);
            }
        }
    }
}

#[test]
fn render_rejects_even_sizes() {
    let out = bin().args(["render", "--size", "4"]).output().unwrap();
    assert!(!out.status.success());
}

fn scenario(name: &str, transport: &str) -> Output {
    bin()
        .args(["scenario", "--transport", transport])
        .arg(here(&format!("scenarios/{name}.sky")))
        .output()
        .unwrap()
}

#[test]
fn scenarios_pass_on_the_simulator() {
    for name in ["round_trip", "rotation", "eviction", "unindexed"] {
        let out = stdout(&scenario(name, "sim"));
        assert!(!out.contains("FAIL"), "{name}:\n{out}");
        assert!(out.contains("stores: hits"), "{name}");
    }
}

#[test]
fn simulator_scenarios_are_deterministic() {
    let a = stdout(&scenario("round_trip", "sim"));
    let b = stdout(&scenario("round_trip", "sim"));
    assert_eq!(a, b);
    golden("scenario_round_trip.txt", &a);
}

#[test]
fn scenarios_pass_over_udp() {
    for name in ["round_trip", "eviction"] {
        let out = stdout(&scenario(name, "udp"));
        assert!(out.starts_with("udp: "), "{out}");
        assert!(!out.contains("FAIL"), "{name}:\n{out}");
    }
}

#[test]
fn failed_expectation_exits_nonzero() {
    let out = scenario("expect_fails", "sim");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn unknown_script_command_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.sky");
    fs::write(&script, "prompt a len=8\n\nteleport a\n").unwrap();
    let out = bin().arg("scenario").arg(&script).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}
