mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture_dir;

const BIN: &str = env!("CARGO_BIN_EXE_bugport");

fn bugport(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--config")
        .arg(fixture_dir().join("bugport.conf"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = bugport(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn outcomes(dir: &Path) -> String {
    read(dir, "report.jsonl")
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|v| v["kind"] == "case")
        .map(|v| {
            format!(
                "{} {}\n",
                v["case_id"].as_str().unwrap(),
                v["outcome"].as_str().unwrap()
            )
        })
        .collect()
}

#[test]
fn stages_run_one_at_a_time_and_match_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for stage in ["ingest", "sample", "analyze", "match"] {
        ok(out, &[stage]);
    }
    let first = read(out, "pairs.jsonl");
    ok(out, &["match"]);
    assert_eq!(read(out, "pairs.jsonl"), first);
    for stage in ["generate", "evaluate", "report"] {
        ok(out, &[stage]);
    }
    let expected = read(&fixture_dir(), "expected_verdicts.txt");
    assert_eq!(outcomes(out), expected);

    let golden = "conv2d-crash@torch.nn.LazyConv2d.py";
    assert_eq!(
        read(&out.join("rendered"), golden),
        read(&fixture_dir().join("golden"), golden)
    );
}

#[test]
fn a_missing_earlier_stage_is_a_stage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = bugport(dir.path(), &["match"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ingest"));
}

#[test]
fn configuration_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "alpha_io = 0.8\nwhat = 1\n").unwrap();
    let o = Command::new(BIN)
        .args(["--config", conf.to_str().unwrap(), "ingest"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    assert_eq!(bugport(dir.path(), &["--beta", "1.5", "ingest"]).status.code(), Some(2));
    assert_eq!(bugport(dir.path(), &["--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn env_overrides_the_config_file_and_flags_override_env() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["ingest"]);
    ok(out, &["analyze"]);
    let run_match = |env_beta: &str, flag: Option<&str>| {
        let mut cmd = Command::new(BIN);
        cmd.arg("--config")
            .arg(fixture_dir().join("bugport.conf"))
            .arg("--out")
            .arg(out);
        if let Some(b) = flag {
            cmd.args(["--beta", b]);
        }
        let o = cmd.arg("match").env("BUGPORT_BETA", env_beta).output().unwrap();
        assert!(o.status.success());
        read(out, "pairs.jsonl")
            .lines()
            .filter(|l| l.contains(r#""provenance":"context""#))
            .count()
    };
    let strict = run_match("1.0", None);
    let loose = run_match("1.0", Some("0.1"));
    assert!(strict < loose, "{strict} context pairs at 1.0, {loose} at 0.1");
}

#[test]
fn suppressed_bugs_leave_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["run"]);
    let before = read(out, "report.jsonl");
    let list = out.join("known.txt");
    std::fs::write(&list, "# already reported\ntorch.nn.Conv3d\n").unwrap();
    ok(out, &["--suppress-list", list.to_str().unwrap(), "report"]);
    let after = read(out, "report.jsonl");
    let api_bug_lines = |r: &str| r.lines().filter(|l| l.contains(r#""kind":"api_bug""#)).count();
    assert_eq!(api_bug_lines(&after) + 1, api_bug_lines(&before));
    assert!(!after
        .lines()
        .any(|l| l.contains(r#""kind":"api_bug""#) && l.contains("torch.nn.Conv3d")));
    assert!(after.contains(r#""suppressed":1"#));
}

#[test]
fn sweep_prints_one_row_per_beta() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["ingest"]);
    let text = ok(out, &["sweep-beta"]);
    assert_eq!(text.lines().count(), 10);
    assert_eq!(read(out, "sweep.jsonl").lines().count(), 9);
}

#[test]
fn the_subprocess_runner_gives_the_in_process_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let script = fixture_dir().join("mock_script.jsonl");
    let cmd = format!("'{BIN}' mock-runner --script '{}'", script.display());
    // The scripted slow case sleeps past this timeout instead of being
    // short-circuited as in the in-process mock.
    ok(out, &["--runner-cmd", &cmd, "--timeout-s", "1", "run"]);
    assert_eq!(outcomes(out), read(&fixture_dir(), "expected_verdicts.txt"));
}
