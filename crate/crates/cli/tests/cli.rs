use std::process::Command;

fn otpf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_otpf"))
}

#[test]
fn schedule_subcommand() {
    for (t, want) in [(1, "1024"), (2, "512"), (10, "64")] {
        let out = otpf().args(["schedule", &t.to_string()]).output().unwrap();
        assert!(out.status.success());
        assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), want);
    }
}

#[test]
fn validate_reports_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "sims = 0\n").unwrap();
    let out = otpf().arg("validate").arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("sims"));

    std::fs::write(&path, "").unwrap();
    let out = otpf().arg("validate").arg(&path).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("sims = 100"));
}

#[test]
fn run_honours_output_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "filters = [\"enkf\"]\nN = 20\nT = 3\nsims = 2\noutput_dir = \"/nonexistent/never\"\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = otpf().arg("run").arg(&path).env("OTPF_OUTPUT_DIR", &out_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trajectories.csv", "metrics.csv", "mse.csv", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}
