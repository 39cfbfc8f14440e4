use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use wavecontrol_cli::{parse_config, RunMethod, Scenario};
use wavecontrol_core::{dump, wave, SpaceTimeField};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavecontrol"))
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL_LS: &str =
    "nx = 60\nT = 1.0\nnonlinearity = \"sine(1, 0.5)\"\ninit = \"sine_mode(1, 0.3)\"\nmethod = \"ls\"\n";

#[test]
fn shipped_scenarios_parse() {
    let mut n = 0;
    for entry in fs::read_dir(scenarios_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let sc = Scenario::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            assert!(sc.warnings.is_empty(), "{}", p.display());
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn dry_run_prints_without_computing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SMALL_LS);
    let out = tmp.path().join("out");
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--dry-run",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(!out.exists());
    let printed = String::from_utf8(o.stdout).unwrap();
    let sc = parse_config(&printed).unwrap();
    assert_eq!(sc.seed, 9);
    assert_eq!(sc.nx, 60);
    assert_eq!(sc.method, RunMethod::Ls);
}

#[test]
fn parse_errors_exit_with_two_and_list_every_offense() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "nx = 20\nfoo = 1\nmethod = \"nope\"\n");
    let o = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 2: unknown key `foo`"), "{err}");
    assert!(err.contains("line 3:"), "{err}");
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SMALL_LS);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = run(&[
            "run",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            "5",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["iterates.csv", "summary.json", "state.dump", "control.dump"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let probe = write(
        tmp.path(),
        "p.toml",
        "nx = 40\nmethod = \"probe\"\nprobe_magnitudes = [0, 10]\nprobe_samples = 3\n",
    );
    let (c, d) = (tmp.path().join("c"), tmp.path().join("d"));
    for dir in [&c, &d] {
        let o = run(&[
            "probe",
            probe.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            "11",
        ]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(
        fs::read(c.join("probe.csv")).unwrap(),
        fs::read(d.join("probe.csv")).unwrap()
    );
}

#[test]
fn dumps_round_trip_through_the_reader() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SMALL_LS);
    let out = tmp.path().join("out");
    assert_eq!(
        code(&run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])),
        0
    );
    for name in ["state.dump", "control.dump"] {
        let bytes = fs::read(out.join(name)).unwrap();
        let field = dump::read_field(BufReader::new(&bytes[..])).unwrap();
        assert_eq!(dump::field_to_string(&field).into_bytes(), bytes, "{name}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["method"], "ls");
    assert_eq!(summary["outcome"], "converged");
    assert!(summary["final_E"].as_f64().unwrap() <= 1e-12);
    assert_eq!(summary["wallclock"], 0.0);
}

#[test]
fn converged_dumps_restart_as_user_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SMALL_LS);
    let first = tmp.path().join("first");
    assert_eq!(
        code(&run(&["run", cfg.to_str().unwrap(), "--out", first.to_str().unwrap()])),
        0
    );
    let restart = format!(
        "{SMALL_LS}init_mode = \"user\"\nuser_state = \"first/state.dump\"\nuser_control = \"first/control.dump\"\n"
    );
    let cfg2 = write(tmp.path(), "restart.toml", &restart);
    let second = tmp.path().join("second");
    let o = run(&["run", cfg2.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(second.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["iterations"], 0);
}

#[test]
fn file_profile_reads_the_initial_state() {
    let tmp = tempfile::tempdir().unwrap();
    let analytic = write(
        tmp.path(),
        "a.toml",
        "nx = 50\nmethod = \"hum_linear\"\ninit = \"sine_mode(2, 0.7)\"\ninit_velocity = \"bump(0.4, 0.3, 2)\"\n",
    );
    let a = wavecontrol_cli::resolve(&Scenario::load(&analytic).unwrap()).unwrap();
    let zero = SpaceTimeField::zeros(&a.grid);
    let free = wave::solve_forward(&a.grid, &zero, &zero, &a.init).unwrap();
    fs::write(tmp.path().join("free.dump"), dump::field_to_string(&free)).unwrap();
    let from_file = write(
        tmp.path(),
        "f.toml",
        "nx = 50\nmethod = \"hum_linear\"\ninit = \"file(free.dump)\"\ntarget = \"file(free.dump)\"\n",
    );
    let b = wavecontrol_cli::resolve(&Scenario::load(&from_file).unwrap()).unwrap();
    let gap = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(gap(&a.init.pos, &b.init.pos) <= 1e-14);
    assert!(gap(&a.init.vel, &b.init.vel) <= 1e-10);
    let end = wave::terminal_state(&free);
    assert!(gap(&end.pos, &b.target.pos) == 0.0 && gap(&end.vel, &b.target.vel) == 0.0);
    let o = run(&[
        "run",
        from_file.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failure_modes_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let short = write(
        tmp.path(),
        "short.toml",
        "nx = 40\nT = 0.3\nmethod = \"hum_linear\"\nhum_max_iter = 30\n",
    );
    let o = run(&[
        "run",
        short.to_str().unwrap(),
        "--out",
        tmp.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("geometric control condition"));

    let capped = write(
        tmp.path(),
        "capped.toml",
        "nx = 60\nnonlinearity = \"sine(0, 50)\"\ninit = \"sine_mode(1, 20)\"\nmethod = \"picard\"\nmax_outer = 3\n",
    );
    let o = run(&[
        "run",
        capped.to_str().unwrap(),
        "--out",
        tmp.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 7);

    let missing = write(tmp.path(), "missing.toml", "nx = 60\ninit = \"file(nowhere.dump)\"\n");
    let o = run(&[
        "run",
        missing.to_str().unwrap(),
        "--out",
        tmp.path().join("m").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn compare_writes_one_directory_per_method() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SMALL_LS);
    let out = tmp.path().join("cmp");
    let o = run(&[
        "compare",
        cfg.to_str().unwrap(),
        "--methods",
        "ls,newton,picard",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for m in ["ls", "newton", "picard"] {
        assert!(out.join(m).join("summary.json").exists(), "{m}");
    }
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().ends_with(",method"));
    let methods: std::collections::BTreeSet<&str> = lines.map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(methods.into_iter().collect::<Vec<_>>(), ["ls", "newton", "picard"]);
    let o = run(&["compare", cfg.to_str().unwrap(), "--methods", "ls,magic"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn directory_batch_isolates_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let batch = tmp.path().join("batch");
    fs::create_dir(&batch).unwrap();
    write(&batch, "one.toml", SMALL_LS);
    write(&batch, "two.toml", "nx = 50\nmethod = \"hum_linear\"\n");
    let out = tmp.path().join("out");
    let o = bin()
        .env("WAVECONTROL_THREADS", "2")
        .args(["run", batch.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("one/iterates.csv").exists());
    assert!(out.join("two/diagnostics.json").exists());
}

#[test]
fn help_lists_exit_codes() {
    let o = run(&["run", "--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("Exit codes:"));
    assert!(text.contains("5  inner control solve did not converge"));
}
