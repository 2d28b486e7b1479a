use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_rdtlab");

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p
}

const ZERO: &str = "grid.n = 2\ngrid.resolution = 16\ngrid.box_length = 8\nflow.t_end = 0.1\ninit.kind = zero\n";

#[test]
fn zero_run_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ZERO);
    let out = dir.path().join("out");
    let o = Command::new(BIN).args(["evolve", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("command = evolve"));
    assert!(stdout.contains("final.sup = 0"));
    assert!(out.join("series.csv").exists());
}

#[test]
fn bad_config_exits_with_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{ZERO}flow.dt = -0.1\n"));
    let o = Command::new(BIN).args(["evolve", "--quiet", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.starts_with("error kind=config") && err.contains("flow.dt"), "{err}");
    let missing = Command::new(BIN).args(["evolve", "--config", "/nonexistent/x.cfg"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn numerical_abort_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "grid.n = 2\ngrid.resolution = 32\ngrid.box_length = 8\nflow.t_end = 1\ninit.kind = gaussian_bump\n\
         init.amplitude = 0.3\ninit.width = 0.5\ninit.pattern = 1, 0, -1\nharnack.t0 = 0.5\n",
    );
    let o = Command::new(BIN).args(["harnack-check", "--quiet", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    // t0 = 0.5 leaves less than one decade before t_end
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn replay_round_trip_and_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "grid.n = 2\ngrid.resolution = 16\ngrid.box_length = 8\nflow.t_end = 0.1\ninit.kind = random_bandlimited\n\
         init.amplitude = 0.01\ninit.cutoff = 2\ninit.seed = 3\n",
    );
    let out = dir.path().join("g");
    let o = Command::new(BIN).args(["generate", "--quiet", "--seed", "11", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(fs::read_to_string(out.join("provenance.txt")).unwrap().contains("seed = 11"));
    let src = out.join("h0.rdtf");
    let dst = dir.path().join("copy.rdtf");
    let o = Command::new(BIN).arg("replay").arg(&src).arg("--out").arg(&dst).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8(o.stdout).unwrap().contains("grid.resolution = 16"));
    assert_eq!(fs::read(&src).unwrap(), fs::read(&dst).unwrap());

    let mut bytes = fs::read(&src).unwrap();
    bytes[4] = 2;
    fs::write(&dst, &bytes).unwrap();
    let o = Command::new(BIN).arg("replay").arg(&dst).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8(o.stderr).unwrap().contains("unsupported version"));
    fs::write(&dst, &bytes[..10]).unwrap();
    assert_eq!(Command::new(BIN).arg("replay").arg(&dst).output().unwrap().status.code(), Some(4));
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "grid.n = 2\ngrid.resolution = 32\ngrid.box_length = 12\nflow.t_end = 0.2\nflow.order = rk2\ninit.kind = random_bandlimited\n\
         init.amplitude = 0.02\ninit.cutoff = 2\ninit.seed = 1\ndiagnostics.a_radii = 2\n",
    );
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = Command::new(BIN).args(["evolve", "--quiet", "--seed", "5", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
        assert_eq!(o.status.code(), Some(0));
        fs::read(out.join("series.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}
