use std::fs;
use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
[network]
n = 600
p = 0.012
seed = 3

[dynamics]
eps = 0.12
steps = 200
initial_densities = [1.0, 0.5]

[ensemble]
n_copies = 50
horizon_T = 3
master_seed = 5

[meanfield]
eps_points = 20
grid_n = 400

[output]
formats = ["csv", "json"]
"#;

fn efnet(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_efnet")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn commands_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    for cmd in ["simulate", "meanfield", "net-stats"] {
        let a = tmp.path().join(format!("{cmd}_a"));
        let b = tmp.path().join(format!("{cmd}_b"));
        for (dir, threads) in [(&a, "1"), (&b, "2")] {
            let out = efnet(&["--config", &cfg, "--threads", threads, "--out", dir.to_str().unwrap(), cmd]);
            assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        }
        let (sa, sb) = (snapshot(&a), snapshot(&b));
        assert!(!sa.is_empty(), "{cmd} wrote nothing");
        assert_eq!(sa, sb, "{cmd} outputs differ between runs");
    }
    let sim = fs::read_to_string(tmp.path().join("simulate_a/trajectory_0.csv")).unwrap();
    assert!(sim.starts_with("t,rho,d_norm"));
    let mf = fs::read_to_string(tmp.path().join("meanfield_a/meanfield.csv")).unwrap();
    assert!(mf.starts_with("eps,rho_star,stable"));
    let hist = fs::read_to_string(tmp.path().join("net-stats_a/degree_histogram.csv")).unwrap();
    assert!(hist.starts_with("degree,count,expected"));
}

#[test]
fn config_errors_exit_with_one_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("p = 0.012", "p = 1.5"));
    let out = efnet(&["--config", &cfg, "simulate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("network.p"));

    let cfg = write_config(tmp.path(), &SMALL.replace("seed = 3", "seed = 3\nsede = 4"));
    let out = efnet(&["--config", &cfg, "simulate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));

    let out = efnet(&["--config", "/nonexistent/cfg.toml", "simulate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two_and_name_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        "{SMALL}\n[continuation]\nparam_name = \"eps\"\nseed_params = [0.12, 0.13]\nnewton_tol = 1e-12\nmax_newton = 1\nn_points = 3\nstability = false\n"
    );
    let cfg = write_config(tmp.path(), &body);
    let out = efnet(&["--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap(), "continue"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("continuation"));
}
