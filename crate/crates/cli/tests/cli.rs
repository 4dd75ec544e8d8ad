use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hfcoint"));
    c.env_remove("HFCOINT_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn hfcoint")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf8")
}

fn simulate(dir: &Path, model: &str, rho: &str, seed: &str) -> String {
    let out = dir.join(format!("pair-{model}-{rho}-{seed}.csv"));
    let o = run(&[
        "simulate", "--model", model, "--rho", rho, "--horizon-days", "126", "--seed", seed, "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.to_str().unwrap().to_string()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["test", "--help"])), 0);
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(code(&run(&["no-such-command"])), 3);
    assert_eq!(code(&run(&["simulate"])), 3);
    assert_eq!(code(&run(&["simulate", "--model", "9"])), 3);
    assert_eq!(code(&run(&["critvals", "--levels", "1.5"])), 3);
}

#[test]
fn missing_input_is_a_data_error() {
    let o = run(&["estimate", "--pair", "/nonexistent/pair.csv"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/pair.csv"));
}

#[test]
fn simulate_is_deterministic_and_writes_latent_residual() {
    let dir = tempfile::tempdir().unwrap();
    let a = fs::read_to_string(simulate(dir.path(), "8", "0.8", "42")).unwrap();
    let b_path = dir.path().join("again.csv");
    let o = run(&[
        "simulate", "--model", "8", "--rho", "0.8", "--horizon-days", "126", "--seed", "42", "--out",
        b_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(a, fs::read_to_string(b_path).unwrap());
    let r = rows(&a);
    assert_eq!(r[0], ["t", "X", "Y", "eps_true"]);
    assert_eq!(r.len(), 4914 + 2);
}

#[test]
fn simulate_n_flag_sets_the_grid() {
    let o = run(&["simulate", "--model", "1", "--n", "252", "--horizon-days", "126"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 254);
}

#[test]
fn preprocess_marks_the_undefined_deflators() {
    let dir = tempfile::tempdir().unwrap();
    let pair = simulate(dir.path(), "1", "1", "3");
    let o = run(&["preprocess", "--pair", &pair]);
    assert_eq!(code(&o), 0);
    let r = rows(&stdout(&o));
    assert_eq!(r[0], ["i", "t", "keep", "C_i", "tx_def", "ty_def"]);
    assert_eq!(r.len(), 4914 + 2);
    // k = floor(sqrt(126) * 39) = 437, so C_i is undefined through i = 874
    assert_eq!(r[875][3], "inf");
    assert_ne!(r[876][3], "inf");
    assert_eq!(r[875][0], "874");
    // the deflated levels stay at their starting values while C_i is undefined
    assert_eq!(r[875][4], r[1][4]);
}

#[test]
fn estimate_reports_key_value_rows() {
    let dir = tempfile::tempdir().unwrap();
    let pair = simulate(dir.path(), "1", "0.8", "5");
    let o = run(&["estimate", "--pair", &pair]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let get = |k: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{k},")))
            .unwrap_or_else(|| panic!("missing {k}"))
            .parse()
            .unwrap()
    };
    assert!((get("alpha_hat") - 2.0).abs() < 0.1);
    assert!((get("rho_hat") - 0.8).abs() < 0.05);
    assert!(get("ci_c_low") < get("ci_c_high"));
}

#[test]
fn test_command_uses_a_saved_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("cv.csv");
    let o = run(&[
        "critvals", "--kind", "modified_df,df", "--levels", "0.05", "--reps", "1000", "--grid", "1000", "--out",
        table.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let t = fs::read_to_string(&table).unwrap();
    assert!(t.starts_with("kind,level,detrended,sigma_hash,quantile,reps,grid,seed,se"));
    assert_eq!(t.lines().count(), 3);

    let pair = simulate(dir.path(), "1", "0.8", "9");
    let o = run(&["test", "--pair", &pair, "--kind", "modified_df,df", "--critvals", table.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 3);
    assert_eq!(r[1][0], "modified_df");
    assert_eq!(r[1][4], "1", "strong cointegration must be detected");

    // a kind absent from the table is a configuration problem
    let o = run(&["test", "--pair", &pair, "--kind", "adf", "--critvals", table.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn identical_series_are_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let src = fs::read_to_string(simulate(dir.path(), "1", "1", "4")).unwrap();
    let same: String = src
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if i == 0 {
                "t,X,Y\n".to_string()
            } else {
                format!("{},{},{}\n", f[0], f[1], f[1])
            }
        })
        .collect();
    let path = dir.path().join("same.csv");
    fs::write(&path, same).unwrap();
    let o = run(&["test", "--pair", path.to_str().unwrap(), "--kind", "df", "--cv-reps", "1000", "--cv-grid", "1000"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate"));
}

#[test]
fn ingest_recovers_the_simulated_pair() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.csv"), dir.path().join("y.csv"));
    let pair = dir.path().join("pair.csv");
    let o = run(&[
        "simulate", "--model", "7", "--rho", "0.9", "--horizon-days", "126", "--seed", "11", "--out",
        pair.to_str().unwrap(), "--ticks-x", x.to_str().unwrap(), "--ticks-y", y.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let o = run(&["ingest", "--input", x.to_str().unwrap(), "--input", y.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let got = rows(&stdout(&o));
    let want = rows(&fs::read_to_string(&pair).unwrap());
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want).skip(1) {
        for c in 0..3 {
            let (a, b): (f64, f64) = (g[c].parse().unwrap(), w[c].parse().unwrap());
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    let single = run(&["ingest", "--input", x.to_str().unwrap(), "--grid-minutes", "30"]);
    assert_eq!(code(&single), 0);
    let r = rows(&stdout(&single));
    assert_eq!(r[0], ["t", "value"]);
    assert_eq!(r.len(), 126 * 13 + 2);
}

#[test]
fn empirical_reports_every_ladder_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.csv"), dir.path().join("y.csv"));
    let o = run(&[
        "simulate", "--model", "8", "--rho", "0.9", "--horizon-days", "126", "--seed", "2", "--ticks-x",
        x.to_str().unwrap(), "--ticks-y", y.to_str().unwrap(), "--out", dir.path().join("p.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let o = run(&[
        "empirical", "--x", x.to_str().unwrap(), "--y", y.to_str().unwrap(), "--kinds", "modified_df,df",
        "--cv-reps", "1000", "--cv-grid", "1000",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    assert_eq!(r[0][..4], ["interval_seconds", "n", "modified_df", "modified_df_stat"]);
    assert_eq!(r.len(), 7);
    assert_eq!(r[1][1], "4914");
    assert_eq!(r[1][2], "1");
}

#[test]
fn tables_are_resumable_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let config = dir.path().join("run.cfg");
    fs::write(&config, "preset = desk\nmodels = 1\nrhos = 1, 0.8\nintervals = 10m, 1d\nreps = 50\n").unwrap();
    let args = [
        "table-size-power", "--config", config.to_str().unwrap(), "--reps", "3", "--kinds", "modified_df,df",
        "--cv-reps", "1000", "--cv-grid", "1000",
    ];
    let first = bin().args(args).env("HFCOINT_OUT_DIR", &out).output().unwrap();
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let csv = fs::read_to_string(out.join("size_power.csv")).unwrap();
    let r = rows(&csv);
    assert_eq!(r.len(), 1 + 2 * 2 * 2);
    assert!(r[1..].iter().all(|row| row[7] == "3"), "the --reps flag overrides the file");
    assert!(out.join("critvals.csv").exists());

    let again = bin().args(args).env("HFCOINT_OUT_DIR", &out).output().unwrap();
    assert_eq!(code(&again), 0);
    assert_eq!(fs::read_to_string(out.join("size_power.csv")).unwrap(), csv);
    let meta = fs::read_to_string(out.join("size_power.meta.csv")).unwrap();
    assert!(meta.contains("models_simulated,0"));

    let elsewhere = dir.path().join("other");
    let fresh = run(&[&args[..], &["--out-dir", elsewhere.to_str().unwrap()]].concat());
    assert_eq!(code(&fresh), 0);
    assert_eq!(fs::read_to_string(elsewhere.join("size_power.csv")).unwrap(), csv);
}

#[test]
fn estimation_table_and_signature_print_to_stdout() {
    let o = run(&["table-estimation", "--models", "1", "--rhos", "0.8", "--intervals", "10m", "--reps", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 2);
    assert_eq!(r[0][0], "model");

    let o = run(&["signature", "--models", "1", "--rhos", "0.9", "--intervals", "10m,1h", "--reps", "2"]);
    assert_eq!(code(&o), 0);
    let r = rows(&stdout(&o));
    assert_eq!(r[0], ["model", "rho", "interval_seconds", "n", "rho_hat", "rho_tilde"]);
    assert_eq!(r.len(), 3);

    let o = run(&["table-estimation", "--set", "unknown_key=1"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn signature_of_a_pair_covers_the_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let pair = simulate(dir.path(), "1", "0.8", "8");
    let o = run(&["signature", "--pair", &pair]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    assert_eq!(r[0], ["interval_seconds", "n", "rho_hat", "rho_tilde"]);
    assert_eq!(r.len(), 7);
    let rho_10m: f64 = r[1][2].parse().unwrap();
    let rho_tilde_30m: f64 = r[2][3].parse().unwrap();
    assert!((rho_10m - 0.8).abs() < 0.05);
    // three 10-minute steps per 30-minute step
    assert!((rho_tilde_30m - 0.512).abs() < 0.06);
}
