use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

/// Small run sizes; `hedge` and `pricing` hold extra lines for those tables.
fn small(hedge: &str, pricing: &str, extra: &str) -> String {
    format!(
        "[hm]\npaths = 400\n[oracle]\npaths = 20000\nstrikes = [0.03]\n[mc]\npaths = 20000\nmaturities = [5.0]\n\
         [calibration]\nborrowers = 50000\n[hedge]\nrestarts = 2\nscenarios = 40\n{hedge}\n[pricing]\n{pricing}\n{extra}\n"
    )
}

fn base() -> String {
    small("", "strikes = [0.03]", "")
}

fn epor(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_epor")).current_dir(dir).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_owned).collect()).collect()
}

fn column(path: &Path, i: usize) -> Vec<f64> {
    read_csv(path).iter().map(|r| r[i].parse().unwrap()).collect()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn input_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(p, "bad.toml", "[hedge]\nranges = 3\n");
    assert_eq!(epor(p, &["--config", "bad.toml", "price"]).0, 2);
    write(p, "bad2.toml", "[swap]\nkind = \"balloon\"\n");
    assert_eq!(epor(p, &["--config", "bad2.toml", "price"]).0, 2);
    assert_eq!(epor(p, &["--preset", "missing", "price"]).0, 2);
    assert_eq!(epor(p, &["--config", "absent.toml", "price"]).0, 2);
    write(p, "empty.csv", "");
    assert_eq!(epor(p, &["calibrate", "--data", "empty.csv"]).0, 2);
    write(p, "header.csv", "month,h_frac,p_frac\n");
    assert_eq!(epor(p, &["calibrate", "--data", "header.csv"]).0, 2);
    let (code, err) = epor(p, &["--out", "o", "shock"]);
    assert_eq!(code, 2);
    assert!(err.contains("strategy"), "{err}");
    assert_eq!(epor(p, &["frobnicate"]).0, 2);
}

#[test]
fn calibration_of_an_eleven_year_window_and_separated_data() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let mut text = String::from("month,h_frac,p_frac,exposures\n");
    for k in 0..132 {
        let h = 0.0035 + 0.0004 * ((k * 7 % 11) as f64 / 10.0);
        let prob = 1.0 / (1.0 + (7.5 - 54.18 * h * 12.0 + 326.86 * (h * 12.0).powi(2)).exp());
        text.push_str(&format!("{}-{:02},{h},{prob},1000000\n", 2013 + k / 12, k % 12 + 1));
    }
    write(p, "window.csv", &text);
    assert_eq!(epor(p, &["--out", "o", "calibrate", "--data", "window.csv"]).0, 0);
    let summary = std::fs::read_to_string(p.join("o/summary.toml")).unwrap();
    assert!(summary.contains("observations = 132"));

    let mut zeros = String::from("month,h_frac,p_frac,exposures\n");
    for k in 0..24 {
        zeros.push_str(&format!("2014-{:02},{},0,1000\n", k % 12 + 1, 0.003 + 0.0001 * k as f64));
    }
    write(p, "zeros.csv", &zeros);
    assert_eq!(epor(p, &["--out", "z", "calibrate", "--data", "zeros.csv"]).0, 3);
    assert!(p.join("z/summary.toml").exists());
}

#[test]
fn bullet_prices_above_linear_and_deep_otm_is_negligible() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(p, "small.toml", &base());
    assert_eq!(epor(p, &["--config", "small.toml", "--out", "b", "price"]).0, 0);
    assert_eq!(epor(p, &["--config", "small.toml", "--preset", "linear_baseline", "--out", "l", "price"]).0, 0);
    let b = column(&p.join("b/valuation.csv"), 1)[0];
    let l = column(&p.join("l/valuation.csv"), 1)[0];
    assert!(b > l && l > 0.0, "{b} {l}");
    let series = read_csv(&p.join("b/series_K0.0300.csv"));
    assert!(series.len() > 100);

    write(p, "deep.toml", &small("", "strikes = [0.001]", "[hw]\nvolatility = 0.002\n"));
    assert_eq!(epor(p, &["--config", "deep.toml", "--out", "x", "price"]).0, 0);
    let row = &read_csv(&p.join("x/valuation.csv"))[0];
    for v in &row[1..6] {
        assert!(v.parse::<f64>().unwrap().abs() < 0.01, "{row:?}");
    }
}

#[test]
fn fixed_range_midpoints_and_penalty_free_eigen() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(p, "fxr.toml", &small("kind = \"fxr_mim\"", "strikes = [0.03]", ""));
    assert_eq!(epor(p, &["--config", "fxr.toml", "--out", "f", "hedge"]).0, 0);
    let m: Vec<f64> = column(&p.join("f/strategy.csv"), 2).iter().map(|x| (x * 100.0).round() / 100.0).collect();
    assert_eq!(m, vec![1.67, 5.0, 8.33]);

    write(p, "opr.toml", &base());
    write(p, "eig.toml", &small("kind = \"eigen\"\nk_eig = 0.0", "strikes = [0.03]", ""));
    assert_eq!(epor(p, &["--config", "opr.toml", "--out", "o", "hedge"]).0, 0);
    assert_eq!(epor(p, &["--config", "eig.toml", "--out", "e", "hedge"]).0, 0);
    assert_eq!(std::fs::read(p.join("o/strategy.csv")).unwrap(), std::fs::read(p.join("e/strategy.csv")).unwrap());
    assert!(p.join("e/corrections.csv").exists());
    assert!(!p.join("o/corrections.csv").exists());
}

#[test]
fn shock_rows_and_zero_shock() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(p, "small.toml", &base());
    assert_eq!(epor(p, &["--config", "small.toml", "--preset", "actuarial", "--out", "a", "hedge"]).0, 0);
    assert_eq!(epor(p, &["--config", "small.toml", "--preset", "actuarial", "--out", "a", "shock"]).0, 0);
    let rows = read_csv(&p.join("a/shock.csv"));
    let combos = rows.iter().filter(|r| !r[0].contains("50")).count();
    assert_eq!(combos, 26);
    assert_eq!(rows.len(), 32);
    for r in &rows {
        let prob: f64 = r[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&prob));
    }

    write(p, "zero.toml", &small("", "strikes = [0.03]", "[shock]\ngrid = [[0, 0, 0], [0, 0, -50]]"));
    assert_eq!(epor(p, &["--config", "zero.toml", "--preset", "actuarial", "--out", "z", "shock", "--strategy", "a/strategy.csv"]).0, 0);
    let rows = read_csv(&p.join("z/shock.csv"));
    assert_eq!(rows[0], vec!["[0 0 0]", "0.0", "0.0"]);
    assert_eq!(rows.len(), 2);
}

#[test]
fn oracle_check_reports_agreement() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(p, "small.toml", &base());
    assert_eq!(epor(p, &["--config", "small.toml", "--out", "o", "oracle-check"]).0, 0);
    let rows = read_csv(&p.join("o/oracle.csv"));
    assert_eq!(rows.len(), 1);
    let z: f64 = rows[0][5].parse().unwrap();
    assert!(z.abs() <= 4.0, "{z}");
    assert!(p.join("o/swaption_mc.csv").exists());
}

#[test]
fn every_preset_is_byte_identical_across_runs_and_thread_counts() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(p, "small.toml", &base());
    for preset in ["bullet_baseline", "linear_baseline", "actuarial"] {
        let mut outs = Vec::new();
        for (run, threads) in [("1", "1"), ("2", "3")] {
            let out = format!("{preset}_{run}");
            for cmd in ["calibrate", "price", "hedge", "shock", "oracle-check"] {
                let (code, err) =
                    epor(p, &["--config", "small.toml", "--preset", preset, "--seed", "42", "--threads", threads, "--out", &out, cmd]);
                assert_eq!(code, 0, "{preset} {cmd}: {err}");
            }
            outs.push(files(&p.join(out)));
        }
        assert!(outs[0].len() >= 10);
        assert_eq!(outs[0], outs[1], "{preset}");
    }
}
