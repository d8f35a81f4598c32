use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use covshift_core::nuisance::NuisanceConfig;
use covshift_core::simulation::{replicate_draw, run_replicate, MvnSampler};
use covshift_core::{
    fit_main_effects, read_csv, run_pipeline, Arm, Dataset, LogisticModelFile, Loss, Method, PipelineConfig,
    ReportDocument, ScenarioSpec,
};
use tempfile::TempDir;

fn covshift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covshift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = covshift(args);
    assert!(
        out.status.success(),
        "covshift {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Deterministic uniform draws without pulling in an RNG crate.
struct SplitMix(u64);

impl SplitMix {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Survey-shaped file: unit-weight source sample plus a target sample with
/// two strata of 12 clusters, cluster-level weights and a GHAT column.
fn survey_csv(dir: &Path) -> PathBuf {
    let mut r = SplitMix(11);
    let mut s = String::from("age,bmi,D,Y,W,CLUSTER,STRATUM,GHAT\n");
    let row = |s: &mut String, d: u8, w: f64, cluster: &str, stratum: &str, shift: f64, r: &mut SplitMix| {
        let age = 2.0 * r.next() - 1.0 + shift;
        let bmi = 2.0 * r.next() - 1.0;
        let y = (r.next() < expit(-0.4 + 1.1 * age - 0.6 * bmi)) as u8;
        let g = expit(-0.3 + 0.9 * age - 0.5 * bmi);
        let y = if d == 1 { y.to_string() } else { String::new() };
        writeln!(s, "{age:?},{bmi:?},{d},{y},{w:?},{cluster},{stratum},{g:?}").unwrap();
    };
    for _ in 0..300 {
        row(&mut s, 1, 1.0, "", "", 0.0, &mut r);
    }
    for st in 0..2 {
        for c in 0..12 {
            let w = 1.0 + 4.0 * r.next();
            for _ in 0..8 {
                row(&mut s, 0, w, &format!("s{st}c{c}"), &format!("s{st}"), -0.4, &mut r);
            }
        }
    }
    let path = dir.join("survey.csv");
    fs::write(&path, s).unwrap();
    path
}

#[test]
fn no_bootstrap_means_no_standard_error() {
    let dir = TempDir::new().unwrap();
    let data = survey_csv(dir.path());
    let text = ok(&["estimate", "--data", path_str(&data), "--ghat-col", "GHAT", "--estimator", "dr", "--boot", "0"]);
    let doc = ReportDocument::parse(&text).unwrap();
    assert_eq!(doc.results.len(), 1);
    let dr = doc.result(Method::DoublyRobust).unwrap();
    assert!(dr.estimate.is_finite());
    assert_eq!(dr.std_error, None);
    assert_eq!(dr.ci, None);
    assert_eq!((doc.n0, doc.n1), (192, 300));
}

#[test]
fn bootstrap_reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let data = survey_csv(dir.path());
    let args = ["estimate", "--data", path_str(&data), "--ghat-col", "GHAT", "--estimator", "all", "--boot", "200", "--seed", "7"];
    let a = ok(&args);
    let b = ok(&args);
    assert_eq!(a, b);
    let mut threaded = vec!["--threads", "1"];
    threaded.extend(args);
    assert_eq!(ok(&threaded), a);
    let doc = ReportDocument::parse(&a).unwrap();
    assert!(doc.results.iter().all(|r| r.std_error.unwrap() > 0.0));
}

#[test]
fn survey_run_matches_library_call() {
    let dir = TempDir::new().unwrap();
    let data = survey_csv(dir.path());
    let text = ok(&[
        "estimate", "--data", path_str(&data), "--ghat-col", "GHAT", "--estimator", "dr", "--survey", "--boot", "50",
        "--boot-unit", "cluster", "--seed", "3",
    ]);
    let report = ReportDocument::parse(&text).unwrap();

    let table = read_csv(fs::File::open(&data).unwrap(), &["GHAT"]).unwrap();
    let cfg = PipelineConfig {
        loss: Loss::Squared,
        nuisance: NuisanceConfig {
            survey_weighted: true,
            ..NuisanceConfig::default()
        },
        methods: vec![Method::DoublyRobust],
        seed: 3,
    };
    let lib = run_pipeline(&table.dataset, &table.extra["GHAT"], &cfg).unwrap();
    let dr = report.result(Method::DoublyRobust).unwrap();
    assert_eq!(dr.estimate.to_bits(), lib.get(Method::DoublyRobust).unwrap().to_bits());
    assert!(dr.std_error.unwrap() > 0.0);
}

#[test]
fn weights_are_ignored_without_survey_flag() {
    let dir = TempDir::new().unwrap();
    let data = survey_csv(dir.path());
    let text = ok(&["estimate", "--data", path_str(&data), "--ghat-col", "GHAT", "--estimator", "cl"]);
    let doc = ReportDocument::parse(&text).unwrap();
    assert!(doc.warnings.iter().any(|w| w.contains("W column ignored")));
    let table = read_csv(fs::File::open(&data).unwrap(), &["GHAT"]).unwrap();
    let unit = table.dataset.clone().with_weights(vec![1.0; table.dataset.n()]).unwrap();
    let cfg = PipelineConfig {
        loss: Loss::Squared,
        nuisance: NuisanceConfig::default(),
        methods: vec![Method::ConditionalLoss],
        seed: 1,
    };
    let lib = run_pipeline(&unit, &table.extra["GHAT"], &cfg).unwrap();
    assert_eq!(doc.results[0].estimate, lib.get(Method::ConditionalLoss).unwrap());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = survey_csv(dir.path());
    let d = path_str(&data);
    let code = |args: &[&str]| covshift(args).status.code().unwrap();

    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["estimate", "--bogus"]), 1);
    assert_eq!(code(&["estimate", "--data", d]), 1, "needs a prediction source");
    assert_eq!(code(&["estimate", "--data", d, "--ghat-col", "GHAT", "--sandwich", "--boot", "5"]), 1);

    // oracle requested but target outcomes missing
    let out = covshift(&["estimate", "--data", d, "--ghat-col", "GHAT", "--estimator", "oracle"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 300"), "{stderr}");

    // cluster bootstrap without a CLUSTER column
    let plain = dir.path().join("plain.csv");
    fs::write(&plain, "x,D,Y,GHAT\n0.1,1,1,0.5\n0.4,1,0,0.5\n-0.2,0,,0.5\n0.3,0,,0.5\n").unwrap();
    let p = path_str(&plain);
    assert_eq!(code(&["estimate", "--data", p, "--ghat-col", "GHAT", "--boot", "5", "--boot-unit", "cluster"]), 2);
    assert_eq!(code(&["estimate", "--data", p, "--ghat-col", "GHAT", "--survey"]), 2);

    // perfectly separated membership
    let sep = dir.path().join("sep.csv");
    fs::write(&sep, "x,D,Y,GHAT\n1,1,1,0.5\n2,1,0,0.5\n3,1,1,0.5\n-1,0,,0.5\n-2,0,,0.5\n-3,0,,0.5\n").unwrap();
    assert_eq!(code(&["estimate", "--data", path_str(&sep), "--ghat-col", "GHAT", "--estimator", "iw"]), 3);
}

#[test]
fn model_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = survey_csv(dir.path());
    let model_path = dir.path().join("model.txt");
    ok(&["model-fit", "--data", path_str(&data), "--columns", "age,bmi", "--out", path_str(&model_path)]);
    let loaded = LogisticModelFile::parse(&fs::read_to_string(&model_path).unwrap()).unwrap();

    let table = read_csv(fs::File::open(&data).unwrap(), &[]).unwrap();
    let labeled: Vec<usize> = table.dataset.source_rows();
    let fitted = fit_main_effects(&table.dataset, &labeled, &["age".into(), "bmi".into()]).unwrap();
    assert_eq!(loaded, fitted);
    let a = loaded.to_prediction_model().predict_dataset(&table.dataset).unwrap();
    let b = fitted.to_prediction_model().predict_dataset(&table.dataset).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn intercept_only_fit_on_balanced_labels() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("balanced.csv");
    fs::write(&path, "x,Y\n0.3,1\n-1.2,0\n2.0,1\n0.7,0\n").unwrap();
    let text = ok(&["model-fit", "--data", path_str(&path), "--columns", ""]);
    let model = LogisticModelFile::parse(&text).unwrap();
    assert!(model.columns.is_empty());
    assert!(model.model.intercept.abs() < 1e-12);
}

fn write_dataset(path: &Path, ds: &Dataset, rows: &[usize], with_source: bool) {
    let mut s = ds.names().join(",");
    s.push_str(if with_source { ",D,Y\n" } else { ",Y\n" });
    for &i in rows {
        for v in ds.row(i) {
            write!(s, "{v:?},").unwrap();
        }
        let src = ds.is_source(i);
        if with_source {
            write!(s, "{},", src as u8).unwrap();
        }
        match ds.outcome()[i] {
            Some(y) if src || !with_source => writeln!(s, "{y:?}").unwrap(),
            _ => s.push('\n'),
        }
    }
    fs::write(path, s).unwrap();
}

#[test]
fn simulation_arm_through_the_command_line() {
    let spec = ScenarioSpec::default();
    let sampler = MvnSampler::new(&spec.covariance()).unwrap();
    let index = 4;
    let draw = replicate_draw(&spec, &sampler, index).unwrap();

    let dir = TempDir::new().unwrap();
    let train = dir.path().join("train.csv");
    let eval = dir.path().join("eval.csv");
    let model = dir.path().join("model.txt");
    write_dataset(&train, &draw.full, &draw.train, false);
    write_dataset(&eval, &draw.full, &draw.eval, true);
    ok(&["model-fit", "--data", path_str(&train), "--out", path_str(&model)]);
    let text = ok(&[
        "estimate", "--data", path_str(&eval), "--model", path_str(&model), "--estimator", "dr", "--p-map",
        "quadratic", "--h-map", "quadratic",
    ]);
    let cli = ReportDocument::parse(&text).unwrap().result(Method::DoublyRobust).unwrap().estimate;
    let lib = run_replicate(&spec, &sampler, index, &[Arm::DrCorr]).unwrap().get(Arm::DrCorr).unwrap();
    assert_eq!(cli.to_bits(), lib.to_bits(), "{cli} vs {lib}");
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn simulate_is_deterministic_and_filters_arms() {
    let dir = TempDir::new().unwrap();
    let scenario = dir.path().join("small.toml");
    fs::write(&scenario, "n_total = 600\ntruth_draws = 5000\n").unwrap();
    let raw = dir.path().join("raw.csv");
    let args = [
        "simulate", "--scenario", path_str(&scenario), "--replications", "10", "--seed", "5", "--arms", "naive,dr-corr",
        "--raw", path_str(&raw),
    ];
    let a = ok(&args);
    let b = ok(&args);
    assert_eq!(a, b);
    assert!(a.contains("# config.replications=10"));
    let lines = data_lines(&a);
    assert_eq!(lines[0], "arm,avg_estimate,sqrt_n_bias,sqrt_n_sd,rel_bias_pct");
    let arms: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(arms, ["naive", "dr-corr"]);
    let raw_text = fs::read_to_string(&raw).unwrap();
    assert_eq!(data_lines(&raw_text).len(), 11);
}

#[test]
fn bad_scenario_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let scenario = dir.path().join("bad.toml");
    fs::write(&scenario, "n_totl = 600\n").unwrap();
    assert_eq!(covshift(&["simulate", "--scenario", path_str(&scenario)]).status.code(), Some(1));
    assert_eq!(covshift(&["simulate", "--arms", "nope"]).status.code(), Some(1));
}

#[test]
fn single_split_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = survey_csv(dir.path());
    // the survey file's target rows have no outcome; keep the labeled ones
    let text = fs::read_to_string(&data).unwrap();
    let labeled: String = text
        .lines()
        .filter(|l| !l.split(',').nth(3).unwrap().is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            format!("{},{},{}\n", c[0], c[1], c[3])
        })
        .collect();
    let path = dir.path().join("labeled.csv");
    fs::write(&path, labeled).unwrap();
    let args = ["split-eval", "--data", path_str(&path), "--splits", "1", "--seed", "9", "--mode", "shifted"];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    let lines = data_lines(&a);
    assert_eq!(lines[0], "method,avg_estimate,bias,mc_se,sd,avg_boot_se");
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("oracle,"));
}
