use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn fracsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracsim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = fracsim(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Header and single row of a one-record CSV.
fn csv_record(text: &str) -> Vec<(String, String)> {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',');
    let row = lines.next().unwrap().split(',');
    header.map(str::to_string).zip(row.map(str::to_string)).collect()
}

#[test]
fn run_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(&["run", "--seed", "42"], dir.path());
    let b = ok(&["run", "--seed", "42"], dir.path());
    assert_eq!(a, b);
    assert!(a.starts_with("liquidity_ratio,"));
}

#[test]
fn missing_endowment_file_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracsim(&["run", "--endowments", "no_such_agents.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_agents.csv"));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[params]\npb_trade_prob = 1.5\n").unwrap();
    for args in [
        vec!["batch", "--config", "bad.toml"],
        vec!["batch", "--config", "absent.toml"],
        vec!["sweep", "--param", "nonsense", "--values", "1"],
        vec!["sweep", "--param", "k_pb"],
        vec!["batch", "--reps", "0"],
        vec!["calibrate", "--budget", "0"],
        vec!["frobnicate"],
    ] {
        let out = fracsim(&args, dir.path());
        assert_eq!(
            out.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn trace_file_written() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["run", "--seed", "3", "--out", "day.csv", "--trace"], dir.path());
    let trace = fs::read_to_string(dir.path().join("day.trace.jsonl")).unwrap();
    let day = csv_record(&fs::read_to_string(dir.path().join("day.csv")).unwrap());
    let trades: f64 = day.iter().find(|(k, _)| k == "n_trades").unwrap().1.parse().unwrap();
    assert_eq!(trace.lines().count() as f64, trades);
    for line in trace.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["units"].as_u64().unwrap() >= 1);
    }

    ok(&["run", "--seed", "3", "--trace", "fills.jsonl"], dir.path());
    assert_eq!(fs::read_to_string(dir.path().join("fills.jsonl")).unwrap(), trace);
}

#[test]
fn small_batch_is_quick() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let text = ok(&["batch", "--reps", "10", "--seed", "5"], dir.path());
    assert!(start.elapsed() < Duration::from_secs(10));
    let rec = csv_record(&text);
    assert_eq!(
        rec.last().unwrap(),
        &("n_experiments".to_string(), "10.000".to_string())
    );
}

#[test]
fn json_and_csv_carry_same_values() {
    let dir = tempfile::tempdir().unwrap();
    let csv = csv_record(&ok(&["batch", "--reps", "50", "--seed", "9"], dir.path()));
    let json: serde_json::Value = serde_json::from_str(&ok(
        &["batch", "--reps", "50", "--seed", "9", "--format", "json"],
        dir.path(),
    ))
    .unwrap();
    for (name, cell) in csv {
        let v = if name == "n_experiments" {
            json[&name].as_f64().unwrap()
        } else {
            json[&name]["mean"].as_f64().unwrap()
        };
        assert_eq!(format!("{v:.3}"), cell, "{name}");
    }

    let csv = ok(
        &["sweep", "--param", "k_pb", "--values", "1,3", "--reps", "20"],
        dir.path(),
    );
    let json: serde_json::Value = serde_json::from_str(&ok(
        &[
            "sweep", "--param", "k_pb", "--values", "1,3", "--reps", "20", "--format", "json",
        ],
        dir.path(),
    ))
    .unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    for (line, row) in lines.zip(json["rows"].as_array().unwrap()) {
        for (name, cell) in header.iter().zip(line.split(',')) {
            let v = if *name == "value" {
                row["value"].as_f64().unwrap()
            } else {
                row[*name]["mean"].as_f64().unwrap()
            };
            assert_eq!(cell.parse::<f64>().unwrap(), (v * 1000.0).round() / 1000.0, "{name}");
        }
    }
}

#[test]
fn jobs_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = |jobs| {
        vec![
            "batch", "--reps", "100", "--seed", "11", "--format", "json", "--jobs", jobs,
        ]
    };
    let one = ok(&args("1"), dir.path());
    assert_eq!(one, ok(&args("4"), dir.path()));
    assert_eq!(one, ok(&args("0"), dir.path()));
    assert_eq!(one, ok(&args("1"), dir.path()));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.toml"),
        "seed = 4\nreps = 30\n[params]\npb_trade_prob = 0.15\n[sweep]\nparam = \"bs_trade_prob\"\nvalues = [0.05, 0.2]\n",
    )
    .unwrap();
    let from_file = ok(&["batch", "--config", "cfg.toml"], dir.path());
    let from_flags = ok(
        &["batch", "--seed", "4", "--reps", "30", "--set", "pb_trade_prob=0.15"],
        dir.path(),
    );
    assert_eq!(from_file, from_flags);
    let sweep = ok(&["sweep", "--config", "cfg.toml"], dir.path());
    assert_eq!(sweep.lines().count(), 3);
}

#[test]
fn single_value_sweep_equals_sweep_row() {
    let dir = tempfile::tempdir().unwrap();
    let both = ok(
        &[
            "sweep", "--param", "k_pb", "--values", "1,2", "--reps", "40", "--seed", "2",
        ],
        dir.path(),
    );
    let first = ok(
        &[
            "sweep", "--param", "k_pb", "--values", "1", "--reps", "40", "--seed", "2",
        ],
        dir.path(),
    );
    assert_eq!(both.lines().nth(1), first.lines().nth(1));
}

#[test]
fn gen_endowments_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-endowments", "--seed", "17", "--out", "agents.csv"], dir.path());
    let text = fs::read_to_string(dir.path().join("agents.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 727 + 413 + 225);
    assert_eq!(text.lines().next(), Some("kind,shares,cash"));

    ok(&["gen-endowments", "--seed", "17", "--out", "again.csv"], dir.path());
    assert_eq!(fs::read_to_string(dir.path().join("again.csv")).unwrap(), text);

    // the table drives a batch exactly like the profile it was drawn from
    let shipped = include_str!("../../core/data/default_profile.toml");
    let reseeded: String = shipped
        .lines()
        .map(|l| {
            if l.starts_with("population_seed") {
                "population_seed = 17"
            } else {
                l
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(dir.path().join("p17.toml"), reseeded).unwrap();
    let from_csv = ok(&["batch", "--reps", "20", "--endowments", "agents.csv"], dir.path());
    let from_profile = ok(&["batch", "--reps", "20", "--profile", "p17.toml"], dir.path());
    assert_eq!(from_csv, from_profile);
}

#[test]
fn zero_holder_fraction_gives_no_seller_shares() {
    let dir = tempfile::tempdir().unwrap();
    let shipped = include_str!("../../core/data/default_profile.toml");
    let zero = shipped
        .lines()
        .map(|l| {
            if l.starts_with("ps_holder_frac") || l.starts_with("bs_holder_frac") {
                l.split('=').next().unwrap().to_string() + "= 0.0"
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(dir.path().join("zero.toml"), zero).unwrap();
    let text = ok(&["gen-endowments", "--profile", "zero.toml"], dir.path());
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[0] != "PB" {
            assert_eq!(fields[1], "0", "{line}");
        }
        rows += 1;
    }
    assert_eq!(rows, 1365);
}

#[test]
fn calibrate_with_budget_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracsim(
        &["calibrate", "--budget", "1", "--seed", "5", "--out", "p.toml"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("p.toml")).unwrap();
    assert!(text.contains("budget = 1"));
    assert!(text.contains("objective = "));
    // the written profile is usable as a population source
    ok(&["batch", "--reps", "5", "--profile", "p.toml"], dir.path());
    let again = fracsim(&["calibrate", "--budget", "1", "--seed", "5"], dir.path());
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}
