use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mesoped::commands::{self, parse_populations, RunOptions};
use mesoped::output::{read_events_csv, read_field_csv};
use mesoped::{CliError, LoadedScenario};
use mesoped_core::engine::EventKind;
use mesoped_core::metrics::{summarize, sweep};

fn mesoped(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mesoped"));
    cmd.args(args).env_remove("MESOPED_OUT");
    if let Some(dir) = env_out {
        cmd.env("MESOPED_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn text(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a");
    let o = mesoped(&["run", "cinema_a", "--snapshots", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let field = read_field_csv(fs::File::open(out.join("field.csv")).unwrap()).unwrap();
    assert_eq!((field.len(), field[0].len()), (20, 30));
    assert_eq!(field[8][29], 300.0);

    let events = read_events_csv(fs::File::open(out.join("events.csv")).unwrap()).unwrap();
    assert_eq!(events.iter().filter(|e| e.kind == EventKind::Spawn).count(), 60);
    assert_eq!(events.iter().filter(|e| e.kind == EventKind::Exit).count(), 60);

    let metrics = text(&out.join("metrics.csv"));
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "population,avg_travel_time_s,avg_distance_m,exit_8_29_count,exit_9_29_count,exit_10_29_count,\
         exit_11_29_count,exit_0_1_count,exit_0_2_count,exit_19_1_count,exit_19_2_count,completed"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "60");
    assert_eq!(row.last(), Some(&"true"));
    let main: f64 = row[3..7].iter().map(|v| v.parse::<f64>().unwrap()).sum();
    assert!(main > 30.0, "main exit took {main} of 60");

    // Metrics recomputed from the written log agree with the written metrics.
    let m = summarize(&events, 1.0).unwrap();
    assert_eq!(row[1], m.avg_travel_time_s.unwrap().to_string());
    assert_eq!(row[2], m.avg_distance_m.unwrap().to_string());

    let snaps = text(&out.join("snapshots.txt"));
    assert!(snaps.starts_with("step 0 clock_s 0\n+-+ +"));
}

#[test]
fn zero_steps_gives_spawns_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("z");
    let o = mesoped(&["run", "cinema_b", "--steps", "0", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let events = read_events_csv(fs::File::open(out.join("events.csv")).unwrap()).unwrap();
    assert_eq!(events.len(), 60);
    assert!(events.iter().all(|e| e.kind == EventKind::Spawn && e.step == 0));
    assert!(text(&out.join("metrics.csv")).lines().nth(1).unwrap().ends_with(",false"));
}

#[test]
fn short_run_is_incomplete() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mesoped(&["run", "escalator_stair", "--steps", "10", "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("incomplete"));
}

#[test]
fn default_output_directory_comes_from_env() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mesoped(&["run", "compare_10x15", "--seed", "3"], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(0));
    assert!(tmp.path().join("compare_10x15").join("events.csv").is_file());
}

#[test]
fn export_field_matches_run_field() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("f.csv");
    let run_dir = tmp.path().join("r");
    assert!(mesoped(&["export-field", "escalator_stair", "--out", file.to_str().unwrap()], None).status.success());
    assert!(mesoped(&["run", "escalator_stair", "--steps", "1", "--out", run_dir.to_str().unwrap()], None)
        .status
        .code()
        .is_some());
    assert_eq!(text(&file), text(&run_dir.join("field.csv")));
}

#[test]
fn config_errors_name_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = tmp.path().join("bad.scn");
    fs::write(&scn, "[layout]\nfile = x.layout\n[run]\ndt_s = soon\n").unwrap();
    let o = mesoped(&["run", scn.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.scn:4:"), "{err}");

    let o = mesoped(&["run", "no_such_scenario"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn layout_errors_name_the_layout_line() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("room.layout"), "1 3 1\n11 10 14\nsink 0 2 1\nsource zero 0\n").unwrap();
    let scn = tmp.path().join("room.scn");
    fs::write(&scn, "[layout]\nfile = room.layout\n").unwrap();
    let o = mesoped(&["run", scn.to_str().unwrap()], None);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("room.layout") && err.contains("line 4"), "{err}");
}

#[test]
fn scenario_files_resolve_layouts_relative_to_themselves() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("corridor.layout"), "1 3 1\n11 10 14\nsink 0 2 1\nsource 0 0\n").unwrap();
    fs::write(
        tmp.path().join("corridor.scn"),
        "[layout]\nfile = corridor.layout\n[run]\nmax_steps = 20\n[spawn]\n0 0 = 1\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let scn = tmp.path().join("corridor.scn");
    let o = mesoped(&["run", scn.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        text(&out.join("events.csv")),
        "step,clock_s,agent_id,event,row,col\n0,0,0,spawn,0,0\n2,1,0,move,0,1\n4,2,0,move,0,2\n4,2.5,0,exit,0,2\n"
    );
    assert_eq!(
        text(&out.join("metrics.csv")),
        "population,avg_travel_time_s,avg_distance_m,exit_0_2_count,completed\n1,2.5,2,1,true\n"
    );
}

#[test]
fn sweep_matches_sequential_core_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let loaded = LoadedScenario::load("compare_10x15").unwrap();
    let pops = parse_populations("1..4,12").unwrap();
    let parallel = commands::sweep(&loaded, &pops, 3, tmp.path()).unwrap();
    let sequential = sweep(&loaded.build().unwrap(), &pops, 3, loaded.config.seed).unwrap();
    assert_eq!(parallel, sequential);
    assert_eq!(text(&tmp.path().join("metrics.csv")).lines().count(), 6);
}

#[test]
fn single_population_sweep_equals_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let loaded = LoadedScenario::load("cinema_b").unwrap();
    let pts = commands::sweep(&loaded, &[60], 1, &tmp.path().join("s")).unwrap();
    let report = commands::run(&loaded, &RunOptions::default(), &tmp.path().join("r")).unwrap();
    assert_eq!(pts[0].avg_travel_time_s, report.metrics.avg_travel_time_s);
    assert_eq!(pts[0].avg_distance_m, report.metrics.avg_distance_m);
}

#[test]
fn compare_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cmp");
    let o = mesoped(
        &["compare", "compare_10x15", "compare_10x15_micro", "--pop", "1,30", "--seeds", "2", "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = text(&out.join("compare.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,14.5,14,true,14.5,14,true"));
    assert!(lines[2].starts_with("30,"));

    let o = mesoped(
        &["compare", "compare_10x15", "compare_10x15_micro", "--pop", "1", "--seeds", "1", "--band", "0.5", "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn compare_rejects_mismatched_layouts_and_empty_populations() {
    let meso = LoadedScenario::load("compare_10x15").unwrap();
    let wrong = LoadedScenario::load("cinema_a").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(
        commands::compare(&meso, &wrong, &[1], 1, tmp.path()),
        Err(CliError::DimensionMismatch { .. })
    ));
    let micro = LoadedScenario::load("compare_10x15_micro").unwrap();
    assert!(matches!(commands::compare(&meso, &micro, &[], 1, tmp.path()), Err(CliError::Config(_))));
    assert!(parse_populations(" , ").is_err());

    let o = mesoped(&["compare", "cinema_a", "compare_10x15_micro", "--pop", "1"], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not 2x related"));
}

#[test]
fn list_shows_bundled_scenarios() {
    let o = mesoped(&["list"], None);
    let s = String::from_utf8_lossy(&o.stdout);
    for name in ["cinema_a", "cinema_b", "escalator_stair", "compare_10x15", "compare_10x15_micro"] {
        assert!(s.lines().any(|l| l == name), "{name} missing");
    }
}
