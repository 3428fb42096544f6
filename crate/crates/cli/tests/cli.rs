use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rankmap::covermap::RankGrid;
use rankmap::scene::Grid;
use tempfile::TempDir;

const FREE_SPACE: &str = r#"{
  "extent_m": [240, 180],
  "altitudes_m": [30],
  "towers": [{"id": 1, "x": 15, "y": 15}]
}"#;

const TWO_TOWERS: &str = r#"{
  "extent_m": [240, 180],
  "ground_material": "medium_dry_ground",
  "altitudes_m": [3, 30],
  "buildings": [{"x": 60, "y": 40, "w": 30, "h": 100, "height": 40, "material": "concrete"}],
  "towers": [{"id": 1, "x": 15, "y": 15}, {"id": 7, "x": 225, "y": 165}]
}"#;

fn rankmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankmap")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(String::from).collect()
}

#[test]
fn malformed_scene_exits_2_without_output() {
    let t = TempDir::new().unwrap();
    let scene = write(t.path(), "bad.json", "{ \"towers\": [ {\"id\": 1, \"x\": ");
    let out = t.path().join("out");
    let o = rankmap(&["coverage", "--scene", s(&scene), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    assert!(!out.exists());
}

#[test]
fn missing_file_exits_2() {
    let t = TempDir::new().unwrap();
    let o = rankmap(&["rank", "--scene", s(&t.path().join("nope.json")), "--out", s(&t.path().join("o"))]);
    assert_eq!(code(&o), 2);
    let o = rankmap(&["fit", "--rank-grid", s(&t.path().join("nope.json")), "--out", s(&t.path().join("o"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_threshold_exits_2() {
    let t = TempDir::new().unwrap();
    let scene = write(t.path(), "s.json", FREE_SPACE);
    let out = t.path().join("out");
    let o = rankmap(&["rank", "--scene", s(&scene), "--thresholds", "10,1", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn singular_covariance_exits_3_without_output() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("out");
    let o = rankmap(&["synth", "--nx", "6", "--ny", "6", "--coefficients", "0,0,1,0", "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());
}

#[test]
fn free_space_coverage() {
    let t = TempDir::new().unwrap();
    let scene = write(t.path(), "s.json", FREE_SPACE);
    let out = t.path().join("out");
    let o = rankmap(&["coverage", "--scene", s(&scene), "--altitudes", "30", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["cdf_rss_mimo_t1_h30.csv", "coverage_summary.csv", "rss_mimo_t1_h30.csv", "rss_mimo_t1_h30.pgm"]
    );
    assert_eq!(lines(&out.join("coverage_summary.csv"))[1], "1,30,0");
    let grid = lines(&out.join("rss_mimo_t1_h30.csv"));
    assert_eq!(grid[0], "x_m,y_m,value");
    assert_eq!(grid.len(), 1 + 8 * 6);
    assert!(grid.iter().all(|l| !l.ends_with(",Z")));
}

#[test]
fn joint_coverage_writes_serving_map() {
    let t = TempDir::new().unwrap();
    let scene = write(t.path(), "s.json", TWO_TOWERS);
    let out = t.path().join("out");
    let o = rankmap(&["coverage", "--scene", s(&scene), "--joint", "--mode", "siso", "--altitudes", "30", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("rss_siso_joint_h30.csv").exists());
    let serving = fs::read_to_string(out.join("serving_towers.csv")).unwrap();
    assert!(serving.contains('1') && serving.contains('7'));
    let o = rankmap(&["coverage", "--scene", s(&scene), "--towers", "3", "--out", s(&t.path().join("x"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn histogram_z_matches_blockage() {
    let t = TempDir::new().unwrap();
    let scene = write(t.path(), "s.json", TWO_TOWERS);
    let out = t.path().join("out");
    let o = rankmap(&["rank", "--scene", s(&scene), "--thresholds", "10,100", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = lines(&out.join("rank_summary.csv"));
    assert_eq!(summary.len(), 5);
    let mut blocked_somewhere = false;
    for row in &summary[1..] {
        let f: Vec<&str> = row.split(',').collect();
        let hist = lines(&out.join(format!("hist_h{}_K{}.csv", f[0], f[1])));
        let z = hist.last().unwrap().strip_prefix("Z,").unwrap();
        assert_eq!(z.parse::<f64>().unwrap(), f[2].parse::<f64>().unwrap());
        let total: f64 = hist[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        blocked_somewhere |= f[2].parse::<f64>().unwrap() > 0.0;
    }
    assert!(blocked_somewhere);
    assert!(RankGrid::from_json(&fs::read_to_string(out.join("rank_grid.json")).unwrap()).is_ok());
}

#[test]
fn constant_grid_has_no_correlation_pairs() {
    let t = TempDir::new().unwrap();
    let mut rg = RankGrid::new(Grid { nx: 5, ny: 5, spacing: 30.0 }, vec![30.0, 50.0], vec![10.0]);
    rg.ranks = vec![Some(2); rg.ranks.len()];
    let path = write(t.path(), "rg.json", &rg.to_json());
    let out = t.path().join("out");
    let o = rankmap(&["fit", "--rank-grid", s(&path), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no valid correlation pairs"));
    assert!(!out.exists());
}

#[test]
fn synth_fit_interpolate() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("out");
    let o = rankmap(&["synth", "--nx", "12", "--ny", "10", "--altitudes", "30,50,70", "--seed", "4", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = rankmap(&["fit", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    for key in ["c1", "c2", "c3", "c4", "rmse", "max_distance_m"] {
        assert!(model[key].is_number(), "{key}");
    }
    assert_eq!(lines(&out.join("correlation_bins.csv"))[0], "distance_m,mean_correlation,pair_count");

    let o = rankmap(&["interpolate", "--out", s(&out), "--export-estimates"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = lines(&out.join("mae_report.csv"));
    assert_eq!(report.len(), 1 + 3 * 3 * 3);
    assert!(out.join("est_makima_h70_K1000.csv").exists());

    let explicit = t.path().join("explicit");
    fs::create_dir(&explicit).unwrap();
    for f in ["rank_grid.json", "model.json"] {
        fs::copy(out.join(f), explicit.join(f)).unwrap();
    }
    let o = rankmap(&["interpolate", "--m", "20", "--r0", "150", "--out", s(&explicit)]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(out.join("mae_report.csv")).unwrap(),
        fs::read(explicit.join("mae_report.csv")).unwrap()
    );

    let o = rankmap(&["interpolate", "--method", "kriging", "--round", "--out", s(&explicit)]);
    assert_eq!(code(&o), 0);
    assert_eq!(lines(&explicit.join("mae_report.csv")).len(), 1 + 9);
    let o = rankmap(&["interpolate", "--m", "0", "--out", s(&explicit)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn calibrate_recovers_offset() {
    let t = TempDir::new().unwrap();
    let mut sim = String::from("t_s,x_m,y_m,z_m,rss_dbm\n");
    let mut meas = String::from("rss_dbm,t_s,x_m,y_m,z_m\n");
    for i in 0..30 {
        let t = i as f64 * 0.5;
        let v = -80.0 + 5.0 * (i as f64 * 0.7).sin();
        sim.push_str(&format!("{t},{},20,30,{v}\n", i * 10));
        meas.push_str(&format!("{},{},{},20,30\n", v + 7.7, t + 0.01, i * 10));
    }
    let simulated = write(t.path(), "sim.csv", &sim);
    let measured = write(t.path(), "meas.csv", &meas);
    let out = t.path().join("out");
    let o = rankmap(&["calibrate", "--measured", s(&measured), "--simulated", s(&simulated), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = lines(&out.join("calibration.csv"));
    assert_eq!(rows[0], "tower_id,offset_db,rmse_before_db,rmse_after_db,pairs");
    let f: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(f[0], "all");
    assert_eq!(f[1], "7.7");
    assert_eq!(f[4], "30");

    let broken = write(t.path(), "broken.csv", "t_s,x_m,y_m,z_m,rss_dbm\n0,0,0,30,abc\n");
    let o = rankmap(&["calibrate", "--measured", s(&broken), "--simulated", s(&simulated), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn calibrate_against_scene() {
    let t = TempDir::new().unwrap();
    let scene = write(t.path(), "s.json", FREE_SPACE);
    let mut meas = String::from("t_s,x_m,y_m,z_m,rss_dbm,tower_id\n");
    for i in 0..10 {
        meas.push_str(&format!("{},{},90,30,-60,1\n", i, 30 + i * 15));
    }
    let measured = write(t.path(), "m.csv", &meas);
    let out = t.path().join("out");
    let o = rankmap(&["calibrate", "--scene", s(&scene), "--measured", s(&measured), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = lines(&out.join("calibration.csv"));
    assert!(rows[1].starts_with("1,"));
    assert!(rows[1].ends_with(",10"));
}
