use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use disaster_pay::harness::{read_csv, read_transcript};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("disaster-pay-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disaster-pay")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A short variant of the default scenario.
fn short_scenario(dir: &Path) -> PathBuf {
    let mut text = fs::read_to_string(data("default.scenario")).unwrap();
    text.push_str("nodes = 50\nduration_s = 1200\n");
    let p = dir.join("short.scenario");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_a_transcript_that_report_reproduces() {
    let dir = scratch("run");
    let scenario = short_scenario(&dir);
    let transcript = dir.join("run.transcript");
    let chains = dir.join("chains");
    let o = cli(&[
        "run",
        scenario.to_str().unwrap(),
        "--seed",
        "4",
        "--transcript",
        transcript.to_str().unwrap(),
        "--chains",
        chains.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tcr_line = stdout(&o).lines().next().unwrap().to_string();
    let tcr = tcr_line.split("TCR ").nth(1).unwrap().split_whitespace().next().unwrap().to_string();

    let (cfg, lines) = read_transcript(&fs::read_to_string(&transcript).unwrap()).unwrap();
    let cfg = cfg.unwrap();
    assert_eq!((cfg.seed, cfg.nodes), (4, 50));
    assert!(!lines.is_empty());

    let r = cli(&["report", transcript.to_str().unwrap(), "--bin-s", "600"]);
    assert!(r.status.success());
    let report = stdout(&r);
    assert!(report.contains(&format!("TCR                 {tcr}")), "{report}\nvs {tcr_line}");
    assert!(report.contains("TCR over time"));

    // Every saved chain verifies at its own last block.
    let mut n = 0;
    for entry in fs::read_dir(&chains).unwrap() {
        let p = entry.unwrap().path();
        let v = cli(&["verify-chain", p.to_str().unwrap()]);
        assert!(v.status.success(), "{}: {}", p.display(), stdout(&v));
        n += 1;
    }
    assert!(n >= 1);
}

#[test]
fn verify_chain_fails_on_a_corrupted_or_stale_file() {
    let dir = scratch("verify");
    let scenario = short_scenario(&dir);
    let chains = dir.join("chains");
    assert!(cli(&["run", scenario.to_str().unwrap(), "--chains", chains.to_str().unwrap()]).status.success());
    let p = fs::read_dir(&chains)
        .unwrap()
        .map(|e| e.unwrap().path())
        .max_by_key(|p| fs::metadata(p).unwrap().len())
        .unwrap();
    let stale = cli(&["verify-chain", p.to_str().unwrap(), "--now-s", "1000000"]);
    assert!(!stale.status.success());
    assert!(stdout(&stale).contains("Stale"), "{}", stdout(&stale));

    let mut bytes = fs::read(&p).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    let bad = dir.join("bad.chain");
    fs::write(&bad, bytes).unwrap();
    assert!(!cli(&["verify-chain", bad.to_str().unwrap()]).status.success());
}

#[test]
fn attack_fixtures_are_caught() {
    let dir = scratch("attack");
    let scenario = dir.join("attack.scenario");
    fs::write(&scenario, "nodes = 100\nduration_s = 800\ntime_scale = 0.004\n").unwrap();
    for (script, reason) in [("double_spend.attack", "DoubleSpend"), ("collude_monitors.attack", "InsufficientQuorum")]
    {
        let o = cli(&["attack", scenario.to_str().unwrap(), data(script).to_str().unwrap(), "--seed", "2"]);
        assert!(o.status.success(), "{script}: {}", stdout(&o));
        assert!(stdout(&o).contains(&format!("observed: Rejected({reason})")), "{}", stdout(&o));
    }
}

#[test]
fn sweep_emits_one_csv_row_per_point_and_seed() {
    let dir = scratch("sweep");
    let spec = dir.join("small.sweep");
    fs::write(&spec, "nodes = 30\nduration_s = 600\nvary monitor_quorum = 3 4\nseeds = 1..2\n").unwrap();
    let out = dir.join("out.csv");
    let o = cli(&["sweep", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(
        rows.iter().map(|r| (r.config.monitor_quorum, r.config.seed)).collect::<Vec<_>>(),
        [(3, 1), (3, 2), (4, 1), (4, 2)]
    );
}

#[test]
fn village_road_graph_is_found_next_to_its_scenario() {
    let dir = scratch("village");
    let scenario = dir.join("village.scenario");
    fs::copy(data("village.roads"), dir.join("village.roads")).unwrap();
    fs::write(&scenario, fs::read_to_string(data("village.scenario")).unwrap() + "duration_s = 900\n").unwrap();
    let o = cli(&["run", scenario.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("TCR"));
}

#[test]
fn bad_inputs_exit_nonzero_with_a_message() {
    let dir = scratch("bad");
    let scenario = dir.join("bad.scenario");
    fs::write(&scenario, "nodes = many\n").unwrap();
    let o = cli(&["run", scenario.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nodes"), "{}", String::from_utf8_lossy(&o.stderr));

    let script = dir.join("bad.attack");
    fs::write(&script, "kind = teleport\n").unwrap();
    assert!(!cli(&["attack", data("default.scenario").to_str().unwrap(), script.to_str().unwrap()]).status.success());
    assert!(!cli(&["report", dir.join("missing.transcript").to_str().unwrap()]).status.success());
}
