use std::process::Command;

use dumbolab_bench::{gen_synthetic_replay, SyntheticSpec};
use dumbolab_core::image::{read_image, write_image};

fn dumbolab(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dumbolab")).args(args).output().unwrap();
    (out.status.success(), String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr))
}

#[test]
fn recover_replays_an_image_directory() {
    let dir = tempfile::tempdir().unwrap();
    let s = gen_synthetic_replay(&SyntheticSpec { heap_bytes: 1 << 20, log_bytes: 256 << 10, ..SyntheticSpec::new(2, 1) });
    let img = dir.path().join("img");
    let rec = dir.path().join("rec");
    write_image(&img, &s.scan).unwrap();
    let (ok, out) = dumbolab(&["recover", img.to_str().unwrap(), "--out", rec.to_str().unwrap()]);
    assert!(ok, "{out}");
    assert!(out.contains(&format!("replayed {} transactions", s.txs())), "{out}");
    assert!(read_image(&rec).is_ok());
}

#[test]
fn print_config_reflects_overrides() {
    let (ok, out) = dumbolab(&["print-config", "--set", "engine=spht", "--set", "bench.runs=7"]);
    assert!(ok, "{out}");
    assert!(out.contains("engine = spht\n") && out.contains("bench.runs = 7\n"), "{out}");
    let (ok, out) = dumbolab(&["print-config", "--set", "bench.runs=zero"]);
    assert!(!ok && out.contains("bench.runs"), "{out}");
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (ok, out) = dumbolab(&[
        "bench",
        "--set",
        "bench.txs=5",
        "--set",
        "bench.scale=0.05",
        "--set",
        "bench.runs=1",
        "--engines",
        "dumbo-opa,htm-sgl",
        "--threads",
        "1,2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(ok, "{out}");
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
