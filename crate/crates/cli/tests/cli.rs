use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn daghet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daghet"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const DIAMOND: &str = r#"digraph w {
  a [work=4, memory=2];
  b [work=2, memory=1];
  c [work=3, memory=1];
  d [work=1, memory=2];
  a -> b [size=1];
  a -> c [size=1];
  b -> d [size=1];
  c -> d [size=1];
}
"#;

#[test]
fn map_feasible_writes_result() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("w.dot"), DIAMOND).unwrap();
    let out = daghet(
        &[
            "map",
            "--workflow",
            "w.dot",
            "--preset",
            "default",
            "--output",
            "r.json",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = json(&dir.path().join("r.json"));
    assert_eq!(r["format"], 1);
    assert!(r["makespan"].as_f64().unwrap() > 0.0);
    assert!(r["runtime"].is_number());
    for block in r["blocks"].as_array().unwrap() {
        assert_eq!(block["fits"], true);
    }

    let check = daghet(
        &[
            "check",
            "--workflow",
            "w.dot",
            "--preset",
            "default",
            "--mapping",
            "r.json",
        ],
        dir.path(),
    );
    assert!(check.status.success());
}

#[test]
fn infeasible_names_the_task() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("w.dot"),
        "digraph { small [work=1, memory=1]; huge [work=1, memory=500]; small -> huge; }",
    )
    .unwrap();
    for algorithm in ["hetmem", "hetpart"] {
        let out = daghet(
            &[
                "map",
                "--workflow",
                "w.dot",
                "--preset",
                "default",
                "--algorithm",
                algorithm,
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(1));
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains("huge"), "{stderr}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn input_errors_have_their_own_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("w.dot"), DIAMOND).unwrap();
    fs::write(
        dir.path().join("cyclic.dot"),
        "digraph { a; b; a -> b; b -> a; }",
    )
    .unwrap();
    let cases: [&[&str]; 3] = [
        &["map", "--workflow", "w.dot", "--preset", "gigantic"],
        &["map", "--workflow", "missing.dot", "--preset", "default"],
        &["map", "--workflow", "cyclic.dot", "--preset", "default"],
    ];
    for args in cases {
        let out = daghet(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn cluster_file_and_bandwidth_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("w.dot"), DIAMOND).unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"bandwidth": 1, "processors": [
            {"id": "fast", "memory": 10, "speed": 2},
            {"id": "slow", "memory": 10, "speed": 1}
        ]}"#,
    )
    .unwrap();
    let run = |bandwidth: &str, out: &str| {
        let o = daghet(
            &[
                "map",
                "--workflow",
                "w.dot",
                "--cluster",
                "c.json",
                "--algorithm",
                "hetmem",
                "--bandwidth",
                bandwidth,
                "--output",
                out,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        json(&dir.path().join(out))
    };
    let r = run("1", "a.json");
    // Everything fits on the first processor, so bandwidth plays no part.
    assert_eq!(r["makespan"].as_f64().unwrap(), 5.0);
    assert_eq!(r["assignment"]["a"], "fast");
    assert_eq!(run("0.01", "b.json")["makespan"], r["makespan"]);
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.dot", "b.dot"] {
        let o = daghet(
            &[
                "generate",
                "--family",
                "diamond-mesh",
                "--size",
                "30",
                "--seed",
                "4",
                "--output",
                out,
            ],
            dir.path(),
        );
        assert!(o.status.success());
    }
    let a = fs::read(dir.path().join("a.dot")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.dot")).unwrap());
    assert!(String::from_utf8_lossy(&a).contains("t29"));
}

#[test]
fn check_reports_tampering() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("w.dot"), DIAMOND).unwrap();
    let o = daghet(
        &[
            "map",
            "--workflow",
            "w.dot",
            "--preset",
            "small",
            "--output",
            "r.json",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let mut r = json(&dir.path().join("r.json"));
    r["makespan"] = serde_json::json!(0.5);
    fs::write(dir.path().join("bad.json"), r.to_string()).unwrap();
    let out = daghet(
        &[
            "check",
            "--workflow",
            "w.dot",
            "--preset",
            "small",
            "--mapping",
            "bad.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("violation"));
}

#[test]
fn bench_writes_report_and_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let o = daghet(
        &[
            "bench",
            "--families",
            "fanout,chain-of-stages",
            "--sizes",
            "20",
            "--seeds",
            "0",
            "--preset",
            "morehet",
            "--bandwidth-sweep",
            "0.1,5",
            "--report",
            "out.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&dir.path().join("out.json"));
    assert_eq!(report["format"], 1);
    assert_eq!(report["rows"].as_array().unwrap().len(), 2 * 2 * 2);
    assert_eq!(report["reference_ratio"], 0.41);

    let long = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 8);
    let ratios = fs::read_to_string(dir.path().join("out.ratios.csv")).unwrap();
    let header = ratios.lines().next().unwrap();
    assert_eq!(header, "family,size,seed,preset,ratio_bw_0.1,ratio_bw_5");
    assert_eq!(ratios.lines().count(), 1 + 2);
}
