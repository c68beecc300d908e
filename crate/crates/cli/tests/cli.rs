use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", &format!("{name}.json")].iter().collect();
    p.display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpclo")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mpclo-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn map_prints_point_value() {
    let o = run(&["map", "--side", "phi", "--at", "1", &fixture("ex2")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "status=point value=-1.000000000");
}

#[test]
fn map_at_boundary_is_undefined() {
    let o = run(&["map", "--side", "phi", "--at", "0", &fixture("ex2")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "status=undefined");
}

#[test]
fn validate_reports_gram() {
    let o = run(&["validate", &fixture("ex1")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("assumption2_exact=false gram=[[1.5]]"));
}

#[test]
fn partition_writes_csv() {
    let csv = tmp("ex3.csv");
    let o = run(&[
        "partition",
        "--side",
        "dual",
        "--window",
        "-3:3",
        "--grid",
        "601",
        &fixture("ex3"),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let kinds: Vec<&str> = rows.iter().map(|r| &r[2]).collect();
    assert_eq!(kinds.iter().filter(|k| **k == "linearity").count(), 4);
    let points: Vec<f64> = rows
        .iter()
        .filter(|r| &r[2] == "transition0")
        .map(|r| r[5].split(':').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(points.len(), 3);
    for (p, want) in points.iter().zip([-1.0, 0.0, 1.0]) {
        assert!((p - want).abs() < 1e-6, "{p}");
    }
}

#[test]
fn partition_output_is_deterministic_and_rerenders() {
    let (a, b, saved, c) = (tmp("a.svg"), tmp("b.svg"), tmp("saved.json"), tmp("c.svg"));
    let base = ["partition", "--side", "primal", "--window", "-1.3:1.3,-1.3:1.3", "--grid", "21,21"];
    let f = fixture("ex4");
    let o1 = run(&[&base[..], &[f.as_str(), "--svg", a.to_str().unwrap(), "--out", saved.to_str().unwrap()]].concat());
    assert_eq!(o1.status.code(), Some(0), "{}", String::from_utf8_lossy(&o1.stderr));
    let o2 = run(&[&base[..], &[f.as_str(), "--jobs", "1", "--svg", b.to_str().unwrap()]].concat());
    assert_eq!(o2.status.code(), Some(0));
    let sa = std::fs::read(&a).unwrap();
    assert_eq!(sa, std::fs::read(&b).unwrap());
    assert!(String::from_utf8_lossy(&sa).contains("<svg"));
    let o3 = run(&["report", saved.to_str().unwrap(), "--svg", c.to_str().unwrap()]);
    assert_eq!(o3.status.code(), Some(0));
    assert_eq!(sa, std::fs::read(&c).unwrap());
}

#[test]
fn svg_for_one_parameter_is_rejected() {
    let svg = tmp("one.svg");
    let o = run(&["partition", "--side", "dual", "--window", "-3:3", "--grid", "31", &fixture("ex3"), "--svg", svg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unsupported dimension"));
}

#[test]
fn bad_input_exits_two() {
    let bad = tmp("bad.json");
    std::fs::write(&bad, "{\"version\": 1}").unwrap();
    let o = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["map", "--side", "phi", "--at", "1,2", &fixture("ex2")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn broken_orthogonality_names_the_check() {
    let text = std::fs::read_to_string(fixture("ex3")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["M"][0][0] = serde_json::json!(1.0);
    let bad = tmp("orth.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let o = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("orthogonality_a_m"));
}

#[test]
fn singular_gram_names_the_check() {
    let text = std::fs::read_to_string(fixture("ex2")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["M"] = serde_json::json!([[[0, 0, 0, 0]]]);
    v.as_object_mut().unwrap().remove("B");
    let bad = tmp("gram.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let o = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("singular_gram"));
}

#[test]
fn infeasible_solve_exits_three() {
    // v = 3 lies outside the primal representable set of the pentagon LP
    let o = run(&["solve", "--family", "nsdual-d", "--at", "3", &fixture("ex3")]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("status=infeasible"));
}

#[test]
fn pairing_table_has_seven_rows() {
    let csv = tmp("pair.csv");
    let o = run(&["partition", "--pairing", "--side", "dual", "--window", "-3:3", "--grid", "601", &fixture("ex3"), "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.starts_with("xbar_v,v,u,ybar_u"));
}
