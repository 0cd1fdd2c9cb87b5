use std::path::Path;
use std::process::{Command, Output};

use listcombine::data::{summarize_cells, validate, ListDesign};
use listcombine::io::{load_csv, ColumnMapping};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_listcombine"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn simulate_to(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name);
    let path_s = path.to_str().unwrap().to_string();
    let mut args = vec!["simulate", "--mu", "0.3", "--p", "0.5", "--n", "3000", "--seed", "7", "--output", &path_s];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    path_s
}

#[test]
fn estimate_json_on_stdout() {
    let dir = TempDir::new().unwrap();
    let input = simulate_to(dir.path(), "d.csv", &[]);
    let o = run(&["estimate", "--input", &input, "--alpha", "0.05", "--format", "json", "--j-items", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema_version"], "listcombine/1");
    let q = &v["questions"][0];
    assert_eq!(q["question"], "sim");
    for m in ["direct", "standard", "combined"] {
        let r = &q[m];
        for key in ["method", "estimate", "std_error", "ci_low", "ci_high", "n_used", "diagnostics"] {
            assert!(r.get(key).is_some(), "{m}.{key}");
        }
    }
    let est = q["combined"]["estimate"].as_f64().unwrap();
    assert!((est - 0.3).abs() < 0.1);
    assert!(q["variance_reduction"].as_f64().unwrap() > 0.0);
}

#[test]
fn json_numbers_reparse_to_library_values() {
    let dir = TempDir::new().unwrap();
    let input = simulate_to(dir.path(), "d.csv", &[]);
    let o = run(&["estimate", "--input", &input, "--format", "json", "--j-items", "4"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();

    let recs = load_csv(&input, &ColumnMapping::default()).unwrap();
    let ds = validate(&recs, &ListDesign::with_items(4).unwrap()).unwrap();
    let r = listcombine::combined_estimate(&summarize_cells(&ds), listcombine::Probability::new(0.05).unwrap()).unwrap();
    let c = &v["questions"][0]["combined"];
    assert_eq!(c["estimate"].as_f64().unwrap().to_bits(), r.estimate.to_bits());
    assert_eq!(c["std_error"].as_f64().unwrap().to_bits(), r.std_error.to_bits());
    assert_eq!(c["ci_low"].as_f64().unwrap().to_bits(), r.ci_low.to_bits());
}

#[test]
fn inferred_list_length_is_announced() {
    let dir = TempDir::new().unwrap();
    let input = simulate_to(dir.path(), "d.csv", &[]);
    let o = run(&["estimate", "--input", &input]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("inferred J = 4"));
    assert!(stdout(&o).contains("Combined List"));
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let dir = TempDir::new().unwrap();
    let a = simulate_to(dir.path(), "a.csv", &[]);
    let b = simulate_to(dir.path(), "b.csv", &[]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn power_is_byte_identical_across_runs_and_threads() {
    let args = [
        "power", "--test", "one", "--n-yes", "200,400", "--violation", "liar", "--share", "0,0.3", "--replicates", "100",
        "--seed", "3",
    ];
    let a = run(&args);
    let mut with_threads = args.to_vec();
    with_threads.extend(["--threads", "1"]);
    let b = run(&with_threads);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n_yes,violation_type,share_or_wsuccess,replicates,power,seed");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("200,liar,0,100,"));
}

#[test]
fn power_point_from_the_command_line() {
    let o = run(&[
        "power", "--test", "one", "--n-yes", "800", "--violation", "false-confessor", "--share", "0.20", "--replicates",
        "1000", "--seed", "7",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "800");
    assert_eq!(row[1], "false_confessor");
    let power: f64 = row[4].parse().unwrap();
    assert!((power - 0.80).abs() <= 0.05, "{power}");
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn placebo_two_near_zero_when_assignment_follows_question() {
    let dir = TempDir::new().unwrap();
    let input = simulate_to(dir.path(), "b.csv", &[]);
    let o = run(&["placebo", "--test", "two", "--input", &input, "--format", "json", "--j-items", "4"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r = &v["tests"][0]["report"];
    assert_eq!(v["tests"][0]["test"], "test_ii");
    let delta = r["statistic"].as_f64().unwrap();
    let se = r["std_error"].as_f64().unwrap();
    assert!(delta.abs() < 3.0 * se, "{delta} ({se})");
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn two_study_file(dir: &Path) -> String {
    let mut body = String::from("respondent_id,question_id,study,y_direct,z_treat,v_count\n");
    for study in ["A", "B"] {
        for q in ["nuclear", "cnn"] {
            for i in 0..60u32 {
                let y = u32::from(i % 3 == 0);
                let z = i % 2;
                let v = (i % 4) + z * u32::from(i % 5 != 0);
                body.push_str(&format!("{study}{i},{q},{study},{y},{z},{v}\n"));
            }
        }
    }
    write(dir, "ab.csv", &body)
}

#[test]
fn placebo_with_fisher_and_text_output() {
    let dir = TempDir::new().unwrap();
    let input = two_study_file(dir.path());
    let o = run(&["placebo", "--input", &input, "--fisher", "--j-items", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("Fisher combination, Placebo Test I"));
    assert!(text.contains("nuclear [A]"));
}

#[test]
fn compare_studies_reports_each_method() {
    let dir = TempDir::new().unwrap();
    let input = two_study_file(dir.path());
    let o = run(&[
        "compare-studies", "--input", &input, "--study-a", "A", "--study-b", "B", "--format", "csv", "--j-items", "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(text.contains("nuclear,direct,A,B,0,"));
}

#[test]
fn exclusions_are_reported() {
    let dir = TempDir::new().unwrap();
    let input = write(
        dir.path(),
        "x.csv",
        "y_direct,z_treat,v_count\nNA,1,2\n0,1,2\n1,0,1\n0,0,2\n1,1,3\n0,1,9\n0,0,1\n1,0,3\n",
    );
    let o = run(&["estimate", "--input", &input, "--j-items", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("2 of 8 rows excluded"), "{}", stdout(&o));
}

#[test]
fn usage_errors_exit_one_with_help() {
    let o = run(&["estimate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--input"));

    let o = run(&["simulate", "--mu", "1.5", "--p", "0.5", "--n", "10", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));

    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let missing_col = write(dir.path(), "m.csv", "y_direct,v_count\n1,2\n");
    let o = run(&["estimate", "--input", &missing_col]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("z_treat"));

    let bad_cell = write(dir.path(), "b.csv", "y_direct,z_treat,v_count\n1,0,2\n1,zero,2\n");
    let o = run(&["estimate", "--input", &bad_cell]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));

    let empty = write(dir.path(), "e.csv", "");
    assert_eq!(run(&["estimate", "--input", &empty]).status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let o = run(&["power", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("--n-yes"));
}
