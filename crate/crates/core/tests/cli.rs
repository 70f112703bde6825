use std::path::PathBuf;
use std::process::{Command, Output};

fn theory(name: &str) -> String {
    format!("{}/theories/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn cateff(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cateff"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("run cateff")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str, src: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cateff-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, src).unwrap();
    path
}

#[test]
fn check_prints_judgements() {
    let o = cateff(&["check", &theory("ex36.ceff")], &[]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("⊢_{τ^1_int;send_int;recv^int_int} t : 1 + (1 + (1 + 1))"), "{out}");
    assert!(out.contains("⊢_{recv^1_int;send_int} s : 1"), "{out}");
}

#[test]
fn check_rejects_a_wrong_grade() {
    let src = std::fs::read_to_string(theory("handler.ceff"))
        .unwrap()
        .replace("program N over Sigma : A * B @ g.h", "program N over Sigma : A * B @ g");
    let path = scratch("wrong_grade.ceff", &src);
    let o = cateff(&["check", path.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn check_rejects_a_syntax_error() {
    let path = scratch("broken.ceff", "category S { objects a; gen g : a -> ; }");
    let o = cateff(&["check", path.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_trace_shows_every_configuration() {
    let o = cateff(&["run", "--trace", &theory("handler.ceff")], &[]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("S-HandleOp"));
    assert!(out.contains("handle { let x <- val d v in let y <- do op2() in val e (x, y) } with H"));
    assert!(out.contains("main => val • ((inr () : 1 + 1), (inr (inl () : 1 + 1) : 1 + (1 + 1)))  (7 steps)"));
    assert_eq!(out.matches("@ id_•").count(), 8);
}

#[test]
fn run_stops_at_the_step_cap() {
    let o = cateff(&["run", "--max-steps", "2", &theory("handler.ceff")], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_reports_a_missing_clause() {
    let src = r#"
category S { objects c, d; gen g : c -> c; gen h : c -> d; }
category P { objects •; }
functor G : S -> P { collapse •; }
signature Sig over S { op a : 1 ~> 1 @ g; }
signature E over P { }
handler H over Sig to E via G at c {
  return x => val • x;
  op a(p), r @ id_c => r ();
}
program main over E : 1 @ id_• {
  handle { let u <- do a(()) in do a(()) } with H
}
"#;
    let path = scratch("missing.ceff", src);
    let o = cateff(&["run", path.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn denote_json_is_a_tree() {
    let o = cateff(&["denote", "--json", &theory("handler.ceff")], &[]);
    assert_eq!(o.status.code(), Some(0));
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(j["main"]["leaf"]["obj"], "•");
    assert_eq!(j["N"]["node"]["op"], "op1");
    assert_eq!(j["N"]["node"]["children"].as_array().unwrap().len(), 2);
}

#[test]
fn conform_passes_on_a_shipped_theory() {
    let o = cateff(&["conform", "--count", "20", "--depth", "3", "--json-report", &theory("handler.ceff")], &[]);
    assert_eq!(o.status.code(), Some(0));
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(j["programs"].as_u64().unwrap() >= 20);
}

#[test]
fn conform_reports_violations_under_a_tiny_step_cap() {
    let o = cateff(&["conform", "--count", "5", &theory("handler.ceff")], &[("CATEFF_MAX_STEPS", "2")]);
    assert_eq!(o.status.code(), Some(3));
}
