use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rulefuzz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rulefuzz")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = rulefuzz(args);
    assert!(
        out.status.success(),
        "{args:?}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn collect_augment_infer_generate_fuzz_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let seeds = d.join("seeds");
    let aug = d.join("aug");
    let rules = d.join("rules.book");
    let manual = d.join("manual.book");
    let cache = d.join("templates.cache");
    let runs = d.join("runs");
    let plan = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/seeded_bugs.json");

    let out = ok(&["collect", "--out", s(&seeds), "--per-op", "4"]);
    assert!(out.contains("records"));
    assert!(seeds.join("seeds.jsonl").exists());

    ok(&["augment", "--records", s(&seeds), "--out", s(&aug), "--target", "30", "--seconds", "2"]);
    let out = ok(&[
        "infer",
        "--records",
        s(&aug),
        "--out",
        s(&rules),
        "--max-ops",
        "2",
        "--cache",
        s(&cache),
        "--manual-out",
        s(&manual),
    ]);
    assert!(out.contains("partial operators have rules"), "{out}");
    assert!(cache.exists());
    assert!(fs::read_to_string(&rules).unwrap().lines().count() > 10);
    // a second run loads the template cache
    ok(&["infer", "--records", s(&aug), "--out", s(&d.join("again.book")), "--max-ops", "2", "--cache", s(&cache)]);
    assert_eq!(fs::read_to_string(&rules).unwrap(), fs::read_to_string(d.join("again.book")).unwrap());

    let graph = ok(&["gen", "--rules", s(&rules), "--manual", s(&manual), "--records", s(&aug), "--seed", "3"]);
    assert!(graph.contains("return"), "{graph}");

    let fuzz_args = |out: &Path, bugs: bool| {
        let mut v = vec![
            "fuzz".to_string(),
            "--rules".into(),
            s(&rules).into(),
            "--manual".into(),
            s(&manual).into(),
            "--records".into(),
            s(&aug).into(),
            "--tests".into(),
            "300".into(),
            "--out".into(),
            s(out).into(),
        ];
        if bugs {
            v.extend(["--bug-plan".into(), s(&plan).into()]);
        }
        v
    };
    let clean = runs.join("clean");
    let args = fuzz_args(&clean, false);
    let text = ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(text.contains("unique reports: 0"), "{text}");
    assert!(clean.join("report.json").exists());

    let buggy = runs.join("buggy");
    let args = fuzz_args(&buggy, true);
    let text = ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(!text.contains("unique reports: 0"), "{text}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(buggy.join("report.json")).unwrap()).unwrap();
    let case = report["findings"][0]["path"].as_str().unwrap().to_string();
    let out = ok(&["replay", &case, "--bug-plan", s(&plan)]);
    assert!(out.starts_with("saved:"));
    // without the bug the verdict changes
    assert!(!rulefuzz(&["replay", &case]).status.success());
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!rulefuzz(&["gen", "--records", s(dir.path())]).status.success());
    assert!(!rulefuzz(&["fuzz", "--records", s(dir.path()), "--out", s(dir.path()), "--backend", "bogus"]).status.success());
    assert!(!rulefuzz(&["frobnicate"]).status.success());
    assert!(ok(&["--help"]).contains("fuzz"));
}
