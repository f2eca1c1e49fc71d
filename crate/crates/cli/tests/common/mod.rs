#![allow(dead_code)]

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    fixture("golden").join(name)
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the CLI in-process.
pub fn cli<S: AsRef<str>>(args: &[S]) -> Output {
    let mut argv = vec!["absa-rl".to_string()];
    argv.extend(args.iter().map(|a| a.as_ref().to_string()));
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = absa_rl_cli::run(argv, &mut out, &mut err);
    Output { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

pub fn path_str(p: &std::path::Path) -> String {
    p.to_str().unwrap().to_string()
}

pub const TASKS: [&str; 2] = ["absc", "aoste"];

/// (verb, task, extra args, golden file) for every checked-in CLI golden.
pub fn golden_cases() -> Vec<(&'static str, &'static str, Vec<&'static str>, String)> {
    let mut cases = Vec::new();
    for t in TASKS {
        cases.push(("score", t, vec![], format!("{t}_scores.jsonl")));
        cases.push(("filter", t, vec![], format!("{t}_filtered.jsonl")));
        cases.push(("evaluate", t, vec![], format!("{t}_eval.txt")));
        cases.push(("evaluate", t, vec!["--format", "csv"], format!("{t}_eval.csv")));
    }
    cases
}

/// Runs one golden case and returns its primary output, plus the stats
/// file for `filter`.
pub fn run_golden_case(verb: &str, task: &str, extra: &[&str], dir: &std::path::Path) -> (String, Option<String>) {
    let out = dir.join("out");
    let stats = dir.join("stats.json");
    let mut args = vec![
        verb.to_string(),
        "--task".into(),
        task.into(),
        path_str(&fixture(&format!("{task}_gold.jsonl"))),
        path_str(&fixture(&format!("{task}_generations.jsonl"))),
        "--out".into(),
        path_str(&out),
    ];
    if verb == "filter" {
        args.extend(["--stats".to_string(), path_str(&stats)]);
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    let r = cli(&args);
    assert_eq!(r.code, 0, "{verb} {task}: {}", r.stderr);
    let main = std::fs::read_to_string(&out).unwrap();
    let stats = (verb == "filter").then(|| std::fs::read_to_string(&stats).unwrap());
    (main, stats)
}
