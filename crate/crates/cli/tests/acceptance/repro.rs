use std::fs;
use std::path::Path;
use std::process::Command;

use crate::Outcome;

/// The only manifest field allowed to differ between a run and its rerun.
const VOLATILE_KEY: &str = "wall_time_secs";

fn rolem(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_rolem"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| format!("spawn failed: {e}"))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`rolem {}` exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

fn files_under(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

fn manifest_without_wall_time(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove(VOLATILE_KEY);
    v
}

/// Compares `a` and `b` file by file. Returns the number of files compared.
fn identical(dir: &Path, a: &str, b: &str) -> Result<usize, String> {
    let (ra, rb) = (dir.join(a), dir.join(b));
    let (fa, fb) = (files_under(&ra), files_under(&rb));
    if fa != fb {
        return Err(format!("{a} and {b} hold different files: {fa:?} vs {fb:?}"));
    }
    for f in &fa {
        let same = if f.ends_with("manifest.json") {
            manifest_without_wall_time(&ra.join(f)) == manifest_without_wall_time(&rb.join(f))
        } else {
            fs::read(ra.join(f)).unwrap() == fs::read(rb.join(f)).unwrap()
        };
        if !same {
            return Err(format!("{a}/{f} differs from its rerun"));
        }
    }
    Ok(fa.len())
}

fn pipeline(dir: &Path) -> Result<usize, String> {
    let sampling = ["--burn-in", "200", "--samples", "300", "--thin", "1"];
    let with = |base: &[&'static str]| -> Vec<&'static str> { base.iter().chain(sampling.iter()).copied().collect() };
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("sim", vec!["simulate", "--out", "sim", "--r", "4", "--p", "2", "--u", "1", "--n", "25", "--J", "3", "--error-kind", "mixture", "--seed", "11", "--replicates", "2"]),
        ("fit", with(&["fit", "--out", "fit", "--data", "sim/rep_001/data.csv", "--u", "1", "--chains", "2", "--seed", "5"])),
        ("fitn", with(&["fit", "--out", "fitn", "--data", "sim/rep_002/data.csv", "--u", "2", "--corr", "cs", "--error-model", "normal", "--standardize"])),
        ("sel", with(&["select", "--out", "sel", "--data", "sim/rep_001/data.csv", "--u-grid", "1,2", "--corr-grid", "ar1,uncor"])),
        ("summ", vec!["summarize", "--out", "summ", "--fit", "fit", "--all"]),
        ("score", vec!["score", "--out", "score", "--fit", "fit", "--truth", "sim/rep_001/truth.json", "--fit", "fitn", "--truth", "sim/rep_002/truth.json"]),
    ];
    let mut compared = 0;
    for (name, args) in &runs {
        rolem(dir, args)?;
        let manifest = format!("{name}/manifest.json");
        let rerun = format!("{name}_rerun");
        rolem(dir, &[args[0], "--out", &rerun, "--from-manifest", &manifest])?;
        compared += identical(dir, name, &rerun)?;
    }
    Ok(compared)
}

pub fn manifest_reruns() -> Outcome {
    let tmp = tempfile::tempdir().expect("temp dir");
    match pipeline(tmp.path()) {
        Ok(n) => Outcome::new(true, format!("{n} output files across simulate/fit/select/summarize/score reproduced byte for byte")),
        Err(e) => Outcome::new(false, e),
    }
}
