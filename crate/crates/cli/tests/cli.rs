use std::path::Path;
use std::process::{Command, Output};

fn rvms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rvms")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = rvms(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, polarity: &str, seed: &str) -> String {
    let out = dir.join(name);
    ok(&["synth", "--seed", seed, "--n", "4", "--size", "32", "--polarity", polarity, "--out", s(&out)]);
    s(&out).to_string()
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = vec![];
    for sub in ["images", "labels"] {
        let mut names: Vec<_> = std::fs::read_dir(root.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            files.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()));
        }
    }
    files
}

#[test]
fn usage_errors_exit_with_code_two() {
    assert_eq!(rvms(&[]).status.code(), Some(2));
    assert_eq!(rvms(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(rvms(&["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(rvms(&["eval", "--student", "x.ckpt"]).status.code(), Some(2));
    assert_eq!(rvms(&["--help"]).status.code(), Some(0));
}

#[test]
fn help_lists_training_defaults() {
    let help = String::from_utf8(ok(&["train", "--help"]).stdout).unwrap();
    for needle in ["[default: 200]", "[default: 600]", "[default: 1e-3]", "[default: 0.2]", "--no-lrit", "--no-dt"] {
        assert!(help.contains(needle), "missing {needle}");
    }
    let help = String::from_utf8(ok(&["demo", "--help"]).stdout).unwrap();
    assert!(help.contains("tau 30") && help.contains("[default: 1]"));
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a", "bright", "5");
    let b = synth(dir.path(), "b", "bright", "5");
    let c = synth(dir.path(), "c", "bright", "6");
    let (ta, tb, tc) = (tree(Path::new(&a)), tree(Path::new(&b)), tree(Path::new(&c)));
    assert_eq!(ta.len(), 8);
    assert_eq!(ta, tb);
    assert_ne!(ta, tc);
}

#[test]
fn image_tools_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let src = synth(dir.path(), "src", "bright", "1");
    let tgt = synth(dir.path(), "tgt", "dark", "2");
    let aug = dir.path().join("aug");
    ok(&["augment", "--in", &src, "--out", s(&aug), "--mode", "dissimilar", "--seed", "3"]);
    assert!(aug.join("img_0000_sa.png").exists());
    let st = dir.path().join("st");
    ok(&["transfer", "--in", &src, "--target-dir", &tgt, "--out", s(&st), "--lambda", "0.5"]);
    assert_eq!(std::fs::read_dir(&st).unwrap().count(), 4);
    let prefix = dir.path().join("lrit").join("x");
    ok(&["lrit", "--in", &format!("{src}/images/img_0000.png"), "--out-prefix", s(&prefix)]);
    for d in ["up", "right", "down", "left"] {
        assert!(dir.path().join("lrit").join(format!("x_{d}.png")).exists());
        assert!(dir.path().join("lrit").join(format!("x_{d}_16.png")).exists());
    }
}

#[test]
fn cluster_then_train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let src = synth(dir.path(), "src", "bright", "1");
    let bright = synth(dir.path(), "bright", "bright", "2");
    let dark = synth(dir.path(), "dark", "dark", "3");

    let out = String::from_utf8(ok(&["cluster", "--source", &src, "--target", &bright, &dark]).stdout).unwrap();
    let labels: Vec<&str> = out.lines().map(|l| l.split('\t').nth(1).unwrap()).collect();
    assert_eq!(labels, ["similar", "dissimilar"]);

    let run = dir.path().join("run");
    ok(&[
        "train", "--source", &src, "--target", &bright, &dark, "--out", s(&run), "--tau", "1", "--total-epochs", "2",
    ]);
    for f in ["t_sim.ckpt", "t_dis.ckpt", "student.ckpt", "log.jsonl", "labels.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let csv = ok(&["eval", "--student", s(&run.join("student.ckpt")), "--target", &bright, &dark, "--format", "csv"]);
    let csv = String::from_utf8(csv.stdout).unwrap();
    assert!(csv.starts_with("domain_id,n,dice_mean"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn domain_errors_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = rvms(&["cluster", "--source", s(&missing), "--target", s(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:") || String::from_utf8_lossy(&out.stderr).contains("\nerror:"));
    let src = synth(dir.path(), "src", "bright", "1");
    let out = rvms(&["train", "--source", &src, "--target", &src, "--out", "x", "--tau", "5", "--total-epochs", "5"]);
    assert_eq!(out.status.code(), Some(1));
}
