// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use tmfu_core::random::{random_inputs, rng};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn tmfu(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmfu"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("TMFU_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn compile_gradient(dir: &Path) -> PathBuf {
    let o = tmfu(dir, &["compile", data("gradient.kern").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("gradient.ovl")
}

fn kv(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.split_once(" = ").filter(|(k, _)| *k == key).map(|(_, v)| v.to_string()))
        .unwrap_or_else(|| panic!("no `{key}`"))
}

#[test]
fn compile_gradient_artifacts() {
    let dir = TempDir::new().unwrap();
    let ovl = compile_gradient(dir.path());
    let img = tmfu_core::ContextImage::deserialize(&fs::read(ovl).unwrap()).unwrap();
    assert_eq!(img.word_count(), 11);
    let table = fs::read_to_string(dir.path().join("gradient.schedule.txt")).unwrap();
    assert_eq!(table, fs::read_to_string(data("gradient_schedule.golden")).unwrap());
    let metrics = fs::read_to_string(dir.path().join("gradient.metrics")).unwrap();
    assert_eq!(kv(&metrics, "ii"), "11");
    assert_eq!(kv(&metrics, "op_nodes"), "11");
    assert_eq!(kv(&metrics, "context_bytes"), "55");
}

#[test]
fn empty_source_is_user_error() {
    let dir = TempDir::new().unwrap();
    let src = dir.path().join("empty.kern");
    fs::write(&src, "").unwrap();
    let o = tmfu(dir.path(), &["compile", src.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn syntax_error_has_location() {
    let dir = TempDir::new().unwrap();
    let src = dir.path().join("bad.kern");
    fs::write(&src, "in a;\ny = a + ;\nout y;\n").unwrap();
    let o = tmfu(dir.path(), &["compile", src.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("2:"), "{}", stderr(&o));
}

#[test]
fn same_stage_fan_out_overflows_instruction_memory() {
    let dir = TempDir::new().unwrap();
    let mut src = String::from("in a, b, c, d;\n");
    let vars = ["a", "b", "c", "d"];
    let mut n = 0;
    'outer: for op in ["+", "-", "*"] {
        for x in vars {
            for y in vars.iter().filter(|&&y| y != x) {
                src.push_str(&format!("t{n} = {x} {op} {y};\nout t{n};\n"));
                n += 1;
                if n == 33 {
                    break 'outer;
                }
            }
        }
    }
    let path = dir.path().join("wide.kern");
    fs::write(&path, src).unwrap();
    let o = tmfu(dir.path(), &["compile", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("stage 1") && err.contains("33"), "{err}");
}

#[test]
fn simulate_gradient() {
    let dir = TempDir::new().unwrap();
    let ovl = compile_gradient(dir.path());
    let one = dir.path().join("one.in");
    fs::write(&one, "3, 5, 2, 1, 4\n").unwrap();
    let o = tmfu(dir.path(), &["simulate", ovl.to_str().unwrap(), "--inputs", one.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = fs::read_to_string(dir.path().join("gradient.out")).unwrap();
    assert_eq!(out.lines().last(), Some("15"));
    assert!(dir.path().join("gradient.trace.txt").exists());
    assert!(dir.path().join("gradient.trace.csv").exists());

    let three = dir.path().join("three.in");
    fs::write(&three, "# a,b,c,d,e\n3,5,2,1,4\n1,2,3,4,5\n0,0,0,0,0\n").unwrap();
    let o = tmfu(dir.path(), &["simulate", ovl.to_str().unwrap(), "--inputs", three.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("measured period: 11"), "{}", stdout(&o));
    let out = fs::read_to_string(dir.path().join("gradient.out")).unwrap();
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows, ["15", "10", "0"]);
}

#[test]
fn trace_format_selects_one_file() {
    let dir = TempDir::new().unwrap();
    let ovl = compile_gradient(dir.path());
    let inp = dir.path().join("v.in");
    fs::write(&inp, "3,5,2,1,4\n").unwrap();
    let args = ["simulate", ovl.to_str().unwrap(), "--inputs", inp.to_str().unwrap(), "--trace-format", "rows"];
    assert!(tmfu(dir.path(), &args).status.success());
    assert!(dir.path().join("gradient.trace.csv").exists());
    assert!(!dir.path().join("gradient.trace.txt").exists());
}

#[test]
fn simulate_rejects_bad_vectors() {
    let dir = TempDir::new().unwrap();
    let ovl = compile_gradient(dir.path());
    let short = dir.path().join("short.in");
    fs::write(&short, "3,5,2,1\n").unwrap();
    let o = tmfu(dir.path(), &["simulate", ovl.to_str().unwrap(), "--inputs", short.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kernel takes 5"), "{}", stderr(&o));

    let junk = dir.path().join("junk.in");
    fs::write(&junk, "3,5,x,1,4\n").unwrap();
    let o = tmfu(dir.path(), &["simulate", ovl.to_str().unwrap(), "--inputs", junk.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(":1:"), "{}", stderr(&o));

    let o = tmfu(
        dir.path(),
        &["simulate", ovl.to_str().unwrap(), "--inputs", short.to_str().unwrap(), "--iterations", "0"],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_full_single_and_bad_tables() {
    let dir = TempDir::new().unwrap();
    let o = tmfu(dir.path(), &["report"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("max area reduction vs SCFU-SCN: 86.5%"), "{text}");
    let o = tmfu(dir.path(), &["report", "--format", "kv"]);
    assert!(stdout(&o).lines().any(|l| l.starts_with("[poly8]")), "{}", stdout(&o));

    let shipped = fs::read_to_string(data("benchmarks.tsv")).unwrap();
    let lines: Vec<&str> = shipped.lines().collect();
    let header = lines.iter().position(|l| l.starts_with("name\t")).unwrap();
    let single = dir.path().join("single.tsv");
    fs::write(&single, format!("{}\n{}\n", lines[..=header].join("\n"), lines[header + 1])).unwrap();
    let o = tmfu(dir.path(), &["report", single.to_str().unwrap(), "--format", "kv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sections: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with('[')).map(String::from).collect();
    assert_eq!(sections, ["[chebyshev]", "[summary]"]);

    let broken = dir.path().join("broken.tsv");
    let cut: Vec<String> = lines
        .iter()
        .map(|l| if l.starts_with('#') { l.to_string() } else { l.rsplit_once('\t').unwrap().0.to_string() })
        .collect();
    fs::write(&broken, cut.join("\n")).unwrap();
    let o = tmfu(dir.path(), &["report", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("benchmark table"), "{}", stderr(&o));
}

#[test]
fn disassembly_matches_schedule() {
    let dir = TempDir::new().unwrap();
    let ovl = compile_gradient(dir.path());
    let o = tmfu(dir.path(), &["disassemble", ovl.to_str().unwrap()]);
    assert!(o.status.success());
    let listing = stdout(&o);
    assert_eq!(listing.lines().count(), 11);
    let sched = fs::read_to_string(dir.path().join("gradient.sched")).unwrap();
    for line in sched.lines().filter_map(|l| l.strip_prefix("fu = ")) {
        let mut parts = line.splitn(3, ' ');
        let fu = parts.next().unwrap();
        let _loads = parts.next();
        let listed: Vec<String> = listing
            .lines()
            .filter_map(|l| l.strip_prefix(&format!("FU{fu}: ")))
            .map(|l| l.split(" [").next().unwrap().to_string())
            .collect();
        let want: Vec<String> = parts.next().unwrap().split(", ").map(str::to_string).collect();
        assert_eq!(listed, want, "FU{fu}");
    }

    let mut bytes = fs::read(&ovl).unwrap();
    bytes[0] = b'X';
    let bad = dir.path().join("bad.ovl");
    fs::write(&bad, bytes).unwrap();
    let o = tmfu(dir.path(), &["disassemble", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));
}

#[test]
fn corpus_matches_oracle() {
    let dir = TempDir::new().unwrap();
    let mut r = rng(42);
    let mut kernels: Vec<PathBuf> = fs::read_dir(data(""))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "kern"))
        .collect();
    kernels.sort();
    assert!(kernels.len() >= 5);
    for k in kernels {
        let dfg = tmfu_core::compile_kernel(&fs::read_to_string(&k).unwrap()).unwrap();
        let vectors: Vec<Vec<i32>> = (0..8).map(|_| random_inputs(&mut r, dfg.free_inputs().len())).collect();
        let text: String = vectors
            .iter()
            .map(|v| v.iter().map(i32::to_string).collect::<Vec<_>>().join(",") + "\n")
            .collect();
        let inp = dir.path().join("vectors.in");
        fs::write(&inp, text).unwrap();
        let o = tmfu(dir.path(), &["simulate", k.to_str().unwrap(), "--inputs", inp.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", k.display(), stderr(&o));
        let stem = k.file_stem().unwrap().to_str().unwrap();
        let out = fs::read_to_string(dir.path().join(format!("{stem}.out"))).unwrap();
        let got: Vec<Vec<i32>> = out
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
            .collect();
        let want: Vec<Vec<i32>> = vectors.iter().map(|v| dfg.evaluate_vector(v).unwrap()).collect();
        assert_eq!(got, want, "{}", k.display());
    }
}

#[test]
fn deterministic_across_runs_and_jobs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let sources: Vec<String> = ["gradient.kern", "cross3.kern", "horner5.kern", "smooth5.kern"]
        .iter()
        .map(|s| data(s).to_str().unwrap().to_string())
        .collect();
    let src: Vec<&str> = sources.iter().map(String::as_str).collect();
    let mut args = vec!["compile"];
    args.extend(&src);
    assert!(tmfu(a.path(), &args).status.success());
    let mut args = vec!["--jobs", "4", "compile"];
    args.extend(&src);
    assert!(tmfu(b.path(), &args).status.success());
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 12);
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn out_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tmfu"))
        .args(["compile", data("gradient.dfg").to_str().unwrap()])
        .env("TMFU_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("gradient.ovl").exists());
}

#[test]
fn clock_flag_changes_throughput() {
    let dir = TempDir::new().unwrap();
    let o = tmfu(dir.path(), &["--clock-mhz", "150", "compile", data("gradient.kern").to_str().unwrap()]);
    assert!(o.status.success());
    let metrics = fs::read_to_string(dir.path().join("gradient.metrics")).unwrap();
    assert_eq!(kv(&metrics, "clock_mhz"), "150");
    assert_eq!(kv(&metrics, "tput_gops"), "0.15");
    let o = tmfu(dir.path(), &["--clock-mhz", "0", "report"]);
    assert_eq!(o.status.code(), Some(1));
}
