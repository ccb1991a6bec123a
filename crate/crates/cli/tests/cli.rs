use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn olp(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_olp"))
        .arg("--config")
        .arg(data("olp.toml"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CYCLIC_OLP: &str = r#"{"plan": [{
    "step": 1, "action": "pick and place",
    "required_objects": ["first block", "second block"],
    "object_states": {
        "first block": {"preconditions": ["under nothing"], "effects": ["on second block"]},
        "second block": {"preconditions": ["under nothing"], "effects": ["on first block"]}
    },
    "instruction": "Put each block on the other."
}]}"#;

#[test]
fn plan_replays_two_block_tower() {
    let dir = tempfile::tempdir().unwrap();
    let scene = data("examples/two_red_blocks.json");
    let o = olp(dir.path(), &["plan", "Make a tower of 2 red blocks", path(&scene)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let plan = std::fs::read_to_string(dir.path().join("plan.txt")).unwrap();
    assert_eq!(plan.lines().count(), 2, "{plan}");
    for f in ["transcripts.json", "olp.json", "binding.json", "problems/unit_01.pddl"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }

    let exec_dir = dir.path().join("exec");
    let o = olp(&exec_dir, &["exec", path(&scene), path(&dir.path().join("plan.txt"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = std::fs::read_to_string(exec_dir.join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    assert!(exec_dir.join("final_scene.json").exists());
}

#[test]
fn plan_with_missing_scene_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let o = olp(dir.path(), &["plan", "Make a tower of 3 blocks", "no/such/scene.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/scene.json"), "{}", stderr(&o));
}

#[test]
fn json_flag_reports_errors_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let o = olp(dir.path(), &["--json", "plan", "Make a tower of 3 blocks", "missing.json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["exit_code"], 2);
}

#[test]
fn exec_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let scene = data("examples/two_blocks.json");

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let o = olp(&dir.path().join("a"), &["exec", path(&scene), path(&empty)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    // The second pick fails: the hand is already holding block_2.
    let broken = dir.path().join("broken.txt");
    std::fs::write(&broken, "(pick block_2 table)\n(pick block_1 table)\n(place block_2 block_1)\n").unwrap();
    let o = olp(&dir.path().join("b"), &["exec", path(&scene), path(&broken)]);
    assert_eq!(o.status.code(), Some(1));
    let trace = std::fs::read_to_string(dir.path().join("b/trace.jsonl")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].contains("hand_occupied"), "{}", lines[1]);

    let o = olp(&dir.path().join("c"), &["exec", path(&scene), "no_plan.txt"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn foon2pddl_writes_one_problem_per_unit() {
    let dir = tempfile::tempdir().unwrap();
    let o = olp(dir.path(), &["foon2pddl", path(&data("examples/two_block_olp.json")), path(&data("examples/two_blocks.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 1);
    let text = std::fs::read_to_string(dir.path().join("unit_01.pddl")).unwrap();
    assert!(text.contains("(:goal"), "{text}");
}

#[test]
fn foon2pddl_three_units() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("olp.json");
    let unit = |step: usize, lower: &str, upper: &str, below: Option<&str>| {
        let lower_pre = if below.is_some() { r#"["under nothing"]"#.to_string() } else { r#"["under nothing", "on table"]"#.to_string() };
        format!(
            r#"{{"step": {step}, "action": "pick and place", "required_objects": ["{lower}", "{upper}"],
            "object_states": {{"{lower}": {{"preconditions": {lower_pre}, "effects": ["under {upper}"]}},
                               "{upper}": {{"preconditions": ["under nothing", "on table"], "effects": ["on {lower}", "under nothing"]}}}},
            "instruction": "Pick and place {upper} on {lower}."}}"#
        )
    };
    let units = [
        unit(1, "first block", "second block", None),
        unit(2, "second block", "third block", Some("first block")),
        unit(3, "third block", "fourth block", Some("second block")),
    ];
    std::fs::write(&plan, format!(r#"{{"plan": [{}]}}"#, units.join(","))).unwrap();
    let out = dir.path().join("out");
    let o = olp(&out, &["foon2pddl", path(&plan), path(&data("examples/messy_tower.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    for i in 1..=3 {
        assert!(out.join(format!("unit_{i:02}.pddl")).exists());
    }
}

#[test]
fn foon2pddl_unbound_alias_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let binding = dir.path().join("binding.json");
    std::fs::write(&binding, r#"{"first block": "block_1"}"#).unwrap();
    let o = olp(
        &dir.path().join("out"),
        &["foon2pddl", path(&data("examples/two_block_olp.json")), path(&data("examples/two_blocks.json")), "--binding", path(&binding)],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("second block"), "{}", stderr(&o));
}

#[test]
fn foon2pddl_unsolvable_unit_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("olp.json");
    std::fs::write(&plan, CYCLIC_OLP).unwrap();
    let o = olp(&dir.path().join("out"), &["foon2pddl", path(&plan), path(&data("examples/two_blocks.json"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn bench_is_deterministic_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("m.toml");
    std::fs::write(
        &matrix,
        "approaches = [\"OLP\", \"LLM+P\"]\nseeds = [11]\ntrials = 2\ntiming = \"off\"\n[[task]]\nsetting = \"Tower\"\nkind = \"tower\"\nheight = 3\n",
    )
    .unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = extra.to_vec();
        args.extend_from_slice(&["bench", path(&matrix)]);
        let o = olp(&out, &args);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("a", &["--jobs", "2"]);
    let b = run("b", &["--jobs", "1"]);
    let csv_a = std::fs::read_to_string(a.join("report.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read_to_string(b.join("report.csv")).unwrap());
    assert_eq!(csv_a.lines().count(), 3, "{csv_a}");
    assert_eq!(std::fs::read_to_string(a.join("records.jsonl")).unwrap().lines().count(), 4);

    let md = run("md", &["--jobs", "2", "--format", "markdown"]);
    let text = std::fs::read_to_string(md.join("report.md")).unwrap();
    assert!(text.lines().all(|l| l.starts_with('|')), "{text}");
}

#[test]
fn bench_rejects_unknown_approach() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("m.toml");
    std::fs::write(&matrix, "approaches = [\"SayCan\"]\nseeds = [1]\ntrials = 1\n[[task]]\nkind = \"tower\"\nheight = 3\n").unwrap();
    let o = olp(&dir.path().join("out"), &["bench", path(&matrix)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
