//! End-to-end tests of the `sgl` binary.

use serde_json::{json, Value as Json};
use sgl::scenarios::{self, Scenario};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;
use tempfile::TempDir;

fn sgl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sgl"))
}

fn run(args: &[&str]) -> Output {
    sgl().args(args).output().expect("the binary starts")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a scenario's source and world into `dir`.
fn fixture(dir: &Path, sc: &Scenario) -> (String, String) {
    let src = dir.join(format!("{}.sgl", sc.name));
    let world = dir.join(format!("{}.json", sc.name));
    std::fs::write(&src, sc.source).unwrap();
    std::fs::write(&world, sc.world.to_string()).unwrap();
    (src.to_string_lossy().into(), world.to_string_lossy().into())
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into()
}

fn read_json(p: impl AsRef<Path>) -> Json {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn ops(j: &Json, out: &mut Vec<String>) {
    if let Some(op) = j.get("op").and_then(Json::as_str) {
        out.push(op.to_ascii_lowercase());
    }
    match j {
        Json::Array(xs) => xs.iter().for_each(|x| ops(x, out)),
        Json::Object(m) => m.values().for_each(|x| ops(x, out)),
        _ => {}
    }
}

#[test]
fn compile_emits_plans_with_a_join_and_an_aggregate() {
    let dir = TempDir::new().unwrap();
    let (src, _) = fixture(dir.path(), &scenarios::fig2_count(10, 1));
    let o = run(&["compile", &src, "--emit-plan", "--profile", "uniform"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let plan: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(plan["classes"][0]["class"], "Unit");
    let mut found = Vec::new();
    ops(&plan, &mut found);
    assert!(found.iter().any(|o| o.contains("join")), "{found:?}");
    assert!(found.iter().any(|o| o.contains("aggregate")), "{found:?}");
}

#[test]
fn compile_emits_the_schema() {
    let dir = TempDir::new().unwrap();
    let (src, _) = fixture(dir.path(), &scenarios::fig2_count(10, 1));
    let out = path(&dir, "schema.json");
    let o = run(&["compile", &src, "--emit-schema", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(std::fs::read_to_string(&out).unwrap().contains("Unit"));
}

#[test]
fn effect_read_in_a_script_exits_1_with_its_code() {
    let dir = TempDir::new().unwrap();
    let src = path(&dir, "bad.sgl");
    std::fs::write(
        &src,
        "class A {\n  state:\n    number x = 0;\n  effects:\n    number e : sum;\n  update:\n    x = e;\n}\n\nrun go(this: A) {\n  e <- e + 1;\n}\n",
    )
    .unwrap();
    let o = run(&["compile", &src]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("E_READ_EFFECT"), "{err}");
    assert!(err.contains("bad.sgl:11:"), "diagnostics carry file and line: {err}");
}

#[test]
fn missing_source_exits_2() {
    let o = run(&["compile", "/nonexistent/prog.sgl"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn malformed_world_exits_1() {
    let dir = TempDir::new().unwrap();
    let (src, _) = fixture(dir.path(), &scenarios::fig2_count(10, 1));
    let world = path(&dir, "w.json");
    std::fs::write(&world, r#"{"objects": [{"class": "Nope", "id": 1}]}"#).unwrap();
    let o = run(&["run", &src, "--world", &world, "--ticks", "1"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn both_engines_and_any_worker_count_agree() {
    let dir = TempDir::new().unwrap();
    let (src, world) = fixture(dir.path(), &scenarios::duping(12, 4));
    let dump = |name: &str, extra: &[&str]| -> Json {
        let out = path(&dir, name);
        let mut args = vec!["run", &src, "--world", &world, "--ticks", "15", "--out", &out];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        read_json(&out)
    };
    let rel = dump("rel.json", &[]);
    assert_eq!(rel, dump("ref.json", &["--engine", "reference"]));
    assert_eq!(rel, dump("w4.json", &["--workers", "4"]));
    assert_eq!(rel, dump("pinned.json", &["--pin-plan", "clustered", "--workers", "3"]));
}

#[test]
fn zero_ticks_leaves_the_world_unchanged() {
    let dir = TempDir::new().unwrap();
    let (src, world) = fixture(dir.path(), &scenarios::npc_quest(8, 2, false));
    let out = path(&dir, "out.json");
    let o = run(&["run", &src, "--world", &world, "--ticks", "0", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let before = read_json(&world);
    let after = read_json(&out);
    let count = |j: &Json| j["objects"].as_array().map_or(0, Vec::len);
    assert_eq!(count(&before), count(&after));
    for (b, a) in before["objects"].as_array().unwrap().iter().zip(after["objects"].as_array().unwrap()) {
        assert_eq!(b["id"], a["id"]);
        for (k, v) in b["fields"].as_object().into_iter().flatten() {
            let same = match (v.as_f64(), a["fields"][k].as_f64()) {
                (Some(x), Some(y)) => x == y,
                _ => a["fields"][k] == *v,
            };
            assert!(same, "object {} field {k}: {v} became {}", b["id"], a["fields"][k]);
        }
    }
}

#[test]
fn trace_dumps_and_checkpoints_are_written() {
    let dir = TempDir::new().unwrap();
    let (src, world) = fixture(dir.path(), &scenarios::duping(6, 1));
    let trace = path(&dir, "trace.ndjson");
    let dumps = path(&dir, "dumps");
    let o = run(&[
        "run", &src, "--world", &world, "--ticks", "4", "--trace", &trace, "--trace-effects", "*",
        "--dump-state-every", "2", "--checkpoint-every", "4", "--dump-dir", &dumps,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("ran 4 ticks"), "{}", stderr(&o));
    let text = std::fs::read_to_string(&trace).unwrap();
    let records: Vec<Json> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records[0]["kind"], "header");
    assert_eq!(records[0]["payload"]["ticks"], 4);
    assert!(records[0]["payload"]["unitHash"].is_string());
    assert!(records.iter().any(|r| r["kind"] == "effectEntry"));
    assert!(records.iter().any(|r| r["kind"] == "txnOutcome"));
    let seqs: Vec<u64> = records.iter().map(|r| r["seq"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "sequence numbers are consecutive");
    for f in ["state-000000.json", "state-000002.json", "state-000004.json", "checkpoint-000004.json"] {
        assert!(Path::new(&dumps).join(f).exists(), "{f}");
    }
}

#[test]
fn resume_continues_where_the_checkpoint_left_off() {
    let dir = TempDir::new().unwrap();
    let (src, world) = fixture(dir.path(), &scenarios::npc_quest(10, 3, false));
    let (ck, straight, resumed) = (path(&dir, "ck.json"), path(&dir, "a.json"), path(&dir, "b.json"));
    assert_eq!(code(&run(&["run", &src, "--world", &world, "--ticks", "10", "--out", &straight])), 0);
    assert_eq!(code(&run(&["run", &src, "--world", &world, "--ticks", "4", "--checkpoint", &ck])), 0);
    let o = run(&["run", &src, "--resume", &ck, "--ticks", "6", "--out", &resumed]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("tick 10"), "{}", stderr(&o));
    assert_eq!(read_json(&straight), read_json(&resumed));
}

#[test]
fn config_file_is_merged_under_explicit_flags() {
    let dir = TempDir::new().unwrap();
    let (src, world) = fixture(dir.path(), &scenarios::duping(8, 5));
    let config = path(&dir, "config.json");
    let mut c = serde_json::to_value(sgl::runtime::EngineConfig::default()).unwrap();
    c["seed"] = json!(99);
    c["workers"] = json!(2);
    std::fs::write(&config, c.to_string()).unwrap();
    let header = |extra: &[&str]| -> Json {
        let trace = path(&dir, &format!("t{}.ndjson", extra.len()));
        let mut args = vec!["run", &src, "--world", &world, "--ticks", "1", "--config", &config, "--trace", &trace];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let first = std::fs::read_to_string(&trace).unwrap().lines().next().unwrap().to_string();
        serde_json::from_str::<Json>(&first).unwrap()["payload"]["config"].clone()
    };
    let from_file = header(&[]);
    assert_eq!(from_file["seed"], 99);
    assert_eq!(from_file["workers"], 2);
    let overridden = header(&["--seed", "7"]);
    assert_eq!(overridden["seed"], 7);
    assert_eq!(overridden["workers"], 2);
}

#[test]
fn invalid_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let (src, world) = fixture(dir.path(), &scenarios::duping(4, 1));
    let config = path(&dir, "config.json");
    std::fs::write(&config, "{\"workers\": \"many\"}").unwrap();
    let o = run(&["run", &src, "--world", &world, "--config", &config]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn bench_prints_a_row_per_size() {
    let o = run(&["bench", "--sizes", "50,100", "--ticks", "2", "--json", "-"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("speedup"), "{out}");
    assert!(out.lines().any(|l| l.trim_start().starts_with("100 ")), "{out}");
    let o = run(&["bench", "--scenario", "nope"]);
    assert_eq!(code(&o), 1);
}

/// A `sgl debug` child that is killed if a test fails.
struct Server {
    child: Option<Child>,
    addr: String,
}

impl Server {
    fn start(args: &[&str]) -> Server {
        let mut child = sgl()
            .arg("debug")
            .args(args)
            .args(["--port", "0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("sgl debug listening on http://")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        Server { child: Some(child), addr }
    }

    /// One HTTP/1.1 exchange; returns (status, JSON body).
    fn call(&self, method: &str, target: &str, body: &str) -> (u16, Json) {
        let mut s = TcpStream::connect(&self.addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
        write!(
            s,
            "{method} {target} HTTP/1.1\r\nHost: {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            self.addr,
            body.len()
        )
        .unwrap();
        let mut raw = String::new();
        s.read_to_string(&mut raw).unwrap();
        let (head, rest) = raw.split_once("\r\n\r\n").expect("a complete response");
        let status = head.split(' ').nth(1).unwrap().parse().unwrap();
        (status, serde_json::from_str(rest).unwrap_or(Json::String(rest.into())))
    }

    fn interrupt(mut self) -> Output {
        let child = self.child.take().unwrap();
        let ok = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
        assert!(ok.success());
        child.wait_with_output().unwrap()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(c) = &mut self.child {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

#[test]
fn debug_server_steps_serves_state_and_checkpoints_on_interrupt() {
    let dir = TempDir::new().unwrap();
    let (src, world) = fixture(dir.path(), &scenarios::fig2_count(30, 2));
    let ck: PathBuf = dir.path().join("exit.json");
    let server = Server::start(&[&src, "--world", &world, "--checkpoint-on-exit", ck.to_str().unwrap()]);
    let (status, page) = server.call("GET", "/", "");
    assert_eq!(status, 200);
    assert!(page.as_str().unwrap_or_default().contains("<html"), "{page}");
    for _ in 0..3 {
        let (status, _) = server.call("POST", "/step", "{}");
        assert_eq!(status, 200);
    }
    let (status, state) = server.call("GET", "/state/Unit", "");
    assert_eq!(status, 200);
    assert_eq!(state["tick"], 3);
    assert_eq!(state["rows"].as_array().unwrap().len(), 30);
    let (status, err) = server.call("GET", "/state/Nope", "");
    assert_eq!(status, 404, "{err}");
    let o = server.interrupt();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = read_json(&ck);
    assert!(doc["checksum"].is_string());

    // The checkpoint resumes at tick 3.
    let out = dir.path().join("resumed.json");
    let o = run(&["run", &src, "--resume", ck.to_str().unwrap(), "--ticks", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("tick 4"), "{}", stderr(&o));
}

#[test]
fn debug_with_a_bad_world_exits_1() {
    let dir = TempDir::new().unwrap();
    let (src, _) = fixture(dir.path(), &scenarios::fig2_count(5, 1));
    let world = path(&dir, "w.json");
    std::fs::write(&world, "[1, 2").unwrap();
    let o = run(&["debug", &src, "--world", &world, "--port", "0"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn debug_on_a_busy_port_exits_2() {
    let dir = TempDir::new().unwrap();
    let (src, world) = fixture(dir.path(), &scenarios::fig2_count(5, 1));
    let busy = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    let o = run(&["debug", &src, "--world", &world, "--port", &port]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}
