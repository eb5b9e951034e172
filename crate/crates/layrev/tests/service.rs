use std::sync::Arc;
use std::time::Duration;

use layrev::config::Classes;
use layrev::corpus::save_corpus;
use layrev::service::{router, AppState, BackendMap, ServiceConfig};
use layrev_core::backend::{BackendError, Capabilities, EchoReviser, GenerationResult, HeuristicConfig, HeuristicReviser, ReviserBackend};
use layrev_core::layout::ClassRegistry;
use layrev_core::prompt::PromptBundle;
use layrev_core::trajectory::{synthesize_corpus, SynthConfig};
use serde_json::{json, Value};

struct Slow<B>(B, Duration);

impl<B: ReviserBackend> ReviserBackend for Slow<B> {
    fn name(&self) -> &str {
        "slow"
    }
    fn capabilities(&self) -> Capabilities {
        self.0.capabilities()
    }
    fn revise(&self, bundle: &PromptBundle) -> Result<GenerationResult, BackendError> {
        std::thread::sleep(self.1);
        self.0.revise(bundle)
    }
}

struct Down;

impl ReviserBackend for Down {
    fn name(&self) -> &str {
        "down"
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities { supports_temperature: false, supports_images: false }
    }
    fn revise(&self, _: &PromptBundle) -> Result<GenerationResult, BackendError> {
        Err(BackendError::Transport { attempts: 3, message: "connection refused".into() })
    }
}

struct Server {
    base: String,
    client: reqwest::Client,
    _data: tempfile::TempDir,
}

fn backends() -> BackendMap {
    let reg = ClassRegistry::material_default();
    let mut map = BackendMap::new();
    map.insert("echo".into(), Arc::new(EchoReviser::new(reg.clone())) as Arc<dyn ReviserBackend>);
    map.insert("heuristic".into(), Arc::new(HeuristicReviser::new(reg.clone(), HeuristicConfig::default())));
    map.insert("slow".into(), Arc::new(Slow(EchoReviser::new(reg), Duration::from_millis(300))));
    map.insert("down".into(), Arc::new(Down));
    map
}

async fn start_in(data: tempfile::TempDir, corpus_dir: Option<std::path::PathBuf>) -> Server {
    let app = AppState::new(ServiceConfig {
        data_dir: data.path().to_path_buf(),
        corpus_dir,
        ttl: Duration::from_secs(3600),
        render_scale: 1,
        classes: Classes::default(),
        backends: backends(),
    })
    .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(app)).await.unwrap() });
    Server { base: format!("http://{addr}"), client: reqwest::Client::new(), _data: data }
}

async fn start() -> Server {
    start_in(tempfile::tempdir().unwrap(), None).await
}

const S0: &str = "CANVAS 360 800\nBUTTON 10 13 100 40 \"Go\"\nTEXT 19 70 200 24\n";

impl Server {
    async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self.client.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str) -> (u16, Value) {
        let resp = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    async fn create(&self, backend: &str) -> String {
        let (status, body) =
            self.post("/sessions", json!({"prompt": "a music player", "s0_dsl": S0, "setup": "single", "backend": backend})).await;
        assert_eq!(status, 201, "{body}");
        body["token"].as_str().unwrap().to_string()
    }
}

#[tokio::test]
async fn create_then_get_has_no_rounds() {
    let srv = start().await;
    let (status, body) = srv.post("/sessions", json!({"prompt": "p", "s0_dsl": S0})).await;
    assert_eq!(status, 201);
    let token = body["token"].as_str().unwrap();
    assert!(body["rendered_png_url"].as_str().unwrap().starts_with("/renders/"));
    let (status, state) = srv.get(&format!("/sessions/{token}")).await;
    assert_eq!(status, 200);
    assert_eq!(state["state"]["rounds"].as_array().unwrap().len(), 0);
    assert_eq!(state["status"], "active");
    assert_eq!(state["echo_flagged"], false);
    assert_eq!(state["backend"], "heuristic");
}

#[tokio::test]
async fn invalid_dsl_is_rejected_with_violations() {
    let srv = start().await;
    let (status, body) = srv.post("/sessions", json!({"prompt": "p", "s0_dsl": "CANVAS 360 800\nBUTTON -4 0 10 10\n"})).await;
    assert_eq!(status, 400);
    assert_eq!(body["violations"][0]["rule"], "negative-coordinate");
    assert_eq!(body["violations"][0]["element"], 0);

    let (status, body) = srv.post("/sessions", json!({"prompt": "p", "s0_dsl": "CANVAS 360 800\nWIDGET 0 0 1 1\n"})).await;
    assert_eq!(status, 400);
    assert_eq!(body["parse_error"]["line"], 2);

    let token = srv.create("echo").await;
    let (status, body) = srv
        .post(&format!("/sessions/{token}/human-edit"), json!({"dsl": "CANVAS 360 800\nBUTTON -8 0 40 40\n"}))
        .await;
    assert_eq!(status, 400);
    assert_eq!(body["ok"], false);
    assert_eq!(body["violations"][0]["rule"], "negative-coordinate");
    let (_, state) = srv.get(&format!("/sessions/{token}")).await;
    assert_eq!(state["state"]["rounds"].as_array().unwrap().len(), 0);
    assert_eq!(state["state"]["human_injections"].as_array().unwrap().len(), 0);
}

#[tokio::test]
async fn bad_requests() {
    let srv = start().await;
    assert_eq!(srv.post("/sessions", json!({"prompt": "p", "s0_dsl": S0, "backend": "nope"})).await.0, 400);
    assert_eq!(srv.post("/sessions", json!({"prompt": "p", "s0_dsl": S0, "setup": "nope"})).await.0, 400);
    assert_eq!(srv.post("/sessions", json!({"s0_dsl": S0})).await.0, 400);
    assert_eq!(srv.post("/sessions", json!({"prompt": "p", "s0_dsl": S0, "max_tokens": 0})).await.0, 400);
}

#[tokio::test]
async fn unknown_session_is_404() {
    let srv = start().await;
    assert_eq!(srv.get("/sessions/deadbeef").await.0, 404);
    assert_eq!(srv.post("/sessions/deadbeef/rounds", json!({})).await.0, 404);
    assert_eq!(srv.post("/sessions/deadbeef/human-edit", json!({"dsl": S0})).await.0, 404);
    assert_eq!(srv.get("/renders/0000000000000000.png").await.0, 404);
}

#[tokio::test]
async fn echo_rounds_flag_at_round_two() {
    let srv = start().await;
    let token = srv.create("echo").await;
    let (s1, r1) = srv.post(&format!("/sessions/{token}/rounds"), json!({})).await;
    assert_eq!(s1, 200);
    assert_eq!(r1["round"]["round"], 1);
    assert_eq!(r1["echo_flagged_at"], Value::Null);
    let (_, r2) = srv.post(&format!("/sessions/{token}/rounds"), json!({})).await;
    assert_eq!(r2["round"]["metrics"]["rouge_l_f1"], 100.0);
    assert_eq!(r2["round"]["metrics"]["identical"], true);
    assert_eq!(r2["echo_flagged_at"], 2);
    assert_eq!(r2["status"], "echo_flagged");
    let (_, state) = srv.get(&format!("/sessions/{token}")).await;
    assert_eq!(state["echo_flagged"], true);
}

#[tokio::test]
async fn human_edit_runs_a_guided_round() {
    let srv = start().await;
    let token = srv.create("echo").await;
    let edit = "CANVAS 360 800\nBUTTON 8 8 96 40 \"Go\"\n";
    let (status, round) = srv.post(&format!("/sessions/{token}/human-edit"), json!({"dsl": edit})).await;
    assert_eq!(status, 200, "{round}");
    assert_eq!(round["round"]["kind"], "human");
    assert_eq!(round["round"]["result"]["code_text"], edit);
    let (_, state) = srv.get(&format!("/sessions/{token}")).await;
    let injections = state["state"]["human_injections"].as_array().unwrap();
    assert_eq!(injections.len(), 1);
    assert_eq!(injections[0]["round"], 1);
}

#[tokio::test]
async fn concurrent_rounds_conflict() {
    let srv = start().await;
    let token = srv.create("slow").await;
    let path = format!("/sessions/{token}/rounds");
    let (a, b) = tokio::join!(srv.post(&path, json!({})), srv.post(&path, json!({})));
    let mut codes = [a.0, b.0];
    codes.sort();
    assert_eq!(codes, [200, 409]);
    let (_, state) = srv.get(&format!("/sessions/{token}")).await;
    assert_eq!(state["state"]["rounds"].as_array().unwrap().len(), 1);

    let edit_path = format!("/sessions/{token}/human-edit");
    let edit = srv.post(&edit_path, json!({"dsl": S0}));
    let (c, d) = tokio::join!(srv.post(&path, json!({})), edit);
    let mut codes = [c.0, d.0];
    codes.sort();
    assert_eq!(codes, [200, 409]);
}

#[tokio::test]
async fn independent_sessions_run_concurrently() {
    let srv = start().await;
    let t1 = srv.create("slow").await;
    let t2 = srv.create("slow").await;
    let (p1, p2) = (format!("/sessions/{t1}/rounds"), format!("/sessions/{t2}/rounds"));
    let (a, b) = tokio::join!(srv.post(&p1, json!({})), srv.post(&p2, json!({})));
    assert_eq!((a.0, b.0), (200, 200));
}

#[tokio::test]
async fn backend_failure_is_502_and_state_unchanged() {
    let srv = start().await;
    let token = srv.create("down").await;
    let (status, body) = srv.post(&format!("/sessions/{token}/rounds"), json!({})).await;
    assert_eq!(status, 502);
    assert!(body["error"].as_str().unwrap().contains("connection refused"));
    assert_eq!(body["ok"], false);
    let (_, state) = srv.get(&format!("/sessions/{token}")).await;
    assert_eq!(state["state"]["rounds"].as_array().unwrap().len(), 0);
}

#[tokio::test]
async fn renders_are_deterministic_pngs() {
    let srv = start().await;
    let (_, body) = srv.post("/sessions", json!({"prompt": "p", "s0_dsl": S0, "backend": "heuristic"})).await;
    let url = format!("{}{}", srv.base, body["rendered_png_url"].as_str().unwrap());
    let a = srv.client.get(&url).send().await.unwrap();
    assert_eq!(a.status(), 200);
    assert_eq!(a.headers()["content-type"], "image/png");
    let a = a.bytes().await.unwrap();
    let b = srv.client.get(&url).send().await.unwrap().bytes().await.unwrap();
    assert_eq!(a, b);
    assert_eq!(&a[..8], b"\x89PNG\r\n\x1a\n");

    let token = body["token"].as_str().unwrap();
    let (_, round) = srv.post(&format!("/sessions/{token}/rounds"), json!({})).await;
    let out = format!("{}{}", srv.base, round["rendered_png_url"].as_str().unwrap());
    assert_eq!(srv.client.get(out).send().await.unwrap().status(), 200);
}

#[tokio::test]
async fn sessions_survive_restart() {
    let data = tempfile::tempdir().unwrap();
    let dir = data.path().to_path_buf();
    let srv = start_in(data, None).await;
    let token = srv.create("echo").await;
    srv.post(&format!("/sessions/{token}/rounds"), json!({})).await;
    let (_, before) = srv.get(&format!("/sessions/{token}")).await;

    let copy = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, copy.path().join(p.file_name().unwrap())).unwrap();
    }
    let again = start_in(copy, None).await;
    let (status, after) = again.get(&format!("/sessions/{token}")).await;
    assert_eq!(status, 200);
    assert_eq!(after, before);
    let png = before["state"]["rounds"][0]["result"]["layout"].clone();
    assert!(png.is_object());
    assert_eq!(again.get(&format!("/sessions/{token}")).await.0, 200);
}

#[tokio::test]
async fn fid_endpoint() {
    let corpus_dir = tempfile::tempdir().unwrap();
    let corpus = synthesize_corpus(24, 5, &SynthConfig::default(), &ClassRegistry::material_default()).unwrap();
    save_corpus(&corpus_dir.path().join("synth.jsonl"), &corpus).unwrap();
    let srv = start_in(tempfile::tempdir().unwrap(), Some(corpus_dir.path().to_path_buf())).await;

    let (status, same) = srv.get("/metrics/fid?a=corpus:synth&b=corpus:synth:final").await;
    assert_eq!(status, 200, "{same}");
    assert!(same["score"].as_f64().unwrap().abs() < 1e-6);
    assert_eq!(same["n1"], 24);

    let (status, diff) = srv.get("/metrics/fid?a=corpus:synth:initial&b=corpus:synth").await;
    assert_eq!(status, 200);
    assert!(diff["score"].as_f64().unwrap() > 0.0);
    assert!(diff["mean_term"].is_number() && diff["trace_term"].is_number());

    let token = srv.create("echo").await;
    assert_eq!(srv.get(&format!("/metrics/fid?a=session:{token}&b=corpus:synth")).await.0, 400);
    srv.post(&format!("/sessions/{token}/rounds"), json!({})).await;
    srv.post(&format!("/sessions/{token}/rounds"), json!({})).await;
    assert_eq!(srv.get(&format!("/metrics/fid?a=session:{token}&b=corpus:synth")).await.0, 200);

    assert_eq!(srv.get("/metrics/fid?a=corpus:missing&b=corpus:synth").await.0, 404);
    assert_eq!(srv.get("/metrics/fid?a=bogus&b=corpus:synth").await.0, 400);
    assert_eq!(srv.get("/metrics/fid?a=corpus:../x&b=corpus:synth").await.0, 400);
}
