use std::time::Duration;

use faithcheck::inference::{GenerationParams, InferenceClient, ModelProfile, Protocol, ResponseCache, RetryPolicy};
use faithcheck::mockmodel::{Failures, MockServer, Reply, Script, ScriptEntry, ScriptSpec};

fn fast_retry() -> RetryPolicy {
    RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(5), max_delay: Duration::from_millis(20) }
}

fn script(entries: Vec<ScriptEntry>) -> Script {
    Script::new(ScriptSpec { default: None, entries }).unwrap()
}

fn client(server: &MockServer) -> InferenceClient {
    InferenceClient::new(ModelProfile::new(server.url(), "mock")).with_retry(fast_retry()).with_api_key(None)
}

#[tokio::test]
async fn scripted_echo() {
    let server = MockServer::start(script(vec![ScriptEntry::exact("classify me", "Negative")]), 0).await.unwrap();
    let c = client(&server);
    let req = c.profile().request("classify me", GenerationParams::default());
    assert_eq!(c.complete(req).await, Ok("Negative".to_string()));
}

#[tokio::test]
async fn raw_generate_protocol_round_trip() {
    let server = MockServer::start(script(vec![ScriptEntry::exact("hi", "there")]), 0).await.unwrap();
    let mut profile = ModelProfile::for_model(server.url(), "tiiuae/falcon-7b-instruct").with_protocol(Protocol::RawGenerate);
    profile.endpoint = server.url();
    let c = InferenceClient::new(profile).with_retry(fast_retry());
    let req = c.profile().request("hi", GenerationParams::default());
    assert_eq!(c.complete(req).await, Ok("there".to_string()));
    let log = server.log();
    assert_eq!(log[0].path, "/generate");
    assert!(log[0].system_prompt.as_deref().unwrap().starts_with("The following is a conversation"));
    assert_eq!(log[0].body["parameters"]["max_new_tokens"], 1024);
}

#[tokio::test]
async fn second_identical_request_served_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let server = MockServer::start(script(vec![ScriptEntry::exact("a", "b")]), 0).await.unwrap();
    let req = ModelProfile::new(server.url(), "mock").request("a", GenerationParams::default());
    let c = client(&server).with_cache(ResponseCache::open(dir.path()).unwrap());
    assert_eq!(c.complete(req.clone()).await, Ok("b".into()));
    // A fresh client over the same directory must not touch the network.
    let c2 = client(&server).with_cache(ResponseCache::open(dir.path()).unwrap());
    let ex = c2.exchange(req).await;
    assert_eq!(ex.response, Ok("b".into()));
    assert!(ex.from_cache);
    assert_eq!(server.hits(), 1);
    assert_eq!(c2.network_calls(), 0);
}

#[tokio::test]
async fn transient_503_is_retried_once() {
    let server =
        MockServer::start(script(vec![ScriptEntry::exact("a", "ok").failing(Failures::Count(1))]), 0).await.unwrap();
    let c = client(&server);
    let req = c.profile().request("a", GenerationParams::default());
    assert_eq!(c.complete(req).await, Ok("ok".into()));
    assert_eq!(server.hits(), 2);
}

#[tokio::test]
async fn non_retryable_status_surfaces_body() {
    let server = MockServer::start(script(vec![]), 0).await.unwrap();
    let c = client(&server);
    let err = c.complete(c.profile().request("nothing", GenerationParams::default())).await.unwrap_err();
    assert!(err.contains("404") && err.contains("no script entry"), "{err}");
    assert_eq!(server.hits(), 1);
}

#[tokio::test]
async fn unreachable_endpoint_fails_after_retries() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let c = InferenceClient::new(ModelProfile::new(url, "m")).with_retry(fast_retry());
    let err = c.complete(c.profile().request("x", GenerationParams::default())).await.unwrap_err();
    assert!(err.starts_with("transport error"), "{err}");
    assert_eq!(c.network_calls(), 4);
}

#[tokio::test]
async fn empty_message_is_rejected_without_network() {
    let server = MockServer::start(script(vec![]), 0).await.unwrap();
    let c = client(&server);
    assert!(c.complete(c.profile().request("  ", GenerationParams::default())).await.is_err());
    assert_eq!(server.hits(), 0);
}

#[tokio::test]
async fn hundred_identical_requests_make_one_call() {
    let server = MockServer::start(script(vec![ScriptEntry::exact("same", "r").with_latency(30)]), 0).await.unwrap();
    let c = client(&server);
    let reqs = vec![c.profile().request("same", GenerationParams::default()); 100];
    let out = c.run_batch(reqs).await;
    assert!(out.iter().all(|e| e.response == Ok("r".into())));
    assert_eq!(server.hits(), 1);
}

#[tokio::test]
async fn parallelism_one_is_sequential() {
    let behavior = |m: &str| Reply::text(m.to_uppercase()).after(Duration::from_millis(5));
    let server = MockServer::start(behavior, 0).await.unwrap();
    let c = client(&server).with_parallelism(1);
    let reqs: Vec<_> = (0..10).map(|i| c.profile().request(format!("m{i}"), GenerationParams::default())).collect();
    let out = c.run_batch(reqs).await;
    assert_eq!(out.iter().map(|e| e.text().unwrap().to_string()).collect::<Vec<_>>(), (0..10).map(|i| format!("M{i}")).collect::<Vec<_>>());
    let mut log = server.log();
    log.sort_by_key(|l| l.started);
    for w in log.windows(2) {
        assert!(w[0].finished <= w[1].started, "overlapping requests");
    }
    assert_eq!(server.max_in_flight(), 1);
}

#[tokio::test]
async fn one_always_failing_request_does_not_stop_the_batch() {
    let mut entries: Vec<_> = (0..10).map(|i| ScriptEntry::exact(format!("q{i}"), format!("a{i}"))).collect();
    entries[3] = ScriptEntry::exact("q3", "never").failing(Failures::Always(faithcheck::mockmodel::AlwaysTag::Always));
    let server = MockServer::start(script(entries), 0).await.unwrap();
    let c = client(&server);
    let reqs: Vec<_> = (0..10).map(|i| c.profile().request(format!("q{i}"), GenerationParams::default())).collect();
    let out = c.run_batch(reqs).await;
    assert_eq!(out.len(), 10);
    for (i, e) in out.iter().enumerate() {
        assert_eq!(e.request.user_message, format!("q{i}"));
        if i == 3 {
            assert!(e.response.as_ref().unwrap_err().contains("503"));
        } else {
            assert_eq!(e.response, Ok(format!("a{i}")));
        }
    }
}

#[tokio::test]
async fn api_key_is_sent_as_bearer_token() {
    let server = MockServer::start(|_: &str| Reply::text("ok"), 0).await.unwrap();
    let c = client(&server).with_api_key(Some("sekrit".into()));
    c.complete(c.profile().request("x", GenerationParams::default())).await.unwrap();
    let c = client(&server);
    c.complete(c.profile().request("y", GenerationParams::default())).await.unwrap();
    let log = server.log();
    let auth = |m: &str| log.iter().find(|l| l.user_message == m).unwrap().authorization.clone();
    assert_eq!(auth("x").as_deref(), Some("Bearer sekrit"));
    assert_eq!(auth("y"), None);
}
