use std::collections::BTreeMap;
use std::path::Path;

use ahclip_core::inference::mock::{MockServer, Scenario, Scripted};
use ahclip_core::inference::{
    predict_clip, run_batch, Backoff, ChatClient, InferenceError, InferenceOptions, ModelEndpoint,
    Verdict,
};
use ahclip_core::{ClipRecord, ClipSpec, PromptVariant, TimeInterval};

fn fast_client() -> ChatClient {
    ChatClient::new(InferenceOptions {
        backoff: Backoff {
            base_s: 0.01,
            factor: 2.0,
            max_s: 0.05,
        },
        ..InferenceOptions::default()
    })
    .unwrap()
}

fn prompt() -> PromptVariant {
    PromptVariant {
        variant_id: "test".into(),
        text: "Does this clip show A/H?".into(),
    }
}

fn clips(dir: &Path, video: &str, n: usize) -> Vec<ClipRecord> {
    (0..n)
        .map(|i| {
            let window = TimeInterval::from_millis(i as i64 * 5000, (i as i64 + 1) * 5000).unwrap();
            let spec = ClipSpec::new(video, window, None);
            let path = dir.join(format!("{video}_{i}.mp4"));
            std::fs::write(&path, format!("clip {i}")).unwrap();
            ClipRecord {
                spec,
                video_path: path,
                audio_path: None,
            }
        })
        .collect()
}

fn endpoint(id: &str, server: &MockServer, max_retries: u32) -> ModelEndpoint {
    ModelEndpoint {
        max_retries,
        timeout_s: 10.0,
        ..ModelEndpoint::new(id, &server.base_url())
    }
}

fn scripted(pairs: &[(&str, Scripted)]) -> Scenario {
    Scenario {
        responses: pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
        ..Scenario::default()
    }
}

#[tokio::test]
async fn predict_clip_follows_script() {
    let dir = tempfile::tempdir().unwrap();
    let cs = clips(dir.path(), "v", 2);
    let server = MockServer::start(scripted(&[
        (cs[0].clip_id(), Scripted::Text("<answer>Yes</answer>".into())),
        (cs[1].clip_id(), Scripted::Text("maybe".into())),
    ]))
    .await
    .unwrap();
    let client = fast_client();
    let ep = endpoint("m", &server, 0);

    let yes = predict_clip(&client, &ep, &cs[0], &prompt()).await.unwrap();
    assert_eq!(yes.verdict, Verdict::Positive);
    assert_eq!(yes.attempts, 1);
    assert_eq!(yes.model_id, "m");
    assert_eq!(yes.video_id, "v");

    let maybe = predict_clip(&client, &ep, &cs[1], &prompt()).await.unwrap();
    assert_eq!(maybe.verdict, Verdict::Abstain);
    assert_eq!(maybe.raw_text, "maybe");

    let seen = server.requests();
    assert_eq!(seen.len(), 2);
    assert_eq!(seen[0].prompt.as_deref(), Some("Does this clip show A/H?"));
    assert_eq!(seen[0].temperature, Some(0.0));
    assert_eq!(seen[0].max_tokens, Some(16));
    assert!(seen[0].has_video && !seen[0].has_audio);
}

#[tokio::test]
async fn retries_until_success() {
    let dir = tempfile::tempdir().unwrap();
    let cs = clips(dir.path(), "v", 1);
    let server = MockServer::start(scripted(&[(
        cs[0].clip_id(),
        Scripted::Fail {
            fail: ahclip_core::inference::mock::FailCount::Times(2),
            then: Some("<answer>Yes</answer>".into()),
            status: None,
        },
    )]))
    .await
    .unwrap();
    let pred = predict_clip(&fast_client(), &endpoint("m", &server, 3), &cs[0], &prompt())
        .await
        .unwrap();
    assert_eq!(pred.verdict, Verdict::Positive);
    assert_eq!(pred.attempts, 3);
    assert_eq!(server.stats().total_requests, 3);
}

#[tokio::test]
async fn retries_exhausted_reports_status() {
    let dir = tempfile::tempdir().unwrap();
    let cs = clips(dir.path(), "v", 1);
    let server = MockServer::start(
        Scenario::from_json(&format!(r#"{{"{}": {{"fail": "always"}}}}"#, cs[0].clip_id())).unwrap(),
    )
    .await
    .unwrap();
    let err = predict_clip(&fast_client(), &endpoint("m", &server, 2), &cs[0], &prompt())
        .await
        .unwrap_err();
    match err {
        InferenceError::Endpoint {
            status, attempts, ..
        } => {
            assert_eq!(status, 503);
            assert_eq!(attempts, 3);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let dir = tempfile::tempdir().unwrap();
    let cs = clips(dir.path(), "v", 1);
    // no script and no default: the mock answers 404
    let server = MockServer::start(Scenario::default()).await.unwrap();
    let err = predict_clip(&fast_client(), &endpoint("m", &server, 3), &cs[0], &prompt())
        .await
        .unwrap_err();
    assert!(matches!(err, InferenceError::Endpoint { status: 404, attempts: 1, .. }));
}

#[tokio::test]
async fn transport_failure_after_retries() {
    let dir = tempfile::tempdir().unwrap();
    let cs = clips(dir.path(), "v", 1);
    // bind then drop to get a port nobody listens on
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let ep = ModelEndpoint {
        max_retries: 1,
        ..ModelEndpoint::new("m", &format!("http://127.0.0.1:{port}/v1"))
    };
    let err = predict_clip(&fast_client(), &ep, &cs[0], &prompt())
        .await
        .unwrap_err();
    assert!(matches!(err, InferenceError::Transport { attempts: 2, .. }), "{err:?}");
}

#[tokio::test]
async fn bearer_token_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cs = clips(dir.path(), "v", 1);
    let server = MockServer::start(Scenario {
        default: Some("<answer>No</answer>".into()),
        ..Scenario::default()
    })
    .await
    .unwrap();
    std::env::set_var("AHCLIP_TEST_TOKEN", "s3cret");
    let ep = ModelEndpoint {
        auth_token_env: Some("AHCLIP_TEST_TOKEN".into()),
        ..endpoint("m", &server, 0)
    };
    predict_clip(&fast_client(), &ep, &cs[0], &prompt()).await.unwrap();
    assert_eq!(
        server.requests()[0].authorization.as_deref(),
        Some("Bearer s3cret")
    );

    let missing = ModelEndpoint {
        auth_token_env: Some("AHCLIP_TEST_TOKEN_UNSET".into()),
        ..endpoint("m", &server, 0)
    };
    assert!(matches!(
        predict_clip(&fast_client(), &missing, &cs[0], &prompt()).await,
        Err(InferenceError::Config(_))
    ));
}

#[tokio::test]
async fn batch_cardinality_single_and_multi_model() {
    let dir = tempfile::tempdir().unwrap();
    let cs = clips(dir.path(), "v", 4);
    let scenario = Scenario {
        default: Some("<answer>Yes</answer>".into()),
        ..Scenario::default()
    };
    let servers = [
        MockServer::start(scenario.clone()).await.unwrap(),
        MockServer::start(scenario.clone()).await.unwrap(),
        MockServer::start(scenario).await.unwrap(),
    ];
    let client = fast_client();

    let one = run_batch(&client, &cs, &[endpoint("a", &servers[0], 0)], &prompt(), 2)
        .await
        .unwrap();
    assert_eq!(one.prediction_count(), 4);
    assert!(one.failures.is_empty());

    let eps: Vec<_> = servers
        .iter()
        .zip(["a", "b", "c"])
        .map(|(s, id)| endpoint(id, s, 0))
        .collect();
    let three = run_batch(&client, &cs, &eps, &prompt(), 2).await.unwrap();
    assert_eq!(three.prediction_count(), 12);
    for id in ["a", "b", "c"] {
        let keys: Vec<_> = three.predictions[id].keys().cloned().collect();
        let mut expected: Vec<_> = cs.iter().map(|c| c.clip_id().to_string()).collect();
        expected.sort();
        assert_eq!(keys, expected);
    }
}

#[tokio::test]
async fn batch_isolates_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cs = clips(dir.path(), "v", 4);
    let mut scenario = Scenario::from_json(&format!(
        r#"{{"responses": {{"{}": {{"fail": "always"}}}}, "default": "<answer>No</answer>"}}"#,
        cs[2].clip_id()
    ))
    .unwrap();
    scenario.delay_ms = 0;
    let server = MockServer::start(scenario).await.unwrap();
    let set = run_batch(&fast_client(), &cs, &[endpoint("m", &server, 1)], &prompt(), 3)
        .await
        .unwrap();
    assert_eq!(set.prediction_count(), 3);
    assert_eq!(set.failures.len(), 1);
    assert_eq!(set.failures[0].clip_id, cs[2].clip_id());
    assert_eq!(set.failures[0].model_id, "m");
    assert!(set.failures[0].error.contains("503"));
}

#[tokio::test]
async fn batch_respects_in_flight_cap() {
    let dir = tempfile::tempdir().unwrap();
    let cs = clips(dir.path(), "v", 12);
    let scenario = Scenario {
        default: Some("<answer>Yes</answer>".into()),
        delay_ms: 40,
        ..Scenario::default()
    };
    for cap in [1usize, 3] {
        let server = MockServer::start(scenario.clone()).await.unwrap();
        run_batch(&fast_client(), &cs, &[endpoint("m", &server, 0)], &prompt(), cap)
            .await
            .unwrap();
        let stats = server.stats();
        assert_eq!(stats.total_requests, 12);
        assert!(stats.peak_in_flight <= cap, "peak {} > cap {cap}", stats.peak_in_flight);
        assert!(stats.peak_in_flight >= 1);
    }
}

#[tokio::test]
async fn batch_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let mut cs = clips(dir.path(), "v", 2);
    let server = MockServer::start(Scenario::default()).await.unwrap();
    let ep = endpoint("m", &server, 0);
    assert!(matches!(
        run_batch(&fast_client(), &cs, &[ep.clone()], &prompt(), 0).await,
        Err(InferenceError::Config(_))
    ));
    assert!(matches!(
        run_batch(&fast_client(), &cs, &[ep.clone(), ep.clone()], &prompt(), 1).await,
        Err(InferenceError::Config(_))
    ));
    cs.push(cs[0].clone());
    assert!(matches!(
        run_batch(&fast_client(), &cs, &[ep], &prompt(), 1).await,
        Err(InferenceError::Config(_))
    ));
}

#[tokio::test]
async fn batch_results_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cs = clips(dir.path(), "v", 6);
    let responses: BTreeMap<String, Scripted> = cs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let text = if i % 2 == 0 { "<answer>Yes</answer>" } else { "<answer>No</answer>" };
            (c.clip_id().to_string(), Scripted::Text(text.into()))
        })
        .collect();
    let scenario = Scenario {
        responses,
        ..Scenario::default()
    };
    let strip = |set: ahclip_core::inference::PredictionSet| {
        set.iter()
            .map(|p| (p.clip_id.clone(), p.verdict, p.raw_text.clone()))
            .collect::<Vec<_>>()
    };
    let a = MockServer::start(scenario.clone()).await.unwrap();
    let b = MockServer::start(scenario).await.unwrap();
    let first = run_batch(&fast_client(), &cs, &[endpoint("m", &a, 0)], &prompt(), 4)
        .await
        .unwrap();
    let second = run_batch(&fast_client(), &cs, &[endpoint("m", &b, 0)], &prompt(), 2)
        .await
        .unwrap();
    assert_eq!(strip(first), strip(second));
}
