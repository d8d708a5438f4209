//! Integration tests for the HTTP provider adapters against a local mock
//! server speaking the documented wire protocol.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use fseb::context::{
    build_prompt, encode_png, ContextImage, ContextServices, HttpProvider, ServiceEndpoint,
};
use fseb::error::Error;
use fseb::rng::RngStream;

fn demo_image(seed: u64, size: usize) -> ContextImage {
    let mut rng = RngStream::from_seed(seed);
    let vals: Vec<f64> = (0..size * size).map(|_| rng.uniform()).collect();
    ContextImage::from_unit_floats(size, size, &vals)
}

fn b64(bytes: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

/// Spawn a mock server answering `n_requests` requests via `handler`,
/// returning its base URL.
fn spawn_mock<F>(n_requests: usize, handler: F) -> (String, std::thread::JoinHandle<()>)
where
    F: Fn(usize, &str, &serde_json::Value) -> (u16, serde_json::Value) + Send + 'static,
{
    let server = tiny_http::Server::http("127.0.0.1:0").expect("bind mock server");
    let port = server.server_addr().to_ip().expect("ip addr").port();
    let handle = std::thread::spawn(move || {
        for i in 0..n_requests {
            let Ok(mut request) = server.recv() else {
                return;
            };
            let mut body = String::new();
            let _ = request.as_reader().read_to_string(&mut body);
            let parsed: serde_json::Value =
                serde_json::from_str(&body).unwrap_or(serde_json::Value::Null);
            let url = request.url().to_string();
            let (status, reply) = handler(i, &url, &parsed);
            let response = tiny_http::Response::from_string(reply.to_string())
                .with_status_code(status)
                .with_header(
                    tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                        .expect("header"),
                );
            let _ = request.respond(response);
        }
    });
    (format!("http://127.0.0.1:{port}"), handle)
}

fn endpoint(base_url: &str, retries: u32) -> ServiceEndpoint {
    ServiceEndpoint {
        base_url: base_url.to_string(),
        model: "mock-model".into(),
        timeout_s: 5.0,
        retry_budget: retries,
        auth_env: None,
    }
}

#[test]
fn server_errors_exhaust_retry_budget() {
    let hits = Arc::new(AtomicUsize::new(0));
    let hits_clone = hits.clone();
    let (url, handle) = spawn_mock(3, move |_, _, _| {
        hits_clone.fetch_add(1, Ordering::SeqCst);
        (500, serde_json::json!({"error": "boom"}))
    });
    let provider = HttpProvider::new(endpoint(&url, 2)).unwrap();
    let img = demo_image(1, 8);
    let err = provider.summarize(&[img], "style").unwrap_err();
    assert!(matches!(err, Error::Service(_)), "{err}");
    handle.join().unwrap();
    // budget 2 means three attempts total
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let hits = Arc::new(AtomicUsize::new(0));
    let hits_clone = hits.clone();
    let (url, handle) = spawn_mock(1, move |_, _, _| {
        hits_clone.fetch_add(1, Ordering::SeqCst);
        (400, serde_json::json!({"error": "bad request"}))
    });
    let provider = HttpProvider::new(endpoint(&url, 3)).unwrap();
    let err = provider
        .summarize(&[demo_image(2, 8)], "style")
        .unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    handle.join().unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn generation_decodes_returned_pngs() {
    let img_a = demo_image(3, 8);
    let img_b = demo_image(4, 8);
    let png_a = b64(&encode_png(&img_a).unwrap());
    let png_b = b64(&encode_png(&img_b).unwrap());
    let (url, handle) = spawn_mock(1, move |_, path, body| {
        assert_eq!(path, "/generate");
        assert_eq!(body["model"], "mock-model");
        assert_eq!(body["n"], 2);
        assert_eq!(body["width"], 8);
        (200, serde_json::json!({"images": [png_a, png_b]}))
    });
    let provider = HttpProvider::new(endpoint(&url, 0)).unwrap();
    let prompt = build_prompt("req", "summary", "class-0", 2, 8);
    let images = provider
        .synthesize(&prompt, 2, &mut RngStream::from_seed(0))
        .unwrap();
    handle.join().unwrap();
    assert_eq!(images.len(), 2);
    assert_eq!(images[0], img_a);
    assert_eq!(images[1], img_b);
}

#[test]
fn generation_size_mismatch_is_protocol_error() {
    let wrong = demo_image(5, 16); // 16x16 instead of the requested 8x8
    let png = b64(&encode_png(&wrong).unwrap());
    let (url, handle) = spawn_mock(1, move |_, _, _| {
        (200, serde_json::json!({"images": [png]}))
    });
    let provider = HttpProvider::new(endpoint(&url, 0)).unwrap();
    let prompt = build_prompt("req", "summary", "c", 1, 8);
    let err = provider
        .synthesize(&prompt, 1, &mut RngStream::from_seed(0))
        .unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    handle.join().unwrap();
}

#[test]
fn embeddings_carry_provider_dimension() {
    // the paper-scale provider emits 1152-dimensional rows
    let d = 1152usize;
    let (url, handle) = spawn_mock(1, move |_, path, body| {
        assert_eq!(path, "/embeddings");
        let n = body["inputs"].as_array().unwrap().len();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..d).map(|j| (i * d + j) as f64 * 1e-3).collect())
            .collect();
        (200, serde_json::json!({"embeddings": rows}))
    });
    let provider = HttpProvider::new(endpoint(&url, 0)).unwrap();
    let images = vec![demo_image(6, 8), demo_image(7, 8)];
    let emb = provider.embed(&images, 16).unwrap();
    handle.join().unwrap();
    assert_eq!(emb.n, 2);
    assert_eq!(emb.d, 1152);

    // the dimension propagates into a bundle manifest
    let set = fseb::context::ImageSet::from_images(&images).unwrap();
    let bundle = fseb::context::ContextBundle::new(
        Some(set),
        emb,
        fseb::context::ProviderInfo {
            summarizer: "mock".into(),
            generator: "mock".into(),
            embedder: "mock".into(),
        },
        vec![],
    )
    .unwrap();
    assert_eq!(bundle.manifest.d, 1152);
}

#[test]
fn inconsistent_embedding_dims_rejected() {
    let (url, handle) = spawn_mock(1, move |_, _, _| {
        (
            200,
            serde_json::json!({"embeddings": [[1.0, 2.0], [1.0, 2.0, 3.0]]}),
        )
    });
    let provider = HttpProvider::new(endpoint(&url, 0)).unwrap();
    let err = provider
        .embed(&[demo_image(8, 8), demo_image(9, 8)], 4)
        .unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    handle.join().unwrap();
}

#[test]
fn embedding_requests_chunk_by_batch_size() {
    let hits = Arc::new(AtomicUsize::new(0));
    let hits_clone = hits.clone();
    let (url, handle) = spawn_mock(3, move |_, _, body| {
        hits_clone.fetch_add(1, Ordering::SeqCst);
        let n = body["inputs"].as_array().unwrap().len();
        assert!(n <= 2);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![0.0, 1.0]).collect();
        (200, serde_json::json!({"embeddings": rows}))
    });
    let provider = HttpProvider::new(endpoint(&url, 0)).unwrap();
    let images: Vec<ContextImage> = (0..5).map(|i| demo_image(10 + i, 8)).collect();
    let emb = provider.embed(&images, 2).unwrap();
    handle.join().unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert_eq!(emb.n, 5);
    assert_eq!(emb.d, 2);
}

#[test]
fn auth_token_forwarded_from_environment() {
    std::env::set_var("FSEB_TEST_TOKEN", "sesame");
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let port = server.server_addr().to_ip().unwrap().port();
    let handle = std::thread::spawn(move || {
        let mut request = server.recv().unwrap();
        let auth = request
            .headers()
            .iter()
            .find(|h| h.field.equiv("Authorization"))
            .map(|h| h.value.as_str().to_string());
        let mut body = String::new();
        let _ = request.as_reader().read_to_string(&mut body);
        let status = if auth.as_deref() == Some("Bearer sesame") {
            200
        } else {
            401
        };
        let _ = request.respond(
            tiny_http::Response::from_string(serde_json::json!({"text": "ok"}).to_string())
                .with_status_code(status),
        );
    });
    let ep = ServiceEndpoint {
        base_url: format!("http://127.0.0.1:{port}"),
        model: "m".into(),
        timeout_s: 5.0,
        retry_budget: 0,
        auth_env: Some("FSEB_TEST_TOKEN".into()),
    };
    let provider = HttpProvider::new(ep).unwrap();
    let text = provider.summarize(&[demo_image(20, 8)], "x").unwrap();
    assert_eq!(text, "ok");
    handle.join().unwrap();
}
