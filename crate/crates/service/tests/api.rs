mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use clickmat_core::io::decode_alpha;
use clickmat_core::patches::PatchSpec;
use clickmat_core::{ClickSet, Polarity};
use clickmat_service::{router, EngineConfig, RefineResponse, SessionState};
use common::{engine_config, png_bytes, service, service_with};
use http_body_util::BodyExt;
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    body: Vec<u8>,
}

impl Reply {
    fn json<T: serde::de::DeserializeOwned>(&self) -> T {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Body) -> Reply {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body)
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let headers = response.headers().clone();
    let body = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

async fn post_json(app: &Router, uri: &str, value: serde_json::Value) -> Reply {
    call(app, Method::POST, uri, Body::from(value.to_string())).await
}

async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, Body::empty()).await
}

async fn create(app: &Router, height: usize, width: usize) -> SessionState {
    let reply = call(app, Method::POST, "/session", Body::from(png_bytes(height, width, 1))).await;
    assert_eq!(reply.status, StatusCode::CREATED);
    reply.json()
}

fn app() -> Router {
    router(Arc::new(service()))
}

#[tokio::test]
async fn create_returns_a_same_size_matte_and_distinct_ids() {
    let app = app();
    let a = create(&app, 48, 40).await;
    let b = create(&app, 48, 40).await;
    assert_ne!(a.id, b.id);
    assert_eq!((a.height, a.width, a.downscaled), (48, 40, false));
    assert!(a.clicks.is_empty() && a.history.is_empty());
    assert!(a.sigma_min.unwrap() <= a.sigma_max.unwrap());

    let reply = get(&app, &format!("/session/{}/alpha.png", a.id)).await;
    assert_eq!(reply.status, StatusCode::OK);
    assert_eq!(reply.headers["content-type"], "image/png");
    let decoded = image::load_from_memory(&reply.body).unwrap();
    assert!(matches!(decoded, image::DynamicImage::ImageLuma16(_)));
    assert_eq!(decode_alpha(&reply.body).unwrap().shape(), (48, 40));
}

#[tokio::test]
async fn corrupt_or_oversize_uploads_are_rejected() {
    let app = app();
    let reply = call(&app, Method::POST, "/session", Body::from(vec![0x89, b'P', b'N', b'G', 1, 2, 3])).await;
    assert_eq!(reply.status, StatusCode::BAD_REQUEST);
    assert!(reply.json::<serde_json::Value>()["error"].as_str().unwrap().contains("decode"));

    let small = router(Arc::new(service_with(
        None,
        EngineConfig {
            max_pixels: 1000,
            ..engine_config()
        },
    )));
    let reply = call(&small, Method::POST, "/session", Body::from(png_bytes(40, 40, 2))).await;
    assert_eq!(reply.status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn large_images_are_downscaled_with_a_flag() {
    let app = router(Arc::new(service_with(
        None,
        EngineConfig {
            max_side: 32,
            ..engine_config()
        },
    )));
    let reply = call(&app, Method::POST, "/session", Body::from(png_bytes(40, 80, 3))).await;
    assert_eq!(reply.status, StatusCode::CREATED);
    assert_eq!(reply.headers["x-downscaled"], "true");
    let state: SessionState = reply.json();
    assert_eq!((state.height, state.width), (16, 32));
    assert_eq!((state.original_height, state.original_width), (40, 80));
    assert!(state.downscaled);
}

#[tokio::test]
async fn clicks_round_trip_and_undo_restores_the_matte() {
    let app = app();
    let s = create(&app, 64, 64).await;
    let alpha_uri = format!("/session/{}/alpha.png", s.id);
    let initial = get(&app, &alpha_uri).await.body;

    let reply = post_json(&app, &format!("/session/{}/click", s.id), serde_json::json!({"row": 30, "col": 12, "polarity": "fg"})).await;
    assert_eq!(reply.status, StatusCode::OK);
    let state: SessionState = reply.json();
    let mut expected = ClickSet::empty(4);
    expected.push(30, 12, Polarity::Foreground);
    assert_eq!(serde_json::to_string(&state.clicks).unwrap(), expected.to_json());
    let fetched: SessionState = get(&app, &format!("/session/{}/state", s.id)).await.json();
    assert_eq!(fetched, state);
    assert_ne!(get(&app, &alpha_uri).await.body, initial);

    let reply = post_json(&app, &format!("/session/{}/undo", s.id), serde_json::json!({})).await;
    assert_eq!(reply.status, StatusCode::OK);
    let state: SessionState = reply.json();
    assert!(state.clicks.is_empty());
    assert_eq!(state.history.len(), 2);
    assert_eq!(get(&app, &alpha_uri).await.body, initial);
}

#[tokio::test]
async fn bad_requests_map_to_status_codes() {
    let app = app();
    let s = create(&app, 32, 32).await;
    let click = format!("/session/{}/click", s.id);
    let reply = post_json(&app, &click, serde_json::json!({"row": 32, "col": 0, "polarity": "bg"})).await;
    assert_eq!(reply.status, StatusCode::BAD_REQUEST);
    let reply = post_json(&app, &click, serde_json::json!({"row": 1, "col": 0, "polarity": "maybe"})).await;
    assert!(reply.status.is_client_error());
    let reply = post_json(&app, &format!("/session/{}/undo", s.id), serde_json::json!({})).await;
    assert_eq!(reply.status, StatusCode::CONFLICT);
    let reply = get(&app, "/session/nope/state").await;
    assert_eq!(reply.status, StatusCode::NOT_FOUND);
    let reply = post_json(&app, "/session/nope/click", serde_json::json!({"row": 0, "col": 0, "polarity": "fg"})).await;
    assert_eq!(reply.status, StatusCode::NOT_FOUND);
    let reply = call(&app, Method::DELETE, &format!("/session/{}", s.id), Body::empty()).await;
    assert_eq!(reply.status, StatusCode::NO_CONTENT);
    assert_eq!(get(&app, &format!("/session/{}/state", s.id)).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn uncertainty_png_carries_its_range() {
    let app = app();
    let s = create(&app, 40, 48).await;
    let reply = get(&app, &format!("/session/{}/uncertainty.png", s.id)).await;
    assert_eq!(reply.status, StatusCode::OK);
    let min: f32 = reply.headers["x-sigma-min"].to_str().unwrap().parse().unwrap();
    let max: f32 = reply.headers["x-sigma-max"].to_str().unwrap().parse().unwrap();
    assert_eq!((Some(min), Some(max)), (s.sigma_min, s.sigma_max));
    let decoded = image::load_from_memory(&reply.body).unwrap();
    assert!(matches!(decoded, image::DynamicImage::ImageLuma8(_)));
    assert_eq!((decoded.height(), decoded.width()), (40, 48));
}

#[tokio::test]
async fn refine_changes_pixels_only_inside_returned_patches() {
    let app = app();
    let s = create(&app, 64, 64).await;
    let refine = format!("/session/{}/refine", s.id);
    let alpha_uri = format!("/session/{}/alpha.png", s.id);
    let before = decode_alpha(&get(&app, &alpha_uri).await.body).unwrap();

    let zero: RefineResponse = post_json(&app, &refine, serde_json::json!({"K": 0})).await.json();
    assert!(zero.refinement.patches.is_empty());
    assert_eq!(decode_alpha(&get(&app, &alpha_uri).await.body).unwrap(), before);

    let reply = post_json(&app, &refine, serde_json::json!({"K": 8})).await;
    assert_eq!(reply.status, StatusCode::OK);
    let out: RefineResponse = reply.json();
    let patches: Vec<PatchSpec> = out.refinement.patches.clone();
    assert!(!patches.is_empty() && patches.len() <= 8);
    for (i, a) in patches.iter().enumerate() {
        assert_eq!(a.k, 16);
        for b in &patches[i + 1..] {
            assert!(!a.overlaps(b));
        }
    }
    assert_eq!(out.state.refinement.as_ref().unwrap().k, 8);
    let after = decode_alpha(&get(&app, &alpha_uri).await.body).unwrap();
    let mut changed = 0;
    for r in 0..64 {
        for c in 0..64 {
            if after.get(r, c) != before.get(r, c) {
                changed += 1;
                assert!(patches.iter().any(|p| p.contains(r, c)), "pixel ({r}, {c}) changed outside patches");
            }
        }
    }
    assert!(changed > 0);

    // a click invalidates the refinement
    let state: SessionState = post_json(&app, &format!("/session/{}/click", s.id), serde_json::json!({"row": 5, "col": 5, "polarity": "bg"})).await.json();
    assert!(state.refinement.is_none());
}

#[tokio::test]
async fn refine_without_a_refiner_is_unavailable() {
    let app = router(Arc::new(service_with(None, engine_config())));
    let s = create(&app, 32, 32).await;
    let refine = format!("/session/{}/refine", s.id);
    assert_eq!(post_json(&app, &refine, serde_json::json!({"K": 0})).await.status, StatusCode::OK);
    assert_eq!(post_json(&app, &refine, serde_json::json!({"K": 2})).await.status, StatusCode::SERVICE_UNAVAILABLE);
}
