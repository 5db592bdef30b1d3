use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes as body_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use nrv_core::io::{save_volume, to_bytes};
use nrv_core::neuromorph::build_morph_field;
use nrv_core::phantom::{degenerate, random_tube_specs, rasterize_tubes};
use nrv_core::vesselness::jerman_response;
use nrv_core::views::{default_tf, fiber_density};
use nrv_core::{
    connected_components, extract_isosurface, foreground_mask, histogram, render_slice, Axis, DegenerationParams,
    Direction, Domain, Provenance, SliceShading, VesselnessParams, Volume3D,
};
use nrv_service::{encode_png, router, DensityReport, Session, SessionConfig, Stats, VolumeInfo};
use serde_json::json;
use tower::ServiceExt;

use crate::{ensure, Outcome};

const DIMS: [usize; 3] = [40, 36, 12];

struct Reply {
    status: StatusCode,
    cache: Option<String>,
    provenance: Option<String>,
    body: Vec<u8>,
}

async fn call(app: &Router, method: Method, uri: &str, body: Vec<u8>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let header = |name: &str| resp.headers().get(name).map(|v| v.to_str().unwrap().to_string());
    let (status, cache, provenance) = (resp.status(), header("x-morph-cache"), header("x-provenance"));
    let body = body_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
    Reply { status, cache, provenance, body }
}

async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, Vec::new()).await
}

fn json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).unwrap()
}

async fn run() -> Outcome {
    let specs = random_tube_specs(DIMS, [1.0; 3], 3, (1.5, 2.5), 11);
    let young = rasterize_tubes(&specs, DIMS, [1.0; 3]).unwrap();
    let params = DegenerationParams { thinning_factor: 0.5, fragment_fraction: 0.3, seed: 4, ..Default::default() };
    let old = degenerate(&young, &specs, &params).unwrap().with_provenance(Provenance::Predicted).unwrap();
    let samples: Vec<u16> = (0..DIMS.iter().product::<usize>()).map(|i| ((i * 7919) % 4096) as u16).collect();
    let raw = Volume3D::from_u16(DIMS, [0.5, 0.5, 1.0], &samples, Provenance::Real).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let vols = [("old", &old), ("raw", &raw), ("young", &young)];
    for (id, v) in vols {
        save_volume(v, dir.path().join(format!("{id}.nrv"))).unwrap();
    }
    let config = SessionConfig::default();
    let session = Arc::new(Session::new(config.clone()));
    session.load_dir(dir.path()).map_err(|e| e.to_string())?;
    let app = router(session);
    let mut checked = Vec::new();

    let list: Vec<VolumeInfo> = vols.iter().map(|(id, v)| VolumeInfo::of(id, v)).collect();
    ensure!(get(&app, "/volumes").await.body == json(&list), "GET /volumes");
    checked.push("list");

    for (id, v) in vols {
        let r = get(&app, &format!("/volumes/{id}")).await;
        ensure!(r.body == to_bytes(v), "GET /volumes/{id}");
        ensure!(r.provenance.as_deref() == Some(v.provenance().as_str()), "provenance header for {id}");
        ensure!(get(&app, &format!("/volumes/{id}/histogram")).await.body == json(&histogram(v).unwrap()), "histogram {id}");
        for (axis, index) in [("x", 5), ("y", 17), ("z", 6)] {
            let a: Axis = axis.parse().unwrap();
            let gray = encode_png(&render_slice(v, a, index, &SliceShading::Gray, 1.0).unwrap());
            ensure!(get(&app, &format!("/volumes/{id}/slice?axis={axis}&index={index}")).await.body == gray, "slice {id} {axis}");
            let tf = SliceShading::Transfer(default_tf(Domain::Old, &histogram(v).unwrap()));
            let rgb = encode_png(&render_slice(v, a, index, &tf, 2.0).unwrap());
            let uri = format!("/volumes/{id}/slice?axis={axis}&index={index}&tf=default&domain=old&gamma=2");
            ensure!(get(&app, &uri).await.body == rgb, "transfer slice {id} {axis}");
        }
    }
    checked.extend(["download", "histogram", "slice"]);

    let r = call(&app, Method::POST, "/vesselness", json(&json!({"volume_id": "old", "sigmas": [1.0, 2.0], "tau": 0.75}))).await;
    ensure!(r.status == StatusCode::CREATED, "POST /vesselness status {}", r.status);
    let info: VolumeInfo = serde_json::from_slice(&r.body).unwrap();
    let vp = VesselnessParams { sigmas_um: vec![1.0, 2.0], tau: 0.75, ..Default::default() };
    let expected = jerman_response(&old, &vp).unwrap();
    ensure!(r.body == json(&VolumeInfo::of(&info.id, &expected)), "vesselness info");
    ensure!(get(&app, &format!("/volumes/{}", info.id)).await.body == to_bytes(&expected), "vesselness volume");
    checked.push("vesselness");

    let comps = connected_components(&foreground_mask(&old, 0.3), Domain::Old, Provenance::Predicted);
    ensure!(get(&app, "/components/old?threshold=0.3&domain=old").await.body == json(&comps), "components");
    let obj = extract_isosurface(&young, 0.4, Domain::Young).unwrap().to_obj_string();
    ensure!(get(&app, "/mesh/young?iso=0.4&domain=young").await.body == obj.into_bytes(), "mesh");
    let d = fiber_density(&foreground_mask(&old, 0.2));
    let report = DensityReport { volume_id: "old".into(), threshold: 0.2, density: d, percent: d * 100.0 };
    ensure!(get(&app, "/metrics/density/old?threshold=0.2").await.body == json(&report), "density");
    checked.extend(["components", "mesh", "density"]);

    let field = build_morph_field(&young, &old, config.threshold()).unwrap();
    let mut caches = Vec::new();
    for sigma in [0.25, 0.75, 0.75] {
        let r = get(&app, &format!("/morph/young/old?sigma={sigma}&dir=o2y")).await;
        let frame = field.intermediate_volume(&young, &old, sigma, Direction::OldToYoung).unwrap();
        ensure!(r.body == to_bytes(&frame), "morph frame sigma {sigma}");
        ensure!(r.provenance.as_deref() == Some("morphed"), "morph provenance");
        caches.push(r.cache.unwrap_or_default());
    }
    ensure!(caches == ["miss", "hit", "hit"], "sigma scrub cache headers {caches:?}");
    let frame = field.intermediate_volume(&young, &old, 0.5, Direction::YoungToOld).unwrap();
    let png = encode_png(&render_slice(&frame, Axis::Z, 6, &SliceShading::Gray, 1.0).unwrap());
    ensure!(get(&app, "/morph/young/old?sigma=0.5&dir=y2o&format=png&axis=z&index=6").await.body == png, "morph png");
    checked.push("morph");

    let r = call(&app, Method::POST, "/morph/prepare", json(&json!({"young_id": "young", "old_id": "raw", "dir": "o2y"}))).await;
    ensure!(r.status == StatusCode::ACCEPTED, "prepare status {}", r.status);
    let job: serde_json::Value = serde_json::from_slice(&r.body).unwrap();
    let uri = format!("/morph/jobs/{}", job["job_id"].as_str().unwrap());
    let mut state = String::new();
    for _ in 0..400 {
        let v: serde_json::Value = serde_json::from_slice(&get(&app, &uri).await.body).unwrap();
        state = v["status"].as_str().unwrap().to_string();
        if state != "pending" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    ensure!(state == "ready", "prepared job ended {state}");
    let r = get(&app, "/morph/young/raw?sigma=0.5&dir=o2y").await;
    ensure!(r.cache.as_deref() == Some("hit"), "prepared field not served from cache");
    checked.extend(["prepare", "jobs"]);

    let stats: Stats = serde_json::from_slice(&get(&app, "/stats").await.body).unwrap();
    ensure!(
        (stats.morph_fields_built, stats.morph_cache_misses) == (3, 3) && stats.volumes == 4,
        "stats {stats:?}"
    );
    let r = call(&app, Method::POST, "/volumes?id=extra", to_bytes(&raw)).await;
    ensure!(r.status == StatusCode::CREATED && r.body == json(&VolumeInfo::of("extra", &raw)), "upload");
    ensure!(get(&app, "/volumes/extra").await.body == to_bytes(&raw), "uploaded volume");
    checked.extend(["stats", "upload"]);
    Ok(format!("{} endpoint groups bit-equal to library output; sigma scrub cache {caches:?}", checked.len()))
}

pub fn check() -> Outcome {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap().block_on(run())
}
