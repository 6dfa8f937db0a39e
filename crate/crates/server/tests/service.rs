use deepbnd_client::{Client, ClientError};
use deepbnd_core::api::{
    CellSpec, DnsRequest, Fe2Request, MacroKind, OfflineRequest, PredictRequest, SampleRequest,
    Stage, TangentRequest, ValidateRequest,
};
use deepbnd_core::macroscale::{DnsConfig, TangentProvider};
use deepbnd_core::micro::SamplingMethod;
use deepbnd_core::pipeline::PipelineConfig;

async fn start() -> (deepbnd_server::RunningServer, Client) {
    let server = deepbnd_server::spawn("127.0.0.1:0").await.unwrap();
    let client = Client::new(server.url());
    (server, client)
}

#[tokio::test]
async fn health_and_sampling() {
    let (server, client) = start().await;
    assert_eq!(client.health().await.unwrap().status, "ok");
    let resp = client
        .sample(&SampleRequest {
            n: 16,
            dims: 4,
            seed: 3,
            method: SamplingMethod::Lhs,
            out: None,
        })
        .await
        .unwrap();
    assert!(resp.stratified);
    assert_eq!(resp.samples.theta.len(), 64);
    server.stop().await.unwrap();
}

#[tokio::test]
async fn invalid_input_maps_to_422() {
    let (server, client) = start().await;
    let err = client
        .sample(&SampleRequest {
            n: 0,
            dims: 4,
            seed: 3,
            method: SamplingMethod::Lhs,
            out: None,
        })
        .await
        .unwrap_err();
    match err {
        ClientError::Server { status, code, .. } => {
            assert_eq!(status, 422);
            assert_eq!(code, "invalid-input");
        }
        other => panic!("unexpected {other:?}"),
    }
    server.stop().await.unwrap();
}

#[tokio::test]
async fn offline_predict_tangent_validate() {
    let (server, client) = start().await;
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::smoke();
    let req = OfflineRequest {
        config: cfg.clone(),
        workspace: dir.path().to_path_buf(),
        stage: Stage::All,
        usage: None,
        workers: Some(2),
    };
    let snap = client.snapshots(&req).await.unwrap();
    assert_eq!(snap.stage.artifacts.len(), 6);
    assert!(snap.bundle.is_none());
    let out = client.offline(&req).await.unwrap();
    assert!(out.bundle.is_some());
    assert_eq!(out.stage.reused.len(), 6);

    let lattice = cfg.lattice.clone();
    let radii = vec![0.5 * (lattice.r_min + lattice.r_max); lattice.n_inclusions()];
    let pred = client
        .predict(&PredictRequest {
            bundle: dir.path().to_path_buf(),
            radii: radii.clone(),
            strain: [1.0, 0.0, 0.0],
            n_rb: None,
            out: Some(dir.path().join("trace")),
        })
        .await
        .unwrap();
    assert_eq!(pred.ordering, "ccw-bl-interleaved");
    assert!(dir.path().join("trace.bin").exists());
    assert_eq!(pred.coefficients[0].len(), 1);

    let t = client
        .tangent(&TangentRequest {
            bundle: Some(dir.path().to_path_buf()),
            cell: None,
            radii,
            provider: TangentProvider::Deepbnd,
        })
        .await
        .unwrap();
    assert!(t.tangent[0][0] > 0.0);

    let report = client
        .validate(&ValidateRequest {
            workspace: dir.path().to_path_buf(),
        })
        .await
        .unwrap();
    assert!(report.ok());
    server.stop().await.unwrap();
}

#[tokio::test]
async fn fe2_and_dns_endpoints() {
    let (server, client) = start().await;
    let cfg = PipelineConfig::smoke();
    let cell = CellSpec {
        lattice: cfg.lattice.clone(),
        mesh: cfg.mesh,
    };
    let out = tempfile::tempdir().unwrap();
    let s = client
        .fe2(&Fe2Request {
            geometry: MacroKind::Cook,
            provider: TangentProvider::Periodic,
            bundle: None,
            cell: Some(cell.clone()),
            seed: 1,
            divisions: 2,
            ny: 4,
            traction: None,
            out: Some(out.path().to_path_buf()),
            workers: None,
        })
        .await
        .unwrap();
    assert_eq!(s.probes.len(), 4);
    assert!(s.probes[0].displacement[1] > 0.0);
    assert!(out.path().join("stress.csv").exists());

    let missing_model = client
        .fe2(&Fe2Request {
            geometry: MacroKind::Bar,
            provider: TangentProvider::Deepbnd,
            bundle: None,
            cell: Some(cell),
            seed: 1,
            divisions: 1,
            ny: 4,
            traction: None,
            out: None,
            workers: None,
        })
        .await;
    assert!(matches!(missing_model, Err(ClientError::Server { status: 422, .. })));

    let dns = DnsRequest {
        config: DnsConfig {
            ny: 1,
            divisions_per_block: 4,
            ..DnsConfig::default()
        },
        lattice: cfg.lattice.clone(),
        out: None,
        workers: None,
    };
    let s = client.dns(&dns).await.unwrap();
    assert!(s.probes[0].displacement[1] < 0.0);
    let too_big = DnsRequest {
        config: DnsConfig {
            max_dofs: 100,
            ..dns.config.clone()
        },
        ..dns
    };
    assert!(matches!(
        client.dns(&too_big).await,
        Err(ClientError::Server { status: 413, .. })
    ));
    server.stop().await.unwrap();
}
