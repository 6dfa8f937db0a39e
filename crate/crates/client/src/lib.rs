//! Thin typed client for the DeepBND service.

use deepbnd_core::api::{
    DnsRequest, ErrorBody, Fe2Request, Health, MacroSummary, OfflineRequest, OfflineResponse,
    PredictRequest, PredictResponse, ReportRequest, SampleRequest, SampleResponse, TangentRequest,
    TangentResponse, ValidateRequest,
};
use deepbnd_core::pipeline::{OnlineSummary, ValidationReport};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),

    #[error("server returned {status} ({code}): {message}")]
    Server {
        status: u16,
        code: String,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` such as `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => (b.error, b.message),
            Err(_) => ("http".to_owned(), text),
        };
        Err(ClientError::Server {
            status: status.as_u16(),
            code,
            message,
        })
    }

    async fn post<Q: Serialize, T: DeserializeOwned>(&self, path: &str, body: &Q) -> Result<T> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .await?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<Health> {
        let resp = self.http.get(format!("{}/health", self.base)).send().await?;
        Self::decode(resp).await
    }

    pub async fn sample(&self, req: &SampleRequest) -> Result<SampleResponse> {
        self.post("/sample", req).await
    }

    pub async fn snapshots(&self, req: &OfflineRequest) -> Result<OfflineResponse> {
        self.post("/snapshots", req).await
    }

    pub async fn pod(&self, req: &OfflineRequest) -> Result<OfflineResponse> {
        self.post("/pod", req).await
    }

    pub async fn train(&self, req: &OfflineRequest) -> Result<OfflineResponse> {
        self.post("/train", req).await
    }

    pub async fn offline(&self, req: &OfflineRequest) -> Result<OfflineResponse> {
        self.post("/offline", req).await
    }

    pub async fn predict(&self, req: &PredictRequest) -> Result<PredictResponse> {
        self.post("/predict", req).await
    }

    pub async fn tangent(&self, req: &TangentRequest) -> Result<TangentResponse> {
        self.post("/tangent", req).await
    }

    pub async fn fe2(&self, req: &Fe2Request) -> Result<MacroSummary> {
        self.post("/fe2", req).await
    }

    pub async fn dns(&self, req: &DnsRequest) -> Result<MacroSummary> {
        self.post("/dns", req).await
    }

    pub async fn report(&self, req: &ReportRequest) -> Result<OnlineSummary> {
        self.post("/report", req).await
    }

    pub async fn validate(&self, req: &ValidateRequest) -> Result<ValidationReport> {
        self.post("/validate", req).await
    }
}
