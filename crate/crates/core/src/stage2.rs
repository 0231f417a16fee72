//! The high-capacity second-stage classifier slot: the trait the ensemble
//! backs off to, a local wide linear reference implementation, an HTTP
//! client for a remote service, and a loopback stub server for tests.
//!
//! Wire protocol (see `docs/stage2-protocol.md`):
//!
//! ```text
//! POST <base>/classify   {"texts": ["...", ...]}
//! 200                    {"predictions": [[{"label": "hin_Latn", "prob": 0.91}, ...], ...]}
//! ```

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeaturizerConfig;
use crate::label::{parse_tag, LabeledExample, LanguageClass, Prediction, Registry, Stage};
use crate::linear::{self, LinearModel, ModelIoError, TrainConfig, TrainError, TrainLog};

/// Accepted deviation of a remote distribution's total from 1 before it is
/// renormalized.
const REMOTE_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Error)]
pub enum Stage2Error {
    #[error("stage-2 classifier has no trained model")]
    Untrained,
    #[error("stage-2 transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("stage-2 protocol error: {0}")]
    Protocol(String),
}

impl Stage2Error {
    /// Transport failures are the ones worth retrying or degrading on.
    pub fn is_transport(&self) -> bool {
        matches!(self, Stage2Error::Transport { .. })
    }
}

pub trait Stage2Classifier: Send + Sync {
    /// One full distribution per input text, in input order, stage `Stage2`.
    fn classify(&self, texts: &[&str]) -> Result<Vec<Prediction>, Stage2Error>;

    fn name(&self) -> &str;

    fn supported_classes(&self) -> &[LanguageClass];
}

/// Wide-feature linear model standing in for a pretrained LM classifier.
#[derive(Debug, Clone)]
pub struct LocalReference {
    model: Option<Arc<LinearModel>>,
    classes: Vec<LanguageClass>,
}

impl LocalReference {
    pub fn new(model: LinearModel) -> Self {
        let classes = model.labels().to_vec();
        LocalReference {
            model: Some(Arc::new(model)),
            classes,
        }
    }

    pub fn untrained(classes: Vec<LanguageClass>) -> Self {
        LocalReference { model: None, classes }
    }

    /// Trains with the wide defaults (char 1-5, word bigrams, dim 64) unless
    /// the caller overrides them.
    pub fn train(
        corpus: &[LabeledExample],
        registry: &Registry,
        featurizer: Option<FeaturizerConfig>,
        config: Option<TrainConfig>,
    ) -> Result<(Self, TrainLog), TrainError> {
        let (model, log) = linear::train(
            corpus,
            registry,
            featurizer.unwrap_or_else(FeaturizerConfig::wide),
            &config.unwrap_or_else(TrainConfig::wide),
        )?;
        Ok((LocalReference::new(model), log))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ModelIoError> {
        Ok(LocalReference::new(LinearModel::load(path)?))
    }

    pub fn model(&self) -> Option<&LinearModel> {
        self.model.as_deref()
    }
}

impl Stage2Classifier for LocalReference {
    fn classify(&self, texts: &[&str]) -> Result<Vec<Prediction>, Stage2Error> {
        let model = self.model.as_ref().ok_or(Stage2Error::Untrained)?;
        let k = model.labels().len();
        Ok(texts.iter().map(|t| model.predict_as(t, k, Stage::Stage2)).collect())
    }

    fn name(&self) -> &str {
        "local-reference"
    }

    fn supported_classes(&self) -> &[LanguageClass] {
        &self.classes
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireScore {
    pub label: String,
    pub prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub predictions: Vec<Vec<WireScore>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteEndpointConfig {
    pub base_url: String,
    pub timeout: Duration,
    pub max_batch: usize,
    pub retries: usize,
}

impl RemoteEndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        RemoteEndpointConfig {
            base_url: base_url.into(),
            timeout: Duration::from_secs(10),
            max_batch: 32,
            retries: 2,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.timeout.is_zero() {
            return Err("timeout must be > 0".into());
        }
        if self.max_batch == 0 {
            return Err("max batch size must be >= 1".into());
        }
        Ok(())
    }
}

/// Client for a remote stage-2 service. Large inputs are split into
/// batches of at most `max_batch` texts; order is preserved.
pub struct RemoteClient {
    config: RemoteEndpointConfig,
    registry: Arc<Registry>,
    agent: ureq::Agent,
}

impl RemoteClient {
    pub fn new(config: RemoteEndpointConfig, registry: Arc<Registry>) -> Result<Self, String> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteClient {
            config,
            registry,
            agent,
        })
    }

    pub fn config(&self) -> &RemoteEndpointConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/classify", self.config.base_url.trim_end_matches('/'))
    }

    fn post_batch(&self, texts: &[&str]) -> Result<Vec<Prediction>, Stage2Error> {
        let request = ClassifyRequest {
            texts: texts.iter().map(|t| t.to_string()).collect(),
        };
        let url = self.endpoint();
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for _ in 0..attempts {
            match self.agent.post(&url).send_json(&request) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    if status >= 500 {
                        last = format!("HTTP {status}");
                        continue;
                    }
                    if status != 200 {
                        return Err(Stage2Error::Protocol(format!("unexpected HTTP status {status}")));
                    }
                    match response.body_mut().read_to_string() {
                        Ok(body) => return decode_response(&body, texts.len(), &self.registry),
                        Err(e) => last = format!("reading response body: {e}"),
                    }
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(Stage2Error::Transport {
            attempts,
            message: last,
        })
    }
}

impl Stage2Classifier for RemoteClient {
    fn classify(&self, texts: &[&str]) -> Result<Vec<Prediction>, Stage2Error> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.max_batch) {
            out.extend(self.post_batch(chunk)?);
        }
        Ok(out)
    }

    fn name(&self) -> &str {
        "remote"
    }

    fn supported_classes(&self) -> &[LanguageClass] {
        self.registry.classes()
    }
}

/// Validates and converts a response body for a request of `expected` texts.
pub fn decode_response(body: &str, expected: usize, registry: &Registry) -> Result<Vec<Prediction>, Stage2Error> {
    let response: ClassifyResponse =
        serde_json::from_str(body).map_err(|e| Stage2Error::Protocol(format!("malformed JSON: {e}")))?;
    if response.predictions.len() != expected {
        return Err(Stage2Error::Protocol(format!(
            "length mismatch: {} predictions for {expected} texts",
            response.predictions.len()
        )));
    }
    response
        .predictions
        .into_iter()
        .enumerate()
        .map(|(i, scores)| decode_distribution(i, scores, registry))
        .collect()
}

fn decode_distribution(i: usize, scores: Vec<WireScore>, registry: &Registry) -> Result<Prediction, Stage2Error> {
    if scores.is_empty() {
        return Err(Stage2Error::Protocol(format!("prediction {i} is empty")));
    }
    let mut ranked = Vec::with_capacity(scores.len());
    for s in scores {
        let class = parse_tag(&s.label)
            .ok()
            .filter(|c| registry.contains(c))
            .ok_or_else(|| Stage2Error::Protocol(format!("unknown label `{}` in prediction {i}", s.label)))?;
        if !(s.prob.is_finite() && (0.0..=1.0).contains(&s.prob)) {
            return Err(Stage2Error::Protocol(format!(
                "probability {} for `{}` in prediction {i} is outside [0, 1]",
                s.prob, s.label
            )));
        }
        if ranked.iter().any(|(c, _)| *c == class) {
            return Err(Stage2Error::Protocol(format!("duplicate label `{}` in prediction {i}", s.label)));
        }
        ranked.push((class, s.prob));
    }
    let total: f64 = ranked.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > REMOTE_SUM_TOLERANCE {
        return Err(Stage2Error::Protocol(format!(
            "prediction {i} probabilities sum to {total}"
        )));
    }
    for (_, p) in ranked.iter_mut() {
        *p /= total;
    }
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| registry.index_of(&a.0).cmp(&registry.index_of(&b.0)))
    });
    Ok(Prediction::new(ranked, Stage::Stage2))
}

fn encode_prediction(p: &Prediction) -> Vec<WireScore> {
    p.ranked
        .iter()
        .map(|(c, prob)| WireScore {
            label: c.tag(),
            prob: *prob,
        })
        .collect()
}

/// Canned behaviour of the stub server.
#[derive(Clone)]
pub enum StubMode {
    /// Uniform distribution over the registry.
    Uniform,
    /// Answers with a real classifier.
    Classifier(Arc<dyn Stage2Classifier>),
    /// One prediction more than texts requested.
    ExtraPrediction,
    /// Every prediction uses this label.
    UnknownLabel(String),
    /// Body that is not JSON.
    Malformed,
    /// Sleeps before answering uniformly.
    Stall(Duration),
    /// Replies with this HTTP status and an empty body.
    Status(u16),
}

/// Loopback HTTP server speaking the stage-2 protocol.
pub struct StubServer {
    addr: SocketAddr,
    server: Arc<tiny_http::Server>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    batches: Arc<Mutex<Vec<usize>>>,
}

impl StubServer {
    /// Binds 127.0.0.1:`port` (0 picks a free port).
    pub fn start(port: u16, mode: StubMode, registry: Arc<Registry>) -> std::io::Result<Self> {
        let server = tiny_http::Server::http(("127.0.0.1", port))
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("stub server has no IP address"))?;
        let server = Arc::new(server);
        let stop = Arc::new(AtomicBool::new(false));
        let batches = Arc::new(Mutex::new(Vec::new()));
        let handle = {
            let server = Arc::clone(&server);
            let stop = Arc::clone(&stop);
            let batches = Arc::clone(&batches);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let mode = mode.clone();
                    let registry = Arc::clone(&registry);
                    let batches = Arc::clone(&batches);
                    std::thread::spawn(move || handle_request(request, &mode, &registry, &batches));
                }
            })
        };
        Ok(StubServer {
            addr,
            server,
            stop,
            handle: Some(handle),
            batches,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Sizes of the batches received so far, in arrival order.
    pub fn batch_sizes(&self) -> Vec<usize> {
        self.batches.lock().unwrap().clone()
    }

    /// Blocks the calling thread until the process is killed.
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_request(mut request: tiny_http::Request, mode: &StubMode, registry: &Registry, batches: &Mutex<Vec<usize>>) {
    let json_header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    let respond = |request: tiny_http::Request, status: u16, body: String| {
        let response = tiny_http::Response::from_string(body)
            .with_status_code(status)
            .with_header(json_header.clone());
        let _ = request.respond(response);
    };
    if request.method() != &tiny_http::Method::Post || request.url() != "/classify" {
        return respond(request, 404, r#"{"error":"not found"}"#.into());
    }
    let mut body = String::new();
    if request.as_reader().read_to_string(&mut body).is_err() {
        return respond(request, 400, r#"{"error":"unreadable body"}"#.into());
    }
    let Ok(req) = serde_json::from_str::<ClassifyRequest>(&body) else {
        return respond(request, 400, r#"{"error":"malformed request"}"#.into());
    };
    batches.lock().unwrap().push(req.texts.len());

    let uniform = || {
        let p = 1.0 / registry.len() as f64;
        registry
            .classes()
            .iter()
            .map(|c| WireScore { label: c.tag(), prob: p })
            .collect::<Vec<_>>()
    };
    let n = req.texts.len();
    let predictions = match mode {
        StubMode::Uniform => vec![uniform(); n],
        StubMode::Stall(delay) => {
            std::thread::sleep(*delay);
            vec![uniform(); n]
        }
        StubMode::ExtraPrediction => vec![uniform(); n + 1],
        StubMode::UnknownLabel(tag) => vec![vec![WireScore { label: tag.clone(), prob: 1.0 }]; n],
        StubMode::Malformed => return respond(request, 200, "{\"predictions\": [".into()),
        StubMode::Status(code) => return respond(request, *code, String::new()),
        StubMode::Classifier(clf) => {
            let texts: Vec<&str> = req.texts.iter().map(String::as_str).collect();
            match clf.classify(&texts) {
                Ok(preds) => preds.iter().map(encode_prediction).collect(),
                Err(e) => return respond(request, 500, serde_json::json!({ "error": e.to_string() }).to_string()),
            }
        }
    };
    let body = serde_json::to_string(&ClassifyResponse { predictions }).expect("serializable response");
    respond(request, 200, body)
}
