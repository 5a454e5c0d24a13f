//! Request routing and the tiny_http front end.

use std::io::Read;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;

use lensflow_core::domain::{ActionProposal, Label, OperationKind, ProposalSet};
use lensflow_core::engine::{Engine, EngineConfig, EngineError, NodeStatus, RunStore};
use lensflow_core::registry::{ModelDescriptor, RegistryError};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::api::{
    artifact_url, image_id, ArtifactLink, ErrorBody, GeneralRequest, LabelObjectsRequest,
    LabelObjectsResponse, SubmitResponse,
};

pub const MAX_BODY_BYTES: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Response {
    fn json(status: u16, value: &impl Serialize) -> Self {
        Self {
            status,
            content_type: "application/json",
            body: serde_json::to_vec(value).expect("response serializes"),
        }
    }

    fn error(status: u16, kind: &str, detail: impl Into<String>) -> Self {
        Self::json(status, &ErrorBody::new(kind, detail))
    }
}

fn engine_error(e: EngineError) -> Response {
    let (status, kind) = match &e {
        EngineError::InvalidInput(_) => (400, "InvalidInput"),
        EngineError::InvalidConfig(_) => (400, "InvalidConfig"),
        EngineError::PlanningFailed(_) => (422, "PlanningFailed"),
        EngineError::RunNotFound(_) => (404, "RunNotFound"),
        EngineError::CompositingFailure(_) => (500, "CompositingFailure"),
        EngineError::StorageFailure(_) => (500, "StorageFailure"),
    };
    Response::error(status, kind, e.to_string())
}

fn registry_error(e: RegistryError) -> Response {
    let (status, kind) = match &e {
        RegistryError::DuplicateModelId(_) => (409, "DuplicateModelId"),
        RegistryError::InvalidDescriptor(_) => (400, "InvalidDescriptor"),
        RegistryError::NoCapableModel(_) => (422, "NoCapableModel"),
        RegistryError::Io(_) => (500, "StorageFailure"),
    };
    Response::error(status, kind, e.to_string())
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| Response::error(400, "SchemaViolation", e.to_string()))
}

/// Shared service state: the engine, its default configuration and the
/// run store.
pub struct App {
    engine: Engine,
    cfg: EngineConfig,
    store: RunStore,
    registry_path: Option<PathBuf>,
}

impl App {
    /// Opens (and recovers) the run directory named in `cfg`.
    pub fn new(engine: Engine, cfg: EngineConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let store = RunStore::open(&cfg.run_dir)?;
        Ok(Self {
            engine,
            cfg,
            store,
            registry_path: None,
        })
    }

    /// Registrations are written back to this file.
    pub fn with_registry_file(mut self, path: Option<PathBuf>) -> Self {
        self.registry_path = path;
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn handle(&self, method: &str, url: &str, body: &[u8]) -> Response {
        let path = url.split('?').next().unwrap_or(url);
        let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
        match (method, segments.as_slice()) {
            ("POST", ["v1", "requests"]) => self.submit(body),
            ("POST", ["v1", "ops", "label"]) => self.label(body),
            ("GET", ["v1", "models"]) => Response::json(200, &self.engine.registry().list()),
            ("POST", ["v1", "models"]) => self.register(body),
            ("GET", ["v1", "runs", id]) => match self.store.load(id) {
                Ok(record) => Response::json(200, &record),
                Err(e) => engine_error(e),
            },
            ("GET", ["v1", "runs", id, "artifacts", name]) => match self.store.artifact(id, name) {
                Ok(bytes) => Response {
                    status: 200,
                    content_type: "image/x-portable-pixmap",
                    body: bytes,
                },
                Err(e) => engine_error(e),
            },
            (_, ["v1", "requests"] | ["v1", "ops", "label"] | ["v1", "models"])
            | (_, ["v1", "runs", ..]) => {
                Response::error(405, "MethodNotAllowed", format!("{method} {path}"))
            }
            _ => Response::error(404, "NotFound", format!("no route for {path}")),
        }
    }

    fn submit(&self, body: &[u8]) -> Response {
        let req: GeneralRequest = match parse_body(body) {
            Ok(req) => req,
            Err(resp) => return resp,
        };
        if req.text.trim().is_empty() {
            return Response::error(400, "SchemaViolation", "text must be non-empty");
        }
        if req.images.is_empty() {
            return Response::error(400, "SchemaViolation", "images must be non-empty");
        }
        let mut images = Vec::with_capacity(req.images.len());
        for (i, spec) in req.images.iter().enumerate() {
            match spec.resolve(image_id(i)) {
                Ok(image) => images.push(image),
                Err(e) => return Response::error(400, "InvalidInput", e),
            }
        }
        let cfg = req.options.unwrap_or_default().apply(&self.cfg);
        match self.engine.run_request(&req.text, &images, &cfg) {
            Ok(record) => Response::json(
                200,
                &SubmitResponse {
                    artifacts: record
                        .artifacts
                        .iter()
                        .map(|a| ArtifactLink {
                            name: a.name.clone(),
                            url: artifact_url(&record.run_id, &a.name),
                        })
                        .collect(),
                    run_id: record.run_id,
                    summary: record.summary,
                },
            ),
            Err(e) => engine_error(e),
        }
    }

    fn label(&self, body: &[u8]) -> Response {
        let req: LabelObjectsRequest = match parse_body(body) {
            Ok(req) => req,
            Err(resp) => return resp,
        };
        let label = match Label::new(&req.object_name) {
            Ok(label) => label,
            Err(e) => return Response::error(400, "SchemaViolation", e.to_string()),
        };
        let image = match req.image.resolve(image_id(0)) {
            Ok(image) => image,
            Err(e) => return Response::error(400, "InvalidInput", e),
        };
        if let Err(e) = self.engine.registry().select_model(OperationKind::Locate, &Default::default()) {
            return registry_error(e);
        }
        let set = ProposalSet::new(vec![ActionProposal::new(OperationKind::Locate, Some(label))])
            .expect("one proposal");
        let (_, results) = match self.engine.execute(&set, &[image], &self.cfg) {
            Ok(done) => done,
            Err(e) => return engine_error(e),
        };
        let result = &results[0];
        if result.status == NodeStatus::FailedExecution {
            return Response::error(
                502,
                "FailedExecution",
                result.error.clone().unwrap_or_default(),
            );
        }
        let detections = result
            .outputs
            .iter()
            .flat_map(|o| o.output.detections.iter().cloned())
            .collect();
        Response::json(200, &LabelObjectsResponse { detections })
    }

    fn register(&self, body: &[u8]) -> Response {
        let desc: ModelDescriptor = match parse_body(body) {
            Ok(desc) => desc,
            Err(resp) => return resp,
        };
        let registry = self.engine.registry();
        if let Err(e) = registry.register(desc.clone()) {
            return registry_error(e);
        }
        if let Some(path) = &self.registry_path {
            if let Err(e) = registry.save(path) {
                return registry_error(e);
            }
        }
        Response::json(201, &desc)
    }
}

/// A running server; dropping the handle does not stop it.
pub struct Server {
    inner: Arc<tiny_http::Server>,
    workers: Vec<JoinHandle<()>>,
}

impl Server {
    /// Binds `addr` and answers requests on `workers` threads.
    pub fn start(app: Arc<App>, addr: &str, workers: usize) -> std::io::Result<Self> {
        let inner = Arc::new(
            tiny_http::Server::http(addr).map_err(|e| std::io::Error::other(e.to_string()))?,
        );
        let workers = (0..workers.max(1))
            .map(|_| {
                let inner = Arc::clone(&inner);
                let app = Arc::clone(&app);
                std::thread::spawn(move || {
                    for request in inner.incoming_requests() {
                        respond(&app, request);
                    }
                })
            })
            .collect();
        Ok(Self { inner, workers })
    }

    pub fn addr(&self) -> SocketAddr {
        self.inner
            .server_addr()
            .to_ip()
            .expect("bound to an IP address")
    }

    /// Blocks until the server is stopped.
    pub fn join(self) {
        for worker in self.workers {
            let _ = worker.join();
        }
    }

    /// Stops accepting requests and waits for the workers.
    pub fn stop(self) {
        self.inner.unblock();
        for _ in 1..self.workers.len() {
            self.inner.unblock();
        }
        self.join();
    }
}

fn respond(app: &App, mut request: tiny_http::Request) {
    let method = request.method().as_str().to_uppercase();
    let url = request.url().to_string();
    let mut body = Vec::new();
    let read = request
        .as_reader()
        .take(MAX_BODY_BYTES + 1)
        .read_to_end(&mut body);
    let response = match read {
        Err(e) => Response::error(400, "SchemaViolation", e.to_string()),
        Ok(_) if body.len() as u64 > MAX_BODY_BYTES => {
            Response::error(413, "SchemaViolation", "request body too large")
        }
        Ok(_) => app.handle(&method, &url, &body),
    };
    let header = tiny_http::Header::from_bytes("Content-Type", response.content_type)
        .expect("static header is valid");
    let reply = tiny_http::Response::from_data(response.body)
        .with_status_code(response.status)
        .with_header(header);
    let _ = request.respond(reply);
}
