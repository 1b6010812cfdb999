//! Correction policies and the external transport.

use super::protocol::{build_prompt, parse_response, CorrectionRequest, TaggedPoint, PROTOCOL_VERSION};
use super::{LapVcError, ENDPOINT_ENV, TIMEOUT_ENV, TOKEN_ENV};
use crate::domain::SceneDescriptor;
use std::time::Duration;

/// Default snap radius, deliberately below the anchor association
/// radius so a correction cannot re-associate a point to a different
/// object.
pub const SNAP_RADIUS: f64 = 0.06;

/// How the deterministic mock answers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MockBehavior {
    /// Return the request points unchanged.
    Echo,
    /// Move each point to the nearest object centroid within the radius.
    SnapToCentroids { radius: f64 },
    /// Reply with a broken payload (exercises the fallback path).
    Malformed,
}

/// External endpoint settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPolicy {
    /// Endpoint URL; falls back to the `THERBLIG_LLM_ENDPOINT` env var.
    pub endpoint: Option<String>,
    pub timeout_s: f64,
    /// Extra attempts after the first failure.
    pub retries: u32,
    /// Exponential backoff base between attempts, seconds.
    pub backoff_base_s: f64,
    /// When set, the in-process mock answers and no network I/O happens.
    pub mock: Option<MockBehavior>,
}

impl Default for ExternalPolicy {
    fn default() -> Self {
        ExternalPolicy {
            endpoint: None,
            timeout_s: 30.0,
            retries: 1,
            backoff_base_s: 1.0,
            mock: None,
        }
    }
}

/// The correction policy applied to predicted points.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrectionPolicy {
    Passthrough,
    Snap { radius: f64 },
    External(ExternalPolicy),
}

impl CorrectionPolicy {
    pub fn snap() -> CorrectionPolicy {
        CorrectionPolicy::Snap { radius: SNAP_RADIUS }
    }

    /// Parse the CLI form: `passthrough`, `snap`, `external`,
    /// `external,mock`.
    pub fn parse(s: &str) -> Result<CorrectionPolicy, LapVcError> {
        match s {
            "passthrough" => Ok(CorrectionPolicy::Passthrough),
            "snap" => Ok(CorrectionPolicy::snap()),
            "external" => Ok(CorrectionPolicy::External(ExternalPolicy::default())),
            "external,mock" => Ok(CorrectionPolicy::External(ExternalPolicy {
                mock: Some(MockBehavior::SnapToCentroids { radius: SNAP_RADIUS }),
                ..ExternalPolicy::default()
            })),
            other => Err(LapVcError::Config(format!(
                "unknown policy {other:?}; expected passthrough|snap|external[,mock]"
            ))),
        }
    }
}

/// Corrected points plus one rationale per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrected {
    pub points: Vec<[f64; 2]>,
    pub rationales: Vec<String>,
}

/// Transport abstraction for the external exchange; injected in tests.
pub trait CorrectionTransport {
    fn send(&self, request_json: &str) -> Result<String, LapVcError>;
}

/// Blocking HTTP POST of the request JSON; bearer auth from the env.
pub struct HttpTransport {
    pub endpoint: String,
    pub timeout: Duration,
    pub token: Option<String>,
}

impl HttpTransport {
    pub fn from_policy(policy: &ExternalPolicy) -> Result<HttpTransport, LapVcError> {
        let endpoint = policy
            .endpoint
            .clone()
            .or_else(|| std::env::var(ENDPOINT_ENV).ok())
            .ok_or_else(|| {
                LapVcError::Config(format!(
                    "no endpoint configured (set {ENDPOINT_ENV} or the policy field)"
                ))
            })?;
        let timeout_s = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.parse::<f64>().ok())
            .unwrap_or(policy.timeout_s);
        Ok(HttpTransport {
            endpoint,
            timeout: Duration::from_secs_f64(timeout_s.max(0.001)),
            token: std::env::var(TOKEN_ENV).ok(),
        })
    }
}

impl CorrectionTransport for HttpTransport {
    fn send(&self, request_json: &str) -> Result<String, LapVcError> {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build();
        let agent: ureq::Agent = config.into();
        let mut request = agent
            .post(&self.endpoint)
            .content_type("application/json");
        if let Some(token) = &self.token {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        let mut response = request
            .send(request_json)
            .map_err(|e| LapVcError::Transport(e.to_string()))?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| LapVcError::Transport(e.to_string()))
    }
}

fn snap_to_centroids(points: &[TaggedPoint], scene: &SceneDescriptor, radius: f64) -> Corrected {
    let mut out = Vec::with_capacity(points.len());
    let mut rationales = Vec::with_capacity(points.len());
    for p in points {
        let mut best: Option<(usize, f64)> = None;
        for (k, obj) in scene.objects.iter().enumerate() {
            let d = ((obj.centroid[0] - p.xy[0]).powi(2) + (obj.centroid[1] - p.xy[1]).powi(2)).sqrt();
            if d <= radius && best.map(|(_, b)| d < b).unwrap_or(true) {
                best = Some((k, d));
            }
        }
        match best {
            Some((k, d)) => {
                let obj = &scene.objects[k];
                out.push(obj.centroid);
                rationales.push(format!("snapped {:.1} mm onto {}", d * 1000.0, obj.id));
            }
            None => {
                out.push(p.xy);
                rationales.push(format!("no centroid within {radius} m; left in place"));
            }
        }
    }
    Corrected {
        points: out,
        rationales,
    }
}

/// The deterministic mock: parses the request like a real endpoint
/// would and answers according to its behavior.
fn mock_exchange(request_json: &str, behavior: MockBehavior) -> Result<String, LapVcError> {
    let request: CorrectionRequest = serde_json::from_str(request_json).map_err(|_| {
        LapVcError::Protocol {
            reason: super::ProtocolFailure::InvalidJson,
            payload: request_json.to_string(),
        }
    })?;
    let response = match behavior {
        MockBehavior::Echo => serde_json::json!({
            "protocol_version": PROTOCOL_VERSION,
            "corrected_points": request.points.iter().map(|p| p.xy).collect::<Vec<_>>(),
            "rationales": request.points.iter().map(|_| "echo").collect::<Vec<_>>(),
        }),
        MockBehavior::SnapToCentroids { radius } => {
            let snapped = snap_to_centroids(&request.points, &request.scene, radius);
            serde_json::json!({
                "protocol_version": PROTOCOL_VERSION,
                "corrected_points": snapped.points,
                "rationales": snapped.rationales,
            })
        }
        MockBehavior::Malformed => return Ok("{\"corrected_points\": \"oops\"}".to_string()),
    };
    Ok(response.to_string())
}

/// Correct predicted points under a policy.
pub fn correct_points(
    points: &[TaggedPoint],
    scene: &SceneDescriptor,
    policy: &CorrectionPolicy,
) -> Result<Corrected, LapVcError> {
    correct_points_with_transport(points, scene, policy, None)
}

/// Like [`correct_points`], with an injectable transport for the
/// external policy. When the policy's mock flag is set the transport is
/// never touched — the test for "no network I/O in mock mode" injects a
/// panicking transport here.
pub fn correct_points_with_transport(
    points: &[TaggedPoint],
    scene: &SceneDescriptor,
    policy: &CorrectionPolicy,
    transport: Option<&dyn CorrectionTransport>,
) -> Result<Corrected, LapVcError> {
    match policy {
        CorrectionPolicy::Passthrough => Ok(Corrected {
            points: points.iter().map(|p| p.xy).collect(),
            rationales: points.iter().map(|_| "passthrough".to_string()).collect(),
        }),
        CorrectionPolicy::Snap { radius } => Ok(snap_to_centroids(points, scene, *radius)),
        CorrectionPolicy::External(external) => {
            let request = CorrectionRequest {
                protocol_version: PROTOCOL_VERSION,
                prompt: build_prompt(points, scene),
                scene: scene.clone(),
                points: points.to_vec(),
            };
            let request_json =
                serde_json::to_string(&request).map_err(|e| LapVcError::Config(e.to_string()))?;

            let mut last_error: Option<LapVcError> = None;
            for attempt in 0..=external.retries {
                if attempt > 0 {
                    let backoff = external.backoff_base_s * f64::from(1u32 << (attempt - 1));
                    if backoff > 0.0 {
                        std::thread::sleep(Duration::from_secs_f64(backoff));
                    }
                }
                let exchange = match external.mock {
                    Some(behavior) => mock_exchange(&request_json, behavior),
                    None => match transport {
                        Some(t) => t.send(&request_json),
                        None => HttpTransport::from_policy(external)
                            .and_then(|t| t.send(&request_json)),
                    },
                };
                let payload = match exchange {
                    Ok(p) => p,
                    Err(e) => {
                        last_error = Some(e);
                        continue;
                    }
                };
                match parse_response(&payload, points.len(), &scene.workspace) {
                    Ok(corrected) => {
                        let rationales =
                            serde_json::from_str::<super::CorrectionResponse>(&payload)
                                .ok()
                                .map(|r| r.rationales)
                                .filter(|r| r.len() == points.len())
                                .unwrap_or_else(|| {
                                    points.iter().map(|_| "external".to_string()).collect()
                                });
                        return Ok(Corrected {
                            points: corrected,
                            rationales,
                        });
                    }
                    Err(e) => last_error = Some(e),
                }
            }

            // retries exhausted: fall back to snap, recording why
            let reason = last_error
                .map(|e| e.to_string())
                .unwrap_or_else(|| "no attempt succeeded".to_string());
            let mut fallback = snap_to_centroids(points, scene, SNAP_RADIUS);
            for r in &mut fallback.rationales {
                *r = format!("fallback after external failure ({reason}); {r}");
            }
            Ok(fallback)
        }
    }
}
