//! Provider abstraction: live HTTP chat-completion endpoint or offline
//! fixture store.
//!
//! The fixture provider is a pure function of its key — (program checksum,
//! node id, iteration) — which is what makes offline runs byte-for-byte
//! reproducible. Record lookup falls back from the exact key to wildcard
//! records (`iteration: 0` matches any iteration, `checksum: "*"` matches
//! any program) so corpora stay compact to author.

use super::{LlmConfig, Prompt};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("request budget exceeded after {0} requests")]
    BudgetExceeded(u32),
    #[error("no fixture response for key (checksum={checksum}, node={node}, iteration={iteration})")]
    FixtureMissing {
        checksum: String,
        node: String,
        iteration: u32,
    },
    #[error("fixture store error: {0}")]
    Store(String),
}

/// Identifies one query for fixture lookup and logging.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryKey {
    pub checksum: String,
    pub node: String,
    pub iteration: u32,
}

pub trait SpecProvider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(
        &self,
        key: &QueryKey,
        prompt: &Prompt,
        cfg: &LlmConfig,
    ) -> Result<String, ProviderError>;
    /// Total requests issued so far.
    fn query_count(&self) -> u32;
}

/// One canned response record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureRecord {
    /// `"*"` matches any program.
    pub checksum: String,
    pub node: String,
    /// `0` matches any iteration.
    pub iteration: u32,
    pub response_text: String,
}

pub struct FixtureProvider {
    records: BTreeMap<(String, String, u32), String>,
    calls: AtomicU32,
}

impl FixtureProvider {
    pub fn from_records(records: Vec<FixtureRecord>) -> Self {
        let mut map = BTreeMap::new();
        for r in records {
            map.insert((r.checksum, r.node, r.iteration), r.response_text);
        }
        FixtureProvider {
            records: map,
            calls: AtomicU32::new(0),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Store(format!("{}: {e}", path.display())))?;
        let records: Vec<FixtureRecord> = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Store(format!("{}: {e}", path.display())))?;
        Ok(Self::from_records(records))
    }

    /// Union of every `*.json` record file in a directory.
    pub fn from_dir(dir: &Path) -> Result<Self, ProviderError> {
        let mut records = Vec::new();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| ProviderError::Store(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ProviderError::Store(format!("{}: {e}", path.display())))?;
            let mut batch: Vec<FixtureRecord> = serde_json::from_str(&text)
                .map_err(|e| ProviderError::Store(format!("{}: {e}", path.display())))?;
            records.append(&mut batch);
        }
        Ok(Self::from_records(records))
    }

    fn lookup(&self, key: &QueryKey) -> Option<&String> {
        let tries = [
            (key.checksum.clone(), key.node.clone(), key.iteration),
            (key.checksum.clone(), key.node.clone(), 0),
            ("*".to_string(), key.node.clone(), key.iteration),
            ("*".to_string(), key.node.clone(), 0),
        ];
        tries.iter().find_map(|k| self.records.get(k))
    }
}

impl SpecProvider for FixtureProvider {
    fn id(&self) -> &str {
        "fixture"
    }

    fn complete(
        &self,
        key: &QueryKey,
        _prompt: &Prompt,
        _cfg: &LlmConfig,
    ) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.lookup(key)
            .cloned()
            .ok_or_else(|| ProviderError::FixtureMissing {
                checksum: key.checksum.clone(),
                node: key.node.clone(),
                iteration: key.iteration,
            })
    }

    fn query_count(&self) -> u32 {
        self.calls.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    /// Chat-completion base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub api_key: Option<String>,
    /// Hard cap on requests per provider instance.
    pub max_requests: Option<u32>,
    /// First retry delay; doubles per attempt.
    pub retry_base: Duration,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        HttpProviderConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            max_requests: None,
            retry_base: Duration::from_millis(500),
        }
    }
}

/// Live chat-completion client with bounded retries.
pub struct HttpProvider {
    cfg: HttpProviderConfig,
    client: reqwest::blocking::Client,
    calls: AtomicU32,
}

impl HttpProvider {
    pub fn new(cfg: HttpProviderConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        Ok(HttpProvider {
            cfg,
            client,
            calls: AtomicU32::new(0),
        })
    }
}

impl SpecProvider for HttpProvider {
    fn id(&self) -> &str {
        "http"
    }

    fn complete(
        &self,
        _key: &QueryKey,
        prompt: &Prompt,
        cfg: &LlmConfig,
    ) -> Result<String, ProviderError> {
        let issued = self.calls.fetch_add(1, Ordering::Relaxed) + 1;
        if let Some(cap) = self.cfg.max_requests {
            if issued > cap {
                return Err(ProviderError::BudgetExceeded(cap));
            }
        }

        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": cfg.model,
            "messages": [
                {"role": "system", "content": prompt.system_message},
                {"role": "user", "content": prompt.user_message()},
            ],
            "max_tokens": cfg.max_tokens,
            "temperature": cfg.temperature,
        });

        let mut last_error = String::new();
        for attempt in 0..3 {
            if attempt > 0 {
                std::thread::sleep(self.cfg.retry_base * 2u32.pow(attempt - 1));
            }
            let mut req = self.client.post(&url).json(&body);
            if let Some(key) = &self.cfg.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let value: serde_json::Value = resp
                            .json()
                            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
                        let content = value["choices"][0]["message"]["content"]
                            .as_str()
                            .unwrap_or("")
                            .to_string();
                        return Ok(content);
                    }
                    if status.is_server_error() {
                        last_error = format!("server error {status}");
                        continue;
                    }
                    return Err(ProviderError::Unavailable(format!(
                        "provider rejected request: {status}"
                    )));
                }
                Err(e) => {
                    last_error = e.to_string();
                }
            }
        }
        Err(ProviderError::Unavailable(format!(
            "3 attempts failed: {last_error}"
        )))
    }

    fn query_count(&self) -> u32 {
        self.calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt() -> Prompt {
        Prompt {
            system_message: "s".into(),
            few_shot: vec![],
            masked_code: ">>> INFILL <<<".into(),
            output_indicator: "o".into(),
        }
    }

    fn key(node: &str, iteration: u32) -> QueryKey {
        QueryKey {
            checksum: "abc".into(),
            node: node.into(),
            iteration,
        }
    }

    #[test]
    fn fixture_lookup_priority_and_wildcards() {
        let p = FixtureProvider::from_records(vec![
            FixtureRecord {
                checksum: "abc".into(),
                node: "f".into(),
                iteration: 1,
                response_text: "exact".into(),
            },
            FixtureRecord {
                checksum: "abc".into(),
                node: "f".into(),
                iteration: 0,
                response_text: "any-iter".into(),
            },
            FixtureRecord {
                checksum: "*".into(),
                node: "g".into(),
                iteration: 0,
                response_text: "wild".into(),
            },
        ]);
        let cfg = LlmConfig::default();
        assert_eq!(p.complete(&key("f", 1), &prompt(), &cfg).unwrap(), "exact");
        assert_eq!(p.complete(&key("f", 2), &prompt(), &cfg).unwrap(), "any-iter");
        assert_eq!(p.complete(&key("g", 7), &prompt(), &cfg).unwrap(), "wild");
        assert_eq!(p.query_count(), 3);
    }

    #[test]
    fn fixture_missing_names_the_key() {
        let p = FixtureProvider::from_records(vec![]);
        let err = p
            .complete(&key("ghost", 2), &prompt(), &LlmConfig::default())
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ghost") && msg.contains("2") && msg.contains("abc"));
    }

    #[test]
    fn fixture_determinism() {
        let p = FixtureProvider::from_records(vec![FixtureRecord {
            checksum: "*".into(),
            node: "f".into(),
            iteration: 0,
            response_text: "same".into(),
        }]);
        let cfg = LlmConfig::default();
        let a = p.complete(&key("f", 1), &prompt(), &cfg).unwrap();
        let b = p.complete(&key("f", 1), &prompt(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn http_provider_round_trips_a_completion() {
        use std::io::{Read, Write};
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            // read headers, then the content-length body
            let body_len: usize;
            loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    let headers = String::from_utf8_lossy(&buf[..pos]).to_lowercase();
                    let len = headers
                        .lines()
                        .find_map(|l| l.strip_prefix("content-length:"))
                        .and_then(|v| v.trim().parse::<usize>().ok())
                        .unwrap_or(0);
                    let have = buf.len() - pos - 4;
                    let mut remaining = len.saturating_sub(have);
                    while remaining > 0 {
                        let n = stream.read(&mut chunk).unwrap();
                        buf.extend_from_slice(&chunk[..n]);
                        remaining = remaining.saturating_sub(n);
                    }
                    body_len = len;
                    break;
                }
            }
            let request = String::from_utf8_lossy(&buf).into_owned();
            let _ = body_len;
            let body = r#"{"choices":[{"message":{"role":"assistant","content":"/*@ requires n > 0; */"}}]}"#;
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(response.as_bytes()).unwrap();
            request
        });

        let provider = HttpProvider::new(HttpProviderConfig {
            base_url: format!("http://{addr}"),
            api_key: Some("sk-test".into()),
            max_requests: None,
            retry_base: Duration::from_millis(1),
        })
        .unwrap();
        let reply = provider
            .complete(&key("swap", 1), &prompt(), &LlmConfig::default())
            .unwrap();
        assert_eq!(reply, "/*@ requires n > 0; */");

        let request = server.join().unwrap();
        assert!(request.starts_with("POST /chat/completions"));
        assert!(request.contains("authorization: Bearer sk-test") || request.contains("Authorization: Bearer sk-test"));
        assert!(request.contains("\"model\":\"gpt-3.5-turbo-0613\""));
        assert!(request.contains("\"max_tokens\":2048"));
        assert!(request.contains("\"role\":\"system\""));
        assert!(request.contains("\"role\":\"user\""));
    }

    #[test]
    fn http_provider_fails_after_three_attempts() {
        // nothing listens on this port; connection errors are transient so
        // all three attempts are spent
        let provider = HttpProvider::new(HttpProviderConfig {
            base_url: "http://127.0.0.1:9".into(),
            api_key: None,
            max_requests: None,
            retry_base: Duration::from_millis(1),
        })
        .unwrap();
        let err = provider
            .complete(&key("f", 1), &prompt(), &LlmConfig::default())
            .unwrap_err();
        assert!(matches!(err, ProviderError::Unavailable(_)));
        assert_eq!(provider.query_count(), 1);
    }

    #[test]
    fn http_budget_exceeded() {
        let provider = HttpProvider::new(HttpProviderConfig {
            base_url: "http://127.0.0.1:9".into(),
            api_key: None,
            max_requests: Some(0),
            retry_base: Duration::from_millis(1),
        })
        .unwrap();
        let err = provider
            .complete(&key("f", 1), &prompt(), &LlmConfig::default())
            .unwrap_err();
        assert!(matches!(err, ProviderError::BudgetExceeded(0)));
    }
}
