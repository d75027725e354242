//! Chat-completions client. The API key is read from an environment variable only.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_RETRIES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpSettings {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: f64,
    /// Extra attempts after a transport failure.
    pub retries: usize,
    /// Delay before the first retry; doubled for each later one.
    pub backoff_ms: u64,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            temperature: DEFAULT_TEMPERATURE,
            api_key_env: "FEATLOOP_API_KEY".into(),
            timeout_secs: 60.0,
            retries: DEFAULT_RETRIES,
            backoff_ms: 500,
        }
    }
}

/// The body of the first fenced code block, without the info string.
pub fn extract_fenced_block(response: &str) -> Result<String> {
    let open = response
        .find("```")
        .ok_or_else(|| Error::Generation("response has no fenced code block".into()))?;
    let after = &response[open + 3..];
    let body_start = after
        .find('\n')
        .ok_or_else(|| Error::Generation("unterminated fenced code block".into()))?;
    let body = &after[body_start + 1..];
    let close = body
        .find("```")
        .ok_or_else(|| Error::Generation("unterminated fenced code block".into()))?;
    let text = body[..close].trim();
    if text.is_empty() {
        return Err(Error::Generation("fenced code block is empty".into()));
    }
    Ok(text.to_string())
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    pub settings: HttpSettings,
}

impl HttpClient {
    pub fn new(settings: HttpSettings) -> Self {
        Self { settings }
    }

    fn request_body(&self, system: &str, user: &str) -> serde_json::Value {
        json!({
            "model": self.settings.model,
            "temperature": self.settings.temperature,
            "n": 1,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        })
    }

    /// Sends one exchange and returns the first choice's message content.
    /// Transport failures and server errors are retried; other statuses fail at once.
    pub fn complete(&self, system: &str, user: &str) -> Result<String> {
        let s = &self.settings;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(s.timeout_secs))
            .build()
            .map_err(|e| Error::Generation(format!("http client: {e}")))?;
        let key = std::env::var(&s.api_key_env).ok();
        let body = self.request_body(system, user);
        let mut last = String::new();
        for attempt in 0..=s.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(s.backoff_ms << (attempt - 1)));
            }
            let mut req = client.post(&s.endpoint).json(&body);
            if let Some(k) = &key {
                req = req.bearer_auth(k);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last = format!("transport: {e}");
                    continue;
                }
            };
            let status = resp.status();
            if status.is_server_error() {
                last = format!("server status {status}");
                continue;
            }
            if !status.is_success() {
                return Err(Error::Generation(format!("endpoint returned {status}")));
            }
            let value: serde_json::Value = resp
                .json()
                .map_err(|e| Error::Generation(format!("malformed response: {e}")))?;
            return value["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::Generation("response lacks choices[0].message.content".into()));
        }
        Err(Error::Generation(format!("{} attempts failed; last: {last}", s.retries + 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    #[test]
    fn fenced_extraction() {
        let r = "Here is my idea.\n```dsl\n# product\nfeature a_x_b = col(a) * col(b)\n```\nThanks";
        assert_eq!(
            extract_fenced_block(r).unwrap(),
            "# product\nfeature a_x_b = col(a) * col(b)"
        );
        assert!(matches!(extract_fenced_block("no code here"), Err(Error::Generation(_))));
        assert!(matches!(extract_fenced_block("```\nopen"), Err(Error::Generation(_))));
    }

    /// Serves canned responses in order, one connection each, and returns the request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = line.trim().to_string();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(format!("{auth}|{}", String::from_utf8(buf).unwrap()));
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    fn settings(url: String) -> HttpSettings {
        HttpSettings {
            endpoint: url,
            model: "test-model".into(),
            api_key_env: "FEATLOOP_TEST_KEY_UNSET".into(),
            backoff_ms: 1,
            timeout_secs: 5.0,
            ..HttpSettings::default()
        }
    }

    #[test]
    fn request_shape_and_retry() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"```\nfeature k = col(a)\n```"}}]}"#;
        let (url, handle) = serve(vec![(503, "{}".into()), (200, ok.into())]);
        let client = HttpClient::new(settings(url));
        let content = client.complete("sys", "usr").unwrap();
        assert_eq!(extract_fenced_block(&content).unwrap(), "feature k = col(a)");
        let bodies = handle.join().unwrap();
        assert_eq!(bodies.len(), 2);
        let (auth, body) = bodies[1].split_once('|').unwrap();
        assert!(auth.is_empty());
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(v["model"], "test-model");
        assert_eq!(v["temperature"], 0.7);
        assert_eq!(v["n"], 1);
        assert_eq!(v["messages"][0]["role"], "system");
        assert_eq!(v["messages"][1]["content"], "usr");
    }

    #[test]
    fn gives_up_after_retries() {
        let (url, handle) = serve(vec![(500, "{}".into()); 3]);
        let err = HttpClient::new(settings(url)).complete("s", "u").unwrap_err();
        assert!(matches!(err, Error::Generation(_)), "{err}");
        assert_eq!(handle.join().unwrap().len(), 3);
    }

    #[test]
    fn unreachable_endpoint_is_a_generation_failure() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let s = HttpSettings {
            retries: 1,
            ..settings(format!("http://127.0.0.1:{port}/x"))
        };
        assert!(matches!(HttpClient::new(s).complete("s", "u"), Err(Error::Generation(_))));
    }
}
