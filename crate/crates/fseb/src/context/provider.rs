//! HTTP adapters for the generation, summarization and embedding services.
//!
//! Wire protocol (all endpoints POST a JSON object and return one):
//!   {base}/summarize  {model, prompt, images: [b64 PNG, ...]} -> {text}
//!   {base}/generate   {model, prompt, n, width, height}       -> {images: [b64 PNG, ...]}
//!   {base}/embeddings {model, inputs: [b64 PNG, ...]}         -> {embeddings: [[f32, ...], ...]}
//!
//! Transport failures and 5xx responses are retried up to the endpoint's
//! retry budget; 4xx responses are protocol errors and are not retried.

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{ContextImage, ContextServices, Embeddings, PromptSpec, ProviderInfo};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceEndpoint {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub retry_budget: u32,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub auth_env: Option<String>,
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    2
}

impl ServiceEndpoint {
    pub fn validate(&self) -> Result<()> {
        if self.timeout_s <= 0.0 || self.timeout_s.is_nan() {
            return Err(Error::Config(format!("timeout {} must be positive", self.timeout_s)));
        }
        if self.base_url.is_empty() {
            return Err(Error::Config("endpoint base_url is empty".into()));
        }
        Ok(())
    }
}

/// PNG-encode an image (grayscale or RGB by channel count).
pub fn encode_png(img: &ContextImage) -> Result<Vec<u8>> {
    let color = match img.c {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        other => return Err(Error::Usage(format!("cannot PNG-encode {other} channels"))),
    };
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.w as u32, img.h as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Protocol(format!("png encode: {e}")))?;
        writer
            .write_image_data(&img.data)
            .map_err(|e| Error::Protocol(format!("png encode: {e}")))?;
    }
    Ok(out)
}

/// Decode a PNG into an 8-bit image; grayscale and RGB supported.
pub fn decode_png(bytes: &[u8]) -> Result<ContextImage> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Protocol(format!("png decode: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Protocol(format!("png decode: {e}")))?;
    let c = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(Error::Protocol(format!("unsupported PNG color {other:?}"))),
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Protocol(format!(
            "unsupported PNG bit depth {:?}",
            info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Ok(ContextImage {
        h: info.height as usize,
        w: info.width as usize,
        c,
        data: buf,
    })
}

fn b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn un_b64(text: &str) -> Result<Vec<u8>> {
    base64::engine::general_purpose::STANDARD
        .decode(text)
        .map_err(|e| Error::Protocol(format!("base64: {e}")))
}

/// Client for one provider endpoint.
pub struct HttpProvider {
    endpoint: ServiceEndpoint,
    agent: ureq::Agent,
    token: Option<String>,
}

impl HttpProvider {
    pub fn new(endpoint: ServiceEndpoint) -> Result<Self> {
        endpoint.validate()?;
        let token = match &endpoint.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("auth environment variable {var} is not set"))
            })?),
            None => None,
        };
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs_f64(endpoint.timeout_s)))
            .http_status_as_error(false)
            .build();
        Ok(HttpProvider {
            endpoint,
            agent: config.into(),
            token,
        })
    }

    pub fn endpoint(&self) -> &ServiceEndpoint {
        &self.endpoint
    }

    /// POST with retries on transport errors and 5xx responses.
    fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let url = format!("{}/{}", self.endpoint.base_url.trim_end_matches('/'), path);
        let mut last_err = String::new();
        for attempt in 0..=self.endpoint.retry_budget {
            if attempt > 0 {
                std::thread::sleep(std::time::Duration::from_millis(25 << attempt.min(6)));
            }
            let mut req = self.agent.post(&url);
            if let Some(token) = &self.token {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        return resp
                            .body_mut()
                            .read_json::<serde_json::Value>()
                            .map_err(|e| Error::Protocol(format!("{url}: malformed JSON: {e}")));
                    }
                    if (400..500).contains(&status) {
                        return Err(Error::Protocol(format!("{url}: HTTP {status}")));
                    }
                    last_err = format!("HTTP {status}");
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(Error::Service(format!(
            "{url}: {last_err} after {} attempts",
            self.endpoint.retry_budget + 1
        )))
    }
}

impl ContextServices for HttpProvider {
    fn provider_info(&self) -> ProviderInfo {
        ProviderInfo {
            summarizer: self.endpoint.model.clone(),
            generator: self.endpoint.model.clone(),
            embedder: self.endpoint.model.clone(),
        }
    }

    fn summarize(&self, reference_images: &[ContextImage], requirements: &str) -> Result<String> {
        if reference_images.is_empty() {
            return Err(Error::Usage("summarize requires at least one reference image".into()));
        }
        let images: Vec<String> = reference_images
            .iter()
            .map(|img| encode_png(img).map(|p| b64(&p)))
            .collect::<Result<_>>()?;
        let body = serde_json::json!({
            "model": self.endpoint.model,
            "prompt": requirements,
            "images": images,
        });
        let resp = self.post_json("summarize", &body)?;
        resp.get("text")
            .and_then(|v| v.as_str())
            .map(str::to_owned)
            .ok_or_else(|| Error::Protocol("summarize response lacks 'text'".into()))
    }

    fn synthesize(
        &self,
        prompt: &PromptSpec,
        n: usize,
        _rng: &mut RngStream,
    ) -> Result<Vec<ContextImage>> {
        if n == 0 {
            return Err(Error::Usage("synthesize requires n >= 1".into()));
        }
        let body = serde_json::json!({
            "model": self.endpoint.model,
            "prompt": prompt.rendered,
            "n": n,
            "width": prompt.width,
            "height": prompt.height,
        });
        let resp = self.post_json("generate", &body)?;
        let arr = resp
            .get("images")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::Protocol("generate response lacks 'images'".into()))?;
        let mut out = Vec::with_capacity(arr.len());
        for item in arr {
            let text = item
                .as_str()
                .ok_or_else(|| Error::Protocol("image entry is not a string".into()))?;
            let img = decode_png(&un_b64(text)?)?;
            if prompt.width > 0 && (img.w != prompt.width || img.h != prompt.height) {
                return Err(Error::Protocol(format!(
                    "requested {}x{} image, provider returned {}x{}",
                    prompt.width, prompt.height, img.w, img.h
                )));
            }
            out.push(img);
        }
        if out.len() != n {
            return Err(Error::Protocol(format!(
                "requested {n} images, provider returned {}",
                out.len()
            )));
        }
        Ok(out)
    }

    fn embed(&self, images: &[ContextImage], batch_size: usize) -> Result<Embeddings> {
        if images.is_empty() {
            return Err(Error::Usage("embed requires at least one image".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        let mut d: Option<usize> = None;
        let mut data: Vec<f32> = Vec::new();
        for chunk in images.chunks(batch_size) {
            let inputs: Vec<String> = chunk
                .iter()
                .map(|img| encode_png(img).map(|p| b64(&p)))
                .collect::<Result<_>>()?;
            let body = serde_json::json!({
                "model": self.endpoint.model,
                "inputs": inputs,
            });
            let resp = self.post_json("embeddings", &body)?;
            let rows = resp
                .get("embeddings")
                .and_then(|v| v.as_array())
                .ok_or_else(|| Error::Protocol("embeddings response lacks 'embeddings'".into()))?;
            if rows.len() != chunk.len() {
                return Err(Error::Protocol(format!(
                    "sent {} inputs, provider returned {} rows",
                    chunk.len(),
                    rows.len()
                )));
            }
            for row in rows {
                let vals = row
                    .as_array()
                    .ok_or_else(|| Error::Protocol("embedding row is not an array".into()))?;
                match d {
                    None => d = Some(vals.len()),
                    Some(expect) if expect != vals.len() => {
                        return Err(Error::Protocol(format!(
                            "inconsistent embedding dims {expect} vs {}",
                            vals.len()
                        )));
                    }
                    _ => {}
                }
                for v in vals {
                    data.push(v.as_f64().ok_or_else(|| {
                        Error::Protocol("embedding entry is not a number".into())
                    })? as f32);
                }
            }
        }
        Ok(Embeddings {
            n: images.len(),
            d: d.unwrap_or(0),
            data,
        })
    }
}
