//! Server-side fetch for `GET /api/predict?fileurl=`.

use std::net::IpAddr;

use reqwest::Url;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchError {
    #[error("bad fileurl: {0}")]
    BadUrl(String),
    #[error("fetch of {0} denied: private or loopback address not in the allowlist")]
    Denied(String),
    #[error("fetch failed: {0}")]
    Failed(String),
    #[error("remote payload exceeds {0} bytes")]
    TooLarge(usize),
}

/// Host allowlist. Hosts not matched are fetched only when every address they
/// resolve to is public.
#[derive(Debug, Clone, Default)]
pub struct FetchPolicy {
    allow: Vec<glob::Pattern>,
}

impl FetchPolicy {
    pub fn new(globs: &[String]) -> Result<Self, glob::PatternError> {
        let allow = globs.iter().map(|g| glob::Pattern::new(g)).collect::<Result<_, _>>()?;
        Ok(Self { allow })
    }

    pub fn allows_host(&self, host: &str) -> bool {
        self.allow.iter().any(|p| p.matches(host))
    }
}

pub fn parse_fetch_url(raw: &str) -> Result<Url, FetchError> {
    let url = Url::parse(raw).map_err(|e| FetchError::BadUrl(e.to_string()))?;
    if !matches!(url.scheme(), "http" | "https") {
        return Err(FetchError::BadUrl(format!("scheme `{}` is not http or https", url.scheme())));
    }
    if url.host_str().is_none_or(str::is_empty) {
        return Err(FetchError::BadUrl("missing host".into()));
    }
    Ok(url)
}

pub fn is_private(ip: IpAddr) -> bool {
    match ip {
        IpAddr::V4(v4) => {
            v4.is_private()
                || v4.is_loopback()
                || v4.is_link_local()
                || v4.is_unspecified()
                || v4.is_broadcast()
                || v4.octets()[0] == 100 && (64..128).contains(&v4.octets()[1])
        }
        IpAddr::V6(v6) => {
            if let Some(v4) = v6.to_ipv4_mapped() {
                return is_private(IpAddr::V4(v4));
            }
            let seg = v6.segments()[0];
            v6.is_loopback() || v6.is_unspecified() || (seg & 0xfe00) == 0xfc00 || (seg & 0xffc0) == 0xfe80
        }
    }
}

/// Resolves and vets the target, then fetches at most `cap` bytes.
pub async fn fetch(client: &reqwest::Client, policy: &FetchPolicy, url: &Url, cap: usize) -> Result<Vec<u8>, FetchError> {
    let host = url.host_str().unwrap_or_default().trim_matches(['[', ']']).to_string();
    if !policy.allows_host(&host) {
        if host.eq_ignore_ascii_case("localhost") {
            return Err(FetchError::Denied(host));
        }
        let port = url.port_or_known_default().unwrap_or(80);
        let addrs: Vec<IpAddr> = match host.parse::<IpAddr>() {
            Ok(ip) => vec![ip],
            Err(_) => tokio::net::lookup_host((host.as_str(), port))
                .await
                .map_err(|e| FetchError::Failed(format!("{host}: {e}")))?
                .map(|a| a.ip())
                .collect(),
        };
        if addrs.iter().any(|&ip| is_private(ip)) {
            return Err(FetchError::Denied(host));
        }
    }
    let mut response = client.get(url.clone()).send().await.map_err(|e| FetchError::Failed(e.to_string()))?;
    if !response.status().is_success() {
        return Err(FetchError::Failed(format!("{url} returned {}", response.status())));
    }
    if response.content_length().is_some_and(|n| n as usize > cap) {
        return Err(FetchError::TooLarge(cap));
    }
    let mut body = Vec::new();
    while let Some(chunk) = response.chunk().await.map_err(|e| FetchError::Failed(e.to_string()))? {
        body.extend_from_slice(&chunk);
        if body.len() > cap {
            return Err(FetchError::TooLarge(cap));
        }
    }
    Ok(body)
}
