//! Request/response adapter for an external critic over a byte stream.
//!
//! Request frame: `len: u32 LE` then a body of
//! `version: u8 | text_len: u32 | text: UTF-8 | N: u32 | H: u32 | W: u32 | N*H*W*3 RGB bytes`.
//! Response: `version: u8 | z_yes: f64 LE | z_no: f64 LE`.
//! External verdicts carry no gradient.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use super::{CriticError, CriticQuery, CriticVerdict, Result};
use crate::tensor::Tensor;

pub const PROTOCOL_VERSION: u8 = 1;
const MAX_FRAME: usize = 1 << 28;
const RESPONSE_LEN: usize = 17;
const TIMEOUT: Duration = Duration::from_secs(30);

/// A decoded request as seen by a critic server.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteRequest {
    pub text: String,
    pub views: usize,
    pub height: usize,
    pub width: usize,
    /// `N * H * W * 3` bytes, view-major.
    pub pixels: Vec<u8>,
}

fn protocol(msg: impl Into<String>) -> CriticError {
    CriticError::Protocol(msg.into())
}

/// Encodes the full length-prefixed request frame.
pub fn encode_request(text: &str, images: &[Tensor]) -> Result<Vec<u8>> {
    let first = images.first().ok_or_else(|| protocol("no images"))?;
    let (h, w) = match first.shape() {
        [h, w, 3] => (*h, *w),
        s => return Err(protocol(format!("image shape {s:?} is not [H, W, 3]"))),
    };
    let mut body = vec![PROTOCOL_VERSION];
    body.extend_from_slice(&(text.len() as u32).to_le_bytes());
    body.extend_from_slice(text.as_bytes());
    for d in [images.len(), h, w] {
        body.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for img in images {
        if img.shape() != first.shape() {
            return Err(protocol("images differ in size"));
        }
        for &v in img.data() {
            if !(0.0..=1.0).contains(&v) {
                return Err(protocol(format!("pixel value {v} outside [0, 1]")));
            }
            body.push((v * 255.0 + 0.5).floor() as u8);
        }
    }
    let mut frame = (body.len() as u32).to_le_bytes().to_vec();
    frame.extend_from_slice(&body);
    Ok(frame)
}

fn read_u32(b: &[u8], pos: &mut usize) -> Result<usize> {
    let s = b
        .get(*pos..*pos + 4)
        .ok_or_else(|| protocol("truncated request"))?;
    *pos += 4;
    Ok(u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize)
}

/// Decodes a request body (without the length prefix).
pub fn decode_request(body: &[u8]) -> Result<RemoteRequest> {
    if body.first() != Some(&PROTOCOL_VERSION) {
        return Err(protocol("unsupported request version"));
    }
    let mut pos = 1;
    let len = read_u32(body, &mut pos)?;
    let text = body
        .get(pos..pos + len)
        .ok_or_else(|| protocol("truncated query text"))?;
    let text = String::from_utf8(text.to_vec()).map_err(|_| protocol("query is not UTF-8"))?;
    pos += len;
    let views = read_u32(body, &mut pos)?;
    let height = read_u32(body, &mut pos)?;
    let width = read_u32(body, &mut pos)?;
    let n = views * height * width * 3;
    if body.len() != pos + n {
        return Err(protocol(format!(
            "expected {n} pixel bytes, found {}",
            body.len() - pos
        )));
    }
    Ok(RemoteRequest {
        text,
        views,
        height,
        width,
        pixels: body[pos..].to_vec(),
    })
}

pub fn encode_response(z_yes: f64, z_no: f64) -> [u8; RESPONSE_LEN] {
    let mut out = [0u8; RESPONSE_LEN];
    out[0] = PROTOCOL_VERSION;
    out[1..9].copy_from_slice(&z_yes.to_le_bytes());
    out[9..].copy_from_slice(&z_no.to_le_bytes());
    out
}

pub fn decode_response(bytes: &[u8]) -> Result<CriticVerdict> {
    if bytes.len() != RESPONSE_LEN || bytes[0] != PROTOCOL_VERSION {
        return Err(protocol("malformed response"));
    }
    let z_yes = f64::from_le_bytes(bytes[1..9].try_into().expect("8 bytes"));
    let z_no = f64::from_le_bytes(bytes[9..].try_into().expect("8 bytes"));
    CriticVerdict::from_logits(z_yes, z_no)
}

/// Runs one request/response exchange on an established stream.
pub fn exchange<S: Read + Write>(stream: &mut S, query: &CriticQuery, images: &[Tensor]) -> Result<CriticVerdict> {
    let frame = encode_request(&query.text(), images)?;
    stream.write_all(&frame).map_err(CriticError::Transport)?;
    stream.flush().map_err(CriticError::Transport)?;
    let mut resp = Vec::with_capacity(RESPONSE_LEN);
    stream
        .take(RESPONSE_LEN as u64 + 1)
        .read_to_end(&mut resp)
        .map_err(CriticError::Transport)?;
    decode_response(&resp)
}

/// Asks the critic at `endpoint` (`host:port`) about `images`.
pub fn remote_critic_eval(endpoint: &str, query: &CriticQuery, images: &[Tensor]) -> Result<CriticVerdict> {
    let mut stream = TcpStream::connect(endpoint).map_err(CriticError::Transport)?;
    stream
        .set_read_timeout(Some(TIMEOUT))
        .and_then(|_| stream.set_write_timeout(Some(TIMEOUT)))
        .map_err(CriticError::Transport)?;
    let verdict = exchange(&mut stream, query, images);
    let _ = stream.shutdown(std::net::Shutdown::Both);
    verdict
}

/// Serves one request on `stream`, answering with `handler`'s logits. The
/// connection is closed after the response.
pub fn serve_connection<S, F>(stream: &mut S, handler: F) -> Result<RemoteRequest>
where
    S: Read + Write,
    F: FnOnce(&RemoteRequest) -> (f64, f64),
{
    let mut len = [0u8; 4];
    stream.read_exact(&mut len).map_err(CriticError::Transport)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(protocol(format!("frame of {len} bytes too large")));
    }
    let mut body = vec![0u8; len];
    stream.read_exact(&mut body).map_err(CriticError::Transport)?;
    let req = decode_request(&body)?;
    let (z_yes, z_no) = handler(&req);
    stream
        .write_all(&encode_response(z_yes, z_no))
        .and_then(|_| stream.flush())
        .map_err(CriticError::Transport)?;
    Ok(req)
}
