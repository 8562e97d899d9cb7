//! Request/response envelope for the backend, shared by the simulated
//! fabric and the real-socket server: 4-byte big-endian length plus JSON
//! body, the same framing the log uses.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendService, FormSubmission, SubmissionStatus};
use crate::catalog::ActionDescriptor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Request {
    ListActions,
    SubmitForm { form_id: u16, fields: BTreeMap<String, String>, token: String, t_ms: u64 },
    GetStatus { submission_id: u64 },
    InvokeAction { action_id: u16, params: BTreeMap<String, String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Response {
    Actions(Vec<ActionDescriptor>),
    Submission(FormSubmission),
    Status(SubmissionStatus),
    ActionDone { action_id: u16 },
    Error { code: String, message: String },
}

impl Response {
    fn from_error(e: &BackendError) -> Self {
        let code = match e {
            BackendError::NotFound(_) => "NOT_FOUND",
            BackendError::Validation { .. } => "VALIDATION",
            _ => "INTERNAL",
        };
        Response::Error { code: code.to_string(), message: e.to_string() }
    }
}

pub fn write_frame<W: Write, T: Serialize>(mut out: W, value: &T) -> std::io::Result<()> {
    let bytes = serde_json::to_vec(value)?;
    out.write_all(&(bytes.len() as u32).to_be_bytes())?;
    out.write_all(&bytes)?;
    out.flush()
}

pub fn read_frame<R: Read, T: for<'de> Deserialize<'de>>(mut input: R) -> std::io::Result<Option<T>> {
    let mut len_buf = [0u8; 4];
    match input.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len_buf) as usize;
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    Ok(Some(serde_json::from_slice(&buf)?))
}

/// Apply one request to the service. Shared by the socket server and the
/// simulated backend node so both transports honor one contract.
pub fn handle_request(service: &mut BackendService, request: Request) -> Response {
    match request {
        Request::ListActions => Response::Actions(service.list_actions().to_vec()),
        Request::SubmitForm { form_id, fields, token, t_ms } => {
            match service.submit_form(form_id, fields, &token, t_ms) {
                Ok(s) => Response::Submission(s),
                Err(e) => Response::from_error(&e),
            }
        }
        Request::GetStatus { submission_id } => match service.get_status(submission_id) {
            Ok(s) => Response::Status(s),
            Err(e) => Response::from_error(&e),
        },
        Request::InvokeAction { action_id, params } => {
            match service.invoke_action(action_id, &params) {
                Ok(()) => Response::ActionDone { action_id },
                Err(e) => Response::from_error(&e),
            }
        }
    }
}

/// Serve the backend over TCP: one connection at a time, writes serialized
/// through the single service instance.
pub fn serve(listener: TcpListener, mut service: BackendService) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        if let Err(e) = serve_connection(&mut service, stream) {
            log::warn!("backend connection ended with error: {e}");
        }
    }
    Ok(())
}

fn serve_connection(service: &mut BackendService, stream: TcpStream) -> std::io::Result<()> {
    let mut reader = stream.try_clone()?;
    let mut writer = stream;
    while let Some(request) = read_frame::<_, Request>(&mut reader)? {
        let response = handle_request(service, request);
        write_frame(&mut writer, &response)?;
    }
    Ok(())
}

/// Minimal blocking client for the socket transport.
pub struct Client {
    stream: TcpStream,
}

impl Client {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> std::io::Result<Self> {
        Ok(Self { stream: TcpStream::connect(addr)? })
    }

    pub fn call(&mut self, request: &Request) -> std::io::Result<Response> {
        write_frame(&mut self.stream, request)?;
        read_frame(&mut self.stream)?.ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "server closed connection")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;

    #[test]
    fn socket_roundtrip_submit_and_status() {
        let catalog = Catalog::generate_default();
        let service = BackendService::ephemeral(catalog.clone());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            // accept a single connection for the test, then stop
            let (stream, _) = listener.accept().unwrap();
            let mut service = service;
            let _ = super::serve_connection(&mut service, stream);
        });

        let mut client = Client::connect(addr).unwrap();
        match client.call(&Request::ListActions).unwrap() {
            Response::Actions(actions) => assert_eq!(actions.len(), 129),
            other => panic!("unexpected {other:?}"),
        }
        let fields: BTreeMap<String, String> = catalog
            .form(1)
            .unwrap()
            .required_fields
            .iter()
            .map(|f| (f.clone(), "x".to_string()))
            .collect();
        let id = match client
            .call(&Request::SubmitForm { form_id: 1, fields, token: "t1".into(), t_ms: 0 })
            .unwrap()
        {
            Response::Submission(s) => s.submission_id,
            other => panic!("unexpected {other:?}"),
        };
        match client.call(&Request::GetStatus { submission_id: id }).unwrap() {
            Response::Status(SubmissionStatus::Pending) => {}
            other => panic!("unexpected {other:?}"),
        }
        match client.call(&Request::GetStatus { submission_id: 999 }).unwrap() {
            Response::Error { code, .. } => assert_eq!(code, "NOT_FOUND"),
            other => panic!("unexpected {other:?}"),
        }
        drop(client);
        server.join().unwrap();
    }
}
