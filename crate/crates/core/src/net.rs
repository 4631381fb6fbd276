//! Connection-per-message transport over TCP, plus the in-process equivalent.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::wire::{ErrorCode, Request, Response, Service, MAX_LINE_BYTES};

const IO_TIMEOUT: Duration = Duration::from_secs(30);

/// A way to deliver one request and obtain its response.
pub trait Transport: Send + Sync {
    fn exchange(&self, request: &Request) -> Result<Response>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn exchange(&self, request: &Request) -> Result<Response> {
        (**self).exchange(request)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn exchange(&self, request: &Request) -> Result<Response> {
        (**self).exchange(request)
    }
}

impl<T: Transport + ?Sized> Transport for &T {
    fn exchange(&self, request: &Request) -> Result<Response> {
        (**self).exchange(request)
    }
}

/// Opens a fresh TCP connection for every exchange.
#[derive(Clone, Debug)]
pub struct TcpTransport {
    addr: SocketAddr,
}

impl TcpTransport {
    pub fn new(addr: impl ToSocketAddrs) -> Result<Self> {
        let addr =
            addr.to_socket_addrs()?.next().ok_or_else(|| Error::Transport("address resolved to nothing".into()))?;
        Ok(TcpTransport { addr })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Sends a raw line and returns the raw response line.
    pub fn exchange_line(&self, line: &str) -> Result<String> {
        let io = |e: std::io::Error| Error::Transport(e.to_string());
        let mut stream = TcpStream::connect_timeout(&self.addr, IO_TIMEOUT).map_err(io)?;
        stream.set_read_timeout(Some(IO_TIMEOUT)).map_err(io)?;
        stream.set_write_timeout(Some(IO_TIMEOUT)).map_err(io)?;
        stream.set_nodelay(true).map_err(io)?;
        stream.write_all(line.as_bytes()).map_err(io)?;
        stream.write_all(b"\n").map_err(io)?;
        stream.shutdown(Shutdown::Write).map_err(io)?;
        let mut response = String::new();
        BufReader::new(stream).take(MAX_LINE_BYTES as u64).read_line(&mut response).map_err(io)?;
        if !response.ends_with('\n') {
            return Err(Error::Transport("connection closed mid-response".into()));
        }
        Ok(response)
    }
}

impl Transport for TcpTransport {
    fn exchange(&self, request: &Request) -> Result<Response> {
        let line = self.exchange_line(&request.to_line())?;
        Response::from_line(&line).map_err(|_| Error::UnexpectedResponse)
    }
}

/// Calls a service directly, still passing through the JSON codec.
pub struct InProcess<S> {
    service: S,
}

impl<S: Service> InProcess<S> {
    pub fn new(service: S) -> Self {
        InProcess { service }
    }
}

impl<S: Service> Transport for InProcess<S> {
    fn exchange(&self, request: &Request) -> Result<Response> {
        let line = self.service.handle_line(&request.to_line());
        Response::from_line(&line).map_err(|_| Error::UnexpectedResponse)
    }
}

/// A running TCP server. Stops when [`ServerHandle::shutdown`] is called or the
/// handle is dropped.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    connections: Arc<AtomicU64>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Connections accepted so far.
    pub fn connections(&self) -> u64 {
        self.connections.load(Ordering::Relaxed)
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        if let Some(handle) = self.accept.take() {
            self.stop.store(true, Ordering::SeqCst);
            // Unblock accept().
            let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
            let _ = handle.join();
        }
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(handle) = self.accept.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}

fn handle_connection(stream: TcpStream, service: &dyn Service) -> std::io::Result<()> {
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_write_timeout(Some(IO_TIMEOUT))?;
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?).take(MAX_LINE_BYTES as u64 + 1);
    let mut line = String::new();
    let response = match reader.read_line(&mut line) {
        Ok(0) => return Ok(()),
        Ok(n) if n > MAX_LINE_BYTES => Response::err(ErrorCode::Malformed).to_line(),
        Ok(_) => service.handle_line(&line),
        Err(_) => Response::err(ErrorCode::Malformed).to_line(),
    };
    let mut stream = stream;
    stream.write_all(response.as_bytes())?;
    stream.write_all(b"\n")?;
    stream.flush()?;
    let _ = stream.shutdown(Shutdown::Both);
    Ok(())
}

/// Serves `service` on `addr`, one thread per connection.
pub fn serve(addr: impl ToSocketAddrs, service: Arc<dyn Service>) -> Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let connections = Arc::new(AtomicU64::new(0));
    let accept = {
        let stop = stop.clone();
        let connections = connections.clone();
        thread::Builder::new().name("mcd-accept".into()).spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                connections.fetch_add(1, Ordering::Relaxed);
                let service = service.clone();
                let _ = thread::Builder::new().name("mcd-conn".into()).spawn(move || {
                    let _ = handle_connection(stream, service.as_ref());
                });
            }
        })?
    };
    Ok(ServerHandle { addr, stop, connections, accept: Some(accept) })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl Service for Echo {
        fn handle(&self, request: Request) -> Response {
            match request {
                Request::Stats => Response::Stats { s_c: 1, s_mc: 0 },
                _ => Response::err(ErrorCode::Mode),
            }
        }
    }

    #[test]
    fn every_exchange_uses_a_fresh_connection() {
        let server = serve("127.0.0.1:0", Arc::new(Echo)).unwrap();
        let transport = TcpTransport::new(server.addr()).unwrap();
        for _ in 0..3 {
            assert_eq!(transport.exchange(&Request::Stats).unwrap(), Response::Stats { s_c: 1, s_mc: 0 });
        }
        assert_eq!(server.connections(), 3);
        assert_eq!(transport.exchange_line("not json").unwrap(), "{\"err\":\"malformed\"}\n");
        server.shutdown();
    }

    #[test]
    fn refused_connection_is_retryable() {
        let addr = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap()
        };
        let err = TcpTransport::new(addr).unwrap().exchange(&Request::Stats).unwrap_err();
        assert!(err.is_retryable());
    }
}
