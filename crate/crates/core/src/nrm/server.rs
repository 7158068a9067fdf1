use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::protocol::{decode, encode, ClientMessage, ServerMessage, MAX_LINE_BYTES};
use super::session::{ServerContext, Session};
use super::NrmError;

/// Resource-manager server: one thread per connection, one session per
/// connection.
pub struct NrmServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl NrmServer {
    /// Binds and starts accepting in a background thread.
    pub fn spawn(addr: impl ToSocketAddrs, ctx: ServerContext) -> Result<Self, NrmError> {
        ctx.caps.validate()?;
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || accept_loop(listener, Arc::new(ctx), stop_flag));
        Ok(Self {
            addr,
            stop,
            handle: Some(handle),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop ends (it runs until [`shutdown`]).
    ///
    /// [`shutdown`]: NrmServer::shutdown
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    /// Stops accepting new connections. Open sessions run until their
    /// clients disconnect.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for NrmServer {
    fn drop(&mut self) {
        if self.handle.is_some() {
            self.stop_accepting();
        }
    }
}

fn accept_loop(listener: TcpListener, ctx: Arc<ServerContext>, stop: Arc<AtomicBool>) {
    let next_id = Arc::new(AtomicU64::new(1));
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let ctx = Arc::clone(&ctx);
        let id = next_id.fetch_add(1, Ordering::SeqCst);
        std::thread::spawn(move || {
            let _ = serve_connection(stream, &ctx, id);
        });
    }
}

/// Serves one connection until EOF. Lines longer than the limit are
/// discarded with an error reply.
pub fn serve_connection(stream: TcpStream, ctx: &ServerContext, session_id: u64) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut session = Session::new(ctx, session_id);
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = Read::by_ref(&mut reader)
            .take(MAX_LINE_BYTES as u64 + 2)
            .read_until(b'\n', &mut line)?;
        if n == 0 {
            return Ok(());
        }
        let reply = if !line.ends_with(b"\n") && n > MAX_LINE_BYTES {
            // skip the rest of the oversized line
            let mut rest = Vec::new();
            reader.read_until(b'\n', &mut rest)?;
            ServerMessage::error(format!("line longer than {MAX_LINE_BYTES} bytes"))
        } else {
            session.handle_line(&line)
        };
        writer.write_all(encode(&reply).as_bytes())?;
        writer.flush()?;
    }
}

/// Synchronous request/response client.
pub struct NrmClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl NrmClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, NrmError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
        })
    }

    pub fn request(&mut self, msg: &ClientMessage) -> Result<ServerMessage, NrmError> {
        self.send_raw(encode(msg).as_bytes())
    }

    /// Sends bytes verbatim (a newline is appended if missing) and reads one
    /// reply line.
    pub fn send_raw(&mut self, line: &[u8]) -> Result<ServerMessage, NrmError> {
        self.writer.write_all(line)?;
        if !line.ends_with(b"\n") {
            self.writer.write_all(b"\n")?;
        }
        self.writer.flush()?;
        let mut reply = Vec::new();
        if self.reader.read_until(b'\n', &mut reply)? == 0 {
            return Err(NrmError::Io("server closed the connection".into()));
        }
        decode(&reply)
    }
}
