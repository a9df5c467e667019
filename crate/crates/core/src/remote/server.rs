//! Authentication server: one thread per connection, shared registry.

use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{ErrorCode, Registry, RemoteError, AUX_CHALLENGES};
use crate::protocol::{hello_device_id, Frame, FrameType, ProtocolConfig, ProtocolError, TrustedChip};
use crate::rng::{EntropySourceModel, Trng};

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub cfg: ProtocolConfig,
    /// Seeds the per-session entropy sources and auxiliary challenges.
    pub seed: u64,
    pub io_timeout: Duration,
    /// Fault injection: close the connection after this many license frames.
    pub drop_after_frames: Option<usize>,
}

impl ServerOptions {
    pub fn new(cfg: ProtocolConfig, seed: u64) -> Self {
        Self { cfg, seed, io_timeout: Duration::from_secs(10), drop_after_frames: None }
    }
}

/// One line of the server log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLog {
    pub device_id: String,
    pub session_id: Option<String>,
    pub trn: Option<String>,
    pub cycles: Option<u64>,
    pub activation_count: Option<u64>,
    pub error: Option<String>,
}

pub struct AuthServer {
    registry: Arc<RwLock<Registry>>,
    opts: ServerOptions,
    rng: Mutex<ChaCha20Rng>,
    log: Mutex<Vec<SessionLog>>,
    sink: Mutex<Option<Box<dyn Write + Send>>>,
}

/// A server running on a background thread; stops on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
    server: Arc<AuthServer>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn server(&self) -> &Arc<AuthServer> {
        &self.server
    }

    pub fn shutdown(&mut self) {
        if let Some(t) = self.thread.take() {
            self.stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl AuthServer {
    pub fn new(registry: Registry, opts: ServerOptions) -> Arc<Self> {
        let rng = ChaCha20Rng::seed_from_u64(opts.seed);
        Arc::new(Self { registry: Arc::new(RwLock::new(registry)), opts, rng: Mutex::new(rng), log: Mutex::new(Vec::new()), sink: Mutex::new(None) })
    }

    pub fn registry(&self) -> &Arc<RwLock<Registry>> {
        &self.registry
    }

    /// Also writes each finished session as a JSON line to `sink`.
    pub fn set_log_sink(&self, sink: Box<dyn Write + Send>) {
        *self.sink.lock().unwrap() = Some(sink);
    }

    pub fn log(&self) -> Vec<SessionLog> {
        self.log.lock().unwrap().clone()
    }

    /// Binds nothing itself: serves `listener` on a background thread.
    pub fn spawn(self: &Arc<Self>, listener: TcpListener) -> io::Result<ServerHandle> {
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let (server, flag) = (Arc::clone(self), Arc::clone(&stop));
        let thread = std::thread::spawn(move || server.serve(listener, &flag));
        Ok(ServerHandle { addr, stop, thread: Some(thread), server: Arc::clone(self) })
    }

    /// Accept loop; returns once `stop` is set and a connection wakes it.
    pub fn serve(self: &Arc<Self>, listener: TcpListener, stop: &AtomicBool) {
        for stream in listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let server = Arc::clone(self);
            std::thread::spawn(move || server.handle(stream));
        }
    }

    pub fn handle(&self, mut stream: TcpStream) {
        let _ = stream.set_read_timeout(Some(self.opts.io_timeout));
        let _ = stream.set_write_timeout(Some(self.opts.io_timeout));
        let _ = stream.set_nodelay(true);
        let mut entry = SessionLog {
            device_id: String::new(),
            session_id: None,
            trn: None,
            cycles: None,
            activation_count: None,
            error: None,
        };
        if let Err(e) = self.session(&mut stream, &mut entry) {
            if let RemoteError::Protocol(p) = &e {
                let msg = match p {
                    ProtocolError::UnknownDevice(id) => id.clone(),
                    other => other.to_string(),
                };
                let _ = Frame::error(ErrorCode::of(p) as u8, &msg).write_to(&mut stream);
            }
            entry.error = Some(e.to_string());
        }
        if let Some(sink) = self.sink.lock().unwrap().as_mut() {
            let _ = writeln!(sink, "{}", serde_json::to_string(&entry).expect("serializable"));
            let _ = sink.flush();
        }
        self.log.lock().unwrap().push(entry);
    }

    fn session(&self, stream: &mut TcpStream, log: &mut SessionLog) -> Result<(), RemoteError> {
        let hello = Frame::read_from(stream)?;
        if hello.ftype != FrameType::Hello {
            return Err(ProtocolError::UnexpectedFrame { expected: "HELLO", got: hello.ftype.name().into() }.into());
        }
        let id = hello_device_id(&hello)?;
        log.device_id = id.clone();
        let entry = self.registry.read().unwrap().get(&id).cloned().ok_or(ProtocolError::UnknownDevice(id.clone()))?;
        let (trng_seed, aux) = {
            let mut rng = self.rng.lock().unwrap();
            let aux: Vec<u64> = (0..AUX_CHALLENGES).map(|_| rng.gen()).collect();
            (rng.gen::<u64>(), aux)
        };
        let cfg = self.opts.cfg.clone();
        let trng = Trng::new(EntropySourceModel::unbiased(trng_seed), cfg.min_entropy);
        let mut trusted = TrustedChip::new(cfg, entry.ok()?, entry.sk()?, entry.challenge_value()?, trng)?;
        trusted.start_session(&hello)?;
        log.session_id = trusted.session_id().map(|s| format!("{s:016x}"));
        trusted.challenge_frame(&aux)?.write_to(stream)?;
        trusted.verify_auth(&Frame::read_from(stream)?, &aux)?;

        let before = trusted.meter().total();
        let frames = trusted.issue_license()?;
        let cycles = trusted.meter().total() - before;
        log.trn = trusted.current_trn().map(|t| t.to_hex());
        for (i, f) in frames.iter().enumerate() {
            if self.opts.drop_after_frames == Some(i) {
                let _ = stream.shutdown(std::net::Shutdown::Both);
                return Err(RemoteError::Network("dropped by fault injection".into()));
            }
            f.write_to(stream)?;
        }
        trusted.finish(&Frame::read_from(stream)?)?;
        let count = self.registry.write().unwrap().record_activation(&id, now())?;
        log.cycles = Some(cycles);
        log.activation_count = Some(count);
        let mut payload = count.to_le_bytes().to_vec();
        payload.extend_from_slice(&cycles.to_le_bytes());
        Frame::new(FrameType::Ack, 0, payload).write_to(stream)?;
        Ok(())
    }
}
