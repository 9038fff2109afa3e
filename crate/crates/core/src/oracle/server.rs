use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use super::wire::handle_line;
use super::{Oracle, OracleConfig};

fn serve_connection(oracle: &Oracle, stream: TcpStream) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut resp = handle_line(oracle, &line);
        resp.push('\n');
        writer.write_all(resp.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

/// A running service; dropping the handle does not stop it.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
    oracle: Arc<Oracle>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn oracle(&self) -> &Arc<Oracle> {
        &self.oracle
    }

    /// Stops accepting new connections and waits for the accept loop to exit.
    /// Connections already open keep being served until their peers hang up.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // unblock accept()
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` and serves `oracle` on a background thread, one thread per
/// connection.
pub fn spawn_server(oracle: Arc<Oracle>, addr: impl ToSocketAddrs) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let (o, s) = (oracle.clone(), stop.clone());
    let thread = thread::spawn(move || {
        for conn in listener.incoming() {
            if s.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let o = o.clone();
            thread::spawn(move || {
                if let Err(e) = serve_connection(&o, stream) {
                    log::debug!("connection closed: {e}");
                }
            });
        }
    });
    Ok(ServerHandle {
        addr: local,
        stop,
        thread: Some(thread),
        oracle,
    })
}

/// Loads the model named in `config` and serves it until the process exits.
pub fn serve(config: &OracleConfig) -> crate::Result<()> {
    let oracle = Arc::new(Oracle::from_config(config)?);
    let handle = spawn_server(oracle, config.listen_address.as_str())?;
    log::info!(
        "serving {} on {} with budget {}",
        config.model_path.display(),
        handle.local_addr(),
        config.budget
    );
    if let Some(t) = handle.thread {
        let _ = t.join();
    }
    Ok(())
}
