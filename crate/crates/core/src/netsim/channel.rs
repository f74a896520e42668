use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender};
use thiserror::Error;

use crate::wire::{frame_len, HEADER_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("channel closed")]
    Closed,
    #[error("receive timed out")]
    Timeout,
    #[error("io: {0}")]
    Io(String),
}

/// A bidirectional, frame-preserving transport. Frames are whole
/// `kind | len | body` encodings.
pub trait Channel: Send {
    fn send(&mut self, frame: &[u8]) -> Result<(), ChannelError>;
    fn recv(&mut self) -> Result<Vec<u8>, ChannelError>;
}

impl<C: Channel + ?Sized> Channel for Box<C> {
    fn send(&mut self, frame: &[u8]) -> Result<(), ChannelError> {
        (**self).send(frame)
    }

    fn recv(&mut self) -> Result<Vec<u8>, ChannelError> {
        (**self).recv()
    }
}

pub struct MemoryChannel {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    timeout: Duration,
}

impl MemoryChannel {
    pub fn from_parts(tx: Sender<Vec<u8>>, rx: Receiver<Vec<u8>>, timeout: Duration) -> Self {
        MemoryChannel { tx, rx, timeout }
    }
}

/// Two connected in-memory endpoints.
pub fn memory_pair(timeout: Duration) -> (MemoryChannel, MemoryChannel) {
    let (a_tx, b_rx) = bounded(64);
    let (b_tx, a_rx) = bounded(64);
    (MemoryChannel::from_parts(a_tx, a_rx, timeout), MemoryChannel::from_parts(b_tx, b_rx, timeout))
}

impl Channel for MemoryChannel {
    fn send(&mut self, frame: &[u8]) -> Result<(), ChannelError> {
        self.tx.send_timeout(frame.to_vec(), self.timeout).map_err(|e| match e {
            crossbeam_channel::SendTimeoutError::Timeout(_) => ChannelError::Timeout,
            crossbeam_channel::SendTimeoutError::Disconnected(_) => ChannelError::Closed,
        })
    }

    fn recv(&mut self) -> Result<Vec<u8>, ChannelError> {
        self.rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => ChannelError::Timeout,
            RecvTimeoutError::Disconnected => ChannelError::Closed,
        })
    }
}

pub struct TcpChannel {
    stream: TcpStream,
}

impl TcpChannel {
    pub fn new(stream: TcpStream, timeout: Option<Duration>) -> io::Result<Self> {
        stream.set_read_timeout(timeout)?;
        stream.set_write_timeout(timeout)?;
        stream.set_nodelay(true)?;
        Ok(TcpChannel { stream })
    }

    pub fn peer_addr(&self) -> io::Result<std::net::SocketAddr> {
        self.stream.peer_addr()
    }
}

fn io_err(e: io::Error) -> ChannelError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => ChannelError::Timeout,
        io::ErrorKind::UnexpectedEof
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::BrokenPipe => ChannelError::Closed,
        _ => ChannelError::Io(e.to_string()),
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, frame: &[u8]) -> Result<(), ChannelError> {
        self.stream.write_all(frame).map_err(io_err)
    }

    fn recv(&mut self) -> Result<Vec<u8>, ChannelError> {
        let mut header = [0u8; HEADER_LEN];
        self.stream.read_exact(&mut header).map_err(io_err)?;
        let mut frame = vec![0u8; frame_len(&header)];
        frame[..HEADER_LEN].copy_from_slice(&header);
        self.stream.read_exact(&mut frame[HEADER_LEN..]).map_err(io_err)?;
        Ok(frame)
    }
}
