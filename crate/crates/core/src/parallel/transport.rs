//! Frame transports: an in-process channel pair and TCP.

use std::io::{BufWriter, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::mpsc;

use super::wire::{WireMessage, MAX_FRAME_BYTES};
use crate::Error;

pub trait FrameSender: Send {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), Error>;
}

pub trait FrameReceiver: Send {
    /// Next full frame, or `None` once the peer has gone away.
    fn recv_frame(&mut self) -> Result<Option<Vec<u8>>, Error>;
}

/// One side of a bidirectional connection.
pub struct Endpoint {
    pub sender: Box<dyn FrameSender>,
    pub receiver: Box<dyn FrameReceiver>,
}

impl Endpoint {
    pub fn send(&mut self, msg: &WireMessage) -> Result<(), Error> {
        self.sender.send_frame(&msg.encode())
    }

    pub fn recv(&mut self) -> Result<Option<WireMessage>, Error> {
        match self.receiver.recv_frame()? {
            Some(frame) => WireMessage::decode(&frame).map(Some),
            None => Ok(None),
        }
    }
}

struct ChannelSender(mpsc::Sender<Vec<u8>>);

impl FrameSender for ChannelSender {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), Error> {
        self.0.send(frame.to_vec()).map_err(|_| Error::Transport("peer disconnected".into()))
    }
}

struct ChannelReceiver(mpsc::Receiver<Vec<u8>>);

impl FrameReceiver for ChannelReceiver {
    fn recv_frame(&mut self) -> Result<Option<Vec<u8>>, Error> {
        Ok(self.0.recv().ok())
    }
}

/// Two connected in-process endpoints.
pub fn in_process_pair() -> (Endpoint, Endpoint) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        Endpoint { sender: Box::new(ChannelSender(a_tx)), receiver: Box::new(ChannelReceiver(a_rx)) },
        Endpoint { sender: Box::new(ChannelSender(b_tx)), receiver: Box::new(ChannelReceiver(b_rx)) },
    )
}

struct TcpSender {
    out: BufWriter<TcpStream>,
}

impl FrameSender for TcpSender {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), Error> {
        self.out
            .write_all(frame)
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::Transport(format!("send failed: {e}")))
    }
}

impl Drop for TcpSender {
    fn drop(&mut self) {
        let _ = self.out.flush();
        let _ = self.out.get_ref().shutdown(Shutdown::Write);
    }
}

struct TcpReceiver {
    input: TcpStream,
}

impl FrameReceiver for TcpReceiver {
    fn recv_frame(&mut self) -> Result<Option<Vec<u8>>, Error> {
        let mut prefix = [0u8; 4];
        let mut got = 0;
        while got < 4 {
            match self.input.read(&mut prefix[got..]) {
                Ok(0) if got == 0 => return Ok(None),
                Ok(0) => return Err(Error::Transport("connection closed mid-frame".into())),
                Ok(n) => got += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) if e.kind() == std::io::ErrorKind::ConnectionReset => return Ok(None),
                Err(e) => return Err(Error::Transport(format!("receive failed: {e}"))),
            }
        }
        let len = u32::from_le_bytes(prefix) as usize;
        if len == 0 || len > MAX_FRAME_BYTES {
            return Err(Error::Protocol(format!("frame length {len} out of range")));
        }
        let mut frame = vec![0u8; 4 + len];
        frame[..4].copy_from_slice(&prefix);
        self.input
            .read_exact(&mut frame[4..])
            .map_err(|e| Error::Transport(format!("connection closed mid-frame: {e}")))?;
        Ok(Some(frame))
    }
}

pub fn tcp_endpoint(stream: TcpStream) -> Result<Endpoint, Error> {
    stream.set_nodelay(true)?;
    let input = stream.try_clone()?;
    Ok(Endpoint {
        sender: Box::new(TcpSender { out: BufWriter::with_capacity(64 * 1024, stream) }),
        receiver: Box::new(TcpReceiver { input }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    #[test]
    fn in_process_round_trip_and_disconnect() {
        let (mut a, mut b) = in_process_pair();
        a.send(&WireMessage::Ready).unwrap();
        assert_eq!(b.recv().unwrap(), Some(WireMessage::Ready));
        drop(a);
        assert_eq!(b.recv().unwrap(), None);
        assert!(b.send(&WireMessage::Shutdown).is_err());
    }

    #[test]
    fn tcp_round_trip_and_disconnect() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let client = std::thread::spawn(move || {
            let mut ep = tcp_endpoint(TcpStream::connect(addr).unwrap()).unwrap();
            ep.send(&WireMessage::RunHeader { count: 7 }).unwrap();
            let got = ep.recv().unwrap();
            assert_eq!(got, Some(WireMessage::Shutdown));
        });
        let (s, _) = listener.accept().unwrap();
        let mut ep = tcp_endpoint(s).unwrap();
        assert_eq!(ep.recv().unwrap(), Some(WireMessage::RunHeader { count: 7 }));
        ep.send(&WireMessage::Shutdown).unwrap();
        client.join().unwrap();
        assert_eq!(ep.recv().unwrap(), None);
    }
}
