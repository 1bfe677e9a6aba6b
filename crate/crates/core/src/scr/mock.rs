use super::Literals;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::thread::{self, JoinHandle};
use std::time::Duration;

/// What the mock server does next.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptStep {
    /// Send this sensor datagram and wait for one actuator reply.
    Sensors(String),
    /// Send the restart literal and wait for a fresh identification.
    Restart,
    /// Send the shutdown literal and stop.
    Shutdown,
}

/// Every datagram in order, as text, tagged by direction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MockTranscript {
    pub received: Vec<String>,
    pub sent: Vec<String>,
}

/// Single-client loopback race server that replays a fixed script.
pub struct MockServer {
    socket: UdpSocket,
    pub literals: Literals,
    /// Abandon the session when the client goes quiet this long.
    pub patience: Duration,
}

impl MockServer {
    pub fn bind() -> io::Result<Self> {
        let socket = UdpSocket::bind("127.0.0.1:0")?;
        Ok(Self {
            socket,
            literals: Literals::default(),
            patience: Duration::from_secs(5),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    fn recv(&self, buf: &mut [u8], transcript: &mut MockTranscript) -> io::Result<SocketAddr> {
        let (n, from) = self.socket.recv_from(buf)?;
        transcript
            .received
            .push(String::from_utf8_lossy(&buf[..n]).into_owned());
        Ok(from)
    }

    fn send(&self, text: &str, to: SocketAddr, transcript: &mut MockTranscript) -> io::Result<()> {
        self.socket.send_to(text.as_bytes(), to)?;
        transcript.sent.push(text.to_string());
        Ok(())
    }

    fn identify(&self, buf: &mut [u8], transcript: &mut MockTranscript) -> io::Result<SocketAddr> {
        let client = self.recv(buf, transcript)?;
        self.send(&self.literals.identified, client, transcript)?;
        Ok(client)
    }

    pub fn serve(&self, script: &[ScriptStep]) -> io::Result<MockTranscript> {
        self.socket.set_read_timeout(Some(self.patience))?;
        let mut transcript = MockTranscript::default();
        let mut buf = vec![0u8; 65_536];
        let mut client = self.identify(&mut buf, &mut transcript)?;
        for step in script {
            match step {
                ScriptStep::Sensors(text) => {
                    self.send(text, client, &mut transcript)?;
                    self.recv(&mut buf, &mut transcript)?;
                }
                ScriptStep::Restart => {
                    self.send(&self.literals.restart, client, &mut transcript)?;
                    client = self.identify(&mut buf, &mut transcript)?;
                }
                ScriptStep::Shutdown => {
                    self.send(&self.literals.shutdown, client, &mut transcript)?;
                    break;
                }
            }
        }
        Ok(transcript)
    }

    /// Run [`MockServer::serve`] on its own thread.
    pub fn spawn(self, script: Vec<ScriptStep>) -> JoinHandle<io::Result<MockTranscript>> {
        thread::spawn(move || self.serve(&script))
    }
}
