//! WebSocket front end: one task and one [`Session`] per connection.

use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::time::MissedTickBehavior;
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{ErrorCode, ServerFrame};
use crate::session::{Session, SessionConfig};

/// Accepts connections until the listener fails. Each connection gets its own
/// session; a failing connection is logged and dropped.
pub async fn serve(listener: TcpListener, cfg: SessionConfig) -> std::io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let cfg = cfg.clone();
        tokio::spawn(async move {
            log::info!("session opened for {peer}");
            match run_connection(stream, cfg).await {
                Ok(()) => log::info!("session closed for {peer}"),
                Err(e) => log::warn!("session for {peer} ended with error: {e}"),
            }
        });
    }
}

/// Drives one session: frames in, acks and decimated ticks out. The simulation
/// advances by `sim_rate / tick_rate` steps per broadcast period.
pub async fn run_connection(
    stream: TcpStream,
    cfg: SessionConfig,
) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut tx, mut rx) = ws.split();
    let steps_per_period = cfg.sim_rate() / cfg.tick_rate;
    let mut clock = tokio::time::interval(Duration::from_secs_f64(1.0 / cfg.tick_rate));
    clock.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let mut session = Session::new(cfg);
    let mut carry = 0.0;
    loop {
        let frames = tokio::select! {
            msg = rx.next() => match msg {
                None => return Ok(()),
                Some(Err(e)) => return Err(e),
                Some(Ok(Message::Text(text))) => session.handle_text(text.as_str()),
                Some(Ok(Message::Binary(_))) => {
                    vec![ServerFrame::error(None, ErrorCode::BadFrame, "binary messages are not supported")]
                }
                Some(Ok(Message::Close(_))) => return Ok(()),
                Some(Ok(_)) => continue,
            },
            _ = clock.tick() => {
                carry += steps_per_period;
                let n = carry.floor();
                carry -= n;
                session.advance(n as usize)
            }
        };
        for f in frames {
            tx.feed(Message::text(f.to_json())).await?;
        }
        tx.flush().await?;
    }
}
