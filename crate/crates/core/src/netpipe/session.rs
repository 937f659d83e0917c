//! Server-side connection state machine.

use super::{MessageType, WireMessage, PROTOCOL_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SessionState {
    AwaitHello,
    Ready,
    Closed,
}

/// What the server does with an incoming message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Disposition {
    /// Reply with HELLO.
    Handshake,
    /// Run the recognition pipeline on the sample.
    Process,
    /// Reply with BYE and close.
    Goodbye,
    /// Reply with ERROR{PROTOCOL} and close.
    Reject(String),
}

impl SessionState {
    pub const ALL: [SessionState; 3] = [Self::AwaitHello, Self::Ready, Self::Closed];

    /// Legal (state, type) pairs; everything else is a protocol violation.
    pub fn accepts(self, ty: MessageType) -> bool {
        matches!(
            (self, ty),
            (Self::AwaitHello, MessageType::Hello)
                | (Self::AwaitHello, MessageType::Bye)
                | (Self::Ready, MessageType::Landmarks)
                | (Self::Ready, MessageType::Bye)
        )
    }

    pub fn on_message(self, msg: &WireMessage) -> (SessionState, Disposition) {
        let ty = msg.message_type();
        if !self.accepts(ty) {
            return (
                Self::Closed,
                Disposition::Reject(format!("{ty:?} is not allowed in state {self:?}")),
            );
        }
        match msg {
            WireMessage::Hello { protocol_version } if *protocol_version != PROTOCOL_VERSION => (
                Self::Closed,
                Disposition::Reject(format!(
                    "unsupported protocol version {protocol_version}, expected {PROTOCOL_VERSION}"
                )),
            ),
            WireMessage::Hello { .. } => (Self::Ready, Disposition::Handshake),
            WireMessage::Landmarks { .. } => (Self::Ready, Disposition::Process),
            _ => (Self::Closed, Disposition::Goodbye),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn handshake_then_ready() {
        let (s, d) = SessionState::AwaitHello.on_message(&WireMessage::hello());
        assert_eq!((s, d), (SessionState::Ready, Disposition::Handshake));
        let (s, d) = SessionState::AwaitHello.on_message(&WireMessage::Hello { protocol_version: 2 });
        assert_eq!(s, SessionState::Closed);
        assert!(matches!(d, Disposition::Reject(_)));
    }

    #[test]
    fn landmarks_before_hello_rejected() {
        assert!(!SessionState::AwaitHello.accepts(MessageType::Landmarks));
        assert!(SessionState::Ready.accepts(MessageType::Landmarks));
        assert!(MessageType::ALL.iter().all(|&t| !SessionState::Closed.accepts(t)));
    }
}
