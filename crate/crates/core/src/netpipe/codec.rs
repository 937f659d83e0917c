//! 4-byte big-endian length prefix followed by a UTF-8 JSON payload.

use std::io::{self, Read, Write};

use super::{NetError, WireMessage};

pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

pub fn encode_frame(msg: &WireMessage) -> Result<Vec<u8>, NetError> {
    let payload = serde_json::to_vec(msg).map_err(|e| NetError::Malformed(e.to_string()))?;
    if payload.len() > MAX_FRAME_LEN {
        return Err(NetError::FrameTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(4 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_payload(payload: &[u8]) -> Result<WireMessage, NetError> {
    serde_json::from_slice(payload).map_err(|e| NetError::Malformed(e.to_string()))
}

/// Incremental decoder: feed arbitrary byte chunks, pull whole messages.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes received but not yet consumed as a message.
    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete message, or `Ok(None)` if more bytes are needed.
    pub fn next_message(&mut self) -> Result<Option<WireMessage>, NetError> {
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let len = u32::from_be_bytes(self.buf[..4].try_into().expect("4 bytes")) as usize;
        if len > MAX_FRAME_LEN {
            return Err(NetError::FrameTooLarge(len));
        }
        if self.buf.len() < 4 + len {
            return Ok(None);
        }
        let msg = decode_payload(&self.buf[4..4 + len]);
        self.buf.drain(..4 + len);
        msg.map(Some)
    }
}

pub fn write_message<W: Write>(w: &mut W, msg: &WireMessage) -> Result<(), NetError> {
    w.write_all(&encode_frame(msg)?)?;
    w.flush()?;
    Ok(())
}

/// Blocking read of one message. A clean end of stream before the first
/// length byte yields `Ok(None)`.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<WireMessage>, NetError> {
    let mut len_buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len_buf[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(NetError::Transport(io::ErrorKind::UnexpectedEof.into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > MAX_FRAME_LEN {
        return Err(NetError::FrameTooLarge(len));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    decode_payload(&payload).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmark::{LandmarkFrame, LandmarkKind, SignSample};

    #[test]
    fn bye_bytes() {
        let frame = encode_frame(&WireMessage::Bye {}).unwrap();
        assert_eq!(&frame[..4], &[0, 0, 0, 0x18]);
        assert_eq!(&frame[4..], br#"{"type":"BYE","body":{}}"#);
        assert_eq!(frame.len(), 4 + 24);
    }

    #[test]
    fn landmarks_round_trip() {
        let frames = (0..3)
            .map(|f| LandmarkFrame::new(f, LandmarkKind::LeftHand, 4, 0.25 * f as f32, f32::NAN, -0.5))
            .collect();
        let msg = WireMessage::Landmarks {
            sample: SignSample::new("s", frames, None),
        };
        let frame = encode_frame(&msg).unwrap();
        let mut d = FrameDecoder::new();
        d.push(&frame);
        assert_eq!(d.next_message().unwrap(), Some(msg));
        assert_eq!(d.buffered(), 0);
    }

    #[test]
    fn partial_frame_needs_more_data() {
        let mut d = FrameDecoder::new();
        d.push(&[0, 0, 0, 5, b'{', b'"', b't']);
        assert!(d.next_message().unwrap().is_none());
        d.push(b"y");
        assert!(d.next_message().unwrap().is_none());
        d.push(b"\"");
        assert!(matches!(d.next_message(), Err(NetError::Malformed(_))));
    }

    #[test]
    fn bad_frames_rejected() {
        let mut d = FrameDecoder::new();
        d.push(&[0, 0, 0, 2, b'{', b'}']);
        assert!(matches!(d.next_message(), Err(NetError::Malformed(_))));
        let mut d = FrameDecoder::new();
        d.push(&[0xff, 0xff, 0xff, 0xff]);
        assert!(matches!(d.next_message(), Err(NetError::FrameTooLarge(_))));
        let too_big = WireMessage::error(super::super::ErrorCode::Internal, "x".repeat(MAX_FRAME_LEN));
        assert!(matches!(encode_frame(&too_big), Err(NetError::FrameTooLarge(_))));
    }

    #[test]
    fn blocking_read_write() {
        let mut wire = Vec::new();
        write_message(&mut wire, &WireMessage::hello()).unwrap();
        write_message(&mut wire, &WireMessage::Bye {}).unwrap();
        let mut r = &wire[..];
        assert_eq!(read_message(&mut r).unwrap(), Some(WireMessage::hello()));
        assert_eq!(read_message(&mut r).unwrap(), Some(WireMessage::Bye {}));
        assert_eq!(read_message(&mut r).unwrap(), None);
        let mut truncated = &wire[..2];
        assert!(read_message(&mut truncated).is_err());
    }
}
