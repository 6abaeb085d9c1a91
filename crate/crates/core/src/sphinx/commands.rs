//! Per-hop routing commands packed into one β slot.
//!
//! Each command is a type byte followed by a fixed-size body. A zero type
//! byte terminates the list; the rest of the slot is zero.

use super::geometry::{NODE_ID_SIZE, RECIPIENT_SIZE, SURB_ID_SIZE};
use super::SphinxError;
use crate::crypto::symmetric::MAC_SIZE;

pub const NEXT_HOP_CMD_LEN: usize = 1 + NODE_ID_SIZE + MAC_SIZE;
pub const DELAY_CMD_LEN: usize = 1 + 4;
pub const RECIPIENT_CMD_LEN: usize = 1 + RECIPIENT_SIZE;
pub const SURB_REPLY_CMD_LEN: usize = 1 + SURB_ID_SIZE;

const T_END: u8 = 0x00;
const T_NEXT_HOP: u8 = 0x01;
const T_DELAY: u8 = 0x02;
const T_RECIPIENT: u8 = 0x03;
const T_SURB_REPLY: u8 = 0x04;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    NextHop { id: [u8; NODE_ID_SIZE], mac: [u8; MAC_SIZE] },
    Delay { millis: u32 },
    Recipient { id: [u8; RECIPIENT_SIZE] },
    SurbReply { id: [u8; SURB_ID_SIZE] },
}

impl Command {
    pub fn encoded_len(&self) -> usize {
        match self {
            Command::NextHop { .. } => NEXT_HOP_CMD_LEN,
            Command::Delay { .. } => DELAY_CMD_LEN,
            Command::Recipient { .. } => RECIPIENT_CMD_LEN,
            Command::SurbReply { .. } => SURB_REPLY_CMD_LEN,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        match self {
            Command::NextHop { id, mac } => {
                out.push(T_NEXT_HOP);
                out.extend_from_slice(id);
                out.extend_from_slice(mac);
            }
            Command::Delay { millis } => {
                out.push(T_DELAY);
                out.extend_from_slice(&millis.to_be_bytes());
            }
            Command::Recipient { id } => {
                out.push(T_RECIPIENT);
                out.extend_from_slice(id);
            }
            Command::SurbReply { id } => {
                out.push(T_SURB_REPLY);
                out.extend_from_slice(id);
            }
        }
    }
}

/// Encodes into exactly `size` bytes.
pub fn encode_commands(cmds: &[Command], size: usize) -> Result<Vec<u8>, SphinxError> {
    let mut out = Vec::with_capacity(size);
    for c in cmds {
        c.write(&mut out);
    }
    if out.len() > size {
        return Err(SphinxError::Malformed("routing commands exceed slot"));
    }
    out.resize(size, 0);
    Ok(out)
}

pub fn decode_commands(slot: &[u8]) -> Result<Vec<Command>, SphinxError> {
    let mut cmds = Vec::new();
    let mut rest = slot;
    while let Some((&t, body)) = rest.split_first() {
        let take = |n: usize| -> Result<&[u8], SphinxError> {
            body.get(..n).ok_or(SphinxError::Malformed("truncated routing command"))
        };
        let (cmd, used) = match t {
            T_END => {
                if body.iter().any(|&b| b != 0) {
                    return Err(SphinxError::Malformed("non-zero bytes after command list"));
                }
                break;
            }
            T_NEXT_HOP => {
                let b = take(NODE_ID_SIZE + MAC_SIZE)?;
                let cmd = Command::NextHop {
                    id: b[..NODE_ID_SIZE].try_into().expect("len"),
                    mac: b[NODE_ID_SIZE..].try_into().expect("len"),
                };
                (cmd, NEXT_HOP_CMD_LEN)
            }
            T_DELAY => {
                let b = take(4)?;
                let cmd = Command::Delay {
                    millis: u32::from_be_bytes(b.try_into().expect("len")),
                };
                (cmd, DELAY_CMD_LEN)
            }
            T_RECIPIENT => {
                let b = take(RECIPIENT_SIZE)?;
                (Command::Recipient { id: b.try_into().expect("len") }, RECIPIENT_CMD_LEN)
            }
            T_SURB_REPLY => {
                let b = take(SURB_ID_SIZE)?;
                (Command::SurbReply { id: b.try_into().expect("len") }, SURB_REPLY_CMD_LEN)
            }
            _ => return Err(SphinxError::Malformed("unknown routing command")),
        };
        cmds.push(cmd);
        rest = &rest[used..];
    }
    Ok(cmds)
}
