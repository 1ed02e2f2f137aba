use std::path::{Path, PathBuf};

use crate::protocol::{Message, MessageKind, ProtocolError};

/// One message as it crossed the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub text: String,
}

/// The only channel between parties. Every message is serialized, kept in
/// the transcript (and written to disk when a directory is set), then parsed
/// back; the receiver only ever sees the parsed copy.
#[derive(Debug, Default)]
pub struct Exchange {
    dir: Option<PathBuf>,
    transcript: Vec<Artifact>,
}

impl Exchange {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            transcript: Vec::new(),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn transcript(&self) -> &[Artifact] {
        &self.transcript
    }

    /// Sends `msg` under `name` (a relative path whose file name matches the
    /// message kind) and returns what the receiver reads.
    pub fn send(&mut self, name: &str, msg: &Message) -> Result<Message, ProtocolError> {
        let (kind, _) = MessageKind::from_path(Path::new(name))?;
        if kind != msg.kind() {
            return Err(ProtocolError::Invalid {
                kind,
                reason: format!("{name} cannot carry a {} message", msg.kind()),
            });
        }
        let text = msg.to_json();
        let received = match &self.dir {
            Some(dir) => {
                let path = dir.join(name);
                let io = |source| ProtocolError::Io {
                    path: path.display().to_string(),
                    source,
                };
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent).map_err(io)?;
                }
                std::fs::write(&path, &text).map_err(io)?;
                Message::read(&path)?
            }
            None => Message::parse(kind, &text)?,
        };
        self.transcript.push(Artifact {
            name: name.to_owned(),
            text,
        });
        Ok(received)
    }
}
