use std::collections::BTreeMap;
use std::path::Path;

use crate::features::{parse_keystroke_log, KeystrokeEvent};
use crate::{Error, Result};

/// Training (first) and testing (second) session of one user.
#[derive(Clone, Debug, PartialEq)]
pub struct UserData {
    pub id: String,
    pub train: Vec<KeystrokeEvent>,
    pub test: Vec<KeystrokeEvent>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub users: Vec<UserData>,
}

impl Dataset {
    /// Loads every `<id>_s1.csv` / `<id>_s2.csv` pair in `dir`, ordered by
    /// id. A session without its partner is an error.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut sessions: BTreeMap<String, [Option<Vec<KeystrokeEvent>>; 2]> = BTreeMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            let (id, slot) = if let Some(id) = name.strip_suffix("_s1.csv") {
                (id, 0)
            } else if let Some(id) = name.strip_suffix("_s2.csv") {
                (id, 1)
            } else {
                continue;
            };
            let text = std::fs::read_to_string(&path)?;
            let log = parse_keystroke_log(&text).map_err(|e| Error::Validation(format!("{name}: {e}")))?;
            sessions.entry(id.to_string()).or_default()[slot] = Some(log.events);
        }
        let mut users = Vec::with_capacity(sessions.len());
        for (id, [train, test]) in sessions {
            match (train, test) {
                (Some(train), Some(test)) => users.push(UserData { id, train, test }),
                _ => return Err(Error::Validation(format!("user {id} lacks one of its two sessions"))),
            }
        }
        if users.is_empty() {
            return Err(Error::Validation(format!("no session files in {}", dir.display())));
        }
        Ok(Self { users })
    }
}
