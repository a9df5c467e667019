//! Device registry persisted as JSON, rewritten atomically.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RemoteError;
use crate::bits::{self, Bits};
use crate::cipher::AeadKey;
use crate::puf::EnrollmentRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceEntry {
    /// Hardwired base challenge, 16 hex digits.
    pub challenge: String,
    pub sk: String,
    pub ok: String,
    pub ok_bits: usize,
    pub activation_count: u64,
    /// Unix seconds of the last successful activation.
    pub last_activation: Option<u64>,
}

impl DeviceEntry {
    pub fn from_enrollment(record: &EnrollmentRecord, ok: &Bits) -> Self {
        Self {
            challenge: record.challenge.clone(),
            sk: record.sk.clone(),
            ok: bits::to_hex(ok),
            ok_bits: ok.len(),
            activation_count: 0,
            last_activation: None,
        }
    }

    pub fn challenge_value(&self) -> Result<u64, RemoteError> {
        u64::from_str_radix(&self.challenge, 16).map_err(|_| RemoteError::Registry("bad challenge".into()))
    }

    pub fn sk(&self) -> Result<AeadKey, RemoteError> {
        hex::decode(&self.sk)
            .ok()
            .and_then(|b| AeadKey::from_slice(&b))
            .ok_or_else(|| RemoteError::Registry("bad SK".into()))
    }

    pub fn ok(&self) -> Result<Bits, RemoteError> {
        bits::from_hex(&self.ok, self.ok_bits).map_err(|_| RemoteError::Registry("bad OK".into()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    pub devices: BTreeMap<String, DeviceEntry>,
    #[serde(skip)]
    path: Option<PathBuf>,
}

impl Registry {
    /// In-memory registry that never touches disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path`, or starts empty when it does not exist yet.
    pub fn open(path: &Path) -> Result<Self, RemoteError> {
        let mut reg = match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| RemoteError::Registry(e.to_string()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Registry::default(),
            Err(e) => return Err(RemoteError::Registry(e.to_string())),
        };
        reg.path = Some(path.to_path_buf());
        Ok(reg)
    }

    pub fn get(&self, id: &str) -> Option<&DeviceEntry> {
        self.devices.get(id)
    }

    pub fn insert(&mut self, id: &str, entry: DeviceEntry) -> Result<(), RemoteError> {
        self.devices.insert(id.to_string(), entry);
        self.save()
    }

    pub fn record_activation(&mut self, id: &str, when: u64) -> Result<u64, RemoteError> {
        let e = self.devices.get_mut(id).ok_or_else(|| RemoteError::Registry(format!("unknown device {id}")))?;
        e.activation_count += 1;
        e.last_activation = Some(when);
        let count = e.activation_count;
        self.save()?;
        Ok(count)
    }

    /// Writes to a temporary file in the same directory, then renames it over
    /// the registry.
    pub fn save(&self) -> Result<(), RemoteError> {
        let Some(path) = &self.path else { return Ok(()) };
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let io = |e: std::io::Error| RemoteError::Registry(e.to_string());
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        let text = serde_json::to_string_pretty(self).expect("serializable");
        tmp.write_all(text.as_bytes()).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }
}
