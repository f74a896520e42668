use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::certs::PartyId;
use crate::primitives::AeadKey;

use super::HandshakeError;

pub const TRUST_STORE_MAGIC: &[u8; 8] = b"LSEGTS01";
/// `peer_id(8) | ed_public(32) | k_init(16) | established_at(8, BE)`.
pub const TRUST_RECORD_LEN: usize = 64;

/// What Phase 1 leaves behind for one peer.
#[derive(Clone, PartialEq, Eq)]
pub struct PeerTrust {
    pub peer_id: PartyId,
    pub peer_ed_public: [u8; 32],
    pub k_init: AeadKey,
    pub established_at: u64,
}

impl fmt::Debug for PeerTrust {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeerTrust")
            .field("peer_id", &self.peer_id)
            .field("established_at", &self.established_at)
            .finish_non_exhaustive()
    }
}

impl PeerTrust {
    fn encode(&self) -> [u8; TRUST_RECORD_LEN] {
        let mut r = [0u8; TRUST_RECORD_LEN];
        r[..8].copy_from_slice(&self.peer_id.0);
        r[8..40].copy_from_slice(&self.peer_ed_public);
        r[40..56].copy_from_slice(self.k_init.as_bytes());
        r[56..].copy_from_slice(&self.established_at.to_be_bytes());
        r
    }

    fn decode(r: &[u8]) -> PeerTrust {
        PeerTrust {
            peer_id: PartyId(r[..8].try_into().unwrap()),
            peer_ed_public: r[8..40].try_into().unwrap(),
            k_init: AeadKey::from_slice(&r[40..56]).unwrap(),
            established_at: u64::from_be_bytes(r[56..64].try_into().unwrap()),
        }
    }
}

/// Peer trust keyed by party id, optionally mirrored to a file.
///
/// The file holds `k_init` in the clear and is written with mode 0600.
pub struct TrustStore {
    peers: Mutex<HashMap<PartyId, PeerTrust>>,
    path: Option<PathBuf>,
}

impl fmt::Debug for TrustStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrustStore").field("path", &self.path).field("len", &self.len()).finish()
    }
}

impl Default for TrustStore {
    fn default() -> Self {
        TrustStore::in_memory()
    }
}

impl TrustStore {
    pub fn in_memory() -> Self {
        TrustStore { peers: Mutex::new(HashMap::new()), path: None }
    }

    /// Loads `path` if it exists; later inserts are written back to it.
    pub fn open(path: &Path) -> Result<Self, HandshakeError> {
        let mut peers = HashMap::new();
        match fs::read(path) {
            Ok(bytes) => {
                if bytes.len() < 8 || &bytes[..8] != TRUST_STORE_MAGIC {
                    return Err(HandshakeError::TrustStore("bad magic".into()));
                }
                let body = &bytes[8..];
                if body.len() % TRUST_RECORD_LEN != 0 {
                    return Err(HandshakeError::TrustStore("truncated record".into()));
                }
                for r in body.chunks_exact(TRUST_RECORD_LEN) {
                    let t = PeerTrust::decode(r);
                    peers.insert(t.peer_id, t);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(HandshakeError::TrustStore(e.to_string())),
        }
        Ok(TrustStore { peers: Mutex::new(peers), path: Some(path.to_path_buf()) })
    }

    pub fn get(&self, peer: &PartyId) -> Option<PeerTrust> {
        self.peers.lock().unwrap().get(peer).cloned()
    }

    /// The only entry, if there is exactly one.
    pub fn single(&self) -> Option<PeerTrust> {
        let peers = self.peers.lock().unwrap();
        if peers.len() == 1 {
            peers.values().next().cloned()
        } else {
            None
        }
    }

    pub fn insert(&self, trust: PeerTrust) -> Result<(), HandshakeError> {
        let mut peers = self.peers.lock().unwrap();
        peers.insert(trust.peer_id, trust);
        self.persist(&peers)
    }

    pub fn remove(&self, peer: &PartyId) -> Result<Option<PeerTrust>, HandshakeError> {
        let mut peers = self.peers.lock().unwrap();
        let old = peers.remove(peer);
        self.persist(&peers)?;
        Ok(old)
    }

    pub fn clear(&self) -> Result<(), HandshakeError> {
        let mut peers = self.peers.lock().unwrap();
        peers.clear();
        self.persist(&peers)
    }

    pub fn len(&self) -> usize {
        self.peers.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn persist(&self, peers: &HashMap<PartyId, PeerTrust>) -> Result<(), HandshakeError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let io = |e: std::io::Error| HandshakeError::TrustStore(e.to_string());
        let mut records: Vec<_> = peers.values().collect();
        records.sort_by_key(|t| t.peer_id);
        let mut bytes = Vec::with_capacity(8 + records.len() * TRUST_RECORD_LEN);
        bytes.extend_from_slice(TRUST_STORE_MAGIC);
        for t in records {
            bytes.extend_from_slice(&t.encode());
        }
        let tmp = path.with_extension("tmp");
        let mut opts = fs::OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(&tmp).map_err(io)?;
        f.write_all(&bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }
}
