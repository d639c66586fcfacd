//! Binary container for trained reduced-order models.
//!
//! ```text
//! magic    b"FROM1\0"
//! version  u32
//! length   u64            payload length in bytes
//! payload  meta_len u64, meta JSON, then V, each Â_t, M̂, each ĝ_t
//!          as (rows u64, cols u64, column-major f64 data)
//! crc      u32            CRC-32 of the payload
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use fracrom_core::rom::{RomArtifact, RomMeta};
use fracrom_core::DenseMatrix;

use crate::error::CliError;

pub const MAGIC: &[u8; 6] = b"FROM1\0";
pub const VERSION: u32 = 1;

const HEADER_LEN: usize = 6 + 4 + 8;

fn put_matrix(out: &mut Vec<u8>, rows: usize, cols: usize, data: &[f64]) {
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(rom: &RomArtifact) -> Result<Vec<u8>, CliError> {
    let meta = serde_json::to_vec(&rom.meta)
        .map_err(|e| CliError::Artifact(format!("metadata: {e}")))?;
    let mut payload = Vec::new();
    payload.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    payload.extend_from_slice(&meta);
    let mats = std::iter::once(&rom.v)
        .chain(&rom.a_hat)
        .chain(std::iter::once(&rom.m_hat));
    for m in mats {
        put_matrix(&mut payload, m.nrows(), m.ncols(), m.data());
    }
    for g in &rom.g_hat {
        put_matrix(&mut payload, g.len(), 1, g);
    }

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CliError::Artifact("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize, CliError> {
        usize::try_from(self.u64()?).map_err(|_| CliError::Artifact("length overflow".into()))
    }

    fn matrix(&mut self, what: &str) -> Result<DenseMatrix, CliError> {
        let rows = self.len()?;
        let cols = self.len()?;
        let count = rows
            .checked_mul(cols)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| CliError::Artifact(format!("{what}: size overflow")))?;
        let data = self
            .take(count)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        DenseMatrix::from_col_major(rows, cols, data)
            .map_err(|e| CliError::Artifact(format!("{what}: {e}")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<RomArtifact, CliError> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(CliError::Artifact("file too short".into()));
    }
    if &bytes[..6] != MAGIC {
        return Err(CliError::Artifact("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    if version != VERSION {
        return Err(CliError::Artifact(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let payload_len = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    if payload_len != (bytes.len() - HEADER_LEN - 4) as u64 {
        return Err(CliError::Artifact(format!(
            "payload length {payload_len} does not match file size {}",
            bytes.len()
        )));
    }
    let payload = &bytes[HEADER_LEN..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(payload) != stored {
        return Err(CliError::Artifact("checksum mismatch".into()));
    }

    let mut r = Reader { buf: payload, pos: 0 };
    let meta_len = r.len()?;
    let meta: RomMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| CliError::Artifact(format!("metadata: {e}")))?;
    let v = r.matrix("V")?;
    let a_hat = (0..meta.stiffness_coeffs.len())
        .map(|t| r.matrix(&format!("A_hat[{t}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let m_hat = r.matrix("M_hat")?;
    let g_hat = (0..meta.load_coeffs.len())
        .map(|t| {
            let g = r.matrix(&format!("g_hat[{t}]"))?;
            if g.ncols() != 1 {
                return Err(CliError::Artifact(format!("g_hat[{t}] is not a vector")));
            }
            Ok(g.into_data())
        })
        .collect::<Result<Vec<_>, _>>()?;
    if r.pos != payload.len() {
        return Err(CliError::Artifact(format!(
            "{} trailing bytes after the last array",
            payload.len() - r.pos
        )));
    }
    let rom = RomArtifact {
        v,
        a_hat,
        m_hat,
        g_hat,
        meta,
    };
    rom.validate()
        .map_err(|e| CliError::Artifact(e.to_string()))?;
    Ok(rom)
}

pub fn write(path: &Path, rom: &RomArtifact) -> Result<(), CliError> {
    let bytes = to_bytes(rom)?;
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read(path: &Path) -> Result<RomArtifact, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fracrom_core::problems::GpRhs;
    use fracrom_core::rom::{offline_train, TrainingPlan};
    use fracrom_core::ProblemSpec;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn small_rom() -> &'static RomArtifact {
        static ROM: OnceLock<RomArtifact> = OnceLock::new();
        ROM.get_or_init(|| {
            let p = ProblemSpec::Gp {
                rhs: GpRhs::WhiteNoise { seed: 4 },
            }
            .build(9, 9)
            .unwrap();
            let mut plan =
                TrainingPlan::new(vec![vec![15.0], vec![120.0]], p.mesh.h(), 5, 2).unwrap();
            plan.created = 1_700_000_000;
            offline_train(&plan, &p).unwrap().0
        })
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let rom = small_rom();
        let bytes = to_bytes(rom).unwrap();
        assert_eq!(&bytes[..6], MAGIC);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(&back, rom);
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_damaged_headers() {
        let bytes = to_bytes(small_rom()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(CliError::Artifact(m)) if m.contains("magic")));
        let mut bad = bytes.clone();
        bad[6] = 2;
        assert!(matches!(from_bytes(&bad), Err(CliError::Artifact(m)) if m.contains("version")));
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn corrupt_basis_fails_validation() {
        let mut rom = small_rom().clone();
        rom.v.data_mut()[0] += 1.0;
        let bytes = to_bytes(&rom).unwrap();
        assert!(matches!(from_bytes(&bytes), Err(CliError::Artifact(m)) if m.contains("orthonormal")));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn any_payload_bit_flip_is_detected(byte in 0usize..10_000, bit in 0u8..8) {
            let bytes = to_bytes(small_rom()).unwrap();
            let i = HEADER_LEN + byte % (bytes.len() - HEADER_LEN - 4);
            let mut bad = bytes.clone();
            bad[i] ^= 1 << bit;
            prop_assert!(matches!(from_bytes(&bad), Err(CliError::Artifact(m)) if m.contains("checksum")));
        }
    }
}
