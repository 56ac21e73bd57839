//! Packed code databases: `DHCODES\0`, version, bit count `K` (u32),
//! entry count (u64), then per entry the little-endian code words followed
//! by a u32 label, and a CRC-32 trailer.

use std::fs;
use std::path::Path;

use super::{ByteReader, ByteWriter};
use crate::bitcode::{words_for, BitCode};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DHCODES\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeDatabase {
    bits: usize,
    codes: Vec<BitCode>,
    labels: Vec<u32>,
}

impl CodeDatabase {
    pub fn new(bits: usize, codes: Vec<BitCode>, labels: Vec<u32>) -> Result<Self> {
        if codes.len() != labels.len() {
            return Err(Error::dim(format!(
                "{} codes but {} labels",
                codes.len(),
                labels.len()
            )));
        }
        if let Some(c) = codes.iter().find(|c| c.len() != bits) {
            return Err(Error::dim(format!(
                "code of {} bits in a {bits}-bit database",
                c.len()
            )));
        }
        Ok(CodeDatabase {
            bits,
            codes,
            labels,
        })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[BitCode] {
        &self.codes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(MAGIC, VERSION);
        w.u32(self.bits as u32);
        w.u64(self.codes.len() as u64);
        for (code, &label) in self.codes.iter().zip(&self.labels) {
            for &word in code.words() {
                w.u64(word);
            }
            w.u32(label);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open(bytes, MAGIC, VERSION)?;
        let bits = r.u32()? as usize;
        let n = r.u64()?;
        let per_entry = words_for(bits) * 8 + 4;
        let remaining = bytes.len().saturating_sub(4 + r.offset() as usize) as u64;
        if n.checked_mul(per_entry as u64) != Some(remaining) {
            return Err(Error::format(
                r.offset(),
                format!("{n} entries of {bits} bits do not match the payload size {remaining}"),
            ));
        }
        let mut codes = Vec::with_capacity(n as usize);
        let mut labels = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let at = r.offset();
            let words = (0..words_for(bits))
                .map(|_| r.u64())
                .collect::<Result<Vec<_>>>()?;
            codes.push(
                BitCode::from_words(bits, words).map_err(|e| Error::format(at, e.to_string()))?,
            );
            labels.push(r.u32()?);
        }
        r.expect_end()?;
        CodeDatabase::new(bits, codes, labels)
    }
}

pub fn save_codes(db: &CodeDatabase, path: &Path) -> Result<()> {
    fs::write(path, db.to_bytes())?;
    Ok(())
}

pub fn load_codes(path: &Path) -> Result<CodeDatabase> {
    CodeDatabase::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip(bits in 1usize..150, rows in prop::collection::vec(prop::collection::vec(any::<bool>(), 150), 0..12)) {
            let codes: Vec<BitCode> = rows.iter().map(|r| BitCode::from_bools(&r[..bits])).collect();
            let labels: Vec<u32> = (0..codes.len() as u32).map(|i| i * 7 % 5).collect();
            let db = CodeDatabase::new(bits, codes, labels).unwrap();
            prop_assert_eq!(CodeDatabase::from_bytes(&db.to_bytes()).unwrap(), db);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let db = CodeDatabase::new(3, vec![BitCode::from_signs(&[1, -1, 1])], vec![2]).unwrap();
        let mut bytes = db.to_bytes();
        assert!(matches!(
            CodeDatabase::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format { .. })
        ));
        bytes[24] ^= 0x80;
        assert!(CodeDatabase::from_bytes(&bytes).is_err());
        let mut wrong = db.to_bytes();
        wrong[0] = b'X';
        assert!(matches!(
            CodeDatabase::from_bytes(&wrong),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(CodeDatabase::new(2, vec![BitCode::negative(2)], vec![]).is_err());
        assert!(CodeDatabase::new(2, vec![BitCode::negative(3)], vec![0]).is_err());
    }
}
