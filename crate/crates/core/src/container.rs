//! Binary container shared by datasets, ADP caches and model files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic     8 bytes   b"CSILOC\0\x01"
//! hlen      u64       length of the JSON header in bytes
//! header    hlen      UTF-8 JSON object
//! payload   ...       f64 values, layout described by the header
//! ```

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CSILOC\0\x01";

/// Upper bound on the header size accepted when reading, to reject garbage
/// length fields before allocating.
const MAX_HEADER_BYTES: u64 = 64 << 20;

pub fn write_header<W: Write, H: Serialize>(w: &mut W, header: &H) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

pub fn read_header<R: Read, H: DeserializeOwned>(r: &mut R) -> Result<H> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a csiloc container (bad magic)".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER_BYTES {
        return Err(Error::Format(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)?;
    Ok(serde_json::from_slice(&json)?)
}

pub fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(format!("payload truncated: expected {count} f64 values"))
        } else {
            Error::Io(e)
        }
    })?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Fails if the reader still has bytes left.
pub fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after payload".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Hdr {
        name: String,
        count: usize,
    }

    #[test]
    fn header_and_payload_round_trip() {
        let mut buf = Vec::new();
        let h = Hdr {
            name: "x".into(),
            count: 3,
        };
        write_header(&mut buf, &h).unwrap();
        write_f64s(&mut buf, &[1.0, -2.5, f64::MIN_POSITIVE]).unwrap();

        let mut r = buf.as_slice();
        let back: Hdr = read_header(&mut r).unwrap();
        assert_eq!(back, h);
        assert_eq!(
            read_f64s(&mut r, 3).unwrap(),
            vec![1.0, -2.5, f64::MIN_POSITIVE]
        );
        expect_eof(&mut r).unwrap();
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut r: &[u8] = b"NOTMAGIC\0\0\0\0\0\0\0\0";
        assert!(matches!(
            read_header::<_, Hdr>(&mut r),
            Err(Error::Format(_))
        ));

        let mut buf = Vec::new();
        write_header(
            &mut buf,
            &Hdr {
                name: "y".into(),
                count: 2,
            },
        )
        .unwrap();
        write_f64s(&mut buf, &[1.0]).unwrap();
        let mut r = buf.as_slice();
        let _: Hdr = read_header(&mut r).unwrap();
        assert!(matches!(read_f64s(&mut r, 2), Err(Error::Format(_))));
    }
}
