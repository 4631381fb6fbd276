//! Injective two-part concatenation used as KDF input.

use crate::error::{Error, Result};

fn push_part(out: &mut Vec<u8>, part: &[u8]) -> Result<()> {
    let len = u32::try_from(part.len()).map_err(|_| Error::OversizedPart(part.len()))?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(part);
    Ok(())
}

/// Concatenates `x` and `y`, each prefixed with its 4-byte big-endian length.
pub fn concat_unambiguous(x: &[u8], y: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + x.len() + y.len());
    push_part(&mut out, x)?;
    push_part(&mut out, y)?;
    Ok(out)
}

fn take_part<'a>(input: &mut &'a [u8]) -> Result<&'a [u8]> {
    if input.len() < 4 {
        return Err(Error::Malformed("truncated length prefix".into()));
    }
    let (prefix, rest) = input.split_at(4);
    let len = u32::from_be_bytes(prefix.try_into().unwrap()) as usize;
    if rest.len() < len {
        return Err(Error::Malformed("part shorter than its length prefix".into()));
    }
    let (part, rest) = rest.split_at(len);
    *input = rest;
    Ok(part)
}

/// Inverse of [`concat_unambiguous`].
pub fn decompose(bytes: &[u8]) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut input = bytes;
    let x = take_part(&mut input)?;
    let y = take_part(&mut input)?;
    if !input.is_empty() {
        return Err(Error::Malformed("trailing bytes after second part".into()));
    }
    Ok((x.to_vec(), y.to_vec()))
}
