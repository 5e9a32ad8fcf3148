//! Byte-level encoding for values that cross rank boundaries.
//!
//! Everything is little-endian. Floats travel as their IEEE-754 bit pattern so
//! a round trip is bit-exact, including NaN payloads and signed zeros.
//! Sequences and strings carry a `u64` element count ahead of their contents.

use std::collections::BTreeMap;

use crate::error::CodecError;

/// Opaque bytes exchanged between ranks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Payload(Vec<u8>);

impl Payload {
    pub fn new(bytes: Vec<u8>) -> Self {
        Payload(bytes)
    }

    pub fn empty() -> Self {
        Payload(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    /// Encodes `value` into a fresh payload.
    pub fn encode<T: Codec>(value: &T) -> Self {
        let mut buf = Vec::new();
        value.encode(&mut buf);
        Payload(buf)
    }

    /// Decodes a value that must occupy the whole payload.
    pub fn decode<T: Codec>(&self) -> Result<T, CodecError> {
        let mut input = self.0.as_slice();
        let value = T::decode(&mut input)?;
        if !input.is_empty() {
            return Err(CodecError::Trailing(input.len()));
        }
        Ok(value)
    }
}

impl From<Vec<u8>> for Payload {
    fn from(bytes: Vec<u8>) -> Self {
        Payload(bytes)
    }
}

pub trait Codec: Sized {
    fn encode(&self, buf: &mut Vec<u8>);
    fn decode(input: &mut &[u8]) -> Result<Self, CodecError>;
}

fn take<'a>(input: &mut &'a [u8], n: usize) -> Result<&'a [u8], CodecError> {
    if input.len() < n {
        return Err(CodecError::Truncated {
            needed: n,
            available: input.len(),
        });
    }
    let (head, tail) = input.split_at(n);
    *input = tail;
    Ok(head)
}

fn take_array<const N: usize>(input: &mut &[u8]) -> Result<[u8; N], CodecError> {
    let mut out = [0u8; N];
    out.copy_from_slice(take(input, N)?);
    Ok(out)
}

fn decode_len(input: &mut &[u8]) -> Result<usize, CodecError> {
    let n = u64::decode(input)?;
    usize::try_from(n).map_err(|_| CodecError::Length(n))
}

macro_rules! le_codec {
    ($($t:ty),*) => {$(
        impl Codec for $t {
            fn encode(&self, buf: &mut Vec<u8>) {
                buf.extend_from_slice(&self.to_le_bytes());
            }
            fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
                Ok(<$t>::from_le_bytes(take_array(input)?))
            }
        }
    )*};
}

le_codec!(u8, u32, u64, i32, i64);

impl Codec for usize {
    fn encode(&self, buf: &mut Vec<u8>) {
        (*self as u64).encode(buf);
    }
    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        decode_len(input)
    }
}

impl Codec for f64 {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.to_bits().encode(buf);
    }
    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(f64::from_bits(u64::decode(input)?))
    }
}

impl Codec for bool {
    fn encode(&self, buf: &mut Vec<u8>) {
        buf.push(u8::from(*self));
    }
    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        match u8::decode(input)? {
            0 => Ok(false),
            1 => Ok(true),
            t => Err(CodecError::InvalidTag(t)),
        }
    }
}

impl Codec for () {
    fn encode(&self, _buf: &mut Vec<u8>) {}
    fn decode(_input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(())
    }
}

impl Codec for String {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.len().encode(buf);
        buf.extend_from_slice(self.as_bytes());
    }
    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        let n = decode_len(input)?;
        let bytes = take(input, n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CodecError::Utf8)
    }
}

impl Codec for Payload {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.0.len().encode(buf);
        buf.extend_from_slice(&self.0);
    }
    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        let n = decode_len(input)?;
        Ok(Payload(take(input, n)?.to_vec()))
    }
}

impl<T: Codec> Codec for Vec<T> {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.len().encode(buf);
        for item in self {
            item.encode(buf);
        }
    }
    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        let n = decode_len(input)?;
        // every element takes at least one byte except zero-sized ones; cap the
        // preallocation so a corrupt length cannot trigger a huge allocation
        let mut out = Vec::with_capacity(n.min(input.len()));
        for _ in 0..n {
            out.push(T::decode(input)?);
        }
        Ok(out)
    }
}

impl<T: Codec> Codec for Option<T> {
    fn encode(&self, buf: &mut Vec<u8>) {
        match self {
            None => buf.push(0),
            Some(v) => {
                buf.push(1);
                v.encode(buf);
            }
        }
    }
    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        match u8::decode(input)? {
            0 => Ok(None),
            1 => Ok(Some(T::decode(input)?)),
            t => Err(CodecError::InvalidTag(t)),
        }
    }
}

impl<V: Codec> Codec for BTreeMap<String, V> {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.len().encode(buf);
        for (k, v) in self {
            k.encode(buf);
            v.encode(buf);
        }
    }
    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        let n = decode_len(input)?;
        let mut out = BTreeMap::new();
        for _ in 0..n {
            let k = String::decode(input)?;
            out.insert(k, V::decode(input)?);
        }
        Ok(out)
    }
}

macro_rules! tuple_codec {
    ($($name:ident),+) => {
        impl<$($name: Codec),+> Codec for ($($name,)+) {
            #[allow(non_snake_case)]
            fn encode(&self, buf: &mut Vec<u8>) {
                let ($($name,)+) = self;
                $($name.encode(buf);)+
            }
            fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
                Ok(($($name::decode(input)?,)+))
            }
        }
    };
}

tuple_codec!(A);
tuple_codec!(A, B);
tuple_codec!(A, B, C);
tuple_codec!(A, B, C, D);

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn float_bits_survive() {
        for x in [0.0, -0.0, f64::NAN, f64::INFINITY, 1e-300, -3.25] {
            let back: f64 = Payload::encode(&x).decode().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn truncated_and_trailing_inputs_are_rejected() {
        let p = Payload::encode(&vec![1.0f64, 2.0]);
        let short = Payload::new(p.as_bytes()[..p.len() - 1].to_vec());
        assert!(matches!(
            short.decode::<Vec<f64>>(),
            Err(CodecError::Truncated { .. })
        ));
        let mut long = p.clone().into_bytes();
        long.push(0);
        assert_eq!(
            Payload::new(long).decode::<Vec<f64>>(),
            Err(CodecError::Trailing(1))
        );
    }

    proptest! {
        #[test]
        fn nested_values_round_trip(v in proptest::collection::vec((any::<u64>(), any::<f64>(), ".{0,8}"), 0..32)) {
            let v: Vec<(u64, f64, String)> = v;
            let back: Vec<(u64, f64, String)> = Payload::encode(&v).decode().unwrap();
            prop_assert_eq!(Payload::encode(&back), Payload::encode(&v));
        }
    }
}
