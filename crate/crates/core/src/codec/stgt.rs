//! STGT soft-target stream.
//!
//! Little-endian layout:
//!
//! ```text
//! "STGT" | u16 version | u32 N | u16 k | f32 default T | u32 utterances
//! per utterance: u16 id length | id bytes (UTF-8) | u32 frames
//! per frame:     k x (u16 class index, f32 logit), descending logit, ascending index on ties
//! ```
//!
//! Raw logits are stored so any temperature can be applied at training time;
//! the header temperature is only a default.

use std::io::{Read, Write};

use ndarray::Array2;

use super::{CodecError, CodecParams, SparseFrame};

pub const STGT_MAGIC: &[u8; 4] = b"STGT";
pub const STGT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 2 + 4 + 4;
const ENTRY_LEN: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftTargetUtterance {
    pub id: String,
    pub frames: Vec<SparseFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftTargetStream {
    pub n_classes: u32,
    pub k: u16,
    pub temperature: f32,
    pub utterances: Vec<SoftTargetUtterance>,
}

impl SoftTargetStream {
    /// Top-k encodes per-utterance logit matrices (frames x classes).
    pub fn from_logits(
        n_classes: usize,
        params: &CodecParams,
        utterances: &[(String, Array2<f64>)],
    ) -> Result<Self, CodecError> {
        if n_classes == 0 {
            return Err(CodecError::Empty);
        }
        if n_classes > u16::MAX as usize {
            return Err(CodecError::ClassCountOverflow(n_classes));
        }
        params.validate(n_classes)?;
        let utterances = utterances
            .iter()
            .map(|(id, logits)| {
                let frames = logits
                    .rows()
                    .into_iter()
                    .enumerate()
                    .map(|(f, row)| {
                        if row.len() != n_classes {
                            return Err(CodecError::ClassCountMismatch {
                                utterance: id.clone(),
                                frame: f,
                                expected: n_classes,
                                found: row.len(),
                            });
                        }
                        let z: Vec<f64> = row.to_vec();
                        SparseFrame::from_logits(&z, params.k)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SoftTargetUtterance {
                    id: id.clone(),
                    frames,
                })
            })
            .collect::<Result<Vec<_>, CodecError>>()?;
        Ok(Self {
            n_classes: n_classes as u32,
            k: params.k as u16,
            temperature: params.temperature as f32,
            utterances,
        })
    }

    /// Re-selects a smaller `k` from an already sorted stream. Entries are
    /// stored best first, so truncation is the exact top-k.
    pub fn reselect(&self, k: usize, temperature: f64) -> Result<Self, CodecError> {
        if k == 0 || k > self.k as usize {
            return Err(CodecError::BadK {
                k,
                n: self.k as usize,
            });
        }
        Ok(Self {
            n_classes: self.n_classes,
            k: k as u16,
            temperature: temperature as f32,
            utterances: self
                .utterances
                .iter()
                .map(|u| SoftTargetUtterance {
                    id: u.id.clone(),
                    frames: u.frames.iter().map(|f| f.truncated(k)).collect(),
                })
                .collect(),
        })
    }

    pub fn n_frames(&self) -> usize {
        self.utterances.iter().map(|u| u.frames.len()).sum()
    }

    pub fn frame_payload_bytes(&self) -> usize {
        ENTRY_LEN * self.k as usize
    }

    /// Writes the stream; returns the byte count.
    pub fn write_to<W: Write>(&self, mut sink: W) -> Result<usize, CodecError> {
        let mut buf = Vec::with_capacity(
            HEADER_LEN + self.n_frames() * self.frame_payload_bytes() + 6 * self.utterances.len(),
        );
        buf.extend_from_slice(STGT_MAGIC);
        buf.extend_from_slice(&STGT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.n_classes.to_le_bytes());
        buf.extend_from_slice(&self.k.to_le_bytes());
        buf.extend_from_slice(&self.temperature.to_le_bytes());
        buf.extend_from_slice(&(self.utterances.len() as u32).to_le_bytes());
        for utt in &self.utterances {
            let id = utt.id.as_bytes();
            if id.len() > u16::MAX as usize {
                return Err(CodecError::BadId(format!("id of {} bytes is too long", id.len())));
            }
            buf.extend_from_slice(&(id.len() as u16).to_le_bytes());
            buf.extend_from_slice(id);
            buf.extend_from_slice(&(utt.frames.len() as u32).to_le_bytes());
            for (f, frame) in utt.frames.iter().enumerate() {
                if frame.k() != self.k as usize {
                    return Err(CodecError::BadK {
                        k: frame.k(),
                        n: self.k as usize,
                    });
                }
                frame.check(&utt.id, f, Some(self.n_classes))?;
                for &(idx, logit) in frame.entries() {
                    buf.extend_from_slice(&idx.to_le_bytes());
                    buf.extend_from_slice(&logit.to_le_bytes());
                }
            }
        }
        sink.write_all(&buf)?;
        sink.flush()?;
        Ok(buf.len())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CodecError> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }
}

/// Top-k encodes the logits and writes them as STGT. Returns bytes written.
pub fn encode_stream<W: Write>(
    utterances: &[(String, Array2<f64>)],
    n_classes: usize,
    params: &CodecParams,
    sink: W,
) -> Result<usize, CodecError> {
    SoftTargetStream::from_logits(n_classes, params, utterances)?.write_to(sink)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32(&mut self) -> Option<f32> {
        self.take(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_stream<R: Read>(mut source: R) -> Result<(CodecParams, SoftTargetStream), CodecError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let stream = decode_bytes(&bytes)?;
    let params = CodecParams::new(stream.k as usize, stream.temperature as f64);
    Ok((params, stream))
}

fn decode_bytes(bytes: &[u8]) -> Result<SoftTargetStream, CodecError> {
    let header = |what: &str| CodecError::Truncated {
        utterance: format!("<{what}>"),
        frame: None,
    };
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur
        .take(4)
        .ok_or_else(|| header("header"))?
        .try_into()
        .unwrap();
    if &magic != STGT_MAGIC {
        return Err(CodecError::BadMagic(magic));
    }
    let version = cur.u16().ok_or_else(|| header("header"))?;
    if version != STGT_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let n_classes = cur.u32().ok_or_else(|| header("header"))?;
    let k = cur.u16().ok_or_else(|| header("header"))?;
    let temperature = cur.f32().ok_or_else(|| header("header"))?;
    let n_utts = cur.u32().ok_or_else(|| header("header"))?;
    if k == 0 || k as u32 > n_classes {
        return Err(CodecError::BadK {
            k: k as usize,
            n: n_classes as usize,
        });
    }

    let mut utterances = Vec::with_capacity(n_utts.min(1 << 16) as usize);
    for u in 0..n_utts as usize {
        let trunc = |frame: Option<usize>, id: &str| CodecError::Truncated {
            utterance: if id.is_empty() {
                format!("#{u}")
            } else {
                id.to_string()
            },
            frame,
        };
        let id_len = cur.u16().ok_or_else(|| trunc(None, ""))? as usize;
        let id_bytes = cur.take(id_len).ok_or_else(|| trunc(None, ""))?;
        let id = std::str::from_utf8(id_bytes)
            .map_err(|e| CodecError::BadId(e.to_string()))?
            .to_string();
        let n_frames = cur.u32().ok_or_else(|| trunc(None, &id))? as usize;
        let mut frames = Vec::with_capacity(n_frames.min(1 << 20));
        for f in 0..n_frames {
            let payload = cur
                .take(ENTRY_LEN * k as usize)
                .ok_or_else(|| trunc(Some(f), &id))?;
            let entries = payload
                .chunks_exact(ENTRY_LEN)
                .map(|c| {
                    (
                        u16::from_le_bytes([c[0], c[1]]),
                        f32::from_le_bytes(c[2..6].try_into().unwrap()),
                    )
                })
                .collect();
            let frame = SparseFrame::from_entries_unchecked(entries);
            frame.check(&id, f, Some(n_classes))?;
            frames.push(frame);
        }
        utterances.push(SoftTargetUtterance { id, frames });
    }
    if cur.pos != bytes.len() {
        return Err(CodecError::TrailingBytes(bytes.len() - cur.pos));
    }
    Ok(SoftTargetStream {
        n_classes,
        k,
        temperature,
        utterances,
    })
}
