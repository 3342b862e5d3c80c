//! SIRV vector files: `"SIRV"`, u32 version, u32 dim, u64 count, then per
//! record a u16 id length, the UTF-8 id and `dim` f32 values. All integers
//! and floats are little-endian.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, SirError};

pub const MAGIC: [u8; 4] = *b"SIRV";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SirvRecord {
    pub id: String,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SirvHeader {
    pub dim: u32,
    pub count: u64,
}

pub struct SirvWriter<W: Write> {
    inner: W,
    header: SirvHeader,
    written: u64,
}

impl<W: Write> SirvWriter<W> {
    pub fn new(mut inner: W, dim: u32, count: u64) -> io::Result<Self> {
        inner.write_all(&MAGIC)?;
        inner.write_all(&VERSION.to_le_bytes())?;
        inner.write_all(&dim.to_le_bytes())?;
        inner.write_all(&count.to_le_bytes())?;
        Ok(Self {
            inner,
            header: SirvHeader { dim, count },
            written: 0,
        })
    }

    pub fn write(&mut self, id: &str, values: &[f32]) -> io::Result<()> {
        let invalid = |m: String| io::Error::new(io::ErrorKind::InvalidInput, m);
        if values.len() != self.header.dim as usize {
            return Err(invalid(format!("record {id} has {} values, expected {}", values.len(), self.header.dim)));
        }
        if self.written == self.header.count {
            return Err(invalid(format!("more than the declared {} records", self.header.count)));
        }
        let len = u16::try_from(id.len()).map_err(|_| invalid(format!("id longer than {} bytes", u16::MAX)))?;
        self.inner.write_all(&len.to_le_bytes())?;
        self.inner.write_all(id.as_bytes())?;
        let mut buf = Vec::with_capacity(values.len() * 4);
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.inner.write_all(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        if self.written != self.header.count {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("wrote {} records, declared {}", self.written, self.header.count),
            ));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streaming reader. Framing errors carry the byte offset of the record
/// they were found in.
pub struct SirvReader<R: Read> {
    inner: R,
    context: String,
    header: SirvHeader,
    offset: u64,
    read: u64,
    failed: bool,
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

impl<R: Read> SirvReader<R> {
    pub fn new(mut inner: R, context: impl Into<String>) -> Result<Self> {
        let context = context.into();
        let mut head = [0u8; HEADER_LEN as usize];
        let n = read_full(&mut inner, &mut head).map_err(SirError::io(&context))?;
        if n < 4 || head[..4] != MAGIC {
            return Err(SirError::integrity(&context, 0, "bad magic, not a SIRV file"));
        }
        if n < HEADER_LEN as usize {
            return Err(SirError::integrity(&context, n as u64, "truncated header"));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(SirError::UnsupportedVersion {
                context,
                found: version,
                expected: VERSION,
            });
        }
        let dim = u32::from_le_bytes(head[8..12].try_into().unwrap());
        let count = u64::from_le_bytes(head[12..20].try_into().unwrap());
        if dim == 0 && count > 0 {
            return Err(SirError::integrity(&context, 8, "dimension 0"));
        }
        Ok(Self {
            inner,
            context,
            header: SirvHeader { dim, count },
            offset: HEADER_LEN,
            read: 0,
            failed: false,
        })
    }

    pub fn header(&self) -> SirvHeader {
        self.header
    }

    fn next_record(&mut self) -> Result<Option<SirvRecord>> {
        let start = self.offset;
        if self.read == self.header.count {
            let mut probe = [0u8; 1];
            return match read_full(&mut self.inner, &mut probe).map_err(SirError::io(&self.context))? {
                0 => Ok(None),
                _ => Err(SirError::integrity(&self.context, start, "trailing bytes after the declared records")),
            };
        }
        let truncated = |what: &str| {
            SirError::integrity(&self.context, start, format!("record {} truncated ({what})", self.read))
        };
        let mut len = [0u8; 2];
        if read_full(&mut self.inner, &mut len).map_err(SirError::io(&self.context))? < 2 {
            return Err(truncated("id length"));
        }
        let len = u16::from_le_bytes(len) as usize;
        let mut id = vec![0u8; len];
        if read_full(&mut self.inner, &mut id).map_err(SirError::io(&self.context))? < len {
            return Err(truncated("id"));
        }
        let id = String::from_utf8(id)
            .map_err(|_| SirError::integrity(&self.context, start + 2, format!("record {} id is not UTF-8", self.read)))?;
        let dim = self.header.dim as usize;
        let mut raw = vec![0u8; dim * 4];
        if read_full(&mut self.inner, &mut raw).map_err(SirError::io(&self.context))? < raw.len() {
            return Err(truncated("values"));
        }
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.offset = start + 2 + len as u64 + raw.len() as u64;
        self.read += 1;
        Ok(Some(SirvRecord { id, values }))
    }
}

impl<R: Read> Iterator for SirvReader<R> {
    type Item = Result<SirvRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_record() {
            Ok(r) => r.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

pub fn open(path: &Path) -> Result<SirvReader<BufReader<File>>> {
    let file = File::open(path).map_err(SirError::io(path))?;
    SirvReader::new(BufReader::new(file), path.display().to_string())
}

pub fn read_all(path: &Path) -> Result<(SirvHeader, Vec<SirvRecord>)> {
    let reader = open(path)?;
    let header = reader.header();
    let records = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, records))
}

pub fn write_all<'a>(path: &Path, dim: u32, records: impl ExactSizeIterator<Item = (&'a str, &'a [f32])>) -> Result<()> {
    let file = File::create(path).map_err(SirError::io(path))?;
    let mut w = SirvWriter::new(BufWriter::new(file), dim, records.len() as u64).map_err(SirError::io(path))?;
    for (id, values) in records {
        w.write(id, values).map_err(SirError::io(path))?;
    }
    let file = w.finish().map_err(SirError::io(path))?;
    file.into_inner()
        .map_err(|e| SirError::io(path)(e.into_error()))?
        .sync_all()
        .map_err(SirError::io(path))
}
