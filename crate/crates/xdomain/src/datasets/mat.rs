//! Reader for the numeric arrays of little-endian MATLAB level-5 files,
//! including zlib-compressed elements.

use std::io::Read;

use flate2::read::ZlibDecoder;

const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_INT64: u32 = 12;
const MI_UINT64: u32 = 13;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;

#[derive(Clone, Debug, PartialEq)]
pub enum MatData {
    U8(Vec<u8>),
    F64(Vec<f64>),
}

impl MatData {
    pub fn len(&self) -> usize {
        match self {
            MatData::U8(v) => v.len(),
            MatData::F64(v) => v.len(),
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        match self {
            MatData::U8(v) => f64::from(v[i]),
            MatData::F64(v) => v[i],
        }
    }
}

/// A named numeric array, column-major as stored.
#[derive(Clone, Debug, PartialEq)]
pub struct MatVar {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: MatData,
}

struct Element<'a> {
    kind: u32,
    body: &'a [u8],
}

fn u32_at(b: &[u8], at: usize) -> Result<u32, String> {
    b.get(at..at + 4).map(|s| u32::from_le_bytes(s.try_into().unwrap())).ok_or_else(|| "truncated tag".to_string())
}

/// Splits `buf` into its top-level data elements.
fn elements(buf: &[u8]) -> Result<Vec<Element<'_>>, String> {
    let mut out = Vec::new();
    let mut at = 0;
    while at + 8 <= buf.len() {
        let word = u32_at(buf, at)?;
        if word >> 16 != 0 {
            // small element: size and type packed into the first word
            let n = (word >> 16) as usize;
            if n > 4 {
                return Err(format!("small element of {n} bytes"));
            }
            out.push(Element { kind: word & 0xffff, body: &buf[at + 4..at + 4 + n] });
            at += 8;
            continue;
        }
        let n = u32_at(buf, at + 4)? as usize;
        let body = buf.get(at + 8..at + 8 + n).ok_or_else(|| format!("element of {n} bytes overruns the file"))?;
        out.push(Element { kind: word, body });
        at += 8 + n;
        if word != MI_COMPRESSED {
            at = at.div_ceil(8) * 8;
        }
    }
    Ok(out)
}

fn numeric(kind: u32, b: &[u8]) -> Result<MatData, String> {
    macro_rules! conv {
        ($t:ty, $w:expr) => {
            MatData::F64(b.chunks_exact($w).map(|c| <$t>::from_le_bytes(c.try_into().unwrap()) as f64).collect())
        };
    }
    Ok(match kind {
        MI_UINT8 => MatData::U8(b.to_vec()),
        MI_INT8 => conv!(i8, 1),
        MI_INT16 => conv!(i16, 2),
        MI_UINT16 => conv!(u16, 2),
        MI_INT32 => conv!(i32, 4),
        MI_UINT32 => conv!(u32, 4),
        MI_SINGLE => conv!(f32, 4),
        MI_DOUBLE => conv!(f64, 8),
        MI_INT64 => conv!(i64, 8),
        MI_UINT64 => conv!(u64, 8),
        k => return Err(format!("unsupported numeric type {k}")),
    })
}

fn matrix(body: &[u8]) -> Result<Option<MatVar>, String> {
    let parts = elements(body)?;
    if parts.len() < 4 {
        return Err("matrix with fewer than four sub-elements".into());
    }
    let class = u32_at(parts[0].body, 0)? & 0xff;
    // 6 = double ... 13 = uint64; cells, structs and sparse arrays are skipped
    if !(6..=15).contains(&class) {
        return Ok(None);
    }
    let dims = match numeric(parts[1].kind, parts[1].body)? {
        MatData::F64(d) => d.into_iter().map(|v| v as usize).collect::<Vec<_>>(),
        MatData::U8(d) => d.into_iter().map(usize::from).collect(),
    };
    let name = String::from_utf8_lossy(parts[2].body).into_owned();
    let data = numeric(parts[3].kind, parts[3].body)?;
    if dims.iter().product::<usize>() != data.len() {
        return Err(format!("array {name}: dims {dims:?} do not match {} values", data.len()));
    }
    Ok(Some(MatVar { name, dims, data }))
}

fn collect(buf: &[u8], out: &mut Vec<MatVar>) -> Result<(), String> {
    for el in elements(buf)? {
        match el.kind {
            MI_MATRIX => out.extend(matrix(el.body)?),
            MI_COMPRESSED => {
                let mut inner = Vec::new();
                ZlibDecoder::new(el.body).read_to_end(&mut inner).map_err(|e| format!("zlib: {e}"))?;
                collect(&inner, out)?;
            }
            _ => {}
        }
    }
    Ok(())
}

/// All numeric arrays of a level-5 MAT file.
pub fn read_mat(bytes: &[u8]) -> Result<Vec<MatVar>, String> {
    if bytes.len() < 128 {
        return Err("shorter than a MAT-file header".into());
    }
    if &bytes[126..128] != b"IM" {
        return Err("not a little-endian level-5 MAT file".into());
    }
    let mut out = Vec::new();
    collect(&bytes[128..], &mut out)?;
    Ok(out)
}

/// Serializes arrays as an uncompressed level-5 MAT file; used to build
/// fixtures.
pub fn write_mat(vars: &[MatVar]) -> Vec<u8> {
    fn tagged(kind: u32, body: &[u8], out: &mut Vec<u8>) {
        out.extend_from_slice(&kind.to_le_bytes());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(body);
        out.resize(out.len().div_ceil(8) * 8, 0);
    }
    let mut header = vec![b' '; 116];
    header[..10].copy_from_slice(b"MATLAB 5.0");
    header.extend_from_slice(&[0; 8]);
    header.extend_from_slice(&0x0100u16.to_le_bytes());
    header.extend_from_slice(b"IM");
    for v in vars {
        let mut m = Vec::new();
        let class: u32 = match v.data {
            MatData::U8(_) => 9,
            MatData::F64(_) => 6,
        };
        tagged(MI_UINT32, &[class.to_le_bytes(), 0u32.to_le_bytes()].concat(), &mut m);
        let dims: Vec<u8> = v.dims.iter().flat_map(|&d| (d as i32).to_le_bytes()).collect();
        tagged(MI_INT32, &dims, &mut m);
        tagged(MI_INT8, v.name.as_bytes(), &mut m);
        match &v.data {
            MatData::U8(d) => tagged(MI_UINT8, d, &mut m),
            MatData::F64(d) => tagged(MI_DOUBLE, &d.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<_>>(), &mut m),
        }
        tagged(MI_MATRIX, &m, &mut header);
    }
    header
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::ZlibEncoder;
    use std::io::Write;

    fn sample() -> Vec<MatVar> {
        vec![
            MatVar { name: "X".into(), dims: vec![2, 3], data: MatData::U8(vec![1, 2, 3, 4, 5, 6]) },
            MatVar { name: "y".into(), dims: vec![3, 1], data: MatData::F64(vec![10.0, 1.0, 2.5]) },
        ]
    }

    #[test]
    fn round_trip_uncompressed() {
        assert_eq!(read_mat(&write_mat(&sample())).unwrap(), sample());
    }

    #[test]
    fn reads_compressed_elements() {
        let plain = write_mat(&sample());
        let mut out = plain[..128].to_vec();
        let mut enc = ZlibEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&plain[128..]).unwrap();
        let z = enc.finish().unwrap();
        out.extend_from_slice(&MI_COMPRESSED.to_le_bytes());
        out.extend_from_slice(&(z.len() as u32).to_le_bytes());
        out.extend_from_slice(&z);
        assert_eq!(read_mat(&out).unwrap(), sample());
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_mat(&[0; 10]).is_err());
        let mut bad = write_mat(&sample());
        bad[126] = b'M';
        assert!(read_mat(&bad).is_err());
        let mut cut = write_mat(&sample());
        cut.truncate(150);
        assert!(read_mat(&cut).is_err());
    }
}
