//! Binary artifact formats.
//!
//! All artifacts share the same envelope: a 4-byte magic tag, a `u32`
//! format version, fixed-size dimensions, a payload, and a trailing
//! CRC-32 of the payload. Integers are little-endian; interval endpoints
//! and counts are `u32`; mask bits pack row-major, least-significant bit
//! first.
//!
//! * `CSAM` — mask dictionary: per (t, l, h) entry a tag byte, then
//!   either packed mask bits or a `u16` anchor count.
//! * `CSSL` — 2D skip lists: per entry `rows`, `width`, then
//!   `rows * (2*width + 1)` values (start/end pairs, count last).
//!   Repetitive cells are encoded as `rows = 0, width = anchor count`.
//! * `CSFL` — flat skip lists: per-cell tag bytes, anchor counts for
//!   repetitive cells, one shared interval array, then per-row
//!   (offset, length) pairs.
//! * `CSWD` — workload dump: per (prompt, t, l, h) cell the Q, K, V
//!   tensors as `f64`.

use crate::calibration::{BlockMask, DictEntry, GridDims, MaskDictionary};
use crate::error::{Error, Result};
use crate::layout::VideoLayout;
use crate::math::{AttentionHeadInput, Matrix};
use crate::skiplist::{Interval, SkipList1D, SkipList2D};
use std::fs;
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;

pub const DICTIONARY_MAGIC: [u8; 4] = *b"CSAM";
pub const SKIPLIST_MAGIC: [u8; 4] = *b"CSSL";
pub const FLAT_MAGIC: [u8; 4] = *b"CSFL";
pub const DUMP_MAGIC: [u8; 4] = *b"CSWD";
pub const FORMAT_VERSION: u32 = 1;

/// CRC-32 (IEEE, reflected 0xEDB88320) over `bytes`.
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xedb8_8320 & mask);
        }
    }
    !crc
}

/// Writes to a sibling temp file and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Reader {
            bytes,
            pos: 0,
            what,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::corrupt(format!("{} file truncated", self.what)));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::corrupt(format!(
                "{} file has trailing bytes",
                self.what
            )));
        }
        Ok(())
    }
}

/// Validates magic and version, returns the envelope body (header tail +
/// payload) after verifying the trailing checksum covers the payload.
fn check_envelope<'a>(
    bytes: &'a [u8],
    magic: &[u8; 4],
    what: &'static str,
    header_len: usize,
) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 8 + header_len + 4 {
        return Err(Error::corrupt(format!("{what} file too short")));
    }
    if &bytes[0..4] != magic {
        return Err(Error::corrupt(format!("{what} file has wrong magic tag")));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::corrupt(format!(
            "{what} file has unsupported version {version}"
        )));
    }
    let header = &bytes[8..8 + header_len];
    let payload = &bytes[8 + header_len..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32(payload) != stored {
        return Err(Error::corrupt(format!("{what} payload checksum mismatch")));
    }
    Ok((header, payload))
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], count: usize) -> Vec<bool> {
    (0..count)
        .map(|i| bytes[i / 8] & (1 << (i % 8)) != 0)
        .collect()
}

fn grid_header(grid: GridDims, layout: &VideoLayout) -> Vec<u8> {
    let mut out = Vec::with_capacity(20);
    put_u32(&mut out, grid.timesteps as u32);
    put_u32(&mut out, grid.layers as u32);
    put_u32(&mut out, grid.heads as u32);
    put_u32(&mut out, layout.num_query_blocks() as u32);
    put_u32(&mut out, layout.num_key_blocks() as u32);
    out
}

fn parse_grid_header(header: &[u8], layout: &VideoLayout, what: &'static str) -> Result<GridDims> {
    let mut r = Reader::new(header, what);
    let grid = GridDims {
        timesteps: r.u32()? as usize,
        layers: r.u32()? as usize,
        heads: r.u32()? as usize,
    };
    let n_bq = r.u32()? as usize;
    let n_bkv = r.u32()? as usize;
    if n_bq != layout.num_query_blocks() || n_bkv != layout.num_key_blocks() {
        return Err(Error::corrupt(format!(
            "{what} block grid {n_bq}x{n_bkv} does not match configured layout {}x{}",
            layout.num_query_blocks(),
            layout.num_key_blocks()
        )));
    }
    if grid.cell_count() == 0 {
        return Err(Error::corrupt(format!("{what} grid is empty")));
    }
    Ok(grid)
}

const GRID_HEADER_LEN: usize = 20;

// ---------------------------------------------------------------------------
// CSAM: mask dictionary
// ---------------------------------------------------------------------------

pub fn encode_dictionary(dict: &MaskDictionary) -> Vec<u8> {
    let mut payload = Vec::new();
    for (_, entry) in dict.entries() {
        match entry {
            DictEntry::Mask(mask) => {
                payload.push(0u8);
                payload.extend_from_slice(&pack_bits(mask.bits()));
            }
            DictEntry::Repetitive { anchors } => {
                payload.push(1u8);
                put_u16(&mut payload, *anchors);
            }
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(&DICTIONARY_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    out.extend_from_slice(&grid_header(dict.grid, &dict.layout));
    out.extend_from_slice(&payload);
    put_u32(&mut out, crc32(&payload));
    out
}

pub fn decode_dictionary(bytes: &[u8], layout: &VideoLayout) -> Result<MaskDictionary> {
    let (header, payload) =
        check_envelope(bytes, &DICTIONARY_MAGIC, "dictionary", GRID_HEADER_LEN)?;
    let grid = parse_grid_header(header, layout, "dictionary")?;
    let bit_count = layout.num_query_blocks() * layout.num_key_blocks();
    let mask_bytes = bit_count.div_ceil(8);
    let mut r = Reader::new(payload, "dictionary");
    let mut entries = Vec::with_capacity(grid.cell_count());
    for _ in 0..grid.cell_count() {
        match r.u8()? {
            0 => {
                let bits = unpack_bits(r.take(mask_bytes)?, bit_count);
                entries.push(DictEntry::Mask(
                    BlockMask::from_bits(*layout, bits).map_err(|e| {
                        Error::corrupt(format!("dictionary holds an invalid mask: {e}"))
                    })?,
                ));
            }
            1 => {
                let anchors = r.u16()?;
                if anchors == 0 || anchors as usize > layout.rows_per_frame {
                    return Err(Error::corrupt(format!(
                        "dictionary anchor count {anchors} out of range"
                    )));
                }
                entries.push(DictEntry::Repetitive { anchors });
            }
            tag => {
                return Err(Error::corrupt(format!(
                    "dictionary entry has unknown tag {tag}"
                )))
            }
        }
    }
    r.done()?;
    MaskDictionary::from_ordered(*layout, grid, entries)
}

pub fn write_dictionary(dict: &MaskDictionary, path: &Path) -> Result<()> {
    write_atomic(path, &encode_dictionary(dict))
}

pub fn read_dictionary(path: &Path, layout: &VideoLayout) -> Result<MaskDictionary> {
    decode_dictionary(&fs::read(path)?, layout)
}

// ---------------------------------------------------------------------------
// CSSL: 2D skip lists
// ---------------------------------------------------------------------------

/// One compiled grid cell: a skip list for mask entries, the anchor
/// count for repetitive entries.
#[derive(Debug, Clone, PartialEq)]
pub enum SkipEntry {
    List(SkipList2D),
    Repetitive { anchors: u16 },
}

pub fn encode_skiplists(
    entries: &[SkipEntry],
    grid: GridDims,
    layout: &VideoLayout,
) -> Result<Vec<u8>> {
    if entries.len() != grid.cell_count() {
        return Err(Error::config(format!(
            "skip-list collection has {} entries, grid needs {}",
            entries.len(),
            grid.cell_count()
        )));
    }
    let mut payload = Vec::new();
    for entry in entries {
        match entry {
            SkipEntry::List(list) => {
                put_u32(&mut payload, list.num_rows() as u32);
                put_u32(&mut payload, list.width() as u32);
                for r in 0..list.num_rows() {
                    let row = list.row(r);
                    for iv in row {
                        put_u32(&mut payload, iv.start);
                        put_u32(&mut payload, iv.end);
                    }
                    for _ in row.len()..list.width() {
                        put_u32(&mut payload, 0);
                        put_u32(&mut payload, 0);
                    }
                    put_u32(&mut payload, row.len() as u32);
                }
            }
            SkipEntry::Repetitive { anchors } => {
                put_u32(&mut payload, 0);
                put_u32(&mut payload, *anchors as u32);
            }
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(&SKIPLIST_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    out.extend_from_slice(&grid_header(grid, layout));
    out.extend_from_slice(&payload);
    put_u32(&mut out, crc32(&payload));
    Ok(out)
}

pub fn decode_skiplists(bytes: &[u8], layout: &VideoLayout) -> Result<(GridDims, Vec<SkipEntry>)> {
    let (header, payload) = check_envelope(bytes, &SKIPLIST_MAGIC, "skip-list", GRID_HEADER_LEN)?;
    let grid = parse_grid_header(header, layout, "skip-list")?;
    let mut r = Reader::new(payload, "skip-list");
    let mut entries = Vec::with_capacity(grid.cell_count());
    for _ in 0..grid.cell_count() {
        let rows = r.u32()? as usize;
        let width = r.u32()? as usize;
        if rows == 0 {
            let anchors = u16::try_from(width)
                .map_err(|_| Error::corrupt("repetitive anchor count overflows u16"))?;
            if anchors == 0 || anchors as usize > layout.rows_per_frame {
                return Err(Error::corrupt(format!(
                    "skip-list anchor count {anchors} out of range"
                )));
            }
            entries.push(SkipEntry::Repetitive { anchors });
            continue;
        }
        if rows != layout.num_query_blocks() {
            return Err(Error::corrupt(format!(
                "skip-list entry has {rows} rows, layout expects {}",
                layout.num_query_blocks()
            )));
        }
        let mut row_lists = Vec::with_capacity(rows);
        for _ in 0..rows {
            let mut slots = Vec::with_capacity(width);
            for _ in 0..width {
                let start = r.u32()?;
                let end = r.u32()?;
                slots.push(Interval { start, end });
            }
            let count = r.u32()? as usize;
            if count > width {
                return Err(Error::corrupt("skip-list row count exceeds width"));
            }
            row_lists.push(slots[..count].to_vec());
        }
        entries.push(SkipEntry::List(SkipList2D::new(*layout, row_lists, width)?));
    }
    r.done()?;
    Ok((grid, entries))
}

pub fn write_skiplists(
    entries: &[SkipEntry],
    grid: GridDims,
    layout: &VideoLayout,
    path: &Path,
) -> Result<()> {
    write_atomic(path, &encode_skiplists(entries, grid, layout)?)
}

pub fn read_skiplists(path: &Path, layout: &VideoLayout) -> Result<(GridDims, Vec<SkipEntry>)> {
    decode_skiplists(&fs::read(path)?, layout)
}

// ---------------------------------------------------------------------------
// CSFL: flat skip lists
// ---------------------------------------------------------------------------

/// Flat-file cell disposition: mask cells hold their ordinal among mask
/// entries; repetitive cells hold the anchor count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlatTag {
    Mask { ordinal: usize },
    Repetitive { anchors: u16 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatFile {
    pub grid: GridDims,
    pub tags: Vec<FlatTag>,
    pub flat: SkipList1D,
}

pub fn encode_flat(entries: &[SkipEntry], grid: GridDims, layout: &VideoLayout) -> Result<Vec<u8>> {
    if entries.len() != grid.cell_count() {
        return Err(Error::config("flat skip-list entry count mismatch"));
    }
    let lists: Vec<&SkipList2D> = entries
        .iter()
        .filter_map(|e| match e {
            SkipEntry::List(l) => Some(l),
            SkipEntry::Repetitive { .. } => None,
        })
        .collect();
    let mut payload = Vec::new();
    for entry in entries {
        payload.push(match entry {
            SkipEntry::List(_) => 0u8,
            SkipEntry::Repetitive { .. } => 1u8,
        });
    }
    for entry in entries {
        if let SkipEntry::Repetitive { anchors } = entry {
            put_u16(&mut payload, *anchors);
        }
    }
    let owned: Vec<SkipList2D> = lists.iter().map(|&l| l.clone()).collect();
    let flat = if owned.is_empty() {
        None
    } else {
        Some(crate::skiplist::to_flat(&owned)?)
    };
    let (intervals, spans): (&[Interval], &[(u32, u32)]) = match &flat {
        Some(f) => (f.intervals(), f.spans()),
        None => (&[], &[]),
    };
    put_u32(&mut payload, intervals.len() as u32);
    for iv in intervals {
        put_u32(&mut payload, iv.start);
        put_u32(&mut payload, iv.end);
    }
    put_u32(&mut payload, spans.len() as u32);
    for &(offset, len) in spans {
        put_u32(&mut payload, offset);
        put_u32(&mut payload, len);
    }
    let mut out = Vec::new();
    out.extend_from_slice(&FLAT_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    out.extend_from_slice(&grid_header(grid, layout));
    out.extend_from_slice(&payload);
    put_u32(&mut out, crc32(&payload));
    Ok(out)
}

pub fn decode_flat(bytes: &[u8], layout: &VideoLayout) -> Result<FlatFile> {
    let (header, payload) = check_envelope(bytes, &FLAT_MAGIC, "flat skip-list", GRID_HEADER_LEN)?;
    let grid = parse_grid_header(header, layout, "flat skip-list")?;
    let mut r = Reader::new(payload, "flat skip-list");
    let mut raw_tags = Vec::with_capacity(grid.cell_count());
    for _ in 0..grid.cell_count() {
        raw_tags.push(r.u8()?);
    }
    let mut tags = Vec::with_capacity(grid.cell_count());
    let mut mask_ordinal = 0usize;
    for &tag in &raw_tags {
        match tag {
            0 => {
                tags.push(FlatTag::Mask {
                    ordinal: mask_ordinal,
                });
                mask_ordinal += 1;
            }
            1 => tags.push(FlatTag::Repetitive { anchors: 0 }),
            other => {
                return Err(Error::corrupt(format!(
                    "flat skip-list cell has unknown tag {other}"
                )))
            }
        }
    }
    for tag in tags.iter_mut() {
        if let FlatTag::Repetitive { anchors } = tag {
            *anchors = r.u16()?;
            if *anchors == 0 || *anchors as usize > layout.rows_per_frame {
                return Err(Error::corrupt("flat skip-list anchor count out of range"));
            }
        }
    }
    let n_intervals = r.u32()? as usize;
    let mut intervals = Vec::with_capacity(n_intervals);
    for _ in 0..n_intervals {
        intervals.push(Interval {
            start: r.u32()?,
            end: r.u32()?,
        });
    }
    let n_rows = r.u32()? as usize;
    if n_rows != mask_ordinal * layout.num_query_blocks() {
        return Err(Error::corrupt("flat skip-list row table size mismatch"));
    }
    let mut spans = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        spans.push((r.u32()?, r.u32()?));
    }
    r.done()?;
    // An all-repetitive grid has no flat data; keep a valid empty list.
    let flat = if mask_ordinal == 0 {
        SkipList1D::new(*layout, layout.num_query_blocks(), Vec::new(), Vec::new())?
    } else {
        SkipList1D::new(*layout, layout.num_query_blocks(), intervals, spans)?
    };
    Ok(FlatFile { grid, tags, flat })
}

pub fn write_flat(
    entries: &[SkipEntry],
    grid: GridDims,
    layout: &VideoLayout,
    path: &Path,
) -> Result<()> {
    write_atomic(path, &encode_flat(entries, grid, layout)?)
}

pub fn read_flat(path: &Path, layout: &VideoLayout) -> Result<FlatFile> {
    decode_flat(&fs::read(path)?, layout)
}

// ---------------------------------------------------------------------------
// CSWD: workload dumps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpHeader {
    pub layout: VideoLayout,
    pub grid: GridDims,
    pub prompts: usize,
    pub head_dim: usize,
}

const DUMP_HEADER_LEN: usize = 4 + 4 + 5 * 4 + 3 * 4 + 4 + 4;

impl DumpHeader {
    fn cell_bytes(&self) -> u64 {
        3 * (self.layout.seq_len() * self.head_dim * 8) as u64
    }

    pub fn cell_count(&self) -> usize {
        self.prompts * self.grid.cell_count()
    }

    fn cell_offset(&self, prompt: usize, key: crate::calibration::CellKey) -> u64 {
        let cell =
            (prompt * self.grid.timesteps + key.timestep) * self.grid.layers * self.grid.heads
                + key.layer * self.grid.heads
                + key.head;
        DUMP_HEADER_LEN as u64 + cell as u64 * self.cell_bytes()
    }
}

fn encode_dump_header(header: &DumpHeader) -> Vec<u8> {
    let mut out = Vec::with_capacity(DUMP_HEADER_LEN);
    out.extend_from_slice(&DUMP_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, header.layout.frames as u32);
    put_u32(&mut out, header.layout.rows_per_frame as u32);
    put_u32(&mut out, header.layout.row_width as u32);
    put_u32(&mut out, header.layout.query_block as u32);
    put_u32(&mut out, header.layout.key_block as u32);
    put_u32(&mut out, header.grid.timesteps as u32);
    put_u32(&mut out, header.grid.layers as u32);
    put_u32(&mut out, header.grid.heads as u32);
    put_u32(&mut out, header.prompts as u32);
    put_u32(&mut out, header.head_dim as u32);
    out
}

/// Serializes a whole synthetic suite into a dump file. Intended for
/// small suites and as the reference for the external ingestion format.
pub fn write_dump(spec: &crate::workloads::WorkloadSpec, path: &Path) -> Result<()> {
    spec.validate().map_err(|e| Error::config(e.to_string()))?;
    let header = DumpHeader {
        layout: spec.layout,
        grid: spec.grid,
        prompts: spec.prompt_seeds.len(),
        head_dim: spec.head_dim,
    };
    let mut bytes = encode_dump_header(&header);
    let payload_start = bytes.len();
    for (prompt, key) in spec.cells() {
        let input = spec.head_input(prompt, key)?;
        for m in [&input.q, &input.k, &input.v] {
            for &v in m.as_slice() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let checksum = crc32(&bytes[payload_start..]);
    put_u32(&mut bytes, checksum);
    write_atomic(path, &bytes)
}

/// Parses and validates a dump header (magic, version, dimensions).
pub fn read_dump_header(path: &Path) -> Result<DumpHeader> {
    let mut file = fs::File::open(path)?;
    let mut buf = vec![0u8; DUMP_HEADER_LEN];
    file.read_exact(&mut buf)
        .map_err(|_| Error::corrupt("workload dump file too short"))?;
    if buf[0..4] != DUMP_MAGIC {
        return Err(Error::corrupt("workload dump has wrong magic tag"));
    }
    let mut r = Reader::new(&buf[4..], "workload dump");
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::corrupt(format!(
            "workload dump has unsupported version {version}"
        )));
    }
    let layout = VideoLayout::new(
        r.u32()? as usize,
        r.u32()? as usize,
        r.u32()? as usize,
        r.u32()? as usize,
        r.u32()? as usize,
    )
    .map_err(|e| Error::corrupt(format!("workload dump layout invalid: {e}")))?;
    let grid = GridDims {
        timesteps: r.u32()? as usize,
        layers: r.u32()? as usize,
        heads: r.u32()? as usize,
    };
    let prompts = r.u32()? as usize;
    let head_dim = r.u32()? as usize;
    if grid.cell_count() == 0 || prompts == 0 || head_dim == 0 {
        return Err(Error::corrupt("workload dump grid is empty"));
    }
    Ok(DumpHeader {
        layout,
        grid,
        prompts,
        head_dim,
    })
}

/// Full validation: header, expected size, payload checksum.
pub fn validate_dump(path: &Path) -> Result<DumpHeader> {
    let header = read_dump_header(path)?;
    let bytes = fs::read(path)?;
    let expected = DUMP_HEADER_LEN as u64 + header.cell_count() as u64 * header.cell_bytes() + 4;
    if bytes.len() as u64 != expected {
        return Err(Error::corrupt(format!(
            "workload dump is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let payload = &bytes[DUMP_HEADER_LEN..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32(payload) != stored {
        return Err(Error::corrupt("workload dump checksum mismatch"));
    }
    Ok(header)
}

/// Random access into a validated dump file.
#[derive(Debug)]
pub struct DumpSource {
    path: std::path::PathBuf,
    pub header: DumpHeader,
}

impl DumpSource {
    pub fn open(path: &Path) -> Result<Self> {
        let header = read_dump_header(path)?;
        Ok(DumpSource {
            path: path.to_path_buf(),
            header,
        })
    }

    /// Reads the Q, K, V tensors of one cell.
    pub fn head_input(
        &self,
        prompt: usize,
        key: crate::calibration::CellKey,
    ) -> Result<AttentionHeadInput> {
        if prompt >= self.header.prompts {
            return Err(Error::config(format!("prompt index {prompt} out of range")));
        }
        let n = self.header.layout.seq_len();
        let d = self.header.head_dim;
        let mut file = fs::File::open(&self.path)?;
        file.seek(SeekFrom::Start(self.header.cell_offset(prompt, key)))?;
        let mut buf = vec![0u8; n * d * 8];
        let mut read_matrix = |file: &mut fs::File| -> Result<Matrix> {
            file.read_exact(&mut buf)
                .map_err(|_| Error::corrupt("workload dump cell truncated"))?;
            let data = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Matrix::from_vec(n, d, data)
                .map_err(|e| Error::corrupt(format!("workload dump holds invalid data: {e}")))
        };
        let q = read_matrix(&mut file)?;
        let k = read_matrix(&mut file)?;
        let v = read_matrix(&mut file)?;
        AttentionHeadInput::new(q, k, v)
    }
}

impl crate::workloads::HeadSource for DumpSource {
    fn layout(&self) -> VideoLayout {
        self.header.layout
    }

    fn grid(&self) -> GridDims {
        self.header.grid
    }

    fn prompt_count(&self) -> usize {
        self.header.prompts
    }

    fn head_input(
        &self,
        prompt: usize,
        key: crate::calibration::CellKey,
    ) -> Result<AttentionHeadInput> {
        DumpSource::head_input(self, prompt, key)
    }
}
