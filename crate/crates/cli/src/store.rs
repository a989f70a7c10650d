//! On-disk layout: one `node_<idx>.shard` file per node plus `manifest.json`.
//!
//! A shard starts with a 32-byte header followed by `stripes * alpha` symbols,
//! stripe by stripe, each symbol stored little-endian in `ceil(w/8)` bytes.
//! File bytes are packed most significant bit first into `w`-bit symbols and
//! laid out node by node inside a stripe, so systematic shards hold
//! contiguous pieces of the input.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use htec::codec::{decode, encode, CodeInstance};
use htec::construction::CodeParams;
use htec::galois::Element;
use htec::iomodel::{count_reads, DiskModel, IoStats};
use htec::repair::{execute_repair, plan_repair, repair_stats, RepairPlan, RepairStats, SymbolSource};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MAGIC: &[u8; 4] = b"HTEC";
pub const SHARD_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;
pub const MANIFEST: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "htec-manifest";

/// Failures that indicate damaged or missing data rather than bad arguments.
#[derive(Debug)]
pub enum StoreError {
    Integrity(String),
}

impl std::fmt::Display for StoreError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoreError::Integrity(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for StoreError {}

fn integrity(msg: impl Into<String>) -> anyhow::Error {
    StoreError::Integrity(msg.into()).into()
}

pub fn shard_name(node: usize) -> String {
    format!("node_{node}.shard")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardHeader {
    pub version: u16,
    pub node: u32,
    pub stripes: u64,
    /// Leading bytes of the code checksum.
    pub fingerprint: [u8; 14],
}

impl ShardHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..10].copy_from_slice(&self.node.to_le_bytes());
        b[10..18].copy_from_slice(&self.stripes.to_le_bytes());
        b[18..].copy_from_slice(&self.fingerprint);
        b
    }

    pub fn parse(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_LEN || &b[..4] != MAGIC {
            return Err(integrity("not an HTEC shard"));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != SHARD_VERSION {
            return Err(integrity(format!("unsupported shard version {version}")));
        }
        Ok(ShardHeader {
            version,
            node: u32::from_le_bytes(b[6..10].try_into().expect("4 bytes")),
            stripes: u64::from_le_bytes(b[10..18].try_into().expect("8 bytes")),
            fingerprint: b[18..HEADER_LEN].try_into().expect("14 bytes"),
        })
    }
}

pub fn fingerprint(inst: &CodeInstance) -> [u8; 14] {
    let sum = Sha256::digest(inst.checksum().as_bytes());
    sum[..14].try_into().expect("14 bytes")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub code: serde_json::Value,
    pub original_length: u64,
    pub stripes: u64,
    /// Shard file name to hex SHA-256 of the whole file.
    pub shards: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<(Manifest, CodeInstance)> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| integrity(format!("corrupt manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT || m.version != 1 {
            return Err(integrity(format!("unsupported manifest {} v{}", m.format, m.version)));
        }
        let inst = CodeInstance::from_json(&m.code).map_err(|e| integrity(format!("corrupt manifest: {e}")))?;
        let n = inst.params().n;
        let expected: BTreeSet<String> = (0..n).map(shard_name).collect();
        if m.shards.keys().cloned().collect::<BTreeSet<_>>() != expected {
            return Err(integrity("manifest does not list every shard"));
        }
        let need = symbols_for(m.original_length, inst.params().field.w);
        if m.stripes != need.div_ceil(inst.params().message_symbols() as u64) {
            return Err(integrity("manifest stripe count does not match the length"));
        }
        Ok((m, inst))
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join(MANIFEST), text + "\n")?;
        Ok(())
    }
}

fn symbols_for(len: u64, w: u8) -> u64 {
    (len * 8).div_ceil(u64::from(w))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Packs bytes into `count` symbols of `w` bits, zero-padded.
pub fn pack_symbols(bytes: &[u8], w: u8, count: usize) -> Vec<Element> {
    let w = u32::from(w);
    let mut out = Vec::with_capacity(count);
    let (mut acc, mut bits) = (0u32, 0u32);
    let mut it = bytes.iter();
    while out.len() < count {
        while bits < w {
            acc = (acc << 8) | u32::from(it.next().copied().unwrap_or(0));
            bits += 8;
        }
        bits -= w;
        out.push(((acc >> bits) & ((1 << w) - 1)) as Element);
        acc &= (1 << bits) - 1;
    }
    out
}

/// Inverse of [`pack_symbols`], truncated to `len` bytes.
pub fn unpack_symbols(symbols: &[Element], w: u8, len: usize) -> Vec<u8> {
    let w = u32::from(w);
    let mut out = Vec::with_capacity(len);
    let (mut acc, mut bits) = (0u32, 0u32);
    for &s in symbols {
        acc = (acc << w) | u32::from(s);
        bits += w;
        while bits >= 8 && out.len() < len {
            bits -= 8;
            out.push((acc >> bits) as u8);
            acc &= (1 << bits) - 1;
        }
    }
    out.resize(len, 0);
    out
}

fn write_symbols(out: &mut Vec<u8>, symbols: &[Element], bytes: usize) {
    for &s in symbols {
        out.extend_from_slice(&s.to_le_bytes()[..bytes]);
    }
}

fn read_symbols(payload: &[u8], bytes: usize) -> Vec<Element> {
    payload
        .chunks(bytes)
        .map(|c| if bytes == 1 { Element::from(c[0]) } else { Element::from_le_bytes([c[0], c[1]]) })
        .collect()
}

fn shard_file(inst: &CodeInstance, node: usize, stripes: u64, symbols: &[Element]) -> Vec<u8> {
    let header = ShardHeader { version: SHARD_VERSION, node: node as u32, stripes, fingerprint: fingerprint(inst) };
    let bytes = inst.params().field.symbol_bytes();
    let mut out = Vec::with_capacity(HEADER_LEN + symbols.len() * bytes);
    out.extend_from_slice(&header.to_bytes());
    write_symbols(&mut out, symbols, bytes);
    out
}

/// Splits `data` into stripes and writes every shard and the manifest.
pub fn encode_to_dir(inst: &CodeInstance, data: &[u8], dir: &Path) -> Result<Manifest> {
    let p = *inst.params();
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let per_stripe = p.message_symbols();
    let stripes = symbols_for(data.len() as u64, p.field.w).div_ceil(per_stripe as u64);
    let symbols = pack_symbols(data, p.field.w, stripes as usize * per_stripe);
    let mut nodes: Vec<Vec<Element>> = vec![Vec::with_capacity(stripes as usize * p.alpha); p.n];
    for chunk in symbols.chunks(per_stripe) {
        let data: Vec<Vec<Element>> = chunk.chunks(p.alpha).map(<[Element]>::to_vec).collect();
        let stripe = encode(inst, &data)?;
        for (j, node) in stripe.nodes.iter().enumerate() {
            nodes[j].extend_from_slice(node);
        }
    }
    let mut shards = BTreeMap::new();
    for (j, node) in nodes.iter().enumerate() {
        let bytes = shard_file(inst, j, stripes, node);
        shards.insert(shard_name(j), hex(&Sha256::digest(&bytes)));
        fs::write(dir.join(shard_name(j)), bytes)?;
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        code: inst.to_json(),
        original_length: data.len() as u64,
        stripes,
        shards,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

/// Shard symbols grouped per stripe.
#[derive(Debug, Clone)]
pub struct Shards {
    /// Node to its `stripes * alpha` symbols, for intact shards only.
    pub nodes: BTreeMap<usize, Vec<Element>>,
    /// Missing or damaged nodes.
    pub lost: Vec<usize>,
}

/// Loads every shard whose checksum and header match the manifest.
pub fn load_shards(dir: &Path, manifest: &Manifest, inst: &CodeInstance) -> Result<Shards> {
    let p = *inst.params();
    let bytes = p.field.symbol_bytes();
    let expect_len = HEADER_LEN + manifest.stripes as usize * p.alpha * bytes;
    let fp = fingerprint(inst);
    let mut nodes = BTreeMap::new();
    let mut lost = Vec::new();
    for j in 0..p.n {
        let name = shard_name(j);
        let intact = fs::read(dir.join(&name)).ok().filter(|b| {
            b.len() == expect_len
                && manifest.shards.get(&name) == Some(&hex(&Sha256::digest(b)))
                && ShardHeader::parse(b).is_ok_and(|h| {
                    h.node as usize == j && h.stripes == manifest.stripes && h.fingerprint == fp
                })
        });
        match intact {
            Some(b) => {
                nodes.insert(j, read_symbols(&b[HEADER_LEN..], bytes));
            }
            None => lost.push(j),
        }
    }
    Ok(Shards { nodes, lost })
}

fn stripe_view(shards: &Shards, s: usize, alpha: usize) -> BTreeMap<usize, Vec<Element>> {
    shards.nodes.iter().map(|(&j, v)| (j, v[s * alpha..(s + 1) * alpha].to_vec())).collect()
}

/// Rebuilds the original file from any `k` intact shards.
pub fn decode_dir(dir: &Path) -> Result<Vec<u8>> {
    let (manifest, inst) = Manifest::load(dir)?;
    let p = *inst.params();
    let shards = load_shards(dir, &manifest, &inst)?;
    if shards.nodes.len() < p.k {
        return Err(integrity(format!("only {} of the {} shards needed are intact", shards.nodes.len(), p.k)));
    }
    let mut symbols = Vec::with_capacity(manifest.stripes as usize * p.message_symbols());
    for s in 0..manifest.stripes as usize {
        let view: BTreeMap<usize, Vec<Element>> = stripe_view(&shards, s, p.alpha).into_iter().take(p.k).collect();
        for node in decode(&inst, &view).map_err(|e| integrity(e.to_string()))? {
            symbols.extend(node);
        }
    }
    Ok(unpack_symbols(&symbols, p.field.w, manifest.original_length as usize))
}

/// Deletes the shard files of `nodes`.
pub fn kill(dir: &Path, nodes: &[usize]) -> Result<Vec<PathBuf>> {
    let (_, inst) = Manifest::load(dir)?;
    let n = inst.params().n;
    let mut removed = Vec::new();
    for &j in nodes {
        if j >= n {
            bail!("node {j} does not exist in a code with {n} nodes");
        }
        let path = dir.join(shard_name(j));
        if path.exists() {
            fs::remove_file(&path)?;
            removed.push(path);
        }
    }
    Ok(removed)
}

/// Parses `d3`, `p1` or a zero-based node index.
pub fn parse_node(params: &CodeParams, s: &str) -> Result<usize> {
    let s = s.trim();
    let (base, rest) = match s.as_bytes().first() {
        Some(b'd') | Some(b'D') => (Some(0), &s[1..]),
        Some(b'p') | Some(b'P') => (Some(params.k), &s[1..]),
        _ => (None, s),
    };
    let v: usize = rest.parse().map_err(|_| anyhow!("bad node `{s}`"))?;
    let j = match base {
        Some(b) if v >= 1 => b + v - 1,
        Some(_) => bail!("node labels are one-based: `{s}`"),
        None => v,
    };
    let limit = if base == Some(0) { params.k } else { params.n };
    if j >= limit {
        bail!("node `{s}` is out of range");
    }
    Ok(j)
}

/// Symbols of one stripe, restricted to what the plan asks for.
struct PlannedSource {
    symbols: HashMap<(usize, usize), Element>,
}

impl SymbolSource for PlannedSource {
    fn symbol(&self, node: usize, row: usize) -> Option<Element> {
        self.symbols.get(&(node, row)).copied()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RepairReport {
    pub failed: Vec<String>,
    pub plan: serde_json::Value,
    pub stripes: u64,
    /// Per-stripe bandwidth, identical for every stripe.
    pub stats: RepairStats,
    /// Per-stripe I/O under the disk model.
    pub io: IoStats,
    pub symbols_read_total: u64,
    pub bytes_read_total: u64,
}

/// Restores every missing or damaged shard. Returns `None` if nothing was lost.
pub fn repair_dir(dir: &Path, model: &DiskModel) -> Result<Option<RepairReport>> {
    let (manifest, inst) = Manifest::load(dir)?;
    let p = *inst.params();
    let shards = load_shards(dir, &manifest, &inst)?;
    if shards.lost.is_empty() {
        return Ok(None);
    }
    let plan: RepairPlan = plan_repair(&inst, &shards.lost).map_err(|e| integrity(e.to_string()))?;
    let mut rebuilt: BTreeMap<usize, Vec<Element>> =
        shards.lost.iter().map(|&j| (j, Vec::with_capacity(manifest.stripes as usize * p.alpha))).collect();
    for s in 0..manifest.stripes as usize {
        let mut symbols = HashMap::new();
        for (&node, rows) in &plan.reads {
            let shard = shards.nodes.get(&node).ok_or_else(|| integrity(format!("helper {node} is missing")))?;
            for &row in rows {
                symbols.insert((node, row), shard[s * p.alpha + row]);
            }
        }
        let source = PlannedSource { symbols };
        let restored = execute_repair(&inst, &plan, &source).map_err(|e| integrity(e.to_string()))?;
        for (j, v) in restored {
            rebuilt.get_mut(&j).expect("failed node").extend(v);
        }
    }
    for (j, symbols) in &rebuilt {
        let bytes = shard_file(&inst, *j, manifest.stripes, symbols);
        if manifest.shards.get(&shard_name(*j)) != Some(&hex(&Sha256::digest(&bytes))) {
            return Err(integrity(format!("rebuilt shard {j} does not match its manifest checksum")));
        }
        fs::write(dir.join(shard_name(*j)), bytes)?;
    }
    let stats = repair_stats(&plan, &p);
    let symbol_bytes = p.field.symbol_bytes() as u64;
    Ok(Some(RepairReport {
        failed: plan.failed.iter().map(|&j| htec::repair::node_label(&p, j)).collect(),
        plan: plan.to_json(&p),
        stripes: manifest.stripes,
        symbols_read_total: stats.symbols_read as u64 * manifest.stripes,
        bytes_read_total: stats.symbols_read as u64 * manifest.stripes * symbol_bytes,
        io: count_reads(&plan, model, &p),
        stats,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_round_trips_for_odd_widths() {
        let data: Vec<u8> = (0..=255u8).collect();
        for w in [4u8, 5, 8, 11, 16] {
            let count = symbols_for(data.len() as u64, w) as usize + 3;
            let s = pack_symbols(&data, w, count);
            assert!(s.iter().all(|&x| u32::from(x) < 1 << w));
            assert_eq!(unpack_symbols(&s, w, data.len()), data, "w = {w}");
        }
    }

    #[test]
    fn header_round_trips() {
        let h = ShardHeader { version: SHARD_VERSION, node: 7, stripes: 123, fingerprint: [9; 14] };
        assert_eq!(ShardHeader::parse(&h.to_bytes()).unwrap(), h);
        let mut b = h.to_bytes();
        b[0] = b'X';
        assert!(ShardHeader::parse(&b).is_err());
    }
}
