//! File formats: count tables (TSV), binary matrices and estimates (CSV),
//! and the binary snapshot archive with its text index.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{MmfError, Result};
use crate::mcmc::{KernelDiagnostics, Snapshot, Trace};
use crate::model::{Cluster, CountMatrix, ModelState};

pub const TRACE_MAGIC: &[u8; 8] = b"MMFTRACE";
pub const TRACE_VERSION: u8 = 1;

/// Fixed 10-significant-digit rendering used by every CSV writer.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..15).contains(&mag) {
        let decimals = (9 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.9e}")
    }
}

/// Counts table: header row of taxon names after a leading host-id column
/// label, then one row per host.
pub fn read_counts(path: &Path) -> Result<CountMatrix> {
    let text = fs::read_to_string(path)?;
    parse_counts(&text)
}

pub fn parse_counts(text: &str) -> Result<CountMatrix> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| MmfError::Empty("counts file has no header".into()))?;
    let taxa: Vec<String> = header.split('\t').skip(1).map(|s| s.trim().to_string()).collect();
    if taxa.is_empty() {
        return Err(MmfError::Format("counts header lists no taxa".into()));
    }
    let mut hosts = Vec::new();
    let mut values = Vec::new();
    for (ln, line) in lines {
        let mut fields = line.split('\t');
        let host = fields.next().unwrap_or("").trim().to_string();
        let row: Vec<&str> = fields.collect();
        if row.len() != taxa.len() {
            return Err(MmfError::Format(format!("line {}: {} counts for {} taxa", ln + 1, row.len(), taxa.len())));
        }
        for v in row {
            let v = v.trim();
            values.push(v.parse::<u32>().map_err(|_| MmfError::Format(format!("line {}: `{v}` is not a non-negative integer", ln + 1)))?);
        }
        hosts.push(host);
    }
    if hosts.is_empty() {
        return Err(MmfError::Empty("counts file has no hosts".into()));
    }
    let counts = Array2::from_shape_vec((hosts.len(), taxa.len()), values).expect("row lengths checked");
    CountMatrix::new(counts, taxa, hosts)
}

pub fn write_counts(path: &Path, data: &CountMatrix) -> Result<()> {
    let mut out = String::from("host");
    for t in data.taxa() {
        out.push('\t');
        out.push_str(t);
    }
    out.push('\n');
    for (i, host) in data.hosts().iter().enumerate() {
        out.push_str(host);
        for v in data.row(i) {
            out.push('\t');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// CSV with an optional header and optional row labels.
pub fn matrix_csv<T, F>(m: &Array2<T>, header: Option<&[String]>, row_labels: Option<&[String]>, fmt: F) -> String
where
    F: Fn(&T) -> String,
{
    let mut out = String::new();
    if let Some(h) = header {
        if row_labels.is_some() {
            out.push_str("id,");
        }
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for (i, row) in m.rows().into_iter().enumerate() {
        if let Some(labels) = row_labels {
            out.push_str(&labels[i]);
            out.push(',');
        }
        out.push_str(&row.iter().map(&fmt).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn binary_csv(m: &Array2<u8>, header: Option<&[String]>, row_labels: Option<&[String]>) -> String {
    matrix_csv(m, header, row_labels, |v| v.to_string())
}

pub fn float_csv(m: &Array2<f64>, header: Option<&[String]>, row_labels: Option<&[String]>) -> String {
    matrix_csv(m, header, row_labels, |&v| fmt_f64(v))
}

/// Reads a 0/1 CSV written by [`binary_csv`] with a header and row labels.
pub fn read_binary_csv(path: &Path) -> Result<Array2<u8>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .skip(1)
            .map(|v| match v.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(MmfError::Format(format!("{}: line {}: `{other}` is not 0 or 1", path.display(), ln + 1))),
            })
            .collect::<Result<Vec<u8>>>()?;
        rows.push(row);
    }
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(MmfError::Format(format!("{}: ragged rows", path.display())));
    }
    Ok(Array2::from_shape_vec((rows.len(), width), rows.concat()).expect("rectangular"))
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.0.write_all(&[v])?)
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn bits(&mut self, v: impl Iterator<Item = bool>) -> Result<()> {
        let bytes: Vec<u8> = v.map(u8::from).collect();
        Ok(self.0.write_all(&bytes)?)
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| MmfError::Format(format!("truncated trace archive: {e}")))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn bits(&mut self, n: usize) -> Result<Vec<bool>> {
        let mut b = vec![0u8; n];
        self.0.read_exact(&mut b).map_err(|e| MmfError::Format(format!("truncated trace archive: {e}")))?;
        b.into_iter()
            .map(|v| match v {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(MmfError::Format(format!("bit byte {v} in trace archive"))),
            })
            .collect()
    }
}

fn snapshot_len(n: usize, p: usize, k: usize) -> u64 {
    (8 + 4 + 8 + 8 + 3 * 8 * p + n * p + k * (8 + n + p + 8 * p)) as u64
}

/// Writes the snapshot archive and its index (`iteration\tK\toffset` per
/// line). Layout, little-endian: magic, version byte, chain id (u32), seed,
/// iterations, burn-in, thin (u64), n, p (u32), snapshot count (u64); then
/// per snapshot: iteration (u64), K (u32), m, rho, c[p], s[p], t[p] (f64),
/// Z row-major (one byte per entry), and per column p_k (f64), host bits
/// (n bytes), taxon bits (p bytes), weights (p f64).
pub fn write_trace(archive: &Path, index: &Path, trace: &Trace, n: usize, p: usize) -> Result<()> {
    let mut w = Writer(BufWriter::new(fs::File::create(archive)?));
    let mut idx = String::from("iteration\tK\toffset\n");
    w.0.write_all(TRACE_MAGIC)?;
    w.u8(TRACE_VERSION)?;
    w.u32(trace.chain_id)?;
    w.u64(trace.seed)?;
    w.u64(trace.iterations as u64)?;
    w.u64(trace.burn_in as u64)?;
    w.u64(trace.thin as u64)?;
    w.u32(n as u32)?;
    w.u32(p as u32)?;
    w.u64(trace.snapshots.len() as u64)?;
    let mut offset = (8 + 1 + 4 + 8 * 4 + 4 + 4 + 8) as u64;
    for snap in &trace.snapshots {
        let st = &snap.state;
        if st.z.dim() != (n, p) {
            return Err(MmfError::ShapeMismatch("snapshot dimensions differ from the archive header".into()));
        }
        idx.push_str(&format!("{}\t{}\t{}\n", snap.iteration, st.k(), offset));
        w.u64(snap.iteration as u64)?;
        w.u32(st.k() as u32)?;
        w.f64(st.m)?;
        w.f64(st.rho)?;
        for v in st.c.iter().chain(&st.s).chain(&st.t) {
            w.f64(*v)?;
        }
        w.bits(st.z.iter().map(|&v| v == 1))?;
        for cl in &st.clusters {
            w.f64(cl.prob)?;
            w.bits(cl.hosts.iter().copied())?;
            w.bits(cl.taxa.iter().copied())?;
            for &x in &cl.weights {
                w.f64(x)?;
            }
        }
        offset += snapshot_len(n, p, st.k());
    }
    w.0.flush()?;
    fs::write(index, idx)?;
    Ok(())
}

/// Reads an archive written by [`write_trace`]. Per-iteration records and
/// kernel diagnostics are not part of the archive and come back empty.
pub fn read_trace(archive: &Path) -> Result<Trace> {
    let mut r = Reader(BufReader::new(fs::File::open(archive)?));
    let magic: [u8; 8] = r.bytes()?;
    if &magic != TRACE_MAGIC {
        return Err(MmfError::Format(format!("{} is not a trace archive", archive.display())));
    }
    let version = r.u8()?;
    if version != TRACE_VERSION {
        return Err(MmfError::Format(format!("unsupported trace version {version}")));
    }
    let chain_id = r.u32()?;
    let seed = r.u64()?;
    let iterations = r.u64()? as usize;
    let burn_in = r.u64()? as usize;
    let thin = r.u64()? as usize;
    let n = r.u32()? as usize;
    let p = r.u32()? as usize;
    let count = r.u64()? as usize;
    let mut snapshots = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let iteration = r.u64()? as usize;
        let k = r.u32()? as usize;
        let m = r.f64()?;
        let rho = r.f64()?;
        let mut vec_p = || (0..p).map(|_| r.f64()).collect::<Result<Vec<f64>>>();
        let c = vec_p()?;
        let s = vec_p()?;
        let t = vec_p()?;
        let z = Array2::from_shape_vec((n, p), r.bits(n * p)?.into_iter().map(u8::from).collect()).expect("n*p entries");
        let mut clusters = Vec::with_capacity(k);
        for _ in 0..k {
            let prob = r.f64()?;
            let hosts = r.bits(n)?;
            let taxa = r.bits(p)?;
            let weights = (0..p).map(|_| r.f64()).collect::<Result<Vec<f64>>>()?;
            clusters.push(Cluster { hosts, taxa, weights, prob });
        }
        snapshots.push(Snapshot { iteration, state: ModelState { z, clusters, c, s, t, m, rho } });
    }
    let mut rest = Vec::new();
    r.0.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(MmfError::Format(format!("{} trailing bytes in trace archive", rest.len())));
    }
    Ok(Trace { chain_id, seed, iterations, burn_in, thin, records: Vec::new(), snapshots, diagnostics: KernelDiagnostics::default() })
}

/// Per-iteration scalars as CSV.
pub fn scalars_csv(trace: &Trace) -> String {
    let mut out = String::from("iteration,K,log_joint,m,rho,acc_w,acc_c,acc_st,acc_pk,acc_new\n");
    for r in &trace.records {
        let mut fields = vec![r.iteration.to_string(), r.k.to_string(), fmt_f64(r.log_joint), fmt_f64(r.m), fmt_f64(r.rho)];
        fields.extend(r.acceptance.iter().map(|&a| fmt_f64(a)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Reads the `iteration\tK\toffset` index.
pub fn read_trace_index(path: &Path) -> Result<Vec<(usize, usize, u64)>> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (ln, line) in file.lines().enumerate().skip(1) {
        let line = line?;
        let f: Vec<&str> = line.split('\t').collect();
        let parse_err = || MmfError::Format(format!("{}: line {}", path.display(), ln + 1));
        if f.len() != 3 {
            return Err(parse_err());
        }
        out.push((
            f[0].parse().map_err(|_| parse_err())?,
            f[1].parse().map_err(|_| parse_err())?,
            f[2].parse().map_err(|_| parse_err())?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ten_significant_digits() {
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(-2.5), "-2.5");
        assert_eq!(fmt_f64(std::f64::consts::PI), "3.141592654");
        assert_eq!(fmt_f64(123456.789012345), "123456.789");
        assert_eq!(fmt_f64(1.0 / 3.0e7), "3.333333333e-8");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn counts_round_trip() {
        let data = CountMatrix::new(array![[1u32, 0, 4], [7, 2, 0]], vec!["a".into(), "b".into(), "c".into()], vec!["x".into(), "y".into()]).unwrap();
        let dir = tempdir();
        let path = dir.join("counts.tsv");
        write_counts(&path, &data).unwrap();
        assert_eq!(read_counts(&path).unwrap(), data);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn counts_errors() {
        assert!(parse_counts("").is_err());
        assert!(parse_counts("host\ta\n").is_err());
        assert!(parse_counts("host\ta\tb\nh1\t1\n").is_err());
        assert!(parse_counts("host\ta\tb\nh1\t1\t-2\n").is_err());
        assert!(parse_counts("host\ta\tb\nh1\t0\t0\n").is_err());
    }

    fn tempdir() -> std::path::PathBuf {
        use std::sync::atomic::{AtomicUsize, Ordering};
        static N: AtomicUsize = AtomicUsize::new(0);
        let dir = std::env::temp_dir().join(format!("mmf-io-{}-{}", std::process::id(), N.fetch_add(1, Ordering::SeqCst)));
        fs::create_dir_all(&dir).unwrap();
        dir
    }
}
