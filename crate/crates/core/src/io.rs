//! Little-endian binary formats for channels, datasets, sensing matrices and
//! network checkpoints.
//!
//! Every file starts with a 4-byte magic tag. Counts and dimensions are `u64`,
//! complex values are stored as interleaved `(re, im)` `f64` pairs.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::channel::{lens_matrix, sample_from_spatial, ArrayGeometry, ChannelSample};
use crate::error::{Error, Result};
use crate::estimators::{LayerParams, NetworkKind, UnfoldedNetwork};
use crate::linalg::{ComplexMatrix, RealMatrix, C64};
use crate::measurement::{MeasurementBatch, SensingSystem};
use crate::shrinkage::{GmParams, Shrinker, SoftThresholdParams};

pub const CHANNEL_MAGIC: [u8; 4] = *b"BSCH";
pub const DATASET_MAGIC: [u8; 4] = *b"BSDS";
pub const SENSING_MAGIC: [u8; 4] = *b"BSSA";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"BSNW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: usize) {
        self.bytes(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn complex(&mut self, xs: &[C64]) {
        for x in xs {
            self.f64(x.re);
            self.f64(x.im);
        }
    }
    fn finish(self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.buf).map_err(|e| Error::io(path, e))
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    /// Index reported in parse errors.
    record: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0, record: 0 }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            record: self.record,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(self.fail(format!(
                "unexpected end of file at byte {} (needed {n} more bytes)",
                self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, want: [u8; 4], what: &str) -> Result<()> {
        let got = self.take(4)?;
        if got != want {
            return Err(self.fail(format!("not a {what} file (bad magic {got:?})")));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| self.fail(format!("count {v} does not fit in memory")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn complex(&mut self, n: usize) -> Result<Vec<C64>> {
        (0..n).map(|_| Ok(C64::new(self.f64()?, self.f64()?))).collect()
    }

    fn end(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(self.fail(format!("{} trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes spatial-domain channels in the external channel format.
pub fn write_external_channels(path: impl AsRef<Path>, channels: &[Vec<C64>]) -> Result<()> {
    let n = channels.first().map_or(0, Vec::len);
    if channels.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("all channel records must have the same length"));
    }
    let mut w = Writer::default();
    w.bytes(&CHANNEL_MAGIC);
    w.u64(n);
    w.u64(channels.len());
    for c in channels {
        w.complex(c);
    }
    w.finish(path.as_ref())
}

/// Reads spatial-domain channels and maps them to the beamspace of `geometry`.
///
/// A zero-length file is an empty list. The stored record length must equal
/// the antenna count; a mismatch is reported against record 0.
pub fn import_external_channels(path: impl AsRef<Path>, geometry: &ArrayGeometry) -> Result<Vec<ChannelSample>> {
    let path = path.as_ref();
    geometry.validate()?;
    let data = read_file(path)?;
    if data.is_empty() {
        return Ok(Vec::new());
    }
    let mut r = Reader::new(&data);
    r.magic(CHANNEL_MAGIC, "channel")?;
    let n = r.u64()?;
    let count = r.u64()?;
    let want = geometry.antennas();
    if count > 0 && n != want {
        return Err(Error::invalid(format!(
            "record 0 of {} has {n} entries, expected N = {want}",
            path.display()
        )));
    }
    let lens = lens_matrix(geometry)?;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        r.record = i;
        let spatial = r.complex(n)?;
        if spatial.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(r.fail("non-finite channel entry"));
        }
        out.push(sample_from_spatial(geometry, &lens, spatial, Vec::new()));
    }
    r.record = count;
    r.end()?;
    Ok(out)
}

pub fn save_dataset(path: impl AsRef<Path>, n: usize, m: usize, batch: &MeasurementBatch) -> Result<()> {
    if batch.y.iter().any(|y| y.len() != m) || batch.truth.iter().any(|h| h.len() != n) {
        return Err(Error::invalid("dataset vectors do not match (n, m)"));
    }
    let mut w = Writer::default();
    w.bytes(&DATASET_MAGIC);
    w.u64(n);
    w.u64(m);
    w.u64(batch.len());
    for ((y, h), snr) in batch.y.iter().zip(&batch.truth).zip(&batch.snr_db) {
        w.complex(y);
        w.complex(h);
        w.f64(*snr);
    }
    w.finish(path.as_ref())
}

/// Returns `(n, m, batch)`.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<(usize, usize, MeasurementBatch)> {
    let data = read_file(path.as_ref())?;
    let mut r = Reader::new(&data);
    r.magic(DATASET_MAGIC, "dataset")?;
    let n = r.u64()?;
    let m = r.u64()?;
    let count = r.u64()?;
    let mut batch = MeasurementBatch {
        y: Vec::new(),
        truth: Vec::new(),
        snr_db: Vec::new(),
    };
    for i in 0..count {
        r.record = i;
        batch.y.push(r.complex(m)?);
        batch.truth.push(r.complex(n)?);
        batch.snr_db.push(r.f64()?);
    }
    r.record = count;
    r.end()?;
    Ok((n, m, batch))
}

pub fn save_sensing(path: impl AsRef<Path>, sys: &SensingSystem) -> Result<()> {
    let mut w = Writer::default();
    w.bytes(&SENSING_MAGIC);
    w.u64(sys.n);
    w.u64(sys.m);
    for &v in sys.a.as_slice() {
        w.f64(v);
    }
    w.finish(path.as_ref())
}

pub fn load_sensing(path: impl AsRef<Path>) -> Result<SensingSystem> {
    let data = read_file(path.as_ref())?;
    let mut r = Reader::new(&data);
    r.magic(SENSING_MAGIC, "sensing matrix")?;
    let n = r.u64()?;
    let m = r.u64()?;
    let entries = n
        .checked_mul(m)
        .ok_or_else(|| r.fail("matrix dimensions overflow"))?;
    let vals = (0..entries).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.end()?;
    SensingSystem::from_matrix(RealMatrix::from_row_major(m, n, vals))
}

fn kind_code(kind: NetworkKind) -> u32 {
    match kind {
        NetworkKind::Lamp => 0,
        NetworkKind::GmLamp => 1,
    }
}

/// Writes a versioned checkpoint: magic, version, kind, T, N, M, Nc, then per
/// layer `B` (row-major) followed by the shrinkage parameters.
pub fn save_checkpoint(path: impl AsRef<Path>, net: &UnfoldedNetwork) -> Result<()> {
    let first = net
        .layers
        .first()
        .ok_or_else(|| Error::invalid("cannot checkpoint an empty network"))?;
    let (n, m) = (first.b.rows(), first.b.cols());
    let nc = net.nc();
    let mut w = Writer::default();
    w.bytes(&CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u32(kind_code(net.kind));
    w.u64(net.depth());
    w.u64(n);
    w.u64(m);
    w.u64(nc);
    for layer in &net.layers {
        if layer.b.rows() != n || layer.b.cols() != m {
            return Err(Error::invalid("layers disagree on the shape of B"));
        }
        w.complex(layer.b.as_slice());
        match &layer.shrink {
            Shrinker::Soft(p) => w.f64(p.lambda),
            Shrinker::Gm(g) => {
                if g.nc() != nc {
                    return Err(Error::invalid("layers disagree on the mixture size"));
                }
                g.weights_raw.iter().for_each(|&v| w.f64(v));
                w.complex(&g.means);
                g.log_vars.iter().for_each(|&v| w.f64(v));
            }
        }
    }
    w.finish(path.as_ref())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<UnfoldedNetwork> {
    let data = read_file(path.as_ref())?;
    let mut r = Reader::new(&data);
    r.magic(CHECKPOINT_MAGIC, "checkpoint")?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.fail(format!("unsupported checkpoint version {version}")));
    }
    let kind = match r.u32()? {
        0 => NetworkKind::Lamp,
        1 => NetworkKind::GmLamp,
        k => return Err(r.fail(format!("unknown network kind {k}"))),
    };
    let depth = r.u64()?;
    let n = r.u64()?;
    let m = r.u64()?;
    let nc = r.u64()?;
    if depth == 0 || n == 0 || m == 0 {
        return Err(r.fail("checkpoint has an empty dimension"));
    }
    let mut layers = Vec::with_capacity(depth);
    for t in 0..depth {
        r.record = t;
        let b = ComplexMatrix::from_row_major(n, m, r.complex(n * m)?);
        let shrink = match kind {
            NetworkKind::Lamp => Shrinker::Soft(SoftThresholdParams { lambda: r.f64()? }),
            NetworkKind::GmLamp => {
                let weights_raw = (0..nc).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                let means = r.complex(nc)?;
                let log_vars = (0..nc).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                Shrinker::Gm(GmParams {
                    weights_raw,
                    means,
                    log_vars,
                })
            }
        };
        shrink.validate().map_err(|e| r.fail(e.to_string()))?;
        layers.push(LayerParams { b, shrink });
    }
    r.record = depth;
    r.end()?;
    Ok(UnfoldedNetwork { kind, layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_sv_channel;
    use crate::linalg::norm_sqr;
    use crate::rng::Seed;

    #[test]
    fn channel_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ch.bin");
        let g = ArrayGeometry::ula(16);
        let mut rng = Seed(1).rng();
        let chans: Vec<_> = (0..3)
            .map(|_| sample_sv_channel(&g, 2, &mut rng).unwrap().spatial)
            .collect();
        write_external_channels(&p, &chans).unwrap();
        let back = import_external_channels(&p, &g).unwrap();
        assert_eq!(back.len(), 3);
        for (s, c) in back.iter().zip(&chans) {
            assert_eq!(&s.spatial, c);
            assert!((norm_sqr(&s.beamspace) - norm_sqr(c)).abs() < 1e-10);
            assert!(s.paths.is_empty());
        }
    }

    #[test]
    fn empty_and_short_channel_files() {
        let dir = tempfile::tempdir().unwrap();
        let g = ArrayGeometry::ula(16);
        let empty = dir.path().join("empty.bin");
        fs::write(&empty, b"").unwrap();
        assert!(import_external_channels(&empty, &g).unwrap().is_empty());

        let short = dir.path().join("short.bin");
        write_external_channels(&short, &[vec![C64::new(1.0, 0.0); 15]]).unwrap();
        let err = import_external_channels(&short, &g).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(ref m) if m.contains("record 0")), "{err}");

        let truncated = dir.path().join("trunc.bin");
        write_external_channels(&truncated, &vec![vec![C64::new(1.0, 0.0); 16]; 2]).unwrap();
        let mut bytes = fs::read(&truncated).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&truncated, bytes).unwrap();
        let err = import_external_channels(&truncated, &g).unwrap_err();
        assert!(matches!(err, Error::Parse { record: 1, .. }), "{err}");
    }

    #[test]
    fn bad_magic_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        fs::write(&p, b"NOPE\0\0\0\0").unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Parse { .. })));
        assert!(matches!(load_dataset(&p), Err(Error::Parse { .. })));
    }
}
