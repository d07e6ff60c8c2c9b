//! On-disk formats: raw recordings and trained models, each a little-endian
//! binary file with a JSON sidecar next to it (same path, `.json`
//! extension). Every write goes through a temporary file and a rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::FilterBankSpec;
use crate::eeg::EegEpoch;
use crate::error::{Error, Result};
use crate::task::{EpochLabel, Models, Recording};
use crate::trca::TrcaModel;
use crate::velocity::{VelocityWeight, WeightKind};

pub const SESSION_MAGIC: &[u8; 8] = b"NTSESS\0\0";
pub const MODEL_MAGIC: &[u8; 8] = b"NTMODEL\0";
pub const FORMAT_VERSION: u32 = 1;

/// `foo.bin` → `foo.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Replace `path` with `bytes` in one rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// JSON sidecar of a session file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSidecar {
    pub format_version: u32,
    pub n_channels: usize,
    pub sample_rate_hz: f64,
    pub epoch_len: usize,
    pub labels: Vec<EpochLabel>,
}

/// Header: magic, version (u32), channels (u32), rate (f64), epoch length
/// (u32), epoch count (u32). Body: every epoch channel-major as f32.
pub fn encode_session(recording: &Recording) -> Result<(Vec<u8>, SessionSidecar)> {
    let first = recording
        .epochs
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty recording".into()))?;
    let (n_ch, len, rate) = (first.channels(), first.len(), first.sample_rate_hz);
    if recording.labels.len() != recording.epochs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} epochs",
            recording.labels.len(),
            recording.epochs.len()
        )));
    }
    let mut out = Vec::with_capacity(32 + recording.len() * n_ch * len * 4);
    out.extend_from_slice(SESSION_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&u32_of(n_ch)?.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&u32_of(len)?.to_le_bytes());
    out.extend_from_slice(&u32_of(recording.len())?.to_le_bytes());
    for e in &recording.epochs {
        if e.channels() != n_ch || e.len() != len || e.sample_rate_hz != rate {
            return Err(Error::DimensionMismatch(
                "epochs differ in shape or rate".into(),
            ));
        }
        for ch in &e.samples {
            for x in ch {
                out.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
    }
    let sidecar = SessionSidecar {
        format_version: FORMAT_VERSION,
        n_channels: n_ch,
        sample_rate_hz: rate,
        epoch_len: len,
        labels: recording.labels.clone(),
    };
    Ok((out, sidecar))
}

pub fn decode_session(bytes: &[u8], sidecar: &SessionSidecar) -> Result<Recording> {
    let mut r = Reader::new(bytes);
    r.magic(SESSION_MAGIC)?;
    r.version()?;
    let n_ch = r.u32()? as usize;
    let rate = r.f64()?;
    let len = r.u32()? as usize;
    let n = r.u32()? as usize;
    if (n_ch, len, rate)
        != (
            sidecar.n_channels,
            sidecar.epoch_len,
            sidecar.sample_rate_hz,
        )
        || n != sidecar.labels.len()
    {
        return Err(Error::Format(
            "sidecar disagrees with the binary header".into(),
        ));
    }
    let mut epochs = Vec::with_capacity(n);
    for _ in 0..n {
        let samples = (0..n_ch)
            .map(|_| {
                (0..len)
                    .map(|_| r.f32().map(f64::from))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        epochs.push(EegEpoch::new(samples, rate)?);
    }
    r.finish()?;
    Ok(Recording {
        labels: sidecar.labels.clone(),
        epochs,
    })
}

pub fn write_session(path: &Path, recording: &Recording) -> Result<()> {
    let (bytes, sidecar) = encode_session(recording)?;
    write_atomic(path, &bytes)?;
    write_atomic(&sidecar_path(path), &serde_json::to_vec_pretty(&sidecar)?)
}

pub fn read_session(path: &Path) -> Result<Recording> {
    let sidecar: SessionSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    decode_session(&fs::read(path)?, &sidecar)
}

/// JSON sidecar of a model blob; also the summary the service reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub format_version: u32,
    pub n_regions: usize,
    pub n_subbands: usize,
    pub n_channels: usize,
    pub template_len: usize,
    pub sample_rate_hz: f64,
    pub n_trials_trained: usize,
    pub weight_kind: WeightKind,
    pub eigenvalues: Vec<f64>,
    pub filter_bank: FilterBankSpec,
}

impl ModelMetadata {
    pub fn describe(models: &Models, filter_bank: &FilterBankSpec) -> Self {
        let t = &models.trca;
        Self {
            format_version: FORMAT_VERSION,
            n_regions: t.n_regions(),
            n_subbands: t.n_subbands(),
            n_channels: t.n_channels(),
            template_len: t.template_len(),
            sample_rate_hz: t.sample_rate_hz,
            n_trials_trained: t.n_trials_trained,
            weight_kind: models.velocity.kind,
            eigenvalues: t.eigenvalues.clone(),
            filter_bank: filter_bank.clone(),
        }
    }
}

/// Header: magic, version, sub-bands, channels, regions, template length,
/// weight kind (u32 each), trials trained (u64). Body (f64): rate, filters,
/// eigenvalues, templates region-major, weight rows.
pub fn encode_models(models: &Models) -> Result<Vec<u8>> {
    let t = &models.trca;
    let (n_sub, n_ch, n_reg, len) = (
        t.n_subbands(),
        t.n_channels(),
        t.n_regions(),
        t.template_len(),
    );
    if models.velocity.n_regions() != n_reg {
        return Err(Error::DimensionMismatch(format!(
            "velocity weight has {} rows, TRCA {} regions",
            models.velocity.n_regions(),
            n_reg
        )));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    for v in [
        FORMAT_VERSION,
        u32_of(n_sub)?,
        u32_of(n_ch)?,
        u32_of(n_reg)?,
        u32_of(len)?,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let kind: u32 = match models.velocity.kind {
        WeightKind::Initial => 0,
        WeightKind::Corrected => 1,
    };
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&(t.n_trials_trained as u64).to_le_bytes());
    let mut put = |x: f64| out.extend_from_slice(&x.to_le_bytes());
    put(t.sample_rate_hz);
    for f in &t.filters {
        check_len(f.len(), n_ch, "filter")?;
        f.iter().for_each(|x| put(*x));
    }
    check_len(t.eigenvalues.len(), n_sub, "eigenvalues")?;
    t.eigenvalues.iter().for_each(|x| put(*x));
    for region in &t.templates {
        check_len(region.len(), n_sub, "templates")?;
        for band in region {
            check_len(band.len(), len, "template")?;
            band.iter().for_each(|x| put(*x));
        }
    }
    for row in &models.velocity.matrix {
        put(row[0]);
        put(row[1]);
    }
    Ok(out)
}

pub fn decode_models(bytes: &[u8]) -> Result<Models> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    r.version()?;
    let n_sub = r.u32()? as usize;
    let n_ch = r.u32()? as usize;
    let n_reg = r.u32()? as usize;
    let len = r.u32()? as usize;
    let kind = match r.u32()? {
        0 => WeightKind::Initial,
        1 => WeightKind::Corrected,
        k => return Err(Error::Format(format!("unknown weight kind {k}"))),
    };
    let n_trials = r.u64()? as usize;
    let rate = r.f64()?;
    let filters = (0..n_sub)
        .map(|_| r.f64s(n_ch))
        .collect::<Result<Vec<_>>>()?;
    let eigenvalues = r.f64s(n_sub)?;
    let templates = (0..n_reg)
        .map(|_| (0..n_sub).map(|_| r.f64s(len)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let matrix = (0..n_reg)
        .map(|_| Ok([r.f64()?, r.f64()?]))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(Models {
        trca: TrcaModel {
            filters,
            templates,
            eigenvalues,
            n_trials_trained: n_trials,
            sample_rate_hz: rate,
        },
        velocity: VelocityWeight { matrix, kind },
    })
}

pub fn write_models(path: &Path, models: &Models, filter_bank: &FilterBankSpec) -> Result<()> {
    write_atomic(path, &encode_models(models)?)?;
    let meta = ModelMetadata::describe(models, filter_bank);
    write_atomic(&sidecar_path(path), &serde_json::to_vec_pretty(&meta)?)
}

pub fn read_models(path: &Path) -> Result<(Models, ModelMetadata)> {
    let models = decode_models(&fs::read(path)?)?;
    let meta: ModelMetadata = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if meta != ModelMetadata::describe(&models, &meta.filter_bank) {
        return Err(Error::Format(
            "model metadata disagrees with the blob".into(),
        ));
    }
    Ok((models, meta))
}

fn u32_of(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("{n} does not fit the header")))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what}: {got} values, expected {want}"
        )))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn magic(&mut self, want: &[u8; 8]) -> Result<()> {
        if &self.take::<8>()? != want {
            return Err(Error::Format("bad magic".into()));
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        match self.u32()? {
            FORMAT_VERSION => Ok(()),
            v => Err(Error::Format(format!("unsupported format version {v}"))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SessionConfig;
    use crate::layout::TargetSpec;
    use crate::task::TaskKind;
    use crate::vec2::Vec2;

    fn tiny_recording() -> Recording {
        let e = |k: f64| {
            EegEpoch::new(vec![vec![k, -0.5, 1.25], vec![0.0, 3.0, k * 2.0]], 250.0).unwrap()
        };
        let label = |i| EpochLabel {
            task: TaskKind::Stage1,
            target_index: i,
            target: TargetSpec::free(Vec2::new(1.0, 2.0), 40.0),
            rep: 0,
            cursor_px: Vec2::ZERO,
            gaze_px: Vec2::new(1.0, 2.0),
            noise_key: 7,
        };
        Recording {
            labels: vec![label(0), label(1)],
            epochs: vec![e(0.25), e(-8.0)],
        }
    }

    #[test]
    fn session_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let rec = tiny_recording();
        write_session(&path, &rec).unwrap();
        assert_eq!(read_session(&path).unwrap(), rec);
        // header 8 + 4 + 4 + 8 + 4 + 4, then 2 epochs × 2 ch × 3 samples × 4 bytes
        assert_eq!(fs::read(&path).unwrap().len(), 32 + 48);
    }

    #[test]
    fn body_is_little_endian_channel_major() {
        let (bytes, _) = encode_session(&tiny_recording()).unwrap();
        let at = |i: usize| f32::from_le_bytes(bytes[32 + 4 * i..36 + 4 * i].try_into().unwrap());
        assert_eq!([at(0), at(1), at(2), at(3)], [0.25, -0.5, 1.25, 0.0]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (bytes, sidecar) = encode_session(&tiny_recording()).unwrap();
        assert!(matches!(
            decode_session(&bytes[..40], &sidecar),
            Err(Error::Format(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_session(&bad, &sidecar),
            Err(Error::Format(_))
        ));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode_session(&longer, &sidecar).is_err());
        let mut other = sidecar.clone();
        other.labels.pop();
        assert!(decode_session(&bytes, &other).is_err());
    }

    #[test]
    fn model_round_trip_is_exact() {
        let models = Models {
            trca: TrcaModel {
                filters: vec![vec![0.6, 0.8], vec![1.0, 0.0]],
                templates: vec![vec![vec![0.1, 0.2, 0.3], vec![1e-300, -2.5, 7.0]]; 3],
                eigenvalues: vec![3.5, 1.25],
                n_trials_trained: 6,
                sample_rate_hz: 250.0,
            },
            velocity: VelocityWeight {
                matrix: vec![[1.0, 0.1], [-0.3, 2.0], [0.0, -1.0 / 3.0]],
                kind: WeightKind::Corrected,
            },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let bank = SessionConfig::default().filter_bank;
        write_models(&path, &models, &bank).unwrap();
        let (back, meta) = read_models(&path).unwrap();
        assert_eq!(back, models);
        assert_eq!(meta.n_regions, 3);
        assert_eq!(meta.weight_kind, WeightKind::Corrected);
        let bytes = encode_models(&models).unwrap();
        assert!(decode_models(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
