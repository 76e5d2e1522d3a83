//! Binary checkpoints.
//!
//! Layout (little-endian after the magic):
//!
//! ```text
//! "SGEWC01\0"
//! u32 entry count
//! per entry: u16 name length, name bytes, u8 kind (0 param, 1 fisher,
//!            2 snapshot), u32 task index, u32 element count, f64 elements
//! u32 task count
//! per task:  u16 class count, u16 class ids
//! ```
//!
//! Kind-0 entries named `meta.*` carry the model dimensions and the sample
//! count behind each Fisher estimate.

use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::nets::{CondGan, GanSpec};
use crate::objectives::ConsolidationRecord;

pub const MAGIC: &[u8; 8] = b"SGEWC01\0";

const KIND_PARAM: u8 = 0;
const KIND_FISHER: u8 = 1;
const KIND_SNAPSHOT: u8 = 2;
const SPEC_ENTRY: &str = "meta.spec";
const SAMPLES_ENTRY: &str = "meta.fisher_samples";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("checkpoint {what} mismatch: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Everything needed to resume a run after its last completed task.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub gan: CondGan,
    pub records: Vec<ConsolidationRecord>,
    /// Class sets of every completed task, in order.
    pub completed_tasks: Vec<Vec<usize>>,
}

struct Entry {
    name: String,
    kind: u8,
    task: u32,
    values: Vec<f64>,
}

fn put_entry(out: &mut Vec<u8>, e: &Entry) {
    out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
    out.extend_from_slice(e.name.as_bytes());
    out.push(e.kind);
    out.extend_from_slice(&e.task.to_le_bytes());
    out.extend_from_slice(&(e.values.len() as u32).to_le_bytes());
    for v in &e.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(
    gan: &CondGan,
    records: &[ConsolidationRecord],
    completed_tasks: &[Vec<usize>],
) -> Vec<u8> {
    let s = gan.spec();
    let mut entries = vec![Entry {
        name: SPEC_ENTRY.into(),
        kind: KIND_PARAM,
        task: 0,
        values: vec![
            s.z_dim as f64,
            s.data_dim as f64,
            s.hidden as f64,
            s.classes as f64,
            s.init_std,
        ],
    }];
    for (name, t) in gan.generator_params().iter().chain(gan.discriminator_params().iter()) {
        entries.push(Entry {
            name: name.into(),
            kind: KIND_PARAM,
            task: 0,
            values: t.to_vec(),
        });
    }
    for r in records {
        let task = r.task_index as u32;
        entries.push(Entry {
            name: SAMPLES_ENTRY.into(),
            kind: KIND_PARAM,
            task,
            values: vec![r.sample_count as f64],
        });
        entries.push(Entry {
            name: "generator".into(),
            kind: KIND_SNAPSHOT,
            task,
            values: r.theta_star.to_vec(),
        });
        entries.push(Entry {
            name: "generator".into(),
            kind: KIND_FISHER,
            task,
            values: r.fisher_diag.to_vec(),
        });
    }
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in &entries {
        put_entry(&mut out, e);
    }
    out.extend_from_slice(&(completed_tasks.len() as u32).to_le_bytes());
    for task in completed_tasks {
        out.extend_from_slice(&(task.len() as u16).to_le_bytes());
        for &c in task {
            out.extend_from_slice(&(c as u16).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(self.buf.len()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> std::result::Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn mismatch(what: &str, expected: impl ToString, found: impl ToString) -> CheckpointError {
    CheckpointError::DimensionMismatch {
        what: what.into(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic.into());
    }
    let mut r = Reader {
        buf: bytes,
        pos: MAGIC.len(),
    };
    let n_entries = r.u32()?;
    let mut entries = Vec::new();
    for _ in 0..n_entries {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| CheckpointError::Malformed("entry name is not UTF-8".into()))?;
        let kind = r.take(1)?[0];
        let task = r.u32()?;
        let count = r.u32()? as usize;
        let raw = r.take(count.checked_mul(8).ok_or(CheckpointError::Truncated(bytes.len()))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(Entry {
            name,
            kind,
            task,
            values,
        });
    }
    let n_tasks = r.u32()?;
    let mut completed_tasks = Vec::new();
    for _ in 0..n_tasks {
        let n = r.u16()? as usize;
        completed_tasks.push((0..n).map(|_| r.u16().map(usize::from)).collect::<std::result::Result<Vec<_>, _>>()?);
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)).into());
    }

    let spec_vals = entries
        .iter()
        .find(|e| e.kind == KIND_PARAM && e.name == SPEC_ENTRY)
        .map(|e| e.values.clone())
        .ok_or_else(|| CheckpointError::Malformed("missing model dimensions".into()))?;
    if spec_vals.len() != 5 {
        return Err(CheckpointError::Malformed("bad model dimension entry".into()).into());
    }
    let spec = GanSpec {
        z_dim: spec_vals[0] as usize,
        data_dim: spec_vals[1] as usize,
        hidden: spec_vals[2] as usize,
        classes: spec_vals[3] as usize,
        init_std: spec_vals[4],
    };
    let gan = CondGan::init(
        GanSpec {
            init_std: 0.0,
            ..spec
        },
        &mut crate::rng::RngStream::new(0),
    )?;
    for (name, t) in gan.generator_params().iter().chain(gan.discriminator_params().iter()) {
        let e = entries
            .iter()
            .find(|e| e.kind == KIND_PARAM && e.name == name)
            .ok_or_else(|| CheckpointError::Malformed(format!("missing parameter {name}")))?;
        if e.values.len() != t.numel() {
            return Err(mismatch(name, t.numel(), e.values.len()).into());
        }
        t.data_mut().copy_from_slice(&e.values);
    }
    let gan = CondGan::from_flat(
        spec,
        &gan.generator_params().flatten(),
        &gan.discriminator_params().flatten(),
    )?;

    let g_count = spec.generator_param_count();
    let mut records = Vec::new();
    for snap in entries.iter().filter(|e| e.kind == KIND_SNAPSHOT) {
        let fisher = entries
            .iter()
            .find(|e| e.kind == KIND_FISHER && e.task == snap.task)
            .ok_or_else(|| CheckpointError::Malformed(format!("task {} has no Fisher entry", snap.task)))?;
        let samples = entries
            .iter()
            .find(|e| e.kind == KIND_PARAM && e.name == SAMPLES_ENTRY && e.task == snap.task)
            .and_then(|e| e.values.first().copied())
            .unwrap_or(0.0);
        if snap.values.len() != g_count {
            return Err(mismatch("snapshot length", g_count, snap.values.len()).into());
        }
        if fisher.values.len() != g_count {
            return Err(mismatch("Fisher length", g_count, fisher.values.len()).into());
        }
        let class_ids = completed_tasks
            .get(snap.task as usize)
            .cloned()
            .ok_or_else(|| CheckpointError::Malformed(format!("record for unknown task {}", snap.task)))?;
        records.push(ConsolidationRecord {
            task_index: snap.task as usize,
            class_ids,
            theta_star: snap.values.clone().into(),
            fisher_diag: fisher.values.clone().into(),
            sample_count: samples as usize,
        });
    }
    Ok(Checkpoint {
        gan,
        records,
        completed_tasks,
    })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    gan: &CondGan,
    records: &[ConsolidationRecord],
    completed_tasks: &[Vec<usize>],
) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    // Write-then-rename so a crash never leaves a half-written checkpoint.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(gan, records, completed_tasks))?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode(&fs::read(path)?)
}

/// Loads a checkpoint and checks that it was written for `spec`.
pub fn load_checkpoint_expecting(path: impl AsRef<Path>, spec: &GanSpec) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    let found = ck.gan.spec();
    let dims = |s: &GanSpec| (s.z_dim, s.data_dim, s.hidden, s.classes);
    if dims(found) != dims(spec) {
        return Err(mismatch(
            "model dimensions (z_dim, data_dim, hidden, classes)",
            format!("{:?}", dims(spec)),
            format!("{:?}", dims(found)),
        )
        .into());
    }
    Ok(ck)
}
