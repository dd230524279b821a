//! Versioned binary agent checkpoints: parameters plus optimizer state.
//!
//! Layout (all integers little-endian, all floats f64 LE):
//!
//! ```text
//! magic        4 bytes  "GLCK"
//! version      u32      currently 1
//! role         u8       0 = questioner, 1 = answerer
//! birth_epoch  u64
//! v_q, v_a     u32, u32
//! memoryless   u8
//! embed        u32
//! hidden       u32
//! n_tensors    u32
//! tensors      n_tensors records in canonical parameter order:
//!   rank       u8
//!   dims       rank x u32
//!   data       numel x f64
//! adam_step    u64
//! adam_hyper   4 x f64   (learning rate, beta1, beta2, epsilon)
//! adam_m       same tensor record layout and order as `tensors`
//! adam_v       same tensor record layout and order as `tensors`
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{ABot, ArchDims, QBot, Role, VocabSetting};
use crate::autodiff::{AdamHyper, AdamState, Tensor};
use crate::error::{Error, Result};
use crate::population::Population;

const MAGIC: &[u8; 4] = b"GLCK";
const VERSION: u32 = 1;

struct Writer<W: Write> {
    out: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        self.out.write_all(&[v])?;
        Ok(())
    }

    fn u32(&mut self, v: u32) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn u64(&mut self, v: u64) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn tensor(&mut self, t: &Tensor) -> Result<()> {
        self.u8(t.shape().len() as u8)?;
        for &d in t.shape() {
            self.u32(d as u32)?;
        }
        for &v in t.data() {
            self.f64(v)?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    inp: R,
}

impl<R: Read> Reader<R> {
    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.inp.read_exact(&mut b)?;
        Ok(b[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.inp.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inp.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.inp.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u8()? as usize;
        if rank > 4 {
            return Err(Error::Checkpoint(format!("implausible tensor rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        if numel > 100_000_000 {
            return Err(Error::Checkpoint(format!("implausible tensor size {numel}")));
        }
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(self.f64()?);
        }
        Tensor::from_vec(&shape, data)
    }
}

struct AgentHeader {
    role: Role,
    birth_epoch: u64,
    setting: VocabSetting,
    dims: ArchDims,
}

fn write_agent<W: Write>(
    w: &mut Writer<W>,
    header: &AgentHeader,
    params: &[&Tensor],
    adam: &AdamState,
) -> Result<()> {
    w.out.write_all(MAGIC)?;
    w.u32(VERSION)?;
    w.u8(match header.role {
        Role::Questioner => 0,
        Role::Answerer => 1,
    })?;
    w.u64(header.birth_epoch)?;
    w.u32(header.setting.v_q as u32)?;
    w.u32(header.setting.v_a as u32)?;
    w.u8(header.setting.memoryless_a as u8)?;
    w.u32(header.dims.embed as u32)?;
    w.u32(header.dims.hidden as u32)?;
    w.u32(params.len() as u32)?;
    for p in params {
        w.tensor(p)?;
    }
    let hyper = adam.hyper();
    w.u64(adam.step_count())?;
    w.f64(hyper.learning_rate)?;
    w.f64(hyper.beta1)?;
    w.f64(hyper.beta2)?;
    w.f64(hyper.epsilon)?;
    let (m, v) = adam.moments();
    for t in m.iter().chain(v) {
        w.tensor(t)?;
    }
    Ok(())
}

fn read_agent<R: Read>(
    r: &mut Reader<R>,
) -> Result<(AgentHeader, Vec<Tensor>, AdamState)> {
    let mut magic = [0u8; 4];
    r.inp.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".to_string()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let role = match r.u8()? {
        0 => Role::Questioner,
        1 => Role::Answerer,
        other => return Err(Error::Checkpoint(format!("bad role byte {other}"))),
    };
    let birth_epoch = r.u64()?;
    let v_q = r.u32()? as usize;
    let v_a = r.u32()? as usize;
    let memoryless_a = r.u8()? != 0;
    let embed = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let n = r.u32()? as usize;
    if n > 64 {
        return Err(Error::Checkpoint(format!("implausible tensor count {n}")));
    }
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        params.push(r.tensor()?);
    }
    let step = r.u64()?;
    let hyper = AdamHyper {
        learning_rate: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        epsilon: r.f64()?,
    };
    let mut m = Vec::with_capacity(n);
    for _ in 0..n {
        m.push(r.tensor()?);
    }
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        v.push(r.tensor()?);
    }
    let header = AgentHeader {
        role,
        birth_epoch,
        setting: VocabSetting { v_q, v_a, memoryless_a },
        dims: ArchDims { hidden, embed },
    };
    Ok((header, params, AdamState::from_parts(hyper, step, m, v)))
}

pub fn write_qbot(path: &Path, bot: &QBot) -> Result<()> {
    let mut w = Writer { out: BufWriter::new(File::create(path)?) };
    let header = AgentHeader {
        role: Role::Questioner,
        birth_epoch: bot.birth_epoch,
        setting: bot.setting,
        dims: bot.dims,
    };
    write_agent(&mut w, &header, &bot.params(), &bot.adam)?;
    w.out.flush()?;
    Ok(())
}

pub fn write_abot(path: &Path, bot: &ABot) -> Result<()> {
    let mut w = Writer { out: BufWriter::new(File::create(path)?) };
    let header = AgentHeader {
        role: Role::Answerer,
        birth_epoch: bot.birth_epoch,
        setting: bot.setting,
        dims: bot.dims,
    };
    write_agent(&mut w, &header, &bot.params(), &bot.adam)?;
    w.out.flush()?;
    Ok(())
}

pub fn read_qbot(path: &Path) -> Result<QBot> {
    let mut r = Reader { inp: BufReader::new(File::open(path)?) };
    let (header, params, adam) = read_agent(&mut r)?;
    if header.role != Role::Questioner {
        return Err(Error::Checkpoint("expected a questioner checkpoint".to_string()));
    }
    let mut bot =
        QBot::init(header.setting, header.dims, adam.hyper(), 0, header.birth_epoch);
    restore_params(&mut bot.params_mut(), params)?;
    bot.adam = adam;
    Ok(bot)
}

pub fn read_abot(path: &Path) -> Result<ABot> {
    let mut r = Reader { inp: BufReader::new(File::open(path)?) };
    let (header, params, adam) = read_agent(&mut r)?;
    if header.role != Role::Answerer {
        return Err(Error::Checkpoint("expected an answerer checkpoint".to_string()));
    }
    let mut bot =
        ABot::init(header.setting, header.dims, adam.hyper(), 0, header.birth_epoch);
    restore_params(&mut bot.params_mut(), params)?;
    bot.adam = adam;
    Ok(bot)
}

fn restore_params(slots: &mut [&mut Tensor], values: Vec<Tensor>) -> Result<()> {
    if slots.len() != values.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} tensors, architecture needs {}",
            values.len(),
            slots.len()
        )));
    }
    for (slot, value) in slots.iter_mut().zip(values) {
        if slot.shape() != value.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor shape {:?} does not match architecture {:?}",
                value.shape(),
                slot.shape()
            )));
        }
        **slot = value;
    }
    Ok(())
}

/// Sidecar metadata written next to the per-agent files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PopulationMeta {
    pub epoch: u64,
    pub n_q: usize,
    pub n_a: usize,
    pub val_q: Vec<f64>,
    pub val_a: Vec<f64>,
}

/// Writes a whole population under `dir` as `qbot_NN.ckpt`, `abot_NN.ckpt`
/// and a `population.json` sidecar.
pub fn write_population(dir: &Path, population: &Population, epoch: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, bot) in population.qbots.iter().enumerate() {
        write_qbot(&dir.join(format!("qbot_{i:02}.ckpt")), bot)?;
    }
    for (i, bot) in population.abots.iter().enumerate() {
        write_abot(&dir.join(format!("abot_{i:02}.ckpt")), bot)?;
    }
    let meta = PopulationMeta {
        epoch,
        n_q: population.n_q(),
        n_a: population.n_a(),
        val_q: population.val_q.clone(),
        val_a: population.val_a.clone(),
    };
    let file = File::create(dir.join("population.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &meta)?;
    Ok(())
}

pub fn read_population(dir: &Path) -> Result<(Population, PopulationMeta)> {
    let meta_path = dir.join("population.json");
    let meta: PopulationMeta = serde_json::from_reader(BufReader::new(File::open(&meta_path)?))?;
    let mut qbots = Vec::with_capacity(meta.n_q);
    for i in 0..meta.n_q {
        qbots.push(read_qbot(&dir.join(format!("qbot_{i:02}.ckpt")))?);
    }
    let mut abots = Vec::with_capacity(meta.n_a);
    for i in 0..meta.n_a {
        abots.push(read_abot(&dir.join(format!("abot_{i:02}.ckpt")))?);
    }
    let population = Population {
        qbots,
        abots,
        val_q: meta.val_q.clone(),
        val_a: meta.val_a.clone(),
    };
    Ok((population, meta))
}

/// Checkpoint directories for one run, named so curves can be reassembled:
/// `epoch_NNNNNNNN_{periodic|pre|post}`.
pub fn checkpoint_dir_name(epoch: u64, phase: crate::metrics::CheckpointPhase) -> String {
    format!("epoch_{epoch:08}_{phase}")
}

/// Lists (epoch, phase, path) for every checkpoint under a run's checkpoint
/// root, sorted by epoch with pre before post.
pub fn list_checkpoints(root: &Path) -> Result<Vec<(u64, crate::metrics::CheckpointPhase, PathBuf)>> {
    use crate::metrics::CheckpointPhase;
    let mut out = Vec::new();
    if !root.exists() {
        return Ok(out);
    }
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(rest) = name.strip_prefix("epoch_") else { continue };
        let (epoch_str, phase_str) = match rest.split_once('_') {
            Some(parts) => parts,
            None => continue,
        };
        let Ok(epoch) = epoch_str.parse::<u64>() else { continue };
        let phase = match phase_str {
            "periodic" => CheckpointPhase::Periodic,
            "pre" => CheckpointPhase::PreReplacement,
            "post" => CheckpointPhase::PostReplacement,
            _ => continue,
        };
        out.push((epoch, phase, entry.path()));
    }
    out.sort_by_key(|(epoch, phase, _)| (*epoch, *phase as u8));
    Ok(out)
}
