//! Synthetic quadrature records under the normal linear channel model.
//!
//! Bob's value is `x_B = t * (sqrt(k) * x_A0) + z` with `t = sqrt(eta T)`.
//! Alice keeps the unscaled `x_A0`, so a fault `k > 1` is invisible to her
//! records. Intercept-resend contamination adds input-referred Gaussian noise
//! of variance `2 u N0`, folded into `z` together with the channel excess
//! noise, shot noise and electronic noise.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par;
use crate::params::{ChannelParams, FaultAttackScenario, SystemParams};

/// Samples per independently seeded RNG stream.
pub const CHUNK_LEN: usize = 1 << 16;

/// Identifier recorded in sample metadata.
pub const RNG_ALGORITHM: &str =
    "ChaCha8Rng(seed_from_u64, stream = chunk index, 65536 samples/chunk)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePair {
    /// What Alice believes she sent.
    pub x_alice: f64,
    /// Bob's homodyne outcome.
    pub x_bob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Snu,
    Voltage,
}

/// Provenance of a simulated [`SampleSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub units: Units,
    pub seed: u64,
    pub rng: String,
    pub system: SystemParams,
    pub channel: ChannelParams,
    pub scenario: FaultAttackScenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pairs: Vec<QuadraturePair>,
    units: Units,
    meta: Option<SampleMeta>,
}

impl SampleSet {
    /// Wrap externally supplied pairs. Fails on an empty set or non-finite values.
    pub fn new(pairs: Vec<QuadraturePair>, units: Units) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if pairs
            .iter()
            .any(|p| !p.x_alice.is_finite() || !p.x_bob.is_finite())
        {
            return Err(Error::Format("non-finite quadrature value".into()));
        }
        Ok(Self {
            pairs,
            units,
            meta: None,
        })
    }

    pub fn pairs(&self) -> &[QuadraturePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn meta(&self) -> Option<&SampleMeta> {
        self.meta.as_ref()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv_to(BufWriter::new(file))
            .map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x_alice", "x_bob"])?;
        for p in &self.pairs {
            wtr.write_record([p.x_alice.to_string(), p.x_bob.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read a `x_alice,x_bob` CSV. If a sidecar (see [`meta_path`]) exists its
    /// metadata and units are attached.
    pub fn read_csv(path: impl AsRef<Path>, units: Units) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut rdr = csv::Reader::from_reader(BufReader::new(file));
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.len() != 2 || &headers[0] != "x_alice" || &headers[1] != "x_bob" {
            return Err(Error::Format(format!(
                "{}: expected header `x_alice,x_bob`, found `{}`",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut pairs = Vec::new();
        for rec in rdr.deserialize::<QuadraturePair>() {
            pairs.push(rec.map_err(csv_err)?);
        }
        let mut set = Self::new(pairs, units)?;
        let sidecar = meta_path(path);
        if sidecar.exists() {
            let meta = read_meta(&sidecar)?;
            set.units = meta.units;
            set.meta = Some(meta);
        }
        Ok(set)
    }

    /// Write the CSV plus, when metadata is present, its TOML sidecar.
    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.write_csv(path)?;
        if let Some(meta) = &self.meta {
            write_meta(&meta_path(path), meta)?;
        }
        Ok(())
    }
}

/// Sidecar path for a sample CSV: `<path>.meta.toml`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta.toml");
    PathBuf::from(s)
}

fn write_meta(path: &Path, meta: &SampleMeta) -> Result<()> {
    let text = toml::to_string(meta).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_meta(path: &Path) -> Result<SampleMeta> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Seeded RNG for chunk `chunk` of a run seeded with `seed`.
pub(crate) fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Fill `count` values chunk by chunk, each chunk from its own RNG stream, so
/// the output does not depend on how chunks are scheduled.
pub(crate) fn generate_chunked<T, F>(count: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync + Send,
{
    let n_chunks = count.div_ceil(CHUNK_LEN);
    let chunks = par::map_indexed(n_chunks, |c| {
        let len = CHUNK_LEN.min(count - c * CHUNK_LEN);
        let mut rng = chunk_rng(seed, c);
        (0..len).map(|_| f(&mut rng)).collect::<Vec<T>>()
    });
    let mut out = Vec::with_capacity(count);
    for c in chunks {
        out.extend(c);
    }
    out
}

/// Composite noise variance at Bob, in voltage-squared units:
/// `eta T (xi + 2 u N0) + N0 + V_el`.
pub fn bob_noise_variance(
    sys: &SystemParams,
    ch: &ChannelParams,
    scen: &FaultAttackScenario,
) -> f64 {
    sys.eta * ch.t_trans * (ch.xi(sys.n0) + 2.0 * scen.u * sys.n0) + sys.n0 + sys.v_el()
}

/// Draw `count` correlated (Alice, Bob) pairs.
pub fn simulate_channel(
    sys: &SystemParams,
    ch: &ChannelParams,
    scen: &FaultAttackScenario,
    count: usize,
    seed: u64,
) -> Result<SampleSet> {
    if count < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: count,
        });
    }
    sys.validate()?;
    ch.validate()?;
    scen.validate()?;

    let sd_alice = (sys.v_a0 * sys.n0).sqrt();
    let gain = (sys.eta * ch.t_trans * scen.k).sqrt();
    let sd_noise = bob_noise_variance(sys, ch, scen).sqrt();
    if !(sd_alice.is_finite() && gain.is_finite() && sd_noise.is_finite()) {
        return Err(invalid("params", f64::NAN, "non-finite channel model"));
    }

    let pairs = generate_chunked(count, seed, |rng| {
        let a: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        let x_alice = sd_alice * a;
        QuadraturePair {
            x_alice,
            x_bob: gain * x_alice + sd_noise * z,
        }
    });

    let units = if sys.n0 == 1.0 {
        Units::Snu
    } else {
        Units::Voltage
    };
    Ok(SampleSet {
        pairs,
        units,
        meta: Some(SampleMeta {
            units,
            seed,
            rng: RNG_ALGORITHM.to_string(),
            system: *sys,
            channel: *ch,
            scenario: *scen,
        }),
    })
}

/// Uniform random partition into an estimation block of `m` pairs and a key
/// block of the rest. Both blocks keep the original order.
pub fn split_estimation_key(
    set: &SampleSet,
    m: usize,
    seed: u64,
) -> Result<(SampleSet, SampleSet)> {
    let n = set.len();
    if m == 0 || m >= n {
        return Err(invalid("m", m as f64, "must satisfy 0 < m < set size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; n];
    for i in index::sample(&mut rng, n, m) {
        chosen[i] = true;
    }
    let mut est = Vec::with_capacity(m);
    let mut key = Vec::with_capacity(n - m);
    for (p, is_est) in set.pairs.iter().zip(&chosen) {
        if *is_est {
            est.push(*p);
        } else {
            key.push(*p);
        }
    }
    let make = |pairs| SampleSet {
        pairs,
        units: set.units,
        meta: set.meta.clone(),
    };
    Ok((make(est), make(key)))
}
