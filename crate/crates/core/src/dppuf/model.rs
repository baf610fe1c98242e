//! Public simulation model and its export file.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic "PPUFMODL" | version u8 | scalar tag u8 | width u16 | layers u16
//! | layer kinds u8 * layers (0 booster, 1 represser) | instance id [16]
//! | simulation cost u64 | hardware cost u64 | table len u32
//! | left table | right table (scalar LE each)
//! | helper len u32 | helper bytes | sha-256 of everything before
//! ```

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{DelayNetwork, DppufError, DppufInstance, LayerKind, Scratch, Topology};
use crate::bits::{Challenge, Response};
use crate::channel::meter::{WorkKind, WorkMeter};
use crate::fuzzy::{FuzzyError, HelperData};
use crate::scalar::DelayScalar;

const MAGIC: &[u8; 8] = b"PPUFMODL";
pub const MODEL_FILE_VERSION: u8 = 1;
/// Minimum simulation-to-hardware cost ratio a model may declare.
pub const MIN_ESG_FACTOR: u64 = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum ModelFileError {
    #[error("not a model file")]
    Magic,
    #[error("unsupported model file version {0}")]
    Version(u8),
    #[error("model stores scalar tag {got:#x}, reader expects {expected:#x}")]
    Scalar { expected: u8, got: u8 },
    #[error("model file truncated")]
    Truncated,
    #[error("model file digest mismatch")]
    Digest,
    #[error("bad layer kind {0}")]
    LayerKind(u8),
    #[error(transparent)]
    Topology(#[from] DppufError),
    #[error(transparent)]
    Helper(#[from] FuzzyError),
    #[error("{0} trailing bytes after model")]
    Trailing(usize),
}

/// What the repository publishes for one device.
#[derive(Debug, Clone, PartialEq)]
pub struct PpufModel<T = f64> {
    instance_id: [u8; 16],
    network: DelayNetwork<T>,
    simulation_cost_per_eval: u64,
    hardware_cost_per_eval: u64,
    helper: Option<HelperData>,
}

impl<T: DelayScalar> PpufModel<T> {
    /// Exports the instance. The declared simulation cost must be at least
    /// [`MIN_ESG_FACTOR`] times the hardware cost.
    pub fn export(
        instance: &DppufInstance<T>,
        simulation_cost_per_eval: u64,
        hardware_cost_per_eval: u64,
    ) -> Result<Self, DppufError> {
        if simulation_cost_per_eval < hardware_cost_per_eval.saturating_mul(MIN_ESG_FACTOR)
            || simulation_cost_per_eval == 0
        {
            return Err(DppufError::GapTooSmall {
                sim: simulation_cost_per_eval,
                hw: hardware_cost_per_eval,
            });
        }
        Ok(Self {
            instance_id: instance.instance_id(),
            network: instance.network().clone(),
            simulation_cost_per_eval,
            hardware_cost_per_eval,
            helper: None,
        })
    }

    pub fn with_helper(mut self, helper: HelperData) -> Self {
        self.helper = Some(helper);
        self
    }

    pub fn instance_id(&self) -> [u8; 16] {
        self.instance_id
    }

    pub fn width(&self) -> usize {
        self.network.topology().width
    }

    pub fn topology(&self) -> &Topology {
        self.network.topology()
    }

    pub fn simulation_cost_per_eval(&self) -> u64 {
        self.simulation_cost_per_eval
    }

    pub fn hardware_cost_per_eval(&self) -> u64 {
        self.hardware_cost_per_eval
    }

    pub fn helper(&self) -> Option<&HelperData> {
        self.helper.as_ref()
    }

    pub(crate) fn network(&self) -> &DelayNetwork<T> {
        &self.network
    }

    /// Simulates one evaluation, charging the declared cost to `meter`.
    pub fn simulate(&self, challenge: &Challenge, meter: &mut WorkMeter) -> Result<Response, DppufError> {
        let r = self.network.evaluate(challenge, &mut Scratch::default())?;
        meter.charge_at(WorkKind::PpufSim, 1, self.simulation_cost_per_eval);
        Ok(r)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let topo = self.network.topology();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(MODEL_FILE_VERSION);
        out.push(T::TAG);
        out.extend_from_slice(&(topo.width as u16).to_le_bytes());
        out.extend_from_slice(&(topo.layers.len() as u16).to_le_bytes());
        out.extend(topo.layers.iter().map(|k| match k {
            LayerKind::Booster => 0u8,
            LayerKind::Represser => 1u8,
        }));
        out.extend_from_slice(&self.instance_id);
        out.extend_from_slice(&self.simulation_cost_per_eval.to_le_bytes());
        out.extend_from_slice(&self.hardware_cost_per_eval.to_le_bytes());
        let (left, right) = self.network.tables();
        out.extend_from_slice(&(left.len() as u32).to_le_bytes());
        for v in left.iter().chain(right) {
            v.write_le(&mut out);
        }
        let helper = self.helper.as_ref().map(HelperData::to_bytes).unwrap_or_default();
        out.extend_from_slice(&(helper.len() as u32).to_le_bytes());
        out.extend_from_slice(&helper);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelFileError> {
        if bytes.len() < MAGIC.len() + 32 || &bytes[..8] != MAGIC {
            return Err(ModelFileError::Magic);
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader { buf: body, at: 8 };
        let version = r.u8()?;
        if version != MODEL_FILE_VERSION {
            return Err(ModelFileError::Version(version));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(ModelFileError::Digest);
        }
        let tag = r.u8()?;
        if tag != T::TAG {
            return Err(ModelFileError::Scalar {
                expected: T::TAG,
                got: tag,
            });
        }
        let width = r.u16()? as usize;
        let nlayers = r.u16()? as usize;
        let layers = r
            .take(nlayers)?
            .iter()
            .map(|&b| match b {
                0 => Ok(LayerKind::Booster),
                1 => Ok(LayerKind::Represser),
                x => Err(ModelFileError::LayerKind(x)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut instance_id = [0u8; 16];
        instance_id.copy_from_slice(r.take(16)?);
        let simulation_cost_per_eval = r.u64()?;
        let hardware_cost_per_eval = r.u64()?;
        let len = r.u32()? as usize;
        let mut table = || -> Result<Vec<T>, ModelFileError> {
            let raw = r.take(len.checked_mul(T::BYTES).ok_or(ModelFileError::Truncated)?)?;
            Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
        };
        let left = table()?;
        let right = table()?;
        let hlen = r.u32()? as usize;
        let helper = if hlen == 0 {
            None
        } else {
            Some(HelperData::from_bytes(r.take(hlen)?)?)
        };
        if r.at != body.len() {
            return Err(ModelFileError::Trailing(body.len() - r.at));
        }
        let network = DelayNetwork::new(Topology { width, layers }, left, right)?;
        Ok(Self {
            instance_id,
            network,
            simulation_cost_per_eval,
            hardware_cost_per_eval,
            helper,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        let end = self.at.checked_add(n).ok_or(ModelFileError::Truncated)?;
        let s = self.buf.get(self.at..end).ok_or(ModelFileError::Truncated)?;
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelFileError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitString;
    use crate::channel::meter::CostTable;
    use crate::dppuf::DppufConfig;
    use crate::fuzzy::FuzzyExtractor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(width: usize, seed: u64) -> DppufInstance<f64> {
        DppufInstance::build(DppufConfig::new(width, seed)).unwrap()
    }

    #[test]
    fn model_matches_instance() {
        let inst = instance(256, 21);
        let model = PpufModel::export(&inst, 1000, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut meter = WorkMeter::new(CostTable::symbolic());
        for _ in 0..1000 {
            let bytes: Vec<u8> = (0..32).map(|_| rng.gen()).collect();
            let c = BitString::from_bytes(256, &bytes).unwrap();
            assert_eq!(model.simulate(&c, &mut meter).unwrap(), inst.evaluate(&c).unwrap());
        }
        assert_eq!(meter.ns(WorkKind::PpufSim), 1000 * 1000);
    }

    #[test]
    fn one_simulation_costs_the_declared_amount() {
        let model = PpufModel::export(&instance(8, 1), 5000, 2).unwrap();
        let mut meter = WorkMeter::new(CostTable::symbolic());
        model.simulate(&BitString::zeros(8), &mut meter).unwrap();
        assert_eq!(meter.total_ns(), 5000);
    }

    #[test]
    fn small_gap_is_rejected() {
        let inst = instance(8, 1);
        assert_eq!(
            PpufModel::export(&inst, 999, 1),
            Err(DppufError::GapTooSmall { sim: 999, hw: 1 })
        );
        assert!(PpufModel::export(&inst, 0, 0).is_err());
    }

    #[test]
    fn file_round_trip_with_helper() {
        let inst = instance(256, 2);
        let resp = inst.evaluate(&BitString::zeros(256)).unwrap();
        let (_, helper) = FuzzyExtractor::default().generate(&resp, 4).unwrap();
        let model = PpufModel::export(&inst, 1000, 1).unwrap().with_helper(helper);
        let bytes = model.to_bytes();
        assert_eq!(PpufModel::<f64>::from_bytes(&bytes).unwrap(), model);
        assert_eq!(model.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = PpufModel::export(&instance(8, 1), 1000, 1).unwrap().to_bytes();
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert_eq!(PpufModel::<f64>::from_bytes(&flipped), Err(ModelFileError::Digest));
        assert_eq!(PpufModel::<f64>::from_bytes(&bytes[..20]), Err(ModelFileError::Magic));
        assert!(matches!(
            PpufModel::<f32>::from_bytes(&bytes),
            Err(ModelFileError::Scalar { .. })
        ));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert_eq!(PpufModel::<f64>::from_bytes(&v2), Err(ModelFileError::Version(2)));
    }
}
