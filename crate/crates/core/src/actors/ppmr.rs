//! The public model repository.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{finish, Outbound};
use crate::bits::{Challenge, Response};
use crate::channel::{ActorId, CostTable, Envelope, ModelOracle, Trace, VirtualTime, WorkMeter};
use crate::wire::{self, InstanceId, Message, ModelResponse, UpdateRequest};
use crate::PublicModel;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PpmrError {
    #[error("model {} is already registered", hex::encode(.0))]
    Duplicate(InstanceId),
    #[error("no model registered for {}", hex::encode(.0))]
    Unknown(InstanceId),
    #[error("model simulation failed: {0}")]
    Simulation(String),
}

/// Append-only store of public models; answers challenges by simulation.
#[derive(Debug, Clone)]
pub struct Ppmr {
    models: BTreeMap<InstanceId, PublicModel>,
    meter: WorkMeter,
    busy_until: VirtualTime,
}

impl Ppmr {
    pub fn new(costs: CostTable) -> Self {
        Self {
            models: BTreeMap::new(),
            meter: WorkMeter::new(costs),
            busy_until: 0,
        }
    }

    pub fn register(&mut self, model: PublicModel) -> Result<(), PpmrError> {
        let id = model.instance_id();
        if self.models.contains_key(&id) {
            return Err(PpmrError::Duplicate(id));
        }
        self.models.insert(id, model);
        Ok(())
    }

    pub fn model(&self, id: &InstanceId) -> Result<&PublicModel, PpmrError> {
        self.models.get(id).ok_or(PpmrError::Unknown(*id))
    }

    pub fn models(&self) -> impl Iterator<Item = &PublicModel> {
        self.models.values()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn meter(&self) -> &WorkMeter {
        &self.meter
    }

    /// Simulates `id`'s model on `challenge`, charging `meter`.
    pub fn challenge(
        &self,
        id: &InstanceId,
        challenge: &Challenge,
        meter: &mut WorkMeter,
    ) -> Result<Response, PpmrError> {
        simulate(&self.models, id, challenge, meter)
    }

    pub fn handle(&mut self, now: VirtualTime, env: &Envelope, trace: &mut Trace) -> Vec<Outbound> {
        let before = self.meter.total_ns();
        let meter = &mut self.meter;
        meter.charge_checksum(env.bytes.len());
        let reply = match wire::decode(&env.bytes) {
            Err(e) => Err(("corrupt", e.to_string())),
            Ok((profile, Message::Relay(r))) => simulate(&self.models, &r.fds_id, &r.challenge, meter)
                .map(|o1| {
                    let fwd = UpdateRequest {
                        ed_id: r.ed_id,
                        device_key: r.device_key,
                        set: r.set,
                        nonce: r.nonce,
                        encrypted_timestamp: r.encrypted_timestamp,
                        o1,
                    };
                    (profile, ActorId::Fds, Message::UpdateRequest(fwd))
                })
                .map_err(|e| ("unknown_model", e.to_string())),
            Ok((profile, Message::ModelQuery(q))) => simulate(&self.models, &q.instance_id, &q.challenge, meter)
                .map(|response| {
                    let resp = ModelResponse {
                        correlation: q.correlation,
                        response,
                    };
                    (profile, env.from, Message::ModelResponse(resp))
                })
                .map_err(|e| ("unknown_model", e.to_string())),
            Ok((_, other)) => Err(("unexpected", other.kind().name().to_string())),
        };
        let out = reply.map(|(profile, to, m)| {
            let bytes = wire::encode(profile, &m);
            meter.charge_checksum(bytes.len());
            (to, m.kind(), bytes)
        });
        let at = finish(&mut self.busy_until, now, before, &self.meter);
        match out {
            Ok((to, kind, bytes)) => {
                trace
                    .push(at, "ppmr", "answer")
                    .with("kind", kind.name())
                    .with("to", to.to_string());
                vec![Outbound { at, to, bytes }]
            }
            Err((cause, detail)) => {
                trace.push(at, "ppmr", "drop").cause(cause).with("detail", detail);
                Vec::new()
            }
        }
    }
}

fn simulate(
    models: &BTreeMap<InstanceId, PublicModel>,
    id: &InstanceId,
    challenge: &Challenge,
    meter: &mut WorkMeter,
) -> Result<Response, PpmrError> {
    let model = models.get(id).ok_or(PpmrError::Unknown(*id))?;
    model
        .simulate(challenge, meter)
        .map_err(|e| PpmrError::Simulation(e.to_string()))
}

impl ModelOracle for Ppmr {
    fn challenge_model(&self, id: &InstanceId, challenge: &Challenge, meter: &mut WorkMeter) -> Option<Response> {
        self.challenge(id, challenge, meter).ok()
    }

    fn model(&self, id: &InstanceId) -> Option<&PublicModel> {
        self.models.get(id)
    }
}
