//! Structured trace records, rendered as JSON lines.

use serde::Serialize;
use serde_json::{Map, Value};

use super::clock::VirtualTime;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: VirtualTime,
    pub actor: String,
    pub event: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub detail: Map<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: VirtualTime, actor: impl Into<String>, event: &str) -> &mut TraceRecord {
        self.records.push(TraceRecord {
            t,
            actor: actor.into(),
            event: event.to_string(),
            cause: None,
            detail: Map::new(),
        });
        self.records.last_mut().expect("just pushed")
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn find(&self, actor_prefix: &str, event: &str) -> impl Iterator<Item = &TraceRecord> {
        let (a, e) = (actor_prefix.to_string(), event.to_string());
        self.records
            .iter()
            .filter(move |r| r.actor.starts_with(&a) && r.event == e)
    }

    /// One JSON object per line; keys in each detail map are sorted.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            s.push('\n');
        }
        s
    }
}

impl TraceRecord {
    pub fn cause(&mut self, c: impl Into<String>) -> &mut Self {
        self.cause = Some(c.into());
        self
    }

    pub fn with(&mut self, key: &str, v: impl Into<Value>) -> &mut Self {
        self.detail.insert(key.to_string(), v.into());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_sorted_json_lines() {
        let mut t = Trace::new();
        t.push(5, "ed0", "reject").cause("late").with("z", 1).with("a", "x");
        t.push(6, "fds", "idle");
        assert_eq!(
            t.to_jsonl(),
            "{\"t\":5,\"actor\":\"ed0\",\"event\":\"reject\",\"cause\":\"late\",\"detail\":{\"a\":\"x\",\"z\":1}}\n\
             {\"t\":6,\"actor\":\"fds\",\"event\":\"idle\"}\n"
        );
        assert_eq!(t.find("ed", "reject").count(), 1);
    }
}
