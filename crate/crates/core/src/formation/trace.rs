use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detection::SuId;
use crate::error::{structural, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Merge,
    Split,
    Adjust,
}

/// One partition transformation: `before` coalitions are replaced by `after`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationEvent {
    #[serde(rename = "type")]
    pub kind: EventKind,
    /// Formation round (one per re-formation period).
    pub round: usize,
    /// Position of the event within the run, counting from 0.
    pub iteration: usize,
    pub before: Vec<Vec<SuId>>,
    pub after: Vec<Vec<SuId>>,
    /// New payoff minus old payoff per affected user; `None` where either side is −∞.
    pub payoff_deltas: BTreeMap<SuId, Option<f64>>,
}

/// Ordered event log of a formation run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FormationTrace {
    pub events: Vec<FormationEvent>,
}

impl FormationTrace {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn merges(&self) -> usize {
        self.count(EventKind::Merge)
    }

    pub fn splits(&self) -> usize {
        self.count(EventKind::Split)
    }

    pub fn adjusts(&self) -> usize {
        self.count(EventKind::Adjust)
    }

    pub(crate) fn push(&mut self, mut event: FormationEvent) {
        event.iteration = self.events.len();
        self.events.push(event);
    }

    pub fn extend(&mut self, other: FormationTrace) {
        for e in other.events {
            self.push(e);
        }
    }

    /// Applies every event to `initial` (member lists) and returns the
    /// resulting groups in canonical order.
    pub fn replay(&self, initial: &[Vec<SuId>]) -> Result<Vec<Vec<SuId>>> {
        let mut groups: Vec<Vec<SuId>> = initial
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.sort();
                g
            })
            .collect();
        for e in &self.events {
            for b in &e.before {
                let pos = groups
                    .iter()
                    .position(|g| g == b)
                    .ok_or_else(|| structural(format!("event {} removes unknown coalition {b:?}", e.iteration)))?;
                groups.swap_remove(pos);
            }
            groups.extend(e.after.iter().cloned());
        }
        groups.sort();
        Ok(groups)
    }

    /// One JSON object per line.
    pub fn write_json_lines(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
