//! JSON-lines trace export: a header line, one line per round, and a final
//! outputs line. Field order is fixed by the struct definitions below.

use std::io::{self, Write};

use serde::Serialize;

use super::{AbortInfo, DrawRecord, ExecutionTrace, Message, OutputVector};
use crate::topology::AgentId;

#[derive(Serialize)]
struct Header<'a> {
    record: &'static str,
    topology: String,
    nodes: usize,
    edges: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    layout: Option<&'a [AgentId]>,
}

#[derive(Serialize)]
struct RoundLine<'a> {
    record: &'static str,
    round: u32,
    messages: &'a [Message],
    draws: Vec<&'a DrawRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshots: Option<&'a std::collections::BTreeMap<AgentId, serde_json::Value>>,
}

#[derive(Serialize)]
struct Final<'a> {
    record: &'static str,
    final_round: u32,
    message_count: u64,
    outputs: &'a OutputVector,
    aborted: &'a Option<AbortInfo>,
}

pub fn write_jsonl<W: Write>(trace: &ExecutionTrace, mut w: W) -> io::Result<()> {
    let t = &trace.topology;
    let header = Header {
        record: "topology",
        topology: t.to_string(),
        nodes: t.node_count(),
        edges: t.edge_count(),
        layout: t.layout(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;

    let mut rounds: Vec<u32> = trace.rounds.iter().map(|r| r.round).collect();
    rounds.extend(trace.draws.iter().map(|d| d.round));
    rounds.sort_unstable();
    rounds.dedup();
    let empty: Vec<Message> = Vec::new();
    for round in rounds {
        let rec = trace.rounds.iter().find(|r| r.round == round);
        let line = RoundLine {
            record: "round",
            round,
            messages: rec.map(|r| r.messages.as_slice()).unwrap_or(&empty),
            draws: trace.draws.iter().filter(|d| d.round == round).collect(),
            snapshots: rec.and_then(|r| r.snapshots.as_ref()),
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }

    let fin = Final {
        record: "outputs",
        final_round: trace.final_round,
        message_count: trace.message_count,
        outputs: &trace.outputs,
        aborted: &trace.aborted,
    };
    serde_json::to_writer(&mut w, &fin)?;
    writeln!(w)
}

pub fn to_jsonl_string(trace: &ExecutionTrace) -> String {
    let mut buf = Vec::new();
    write_jsonl(trace, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
