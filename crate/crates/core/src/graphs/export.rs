use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{CommunityGraph, EdgeAggregate, GraphError, NodeClass};
use crate::types::{Address, TokenAmount};

fn io(e: impl std::fmt::Display) -> GraphError {
    GraphError::Io(e.to_string())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// GraphML with `node_class` on nodes and `weight` (display units) plus `tx_count` on edges.
pub fn write_graphml<W: Write>(g: &CommunityGraph, decimals: u32, mut out: W) -> Result<(), GraphError> {
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#).map_err(io)?;
    writeln!(out, r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns">"#).map_err(io)?;
    writeln!(out, r#"  <key id="node_class" for="node" attr.name="node_class" attr.type="string"/>"#).map_err(io)?;
    writeln!(out, r#"  <key id="weight" for="edge" attr.name="weight" attr.type="double"/>"#).map_err(io)?;
    writeln!(out, r#"  <key id="tx_count" for="edge" attr.name="tx_count" attr.type="long"/>"#).map_err(io)?;
    writeln!(out, r#"  <graph id="G" edgedefault="directed">"#).map_err(io)?;
    for (addr, class) in &g.nodes {
        writeln!(out, r#"    <node id="{}"><data key="node_class">{}</data></node>"#, addr, xml_escape(class.as_str()))
            .map_err(io)?;
    }
    for ((from, to), agg) in &g.edges {
        writeln!(
            out,
            r#"    <edge source="{}" target="{}"><data key="weight">{}</data><data key="tx_count">{}</data></edge>"#,
            from,
            to,
            agg.total_value.display_units(decimals),
            agg.tx_count
        )
        .map_err(io)?;
    }
    writeln!(out, "  </graph>\n</graphml>").map_err(io)?;
    Ok(())
}

fn dot_color(class: NodeClass) -> &'static str {
    match class {
        NodeClass::InitialMember => "orange",
        NodeClass::LaterMember => "skyblue",
        NodeClass::Contract => "gray",
        NodeClass::Plain => "white",
    }
}

/// DOT digraph; node fill colors hint initial (orange) vs later (sky blue) members.
pub fn write_dot<W: Write>(g: &CommunityGraph, decimals: u32, mut out: W) -> Result<(), GraphError> {
    writeln!(out, "digraph community {{").map_err(io)?;
    for (addr, class) in &g.nodes {
        writeln!(out, "  \"{}\" [node_class=\"{}\", style=filled, fillcolor={}];", addr, class, dot_color(*class))
            .map_err(io)?;
    }
    for ((from, to), agg) in &g.edges {
        writeln!(
            out,
            "  \"{}\" -> \"{}\" [weight=\"{}\", tx_count={}];",
            from,
            to,
            agg.total_value.display_units(decimals),
            agg.tx_count
        )
        .map_err(io)?;
    }
    writeln!(out, "}}").map_err(io)?;
    Ok(())
}

/// Lossless stage artifact: `<prefix>_nodes.csv` and `<prefix>_edges.csv`.
pub fn write_graph_csv(g: &CommunityGraph, dir: &Path, prefix: &str) -> Result<(), GraphError> {
    let mut nodes =
        csv::Writer::from_writer(BufWriter::new(File::create(dir.join(format!("{prefix}_nodes.csv"))).map_err(io)?));
    nodes.write_record(["address", "node_class"]).map_err(io)?;
    for (a, c) in &g.nodes {
        nodes.write_record([a.to_string(), c.to_string()]).map_err(io)?;
    }
    nodes.flush().map_err(io)?;
    let mut edges =
        csv::Writer::from_writer(BufWriter::new(File::create(dir.join(format!("{prefix}_edges.csv"))).map_err(io)?));
    edges.write_record(["from", "to", "total_value", "tx_count", "first_ts", "last_ts"]).map_err(io)?;
    for ((f, t), e) in &g.edges {
        edges
            .write_record([
                f.to_string(),
                t.to_string(),
                e.total_value.to_string(),
                e.tx_count.to_string(),
                e.first_ts.to_string(),
                e.last_ts.to_string(),
            ])
            .map_err(io)?;
    }
    edges.flush().map_err(io)
}

pub fn read_graph_csv(dir: &Path, prefix: &str) -> Result<CommunityGraph, GraphError> {
    let mut g = CommunityGraph::default();
    let nodes_path = dir.join(format!("{prefix}_nodes.csv"));
    let mut nodes = csv::Reader::from_path(&nodes_path).map_err(io)?;
    for rec in nodes.records() {
        let rec = rec.map_err(io)?;
        let addr: Address = rec[0].parse().map_err(io)?;
        let class: NodeClass = rec[1].parse().map_err(io)?;
        g.nodes.insert(addr, class);
    }
    let mut edges = csv::Reader::from_path(dir.join(format!("{prefix}_edges.csv"))).map_err(io)?;
    for rec in edges.records() {
        let rec = rec.map_err(io)?;
        let from: Address = rec[0].parse().map_err(io)?;
        let to: Address = rec[1].parse().map_err(io)?;
        let agg = EdgeAggregate {
            total_value: rec[2].parse::<TokenAmount>().map_err(io)?,
            tx_count: rec[3].parse().map_err(io)?,
            first_ts: rec[4].parse().map_err(io)?,
            last_ts: rec[5].parse().map_err(io)?,
        };
        if !g.nodes.contains_key(&from) || !g.nodes.contains_key(&to) {
            return Err(GraphError::Io(format!("edge {from}->{to} references unknown node")));
        }
        g.edges.insert((from, to), agg);
    }
    Ok(g)
}
