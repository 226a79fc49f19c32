//! DOT and GEXF export of graph snapshots, and readers for both.
//!
//! Node ids are snapshot positions (`n<i>` in DOT, `<i>` in GEXF); the state
//! key is the label. Floats are written in shortest round-trip form so a
//! snapshot survives write-then-read unchanged.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use bmu_lab_core::topology::{GraphSnapshot, SnapshotEdge, SnapshotNode};
use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    if s == "none" {
        Ok(None)
    } else {
        Ok(Some(s.parse()?))
    }
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn write_dot(graph: &GraphSnapshot, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", dot_quote(name));
    for (i, n) in graph.nodes.iter().enumerate() {
        let _ = writeln!(
            out,
            "  n{i} [label={}, value={}, fan_in={}];",
            dot_quote(&n.key),
            n.value,
            n.fan_in
        );
    }
    for e in &graph.edges {
        let _ = writeln!(
            out,
            "  n{} -> n{} [action={}, q_value={}, gate_open={}];",
            e.source,
            e.target,
            opt(e.action),
            opt(e.q_value),
            e.gate_open
        );
    }
    out.push_str("}\n");
    out
}

/// `key=value` pairs inside a DOT attribute list; values may be quoted.
fn dot_attrs(list: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut chars = list.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace() || *c == ',') {
            chars.next();
        }
        if chars.peek().is_none() {
            return Ok(out);
        }
        let key: String = chars.by_ref().take_while(|&c| c != '=').collect();
        let mut value = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            while let Some(c) = chars.next() {
                match c {
                    '\\' => value.extend(chars.next()),
                    '"' => break,
                    c => value.push(c),
                }
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c == ',' {
                    break;
                }
                value.push(c);
                chars.next();
            }
        }
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
}

fn attr<'a>(attrs: &'a [(String, String)], key: &str) -> Result<&'a str> {
    attrs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| anyhow!("missing attribute `{key}`"))
}

fn node_index(id: &str) -> Result<usize> {
    id.trim()
        .strip_prefix('n')
        .and_then(|i| i.parse().ok())
        .ok_or_else(|| anyhow!("bad node id {id:?}"))
}

/// Reads the subset of DOT produced by [`write_dot`].
pub fn read_dot(text: &str) -> Result<GraphSnapshot> {
    let mut graph = GraphSnapshot::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("digraph") || line == "}" {
            continue;
        }
        let parsed = (|| -> Result<()> {
            let body = line.strip_suffix(';').unwrap_or(line);
            let (head, rest) = body.split_once('[').ok_or_else(|| anyhow!("missing attribute list"))?;
            let attrs = dot_attrs(
                rest.strip_suffix(']')
                    .ok_or_else(|| anyhow!("unclosed attribute list"))?,
            )?;
            if let Some((s, t)) = head.split_once("->") {
                graph.edges.push(SnapshotEdge {
                    source: node_index(s)?,
                    target: node_index(t)?,
                    action: parse_opt(attr(&attrs, "action")?)?,
                    q_value: parse_opt(attr(&attrs, "q_value")?)?,
                    gate_open: attr(&attrs, "gate_open")?.parse()?,
                });
            } else {
                let index = node_index(head)?;
                if index != graph.nodes.len() {
                    bail!("node n{index} out of order");
                }
                graph.nodes.push(SnapshotNode {
                    key: attr(&attrs, "label")?.to_string(),
                    value: attr(&attrs, "value")?.parse()?,
                    fan_in: attr(&attrs, "fan_in")?.parse()?,
                });
            }
            Ok(())
        })();
        parsed.with_context(|| format!("DOT line {}: {line}", lineno + 1))?;
    }
    check_edges(&graph)?;
    Ok(graph)
}

pub fn write_gexf(graph: &GraphSnapshot, name: &str) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<gexf xmlns=\"http://gexf.net/1.3\" version=\"1.3\">\n");
    let _ = writeln!(out, "  <meta><description>{}</description></meta>", escape(name));
    out.push_str("  <graph defaultedgetype=\"directed\" mode=\"static\">\n");
    out.push_str("    <attributes class=\"node\">\n");
    out.push_str("      <attribute id=\"value\" title=\"value\" type=\"double\"/>\n");
    out.push_str("      <attribute id=\"fan_in\" title=\"fan_in\" type=\"integer\"/>\n");
    out.push_str("    </attributes>\n");
    out.push_str("    <attributes class=\"edge\">\n");
    out.push_str("      <attribute id=\"action\" title=\"action\" type=\"string\"/>\n");
    out.push_str("      <attribute id=\"q_value\" title=\"q_value\" type=\"string\"/>\n");
    out.push_str("      <attribute id=\"gate_open\" title=\"gate_open\" type=\"boolean\"/>\n");
    out.push_str("    </attributes>\n");
    out.push_str("    <nodes>\n");
    for (i, n) in graph.nodes.iter().enumerate() {
        let _ = writeln!(
            out,
            "      <node id=\"{i}\" label=\"{}\"><attvalues><attvalue for=\"value\" value=\"{}\"/><attvalue for=\"fan_in\" value=\"{}\"/></attvalues></node>",
            escape(&n.key),
            n.value,
            n.fan_in
        );
    }
    out.push_str("    </nodes>\n    <edges>\n");
    for (i, e) in graph.edges.iter().enumerate() {
        let _ = writeln!(
            out,
            "      <edge id=\"{i}\" source=\"{}\" target=\"{}\"><attvalues><attvalue for=\"action\" value=\"{}\"/><attvalue for=\"q_value\" value=\"{}\"/><attvalue for=\"gate_open\" value=\"{}\"/></attvalues></edge>",
            e.source,
            e.target,
            opt(e.action),
            opt(e.q_value),
            e.gate_open
        );
    }
    out.push_str("    </edges>\n  </graph>\n</gexf>\n");
    out
}

fn xml_attrs(tag: &BytesStart<'_>) -> Result<Vec<(String, String)>> {
    tag.attributes()
        .map(|a| {
            let a = a?;
            Ok((
                String::from_utf8(a.key.as_ref().to_vec())?,
                a.unescape_value()?.into_owned(),
            ))
        })
        .collect()
}

enum Open {
    Node(Vec<(String, String)>),
    Edge(Vec<(String, String)>),
}

fn finish(graph: &mut GraphSnapshot, open: Open, values: &[(String, String)]) -> Result<()> {
    match open {
        Open::Node(a) => {
            let index: usize = attr(&a, "id")?.parse()?;
            if index != graph.nodes.len() {
                bail!("GEXF node {index} out of order");
            }
            graph.nodes.push(SnapshotNode {
                key: attr(&a, "label")?.to_string(),
                value: attr(values, "value")?.parse()?,
                fan_in: attr(values, "fan_in")?.parse()?,
            });
        }
        Open::Edge(a) => graph.edges.push(SnapshotEdge {
            source: attr(&a, "source")?.parse()?,
            target: attr(&a, "target")?.parse()?,
            action: parse_opt(attr(values, "action")?)?,
            q_value: parse_opt(attr(values, "q_value")?)?,
            gate_open: attr(values, "gate_open")?.parse()?,
        }),
    }
    Ok(())
}

/// Reads the GEXF produced by [`write_gexf`].
pub fn read_gexf(text: &str) -> Result<GraphSnapshot> {
    let mut reader = Reader::from_str(text);
    let mut graph = GraphSnapshot::default();
    let mut open: Option<Open> = None;
    let mut values = Vec::new();
    loop {
        let event = reader.read_event().context("malformed GEXF")?;
        let empty = matches!(event, Event::Empty(_));
        match event {
            Event::Eof => break,
            Event::Start(tag) | Event::Empty(tag) if matches!(tag.name().as_ref(), b"node" | b"edge") => {
                let attrs = xml_attrs(&tag)?;
                let item = if tag.name().as_ref() == b"node" {
                    Open::Node(attrs)
                } else {
                    Open::Edge(attrs)
                };
                values.clear();
                if empty {
                    finish(&mut graph, item, &values)?;
                } else {
                    open = Some(item);
                }
            }
            Event::Start(tag) | Event::Empty(tag) if tag.name().as_ref() == b"attvalue" => {
                let a = xml_attrs(&tag)?;
                values.push((attr(&a, "for")?.to_string(), attr(&a, "value")?.to_string()));
            }
            Event::End(tag) if matches!(tag.name().as_ref(), b"node" | b"edge") => {
                let item = open.take().ok_or_else(|| anyhow!("unbalanced GEXF element"))?;
                finish(&mut graph, item, &values)?;
            }
            _ => {}
        }
    }
    check_edges(&graph)?;
    Ok(graph)
}

fn check_edges(graph: &GraphSnapshot) -> Result<()> {
    let n = graph.node_count();
    if let Some(e) = graph.edges.iter().find(|e| e.source >= n || e.target >= n) {
        bail!("edge {} -> {} refers to a missing node ({n} nodes)", e.source, e.target);
    }
    Ok(())
}

/// Reads a snapshot from a `.dot` or `.gexf` file, chosen by extension.
pub fn read_path(path: &std::path::Path) -> Result<GraphSnapshot> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("dot") => read_dot(&text),
        Some("gexf") => read_gexf(&text),
        _ => bail!("{}: expected a .dot or .gexf file", path.display()),
    }
    .with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GraphSnapshot {
        GraphSnapshot {
            nodes: vec![
                SnapshotNode {
                    key: "5_5_5_5_".into(),
                    value: 0.1 + 0.2,
                    fan_in: 2,
                },
                SnapshotNode {
                    key: "a\"<b>&".into(),
                    value: -9.0,
                    fan_in: 0,
                },
            ],
            edges: vec![
                SnapshotEdge {
                    source: 0,
                    target: 0,
                    action: Some(1),
                    q_value: Some(-1e-300),
                    gate_open: true,
                },
                SnapshotEdge {
                    source: 1,
                    target: 0,
                    action: None,
                    q_value: None,
                    gate_open: false,
                },
            ],
        }
    }

    #[test]
    fn dot_round_trip() {
        let g = sample();
        assert_eq!(read_dot(&write_dot(&g, "t")).unwrap(), g);
    }

    #[test]
    fn gexf_round_trip() {
        let g = sample();
        assert_eq!(read_gexf(&write_gexf(&g, "t")).unwrap(), g);
    }

    #[test]
    fn empty_graphs() {
        let g = GraphSnapshot::default();
        assert_eq!(read_dot(&write_dot(&g, "e")).unwrap(), g);
        assert_eq!(read_gexf(&write_gexf(&g, "e")).unwrap(), g);
    }

    #[test]
    fn dangling_edge_rejected() {
        let text = "digraph \"x\" {\n  n0 [label=\"a\", value=0, fan_in=0];\n  n0 -> n3 [action=0, q_value=0, gate_open=false];\n}\n";
        let err = read_dot(text).unwrap_err();
        assert!(format!("{err:#}").contains("missing node"), "{err:#}");
    }
}
