use std::fmt::Write;

use subnav::agent::ShiftEvent;
use subnav::dataset::Episode;
use subnav::navgraph::{EnvGraph, GraphError};

const SIZE: f64 = 640.0;
const MARGIN: f64 = 32.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Projection {
    min: [f64; 2],
    scale: f64,
    height: f64,
}

impl Projection {
    fn new(graph: &EnvGraph) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for n in graph.nodes() {
            for k in 0..2 {
                min[k] = min[k].min(n.position[k]);
                max[k] = max[k].max(n.position[k]);
            }
        }
        if graph.is_empty() {
            min = [0.0; 2];
            max = [1.0; 2];
        }
        let span = (max[0] - min[0]).max(max[1] - min[1]).max(1e-6);
        let scale = (SIZE - 2.0 * MARGIN) / span;
        Projection {
            min,
            scale,
            height: (max[1] - min[1]) * scale + 2.0 * MARGIN,
        }
    }

    /// Top-down view with +y pointing up the page.
    fn xy(&self, p: [f64; 3]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.min[0]) * self.scale,
            self.height - MARGIN - (p[1] - self.min[1]) * self.scale,
        )
    }
}

fn polyline(
    out: &mut String,
    graph: &EnvGraph,
    proj: &Projection,
    id: &str,
    ids: &[String],
    style: &str,
) -> Result<(), GraphError> {
    let mut points = Vec::with_capacity(ids.len());
    for v in ids {
        let (x, y) = proj.xy(graph.position(graph.idx(v)?));
        points.push(format!("{x:.2},{y:.2}"));
    }
    let _ = writeln!(
        out,
        r#"<polyline id="{id}" points="{}" fill="none" {style}/>"#,
        points.join(" ")
    );
    Ok(())
}

/// Top-down SVG of the graph with the ground-truth path, the agent
/// trajectory, sub-path end points and the steps where the agent shifted.
pub fn plot_trajectory(
    graph: &EnvGraph,
    episode: &Episode,
    trajectory: &[String],
    shift_events: &[ShiftEvent],
) -> Result<String, GraphError> {
    let proj = Projection::new(graph);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE:.0}" height="{h:.0}" viewBox="0 0 {SIZE:.0} {h:.0}">"#,
        h = proj.height
    );
    let _ = writeln!(out, "<title>{}</title>", escape(&episode.path_id));
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let _ = writeln!(out, r##"<g id="edges" stroke="#bbbbbb" stroke-width="1">"##);
    for (a, b, _) in graph.edges() {
        let (x1, y1) = proj.xy(graph.position(graph.idx(a)?));
        let (x2, y2) = proj.xy(graph.position(graph.idx(b)?));
        let _ = writeln!(
            out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#
        );
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r##"<g id="nodes" fill="#666666">"##);
    for n in graph.nodes() {
        let (x, y) = proj.xy(n.position);
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3"><title>{}</title></circle>"#,
            escape(&n.id)
        );
    }
    let _ = writeln!(out, "</g>");

    polyline(
        &mut out,
        graph,
        &proj,
        "reference",
        &episode.path,
        r##"stroke="#2ca02c" stroke-width="6" stroke-opacity="0.5""##,
    )?;
    polyline(
        &mut out,
        graph,
        &proj,
        "trajectory",
        trajectory,
        r##"stroke="#1f77b4" stroke-width="2" stroke-dasharray="6 3""##,
    )?;

    let _ = writeln!(out, r##"<g id="boundaries" fill="none" stroke="#2ca02c" stroke-width="2">"##);
    for (k, sp) in episode.sub_paths.iter().enumerate() {
        let (x, y) = proj.xy(graph.position(graph.idx(&episode.path[sp.end_idx])?));
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10"><title>sub-path {} end</title></rect>"#,
            x - 5.0,
            y - 5.0,
            k + 1
        );
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r##"<g id="shifts" fill="#d62728">"##);
    for e in shift_events.iter().filter(|e| e.advanced) {
        let (x, y) = proj.xy(graph.position(graph.idx(&e.viewpoint)?));
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="5"><title>step {} shift from sub-instruction {} (p = {:.3})</title></circle>"#,
            e.step,
            e.sub_idx + 1,
            e.p_shift
        );
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use subnav::agent::{toy_worlds, ToyWorldConfig};

    fn points(svg: &str, id: &str) -> String {
        let doc = roxmltree::Document::parse(svg).unwrap();
        let node = doc
            .descendants()
            .find(|n| n.attribute("id") == Some(id))
            .unwrap();
        node.attribute("points").unwrap().to_string()
    }

    #[test]
    fn replayed_path_overlays_the_reference() {
        let worlds = toy_worlds(&ToyWorldConfig::default(), 1, 3).unwrap();
        let w = &worlds[0];
        let ep = &w.episodes[0];
        let svg = plot_trajectory(&w.graph, ep, &ep.path, &[]).unwrap();
        assert_eq!(points(&svg, "reference"), points(&svg, "trajectory"));
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let shifts = doc
            .descendants()
            .find(|n| n.attribute("id") == Some("shifts"))
            .unwrap();
        assert_eq!(shifts.children().filter(|n| n.is_element()).count(), 0);
        let boxes = doc
            .descendants()
            .find(|n| n.attribute("id") == Some("boundaries"))
            .unwrap();
        assert_eq!(
            boxes.children().filter(|n| n.is_element()).count(),
            ep.sub_paths.len()
        );
    }

    #[test]
    fn unknown_viewpoint_is_an_error() {
        let worlds = toy_worlds(&ToyWorldConfig::default(), 1, 3).unwrap();
        let w = &worlds[0];
        let ep = &w.episodes[0];
        assert!(plot_trajectory(&w.graph, ep, &["nowhere".to_string()], &[]).is_err());
    }

    #[test]
    fn titles_are_escaped() {
        assert_eq!(escape(r#"<a & "b">"#), "&lt;a &amp; &quot;b&quot;&gt;");
    }
}
