use serde::{Deserialize, Serialize};

use super::svg::Svg;
use super::variant::concept_column;
use crate::pu_concepts::ConceptModel;
use crate::survival::CoxFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    fn of(v: f64) -> Sign {
        if v < 0.0 {
            Sign::Negative
        } else {
            Sign::Positive
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyNode {
    pub id: String,
    /// 1 = raw feature, 2 = concept, 3 = model.
    pub column: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyEdge {
    pub source: String,
    pub source_column: u8,
    pub target: String,
    pub target_column: u8,
    /// Coefficient magnitude (1 for anchor edges).
    pub weight: f64,
    pub sign: Sign,
    pub is_anchor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyGraph {
    pub nodes: Vec<SankeyNode>,
    pub edges: Vec<SankeyEdge>,
}

fn add_node(nodes: &mut Vec<SankeyNode>, id: &str, column: u8) {
    if !nodes.iter().any(|n| n.id == id && n.column == column) {
        nodes.push(SankeyNode {
            id: id.to_string(),
            column,
        });
    }
}

/// Flows from raw features through concepts into the risk model. Concepts
/// appear when their column carries a nonzero Cox coefficient; each gets its
/// anchors plus its `top_k` largest classifier weights. Raw features used
/// directly by the model flow straight into it.
pub fn export_sankey(concepts: &[ConceptModel], fit: &CoxFit, model_name: &str, top_k: usize) -> SankeyGraph {
    let mut nodes: Vec<SankeyNode> = Vec::new();
    let mut edges = Vec::new();
    add_node(&mut nodes, model_name, 3);
    for (name, &b) in fit.feature_names.iter().zip(&fit.beta) {
        if b == 0.0 {
            continue;
        }
        match concepts.iter().find(|m| concept_column(&m.spec.concept_name) == *name) {
            Some(m) => {
                add_node(&mut nodes, &m.spec.concept_name, 2);
                for a in &m.spec.anchor_columns {
                    add_node(&mut nodes, a, 1);
                    edges.push(SankeyEdge {
                        source: a.clone(),
                        source_column: 1,
                        target: m.spec.concept_name.clone(),
                        target_column: 2,
                        weight: 1.0,
                        sign: Sign::Positive,
                        is_anchor: true,
                    });
                }
                let mut idx: Vec<usize> = (0..m.weights.len()).filter(|&j| m.weights[j] != 0.0).collect();
                idx.sort_by(|&a, &b| m.weights[b].abs().total_cmp(&m.weights[a].abs()).then(a.cmp(&b)));
                for &j in idx.iter().take(top_k) {
                    add_node(&mut nodes, &m.feature_names[j], 1);
                    edges.push(SankeyEdge {
                        source: m.feature_names[j].clone(),
                        source_column: 1,
                        target: m.spec.concept_name.clone(),
                        target_column: 2,
                        weight: m.weights[j].abs(),
                        sign: Sign::of(m.weights[j]),
                        is_anchor: false,
                    });
                }
                edges.push(SankeyEdge {
                    source: m.spec.concept_name.clone(),
                    source_column: 2,
                    target: model_name.to_string(),
                    target_column: 3,
                    weight: b.abs(),
                    sign: Sign::of(b),
                    is_anchor: false,
                });
            }
            None => {
                add_node(&mut nodes, name, 1);
                edges.push(SankeyEdge {
                    source: name.clone(),
                    source_column: 1,
                    target: model_name.to_string(),
                    target_column: 3,
                    weight: b.abs(),
                    sign: Sign::of(b),
                    is_anchor: false,
                });
            }
        }
    }
    nodes.sort_by(|a, b| a.column.cmp(&b.column));
    SankeyGraph { nodes, edges }
}

impl SankeyGraph {
    /// Three-column static rendering: thickness follows weight, blue for
    /// positive, red for negative, black for anchors.
    pub fn to_svg(&self) -> String {
        let per_col = |c: u8| self.nodes.iter().filter(|n| n.column == c).count();
        let rows = (1..=3).map(per_col).max().unwrap_or(1).max(1);
        let height = 60.0 + 22.0 * rows as f64;
        let xs = [0.0, 20.0, 420.0, 820.0];
        let pos = |id: &str, column: u8| -> (f64, f64) {
            let k = self
                .nodes
                .iter()
                .filter(|n| n.column == column)
                .position(|n| n.id == id)
                .unwrap_or(0);
            let n = per_col(column).max(1) as f64;
            let y = 30.0 + (height - 60.0) * (k as f64 + 0.5) / n;
            (xs[column as usize], y)
        };
        let max_w = self.edges.iter().filter(|e| !e.is_anchor).fold(1e-12f64, |m, e| m.max(e.weight));
        let mut svg = Svg::new(1100.0, height);
        for e in &self.edges {
            let (x1, y1) = pos(&e.source, e.source_column);
            let (x2, y2) = pos(&e.target, e.target_column);
            let x1 = x1 + 8.0;
            let width = if e.is_anchor { 3.0 } else { 1.0 + 11.0 * e.weight / max_w };
            let color = match (e.is_anchor, e.sign) {
                (true, _) => "black",
                (false, Sign::Positive) => "#1f77b4",
                (false, Sign::Negative) => "#d62728",
            };
            let mid = (x1 + x2) / 2.0;
            svg.raw(&format!(
                r#"<path d="M{x1:.2},{y1:.2} C{mid:.2},{y1:.2} {mid:.2},{y2:.2} {x2:.2},{y2:.2}" fill="none" stroke="{color}" stroke-opacity="0.6" stroke-width="{width:.2}"/>"#
            ));
        }
        for n in &self.nodes {
            let (x, y) = pos(&n.id, n.column);
            svg.rect(x, y - 8.0, 8.0, 16.0, "#444444");
            svg.text(x + 12.0, y + 4.0, "start", 11.0, &n.id);
        }
        svg.finish()
    }
}
