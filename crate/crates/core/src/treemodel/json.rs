use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Ensemble, Node, Tree};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc<T> {
    base_score: T,
    feature_names: Vec<String>,
    trees: Vec<TreeDoc<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDoc<T> {
    nodes: Vec<NodeDoc<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeDoc<T> {
    Leaf(LeafDoc<T>),
    Split(SplitDoc<T>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeafDoc<T> {
    leaf: T,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitDoc<T> {
    feature: usize,
    threshold: T,
    left: usize,
    right: usize,
    default_left: bool,
}

/// Serializes `model` as a pretty-printed JSON document.
pub fn save_model<T: Scalar + Serialize>(model: &Ensemble<T>) -> Result<String> {
    let doc = ModelDoc {
        base_score: model.base_score,
        feature_names: model.feature_names.clone(),
        trees: model
            .trees
            .iter()
            .map(|tree| TreeDoc {
                nodes: tree
                    .nodes
                    .iter()
                    .map(|node| match *node {
                        Node::Leaf { value } => NodeDoc::Leaf(LeafDoc { leaf: value }),
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                            default_left,
                        } => NodeDoc::Split(SplitDoc {
                            feature,
                            threshold,
                            left,
                            right,
                            default_left,
                        }),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

/// Parses and validates a model document. Unknown fields and malformed
/// tree structure (cycles, dangling ids) are rejected.
pub fn load_model<T: Scalar + DeserializeOwned>(text: &str) -> Result<Ensemble<T>> {
    let doc: ModelDoc<T> = serde_json::from_str(text)?;
    let k = doc.feature_names.len();
    let trees = doc
        .trees
        .into_iter()
        .map(|tree| {
            let nodes = tree
                .nodes
                .into_iter()
                .map(|node| match node {
                    NodeDoc::Leaf(l) => Node::Leaf { value: l.leaf },
                    NodeDoc::Split(s) => Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left: s.left,
                        right: s.right,
                        default_left: s.default_left,
                    },
                })
                .collect();
            Tree::new(nodes, k)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(doc.base_score, doc.feature_names, trees)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    const STUMP: &str = r#"{
        "base_score": 0.0,
        "feature_names": ["x0"],
        "trees": [{"nodes": [
            {"feature": 0, "threshold": 0.0, "left": 1, "right": 2, "default_left": true},
            {"leaf": -1.0},
            {"leaf": 1.0}
        ]}]
    }"#;

    #[test]
    fn hand_written_stump_predicts_plus_minus_one() {
        let m: Ensemble<f64> = load_model(STUMP).unwrap();
        assert_eq!(m.predict(&[Some(-0.5)]).unwrap(), -1.0);
        assert_eq!(m.predict(&[Some(0.0)]).unwrap(), -1.0);
        assert_eq!(m.predict(&[Some(0.5)]).unwrap(), 1.0);
        assert_eq!(m.predict(&[None]).unwrap(), -1.0);
    }

    #[test]
    fn self_referencing_child_is_a_structure_error() {
        let doc = STUMP.replace("\"left\": 1", "\"left\": 0");
        assert!(matches!(load_model::<f64>(&doc), Err(Error::Structure(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let top = STUMP.replacen("\"base_score\"", "\"extra\": 1, \"base_score\"", 1);
        assert!(load_model::<f64>(&top).is_err());
        let node = STUMP.replace("{\"leaf\": 1.0}", "{\"leaf\": 1.0, \"gain\": 3}");
        assert!(load_model::<f64>(&node).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let m: Ensemble<f64> = load_model(STUMP).unwrap();
        let text = save_model(&m).unwrap();
        let back: Ensemble<f64> = load_model(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(save_model(&back).unwrap(), text);
    }
}
