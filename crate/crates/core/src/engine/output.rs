use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::array::DataArray;

/// Closed set of inference result kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputType {
    LabelList,
    Vector,
    MaskImage,
    Contour,
    Image,
    Custom,
}

impl OutputType {
    pub const ALL: [OutputType; 6] = [
        OutputType::LabelList,
        OutputType::Vector,
        OutputType::MaskImage,
        OutputType::Contour,
        OutputType::Image,
        OutputType::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutputType::LabelList => "label_list",
            OutputType::Vector => "vector",
            OutputType::MaskImage => "mask_image",
            OutputType::Contour => "contour",
            OutputType::Image => "image",
            OutputType::Custom => "custom",
        }
    }
}

impl fmt::Display for OutputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutputType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OutputType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown output type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub label: String,
    pub probability: f64,
}

impl Label {
    pub fn new(label: impl Into<String>, probability: f64) -> Self {
        Self { label: label.into(), probability }
    }
}

/// Typed inference payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    LabelList(Vec<Label>),
    Vector(Vec<f64>),
    MaskImage(DataArray),
    Contour(Vec<[f64; 2]>),
    Image(DataArray),
    Custom(DataArray),
}

impl Output {
    pub fn output_type(&self) -> OutputType {
        match self {
            Output::LabelList(_) => OutputType::LabelList,
            Output::Vector(_) => OutputType::Vector,
            Output::MaskImage(_) => OutputType::MaskImage,
            Output::Contour(_) => OutputType::Contour,
            Output::Image(_) => OutputType::Image,
            Output::Custom(_) => OutputType::Custom,
        }
    }

    pub fn array(&self) -> Option<&DataArray> {
        match self {
            Output::MaskImage(a) | Output::Image(a) | Output::Custom(a) => Some(a),
            _ => None,
        }
    }

    /// Checks the per-type payload invariants.
    pub fn check(&self) -> Result<(), String> {
        match self {
            Output::LabelList(labels) => {
                for l in labels {
                    if !(0.0..=1.0).contains(&l.probability) {
                        return Err(format!(
                            "probability {} for label `{}` outside [0,1]",
                            l.probability, l.label
                        ));
                    }
                }
                Ok(())
            }
            Output::MaskImage(a) => {
                if a.rank() != 2 || !a.dtype().is_integer() {
                    return Err(format!(
                        "mask_image must be a 2-D integer array, got rank {} {}",
                        a.rank(),
                        a.dtype()
                    ));
                }
                Ok(())
            }
            Output::Image(a) => {
                if !(2..=3).contains(&a.rank()) {
                    return Err(format!("image must be 2-D or 3-D, got rank {}", a.rank()));
                }
                Ok(())
            }
            Output::Vector(_) | Output::Contour(_) | Output::Custom(_) => Ok(()),
        }
    }

    /// Ranked label names, most probable first; ties keep emission order.
    pub fn ranked_labels(&self) -> Option<Vec<String>> {
        let Output::LabelList(labels) = self else {
            return None;
        };
        let mut sorted: Vec<&Label> = labels.iter().collect();
        sorted.sort_by(|a, b| b.probability.total_cmp(&a.probability));
        Some(sorted.into_iter().map(|l| l.label.clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for t in OutputType::ALL {
            assert_eq!(t.as_str().parse::<OutputType>(), Ok(t));
            assert_eq!(serde_json::to_value(t).unwrap(), serde_json::Value::from(t.as_str()));
        }
        assert!("hologram".parse::<OutputType>().is_err());
    }

    #[test]
    fn label_probability_range() {
        assert!(Output::LabelList(vec![Label::new("a", 1.0)]).check().is_ok());
        assert!(Output::LabelList(vec![Label::new("a", 1.5)]).check().is_err());
        assert!(Output::LabelList(vec![Label::new("a", f64::NAN)]).check().is_err());
    }

    #[test]
    fn ranked_labels_sorted_stably() {
        let out = Output::LabelList(vec![
            Label::new("a", 0.2),
            Label::new("b", 0.5),
            Label::new("c", 0.2),
        ]);
        assert_eq!(out.ranked_labels().unwrap(), vec!["b", "a", "c"]);
    }
}
