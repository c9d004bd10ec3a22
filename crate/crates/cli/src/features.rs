use duet_core::format::AnnotationContainer;
use duet_core::stgcn::StgcnModel;
use duet_core::taxonomy::ActivityLabel;
use ndarray::Array2;

use crate::failure::Failure;

/// Extracted features with the sample name, activity label and split of each
/// row. CSV columns: `name,label,split,f0,f1,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub labels: Vec<ActivityLabel>,
    pub test: Vec<bool>,
    pub values: Array2<f64>,
}

impl FeatureTable {
    /// Train rows first, then test rows, each in split-list order.
    pub fn extract(model: &StgcnModel, container: &AnnotationContainer) -> Result<Self, Failure> {
        let split = &container.split;
        let names: Vec<String> = split.xsub_train.iter().chain(&split.xsub_value).cloned().collect();
        let values = model.features_for(container, &names)?;
        let labels = container.records(&names)?.iter().map(|r| r.label).collect();
        let test = (0..names.len()).map(|i| i >= split.xsub_train.len()).collect();
        Ok(FeatureTable {
            names,
            labels,
            test,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,label,split");
        for i in 0..self.width() {
            out.push_str(&format!(",f{i}"));
        }
        out.push('\n');
        for (i, row) in self.values.rows().into_iter().enumerate() {
            let split = if self.test[i] { "test" } else { "train" };
            out.push_str(&format!("{},{},{split}", self.names[i], self.labels[i].index()));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, Failure> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Failure::contract("features CSV is empty"))?;
        let columns: Vec<&str> = header.split(',').collect();
        if columns.len() < 4 || columns[..3] != ["name", "label", "split"] {
            return Err(Failure::contract(
                "features CSV header must start with name,label,split",
            ));
        }
        let width = columns.len() - 3;
        let (mut names, mut labels, mut test, mut flat) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (row, line) in lines.enumerate() {
            let bad = |what: &str| Failure::contract(format!("features row {}: bad {what}", row + 1));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width + 3 {
                return Err(bad("column count"));
            }
            names.push(fields[0].to_string());
            let label: usize = fields[1].parse().map_err(|_| bad("label"))?;
            labels.push(ActivityLabel::new(label).map_err(|_| bad("label"))?);
            test.push(match fields[2] {
                "train" => false,
                "test" => true,
                _ => return Err(bad("split")),
            });
            for f in &fields[3..] {
                flat.push(f.parse::<f64>().map_err(|_| bad("value"))?);
            }
        }
        let values = Array2::from_shape_vec((names.len(), width), flat).expect("row lengths checked");
        Ok(FeatureTable {
            names,
            labels,
            test,
            values,
        })
    }
}
